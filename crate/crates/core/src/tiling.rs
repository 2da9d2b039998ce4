//! Følner packings and tilings, fractional covers, packing search, and
//! tiling completion by bipartite matching.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::folner::{function_defect, quality_with_mask, FolnerError, FolnerFunction};
use crate::graph::{vertex_boundary, Graph, GraphError, VertexSet, Window};
use crate::hierarchy::{witness_from_components, EdgeBound, PropAWitness};
use crate::ratio::{self, Ratio};

pub const TILING_SCHEMA: &str = "tiling/v1";
pub const DISTRIBUTION_SCHEMA: &str = "tiling-distribution/v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TilingError {
    #[error("empty family")]
    EmptyFamily,
    #[error("torus side {n} is not divisible by block side {k}")]
    NotDivisible { n: usize, k: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("enumeration budget of {0} steps exhausted")]
    Budget(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<FolnerError> for TilingError {
    fn from(e: FolnerError) -> Self {
        match e {
            FolnerError::BudgetExceeded { budget } => TilingError::Budget(budget),
            FolnerError::Graph(g) => TilingError::Graph(g),
            other => TilingError::Invalid(other.to_string()),
        }
    }
}

fn quality(g: &Graph, set: &VertexSet) -> Ratio {
    quality_with_mask(g, set, &set.mask(g.n()))
}

/// Disjoint ε-Følner sets of diameter at most `r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packing {
    pub sets: Vec<VertexSet>,
    #[serde(with = "ratio::serde_ratio")]
    pub eps: Ratio,
    pub r: usize,
}

impl Packing {
    pub fn covered(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for s in &self.sets {
            for &v in s.iter() {
                mask[v] = true;
            }
        }
        mask
    }

    pub fn validate(&self, g: &Graph) -> Result<(), String> {
        let mut seen = vec![false; g.n()];
        for s in &self.sets {
            s.validate(g.n()).map_err(|e| e.to_string())?;
            if s.is_empty() {
                return Err("empty element".into());
            }
            for &v in s.iter() {
                if seen[v] {
                    return Err(format!("vertex {v} covered twice"));
                }
                seen[v] = true;
            }
            if quality(g, s) >= self.eps {
                return Err(format!("{s:?} is not ε-Følner"));
            }
            if g.set_diameter(s).is_none_or(|d| d > self.r) {
                return Err(format!("{s:?} has diameter above {}", self.r));
            }
        }
        Ok(())
    }
}

/// A packing covering every vertex, with the quality and diameter bounds it
/// was checked against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tiling {
    pub schema: String,
    pub n: usize,
    pub tiles: Vec<VertexSet>,
    #[serde(with = "ratio::serde_ratio")]
    pub quality_bound: Ratio,
    pub diameter_bound: usize,
}

impl Tiling {
    /// Partition of all vertices with every tile connected-diameter and
    /// quality at most the recorded bounds.
    pub fn validate(&self, g: &Graph) -> Result<(), String> {
        if self.schema != TILING_SCHEMA {
            return Err(format!("unknown schema {}", self.schema));
        }
        if self.n != g.n() {
            return Err("vertex count mismatch".into());
        }
        let mut seen = vec![false; g.n()];
        for t in &self.tiles {
            t.validate(g.n()).map_err(|e| e.to_string())?;
            if t.is_empty() {
                return Err("empty tile".into());
            }
            for &v in t.iter() {
                if seen[v] {
                    return Err(format!("vertex {v} in two tiles"));
                }
                seen[v] = true;
            }
            if quality(g, t) > self.quality_bound {
                return Err(format!("tile {t:?} exceeds the quality bound"));
            }
            if g.set_diameter(t).is_none_or(|d| d > self.diameter_bound) {
                return Err(format!("tile {t:?} exceeds the diameter bound"));
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(format!("vertex {v} uncovered"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub sets: Vec<VertexSet>,
    #[serde(with = "ratio::serde_ratio")]
    pub prob: Ratio,
}

/// Finitely many packings (usually tilings) with probabilities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingDistribution {
    pub schema: String,
    pub n: usize,
    pub outcomes: Vec<Outcome>,
}

impl TilingDistribution {
    /// Merges identical outcomes; each outcome's sets are sorted.
    pub fn new(n: usize, outcomes: impl IntoIterator<Item = (Vec<VertexSet>, Ratio)>) -> Self {
        let mut merged: BTreeMap<Vec<VertexSet>, Ratio> = BTreeMap::new();
        for (mut sets, p) in outcomes {
            sets.sort();
            *merged.entry(sets).or_insert_with(ratio::zero) += p;
        }
        TilingDistribution {
            schema: DISTRIBUTION_SCHEMA.into(),
            n,
            outcomes: merged
                .into_iter()
                .map(|(sets, prob)| Outcome { sets, prob })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schema != DISTRIBUTION_SCHEMA {
            return Err(format!("unknown schema {}", self.schema));
        }
        let mut total = ratio::zero();
        for o in &self.outcomes {
            if o.prob <= ratio::zero() {
                return Err("non-positive probability".into());
            }
            total += &o.prob;
            let mut seen = vec![false; self.n];
            for s in &o.sets {
                s.validate(self.n).map_err(|e| e.to_string())?;
                for &v in s.iter() {
                    if seen[v] {
                        return Err(format!("vertex {v} covered twice in one outcome"));
                    }
                    seen[v] = true;
                }
            }
        }
        if total != ratio::one() {
            return Err(format!("probabilities sum to {}", ratio::fmt_ratio(&total)));
        }
        Ok(())
    }
}

/// `F(H)` on finitely many sets, and the uncovered mass `c_x`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractionalCover {
    pub n: usize,
    pub weights: Vec<(VertexSet, String)>,
    #[serde(with = "ratio::serde_ratio_vec")]
    pub c: Vec<Ratio>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverReport {
    /// `Σ_{H∋x} F(H) + c_x = 1` at every vertex.
    pub sums_to_one: bool,
    #[serde(with = "ratio::serde_ratio")]
    pub max_c: Ratio,
    /// `max_x Σ_{H: x∈∂H} F(H)`.
    #[serde(with = "ratio::serde_ratio")]
    pub max_boundary_mass: Ratio,
    /// Largest diameter among sets with positive weight.
    pub max_diameter: usize,
    /// Largest quality among sets with positive weight.
    #[serde(with = "ratio::serde_ratio")]
    pub max_quality: Ratio,
    pub valid: bool,
}

impl FractionalCover {
    pub fn from_map(n: usize, f: &BTreeMap<VertexSet, Ratio>, c: Vec<Ratio>) -> Self {
        FractionalCover {
            n,
            weights: f
                .iter()
                .map(|(h, w)| (h.clone(), ratio::fmt_ratio(w)))
                .collect(),
            c,
        }
    }

    pub fn map(&self) -> Result<BTreeMap<VertexSet, Ratio>, String> {
        let mut out = BTreeMap::new();
        for (h, w) in &self.weights {
            h.validate(self.n).map_err(|e| e.to_string())?;
            let w = ratio::parse_ratio(w).map_err(|e| e.to_string())?;
            if w < ratio::zero() {
                return Err("negative weight".into());
            }
            if out.insert(h.clone(), w).is_some() {
                return Err(format!("duplicate set {h:?}"));
            }
        }
        Ok(out)
    }

    /// Checks both cover conditions at `eps`; `valid` needs quality `< eps`
    /// and diameter `≤ r` for every weighted set as well.
    pub fn check(&self, g: &Graph, eps: &Ratio, r: usize) -> Result<CoverReport, String> {
        if self.n != g.n() || self.c.len() != self.n {
            return Err("vertex count mismatch".into());
        }
        let f = self.map()?;
        let mut sums = self.c.clone();
        let mut boundary_mass = vec![ratio::zero(); self.n];
        let mut max_diameter = 0;
        let mut max_quality = ratio::zero();
        for (h, w) in &f {
            if w.is_zero() {
                continue;
            }
            for &x in h.iter() {
                sums[x] += w;
            }
            for &x in vertex_boundary(g, h).map_err(|e| e.to_string())?.iter() {
                boundary_mass[x] += w;
            }
            max_diameter = max_diameter.max(g.set_diameter(h).unwrap_or(usize::MAX));
            let q = quality(g, h);
            if q > max_quality {
                max_quality = q;
            }
        }
        let sums_to_one = sums.iter().all(|s| s == &ratio::one());
        let max_c = self.c.iter().max().cloned().unwrap_or_else(ratio::zero);
        let max_boundary_mass = boundary_mass.into_iter().max().unwrap_or_else(ratio::zero);
        let valid = sums_to_one
            && self.c.iter().all(|c| c >= &ratio::zero())
            && &max_c < eps
            && &max_boundary_mass < eps
            && &max_quality < eps
            && max_diameter <= r;
        Ok(CoverReport {
            sums_to_one,
            max_c,
            max_boundary_mass,
            max_diameter,
            max_quality,
            valid,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolnerFamily {
    pub sets: Vec<VertexSet>,
    /// More sets existed than `cap`.
    pub truncated: bool,
}

/// Connected ε-Følner sets of diameter at most `r` avoiding the frontier,
/// in (size, lexicographic) order, at most `cap` of them.
pub fn enumerate_folner_family(
    w: &Window,
    eps: &Ratio,
    r: usize,
    cap: usize,
    budget: u64,
) -> Result<FolnerFamily, TilingError> {
    let g = &w.host;
    let n = g.n();
    let mut out = Vec::new();
    let mut steps = 0u64;
    for anchor in 0..n {
        if w.truncated[anchor] {
            continue;
        }
        let dist = g.distances_from(&[anchor], r);
        let local: Vec<usize> = (0..n)
            .filter(|&u| u >= anchor && dist[u].is_some() && !w.truncated[u])
            .collect();
        let index: BTreeMap<usize, usize> = local.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let near: Vec<Vec<bool>> = local
            .iter()
            .map(|&u| {
                let du = g.distances_from(&[u], r);
                local.iter().map(|&v| du[v].is_some()).collect()
            })
            .collect();
        let mut e = RootedEnum {
            g,
            index: &index,
            near: &near,
            local: &local,
            steps: &mut steps,
            budget,
            out: Vec::new(),
        };
        let mut closed = vec![false; local.len()];
        closed[0] = true;
        let ext: Vec<usize> = g
            .neighbors(anchor)
            .iter()
            .filter_map(|u| index.get(u).copied())
            .collect();
        for &i in &ext {
            closed[i] = true;
        }
        e.extend(&mut vec![0], ext, &closed)?;
        for set in e.out {
            if &quality(g, &set) < eps {
                out.push(set);
            }
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let truncated = out.len() > cap;
    out.truncate(cap);
    Ok(FolnerFamily {
        sets: out,
        truncated,
    })
}

struct RootedEnum<'a> {
    g: &'a Graph,
    index: &'a BTreeMap<usize, usize>,
    near: &'a [Vec<bool>],
    local: &'a [usize],
    steps: &'a mut u64,
    budget: u64,
    out: Vec<VertexSet>,
}

impl RootedEnum<'_> {
    fn extend(&mut self, sub: &mut Vec<usize>, mut ext: Vec<usize>, closed: &[bool]) -> Result<(), TilingError> {
        *self.steps += 1;
        if *self.steps > self.budget {
            return Err(TilingError::Budget(self.budget));
        }
        self.out
            .push(VertexSet::from_unsorted(sub.iter().map(|&i| self.local[i]).collect()));
        while let Some(wi) = ext.pop() {
            if !sub.iter().all(|&s| self.near[s][wi]) {
                continue;
            }
            let mut next_ext = ext.clone();
            let mut next_closed = closed.to_vec();
            for u in self.g.neighbors(self.local[wi]) {
                if let Some(&ui) = self.index.get(u) {
                    if !closed[ui] {
                        next_ext.push(ui);
                    }
                    next_closed[ui] = true;
                }
            }
            sub.push(wi);
            self.extend(sub, next_ext, &next_closed)?;
            sub.pop();
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingReport {
    pub packing: Vec<VertexSet>,
    /// Covered fraction of each test set, counting only elements inside it.
    pub fractions: Vec<String>,
    #[serde(with = "ratio::serde_ratio")]
    pub min_fraction: Ratio,
    /// Covered vertices of the union of the tests.
    pub total_coverage: usize,
    pub iterations: u64,
}

struct PackState<'a> {
    n: usize,
    family: &'a [VertexSet],
    tests: &'a [VertexSet],
    test_masks: Vec<Vec<bool>>,
    union_mask: Vec<bool>,
}

impl PackState<'_> {
    fn score(&self, packing: &[usize]) -> (Vec<Ratio>, Ratio, usize) {
        let mut covered = vec![false; self.n];
        for &i in packing {
            for &v in self.family[i].iter() {
                covered[v] = true;
            }
        }
        let total = (0..self.n).filter(|&v| covered[v] && self.union_mask[v]).count();
        let fractions: Vec<Ratio> = self
            .tests
            .iter()
            .zip(&self.test_masks)
            .map(|(t, tm)| {
                let inside: usize = packing
                    .iter()
                    .map(|&i| &self.family[i])
                    .filter(|h| h.iter().all(|&v| tm[v]))
                    .map(|h| h.len())
                    .sum();
                ratio::ratio(inside as i64, t.len() as i64)
            })
            .collect();
        let min = fractions.iter().min().cloned().unwrap_or_else(ratio::one);
        (fractions, min, total)
    }

    /// Adds family members in `order` that avoid the current cover and lie in `within`.
    fn fill(&self, packing: &mut Vec<usize>, order: &[usize], within: Option<&[bool]>) {
        let mut covered = vec![false; self.n];
        for &i in packing.iter() {
            for &v in self.family[i].iter() {
                covered[v] = true;
            }
        }
        for &i in order {
            let h = &self.family[i];
            if h.iter().any(|&v| covered[v]) {
                continue;
            }
            if within.is_some_and(|m| !h.iter().all(|&v| m[v])) {
                continue;
            }
            for &v in h.iter() {
                covered[v] = true;
            }
            packing.push(i);
        }
    }
}

/// Greedy packing (largest first, then lexicographic) improved by exchange
/// moves: empty the least covered test set of packing elements inside it
/// and refill it greedily from each candidate seed. Maximizes the minimum
/// covered fraction, then total coverage.
pub fn ow_packing(
    g: &Graph,
    family: &[VertexSet],
    tests: &[VertexSet],
    budget: u64,
) -> Result<PackingReport, TilingError> {
    if family.is_empty() {
        return Err(TilingError::EmptyFamily);
    }
    let n = g.n();
    for s in family.iter().chain(tests) {
        s.validate(n)?;
    }
    if tests.iter().any(|t| t.is_empty()) {
        return Err(TilingError::Invalid("empty test set".into()));
    }
    let test_masks: Vec<Vec<bool>> = tests.iter().map(|t| t.mask(n)).collect();
    let mut union_mask = vec![false; n];
    for t in tests {
        for &v in t.iter() {
            union_mask[v] = true;
        }
    }
    let st = PackState {
        n,
        family,
        tests,
        test_masks,
        union_mask,
    };
    let mut order: Vec<usize> = (0..family.len()).collect();
    order.sort_by(|&a, &b| family[b].len().cmp(&family[a].len()).then_with(|| family[a].cmp(&family[b])));
    let mut packing = Vec::new();
    st.fill(&mut packing, &order, None);
    let (_, mut best_min, mut best_total) = st.score(&packing);
    let mut iterations = 0u64;
    'outer: while iterations < budget {
        let (fractions, _, _) = st.score(&packing);
        let mut under: Vec<usize> = (0..tests.len()).filter(|&j| fractions[j] < ratio::one()).collect();
        under.sort_by(|&a, &b| fractions[a].cmp(&fractions[b]).then(a.cmp(&b)));
        for j in under {
            let tm = &st.test_masks[j];
            let kept: Vec<usize> = packing
                .iter()
                .copied()
                .filter(|&i| !family[i].iter().all(|&v| tm[v]))
                .collect();
            let seeds: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&i| family[i].iter().all(|&v| tm[v]))
                .collect();
            for &seed in &seeds {
                iterations += 1;
                if iterations > budget {
                    break 'outer;
                }
                let mut cand = kept.clone();
                let mut seeded = vec![seed];
                seeded.extend(seeds.iter().copied().filter(|&i| i != seed));
                st.fill(&mut cand, &seeded, Some(tm));
                st.fill(&mut cand, &order, None);
                let (_, min, total) = st.score(&cand);
                if (&min, total) > (&best_min, best_total) {
                    packing = cand;
                    best_min = min;
                    best_total = total;
                    continue 'outer;
                }
            }
        }
        break;
    }
    let (fractions, min_fraction, total_coverage) = st.score(&packing);
    let mut sets: Vec<VertexSet> = packing.iter().map(|&i| family[i].clone()).collect();
    sets.sort();
    Ok(PackingReport {
        packing: sets,
        fractions: fractions.iter().map(ratio::fmt_ratio).collect(),
        min_fraction,
        total_coverage,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DonorSet {
    pub tile: usize,
    pub members: VertexSet,
    /// `3ε|H| < |K| < 4ε|H|` could not be met.
    pub window_waived: bool,
    /// `|K|` was capped at `|H|`.
    pub capped: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HallCertificate {
    pub tiling: Tiling,
    pub uncovered: VertexSet,
    pub donors: Vec<DonorSet>,
    pub matching: Vec<(usize, usize)>,
    /// Total weight `Σ_T F(T)(1 + c_x/(1−c_x))` leaving each uncovered vertex.
    pub out_weight: Vec<(usize, String)>,
    #[serde(with = "ratio::serde_ratio")]
    pub max_quality: Ratio,
    pub max_diameter: usize,
    /// Qualities ≤ 5ε and diameters ≤ 2k + r.
    pub bounds_hold: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deficiency {
    /// Uncovered vertices with `|N(M)| < |M|` in the support graph.
    pub m: VertexSet,
    pub neighbors: VertexSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HallOutcome {
    Tiling(Box<HallCertificate>),
    Deficiency(Deficiency),
}

/// Maximum bipartite matching (Hopcroft–Karp). Returns the partner of each left vertex.
pub fn hopcroft_karp(left: usize, right: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    const INF: usize = usize::MAX;
    let mut ml: Vec<Option<usize>> = vec![None; left];
    let mut mr: Vec<Option<usize>> = vec![None; right];
    let mut dist = vec![INF; left];
    loop {
        let mut q = VecDeque::new();
        for u in 0..left {
            if ml[u].is_none() {
                dist[u] = 0;
                q.push_back(u);
            } else {
                dist[u] = INF;
            }
        }
        let mut found = false;
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                match mr[v] {
                    None => found = true,
                    Some(u2) if dist[u2] == INF => {
                        dist[u2] = dist[u] + 1;
                        q.push_back(u2);
                    }
                    _ => {}
                }
            }
        }
        if !found {
            break;
        }
        fn dfs(
            u: usize,
            adj: &[Vec<usize>],
            ml: &mut [Option<usize>],
            mr: &mut [Option<usize>],
            dist: &mut [usize],
        ) -> bool {
            for &v in &adj[u] {
                let free = match mr[v] {
                    None => true,
                    Some(u2) => dist[u2] == dist[u] + 1 && dfs(u2, adj, ml, mr, dist),
                };
                if free {
                    ml[u] = Some(v);
                    mr[v] = Some(u);
                    return true;
                }
            }
            dist[u] = INF;
            false
        }
        for u in 0..left {
            if ml[u].is_none() {
                dfs(u, adj, &mut ml, &mut mr, &mut dist);
            }
        }
    }
    ml
}

/// Left vertices reachable by alternating paths from an unmatched left
/// vertex `root`, and their right neighbours.
fn alternating_closure(
    root: usize,
    adj: &[Vec<usize>],
    ml: &[Option<usize>],
    right: usize,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut mr = vec![None; right];
    for (u, m) in ml.iter().enumerate() {
        if let Some(v) = m {
            mr[*v] = Some(u);
        }
    }
    let mut left_seen = BTreeSet::from([root]);
    let mut right_seen = BTreeSet::new();
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if right_seen.insert(v) {
                let u2 = mr[v].expect("maximum matching leaves no augmenting path");
                if left_seen.insert(u2) {
                    stack.push(u2);
                }
            }
        }
    }
    (left_seen, right_seen)
}

/// Donor subset of a tile: the first `⌊3ε|H|⌋ + 1` vertices, non-boundary
/// vertices first, then by id; capped at `|H|`.
pub fn donor_subset(g: &Graph, h: &VertexSet, eps: &Ratio) -> (VertexSet, bool, bool) {
    let size = h.len();
    let lo = eps * ratio::int(3 * size as i64);
    let want = lo.floor().to_integer();
    let want = num_traits::ToPrimitive::to_usize(&want).unwrap_or(usize::MAX).saturating_add(1);
    let capped = want > size;
    let take = want.min(size);
    let hi = eps * ratio::int(4 * size as i64);
    let waived = capped || ratio::int(take as i64) >= hi || ratio::int(take as i64) <= lo;
    let mask = h.mask(g.n());
    let mut order: Vec<usize> = h.as_slice().to_vec();
    order.sort_by_key(|&v| (g.neighbors(v).iter().any(|&u| !mask[u]), v));
    (VertexSet::from_unsorted(order[..take].to_vec()), waived, capped)
}

/// Assigns every vertex outside the packing to a distinct donor vertex
/// sharing a positively weighted cover set within distance `< k`, and
/// grows each tile by the vertices assigned to it.
pub fn complete_tiling_hall(
    g: &Graph,
    packing: &Packing,
    cover: &FractionalCover,
    eps: &Ratio,
    k: usize,
) -> Result<HallOutcome, TilingError> {
    let n = g.n();
    if cover.n != n {
        return Err(TilingError::Invalid("cover vertex count mismatch".into()));
    }
    let f = cover.map().map_err(TilingError::Invalid)?;
    let covered = packing.covered(n);
    let a1: Vec<usize> = (0..n).filter(|&v| !covered[v]).collect();
    let mut owner = vec![usize::MAX; n];
    for (i, h) in packing.sets.iter().enumerate() {
        for &v in h.iter() {
            owner[v] = i;
        }
    }
    let mut donors = Vec::new();
    let mut a2 = Vec::new();
    for (i, h) in packing.sets.iter().enumerate() {
        let (members, window_waived, capped) = donor_subset(g, h, eps);
        a2.extend(members.iter().copied());
        donors.push(DonorSet {
            tile: i,
            members,
            window_waived,
            capped,
        });
    }
    a2.sort_unstable();
    let right_index: BTreeMap<usize, usize> = a2.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); a1.len()];
    let mut out_weight: Vec<Ratio> = vec![ratio::zero(); a1.len()];
    let left_index: BTreeMap<usize, usize> = a1.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    for (t, ft) in &f {
        if ft.is_zero() {
            continue;
        }
        let donors_in_t: Vec<usize> = t.iter().filter_map(|v| right_index.get(v).copied()).collect();
        for &x in t.iter() {
            let Some(&li) = left_index.get(&x) else { continue };
            let cx = &cover.c[x];
            if cx < &ratio::one() {
                out_weight[li] += ft + ft * cx / (ratio::one() - cx);
            }
            let dist = g.distances_from(&[x], k.saturating_sub(1));
            for &ri in &donors_in_t {
                if dist[a2[ri]].is_some() {
                    adj[li].insert(ri);
                }
            }
        }
    }
    let adj: Vec<Vec<usize>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
    let ml = hopcroft_karp(a1.len(), a2.len(), &adj);
    if let Some(root) = ml.iter().position(|m| m.is_none()) {
        let (m, nb) = alternating_closure(root, &adj, &ml, a2.len());
        return Ok(HallOutcome::Deficiency(Deficiency {
            m: m.into_iter().map(|i| a1[i]).collect(),
            neighbors: nb.into_iter().map(|i| a2[i]).collect(),
        }));
    }
    let mut tiles: Vec<Vec<usize>> = packing.sets.iter().map(|h| h.as_slice().to_vec()).collect();
    let mut matching = Vec::new();
    for (li, m) in ml.iter().enumerate() {
        let y = a2[m.expect("saturated")];
        tiles[owner[y]].push(a1[li]);
        matching.push((a1[li], y));
    }
    let tiles: Vec<VertexSet> = tiles.into_iter().map(VertexSet::from_unsorted).collect();
    let mut max_quality = ratio::zero();
    let mut max_diameter = 0;
    for t in &tiles {
        let q = quality(g, t);
        if q > max_quality {
            max_quality = q;
        }
        max_diameter = max_diameter.max(g.set_diameter(t).unwrap_or(usize::MAX));
    }
    let quality_bound = eps * ratio::int(5);
    let diameter_bound = 2 * k + packing.r;
    let bounds_hold = max_quality <= quality_bound && max_diameter <= diameter_bound;
    Ok(HallOutcome::Tiling(Box::new(HallCertificate {
        tiling: Tiling {
            schema: TILING_SCHEMA.into(),
            n,
            tiles,
            quality_bound,
            diameter_bound,
        },
        uncovered: a1.iter().copied().collect(),
        donors,
        matching,
        out_weight: a1
            .iter()
            .zip(&out_weight)
            .map(|(&x, w)| (x, ratio::fmt_ratio(w)))
            .collect(),
        max_quality,
        max_diameter,
        bounds_hold,
    })))
}

/// `F(H)` = probability that `H` is an element of the outcome; `c_x` =
/// probability that `x` is uncovered.
pub fn fractional_from_distribution(dist: &TilingDistribution) -> FractionalCover {
    let mut f: BTreeMap<VertexSet, Ratio> = BTreeMap::new();
    let mut c = vec![ratio::zero(); dist.n];
    for o in &dist.outcomes {
        let mut covered = vec![false; dist.n];
        for s in &o.sets {
            *f.entry(s.clone()).or_insert_with(ratio::zero) += &o.prob;
            for &v in s.iter() {
                covered[v] = true;
            }
        }
        for v in 0..dist.n {
            if !covered[v] {
                c[v] += &o.prob;
            }
        }
    }
    FractionalCover::from_map(dist.n, &f, c)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractionalWitness {
    pub witness: PropAWitness,
    pub edge_bounds: Vec<EdgeBound>,
    #[serde(with = "ratio::serde_ratio")]
    pub max_bound: Ratio,
    /// `function_defect(P_x)` per vertex.
    #[serde(with = "ratio::serde_ratio_vec")]
    pub defects: Vec<Ratio>,
    #[serde(with = "ratio::serde_ratio")]
    pub max_defect: Ratio,
}

/// `P_x = Σ_{H∋x} F(H) p_H + c_x δ_x`, with radius the largest diameter
/// among weighted sets.
pub fn propa_from_fractional(g: &Graph, cover: &FractionalCover) -> Result<FractionalWitness, TilingError> {
    if cover.n != g.n() {
        return Err(TilingError::Invalid("cover vertex count mismatch".into()));
    }
    let f = cover.map().map_err(TilingError::Invalid)?;
    let radius = f
        .iter()
        .filter(|(_, w)| !w.is_zero())
        .map(|(h, _)| g.set_diameter(h).unwrap_or(usize::MAX))
        .max()
        .unwrap_or(0);
    let built = witness_from_components(g, &f, radius);
    let mut defects = Vec::with_capacity(g.n());
    for x in 0..g.n() {
        let p = FolnerFunction::new(built.witness.vectors[&x].iter().map(|(&z, v)| (z, v.clone())))?;
        defects.push(function_defect(g, &p)?);
    }
    let max_defect = defects.iter().max().cloned().unwrap_or_else(ratio::zero);
    Ok(FractionalWitness {
        witness: built.witness,
        edge_bounds: built.edge_bounds,
        max_bound: built.max_bound,
        defects,
        max_defect,
    })
}

/// Uniform distribution over the `k²` translates of the `k×k` block tiling
/// of the `n×n` torus, vertex `(i, j)` having id `i·n + j`.
pub fn shifted_block_distribution(n: usize, k: usize) -> Result<TilingDistribution, TilingError> {
    if k == 0 || n == 0 || !n.is_multiple_of(k) {
        return Err(TilingError::NotDivisible { n, k });
    }
    let p = ratio::ratio(1, (k * k) as i64);
    let mut outcomes = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            let mut tiles = Vec::with_capacity((n / k) * (n / k));
            for bi in 0..n / k {
                for bj in 0..n / k {
                    let mut t = Vec::with_capacity(k * k);
                    for di in 0..k {
                        for dj in 0..k {
                            let i = (a + bi * k + di) % n;
                            let j = (b + bj * k + dj) % n;
                            t.push(i * n + j);
                        }
                    }
                    tiles.push(VertexSet::from_unsorted(t));
                }
            }
            outcomes.push((tiles, p.clone()));
        }
    }
    Ok(TilingDistribution::new(n * n, outcomes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionStats {
    /// Probability that `x` lies on the boundary of its tile.
    #[serde(with = "ratio::serde_ratio_vec")]
    pub boundary: Vec<Ratio>,
    #[serde(with = "ratio::serde_ratio")]
    pub max_boundary: Ratio,
    #[serde(with = "ratio::serde_ratio_vec")]
    pub uncovered: Vec<Ratio>,
    #[serde(with = "ratio::serde_ratio")]
    pub max_uncovered: Ratio,
}

pub fn distribution_stats(g: &Graph, dist: &TilingDistribution) -> Result<DistributionStats, TilingError> {
    if dist.n != g.n() {
        return Err(TilingError::Invalid("distribution vertex count mismatch".into()));
    }
    let n = g.n();
    let mut boundary = vec![ratio::zero(); n];
    let mut uncovered = vec![ratio::zero(); n];
    for o in &dist.outcomes {
        let mut covered = vec![false; n];
        for s in &o.sets {
            for &v in vertex_boundary(g, s)?.iter() {
                boundary[v] += &o.prob;
            }
            for &v in s.iter() {
                covered[v] = true;
            }
        }
        for v in 0..n {
            if !covered[v] {
                uncovered[v] += &o.prob;
            }
        }
    }
    Ok(DistributionStats {
        max_boundary: boundary.iter().max().cloned().unwrap_or_else(ratio::zero),
        max_uncovered: uncovered.iter().max().cloned().unwrap_or_else(ratio::zero),
        boundary,
        uncovered,
    })
}

/// All `k×k` blocks of the `n×n` torus, sorted.
pub fn torus_blocks(n: usize, k: usize) -> Vec<VertexSet> {
    let mut out: Vec<VertexSet> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| {
            (0..k)
                .flat_map(|di| (0..k).map(move |dj| ((a + di) % n) * n + (b + dj) % n))
                .collect()
        })
        .collect();
    out.sort();
    out.dedup();
    out
}
