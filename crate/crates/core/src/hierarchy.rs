//! Separators, separator measures, weighted separation, and Property A
//! witnesses built from separator measures.

use std::collections::BTreeMap;

use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::folner::{ConnectedSubsets, FolnerError};
use crate::graph::{relative_boundary, Graph, GraphError, VertexSet, Window};
use crate::lp::{Cmp, Lp, LpResult};
use crate::ratio::{self, Ratio};

pub const MEASURE_SCHEMA: &str = "separator-measure/v1";
pub const DUAL_SCHEMA: &str = "dual-weights/v1";
pub const WITNESS_SCHEMA: &str = "propa-witness/v1";

/// Largest vertex count for exhaustive separator enumeration.
pub const EXHAUSTIVE_MAX: usize = 22;
/// Largest LP (nonzeros) solved directly in exact arithmetic.
pub const EXACT_NONZEROS: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierError {
    #[error("total weight is zero")]
    ZeroWeight,
    #[error("weight at vertex {0} is negative")]
    NegativeWeight(usize),
    #[error("weight vector has length {got}, graph has {n} vertices")]
    WeightLength { got: usize, n: usize },
    #[error("no connected set of size ≤ {k} has relative boundary ≤ ε·size in the remaining graph {remaining:?}")]
    PeelStuck { k: usize, remaining: VertexSet },
    #[error("oracle {oracle} failed on a component of size {size}: {msg}")]
    Oracle {
        oracle: String,
        size: usize,
        msg: String,
    },
    #[error("separator weight {weight} exceeds ε·w(V) = {bound}")]
    BoundViolated { weight: String, bound: String },
    #[error("components of size up to {size} remain (k = {k})")]
    ComponentTooLarge { size: usize, k: usize },
    #[error("LP solver reported {0}")]
    Lp(String),
    #[error("enumeration budget of {0} steps exhausted")]
    Budget(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<FolnerError> for HierError {
    fn from(e: FolnerError) -> Self {
        match e {
            FolnerError::BudgetExceeded { budget } => HierError::Budget(budget),
            FolnerError::Graph(g) => HierError::Graph(g),
            other => HierError::Lp(other.to_string()),
        }
    }
}

/// Largest component size of `g − removed`.
pub fn max_component_after(g: &Graph, removed: &[bool]) -> usize {
    g.components_avoiding(removed)
        .iter()
        .map(|c| c.len())
        .max()
        .unwrap_or(0)
}

pub fn is_k_separator(g: &Graph, y: &VertexSet, k: usize) -> bool {
    max_component_after(g, &y.mask(g.n())) <= k
}

/// Bitmask adjacency for graphs of at most 32 vertices.
struct BitGraph {
    adj: Vec<u32>,
}

impl BitGraph {
    fn new(g: &Graph) -> Self {
        BitGraph {
            adj: (0..g.n())
                .map(|v| g.neighbors(v).iter().fold(0u32, |m, &u| m | (1 << u)))
                .collect(),
        }
    }

    /// Whether every component of the vertices in `alive` has at most `k` vertices.
    fn small_components(&self, mut alive: u32, k: usize) -> bool {
        while alive != 0 {
            let start = alive & alive.wrapping_neg();
            let mut comp = start;
            let mut frontier = start;
            while frontier != 0 {
                let v = frontier.trailing_zeros() as usize;
                frontier &= frontier - 1;
                let new = self.adj[v] & alive & !comp;
                comp |= new;
                frontier |= new;
            }
            if comp.count_ones() as usize > k {
                return false;
            }
            alive &= !comp;
        }
        true
    }
}

fn mask_to_set(mask: u32) -> VertexSet {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

/// All inclusion-minimal k-separators of a graph with at most
/// [`EXHAUSTIVE_MAX`] vertices, in increasing bitmask order.
pub fn minimal_separators(g: &Graph, k: usize) -> Vec<VertexSet> {
    let n = g.n();
    assert!(n <= EXHAUSTIVE_MAX, "exhaustive enumeration needs n ≤ {EXHAUSTIVE_MAX}");
    let bg = BitGraph::new(g);
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let is_sep: Vec<bool> = (0..=full)
        .map(|y| bg.small_components(full & !y, k))
        .collect();
    (0..=full)
        .filter(|&y| {
            is_sep[y as usize] && {
                let mut bits = y;
                let mut minimal = true;
                while bits != 0 {
                    let b = bits & bits.wrapping_neg();
                    bits &= bits - 1;
                    if is_sep[(y & !b) as usize] {
                        minimal = false;
                        break;
                    }
                }
                minimal
            }
        })
        .map(mask_to_set)
        .collect()
}

/// Removes vertices (heaviest first, then largest id) while the set stays a k-separator.
pub fn minimalize(g: &Graph, y: &VertexSet, k: usize, w: &[Ratio]) -> VertexSet {
    let mut order: Vec<usize> = y.as_slice().to_vec();
    order.sort_by(|&a, &b| w[b].cmp(&w[a]).then(b.cmp(&a)));
    let mut mask = y.mask(g.n());
    for v in order {
        mask[v] = false;
        if max_component_after(g, &mask) > k {
            mask[v] = true;
        }
    }
    (0..g.n()).filter(|&v| mask[v]).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparatorMeasure {
    pub schema: String,
    pub k: usize,
    pub atoms: Vec<MeasureAtom>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureAtom {
    pub separator: VertexSet,
    #[serde(with = "ratio::serde_ratio")]
    pub weight: Ratio,
}

impl SeparatorMeasure {
    pub fn new(k: usize, atoms: Vec<(VertexSet, Ratio)>) -> Self {
        SeparatorMeasure {
            schema: MEASURE_SCHEMA.into(),
            k,
            atoms: atoms
                .into_iter()
                .map(|(separator, weight)| MeasureAtom { separator, weight })
                .collect(),
        }
    }

    pub fn marginals(&self, n: usize) -> Vec<Ratio> {
        let mut m = vec![ratio::zero(); n];
        for a in &self.atoms {
            for &v in a.separator.iter() {
                m[v] += &a.weight;
            }
        }
        m
    }

    pub fn max_marginal(&self, n: usize) -> Ratio {
        self.marginals(n).into_iter().max().unwrap_or_else(ratio::zero)
    }

    /// Positive weights summing to one on valid k-separators of `g`.
    pub fn validate(&self, g: &Graph) -> Result<(), String> {
        if self.schema != MEASURE_SCHEMA {
            return Err(format!("unknown schema {}", self.schema));
        }
        let mut total = ratio::zero();
        for a in &self.atoms {
            if !a.weight.is_positive() {
                return Err("non-positive atom weight".into());
            }
            a.separator.validate(g.n()).map_err(|e| e.to_string())?;
            if !is_k_separator(g, &a.separator, self.k) {
                return Err(format!("{:?} is not a {}-separator", a.separator, self.k));
            }
            total += &a.weight;
        }
        if total != ratio::one() {
            return Err(format!("weights sum to {}", ratio::fmt_ratio(&total)));
        }
        Ok(())
    }
}

/// Nonnegative normalized vertex weights giving every k-separator weight above `eps`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualWeightCertificate {
    pub schema: String,
    pub k: usize,
    #[serde(with = "ratio::serde_ratio")]
    pub eps: Ratio,
    #[serde(with = "ratio::serde_ratio_vec")]
    pub w: Vec<Ratio>,
    /// Minimum of `⟨w, 1_Y⟩` over the separators considered.
    #[serde(with = "ratio::serde_ratio")]
    pub min_separator_weight: Ratio,
}

impl DualWeightCertificate {
    /// Checks the certificate against an exhaustive enumeration.
    pub fn validate(&self, g: &Graph) -> Result<(), String> {
        if self.schema != DUAL_SCHEMA {
            return Err(format!("unknown schema {}", self.schema));
        }
        if self.w.len() != g.n() {
            return Err("weight vector length mismatch".into());
        }
        if self.w.iter().any(|x| x.is_negative()) {
            return Err("negative weight".into());
        }
        if ratio::sum(&self.w) != ratio::one() {
            return Err("weights do not sum to 1".into());
        }
        if g.n() > EXHAUSTIVE_MAX {
            return Err("graph too large for exhaustive verification".into());
        }
        let min = minimal_separators(g, self.k)
            .iter()
            .map(|y| ratio::sum(y.iter().map(|&v| &self.w[v])))
            .min()
            .unwrap_or_else(ratio::zero);
        if min != self.min_separator_weight {
            return Err("minimum separator weight mismatch".into());
        }
        if min <= self.eps {
            return Err(format!("a separator has weight {} ≤ ε", ratio::fmt_ratio(&min)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dichotomy {
    Measure(SeparatorMeasure),
    Dual(DualWeightCertificate),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpOutcome {
    pub result: Dichotomy,
    /// `min_μ max_x μ(x ∈ Y)`.
    #[serde(with = "ratio::serde_ratio")]
    pub primal_threshold: Ratio,
    /// `max_w min_Y ⟨w, 1_Y⟩`.
    #[serde(with = "ratio::serde_ratio")]
    pub dual_threshold: Ratio,
    pub separators: usize,
    /// False when separators came from column generation rather than enumeration.
    pub exhaustive: bool,
}

fn to_exact(lp: &Lp<Ratio>) -> Lp<f64> {
    Lp {
        vars: lp.vars,
        obj: lp.obj.iter().map(ratio::to_f64).collect(),
        rows: lp
            .rows
            .iter()
            .map(|(r, c, b)| {
                (
                    r.iter().map(|(j, v)| (*j, ratio::to_f64(v))).collect(),
                    *c,
                    ratio::to_f64(b),
                )
            })
            .collect(),
    }
}

/// Solves exactly; large instances are solved in floating point first and
/// re-solved exactly on the columns that float solution uses.
fn solve_exact(lp: &Lp<Ratio>, droppable: &[usize]) -> Result<(Vec<Ratio>, Ratio), HierError> {
    let lp = if lp.nonzeros() > EXACT_NONZEROS && !droppable.is_empty() {
        match to_exact(lp).solve() {
            LpResult::Optimal { x, .. } => {
                let keep: Vec<bool> = (0..lp.vars)
                    .map(|j| !droppable.contains(&j) || x[j] > 0.0)
                    .collect();
                let mut restricted = lp.clone();
                for row in restricted.rows.iter_mut() {
                    row.0.retain(|(j, _)| keep[*j]);
                }
                for j in 0..lp.vars {
                    if !keep[j] {
                        restricted.obj[j] = ratio::zero();
                        restricted.add_row(vec![(j, ratio::one())], Cmp::Le, ratio::zero());
                    }
                }
                restricted
            }
            other => return Err(HierError::Lp(format!("{other:?}"))),
        }
    } else {
        lp.clone()
    };
    match lp.solve() {
        LpResult::Optimal { x, value } => Ok((x, value)),
        LpResult::Infeasible => Err(HierError::Lp("infeasible".into())),
        LpResult::Unbounded => Err(HierError::Lp("unbounded".into())),
    }
}

/// `min t` s.t. `Σ μ_Y = 1`, `Σ_{Y∋x} μ_Y ≤ t`.
pub fn primal_threshold(n: usize, seps: &[VertexSet]) -> Result<(Ratio, Vec<Ratio>), HierError> {
    let s = seps.len();
    let mut lp = Lp::<Ratio>::new(s + 1);
    lp.obj[s] = ratio::int(-1);
    lp.add_row((0..s).map(|j| (j, ratio::one())).collect(), Cmp::Eq, ratio::one());
    let mut containing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, y) in seps.iter().enumerate() {
        for &v in y.iter() {
            containing[v].push(j);
        }
    }
    for cols in containing {
        if cols.is_empty() {
            continue;
        }
        let mut row: Vec<(usize, Ratio)> = cols.into_iter().map(|j| (j, ratio::one())).collect();
        row.push((s, ratio::int(-1)));
        lp.add_row(row, Cmp::Le, ratio::zero());
    }
    let droppable: Vec<usize> = (0..s).collect();
    let (x, value) = solve_exact(&lp, &droppable)?;
    Ok((-value, x[..s].to_vec()))
}

/// `max z` s.t. `Σ w = 1`, `⟨w, 1_Y⟩ ≥ z`; among optimal `w`, maximizes `min_x w_x`.
pub fn dual_threshold(n: usize, seps: &[VertexSet]) -> Result<(Ratio, Vec<Ratio>), HierError> {
    let mut lp = Lp::<Ratio>::new(n + 1);
    lp.obj[n] = ratio::one();
    lp.add_row((0..n).map(|j| (j, ratio::one())).collect(), Cmp::Eq, ratio::one());
    for y in seps {
        let mut row: Vec<(usize, Ratio)> = y.iter().map(|&v| (v, ratio::int(-1))).collect();
        row.push((n, ratio::one()));
        lp.add_row(row, Cmp::Le, ratio::zero());
    }
    let (_, z) = solve_exact(&lp, &[])?;
    let mut spread = Lp::<Ratio>::new(n + 1);
    spread.obj[n] = ratio::one();
    spread.add_row((0..n).map(|j| (j, ratio::one())).collect(), Cmp::Eq, ratio::one());
    for y in seps {
        spread.add_row(y.iter().map(|&v| (v, ratio::one())).collect(), Cmp::Ge, z.clone());
    }
    for v in 0..n {
        spread.add_row(vec![(v, ratio::one()), (n, ratio::int(-1))], Cmp::Ge, ratio::zero());
    }
    let (w, _) = solve_exact(&spread, &[])?;
    Ok((z, w[..n].to_vec()))
}

/// Separators for the LP: exhaustive when small, otherwise column generation.
fn separator_pool(g: &Graph, k: usize) -> Result<(Vec<VertexSet>, bool), HierError> {
    if g.n() <= EXHAUSTIVE_MAX {
        return Ok((minimal_separators(g, k), true));
    }
    let n = g.n();
    let uniform = vec![ratio::one(); n];
    let mut pool: Vec<VertexSet> = Vec::new();
    let all = VertexSet::all(n);
    let first = CarvingOracle::default().separate(g, &all, &uniform, &ratio::zero(), k)?;
    pool.push(minimalize(g, &first, k, &uniform));
    for _ in 0..500 {
        let (z, w) = dual_threshold(n, &pool)?;
        let mut best: Option<(Ratio, VertexSet)> = None;
        for rotate in 0..n {
            let cand = CarvingOracle { rotate }.separate(g, &all, &w, &ratio::zero(), k)?;
            let cand = minimalize(g, &cand, k, &w);
            let weight = ratio::sum(cand.iter().map(|&v| &w[v]));
            if best.as_ref().is_none_or(|(bw, _)| weight < *bw) {
                best = Some((weight, cand));
            }
        }
        let (weight, cand) = best.expect("n > 0");
        if weight >= z || pool.contains(&cand) {
            break;
        }
        pool.push(cand);
    }
    Ok((pool, false))
}

/// Exactly one of a separator measure with all marginals ≤ ε, or a dual
/// weight certificate with every separator heavier than ε.
pub fn separator_measure_lp(g: &Graph, eps: &Ratio, k: usize) -> Result<LpOutcome, HierError> {
    let (seps, exhaustive) = separator_pool(g, k)?;
    separator_measure_lp_with(g, eps, k, &seps, exhaustive)
}

/// [`separator_measure_lp`] over a precomputed separator list.
pub fn separator_measure_lp_with(
    g: &Graph,
    eps: &Ratio,
    k: usize,
    seps: &[VertexSet],
    exhaustive: bool,
) -> Result<LpOutcome, HierError> {
    let n = g.n();
    let (t, mu) = primal_threshold(n, seps)?;
    let (z, w) = dual_threshold(n, seps)?;
    let result = if &t <= eps {
        let atoms = seps
            .iter()
            .zip(mu)
            .filter(|(_, m)| m.is_positive())
            .map(|(y, m)| (y.clone(), m))
            .collect();
        Dichotomy::Measure(SeparatorMeasure::new(k, atoms))
    } else {
        Dichotomy::Dual(DualWeightCertificate {
            schema: DUAL_SCHEMA.into(),
            k,
            eps: eps.clone(),
            w,
            min_separator_weight: z.clone(),
        })
    };
    Ok(LpOutcome {
        result,
        primal_threshold: t,
        dual_threshold: z,
        separators: seps.len(),
        exhaustive,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeelResult {
    pub s: VertexSet,
    pub components: Vec<VertexSet>,
    /// The selected sets `L_1, L_2, …` in order.
    pub steps: Vec<VertexSet>,
}

/// Repeatedly removes a connected `L` with `|L| ≤ k` and `|∂_H L| ≤ ε|L|`,
/// chosen by smallest ratio, then smallest size, then lexicographically.
pub fn peel_local_hyperfinite(
    g: &Graph,
    eps: &Ratio,
    k: usize,
    budget: u64,
) -> Result<PeelResult, HierError> {
    peel_within(g, &VertexSet::all(g.n()), eps, k, budget)
}

fn peel_within(
    g: &Graph,
    within: &VertexSet,
    eps: &Ratio,
    k: usize,
    budget: u64,
) -> Result<PeelResult, HierError> {
    let n = g.n();
    let mut alive = within.mask(n);
    let mut s_members = Vec::new();
    let mut steps = Vec::new();
    let mut spent = 0u64;
    while alive.iter().any(|&a| a) {
        let pool: VertexSet = (0..n).filter(|&v| alive[v]).collect();
        let mut best: Option<(Ratio, usize, VertexSet, VertexSet)> = None;
        let mut en = ConnectedSubsets::new(g, &pool, budget.saturating_sub(spent));
        for size in 1..=k.min(pool.len()) {
            for set in en.of_size(size)? {
                let b = relative_boundary(g, &alive, &set);
                let r = ratio::ratio(b.len() as i64, size as i64);
                if &r > eps {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((br, bs, bset, _)) => (&r, size, &set) < (br, *bs, bset),
                };
                if better {
                    best = Some((r, size, set, b));
                }
            }
        }
        spent += en.steps();
        let Some((_, _, l, b)) = best else {
            return Err(HierError::PeelStuck { k, remaining: pool });
        };
        for &v in l.iter() {
            alive[v] = false;
        }
        s_members.extend(b.iter().copied());
        steps.push(l);
    }
    let s = VertexSet::from_unsorted(s_members);
    let mut removed = vec![true; n];
    for &v in within.iter() {
        removed[v] = false;
    }
    for &v in s.iter() {
        removed[v] = true;
    }
    let components = g.components_avoiding(&removed);
    Ok(PeelResult {
        s,
        components,
        steps,
    })
}

/// Separates an induced piece `t` of `g` into components of size ≤ k.
pub trait SeparatorOracle {
    fn name(&self) -> &'static str;
    fn separate(
        &self,
        g: &Graph,
        t: &VertexSet,
        w: &[Ratio],
        delta: &Ratio,
        k: usize,
    ) -> Result<VertexSet, HierError>;
}

/// Peeling at a fixed ε, ignoring weights.
pub struct PeelOracle {
    pub eps: Ratio,
    pub budget: u64,
}

impl SeparatorOracle for PeelOracle {
    fn name(&self) -> &'static str {
        "peel"
    }

    fn separate(
        &self,
        g: &Graph,
        t: &VertexSet,
        _w: &[Ratio],
        _delta: &Ratio,
        k: usize,
    ) -> Result<VertexSet, HierError> {
        Ok(peel_within(g, t, &self.eps, k, self.budget)?.s)
    }
}

/// Minimum-weight separator by exhaustive search; pieces up to 24 vertices.
pub struct ExhaustiveOracle;

impl SeparatorOracle for ExhaustiveOracle {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn separate(
        &self,
        g: &Graph,
        t: &VertexSet,
        w: &[Ratio],
        _delta: &Ratio,
        k: usize,
    ) -> Result<VertexSet, HierError> {
        if t.len() <= k {
            return Ok(VertexSet::new());
        }
        if t.len() > 24 {
            return Err(HierError::Oracle {
                oracle: self.name().into(),
                size: t.len(),
                msg: "piece too large for exhaustive search".into(),
            });
        }
        let (sub, map) = crate::graph::induced_subgraph(g, t)?;
        let bg = BitGraph::new(&sub);
        let m = sub.n();
        let full = (1u32 << m) - 1;
        let denom = map
            .iter()
            .fold(num_bigint::BigInt::from(1), |acc, &v| num_integer::Integer::lcm(&acc, w[v].denom()));
        let scaled: Vec<i128> = map
            .iter()
            .map(|&v| (w[v].numer() * (&denom / w[v].denom())).to_i128())
            .collect::<Option<_>>()
            .filter(|s: &Vec<i128>| s.iter().try_fold(0i128, |a, &b| a.checked_add(b)).is_some())
            .ok_or_else(|| HierError::Oracle {
                oracle: self.name().into(),
                size: t.len(),
                msg: "weights overflow the exact integer range".into(),
            })?;
        let mut best: Option<(i128, u32, u32)> = None;
        for y in 0..=full {
            if !bg.small_components(full & !y, k) {
                continue;
            }
            let mut wt = 0i128;
            let mut bits = y;
            while bits != 0 {
                wt += scaled[bits.trailing_zeros() as usize];
                bits &= bits - 1;
            }
            let key = (wt, y.count_ones(), y.reverse_bits());
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        let (_, _, rev) = best.expect("the full set separates");
        let y = rev.reverse_bits();
        Ok((0..m).filter(|i| y & (1 << i) != 0).map(|i| map[i]).collect())
    }
}

/// Greedy carving: grows BFS balls from the least vertex (ids rotated by
/// `rotate`) of an oversized component and cuts the sphere with the smallest
/// weight per carved weight.
#[derive(Clone, Copy, Debug, Default)]
pub struct CarvingOracle {
    pub rotate: usize,
}

impl SeparatorOracle for CarvingOracle {
    fn name(&self) -> &'static str {
        "carving"
    }

    fn separate(
        &self,
        g: &Graph,
        t: &VertexSet,
        w: &[Ratio],
        _delta: &Ratio,
        k: usize,
    ) -> Result<VertexSet, HierError> {
        let n = g.n();
        let mut removed = vec![true; n];
        for &v in t.iter() {
            removed[v] = false;
        }
        let mut cut = Vec::new();
        loop {
            let comps = g.components_avoiding(&removed);
            let Some(big) = comps.into_iter().find(|c| c.len() > k) else {
                break;
            };
            let root = *big
                .iter()
                .min_by_key(|&&v| (v + n - self.rotate % n.max(1)) % n.max(1))
                .expect("nonempty");
            let mut dist = vec![usize::MAX; n];
            dist[root] = 0;
            let mut layers: Vec<Vec<usize>> = vec![vec![root]];
            loop {
                let last = layers.last().expect("nonempty");
                let mut next = Vec::new();
                for &v in last {
                    for &u in g.neighbors(v) {
                        if !removed[u] && dist[u] == usize::MAX {
                            dist[u] = layers.len();
                            next.push(u);
                        }
                    }
                }
                if next.is_empty() {
                    break;
                }
                layers.push(next);
            }
            let mut inside = 0usize;
            let mut inside_w = ratio::zero();
            let mut best: Option<(Ratio, usize)> = None;
            for r in 0..layers.len() - 1 {
                inside += layers[r].len();
                inside_w += ratio::sum(layers[r].iter().map(|&v| &w[v]));
                if inside > k {
                    break;
                }
                let sphere_w = ratio::sum(layers[r + 1].iter().map(|&v| &w[v]));
                let cost = if inside_w.is_zero() {
                    if sphere_w.is_zero() {
                        ratio::zero()
                    } else {
                        sphere_w * ratio::int(1_000_000_000)
                    }
                } else {
                    sphere_w / &inside_w
                };
                if best.as_ref().is_none_or(|(c, _)| cost <= *c) {
                    best = Some((cost, r));
                }
            }
            let (_, r) = best.expect("radius 0 always fits");
            for layer in &layers[..=r] {
                for &v in layer {
                    removed[v] = true;
                }
            }
            for &v in &layers[r + 1] {
                removed[v] = true;
                cut.push(v);
            }
        }
        Ok(VertexSet::from_unsorted(cut))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceLog {
    pub size: usize,
    #[serde(with = "ratio::serde_ratio")]
    pub weight: Ratio,
    #[serde(with = "ratio::serde_ratio")]
    pub cut_weight: Ratio,
    /// `w(S_T) ≤ (ε/3)·w(T)`.
    pub within_third: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedSeparation {
    pub s: VertexSet,
    #[serde(with = "ratio::serde_ratio")]
    pub weight: Ratio,
    #[serde(with = "ratio::serde_ratio")]
    pub total: Ratio,
    /// Smallest integer above `3/ε`.
    pub l: usize,
    #[serde(with = "ratio::serde_ratio")]
    pub delta: Ratio,
    pub m: usize,
    pub zero_weight: usize,
    #[serde(with = "ratio::serde_ratio")]
    pub d_m_weight: Ratio,
    #[serde(with = "ratio::serde_ratio")]
    pub f_weight: Ratio,
    pub oracle: String,
    pub pieces: Vec<PieceLog>,
}

/// Bucket index `i` with `β^{i+1} < x ≤ β^i` for `0 < β < 1`, `x > 0`.
fn bucket(x: &Ratio, beta: &Ratio, ln_beta: f64) -> i64 {
    let guess = (ratio::to_f64(x).ln() / ln_beta).floor() as i64;
    let pow = |e: i64| {
        if e >= 0 {
            num_traits::pow(beta.clone(), e as usize)
        } else {
            num_traits::pow(ratio::one() / beta, (-e) as usize)
        }
    };
    let mut i = guess;
    loop {
        if x > &pow(i) {
            i -= 1;
        } else if x <= &pow(i + 1) {
            i += 1;
        } else {
            return i;
        }
    }
}

/// Deletes zero-weight vertices, the light bucket class `D_m` and the
/// cross-class sets `F_{i,j}`, then runs `oracle` on each remaining piece.
pub fn weighted_separator(
    g: &Graph,
    w: &[Ratio],
    eps: &Ratio,
    k: usize,
    oracle: &dyn SeparatorOracle,
) -> Result<WeightedSeparation, HierError> {
    let n = g.n();
    if w.len() != n {
        return Err(HierError::WeightLength { got: w.len(), n });
    }
    if let Some(v) = (0..n).find(|&v| w[v].is_negative()) {
        return Err(HierError::NegativeWeight(v));
    }
    let total = ratio::sum(w);
    if total.is_zero() {
        return Err(HierError::ZeroWeight);
    }
    let d = g.max_degree().max(1);
    let three = ratio::int(3);
    let l = (&three / eps).floor().to_integer().to_usize().expect("L fits") + 1;
    let beta = eps / (&three * ratio::int(d as i64));
    let delta = num_traits::pow(beta.clone(), l - 1) * eps / &three;
    let ln_beta = ratio::to_f64(&beta).ln();

    let mut removed = vec![false; n];
    let mut zero_weight = 0;
    let mut bucket_of: Vec<Option<i64>> = vec![None; n];
    for v in 0..n {
        if w[v].is_zero() {
            removed[v] = true;
            zero_weight += 1;
        } else {
            bucket_of[v] = Some(bucket(&w[v], &beta, ln_beta));
        }
    }
    let li = l as i64;
    let class_weight = |q: i64| {
        ratio::sum(
            (0..n)
                .filter(|&v| bucket_of[v].is_some_and(|b| b.rem_euclid(li) == q))
                .map(|v| &w[v]),
        )
    };
    let third = &(eps * &total) / &three;
    let m = (0..li)
        .find(|&q| class_weight(q) < third)
        .expect("some residue class is light");
    let d_m_weight = class_weight(m);
    let mut class: Vec<Option<i64>> = vec![None; n];
    for v in 0..n {
        if let Some(b) = bucket_of[v] {
            if b.rem_euclid(li) == m {
                removed[v] = true;
            } else {
                class[v] = Some((b - m).div_euclid(li));
            }
        }
    }
    let mut f_weight = ratio::zero();
    let mut f_members = Vec::new();
    for y in 0..n {
        let Some(cj) = class[y] else { continue };
        let heavier_neighbor = g
            .neighbors(y)
            .iter()
            .any(|&x| class[x].is_some_and(|ci| ci < cj));
        if heavier_neighbor {
            f_members.push(y);
            f_weight += &w[y];
        }
    }
    for &y in &f_members {
        removed[y] = true;
    }
    let mut s_members: Vec<usize> = (0..n).filter(|&v| removed[v]).collect();
    let mut pieces = Vec::new();
    for t in g.components_avoiding(&removed) {
        let cut = oracle
            .separate(g, &t, w, &delta, k)
            .map_err(|e| HierError::Oracle {
                oracle: oracle.name().into(),
                size: t.len(),
                msg: e.to_string(),
            })?;
        let weight = ratio::sum(t.iter().map(|&v| &w[v]));
        let cut_weight = ratio::sum(cut.iter().map(|&v| &w[v]));
        pieces.push(PieceLog {
            size: t.len(),
            within_third: cut_weight <= eps * &weight / &three,
            weight,
            cut_weight,
        });
        s_members.extend(cut.iter().copied());
    }
    let s = VertexSet::from_unsorted(s_members);
    let weight = ratio::sum(s.iter().map(|&v| &w[v]));
    let largest = max_component_after(g, &s.mask(n));
    if largest > k {
        return Err(HierError::ComponentTooLarge { size: largest, k });
    }
    let bound = eps * &total;
    if weight > bound {
        return Err(HierError::BoundViolated {
            weight: ratio::fmt_ratio(&weight),
            bound: ratio::fmt_ratio(&bound),
        });
    }
    Ok(WeightedSeparation {
        s,
        weight,
        total,
        l,
        delta,
        m: m as usize,
        zero_weight,
        d_m_weight,
        f_weight,
        oracle: oracle.name().into(),
        pieces,
    })
}

/// A map from vertices to finitely supported probability vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "WitnessDoc", try_from = "WitnessDoc")]
pub struct PropAWitness {
    pub radius: usize,
    pub vectors: BTreeMap<usize, BTreeMap<usize, Ratio>>,
}

#[derive(Serialize, Deserialize)]
struct WitnessDoc {
    schema: String,
    radius: usize,
    vectors: Vec<(usize, Vec<(usize, String)>)>,
}

impl From<PropAWitness> for WitnessDoc {
    fn from(w: PropAWitness) -> Self {
        WitnessDoc {
            schema: WITNESS_SCHEMA.into(),
            radius: w.radius,
            vectors: w
                .vectors
                .into_iter()
                .map(|(x, v)| (x, v.iter().map(|(z, r)| (*z, ratio::fmt_ratio(r))).collect()))
                .collect(),
        }
    }
}

impl TryFrom<WitnessDoc> for PropAWitness {
    type Error = String;

    fn try_from(d: WitnessDoc) -> Result<Self, String> {
        if d.schema != WITNESS_SCHEMA {
            return Err(format!("unknown schema {}", d.schema));
        }
        let mut vectors = BTreeMap::new();
        for (x, entries) in d.vectors {
            let mut v = BTreeMap::new();
            for (z, r) in entries {
                let r = ratio::parse_ratio(&r).map_err(|e| e.to_string())?;
                if v.insert(z, r).is_some() {
                    return Err(format!("duplicate entry {z} in vector of {x}"));
                }
            }
            if vectors.insert(x, v).is_some() {
                return Err(format!("duplicate vector for {x}"));
            }
        }
        Ok(PropAWitness {
            radius: d.radius,
            vectors,
        })
    }
}

impl PropAWitness {
    pub fn l1_distance(&self, x: usize, y: usize) -> Ratio {
        let empty = BTreeMap::new();
        let a = self.vectors.get(&x).unwrap_or(&empty);
        let b = self.vectors.get(&y).unwrap_or(&empty);
        let mut d = ratio::zero();
        for (z, va) in a {
            match b.get(z) {
                Some(vb) => d += ratio::abs_diff(va, vb),
                None => d += va,
            }
        }
        for (z, vb) in b {
            if !a.contains_key(z) {
                d += vb;
            }
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub normalized: bool,
    pub nonnegative: bool,
    pub support_within_radius: bool,
    #[serde(with = "ratio::serde_ratio")]
    pub max_edge_l1: Ratio,
    pub worst_edge: Option<(usize, usize)>,
    pub passes: bool,
    pub failures: Vec<String>,
}

/// Checks normalization, support radius, and `max ‖Θ(x) − Θ(y)‖₁ < ε` over
/// edges with both endpoints in the witness domain.
pub fn validate_witness(g: &Graph, theta: &PropAWitness, eps: &Ratio, r: usize) -> WitnessReport {
    let mut failures = Vec::new();
    let mut normalized = true;
    let mut nonnegative = true;
    let mut support_ok = true;
    for (&x, vec) in &theta.vectors {
        if x >= g.n() {
            failures.push(format!("vertex {x} out of range"));
            support_ok = false;
            continue;
        }
        if vec.values().any(|v| v.is_negative()) {
            nonnegative = false;
            failures.push(format!("negative entry in Θ({x})"));
        }
        if ratio::sum(vec.values()) != ratio::one() {
            normalized = false;
            failures.push(format!("Θ({x}) does not sum to 1"));
        }
        let dist = g.distances_from(&[x], r);
        for &z in vec.keys() {
            if z >= g.n() || dist[z].is_none() {
                support_ok = false;
                failures.push(format!("Θ({x}) charges {z} outside B_{r}({x})"));
            }
        }
    }
    let mut max = ratio::zero();
    let mut worst = None;
    for (x, y) in g.edges() {
        if !theta.vectors.contains_key(&x) || !theta.vectors.contains_key(&y) {
            continue;
        }
        let d = theta.l1_distance(x, y);
        if worst.is_none() || d > max {
            max = d;
            worst = Some((x, y));
        }
    }
    if &max >= eps {
        failures.push(format!(
            "edge {:?} has ℓ₁ difference {} ≥ ε",
            worst,
            ratio::fmt_ratio(&max)
        ));
    }
    WitnessReport {
        passes: failures.is_empty(),
        normalized,
        nonnegative,
        support_within_radius: support_ok,
        max_edge_l1: max,
        worst_edge: worst,
        failures,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeBound {
    pub edge: (usize, usize),
    #[serde(with = "ratio::serde_ratio")]
    pub bound: Ratio,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureWitness {
    pub witness: PropAWitness,
    /// `F(H)`: measure of the separators having `H` as a component.
    pub components: Vec<(VertexSet, String)>,
    #[serde(with = "ratio::serde_ratio_vec")]
    pub c: Vec<Ratio>,
    pub edge_bounds: Vec<EdgeBound>,
    #[serde(with = "ratio::serde_ratio")]
    pub max_bound: Ratio,
    #[serde(with = "ratio::serde_ratio")]
    pub max_marginal: Ratio,
    /// `max marginal ≤ ε/4` for the requested ε, when one was given.
    pub regime_ok: Option<bool>,
    /// Components containing frontier vertices, folded into `c_x`.
    pub excluded_components: usize,
}

pub struct ComponentWitness {
    pub witness: PropAWitness,
    pub c: Vec<Ratio>,
    pub edge_bounds: Vec<EdgeBound>,
    pub max_bound: Ratio,
}

/// `Θ_x = Σ_{H ∋ x} F(H) p_H + c_x δ_x` with `c_x = 1 − Σ_{H ∋ x} F(H)` and
/// per-edge bounds `c_x + c_y + Σ_{H∋x,∌y} F(H) + Σ_{H∌x,∋y} F(H)`.
pub fn witness_from_components(
    g: &Graph,
    f: &BTreeMap<VertexSet, Ratio>,
    radius: usize,
) -> ComponentWitness {
    let n = g.n();
    let mut covered = vec![ratio::zero(); n];
    let mut vectors: BTreeMap<usize, BTreeMap<usize, Ratio>> =
        (0..n).map(|x| (x, BTreeMap::new())).collect();
    let mut containing: Vec<Vec<&VertexSet>> = vec![Vec::new(); n];
    for (h, fh) in f {
        let share = fh / ratio::int(h.len() as i64);
        for &x in h.iter() {
            covered[x] += fh;
            containing[x].push(h);
            let vx = vectors.get_mut(&x).expect("all vertices present");
            for &z in h.iter() {
                *vx.entry(z).or_insert_with(ratio::zero) += &share;
            }
        }
    }
    let c: Vec<Ratio> = covered.iter().map(|cv| ratio::one() - cv).collect();
    for x in 0..n {
        if !c[x].is_zero() {
            *vectors
                .get_mut(&x)
                .expect("present")
                .entry(x)
                .or_insert_with(ratio::zero) += &c[x];
        }
    }
    let mut edge_bounds = Vec::new();
    let mut max_bound = ratio::zero();
    for (x, y) in g.edges() {
        let mut b = &c[x] + &c[y];
        for h in &containing[x] {
            if !h.contains(y) {
                b += &f[*h];
            }
        }
        for h in &containing[y] {
            if !h.contains(x) {
                b += &f[*h];
            }
        }
        if b > max_bound {
            max_bound = b.clone();
        }
        edge_bounds.push(EdgeBound {
            edge: (x, y),
            bound: b,
        });
    }
    ComponentWitness {
        witness: PropAWitness { radius, vectors },
        c,
        edge_bounds,
        max_bound,
    }
}

/// [`witness_from_components`] with `F(H)` the measure of the separators
/// having `H` as a component.
pub fn witness_from_measure(
    w: &Window,
    mu: &SeparatorMeasure,
    target_eps: Option<&Ratio>,
) -> Result<MeasureWitness, HierError> {
    let g = &w.host;
    let n = g.n();
    mu.validate(g).map_err(HierError::Lp)?;
    let mut f: BTreeMap<VertexSet, Ratio> = BTreeMap::new();
    let mut excluded = 0;
    for atom in &mu.atoms {
        for comp in g.components_avoiding(&atom.separator.mask(n)) {
            if comp.iter().any(|&v| w.truncated[v]) {
                excluded += 1;
                continue;
            }
            *f.entry(comp).or_insert_with(ratio::zero) += &atom.weight;
        }
    }
    let built = witness_from_components(g, &f, mu.k);
    let max_marginal = mu.max_marginal(n);
    let regime_ok = target_eps.map(|e| &max_marginal * ratio::int(4) <= *e);
    Ok(MeasureWitness {
        witness: built.witness,
        components: f
            .into_iter()
            .map(|(h, fh)| (h, ratio::fmt_ratio(&fh)))
            .collect(),
        c: built.c,
        edge_bounds: built.edge_bounds,
        max_bound: built.max_bound,
        max_marginal,
        regime_ok,
        excluded_components: excluded,
    })
}

/// Nearest vertex of `h` for every vertex, ties broken by the smallest id.
pub fn nearest_projection(g: &Graph, h: &VertexSet) -> Vec<Option<usize>> {
    let n = g.n();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut frontier: Vec<usize> = h.as_slice().to_vec();
    for &v in &frontier {
        label[v] = Some(v);
    }
    while !frontier.is_empty() {
        let mut next: BTreeMap<usize, usize> = BTreeMap::new();
        for &v in &frontier {
            let lv = label[v].expect("labelled");
            for &u in g.neighbors(v) {
                if label[u].is_none() {
                    next.entry(u)
                        .and_modify(|cur| *cur = (*cur).min(lv))
                        .or_insert(lv);
                }
            }
        }
        frontier = next.keys().copied().collect();
        for (u, lv) in next {
            label[u] = Some(lv);
        }
    }
    label
}

/// `Ω(x)(z) = Σ_{t ∈ τ⁻¹(z)} Θ(x)(t)` for `x ∈ H`, τ the nearest-vertex
/// projection onto `H`. The radius doubles.
pub fn restrict_witness(g: &Graph, h: &VertexSet, theta: &PropAWitness) -> PropAWitness {
    let tau = nearest_projection(g, h);
    let mut vectors = BTreeMap::new();
    for &x in h.iter() {
        let mut omega: BTreeMap<usize, Ratio> = BTreeMap::new();
        if let Some(vec) = theta.vectors.get(&x) {
            for (&t, val) in vec {
                let z = tau[t].expect("support reachable from H");
                *omega.entry(z).or_insert_with(ratio::zero) += val;
            }
        }
        vectors.insert(x, omega);
    }
    PropAWitness {
        radius: 2 * theta.radius,
        vectors,
    }
}

/// Smallest `i ≤ r_max` with `|B_{i+1}(x)| / |B_i(x)| < 1 + ε` for every interior `x`.
pub fn growth_probe(w: &Window, r_max: usize, eps: &Ratio) -> Result<Option<usize>, HierError> {
    if w.margin < r_max.saturating_add(1) {
        return Err(GraphError::MarginViolation {
            vertex: w.interior.as_slice().first().copied().unwrap_or(0),
            radius: r_max + 1,
        }
        .into());
    }
    let g = &w.host;
    let mut sizes: Vec<Vec<usize>> = Vec::with_capacity(w.interior.len());
    for &x in w.interior.iter() {
        let dist = g.distances_from(&[x], r_max + 1);
        let mut counts = vec![0usize; r_max + 2];
        for d in dist.into_iter().flatten() {
            counts[d] += 1;
        }
        let mut acc = 0;
        for c in counts.iter_mut() {
            acc += *c;
            *c = acc;
        }
        sizes.push(counts);
    }
    let bound = ratio::one() + eps;
    for i in 0..=r_max {
        let ok = sizes
            .iter()
            .all(|s| ratio::ratio(s[i + 1] as i64, s[i] as i64) < bound);
        if ok {
            return Ok(Some(i));
        }
    }
    Ok(None)
}
