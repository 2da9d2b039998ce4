//! Graph families: tori, grids, trees, Cayley windows of Zᵈ and their lattice
//! quotients, random regular graphs, the expander chain, edge colourings.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::defect_below_delta;
use crate::folner::{function_defect, FolnerError, FolnerFunction};
use crate::graph::{Graph, GraphError, VertexSet, Window};
use crate::ratio::{self, Ratio};

pub const MAX_VERTICES: usize = 4_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("{0} vertices exceeds the size cap")]
    TooLarge(u128),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("generating set is not symmetric: {0:?} has no inverse")]
    NotSymmetric(Vec<i64>),
    #[error("quotient is infinite (lattice rank {rank} < dimension {dim})")]
    InfiniteQuotient { rank: usize, dim: usize },
    #[error("support vertex {0} lies outside the window interior")]
    SupportLeak(usize),
    #[error("sequence condition n·2^(n+1) < a_n fails at n = {n} (a_n = {a})")]
    SequenceTooSlow { n: usize, a: u64 },
    #[error("expander {0} is not connected")]
    Disconnected(usize),
    #[error("no simple pairing found after {0} attempts")]
    PairingExhausted(usize),
    #[error("integer overflow in lattice arithmetic")]
    Overflow,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Folner(#[from] FolnerError),
}

fn cap(count: u128) -> Result<usize, GenError> {
    if count > MAX_VERTICES as u128 {
        Err(GenError::TooLarge(count))
    } else {
        Ok(count as usize)
    }
}

pub fn make_path(n: usize) -> Graph {
    Graph::from_edges(n, 2, (1..n).map(|i| (i - 1, i))).expect("valid path")
}

/// Cycle `C_n`; panics for `n < 3`.
pub fn make_cycle(n: usize) -> Graph {
    assert!(n >= 3, "cycles need at least 3 vertices");
    Graph::from_edges(n, 2, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle")
}

/// `rows × cols` grid, vertex `r·cols + c`.
pub fn make_grid(rows: usize, cols: usize) -> Graph {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    Graph::from_edges(rows * cols, 4, edges).expect("valid grid")
}

/// Torus `(Z/n)^d`, vertex ids in mixed radix with the first coordinate slowest.
pub fn make_torus(d: usize, n: usize) -> Result<Graph, GenError> {
    if n < 3 {
        return Err(GenError::Invalid(format!("torus side {n} < 3")));
    }
    if d == 0 {
        return Err(GenError::Invalid("torus dimension 0".into()));
    }
    let size = cap((n as u128).checked_pow(d as u32).unwrap_or(u128::MAX))?;
    let mut g = Graph::empty(size, 2 * d);
    for v in 0..size {
        let mut stride = 1;
        for _ in 0..d {
            let digit = (v / stride) % n;
            let up = v - digit * stride + ((digit + 1) % n) * stride;
            if !g.has_edge(v, up) {
                g.add_edge(v, up)?;
            }
            stride *= n;
        }
    }
    Ok(g)
}

/// Ball of depth `depth` in the `deg`-regular tree, root 0, ids in BFS order.
/// The deepest layer is the frontier.
pub fn make_tree_window(deg: usize, depth: usize, margin: usize) -> Result<Window, GenError> {
    if deg < 2 {
        return Err(GenError::Invalid(format!("tree degree {deg} < 2")));
    }
    let mut count: u128 = 1;
    let mut layer: u128 = 1;
    for i in 0..depth {
        layer *= if i == 0 { deg as u128 } else { deg as u128 - 1 };
        count += layer;
        cap(count)?;
    }
    let n = count as usize;
    let mut g = Graph::empty(n, deg);
    let mut depth_of = vec![0usize; n];
    let mut next = 1;
    for v in 0..n {
        if depth_of[v] == depth {
            continue;
        }
        let children = if v == 0 { deg } else { deg - 1 };
        for _ in 0..children {
            g.add_edge(v, next)?;
            depth_of[next] = depth_of[v] + 1;
            next += 1;
        }
    }
    let truncated = depth_of.iter().map(|&d| d == depth).collect();
    Ok(Window::with_margin(g, truncated, margin))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CayleyWindowSpec {
    pub generators: Vec<Vec<i64>>,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    pub margin: usize,
}

impl CayleyWindowSpec {
    pub fn standard(d: usize, half: i64, margin: usize) -> Self {
        let mut generators = Vec::new();
        for i in 0..d {
            for s in [1, -1] {
                let mut e = vec![0; d];
                e[i] = s;
                generators.push(e);
            }
        }
        CayleyWindowSpec {
            generators,
            lo: vec![-half; d],
            hi: vec![half; d],
            margin,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn validate(&self) -> Result<(), GenError> {
        let d = self.dim();
        if d == 0 || self.hi.len() != d {
            return Err(GenError::Invalid("box bounds must share a positive dimension".into()));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| l > h) {
            return Err(GenError::Invalid("empty box".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for g in &self.generators {
            if g.len() != d {
                return Err(GenError::Invalid(format!("generator {g:?} has wrong dimension")));
            }
            if g.iter().all(|&c| c == 0) {
                return Err(GenError::Invalid("zero generator".into()));
            }
            if !seen.insert(g.clone()) {
                return Err(GenError::Invalid(format!("duplicate generator {g:?}")));
            }
        }
        for g in &self.generators {
            let inv: Vec<i64> = g.iter().map(|c| -c).collect();
            if !seen.contains(&inv) {
                return Err(GenError::NotSymmetric(g.clone()));
            }
        }
        Ok(())
    }
}

/// A box of the Cayley graph of Zᵈ together with its coordinates.
#[derive(Clone, Debug)]
pub struct CayleyWindow {
    pub spec: CayleyWindowSpec,
    pub window: Window,
    pub coords: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
}

impl CayleyWindow {
    pub fn id(&self, p: &[i64]) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn coord(&self, v: usize) -> &[i64] {
        &self.coords[v]
    }

    pub fn graph(&self) -> &Graph {
        &self.window.host
    }
}

pub fn cayley_window(spec: &CayleyWindowSpec) -> Result<CayleyWindow, GenError> {
    spec.validate()?;
    let d = spec.dim();
    let sides: Vec<u128> = (0..d).map(|i| (spec.hi[i] - spec.lo[i] + 1) as u128).collect();
    let n = cap(sides.iter().try_fold(1u128, |a, &s| a.checked_mul(s)).unwrap_or(u128::MAX))?;
    let mut coords = Vec::with_capacity(n);
    let mut p = spec.lo.clone();
    for _ in 0..n {
        coords.push(p.clone());
        for i in (0..d).rev() {
            if p[i] < spec.hi[i] {
                p[i] += 1;
                break;
            }
            p[i] = spec.lo[i];
        }
    }
    let index: HashMap<Vec<i64>, usize> =
        coords.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let mut g = Graph::empty(n, spec.generators.len());
    let mut truncated = vec![false; n];
    for v in 0..n {
        for gen in &spec.generators {
            let q: Vec<i64> = coords[v].iter().zip(gen).map(|(a, b)| a + b).collect();
            match index.get(&q) {
                Some(&u) if u > v => g.add_edge(v, u)?,
                Some(_) => {}
                None => truncated[v] = true,
            }
        }
    }
    let window = Window::with_margin(g, truncated, spec.margin);
    if window.interior.is_empty() {
        return Err(GenError::Invalid("margin leaves an empty interior".into()));
    }
    Ok(CayleyWindow {
        spec: spec.clone(),
        window,
        coords,
        index,
    })
}

/// Standard Z² window on `[−half, half]²`.
pub fn z2_window(half: i64, margin: usize) -> CayleyWindow {
    cayley_window(&CayleyWindowSpec::standard(2, half, margin)).expect("valid Z² window")
}

/// A subgroup of Zᵈ stored in Hermite normal form (echelon rows, positive
/// pivots, entries above each pivot reduced into `[0, pivot)`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dim: usize,
    rows: Vec<Vec<i64>>,
    pivots: Vec<usize>,
}

impl Lattice {
    pub fn new(dim: usize, basis: &[Vec<i64>]) -> Result<Self, GenError> {
        if basis.iter().any(|b| b.len() != dim) {
            return Err(GenError::Invalid("lattice vector of wrong dimension".into()));
        }
        let mut m: Vec<Vec<i128>> = basis
            .iter()
            .map(|r| r.iter().map(|&x| x as i128).collect())
            .collect();
        let mut pivots = Vec::new();
        let mut pr = 0;
        for c in 0..dim {
            loop {
                let best = (pr..m.len())
                    .filter(|&i| m[i][c] != 0)
                    .min_by_key(|&i| m[i][c].abs());
                let Some(b) = best else { break };
                m.swap(pr, b);
                let mut done = true;
                for i in pr + 1..m.len() {
                    if m[i][c] != 0 {
                        let q = m[i][c] / m[pr][c];
                        for j in 0..dim {
                            m[i][j] -= q * m[pr][j];
                        }
                        if m[i][c] != 0 {
                            done = false;
                        }
                    }
                }
                if done {
                    break;
                }
            }
            if pr < m.len() && m[pr][c] != 0 {
                if m[pr][c] < 0 {
                    m[pr].iter_mut().for_each(|x| *x = -*x);
                }
                for i in 0..pr {
                    let q = m[i][c].div_euclid(m[pr][c]);
                    for j in 0..dim {
                        m[i][j] -= q * m[pr][j];
                    }
                }
                pivots.push(c);
                pr += 1;
            }
        }
        m.truncate(pr);
        let rows = m
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|x| i64::try_from(x).map_err(|_| GenError::Overflow))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Lattice { dim, rows, pivots })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn hnf(&self) -> &[Vec<i64>] {
        &self.rows
    }

    pub fn is_finite(&self) -> bool {
        self.rank() == self.dim
    }

    /// Index `[Zᵈ : H]` when finite.
    pub fn index(&self) -> Option<u128> {
        if !self.is_finite() {
            return None;
        }
        Some(self.rows.iter().enumerate().map(|(i, r)| r[i] as u128).product())
    }

    /// Canonical coset representative: pivot coordinates in `[0, pivot)`.
    pub fn reduce(&self, v: &[i64]) -> Vec<i64> {
        let mut v = v.to_vec();
        for (row, &c) in self.rows.iter().zip(&self.pivots) {
            let q = v[c].div_euclid(row[c]);
            if q != 0 {
                for j in 0..self.dim {
                    v[j] -= q * row[j];
                }
            }
        }
        v
    }

    /// Mixed-radix id of a coset of a finite-index lattice.
    pub fn coset_id(&self, v: &[i64]) -> Option<usize> {
        if !self.is_finite() {
            return None;
        }
        let r = self.reduce(v);
        let mut id = 0usize;
        for i in 0..self.dim {
            id = id * self.rows[i][i] as usize + r[i] as usize;
        }
        Some(id)
    }

    pub fn coset_rep(&self, mut id: usize) -> Vec<i64> {
        let mut v = vec![0; self.dim];
        for i in (0..self.dim).rev() {
            let h = self.rows[i][i] as usize;
            v[i] = (id % h) as i64;
            id /= h;
        }
        v
    }
}

/// Schreier graph of `Zᵈ / H`; loops and parallel edges are dropped.
pub fn schreier_quotient(spec: &CayleyWindowSpec, basis: &[Vec<i64>]) -> Result<Graph, GenError> {
    spec.validate()?;
    let lat = Lattice::new(spec.dim(), basis)?;
    let n = match lat.index() {
        Some(i) => cap(i)?,
        None => {
            return Err(GenError::InfiniteQuotient {
                rank: lat.rank(),
                dim: lat.dim(),
            })
        }
    };
    let mut g = Graph::empty(n, spec.generators.len());
    for v in 0..n {
        let rep = lat.coset_rep(v);
        for gen in &spec.generators {
            let q: Vec<i64> = rep.iter().zip(gen).map(|(a, b)| a + b).collect();
            let u = lat.coset_id(&q).expect("finite lattice");
            if u != v && !g.has_edge(u, v) {
                g.add_edge(u, v)?;
            }
        }
    }
    Ok(g)
}

/// A function on the cosets `Zᵈ / H`, keyed by canonical representatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CosetFunction {
    pub lattice: Lattice,
    pub values: BTreeMap<Vec<i64>, Ratio>,
}

impl CosetFunction {
    pub fn mass(&self) -> Ratio {
        ratio::sum(self.values.values())
    }

    pub fn get(&self, coset: &[i64]) -> Ratio {
        self.values
            .get(&self.lattice.reduce(coset))
            .cloned()
            .unwrap_or_else(Ratio::zero)
    }

    /// Defect over ordered pairs `(c, c+σ)` of the Schreier multigraph.
    pub fn defect(&self, generators: &[Vec<i64>]) -> Ratio {
        let mut tv = Ratio::zero();
        for (c, fc) in &self.values {
            for g in generators {
                let q: Vec<i64> = c.iter().zip(g).map(|(a, b)| a + b).collect();
                match self.values.get(&self.lattice.reduce(&q)) {
                    Some(fq) => tv += ratio::abs_diff(fc, fq),
                    None => tv += fc * ratio::int(2),
                }
            }
        }
        tv / self.mass()
    }

    /// The same function on the vertices of [`schreier_quotient`].
    pub fn to_schreier_function(&self) -> Result<FolnerFunction, GenError> {
        let entries = self
            .values
            .iter()
            .map(|(c, v)| {
                self.lattice
                    .coset_id(c)
                    .map(|id| (id, v.clone()))
                    .ok_or(GenError::InfiniteQuotient {
                        rank: self.lattice.rank(),
                        dim: self.lattice.dim(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FolnerFunction::new(entries)?)
    }
}

/// `f^H(Hz) = Σ_{x ∈ Hz} f(x)`.
pub fn pushforward_function(
    cw: &CayleyWindow,
    f: &FolnerFunction,
    lattice: &Lattice,
) -> Result<CosetFunction, GenError> {
    if lattice.dim() != cw.spec.dim() {
        return Err(GenError::Invalid("lattice and window dimensions differ".into()));
    }
    let mut values: BTreeMap<Vec<i64>, Ratio> = BTreeMap::new();
    for (v, fv) in f.iter() {
        if !cw.window.interior.contains(v) {
            return Err(GenError::SupportLeak(v));
        }
        *values
            .entry(lattice.reduce(cw.coord(v)))
            .or_insert_with(Ratio::zero) += fv;
    }
    Ok(CosetFunction {
        lattice: lattice.clone(),
        values,
    })
}

/// Simple `d`-regular graph from the pairing model, rejecting non-simple pairings.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<Graph, GenError> {
    const ATTEMPTS: usize = 10_000;
    if (n * d) % 2 == 1 {
        return Err(GenError::Invalid(format!("n·d = {} is odd", n * d)));
    }
    if d >= n && n > 0 {
        return Err(GenError::Invalid(format!("degree {d} ≥ n = {n}")));
    }
    cap(n as u128)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<usize> = (0..n * d).map(|i| i / d).collect();
    'attempt: for _ in 0..ATTEMPTS {
        points.shuffle(&mut rng);
        let mut g = Graph::empty(n, d);
        for pair in points.chunks(2) {
            if g.add_edge(pair[0], pair[1]).is_err() {
                continue 'attempt;
            }
        }
        return Ok(g);
    }
    Err(GenError::PairingExhausted(ATTEMPTS))
}

/// Second-smallest Laplacian eigenvalue.
pub fn algebraic_connectivity(g: &Graph) -> f64 {
    crate::spectra::laplacian_spectrum(g)
        .map(|s| s.values.get(1).copied().unwrap_or(0.0))
        .unwrap_or(0.0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLog {
    pub index: usize,
    pub offset: usize,
    pub size: usize,
    pub diameter: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeLog {
    pub from_block: usize,
    pub y: usize,
    pub x_next: usize,
    /// Distance inside the block between its entry and exit vertices.
    pub block_distance: usize,
    pub required: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionLog {
    pub n: usize,
    pub a_n: u64,
    pub skipped_blocks: Vec<usize>,
    pub chosen: Vec<usize>,
    pub per_block: Vec<usize>,
    pub maximal: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainLog {
    pub blocks: Vec<BlockLog>,
    pub bridges: Vec<BridgeLog>,
    pub selections: Vec<SelectionLog>,
    /// `(n, anchor, first path vertex)`.
    pub paths: Vec<(usize, usize, usize)>,
}

impl ChainLog {
    /// Checks `a_n · |X_n ∩ G_k| ≤ |V(G_k)|` for every recorded selection.
    pub fn packing_inequality_holds(&self) -> bool {
        self.selections.iter().all(|s| {
            s.per_block
                .iter()
                .zip(&self.blocks)
                .all(|(&cnt, b)| s.a_n as u128 * cnt as u128 <= b.size as u128)
        })
    }
}

/// Chains the expanders by bridges, selects the separated sets `X_n` and
/// attaches a path of length `n` at each selected vertex.
pub fn amealm_chain(
    expanders: &[Graph],
    a: &[u64],
    seed: u64,
) -> Result<(Graph, ChainLog), GenError> {
    for (i, &an) in a.iter().enumerate() {
        let n = i + 1;
        let lhs = (n as u128).checked_shl(n as u32 + 1).unwrap_or(u128::MAX);
        if n >= 120 || lhs >= an as u128 {
            return Err(GenError::SequenceTooSlow { n, a: an });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = expanders.iter().map(|g| g.n()).sum();
    let mut g = Graph::empty(total, usize::MAX);
    let mut blocks = Vec::new();
    let mut block_of = Vec::with_capacity(total);
    let mut offset = 0;
    for (k, e) in expanders.iter().enumerate() {
        if !e.is_connected() || e.n() == 0 {
            return Err(GenError::Disconnected(k));
        }
        for (u, v) in e.edges() {
            g.add_edge(offset + u, offset + v)?;
        }
        blocks.push(BlockLog {
            index: k,
            offset,
            size: e.n(),
            diameter: e.diameter().expect("connected"),
        });
        block_of.extend(std::iter::repeat_n(k, e.n()));
        offset += e.n();
    }
    let mut bridges = Vec::new();
    let mut entry = expanders
        .first()
        .map(|e| rng.gen_range(0..e.n()))
        .unwrap_or(0);
    for k in 0..expanders.len().saturating_sub(1) {
        let e = &expanders[k];
        let b = &blocks[k];
        let required = (k + 1).min(b.diameter / 3);
        let dist = e.distances_from(&[entry], usize::MAX);
        let mut far: Vec<usize> = (0..e.n())
            .filter(|&v| dist[v].is_some_and(|d| d >= required))
            .collect();
        far.shuffle(&mut rng);
        let y = far[0];
        let next = rng.gen_range(0..expanders[k + 1].n());
        let x_next = blocks[k + 1].offset + next;
        g.add_edge(b.offset + y, x_next)?;
        bridges.push(BridgeLog {
            from_block: k,
            y: b.offset + y,
            x_next,
            block_distance: dist[y].expect("reachable"),
            required,
        });
        entry = next;
    }
    let mut selections = Vec::new();
    let mut anchors: Vec<(usize, usize)> = Vec::new();
    for (i, &an) in a.iter().enumerate() {
        let n = i + 1;
        let reach = (2 * an).min(usize::MAX as u64 / 2) as usize;
        let skipped: Vec<usize> = blocks
            .iter()
            .filter(|b| an as u128 * 3 > b.diameter as u128)
            .map(|b| b.index)
            .collect();
        let eligible = |v: usize| !skipped.contains(&block_of[v]);
        let mut blocked = vec![false; total];
        let mut chosen = Vec::new();
        for v in 0..total {
            if !eligible(v) || blocked[v] {
                continue;
            }
            chosen.push(v);
            let d = g.distances_from(&[v], reach);
            for u in 0..total {
                if d[u].is_some() {
                    blocked[u] = true;
                }
            }
        }
        let maximal = if chosen.is_empty() {
            (0..total).all(|v| !eligible(v))
        } else {
            let d = g.distances_from(&chosen, reach);
            (0..total).all(|v| !eligible(v) || d[v].is_some())
        };
        let mut per_block = vec![0; blocks.len()];
        for &v in &chosen {
            per_block[block_of[v]] += 1;
        }
        anchors.extend(chosen.iter().map(|&v| (n, v)));
        selections.push(SelectionLog {
            n,
            a_n: an,
            skipped_blocks: skipped,
            chosen,
            per_block,
            maximal,
        });
    }
    let mut paths = Vec::new();
    for (n, v) in anchors {
        let first = g.add_vertices(n);
        g.add_edge(v, first)?;
        for j in 1..n {
            g.add_edge(first + j - 1, first + j)?;
        }
        paths.push((n, v, first));
    }
    let d = g.max_degree();
    g.set_degree_bound(d)?;
    Ok((
        g,
        ChainLog {
            blocks,
            bridges,
            selections,
            paths,
        },
    ))
}

/// The `k×k` block of a `side×side` grid with top-left corner `(r0, c0)`.
pub fn grid_block(side: usize, r0: usize, c0: usize, k: usize) -> VertexSet {
    (r0..r0 + k)
        .flat_map(|r| (c0..c0 + k).map(move |c| r * side + c))
        .collect()
}

/// A near-constant function `(1−t)·uniform + t·bump` on the `side×side` grid,
/// with `t` halved until the defect is below `δ(eps)`. The bump is a weighted
/// sum of one to four random blocks.
pub fn admissible_mixture(side: usize, eps: &Ratio, seed: u64) -> Result<(Graph, FolnerFunction), GenError> {
    if side < 8 {
        return Err(GenError::Invalid(format!("grid side {side} < 8")));
    }
    let g = make_grid(side, side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bump = Vec::new();
    for _ in 0..rng.gen_range(1..5) {
        let k = rng.gen_range(3..side / 2);
        let r0 = rng.gen_range(0..=side - k);
        let c0 = rng.gen_range(0..=side - k);
        let w = ratio::int(rng.gen_range(1..10));
        for &v in grid_block(side, r0, c0, k).iter() {
            bump.push((v, &w / ratio::int((k * k) as i64)));
        }
    }
    let bump = FolnerFunction::new(bump)?.normalized();
    let tv = function_defect(&g, &bump)?;
    let mut t = ratio::ratio(1, 2);
    while !defect_below_delta(&(&t * &tv), eps) {
        t /= ratio::int(2);
    }
    let uniform = FolnerFunction::uniform(&VertexSet::all(side * side))?;
    let p = uniform.scale(&(ratio::one() - &t))?.add(&bump.scale(&t)?);
    Ok((g, p))
}

/// Proper edge colouring; colour `c` acts as the partial involution swapping
/// the endpoints of each `c`-coloured edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeColoring {
    pub colors: BTreeMap<(usize, usize), usize>,
    pub num_colors: usize,
    /// `involutions[c][x]` is the partner of `x` under colour `c`.
    pub involutions: Vec<Vec<Option<usize>>>,
}

impl EdgeColoring {
    pub fn color(&self, u: usize, v: usize) -> Option<usize> {
        self.colors.get(&(u.min(v), u.max(v))).copied()
    }

    pub fn is_proper(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.colors
            .iter()
            .all(|(&(u, v), &c)| seen.insert((u, c)) && seen.insert((v, c)))
    }
}

/// Greedy colouring in edge order; uses at most `2d − 1` colours.
pub fn edge_color_involutions(g: &Graph) -> EdgeColoring {
    let mut used: Vec<Vec<usize>> = vec![Vec::new(); g.n()];
    let mut colors = BTreeMap::new();
    let mut num_colors = 0;
    for (u, v) in g.edges() {
        let c = (0..)
            .find(|c| !used[u].contains(c) && !used[v].contains(c))
            .expect("unbounded range");
        used[u].push(c);
        used[v].push(c);
        colors.insert((u, v), c);
        num_colors = num_colors.max(c + 1);
    }
    let mut involutions = vec![vec![None; g.n()]; num_colors];
    for (&(u, v), &c) in &colors {
        involutions[c][u] = Some(v);
        involutions[c][v] = Some(u);
    }
    EdgeColoring {
        colors,
        num_colors,
        involutions,
    }
}

/// Uniform function on an axis-aligned box `[lo, lo + side)` of a Cayley window.
pub fn box_function(cw: &CayleyWindow, lo: &[i64], side: i64) -> Result<FolnerFunction, GenError> {
    let d = cw.spec.dim();
    let mut members = Vec::new();
    let count = (side as usize).pow(d as u32);
    for idx in 0..count {
        let mut p = lo.to_vec();
        let mut rest = idx;
        for c in p.iter_mut().rev() {
            *c += (rest % side as usize) as i64;
            rest /= side as usize;
        }
        members.push(cw.id(&p).ok_or_else(|| GenError::Invalid(format!("{p:?} outside box")))?);
    }
    Ok(FolnerFunction::uniform(&VertexSet::from_unsorted(members))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folner::function_defect;
    use crate::ratio::int;
    use proptest::prelude::*;

    #[test]
    fn basic_families() {
        let c4 = make_cycle(4);
        assert_eq!(c4.edge_count(), 4);
        let t = make_torus(2, 6).unwrap();
        assert_eq!(t.n(), 36);
        assert!((0..36).all(|v| t.degree(v) == 4));
        assert!(make_torus(2, 2).is_err());
        assert!(matches!(make_torus(3, 1000), Err(GenError::TooLarge(_))));
        let p = make_path(5);
        assert_eq!(p.edge_count(), 4);
    }

    #[test]
    fn tree_window_interior() {
        let w = make_tree_window(3, 5, 2).unwrap();
        let depth = w.host.distances_from(&[0], usize::MAX);
        let expected: Vec<usize> = (0..w.host.n())
            .filter(|&v| depth[v].unwrap() <= 3)
            .collect();
        assert_eq!(w.interior.as_slice(), expected.as_slice());
        assert_eq!(w.host.n(), 1 + 3 + 6 + 12 + 24 + 48);
    }

    #[test]
    fn cayley_examples() {
        let spec = CayleyWindowSpec {
            generators: vec![
                vec![1, 0],
                vec![-1, 0],
                vec![0, 1],
                vec![0, -1],
                vec![1, 1],
                vec![-1, -1],
            ],
            lo: vec![-10, -10],
            hi: vec![10, 10],
            margin: 3,
        };
        let cw = cayley_window(&spec).unwrap();
        assert!(cw.window.interior.iter().all(|&v| cw.graph().degree(v) == 6));
        assert!(!cw.window.interior.is_empty());

        let mut bad = spec.clone();
        bad.generators.pop();
        assert!(matches!(cayley_window(&bad), Err(GenError::NotSymmetric(_))));
    }

    #[test]
    fn schreier_torus_identification() {
        let spec = CayleyWindowSpec::standard(2, 3, 1);
        let q = schreier_quotient(&spec, &[vec![8, 0], vec![0, 8]]).unwrap();
        let t = make_torus(2, 8).unwrap();
        // coset (a, b) has id 8a + b, which is the torus labelling
        assert_eq!(q.n(), t.n());
        assert!(t.edges().all(|(u, v)| q.has_edge(u, v)));
        assert_eq!(q.edge_count(), t.edge_count());

        let err = schreier_quotient(&spec, &[vec![1, 0]]).unwrap_err();
        assert_eq!(err, GenError::InfiniteQuotient { rank: 1, dim: 2 });
    }

    #[test]
    fn hnf_reduction() {
        let l = Lattice::new(2, &[vec![4, 6], vec![2, 2], vec![0, 0]]).unwrap();
        assert_eq!(l.hnf(), &[vec![2, 0], vec![0, 2]]);
        assert_eq!(l.index(), Some(4));
        let skew = Lattice::new(2, &[vec![3, 1], vec![0, 5]]).unwrap();
        assert_eq!(skew.index(), Some(15));
        let mut seen = std::collections::HashSet::new();
        for a in -10..10 {
            for b in -10..10 {
                let r = skew.reduce(&[a, b]);
                assert!(skew.coset_id(&r).unwrap() < 15);
                seen.insert(r);
            }
        }
        assert_eq!(seen.len(), 15);
        assert_eq!(skew.reduce(&[3, 1]), skew.reduce(&[0, 0]));
        assert_eq!(skew.reduce(&[6, 7]), skew.reduce(&[0, 0]));
    }

    #[test]
    fn pushforward_examples() {
        let cw = z2_window(10, 2);
        let rows = Lattice::new(2, &[vec![1, 0]]).unwrap();
        let x = cw.id(&[2, -3]).unwrap();
        let pf = pushforward_function(&cw, &FolnerFunction::point_mass(x), &rows).unwrap();
        assert_eq!(pf.values.len(), 1);
        assert_eq!(pf.get(&[0, -3]), int(1));

        let f = box_function(&cw, &[-3, -3], 6).unwrap();
        let pf = pushforward_function(&cw, &f, &rows).unwrap();
        assert_eq!(pf.mass(), int(1));
        for b in -3..3 {
            assert_eq!(pf.get(&[0, b]), ratio::ratio(1, 6));
        }
        assert!(pf.defect(&cw.spec.generators) <= function_defect(cw.graph(), &f).unwrap());

        let corner = cw.id(&[-10, -10]).unwrap();
        assert_eq!(
            pushforward_function(&cw, &FolnerFunction::point_mass(corner), &rows),
            Err(GenError::SupportLeak(corner))
        );
    }

    #[test]
    fn random_regular_examples() {
        let k4 = random_regular(4, 3, 1).unwrap();
        assert_eq!(k4.edge_count(), 6);
        assert!((algebraic_connectivity(&k4) - 4.0).abs() < 1e-9);
        assert_eq!(
            random_regular(30, 3, 9).unwrap().to_text(),
            random_regular(30, 3, 9).unwrap().to_text()
        );
        assert!(random_regular(3, 3, 0).is_err());
    }

    #[test]
    fn edge_coloring_examples() {
        let e = edge_color_involutions(&make_path(2));
        assert_eq!(e.num_colors, 1);
        let c4 = edge_color_involutions(&make_cycle(4));
        assert_eq!(c4.num_colors, 2);
        assert_eq!(c4.color(0, 1), c4.color(2, 3));
        let star = Graph::from_edges(6, 5, (1..6).map(|i| (0, i))).unwrap();
        assert_eq!(edge_color_involutions(&star).num_colors, 5);
        let g = random_regular(40, 4, 3).unwrap();
        let col = edge_color_involutions(&g);
        assert!(col.is_proper());
        assert!(col.num_colors <= 7);
        for c in 0..col.num_colors {
            for x in 0..g.n() {
                if let Some(y) = col.involutions[c][x] {
                    assert_eq!(col.involutions[c][y], Some(x));
                }
            }
        }
    }

    #[test]
    fn chain_examples() {
        let (g, log) = amealm_chain(&[], &[8, 64], 0).unwrap();
        assert_eq!(g.n(), 0);
        assert!(log.paths.is_empty());
        assert_eq!(
            amealm_chain(&[make_cycle(5)], &[1], 0).unwrap_err(),
            GenError::SequenceTooSlow { n: 1, a: 1 }
        );

        let e1 = random_regular(50, 3, 11).unwrap();
        let e2 = random_regular(50, 3, 12).unwrap();
        let (g, log) = amealm_chain(&[e1, e2], &[8, 64], 5).unwrap();
        assert!(g.is_connected());
        assert!(log.packing_inequality_holds());
        assert!(log.selections.iter().all(|s| s.maximal));

        let cycles = vec![make_cycle(200), make_cycle(300), make_cycle(240)];
        let (g, log) = amealm_chain(&cycles, &[9, 70], 2).unwrap();
        assert!(g.is_connected());
        assert!(!log.paths.is_empty());
        assert!(log.packing_inequality_holds());
        for b in &log.bridges {
            assert!(b.block_distance >= b.required);
        }
        for s in &log.selections {
            assert!(s.maximal);
            for (i, &x) in s.chosen.iter().enumerate() {
                let d = g.distances_from(&[x], 2 * s.a_n as usize);
                assert!(s.chosen[i + 1..].iter().all(|&y| d[y].is_none()));
            }
        }
        assert_eq!(g.n(), 740 + log.paths.iter().map(|p| p.0).sum::<usize>());
    }

    /// Exhaustive Cheeger check on small expanders.
    #[test]
    fn expander_witness() {
        let mut checked = 0;
        for seed in 0..20 {
            let g = random_regular(14, 3, seed).unwrap();
            let l2 = algebraic_connectivity(&g);
            if l2 < 0.3 {
                continue;
            }
            checked += 1;
            let mut best = f64::INFINITY;
            for m in 1u32..(1 << 14) {
                if m.count_ones() > 7 {
                    continue;
                }
                let set: VertexSet = (0..14).filter(|i| m & (1 << i) != 0).collect();
                let q = crate::folner::folner_quality(&g, &set).unwrap();
                best = best.min(ratio::to_f64(&q));
            }
            assert!(best >= l2 / 6.0);
        }
        assert!(checked > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn pushforward_preserves_mass_and_defect(
            entries in proptest::collection::vec((-6i64..6, -6i64..6, 1i64..20), 1..15),
            lattice in prop_oneof![
                Just(vec![vec![1, 0]]),
                Just(vec![vec![5, 0], vec![0, 5]]),
                Just(vec![vec![3, 1], vec![0, 4]]),
                Just(vec![vec![2, 2]]),
            ],
        ) {
            let cw = z2_window(8, 2);
            let f = FolnerFunction::new(
                entries.iter().map(|&(a, b, w)| (cw.id(&[a, b]).unwrap(), int(w))),
            ).unwrap();
            let lat = Lattice::new(2, &lattice).unwrap();
            let pf = pushforward_function(&cw, &f, &lat).unwrap();
            prop_assert_eq!(pf.mass(), f.mass().clone());
            prop_assert!(pf.defect(&cw.spec.generators) <= function_defect(cw.graph(), &f).unwrap());
        }
    }
}
