//! Canonical signatures of rooted balls.
//!
//! Colour refinement seeded by distance-to-root, followed by an
//! individualisation-refinement search that keeps the lexicographically
//! smallest adjacency code. Automorphisms found at equal leaves prune sibling
//! branches in the same orbit of the prefix stabiliser.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{Graph, RootedBall};

pub const DEFAULT_CANON_CAP: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonError {
    #[error("ball has {size} vertices; canonicalization cap is {cap}")]
    TooLarge { size: usize, cap: usize },
}

/// Canonical code of a rooted graph. Byte layout: eccentricity of the root,
/// vertex count, then the upper-triangular adjacency bits in canonical order.
/// Byte order therefore sorts by (radius, size, code).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BallSignature(Vec<u8>);

impl BallSignature {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn eccentricity(&self) -> usize {
        self.0[0] as usize
    }

    pub fn size(&self) -> usize {
        self.0[1] as usize
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if !s.len().is_multiple_of(2) || s.len() < 4 {
            return None;
        }
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
            .collect::<Option<Vec<_>>>()
            .map(BallSignature)
    }
}

impl fmt::Debug for BallSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BallSignature({})", self.to_hex())
    }
}

impl Serialize for BallSignature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BallSignature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BallSignature::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad signature hex"))
    }
}

pub fn canonical_signature(b: &RootedBall) -> Result<BallSignature, CanonError> {
    canonical_signature_capped(b, DEFAULT_CANON_CAP)
}

pub fn canonical_signature_capped(b: &RootedBall, cap: usize) -> Result<BallSignature, CanonError> {
    rooted_signature(&b.graph, b.local_root, cap)
}

/// Signature of the connected component of `root` in `g`, rooted at `root`.
pub fn rooted_signature(g: &Graph, root: usize, cap: usize) -> Result<BallSignature, CanonError> {
    let dist = g.distances_from(&[root], usize::MAX);
    let verts: Vec<usize> = (0..g.n()).filter(|&v| dist[v].is_some()).collect();
    let n = verts.len();
    if n > cap.min(255) {
        return Err(CanonError::TooLarge { size: n, cap });
    }
    let mut local = vec![usize::MAX; g.n()];
    for (i, &v) in verts.iter().enumerate() {
        local[v] = i;
    }
    let adj: Vec<Vec<usize>> = verts
        .iter()
        .map(|&v| g.neighbors(v).iter().map(|&u| local[u]).collect())
        .collect();
    let d: Vec<usize> = verts.iter().map(|&v| dist[v].unwrap()).collect();
    let ecc = d.iter().copied().max().unwrap_or(0);

    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); ecc + 1];
    for v in 0..n {
        cells[d[v]].push(v);
    }
    let mut search = Search {
        adj: &adj,
        n,
        best: None,
        automorphisms: Vec::new(),
    };
    let start = refine(&adj, cells);
    search.descend(start, &mut Vec::new());
    let (code, _) = search.best.expect("search always reaches a leaf");
    let mut bytes = Vec::with_capacity(code.len() + 2);
    bytes.push(ecc as u8);
    bytes.push(n as u8);
    bytes.extend(code);
    Ok(BallSignature(bytes))
}

struct Search<'a> {
    adj: &'a [Vec<usize>],
    n: usize,
    /// Best code and the labelling (position -> vertex) that produced it.
    best: Option<(Vec<u8>, Vec<usize>)>,
    automorphisms: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn descend(&mut self, cells: Vec<Vec<usize>>, prefix: &mut Vec<usize>) {
        let Some(target) = cells.iter().position(|c| c.len() > 1) else {
            self.leaf(&cells);
            return;
        };
        let candidates = cells[target].clone();
        let mut tried: Vec<usize> = Vec::new();
        for &v in &candidates {
            if !tried.is_empty() && self.same_orbit(prefix, &tried, v) {
                continue;
            }
            tried.push(v);
            let mut next = Vec::with_capacity(cells.len() + 1);
            for (i, c) in cells.iter().enumerate() {
                if i == target {
                    next.push(vec![v]);
                    next.push(c.iter().copied().filter(|&u| u != v).collect());
                } else {
                    next.push(c.clone());
                }
            }
            prefix.push(v);
            self.descend(refine(self.adj, next), prefix);
            prefix.pop();
        }
    }

    fn leaf(&mut self, cells: &[Vec<usize>]) {
        let order: Vec<usize> = cells.iter().map(|c| c[0]).collect();
        let code = adjacency_code(self.adj, &order);
        match &self.best {
            None => self.best = Some((code, order)),
            Some((best, best_order)) => match code.cmp(best) {
                std::cmp::Ordering::Less => self.best = Some((code, order)),
                std::cmp::Ordering::Equal => {
                    // vertex at position i in this leaf maps to the vertex at position i in the best leaf
                    let mut gamma = vec![0; self.n];
                    for i in 0..self.n {
                        gamma[order[i]] = best_order[i];
                    }
                    if gamma.iter().enumerate().any(|(i, &g)| i != g) {
                        self.automorphisms.push(gamma);
                    }
                }
                std::cmp::Ordering::Greater => {}
            },
        }
    }

    /// Whether `v` shares an orbit with an already explored sibling under the
    /// known automorphisms that fix the current prefix pointwise.
    fn same_orbit(&self, prefix: &[usize], tried: &[usize], v: usize) -> bool {
        let gens: Vec<&Vec<usize>> = self
            .automorphisms
            .iter()
            .filter(|g| prefix.iter().all(|&p| g[p] == p))
            .collect();
        if gens.is_empty() {
            return false;
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for g in gens {
            for (i, &j) in g.iter().enumerate() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let rv = find(&mut parent, v);
        tried.iter().any(|&t| find(&mut parent, t) == rv)
    }
}

fn adjacency_code(adj: &[Vec<usize>], order: &[usize]) -> Vec<u8> {
    let n = order.len();
    let bits = n * n.saturating_sub(1) / 2;
    let mut out = vec![0u8; bits.div_ceil(8)];
    let mut k = 0;
    for i in 0..n {
        let vi = order[i];
        for j in (i + 1)..n {
            if adj[vi].contains(&order[j]) {
                out[k / 8] |= 0x80 >> (k % 8);
            }
            k += 1;
        }
    }
    out
}

/// Refines an ordered partition until every cell is equitable. Split cells
/// keep their position and new pieces are ordered by their neighbour-count
/// profile, so the result is isomorphism invariant.
fn refine(adj: &[Vec<usize>], mut cells: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut cell_of = vec![0usize; n];
    loop {
        for (i, c) in cells.iter().enumerate() {
            for &v in c {
                cell_of[v] = i;
            }
        }
        let k = cells.len();
        let mut next: Vec<Vec<usize>> = Vec::with_capacity(k);
        for c in &cells {
            if c.len() == 1 {
                next.push(c.clone());
                continue;
            }
            let mut keyed: Vec<(Vec<u16>, usize)> = c
                .iter()
                .map(|&v| {
                    let mut counts = vec![0u16; k];
                    for &u in &adj[v] {
                        counts[cell_of[u]] += 1;
                    }
                    (counts, v)
                })
                .collect();
            keyed.sort();
            let mut start = 0;
            for i in 1..=keyed.len() {
                if i == keyed.len() || keyed[i].0 != keyed[start].0 {
                    next.push(keyed[start..i].iter().map(|(_, v)| *v).collect());
                    start = i;
                }
            }
        }
        if next.len() == k {
            return next;
        }
        cells = next;
    }
}

/// Brute-force rooted isomorphism test by backtracking with distance and
/// degree pruning. Independent of the canonical search; used as its oracle.
pub fn rooted_isomorphic(g: &Graph, gr: usize, h: &Graph, hr: usize) -> bool {
    let dg = g.distances_from(&[gr], usize::MAX);
    let dh = h.distances_from(&[hr], usize::MAX);
    let vg: Vec<usize> = (0..g.n()).filter(|&v| dg[v].is_some()).collect();
    let vh: Vec<usize> = (0..h.n()).filter(|&v| dh[v].is_some()).collect();
    if vg.len() != vh.len() {
        return false;
    }
    let edges_g: usize = vg.iter().map(|&v| g.degree(v)).sum();
    let edges_h: usize = vh.iter().map(|&v| h.degree(v)).sum();
    if edges_g != edges_h {
        return false;
    }
    let mut map = vec![usize::MAX; g.n()];
    let mut used = vec![false; h.n()];
    map[gr] = hr;
    used[hr] = true;
    let order: Vec<usize> = {
        let mut o = vg.clone();
        o.sort_by_key(|&v| (dg[v], v));
        o
    };
    fn bt(
        i: usize,
        order: &[usize],
        g: &Graph,
        h: &Graph,
        dg: &[Option<usize>],
        dh: &[Option<usize>],
        vh: &[usize],
        map: &mut [usize],
        used: &mut [bool],
    ) -> bool {
        if i == order.len() {
            return true;
        }
        let v = order[i];
        if map[v] != usize::MAX {
            return bt(i + 1, order, g, h, dg, dh, vh, map, used);
        }
        for &w in vh {
            if used[w] || dh[w] != dg[v] || h.degree(w) != g.degree(v) {
                continue;
            }
            let ok = g
                .neighbors(v)
                .iter()
                .filter(|&&u| map[u] != usize::MAX)
                .all(|&u| h.has_edge(w, map[u]))
                && order[..i]
                    .iter()
                    .filter(|&&u| !g.has_edge(v, u))
                    .all(|&u| !h.has_edge(w, map[u]));
            if !ok {
                continue;
            }
            map[v] = w;
            used[w] = true;
            if bt(i + 1, order, g, h, dg, dh, vh, map, used) {
                return true;
            }
            map[v] = usize::MAX;
            used[w] = false;
        }
        false
    }
    bt(0, &order, g, h, &dg, &dh, &vh, &mut map, &mut used)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ball;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, 2, (1..n).map(|i| (i - 1, i))).unwrap()
    }

    #[test]
    fn relabelled_paths_agree() {
        let a = Graph::from_edges(4, 2, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let b = Graph::from_edges(4, 2, [(3, 1), (1, 0), (0, 2)]).unwrap();
        // a rooted at 1 (second vertex) vs b rooted at 1 (second vertex of 3-1-0-2)
        assert_eq!(
            rooted_signature(&a, 1, 64).unwrap(),
            rooted_signature(&b, 1, 64).unwrap()
        );
    }

    #[test]
    fn path_endpoint_vs_center() {
        let p3 = path(3);
        assert_ne!(
            canonical_signature(&ball(&p3, 0, 2).unwrap()).unwrap(),
            canonical_signature(&ball(&p3, 1, 2).unwrap()).unwrap()
        );
    }

    #[test]
    fn star_vs_path_radius_one() {
        let star = Graph::from_edges(4, 3, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let p4 = path(4);
        assert_ne!(
            canonical_signature(&ball(&star, 0, 1).unwrap()).unwrap(),
            canonical_signature(&ball(&p4, 0, 1).unwrap()).unwrap()
        );
    }

    #[test]
    fn cap_enforced() {
        let p = path(80);
        assert!(matches!(
            canonical_signature(&ball(&p, 40, 40).unwrap()),
            Err(CanonError::TooLarge { size: 80, .. })
        ));
    }

    #[test]
    fn hex_round_trip() {
        let s = rooted_signature(&path(5), 2, 64).unwrap();
        assert_eq!(BallSignature::from_hex(&s.to_hex()), Some(s));
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Graph {
        let mut g = Graph::empty(n, d);
        for _ in 0..(n * d) {
            let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let _ = g.add_edge(u, v);
        }
        g
    }

    /// Complete-invariant check: on rooted balls of at most 12 vertices the
    /// signature agrees exactly with brute-force rooted isomorphism.
    #[test]
    fn signature_is_complete_on_small_balls() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut balls: Vec<(Graph, usize)> = Vec::new();
        for _ in 0..120 {
            let n = rng.gen_range(1..=12);
            let d = rng.gen_range(2..=4);
            let g = random_graph(&mut rng, n, d);
            let x = rng.gen_range(0..n);
            let r = rng.gen_range(0..=3);
            let b = ball(&g, x, r).unwrap();
            if b.vertices.len() <= 12 {
                balls.push((b.graph, b.local_root));
            }
        }
        // add relabelled copies so equal pairs are well represented
        let copies: Vec<(Graph, usize)> = balls
            .iter()
            .take(60)
            .map(|(g, r)| {
                let mut perm: Vec<usize> = (0..g.n()).collect();
                for i in (1..perm.len()).rev() {
                    perm.swap(i, rng.gen_range(0..=i));
                }
                let h = Graph::from_edges(g.n(), g.degree_bound(), g.edges().map(|(u, v)| (perm[u], perm[v])))
                    .unwrap();
                (h, perm[*r])
            })
            .collect();
        balls.extend(copies);
        let sigs: Vec<BallSignature> = balls
            .iter()
            .map(|(g, r)| rooted_signature(g, *r, 64).unwrap())
            .collect();
        let mut equal_pairs = 0;
        for i in 0..balls.len() {
            for j in (i + 1)..balls.len() {
                let iso = rooted_isomorphic(&balls[i].0, balls[i].1, &balls[j].0, balls[j].1);
                assert_eq!(iso, sigs[i] == sigs[j], "pair {i},{j}");
                equal_pairs += iso as usize;
            }
        }
        assert!(equal_pairs >= 60);
    }

    #[test]
    fn symmetric_tree_ball_is_fast() {
        // 3-regular tree to depth 4: 46 vertices with a large automorphism group
        let mut edges = Vec::new();
        let mut frontier = vec![0usize];
        let mut next_id = 1;
        for depth in 0..4 {
            let mut nf = Vec::new();
            for &v in &frontier {
                let kids = if depth == 0 { 3 } else { 2 };
                for _ in 0..kids {
                    edges.push((v, next_id));
                    nf.push(next_id);
                    next_id += 1;
                }
            }
            frontier = nf;
        }
        let g = Graph::from_edges(next_id, 3, edges).unwrap();
        assert_eq!(g.n(), 46);
        let s = rooted_signature(&g, 0, 64).unwrap();
        assert_eq!(s.size(), 46);
        assert_eq!(s.eccentricity(), 4);
    }
}
