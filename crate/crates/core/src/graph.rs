//! Bounded-degree graphs, vertex sets, windows and rooted balls.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("malformed graph text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("vertex id {id} out of range for a graph on {n} vertices")]
    OutOfRange { id: usize, n: usize },
    #[error("self-loop at vertex {0}")]
    Loop(usize),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(usize, usize),
    #[error("vertex {vertex} exceeds the declared degree bound {bound}")]
    DegreeOverflow { vertex: usize, bound: usize },
    #[error("vertex set is not strictly increasing at {0}")]
    UnsortedSet(usize),
    #[error("ball of radius {radius} around {vertex} reaches a truncated vertex of the window")]
    MarginViolation { vertex: usize, radius: usize },
}

/// A finite simple graph with a declared degree bound.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    degree_bound: usize,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Graph(n={}, d={}, m={})",
            self.n(),
            self.degree_bound,
            self.edge_count()
        )
    }
}

impl Graph {
    pub fn empty(n: usize, degree_bound: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
            degree_bound,
        }
    }

    /// Builds a graph from an edge list, validating every invariant.
    pub fn from_edges(
        n: usize,
        degree_bound: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut g = Graph::empty(n, degree_bound);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Same as [`Graph::from_edges`] with the degree bound set to the maximum degree.
    pub fn from_edges_auto(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut g = Graph::from_edges(n, usize::MAX, edges)?;
        g.degree_bound = g.max_degree();
        Ok(g)
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<(), GraphError> {
        let n = self.n();
        for id in [u, v] {
            if id >= n {
                return Err(GraphError::OutOfRange { id, n });
            }
        }
        if u == v {
            return Err(GraphError::Loop(u));
        }
        let pos = match self.adj[u].binary_search(&v) {
            Ok(_) => return Err(GraphError::DuplicateEdge(u.min(v), u.max(v))),
            Err(p) => p,
        };
        for w in [u, v] {
            if self.adj[w].len() + 1 > self.degree_bound {
                return Err(GraphError::DegreeOverflow {
                    vertex: w,
                    bound: self.degree_bound,
                });
            }
        }
        self.adj[u].insert(pos, v);
        let pos = self.adj[v].binary_search(&u).unwrap_err();
        self.adj[v].insert(pos, u);
        Ok(())
    }

    /// Appends `k` isolated vertices and returns the id of the first one.
    pub fn add_vertices(&mut self, k: usize) -> usize {
        let first = self.n();
        self.adj.extend(std::iter::repeat_with(Vec::new).take(k));
        first
    }

    pub fn set_degree_bound(&mut self, d: usize) -> Result<(), GraphError> {
        if let Some(v) = (0..self.n()).find(|&v| self.degree(v) > d) {
            return Err(GraphError::DegreeOverflow { vertex: v, bound: d });
        }
        self.degree_bound = d;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn check_vertex(&self, v: usize) -> Result<(), GraphError> {
        if v < self.n() {
            Ok(())
        } else {
            Err(GraphError::OutOfRange { id: v, n: self.n() })
        }
    }

    /// Parses the text format: a header `"n d"` and then one `"u v"` edge per line.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let (n, d) = parse_pair(hl, header)?;
        let mut g = Graph::empty(n, d);
        for (ln, line) in lines {
            let (u, v) = parse_pair(ln, line)?;
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n(), self.degree_bound);
        for (u, v) in self.edges() {
            s.push_str(&format!("{u} {v}\n"));
        }
        s
    }

    /// BFS distances from a set of sources, stopping at `limit` hops.
    pub fn distances_from(&self, sources: &[usize], limit: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            if du == limit {
                continue;
            }
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn distance(&self, u: usize, v: usize) -> Option<usize> {
        self.distances_from(&[u], usize::MAX)[v]
    }

    /// `B_r(L)`: all vertices within distance `r` of the set.
    pub fn ball_of_set(&self, set: &VertexSet, r: usize) -> VertexSet {
        let dist = self.distances_from(set.as_slice(), r);
        VertexSet::from_sorted_unchecked(
            dist.iter()
                .enumerate()
                .filter_map(|(v, d)| d.map(|_| v))
                .collect(),
        )
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<VertexSet> {
        self.components_avoiding(&vec![false; self.n()])
    }

    /// Components of the graph with the `removed` vertices deleted.
    pub fn components_avoiding(&self, removed: &[bool]) -> Vec<VertexSet> {
        let mut seen = removed.to_vec();
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for s in 0..self.n() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            stack.push(s);
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &v in &self.adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            out.push(VertexSet::from_unsorted(comp));
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Diameter of the whole graph; `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for v in 0..self.n() {
            let dist = self.distances_from(&[v], usize::MAX);
            for d in dist {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    /// Diameter of a vertex set measured with distances of this graph.
    pub fn set_diameter(&self, set: &VertexSet) -> Option<usize> {
        let mut best = 0;
        for &v in set.iter() {
            let dist = self.distances_from(&[v], usize::MAX);
            for &u in set.iter() {
                best = best.max(dist[u]?);
            }
        }
        Some(best)
    }

    /// Whether the subgraph induced on `set` is connected.
    pub fn is_connected_set(&self, set: &VertexSet) -> bool {
        let Some(&start) = set.as_slice().first() else {
            return true;
        };
        let mut seen = vec![false; self.n()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 0;
        while let Some(u) = stack.pop() {
            count += 1;
            for &v in &self.adj[u] {
                if !seen[v] && set.contains(v) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        count == set.len()
    }
}

fn parse_pair(line: usize, s: &str) -> Result<(usize, usize), GraphError> {
    let mut it = s.split_whitespace();
    let parse = |t: Option<&str>| -> Result<usize, GraphError> {
        t.ok_or_else(|| GraphError::Parse {
            line,
            msg: "expected two integers".into(),
        })?
        .parse()
        .map_err(|_| GraphError::Parse {
            line,
            msg: format!("not a nonnegative integer in {s:?}"),
        })
    };
    let a = parse(it.next())?;
    let b = parse(it.next())?;
    if it.next().is_some() {
        return Err(GraphError::Parse {
            line,
            msg: "trailing tokens".into(),
        });
    }
    Ok((a, b))
}

pub fn load_graph(text: &str) -> Result<Graph, GraphError> {
    Graph::parse(text)
}

/// A strictly increasing list of vertex ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexSet(Vec<usize>);

impl VertexSet {
    pub fn new() -> Self {
        VertexSet(Vec::new())
    }

    pub fn from_unsorted(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        VertexSet(v)
    }

    /// Caller guarantees `v` is strictly increasing.
    pub fn from_sorted_unchecked(v: Vec<usize>) -> Self {
        debug_assert!(v.windows(2).all(|w| w[0] < w[1]));
        VertexSet(v)
    }

    pub fn singleton(v: usize) -> Self {
        VertexSet(vec![v])
    }

    pub fn all(n: usize) -> Self {
        VertexSet((0..n).collect())
    }

    pub fn validate(&self, n: usize) -> Result<(), GraphError> {
        if let Some(w) = self.0.windows(2).find(|w| w[0] >= w[1]) {
            return Err(GraphError::UnsortedSet(w[1]));
        }
        match self.0.last() {
            Some(&last) if last >= n => Err(GraphError::OutOfRange { id: last, n }),
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in &self.0 {
            m[v] = true;
        }
        m
    }

    pub fn union(&self, other: &VertexSet) -> VertexSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        VertexSet::from_unsorted(v)
    }

    pub fn is_disjoint(&self, other: &VertexSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn is_subset(&self, other: &VertexSet) -> bool {
        self.0.iter().all(|&v| other.contains(v))
    }
}

impl FromIterator<usize> for VertexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        VertexSet::from_unsorted(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a VertexSet {
    type Item = &'a usize;
    type IntoIter = std::slice::Iter<'a, usize>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Inner vertex boundary: members of `set` with a neighbour outside it.
pub fn vertex_boundary(g: &Graph, set: &VertexSet) -> Result<VertexSet, GraphError> {
    set.validate(g.n())?;
    let mask = set.mask(g.n());
    Ok(boundary_with_mask(g, set, &mask))
}

pub(crate) fn boundary_with_mask(g: &Graph, set: &VertexSet, mask: &[bool]) -> VertexSet {
    VertexSet::from_sorted_unchecked(
        set.iter()
            .copied()
            .filter(|&x| g.neighbors(x).iter().any(|&y| !mask[y]))
            .collect(),
    )
}

/// Boundary of `set` computed inside the subgraph induced on `host`
/// (neighbours outside `host` are ignored).
pub fn relative_boundary(g: &Graph, host_mask: &[bool], set: &VertexSet) -> VertexSet {
    let mask = set.mask(g.n());
    VertexSet::from_sorted_unchecked(
        set.iter()
            .copied()
            .filter(|&x| g.neighbors(x).iter().any(|&y| host_mask[y] && !mask[y]))
            .collect(),
    )
}

/// `B_r(x)` together with BFS distances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedBall {
    pub root: usize,
    pub radius: usize,
    /// Host ids of the ball's vertices, sorted.
    pub vertices: VertexSet,
    /// Induced subgraph; local id `i` is `vertices[i]`.
    pub graph: Graph,
    /// Distance to the root per local id.
    pub dist: Vec<usize>,
    /// Local id of the root.
    pub local_root: usize,
}

pub fn ball(g: &Graph, x: usize, r: usize) -> Result<RootedBall, GraphError> {
    g.check_vertex(x)?;
    let dist = g.distances_from(&[x], r);
    let vertices = VertexSet::from_sorted_unchecked(
        dist.iter()
            .enumerate()
            .filter_map(|(v, d)| d.map(|_| v))
            .collect(),
    );
    let (graph, _) = induced_subgraph(g, &vertices)?;
    let local_dist = vertices.iter().map(|&v| dist[v].unwrap()).collect();
    let local_root = vertices.as_slice().binary_search(&x).unwrap();
    Ok(RootedBall {
        root: x,
        radius: r,
        vertices,
        graph,
        dist: local_dist,
        local_root,
    })
}

/// Subgraph induced on `set`; the returned table maps new ids to old ids.
pub fn induced_subgraph(g: &Graph, set: &VertexSet) -> Result<(Graph, Vec<usize>), GraphError> {
    set.validate(g.n())?;
    let mut local = vec![usize::MAX; g.n()];
    for (i, &v) in set.iter().enumerate() {
        local[v] = i;
    }
    let adj = set
        .iter()
        .map(|&v| {
            g.neighbors(v)
                .iter()
                .filter(|&&u| local[u] != usize::MAX)
                .map(|&u| local[u])
                .collect::<Vec<_>>()
        })
        .collect();
    Ok((
        Graph {
            adj,
            degree_bound: g.degree_bound,
        },
        set.as_slice().to_vec(),
    ))
}

/// A finite piece of a (possibly infinite) graph.
///
/// `truncated` marks frontier vertices whose neighbourhood in the infinite
/// graph was cut off; the missing vertices sit one hop beyond them. A ball
/// `B_r(x)` is exact when it does not reach that missing layer, i.e. when
/// every frontier vertex is at distance at least `r` from `x`.
#[derive(Clone, Debug)]
pub struct Window {
    pub host: Graph,
    pub truncated: Vec<bool>,
    pub interior: VertexSet,
    pub margin: usize,
}

impl Window {
    /// A finite graph viewed as a window: nothing is truncated.
    pub fn whole(g: Graph) -> Self {
        let n = g.n();
        Window {
            host: g,
            truncated: vec![false; n],
            interior: VertexSet::all(n),
            margin: usize::MAX,
        }
    }

    /// Builds a window whose interior is every vertex at least `margin` hops
    /// from the frontier.
    pub fn with_margin(host: Graph, truncated: Vec<bool>, margin: usize) -> Self {
        let sources: Vec<usize> = (0..host.n()).filter(|&v| truncated[v]).collect();
        let dist = if margin == 0 {
            vec![None; host.n()]
        } else {
            host.distances_from(&sources, margin - 1)
        };
        let interior = VertexSet::from_sorted_unchecked(
            (0..host.n()).filter(|&v| dist[v].is_none()).collect(),
        );
        Window {
            host,
            truncated,
            interior,
            margin,
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.host
    }

    pub fn is_finite_graph(&self) -> bool {
        !self.truncated.iter().any(|&t| t)
    }

    /// Fails unless `B_r(set)` is exact: no frontier vertex closer than `r`.
    pub fn check_ball(&self, set: &[usize], r: usize) -> Result<(), GraphError> {
        for &v in set {
            self.host.check_vertex(v)?;
        }
        if self.is_finite_graph() || r == 0 {
            return Ok(());
        }
        let dist = self.host.distances_from(set, r - 1);
        if (0..self.host.n()).any(|v| dist[v].is_some() && self.truncated[v]) {
            return Err(GraphError::MarginViolation {
                vertex: set.first().copied().unwrap_or(0),
                radius: r,
            });
        }
        Ok(())
    }

    /// Fails unless `B_r(set)` and the neighbourhoods of its vertices are exact,
    /// so boundaries of subsets of the ball can be trusted.
    pub fn check_neighborhoods(&self, set: &[usize], r: usize) -> Result<(), GraphError> {
        self.check_ball(set, r + 1)
    }
}

impl From<Graph> for Window {
    fn from(g: Graph) -> Self {
        Window::whole(g)
    }
}
