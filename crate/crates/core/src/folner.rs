//! Følner sets, Følner functions, and small exhaustive Følner searches.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{boundary_with_mask, Graph, GraphError, VertexSet, Window};
use crate::ratio::{self, Ratio};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FolnerError {
    #[error("the empty set has no Følner quality")]
    EmptySet,
    #[error("function has zero total mass")]
    ZeroMass,
    #[error("function value at {0} is negative")]
    Negative(usize),
    #[error("enumeration budget of {budget} steps exhausted")]
    BudgetExceeded { budget: u64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// `|∂F| / |F|`.
pub fn folner_quality(g: &Graph, set: &VertexSet) -> Result<Ratio, FolnerError> {
    if set.is_empty() {
        return Err(FolnerError::EmptySet);
    }
    set.validate(g.n())?;
    let mask = set.mask(g.n());
    Ok(quality_with_mask(g, set, &mask))
}

pub(crate) fn quality_with_mask(g: &Graph, set: &VertexSet, mask: &[bool]) -> Ratio {
    let b = boundary_with_mask(g, set, mask).len();
    ratio::ratio(b as i64, set.len() as i64)
}

/// Strict test `quality < eps`.
pub fn is_folner(g: &Graph, set: &VertexSet, eps: &Ratio) -> Result<bool, FolnerError> {
    Ok(&folner_quality(g, set)? < eps)
}

/// Finitely supported nonnegative function; zero entries are not stored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolnerFunction {
    #[serde(with = "serde_sparse")]
    values: BTreeMap<usize, Ratio>,
    #[serde(with = "ratio::serde_ratio")]
    mass: Ratio,
}

mod serde_sparse {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<usize, Ratio>, s: S) -> Result<S::Ok, S::Error> {
        let v: BTreeMap<String, String> = m
            .iter()
            .map(|(k, r)| (k.to_string(), ratio::fmt_ratio(r)))
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, Ratio>, D::Error> {
        let v = BTreeMap::<String, String>::deserialize(d)?;
        v.into_iter()
            .map(|(k, r)| {
                let k = k.parse::<usize>().map_err(serde::de::Error::custom)?;
                let r = ratio::parse_ratio(&r).map_err(serde::de::Error::custom)?;
                Ok((k, r))
            })
            .collect()
    }
}

impl FolnerFunction {
    pub fn new(entries: impl IntoIterator<Item = (usize, Ratio)>) -> Result<Self, FolnerError> {
        let mut values: BTreeMap<usize, Ratio> = BTreeMap::new();
        for (v, r) in entries {
            if r.is_negative() {
                return Err(FolnerError::Negative(v));
            }
            *values.entry(v).or_insert_with(Ratio::zero) += r;
        }
        values.retain(|_, r| !r.is_zero());
        let mass = ratio::sum(values.values());
        if mass.is_zero() {
            return Err(FolnerError::ZeroMass);
        }
        Ok(FolnerFunction { values, mass })
    }

    /// Uniform probability measure on `set`.
    pub fn uniform(set: &VertexSet) -> Result<Self, FolnerError> {
        if set.is_empty() {
            return Err(FolnerError::EmptySet);
        }
        let w = ratio::ratio(1, set.len() as i64);
        Self::new(set.iter().map(|&v| (v, w.clone())))
    }

    pub fn point_mass(v: usize) -> Self {
        Self::new([(v, ratio::one())]).expect("positive mass")
    }

    pub fn get(&self, v: usize) -> Ratio {
        self.values.get(&v).cloned().unwrap_or_else(Ratio::zero)
    }

    pub fn mass(&self) -> &Ratio {
        &self.mass
    }

    /// `Σ_{v ∈ set} f(v)`.
    pub fn mass_of(&self, set: &VertexSet) -> Ratio {
        ratio::sum(set.iter().filter_map(|v| self.values.get(v)))
    }

    pub fn support(&self) -> VertexSet {
        VertexSet::from_sorted_unchecked(self.values.keys().copied().collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Ratio)> {
        self.values.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add(&self, other: &FolnerFunction) -> FolnerFunction {
        let mut values = self.values.clone();
        for (&k, v) in &other.values {
            *values.entry(k).or_insert_with(Ratio::zero) += v;
        }
        FolnerFunction {
            values,
            mass: &self.mass + &other.mass,
        }
    }

    pub fn scale(&self, c: &Ratio) -> Result<FolnerFunction, FolnerError> {
        Self::new(self.values.iter().map(|(&k, v)| (k, v * c)))
    }

    /// Rescaled to total mass one.
    pub fn normalized(&self) -> FolnerFunction {
        let inv = ratio::one() / &self.mass;
        self.scale(&inv).expect("positive mass")
    }

    pub fn max_value(&self) -> &Ratio {
        self.values.values().max().expect("nonempty support")
    }
}

/// `Σ_{(x,y) adjacent, ordered} |f(x) − f(y)|`.
pub fn total_variation(g: &Graph, f: &FolnerFunction) -> Result<Ratio, FolnerError> {
    let mut tv = Ratio::zero();
    for (x, fx) in f.iter() {
        g.check_vertex(x)?;
        for &y in g.neighbors(x) {
            match f.values.get(&y) {
                Some(fy) if y > x => tv += ratio::abs_diff(fx, fy) * ratio::int(2),
                Some(_) => {}
                None => tv += fx * ratio::int(2),
            }
        }
    }
    Ok(tv)
}

/// Total variation over ordered adjacent pairs divided by the mass.
pub fn function_defect(g: &Graph, f: &FolnerFunction) -> Result<Ratio, FolnerError> {
    Ok(total_variation(g, f)? / f.mass())
}

/// Smallest `i ≤ r_max` such that `B_i(L)` is an ε-Følner set.
pub fn grow_folner(
    w: &Window,
    l: &VertexSet,
    eps: &Ratio,
    r_max: usize,
) -> Result<Option<(usize, VertexSet)>, FolnerError> {
    if l.is_empty() {
        return Err(FolnerError::EmptySet);
    }
    l.validate(w.host.n())?;
    w.check_neighborhoods(l.as_slice(), r_max)?;
    let g = &w.host;
    let dist = g.distances_from(l.as_slice(), r_max);
    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); r_max + 1];
    for (v, d) in dist.iter().enumerate() {
        if let Some(d) = d {
            layers[*d].push(v);
        }
    }
    let mut members: Vec<usize> = Vec::new();
    for (i, layer) in layers.into_iter().enumerate() {
        if layer.is_empty() && i > 0 {
            break;
        }
        members.extend(layer);
        let ball = VertexSet::from_unsorted(members.clone());
        if &folner_quality(g, &ball)? < eps {
            return Ok(Some((i, ball)));
        }
    }
    Ok(None)
}

pub const DEFAULT_ENUM_BUDGET: u64 = 10_000_000;

/// Enumerates connected subsets of the vertices allowed by `pool`, size class
/// by size class; each class is visited in lexicographic order of the sorted
/// vertex lists.
pub struct ConnectedSubsets<'a> {
    g: &'a Graph,
    pool: Vec<bool>,
    budget: u64,
    steps: u64,
}

impl<'a> ConnectedSubsets<'a> {
    pub fn new(g: &'a Graph, pool: &VertexSet, budget: u64) -> Self {
        ConnectedSubsets {
            g,
            pool: pool.mask(g.n()),
            budget,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// All connected subsets of exactly `size` vertices, sorted.
    pub fn of_size(&mut self, size: usize) -> Result<Vec<VertexSet>, FolnerError> {
        let mut out = Vec::new();
        let anchors: Vec<usize> = (0..self.g.n()).filter(|&v| self.pool[v]).collect();
        for v in anchors {
            let mut sub = vec![v];
            let mut in_closed = vec![false; self.g.n()];
            in_closed[v] = true;
            let ext: Vec<usize> = self
                .g
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&u| u > v && self.pool[u])
                .collect();
            for &u in self.g.neighbors(v) {
                in_closed[u] = true;
            }
            self.extend(&mut sub, ext, v, size, &in_closed, &mut out)?;
        }
        out.sort();
        Ok(out)
    }

    fn extend(
        &mut self,
        sub: &mut Vec<usize>,
        mut ext: Vec<usize>,
        anchor: usize,
        size: usize,
        closed: &[bool],
        out: &mut Vec<VertexSet>,
    ) -> Result<(), FolnerError> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(FolnerError::BudgetExceeded {
                budget: self.budget,
            });
        }
        if sub.len() == size {
            out.push(VertexSet::from_unsorted(sub.clone()));
            return Ok(());
        }
        while let Some(w) = ext.pop() {
            let mut next_ext = ext.clone();
            let mut next_closed = closed.to_vec();
            for &u in self.g.neighbors(w) {
                if !closed[u] && u > anchor && self.pool[u] {
                    next_ext.push(u);
                }
                next_closed[u] = true;
            }
            sub.push(w);
            self.extend(sub, next_ext, anchor, size, &next_closed, out)?;
            sub.pop();
        }
        Ok(())
    }
}

/// Smallest ε-Følner connected subset of `B_r(x)`. Ties are broken
/// lexicographically with vertices ordered by (distance to `x`, id).
/// Quality is measured in the whole graph.
pub fn min_folner_in_ball(
    w: &Window,
    x: usize,
    r: usize,
    eps: &Ratio,
    budget: u64,
) -> Result<Option<VertexSet>, FolnerError> {
    w.check_neighborhoods(&[x], r)?;
    let g = &w.host;
    let dist = g.distances_from(&[x], r);
    let ball: VertexSet = (0..g.n()).filter(|&v| dist[v].is_some()).collect();
    let mut order: Vec<usize> = ball.as_slice().to_vec();
    order.sort_by_key(|&v| (dist[v], v));
    let mut rank = vec![usize::MAX; g.n()];
    for (i, &v) in order.iter().enumerate() {
        rank[v] = i;
    }
    let mut en = ConnectedSubsets::new(g, &ball, budget);
    let mut mask = vec![false; g.n()];
    for size in 1..=ball.len() {
        let mut class: Vec<(Vec<usize>, VertexSet)> = en
            .of_size(size)?
            .into_iter()
            .map(|set| {
                let mut key: Vec<usize> = set.iter().map(|&v| rank[v]).collect();
                key.sort_unstable();
                (key, set)
            })
            .collect();
        class.sort();
        for (_, set) in class {
            for &v in set.iter() {
                mask[v] = true;
            }
            let q = quality_with_mask(g, &set, &mask);
            for &v in set.iter() {
                mask[v] = false;
            }
            if &q < eps {
                return Ok(Some(set));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{make_cycle, make_grid, make_tree_window, z2_window};
    use crate::ratio::{int, ratio};

    fn block(side: usize, r0: usize, c0: usize, k: usize) -> VertexSet {
        (r0..r0 + k)
            .flat_map(|r| (c0..c0 + k).map(move |c| r * side + c))
            .collect()
    }

    #[test]
    fn quality_examples() {
        let g = make_grid(6, 6);
        assert_eq!(folner_quality(&g, &VertexSet::all(36)).unwrap(), int(0));
        let g = make_grid(30, 30);
        assert_eq!(
            folner_quality(&g, &block(30, 10, 10, 10)).unwrap(),
            ratio(36, 100)
        );
        let c5 = make_cycle(5);
        assert_eq!(folner_quality(&c5, &VertexSet::singleton(0)).unwrap(), int(1));
        assert_eq!(folner_quality(&c5, &VertexSet::new()), Err(FolnerError::EmptySet));
        assert!(!is_folner(&c5, &VertexSet::singleton(0), &int(1)).unwrap());
    }

    #[test]
    fn defect_examples() {
        let g = make_grid(6, 6);
        let f = FolnerFunction::new((0..36).map(|v| (v, int(3)))).unwrap();
        assert_eq!(function_defect(&g, &f).unwrap(), int(0));
        let g = make_grid(30, 30);
        let f = FolnerFunction::uniform(&block(30, 10, 10, 10)).unwrap();
        assert_eq!(function_defect(&g, &f).unwrap(), ratio(80, 100));
        let f = FolnerFunction::point_mass(15 * 30 + 15);
        assert_eq!(function_defect(&g, &f).unwrap(), int(8));
        assert_eq!(FolnerFunction::new([(0, int(0))]), Err(FolnerError::ZeroMass));
        assert_eq!(FolnerFunction::new([(3, int(-1))]), Err(FolnerError::Negative(3)));
    }

    #[test]
    fn sum_closure_triangle_inequality() {
        let g = make_grid(12, 12);
        let f = FolnerFunction::uniform(&block(12, 1, 1, 5)).unwrap();
        let h = FolnerFunction::uniform(&block(12, 3, 4, 6)).unwrap();
        let s = f.add(&h);
        let tv = |x: &FolnerFunction| total_variation(&g, x).unwrap();
        assert!(tv(&s) <= tv(&f) + tv(&h));
        assert_eq!(s.mass(), &int(2));
    }

    #[test]
    fn grow_examples() {
        let g = make_grid(5, 5);
        let w = Window::whole(g);
        let all = VertexSet::all(25);
        assert_eq!(grow_folner(&w, &all, &ratio(1, 2), 3).unwrap(), Some((0, all)));

        let w = z2_window(20, 5);
        let x = w.id(&[0, 0]).unwrap();
        let (i, b) = grow_folner(&w.window, &VertexSet::singleton(x), &ratio(1, 2), 4)
            .unwrap()
            .unwrap();
        assert_eq!(i, 3);
        assert_eq!(b.len(), 25);
        assert_eq!(folner_quality(&w.window.host, &b).unwrap(), ratio(12, 25));

        let t = make_tree_window(3, 12, 6).unwrap();
        let eps = ratio(1, 4);
        let res = grow_folner(&t, &VertexSet::singleton(0), &eps, 6).unwrap();
        assert_eq!(res, None);
        let size = t.host.ball_of_set(&VertexSet::singleton(0), 6).len();
        let bound = (1.0 + 0.25 / 3.0f64).powi(6);
        assert!(size as f64 >= bound);
    }

    #[test]
    fn grow_rejects_margin_violation() {
        let t = make_tree_window(3, 5, 2).unwrap();
        assert!(matches!(
            grow_folner(&t, &VertexSet::singleton(0), &ratio(1, 4), 6),
            Err(FolnerError::Graph(GraphError::MarginViolation { .. }))
        ));
    }

    #[test]
    fn min_folner_examples() {
        let w = z2_window(20, 5);
        let x = w.id(&[0, 0]).unwrap();
        let s = min_folner_in_ball(&w.window, x, 2, &ratio(3, 2), DEFAULT_ENUM_BUDGET).unwrap();
        assert_eq!(s, Some(VertexSet::singleton(x)));
        let s = min_folner_in_ball(&w.window, x, 2, &ratio(9, 10), DEFAULT_ENUM_BUDGET)
            .unwrap()
            .unwrap();
        assert_eq!(s, w.window.host.ball_of_set(&VertexSet::singleton(x), 1));
        assert_eq!(folner_quality(&w.window.host, &s).unwrap(), ratio(4, 5));

        let t = make_tree_window(3, 7, 4).unwrap();
        assert_eq!(
            min_folner_in_ball(&t, 0, 3, &ratio(2, 5), DEFAULT_ENUM_BUDGET).unwrap(),
            None
        );
    }

    /// Independent oracle: all subsets of the ball by bitmask.
    #[test]
    fn min_folner_matches_bitmask_oracle() {
        let w = z2_window(20, 5);
        let g = &w.window.host;
        let x = w.id(&[0, 0]).unwrap();
        let ball = g.ball_of_set(&VertexSet::singleton(x), 2);
        let verts = ball.as_slice().to_vec();
        let mut best: Option<VertexSet> = None;
        for m in 1u32..(1 << verts.len()) {
            let set: VertexSet = (0..verts.len())
                .filter(|i| m & (1 << i) != 0)
                .map(|i| verts[i])
                .collect();
            if !g.is_connected_set(&set) {
                continue;
            }
            if folner_quality(g, &set).unwrap() < ratio(9, 10) {
                let key = |t: &VertexSet| {
                    let mut k: Vec<(usize, usize)> =
                        t.iter().map(|&v| (g.distance(x, v).unwrap(), v)).collect();
                    k.sort();
                    (t.len(), k)
                };
                let better = match &best {
                    None => true,
                    Some(b) => key(&set) < key(b),
                };
                if better {
                    best = Some(set);
                }
            }
        }
        let got = min_folner_in_ball(&w.window, x, 2, &ratio(9, 10), DEFAULT_ENUM_BUDGET).unwrap();
        assert_eq!(got, best);
        for size in 1..5 {
            for s in ConnectedSubsets::new(g, &ball, u64::MAX).of_size(size).unwrap() {
                assert_eq!(folner_quality(g, &s).unwrap(), int(1));
            }
        }
    }

    #[test]
    fn uniform_on_folner_set_has_small_defect() {
        let w = z2_window(20, 5);
        let x = w.id(&[0, 0]).unwrap();
        let g = &w.window.host;
        for eps in [ratio(9, 10), ratio(3, 2), ratio(1, 2)] {
            if let Some(s) = min_folner_in_ball(&w.window, x, 2, &eps, DEFAULT_ENUM_BUDGET).unwrap() {
                let f = FolnerFunction::uniform(&s).unwrap();
                let bound = &eps * int(2 * g.degree_bound() as i64);
                assert!(function_defect(g, &f).unwrap() <= bound);
            }
        }
    }

    #[test]
    fn connected_subsets_counts() {
        // connected subsets of P4: sizes 1..4 -> 4,3,2,1
        let g = crate::generators::make_path(4);
        let mut en = ConnectedSubsets::new(&g, &VertexSet::all(4), u64::MAX);
        let counts: Vec<usize> = (1..=4).map(|s| en.of_size(s).unwrap().len()).collect();
        assert_eq!(counts, vec![4, 3, 2, 1]);
        let mut tiny = ConnectedSubsets::new(&g, &VertexSet::all(4), 3);
        assert!(matches!(
            tiny.of_size(4),
            Err(FolnerError::BudgetExceeded { budget: 3 })
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(200))]
        #[test]
        fn failed_growth_is_exponential(
            deg in 2usize..=4,
            depth in 6usize..=8,
            picks in proptest::collection::vec(0usize..40, 1..4),
            e in 1i64..=5,
            r_max in 1usize..=3,
        ) {
            let w = make_tree_window(deg, depth, r_max + 1).unwrap();
            let g = &w.host;
            let near: Vec<usize> = (0..g.n()).filter(|&v| g.distance(0, v).is_some_and(|d| d <= 2)).collect();
            let l = VertexSet::from_unsorted(picks.iter().map(|&i| near[i % near.len()]).collect());
            let eps = ratio(e, 10);
            if grow_folner(&w, &l, &eps, r_max).unwrap().is_none() {
                let grown = g.ball_of_set(&l, r_max).len();
                let factor = ratio::one() + &eps / int(g.degree_bound() as i64);
                let mut bound = int(l.len() as i64);
                for _ in 0..r_max {
                    bound *= &factor;
                }
                proptest::prop_assert!(int(grown as i64) > bound);
            }
        }
    }
}
