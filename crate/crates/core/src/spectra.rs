//! Laplacian spectra, spectral windows, and neighbourhood statistics.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{rooted_signature, BallSignature, CanonError, DEFAULT_CANON_CAP};
use crate::graph::{ball, Graph, GraphError, Window};
use crate::ratio::{self, Ratio};

/// Largest graph handed to the dense eigensolver.
pub const SPECTRUM_CAP: usize = 4096;
pub const DEGREE_CAP: usize = 2000;
pub const AUDIT_POINTS: usize = 10001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("graph has {n} vertices; the eigensolver cap is {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("empty input")]
    Empty,
    #[error("window width must lie in (0, 1/2), got {0}")]
    BadWidth(f64),
    #[error("no polynomial of degree ≤ {cap} approximates the window within {eps} (best error {best})")]
    DegreeCap { cap: usize, eps: f64, best: f64 },
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Dense Laplacian `deg(x)·1 − A`.
pub fn laplacian_matrix(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for v in 0..n {
        m[(v, v)] = g.degree(v) as f64;
        for &u in g.neighbors(v) {
            m[(v, u)] = -1.0;
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub n: usize,
    /// Maximum degree.
    pub d: usize,
}

/// Eigenvalues of the Laplacian in ascending order.
pub fn laplacian_spectrum(g: &Graph) -> Result<Spectrum, SpectraError> {
    if g.n() > SPECTRUM_CAP {
        return Err(SpectraError::TooLarge {
            n: g.n(),
            cap: SPECTRUM_CAP,
        });
    }
    let mut values: Vec<f64> = if g.n() == 0 {
        Vec::new()
    } else {
        laplacian_matrix(g).symmetric_eigen().eigenvalues.iter().copied().collect()
    };
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(Spectrum {
        values,
        n: g.n(),
        d: g.max_degree(),
    })
}

/// `max(sup_a inf_b |a−b|, sup_b inf_a |a−b|)`.
pub fn hausdorff_distance(a: &[f64], b: &[f64]) -> Result<f64, SpectraError> {
    if a.is_empty() || b.is_empty() {
        return Err(SpectraError::Empty);
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| x.total_cmp(y));
        s
    };
    let (sa, sb) = (sorted(a), sorted(b));
    Ok(directed(&sa, &sb).max(directed(&sb, &sa)))
}

fn directed(from: &[f64], to: &[f64]) -> f64 {
    from.iter()
        .map(|&x| {
            let i = to.partition_point(|&y| y < x);
            let mut best = f64::INFINITY;
            if i < to.len() {
                best = best.min(to[i] - x);
            }
            if i > 0 {
                best = best.min(x - to[i - 1]);
            }
            best
        })
        .fold(0.0, f64::max)
}

/// Trapezoid: 1 on `[λ−ε/2, λ+ε/2]`, 0 outside `(λ−ε, λ+ε)`, linear between.
pub fn window_profile(lambda: f64, eps: f64, x: f64) -> f64 {
    let t = (x - lambda).abs();
    if t <= eps / 2.0 {
        1.0
    } else if t >= eps {
        0.0
    } else {
        2.0 * (eps - t) / eps
    }
}

/// Chebyshev interpolant of the window profile on `[0, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralFilter {
    pub lambda: f64,
    pub eps: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
    /// Maximum error on the audit grid.
    pub sup_error: f64,
}

impl SpectralFilter {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn to_unit(&self, x: f64) -> f64 {
        2.0 * x / self.hi - 1.0
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let t = self.to_unit(x);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    /// `p(ℒ)v` by the Clenshaw recurrence on vectors.
    pub fn apply(&self, g: &Graph, v: &[f64]) -> Vec<f64> {
        let n = g.n();
        let unit = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let lx = g.degree(i) as f64 * x[i] - g.neighbors(i).iter().map(|&j| x[j]).sum::<f64>();
                    2.0 * lx / self.hi - x[i]
                })
                .collect()
        };
        let mut b1 = vec![0.0; n];
        let mut b2 = vec![0.0; n];
        for &c in self.coeffs.iter().skip(1).rev() {
            let tb = unit(&b1);
            let b0: Vec<f64> = (0..n).map(|i| 2.0 * tb[i] - b2[i] + c * v[i]).collect();
            b2 = std::mem::replace(&mut b1, b0);
        }
        let tb = unit(&b1);
        (0..n).map(|i| tb[i] - b2[i] + self.coeffs[0] * v[i]).collect()
    }
}

fn interpolate(lambda: f64, eps: f64, hi: f64, degree: usize) -> Vec<f64> {
    let m = degree + 1;
    let samples: Vec<f64> = (0..m)
        .map(|k| {
            let t = (std::f64::consts::PI * (k as f64 + 0.5) / m as f64).cos();
            window_profile(lambda, eps, (t + 1.0) * hi / 2.0)
        })
        .collect();
    (0..m)
        .map(|j| {
            let s: f64 = samples
                .iter()
                .enumerate()
                .map(|(k, f)| f * (std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / m as f64).cos())
                .sum();
            let c = 2.0 * s / m as f64;
            if j == 0 {
                c / 2.0
            } else {
                c
            }
        })
        .collect()
}

fn audit(f: &SpectralFilter) -> f64 {
    (0..AUDIT_POINTS)
        .map(|i| {
            let x = f.hi * i as f64 / (AUDIT_POINTS - 1) as f64;
            (f.eval(x) - window_profile(f.lambda, f.eps, x)).abs()
        })
        .fold(0.0, f64::max)
}

fn build(lambda: f64, eps: f64, hi: f64, degree: usize) -> SpectralFilter {
    let mut f = SpectralFilter {
        lambda,
        eps,
        hi,
        coeffs: interpolate(lambda, eps, hi, degree),
        sup_error: 0.0,
    };
    f.sup_error = audit(&f);
    f
}

type FilterKey = (u64, u64, usize);

fn cache() -> &'static Mutex<HashMap<FilterKey, Arc<SpectralFilter>>> {
    static CACHE: OnceLock<Mutex<HashMap<FilterKey, Arc<SpectralFilter>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Low-degree interpolant with audited error `≤ ε` on `[0, 2d]` (`[0, 2]`
/// when `d = 0`). Degrees are searched by doubling, then bisection.
pub fn spectral_filter(lambda: f64, eps: f64, d: usize) -> Result<Arc<SpectralFilter>, SpectraError> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(SpectraError::BadWidth(eps));
    }
    let key = (lambda.to_bits(), eps.to_bits(), d);
    if let Some(f) = cache().lock().expect("filter cache").get(&key) {
        return Ok(f.clone());
    }
    let hi = 2.0 * d.max(1) as f64;
    let mut lo_deg = 0;
    let mut deg = 4;
    let mut found = loop {
        let f = build(lambda, eps, hi, deg.min(DEGREE_CAP));
        if f.sup_error <= eps {
            break f;
        }
        if deg >= DEGREE_CAP {
            return Err(SpectraError::DegreeCap {
                cap: DEGREE_CAP,
                eps,
                best: f.sup_error,
            });
        }
        lo_deg = deg;
        deg *= 2;
    };
    let mut hi_deg = found.degree();
    while hi_deg - lo_deg > 1 {
        let mid = (lo_deg + hi_deg) / 2;
        let f = build(lambda, eps, hi, mid);
        if f.sup_error <= eps {
            hi_deg = mid;
            found = f;
        } else {
            lo_deg = mid;
        }
    }
    let found = Arc::new(found);
    cache().lock().expect("filter cache").insert(key, found.clone());
    Ok(found)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowVerdict {
    pub hit: bool,
    /// `‖p(ℒ)‖`.
    pub norm: f64,
    pub degree: usize,
    pub sup_error: f64,
    /// True when the norm came from power iteration.
    pub approximate: bool,
}

/// Whether `‖p(ℒ)‖ > ε` for the window polynomial at `λ`; a hit certifies a
/// Laplacian eigenvalue within `ε` of `λ`, and any eigenvalue within `ε/2`
/// forces a hit.
pub fn spectral_window_test(g: &Graph, lambda: f64, eps: f64) -> Result<WindowVerdict, SpectraError> {
    let f = spectral_filter(lambda, eps, g.max_degree())?;
    let spec = laplacian_spectrum(g)?;
    let norm = spec.values.iter().map(|&k| f.eval(k).abs()).fold(0.0, f64::max);
    Ok(WindowVerdict {
        hit: norm > eps,
        norm,
        degree: f.degree(),
        sup_error: f.sup_error,
        approximate: false,
    })
}

/// Matrix-free variant: `‖p(ℒ)‖` estimated by power iteration on `p(ℒ)²`.
pub fn spectral_window_test_iterative(
    g: &Graph,
    lambda: f64,
    eps: f64,
    iters: usize,
) -> Result<WindowVerdict, SpectraError> {
    let f = spectral_filter(lambda, eps, g.max_degree())?;
    let n = g.n();
    if n == 0 {
        return Err(SpectraError::Empty);
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let mut norm = 0.0;
    for _ in 0..iters {
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= len);
        let w = f.apply(g, &v);
        norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = f.apply(g, &w);
    }
    Ok(WindowVerdict {
        hit: norm > eps,
        norm,
        degree: f.degree(),
        sup_error: f.sup_error,
        approximate: true,
    })
}

/// Distinct signatures of the radius-`r` balls at the interior roots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodProfile {
    pub r: usize,
    pub signatures: BTreeSet<BallSignature>,
}

pub fn neighborhood_profile(w: &Window, r: usize) -> Result<NeighborhoodProfile, SpectraError> {
    if w.margin < r {
        return Err(GraphError::MarginViolation {
            vertex: w.interior.as_slice().first().copied().unwrap_or(0),
            radius: r,
        }
        .into());
    }
    let mut signatures = BTreeSet::new();
    for &x in w.interior.iter() {
        let b = ball(&w.host, x, r)?;
        signatures.insert(rooted_signature(&b.graph, b.local_root, DEFAULT_CANON_CAP)?);
    }
    Ok(NeighborhoodProfile { r, signatures })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodDistance {
    /// `2^{−n}`, or 0 when the profiles agree through the cap.
    #[serde(with = "ratio::serde_ratio")]
    pub value: Ratio,
    /// 1-based rank of the first differing ball.
    pub index: Option<usize>,
    pub radius: Option<usize>,
    pub agree_to_cap: bool,
}

/// Profiles for every radius `0..=r_cap`.
pub fn profiles(w: &Window, r_cap: usize) -> Result<Vec<NeighborhoodProfile>, SpectraError> {
    (0..=r_cap).map(|r| neighborhood_profile(w, r)).collect()
}

/// Balls of both profiles are ranked by (radius, size, signature bytes);
/// `n` is the rank of the first ball present in exactly one of them.
pub fn profile_distance(a: &[NeighborhoodProfile], b: &[NeighborhoodProfile]) -> NeighborhoodDistance {
    let mut rank = 0usize;
    for (pa, pb) in a.iter().zip(b) {
        let mut union: Vec<(&BallSignature, bool)> = pa
            .signatures
            .union(&pb.signatures)
            .map(|s| (s, pa.signatures.contains(s) != pb.signatures.contains(s)))
            .collect();
        union.sort_by(|x, y| (x.0.size(), x.0.as_bytes()).cmp(&(y.0.size(), y.0.as_bytes())));
        for (_, differs) in union {
            rank += 1;
            if differs {
                return NeighborhoodDistance {
                    value: ratio::one() / Ratio::from_integer(num_bigint::BigInt::from(2).pow(rank as u32)),
                    index: Some(rank),
                    radius: Some(pa.r),
                    agree_to_cap: false,
                };
            }
        }
    }
    NeighborhoodDistance {
        value: ratio::zero(),
        index: None,
        radius: None,
        agree_to_cap: true,
    }
}

pub fn neighborhood_distance(g: &Graph, h: &Graph, r_cap: usize) -> Result<NeighborhoodDistance, SpectraError> {
    let a = profiles(&Window::whole(g.clone()), r_cap)?;
    let b = profiles(&Window::whole(h.clone()), r_cap)?;
    Ok(profile_distance(&a, &b))
}

/// Reference object for a convergence experiment: a window supplying
/// neighbourhoods and an approximant of the limit spectrum.
pub struct LimitProxy {
    pub window: Window,
    pub spectrum: Vec<f64>,
}

impl LimitProxy {
    pub fn from_graph(g: &Graph) -> Result<Self, SpectraError> {
        Ok(LimitProxy {
            spectrum: laplacian_spectrum(g)?.values,
            window: Window::whole(g.clone()),
        })
    }
}

/// `{(2 − 2cos θ) + (2 − 2cos ψ)}` over `θ, ψ ∈ 2πℤ/m`.
pub fn torus_spectrum_grid(m: usize) -> Vec<f64> {
    let c: Vec<f64> = (0..m)
        .map(|a| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * a as f64 / m as f64).cos())
        .collect();
    let mut out: Vec<f64> = c.iter().flat_map(|x| c.iter().map(move |y| x + y)).collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub index: usize,
    pub n: usize,
    pub neighborhood_distance: Option<String>,
    pub agree_to_cap: Option<bool>,
    pub hausdorff: Option<f64>,
    pub note: String,
}

pub fn convergence_experiment(
    seq: &[Graph],
    proxy: &LimitProxy,
    r_cap: usize,
    size_cap: usize,
) -> Result<Vec<ConvergenceRow>, SpectraError> {
    let target = profiles(&proxy.window, r_cap)?;
    let mut rows = Vec::with_capacity(seq.len());
    for (index, g) in seq.iter().enumerate() {
        let mut row = ConvergenceRow {
            index,
            n: g.n(),
            neighborhood_distance: None,
            agree_to_cap: None,
            hausdorff: None,
            note: String::new(),
        };
        if g.n() > size_cap.min(SPECTRUM_CAP) {
            row.note = format!("skipped: {} vertices exceed the cap {}", g.n(), size_cap.min(SPECTRUM_CAP));
            rows.push(row);
            continue;
        }
        match profiles(&Window::whole(g.clone()), r_cap) {
            Ok(p) => {
                let d = profile_distance(&p, &target);
                row.neighborhood_distance = Some(ratio::fmt_ratio(&d.value));
                row.agree_to_cap = Some(d.agree_to_cap);
            }
            Err(e) => row.note = format!("profile: {e}"),
        }
        let spec = laplacian_spectrum(g)?;
        row.hausdorff = Some(hausdorff_distance(&spec.values, &proxy.spectrum)?);
        rows.push(row);
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[ConvergenceRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "n", "neighborhood_distance", "agree_to_cap", "hausdorff", "note"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.n.to_string(),
            r.neighborhood_distance.clone().unwrap_or_default(),
            r.agree_to_cap.map(|b| b.to_string()).unwrap_or_default(),
            r.hausdorff.map(|h| format!("{h:.12}")).unwrap_or_default(),
            r.note.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{make_cycle, make_path, make_torus, z2_window};
    use crate::ratio::{int, ratio};
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
    }

    #[test]
    fn spectrum_examples() {
        assert!(close(&laplacian_spectrum(&Graph::empty(1, 0)).unwrap().values, &[0.0]));
        assert!(close(&laplacian_spectrum(&make_path(2)).unwrap().values, &[0.0, 2.0]));
        assert!(close(&laplacian_spectrum(&make_cycle(4)).unwrap().values, &[0.0, 2.0, 2.0, 4.0]));
    }

    #[test]
    fn cycle_spectra_match_closed_form() {
        for n in 3..=64usize {
            let mut expect: Vec<f64> = (0..n)
                .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                .collect();
            expect.sort_by(|a, b| a.total_cmp(b));
            assert!(close(&laplacian_spectrum(&make_cycle(n)).unwrap().values, &expect), "C_{n}");
        }
    }

    #[test]
    fn hausdorff_examples() {
        let s = [0.0, 1.5, 3.0];
        assert_eq!(hausdorff_distance(&s, &s).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(hausdorff_distance(&[0.0, 2.0, 4.0], &[1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(hausdorff_distance(&[], &[1.0]), Err(SpectraError::Empty));
    }

    #[test]
    fn window_examples() {
        let c4 = make_cycle(4);
        assert!(!spectral_window_test(&c4, 5.0, 0.1).unwrap().hit);
        assert!(spectral_window_test(&c4, 4.0, 0.1).unwrap().hit);
        assert!(!spectral_window_test(&make_path(2), 1.0, 0.3).unwrap().hit);
        assert!(matches!(spectral_window_test(&c4, 1.0, 0.5), Err(SpectraError::BadWidth(_))));
        let f = spectral_filter(4.0, 0.1, 2).unwrap();
        assert!(f.sup_error <= 0.1);
        assert!(f.degree() <= DEGREE_CAP);
    }

    #[test]
    fn iterative_norm_matches_eigen_norm() {
        let g = make_torus(2, 6).unwrap();
        for lambda in [0.0, 2.0, 3.3, 6.0] {
            let exact = spectral_window_test(&g, lambda, 0.25).unwrap();
            let approx = spectral_window_test_iterative(&g, lambda, 0.25, 200).unwrap();
            assert!((exact.norm - approx.norm).abs() < 1e-3, "λ = {lambda}");
            assert!(approx.approximate);
        }
    }

    #[test]
    fn profile_examples() {
        let t = Window::whole(make_torus(2, 8).unwrap());
        assert_eq!(neighborhood_profile(&t, 3).unwrap().signatures.len(), 1);
        assert_eq!(neighborhood_profile(&Window::whole(make_path(5)), 1).unwrap().signatures.len(), 2);
        assert_eq!(neighborhood_profile(&Window::whole(Graph::empty(1, 0)), 2).unwrap().signatures.len(), 1);
        let z = z2_window(6, 2);
        assert_eq!(neighborhood_profile(&z.window, 2).unwrap().signatures.len(), 1);
        assert!(neighborhood_profile(&z.window, 3).is_err());
    }

    #[test]
    fn distance_examples() {
        let p3 = make_path(3);
        let p4 = make_path(4);
        assert_eq!(neighborhood_distance(&p3, &p3, 4).unwrap().value, int(0));
        // radius 0: 1 ball; radius 1: 2 balls; radius 2 starts with P₃ rooted
        // at its centre, which P₄ lacks
        let d = neighborhood_distance(&p3, &p4, 4).unwrap();
        assert_eq!(d.index, Some(4));
        assert_eq!(d.radius, Some(2));
        assert_eq!(d.value, ratio(1, 16));
        let a = neighborhood_profile(&Window::whole(p3.clone()), 2).unwrap();
        let b = neighborhood_profile(&Window::whole(p4.clone()), 2).unwrap();
        let second = rooted_signature(&p4, 1, 64).unwrap();
        let centre = rooted_signature(&p3, 1, 64).unwrap();
        let diff: BTreeSet<_> = a.signatures.symmetric_difference(&b.signatures).cloned().collect();
        assert_eq!(diff, BTreeSet::from([second, centre]));
        let t8 = make_torus(2, 8).unwrap();
        let t12 = make_torus(2, 12).unwrap();
        let d = neighborhood_distance(&t8, &t12, 3).unwrap();
        assert!(d.agree_to_cap);
        let d = neighborhood_distance(&t8, &t12, 4).unwrap();
        assert_eq!(d.radius, Some(4));
    }

    #[test]
    fn distance_is_an_ultrametric_on_corpus() {
        let mut corpus = vec![make_path(3), make_path(4), make_path(6), make_cycle(5), make_cycle(6), make_cycle(9)];
        corpus.push(make_torus(2, 4).unwrap());
        corpus.push(make_torus(2, 5).unwrap());
        corpus.push(crate::generators::make_grid(3, 4));
        let r = 3;
        let ps: Vec<_> = corpus
            .iter()
            .map(|g| profiles(&Window::whole(g.clone()), r).unwrap())
            .collect();
        for a in &ps {
            assert_eq!(profile_distance(a, a).value, int(0));
            for b in &ps {
                let ab = profile_distance(a, b).value;
                assert_eq!(ab, profile_distance(b, a).value);
                for c in &ps {
                    let ac = profile_distance(a, c).value;
                    let cb = profile_distance(c, b).value;
                    assert!(ab <= std::cmp::max(ac, cb));
                }
            }
        }
    }

    #[test]
    fn convergence_examples() {
        let seq: Vec<Graph> = [8, 16, 32].iter().map(|&n| make_torus(2, n).unwrap()).collect();
        let proxy = LimitProxy {
            window: z2_window(8, 4).window,
            spectrum: torus_spectrum_grid(256),
        };
        let rows = convergence_experiment(&seq, &proxy, 3, 2000).unwrap();
        let h: Vec<f64> = rows.iter().map(|r| r.hausdorff.unwrap()).collect();
        assert!(h[0] > h[1] && h[1] > h[2], "{h:?}");
        assert!(rows.iter().all(|r| r.agree_to_cap == Some(true)));

        let g = make_cycle(7);
        let proxy = LimitProxy::from_graph(&g).unwrap();
        let rows = convergence_experiment(&[g.clone(), g.clone(), g.clone()], &proxy, 3, 100).unwrap();
        for r in &rows {
            assert_eq!(r.hausdorff, Some(0.0));
            assert_eq!(r.neighborhood_distance.as_deref(), Some("0"));
        }

        let rows = convergence_experiment(&[g.clone(), make_cycle(500)], &proxy, 2, 100).unwrap();
        assert!(rows[1].note.starts_with("skipped"));
        assert!(rows[1].hausdorff.is_none());
        let csv = rows_to_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("index,n,"));
    }

    fn random_graph() -> impl Strategy<Value = Graph> {
        (2usize..=30, proptest::collection::vec((0usize..30, 0usize..30), 0..60)).prop_map(|(n, pairs)| {
            let mut g = Graph::empty(n, 4);
            for (a, b) in pairs {
                let (a, b) = (a % n, b % n);
                if a != b && !g.has_edge(a, b) && g.degree(a) < 4 && g.degree(b) < 4 {
                    g.add_edge(a, b).unwrap();
                }
            }
            g
        })
    }

    const PAIRS: [(f64, f64); 20] = [
        (0.0, 0.1), (0.5, 0.2), (1.0, 0.3), (1.3, 0.45), (2.0, 0.1),
        (2.5, 0.25), (3.0, 0.2), (3.7, 0.3), (4.0, 0.15), (4.6, 0.4),
        (5.1, 0.2), (5.5, 0.35), (6.0, 0.1), (6.2, 0.3), (7.0, 0.2),
        (7.5, 0.45), (8.0, 0.25), (0.75, 0.15), (2.9, 0.4), (9.0, 0.3),
    ];

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn window_test_is_sound_and_complete(g in random_graph()) {
            let spec = laplacian_spectrum(&g).unwrap();
            let d = spec.d as f64;
            for &k in &spec.values {
                prop_assert!(k >= -1e-9 && k <= 2.0 * d + 1e-9);
            }
            for &(lambda, eps) in &PAIRS {
                let dist = spec.values.iter().map(|k| (k - lambda).abs()).fold(f64::INFINITY, f64::min);
                let v = spectral_window_test(&g, lambda, eps).unwrap();
                if v.hit {
                    prop_assert!(dist < eps, "false hit at λ={lambda} ε={eps}, dist {dist}");
                }
                if dist <= eps / 2.0 {
                    prop_assert!(v.hit, "missed λ={lambda} ε={eps}, dist {dist}");
                }
            }
        }
    }
}
