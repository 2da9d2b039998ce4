//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use folner::extract::{extract_folner_from_function, verify_extraction, ExtractOptions};
use folner::folner::{folner_quality, function_defect, min_folner_in_ball, FolnerFunction, DEFAULT_ENUM_BUDGET};
use folner::generators::{
    admissible_mixture, algebraic_connectivity, make_cycle, make_grid, make_path, make_torus, pushforward_function,
    random_regular, z2_window, Lattice,
};
use folner::graph::{Graph, VertexSet, Window};
use folner::hierarchy::{
    separator_measure_lp_with, minimal_separators, validate_witness, witness_from_measure, Dichotomy,
    SeparatorMeasure,
};
use folner::ratio::{self, int, ratio, Ratio};
use folner::spectra::{
    hausdorff_distance, laplacian_spectrum, neighborhood_profile, profile_distance, profiles,
    spectral_window_test, torus_spectrum_grid,
};
use folner::tiling::{
    complete_tiling_hall, distribution_stats, fractional_from_distribution, ow_packing, propa_from_fractional,
    shifted_block_distribution, HallOutcome, Packing,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn set(v: &[usize]) -> VertexSet {
    VertexSet::from_unsorted(v.to_vec())
}

/// Connected graphs on `n` vertices up to isomorphism, by brute-force
/// canonical edge masks.
fn connected_graphs(n: usize) -> Vec<Graph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    let mut index = vec![vec![0usize; n]; n];
    for (i, &(u, v)) in pairs.iter().enumerate() {
        index[u][v] = i;
        index[v][u] = i;
    }
    let mut perms = Vec::new();
    permutations(&mut (0..n).collect::<Vec<_>>(), 0, &mut perms);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        let edges: Vec<(usize, usize)> = (0..pairs.len()).filter(|i| mask >> i & 1 == 1).map(|i| pairs[i]).collect();
        let g = Graph::from_edges_auto(n, edges.iter().copied()).unwrap();
        if !g.is_connected() {
            continue;
        }
        let canon = perms
            .iter()
            .map(|p| edges.iter().fold(0u32, |m, &(u, v)| m | 1 << index[p[u]][p[v]]))
            .min()
            .unwrap();
        if seen.insert(canon) {
            out.push(g);
        }
    }
    out
}

fn permutations(a: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == a.len() {
        out.push(a.clone());
        return;
    }
    for i in k..a.len() {
        a.swap(k, i);
        permutations(a, k + 1, out);
        a.swap(k, i);
    }
}

fn c1_lp_duality() -> Outcome {
    let counts: Vec<usize> = (1..=6).map(|n| connected_graphs(n).len()).collect();
    ensure(counts == [1, 1, 2, 6, 21, 112], || format!("graph counts {counts:?}"))?;
    let mut solves = 0;
    let mut measures = 0;
    for n in 1..=6 {
        for g in connected_graphs(n) {
            for k in 1..=3 {
                let seps = minimal_separators(&g, k);
                for e in 1..=9 {
                    let eps = ratio(e, 10);
                    let out = separator_measure_lp_with(&g, &eps, k, &seps, true).map_err(|e| e.to_string())?;
                    solves += 1;
                    ensure(out.primal_threshold == out.dual_threshold, || {
                        format!("thresholds differ on {:?}", g.to_text())
                    })?;
                    match &out.result {
                        Dichotomy::Measure(m) => {
                            measures += 1;
                            m.validate(&g)?;
                            ensure(m.max_marginal(g.n()) <= eps && out.primal_threshold <= eps, || {
                                "measure exceeds ε".into()
                            })?;
                        }
                        Dichotomy::Dual(d) => {
                            d.validate(&g)?;
                            ensure(out.dual_threshold > eps, || "dual at threshold ≤ ε".into())?;
                        }
                    }
                }
            }
        }
    }
    Ok(format!(
        "{} connected graphs (112 on six vertices), {solves} exact solves, {measures} measures, {} dual certificates, thresholds equal",
        counts.iter().sum::<usize>(),
        solves - measures
    ))
}

fn c2_extraction() -> Outcome {
    let eps = ratio(1, 2);
    let mut min_mass: Option<Ratio> = None;
    let mut max_quality: Option<Ratio> = None;
    let mut whole = 0;
    for seed in 0..200 {
        let (g, p) = admissible_mixture(60, &eps, seed).map_err(|e| e.to_string())?;
        let (h, mass, trace) =
            extract_folner_from_function(&g, &p, &eps, &ExtractOptions::default()).map_err(|e| e.to_string())?;
        ensure(trace.defect_below_delta, || format!("seed {seed} not admissible"))?;
        let q = folner_quality(&g, &h).map_err(|e| e.to_string())?;
        ensure(q < eps && mass > ratio(1, 2), || {
            format!("seed {seed}: quality {} mass {}", ratio::fmt_ratio(&q), ratio::fmt_ratio(&mass))
        })?;
        verify_extraction(&g, &p, &trace).map_err(|e| format!("seed {seed}: {e}"))?;
        if h.len() == g.n() {
            whole += 1;
        }
        min_mass = Some(min_mass.map_or(mass.clone(), |m| m.min(mass)));
        max_quality = Some(max_quality.map_or(q.clone(), |m| m.max(q)));
    }
    Ok(format!(
        "200/200 on 60×60: max quality {:.4} < 1/2, min mass {:.4} > 1/2, all traces re-verified; H = V in {whole}/200",
        ratio::to_f64(&max_quality.unwrap()),
        ratio::to_f64(&min_mass.unwrap())
    ))
}

fn c3_long_cycle() -> Outcome {
    let g = make_cycle(12);
    let mu = SeparatorMeasure::new(3, (0..4).map(|s| (set(&[s, s + 4, s + 8]), ratio(1, 4))).collect());
    mu.validate(&g)?;
    let mw = witness_from_measure(&Window::whole(g.clone()), &mu, Some(&int(1))).map_err(|e| e.to_string())?;
    let report = validate_witness(&g, &mw.witness, &(&mw.max_bound + ratio(1, 10)), mw.witness.radius);
    ensure(report.passes, || format!("{:?}", report.failures))?;
    for eb in &mw.edge_bounds {
        let l1 = mw.witness.l1_distance(eb.edge.0, eb.edge.1);
        ensure(l1 == eb.bound, || format!("edge {:?}: bound {} vs ℓ₁ {}", eb.edge, eb.bound, l1))?;
    }
    ensure(report.max_edge_l1 == mw.max_bound, || "maximum mismatch".into())?;
    Ok(format!(
        "C₁₂, marginals 1/4: per-edge bounds equal recomputed ℓ₁ on all {} edges, max {}",
        mw.edge_bounds.len(),
        ratio::fmt_ratio(&mw.max_bound)
    ))
}

fn translates(n: usize, k: usize) -> Vec<VertexSet> {
    (0..n * n)
        .map(|c| {
            let (a, b) = (c / n, c % n);
            VertexSet::from_unsorted(
                (0..k)
                    .flat_map(|i| (0..k).map(move |j| ((a + i) % n) * n + (b + j) % n))
                    .collect(),
            )
        })
        .collect()
}

fn c4_tiling() -> Outcome {
    let g = make_torus(2, 24).map_err(|e| e.to_string())?;
    let eps = ratio(3, 5);
    let family = translates(24, 6);
    let rep = ow_packing(&g, &family, &[VertexSet::all(576)], DEFAULT_ENUM_BUDGET).map_err(|e| e.to_string())?;
    ensure(rep.min_fraction == int(1) && rep.total_coverage == 576 && rep.packing.len() == 16, || {
        format!("coverage {} with {} tiles", ratio::fmt_ratio(&rep.min_fraction), rep.packing.len())
    })?;
    for t in &rep.packing {
        let q = folner_quality(&g, t).map_err(|e| e.to_string())?;
        ensure(q == ratio(20, 36), || format!("tile quality {}", ratio::fmt_ratio(&q)))?;
    }
    let cover = fractional_from_distribution(&shifted_block_distribution(24, 6).map_err(|e| e.to_string())?);
    let (k, r) = (6, 10);
    let mut worst = (int(0), 0);
    for drop in 0..rep.packing.len() {
        let mut sets = rep.packing.clone();
        sets.remove(drop);
        let packing = Packing {
            sets,
            eps: eps.clone(),
            r,
        };
        match complete_tiling_hall(&g, &packing, &cover, &eps, k).map_err(|e| e.to_string())? {
            HallOutcome::Tiling(c) => {
                c.tiling.validate(&g)?;
                ensure(c.max_quality <= &eps * int(5) && c.max_diameter <= 2 * k + r, || {
                    format!("bounds fail after deleting tile {drop}")
                })?;
                worst = (worst.0.max(c.max_quality.clone()), worst.1.max(c.max_diameter));
            }
            HallOutcome::Deficiency(d) => return Err(format!("deficiency {:?}", d.m)),
        }
    }
    Ok(format!(
        "16 tiles from 576 translates, coverage 1, quality 20/36 each; Hall completion after each single deletion: max quality {} ≤ 3, max diameter {} ≤ 22",
        ratio::fmt_ratio(&worst.0),
        worst.1
    ))
}

fn c5_random_tiling() -> Outcome {
    let g = make_torus(2, 24).map_err(|e| e.to_string())?;
    let dist = shifted_block_distribution(24, 6).map_err(|e| e.to_string())?;
    dist.validate()?;
    let stats = distribution_stats(&g, &dist).map_err(|e| e.to_string())?;
    let target = ratio(20, 36);
    let bad = stats.boundary.iter().filter(|b| **b != target).count();
    ensure(stats.boundary.len() == 576 && bad == 0, || format!("{bad} vertices differ"))?;
    Ok("boundary probability exactly 20/36 at all 576 vertices".into())
}

fn c6_short_cycle() -> Outcome {
    let g = make_torus(2, 24).map_err(|e| e.to_string())?;
    let eps = ratio(3, 5);
    let cover = fractional_from_distribution(&shifted_block_distribution(24, 6).map_err(|e| e.to_string())?);
    let f = cover.map()?;
    let mut sums = vec![int(0); 576];
    for (h, w) in &f {
        for &x in h.iter() {
            sums[x] += w;
        }
    }
    ensure(sums.iter().all(|s| *s == int(1)), || "Σ F ≠ 1".into())?;
    ensure(cover.c.iter().all(|c| *c == int(0)), || "c_x ≠ 0".into())?;
    let fw = propa_from_fractional(&g, &cover).map_err(|e| e.to_string())?;
    let report = validate_witness(&g, &fw.witness, &(&eps * int(4)), fw.witness.radius);
    ensure(report.passes, || format!("{:?}", report.failures))?;
    let bound = &eps * int(2 * 4);
    ensure(fw.max_defect <= bound, || format!("defect {}", ratio::fmt_ratio(&fw.max_defect)))?;
    Ok(format!(
        "Σ F = 1 and c = 0 exactly; witness max ℓ₁ {} < 4ε = 12/5; max defect {} ≤ 2dε = 24/5",
        ratio::fmt_ratio(&report.max_edge_l1),
        ratio::fmt_ratio(&fw.max_defect)
    ))
}

fn c7_spectra() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 3..=64 {
        let s = laplacian_spectrum(&make_cycle(n)).map_err(|e| e.to_string())?.values;
        let mut exact: Vec<f64> = (0..n)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        exact.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in s.iter().zip(&exact) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-9, || format!("cycle eigenvalue error {worst:e}"))?;
    let proxy = torus_spectrum_grid(256);
    let d: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let s = laplacian_spectrum(&make_torus(2, n).unwrap()).unwrap().values;
            hausdorff_distance(&s, &proxy).unwrap()
        })
        .collect();
    ensure(d[0] > d[1] && d[1] > d[2], || format!("Hausdorff distances {d:?}"))?;
    Ok(format!(
        "C₃…C₆₄ max error {worst:.1e}; Hausdorff to torus_256: {:.4} > {:.4} > {:.4}",
        d[0], d[1], d[2]
    ))
}

const PAIRS: [(f64, f64); 20] = [
    (0.0, 0.1), (0.5, 0.2), (1.0, 0.3), (1.3, 0.45), (2.0, 0.1),
    (2.5, 0.25), (3.0, 0.2), (3.7, 0.3), (4.0, 0.15), (4.6, 0.4),
    (5.1, 0.2), (5.5, 0.35), (6.0, 0.1), (6.2, 0.3), (7.0, 0.2),
    (7.5, 0.45), (8.0, 0.25), (0.75, 0.15), (2.9, 0.4), (9.0, 0.3),
];

fn seeded_graph(seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=30);
    let mut g = Graph::empty(n, 4);
    for _ in 0..rng.gen_range(0..3 * n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && !g.has_edge(a, b) && g.degree(a) < 4 && g.degree(b) < 4 {
            g.add_edge(a, b).unwrap();
        }
    }
    g
}

fn c8_window_test() -> Outcome {
    let (mut sound, mut complete, mut hits, mut forced) = (0, 0, 0, 0);
    for seed in 0..200 {
        let g = seeded_graph(seed);
        let spec = laplacian_spectrum(&g).map_err(|e| e.to_string())?.values;
        for &(lambda, eps) in &PAIRS {
            let dist = spec.iter().map(|k| (k - lambda).abs()).fold(f64::INFINITY, f64::min);
            let v = spectral_window_test(&g, lambda, eps).map_err(|e| e.to_string())?;
            if v.hit {
                hits += 1;
                if dist >= eps {
                    sound += 1;
                }
            }
            if dist <= eps / 2.0 {
                forced += 1;
                if !v.hit {
                    complete += 1;
                }
            }
        }
    }
    ensure(sound == 0 && complete == 0, || {
        format!("{sound} soundness and {complete} completeness violations")
    })?;
    Ok(format!(
        "4000 tests: {hits} hits, {forced} forced; 0 soundness, 0 completeness violations"
    ))
}

fn c9_profiles() -> Outcome {
    for n in 4..=10 {
        let w = Window::whole(make_torus(2, n).map_err(|e| e.to_string())?);
        for r in 0..=(n - 2) / 2 {
            let p = neighborhood_profile(&w, r).map_err(|e| e.to_string())?;
            ensure(p.signatures.len() == 1, || format!("torus_{n} r={r}: {} signatures", p.signatures.len()))?;
        }
    }
    for n in 3..=12 {
        let p = neighborhood_profile(&Window::whole(make_path(n)), 1).map_err(|e| e.to_string())?;
        ensure(p.signatures.len() == 2, || format!("P_{n}: {} signatures", p.signatures.len()))?;
    }
    let mut corpus: Vec<Graph> = Vec::new();
    corpus.extend((3..=7).map(make_cycle));
    corpus.extend((2..=6).map(make_path));
    corpus.extend([make_grid(2, 3), make_grid(3, 3), make_grid(3, 4), make_grid(4, 4)]);
    corpus.extend((4..=6).map(|n| make_torus(2, n).unwrap()));
    corpus.extend((0..3).map(|s| random_regular(10, 3, s).unwrap()));
    ensure(corpus.len() == 20, || "corpus size".into())?;
    let profs = corpus
        .iter()
        .map(|g| profiles(&Window::whole(g.clone()), 3))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let d = |a: usize, b: usize| profile_distance(&profs[a], &profs[b]).value;
    let mut triples = 0;
    for a in 0..20 {
        for b in 0..20 {
            for c in 0..20 {
                triples += 1;
                let (ac, ab, bc) = (d(a, c), d(a, b), d(b, c));
                ensure(ac <= ab.clone().max(bc), || format!("ultrametric fails on ({a},{b},{c})"))?;
            }
        }
    }
    Ok(format!(
        "torus_4…torus_10 one signature per radius; P_3…P_12 two at radius 1; ultrametric on {triples} triples"
    ))
}

fn subsets_up_to(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == k {
            return;
        }
        for v in start..n {
            cur.push(v);
            rec(v + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn c10_expander() -> Outcome {
    let eps = ratio(2, 5);
    let subsets = subsets_up_to(14, 7);
    let mut used = 0;
    let mut lowest_gap = f64::INFINITY;
    for seed in 0..20 {
        let g = random_regular(14, 3, seed).map_err(|e| e.to_string())?;
        let l2 = algebraic_connectivity(&g);
        if l2 < 0.3 {
            continue;
        }
        used += 1;
        let min = subsets
            .iter()
            .map(|s| ratio::to_f64(&folner_quality(&g, &set(s)).unwrap()))
            .fold(f64::INFINITY, f64::min);
        ensure(min >= l2 / 6.0, || format!("seed {seed}: min quality {min} < λ₂/6 = {}", l2 / 6.0))?;
        lowest_gap = lowest_gap.min(min - l2 / 6.0);
        let w = Window::whole(g.clone());
        for x in 0..14 {
            let found = min_folner_in_ball(&w, x, 1, &eps, DEFAULT_ENUM_BUDGET).map_err(|e| e.to_string())?;
            ensure(found.is_none(), || format!("seed {seed}: ε-Følner set {found:?} in B_1({x})"))?;
        }
    }
    ensure(used > 0, || "no instance reached λ₂ ≥ 0.3".into())?;
    Ok(format!(
        "{used} instances with λ₂ ≥ 0.3: min quality over |S| ≤ 7 exceeds λ₂/6 (smallest margin {lowest_gap:.4}); no 2/5-Følner set in any radius-1 ball"
    ))
}

fn c11_pushforward() -> Outcome {
    let cw = z2_window(8, 2);
    let lattices = [
        vec![vec![1, 0]],
        vec![vec![5, 0], vec![0, 5]],
        vec![vec![3, 1], vec![0, 4]],
        vec![vec![2, 2]],
    ];
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: BTreeMap<usize, Ratio> = (0..rng.gen_range(1..15))
            .map(|_| {
                let p = [rng.gen_range(-6..6), rng.gen_range(-6..6)];
                (cw.id(&p).unwrap(), int(rng.gen_range(1..20)))
            })
            .collect();
        let f = FolnerFunction::new(entries).map_err(|e| e.to_string())?;
        let lat = Lattice::new(2, &lattices[seed as usize % 4]).map_err(|e| e.to_string())?;
        let pf = pushforward_function(&cw, &f, &lat).map_err(|e| e.to_string())?;
        ensure(&pf.mass() == f.mass(), || format!("seed {seed}: mass changed"))?;
        let before = function_defect(cw.graph(), &f).map_err(|e| e.to_string())?;
        ensure(pf.defect(&cw.spec.generators) <= before, || format!("seed {seed}: defect grew"))?;
    }
    Ok("100 functions on the Z² window over 4 lattices: mass equal, defect non-increasing".into())
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 11] = [
        ("LP duality dichotomy", Duration::from_secs(600), c1_lp_duality),
        ("extraction on admissible mixtures", Duration::from_secs(300), c2_extraction),
        ("long-cycle round trip", Duration::MAX, c3_long_cycle),
        ("tiling pipeline", Duration::from_secs(120), c4_tiling),
        ("randomized tiling", Duration::MAX, c5_random_tiling),
        ("short-cycle round trip", Duration::MAX, c6_short_cycle),
        ("spectra", Duration::from_secs(120), c7_spectra),
        ("window test soundness/completeness", Duration::MAX, c8_window_test),
        ("neighbourhood profiles", Duration::MAX, c9_profiles),
        ("expander negative control", Duration::from_secs(180), c10_expander),
        ("pushforward", Duration::MAX, c11_pushforward),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut outcome = f();
        let took = start.elapsed();
        if outcome.is_ok() && took > *limit {
            outcome = Err(format!("runtime {took:.1?} exceeds {limit:?}"));
        }
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.1?}]", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason} [{took:.1?}]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
