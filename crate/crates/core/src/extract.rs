//! Extraction of a large Følner set from a Følner function by level sets.
//!
//! With `q` the least integer above `16/ε²` and `σ = 1.1^{1/(4q)}` (so that
//! `σ² = 1 + ρ` and `(1+ρ)^{2q} = 1.1`), every threshold has the form
//! `2^k · s · σ^e`. Comparisons against such thresholds are exact: a fast
//! floating-point test is trusted only outside a guard band, otherwise
//! `r^{4q}` is compared with `1.1^e` in integers.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::folner::{folner_quality, function_defect, FolnerError, FolnerFunction};
use crate::graph::{Graph, VertexSet};
use crate::ratio::{self, Ratio};

pub const TRACE_SCHEMA: &str = "extraction-trace/v1";

/// Bits of the dyadic enclosure of σ reported in traces.
const ENCLOSURE_BITS: u64 = 128;
const GUARD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("ε must lie in (0, 1), got {0}")]
    BadEps(String),
    #[error("function must have total mass 1, got {0}")]
    NotNormalized(String),
    #[error("value {value} at vertex {vertex} is not below 1/2")]
    ValueTooLarge { vertex: usize, value: String },
    #[error("defect {defect} is not below δ(ε) ∈ [{delta_lo}, {delta_hi}]")]
    DefectTooLarge {
        defect: String,
        delta_lo: String,
        delta_hi: String,
    },
    #[error("no index l with p(T_l) ≤ 1/q")]
    NoQuietBand,
    #[error(transparent)]
    Folner(#[from] FolnerError),
}

fn ln_big(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        n.to_f64().expect("finite").abs().ln()
    } else {
        let shift = bits - 900;
        (n.abs() >> shift as usize).to_f64().expect("finite").ln() + shift as f64 * std::f64::consts::LN_2
    }
}

fn ln_ratio(r: &Ratio) -> f64 {
    ln_big(r.numer()) - ln_big(r.denom())
}

/// Exact comparisons against `σ^e` with `σ^{4q} = 11/10`.
#[derive(Clone, Debug)]
pub struct Sigma {
    pub q: u64,
    ln_sigma: f64,
}

impl Sigma {
    pub fn new(q: u64) -> Self {
        Sigma {
            q,
            ln_sigma: (1.1f64).ln() / (4 * q) as f64,
        }
    }

    pub fn ln(&self) -> f64 {
        self.ln_sigma
    }

    /// Sign of `r − σ^e` for positive `r`, decided in integers.
    pub fn cmp_exact(&self, r: &Ratio, e: i64) -> Ordering {
        let k = (4 * self.q) as usize;
        let a = num_traits::pow(r.numer().clone(), k);
        let b = num_traits::pow(r.denom().clone(), k);
        let e_abs = e.unsigned_abs() as usize;
        let p11 = num_traits::pow(BigInt::from(11), e_abs);
        let p10 = num_traits::pow(BigInt::from(10), e_abs);
        if e >= 0 {
            (a * p10).cmp(&(b * p11))
        } else {
            (a * p11).cmp(&(b * p10))
        }
    }

    pub fn cmp(&self, r: &Ratio, e: i64) -> Ordering {
        let diff = ln_ratio(r) - e as f64 * self.ln_sigma;
        if diff > GUARD {
            Ordering::Greater
        } else if diff < -GUARD {
            Ordering::Less
        } else {
            self.cmp_exact(r, e)
        }
    }

    /// Dyadic enclosure `[lo, hi]` of σ of width `2^-bits`.
    pub fn enclosure(&self, bits: u64) -> (Ratio, Ratio) {
        let k = 4 * self.q;
        let scaled: BigUint = (BigUint::from(11u32) << (k * bits) as usize) / BigUint::from(10u32);
        let m = scaled.nth_root(k as u32);
        let den = BigInt::one() << bits as usize;
        let m = BigInt::from(m);
        (
            Ratio::new(m.clone(), den.clone()),
            Ratio::new(m + 1, den),
        )
    }
}

/// Thresholds `2^k · s · σ^e` against the values of one function.
struct Scale<'a> {
    sigma: &'a Sigma,
    s: Ratio,
    ln_s: f64,
}

impl Scale<'_> {
    fn cmp(&self, p: &Ratio, ln_p: f64, k: i64, e: i64) -> Ordering {
        let diff = ln_p - k as f64 * std::f64::consts::LN_2 - self.ln_s - e as f64 * self.sigma.ln();
        if diff > GUARD {
            return Ordering::Greater;
        }
        if diff < -GUARD {
            return Ordering::Less;
        }
        let two_k = if k >= 0 {
            Ratio::from_integer(BigInt::one() << k as usize)
        } else {
            Ratio::new(BigInt::one(), BigInt::one() << (-k) as usize)
        };
        self.sigma.cmp_exact(&(p / (&self.s * two_k)), e)
    }

    /// `2^k s σ^lo < p < 2^k s σ^hi`.
    fn in_open(&self, p: &Ratio, ln_p: f64, k: i64, lo: i64, hi: i64) -> bool {
        self.cmp(p, ln_p, k, lo) == Ordering::Greater && self.cmp(p, ln_p, k, hi) == Ordering::Less
    }

    /// `2^k s σ^lo ≤ p ≤ 2^k' s σ^hi`.
    fn in_closed(&self, p: &Ratio, ln_p: f64, k_lo: i64, lo: i64, k_hi: i64, hi: i64) -> bool {
        self.cmp(p, ln_p, k_lo, lo) != Ordering::Less && self.cmp(p, ln_p, k_hi, hi) != Ordering::Greater
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExtractOptions {
    /// Run even when the defect precondition fails; the trace records it.
    pub relaxed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSet {
    pub i: u64,
    pub members: VertexSet,
    #[serde(with = "ratio::serde_ratio")]
    pub mass: Ratio,
    pub boundary: usize,
    #[serde(with = "ratio::serde_ratio")]
    pub quality: Ratio,
    pub folner: bool,
}

/// Every constant and intermediate set of one extraction run.
///
/// Thresholds: `a_i = 2^{i−1} s σ^{4(l−1)} = 2^{i−1} s (1+ρ)^{2(l−1)}`, `b_i = σ a_i`, `c_i = a_{i+1}/σ`,
/// `S_i = {b_i ≤ p ≤ c_i}` for `1 ≤ i ≤ m−1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionTrace {
    pub schema: String,
    #[serde(with = "ratio::serde_ratio")]
    pub eps: Ratio,
    pub q: u64,
    pub enclosure_bits: u64,
    #[serde(with = "ratio::serde_ratio")]
    pub sigma_lo: Ratio,
    #[serde(with = "ratio::serde_ratio")]
    pub sigma_hi: Ratio,
    #[serde(with = "ratio::serde_ratio")]
    pub delta_lo: Ratio,
    #[serde(with = "ratio::serde_ratio")]
    pub delta_hi: Ratio,
    #[serde(with = "ratio::serde_ratio")]
    pub defect: Ratio,
    pub defect_below_delta: bool,
    pub support_size: usize,
    #[serde(with = "ratio::serde_ratio")]
    pub s: Ratio,
    pub s_decrements: u64,
    pub m: u64,
    #[serde(with = "ratio::serde_ratio_vec")]
    pub band_masses: Vec<Ratio>,
    pub l: u64,
    #[serde(with = "ratio::serde_ratio")]
    pub core_mass: Ratio,
    #[serde(with = "ratio::serde_ratio")]
    pub rough_mass: Ratio,
    pub levels: Vec<LevelSet>,
    pub h: VertexSet,
    #[serde(with = "ratio::serde_ratio")]
    pub h_mass: Ratio,
    #[serde(with = "ratio::serde_ratio_opt")]
    pub h_quality: Option<Ratio>,
}

/// `δ(ε) = ε²(σ − 1)/16` as a rational enclosure.
pub fn delta_enclosure(eps: &Ratio, bits: u64) -> (Ratio, Ratio) {
    let sigma = Sigma::new(q_for(eps));
    let (lo, hi) = sigma.enclosure(bits);
    let c = eps * eps / ratio::int(16);
    (&c * (lo - ratio::one()), &c * (hi - ratio::one()))
}

/// Least integer strictly above `16/ε²`.
pub fn q_for(eps: &Ratio) -> u64 {
    let t = ratio::int(16) / (eps * eps);
    (t.floor() + ratio::one()).to_integer().to_u64().expect("q fits in u64")
}

/// Exact test `defect < δ(ε)`: `(16·defect/ε² + 1)^{4q} < 1.1`.
pub fn defect_below_delta(defect: &Ratio, eps: &Ratio) -> bool {
    let sigma = Sigma::new(q_for(eps));
    let r = ratio::int(16) * defect / (eps * eps) + ratio::one();
    sigma.cmp(&r, 1) == Ordering::Less
}

/// `p(x) = 2^k s 1.1^j` for integers `k, j ≥ 0`.
fn hits_forbidden(p: &Ratio, s: &Ratio) -> bool {
    let mut r = p / s;
    let eleven_tenths = ratio::ratio(11, 10);
    loop {
        if r.is_integer() {
            let n = r.to_integer();
            if n.is_positive() && (&n & (&n - BigInt::one())).is_zero() {
                return true;
            }
        }
        if !(r.numer() % BigInt::from(11)).is_zero() {
            return false;
        }
        r /= &eleven_tenths;
    }
}

pub fn extract_folner_from_function(
    g: &Graph,
    p: &FolnerFunction,
    eps: &Ratio,
    opts: &ExtractOptions,
) -> Result<(VertexSet, Ratio, ExtractionTrace), ExtractError> {
    if !eps.is_positive() || eps >= &ratio::one() {
        return Err(ExtractError::BadEps(ratio::fmt_ratio(eps)));
    }
    if p.mass() != &ratio::one() {
        return Err(ExtractError::NotNormalized(ratio::fmt_ratio(p.mass())));
    }
    let half = ratio::ratio(1, 2);
    if let Some((v, val)) = p.iter().find(|(_, val)| *val >= &half) {
        return Err(ExtractError::ValueTooLarge {
            vertex: v,
            value: ratio::fmt_ratio(val),
        });
    }
    let q = q_for(eps);
    let sigma = Sigma::new(q);
    let (sigma_lo, sigma_hi) = sigma.enclosure(ENCLOSURE_BITS);
    let (delta_lo, delta_hi) = delta_enclosure(eps, ENCLOSURE_BITS);
    let defect = function_defect(g, p)?;
    let below = defect_below_delta(&defect, eps);
    if !below && !opts.relaxed {
        return Err(ExtractError::DefectTooLarge {
            defect: ratio::fmt_ratio(&defect),
            delta_lo: ratio::fmt_ratio(&delta_lo),
            delta_hi: ratio::fmt_ratio(&delta_hi),
        });
    }

    let n = p.len();
    let s0 = eps * eps / ratio::int(64 * n as i64);
    let step = &s0 / ratio::int(1000);
    let mut s = s0.clone();
    let mut s_decrements = 0;
    while p.iter().any(|(_, v)| hits_forbidden(v, &s)) {
        s -= &step;
        s_decrements += 1;
    }
    let mut m: u64 = 0;
    while &s * Ratio::from_integer(BigInt::one() << (m + 1) as usize) < half {
        m += 1;
    }

    let scale = Scale {
        sigma: &sigma,
        ln_s: ln_ratio(&s),
        s: s.clone(),
    };
    let values: Vec<(usize, &Ratio, f64)> = p.iter().map(|(v, r)| (v, r, ln_ratio(r))).collect();
    let q_i = q as i64;

    // bands T_j in σ-exponents: (4j−4, 4j−2) at 2^{i−1}s and (4j−6, 4j−4) at 2^i s
    let mut band_masses = vec![Ratio::zero(); q as usize];
    for &(_, pv, lp) in &values {
        'found: for i in 1..m as i64 {
            for (k, off) in [(i - 1, 0i64), (i, -2)] {
                let u = (lp - k as f64 * std::f64::consts::LN_2 - scale.ln_s) / sigma.ln();
                let j0 = ((u - off as f64 + 4.0) / 4.0).floor() as i64;
                for j in (j0 - 1)..=(j0 + 1) {
                    if j < 1 || j > q_i {
                        continue;
                    }
                    if scale.in_open(pv, lp, k, 4 * j - 4 + off, 4 * j - 2 + off) {
                        band_masses[(j - 1) as usize] += pv;
                        break 'found;
                    }
                }
            }
        }
    }
    let one_over_q = ratio::ratio(1, q as i64);
    let l = band_masses
        .iter()
        .position(|t| t <= &one_over_q)
        .ok_or(ExtractError::NoQuietBand)? as i64
        + 1;

    let mut core_mass = Ratio::zero();
    let mut level_of: Vec<Option<u64>> = Vec::with_capacity(values.len());
    for &(_, pv, lp) in &values {
        let u = (lp - scale.ln_s) / std::f64::consts::LN_2;
        let i0 = u.floor() as i64 + 1;
        let mut level = None;
        for i in (i0 - 1).max(1)..=(i0 + 1).min(m as i64 - 1) {
            if scale.cmp(pv, lp, i - 1, 4 * l - 2) == Ordering::Greater
                && scale.cmp(pv, lp, i, 4 * l - 6) == Ordering::Less
            {
                core_mass += pv;
            }
            if scale.in_closed(pv, lp, i - 1, 4 * l - 3, i, 4 * l - 5) {
                level = Some(i as u64);
            }
        }
        level_of.push(level);
    }

    let mut rough_mass = Ratio::zero();
    for &(x, px, lpx) in &values {
        let rough = g.neighbors(x).iter().any(|&y| {
            let py = p.get(y);
            if py.is_zero() {
                return true;
            }
            let lpy = ln_ratio(&py);
            let up = (lpx - lpy).abs();
            if up > sigma.ln() + GUARD {
                return true;
            }
            if up < sigma.ln() - GUARD {
                return false;
            }
            let r = if px > &py { px / &py } else { &py / px };
            sigma.cmp_exact(&r, 1) == Ordering::Greater
        });
        if rough {
            rough_mass += px;
        }
    }

    let mut buckets: std::collections::BTreeMap<u64, Vec<usize>> = Default::default();
    for (idx, lv) in level_of.iter().enumerate() {
        if let Some(i) = lv {
            buckets.entry(*i).or_default().push(values[idx].0);
        }
    }
    let mut levels = Vec::new();
    let mut h_members = Vec::new();
    for (i, members) in buckets {
        let members = VertexSet::from_unsorted(members);
        let mass = p.mass_of(&members);
        let quality = folner_quality(g, &members)?;
        let boundary = (&quality * ratio::int(members.len() as i64))
            .to_integer()
            .to_usize()
            .expect("boundary count");
        let folner = &quality < eps;
        if folner {
            h_members.extend(members.iter().copied());
        }
        levels.push(LevelSet {
            i,
            members,
            mass,
            boundary,
            quality,
            folner,
        });
    }
    let h = VertexSet::from_unsorted(h_members);
    let h_mass = p.mass_of(&h);
    let h_quality = if h.is_empty() {
        None
    } else {
        Some(folner_quality(g, &h)?)
    };
    let trace = ExtractionTrace {
        schema: TRACE_SCHEMA.to_string(),
        eps: eps.clone(),
        q,
        enclosure_bits: ENCLOSURE_BITS,
        sigma_lo,
        sigma_hi,
        delta_lo,
        delta_hi,
        defect,
        defect_below_delta: below,
        support_size: n,
        s,
        s_decrements,
        m,
        band_masses,
        l: l as u64,
        core_mass,
        rough_mass,
        levels,
        h: h.clone(),
        h_mass: h_mass.clone(),
        h_quality,
    };
    Ok((h, h_mass, trace))
}

/// Independent re-check of an extraction certificate: `H` lies in the
/// support, is the union of the level sets marked Følner, each of those has
/// quality below ε, `p(H)` matches, and, when the defect precondition held,
/// `p(H) > 1 − ε`. Level memberships are re-derived with integer arithmetic only.
pub fn verify_extraction(
    g: &Graph,
    p: &FolnerFunction,
    trace: &ExtractionTrace,
) -> Result<(), String> {
    if trace.schema != TRACE_SCHEMA {
        return Err(format!("unknown schema {}", trace.schema));
    }
    if trace.q != q_for(&trace.eps) {
        return Err("q does not match ε".into());
    }
    let sigma = Sigma::new(trace.q);
    let (lo, hi) = sigma.enclosure(trace.enclosure_bits);
    if lo != trace.sigma_lo || hi != trace.sigma_hi {
        return Err("σ enclosure mismatch".into());
    }
    let (dlo, dhi) = delta_enclosure(&trace.eps, trace.enclosure_bits);
    if dlo != trace.delta_lo || dhi != trace.delta_hi {
        return Err("δ enclosure mismatch".into());
    }
    let defect = function_defect(g, p).map_err(|e| e.to_string())?;
    if defect != trace.defect {
        return Err("defect mismatch".into());
    }
    if defect_below_delta(&defect, &trace.eps) != trace.defect_below_delta {
        return Err("defect precondition flag mismatch".into());
    }
    if trace.support_size != p.len() {
        return Err("support size mismatch".into());
    }
    if trace.l == 0 || trace.l > trace.q {
        return Err("l out of range".into());
    }
    let l = trace.l as i64;
    let two = |k: i64| Ratio::from_integer(BigInt::one() << k as usize);
    let support = p.support();
    let mut union = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for level in &trace.levels {
        if level.i == 0 || level.i >= trace.m.max(1) {
            return Err(format!("level index {} out of range", level.i));
        }
        let i = level.i as i64;
        let b_base = &trace.s * two(i - 1);
        let c_base = &trace.s * two(i);
        for &v in level.members.iter() {
            if !support.contains(v) || !seen.insert(v) {
                return Err(format!("vertex {v} outside support or repeated"));
            }
            let pv = p.get(v);
            let ge_b = sigma.cmp_exact(&(&pv / &b_base), 4 * l - 3) != Ordering::Less;
            let le_c = sigma.cmp_exact(&(&pv / &c_base), 4 * l - 5) != Ordering::Greater;
            if !(ge_b && le_c) {
                return Err(format!("vertex {v} not in level {i}"));
            }
        }
        let quality = folner_quality(g, &level.members).map_err(|e| e.to_string())?;
        if quality != level.quality || (quality < trace.eps) != level.folner {
            return Err(format!("level {i} quality mismatch"));
        }
        let mass = p.mass_of(&level.members);
        if mass != level.mass {
            return Err(format!("level {i} mass mismatch"));
        }
        if level.folner {
            union.extend(level.members.iter().copied());
        }
    }
    if VertexSet::from_unsorted(union) != trace.h {
        return Err("H is not the union of the Følner levels".into());
    }
    let h_mass = p.mass_of(&trace.h);
    if h_mass != trace.h_mass {
        return Err("p(H) mismatch".into());
    }
    if !trace.h.is_empty() {
        let q = folner_quality(g, &trace.h).map_err(|e| e.to_string())?;
        if q >= trace.eps || Some(&q) != trace.h_quality.as_ref() {
            return Err("H is not ε-Følner".into());
        }
    } else if trace.h_quality.is_some() {
        return Err("quality reported for empty H".into());
    }
    if trace.defect_below_delta && h_mass <= ratio::one() - &trace.eps {
        return Err("p(H) ≤ 1 − ε".into());
    }
    Ok(())
}
