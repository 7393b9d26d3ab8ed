//! The s₁/s₂/s₃ decomposition of the union excess, the five-region split of
//! the cube, numerical checkers for every supporting inequality, and the
//! projective-metric comparisons.
//!
//! All quantities are functions of a slice `(k, x)`, so sweeps evaluate each
//! slice once and weight it by `2^{-k}` instead of looping over points.

use rustc_hash::FxHashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cube::{entropy_of, h, BitWord, CubeSubset, LinearOrder};
use crate::esm::{
    conditional_densities, delta_from, excess_term, delta_alternate, sample_uniform_order, union_excess_counts,
    ConditionalDensities, SliceCounts,
};
use crate::fiid::derive_seed;
use crate::{Error, Result, TOL};

const LN2: f64 = std::f64::consts::LN_2;

/// Region thresholds κ₀, κ₁, κ₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappas {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Kappas {
    /// Checks `κ₀ < ¼`, `κ₁ ≤ 1/8`, `0 < κ₂ ≤ κ₁/8`.
    pub fn new(k0: f64, k1: f64, k2: f64) -> Result<Self> {
        let ok = k0 > 0.0 && k0 < 0.25 && k1 > 0.0 && k1 <= 0.125 && k2 > 0.0 && k2 <= k1 / 8.0;
        if !ok {
            return Err(Error::Hypothesis(format!(
                "need 0<κ₀<1/4, 0<κ₁≤1/8, 0<κ₂≤κ₁/8; got ({k0}, {k1}, {k2})"
            )));
        }
        Ok(Self { k0, k1, k2 })
    }

    /// κ₀ = κ₁ = (−log μ)^{−1/3}, κ₂ = (−log μ)^{−1}. Admissible only once
    /// −log μ ≥ 512, i.e. far below any density representable at n ≤ 24.
    pub fn for_measure(mu: f64) -> Result<Self> {
        let l = -mu.ln();
        Self::new(l.powf(-1.0 / 3.0), l.powf(-1.0 / 3.0), 1.0 / l)
    }

    /// Fixed admissible thresholds used by the sweeps.
    pub fn sweep_default() -> Self {
        Self { k0: 0.2, k1: 0.1, k2: 0.0125 }
    }
}

/// Outcome of one inequality check; `excess` is lhs − rhs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Check {
    Pass { excess: f64 },
    Fail { excess: f64 },
    Skip,
}

impl Check {
    fn from_excess(excess: f64) -> Self {
        if excess <= TOL {
            Check::Pass { excess }
        } else {
            Check::Fail { excess }
        }
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Check::Fail { .. })
    }

    pub fn is_skip(&self) -> bool {
        matches!(self, Check::Skip)
    }
}

/// Densities of `U` and `V ⊆ U` on one slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePair {
    pub u: ConditionalDensities,
    pub v: ConditionalDensities,
}

impl SlicePair {
    /// ε_V/ε_U, with 0 on slices missing `U`.
    pub fn ratio(&self) -> f64 {
        if self.u.eps > 0.0 {
            self.v.eps / self.u.eps
        } else {
            0.0
        }
    }

    /// Δ_{U,V}: entropy drop of the three-valued variable (in V, in U∖V, outside U).
    pub fn joint_delta(&self) -> f64 {
        let (u, v) = (&self.u, &self.v);
        let whole = entropy_of(&[v.eps, u.eps - v.eps, 1.0 - u.eps]);
        let zero = entropy_of(&[2.0 * v.eps0, 2.0 * (u.eps0 - v.eps0), 1.0 - 2.0 * u.eps0]);
        let one = entropy_of(&[2.0 * v.eps1, 2.0 * (u.eps1 - v.eps1), 1.0 - 2.0 * u.eps1]);
        whole - 0.5 * zero - 0.5 * one
    }

    /// s₁ as `ε_U h(p_U) − ε_V h(p_V) − (ε_U−ε_V) h(p_{U∖V})`.
    pub fn s1_closed_form(&self) -> f64 {
        let (u, v) = (&self.u, &self.v);
        let rest = u.eps - v.eps;
        let p_rest = if rest > 0.0 { (u.eps0 - v.eps0) / rest } else { 0.5 };
        u.eps * h(u.p0()) - v.eps * h(v.p0()) - rest * h(p_rest)
    }

    /// `Δ_V − (ε_V/ε_U)Δ_U`, whose positive part is the excess density r.
    pub fn signed_excess(&self) -> f64 {
        delta_from(&self.v) - self.ratio() * delta_from(&self.u)
    }

    pub fn terms(&self, kappas: &Kappas) -> DecompositionTerms {
        let du = delta_from(&self.u);
        let s1 = self.joint_delta() - du;
        let s2 = self.v.eps * (h(self.u.p0()) - h(self.v.p0()));
        let signed = self.signed_excess();
        DecompositionTerms {
            s1,
            s2,
            s3: signed - s2,
            r: signed.max(0.0),
            region: self.region(kappas),
            kappa0: kappas.k0,
            kappa1: kappas.k1,
            kappa2: kappas.k2,
        }
    }

    /// Index in 1..=5 of the region containing this slice.
    pub fn region(&self, kappas: &Kappas) -> u8 {
        let ratio = self.ratio();
        if self.signed_excess() < 0.0 {
            1
        } else if self.u.eps > kappas.k0 {
            2
        } else if ratio < kappas.k1 {
            3
        } else if ratio > 1.0 - kappas.k1 {
            4
        } else {
            5
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionTerms {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub r: f64,
    pub region: u8,
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

/// `2(x−½)² ≤ |h(x)−h(½)| ≤ 8(x−½)²`; returns (lower holds, upper holds).
pub fn check_hquad(x: f64) -> (bool, bool) {
    let (lo, hi) = hquad_excess(x);
    (lo <= TOL, hi <= TOL)
}

fn hquad_excess(x: f64) -> (f64, f64) {
    let gap = (h(x) - LN2).abs();
    let sq = (x - 0.5) * (x - 0.5);
    (2.0 * sq - gap, gap - 8.0 * sq)
}

/// `Δ` by definition against its rewriting as `H(Z_i) − H(Z_i | 1_U)`.
pub fn delta_identity_at(d: &ConditionalDensities) -> Check {
    Check::from_excess((delta_from(d) - delta_alternate(d)).abs())
}

/// `|s₁| ≥ 2κ ε_U (p_U − p_V)²` when `κ ≤ ε_V/ε_U ≤ 1−κ`.
pub fn s1_lower_at(p: &SlicePair, kappa: f64) -> Check {
    let ratio = p.ratio();
    if p.u.eps == 0.0 || ratio < kappa || ratio > 1.0 - kappa {
        return Check::Skip;
    }
    let s1 = p.joint_delta() - delta_from(&p.u);
    let gap = p.u.p0() - p.v.p0();
    Check::from_excess(2.0 * kappa * p.u.eps * gap * gap - s1.abs())
}

/// `0 ≤ Δ − ε(h(½) − h(ε⁰/ε)) ≤ 16 ε Δ` when `ε ≤ ¼`.
pub fn delta_approx_at(d: &ConditionalDensities) -> Check {
    if d.eps > 0.25 {
        return Check::Skip;
    }
    let dl = delta_from(d);
    let mid = dl - d.eps * (LN2 - h(d.p0()));
    Check::from_excess((-mid).max(mid - 16.0 * d.eps * dl))
}

/// `|s₃| ≤ 16(ε_U Δ_U + ε_V Δ_V)`, whose proof needs `ε_U ≤ ¼`.
pub fn s3_at(p: &SlicePair) -> Check {
    if p.u.eps > 0.25 {
        return Check::Skip;
    }
    let t = p.terms(&Kappas::sweep_default());
    let bound = 16.0 * (p.u.eps * delta_from(&p.u) + p.v.eps * delta_from(&p.v));
    Check::from_excess(t.s3.abs() - bound)
}

/// `|s₂| ≤ −8κ₁^{−1/2} log κ₂ (√(Δ_U s₁) + √(Δ_V s₁)) + 4h(2κ₂/κ₁)Δ_U`
/// when `κ₁ ≤ ε_V/ε_U ≤ 1−κ₁`.
pub fn s2_at(p: &SlicePair, k1: f64, k2: f64) -> Check {
    let ratio = p.ratio();
    if p.u.eps == 0.0 || ratio < k1 || ratio > 1.0 - k1 {
        return Check::Skip;
    }
    let du = delta_from(&p.u);
    let dv = delta_from(&p.v);
    let s1 = (p.joint_delta() - du).max(0.0);
    let s2 = p.v.eps * (h(p.u.p0()) - h(p.v.p0()));
    let bound = -8.0 / k1.sqrt() * k2.ln() * ((du * s1).sqrt() + (dv * s1).sqrt())
        + 4.0 * h(2.0 * k2 / k1) * du;
    Check::from_excess(s2.abs() - bound)
}

fn check_s2_params(k1: f64, k2: f64) -> Result<()> {
    if !(k1 > 0.0 && k1 < 0.25 && k2 > 0.0 && k2 <= k1 / 8.0) {
        return Err(Error::Hypothesis(format!("need 0<κ₁<1/4 and 0<κ₂≤κ₁/8, got ({k1}, {k2})")));
    }
    Ok(())
}

fn pair_at(u: &CubeSubset, v: &CubeSubset, ord: &LinearOrder, w: &BitWord, i: usize) -> Result<SlicePair> {
    if !v.is_subset_of(u) {
        return Err(Error::Precondition("V must be a subset of U".into()));
    }
    Ok(SlicePair {
        u: conditional_densities(u, ord, w, i)?,
        v: conditional_densities(v, ord, w, i)?,
    })
}

/// Δ_{U,V}(w,i).
pub fn joint_delta(u: &CubeSubset, v: &CubeSubset, ord: &LinearOrder, w: &BitWord, i: usize) -> Result<f64> {
    Ok(pair_at(u, v, ord, w, i)?.joint_delta())
}

pub fn s_terms(
    u: &CubeSubset,
    v: &CubeSubset,
    ord: &LinearOrder,
    w: &BitWord,
    i: usize,
    kappas: &Kappas,
) -> Result<DecompositionTerms> {
    let kappas = Kappas::new(kappas.k0, kappas.k1, kappas.k2)?;
    Ok(pair_at(u, v, ord, w, i)?.terms(&kappas))
}

pub fn check_s1_lower(
    u: &CubeSubset,
    v: &CubeSubset,
    ord: &LinearOrder,
    w: &BitWord,
    i: usize,
    kappa: f64,
) -> Result<Check> {
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(Error::Hypothesis("κ must be positive".into()));
    }
    Ok(s1_lower_at(&pair_at(u, v, ord, w, i)?, kappa))
}

pub fn check_delta_approx(u: &CubeSubset, ord: &LinearOrder, w: &BitWord, i: usize) -> Result<Check> {
    Ok(delta_approx_at(&conditional_densities(u, ord, w, i)?))
}

pub fn check_s3(u: &CubeSubset, v: &CubeSubset, ord: &LinearOrder, w: &BitWord, i: usize) -> Result<Check> {
    Ok(s3_at(&pair_at(u, v, ord, w, i)?))
}

pub fn check_s2(
    u: &CubeSubset,
    v: &CubeSubset,
    ord: &LinearOrder,
    w: &BitWord,
    i: usize,
    k1: f64,
    k2: f64,
) -> Result<Check> {
    check_s2_params(k1, k2)?;
    Ok(s2_at(&pair_at(u, v, ord, w, i)?, k1, k2))
}

/// Per-region integrals of r together with the bound claimed for each region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionIntegrals {
    pub integrals: [f64; 5],
    pub bounds: [f64; 5],
    /// The region-2 bound additionally needs μ(U) ≤ κ₀.
    pub bound_applies: [bool; 5],
    pub kappas: Kappas,
    pub union_excess: f64,
}

impl RegionIntegrals {
    pub fn total(&self) -> f64 {
        self.integrals.iter().sum()
    }

    /// Region indices (1-based) whose integral exceeds its bound.
    pub fn violations(&self) -> Vec<usize> {
        (0..5)
            .filter(|&d| self.bound_applies[d] && self.integrals[d] > self.bounds[d] + TOL)
            .map(|d| d + 1)
            .collect()
    }
}

/// The five region bounds at measure `mu_u` of `U`.
pub fn region_bounds(mu_u: f64, kappas: &Kappas) -> [f64; 5] {
    let hu = h(mu_u);
    let Kappas { k0, k1, k2 } = *kappas;
    [
        0.0,
        -4.0 * mu_u * k0.ln(),
        h(k0 * k1) / h(k0) * hu,
        k1 * hu + mu_u,
        (32.0 * k0 + 4.0 * h(2.0 * k2 / k1)) * hu - 16.0 / k1.sqrt() * k2.ln() * (hu * mu_u).sqrt(),
    ]
}

/// Region integrals at the thresholds tied to μ(U); fails whenever those
/// thresholds are inadmissible, which is the case for every nonempty set on
/// a cube of dimension ≤ 24.
pub fn region_integrals(u: &CubeSubset, v: &CubeSubset, ord: &LinearOrder) -> Result<RegionIntegrals> {
    let kappas = Kappas::for_measure(u.measure())?;
    region_integrals_with(u, v, ord, &kappas)
}

pub fn region_integrals_with(
    u: &CubeSubset,
    v: &CubeSubset,
    ord: &LinearOrder,
    kappas: &Kappas,
) -> Result<RegionIntegrals> {
    let kappas = Kappas::new(kappas.k0, kappas.k1, kappas.k2)?;
    if !v.is_subset_of(u) {
        return Err(Error::Precondition("V must be a subset of U".into()));
    }
    let su = SliceCounts::new(u, ord)?;
    let sv = SliceCounts::new(v, ord)?;
    let mut integrals = [0.0; 5];
    for k in 0..su.n() {
        let mut level = [0.0; 5];
        for x in 0..(1usize << k) {
            let p = SlicePair { u: su.densities(k, x), v: sv.densities(k, x) };
            let signed = p.signed_excess();
            if signed > 0.0 {
                level[p.region(&kappas) as usize - 1] += signed;
            }
        }
        for d in 0..5 {
            integrals[d] += level[d] / (1u64 << k) as f64;
        }
    }
    let mu = u.measure();
    Ok(RegionIntegrals {
        integrals,
        bounds: region_bounds(mu, &kappas),
        bound_applies: [true, mu <= kappas.k0, true, true, true],
        kappas,
        union_excess: union_excess_counts(&su, &sv),
    })
}

/// Names of the checks tallied by the sweeps, in report order.
pub const CHECKS: [&str; 15] = [
    "delta_identity",
    "hquad",
    "s1_nonneg",
    "s1_closed_form",
    "s1_lower",
    "delta_approx",
    "s3",
    "s2",
    "region_I1",
    "region_I2",
    "region_I3",
    "region_I4",
    "region_I5",
    "region_sum",
    "s1_integral",
];

const N_SLICE_CHECKS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tally {
    pub checked: u64,
    pub skipped: u64,
    pub violated: u64,
    /// Largest lhs − rhs over checked instances.
    pub max_slack: Option<f64>,
}

impl Tally {
    const EMPTY: Self = Self { checked: 0, skipped: 0, violated: 0, max_slack: None };

    fn add(&mut self, c: Check, times: u64) {
        match c {
            Check::Skip => self.skipped += times,
            Check::Pass { excess } | Check::Fail { excess } => {
                self.checked += times;
                if c.is_fail() {
                    self.violated += times;
                }
                self.max_slack = Some(self.max_slack.map_or(excess, |m| m.max(excess)));
            }
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.checked += o.checked;
        self.skipped += o.skipped;
        self.violated += o.violated;
        self.max_slack = match (self.max_slack, o.max_slack) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }

    /// Exercised at least once.
    pub fn exercised(&self) -> bool {
        self.checked > 0
    }
}

/// Per-check tallies over a sweep, indexed like [`CHECKS`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub tallies: Vec<Tally>,
    pub triples: u64,
}

impl Default for SweepReport {
    fn default() -> Self {
        Self { tallies: vec![Tally::EMPTY; CHECKS.len()], triples: 0 }
    }
}

impl SweepReport {
    pub fn merge(&mut self, o: &SweepReport) {
        for (a, b) in self.tallies.iter_mut().zip(&o.tallies) {
            a.merge(b);
        }
        self.triples += o.triples;
    }

    pub fn total_violations(&self) -> u64 {
        self.tallies.iter().map(|t| t.violated).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tally> {
        CHECKS.iter().position(|&l| l == name).map(|i| &self.tallies[i])
    }
}

/// Thresholds used by the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    /// κ for the s₁ lower bound.
    pub kappa: f64,
    pub kappas: Kappas,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { kappa: 0.1, kappas: Kappas::sweep_default() }
    }
}

#[derive(Clone, Copy)]
struct SliceEval {
    checks: [Check; N_SLICE_CHECKS],
    signed: f64,
    region: u8,
    s1: f64,
    /// Per-slice union excess as computed by the field code.
    excess: f64,
}

fn eval_slice(p: &SlicePair, cfg: &SweepConfig) -> SliceEval {
    let du = delta_from(&p.u);
    let joint = p.joint_delta();
    let s1 = joint - du;
    let mut hq = Check::Skip;
    for (eps, x) in [(p.u.eps, p.u.p0()), (p.v.eps, p.v.p0())] {
        if eps > 0.0 {
            let (lo, hi) = hquad_excess(x);
            let c = Check::from_excess(lo.max(hi));
            hq = match hq {
                Check::Skip => c,
                Check::Pass { excess } | Check::Fail { excess } => {
                    Check::from_excess(excess.max(lo).max(hi))
                }
            };
        }
    }
    let checks = [
        Check::from_excess(
            (delta_from(&p.u) - delta_alternate(&p.u))
                .abs()
                .max((delta_from(&p.v) - delta_alternate(&p.v)).abs()),
        ),
        hq,
        Check::from_excess(-s1),
        Check::from_excess((s1 - p.s1_closed_form()).abs()),
        s1_lower_at(p, cfg.kappa),
        delta_approx_at(&p.u),
        s3_at(p),
        s2_at(p, cfg.kappas.k1, cfg.kappas.k2),
    ];
    let excess = if p.v.eps > 0.0 { excess_term(&p.u, &p.v) } else { 0.0 };
    SliceEval { checks, signed: p.signed_excess(), region: p.region(&cfg.kappas), s1, excess }
}

/// Memo of slice evaluations keyed by `(n − k, cU0, cU1, cV0, cV1)`.
///
/// Below dimension 5 every count fits in four bits and the key indexes a
/// dense table directly.
#[derive(Default)]
struct SliceCache {
    dense: Vec<u32>,
    evals: Vec<SliceEval>,
    sparse: FxHashMap<(u32, u32, u32, u32, u32), SliceEval>,
}

impl SliceCache {
    const DENSE_BITS: u32 = 19;

    fn get(&mut self, key: (u32, u32, u32, u32, u32), make: impl FnOnce() -> SliceEval) -> SliceEval {
        let (m, a, b, c, d) = key;
        if m <= 4 {
            if self.dense.is_empty() {
                self.dense = vec![u32::MAX; 1 << Self::DENSE_BITS];
            }
            let idx = ((m << 16) | (a << 12) | (b << 8) | (c << 4) | d) as usize;
            if self.dense[idx] == u32::MAX {
                self.dense[idx] = self.evals.len() as u32;
                self.evals.push(make());
            }
            return self.evals[self.dense[idx] as usize];
        }
        *self.sparse.entry(key).or_insert_with(make)
    }
}

/// Runs every check on one `(U, V, order)` triple, adding to `report`.
fn sweep_triple(
    su: &SliceCounts,
    sv: &SliceCounts,
    mu_u: f64,
    mu_v: f64,
    cfg: &SweepConfig,
    cache: &mut SliceCache,
    report: &mut SweepReport,
) {
    let n = su.n();
    let mut integrals = [0.0; 5];
    let mut s1_total = 0.0;
    let mut excess = 0.0;
    for k in 0..n {
        let mut level = [0.0; 5];
        let mut s1_level = 0.0;
        let mut excess_level = 0.0;
        for x in 0..(1usize << k) {
            let key = (
                (n - k) as u32,
                su.count(k + 1, x),
                su.count(k + 1, x | (1 << k)),
                sv.count(k + 1, x),
                sv.count(k + 1, x | (1 << k)),
            );
            let ev = cache.get(key, || {
                let p = SlicePair { u: su.densities(k, x), v: sv.densities(k, x) };
                eval_slice(&p, cfg)
            });
            for (t, c) in report.tallies.iter_mut().zip(ev.checks) {
                t.add(c, 1);
            }
            if ev.signed > 0.0 {
                level[ev.region as usize - 1] += ev.signed;
            }
            s1_level += ev.s1;
            excess_level += ev.excess;
        }
        let w = 1.0 / (1u64 << k) as f64;
        for d in 0..5 {
            integrals[d] += level[d] * w;
        }
        s1_total += s1_level * w;
        excess += excess_level * w;
    }
    let bounds = region_bounds(mu_u, &cfg.kappas);
    let base = N_SLICE_CHECKS;
    // region 1 never receives mass, so anything but an exact zero is a failure
    report.tallies[base].add(Check::from_excess(if integrals[0] == 0.0 { 0.0 } else { 1.0 }), 1);
    report.tallies[base + 1].add(
        if mu_u <= cfg.kappas.k0 { Check::from_excess(integrals[1] - bounds[1]) } else { Check::Skip },
        1,
    );
    for d in 2..5 {
        report.tallies[base + d].add(Check::from_excess(integrals[d] - bounds[d]), 1);
    }
    report.tallies[base + 5].add(Check::from_excess((integrals.iter().sum::<f64>() - excess).abs()), 1);
    let expected = if mu_u > 0.0 { mu_u * h(mu_v / mu_u) } else { 0.0 };
    report.tallies[base + 6].add(Check::from_excess((s1_total - expected).abs()), 1);
    report.triples += 1;
}

/// Runs every check on a single triple.
pub fn sweep_one(u: &CubeSubset, v: &CubeSubset, ord: &LinearOrder, cfg: &SweepConfig) -> Result<SweepReport> {
    if !v.is_subset_of(u) {
        return Err(Error::Precondition("V must be a subset of U".into()));
    }
    let su = SliceCounts::new(u, ord)?;
    let sv = SliceCounts::new(v, ord)?;
    let mut report = SweepReport::default();
    sweep_triple(&su, &sv, u.measure(), v.measure(), cfg, &mut SliceCache::default(), &mut report);
    Ok(report)
}

/// Exhaustive sweep over all `U` with `|U| ≤ max_u` and all `V ⊆ U` at `n ≤ 4`.
///
/// With `all_orders = false` only the natural order is used. This covers every
/// order as well: relabelling coordinates by σ maps `(U, V, ≺)` to
/// `(σU, σV, σ≺)` with the same slice densities, and the enumerated family of
/// pairs is closed under relabelling.
pub fn exhaustive_sweep(n: usize, max_u: usize, all_orders: bool, cfg: &SweepConfig) -> Result<SweepReport> {
    if n == 0 || n > 4 {
        return Err(Error::Budget(format!("exhaustive sweep needs 1 ≤ n ≤ 4, got {n}")));
    }
    let orders = if all_orders { LinearOrder::all(n)? } else { vec![LinearOrder::identity(n)?] };
    let masks: Vec<u64> = (0..(1u64 << (1 << n))).filter(|m| m.count_ones() as usize <= max_u).collect();
    let parts: Vec<SweepReport> = masks
        .par_chunks(256)
        .map_init(SliceCache::default, |cache, chunk| {
            let mut report = SweepReport::default();
            for &um in chunk {
                let u = CubeSubset::from_mask(n, um).unwrap();
                for ord in &orders {
                    let su = SliceCounts::new(&u, ord).unwrap();
                    let mut vm = um;
                    loop {
                        let v = CubeSubset::from_mask(n, vm).unwrap();
                        let sv = SliceCounts::new(&v, ord).unwrap();
                        sweep_triple(&su, &sv, u.measure(), v.measure(), cfg, cache, &mut report);
                        if vm == 0 {
                            break;
                        }
                        vm = (vm - 1) & um;
                    }
                }
            }
            report
        })
        .collect();
    let mut total = SweepReport::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// A random triple: `μ(U)` log-uniform in `[2^{2−n}, ½]`, `V` an independent
/// thinning of `U` with a uniform keep probability, and a uniform order.
pub fn random_triple(n: usize, seed: u64) -> Result<(CubeSubset, CubeSubset, LinearOrder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = (2.0 - n as f64) * LN2;
    let mu = (lo + rng.random::<f64>() * (-LN2 - lo)).exp();
    let size = ((mu * (1u64 << n) as f64).round() as usize).max(1);
    let u = CubeSubset::random_of_size(n, size, &mut rng)?;
    let keep: f64 = rng.random();
    let v = u.thin(keep, &mut rng);
    let ord = sample_uniform_order(n, rng.random())?;
    Ok((u, v, ord))
}

/// Sweep over `triples` random triples at dimension `n`.
pub fn random_sweep(n: usize, triples: usize, seed: u64, cfg: &SweepConfig) -> Result<SweepReport> {
    let idx: Vec<usize> = (0..triples).collect();
    let parts: Vec<Result<SweepReport>> = idx
        .par_chunks(64)
        .map_init(SliceCache::default, |cache, chunk| {
            let mut report = SweepReport::default();
            for &t in chunk {
                let (u, v, ord) = random_triple(n, derive_seed(seed, t as u64))?;
                let su = SliceCounts::new(&u, &ord)?;
                let sv = SliceCounts::new(&v, &ord)?;
                sweep_triple(&su, &sv, u.measure(), v.measure(), cfg, cache, &mut report);
            }
            Ok(report)
        })
        .collect();
    let mut total = SweepReport::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// One row of the excess-rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub mu: f64,
    pub excess_mean: f64,
    pub excess_sd: f64,
    /// Fitted `C·log|log μ|/|log μ|^{1/3}`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Least-squares constant through the origin; `None` when no row has a
    /// positive rate shape.
    pub c_fit: Option<f64>,
}

/// `log|log μ| / |log μ|^{1/3}`.
pub fn rate_shape(mu: f64) -> f64 {
    let l = -mu.ln();
    l.ln() / l.cbrt()
}

/// Mean relative excess `(m(𝓔(U)∪𝓔(V)) − m(𝓔(U)))/m(𝓔(U))` over random `U`
/// of exact size `μ·2^n` and `V` a ½-thinning of `U`.
pub fn excess_rate_experiment(n: usize, densities: &[f64], trials: usize, seed: u64) -> Result<RateTable> {
    let mut rows = Vec::with_capacity(densities.len());
    for (di, &mu) in densities.iter().enumerate() {
        let size = (mu * (1u64 << n) as f64).round() as usize;
        if size == 0 || size >= 1usize << n {
            return Err(Error::Domain(format!("density {mu} not achievable with 0 < |U| < 2^{n}")));
        }
        let row_seed = derive_seed(seed, di as u64);
        let values: Vec<Result<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(row_seed, t as u64));
                let u = CubeSubset::random_of_size(n, size, &mut rng)?;
                let v = u.thin(0.5, &mut rng);
                let ord = sample_uniform_order(n, rng.random())?;
                let su = SliceCounts::new(&u, &ord)?;
                let sv = SliceCounts::new(&v, &ord)?;
                Ok(union_excess_counts(&su, &sv) / u.entropy())
            })
            .collect();
        let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
        let mean = values.iter().sum::<f64>() / trials as f64;
        let var = if trials > 1 {
            values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (trials - 1) as f64
        } else {
            0.0
        };
        rows.push(RateRow { mu: size as f64 / (1u64 << n) as f64, excess_mean: mean, excess_sd: var.sqrt(), bound: 0.0 });
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in &rows {
        let s = rate_shape(r.mu);
        if s.is_finite() && s > 0.0 {
            sxy += s * r.excess_mean;
            sxx += s * s;
        }
    }
    let c_fit = (sxx > 0.0).then(|| sxy / sxx);
    if let Some(c) = c_fit {
        for r in rows.iter_mut() {
            r.bound = c * rate_shape(r.mu);
        }
    }
    Ok(RateTable { rows, c_fit })
}

fn norm2(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_pair(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::Shape(format!("vectors of length {} and {}", u.len(), v.len())));
    }
    if u.iter().all(|&x| x == 0.0) || v.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(())
}

/// `‖u∧v‖/(‖u‖‖v‖)`, the sine of the angle between the lines of `u` and `v`.
pub fn proj_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_pair(u, v)?;
    let mut wedge = 0.0;
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            let m = u[i] * v[j] - u[j] * v[i];
            wedge += m * m;
        }
    }
    Ok((wedge.sqrt() / (norm2(u) * norm2(v))).min(1.0))
}

fn sup_ratio(u: &[f64], v: &[f64], lambda: f64) -> f64 {
    let num = u.iter().zip(v).map(|(a, b)| (a - lambda * b).abs()).fold(0.0, f64::max);
    num / u.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjReport {
    pub distance: f64,
    /// Largest distance between the two-coordinate restrictions.
    pub pairwise_max: f64,
    pub metric_ok: bool,
    /// Norm-equivalence constant used (the dimension).
    pub c: f64,
    /// λ from orthogonal projection of `u` on `v`.
    pub lambda_proj: f64,
    pub ratio_at_proj: f64,
    /// Exact minimiser of `‖u − λv‖_∞`.
    pub lambda_min: f64,
    pub min_ratio: f64,
    pub norm_lower_ok: bool,
    pub norm_upper_ok: bool,
}

impl ProjReport {
    pub fn ok(&self) -> bool {
        self.metric_ok && self.norm_lower_ok && self.norm_upper_ok
    }
}

/// Checks `d(u,v) ≤ (n−1)·max_{i<j} d(u_{ij}, v_{ij})` and that the projection
/// λ satisfies `d/C ≤ ‖u−λv‖_∞/‖u‖_∞ ≤ C·d` with `C = n`. The lower side is
/// tested at the exact minimiser over λ, so it holds for every λ.
pub fn check_projective(u: &[f64], v: &[f64]) -> Result<ProjReport> {
    let d = proj_distance(u, v)?;
    let n = u.len();
    let mut pairwise_max: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = ([u[i], u[j]], [v[i], v[j]]);
            if let Ok(dij) = proj_distance(&a, &b) {
                pairwise_max = pairwise_max.max(dij);
            }
        }
    }
    let c = n as f64;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let lambda_proj = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / vv;
    let ratio_at_proj = sup_ratio(u, v, lambda_proj);
    let mut cands = vec![lambda_proj];
    for i in 0..n {
        if v[i] != 0.0 {
            cands.push(u[i] / v[i]);
        }
        for j in i + 1..n {
            if v[i] != v[j] {
                cands.push((u[i] - u[j]) / (v[i] - v[j]));
            }
            if v[i] + v[j] != 0.0 {
                cands.push((u[i] + u[j]) / (v[i] + v[j]));
            }
        }
    }
    let (mut lambda_min, mut min_ratio) = (lambda_proj, ratio_at_proj);
    for l in cands {
        let r = sup_ratio(u, v, l);
        if r < min_ratio {
            min_ratio = r;
            lambda_min = l;
        }
    }
    Ok(ProjReport {
        distance: d,
        pairwise_max,
        metric_ok: d <= (n as f64 - 1.0) * pairwise_max + TOL,
        c,
        lambda_proj,
        ratio_at_proj,
        lambda_min,
        min_ratio,
        norm_lower_ok: d / c <= min_ratio + TOL,
        norm_upper_ok: ratio_at_proj <= c * d + TOL,
    })
}

/// Violation counts of the projective checks for one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjSweepRow {
    pub dim: usize,
    pub checked: u64,
    pub metric_violations: u64,
    pub norm_violations: u64,
    /// Largest `d / max_{i<j} d_{ij}` seen.
    pub max_metric_ratio: f64,
}

/// Random positive vector pairs: half independent, half nearly parallel.
pub fn proj_sweep(dims: &[usize], samples: usize, seed: u64) -> Result<Vec<ProjSweepRow>> {
    let mut rows = Vec::new();
    for &dim in dims {
        if dim < 2 {
            return Err(Error::Domain("dimension must be at least 2".into()));
        }
        let reports: Vec<Result<ProjReport>> = (0..samples)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, dim as u64), s as u64));
                let u: Vec<f64> = (0..dim).map(|_| rng.random_range(0.01..1.0)).collect();
                let v: Vec<f64> = if s % 2 == 0 {
                    (0..dim).map(|_| rng.random_range(0.01..1.0)).collect()
                } else {
                    let scale = rng.random_range(0.1..10.0);
                    let eps = 10f64.powf(-rng.random_range(1.0..6.0));
                    u.iter().map(|x| scale * x * (1.0 + eps * rng.random_range(-1.0..1.0))).collect()
                };
                check_projective(&u, &v)
            })
            .collect();
        let mut row = ProjSweepRow { dim, checked: 0, metric_violations: 0, norm_violations: 0, max_metric_ratio: 0.0 };
        for r in reports {
            let r = r?;
            row.checked += 1;
            row.metric_violations += u64::from(!r.metric_ok);
            row.norm_violations += u64::from(!(r.norm_lower_ok && r.norm_upper_ok));
            if r.pairwise_max > 0.0 {
                row.max_metric_ratio = row.max_metric_ratio.max(r.distance / r.pairwise_max);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esm::union_excess;
    use proptest::prelude::*;
    use rand::Rng;

    fn bw(n: usize, b: u32) -> BitWord {
        BitWord::new(n, b).unwrap()
    }

    /// Three-valued entropy drop computed by brute force over the slice.
    fn joint_delta_oracle(u: &CubeSubset, v: &CubeSubset, ord: &LinearOrder, w: u32, i: usize) -> f64 {
        let n = u.n();
        let k = ord.rank(i);
        let prefix: Vec<usize> = (0..n).filter(|&j| ord.rank(j) < k).collect();
        let mut counts = [[0f64; 3]; 2];
        let mut total = 0.0;
        for p in 0..(1u32 << n) {
            if prefix.iter().all(|&j| (p >> j) & 1 == (w >> j) & 1) {
                let cls = if v.contains(p) { 0 } else if u.contains(p) { 1 } else { 2 };
                counts[((p >> i) & 1) as usize][cls] += 1.0;
                total += 1.0;
            }
        }
        let ent = |c: &[f64]| -> f64 {
            let s: f64 = c.iter().sum();
            c.iter().filter(|&&x| x > 0.0).map(|&x| -(x / s) * (x / s).ln()).sum()
        };
        let all: Vec<f64> = (0..3).map(|c| counts[0][c] + counts[1][c]).collect();
        ent(&all) - 0.5 * ent(&counts[0]) - 0.5 * ent(&counts[1]) + 0.0 * total
    }

    #[test]
    fn joint_delta_examples() {
        let id = LinearOrder::identity(2).unwrap();
        let half = CubeSubset::from_points(2, [1, 3]).unwrap();
        let single = CubeSubset::from_points(2, [3]).unwrap();
        let du = crate::esm::delta(&half, &id, &bw(2, 3), 0).unwrap();
        assert!((joint_delta(&half, &half, &id, &bw(2, 3), 0).unwrap() - du).abs() < 1e-15);
        let empty = CubeSubset::empty(2).unwrap();
        assert!((joint_delta(&half, &empty, &id, &bw(2, 3), 0).unwrap() - du).abs() < 1e-15);
        let j = joint_delta(&half, &single, &id, &bw(2, 3), 0).unwrap();
        assert!((j - joint_delta_oracle(&half, &single, &id, 3, 0)).abs() < 1e-14);
        // distribution (¼, ¼, ½) split into (0,0,1) and (½,½,0)
        assert!((j - 1.5 * LN2 + 0.5 * LN2).abs() < 1e-14);
        assert!(joint_delta(&single, &half, &id, &bw(2, 3), 0).is_err());
    }

    #[test]
    fn s_terms_examples() {
        let id = LinearOrder::identity(3).unwrap();
        let u = CubeSubset::from_points(3, [1, 3, 6]).unwrap();
        let k = Kappas::sweep_default();
        let t = s_terms(&u, &u, &id, &bw(3, 1), 1, &k).unwrap();
        assert_eq!((t.s1.abs() < 1e-15, t.r, t.region), (true, 0.0, 2));
        assert!(s_terms(&u, &u, &id, &bw(3, 1), 1, &Kappas { k0: 0.3, k1: 0.1, k2: 0.01 }).is_err());
        assert!(Kappas::new(0.2, 0.1, 0.02).is_err());
        assert!(Kappas::for_measure(2f64.powi(-24)).is_err());
        assert!(Kappas::for_measure((-600f64).exp()).is_ok());
    }

    #[test]
    fn region_two_when_dense_and_positive() {
        let k = Kappas::sweep_default();
        let p = SlicePair {
            u: ConditionalDensities { eps: 0.5, eps0: 0.25, eps1: 0.25 },
            v: ConditionalDensities { eps: 0.25, eps0: 0.25, eps1: 0.0 },
        };
        assert!(p.terms(&k).r > 0.0);
        assert_eq!(p.region(&k), 2);
    }

    #[test]
    fn hquad_examples() {
        assert_eq!(check_hquad(0.5), (true, true));
        let (lo, hi) = hquad_excess(0.25);
        // 0.125 ≤ 0.1308 ≤ 0.5
        assert!((lo - (0.125 - 0.130_812_035_941_137)).abs() < 1e-12);
        assert!((hi - (0.130_812_035_941_137 - 0.5)).abs() < 1e-12);
        for i in 1..100 {
            assert_eq!(check_hquad(i as f64 / 100.0), (true, true));
        }
    }

    #[test]
    fn delta_approx_examples() {
        let sym = ConditionalDensities { eps: 0.125, eps0: 0.0625, eps1: 0.0625 };
        assert!(matches!(delta_approx_at(&sym), Check::Pass { .. }));
        assert!(delta_approx_at(&ConditionalDensities { eps: 0.5, eps0: 0.25, eps1: 0.25 }).is_skip());
        let single = CubeSubset::from_points(4, [9]).unwrap();
        for ord in LinearOrder::all(4).unwrap() {
            for w in 0..16 {
                for i in 0..4 {
                    assert!(!check_delta_approx(&single, &ord, &bw(4, w), i).unwrap().is_fail());
                }
            }
        }
        // lower side is tight as ε → 0
        for e in 1..20 {
            let eps = 2f64.powi(-e);
            let d = ConditionalDensities { eps, eps0: eps, eps1: 0.0 };
            let mid = delta_from(&d) - eps * LN2;
            assert!(mid >= -1e-15 && mid <= 16.0 * eps * delta_from(&d) + 1e-15);
        }
    }

    #[test]
    fn s1_lower_and_s2_s3_trivial_cases() {
        let id = LinearOrder::identity(3).unwrap();
        let u = CubeSubset::from_points(3, [0, 2, 5, 7]).unwrap();
        for w in 0..8 {
            for i in 0..3 {
                assert!(!check_s2(&u, &u, &id, &bw(3, w), i, 0.1, 0.0125).unwrap().is_fail());
                assert!(!check_s3(&u, &u, &id, &bw(3, w), i).unwrap().is_fail());
                assert!(!check_s1_lower(&u, &u, &id, &bw(3, w), i, 0.1).unwrap().is_fail());
            }
        }
        assert!(check_s2(&u, &u, &id, &bw(3, 0), 0, 0.3, 0.01).is_err());
        // equal conditional proportions give a zero right-hand side
        let p = SlicePair {
            u: ConditionalDensities { eps: 0.5, eps0: 0.25, eps1: 0.25 },
            v: ConditionalDensities { eps: 0.25, eps0: 0.125, eps1: 0.125 },
        };
        assert!(matches!(s1_lower_at(&p, 0.1), Check::Pass { .. }));
    }

    #[test]
    fn region_integrals_examples() {
        let n = 16;
        let id = LinearOrder::identity(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = CubeSubset::random_of_size(n, 64, &mut rng).unwrap();
        let k = Kappas::sweep_default();
        let same = region_integrals_with(&u, &u, &id, &k).unwrap();
        assert_eq!(same.integrals, [0.0; 5]);
        let pts: Vec<u32> = u.iter().collect();
        let v = CubeSubset::from_points(n, pts.iter().copied().step_by(2)).unwrap();
        let ri = region_integrals_with(&u, &v, &id, &k).unwrap();
        assert_eq!(ri.integrals[0], 0.0);
        assert!((ri.total() - union_excess(&u, &v, &id).unwrap()).abs() < 1e-9);
        assert!(ri.violations().is_empty(), "{ri:?}");
        assert!(matches!(region_integrals(&u, &v, &id), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn relative_excess_decreases_over_density_sweep() {
        let dens: Vec<f64> = (6..=14).step_by(2).map(|e| 2f64.powi(-e)).collect();
        let t = excess_rate_experiment(16, &dens, 20, 3).unwrap();
        for w in t.rows.windows(2) {
            assert!(w[1].excess_mean < w[0].excess_mean, "{:?}", t.rows);
        }
        let c = t.c_fit.unwrap();
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn proj_examples() {
        assert_eq!(proj_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((proj_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        let d = proj_distance(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(proj_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector));
        let par = check_projective(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!(par.ok() && par.distance == 0.0 && par.min_ratio < 1e-15);
        // a single differing coordinate dominates the pairwise maximum
        let u = [1.0, 1.0, 1.0, 1.0];
        let v = [1.0, 1.0, 3.0, 1.0];
        let r = check_projective(&u, &v).unwrap();
        let dij = proj_distance(&[1.0, 1.0], &[1.0, 3.0]).unwrap();
        assert!((r.pairwise_max - dij).abs() < 1e-15 && r.ok());
    }

    #[test]
    fn exhaustive_small_cube_sweep_n3_all_orders() {
        let r = exhaustive_sweep(3, 8, true, &SweepConfig::default()).unwrap();
        assert_eq!(r.total_violations(), 0, "{r:?}");
        let nat = exhaustive_sweep(3, 8, false, &SweepConfig::default()).unwrap();
        // relabelling coordinates permutes the triples, so per-order tallies agree
        for (a, b) in r.tallies.iter().zip(&nat.tallies) {
            assert_eq!(a.checked, 6 * b.checked);
            assert_eq!(a.skipped, 6 * b.skipped);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn slice_identities_random(seed in any::<u64>(), n in 2usize..=7) {
            let (u, v, ord) = random_triple(n, seed).unwrap();
            let su = SliceCounts::new(&u, &ord).unwrap();
            let sv = SliceCounts::new(&v, &ord).unwrap();
            let mut s1_total = 0.0;
            for k in 0..n {
                for x in 0..(1usize << k) {
                    let p = SlicePair { u: su.densities(k, x), v: sv.densities(k, x) };
                    let t = p.terms(&Kappas::sweep_default());
                    prop_assert!(t.s1 >= -1e-9);
                    prop_assert!((t.s1 - p.s1_closed_form()).abs() < 1e-9);
                    prop_assert!((t.s3 - (p.signed_excess() - t.s2)).abs() < 1e-12);
                    prop_assert!(t.r >= 0.0);
                    s1_total += t.s1 / (1u64 << k) as f64;
                }
            }
            let mu_u = u.measure();
            prop_assert!((s1_total - mu_u * h(v.measure() / mu_u)).abs() < 1e-9);
            prop_assert!(s1_total <= mu_u + 1e-9);
        }

        #[test]
        fn joint_delta_matches_brute_force(seed in any::<u64>()) {
            let (u, v, ord) = random_triple(6, seed).unwrap();
            let w = (seed % 64) as u32;
            let i = (seed / 64 % 6) as usize;
            let fast = joint_delta(&u, &v, &ord, &bw(6, w), i).unwrap();
            prop_assert!((fast - joint_delta_oracle(&u, &v, &ord, w, i)).abs() < 1e-12);
            prop_assert!(fast >= crate::esm::delta(&u, &ord, &bw(6, w), i).unwrap() - 1e-9);
        }

        #[test]
        fn proj_random(seed in any::<u64>(), dim in 2usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..dim).map(|_| rng.random_range(0.001..1.0)).collect();
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(0.001..1.0)).collect();
            let r = check_projective(&u, &v).unwrap();
            prop_assert!(r.ok(), "{:?}", r);
            prop_assert!(r.min_ratio <= r.ratio_at_proj + 1e-15);
        }
    }
}
