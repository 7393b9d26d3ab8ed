//! Rooted random subsets of a group: finite unimodular distributions,
//! mass-transport checks, cylinder tables and the weak-* distance.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fiid::{derive_seed, mix64, threshold, unit_f64, Label, LocalRule, RuleKind, Window};
use crate::groups::{ball, CayleyBall, Group, GroupElement, GroupSpec};
use crate::{Error, Result};

/// Largest number of observed masks tracked besides the small patterns.
pub const OBSERVED_CAP: usize = 4096;

/// Tracked patterns of size at most this are always present.
pub const SMALL_PATTERN_SIZE: usize = 3;

const PLANT_STREAM: u64 = 0x91a7_7ed0;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Exact,
    Empirical,
}

/// A finitely supported distribution on rooted subsets (each atom contains
/// the identity). Atoms are sorted canonical element lists.
#[derive(Debug, Clone, PartialEq)]
pub struct RootedSetDistribution {
    spec: GroupSpec,
    atoms: Vec<(Vec<GroupElement>, f64)>,
    status: Status,
    samples: u64,
}

impl RootedSetDistribution {
    /// Validates and merges `(set, probability)` pairs.
    pub fn exact(spec: GroupSpec, atoms: Vec<(Vec<GroupElement>, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<Vec<GroupElement>, f64> = BTreeMap::new();
        let id = spec.identity();
        for (mut a, p) in atoms {
            a.sort();
            a.dedup();
            if !a.contains(&id) {
                return Err(Error::Domain("every atom must contain the identity".into()));
            }
            if p.is_nan() || p < 0.0 {
                return Err(Error::Domain(format!("negative probability {p}")));
            }
            *merged.entry(a).or_insert(0.0) += p;
        }
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        Ok(Self { spec, atoms: merged.into_iter().collect(), status: Status::Exact, samples: 0 })
    }

    /// Empirical frequencies of the given rooted sets.
    pub fn empirical(spec: GroupSpec, samples: Vec<Vec<GroupElement>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("no samples".into()));
        }
        let n = samples.len();
        let mut counts: BTreeMap<Vec<GroupElement>, u64> = BTreeMap::new();
        let id = spec.identity();
        for mut a in samples {
            a.sort();
            a.dedup();
            if !a.contains(&id) {
                return Err(Error::Domain("every sample must contain the identity".into()));
            }
            *counts.entry(a).or_insert(0) += 1;
        }
        let atoms = counts.into_iter().map(|(a, c)| (a, c as f64 / n as f64)).collect();
        Ok(Self { spec, atoms, status: Status::Empirical, samples: n as u64 })
    }

    pub fn spec(&self) -> GroupSpec {
        self.spec
    }

    pub fn atoms(&self) -> &[(Vec<GroupElement>, f64)] {
        &self.atoms
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// `E[1/|E|]`.
    pub fn expected_inverse_size(&self) -> f64 {
        self.atoms.iter().map(|(a, p)| p / a.len() as f64).sum()
    }
}

/// Translates `set` on the left by `g`.
fn translate(spec: &GroupSpec, g: &GroupElement, set: &[GroupElement]) -> Result<Vec<GroupElement>> {
    let mut out = set.iter().map(|x| spec.multiply(g, x)).collect::<Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

/// The uniform rooted translate `γ⁻¹F`, `γ ∈ F`.
pub fn finite_urs(spec: GroupSpec, f: &[GroupElement]) -> Result<RootedSetDistribution> {
    let mut set: Vec<GroupElement> = f.to_vec();
    set.sort();
    set.dedup();
    if set.is_empty() {
        return Err(Error::Domain("finite_urs needs a nonempty set".into()));
    }
    let mut counts: BTreeMap<Vec<GroupElement>, usize> = BTreeMap::new();
    for g in &set {
        *counts.entry(translate(&spec, &spec.invert(g)?, &set)?).or_insert(0) += 1;
    }
    let m = set.len() as f64;
    RootedSetDistribution::exact(spec, counts.into_iter().map(|(a, c)| (a, c as f64 / m)).collect())
}

/// A bounded test function `f(E, γ)` for the mass-transport balance.
pub type TransportFn = fn(&GroupSpec, &[GroupElement], &GroupElement) -> f64;

#[derive(Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub f: TransportFn,
}

fn contains(set: &[GroupElement], g: &GroupElement) -> bool {
    set.binary_search(g).is_ok()
}

fn set_hash(spec: &GroupSpec, set: &[GroupElement]) -> u64 {
    set.iter().fold(0x5e7_u64, |acc, g| mix64(acc ^ spec.key(g)))
}

fn neighbours_in(spec: &GroupSpec, set: &[GroupElement], g: &GroupElement) -> f64 {
    spec.generators()
        .iter()
        .filter(|s| spec.multiply(g, s).map(|x| contains(set, &x)).unwrap_or(false))
        .count() as f64
}

/// Ten fixed test functions, from trivial to hash-scrambled.
pub fn battery() -> Vec<TestFunction> {
    vec![
        TestFunction { name: "constant", f: |_, _, _| 1.0 },
        TestFunction { name: "is_first_generator", f: |s, _, g| f64::from(u8::from(*g == s.generators()[0])) },
        TestFunction { name: "is_first_inverse", f: |s, _, g| f64::from(u8::from(*g == s.generators()[1])) },
        TestFunction { name: "word_length", f: |s, _, g| s.word_length(g) as f64 },
        TestFunction { name: "set_size", f: |_, e, _| e.len() as f64 },
        TestFunction {
            name: "step_stays_in_set",
            f: |s, e, g| {
                let x = s.multiply(g, &s.generators()[0]).expect("same group");
                f64::from(u8::from(contains(e, &x)))
            },
        },
        TestFunction { name: "neighbours_in_set", f: neighbours_in },
        TestFunction { name: "length_over_size", f: |s, e, g| s.word_length(g) as f64 / e.len() as f64 },
        TestFunction { name: "hashed", f: |s, e, g| unit_f64(mix64(set_hash(s, e) ^ s.key(g))) },
        TestFunction {
            name: "root_degree_times_length",
            f: |s, e, g| neighbours_in(s, e, &s.identity()) * (s.word_length(g).min(3) as f64),
        },
    ]
}

/// `|E[Σ_{γ∈E} f(E,γ)] − E[Σ_{γ∈E} f(γ⁻¹E, γ⁻¹)]|`.
pub fn mtp_check(dist: &RootedSetDistribution, f: TransportFn) -> Result<f64> {
    let spec = dist.spec;
    let mut out_mass = 0.0;
    let mut in_mass = 0.0;
    for (atom, p) in &dist.atoms {
        let mut a = 0.0;
        let mut b = 0.0;
        for g in atom {
            let gi = spec.invert(g)?;
            a += f(&spec, atom, g);
            b += f(&spec, &translate(&spec, &gi, atom)?, &gi);
        }
        out_mass += p * a;
        in_mass += p * b;
    }
    Ok((out_mass - in_mass).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MtpSweep {
    pub sets: usize,
    pub max_violation: f64,
    /// `(function, largest violation)` in battery order.
    pub per_function: Vec<(String, f64)>,
}

/// Runs the battery on `finite_urs(F)` for every nonempty `F ⊆ ball(radius)`
/// with `|F| ≤ max_size`.
pub fn mtp_sweep(spec: GroupSpec, radius: usize, max_size: usize) -> Result<MtpSweep> {
    let b = ball(&spec, radius)?;
    let fns = battery();
    let mut per = vec![0.0f64; fns.len()];
    let mut sets = 0;
    let mut stack: Vec<usize> = Vec::new();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    fn rec(start: usize, n: usize, max: usize, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !stack.is_empty() {
            out.push(stack.clone());
        }
        if stack.len() == max {
            return;
        }
        for i in start..n {
            stack.push(i);
            rec(i + 1, n, max, stack, out);
            stack.pop();
        }
    }
    rec(0, b.len(), max_size, &mut stack, &mut subsets);
    let results: Vec<Vec<f64>> = subsets
        .par_iter()
        .map(|idx| {
            let f: Vec<GroupElement> = idx.iter().map(|&i| b.vertex(i).clone()).collect();
            let dist = finite_urs(spec, &f)?;
            fns.iter().map(|t| mtp_check(&dist, t.f)).collect()
        })
        .collect::<Result<_>>()?;
    for r in &results {
        sets += 1;
        for (m, v) in per.iter_mut().zip(r) {
            *m = m.max(*v);
        }
    }
    Ok(MtpSweep {
        sets,
        max_violation: per.iter().copied().fold(0.0, f64::max),
        per_function: fns.iter().zip(per).map(|(t, v)| (t.name.to_string(), v)).collect(),
    })
}

/// `P(F ⊆ E)` for rooted patterns `F ⊆ ball(r)`, stored as bitmasks over the
/// ball's vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderTable {
    spec: GroupSpec,
    radius: usize,
    elements: Vec<GroupElement>,
    status: Status,
    samples: u64,
    acceptance: Option<f64>,
    entries: BTreeMap<u64, (f64, Option<u64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryJson {
    pub pattern: Vec<String>,
    pub p: f64,
    pub count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableJson {
    pub group: String,
    pub radius: usize,
    pub status: Status,
    pub samples: u64,
    pub acceptance: Option<f64>,
    pub entries: Vec<EntryJson>,
}

fn pattern_ball(spec: &GroupSpec, radius: usize) -> Result<CayleyBall> {
    let b = ball(spec, radius)?;
    if b.len() > 64 {
        return Err(Error::Budget(format!("cylinder patterns need |ball(r)| ≤ 64, got {}", b.len())));
    }
    Ok(b)
}

/// Masks of every rooted pattern with at most [`SMALL_PATTERN_SIZE`] elements.
fn small_patterns(len: usize) -> Vec<u64> {
    let mut out = vec![1u64];
    for i in 1..len {
        out.push(1 | 1 << i);
        for j in i + 1..len {
            out.push(1 | 1 << i | 1 << j);
        }
    }
    out
}

impl CylinderTable {
    fn build(
        spec: GroupSpec,
        b: &CayleyBall,
        weights: &BTreeMap<u64, f64>,
        counts: Option<&BTreeMap<u64, u64>>,
        status: Status,
        samples: u64,
        acceptance: Option<f64>,
    ) -> Self {
        let mut tracked: BTreeSet<u64> = small_patterns(b.len()).into_iter().collect();
        let mut observed: Vec<(u64, f64)> = weights.iter().map(|(&m, &w)| (m, w)).collect();
        if observed.len() > OBSERVED_CAP {
            observed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            observed.truncate(OBSERVED_CAP);
        }
        tracked.extend(observed.iter().map(|&(m, _)| m));
        let entries = tracked
            .into_iter()
            .map(|f| {
                let c: Option<u64> = counts.map(|c| c.iter().filter(|(&m, _)| m & f == f).map(|(_, &n)| n).sum());
                let p = match c {
                    Some(n) => n as f64 / samples as f64,
                    None => weights.iter().filter(|(&m, _)| m & f == f).map(|(_, &w)| w).sum(),
                };
                (f, (p, c))
            })
            .collect();
        Self {
            spec,
            radius: b.radius(),
            elements: b.vertices().to_vec(),
            status,
            samples,
            acceptance,
            entries,
        }
    }

    /// Exact table of a finitely supported distribution.
    pub fn exact(dist: &RootedSetDistribution, radius: usize) -> Result<Self> {
        let b = pattern_ball(&dist.spec, radius)?;
        let mut weights: BTreeMap<u64, f64> = BTreeMap::new();
        for (atom, p) in &dist.atoms {
            let mask = atom
                .iter()
                .filter_map(|g| b.index_of(g))
                .fold(0u64, |m, i| m | 1 << i);
            *weights.entry(mask).or_insert(0.0) += p;
        }
        let status = dist.status;
        let counts = (status == Status::Empirical).then(|| {
            weights.iter().map(|(&m, &w)| (m, (w * dist.samples as f64).round() as u64)).collect()
        });
        Ok(Self::build(dist.spec, &b, &weights, counts.as_ref(), status, dist.samples, None))
    }

    /// Empirical table from a histogram of observed masks.
    fn empirical(spec: GroupSpec, b: &CayleyBall, hist: &BTreeMap<u64, u64>, acceptance: f64) -> Self {
        let total: u64 = hist.values().sum();
        let weights = hist.iter().map(|(&m, &c)| (m, c as f64 / total as f64)).collect();
        Self::build(spec, b, &weights, Some(hist), Status::Empirical, total, Some(acceptance))
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Fraction of draws that had the root in E.
    pub fn acceptance(&self) -> Option<f64> {
        self.acceptance
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(mask, probability)` pairs in mask order.
    pub fn entries(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.entries.iter().map(|(&m, &(p, _))| (m, p))
    }

    pub fn probability(&self, pattern: &[GroupElement]) -> Option<f64> {
        let mask = self.mask_of(pattern)?;
        self.entries.get(&mask).map(|e| e.0)
    }

    fn mask_of(&self, pattern: &[GroupElement]) -> Option<u64> {
        pattern.iter().try_fold(0u64, |m, g| self.elements.iter().position(|x| x == g).map(|i| m | 1 << i))
    }

    /// Pairs `F ⊂ F′` of tracked patterns with `P(F′) > P(F) + slack`.
    pub fn monotonicity_violations(&self, slack: f64) -> usize {
        let e: Vec<(u64, f64)> = self.entries().collect();
        let mut bad = 0;
        for &(f, pf) in &e {
            for &(g, pg) in &e {
                if f != g && g & f == f && pg > pf + slack {
                    bad += 1;
                }
            }
        }
        bad
    }

    /// Count-weighted average with another empirical table over the
    /// patterns tracked by both.
    pub fn merge(&self, other: &CylinderTable) -> Result<CylinderTable> {
        self.compatible(other)?;
        if self.status != Status::Empirical || other.status != Status::Empirical {
            return Err(Error::Domain("only empirical tables can be merged".into()));
        }
        let (n1, n2) = (self.samples as f64, other.samples as f64);
        let entries = self
            .entries
            .iter()
            .filter_map(|(m, &(p1, c1))| {
                other.entries.get(m).map(|&(p2, c2)| {
                    (*m, ((p1 * n1 + p2 * n2) / (n1 + n2), c1.zip(c2).map(|(a, b)| a + b)))
                })
            })
            .collect();
        let acceptance = match (self.acceptance, other.acceptance) {
            (Some(a), Some(b)) => Some((a * n1 + b * n2) / (n1 + n2)),
            _ => None,
        };
        Ok(CylinderTable { entries, samples: self.samples + other.samples, acceptance, ..self.clone() })
    }

    fn compatible(&self, other: &CylinderTable) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Shape(format!("tables over {} and {}", self.spec, other.spec)));
        }
        if self.radius != other.radius {
            return Err(Error::Shape(format!("tables of radius {} and {}", self.radius, other.radius)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> TableJson {
        TableJson {
            group: self.spec.to_string(),
            radius: self.radius,
            status: self.status,
            samples: self.samples,
            acceptance: self.acceptance,
            entries: self
                .entries
                .iter()
                .map(|(&m, &(p, count))| EntryJson {
                    pattern: (0..self.elements.len())
                        .filter(|i| m >> i & 1 == 1)
                        .map(|i| self.spec.format_element(&self.elements[i]))
                        .collect(),
                    p,
                    count,
                })
                .collect(),
        }
    }

    pub fn from_json(t: &TableJson) -> Result<Self> {
        let spec = GroupSpec::parse(&t.group)?;
        let b = pattern_ball(&spec, t.radius)?;
        let mut entries = BTreeMap::new();
        for e in &t.entries {
            let mut mask = 0u64;
            for w in &e.pattern {
                let g = spec.parse_element(w)?;
                let i = b
                    .index_of(&g)
                    .ok_or_else(|| Error::Domain(format!("pattern element {w} outside ball({})", t.radius)))?;
                mask |= 1 << i;
            }
            if mask & 1 == 0 {
                return Err(Error::Domain("patterns must contain the identity".into()));
            }
            entries.insert(mask, (e.p, e.count));
        }
        Ok(Self {
            spec,
            radius: t.radius,
            elements: b.vertices().to_vec(),
            status: t.status,
            samples: t.samples,
            acceptance: t.acceptance,
            entries,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakStarDistance {
    pub value: f64,
    /// Number of patterns tracked by both tables.
    pub shared: usize,
    /// One table is exact and the other empirical.
    pub cross_status: bool,
}

/// Largest `|P₁(C_F) − P₂(C_F)|` over patterns tracked by both tables.
pub fn weak_star_distance(t1: &CylinderTable, t2: &CylinderTable) -> Result<WeakStarDistance> {
    t1.compatible(t2)?;
    let mut value: f64 = 0.0;
    let mut shared = 0;
    for (m, &(p1, _)) in &t1.entries {
        if let Some(&(p2, _)) = t2.entries.get(m) {
            shared += 1;
            value = value.max((p1 - p2).abs());
        }
    }
    Ok(WeakStarDistance { value, shared, cross_status: t1.status != t2.status })
}

/// How samples are conditioned on the root being in E.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conditioning {
    /// Discard draws without the root.
    Rejection,
    /// Zoo rules only: draw the labels near the root from their exact
    /// conditional law given that some planting covers the root.
    Planted,
}

/// Labels at the zoo seeds that can cover the root.
struct PlantPlan {
    /// `(vertex, patterns covering the root when planted there)`.
    candidates: Vec<(usize, Vec<u64>)>,
    patterns: u64,
    thr: u64,
    /// Probability that candidate i covers the root.
    pi: Vec<f64>,
}

impl PlantPlan {
    fn new(rule: &LocalRule, b: &CayleyBall) -> Result<Self> {
        let RuleKind::PoissonZoo { patterns, q } = rule.kind() else {
            return Err(Error::Domain("planted conditioning needs a zoo rule".into()));
        };
        let spec = rule.spec();
        let mut cover: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for (j, pat) in patterns.iter().enumerate() {
            for phi in pat {
                let u = b
                    .index_of(&spec.invert(phi)?)
                    .ok_or_else(|| Error::Shape("sampling ball too small for the pattern".into()))?;
                cover.entry(u).or_default().push(j as u64);
            }
        }
        let thr = threshold(*q);
        let seed_p = thr as f64 / (1u64 << 53) as f64;
        let jn = patterns.len() as u64;
        let candidates: Vec<(usize, Vec<u64>)> = cover.into_iter().collect();
        let pi = candidates.iter().map(|(_, js)| seed_p * js.len() as f64 / jn as f64).collect();
        Ok(Self { candidates, patterns: jn, thr, pi })
    }

    fn covers(&self, i: usize, l: &Label) -> bool {
        l.below(self.thr) && self.candidates[i].1.contains(&(l.aux % self.patterns))
    }

    /// Exact probability that the root is covered.
    fn root_density(&self) -> f64 {
        1.0 - self.pi.iter().map(|p| 1.0 - p).product::<f64>()
    }

    fn condition(&self, labels: &mut [Label], rng: &mut ChaCha8Rng) {
        let z = self.root_density();
        let mut u: f64 = rng.random::<f64>() * z;
        let mut first = self.pi.len() - 1;
        let mut none_before = 1.0;
        for (i, p) in self.pi.iter().enumerate() {
            let w = none_before * p;
            if u < w {
                first = i;
                break;
            }
            u -= w;
            none_before *= 1.0 - p;
        }
        for i in 0..first {
            let v = self.candidates[i].0;
            while self.covers(i, &labels[v]) {
                labels[v] = Label { mark: rng.random(), aux: rng.random() };
            }
        }
        let v = self.candidates[first].0;
        let low: u64 = rng.random::<u64>() & 0x7ff;
        labels[v].mark = (rng.random_range(0..self.thr) << 11) | low;
        loop {
            labels[v].aux = rng.random();
            if self.covers(first, &labels[v]) {
                break;
            }
        }
    }
}

/// Empirical cylinder table of a local rule conditioned on `root ∈ E`.
pub fn cylinder_probabilities(
    rule: &LocalRule,
    radius: usize,
    n_samples: usize,
    seed: u64,
    conditioning: Conditioning,
) -> Result<CylinderTable> {
    if n_samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let spec = rule.spec();
    let pb = pattern_ball(&spec, radius)?;
    let window = Window::new(spec, radius + rule.radius())?;
    let b = window.ball();
    let inner = b.prefix_len(radius);
    let plan = match conditioning {
        Conditioning::Planted => Some(PlantPlan::new(rule, b)?),
        Conditioning::Rejection => None,
    };
    let chunks: Vec<BTreeMap<u64, u64>> = (0..n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut hist = BTreeMap::new();
            let mut labels = Vec::with_capacity(window.keys().len());
            for t in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                let s = derive_seed(seed, t as u64);
                labels.clear();
                labels.extend(window.keys().iter().map(|&k| Label::draw(s, k)));
                if let Some(plan) = &plan {
                    plan.condition(&mut labels, &mut ChaCha8Rng::seed_from_u64(derive_seed(s, PLANT_STREAM)));
                }
                if rule.evaluate(b, &labels, 0) != Some(true) {
                    continue;
                }
                let mask = (0..inner)
                    .filter(|&v| rule.evaluate(b, &labels, v) == Some(true))
                    .fold(0u64, |m, v| m | 1 << v);
                *hist.entry(mask).or_insert(0) += 1;
            }
            hist
        })
        .collect();
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for h in chunks {
        for (m, c) in h {
            *hist.entry(m).or_insert(0) += c;
        }
    }
    let accepted: u64 = hist.values().sum();
    if accepted == 0 {
        return Err(Error::Starvation(n_samples));
    }
    Ok(CylinderTable::empirical(spec, &pb, &hist, accepted as f64 / n_samples as f64))
}

/// Exact `P(root ∈ E)` for a zoo rule.
pub fn zoo_root_density(rule: &LocalRule) -> Result<f64> {
    let b = ball(&rule.spec(), rule.radius())?;
    Ok(PlantPlan::new(rule, &b)?.root_density())
}

/// Number of indices `i` with `d[i+1] ≥ d[i]`.
pub fn inversions(d: &[f64]) -> usize {
    d.windows(2).filter(|w| w[1] >= w[0]).count()
}

/// Decreasing up to at most `allowed` inversions.
pub fn decreasing_with_inversions(d: &[f64], allowed: usize) -> bool {
    inversions(d) <= allowed
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThinningRow {
    pub q: f64,
    pub distance: f64,
    pub shared: usize,
    pub acceptance: f64,
    pub accepted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThinningReport {
    pub rows: Vec<ThinningRow>,
    pub inversions: usize,
    /// At most one inversion; vacuous for a single row.
    pub trend_ok: bool,
    pub final_ok: bool,
}

/// Distance between the zoo with single pattern `pattern` at each intensity
/// and `finite_urs(pattern)`, both at radius `radius`.
#[allow(clippy::too_many_arguments)]
pub fn fiid_thinning_limit_check(
    spec: GroupSpec,
    pattern: &[GroupElement],
    intensities: &[f64],
    radius: usize,
    samples: usize,
    seed: u64,
    conditioning: Conditioning,
    final_threshold: f64,
) -> Result<ThinningReport> {
    if intensities.is_empty() {
        return Err(Error::Domain("need at least one intensity".into()));
    }
    let exact = CylinderTable::exact(&finite_urs(spec, pattern)?, radius)?;
    let mut rows = Vec::with_capacity(intensities.len());
    for &q in intensities {
        let rule = LocalRule::poisson_zoo(spec, vec![pattern.to_vec()], q)?;
        let table = cylinder_probabilities(&rule, radius, samples, seed, conditioning)?;
        let d = weak_star_distance(&table, &exact)?;
        rows.push(ThinningRow {
            q,
            distance: d.value,
            shared: d.shared,
            acceptance: table.acceptance().unwrap_or(1.0),
            accepted: table.samples(),
        });
    }
    let dist: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    let inv = inversions(&dist);
    Ok(ThinningReport {
        trend_ok: inv <= 1,
        final_ok: *dist.last().expect("nonempty") <= final_threshold,
        inversions: inv,
        rows,
    })
}
