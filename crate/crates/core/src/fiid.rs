//! Factor-of-iid subsets of Cayley balls: seeded labels, local rules,
//! density estimation, components, carving cuts and exponential selection.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::sync::Arc;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::Serialize;

use crate::groups::{ball, CayleyBall, Group, GroupElement, GroupSpec};
use crate::{Error, Result};

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent child seed for `stream` under `seed`.
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(stream.wrapping_mul(0xd1b5_4a32_d192_ed03)))
}

/// Uniform in [0,1) from the top 53 bits.
#[inline]
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `ceil(p·2^53)`: a 53-bit draw `m` satisfies `m < threshold(p)` with probability p.
pub fn threshold(p: f64) -> u64 {
    (p * (1u64 << 53) as f64).ceil() as u64
}

const AUX_STREAM: u64 = 0x00a0_7a11_5eed;
const CARVE_STREAM: u64 = 0xca4e_0000_0001;

/// The iid label of one vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Label {
    pub mark: u64,
    pub aux: u64,
}

impl Label {
    /// Label of the group element with stable key `key`.
    #[inline]
    pub fn draw(seed: u64, key: u64) -> Self {
        Self { mark: derive_seed(seed, key), aux: derive_seed(seed ^ AUX_STREAM, key) }
    }

    #[inline]
    pub fn below(&self, thr: u64) -> bool {
        (self.mark >> 11) < thr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RuleKind {
    Bernoulli { p: f64 },
    /// Patterns are finite sets containing the identity.
    PoissonZoo { patterns: Vec<Vec<GroupElement>>, q: f64 },
    /// A vertex is kept iff its label is the smallest in its `window`-ball.
    MinLabel { window: usize },
}

/// A finite-radius local rule, compiled against a group.
#[derive(Debug, Clone)]
pub struct LocalRule {
    spec: GroupSpec,
    kind: RuleKind,
    radius: usize,
    text: String,
    /// For the zoo: per pattern, generator words of φ⁻¹ for φ ∈ Φ_j.
    /// For min-label: generator words of every non-identity ball element.
    walks: Vec<Vec<Vec<usize>>>,
}

impl LocalRule {
    pub fn bernoulli(spec: GroupSpec, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("bernoulli p must lie in [0,1], got {p}")));
        }
        Ok(Self { spec, kind: RuleKind::Bernoulli { p }, radius: 0, text: format!("bernoulli:p={p}"), walks: vec![] })
    }

    pub fn poisson_zoo(spec: GroupSpec, patterns: Vec<Vec<GroupElement>>, q: f64) -> Result<Self> {
        Self::poisson_zoo_named(spec, patterns, q, None)
    }

    fn poisson_zoo_named(
        spec: GroupSpec,
        patterns: Vec<Vec<GroupElement>>,
        q: f64,
        name: Option<&str>,
    ) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("zoo intensity must lie in (0,1), got {q}")));
        }
        if patterns.is_empty() {
            return Err(Error::Domain("zoo needs at least one pattern".into()));
        }
        let id = spec.identity();
        let mut walks = Vec::with_capacity(patterns.len());
        let mut radius = 0;
        let mut canon = Vec::with_capacity(patterns.len());
        for pat in patterns {
            let mut pat = pat;
            pat.sort();
            pat.dedup();
            if !pat.contains(&id) {
                return Err(Error::Domain("every zoo pattern must contain the identity".into()));
            }
            let mut w = Vec::with_capacity(pat.len());
            for phi in &pat {
                radius = radius.max(spec.word_length(phi));
                w.push(spec.generator_word(&spec.invert(phi)?)?);
            }
            walks.push(w);
            canon.push(pat);
        }
        let pat_text = match name {
            Some(n) => n.to_string(),
            None => canon
                .iter()
                .map(|p| p.iter().map(|g| spec.format_element(g)).collect::<Vec<_>>().join("."))
                .collect::<Vec<_>>()
                .join("/"),
        };
        Ok(Self {
            spec,
            text: format!("zoo:q={q},pat={pat_text}"),
            kind: RuleKind::PoissonZoo { patterns: canon, q },
            radius,
            walks,
        })
    }

    pub fn min_label(spec: GroupSpec, window: usize) -> Result<Self> {
        let b = ball(&spec, window)?;
        let words = (1..b.len()).map(|v| b.word_to(v)).collect();
        Ok(Self { spec, kind: RuleKind::MinLabel { window }, radius: window, text: format!("minlabel:w={window}"), walks: vec![words] })
    }

    /// Parses `bernoulli:p=0.3`, `minlabel:w=1` or `zoo:q=1e-3,pat=ball1`.
    ///
    /// Zoo patterns are separated by `/`; each is `ball<k>` or canonical
    /// elements joined by `.` (for example `e.a.ab`).
    pub fn parse(spec: GroupSpec, s: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("rule `{s}`: {m}"));
        let (kind, params) = s.trim().split_once(':').ok_or_else(|| bad("expected <kind>:<params>"))?;
        let mut p = None;
        let mut q = None;
        let mut w = None;
        let mut pat = None;
        for kv in params.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let num = || v.trim().parse::<f64>().map_err(|_| bad("bad number"));
            match k.trim() {
                "p" => p = Some(num()?),
                "q" => q = Some(num()?),
                "w" => w = Some(v.trim().parse::<usize>().map_err(|_| bad("bad window"))?),
                "pat" => pat = Some(v.trim().to_string()),
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        match (kind.trim(), p, q, w, pat) {
            ("bernoulli", Some(p), None, None, None) => Self::bernoulli(spec, p),
            ("minlabel", None, None, Some(w), None) => Self::min_label(spec, w),
            ("zoo", None, Some(q), None, Some(pat)) => {
                let patterns = pat
                    .split('/')
                    .map(|item| parse_pattern(&spec, item))
                    .collect::<Result<Vec<_>>>()?;
                Self::poisson_zoo_named(spec, patterns, q, Some(&pat))
            }
            _ => Err(bad("expected bernoulli:p=…, minlabel:w=… or zoo:q=…,pat=…")),
        }
    }

    /// The same rule with its intensity (p or q) replaced.
    pub fn with_intensity(&self, x: f64) -> Result<Self> {
        match &self.kind {
            RuleKind::Bernoulli { .. } => Self::bernoulli(self.spec, x),
            RuleKind::PoissonZoo { patterns, .. } => {
                let name = self.text.split_once(",pat=").map(|(_, n)| n.to_string());
                Self::poisson_zoo_named(self.spec, patterns.clone(), x, name.as_deref())
            }
            RuleKind::MinLabel { .. } => Err(Error::Domain("min-label rules have no intensity".into())),
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn kind(&self) -> &RuleKind {
        &self.kind
    }

    pub fn spec(&self) -> GroupSpec {
        self.spec
    }

    /// Membership of `v`, reading only labels within distance `radius` of it.
    ///
    /// Returns `None` when part of that neighbourhood lies outside the ball.
    pub fn evaluate(&self, ball: &CayleyBall, labels: &[Label], v: usize) -> Option<bool> {
        match &self.kind {
            RuleKind::Bernoulli { p } => Some(labels[v].below(threshold(*p))),
            RuleKind::PoissonZoo { q, .. } => {
                let thr = threshold(*q);
                let j_count = self.walks.len() as u64;
                let mut hit = false;
                for (j, pattern) in self.walks.iter().enumerate() {
                    for word in pattern {
                        let u = ball.walk(v, word)?;
                        let lab = &labels[u];
                        if lab.below(thr) && lab.aux % j_count == j as u64 {
                            hit = true;
                        }
                    }
                }
                Some(hit)
            }
            RuleKind::MinLabel { .. } => {
                let mut min = true;
                for word in &self.walks[0] {
                    let u = ball.walk(v, word)?;
                    if labels[u] < labels[v] {
                        min = false;
                    }
                }
                Some(min)
            }
        }
    }

    /// Expected density when the patterns never overlap: `q·mean|Φ_j|` for the
    /// zoo, `p` for Bernoulli.
    pub fn nominal_density(&self) -> Option<f64> {
        match &self.kind {
            RuleKind::Bernoulli { p } => Some(*p),
            RuleKind::PoissonZoo { patterns, q } => {
                Some(q * patterns.iter().map(|p| p.len() as f64).sum::<f64>() / patterns.len() as f64)
            }
            RuleKind::MinLabel { .. } => None,
        }
    }
}

impl fmt::Display for LocalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// `ball<k>` or canonical elements joined by `.`.
pub fn parse_pattern(spec: &GroupSpec, s: &str) -> Result<Vec<GroupElement>> {
    let s = s.trim();
    if let Some(k) = s.strip_prefix("ball") {
        let k: usize = k.parse().map_err(|_| Error::Parse(format!("pattern `{s}`")))?;
        return Ok(ball(spec, k)?.vertices().to_vec());
    }
    s.split('.').map(|x| spec.parse_element(x)).collect()
}

/// A Cayley ball with the stable keys of its vertices, optionally recentred.
#[derive(Debug, Clone)]
pub struct Window {
    spec: GroupSpec,
    ball: Arc<CayleyBall>,
    center: GroupElement,
    keys: Vec<u64>,
}

impl Window {
    pub fn new(spec: GroupSpec, radius: usize) -> Result<Self> {
        let b = Arc::new(ball(&spec, radius)?);
        let keys = b.vertices().iter().map(|g| spec.key(g)).collect();
        Ok(Self { spec, center: spec.identity(), ball: b, keys })
    }

    /// The same ball with vertex `g` standing for the element `center·g`.
    pub fn recentered(&self, center: &GroupElement) -> Result<Self> {
        let keys = self
            .ball
            .vertices()
            .iter()
            .map(|g| Ok(self.spec.key(&self.spec.multiply(center, g)?)))
            .collect::<Result<_>>()?;
        Ok(Self { spec: self.spec, ball: Arc::clone(&self.ball), center: center.clone(), keys })
    }

    pub fn ball(&self) -> &CayleyBall {
        &self.ball
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn center(&self) -> &GroupElement {
        &self.center
    }

    pub fn labels(&self, seed: u64) -> Vec<Label> {
        self.keys.iter().map(|&k| Label::draw(seed, k)).collect()
    }
}

/// Labels and membership on one Cayley ball.
#[derive(Debug, Clone)]
pub struct BallConfig {
    pub window: Window,
    pub labels: Vec<Label>,
    /// `None` outside the radius `R − r` where the rule is fully determined.
    pub membership: Vec<Option<bool>>,
    pub rule_radius: usize,
    pub seed: u64,
}

impl BallConfig {
    pub fn from_labels(window: Window, rule: &LocalRule, labels: Vec<Label>, seed: u64) -> Result<Self> {
        let radius = window.ball().radius();
        if radius <= rule.radius() {
            return Err(Error::Domain(format!(
                "window radius {radius} must exceed the rule radius {}",
                rule.radius()
            )));
        }
        if rule.spec() != window.spec {
            return Err(Error::Shape("rule and window use different groups".into()));
        }
        let b = window.ball();
        let defined = b.prefix_len(radius - rule.radius());
        let membership = (0..b.len())
            .map(|v| if v < defined { rule.evaluate(b, &labels, v) } else { None })
            .collect();
        Ok(Self { window, labels, membership, rule_radius: rule.radius(), seed })
    }

    pub fn ball(&self) -> &CayleyBall {
        self.window.ball()
    }

    /// Radius on which membership is defined.
    pub fn defined_radius(&self) -> usize {
        self.ball().radius() - self.rule_radius
    }

    /// Radius on which statistics are taken.
    pub fn window_radius(&self) -> usize {
        self.defined_radius() - 1
    }

    pub fn member(&self, v: usize) -> Option<bool> {
        self.membership[v]
    }

    fn is_member(&self, v: usize) -> bool {
        self.membership[v] == Some(true)
    }

    pub fn in_window(&self, v: usize) -> bool {
        self.ball().depth(v) <= self.window_radius()
    }

    /// Members of E within the statistics window.
    pub fn window_members(&self) -> usize {
        let w = self.ball().prefix_len(self.window_radius());
        (0..w).filter(|&v| self.is_member(v)).count()
    }
}

/// Samples labels keyed by `(seed, element)` on the ball of radius `radius`.
pub fn sample_config(spec: GroupSpec, rule: &LocalRule, radius: usize, seed: u64) -> Result<BallConfig> {
    let window = Window::new(spec, radius)?;
    let labels = window.labels(seed);
    BallConfig::from_labels(window, rule, labels, seed)
}

/// As [`sample_config`] on a shared window (which may be recentred).
pub fn sample_on(window: &Window, rule: &LocalRule, seed: u64) -> Result<BallConfig> {
    BallConfig::from_labels(window.clone(), rule, window.labels(seed), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub p_hat: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub samples: usize,
    pub hits: usize,
}

/// Monte Carlo estimate of `P(root ∈ E)`; trial `t` uses `derive_seed(seed, t)`.
pub fn density_estimate(
    spec: GroupSpec,
    rule: &LocalRule,
    radius: usize,
    n_samples: usize,
    seed: u64,
) -> Result<DensityEstimate> {
    if n_samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    if radius <= rule.radius() {
        return Err(Error::Domain(format!("window radius {radius} must exceed the rule radius {}", rule.radius())));
    }
    // Root membership only reads the rule-radius ball, and labels are keyed by
    // element, so sampling that ball alone gives the same outcome.
    let local = Window::new(spec, rule.radius())?;
    let hits: usize = (0..n_samples)
        .into_par_iter()
        .map_init(
            || vec![Label { mark: 0, aux: 0 }; local.keys().len()],
            |labels, t| {
                let s = derive_seed(seed, t as u64);
                for (l, &k) in labels.iter_mut().zip(local.keys()) {
                    *l = Label::draw(s, k);
                }
                usize::from(rule.evaluate(local.ball(), labels, 0) == Some(true))
            },
        )
        .sum();
    let p_hat = hits as f64 / n_samples as f64;
    let ci95 = 1.96 * (p_hat * (1.0 - p_hat) / n_samples as f64).sqrt();
    Ok(DensityEstimate { p_hat, ci95, samples: n_samples, hits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Component {
    pub size: usize,
    /// Reaches the outermost defined sphere, so it may continue outside.
    pub touches_boundary: bool,
}

/// Connected components of E on the defined region, largest first.
pub fn components(config: &BallConfig) -> Vec<Component> {
    let keep: Vec<bool> = (0..config.ball().len()).map(|v| config.is_member(v)).collect();
    components_of(config, &keep)
}

fn components_of(config: &BallConfig, keep: &[bool]) -> Vec<Component> {
    let b = config.ball();
    let n = b.prefix_len(config.defined_radius());
    let mut uf = UnionFind::<usize>::new(n);
    for v in 0..n {
        if !keep[v] {
            continue;
        }
        for s in 0..b.degree() {
            if let Some(u) = b.neighbor(v, s) {
                if u < n && keep[u] {
                    uf.union(v, u);
                }
            }
        }
    }
    let mut size = vec![0usize; n];
    let mut touch = vec![false; n];
    let edge = config.defined_radius();
    for v in (0..n).filter(|&v| keep[v]) {
        let r = uf.find(v);
        size[r] += 1;
        touch[r] |= b.depth(v) == edge;
    }
    let mut out: Vec<Component> = (0..n)
        .filter(|&r| size[r] > 0)
        .map(|r| Component { size: size[r], touches_boundary: touch[r] })
        .collect();
    out.sort_by(|a, b| b.size.cmp(&a.size).then(a.touches_boundary.cmp(&b.touches_boundary)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutResult {
    /// Ball indices of the cut vertices, ascending.
    pub cut: Vec<usize>,
    /// Largest component of (E∖C) inside the statistics window.
    pub max_component: usize,
    pub cut_fraction: f64,
    pub window_members: usize,
    pub window_cut: usize,
    pub k_target: usize,
    pub seed: u64,
}

/// Cuts E into clusters of at most `k_target` vertices.
///
/// Cluster starts are taken in increasing order of a seeded priority, and
/// vertices just beyond a fresh cut are preferred as the next start, so that
/// clusters pack against each other instead of leaving slivers.
pub fn cut_random_carving(config: &BallConfig, k_target: usize, seed: u64) -> Result<CutResult> {
    if k_target == 0 {
        return Err(Error::Domain("k_target must be at least 1".into()));
    }
    const FREE: u8 = 0;
    const CLUSTER: u8 = 1;
    const CUT: u8 = 2;
    const OUT: u8 = 3;
    let b = config.ball();
    let n = b.prefix_len(config.defined_radius());
    let carve_seed = derive_seed(seed, CARVE_STREAM);
    let prio: Vec<u64> = config.window.keys()[..n].iter().map(|&k| derive_seed(carve_seed, k)).collect();
    let mut state: Vec<u8> = (0..n).map(|v| if config.is_member(v) { FREE } else { OUT }).collect();
    let mut order: Vec<usize> = (0..n).filter(|&v| state[v] == FREE).collect();
    order.sort_by_key(|&v| (prio[v], v));
    let mut next_global = 0;
    let mut frontier: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut cluster = Vec::with_capacity(k_target);
    loop {
        let mut start = None;
        while let Some(Reverse((_, v))) = frontier.pop() {
            if state[v] == FREE {
                start = Some(v);
                break;
            }
        }
        if start.is_none() {
            while next_global < order.len() && state[order[next_global]] != FREE {
                next_global += 1;
            }
            start = order.get(next_global).copied();
        }
        let Some(v0) = start else { break };
        cluster.clear();
        cluster.push(v0);
        state[v0] = CLUSTER;
        let mut head = 0;
        while head < cluster.len() && cluster.len() < k_target {
            let x = cluster[head];
            head += 1;
            for s in 0..b.degree() {
                if cluster.len() >= k_target {
                    break;
                }
                if let Some(y) = b.neighbor(x, s) {
                    if y < n && state[y] == FREE {
                        state[y] = CLUSTER;
                        cluster.push(y);
                    }
                }
            }
        }
        for &x in &cluster {
            for s in 0..b.degree() {
                let Some(y) = b.neighbor(x, s) else { continue };
                if y >= n || state[y] != FREE {
                    continue;
                }
                state[y] = CUT;
                for t in 0..b.degree() {
                    if let Some(z) = b.neighbor(y, t) {
                        if z < n && state[z] == FREE {
                            frontier.push(Reverse((prio[z], z)));
                        }
                    }
                }
            }
        }
    }
    let cut: Vec<usize> = (0..n).filter(|&v| state[v] == CUT).collect();
    let wlen = b.prefix_len(config.window_radius());
    let keep: Vec<bool> = (0..b.len()).map(|v| v < wlen && state.get(v) == Some(&CLUSTER)).collect();
    let max_component = components_of(config, &keep).first().map_or(0, |c| c.size);
    assert!(max_component <= k_target, "carving left a component of {max_component} > {k_target}");
    let window_members = config.window_members();
    let window_cut = cut.iter().filter(|&&v| v < wlen).count();
    let cut_fraction = if window_members == 0 { 0.0 } else { window_cut as f64 / window_members as f64 };
    Ok(CutResult { cut, max_component, cut_fraction, window_members, window_cut, k_target, seed })
}

/// Selects index `i` independently with probability `1 − exp(−λ·w_i)`, λ = −4 ln ε.
pub fn exponential_selection(weights: &[f64], epsilon: f64, seed: u64) -> Result<Vec<usize>> {
    let lambda = selection_rate(epsilon)?;
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Domain(format!("weights must be positive and finite, got {w}")));
    }
    Ok(weights
        .iter()
        .enumerate()
        .filter(|&(i, &w)| unit_f64(derive_seed(seed, i as u64)) < selection_probability(lambda, w))
        .map(|(i, _)| i)
        .collect())
}

/// λ = −4 ln ε for ε ∈ (0, ½).
pub fn selection_rate(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    Ok(-4.0 * epsilon.ln())
}

#[inline]
pub fn selection_probability(lambda: f64, w: f64) -> f64 {
    -(-lambda * w).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairModelBound {
    pub epsilon_prime: f64,
    /// ε′ ≥ 1, so the bound says nothing.
    pub vacuous: bool,
}

/// ε′ = −11·|S|·ε·ln ε.
pub fn pairmodel_bound(s_size: usize, epsilon: f64) -> Result<PairModelBound> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    let epsilon_prime = -11.0 * s_size as f64 * epsilon * epsilon.ln();
    Ok(PairModelBound { epsilon_prime, vacuous: epsilon_prime >= 1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub density: f64,
    /// Mean cut fraction over trials in which E meets the window.
    pub mean_cut_fraction: f64,
    /// `Σ|C ∩ W| / Σ|E ∩ W|` over all trials.
    pub pooled_cut_fraction: f64,
    pub mean_k_emp: f64,
    pub mean_members: f64,
    pub nonempty_trials: usize,
}

/// Cut statistics per intensity. Trial `t` reuses the same label seed at
/// every intensity, so rows differ only through the rule.
pub fn hyperfiniteness_curve(
    spec: GroupSpec,
    rule: &LocalRule,
    densities: &[f64],
    k_target: usize,
    radius: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<CurveRow>> {
    if densities.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Domain("densities must be strictly decreasing".into()));
    }
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let window = Window::new(spec, radius)?;
    densities
        .iter()
        .map(|&d| {
            let r = rule.with_intensity(d)?;
            let per: Vec<CutResult> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let cfg = sample_on(&window, &r, derive_seed(seed, t as u64))?;
                    cut_random_carving(&cfg, k_target, derive_seed(seed ^ CARVE_STREAM, t as u64))
                })
                .collect::<Result<_>>()?;
            Ok(curve_row(d, &per))
        })
        .collect()
}

fn curve_row(density: f64, per: &[CutResult]) -> CurveRow {
    let m = per.len() as f64;
    let nonempty: Vec<&CutResult> = per.iter().filter(|c| c.window_members > 0).collect();
    let members: usize = per.iter().map(|c| c.window_members).sum();
    let cut: usize = per.iter().map(|c| c.window_cut).sum();
    CurveRow {
        density,
        mean_cut_fraction: if nonempty.is_empty() {
            0.0
        } else {
            nonempty.iter().map(|c| c.cut_fraction).sum::<f64>() / nonempty.len() as f64
        },
        pooled_cut_fraction: if members == 0 { 0.0 } else { cut as f64 / members as f64 },
        mean_k_emp: per.iter().map(|c| c.max_component as f64).sum::<f64>() / m,
        mean_members: members as f64 / m,
        nonempty_trials: nonempty.len(),
    }
}
