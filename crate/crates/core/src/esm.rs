//! Conditional slice densities, entropy increments and the entropy support
//! map stored as a height field `J(w,i) = 1_U(w)·Δ_U(w,i)/ε_U(w,i)`.
//!
//! For an order with sequence `seq`, a point `w` is relabelled by its aligned
//! index `t` whose bit `k` is `w_{seq[k]}`. The slice at position `k` containing
//! `w` is then the set of points sharing the low `k` bits `x = t mod 2^k`, and
//! every density depends only on `(k, x)`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cube::{h, BitWord, CubeSubset, LinearOrder};
use crate::fiid::derive_seed;
use crate::{Error, Result};

/// ε_U, ε⁰_U, ε¹_U at a single `(w,i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalDensities {
    pub eps: f64,
    pub eps0: f64,
    pub eps1: f64,
}

impl ConditionalDensities {
    /// Densities of a slice of `2^m` points holding `c0 + c1` points of `U`.
    #[inline]
    pub fn from_counts(c0: u32, c1: u32, m: usize) -> Self {
        let scale = 1.0 / (1u64 << m) as f64;
        Self {
            eps: (c0 + c1) as f64 * scale,
            eps0: c0 as f64 * scale,
            eps1: c1 as f64 * scale,
        }
    }

    /// ε⁰/ε, taken as ½ on an empty slice.
    #[inline]
    pub fn p0(&self) -> f64 {
        if self.eps > 0.0 {
            self.eps0 / self.eps
        } else {
            0.5
        }
    }
}

/// Δ = h(ε) − ½h(2ε⁰) − ½h(2ε¹), clamped at 0 against rounding.
#[inline]
pub fn delta_from(d: &ConditionalDensities) -> f64 {
    (h(d.eps) - 0.5 * h(2.0 * d.eps0) - 0.5 * h(2.0 * d.eps1)).max(0.0)
}

/// Δ written as `H(Z_i) − H(Z_i | 1_U)`:
/// `ε(h(½) − h(ε⁰/ε)) + (1−ε)(h(½) − h(½ + (ε¹−ε⁰)/(2−2ε)))`.
pub fn delta_alternate(d: &ConditionalDensities) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let inside = if d.eps > 0.0 { d.eps * (ln2 - h(d.eps0 / d.eps)) } else { 0.0 };
    let outside = if d.eps < 1.0 {
        (1.0 - d.eps) * (ln2 - h(0.5 + (d.eps1 - d.eps0) / (2.0 - 2.0 * d.eps)))
    } else {
        0.0
    };
    inside + outside
}

/// Point counts of `U` in every slice of an order.
///
/// Level `k` has `2^k` slices, each of `2^{n-k}` points; level `n` is the
/// membership table in aligned coordinates.
#[derive(Debug, Clone)]
pub struct SliceCounts {
    n: usize,
    order: LinearOrder,
    counts: Vec<u32>,
}

#[inline]
fn level_offset(k: usize) -> usize {
    (1usize << k) - 1
}

impl SliceCounts {
    pub fn new(u: &CubeSubset, ord: &LinearOrder) -> Result<Self> {
        let n = u.n();
        if ord.n() != n {
            return Err(Error::Shape(format!("order on {} coordinates, set in n={n}", ord.n())));
        }
        let mut counts = vec![0u32; (1usize << (n + 1)) - 1];
        let top = level_offset(n);
        for w in u.iter() {
            counts[top + align(w, ord.sequence()) as usize] = 1;
        }
        for k in (0..n).rev() {
            let (lo, hi) = counts.split_at_mut(level_offset(k + 1));
            let next = &hi[..1 << (k + 1)];
            let cur = &mut lo[level_offset(k)..];
            for x in 0..(1usize << k) {
                cur[x] = next[x] + next[x | (1 << k)];
            }
        }
        Ok(Self { n, order: ord.clone(), counts })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> &LinearOrder {
        &self.order
    }

    /// Number of points of `U` in slice `x` at level `k`.
    #[inline]
    pub fn count(&self, k: usize, x: usize) -> u32 {
        self.counts[level_offset(k) + x]
    }

    /// Densities at position `k < n` for slice prefix `x`.
    #[inline]
    pub fn densities(&self, k: usize, x: usize) -> ConditionalDensities {
        let c0 = self.count(k + 1, x);
        let c1 = self.count(k + 1, x | (1 << k));
        ConditionalDensities::from_counts(c0, c1, self.n - k)
    }

    #[inline]
    pub fn contains_aligned(&self, t: usize) -> bool {
        self.count(self.n, t) == 1
    }
}

/// Aligned index of `w`: bit `k` is `w_{seq[k]}`.
#[inline]
pub fn align(w: u32, seq: &[usize]) -> u32 {
    let mut t = 0;
    for (k, &i) in seq.iter().enumerate() {
        t |= ((w >> i) & 1) << k;
    }
    t
}

/// Inverse of [`align`].
#[inline]
pub fn unalign(t: u32, seq: &[usize]) -> u32 {
    let mut w = 0;
    for (k, &i) in seq.iter().enumerate() {
        w |= ((t >> k) & 1) << i;
    }
    w
}

fn check_coord(u: &CubeSubset, ord: &LinearOrder, w: &BitWord, i: usize) -> Result<()> {
    if ord.n() != u.n() || w.n() != u.n() {
        return Err(Error::Shape("set, order and point must share n".into()));
    }
    if i >= u.n() {
        return Err(Error::Domain(format!("coordinate {i} out of range for n={}", u.n())));
    }
    Ok(())
}

/// Densities at `(w,i)` by a direct scan of the cube.
pub fn conditional_densities(
    u: &CubeSubset,
    ord: &LinearOrder,
    w: &BitWord,
    i: usize,
) -> Result<ConditionalDensities> {
    check_coord(u, ord, w, i)?;
    let k = ord.rank(i);
    let prefix: u32 = (0..u.n()).filter(|&j| ord.rank(j) < k).map(|j| 1u32 << j).sum();
    let (mut c0, mut c1) = (0u32, 0u32);
    for p in u.iter() {
        if (p ^ w.bits()) & prefix == 0 {
            if (p >> i) & 1 == 0 {
                c0 += 1;
            } else {
                c1 += 1;
            }
        }
    }
    Ok(ConditionalDensities::from_counts(c0, c1, u.n() - k))
}

/// Δ_U(w,i), the information about `1_U` gained by revealing coordinate `i`.
pub fn delta(u: &CubeSubset, ord: &LinearOrder, w: &BitWord, i: usize) -> Result<f64> {
    Ok(delta_from(&conditional_densities(u, ord, w, i)?))
}

/// The entropy support set of `U` under an order, as a height field.
#[derive(Debug, Clone)]
pub struct EsmField {
    n: usize,
    order: LinearOrder,
    /// Membership of `U` in aligned coordinates.
    aligned: CubeSubset,
    /// `heights[offset(k) + x]`: the height on slice `x` at position `k`.
    heights: Vec<f64>,
    source_measure: f64,
}

/// Builds `𝓔_≺(U)`.
pub fn esm_field(u: &CubeSubset, ord: &LinearOrder) -> Result<EsmField> {
    let sc = SliceCounts::new(u, ord)?;
    Ok(EsmField::from_counts(&sc))
}

impl EsmField {
    pub fn from_counts(sc: &SliceCounts) -> Self {
        let n = sc.n();
        let mut heights = vec![0.0; (1usize << n) - 1];
        for k in 0..n {
            for x in 0..(1usize << k) {
                let d = sc.densities(k, x);
                if d.eps > 0.0 {
                    heights[level_offset(k) + x] = delta_from(&d) / d.eps;
                }
            }
        }
        let aligned = CubeSubset::from_fn(n, |t| sc.contains_aligned(t as usize)).unwrap();
        Self {
            n,
            order: sc.order().clone(),
            source_measure: aligned.measure(),
            aligned,
            heights,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> &LinearOrder {
        &self.order
    }

    pub fn source_measure(&self) -> f64 {
        self.source_measure
    }

    #[inline]
    fn height_aligned(&self, t: u32, k: usize) -> f64 {
        if self.aligned.contains(t) {
            self.heights[level_offset(k) + (t as usize & ((1 << k) - 1))]
        } else {
            0.0
        }
    }

    /// J(w,i).
    pub fn height(&self, w: u32, i: usize) -> f64 {
        let t = align(w, self.order.sequence());
        self.height_aligned(t, self.order.rank(i))
    }

    /// Points of `U` in increasing order.
    pub fn support(&self) -> Vec<u32> {
        let mut pts: Vec<u32> =
            self.aligned.iter().map(|t| unalign(t, self.order.sequence())).collect();
        pts.sort_unstable();
        pts
    }

    /// Writes the field as CSV: `n,order_permutation,mass`, its values, then
    /// `w_hex,i,J` for every `w ∈ U` and every coordinate `i`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "n,order_permutation,mass").unwrap();
        writeln!(s, "{},{},{}", self.n, self.order, fmt9(field_mass(self))).unwrap();
        writeln!(s, "w_hex,i,J").unwrap();
        for w in self.support() {
            for i in 0..self.n {
                writeln!(s, "{w:x},{i},{}", fmt9(self.height(w, i))).unwrap();
            }
        }
        s
    }
}

/// Formats with nine significant digits.
pub fn fmt9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let r: f64 = format!("{x:.8e}").parse().unwrap();
    if (1e-4..1e9).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

/// m(𝓔) = 2^{-n}·Σ_{w,i} J(w,i).
pub fn field_mass(f: &EsmField) -> f64 {
    let mut total = 0.0;
    for t in f.aligned.iter() {
        for k in 0..f.n {
            total += f.height_aligned(t, k);
        }
    }
    total / (1u64 << f.n) as f64
}

/// Masses of the intersection, union and symmetric difference of two fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMasses {
    pub intersection: f64,
    pub union: f64,
    pub symdiff: f64,
}

/// Every fibre is an interval starting at 0, so the set operations reduce to
/// pointwise min, max and absolute difference of heights.
pub fn pair_masses(fu: &EsmField, fv: &EsmField) -> Result<PairMasses> {
    if fu.n != fv.n || fu.order != fv.order {
        return Err(Error::Shape("fields must share n and order".into()));
    }
    let either = fu.aligned.union(&fv.aligned)?;
    let (mut inter, mut uni, mut sym) = (0.0, 0.0, 0.0);
    for t in either.iter() {
        for k in 0..fu.n {
            let a = fu.height_aligned(t, k);
            let b = fv.height_aligned(t, k);
            inter += a.min(b);
            uni += a.max(b);
            sym += (a - b).abs();
        }
    }
    let scale = 1.0 / (1u64 << fu.n) as f64;
    Ok(PairMasses { intersection: inter * scale, union: uni * scale, symdiff: sym * scale })
}

/// `max{0, Δ_V − (ε_V/ε_U)Δ_U}` on one slice; the ratio is 0 when ε_U = 0.
#[inline]
pub fn excess_term(du: &ConditionalDensities, dv: &ConditionalDensities) -> f64 {
    if dv.eps == 0.0 {
        return 0.0;
    }
    (delta_from(dv) - dv.eps / du.eps * delta_from(du)).max(0.0)
}

/// m(𝓔(U) ∪ 𝓔(V)) − m(𝓔(U)) for `V ⊆ U`, integrated slice by slice.
pub fn union_excess(u: &CubeSubset, v: &CubeSubset, ord: &LinearOrder) -> Result<f64> {
    if !v.is_subset_of(u) {
        return Err(Error::Precondition("V must be a subset of U".into()));
    }
    let su = SliceCounts::new(u, ord)?;
    let sv = SliceCounts::new(v, ord)?;
    Ok(union_excess_counts(&su, &sv))
}

pub(crate) fn union_excess_counts(su: &SliceCounts, sv: &SliceCounts) -> f64 {
    let mut total = 0.0;
    for k in 0..su.n() {
        let mut level = 0.0;
        for x in 0..(1usize << k) {
            if sv.count(k, x) > 0 {
                level += excess_term(&su.densities(k, x), &sv.densities(k, x));
            }
        }
        total += level / (1u64 << k) as f64;
    }
    total
}

/// Largest `|J_{σU,σ≺}(σw, σi) − J_{U,≺}(w,i)|` over the cube.
pub fn check_equivariance(u: &CubeSubset, ord: &LinearOrder, sigma: &[usize]) -> Result<f64> {
    let su = u.permute(sigma)?;
    let so = ord.permuted(sigma)?;
    let f = esm_field(u, ord)?;
    let g = esm_field(&su, &so)?;
    let mut worst: f64 = 0.0;
    for w in 0..(1u32 << u.n()) {
        let sw = crate::cube::permute_point(w, sigma);
        for (i, &si) in sigma.iter().enumerate() {
            worst = worst.max((g.height(sw, si) - f.height(w, i)).abs());
        }
    }
    Ok(worst)
}

/// Uniform random order from a seeded Fisher–Yates shuffle.
pub fn sample_uniform_order(n: usize, seed: u64) -> Result<LinearOrder> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq: Vec<usize> = (0..n).collect();
    seq.shuffle(&mut rng);
    LinearOrder::from_sequence(seq)
}

/// Count and worst value of a deviation that should vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub checked: u64,
    pub max: f64,
}

impl Deviation {
    const ZERO: Self = Self { checked: 0, max: 0.0 };

    fn add(&mut self, x: f64) {
        self.checked += 1;
        self.max = self.max.max(x);
    }

    fn merge(&mut self, o: &Deviation) {
        self.checked += o.checked;
        self.max = self.max.max(o.max);
    }
}

/// Field identities over a family of `(U, order)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassReport {
    /// `|m(𝓔_≺(U)) − h(μ(U))|`.
    pub mass: Deviation,
    /// `|Σ_i 2^{-n} Σ_w Δ_U(w,i) − h(μ(U))|`.
    pub telescoping: Deviation,
    /// Defining and alternate Δ formulas, slice by slice.
    pub alternate: Deviation,
    /// Spread of the mass across orders for a fixed `U`.
    pub order_spread: Deviation,
}

impl MassReport {
    fn empty() -> Self {
        Self {
            mass: Deviation::ZERO,
            telescoping: Deviation::ZERO,
            alternate: Deviation::ZERO,
            order_spread: Deviation::ZERO,
        }
    }

    fn merge(&mut self, o: &MassReport) {
        self.mass.merge(&o.mass);
        self.telescoping.merge(&o.telescoping);
        self.alternate.merge(&o.alternate);
        self.order_spread.merge(&o.order_spread);
    }

    fn add_set(&mut self, u: &CubeSubset, orders: &[LinearOrder]) -> Result<()> {
        let target = u.entropy();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for ord in orders {
            let sc = SliceCounts::new(u, ord)?;
            let mass = field_mass(&EsmField::from_counts(&sc));
            lo = lo.min(mass);
            hi = hi.max(mass);
            self.mass.add((mass - target).abs());
            let mut tele = 0.0;
            let mut alt: f64 = 0.0;
            for k in 0..sc.n() {
                let mut level = 0.0;
                for x in 0..(1usize << k) {
                    let d = sc.densities(k, x);
                    let dl = delta_from(&d);
                    level += dl;
                    alt = alt.max((dl - delta_alternate(&d)).abs());
                }
                tele += level / (1u64 << k) as f64;
            }
            self.telescoping.add((tele - target).abs());
            self.alternate.add(alt);
        }
        self.order_spread.add(hi - lo);
        Ok(())
    }

    pub fn worst(&self) -> f64 {
        [self.mass.max, self.telescoping.max, self.alternate.max, self.order_spread.max]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Every subset of `{0,1}^n` under every order, for `n ≤ 4`.
pub fn mass_sweep_exhaustive(n: usize) -> Result<MassReport> {
    if n == 0 || n > 4 {
        return Err(Error::Budget(format!("exhaustive mass sweep needs 1 ≤ n ≤ 4, got {n}")));
    }
    let orders = LinearOrder::all(n)?;
    let masks: Vec<u64> = (0..(1u64 << (1 << n))).collect();
    let parts: Vec<Result<MassReport>> = masks
        .par_chunks(1024)
        .map(|chunk| {
            let mut r = MassReport::empty();
            for &m in chunk {
                r.add_set(&CubeSubset::from_mask(n, m)?, &orders)?;
            }
            Ok(r)
        })
        .collect();
    let mut total = MassReport::empty();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Random subsets with uniform density, each under `orders` uniform orders.
pub fn mass_sweep_random(n: usize, samples: usize, orders: usize, seed: u64) -> Result<MassReport> {
    let parts: Vec<Result<MassReport>> = (0..samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let p: f64 = rng.random();
            let u = CubeSubset::random_bernoulli(n, p, &mut rng)?;
            let ords = (0..orders.max(1))
                .map(|_| sample_uniform_order(n, rng.random()))
                .collect::<Result<Vec<_>>>()?;
            let mut r = MassReport::empty();
            r.add_set(&u, &ords)?;
            Ok(r)
        })
        .collect();
    let mut total = MassReport::empty();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Intersection masses of random disjoint pairs under random orders.
pub fn disjoint_sweep(n: usize, pairs: usize, seed: u64) -> Result<Deviation> {
    let parts: Vec<Result<f64>> = (0..pairs)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let u = CubeSubset::random_bernoulli(n, rng.random(), &mut rng)?;
            let v = u.complement().thin(rng.random(), &mut rng);
            let ord = sample_uniform_order(n, rng.random())?;
            Ok(pair_masses(&esm_field(&u, &ord)?, &esm_field(&v, &ord)?)?.intersection)
        })
        .collect();
    let mut d = Deviation::ZERO;
    for p in parts {
        d.add(p?);
    }
    Ok(d)
}

/// Random `(U, σ, ≺)` with `n` uniform in `1..=max_n`.
pub fn equivariance_sweep(max_n: usize, triples: usize, seed: u64) -> Result<Deviation> {
    let parts: Vec<Result<f64>> = (0..triples)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let n = rng.random_range(1..=max_n);
            let u = CubeSubset::random_bernoulli(n, rng.random(), &mut rng)?;
            let ord = sample_uniform_order(n, rng.random())?;
            let sigma = sample_uniform_order(n, rng.random())?;
            check_equivariance(&u, &ord, sigma.sequence())
        })
        .collect();
    let mut d = Deviation::ZERO;
    for p in parts {
        d.add(p?);
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::CubeSubset;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;
    // 30-digit reference values.
    const H_QUARTER: f64 = 0.562_335_144_618_808_4;
    const DELTA_SINGLETON: f64 = 0.215_761_554_338_835_7;
    const J_SINGLETON: f64 = 0.863_046_217_355_342_8;
    const H_EIGHTH: f64 = 0.376_770_161_256_436_8;

    fn bw(n: usize, b: u32) -> BitWord {
        BitWord::new(n, b).unwrap()
    }

    fn half() -> CubeSubset {
        CubeSubset::from_points(2, [0b01, 0b11]).unwrap()
    }

    fn single() -> CubeSubset {
        CubeSubset::from_points(2, [0b11]).unwrap()
    }

    #[test]
    fn density_examples() {
        let id = LinearOrder::identity(2).unwrap();
        for w in 0..4 {
            let d = conditional_densities(&half(), &id, &bw(2, w), 0).unwrap();
            assert_eq!((d.eps, d.eps0, d.eps1), (0.5, 0.0, 0.5));
            let f = conditional_densities(&CubeSubset::full(2).unwrap(), &id, &bw(2, w), 1).unwrap();
            assert_eq!((f.eps, f.eps0, f.eps1), (1.0, 0.5, 0.5));
            let e = conditional_densities(&CubeSubset::empty(2).unwrap(), &id, &bw(2, w), 1).unwrap();
            assert_eq!((e.eps, e.eps0, e.eps1), (0.0, 0.0, 0.0));
        }
        assert!(conditional_densities(&half(), &id, &bw(2, 0), 2).is_err());
    }

    #[test]
    fn delta_examples() {
        let id = LinearOrder::identity(2).unwrap();
        assert!((delta(&half(), &id, &bw(2, 3), 0).unwrap() - LN2).abs() < 1e-15);
        assert_eq!(delta(&CubeSubset::full(2).unwrap(), &id, &bw(2, 1), 1).unwrap(), 0.0);
        let d = delta(&single(), &id, &bw(2, 3), 0).unwrap();
        assert!((d - DELTA_SINGLETON).abs() < 1e-15);
        let dens = conditional_densities(&single(), &id, &bw(2, 3), 0).unwrap();
        assert!((delta_alternate(&dens) - DELTA_SINGLETON).abs() < 1e-15);
    }

    #[test]
    fn field_examples() {
        let id = LinearOrder::identity(2).unwrap();
        let e = esm_field(&CubeSubset::empty(2).unwrap(), &id).unwrap();
        assert_eq!(field_mass(&e), 0.0);

        let f = esm_field(&half(), &id).unwrap();
        for w in [0b01, 0b11] {
            assert!((f.height(w, 0) - 2.0 * LN2).abs() < 1e-15);
            assert_eq!(f.height(w, 1), 0.0);
        }
        assert_eq!(f.height(0b00, 0), 0.0);
        assert!((field_mass(&f) - LN2).abs() < 1e-15);

        let g = esm_field(&single(), &id).unwrap();
        assert!((g.height(3, 0) - J_SINGLETON).abs() < 1e-14);
        assert!((g.height(3, 1) - 2.0 * LN2).abs() < 1e-14);
        assert!((field_mass(&g) - H_QUARTER).abs() < 1e-15);

        let s3 = CubeSubset::from_points(3, [5]).unwrap();
        let f3 = esm_field(&s3, &LinearOrder::identity(3).unwrap()).unwrap();
        assert!((field_mass(&f3) - H_EIGHTH).abs() < 1e-15);
    }

    #[test]
    fn pair_examples() {
        let id = LinearOrder::identity(2).unwrap();
        let fu = esm_field(&half(), &id).unwrap();
        let fv = esm_field(&single(), &id).unwrap();
        let pm = pair_masses(&fu, &fv).unwrap();
        assert!((pm.intersection - 0.25 * J_SINGLETON).abs() < 1e-15);
        assert!((pm.union + pm.intersection - field_mass(&fu) - field_mass(&fv)).abs() < 1e-12);

        let same = pair_masses(&fu, &fu).unwrap();
        assert_eq!(same.symdiff, 0.0);
        assert!((same.union - LN2).abs() < 1e-15 && (same.intersection - LN2).abs() < 1e-15);

        let other = esm_field(&CubeSubset::from_points(2, [0]).unwrap(), &id).unwrap();
        assert_eq!(pair_masses(&fu, &other).unwrap().intersection, 0.0);

        let swapped = esm_field(&half(), &LinearOrder::from_sequence(vec![1, 0]).unwrap()).unwrap();
        assert!(pair_masses(&fu, &swapped).is_err());
    }

    #[test]
    fn excess_examples() {
        let id = LinearOrder::identity(2).unwrap();
        let u = half();
        assert_eq!(union_excess(&u, &u, &id).unwrap(), 0.0);
        assert_eq!(union_excess(&u, &CubeSubset::empty(2).unwrap(), &id).unwrap(), 0.0);
        let v = single();
        let direct = union_excess(&u, &v, &id).unwrap();
        let fu = esm_field(&u, &id).unwrap();
        let fv = esm_field(&v, &id).unwrap();
        let route = pair_masses(&fu, &fv).unwrap().union - field_mass(&fu);
        assert!((direct - route).abs() < 1e-12);
        // J_V((1,1),1) = 2 log 2 exceeds J_U = 0 there
        assert!((direct - 0.25 * 2.0 * LN2).abs() < 1e-12);
        assert!(union_excess(&v, &u, &id).is_err());
    }

    #[test]
    fn equivariance_examples() {
        let u = CubeSubset::from_points(3, [1, 2, 7]).unwrap();
        let ord = LinearOrder::from_sequence(vec![2, 0, 1]).unwrap();
        assert_eq!(check_equivariance(&u, &ord, &[0, 1, 2]).unwrap(), 0.0);
        // {(1,0,0),(0,1,0),(1,1,1)} is symmetric under swapping the first two coordinates
        assert_eq!(u.permute(&[1, 0, 2]).unwrap(), u);
        assert!(check_equivariance(&u, &ord, &[1, 0, 2]).unwrap() <= 1e-15);
    }

    #[test]
    fn order_sampling() {
        assert_eq!(sample_uniform_order(1, 9).unwrap(), LinearOrder::identity(1).unwrap());
        assert_eq!(sample_uniform_order(5, 42).unwrap(), sample_uniform_order(5, 42).unwrap());
        // the fixed seed pins the permutation
        assert_eq!(sample_uniform_order(5, 42).unwrap().to_string(), FROZEN_ORDER_42);
    }

    const FROZEN_ORDER_42: &str = "2:1:0:4:3";

    #[test]
    fn order_sampling_is_uniform() {
        let draws = 100_000u64;
        let mut counts = std::collections::HashMap::new();
        for s in 0..draws {
            *counts.entry(sample_uniform_order(3, s).unwrap().to_string()).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 6);
        let p = 1.0 / 6.0;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in counts.values() {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn mass_identity_all_orders_n3() {
        for mask in 0..256u64 {
            let u = CubeSubset::from_mask(3, mask).unwrap();
            for ord in LinearOrder::all(3).unwrap() {
                let f = esm_field(&u, &ord).unwrap();
                assert!((field_mass(&f) - u.entropy()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn slice_counts_match_direct_scan_and_alternate_formula() {
        for mask in 0..(1u64 << 16) {
            let u = CubeSubset::from_mask(4, mask).unwrap();
            let ord = LinearOrder::from_sequence(vec![2, 0, 3, 1]).unwrap();
            let sc = SliceCounts::new(&u, &ord).unwrap();
            for w in (0..16u32).step_by(5) {
                let t = align(w, ord.sequence()) as usize;
                for i in 0..4 {
                    let k = ord.rank(i);
                    let bulk = sc.densities(k, t & ((1 << k) - 1));
                    let direct = conditional_densities(&u, &ord, &bw(4, w), i).unwrap();
                    assert_eq!(bulk, direct);
                    assert!((delta_from(&bulk) - delta_alternate(&bulk)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sweeps_report_clean_identities() {
        let r = mass_sweep_exhaustive(3).unwrap();
        assert_eq!(r.mass.checked, 256 * 6);
        assert_eq!(r.order_spread.checked, 256);
        assert!(r.worst() < 1e-12, "{r:?}");
        let r = mass_sweep_random(8, 40, 3, 11).unwrap();
        assert_eq!(r.mass.checked, 120);
        assert!(r.worst() < 1e-12, "{r:?}");
        assert_eq!(disjoint_sweep(6, 50, 2).unwrap().max, 0.0);
        assert!(equivariance_sweep(6, 50, 3).unwrap().max < 1e-12);
        assert_eq!(mass_sweep_random(5, 10, 2, 4).unwrap(), mass_sweep_random(5, 10, 2, 4).unwrap());
        assert!(mass_sweep_exhaustive(5).is_err());
    }

    #[test]
    fn stability_under_single_flips() {
        use rand::Rng;
        let n = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ord = LinearOrder::identity(n).unwrap();
        let base = CubeSubset::random_of_size(n, 256, &mut rng).unwrap();
        let f0 = esm_field(&base, &ord).unwrap();
        let mut prev = f64::INFINITY;
        for flips in [64usize, 16, 4, 1] {
            let mut mean = 0.0;
            for _ in 0..20 {
                let mut v = base.clone();
                for _ in 0..flips {
                    // move a point out and another in, keeping μ fixed
                    let pts: Vec<u32> = v.iter().collect();
                    let out = pts[rng.random_range(0..pts.len())];
                    let mut inn = rng.random_range(0..1u32 << n);
                    while v.contains(inn) {
                        inn = rng.random_range(0..1u32 << n);
                    }
                    v.remove(out);
                    v.insert(inn);
                }
                let f1 = esm_field(&v, &ord).unwrap();
                mean += pair_masses(&f0, &f1).unwrap().symdiff / 20.0;
            }
            assert!(mean < prev, "symdiff did not shrink: {mean} vs {prev}");
            prev = mean;
        }
    }

    proptest! {
        #[test]
        fn telescoping_and_mass(seed in any::<u64>(), n in 2usize..=8, frac in 0.0f64..1.0) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = CubeSubset::random_bernoulli(n, frac, &mut rng).unwrap();
            let ord = sample_uniform_order(n, rng.random()).unwrap();
            let sc = SliceCounts::new(&u, &ord).unwrap();
            let mut tele = 0.0;
            for k in 0..n {
                for x in 0..(1usize << k) {
                    let d = sc.densities(k, x);
                    let dl = delta_from(&d);
                    prop_assert!((0.0..=LN2 + 1e-12).contains(&dl));
                    prop_assert!((dl - delta_alternate(&d)).abs() < 1e-9);
                    tele += dl / (1u64 << k) as f64;
                }
            }
            prop_assert!((tele - u.entropy()).abs() < 1e-9);
            let f = esm_field(&u, &ord).unwrap();
            prop_assert!((field_mass(&f) - u.entropy()).abs() < 1e-9);
            let g = esm_field(&u, &LinearOrder::identity(n).unwrap()).unwrap();
            prop_assert!((field_mass(&g) - field_mass(&f)).abs() < 1e-9);
            for w in 0..(1u32 << n) {
                if !u.contains(w) {
                    for i in 0..n { prop_assert_eq!(f.height(w, i), 0.0); }
                }
            }
        }

        #[test]
        fn disjoint_supports(seed in any::<u64>(), n in 2usize..=8) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = CubeSubset::random_bernoulli(n, 0.3, &mut rng).unwrap();
            let v = CubeSubset::random_bernoulli(n, 0.3, &mut rng).unwrap().difference(&u).unwrap();
            let ord = sample_uniform_order(n, rng.random()).unwrap();
            let pm = pair_masses(&esm_field(&u, &ord).unwrap(), &esm_field(&v, &ord).unwrap()).unwrap();
            prop_assert_eq!(pm.intersection, 0.0);
        }

        #[test]
        fn equivariance_random(seed in any::<u64>(), n in 1usize..=6) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = CubeSubset::random_bernoulli(n, rng.random(), &mut rng).unwrap();
            let ord = sample_uniform_order(n, rng.random()).unwrap();
            let sigma = sample_uniform_order(n, rng.random()).unwrap().sequence().to_vec();
            prop_assert!(check_equivariance(&u, &ord, &sigma).unwrap() <= 1e-9);
        }

        #[test]
        fn excess_two_routes(seed in any::<u64>(), n in 2usize..=8) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = CubeSubset::random_bernoulli(n, rng.random(), &mut rng).unwrap();
            let v = u.thin(0.5, &mut rng);
            let ord = sample_uniform_order(n, rng.random()).unwrap();
            let fu = esm_field(&u, &ord).unwrap();
            let fv = esm_field(&v, &ord).unwrap();
            let route = pair_masses(&fu, &fv).unwrap().union - field_mass(&fu);
            prop_assert!((union_excess(&u, &v, &ord).unwrap() - route).abs() < 1e-9);
        }
    }
}
