//! Points, subsets and orders on the binary cube {0,1}^n with the uniform
//! product measure, plus the scalar entropy function.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest supported coordinate count.
pub const MAX_N: usize = 24;

const DOMAIN_TOL: f64 = 1e-12;

/// Binary entropy in nats, `h(t) = -t log t - (1-t) log(1-t)` with `0 log 0 = 0`.
pub fn binary_entropy(t: f64) -> Result<f64> {
    if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&t) {
        return Err(Error::Domain(format!("binary entropy needs t in [0,1], got {t}")));
    }
    Ok(h(t))
}

/// Unchecked binary entropy; the argument is clamped to [0,1].
#[inline]
pub fn h(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    if t == 0.0 || t == 1.0 {
        return 0.0;
    }
    -t * t.ln() - (1.0 - t) * (-t).ln_1p()
}

/// Shannon entropy (nats) of a finite distribution given by its atoms.
#[inline]
pub fn entropy_of(p: &[f64]) -> f64 {
    p.iter()
        .map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 })
        .sum()
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_N {
        return Err(Error::Domain(format!("coordinate count must be in 1..={MAX_N}, got {n}")));
    }
    Ok(())
}

/// Checks that `p` is a permutation of `0..p.len()`.
pub fn check_permutation(p: &[usize]) -> Result<()> {
    let mut seen = vec![false; p.len()];
    for &x in p {
        if x >= p.len() || seen[x] {
            return Err(Error::Precondition(format!("{p:?} is not a permutation")));
        }
        seen[x] = true;
    }
    Ok(())
}

/// A point of {0,1}^n; bit `i` of `bits` is coordinate `w_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitWord {
    n: usize,
    bits: u32,
}

impl BitWord {
    pub fn new(n: usize, bits: u32) -> Result<Self> {
        check_n(n)?;
        if (bits as u64) >> n != 0 {
            return Err(Error::Domain(format!("bits {bits:#x} do not fit in {n} coordinates")));
        }
        Ok(Self { n, bits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn coord(&self, i: usize) -> bool {
        (self.bits >> i) & 1 == 1
    }
}

/// A subset of {0,1}^n stored as a membership bitmap over all 2^n points.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CubeSubset {
    n: usize,
    words: Vec<u64>,
}

impl fmt::Debug for CubeSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CubeSubset({})", self.to_line())
    }
}

impl CubeSubset {
    pub fn empty(n: usize) -> Result<Self> {
        check_n(n)?;
        let words = (1usize << n).div_ceil(64);
        Ok(Self { n, words: vec![0; words] })
    }

    pub fn full(n: usize) -> Result<Self> {
        let mut s = Self::empty(n)?;
        for w in s.words.iter_mut() {
            *w = u64::MAX;
        }
        s.trim();
        Ok(s)
    }

    pub fn from_points<I: IntoIterator<Item = u32>>(n: usize, points: I) -> Result<Self> {
        let mut s = Self::empty(n)?;
        for p in points {
            if (p as u64) >> n != 0 {
                return Err(Error::Domain(format!("point {p:#x} outside {{0,1}}^{n}")));
            }
            s.insert(p);
        }
        Ok(s)
    }

    pub fn from_fn(n: usize, f: impl Fn(u32) -> bool) -> Result<Self> {
        let mut s = Self::empty(n)?;
        for p in 0..(1u32 << n) {
            if f(p) {
                s.insert(p);
            }
        }
        Ok(s)
    }

    /// Subset of the 2^n ≤ 64 points whose indicator is the bit mask `mask`.
    pub fn from_mask(n: usize, mask: u64) -> Result<Self> {
        let mut s = Self::empty(n)?;
        if n > 6 {
            return Err(Error::Domain("from_mask needs n ≤ 6".into()));
        }
        s.words[0] = mask;
        s.trim();
        Ok(s)
    }

    /// Uniform subset with exactly `size` points.
    pub fn random_of_size<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Result<Self> {
        check_n(n)?;
        if size > 1usize << n {
            return Err(Error::Domain(format!("{size} points do not fit in {{0,1}}^{n}")));
        }
        let idx = rand::seq::index::sample(rng, 1usize << n, size);
        Self::from_points(n, idx.into_iter().map(|p| p as u32))
    }

    /// Every point is kept independently with probability `p`.
    pub fn random_bernoulli<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Self> {
        let mut s = Self::empty(n)?;
        for x in 0..(1u32 << n) {
            if rng.random::<f64>() < p {
                s.insert(x);
            }
        }
        Ok(s)
    }

    /// Keeps each point of `self` independently with probability `p`.
    pub fn thin<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Self {
        let mut s = Self { n: self.n, words: vec![0; self.words.len()] };
        for x in self.iter() {
            if rng.random::<f64>() < p {
                s.insert(x);
            }
        }
        s
    }

    fn trim(&mut self) {
        if self.n < 6 {
            self.words[0] &= (1u64 << (1 << self.n)) - 1;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn contains(&self, w: u32) -> bool {
        let w = w as usize;
        w < (1usize << self.n) && (self.words[w >> 6] >> (w & 63)) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, w: u32) {
        let w = w as usize;
        self.words[w >> 6] |= 1u64 << (w & 63);
    }

    #[inline]
    pub fn remove(&mut self, w: u32) {
        let w = w as usize;
        self.words[w >> 6] &= !(1u64 << (w & 63));
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// μ(U) = |U|·2^{-n}; exact since both factors are dyadic.
    pub fn measure(&self) -> f64 {
        self.len() as f64 / (1u64 << self.n) as f64
    }

    /// H(U) = h(μ(U)).
    pub fn entropy(&self) -> f64 {
        h(self.measure())
    }

    /// Points in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(j, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros();
                w &= w - 1;
                Some((j as u32) * 64 + b)
            })
        })
    }

    fn same_n(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Shape(format!("n={} vs n={}", self.n, other.n)));
        }
        Ok(())
    }

    fn zip(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Result<Self> {
        self.same_n(other)?;
        let words = self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect();
        let mut s = Self { n: self.n, words };
        s.trim();
        Ok(s)
    }

    pub fn complement(&self) -> Self {
        let mut s = Self { n: self.n, words: self.words.iter().map(|w| !w).collect() };
        s.trim();
        s
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a & !b)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.n == other.n && self.words.iter().zip(&other.words).all(|(&a, &b)| a & !b == 0)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.n == other.n && self.words.iter().zip(&other.words).all(|(&a, &b)| a & b == 0)
    }

    /// Image under the coordinate permutation `sigma`: `(σw)_{σ(i)} = w_i`.
    pub fn permute(&self, sigma: &[usize]) -> Result<Self> {
        if sigma.len() != self.n {
            return Err(Error::Shape(format!("permutation of length {} on n={}", sigma.len(), self.n)));
        }
        check_permutation(sigma)?;
        let mut s = Self { n: self.n, words: vec![0; self.words.len()] };
        for w in self.iter() {
            s.insert(permute_point(w, sigma));
        }
        Ok(s)
    }

    /// Serializes as `n=<n>;bits=<hex>`; byte `j` of the bitmap holds points
    /// `8j..8j+8`, bytes in little-endian order.
    pub fn to_line(&self) -> String {
        let nbytes = ((1usize << self.n) / 8).max(1);
        let mut hex = String::with_capacity(2 * nbytes);
        for j in 0..nbytes {
            let byte = (self.words[j / 8] >> (8 * (j % 8))) & 0xff;
            hex.push_str(&format!("{byte:02x}"));
        }
        format!("n={};bits={}", self.n, hex)
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("cube subset `{line}`: {m}"));
        let line = line.trim();
        let (a, b) = line.split_once(';').ok_or_else(|| bad("expected `n=..;bits=..`"))?;
        let n: usize = a
            .strip_prefix("n=")
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| bad("bad n"))?;
        let hex = b.strip_prefix("bits=").ok_or_else(|| bad("missing bits="))?;
        let mut s = Self::empty(n).map_err(|e| bad(&e.to_string()))?;
        let nbytes = ((1usize << n) / 8).max(1);
        if hex.len() != 2 * nbytes || !hex.is_ascii() {
            return Err(bad(&format!("expected {} hex digits", 2 * nbytes)));
        }
        for j in 0..nbytes {
            let byte = u64::from_str_radix(&hex[2 * j..2 * j + 2], 16).map_err(|_| bad("bad hex"))?;
            s.words[j / 8] |= byte << (8 * (j % 8));
        }
        if n < 3 && s.words[0] >> (1 << n) != 0 {
            return Err(bad("bits beyond the cube"));
        }
        Ok(s)
    }
}

/// Applies `(σw)_{σ(i)} = w_i` to a single point.
pub fn permute_point(w: u32, sigma: &[usize]) -> u32 {
    let mut out = 0;
    for (i, &s) in sigma.iter().enumerate() {
        out |= ((w >> i) & 1) << s;
    }
    out
}

pub fn measure(u: &CubeSubset) -> f64 {
    u.measure()
}

pub fn subset_entropy(u: &CubeSubset) -> f64 {
    u.entropy()
}

/// A linear order on the coordinates: `rank[i]` is the position of coordinate
/// `i`, `seq[k]` is the coordinate at position `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinearOrder {
    rank: Vec<usize>,
    seq: Vec<usize>,
}

impl LinearOrder {
    pub fn new(rank: Vec<usize>) -> Result<Self> {
        check_n(rank.len())?;
        check_permutation(&rank)?;
        let mut seq = vec![0; rank.len()];
        for (i, &r) in rank.iter().enumerate() {
            seq[r] = i;
        }
        Ok(Self { rank, seq })
    }

    /// Builds the order that reveals `seq[0]`, then `seq[1]`, ...
    pub fn from_sequence(seq: Vec<usize>) -> Result<Self> {
        check_n(seq.len())?;
        check_permutation(&seq)?;
        let mut rank = vec![0; seq.len()];
        for (k, &i) in seq.iter().enumerate() {
            rank[i] = k;
        }
        Ok(Self { rank, seq })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_sequence((0..n).collect())
    }

    pub fn n(&self) -> usize {
        self.rank.len()
    }

    pub fn rank(&self, i: usize) -> usize {
        self.rank[i]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.rank
    }

    pub fn sequence(&self) -> &[usize] {
        &self.seq
    }

    /// The order `σ≺` with `x σ≺ y` iff `σ⁻¹x ≺ σ⁻¹y`.
    pub fn permuted(&self, sigma: &[usize]) -> Result<Self> {
        if sigma.len() != self.n() {
            return Err(Error::Shape("permutation length differs from n".into()));
        }
        check_permutation(sigma)?;
        Self::from_sequence(self.seq.iter().map(|&i| sigma[i]).collect())
    }

    /// All n! orders in lexicographic order of their sequences.
    pub fn all(n: usize) -> Result<Vec<Self>> {
        check_n(n)?;
        if n > 9 {
            return Err(Error::Budget(format!("{n}! orders")));
        }
        let mut out = Vec::new();
        let mut seq: Vec<usize> = (0..n).collect();
        loop {
            out.push(Self::from_sequence(seq.clone())?);
            // next lexicographic permutation
            let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| seq[i] < seq[i + 1]) else {
                break;
            };
            let j = (i + 1..n).rev().find(|&j| seq[j] > seq[i]).unwrap();
            seq.swap(i, j);
            seq[i + 1..].reverse();
        }
        Ok(out)
    }

    /// Parses a colon-separated revelation sequence such as `2:0:1`.
    pub fn parse(s: &str) -> Result<Self> {
        let seq = s
            .split(':')
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse(format!("order `{s}`")))?;
        Self::from_sequence(seq).map_err(|e| Error::Parse(format!("order `{s}`: {e}")))
    }
}

impl fmt::Display for LinearOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.seq.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join(":"))
    }
}
