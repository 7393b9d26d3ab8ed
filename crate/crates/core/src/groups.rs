//! Free groups F_d and free abelian groups Z^d with canonical forms, and
//! breadth-first Cayley balls for the right-multiplication Cayley graph.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fiid::mix64;
use crate::{Error, Result};

/// Largest ball the builder will materialize.
pub const MAX_BALL_VERTICES: usize = 4_000_000;

/// Canonical form of a group element.
///
/// A free-group element is its reduced word; letter `g` (1-based) is the
/// generator a_g and `-g` its inverse. A Z^d element is its integer vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupElement {
    Word(Vec<i8>),
    Vector(Vec<i64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    Free(usize),
    FreeAbelian(usize),
}

/// Extension point for further finitely generated groups.
pub trait Group {
    fn identity(&self) -> GroupElement;
    /// Symmetric generating list: a₁, a₁⁻¹, a₂, a₂⁻¹, ...
    fn generators(&self) -> Vec<GroupElement>;
    fn multiply(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement>;
    fn invert(&self, g: &GroupElement) -> Result<GroupElement>;
    /// Closed-form count of elements at word length `r`, when known.
    fn sphere_size(&self, r: usize) -> Option<u128>;
    fn label(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSpec {
    pub kind: GroupKind,
}

impl GroupSpec {
    pub fn free(d: usize) -> Result<Self> {
        if d == 0 || d > 26 {
            return Err(Error::Domain(format!("free group rank must be in 1..=26, got {d}")));
        }
        Ok(Self { kind: GroupKind::Free(d) })
    }

    pub fn free_abelian(d: usize) -> Result<Self> {
        if d == 0 || d > 26 {
            return Err(Error::Domain(format!("free abelian rank must be in 1..=26, got {d}")));
        }
        Ok(Self { kind: GroupKind::FreeAbelian(d) })
    }

    /// Parses `free:<d>` or `zd:<d>`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("group `{s}`: expected free:<d> or zd:<d>"));
        let (kind, d) = s.trim().split_once(':').ok_or_else(bad)?;
        let d: usize = d.parse().map_err(|_| bad())?;
        match kind {
            "free" => Self::free(d),
            "zd" => Self::free_abelian(d),
            _ => Err(bad()),
        }
    }

    pub fn rank(&self) -> usize {
        match self.kind {
            GroupKind::Free(d) | GroupKind::FreeAbelian(d) => d,
        }
    }

    /// Number of generators in the symmetric generating list.
    pub fn degree(&self) -> usize {
        2 * self.rank()
    }

    fn check(&self, g: &GroupElement) -> Result<()> {
        let ok = match (&self.kind, g) {
            (GroupKind::Free(d), GroupElement::Word(w)) => {
                w.iter().all(|&l| l != 0 && (l.unsigned_abs() as usize) <= *d)
                    && w.windows(2).all(|p| p[0] != -p[1])
            }
            (GroupKind::FreeAbelian(d), GroupElement::Vector(v)) => v.len() == *d,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("{g:?} is not a canonical element of {self}")))
        }
    }

    /// Word length with respect to the standard generators.
    pub fn word_length(&self, g: &GroupElement) -> usize {
        match g {
            GroupElement::Word(w) => w.len(),
            GroupElement::Vector(v) => v.iter().map(|x| x.unsigned_abs() as usize).sum(),
        }
    }

    /// The element as a sequence of indices into [`Group::generators`].
    pub fn generator_word(&self, g: &GroupElement) -> Result<Vec<usize>> {
        self.check(g)?;
        Ok(match g {
            GroupElement::Word(w) => w
                .iter()
                .map(|&l| 2 * (l.unsigned_abs() as usize - 1) + usize::from(l < 0))
                .collect(),
            GroupElement::Vector(v) => v
                .iter()
                .enumerate()
                .flat_map(|(i, &x)| {
                    std::iter::repeat_n(2 * i + usize::from(x < 0), x.unsigned_abs() as usize)
                })
                .collect(),
        })
    }

    /// Stable 64-bit key of a canonical form, used to derive vertex labels.
    pub fn key(&self, g: &GroupElement) -> u64 {
        let mut k = mix64(0x005e_ed0f_9e37 ^ self.rank() as u64);
        match g {
            GroupElement::Word(w) => {
                k = mix64(k ^ w.len() as u64);
                for &l in w {
                    k = mix64(k ^ (l as i64 as u64));
                }
            }
            GroupElement::Vector(v) => {
                k = mix64(k ^ 0xabe1);
                for &x in v {
                    k = mix64(k ^ (x as u64));
                }
            }
        }
        k
    }

    /// Parses `e`, a word such as `aB` (uppercase = inverse) or a vector `(1,-2)`.
    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        let s = s.trim();
        let bad = |m: &str| Error::Parse(format!("element `{s}` of {self}: {m}"));
        match self.kind {
            GroupKind::Free(d) => {
                let mut g = self.identity();
                if s == "e" {
                    return Ok(g);
                }
                for c in s.chars() {
                    let (idx, inv) = if c.is_ascii_lowercase() {
                        (c as u8 - b'a', false)
                    } else if c.is_ascii_uppercase() {
                        (c as u8 - b'A', true)
                    } else {
                        return Err(bad("letters must be ascii"));
                    };
                    if idx as usize >= d {
                        return Err(bad("letter beyond the rank"));
                    }
                    let l = (idx + 1) as i8;
                    g = self.multiply(&g, &GroupElement::Word(vec![if inv { -l } else { l }]))?;
                }
                Ok(g)
            }
            GroupKind::FreeAbelian(d) => {
                if s == "e" {
                    return Ok(self.identity());
                }
                let inner = s
                    .strip_prefix('(')
                    .and_then(|x| x.strip_suffix(')'))
                    .ok_or_else(|| bad("expected (x1,...,xd)"))?;
                let v = inner
                    .split(',')
                    .map(|x| x.trim().parse::<i64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("bad integer"))?;
                if v.len() != d {
                    return Err(bad("wrong dimension"));
                }
                Ok(GroupElement::Vector(v))
            }
        }
    }

    pub fn format_element(&self, g: &GroupElement) -> String {
        match g {
            GroupElement::Word(w) if w.is_empty() => "e".into(),
            GroupElement::Word(w) => w
                .iter()
                .map(|&l| {
                    let c = (b'a' + l.unsigned_abs() - 1) as char;
                    if l < 0 {
                        c.to_ascii_uppercase()
                    } else {
                        c
                    }
                })
                .collect(),
            GroupElement::Vector(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                format!("({})", parts.join(","))
            }
        }
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GroupKind::Free(d) => write!(f, "free:{d}"),
            GroupKind::FreeAbelian(d) => write!(f, "zd:{d}"),
        }
    }
}

fn binom(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

impl Group for GroupSpec {
    fn identity(&self) -> GroupElement {
        match self.kind {
            GroupKind::Free(_) => GroupElement::Word(Vec::new()),
            GroupKind::FreeAbelian(d) => GroupElement::Vector(vec![0; d]),
        }
    }

    fn generators(&self) -> Vec<GroupElement> {
        let d = self.rank();
        let mut out = Vec::with_capacity(2 * d);
        for g in 0..d {
            match self.kind {
                GroupKind::Free(_) => {
                    out.push(GroupElement::Word(vec![(g + 1) as i8]));
                    out.push(GroupElement::Word(vec![-((g + 1) as i8)]));
                }
                GroupKind::FreeAbelian(_) => {
                    let mut e = vec![0i64; d];
                    e[g] = 1;
                    out.push(GroupElement::Vector(e.clone()));
                    e[g] = -1;
                    out.push(GroupElement::Vector(e));
                }
            }
        }
        out
    }

    fn multiply(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(match (g, h) {
            (GroupElement::Word(a), GroupElement::Word(b)) => {
                let mut out = a.clone();
                for &l in b {
                    if out.last() == Some(&-l) {
                        out.pop();
                    } else {
                        out.push(l);
                    }
                }
                GroupElement::Word(out)
            }
            (GroupElement::Vector(a), GroupElement::Vector(b)) => {
                GroupElement::Vector(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            _ => unreachable!(),
        })
    }

    fn invert(&self, g: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        Ok(match g {
            GroupElement::Word(w) => GroupElement::Word(w.iter().rev().map(|&l| -l).collect()),
            GroupElement::Vector(v) => GroupElement::Vector(v.iter().map(|x| -x).collect()),
        })
    }

    fn sphere_size(&self, r: usize) -> Option<u128> {
        if r == 0 {
            return Some(1);
        }
        let r = r as u128;
        Some(match self.kind {
            GroupKind::Free(d) => {
                let d = d as u128;
                2 * d * (2 * d - 1).checked_pow(r as u32 - 1)?
            }
            GroupKind::FreeAbelian(d) => {
                let d = d as u128;
                (1..=d.min(r)).map(|k| (1u128 << k) * binom(d, k) * binom(r - 1, k - 1)).sum()
            }
        })
    }

    fn label(&self) -> String {
        self.to_string()
    }
}

/// The ball of radius R around the identity in the right Cayley graph.
///
/// Vertices are in breadth-first order with generators tried in the order of
/// [`Group::generators`], so the identity is vertex 0 and every inner ball is
/// a prefix of the vertex list.
#[derive(Debug, Clone)]
pub struct CayleyBall {
    radius: usize,
    group: String,
    degree: usize,
    vertices: Vec<GroupElement>,
    depth: Vec<u32>,
    parent: Vec<Option<(u32, u8)>>,
    /// `adjacency[v * degree + s]`: index of `v·s`, if inside the ball.
    adjacency: Vec<Option<u32>>,
    index: HashMap<GroupElement, u32>,
}

/// Builds the Cayley ball of radius `r`.
pub fn ball<G: Group + ?Sized>(group: &G, radius: usize) -> Result<CayleyBall> {
    let expected: Option<u128> =
        (0..=radius).try_fold(0u128, |acc, r| group.sphere_size(r).map(|s| acc.saturating_add(s)));
    if let Some(e) = expected {
        if e > MAX_BALL_VERTICES as u128 {
            return Err(Error::Budget(format!("ball of radius {radius} has {e} vertices")));
        }
    }
    let gens = group.generators();
    let degree = gens.len();
    let id = group.identity();
    let mut vertices = vec![id.clone()];
    let mut depth = vec![0u32];
    let mut parent = vec![None];
    let mut index = HashMap::from([(id, 0u32)]);
    let mut head = 0;
    while head < vertices.len() {
        if depth[head] as usize == radius {
            head += 1;
            continue;
        }
        for (s, g) in gens.iter().enumerate() {
            let nb = group.multiply(&vertices[head], g)?;
            if !index.contains_key(&nb) {
                if vertices.len() >= MAX_BALL_VERTICES {
                    return Err(Error::Budget(format!("ball exceeds {MAX_BALL_VERTICES} vertices")));
                }
                index.insert(nb.clone(), vertices.len() as u32);
                vertices.push(nb);
                depth.push(depth[head] + 1);
                parent.push(Some((head as u32, s as u8)));
            }
        }
        head += 1;
    }
    let mut adjacency = vec![None; vertices.len() * degree];
    for (v, g) in vertices.iter().enumerate() {
        for (s, gen) in gens.iter().enumerate() {
            adjacency[v * degree + s] = index.get(&group.multiply(g, gen)?).copied();
        }
    }
    Ok(CayleyBall { radius, group: group.label(), degree, vertices, depth, parent, adjacency, index })
}

impl CayleyBall {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn group_label(&self) -> &str {
        &self.group
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[GroupElement] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &GroupElement {
        &self.vertices[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v] as usize
    }

    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        self.index.get(g).map(|&i| i as usize)
    }

    /// Index of `v·s` for generator index `s`.
    #[inline]
    pub fn neighbor(&self, v: usize, s: usize) -> Option<usize> {
        self.adjacency[v * self.degree + s].map(|i| i as usize)
    }

    /// Number of vertices within distance `r` of the identity.
    pub fn prefix_len(&self, r: usize) -> usize {
        self.depth.partition_point(|&d| d as usize <= r)
    }

    /// Generator indices of a geodesic from the identity to `v`.
    pub fn word_to(&self, v: usize) -> Vec<usize> {
        let mut word = Vec::new();
        let mut cur = v;
        while let Some((p, s)) = self.parent[cur] {
            word.push(s as usize);
            cur = p as usize;
        }
        word.reverse();
        word
    }

    /// Follows generator indices from `v`; `None` if the walk leaves the ball.
    #[inline]
    pub fn walk(&self, v: usize, word: &[usize]) -> Option<usize> {
        word.iter().try_fold(v, |cur, &s| self.neighbor(cur, s))
    }

    /// Vertex counts at each distance 0..=R.
    pub fn sphere_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.radius + 1];
        for &d in &self.depth {
            out[d as usize] += 1;
        }
        out
    }

    /// Adjacency list as CSV rows `vertex,generator,neighbor`.
    pub fn adjacency_csv(&self, spec: &GroupSpec) -> String {
        let mut s = String::from("vertex,generator,neighbor\n");
        let gens = spec.generators();
        for v in 0..self.len() {
            for (g, gen) in gens.iter().enumerate() {
                if let Some(u) = self.neighbor(v, g) {
                    s.push_str(&format!(
                        "{},{},{}\n",
                        spec.format_element(&self.vertices[v]),
                        spec.format_element(gen),
                        spec.format_element(&self.vertices[u])
                    ));
                }
            }
        }
        s
    }
}

/// Generator index of the inverse of generator `s` in the symmetric list.
#[inline]
pub fn inverse_generator(s: usize) -> usize {
    s ^ 1
}
