//! Truncated lattice `Z^d \ {0}` grouped into shells `|k|² = n`.
//!
//! Radii `√n` are never compared in floating point. Every shell carries its
//! squarefree class `n = m²·p`, and `√a + √b = √c` holds iff the three shells
//! share `p` and `m_a + m_b = m_c`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::Arc;

use crate::{Error, Result};

/// One Fourier sphere.
#[derive(Debug, Clone)]
pub struct Shell {
    pub n: u64,
    pub m: u64,
    pub p: u64,
    /// `√n`, for arithmetic only; never used to decide equalities.
    pub lambda: f64,
    /// Indices into [`Lattice::point`].
    pub members: Vec<usize>,
}

/// Lattice points with `1 ≤ |k|² ≤ n_max`, sorted by shell and then
/// lexicographically, together with the shell index.
#[derive(Debug)]
pub struct Lattice {
    d: usize,
    n_max: u64,
    coords: Vec<i64>,
    neg: Vec<usize>,
    shell_of: Vec<usize>,
    shells: Vec<Shell>,
    by_key: HashMap<u64, usize>,
}

impl Lattice {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.neg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neg.is_empty()
    }

    pub fn point(&self, i: usize) -> &[i64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    /// Index of `-k` for the point with index `i`.
    #[inline]
    pub fn neg(&self, i: usize) -> usize {
        self.neg[i]
    }

    #[inline]
    pub fn shell_of(&self, i: usize) -> usize {
        self.shell_of[i]
    }

    /// `|k|` of the point with index `i`.
    #[inline]
    pub fn radius(&self, i: usize) -> f64 {
        self.shells[self.shell_of[i]].lambda
    }

    pub fn shells(&self) -> &[Shell] {
        &self.shells
    }

    pub fn shell(&self, s: usize) -> &Shell {
        &self.shells[s]
    }

    pub fn num_shells(&self) -> usize {
        self.shells.len()
    }

    /// Position of shell key `n` in [`Lattice::shells`].
    pub fn shell_index(&self, n: u64) -> Option<usize> {
        self.by_key.get(&n).copied()
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.d {
            return None;
        }
        let n: i64 = k.iter().map(|x| x * x).sum();
        let s = self.shell_index(n as u64)?;
        self.shells[s]
            .members
            .iter()
            .copied()
            .find(|&i| self.point(i) == k)
    }

    pub fn lambda_max(&self) -> f64 {
        self.shells.last().map_or(0.0, |s| s.lambda)
    }

    /// Exact test of `λ_a + λ_b = λ_c` on shell positions.
    pub fn radius_sum_eq(&self, a: usize, b: usize, c: usize) -> bool {
        let (sa, sb, sc) = (&self.shells[a], &self.shells[b], &self.shells[c]);
        sa.p == sb.p && sb.p == sc.p && sa.m + sb.m == sc.m
    }

    pub fn same_lattice(&self, other: &Lattice) -> bool {
        std::ptr::eq(self, other) || (self.d == other.d && self.n_max == other.n_max)
    }

    /// Shell table as CSV with columns `n,m,p,member_count`.
    pub fn write_shell_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "m", "p", "member_count"])?;
        for s in &self.shells {
            w.write_record(&[
                s.n.to_string(),
                s.m.to_string(),
                s.p.to_string(),
                s.members.len().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Enumerate the lattice `{k ∈ Z^d : 1 ≤ |k|² ≤ n_max}`.
pub fn build_lattice(d: usize, n_max: u64) -> Result<Arc<Lattice>> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let r = (n_max as f64).sqrt().floor() as i64;
    let r = if (r + 1) * (r + 1) <= n_max as i64 { r + 1 } else { r };

    let mut groups: BTreeMap<u64, Vec<Vec<i64>>> = BTreeMap::new();
    let mut k = vec![-r; d];
    loop {
        let n: i64 = k.iter().map(|x| x * x).sum();
        if n >= 1 && n as u64 <= n_max {
            groups.entry(n as u64).or_default().push(k.clone());
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == d {
                break;
            }
            if k[pos] < r {
                k[pos] += 1;
                break;
            }
            k[pos] = -r;
            pos += 1;
        }
        if pos == d {
            break;
        }
    }

    let mut coords = Vec::new();
    let mut shell_of = Vec::new();
    let mut shells = Vec::new();
    let mut by_key = HashMap::new();
    let mut lookup: HashMap<Vec<i64>, usize> = HashMap::new();
    for (n, mut pts) in groups {
        pts.sort();
        let (m, p) = squarefree_decompose(n);
        let s = shells.len();
        let mut members = Vec::with_capacity(pts.len());
        for pt in pts {
            let idx = shell_of.len();
            coords.extend_from_slice(&pt);
            shell_of.push(s);
            members.push(idx);
            lookup.insert(pt, idx);
        }
        by_key.insert(n, s);
        shells.push(Shell { n, m, p, lambda: (n as f64).sqrt(), members });
    }
    let count = shell_of.len();
    let mut neg = vec![0; count];
    for (i, slot) in neg.iter_mut().enumerate() {
        let mk: Vec<i64> = coords[i * d..(i + 1) * d].iter().map(|x| -x).collect();
        *slot = lookup[&mk];
    }
    Ok(Arc::new(Lattice { d, n_max, coords, neg, shell_of, shells, by_key }))
}

/// `n = m²·p` with `p` squarefree, by trial division.
pub fn squarefree_decompose(n: u64) -> (u64, u64) {
    assert!(n >= 1, "squarefree_decompose needs n >= 1");
    let mut rest = n;
    let (mut m, mut p) = (1u64, 1u64);
    let mut q = 2u64;
    while q * q <= rest {
        let mut e = 0;
        while rest % q == 0 {
            rest /= q;
            e += 1;
        }
        m *= q.pow(e / 2);
        if e % 2 == 1 {
            p *= q;
        }
        q += 1;
    }
    (m, p * rest)
}

/// A sum triple `√a + √b = √l` with `a ≤ b`, by shell key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct Triple {
    pub a: u64,
    pub b: u64,
    pub l: u64,
}

impl Triple {
    pub fn radii(&self) -> (f64, f64, f64) {
        ((self.a as f64).sqrt(), (self.b as f64).sqrt(), (self.l as f64).sqrt())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleSet {
    pub triples: Vec<Triple>,
}

impl TripleSet {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triple> {
        self.triples.iter()
    }
}

/// All sum triples among the lattice shells, by class arithmetic.
pub fn resonant_triples(lattice: &Lattice) -> TripleSet {
    let keys: Vec<u64> = lattice.shells().iter().map(|s| s.n).collect();
    resonant_triples_for_keys(&keys)
}

/// Sum triples among an arbitrary set of shell keys.
pub fn resonant_triples_for_keys(keys: &[u64]) -> TripleSet {
    let mut classes: BTreeMap<u64, BTreeMap<u64, u64>> = BTreeMap::new();
    for &n in keys {
        let (m, p) = squarefree_decompose(n);
        classes.entry(p).or_default().insert(m, n);
    }
    let mut triples = Vec::new();
    for by_m in classes.values() {
        let ms: Vec<(u64, u64)> = by_m.iter().map(|(&m, &n)| (m, n)).collect();
        for (i, &(ma, na)) in ms.iter().enumerate() {
            for &(mb, nb) in &ms[i..] {
                if let Some(&nl) = by_m.get(&(ma + mb)) {
                    triples.push(Triple { a: na, b: nb, l: nl });
                }
            }
        }
    }
    triples.sort();
    TripleSet { triples }
}

/// Floating-point detector: all `a ≤ b`, `l` with `|√a + √b − √l| < tol`.
/// Kept as an independent cross-check of [`resonant_triples`].
pub fn resonant_triples_float(keys: &[u64], tol: f64) -> TripleSet {
    let mut sorted: Vec<(f64, u64)> = keys.iter().map(|&n| ((n as f64).sqrt(), n)).collect();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut triples = Vec::new();
    for i in 0..sorted.len() {
        for j in i..sorted.len() {
            let s = sorted[i].0 + sorted[j].0;
            let start = sorted.partition_point(|x| x.0 < s - tol);
            for cand in &sorted[start..] {
                if cand.0 > s + tol {
                    break;
                }
                triples.push(Triple { a: sorted[i].1, b: sorted[j].1, l: cand.1 });
            }
        }
    }
    triples.sort();
    TripleSet { triples }
}
