//! Sparse spectral representation of periodic scalar fields.
//!
//! A field `f` on the torus `[0, 2π)^d` is stored as its Fourier series
//! `f(x) = Σ_z f̂(z) e^{i z·x}` over integer wave vectors `z`, as a vector of
//! `(wave vector, coefficient)` pairs kept sorted by wave vector. Real-valued
//! fields satisfy `f̂(−z) = conj(f̂(z))`; that symmetry is a checkable
//! invariant ([`SpectralField::reality_defect`]), not an encoded one, so all
//! linear operations stay convention-free.
//!
//! All inner products and norms carry the torus volume factor `(2π)^d`:
//! `(f, g) = ∫ f ḡ dx = (2π)^d Σ_z f̂(z) conj(ĝ(z))`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{torus_volume, Error, Result, MAX_DIM};

/// Integer wave vector on the torus, padded with zeros beyond the active
/// dimension. Ordering is lexicographic on the components, which makes
/// sorted-vector merges deterministic and shift-by-constant order-preserving.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct WaveVector([i16; MAX_DIM]);

impl WaveVector {
    /// Builds a wave vector from up to [`MAX_DIM`] components.
    pub fn new(comps: &[i16]) -> Self {
        assert!(
            comps.len() <= MAX_DIM,
            "wave vector has {} components, maximum is {MAX_DIM}",
            comps.len()
        );
        let mut c = [0i16; MAX_DIM];
        c[..comps.len()].copy_from_slice(comps);
        WaveVector(c)
    }

    pub fn zero() -> Self {
        WaveVector([0; MAX_DIM])
    }

    pub fn comp(&self, axis: usize) -> i16 {
        self.0[axis]
    }

    pub fn comps(&self) -> &[i16; MAX_DIM] {
        &self.0
    }

    /// Squared Euclidean length `|z|²` (exact integer).
    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&c| c as i64 * c as i64).sum()
    }

    /// Max-norm `|z|_∞`.
    pub fn sup_norm(&self) -> i16 {
        self.0.iter().map(|c| c.abs()).max().unwrap()
    }

    /// Dot product `z·x` with a real point.
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&c, &xi)| c as f64 * xi).sum()
    }

    /// Dot product with a real vector given as fixed-size components.
    pub fn dot4(&self, v: &[f64; MAX_DIM]) -> f64 {
        self.0.iter().zip(v).map(|(&c, &vi)| c as f64 * vi).sum()
    }

    pub fn add(&self, other: &WaveVector) -> WaveVector {
        let mut c = [0i16; MAX_DIM];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = self.0[i] + other.0[i];
        }
        WaveVector(c)
    }

    pub fn sub(&self, other: &WaveVector) -> WaveVector {
        let mut c = [0i16; MAX_DIM];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = self.0[i] - other.0[i];
        }
        WaveVector(c)
    }

    pub fn neg(&self) -> WaveVector {
        let mut c = [0i16; MAX_DIM];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = -self.0[i];
        }
        WaveVector(c)
    }

    /// True if the first nonzero component is positive (the canonical half of
    /// a `±z` pair; the zero vector is not canonical).
    pub fn is_canonical(&self) -> bool {
        for &c in &self.0 {
            if c != 0 {
                return c > 0;
            }
        }
        false
    }
}

/// Sparse scalar field in spectral form. Entries are sorted by wave vector
/// and unique; exact-zero coefficients are dropped by constructors and merges.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    dim: u8,
    pub(crate) entries: Vec<(WaveVector, Complex64)>,
}

impl SpectralField {
    pub fn zero(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} outside 1..={MAX_DIM}");
        SpectralField { dim: dim as u8, entries: Vec::new() }
    }

    /// Builds a field from arbitrary `(wave vector, coefficient)` pairs:
    /// sorts, sums duplicates (stably, so repeated keys accumulate in input
    /// order), and drops exact zeros.
    pub fn from_entries(dim: usize, mut raw: Vec<(WaveVector, Complex64)>) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} outside 1..={MAX_DIM}");
        for (wv, _) in &raw {
            for axis in dim..MAX_DIM {
                assert!(
                    wv.comp(axis) == 0,
                    "wave vector {wv:?} has a nonzero component beyond dimension {dim}"
                );
            }
        }
        raw.sort_by(|a, b| a.0.cmp(&b.0));
        let mut entries: Vec<(WaveVector, Complex64)> = Vec::with_capacity(raw.len());
        for (wv, c) in raw {
            match entries.last_mut() {
                Some((last, acc)) if *last == wv => *acc += c,
                _ => entries.push((wv, c)),
            }
        }
        entries.retain(|(_, c)| c.re != 0.0 || c.im != 0.0);
        SpectralField { dim: dim as u8, entries }
    }

    /// Internal constructor for entries already sorted, unique, zero-free.
    pub(crate) fn from_sorted(dim: u8, entries: Vec<(WaveVector, Complex64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0), "entries not sorted/unique");
        SpectralField { dim, entries }
    }

    /// The real field `amp · cos(z·x)`.
    pub fn real_cosine(dim: usize, z: WaveVector, amp: f64) -> Self {
        let half = Complex64::new(0.5 * amp, 0.0);
        Self::from_entries(dim, vec![(z, half), (z.neg(), half)])
    }

    /// The real field `amp · sin(z·x)`.
    pub fn real_sine(dim: usize, z: WaveVector, amp: f64) -> Self {
        let half = Complex64::new(0.0, -0.5 * amp);
        Self::from_entries(dim, vec![(z, half), (z.neg(), half.conj())])
    }

    /// Random real field with i.i.d. standard-normal mode amplitudes,
    /// supported on the box `|z|_∞ ≤ radius`. Deterministic in the RNG:
    /// modes are visited in lexicographic order over the canonical half.
    pub fn random_band<R: Rng>(dim: usize, radius: i16, rng: &mut R) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} outside 1..={MAX_DIM}");
        let mut entries = Vec::new();
        let normal = StandardNormal;
        let mean: f64 = normal.sample(rng);
        if mean != 0.0 {
            entries.push((WaveVector::zero(), Complex64::new(mean, 0.0)));
        }
        for z in box_lattice(dim, radius) {
            if !z.is_canonical() {
                continue;
            }
            let re: f64 = normal.sample(rng);
            let im: f64 = normal.sample(rng);
            let c = Complex64::new(0.5 * re, 0.5 * im);
            entries.push((z, c));
            entries.push((z.neg(), c.conj()));
        }
        Self::from_entries(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// Number of stored (nonzero) coefficients.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(WaveVector, Complex64)] {
        &self.entries
    }

    /// Coefficient at `z` (zero if absent).
    pub fn coeff(&self, z: &WaveVector) -> Complex64 {
        match self.entries.binary_search_by(|(wv, _)| wv.cmp(z)) {
            Ok(idx) => self.entries[idx].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Mean value of the field, i.e. the coefficient at `z = 0`.
    pub fn mean(&self) -> Complex64 {
        self.coeff(&WaveVector::zero())
    }

    /// Largest `|z|_∞` in the support (0 for the zero field).
    pub fn support_radius(&self) -> i16 {
        self.entries.iter().map(|(wv, _)| wv.sup_norm()).max().unwrap_or(0)
    }

    /// `L²` inner product `(f, g) = ∫ f ḡ dx` over the torus.
    pub fn inner_product(&self, other: &SpectralField) -> Complex64 {
        assert_eq!(self.dim, other.dim, "inner product across different dimensions");
        let mut acc = Complex64::new(0.0, 0.0);
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() && j < other.entries.len() {
            match self.entries[i].0.cmp(&other.entries[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.entries[i].1 * other.entries[j].1.conj();
                    i += 1;
                    j += 1;
                }
            }
        }
        acc * torus_volume(self.dim as usize)
    }

    /// Real part of the inner product (exact for real fields).
    pub fn inner_product_re(&self, other: &SpectralField) -> f64 {
        self.inner_product(other).re
    }

    /// `‖f‖²` in `L²` of the torus.
    pub fn norm_sq(&self) -> f64 {
        let s: f64 = self.entries.iter().map(|(_, c)| c.norm_sqr()).sum();
        s * torus_volume(self.dim as usize)
    }

    /// `‖∇f‖² = (2π)^d Σ_z |z|² |f̂(z)|²`.
    pub fn grad_norm_sq(&self) -> f64 {
        let s: f64 = self
            .entries
            .iter()
            .map(|(wv, c)| wv.norm_sq() as f64 * c.norm_sqr())
            .sum();
        s * torus_volume(self.dim as usize)
    }

    /// Partial derivative `∂f/∂x_axis` (coefficients multiplied by `i z_axis`).
    pub fn derivative(&self, axis: usize) -> SpectralField {
        assert!(axis < self.dim as usize, "axis {axis} outside dimension {}", self.dim);
        let entries = self
            .entries
            .iter()
            .filter(|(wv, _)| wv.comp(axis) != 0)
            .map(|(wv, c)| (*wv, Complex64::new(0.0, wv.comp(axis) as f64) * c))
            .collect();
        SpectralField { dim: self.dim, entries }
    }

    /// Scales every coefficient in place.
    pub fn scale_assign(&mut self, c: f64) {
        if c == 0.0 {
            self.entries.clear();
            return;
        }
        for (_, v) in &mut self.entries {
            *v *= c;
        }
    }

    /// Maps each coefficient by a factor depending only on `|z|²`. Used for
    /// diagonal semigroups like the heat flow; the factor table is indexed by
    /// the integer `|z|²` and must cover the support.
    pub fn scale_by_norm_sq_table(&self, table: &[f64]) -> SpectralField {
        let entries = self
            .entries
            .iter()
            .map(|(wv, c)| {
                let q = wv.norm_sq() as usize;
                assert!(q < table.len(), "factor table too short: need index {q}");
                (*wv, c * table[q])
            })
            .collect();
        SpectralField { dim: self.dim, entries }
    }

    /// Heat flow `e^{κ t Δ} f`: coefficient at `z` scaled by `e^{−κ t |z|²}`.
    pub fn heat(&self, kappa_t: f64) -> SpectralField {
        let entries = self
            .entries
            .iter()
            .map(|(wv, c)| (*wv, c * (-kappa_t * wv.norm_sq() as f64).exp()))
            .collect();
        SpectralField { dim: self.dim, entries }
    }

    /// `Σ_i c_i f_i` by k-way merge over the sorted entry vectors. The merge
    /// visits wave vectors in ascending order and sums term contributions in
    /// the order given, so results are bitwise deterministic.
    pub fn linear_combination(terms: &[(f64, &SpectralField)]) -> SpectralField {
        assert!(!terms.is_empty(), "linear combination of no terms");
        let dim = terms[0].1.dim;
        for (_, f) in terms {
            assert_eq!(f.dim, dim, "linear combination across different dimensions");
        }
        let cap: usize = terms.iter().map(|(_, f)| f.entries.len()).sum();
        let mut out = Vec::with_capacity(cap);
        let mut idx = vec![0usize; terms.len()];
        loop {
            let mut min_key: Option<WaveVector> = None;
            for (t, (_, f)) in terms.iter().enumerate() {
                if idx[t] < f.entries.len() {
                    let key = f.entries[idx[t]].0;
                    if min_key.is_none_or(|m| key < m) {
                        min_key = Some(key);
                    }
                }
            }
            let Some(key) = min_key else { break };
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, (c, f)) in terms.iter().enumerate() {
                if idx[t] < f.entries.len() && f.entries[idx[t]].0 == key {
                    acc += f.entries[idx[t]].1 * *c;
                    idx[t] += 1;
                }
            }
            if acc.re != 0.0 || acc.im != 0.0 {
                out.push((key, acc));
            }
        }
        SpectralField { dim, entries: out }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        Self::linear_combination(&[(1.0, self), (-1.0, other)])
    }

    /// Drops every coefficient outside the box `|z|_∞ ≤ radius` (spectral
    /// Galerkin projection onto the box).
    pub fn project_box(&self, radius: i16) -> SpectralField {
        let entries = self
            .entries
            .iter()
            .filter(|(wv, _)| wv.sup_norm() <= radius)
            .cloned()
            .collect();
        SpectralField { dim: self.dim, entries }
    }

    /// Pointwise evaluation `Σ_z f̂(z) e^{i z·x}` (complex; real fields have
    /// vanishing imaginary part up to rounding).
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        assert_eq!(x.len(), self.dim as usize, "evaluation point has wrong dimension");
        let mut acc = Complex64::new(0.0, 0.0);
        for (wv, c) in &self.entries {
            let phase = wv.dot(x);
            acc += c * Complex64::new(phase.cos(), phase.sin());
        }
        acc
    }

    /// Largest violation of the real-field symmetry `f̂(−z) = conj(f̂(z))`,
    /// measured as `max_z |f̂(z) − conj(f̂(−z))|`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (wv, c) in &self.entries {
            let mirrored = self.coeff(&wv.neg()).conj();
            worst = worst.max((c - mirrored).norm());
        }
        worst
    }

    /// Errors if any coefficient is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        for (wv, c) in &self.entries {
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("{context}: coefficient at {wv:?} is {c}"),
                });
            }
        }
        Ok(())
    }
}

/// All wave vectors in the box `|z|_∞ ≤ radius` of the given dimension, in
/// lexicographic order.
pub fn box_lattice(dim: usize, radius: i16) -> Vec<WaveVector> {
    assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} outside 1..={MAX_DIM}");
    let mut out = Vec::new();
    let mut comps = [0i16; MAX_DIM];
    fill_axis(dim, radius, 0, &mut comps, &mut out);
    out.sort();
    out
}

fn fill_axis(dim: usize, radius: i16, axis: usize, comps: &mut [i16; MAX_DIM], out: &mut Vec<WaveVector>) {
    if axis == dim {
        out.push(WaveVector(*comps));
        return;
    }
    for c in -radius..=radius {
        comps[axis] = c;
        fill_axis(dim, radius, axis + 1, comps, out);
    }
    comps[axis] = 0;
}
