//! Wiener chaos bookkeeping: the orthonormal time basis, Hermite
//! polynomials, multi-indices, chaos functions, and Brownian paths
//! synthesized from the same Gaussian coordinates.
//!
//! The driving noise is a family of independent Brownian motions `w_k` on
//! `[0, T]`. Expanding each against the cosine time basis `m_r` gives i.i.d.
//! standard Gaussians `ξ_{rk} = ∫₀ᵀ m_r ds dw_k(s)`, and every polynomial
//! functional of the noise expands over the chaos functions `ξ_α` indexed by
//! multi-indices `α` over the (time row, noise mode) cells. A Brownian path
//! is recovered from the same coordinates as `w_k(t) = Σ_r ξ_{rk} M_r(t)`
//! with `M_r` the antiderivative of `m_r` — so a truncated coefficient
//! computation and a pathwise simulation can be driven by literally the same
//! random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex as FftComplex, FftPlanner};

/// Orthonormal cosine basis of `L²(0, T)`.
///
/// Row `0` is the constant `1/√T`; row `r ≥ 1` is `√(2/T) cos(π r t / T)`.
#[derive(Clone, Copy, Debug)]
pub struct TimeBasis {
    pub horizon: f64,
}

impl TimeBasis {
    pub fn new(horizon: f64) -> Self {
        assert!(horizon > 0.0, "time horizon must be positive");
        TimeBasis { horizon }
    }

    /// Basis function `m_r(t)` (row `r` is 0-based).
    pub fn m(&self, row: usize, t: f64) -> f64 {
        let t_cap = self.horizon;
        if row == 0 {
            1.0 / t_cap.sqrt()
        } else {
            (2.0 / t_cap).sqrt() * (std::f64::consts::PI * row as f64 * t / t_cap).cos()
        }
    }

    /// Antiderivative `M_r(t) = ∫₀ᵗ m_r(s) ds`. Note `M_r(T) = 0` for every
    /// `r ≥ 1`, so `w_k(T) = √T · ξ_{0k}` exactly.
    pub fn antiderivative(&self, row: usize, t: f64) -> f64 {
        let t_cap = self.horizon;
        if row == 0 {
            t / t_cap.sqrt()
        } else {
            let freq = std::f64::consts::PI * row as f64 / t_cap;
            (2.0 / t_cap).sqrt() * (freq * t).sin() / freq
        }
    }
}

/// Sign convention for the Hermite family used in chaos functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HermiteConvention {
    /// `H_n(t) = e^{t²/2} dⁿ/dtⁿ e^{−t²/2}`, so `H₀ = 1`, `H₁(t) = −t`,
    /// `H_{n+1} = −t H_n − n H_{n−1}`. The convention in which the chaos
    /// product formula is stated here.
    Generator,
    /// Probabilists' polynomials `He_n(t) = (−1)ⁿ H_n(t)` (`He₁(t) = t`,
    /// positive leading coefficient). Coefficient systems driven by `+M_k`
    /// reconstruct the solution against this family; see
    /// [`xi_alpha`].
    Probabilist,
}

/// Evaluates the Hermite polynomial of degree `n` in the given convention.
pub fn hermite(convention: HermiteConvention, n: usize, t: f64) -> f64 {
    // Run the Generator recurrence and flip the sign of odd degrees for the
    // probabilists' family.
    let mut h0 = 1.0;
    if n == 0 {
        return 1.0;
    }
    let mut h1 = -t;
    for q in 1..n {
        let h2 = -t * h1 - q as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    match convention {
        HermiteConvention::Generator => h1,
        HermiteConvention::Probabilist => {
            if n % 2 == 0 {
                h1
            } else {
                -h1
            }
        }
    }
}

/// Shape of the chaos index space: `n_time` basis rows by `n_modes` noise
/// modes, flattened row-major (`cell = row · n_modes + mode`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChaosLayout {
    pub n_time: usize,
    pub n_modes: usize,
}

impl ChaosLayout {
    pub fn n_cells(&self) -> usize {
        self.n_time * self.n_modes
    }

    pub fn cell(&self, row: usize, mode: usize) -> usize {
        debug_assert!(row < self.n_time && mode < self.n_modes);
        row * self.n_modes + mode
    }

    /// Inverse of [`ChaosLayout::cell`]: `(row, mode)`.
    pub fn split(&self, cell: usize) -> (usize, usize) {
        (cell / self.n_modes, cell % self.n_modes)
    }
}

/// Multi-index `α` over the chaos cells: exponent vector, total order
/// `|α| = Σ α_c`. Ordered graded-lexicographically (order first, then the
/// exponent vector), which gives levels contiguously and deterministically.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exps: Vec<u8>,
}

impl MultiIndex {
    pub fn zero(n_cells: usize) -> Self {
        MultiIndex { exps: vec![0; n_cells] }
    }

    pub fn from_exps(exps: Vec<u8>) -> Self {
        MultiIndex { exps }
    }

    pub fn unit(n_cells: usize, cell: usize) -> Self {
        let mut exps = vec![0; n_cells];
        exps[cell] = 1;
        MultiIndex { exps }
    }

    pub fn exps(&self) -> &[u8] {
        &self.exps
    }

    pub fn exp(&self, cell: usize) -> u8 {
        self.exps[cell]
    }

    /// Total order `|α|`.
    pub fn order(&self) -> u32 {
        self.exps.iter().map(|&e| e as u32).sum()
    }

    /// `α! = Π α_c!` as a float (exact for the small exponents used here).
    pub fn factorial(&self) -> f64 {
        self.exps.iter().map(|&e| factorial_f64(e as usize)).product()
    }

    /// Cells with nonzero exponent.
    pub fn support(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.exps.iter().enumerate().filter(|(_, &e)| e > 0).map(|(c, &e)| (c, e))
    }

    /// `α − e_cell`, or `None` if that exponent is zero.
    pub fn lowered(&self, cell: usize) -> Option<MultiIndex> {
        if self.exps[cell] == 0 {
            return None;
        }
        let mut exps = self.exps.clone();
        exps[cell] -= 1;
        Some(MultiIndex { exps })
    }

    /// `α + e_cell`.
    pub fn raised(&self, cell: usize) -> MultiIndex {
        assert!(self.exps[cell] < u8::MAX, "exponent overflow");
        let mut exps = self.exps.clone();
        exps[cell] += 1;
        MultiIndex { exps }
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        assert_eq!(self.exps.len(), other.exps.len(), "multi-indices from different layouts");
        self.order().cmp(&other.order()).then_with(|| self.exps.cmp(&other.exps))
    }
}

/// Exact factorial as `f64` (valid through 170!).
pub fn factorial_f64(n: usize) -> f64 {
    (1..=n).map(|q| q as f64).product()
}

/// All multi-indices with `|α| ≤ max_order`, graded-lexicographically sorted.
/// The count is `C(n_cells + max_order, max_order)`.
pub fn enumerate_multi_indices(layout: ChaosLayout, max_order: u32) -> Vec<MultiIndex> {
    let n_cells = layout.n_cells();
    let mut out = Vec::new();
    let mut exps = vec![0u8; n_cells];
    fill_cell(&mut out, &mut exps, 0, max_order);
    out.sort();
    out
}

fn fill_cell(out: &mut Vec<MultiIndex>, exps: &mut Vec<u8>, cell: usize, budget: u32) {
    if cell == exps.len() {
        out.push(MultiIndex { exps: exps.clone() });
        return;
    }
    for e in 0..=budget.min(u8::MAX as u32) {
        exps[cell] = e as u8;
        fill_cell(out, exps, cell + 1, budget - e);
    }
    exps[cell] = 0;
}

/// One realization of the Gaussian coordinates `ξ_{rk}`, drawn row-major so
/// a sample with more rows extends (rather than reshuffles) one with fewer.
#[derive(Clone, Debug)]
pub struct GaussianSample {
    n_rows: usize,
    n_modes: usize,
    xi: Vec<f64>,
}

impl GaussianSample {
    /// Draws the `n_rows × n_modes` coordinate matrix for one sample.
    ///
    /// The RNG is keyed by `(master_seed, sample_index)` via independent
    /// ChaCha streams, so samples are reproducible and embarrassingly
    /// parallel. Filling is row-major: the first `n · n_modes` draws are
    /// identical for any two samples that agree on seed and index, which
    /// makes a coefficient-side truncation to `n` rows and a pathwise
    /// simulation using many more rows share their low-frequency randomness.
    pub fn draw(master_seed: u64, sample_index: u64, n_rows: usize, n_modes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(sample_index);
        let normal = StandardNormal;
        let xi = (0..n_rows * n_modes).map(|_| normal.sample(&mut rng)).collect();
        GaussianSample { n_rows, n_modes, xi }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn xi(&self, row: usize, mode: usize) -> f64 {
        self.xi[row * self.n_modes + mode]
    }

    /// Truncated Brownian value `w_k(t) = Σ_r ξ_{rk} M_r(t)` (naive sum).
    pub fn brownian_value(&self, mode: usize, t: f64, basis: &TimeBasis) -> f64 {
        (0..self.n_rows).map(|r| self.xi(r, mode) * basis.antiderivative(r, t)).sum()
    }

    /// Brownian paths at the uniform grid `t_j = j·T/m`, `j = 0..=m`, for
    /// every mode, via a fast sine transform.
    ///
    /// The cosine rows `r ≥ 1` contribute `Σ_r c_r sin(π r j / m)` at grid
    /// node `j` — a type-I DST, evaluated with an FFT of an odd extension of
    /// length `2m`. Requires `n_rows ≤ m`: row `m` would alias to zero on
    /// this grid, so allowing it would silently drop noise.
    pub fn brownian_paths_on_grid(&self, basis: &TimeBasis, m: usize) -> Vec<Vec<f64>> {
        assert!(
            self.n_rows <= m,
            "grid with {m} steps cannot carry {} basis rows faithfully",
            self.n_rows
        );
        let t_cap = basis.horizon;
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(2 * m);
        let mut paths = Vec::with_capacity(self.n_modes);
        for mode in 0..self.n_modes {
            let mut buf = vec![FftComplex::new(0.0, 0.0); 2 * m];
            for row in 1..self.n_rows {
                // coefficient of sin(π row t / T): √(2/T) · T/(π row) · ξ
                let c = (2.0 / t_cap).sqrt() * t_cap / (std::f64::consts::PI * row as f64)
                    * self.xi(row, mode);
                buf[row].re = c;
                buf[2 * m - row].re = -c;
            }
            fft.process(&mut buf);
            let drift = self.xi(0, mode) / t_cap.sqrt();
            let path: Vec<f64> = (0..=m)
                .map(|j| {
                    let t = t_cap * j as f64 / m as f64;
                    let sine_part = if j == m { 0.0 } else { -0.5 * buf[j].im };
                    drift * t + sine_part
                })
                .collect();
            paths.push(path);
        }
        paths
    }
}

/// Chaos function `ξ_α = (1/√(α!)) Π_c H_{α_c}(ξ_c)` in the chosen Hermite
/// convention.
///
/// The two conventions differ by `(−1)^{|α|}`. Coefficients propagated with
/// the `+M_k` lower-triangular system pair with the
/// [`HermiteConvention::Probabilist`] functions when reconstructing the
/// solution: at first order that system produces
/// `θ_{unit(r,k)} = ∫ T_{t−s} m_r(s) M_k T_s θ₀ ds`, which multiplies
/// `+ξ_{rk} = He₁(ξ_{rk})`, not `H₁(ξ_{rk}) = −ξ_{rk}`.
pub fn xi_alpha(
    convention: HermiteConvention,
    alpha: &MultiIndex,
    layout: ChaosLayout,
    sample: &GaussianSample,
) -> f64 {
    assert!(
        layout.n_time <= sample.n_rows() && layout.n_modes == sample.n_modes(),
        "sample too small for chaos layout"
    );
    assert_eq!(alpha.exps().len(), layout.n_cells(), "multi-index does not match layout");
    let mut prod = 1.0;
    for (cell, e) in alpha.support() {
        let (row, mode) = layout.split(cell);
        prod *= hermite(convention, e as usize, sample.xi(row, mode));
    }
    prod / alpha.factorial().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_on;
    use approx::assert_relative_eq;

    #[test]
    fn time_basis_is_orthonormal() {
        let t_cap = 1.7;
        let basis = TimeBasis::new(t_cap);
        let (xs, ws) = gauss_legendre_on(64, 0.0, t_cap);
        for i in 0..6 {
            for j in 0..6 {
                let ip: f64 = xs.iter().zip(&ws).map(|(x, w)| w * basis.m(i, *x) * basis.m(j, *x)).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (ip - expect).abs() < 1e-13,
                    "(m_{i}, m_{j}) = {ip}, expected {expect}"
                );
            }
        }
    }

    #[test]
    fn antiderivative_matches_quadrature_and_endpoint_values() {
        let t_cap = 2.3;
        let basis = TimeBasis::new(t_cap);
        for row in 0..5 {
            for t in [0.0, 0.3, 1.1, t_cap] {
                let (xs, ws) = gauss_legendre_on(48, 0.0, t);
                let integral: f64 = xs.iter().zip(&ws).map(|(x, w)| w * basis.m(row, *x)).sum();
                assert_relative_eq!(
                    basis.antiderivative(row, t),
                    integral,
                    epsilon = 1e-13,
                    max_relative = 1e-12
                );
            }
            if row >= 1 {
                assert!(
                    basis.antiderivative(row, t_cap).abs() < 1e-15,
                    "oscillating rows integrate to zero over the horizon"
                );
            }
        }
        assert_relative_eq!(basis.antiderivative(0, t_cap), t_cap.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn hermite_low_degrees_match_hand_values() {
        use HermiteConvention::*;
        // Generator: H₀ = 1, H₁ = −t, H₂ = t²−1, H₃ = −t³+3t.
        assert_eq!(hermite(Generator, 0, 0.7), 1.0);
        assert_eq!(hermite(Generator, 1, 2.0), -2.0);
        assert_eq!(hermite(Generator, 2, 2.0), 3.0);
        assert_eq!(hermite(Generator, 3, 2.0), -2.0);
        // Probabilists': sign flips on odd degrees only.
        assert_eq!(hermite(Probabilist, 1, 2.0), 2.0);
        assert_eq!(hermite(Probabilist, 2, 2.0), 3.0);
        assert_eq!(hermite(Probabilist, 3, 2.0), 2.0);
        for n in 0..8 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(hermite(Generator, n, 1.3), sign * hermite(Probabilist, n, 1.3));
        }
    }

    /// Gauss–Hermite nodes/weights for the standard normal weight, via the
    /// Golub–Welsch eigendecomposition of the Jacobi matrix of the
    /// probabilists' recurrence (diagonal 0, off-diagonal √q).
    fn gauss_hermite_prob(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
        for q in 1..n {
            let v = (q as f64).sqrt();
            jac[(q - 1, q)] = v;
            jac[(q, q - 1)] = v;
        }
        let eig = nalgebra::SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    #[test]
    fn hermite_orthogonality_under_gaussian_weight() {
        // E[He_m(ξ) He_n(ξ)] = δ_mn n! — checked with Gauss–Hermite
        // quadrature, an entirely separate construction from the recurrence.
        let (xs, ws) = gauss_hermite_prob(24);
        let total: f64 = ws.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        for m in 0..8 {
            for n in 0..8 {
                let ip: f64 = xs
                    .iter()
                    .zip(&ws)
                    .map(|(x, w)| {
                        w * hermite(HermiteConvention::Probabilist, m, *x)
                            * hermite(HermiteConvention::Probabilist, n, *x)
                    })
                    .sum();
                let expect = if m == n { factorial_f64(n) } else { 0.0 };
                assert!(
                    (ip - expect).abs() < 1e-9 * expect.max(1.0),
                    "E[He_{m} He_{n}] = {ip}, expected {expect}"
                );
            }
        }
        // Same inner products hold for the Generator family (signs square away
        // on the diagonal and cancel pairwise off it).
        for m in 0..6 {
            let ip: f64 = xs
                .iter()
                .zip(&ws)
                .map(|(x, w)| w * hermite(HermiteConvention::Generator, m, *x).powi(2))
                .sum();
            assert_relative_eq!(ip, factorial_f64(m), max_relative = 1e-9);
        }
    }

    #[test]
    fn multi_index_enumeration_count_and_order() {
        let layout = ChaosLayout { n_time: 2, n_modes: 2 };
        let all = enumerate_multi_indices(layout, 2);
        // C(4 + 2, 2) = 15.
        assert_eq!(all.len(), 15);
        assert_eq!(all[0], MultiIndex::zero(4), "zero index comes first");
        // Level 1 next; plain lexicographic order on exponent vectors puts
        // the unit on the last cell first.
        for cell in 0..4 {
            assert_eq!(all[1 + cell], MultiIndex::unit(4, 3 - cell));
        }
        // Graded and strictly sorted (so also unique).
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(all.windows(2).all(|w| w[0].order() <= w[1].order()));
        assert_eq!(all.last().unwrap().order(), 2);

        // The count for a production-sized space: 24 cells, order ≤ 3.
        let big = enumerate_multi_indices(ChaosLayout { n_time: 3, n_modes: 8 }, 3);
        assert_eq!(big.len(), 2925, "C(27, 3)");
    }

    #[test]
    fn multi_index_raise_lower_and_factorial() {
        let layout = ChaosLayout { n_time: 2, n_modes: 3 };
        let a = MultiIndex::zero(layout.n_cells()).raised(1).raised(1).raised(4);
        assert_eq!(a.order(), 3);
        assert_eq!(a.factorial(), 2.0);
        assert_eq!(a.lowered(0), None);
        let b = a.lowered(1).unwrap();
        assert_eq!(b.exp(1), 1);
        assert_eq!(b.raised(1), a);
        let (row, mode) = layout.split(4);
        assert_eq!((row, mode), (1, 1));
        assert_eq!(layout.cell(row, mode), 4);
    }

    #[test]
    fn sample_is_reproducible_and_prefix_stable() {
        let a = GaussianSample::draw(99, 7, 3, 5);
        let b = GaussianSample::draw(99, 7, 16, 5);
        for row in 0..3 {
            for mode in 0..5 {
                assert_eq!(a.xi(row, mode), b.xi(row, mode), "longer draw must extend shorter");
            }
        }
        let c = GaussianSample::draw(99, 8, 3, 5);
        assert_ne!(a.xi(0, 0), c.xi(0, 0), "different sample indices give different draws");
        let d = GaussianSample::draw(100, 7, 3, 5);
        assert_ne!(a.xi(0, 0), d.xi(0, 0), "different master seeds give different draws");
    }

    #[test]
    fn fast_brownian_paths_match_naive_sum() {
        let basis = TimeBasis::new(1.3);
        for (n_rows, m) in [(4usize, 8usize), (8, 8), (5, 16)] {
            let sample = GaussianSample::draw(5, 0, n_rows, 3);
            let paths = sample.brownian_paths_on_grid(&basis, m);
            assert_eq!(paths.len(), 3);
            for (mode, path) in paths.iter().enumerate() {
                assert_eq!(path.len(), m + 1);
                assert_eq!(path[0], 0.0, "Brownian paths start at zero");
                for (j, &v) in path.iter().enumerate() {
                    let t = basis.horizon * j as f64 / m as f64;
                    let naive = sample.brownian_value(mode, t, &basis);
                    assert!(
                        (v - naive).abs() < 1e-12,
                        "DST path disagrees with naive sum at node {j}: {v} vs {naive}"
                    );
                }
                // Endpoint: only the constant row survives.
                assert_relative_eq!(
                    path[m],
                    basis.horizon.sqrt() * sample.xi(0, mode),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn xi_alpha_structure_on_simple_indices() {
        let layout = ChaosLayout { n_time: 2, n_modes: 2 };
        let sample = GaussianSample::draw(11, 3, 2, 2);
        let zero = MultiIndex::zero(4);
        assert_eq!(xi_alpha(HermiteConvention::Probabilist, &zero, layout, &sample), 1.0);

        // Unit index: ±ξ depending on convention.
        let unit = MultiIndex::unit(4, layout.cell(0, 1));
        let v = sample.xi(0, 1);
        assert_eq!(xi_alpha(HermiteConvention::Probabilist, &unit, layout, &sample), v);
        assert_eq!(xi_alpha(HermiteConvention::Generator, &unit, layout, &sample), -v);

        // Doubled cell: He₂(ξ)/√2 = (ξ²−1)/√2 in both conventions.
        let double = unit.raised(layout.cell(0, 1));
        let expect = (v * v - 1.0) / 2.0f64.sqrt();
        assert_relative_eq!(
            xi_alpha(HermiteConvention::Probabilist, &double, layout, &sample),
            expect,
            epsilon = 1e-14
        );
        // Mixed cells multiply.
        let mixed = MultiIndex::unit(4, 0).raised(3);
        assert_relative_eq!(
            xi_alpha(HermiteConvention::Probabilist, &mixed, layout, &sample),
            sample.xi(0, 0) * sample.xi(1, 1),
            epsilon = 1e-14
        );
    }

    #[test]
    fn chaos_functions_are_orthonormal_in_sample_mean() {
        // Monte Carlo Gram matrix over a small index family, pinned seed.
        let layout = ChaosLayout { n_time: 2, n_modes: 2 };
        let indices = enumerate_multi_indices(layout, 2);
        let n_samples = 20_000usize;
        let mut gram = vec![vec![0.0f64; indices.len()]; indices.len()];
        for s in 0..n_samples {
            let sample = GaussianSample::draw(4242, s as u64, 2, 2);
            let vals: Vec<f64> = indices
                .iter()
                .map(|a| xi_alpha(HermiteConvention::Probabilist, a, layout, &sample))
                .collect();
            for (i, vi) in vals.iter().enumerate() {
                for (j, vj) in vals.iter().enumerate() {
                    gram[i][j] += vi * vj / n_samples as f64;
                }
            }
        }
        for (i, row) in gram.iter().enumerate() {
            for (j, &g) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                // ~1/√20000 ≈ 0.007 statistical error; allow 4σ-ish slack.
                assert!(
                    (g - expect).abs() < 0.06,
                    "Gram[{i}][{j}] = {g}, expected {expect} (order {} vs {})",
                    indices[i].order(),
                    indices[j].order()
                );
            }
        }
    }
}
