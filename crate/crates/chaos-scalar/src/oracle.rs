//! Independent closed-form route to the chaos coefficients.
//!
//! Unrolling the triangular coefficient system by Duhamel's principle gives
//! every coefficient as a sum of iterated operator integrals:
//!
//! ```text
//! θ_α(t) = √(α!) · Σ_{(c₁..c_n)} ∫_{0<s₁<…<s_n<t}
//!              T_{t−s_n} M_{k(c_n)} ⋯ M_{k(c₁)} T_{s₁} θ₀ · Π_j m_{r(c_j)}(s_j) ds,
//! ```
//!
//! the sum running over the distinct orderings `(c₁..c_n)` of the multiset of
//! cells of `α` and `T_s` the diagonal flow `e^{sA}`. This module evaluates
//! those integrals directly with nested Gauss–Legendre quadrature over the
//! simplex — no time stepping, no Runge–Kutta, exact diagonal flows via
//! per-coefficient exponentials — which makes it a genuinely independent
//! oracle for the propagator at small levels. Cost grows like
//! `(n_modes · quad)^level`, so it is a verification tool, not a solver.

use std::collections::HashMap;

use crate::chaos::{enumerate_multi_indices, ChaosLayout, MultiIndex, TimeBasis};
use crate::field::SpectralField;
use crate::quadrature::gauss_legendre;
use crate::velocity::VelocityBasis;
use crate::{Error, Result};

/// Problem data shared by oracle evaluations.
#[derive(Clone, Copy)]
pub struct OracleSetup<'a> {
    pub basis: &'a VelocityBasis,
    pub theta0: &'a SpectralField,
    pub nu: f64,
    /// Horizon of the chaos time basis (not the evaluation time).
    pub horizon: f64,
    pub n_time: usize,
    /// Same spatial Galerkin box as the propagator run being checked.
    pub growth_cap: i16,
}

/// Gauss–Legendre order giving comfortably more accuracy than the
/// comparison tolerances at each level.
pub fn recommended_quad_order(level: u32) -> usize {
    match level {
        0 | 1 => 24,
        2 => 12,
        _ => 8,
    }
}

/// Evaluates every coefficient of the given chaos level at time `t` by
/// nested simplex quadrature. Returns `(α, θ_α(t))` pairs for all `|α| =
/// level`, in graded-lexicographic order of `α`.
pub fn duhamel_coefficients(
    setup: &OracleSetup,
    level: u32,
    t: f64,
    quad_order: usize,
) -> Result<Vec<(MultiIndex, SpectralField)>> {
    if level >= 4 {
        return Err(Error::InvalidParameter(format!(
            "nested-simplex oracle at level {level} is impractical: it needs ~({modes}·{quad})^{level} advection applications (≈10^{approx}); use the propagator for higher levels and check it at levels ≤ 3",
            modes = setup.basis.n_modes(),
            quad = quad_order,
            approx = (level as f64 * ((setup.basis.n_modes() * quad_order) as f64).log10()).round()
        )));
    }
    if !(t >= 0.0 && t <= setup.horizon) {
        return Err(Error::InvalidParameter(format!(
            "evaluation time {t} outside [0, {}]",
            setup.horizon
        )));
    }
    if i64::from(setup.theta0.support_radius()) > i64::from(setup.growth_cap) {
        return Err(Error::GridOverflow {
            needed: i64::from(setup.theta0.support_radius()),
            cap: i64::from(setup.growth_cap),
        });
    }
    let kappa = 0.5 * (setup.nu + setup.basis.c0);
    if level == 0 {
        let zero = MultiIndex::zero(setup.n_time * setup.basis.n_modes());
        return Ok(vec![(zero, setup.theta0.heat(kappa * t))]);
    }
    let n = level as usize;
    let layout = ChaosLayout { n_time: setup.n_time, n_modes: setup.basis.n_modes() };
    let indices: Vec<MultiIndex> = enumerate_multi_indices(layout, level)
        .into_iter()
        .filter(|a| a.order() == level)
        .collect();
    let position: HashMap<MultiIndex, usize> =
        indices.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
    let dim = setup.theta0.dim();
    let mut acc: Vec<SpectralField> = vec![SpectralField::zero(dim); indices.len()];

    let (gl_x, gl_w) = gauss_legendre(quad_order);
    let time_basis = TimeBasis::new(setup.horizon);
    let cap = Some(setup.growth_cap);

    // Enumerate simplex node tuples 0 < s₁ < … < s_n < t, outermost first.
    let mut s = vec![0.0f64; n];
    let mut tuples: Vec<(Vec<f64>, f64)> = Vec::new();
    fn pick(
        j: usize,
        upper: f64,
        weight: f64,
        s: &mut Vec<f64>,
        gl_x: &[f64],
        gl_w: &[f64],
        tuples: &mut Vec<(Vec<f64>, f64)>,
    ) {
        let half = 0.5 * upper;
        for (x, w) in gl_x.iter().zip(gl_w) {
            let sj = half * (x + 1.0);
            s[j] = sj;
            let wj = weight * w * half;
            if j == 0 {
                tuples.push((s.clone(), wj));
            } else {
                pick(j - 1, sj, wj, s, gl_x, gl_w, tuples);
            }
        }
    }
    pick(n - 1, t, 1.0, &mut s, &gl_x, &gl_w, &mut tuples);

    let n_time = setup.n_time;
    for (s, w) in &tuples {
        // Time-basis values at each simplex position.
        let m_vals: Vec<Vec<f64>> =
            (0..n).map(|j| (0..n_time).map(|r| time_basis.m(r, s[j])).collect()).collect();
        // Depth-first over mode sequences, sharing operator prefixes.
        let root = setup.theta0.heat(kappa * s[0]);
        let mut k_seq = vec![0usize; n];
        dfs_modes(
            0,
            &root,
            s,
            t,
            kappa,
            cap,
            setup.basis,
            &mut k_seq,
            &mut |k_seq: &[usize], final_field: &SpectralField| {
                // Scatter into every row assignment of this mode sequence.
                let mut r_seq = vec![0usize; n];
                loop {
                    let mut c = *w;
                    for (j, &r) in r_seq.iter().enumerate() {
                        c *= m_vals[j][r];
                    }
                    let mut alpha = MultiIndex::zero(layout.n_cells());
                    for (&r, &k) in r_seq.iter().zip(k_seq.iter()) {
                        alpha = alpha.raised(layout.cell(r, k));
                    }
                    let slot = position[&alpha];
                    let updated =
                        SpectralField::linear_combination(&[(1.0, &acc[slot]), (c, final_field)]);
                    acc[slot] = updated;
                    // Odometer over row sequences.
                    let mut pos = 0;
                    loop {
                        if pos == n {
                            return;
                        }
                        r_seq[pos] += 1;
                        if r_seq[pos] < n_time {
                            break;
                        }
                        r_seq[pos] = 0;
                        pos += 1;
                    }
                }
            },
        );
    }

    for (alpha, field) in indices.iter().zip(acc.iter_mut()) {
        field.scale_assign(alpha.factorial().sqrt());
    }
    Ok(indices.into_iter().zip(acc).collect())
}

/// Walks mode sequences depth-first, carrying the field
/// `T_{s_j − s_{j−1}} M_{k_{j−1}} ⋯ T_{s₁} θ₀` heated up to position `j`.
#[allow(clippy::too_many_arguments)]
fn dfs_modes(
    j: usize,
    carried: &SpectralField,
    s: &[f64],
    t: f64,
    kappa: f64,
    cap: Option<i16>,
    basis: &VelocityBasis,
    k_seq: &mut Vec<usize>,
    leaf: &mut dyn FnMut(&[usize], &SpectralField),
) {
    let n = s.len();
    for k in 0..basis.n_modes() {
        k_seq[j] = k;
        let advected = basis.modes[k].advect(carried, cap);
        if j + 1 == n {
            let final_field = advected.heat(kappa * (t - s[j]));
            leaf(k_seq, &final_field);
        } else {
            let next = advected.heat(kappa * (s[j + 1] - s[j]));
            dfs_modes(j + 1, &next, s, t, kappa, cap, basis, k_seq, leaf);
        }
    }
}

/// `Σ_{|α| = level} ‖θ_α(t)‖²` by the oracle route.
pub fn duhamel_level_norm_sq(
    setup: &OracleSetup,
    level: u32,
    t: f64,
    quad_order: usize,
) -> Result<f64> {
    Ok(duhamel_coefficients(setup, level, t, quad_order)?
        .iter()
        .map(|(_, f)| f.norm_sq())
        .sum())
}
