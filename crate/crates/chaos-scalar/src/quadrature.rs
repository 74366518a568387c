//! Gauss–Legendre quadrature and high-order cumulative grid integration.
//!
//! Both tools back the verification layer: Gauss–Legendre nodes drive the
//! nested simplex integrals in [`crate::oracle`], and the cumulative rule
//! integrates energy-ledger series sampled on the propagator's time grid.

/// Gauss–Legendre nodes and weights on `(-1, 1)`, nodes ascending.
///
/// Nodes are the roots of the Legendre polynomial `P_n`, found by Newton
/// iteration from the Chebyshev-based initial guess; weights are
/// `2 / ((1 - x²) P_n'(x)²)`. Accurate to machine precision for the orders
/// used here (`n ≤ 128`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots come in ± pairs; solve for the non-negative half and mirror.
    let half = n.div_ceil(2);
    for i in 0..half {
        // Initial guess: Tricomi/Chebyshev approximation, positive half.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d2) = legendre_with_derivative(n, x);
                dp = d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        // The middle root is exactly zero; the mirror loop wrote it twice.
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_with_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // P_n'(x) = n (x P_n − P_{n−1}) / (x² − 1)
    let d = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre nodes and weights mapped affinely to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let hal = 0.5 * (b - a);
    (
        xs.iter().map(|x| mid + hal * x).collect(),
        ws.iter().map(|w| w * hal).collect(),
    )
}

/// Cumulative integral of a series sampled on a uniform grid, fourth order.
///
/// Input: samples `f(t_j)`, `t_j = j·h`, `j = 0..n`. Output: `I(t_j)` with
/// `I(0) = 0` and `I(t_{j+1}) − I(t_j)` given by the cubic through the four
/// nearest samples (Adams–Moulton-style weights `(−1, 13, 13, −1)/24` on
/// interior intervals, one-sided cubic weights on the first and last).
/// Exact for cubic polynomials; `O(h⁴)` otherwise. Needs at least 4 samples.
pub fn cumulative_integral(h: f64, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 4, "cumulative_integral needs at least 4 samples, got {n}");
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    let mut acc = 0.0;
    for j in 0..n - 1 {
        let inc = if j == 0 {
            (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) * h / 24.0
        } else if j == n - 2 {
            (9.0 * f[n - 1] + 19.0 * f[n - 2] - 5.0 * f[n - 3] + f[n - 4]) * h / 24.0
        } else {
            (-f[j - 1] + 13.0 * f[j] + 13.0 * f[j + 1] - f[j + 2]) * h / 24.0
        };
        acc += inc;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_nodes_are_roots_and_symmetric() {
        for n in [1, 2, 3, 5, 8, 24, 64] {
            let (xs, ws) = gauss_legendre(n);
            for (i, &x) in xs.iter().enumerate() {
                let (p, _) = legendre_with_derivative(n, x);
                assert!(p.abs() < 1e-13, "P_{n}({x}) = {p} not a root");
                assert_relative_eq!(x, -xs[n - 1 - i], epsilon = 1e-14);
                assert_relative_eq!(ws[i], ws[n - 1 - i], epsilon = 1e-14);
            }
            let total: f64 = ws.iter().sum();
            assert_relative_eq!(total, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // Order-n Gauss rules are exact up to degree 2n−1.
        for n in [2usize, 4, 8, 12] {
            let (xs, ws) = gauss_legendre_on(n, 0.0, 1.0);
            for k in 0..(2 * n) {
                let approx_val: f64 = xs
                    .iter()
                    .zip(&ws)
                    .map(|(x, w)| w * x.powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!(
                    (approx_val - exact).abs() < 1e-14,
                    "order {n} failed on x^{k}: {approx_val} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gauss_legendre_64_matches_analytic_integral() {
        // ∫₀^1 e^x dx = e − 1, far below machine epsilon at order 64.
        let (xs, ws) = gauss_legendre_on(64, 0.0, 1.0);
        let got: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.exp()).sum();
        assert_relative_eq!(got, std::f64::consts::E - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn cumulative_integral_exact_on_cubics() {
        let h = 0.1;
        let f: Vec<f64> = (0..=20).map(|j| {
            let t = j as f64 * h;
            2.0 - t + 3.0 * t * t - 0.5 * t * t * t
        }).collect();
        let int = cumulative_integral(h, &f);
        for (j, &val) in int.iter().enumerate() {
            let t = j as f64 * h;
            let exact = 2.0 * t - t * t / 2.0 + t.powi(3) - t.powi(4) / 8.0;
            assert!(
                (val - exact).abs() < 1e-13,
                "cumulative rule not exact on cubic at t={t}: {val} vs {exact}"
            );
        }
    }

    #[test]
    fn cumulative_integral_fourth_order_on_transcendental() {
        // Error on ∫₀^1 e^t dt should drop ~16x per halving of h once the
        // grid is in the asymptotic regime.
        let mut errs = Vec::new();
        for m in [16usize, 32, 64, 128, 256] {
            let h = 1.0 / m as f64;
            let f: Vec<f64> = (0..=m).map(|j| (j as f64 * h).exp()).collect();
            let int = cumulative_integral(h, &f);
            errs.push((int[m] - (std::f64::consts::E - 1.0)).abs());
        }
        let slope = (errs[0] / errs[4]).log2() / 4.0;
        assert!(
            slope > 3.7,
            "expected fourth-order convergence, got slope {slope} ({errs:?})"
        );
        let last_ratio = errs[3] / errs[4];
        assert!(
            last_ratio > 10.0,
            "finest halving should still shrink error ~16x, got {last_ratio}"
        );
    }
}
