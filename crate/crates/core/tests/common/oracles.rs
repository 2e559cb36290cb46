//! Independent reference computations for tests.
//!
//! Nothing in here calls into the library's special functions: integrals are
//! done by adaptive Simpson quadrature, gamma values at half-integers are exact
//! products, and the Student-t CDF uses the finite trigonometric sums that
//! hold for integer degrees of freedom.

use std::f64::consts::PI;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // rounding noise floor keeps the recursion finite
        let tol = tol.max(1e-12 * (left.abs() + right.abs()));
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    // split up front so narrow features are not missed
    let panels = 32;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            step(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// `ln Γ(k / 2)` for a positive integer `k`, by exact recurrence.
pub fn ln_gamma_half(k: u32) -> f64 {
    assert!(k >= 1);
    if k % 2 == 0 {
        // Γ(m) = (m − 1)!
        (1..k / 2).map(|j| (j as f64).ln()).sum()
    } else {
        // Γ(j + 1/2) = √π · ∏_{i<j} (i + 1/2)
        0.5 * PI.ln() + (0..k / 2).map(|i| (i as f64 + 0.5).ln()).sum::<f64>()
    }
}

/// `P(k/2, x)` by quadrature after the substitution `t = s²`.
pub fn lower_gamma_quadrature(two_a: u32, x: f64) -> f64 {
    let a = two_a as f64 / 2.0;
    let norm = ln_gamma_half(two_a);
    let f = move |s: f64| {
        if s == 0.0 {
            return if two_a == 1 { 2.0 * (-norm).exp() } else { 0.0 };
        }
        (2.0f64.ln() + (2.0 * a - 1.0) * s.ln() - s * s - norm).exp()
    };
    adaptive_simpson(&f, 0.0, x.sqrt(), 1e-14)
}

pub fn chi2_cdf_quadrature(dof: u32, x: f64) -> f64 {
    lower_gamma_quadrature(dof, x / 2.0)
}

/// `I_x(a, b)` as a ratio of two integrals; requires `a, b ≥ 1`.
pub fn inc_beta_quadrature(a: f64, b: f64, x: f64) -> f64 {
    assert!(a >= 1.0 && b >= 1.0);
    let f = move |t: f64| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0);
    adaptive_simpson(&f, 0.0, x, 1e-15) / adaptive_simpson(&f, 0.0, 1.0, 1e-15)
}

/// F CDF by integrating the density after the substitution `x = s²`.
pub fn f_cdf_quadrature(d1: u32, d2: u32, x: f64) -> f64 {
    let (n1, n2) = (d1 as f64, d2 as f64);
    let ln_beta = ln_gamma_half(d1) + ln_gamma_half(d2) - ln_gamma_half(d1 + d2);
    let ln_norm = 0.5 * n1 * n1.ln() + 0.5 * n2 * n2.ln() - ln_beta + 2f64.ln();
    let f = move |s: f64| {
        if s == 0.0 {
            return if d1 == 1 {
                (ln_norm - 0.5 * (n1 + n2) * n2.ln()).exp()
            } else {
                0.0
            };
        }
        (ln_norm + (n1 - 1.0) * s.ln() - 0.5 * (n1 + n2) * (n2 + n1 * s * s).ln()).exp()
    };
    adaptive_simpson(&f, 0.0, x.sqrt(), 1e-14)
}

/// Student-t CDF for integer `nu` from the closed-form trigonometric sums.
pub fn student_t_cdf(t: f64, nu: usize) -> f64 {
    assert!(nu >= 1);
    let theta = (t.abs() / (nu as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    // A = P(|T| ≤ |t|)
    let a = if nu % 2 == 1 {
        let mut acc = 0.0;
        if nu > 1 {
            let mut term = c;
            acc = term;
            let mut k = 1;
            while 2 * k + 1 < nu {
                term *= c * c * (2 * k) as f64 / (2 * k + 1) as f64;
                acc += term;
                k += 1;
            }
        }
        2.0 / PI * (theta + s * acc)
    } else {
        let mut term = 1.0;
        let mut acc = 1.0;
        let mut k = 1;
        while 2 * k < nu {
            term *= c * c * (2 * k - 1) as f64 / (2 * k) as f64;
            acc += term;
            k += 1;
        }
        s * acc
    };
    if t >= 0.0 {
        0.5 + 0.5 * a
    } else {
        0.5 - 0.5 * a
    }
}

/// Standard normal CDF by quadrature of the density.
pub fn normal_cdf_quadrature(z: f64) -> f64 {
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    if z >= 0.0 {
        0.5 + adaptive_simpson(&phi, 0.0, z, 1e-15)
    } else {
        0.5 - adaptive_simpson(&phi, z, 0.0, 1e-15)
    }
}

/// Limiting Kolmogorov tail `2 Σ (−1)^{k−1} exp(−2k²t²)`, summed to 1e-15 terms.
pub fn kolmogorov_series(t: f64) -> f64 {
    let mut sum = 0.0;
    let mut k = 1.0;
    let mut sign = 1.0;
    loop {
        let term = (-2.0 * k * k * t * t).exp();
        sum += sign * term;
        if term < 1e-15 {
            break;
        }
        sign = -sign;
        k += 1.0;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
