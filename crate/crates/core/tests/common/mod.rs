//! Independent reference computations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the solver code paths it is
//! used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Naive evaluation of Σ_k coeffs[k]·o^k (coefficients low to high).
pub fn poly_eval(coeffs: &[f64], o: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut pow = Complex64::new(1.0, 0.0);
    for &c in coeffs {
        acc += pow * c;
        pow *= o;
    }
    acc
}

/// Coefficients (low to high) of τo³ + o² + (ω₀ + (τc² + δ)λ)o + c²λ.
pub fn dispersion_coeffs(tau: f64, c: f64, delta: f64, omega0: f64, lambda: f64) -> Vec<f64> {
    let b = tau * c * c + delta;
    vec![c * c * lambda, omega0 + b * lambda, 1.0, tau]
}

/// Roots from the eigenvalues of the plain (unscaled) companion matrix of
/// the monic polynomial, each followed by two Newton steps.
pub fn companion_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let mut c = coeffs.to_vec();
    while c.last() == Some(&0.0) {
        c.pop();
    }
    let n = c.len() - 1;
    let lead = c[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    let deriv: Vec<f64> = (1..=n).map(|k| k as f64 * c[k]).collect();
    m.complex_eigenvalues()
        .iter()
        .map(|&z| {
            let mut z = z;
            for _ in 0..2 {
                let d = poly_eval(&deriv, z);
                if d.norm() > 0.0 {
                    z -= poly_eval(&c, z) / d;
                }
            }
            z
        })
        .collect()
}

/// Cardano's formula for a·o³ + b·o² + c·o + d with a ≠ 0.
pub fn cardano_roots(a: f64, b: f64, c: f64, d: f64) -> [Complex64; 3] {
    let (b, c, d) = (b / a, c / a, d / a);
    // Depressed cubic t³ + pt + q with o = t − b/3.
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = Complex64::new(q * q / 4.0 + p * p * p / 27.0, 0.0);
    let sq = disc.sqrt();
    let mut u3 = -q / 2.0 + sq;
    if u3.norm() < 1e-300 {
        u3 = -q / 2.0 - sq;
    }
    let u = u3.powf(1.0 / 3.0);
    let omega = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let mut out = [Complex64::new(0.0, 0.0); 3];
    let mut uk = u;
    for slot in &mut out {
        let t = if uk.norm() > 0.0 { uk - p / (3.0 * uk) } else { Complex64::new(0.0, 0.0) };
        *slot = t - b / 3.0;
        uk *= omega;
    }
    out
}

/// Root with Re ≤ 0 closest to the imaginary axis direction (max Im) after
/// mapping each root into the upper half plane.
pub fn physical_root(roots: &[Complex64]) -> Complex64 {
    roots
        .iter()
        .map(|z| if z.im < 0.0 { z.conj() } else { *z })
        .max_by(|a, b| a.im.partial_cmp(&b.im).unwrap())
        .unwrap()
}

/// B_m by direct time-domain quadrature: the m-th coefficient of u(t)v(t)
/// for u = Re Σ u_k e^{ikωt}, sampled at n equispaced points.
pub fn dense_time_coupling(u: &[Complex64], v: &[Complex64], m: usize, period: f64, n: usize) -> Complex64 {
    let w = 2.0 * PI / period;
    let dt = period / n as f64;
    let eval = |h: &[Complex64], t: f64| -> f64 {
        h.iter()
            .enumerate()
            .map(|(k, c)| (c * Complex64::from_polar(1.0, (k + 1) as f64 * w * t)).re)
            .sum()
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let t = i as f64 * dt;
        acc += eval(u, t) * eval(v, t) * Complex64::from_polar(1.0, -(m as f64) * w * t);
    }
    acc * (2.0 / period) * dt
}

/// (2/T)∫₀ᵀ f(t)e^{−ot}dt by composite Simpson with n (even) panels, for
/// f = Re Σ f_k e^{ikωt}.
pub fn laplace_quadrature(f: &[Complex64], o: Complex64, period: f64, n: usize) -> Complex64 {
    let w = 2.0 * PI / period;
    let h = period / n as f64;
    let g = |t: f64| -> Complex64 {
        let ft: f64 = f
            .iter()
            .enumerate()
            .map(|(k, c)| (c * Complex64::from_polar(1.0, (k + 1) as f64 * w * t)).re)
            .sum();
        (-o * t).exp() * ft
    };
    let mut acc = g(0.0) + g(period);
    for i in 1..n {
        let wgt = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += g(i as f64 * h) * wgt;
    }
    acc * (h / 3.0) * (2.0 / period)
}

/// min over λ ∈ [λ₁, λ_max] of λ^α|ϑ + Θλ|² by a geometric grid followed by
/// golden-section refinement inside every bracket around a discrete local
/// minimum. The dip near λ ≈ −ϑ/Θ can be far narrower than the grid step,
/// but the grid values still descend towards it.
pub fn grid_min_denominator(theta_small: Complex64, theta_big: Complex64, alpha: f64, lambda1: f64, lambda_max: f64) -> f64 {
    let j = |lam: f64| lam.powf(alpha) * (theta_small + theta_big * lam).norm_sqr();
    let n = 20000;
    let ratio = (lambda_max / lambda1).powf(1.0 / n as f64);
    let pts: Vec<f64> = (0..=n).map(|i| lambda1 * ratio.powi(i as i32)).collect();
    let vals: Vec<f64> = pts.iter().map(|&l| j(l)).collect();
    let mut best = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for i in 0..=n {
        let left = i == 0 || vals[i - 1] >= vals[i];
        let right = i == n || vals[i + 1] >= vals[i];
        if !(left && right) {
            continue;
        }
        let (mut a, mut b) = (pts[i.saturating_sub(1)], pts[(i + 1).min(n)]);
        for _ in 0..300 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if j(c) < j(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best = best.min(j(0.5 * (a + b)));
    }
    best
}

/// Central finite difference of a scalar function.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Least-squares slope of y against x.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Relative distance |a − b|/|b| (absolute when b = 0).
pub fn rel(a: Complex64, b: Complex64) -> f64 {
    let d = (a - b).norm();
    if b.norm() > 0.0 {
        d / b.norm()
    } else {
        d
    }
}
