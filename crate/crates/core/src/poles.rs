//! Dispersion poles p_ℓ (zeros of ϑ(o) + Θ(o)λ_ℓ), their sensitivities and
//! the ill-posedness constants built from them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harmonics::{ls_slope, SourceProfile};
use crate::physics::{big_theta, big_theta_prime, frequency_node, vartheta, vartheta_prime, HarmonicConfig, PhysicalParams};
use crate::spectral::SpectralBasis;

/// One eigenvalue with its physical pole and classification data.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleEntry {
    pub lambda: f64,
    /// Canonical representative with Re ≤ 0 and Im ≥ 0.
    pub pole: Complex64,
    /// All roots of the dispersion polynomial.
    pub roots: Vec<Complex64>,
    pub modulus: f64,
    /// Argument θ ∈ [π/2, π] of the canonical representative.
    pub argument: f64,
    /// Θ(p)Ψ'(p)/p².
    pub amplification: Complex64,
}

/// Value and derivative of g(o) = τo³ + o² + (ω₀ + bλ)o + c²λ.
fn dispersion_value(o: Complex64, lambda: f64, p: &PhysicalParams) -> (Complex64, Complex64) {
    let big_b = p.omega0() + p.b() * lambda;
    let g = ((o * p.tau() + 1.0) * o + big_b) * o + p.c_sq() * lambda;
    let dg = (o * (3.0 * p.tau()) + 2.0) * o + big_b;
    (g, dg)
}

/// Roots of z² + βz + 1 without cancellation (the product of roots is 1).
fn unit_quadratic_roots(beta: f64) -> [Complex64; 2] {
    let beta = Complex64::new(beta, 0.0);
    let sq = (beta * beta - 4.0).sqrt();
    let q = if (beta + sq).norm() >= (beta - sq).norm() { -(beta + sq) / 2.0 } else { -(beta - sq) / 2.0 };
    [q, q.inv()]
}

/// All roots of the dispersion polynomial, polished by Newton steps.
///
/// The variable is scaled by s = c√λ so the constant and quadratic
/// coefficients become 1; the cubic then goes through the eigenvalues of
/// its companion matrix.
pub fn dispersion_roots(lambda: f64, p: &PhysicalParams) -> Result<Vec<Complex64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("eigenvalue {lambda} must be > 0")));
    }
    let s = p.c() * lambda.sqrt();
    let big_b = p.omega0() + p.b() * lambda;
    let scaled: Vec<Complex64> = if p.tau() > 0.0 {
        let ts = p.tau() * s;
        // z³ + a₂z² + a₁z + a₀
        let (a2, a1, a0) = (1.0 / ts, big_b / (ts * s), 1.0 / ts);
        let comp = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -a0, 1.0, 0.0, -a1, 0.0, 1.0, -a2]);
        comp.complex_eigenvalues().iter().copied().collect()
    } else {
        unit_quadratic_roots(big_b / s).to_vec()
    };
    Ok(scaled.into_iter().map(|z| polish(z * s, lambda, p)).collect())
}

fn polish(mut o: Complex64, lambda: f64, p: &PhysicalParams) -> Complex64 {
    let (mut g, _) = dispersion_value(o, lambda, p);
    for _ in 0..3 {
        let (_, dg) = dispersion_value(o, lambda, p);
        if dg.norm() == 0.0 {
            break;
        }
        let next = o - g / dg;
        let (gn, _) = dispersion_value(next, lambda, p);
        if gn.norm() < g.norm() {
            o = next;
            g = gn;
        } else {
            break;
        }
    }
    o
}

/// Re p of a complex pole to full relative precision.
///
/// Eliminating y² between the real and imaginary parts of the dispersion
/// relation at p = x + iy leaves the real cubic
/// 8τ²x³ + 8τx² + 2(τB + 1)x + (ω₀ + δλ) = 0 with B = ω₀ + (τc² + δ)λ.
/// Its constant term is the damping itself, so Newton on it resolves a
/// small Re p that the complex root carries only to an absolute error of
/// order ε|p|.
fn refine_real_part(mut x: f64, lambda: f64, p: &PhysicalParams) -> f64 {
    let tau = p.tau();
    let big_b = p.omega0() + p.b() * lambda;
    let lin = 2.0 * (tau * big_b + 1.0);
    let c0 = p.omega0() + p.delta() * lambda;
    let h = |x: f64| ((8.0 * tau * tau * x + 8.0 * tau) * x + lin) * x + c0;
    let mut hx = h(x);
    for _ in 0..4 {
        let dh = (24.0 * tau * tau * x + 16.0 * tau) * x + lin;
        if dh == 0.0 {
            break;
        }
        let next = x - hx / dh;
        let hn = h(next);
        if hn.abs() < hx.abs() {
            x = next;
            hx = hn;
        } else {
            break;
        }
    }
    x
}

/// Physical pole for one eigenvalue.
///
/// Among roots with Re ≤ 0 (to rounding), the canonical representative
/// with Im ≥ 0 and the largest imaginary part is chosen. When all roots are
/// real (overdamped), the one of largest modulus wins after the relaxation
/// root has been set aside.
pub fn solve_pole(lambda: f64, p: &PhysicalParams) -> Result<PoleEntry> {
    let roots = dispersion_roots(lambda, p)?;
    let scale = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let tol = 1e-10 * scale;
    let canon: Vec<Complex64> = roots
        .iter()
        .filter(|r| r.re <= tol)
        .map(|r| Complex64::new(r.re.min(0.0), r.im.abs()))
        .collect();
    if canon.is_empty() {
        return Err(Error::NoPhysicalRoot { lambda });
    }
    let max_im = canon.iter().map(|r| r.im).fold(0.0, f64::max);
    let pole = if max_im <= 1e-12 * scale {
        let mut real = canon.clone();
        real.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        // With τ > 0 the largest real root is the relaxation branch near
        // −1/τ, never the oscillatory pair, even when the pair is overdamped.
        if p.tau() > 0.0 && real.len() > 1 {
            real.pop();
        }
        *real.last().unwrap()
    } else {
        canon.iter().copied().max_by(|a, b| a.im.total_cmp(&b.im)).unwrap()
    };

    let pole = if pole.im > 0.0 { Complex64::new(refine_real_part(pole.re, lambda, p), pole.im) } else { pole };

    let (g, _) = dispersion_value(pole, lambda, p);
    let size = vartheta(pole, p).norm() + big_theta(pole, p).norm() * lambda;
    if g.norm() >= 1e-10 * size {
        return Err(Error::NoConvergence { residuals: vec![g.norm() / size] });
    }
    let amplification = amplification_factor(pole, p)?;
    Ok(PoleEntry {
        lambda,
        pole,
        roots,
        modulus: pole.norm(),
        argument: pole.im.atan2(pole.re),
        amplification,
    })
}

/// Poles for a list of eigenvalues, in order.
#[derive(Debug, Clone)]
pub struct PoleSet {
    params: PhysicalParams,
    entries: Vec<PoleEntry>,
}

impl PoleSet {
    pub fn compute(params: &PhysicalParams, lambdas: &[f64]) -> Result<Self> {
        let entries = lambdas.par_iter().map(|&l| solve_pole(l, params)).collect::<Result<Vec<_>>>()?;
        Ok(Self { params: *params, entries })
    }

    pub fn for_basis(params: &PhysicalParams, basis: &SpectralBasis) -> Result<Self> {
        Self::compute(params, basis.eigenvalues())
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn entries(&self) -> &[PoleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.entries.iter().map(|e| e.pole).collect()
    }

    /// Empirical stand-in for "real parts bounded away from zero".
    pub fn min_neg_re(&self) -> f64 {
        self.entries.iter().map(|e| -e.pole.re).fold(f64::INFINITY, f64::min)
    }
}

/// Leading term i·((c² + δ/τ)λ + ω₀/τ)^{1/2} of the pole for τ > 0.
pub fn pole_asymptotic(lambda: f64, p: &PhysicalParams) -> Result<Complex64> {
    let ct2 = p.c_tilde_sq().ok_or(Error::RequiresTau)?;
    Ok(Complex64::new(0.0, (ct2 * lambda + p.omega0() / p.tau()).sqrt()))
}

/// Θ(p)Ψ'(p)/p² = −2τ − 1/p − c²(τp² + p + ω₀)/((τc² + δ)p³ + c²p²).
pub fn amplification_factor(pole: Complex64, p: &PhysicalParams) -> Result<Complex64> {
    let denom = (pole * p.b() + p.c_sq()) * pole * pole;
    if pole.norm() == 0.0 || denom.norm() <= 1e-300 {
        return Err(Error::SingularDenominator { pole });
    }
    let num = ((pole * p.tau() + 1.0) * pole + p.omega0()) * p.c_sq();
    Ok(-2.0 * p.tau() - pole.inv() - num / denom)
}

/// −(ϑ'(p) + λΘ'(p))/p², equal to the amplification factor at a pole.
pub fn amplification_factor_alt(pole: Complex64, lambda: f64, p: &PhysicalParams) -> Complex64 {
    -(vartheta_prime(pole, p) + lambda * big_theta_prime(p)) / (pole * pole)
}

/// Pole modulus from its argument via the trigonometric cubic solution.
///
/// Eliminating c²λ between the real and imaginary parts of the dispersion
/// relation in polar form leaves τr³ − (ω₀ + bλ)r − 2c²λ cos θ = 0, whose
/// largest root is returned.
pub fn viete_modulus(theta: f64, lambda: f64, p: &PhysicalParams) -> Result<f64> {
    if p.tau() <= 0.0 {
        return Err(Error::RequiresTau);
    }
    let big_b = p.omega0() + p.b() * lambda;
    let argument = 3.0 * p.c_sq() * lambda * theta.cos() * (3.0 * p.tau()).sqrt() / big_b.powf(1.5);
    if !(-1.0..=1.0).contains(&argument) {
        return Err(Error::ArccosDomain { argument });
    }
    Ok(2.0 * (big_b / (3.0 * p.tau())).sqrt() * (argument.acos() / 3.0).cos())
}

/// Derivatives of the damping −Re p and of the argument θ with respect to
/// δ and τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleSensitivity {
    pub d_neg_re_d_delta: f64,
    pub d_neg_re_d_tau: f64,
    pub d_theta_d_delta: f64,
    pub d_theta_d_tau: f64,
}

/// Closed-form sensitivities from the implicit function theorem.
///
/// With g'(p) = 3τp² + 2p + ω₀ + bλ, x = Re p, r = |p| and θ = arg p,
///
/// ∂(−Re p)/∂δ = 2λr² sin²θ (1 + 2τx) / |g'|²,
/// ∂(−Re p)/∂τ = 2r² sin²θ ((1 + 2τx)(c²λ + 4x²) − r²) / |g'|²,
///
/// and the angular derivatives are Im(−λ/g') and Im(−(p² + c²λ)/g').
/// For τ > 0 the τ-bracket equals 2x(8τx² + 4x + ω₀ + bλ + τc²λ) on a pole,
/// which is the form evaluated.
/// Real (overdamped) poles have sin θ = 0, where the polar forms lose
/// their content; those fall back to −Re of dp = −(∂g)/g'.
pub fn pole_sensitivity(entry: &PoleEntry, p: &PhysicalParams) -> Result<PoleSensitivity> {
    let pole = entry.pole;
    let lambda = entry.lambda;
    let (_, dg) = dispersion_value(pole, lambda, p);
    let jac = dg.norm_sqr();
    let r = pole.norm();
    if r * jac <= 1e-300 || jac <= 1e-24 * (r.powi(4) + 1.0) {
        return Err(Error::DegenerateJacobian { pole });
    }
    let c2l = p.c_sq() * lambda;
    let sin_t = pole.im / r;
    let x = pole.re;
    let (d_delta, d_tau) = if sin_t.abs() > 1e-12 {
        let s2 = 2.0 * r * r * sin_t * sin_t / jac;
        let one = 1.0 + 2.0 * p.tau() * x;
        let tau = p.tau();
        let bracket = if tau > 0.0 {
            // Same value as (1 + 2τx)(c²λ + 4x²) − r², rewritten with the
            // real and imaginary parts of the dispersion relation so that the
            // near-cancellation of c²λ against r² never happens.
            let big_b = p.omega0() + p.b() * lambda;
            2.0 * x * ((8.0 * tau * x + 4.0) * x + big_b + tau * c2l)
        } else {
            one * (c2l + 4.0 * x * x) - r * r
        };
        (lambda * s2 * one, s2 * bracket)
    } else {
        ((lambda * pole / dg).re, ((pole * pole * pole + c2l * pole) / dg).re)
    };
    Ok(PoleSensitivity {
        d_neg_re_d_delta: d_delta,
        d_neg_re_d_tau: d_tau,
        d_theta_d_delta: (-lambda / dg).im,
        d_theta_d_tau: (-(pole * pole + c2l) / dg).im,
    })
}

/// Outcome of the relaxation-threshold test δ ≤ 2τc².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauThreshold {
    /// δ ≤ 2τc².
    pub below: bool,
    /// |p|² > c²λ, the modulus bound the implication rests on.
    pub modulus_exceeds_wave: bool,
    pub d_neg_re_d_tau: f64,
}

impl TauThreshold {
    /// below ⇒ ∂(−Re p)/∂τ < 0.
    pub fn implication_holds(&self) -> bool {
        !self.below || self.d_neg_re_d_tau < 0.0
    }
}

pub fn tau_threshold_check(entry: &PoleEntry, p: &PhysicalParams) -> Result<TauThreshold> {
    if p.tau() <= 0.0 {
        return Err(Error::RequiresTau);
    }
    let sens = pole_sensitivity(entry, p)?;
    Ok(TauThreshold {
        below: p.delta() <= 2.0 * p.tau() * p.c_sq(),
        modulus_exceeds_wave: entry.modulus * entry.modulus > p.c_sq() * entry.lambda,
        d_neg_re_d_tau: sens.d_neg_re_d_tau,
    })
}

/// min over λ ≥ λ₁ of j(λ) = λ^α |ϑ(o) + Θ(o)λ|².
///
/// Expanding, j(λ) = a²λ^{α+2} − 2bλ^{α+1} + d²λ^α with a² = |Θ|², d² = |ϑ|²,
/// b = −Re(ϑ conj Θ); the candidates are λ₁ and the stationary points λ±.
pub fn min_lambda_denominator(o: Complex64, alpha: f64, lambda1: f64, p: &PhysicalParams) -> f64 {
    let th = vartheta(o, p);
    let bt = big_theta(o, p);
    let a2 = bt.norm_sqr();
    let d2 = th.norm_sqr();
    let b = -(th * bt.conj()).re;
    // a²d² − b² = Im(ϑ conj Θ)². On the imaginary axis o = iw this is
    // (δw³ + ω₀c²w)², which avoids forming b − τc² in floating point.
    let gap = if o.re == 0.0 {
        let w = o.im;
        (p.delta() * w * w * w + p.omega0() * p.c_sq() * w).powi(2)
    } else {
        (th * bt.conj()).im.powi(2)
    };
    let j = |lam: f64| lam.powf(alpha) * (th + bt * lam).norm_sqr();
    let mut best = j(lambda1);
    if alpha == 0.0 {
        let lam = b / a2;
        if lam >= lambda1 {
            best = best.min(gap / a2);
        }
        return best;
    }
    let disc = b * b - alpha * (alpha + 2.0) * gap;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let denom = (alpha + 2.0) * a2;
        let plus = ((alpha + 1.0) * b + sq) / denom;
        // λ₊λ₋ = αd²/((α+2)a²) avoids cancellation in the smaller root.
        let minus = if plus != 0.0 { alpha * d2 / ((alpha + 2.0) * a2 * plus) } else { 0.0 };
        for lam in [plus, minus] {
            if lam >= lambda1 && lam.is_finite() {
                best = best.min(j(lam));
            }
        }
    }
    best
}

/// Sobolev/Bochner indices entering the constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormIndices {
    pub s: f64,
    pub s_check: f64,
    pub s_ddot: f64,
    pub sigma_check: f64,
    pub sigma_ddot: f64,
}

impl NormIndices {
    /// α = s − š.
    pub fn alpha(&self) -> f64 {
        self.s - self.s_check
    }
}

/// C̄, Č, Ĉ with truncation metadata and divergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConstants {
    /// sup_ℓ |Θ(p_ℓ)Ψ'(p_ℓ)/p_ℓ²| over the retained eigenspaces.
    pub c_bar: f64,
    /// Č with the infimum over all λ ≥ λ₁ (independent of J).
    pub c_check: f64,
    /// Č with the supremum over the retained eigenvalues only.
    pub c_check_discrete: f64,
    pub c_hat: f64,
    pub indices: NormIndices,
    pub harmonics: usize,
    pub spaces: usize,
    /// Terms of Č², m = 1..M.
    pub c_check_terms: Vec<f64>,
    /// Fitted decay exponent q of the terms, t_m ~ m^{−q}, over m ∈ [M/2, M].
    pub term_decay: f64,
    /// q > 1.1, i.e. the series defining Č looks summable.
    pub c_check_summable: bool,
    pub min_neg_re_pole: f64,
}

impl ModelConstants {
    /// √(partial sums) of Č².
    pub fn c_check_partial(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.c_check_terms
            .iter()
            .map(|t| {
                acc += t;
                acc.sqrt()
            })
            .collect()
    }
}

pub fn model_constants(
    p: &PhysicalParams,
    cfg: &HarmonicConfig,
    basis: &SpectralBasis,
    source: &SourceProfile,
    indices: NormIndices,
) -> Result<ModelConstants> {
    let poles = PoleSet::for_basis(p, basis)?;
    let c_bar = poles.entries().iter().map(|e| e.amplification.norm()).fold(0.0, f64::max);
    let alpha = indices.alpha();
    let lambda1 = basis.eigenvalue(0);
    let big_m = cfg.harmonics();

    let rows: Vec<(f64, f64, f64)> = (1..=big_m)
        .into_par_iter()
        .map(|m| {
            let o = frequency_node(m, cfg);
            let th = vartheta(o, p);
            let bt = big_theta(o, p);
            let fb = source.frak_b(m).norm_sqr();
            let top = o.norm().powf(2.0 * (2.0 + indices.sigma_check)) * fb;
            let term = top / min_lambda_denominator(o, alpha, lambda1, p);
            let mut disc: f64 = 0.0;
            let mut hat: f64 = 0.0;
            for &lam in basis.eigenvalues() {
                let den = (th + bt * lam).norm_sqr();
                disc = disc.max(lam.powf(-alpha) * top / den);
                let w = lam.powf((indices.s_check - indices.s_ddot) / 2.0)
                    * o.norm().powf(2.0 + indices.sigma_check - indices.sigma_ddot);
                hat = hat.max(w / den.sqrt());
            }
            (term, disc, hat)
        })
        .collect();

    let c_check_terms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let c_check = c_check_terms.iter().sum::<f64>().sqrt();
    let c_check_discrete = rows.iter().map(|r| r.1).sum::<f64>().sqrt();
    let c_hat = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let term_decay = decay_exponent(&c_check_terms);

    Ok(ModelConstants {
        c_bar,
        c_check,
        c_check_discrete,
        c_hat,
        indices,
        harmonics: big_m,
        spaces: basis.num_spaces(),
        c_check_summable: term_decay > 1.1,
        c_check_terms,
        term_decay,
        min_neg_re_pole: poles.min_neg_re(),
    })
}

/// q in t_m ~ m^{−q} fitted over the last octave of the terms.
pub fn decay_exponent(terms: &[f64]) -> f64 {
    let n = terms.len();
    if n < 4 {
        return f64::NAN;
    }
    let pts: Vec<(f64, f64)> = (n / 2..=n)
        .filter(|&m| m >= 1 && terms[m - 1] > 0.0)
        .map(|m| ((m as f64).ln(), terms[m - 1].ln()))
        .collect();
    -ls_slope(&pts)
}
