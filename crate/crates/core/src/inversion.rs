//! Reconstruction of η from boundary data.
//!
//! Two paths are provided. The linearized one splits the data into
//! eigenspace traces by rational fitting on the frequency nodes, inverts the
//! traces on Σ and recovers the state in closed form. The nonlinear one is a
//! regularized Newton iteration with the derivative frozen at the reference
//! point, acting on a lifted unknown η⃗ = (η_m)_m that is tied together by a
//! penalty.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{diagonal_factors, observe, ObservationData};
use crate::harmonics::{b_coupling_grid, field_to_grid, hsigma_hs_norm, laplace_extension, HarmonicField, SourceProfile};
use crate::physics::{big_theta, big_theta_prime, frequency_node, vartheta, vartheta_prime, HarmonicConfig, PhysicalParams};
use crate::poles::{NormIndices, PoleEntry, PoleSet};
use crate::spectral::{CoefficientField, SpectralBasis};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// o²Θ(o)/(ϑ(o) + Θ(o)λ), the pole basis function of eigenvalue λ.
pub fn pole_basis(o: Complex64, lambda: f64, p: &PhysicalParams) -> Complex64 {
    let bt = big_theta(o, p);
    o * o * bt / (vartheta(o, p) + bt * lambda)
}

/// Residue of [`pole_basis`] at its pole, p²Θ(p)/(ϑ'(p) + Θ'λ).
pub fn pole_basis_residue(entry: &PoleEntry, p: &PhysicalParams) -> Complex64 {
    let q = entry.pole;
    q * q * big_theta(q, p) / (vartheta_prime(q, p) + big_theta_prime(p) * entry.lambda)
}

/// c = Ψ'(p)/p²·res(d̃; p) + ρ̃(p).
pub fn residue_to_coefficient(residue: Complex64, rho_at_pole: Complex64, entry: &PoleEntry, p: &PhysicalParams) -> Complex64 {
    let q = entry.pole;
    // At a pole ϑ = −λΘ, so Ψ' = −(ϑ' + λΘ')/Θ.
    let psi_prime = -(vartheta_prime(q, p) + big_theta_prime(p) * entry.lambda) / big_theta(q, p);
    psi_prime / (q * q) * residue + rho_at_pole
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Singular values below this fraction of the largest are discarded.
    pub svd_threshold: f64,
    /// Fits whose condition number exceeds this are rejected.
    pub max_condition: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { svd_threshold: 1e-12, max_condition: 1e12 }
    }
}

/// Output of the rational fit, indexed [eigenspace][Σ sample].
#[derive(Debug, Clone)]
pub struct ResidueFit {
    /// c_j(x) = Σ_k a^{j,k} tr φ^{j,k}(x).
    pub coeffs: Vec<Vec<Complex64>>,
    /// res(d̃; p_j) at every sample.
    pub residues: Vec<Vec<Complex64>>,
    pub condition: f64,
    /// Relative misfit of the fitted rational model on the nodes.
    pub fit_residual: f64,
}

/// Fits d̂_m = −Σ_j B_j(o_m)(c_j − ρ̂^j_m) on the nodes and reads off c_j.
///
/// `d_hat` is indexed [m][sample], `rho_hat` [m][j][sample] and
/// `rho_at_poles` [j][sample]; the latter two may be empty when the model
/// residual vanishes.
pub fn residue_extract(
    d_hat: &[Vec<Complex64>],
    rho_hat: &[Vec<Vec<Complex64>>],
    rho_at_poles: &[Vec<Complex64>],
    poles: &PoleSet,
    cfg: &HarmonicConfig,
    opts: &FitOptions,
) -> Result<ResidueFit> {
    let big_m = d_hat.len();
    let big_j = poles.len();
    if big_m < big_j {
        return Err(Error::RankDeficient { nodes: big_m, poles: big_j });
    }
    let samples = d_hat.first().map_or(0, Vec::len);
    if let Some(bad) = d_hat.iter().find(|r| r.len() != samples) {
        return Err(Error::ShapeMismatch { expected: samples, got: bad.len() });
    }
    if !rho_hat.is_empty() && rho_hat.len() != big_m {
        return Err(Error::ShapeMismatch { expected: big_m, got: rho_hat.len() });
    }
    if !rho_at_poles.is_empty() && rho_at_poles.len() != big_j {
        return Err(Error::ShapeMismatch { expected: big_j, got: rho_at_poles.len() });
    }
    let p = poles.params();
    let entries = poles.entries();
    let a = DMatrix::from_fn(big_m, big_j, |m, j| pole_basis(frequency_node(m + 1, cfg), entries[j].lambda, p));
    let q = DMatrix::from_fn(big_m, samples, |m, s| {
        let mut v = d_hat[m][s];
        if !rho_hat.is_empty() {
            for j in 0..big_j {
                v -= a[(m, j)] * rho_hat[m][j][s];
            }
        }
        v
    });

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > opts.max_condition {
        return Err(Error::IllConditionedFit { condition });
    }
    let gamma = svd
        .solve(&q, opts.svd_threshold * smax)
        .map_err(|e| Error::LinearSolveFailure(e.to_string()))?;
    let misfit = (&a * &gamma - &q).norm();
    let scale = q.norm();
    let fit_residual = if scale > 0.0 { misfit / scale } else { misfit };

    let mut coeffs = vec![vec![ZERO; samples]; big_j];
    let mut residues = vec![vec![ZERO; samples]; big_j];
    for (j, entry) in entries.iter().enumerate() {
        let r = pole_basis_residue(entry, p);
        for s in 0..samples {
            let c = -gamma[(j, s)];
            let rho = if rho_at_poles.is_empty() { ZERO } else { rho_at_poles[j][s] };
            coeffs[j][s] = c;
            residues[j][s] = -r * (c - rho);
        }
    }
    Ok(ResidueFit { coeffs, residues, condition, fit_residual })
}

/// Coefficients on one eigenspace recovered from its trace on Σ.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceInversion {
    pub coeffs: Vec<Complex64>,
    /// λ_j^{s/2}/σ_min, the inverse norm into the h^{s,j} weighting.
    pub inverse_norm: f64,
    pub sigma_min: f64,
}

fn trace_matrix(j: usize, basis: &SpectralBasis) -> DMatrix<f64> {
    let space = basis.space(j);
    DMatrix::from_fn(basis.sigma_len(), space.len(), |s, k| basis.trace_value(s, space.start + k))
}

/// Smallest singular value of the trace map on eigenspace j.
pub fn trace_sigma_min(j: usize, basis: &SpectralBasis) -> f64 {
    let t = trace_matrix(j, basis);
    if t.nrows() < t.ncols() {
        return 0.0;
    }
    t.singular_values().min()
}

/// Least-squares inverse of a ↦ Σ_k a^k tr φ^{j,k} on the Σ samples.
pub fn trace_invert(values: &[Complex64], j: usize, basis: &SpectralBasis, s: f64) -> Result<TraceInversion> {
    if values.len() != basis.sigma_len() {
        return Err(Error::ShapeMismatch { expected: basis.sigma_len(), got: values.len() });
    }
    let t = trace_matrix(j, basis);
    let sigma_min = if t.nrows() < t.ncols() { 0.0 } else { t.clone().singular_values().min() };
    if sigma_min < 1e-12 {
        return Err(Error::NonInvertibleTrace { j: j + 1, sigma_min });
    }
    let rhs = DMatrix::from_fn(values.len(), 2, |i, c| if c == 0 { values[i].re } else { values[i].im });
    let sol = t
        .svd(true, true)
        .solve(&rhs, 0.0)
        .map_err(|e| Error::LinearSolveFailure(e.to_string()))?;
    let coeffs = (0..sol.nrows()).map(|k| Complex64::new(sol[(k, 0)], sol[(k, 1)])).collect();
    Ok(TraceInversion { coeffs, inverse_norm: basis.eigenvalue(j).powf(s / 2.0) / sigma_min, sigma_min })
}

/// Inputs of the linearized reconstruction at the reference point (0, û⁰).
#[derive(Debug, Clone)]
pub struct LinearizedProblem<'a> {
    pub params: PhysicalParams,
    pub cfg: HarmonicConfig,
    pub basis: &'a SpectralBasis,
    pub source: &'a SourceProfile,
    pub phi_ref: Vec<f64>,
    /// Observation increment p̂^obs_m on Σ.
    pub data: ObservationData,
    /// Model residual increment r̂_m.
    pub residual: HarmonicField,
    pub indices: NormIndices,
    pub fit: FitOptions,
}

#[derive(Debug, Clone)]
pub struct LinearizedReconstruction {
    /// a^{j,k} = ⟨φ²η, φ^{j,k}⟩.
    pub a: Vec<Complex64>,
    /// η = P(Re a)/φ² on the grid.
    pub eta: Vec<f64>,
    pub state: HarmonicField,
    /// res(p̃^obs; p_j), indexed [j][sample].
    pub obs_residues: Vec<Vec<Complex64>>,
    pub trace_inverse_norms: Vec<f64>,
    pub fit_condition: f64,
    pub fit_residual: f64,
}

/// Sequence m ↦ values[m][i] as an analytic function evaluated at o.
fn extend_mode(field: &HarmonicField, i: usize, o: Complex64, cfg: &HarmonicConfig) -> Complex64 {
    let seq: Vec<Complex64> = (1..=field.harmonics()).map(|m| field.get(m, i)).collect();
    laplace_extension(&seq, o, cfg)
}

pub fn reconstruct_linearized(lp: &LinearizedProblem) -> Result<LinearizedReconstruction> {
    let basis = lp.basis;
    let cfg = &lp.cfg;
    let p = &lp.params;
    let big_m = cfg.harmonics();
    let samples = basis.sigma_len();
    lp.residual.check_basis(basis)?;
    if lp.residual.harmonics() != big_m || lp.data.values.len() != big_m {
        return Err(Error::ConfigMismatch("data, residual and harmonic configuration disagree".into()));
    }
    if lp.phi_ref.len() != basis.grid_len() {
        return Err(Error::ShapeMismatch { expected: basis.grid_len(), got: lp.phi_ref.len() });
    }
    let poles = PoleSet::for_basis(p, basis)?;
    let frak_b = lp.source.frak_b_vec(big_m);
    if let Some(m) = frak_b.iter().position(|b| b.norm() == 0.0) {
        return Err(Error::InvalidParameter(format!("source coupling vanishes at harmonic {}", m + 1)));
    }
    let frak_b_pole: Vec<Complex64> = poles.entries().iter().map(|e| lp.source.frak_b_tilde(e.pole)).collect();
    if let Some(j) = frak_b_pole.iter().position(|b| b.norm() == 0.0) {
        return Err(Error::InvalidParameter(format!("source extension vanishes at pole {}", j + 1)));
    }

    // Reduced data d̂_m = Θ(o_m)p̂_m/𝔅_m and ρ̂^j_m = tr(Proj_j r̂_m)/𝔅_m.
    let d_hat: Vec<Vec<Complex64>> = (0..big_m)
        .map(|m| {
            let f = big_theta(frequency_node(m + 1, cfg), p) / frak_b[m];
            lp.data.values[m].iter().map(|v| v * f).collect()
        })
        .collect();
    let space_trace = |j: usize, coeff: &dyn Fn(usize) -> Complex64| -> Vec<Complex64> {
        (0..samples)
            .map(|s| basis.space(j).map(|i| coeff(i) * basis.trace_value(s, i)).sum())
            .collect()
    };
    let rho_hat: Vec<Vec<Vec<Complex64>>> = (1..=big_m)
        .map(|m| {
            let row = lp.residual.harmonic(m);
            (0..poles.len())
                .map(|j| space_trace(j, &|i| row[i] / frak_b[m - 1]))
                .collect()
        })
        .collect();
    // r̃^{j,k}(p_j) and ρ̃^j(p_j).
    let r_tilde: Vec<Complex64> =
        (0..basis.num_modes()).map(|i| extend_mode(&lp.residual, i, poles.entries()[basis.mode_space(i)].pole, cfg)).collect();
    let rho_at_poles: Vec<Vec<Complex64>> =
        (0..poles.len()).map(|j| space_trace(j, &|i| r_tilde[i] / frak_b_pole[j])).collect();

    let fit = residue_extract(&d_hat, &rho_hat, &rho_at_poles, &poles, cfg, &lp.fit)?;

    let mut a = vec![ZERO; basis.num_modes()];
    let mut obs_residues = Vec::with_capacity(poles.len());
    let mut inverse_norms = Vec::with_capacity(poles.len());
    for (j, entry) in poles.entries().iter().enumerate() {
        let bt = big_theta(entry.pole, p);
        let res_obs: Vec<Complex64> = fit.residues[j].iter().map(|r| r * frak_b_pole[j] / bt).collect();
        let rhs: Vec<Complex64> = res_obs.iter().map(|r| entry.amplification / frak_b_pole[j] * r).collect();
        let inv = trace_invert(&rhs, j, basis, lp.indices.s)?;
        for (k, i) in basis.space(j).enumerate() {
            a[i] = inv.coeffs[k] + r_tilde[i] / frak_b_pole[j];
        }
        obs_residues.push(res_obs);
        inverse_norms.push(inv.inverse_norm);
    }

    let state = state_from_coefficients(&a, &lp.residual, &frak_b, p, cfg, basis)?;
    let re: Vec<f64> = a.iter().map(|c| c.re).collect();
    let weighted = basis.synthesize(&re)?;
    let eta = weighted.iter().zip(&lp.phi_ref).map(|(w, f)| w / (f * f)).collect();
    Ok(LinearizedReconstruction {
        a,
        eta,
        state,
        obs_residues,
        trace_inverse_norms: inverse_norms,
        fit_condition: fit.condition,
        fit_residual: fit.fit_residual,
    })
}

/// b_m^{j,k} = −o_m²(𝔅_m a^{j,k} − r_m^{j,k})/(ϑ(o_m) + Θ(o_m)λ_j).
pub fn state_from_coefficients(
    a: &[Complex64],
    residual: &HarmonicField,
    frak_b: &[Complex64],
    p: &PhysicalParams,
    cfg: &HarmonicConfig,
    basis: &SpectralBasis,
) -> Result<HarmonicField> {
    let d = diagonal_factors(p, cfg, basis)?;
    let modes = basis.num_modes();
    // d already carries the 1/o² factor.
    Ok(HarmonicField::from_fn(cfg.harmonics(), modes, |m, i| {
        -(frak_b[m - 1] * a[i] - residual.get(m, i)) / d[(m - 1) * modes + i]
    }))
}

/// Pole-weighted and Sobolev image-space norms together with the
/// per-eigenspace bound on the residual interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct YNorms {
    pub obs_pol: f64,
    pub mod_pol: f64,
    pub mod_sob: f64,
    /// 2C̄·obs_pol + 2·mod_pol + mod_sob/Č.
    pub combined: f64,
    /// (value, Cauchy–Schwarz bound) of λ_j^{s/2}‖r̃^j(p_j)‖ per eigenspace.
    pub mod_pol_terms: Vec<(f64, f64)>,
}

/// Everything y_norms needs besides the data itself.
#[derive(Debug, Clone, Copy)]
pub struct NormContext<'a> {
    pub params: &'a PhysicalParams,
    pub cfg: &'a HarmonicConfig,
    pub basis: &'a SpectralBasis,
    pub poles: &'a PoleSet,
    pub source: &'a SourceProfile,
    pub indices: NormIndices,
    pub c_bar: f64,
    pub c_check: f64,
}

pub fn y_norms(obs_residues: &[Vec<Complex64>], residual: &HarmonicField, ctx: &NormContext) -> Result<YNorms> {
    let basis = ctx.basis;
    let cfg = ctx.cfg;
    let t = cfg.period();
    residual.check_basis(basis)?;
    if obs_residues.len() != ctx.poles.len() {
        return Err(Error::ShapeMismatch { expected: ctx.poles.len(), got: obs_residues.len() });
    }
    let s = ctx.indices.s;
    let mut obs = 0.0;
    let mut modpol = 0.0;
    let mut terms = Vec::with_capacity(ctx.poles.len());
    for (j, entry) in ctx.poles.entries().iter().enumerate() {
        let fb = ctx.source.frak_b_tilde(entry.pole).norm();
        let sigma_min = trace_sigma_min(j, basis);
        let inv = entry.lambda.powf(s / 2.0) / sigma_min;
        let res2: f64 = obs_residues[j].iter().map(Complex64::norm_sqr).sum();
        if res2 > 0.0 {
            obs += inv * inv / (fb * fb) * res2;
        }

        let lam_s = entry.lambda.powf(s);
        let mut tilde2 = 0.0;
        let mut l2 = 0.0;
        for i in basis.space(j) {
            tilde2 += extend_mode(residual, i, entry.pole, cfg).norm_sqr();
            // ‖Re Σ_m r_m e^{imωt}‖²_{L²(0,T)} = (T/2)Σ_m |r_m|².
            l2 += 0.5 * t * (1..=residual.harmonics()).map(|m| residual.get(m, i).norm_sqr()).sum::<f64>();
        }
        modpol += lam_s * tilde2 / (fb * fb);
        let re = entry.pole.re;
        let kernel = if re < 0.0 { (-re * t).exp() / (-2.0 * re).sqrt() } else { t.sqrt() };
        terms.push(((lam_s * tilde2).sqrt(), 2.0 / t * kernel * (lam_s * l2).sqrt()));
    }

    let d = diagonal_factors(ctx.params, cfg, basis)?;
    let modes = basis.num_modes();
    let mut sob = 0.0;
    for m in 1..=residual.harmonics() {
        let w = (m as f64 * cfg.omega()).powf(2.0 * ctx.indices.sigma_check);
        for i in 0..modes {
            sob += w * basis.mode_eigenvalue(i).powf(ctx.indices.s_check) * (residual.get(m, i) / d[(m - 1) * modes + i]).norm_sqr();
        }
    }
    let (obs_pol, mod_pol, mod_sob) = (obs.sqrt(), modpol.sqrt(), sob.sqrt());
    Ok(YNorms {
        obs_pol,
        mod_pol,
        mod_sob,
        combined: 2.0 * ctx.c_bar * obs_pol + 2.0 * mod_pol + mod_sob / ctx.c_check,
        mod_pol_terms: terms,
    })
}

/// ‖φ²η‖_{H^s} + ‖û‖_{h^σ̌(H^š)}/Č.
pub fn x_norm(a: &[Complex64], u: &HarmonicField, ctx: &NormContext) -> Result<f64> {
    let eta = ctx.basis.sobolev_norm(a, ctx.indices.s)?;
    let state = hsigma_hs_norm(u, ctx.cfg, ctx.basis, ctx.indices.sigma_check, ctx.indices.s_check)?;
    Ok(eta + state / ctx.c_check)
}

/// n^{−2}-weighted mean of the lifted coefficient vectors.
pub fn lifted_mean(eta_vec: &[Vec<f64>]) -> Vec<f64> {
    let len = eta_vec.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; len];
    let mut total = 0.0;
    for (n, row) in eta_vec.iter().enumerate() {
        let w = ((n + 1) as f64).powi(-2);
        total += w;
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += w * v;
        }
    }
    if total > 0.0 {
        for v in &mut mean {
            *v /= total;
        }
    }
    mean
}

/// (Pη⃗)_m = η_m − weighted mean.
pub fn penalty_projection(eta_vec: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mean = lifted_mean(eta_vec);
    eta_vec.iter().map(|row| row.iter().zip(&mean).map(|(v, c)| v - c).collect()).collect()
}

fn nested_norm(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Physical coefficient from the lifted one, with ‖Pη⃗‖ as the
/// m-inconsistency diagnostic. Rows hold sine coefficients of η_m.
pub fn collapse_lifted_eta(eta_vec: &[Vec<f64>], phi_ref: Vec<f64>, basis: &SpectralBasis) -> Result<(CoefficientField, f64)> {
    let mean = lifted_mean(eta_vec);
    let field = CoefficientField::from_eta_coeffs(&mean, phi_ref, basis)?;
    Ok((field, nested_norm(&penalty_projection(eta_vec))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// First n with ‖F(x_n) − y^ε‖ ≤ τ_D·ε.
    Discrepancy { tau: f64 },
    /// Largest n with ε Σ_{j<n} c_r^j α_{n−j−1}^{−1/2} ≤ √ε.
    APriori,
    /// Always run the maximal number of iterations.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// α₀; `None` selects 1e-2·‖p^obs‖², the squared observation norm.
    pub alpha0: Option<f64>,
    pub decay: f64,
    pub c_r: f64,
    pub max_iterations: usize,
    pub noise_level: f64,
    pub stopping: StoppingRule,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            alpha0: None,
            decay: 0.7,
            c_r: 1.0,
            max_iterations: 30,
            noise_level: 0.0,
            stopping: StoppingRule::Discrepancy { tau: 2.0 },
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidParameter(format!("decay ratio {} must lie in (0, 1)", self.decay)));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise level {} must be >= 0", self.noise_level)));
        }
        if let Some(a) = self.alpha0 {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!("alpha0 = {a} must be > 0")));
            }
        }
        if let StoppingRule::Discrepancy { tau } = self.stopping {
            if !(tau > 1.0) {
                return Err(Error::InvalidParameter(format!("discrepancy factor {tau} must exceed 1")));
            }
        }
        Ok(())
    }

    /// Stopping index of the a-priori rule for the given α₀.
    pub fn a_priori_index(&self, alpha0: f64) -> usize {
        let eps = self.noise_level;
        if eps == 0.0 {
            return self.max_iterations;
        }
        let mut n_star = 0;
        for n in 1..=self.max_iterations {
            let sum: f64 = (0..n)
                .map(|j| self.c_r.powi(j as i32) * (alpha0 * self.decay.powi((n - j - 1) as i32)).powf(-0.5))
                .sum();
            if eps * sum <= eps.sqrt() {
                n_star = n;
            } else {
                break;
            }
        }
        n_star
    }
}

/// Lifted state of the frozen Newton iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedIterate {
    /// Sine coefficients of η_m, one row per harmonic.
    pub eta: Vec<Vec<f64>>,
    pub state: HarmonicField,
}

/// Data and reference point of the all-at-once problem.
#[derive(Debug, Clone)]
pub struct FrozenNewtonProblem<'a> {
    pub params: PhysicalParams,
    pub cfg: HarmonicConfig,
    pub basis: &'a SpectralBasis,
    pub phi_ref: Vec<f64>,
    /// Excitation r̂ entering the model equation.
    pub source: HarmonicField,
    pub data: ObservationData,
    /// Reference state û⁰ at which the derivative is frozen.
    pub u0: HarmonicField,
    /// (sine coefficients of η†, û†) when known.
    pub truth: Option<(Vec<f64>, HarmonicField)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub iteration: usize,
    pub residual_norm: f64,
    pub alpha: f64,
    /// ‖collapse(η⃗_n) − η†‖ when the truth is known.
    pub eta_error: Option<f64>,
    /// ‖x_n − x†‖ with η† repeated over m.
    pub x_error: Option<f64>,
    pub p_eta_norm: f64,
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub history: Vec<NewtonStep>,
    pub iterate: LiftedIterate,
    pub stopping_index: usize,
}

impl NewtonResult {
    pub fn final_step(&self) -> &NewtonStep {
        self.history.last().expect("history holds at least the initial iterate")
    }
}

/// Model residual and observations of the lifted forward map,
/// (L_m û_m + P[η_m B_m(û, û)] − r̂_m, tr û_m).
pub fn lifted_forward(x: &LiftedIterate, pb: &FrozenNewtonProblem) -> Result<(HarmonicField, ObservationData)> {
    let basis = pb.basis;
    let big_m = pb.cfg.harmonics();
    if x.eta.len() != big_m {
        return Err(Error::ShapeMismatch { expected: big_m, got: x.eta.len() });
    }
    let d = diagonal_factors(&pb.params, &pb.cfg, basis)?;
    let ug = field_to_grid(&x.state, basis)?;
    let modes = basis.num_modes();
    let rows = (1..=big_m)
        .into_par_iter()
        .map(|m| {
            let eta = basis.synthesize(&x.eta[m - 1])?;
            let mut b = b_coupling_grid(&ug, &ug, m, big_m);
            for (v, e) in b.iter_mut().zip(&eta) {
                *v *= e;
            }
            let mut row = basis.project_complex(&b)?;
            for (i, v) in row.iter_mut().enumerate() {
                *v += d[(m - 1) * modes + i] * x.state.get(m, i) - pb.source.get(m, i);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((HarmonicField::from_harmonics(rows)?, observe(&x.state, basis)?))
}

fn data_norm(model: &HarmonicField, obs: &ObservationData, data: &ObservationData) -> f64 {
    (model.norm().powi(2) + obs.distance(data).powi(2)).sqrt()
}

/// Frozen blocks K_m = F'(x₀) restricted to harmonic m: the diagonal of L_m
/// and the coupling e ↦ P[(Σ_n e_n φ_n)B_m(û⁰, û⁰)].
struct FrozenOperator {
    diag: Vec<Complex64>,
    coupling: Vec<DMatrix<Complex64>>,
    trace: DMatrix<f64>,
}

impl FrozenOperator {
    fn new(pb: &FrozenNewtonProblem) -> Result<Self> {
        let basis = pb.basis;
        let big_m = pb.cfg.harmonics();
        let modes = basis.num_modes();
        let diag = diagonal_factors(&pb.params, &pb.cfg, basis)?;
        let u0g = field_to_grid(&pb.u0, basis)?;
        let sines: Vec<Vec<f64>> = (0..modes)
            .map(|n| {
                let mut e = vec![0.0; modes];
                e[n] = 1.0;
                basis.synthesize(&e)
            })
            .collect::<Result<_>>()?;
        let coupling = (1..=big_m)
            .into_par_iter()
            .map(|m| {
                let b = b_coupling_grid(&u0g, &u0g, m, big_m);
                let mut g = DMatrix::from_element(modes, modes, ZERO);
                for (n, sn) in sines.iter().enumerate() {
                    let prod: Vec<Complex64> = b.iter().zip(sn).map(|(x, s)| x * s).collect();
                    let col = basis.project_complex(&prod)?;
                    for (i, c) in col.into_iter().enumerate() {
                        g[(i, n)] = c;
                    }
                }
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        let trace = DMatrix::from_fn(basis.sigma_len(), modes, |s, i| basis.trace_value(s, i));
        Ok(Self { diag, coupling, trace })
    }
}

/// Regularized Newton iteration with the derivative frozen at x₀ = (0, û⁰).
pub fn frozen_newton(pb: &FrozenNewtonProblem, cfg: &NewtonConfig) -> Result<NewtonResult> {
    cfg.validate()?;
    let basis = pb.basis;
    let big_m = pb.cfg.harmonics();
    let modes = basis.num_modes();
    let samples = basis.sigma_len();
    pb.u0.check_basis(basis)?;
    pb.source.check_compatible(&pb.u0)?;
    if pb.data.values.len() != big_m || pb.data.values.iter().any(|r| r.len() != samples) {
        return Err(Error::ConfigMismatch("observation data does not match harmonics and samples".into()));
    }
    let op = FrozenOperator::new(pb)?;

    let alpha0 = cfg.alpha0.unwrap_or(1e-2 * pb.data.norm().powi(2));
    if !(alpha0 > 0.0) {
        return Err(Error::InvalidParameter("alpha0 vanishes for zero data; set it explicitly".into()));
    }
    let max_iter = match cfg.stopping {
        StoppingRule::APriori => cfg.a_priori_index(alpha0),
        _ => cfg.max_iterations,
    };

    let weights: Vec<f64> = (1..=big_m).map(|n| (n as f64).powi(-2)).collect();
    let total_w: f64 = weights.iter().sum();
    let block = modes + 2 * modes;
    let n_unknowns = big_m * block;
    let rows_per_m = 2 * modes + 2 * samples;
    let n_rows = big_m * rows_per_m + 2 * big_m * modes;

    // Fixed part of the stacked real matrix: K, then α rows (filled per
    // iteration), then the penalty rows.
    let mut base = DMatrix::<f64>::zeros(n_rows, n_unknowns);
    let blocks: Vec<DMatrix<f64>> = (0..big_m)
        .into_par_iter()
        .map(|m| {
            let mut k = DMatrix::<f64>::zeros(rows_per_m, block);
            let g = &op.coupling[m];
            for i in 0..modes {
                let d = op.diag[m * modes + i];
                for n in 0..modes {
                    k[(i, n)] = g[(i, n)].re;
                    k[(modes + i, n)] = g[(i, n)].im;
                }
                k[(i, modes + i)] = d.re;
                k[(i, 2 * modes + i)] = -d.im;
                k[(modes + i, modes + i)] = d.im;
                k[(modes + i, 2 * modes + i)] = d.re;
            }
            for s in 0..samples {
                for i in 0..modes {
                    let t = op.trace[(s, i)];
                    k[(2 * modes + s, modes + i)] = t;
                    k[(2 * modes + samples + s, 2 * modes + i)] = t;
                }
            }
            k
        })
        .collect();
    for (m, k) in blocks.iter().enumerate() {
        base.view_mut((m * rows_per_m, m * block), (rows_per_m, block)).copy_from(k);
    }
    let p_start = big_m * rows_per_m + big_m * modes;
    for m in 0..big_m {
        for n in 0..big_m {
            let coef = if m == n { 1.0 } else { 0.0 } - weights[n] / total_w;
            for i in 0..modes {
                base[(p_start + m * modes + i, n * block + i)] = coef;
            }
        }
    }

    let mut x = LiftedIterate { eta: vec![vec![0.0; modes]; big_m], state: pb.u0.clone() };
    let report = |x: &LiftedIterate, iteration: usize, residual_norm: f64, alpha: f64| -> NewtonStep {
        let p_eta_norm = nested_norm(&penalty_projection(&x.eta));
        let (eta_error, x_error) = match &pb.truth {
            Some((eta_true, u_true)) => {
                let mean = lifted_mean(&x.eta);
                let e = mean.iter().zip(eta_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let lifted: f64 = x.eta.iter().flatten().zip(eta_true.iter().cycle()).map(|(a, b)| (a - b).powi(2)).sum();
                let du = x.state.sub(u_true).map(|d| d.norm()).unwrap_or(f64::NAN);
                (Some(e), Some((lifted + du * du).sqrt()))
            }
            None => (None, None),
        };
        NewtonStep { iteration, residual_norm, alpha, eta_error, x_error, p_eta_norm }
    };

    let (mut model, mut obs) = lifted_forward(&x, pb)?;
    let mut residual = data_norm(&model, &obs, &pb.data);
    let mut history = vec![report(&x, 0, residual, alpha0)];
    let mut increases = 0;
    let mut stopping_index = 0;

    for n in 0..max_iter {
        if let StoppingRule::Discrepancy { tau } = cfg.stopping {
            if cfg.noise_level > 0.0 && residual <= tau * cfg.noise_level {
                break;
            }
        }
        if residual == 0.0 {
            break;
        }
        let alpha = alpha0 * cfg.decay.powi(n as i32);
        let sa = alpha.sqrt();
        let mut mat = base.clone();
        let mut rhs = DVector::<f64>::zeros(n_rows);
        let a_start = big_m * rows_per_m;
        for m in 0..big_m {
            for i in 0..modes {
                mat[(a_start + m * modes + i, m * block + i)] = sa;
                rhs[a_start + m * modes + i] = -sa * x.eta[m][i];
            }
            let r0 = m * rows_per_m;
            for i in 0..modes {
                let g = model.get(m + 1, i);
                rhs[r0 + i] = -g.re;
                rhs[r0 + modes + i] = -g.im;
            }
            for s in 0..samples {
                let g = pb.data.values[m][s] - obs.values[m][s];
                rhs[r0 + 2 * modes + s] = g.re;
                rhs[r0 + 2 * modes + samples + s] = g.im;
            }
        }
        let pe = penalty_projection(&x.eta);
        for m in 0..big_m {
            for i in 0..modes {
                rhs[p_start + m * modes + i] = -pe[m][i];
            }
        }
        let step = least_squares(mat, rhs)?;
        for m in 0..big_m {
            let off = m * block;
            for i in 0..modes {
                x.eta[m][i] += step[off + i];
                let du = Complex64::new(step[off + modes + i], step[off + 2 * modes + i]);
                let cur = x.state.get(m + 1, i);
                x.state.set(m + 1, i, cur + du);
            }
        }
        (model, obs) = lifted_forward(&x, pb)?;
        let next = data_norm(&model, &obs, &pb.data);
        if !next.is_finite() {
            return Err(Error::Divergence { iteration: n + 1 });
        }
        increases = if next > residual { increases + 1 } else { 0 };
        if increases >= 5 {
            return Err(Error::Divergence { iteration: n + 1 });
        }
        residual = next;
        stopping_index = n + 1;
        history.push(report(&x, n + 1, residual, alpha));
    }
    Ok(NewtonResult { history, iterate: x, stopping_index })
}

/// min ‖Ax − b‖ by Householder QR; A must have full column rank.
fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let n = a.ncols();
    let qr = a.qr();
    let r = qr.r();
    let scale = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..n).any(|i| r[(i, i)].abs() <= 1e-14 * scale) {
        return Err(Error::LinearSolveFailure("rank-deficient Newton system".into()));
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::LinearSolveFailure("triangular solve failed".into()))
}
