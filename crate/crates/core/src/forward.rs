//! Harmonic-balance solver for the truncated system
//! L_m û_m + P[η B_m(û, û)] = r̂_m, m = 1..M, plus observation and noise.
//!
//! L_m acts diagonally in the eigenbasis with the factor
//! (ϑ(o_m) + Θ(o_m)λ_j)/o_m², so the linear part is inverted exactly and the
//! nonlinearity is handled by Picard sweeps or by Newton on the real-split
//! system.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harmonics::{b_coupling_grid, field_to_grid, HarmonicField, SourceProfile};
use crate::physics::{big_theta, frequency_node, vartheta, HarmonicConfig, PhysicalParams};
use crate::spectral::{CoefficientField, SpectralBasis};

/// Diagonal factors below this fraction of max(|ϑ|, |Θ|λ) count as a
/// collision of a frequency node with a pole.
pub const POLE_COLLISION_THRESHOLD: f64 = 1e-8;

/// (ϑ(o_m) + Θ(o_m)λ_j)/o_m² for every harmonic and mode, harmonic-major.
pub fn diagonal_factors(p: &PhysicalParams, cfg: &HarmonicConfig, basis: &SpectralBasis) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(cfg.harmonics() * basis.num_modes());
    for m in 1..=cfg.harmonics() {
        let o = frequency_node(m, cfg);
        let th = vartheta(o, p);
        let bt = big_theta(o, p);
        let o2 = o * o;
        for i in 0..basis.num_modes() {
            let lam = basis.mode_eigenvalue(i);
            let d = th + bt * lam;
            if d.norm() <= POLE_COLLISION_THRESHOLD * th.norm().max(bt.norm() * lam) {
                return Err(Error::PoleCollision { m, j: basis.mode_space(i) + 1 });
            }
            out.push(d / o2);
        }
    }
    Ok(out)
}

fn check_field(u: &HarmonicField, cfg: &HarmonicConfig, basis: &SpectralBasis) -> Result<()> {
    if u.harmonics() != cfg.harmonics() {
        return Err(Error::ConfigMismatch(format!(
            "field has {} harmonics, configuration {}",
            u.harmonics(),
            cfg.harmonics()
        )));
    }
    u.check_basis(basis)
}

/// Projected L_m applied to every harmonic.
pub fn apply_lm_projected(
    u: &HarmonicField,
    p: &PhysicalParams,
    cfg: &HarmonicConfig,
    basis: &SpectralBasis,
) -> Result<HarmonicField> {
    check_field(u, cfg, basis)?;
    let d = diagonal_factors(p, cfg, basis)?;
    let mut out = u.clone();
    for (c, f) in out.as_mut_slice().iter_mut().zip(&d) {
        *c *= f;
    }
    Ok(out)
}

/// Inverse of [`apply_lm_projected`].
pub fn solve_diagonal(
    r: &HarmonicField,
    p: &PhysicalParams,
    cfg: &HarmonicConfig,
    basis: &SpectralBasis,
) -> Result<HarmonicField> {
    check_field(r, cfg, basis)?;
    let d = diagonal_factors(p, cfg, basis)?;
    let mut out = r.clone();
    for (c, f) in out.as_mut_slice().iter_mut().zip(&d) {
        *c /= f;
    }
    Ok(out)
}

/// P[η·B_m(u, v)] for every m, with η given on the grid.
pub fn eta_coupling(
    eta: &[f64],
    u: &HarmonicField,
    v: &HarmonicField,
    basis: &SpectralBasis,
) -> Result<HarmonicField> {
    u.check_compatible(v)?;
    let ug = field_to_grid(u, basis)?;
    let vg = if std::ptr::eq(u, v) { ug.clone() } else { field_to_grid(v, basis)? };
    eta_coupling_grid(eta, &ug, &vg, basis)
}

fn eta_coupling_grid(
    eta: &[f64],
    ug: &[Vec<Complex64>],
    vg: &[Vec<Complex64>],
    basis: &SpectralBasis,
) -> Result<HarmonicField> {
    let big_m = ug.len();
    let rows = (1..=big_m)
        .into_par_iter()
        .map(|m| {
            let mut b = b_coupling_grid(ug, vg, m, big_m);
            for (x, e) in b.iter_mut().zip(eta) {
                *x *= e;
            }
            basis.project_complex(&b)
        })
        .collect::<Result<Vec<_>>>()?;
    HarmonicField::from_harmonics(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    Picard,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Stopping threshold on ‖Lû + P[ηB(û,û)] − r̂‖ relative to ‖r̂‖.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { method: SolverMethod::Picard, tolerance: 1e-13, max_iterations: 200 }
    }
}

/// Everything that defines one forward solve.
#[derive(Debug, Clone)]
pub struct ForwardProblem<'a> {
    pub params: PhysicalParams,
    pub cfg: HarmonicConfig,
    pub basis: &'a SpectralBasis,
    pub eta: CoefficientField,
    pub source: HarmonicField,
    pub options: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub state: HarmonicField,
    /// Residual norm after each iteration (the last one is below tolerance).
    pub residuals: Vec<f64>,
}

impl ForwardSolution {
    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

impl ForwardProblem<'_> {
    fn validate(&self) -> Result<Vec<Complex64>> {
        check_field(&self.source, &self.cfg, self.basis)?;
        if self.eta.grid_values().len() != self.basis.grid_len() {
            return Err(Error::ShapeMismatch { expected: self.basis.grid_len(), got: self.eta.grid_values().len() });
        }
        // Products of two band-limited fields need twice the bandwidth on
        // the grid to be projected without aliasing.
        let grid = self.basis.geometry().grid_sizes();
        for (axis, &n) in grid.iter().enumerate() {
            let top = (0..self.basis.num_modes()).map(|i| self.basis.mode(i)[axis]).max().unwrap_or(0);
            if n < 2 * top {
                return Err(Error::UnderResolved { grid: n, modes: 2 * top });
            }
        }
        diagonal_factors(&self.params, &self.cfg, self.basis)
    }

    /// Lû + P[ηB(û,û)] − r̂.
    pub fn residual(&self, u: &HarmonicField) -> Result<HarmonicField> {
        let d = diagonal_factors(&self.params, &self.cfg, self.basis)?;
        self.residual_with(u, &d)
    }

    fn residual_with(&self, u: &HarmonicField, d: &[Complex64]) -> Result<HarmonicField> {
        let nl = eta_coupling(self.eta.grid_values(), u, u, self.basis)?;
        let mut out = nl;
        for ((o, x), (f, r)) in out.as_mut_slice().iter_mut().zip(u.as_slice()).zip(d.iter().zip(self.source.as_slice())) {
            *o += f * x - r;
        }
        Ok(out)
    }

    fn threshold(&self) -> f64 {
        let scale = self.source.norm();
        if scale > 0.0 {
            self.options.tolerance * scale
        } else {
            self.options.tolerance
        }
    }
}

pub fn solve_forward(pb: &ForwardProblem) -> Result<ForwardSolution> {
    let d = pb.validate()?;
    match pb.options.method {
        SolverMethod::Picard => picard(pb, &d),
        SolverMethod::Newton => newton(pb, &d),
    }
}

fn divide(r: &HarmonicField, d: &[Complex64]) -> HarmonicField {
    let mut out = r.clone();
    for (c, f) in out.as_mut_slice().iter_mut().zip(d) {
        *c /= f;
    }
    out
}

fn picard(pb: &ForwardProblem, d: &[Complex64]) -> Result<ForwardSolution> {
    let tol = pb.threshold();
    let mut u = divide(&pb.source, d);
    let mut residuals = Vec::new();
    let mut relax = 1.0;
    let mut prev = f64::INFINITY;
    for _ in 0..pb.options.max_iterations {
        let res = pb.residual_with(&u, d)?.norm();
        residuals.push(res);
        if !res.is_finite() {
            break;
        }
        if res <= tol {
            return Ok(ForwardSolution { state: u, residuals });
        }
        if res > prev && relax == 1.0 {
            relax = 0.5;
        }
        prev = res;
        let nl = eta_coupling(pb.eta.grid_values(), &u, &u, pb.basis)?;
        let update = divide(&pb.source.sub(&nl)?, d);
        u = u.scale(Complex64::new(1.0 - relax, 0.0)).add(&update.scale(Complex64::new(relax, 0.0)))?;
    }
    Err(Error::NoConvergence { residuals })
}

fn to_real(u: &HarmonicField) -> DVector<f64> {
    let n = u.as_slice().len();
    DVector::from_fn(2 * n, |k, _| if k < n { u.as_slice()[k].re } else { u.as_slice()[k - n].im })
}

fn from_real(z: &DVector<f64>, template: &HarmonicField) -> HarmonicField {
    let n = template.as_slice().len();
    let mut out = template.clone();
    for (k, c) in out.as_mut_slice().iter_mut().enumerate() {
        *c = Complex64::new(z[k], z[k + n]);
    }
    out
}

fn newton(pb: &ForwardProblem, d: &[Complex64]) -> Result<ForwardSolution> {
    let tol = pb.threshold();
    let big_m = pb.cfg.harmonics();
    let modes = pb.basis.num_modes();
    let n = big_m * modes;
    let mut u = divide(&pb.source, d);
    let mut residuals = Vec::new();
    for _ in 0..pb.options.max_iterations {
        let res_field = pb.residual_with(&u, d)?;
        let res = res_field.norm();
        residuals.push(res);
        if !res.is_finite() {
            break;
        }
        if res <= tol {
            return Ok(ForwardSolution { state: u, residuals });
        }
        // Real-linear Jacobian v ↦ Lv + P[η(B(v,u) + B(u,v))], one column
        // per real unknown.
        let ug = field_to_grid(&u, pb.basis)?;
        let cols: Vec<DVector<f64>> = (0..2 * n)
            .into_par_iter()
            .map(|k| {
                let mut v = HarmonicField::zeros(big_m, modes);
                let unit = if k < n { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
                v.as_mut_slice()[k % n] = unit;
                let vg = field_to_grid(&v, pb.basis)?;
                let a = eta_coupling_grid(pb.eta.grid_values(), &vg, &ug, pb.basis)?;
                let b = eta_coupling_grid(pb.eta.grid_values(), &ug, &vg, pb.basis)?;
                let mut col = a.add(&b)?;
                col.as_mut_slice()[k % n] += d[k % n] * unit;
                Ok(to_real(&col))
            })
            .collect::<Result<Vec<_>>>()?;
        let jac = DMatrix::from_columns(&cols);
        let rhs = -to_real(&res_field);
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::LinearSolveFailure("singular Newton Jacobian".into()))?;
        u = u.add(&from_real(&step, &u))?;
    }
    Err(Error::NoConvergence { residuals })
}

/// Observation data p̂_m on Σ, harmonic-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationData {
    pub values: Vec<Vec<Complex64>>,
    pub noise_level: f64,
}

impl ObservationData {
    pub fn norm(&self) -> f64 {
        self.values.iter().flatten().map(Complex64::norm_sqr).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &ObservationData) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

pub fn observe(u: &HarmonicField, basis: &SpectralBasis) -> Result<ObservationData> {
    let values = (1..=u.harmonics()).map(|m| basis.trace_on_sigma(u.harmonic(m))).collect::<Result<_>>()?;
    Ok(ObservationData { values, noise_level: 0.0 })
}

/// Adds complex Gaussian noise rescaled to have norm exactly `epsilon`.
pub fn add_noise(d: &ObservationData, epsilon: f64, seed: u64) -> Result<ObservationData> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level {epsilon} must be >= 0")));
    }
    if epsilon == 0.0 {
        return Ok(d.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Vec<Complex64>> = d
        .values
        .iter()
        .map(|row| {
            row.iter()
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im)
                })
                .collect()
        })
        .collect();
    let norm = noise.iter().flatten().map(Complex64::norm_sqr).sum::<f64>().sqrt();
    let scale = epsilon / norm;
    let values = d
        .values
        .iter()
        .zip(&noise)
        .map(|(row, nrow)| row.iter().zip(nrow).map(|(v, n)| v + n * scale).collect())
        .collect();
    Ok(ObservationData { values, noise_level: epsilon })
}

/// Space-frequency separable reference state û⁰_m = P(φ)·ψ_m and the
/// source r⁰ = Lû⁰ for which F(0, û⁰) = r⁰.
pub fn reference_state(
    phi: &[f64],
    source: &SourceProfile,
    basis: &SpectralBasis,
    cfg: &HarmonicConfig,
    p: &PhysicalParams,
) -> Result<(HarmonicField, HarmonicField)> {
    let phi_coeffs = basis.project(phi)?;
    let u0 = HarmonicField::from_fn(cfg.harmonics(), basis.num_modes(), |m, i| source.psi(m) * phi_coeffs[i]);
    let r0 = apply_lm_projected(&u0, p, cfg, basis)?;
    Ok((u0, r0))
}

/// F'(0, û⁰)[η̃, v] = Lv + P[η̃ B(û⁰, û⁰)] (model part).
pub fn linearized_model(
    eta_dir: &[f64],
    v: &HarmonicField,
    u0: &HarmonicField,
    p: &PhysicalParams,
    cfg: &HarmonicConfig,
    basis: &SpectralBasis,
) -> Result<HarmonicField> {
    let lin = apply_lm_projected(v, p, cfg, basis)?;
    lin.add(&eta_coupling(eta_dir, u0, u0, basis)?)
}

/// Projected F'(0, û⁰)[η̃, v] for the separable reference state, with
/// a = P(φ²η̃) given directly: r_m = L_m v_m + 𝔅_m a and p_m = tr v_m.
///
/// Unlike [`linearized_model`] this uses the exact couplings 𝔅_m of the
/// source, so it also covers the ideal pulse, which has no harmonics.
pub fn linearized_projected(
    a: &[Complex64],
    v: &HarmonicField,
    source: &SourceProfile,
    p: &PhysicalParams,
    cfg: &HarmonicConfig,
    basis: &SpectralBasis,
) -> Result<(HarmonicField, ObservationData)> {
    if a.len() != basis.num_modes() {
        return Err(Error::ShapeMismatch { expected: basis.num_modes(), got: a.len() });
    }
    let mut r = apply_lm_projected(v, p, cfg, basis)?;
    for m in 1..=cfg.harmonics() {
        let fb = source.frak_b(m);
        for (x, c) in r.harmonic_mut(m).iter_mut().zip(a) {
            *x += fb * c;
        }
    }
    Ok((r, observe(v, basis)?))
}
