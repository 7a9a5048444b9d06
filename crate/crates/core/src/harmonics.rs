//! Multiharmonic state algebra.
//!
//! A T-periodic real field is stored by its complex temporal coefficients,
//! u(t) = Re Σ_m û_m e^{imωt}, with each û_m expanded in the sine basis.
//! Under this convention û_m = (2/T)∫₀ᵀ u(t)e^{−imωt}dt, and the quadratic
//! coupling B_m reproduces that coefficient for a pointwise product.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::physics::{frequency_node, HarmonicConfig, PhysicalParams};
use crate::poles::PoleEntry;
use crate::spectral::SpectralBasis;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Truncated harmonic vector (û_m)_{m=1..M}, one coefficient array per m.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicField {
    harmonics: usize,
    modes: usize,
    coeffs: Vec<Complex64>,
}

impl HarmonicField {
    pub fn zeros(harmonics: usize, modes: usize) -> Self {
        Self { harmonics, modes, coeffs: vec![ZERO; harmonics * modes] }
    }

    /// Builds a field from `f(m, mode)` with m starting at 1.
    pub fn from_fn(harmonics: usize, modes: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut coeffs = Vec::with_capacity(harmonics * modes);
        for m in 1..=harmonics {
            for i in 0..modes {
                coeffs.push(f(m, i));
            }
        }
        Self { harmonics, modes, coeffs }
    }

    /// Takes per-harmonic coefficient arrays, all of equal length.
    pub fn from_harmonics(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let modes = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != modes) {
            return Err(Error::ShapeMismatch { expected: modes, got: bad.len() });
        }
        let harmonics = rows.len();
        Ok(Self { harmonics, modes, coeffs: rows.into_iter().flatten().collect() })
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Coefficients of harmonic m (1-based).
    pub fn harmonic(&self, m: usize) -> &[Complex64] {
        &self.coeffs[(m - 1) * self.modes..m * self.modes]
    }

    pub fn harmonic_mut(&mut self, m: usize) -> &mut [Complex64] {
        &mut self.coeffs[(m - 1) * self.modes..m * self.modes]
    }

    pub fn get(&self, m: usize, mode: usize) -> Complex64 {
        self.coeffs[(m - 1) * self.modes + mode]
    }

    pub fn set(&mut self, m: usize, mode: usize, value: Complex64) {
        self.coeffs[(m - 1) * self.modes + mode] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn check_compatible(&self, other: &HarmonicField) -> Result<()> {
        if self.harmonics != other.harmonics || self.modes != other.modes {
            return Err(Error::ConfigMismatch(format!(
                "fields of shape {}x{} and {}x{}",
                self.harmonics, self.modes, other.harmonics, other.modes
            )));
        }
        Ok(())
    }

    pub fn check_basis(&self, basis: &SpectralBasis) -> Result<()> {
        if self.modes != basis.num_modes() {
            return Err(Error::ConfigMismatch(format!(
                "field has {} modes, basis has {}",
                self.modes,
                basis.num_modes()
            )));
        }
        Ok(())
    }

    /// h⁰(L²) norm, i.e. the Frobenius norm of all coefficients.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &HarmonicField) -> Result<HarmonicField> {
        self.check_compatible(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self { coeffs, ..*self })
    }

    pub fn sub(&self, other: &HarmonicField) -> Result<HarmonicField> {
        self.check_compatible(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self { coeffs, ..*self })
    }

    pub fn scale(&self, factor: Complex64) -> HarmonicField {
        Self { coeffs: self.coeffs.iter().map(|c| c * factor).collect(), ..*self }
    }
}

/// Grid values of every harmonic of a field.
pub fn field_to_grid(u: &HarmonicField, basis: &SpectralBasis) -> Result<Vec<Vec<Complex64>>> {
    u.check_basis(basis)?;
    (1..=u.harmonics())
        .into_par_iter()
        .map(|m| basis.synthesize_complex(u.harmonic(m)))
        .collect()
}

/// B_m on grid values, tails capped at min(k_tail, M − m).
///
/// ½Σ_{ℓ<m} u_ℓ v_{m−ℓ} + ½Σ_k conj(u_k) v_{k+m} + ½Σ_k u_{m+k} conj(v_k).
pub fn b_coupling_grid(u: &[Vec<Complex64>], v: &[Vec<Complex64>], m: usize, k_tail: usize) -> Vec<Complex64> {
    let big_m = u.len();
    let n = u.first().map_or(0, Vec::len);
    let mut out = vec![ZERO; n];
    for l in 1..m {
        if l > big_m || m - l > big_m {
            continue;
        }
        let (a, b) = (&u[l - 1], &v[m - l - 1]);
        for i in 0..n {
            out[i] += a[i] * b[i];
        }
    }
    let tail = k_tail.min(big_m.saturating_sub(m));
    for k in 1..=tail {
        let (uk, vkm) = (&u[k - 1], &v[k + m - 1]);
        let (umk, vk) = (&u[k + m - 1], &v[k - 1]);
        for i in 0..n {
            out[i] += uk[i].conj() * vkm[i] + umk[i] * vk[i].conj();
        }
    }
    for o in &mut out {
        *o *= 0.5;
    }
    out
}

/// Coefficients of B_m(u, v) in the basis (pseudospectral product).
pub fn b_coupling(
    u: &HarmonicField,
    v: &HarmonicField,
    m: usize,
    k_tail: usize,
    basis: &SpectralBasis,
) -> Result<Vec<Complex64>> {
    u.check_compatible(v)?;
    if m == 0 || m > u.harmonics() {
        return Err(Error::InvalidParameter(format!("harmonic index {m} outside 1..={}", u.harmonics())));
    }
    let ug = field_to_grid(u, basis)?;
    let vg = field_to_grid(v, basis)?;
    basis.project_complex(&b_coupling_grid(&ug, &vg, m, k_tail))
}

/// All B_m(u, v), m = 1..M, with full tails.
pub fn b_coupling_all(u: &HarmonicField, v: &HarmonicField, basis: &SpectralBasis) -> Result<HarmonicField> {
    u.check_compatible(v)?;
    let ug = field_to_grid(u, basis)?;
    let vg = field_to_grid(v, basis)?;
    let big_m = u.harmonics();
    let rows = (1..=big_m)
        .into_par_iter()
        .map(|m| basis.project_complex(&b_coupling_grid(&ug, &vg, m, big_m)))
        .collect::<Result<Vec<_>>>()?;
    HarmonicField::from_harmonics(rows)
}

/// (Σ_m (mω)^{2σ} Σ_{j,k} λ_j^s |b_m^{j,k}|²)^{1/2}.
pub fn hsigma_hs_norm(
    u: &HarmonicField,
    cfg: &HarmonicConfig,
    basis: &SpectralBasis,
    sigma: f64,
    s: f64,
) -> Result<f64> {
    u.check_basis(basis)?;
    let mut acc = 0.0;
    for m in 1..=u.harmonics() {
        let w = (m as f64 * cfg.omega()).powf(2.0 * sigma);
        let inner: f64 = u
            .harmonic(m)
            .iter()
            .enumerate()
            .map(|(i, c)| basis.mode_eigenvalue(i).powf(s) * c.norm_sqr())
            .sum();
        acc += w * inner;
    }
    Ok(acc.sqrt())
}

/// (e^z − 1)/z, continuous at z = 0.
pub fn exprel(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..=22 {
            term = term * z / k as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// Laplace-type transform (2/T)∫₀ᵀ f(t)e^{−ot}dt of f = Re Σ_{m≥1} f_m e^{imωt}.
///
/// Exact for trigonometric polynomials, so it realises the analytic
/// extension of the harmonic coefficients: at o = imω it returns f_m.
pub fn laplace_extension(coeffs: &[Complex64], o: Complex64, cfg: &HarmonicConfig) -> Complex64 {
    let t = cfg.period();
    let w = cfg.omega();
    let mut acc = ZERO;
    for (idx, f) in coeffs.iter().enumerate() {
        let n = (idx + 1) as f64;
        let up = exprel((Complex64::new(0.0, n * w) - o) * t);
        let down = exprel((Complex64::new(0.0, -n * w) - o) * t);
        acc += f * up + f.conj() * down;
    }
    acc
}

/// How the excitation ψ is represented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    /// The ideal limit ψ² = δ_T; no ψ harmonics exist.
    DeltaPulse,
    /// Periodised Gaussian bump of the given width centred at `center`.
    Mollified { width: f64, center: f64 },
    /// User supplied samples or harmonics.
    Samples,
}

/// Temporal excitation ψ, its couplings 𝔅_m = B_m(ψ⃗, ψ⃗) and the analytic
/// extension 𝔅̃(o) = (2/T)∫ψ²e^{−ot}dt.
#[derive(Debug, Clone)]
pub struct SourceProfile {
    kind: SourceKind,
    cfg: HarmonicConfig,
    psi: Vec<Complex64>,
    /// e^{inωt} coefficients of ψ², index n + 2K for n = −2K..2K.
    square: Vec<Complex64>,
}

impl SourceProfile {
    pub fn delta_pulse(cfg: &HarmonicConfig) -> Self {
        Self { kind: SourceKind::DeltaPulse, cfg: *cfg, psi: Vec::new(), square: Vec::new() }
    }

    /// ψ from its harmonics ψ_1..ψ_K (zero mean by construction).
    pub fn from_harmonics(cfg: &HarmonicConfig, psi: Vec<Complex64>) -> Result<Self> {
        Self::with_kind(cfg, psi, SourceKind::Samples)
    }

    /// ψ from uniform samples on [0, T); the mean is removed and only
    /// harmonics below the Nyquist index are kept.
    pub fn from_samples(cfg: &HarmonicConfig, samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 4 {
            return Err(Error::InvalidParameter("need at least 4 time samples".into()));
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let k_max = (n - 1) / 2;
        let psi = buf[1..=k_max].iter().map(|c| c * (2.0 / n as f64)).collect();
        Self::with_kind(cfg, psi, SourceKind::Samples)
    }

    /// Gaussian bump with standard deviation `width` centred at `center`,
    /// truncated to `k_max` harmonics, normalised so that ∫ψ² = 1.
    pub fn gaussian(cfg: &HarmonicConfig, width: f64, center: f64, k_max: usize) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidParameter(format!("width {width} must be > 0")));
        }
        if k_max == 0 {
            return Err(Error::InvalidParameter("need at least one harmonic".into()));
        }
        let w = cfg.omega();
        let mut psi: Vec<Complex64> = (1..=k_max)
            .map(|k| {
                let kw = k as f64 * w;
                Complex64::from_polar((-0.5 * (kw * width).powi(2)).exp(), -kw * center)
            })
            .collect();
        let energy = 0.5 * cfg.period() * psi.iter().map(Complex64::norm_sqr).sum::<f64>();
        if energy <= 0.0 || !energy.is_finite() {
            return Err(Error::SourceDesign("bump has no energy in the retained harmonics".into()));
        }
        let scale = energy.sqrt().recip();
        for c in &mut psi {
            *c *= scale;
        }
        Self::with_kind(cfg, psi, SourceKind::Mollified { width, center })
    }

    fn with_kind(cfg: &HarmonicConfig, psi: Vec<Complex64>, kind: SourceKind) -> Result<Self> {
        if psi.is_empty() {
            return Err(Error::InvalidParameter("source needs at least one harmonic".into()));
        }
        if psi.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::InvalidParameter("non-finite source harmonic".into()));
        }
        let square = square_coefficients(&psi);
        Ok(Self { kind, cfg: *cfg, psi, square })
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn config(&self) -> &HarmonicConfig {
        &self.cfg
    }

    /// Number of stored ψ harmonics (zero for the ideal pulse).
    pub fn num_harmonics(&self) -> usize {
        self.psi.len()
    }

    /// ψ_m, zero beyond the stored harmonics.
    pub fn psi(&self, m: usize) -> Complex64 {
        if m >= 1 && m <= self.psi.len() {
            self.psi[m - 1]
        } else {
            ZERO
        }
    }

    pub fn psi_harmonics(&self) -> &[Complex64] {
        &self.psi
    }

    /// 𝔅̃(o) = (2/T)∫₀ᵀψ²(t)e^{−ot}dt.
    pub fn frak_b_tilde(&self, o: Complex64) -> Complex64 {
        let t = self.cfg.period();
        match self.kind {
            SourceKind::DeltaPulse => (-o * t).exp() * (2.0 / t),
            _ => {
                let k2 = (self.square.len() / 2) as i64;
                let w = self.cfg.omega();
                let mut acc = ZERO;
                for (idx, c) in self.square.iter().enumerate() {
                    let n = idx as i64 - k2;
                    acc += c * exprel((Complex64::new(0.0, n as f64 * w) - o) * t);
                }
                acc * 2.0
            }
        }
    }

    /// 𝔅_m = 𝔅̃(imω).
    pub fn frak_b(&self, m: usize) -> Complex64 {
        match self.kind {
            SourceKind::DeltaPulse => Complex64::new(2.0 / self.cfg.period(), 0.0),
            _ => {
                let k2 = self.square.len() / 2;
                self.square.get(k2 + m).map_or(ZERO, |c| c * 2.0)
            }
        }
    }

    pub fn frak_b_vec(&self, harmonics: usize) -> Vec<Complex64> {
        (1..=harmonics).map(|m| self.frak_b(m)).collect()
    }

    /// ψ(t) from the stored harmonics.
    pub fn eval(&self, t: f64) -> f64 {
        let w = self.cfg.omega();
        self.psi
            .iter()
            .enumerate()
            .map(|(i, c)| (c * Complex64::from_polar(1.0, (i + 1) as f64 * w * t)).re)
            .sum()
    }
}

/// e^{inωt} coefficients of ψ² for ψ = Re Σ_k ψ_k e^{ikωt}.
fn square_coefficients(psi: &[Complex64]) -> Vec<Complex64> {
    let k = psi.len() as i64;
    // Two-sided coefficients a_n, n = −K..K, of ψ itself.
    let mut a = vec![ZERO; (2 * k + 1) as usize];
    for (i, c) in psi.iter().enumerate() {
        let n = i as i64 + 1;
        a[(k + n) as usize] = c * 0.5;
        a[(k - n) as usize] = c.conj() * 0.5;
    }
    let out_len = (4 * k + 1) as usize;
    if k <= 128 {
        let mut out = vec![ZERO; out_len];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in a.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    } else {
        let n = out_len.next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut buf = vec![ZERO; n];
        buf[..a.len()].copy_from_slice(&a);
        fwd.process(&mut buf);
        for b in &mut buf {
            *b = *b * *b;
        }
        inv.process(&mut buf);
        buf.truncate(out_len);
        for b in &mut buf {
            *b /= n as f64;
        }
        buf
    }
}

/// Mollified end-of-period pulse whose couplings mimic the ideal pulse.
///
/// Halves the bump width until |𝔅_m − 2/T| ≤ ε/T for m ≤ M and
/// |𝔅̃(p) − (2/T)e^{−pT}| ≤ (ε/T)e^{−Re(p)T} at every probe p (typically the
/// poles that enter the reconstruction). By the triangle inequality
/// |𝔅_m| ≤ (2 + ε)/T and |𝔅̃(p)| ≥ (2 − ε)e^{−Re(p)T}/T, so ε = ½ gives the
/// lower bound e^{−Re(p)T}/(2T) with room to spare.
pub fn design_source(cfg: &HarmonicConfig, epsilon: f64, probes: &[Complex64]) -> Result<SourceProfile> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must lie in (0, 1/2]")));
    }
    let t = cfg.period();
    let ideal = SourceProfile::delta_pulse(cfg);
    let mut width = t / 16.0;
    let min_width = t / 16384.0;
    while width >= min_width {
        // Harmonics beyond kω·w ≈ 8.5 carry below 1e-15 of the amplitude.
        let k_max = ((8.5 / (cfg.omega() * width)).ceil() as usize).max(cfg.harmonics());
        let src = SourceProfile::gaussian(cfg, width, t - 4.0 * width, k_max)?;
        let nodes_ok = (1..=cfg.harmonics()).all(|m| (src.frak_b(m) - 2.0 / t).norm() <= epsilon / t);
        let probes_ok = probes.iter().all(|&p| {
            let dev = (src.frak_b_tilde(p) - ideal.frak_b_tilde(p)).norm();
            dev <= epsilon / t * (-p.re * t).exp()
        });
        if nodes_ok && probes_ok {
            return Ok(src);
        }
        width *= 0.5;
    }
    Err(Error::SourceDesign(format!("no bump of width >= {min_width:e} meets epsilon = {epsilon}")))
}

/// Exponents (κ₁, κ₂) of the amplification bound plus an empirical check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaReport {
    pub kappa1: f64,
    pub kappa2: f64,
    /// Least-squares slope of ln(−Re p) (σ̈ = 0, halved) or ln|p| (σ̈ = 1)
    /// against ln λ over the upper three quarters of the supplied poles.
    pub empirical: f64,
}

pub fn kappa_exponents(p: &PhysicalParams, sigma_ddot: u8, poles: &[PoleEntry]) -> Result<KappaReport> {
    let tau_pos = p.tau() > 0.0;
    let delta_pos = p.delta() > 0.0;
    let kappa1 = match (tau_pos, delta_pos, sigma_ddot) {
        (true, true, 0) => 0.125,
        (true, _, 1) => 0.5,
        (false, true, 0) => 0.5,
        (false, true, 1) => 1.0,
        _ => {
            return Err(Error::UnsupportedRegime(format!(
                "tau = {}, delta = {}, sigma_ddot = {sigma_ddot}",
                p.tau(),
                p.delta()
            )))
        }
    };
    if poles.len() < 4 {
        return Err(Error::InvalidParameter("need at least 4 poles for the exponent fit".into()));
    }
    let start = poles.len() / 4;
    let pts: Vec<(f64, f64)> = poles[start..]
        .iter()
        .map(|e| {
            let y = if sigma_ddot == 0 { 0.5 * (-e.pole.re).ln() } else { e.pole.norm().ln() };
            (e.lambda.ln(), y)
        })
        .collect();
    Ok(KappaReport { kappa1, kappa2: 0.0, empirical: ls_slope(&pts) })
}

/// Least-squares slope of y against x.
pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Nodes o_1..o_M of a configuration.
pub fn nodes(cfg: &HarmonicConfig) -> Vec<Complex64> {
    (1..=cfg.harmonics()).map(|m| frequency_node(m, cfg)).collect()
}
