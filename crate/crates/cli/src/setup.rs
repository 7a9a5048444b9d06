//! Builders that turn configuration keys into validated core objects.
//!
//! Parameter invariants are checked here, before any computation runs, and
//! violations surface as configuration errors.

use mhj_core::harmonics::{design_source, SourceProfile};
use mhj_core::physics::{HarmonicConfig, PhysicalParams};
use mhj_core::poles::{NormIndices, PoleSet};
use mhj_core::spectral::{build_basis, default_sample, CoefficientField, Geometry, SpectralBasis};

use crate::config::{CliError, CliResult, Config};

/// Wraps a validation failure with the lines of the keys involved.
fn invalid(cfg: &Config, keys: &[&str], e: mhj_core::Error) -> CliError {
    let lines: Vec<String> = keys.iter().filter_map(|k| cfg.line_of(k).map(|l| format!("{k} (line {l})"))).collect();
    if lines.is_empty() {
        CliError::Config(format!("defaults rejected: {e}"))
    } else {
        CliError::Config(format!("{}: {e}", lines.join(", ")))
    }
}

pub fn model(cfg: &Config) -> CliResult<PhysicalParams> {
    let tau = cfg.f64_or("model.tau", 0.01)?;
    let c = cfg.f64_or("model.c", 1.5)?;
    let delta = cfg.f64_or("model.delta", 6e-7)?;
    let omega0 = cfg.f64_or("model.omega0", 0.0)?;
    PhysicalParams::new(tau, c, delta, omega0).map_err(|e| invalid(cfg, &["model.tau", "model.c", "model.delta", "model.omega0"], e))
}

pub fn harmonics(cfg: &Config) -> CliResult<HarmonicConfig> {
    let period = cfg.f64_or("harmonics.period", 21.0)?;
    let count = cfg.usize_or("harmonics.count", 8)?;
    HarmonicConfig::new(period, count).map_err(|e| invalid(cfg, &["harmonics.period", "harmonics.count"], e))
}

fn pair(cfg: &Config, key: &str, default: [f64; 2]) -> CliResult<[f64; 2]> {
    let v = cfg.f64_list_or(key, &default)?;
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(CliError::Config(format!("line {}: {key} needs exactly two values", cfg.line_of(key).unwrap_or(0)))),
    }
}

fn grid_size(cfg: &Config, v: f64) -> CliResult<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(CliError::Config(format!("line {}: geometry.grid must hold integers", cfg.line_of("geometry.grid").unwrap_or(0))))
    }
}

pub fn geometry(cfg: &Config) -> CliResult<Geometry> {
    let kind = cfg.choice("geometry.kind", &["interval", "rectangle"])?;
    let keys = ["geometry.length", "geometry.lengths", "geometry.grid", "geometry.sigma", "geometry.sigma_from", "geometry.sigma_to"];
    if kind == "interval" {
        let length = cfg.f64_or("geometry.length", 10.0)?;
        let grid = grid_size(cfg, cfg.f64_or("geometry.grid", 64.0)?)?;
        let sigma = cfg.f64_list_or("geometry.sigma", &[default_sample(length)])?;
        Geometry::interval(length, grid, sigma).map_err(|e| invalid(cfg, &keys, e))
    } else {
        let lengths = pair(cfg, "geometry.lengths", [10.0, 10.0])?;
        let g = pair(cfg, "geometry.grid", [32.0, 32.0])?;
        let grid = [grid_size(cfg, g[0])?, grid_size(cfg, g[1])?];
        let from = pair(cfg, "geometry.sigma_from", [0.1 * lengths[0], 0.3 * lengths[1]])?;
        let to = pair(cfg, "geometry.sigma_to", [0.9 * lengths[0], 0.3 * lengths[1]])?;
        let samples = cfg.usize_or("geometry.sigma_samples", 8)?;
        Geometry::rectangle(lengths, grid, from, to, samples).map_err(|e| invalid(cfg, &keys, e))
    }
}

pub fn basis(cfg: &Config, g: &Geometry) -> CliResult<SpectralBasis> {
    let modes = cfg.usize_or("basis.modes", 10)?;
    build_basis(g, modes).map_err(|e| invalid(cfg, &["basis.modes", "geometry.grid"], e))
}

/// Excitation profile; `designed` needs the poles it must match.
pub fn source(cfg: &Config, h: &HarmonicConfig, poles: Option<&PoleSet>) -> CliResult<SourceProfile> {
    let kind = cfg.choice("source.kind", &["gaussian", "pulse", "designed"])?;
    match kind.as_str() {
        "pulse" => Ok(SourceProfile::delta_pulse(h)),
        "gaussian" => {
            let width = cfg.f64_or("source.width", 2.0)?;
            let center = cfg.f64_or("source.center", h.period() / 2.0)?;
            let k_max = cfg.usize_or("source.harmonics", 4)?;
            SourceProfile::gaussian(h, width, center, k_max)
                .map_err(|e| invalid(cfg, &["source.width", "source.center", "source.harmonics"], e))
        }
        _ => {
            let eps = cfg.f64_or("source.epsilon", 0.5)?;
            let probes = poles.map(PoleSet::poles).unwrap_or_default();
            Ok(design_source(h, eps, &probes)?)
        }
    }
}

pub fn indices(cfg: &Config, default_s_check: f64) -> CliResult<NormIndices> {
    Ok(NormIndices {
        s: cfg.f64_or("norms.s", 1.0)?,
        s_check: cfg.f64_or("norms.s_check", default_s_check)?,
        s_ddot: cfg.f64_or("norms.s_ddot", 0.0)?,
        sigma_check: cfg.f64_or("norms.sigma_check", 0.0)?,
        sigma_ddot: cfg.f64_or("norms.sigma_ddot", 0.0)?,
    })
}

/// Sine coefficients of η from `eta.coeffs`, zero-padded to the basis size.
pub fn eta_coeffs(cfg: &Config, basis: &SpectralBasis, default: &[f64]) -> CliResult<Vec<f64>> {
    let mut c = cfg.f64_list_or("eta.coeffs", default)?;
    if c.len() > basis.num_modes() {
        return Err(CliError::Config(format!(
            "line {}: eta.coeffs has {} entries but the basis keeps {} modes",
            cfg.line_of("eta.coeffs").unwrap_or(0),
            c.len(),
            basis.num_modes()
        )));
    }
    c.resize(basis.num_modes(), 0.0);
    Ok(c)
}

pub fn reference_phi(basis: &SpectralBasis) -> CliResult<Vec<f64>> {
    Ok(basis.reference_profile(&basis.default_phi())?)
}

pub fn eta_field(coeffs: &[f64], phi: &[f64], basis: &SpectralBasis) -> CliResult<CoefficientField> {
    Ok(CoefficientField::from_eta_coeffs(coeffs, phi.to_vec(), basis)?)
}

/// Noise level ε relative to the clean data norm, and the generator seed.
pub fn noise(cfg: &Config, seed_override: Option<u64>) -> CliResult<(f64, u64)> {
    let level = cfg.f64_or("noise.level", 0.0)?;
    if level < 0.0 {
        return Err(CliError::Config(format!("line {}: noise.level must be >= 0", cfg.line_of("noise.level").unwrap_or(0))));
    }
    let seed = cfg.u64_or("noise.seed", 0)?;
    Ok((level, seed_override.unwrap_or(seed)))
}
