//! Model parameters and the scalar frequency symbols ϑ, Θ, Ψ.
//!
//! Units are millimetres and microseconds throughout, so c = 1.5 mm/µs is
//! water-like and δ keeps its SI numeric value (1 m²/s = 1 mm²/µs).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Which member of the model hierarchy a parameter set describes.
///
/// Decided by exact zero tests on τ, δ, ω₀ because the analysis changes
/// structurally (cubic vs. quadratic dispersion), not continuously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Jmgt,
    Westervelt,
    WeakDampedWave,
    Wave,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Jmgt => "jmgt",
            ModelFamily::Westervelt => "westervelt",
            ModelFamily::WeakDampedWave => "weak_damped_wave",
            ModelFamily::Wave => "wave",
        }
    }
}

/// JMGT coefficients: relaxation time τ [µs], sound speed c [mm/µs],
/// diffusivity δ [mm²/µs] and weak attenuation ω₀ [1/µs].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    tau: f64,
    c: f64,
    delta: f64,
    omega0: f64,
}

impl PhysicalParams {
    pub fn new(tau: f64, c: f64, delta: f64, omega0: f64) -> Result<Self> {
        let finite = tau.is_finite() && c.is_finite() && delta.is_finite() && omega0.is_finite();
        if !finite {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        if tau < 0.0 {
            return Err(Error::InvalidParameter(format!("tau = {tau} must be >= 0")));
        }
        if c <= 0.0 {
            return Err(Error::InvalidParameter(format!("c = {c} must be > 0")));
        }
        if delta < 0.0 {
            return Err(Error::InvalidParameter(format!("delta = {delta} must be >= 0")));
        }
        if omega0 < 0.0 {
            return Err(Error::InvalidParameter(format!("omega0 = {omega0} must be >= 0")));
        }
        Ok(Self { tau, c, delta, omega0 })
    }

    pub fn jmgt(tau: f64, c: f64, delta: f64) -> Result<Self> {
        Self::new(tau, c, delta, 0.0)
    }

    pub fn westervelt(c: f64, delta: f64) -> Result<Self> {
        Self::new(0.0, c, delta, 0.0)
    }

    pub fn wave(c: f64) -> Result<Self> {
        Self::new(0.0, c, 0.0, 0.0)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn c_sq(&self) -> f64 {
        self.c * self.c
    }

    /// b = τc² + δ.
    pub fn b(&self) -> f64 {
        self.tau * self.c * self.c + self.delta
    }

    /// c̃² = c² + δ/τ, only meaningful for τ > 0.
    pub fn c_tilde_sq(&self) -> Option<f64> {
        (self.tau > 0.0).then(|| self.c * self.c + self.delta / self.tau)
    }

    pub fn family(&self) -> ModelFamily {
        if self.tau > 0.0 {
            ModelFamily::Jmgt
        } else if self.delta > 0.0 {
            ModelFamily::Westervelt
        } else if self.omega0 > 0.0 {
            ModelFamily::WeakDampedWave
        } else {
            ModelFamily::Wave
        }
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(tau, self.c, self.delta, self.omega0)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.tau, self.c, delta, self.omega0)
    }
}

/// ϑ(o) = τo³ + o² + ω₀o.
pub fn vartheta(o: Complex64, p: &PhysicalParams) -> Complex64 {
    ((o * p.tau + 1.0) * o + p.omega0) * o
}

/// Θ(o) = c²(τo + 1) + δo.
pub fn big_theta(o: Complex64, p: &PhysicalParams) -> Complex64 {
    o * p.b() + p.c_sq()
}

/// ϑ'(o) = 3τo² + 2o + ω₀.
pub fn vartheta_prime(o: Complex64, p: &PhysicalParams) -> Complex64 {
    (o * (3.0 * p.tau) + 2.0) * o + p.omega0
}

/// Θ'(o) = τc² + δ.
pub fn big_theta_prime(p: &PhysicalParams) -> f64 {
    p.b()
}

fn check_theta(o: Complex64, theta: Complex64, p: &PhysicalParams) -> Result<()> {
    let scale = p.c_sq() + p.b() * o.norm();
    if theta.norm() <= 1e-14 * scale {
        Err(Error::DegenerateSymbol { o })
    } else {
        Ok(())
    }
}

/// Ψ(o) = −ϑ(o)/Θ(o).
pub fn psi_symbol(o: Complex64, p: &PhysicalParams) -> Result<Complex64> {
    let theta = big_theta(o, p);
    check_theta(o, theta, p)?;
    Ok(-vartheta(o, p) / theta)
}

/// Ψ'(o) = −(ϑ'Θ − ϑΘ')/Θ².
pub fn psi_prime(o: Complex64, p: &PhysicalParams) -> Result<Complex64> {
    let theta = big_theta(o, p);
    check_theta(o, theta, p)?;
    let num = vartheta_prime(o, p) * theta - vartheta(o, p) * big_theta_prime(p);
    Ok(-num / (theta * theta))
}

/// Period, fundamental frequency and number of retained harmonics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicConfig {
    period: f64,
    omega: f64,
    harmonics: usize,
}

impl HarmonicConfig {
    pub fn new(period: f64, harmonics: usize) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidParameter(format!("period = {period} must be > 0")));
        }
        if harmonics == 0 {
            return Err(Error::InvalidParameter("at least one harmonic is required".into()));
        }
        Ok(Self { period, omega: 2.0 * PI / period, harmonics })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    pub fn with_harmonics(&self, harmonics: usize) -> Result<Self> {
        Self::new(self.period, harmonics)
    }
}

/// o_m = i·m·ω.
pub fn frequency_node(m: usize, cfg: &HarmonicConfig) -> Complex64 {
    Complex64::new(0.0, m as f64 * cfg.omega())
}
