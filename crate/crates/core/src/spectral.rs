//! Dirichlet-Laplacian sine basis on an interval or a rectangle.
//!
//! Grids are uniform with the boundary excluded, x_i = i·L/(N+1), i = 1..N,
//! so the discrete sine transform is exactly orthonormal with weight
//! h = L/(N+1) and Parseval holds to rounding for band-limited fields.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Above this many modes the 1D transforms go through an FFT.
const DIRECT_TRANSFORM_LIMIT: usize = 64;

/// Domain, grid and observation manifold Σ.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Interval { length: f64, grid: usize, sigma: Vec<f64> },
    Rectangle { lengths: [f64; 2], grid: [usize; 2], sigma: Vec<[f64; 2]> },
}

impl Geometry {
    pub fn interval(length: f64, grid: usize, sigma: Vec<f64>) -> Result<Self> {
        check_length(length)?;
        check_grid(grid)?;
        if sigma.is_empty() {
            return Err(Error::InvalidParameter("observation set is empty".into()));
        }
        if let Some(x) = sigma.iter().find(|x| !(0.0..=length).contains(*x)) {
            return Err(Error::InvalidParameter(format!("sample {x} outside [0, {length}]")));
        }
        Ok(Geometry::Interval { length, grid, sigma })
    }

    /// Interval observed at the single point L(√2 − 1). The irrational ratio
    /// keeps every sin(nπx₀/L) away from zero.
    pub fn interval_default(length: f64, grid: usize) -> Result<Self> {
        Self::interval(length, grid, vec![default_sample(length)])
    }

    /// Rectangle observed at `samples` equispaced points on the straight
    /// segment from `from` to `to` (endpoints included when `samples > 1`).
    pub fn rectangle(
        lengths: [f64; 2],
        grid: [usize; 2],
        from: [f64; 2],
        to: [f64; 2],
        samples: usize,
    ) -> Result<Self> {
        for &l in &lengths {
            check_length(l)?;
        }
        for &n in &grid {
            check_grid(n)?;
        }
        if samples == 0 {
            return Err(Error::InvalidParameter("observation set is empty".into()));
        }
        let inside = |p: [f64; 2]| (0.0..=lengths[0]).contains(&p[0]) && (0.0..=lengths[1]).contains(&p[1]);
        if !inside(from) || !inside(to) {
            return Err(Error::InvalidParameter("observation segment leaves the rectangle".into()));
        }
        let sigma = (0..samples)
            .map(|s| {
                let t = if samples == 1 { 0.5 } else { s as f64 / (samples - 1) as f64 };
                [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])]
            })
            .collect();
        Ok(Geometry::Rectangle { lengths, grid, sigma })
    }

    pub fn dim(&self) -> usize {
        match self {
            Geometry::Interval { .. } => 1,
            Geometry::Rectangle { .. } => 2,
        }
    }

    pub fn lengths(&self) -> Vec<f64> {
        match self {
            Geometry::Interval { length, .. } => vec![*length],
            Geometry::Rectangle { lengths, .. } => lengths.to_vec(),
        }
    }

    pub fn grid_sizes(&self) -> Vec<usize> {
        match self {
            Geometry::Interval { grid, .. } => vec![*grid],
            Geometry::Rectangle { grid, .. } => grid.to_vec(),
        }
    }

    /// Total number of grid points.
    pub fn grid_len(&self) -> usize {
        self.grid_sizes().iter().product()
    }

    /// Quadrature weight of one grid cell.
    pub fn cell_weight(&self) -> f64 {
        self.lengths()
            .iter()
            .zip(self.grid_sizes())
            .map(|(l, n)| l / (n + 1) as f64)
            .product()
    }

    /// Coordinates of the grid points along one axis.
    pub fn axis_points(&self, axis: usize) -> Vec<f64> {
        let l = self.lengths()[axis];
        let n = self.grid_sizes()[axis];
        (1..=n).map(|i| i as f64 * l / (n + 1) as f64).collect()
    }

    /// All grid points, first axis slowest.
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        match self {
            Geometry::Interval { .. } => self.axis_points(0).into_iter().map(|x| vec![x]).collect(),
            Geometry::Rectangle { .. } => {
                let xs = self.axis_points(0);
                let ys = self.axis_points(1);
                xs.iter()
                    .flat_map(|&x| ys.iter().map(move |&y| vec![x, y]))
                    .collect()
            }
        }
    }

    pub fn sigma_len(&self) -> usize {
        match self {
            Geometry::Interval { sigma, .. } => sigma.len(),
            Geometry::Rectangle { sigma, .. } => sigma.len(),
        }
    }

    pub fn sigma_points(&self) -> Vec<Vec<f64>> {
        match self {
            Geometry::Interval { sigma, .. } => sigma.iter().map(|&x| vec![x]).collect(),
            Geometry::Rectangle { sigma, .. } => sigma.iter().map(|p| p.to_vec()).collect(),
        }
    }
}

pub fn default_sample(length: f64) -> f64 {
    length * (SQRT_2 - 1.0)
}

fn check_length(l: f64) -> Result<()> {
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("length {l} must be > 0")))
    }
}

fn check_grid(n: usize) -> Result<()> {
    if n >= 4 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("grid size {n} must be >= 4")))
    }
}

/// √(2/L)·sin(nπx/L).
pub fn sine_mode(n: usize, length: f64, x: f64) -> f64 {
    (2.0 / length).sqrt() * (n as f64 * PI * x / length).sin()
}

/// Truncated eigensystem with transforms and Σ traces.
///
/// Modes are stored flat, ordered by eigenspace and, inside a multiple
/// eigenspace, by the first wavenumber. Coefficient vectors use the same
/// order.
#[derive(Clone)]
pub struct SpectralBasis {
    geometry: Geometry,
    eigenvalues: Vec<f64>,
    spaces: Vec<Range<usize>>,
    modes: Vec<[usize; 2]>,
    mode_space: Vec<usize>,
    /// Σ-sample-major trace values, `sigma_len × n_modes`.
    trace: Vec<f64>,
    /// Per axis: `max_n × N_axis` table of sampled sines.
    tables: Vec<Vec<f64>>,
    max_n: [usize; 2],
    fft: Option<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralBasis")
            .field("geometry", &self.geometry)
            .field("eigenvalues", &self.eigenvalues)
            .field("modes", &self.modes)
            .finish_non_exhaustive()
    }
}

/// Builds the first `j_max` distinct eigenvalues and their eigenspaces.
pub fn build_basis(geometry: &Geometry, j_max: usize) -> Result<SpectralBasis> {
    if j_max == 0 {
        return Err(Error::InvalidParameter("at least one eigenvalue is required".into()));
    }
    let (eigenvalues, spaces, modes) = match geometry {
        Geometry::Interval { length, .. } => {
            let lambdas = (1..=j_max).map(|n| (n as f64 * PI / length).powi(2)).collect();
            let spaces = (0..j_max).map(|j| j..j + 1).collect();
            let modes = (1..=j_max).map(|n| [n, 0]).collect();
            (lambdas, spaces, modes)
        }
        Geometry::Rectangle { lengths, .. } => rectangle_spectrum(*lengths, j_max),
    };

    let dims = geometry.grid_sizes();
    let mut max_n = [0usize; 2];
    for m in &modes {
        max_n[0] = max_n[0].max(m[0]);
        max_n[1] = max_n[1].max(m[1]);
    }
    for axis in 0..geometry.dim() {
        if max_n[axis] > dims[axis] {
            return Err(Error::UnderResolved { grid: dims[axis], modes: max_n[axis] });
        }
    }

    let lengths = geometry.lengths();
    let tables = (0..geometry.dim())
        .map(|axis| {
            let xs = geometry.axis_points(axis);
            let mut t = Vec::with_capacity(max_n[axis] * xs.len());
            for n in 1..=max_n[axis] {
                t.extend(xs.iter().map(|&x| sine_mode(n, lengths[axis], x)));
            }
            t
        })
        .collect();

    let sigma = geometry.sigma_points();
    let mut trace = Vec::with_capacity(sigma.len() * modes.len());
    for pt in &sigma {
        for m in &modes {
            let mut v = sine_mode(m[0], lengths[0], pt[0]);
            if geometry.dim() == 2 {
                v *= sine_mode(m[1], lengths[1], pt[1]);
            }
            trace.push(v);
        }
    }

    let mut mode_space = vec![0; modes.len()];
    for (j, r) in spaces.iter().enumerate() {
        for i in r.clone() {
            mode_space[i] = j;
        }
    }

    let fft = (geometry.dim() == 1 && modes.len() > DIRECT_TRANSFORM_LIMIT)
        .then(|| FftPlanner::new().plan_fft_forward(2 * (dims[0] + 1)));

    Ok(SpectralBasis {
        geometry: geometry.clone(),
        eigenvalues,
        spaces,
        modes,
        mode_space,
        trace,
        tables,
        max_n,
        fft,
    })
}

type Spectrum = (Vec<f64>, Vec<Range<usize>>, Vec<[usize; 2]>);

fn rectangle_spectrum(lengths: [f64; 2], j_max: usize) -> Spectrum {
    let ratio = rational_ratio(lengths[0], lengths[1]);
    let lam = |n1: usize, n2: usize| {
        PI * PI * ((n1 * n1) as f64 / lengths[0].powi(2) + (n2 * n2) as f64 / lengths[1].powi(2))
    };
    // Enumerate every mode below a cutoff, doubling it until the j_max-th
    // group is complete (strictly below the cutoff).
    let mut cutoff = lam(1, 1) * 4.0;
    loop {
        let n1_max = (cutoff.sqrt() * lengths[0] / PI).floor() as usize + 1;
        let n2_max = (cutoff.sqrt() * lengths[1] / PI).floor() as usize + 1;
        let mut all: Vec<(f64, u128, [usize; 2])> = Vec::new();
        for n1 in 1..=n1_max {
            for n2 in 1..=n2_max {
                let l = lam(n1, n2);
                if l <= cutoff {
                    let key = ratio
                        .map(|(p, q)| (n1 as u128 * q).pow(2) + (n2 as u128 * p).pow(2))
                        .unwrap_or(0);
                    all.push((l, key, [n1, n2]));
                }
            }
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));

        let same = |a: &(f64, u128, [usize; 2]), b: &(f64, u128, [usize; 2])| match ratio {
            Some(_) => a.1 == b.1,
            None => (a.0 - b.0).abs() <= 1e-12 * a.0.max(b.0),
        };
        let mut eigenvalues = Vec::new();
        let mut spaces = Vec::new();
        let mut modes = Vec::new();
        let mut i = 0;
        while i < all.len() && eigenvalues.len() < j_max {
            let mut k = i + 1;
            while k < all.len() && same(&all[i], &all[k]) {
                k += 1;
            }
            let mut group: Vec<[usize; 2]> = all[i..k].iter().map(|e| e.2).collect();
            group.sort();
            eigenvalues.push(all[i].0);
            spaces.push(modes.len()..modes.len() + group.len());
            modes.extend(group);
            i = k;
        }
        // The last group must be strictly below the cutoff, otherwise some
        // of its members may not have been enumerated yet.
        if eigenvalues.len() == j_max && *eigenvalues.last().unwrap() < cutoff * (1.0 - 1e-9) {
            return (eigenvalues, spaces, modes);
        }
        cutoff *= 2.0;
    }
}

/// Finds coprime (p, q) with a/b = p/q when the ratio is a modest rational.
fn rational_ratio(a: f64, b: f64) -> Option<(u128, u128)> {
    let x = a / b;
    let (mut h0, mut h1) = (0u128, 1u128);
    let (mut k0, mut k1) = (1u128, 0u128);
    let mut r = x;
    for _ in 0..40 {
        let ai = r.floor();
        if ai > 1e12 {
            break;
        }
        let ai = ai as u128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > 1_000_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - x).abs() <= 1e-14 * x {
            return Some((h1, k1));
        }
        let frac = r - r.floor();
        if frac == 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

/// Unnormalised DST-I: X_n = Σ_{i=1}^{N} v_i sin(πni/(N+1)), n = 1..N.
fn dst1(fft: &dyn Fft<f64>, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let len = 2 * (n + 1);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (i, &x) in v.iter().enumerate() {
        buf[i + 1] = Complex64::new(x, 0.0);
        buf[len - 1 - i] = Complex64::new(-x, 0.0);
    }
    fft.process(&mut buf);
    (1..=n).map(|k| -buf[k].im / 2.0).collect()
}

impl SpectralBasis {
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Number of distinct eigenvalues J.
    pub fn num_spaces(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Total number of modes Σ_j K^j.
    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j]
    }

    /// Mode index range of eigenspace `j`.
    pub fn space(&self, j: usize) -> Range<usize> {
        self.spaces[j].clone()
    }

    pub fn multiplicity(&self, j: usize) -> usize {
        self.spaces[j].len()
    }

    /// Axis wavenumbers of a mode (second entry 0 in 1D).
    pub fn mode(&self, idx: usize) -> [usize; 2] {
        self.modes[idx]
    }

    /// Eigenspace index of a mode.
    pub fn mode_space(&self, idx: usize) -> usize {
        self.mode_space[idx]
    }

    pub fn mode_eigenvalue(&self, idx: usize) -> f64 {
        self.eigenvalues[self.mode_space[idx]]
    }

    pub fn grid_len(&self) -> usize {
        self.geometry.grid_len()
    }

    pub fn sigma_len(&self) -> usize {
        self.geometry.sigma_len()
    }

    /// tr_Σ φ of mode `idx` at Σ sample `s`.
    pub fn trace_value(&self, s: usize, idx: usize) -> f64 {
        self.trace[s * self.modes.len() + idx]
    }

    /// Evaluates a mode at an arbitrary point.
    pub fn eval_mode(&self, idx: usize, point: &[f64]) -> f64 {
        let lengths = self.geometry.lengths();
        let m = self.modes[idx];
        let mut v = sine_mode(m[0], lengths[0], point[0]);
        if self.geometry.dim() == 2 {
            v *= sine_mode(m[1], lengths[1], point[1]);
        }
        v
    }

    fn table(&self, axis: usize, n: usize) -> &[f64] {
        let len = self.geometry.grid_sizes()[axis];
        &self.tables[axis][(n - 1) * len..n * len]
    }

    fn check_grid_len(&self, got: usize) -> Result<()> {
        if got == self.grid_len() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected: self.grid_len(), got })
        }
    }

    fn check_modes_len(&self, got: usize) -> Result<()> {
        if got == self.num_modes() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected: self.num_modes(), got })
        }
    }

    /// Discrete L² projection of grid values onto the retained modes.
    pub fn project(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_grid_len(values.len())?;
        let h = self.geometry.cell_weight();
        match &self.geometry {
            Geometry::Interval { length, .. } => {
                if let Some(fft) = &self.fft {
                    let scale = h * (2.0 / length).sqrt();
                    let x = dst1(fft.as_ref(), values);
                    Ok(x[..self.num_modes()].iter().map(|v| v * scale).collect())
                } else {
                    Ok(self
                        .modes
                        .iter()
                        .map(|m| h * dot(self.table(0, m[0]), values))
                        .collect())
                }
            }
            Geometry::Rectangle { grid, .. } => {
                let (n1, n2) = (grid[0], grid[1]);
                // Contract the first axis for every needed wavenumber.
                let mut partial = vec![0.0; self.max_n[0] * n2];
                for k in 1..=self.max_n[0] {
                    let t = self.table(0, k);
                    let row = &mut partial[(k - 1) * n2..k * n2];
                    for i1 in 0..n1 {
                        let w = t[i1];
                        let src = &values[i1 * n2..(i1 + 1) * n2];
                        for (r, s) in row.iter_mut().zip(src) {
                            *r += w * s;
                        }
                    }
                }
                Ok(self
                    .modes
                    .iter()
                    .map(|m| h * dot(self.table(1, m[1]), &partial[(m[0] - 1) * n2..m[0] * n2]))
                    .collect())
            }
        }
    }

    /// Grid values of the band-limited field with the given coefficients.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_modes_len(coeffs.len())?;
        match &self.geometry {
            Geometry::Interval { length, grid, .. } => {
                if let Some(fft) = &self.fft {
                    let mut padded = vec![0.0; *grid];
                    padded[..coeffs.len()].copy_from_slice(coeffs);
                    let scale = (2.0 / length).sqrt();
                    Ok(dst1(fft.as_ref(), &padded).into_iter().map(|v| v * scale).collect())
                } else {
                    let mut out = vec![0.0; *grid];
                    for (m, &c) in self.modes.iter().zip(coeffs) {
                        if c != 0.0 {
                            for (o, t) in out.iter_mut().zip(self.table(0, m[0])) {
                                *o += c * t;
                            }
                        }
                    }
                    Ok(out)
                }
            }
            Geometry::Rectangle { grid, .. } => {
                let (n1, n2) = (grid[0], grid[1]);
                let mut partial = vec![0.0; self.max_n[0] * n2];
                for (m, &c) in self.modes.iter().zip(coeffs) {
                    let row = &mut partial[(m[0] - 1) * n2..m[0] * n2];
                    for (r, t) in row.iter_mut().zip(self.table(1, m[1])) {
                        *r += c * t;
                    }
                }
                let mut out = vec![0.0; n1 * n2];
                for k in 1..=self.max_n[0] {
                    let row = &partial[(k - 1) * n2..k * n2];
                    let t = self.table(0, k);
                    for i1 in 0..n1 {
                        let w = t[i1];
                        for (o, r) in out[i1 * n2..(i1 + 1) * n2].iter_mut().zip(row) {
                            *o += w * r;
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn project_complex(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        let re: Vec<f64> = values.iter().map(|v| v.re).collect();
        let im: Vec<f64> = values.iter().map(|v| v.im).collect();
        let (pr, pi) = (self.project(&re)?, self.project(&im)?);
        Ok(pr.into_iter().zip(pi).map(|(a, b)| Complex64::new(a, b)).collect())
    }

    pub fn synthesize_complex(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        let re: Vec<f64> = coeffs.iter().map(|v| v.re).collect();
        let im: Vec<f64> = coeffs.iter().map(|v| v.im).collect();
        let (sr, si) = (self.synthesize(&re)?, self.synthesize(&im)?);
        Ok(sr.into_iter().zip(si).map(|(a, b)| Complex64::new(a, b)).collect())
    }

    /// Σ_{j,k} coeff^{j,k}·tr_Σφ^{j,k} at every Σ sample.
    pub fn trace_on_sigma(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_modes_len(coeffs.len())?;
        let n = self.num_modes();
        Ok((0..self.sigma_len())
            .map(|s| {
                self.trace[s * n..(s + 1) * n]
                    .iter()
                    .zip(coeffs)
                    .map(|(t, c)| c * t)
                    .sum()
            })
            .collect())
    }

    /// (Σ_j λ_j^s Σ_k |coeff^{j,k}|²)^{1/2}.
    pub fn sobolev_norm(&self, coeffs: &[Complex64], s: f64) -> Result<f64> {
        self.check_modes_len(coeffs.len())?;
        Ok(coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| self.mode_eigenvalue(i).powf(s) * c.norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    pub fn sobolev_norm_real(&self, coeffs: &[f64], s: f64) -> Result<f64> {
        let c: Vec<Complex64> = coeffs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.sobolev_norm(&c, s)
    }

    /// Discrete L² norm of grid values.
    pub fn grid_l2_norm(&self, values: &[f64]) -> f64 {
        (self.geometry.cell_weight() * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Default reference profile φ = 1 + ½·sin·bump on the grid.
    pub fn default_phi(&self) -> Vec<f64> {
        let lengths = self.geometry.lengths();
        let bump = |x: f64, l: f64| (PI * x / l).sin() * (-((x - l / 2.0) / (l / 4.0)).powi(2)).exp();
        self.geometry
            .grid_points()
            .iter()
            .map(|p| {
                let mut b = 0.5;
                for (axis, &x) in p.iter().enumerate() {
                    b *= bump(x, lengths[axis]);
                }
                1.0 + b
            })
            .collect()
    }

    /// Band-limited reference profile P_J φ sampled on the grid. This is the
    /// profile every discrete product involving the reference state sees.
    pub fn reference_profile(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.synthesize(&self.project(phi)?)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Real nonlinearity coefficient η together with a = P(φ²η).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    grid_values: Vec<f64>,
    eigen_coeffs: Vec<f64>,
    phi_ref: Vec<f64>,
}

impl CoefficientField {
    /// From grid values of η; `phi_ref` is the reference profile on the grid.
    pub fn from_grid(eta: Vec<f64>, phi_ref: Vec<f64>, basis: &SpectralBasis) -> Result<Self> {
        basis.check_grid_len(eta.len())?;
        basis.check_grid_len(phi_ref.len())?;
        if let Some(v) = eta.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite eta value {v}")));
        }
        let weighted: Vec<f64> = eta.iter().zip(&phi_ref).map(|(e, f)| e * f * f).collect();
        let eigen_coeffs = basis.project(&weighted)?;
        Ok(Self { grid_values: eta, eigen_coeffs, phi_ref })
    }

    /// From the sine coefficients of η itself.
    pub fn from_eta_coeffs(coeffs: &[f64], phi_ref: Vec<f64>, basis: &SpectralBasis) -> Result<Self> {
        Self::from_grid(basis.synthesize(coeffs)?, phi_ref, basis)
    }

    pub fn zero(phi_ref: Vec<f64>, basis: &SpectralBasis) -> Result<Self> {
        Self::from_grid(vec![0.0; basis.grid_len()], phi_ref, basis)
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.grid_values
    }

    /// a^{j,k} = ⟨φ²η, φ^{j,k}⟩.
    pub fn eigen_coeffs(&self) -> &[f64] {
        &self.eigen_coeffs
    }

    pub fn phi_ref(&self) -> &[f64] {
        &self.phi_ref
    }
}
