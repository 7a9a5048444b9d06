//! The six experiment drivers. Each reads its keys, validates the whole
//! configuration, computes, and writes CSV tables plus a gnuplot script.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mhj_core::forward::{add_noise, linearized_projected, observe, reference_state, solve_forward, ForwardProblem, ObservationData, SolverMethod, SolverOptions};
use mhj_core::harmonics::{HarmonicField, SourceKind, SourceProfile};
use mhj_core::inversion::{frozen_newton, reconstruct_linearized, FitOptions, FrozenNewtonProblem, LinearizedProblem, NewtonConfig, StoppingRule};
use mhj_core::io::{field_table, standard_meta, Cell, Table};
use mhj_core::physics::PhysicalParams;
use mhj_core::poles::{model_constants, pole_sensitivity, solve_pole, tau_threshold_check, PoleSet};
use mhj_core::spectral::SpectralBasis;

use crate::config::{CliError, CliResult, Config};
use crate::output::Output;
use crate::setup;

const DEFAULT_TAUS: [f64; 3] = [0.001, 0.005, 0.01];
const DEFAULT_DELTAS: [f64; 3] = [6e-9, 6e-8, 6e-7];

pub struct Context<'a> {
    pub cfg: &'a Config,
    pub out: Output<'a>,
    pub seed: Option<u64>,
}

impl Context<'_> {
    fn meta(&self, command: &str, extra: &[(&str, String)]) -> Vec<(String, String)> {
        let mut all = vec![("command", command.to_string())];
        all.extend(extra.iter().cloned());
        standard_meta(env!("CARGO_PKG_VERSION"), &self.cfg.hash, &all)
    }
}

fn dirichlet_eigenvalues(length: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|j| (j as f64 * PI / length).powi(2)).collect()
}

fn positive_list(cfg: &Config, key: &str, values: &[f64], allow_zero: bool) -> CliResult<()> {
    let ok = |v: f64| if allow_zero { v >= 0.0 } else { v > 0.0 };
    if values.is_empty() || !values.iter().all(|&v| ok(v)) {
        return Err(CliError::Config(format!("line {}: {key} needs {} values", cfg.line_of(key).unwrap_or(0), if allow_zero { "non-negative" } else { "positive" })));
    }
    Ok(())
}

/// Parameter grid shared by `poles` and `sensitivity`.
struct PoleGrid {
    taus: Vec<f64>,
    deltas: Vec<f64>,
    c: f64,
    omega0: f64,
    lambdas: Vec<f64>,
}

impl PoleGrid {
    fn read(cfg: &Config, default_taus: &[f64]) -> CliResult<Self> {
        let taus = cfg.f64_list_or("grid.taus", default_taus)?;
        let deltas = cfg.f64_list_or("grid.deltas", &DEFAULT_DELTAS)?;
        positive_list(cfg, "grid.taus", &taus, true)?;
        positive_list(cfg, "grid.deltas", &deltas, true)?;
        let c = cfg.f64_or("model.c", 1.5)?;
        let omega0 = cfg.f64_or("model.omega0", 0.0)?;
        let length = cfg.f64_or("geometry.length", 10.0)?;
        let count = cfg.usize_or("grid.eigenvalues", 200)?;
        if !(length > 0.0) || count == 0 {
            return Err(CliError::Config("geometry.length must be > 0 and grid.eigenvalues >= 1".into()));
        }
        let g = Self { taus, deltas, c, omega0, lambdas: dirichlet_eigenvalues(length, count) };
        for &tau in &g.taus {
            for &delta in &g.deltas {
                g.params(tau, delta)?;
            }
        }
        Ok(g)
    }

    fn params(&self, tau: f64, delta: f64) -> CliResult<PhysicalParams> {
        PhysicalParams::new(tau, self.c, delta, self.omega0).map_err(|e| CliError::Config(format!("grid point tau = {tau}, delta = {delta}: {e}")))
    }
}

pub fn poles(ctx: &Context) -> CliResult<()> {
    let grid = PoleGrid::read(ctx.cfg, &DEFAULT_TAUS)?;
    ctx.cfg.finish()?;
    let mut files = Vec::new();
    for &tau in &grid.taus {
        let sets = grid
            .deltas
            .iter()
            .map(|&d| Ok((d, PoleSet::compute(&grid.params(tau, d)?, &grid.lambdas)?)))
            .collect::<CliResult<Vec<_>>>()?;
        let mut t = Table::new(
            ctx.meta("poles", &[("tau", format!("{tau}"))]),
            &["model", "tau", "delta", "omega0", "j", "lambda", "re_p", "im_p", "amp_re", "amp_im"],
        );
        for (delta, set) in &sets {
            let family = set.params().family().name();
            for (j, e) in set.entries().iter().enumerate() {
                t.push(vec![
                    family.into(),
                    tau.into(),
                    (*delta).into(),
                    grid.omega0.into(),
                    (j + 1).into(),
                    e.lambda.into(),
                    e.pole.re.into(),
                    e.pole.im.into(),
                    e.amplification.re.into(),
                    e.amplification.im.into(),
                ])?;
            }
        }
        let name = format!("poles_tau_{tau}.csv");
        ctx.out.table(&name, &t)?;
        files.push((name, tau));
    }
    let mut gp = String::from(
        "# Poles in the complex plane, one panel per relaxation time.\n\
         # Axis ranges are not prescribed; every panel autoscales.\n\
         set datafile separator ','\nset xlabel 'Re p [1/us]'\nset ylabel 'Im p [1/us]'\nset autoscale\n",
    );
    gp.push_str(&format!("set multiplot layout 1,{}\n", files.len()));
    for (name, tau) in &files {
        gp.push_str(&format!("set title 'tau = {tau} us'\nplot \\\n"));
        let series: Vec<String> = grid
            .deltas
            .iter()
            .map(|d| format!("  '{name}' using ($3=={d:e} ? $7 : 1/0):8 skip 1 with points title 'delta = {d:e}'"))
            .collect();
        gp.push_str(&series.join(", \\\n"));
        gp.push('\n');
    }
    gp.push_str("unset multiplot\n");
    ctx.out.script("poles.gp", &gp)
}

/// Richardson-extrapolated central difference; one-sided at a zero
/// parameter, where the left point would be unphysical.
fn finite_difference(f: impl Fn(f64) -> CliResult<f64>, x: f64, rel_step: f64, abs_step: f64) -> CliResult<f64> {
    let h = if x > 0.0 { rel_step * x } else { abs_step };
    if x > 0.0 {
        let d1 = (f(x + h)? - f(x - h)?) / (2.0 * h);
        let d2 = (f(x + h / 2.0)? - f(x - h / 2.0)?) / h;
        Ok((4.0 * d2 - d1) / 3.0)
    } else {
        Ok((-3.0 * f(x)? + 4.0 * f(x + h)? - f(x + 2.0 * h)?) / (2.0 * h))
    }
}

pub fn sensitivity(ctx: &Context) -> CliResult<()> {
    let grid = PoleGrid::read(ctx.cfg, &[0.0, 0.001, 0.005, 0.01])?;
    ctx.cfg.finish()?;
    let cols = [
        "tau",
        "delta",
        "j",
        "lambda",
        "neg_re_p",
        "d_neg_re_d_delta",
        "d_neg_re_d_tau",
        "fd_d_delta",
        "fd_d_tau",
        "fd_rel_err_delta",
        "fd_rel_err_tau",
        "damping_below_third",
        "delta_sens_positive",
        "iff_holds",
        "below_tau_threshold",
        "tau_sens_negative",
        "implication_holds",
    ];
    let mut points = Vec::new();
    for &tau in &grid.taus {
        for &delta in &grid.deltas {
            for (j, &lam) in grid.lambdas.iter().enumerate() {
                points.push((tau, delta, j, lam));
            }
        }
    }
    let rows: Vec<Vec<Cell>> = points
        .par_iter()
        .map(|&(tau, delta, j, lam)| -> CliResult<Vec<Cell>> {
            let p = grid.params(tau, delta)?;
            let e = solve_pole(lam, &p)?;
            let s = pole_sensitivity(&e, &p)?;
            let neg_re = |q: CliResult<PhysicalParams>| -> CliResult<f64> { Ok(-solve_pole(lam, &q?)?.pole.re) };
            let fd_d = finite_difference(|d| neg_re(grid.params(tau, d)), delta, 0.05, 1e-12)?;
            let fd_t = finite_difference(|t| neg_re(grid.params(t, delta)), tau, 0.01, 1e-6)?;
            let rel = |a: f64, b: f64| if b != 0.0 { (a - b).abs() / b.abs() } else { (a - b).abs() };
            let below_third = tau == 0.0 || -e.pole.re < 1.0 / (3.0 * tau);
            let positive = s.d_neg_re_d_delta > 0.0;
            let flag = |b: bool| Cell::Int(b as i64);
            let (below, tau_neg, implication) = if tau > 0.0 {
                let th = tau_threshold_check(&e, &p)?;
                (flag(th.below), flag(th.d_neg_re_d_tau < 0.0), flag(th.implication_holds()))
            } else {
                ("na".into(), "na".into(), "na".into())
            };
            Ok(vec![
                tau.into(),
                delta.into(),
                (j + 1).into(),
                lam.into(),
                (-e.pole.re).into(),
                s.d_neg_re_d_delta.into(),
                s.d_neg_re_d_tau.into(),
                fd_d.into(),
                fd_t.into(),
                rel(s.d_neg_re_d_delta, fd_d).into(),
                rel(s.d_neg_re_d_tau, fd_t).into(),
                flag(below_third),
                flag(positive),
                flag(below_third == positive),
                below,
                tau_neg,
                implication,
            ])
        })
        .collect::<CliResult<_>>()?;
    let mut t = Table::new(ctx.meta("sensitivity", &[]), &cols);
    for r in rows {
        t.push(r)?;
    }
    ctx.out.table("sensitivity.csv", &t)?;
    ctx.out.script(
        "sensitivity.gp",
        "# Damping sensitivities against eigenvalue; axes autoscale.\n\
         set datafile separator ','\nset logscale x\nset xlabel 'lambda [1/mm^2]'\nset ylabel 'd(-Re p)/d(delta)'\n\
         plot 'sensitivity.csv' using 4:6 skip 1 with points title 'closed form', \\\n\
         \x20    'sensitivity.csv' using 4:8 skip 1 with points title 'finite difference'\n",
    )
}

pub fn constants(ctx: &Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let base = setup::model(cfg)?;
    let weak_omega0 = cfg.f64_or("constants.weak_omega0", 0.1)?;
    let h = setup::harmonics(cfg)?;
    let g = setup::geometry(cfg)?;
    let basis = setup::basis(cfg, &g)?;
    let idx = setup::indices(cfg, 0.0)?;
    let kind = cfg.choice("source.kind", &["pulse", "gaussian"])?;
    let src = if kind == "pulse" {
        SourceProfile::delta_pulse(&h)
    } else {
        let width = cfg.f64_or("source.width", 2.0)?;
        let center = cfg.f64_or("source.center", h.period() / 2.0)?;
        let k = cfg.usize_or("source.harmonics", 4)?;
        SourceProfile::gaussian(&h, width, center, k).map_err(|e| CliError::Config(format!("source: {e}")))?
    };
    cfg.finish()?;
    let c = base.c();
    let rows = [
        PhysicalParams::wave(c),
        PhysicalParams::new(0.0, c, 0.0, weak_omega0),
        PhysicalParams::westervelt(c, base.delta()),
        PhysicalParams::new(base.tau(), c, base.delta(), base.omega0()),
    ];
    let mut t = Table::new(
        ctx.meta("constants", &[]),
        &[
            "model",
            "tau",
            "delta",
            "omega0",
            "c_bar",
            "two_tau",
            "inv_delta_lambda1",
            "c_check",
            "c_check_discrete",
            "c_hat",
            "c_check_decay",
            "c_check_summable",
            "constants_finite",
            "min_neg_re_pole",
            "neg_re_p_last",
            "delta_lambda_last",
        ],
    );
    let lam1 = basis.eigenvalue(0);
    let lam_last = basis.eigenvalue(basis.num_spaces() - 1);
    for p in rows {
        let p = p.map_err(|e| CliError::Config(format!("model: {e}")))?;
        let k = model_constants(&p, &h, &basis, &src, idx)?;
        let last = solve_pole(lam_last, &p)?;
        let finite = k.c_check.is_finite() && k.c_hat.is_finite();
        let inv_dl = if p.delta() > 0.0 { 1.0 / (p.delta() * lam1) } else { f64::INFINITY };
        t.push(vec![
            p.family().name().into(),
            p.tau().into(),
            p.delta().into(),
            p.omega0().into(),
            k.c_bar.into(),
            (2.0 * p.tau()).into(),
            inv_dl.into(),
            k.c_check.into(),
            k.c_check_discrete.into(),
            k.c_hat.into(),
            k.term_decay.into(),
            Cell::Int(k.c_check_summable as i64),
            Cell::Int(finite as i64),
            k.min_neg_re_pole.into(),
            (-last.pole.re).into(),
            (p.delta() * lam_last).into(),
        ])?;
    }
    ctx.out.table("constants.csv", &t)?;
    ctx.out.script(
        "constants.gp",
        "# Model comparison of the stability constants; axes autoscale.\n\
         set datafile separator ','\nset style data histograms\nset style fill solid\nset logscale y\n\
         plot 'constants.csv' using 5:xtic(1) skip 1 title 'C_bar', '' using 9 skip 1 title 'C_check (discrete)'\n",
    )
}

fn require_harmonics(src: &SourceProfile) -> CliResult<()> {
    if src.kind() == SourceKind::DeltaPulse {
        return Err(CliError::Config("source.kind = pulse has no harmonics; this command needs gaussian or designed".into()));
    }
    Ok(())
}

fn observation_table(d: &ObservationData, basis: &SpectralBasis, meta: Vec<(String, String)>) -> CliResult<Table> {
    let pts = basis.geometry().sigma_points();
    let mut cols = vec!["m", "s", "x"];
    if pts.first().is_some_and(|p| p.len() == 2) {
        cols.push("y");
    }
    cols.extend(["re", "im"]);
    let mut t = Table::new(meta, &cols);
    for (m, row) in d.values.iter().enumerate() {
        for (s, v) in row.iter().enumerate() {
            let mut r: Vec<Cell> = vec![(m + 1).into(), (s + 1).into()];
            r.extend(pts[s].iter().map(|&x| Cell::Num(x)));
            r.extend([v.re.into(), v.im.into()]);
            t.push(r)?;
        }
    }
    Ok(t)
}

fn grid_table(columns: &[&str], values: &[&[f64]], basis: &SpectralBasis, meta: Vec<(String, String)>) -> CliResult<Table> {
    let pts = basis.geometry().grid_points();
    let mut cols = vec!["x"];
    if pts.first().is_some_and(|p| p.len() == 2) {
        cols.push("y");
    }
    cols.extend_from_slice(columns);
    let mut t = Table::new(meta, &cols);
    for (i, p) in pts.iter().enumerate() {
        let mut r: Vec<Cell> = p.iter().map(|&x| Cell::Num(x)).collect();
        r.extend(values.iter().map(|v| Cell::Num(v[i])));
        t.push(r)?;
    }
    Ok(t)
}

fn solver_options(cfg: &Config) -> CliResult<SolverOptions> {
    let method = cfg.choice("solver.method", &["newton", "picard"])?;
    let d = SolverOptions::default();
    Ok(SolverOptions {
        method: if method == "newton" { SolverMethod::Newton } else { SolverMethod::Picard },
        tolerance: cfg.f64_or("solver.tolerance", d.tolerance)?,
        max_iterations: cfg.usize_or("solver.max_iterations", d.max_iterations)?,
    })
}

const DEFAULT_ETA: [f64; 3] = [0.05, -0.025, 0.0125];

pub fn forward(ctx: &Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let p = setup::model(cfg)?;
    let h = setup::harmonics(cfg)?;
    let g = setup::geometry(cfg)?;
    let basis = setup::basis(cfg, &g)?;
    let poles = PoleSet::for_basis(&p, &basis)?;
    let src = setup::source(cfg, &h, Some(&poles))?;
    require_harmonics(&src)?;
    let eta_c = setup::eta_coeffs(cfg, &basis, &DEFAULT_ETA)?;
    let options = solver_options(cfg)?;
    let (level, seed) = setup::noise(cfg, ctx.seed)?;
    cfg.finish()?;

    let phi = setup::reference_phi(&basis)?;
    let (_, r0) = reference_state(&phi, &src, &basis, &h, &p)?;
    let eta = setup::eta_field(&eta_c, &phi, &basis)?;
    let pb = ForwardProblem { params: p, cfg: h, basis: &basis, eta, source: r0, options };
    let sol = solve_forward(&pb)?;
    let meta = |extra: &[(&str, String)]| {
        let mut e = vec![("iterations", format!("{}", sol.residuals.len())), ("final_residual", format!("{:.16e}", sol.residual()))];
        e.extend(extra.iter().cloned());
        ctx.meta("forward", &e)
    };
    ctx.out.table("field.csv", &field_table(&sol.state, &basis, meta(&[]))?)?;

    let mut st = Table::new(meta(&[]), &["m", "psi_re", "psi_im", "frak_b_re", "frak_b_im"]);
    for m in 1..=h.harmonics() {
        let (psi, fb) = (src.psi(m), src.frak_b(m));
        st.push(vec![m.into(), psi.re.into(), psi.im.into(), fb.re.into(), fb.im.into()])?;
    }
    ctx.out.table("source.csv", &st)?;

    let data = observe(&sol.state, &basis)?;
    ctx.out.table("observation.csv", &observation_table(&data, &basis, meta(&[]))?)?;
    if level > 0.0 {
        let noisy = add_noise(&data, level * data.norm(), seed)?;
        let extra = [("noise_level", format!("{level}")), ("seed", format!("{seed}"))];
        ctx.out.table("observation_noisy.csv", &observation_table(&noisy, &basis, meta(&extra))?)?;
    }
    let mut gp = String::from("# Harmonic content of the pressure field; axes autoscale.\nset datafile separator ','\nset logscale y\nset xlabel 'm'\nset ylabel '|u_m^{j,k}|'\n");
    gp.push_str("plot 'field.csv' using 1:(sqrt($4**2+$5**2)) skip 1 with points title 'mode amplitudes'\n");
    ctx.out.script("forward.gp", &gp)
}

pub fn reconstruct_linear(ctx: &Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let p = setup::model(cfg)?;
    let h = setup::harmonics(cfg)?;
    let g = setup::geometry(cfg)?;
    let basis = setup::basis(cfg, &g)?;
    let poles = PoleSet::for_basis(&p, &basis)?;
    let src = setup::source(cfg, &h, Some(&poles))?;
    let idx = setup::indices(cfg, 1.0)?;
    let eta_c = setup::eta_coeffs(cfg, &basis, &DEFAULT_ETA)?;
    let amp = cfg.f64_or("linear.state_amplitude", 1.0)?;
    let (level, seed) = setup::noise(cfg, ctx.seed)?;
    let fit = FitOptions {
        svd_threshold: cfg.f64_or("fit.svd_threshold", FitOptions::default().svd_threshold)?,
        max_condition: cfg.f64_or("fit.max_condition", FitOptions::default().max_condition)?,
    };
    cfg.finish()?;

    let phi = setup::reference_phi(&basis)?;
    let eta = setup::eta_field(&eta_c, &phi, &basis)?;
    let a: Vec<Complex64> = eta.eigen_coeffs().iter().map(|&c| Complex64::new(c, 0.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = HarmonicField::from_fn(h.harmonics(), basis.num_modes(), |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp
    });
    let (residual, clean) = linearized_projected(&a, &v, &src, &p, &h, &basis)?;
    let data = if level > 0.0 { add_noise(&clean, level * clean.norm(), seed)? } else { clean };
    let lp = LinearizedProblem { params: p, cfg: h, basis: &basis, source: &src, phi_ref: phi, data, residual, indices: idx, fit };
    let rec = reconstruct_linearized(&lp)?;

    let da: Vec<Complex64> = rec.a.iter().zip(&a).map(|(x, y)| x - y).collect();
    let a_norm = basis.sobolev_norm(&a, idx.s)?;
    let a_err = if a_norm > 0.0 { basis.sobolev_norm(&da, idx.s)? / a_norm } else { basis.sobolev_norm(&da, idx.s)? };
    let v_norm = v.norm();
    let v_err = if v_norm > 0.0 { rec.state.sub(&v)?.norm() / v_norm } else { rec.state.norm() };
    let meta = ctx.meta(
        "reconstruct-linear",
        &[
            ("coefficient_rel_error", format!("{a_err:.16e}")),
            ("state_rel_error", format!("{v_err:.16e}")),
            ("fit_condition", format!("{:.16e}", rec.fit_condition)),
            ("fit_residual", format!("{:.16e}", rec.fit_residual)),
            ("noise_level", format!("{level}")),
            ("seed", format!("{seed}")),
        ],
    );
    let mut t = Table::new(meta.clone(), &["mode", "j", "lambda", "a_true_re", "a_true_im", "a_rec_re", "a_rec_im", "trace_inverse_norm"]);
    for i in 0..basis.num_modes() {
        let j = basis.mode_space(i);
        t.push(vec![
            (i + 1).into(),
            (j + 1).into(),
            basis.eigenvalue(j).into(),
            a[i].re.into(),
            a[i].im.into(),
            rec.a[i].re.into(),
            rec.a[i].im.into(),
            rec.trace_inverse_norms[j].into(),
        ])?;
    }
    ctx.out.table("linear_coefficients.csv", &t)?;
    ctx.out.table("linear_eta.csv", &grid_table(&["eta", "eta_true"], &[&rec.eta, eta.grid_values()], &basis, meta)?)?;
    ctx.out.script(
        "reconstruct_linear.gp",
        "# Reconstructed versus true coefficient; axes autoscale.\nset datafile separator ','\nset xlabel 'x [mm]'\nset ylabel 'eta'\n\
         plot 'linear_eta.csv' using 1:2 skip 1 with lines title 'reconstructed', '' using 1:3 skip 1 with points title 'true'\n",
    )
}

pub fn invert(ctx: &Context) -> CliResult<()> {
    let cfg = ctx.cfg;
    let p = setup::model(cfg)?;
    let h = setup::harmonics(cfg)?;
    let g = setup::geometry(cfg)?;
    let basis = setup::basis(cfg, &g)?;
    let poles = PoleSet::for_basis(&p, &basis)?;
    let src = setup::source(cfg, &h, Some(&poles))?;
    require_harmonics(&src)?;
    let eta_c = setup::eta_coeffs(cfg, &basis, &DEFAULT_ETA)?;
    let options = solver_options(cfg)?;
    let (level, seed) = setup::noise(cfg, ctx.seed)?;
    let defaults = NewtonConfig::default();
    let alpha_factor = cfg.f64_or("newton.alpha0_factor", 1e-2)?;
    let decay = cfg.f64_or("newton.decay", defaults.decay)?;
    let max_iterations = cfg.usize_or("newton.max_iterations", defaults.max_iterations)?;
    let c_r = cfg.f64_or("newton.c_r", defaults.c_r)?;
    let rule = cfg.choice("newton.stopping", &["discrepancy", "apriori", "fixed"])?;
    let tau_d = cfg.f64_or("newton.discrepancy_tau", 2.0)?;
    cfg.finish()?;
    if !(alpha_factor > 0.0) {
        return Err(CliError::Config("newton.alpha0_factor must be > 0".into()));
    }

    let phi = setup::reference_phi(&basis)?;
    let (u0, r0) = reference_state(&phi, &src, &basis, &h, &p)?;
    let eta = setup::eta_field(&eta_c, &phi, &basis)?;
    let truth = solve_forward(&ForwardProblem { params: p, cfg: h, basis: &basis, eta: eta.clone(), source: r0.clone(), options })?.state;
    let clean = observe(&truth, &basis)?;
    let noise_norm = level * clean.norm();
    let data = add_noise(&clean, noise_norm, seed)?;
    let stopping = match rule.as_str() {
        "discrepancy" => StoppingRule::Discrepancy { tau: tau_d },
        "apriori" => StoppingRule::APriori,
        _ => StoppingRule::Fixed,
    };
    let nc = NewtonConfig { alpha0: Some(alpha_factor * data.norm().powi(2)), decay, c_r, max_iterations, noise_level: noise_norm, stopping };
    nc.validate().map_err(|e| CliError::Config(format!("newton: {e}")))?;
    let pb = FrozenNewtonProblem {
        params: p,
        cfg: h,
        basis: &basis,
        phi_ref: phi.clone(),
        source: r0,
        data,
        u0,
        truth: Some((eta_c.clone(), truth)),
    };
    let res = frozen_newton(&pb, &nc)?;
    let (field, p_norm) = mhj_core::inversion::collapse_lifted_eta(&res.iterate.eta, phi, &basis)?;
    let meta = ctx.meta(
        "invert",
        &[
            ("stopping_index", format!("{}", res.stopping_index)),
            ("p_eta_norm", format!("{p_norm:.16e}")),
            ("noise_level", format!("{level}")),
            ("seed", format!("{seed}")),
        ],
    );
    let mut t = Table::new(meta.clone(), &["iteration", "residual_norm", "alpha_n", "eta_error_if_known", "P_eta_norm"]);
    for s in &res.history {
        t.push(vec![s.iteration.into(), s.residual_norm.into(), s.alpha.into(), s.eta_error.unwrap_or(f64::NAN).into(), s.p_eta_norm.into()])?;
    }
    ctx.out.table("reconstruction.csv", &t)?;
    ctx.out.table("eta.csv", &grid_table(&["eta"], &[field.grid_values()], &basis, meta)?)?;
    ctx.out.script(
        "invert.gp",
        "# Frozen Newton history and final coefficient; axes autoscale.\nset datafile separator ','\nset multiplot layout 1,2\n\
         set logscale y\nset xlabel 'iteration'\nplot 'reconstruction.csv' using 1:2 skip 1 with linespoints title 'residual', '' using 1:4 skip 1 with linespoints title 'eta error'\n\
         unset logscale y\nset xlabel 'x [mm]'\nplot 'eta.csv' using 1:2 skip 1 with lines title 'eta'\nunset multiplot\n",
    )
}

pub fn run(command: &str, ctx: &Context) -> CliResult<()> {
    ctx.out.prepare()?;
    match command {
        "poles" => poles(ctx),
        "sensitivity" => sensitivity(ctx),
        "constants" => constants(ctx),
        "forward" => forward(ctx),
        "reconstruct-linear" => reconstruct_linear(ctx),
        "invert" => invert(ctx),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

