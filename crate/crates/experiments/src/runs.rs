use std::sync::Arc;

use serde::Serialize;

use scbf::analysis::{
    compare_bound_sweep, estimate_exit_probability, mu_zone_trace, write_sweep_csv, ExitBound,
    LogTrend, SafetyVerdict, SweepSetup,
};
use scbf::calculus::AffineField;
use scbf::certificates::{
    check_as_rcbf, check_as_zcbf, check_stochastic_zcbf, field, safety_probability_bound,
    BOUNDARY_CLIP,
};
use scbf::compensators::{
    barrier_fields_example1, barrier_fields_example2, derive_example1_params,
    derive_example2_params, example1_compensator, example2_compensator, min_norm_compensator,
    motivating_compensators, Example1Params, Example2Params,
};
use scbf::sim::{
    deterministic_path, simulate_ensemble, write_paths_csv, EnsembleSummary, PathEnsemble,
    SamplePath, SimConfig,
};
use scbf::{
    CertificateReport, Compensator, ControlAffineSde, FieldRef, Grid, PreInput, SafeSet,
    ScalarField,
};

use crate::{
    CheckExample, CheckKind, Experiment, ExperimentConfig, ExperimentError, RunReport, SimSettings,
};

type Res<T> = Result<T, ExperimentError>;

/// Dispatches on `cfg.experiment`.
pub fn run(cfg: &ExperimentConfig) -> Res<RunReport> {
    match cfg.experiment {
        Experiment::Motivation => run_motivation(cfg),
        Experiment::Example1 => run_example1(cfg),
        Experiment::Example2 => run_example2(cfg),
        Experiment::Sweep => run_sweep(cfg),
        Experiment::Check => run_check(cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateEntry {
    pub compensator: String,
    pub field: String,
    pub report: CertificateReport,
}

#[derive(Serialize)]
struct CertificatesDoc<'a> {
    all_passed: bool,
    checks: &'a [CertificateEntry],
}

#[derive(Serialize)]
struct ParamsDoc<'a, P: Serialize> {
    params: &'a P,
    safety_probability: f64,
    exit_cap: f64,
}

#[derive(Serialize)]
struct DeterministicSummary {
    exit_time_chi: Option<f64>,
    final_state: Vec<f64>,
    final_h: f64,
}

#[derive(Serialize)]
struct MuZoneSummary {
    x0: f64,
    w_hat_0: f64,
    trend: LogTrend,
    non_increasing: bool,
}

#[derive(Serialize)]
struct SummaryDoc {
    ensemble: EnsembleSummary,
    verdict_consistent: bool,
    certificates_passed: bool,
    deterministic: DeterministicSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_zone: Option<MuZoneSummary>,
}

/// The two ensembles of the motivating example.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub phi_hs: EnsembleSummary,
    pub phi_bs: EnsembleSummary,
    /// Paths under `φ_{B_s}` stopped after leaving `χ`.
    pub phi_bs_stopped: usize,
    /// Fewer exits under `φ_{B_s}` than under `φ_{h_s}`.
    pub ordering_holds: bool,
}

fn entry(phi: &dyn Compensator, field: &str, report: CertificateReport) -> CertificateEntry {
    CertificateEntry {
        compensator: phi.label().to_string(),
        field: field.to_string(),
        report,
    }
}

/// `(AS grid on χ₁, stochastic grid on {h₁ ≤ μ₁})`, each with about
/// `points` points. The AS grid is clipped to `h ≥ 1e−6` and dense near
/// `∂χ₁`; the stochastic grid covers the boundary side of `{h₁ ≤ μ₁}`.
pub fn example1_certificate_grids(
    p: &Example1Params,
    h: &dyn ScalarField,
    safe: &SafeSet,
    points: usize,
) -> Res<(Grid, Grid)> {
    let half = (points / 2).max(2);
    let span = 49.0;
    let as_grid = Grid::geomspace_from(p.alpha, BOUNDARY_CLIP, span, half)
        .union(&Grid::linspace(p.alpha, p.alpha + span, points - half))?
        .clip(h, BOUNDARY_CLIP);
    let stoch = Grid::linspace(p.alpha - 5.0, p.x_mu1, points).filter(|x| safe.at_or_below_mu(x));
    Ok((as_grid, stoch))
}

/// As [`example1_certificate_grids`] for `χ₂`. The stochastic grid covers
/// both outer half-lines and both boundary layers.
pub fn example2_certificate_grids(
    p: &Example2Params,
    h: &dyn ScalarField,
    safe: &SafeSet,
    points: usize,
) -> Res<(Grid, Grid)> {
    let (lo, hi) = (p.alpha - p.beta, p.alpha + p.beta);
    let q = (points / 4).max(2);
    let as_grid = Grid::geomspace_from(lo, BOUNDARY_CLIP, p.beta, q)
        .union(&Grid::geomspace_from(hi, -BOUNDARY_CLIP, -p.beta, q))?
        .union(&Grid::linspace(lo, hi, points - 2 * q))?
        .clip(h, BOUNDARY_CLIP);
    let (left, right) = (p.x_mu2[0] - lo, hi - p.x_mu2[1]);
    let outer = (points / 10).max(2);
    let layer = ((points - 2 * outer) / 2).max(2);
    let stoch = Grid::linspace(lo - 3.0 * p.beta, lo, outer)
        .union(&Grid::linspace(hi, hi + 3.0 * p.beta, outer))?
        .union(&Grid::geomspace_from(lo, left * 1e-6, left, layer))?
        .union(&Grid::geomspace_from(hi, -right * 1e-6, -right, layer))?
        .filter(|x| safe.at_or_below_mu(x));
    Ok((as_grid, stoch))
}

struct Example1Setup {
    p: Example1Params,
    sys: ControlAffineSde,
    h: FieldRef,
    b_field: scbf::compensators::Example1Reciprocal,
    safe: SafeSet,
    phi: scbf::compensators::SaturatedExample1,
}

fn example1_setup(cfg: &ExperimentConfig) -> Res<Example1Setup> {
    let pl = &cfg.plant;
    let p = derive_example1_params(pl.alpha, pl.gamma, pl.c, pl.u_max, pl.n_cut)?;
    let u_o = PreInput::constant(vec![pl.u_o]);
    let sys = ControlAffineSde::integrator(pl.c, u_o.clone())?;
    let (h, b_field) = barrier_fields_example1(&p);
    let h: FieldRef = Arc::new(h);
    let safe = SafeSet::new(h.clone(), p.mu1)?;
    let phi = example1_compensator(&p, u_o);
    Ok(Example1Setup {
        p,
        sys,
        h,
        b_field,
        safe,
        phi,
    })
}

fn example1_certificates(s: &Example1Setup, points: usize) -> Res<Vec<CertificateEntry>> {
    let (as_grid, stoch) = example1_certificate_grids(&s.p, &*s.h, &s.safe, points)?;
    let phi_n = min_norm_compensator(&s.sys, s.h.clone(), s.p.gamma)?;
    Ok(vec![
        entry(&phi_n, "h1", check_as_zcbf(&s.sys, &phi_n, &s.h, s.p.gamma, &as_grid)?),
        entry(&phi_n, "B1", check_as_rcbf(&s.sys, &phi_n, &s.b_field, s.p.gamma, &as_grid)?),
        entry(&s.phi, "h1", check_stochastic_zcbf(&s.sys, &s.phi, &s.safe, s.p.b1, &stoch)?),
    ])
}

struct Example2Setup {
    p: Example2Params,
    sys: ControlAffineSde,
    h: FieldRef,
    b_field: scbf::calculus::Reciprocal,
    safe: SafeSet,
    phi_n2: scbf::compensators::MinNormExample2,
    phi: scbf::compensators::SaturatedExample2,
}

fn example2_setup(cfg: &ExperimentConfig) -> Res<Example2Setup> {
    let pl = &cfg.plant;
    let p = derive_example2_params(pl.alpha, pl.beta, pl.c, pl.u_max)?;
    let u_o = PreInput::constant(vec![pl.u_o]);
    let sys = ControlAffineSde::integrator(pl.c, u_o.clone())?;
    let (h, b_field) = barrier_fields_example2(&p);
    let h: FieldRef = Arc::new(h);
    let safe = SafeSet::new(h.clone(), p.mu2)?;
    let (phi_n2, phi) = example2_compensator(&p, u_o);
    Ok(Example2Setup {
        p,
        sys,
        h,
        b_field,
        safe,
        phi_n2,
        phi,
    })
}

fn example2_certificates(s: &Example2Setup, points: usize) -> Res<Vec<CertificateEntry>> {
    let (as_grid, stoch) = example2_certificate_grids(&s.p, &*s.h, &s.safe, points)?;
    let g = s.p.gamma2;
    Ok(vec![
        entry(&s.phi_n2, "h2", check_as_zcbf(&s.sys, &s.phi_n2, &s.h, g, &as_grid)?),
        entry(&s.phi_n2, "B2", check_as_rcbf(&s.sys, &s.phi_n2, &s.b_field, g, &as_grid)?),
        entry(&s.phi, "h2", check_stochastic_zcbf(&s.sys, &s.phi, &s.safe, s.p.b2, &stoch)?),
    ])
}

fn push_certificates(rep: &mut RunReport, entries: &[CertificateEntry]) -> Res<bool> {
    let all_passed = entries.iter().all(|e| e.report.passed);
    for e in entries {
        rep.line(format!(
            "{:?} {} / {}: {} (worst margin {:.3e} at {:?}, {} points)",
            e.report.kind,
            e.compensator,
            e.field,
            if e.report.passed { "passed" } else { "FAILED" },
            e.report.worst_margin,
            e.report.worst_point,
            e.report.points_checked
        ));
    }
    rep.json(
        "certificates.json",
        &CertificatesDoc {
            all_passed,
            checks: entries,
        },
    )?;
    Ok(all_passed)
}

fn sim_config(s: &SimSettings, n_paths: usize, record_stride: usize) -> SimConfig {
    SimConfig {
        dt: s.dt,
        horizon: s.horizon,
        n_paths,
        master_seed: s.master_seed,
        record_stride,
    }
}

fn csv_bytes(paths: &[SamplePath]) -> Res<Vec<u8>> {
    let mut buf = Vec::new();
    write_paths_csv(paths, &mut buf)?;
    Ok(buf)
}

/// `t,x_1..x_n,u,u_o,h` averaged over `paths`.
fn mean_csv(paths: &[SamplePath]) -> Res<Vec<u8>> {
    let first = &paths[0];
    let n = first.state_dim();
    let len = first.times.len();
    let np = paths.len() as f64;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend(["u".into(), "u_o".into(), "h".into()]);
    w.write_record(&header).map_err(scbf::Error::from)?;
    for k in 0..len {
        let mut row = vec![first.times[k].to_string()];
        for i in 0..n {
            row.push((paths.iter().map(|p| p.state(k)[i]).sum::<f64>() / np).to_string());
        }
        row.push((paths.iter().map(|p| p.u[k]).sum::<f64>() / np).to_string());
        row.push((paths.iter().map(|p| p.u_o[k]).sum::<f64>() / np).to_string());
        row.push((paths.iter().map(|p| p.h[k]).sum::<f64>() / np).to_string());
        w.write_record(&row).map_err(scbf::Error::from)?;
    }
    w.into_inner().map_err(|e| ExperimentError::Io(e.to_string()))
}

fn profile_csv(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Res<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(scbf::Error::from)?;
    for r in rows {
        w.write_record(r.iter().map(f64::to_string)).map_err(scbf::Error::from)?;
    }
    w.into_inner().map_err(|e| ExperimentError::Io(e.to_string()))
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

struct EnsembleOutcome {
    summary: EnsembleSummary,
    verdict: SafetyVerdict,
    deterministic: DeterministicSummary,
}

/// Full ensemble for the verdict, the first `paths_written` paths at the
/// recording stride, and the noise-free overlay.
fn simulate_and_judge(
    rep: &mut RunReport,
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    safe: &SafeSet,
    s: &SimSettings,
    b: f64,
) -> Res<EnsembleOutcome> {
    let x0 = [s.x0];
    let h0 = safe.value(&x0);
    if !(h0 > 0.0) {
        return Err(ExperimentError::Validation(format!(
            "sim.x0: {} lies outside the safe set (h = {h0})",
            s.x0
        )));
    }
    let bound = if h0 > safe.mu() {
        ExitBound::Layer { b, mu: safe.mu() }
    } else {
        ExitBound::Initial { b, level: h0 }
    };
    let full = simulate_ensemble(sys, phi, &x0, safe, &sim_config(s, s.n_paths, usize::MAX))?;
    let summary = full.summary()?;
    let verdict = estimate_exit_probability(&full, s.horizon, bound)?;
    drop(full);

    let shown = s.paths_written.min(s.n_paths);
    if shown > 0 {
        let ens = simulate_ensemble(sys, phi, &x0, safe, &sim_config(s, shown, s.record_stride))?;
        rep.push("trajectories.csv", csv_bytes(&ens.paths)?);
        rep.push("mean.csv", mean_csv(&ens.paths)?);
    }
    let det = deterministic_path(sys, phi, &x0, safe, &sim_config(s, 1, s.record_stride))?;
    rep.push("deterministic.csv", csv_bytes(std::slice::from_ref(&det))?);
    let last = det.times.len() - 1;
    let deterministic = DeterministicSummary {
        exit_time_chi: det.exit_time_chi,
        final_state: det.state(last).to_vec(),
        final_h: det.h[last],
    };

    rep.json("verdict.json", &verdict)?;
    rep.line(format!(
        "exits from chi: {}/{} = {:.4} (99% CI [{:.4}, {:.4}]), cap {:.4}: {}",
        verdict.exits,
        verdict.n_paths,
        verdict.empirical_exit_prob,
        verdict.ci[0],
        verdict.ci[1],
        verdict.theoretical_exit_cap,
        if verdict.consistent { "consistent" } else { "INCONSISTENT" }
    ));
    rep.line(format!(
        "noise-free path: exit {:?}, final h = {:.6}",
        deterministic.exit_time_chi, deterministic.final_h
    ));
    rep.line("note: exits are detected on the step grid; crossings between steps are missed");
    rep.consistent &= verdict.consistent;
    Ok(EnsembleOutcome {
        summary,
        verdict,
        deterministic,
    })
}

fn write_summary(
    rep: &mut RunReport,
    out: EnsembleOutcome,
    certificates_passed: bool,
    mu_zone: Option<MuZoneSummary>,
) -> Res<()> {
    rep.json(
        "summary.json",
        &SummaryDoc {
            ensemble: out.summary,
            verdict_consistent: out.verdict.consistent,
            certificates_passed,
            deterministic: out.deterministic,
            mu_zone,
        },
    )
}

pub fn run_example1(cfg: &ExperimentConfig) -> Res<RunReport> {
    cfg.validate()?;
    let s = example1_setup(cfg)?;
    let p = &s.p;
    let mut rep = RunReport::new(Experiment::Example1);

    let safety = safety_probability_bound(p.b1, p.mu1)?;
    rep.json(
        "params.json",
        &ParamsDoc {
            params: p,
            safety_probability: safety,
            exit_cap: 1.0 - safety,
        },
    )?;
    rep.line(format!(
        "mu1 = {:.7}, x_mu1 = {:.5}, b1 = {}, D = {:.5}, safety probability {:.4}",
        p.mu1, p.x_mu1, p.b1, p.d, safety
    ));

    let passed = push_certificates(&mut rep, &example1_certificates(&s, cfg.check.points)?)?;

    let zero = example1_compensator(p, PreInput::constant(vec![0.0]));
    let rows = linspace(p.alpha - 0.5, p.alpha + 3.0, 3501).map(|x| {
        let h = s.h.value(&[x]);
        vec![x, h, zero.value(x)]
    });
    rep.push("compensator_profile.csv", profile_csv(&["x", "h", "phi"], rows)?);
    let rows = linspace(p.alpha + 1e-4, p.alpha + 8.0, 4000).map(|x| {
        let h = s.h.value(&[x]);
        vec![x, h, 1.0 / h]
    });
    rep.push("field_profile.csv", profile_csv(&["x", "h", "b"], rows)?);

    let out = simulate_and_judge(&mut rep, &s.sys, &s.phi, &s.safe, &cfg.sim, p.b1)?;

    let mut mu_zone = None;
    if cfg.mu_zone.enabled {
        let m = &cfg.mu_zone;
        let c = SimConfig {
            dt: m.dt,
            horizon: m.horizon,
            n_paths: m.n_paths,
            master_seed: cfg.sim.master_seed,
            record_stride: m.record_stride,
        };
        let ens: PathEnsemble = simulate_ensemble(&s.sys, &s.phi, &[p.alpha], &s.safe, &c)?;
        let trace = mu_zone_trace(&ens, &*s.h, p.b1, p.mu1)?;
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        rep.push("mu_zone.csv", buf);
        let trend = trace.trend();
        rep.line(format!(
            "mu-zone from x0 = alpha: W(0) = {:.4}, log-slope {:.3} ± {:.3}",
            trace.w_hat[0], trend.slope, trend.std_error
        ));
        mu_zone = Some(MuZoneSummary {
            x0: p.alpha,
            w_hat_0: trace.w_hat[0],
            trend,
            non_increasing: trend.non_increasing_within(3.0),
        });
    }
    write_summary(&mut rep, out, passed, mu_zone)?;
    Ok(rep)
}

pub fn run_example2(cfg: &ExperimentConfig) -> Res<RunReport> {
    cfg.validate()?;
    let s = example2_setup(cfg)?;
    let p = &s.p;
    let mut rep = RunReport::new(Experiment::Example2);

    let safety = safety_probability_bound(p.b2, p.mu2)?;
    rep.json(
        "params.json",
        &ParamsDoc {
            params: p,
            safety_probability: safety,
            exit_cap: 1.0 - safety,
        },
    )?;
    rep.line(format!(
        "x_mu2 = [{:.6}, {:.6}], mu2 = {:.4e}, b2 = {:.2} (b21 = {:.2}, b22 = {:.5}), safety probability {:.4}",
        p.x_mu2[0], p.x_mu2[1], p.mu2, p.b2, p.b21, p.b22, safety
    ));

    let passed = push_certificates(&mut rep, &example2_certificates(&s, cfg.check.points)?)?;

    let (_, zero) = example2_compensator(p, PreInput::constant(vec![0.0]));
    let (lo, hi) = (p.alpha - p.beta, p.alpha + p.beta);
    let rows = linspace(lo - 0.5 * p.beta, hi + 0.5 * p.beta, 4001).map(|x| {
        let h = s.h.value(&[x]);
        vec![x, h, zero.value(x)]
    });
    rep.push("compensator_profile.csv", profile_csv(&["x", "h", "phi"], rows)?);
    let rows = linspace(lo - 0.5 * p.beta, hi + 0.5 * p.beta, 4001).map(|x| {
        let h = s.h.value(&[x]);
        vec![x, h, 1.0 / h]
    });
    rep.push("field_profile.csv", profile_csv(&["x", "h", "b"], rows)?);

    let out = simulate_and_judge(&mut rep, &s.sys, &s.phi, &s.safe, &cfg.sim, p.b2)?;
    write_summary(&mut rep, out, passed, None)?;
    Ok(rep)
}

pub fn run_motivation(cfg: &ExperimentConfig) -> Res<RunReport> {
    cfg.validate()?;
    let pl = &cfg.plant;
    let u_o = PreInput::constant(vec![pl.u_o]);
    let sys = ControlAffineSde::integrator(pl.c, u_o.clone())?;
    let (phi_hs, phi_bs) = motivating_compensators(pl.alpha, pl.gamma, pl.c, u_o)?;
    // Only exits from χ are reported; the layer width is immaterial here.
    let safe = SafeSet::new(field(AffineField::new(vec![1.0], -pl.alpha)), 1.0)?;
    let x0 = [cfg.sim.x0];
    if !(safe.value(&x0) > 0.0) {
        return Err(ExperimentError::Validation(format!(
            "sim.x0: {} must exceed alpha = {}",
            cfg.sim.x0, pl.alpha
        )));
    }
    let s = &cfg.sim;
    let mut rep = RunReport::new(Experiment::Motivation);

    let full = sim_config(s, s.n_paths, usize::MAX);
    let hs = simulate_ensemble(&sys, &phi_hs, &x0, &safe, &full)?;
    let bs = simulate_ensemble(&sys, &phi_bs, &x0, &safe, &full)?;
    let comparison = Comparison {
        phi_hs: hs.summary()?,
        phi_bs: bs.summary()?,
        phi_bs_stopped: bs.paths.iter().filter(|p| p.stopped_at.is_some()).count(),
        ordering_holds: bs.summary()?.exit_fraction_chi < hs.summary()?.exit_fraction_chi,
    };
    drop((hs, bs));

    let shown = s.paths_written.min(s.n_paths);
    if shown > 0 {
        let c = sim_config(s, shown, s.record_stride);
        let hs = simulate_ensemble(&sys, &phi_hs, &x0, &safe, &c)?;
        let bs = simulate_ensemble(&sys, &phi_bs, &x0, &safe, &c)?;
        rep.push("trajectories_phi_hs.csv", csv_bytes(&hs.paths)?);
        rep.push("trajectories_phi_bs.csv", csv_bytes(&bs.paths)?);
    }
    rep.line(format!(
        "phi_hs: exit fraction {:.4} (99% CI [{:.4}, {:.4}])",
        comparison.phi_hs.exit_fraction_chi, comparison.phi_hs.ci_low, comparison.phi_hs.ci_high
    ));
    rep.line(format!(
        "phi_Bs: exit fraction {:.4} (99% CI [{:.4}, {:.4}]), {} paths stopped after exit",
        comparison.phi_bs.exit_fraction_chi,
        comparison.phi_bs.ci_low,
        comparison.phi_bs.ci_high,
        comparison.phi_bs_stopped
    ));
    rep.line(format!("ordering phi_Bs < phi_hs: {}", comparison.ordering_holds));
    rep.json("comparison.json", &comparison)?;
    Ok(rep)
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Res<RunReport> {
    cfg.validate()?;
    let s = example1_setup(cfg)?;
    let mut rep = RunReport::new(Experiment::Sweep);
    let safety = safety_probability_bound(s.p.b1, s.p.mu1)?;
    rep.json(
        "params.json",
        &ParamsDoc {
            params: &s.p,
            safety_probability: safety,
            exit_cap: 1.0 - safety,
        },
    )?;
    let setup = SweepSetup {
        sys: s.sys.clone(),
        phi: Arc::new(s.phi.clone()),
        safe: s.safe.clone(),
        x0: vec![cfg.sim.x0],
        cfg: sim_config(&cfg.sim, cfg.sim.n_paths, usize::MAX),
        b: s.p.b1,
    };
    let rows = compare_bound_sweep(&setup, &cfg.a_values)?;
    for r in &rows {
        rep.line(format!(
            "a = {}: exits {:.4} (99% CI [{:.4}, {:.4}]), cap {:.3e}: {}",
            r.a,
            r.empirical,
            r.ci_low,
            r.ci_high,
            r.cap,
            if r.consistent { "consistent" } else { "INCONSISTENT" }
        ));
    }
    rep.consistent = rows.iter().all(|r| r.consistent);
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    rep.push("sweep.csv", buf);
    Ok(rep)
}

pub fn run_check(cfg: &ExperimentConfig) -> Res<RunReport> {
    cfg.validate()?;
    let c = &cfg.check;
    let mut rep = RunReport::new(Experiment::Check);
    let entry = match c.example {
        CheckExample::Example1 => {
            let s = example1_setup(cfg)?;
            let gamma = c.gamma.unwrap_or(s.p.gamma);
            let (as_grid, stoch) = example1_certificate_grids(&s.p, &*s.h, &s.safe, c.points)?;
            match c.kind {
                CheckKind::AsRcbf | CheckKind::AsZcbf => {
                    let phi_n = min_norm_compensator(&s.sys, s.h.clone(), gamma)?;
                    if c.kind == CheckKind::AsRcbf {
                        entry(&phi_n, "B1", check_as_rcbf(&s.sys, &phi_n, &s.b_field, gamma, &as_grid)?)
                    } else {
                        entry(&phi_n, "h1", check_as_zcbf(&s.sys, &phi_n, &s.h, gamma, &as_grid)?)
                    }
                }
                CheckKind::StochasticZcbf => {
                    let b = c.b.unwrap_or(s.p.b1);
                    entry(&s.phi, "h1", check_stochastic_zcbf(&s.sys, &s.phi, &s.safe, b, &stoch)?)
                }
            }
        }
        CheckExample::Example2 => {
            let s = example2_setup(cfg)?;
            let gamma = c.gamma.unwrap_or(s.p.gamma2);
            let (as_grid, stoch) = example2_certificate_grids(&s.p, &*s.h, &s.safe, c.points)?;
            match c.kind {
                CheckKind::AsRcbf => entry(
                    &s.phi_n2,
                    "B2",
                    check_as_rcbf(&s.sys, &s.phi_n2, &s.b_field, gamma, &as_grid)?,
                ),
                CheckKind::AsZcbf => entry(
                    &s.phi_n2,
                    "h2",
                    check_as_zcbf(&s.sys, &s.phi_n2, &s.h, gamma, &as_grid)?,
                ),
                CheckKind::StochasticZcbf => {
                    let b = c.b.unwrap_or(s.p.b2);
                    entry(&s.phi, "h2", check_stochastic_zcbf(&s.sys, &s.phi, &s.safe, b, &stoch)?)
                }
            }
        }
    };
    push_certificates(&mut rep, std::slice::from_ref(&entry))?;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_respect_their_regions() {
        let cfg = ExperimentConfig::defaults(Experiment::Example2);
        let s = example2_setup(&cfg).unwrap();
        let (as_grid, stoch) = example2_certificate_grids(&s.p, &*s.h, &s.safe, 2000).unwrap();
        assert!(as_grid.iter().all(|x| s.h.value(x) >= BOUNDARY_CLIP));
        assert!(stoch.iter().all(|x| s.safe.at_or_below_mu(x)));
        assert!(as_grid.len() > 1900 && stoch.len() > 1900);

        let cfg = ExperimentConfig::defaults(Experiment::Example1);
        let s = example1_setup(&cfg).unwrap();
        let (as_grid, stoch) = example1_certificate_grids(&s.p, &*s.h, &s.safe, 2000).unwrap();
        assert!(as_grid.iter().all(|x| s.h.value(x) >= BOUNDARY_CLIP));
        assert!(stoch.iter().all(|x| s.safe.at_or_below_mu(x)));
    }

    #[test]
    fn mean_of_one_path_is_the_path() {
        let cfg = ExperimentConfig::defaults(Experiment::Example1);
        let s = example1_setup(&cfg).unwrap();
        let c = SimConfig {
            dt: 1e-2,
            horizon: 0.1,
            n_paths: 1,
            master_seed: 0,
            record_stride: 1,
        };
        let ens = simulate_ensemble(&s.sys, &s.phi, &[4.0], &s.safe, &c).unwrap();
        let text = String::from_utf8(mean_csv(&ens.paths).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,u,u_o,h");
        assert_eq!(lines.len(), ens.paths[0].times.len() + 1);
        let x1: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(x1, ens.paths[0].state(1)[0]);
    }
}
