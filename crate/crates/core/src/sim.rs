//! Fixed-step Euler–Maruyama ensembles with first-exit detection.
//!
//! Path `i` of an ensemble draws its Wiener increments from
//! `ChaCha8Rng::seed_from_u64(master_seed)` switched to stream `i`, and
//! turns them into normals with `rand_distr::StandardNormal` (ziggurat).
//! Each increment is `√dt · z`, one `z` per noise channel, per step, in
//! channel order. Paths therefore do not depend on scheduling or on how
//! many paths run alongside them.
//!
//! Exits are detected on the step grid only; a crossing and return within
//! one step goes unnoticed.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::clopper_pearson;
use crate::calculus::ControlAffineSde;
use crate::certificates::SafeSet;
use crate::compensators::Compensator;
use crate::error::{Error, Result};

/// Confidence level of the intervals in [`EnsembleSummary`].
pub const SUMMARY_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Keep every `record_stride`-th step (the final step is always kept).
    pub record_stride: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", self.dt, "must be positive and finite"));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::param("horizon", self.horizon, "must be finite and at least dt"));
        }
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", 0.0, "must be at least 1"));
        }
        if self.record_stride == 0 {
            return Err(Error::param("record_stride", 0.0, "must be at least 1"));
        }
        Ok(())
    }

    /// Number of Euler steps; the last step lands on `horizon` up to
    /// rounding of `horizon / dt`.
    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    /// Step indices that are recorded.
    pub fn recorded_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut steps: Vec<usize> = (0..=n).step_by(self.record_stride).collect();
        if *steps.last().unwrap() != n {
            steps.push(n);
        }
        steps
    }

    pub fn times(&self) -> Vec<f64> {
        self.recorded_steps()
            .into_iter()
            .map(|k| k as f64 * self.dt)
            .collect()
    }
}

/// The Wiener increments of one path.
#[derive(Debug, Clone)]
pub struct WienerSource {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
}

impl WienerSource {
    pub fn new(master_seed: u64, path_index: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(path_index);
        Self {
            rng,
            sqrt_dt: dt.sqrt(),
        }
    }

    /// Fills `dw` with independent `N(0, dt)` draws.
    pub fn fill(&mut self, dw: &mut [f64]) {
        for v in dw {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v = self.sqrt_dt * z;
        }
    }
}

/// One simulated path, thinned to the recorded steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub path_id: usize,
    /// RNG stream of this path.
    pub path_seed: u64,
    pub times: Vec<f64>,
    /// Row-major, `n` entries per recorded time.
    pub states: Vec<f64>,
    /// Compensator output at each recorded state, `m` entries per time.
    pub u: Vec<f64>,
    pub u_o: Vec<f64>,
    pub h: Vec<f64>,
    /// First step time with `h ≤ 0`.
    pub exit_time_chi: Option<f64>,
    /// First step time with `h ≤ 0` or `h > μ`.
    pub exit_time_chi_mu: Option<f64>,
    /// Set when the compensator became undefined after leaving `χ`; the
    /// state is held from then on and `u` is recorded as NaN.
    pub stopped_at: Option<f64>,
}

impl SamplePath {
    pub fn state_dim(&self) -> usize {
        self.states.len() / self.times.len()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let n = self.state_dim();
        &self.states[k * n..(k + 1) * n]
    }

    pub fn exited_chi_by(&self, t: f64) -> bool {
        self.exit_time_chi.is_some_and(|e| e <= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub config: SimConfig,
    pub paths: Vec<SamplePath>,
    /// Pointwise path average, row-major like `SamplePath::states`.
    pub mean_trajectory: Vec<f64>,
}

impl PathEnsemble {
    fn new(config: SimConfig, paths: Vec<SamplePath>) -> Self {
        let len = paths[0].states.len();
        let mut mean = vec![0.0; len];
        for p in &paths {
            for (m, s) in mean.iter_mut().zip(&p.states) {
                *m += s;
            }
        }
        let n = paths.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Self {
            config,
            paths,
            mean_trajectory: mean,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.paths[0].times
    }

    pub fn summary(&self) -> Result<EnsembleSummary> {
        let n = self.paths.len();
        let chi = self.paths.iter().filter(|p| p.exit_time_chi.is_some()).count();
        let chi_mu = self
            .paths
            .iter()
            .filter(|p| p.exit_time_chi_mu.is_some())
            .count();
        let (ci_low, ci_high) = clopper_pearson(chi as u64, n as u64, SUMMARY_CONFIDENCE)?;
        Ok(EnsembleSummary {
            n_paths: n,
            exit_fraction_chi: chi as f64 / n as f64,
            exit_fraction_chi_mu: chi_mu as f64 / n as f64,
            ci_low,
            ci_high,
            config: self.config,
        })
    }

    /// Writes `path_id,t,x_1..x_n,u,u_o,h,exited_chi`, one row per recorded
    /// step per path. With `m > 1` the inputs become `u_1..u_m,u_o_1..u_o_m`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_paths_csv(&self.paths, out)
    }
}

/// Writes paths in the trajectory CSV layout of [`PathEnsemble::write_csv`].
pub fn write_paths_csv<W: Write>(paths: &[SamplePath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = paths.first() else {
        return Err(Error::Empty("path set"));
    };
    let n = first.state_dim();
    let m = first.u.len() / first.times.len();
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    if m == 1 {
        header.extend(["u".to_string(), "u_o".to_string()]);
    } else {
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.extend((1..=m).map(|i| format!("u_o_{i}")));
    }
    header.extend(["h".to_string(), "exited_chi".to_string()]);
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for p in paths {
        for (k, &t) in p.times.iter().enumerate() {
            row.clear();
            row.push(p.path_id.to_string());
            row.push(t.to_string());
            row.extend(p.state(k).iter().map(f64::to_string));
            row.extend(p.u[k * m..(k + 1) * m].iter().map(f64::to_string));
            row.extend(p.u_o[k * m..(k + 1) * m].iter().map(f64::to_string));
            row.push(p.h[k].to_string());
            row.push(u8::from(p.exited_chi_by(t)).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub exit_fraction_chi: f64,
    pub exit_fraction_chi_mu: f64,
    /// 99% exact interval for `exit_fraction_chi`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub config: SimConfig,
}

/// Scratch buffers for allocation-free stepping.
struct Workspace {
    f: Vec<f64>,
    g: Vec<f64>,
    sigma: Vec<f64>,
    u: Vec<f64>,
    uo: Vec<f64>,
    dw: Vec<f64>,
}

impl Workspace {
    fn new(sys: &ControlAffineSde) -> Self {
        let (n, m, d) = (sys.state_dim(), sys.input_dim(), sys.noise_dim());
        Self {
            f: vec![0.0; n],
            g: vec![0.0; n * m],
            sigma: vec![0.0; n * d],
            u: vec![0.0; m],
            uo: vec![0.0; m],
            dw: vec![0.0; d],
        }
    }

    /// Evaluates `u = φ(x)` and `u_o(x)`.
    fn inputs(&mut self, sys: &ControlAffineSde, phi: &dyn Compensator, x: &[f64]) -> Result<()> {
        phi.apply(x, &mut self.u)?;
        sys.pre_input().eval_into(x, &mut self.uo);
        Ok(())
    }

    /// `x += {f + g(u_o + u)} dt + σ dw`, with `u`, `u_o` already evaluated.
    fn advance(&mut self, sys: &ControlAffineSde, x: &mut [f64], dt: f64, noise: bool) {
        let n = x.len();
        sys.drift_into(x, &mut self.f);
        sys.input_gain_into(x, &mut self.g);
        if noise {
            sys.diffusion().eval_into(x, &mut self.sigma);
        }
        for i in 0..n {
            let mut drift = self.f[i];
            for j in 0..self.u.len() {
                drift += self.g[i + n * j] * (self.uo[j] + self.u[j]);
            }
            let mut dx = drift * dt;
            if noise {
                for (k, dw) in self.dw.iter().enumerate() {
                    dx += self.sigma[i + n * k] * dw;
                }
            }
            x[i] += dx;
        }
    }
}

fn finite_or_blowup(values: &[f64], path: Option<usize>, t: f64, x: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup {
            path,
            t,
            state: x.to_vec(),
        })
    }
}

fn check_shapes(sys: &ControlAffineSde, phi: &dyn Compensator, x: &[f64]) -> Result<()> {
    if x.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: sys.state_dim(),
            got: x.len(),
        });
    }
    if phi.input_dim() != sys.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "compensator output",
            expected: sys.input_dim(),
            got: phi.input_dim(),
        });
    }
    Ok(())
}

/// `x′ = x + {f + g(u_o + φ)} dt + σ dW`.
pub fn euler_maruyama_step(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    x: &[f64],
    dt: f64,
    dw: &[f64],
) -> Result<Vec<f64>> {
    check_shapes(sys, phi, x)?;
    if !(dt > 0.0) {
        return Err(Error::param("dt", dt, "must be positive"));
    }
    if dw.len() != sys.noise_dim() {
        return Err(Error::DimensionMismatch {
            what: "Wiener increment",
            expected: sys.noise_dim(),
            got: dw.len(),
        });
    }
    let mut ws = Workspace::new(sys);
    ws.inputs(sys, phi, x)?;
    finite_or_blowup(&ws.u, None, 0.0, x)?;
    ws.dw.copy_from_slice(dw);
    let mut next = x.to_vec();
    ws.advance(sys, &mut next, dt, true);
    finite_or_blowup(&next, None, 0.0, x)?;
    Ok(next)
}

/// One explicit Euler step of the noise-free closed loop.
pub fn euler_step(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    x: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    check_shapes(sys, phi, x)?;
    let total = phi.eval(x)? + sys.u_o(x)?;
    let drift = sys.f(x)? + sys.g(x)? * total;
    let next: Vec<f64> = x.iter().zip(drift.iter()).map(|(a, d)| a + d * dt).collect();
    finite_or_blowup(&next, None, 0.0, x)?;
    Ok(next)
}

fn run_path(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    x0: &[f64],
    safe: &SafeSet,
    cfg: &SimConfig,
    path_index: usize,
    noise: bool,
) -> Result<SamplePath> {
    check_shapes(sys, phi, x0)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("x0", f64::NAN, "must be finite"));
    }
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let steps = cfg.n_steps();
    let recorded = cfg.recorded_steps();
    let cap = recorded.len();
    let mut path = SamplePath {
        path_id: path_index,
        path_seed: path_index as u64,
        times: Vec::with_capacity(cap),
        states: Vec::with_capacity(cap * n),
        u: Vec::with_capacity(cap * m),
        u_o: Vec::with_capacity(cap * m),
        h: Vec::with_capacity(cap),
        exit_time_chi: None,
        exit_time_chi_mu: None,
        stopped_at: None,
    };
    let mut rng = WienerSource::new(cfg.master_seed, path_index as u64, cfg.dt);
    let mut ws = Workspace::new(sys);
    let mut x = x0.to_vec();
    let mut next_record = 0;
    let mu = safe.mu();
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let h = safe.value(&x);
        if path.exit_time_chi.is_none() && h <= 0.0 {
            path.exit_time_chi = Some(t);
        }
        if path.exit_time_chi_mu.is_none() && (h <= 0.0 || h > mu) {
            path.exit_time_chi_mu = Some(t);
        }
        if path.stopped_at.is_none() {
            match ws.inputs(sys, phi, &x) {
                Ok(()) => finite_or_blowup(&ws.u, Some(path_index), t, &x)?,
                Err(Error::OutsideDomain { .. }) if path.exit_time_chi.is_some() => {
                    path.stopped_at = Some(t);
                }
                Err(e) => return Err(e),
            }
        }
        if path.stopped_at.is_some() {
            ws.u.fill(f64::NAN);
            sys.pre_input().eval_into(&x, &mut ws.uo);
        }
        if recorded[next_record] == k {
            path.times.push(t);
            path.states.extend_from_slice(&x);
            path.u.extend_from_slice(&ws.u);
            path.u_o.extend_from_slice(&ws.uo);
            path.h.push(h);
            next_record += 1;
        }
        if k == steps {
            break;
        }
        if noise {
            // drawn even for a stopped path so the stream position is fixed
            rng.fill(&mut ws.dw);
        }
        if path.stopped_at.is_none() {
            ws.advance(sys, &mut x, cfg.dt, noise);
            finite_or_blowup(&x, Some(path_index), t + cfg.dt, &x)?;
        }
    }
    Ok(path)
}

/// Simulates path `path_index` of the ensemble defined by `cfg`.
///
/// Integration continues after an exit; exit times keep the first
/// crossing. A compensator that is undefined outside `χ` stops the path
/// once it has exited (see [`SamplePath::stopped_at`]); any other failure is
/// an error.
pub fn simulate_path(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    x0: &[f64],
    safe: &SafeSet,
    cfg: &SimConfig,
    path_index: usize,
) -> Result<SamplePath> {
    cfg.validate()?;
    run_path(sys, phi, x0, safe, cfg, path_index, true)
}

/// The noise-free closed loop on the same step grid, integrated with the
/// same stepper as [`simulate_path`].
pub fn deterministic_path(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    x0: &[f64],
    safe: &SafeSet,
    cfg: &SimConfig,
) -> Result<SamplePath> {
    cfg.validate()?;
    run_path(sys, phi, x0, safe, cfg, 0, false)
}

/// `cfg.n_paths` independent paths, run in parallel and assembled in index
/// order. The error reported is that of the lowest failing path index.
pub fn simulate_ensemble(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    x0: &[f64],
    safe: &SafeSet,
    cfg: &SimConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    let results: Vec<Result<SamplePath>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| run_path(sys, phi, x0, safe, cfg, i, true))
        .collect();
    let paths = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble::new(*cfg, paths))
}
