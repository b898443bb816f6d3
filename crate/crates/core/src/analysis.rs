//! Statistical verdicts on ensembles.
//!
//! The probability bounds hold on an infinite horizon; an ensemble only
//! covers `[0, T]`. A verdict can therefore falsify a bound but never
//! confirm it.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::calculus::{ControlAffineSde, ScalarField};
use crate::certificates::{safety_probability_bound, scaled_safety_bound, SafeSet};
use crate::compensators::CompensatorRef;
use crate::error::{Error, Result};
use crate::sim::{simulate_ensemble, PathEnsemble, SimConfig};

/// Confidence level of every verdict interval.
pub const VERDICT_CONFIDENCE: f64 = 0.99;
/// Floor added before taking logs of `Ŵ`.
pub const EPS_FLOOR: f64 = 1e-12;

/// Exact (Clopper–Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Empty("sample"));
    }
    if successes > trials {
        return Err(Error::param("successes", successes as f64, "exceeds trials"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::param("confidence", confidence, "must lie in (0, 1)"));
    }
    let tail = 0.5 * (1.0 - confidence);
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        inv_beta_reg(k, n - k + 1.0, tail)
    };
    let hi = if successes == trials {
        1.0
    } else {
        inv_beta_reg(k + 1.0, n - k, 1.0 - tail)
    };
    Ok((lo, hi))
}

/// Which closed-form cap an exit fraction is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExitBound {
    /// `e^{−bμ}`, for starts with `h(x₀) > μ`.
    Layer { b: f64, mu: f64 },
    /// `e^{−b h(x₀)}`, for starts inside the layer.
    Initial { b: f64, level: f64 },
    /// `e^{−bμ/a²}`, for the plant with diffusion scaled by `a`.
    Scaled { b: f64, mu: f64, a: f64 },
}

impl ExitBound {
    /// The cap on the exit probability, `1 −` the safety bound.
    pub fn cap(&self) -> Result<f64> {
        Ok(1.0
            - match *self {
                ExitBound::Layer { b, mu } => safety_probability_bound(b, mu)?,
                ExitBound::Initial { b, level } => safety_probability_bound(b, level)?,
                ExitBound::Scaled { b, mu, a } => scaled_safety_bound(b, mu, a)?,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    pub empirical_exit_prob: f64,
    pub ci: [f64; 2],
    pub theoretical_exit_cap: f64,
    /// `ci[0] ≤ theoretical_exit_cap`.
    pub consistent: bool,
    pub n_paths: usize,
    pub exits: usize,
    pub horizon: f64,
    pub bound_kind: ExitBound,
}

impl SafetyVerdict {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci[1] - self.ci[0])
    }
}

/// Fraction of paths leaving `χ` by `horizon`, with a 99% exact interval.
pub fn estimate_exit_probability(
    ens: &PathEnsemble,
    horizon: f64,
    bound: ExitBound,
) -> Result<SafetyVerdict> {
    if ens.paths.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let simulated = *ens.times().last().unwrap();
    if !(horizon >= 0.0 && horizon <= simulated + 1e-12) {
        return Err(Error::param("horizon", horizon, "must lie within the simulated span"));
    }
    let n = ens.paths.len();
    let exits = ens.paths.iter().filter(|p| p.exited_chi_by(horizon)).count();
    let (lo, hi) = clopper_pearson(exits as u64, n as u64, VERDICT_CONFIDENCE)?;
    let cap = bound.cap()?;
    Ok(SafetyVerdict {
        empirical_exit_prob: exits as f64 / n as f64,
        ci: [lo, hi],
        theoretical_exit_cap: cap,
        consistent: lo <= cap,
        n_paths: n,
        exits,
        horizon,
        bound_kind: bound,
    })
}

/// `Ŵ(t) = ([Ê B_b(x(t)) − μ_b]₊)²` on the recorded grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuZoneTrace {
    pub b: f64,
    pub mu: f64,
    /// `e^{−bμ}`.
    pub mu_b: f64,
    pub times: Vec<f64>,
    pub w_hat: Vec<f64>,
    /// Ensemble mean of `B_b = e^{−bh}`.
    pub mean_bb: Vec<f64>,
    /// Standard error of `mean_bb`.
    pub se_bb: Vec<f64>,
}

/// Least-squares slope of `log(Ŵ + ε)` against `t` where `Ŵ > ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogTrend {
    pub slope: f64,
    pub std_error: f64,
    pub n_points: usize,
}

impl LogTrend {
    /// `slope ≤ k · std_error`.
    pub fn non_increasing_within(&self, k: f64) -> bool {
        self.slope <= k * self.std_error
    }
}

pub fn mu_zone_trace(ens: &PathEnsemble, h: &dyn ScalarField, b: f64, mu: f64) -> Result<MuZoneTrace> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("b", b, "must be positive and finite"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::param("mu", mu, "must be positive and finite"));
    }
    if ens.paths.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let times = ens.times().to_vec();
    let n = ens.paths.len() as f64;
    let mu_b = (-b * mu).exp();
    let mut mean_bb = Vec::with_capacity(times.len());
    let mut se_bb = Vec::with_capacity(times.len());
    let mut w_hat = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for p in &ens.paths {
            let v = (-b * h.value(p.state(k))).exp();
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n;
        let var = if n > 1.0 {
            ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        mean_bb.push(mean);
        se_bb.push((var / n).sqrt());
        let excess = (mean - mu_b).max(0.0);
        w_hat.push(excess * excess);
    }
    Ok(MuZoneTrace {
        b,
        mu,
        mu_b,
        times,
        w_hat,
        mean_bb,
        se_bb,
    })
}

impl MuZoneTrace {
    pub fn trend(&self) -> LogTrend {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.w_hat)
            .filter(|(_, &w)| w > EPS_FLOOR)
            .map(|(&t, &w)| (t, (w + EPS_FLOOR).ln()))
            .collect();
        let n = pts.len();
        if n < 2 {
            return LogTrend {
                slope: 0.0,
                std_error: 0.0,
                n_points: n,
            };
        }
        let nf = n as f64;
        let tm = pts.iter().map(|p| p.0).sum::<f64>() / nf;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / nf;
        let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
        let slope = sxy / sxx;
        let std_error = if n > 2 {
            let rss: f64 = pts
                .iter()
                .map(|p| (p.1 - ym - slope * (p.0 - tm)).powi(2))
                .sum();
            (rss / (nf - 2.0) / sxx).sqrt()
        } else {
            0.0
        };
        LogTrend {
            slope,
            std_error,
            n_points: n,
        }
    }

    /// Writes `t,w_hat,mean_bb,se_bb`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "w_hat", "mean_bb", "se_bb"])?;
        for k in 0..self.times.len() {
            w.write_record([
                self.times[k].to_string(),
                self.w_hat[k].to_string(),
                self.mean_bb[k].to_string(),
                self.se_bb[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What a robustness sweep runs: the nominal plant and the compensator
/// designed for it, reused unchanged for every diffusion scale `a`.
#[derive(Clone)]
pub struct SweepSetup {
    pub sys: ControlAffineSde,
    pub phi: CompensatorRef,
    pub safe: SafeSet,
    pub x0: Vec<f64>,
    pub cfg: SimConfig,
    /// Rate of the nominal certificate.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub cap: f64,
    pub empirical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub consistent: bool,
}

/// One ensemble per `a`, each on the plant with `σ′ = aσ`, judged against
/// `e^{−bμ/a²}`. At `a = 0` the cap is `0`, so any exit is inconsistent.
pub fn compare_bound_sweep(setup: &SweepSetup, a_values: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(a_values.len());
    for &a in a_values {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::param("a", a, "must lie in [0, 1]"));
        }
        let sys = setup.sys.with_scaled_diffusion(a);
        let ens = simulate_ensemble(&sys, &*setup.phi, &setup.x0, &setup.safe, &setup.cfg)?;
        let bound = ExitBound::Scaled {
            b: setup.b,
            mu: setup.safe.mu(),
            a,
        };
        let v = estimate_exit_probability(&ens, setup.cfg.horizon.min(*ens.times().last().unwrap()), bound)?;
        rows.push(SweepRow {
            a,
            cap: v.theoretical_exit_cap,
            empirical: v.empirical_exit_prob,
            ci_low: v.ci[0],
            ci_high: v.ci[1],
            consistent: v.consistent,
        });
    }
    Ok(rows)
}

/// Writes `a,cap,empirical,ci_low,ci_high,consistent`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["a", "cap", "empirical", "ci_low", "ci_high", "consistent"])?;
    }
    w.flush()?;
    Ok(())
}
