//! Safe sets and grid-sampled certificate checks.
//!
//! Every check evaluates a pointwise slack over a [`Grid`] and reports the
//! worst one. Slacks are compared after dividing by
//! `max(1, Σ|terms|)`, the magnitude of the quantities that were summed to
//! form them: near `∂χ` the individual terms of a reciprocal-barrier
//! inequality reach `1e16` and an absolute tolerance would be meaningless.
//! The unscaled worst slack is reported alongside.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    generator_terms, reciprocal_field, ControlAffineSde, Diffusion, FieldRef, Properness,
    ScalarField,
};
use crate::compensators::Compensator;
use crate::error::{Error, Result};

/// Slack below `-MARGIN_TOL` (after scaling) fails a check.
pub const MARGIN_TOL: f64 = 1e-9;
/// Slack a strict inequality must exceed.
pub const STRICT_TOL: f64 = 1e-12;
/// Grids in `χ` keep only points with `h ≥ BOUNDARY_CLIP`.
pub const BOUNDARY_CLIP: f64 = 1e-6;

/// The sets induced by a barrier `h` and a layer width `μ ≥ 0`.
#[derive(Clone)]
pub struct SafeSet {
    h: FieldRef,
    mu: f64,
}

impl std::fmt::Debug for SafeSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SafeSet").field("mu", &self.mu).finish()
    }
}

impl SafeSet {
    pub fn new(h: FieldRef, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::param("mu", mu, "must be non-negative and finite"));
        }
        Ok(Self { h, mu })
    }

    pub fn h(&self) -> &FieldRef {
        &self.h
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.h.value(x)
    }

    /// `χ = {h > 0}`.
    pub fn in_chi(&self, x: &[f64]) -> bool {
        self.value(x) > 0.0
    }

    /// `χ_μ = {0 < h ≤ μ}`.
    pub fn in_layer(&self, x: &[f64]) -> bool {
        let h = self.value(x);
        h > 0.0 && h <= self.mu
    }

    /// `χ_{h>μ}`.
    pub fn above_mu(&self, x: &[f64]) -> bool {
        self.value(x) > self.mu
    }

    /// `Rⁿ_{h≤μ}`.
    pub fn at_or_below_mu(&self, x: &[f64]) -> bool {
        self.value(x) <= self.mu
    }
}

/// A finite point set in Rⁿ, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    coords: Vec<f64>,
}

impl Grid {
    pub fn from_points(dim: usize, points: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut coords = Vec::new();
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "grid point",
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend(p);
        }
        Ok(Self { dim, coords })
    }

    /// `n` evenly spaced points on `[lo, hi]`, endpoints included.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Self {
        let coords = match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        Self { dim: 1, coords }
    }

    /// Points spaced geometrically in the distance to `edge`, from
    /// `edge + near` to `edge + far` (or the mirror if `near < 0`).
    /// Resolves boundary layers that a uniform grid steps over.
    pub fn geomspace_from(edge: f64, near: f64, far: f64, n: usize) -> Self {
        let sign = near.signum();
        let (a, b) = (near.abs().ln(), far.abs().ln());
        let coords = (0..n)
            .map(|i| {
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                edge + sign * (a + (b - a) * t).exp()
            })
            .collect();
        Self { dim: 1, coords }
    }

    /// The tensor grid with `per_axis` points on each side of the box.
    pub fn rectangular(lo: &[f64], hi: &[f64], per_axis: usize) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                what: "box corner",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        let dim = lo.len();
        let axes: Vec<Grid> = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| Grid::linspace(l, h, per_axis))
            .collect();
        let total = per_axis.pow(dim as u32);
        let mut coords = Vec::with_capacity(total * dim);
        for flat in 0..total {
            let mut rest = flat;
            for axis in &axes {
                coords.push(axis.coords[rest % per_axis]);
                rest /= per_axis;
            }
        }
        Ok(Self { dim, coords })
    }

    /// `n` uniform points in the box, reproducible from `seed`.
    pub fn random(lo: &[f64], hi: &[f64], n: usize, seed: u64) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                what: "box corner",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coords = Vec::with_capacity(n * lo.len());
        for _ in 0..n {
            for (&l, &h) in lo.iter().zip(hi) {
                coords.push(l + (h - l) * rng.random::<f64>());
            }
        }
        Ok(Self {
            dim: lo.len(),
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim.max(1))
    }

    /// Keeps the points satisfying `keep`.
    pub fn filter(&self, keep: impl Fn(&[f64]) -> bool) -> Self {
        let coords = self
            .iter()
            .filter(|p| keep(p))
            .flat_map(|p| p.iter().copied())
            .collect();
        Self {
            dim: self.dim,
            coords,
        }
    }

    /// Keeps the points with `h ≥ floor`.
    pub fn clip(&self, h: &dyn ScalarField, floor: f64) -> Self {
        self.filter(|p| h.value(p) >= floor)
    }

    pub fn union(mut self, other: &Grid) -> Result<Self> {
        if !other.is_empty() && !self.is_empty() && other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                what: "grid",
                expected: self.dim,
                got: other.dim,
            });
        }
        if self.is_empty() {
            self.dim = other.dim;
        }
        self.coords.extend_from_slice(&other.coords);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CertificateKind {
    AsRcbf,
    AsZcbf,
    StochZcbf,
    Fiip,
    RobustZcbf,
    RobustStoch,
}

/// The constants a check was run with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CertificateParameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub kind: CertificateKind,
    pub passed: bool,
    /// Minimum scaled slack over the grid.
    pub worst_margin: f64,
    /// Unscaled slack at `worst_point`.
    pub worst_raw_margin: f64,
    pub worst_point: Vec<f64>,
    pub points_checked: usize,
    pub parameters: CertificateParameters,
    /// Whether the strict inequality held (stochastic ZCBF only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
    /// Properness declared by the field, recorded as an assumption.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub properness: Option<Properness>,
}

/// The slack of a certificate inequality at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub raw: f64,
    /// Sum of the magnitudes of the terms forming `raw`.
    pub scale: f64,
}

impl Margin {
    pub fn scaled(&self) -> f64 {
        self.raw / self.scale.max(1.0)
    }

    fn min(self, other: Margin) -> Margin {
        if other.scaled() < self.scaled() {
            other
        } else {
            self
        }
    }
}

struct Sweep {
    worst: Margin,
    point: Vec<f64>,
    count: usize,
}

/// Evaluates `margin` at every grid point in parallel and folds to the
/// minimum in index order, so ties and errors resolve deterministically.
fn sweep(grid: &Grid, margin: impl Fn(&[f64]) -> Result<Margin> + Sync) -> Result<Sweep> {
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    let margins: Vec<Result<Margin>> = (0..grid.len())
        .into_par_iter()
        .map(|i| margin(grid.point(i)))
        .collect();
    let mut best: Option<(usize, Margin)> = None;
    for (i, m) in margins.into_iter().enumerate() {
        let m = m?;
        if m.raw.is_nan() {
            return Err(Error::NumericalBlowup {
                path: None,
                t: 0.0,
                state: grid.point(i).to_vec(),
            });
        }
        best = match best {
            Some((j, b)) if b.scaled() <= m.scaled() => Some((j, b)),
            _ => Some((i, m)),
        };
    }
    let (i, worst) = best.expect("grid is non-empty");
    Ok(Sweep {
        worst,
        point: grid.point(i).to_vec(),
        count: grid.len(),
    })
}

fn report(kind: CertificateKind, s: Sweep, parameters: CertificateParameters) -> CertificateReport {
    CertificateReport {
        kind,
        passed: s.worst.scaled() >= -MARGIN_TOL,
        worst_margin: s.worst.scaled(),
        worst_raw_margin: s.worst.raw,
        worst_point: s.point,
        points_checked: s.count,
        parameters,
        strict: None,
        properness: None,
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, v, "must be positive and finite"))
    }
}

fn require_chi(h: &dyn ScalarField, x: &[f64]) -> Result<()> {
    if h.in_domain(x) && h.value(x) > 0.0 {
        Ok(())
    } else {
        Err(Error::outside(x, "chi = {h > 0}"))
    }
}

/// `γB − ℒ(φ, u_o, B)` at `x`.
pub fn as_rcbf_margin(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    b: &dyn ScalarField,
    gamma: f64,
    x: &[f64],
) -> Result<Margin> {
    if !b.in_domain(x) {
        return Err(Error::outside(x, b.domain_note()));
    }
    let u = phi.eval(x)?;
    let t = generator_terms(sys, b, x, u.as_slice())?;
    let gb = gamma * b.value(x);
    Ok(Margin {
        raw: gb - t.total(),
        scale: gb.abs() + t.magnitude(),
    })
}

/// `ℒ(φ, u_o, B) ≤ γB` on the grid; every point must lie in `χ`.
pub fn check_as_rcbf(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    b: &dyn ScalarField,
    gamma: f64,
    grid: &Grid,
) -> Result<CertificateReport> {
    positive("gamma", gamma)?;
    let s = sweep(grid, |x| as_rcbf_margin(sys, phi, b, gamma, x))?;
    Ok(report(
        CertificateKind::AsRcbf,
        s,
        CertificateParameters {
            gamma: Some(gamma),
            ..Default::default()
        },
    ))
}

/// `ℒ(φ, u_o, h) − (−γh + L^I h + h² L^I B)` at `x`, with `B = 1/h`.
pub fn as_zcbf_margin(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    h: &FieldRef,
    gamma: f64,
    x: &[f64],
) -> Result<Margin> {
    require_chi(&**h, x)?;
    let b = reciprocal_field(h.clone());
    let u = phi.eval(x)?;
    let lhs = generator_terms(sys, &**h, x, u.as_slice())?;
    let hv = h.value(x);
    let ito_h = sys.diffusion().ito_correction(&**h, x)?;
    let ito_b = hv * hv * sys.diffusion().ito_correction(&b, x)?;
    let rhs = -gamma * hv + ito_h + ito_b;
    Ok(Margin {
        raw: lhs.total() - rhs,
        scale: lhs.magnitude() + (gamma * hv).abs() + ito_h.abs() + ito_b.abs(),
    })
}

/// `ℒ(φ, u_o, h) ≥ −γh + L^I h + h² L^I B` on the grid.
pub fn check_as_zcbf(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    h: &FieldRef,
    gamma: f64,
    grid: &Grid,
) -> Result<CertificateReport> {
    positive("gamma", gamma)?;
    let s = sweep(grid, |x| as_zcbf_margin(sys, phi, h, gamma, x))?;
    Ok(report(
        CertificateKind::AsZcbf,
        s,
        CertificateParameters {
            gamma: Some(gamma),
            ..Default::default()
        },
    ))
}

/// `ℒ(φ, u_o, h) − b H_σ(h)` at `x`.
pub fn stochastic_zcbf_margin(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    safe: &SafeSet,
    b: f64,
    x: &[f64],
) -> Result<Margin> {
    let h = &**safe.h();
    if !safe.at_or_below_mu(x) {
        return Err(Error::outside(x, "{h <= mu}"));
    }
    let u = phi.eval(x)?;
    let lhs = generator_terms(sys, h, x, u.as_slice())?;
    let bh = b * sys.diffusion().quadratic(h, x)?;
    Ok(Margin {
        raw: lhs.total() - bh,
        scale: lhs.magnitude() + bh.abs(),
    })
}

/// `ℒ(φ, u_o, h) ≥ b H_σ(h)` on a grid inside `{h ≤ μ}`.
///
/// Properness of `h` on Rⁿ is a hypothesis of the resulting probability
/// bound; the field's declaration is copied into the report.
pub fn check_stochastic_zcbf(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    safe: &SafeSet,
    b: f64,
    grid: &Grid,
) -> Result<CertificateReport> {
    positive("b", b)?;
    let s = sweep(grid, |x| stochastic_zcbf_margin(sys, phi, safe, b, x))?;
    let strict = s.worst.scaled() > STRICT_TOL;
    let mut r = report(
        CertificateKind::StochZcbf,
        s,
        CertificateParameters {
            b: Some(b),
            mu: Some(safe.mu()),
            ..Default::default()
        },
    );
    r.strict = Some(strict);
    r.properness = Some(safe.h().properness());
    Ok(r)
}

/// `c₁Y + c₂ − ℒ(φ, u_o, Y)` at `x`.
pub fn fiip_margin(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    y: &dyn ScalarField,
    c1: f64,
    c2: f64,
    x: &[f64],
) -> Result<Margin> {
    if !y.in_domain(x) {
        return Err(Error::outside(x, y.domain_note()));
    }
    let yv = y.value(x);
    if yv < 0.0 {
        return Err(Error::outside(x, "{Y >= 0}"));
    }
    let u = phi.eval(x)?;
    let t = generator_terms(sys, y, x, u.as_slice())?;
    Ok(Margin {
        raw: c1 * yv + c2 - t.total(),
        scale: c1 * yv + c2 + t.magnitude(),
    })
}

/// `ℒ(φ, u_o, Y) ≤ c₁Y + c₂` on the grid.
pub fn check_fiip_condition(
    sys: &ControlAffineSde,
    phi: &dyn Compensator,
    y: &dyn ScalarField,
    c1: f64,
    c2: f64,
    grid: &Grid,
) -> Result<CertificateReport> {
    for (name, v) in [("c1", c1), ("c2", c2)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::param(name, v, "must be non-negative and finite"));
        }
    }
    let s = sweep(grid, |x| fiip_margin(sys, phi, y, c1, c2, x))?;
    Ok(report(
        CertificateKind::Fiip,
        s,
        CertificateParameters {
            c1: Some(c1),
            c2: Some(c2),
            ..Default::default()
        },
    ))
}

/// `L^I_σ(B) ≥ L^I_{σ′}(B)` on a grid in `χ`.
pub fn check_diffusion_robustness_as(
    b: &dyn ScalarField,
    sigma: &Diffusion,
    sigma_prime: &Diffusion,
    grid: &Grid,
) -> Result<CertificateReport> {
    let s = sweep(grid, |x| {
        if !b.in_domain(x) {
            return Err(Error::outside(x, b.domain_note()));
        }
        let l = sigma.ito_correction(b, x)?;
        let r = sigma_prime.ito_correction(b, x)?;
        Ok(Margin {
            raw: l - r,
            scale: l.abs() + r.abs(),
        })
    })?;
    Ok(report(
        CertificateKind::RobustZcbf,
        s,
        CertificateParameters::default(),
    ))
}

/// `L^I_σ(h) ≤ L^I_{σ′}(h)` and `a² H_σ(h) ≥ H_{σ′}(h)` on the grid; the
/// reported margin is the smaller of the two slacks.
pub fn check_diffusion_robustness_stoch(
    h: &dyn ScalarField,
    sigma: &Diffusion,
    sigma_prime: &Diffusion,
    a: f64,
    grid: &Grid,
) -> Result<CertificateReport> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::param("a", a, "must lie in [0, 1]"));
    }
    let s = sweep(grid, |x| {
        let l = sigma.ito_correction(h, x)?;
        let lp = sigma_prime.ito_correction(h, x)?;
        let q = a * a * sigma.quadratic(h, x)?;
        let qp = sigma_prime.quadratic(h, x)?;
        let ito = Margin {
            raw: lp - l,
            scale: l.abs() + lp.abs(),
        };
        let quad = Margin {
            raw: q - qp,
            scale: q.abs() + qp.abs(),
        };
        Ok(ito.min(quad))
    })?;
    Ok(report(
        CertificateKind::RobustStoch,
        s,
        CertificateParameters {
            a: Some(a),
            ..Default::default()
        },
    ))
}

/// `1 − e^{−b·level}`.
pub fn safety_probability_bound(b: f64, level: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::param("b", b, "must be positive"));
    }
    if !(level > 0.0) {
        return Err(Error::param("level", level, "must be positive"));
    }
    Ok(-(-b * level).exp_m1())
}

/// `1 − e^{−bμ/a²}`; exactly 1 at `a = 0`.
pub fn scaled_safety_bound(b: f64, mu: f64, a: f64) -> Result<f64> {
    if a == 0.0 {
        safety_probability_bound(b, mu)?;
        return Ok(1.0);
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::param("a", a, "must lie in (0, 1]"));
    }
    safety_probability_bound(b, mu / (a * a))
}

/// Convenience: a shared handle to a concrete field.
pub fn field<F: ScalarField + 'static>(f: F) -> FieldRef {
    Arc::new(f)
}
