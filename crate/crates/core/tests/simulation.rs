//! Simulator and Monte Carlo analysis on the worked examples.

use std::sync::Arc;

use scbf::analysis::{estimate_exit_probability, mu_zone_trace, ExitBound};
use scbf::certificates::field;
use scbf::compensators::{
    barrier_fields_example1, barrier_fields_example2, derive_example1_params,
    derive_example2_params, example1_compensator, example2_compensator, motivating_compensators,
    DEFAULT_CUTOFF,
};
use scbf::sim::{
    deterministic_path, euler_step, simulate_ensemble, simulate_path, write_paths_csv, SimConfig,
    WienerSource,
};
use scbf::{ControlAffineSde, FieldRef, PreInput, SafeSet};

fn cfg(dt: f64, horizon: f64, n_paths: usize, seed: u64) -> SimConfig {
    SimConfig {
        dt,
        horizon,
        n_paths,
        master_seed: seed,
        record_stride: 1,
    }
}

struct Ex1 {
    sys: ControlAffineSde,
    phi: scbf::compensators::SaturatedExample1,
    safe: SafeSet,
    h: FieldRef,
    b: f64,
    mu: f64,
}

fn ex1(c: f64) -> Ex1 {
    let p = derive_example1_params(1.0, 1.0, 0.1, 1.0, DEFAULT_CUTOFF).unwrap();
    let u_o = PreInput::constant(vec![-1.0]);
    let sys = ControlAffineSde::integrator(c, u_o.clone()).unwrap();
    let (h, _) = barrier_fields_example1(&p);
    let h: FieldRef = Arc::new(h);
    Ex1 {
        sys,
        phi: example1_compensator(&p, u_o),
        safe: SafeSet::new(h.clone(), p.mu1).unwrap(),
        h,
        b: p.b1,
        mu: p.mu1,
    }
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let e = ex1(0.1);
    let c = SimConfig {
        record_stride: 10,
        ..cfg(1e-3, 1.0, 64, 7)
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_ensemble(&e.sys, &e.phi, &[1.05], &e.safe, &c).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one, many);
    let csv = |ens: &scbf::sim::PathEnsemble| {
        let mut buf = Vec::new();
        write_paths_csv(&ens.paths, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(&one), csv(&many));
}

#[test]
fn paths_are_reproducible_and_seed_dependent() {
    let e = ex1(0.1);
    let c = cfg(1e-3, 0.5, 1, 3);
    let a = simulate_path(&e.sys, &e.phi, &[2.0], &e.safe, &c, 5).unwrap();
    let b = simulate_path(&e.sys, &e.phi, &[2.0], &e.safe, &c, 5).unwrap();
    assert_eq!(a, b);
    let other = simulate_path(&e.sys, &e.phi, &[2.0], &e.safe, &c, 6).unwrap();
    assert_ne!(a.states, other.states);
    let reseeded = simulate_path(&e.sys, &e.phi, &[2.0], &e.safe, &cfg(1e-3, 0.5, 1, 4), 5).unwrap();
    assert_ne!(a.states, reseeded.states);
}

#[test]
fn noise_free_path_is_explicit_euler() {
    let e = ex1(0.0);
    let c = cfg(1e-3, 10.0, 1, 0);
    let det = deterministic_path(&e.sys, &e.phi, &[4.0], &e.safe, &c).unwrap();
    let mut x = vec![4.0];
    for k in 1..det.times.len() {
        x = euler_step(&e.sys, &e.phi, &x, c.dt).unwrap();
        assert!((x[0] - det.state(k)[0]).abs() <= 1e-14, "step {k}");
    }
    // and a zero diffusion gives the same path through the stochastic stepper
    let sto = simulate_path(&e.sys, &e.phi, &[4.0], &e.safe, &c, 0).unwrap();
    for (a, b) in sto.states.iter().zip(&det.states) {
        assert!((a - b).abs() <= 1e-14);
    }
}

#[test]
fn noise_free_example1_settles_at_its_equilibrium() {
    // u_o + φ₁ = J₂ vanishes where γh = c²/h, i.e. h = c/√γ
    let e = ex1(0.1);
    let det = deterministic_path(&e.sys, &e.phi, &[4.0], &e.safe, &cfg(1e-3, 10.0, 1, 0)).unwrap();
    assert!(det.exit_time_chi.is_none());
    assert!(det.h.iter().all(|h| *h > 0.0));
    assert!((det.h.last().unwrap() - 0.1).abs() < 1e-3);
}

#[test]
fn wiener_increments_have_the_right_law() {
    let dt = 1e-3;
    let mut all = Vec::new();
    for idx in 0..100 {
        let mut src = WienerSource::new(42, idx, dt);
        let mut buf = vec![0.0; 1000];
        src.fill(&mut buf);
        all.extend(buf.into_iter().map(|v| v / dt.sqrt()));
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean}");
    // Var of the sample variance of N(0,1) is 2/(n−1)
    assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "var {var}");
    let lag1 = all.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
    assert!(lag1.abs() < 4.0 / n.sqrt(), "lag-1 {lag1}");
}

#[test]
fn exit_times_match_recorded_states() {
    let e = ex1(0.1);
    let ens = simulate_ensemble(&e.sys, &e.phi, &[1.002], &e.safe, &cfg(1e-3, 1.0, 200, 9)).unwrap();
    for p in &ens.paths {
        let first_exit = p.h.iter().position(|h| *h <= 0.0).map(|k| p.times[k]);
        assert_eq!(p.exit_time_chi, first_exit);
        if let (Some(a), Some(b)) = (p.exit_time_chi_mu, p.exit_time_chi) {
            assert!(a <= b);
        }
    }
}

fn exit_fraction(dt: f64, n: usize, seed: u64, which: u8) -> f64 {
    let ens = if which == 1 {
        let e = ex1(0.1);
        let c = SimConfig {
            record_stride: usize::MAX,
            ..cfg(dt, 10.0, n, seed)
        };
        simulate_ensemble(&e.sys, &e.phi, &[4.0], &e.safe, &c).unwrap()
    } else {
        let q = derive_example2_params(0.0, 1.0, 0.01, 1.0).unwrap();
        let u_o = PreInput::constant(vec![1.0]);
        let sys = ControlAffineSde::integrator(0.01, u_o.clone()).unwrap();
        let (h, _) = barrier_fields_example2(&q);
        let safe = SafeSet::new(field(h), q.mu2).unwrap();
        let (_, phi) = example2_compensator(&q, u_o);
        let c = SimConfig {
            record_stride: usize::MAX,
            ..cfg(dt, 2.0, n, seed)
        };
        simulate_ensemble(&sys, &phi, &[0.99], &safe, &c).unwrap()
    };
    ens.summary().unwrap().exit_fraction_chi
}

#[test]
fn exit_fraction_is_stable_under_step_refinement() {
    for (which, dt, n) in [(1, 1e-3, 2000), (2, 1e-4, 500)] {
        let p1 = exit_fraction(dt, n, 21, which);
        let p2 = exit_fraction(dt / 2.0, n, 121, which);
        let se = (p1 * (1.0 - p1) / n as f64 + p2 * (1.0 - p2) / n as f64).sqrt();
        assert!((p1 - p2).abs() <= 3.0 * se.max(1.0 / n as f64), "example {which}: {p1} vs {p2}");
    }
}

#[test]
fn zeroing_filter_exits_and_reciprocal_filter_does_not() {
    let alpha = 1.0;
    let u_o = PreInput::constant(vec![-1.0]);
    let sys = ControlAffineSde::integrator(0.1, u_o.clone()).unwrap();
    let (phi_hs, phi_bs) = motivating_compensators(alpha, 1.0, 0.1, u_o).unwrap();
    let h = field(scbf::calculus::AffineField::new(vec![1.0], -alpha));
    let safe = SafeSet::new(h, 0.01).unwrap();
    let c = SimConfig {
        record_stride: 1000,
        ..cfg(1e-4, 1.0, 1000, 17)
    };
    let x0 = [alpha + 1e-6];
    let hs = simulate_ensemble(&sys, &phi_hs, &x0, &safe, &c).unwrap().summary().unwrap();
    let bs = simulate_ensemble(&sys, &phi_bs, &x0, &safe, &c).unwrap().summary().unwrap();
    assert!(hs.exit_fraction_chi > 0.9, "{hs:?}");
    assert!(bs.exit_fraction_chi < hs.exit_fraction_chi);
    assert!(bs.exit_fraction_chi < 0.1, "{bs:?}");
}

#[test]
fn layer_exits_obey_the_stopped_bound() {
    // Inside the layer the closed loop is Brownian motion with drift U_M and
    // variance c², so leaving through h = 0 before h = μ has the ruin
    // probability (e^{−bh₀} − e^{−bμ}) / (1 − e^{−bμ}) with b = 2U_M/c².
    let e = ex1(0.1);
    let h0 = e.mu / 2.0;
    let c = cfg(1e-5, 0.2, 2000, 31);
    let ens = simulate_ensemble(&e.sys, &e.phi, &[1.0 + h0], &e.safe, &c).unwrap();
    let bottom = ens
        .paths
        .iter()
        .filter(|p| p.exit_time_chi.is_some() && p.exit_time_chi == p.exit_time_chi_mu)
        .count();
    assert!(ens.paths.iter().all(|p| p.exit_time_chi_mu.is_some()));
    let n = ens.paths.len() as f64;
    let frac = bottom as f64 / n;
    let ruin = ((-e.b * h0).exp() - (-e.b * e.mu).exp()) / (1.0 - (-e.b * e.mu).exp());
    let cap = (-e.b * h0).exp();
    let se = (ruin * (1.0 - ruin) / n).sqrt();
    assert!(frac <= cap + 3.0 * se, "{frac} vs cap {cap}");
    assert!((frac - ruin).abs() <= 4.0 * se, "{frac} vs ruin {ruin}");
}

#[test]
fn starts_on_the_layer_edge_can_exceed_the_layer_cap() {
    // Re-entries into the layer are not covered by the stopped bound: from
    // h(x₀) = μ the finite-horizon exit fraction already exceeds e^{−bμ}.
    let e = ex1(0.1);
    let c = SimConfig {
        record_stride: 1000,
        ..cfg(1e-3, 2.0, 1000, 5)
    };
    let ens = simulate_ensemble(&e.sys, &e.phi, &[1.0 + e.mu], &e.safe, &c).unwrap();
    let v = estimate_exit_probability(&ens, 2.0, ExitBound::Layer { b: e.b, mu: e.mu }).unwrap();
    assert!((v.theoretical_exit_cap - 0.138).abs() < 1e-3);
    assert!(v.ci[0] > v.theoretical_exit_cap, "{v:?}");
    assert!(!v.consistent);
}

#[test]
fn mu_zone_excess_does_not_grow_from_the_boundary() {
    let e = ex1(0.1);
    let c = SimConfig {
        record_stride: 100,
        ..cfg(1e-3, 2.0, 1000, 5)
    };
    let x0 = [1.0 + 1e-6];
    let ens = simulate_ensemble(&e.sys, &e.phi, &x0, &e.safe, &c).unwrap();
    let trace = mu_zone_trace(&ens, &*e.h, e.b, e.mu).unwrap();
    let w0 = ((-e.b * 1e-6f64).exp() - (-e.b * e.mu).exp()).powi(2);
    assert!((trace.w_hat[0] - w0).abs() < 1e-9);
    assert!(trace.trend().non_increasing_within(3.0), "{:?}", trace.trend());
}
