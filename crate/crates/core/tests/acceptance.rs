//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria listed in `EXPECTED_UNMET` are evaluated exactly like the rest
//! and reported as FAIL when they fail; they do not fail the test binary.
//! Any other failure does. See the README for the analysis behind them.

use std::process::ExitCode;
use std::time::Instant;

use qtube::experiments::{execute, RunConfig, RunOutput, Simulation};
use qtube::{
    flux_balance, gaussian_packet, integrate_trajectories, sample_initial_conditions, sample_potential, DomainSeries,
    GaussianSpec, Grid1D, PotentialSpec, PropagationConfig, Propagator, SamplingScheme,
};

const EXPECTED_UNMET: &[u32] = &[9, 10];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

fn criterion_1(tunnel: &RunOutput, elapsed: f64) -> Outcome {
    let d = &tunnel.report.diagnostics;
    let pass = d.max_norm_drift <= 1e-8 && d.max_relative_energy_drift <= 1e-6 && elapsed <= 30.0;
    outcome(
        1,
        pass,
        format!(
            "norm drift {:.2e} (<= 1e-8), energy drift {:.2e} (<= 1e-6), runtime {elapsed:.1} s (<= 30)",
            d.max_norm_drift, d.max_relative_energy_drift
        ),
    )
}

fn criterion_2() -> Outcome {
    let (x0, sigma0) = (0.0, 1.0);
    let grid = Grid1D::new(-40.0, 40.0, 2048).unwrap();
    let psi0 = gaussian_packet(&GaussianSpec::new(x0, 0.0, sigma0), &grid).unwrap();
    let v = sample_potential(&PotentialSpec::free(), &grid).unwrap();
    let store = qtube::propagate(&psi0, &v, &PropagationConfig::new(1e-3, 2000, 10).unwrap()).unwrap();
    let starts = sample_initial_conditions(&psi0, 20, SamplingScheme::Quantile, 1e-4).unwrap();
    let ens = integrate_trajectories(&store, &starts).unwrap();
    let mut max_err: f64 = 0.0;
    for tr in ens.trajectories() {
        for (&t, &x) in tr.times().iter().zip(tr.positions()) {
            let exact = x0 + (tr.x_init() - x0) * (1.0 + (t / (2.0 * sigma0 * sigma0)).powi(2)).sqrt();
            max_err = max_err.max((x - exact).abs());
        }
    }
    outcome(2, max_err <= 1e-3, format!("max |x - x_exact| = {max_err:.2e} over t in [0, 2] (<= 1e-3)"))
}

fn criterion_3(tunnel: &RunOutput, grating: &RunOutput) -> Outcome {
    let (a, b) = (&tunnel.report.ensemble, &grating.report.ensemble);
    outcome(
        3,
        a.count == 200 && b.count == 200 && a.violations == 0 && b.violations == 0,
        format!(
            "violations tunnel {} / grating {} (200 trajectories each), min gaps {:.2e} / {:.2e}",
            a.violations, b.violations, a.min_gap, b.min_gap
        ),
    )
}

fn criterion_4(tunnel: &RunOutput) -> Outcome {
    match &tunnel.report.separatrix {
        Some(s) => {
            let r = s.tube.stats.std_over_mean;
            outcome(4, r <= 5e-3, format!("transmission tube std/mean = {r:.2e} (<= 5e-3)"))
        }
        None => outcome(4, false, "no separatrix in the tunnel report".into()),
    }
}

fn criterion_5(tunnel: &RunOutput) -> Outcome {
    let (Some(s), Some(a)) = (&tunnel.report.separatrix, &tunnel.report.asymptotic) else {
        return outcome(5, false, "missing separatrix or asymptotic summary".into());
    };
    let closure = s.tube.closure_relative_error;
    let reached = a.reached_at.unwrap_or(f64::NAN);
    outcome(
        5,
        closure.abs() <= 1e-2 && (1.0..=1.3).contains(&reached),
        format!(
            "tube P(0) {:.5} vs P_T {:.5}: relative {closure:+.2e} (|.| <= 1e-2); P_I <= 5e-3 from t = {reached:.3} (in [1.0, 1.3])",
            s.tube.probabilities[0], s.tube.final_domain_probability
        ),
    )
}

fn flux_rms(sim: &Simulation) -> Vec<(String, f64)> {
    let grid = sim.store.grid();
    sim.config
        .domains
        .iter()
        .map(|d| {
            let (a, b) = (d.a.max(grid.x_min()), d.b.min(grid.x_max()));
            let r = flux_balance(&DomainSeries::fixed(&sim.store, a, b).unwrap(), &sim.store).unwrap();
            (d.label.clone(), (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt())
        })
        .collect()
}

fn criterion_6(tunnel: &RunOutput) -> Outcome {
    let relative_ok = tunnel.report.flux.iter().all(|f| f.relative <= 1e-2);
    let worst = tunnel.report.flux.iter().map(|f| f.relative).fold(0.0, f64::max);
    let mut fine_cfg = tunnel.simulation.config.clone();
    fine_cfg.propagation.snapshot_stride /= 2;
    let fine = Simulation::new(&fine_cfg).unwrap();
    let coarse = flux_rms(&tunnel.simulation);
    let fine = flux_rms(&fine);
    let ratios: Vec<String> = coarse.iter().zip(&fine).map(|(c, f)| format!("{} {:.2}x", c.0, c.1 / f.1)).collect();
    let shrink_ok = coarse.iter().zip(&fine).all(|(c, f)| c.1 >= 1.8 * f.1);
    outcome(
        6,
        relative_ok && shrink_ok,
        format!("worst RMS/max|dP/dt| = {worst:.2e} (<= 1e-2); shrink on halved stride: {} (>= 1.8x)", ratios.join(", ")),
    )
}

fn criterion_7(grating: &RunOutput) -> Outcome {
    let g = grating.report.grating.as_ref().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for n in [0, 1] {
        match g.far_field.iter().find(|f| f.order == n) {
            Some(f) => {
                let dev = f.fraunhofer_deviation;
                pass &= (5e-3..=3.5e-2).contains(&dev) && f.fraunhofer_at_final.probability < f.tube.initial_probability;
                parts.push(format!(
                    "n={n}: domain {:.5} vs tube {:.5}, deviation {:.2}%",
                    f.fraunhofer_at_final.probability,
                    f.tube.initial_probability,
                    100.0 * dev
                ));
            }
            None => {
                pass = false;
                parts.push(format!("n={n}: no far-field tube"));
            }
        }
    }
    outcome(7, pass, format!("{} (in [0.5%, 3.5%], domain below tube)", parts.join("; ")))
}

fn criterion_8(grating: &RunOutput) -> Outcome {
    let g = grating.report.grating.as_ref().unwrap();
    let Some(b) = &g.branching else {
        return outcome(8, false, "no branching summary".into());
    };
    let width = b.swarm.1 - b.swarm.0;
    let pass = (width - 0.030).abs() < 1e-12
        && b.swarm.0 > b.central_upper_edge
        && (b.t - 10.0).abs() < 1e-9
        && b.labels.iter().any(|l| l == "0")
        && b.labels.iter().any(|l| l == "+1");
    outcome(
        8,
        pass,
        format!(
            "swarm [{:.4}, {:.4}] (x_0^+ = {:.4}) ends in peaks {:?} at t = {}",
            b.swarm.0, b.swarm.1, b.central_upper_edge, b.labels, b.t
        ),
    )
}

fn criterion_9(grating: &RunOutput) -> Outcome {
    let g = grating.report.grating.as_ref().unwrap();
    let Some(m) = &g.per_slit else {
        return outcome(9, false, "no per-slit matrix".into());
    };
    let col = |label: &str| m.peak_labels.iter().position(|l| l == label);
    let (Some(c0), Some(c1)) = (col("0"), col("+1")) else {
        return outcome(9, false, "orders 0 and +1 not both resolved".into());
    };
    // Slits are numbered 1..=5 from the left.
    let p = |slit: usize, c: usize| m.matrix[slit - 1][c];
    let total = |slit: usize| m.slit_totals[slit - 1];
    let central = ((p(3, c0) - total(3)) / total(3)).abs() <= 1e-2;
    let neighbours = p(2, c0) > 0.5 * total(2) && p(4, c0) > 0.5 * total(4);
    let ordering = p(5, c1) > p(3, c1) && p(3, c1) > 0.0;
    outcome(
        9,
        central && neighbours && ordering,
        format!(
            "P_3,0/P_3 = {:.4}; P_2,0/P_2 = {:.3}, P_4,0/P_4 = {:.3}; P_5,+1 = {:.4}, P_3,+1 = {:.4}, P_4,+1 = {:.4}",
            p(3, c0) / total(3),
            p(2, c0) / total(2),
            p(4, c0) / total(4),
            p(5, c1),
            p(3, c1),
            p(4, c1)
        ),
    )
}

fn criterion_10(tunnel: &RunOutput, grating: &RunOutput) -> Outcome {
    let (a, b) = (&tunnel.report.born_rule, &grating.report.born_rule);
    outcome(
        10,
        a.max_residual <= 2e-2 && b.max_residual <= 2e-2,
        format!(
            "max residual tunnel {:.3} over {} pairs ({:.0}% of samples above), grating {:.3} over {} pairs ({:.0}% above); tolerance 2e-2",
            a.max_residual,
            a.eligible_pairs,
            100.0 * a.fraction_above_tolerance,
            b.max_residual,
            b.eligible_pairs,
            100.0 * b.fraction_above_tolerance
        ),
    )
}

fn criterion_11(tunnel: &RunOutput) -> Outcome {
    let sim = &tunnel.simulation;
    let (dt, mass) = (sim.config.propagation.dt, sim.config.propagation.mass);
    let forward = Propagator::new(&sim.potential, dt, mass).unwrap();
    let backward = Propagator::new(&sim.potential, -dt, mass).unwrap();
    let there = forward.advance(&sim.initial, 1000).unwrap();
    let back = backward.advance(&there, 1000).unwrap();
    let n = sim.initial.values().len() as f64;
    let rms = (sim.initial.values().iter().zip(back.values()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / n).sqrt();
    outcome(11, rms <= 1e-8, format!("RMS |psi_back - psi0| = {rms:.2e} after 1000 steps each way (<= 1e-8)"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let tunnel = execute(&RunConfig::tunnel()).expect("tunnel preset run");
    let tunnel_secs = start.elapsed().as_secs_f64();
    let grating = execute(&RunConfig::grating()).expect("grating preset run");

    let outcomes = vec![
        criterion_1(&tunnel, tunnel_secs),
        criterion_2(),
        criterion_3(&tunnel, &grating),
        criterion_4(&tunnel),
        criterion_5(&tunnel),
        criterion_6(&tunnel),
        criterion_7(&grating),
        criterion_8(&grating),
        criterion_9(&grating),
        criterion_10(&tunnel, &grating),
        criterion_11(&tunnel),
    ];

    let mut unexpected = Vec::new();
    for o in &outcomes {
        let status = if o.pass { "PASS" } else { "FAIL" };
        let known = !o.pass && EXPECTED_UNMET.contains(&o.id);
        let note = if known { " [known unmet]" } else { "" };
        println!("criterion {:>2}: {status}{note}  {}", o.id, o.detail);
        if !o.pass && !known {
            unexpected.push(o.id);
        }
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria met in {:.1} s", outcomes.len(), start.elapsed().as_secs_f64());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
