//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use marcus_sde::cli::experiments::{
    converge, orbit, summarize_defects, symplectic_check, ConvergeConfig, ConvergeScheme,
    KuboExperiment, SymplecticCheckConfig,
};
use marcus_sde::hamiltonian::Observable;
use marcus_sde::marcus_flow::{jump_flow, kubo_jump_closed_form};
use marcus_sde::{
    integrate_pathwise, kubo_exact, kubo_system, sample_path, KuboParams, LevyPathSpec,
    PhaseState, StepControls,
};

type Criterion = (&'static str, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn max_dist(a: &PhaseState, b: &PhaseState) -> f64 {
    a.difference(b).iter().fold(0.0, |m: f64, d| m.max(d.abs()))
}

fn c1_convergence_order() -> Outcome {
    let cfg = ConvergeConfig::default();
    let fit = converge(&cfg).expect("converge run");
    let decreasing = fit.decreasing_with_slack(0.1);
    let positive = fit.errors.iter().all(|e| *e > 0.0);
    let raw = converge(&ConvergeConfig {
        scheme: ConvergeScheme::Symplectic,
        ..cfg.clone()
    })
    .expect("raw-increment converge run");
    Outcome {
        pass: fit.slope >= 0.45 && decreasing && positive,
        detail: format!(
            "scheme {:?}: slope {:.4} (need >= 0.45), errors {:?}, decreasing within 10%: {decreasing}; \
             info: raw-increment grid scheme slope {:.4}, errors {:?}",
            cfg.scheme,
            fit.slope,
            fit.errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            raw.slope,
            raw.errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
        ),
    }
}

fn c2_symplecticity() -> Outcome {
    let rows = symplectic_check(&SymplecticCheckConfig::default()).expect("symplectic check");
    let s = summarize_defects(&rows);
    let min_large = s.min_explicit_large_a.unwrap_or(f64::NAN);
    Outcome {
        pass: s.max_symplectic <= 1e-6 && min_large >= 1e-4,
        detail: format!(
            "{} samples: max symplectic defect {:.3e} (need <= 1e-6), \
             min explicit defect with |a| >= 0.05: {min_large:.3e} (need >= 1e-4)",
            rows.len(),
            s.max_symplectic
        ),
    }
}

fn c3_hamiltonian_behavior() -> Outcome {
    let mut worst_exact: f64 = 0.0;
    let (mut h_min, mut h_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut monotone = true;
    let mut worst_recursion: f64 = 0.0;
    for seed in 1..=100u64 {
        let exp = KuboExperiment {
            seed,
            ..KuboExperiment::default()
        };
        let run = orbit(&exp).expect("orbit run");
        assert!(run.explicit_failure.is_none(), "explicit diverged for seed {seed}");
        let system = kubo_system(exp.params()).unwrap();
        let h = |x: &PhaseState| system.observe(Observable::Monitored, x).unwrap();
        for x in &run.exact.states {
            worst_exact = worst_exact.max((h(x) - 0.5).abs());
        }
        for x in &run.symplectic.states {
            let v = h(x);
            h_min = h_min.min(v);
            h_max = h_max.max(v);
        }
        let path = run.path.as_ref().unwrap();
        let times = &run.explicit.times;
        let dl = path.grid_increments(1, times).unwrap();
        let hs: Vec<f64> = run.explicit.states.iter().map(h).collect();
        for j in 0..hs.len() - 1 {
            monotone &= hs[j + 1] >= hs[j];
            let a = exp.alpha * (times[j + 1] - times[j]) + exp.beta * dl[j];
            let predicted = (1.0 + a * a) * hs[j];
            worst_recursion = worst_recursion.max(((hs[j + 1] - predicted) / predicted).abs());
        }
    }
    Outcome {
        pass: worst_exact <= 1e-12
            && h_min >= 0.125
            && h_max <= 2.0
            && monotone
            && worst_recursion <= 1e-9,
        detail: format!(
            "100 seeds: |H_exact - 0.5| max {worst_exact:.2e} (need <= 1e-12); \
             H_symplectic in [{h_min:.4}, {h_max:.4}] (need within [0.125, 2]); \
             H_explicit non-decreasing: {monotone}; recursion rel. error {worst_recursion:.2e} (need <= 1e-9)"
        ),
    }
}

fn c4_marcus_flow() -> Outcome {
    let params = KuboParams::new(0.1, 0.1);
    let system = kubo_system(params).unwrap();
    let x = PhaseState::scalar(0.0, 1.0);
    let mut worst: f64 = 0.0;
    let mut worst_theta = 0.0;
    for k in -100..=100 {
        let theta = k as f64 / 100.0;
        let mark = theta / params.beta;
        let y = jump_flow(&system, &x, &[mark], 16).unwrap();
        let z = kubo_jump_closed_form(params, &x, mark).unwrap();
        let e = max_dist(&y, &z);
        if e > worst {
            worst = e;
            worst_theta = theta;
        }
    }
    let mark = 1.0 / params.beta;
    let exact = kubo_jump_closed_form(params, &x, mark).unwrap();
    let subs = [2usize, 4, 8, 16];
    let pts: Vec<(f64, f64)> = subs
        .iter()
        .map(|&s| {
            let e = max_dist(&jump_flow(&system, &x, &[mark], s).unwrap(), &exact);
            ((s as f64).ln(), e.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let order = -sxy / sxx;
    Outcome {
        pass: worst <= 1e-10 && (3.5..=4.5).contains(&order),
        detail: format!(
            "16 substeps, |beta R| <= 1: max error {worst:.3e} at beta R = {worst_theta} (need <= 1e-10); \
             substep order {order:.3} (need in [3.5, 4.5])"
        ),
    }
}

fn c5_oracle_coupling() -> Outcome {
    let exp = KuboExperiment::default();
    let system = kubo_system(exp.params()).unwrap();
    let x0 = exp.initial();
    let mut worst: f64 = 0.0;
    for seed in 1..=20u64 {
        let path = sample_path(exp.path_spec(seed), 10.0).unwrap();
        let traj = integrate_pathwise(&system, &x0, 0.0, 10.0, &path, &StepControls::new(1e-3)).unwrap();
        let exact = kubo_exact(exp.params(), &x0, 10.0, path.value_at(1, 10.0).unwrap()).unwrap();
        worst = worst.max(max_dist(traj.last().unwrap().1, &exact));
    }
    Outcome {
        pass: worst <= 1e-2,
        detail: format!("20 seeds, dt = 1e-3, T = 10: max end-state error {worst:.3e} (need <= 1e-2)"),
    }
}

fn c6_noise_statistics() -> Outcome {
    let sigma = 0.2;
    let mut total_events = 0usize;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for seed in 0..1000u64 {
        let path = sample_path(LevyPathSpec::new(5.0, sigma, 1, seed), 200.0).unwrap();
        total_events += path.events().len();
        for e in path.events() {
            sum += e.mark;
            sum_sq += e.mark * e.mark;
        }
    }
    let mean_count = total_events as f64 / 1000.0;
    let n = total_events as f64;
    let variance = (sum_sq - sum * sum / n) / (n - 1.0);
    let target = sigma * sigma;
    Outcome {
        pass: (mean_count - 1000.0).abs() <= 3.0 && (variance - target).abs() <= 0.1 * target,
        detail: format!(
            "1000 seeds, lambda = 5, T = 200: mean count {mean_count:.3} (need 1000 +- 3); \
             mark variance {variance:.5} (need {target:.4} +- 10%)"
        ),
    }
}

fn c7_qualitative_orbits() -> Outcome {
    let exp = KuboExperiment::default();
    let run = orbit(&exp).expect("orbit run");
    let r_sym = run.symplectic.last().unwrap().1.norm();
    let explicit_end = run.explicit.last().unwrap();
    let r_exp = explicit_end.1.norm();
    let closer = (r_sym - 1.0).abs() < (r_exp - 1.0).abs();
    Outcome {
        pass: closer && r_exp > 1.5,
        detail: format!(
            "seed {}: symplectic radius {r_sym:.4}, explicit radius {r_exp:.4} at t = {}; \
             symplectic closer to 1: {closer}; explicit radius > 1.5: {}",
            exp.seed,
            explicit_end.0,
            r_exp > 1.5
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("C1", "mean-square convergence order", c1_convergence_order),
        ("C2", "symplecticity of the one-step map", c2_symplecticity),
        ("C3", "Hamiltonian behavior", c3_hamiltonian_behavior),
        ("C4", "Marcus jump map accuracy", c4_marcus_flow),
        ("C5", "pathwise integrator vs exact solution", c5_oracle_coupling),
        ("C6", "compound Poisson statistics", c6_noise_statistics),
        ("C7", "orbit dispersion", c7_qualitative_orbits),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let out = check();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {id} {name} ({:.2}s): {}",
            start.elapsed().as_secs_f64(),
            out.detail
        );
        failed += usize::from(!out.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
