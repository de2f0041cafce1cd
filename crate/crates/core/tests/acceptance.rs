//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line each and exits non-zero when any criterion fails.
//!
//! The real-data criterion reads a CSSE snapshot from `data/csse/` at the
//! workspace root (override with `SEIR_CSSE_DIR`) and the population table
//! `data/population.csv`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seir_control::adjoint::{jump_update, terminal_costate};
use seir_control::control::{
    gradient_constant_theta, relative_misfit, scheduled_control, step_sizes, windowed_fit, ControlProblem,
    LossWeights, OptimizerSettings, ScheduleOptions, WindowOptions,
};
use seir_control::data::{
    initial_state, parse_csse, parse_population_table, sample_observations, synth_twin,
};
use seir_control::model::{integrate_fractions, FractionState};
use seir_control::{
    forward_step, hamiltonian, r0, sigma, solve_backward, solve_forward, CostateVec, ObservedPoint,
    ObservedSeries, Param, ParamBounds, ParamVec, SolverGrid, StateVec, TargetPoint,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Outcome;

fn random_theta(rng: &mut ChaCha8Rng, bounds: &ParamBounds) -> ParamVec {
    let lo = bounds.lower.to_array();
    let hi = bounds.upper.to_array();
    let mut t = [0.0; 4];
    for c in 0..4 {
        t[c] = rng.gen_range(lo[c]..=hi[c]);
    }
    ParamVec::from_array(t)
}

/// Nonnegative state with `N > 0`; components are zeroed at random.
fn random_state(rng: &mut ChaCha8Rng) -> StateVec {
    let scale = 10f64.powf(rng.gen_range(0.0..8.0));
    let mut a = [0.0; 5];
    for x in a.iter_mut() {
        if rng.gen_bool(0.8) {
            *x = scale * rng.gen::<f64>();
        }
    }
    if a[0] + a[1] + a[2] + a[3] <= 0.0 {
        a[0] = scale;
    }
    StateVec::from_array(a)
}

fn positivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bounds = ParamBounds::default();
    let steps = [1e-2, 1.0, 1e2, 1e4];
    let mut worst = f64::INFINITY;
    for trial in 0..1000 {
        let u = random_state(&mut rng);
        let th = random_theta(&mut rng, &bounds);
        let h = steps[trial % steps.len()];
        let next = match forward_step(&u, &th, h) {
            Ok(v) => v,
            Err(e) => return Outcome::new(false, format!("step failed on trial {trial}: {e}")),
        };
        for x in next.to_array() {
            worst = worst.min(x);
        }
    }
    Outcome::new(
        worst >= 0.0,
        format!("smallest component over 1000 steps = {worst:e}"),
    )
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bounds = ParamBounds::default();
    let mut worst = 0.0_f64;
    for h in [0.01, 1.0, 100.0] {
        let mut u = StateVec::new(1e6 - 100.0, 50.0, 100.0, 0.0, 0.0);
        let total0 = u.total();
        let n0 = u.living();
        for _ in 0..10_000 {
            u = forward_step(&u, &random_theta(&mut rng, &bounds), h).unwrap();
            worst = worst.max((u.total() - total0).abs() / n0);
        }
    }
    Outcome::new(
        worst <= 1e-9,
        format!("max |ΣU^k − ΣU^0| / N(0) = {worst:.3e} (limit 1e-9)"),
    )
}

fn backward_stability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bounds = ParamBounds::default();
    let mut worst_ratio = 0.0_f64;
    let mut finite = true;
    let step_sizes_tried = [1e-2, 1.0, 1e2, 1e4, 1e6];
    for trial in 0..200 {
        let h = step_sizes_tried[trial % step_sizes_tried.len()];
        let intervals = rng.gen_range(1..=20);
        let substeps = rng.gen_range(1..=10_000 / intervals);
        let grid = SolverGrid::uniform(0.0, h * substeps as f64, intervals, substeps).unwrap();
        let u0 = random_state(&mut rng);
        // R0 ≤ 1 keeps the exact linearized sensitivities bounded, so any growth
        // beyond the seeded data would come from the discretization
        let theta: Vec<ParamVec> = (0..grid.steps())
            .map(|_| {
                let mut t = random_theta(&mut rng, &bounds);
                t.beta = rng.gen_range(0.0..=t.gamma + t.mu);
                t
            })
            .collect();
        let traj = solve_forward(&u0, &theta, &grid).unwrap();

        let w = LossWeights::new(1.0, 1.0).unwrap();
        // data chosen so every jump and the terminal seed lie in [-1, 1]
        let mut observed = Vec::new();
        let mut seeded = 0.0;
        for i in 1..intervals {
            let u = traj.at_observation(i);
            let p = ObservedPoint::new(
                grid.observation_times()[i],
                u.i - 0.5 * rng.gen_range(-1.0..=1.0),
                u.d - 0.5 * rng.gen_range(-1.0..=1.0),
            );
            seeded += jump_update(&CostateVec::ZERO, u, &p, &w).max_abs();
            observed.push(p);
        }
        let end = traj.last();
        let target = TargetPoint::new(
            grid.end(),
            end.i - 0.5 * rng.gen_range(-1.0..=1.0),
            end.d - 0.5 * rng.gen_range(-1.0..=1.0),
        );
        seeded += terminal_costate(end, &target, &w).max_abs();
        let problem =
            ControlProblem::new(grid, u0, observed, target, w, OptimizerSettings::default()).unwrap();
        let v = solve_backward(&traj, &theta, &problem).unwrap();
        finite &= v.values().iter().all(CostateVec::is_finite);
        if seeded > 0.0 {
            worst_ratio = worst_ratio.max(v.max_abs() / seeded);
        }
    }
    Outcome::new(
        finite && worst_ratio <= 10.0,
        format!("finite = {finite}, max |V| / seeded data = {worst_ratio:.3} (limit 10)"),
    )
}

fn adjoint_gradient() -> Outcome {
    let theta = ParamVec::new(0.3, 0.22, 0.15, 0.006);
    let grid = SolverGrid::uniform(0.0, 30.0, 1, 10_000).unwrap();
    let u0 = StateVec::new(1e7 - 100.0, 40.0, 100.0, 0.0, 0.0);
    let path = vec![theta; grid.steps()];
    let end = *solve_forward(&u0, &path, &grid).unwrap().last();
    let target = TargetPoint::new(30.0, 0.5 * end.i, 0.5 * end.d);
    let w = LossWeights::new(
        1.0 / (target.infections * target.infections),
        1.0 / (target.deaths * target.deaths),
    )
    .unwrap();
    let problem =
        ControlProblem::new(grid.clone(), u0, vec![], target, w, OptimizerSettings::default()).unwrap();
    let adjoint = gradient_constant_theta(&problem, theta).unwrap();

    // central differences of the terminal loss through the forward solver
    let terminal = |th: ParamVec| {
        let u = *solve_forward(&u0, &vec![th; grid.steps()], &grid).unwrap().last();
        w.lambda1 * (u.i - target.infections).powi(2) + w.lambda2 * (u.d - target.deaths).powi(2)
    };
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for p in Param::ALL {
        let step = 1e-6 * theta.get(p).abs();
        let (mut up, mut down) = (theta, theta);
        up.set(p, theta.get(p) + step);
        down.set(p, theta.get(p) - step);
        let fd = (terminal(up) - terminal(down)) / (2.0 * step);
        let rel = (adjoint.get(p) - fd).abs() / fd.abs();
        worst = worst.max(rel);
        parts.push(format!("{p} {rel:.1e}"));
    }
    Outcome::new(
        worst <= 1e-3,
        format!("relative errors: {} (limit 1e-3)", parts.join(", ")),
    )
}

fn prox_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let u = StateVec::from_array([(); 5].map(|_| rng.gen_range(0.0..100.0)));
        let u = StateVec { s: u.s + 1.0, ..u };
        let v = CostateVec::from_array([(); 5].map(|_| rng.gen_range(-1.0..1.0)));
        let theta_l = ParamVec::from_array([(); 4].map(|_| rng.gen_range(0.0..1.0)));
        let tau = ParamVec::from_array([(); 4].map(|_| 10f64.powf(rng.gen_range(-4.0..-1.0))));
        let prox = seir_control::control::prox_step(&theta_l, &u, &v, &tau);

        for p in Param::ALL {
            // H is linear in θ, so its slope along one component comes from two evaluations
            let mut unit = ParamVec::default();
            unit.set(p, 1.0);
            let slope =
                hamiltonian(&u, &v, &unit).unwrap() - hamiltonian(&u, &v, &ParamVec::default()).unwrap();
            let objective = |x: f64| slope * x + (x - theta_l.get(p)).powi(2) / (2.0 * tau.get(p));
            let best = objective(prox.get(p));
            // scan wide enough to bracket the minimizer with room on either side
            let half = 2.0 * (prox.get(p) - theta_l.get(p)).abs() + 1e-3;
            let (lo, hi) = (theta_l.get(p) - half, theta_l.get(p) + half);
            for k in 0..10_000 {
                let x = lo + (hi - lo) * k as f64 / 9_999.0;
                worst = worst.min(objective(x) - best);
            }
        }
    }
    Outcome::new(
        worst >= -1e-12,
        format!("min(scan − closed form) = {worst:.3e} (limit −1e-12)"),
    )
}

fn twin_series() -> (ObservedSeries, StateVec, Vec<ParamVec>) {
    let pieces = [
        ParamVec::new(0.45, 0.22, 0.12, 0.004),
        ParamVec::new(0.3, 0.21, 0.15, 0.006),
        ParamVec::new(0.2, 0.23, 0.13, 0.003),
    ];
    let m = seir_control::DEFAULT_SUBSTEPS;
    let grid = SolverGrid::uniform(0.0, 2.0, 45, m).unwrap();
    let theta: Vec<ParamVec> = (0..grid.steps())
        .map(|j| pieces[(grid.node_time(j) / 30.0).floor() as usize])
        .collect();
    let u0 = StateVec::new(1e6 - 100.0, 0.0, 100.0, 0.0, 0.0);
    let twin = synth_twin(&theta, &u0, &grid, 0.0, 0).unwrap();
    (twin.series, u0, theta)
}

/// Ten-day windows, so each window's loss weights follow its own magnitudes.
fn twin_options(max_iters: usize) -> WindowOptions {
    WindowOptions {
        boundaries: (1..9).map(|k| 10.0 * k as f64).collect(),
        settings: fitting_settings(max_iters),
        ..Default::default()
    }
}

fn fitting_settings(max_iters: usize) -> OptimizerSettings {
    OptimizerSettings {
        tau: step_sizes(1e-3),
        tol: 1e-6,
        max_iters,
        ..Default::default()
    }
}

fn twin_recovery() -> Outcome {
    let (series, u0, _) = twin_series();
    let fit = match windowed_fit(&series, u0, &twin_options(5000)) {
        Ok(f) => f,
        Err(e) => return Outcome::new(false, format!("fit failed: {e}")),
    };
    let (mi, md) = relative_misfit(&fit.trajectory, &series);
    let mut rises = 0;
    let mut iters = Vec::new();
    for w in &fit.windows {
        let h = &w.result.loss_history;
        iters.push(w.result.iterations);
        for k in 11..h.len() {
            if h[k] > h[k - 1] * (1.0 + 1e-12) {
                rises += 1;
            }
        }
    }
    Outcome::new(
        mi <= 0.01 && md <= 0.01 && rises == 0,
        format!(
            "max misfit I {:.3}%, D {:.3}% (limit 1%); loss rises after iteration 10: {rises}; iterations {iters:?}",
            100.0 * mi,
            100.0 * md
        ),
    )
}

fn threshold() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bounds = ParamBounds::default();
    let (h, days) = (0.25, 5000.0);
    let steps = (days / h) as usize;
    let mut extinct_fail = 0;
    let mut worst_final = 0.0_f64;
    for _ in 0..100 {
        let mut th = random_theta(&mut rng, &bounds);
        let b = rng.gen_range(0.0..0.01);
        let target = rng.gen_range(0.05..0.9);
        th.beta = target * (th.epsilon + b) * (th.gamma + th.mu + b) / th.epsilon;
        assert!(sigma(&th, b).unwrap() <= 1.0);
        let i0 = rng.gen_range(1e-4..0.5);
        let e0 = rng.gen_range(0.0..0.5 - i0 / 2.0);
        let x0 = FractionState::new(1.0 - i0 - e0, e0, i0);
        let path = integrate_fractions(x0, &th, b, h, steps).unwrap();
        let fin = path.last().unwrap().i;
        worst_final = worst_final.max(fin);
        if fin.is_nan() || fin >= 1e-6 {
            extinct_fail += 1;
        }
    }
    let mut persist_fail = 0;
    let mut weakest = f64::INFINITY;
    for _ in 0..100 {
        let mut th = random_theta(&mut rng, &bounds);
        let b = rng.gen_range(0.0..0.01);
        let target = rng.gen_range(1.2..5.0);
        th.beta = target * (th.epsilon + b) * (th.gamma + th.mu + b) / th.epsilon;
        assert!(sigma(&th, b).unwrap() > 1.0);
        let x0 = FractionState::new(1.0 - 1e-4, 0.0, 1e-4);
        let path = integrate_fractions(x0, &th, b, h, steps).unwrap();
        let peak = path.iter().fold(0.0_f64, |m, x| m.max(x.i));
        weakest = weakest.min(peak / 1e-4);
        if peak.is_nan() || peak <= 1e-4 {
            persist_fail += 1;
        }
    }
    Outcome::new(
        extinct_fail == 0 && persist_fail == 0,
        format!(
            "σ ≤ 1: {extinct_fail}/100 failures, largest i(5000) = {worst_final:.2e}; σ > 1: {persist_fail}/100 failures, smallest max i / i(0) = {weakest:.2}"
        ),
    )
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn us_fit() -> Outcome {
    let csse = std::env::var_os("SEIR_CSSE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| data_dir().join("csse"));
    let confirmed_path = csse.join("time_series_covid19_confirmed_global.csv");
    let deaths_path = csse.join("time_series_covid19_deaths_global.csv");
    let (confirmed, deaths) = match (
        std::fs::read_to_string(&confirmed_path),
        std::fs::read_to_string(&deaths_path),
    ) {
        (Ok(c), Ok(d)) => (c, d),
        _ => return Outcome::new(false, format!("CSSE snapshot not found under {}", csse.display())),
    };
    let population = match std::fs::read_to_string(data_dir().join("population.csv"))
        .map_err(|e| e.to_string())
        .and_then(|s| parse_population_table(&s).map_err(|e| e.to_string()))
    {
        Ok(t) => t,
        Err(e) => return Outcome::new(false, format!("population table: {e}")),
    };
    let Some(&us_population) = population.get("US") else {
        return Outcome::new(false, "population table has no US entry");
    };
    let series = match parse_csse(&confirmed, &deaths, "US") {
        Ok(s) => s.with_population(us_population),
        Err(e) => return Outcome::new(false, format!("parse failed: {e}")),
    };
    let series = series
        .slice_time(0.0, 300.0)
        .and_then(|s| sample_observations(&s, 2));
    let series = match series {
        Ok(s) if s.last().time == 300.0 => s,
        Ok(s) => return Outcome::new(false, format!("snapshot covers only {} days", s.last().time)),
        Err(e) => return Outcome::new(false, format!("sampling failed: {e}")),
    };
    let u0 = initial_state(&series).unwrap();
    let options = WindowOptions {
        boundaries: vec![30.0, 60.0, 90.0, 150.0, 210.0, 270.0],
        settings: fitting_settings(5000),
        ..Default::default()
    };
    let fit = match windowed_fit(&series, u0, &options) {
        Ok(f) => f,
        Err(e) => return Outcome::new(false, format!("fit failed: {e}")),
    };
    let (mi, md) = relative_misfit(&fit.trajectory, &series);
    let min_r0 = fit
        .theta
        .iter()
        .map(|t| r0(t).unwrap())
        .fold(f64::INFINITY, f64::min);
    Outcome::new(
        mi <= 0.05 && md <= 0.05 && min_r0 > 1.0,
        format!(
            "max misfit I {:.2}%, D {:.2}% (limit 5%); min R0 = {min_r0:.3}",
            100.0 * mi,
            100.0 * md
        ),
    )
}

fn scheduled_direction() -> Outcome {
    let base = ParamVec::new(0.3, 0.22, 0.12, 0.005);
    let m = seir_control::DEFAULT_SUBSTEPS;
    let grid = SolverGrid::uniform(0.0, 2.0, 30, m).unwrap();
    let u0 = StateVec::new(1e6 - 1000.0, 500.0, 1000.0, 0.0, 0.0);
    let twin = synth_twin(&vec![base; grid.steps()], &u0, &grid, 0.0, 0).unwrap();
    let baseline = twin.series.slice_time(30.0, 60.0).unwrap();
    let start_state = *twin.trajectory.at_observation(15);
    let (i0, d0) = (baseline.infections[0], baseline.deaths[0]);
    let schedule = ObservedSeries::new(
        "schedule",
        None,
        baseline.times.clone(),
        baseline.infections.iter().map(|&x| i0 + 0.5 * (x - i0)).collect(),
        baseline.deaths.iter().map(|&x| d0 + 0.5 * (x - d0)).collect(),
    )
    .unwrap();
    let options = ScheduleOptions {
        settings: OptimizerSettings {
            tau: step_sizes(2e-4),
            tol: 1e-6,
            ..Default::default()
        },
        ..Default::default()
    };
    let init = vec![base; (schedule.len() - 1) * m];
    let result = match scheduled_control(start_state, &schedule, &init, &options) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("control failed: {e}")),
    };
    let mean_beta = result.theta.iter().map(|t| t.beta).sum::<f64>() / result.theta.len() as f64;
    let end = result.trajectory.last();
    let target = schedule.last();
    let miss_i = (end.i - target.infections).abs() / target.infections;
    let miss_d = (end.d - target.deaths).abs() / target.deaths;
    Outcome::new(
        mean_beta < base.beta && miss_i <= 0.01 && miss_d <= 0.01,
        format!(
            "mean β {mean_beta:.4} vs baseline {:.4}; terminal miss I {:.3}%, D {:.3}% (limit 1%)",
            base.beta,
            100.0 * miss_i,
            100.0 * miss_d
        ),
    )
}

fn window_consistency() -> Outcome {
    let (series, u0, _) = twin_series();
    let fit = match windowed_fit(&series, u0, &twin_options(50)) {
        Ok(f) => f,
        Err(e) => return Outcome::new(false, format!("fit failed: {e}")),
    };
    let again = solve_forward(&u0, &fit.theta, fit.grid()).unwrap();
    let mut worst = 0.0_f64;
    for (a, b) in again.values.iter().zip(&fit.trajectory.values) {
        for (x, y) in a.to_array().iter().zip(b.to_array()) {
            worst = worst.max((x - y).abs() / y.abs().max(1.0));
        }
    }
    let same_len = again.values.len() == fit.trajectory.values.len();
    Outcome::new(
        same_len && worst <= 1e-10,
        format!(
            "max relative deviation over {} nodes = {worst:.3e} (limit 1e-10)",
            again.values.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Check); 10] = [
        ("positivity", Duration::from_secs(1), positivity),
        ("discrete conservation", Duration::from_secs(1), conservation),
        ("backward stability", Duration::from_secs(1), backward_stability),
        (
            "adjoint gradient vs finite differences",
            Duration::from_secs(5),
            adjoint_gradient,
        ),
        ("prox minimizer exactness", Duration::from_secs(5), prox_exactness),
        ("twin recovery", Duration::from_secs(60), twin_recovery),
        ("threshold behavior", Duration::from_secs(30), threshold),
        ("US data fit", Duration::from_secs(600), us_fit),
        (
            "scheduled control direction",
            Duration::from_secs(60),
            scheduled_direction,
        ),
        ("window concatenation", Duration::from_secs(1), window_consistency),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.2}s, budget {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
