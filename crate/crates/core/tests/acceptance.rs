//! Acceptance criteria. Each test writes one `PASS` or `FAIL` line straight
//! to stderr (so it shows up without `--nocapture`) and then asserts.

use std::io::Write;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use tiethresh::events::Event;
use tiethresh::experiment::{
    prepare_network, run_scenario, sweep, ExperimentConfig, NetworkSource, ScenarioOptions, DATA_DIR_ENV,
    CONFERENCE_FILE, WORKPLACE_FILE,
};
use tiethresh::ingest::{discretize, step_index, DiscretizationPlan};
use tiethresh::sis::{sis_step, Compartment, SisParams, SisState};
use tiethresh::synthetic::{generate_er, generate_event_times, initial_tie_matrix, ErConfig, WaitingTimeConfig};
use tiethresh::threshold::{
    critical_value_series, mean_field_map, spectral_radius_product, PowerConfig, SeriesConfig, SystemOperator,
};
use tiethresh::tie_decay::{closed_form_strength_inclusive, step, TieMatrix};
use tiethresh::{DecayParams, EventLog, Execution, SnapshotSequence};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn report(id: u32, pass: bool, detail: &str) {
    let line = format!("{} criterion {id}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "{line}");
}

fn majority(votes: &[bool]) -> bool {
    2 * votes.iter().filter(|&&v| v).count() > votes.len()
}

/// Random small tie-decay network: ER backbone, exponential events, `steps`
/// snapshots after `B(0)`.
struct Instance {
    initial: TieMatrix,
    log: EventLog,
    seq: SnapshotSequence,
    alpha: f64,
    dt: f64,
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, steps: usize) -> Instance {
    let g = generate_er(&ErConfig::new(n, rng.random_range(0.15..0.6), rng.random())).unwrap();
    let initial = initial_tie_matrix(&g, rng.random_range(0.0..1.2)).unwrap();
    let dt = rng.random_range(0.5..2.0);
    let alpha = rng.random_range(0.005..0.5);
    let waits = WaitingTimeConfig {
        beta: rng.random_range(1.0..30.0),
        dt,
        seed: rng.random(),
    };
    let log = generate_event_times(&g, &waits, steps as f64 * dt).unwrap();
    let plan = DiscretizationPlan {
        dt,
        num_steps: steps,
        max_per_bin: 0,
        within_bound: true,
    };
    let seq = SnapshotSequence::build(&initial, &discretize(&log, &plan), DecayParams::new(alpha, dt).unwrap()).unwrap();
    Instance {
        initial,
        log,
        seq,
        alpha,
        dt,
    }
}

fn system_factor(b: &TieMatrix, lambda: f64, mu: f64) -> DMatrix<f64> {
    let n = b.n();
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 - mu } else { 0.0 };
        id + lambda * b.get(i, j).min(1.0)
    })
}

#[test]
fn criterion_01_matrix_free_radius_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=30);
        let l = rng.random_range(1..=50);
        let inst = random_instance(&mut rng, n, l);
        let (lambda, mu) = (rng.random_range(0.01..1.0), rng.random_range(0.01..0.99));

        let op = SystemOperator::from_snapshots(&inst.seq, lambda, mu, l).unwrap();
        let est = spectral_radius_product(&op, &PowerConfig::default());

        let mut prod = DMatrix::<f64>::identity(n, n);
        for tau in 0..l {
            prod = system_factor(&inst.seq.snapshot(tau), lambda, mu) * prod;
        }
        let dense = prod.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max((est.radius() - dense).abs() / dense);
    }
    report(1, worst <= 1e-6, &format!("50 instances, worst relative error {worst:.3e} (tol 1e-6)"));
}

#[test]
fn criterion_02_recurrence_matches_closed_form() {
    const T: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=15);
        let inst = random_instance(&mut rng, n, T);
        let plan = DiscretizationPlan {
            dt: inst.dt,
            num_steps: T,
            max_per_bin: 0,
            within_bound: true,
        };
        let interactions = discretize(&inst.log, &plan);
        let decay = DecayParams::new(inst.alpha, inst.dt).unwrap();
        let mut b = inst.initial.clone();
        for a in &interactions {
            b = step(&b, a, decay).unwrap();
        }

        let t_end = T as f64 * inst.dt;
        for i in 0..n {
            for j in (i + 1)..n {
                // events snapped to the right end of their step
                let times: Vec<f64> = inst
                    .log
                    .events()
                    .iter()
                    .filter(|e: &&Event| (e.i.min(e.j), e.i.max(e.j)) == (i, j))
                    .map(|e| step_index(e.t, inst.dt) as f64 * inst.dt)
                    .collect();
                let exact = closed_form_strength_inclusive(inst.initial.get(i, j), inst.alpha, &times, t_end).unwrap();
                let got = b.get(i, j);
                let err = if exact == 0.0 { got.abs() } else { (got - exact).abs() / exact };
                worst = worst.max(err);
            }
        }
    }
    report(2, worst <= 1e-12, &format!("20 instances, T = {T}, worst relative error {worst:.3e} (tol 1e-12)"));
}

#[test]
fn criterion_03_mean_field_jacobian_is_system_matrix() {
    const H: f64 = 1e-7;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=10);
        let l = rng.random_range(1..=10);
        let inst = random_instance(&mut rng, n, l);
        let (lambda, mu) = (rng.random_range(0.01..1.0), rng.random_range(0.01..0.99));
        let seq = &inst.seq;
        let period_map = |p: Vec<f64>| {
            (0..l).fold(p, |p, tau| mean_field_map(seq.edges(), seq.strengths(tau), lambda, mu, &p))
        };
        let op = SystemOperator::from_snapshots(seq, lambda, mu, l).unwrap();

        for j in 0..n {
            let mut plus = vec![0.0; n];
            plus[j] = H;
            let minus: Vec<f64> = plus.iter().map(|v| -v).collect();
            let (fp, fm) = (period_map(plus), period_map(minus));

            let mut col = vec![0.0; n];
            col[j] = 1.0;
            for k in 0..l {
                let mut next = vec![0.0; n];
                op.apply_factor(k, &col, &mut next);
                col = next;
            }
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * H);
                let err = (fd - col[i]).abs() / col[i].abs().max(1e-8);
                worst = worst.max(err);
            }
        }
    }
    report(3, worst <= 1e-4, &format!("20 instances, worst entrywise relative error {worst:.3e} (tol 1e-4)"));
}

fn validation_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        source: NetworkSource::Er { n: 100, p: 0.1 },
        alpha: 0.1,
        beta: 100.0,
        steps: Some(1000),
        replicates: 10,
        simulate: true,
        seed,
        ..ExperimentConfig::default()
    }
}

#[test]
fn criterion_04_subcritical_cells_die_out() {
    let mut violations = Vec::new();
    for seed in SEEDS {
        let grid = sweep(&validation_config(seed), Execution::default()).unwrap();
        let bad = grid
            .cells
            .iter()
            .filter(|c| c.critical_value < 0.98 && c.mean_final.unwrap() > 0.0)
            .count();
        violations.push(bad);
    }
    let total: usize = violations.iter().sum();
    report(4, total == 0, &format!("violations per seed {violations:?} (tol 0)"));
}

fn scenario(name: &str, seed: u64, replicates: usize) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let opts = ScenarioOptions {
        seed,
        replicates,
        out_dir: dir.path().to_path_buf(),
        ..ScenarioOptions::default()
    };
    run_scenario(name, &opts, Execution::default()).unwrap().summary
}

#[test]
fn criterion_05_pcc_at_least_half() {
    let summary = scenario("validation", 1, 10);
    let rows = summary["pcc"].as_array().unwrap();
    assert_eq!(rows.len(), 9);
    let mut pass = true;
    let mut parts = Vec::new();
    for row in rows {
        let r = row[2].as_f64();
        pass &= r.is_some_and(|r| r >= 0.5);
        parts.push(format!("({}, {}) {}", row[0], row[1], r.map_or("undefined".into(), |r| format!("{r:.3}"))));
    }
    report(5, pass, &format!("pcc {} (min 0.5)", parts.join(", ")));
}

#[test]
fn criterion_06_period_convergence_bands() {
    let targets = [(0.3, 0.7, 0.78, 0.84), (0.4, 0.6, 1.05, 1.11)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (lambda, mu, lo, hi) in targets {
        let mut votes = Vec::new();
        let mut seen = Vec::new();
        for seed in SEEDS {
            let cfg = ExperimentConfig {
                source: NetworkSource::Er { n: 100, p: 0.05 },
                alpha: 0.1,
                beta: 100.0,
                steps: Some(1000),
                seed,
                ..ExperimentConfig::default()
            };
            let net = prepare_network(&cfg).unwrap();
            let series = critical_value_series(&net.snapshots, lambda, mu, &SeriesConfig::new(300)).unwrap();
            let ok = series.converged_value.is_some_and(|v| v > lo && v < hi);
            votes.push(ok);
            seen.push(match (series.converged_l, series.converged_value) {
                (Some(l), Some(v)) => format!("{v:.3}@{l}"),
                _ => "none".into(),
            });
        }
        let ok = majority(&votes);
        pass &= ok;
        parts.push(format!("({lambda}, {mu}) in ({lo}, {hi}): [{}]", seen.join(" ")));
    }
    report(6, pass, &format!("{} (majority of 5 seeds, l <= 300)", parts.join("; ")));
}

fn counts(summary: &Value) -> Vec<u64> {
    summary["cells_above_one"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r[1].as_u64().unwrap())
        .collect()
}

#[test]
fn criterion_07_parameter_orderings() {
    // scenario variants are listed as alpha 0.1, 0.01, 0.001; beta 10, 50,
    // 100; p 0.1, 0.05, 0.02
    let checks: [(&str, &str, fn(&[u64]) -> bool); 3] = [
        ("decay-sweep", "nondecreasing in alpha", |c| c[2] <= c[1] && c[1] <= c[0]),
        ("frequency-sweep", "nonincreasing in beta", |c| c[0] >= c[1] && c[1] >= c[2]),
        ("sparsity-sweep", "nondecreasing in p", |c| c[2] <= c[1] && c[1] <= c[0]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, rule, holds) in checks {
        let per_seed: Vec<Vec<u64>> = SEEDS.iter().map(|&s| counts(&scenario(name, s, 0))).collect();
        let ok = majority(&per_seed.iter().map(|c| holds(c)).collect::<Vec<_>>());
        pass &= ok;
        parts.push(format!("{name} {rule}: {} {per_seed:?}", if ok { "holds" } else { "violated" }));
    }
    report(7, pass, &parts.join("; "));
}

fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

#[test]
fn criterion_08_real_data_pipeline() {
    let dir = data_dir();
    let missing: Vec<String> = [WORKPLACE_FILE, CONFERENCE_FILE]
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        report(8, false, &format!("contact files {missing:?} not found in {}", dir.display()));
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, nodes, steps) in [("real-workplace", 93, 988), ("real-conference", 113, 1062)] {
        let out = tempfile::tempdir().unwrap();
        let opts = ScenarioOptions {
            out_dir: out.path().to_path_buf(),
            data_dir: Some(dir.clone()),
            ..ScenarioOptions::default()
        };
        let summary = run_scenario(name, &opts, Execution::default()).unwrap().summary;
        let grid = std::fs::read_to_string(out.path().join("grid_main.csv")).unwrap();
        let violations = grid
            .lines()
            .skip(1)
            .filter(|line| {
                let f: Vec<&str> = line.split(',').collect();
                f[2].parse::<f64>().unwrap() < 0.98 && f[4].parse::<f64>().unwrap() > 0.0
            })
            .count();
        let (n, t) = (summary["nodes"].as_u64().unwrap(), summary["steps"].as_u64().unwrap());
        pass &= n == nodes && t == steps && violations == 0;
        parts.push(format!("{name}: nodes {n}/{nodes}, steps {t}/{steps}, violations {violations}"));
    }
    report(8, pass, &parts.join("; "));
}

#[test]
fn criterion_09_windowed_values_stay_near_one() {
    let summary = scenario("windowed-compare", 1, 0);
    let literal = summary["windowed_literal_spread"].as_f64().unwrap();
    let tie_decay = summary["tie_decay_spread"].as_f64().unwrap();
    report(
        9,
        literal <= 0.25 && tie_decay >= 1.5,
        &format!("windowed literal spread {literal:.3} (max 0.25), tie-decay spread {tie_decay:.3} (min 1.5)"),
    );
}

#[test]
fn criterion_10_two_node_transition_frequencies() {
    const TRIALS: usize = 100_000;
    let (lambda, mu, b) = (0.6, 0.3, 0.8);
    let ties = TieMatrix::from_edges(2, [(0, 1, b)]).unwrap();
    let params = SisParams::new(lambda, mu).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let infect = lambda * b;
    let mut worst_z: f64 = 0.0;
    for start in 0..4usize {
        let inf = [start & 1 == 1, start & 2 == 2];
        let compartments: Vec<Compartment> = inf
            .iter()
            .map(|&i| if i { Compartment::Infected } else { Compartment::Susceptible })
            .collect();
        let state = SisState::from_compartments(&compartments);
        // each node moves independently given the current state
        let stay_or_catch = |k: usize| {
            if inf[k] {
                1.0 - mu
            } else if inf[1 - k] {
                infect
            } else {
                0.0
            }
        };
        let (q0, q1) = (stay_or_catch(0), stay_or_catch(1));
        let mut hits = [0usize; 4];
        for _ in 0..TRIALS {
            let next = sis_step(&state, &ties, &params, &mut rng).unwrap();
            hits[usize::from(next.is_infected(0)) | (usize::from(next.is_infected(1)) << 1)] += 1;
        }
        for (end, &h) in hits.iter().enumerate() {
            let p0 = if end & 1 == 1 { q0 } else { 1.0 - q0 };
            let p1 = if end & 2 == 2 { q1 } else { 1.0 - q1 };
            let p = p0 * p1;
            let freq = h as f64 / TRIALS as f64;
            let sd = (p * (1.0 - p) / TRIALS as f64).sqrt();
            let z = if sd == 0.0 {
                if freq == p { 0.0 } else { f64::INFINITY }
            } else {
                (freq - p).abs() / sd
            };
            worst_z = worst_z.max(z);
        }
    }
    report(10, worst_z <= 3.0, &format!("16 transitions, {TRIALS} trials each, worst |z| {worst_z:.2} (max 3)"));
}
