use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use tiethresh::experiment::{
    compare_windowed, parse_grid, prepare_network, run_scenario, sweep_network, write_sweep, write_windowed_csv,
    ExperimentConfig, NetworkSource, ScenarioOptions, DATA_DIR_ENV, OUT_DIR_ENV, SCENARIOS, SEED_SIMULATION,
};
use tiethresh::ingest::{choose_dt, parse_contact_file, plan_for_dt, DEFAULT_RESOLUTION};
use tiethresh::rng::derive_seed;
use tiethresh::sis::{run_trajectories, write_trajectories_csv, SisParams};
use tiethresh::threshold::{classify, critical_value_series, SeriesConfig};
use tiethresh::windowed::ThresholdMode;
use tiethresh::{Error, Execution};

#[derive(Parser)]
#[command(name = "tiethresh", version, about = "Epidemic thresholds on tie-decay temporal networks")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a connected ER backbone and its interaction times.
    Generate(NetArgs),
    /// Read a contact file and report its discretization.
    Ingest(NetArgs),
    /// Run SIS replicates and write their trajectories.
    Simulate(NetArgs),
    /// Critical-value series over growing periods.
    Threshold(NetArgs),
    /// (λ, μ) grid of critical values and outbreak sizes.
    Sweep(NetArgs),
    /// Tie-decay versus fixed-window critical values at fixed μ.
    CompareWindowed(NetArgs),
    /// Run a named experiment: validation, decay-sweep, frequency-sweep,
    /// sparsity-sweep, period-convergence, real-workplace, real-conference,
    /// windowed-compare.
    RunScenario(ScenarioArgs),
}

#[derive(Args, Clone)]
struct NetArgs {
    /// Key-value config file or JSON manifest; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Contact file (`t i j` per line) instead of a synthetic network.
    #[arg(long)]
    contacts: Option<PathBuf>,
    #[arg(long)]
    max_per_bin: Option<usize>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    /// Grid for both λ and μ: `start:stop:step` or a comma list.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    l_max: Option<usize>,
    /// Fixed period instead of the stopping rule.
    #[arg(long)]
    period: Option<usize>,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value = "literal")]
    mode: String,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario name; may be omitted when --config names a run manifest.
    name: Option<String>,
    /// Manifest from an earlier run, to reproduce it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    contacts: Option<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

/// Usage problems detected after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl NetArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.contacts {
            cfg.source = NetworkSource::Contacts {
                path: path.clone(),
                backbone_p: 0.1,
            };
            if self.dt.is_none() && self.config.is_none() {
                cfg.dt = None;
            }
            if self.steps.is_none() && self.config.is_none() {
                cfg.steps = None;
            }
        }
        match &mut cfg.source {
            NetworkSource::Er { n, p } => {
                *n = self.n.unwrap_or(*n);
                *p = self.p.unwrap_or(*p);
            }
            NetworkSource::Contacts { backbone_p, .. } => {
                if self.n.is_some() {
                    return Err(usage("--n does not apply to contact files"));
                }
                *backbone_p = self.p.unwrap_or(*backbone_p);
            }
        }
        let grid = |s: &Option<String>| {
            s.as_deref()
                .map(parse_grid)
                .transpose()
                .map_err(|e| usage(e.to_string()))
        };
        if let Some(g) = grid(&self.grid)? {
            cfg.lambdas = g.clone();
            cfg.mus = g;
        }
        cfg.lambdas = grid(&self.lambda)?.unwrap_or(cfg.lambdas);
        cfg.mus = grid(&self.mu)?.unwrap_or(cfg.mus);
        cfg.alpha = self.alpha.unwrap_or(cfg.alpha);
        cfg.beta = self.beta.unwrap_or(cfg.beta);
        cfg.dt = self.dt.or(cfg.dt);
        cfg.steps = self.steps.or(cfg.steps);
        cfg.l_max = self.l_max.or(cfg.l_max);
        cfg.period = self.period.or(cfg.period);
        cfg.max_per_bin = self.max_per_bin.unwrap_or(cfg.max_per_bin);
        if let Some(r) = self.replicates {
            cfg.replicates = r.max(1);
            cfg.simulate = r > 0;
        }
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn single(values: &[f64], name: &str) -> anyhow::Result<f64> {
        match values {
            [v] => Ok(*v),
            _ => Err(usage(format!("--{name} needs exactly one value"))),
        }
    }

    fn mode(&self) -> anyhow::Result<ThresholdMode> {
        self.mode.parse().map_err(|e: Error| usage(e.to_string()))
    }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn generate(args: &NetArgs) -> anyhow::Result<()> {
    let cfg = args.config()?;
    if !matches!(cfg.source, NetworkSource::Er { .. }) {
        return Err(usage("generate works on synthetic networks; drop --contacts"));
    }
    let net = prepare_network(&cfg)?;
    let mut edges = create(&cfg.out_dir, "edges.csv")?;
    writeln!(edges, "i,j")?;
    for (i, j) in net.backbone.edges() {
        writeln!(edges, "{i},{j}")?;
    }
    edges.flush()?;
    let mut events = create(&cfg.out_dir, "events.txt")?;
    net.log.write_text(&mut events)?;
    events.flush()?;
    println!(
        "nodes {} edges {} events {} steps {}",
        net.n(),
        net.backbone.len(),
        net.log.len(),
        net.steps()
    );
    Ok(())
}

fn ingest(args: &NetArgs) -> anyhow::Result<()> {
    let path = args.contacts.as_ref().ok_or_else(|| usage("ingest needs --contacts"))?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let contacts = parse_contact_file(BufReader::new(file))?;
    let plan = match args.dt {
        Some(dt) => plan_for_dt(&contacts.log, dt)?,
        None => choose_dt(&contacts.log, args.max_per_bin.unwrap_or(10), DEFAULT_RESOLUTION)?,
    };
    if let Some(out) = &args.out {
        let mut map = create(out, "node_map.csv")?;
        writeln!(map, "index,id")?;
        for (k, id) in contacts.node_ids.iter().enumerate() {
            writeln!(map, "{k},{id}")?;
        }
        map.flush()?;
        let mut events = create(out, "events.txt")?;
        contacts.log.write_text(&mut events)?;
        events.flush()?;
    }
    println!(
        "nodes {} events {} dt {} steps {} max_per_step {}{}",
        contacts.log.n(),
        contacts.log.len(),
        plan.dt,
        plan.num_steps,
        plan.max_per_bin,
        if plan.within_bound { "" } else { " (bound not met)" }
    );
    Ok(())
}

fn simulate(args: &NetArgs, exec: Execution) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let lambda = NetArgs::single(&cfg.lambdas, "lambda")?;
    let mu = NetArgs::single(&cfg.mus, "mu")?;
    let net = prepare_network(&cfg)?;
    let params = SisParams::new(lambda, mu)?.with_seed(derive_seed(cfg.seed, SEED_SIMULATION));
    let runs = run_trajectories(&net.snapshots, &params, net.steps(), cfg.replicates, exec)?;
    let mut out = create(&cfg.out_dir, "trajectories.csv")?;
    write_trajectories_csv(&mut out, &runs)?;
    out.flush()?;
    let mean = runs.iter().map(|t| t.final_outbreak_size as f64).sum::<f64>() / runs.len() as f64;
    println!("mean_final_size {mean}");
    Ok(())
}

fn threshold(args: &NetArgs) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let lambda = NetArgs::single(&cfg.lambdas, "lambda")?;
    let mu = NetArgs::single(&cfg.mus, "mu")?;
    let net = prepare_network(&cfg)?;
    let mut series_cfg = SeriesConfig::new(cfg.period.or(cfg.l_max).unwrap_or(net.steps()));
    series_cfg.stop_at_convergence = cfg.period.is_none() && cfg.l_max.is_none();
    let series = critical_value_series(&net.snapshots, lambda, mu, &series_cfg)?;
    let mut out = create(&cfg.out_dir, "series.csv")?;
    series.write_csv(&mut out)?;
    out.flush()?;
    let value = match cfg.period {
        Some(l) => series.values[l - 1],
        None => series.critical_value(),
    };
    println!(
        "critical_value {value} converged_l {} outcome {:?}",
        series.converged_l.map_or("none".to_string(), |l| l.to_string()),
        classify(value)
    );
    Ok(())
}

fn sweep(args: &NetArgs, exec: Execution) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let net = prepare_network(&cfg)?;
    let rule = cfg.period_config(net.steps());
    let replicates = if cfg.simulate { cfg.replicates } else { 0 };
    let grid = sweep_network(
        &net,
        &cfg.lambdas,
        &cfg.mus,
        &rule,
        replicates,
        derive_seed(cfg.seed, SEED_SIMULATION),
        exec,
    )?;
    let files = write_sweep(&cfg, &grid)?;
    println!("cells {} above_one {}", grid.cells.len(), grid.outbreak_cells());
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn compare(args: &NetArgs, exec: Execution) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let mode = args.mode()?;
    let mu = match &args.mu {
        Some(_) => NetArgs::single(&cfg.mus, "mu")?,
        None => 0.5,
    };
    if args.window == 0 {
        return Err(usage("--window must be at least 1"));
    }
    let net = prepare_network(&cfg)?;
    let rule = cfg.period_config(net.steps());
    let replicates = if cfg.simulate { cfg.replicates } else { 0 };
    let rows = compare_windowed(
        &net,
        &cfg.lambdas,
        mu,
        args.window,
        &rule,
        replicates,
        derive_seed(cfg.seed, SEED_SIMULATION),
        exec,
    )?;
    let mut out = create(&cfg.out_dir, "windowed.csv")?;
    write_windowed_csv(&mut out, &rows)?;
    out.flush()?;
    for r in &rows {
        let windowed = match mode {
            ThresholdMode::Literal => r.literal_per_step,
            ThresholdMode::Expanded => r.expanded_per_step,
        };
        println!("lambda {} tie_decay {} windowed {}", r.lambda, r.tie_decay_value, windowed);
    }
    Ok(())
}

fn scenario(args: &ScenarioArgs, exec: Execution) -> anyhow::Result<()> {
    let (name, mut opts) = match &args.config {
        Some(path) => ScenarioOptions::from_manifest(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let name = args
                .name
                .clone()
                .ok_or_else(|| usage(format!("scenario name required, one of: {}", SCENARIOS.join(", "))))?;
            (name, ScenarioOptions::default())
        }
    };
    let name = args.name.clone().unwrap_or(name);
    if !SCENARIOS.contains(&name.as_str()) {
        return Err(Error::UnknownScenario(name).into());
    }
    opts.seed = args.seed.unwrap_or(opts.seed);
    opts.replicates = args.replicates.unwrap_or(opts.replicates);
    if let Some(g) = &args.grid {
        opts.lambdas = parse_grid(g).map_err(|e| usage(e.to_string()))?;
        opts.mus = opts.lambdas.clone();
    }
    opts.steps = args.steps.or(opts.steps);
    opts.data_dir = args.data_dir.clone().or(opts.data_dir);
    opts.contacts = args.contacts.clone().or(opts.contacts);
    if let Some(out) = &args.out {
        opts.out_dir = out.clone();
    }
    let report = run_scenario(&name, &opts, exec)?;
    println!("{}", serde_json::to_string(&report.summary).unwrap_or_default());
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Ingest(a) => ingest(a),
        Command::Simulate(a) => simulate(a, exec),
        Command::Threshold(a) => threshold(a),
        Command::Sweep(a) => sweep(a, exec),
        Command::CompareWindowed(a) => compare(a, exec),
        Command::RunScenario(a) => {
            if a.name.is_none() && a.config.is_none() {
                bail!(usage(format!("scenario name required, one of: {}", SCENARIOS.join(", "))));
            }
            scenario(a, exec)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::UnknownScenario(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
