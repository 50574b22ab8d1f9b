use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use landca::ca::{self, DevelopmentSurface, MarkovDemand};
use landca::config::{PipelineConfig, ReclassScheme};
use landca::forest::{variable_contribution, ContributionMode, Forest, ForestParams};
use landca::io;
use landca::pipeline::{
    self, history_csv, load_epoch, load_variables, partition_csv, region_cells,
};
use landca::raster::{LandClass, Raster};
use landca::region::partition;
use landca::render;
use landca::sample::{build_change_map, stratified_sample, SamplingPolicy};
use landca::synth::{generate, SynthParams};
use landca::validation::{change_confusion, producer_accuracy, user_accuracy};

#[derive(Parser)]
#[command(
    name = "landca",
    version,
    about = "Urban expansion and farmland loss simulation"
)]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regionalize administrative units into contiguous regions.
    Cluster(ClusterArgs),
    /// Build a stratified training set from two epochs.
    Sample(SampleArgs),
    /// Train a random forest on a training set.
    Train(TrainArgs),
    /// Per-feature contribution of a trained forest.
    Contribute(ContributeArgs),
    /// Markov-chain demand projection.
    Demand(DemandArgs),
    /// Run the cellular automaton for one epoch.
    Simulate(SimulateArgs),
    /// Compare a simulated epoch with observations.
    Validate(ValidateArgs),
    /// Run every stage from a config file.
    Pipeline(PipelineArgs),
    /// Render a raster to a PPM image.
    Render(RenderArgs),
    /// Write a synthetic two-region world and its config.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Identity,
    ElevenClass,
}

impl From<Scheme> for ReclassScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Identity => ReclassScheme::Identity,
            Scheme::ElevenClass => ReclassScheme::ElevenClass,
        }
    }
}

#[derive(Args)]
struct EpochArgs {
    #[arg(long)]
    t0: PathBuf,
    #[arg(long)]
    t1: PathBuf,
    #[arg(long, value_enum, default_value = "identity")]
    reclass: Scheme,
}

#[derive(Args)]
struct VariableArgs {
    /// Spatial variable rasters, in feature order.
    #[arg(long = "var", required = true)]
    vars: Vec<PathBuf>,
}

impl VariableArgs {
    fn names(&self) -> Vec<String> {
        self.vars
            .iter()
            .map(|p| {
                p.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect()
    }

    fn load(&self) -> Result<(Vec<String>, Vec<Raster<f64>>)> {
        let names = self.names();
        let (vars, _) = load_variables(&self.vars, &names)?;
        Ok((names, vars))
    }
}

/// Restrict work to one region of a saved partition.
#[derive(Args)]
struct RegionArgs {
    #[arg(long, requires_all = ["partition", "region"])]
    units: Option<PathBuf>,
    #[arg(long, requires = "units")]
    partition: Option<PathBuf>,
    #[arg(long, requires = "units")]
    region: Option<usize>,
}

impl RegionArgs {
    fn mask(&self) -> Result<Option<(Vec<usize>, usize)>> {
        let (Some(u), Some(p), Some(r)) = (&self.units, &self.partition, self.region) else {
            return Ok(None);
        };
        let units: Raster<f64> = io::load_ascii_grid(u)?;
        let part = io::load_partition(p)?;
        Ok(Some((region_cells(&units, &part), r)))
    }
}

fn apply_mask<V: Copy + PartialEq>(r: &Raster<V>, mask: &Option<(Vec<usize>, usize)>) -> Raster<V> {
    let mut out = r.clone();
    if let Some((cells, region)) = mask {
        let nodata = out.nodata();
        for (v, c) in out.values_mut().iter_mut().zip(cells) {
            if c != region {
                *v = nodata;
            }
        }
    }
    out
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    indexes: PathBuf,
    #[arg(long)]
    adjacency: PathBuf,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value = "partition.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    epochs: EpochArgs,
    #[command(flatten)]
    variables: VariableArgs,
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    phi: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "training.csv")]
    out: PathBuf,
    /// Also write the normalization statistics.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    training: PathBuf,
    #[arg(long, default_value_t = 80)]
    trees: usize,
    #[arg(long, default_value_t = 0.6)]
    fraction: f64,
    #[arg(long, default_value_t = 25)]
    max_depth: usize,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Features tried per node; defaults to ceil(sqrt(S)).
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "forest.bin")]
    out: PathBuf,
    /// Human-readable dump of the trees.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Reevaluate,
    Retrain,
}

#[derive(Args)]
struct ContributeArgs {
    #[arg(long)]
    forest: PathBuf,
    #[arg(long)]
    training: PathBuf,
    #[arg(long, value_enum, default_value = "reevaluate")]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Region label written in the first column.
    #[arg(long, default_value = "1")]
    label: String,
    #[arg(long, default_value = "contribution.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct DemandArgs {
    #[command(flatten)]
    epochs: EpochArgs,
    #[command(flatten)]
    region: RegionArgs,
    #[arg(long, default_value_t = 2)]
    horizon: usize,
    #[arg(long, default_value = "demand.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Starting class raster.
    #[arg(long)]
    initial: PathBuf,
    #[arg(long, value_enum, default_value = "identity")]
    reclass: Scheme,
    #[arg(long)]
    forest: PathBuf,
    #[command(flatten)]
    variables: VariableArgs,
    #[command(flatten)]
    region: RegionArgs,
    /// New urban cells to allocate.
    #[arg(long)]
    demand: usize,
    #[arg(long, default_value_t = 0.8)]
    p_threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0.0)]
    min_expansion_rate: f64,
    #[arg(long, default_value_t = 0)]
    min_new_cells: usize,
    #[arg(long)]
    allow_limited: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "simulated.asc")]
    out: PathBuf,
    #[arg(long, default_value = "history.csv")]
    history: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    epochs: EpochArgs,
    /// Simulated raster, as written by `simulate`.
    #[arg(long)]
    simulated: PathBuf,
    #[arg(long, value_enum, default_value = "identity")]
    simulated_reclass: Scheme,
    #[arg(long, default_value = "1")]
    label: String,
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override any config key, e.g. `--set forest.trees=40`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderKind {
    Class,
    Ratio,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "class")]
    kind: RenderKind,
    #[arg(long, value_enum, default_value = "identity")]
    reclass: Scheme,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Suppress growth in the right-hand region.
    #[arg(long)]
    freeze_right: bool,
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let table = io::load_index_table::<f64>(&a.indexes)?;
    let graph = io::load_adjacency(&a.adjacency)?;
    let part = partition(&table, &graph, a.k)?;
    std::fs::write(&a.out, partition_csv(&part))
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} units, {} clusters, {} regions, explained variance {:.4}",
        part.unit_ids.len(),
        part.n_clusters(),
        part.n_regions(),
        part.explained_variance
    );
    Ok(())
}

fn load_epochs(e: &EpochArgs) -> Result<(Raster<LandClass>, Raster<LandClass>)> {
    let scheme = e.reclass.into();
    let (_, t0) = load_epoch(&e.t0, &scheme)?;
    let (_, t1) = load_epoch(&e.t1, &scheme)?;
    Ok((t0, t1))
}

fn sample(a: SampleArgs) -> Result<()> {
    let (t0, t1) = load_epochs(&a.epochs)?;
    let mask = a.region.mask()?;
    let names = a.variables.names();
    let (vars, stats) = load_variables(&a.variables.vars, &names)?;
    let vars: Vec<Raster<f64>> = vars.iter().map(|v| apply_mask(v, &mask)).collect();
    let change = build_change_map(&apply_mask(&t0, &mask), &apply_mask(&t1, &mask))?;
    let out = stratified_sample(
        &change,
        &vars,
        &names,
        &SamplingPolicy {
            n_total: a.n,
            phi: a.phi,
            seed: a.seed,
        },
    )?;
    io::save_training_set(&out.set, &a.out)?;
    if let Some(p) = &a.stats {
        io::save_normalization(&stats, p)?;
    }
    println!(
        "{} rows{}; label counts {:?}",
        out.set.len(),
        if out.truncated { " (truncated)" } else { "" },
        out.set.label_counts()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = io::load_training_set::<f64>(&a.training)?;
    let params = ForestParams {
        m_trees: a.trees,
        sample_fraction: a.fraction,
        max_depth: a.max_depth,
        min_leaf: a.min_leaf,
        features_per_node: a.mtry,
        seed: a.seed,
    };
    let forest = Forest::train(&data, &params)?;
    io::save_forest(&forest, &a.out)?;
    if let Some(p) = &a.dump {
        let f = std::fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
        io::dump_forest_text(&forest, std::io::BufWriter::new(f))?;
    }
    match forest.oob_error(&data) {
        Ok(r) => println!(
            "{} trees, OOB error {:.4} ({} rows without OOB votes)",
            forest.n_trees(),
            r.error,
            r.excluded
        ),
        Err(e) => println!("{} trees, OOB error unavailable: {e}", forest.n_trees()),
    }
    Ok(())
}

fn contribute(a: ContributeArgs) -> Result<()> {
    let forest = io::load_forest::<f64>(&a.forest)?;
    let data = io::load_training_set::<f64>(&a.training)?;
    let mode = match a.mode {
        Mode::Reevaluate => ContributionMode::Reevaluate,
        Mode::Retrain => ContributionMode::Retrain,
    };
    let w = variable_contribution(&forest, &data, a.seed, mode)?;
    let mut out = String::from("region,feature,weight\n");
    for (name, v) in forest.feature_names().iter().zip(&w) {
        out.push_str(&format!("{},{name},{v}\n", a.label));
        println!("{name:>20} {v:.4}");
    }
    std::fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn demand(a: DemandArgs) -> Result<()> {
    let (t0, t1) = load_epochs(&a.epochs)?;
    let mask = a.region.mask()?;
    let change = build_change_map(&apply_mask(&t0, &mask), &apply_mask(&t1, &mask))?;
    let m = MarkovDemand::<f64>::from_change_map(&change, a.horizon);
    let mut out = String::from("epoch,urban,non_urban,limited,demand\n");
    for (n, c) in m.projected_counts.iter().enumerate() {
        let d = if n == 0 {
            String::new()
        } else {
            m.epoch_demand(n).to_string()
        };
        out.push_str(&format!("{n},{},{},{},{d}\n", c[0], c[1], c[2]));
    }
    std::fs::write(&a.out, &out).with_context(|| format!("writing {}", a.out.display()))?;
    print!("{out}");
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (_, initial) = load_epoch(&a.initial, &a.reclass.into())?;
    let mask = a.region.mask()?;
    let initial = apply_mask(&initial, &mask);
    let forest = io::load_forest::<f64>(&a.forest)?;
    let (_, vars) = a.variables.load()?;
    let vars: Vec<Raster<f64>> = vars.iter().map(|v| apply_mask(v, &mask)).collect();
    let surface = DevelopmentSurface::from_forest(&forest, &vars, a.allow_limited)?;
    let cfg = landca::ca::SimulationConfig {
        p_threshold: a.p_threshold,
        alpha: a.alpha,
        window: a.window,
        max_iterations: a.max_iterations,
        min_expansion_rate: a.min_expansion_rate,
        min_new_cells_per_step: a.min_new_cells,
        demand_cells: a.demand,
        seed: a.seed,
        allow_limited_conversion: a.allow_limited,
    };
    let run = ca::run(&initial, &surface, &cfg)?;
    io::save_class_grid(&run.state.grid, &a.out)?;
    std::fs::write(&a.history, history_csv(&run.history))
        .with_context(|| format!("writing {}", a.history.display()))?;
    println!(
        "stopped after {} iterations ({}), {} cells converted",
        run.state.iteration, run.stop_reason, run.state.converted_total
    );
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let (t0, t1) = load_epochs(&a.epochs)?;
    let (_, sim) = load_epoch(&a.simulated, &a.simulated_reclass.into())?;
    let c = change_confusion(&t0, &t1, &sim)?;
    let f = |r: landca::Result<f64>| r.map(|v| v.to_string()).unwrap_or_default();
    let line = format!(
        "{},{},{},{},{},{},{}",
        a.label,
        f(c.fom()),
        f(producer_accuracy(&c)),
        f(user_accuracy(&c)),
        c.hits,
        c.misses,
        c.false_alarms
    );
    std::fs::write(
        &a.out,
        format!("region,fom,producer,user,hits,misses,false_alarms\n{line}\n"),
    )
    .with_context(|| format!("writing {}", a.out.display()))?;
    println!("{line}");
    Ok(())
}

fn run_pipeline(a: PipelineArgs) -> Result<ExitCode> {
    let mut overrides = a.overrides.clone();
    if let Some(w) = a.workers {
        overrides.push(format!("run.workers={w}"));
    }
    if let Some(s) = a.seed {
        overrides.push(format!("run.seed={s}"));
    }
    let mut cfg = PipelineConfig::load(&a.config, &overrides)?;
    if let Some(o) = a.output {
        cfg.run.output_dir = o;
    }
    let report = pipeline::run_pipeline(&cfg)?;
    for r in &report.regions {
        let fom = r
            .metrics
            .as_ref()
            .and_then(|m| m.fom)
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into());
        match &r.status {
            pipeline::LaneStatus::Ok => println!("region {}: FoM {fom}", r.region),
            pipeline::LaneStatus::Failed(e) => println!("region {}: FAILED {e}", r.region),
        }
    }
    if let Some(m) = report.national.as_ref().and_then(|m| m.fom) {
        println!("national: FoM {m:.4}");
    }
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn render_cmd(a: RenderArgs) -> Result<()> {
    match a.kind {
        RenderKind::Class => {
            let (_, grid) = load_epoch(&a.input, &a.reclass.into())?;
            render::render_classes(&grid, &a.out)?;
        }
        RenderKind::Ratio => {
            let r: Raster<f64> = io::load_ascii_grid(&a.input)?;
            render::render_ratios(&r, &a.out)?;
        }
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut p = SynthParams {
        size: a.size,
        seed: a.seed,
        ..SynthParams::default()
    };
    if a.size < 16 {
        bail!("--size must be at least 16");
    }
    if a.freeze_right {
        p.growth_rate[1] = 0.0;
    }
    let path = generate(&p)?.write(&a.out)?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    let result = match cli.command {
        Command::Cluster(a) => cluster(a).map(|_| ExitCode::SUCCESS),
        Command::Sample(a) => sample(a).map(|_| ExitCode::SUCCESS),
        Command::Train(a) => train(a).map(|_| ExitCode::SUCCESS),
        Command::Contribute(a) => contribute(a).map(|_| ExitCode::SUCCESS),
        Command::Demand(a) => demand(a).map(|_| ExitCode::SUCCESS),
        Command::Simulate(a) => simulate(a).map(|_| ExitCode::SUCCESS),
        Command::Validate(a) => validate(a).map(|_| ExitCode::SUCCESS),
        Command::Pipeline(a) => run_pipeline(a),
        Command::Render(a) => render_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Synth(a) => synth(a).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
