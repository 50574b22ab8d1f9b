//! End-to-end batch run: regionalize, then one lane per region (sample,
//! train, contribution, demand, repeated simulation, baseline), then
//! validation, mosaicking and output files.
//!
//! Lanes run on a dedicated thread pool. Every random draw comes from a
//! substream keyed by the run seed and the region, so the worker count does
//! not change any output byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::ca::{self, DevelopmentSurface, MarkovDemand, StepRecord};
use crate::config::{PipelineConfig, ReclassScheme};
use crate::error::{Error, Result};
use crate::forest::{variable_contribution, Forest};
use crate::io;
use crate::raster::{
    flag_codes, normalize_sigma, reclassify, source_codes, ClassCounts, ConversionType, LandClass,
    NormalizationStats, Raster, ReclassTable,
};
use crate::region::{partition, AdjacencyGraph, IndexTable, RegionPartition};
use crate::render;
use crate::rng::{domain, mix};
use crate::sample::{build_change_map, stratified_sample, SamplingPolicy, TrainingSet};
use crate::validation::{
    change_confusion, farmland_series, producer_accuracy, series_fit, user_accuracy,
    ChangeConfusion,
};

/// Square meters per million square kilometers.
const MKM2: f64 = 1e12;

/// Everything read from disk, with variables already normalized.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub t0: Raster<LandClass>,
    pub t1: Raster<LandClass>,
    pub variable_names: Vec<String>,
    pub variables: Vec<Raster<f64>>,
    pub normalization: Vec<(String, NormalizationStats<f64>)>,
    pub units: Raster<f64>,
    pub farmland: Option<Raster<f64>>,
    pub index_table: IndexTable<f64>,
    pub adjacency: AdjacencyGraph,
}

pub fn reclass_table(scheme: &ReclassScheme) -> ReclassTable {
    match scheme {
        ReclassScheme::Identity => ReclassTable::identity(),
        ReclassScheme::ElevenClass => ReclassTable::eleven_class(),
    }
}

/// Load an epoch raster and map it to land classes.
pub fn load_epoch(path: &Path, scheme: &ReclassScheme) -> Result<(Raster<f64>, Raster<LandClass>)> {
    let raw: Raster<f64> = io::load_ascii_grid(path)?;
    let (grid, _) = reclassify(&raw, &reclass_table(scheme)).map_err(|e| match e {
        Error::UnmappedCode { code, cell } => Error::InvalidInput(format!(
            "{}: unmapped source code {code} at cell {cell}",
            path.display()
        )),
        e => e,
    })?;
    Ok((raw, grid))
}

/// Load and sigma-normalize every spatial variable.
pub fn load_variables(
    paths: &[PathBuf],
    names: &[String],
) -> Result<(Vec<Raster<f64>>, Vec<(String, NormalizationStats<f64>)>)> {
    let mut vars = Vec::with_capacity(paths.len());
    let mut stats = Vec::with_capacity(paths.len());
    for (p, name) in paths.iter().zip(names) {
        let raw: Raster<f64> = io::load_ascii_grid(p)?;
        let (norm, s) = normalize_sigma(&raw)
            .map_err(|e| Error::InvalidInput(format!("variable `{name}`: {e}")))?;
        vars.push(norm);
        stats.push((name.clone(), s));
    }
    Ok((vars, stats))
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let i = &cfg.inputs;
    let (raw_t0, t0) = load_epoch(&i.epoch_t0, &i.reclass)?;
    let (_, t1) = load_epoch(&i.epoch_t1, &i.reclass)?;
    t0.ensure_aligned(&t1)?;
    let variable_names = cfg.variable_names();
    let (variables, normalization) = load_variables(&i.variables, &variable_names)?;
    for v in &variables {
        t0.ensure_aligned(v)?;
    }
    let units: Raster<f64> = io::load_ascii_grid(&i.unit_raster)?;
    t0.ensure_aligned(&units)?;
    let farmland = match (&i.farmland_flag, &i.reclass) {
        (Some(p), _) => {
            let f: Raster<f64> = io::load_ascii_grid(p)?;
            t0.ensure_aligned(&f)?;
            Some(f)
        }
        (None, ReclassScheme::ElevenClass) => Some(flag_codes(&raw_t0, &[source_codes::FARMLAND])),
        (None, ReclassScheme::Identity) => None,
    };
    Ok(Inputs {
        t0,
        t1,
        variable_names,
        variables,
        normalization,
        units,
        farmland,
        index_table: io::load_index_table(&i.index_table)?,
        adjacency: io::load_adjacency(&i.adjacency)?,
    })
}

/// Unit id string for a unit-raster value. Integral values print without a
/// decimal point so they match ids such as `"17"` in the CSV tables.
pub fn unit_key(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        v.to_string()
    }
}

/// Region label (1-based) per cell, or 0 outside every region.
pub fn region_cells(units: &Raster<f64>, part: &RegionPartition) -> Vec<usize> {
    let lookup: BTreeMap<&str, usize> = part
        .unit_ids
        .iter()
        .map(String::as_str)
        .zip(part.region_of.iter().copied())
        .collect();
    let mut missing = 0usize;
    let out = units
        .values()
        .iter()
        .map(|&v| {
            if v == units.nodata() {
                return 0;
            }
            match lookup.get(unit_key(v).as_str()) {
                Some(&r) => r,
                None => {
                    missing += 1;
                    0
                }
            }
        })
        .collect();
    if missing > 0 {
        log::warn!("{missing} cells carry unit ids absent from the index table; they are excluded");
    }
    out
}

fn mask_classes(grid: &Raster<LandClass>, region_of: &[usize], region: usize) -> Raster<LandClass> {
    let mut out = grid.clone();
    for (v, &r) in out.values_mut().iter_mut().zip(region_of) {
        if r != region {
            *v = LandClass::NoData;
        }
    }
    out
}

fn mask_values(raster: &Raster<f64>, region_of: &[usize], region: usize) -> Raster<f64> {
    let nodata = raster.nodata();
    let mut out = raster.clone();
    for (v, &r) in out.values_mut().iter_mut().zip(region_of) {
        if r != region {
            *v = nodata;
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricSummary {
    pub fom: Option<f64>,
    pub fom_std: Option<f64>,
    pub producer: Option<f64>,
    pub producer_std: Option<f64>,
    pub user: Option<f64>,
    pub user_std: Option<f64>,
    pub hits: f64,
    pub misses: f64,
    pub false_alarms: f64,
    pub correct_rejections: f64,
    pub baseline_fom: Option<f64>,
    pub baseline_fom_std: Option<f64>,
    pub repetitions: usize,
}

/// Mean and population std of the defined values.
fn mean_std(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

impl MetricSummary {
    pub fn from_runs(sim: &[ChangeConfusion], baseline: &[ChangeConfusion]) -> Self {
        let foms: Vec<Option<f64>> = sim.iter().map(|c| c.fom::<f64>().ok()).collect();
        let prod: Vec<Option<f64>> = sim
            .iter()
            .map(|c| producer_accuracy::<f64>(c).ok())
            .collect();
        let user: Vec<Option<f64>> = sim.iter().map(|c| user_accuracy::<f64>(c).ok()).collect();
        let base: Vec<Option<f64>> = baseline.iter().map(|c| c.fom::<f64>().ok()).collect();
        let n = sim.len().max(1) as f64;
        let avg = |f: fn(&ChangeConfusion) -> u64| sim.iter().map(|c| f(c) as f64).sum::<f64>() / n;
        let (fom, fom_std) = mean_std(&foms);
        let (producer, producer_std) = mean_std(&prod);
        let (user, user_std) = mean_std(&user);
        let (baseline_fom, baseline_fom_std) = mean_std(&base);
        MetricSummary {
            fom,
            fom_std,
            producer,
            producer_std,
            user,
            user_std,
            hits: avg(|c| c.hits),
            misses: avg(|c| c.misses),
            false_alarms: avg(|c| c.false_alarms),
            correct_rejections: avg(|c| c.correct_rejections),
            baseline_fom,
            baseline_fom_std,
            repetitions: sim.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureWeight {
    pub feature: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionReport {
    pub region: usize,
    pub units: Vec<String>,
    pub status: LaneStatus,
    pub cells: usize,
    pub training_rows: usize,
    pub sample_truncated: bool,
    pub oob_error: Option<f64>,
    pub contribution: Vec<FeatureWeight>,
    /// New urban cells observed between t0 and t1.
    pub observed_demand: usize,
    /// Markov demand per projected epoch.
    pub projected_demand: Vec<usize>,
    /// Stop reason of each validation repetition.
    pub stop_reasons: Vec<String>,
    pub iterations: Vec<usize>,
    pub metrics: Option<MetricSummary>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "state", content = "error", rename_all = "lowercase")]
pub enum LaneStatus {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FarmlandReport {
    pub sim_area: Vec<f64>,
    pub actual_area: Vec<Option<f64>>,
    /// Fit over epochs with observations, areas in million km².
    pub std_dev_mkm2: Option<f64>,
    pub r_squared: Option<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub regions: Vec<RegionReport>,
    pub n_clusters: usize,
    pub explained_variance: f64,
    pub national: Option<MetricSummary>,
    pub farmland: Option<FarmlandReport>,
    pub outputs: Vec<String>,
}

impl RunReport {
    pub fn failed_regions(&self) -> Vec<usize> {
        self.regions
            .iter()
            .filter(|r| r.status != LaneStatus::Ok)
            .map(|r| r.region)
            .collect()
    }

    /// 0 when every lane succeeded, 1 when some failed, 2 when none succeeded.
    pub fn exit_code(&self) -> i32 {
        let failed = self.failed_regions().len();
        if failed == 0 {
            0
        } else if failed < self.regions.len() {
            1
        } else {
            2
        }
    }
}

/// Products of one successful region lane.
struct LaneOutput {
    training: TrainingSet<f64>,
    forest: Forest<f64>,
    surface: DevelopmentSurface<f64>,
    /// Validation end state per repetition.
    simulated: Vec<Raster<LandClass>>,
    history: Vec<StepRecord>,
    confusions: Vec<ChangeConfusion>,
    baseline: Vec<ChangeConfusion>,
    /// Projected grids for epochs 1..=horizon, starting from observed t1.
    projected: Vec<Raster<LandClass>>,
}

struct Lane<'a> {
    cfg: &'a PipelineConfig,
    inputs: &'a Inputs,
    region_of: &'a [usize],
}

impl Lane<'_> {
    fn run(&self, region: usize, report: &mut RegionReport) -> Result<LaneOutput> {
        let cfg = self.cfg;
        let seed = cfg.run.seed;
        let key = |tag: u64| mix(seed, &[domain::REGION, region as u64, tag]);
        let t0 = mask_classes(&self.inputs.t0, self.region_of, region);
        let t1 = mask_classes(&self.inputs.t1, self.region_of, region);
        let vars: Vec<Raster<f64>> = self
            .inputs
            .variables
            .iter()
            .map(|v| mask_values(v, self.region_of, region))
            .collect();
        report.cells = self.region_of.iter().filter(|&&r| r == region).count();

        let change = build_change_map(&t0, &t1)?;
        let sample = stratified_sample(
            &change,
            &vars,
            &self.inputs.variable_names,
            &SamplingPolicy {
                n_total: cfg.sampling.n_total,
                phi: cfg.sampling.phi,
                seed: key(domain::SAMPLE_ROW),
            },
        )?;
        report.training_rows = sample.set.len();
        report.sample_truncated = sample.truncated;

        let forest = Forest::train(&sample.set, &cfg.forest.params(key(domain::TREE)))?;
        report.oob_error = forest.oob_error(&sample.set).ok().map(|o| o.error);
        let weights =
            variable_contribution(&forest, &sample.set, key(domain::NOISE), cfg.forest.mode()?)?;
        report.contribution = self
            .inputs
            .variable_names
            .iter()
            .zip(weights)
            .map(|(f, w)| FeatureWeight {
                feature: f.clone(),
                weight: w,
            })
            .collect();

        let allow_limited = cfg.simulation.allow_limited_conversion;
        let surface = DevelopmentSurface::from_forest(&forest, &vars, allow_limited)?;
        let mut demand =
            change.class_counts[ConversionType::NON_URBAN_TO_URBAN.code() as usize - 1];
        if allow_limited {
            demand += change.class_counts[ConversionType::LIMITED_TO_URBAN.code() as usize - 1];
        }
        report.observed_demand = demand;

        let mut simulated = Vec::new();
        let mut confusions = Vec::new();
        let mut baseline = Vec::new();
        let mut history = Vec::new();
        for rep in 0..cfg.simulation.repetitions {
            let rep_seed = mix(
                seed,
                &[
                    domain::REGION,
                    region as u64,
                    domain::REPETITION,
                    rep as u64,
                ],
            );
            let sim = ca::run(&t0, &surface, &cfg.simulation.config(demand, rep_seed))?;
            report.stop_reasons.push(sim.stop_reason.to_string());
            report.iterations.push(sim.state.iteration);
            confusions.push(change_confusion(&t0, &t1, &sim.state.grid)?);
            let null = ca::random_allocation(&t0, demand, allow_limited, rep_seed);
            baseline.push(change_confusion(&t0, &t1, &null)?);
            if rep == 0 {
                history = sim.history;
            }
            simulated.push(sim.state.grid);
        }
        report.metrics = Some(MetricSummary::from_runs(&confusions, &baseline));

        let markov = MarkovDemand::<f64>::from_change_map(&change, cfg.simulation.horizon);
        let mut projected = Vec::with_capacity(cfg.simulation.horizon);
        let mut grid = t1.clone();
        for epoch in 1..=cfg.simulation.horizon {
            let d = markov.epoch_demand(epoch);
            report.projected_demand.push(d);
            let s = mix(
                seed,
                &[domain::REGION, region as u64, domain::EPOCH, epoch as u64],
            );
            grid = ca::run(&grid, &surface, &cfg.simulation.config(d, s))?
                .state
                .grid;
            projected.push(grid.clone());
        }

        Ok(LaneOutput {
            training: sample.set,
            forest,
            surface,
            simulated,
            history,
            confusions,
            baseline,
            projected,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

const METRICS_HEADER: &str = "region,fom,producer,user,hits,misses,false_alarms,correct_rejections,fom_std,producer_std,user_std,baseline_fom,baseline_fom_std,repetitions";

fn metrics_line(out: &mut String, label: &str, m: Option<&MetricSummary>) {
    match m {
        Some(m) => {
            let _ = writeln!(
                out,
                "{label},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                opt(m.fom),
                opt(m.producer),
                opt(m.user),
                m.hits,
                m.misses,
                m.false_alarms,
                m.correct_rejections,
                opt(m.fom_std),
                opt(m.producer_std),
                opt(m.user_std),
                opt(m.baseline_fom),
                opt(m.baseline_fom_std),
                m.repetitions
            );
        }
        None => {
            let _ = writeln!(out, "{label},,,,,,,,,,,,,0");
        }
    }
}

pub fn history_csv(history: &[StepRecord]) -> String {
    let mut s =
        String::from("iteration,urban_count,new_cells,candidates,converted_total,expansion_rate\n");
    for h in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            h.iteration,
            h.urban_count,
            h.new_cells,
            h.candidates,
            h.converted_total,
            opt(h.expansion_rate)
        );
    }
    s
}

pub fn partition_csv(part: &RegionPartition) -> String {
    let mut s = String::from("unit_id,cluster,region\n");
    for ((u, c), r) in part
        .unit_ids
        .iter()
        .zip(&part.cluster_of)
        .zip(&part.region_of)
    {
        let _ = writeln!(s, "{u},{c},{r}");
    }
    s
}

/// Run the full pipeline and write every output under `cfg.run.output_dir`.
///
/// Errors are fatal (unreadable inputs, clustering failure, unwritable
/// output). Failures inside a region lane are recorded in the report and
/// the other lanes proceed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    run_with_inputs(cfg, &inputs)
}

pub fn run_with_inputs(cfg: &PipelineConfig, inputs: &Inputs) -> Result<RunReport> {
    let out_dir = &cfg.run.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let part = partition(&inputs.index_table, &inputs.adjacency, cfg.cluster.k)?;
    let region_of = region_cells(&inputs.units, &part);
    let n_regions = part.n_regions();
    log::info!("{} clusters, {} regions", part.n_clusters(), n_regions);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let lane = Lane {
        cfg,
        inputs,
        region_of: &region_of,
    };
    let results: Vec<(RegionReport, Option<LaneOutput>)> = pool.install(|| {
        (1..=n_regions)
            .into_par_iter()
            .map(|region| {
                let mut report = RegionReport {
                    region,
                    units: part
                        .units_in_region(region)
                        .into_iter()
                        .map(String::from)
                        .collect(),
                    status: LaneStatus::Ok,
                    cells: 0,
                    training_rows: 0,
                    sample_truncated: false,
                    oob_error: None,
                    contribution: Vec::new(),
                    observed_demand: 0,
                    projected_demand: Vec::new(),
                    stop_reasons: Vec::new(),
                    iterations: Vec::new(),
                    metrics: None,
                };
                let outcome = catch_unwind(AssertUnwindSafe(|| lane.run(region, &mut report)));
                let output = match outcome {
                    Ok(Ok(o)) => Some(o),
                    Ok(Err(e)) => {
                        log::error!("region {region} failed: {e}");
                        report.status = LaneStatus::Failed(e.to_string());
                        None
                    }
                    Err(_) => {
                        log::error!("region {region} panicked");
                        report.status = LaneStatus::Failed("lane panicked".into());
                        None
                    }
                };
                if output.is_none() {
                    report.metrics = None;
                }
                (report, output)
            })
            .collect()
    });

    let mut outputs: Vec<String> = Vec::new();
    let mut record =
        |p: &Path| outputs.push(p.strip_prefix(out_dir).unwrap_or(p).display().to_string());

    let p = out_dir.join("partition.csv");
    write_text(&p, &partition_csv(&part))?;
    record(&p);
    let p = out_dir.join("normalization.csv");
    io::save_normalization(&inputs.normalization, &p)?;
    record(&p);

    // per-region files
    for (report, output) in &results {
        let Some(o) = output else { continue };
        let dir = out_dir.join(format!("region_{}", report.region));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let p = dir.join("training.csv");
        io::save_training_set(&o.training, &p)?;
        record(&p);
        let p = dir.join("forest.bin");
        io::save_forest(&o.forest, &p)?;
        record(&p);
        let p = dir.join("history.csv");
        write_text(&p, &history_csv(&o.history))?;
        record(&p);
    }

    // national aggregation: merge regions per repetition
    let ok: Vec<&LaneOutput> = results.iter().filter_map(|(_, o)| o.as_ref()).collect();
    let national = (!ok.is_empty()).then(|| {
        let reps = cfg.simulation.repetitions;
        let merge = |f: fn(&LaneOutput) -> &Vec<ChangeConfusion>| -> Vec<ChangeConfusion> {
            (0..reps)
                .map(|k| {
                    ok.iter()
                        .fold(ChangeConfusion::default(), |acc, o| acc.merge(&f(o)[k]))
                })
                .collect()
        };
        MetricSummary::from_runs(&merge(|o| &o.confusions), &merge(|o| &o.baseline))
    });

    let mut metrics = String::from(METRICS_HEADER);
    metrics.push('\n');
    for (report, _) in &results {
        metrics_line(
            &mut metrics,
            &report.region.to_string(),
            report.metrics.as_ref(),
        );
    }
    metrics_line(&mut metrics, "national", national.as_ref());
    let p = out_dir.join("metrics.csv");
    write_text(&p, &metrics)?;
    record(&p);

    let mut contrib = String::from("region,feature,weight\n");
    for (report, _) in &results {
        for fw in &report.contribution {
            let _ = writeln!(contrib, "{},{},{}", report.region, fw.feature, fw.weight);
        }
    }
    let p = out_dir.join("contribution.csv");
    write_text(&p, &contrib)?;
    record(&p);

    // mosaics: failed regions keep their observed state
    let overlay = |base: &Raster<LandClass>, pick: &dyn Fn(&LaneOutput) -> &Raster<LandClass>| {
        let mut grid = base.clone();
        for (report, output) in &results {
            let Some(o) = output else { continue };
            let src = pick(o);
            for (cell, v) in grid.values_mut().iter_mut().enumerate() {
                if region_of[cell] == report.region {
                    *v = src.values()[cell];
                }
            }
        }
        grid
    };
    let sim_t1 = overlay(&inputs.t0, &|o| &o.simulated[0]);
    let projected: Vec<Raster<LandClass>> = (0..cfg.simulation.horizon)
        .map(|e| overlay(&inputs.t1, &|o| &o.projected[e]))
        .collect();
    let mut pg = Raster::filled(*inputs.t0.geometry(), -1.0, -1.0);
    for (report, output) in &results {
        let Some(o) = output else { continue };
        for (cell, v) in pg.values_mut().iter_mut().enumerate() {
            if region_of[cell] == report.region {
                *v = o.surface.get(LandClass::NonUrban, cell, false);
            }
        }
    }

    let mut grids: Vec<(String, &Raster<LandClass>)> = vec![("simulated_t1".into(), &sim_t1)];
    for (e, g) in projected.iter().enumerate() {
        grids.push((format!("projected_epoch_{}", e + 1), g));
    }
    for (name, g) in &grids {
        let p = out_dir.join(format!("{name}.asc"));
        io::save_class_grid(g, &p)?;
        record(&p);
    }
    let p = out_dir.join("development_probability.asc");
    io::save_ascii_grid(&pg, &p)?;
    record(&p);
    if cfg.run.render {
        grids.push(("observed_t0".into(), &inputs.t0));
        grids.push(("observed_t1".into(), &inputs.t1));
        for (name, g) in &grids {
            let p = out_dir.join(format!("{name}.ppm"));
            render::render_classes(g, &p)?;
            record(&p);
        }
        let p = out_dir.join("development_probability.ppm");
        render::render_ratios(&pg, &p)?;
        record(&p);
    }

    let farmland = match &inputs.farmland {
        Some(flag) => {
            let mut trajectory = vec![inputs.t0.clone(), sim_t1.clone()];
            trajectory.extend(projected.iter().cloned());
            let sim = farmland_series(&trajectory, Some(flag))?;
            let actual = farmland_series(&[inputs.t0.clone(), inputs.t1.clone()], Some(flag))?;
            let mut csv = String::from("epoch,sim_area,actual_area\n");
            let mut actual_col = Vec::new();
            for (e, a) in sim.areas.iter().enumerate() {
                let obs = actual.areas.get(e).copied();
                actual_col.push(obs);
                let _ = writeln!(csv, "{e},{a},{}", opt(obs));
            }
            let p = out_dir.join("farmland_series.csv");
            write_text(&p, &csv)?;
            record(&p);
            let scaled = |v: &[f64]| v.iter().map(|a| a / MKM2).collect::<Vec<f64>>();
            let fit = series_fit(&scaled(&sim.areas[..2]), &scaled(&actual.areas));
            let (std_dev_mkm2, r_squared, note) = match fit {
                Ok(f) => (Some(f.std_dev), Some(f.r_squared), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            Some(FarmlandReport {
                sim_area: sim.areas,
                actual_area: actual_col,
                std_dev_mkm2,
                r_squared,
                note,
            })
        }
        None => {
            log::warn!("no farmland flag raster; farmland series skipped");
            None
        }
    };

    let regions: Vec<RegionReport> = results.into_iter().map(|(r, _)| r).collect();
    outputs.push("report.json".into());
    let report = RunReport {
        regions,
        n_clusters: part.n_clusters(),
        explained_variance: part.explained_variance,
        national,
        farmland,
        outputs,
    };
    let p = out_dir.join("report.json");
    write_text(&p, &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Observed class counts, used by the stage-level CLI commands.
pub fn class_counts(grid: &Raster<LandClass>) -> ClassCounts {
    ClassCounts::of(grid)
}
