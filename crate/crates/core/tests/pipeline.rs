use std::path::{Path, PathBuf};

use landca::config::PipelineConfig;
use landca::io;
use landca::pipeline::{run_pipeline, LaneStatus};
use landca::raster::LandClass;
use landca::synth::{generate, SynthParams};
use landca::Raster;

fn world(dir: &Path, params: SynthParams) -> PathBuf {
    generate(&params).unwrap().write(dir).unwrap()
}

fn small() -> SynthParams {
    SynthParams {
        size: 96,
        ..SynthParams::default()
    }
}

fn quick(extra: &[&str]) -> Vec<String> {
    let mut o = vec![
        "simulation.repetitions=3".to_string(),
        "forest.trees=30".to_string(),
    ];
    o.extend(extra.iter().map(|s| s.to_string()));
    o
}

#[test]
fn two_region_world_reports_each_region() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(world(dir.path(), small()), &quick(&[])).unwrap();
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.exit_code(), 0);
    assert_eq!(report.regions.len(), 2);
    for r in &report.regions {
        assert_eq!(r.status, LaneStatus::Ok);
        assert!(
            r.metrics.as_ref().unwrap().fom.is_some(),
            "region {} has no FoM",
            r.region
        );
        let total: f64 = r.contribution.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(r.contribution.len(), 4);
        assert_eq!(r.stop_reasons.len(), 3);
    }
    let nat = report.national.as_ref().unwrap();
    assert_eq!(nat.repetitions, 3);
    assert!(nat.fom_std.is_some() && nat.producer_std.is_some() && nat.user_std.is_some());

    let metrics = std::fs::read_to_string(cfg.run.output_dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert!(lines[0].starts_with("region,fom,producer,user,hits,misses,false_alarms"));
    assert!(lines[0].contains("fom_std"));
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("national,"));
}

#[test]
fn every_csv_declares_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::load(world(dir.path(), small()), &quick(&[])).unwrap();
    let report = run_pipeline(&cfg).unwrap();
    let csvs: Vec<&String> = report
        .outputs
        .iter()
        .filter(|o| o.ends_with(".csv"))
        .collect();
    assert!(csvs.len() >= 8);
    for rel in csvs {
        let text = std::fs::read_to_string(cfg.run.output_dir.join(rel)).unwrap();
        let header = text.lines().next().unwrap();
        assert!(
            header
                .split(',')
                .all(|h| h.parse::<f64>().is_err() && !h.is_empty()),
            "{rel} header `{header}`"
        );
    }
    let farm = std::fs::read_to_string(cfg.run.output_dir.join("farmland_series.csv")).unwrap();
    assert!(farm.starts_with("epoch,sim_area,actual_area\n"));
    let contrib = std::fs::read_to_string(cfg.run.output_dir.join("contribution.csv")).unwrap();
    assert!(contrib.starts_with("region,feature,weight\n"));
}

#[test]
fn region_without_demand_keeps_t0() {
    let dir = tempfile::tempdir().unwrap();
    let params = SynthParams {
        growth_rate: [0.9, 0.0],
        ..small()
    };
    let cfg = PipelineConfig::load(world(dir.path(), params), &quick(&[])).unwrap();
    let report = run_pipeline(&cfg).unwrap();
    let frozen = &report.regions[1];
    assert_eq!(frozen.status, LaneStatus::Ok);
    assert_eq!(frozen.observed_demand, 0);
    assert!(frozen.stop_reasons.iter().all(|s| s == "demand-met"));

    let t0 = io::load_ascii_grid::<f64>(dir.path().join("t0.asc")).unwrap();
    let (t0, _) =
        landca::raster::reclassify(&t0, &landca::raster::ReclassTable::eleven_class()).unwrap();
    let sim = io::load_class_grid(cfg.run.output_dir.join("simulated_t1.asc")).unwrap();
    let units: Raster<f64> = io::load_ascii_grid(dir.path().join("units.asc")).unwrap();
    let region_units: Vec<f64> = frozen.units.iter().map(|u| u.parse().unwrap()).collect();
    let mut checked = 0;
    for i in 0..t0.len() {
        if region_units.contains(&units.values()[i]) {
            assert_eq!(sim.values()[i], t0.values()[i], "cell {i}");
            checked += 1;
        }
    }
    assert_eq!(checked, 96 * 48);
    // the growing region did change
    assert!(sim.values().iter().zip(t0.values()).any(|(a, b)| a != b));
}

#[test]
fn failed_lane_does_not_stop_other_regions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = world(dir.path(), small());
    // wipe every spatial variable over the right half
    for name in ["road_dist", "city_dist", "slope", "noise"] {
        let p = dir.path().join(format!("{name}.asc"));
        let mut r: Raster<f64> = io::load_ascii_grid(&p).unwrap();
        let nodata = r.nodata();
        for row in 0..96 {
            for col in 48..96 {
                r.set(row, col, nodata);
            }
        }
        io::save_ascii_grid(&r, &p).unwrap();
    }
    let cfg = PipelineConfig::load(&cfg_path, &quick(&[])).unwrap();
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.exit_code(), 1);
    assert_eq!(report.regions[0].status, LaneStatus::Ok);
    assert!(matches!(report.regions[1].status, LaneStatus::Failed(_)));
    assert_eq!(report.failed_regions(), vec![2]);
    assert!(report.national.as_ref().unwrap().fom.is_some());
    assert!(cfg.run.output_dir.join("region_1/forest.bin").exists());
    assert!(!cfg.run.output_dir.join("region_2/forest.bin").exists());
    let metrics = std::fs::read_to_string(cfg.run.output_dir.join("metrics.csv")).unwrap();
    assert!(metrics.lines().any(|l| l == "2,,,,,,,,,,,,,0"));
}

#[test]
fn missing_input_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = world(dir.path(), small());
    std::fs::remove_file(dir.path().join("adjacency.csv")).unwrap();
    let cfg = PipelineConfig::load(&cfg_path, &quick(&[])).unwrap();
    assert!(run_pipeline(&cfg).is_err());
}

#[test]
fn saved_forest_reproduces_development_surface() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        PipelineConfig::load(world(dir.path(), small()), &quick(&["run.render=false"])).unwrap();
    run_pipeline(&cfg).unwrap();
    let forest = io::load_forest::<f64>(cfg.run.output_dir.join("region_1/forest.bin")).unwrap();
    let training =
        io::load_training_set::<f64>(cfg.run.output_dir.join("region_1/training.csv")).unwrap();
    assert_eq!(forest.n_train_rows(), training.len());
    assert!(forest.oob_error(&training).unwrap().error < 0.5);
    assert!(!cfg.run.output_dir.join("simulated_t1.ppm").exists());
    let pg: Raster<f64> =
        io::load_ascii_grid(cfg.run.output_dir.join("development_probability.asc")).unwrap();
    let sim = io::load_class_grid(cfg.run.output_dir.join("simulated_t1.asc")).unwrap();
    assert_eq!(pg.len(), sim.len());
    assert!(pg
        .values()
        .iter()
        .all(|&v| v == -1.0 || (0.0..=1.0).contains(&v)));
    assert!(sim.values().contains(&LandClass::Urban));
}
