//! Synthetic two-region world with a planted growth rule.
//!
//! The square grid is split into four administrative units (quadrants). The
//! left pair and the right pair share socio-economic profiles, so clustering
//! with `k = 2` yields two contiguous regions. Urban land grows between t0
//! and t1 next to existing urban cells, with a strong pull toward roads.
//! Epoch rasters use the eleven source categories so the farmland flag is
//! derived at ingestion.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::config::{
    ClusterConfig, ForestConfig, InputsConfig, PipelineConfig, ReclassScheme, RunConfig,
    SamplingConfig, SimulationSection,
};
use crate::error::Result;
use crate::io;
use crate::raster::{source_codes, GridGeometry, Raster};
use crate::region::{AdjacencyGraph, IndexTable};
use crate::rng::{domain, substream};

pub const NODATA: f64 = -9999.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub size: usize,
    pub cellsize: f64,
    pub seed: u64,
    /// Per-substep conversion scale for the left and right regions; 0 freezes a region.
    pub growth_rate: [f64; 2],
    pub growth_steps: usize,
    pub cities_per_region: usize,
    /// Road attraction length in meters.
    pub road_scale: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            size: 256,
            cellsize: 30.0,
            seed: 7,
            growth_rate: [0.9, 0.6],
            growth_steps: 8,
            cities_per_region: 4,
            road_scale: 60.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthWorld {
    /// Source category codes.
    pub t0: Raster<f64>,
    pub t1: Raster<f64>,
    pub variables: Vec<(String, Raster<f64>)>,
    pub units: Raster<f64>,
    pub index_table: IndexTable<f64>,
    pub adjacency: AdjacencyGraph,
}

/// Two-pass chamfer distance (in cells) to the nearest `true` cell.
fn distance_transform(mask: &[bool], ncols: usize, nrows: usize) -> Vec<f64> {
    let diag = std::f64::consts::SQRT_2;
    let mut d: Vec<f64> = mask
        .iter()
        .map(|&m| if m { 0.0 } else { f64::INFINITY })
        .collect();
    let at = |r: usize, c: usize| r * ncols + c;
    for r in 0..nrows {
        for c in 0..ncols {
            let mut v = d[at(r, c)];
            if c > 0 {
                v = v.min(d[at(r, c - 1)] + 1.0);
            }
            if r > 0 {
                v = v.min(d[at(r - 1, c)] + 1.0);
                if c > 0 {
                    v = v.min(d[at(r - 1, c - 1)] + diag);
                }
                if c + 1 < ncols {
                    v = v.min(d[at(r - 1, c + 1)] + diag);
                }
            }
            d[at(r, c)] = v;
        }
    }
    for r in (0..nrows).rev() {
        for c in (0..ncols).rev() {
            let mut v = d[at(r, c)];
            if c + 1 < ncols {
                v = v.min(d[at(r, c + 1)] + 1.0);
            }
            if r + 1 < nrows {
                v = v.min(d[at(r + 1, c)] + 1.0);
                if c + 1 < ncols {
                    v = v.min(d[at(r + 1, c + 1)] + diag);
                }
                if c > 0 {
                    v = v.min(d[at(r + 1, c - 1)] + diag);
                }
            }
            d[at(r, c)] = v;
        }
    }
    d
}

pub fn generate(p: &SynthParams) -> Result<SynthWorld> {
    let n = p.size;
    assert!(n >= 16, "synthetic world needs at least 16×16 cells");
    let geom = GridGeometry {
        ncols: n,
        nrows: n,
        origin_x: 500_000.0,
        origin_y: 4_000_000.0,
        cellsize: p.cellsize,
    };
    let len = n * n;
    let half = n / 2;
    let nf = n as f64;
    let at = |r: usize, c: usize| r * n + c;

    let mut roads = vec![false; len];
    for i in 0..n {
        for &frac in &[0.3, 0.7] {
            let k = (frac * nf) as usize;
            roads[at(k, i)] = true;
            roads[at(i, (frac * nf * 0.85) as usize)] = true;
        }
        // a diagonal highway
        roads[at(i, (i * 3 / 4 + n / 8).min(n - 1))] = true;
    }
    let road_dist: Vec<f64> = distance_transform(&roads, n, n)
        .into_iter()
        .map(|d| d * p.cellsize)
        .collect();

    // cities on road cells, spread across both halves
    let mut rng = substream(p.seed, &[domain::SYNTH, 0]);
    let road_cells: Vec<usize> = (0..len).filter(|&i| roads[i]).collect();
    let mut cities: Vec<(usize, usize, f64)> = Vec::new();
    for side in 0..2 {
        let on_side: Vec<usize> = road_cells
            .iter()
            .copied()
            .filter(|&i| {
                let c = i % n;
                let margin = n / 16;
                (c / half == side)
                    && c >= margin
                    && c + margin < n
                    && i / n >= margin
                    && i / n + margin < n
            })
            .collect();
        for _ in 0..p.cities_per_region {
            let i = on_side[rng.random_range(0..on_side.len())];
            let radius = rng.random_range(2.0..(nf / 40.0).max(3.0));
            cities.push((i / n, i % n, radius));
        }
    }
    let city_dist: Vec<f64> = (0..len)
        .map(|i| {
            let (r, c) = ((i / n) as f64, (i % n) as f64);
            cities
                .iter()
                .map(|&(cr, cc, _)| ((r - cr as f64).powi(2) + (c - cc as f64).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
                * p.cellsize
        })
        .collect();

    let phases: Vec<f64> = (0..4)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let slope: Vec<f64> = (0..len)
        .map(|i| {
            let (r, c) = ((i / n) as f64 / nf, (i % n) as f64 / nf);
            let s = (5.0 * r + phases[0]).sin()
                + (7.0 * c + phases[1]).sin()
                + 0.5 * (13.0 * (r + c) + phases[2]).sin();
            (s + 2.5) * 6.0
        })
        .collect();
    let noise: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();

    // water: a winding river and a lake
    let lake = (
        rng.random_range(n / 4..3 * n / 4) as f64,
        rng.random_range(n / 8..n / 3) as f64,
        nf / 20.0,
    );
    let is_water = |r: usize, c: usize| {
        let (rf, cf) = (r as f64, c as f64);
        let river = nf * 0.55 + nf / 12.0 * (rf / nf * 9.0).sin();
        (cf - river).abs() < 1.5 || ((rf - lake.0).powi(2) + (cf - lake.1).powi(2)).sqrt() < lake.2
    };

    let mut t0 = vec![0.0; len];
    for r in 0..n {
        for c in 0..n {
            let i = at(r, c);
            let urban = cities.iter().any(|&(cr, cc, rad)| {
                let d = ((r as f64 - cr as f64).powi(2) + (c as f64 - cc as f64).powi(2)).sqrt();
                d <= rad || (roads[i] && d <= rad * 2.0)
            });
            t0[i] = if urban {
                source_codes::ARTIFICIAL_SURFACE as f64
            } else if is_water(r, c) {
                source_codes::WATERBODY as f64
            } else if slope[i] < 16.0 {
                source_codes::FARMLAND as f64
            } else if slope[i] < 22.0 {
                source_codes::GRASSLAND as f64
            } else {
                source_codes::FOREST as f64
            };
        }
    }

    // planted rule: growth needs urban neighbours and is pulled toward roads
    let is_urban = |v: f64| v == source_codes::ARTIFICIAL_SURFACE as f64;
    let convertible = |v: f64| {
        v == source_codes::FARMLAND as f64
            || v == source_codes::GRASSLAND as f64
            || v == source_codes::FOREST as f64
    };
    let mut t1 = t0.clone();
    for step in 0..p.growth_steps {
        let prev = t1.clone();
        let mut srng = substream(p.seed, &[domain::SYNTH, 1 + step as u64]);
        for r in 0..n {
            for c in 0..n {
                let i = at(r, c);
                let u: f64 = srng.random();
                if !convertible(prev[i]) {
                    continue;
                }
                let mut nu = 0;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        if (dr, dc) != (0, 0)
                            && rr >= 0
                            && cc >= 0
                            && (rr as usize) < n
                            && (cc as usize) < n
                            && is_urban(prev[at(rr as usize, cc as usize)])
                        {
                            nu += 1;
                        }
                    }
                }
                if nu == 0 {
                    continue;
                }
                let rate = p.growth_rate[usize::from(c >= half)];
                let steep = if slope[i] > 24.0 { 0.2 } else { 1.0 };
                let prob =
                    rate * (-road_dist[i] / p.road_scale).exp() * (nu as f64 / 8.0).sqrt() * steep;
                if u < prob {
                    t1[i] = source_codes::ARTIFICIAL_SURFACE as f64;
                }
            }
        }
    }

    let units: Vec<f64> = (0..len)
        .map(|i| (1 + usize::from(i / n >= half) * 2 + usize::from(i % n >= half)) as f64)
        .collect();

    let profile_a = [8.0, 2.0, 6.0, 1.0];
    let profile_b = [2.0, 7.5, 1.5, 6.0];
    let mut rows = Vec::new();
    for unit in 1..=4usize {
        let base = if unit % 2 == 1 {
            &profile_a
        } else {
            &profile_b
        };
        rows.push(
            base.iter()
                .enumerate()
                .map(|(k, v)| v + 0.3 * ((unit * 7 + k * 3) % 5) as f64 / 5.0)
                .collect(),
        );
    }
    let index_table = IndexTable::new(
        (1..=4).map(|u| u.to_string()).collect(),
        vec![
            "gdp_per_capita".into(),
            "primary_share".into(),
            "urbanization".into(),
            "rural_pop".into(),
        ],
        rows,
    )?;
    let adjacency = AdjacencyGraph::from_edges([("1", "2"), ("1", "3"), ("2", "4"), ("3", "4")])?;

    let mk = |v: Vec<f64>| Raster::new(geom, NODATA, v);
    Ok(SynthWorld {
        t0: mk(t0)?,
        t1: mk(t1)?,
        variables: vec![
            ("road_dist".into(), mk(road_dist)?),
            ("city_dist".into(), mk(city_dist)?),
            ("slope".into(), mk(slope)?),
            ("noise".into(), mk(noise)?),
        ],
        units: mk(units)?,
        index_table,
        adjacency,
    })
}

impl SynthWorld {
    /// Write every input file plus a `world.toml` pipeline config into `dir`
    /// and return the config path.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
        io::save_ascii_grid(&self.t0, dir.join("t0.asc"))?;
        io::save_ascii_grid(&self.t1, dir.join("t1.asc"))?;
        io::save_ascii_grid(&self.units, dir.join("units.asc"))?;
        let mut variables = Vec::new();
        for (name, r) in &self.variables {
            let file = format!("{name}.asc");
            io::save_ascii_grid(r, dir.join(&file))?;
            variables.push(PathBuf::from(file));
        }
        io::save_index_table(&self.index_table, dir.join("indexes.csv"))?;
        io::save_adjacency(&self.adjacency, dir.join("adjacency.csv"))?;
        let cfg = self.default_config(variables);
        let path = dir.join("world.toml");
        std::fs::write(&path, cfg.to_toml_string()?)
            .map_err(|e| crate::error::Error::io(&path, e))?;
        Ok(path)
    }

    fn default_config(&self, variables: Vec<PathBuf>) -> PipelineConfig {
        PipelineConfig {
            inputs: InputsConfig {
                epoch_t0: "t0.asc".into(),
                epoch_t1: "t1.asc".into(),
                reclass: ReclassScheme::ElevenClass,
                variables,
                variable_names: None,
                unit_raster: "units.asc".into(),
                index_table: "indexes.csv".into(),
                adjacency: "adjacency.csv".into(),
                farmland_flag: None,
            },
            cluster: ClusterConfig { k: 2 },
            sampling: SamplingConfig {
                n_total: 4000,
                phi: 0.5,
            },
            forest: ForestConfig::default(),
            simulation: SimulationSection::default(),
            run: RunConfig {
                output_dir: "output".into(),
                ..RunConfig::default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{reclassify, ReclassTable};

    #[test]
    fn world_is_deterministic_and_grows() {
        let p = SynthParams {
            size: 64,
            ..Default::default()
        };
        let a = generate(&p).unwrap();
        let b = generate(&p).unwrap();
        assert_eq!(a.t1, b.t1);
        let (g0, c0) = reclassify(&a.t0, &ReclassTable::eleven_class()).unwrap();
        let (_, c1) = reclassify(&a.t1, &ReclassTable::eleven_class()).unwrap();
        assert!(c0.urban > 0);
        assert!(c1.urban > c0.urban);
        assert!(c0.limited > 0);
        assert_eq!(g0.len(), 64 * 64);
    }

    #[test]
    fn frozen_region_keeps_t0() {
        let p = SynthParams {
            size: 64,
            growth_rate: [0.9, 0.0],
            ..Default::default()
        };
        let w = generate(&p).unwrap();
        for i in 0..w.t0.len() {
            if i % 64 >= 32 {
                assert_eq!(w.t0.values()[i], w.t1.values()[i]);
            }
        }
    }

    #[test]
    fn distance_transform_is_zero_on_mask() {
        let mut m = vec![false; 25];
        m[12] = true;
        let d = distance_transform(&m, 5, 5);
        assert_eq!(d[12], 0.0);
        assert_eq!(d[13], 1.0);
        assert!((d[18] - std::f64::consts::SQRT_2).abs() < 1e-12);
    }
}
