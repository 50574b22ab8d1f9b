//! Cellular automaton driven by forest-mined development probabilities.
//!
//! The conversion probability of a cell is the product of its global
//! development probability (a forest vote fraction), the urban share of its
//! neighborhood window and a heavy-tailed random factor. Cells are updated
//! synchronously against the time-t grid; candidates above the threshold
//! are admitted best-first until the epoch's demand is met.

use std::fmt;

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::raster::{ClassCounts, ConversionType, LandClass, Raster};
use crate::rng::{domain, substream};
use crate::sample::ChangeMap;
use crate::scalar::{clamp_unit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig<T> {
    /// Conversion threshold P_T.
    pub p_threshold: T,
    /// Perturbation exponent; 0 makes the random factor exactly 2.
    pub alpha: T,
    /// Odd neighborhood window width.
    pub window: usize,
    pub max_iterations: usize,
    /// Stop when the expansion rate drops below this; 0 disables.
    pub min_expansion_rate: T,
    /// Stop when a step converts fewer cells than this; 0 disables.
    pub min_new_cells_per_step: usize,
    /// Target number of new urban cells for the epoch.
    pub demand_cells: usize,
    pub seed: u64,
    pub allow_limited_conversion: bool,
}

impl<T: Scalar> Default for SimulationConfig<T> {
    fn default() -> Self {
        SimulationConfig {
            p_threshold: T::of(0.8),
            alpha: T::one(),
            window: 3,
            max_iterations: 100,
            min_expansion_rate: T::zero(),
            min_new_cells_per_step: 0,
            demand_cells: 0,
            seed: 0,
            allow_limited_conversion: false,
        }
    }
}

impl<T: Scalar> SimulationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_threshold > T::zero() && self.p_threshold <= T::one()) {
            return Err(Error::param(
                "p_threshold",
                format!("must lie in (0, 1], got {}", self.p_threshold),
            ));
        }
        if !(self.alpha >= T::zero()) || !self.alpha.is_finite() {
            return Err(Error::param(
                "alpha",
                format!("must be finite and >= 0, got {}", self.alpha),
            ));
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::param(
                "window",
                format!("must be odd and >= 3, got {}", self.window),
            ));
        }
        if !(self.min_expansion_rate >= T::zero()) {
            return Err(Error::param("min_expansion_rate", "must be >= 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Global development probability of one cell.
///
/// Urban cells are certain; non-urban cells take the vote fraction for the
/// non-urban → urban conversion; limited cells take the limited → urban
/// fraction only when that conversion is allowed.
pub fn global_probability<T: Scalar>(
    forest: &Forest<T>,
    cell_class: LandClass,
    x: &[T],
    allow_limited_conversion: bool,
) -> Result<T> {
    match cell_class {
        LandClass::Urban => Ok(T::one()),
        LandClass::NonUrban => Ok(forest
            .predict_votes(x)?
            .fraction(ConversionType::NON_URBAN_TO_URBAN.code())),
        LandClass::Limited if allow_limited_conversion => Ok(forest
            .predict_votes(x)?
            .fraction(ConversionType::LIMITED_TO_URBAN.code())),
        LandClass::Limited => Ok(T::zero()),
        LandClass::NoData => Err(Error::InvalidClass(
            "global probability requested for a nodata cell".into(),
        )),
    }
}

/// Urban share of the `w × w` window centered on `(row, col)`, center included.
/// Positions outside the grid and nodata cells count as non-urban.
pub fn neighborhood<T: Scalar>(grid: &Raster<LandClass>, row: usize, col: usize, w: usize) -> T {
    let half = (w / 2) as isize;
    let (nr, nc) = (grid.nrows() as isize, grid.ncols() as isize);
    let mut count = 0usize;
    for r in (row as isize - half).max(0)..=(row as isize + half).min(nr - 1) {
        for c in (col as isize - half).max(0)..=(col as isize + half).min(nc - 1) {
            if grid.get(r as usize, c as usize) == LandClass::Urban {
                count += 1;
            }
        }
    }
    T::of_usize(count) / T::of_usize(w * w)
}

/// Urban counts of every cell's window, via a summed-area table.
pub fn neighborhood_counts(grid: &Raster<LandClass>, w: usize) -> Vec<u32> {
    let (nr, nc) = (grid.nrows(), grid.ncols());
    let stride = nc + 1;
    let mut sat = vec![0u32; (nr + 1) * stride];
    for r in 0..nr {
        let mut run = 0u32;
        for c in 0..nc {
            run += u32::from(grid.get(r, c) == LandClass::Urban);
            sat[(r + 1) * stride + c + 1] = sat[r * stride + c + 1] + run;
        }
    }
    let half = w / 2;
    let mut out = Vec::with_capacity(nr * nc);
    for r in 0..nr {
        let r0 = r.saturating_sub(half);
        let r1 = (r + half + 1).min(nr);
        for c in 0..nc {
            let c0 = c.saturating_sub(half);
            let c1 = (c + half + 1).min(nc);
            out.push(
                sat[r1 * stride + c1] + sat[r0 * stride + c0]
                    - sat[r0 * stride + c1]
                    - sat[r1 * stride + c0],
            );
        }
    }
    out
}

/// Random factor `1 + (-ln γ)^α` from a given γ in (0, 1].
pub fn perturbation_from_gamma<T: Scalar>(gamma: T, alpha: T) -> T {
    T::one() + (-gamma.ln()).powf(alpha)
}

/// Draw the random factor with γ uniform on (0, 1].
pub fn perturbation<T: Scalar, R: Rng + ?Sized>(rng: &mut R, alpha: T) -> T {
    let gamma = 1.0 - rng.random::<f64>();
    perturbation_from_gamma(T::of(gamma), alpha)
}

/// `pg · omega · ra`, clamped to [0, 1].
pub fn conversion_probability<T: Scalar>(pg: T, omega: T, ra: T) -> T {
    clamp_unit(pg * omega * ra)
}

/// `(N(t) - N(t-1)) / N(t-1)` over the last two entries.
pub fn expansion_rate<T: Scalar>(history: &[usize]) -> Result<T> {
    let n = history.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "expansion rate needs two history entries".into(),
        ));
    }
    let (prev, cur) = (history[n - 2], history[n - 1]);
    if prev == 0 {
        return Err(Error::UndefinedRate);
    }
    Ok((T::of_usize(cur) - T::of_usize(prev)) / T::of_usize(prev))
}

/// Static inputs of a simulation: the global probability of every cell.
///
/// Spatial variables do not change over the horizon, so the forest is
/// queried once per cell up front.
#[derive(Clone, Debug)]
pub struct DevelopmentSurface<T> {
    non_urban: Vec<T>,
    limited: Vec<T>,
}

impl<T: Scalar> DevelopmentSurface<T> {
    /// Query the forest for every cell where all variables are valid.
    /// Cells with nodata variables get probability zero.
    pub fn from_forest(
        forest: &Forest<T>,
        variables: &[Raster<T>],
        allow_limited_conversion: bool,
    ) -> Result<Self> {
        let first = variables
            .first()
            .ok_or_else(|| Error::InvalidInput("no spatial variables".into()))?;
        for v in variables {
            first.ensure_aligned(v)?;
        }
        if variables.len() != forest.n_features() {
            return Err(Error::Arity {
                expected: forest.n_features(),
                actual: variables.len(),
            });
        }
        let n = first.len();
        let pairs: Vec<(T, T)> = (0..n)
            .into_par_iter()
            .map(|i| {
                if variables.iter().any(|v| v.is_nodata(i)) {
                    return Ok((T::zero(), T::zero()));
                }
                let x: Vec<T> = variables.iter().map(|v| v.values()[i]).collect();
                let votes = forest.predict_votes(&x)?;
                let lim = if allow_limited_conversion {
                    votes.fraction(ConversionType::LIMITED_TO_URBAN.code())
                } else {
                    T::zero()
                };
                Ok((
                    votes.fraction(ConversionType::NON_URBAN_TO_URBAN.code()),
                    lim,
                ))
            })
            .collect::<Result<_>>()?;
        let (non_urban, limited) = pairs.into_iter().unzip();
        Ok(DevelopmentSurface { non_urban, limited })
    }

    /// Build directly from per-cell probabilities (non-urban, limited).
    pub fn from_values(non_urban: Vec<T>, limited: Vec<T>) -> Result<Self> {
        if non_urban.len() != limited.len() {
            return Err(Error::InvalidInput(
                "surface layers differ in length".into(),
            ));
        }
        Ok(DevelopmentSurface { non_urban, limited })
    }

    pub fn len(&self) -> usize {
        self.non_urban.len()
    }

    pub fn is_empty(&self) -> bool {
        self.non_urban.is_empty()
    }

    pub fn get(&self, class: LandClass, cell: usize, allow_limited_conversion: bool) -> T {
        match class {
            LandClass::Urban => T::one(),
            LandClass::NonUrban => self.non_urban[cell],
            LandClass::Limited if allow_limited_conversion => self.limited[cell],
            _ => T::zero(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    DemandMet,
    ExpansionRate,
    MinNewCells,
    MaxIterations,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::DemandMet => "demand-met",
            StopReason::ExpansionRate => "expansion-rate",
            StopReason::MinNewCells => "min-new-cells",
            StopReason::MaxIterations => "max-iterations",
        })
    }
}

/// One row of the per-step history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub urban_count: usize,
    pub new_cells: usize,
    pub candidates: usize,
    pub converted_total: usize,
    /// `None` when the previous urban count was zero.
    pub expansion_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationState {
    pub grid: Raster<LandClass>,
    pub iteration: usize,
    /// Urban count at t = 0, 1, ...
    pub urban_count_history: Vec<usize>,
    pub converted_total: usize,
}

impl SimulationState {
    pub fn new(grid: Raster<LandClass>) -> Self {
        let urban = ClassCounts::of(&grid).urban;
        SimulationState {
            grid,
            iteration: 0,
            urban_count_history: vec![urban],
            converted_total: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationRun {
    pub state: SimulationState,
    pub history: Vec<StepRecord>,
    pub stop_reason: StopReason,
}

fn is_convertible(class: LandClass, allow_limited: bool) -> bool {
    class == LandClass::NonUrban || (allow_limited && class == LandClass::Limited)
}

/// Conversion probability of one cell at the state's iteration.
fn cell_probability<T: Scalar>(
    state: &SimulationState,
    surface: &DevelopmentSurface<T>,
    counts: &[u32],
    config: &SimulationConfig<T>,
    cell: usize,
) -> T {
    let class = state.grid.values()[cell];
    let pg = surface.get(class, cell, config.allow_limited_conversion);
    if pg == T::zero() {
        return T::zero();
    }
    let omega = T::of(counts[cell] as f64) / T::of_usize(config.window * config.window);
    let mut rng = substream(
        config.seed,
        &[domain::CELL, state.iteration as u64, cell as u64],
    );
    let ra = perturbation(&mut rng, config.alpha);
    conversion_probability(pg, omega, ra)
}

/// Advance one synchronous step, evaluating cells in `order`.
///
/// The result does not depend on `order`: every cell reads the time-t grid
/// and draws from its own (seed, iteration, cell) random stream.
pub fn step_with_order<T: Scalar>(
    state: &SimulationState,
    surface: &DevelopmentSurface<T>,
    config: &SimulationConfig<T>,
    order: &[usize],
) -> (SimulationState, StepRecord) {
    let counts = neighborhood_counts(&state.grid, config.window);
    let remaining = config.demand_cells.saturating_sub(state.converted_total);
    let mut candidates: Vec<(T, usize)> = Vec::new();
    if remaining > 0 {
        for &cell in order {
            if !is_convertible(state.grid.values()[cell], config.allow_limited_conversion) {
                continue;
            }
            let p = cell_probability(state, surface, &counts, config, cell);
            if p > config.p_threshold {
                candidates.push((p, cell));
            }
        }
    }
    finish_step(state, config, candidates, remaining)
}

/// Advance one synchronous step, evaluating cells in parallel.
pub fn step<T: Scalar>(
    state: &SimulationState,
    surface: &DevelopmentSurface<T>,
    config: &SimulationConfig<T>,
) -> (SimulationState, StepRecord) {
    let counts = neighborhood_counts(&state.grid, config.window);
    let remaining = config.demand_cells.saturating_sub(state.converted_total);
    let candidates: Vec<(T, usize)> = if remaining == 0 {
        Vec::new()
    } else {
        (0..state.grid.len())
            .into_par_iter()
            .filter(|&cell| {
                is_convertible(state.grid.values()[cell], config.allow_limited_conversion)
            })
            .filter_map(|cell| {
                let p = cell_probability(state, surface, &counts, config, cell);
                (p > config.p_threshold).then_some((p, cell))
            })
            .collect()
    };
    finish_step(state, config, candidates, remaining)
}

fn finish_step<T: Scalar>(
    state: &SimulationState,
    _config: &SimulationConfig<T>,
    mut candidates: Vec<(T, usize)>,
    remaining: usize,
) -> (SimulationState, StepRecord) {
    let n_candidates = candidates.len();
    // highest probability first, lower cell index on ties
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite probability")
            .then(a.1.cmp(&b.1))
    });
    candidates.truncate(remaining);
    let mut next = state.clone();
    for &(_, cell) in &candidates {
        next.grid.values_mut()[cell] = LandClass::Urban;
    }
    let new_cells = candidates.len();
    next.iteration += 1;
    next.converted_total += new_cells;
    let prev_urban = *state
        .urban_count_history
        .last()
        .expect("history starts with t = 0");
    let urban = prev_urban + new_cells;
    next.urban_count_history.push(urban);
    let record = StepRecord {
        iteration: next.iteration,
        urban_count: urban,
        new_cells,
        candidates: n_candidates,
        converted_total: next.converted_total,
        expansion_rate: expansion_rate::<f64>(&next.urban_count_history).ok(),
    };
    (next, record)
}

/// Iterate until a stopping condition holds.
///
/// Conditions are checked after every step in this order: demand met,
/// expansion rate below `min_expansion_rate`, fewer new cells than
/// `min_new_cells_per_step`, iteration count reaching `max_iterations`.
pub fn run<T: Scalar>(
    initial: &Raster<LandClass>,
    surface: &DevelopmentSurface<T>,
    config: &SimulationConfig<T>,
) -> Result<SimulationRun> {
    config.validate()?;
    if surface.len() != initial.len() {
        return Err(Error::GeometryMismatch(format!(
            "development surface has {} cells, grid has {}",
            surface.len(),
            initial.len()
        )));
    }
    let mut state = SimulationState::new(initial.clone());
    let mut history = Vec::new();
    loop {
        let (next, record) = step(&state, surface, config);
        state = next;
        history.push(record);
        let rate_low = record
            .expansion_rate
            .is_some_and(|a| a < config.min_expansion_rate.to_f64_lossless());
        let reason = if state.converted_total >= config.demand_cells {
            Some(StopReason::DemandMet)
        } else if rate_low {
            Some(StopReason::ExpansionRate)
        } else if record.new_cells < config.min_new_cells_per_step {
            Some(StopReason::MinNewCells)
        } else if state.iteration >= config.max_iterations {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if let Some(stop_reason) = reason {
            return Ok(SimulationRun {
                state,
                history,
                stop_reason,
            });
        }
    }
}

/// Convenience wrapper that builds the development surface from a forest.
pub fn run_with_forest<T: Scalar>(
    initial: &Raster<LandClass>,
    forest: &Forest<T>,
    variables: &[Raster<T>],
    config: &SimulationConfig<T>,
) -> Result<SimulationRun> {
    for v in variables {
        initial.ensure_aligned(v)?;
    }
    let surface =
        DevelopmentSurface::from_forest(forest, variables, config.allow_limited_conversion)?;
    run(initial, &surface, config)
}

/// Allocate `demand` new urban cells uniformly at random among convertible
/// cells. Used as a null model for validation.
pub fn random_allocation(
    grid: &Raster<LandClass>,
    demand: usize,
    allow_limited: bool,
    seed: u64,
) -> Raster<LandClass> {
    let pool: Vec<usize> = (0..grid.len())
        .filter(|&i| is_convertible(grid.values()[i], allow_limited))
        .collect();
    let mut rng = substream(seed, &[domain::BASELINE]);
    let take = demand.min(pool.len());
    let mut out = grid.clone();
    for j in rand::seq::index::sample(&mut rng, pool.len(), take) {
        out.values_mut()[pool[j]] = LandClass::Urban;
    }
    out
}

/// Class-count projection by a first-order Markov chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovDemand<T> {
    /// Row-stochastic, indexed `[from][to]` over Urban, NonUrban, Limited.
    pub transition_matrix: [[T; 3]; 3],
    /// `projected_counts[0]` is the second observed epoch, `[n]` is n epochs later.
    pub projected_counts: Vec<[T; 3]>,
}

impl<T: Scalar> MarkovDemand<T> {
    /// Estimate from a 3×3 cross-tabulation and project `horizon` epochs past
    /// the second observation. Classes absent at the first epoch keep an
    /// identity row.
    pub fn estimate(cross_tab: &[[usize; 3]; 3], horizon: usize) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in cross_tab.iter().enumerate() {
            let total: usize = row.iter().sum();
            if total == 0 {
                m[i][i] = T::one();
            } else {
                for j in 0..3 {
                    m[i][j] = T::of_usize(row[j]) / T::of_usize(total);
                }
            }
        }
        let mut counts_t1 = [T::zero(); 3];
        for row in cross_tab {
            for j in 0..3 {
                counts_t1[j] = counts_t1[j] + T::of_usize(row[j]);
            }
        }
        let mut projected_counts = vec![counts_t1];
        for _ in 0..horizon {
            let c = *projected_counts.last().unwrap();
            projected_counts.push(apply_transition(&c, &m));
        }
        MarkovDemand {
            transition_matrix: m,
            projected_counts,
        }
    }

    pub fn from_change_map(change: &ChangeMap, horizon: usize) -> Self {
        Self::estimate(&change.cross_tab(), horizon)
    }

    pub fn horizon(&self) -> usize {
        self.projected_counts.len() - 1
    }

    /// New urban cells needed to reach epoch `n`'s projection from the
    /// previous epoch's projection, floored at zero.
    pub fn epoch_demand(&self, n: usize) -> usize {
        if n == 0 || n >= self.projected_counts.len() {
            return 0;
        }
        let d = self.projected_counts[n][0] - self.projected_counts[n - 1][0];
        d.max(T::zero()).floor().to_usize().unwrap_or(0)
    }

    /// Total new urban cells from the second observation to epoch `n`.
    pub fn cumulative_demand(&self, n: usize) -> usize {
        let n = n.min(self.horizon());
        let d = self.projected_counts[n][0] - self.projected_counts[0][0];
        d.max(T::zero()).floor().to_usize().unwrap_or(0)
    }
}

/// Exact transition matrix in rational arithmetic; same estimator as
/// [`MarkovDemand::estimate`].
pub fn exact_transition_matrix(cross_tab: &[[usize; 3]; 3]) -> [[Ratio<i128>; 3]; 3] {
    let mut m = [[Ratio::from_integer(0); 3]; 3];
    for (i, row) in cross_tab.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            m[i][i] = Ratio::from_integer(1);
        } else {
            for j in 0..3 {
                m[i][j] = Ratio::new(row[j] as i128, total as i128);
            }
        }
    }
    m
}

/// Exact `c' = c · M` over rationals.
pub fn apply_transition_exact(counts: &[i128; 3], m: &[[Ratio<i128>; 3]; 3]) -> [Ratio<i128>; 3] {
    let mut out = [Ratio::from_integer(0); 3];
    for (i, &c) in counts.iter().enumerate() {
        for j in 0..3 {
            out[j] += Ratio::from_integer(c) * m[i][j];
        }
    }
    out
}

/// Row vector times matrix: `c' = c · M`.
pub fn apply_transition<T: Scalar>(counts: &[T; 3], m: &[[T; 3]; 3]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for (i, &c) in counts.iter().enumerate() {
        for j in 0..3 {
            out[j] = out[j] + c * m[i][j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::ForestParams;
    use crate::raster::GridGeometry;
    use crate::sample::TrainingSet;
    use rand::SeedableRng;

    fn grid(ncols: usize, nrows: usize, classes: &[LandClass]) -> Raster<LandClass> {
        Raster::new(
            GridGeometry::new(ncols, nrows, 30.0),
            LandClass::NoData,
            classes.to_vec(),
        )
        .unwrap()
    }

    fn random_grid(seed: u64, n: usize) -> Raster<LandClass> {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        let v: Vec<LandClass> = (0..n * n)
            .map(|_| match rng.random_range(0..6) {
                0 | 1 => LandClass::Urban,
                2 => LandClass::Limited,
                3 => LandClass::NoData,
                _ => LandClass::NonUrban,
            })
            .collect();
        grid(n, n, &v)
    }

    fn unanimous_forest(code: u8) -> Forest<f64> {
        let d = TrainingSet::new(
            vec!["x".into()],
            vec![vec![0.0], vec![1.0]],
            vec![code, code],
        )
        .unwrap();
        Forest::train(
            &d,
            &ForestParams {
                m_trees: 4,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn global_probability_branches() {
        let f = unanimous_forest(4);
        assert_eq!(
            global_probability(&f, LandClass::Urban, &[0.5], false).unwrap(),
            1.0
        );
        assert_eq!(
            global_probability(&f, LandClass::NonUrban, &[0.5], false).unwrap(),
            1.0
        );
        assert_eq!(
            global_probability(&f, LandClass::Limited, &[0.5], false).unwrap(),
            0.0
        );
        assert!(global_probability(&f, LandClass::NoData, &[0.5], false).is_err());
        let g = unanimous_forest(7);
        assert_eq!(
            global_probability(&g, LandClass::Limited, &[0.5], true).unwrap(),
            1.0
        );
    }

    #[test]
    fn neighborhood_examples() {
        use LandClass::*;
        let all = grid(3, 3, &[Urban; 9]);
        assert_eq!(neighborhood::<f64>(&all, 1, 1, 3), 1.0);
        let four = grid(
            3,
            3,
            &[
                Urban, NonUrban, Urban, NonUrban, NonUrban, NoData, Urban, Limited, Urban,
            ],
        );
        assert_eq!(neighborhood::<f64>(&four, 1, 1, 3), 4.0 / 9.0);
        // corner: out-of-bounds counts as non-urban
        assert_eq!(neighborhood::<f64>(&all, 0, 0, 3), 4.0 / 9.0);
    }

    #[test]
    fn neighborhood_counts_match_window_scan() {
        let g = random_grid(1, 20);
        for w in [3, 5, 7] {
            let counts = neighborhood_counts(&g, w);
            for r in 0..20 {
                for c in 0..20 {
                    let mut n = 0;
                    for dr in -(w as i64 / 2)..=(w as i64 / 2) {
                        for dc in -(w as i64 / 2)..=(w as i64 / 2) {
                            let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                            if (0..20).contains(&rr)
                                && (0..20).contains(&cc)
                                && g.get(rr as usize, cc as usize) == LandClass::Urban
                            {
                                n += 1;
                            }
                        }
                    }
                    assert_eq!(counts[r * 20 + c], n);
                    assert_eq!(neighborhood::<f64>(&g, r, c, w), n as f64 / (w * w) as f64);
                }
            }
        }
    }

    #[test]
    fn perturbation_examples() {
        assert_eq!(perturbation_from_gamma(1.0f64, 1.0), 1.0);
        assert!((perturbation_from_gamma((-2.0f64).exp(), 1.0) - 3.0).abs() < 1e-15);
        let mut rng = substream(0, &[]);
        for _ in 0..100 {
            assert_eq!(perturbation(&mut rng, 0.0f64), 2.0);
            assert!(perturbation(&mut rng, 1.5f64) >= 1.0);
        }
        assert_eq!(perturbation_from_gamma(1.0f64, 0.0), 2.0);
    }

    #[test]
    fn conversion_probability_examples() {
        assert_eq!(conversion_probability(0.0, 0.7, 3.0), 0.0);
        assert_eq!(conversion_probability(0.5, 0.5, 1.0), 0.25);
        assert_eq!(conversion_probability(0.9, 0.9, 1.5), 1.0);
    }

    #[test]
    fn expansion_rate_examples() {
        assert_eq!(expansion_rate::<f64>(&[100, 110]).unwrap(), 0.1);
        assert_eq!(expansion_rate::<f64>(&[5, 5]).unwrap(), 0.0);
        assert_eq!(expansion_rate::<f64>(&[50, 200]).unwrap(), 3.0);
        assert!(matches!(
            expansion_rate::<f64>(&[0, 3]),
            Err(Error::UndefinedRate)
        ));
    }

    #[test]
    fn surrounded_cell_converts() {
        use LandClass::*;
        let mut v = vec![Urban; 9];
        v[4] = NonUrban;
        let g = grid(3, 3, &v);
        let surface = DevelopmentSurface::from_values(vec![1.0; 9], vec![0.0; 9]).unwrap();
        let cfg = SimulationConfig {
            p_threshold: 0.1,
            alpha: 0.0,
            demand_cells: 1,
            ..Default::default()
        };
        // pg = 1, omega = 8/9, ra = 2 → clamp(16/9) = 1 > 0.1
        let (next, rec) = step(&SimulationState::new(g), &surface, &cfg);
        assert_eq!(next.grid.values()[4], Urban);
        assert_eq!(rec.new_cells, 1);
    }

    #[test]
    fn zero_demand_leaves_grid_unchanged() {
        let g = random_grid(2, 16);
        let surface = DevelopmentSurface::from_values(vec![1.0; 256], vec![1.0; 256]).unwrap();
        let cfg = SimulationConfig::<f64> {
            p_threshold: 0.01,
            ..Default::default()
        };
        let out = run(&g, &surface, &cfg).unwrap();
        assert_eq!(out.state.grid, g);
        assert_eq!(out.stop_reason, StopReason::DemandMet);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn interleaved_orders_agree() {
        let g = random_grid(3, 16);
        let surface = DevelopmentSurface::from_values(
            (0..256).map(|i| (i % 10) as f64 / 10.0).collect(),
            vec![0.0; 256],
        )
        .unwrap();
        let cfg = SimulationConfig {
            p_threshold: 0.3,
            demand_cells: 1000,
            seed: 4,
            ..Default::default()
        };
        let s = SimulationState::new(g);
        let even_first: Vec<usize> = (0..256)
            .filter(|i| (i / 16 + i % 16) % 2 == 0)
            .chain((0..256).filter(|i| (i / 16 + i % 16) % 2 == 1))
            .collect();
        let odd_first: Vec<usize> = (0..256)
            .filter(|i| (i / 16 + i % 16) % 2 == 1)
            .chain((0..256).filter(|i| (i / 16 + i % 16) % 2 == 0))
            .collect();
        let a = step_with_order(&s, &surface, &cfg, &even_first);
        let b = step_with_order(&s, &surface, &cfg, &odd_first);
        let c = step(&s, &surface, &cfg);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn demand_caps_conversions_and_urban_never_reverts() {
        let g = random_grid(5, 24);
        let surface = DevelopmentSurface::from_values(vec![0.9; 576], vec![0.9; 576]).unwrap();
        let cfg = SimulationConfig {
            p_threshold: 0.2,
            demand_cells: 37,
            seed: 1,
            allow_limited_conversion: true,
            ..Default::default()
        };
        let out = run(&g, &surface, &cfg).unwrap();
        assert_eq!(out.state.converted_total, 37);
        assert!(out
            .state
            .urban_count_history
            .windows(2)
            .all(|w| w[0] <= w[1]));
        for (a, b) in g.values().iter().zip(out.state.grid.values()) {
            if *a == LandClass::Urban {
                assert_eq!(*b, LandClass::Urban);
            }
            if *a == LandClass::NoData {
                assert_eq!(*b, LandClass::NoData);
            }
        }
    }

    #[test]
    fn limited_cells_fixed_when_disallowed() {
        let g = random_grid(6, 24);
        let surface = DevelopmentSurface::from_values(vec![1.0; 576], vec![1.0; 576]).unwrap();
        let cfg = SimulationConfig {
            p_threshold: 0.05,
            demand_cells: 10_000,
            max_iterations: 20,
            ..Default::default()
        };
        let out = run(&g, &surface, &cfg).unwrap();
        for (a, b) in g.values().iter().zip(out.state.grid.values()) {
            if *a == LandClass::Limited {
                assert_eq!(*b, LandClass::Limited);
            }
        }
    }

    #[test]
    fn zero_probability_never_converts() {
        let g = random_grid(7, 16);
        let pg: Vec<f64> = (0..256)
            .map(|i| if i % 3 == 0 { 0.0 } else { 1.0 })
            .collect();
        let surface = DevelopmentSurface::from_values(pg, vec![0.0; 256]).unwrap();
        let cfg = SimulationConfig {
            p_threshold: 0.01,
            demand_cells: 10_000,
            max_iterations: 30,
            ..Default::default()
        };
        let out = run(&g, &surface, &cfg).unwrap();
        for i in (0..256).step_by(3) {
            if g.values()[i] != LandClass::Urban {
                assert_eq!(out.state.grid.values()[i], g.values()[i]);
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = SimulationConfig::<f64>::default();
        assert!(c.validate().is_ok());
        c.window = 4;
        assert!(c.validate().is_err());
        c.window = 3;
        c.p_threshold = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn markov_examples() {
        // identity
        let m = MarkovDemand::<f64>::estimate(&[[10, 0, 0], [0, 20, 0], [0, 0, 5]], 3);
        for c in &m.projected_counts {
            assert_eq!(*c, [10.0, 20.0, 5.0]);
        }
        // absent class keeps an identity row
        let m = MarkovDemand::<f64>::estimate(&[[10, 0, 0], [5, 15, 0], [0, 0, 0]], 1);
        assert_eq!(m.transition_matrix[2], [0.0, 0.0, 1.0]);
        for row in &m.transition_matrix {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let ex = MarkovDemand::<f64>::estimate(&[[100, 0, 0], [50, 850, 0], [0, 0, 0]], 1);
        let expected = 150.0 + 850.0 * (50.0 / 900.0);
        assert!((ex.projected_counts[1][0] - expected).abs() < 1e-9);
        assert_eq!(ex.epoch_demand(1), 47);
        assert_eq!(ex.cumulative_demand(1), 47);
    }

    #[test]
    fn exact_one_step_reproduces_second_epoch() {
        let tab = [[100, 3, 0], [50, 840, 10], [0, 2, 7]];
        let m = exact_transition_matrix(&tab);
        let t0: [i128; 3] = [103, 900, 9];
        let t1 = apply_transition_exact(&t0, &m);
        // column sums of the cross-tab
        assert_eq!(
            t1,
            [
                Ratio::from_integer(150),
                Ratio::from_integer(845),
                Ratio::from_integer(17)
            ]
        );
    }
}
