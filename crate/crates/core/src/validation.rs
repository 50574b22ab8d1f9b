//! Change-detection accuracy and farmland trajectory statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LandClass, Raster};
use crate::scalar::Scalar;

/// Cross-tabulation of observed vs simulated change to urban.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeConfusion {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_rejections: u64,
}

impl ChangeConfusion {
    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_rejections
    }

    pub fn merge(&self, other: &ChangeConfusion) -> ChangeConfusion {
        ChangeConfusion {
            hits: self.hits + other.hits,
            misses: self.misses + other.misses,
            false_alarms: self.false_alarms + other.false_alarms,
            correct_rejections: self.correct_rejections + other.correct_rejections,
        }
    }

    pub fn fom<T: Scalar>(&self) -> Result<T> {
        fom(self)
    }
}

fn became_urban(t0: LandClass, t1: LandClass) -> bool {
    t0 != LandClass::Urban && t1 == LandClass::Urban
}

/// Classify every cell valid in all three rasters. Change means non-urban
/// (or limited) at t0 and urban at t1.
pub fn change_confusion(
    observed_t0: &Raster<LandClass>,
    observed_t1: &Raster<LandClass>,
    simulated_t1: &Raster<LandClass>,
) -> Result<ChangeConfusion> {
    observed_t0.ensure_aligned(observed_t1)?;
    observed_t0.ensure_aligned(simulated_t1)?;
    let mut c = ChangeConfusion::default();
    for ((&a, &b), &s) in observed_t0
        .values()
        .iter()
        .zip(observed_t1.values())
        .zip(simulated_t1.values())
    {
        if !(a.is_valid() && b.is_valid() && s.is_valid()) {
            continue;
        }
        match (became_urban(a, b), became_urban(a, s)) {
            (true, true) => c.hits += 1,
            (true, false) => c.misses += 1,
            (false, true) => c.false_alarms += 1,
            (false, false) => c.correct_rejections += 1,
        }
    }
    Ok(c)
}

fn ratio<T: Scalar>(num: u64, den: u64, what: &str) -> Result<T> {
    if den == 0 {
        return Err(Error::UndefinedMetric(format!("{what}: zero denominator")));
    }
    Ok(T::of(num as f64) / T::of(den as f64))
}

/// Figure of merit: `hits / (hits + misses + false_alarms)`.
pub fn fom<T: Scalar>(c: &ChangeConfusion) -> Result<T> {
    ratio(
        c.hits,
        c.hits + c.misses + c.false_alarms,
        "figure of merit",
    )
}

/// `hits / (hits + misses)`.
pub fn producer_accuracy<T: Scalar>(c: &ChangeConfusion) -> Result<T> {
    ratio(c.hits, c.hits + c.misses, "producer's accuracy")
}

/// `hits / (hits + false_alarms)`.
pub fn user_accuracy<T: Scalar>(c: &ChangeConfusion) -> Result<T> {
    ratio(c.hits, c.hits + c.false_alarms, "user's accuracy")
}

/// Farmland cell counts and areas per epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarmlandSeries {
    pub counts: Vec<usize>,
    /// `count × cellsize²`.
    pub areas: Vec<f64>,
    /// `areas[i] - areas[i + 1]`, positive when farmland is lost.
    pub losses: Vec<f64>,
}

/// Count farmland per epoch: non-urban cells carrying the farmland flag.
///
/// `flag` marks farmland with a nonzero value at the first epoch; a flagged
/// cell stops counting once it is no longer non-urban.
pub fn farmland_series<T: Scalar>(
    trajectory: &[Raster<LandClass>],
    flag: Option<&Raster<T>>,
) -> Result<FarmlandSeries> {
    let flag =
        flag.ok_or_else(|| Error::InvalidInput("farmland flag raster is required".into()))?;
    let mut counts = Vec::with_capacity(trajectory.len());
    for grid in trajectory {
        grid.ensure_aligned(flag)?;
        let n = grid
            .values()
            .iter()
            .zip(flag.values())
            .filter(|(&c, &f)| c == LandClass::NonUrban && f != flag.nodata() && f != T::zero())
            .count();
        counts.push(n);
    }
    let cell_area = flag.geometry().cell_area();
    let areas: Vec<f64> = counts.iter().map(|&n| n as f64 * cell_area).collect();
    let losses = areas.windows(2).map(|w| w[0] - w[1]).collect();
    Ok(FarmlandSeries {
        counts,
        areas,
        losses,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesFit<T> {
    /// Population standard deviation of `sim - actual`.
    pub std_dev: T,
    pub r_squared: T,
}

/// Residual spread and coefficient of determination of `sim` against `actual`.
pub fn series_fit<T: Scalar>(sim: &[T], actual: &[T]) -> Result<SeriesFit<T>> {
    if sim.len() != actual.len() {
        return Err(Error::InvalidInput(format!(
            "series lengths differ: {} vs {}",
            sim.len(),
            actual.len()
        )));
    }
    if sim.len() < 2 {
        return Err(Error::InvalidInput(
            "series need at least two points".into(),
        ));
    }
    let n = T::of_usize(sim.len());
    let resid: Vec<T> = sim.iter().zip(actual).map(|(&s, &a)| s - a).collect();
    let mean_r = resid.iter().copied().sum::<T>() / n;
    let std_dev = (resid
        .iter()
        .map(|&r| (r - mean_r) * (r - mean_r))
        .sum::<T>()
        / n)
        .sqrt();
    let mean_a = actual.iter().copied().sum::<T>() / n;
    let ss_tot: T = actual.iter().map(|&a| (a - mean_a) * (a - mean_a)).sum();
    if ss_tot == T::zero() {
        return Err(Error::UndefinedMetric(
            "R² undefined for a constant actual series".into(),
        ));
    }
    let ss_res: T = resid.iter().map(|&r| r * r).sum();
    Ok(SeriesFit {
        std_dev,
        r_squared: T::one() - ss_res / ss_tot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridGeometry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn g(vals: &[LandClass]) -> Raster<LandClass> {
        Raster::new(
            GridGeometry::new(vals.len(), 1, 30.0),
            LandClass::NoData,
            vals.to_vec(),
        )
        .unwrap()
    }

    fn random(seed: u64) -> Raster<LandClass> {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        let v: Vec<LandClass> = (0..100)
            .map(|_| {
                [
                    LandClass::Urban,
                    LandClass::NonUrban,
                    LandClass::Limited,
                    LandClass::NoData,
                ][rng.random_range(0..4)]
            })
            .collect();
        Raster::new(GridGeometry::new(10, 10, 30.0), LandClass::NoData, v).unwrap()
    }

    fn c(h: u64, m: u64, f: u64) -> ChangeConfusion {
        ChangeConfusion {
            hits: h,
            misses: m,
            false_alarms: f,
            correct_rejections: 0,
        }
    }

    #[test]
    fn perfect_and_null_simulations() {
        use LandClass::*;
        let t0 = g(&[NonUrban, NonUrban, Urban, Limited, NonUrban]);
        let t1 = g(&[Urban, NonUrban, Urban, Urban, NonUrban]);
        let perfect = change_confusion(&t0, &t1, &t1).unwrap();
        assert_eq!(perfect.misses + perfect.false_alarms, 0);
        assert_eq!(fom::<f64>(&perfect).unwrap(), 1.0);
        let null = change_confusion(&t0, &t1, &t0).unwrap();
        assert_eq!(null.hits, 0);
        assert_eq!(null.misses, 2);
    }

    #[test]
    fn confusion_matches_naive_tally() {
        let (a, b, s) = (random(1), random(2), random(3));
        let conf = change_confusion(&a, &b, &s).unwrap();
        let mut tally = [0u64; 4];
        let mut valid = 0;
        for i in 0..100 {
            let (x, y, z) = (a.values()[i], b.values()[i], s.values()[i]);
            if x == LandClass::NoData || y == LandClass::NoData || z == LandClass::NoData {
                continue;
            }
            valid += 1;
            let obs = x != LandClass::Urban && y == LandClass::Urban;
            let sim = x != LandClass::Urban && z == LandClass::Urban;
            let k = match (obs, sim) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            tally[k] += 1;
        }
        assert_eq!(
            [
                conf.hits,
                conf.misses,
                conf.false_alarms,
                conf.correct_rejections
            ],
            tally
        );
        assert_eq!(conf.total(), valid);
    }

    #[test]
    fn metric_formulas() {
        assert_eq!(fom::<f64>(&c(2, 1, 1)).unwrap(), 0.5);
        assert_eq!(producer_accuracy::<f64>(&c(3, 0, 4)).unwrap(), 1.0);
        assert_eq!(user_accuracy::<f64>(&c(3, 4, 0)).unwrap(), 1.0);
        assert_eq!(producer_accuracy::<f64>(&c(3, 1, 2)).unwrap(), 0.75);
        assert_eq!(user_accuracy::<f64>(&c(3, 1, 2)).unwrap(), 0.6);
        assert!(matches!(
            fom::<f64>(&c(0, 0, 0)),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(producer_accuracy::<f32>(&c(0, 0, 1)).is_err());
        assert!(user_accuracy::<f32>(&c(0, 1, 0)).is_err());
    }

    #[test]
    fn farmland_examples() {
        use LandClass::*;
        let geom = GridGeometry::new(20, 1, 30.0);
        let flag = Raster::filled(geom, 1.0f64, -1.0);
        let t0 = Raster::filled(geom, NonUrban, NoData);
        let mut t1 = t0.clone();
        for i in 0..10 {
            t1.values_mut()[i] = Urban;
        }
        let s = farmland_series(&[t0.clone(), t0.clone()], Some(&flag)).unwrap();
        assert_eq!(s.counts, vec![20, 20]);
        let s = farmland_series(&[t0, t1], Some(&flag)).unwrap();
        assert_eq!(s.losses, vec![9000.0]);
        assert!(farmland_series::<f64>(&[], None).is_err());
    }

    #[test]
    fn series_fit_examples() {
        let a = [1.0, 2.0, 4.0, 3.0];
        let f = series_fit(&a, &a).unwrap();
        assert_eq!(f.std_dev, 0.0);
        assert_eq!(f.r_squared, 1.0);
        // constant offset: residual spread 0, R² = 1 - n c² / SS_tot
        let off: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let f = series_fit(&off, &a).unwrap();
        let ss_tot = 5.0; // mean 2.5 → 2.25 + 0.25 + 2.25 + 0.25
        assert!(f.std_dev.abs() < 1e-15);
        assert!((f.r_squared - (1.0 - 4.0 * 0.25 / ss_tot)).abs() < 1e-12);
        assert!(series_fit(&[1.0, 2.0], &[3.0, 3.0]).is_err());
        assert!(series_fit(&[1.0], &[3.0]).is_err());
    }

    #[test]
    fn series_fit_matches_direct_formula() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(12);
        let actual: Vec<f64> = (0..12).map(|_| rng.random::<f64>() * 10.0).collect();
        let sim: Vec<f64> = actual
            .iter()
            .map(|a| a + rng.random::<f64>() - 0.5)
            .collect();
        let f = series_fit(&sim, &actual).unwrap();
        // spreadsheet-style: VAR.P of residuals, RSQ-free 1 - SSE/SST
        let n = 12.0;
        let r: Vec<f64> = sim.iter().zip(&actual).map(|(s, a)| s - a).collect();
        let rm = r.iter().sum::<f64>() / n;
        let varp = r.iter().map(|x| (x - rm).powi(2)).sum::<f64>() / n;
        let am = actual.iter().sum::<f64>() / n;
        let sst = actual.iter().map(|x| (x - am).powi(2)).sum::<f64>();
        let sse = r.iter().map(|x| x * x).sum::<f64>();
        assert!((f.std_dev - varp.sqrt()).abs() < 1e-12);
        assert!((f.r_squared - (1.0 - sse / sst)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fom_bounded_by_accuracies(h in 0u64..1000, m in 0u64..1000, f in 0u64..1000) {
            prop_assume!(h + m > 0 && h + f > 0);
            let conf = c(h, m, f);
            let v: f64 = fom(&conf).unwrap();
            let p: f64 = producer_accuracy(&conf).unwrap();
            let u: f64 = user_accuracy(&conf).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(v <= p.min(u));
        }

        #[test]
        fn farmland_non_increasing_under_conversion(seed in 0u64..1000) {
            let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
            let geom = GridGeometry::new(8, 8, 30.0);
            let flag = Raster::new(geom, -1.0f64, (0..64).map(|_| f64::from(rng.random_range(0..2u8))).collect()).unwrap();
            let mut grid = Raster::filled(geom, LandClass::NonUrban, LandClass::NoData);
            let mut traj = vec![grid.clone()];
            for _ in 0..5 {
                for _ in 0..6 {
                    let i = rng.random_range(0..64);
                    grid.values_mut()[i] = LandClass::Urban;
                }
                traj.push(grid.clone());
            }
            let s = farmland_series(&traj, Some(&flag)).unwrap();
            prop_assert!(s.counts.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
