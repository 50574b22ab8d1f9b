//! Change maps between two epochs and the capped, line-stratified training
//! sample drawn from them.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::raster::{conversion_code, LandClass, Raster, CONVERSION_TYPES};
use crate::rng::{domain, substream};
use crate::scalar::Scalar;

/// Nodata code in a change raster.
pub const NO_CHANGE_CODE: u8 = 0;

/// Per-cell conversion codes between two epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangeMap {
    pub raster: Raster<u8>,
    /// Cell count per conversion code; index `code - 1`.
    pub class_counts: [usize; CONVERSION_TYPES],
}

impl ChangeMap {
    /// 3×3 cross-tabulation `[from][to]` of valid cells.
    pub fn cross_tab(&self) -> [[usize; 3]; 3] {
        let mut t = [[0; 3]; 3];
        for (k, &c) in self.class_counts.iter().enumerate() {
            t[k / 3][k % 3] = c;
        }
        t
    }
}

pub fn build_change_map(
    grid_t0: &Raster<LandClass>,
    grid_t1: &Raster<LandClass>,
) -> Result<ChangeMap> {
    grid_t0.ensure_aligned(grid_t1)?;
    let mut class_counts = [0usize; CONVERSION_TYPES];
    let values: Vec<u8> = grid_t0
        .values()
        .iter()
        .zip(grid_t1.values())
        .map(|(&a, &b)| {
            if a.is_valid() && b.is_valid() {
                let code = conversion_code(a, b).expect("both classes valid");
                class_counts[code as usize - 1] += 1;
                code
            } else {
                NO_CHANGE_CODE
            }
        })
        .collect();
    Ok(ChangeMap {
        raster: Raster::new(*grid_t0.geometry(), NO_CHANGE_CODE, values)?,
        class_counts,
    })
}

/// Sampled rows of normalized spatial variables labeled by conversion code.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet<T> {
    feature_names: Vec<String>,
    features: Vec<Vec<T>>,
    labels: Vec<u8>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(feature_names: Vec<String>, features: Vec<Vec<T>>, labels: Vec<u8>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(row) = features.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::Arity {
                expected: feature_names.len(),
                actual: row.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| !(1..=9).contains(&l)) {
            return Err(Error::InvalidConversionCode(bad));
        }
        Ok(TrainingSet {
            feature_names,
            features,
            labels,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i]
    }

    /// Conversion codes, 1..=9.
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Copy with column `feature` replaced by `values`.
    pub fn with_column(&self, feature: usize, values: &[T]) -> Self {
        let mut out = self.clone();
        for (row, &v) in out.features.iter_mut().zip(values) {
            row[feature] = v;
        }
        out
    }

    pub fn label_counts(&self) -> [usize; CONVERSION_TYPES] {
        let mut c = [0; CONVERSION_TYPES];
        for &l in &self.labels {
            c[l as usize - 1] += 1;
        }
        c
    }
}

/// Requested sample size, per-class proportion cap and seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingPolicy {
    pub n_total: usize,
    pub phi: f64,
    pub seed: u64,
}

impl SamplingPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 1.0 / 9.0 && self.phi <= 1.0) {
            return Err(Error::param(
                "phi",
                format!("must lie in (1/9, 1], got {}", self.phi),
            ));
        }
        Ok(())
    }
}

/// Result of a stratified draw.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome<T> {
    pub set: TrainingSet<T>,
    /// Raster cell index of every row.
    pub cells: Vec<usize>,
    /// Fewer rows than requested were available.
    pub truncated: bool,
}

/// Per-class sampling proportions of one line after the φ cap.
///
/// Every class whose share reaches φ is set to φ and each of the other eight
/// classes gains `(1 - φ) / 8`. The cap is applied once, against the
/// original shares, and the result is not renormalized here.
pub fn capped_proportions(counts: &[usize; CONVERSION_TYPES], phi: f64) -> [f64; CONVERSION_TYPES] {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return [0.0; CONVERSION_TYPES];
    }
    let raw: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let mut p = [0.0; CONVERSION_TYPES];
    p.copy_from_slice(&raw);
    let bonus = (1.0 - phi) / (CONVERSION_TYPES - 1) as f64;
    for (i, &share) in raw.iter().enumerate() {
        if share >= phi {
            p[i] = phi;
            for (j, pj) in p.iter_mut().enumerate() {
                if j != i {
                    *pj += bonus;
                }
            }
        }
    }
    p
}

/// Integer quotas summing to `quota`, proportional to `weights`, largest
/// remainders first (ties to the lower class).
pub fn allocate_quota(
    weights: &[f64; CONVERSION_TYPES],
    quota: usize,
) -> [usize; CONVERSION_TYPES] {
    let sum: f64 = weights.iter().sum();
    let mut n = [0usize; CONVERSION_TYPES];
    if sum <= 0.0 || quota == 0 {
        return n;
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * quota as f64).collect();
    for (slot, e) in n.iter_mut().zip(&exact) {
        *slot = e.floor() as usize;
    }
    let assigned: usize = n.iter().sum();
    let mut order: Vec<usize> = (0..CONVERSION_TYPES).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(quota.saturating_sub(assigned)) {
        n[i] += 1;
    }
    n
}

/// Draw a training set line by line (one raster row per line).
///
/// Each row gets `N / nrows` points (the first `N mod nrows` rows one more).
/// Within a row the class shares are capped by φ, turned into integer
/// quotas, and each quota is filled uniformly without replacement from that
/// row's cells of the class, limited by availability. Cells where any
/// variable is nodata are not eligible. Every row uses its own RNG
/// substream, so the result depends only on the inputs and the seed.
pub fn stratified_sample<T: Scalar>(
    change: &ChangeMap,
    variables: &[Raster<T>],
    names: &[String],
    policy: &SamplingPolicy,
) -> Result<SampleOutcome<T>> {
    policy.validate()?;
    if variables.len() != names.len() {
        return Err(Error::Arity {
            expected: names.len(),
            actual: variables.len(),
        });
    }
    for v in variables {
        change.raster.ensure_aligned(v)?;
    }
    let geom = *change.raster.geometry();
    let lines = geom.nrows;
    let base = policy.n_total / lines;
    let extra = policy.n_total % lines;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut cells = Vec::new();
    for row in 0..lines {
        let pts_per_line = base + usize::from(row < extra);
        if pts_per_line == 0 {
            continue;
        }
        let mut by_class: [Vec<usize>; CONVERSION_TYPES] = Default::default();
        for col in 0..geom.ncols {
            let i = geom.index(row, col);
            let code = change.raster.values()[i];
            if code == NO_CHANGE_CODE || variables.iter().any(|v| v.is_nodata(i)) {
                continue;
            }
            by_class[code as usize - 1].push(i);
        }
        let mut counts = [0usize; CONVERSION_TYPES];
        for (c, members) in counts.iter_mut().zip(&by_class) {
            *c = members.len();
        }
        let p = capped_proportions(&counts, policy.phi);
        let quotas = allocate_quota(&p, pts_per_line);
        let mut rng = substream(policy.seed, &[domain::SAMPLE_ROW, row as u64]);
        for (k, members) in by_class.iter().enumerate() {
            let take = quotas[k].min(members.len());
            if take == 0 {
                continue;
            }
            let mut picked = index::sample(&mut rng, members.len(), take).into_vec();
            picked.sort_unstable();
            for j in picked {
                let cell = members[j];
                features.push(variables.iter().map(|v| v.values()[cell]).collect());
                labels.push(k as u8 + 1);
                cells.push(cell);
            }
        }
    }
    let truncated = labels.len() < policy.n_total;
    if truncated {
        log::warn!(
            "stratified sample truncated: {} of {} requested rows available",
            labels.len(),
            policy.n_total
        );
    }
    Ok(SampleOutcome {
        set: TrainingSet::new(names.to_vec(), features, labels)?,
        cells,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridGeometry;
    use rand::{Rng, SeedableRng};

    fn random_grid(seed: u64, ncols: usize, nrows: usize) -> Raster<LandClass> {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        let vals = (0..ncols * nrows)
            .map(|_| match rng.random_range(0..10) {
                0 => LandClass::NoData,
                1..=3 => LandClass::Urban,
                4..=7 => LandClass::NonUrban,
                _ => LandClass::Limited,
            })
            .collect();
        Raster::new(
            GridGeometry::new(ncols, nrows, 30.0),
            LandClass::NoData,
            vals,
        )
        .unwrap()
    }

    fn ramp(geom: GridGeometry) -> Raster<f64> {
        let n = geom.len();
        Raster::new(geom, -1.0, (0..n).map(|i| i as f64 / n as f64).collect()).unwrap()
    }

    #[test]
    fn identical_epochs_only_diagonal() {
        let g = random_grid(1, 10, 10);
        let cm = build_change_map(&g, &g).unwrap();
        for (k, &c) in cm.class_counts.iter().enumerate() {
            if ![0, 4, 8].contains(&k) {
                assert_eq!(c, 0);
            }
        }
    }

    #[test]
    fn single_conversion_code() {
        let geom = GridGeometry::new(2, 1, 30.0);
        let a = Raster::new(
            geom,
            LandClass::NoData,
            vec![LandClass::NonUrban, LandClass::Urban],
        )
        .unwrap();
        let b = Raster::new(
            geom,
            LandClass::NoData,
            vec![LandClass::Urban, LandClass::Urban],
        )
        .unwrap();
        let cm = build_change_map(&a, &b).unwrap();
        assert_eq!(cm.raster.values(), &[4, 1]);
    }

    #[test]
    fn change_counts_match_naive_tally() {
        let a = random_grid(2, 10, 10);
        let b = random_grid(3, 10, 10);
        let cm = build_change_map(&a, &b).unwrap();
        let mut tally = [0usize; 9];
        for r in 0..10 {
            for c in 0..10 {
                let (x, y) = (a.get(r, c), b.get(r, c));
                if x != LandClass::NoData && y != LandClass::NoData {
                    let fi = LandClass::VALID.iter().position(|&v| v == x).unwrap();
                    let ti = LandClass::VALID.iter().position(|&v| v == y).unwrap();
                    tally[fi * 3 + ti] += 1;
                    assert_eq!(cm.raster.get(r, c) as usize, fi * 3 + ti + 1);
                } else {
                    assert_eq!(cm.raster.get(r, c), NO_CHANGE_CODE);
                }
            }
        }
        assert_eq!(cm.class_counts, tally);
    }

    #[test]
    fn misaligned_epochs_rejected() {
        let a = random_grid(1, 10, 10);
        let b = random_grid(1, 10, 9);
        assert!(matches!(
            build_change_map(&a, &b),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn cap_inactive_with_single_class_and_phi_one() {
        let mut counts = [0; 9];
        counts[4] = 20;
        let p = capped_proportions(&counts, 1.0);
        assert_eq!(p[4], 1.0);
        assert_eq!(allocate_quota(&p, 7)[4], 7);
    }

    #[test]
    fn cap_redistributes_excess() {
        let mut counts = [0; 9];
        counts[4] = 90;
        counts[0] = 10;
        let p = capped_proportions(&counts, 0.5);
        assert_eq!(p[4], 0.5);
        assert!((p[0] - (0.1 + 0.0625)).abs() < 1e-15);
        for j in [1, 2, 3, 5, 6, 7, 8] {
            assert_eq!(p[j], 0.0625);
        }
    }

    #[test]
    fn quotas_sum_exactly() {
        let w = [0.3, 0.1, 0.0, 0.2, 0.15, 0.05, 0.1, 0.05, 0.05];
        for q in 0..50 {
            assert_eq!(allocate_quota(&w, q).iter().sum::<usize>(), q);
        }
    }

    #[test]
    fn full_sample_reproduces_class_counts() {
        let geom = GridGeometry::new(12, 8, 30.0);
        let mut a = random_grid(4, 12, 8);
        let mut b = random_grid(5, 12, 8);
        for v in a.values_mut().iter_mut().chain(b.values_mut().iter_mut()) {
            if *v == LandClass::NoData {
                *v = LandClass::NonUrban;
            }
        }
        let cm = build_change_map(&a, &b).unwrap();
        let vars = vec![ramp(geom)];
        let policy = SamplingPolicy {
            n_total: geom.len(),
            phi: 1.0,
            seed: 1,
        };
        let out = stratified_sample(&cm, &vars, &["x".into()], &policy).unwrap();
        assert!(!out.truncated);
        assert_eq!(out.set.label_counts(), cm.class_counts);
    }

    #[test]
    fn sample_is_deterministic_and_labels_match_cells() {
        let geom = GridGeometry::new(30, 20, 30.0);
        let a = random_grid(6, 30, 20);
        let b = random_grid(7, 30, 20);
        let cm = build_change_map(&a, &b).unwrap();
        let vars = vec![ramp(geom)];
        let policy = SamplingPolicy {
            n_total: 150,
            phi: 0.3,
            seed: 42,
        };
        let x = stratified_sample(&cm, &vars, &["x".into()], &policy).unwrap();
        let y = stratified_sample(&cm, &vars, &["x".into()], &policy).unwrap();
        assert_eq!(x, y);
        assert!(x.set.len() <= 150);
        for (row, &cell) in x.cells.iter().enumerate() {
            let expected = conversion_code(a.values()[cell], b.values()[cell]).unwrap();
            assert_eq!(x.set.labels()[row], expected);
        }
    }

    #[test]
    fn oversized_request_truncates() {
        let geom = GridGeometry::new(5, 5, 30.0);
        let a = random_grid(8, 5, 5);
        let cm = build_change_map(&a, &a).unwrap();
        let policy = SamplingPolicy {
            n_total: 1000,
            phi: 0.5,
            seed: 0,
        };
        let out = stratified_sample(&cm, &[ramp(geom)], &["x".into()], &policy).unwrap();
        assert!(out.truncated);
    }

    #[test]
    fn phi_must_exceed_one_ninth() {
        let p = SamplingPolicy {
            n_total: 10,
            phi: 0.1,
            seed: 0,
        };
        assert!(p.validate().is_err());
    }
}
