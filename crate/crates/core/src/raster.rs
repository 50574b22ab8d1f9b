//! Grid data model, land-class reclassification, conversion coding and
//! the two normalization schemes used for spatial variables and
//! socio-economic indexes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Georeferencing shared by every raster of one pipeline.
///
/// Rows are stored north to south: row 0 is the top of the map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub ncols: usize,
    pub nrows: usize,
    /// World x of the lower-left corner.
    pub origin_x: f64,
    /// World y of the lower-left corner.
    pub origin_y: f64,
    /// Ground units per cell side.
    pub cellsize: f64,
}

impl GridGeometry {
    pub fn new(ncols: usize, nrows: usize, cellsize: f64) -> Self {
        GridGeometry {
            ncols,
            nrows,
            origin_x: 0.0,
            origin_y: 0.0,
            cellsize,
        }
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.cellsize * self.cellsize
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.ncols, index % self.ncols)
    }

    pub fn ensure_same(&self, other: &GridGeometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{}x{} @ ({}, {}) cell {} vs {}x{} @ ({}, {}) cell {}",
                self.ncols,
                self.nrows,
                self.origin_x,
                self.origin_y,
                self.cellsize,
                other.ncols,
                other.nrows,
                other.origin_x,
                other.origin_y,
                other.cellsize
            )))
        }
    }
}

/// A row-major grid of cell values with a nodata sentinel.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<V> {
    geometry: GridGeometry,
    nodata: V,
    values: Vec<V>,
}

impl<V: Copy + PartialEq> Raster<V> {
    pub fn new(geometry: GridGeometry, nodata: V, values: Vec<V>) -> Result<Self> {
        if geometry.ncols == 0 || geometry.nrows == 0 {
            return Err(Error::InvalidInput(
                "raster must have at least one row and column".into(),
            ));
        }
        if values.len() != geometry.len() {
            return Err(Error::ValueCount {
                expected: geometry.len(),
                actual: values.len(),
            });
        }
        Ok(Raster {
            geometry,
            nodata,
            values,
        })
    }

    pub fn filled(geometry: GridGeometry, value: V, nodata: V) -> Self {
        Raster {
            geometry,
            nodata,
            values: vec![value; geometry.len()],
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn ncols(&self) -> usize {
        self.geometry.ncols
    }

    pub fn nrows(&self) -> usize {
        self.geometry.nrows
    }

    pub fn nodata(&self) -> V {
        self.nodata
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [V] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<V> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> V {
        self.values[self.geometry.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: V) {
        let i = self.geometry.index(row, col);
        self.values[i] = value;
    }

    pub fn is_nodata(&self, index: usize) -> bool {
        self.values[index] == self.nodata
    }

    pub fn row(&self, row: usize) -> &[V] {
        let start = row * self.geometry.ncols;
        &self.values[start..start + self.geometry.ncols]
    }

    pub fn map<U, F>(&self, nodata: U, mut f: F) -> Raster<U>
    where
        U: Copy + PartialEq,
        F: FnMut(V) -> U,
    {
        Raster {
            geometry: self.geometry,
            nodata,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_aligned<U>(&self, other: &Raster<U>) -> Result<()> {
        self.geometry.ensure_same(&other.geometry)
    }
}

/// The reclassified land states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LandClass {
    Urban,
    NonUrban,
    Limited,
    NoData,
}

impl LandClass {
    pub const VALID: [LandClass; 3] = [LandClass::Urban, LandClass::NonUrban, LandClass::Limited];

    /// Position in the conversion coding; `None` for `NoData`.
    pub fn index(self) -> Option<usize> {
        match self {
            LandClass::Urban => Some(0),
            LandClass::NonUrban => Some(1),
            LandClass::Limited => Some(2),
            LandClass::NoData => None,
        }
    }

    pub fn from_index(index: usize) -> Option<LandClass> {
        Self::VALID.get(index).copied()
    }

    /// Integer code used in class raster files (1, 2, 3).
    pub fn file_code(self) -> Option<i64> {
        self.index().map(|i| i as i64 + 1)
    }

    pub fn from_file_code(code: i64) -> Option<LandClass> {
        if (1..=3).contains(&code) {
            Self::from_index((code - 1) as usize)
        } else {
            None
        }
    }

    pub fn is_valid(self) -> bool {
        self != LandClass::NoData
    }
}

impl fmt::Display for LandClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LandClass::Urban => "urban",
            LandClass::NonUrban => "non-urban",
            LandClass::Limited => "limited",
            LandClass::NoData => "nodata",
        };
        f.write_str(s)
    }
}

/// Number of directed conversion types between the three valid classes.
pub const CONVERSION_TYPES: usize = 9;

/// A directed conversion between two valid land classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConversionType {
    pub from: LandClass,
    pub to: LandClass,
}

impl ConversionType {
    pub const NON_URBAN_TO_URBAN: ConversionType = ConversionType {
        from: LandClass::NonUrban,
        to: LandClass::Urban,
    };
    pub const LIMITED_TO_URBAN: ConversionType = ConversionType {
        from: LandClass::Limited,
        to: LandClass::Urban,
    };

    pub fn new(from: LandClass, to: LandClass) -> Result<Self> {
        if !from.is_valid() || !to.is_valid() {
            return Err(Error::InvalidClass(format!(
                "conversion {from} -> {to} involves nodata"
            )));
        }
        Ok(ConversionType { from, to })
    }

    /// `3 * index(from) + index(to) + 1`.
    pub fn code(self) -> u8 {
        let f = self.from.index().expect("validated on construction");
        let t = self.to.index().expect("validated on construction");
        (3 * f + t + 1) as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        if !(1..=9).contains(&code) {
            return Err(Error::InvalidConversionCode(code));
        }
        let k = (code - 1) as usize;
        Ok(ConversionType {
            from: LandClass::from_index(k / 3).unwrap(),
            to: LandClass::from_index(k % 3).unwrap(),
        })
    }
}

pub fn conversion_code(from: LandClass, to: LandClass) -> Result<u8> {
    ConversionType::new(from, to).map(ConversionType::code)
}

/// Per-class cell tallies, indexed Urban, NonUrban, Limited, NoData.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub urban: usize,
    pub non_urban: usize,
    pub limited: usize,
    pub nodata: usize,
}

impl ClassCounts {
    pub fn of(grid: &Raster<LandClass>) -> Self {
        let mut c = ClassCounts::default();
        for &v in grid.values() {
            c.add(v);
        }
        c
    }

    pub fn add(&mut self, class: LandClass) {
        match class {
            LandClass::Urban => self.urban += 1,
            LandClass::NonUrban => self.non_urban += 1,
            LandClass::Limited => self.limited += 1,
            LandClass::NoData => self.nodata += 1,
        }
    }

    pub fn get(&self, class: LandClass) -> usize {
        match class {
            LandClass::Urban => self.urban,
            LandClass::NonUrban => self.non_urban,
            LandClass::Limited => self.limited,
            LandClass::NoData => self.nodata,
        }
    }

    pub fn valid(&self) -> [usize; 3] {
        [self.urban, self.non_urban, self.limited]
    }
}

/// Mapping from raw source category codes to land classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReclassTable {
    map: BTreeMap<i64, LandClass>,
}

/// Source category codes of the eleven-class land cover product.
pub mod source_codes {
    pub const FARMLAND: i64 = 1;
    pub const FOREST: i64 = 2;
    pub const GRASSLAND: i64 = 3;
    pub const SHRUBLAND: i64 = 4;
    pub const WETLAND: i64 = 5;
    pub const WATERBODY: i64 = 6;
    pub const TUNDRA: i64 = 7;
    pub const ARTIFICIAL_SURFACE: i64 = 8;
    pub const BARE_LAND: i64 = 9;
    pub const SNOW_ICE: i64 = 10;
    pub const UNKNOWN: i64 = 11;
}

impl ReclassTable {
    pub fn new(map: BTreeMap<i64, LandClass>) -> Self {
        ReclassTable { map }
    }

    /// Class rasters already coded 1 = urban, 2 = non-urban, 3 = limited.
    pub fn identity() -> Self {
        let map = LandClass::VALID
            .iter()
            .map(|&c| (c.file_code().unwrap(), c))
            .collect();
        ReclassTable { map }
    }

    /// The eleven-category scheme (codes in [`source_codes`]).
    ///
    /// Artificial surfaces become urban; farmland, forest, grassland,
    /// shrubland and bare land become non-urban; wetland, water, tundra and
    /// permanent snow/ice are limited. Unknown places carry no class.
    pub fn eleven_class() -> Self {
        use source_codes::*;
        let mut map = BTreeMap::new();
        map.insert(ARTIFICIAL_SURFACE, LandClass::Urban);
        for c in [FARMLAND, FOREST, GRASSLAND, SHRUBLAND, BARE_LAND] {
            map.insert(c, LandClass::NonUrban);
        }
        for c in [WETLAND, WATERBODY, TUNDRA, SNOW_ICE] {
            map.insert(c, LandClass::Limited);
        }
        map.insert(UNKNOWN, LandClass::NoData);
        ReclassTable { map }
    }

    pub fn get(&self, code: i64) -> Option<LandClass> {
        self.map.get(&code).copied()
    }

    pub fn insert(&mut self, code: i64, class: LandClass) {
        self.map.insert(code, class);
    }
}

/// Map raw category codes to land classes. Nodata cells become `NoData`.
pub fn reclassify<T: Scalar>(
    source: &Raster<T>,
    table: &ReclassTable,
) -> Result<(Raster<LandClass>, ClassCounts)> {
    let mut values = Vec::with_capacity(source.len());
    let mut counts = ClassCounts::default();
    for (cell, &v) in source.values().iter().enumerate() {
        let class = if v == source.nodata() {
            LandClass::NoData
        } else {
            let code = v.round();
            let mapped = if code == v {
                code.to_i64().and_then(|c| table.get(c))
            } else {
                None
            };
            mapped.ok_or_else(|| Error::UnmappedCode {
                code: v.to_string(),
                cell,
            })?
        };
        counts.add(class);
        values.push(class);
    }
    Ok((
        Raster::new(*source.geometry(), LandClass::NoData, values)?,
        counts,
    ))
}

/// Encode a class raster with file codes 1..3 and the given nodata value.
pub fn class_to_numeric<T: Scalar>(grid: &Raster<LandClass>, nodata: T) -> Raster<T> {
    grid.map(nodata, |c| match c.file_code() {
        Some(code) => T::of(code as f64),
        None => nodata,
    })
}

/// Boolean mask (`1` where the source code is in `codes`, else `0`; nodata stays nodata).
pub fn flag_codes<T: Scalar>(source: &Raster<T>, codes: &[i64]) -> Raster<T> {
    let nodata = source.nodata();
    source.map(nodata, |v| {
        if v == nodata {
            nodata
        } else if v.to_i64().is_some_and(|c| codes.contains(&c)) {
            T::one()
        } else {
            T::zero()
        }
    })
}

/// Parameters of the piecewise three-sigma normalization.
///
/// `sigma` is the mean absolute deviation `Σ|μ - x| / N`, the quantity the
/// normalization formula actually uses, not the root-mean-square deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats<T> {
    pub mu: T,
    pub sigma: T,
    pub x1: T,
    pub x2: T,
}

impl<T: Scalar> NormalizationStats<T> {
    /// Estimate from a set of valid values.
    pub fn fit(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateRange("no valid values".into()));
        }
        let n = T::of_usize(values.len());
        let mu = values.iter().copied().sum::<T>() / n;
        let sigma = values.iter().map(|&x| (mu - x).abs()).sum::<T>() / n;
        let (min, max) = values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        let three = T::of(3.0);
        let x1 = if mu - three * sigma > min {
            mu - three * sigma
        } else {
            min
        };
        let x2 = if mu + three * sigma < max {
            mu + three * sigma
        } else {
            max
        };
        if x1 >= x2 {
            return Err(Error::DegenerateRange(format!(
                "clip bounds collapse to {x1}; values are constant"
            )));
        }
        Ok(NormalizationStats { mu, sigma, x1, x2 })
    }

    pub fn apply(&self, x: T) -> T {
        if x < self.x1 {
            T::zero()
        } else if x > self.x2 {
            T::one()
        } else {
            (x - self.x1) / (self.x2 - self.x1)
        }
    }

    /// Apply to every valid cell of a raster, preserving nodata.
    pub fn apply_raster(&self, values: &Raster<T>) -> Raster<T> {
        let nodata = values.nodata();
        values.map(nodata, |x| if x == nodata { nodata } else { self.apply(x) })
    }
}

/// Normalize a numeric raster into [0, 1] with the clipped three-sigma rule.
///
/// Returns the statistics so the same transform can be reused on later epochs.
pub fn normalize_sigma<T: Scalar>(
    values: &Raster<T>,
) -> Result<(Raster<T>, NormalizationStats<T>)> {
    let valid: Vec<T> = values
        .values()
        .iter()
        .copied()
        .filter(|&x| x != values.nodata())
        .collect();
    let stats = NormalizationStats::fit(&valid)?;
    Ok((stats.apply_raster(values), stats))
}

/// Min-max normalization of a vector into [0, 1].
pub fn normalize_minmax<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    let (min, max) = values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if values.is_empty() || min >= max {
        return Err(Error::DegenerateRange(
            "min-max normalization needs at least two distinct values".into(),
        ));
    }
    let span = max - min;
    Ok(values.iter().map(|&x| (x - min) / span).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(ncols: usize, nrows: usize) -> GridGeometry {
        GridGeometry::new(ncols, nrows, 30.0)
    }

    #[test]
    fn raster_rejects_wrong_length() {
        let err = Raster::new(geom(2, 2), -1.0, vec![0.0; 3]).unwrap_err();
        assert!(matches!(
            err,
            Error::ValueCount {
                expected: 4,
                actual: 3
            }
        ));
    }

    #[test]
    fn geometry_mismatch_is_reported() {
        let a = Raster::filled(geom(2, 2), 0.0f64, -1.0);
        let b = Raster::filled(geom(3, 2), 0.0f64, -1.0);
        assert!(matches!(
            a.ensure_aligned(&b),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn eleven_class_reclassification() {
        use source_codes::*;
        let src = Raster::new(
            geom(4, 1),
            -9999.0f64,
            vec![
                ARTIFICIAL_SURFACE as f64,
                WETLAND as f64,
                -9999.0,
                FARMLAND as f64,
            ],
        )
        .unwrap();
        let (grid, counts) = reclassify(&src, &ReclassTable::eleven_class()).unwrap();
        assert_eq!(
            grid.values(),
            &[
                LandClass::Urban,
                LandClass::Limited,
                LandClass::NoData,
                LandClass::NonUrban
            ]
        );
        assert_eq!(counts.urban, 1);
        assert_eq!(counts.nodata, 1);
    }

    #[test]
    fn eleven_class_table_is_total() {
        let t = ReclassTable::eleven_class();
        for code in 1..=11 {
            assert!(t.get(code).is_some(), "code {code}");
        }
    }

    #[test]
    fn unmapped_code_names_cell() {
        let src = Raster::new(geom(3, 1), -1.0f64, vec![1.0, 2.0, 42.0]).unwrap();
        match reclassify(&src, &ReclassTable::identity()) {
            Err(Error::UnmappedCode { code, cell }) => {
                assert_eq!(code, "42");
                assert_eq!(cell, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conversion_code_examples() {
        use LandClass::*;
        assert_eq!(conversion_code(Urban, Urban).unwrap(), 1);
        assert_eq!(conversion_code(NonUrban, Urban).unwrap(), 4);
        assert_eq!(conversion_code(Limited, Limited).unwrap(), 9);
        assert!(matches!(
            conversion_code(NoData, Urban),
            Err(Error::InvalidClass(_))
        ));
        assert!(ConversionType::from_code(0).is_err());
        assert!(ConversionType::from_code(10).is_err());
    }

    #[test]
    fn conversion_code_is_bijective() {
        let mut seen = [false; 9];
        for from in LandClass::VALID {
            for to in LandClass::VALID {
                let code = conversion_code(from, to).unwrap();
                assert!(!seen[code as usize - 1]);
                seen[code as usize - 1] = true;
                let back = ConversionType::from_code(code).unwrap();
                assert_eq!((back.from, back.to), (from, to));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn sigma_normalization_worked_example() {
        let r = Raster::new(geom(6, 1), -1.0f64, vec![1.0, 2.0, 3.0, 4.0, 5.0, -1.0]).unwrap();
        let (out, s) = normalize_sigma(&r).unwrap();
        assert_eq!(s.mu, 3.0);
        assert_eq!(s.sigma, 1.2);
        assert_eq!(s.x1, 1.0);
        assert_eq!(s.x2, 5.0);
        assert_eq!(out.values(), &[0.0, 0.25, 0.5, 0.75, 1.0, -1.0]);
        assert_eq!(s.apply(0.0), 0.0);
        assert_eq!(s.apply(9.0), 1.0);
    }

    #[test]
    fn sigma_clip_bounds_inside_range() {
        // one far outlier: mu - 3 sigma stays above the minimum
        let mut v = vec![10.0f64; 50];
        v.push(1000.0);
        v.push(0.0);
        let s = NormalizationStats::fit(&v).unwrap();
        assert!(s.x2 < 1000.0);
        assert_eq!(s.apply(1000.0), 1.0);
    }

    #[test]
    fn sigma_rejects_constant() {
        let r = Raster::filled(geom(3, 3), 4.0f32, -1.0);
        assert!(matches!(
            normalize_sigma(&r),
            Err(Error::DegenerateRange(_))
        ));
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(
            normalize_minmax(&[0.0, 5.0, 10.0]).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert!(normalize_minmax(&[2.0f64, 2.0]).is_err());
        assert!(normalize_minmax::<f64>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn sigma_output_in_unit_interval_and_monotone(
            v in prop::collection::vec(-1e6f64..1e6, 2..200)
        ) {
            prop_assume!(v.iter().any(|&x| x != v[0]));
            let s = NormalizationStats::fit(&v).unwrap();
            let mut pairs: Vec<(f64, f64)> = v.iter().map(|&x| (x, s.apply(x))).collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for w in pairs.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
            for (_, y) in pairs {
                prop_assert!((0.0..=1.0).contains(&y));
            }
        }

        #[test]
        fn stored_stats_reproduce_normalization(
            v in prop::collection::vec(0f32..100.0, 4..64)
        ) {
            prop_assume!(v.iter().any(|&x| x != v[0]));
            let r = Raster::new(geom(v.len(), 1), -1.0f32, v.clone()).unwrap();
            let (out, stats) = normalize_sigma(&r).unwrap();
            let again = stats.apply_raster(&r);
            prop_assert_eq!(out.values(), again.values());
        }
    }
}
