//! Binary PPM (P6) map images.
//!
//! Class palette: urban `#d7301f`, non-urban `#e6d7a3`, limited `#3a7dc9`,
//! nodata `#000000`. Ratio rasters render as grayscale from black (0) to
//! white (1); nodata is drawn in magenta `#ff00ff`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{LandClass, Raster};
use crate::scalar::{clamp_unit, Scalar};

pub type Rgb = [u8; 3];

pub const URBAN_COLOR: Rgb = [0xd7, 0x30, 0x1f];
pub const NON_URBAN_COLOR: Rgb = [0xe6, 0xd7, 0xa3];
pub const LIMITED_COLOR: Rgb = [0x3a, 0x7d, 0xc9];
pub const NODATA_COLOR: Rgb = [0, 0, 0];
pub const RATIO_NODATA_COLOR: Rgb = [0xff, 0x00, 0xff];

pub fn class_color(class: LandClass) -> Rgb {
    match class {
        LandClass::Urban => URBAN_COLOR,
        LandClass::NonUrban => NON_URBAN_COLOR,
        LandClass::Limited => LIMITED_COLOR,
        LandClass::NoData => NODATA_COLOR,
    }
}

fn encode(ncols: usize, nrows: usize, pixels: impl Iterator<Item = Rgb>) -> Vec<u8> {
    let mut out = format!("P6\n{ncols} {nrows}\n255\n").into_bytes();
    out.reserve(ncols * nrows * 3);
    for p in pixels {
        out.extend_from_slice(&p);
    }
    out
}

pub fn class_ppm(grid: &Raster<LandClass>) -> Vec<u8> {
    encode(
        grid.ncols(),
        grid.nrows(),
        grid.values().iter().map(|&c| class_color(c)),
    )
}

/// Grayscale image of values in [0, 1]; values outside are clamped.
pub fn ratio_ppm<T: Scalar>(raster: &Raster<T>) -> Vec<u8> {
    let nodata = raster.nodata();
    encode(
        raster.ncols(),
        raster.nrows(),
        raster.values().iter().map(|&v| {
            if v == nodata || v.is_nan() {
                RATIO_NODATA_COLOR
            } else {
                let g = (clamp_unit(v).to_f64_lossless() * 255.0).round() as u8;
                [g, g, g]
            }
        }),
    )
}

fn write_bytes(bytes: &[u8], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn render_classes(grid: &Raster<LandClass>, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(&class_ppm(grid), path.as_ref())
}

pub fn render_ratios<T: Scalar>(raster: &Raster<T>, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(&ratio_ppm(raster), path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridGeometry;

    #[test]
    fn single_urban_pixel() {
        let g = Raster::new(
            GridGeometry::new(1, 1, 30.0),
            LandClass::NoData,
            vec![LandClass::Urban],
        )
        .unwrap();
        let bytes = class_ppm(&g);
        assert_eq!(&bytes[..11], b"P6\n1 1\n255\n");
        assert_eq!(&bytes[11..], &URBAN_COLOR);
    }

    #[test]
    fn checkerboard_uses_three_colors() {
        use LandClass::*;
        let vals: Vec<LandClass> = (0..9).map(|i| [Urban, NonUrban, Limited][i % 3]).collect();
        let g = Raster::new(GridGeometry::new(3, 3, 30.0), NoData, vals).unwrap();
        let bytes = class_ppm(&g);
        let mut colors: Vec<Rgb> = bytes[11..].chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), 3);
        assert_eq!(class_ppm(&g), bytes);
    }

    #[test]
    fn ratio_extremes() {
        let r = Raster::new(GridGeometry::new(3, 1, 30.0), -1.0, vec![0.0, 1.0, -1.0]).unwrap();
        let bytes = ratio_ppm(&r);
        assert_eq!(&bytes[11..], &[0, 0, 0, 255, 255, 255, 255, 0, 255]);
    }

    #[test]
    fn unwritable_path_errors() {
        let g = Raster::new(
            GridGeometry::new(1, 1, 30.0),
            LandClass::NoData,
            vec![LandClass::Urban],
        )
        .unwrap();
        assert!(render_classes(&g, "/nonexistent-dir/x/y.ppm").is_err());
    }
}
