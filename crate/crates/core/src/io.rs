//! File formats: ASCII grids, CSV tables and the binary forest container.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{DecisionTree, Forest, ForestParams, Node};
use crate::raster::{GridGeometry, LandClass, NormalizationStats, Raster};
use crate::region::{AdjacencyGraph, IndexTable, RegionPartition};
use crate::sample::TrainingSet;
use crate::scalar::Scalar;

/// Nodata value written for class rasters.
pub const CLASS_NODATA: f64 = -9999.0;

const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "NODATA_value",
];

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Read an ESRI ASCII grid.
///
/// The six header keys must appear in order (case-insensitive), followed by
/// exactly `nrows` lines of `ncols` values, northernmost row first.
pub fn load_ascii_grid<T: Scalar>(path: impl AsRef<Path>) -> Result<Raster<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut header = [0f64; 6];
    let mut lines = reader.lines().enumerate();
    for (k, key) in HEADER_KEYS.iter().enumerate() {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, k + 1, format!("missing header key `{key}`")))?;
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let mut parts = line.split_whitespace();
        let found = parts.next().unwrap_or("");
        if !found.eq_ignore_ascii_case(key) {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected header key `{key}`, found `{found}`"),
            ));
        }
        let value = parts
            .next()
            .ok_or_else(|| Error::parse(path, lineno, format!("header `{key}` has no value")))?;
        header[k] = value.parse::<f64>().map_err(|_| {
            Error::parse(
                path,
                lineno,
                format!("header `{key}` value `{value}` is not numeric"),
            )
        })?;
    }
    let dim = |v: f64, lineno: usize, key: &str| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::parse(
                path,
                lineno,
                format!("`{key}` must be a positive integer"),
            ))
        }
    };
    let ncols = dim(header[0], 1, "ncols")?;
    let nrows = dim(header[1], 2, "nrows")?;
    if !(header[4] > 0.0) {
        return Err(Error::parse(path, 5, "cellsize must be positive"));
    }
    let geometry = GridGeometry {
        ncols,
        nrows,
        origin_x: header[2],
        origin_y: header[3],
        cellsize: header[4],
    };
    let nodata = T::of(header[5]);
    let mut values = Vec::with_capacity(ncols * nrows);
    let mut rows = 0;
    let mut last_line = HEADER_KEYS.len();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        last_line = lineno;
        if line.trim().is_empty() {
            continue;
        }
        if rows == nrows {
            return Err(Error::parse(
                path,
                lineno,
                format!("row count exceeds nrows = {nrows}"),
            ));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("non-numeric value `{tok}`")))?;
            values.push(T::of(v));
        }
        let got = values.len() - before;
        if got != ncols {
            return Err(Error::parse(
                path,
                lineno,
                format!("row has {got} values, expected ncols = {ncols}"),
            ));
        }
        rows += 1;
    }
    if rows != nrows {
        return Err(Error::parse(
            path,
            last_line,
            format!("found {rows} rows, expected nrows = {nrows}"),
        ));
    }
    Raster::new(geometry, nodata, values)
}

/// Write an ESRI ASCII grid. Values use the shortest representation that
/// reads back to the same number.
pub fn save_ascii_grid<T: Scalar>(raster: &Raster<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let g = raster.geometry();
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "ncols {}", g.ncols)?;
        writeln!(w, "nrows {}", g.nrows)?;
        writeln!(w, "xllcorner {}", g.origin_x)?;
        writeln!(w, "yllcorner {}", g.origin_y)?;
        writeln!(w, "cellsize {}", g.cellsize)?;
        writeln!(w, "NODATA_value {}", raster.nodata())?;
        for r in 0..g.nrows {
            let mut first = true;
            for v in raster.row(r) {
                if !first {
                    w.write_all(b" ")?;
                }
                first = false;
                write!(w, "{v}")?;
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Read a class raster coded 1 = urban, 2 = non-urban, 3 = limited.
pub fn load_class_grid(path: impl AsRef<Path>) -> Result<Raster<LandClass>> {
    let raw: Raster<f64> = load_ascii_grid(path)?;
    let (grid, _) = crate::raster::reclassify(&raw, &crate::raster::ReclassTable::identity())?;
    Ok(grid)
}

pub fn save_class_grid(grid: &Raster<LandClass>, path: impl AsRef<Path>) -> Result<()> {
    save_ascii_grid(&crate::raster::class_to_numeric(grid, CLASS_NODATA), path)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn parse_cell<T: Scalar>(path: &Path, line: usize, tok: &str) -> Result<T> {
    if tok.is_empty() {
        return Err(Error::parse(path, line, "missing value"));
    }
    tok.parse::<f64>()
        .map(T::of)
        .map_err(|_| Error::parse(path, line, format!("non-numeric value `{tok}`")))
}

/// Socio-economic table: `unit_id, <index columns...>`.
pub fn load_index_table<T: Scalar>(path: impl AsRef<Path>) -> Result<IndexTable<T>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "unit_id" {
        return Err(Error::parse(
            path,
            1,
            "expected header `unit_id,<index>,<index>,...`",
        ));
    }
    let names: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != headers.len() {
            return Err(Error::parse(
                path,
                line,
                format!("{} fields, expected {}", rec.len(), headers.len()),
            ));
        }
        ids.push(rec[0].to_string());
        rows.push(
            rec.iter()
                .skip(1)
                .map(|t| parse_cell(path, line, t))
                .collect::<Result<Vec<T>>>()?,
        );
    }
    IndexTable::new(ids, names, rows)
}

pub fn save_index_table<T: Scalar>(table: &IndexTable<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let mut header = vec!["unit_id".to_string()];
    header.extend(table.index_names().iter().cloned());
    w.write_record(&header)?;
    for (id, row) in table.unit_ids().iter().zip(table.values()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Adjacency edge list: `unit_a, unit_b`.
pub fn load_adjacency(path: impl AsRef<Path>) -> Result<AdjacencyGraph> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "unit_a" || &headers[1] != "unit_b" {
        return Err(Error::parse(path, 1, "expected header `unit_a,unit_b`"));
    }
    let mut g = AdjacencyGraph::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        g.add_edge(&rec[0], &rec[1])
            .map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
    }
    Ok(g)
}

pub fn save_adjacency(graph: &AdjacencyGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["unit_a", "unit_b"])?;
    for (a, b) in graph.edges() {
        w.write_record([a, b])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Partition table: `unit_id, cluster, region`. The explained variance is
/// not stored and reads back as NaN.
pub fn load_partition(path: impl AsRef<Path>) -> Result<RegionPartition> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["unit_id", "cluster", "region"] {
        return Err(Error::parse(
            path,
            1,
            "expected header `unit_id,cluster,region`",
        ));
    }
    let mut p = RegionPartition {
        unit_ids: Vec::new(),
        cluster_of: Vec::new(),
        region_of: Vec::new(),
        explained_variance: f64::NAN,
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let label = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|_| Error::parse(path, i + 2, format!("`{}` is not a label", &rec[k])))
        };
        p.cluster_of.push(label(1)?);
        p.region_of.push(label(2)?);
        p.unit_ids.push(rec[0].to_string());
    }
    Ok(p)
}

/// Training set: feature columns followed by `label`.
pub fn save_training_set<T: Scalar>(set: &TrainingSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = set.feature_names().to_vec();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, label) in set.features().iter().zip(set.labels()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_training_set<T: Scalar>(path: impl AsRef<Path>) -> Result<TrainingSet<T>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || &headers[headers.len() - 1] != "label" {
        return Err(Error::parse(path, 1, "last column must be `label`"));
    }
    let s = headers.len() - 1;
    let names: Vec<String> = headers.iter().take(s).map(String::from).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != headers.len() {
            return Err(Error::parse(
                path,
                line,
                format!("{} fields, expected {}", rec.len(), headers.len()),
            ));
        }
        features.push(
            rec.iter()
                .take(s)
                .map(|t| parse_cell(path, line, t))
                .collect::<Result<Vec<T>>>()?,
        );
        let label: u8 = rec[s].parse().map_err(|_| {
            Error::parse(path, line, format!("label `{}` is not an integer", &rec[s]))
        })?;
        labels.push(label);
    }
    TrainingSet::new(names, features, labels)
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsRow {
    variable: String,
    mu: f64,
    sigma: f64,
    x1: f64,
    x2: f64,
}

pub fn save_normalization<T: Scalar>(
    stats: &[(String, NormalizationStats<T>)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for (name, s) in stats {
        w.serialize(StatsRow {
            variable: name.clone(),
            mu: s.mu.to_f64_lossless(),
            sigma: s.sigma.to_f64_lossless(),
            x1: s.x1.to_f64_lossless(),
            x2: s.x2.to_f64_lossless(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_normalization<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<Vec<(String, NormalizationStats<T>)>> {
    let mut rdr = csv_reader(path.as_ref())?;
    rdr.deserialize()
        .map(|r| {
            let r: StatsRow = r?;
            Ok((
                r.variable,
                NormalizationStats {
                    mu: T::of(r.mu),
                    sigma: T::of(r.sigma),
                    x1: T::of(r.x1),
                    x2: T::of(r.x2),
                },
            ))
        })
        .collect()
}

/// Write any serializable rows as CSV with a header row.
pub fn write_csv_rows<R: Serialize>(
    rows: &[R],
    header: &[&str],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const FOREST_MAGIC: &[u8; 8] = b"LANDCARF";
const FOREST_VERSION: u32 = 1;
const TAG_LEAF: u8 = 0;
const TAG_SPLIT: u8 = 1;

/// Serialize a forest to the little-endian binary container.
///
/// Layout: magic `LANDCARF`, u32 version, u32 feature count and
/// length-prefixed UTF-8 names, u64 training rows, parameters (u32 trees,
/// f64 sample fraction, u32 max depth, u32 min leaf, u32 features per node
/// with 0 meaning default, u64 seed), u32 tree count, then per tree a u32
/// node count, the nodes (u8 tag; leaf: u8 class; split: u32 feature, f64
/// threshold, u32 left, u32 right) and a u32-counted list of u32 OOB rows.
pub fn write_forest<T: Scalar, W: Write>(forest: &Forest<T>, mut w: W) -> std::io::Result<()> {
    w.write_all(FOREST_MAGIC)?;
    w.write_u32::<LittleEndian>(FOREST_VERSION)?;
    w.write_u32::<LittleEndian>(forest.n_features() as u32)?;
    for name in forest.feature_names() {
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
    }
    w.write_u64::<LittleEndian>(forest.n_train_rows() as u64)?;
    let p = forest.params();
    w.write_u32::<LittleEndian>(p.m_trees as u32)?;
    w.write_f64::<LittleEndian>(p.sample_fraction)?;
    w.write_u32::<LittleEndian>(p.max_depth as u32)?;
    w.write_u32::<LittleEndian>(p.min_leaf as u32)?;
    w.write_u32::<LittleEndian>(p.features_per_node.unwrap_or(0) as u32)?;
    w.write_u64::<LittleEndian>(p.seed)?;
    w.write_u32::<LittleEndian>(forest.n_trees() as u32)?;
    for (tree, oob) in forest.trees().iter().zip(forest.oob_indices()) {
        w.write_u32::<LittleEndian>(tree.nodes().len() as u32)?;
        for node in tree.nodes() {
            match *node {
                Node::Leaf { class } => {
                    w.write_u8(TAG_LEAF)?;
                    w.write_u8(class)?;
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    w.write_u8(TAG_SPLIT)?;
                    w.write_u32::<LittleEndian>(feature as u32)?;
                    w.write_f64::<LittleEndian>(threshold.to_f64_lossless())?;
                    w.write_u32::<LittleEndian>(left as u32)?;
                    w.write_u32::<LittleEndian>(right as u32)?;
                }
            }
        }
        w.write_u32::<LittleEndian>(oob.len() as u32)?;
        for &r in oob {
            w.write_u32::<LittleEndian>(r)?;
        }
    }
    w.flush()
}

fn fmt_err(e: std::io::Error) -> Error {
    Error::Format(format!("truncated or unreadable forest: {e}"))
}

pub fn read_forest<T: Scalar, R: Read>(mut r: R) -> Result<Forest<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(fmt_err)?;
    if &magic != FOREST_MAGIC {
        return Err(Error::Format("bad magic header".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(fmt_err)?;
    if version != FOREST_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n_features = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
    let mut names = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        let len = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(fmt_err)?;
        names.push(
            String::from_utf8(buf)
                .map_err(|_| Error::Format("feature name is not UTF-8".into()))?,
        );
    }
    let n_train_rows = r.read_u64::<LittleEndian>().map_err(fmt_err)? as usize;
    let m_trees = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
    let sample_fraction = r.read_f64::<LittleEndian>().map_err(fmt_err)?;
    let max_depth = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
    let min_leaf = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
    let fpn = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
    let seed = r.read_u64::<LittleEndian>().map_err(fmt_err)?;
    let params = ForestParams {
        m_trees,
        sample_fraction,
        max_depth,
        min_leaf,
        features_per_node: (fpn > 0).then_some(fpn),
        seed,
    };
    let n_trees = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
    let mut trees = Vec::with_capacity(n_trees);
    let mut oobs = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let node = match r.read_u8().map_err(fmt_err)? {
                TAG_LEAF => Node::Leaf {
                    class: r.read_u8().map_err(fmt_err)?,
                },
                TAG_SPLIT => Node::Split {
                    feature: r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize,
                    threshold: T::of(r.read_f64::<LittleEndian>().map_err(fmt_err)?),
                    left: r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize,
                    right: r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize,
                },
                t => return Err(Error::Format(format!("unknown node tag {t}"))),
            };
            nodes.push(node);
        }
        trees.push(DecisionTree::from_nodes(nodes)?);
        let n_oob = r.read_u32::<LittleEndian>().map_err(fmt_err)? as usize;
        let oob = (0..n_oob)
            .map(|_| r.read_u32::<LittleEndian>().map_err(fmt_err))
            .collect::<Result<Vec<u32>>>()?;
        oobs.push(oob);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(fmt_err)? != 0 {
        return Err(Error::Format("trailing bytes after forest".into()));
    }
    Forest::from_parts(trees, oobs, names, n_train_rows, params)
}

pub fn save_forest<T: Scalar>(forest: &Forest<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_forest(forest, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn load_forest<T: Scalar>(path: impl AsRef<Path>) -> Result<Forest<T>> {
    read_forest(BufReader::new(open(path.as_ref())?))
}

/// Human-readable dump of every tree.
pub fn dump_forest_text<T: Scalar, W: Write>(forest: &Forest<T>, mut w: W) -> std::io::Result<()> {
    let p = forest.params();
    writeln!(w, "forest v{FOREST_VERSION}")?;
    writeln!(w, "features {}", forest.feature_names().join(" "))?;
    writeln!(
        w,
        "params trees={} sample_fraction={} max_depth={} min_leaf={} seed={}",
        p.m_trees, p.sample_fraction, p.max_depth, p.min_leaf, p.seed
    )?;
    for (t, (tree, oob)) in forest.trees().iter().zip(forest.oob_indices()).enumerate() {
        writeln!(w, "tree {t} nodes={} oob={}", tree.nodes().len(), oob.len())?;
        for (i, node) in tree.nodes().iter().enumerate() {
            match node {
                Node::Leaf { class } => writeln!(w, "  {i} leaf class={class}")?,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => writeln!(
                    w,
                    "  {i} split {} <= {threshold} ? {left} : {right}",
                    forest.feature_names()[*feature]
                )?,
            }
        }
    }
    w.flush()
}
