//! Regionalization of administrative units into homogeneous development
//! regions.
//!
//! Indexes are min-max normalized per column, summarized by a two-component
//! PCA, clustered agglomeratively with the centroid method under a Pearson
//! correlation metric, and finally split so that every region is a connected
//! set of units in the adjacency graph.
//!
//! Correlation between two-component score vectors is always ±1, so the
//! clustering metric is evaluated on the full normalized index vectors. The
//! PCA result is kept as diagnostics (scores and explained variance).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::normalize_minmax;
use crate::scalar::Scalar;

/// Socio-economic indexes per administrative unit.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexTable<T> {
    unit_ids: Vec<String>,
    index_names: Vec<String>,
    /// Row-major, one row per unit.
    values: Vec<Vec<T>>,
}

impl<T: Scalar> IndexTable<T> {
    pub fn new(
        unit_ids: Vec<String>,
        index_names: Vec<String>,
        values: Vec<Vec<T>>,
    ) -> Result<Self> {
        if unit_ids.len() < 3 {
            return Err(Error::InvalidInput(
                "index table needs at least 3 units".into(),
            ));
        }
        if index_names.len() < 2 {
            return Err(Error::InvalidInput(
                "index table needs at least 2 indexes".into(),
            ));
        }
        if values.len() != unit_ids.len() {
            return Err(Error::InvalidInput(format!(
                "{} units but {} value rows",
                unit_ids.len(),
                values.len()
            )));
        }
        for (id, row) in unit_ids.iter().zip(&values) {
            if row.len() != index_names.len() {
                return Err(Error::InvalidInput(format!(
                    "unit {id}: {} values for {} indexes",
                    row.len(),
                    index_names.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "unit {id}: missing or non-finite value"
                )));
            }
        }
        let distinct: BTreeSet<&String> = unit_ids.iter().collect();
        if distinct.len() != unit_ids.len() {
            return Err(Error::InvalidInput("duplicate unit id".into()));
        }
        Ok(IndexTable {
            unit_ids,
            index_names,
            values,
        })
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn index_names(&self) -> &[String] {
        &self.index_names
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    /// Each index column min-max scaled into [0, 1].
    pub fn normalized(&self) -> Result<Vec<Vec<T>>> {
        let n = self.n_units();
        let mut out = vec![vec![T::zero(); self.index_names.len()]; n];
        for (j, name) in self.index_names.iter().enumerate() {
            let col: Vec<T> = self.values.iter().map(|r| r[j]).collect();
            let scaled = normalize_minmax(&col)
                .map_err(|_| Error::DegenerateRange(format!("index `{name}` is constant")))?;
            for (row, v) in out.iter_mut().zip(scaled) {
                row[j] = v;
            }
        }
        Ok(out)
    }
}

/// Undirected contiguity between units.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdjacencyGraph {
    edges: BTreeSet<(String, String)>,
}

impl AdjacencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_edge(&mut self, a: &str, b: &str) -> Result<()> {
        if a == b {
            return Err(Error::InvalidInput(format!("self-loop on unit {a}")));
        }
        let (x, y) = if a < b { (a, b) } else { (b, a) };
        self.edges.insert((x.to_string(), y.to_string()));
        Ok(())
    }

    pub fn from_edges<'a, I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut g = AdjacencyGraph::new();
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    /// Check every endpoint against the known unit ids.
    pub fn validate(&self, unit_ids: &[String]) -> Result<()> {
        let known: BTreeSet<&str> = unit_ids.iter().map(String::as_str).collect();
        for (a, b) in self.edges() {
            for u in [a, b] {
                if !known.contains(u) {
                    return Err(Error::InvalidInput(format!(
                        "adjacency references unknown unit {u}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Final assignment of units to clusters and contiguous regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub unit_ids: Vec<String>,
    /// Cluster label (1-based) per unit.
    pub cluster_of: Vec<usize>,
    /// Region label (1-based) per unit.
    pub region_of: Vec<usize>,
    pub explained_variance: f64,
}

impl RegionPartition {
    pub fn n_clusters(&self) -> usize {
        self.cluster_of.iter().copied().max().unwrap_or(0)
    }

    pub fn n_regions(&self) -> usize {
        self.region_of.iter().copied().max().unwrap_or(0)
    }

    pub fn region_of_unit(&self, unit: &str) -> Option<usize> {
        self.unit_ids
            .iter()
            .position(|u| u == unit)
            .map(|i| self.region_of[i])
    }

    pub fn units_in_region(&self, region: usize) -> Vec<&str> {
        self.unit_ids
            .iter()
            .zip(&self.region_of)
            .filter(|(_, &r)| r == region)
            .map(|(u, _)| u.as_str())
            .collect()
    }
}

/// Projection onto the two leading principal axes.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaSummary<T> {
    /// units × 2
    pub scores: Vec<[T; 2]>,
    /// Leading two unit eigenvectors of the covariance (one per axis).
    pub axes: [Vec<T>; 2],
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<T>,
    pub explained_variance: T,
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues (descending) and the matching eigenvectors as columns
/// of `vectors[row][col]`.
pub(crate) fn symmetric_eigen<T: Scalar>(matrix: &[Vec<T>]) -> (Vec<T>, Vec<Vec<T>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<T>> = matrix.to_vec();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { T::one() } else { T::zero() })
                .collect()
        })
        .collect();
    let two = T::of(2.0);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: T = (0..n).map(|i| a[i][i] * a[i][i]).sum::<T>() + off;
        if off <= T::epsilon() * T::epsilon() * scale || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (two * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j][j]
            .partial_cmp(&a[i][i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n)
        .map(|r| order.iter().map(|&c| v[r][c]).collect())
        .collect();
    (values, vectors)
}

/// PCA of an already normalized units × indexes matrix, keeping two axes.
///
/// Each axis is sign-fixed so its largest-magnitude loading is positive.
pub fn pca_top2<T: Scalar>(normalized: &[Vec<T>]) -> Result<PcaSummary<T>> {
    let n = normalized.len();
    let p = normalized.first().map_or(0, Vec::len);
    if n < 2 || p < 2 {
        return Err(Error::InsufficientVariance(
            "PCA needs at least 2 units and 2 indexes".into(),
        ));
    }
    let nt = T::of_usize(n);
    let means: Vec<T> = (0..p)
        .map(|j| normalized.iter().map(|r| r[j]).sum::<T>() / nt)
        .collect();
    let centered: Vec<Vec<T>> = normalized
        .iter()
        .map(|r| r.iter().zip(&means).map(|(&x, &m)| x - m).collect())
        .collect();
    let denom = T::of_usize(n - 1);
    let cov: Vec<Vec<T>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| centered.iter().map(|r| r[i] * r[j]).sum::<T>() / denom)
                .collect()
        })
        .collect();
    let (mut eigenvalues, vectors) = symmetric_eigen(&cov);
    // round-off can leave tiny negative eigenvalues on a PSD matrix
    for l in eigenvalues.iter_mut() {
        if *l < T::zero() {
            *l = T::zero();
        }
    }
    let total: T = eigenvalues.iter().copied().sum();
    let tol = T::epsilon() * T::of(64.0) * total.max(T::one());
    if total <= tol {
        return Err(Error::InsufficientVariance(
            "all eigenvalues are zero".into(),
        ));
    }
    let mut axes: [Vec<T>; 2] = [Vec::new(), Vec::new()];
    for (k, axis) in axes.iter_mut().enumerate() {
        let mut col: Vec<T> = vectors.iter().map(|row| row[k]).collect();
        let pivot =
            col.iter().copied().fold(
                T::zero(),
                |best, x| if x.abs() > best.abs() { x } else { best },
            );
        if pivot < T::zero() {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        *axis = col;
    }
    let second_is_null = eigenvalues[1] <= tol;
    let scores = centered
        .iter()
        .map(|r| {
            let s0 = r.iter().zip(&axes[0]).map(|(&x, &a)| x * a).sum();
            let s1 = if second_is_null {
                T::zero()
            } else {
                r.iter().zip(&axes[1]).map(|(&x, &a)| x * a).sum()
            };
            [s0, s1]
        })
        .collect();
    let explained_variance = (eigenvalues[0] + eigenvalues[1]) / total;
    Ok(PcaSummary {
        scores,
        axes,
        eigenvalues,
        explained_variance: explained_variance.min(T::one()),
    })
}

/// Pearson correlation; `None` when either vector has zero variance.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let n = T::of_usize(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let mut sab = T::zero();
    let mut saa = T::zero();
    let mut sbb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa <= T::zero() || sbb <= T::zero() {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Agglomerative centroid clustering with distance `1 - r` (Pearson r).
///
/// Each cluster is represented by the mean of its member vectors. The pair
/// with the largest centroid correlation merges first; ties go to the pair
/// whose (smaller member index, smaller member index) labels are
/// lexicographically smallest. A centroid with zero variance correlates 0
/// with everything. Returns 1-based labels numbered by first appearance.
pub fn centroid_cluster<T: Scalar>(
    vectors: &[Vec<T>],
    unit_ids: &[String],
    k: usize,
) -> Result<Vec<usize>> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(Error::param("k", format!("must be in 1..={n}, got {k}")));
    }
    for (i, v) in vectors.iter().enumerate() {
        if v.iter().all(|&x| x == v[0]) {
            let name = unit_ids.get(i).cloned().unwrap_or_else(|| i.to_string());
            return Err(Error::UndefinedMetric(format!(
                "unit {name} has zero variance across indexes; Pearson correlation undefined"
            )));
        }
    }
    // label = smallest member index; BTreeMap keeps iteration deterministic
    let mut clusters: BTreeMap<usize, Vec<usize>> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| -> Vec<T> {
        let m = T::of_usize(members.len());
        (0..vectors[0].len())
            .map(|j| members.iter().map(|&i| vectors[i][j]).sum::<T>() / m)
            .collect()
    };
    let mut centroids: BTreeMap<usize, Vec<T>> =
        clusters.iter().map(|(&l, m)| (l, centroid(m))).collect();
    while clusters.len() > k {
        let labels: Vec<usize> = clusters.keys().copied().collect();
        let mut best: Option<(T, usize, usize)> = None;
        for (x, &a) in labels.iter().enumerate() {
            for &b in &labels[x + 1..] {
                let r = pearson(&centroids[&a], &centroids[&b]).unwrap_or(T::zero());
                let d = T::one() - r;
                // strict < keeps the lexicographically first pair on ties
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two clusters remain");
        let mut merged = clusters.remove(&a).unwrap();
        merged.extend(clusters.remove(&b).unwrap());
        merged.sort_unstable();
        centroids.remove(&a);
        centroids.remove(&b);
        let label = merged[0];
        centroids.insert(label, centroid(&merged));
        clusters.insert(label, merged);
    }
    let mut out = vec![0usize; n];
    for (rank, members) in clusters.values().enumerate() {
        for &i in members {
            out[i] = rank + 1;
        }
    }
    Ok(out)
}

/// Split each cluster into connected components of its induced subgraph.
///
/// Units absent from the graph are isolated components. Region labels are
/// 1-based, numbered by the first unit of each component.
pub fn split_by_adjacency(
    unit_ids: &[String],
    cluster_of: &[usize],
    graph: &AdjacencyGraph,
) -> Vec<usize> {
    let n = unit_ids.len();
    let pos: BTreeMap<&str, usize> = unit_ids
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in graph.edges() {
        let (Some(&i), Some(&j)) = (pos.get(a), pos.get(b)) else {
            continue;
        };
        if cluster_of[i] != cluster_of[j] {
            continue;
        }
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut label_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = vec![0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let root = find(&mut parent, i);
        let next = label_of_root.len() + 1;
        *slot = *label_of_root.entry(root).or_insert(next);
    }
    out
}

/// Full regionalization: normalize, PCA diagnostics, cluster, split.
pub fn partition<T: Scalar>(
    table: &IndexTable<T>,
    graph: &AdjacencyGraph,
    k: usize,
) -> Result<RegionPartition> {
    graph.validate(table.unit_ids())?;
    let normalized = table.normalized()?;
    let pca = pca_top2(&normalized)?;
    let cluster_of = centroid_cluster(&normalized, table.unit_ids(), k)?;
    let region_of = split_by_adjacency(table.unit_ids(), &cluster_of, graph);
    Ok(RegionPartition {
        unit_ids: table.unit_ids().to_vec(),
        cluster_of,
        region_of,
        explained_variance: pca.explained_variance.to_f64_lossless(),
    })
}
