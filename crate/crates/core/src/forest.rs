//! Bagged CART ensemble used to mine conversion rules.
//!
//! Trees are grown greedily on Gini impurity over bootstrap samples, with a
//! random feature subset considered at every node. Class probabilities are
//! plain vote fractions, kept as integer tallies so they sum to one exactly.

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::CONVERSION_TYPES;
use crate::rng::{domain, substream, StreamRng};
use crate::sample::TrainingSet;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestParams {
    pub m_trees: usize,
    /// Bootstrap size as a fraction of the training rows (drawn with replacement).
    pub sample_fraction: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per node; `None` means `ceil(sqrt(S))`.
    pub features_per_node: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            m_trees: 80,
            sample_fraction: 0.60,
            max_depth: 25,
            min_leaf: 1,
            features_per_node: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.m_trees == 0 {
            return Err(Error::param("m_trees", "must be at least 1"));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction.is_finite()) {
            return Err(Error::param(
                "sample_fraction",
                format!("must be positive, got {}", self.sample_fraction),
            ));
        }
        if self.min_leaf == 0 {
            return Err(Error::param("min_leaf", "must be at least 1"));
        }
        if self.features_per_node == Some(0) {
            return Err(Error::param("features_per_node", "must be at least 1"));
        }
        Ok(())
    }

    pub fn mtry(&self, n_features: usize) -> usize {
        self.features_per_node
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node<T> {
    /// Predicted conversion code.
    Leaf { class: u8 },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree<T> {
    nodes: Vec<Node<T>>,
}

struct Frame {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
}

fn majority(labels: &[u8], rows: &[usize]) -> u8 {
    let mut c = [0usize; CONVERSION_TYPES];
    for &r in rows {
        c[labels[r] as usize - 1] += 1;
    }
    argmax_lowest(&c) as u8 + 1
}

fn argmax_lowest<C: PartialOrd + Copy>(c: &[C]) -> usize {
    let mut best = 0;
    for i in 1..c.len() {
        if c[i] > c[best] {
            best = i;
        }
    }
    best
}

/// Best split of `rows` on one feature: (score, threshold), higher score is purer.
fn best_threshold<T: Scalar>(
    data: &TrainingSet<T>,
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
    buf: &mut Vec<(T, u8)>,
) -> Option<(f64, T)> {
    buf.clear();
    buf.extend(
        rows.iter()
            .map(|&r| (data.row(r)[feature], data.labels()[r])),
    );
    buf.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("features are finite"));
    let n = buf.len();
    let mut right = [0usize; CONVERSION_TYPES];
    for &(_, l) in buf.iter() {
        right[l as usize - 1] += 1;
    }
    let mut left = [0usize; CONVERSION_TYPES];
    let mut sq_left = 0.0f64;
    let mut sq_right: f64 = right.iter().map(|&c| (c * c) as f64).sum();
    let mut best: Option<(f64, T)> = None;
    for i in 0..n - 1 {
        let k = buf[i].1 as usize - 1;
        sq_left += (2 * left[k] + 1) as f64;
        sq_right -= (2 * right[k] - 1) as f64;
        left[k] += 1;
        right[k] -= 1;
        let nl = i + 1;
        let nr = n - nl;
        if buf[i].0 == buf[i + 1].0 || nl < min_leaf || nr < min_leaf {
            continue;
        }
        // maximizing Σc²/n over both children minimizes weighted Gini
        let score = sq_left / nl as f64 + sq_right / nr as f64;
        if best.is_none_or(|(s, _)| score > s) {
            let (a, b) = (buf[i].0, buf[i + 1].0);
            let mut mid = a + (b - a) / T::of(2.0);
            if mid >= b {
                mid = a;
            }
            best = Some((score, mid));
        }
    }
    best
}

impl<T: Scalar> DecisionTree<T> {
    /// Grow a tree on the given row multiset (duplicates allowed).
    pub fn fit(
        data: &TrainingSet<T>,
        rows: Vec<usize>,
        params: &ForestParams,
        rng: &mut StreamRng,
    ) -> Self {
        let s = data.n_features();
        let mtry = params.mtry(s);
        let labels = data.labels();
        let mut nodes: Vec<Node<T>> = vec![Node::Leaf { class: 1 }];
        let mut stack = vec![Frame {
            node: 0,
            rows,
            depth: 0,
        }];
        let mut features: Vec<usize> = (0..s).collect();
        let mut buf = Vec::new();
        while let Some(Frame { node, rows, depth }) = stack.pop() {
            let class = majority(labels, &rows);
            let first = labels[rows[0]];
            let pure = rows.iter().all(|&r| labels[r] == first);
            if pure || depth >= params.max_depth || rows.len() < 2 * params.min_leaf {
                nodes[node] = Node::Leaf { class };
                continue;
            }
            features.shuffle(rng);
            let mut best: Option<(f64, usize, T)> = None;
            for (tried, &f) in features.iter().enumerate() {
                if tried >= mtry && best.is_some() {
                    break;
                }
                if let Some((score, thr)) =
                    best_threshold(data, &rows, f, params.min_leaf, &mut buf)
                {
                    if best.is_none_or(|(b, _, _)| score > b) {
                        best = Some((score, f, thr));
                    }
                }
            }
            let Some((_, feature, threshold)) = best else {
                nodes[node] = Node::Leaf { class };
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) = rows
                .into_iter()
                .partition(|&row| data.row(row)[feature] <= threshold);
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf { class });
            nodes.push(Node::Leaf { class });
            nodes[node] = Node::Split {
                feature,
                threshold,
                left,
                right,
            };
            stack.push(Frame {
                node: right,
                rows: r,
                depth: depth + 1,
            });
            stack.push(Frame {
                node: left,
                rows: l,
                depth: depth + 1,
            });
        }
        DecisionTree { nodes }
    }

    pub fn from_nodes(nodes: Vec<Node<T>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        for n in &nodes {
            match *n {
                Node::Leaf { class } if !(1..=9).contains(&class) => {
                    return Err(Error::Format(format!("leaf class {class} out of range")))
                }
                Node::Split {
                    threshold,
                    left,
                    right,
                    ..
                } if !threshold.is_finite() || left >= nodes.len() || right >= nodes.len() => {
                    return Err(Error::Format(
                        "split with bad threshold or child index".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(DecisionTree { nodes })
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn predict(&self, x: &[T]) -> u8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Per-class vote tallies of one prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VoteVector {
    votes: [u32; CONVERSION_TYPES],
    m: u32,
}

impl VoteVector {
    pub fn from_votes(votes: [u32; CONVERSION_TYPES]) -> Self {
        let m = votes.iter().sum();
        VoteVector { votes, m }
    }

    pub fn votes(&self) -> &[u32; CONVERSION_TYPES] {
        &self.votes
    }

    pub fn n_trees(&self) -> u32 {
        self.m
    }

    /// Exact vote fractions; they sum to exactly one.
    pub fn ratios(&self) -> [Ratio<u32>; CONVERSION_TYPES] {
        self.votes.map(|v| Ratio::new(v, self.m))
    }

    pub fn probs<T: Scalar>(&self) -> [T; CONVERSION_TYPES] {
        self.votes.map(|v| T::of(v as f64) / T::of(self.m as f64))
    }

    /// Vote fraction for one conversion code.
    pub fn fraction<T: Scalar>(&self, code: u8) -> T {
        T::of(self.votes[code as usize - 1] as f64) / T::of(self.m as f64)
    }

    /// Majority class; ties go to the lowest code.
    pub fn argmax_code(&self) -> u8 {
        argmax_lowest(&self.votes) as u8 + 1
    }
}

/// Out-of-bag evaluation summary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OobReport {
    pub error: f64,
    pub evaluated: usize,
    /// Rows that were in every tree's bootstrap.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest<T> {
    trees: Vec<DecisionTree<T>>,
    oob_indices: Vec<Vec<u32>>,
    feature_names: Vec<String>,
    n_train_rows: usize,
    params: ForestParams,
    /// Classes present in training; one class means a degenerate forest.
    classes_present: usize,
}

impl<T: Scalar> Forest<T> {
    pub fn train(data: &TrainingSet<T>, params: &ForestParams) -> Result<Self> {
        params.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if data.n_features() == 0 {
            return Err(Error::InvalidInput("training data has no features".into()));
        }
        let classes_present = data.label_counts().iter().filter(|&&c| c > 0).count();
        if classes_present < 2 {
            log::warn!("training data holds a single class; forest is a constant classifier");
        }
        let n = data.len();
        let n_boot = ((params.sample_fraction * n as f64).ceil() as usize).max(1);
        let grown: Vec<(DecisionTree<T>, Vec<u32>)> = (0..params.m_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(params.seed, &[domain::TREE, t as u64]);
                let mut drawn = vec![false; n];
                let rows: Vec<usize> = (0..n_boot)
                    .map(|_| {
                        let r = rng.random_range(0..n);
                        drawn[r] = true;
                        r
                    })
                    .collect();
                let oob = (0..n).filter(|&r| !drawn[r]).map(|r| r as u32).collect();
                (DecisionTree::fit(data, rows, params, &mut rng), oob)
            })
            .collect();
        let (trees, oob_indices) = grown.into_iter().unzip();
        Ok(Forest {
            trees,
            oob_indices,
            feature_names: data.feature_names().to_vec(),
            n_train_rows: n,
            params: *params,
            classes_present,
        })
    }

    /// Reassemble a forest, e.g. after deserialization.
    pub fn from_parts(
        trees: Vec<DecisionTree<T>>,
        oob_indices: Vec<Vec<u32>>,
        feature_names: Vec<String>,
        n_train_rows: usize,
        params: ForestParams,
    ) -> Result<Self> {
        if trees.is_empty() || trees.len() != oob_indices.len() {
            return Err(Error::Format(format!(
                "{} trees with {} oob sets",
                trees.len(),
                oob_indices.len()
            )));
        }
        for tree in &trees {
            for node in tree.nodes() {
                if let Node::Split { feature, .. } = node {
                    if *feature >= feature_names.len() {
                        return Err(Error::Format(format!(
                            "feature index {feature} out of range"
                        )));
                    }
                }
            }
        }
        let mut classes = [false; CONVERSION_TYPES];
        for tree in &trees {
            for node in tree.nodes() {
                if let Node::Leaf { class } = node {
                    classes[*class as usize - 1] = true;
                }
            }
        }
        Ok(Forest {
            trees,
            oob_indices,
            feature_names,
            n_train_rows,
            params,
            classes_present: classes.iter().filter(|&&c| c).count(),
        })
    }

    pub fn trees(&self) -> &[DecisionTree<T>] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn oob_indices(&self) -> &[Vec<u32>] {
        &self.oob_indices
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_train_rows(&self) -> usize {
        self.n_train_rows
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn is_degenerate(&self) -> bool {
        self.classes_present < 2
    }

    fn check_arity(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::Arity {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn predict_votes(&self, x: &[T]) -> Result<VoteVector> {
        self.check_arity(x)?;
        let mut votes = [0u32; CONVERSION_TYPES];
        for tree in &self.trees {
            votes[tree.predict(x) as usize - 1] += 1;
        }
        Ok(VoteVector::from_votes(votes))
    }

    /// Majority vote; ties go to the lowest conversion code.
    pub fn classify(&self, x: &[T]) -> Result<u8> {
        Ok(self.predict_votes(x)?.argmax_code())
    }

    /// Misclassification rate over every row of `data`.
    pub fn error_rate(&self, data: &TrainingSet<T>) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let wrong: usize = (0..data.len())
            .into_par_iter()
            .map(|i| {
                self.classify(data.row(i))
                    .map(|c| usize::from(c != data.labels()[i]))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(wrong as f64 / data.len() as f64)
    }

    /// Each row voted on only by the trees that held it out of bag.
    pub fn oob_error(&self, data: &TrainingSet<T>) -> Result<OobReport> {
        if data.len() != self.n_train_rows {
            return Err(Error::InvalidInput(format!(
                "forest was trained on {} rows, got {}",
                self.n_train_rows,
                data.len()
            )));
        }
        if let Some(row) = data.features().first() {
            self.check_arity(row)?;
        }
        let mut votes = vec![[0u32; CONVERSION_TYPES]; data.len()];
        for (tree, oob) in self.trees.iter().zip(&self.oob_indices) {
            for &r in oob {
                let r = r as usize;
                votes[r][tree.predict(data.row(r)) as usize - 1] += 1;
            }
        }
        let mut evaluated = 0;
        let mut wrong = 0;
        for (v, &label) in votes.iter().zip(data.labels()) {
            if v.iter().all(|&c| c == 0) {
                continue;
            }
            evaluated += 1;
            if VoteVector::from_votes(*v).argmax_code() != label {
                wrong += 1;
            }
        }
        Ok(OobReport {
            error: if evaluated == 0 {
                f64::NAN
            } else {
                wrong as f64 / evaluated as f64
            },
            evaluated,
            excluded: data.len() - evaluated,
        })
    }
}

/// How a noise-corrupted feature is turned into an error estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ContributionMode {
    /// Evaluate the trained forest with the feature column replaced by noise.
    #[default]
    Reevaluate,
    /// Train a fresh forest on data whose feature column is noise, then
    /// evaluate it on the original data.
    Retrain,
}

/// Share of error inflation attributable to each feature.
///
/// `contribution_i = |AE_i - AE_true| / Σ_j |AE_j - AE_true|`, where AE is the
/// misclassification rate over the full training set and AE_i is obtained
/// with feature `i` replaced by uniform [0, 1] noise.
pub fn variable_contribution<T: Scalar>(
    forest: &Forest<T>,
    data: &TrainingSet<T>,
    seed: u64,
    mode: ContributionMode,
) -> Result<Vec<f64>> {
    if data.n_features() != forest.n_features() {
        return Err(Error::Arity {
            expected: forest.n_features(),
            actual: data.n_features(),
        });
    }
    let ae_true = forest.error_rate(data)?;
    let mut deltas = Vec::with_capacity(data.n_features());
    for i in 0..data.n_features() {
        let mut rng = substream(seed, &[domain::NOISE, i as u64]);
        let noise: Vec<T> = (0..data.len())
            .map(|_| T::of(rng.random::<f64>()))
            .collect();
        let noisy = data.with_column(i, &noise);
        let ae_i = match mode {
            ContributionMode::Reevaluate => forest.error_rate(&noisy)?,
            ContributionMode::Retrain => {
                Forest::train(&noisy, forest.params())?.error_rate(data)?
            }
        };
        deltas.push((ae_i - ae_true).abs());
    }
    let total: f64 = deltas.iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedMetric(
            "no feature changes the forest error; contributions undefined".into(),
        ));
    }
    Ok(deltas.into_iter().map(|d| d / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::{One, Zero};
    use rand::SeedableRng;

    fn set(features: Vec<Vec<f64>>, labels: Vec<u8>) -> TrainingSet<f64> {
        let s = features[0].len();
        TrainingSet::new((0..s).map(|i| format!("f{i}")).collect(), features, labels).unwrap()
    }

    fn params(m: usize, seed: u64) -> ForestParams {
        ForestParams {
            m_trees: m,
            seed,
            ..ForestParams::default()
        }
    }

    #[test]
    fn single_tree_memorizes_separable_rows() {
        let d = set(
            vec![vec![0.1], vec![0.2], vec![0.8], vec![0.9]],
            vec![1, 1, 4, 4],
        );
        let p = ForestParams {
            m_trees: 1,
            sample_fraction: 1.0,
            ..ForestParams::default()
        };
        let tree = DecisionTree::fit(&d, vec![0, 1, 2, 3], &p, &mut substream(0, &[]));
        for i in 0..4 {
            assert_eq!(tree.predict(d.row(i)), d.labels()[i]);
        }
        // a full forest with m=1 may miss a class in its bootstrap; use full rows here
        let f = Forest::train(&d, &p).unwrap();
        assert_eq!(f.n_trees(), 1);
    }

    #[test]
    fn xor_is_learnable() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(1);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            labels.push(if (a > 0.5) ^ (b > 0.5) { 4 } else { 2 });
            feats.push(vec![a, b]);
        }
        let d = set(feats, labels);
        let f = Forest::train(&d, &params(50, 3)).unwrap();
        let oob = f.oob_error(&d).unwrap();
        assert!(oob.error < 0.15, "oob {}", oob.error);
    }

    #[test]
    fn votes_sum_to_one_exactly() {
        let d = set(
            (0..30)
                .map(|i| vec![i as f64 / 30.0, (i * 7 % 30) as f64 / 30.0])
                .collect(),
            (0..30).map(|i| (i % 3 * 3 + 1) as u8).collect(),
        );
        let f = Forest::train(&d, &params(7, 0)).unwrap();
        let v = f.predict_votes(&[0.3, 0.6]).unwrap();
        let sum = v.ratios().iter().fold(Ratio::zero(), |a, &b| a + b);
        assert!(sum.is_one());
        assert_eq!(v.n_trees(), 7);
    }

    #[test]
    fn vote_fraction_example() {
        let mut votes = [0; 9];
        votes[0] = 3;
        votes[1] = 2;
        let v = VoteVector::from_votes(votes);
        assert_eq!(v.probs::<f64>()[0], 0.6);
        assert_eq!(v.probs::<f64>()[1], 0.4);
        let mut tie = [0; 9];
        tie[2] = 4;
        tie[6] = 4;
        assert_eq!(VoteVector::from_votes(tie).argmax_code(), 3);
    }

    #[test]
    fn unanimous_votes() {
        let d = set(vec![vec![0.0], vec![1.0], vec![0.5]], vec![5, 5, 5]);
        let f = Forest::train(&d, &params(4, 0)).unwrap();
        assert!(f.is_degenerate());
        let v = f.predict_votes(&[0.2]).unwrap();
        assert_eq!(v.fraction::<f64>(5), 1.0);
        assert_eq!(v.probs::<f64>().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn arity_and_empty_errors() {
        let d = set(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1, 4]);
        let f = Forest::train(&d, &params(3, 0)).unwrap();
        assert!(matches!(f.predict_votes(&[0.0]), Err(Error::Arity { .. })));
        let empty: TrainingSet<f64> = TrainingSet::new(vec!["a".into()], vec![], vec![]).unwrap();
        assert!(matches!(
            Forest::train(&empty, &params(3, 0)),
            Err(Error::EmptyData)
        ));
        assert!(Forest::train(&d, &params(0, 0)).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let d = set(
            (0..60)
                .map(|i| vec![(i % 11) as f64 / 11.0, (i % 7) as f64 / 7.0])
                .collect(),
            (0..60).map(|i| if i % 11 > 5 { 4 } else { 5 }).collect(),
        );
        let a = Forest::train(&d, &params(10, 9)).unwrap();
        let b = Forest::train(&d, &params(10, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oob_sets_disjoint_from_bootstrap() {
        let d = set(
            (0..40).map(|i| vec![i as f64]).collect(),
            (0..40).map(|i| (i % 2 * 3 + 1) as u8).collect(),
        );
        let p = params(5, 2);
        let f = Forest::train(&d, &p).unwrap();
        let n_boot = (0.6f64 * 40.0).ceil() as usize;
        for (t, oob) in f.oob_indices().iter().enumerate() {
            let mut rng = substream(p.seed, &[domain::TREE, t as u64]);
            let drawn: Vec<usize> = (0..n_boot).map(|_| rng.random_range(0..40)).collect();
            for &r in oob {
                assert!(!drawn.contains(&(r as usize)));
            }
            let covered = (0..40)
                .filter(|r| drawn.contains(r) || oob.contains(&(*r as u32)))
                .count();
            assert_eq!(covered, 40);
        }
    }

    #[test]
    fn duplicated_rows_leave_splits_unchanged() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(4);
        let feats: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random(), rng.random(), rng.random()])
            .collect();
        let labels: Vec<u8> = feats
            .iter()
            .map(|f| if f[0] + f[1] > 1.0 { 4 } else { 5 })
            .collect();
        let d = set(feats, labels);
        let p = ForestParams::default();
        let rows: Vec<usize> = (0..40).collect();
        let doubled: Vec<usize> = rows.iter().flat_map(|&r| [r, r]).collect();
        let a = DecisionTree::fit(&d, rows, &p, &mut substream(1, &[]));
        let b = DecisionTree::fit(&d, doubled, &p, &mut substream(1, &[]));
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_forest_matches_exhaustive_tree_votes() {
        let d = set(vec![vec![0.0], vec![1.0]], vec![1, 4]);
        let f = Forest::train(&d, &params(3, 5)).unwrap();
        for x in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mut expect = [0u32; 9];
            for t in f.trees() {
                expect[t.predict(&[x]) as usize - 1] += 1;
            }
            assert_eq!(f.predict_votes(&[x]).unwrap().votes(), &expect);
        }
    }

    #[test]
    fn contribution_requires_signal() {
        let d = set(vec![vec![0.5, 0.5]; 10], vec![1; 10]);
        let f = Forest::train(&d, &params(3, 0)).unwrap();
        assert!(matches!(
            variable_contribution(&f, &d, 0, ContributionMode::Reevaluate),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn retrain_mode_ranks_signal_feature() {
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(8);
        let feats: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random(), rng.random(), rng.random()])
            .collect();
        let labels: Vec<u8> = feats
            .iter()
            .map(|f| if f[0] > 0.5 { 4 } else { 5 })
            .collect();
        let d = set(feats, labels);
        let f = Forest::train(&d, &params(20, 1)).unwrap();
        let c = variable_contribution(&f, &d, 2, ContributionMode::Retrain).unwrap();
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(c[0] > c[1] && c[0] > c[2]);
    }
}
