use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{argmax, Dataset, DecisionTree, ForestError, ForestModel, Node, TrainMeta, LEAF};

pub const MIN_ROWS_PER_CLASS: usize = 10;
const MAX_DEPTH_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSubsample {
    /// `ceil(sqrt(k))` of the `k` usable features.
    Sqrt,
    All,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    pub jobs: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            n_trees: 100,
            max_depth: 16,
            min_leaf: 2,
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
            seed: 42,
            jobs: 1,
        }
    }
}

fn check(ds: &Dataset, p: &TrainParams) -> Result<(), ForestError> {
    if p.n_trees == 0 || p.max_depth == 0 || p.max_depth > MAX_DEPTH_LIMIT || p.min_leaf == 0 {
        return Err(ForestError::InvalidParams(format!(
            "need n_trees >= 1, 1 <= max_depth <= {MAX_DEPTH_LIMIT}, min_leaf >= 1"
        )));
    }
    if p.feature_subsample == FeatureSubsample::Fixed(0) {
        return Err(ForestError::InvalidParams("feature subsample must be positive".into()));
    }
    let counts = ds.class_counts();
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(ForestError::SingleClass);
    }
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 && c < MIN_ROWS_PER_CLASS {
            return Err(ForestError::TooFewSamples {
                class: ds.classes[i].clone(),
                count: c,
                min: MIN_ROWS_PER_CLASS,
            });
        }
    }
    Ok(())
}

pub fn train(ds: &Dataset, params: &TrainParams) -> Result<ForestModel, ForestError> {
    let all: Vec<u32> = (0..ds.n_features as u32).collect();
    train_masked(ds, params, &all)
}

/// Trains using only the features in `kept`.
pub fn train_masked(ds: &Dataset, params: &TrainParams, kept: &[u32]) -> Result<ForestModel, ForestError> {
    check(ds, params)?;
    let mut kept = kept.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.is_empty() || kept.iter().any(|&f| f as usize >= ds.n_features) {
        return Err(ForestError::InvalidParams("feature mask is empty or out of range".into()));
    }
    let mtry = match params.feature_subsample {
        FeatureSubsample::Sqrt => (kept.len() as f64).sqrt().ceil() as usize,
        FeatureSubsample::All => kept.len(),
        FeatureSubsample::Fixed(n) => n,
    }
    .clamp(1, kept.len());

    let build = |t: usize| grow_tree(ds, params, &kept, mtry, t as u64);
    let grown: Vec<(DecisionTree, Vec<bool>)> = if params.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.jobs)
            .build()
            .map_err(|e| ForestError::InvalidParams(e.to_string()))?;
        pool.install(|| (0..params.n_trees).into_par_iter().map(build).collect())
    } else {
        (0..params.n_trees).map(build).collect()
    };

    // out-of-bag votes
    let k = ds.classes.len();
    let mut votes = vec![0.0f64; ds.len() * k];
    let mut voted = vec![false; ds.len()];
    for (tree, in_bag) in &grown {
        for i in (0..ds.len()).filter(|&i| !in_bag[i]) {
            let leaf = tree.leaf_for(ds.row(i));
            let total: u32 = leaf.counts.iter().sum();
            for (v, &c) in votes[i * k..(i + 1) * k].iter_mut().zip(&leaf.counts) {
                *v += c as f64 / total as f64;
            }
            voted[i] = true;
        }
    }
    let (mut hit, mut n) = (0usize, 0usize);
    for i in (0..ds.len()).filter(|&i| voted[i]) {
        n += 1;
        hit += (argmax(&votes[i * k..(i + 1) * k]) == ds.label(i) as usize) as usize;
    }
    let oob_accuracy = if n == 0 { f64::NAN } else { hit as f64 / n as f64 };

    Ok(ForestModel {
        schema: ds.schema.clone(),
        n_features: ds.n_features,
        classes: ds.classes.clone(),
        kept,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        meta: TrainMeta {
            seed: params.seed,
            n_trees: params.n_trees as u32,
            max_depth: params.max_depth as u32,
            min_leaf: params.min_leaf as u32,
            mtry: mtry as u32,
            bootstrap: params.bootstrap,
            oob_accuracy,
        },
    })
}

struct Grower<'a> {
    ds: &'a Dataset,
    mtry: usize,
    max_depth: usize,
    min_leaf: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    order: Vec<u32>,
    pairs: Vec<(f64, u32)>,
}

fn grow_tree(ds: &Dataset, p: &TrainParams, kept: &[u32], mtry: usize, tree: u64) -> (DecisionTree, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(tree);
    let n = ds.len();
    let mut in_bag = vec![!p.bootstrap; n];
    let sample: Vec<u32> = if p.bootstrap {
        (0..n)
            .map(|_| {
                let i = rng.random_range(0..n);
                in_bag[i] = true;
                i as u32
            })
            .collect()
    } else {
        (0..n as u32).collect()
    };
    let mut g = Grower {
        ds,
        mtry,
        max_depth: p.max_depth,
        min_leaf: p.min_leaf,
        rng,
        nodes: Vec::new(),
        order: kept.to_vec(),
        pairs: Vec::new(),
    };
    g.build(sample, 0);
    (DecisionTree { nodes: g.nodes }, in_bag)
}

fn sum_sq(counts: &[u32]) -> f64 {
    counts.iter().map(|&c| c as f64 * c as f64).sum()
}

impl Grower<'_> {
    fn counts(&self, idx: &[u32]) -> Vec<u32> {
        let mut c = vec![0u32; self.ds.classes.len()];
        for &i in idx {
            c[self.ds.label(i as usize) as usize] += 1;
        }
        c
    }

    fn build(&mut self, idx: Vec<u32>, depth: usize) -> u32 {
        let counts = self.counts(&idx);
        let me = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: 0,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            counts,
        });
        let pure = self.nodes[me as usize].counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return me;
        }
        let Some((feature, threshold)) = self.best_split(&idx) else {
            return me;
        };
        let (l, r): (Vec<u32>, Vec<u32>) = idx
            .iter()
            .partition(|&&i| self.ds.row(i as usize)[feature as usize] <= threshold);
        drop(idx);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        let node = &mut self.nodes[me as usize];
        node.feature = feature;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
        me
    }

    /// Tries `mtry` random features, then the rest in the same shuffled
    /// order until one yields a valid split.
    fn best_split(&mut self, idx: &[u32]) -> Option<(u32, f64)> {
        let k = self.ds.classes.len();
        let parent = self.counts(idx);
        let n = idx.len();
        let parent_score = sum_sq(&parent) / n as f64;
        let mut order = std::mem::take(&mut self.order);
        order.shuffle(&mut self.rng);
        let mut best: Option<(f64, u32, f64)> = None;
        let mut left = vec![0u32; k];
        let mut right = vec![0u32; k];
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            self.pairs.clear();
            self.pairs
                .extend(idx.iter().map(|&i| (self.ds.row(i as usize)[f as usize], self.ds.label(i as usize))));
            self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if self.pairs[0].0 == self.pairs[n - 1].0 {
                continue;
            }
            left.fill(0);
            right.copy_from_slice(&parent);
            let (mut sl, mut sr) = (0.0, sum_sq(&parent));
            for j in 0..n - 1 {
                let c = self.pairs[j].1 as usize;
                sl += 2.0 * left[c] as f64 + 1.0;
                sr -= 2.0 * right[c] as f64 - 1.0;
                left[c] += 1;
                right[c] -= 1;
                let (a, b) = (self.pairs[j].0, self.pairs[j + 1].0);
                let nl = j + 1;
                if a == b || nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let score = sl / nl as f64 + sr / (n - nl) as f64;
                if score > parent_score + 1e-12 && best.is_none_or(|(s, _, _)| score > s) {
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some((score, f, t));
                }
            }
        }
        self.order = order;
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(n: usize, seed: u64, shuffle_labels: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut d = Dataset::with_classes("test", 2, &["a", "b"]);
        let mut labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        for &y in &labels {
            let c = if y == 0 { -4.0 } else { 4.0 };
            let x = [c + noise.sample(&mut rng), c + noise.sample(&mut rng)];
            d.push_id(&x, y).unwrap();
        }
        if shuffle_labels {
            labels.shuffle(&mut rng);
            d = d.relabeled(labels);
        }
        d
    }

    fn small() -> TrainParams {
        TrainParams {
            n_trees: 30,
            ..Default::default()
        }
    }

    #[test]
    fn separable_blobs_have_high_oob() {
        let m = train(&blobs(1000, 42, false), &small()).unwrap();
        assert!(m.meta.oob_accuracy >= 0.99, "{}", m.meta.oob_accuracy);
        assert_eq!(m.meta.mtry, 2);
    }

    #[test]
    fn shuffled_labels_are_near_chance() {
        let m = train(&blobs(1000, 42, true), &small()).unwrap();
        assert!((m.meta.oob_accuracy - 0.5).abs() <= 0.1, "{}", m.meta.oob_accuracy);
    }

    #[test]
    fn parallel_training_is_identical() {
        let d = blobs(300, 1, false);
        let a = train(&d, &small()).unwrap();
        let b = train(&d, &TrainParams { jobs: 3, ..small() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thresholds_are_midpoints_and_respect_min_leaf() {
        let mut d = Dataset::with_classes("t", 1, &["a", "b"]);
        for i in 0..20 {
            d.push_id(&[i as f64], (i >= 10) as u32).unwrap();
        }
        let p = TrainParams {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let m = train(&d, &p).unwrap();
        let root = &m.trees[0].nodes[0];
        assert_eq!((root.feature, root.threshold), (0, 9.5));
        assert_eq!(m.trees[0].nodes.len(), 3);
        for t in &m.trees {
            for n in &t.nodes {
                assert!(n.counts.iter().sum::<u32>() >= p.min_leaf as u32);
            }
        }
    }

    #[test]
    fn validation_errors() {
        let mut d = Dataset::with_classes("t", 1, &["a", "b"]);
        for i in 0..20 {
            d.push_id(&[i as f64], 0).unwrap();
        }
        assert!(matches!(train(&d, &small()), Err(ForestError::SingleClass)));
        d.push_id(&[1.0], 1).unwrap();
        assert!(matches!(train(&d, &small()), Err(ForestError::TooFewSamples { count: 1, .. })));
        let d = blobs(100, 0, false);
        let bad = TrainParams { n_trees: 0, ..small() };
        assert!(matches!(train(&d, &bad), Err(ForestError::InvalidParams(_))));
    }

    #[test]
    fn depth_is_bounded() {
        let d = blobs(400, 3, true);
        let m = train(&d, &TrainParams { max_depth: 3, ..small() }).unwrap();
        assert!(m.trees.iter().all(|t| t.depth() <= 3));
    }
}
