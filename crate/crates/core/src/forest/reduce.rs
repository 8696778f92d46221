use super::train::train_masked;
use super::{Dataset, FeatureSubsample, ForestError, ForestModel, TrainParams};

/// Mean decrease in Gini impurity per feature, normalized per tree and
/// averaged over the forest. Sums to 1 unless no tree has a split.
pub fn importance(model: &ForestModel) -> Vec<f64> {
    let gini_mass = |c: &[u32]| {
        let n: f64 = c.iter().map(|&x| x as f64).sum();
        if n == 0.0 {
            return 0.0;
        }
        n - c.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>() / n
    };
    let mut total = vec![0.0; model.n_features];
    for t in &model.trees {
        let mut imp = vec![0.0; model.n_features];
        for n in t.nodes.iter().filter(|n| !n.is_leaf()) {
            let l = &t.nodes[n.left as usize].counts;
            let r = &t.nodes[n.right as usize].counts;
            imp[n.feature as usize] += (gini_mass(&n.counts) - gini_mass(l) - gini_mass(r)).max(0.0);
        }
        let s: f64 = imp.iter().sum();
        if s > 0.0 {
            for (a, b) in total.iter_mut().zip(&imp) {
                *a += b / s;
            }
        }
    }
    let n = model.trees.len().max(1) as f64;
    total.iter_mut().for_each(|v| *v /= n);
    total
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub model: ForestModel,
    pub importance: Vec<f64>,
    /// Features below the cut, whether or not the reduced model was kept.
    pub dropped: Vec<u32>,
    /// True when the reduced model replaced the original.
    pub accepted: bool,
}

/// Drops kept features with importance below `threshold / k` (`k` = number
/// of kept features), retrains on the rest with the original parameters and
/// keeps the result only if its out-of-bag accuracy is within one
/// percentage point of the original.
pub fn reduce_features(model: &ForestModel, ds: &Dataset, threshold: f64) -> Result<Reduction, ForestError> {
    let imp = importance(model);
    let cut = threshold / model.kept.len() as f64;
    let (mut keep, dropped): (Vec<u32>, Vec<u32>) = model.kept.iter().partition(|&&f| imp[f as usize] >= cut);
    if dropped.is_empty() {
        return Ok(Reduction {
            model: model.clone(),
            importance: imp,
            dropped,
            accepted: false,
        });
    }
    if keep.is_empty() {
        let top = *model
            .kept
            .iter()
            .max_by(|a, b| imp[**a as usize].total_cmp(&imp[**b as usize]).then(b.cmp(a)))
            .unwrap();
        keep.push(top);
    }
    let m = &model.meta;
    let params = TrainParams {
        n_trees: m.n_trees as usize,
        max_depth: m.max_depth as usize,
        min_leaf: m.min_leaf as usize,
        feature_subsample: if m.mtry as usize >= model.kept.len() {
            FeatureSubsample::All
        } else {
            FeatureSubsample::Sqrt
        },
        bootstrap: m.bootstrap,
        seed: m.seed,
        jobs: 1,
    };
    let reduced = train_masked(ds, &params, &keep)?;
    let accepted = reduced.meta.oob_accuracy >= model.meta.oob_accuracy - 0.01;
    Ok(Reduction {
        model: if accepted { reduced } else { model.clone() },
        importance: imp,
        dropped,
        accepted,
    })
}
