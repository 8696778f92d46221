use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::forest::{evaluate_predictions, train, Dataset, EvalReport, ForestModel, TrainParams};

use super::corpus::Sample;
use super::detect::{decide, Profiles, Verdict};
use super::PipelineError;

/// Fold index per row. Each class is shuffled and dealt round-robin, so
/// fold class ratios differ by at most one row per class.
pub fn stratified_folds(labels: &[u32], folds: usize, seed: u64) -> Vec<usize> {
    let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; labels.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] as usize == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub fold_accuracy: Vec<f64>,
    /// Pooled out-of-fold predictions.
    pub report: EvalReport,
    pub predicted: Vec<u32>,
}

/// K-fold cross-validation. `decide` maps a model and its class
/// probabilities to a class index of `ds`.
pub fn cross_validate(
    ds: &Dataset,
    folds: usize,
    params: &TrainParams,
    decide: impl Fn(&ForestModel, &[f64]) -> usize,
) -> Result<CvReport, PipelineError> {
    if folds < 2 || folds > ds.len() {
        return Err(PipelineError::InvalidConfig(format!("{folds} folds for {} rows", ds.len())));
    }
    let fold = stratified_folds(ds.labels(), folds, params.seed);
    let mut predicted = vec![0u32; ds.len()];
    let mut fold_accuracy = Vec::with_capacity(folds);
    for f in 0..folds {
        let (test, tr): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| fold[i] == f);
        let model = train(&ds.subset(&tr), params)?;
        let mut probs = vec![0.0; model.n_classes()];
        let mut ok = 0;
        for &i in &test {
            model.predict_proba_into(ds.row(i), &mut probs)?;
            let c = decide(&model, &probs);
            // model classes come from the training subset's dictionary,
            // which is the full dataset's
            predicted[i] = c as u32;
            ok += (c as u32 == ds.label(i)) as usize;
        }
        fold_accuracy.push(ok as f64 / test.len() as f64);
    }
    Ok(CvReport {
        report: evaluate_predictions(&ds.classes, ds.labels(), &predicted),
        fold_accuracy,
        predicted,
    })
}

#[derive(Debug, Clone)]
pub struct DetectCv {
    pub cv: CvReport,
    /// Benign payloads flagged as attacks over all benign payloads.
    pub false_positive_rate: f64,
}

/// Cross-validates the detector on a labeled corpus with the threshold
/// decision rule.
pub fn detect_cv(
    profiles: &Profiles,
    samples: &[Sample],
    folds: usize,
    params: &TrainParams,
    threshold: f64,
) -> Result<DetectCv, PipelineError> {
    let ds = profiles.dataset(samples);
    let cv = cross_validate(&ds, folds, params, |_, p| {
        decide(p[Verdict::Sqli as usize], p[Verdict::Xss as usize], threshold) as usize
    })?;
    let b = Verdict::Benign as usize;
    let benign = cv.report.support[b];
    let flagged = benign - cv.report.confusion[b][b];
    Ok(DetectCv {
        false_positive_rate: if benign == 0 { 0.0 } else { flagged as f64 / benign as f64 },
        cv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::argmax;
    use crate::forest::tests::blobs;

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<u32> = (0..103).map(|i| (i % 3 == 0) as u32).collect();
        let f = stratified_folds(&labels, 5, 1);
        for k in 0..5 {
            let n1 = (0..103).filter(|&i| f[i] == k && labels[i] == 1).count();
            assert!((6..=7).contains(&n1), "{n1}");
            let n = f.iter().filter(|&&x| x == k).count();
            assert!((20..=21).contains(&n));
        }
    }

    #[test]
    fn separable_blobs_cross_validate() {
        let ds = blobs(200, 3, false);
        let p = TrainParams { n_trees: 20, ..Default::default() };
        let r = cross_validate(&ds, 5, &p, |_, p| argmax(p)).unwrap();
        assert_eq!(r.fold_accuracy.len(), 5);
        assert!(r.report.accuracy >= 0.95, "{}", r.report.accuracy);
        assert!(cross_validate(&ds, 1, &p, |_, p| argmax(p)).is_err());
    }
}
