use std::fmt::Write as _;
use std::time::Instant;

use crate::features::extract;
use crate::flow::{aggregate, FlowConfig};
use crate::forest::{train, ForestModel, TrainParams};

use super::corpus::payload_corpus;
use super::{
    app_trace, classify_stream, labeled_rows, rows_to_dataset, snapshots, two_apps, Detector, PipelineError,
    StreamConfig, DEFAULT_THRESHOLD,
};

/// Nearest-rank percentiles in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Percentiles {
    pub n: usize,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

impl Percentiles {
    pub fn of(samples: &[f64]) -> Option<Percentiles> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Some(Percentiles {
            n: s.len(),
            p50: rank(0.50),
            p90: rank(0.90),
            p99: rank(0.99),
            max: s[s.len() - 1],
            mean: s.iter().sum::<f64>() / s.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub name: &'static str,
    pub stats: Percentiles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub rows: Vec<LatencyRow>,
}

impl LatencyReport {
    pub fn get(&self, name: &str) -> Option<&Percentiles> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.stats)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<16} {:>7} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
            "measure", "n", "p50_us", "p90_us", "p99_us", "max_us", "mean_us"
        );
        for r in &self.rows {
            let p = &r.stats;
            let _ = writeln!(
                s,
                "{:<16} {:>7} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                r.name, p.n, p.p50, p.p90, p.p99, p.max, p.mean
            );
        }
        s
    }

    /// `measure,n,p50_us,p90_us,p99_us,max_us,mean_us`
    pub fn to_rows(&self) -> String {
        let mut s = String::from("measure,n,p50_us,p90_us,p99_us,max_us,mean_us\n");
        for r in &self.rows {
            let p = &r.stats;
            let _ = writeln!(
                s,
                "{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
                r.name, p.n, p.p50, p.p90, p.p99, p.max, p.mean
            );
        }
        s
    }
}

fn row(name: &'static str, samples: &[f64]) -> Result<LatencyRow, PipelineError> {
    let stats = Percentiles::of(samples).ok_or_else(|| PipelineError::InvalidConfig(format!("{name}: no samples")))?;
    Ok(LatencyRow { name, stats })
}

/// Classifier trained on a 2-app trace, as used by the latency benches.
pub fn bench_classifier(seed: u64, flows_per_app: usize) -> Result<ForestModel, PipelineError> {
    let t = app_trace(&two_apps(), flows_per_app, seed)?;
    let (snaps, _) = snapshots(&t.packets, StreamConfig::default())?;
    let ds = rows_to_dataset(&labeled_rows(&snaps, &t.truth))?;
    Ok(train(
        &ds,
        &TrainParams {
            seed,
            ..Default::default()
        },
    )?)
}

/// Per-flow extract+predict latency on a fresh 2-app trace and per-request
/// detect latency over the bundled corpus. Each measurement set runs once
/// unmeasured first.
pub fn bench_e2e(seed: u64, rounds: usize) -> Result<LatencyReport, PipelineError> {
    let rounds = rounds.max(1);
    let model = bench_classifier(seed, 200)?;
    let test = app_trace(&two_apps(), 200, seed.wrapping_add(1))?;
    let cfg = StreamConfig::default();
    classify_stream(&test.packets, &model, cfg)?;
    let mut classify = Vec::new();
    for _ in 0..rounds {
        let (res, _) = classify_stream(&test.packets, &model, cfg)?;
        classify.extend(res.into_iter().filter_map(|r| r.ok()).map(|r| r.latency_us));
    }

    let det = Detector::bundled(DEFAULT_THRESHOLD)?;
    let corpus = payload_corpus();
    for s in &corpus {
        det.detect(0, s.payload.as_bytes());
    }
    let mut detect = Vec::new();
    for _ in 0..rounds {
        for (i, s) in corpus.iter().enumerate() {
            detect.push(det.detect(i as u64, s.payload.as_bytes()).latency_us);
        }
    }
    Ok(LatencyReport {
        rows: vec![row("classify_flow", &classify)?, row("detect_request", &detect)?],
    })
}

/// Component timings: feature extraction per flow, forest prediction per
/// vector and tokenization per payload (both profiles).
pub fn bench_components(seed: u64) -> Result<LatencyReport, PipelineError> {
    let model = bench_classifier(seed, 100)?;
    let t = app_trace(&two_apps(), 200, seed.wrapping_add(1))?;
    let (flows, _) = aggregate(FlowConfig::default(), &t.packets);
    let mut ex = Vec::new();
    let mut vectors = Vec::new();
    for f in &flows {
        let s = Instant::now();
        let v = extract(f);
        ex.push(s.elapsed().as_nanos() as f64 / 1000.0);
        if let Ok(v) = v {
            vectors.push(v.values);
        }
    }
    let mut pr = Vec::new();
    let mut probs = vec![0.0; model.n_classes()];
    for v in &vectors {
        let s = Instant::now();
        model.predict_proba_into(v, &mut probs)?;
        pr.push(s.elapsed().as_nanos() as f64 / 1000.0);
    }
    let profiles = super::Profiles::bundled();
    let mut tok = Vec::new();
    let mut tokens = Vec::new();
    for s in payload_corpus() {
        let start = Instant::now();
        tokens.clear();
        profiles.sqli.tokenize_into(s.payload.as_bytes(), &mut tokens);
        tokens.clear();
        profiles.xss.tokenize_into(s.payload.as_bytes(), &mut tokens);
        tok.push(start.elapsed().as_nanos() as f64 / 1000.0);
    }
    Ok(LatencyReport {
        rows: vec![row("extract_flow", &ex)?, row("predict_vector", &pr)?, row("tokenize_request", &tok)?],
    })
}
