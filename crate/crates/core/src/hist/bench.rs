//! Per-category timing of the scalar loop against the lane backends.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{classify_category, hist_avc_with, hist_scalar, Backend, Category, LaneVector};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("invalid benchmark arguments: {0}")]
    InvalidArgs(&'static str),
}

pub const BENCH_LANES: usize = 1024;
const TRIALS: usize = 5;
const WIDTH: u32 = 64;

/// `n_lanes` lanes of payload lengths that all classify as `category`.
pub fn category_lanes(category: Category, n_lanes: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_lanes * 16);
    let jitter = |rng: &mut ChaCha8Rng| rng.random_range(0..WIDTH);
    for _ in 0..n_lanes {
        let lane: Vec<u32> = match category {
            Category::Cat1AllDistinctBins => {
                let mut bins: Vec<u32> = (0..16).collect();
                bins.shuffle(&mut rng);
                bins.iter().map(|b| b * WIDTH + jitter(&mut rng)).collect()
            }
            Category::Cat3AllOneBin => {
                let b = rng.random_range(0..15);
                (0..16).map(|_| b * WIDTH + jitter(&mut rng)).collect()
            }
            Category::Cat4AllOverflow => (0..16).map(|_| rng.random_range(960..1500)).collect(),
            Category::Cat2Random => loop {
                let lane: Vec<u32> = (0..16).map(|_| rng.random_range(0..1100)).collect();
                let bins = LaneVector::load(&lane).shr(WIDTH.trailing_zeros());
                if classify_category(bins) == Category::Cat2Random {
                    break lane;
                }
            },
        };
        out.extend(lane);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub category: Category,
    /// `scalar` or a [`Backend`] name.
    pub backend: &'static str,
    pub ns_per_lane: f64,
    /// Scalar time over this row's time.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistBenchReport {
    pub category: Category,
    pub rows: Vec<BenchRow>,
}

impl HistBenchReport {
    pub fn speedup(&self, backend: Backend) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.backend == backend.name())
            .map(|r| r.speedup)
    }

    /// `category,backend,ns_per_lane,speedup` lines.
    pub fn to_rows(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.3},{:.3}", r.category, r.backend, r.ns_per_lane, r.speedup);
        }
        s
    }
}

fn time_ns(iters: usize, mut f: impl FnMut()) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..TRIALS {
        let t = Instant::now();
        for _ in 0..iters {
            f();
        }
        best = best.min(t.elapsed().as_nanos() as f64);
    }
    best
}

/// Times every available backend on pure-`category` lanes. `iters` passes
/// over [`BENCH_LANES`] lanes make up one trial; the best of five trials is
/// reported.
pub fn bench_hist(category: Category, iters: usize) -> Result<HistBenchReport, BenchError> {
    if iters == 0 {
        return Err(BenchError::InvalidArgs("iters must be positive"));
    }
    let data = category_lanes(category, BENCH_LANES, 0x5eed ^ category.number() as u64);
    let lanes = (iters * BENCH_LANES) as f64;
    let scalar = time_ns(iters, || {
        black_box(hist_scalar(black_box(&data), WIDTH));
    }) / lanes;
    let mut rows = vec![BenchRow {
        category,
        backend: "scalar",
        ns_per_lane: scalar,
        speedup: 1.0,
    }];
    for backend in Backend::available() {
        let ns = time_ns(iters, || {
            black_box(hist_avc_with(black_box(&data), WIDTH, backend));
        }) / lanes;
        rows.push(BenchRow {
            category,
            backend: backend.name(),
            ns_per_lane: ns,
            speedup: scalar / ns,
        });
    }
    Ok(HistBenchReport { category, rows })
}
