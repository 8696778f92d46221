//! 16-bin histograms computed one 16-value lane at a time.
//!
//! Each lane is first classified into one of four categories by looking at
//! its bin indices:
//!
//! | category | lane contents                       | update                      |
//! |----------|-------------------------------------|-----------------------------|
//! | 1        | sixteen distinct bins               | gather, +1, scatter         |
//! | 2        | anything else                       | conflict-count scatter      |
//! | 3        | one bin, not the overflow bin       | `hist[b] += 16`             |
//! | 4        | every value in the overflow bin     | `hist[15] += 16`            |
//!
//! The classifier needs one compare, one conflict and one compare-to-zero.
//! Category 2 uses the conflict vector twice: its population count gives the
//! number of earlier duplicates of each lane, and the complement of its
//! OR-reduction marks the last occurrence of every distinct bin. Only those
//! last-occurrence lanes are scattered, each carrying `old + multiplicity`.
//!
//! Values at or beyond the overflow bin are clamped to bin 15 before the
//! conflict step, so every path agrees with [`hist_scalar`].

mod avc;
#[cfg(target_arch = "x86_64")]
mod avx512;
pub mod bench;
pub mod lanes;

use std::fmt;

pub use avc::classify_category;
pub use lanes::{LaneMask, LaneVector, LANES};

pub const NBINS: usize = 16;
pub const OVERFLOW_BIN: u32 = (NBINS - 1) as u32;
pub const DEFAULT_BIN_WIDTH: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    /// All sixteen values fall into different bins.
    Cat1AllDistinctBins,
    Cat2Random,
    /// All values share one bin other than the overflow bin.
    Cat3AllOneBin,
    /// All values are in the overflow bin.
    Cat4AllOverflow,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Cat1AllDistinctBins,
        Category::Cat2Random,
        Category::Cat3AllOneBin,
        Category::Cat4AllOverflow,
    ];

    pub fn number(self) -> u8 {
        match self {
            Category::Cat1AllDistinctBins => 1,
            Category::Cat2Random => 2,
            Category::Cat3AllOneBin => 3,
            Category::Cat4AllOverflow => 4,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cat{}", self.number())
    }
}

/// Sixteen 64-bit counters; `bin(x) = min(x / bin_width, 15)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Histogram16 {
    pub bins: [u64; NBINS],
    pub bin_width: u32,
}

impl Histogram16 {
    pub fn new(bin_width: u32) -> Self {
        assert!(bin_width > 0, "bin width must be positive");
        Histogram16 {
            bins: [0; NBINS],
            bin_width,
        }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn bin_of(&self, x: u32) -> usize {
        ((x / self.bin_width).min(OVERFLOW_BIN)) as usize
    }

    fn absorb(&mut self, work: &[u32; NBINS]) {
        for (b, &w) in self.bins.iter_mut().zip(work) {
            *b += w as u64;
        }
    }
}

/// Loop-based reference histogram.
pub fn hist_scalar(values: &[u32], bin_width: u32) -> Histogram16 {
    let mut h = Histogram16::new(bin_width);
    for &x in values {
        h.bins[((x / bin_width).min(OVERFLOW_BIN)) as usize] += 1;
    }
    h
}

/// Loop-based histogram with an arbitrary number of bins; the last bin
/// absorbs everything beyond it.
pub fn hist_scalar_bins(values: &[u32], bin_width: u32, nbins: usize) -> Vec<u64> {
    assert!(bin_width > 0 && nbins > 0);
    let mut bins = vec![0u64; nbins];
    let last = (nbins - 1) as u64;
    for &x in values {
        bins[((x / bin_width) as u64).min(last) as usize] += 1;
    }
    bins
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Lane emulation in plain integer code. Always available.
    Portable,
    /// 512-bit lanes with hardware conflict detection.
    Avx512,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Portable => "portable",
            Backend::Avx512 => "avx512",
        }
    }

    pub fn is_available(self) -> bool {
        match self {
            Backend::Portable => true,
            #[cfg(target_arch = "x86_64")]
            Backend::Avx512 => avx512::available(),
            #[cfg(not(target_arch = "x86_64"))]
            Backend::Avx512 => false,
        }
    }

    /// Fastest backend usable on this machine.
    pub fn best() -> Backend {
        if Backend::Avx512.is_available() {
            Backend::Avx512
        } else {
            Backend::Portable
        }
    }

    pub fn available() -> Vec<Backend> {
        [Backend::Portable, Backend::Avx512]
            .into_iter()
            .filter(|b| b.is_available())
            .collect()
    }
}

// Keeps the 32-bit working counters far from overflow.
const FLUSH_EVERY: usize = 1 << 28;

/// Lane histogram with the default bin width and the best backend.
pub fn hist_avc(values: &[u32]) -> Histogram16 {
    hist_avc_with(values, DEFAULT_BIN_WIDTH, Backend::best())
}

/// Lane histogram. An unavailable backend falls back to [`Backend::Portable`].
pub fn hist_avc_with(values: &[u32], bin_width: u32, backend: Backend) -> Histogram16 {
    let mut h = Histogram16::new(bin_width);
    for part in values.chunks(FLUSH_EVERY) {
        let mut work = [0u32; NBINS];
        accumulate(part, bin_width, backend, &mut work);
        h.absorb(&work);
    }
    h
}

fn accumulate(values: &[u32], bin_width: u32, backend: Backend, work: &mut [u32; NBINS]) {
    #[cfg(target_arch = "x86_64")]
    if backend == Backend::Avx512 && bin_width.is_power_of_two() && avx512::available() {
        avx512::accumulate(values, bin_width.trailing_zeros(), work);
        return;
    }
    let _ = backend;
    avc::accumulate(values, bin_width, work);
}
