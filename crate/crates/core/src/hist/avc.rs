use super::lanes::{LaneMask, LaneVector, LANES};
use super::{Category, NBINS, OVERFLOW_BIN};

/// Categorizes a lane of raw (unclamped) bin indices.
pub fn classify_category(bins: LaneVector) -> Category {
    let top = LaneVector::splat(OVERFLOW_BIN);
    if bins.cmpge(top).is_all() {
        return Category::Cat4AllOverflow;
    }
    let unique = bins.min(top).conflict().cmpeq(LaneVector::splat(0));
    if unique.is_all() {
        Category::Cat1AllDistinctBins
    } else if unique.at_most_one() {
        Category::Cat3AllOneBin
    } else {
        Category::Cat2Random
    }
}

#[derive(Clone, Copy)]
enum Divisor {
    Shift(u32),
    Div(u32),
}

impl Divisor {
    fn new(width: u32) -> Self {
        if width.is_power_of_two() {
            Divisor::Shift(width.trailing_zeros())
        } else {
            Divisor::Div(width)
        }
    }

    fn lanes(self, v: LaneVector) -> LaneVector {
        match self {
            Divisor::Shift(s) => v.shr(s),
            Divisor::Div(d) => v.div(d),
        }
    }

    fn scalar(self, x: u32) -> u32 {
        match self {
            Divisor::Shift(s) => x >> s,
            Divisor::Div(d) => x / d,
        }
    }
}

/// Adds one lane of values to `hist`; returns the lane's category.
fn accumulate_lane(len: LaneVector, div: Divisor, hist: &mut [u32; NBINS]) -> Category {
    let top = LaneVector::splat(OVERFLOW_BIN);
    let bins = div.lanes(len);
    let overflow = bins.cmpge(top);
    if overflow.is_all() {
        hist[NBINS - 1] += LANES as u32;
        return Category::Cat4AllOverflow;
    }
    let bins = bins.min(top);
    let conflict = bins.conflict();
    let unique = conflict.cmpeq(LaneVector::splat(0));
    let one = LaneVector::splat(1);
    if unique.is_all() {
        let counts = LaneVector::gather(hist, bins);
        counts.add(one).scatter(hist, bins);
        Category::Cat1AllDistinctBins
    } else if unique.at_most_one() {
        hist[bins.lane(0) as usize] += LANES as u32;
        Category::Cat3AllOneBin
    } else {
        let last = !LaneMask(conflict.reduce_or() as u16);
        let dups = conflict.popcnt();
        let counts = LaneVector::gather_masked(LaneVector::splat(0), last, hist, bins);
        let counts = counts.add(one).add(dups);
        counts.scatter_masked(hist, last, bins);
        Category::Cat2Random
    }
}

pub(super) fn accumulate(values: &[u32], width: u32, hist: &mut [u32; NBINS]) {
    let div = Divisor::new(width);
    let mut lanes = values.chunks_exact(LANES);
    for lane in &mut lanes {
        accumulate_lane(LaneVector::load(lane), div, hist);
    }
    for &x in lanes.remainder() {
        hist[div.scalar(x).min(OVERFLOW_BIN) as usize] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Category by counting: overflow lanes and distinct clamped bins.
    fn brute_category(bins: &[u32; 16]) -> Category {
        if bins.iter().all(|&b| b >= 15) {
            return Category::Cat4AllOverflow;
        }
        let mut seen = [false; 16];
        for &b in bins {
            seen[b.min(15) as usize] = true;
        }
        match seen.iter().filter(|&&s| s).count() {
            16 => Category::Cat1AllDistinctBins,
            1 => Category::Cat3AllOneBin,
            _ => Category::Cat2Random,
        }
    }

    fn lens_for_bins(bins: &[u32]) -> Vec<u32> {
        bins.iter().map(|b| b * 64).collect()
    }

    #[test]
    fn named_examples() {
        let distinct: Vec<u32> = (0..16).map(|b| b * 64).collect();
        assert_eq!(classify_category(LaneVector::load(&distinct).shr(6)), Category::Cat1AllDistinctBins);
        let all_big = [960u32; 16];
        assert_eq!(classify_category(LaneVector::load(&all_big).shr(6)), Category::Cat4AllOverflow);
        let all_100 = [100u32; 16];
        assert_eq!(classify_category(LaneVector::load(&all_100).shr(6)), Category::Cat3AllOneBin);
        let mut one_dup: Vec<u32> = vec![0, 0];
        one_dup.extend((1..15).map(|b| b * 64));
        let bins = LaneVector::load(&one_dup).shr(6);
        assert_eq!(classify_category(bins), Category::Cat2Random);
        assert_eq!(brute_category(&bins.0), Category::Cat2Random);
    }

    #[test]
    fn partial_overflow_lanes_clamp_to_last_bin() {
        // 15 distinct in-range bins plus two overflow values: bins 14 and
        // two lanes clamped to 15 collide
        let mut b: Vec<u32> = (0..14).collect();
        b.extend([15, 40]);
        let bins = LaneVector::load(&b);
        assert_eq!(classify_category(bins), Category::Cat2Random);
        let mut h = [0u32; 16];
        accumulate(&lens_for_bins(&b), 64, &mut h);
        assert_eq!(h[15], 2);
        assert_eq!(h[14], 0);
        // 15 and 200 mixed with one in-range bin is not category 4
        let mut b = vec![3u32];
        b.extend([200u32; 15]);
        assert_eq!(classify_category(LaneVector::load(&b)), Category::Cat2Random);
    }

    #[test]
    fn lane_paths_report_their_category() {
        let mut h = [0u32; 16];
        let d = Divisor::new(64);
        let cat1: Vec<u32> = (0..16).rev().map(|b| b * 64 + 1).collect();
        assert_eq!(accumulate_lane(LaneVector::load(&cat1), d, &mut h), Category::Cat1AllDistinctBins);
        assert_eq!(h, [1; 16]);
        assert_eq!(accumulate_lane(LaneVector::splat(70), d, &mut h), Category::Cat3AllOneBin);
        assert_eq!(h[1], 17);
        assert_eq!(accumulate_lane(LaneVector::splat(5000), d, &mut h), Category::Cat4AllOverflow);
        assert_eq!(h[15], 17);
    }

    #[test]
    fn classifier_matches_brute_force_on_random_lanes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let alphabet = [0u32, 1, 15, 16, 200];
        for _ in 0..20_000 {
            let b: [u32; 16] = std::array::from_fn(|_| alphabet[rng.random_range(0..5)]);
            assert_eq!(classify_category(LaneVector(b)), brute_category(&b), "{b:?}");
            let b: [u32; 16] = std::array::from_fn(|_| rng.random_range(0..20));
            assert_eq!(classify_category(LaneVector(b)), brute_category(&b), "{b:?}");
        }
    }
}
