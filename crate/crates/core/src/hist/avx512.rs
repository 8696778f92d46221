//! Hardware lanes: AVX-512F with conflict detection (CD). The population
//! count uses VPOPCNTDQ when present and a SWAR sequence otherwise.

use std::arch::x86_64::*;
use std::sync::OnceLock;

use super::{NBINS, OVERFLOW_BIN};

#[derive(Clone, Copy)]
struct Features {
    cd: bool,
    popcnt: bool,
}

fn features() -> Features {
    static F: OnceLock<Features> = OnceLock::new();
    *F.get_or_init(|| {
        let cd = is_x86_feature_detected!("avx512f") && is_x86_feature_detected!("avx512cd");
        Features {
            cd,
            popcnt: cd && is_x86_feature_detected!("avx512vpopcntdq"),
        }
    })
}

pub(super) fn available() -> bool {
    features().cd
}

pub(super) fn accumulate(values: &[u32], shift: u32, hist: &mut [u32; NBINS]) {
    let f = features();
    assert!(f.cd, "avx512 backend used without CPU support");
    // SAFETY: the required target features were detected at runtime.
    unsafe {
        if f.popcnt {
            accumulate_vpopcnt(values, shift, hist)
        } else {
            accumulate_swar(values, shift, hist)
        }
    }
}

#[inline(always)]
unsafe fn popcnt_swar(x: __m512i) -> __m512i {
    let m1 = _mm512_set1_epi32(0x5555_5555);
    let m2 = _mm512_set1_epi32(0x3333_3333);
    let m4 = _mm512_set1_epi32(0x0f0f_0f0f);
    let x = _mm512_sub_epi32(x, _mm512_and_si512(_mm512_srli_epi32::<1>(x), m1));
    let x = _mm512_add_epi32(_mm512_and_si512(x, m2), _mm512_and_si512(_mm512_srli_epi32::<2>(x), m2));
    let x = _mm512_and_si512(_mm512_add_epi32(x, _mm512_srli_epi32::<4>(x)), m4);
    _mm512_srli_epi32::<24>(_mm512_mullo_epi32(x, _mm512_set1_epi32(0x0101_0101)))
}

macro_rules! lane_loop {
    ($values:ident, $shift:ident, $hist:ident, $popcnt:expr) => {{
        let top = _mm512_set1_epi32(OVERFLOW_BIN as i32);
        let zero = _mm512_setzero_si512();
        let one = _mm512_set1_epi32(1);
        let count = _mm_cvtsi32_si128($shift as i32);
        let table = $hist.as_mut_ptr() as *mut i32;
        let mut lanes = $values.chunks_exact(16);
        for lane in &mut lanes {
            let len = _mm512_loadu_si512(lane.as_ptr() as *const __m512i);
            let bins = _mm512_srl_epi32(len, count);
            if _mm512_cmpge_epu32_mask(bins, top) == 0xffff {
                *table.add(NBINS - 1) += 16;
                continue;
            }
            let bins = _mm512_min_epu32(bins, top);
            let conflict = _mm512_conflict_epi32(bins);
            let unique = _mm512_cmpeq_epi32_mask(conflict, zero);
            if unique == 0xffff {
                // sixteen distinct clamped bins cover the whole table, so
                // the gather/+1/scatter is a full-table increment
                let counts = _mm512_loadu_si512(table as *const __m512i);
                _mm512_storeu_si512(table as *mut __m512i, _mm512_add_epi32(counts, one));
            } else if unique & unique.wrapping_sub(1) == 0 {
                let b = ((lane[0] >> $shift).min(OVERFLOW_BIN)) as usize;
                *table.add(b) += 16;
            } else {
                let last = !(_mm512_reduce_or_epi32(conflict) as u16);
                let dups = $popcnt(conflict);
                let counts = _mm512_mask_i32gather_epi32::<4>(zero, last, bins, table as *const i32);
                let counts = _mm512_add_epi32(_mm512_add_epi32(counts, one), dups);
                _mm512_mask_i32scatter_epi32::<4>(table, last, bins, counts);
            }
        }
        for &x in lanes.remainder() {
            *table.add(((x >> $shift).min(OVERFLOW_BIN)) as usize) += 1;
        }
    }};
}

#[target_feature(enable = "avx512f,avx512cd")]
unsafe fn accumulate_swar(values: &[u32], shift: u32, hist: &mut [u32; NBINS]) {
    lane_loop!(values, shift, hist, |c| popcnt_swar(c))
}

#[target_feature(enable = "avx512f,avx512cd,avx512vpopcntdq")]
unsafe fn accumulate_vpopcnt(values: &[u32], shift: u32, hist: &mut [u32; NBINS]) {
    lane_loop!(values, shift, hist, |c| _mm512_popcnt_epi32(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swar_popcount_matches() {
        if !available() {
            return;
        }
        let v: [u32; 16] = std::array::from_fn(|i| (i as u32).wrapping_mul(0x9e37_79b9));
        let mut out = [0u32; 16];
        unsafe {
            #[target_feature(enable = "avx512f")]
            unsafe fn run(v: &[u32; 16], out: &mut [u32; 16]) {
                let x = _mm512_loadu_si512(v.as_ptr() as *const __m512i);
                _mm512_storeu_si512(out.as_mut_ptr() as *mut __m512i, popcnt_swar(x));
            }
            run(&v, &mut out);
        }
        for i in 0..16 {
            assert_eq!(out[i], v[i].count_ones());
        }
    }

    #[test]
    fn both_popcount_variants_agree_with_scalar() {
        if !available() {
            return;
        }
        let v: Vec<u32> = (0..4099u32).map(|i| i.wrapping_mul(2654435761) >> 21).collect();
        let want = super::super::hist_scalar(&v, 64);
        let mut a = [0u32; 16];
        unsafe { accumulate_swar(&v, 6, &mut a) };
        assert_eq!(a.map(u64::from), want.bins);
        if features().popcnt {
            let mut b = [0u32; 16];
            unsafe { accumulate_vpopcnt(&v, 6, &mut b) };
            assert_eq!(b, a);
        }
    }
}
