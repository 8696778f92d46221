//! Portable 16-lane integer vectors with the semantics of the 512-bit
//! conflict-detection instruction set. These are the reference semantics
//! for the hardware backend.

use std::ops::{BitAnd, BitOr, Not};

pub const LANES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct LaneVector(pub [u32; LANES]);

/// Bit `i` corresponds to lane `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct LaneMask(pub u16);

impl LaneMask {
    pub const ALL: LaneMask = LaneMask(0xffff);
    pub const NONE: LaneMask = LaneMask(0);

    pub fn is_all(self) -> bool {
        self.0 == 0xffff
    }

    pub fn test(self, lane: usize) -> bool {
        self.0 >> lane & 1 == 1
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    /// True when at most one lane is set (`m & (m - 1) == 0`).
    pub fn at_most_one(self) -> bool {
        self.0 & self.0.wrapping_sub(1) == 0
    }
}

impl Not for LaneMask {
    type Output = LaneMask;
    fn not(self) -> LaneMask {
        LaneMask(!self.0)
    }
}

impl BitAnd for LaneMask {
    type Output = LaneMask;
    fn bitand(self, rhs: LaneMask) -> LaneMask {
        LaneMask(self.0 & rhs.0)
    }
}

impl BitOr for LaneMask {
    type Output = LaneMask;
    fn bitor(self, rhs: LaneMask) -> LaneMask {
        LaneMask(self.0 | rhs.0)
    }
}

fn mask_from(f: impl Fn(usize) -> bool) -> LaneMask {
    LaneMask((0..LANES).fold(0u16, |m, i| m | ((f(i) as u16) << i)))
}

impl LaneVector {
    pub fn splat(v: u32) -> Self {
        LaneVector([v; LANES])
    }

    /// Loads the first 16 values of `src`.
    pub fn load(src: &[u32]) -> Self {
        let mut v = [0u32; LANES];
        v.copy_from_slice(&src[..LANES]);
        LaneVector(v)
    }

    pub fn lane(&self, i: usize) -> u32 {
        self.0[i]
    }

    fn map(self, f: impl Fn(u32) -> u32) -> Self {
        LaneVector(self.0.map(f))
    }

    fn zip(self, b: Self, f: impl Fn(u32, u32) -> u32) -> Self {
        let mut out = [0u32; LANES];
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(self.0[i], b.0[i]);
        }
        LaneVector(out)
    }

    pub fn cmpge(self, b: Self) -> LaneMask {
        mask_from(|i| self.0[i] >= b.0[i])
    }

    pub fn cmpgt(self, b: Self) -> LaneMask {
        mask_from(|i| self.0[i] > b.0[i])
    }

    pub fn cmpeq(self, b: Self) -> LaneMask {
        mask_from(|i| self.0[i] == b.0[i])
    }

    /// Lane `i` holds the mask of lanes `j < i` with an equal value.
    pub fn conflict(self) -> Self {
        let mut out = [0u32; LANES];
        for i in 1..LANES {
            for j in 0..i {
                if self.0[j] == self.0[i] {
                    out[i] |= 1 << j;
                }
            }
        }
        LaneVector(out)
    }

    pub fn reduce_or(self) -> u32 {
        self.0.iter().fold(0, |a, &b| a | b)
    }

    pub fn popcnt(self) -> Self {
        self.map(u32::count_ones)
    }

    pub fn add(self, b: Self) -> Self {
        self.zip(b, u32::wrapping_add)
    }

    pub fn min(self, b: Self) -> Self {
        self.zip(b, u32::min)
    }

    pub fn shr(self, n: u32) -> Self {
        self.map(|x| x >> n)
    }

    pub fn div(self, d: u32) -> Self {
        self.map(|x| x / d)
    }

    /// Lane `i` receives `self[idx[i] & 15]`.
    pub fn permute(self, idx: Self) -> Self {
        idx.map(|j| self.0[(j as usize) & (LANES - 1)])
    }

    /// Lane `i` receives `base[idx[i]]`.
    pub fn gather(base: &[u32], idx: Self) -> Self {
        Self::gather_masked(Self::default(), LaneMask::ALL, base, idx)
    }

    /// Inactive lanes keep their value from `src` and do not touch memory.
    pub fn gather_masked(src: Self, mask: LaneMask, base: &[u32], idx: Self) -> Self {
        let mut out = src.0;
        for (i, o) in out.iter_mut().enumerate() {
            if mask.test(i) {
                let at = idx.0[i] as usize;
                debug_assert!(at < base.len(), "gather index {at} out of range");
                *o = base[at];
            }
        }
        LaneVector(out)
    }

    /// Stores lane `i` to `base[idx[i]]`, lowest lane first, so the highest
    /// lane wins when indices repeat.
    pub fn scatter(self, base: &mut [u32], idx: Self) {
        self.scatter_masked(base, LaneMask::ALL, idx)
    }

    pub fn scatter_masked(self, base: &mut [u32], mask: LaneMask, idx: Self) {
        for i in 0..LANES {
            if mask.test(i) {
                let at = idx.0[i] as usize;
                debug_assert!(at < base.len(), "scatter index {at} out of range");
                base[at] = self.0[i];
            }
        }
    }
}
