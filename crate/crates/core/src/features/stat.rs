use super::FeatureError;
use crate::flow::{Direction, Flow};
use crate::hist::{hist_avc_with, Backend};

pub const PAYLOAD_BIN_WIDTH: u32 = 64;
pub const HEADER_BIN_WIDTH: u32 = 4;
pub const IAT_BIN_WIDTH_US: u32 = 4096;

/// Running min/max/mean/sample-std (Welford).
#[derive(Default)]
struct Moments {
    n: u64,
    min: f64,
    max: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        if self.n == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0).sqrt()
        }
    }

    fn write(&self, out: &mut [f64]) {
        out[0] = self.min;
        out[1] = self.max;
        out[2] = self.mean;
        out[3] = self.std();
    }
}

#[derive(Default)]
struct Scope {
    packets: u64,
    bytes: u64,
    payload: Moments,
    iat: Moments,
    last_ts: Option<u64>,
}

impl Scope {
    fn push(&mut self, ts: u64, header: u32, payload: u32) -> Option<u64> {
        self.packets += 1;
        self.bytes += header as u64 + payload as u64;
        self.payload.push(payload as f64);
        let gap = self.last_ts.map(|t| ts.saturating_sub(t));
        if let Some(g) = gap {
            self.iat.push(g as f64);
        }
        self.last_ts = Some(ts);
        gap
    }

    fn write(&self, out: &mut [f64]) {
        out[0] = self.packets as f64;
        out[1] = self.bytes as f64;
        self.payload.write(&mut out[2..6]);
        self.iat.write(&mut out[6..10]);
    }
}

/// Fills the 30 statistics followed by the payload, header and
/// inter-arrival histograms. `out` must hold 78 values.
pub fn extract_stat(flow: &Flow, out: &mut [f64]) -> Result<(), FeatureError> {
    if flow.packets.is_empty() {
        return Err(FeatureError::EmptyFlow);
    }
    let n = flow.packets.len();
    let mut scopes: [Scope; 3] = Default::default();
    let mut payload = Vec::with_capacity(n);
    let mut header = Vec::with_capacity(n);
    let mut iat = Vec::with_capacity(n);
    for p in &flow.packets {
        let d = match p.dir {
            Direction::Fwd => 0,
            Direction::Rev => 1,
        };
        scopes[d].push(p.ts_us, p.header_len, p.payload_len);
        if let Some(gap) = scopes[2].push(p.ts_us, p.header_len, p.payload_len) {
            iat.push(gap.min(u32::MAX as u64) as u32);
        }
        payload.push(p.payload_len);
        header.push(p.header_len);
    }
    for (i, s) in scopes.iter().enumerate() {
        s.write(&mut out[i * 10..i * 10 + 10]);
    }
    let backend = Backend::best();
    for (slot, (values, width)) in [
        (&payload, PAYLOAD_BIN_WIDTH),
        (&header, HEADER_BIN_WIDTH),
        (&iat, IAT_BIN_WIDTH_US),
    ]
    .into_iter()
    .enumerate()
    {
        let h = hist_avc_with(values, width, backend);
        let base = 30 + slot * 16;
        for (o, &b) in out[base..base + 16].iter_mut().zip(&h.bins) {
            *o = b as f64;
        }
    }
    Ok(())
}
