use std::collections::HashSet;
use std::time::Instant;

use crate::features::{extract, server_name, FeatureError, FeatureVector};
use crate::flow::{EvictReason, Flow, FlowConfig, FlowEvent, FlowKey, FlowTable, FlowTableStats, ProtocolLabel};
use crate::packet_io::PacketRecord;

use super::PipelineError;

pub const DEFAULT_MIN_PKTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamConfig {
    pub flow: FlowConfig,
    /// A flow is snapshotted once it holds this many packets, or when it is
    /// evicted if that comes first.
    pub min_pkts: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            flow: FlowConfig::default(),
            min_pkts: DEFAULT_MIN_PKTS,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.min_pkts == 0 {
            return Err(PipelineError::InvalidConfig("min_pkts must be at least 1".into()));
        }
        if self.flow.max_flows == 0 || self.flow.pkt_cap == 0 {
            return Err(PipelineError::InvalidConfig("flow table limits must be nonzero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    MinPackets,
    Evicted(EvictReason),
}

impl Trigger {
    pub fn name(self) -> &'static str {
        match self {
            Trigger::MinPackets => "min_pkts",
            Trigger::Evicted(EvictReason::IdleTimeout) => "idle",
            Trigger::Evicted(EvictReason::Finished) => "finished",
            Trigger::Evicted(EvictReason::PacketCap) => "pkt_cap",
            Trigger::Evicted(EvictReason::TableFull) => "table_full",
            Trigger::Evicted(EvictReason::Flush) => "flush",
        }
    }
}

/// Features of one flow taken exactly once, at its trigger point.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSnapshot {
    pub key: FlowKey,
    pub trigger: Trigger,
    pub packets: usize,
    pub proto: ProtocolLabel,
    pub server_name: Option<String>,
    pub features: Result<FeatureVector, FeatureError>,
    /// Time spent in feature extraction.
    pub extract_ns: u64,
}

fn snapshot(flow: &Flow, trigger: Trigger) -> FlowSnapshot {
    let t = Instant::now();
    let features = extract(flow);
    let extract_ns = t.elapsed().as_nanos() as u64;
    FlowSnapshot {
        key: flow.key,
        trigger,
        packets: flow.packets.len(),
        proto: flow.proto,
        server_name: server_name(flow),
        features,
        extract_ns,
    }
}

/// Incremental packet → snapshot driver on top of one [`FlowTable`].
#[derive(Debug)]
pub struct SnapshotStream {
    table: FlowTable,
    min_pkts: usize,
    /// Live flows already snapshotted early.
    taken: HashSet<FlowKey>,
}

impl SnapshotStream {
    pub fn new(cfg: StreamConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(SnapshotStream {
            table: FlowTable::new(cfg.flow),
            min_pkts: cfg.min_pkts,
            taken: HashSet::new(),
        })
    }

    pub fn push(&mut self, pkt: &PacketRecord, out: &mut Vec<FlowSnapshot>) {
        for ev in self.table.insert(pkt) {
            match ev {
                FlowEvent::New(key) | FlowEvent::Appended(key) => {
                    if let Some(flow) = self.table.get(&key) {
                        if flow.packets.len() >= self.min_pkts && self.taken.insert(key) {
                            out.push(snapshot(flow, Trigger::MinPackets));
                        }
                    }
                }
                FlowEvent::Evicted(flow, reason) => self.evicted(&flow, reason, out),
                FlowEvent::Skipped => {}
            }
        }
    }

    fn evicted(&mut self, flow: &Flow, reason: EvictReason, out: &mut Vec<FlowSnapshot>) {
        if !self.taken.remove(&flow.key) {
            out.push(snapshot(flow, Trigger::Evicted(reason)));
        }
    }

    /// Evicts every remaining flow.
    pub fn finish(&mut self, out: &mut Vec<FlowSnapshot>) {
        for flow in self.table.flush() {
            self.evicted(&flow, EvictReason::Flush, out);
        }
    }

    pub fn stats(&self) -> FlowTableStats {
        self.table.stats()
    }
}

/// Runs a whole trace and returns every snapshot in emission order.
pub fn snapshots<'a>(
    packets: impl IntoIterator<Item = &'a PacketRecord>,
    cfg: StreamConfig,
) -> Result<(Vec<FlowSnapshot>, FlowTableStats), PipelineError> {
    let mut s = SnapshotStream::new(cfg)?;
    let mut out = Vec::new();
    for p in packets {
        s.push(p, &mut out);
    }
    s.finish(&mut out);
    Ok((out, s.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet_io::{synth_trace, Dist, SynthSpec};

    fn trace(flows: usize, pkts: f64) -> Vec<PacketRecord> {
        synth_trace(&SynthSpec {
            flows,
            packets_per_flow: Dist::Const(pkts),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn one_snapshot_per_flow() {
        let t = trace(20, 12.0);
        let (s, stats) = snapshots(&t, StreamConfig::default()).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(stats.flows_created, 20);
        assert!(s.iter().all(|s| s.trigger == Trigger::MinPackets && s.packets == 8));
        let keys: HashSet<_> = s.iter().map(|s| s.key).collect();
        assert_eq!(keys.len(), 20);
    }

    #[test]
    fn short_flows_are_taken_at_flush() {
        let t = trace(5, 3.0);
        let (s, _) = snapshots(&t, StreamConfig::default()).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|s| s.trigger == Trigger::Evicted(EvictReason::Flush) && s.packets == 3));
    }

    #[test]
    fn empty_trace_and_bad_config() {
        let (s, _) = snapshots(&[], StreamConfig::default()).unwrap();
        assert!(s.is_empty());
        let cfg = StreamConfig {
            min_pkts: 0,
            ..Default::default()
        };
        assert!(matches!(SnapshotStream::new(cfg), Err(PipelineError::InvalidConfig(_))));
    }

    #[test]
    fn reused_key_after_idle_eviction_is_a_new_flow() {
        let mut t = trace(1, 10.0);
        let mut again = t.clone();
        let shift = t.last().unwrap().ts_us + 60_000_000;
        for p in &mut again {
            p.ts_us += shift;
        }
        t.extend(again);
        let (s, _) = snapshots(&t, StreamConfig::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].key, s[1].key);
    }
}
