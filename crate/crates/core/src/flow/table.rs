use std::collections::{BTreeSet, HashMap};

use smallvec::SmallVec;

use super::{detect_protocol, Direction, Flow, FlowKey, FlowState, ProtocolLabel};
use crate::packet_io::{PacketRecord, IPPROTO_TCP, IPPROTO_UDP, TCP_FIN, TCP_RST};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowConfig {
    pub idle_timeout_us: u64,
    pub max_flows: usize,
    pub pkt_cap: usize,
    pub reassembly_budget: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            idle_timeout_us: 30_000_000,
            max_flows: 1 << 20,
            pkt_cap: 256,
            reassembly_budget: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvictReason {
    IdleTimeout,
    /// TCP RST, or FIN seen in both directions.
    Finished,
    PacketCap,
    /// The table was full; the least recently active flow made room.
    TableFull,
    Flush,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowEvent {
    New(FlowKey),
    Appended(FlowKey),
    Evicted(Box<Flow>, EvictReason),
    /// Not TCP or UDP; not aggregated.
    Skipped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowTableStats {
    pub packets: u64,
    pub skipped: u64,
    pub flows_created: u64,
    pub idle_evictions: u64,
    pub finished_evictions: u64,
    pub cap_evictions: u64,
    pub table_full_evictions: u64,
}

/// Single-writer flow table. Parallel deployments shard packets by
/// [`FlowKey`] hash across independent tables.
#[derive(Debug)]
pub struct FlowTable {
    cfg: FlowConfig,
    flows: HashMap<FlowKey, Flow>,
    /// (last activity, creation seq) ordering for idle and LRU eviction.
    by_activity: BTreeSet<(u64, u64, FlowKey)>,
    next_seq: u64,
    stats: FlowTableStats,
}

pub type Events = SmallVec<[FlowEvent; 2]>;

impl FlowTable {
    pub fn new(cfg: FlowConfig) -> Self {
        FlowTable {
            cfg,
            flows: HashMap::new(),
            by_activity: BTreeSet::new(),
            next_seq: 0,
            stats: FlowTableStats::default(),
        }
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn stats(&self) -> FlowTableStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn get(&self, key: &FlowKey) -> Option<&Flow> {
        self.flows.get(key)
    }

    /// Adds one packet. Events come in order: evictions made to admit the
    /// packet, then `New`/`Appended`, then the packet's own flow if the
    /// packet completed it.
    pub fn insert(&mut self, pkt: &PacketRecord) -> Events {
        let mut events = Events::new();
        self.stats.packets += 1;
        if pkt.ip_proto != IPPROTO_TCP && pkt.ip_proto != IPPROTO_UDP {
            self.stats.skipped += 1;
            events.push(FlowEvent::Skipped);
            return events;
        }

        while let Some(&(last, _, key)) = self.by_activity.first() {
            if pkt.ts_us.saturating_sub(last) <= self.cfg.idle_timeout_us {
                break;
            }
            let flow = self.evict(&key, EvictReason::IdleTimeout);
            events.push(FlowEvent::Evicted(Box::new(flow), EvictReason::IdleTimeout));
        }

        let key = FlowKey::of(pkt);
        let flow = match self.flows.get_mut(&key) {
            Some(flow) => {
                self.by_activity.remove(&(flow.last_ts(), flow.seq, key));
                events.push(FlowEvent::Appended(key));
                flow
            }
            None => {
                if self.flows.len() >= self.cfg.max_flows.max(1) {
                    if let Some(&(_, _, victim)) = self.by_activity.first() {
                        let flow = self.evict(&victim, EvictReason::TableFull);
                        events.push(FlowEvent::Evicted(Box::new(flow), EvictReason::TableFull));
                    }
                }
                let seq = self.next_seq;
                self.next_seq += 1;
                self.stats.flows_created += 1;
                events.push(FlowEvent::New(key));
                self.flows
                    .entry(key)
                    .or_insert_with(|| Flow::new(key, (pkt.src_ip, pkt.src_port), seq))
            }
        };

        let dir = flow.push(pkt, self.cfg.reassembly_budget);
        if flow.proto == ProtocolLabel::Unknown && pkt.payload_len > 0 {
            flow.proto = detect_protocol(flow);
        }
        self.by_activity.insert((flow.last_ts(), flow.seq, key));

        let mut done = None;
        if pkt.ip_proto == IPPROTO_TCP {
            if pkt.tcp_flags & TCP_FIN != 0 {
                flow.fin_seen[dir.index()] = true;
            }
            if pkt.tcp_flags & TCP_RST != 0 || flow.fin_seen == [true, true] {
                done = Some(EvictReason::Finished);
            }
        }
        if done.is_none() && flow.packets.len() >= self.cfg.pkt_cap {
            done = Some(EvictReason::PacketCap);
        }
        if let Some(reason) = done {
            let flow = self.evict(&key, reason);
            events.push(FlowEvent::Evicted(Box::new(flow), reason));
        }
        events
    }

    fn evict(&mut self, key: &FlowKey, reason: EvictReason) -> Flow {
        let mut flow = self.flows.remove(key).expect("evicting a flow that is not in the table");
        self.by_activity.remove(&(flow.last_ts(), flow.seq, *key));
        flow.state = match reason {
            EvictReason::IdleTimeout | EvictReason::TableFull => FlowState::TimedOut,
            _ => FlowState::Finished,
        };
        if flow.proto == ProtocolLabel::Unknown {
            flow.proto = detect_protocol(&flow);
        }
        match reason {
            EvictReason::IdleTimeout => self.stats.idle_evictions += 1,
            EvictReason::Finished => self.stats.finished_evictions += 1,
            EvictReason::PacketCap => self.stats.cap_evictions += 1,
            EvictReason::TableFull => self.stats.table_full_evictions += 1,
            EvictReason::Flush => {}
        }
        flow
    }

    /// Evicts every flow idle for longer than the timeout at `now_us`.
    pub fn expire(&mut self, now_us: u64) -> Vec<Flow> {
        let mut out = Vec::new();
        while let Some(&(last, _, key)) = self.by_activity.first() {
            if now_us.saturating_sub(last) <= self.cfg.idle_timeout_us {
                break;
            }
            out.push(self.evict(&key, EvictReason::IdleTimeout));
        }
        out
    }

    /// Evicts all remaining flows in creation order.
    pub fn flush(&mut self) -> Vec<Flow> {
        let mut keys: Vec<(u64, FlowKey)> = self.flows.values().map(|f| (f.seq, f.key)).collect();
        keys.sort();
        keys.into_iter()
            .map(|(_, k)| self.evict(&k, EvictReason::Flush))
            .collect()
    }
}

/// Runs a whole packet sequence through a table and returns every flow in
/// eviction order (flushed flows last), plus the table statistics.
pub fn aggregate<'a>(
    cfg: FlowConfig,
    packets: impl IntoIterator<Item = &'a PacketRecord>,
) -> (Vec<Flow>, FlowTableStats) {
    let mut table = FlowTable::new(cfg);
    let mut out = Vec::new();
    for p in packets {
        for ev in table.insert(p) {
            if let FlowEvent::Evicted(f, _) = ev {
                out.push(*f);
            }
        }
    }
    out.extend(table.flush());
    (out, table.stats())
}

impl Flow {
    pub fn direction_count(&self) -> [usize; 2] {
        let fwd = self.count(Direction::Fwd);
        [fwd, self.packets.len() - fwd]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::{IpAddr, Ipv4Addr};

    fn pkt(ts: u64, src: u32, sport: u16, dst: u32, dport: u16, proto: u8, payload: &[u8]) -> PacketRecord {
        PacketRecord {
            ts_us: ts,
            src_ip: IpAddr::V4(Ipv4Addr::from(src)),
            dst_ip: IpAddr::V4(Ipv4Addr::from(dst)),
            src_port: sport,
            dst_port: dport,
            ip_proto: proto,
            tcp_flags: 0,
            header_len: 40,
            payload_len: payload.len() as u32,
            payload: payload.to_vec(),
            truncated: false,
        }
    }

    #[test]
    fn both_directions_share_a_flow() {
        let mut t = FlowTable::new(FlowConfig::default());
        let ev1 = t.insert(&pkt(0, 1, 1000, 2, 80, 6, b""));
        let ev2 = t.insert(&pkt(10, 2, 80, 1, 1000, 6, b""));
        assert!(matches!(ev1.as_slice(), [FlowEvent::New(_)]));
        assert!(matches!(ev2.as_slice(), [FlowEvent::Appended(_)]));
        let flows = t.flush();
        assert_eq!(flows.len(), 1);
        let dirs: Vec<_> = flows[0].packets.iter().map(|p| p.dir).collect();
        assert_eq!(dirs, vec![Direction::Fwd, Direction::Rev]);
    }

    #[test]
    fn idle_timeout_evicts_then_creates() {
        let cfg = FlowConfig {
            idle_timeout_us: 1_000,
            ..Default::default()
        };
        let mut t = FlowTable::new(cfg);
        t.insert(&pkt(0, 1, 1000, 2, 80, 6, b""));
        // exactly at the timeout: still the same flow
        let ev = t.insert(&pkt(1_000, 1, 1000, 2, 80, 6, b""));
        assert!(matches!(ev.as_slice(), [FlowEvent::Appended(_)]));
        let ev = t.insert(&pkt(2_001, 1, 1000, 2, 80, 6, b""));
        match ev.as_slice() {
            [FlowEvent::Evicted(f, EvictReason::IdleTimeout), FlowEvent::New(_)] => {
                assert_eq!(f.packets.len(), 2);
                assert_eq!(f.state, FlowState::TimedOut);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_full_evicts_least_recent() {
        let cfg = FlowConfig {
            max_flows: 1_000,
            ..Default::default()
        };
        let mut t = FlowTable::new(cfg);
        let mut full = 0;
        let mut accounted = 0u64;
        for i in 0..10_000u32 {
            for ev in t.insert(&pkt(i as u64, 0x0a00_0000 + i, 1234, 0x0a63_0001, 80, 17, b"")) {
                if let FlowEvent::Evicted(f, reason) = ev {
                    assert_eq!(reason, EvictReason::TableFull);
                    full += 1;
                    accounted += f.packets.len() as u64;
                }
            }
        }
        assert_eq!(full, 9_000);
        accounted += t.flush().iter().map(|f| f.packets.len() as u64).sum::<u64>();
        assert_eq!(accounted, 10_000);
        assert_eq!(t.stats().table_full_evictions, 9_000);
    }

    #[test]
    fn fin_both_ways_and_rst_finish_flows() {
        let mut t = FlowTable::new(FlowConfig::default());
        let mut a = pkt(0, 1, 1000, 2, 80, 6, b"");
        a.tcp_flags = TCP_FIN;
        let mut b = pkt(1, 2, 80, 1, 1000, 6, b"");
        b.tcp_flags = TCP_FIN;
        assert_eq!(t.insert(&a).len(), 1);
        let ev = t.insert(&b);
        assert!(matches!(ev.last(), Some(FlowEvent::Evicted(_, EvictReason::Finished))));

        let mut r = pkt(5, 3, 1, 4, 2, 6, b"");
        r.tcp_flags = TCP_RST;
        let ev = t.insert(&r);
        assert!(matches!(ev.as_slice(), [FlowEvent::New(_), FlowEvent::Evicted(_, EvictReason::Finished)]));
        assert!(t.is_empty());
    }

    #[test]
    fn packet_cap_and_skips() {
        let cfg = FlowConfig {
            pkt_cap: 4,
            ..Default::default()
        };
        let mut t = FlowTable::new(cfg);
        let mut evicted = 0;
        for i in 0..9 {
            for ev in t.insert(&pkt(i, 1, 1, 2, 2, 17, b"x")) {
                if let FlowEvent::Evicted(f, EvictReason::PacketCap) = ev {
                    assert_eq!(f.packets.len(), 4);
                    evicted += 1;
                }
            }
        }
        assert_eq!(evicted, 2);
        assert!(matches!(t.insert(&pkt(9, 1, 0, 2, 0, 1, b"")).as_slice(), [FlowEvent::Skipped]));
        assert_eq!(t.stats().skipped, 1);
    }

    #[test]
    fn reassembly_budget_caps_payload_head() {
        let cfg = FlowConfig {
            reassembly_budget: 10,
            ..Default::default()
        };
        let mut t = FlowTable::new(cfg);
        t.insert(&pkt(0, 1, 1, 2, 2, 6, b"0123456"));
        t.insert(&pkt(1, 1, 1, 2, 2, 6, b"789abc"));
        let f = t.flush().remove(0);
        assert_eq!(f.payload_head[0], b"0123456789");
        assert_eq!(f.payload_packets, [2, 0]);
    }

    #[test]
    fn protocol_assigned_once() {
        let mut t = FlowTable::new(FlowConfig::default());
        t.insert(&pkt(0, 1, 5555, 2, 80, 6, b"GET / HTTP/1.1\r\n\r\n"));
        t.insert(&pkt(1, 2, 80, 1, 5555, 6, &[0x16, 3, 1, 0, 0]));
        let f = t.flush().remove(0);
        assert_eq!(f.proto, ProtocolLabel::Http);
    }
}
