//! Bidirectional flow aggregation and application protocol detection.

pub(crate) mod detect;
mod table;

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

pub use detect::{detect_protocol, DETECT_BUDGET};
pub use table::{aggregate, EvictReason, FlowConfig, FlowEvent, FlowTable, FlowTableStats};

use crate::packet_io::PacketRecord;

/// Direction-independent 5-tuple. `(ip_lo, port_lo)` is the smaller endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub ip_lo: IpAddr,
    pub ip_hi: IpAddr,
    pub port_lo: u16,
    pub port_hi: u16,
    pub ip_proto: u8,
}

impl FlowKey {
    pub fn new(a: (IpAddr, u16), b: (IpAddr, u16), ip_proto: u8) -> Self {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        FlowKey {
            ip_lo: lo.0,
            ip_hi: hi.0,
            port_lo: lo.1,
            port_hi: hi.1,
            ip_proto,
        }
    }

    pub fn of(pkt: &PacketRecord) -> Self {
        FlowKey::new(
            (pkt.src_ip, pkt.src_port),
            (pkt.dst_ip, pkt.dst_port),
            pkt.ip_proto,
        )
    }

    pub fn has_port(&self, port: u16) -> bool {
        self.port_lo == port || self.port_hi == port
    }
}

fn fmt_endpoint(f: &mut fmt::Formatter<'_>, ip: &IpAddr, port: u16) -> fmt::Result {
    match ip {
        IpAddr::V4(a) => write!(f, "{a}:{port}"),
        IpAddr::V6(a) => write!(f, "[{a}]:{port}"),
    }
}

/// `lo-hi/proto`, e.g. `10.0.0.1:1024-192.0.2.1:443/6`. Contains no commas.
impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_endpoint(f, &self.ip_lo, self.port_lo)?;
        f.write_str("-")?;
        fmt_endpoint(f, &self.ip_hi, self.port_hi)?;
        write!(f, "/{}", self.ip_proto)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed flow key {0:?}")]
pub struct ParseFlowKeyError(String);

fn parse_endpoint(s: &str) -> Option<(IpAddr, u16)> {
    let (ip, port) = if let Some(rest) = s.strip_prefix('[') {
        let (ip, port) = rest.split_once("]:")?;
        (ip, port)
    } else {
        s.rsplit_once(':')?
    };
    Some((ip.parse().ok()?, port.parse().ok()?))
}

impl FromStr for FlowKey {
    type Err = ParseFlowKeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFlowKeyError(s.to_string());
        let (eps, proto) = s.rsplit_once('/').ok_or_else(err)?;
        let proto: u8 = proto.parse().map_err(|_| err())?;
        // Endpoints are separated by the first '-' following a port.
        let split = eps
            .char_indices()
            .filter(|&(_, c)| c == '-')
            .map(|(i, _)| i)
            .find(|&i| parse_endpoint(&eps[..i]).is_some())
            .ok_or_else(err)?;
        let a = parse_endpoint(&eps[..split]).ok_or_else(err)?;
        let b = parse_endpoint(&eps[split + 1..]).ok_or_else(err)?;
        Ok(FlowKey::new(a, b, proto))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Sent by the flow initiator.
    Fwd,
    Rev,
}

impl Direction {
    pub fn index(self) -> usize {
        match self {
            Direction::Fwd => 0,
            Direction::Rev => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketMeta {
    pub dir: Direction,
    pub ts_us: u64,
    pub header_len: u32,
    pub payload_len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowState {
    Active,
    TimedOut,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolLabel {
    Unknown,
    Dns,
    Http,
    Tls,
    OtherTcp,
    OtherUdp,
}

impl ProtocolLabel {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolLabel::Unknown => "unknown",
            ProtocolLabel::Dns => "dns",
            ProtocolLabel::Http => "http",
            ProtocolLabel::Tls => "tls",
            ProtocolLabel::OtherTcp => "tcp",
            ProtocolLabel::OtherUdp => "udp",
        }
    }
}

impl fmt::Display for ProtocolLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Packets aggregated under one [`FlowKey`].
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub key: FlowKey,
    pub initiator: (IpAddr, u16),
    pub packets: Vec<PacketMeta>,
    /// In-order concatenation of payload bytes per direction, capped at the
    /// reassembly budget. Indexed by [`Direction::index`].
    pub payload_head: [Vec<u8>; 2],
    /// Payload-bearing packets seen per direction.
    pub payload_packets: [u32; 2],
    pub state: FlowState,
    pub proto: ProtocolLabel,
    pub(crate) fin_seen: [bool; 2],
    /// Creation order within the owning table.
    pub seq: u64,
}

impl Flow {
    pub fn new(key: FlowKey, initiator: (IpAddr, u16), seq: u64) -> Self {
        Flow {
            key,
            initiator,
            packets: Vec::new(),
            payload_head: [Vec::new(), Vec::new()],
            payload_packets: [0, 0],
            state: FlowState::Active,
            proto: ProtocolLabel::Unknown,
            fin_seen: [false, false],
            seq,
        }
    }

    pub fn direction_of(&self, pkt: &PacketRecord) -> Direction {
        if (pkt.src_ip, pkt.src_port) == self.initiator {
            Direction::Fwd
        } else {
            Direction::Rev
        }
    }

    /// Appends without any table policy; used by the table and by tests that
    /// build flows directly.
    pub fn push(&mut self, pkt: &PacketRecord, reassembly_budget: usize) -> Direction {
        let dir = self.direction_of(pkt);
        self.packets.push(PacketMeta {
            dir,
            ts_us: pkt.ts_us,
            header_len: pkt.header_len,
            payload_len: pkt.payload_len,
        });
        if pkt.payload_len > 0 {
            let d = dir.index();
            self.payload_packets[d] += 1;
            let head = &mut self.payload_head[d];
            let room = reassembly_budget.saturating_sub(head.len());
            head.extend_from_slice(&pkt.payload[..pkt.payload.len().min(room)]);
        }
        dir
    }

    pub fn first_ts(&self) -> u64 {
        self.packets.first().map_or(0, |p| p.ts_us)
    }

    pub fn last_ts(&self) -> u64 {
        self.packets.last().map_or(0, |p| p.ts_us)
    }

    pub fn count(&self, dir: Direction) -> usize {
        self.packets.iter().filter(|p| p.dir == dir).count()
    }

    pub fn is_udp(&self) -> bool {
        self.key.ip_proto == crate::packet_io::IPPROTO_UDP
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::{Ipv4Addr, Ipv6Addr};

    #[test]
    fn key_is_direction_independent() {
        let a = (IpAddr::V4(Ipv4Addr::new(10, 0, 0, 9)), 5000);
        let b = (IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1)), 80);
        assert_eq!(FlowKey::new(a, b, 6), FlowKey::new(b, a, 6));
        assert_ne!(FlowKey::new(a, b, 6), FlowKey::new(a, b, 17));
    }

    #[test]
    fn key_display_round_trips() {
        let v4 = FlowKey::new(
            (IpAddr::V4(Ipv4Addr::new(10, 0, 0, 9)), 5000),
            (IpAddr::V4(Ipv4Addr::new(192, 0, 2, 1)), 443),
            6,
        );
        assert_eq!(v4.to_string(), "10.0.0.9:5000-192.0.2.1:443/6");
        assert_eq!(v4.to_string().parse::<FlowKey>().unwrap(), v4);
        let v6 = FlowKey::new(
            (IpAddr::V6(Ipv6Addr::new(0xfd00, 0, 0, 0, 0, 0, 0, 1)), 53),
            (IpAddr::V6(Ipv6Addr::LOCALHOST), 9),
            17,
        );
        assert_eq!(v6.to_string().parse::<FlowKey>().unwrap(), v6);
        assert!("nonsense".parse::<FlowKey>().is_err());
    }
}
