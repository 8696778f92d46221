//! Seeded synthetic traffic for tests and benchmarks.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use super::craft::{dns_query, dns_response, http_request, tls_client_hello, ClientHelloSpec};
use super::{PacketRecord, IPPROTO_TCP, IPPROTO_UDP, TCP_ACK, TCP_PSH};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic trace spec: {0}")]
    InvalidSpec(String),
}

/// A nonnegative scalar distribution. Samples are clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Const(f64),
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std: f64 },
    Exp { mean: f64 },
}

impl Dist {
    fn validate(&self, what: &str) -> Result<(), SynthError> {
        let ok = match *self {
            Dist::Const(v) => v.is_finite() && v >= 0.0,
            Dist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo,
            Dist::Normal { mean, std } => mean.is_finite() && std.is_finite() && mean >= 0.0 && std >= 0.0,
            Dist::Exp { mean } => mean.is_finite() && mean > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidSpec(format!("{what}: {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let v = match *self {
            Dist::Const(v) => v,
            Dist::Uniform { lo, hi } => {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            }
            Dist::Normal { mean, std } => Normal::new(mean, std).map(|d| d.sample(rng)).unwrap_or(mean),
            Dist::Exp { mean } => Exp::new(1.0 / mean).map(|d| d.sample(rng)).unwrap_or(mean),
        };
        v.max(0.0)
    }

    /// Upper bound of the support, if finite.
    fn upper(&self) -> Option<f64> {
        match *self {
            Dist::Const(v) => Some(v),
            Dist::Uniform { hi, .. } => Some(hi),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Tcp,
    Udp,
}

/// Application payload placed in the first client packet of every flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppPayload {
    None,
    HttpGet { host: String, path: String },
    TlsClientHello { sni: String },
    /// Also puts a matching response in the first server packet.
    DnsQuery { qname: String },
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub flows: usize,
    /// Packets per flow, rounded and clamped to `1..=max_packets`.
    pub packets_per_flow: Dist,
    pub max_packets: usize,
    pub payload_len: Dist,
    /// Server-to-client payload sizes; `None` reuses `payload_len`.
    pub rev_payload_len: Option<Dist>,
    /// Probability that a packet after the first travels server to client.
    pub rev_fraction: f64,
    pub inter_arrival_us: Dist,
    /// Gap between consecutive flow starts.
    pub flow_gap_us: Dist,
    pub start_us: u64,
    pub transport: Transport,
    pub server_port: u16,
    pub ipv6: bool,
    pub app: AppPayload,
    /// Offsets client addresses so several specs can be merged without
    /// colliding flow keys.
    pub flow_id_base: u32,
    pub server_id: u8,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            flows: 1,
            packets_per_flow: Dist::Const(16.0),
            max_packets: 256,
            payload_len: Dist::Uniform { lo: 0.0, hi: 1400.0 },
            rev_payload_len: None,
            rev_fraction: 0.5,
            inter_arrival_us: Dist::Exp { mean: 2000.0 },
            flow_gap_us: Dist::Exp { mean: 500.0 },
            start_us: 1_000_000,
            transport: Transport::Tcp,
            server_port: 443,
            ipv6: false,
            app: AppPayload::None,
            flow_id_base: 0,
            server_id: 1,
            seed: 42,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.flows == 0 {
            return Err(SynthError::InvalidSpec("zero flows".into()));
        }
        if self.max_packets == 0 {
            return Err(SynthError::InvalidSpec("max_packets is zero".into()));
        }
        if !(0.0..=1.0).contains(&self.rev_fraction) {
            return Err(SynthError::InvalidSpec(format!("rev_fraction {}", self.rev_fraction)));
        }
        self.packets_per_flow.validate("packets_per_flow")?;
        self.payload_len.validate("payload_len")?;
        if let Some(d) = &self.rev_payload_len {
            d.validate("rev_payload_len")?;
        }
        self.inter_arrival_us.validate("inter_arrival_us")?;
        self.flow_gap_us.validate("flow_gap_us")?;
        if let Some(hi) = self.payload_len.upper() {
            if hi > 60_000.0 {
                return Err(SynthError::InvalidSpec("payload above 60000 bytes".into()));
            }
        }
        Ok(())
    }
}

const MAX_PAYLOAD: f64 = 60_000.0;

fn client_addr(id: u32, v6: bool) -> IpAddr {
    if v6 {
        IpAddr::V6(Ipv6Addr::new(0xfd00, 0, 0, 0, 0, 0, (id >> 16) as u16, id as u16))
    } else {
        let id = id.wrapping_add(1);
        IpAddr::V4(Ipv4Addr::new(10, (id >> 16) as u8, (id >> 8) as u8, id as u8))
    }
}

fn server_addr(id: u8, v6: bool) -> IpAddr {
    if v6 {
        IpAddr::V6(Ipv6Addr::new(0x2001, 0xdb8, 0, 0, 0, 0, 0, id as u16))
    } else {
        IpAddr::V4(Ipv4Addr::new(192, 0, 2, id))
    }
}

/// Generates a trace from `spec`. Output is deterministic for a fixed seed
/// and sorted by timestamp, so flows interleave.
pub fn synth_trace(spec: &SynthSpec) -> Result<Vec<PacketRecord>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (proto, l4) = match spec.transport {
        Transport::Tcp => (IPPROTO_TCP, 20u32),
        Transport::Udp => (IPPROTO_UDP, 8u32),
    };
    let l3 = if spec.ipv6 { 40 } else { 20 };
    let server = server_addr(spec.server_id, spec.ipv6);

    // (ts, flow, seq) orders the merged output.
    let mut tagged: Vec<(u64, usize, usize, PacketRecord)> = Vec::new();
    let mut flow_start = spec.start_us;
    for f in 0..spec.flows {
        let id = spec.flow_id_base.wrapping_add(f as u32);
        let client = client_addr(id, spec.ipv6);
        let cport = 1024 + (id % 60000) as u16;
        let n = (spec.packets_per_flow.sample(&mut rng).round() as usize).clamp(1, spec.max_packets);
        let mut ts = flow_start;
        let mut first_rev_done = false;
        for seq in 0..n {
            if seq > 0 {
                ts += spec.inter_arrival_us.sample(&mut rng).round() as u64;
            }
            let rev = seq > 0 && rng.random_bool(spec.rev_fraction);
            let payload: Vec<u8> = match (&spec.app, seq, rev) {
                (AppPayload::HttpGet { host, path }, 0, _) => {
                    http_request("GET", path, host, &[("User-Agent", "synth/1.0"), ("Accept", "*/*")])
                }
                (AppPayload::TlsClientHello { sni }, 0, _) => tls_client_hello(&ClientHelloSpec {
                    sni: Some(sni.clone()),
                    ..Default::default()
                }),
                (AppPayload::DnsQuery { qname }, 0, _) => dns_query(id as u16, qname, 1),
                (AppPayload::DnsQuery { qname }, _, true) if !first_rev_done => {
                    dns_response(id as u16, qname, 1, 1 + (id % 3) as u16)
                }
                _ => {
                    let d = if rev {
                        spec.rev_payload_len.as_ref().unwrap_or(&spec.payload_len)
                    } else {
                        &spec.payload_len
                    };
                    let len = d.sample(&mut rng).round().min(MAX_PAYLOAD) as usize;
                    (0..len).map(|j| (j as u32).wrapping_mul(31).wrapping_add(id) as u8).collect()
                }
            };
            if rev {
                first_rev_done = true;
            }
            let (src_ip, dst_ip, src_port, dst_port) = if rev {
                (server, client, spec.server_port, cport)
            } else {
                (client, server, cport, spec.server_port)
            };
            let tcp_flags = match proto {
                IPPROTO_TCP if payload.is_empty() => TCP_ACK,
                IPPROTO_TCP => TCP_ACK | TCP_PSH,
                _ => 0,
            };
            let rec = PacketRecord {
                ts_us: ts,
                src_ip,
                dst_ip,
                src_port,
                dst_port,
                ip_proto: proto,
                tcp_flags,
                header_len: l3 + l4,
                payload_len: payload.len() as u32,
                payload,
                truncated: false,
            };
            tagged.push((ts, f, seq, rec));
        }
        flow_start += spec.flow_gap_us.sample(&mut rng).round() as u64;
    }
    tagged.sort_by_key(|(ts, f, seq, _)| (*ts, *f, *seq));
    Ok(tagged.into_iter().map(|(_, _, _, r)| r).collect())
}
