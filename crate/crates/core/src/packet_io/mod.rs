//! Packet sources: classic pcap files and seeded synthetic traces.
//!
//! Every source produces [`PacketRecord`]s, one per IP packet, carrying the
//! 5-tuple, header/payload lengths and the captured payload bytes.

mod craft;
mod dissect;
mod pcap;
mod synth;

use std::net::IpAddr;

pub use craft::{
    dns_query, dns_response, http_request, tls_client_hello, ClientHelloSpec, DNS_TYPE_A,
};
pub use dissect::dissect_frame;
pub use pcap::{read_pcap, read_pcap_bytes, PcapError, PcapReader, PcapWriter, WriterOptions};
pub use synth::{synth_trace, AppPayload, Dist, SynthError, SynthSpec, Transport};

pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_RST: u8 = 0x04;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;

/// One captured IP packet.
///
/// `payload` holds the bytes actually present in the capture, which may be
/// fewer than `payload_len` when the snaplen cut the frame short.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub ts_us: u64,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub ip_proto: u8,
    /// Raw TCP flag byte, 0 for other protocols.
    pub tcp_flags: u8,
    /// IP header (including IPv6 extension headers) plus transport header.
    pub header_len: u32,
    pub payload_len: u32,
    pub payload: Vec<u8>,
    pub truncated: bool,
}

impl PacketRecord {
    pub fn is_tcp(&self) -> bool {
        self.ip_proto == IPPROTO_TCP
    }

    pub fn is_udp(&self) -> bool {
        self.ip_proto == IPPROTO_UDP
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkType {
    Ethernet,
    RawIp,
}

impl LinkType {
    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(LinkType::Ethernet),
            101 => Some(LinkType::RawIp),
            _ => None,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            LinkType::Ethernet => 1,
            LinkType::RawIp => 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceMeta {
    pub link_type: LinkType,
    pub snaplen: u32,
    /// Records yielded so far.
    pub packet_count: u64,
    /// Frames read from the file, including skipped ones.
    pub frames: u64,
    /// Frames that were not IP or could not be dissected.
    pub skipped: u64,
}

/// A fully-read trace.
#[derive(Debug, Clone)]
pub struct Trace {
    pub meta: TraceMeta,
    pub packets: Vec<PacketRecord>,
}
