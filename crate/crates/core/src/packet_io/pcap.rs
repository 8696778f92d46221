use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::IpAddr;
use std::path::Path;

use thiserror::Error;

use super::dissect::dissect_frame;
use super::{LinkType, PacketRecord, Trace, TraceMeta, IPPROTO_TCP, IPPROTO_UDP};

const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const MAGIC_NANOS: u32 = 0xa1b2_3c4d;

/// Largest record body accepted, independent of the advertised snaplen.
const MAX_RECORD_LEN: u32 = 256 * 1024;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("not a pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("file ends inside a header or record")]
    TruncatedHeader,
    #[error("unsupported link type {0}")]
    UnsupportedLinkType(u32),
    #[error("record of {0} bytes exceeds the capture limit")]
    OversizedRecord(u32),
    #[error("cannot encode record: {0}")]
    Unencodable(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Streaming reader for classic (non-ng) pcap files.
pub struct PcapReader<R> {
    inner: R,
    big_endian: bool,
    nanos: bool,
    meta: TraceMeta,
    failed: bool,
}

/// Reads into `buf` until it is full or the source is exhausted; returns the
/// number of bytes read.
fn fill(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut hdr = [0u8; 24];
        let got = fill(&mut inner, &mut hdr)?;
        if got < 4 {
            return Err(PcapError::BadMagic(0));
        }
        let le = u32::from_le_bytes([hdr[0], hdr[1], hdr[2], hdr[3]]);
        let (big_endian, nanos) = match le {
            MAGIC_MICROS => (false, false),
            MAGIC_NANOS => (false, true),
            m if m.swap_bytes() == MAGIC_MICROS => (true, false),
            m if m.swap_bytes() == MAGIC_NANOS => (true, true),
            m => return Err(PcapError::BadMagic(m)),
        };
        if got < 24 {
            return Err(PcapError::TruncatedHeader);
        }
        let word = |at: usize| {
            let b = [hdr[at], hdr[at + 1], hdr[at + 2], hdr[at + 3]];
            if big_endian {
                u32::from_be_bytes(b)
            } else {
                u32::from_le_bytes(b)
            }
        };
        let snaplen = word(16);
        let link_code = word(20) & 0x0fff_ffff;
        let link_type =
            LinkType::from_code(link_code).ok_or(PcapError::UnsupportedLinkType(link_code))?;
        Ok(PcapReader {
            inner,
            big_endian,
            nanos,
            meta: TraceMeta {
                link_type,
                snaplen,
                packet_count: 0,
                frames: 0,
                skipped: 0,
            },
            failed: false,
        })
    }

    pub fn meta(&self) -> TraceMeta {
        self.meta
    }

    fn word(&self, b: &[u8]) -> u32 {
        let b = [b[0], b[1], b[2], b[3]];
        if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        }
    }

    /// Next IP packet, skipping (and counting) frames that do not dissect.
    pub fn next_record(&mut self) -> Result<Option<PacketRecord>, PcapError> {
        loop {
            let mut rh = [0u8; 16];
            match fill(&mut self.inner, &mut rh)? {
                0 => return Ok(None),
                16 => {}
                _ => return Err(PcapError::TruncatedHeader),
            }
            let secs = self.word(&rh[0..4]) as u64;
            let frac = self.word(&rh[4..8]) as u64;
            let incl = self.word(&rh[8..12]);
            let orig = self.word(&rh[12..16]);
            if incl > MAX_RECORD_LEN {
                return Err(PcapError::OversizedRecord(incl));
            }
            let mut frame = vec![0u8; incl as usize];
            if fill(&mut self.inner, &mut frame)? < frame.len() {
                return Err(PcapError::TruncatedHeader);
            }
            self.meta.frames += 1;
            let sub_us = if self.nanos { frac / 1000 } else { frac };
            let ts_us = secs * 1_000_000 + sub_us;
            match dissect_frame(self.meta.link_type, ts_us, &frame, orig) {
                Some(rec) => {
                    self.meta.packet_count += 1;
                    return Ok(Some(rec));
                }
                None => self.meta.skipped += 1,
            }
        }
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PacketRecord, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(r) => r.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads a whole pcap file.
pub fn read_pcap(path: impl AsRef<Path>) -> Result<Trace, PcapError> {
    let file = File::open(path)?;
    read_all(PcapReader::new(BufReader::new(file))?)
}

/// Reads a pcap image held in memory.
pub fn read_pcap_bytes(bytes: &[u8]) -> Result<Trace, PcapError> {
    read_all(PcapReader::new(bytes)?)
}

fn read_all<R: Read>(mut reader: PcapReader<R>) -> Result<Trace, PcapError> {
    let mut packets = Vec::new();
    while let Some(p) = reader.next_record()? {
        packets.push(p);
    }
    Ok(Trace {
        meta: reader.meta(),
        packets,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct WriterOptions {
    pub big_endian: bool,
    pub nanos: bool,
    pub link_type: LinkType,
    pub snaplen: u32,
}

impl Default for WriterOptions {
    fn default() -> Self {
        WriterOptions {
            big_endian: false,
            nanos: false,
            link_type: LinkType::Ethernet,
            snaplen: 65535,
        }
    }
}

/// Writes PacketRecords back out as frames. Headers are synthesized from the
/// record fields so that reading the file back reproduces every field.
pub struct PcapWriter<W: Write> {
    out: W,
    opts: WriterOptions,
}

impl PcapWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, opts: WriterOptions) -> Result<Self, PcapError> {
        PcapWriter::new(BufWriter::new(File::create(path)?), opts)
    }
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut out: W, opts: WriterOptions) -> Result<Self, PcapError> {
        let magic = if opts.nanos { MAGIC_NANOS } else { MAGIC_MICROS };
        let mut hdr = Vec::with_capacity(24);
        let w32 = |v: &mut Vec<u8>, x: u32| {
            if opts.big_endian {
                v.extend_from_slice(&x.to_be_bytes())
            } else {
                v.extend_from_slice(&x.to_le_bytes())
            }
        };
        let w16 = |v: &mut Vec<u8>, x: u16| {
            if opts.big_endian {
                v.extend_from_slice(&x.to_be_bytes())
            } else {
                v.extend_from_slice(&x.to_le_bytes())
            }
        };
        w32(&mut hdr, magic);
        w16(&mut hdr, 2);
        w16(&mut hdr, 4);
        w32(&mut hdr, 0);
        w32(&mut hdr, 0);
        w32(&mut hdr, opts.snaplen);
        w32(&mut hdr, opts.link_type.code());
        out.write_all(&hdr)?;
        Ok(PcapWriter { out, opts })
    }

    fn w32(&self, v: &mut Vec<u8>, x: u32) {
        if self.opts.big_endian {
            v.extend_from_slice(&x.to_be_bytes())
        } else {
            v.extend_from_slice(&x.to_le_bytes())
        }
    }

    /// Writes a raw frame with an explicit original length.
    pub fn write_frame(&mut self, ts_us: u64, frame: &[u8], orig_len: u32) -> Result<(), PcapError> {
        let mut rh = Vec::with_capacity(16);
        let secs = (ts_us / 1_000_000) as u32;
        let sub = ts_us % 1_000_000;
        let frac = if self.opts.nanos { sub * 1000 } else { sub } as u32;
        self.w32(&mut rh, secs);
        self.w32(&mut rh, frac);
        self.w32(&mut rh, frame.len() as u32);
        self.w32(&mut rh, orig_len);
        self.out.write_all(&rh)?;
        self.out.write_all(frame)?;
        Ok(())
    }

    pub fn write_record(&mut self, rec: &PacketRecord) -> Result<(), PcapError> {
        let (frame, orig_len) = encode_frame(self.opts.link_type, rec)?;
        self.write_frame(rec.ts_us, &frame, orig_len)
    }

    pub fn finish(mut self) -> Result<W, PcapError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn ipv4_checksum(hdr: &[u8]) -> u16 {
    let mut sum: u32 = hdr
        .chunks(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Builds the captured frame bytes and the original length for a record.
fn encode_frame(link: LinkType, rec: &PacketRecord) -> Result<(Vec<u8>, u32), PcapError> {
    let ip_hdr_len = match (rec.src_ip, rec.dst_ip) {
        (IpAddr::V4(_), IpAddr::V4(_)) => 20usize,
        (IpAddr::V6(_), IpAddr::V6(_)) => 40,
        _ => return Err(PcapError::Unencodable("mixed address families")),
    };
    let header_len = rec.header_len as usize;
    if header_len < ip_hdr_len {
        return Err(PcapError::Unencodable("header_len shorter than the IP header"));
    }
    let l4_len = header_len - ip_hdr_len;
    match rec.ip_proto {
        IPPROTO_TCP if !(20..=60).contains(&l4_len) || !l4_len.is_multiple_of(4) => {
            return Err(PcapError::Unencodable("bad TCP header length"))
        }
        IPPROTO_UDP if l4_len != 8 => return Err(PcapError::Unencodable("bad UDP header length")),
        p if p != IPPROTO_TCP && p != IPPROTO_UDP && l4_len != 0 => {
            return Err(PcapError::Unencodable("transport header for unknown protocol"))
        }
        _ => {}
    }
    if rec.payload.len() > rec.payload_len as usize {
        return Err(PcapError::Unencodable("payload longer than payload_len"));
    }
    let ip_total = header_len + rec.payload_len as usize;
    if ip_total > 0xffff + ip_hdr_len - 20 {
        return Err(PcapError::Unencodable("packet too large"));
    }

    let mut f = Vec::with_capacity(14 + header_len + rec.payload.len());
    if link == LinkType::Ethernet {
        f.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01]);
        let et: u16 = if ip_hdr_len == 20 { 0x0800 } else { 0x86dd };
        f.extend_from_slice(&et.to_be_bytes());
    }
    let l2 = f.len();
    match (rec.src_ip, rec.dst_ip) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            let mut h = [0u8; 20];
            h[0] = 0x45;
            h[2..4].copy_from_slice(&(ip_total as u16).to_be_bytes());
            h[6] = 0x40;
            h[8] = 64;
            h[9] = rec.ip_proto;
            h[12..16].copy_from_slice(&s.octets());
            h[16..20].copy_from_slice(&d.octets());
            let ck = ipv4_checksum(&h);
            h[10..12].copy_from_slice(&ck.to_be_bytes());
            f.extend_from_slice(&h);
        }
        (IpAddr::V6(s), IpAddr::V6(d)) => {
            let mut h = [0u8; 40];
            h[0] = 0x60;
            h[4..6].copy_from_slice(&((ip_total - 40) as u16).to_be_bytes());
            h[6] = rec.ip_proto;
            h[7] = 64;
            h[8..24].copy_from_slice(&s.octets());
            h[24..40].copy_from_slice(&d.octets());
            f.extend_from_slice(&h);
        }
        _ => unreachable!(),
    }
    match rec.ip_proto {
        IPPROTO_TCP => {
            let mut h = vec![1u8; l4_len]; // options padded with NOP
            h[0..2].copy_from_slice(&rec.src_port.to_be_bytes());
            h[2..4].copy_from_slice(&rec.dst_port.to_be_bytes());
            h[4..12].fill(0);
            h[12] = ((l4_len / 4) as u8) << 4;
            h[13] = rec.tcp_flags;
            h[14..16].copy_from_slice(&0xffffu16.to_be_bytes());
            h[16..20].fill(0);
            f.extend_from_slice(&h);
        }
        IPPROTO_UDP => {
            let udp_len = (8 + rec.payload_len as usize).min(0xffff) as u16;
            f.extend_from_slice(&rec.src_port.to_be_bytes());
            f.extend_from_slice(&rec.dst_port.to_be_bytes());
            f.extend_from_slice(&udp_len.to_be_bytes());
            f.extend_from_slice(&[0, 0]);
        }
        _ => {}
    }
    f.extend_from_slice(&rec.payload);
    let orig = l2 + ip_total;
    Ok((f, orig as u32))
}
