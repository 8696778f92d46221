use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use super::{LinkType, PacketRecord, IPPROTO_TCP, IPPROTO_UDP};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;

const MAX_VLAN_TAGS: usize = 2;
const MAX_IPV6_EXT_HEADERS: usize = 8;

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

/// Dissects one captured frame. Returns `None` for frames that are not
/// IPv4/IPv6, are cut inside their headers, or are non-initial fragments.
///
/// `orig_len` is the on-the-wire length from the capture record header.
pub fn dissect_frame(
    link: LinkType,
    ts_us: u64,
    frame: &[u8],
    orig_len: u32,
) -> Option<PacketRecord> {
    let orig_len = (orig_len as usize).max(frame.len());
    let l2_len = match link {
        LinkType::Ethernet => {
            let mut off = 12;
            let mut tags = 0;
            loop {
                if frame.len() < off + 2 {
                    return None;
                }
                let ethertype = be16(frame, off);
                match ethertype {
                    ETHERTYPE_VLAN | ETHERTYPE_QINQ if tags < MAX_VLAN_TAGS => {
                        tags += 1;
                        off += 4;
                    }
                    ETHERTYPE_IPV4 | ETHERTYPE_IPV6 => break off + 2,
                    _ => return None,
                }
            }
        }
        LinkType::RawIp => 0,
    };
    let ip = &frame[l2_len..];
    let wire_ip_len = orig_len - l2_len;
    match ip.first()? >> 4 {
        4 => dissect_ipv4(ts_us, ip, wire_ip_len),
        6 => dissect_ipv6(ts_us, ip, wire_ip_len),
        _ => None,
    }
}

fn dissect_ipv4(ts_us: u64, ip: &[u8], wire_ip_len: usize) -> Option<PacketRecord> {
    if ip.len() < 20 {
        return None;
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ihl < 20 || ip.len() < ihl {
        return None;
    }
    let total = be16(ip, 2) as usize;
    if total < ihl {
        return None;
    }
    let frag_offset = be16(ip, 6) & 0x1fff;
    if frag_offset != 0 {
        return None;
    }
    let proto = ip[9];
    let src = IpAddr::V4(Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]));
    let dst = IpAddr::V4(Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]));
    let ip_len = total.min(wire_ip_len);
    dissect_transport(ts_us, src, dst, proto, ip, ihl, ip_len)
}

fn dissect_ipv6(ts_us: u64, ip: &[u8], wire_ip_len: usize) -> Option<PacketRecord> {
    if ip.len() < 40 {
        return None;
    }
    let payload_field = be16(ip, 4) as usize;
    let ip_len = if payload_field == 0 {
        wire_ip_len
    } else {
        (40 + payload_field).min(wire_ip_len)
    };
    let mut src = [0u8; 16];
    let mut dst = [0u8; 16];
    src.copy_from_slice(&ip[8..24]);
    dst.copy_from_slice(&ip[24..40]);

    let mut next = ip[6];
    let mut off = 40;
    let mut walked = 0;
    loop {
        let ext_len = match next {
            0 | 43 | 60 | 135 => {
                if ip.len() < off + 2 {
                    return None;
                }
                (ip[off + 1] as usize + 1) * 8
            }
            44 => {
                if ip.len() < off + 8 {
                    return None;
                }
                if be16(ip, off + 2) >> 3 != 0 {
                    return None;
                }
                8
            }
            51 => {
                if ip.len() < off + 2 {
                    return None;
                }
                (ip[off + 1] as usize + 2) * 4
            }
            _ => break,
        };
        walked += 1;
        if walked > MAX_IPV6_EXT_HEADERS {
            return None;
        }
        next = ip[off];
        off += ext_len;
        if off > ip.len() {
            return None;
        }
    }
    dissect_transport(
        ts_us,
        IpAddr::V6(Ipv6Addr::from(src)),
        IpAddr::V6(Ipv6Addr::from(dst)),
        next,
        ip,
        off,
        ip_len,
    )
}

fn dissect_transport(
    ts_us: u64,
    src_ip: IpAddr,
    dst_ip: IpAddr,
    ip_proto: u8,
    ip: &[u8],
    l3_len: usize,
    ip_len: usize,
) -> Option<PacketRecord> {
    if ip_len < l3_len {
        return None;
    }
    let l4 = &ip[l3_len..];
    let (src_port, dst_port, tcp_flags, l4_len) = match ip_proto {
        IPPROTO_TCP => {
            if l4.len() < 20 {
                return None;
            }
            let data_off = ((l4[12] >> 4) as usize) * 4;
            if data_off < 20 || l4.len() < data_off {
                return None;
            }
            (be16(l4, 0), be16(l4, 2), l4[13], data_off)
        }
        IPPROTO_UDP => {
            if l4.len() < 8 {
                return None;
            }
            (be16(l4, 0), be16(l4, 2), 0, 8)
        }
        _ => (0, 0, 0, 0),
    };
    let header_len = l3_len + l4_len;
    if ip_len < header_len {
        return None;
    }
    let payload_len = ip_len - header_len;
    let captured_end = ip.len().min(ip_len);
    let payload = ip[header_len.min(captured_end)..captured_end].to_vec();
    let truncated = payload.len() < payload_len;
    Some(PacketRecord {
        ts_us,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        ip_proto,
        tcp_flags,
        header_len: header_len as u32,
        payload_len: payload_len as u32,
        payload,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eth(ethertype: u16) -> Vec<u8> {
        let mut f = vec![0u8; 12];
        f.extend_from_slice(&ethertype.to_be_bytes());
        f
    }

    fn ipv4_udp(payload: &[u8]) -> Vec<u8> {
        let total = (20 + 8 + payload.len()) as u16;
        let mut ip = vec![0x45, 0, 0, 0, 0, 0, 0x40, 0, 64, 17, 0, 0, 10, 0, 0, 1, 10, 0, 0, 2];
        ip[2..4].copy_from_slice(&total.to_be_bytes());
        ip.extend_from_slice(&1234u16.to_be_bytes());
        ip.extend_from_slice(&53u16.to_be_bytes());
        ip.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
        ip.extend_from_slice(&[0, 0]);
        ip.extend_from_slice(payload);
        ip
    }

    #[test]
    fn udp_over_ethernet() {
        let mut f = eth(ETHERTYPE_IPV4);
        f.extend(ipv4_udp(b"hello"));
        let len = f.len() as u32;
        let r = dissect_frame(LinkType::Ethernet, 5, &f, len).unwrap();
        assert_eq!(r.ip_proto, 17);
        assert_eq!((r.src_port, r.dst_port), (1234, 53));
        assert_eq!(r.header_len, 28);
        assert_eq!(r.payload, b"hello");
        assert!(!r.truncated);
    }

    #[test]
    fn ethernet_padding_is_not_payload() {
        let mut f = eth(ETHERTYPE_IPV4);
        f.extend(ipv4_udp(b""));
        f.resize(60, 0);
        let r = dissect_frame(LinkType::Ethernet, 0, &f, 60).unwrap();
        assert_eq!(r.payload_len, 0);
        assert!(r.payload.is_empty());
    }

    #[test]
    fn double_vlan_is_unwrapped_but_triple_is_skipped() {
        let mut two = vec![0u8; 12];
        two.extend_from_slice(&[0x88, 0xa8, 0, 1, 0x81, 0x00, 0, 2, 0x08, 0x00]);
        two.extend(ipv4_udp(b"x"));
        let len = two.len() as u32;
        assert!(dissect_frame(LinkType::Ethernet, 0, &two, len).is_some());

        let mut three = vec![0u8; 12];
        three.extend_from_slice(&[0x81, 0, 0, 1, 0x81, 0, 0, 2, 0x81, 0, 0, 3, 0x08, 0]);
        three.extend(ipv4_udp(b"x"));
        let len = three.len() as u32;
        assert!(dissect_frame(LinkType::Ethernet, 0, &three, len).is_none());
    }

    #[test]
    fn non_ip_frames_are_skipped() {
        let mut arp = eth(0x0806);
        arp.extend_from_slice(&[0u8; 28]);
        assert!(dissect_frame(LinkType::Ethernet, 0, &arp, 42).is_none());
        assert!(dissect_frame(LinkType::Ethernet, 0, &[1, 2, 3], 3).is_none());
    }

    #[test]
    fn snaplen_truncation_is_flagged() {
        let ip = ipv4_udp(&[7u8; 100]);
        let cut = &ip[..60];
        let r = dissect_frame(LinkType::RawIp, 0, cut, ip.len() as u32).unwrap();
        assert_eq!(r.payload_len, 100);
        assert_eq!(r.payload.len(), 32);
        assert!(r.truncated);
    }

    #[test]
    fn ipv6_extension_chain() {
        let payload = b"abcd";
        let mut ip = vec![0x60, 0, 0, 0];
        let ext_and_udp = 8 + 8 + payload.len();
        ip.extend_from_slice(&(ext_and_udp as u16).to_be_bytes());
        ip.push(60); // destination options
        ip.push(64);
        ip.extend_from_slice(&[0u8; 32]);
        ip.extend_from_slice(&[17, 0, 1, 4, 0, 0, 0, 0]);
        ip.extend_from_slice(&[0x10, 0x00, 0x00, 0x35, 0, 12, 0, 0]);
        ip.extend_from_slice(payload);
        let r = dissect_frame(LinkType::RawIp, 0, &ip, ip.len() as u32).unwrap();
        assert_eq!(r.ip_proto, 17);
        assert_eq!(r.header_len, 40 + 8 + 8);
        assert_eq!(r.payload, payload);
        assert_eq!(r.dst_port, 53);
    }

    #[test]
    fn ipv6_gives_up_after_eight_extension_headers() {
        let n = 9;
        let mut ip = vec![0x60, 0, 0, 0];
        ip.extend_from_slice(&((n * 8 + 8) as u16).to_be_bytes());
        ip.push(60);
        ip.push(64);
        ip.extend_from_slice(&[0u8; 32]);
        for i in 0..n {
            let next = if i + 1 == n { 17 } else { 60 };
            ip.extend_from_slice(&[next, 0, 1, 4, 0, 0, 0, 0]);
        }
        ip.extend_from_slice(&[0, 1, 0, 2, 0, 8, 0, 0]);
        assert!(dissect_frame(LinkType::RawIp, 0, &ip, ip.len() as u32).is_none());
    }

    #[test]
    fn non_initial_fragment_is_skipped() {
        let mut ip = ipv4_udp(b"frag");
        ip[6] = 0x00;
        ip[7] = 0x10;
        assert!(dissect_frame(LinkType::RawIp, 0, &ip, ip.len() as u32).is_none());
    }
}
