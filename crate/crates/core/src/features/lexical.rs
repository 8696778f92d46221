use std::fmt;

use crate::flow::detect::http_method_index;
use crate::flow::{Flow, ProtocolLabel};

/// The protocol group could not be parsed; its features are left at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Malformed {
    Dns,
    Http,
    Tls,
}

impl fmt::Display for Malformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self {
            Malformed::Dns => "DNS",
            Malformed::Http => "HTTP",
            Malformed::Tls => "TLS",
        };
        write!(f, "malformed {p} payload")
    }
}

impl std::error::Error for Malformed {}

/// Shannon entropy of the byte distribution, in bits per character.
pub fn entropy(s: &[u8]) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    let mut counts = [0u32; 256];
    for &b in s {
        counts[b as usize] += 1;
    }
    let n = s.len() as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();
    h.max(0.0)
}

fn be16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_be_bytes([*b.get(at)?, *b.get(at + 1)?]))
}

struct DnsMessage {
    response: bool,
    ancount: u16,
    qname: Vec<u8>,
    labels: u32,
    qtype: u16,
}

fn parse_dns(m: &[u8]) -> Option<DnsMessage> {
    if m.len() < 12 {
        return None;
    }
    let flags = be16(m, 2)?;
    let opcode = (flags >> 11) & 0x0f;
    let qdcount = be16(m, 4)?;
    if qdcount == 0 || opcode > 5 {
        return None;
    }
    let mut at = 12;
    let mut qname = Vec::new();
    let mut labels = 0;
    loop {
        let len = *m.get(at)? as usize;
        at += 1;
        if len == 0 {
            break;
        }
        // compression pointers cannot appear in the first question
        if len > 63 {
            return None;
        }
        let label = m.get(at..at + len)?;
        if !qname.is_empty() {
            qname.push(b'.');
        }
        qname.extend_from_slice(label);
        labels += 1;
        at += len;
        if qname.len() > 253 {
            return None;
        }
    }
    let qtype = be16(m, at)?;
    be16(m, at + 2)?;
    Some(DnsMessage {
        response: flags & 0x8000 != 0,
        ancount: be16(m, 6)?,
        qname,
        labels,
        qtype,
    })
}

/// Question fields from the first message and answer count from the first
/// response seen in either direction. `out` holds 6 values.
pub fn extract_dns(flow: &Flow, out: &mut [f64]) -> Result<(), Malformed> {
    let fwd = parse_dns(&flow.payload_head[0]);
    let rev = parse_dns(&flow.payload_head[1]);
    let q = fwd.as_ref().or(rev.as_ref()).ok_or(Malformed::Dns)?;
    let resp = [&rev, &fwd].into_iter().flatten().find(|m| m.response);
    out[0] = q.qname.len() as f64;
    out[1] = q.labels as f64;
    out[2] = entropy(&q.qname);
    out[3] = q.qtype as f64;
    out[4] = resp.map_or(0.0, |r| r.ancount as f64);
    out[5] = resp.is_some() as u8 as f64;
    Ok(())
}

fn split_line(s: &[u8]) -> (&[u8], &[u8]) {
    match s.iter().position(|&b| b == b'\n') {
        Some(i) => {
            let line = &s[..i];
            let line = line.strip_suffix(b"\r").unwrap_or(line);
            (line, &s[i + 1..])
        }
        None => (s, &[]),
    }
}

/// Request line and headers of the first forward request. `out` holds 10
/// values.
pub fn extract_http(flow: &Flow, out: &mut [f64]) -> Result<(), Malformed> {
    let head = &flow.payload_head[0];
    let method = http_method_index(head).ok_or(Malformed::Http)?;
    let (line, mut rest) = split_line(head);
    let mut parts = line.split(|&b| b == b' ').filter(|p| !p.is_empty());
    parts.next();
    let target = parts.next().ok_or(Malformed::Http)?;
    let version = match parts.next() {
        Some(b"HTTP/1.0") => 1.0,
        Some(b"HTTP/1.1") => 2.0,
        Some(v) if v.starts_with(b"HTTP/") => 3.0,
        Some(_) => return Err(Malformed::Http),
        None => 0.0,
    };
    let (path, query) = match target.iter().position(|&b| b == b'?') {
        Some(i) => (&target[..i], Some(&target[i + 1..])),
        None => (target, None),
    };
    let params = query.map_or(0, |q| q.split(|&b| b == b'&').filter(|p| !p.is_empty()).count());
    let mut headers = 0;
    let mut host: &[u8] = &[];
    let mut ua_len = 0;
    let mut content_length = 0.0;
    while !rest.is_empty() {
        let (line, next) = split_line(rest);
        rest = next;
        if line.is_empty() {
            break;
        }
        let Some(colon) = line.iter().position(|&b| b == b':') else {
            continue;
        };
        headers += 1;
        let name = &line[..colon];
        let value = line[colon + 1..].trim_ascii();
        if name.eq_ignore_ascii_case(b"host") {
            host = value;
        } else if name.eq_ignore_ascii_case(b"user-agent") {
            ua_len = value.len();
        } else if name.eq_ignore_ascii_case(b"content-length") {
            content_length = std::str::from_utf8(value)
                .ok()
                .and_then(|v| v.parse::<u64>().ok())
                .map_or(0.0, |v| v as f64);
        }
    }
    out[0] = method as f64;
    out[1] = target.len() as f64;
    out[2] = path.iter().filter(|&&b| b == b'/').count() as f64;
    out[3] = params as f64;
    out[4] = host.len() as f64;
    out[5] = entropy(host);
    out[6] = headers as f64;
    out[7] = ua_len as f64;
    out[8] = content_length;
    out[9] = version;
    Ok(())
}

struct Hello<'a> {
    client_version: u16,
    sni: &'a [u8],
    suites: usize,
    extensions: usize,
    record_len: u16,
}

fn parse_client_hello(d: &[u8]) -> Option<Hello<'_>> {
    if *d.first()? != 0x16 || *d.get(1)? != 3 {
        return None;
    }
    let record_len = be16(d, 3)?;
    let rec = d.get(5..5 + record_len as usize)?;
    if *rec.first()? != 1 {
        return None;
    }
    let hs_len = u32::from_be_bytes([0, *rec.get(1)?, *rec.get(2)?, *rec.get(3)?]) as usize;
    let hs = rec.get(4..4 + hs_len)?;
    let client_version = be16(hs, 0)?;
    let mut at = 34;
    at += 1 + *hs.get(at)? as usize;
    let suites_len = be16(hs, at)? as usize;
    if !suites_len.is_multiple_of(2) {
        return None;
    }
    hs.get(at + 2..at + 2 + suites_len)?;
    at += 2 + suites_len;
    at += 1 + *hs.get(at)? as usize;
    let mut sni: &[u8] = &[];
    let mut extensions = 0;
    if at < hs.len() {
        let ext_len = be16(hs, at)? as usize;
        let mut exts = hs.get(at + 2..at + 2 + ext_len)?;
        while !exts.is_empty() {
            let ty = be16(exts, 0)?;
            let len = be16(exts, 2)? as usize;
            let body = exts.get(4..4 + len)?;
            if ty == 0 {
                // server_name_list: u16 length, then (type, u16 length, name)
                let name_len = be16(body, 3)? as usize;
                sni = body.get(5..5 + name_len)?;
            }
            extensions += 1;
            exts = &exts[4 + len..];
        }
    }
    Some(Hello {
        client_version,
        sni,
        suites: suites_len / 2,
        extensions,
        record_len,
    })
}

/// ClientHello fields from the first forward record. `out` holds 6 values.
pub fn extract_tls(flow: &Flow, out: &mut [f64]) -> Result<(), Malformed> {
    let h = parse_client_hello(&flow.payload_head[0]).ok_or(Malformed::Tls)?;
    out[0] = h.client_version as f64;
    out[1] = h.sni.len() as f64;
    out[2] = entropy(h.sni);
    out[3] = h.suites as f64;
    out[4] = h.extensions as f64;
    out[5] = h.record_len as f64;
    Ok(())
}

/// The name a flow is addressed by: TLS SNI, HTTP Host or DNS query name.
pub fn server_name(flow: &Flow) -> Option<String> {
    let name = match flow.proto {
        ProtocolLabel::Tls => parse_client_hello(&flow.payload_head[0])?.sni.to_vec(),
        ProtocolLabel::Dns => {
            let fwd = parse_dns(&flow.payload_head[0]);
            fwd.or_else(|| parse_dns(&flow.payload_head[1]))?.qname
        }
        ProtocolLabel::Http => {
            let (_, mut rest) = split_line(&flow.payload_head[0]);
            let mut host = None;
            while !rest.is_empty() {
                let (line, next) = split_line(rest);
                rest = next;
                if line.is_empty() {
                    break;
                }
                if let Some(colon) = line.iter().position(|&b| b == b':') {
                    if line[..colon].eq_ignore_ascii_case(b"host") {
                        host = Some(line[colon + 1..].trim_ascii().to_vec());
                        break;
                    }
                }
            }
            host?
        }
        _ => return None,
    };
    (!name.is_empty()).then(|| String::from_utf8_lossy(&name).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowKey;
    use crate::packet_io::{dns_query, dns_response, http_request, tls_client_hello, ClientHelloSpec, DNS_TYPE_A};
    use std::net::{IpAddr, Ipv4Addr};

    fn flow_with(fwd: &[u8], rev: &[u8]) -> Flow {
        let a = (IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1)), 1000);
        let b = (IpAddr::V4(Ipv4Addr::new(10, 0, 0, 2)), 53);
        let mut f = Flow::new(FlowKey::new(a, b, 17), a, 0);
        f.payload_head = [fwd.to_vec(), rev.to_vec()];
        f
    }

    #[test]
    fn entropy_bounds_and_order() {
        assert_eq!(entropy(b""), 0.0);
        assert_eq!(entropy(b"aaaa"), 0.0);
        assert!((entropy(b"ab") - 1.0).abs() < 1e-12);
        let all: Vec<u8> = (0..=255).collect();
        assert!((entropy(&all) - 8.0).abs() < 1e-12);
        assert!(entropy(b"aaaa.com") < entropy(b"x7f3q.com"));
    }

    #[test]
    fn dns_query_fields() {
        let mut out = [0.0; 6];
        extract_dns(&flow_with(&dns_query(1, "a.com", DNS_TYPE_A), &[]), &mut out).unwrap();
        assert_eq!(out[0], 5.0);
        assert_eq!(out[1], 2.0);
        assert_eq!(out[3], 1.0);
        assert_eq!(out[4], 0.0);
        assert_eq!(out[5], 0.0);
        // p("a")=p(".")=p("c")=p("o")=p("m")=1/5
        assert!((out[2] - 5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn dns_response_fields() {
        let mut out = [0.0; 6];
        let f = flow_with(&dns_query(1, "x.y.org", 28), &dns_response(1, "x.y.org", 28, 3));
        extract_dns(&f, &mut out).unwrap();
        assert_eq!(&out[..2], &[7.0, 3.0]);
        assert_eq!(out[3], 28.0);
        assert_eq!(&out[4..], &[3.0, 1.0]);
    }

    #[test]
    fn dns_root_and_malformed() {
        let mut out = [0.0; 6];
        extract_dns(&flow_with(&dns_query(1, "", DNS_TYPE_A), &[]), &mut out).unwrap();
        assert_eq!(&out[..2], &[0.0, 0.0]);
        let mut q = dns_query(1, "a.com", DNS_TYPE_A);
        q.truncate(15);
        let mut out = [0.0; 6];
        assert_eq!(extract_dns(&flow_with(&q, &[]), &mut out), Err(Malformed::Dns));
        assert_eq!(out, [0.0; 6]);
    }

    #[test]
    fn http_request_fields() {
        let req = http_request("GET", "/a/b?x=1", "u.com", &[("User-Agent", "curl/8"), ("Content-Length", "12")]);
        let mut out = [0.0; 10];
        extract_http(&flow_with(&req, &[]), &mut out).unwrap();
        assert_eq!(&out[..5], &[0.0, 8.0, 2.0, 1.0, 5.0]);
        assert_eq!(&out[6..], &[3.0, 6.0, 12.0, 2.0]);
    }

    #[test]
    fn http_bare_request_line() {
        let mut out = [0.0; 10];
        extract_http(&flow_with(b"POST / HTTP/1.0\r\n\r\n", &[]), &mut out).unwrap();
        assert_eq!(out[0], 1.0);
        assert_eq!(out[2], 1.0);
        assert_eq!(out[6], 0.0);
        assert_eq!(out[9], 1.0);
        let mut out = [0.0; 10];
        extract_http(&flow_with(b"POST /", &[]), &mut out).unwrap();
        assert_eq!((out[0], out[2], out[9]), (1.0, 1.0, 0.0));
        assert_eq!(extract_http(&flow_with(b"GET ", &[]), &mut out), Err(Malformed::Http));
        assert_eq!(extract_http(&flow_with(b"BREW /pot", &[]), &mut out), Err(Malformed::Http));
    }

    #[test]
    fn tls_hello_fields() {
        let spec = ClientHelloSpec {
            sni: Some("example.com".into()),
            ..Default::default()
        };
        let hello = tls_client_hello(&spec);
        let mut out = [0.0; 6];
        extract_tls(&flow_with(&hello, &[]), &mut out).unwrap();
        assert_eq!(out[0], 0x0303 as f64);
        assert_eq!(out[1], 11.0);
        assert!(out[2] > 0.0 && out[2] <= 8.0);
        assert_eq!(out[3], 4.0);
        assert_eq!(out[4], 3.0);
        assert_eq!(out[5], (hello.len() - 5) as f64);
    }

    #[test]
    fn tls_without_sni() {
        let hello = tls_client_hello(&ClientHelloSpec::default());
        let mut out = [0.0; 6];
        extract_tls(&flow_with(&hello, &[]), &mut out).unwrap();
        assert_eq!(out[1], 0.0);
        assert_eq!(out[4], 2.0);
    }

    #[test]
    fn tls_length_mismatch_is_malformed() {
        let spec = ClientHelloSpec {
            sni: Some("example.com".into()),
            ..Default::default()
        };
        for delta in [-3i32, 7] {
            let mut hello = tls_client_hello(&spec);
            let len = u16::from_be_bytes([hello[3], hello[4]]) as i32 + delta;
            hello[3..5].copy_from_slice(&(len as u16).to_be_bytes());
            let mut out = [0.0; 6];
            assert_eq!(extract_tls(&flow_with(&hello, &[]), &mut out), Err(Malformed::Tls));
        }
    }

    #[test]
    fn server_names_per_protocol() {
        let mut f = flow_with(&dns_query(1, "a.example", DNS_TYPE_A), &[]);
        assert_eq!(server_name(&f), None);
        f.proto = ProtocolLabel::Dns;
        assert_eq!(server_name(&f).as_deref(), Some("a.example"));
        let mut f = flow_with(&http_request("GET", "/", "shop.test", &[]), &[]);
        f.proto = ProtocolLabel::Http;
        assert_eq!(server_name(&f).as_deref(), Some("shop.test"));
        let spec = ClientHelloSpec {
            sni: Some("cdn.test".into()),
            ..Default::default()
        };
        let mut f = flow_with(&tls_client_hello(&spec), &[]);
        f.proto = ProtocolLabel::Tls;
        assert_eq!(server_name(&f).as_deref(), Some("cdn.test"));
        f.payload_head[0].truncate(20);
        assert_eq!(server_name(&f), None);
    }
}
