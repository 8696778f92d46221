//! Encoders for application payloads carried by synthetic traces.

pub const DNS_TYPE_A: u16 = 1;

/// Encodes a DNS query with one question. An empty `qname` is the root.
pub fn dns_query(id: u16, qname: &str, qtype: u16) -> Vec<u8> {
    let mut m = Vec::with_capacity(17 + qname.len());
    m.extend_from_slice(&id.to_be_bytes());
    m.extend_from_slice(&0x0100u16.to_be_bytes()); // RD
    m.extend_from_slice(&1u16.to_be_bytes());
    m.extend_from_slice(&[0, 0, 0, 0, 0, 0]);
    encode_qname(&mut m, qname);
    m.extend_from_slice(&qtype.to_be_bytes());
    m.extend_from_slice(&1u16.to_be_bytes());
    m
}

/// Encodes a response to [`dns_query`] with `answers` A records.
pub fn dns_response(id: u16, qname: &str, qtype: u16, answers: u16) -> Vec<u8> {
    let mut m = Vec::new();
    m.extend_from_slice(&id.to_be_bytes());
    m.extend_from_slice(&0x8180u16.to_be_bytes()); // QR RD RA
    m.extend_from_slice(&1u16.to_be_bytes());
    m.extend_from_slice(&answers.to_be_bytes());
    m.extend_from_slice(&[0, 0, 0, 0]);
    encode_qname(&mut m, qname);
    m.extend_from_slice(&qtype.to_be_bytes());
    m.extend_from_slice(&1u16.to_be_bytes());
    for i in 0..answers {
        m.extend_from_slice(&[0xc0, 0x0c]);
        m.extend_from_slice(&DNS_TYPE_A.to_be_bytes());
        m.extend_from_slice(&1u16.to_be_bytes());
        m.extend_from_slice(&300u32.to_be_bytes());
        m.extend_from_slice(&4u16.to_be_bytes());
        m.extend_from_slice(&[192, 0, 2, (i % 250) as u8 + 1]);
    }
    m
}

fn encode_qname(m: &mut Vec<u8>, qname: &str) {
    for label in qname.split('.').filter(|l| !l.is_empty()) {
        let label = &label.as_bytes()[..label.len().min(63)];
        m.push(label.len() as u8);
        m.extend_from_slice(label);
    }
    m.push(0);
}

/// Encodes an HTTP/1.1 request with a Host header and any extra headers.
pub fn http_request(method: &str, target: &str, host: &str, extra: &[(&str, &str)]) -> Vec<u8> {
    let mut s = format!("{method} {target} HTTP/1.1\r\nHost: {host}\r\n");
    for (k, v) in extra {
        s.push_str(k);
        s.push_str(": ");
        s.push_str(v);
        s.push_str("\r\n");
    }
    s.push_str("\r\n");
    s.into_bytes()
}

#[derive(Debug, Clone)]
pub struct ClientHelloSpec {
    pub record_version: u16,
    pub client_version: u16,
    pub sni: Option<String>,
    pub cipher_suites: Vec<u16>,
    /// Extensions beyond SNI, as (type, body length) pairs.
    pub extra_extensions: Vec<(u16, usize)>,
}

impl Default for ClientHelloSpec {
    fn default() -> Self {
        ClientHelloSpec {
            record_version: 0x0301,
            client_version: 0x0303,
            sni: None,
            cipher_suites: vec![0x1301, 0x1302, 0x1303, 0xc02f],
            extra_extensions: vec![(0x000a, 4), (0x000d, 6)],
        }
    }
}

/// Encodes a TLS record holding one ClientHello handshake message.
pub fn tls_client_hello(spec: &ClientHelloSpec) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(&spec.client_version.to_be_bytes());
    body.extend((0..32u8).map(|i| i.wrapping_mul(7)));
    body.push(0); // session id
    body.extend_from_slice(&((spec.cipher_suites.len() * 2) as u16).to_be_bytes());
    for s in &spec.cipher_suites {
        body.extend_from_slice(&s.to_be_bytes());
    }
    body.extend_from_slice(&[1, 0]); // null compression

    let mut exts = Vec::new();
    if let Some(sni) = &spec.sni {
        let name = sni.as_bytes();
        let mut e = Vec::new();
        e.extend_from_slice(&((name.len() + 3) as u16).to_be_bytes());
        e.push(0);
        e.extend_from_slice(&(name.len() as u16).to_be_bytes());
        e.extend_from_slice(name);
        exts.extend_from_slice(&0u16.to_be_bytes());
        exts.extend_from_slice(&(e.len() as u16).to_be_bytes());
        exts.extend(e);
    }
    for &(ty, len) in &spec.extra_extensions {
        exts.extend_from_slice(&ty.to_be_bytes());
        exts.extend_from_slice(&(len as u16).to_be_bytes());
        exts.extend(std::iter::repeat_n(0u8, len));
    }
    body.extend_from_slice(&(exts.len() as u16).to_be_bytes());
    body.extend(exts);

    let mut hs = vec![1u8];
    let n = body.len() as u32;
    hs.extend_from_slice(&n.to_be_bytes()[1..]);
    hs.extend(body);

    let mut rec = vec![0x16];
    rec.extend_from_slice(&spec.record_version.to_be_bytes());
    rec.extend_from_slice(&(hs.len() as u16).to_be_bytes());
    rec.extend(hs);
    rec
}
