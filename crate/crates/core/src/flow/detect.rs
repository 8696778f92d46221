use super::{Flow, FlowState, ProtocolLabel};

/// Payload-bearing packets examined before a flow falls back to
/// `OtherTcp`/`OtherUdp`.
pub const DETECT_BUDGET: u32 = 8;

const HTTP_METHODS: [&[u8]; 9] = [
    b"GET ",
    b"POST ",
    b"HEAD ",
    b"PUT ",
    b"DELETE ",
    b"OPTIONS ",
    b"CONNECT ",
    b"TRACE ",
    b"PATCH ",
];

fn looks_like_dns(msg: &[u8]) -> bool {
    if msg.len() < 12 {
        return false;
    }
    let opcode = (msg[2] >> 3) & 0x0f;
    let qdcount = u16::from_be_bytes([msg[4], msg[5]]);
    qdcount >= 1 && opcode <= 5
}

pub(crate) fn http_method_index(payload: &[u8]) -> Option<usize> {
    HTTP_METHODS.iter().position(|m| payload.starts_with(m))
}

/// Labels a flow from its payload heads. Returns `Unknown` while more
/// payload could still change the answer.
pub fn detect_protocol(flow: &Flow) -> ProtocolLabel {
    let fwd = &flow.payload_head[0];
    let rev = &flow.payload_head[1];
    if flow.is_udp() {
        if flow.key.has_port(53) && (looks_like_dns(fwd) || (fwd.is_empty() && looks_like_dns(rev))) {
            return ProtocolLabel::Dns;
        }
    } else {
        if http_method_index(fwd).is_some() {
            return ProtocolLabel::Http;
        }
        if fwd.len() >= 2 && fwd[0] == 0x16 && fwd[1] == 3 {
            return ProtocolLabel::Tls;
        }
    }
    let seen = flow.payload_packets[0] + flow.payload_packets[1];
    if seen >= DETECT_BUDGET || flow.state != FlowState::Active {
        if flow.is_udp() {
            ProtocolLabel::OtherUdp
        } else {
            ProtocolLabel::OtherTcp
        }
    } else {
        ProtocolLabel::Unknown
    }
}
