//! Synthetic "applications": each has its own server address and a
//! payload/timing signature, so traces carry ground truth per flow.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::net::IpAddr;

use crate::features::{BatchRow, N_FEATURES, SCHEMA_VERSION};
use crate::flow::FlowKey;
use crate::forest::Dataset;
use crate::packet_io::{synth_trace, AppPayload, Dist, PacketRecord, SynthSpec, Transport};

use super::{FlowSnapshot, PipelineError};

#[derive(Debug, Clone)]
pub struct AppSpec {
    pub name: &'static str,
    pub spec: SynthSpec,
}

fn app(name: &'static str, server_id: u8, spec: SynthSpec) -> AppSpec {
    AppSpec {
        name,
        spec: SynthSpec {
            server_id,
            flow_id_base: server_id as u32 * 100_000,
            start_us: 1_000_000,
            ..spec
        },
    }
}

fn tls(sni: &str) -> AppPayload {
    AppPayload::TlsClientHello { sni: sni.into() }
}

pub fn chat() -> AppSpec {
    app(
        "chat",
        11,
        SynthSpec {
            packets_per_flow: Dist::Uniform { lo: 10.0, hi: 30.0 },
            payload_len: Dist::Normal { mean: 120.0, std: 30.0 },
            inter_arrival_us: Dist::Exp { mean: 40_000.0 },
            flow_gap_us: Dist::Exp { mean: 20_000.0 },
            rev_fraction: 0.5,
            app: tls("chat.example.net"),
            ..Default::default()
        },
    )
}

pub fn video() -> AppSpec {
    app(
        "video",
        12,
        SynthSpec {
            packets_per_flow: Dist::Uniform { lo: 20.0, hi: 60.0 },
            payload_len: Dist::Normal { mean: 300.0, std: 60.0 },
            rev_payload_len: Some(Dist::Normal { mean: 1350.0, std: 60.0 }),
            rev_fraction: 0.8,
            inter_arrival_us: Dist::Exp { mean: 3_000.0 },
            flow_gap_us: Dist::Exp { mean: 20_000.0 },
            app: tls("media.videocdn.example"),
            ..Default::default()
        },
    )
}

pub fn web() -> AppSpec {
    app(
        "web",
        13,
        SynthSpec {
            packets_per_flow: Dist::Uniform { lo: 6.0, hi: 20.0 },
            payload_len: Dist::Uniform { lo: 200.0, hi: 900.0 },
            rev_fraction: 0.6,
            inter_arrival_us: Dist::Exp { mean: 10_000.0 },
            flow_gap_us: Dist::Exp { mean: 20_000.0 },
            server_port: 80,
            app: AppPayload::HttpGet {
                host: "www.shop.example".into(),
                path: "/catalog/item?id=7&ref=home".into(),
            },
            ..Default::default()
        },
    )
}

pub fn dns() -> AppSpec {
    app(
        "dns",
        14,
        SynthSpec {
            packets_per_flow: Dist::Const(2.0),
            payload_len: Dist::Uniform { lo: 40.0, hi: 120.0 },
            rev_fraction: 1.0,
            inter_arrival_us: Dist::Exp { mean: 800.0 },
            flow_gap_us: Dist::Exp { mean: 20_000.0 },
            transport: Transport::Udp,
            server_port: 53,
            app: AppPayload::DnsQuery {
                qname: "api.telemetry.example".into(),
            },
            ..Default::default()
        },
    )
}

pub fn voip() -> AppSpec {
    app(
        "voip",
        15,
        SynthSpec {
            packets_per_flow: Dist::Uniform { lo: 30.0, hi: 80.0 },
            payload_len: Dist::Normal { mean: 172.0, std: 4.0 },
            rev_fraction: 0.5,
            inter_arrival_us: Dist::Normal { mean: 10_000.0, std: 500.0 },
            flow_gap_us: Dist::Exp { mean: 20_000.0 },
            transport: Transport::Udp,
            server_port: 16_384,
            ..Default::default()
        },
    )
}

pub fn two_apps() -> Vec<AppSpec> {
    vec![chat(), video()]
}

pub fn five_apps() -> Vec<AppSpec> {
    vec![chat(), video(), web(), dns(), voip()]
}

/// Packets of all apps merged by timestamp plus the true app of every flow.
#[derive(Debug, Clone)]
pub struct AppTrace {
    pub packets: Vec<PacketRecord>,
    pub truth: HashMap<FlowKey, String>,
}

impl AppTrace {
    pub fn label_of(&self, key: &FlowKey) -> Option<&str> {
        self.truth.get(key).map(String::as_str)
    }
}

pub fn app_trace(apps: &[AppSpec], flows_per_app: usize, seed: u64) -> Result<AppTrace, PipelineError> {
    let mut packets = Vec::new();
    let mut servers: HashMap<IpAddr, &'static str> = HashMap::new();
    for (i, a) in apps.iter().enumerate() {
        let spec = SynthSpec {
            flows: flows_per_app,
            seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64),
            ..a.spec.clone()
        };
        let t = synth_trace(&spec)?;
        if let Some(p) = t.first() {
            servers.insert(p.dst_ip, a.name);
        }
        packets.extend(t);
    }
    packets.sort_by_key(|p| p.ts_us);
    let mut truth = HashMap::new();
    for p in &packets {
        let name = servers.get(&p.dst_ip).or_else(|| servers.get(&p.src_ip));
        if let Some(name) = name {
            truth.entry(FlowKey::of(p)).or_insert_with(|| name.to_string());
        }
    }
    Ok(AppTrace { packets, truth })
}

/// Training rows from snapshots with known labels. Snapshots without a
/// label or without features are left out.
pub fn labeled_rows(snaps: &[FlowSnapshot], truth: &HashMap<FlowKey, String>) -> Vec<BatchRow> {
    snaps
        .iter()
        .filter_map(|s| {
            let label = truth.get(&s.key)?;
            let v = s.features.as_ref().ok()?;
            Some(BatchRow::from_vector(v, Some(label.clone())))
        })
        .collect()
}

/// Labeled rows as a training set; unlabeled rows are ignored.
pub fn rows_to_dataset(rows: &[BatchRow]) -> Result<Dataset, PipelineError> {
    let mut d = Dataset::new(SCHEMA_VERSION, N_FEATURES);
    for r in rows {
        if let Some(l) = &r.label {
            d.push(&r.values, l)?;
        }
    }
    Ok(d)
}

/// `key,label` per line.
pub fn write_truth<W: Write>(mut w: W, truth: &HashMap<FlowKey, String>) -> std::io::Result<()> {
    let mut rows: Vec<_> = truth.iter().collect();
    rows.sort_by_key(|(k, _)| k.to_string());
    for (k, l) in rows {
        writeln!(w, "{k},{l}")?;
    }
    w.flush()
}

pub fn read_truth<R: BufRead>(r: R) -> Result<HashMap<FlowKey, String>, PipelineError> {
    let mut out = HashMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| PipelineError::Parse { line: i + 1, msg };
        let (k, l) = line.split_once(',').ok_or_else(|| bad("expected key,label".into()))?;
        let key = k.parse::<FlowKey>().map_err(|e| bad(e.to_string()))?;
        out.insert(key, l.to_string());
    }
    Ok(out)
}
