//! Fixed-order numeric features for a flow: direction statistics, three
//! 16-bin histograms, and lexical fields for DNS, HTTP and TLS.

mod batch;
mod lexical;
mod stat;

use std::sync::OnceLock;

use thiserror::Error;

use crate::flow::{Flow, FlowKey, ProtocolLabel};

pub use batch::{read_batch, write_batch, BatchError, BatchRow};
pub use lexical::{entropy, extract_dns, extract_http, extract_tls, server_name, Malformed};
pub use stat::{extract_stat, HEADER_BIN_WIDTH, IAT_BIN_WIDTH_US, PAYLOAD_BIN_WIDTH};

pub const SCHEMA_VERSION: &str = "flowlens-fx-1";

pub const N_STAT: usize = 30;
pub const N_HIST: usize = 48;
pub const N_DNS: usize = 6;
pub const N_HTTP: usize = 10;
pub const N_TLS: usize = 6;
pub const N_FEATURES: usize = N_STAT + N_HIST + N_DNS + N_HTTP + N_TLS;

pub const DNS_OFFSET: usize = N_STAT + N_HIST;
pub const HTTP_OFFSET: usize = DNS_OFFSET + N_DNS;
pub const TLS_OFFSET: usize = HTTP_OFFSET + N_HTTP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureGroup {
    Stat,
    Hist,
    Dns,
    Http,
    Tls,
}

impl FeatureGroup {
    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Stat => "stat",
            FeatureGroup::Hist => "hist",
            FeatureGroup::Dns => "dns",
            FeatureGroup::Http => "http",
            FeatureGroup::Tls => "tls",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDef {
    pub id: usize,
    pub name: String,
    pub group: FeatureGroup,
    pub unit: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub version: &'static str,
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

const STAT_FIELDS: [(&str, &str); 10] = [
    ("pkt_count", "packets"),
    ("byte_count", "bytes"),
    ("payload_min", "bytes"),
    ("payload_max", "bytes"),
    ("payload_mean", "bytes"),
    ("payload_std", "bytes"),
    ("iat_min", "us"),
    ("iat_max", "us"),
    ("iat_mean", "us"),
    ("iat_std", "us"),
];

const DNS_FIELDS: [(&str, &str); N_DNS] = [
    ("dns_qname_len", "chars"),
    ("dns_labels", "count"),
    ("dns_qname_entropy", "bits/char"),
    ("dns_qtype", "code"),
    ("dns_ancount", "count"),
    ("dns_is_response", "flag"),
];

const HTTP_FIELDS: [(&str, &str); N_HTTP] = [
    ("http_method", "ordinal"),
    ("http_uri_len", "bytes"),
    ("http_uri_depth", "count"),
    ("http_query_params", "count"),
    ("http_host_len", "bytes"),
    ("http_host_entropy", "bits/char"),
    ("http_header_count", "count"),
    ("http_ua_len", "bytes"),
    ("http_content_length", "bytes"),
    ("http_version", "code"),
];

const TLS_FIELDS: [(&str, &str); N_TLS] = [
    ("tls_client_version", "code"),
    ("tls_sni_len", "bytes"),
    ("tls_sni_entropy", "bits/char"),
    ("tls_cipher_suites", "count"),
    ("tls_extensions", "count"),
    ("tls_record_len", "bytes"),
];

/// The frozen 100-feature layout.
pub fn schema() -> &'static FeatureSchema {
    static S: OnceLock<FeatureSchema> = OnceLock::new();
    S.get_or_init(|| {
        let mut features = Vec::with_capacity(N_FEATURES);
        let mut push = |name: String, group, unit| {
            let id = features.len();
            features.push(FeatureDef { id, name, group, unit });
        };
        for scope in ["fwd", "rev", "all"] {
            for (f, unit) in STAT_FIELDS {
                push(format!("{scope}_{f}"), FeatureGroup::Stat, unit);
            }
        }
        for (h, unit) in [("payload", "packets"), ("header", "packets"), ("iat", "gaps")] {
            for b in 0..16 {
                push(format!("hist_{h}_{b:02}"), FeatureGroup::Hist, unit);
            }
        }
        for (group, fields) in [
            (FeatureGroup::Dns, &DNS_FIELDS[..]),
            (FeatureGroup::Http, &HTTP_FIELDS[..]),
            (FeatureGroup::Tls, &TLS_FIELDS[..]),
        ] {
            for &(f, unit) in fields {
                push(f.to_string(), group, unit);
            }
        }
        FeatureSchema {
            version: SCHEMA_VERSION,
            features,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("flow has no packets")]
    EmptyFlow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub key: FlowKey,
    pub proto: ProtocolLabel,
    pub values: Vec<f64>,
    /// Set when the protocol group could not be parsed and was zeroed.
    pub malformed: bool,
}

pub fn extract(flow: &Flow) -> Result<FeatureVector, FeatureError> {
    let mut values = vec![0.0; N_FEATURES];
    extract_stat(flow, &mut values[..N_STAT + N_HIST])?;
    let result = match flow.proto {
        ProtocolLabel::Dns => extract_dns(flow, &mut values[DNS_OFFSET..HTTP_OFFSET]),
        ProtocolLabel::Http => extract_http(flow, &mut values[HTTP_OFFSET..TLS_OFFSET]),
        ProtocolLabel::Tls => extract_tls(flow, &mut values[TLS_OFFSET..]),
        _ => Ok(()),
    };
    debug_assert!(values.iter().all(|v| v.is_finite()));
    Ok(FeatureVector {
        key: flow.key,
        proto: flow.proto,
        values,
        malformed: result.is_err(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_is_dense_and_unique() {
        let s = schema();
        assert_eq!(s.len(), 100);
        let mut names: Vec<&str> = s.names().collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 100);
        for (i, f) in s.features.iter().enumerate() {
            assert_eq!(f.id, i);
        }
        assert_eq!(s.features[DNS_OFFSET].name, "dns_qname_len");
        assert_eq!(s.features[HTTP_OFFSET].name, "http_method");
        assert_eq!(s.features[TLS_OFFSET].name, "tls_client_version");
        assert_eq!(s.index_of("hist_iat_15"), Some(N_STAT + N_HIST - 1));
    }
}
