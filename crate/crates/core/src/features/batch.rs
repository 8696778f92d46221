//! Training-set interchange: one header line (`#<version>,key,label,<names>`)
//! followed by `key,label,v0,...,v99` rows. Unlabeled rows leave the label
//! column empty.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{schema, FeatureVector, N_FEATURES, SCHEMA_VERSION};
use crate::flow::FlowKey;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("feature schema mismatch: file has {found:?}, expected {SCHEMA_VERSION:?}")]
    VersionMismatch { found: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("label {0:?} contains a comma or newline")]
    BadLabel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub key: FlowKey,
    pub label: Option<String>,
    pub values: Vec<f64>,
}

impl BatchRow {
    pub fn from_vector(v: &FeatureVector, label: Option<String>) -> Self {
        BatchRow {
            key: v.key,
            label,
            values: v.values.clone(),
        }
    }
}

pub fn write_batch<W: Write>(mut w: W, rows: &[BatchRow]) -> Result<(), BatchError> {
    write!(w, "#{SCHEMA_VERSION},key,label")?;
    for name in schema().names() {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for r in rows {
        let label = r.label.as_deref().unwrap_or("");
        if label.contains([',', '\n', '\r']) {
            return Err(BatchError::BadLabel(label.to_string()));
        }
        write!(w, "{},{label}", r.key)?;
        for v in &r.values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_batch<R: BufRead>(r: R) -> Result<Vec<BatchRow>, BatchError> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let version = header
        .strip_prefix('#')
        .and_then(|h| h.split(',').next())
        .unwrap_or_default();
    if version != SCHEMA_VERSION {
        return Err(BatchError::VersionMismatch {
            found: version.to_string(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| BatchError::Parse { line: lineno, msg };
        let mut cols = line.split(',');
        let key = cols
            .next()
            .unwrap_or_default()
            .parse::<FlowKey>()
            .map_err(|e| err(e.to_string()))?;
        let label = cols.next().ok_or_else(|| err("missing label column".into()))?;
        let values = cols
            .map(|c| c.parse::<f64>().map_err(|e| err(format!("{c:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != N_FEATURES {
            return Err(err(format!("expected {N_FEATURES} values, found {}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(err(format!("non-finite value {v}")));
        }
        rows.push(BatchRow {
            key,
            label: (!label.is_empty()).then(|| label.to_string()),
            values,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: Option<&str>, seed: f64) -> BatchRow {
        BatchRow {
            key: "10.0.0.9:5000-192.0.2.1:443/6".parse().unwrap(),
            label: label.map(str::to_string),
            values: (0..N_FEATURES).map(|i| i as f64 * seed + 0.1).collect(),
        }
    }

    #[test]
    fn round_trip() {
        let rows = vec![row(Some("web"), 1.5), row(None, 1.0 / 3.0)];
        let mut buf = Vec::new();
        write_batch(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#flowlens-fx-1,key,label,fwd_pkt_count,"));
        assert_eq!(read_batch(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn rejects_other_versions_and_short_rows() {
        let e = read_batch(&b"#flowlens-fx-0,key,label\n"[..]).unwrap_err();
        assert!(matches!(e, BatchError::VersionMismatch { .. }));
        let text = format!("#{SCHEMA_VERSION}\n10.0.0.9:5000-192.0.2.1:443/6,x,1,2\n");
        assert!(matches!(read_batch(text.as_bytes()), Err(BatchError::Parse { line: 2, .. })));
        assert!(matches!(
            write_batch(Vec::new(), &[row(Some("a,b"), 1.0)]),
            Err(BatchError::BadLabel(_))
        ));
    }
}
