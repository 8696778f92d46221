//! Cluster-assisted labeling: k-means over standardized statistical
//! features, k picked by silhouette, a tip per cluster to help a human name
//! it, and a step that turns named clusters into training rows.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{BatchRow, N_FEATURES, N_STAT};
use crate::flow::{FlowKey, ProtocolLabel};

use super::{FlowSnapshot, PipelineError};

pub const DEFAULT_K_RANGE: RangeInclusive<usize> = 2..=10;
pub const MAX_ITERS: usize = 100;
pub const DISCARD: &str = "discard";
const REPORT_VERSION: &str = "flowlens-clusters-1";
const TOP_NAMES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTip {
    pub size: usize,
    pub dominant_proto: ProtocolLabel,
    /// Most frequent SNI/Host/query names with their counts.
    pub top_names: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: usize,
    /// Centroid in standardized statistical-feature space.
    pub centroid: Vec<f64>,
    pub members: Vec<FlowKey>,
    pub tip: ClusterTip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub k: usize,
    /// NaN for a single-cluster report.
    pub silhouette: f64,
    /// Silhouette of every k tried; NaN where k was not feasible.
    pub scores: Vec<(usize, f64)>,
    pub clusters: Vec<Cluster>,
    /// Full feature rows of the clustered flows, unlabeled.
    pub rows: Vec<BatchRow>,
}

/// Per-column z-scores. Constant columns become 0.
fn standardize(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for r in x {
        for j in 0..d {
            mean[j] += r[j] / n;
        }
    }
    for r in x {
        for j in 0..d {
            sd[j] += (r[j] - mean[j]).powi(2) / n;
        }
    }
    sd.iter_mut().for_each(|s| *s = s.sqrt());
    x.iter()
        .map(|r| {
            (0..d)
                .map(|j| if sd[j] > 1e-12 { (r[j] - mean[j]) / sd[j] } else { 0.0 })
                .collect()
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd's algorithm from a k-means++ start. An emptied cluster is
/// re-seeded at the point farthest from its center.
pub fn kmeans(x: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<Vec<f64>>) {
    let n = x.len();
    let mut centers = vec![x[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(x[pick].clone());
        for (i, p) in x.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &centers[centers.len() - 1]));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, p) in x.iter().enumerate() {
            let (c, _) = nearest(p, &centers);
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; x[0].len()]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in x.iter().zip(&assign) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = dist2(&x[a], &centers[assign[a]]);
                        let db = dist2(&x[b], &centers[assign[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap();
                centers[c] = x[far].clone();
                assign[far] = c;
                changed = true;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    (assign, centers)
}

/// Mean silhouette. Points in singleton clusters score 0.
pub fn silhouette(x: &[Vec<f64>], assign: &[usize], k: usize) -> f64 {
    let n = x.len();
    let mut sizes = vec![0usize; k];
    for &a in assign {
        sizes[a] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.fill(0.0);
        for j in 0..n {
            if i != j {
                sums[assign[j]] += dist2(&x[i], &x[j]).sqrt();
            }
        }
        let own = assign[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 && b.is_finite() {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

fn distinct_points(x: &[Vec<f64>], limit: usize) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in x {
        if !seen.contains(&p) {
            seen.push(p);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

/// Clusters flows that have features. k is the silhouette argmax over
/// `k_range` (the smaller k on ties); a value of k is feasible only when the
/// data has at least k distinct points. With no feasible k every flow goes
/// into one cluster.
pub fn label_helper(
    snaps: &[FlowSnapshot],
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<ClusterReport, PipelineError> {
    let usable: Vec<&FlowSnapshot> = snaps.iter().filter(|s| s.features.is_ok()).collect();
    let k_max = *k_range.end();
    if *k_range.start() < 2 || k_range.is_empty() {
        return Err(PipelineError::InvalidConfig("k range must start at 2 or more".into()));
    }
    if usable.len() < k_max {
        return Err(PipelineError::TooFewFlows {
            need: k_max,
            have: usable.len(),
        });
    }
    let raw: Vec<Vec<f64>> = usable
        .iter()
        .map(|s| s.features.as_ref().unwrap().values[..N_STAT].to_vec())
        .collect();
    let x = standardize(&raw);
    let distinct = distinct_points(&x, k_max);

    let mut scores = Vec::new();
    let mut best: Option<(usize, f64, Vec<usize>, Vec<Vec<f64>>)> = None;
    for k in k_range {
        if k > distinct {
            scores.push((k, f64::NAN));
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let (assign, centers) = kmeans(&x, k, &mut rng);
        let s = silhouette(&x, &assign, k);
        scores.push((k, s));
        if best.as_ref().is_none_or(|b| s > b.1) {
            best = Some((k, s, assign, centers));
        }
    }
    let (k, sil, assign, centers) = best.unwrap_or_else(|| {
        let d = x[0].len();
        let mean = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / x.len() as f64).collect();
        (1, f64::NAN, vec![0; x.len()], vec![mean])
    });

    let mut clusters: Vec<Cluster> = centers
        .into_iter()
        .enumerate()
        .map(|(id, centroid)| Cluster {
            id,
            centroid,
            members: Vec::new(),
            tip: ClusterTip {
                size: 0,
                dominant_proto: ProtocolLabel::Unknown,
                top_names: Vec::new(),
            },
        })
        .collect();
    let mut protos: Vec<BTreeMap<&'static str, (usize, ProtocolLabel)>> = vec![BTreeMap::new(); k];
    let mut names: Vec<HashMap<&str, usize>> = vec![HashMap::new(); k];
    for (s, &c) in usable.iter().zip(&assign) {
        clusters[c].members.push(s.key);
        protos[c].entry(s.proto.name()).or_insert((0, s.proto)).0 += 1;
        if let Some(n) = &s.server_name {
            *names[c].entry(n.as_str()).or_default() += 1;
        }
    }
    for c in &mut clusters {
        c.tip.size = c.members.len();
        if let Some((_, &(_, p))) = protos[c.id].iter().max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.cmp(a.0))) {
            c.tip.dominant_proto = p;
        }
        let mut top: Vec<(String, usize)> = names[c.id].iter().map(|(n, &k)| (n.to_string(), k)).collect();
        top.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        top.truncate(TOP_NAMES);
        c.tip.top_names = top;
    }
    let rows = usable
        .iter()
        .map(|s| BatchRow::from_vector(s.features.as_ref().unwrap(), None))
        .collect();
    Ok(ClusterReport {
        k,
        silhouette: sil,
        scores,
        clusters,
        rows,
    })
}

/// Cluster id → label, from `cluster_id=label` lines. `#` starts a comment.
pub fn parse_assignments<R: BufRead>(r: R) -> Result<BTreeMap<usize, String>, PipelineError> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| PipelineError::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let (id, label) = line.split_once('=').ok_or_else(|| bad("expected cluster_id=label"))?;
        let id = id.trim().parse::<usize>().map_err(|_| bad("cluster id is not a number"))?;
        let label = label.trim();
        if label.is_empty() || label.contains([',', '\n']) {
            return Err(bad("label is empty or contains a comma"));
        }
        if out.insert(id, label.to_string()).is_some() {
            return Err(bad("cluster assigned twice"));
        }
    }
    Ok(out)
}

/// Labels every member row with its cluster's name; `discard` drops the
/// cluster.
pub fn apply_labels(report: &ClusterReport, assignments: &BTreeMap<usize, String>) -> Result<Vec<BatchRow>, PipelineError> {
    if let Some(&id) = assignments.keys().find(|&&id| id >= report.clusters.len()) {
        return Err(PipelineError::UnknownCluster(id));
    }
    let mut label_of: HashMap<FlowKey, &str> = HashMap::new();
    for c in &report.clusters {
        let label = assignments.get(&c.id).ok_or(PipelineError::UnassignedCluster(c.id))?;
        if label != DISCARD {
            for k in &c.members {
                label_of.insert(*k, label);
            }
        }
    }
    Ok(report
        .rows
        .iter()
        .filter_map(|r| {
            let l = label_of.get(&r.key)?;
            Some(BatchRow {
                label: Some(l.to_string()),
                ..r.clone()
            })
        })
        .collect())
}

impl ClusterReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "k = {} (silhouette {:.4})", self.k, self.silhouette);
        let _ = write!(s, "scores:");
        for (k, v) in &self.scores {
            let _ = write!(s, " k{k}={v:.4}");
        }
        let _ = writeln!(s, "\n\n{:>7} {:>6} {:<8} top names", "cluster", "size", "proto");
        for c in &self.clusters {
            let names: Vec<String> = c.tip.top_names.iter().map(|(n, k)| format!("{n} ({k})")).collect();
            let _ = writeln!(
                s,
                "{:>7} {:>6} {:<8} {}",
                c.id,
                c.tip.size,
                c.tip.dominant_proto.name(),
                if names.is_empty() { "-".to_string() } else { names.join(", ") }
            );
        }
        s
    }

    /// Machine-readable form, read back by [`read_report`].
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), PipelineError> {
        writeln!(w, "#{REPORT_VERSION}")?;
        writeln!(w, "k,{},{}", self.k, self.silhouette)?;
        for (k, v) in &self.scores {
            writeln!(w, "score,{k},{v}")?;
        }
        for c in &self.clusters {
            let names: Vec<String> = c.tip.top_names.iter().map(|(n, k)| format!("{n}:{k}")).collect();
            writeln!(w, "cluster,{},{},{},{}", c.id, c.tip.size, c.tip.dominant_proto.name(), names.join(";"))?;
            let centroid: Vec<String> = c.centroid.iter().map(|v| v.to_string()).collect();
            writeln!(w, "centroid,{},{}", c.id, centroid.join(","))?;
        }
        let cluster_of: HashMap<FlowKey, usize> = self
            .clusters
            .iter()
            .flat_map(|c| c.members.iter().map(move |k| (*k, c.id)))
            .collect();
        for r in &self.rows {
            let values: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
            writeln!(w, "member,{},{},{}", cluster_of[&r.key], r.key, values.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn proto_from_name(s: &str) -> Option<ProtocolLabel> {
    [
        ProtocolLabel::Unknown,
        ProtocolLabel::Dns,
        ProtocolLabel::Http,
        ProtocolLabel::Tls,
        ProtocolLabel::OtherTcp,
        ProtocolLabel::OtherUdp,
    ]
    .into_iter()
    .find(|p| p.name() == s)
}

pub fn read_report<R: BufRead>(r: R) -> Result<ClusterReport, PipelineError> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != format!("#{REPORT_VERSION}") {
        return Err(PipelineError::Parse {
            line: 1,
            msg: format!("not a cluster report (expected #{REPORT_VERSION})"),
        });
    }
    let mut report = ClusterReport {
        k: 0,
        silhouette: f64::NAN,
        scores: Vec::new(),
        clusters: Vec::new(),
        rows: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let bad = |msg: &str| PipelineError::Parse {
            line: lineno,
            msg: msg.to_string(),
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let cols: Vec<&str> = line.split(',').collect();
        match cols[0] {
            "" => {}
            "k" if cols.len() == 3 => {
                report.k = int(cols[1])?;
                report.silhouette = num(cols[2])?;
            }
            "score" if cols.len() == 3 => report.scores.push((int(cols[1])?, num(cols[2])?)),
            "cluster" if cols.len() == 5 => {
                let id = int(cols[1])?;
                if id != report.clusters.len() {
                    return Err(bad("clusters out of order"));
                }
                let mut top_names = Vec::new();
                for t in cols[4].split(';').filter(|t| !t.is_empty()) {
                    let (n, k) = t.rsplit_once(':').ok_or_else(|| bad("bad name count"))?;
                    top_names.push((n.to_string(), int(k)?));
                }
                report.clusters.push(Cluster {
                    id,
                    centroid: Vec::new(),
                    members: Vec::new(),
                    tip: ClusterTip {
                        size: int(cols[2])?,
                        dominant_proto: proto_from_name(cols[3]).ok_or_else(|| bad("unknown protocol"))?,
                        top_names,
                    },
                });
            }
            "centroid" => {
                let id = int(cols.get(1).copied().unwrap_or_default())?;
                let c = report.clusters.get_mut(id).ok_or_else(|| bad("centroid for unknown cluster"))?;
                c.centroid = cols[2..].iter().map(|v| num(v)).collect::<Result<_, _>>()?;
            }
            "member" if cols.len() == 3 + N_FEATURES => {
                let id = int(cols[1])?;
                let key = cols[2].parse::<FlowKey>().map_err(|e| bad(&e.to_string()))?;
                let values = cols[3..].iter().map(|v| num(v)).collect::<Result<Vec<_>, _>>()?;
                report
                    .clusters
                    .get_mut(id)
                    .ok_or_else(|| bad("member of unknown cluster"))?
                    .members
                    .push(key);
                report.rows.push(BatchRow { key, label: None, values });
            }
            _ => return Err(bad("unrecognized record")),
        }
    }
    if report.clusters.len() != report.k {
        return Err(PipelineError::Parse {
            line: 0,
            msg: format!("report declares k={} but lists {} clusters", report.k, report.clusters.len()),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipelines::{app_trace, snapshots, two_apps, StreamConfig};

    fn two_app_snaps(seed: u64) -> (Vec<FlowSnapshot>, HashMap<FlowKey, String>) {
        let t = app_trace(&two_apps(), 60, seed).unwrap();
        (snapshots(&t.packets, StreamConfig::default()).unwrap().0, t.truth)
    }

    fn purity(r: &ClusterReport, truth: &HashMap<FlowKey, String>) -> f64 {
        let mut good = 0;
        for c in &r.clusters {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for k in &c.members {
                *counts.entry(&truth[k]).or_default() += 1;
            }
            good += counts.values().max().copied().unwrap_or(0);
        }
        good as f64 / truth.len() as f64
    }

    #[test]
    fn finds_two_clusters() {
        let (s, truth) = two_app_snaps(1);
        let r = label_helper(&s, DEFAULT_K_RANGE, 42).unwrap();
        assert_eq!(r.k, 2, "{}", r.to_text());
        assert!(purity(&r, &truth) >= 0.95);
        let total: usize = r.clusters.iter().map(|c| c.members.len()).sum();
        assert_eq!(total, s.len());
        let names: Vec<&str> = r.clusters.iter().map(|c| c.tip.top_names[0].0.as_str()).collect();
        assert!(names.contains(&"chat.example.net") && names.contains(&"media.videocdn.example"));
        assert_eq!(r, label_helper(&s, DEFAULT_K_RANGE, 42).unwrap());
    }

    #[test]
    fn duplicates_collapse_to_one_cluster() {
        let (s, _) = two_app_snaps(2);
        let mut dup = Vec::new();
        for i in 0..12u16 {
            let mut d = s[0].clone();
            d.key.port_lo = 1000 + i;
            if let Ok(v) = &mut d.features {
                v.key = d.key;
            }
            dup.push(d);
        }
        let r = label_helper(&dup, DEFAULT_K_RANGE, 1).unwrap();
        assert_eq!(r.k, 1);
        assert_eq!(r.clusters[0].members.len(), 12);
        assert!(r.scores.iter().all(|(_, v)| v.is_nan()));
    }

    #[test]
    fn too_few_flows() {
        let (s, _) = two_app_snaps(3);
        assert!(matches!(
            label_helper(&s[..5], DEFAULT_K_RANGE, 1),
            Err(PipelineError::TooFewFlows { need: 10, have: 5 })
        ));
    }

    #[test]
    fn silhouette_hand_example() {
        // two tight pairs far apart: a = 1, b ≈ 10 for every point
        let x = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let s = silhouette(&x, &[0, 0, 1, 1], 2);
        let want = [(10.5 - 1.0) / 10.5, (9.5 - 1.0) / 9.5, (9.5 - 1.0) / 9.5, (10.5 - 1.0) / 10.5];
        assert!((s - want.iter().sum::<f64>() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn report_round_trip_and_apply() {
        let (s, _) = two_app_snaps(4);
        let r = label_helper(&s, 2..=2, 7).unwrap();
        let mut buf = Vec::new();
        r.write(&mut buf).unwrap();
        let back = read_report(&buf[..]).unwrap();
        assert_eq!(back.k, r.k);
        assert_eq!(back.rows, r.rows);
        for (a, b) in back.clusters.iter().zip(&r.clusters) {
            assert_eq!(a.members, b.members);
            assert_eq!(a.tip, b.tip);
            assert_eq!(a.centroid, b.centroid);
        }

        let a = parse_assignments(&b"0=alpha\n# note\n1 = discard\n"[..]).unwrap();
        let rows = apply_labels(&back, &a).unwrap();
        assert_eq!(rows.len(), r.clusters[0].members.len());
        assert!(rows.iter().all(|r| r.label.as_deref() == Some("alpha")));

        let all_discard = parse_assignments(&b"0=discard\n1=discard\n"[..]).unwrap();
        assert!(apply_labels(&back, &all_discard).unwrap().is_empty());
        let partial = parse_assignments(&b"0=alpha\n"[..]).unwrap();
        assert!(matches!(apply_labels(&back, &partial), Err(PipelineError::UnassignedCluster(1))));
        let extra = parse_assignments(&b"0=a\n1=b\n9=c\n"[..]).unwrap();
        assert!(matches!(apply_labels(&back, &extra), Err(PipelineError::UnknownCluster(9))));
        assert!(parse_assignments(&b"0=a\n0=b\n"[..]).is_err());
        assert!(read_report(&b"#other\n"[..]).is_err());
    }
}
