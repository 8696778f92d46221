use std::hash::{DefaultHasher, Hash, Hasher};
use std::time::Instant;

use rayon::prelude::*;

use crate::features::{N_FEATURES, SCHEMA_VERSION};
use crate::flow::{FlowKey, FlowTableStats};
use crate::forest::ForestModel;
use crate::packet_io::PacketRecord;

use super::{FlowSnapshot, PipelineError, SnapshotStream, StreamConfig, Trigger};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyResult {
    pub key: FlowKey,
    pub label: String,
    pub class: usize,
    /// Highest class probability.
    pub confidence: f64,
    pub packets: usize,
    pub trigger: Trigger,
    /// Feature extraction plus prediction, in microseconds.
    pub latency_us: f64,
}

/// Classifies each flow once: at `min_pkts` packets or at eviction.
pub struct Classifier<'m> {
    model: &'m ForestModel,
    stream: SnapshotStream,
    snaps: Vec<FlowSnapshot>,
    probs: Vec<f64>,
}

impl<'m> Classifier<'m> {
    pub fn new(model: &'m ForestModel, cfg: StreamConfig) -> Result<Self, PipelineError> {
        model.check_schema(SCHEMA_VERSION, N_FEATURES)?;
        Ok(Classifier {
            model,
            stream: SnapshotStream::new(cfg)?,
            snaps: Vec::new(),
            probs: vec![0.0; model.n_classes()],
        })
    }

    pub fn push(&mut self, pkt: &PacketRecord, out: &mut Vec<Result<ClassifyResult, PipelineError>>) {
        self.stream.push(pkt, &mut self.snaps);
        self.drain(out);
    }

    pub fn finish(&mut self, out: &mut Vec<Result<ClassifyResult, PipelineError>>) {
        self.stream.finish(&mut self.snaps);
        self.drain(out);
    }

    pub fn stats(&self) -> FlowTableStats {
        self.stream.stats()
    }

    fn drain(&mut self, out: &mut Vec<Result<ClassifyResult, PipelineError>>) {
        for s in self.snaps.drain(..) {
            out.push(classify_snapshot(self.model, &s, &mut self.probs));
        }
    }
}

fn classify_snapshot(model: &ForestModel, s: &FlowSnapshot, probs: &mut [f64]) -> Result<ClassifyResult, PipelineError> {
    let v = s.features.as_ref().map_err(|&source| PipelineError::Feature { key: s.key, source })?;
    let t = Instant::now();
    model
        .predict_proba_into(&v.values, probs)
        .map_err(|source| PipelineError::Predict {
            key: s.key,
            source: Box::new(source),
        })?;
    let class = crate::forest::argmax(probs);
    let predict_ns = t.elapsed().as_nanos() as u64;
    Ok(ClassifyResult {
        key: s.key,
        label: model.classes[class].clone(),
        class,
        confidence: probs[class],
        packets: s.packets,
        trigger: s.trigger,
        latency_us: (s.extract_ns + predict_ns) as f64 / 1000.0,
    })
}

/// Runs a whole trace. Per-flow failures are reported in place and do not
/// stop the stream.
pub fn classify_stream<'a>(
    packets: impl IntoIterator<Item = &'a PacketRecord>,
    model: &ForestModel,
    cfg: StreamConfig,
) -> Result<(Vec<Result<ClassifyResult, PipelineError>>, FlowTableStats), PipelineError> {
    let mut c = Classifier::new(model, cfg)?;
    let mut out = Vec::new();
    for p in packets {
        c.push(p, &mut out);
    }
    c.finish(&mut out);
    Ok((out, c.stats()))
}

/// Splits the trace by flow key into `jobs` independent tables and
/// classifies the shards in parallel. Results are ordered by flow key, then
/// by emission order within the key, so the output does not depend on
/// `jobs` unless a shard's table fills up.
pub fn classify_sharded(
    packets: &[PacketRecord],
    model: &ForestModel,
    cfg: StreamConfig,
    jobs: usize,
) -> Result<(Vec<Result<ClassifyResult, PipelineError>>, FlowTableStats), PipelineError> {
    if jobs == 0 {
        return Err(PipelineError::InvalidConfig("jobs must be at least 1".into()));
    }
    let mut shards: Vec<Vec<&PacketRecord>> = vec![Vec::new(); jobs];
    for p in packets {
        let mut h = DefaultHasher::new();
        FlowKey::of(p).hash(&mut h);
        shards[(h.finish() % jobs as u64) as usize].push(p);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    let parts = pool.install(|| {
        shards
            .par_iter()
            .map(|s| classify_stream(s.iter().copied(), model, cfg))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut out = Vec::new();
    let mut stats = FlowTableStats::default();
    for (res, st) in parts {
        out.extend(res);
        stats.packets += st.packets;
        stats.skipped += st.skipped;
        stats.flows_created += st.flows_created;
        stats.idle_evictions += st.idle_evictions;
        stats.finished_evictions += st.finished_evictions;
        stats.cap_evictions += st.cap_evictions;
        stats.table_full_evictions += st.table_full_evictions;
    }
    out.sort_by_key(|r| match r {
        Ok(r) => Some(r.key),
        Err(PipelineError::Feature { key, .. } | PipelineError::Predict { key, .. }) => Some(*key),
        Err(_) => None,
    });
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{train, TrainParams};
    use crate::pipelines::{app_trace, labeled_rows, rows_to_dataset, snapshots, two_apps};

    #[test]
    fn two_apps_are_separated() {
        let cfg = StreamConfig::default();
        let t = app_trace(&two_apps(), 100, 1).unwrap();
        let (snaps, _) = snapshots(&t.packets, cfg).unwrap();
        let ds = rows_to_dataset(&labeled_rows(&snaps, &t.truth)).unwrap();
        let m = train(&ds, &TrainParams { n_trees: 30, ..Default::default() }).unwrap();

        let test = app_trace(&two_apps(), 100, 2).unwrap();
        let (res, _) = classify_stream(&test.packets, &m, cfg).unwrap();
        assert_eq!(res.len(), 200);
        let ok = res
            .iter()
            .filter(|r| {
                let r = r.as_ref().unwrap();
                test.label_of(&r.key) == Some(&r.label)
            })
            .count();
        assert!(ok >= 190, "{ok}/200");
        assert!(classify_stream(&[], &m, cfg).unwrap().0.is_empty());
        for r in &res {
            let r = r.as_ref().unwrap();
            assert!((0.0..=1.0).contains(&r.confidence) && r.latency_us >= 0.0);
        }
    }

    #[test]
    fn sharding_does_not_change_results() {
        let cfg = StreamConfig::default();
        let t = app_trace(&two_apps(), 40, 3).unwrap();
        let (snaps, _) = snapshots(&t.packets, cfg).unwrap();
        let ds = rows_to_dataset(&labeled_rows(&snaps, &t.truth)).unwrap();
        let model = train(&ds, &TrainParams { n_trees: 10, ..Default::default() }).unwrap();
        let strip = |v: Vec<Result<ClassifyResult, PipelineError>>| -> Vec<(FlowKey, String, usize)> {
            v.into_iter().map(|r| r.unwrap()).map(|r| (r.key, r.label, r.packets)).collect()
        };
        let (one, s1) = classify_sharded(&t.packets, &model, cfg, 1).unwrap();
        let (four, s4) = classify_sharded(&t.packets, &model, cfg, 4).unwrap();
        assert_eq!(one.len(), 80);
        assert_eq!(strip(one), strip(four));
        assert_eq!(s1, s4);
        assert!(classify_sharded(&t.packets, &model, cfg, 0).is_err());
    }

    #[test]
    fn rejects_foreign_schema() {
        let m = crate::forest::tests::stub();
        assert!(matches!(
            Classifier::new(&m, StreamConfig::default()),
            Err(PipelineError::Model(_))
        ));
    }
}
