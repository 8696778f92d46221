mod common;

use flowlens::dfa::{self, compile, parse_profile, DfaTable};
use flowlens::flow::{aggregate, FlowConfig};
use flowlens::forest::{train, ForestModel, TrainParams};
use flowlens::packet_io::{
    read_pcap_bytes, synth_trace, AppPayload, Dist, LinkType, PcapWriter, SynthSpec, Transport, WriterOptions,
};
use flowlens::pipelines::corpus::payload_corpus;
use flowlens::pipelines::{
    app_trace, classify_stream, label_helper, labeled_rows, rows_to_dataset, snapshots, two_apps, Detector, Profiles,
    StreamConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn spec_strategy() -> impl Strategy<Value = SynthSpec> {
    (
        1usize..6,
        1.0f64..30.0,
        0.0f64..1500.0,
        any::<bool>(),
        any::<bool>(),
        0usize..4,
        any::<u64>(),
    )
        .prop_map(|(flows, pkts, payload, udp, ipv6, app, seed)| SynthSpec {
            flows,
            packets_per_flow: Dist::Uniform { lo: 1.0, hi: pkts },
            payload_len: Dist::Uniform { lo: 0.0, hi: payload },
            transport: if udp { Transport::Udp } else { Transport::Tcp },
            server_port: if udp { 53 } else { 80 },
            ipv6,
            app: match app {
                0 => AppPayload::None,
                1 => AppPayload::HttpGet {
                    host: "h.example".into(),
                    path: "/a?b=1".into(),
                },
                2 => AppPayload::TlsClientHello { sni: "s.example".into() },
                _ => AppPayload::DnsQuery { qname: "q.example".into() },
            },
            seed,
            ..Default::default()
        })
}

fn to_pcap(records: &[flowlens::packet_io::PacketRecord], opts: WriterOptions) -> Vec<u8> {
    let mut w = PcapWriter::new(Vec::new(), opts).unwrap();
    for r in records {
        w.write_record(r).unwrap();
    }
    w.finish().unwrap()
}

fn sample_model() -> ForestModel {
    let ds = Profiles::bundled().dataset(&payload_corpus());
    train(
        &ds,
        &TrainParams {
            n_trees: 5,
            ..Default::default()
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pcap_round_trip(spec in spec_strategy(), big in any::<bool>(), nanos in any::<bool>(), raw in any::<bool>()) {
        let recs = synth_trace(&spec).unwrap();
        let opts = WriterOptions {
            big_endian: big,
            nanos,
            link_type: if raw { LinkType::RawIp } else { LinkType::Ethernet },
            ..Default::default()
        };
        let t = read_pcap_bytes(&to_pcap(&recs, opts)).unwrap();
        prop_assert_eq!(t.meta.packet_count, recs.len() as u64);
        prop_assert_eq!(t.packets, recs);
    }

    #[test]
    fn pcap_reader_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = read_pcap_bytes(&bytes);
    }

    #[test]
    fn damaged_pcaps_never_panic(spec in spec_strategy(), edits in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..8), cut in any::<prop::sample::Index>()) {
        let mut bytes = to_pcap(&synth_trace(&spec).unwrap(), WriterOptions::default());
        for (i, b) in edits {
            let i = i.index(bytes.len());
            bytes[i] = b;
        }
        let cut = cut.index(bytes.len() + 1);
        let _ = read_pcap_bytes(&bytes[..cut]);
    }

    #[test]
    fn flow_conservation(spec in spec_strategy(), idle in 1u64..100_000, max_flows in 1usize..8, cap in 1usize..40) {
        let recs = synth_trace(&spec).unwrap();
        for cfg in [FlowConfig::default(), FlowConfig { idle_timeout_us: idle, max_flows, pkt_cap: cap, ..Default::default() }] {
            let (flows, stats) = aggregate(cfg, &recs);
            let total: u64 = flows.iter().map(|f| f.packets.len() as u64).sum();
            prop_assert_eq!(total + stats.skipped, recs.len() as u64);
        }
    }

    #[test]
    fn tokenizer_matches_reference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = random_profile_text(&mut rng, 8);
        let profile = parse_profile(&text).unwrap();
        let table = compile(&profile).unwrap();
        for _ in 0..8 {
            let input = random_input(&mut rng, 60);
            let want = reference_tokenize(&profile, &input);
            let got = table.tokenize(&input);
            let got_tokens: Vec<_> = got.tokens.iter().map(|t| (t.id, t.start, t.end)).collect();
            prop_assert_eq!(&got_tokens, &want.tokens, "{}", text);
            prop_assert_eq!(got.stats.skipped, want.unmatched);
            prop_assert_eq!(got.stats.skip_rule_bytes, want.skip_bytes);
        }
    }

    #[test]
    fn dumped_tables_reload_identically(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = compile(&parse_profile(&random_profile_text(&mut rng, 6)).unwrap()).unwrap();
        let back = DfaTable::from_bytes(&table.to_bytes()).unwrap();
        let input = random_input(&mut rng, 60);
        prop_assert_eq!(back.tokenize(&input), table.tokenize(&input));
    }

    #[test]
    fn profile_parser_never_panics(text in "[a-z =\\[\\]()|*+?\"\\\\#\n^-]{0,80}") {
        if let Ok(p) = parse_profile(&text) {
            let _ = compile(&p);
        }
    }

    #[test]
    fn damaged_tables_never_panic(edits in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6), cut in any::<prop::sample::Index>()) {
        let mut bytes = dfa::bundled(dfa::XSS_PROFILE).to_bytes();
        for (i, b) in edits {
            let i = i.index(bytes.len());
            bytes[i] = b;
        }
        let cut = cut.index(bytes.len() + 1);
        if let Ok(t) = DfaTable::from_bytes(&bytes[..cut]) {
            let _ = t.tokenize(b"<script>alert(1)</script> 1' or 1=1 --");
        }
    }

    #[test]
    fn damaged_models_never_panic(edits in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6), cut in any::<prop::sample::Index>()) {
        static BYTES: std::sync::OnceLock<Vec<u8>> = std::sync::OnceLock::new();
        let mut bytes = BYTES.get_or_init(|| sample_model().to_bytes()).clone();
        for (i, b) in edits {
            let i = i.index(bytes.len());
            bytes[i] = b;
        }
        let cut = cut.index(bytes.len() + 1);
        if let Ok(m) = ForestModel::from_bytes(&bytes[..cut]) {
            let x = vec![1.0; m.n_features];
            let p = m.predict(&x).unwrap();
            prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn forest_ignores_tree_order_and_scales_with_thresholds() {
    let model = sample_model();
    let ds = Profiles::bundled().dataset(&payload_corpus());
    let mut reversed = model.clone();
    reversed.trees.reverse();
    // one feature scaled by 3 with its thresholds scaled alike
    let f = model.trees[0].nodes[0].feature as usize;
    let mut scaled = model.clone();
    for t in &mut scaled.trees {
        for n in &mut t.nodes {
            if !n.is_leaf() && n.feature as usize == f {
                n.threshold *= 3.0;
            }
        }
    }
    for i in 0..ds.len() {
        let x = ds.row(i);
        let a = model.predict(x).unwrap();
        let b = reversed.predict(x).unwrap();
        assert_eq!(a.class, b.class);
        for (p, q) in a.probs.iter().zip(&b.probs) {
            assert!((p - q).abs() < 1e-12);
        }
        let mut y = x.to_vec();
        y[f] *= 3.0;
        assert_eq!(scaled.predict(&y).unwrap(), a);
        assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(reference_predict(&model, x).0, a.class);
    }
}

#[test]
fn verdicts_ignore_letter_case() {
    let det = Detector::bundled(0.5).unwrap();
    let profiles = Profiles::bundled();
    for s in payload_corpus() {
        let p = s.payload.as_bytes();
        let up = s.payload.to_ascii_uppercase();
        let low = s.payload.to_ascii_lowercase();
        assert_eq!(profiles.features(p), profiles.features(up.as_bytes()), "{}", s.payload);
        assert_eq!(profiles.features(p), profiles.features(low.as_bytes()), "{}", s.payload);
        let v = det.detect(0, p).verdict;
        assert_eq!(det.detect(0, up.as_bytes()).verdict, v);
        assert_eq!(det.detect(0, low.as_bytes()).verdict, v);
    }
}

#[test]
fn pipelines_are_deterministic() {
    let cfg = StreamConfig::default();
    let t = app_trace(&two_apps(), 50, 11).unwrap();
    let run = || {
        let (snaps, _) = snapshots(&t.packets, cfg).unwrap();
        let ds = rows_to_dataset(&labeled_rows(&snaps, &t.truth)).unwrap();
        let m = train(&ds, &TrainParams { n_trees: 10, ..Default::default() }).unwrap();
        let (res, stats) = classify_stream(&t.packets, &m, cfg).unwrap();
        let res: Vec<_> = res.into_iter().map(|r| r.map(|r| (r.key, r.label, r.confidence, r.packets))).map(Result::unwrap).collect();
        let report = label_helper(&snaps, 2..=4, 3).unwrap();
        (m.to_bytes(), res, stats, report.to_text())
    };
    assert_eq!(run(), run());
    assert_eq!(app_trace(&two_apps(), 50, 11).unwrap().packets, t.packets);
}
