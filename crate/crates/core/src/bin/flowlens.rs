use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Deserialize;

use flowlens::dfa::{self, compile, parse_profile, DfaTable};
use flowlens::features::{read_batch, write_batch, BatchRow};
use flowlens::flow::FlowConfig;
use flowlens::forest::{
    evaluate, evaluate_predictions, load_model, reduce_features, save_model, train, Dataset, ForestModel, TrainParams,
};
use flowlens::hist::{bench::bench_hist, Category};
use flowlens::packet_io::{read_pcap, PacketRecord, PcapWriter, WriterOptions};
use flowlens::pipelines::bench::{bench_components, bench_e2e, LatencyReport};
use flowlens::pipelines::corpus::{payload_corpus_with, Sample, CORPUS_SEED};
use flowlens::pipelines::{
    app_trace, apply_labels, bundled_model, classify_sharded, five_apps, label_helper, parse_assignments, read_report,
    read_truth, rows_to_dataset, snapshots, two_apps, write_truth, Detector, Profiles, StreamConfig, Verdict,
    DEFAULT_THRESHOLD,
};

#[derive(Parser)]
#[command(name = "flowlens", version, about = "Flow classification, payload detection and traffic labeling")]
struct Cli {
    /// TOML file with defaults for the global options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed (default 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default 1).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Flow idle timeout in seconds (default 30).
    #[arg(long, global = true)]
    idle_timeout: Option<f64>,
    /// Packets before a flow is classified (default 8).
    #[arg(long, global = true)]
    min_pkts: Option<usize>,
    /// Attack probability needed to flag a payload (default 0.5).
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Output style (default text).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Text,
    Rows,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trace to feature rows, one per flow.
    Extract {
        pcap: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// `key,label` file used to label the rows.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Labeled feature rows (or a payload corpus) to a model file.
    Train {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Input is a `verdict<TAB>payload` corpus; trains a payload detector.
        #[arg(long)]
        payloads: bool,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        min_leaf: Option<usize>,
    },
    /// Drops low-importance features and retrains.
    Reduce {
        model: PathBuf,
        rows: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Cut as a fraction of the uniform importance 1/N.
        #[arg(long, default_value_t = 0.1)]
        cut: f64,
    },
    /// Model quality on labeled feature rows.
    Eval { model: PathBuf, rows: PathBuf },
    /// Classifies each flow of a trace once.
    Classify {
        pcap: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// `key,label` file; adds an accuracy line.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// SQLi/XSS verdicts for payloads, one per line (stdin when absent or `-`).
    Detect {
        input: Option<PathBuf>,
        /// Detector model; the bundled one when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Lines are `verdict<TAB>payload`; prints a confusion matrix.
        #[arg(long)]
        labeled: bool,
        /// Percent-decode payloads first.
        #[arg(long)]
        url_decode: bool,
        /// SQLi profile source or compiled table.
        #[arg(long)]
        sqli_profile: Option<PathBuf>,
        /// XSS profile source or compiled table.
        #[arg(long)]
        xss_profile: Option<PathBuf>,
    },
    /// Clusters a trace's flows and writes a report for labeling.
    Label {
        pcap: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
    },
    /// Applies `cluster_id=label` assignments to a cluster report.
    ApplyLabels {
        report: PathBuf,
        assignments: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compiles a token profile into a DFA table.
    Compile {
        profile: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Timing reports.
    Bench {
        #[arg(value_enum)]
        kind: BenchKind,
        /// Passes per trial for `hist`.
        #[arg(long, default_value_t = 200)]
        iters: usize,
        /// Measured rounds for `e2e`.
        #[arg(long, default_value_t = 3)]
        rounds: usize,
    },
    /// Writes a bundled synthetic dataset.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[arg(short, long)]
        out: PathBuf,
        /// Truth file for traces (default: OUT with `.truth` appended).
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        flows_per_app: usize,
        /// Corpus variant; the bundled corpus when absent.
        #[arg(long)]
        corpus_seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    Hist,
    Tokenize,
    Extract,
    Predict,
    E2e,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Apps2,
    Apps5,
    Corpus,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    jobs: Option<usize>,
    idle_timeout: Option<f64>,
    min_pkts: Option<usize>,
    max_flows: Option<usize>,
    pkt_cap: Option<usize>,
    threshold: Option<f64>,
    format: Option<Format>,
    trees: Option<usize>,
    max_depth: Option<usize>,
    min_leaf: Option<usize>,
}

/// Global options after flag > config file > default resolution.
struct Settings {
    seed: u64,
    jobs: usize,
    stream: StreamConfig,
    threshold: f64,
    format: Format,
    file: FileConfig,
}

impl Settings {
    fn resolve(cli: &Cli) -> Result<Settings> {
        let file: FileConfig = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let idle = cli.idle_timeout.or(file.idle_timeout).unwrap_or(30.0);
        if !(idle.is_finite() && idle > 0.0) {
            bail!("idle timeout must be a positive number of seconds");
        }
        let defaults = FlowConfig::default();
        let stream = StreamConfig {
            flow: FlowConfig {
                idle_timeout_us: (idle * 1e6) as u64,
                max_flows: file.max_flows.unwrap_or(defaults.max_flows),
                pkt_cap: file.pkt_cap.unwrap_or(defaults.pkt_cap),
                ..defaults
            },
            min_pkts: cli.min_pkts.or(file.min_pkts).unwrap_or(StreamConfig::default().min_pkts),
        };
        stream.validate()?;
        let jobs = cli.jobs.or(file.jobs).unwrap_or(1);
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        Ok(Settings {
            seed: cli.seed.or(file.seed).unwrap_or(42),
            jobs,
            stream,
            threshold: cli.threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD),
            format: cli.format.or(file.format).unwrap_or(Format::Text),
            file,
        })
    }

    fn train_params(&self, trees: Option<usize>, max_depth: Option<usize>, min_leaf: Option<usize>) -> TrainParams {
        let d = TrainParams::default();
        TrainParams {
            n_trees: trees.or(self.file.trees).unwrap_or(d.n_trees),
            max_depth: max_depth.or(self.file.max_depth).unwrap_or(d.max_depth),
            min_leaf: min_leaf.or(self.file.min_leaf).unwrap_or(d.min_leaf),
            seed: self.seed,
            jobs: self.jobs,
            ..d
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TADK_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// A closed stdout (e.g. `| head`) ends the run quietly.
fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe))
}

fn run(cli: Cli) -> Result<()> {
    let s = Settings::resolve(&cli)?;
    match cli.cmd {
        Cmd::Extract { pcap, out, truth } => cmd_extract(&s, &pcap, out.as_deref(), truth.as_deref()),
        Cmd::Train {
            input,
            out,
            payloads,
            trees,
            max_depth,
            min_leaf,
        } => {
            let params = s.train_params(trees, max_depth, min_leaf);
            cmd_train(&input, &out, payloads, &params)
        }
        Cmd::Reduce { model, rows, out, cut } => cmd_reduce(&s, &model, &rows, &out, cut),
        Cmd::Eval { model, rows } => cmd_eval(&s, &model, &rows),
        Cmd::Classify { pcap, model, truth } => cmd_classify(&s, &pcap, &model, truth.as_deref()),
        Cmd::Detect {
            input,
            model,
            labeled,
            url_decode,
            sqli_profile,
            xss_profile,
        } => {
            let profiles = load_profiles(sqli_profile.as_deref(), xss_profile.as_deref())?;
            let opts = DetectOpts { labeled, url_decode };
            cmd_detect(&s, input.as_deref(), model.as_deref(), profiles.as_ref(), opts)
        }
        Cmd::Label { pcap, out, k_min, k_max } => cmd_label(&s, &pcap, &out, k_min, k_max),
        Cmd::ApplyLabels { report, assignments, out } => cmd_apply(&report, &assignments, out.as_deref()),
        Cmd::Compile { profile, out } => cmd_compile(&profile, &out),
        Cmd::Bench { kind, iters, rounds } => cmd_bench(&s, kind, iters, rounds),
        Cmd::Synth {
            kind,
            out,
            truth,
            flows_per_app,
            corpus_seed,
        } => cmd_synth(&s, kind, &out, truth, flows_per_app, corpus_seed),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p != Path::new("-") => {
            Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        _ => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read_trace(path: &Path) -> Result<Vec<PacketRecord>> {
    let t = read_pcap(path).with_context(|| format!("reading {}", path.display()))?;
    info!(
        "{}: {} packets, {} non-IP frames skipped",
        path.display(),
        t.meta.packet_count,
        t.meta.skipped
    );
    Ok(t.packets)
}

fn read_rows(path: &Path) -> Result<Vec<BatchRow>> {
    read_batch(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn cmd_extract(s: &Settings, pcap: &Path, out: Option<&Path>, truth: Option<&Path>) -> Result<()> {
    let packets = read_trace(pcap)?;
    let truth = match truth {
        Some(p) => read_truth(open(p)?)?,
        None => HashMap::new(),
    };
    let (snaps, stats) = snapshots(&packets, s.stream)?;
    let mut rows = Vec::with_capacity(snaps.len());
    let mut failed = 0;
    for snap in &snaps {
        match &snap.features {
            Ok(v) => rows.push(BatchRow::from_vector(v, truth.get(&snap.key).cloned())),
            Err(e) => {
                failed += 1;
                warn!("flow {}: {e}", snap.key);
            }
        }
    }
    info!("{} flows, {} without features, {} packets not TCP/UDP", snaps.len(), failed, stats.skipped);
    write_batch(output(out)?, &rows)?;
    Ok(())
}

fn read_payload_corpus(path: &Path) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let (v, payload) = line
            .split_once('\t')
            .with_context(|| format!("{}:{}: expected verdict<TAB>payload", path.display(), i + 1))?;
        let verdict: Verdict = v.parse().with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(Sample {
            payload: payload.to_string(),
            verdict,
        });
    }
    Ok(out)
}

fn cmd_train(input: &Path, out: &Path, payloads: bool, params: &TrainParams) -> Result<()> {
    let ds = if payloads {
        Profiles::bundled().dataset(&read_payload_corpus(input)?)
    } else {
        rows_to_dataset(&read_rows(input)?)?
    };
    if ds.is_empty() {
        bail!("{} has no labeled rows", input.display());
    }
    let model = train(&ds, params)?;
    save_model(&model, out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "trained {} trees on {} rows, {} classes; oob accuracy {:.4}",
        model.trees.len(),
        ds.len(),
        model.n_classes(),
        model.meta.oob_accuracy
    );
    Ok(())
}

/// Rows in the model's class dictionary; labels the model has never seen
/// are an error.
fn model_dataset(model: &ForestModel, rows: &[BatchRow]) -> Result<Dataset> {
    let classes: Vec<&str> = model.classes.iter().map(String::as_str).collect();
    let mut ds = Dataset::with_classes(model.schema.clone(), model.n_features, &classes);
    for r in rows {
        if let Some(l) = &r.label {
            if !model.classes.contains(l) {
                bail!("row {} has label {l:?}, which the model does not know", r.key);
            }
            ds.push(&r.values, l)?;
        }
    }
    if ds.is_empty() {
        bail!("no labeled rows");
    }
    Ok(ds)
}

fn cmd_reduce(s: &Settings, model: &Path, rows: &Path, out: &Path, cut: f64) -> Result<()> {
    if !(cut.is_finite() && cut >= 0.0) {
        bail!("--cut must be a nonnegative number");
    }
    let m = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let ds = model_dataset(&m, &read_rows(rows)?)?;
    let r = reduce_features(&m, &ds, cut)?;
    save_model(&r.model, out).with_context(|| format!("writing {}", out.display()))?;
    let verdict = if r.accepted { "accepted" } else { "kept original" };
    match s.format {
        Format::Text => println!(
            "{} of {} features below the cut; {verdict}; {} features kept, oob {:.4} -> {:.4}",
            r.dropped.len(),
            m.kept.len(),
            r.model.kept.len(),
            m.meta.oob_accuracy,
            r.model.meta.oob_accuracy
        ),
        Format::Rows => println!(
            "dropped,{},accepted,{},kept,{},oob_before,{:.4},oob_after,{:.4}",
            r.dropped.len(),
            r.accepted,
            r.model.kept.len(),
            m.meta.oob_accuracy,
            r.model.meta.oob_accuracy
        ),
    }
    Ok(())
}

fn cmd_eval(s: &Settings, model: &Path, rows: &Path) -> Result<()> {
    let m = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let ds = model_dataset(&m, &read_rows(rows)?)?;
    let report = evaluate(&m, &ds)?;
    match s.format {
        Format::Text => print!("{}", report.to_text()),
        Format::Rows => print!("{}", report.to_rows()),
    }
    Ok(())
}

fn cmd_classify(s: &Settings, pcap: &Path, model: &Path, truth: Option<&Path>) -> Result<()> {
    let m = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let packets = read_trace(pcap)?;
    let truth = match truth {
        Some(p) => Some(read_truth(open(p)?)?),
        None => None,
    };
    let (results, _) = classify_sharded(&packets, &m, s.stream, s.jobs)?;
    let mut w = output(None)?;
    if s.format == Format::Rows {
        writeln!(w, "key,label,confidence,packets,trigger,latency_us")?;
    }
    let (mut ok, mut n) = (0, 0);
    for r in &results {
        match r {
            Ok(r) => {
                match s.format {
                    Format::Text => writeln!(
                        w,
                        "{:<46} {:<12} {:.4} {:>4} {:<10} {:>8.3}us",
                        r.key.to_string(),
                        r.label,
                        r.confidence,
                        r.packets,
                        r.trigger.name(),
                        r.latency_us
                    )?,
                    Format::Rows => writeln!(
                        w,
                        "{},{},{:.4},{},{},{:.3}",
                        r.key,
                        r.label,
                        r.confidence,
                        r.packets,
                        r.trigger.name(),
                        r.latency_us
                    )?,
                }
                if let Some(want) = truth.as_ref().and_then(|t| t.get(&r.key)) {
                    n += 1;
                    ok += (want == &r.label) as usize;
                }
            }
            Err(e) => {
                warn!("{e}");
                if let flowlens::pipelines::PipelineError::Feature { key, .. } = e {
                    n += truth.as_ref().is_some_and(|t| t.contains_key(key)) as usize;
                }
            }
        }
    }
    if truth.is_some() {
        let acc = ok as f64 / n.max(1) as f64;
        match s.format {
            Format::Text => writeln!(w, "accuracy {acc:.4} ({ok}/{n})")?,
            Format::Rows => writeln!(w, "accuracy,{acc:.4},{ok},{n}")?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a profile file as a compiled table dump, or as profile source when
/// it is not one.
fn load_table(path: &Path) -> Result<DfaTable> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(b"TDFA") {
        return DfaTable::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()));
    }
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8 profile text", path.display()))?;
    let profile = parse_profile(&text).with_context(|| format!("parsing {}", path.display()))?;
    compile(&profile).with_context(|| format!("compiling {}", path.display()))
}

fn load_profiles(sqli: Option<&Path>, xss: Option<&Path>) -> Result<Option<Profiles>> {
    if sqli.is_none() && xss.is_none() {
        return Ok(None);
    }
    Ok(Some(Profiles {
        sqli: sqli.map_or_else(|| Ok(dfa::bundled(dfa::SQLI_PROFILE)), load_table)?,
        xss: xss.map_or_else(|| Ok(dfa::bundled(dfa::XSS_PROFILE)), load_table)?,
    }))
}

#[derive(Clone, Copy)]
struct DetectOpts {
    labeled: bool,
    url_decode: bool,
}

fn cmd_detect(
    s: &Settings,
    input: Option<&Path>,
    model: Option<&Path>,
    profiles: Option<&Profiles>,
    opts: DetectOpts,
) -> Result<()> {
    let loaded = model
        .map(|p| load_model(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let model = match &loaded {
        Some(m) => m,
        None => {
            if profiles.is_some() {
                bail!("custom profiles need a model trained with them (--model)");
            }
            bundled_model()
        }
    };
    let profiles = profiles.unwrap_or(Profiles::bundled());
    let det = Detector::new(profiles, model, s.threshold)?;

    let mut data = Vec::new();
    match input {
        Some(p) if p != Path::new("-") => data = fs::read(p).with_context(|| format!("reading {}", p.display()))?,
        _ => {
            io::stdin().lock().read_to_end(&mut data)?;
        }
    }
    let mut w = output(None)?;
    if s.format == Format::Rows {
        writeln!(w, "id,verdict,confidence,tokens,latency_us")?;
    }
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    let mut lines: Vec<&[u8]> = data.split(|&b| b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    for (i, line) in lines.into_iter().enumerate() {
        let id = i as u64 + 1;
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        let payload = if opts.labeled {
            let tab = line
                .iter()
                .position(|&b| b == b'\t')
                .with_context(|| format!("line {id}: expected verdict<TAB>payload"))?;
            let v: Verdict = std::str::from_utf8(&line[..tab])
                .unwrap_or("")
                .parse()
                .with_context(|| format!("line {id}"))?;
            truth.push(v as u32);
            &line[tab + 1..]
        } else {
            line
        };
        let decoded;
        let payload = if opts.url_decode {
            decoded = dfa::url_decode(payload);
            &decoded[..]
        } else {
            payload
        };
        let r = det.detect(id, payload);
        predicted.push(r.verdict as u32);
        match s.format {
            Format::Text => writeln!(
                w,
                "{:>6} {:<7} {:.4} {:>5} {:>8.3}us",
                r.id, r.verdict, r.confidence, r.tokens, r.latency_us
            )?,
            Format::Rows => writeln!(
                w,
                "{},{},{:.4},{},{:.3}",
                r.id, r.verdict, r.confidence, r.tokens, r.latency_us
            )?,
        }
    }
    if opts.labeled && !truth.is_empty() {
        let classes: Vec<String> = Verdict::ALL.iter().map(|v| v.name().to_string()).collect();
        let report = evaluate_predictions(&classes, &truth, &predicted);
        let b = Verdict::Benign as usize;
        let fpr = if report.support[b] == 0 {
            0.0
        } else {
            (report.support[b] - report.confusion[b][b]) as f64 / report.support[b] as f64
        };
        match s.format {
            Format::Text => {
                write!(w, "{}", report.to_text())?;
                writeln!(w, "false positive rate {fpr:.4}")?;
            }
            Format::Rows => {
                write!(w, "{}", report.to_rows())?;
                writeln!(w, "fpr,{fpr:.4}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_label(s: &Settings, pcap: &Path, out: &Path, k_min: usize, k_max: usize) -> Result<()> {
    let packets = read_trace(pcap)?;
    let (snaps, _) = snapshots(&packets, s.stream)?;
    let report = label_helper(&snaps, k_min..=k_max, s.seed)?;
    let f = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    report.write(BufWriter::new(f))?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_apply(report: &Path, assignments: &Path, out: Option<&Path>) -> Result<()> {
    let r = read_report(open(report)?).with_context(|| format!("reading {}", report.display()))?;
    let a = parse_assignments(open(assignments)?).with_context(|| format!("reading {}", assignments.display()))?;
    let rows = apply_labels(&r, &a)?;
    info!("{} labeled rows", rows.len());
    write_batch(output(out)?, &rows)?;
    Ok(())
}

fn cmd_compile(profile: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(profile).with_context(|| format!("reading {}", profile.display()))?;
    let p = parse_profile(&text).with_context(|| format!("parsing {}", profile.display()))?;
    let table = compile(&p).with_context(|| format!("compiling {}", profile.display()))?;
    fs::write(out, table.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
    println!("{} states, {} tokens", table.n_states(), table.n_tokens());
    Ok(())
}

fn print_latency(s: &Settings, r: &LatencyReport) {
    match s.format {
        Format::Text => print!("{}", r.to_text()),
        Format::Rows => print!("{}", r.to_rows()),
    }
}

fn cmd_bench(s: &Settings, kind: BenchKind, iters: usize, rounds: usize) -> Result<()> {
    let pick = |name: &str| -> Result<LatencyReport> {
        let mut r = bench_components(s.seed)?;
        r.rows.retain(|row| row.name == name);
        Ok(r)
    };
    match kind {
        BenchKind::Hist => {
            if s.format == Format::Rows {
                println!("category,backend,ns_per_lane,speedup");
            }
            for cat in Category::ALL {
                let r = bench_hist(cat, iters)?;
                match s.format {
                    Format::Text => {
                        for row in &r.rows {
                            println!(
                                "{:<5} {:<9} {:>9.3} ns/lane {:>7.2}x",
                                row.category, row.backend, row.ns_per_lane, row.speedup
                            );
                        }
                    }
                    Format::Rows => print!("{}", r.to_rows()),
                }
            }
        }
        BenchKind::Tokenize => print_latency(s, &pick("tokenize_request")?),
        BenchKind::Extract => print_latency(s, &pick("extract_flow")?),
        BenchKind::Predict => print_latency(s, &pick("predict_vector")?),
        BenchKind::E2e => print_latency(s, &bench_e2e(s.seed, rounds)?),
    }
    Ok(())
}

fn cmd_synth(
    s: &Settings,
    kind: SynthKind,
    out: &Path,
    truth: Option<PathBuf>,
    flows_per_app: usize,
    corpus_seed: Option<u64>,
) -> Result<()> {
    let apps = match kind {
        SynthKind::Apps2 => two_apps(),
        SynthKind::Apps5 => five_apps(),
        SynthKind::Corpus => {
            let seed = corpus_seed.unwrap_or(CORPUS_SEED);
            let mut w = output(Some(out))?;
            for sample in payload_corpus_with(seed) {
                writeln!(w, "{}\t{}", sample.verdict, sample.payload)?;
            }
            w.flush()?;
            return Ok(());
        }
    };
    let t = app_trace(&apps, flows_per_app, s.seed)?;
    let mut w = PcapWriter::create(out, WriterOptions::default()).with_context(|| format!("creating {}", out.display()))?;
    for p in &t.packets {
        w.write_record(p)?;
    }
    w.finish()?;
    let truth = truth.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".truth");
        PathBuf::from(p)
    });
    write_truth(output(Some(&truth))?, &t.truth)?;
    println!("{} packets, {} flows", t.packets.len(), t.truth.len());
    Ok(())
}
