use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::{
    AdaptArgs, Cli, Command, ConfigFile, DataArgs, EvalArgs, GraphArgs, SynthArgs, TrainArgs, CHECKPOINT_FILE,
    LOSS_LOG_FILE, MANIFEST_FILE, OUT_DIR_ENV, TRAJECTORIES_FILE, VERSION,
};
use crate::adaptation::{run_online, AdaptationSummary, AdapterConfig, StepRecord, DEFAULT_SUBSET};
use crate::data::{
    assign_trials, load_csv, prepare_windows, save_csv, synth_generate, Dataset, SmoothingConfig, SplitManifest,
    SplitScheme, SplitTag, SubjectProfile, TrajectoryWindow,
};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig, PredictorModel, ScoreFn, Variant};
use crate::numeric::Seed;
use crate::taskgraph::{self, AndOrGraph, Verdict};
use crate::training::{
    evaluate, init_model, train, write_loss_log, AdamConfig, EpochLog, LossConfig, Metrics, TrainConfig,
};

struct Common {
    cfg: ConfigFile,
    out_dir: PathBuf,
    seed: u64,
}

#[derive(Serialize)]
struct Report<C: Serialize, R: Serialize, T: Serialize> {
    command: &'static str,
    version: &'static str,
    config: C,
    results: R,
    /// Wall-clock figures; the only part that differs between reruns.
    timing: T,
}

fn write_report<C: Serialize, R: Serialize, T: Serialize>(
    common: &Common,
    report: &Report<C, R, T>,
    file: Option<&str>,
) -> Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    if let Some(name) = file {
        let path = common.out_dir.join(name);
        std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    }
    print!("{text}");
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let out_dir = match cli.out_dir.clone() {
        Some(d) => d,
        None => match std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            Some(d) => PathBuf::from(d),
            None => cfg.or(None, "out_dir", PathBuf::from("out"))?,
        },
    };
    let seed = cfg.or(cli.seed, "seed", 0u64)?;
    let common = Common { cfg, out_dir, seed };
    match cli.command {
        Command::Synth(a) => synth(&common, a),
        Command::Train(a) => train_cmd(&common, a),
        Command::Eval(a) => eval(&common, a),
        Command::Adapt(a) => adapt(&common, a),
        Command::Graph(a) => graph(&common, a),
    }
}

// ---------------------------------------------------------------- synth

#[derive(Serialize)]
struct SynthSettings {
    seed: u64,
    out_dir: PathBuf,
    trials_a: usize,
    trials_b: usize,
    split: String,
    profiles: Vec<SubjectProfile>,
}

#[derive(Serialize)]
struct SynthResults {
    n_trajectories: usize,
    n_frames: usize,
    train_trials: usize,
    val_trials: usize,
    test_trials: usize,
}

fn synth(common: &Common, args: SynthArgs) -> Result<()> {
    let c = &common.cfg;
    let trials_a = c.or(args.trials_a, "trials_a", 50usize)?;
    let trials_b = c.or(args.trials_b, "trials_b", 10usize)?;
    let split: String = c.or(args.split, "split", "holdout:A".to_string())?;
    let scheme: SplitScheme = split.parse()?;
    let profiles = vec![SubjectProfile::reference("A", 1), SubjectProfile::shifted("B", 2)];
    let started = Instant::now();

    let seed = Seed(common.seed);
    let mut trajs = synth_generate(&profiles[..1], trials_a, seed)?;
    trajs.extend(synth_generate(&profiles[1..], trials_b, seed)?);
    let trials: Vec<(String, String, usize)> = trajs
        .iter()
        .map(|t| (t.subject_id.clone(), t.trial_id.clone(), t.action_id))
        .collect();
    let manifest = assign_trials(&trials, &scheme, seed)?;

    ensure_dir(&common.out_dir)?;
    save_csv(&trajs, &common.out_dir.join(TRAJECTORIES_FILE))?;
    manifest.save(&common.out_dir.join(MANIFEST_FILE))?;

    let report = Report {
        command: "synth",
        version: VERSION,
        config: SynthSettings {
            seed: common.seed,
            out_dir: common.out_dir.clone(),
            trials_a,
            trials_b,
            split: scheme.to_string(),
            profiles,
        },
        results: SynthResults {
            n_trajectories: trajs.len(),
            n_frames: trajs.iter().map(|t| t.frames.len()).sum(),
            train_trials: manifest.count(SplitTag::Train),
            val_trials: manifest.count(SplitTag::Val),
            test_trials: manifest.count(SplitTag::Test),
        },
        timing: Timing::since(started),
    };
    write_report(common, &report, Some("synth_report.json"))
}

#[derive(Serialize)]
struct Timing {
    seconds: f64,
}

impl Timing {
    fn since(start: Instant) -> Self {
        Timing {
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

// ---------------------------------------------------------------- data

#[derive(Clone, Serialize)]
struct DataSettings {
    data_dir: PathBuf,
    smoothing: Option<SmoothingConfig>,
    stride: usize,
}

fn data_settings(common: &Common, args: DataArgs) -> Result<DataSettings> {
    let c = &common.cfg;
    let data_dir = c.or(args.data_dir, "data_dir", common.out_dir.clone())?;
    let smoothing = if c.or(args.smoothing, "smoothing", true)? {
        let d = SmoothingConfig::default();
        Some(SmoothingConfig {
            process_std: c.or(args.process_std, "process_std", d.process_std)?,
            measurement_std: c.or(args.measurement_std, "measurement_std", d.measurement_std)?,
        })
    } else {
        None
    };
    if let Some(s) = smoothing {
        if !(s.process_std > 0.0 && s.measurement_std > 0.0) {
            return Err(Error::Config("smoothing noise levels must be positive".into()));
        }
    }
    let stride = c.or(args.stride, "stride", 1usize)?;
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    Ok(DataSettings {
        data_dir,
        smoothing,
        stride,
    })
}

fn load_dataset(data: &DataSettings, n: usize, m: usize) -> Result<Dataset> {
    let trajs = load_csv(&data.data_dir.join(TRAJECTORIES_FILE))?;
    let manifest = SplitManifest::load(&data.data_dir.join(MANIFEST_FILE))?;
    let windows = prepare_windows(&trajs, data.smoothing, n, m, data.stride)?;
    Dataset::from_manifest(windows, &manifest)
}

fn parse_tag(s: &str) -> Result<SplitTag> {
    match s {
        "train" => Ok(SplitTag::Train),
        "val" => Ok(SplitTag::Val),
        "test" => Ok(SplitTag::Test),
        other => Err(Error::Config(format!("unknown split `{other}` (expected train, val or test)"))),
    }
}

fn split_windows(ds: &Dataset, tag: SplitTag) -> Result<Vec<TrajectoryWindow>> {
    let w = ds.get(tag);
    if w.is_empty() {
        return Err(Error::Config(format!("the {tag} split has no windows")));
    }
    Ok(w)
}

// ---------------------------------------------------------------- train

fn parse_variant(s: &str) -> Result<Variant> {
    match s {
        "multi" => Ok(Variant::Multi),
        "intent" => Ok(Variant::Intent),
        "traj" | "trajectory" => Ok(Variant::Trajectory),
        other => Err(Error::Config(format!("unknown variant `{other}` (expected multi, intent or traj)"))),
    }
}

fn parse_score(s: &str) -> Result<ScoreFn> {
    match s {
        "general" => Ok(ScoreFn::General),
        "cosine" => Ok(ScoreFn::Cosine),
        other => Err(Error::Config(format!("unknown attention score `{other}` (expected general or cosine)"))),
    }
}

#[derive(Serialize)]
struct TrainSettings {
    seed: u64,
    out_dir: PathBuf,
    data: DataSettings,
    model: ModelConfig,
    train: TrainConfig,
    loss: LossConfig,
}

#[derive(Serialize)]
struct TrainResults {
    n_params: usize,
    n_train: usize,
    n_val: usize,
    epochs_run: usize,
    final_epoch: Option<EpochLog>,
    best_val_loss: Option<f64>,
}

fn train_cmd(common: &Common, args: TrainArgs) -> Result<()> {
    let c = &common.cfg;
    let variant = parse_variant(&c.or(args.variant, "variant", "multi".to_string())?)?;
    let score = parse_score(&c.or(args.score, "score", "general".to_string())?)?;
    let model_cfg = ModelConfig {
        variant,
        score,
        ..ModelConfig::with_hidden(c.or(args.hidden, "hidden", 64usize)?)
    };
    model_cfg.validate()?;
    let d = TrainConfig::default();
    let patience = c.or(args.patience, "patience", d.patience.unwrap_or(0))?;
    let clip = c.or(args.clip_norm, "clip_norm", 0.0)?;
    let train_cfg = TrainConfig {
        batch_size: c.or(args.batch_size, "batch_size", d.batch_size)?,
        adam: AdamConfig {
            learning_rate: c.or(args.learning_rate, "learning_rate", d.adam.learning_rate)?,
            ..d.adam
        },
        epochs: c.or(args.epochs, "epochs", d.epochs)?,
        seed: Seed(common.seed),
        teacher_forcing: c.or(args.teacher_forcing, "teacher_forcing", d.teacher_forcing)?,
        clip_norm: (clip != 0.0).then_some(clip),
        patience: (patience > 0).then_some(patience),
    };
    train_cfg.validate()?;
    let loss = LossConfig::new(c.or(args.gamma, "gamma", LossConfig::default().gamma())?)?;
    let data = data_settings(common, args.data)?;
    let started = Instant::now();

    let ds = load_dataset(&data, model_cfg.n_past, model_cfg.m_future)?;
    let train_w = split_windows(&ds, SplitTag::Train)?;
    let val_w = ds.get(SplitTag::Val);
    let mut model = init_model(model_cfg.clone(), Seed(common.seed), &train_w)?;
    let log = train(&mut model, &train_w, &val_w, &train_cfg, &loss)?;

    ensure_dir(&common.out_dir)?;
    save_checkpoint(&model, &common.out_dir.join(CHECKPOINT_FILE))?;
    let log_path = common.out_dir.join(LOSS_LOG_FILE);
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    write_loss_log(&log, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Config(msg) => Error::io(&log_path, std::io::Error::other(msg)),
        other => other,
    })?;

    let report = Report {
        command: "train",
        version: VERSION,
        config: TrainSettings {
            seed: common.seed,
            out_dir: common.out_dir.clone(),
            data,
            model: model_cfg,
            train: train_cfg,
            loss,
        },
        results: TrainResults {
            n_params: model.num_params(),
            n_train: train_w.len(),
            n_val: val_w.len(),
            epochs_run: log.len(),
            best_val_loss: log.iter().filter_map(|r| r.val_loss).reduce(f64::min),
            final_epoch: log.last().cloned(),
        },
        timing: Timing::since(started),
    };
    write_report(common, &report, Some("train_report.json"))
}

// ---------------------------------------------------------------- eval

#[derive(Serialize)]
struct EvalSettings {
    seed: u64,
    checkpoint: PathBuf,
    eval_split: SplitTag,
    data: DataSettings,
    model: ModelConfig,
}

#[derive(Serialize)]
struct EvalResults {
    metrics: Metrics,
}

fn checkpoint_path(common: &Common, flag: Option<PathBuf>) -> Result<PathBuf> {
    common.cfg.or(flag, "checkpoint", common.out_dir.join(CHECKPOINT_FILE))
}

fn eval(common: &Common, args: EvalArgs) -> Result<()> {
    let c = &common.cfg;
    let checkpoint = checkpoint_path(common, args.checkpoint)?;
    let tag = parse_tag(&c.or(args.eval_split, "eval_split", "test".to_string())?)?;
    let data = data_settings(common, args.data)?;
    let started = Instant::now();
    let model = load_checkpoint(&checkpoint)?;
    let ds = load_dataset(&data, model.config.n_past, model.config.m_future)?;
    let windows = split_windows(&ds, tag)?;
    let metrics = evaluate(&model, &windows)?;
    ensure_dir(&common.out_dir)?;
    let report = Report {
        command: "eval",
        version: VERSION,
        config: EvalSettings {
            seed: common.seed,
            checkpoint,
            eval_split: tag,
            data,
            model: model.config.clone(),
        },
        results: EvalResults { metrics },
        timing: Timing::since(started),
    };
    write_report(common, &report, Some("eval_report.json"))
}

// ---------------------------------------------------------------- adapt

#[derive(Serialize)]
struct AdaptSettings {
    seed: u64,
    checkpoint: PathBuf,
    eval_split: SplitTag,
    data: DataSettings,
    ks: Vec<usize>,
    adapter: AdapterConfig,
}

#[derive(Serialize)]
struct AdaptRun {
    k: usize,
    summary: AdaptationSummary,
    steps: Vec<StepRecord>,
}

#[derive(Serialize)]
struct AdaptResults {
    baseline: Metrics,
    runs: Vec<AdaptRun>,
}

#[derive(Serialize)]
struct AdaptTiming {
    k: usize,
    mean_adapt_step_ms: f64,
    adapt_step_ms: Vec<f64>,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Config(format!("bad {what} `{p}` in `{s}`"))))
        .collect()
}

fn adapt(common: &Common, args: AdaptArgs) -> Result<()> {
    let c = &common.cfg;
    let checkpoint = checkpoint_path(common, args.checkpoint)?;
    let tag = parse_tag(&c.or(args.eval_split, "eval_split", "test".to_string())?)?;
    let ks: Vec<usize> = parse_list(&c.or(args.k, "k", "1,2,5".to_string())?, "k")?;
    if ks.is_empty() {
        return Err(Error::Config("no k values given".into()));
    }
    let subset: Vec<String> = parse_list(&c.or(args.subset, "subset", DEFAULT_SUBSET.join(","))?, "subset")?;
    let d = AdapterConfig::default();
    let base = AdapterConfig {
        p0: c.or(args.p0, "p0", d.p0)?,
        lambda: c.or(args.lambda, "lambda", d.lambda)?,
        r: c.or(args.r, "r", d.r)?,
        epsilon: c.or(args.epsilon, "epsilon", d.epsilon)?,
        k: ks[0],
        subset,
        horizon: c.or(args.horizon, "horizon", d.horizon)?,
    };
    for &k in &ks {
        AdapterConfig { k, ..base.clone() }.validate()?;
    }
    let data = data_settings(common, args.data)?;
    let started = Instant::now();
    let model = load_checkpoint(&checkpoint)?;
    let ds = load_dataset(&data, model.config.n_past, model.config.m_future)?;
    let stream = split_windows(&ds, tag)?;

    let mut runs = Vec::with_capacity(ks.len());
    let mut timing = Vec::with_capacity(ks.len());
    for &k in &ks {
        let mut adapted: PredictorModel = model.clone();
        let cfg = AdapterConfig { k, ..base.clone() };
        let report = run_online(&mut adapted, &stream, &cfg)?;
        timing.push(AdaptTiming {
            k,
            mean_adapt_step_ms: report.timing.mean_adapt_step_ms,
            adapt_step_ms: report.timing.adapt_step_ms,
        });
        runs.push(AdaptRun {
            k,
            summary: report.summary,
            steps: report.steps,
        });
    }
    ensure_dir(&common.out_dir)?;
    let report = Report {
        command: "adapt",
        version: VERSION,
        config: AdaptSettings {
            seed: common.seed,
            checkpoint,
            eval_split: tag,
            data,
            ks,
            adapter: base,
        },
        results: AdaptResults {
            baseline: runs[0].summary.frozen.clone(),
            runs,
        },
        timing: (Timing::since(started), timing),
    };
    write_report(common, &report, Some("adapt_report.json"))
}

// ---------------------------------------------------------------- graph

#[derive(Serialize)]
struct GraphSettings {
    graph: Option<PathBuf>,
    trace: Vec<u32>,
}

#[derive(Serialize)]
struct GraphResults {
    graph: AndOrGraph,
    verdict: Verdict,
    feasible_next: Option<Vec<u32>>,
    progress: Option<f64>,
}

fn graph(common: &Common, args: GraphArgs) -> Result<()> {
    let c = &common.cfg;
    let path: Option<PathBuf> = c.get(args.graph, "graph")?;
    let trace_text = match c.get(args.trace_file, "trace_file")? {
        Some(p) if args.trace.is_none() => {
            let text: String = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            text.split_whitespace().collect::<Vec<_>>().join(",")
        }
        _ => c.or(args.trace, "trace", String::new())?,
    };
    let trace: Vec<u32> = parse_list(&trace_text, "action id")?;
    let started = Instant::now();
    let g = match &path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            taskgraph::parse(&text).map_err(|e| Error::Config(format!("{}:{e}", p.display())))?
        }
        None => taskgraph::card_making(),
    };
    let verdict = taskgraph::validate_trace(&g, &trace);
    let (feasible_next, progress) = match verdict {
        Verdict::Valid => (
            Some(taskgraph::feasible_next(&g, &trace)?.into_iter().collect()),
            Some(taskgraph::progress(&g, &trace)?),
        ),
        Verdict::FirstViolation(_) => (None, None),
    };
    let report = Report {
        command: "graph",
        version: VERSION,
        config: GraphSettings { graph: path, trace },
        results: GraphResults {
            graph: g,
            verdict,
            feasible_next,
            progress,
        },
        timing: Timing::since(started),
    };
    write_report(common, &report, None)?;
    match verdict {
        Verdict::Valid => Ok(()),
        Verdict::FirstViolation(v) => Err(Error::InvalidTrace(v)),
    }
}
