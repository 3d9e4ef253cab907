use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use dropsync_core::drops::{inject_scene_drops, DropDistribution, ScenePlacement};
use dropsync_core::scene::{render_scene, DeviceRecording, RenderedScene, SceneConfig, SceneGroundTruth};
use dropsync_core::signal::spectrogram;
use dropsync_core::xcorr::{align_all, XcorrConfig};
use dropsync_core::{rng, wav, Spectrogram};
use dropsync_eval::detector::{decisions_csv, detect, DetectConfig};
use dropsync_eval::table1::{evaluate_windows, run_table1, train_config};
use dropsync_eval::{build_stage1_dataset, build_stage2_dataset, DeviceDecision, ExperimentConfig, MetricsReport};
use dropsync_neural::gradcheck::{check_input, check_params, GradCheckReport, DEFAULT_STEP};
use dropsync_neural::loss::{bce_with_logit, bce_with_logit_grad};
use dropsync_neural::train::{train, StageData};
use dropsync_neural::{checkpoint, EpochMetrics, HeadKind, ModelConfig, Parameterized, SiameseModel, Tensor};

use crate::args::{Command, Common, XcorrFlags};
use crate::error::{CliError, Result};
use crate::manifest::Run;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SCENE_CONFIG_FILE: &str = "scene.json";
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn device_file(device_id: u32) -> String {
    format!("device_{device_id}.wav")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn seeds(master: u64) -> BTreeMap<String, u64> {
    BTreeMap::from([("master".to_string(), master)])
}

pub fn load_scene(dir: &Path) -> Result<RenderedScene> {
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    if !gt_path.exists() {
        return Err(CliError::runtime(format!("missing ground-truth sidecar {}", gt_path.display())));
    }
    let ground_truth: SceneGroundTruth =
        serde_json::from_str(&std::fs::read_to_string(&gt_path)?).map_err(|e| CliError::runtime(format!("{}: {e}", gt_path.display())))?;
    let devices = ground_truth
        .device_ids
        .iter()
        .map(|&id| Ok(DeviceRecording { device_id: id, channels: wav::read(dir.join(device_file(id)))? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(RenderedScene { devices, ground_truth })
}

fn write_scene(run: &mut Run, scene: &RenderedScene) -> Result<()> {
    for d in &scene.devices {
        let name = device_file(d.device_id);
        wav::write(run.path(&name), &d.channels)?;
        run.track(&name);
    }
    run.write_json(GROUND_TRUTH_FILE, &scene.ground_truth)?;
    Ok(())
}

fn scene_spectrograms(scene: &RenderedScene, cfg: &ExperimentConfig) -> Result<(Vec<Spectrogram>, Vec<u32>)> {
    let stft = cfg.stft()?;
    let specs = scene.devices.iter().map(|d| spectrogram(&d.channels[0], &stft)).collect::<dropsync_core::Result<Vec<_>>>()?;
    Ok((specs, scene.devices.iter().map(|d| d.device_id).collect()))
}

fn xcorr_config(flags: &XcorrFlags) -> Result<XcorrConfig> {
    let mut c = XcorrConfig::default();
    let positive = |name: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(v) } else { Err(CliError::Config(format!("--{name} must be positive"))) };
    if let Some(v) = flags.pattern_s {
        c.pattern_s = positive("pattern-s", v)?;
    }
    if let Some(v) = flags.radius_s {
        c.radius_s = positive("radius-s", v)?;
    }
    if let Some(v) = flags.step_s {
        c.step_s = positive("step-s", v)?;
    }
    if let Some(v) = flags.min_jump {
        if v == 0 {
            return Err(CliError::Config("--min-jump must be at least 1".into()));
        }
        c.min_jump_frames = v;
    }
    Ok(c)
}

fn load_model(path: &Path, cfg: &ExperimentConfig) -> Result<SiameseModel> {
    let model = checkpoint::load(path)?;
    let bins = cfg.bins()?;
    if model.config.n_bins != bins {
        return Err(CliError::Config(format!(
            "checkpoint expects {} frequency bins but --frame-ms {} gives {bins}",
            model.config.n_bins, cfg.frame_len_ms
        )));
    }
    Ok(model)
}

fn history_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from("stage,epoch,train_loss,dev_loss,dev_f1\n");
    for e in history {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        s.push_str(&format!("{},{},{:.6},{},{}\n", e.stage, e.epoch, e.train_loss, opt(e.dev_loss), opt(e.dev_f1)));
    }
    s
}

fn metrics_csv(m: &MetricsReport) -> String {
    format!(
        "tp,fp,fn,tn,precision,recall,f1\n{},{},{},{},{:.6},{:.6},{:.6}\n",
        m.tp, m.fp, m.fn_, m.tn, m.precision, m.recall, m.f1
    )
}

/// What a finished command reports back.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub summary: String,
    /// Set when the command ran but its verdict is negative.
    pub failure: Option<String>,
}

fn ok(run_dir: PathBuf, summary: String) -> Result<Outcome> {
    Ok(Outcome { run_dir, summary, failure: None })
}

pub fn execute(cmd: &Command) -> Result<Outcome> {
    let common = cmd.common();
    let cfg = common.experiment()?;
    match cmd {
        Command::Simulate { config, devices, .. } => simulate(common, &cfg, config.as_deref(), *devices),
        Command::Inject { scene, drops, drop_config, .. } => inject(common, &cfg, scene, *drops, drop_config.as_deref()),
        Command::Xcorr { scene, xcorr, .. } => run_xcorr(common, &cfg, scene, xcorr),
        Command::Train { head, .. } => run_train(common, &cfg, head),
        Command::Evaluate { checkpoint, .. } => evaluate(common, &cfg, checkpoint),
        Command::Detect { checkpoint, scene, xcorr, .. } => run_detect(common, &cfg, checkpoint, scene, xcorr),
        Command::Gradcheck { head, frames, coords, .. } => gradcheck(common, &cfg, head, *frames, *coords),
        Command::Table1 { .. } => table1(common, &cfg),
    }
}

fn simulate(common: &Common, cfg: &ExperimentConfig, config: Option<&Path>, devices: usize) -> Result<Outcome> {
    let scene_cfg = match config {
        Some(path) => {
            let mut c: SceneConfig = read_json(path)?;
            if let Some(s) = common.seed {
                c.seed = s;
            }
            c
        }
        None => {
            if devices == 0 {
                return Err(CliError::Config("--devices must be at least 1".into()));
            }
            let sampler = dropsync_core::scene::SceneSampler { n_devices: devices, ..cfg.sampler.clone() };
            sampler.sample(cfg.seed)?
        }
    };
    scene_cfg.validate()?;
    let inputs = config.map(|p| vec![p.display().to_string()]).unwrap_or_default();
    let mut run = Run::create(&common.out, "simulate", json!({ "scene": to_value(&scene_cfg) }), seeds(scene_cfg.seed), inputs)?;
    let scene = render_scene(&scene_cfg)?;
    write_scene(&mut run, &scene)?;
    run.write_json(SCENE_CONFIG_FILE, &scene_cfg)?;
    let n = scene.devices.len();
    let dir = run.finish()?;
    ok(dir, format!("rendered {n} devices"))
}

fn inject(common: &Common, cfg: &ExperimentConfig, scene_dir: &Path, drops: usize, drop_config: Option<&Path>) -> Result<Outcome> {
    let dist: DropDistribution = match drop_config {
        Some(p) => read_json(p)?,
        None => cfg.drops,
    };
    let scene = load_scene(scene_dir)?;
    let mut inputs = vec![scene_dir.display().to_string()];
    inputs.extend(drop_config.map(|p| p.display().to_string()));
    let config = json!({ "scene": scene_dir.display().to_string(), "drops": drops, "distribution": to_value(&dist), "seed": cfg.seed });
    let mut run = Run::create(&common.out, "inject", config, seeds(cfg.seed), inputs)?;
    let mut r = rng::rng_at(cfg.seed, &[0x1_4ec7]);
    let placement = ScenePlacement::for_rate(scene.sample_rate_hz());
    let (out, events) = inject_scene_drops(&scene, drops, &dist, placement, &mut r)?;
    write_scene(&mut run, &out)?;
    if scene_dir.join(SCENE_CONFIG_FILE).exists() {
        run.write(SCENE_CONFIG_FILE, std::fs::read(scene_dir.join(SCENE_CONFIG_FILE))?)?;
    }
    run.write_json("events.json", &events)?;
    let dir = run.finish()?;
    ok(dir, format!("injected {} drops", events.len()))
}

fn run_xcorr(common: &Common, cfg: &ExperimentConfig, scene_dir: &Path, flags: &XcorrFlags) -> Result<Outcome> {
    let xc = xcorr_config(flags)?;
    let scene = load_scene(scene_dir)?;
    let config = json!({ "scene": scene_dir.display().to_string(), "xcorr": to_value(&xc), "frame_len_ms": cfg.frame_len_ms });
    let mut run = Run::create(&common.out, "xcorr", config, seeds(cfg.seed), vec![scene_dir.display().to_string()])?;
    let (specs, ids) = scene_spectrograms(&scene, cfg)?;
    let alignments = align_all(&specs, &ids, &xc)?;
    let mut csv = String::from("device_id,reference_id,anchor_sample,best_shift_frames,peak_ncc\n");
    for a in &alignments {
        for row in a.rows() {
            csv.push_str(&format!("{},{},{},{},{:.6}\n", a.device_id, row.reference_id, row.anchor_sample, row.best_shift_frames, row.peak_ncc));
        }
    }
    run.write("shifts.csv", csv)?;
    let candidates: Vec<_> = alignments.iter().flat_map(|a| a.candidates()).collect();
    run.write_json("candidates.json", &candidates)?;
    let dir = run.finish()?;
    ok(dir, format!("{} candidate intervals", candidates.len()))
}

fn run_train(common: &Common, cfg: &ExperimentConfig, head: &str) -> Result<Outcome> {
    let head = HeadKind::from_name(head)?;
    let config = json!({ "experiment": to_value(cfg), "head": head.name() });
    let mut run = Run::create(&common.out, "train", config, seeds(cfg.seed), vec![])?;
    let stage1 = build_stage1_dataset(cfg)?;
    let stage2 = build_stage2_dataset(cfg)?;
    let tc = train_config(cfg, head, stage1.train.bins);
    let (model, history) = train(
        &tc,
        Some(StageData { train: &stage1.train, dev: Some(&stage1.dev) }),
        Some(StageData { train: &stage2.train, dev: Some(&stage2.dev) }),
        None,
    )?;
    checkpoint::save(&model, run.path("model.json"))?;
    run.track("model.json");
    run.write("history.csv", history_csv(&history))?;
    let last = history.last().map(|e| e.train_loss).unwrap_or(f64::NAN);
    let dir = run.finish()?;
    ok(dir, format!("trained {} epochs, final train loss {last:.4}", history.len()))
}

fn evaluate(common: &Common, cfg: &ExperimentConfig, ckpt: &Path) -> Result<Outcome> {
    let model = load_model(ckpt, cfg)?;
    let config = json!({ "experiment": to_value(cfg), "checkpoint": ckpt.display().to_string() });
    let mut run = Run::create(&common.out, "evaluate", config, seeds(cfg.seed), vec![ckpt.display().to_string()])?;
    let data = build_stage2_dataset(cfg)?;
    let (decisions, metrics) = evaluate_windows(&model, &data.eval, cfg.combiner)?;
    run.write("metrics.csv", metrics_csv(&metrics))?;
    run.write("decisions.csv", decisions_csv(&decisions))?;
    let dir = run.finish()?;
    ok(dir, format!("P {:.3} R {:.3} F1 {:.3} on {} windows", metrics.precision, metrics.recall, metrics.f1, decisions.len()))
}

/// Per-device detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub device_id: u32,
    pub windows: Vec<WindowReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_start_sample: usize,
    pub window_end_sample: usize,
    pub per_reference_probs: Vec<f64>,
    pub combined_score: f64,
    pub label: u8,
}

impl From<&DeviceDecision> for WindowReport {
    fn from(d: &DeviceDecision) -> Self {
        Self {
            window_start_sample: d.window_start_sample,
            window_end_sample: d.window_end_sample,
            per_reference_probs: d.per_reference_probs.clone(),
            combined_score: d.combined_score,
            label: d.label,
        }
    }
}

fn run_detect(common: &Common, cfg: &ExperimentConfig, ckpt: &Path, scene_dir: &Path, flags: &XcorrFlags) -> Result<Outcome> {
    let xc = xcorr_config(flags)?;
    let model = load_model(ckpt, cfg)?;
    let scene = load_scene(scene_dir)?;
    let detect_cfg = DetectConfig { xcorr: xc, combiner: cfg.combiner, window_frames: cfg.window_frames()? };
    let config = json!({
        "scene": scene_dir.display().to_string(),
        "checkpoint": ckpt.display().to_string(),
        "detect": to_value(&detect_cfg),
        "frame_len_ms": cfg.frame_len_ms,
    });
    let inputs = vec![scene_dir.display().to_string(), ckpt.display().to_string()];
    let mut run = Run::create(&common.out, "detect", config, seeds(cfg.seed), inputs)?;
    let (specs, ids) = scene_spectrograms(&scene, cfg)?;
    let det = detect(&specs, &ids, &model, &detect_cfg)?;
    let reports: Vec<DeviceReport> = ids
        .iter()
        .map(|&id| DeviceReport { device_id: id, windows: det.decisions.iter().filter(|d| d.device_id == id).map(WindowReport::from).collect() })
        .collect();
    run.write_json("report.json", &reports)?;
    run.write_json("events.json", &det.events)?;
    run.write_json("candidates.json", &det.candidates)?;
    run.write("summary.csv", decisions_csv(&det.decisions))?;
    let flagged: Vec<u32> = reports.iter().filter(|r| r.windows.iter().any(|w| w.label == 1)).map(|r| r.device_id).collect();
    let dir = run.finish()?;
    ok(dir, format!("{} windows classified, drops flagged on devices {flagged:?}", det.decisions.len()))
}

/// Central-difference check of the full model at the resolved preset on one
/// random input pair, probing about `coords` parameter coordinates.
pub fn gradcheck_model(cfg: &ExperimentConfig, head: HeadKind, frames: usize, coords: usize) -> Result<GradCheckReport> {
    let bins = cfg.bins()?;
    let mc = ModelConfig::preset(cfg.preset, bins).with_head(head);
    let mut r = rng::rng_at(cfg.seed, &[0x9_7ad]);
    let model = SiameseModel::new(mc, &mut r)?;
    let random = |r: &mut rng::Rng| Tensor::matrix(frames, bins, (0..frames * bins).map(|_| r.gen_range(-1.5..1.5)).collect());
    let (h, x) = (random(&mut r)?, random(&mut r)?);
    let label = 1;
    let cache = model.forward(&h, &x)?;
    let mut grads = model.zeros_like();
    let (dh, dx) = model.backward(&cache, bce_with_logit_grad(cache.logit, label), &mut grads, true);
    let (dh, dx) = (dh.expect("input gradient requested"), dx.expect("input gradient requested"));
    let obj = |m: &SiameseModel, h: &Tensor, x: &Tensor| {
        let c = m.forward(h, x).expect("shapes fixed above");
        (bce_with_logit(c.logit, label), c.kink_signature())
    };
    let stride = (model.num_params() / coords.max(1)).max(1);
    let input_stride = (h.len() / 200).max(1);
    let mut report = check_params(&model, &grads, |m| obj(m, &h, &x), DEFAULT_STEP, stride);
    report.merge(check_input(&h, &dh, |t| obj(&model, t, &x), DEFAULT_STEP, input_stride));
    report.merge(check_input(&x, &dx, |t| obj(&model, &h, t), DEFAULT_STEP, input_stride));
    Ok(report)
}

fn gradcheck(common: &Common, cfg: &ExperimentConfig, head: &str, frames: usize, coords: usize) -> Result<Outcome> {
    let head = HeadKind::from_name(head)?;
    if frames < 2 {
        return Err(CliError::Config("--frames must be at least 2".into()));
    }
    let config = json!({ "preset": cfg.preset, "frame_len_ms": cfg.frame_len_ms, "head": head.name(), "frames": frames, "coords": coords, "seed": cfg.seed });
    let mut run = Run::create(&common.out, "gradcheck", config, seeds(cfg.seed), vec![])?;
    let report = gradcheck_model(cfg, head, frames, coords)?;
    run.write_json("gradcheck.json", &report)?;
    let dir = run.finish()?;
    let summary = format!(
        "max relative error {:.3e} over {} coordinates ({} excluded at kinks), worst {}",
        report.max_rel_error,
        report.checked,
        report.excluded,
        report.worst.as_deref().unwrap_or("-")
    );
    let failure = (!(report.max_rel_error < GRADCHECK_TOLERANCE)).then(|| format!("max relative error {:.3e} >= {GRADCHECK_TOLERANCE:e}", report.max_rel_error));
    Ok(Outcome { run_dir: dir, summary, failure })
}

fn table1(common: &Common, cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut run = Run::create(&common.out, "table1", json!({ "experiment": to_value(cfg) }), seeds(cfg.seed), vec![])?;
    let started = std::time::Instant::now();
    let stage1 = build_stage1_dataset(cfg)?;
    let stage2 = build_stage2_dataset(cfg)?;
    let (report, models) = run_table1(cfg, &stage1, &stage2)?;
    run.write("table1.md", report.to_markdown())?;
    run.write("table1.csv", report.to_csv())?;
    run.write_json("table1.json", &report)?;
    run.write_json(
        "timing.json",
        &json!({ "two_stage_training_s": models.two_stage_time.as_secs_f64(), "total_s": started.elapsed().as_secs_f64() }),
    )?;
    for (name, m) in [
        ("model_pre_nn.json", &models.pretrained),
        ("model_no_pretraining.json", &models.no_pretraining),
        ("model_no_attention.json", &models.no_attention),
        ("model_full.json", &models.full),
    ] {
        checkpoint::save(m, run.path(name))?;
        run.track(name);
    }
    let dir = run.finish()?;
    ok(dir, report.to_markdown())
}
