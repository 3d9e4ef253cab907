//! Four-row ablation experiment: pre-trained only, no pre-training, no
//! attention, and the full two-stage model, all scored on the eval split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dropsync_neural::train::{train, StageData, TrainConfig};
use dropsync_neural::{EpochMetrics, HeadKind, ModelConfig, SiameseModel};

use crate::combine::CombinerKind;
use crate::corpus::{EvalWindow, ExperimentConfig, Stage1Data, Stage2Data};
use crate::detector::{decide, DeviceDecision};
use crate::error::{EvalError, Result};
use crate::metrics::{window_metrics, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub name: String,
    pub pretraining: bool,
    pub mini_scene_training: bool,
    pub attention: bool,
    pub metrics: MetricsReport,
    pub history: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub combiner: CombinerKind,
    pub eval_windows: usize,
    pub eval_positives: usize,
    pub rows: Vec<Table1Row>,
}

impl Table1Report {
    pub fn row(&self, name: &str) -> Option<&Table1Row> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_markdown(&self) -> String {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let mut s = String::from("| System | Pre-training | Mini-scenes | Attention | P [%] | R [%] | F1 [%] |\n");
        s.push_str("|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            s.push_str(&format!(
                "| {} | {} | {} | {} | {:.1} | {:.1} | {:.1} |\n",
                r.name,
                yn(r.pretraining),
                yn(r.mini_scene_training),
                yn(r.attention),
                100.0 * r.metrics.precision,
                100.0 * r.metrics.recall,
                100.0 * r.metrics.f1
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("system,pretraining,mini_scenes,attention,tp,fp,fn,tn,precision,recall,f1\n");
        for r in &self.rows {
            let m = &r.metrics;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6}\n",
                r.name, r.pretraining, r.mini_scene_training, r.attention, m.tp, m.fp, m.fn_, m.tn, m.precision, m.recall, m.f1
            ));
        }
        s
    }
}

/// Combined decision for every evaluation window. Per-reference
/// probabilities are computed in parallel and assembled in input order.
pub fn classify_windows(model: &SiameseModel, eval: &[EvalWindow], combiner: CombinerKind) -> Result<Vec<DeviceDecision>> {
    let comb = combiner.build();
    eval.par_iter()
        .map(|w| {
            let j = w.device;
            let refs: Vec<usize> = (0..w.windows.device_ids.len()).filter(|&k| k != j).collect();
            let probs = refs
                .iter()
                .map(|&k| model.predict_raw(&w.windows.features[j], &w.windows.features[k]).map_err(EvalError::from))
                .collect::<Result<Vec<_>>>()?;
            let ids = refs.iter().map(|&k| w.windows.device_ids[k]).collect();
            Ok(decide(w.windows.device_ids[j], &w.windows, ids, probs, comb.as_ref()))
        })
        .collect()
}

pub fn evaluate_windows(model: &SiameseModel, eval: &[EvalWindow], combiner: CombinerKind) -> Result<(Vec<DeviceDecision>, MetricsReport)> {
    if eval.is_empty() {
        return Err(EvalError::Empty("evaluation windows"));
    }
    let decisions = classify_windows(model, eval, combiner)?;
    let predicted: Vec<u8> = decisions.iter().map(|d| d.label).collect();
    let truth: Vec<u8> = eval.iter().map(|w| w.label).collect();
    Ok((decisions, window_metrics(&predicted, &truth)))
}

pub fn train_config(cfg: &ExperimentConfig, head: HeadKind, bins: usize) -> TrainConfig {
    let mut t = TrainConfig::new(ModelConfig::preset(cfg.preset, bins).with_head(head), cfg.seed);
    t.stage1 = cfg.stage1;
    t.stage2 = cfg.stage2;
    t.threads = cfg.threads;
    t
}

/// Trained models of one experiment, kept for reuse by callers.
pub struct Table1Models {
    pub pretrained: SiameseModel,
    pub no_pretraining: SiameseModel,
    pub no_attention: SiameseModel,
    pub full: SiameseModel,
    /// Wall-clock time of pre-training plus fine-tuning the full model.
    pub two_stage_time: std::time::Duration,
}

/// Train the four configurations and score each on the eval split.
pub fn run_table1(cfg: &ExperimentConfig, stage1: &Stage1Data, stage2: &Stage2Data) -> Result<(Table1Report, Table1Models)> {
    let bins = stage1.train.bins;
    let s1 = StageData { train: &stage1.train, dev: Some(&stage1.dev) };
    let s2 = StageData { train: &stage2.train, dev: Some(&stage2.dev) };
    let att = train_config(cfg, HeadKind::Attention, bins);
    let cat = train_config(cfg, HeadKind::Concat, bins);

    let started = std::time::Instant::now();
    log::info!("pre-training attention model");
    let (pretrained, h_pre) = train(&att, Some(s1), None, None)?;
    log::info!("fine-tuning attention model");
    let (full, h_full) = train(&att, None, Some(s2), Some(pretrained.clone()))?;
    let two_stage_time = started.elapsed();
    log::info!("training attention model without pre-training");
    let (no_pretraining, h_nopre) = train(&att, None, Some(s2), None)?;
    log::info!("training concatenation model");
    let (no_attention, h_cat) = train(&cat, Some(s1), Some(s2), None)?;

    let mut rows = Vec::new();
    let specs = [
        ("Pre-NN", true, false, true, &pretrained, h_pre.clone()),
        ("NN (no pre-training)", false, true, true, &no_pretraining, h_nopre),
        ("NN (no attention)", true, true, false, &no_attention, h_cat),
        ("NN", true, true, true, &full, h_pre.into_iter().chain(h_full).collect()),
    ];
    for (name, pretraining, mini, attention, model, history) in specs {
        let (_, metrics) = evaluate_windows(model, &stage2.eval, cfg.combiner)?;
        log::info!("{name}: P {:.3} R {:.3} F1 {:.3}", metrics.precision, metrics.recall, metrics.f1);
        rows.push(Table1Row { name: name.into(), pretraining, mini_scene_training: mini, attention, metrics, history });
    }
    let report = Table1Report {
        combiner: cfg.combiner,
        eval_windows: stage2.eval.len(),
        eval_positives: stage2.eval.iter().filter(|w| w.label == 1).count(),
        rows,
    };
    Ok((report, Table1Models { pretrained, no_pretraining, no_attention, full, two_stage_time }))
}
