//! Evaluation harness: attack a natural set, run the defense over both sets
//! and aggregate detection, false-positive and recovery rates.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{apply_patch, bim_audio, fgsm_audio, random_patch, PatchContent, PatchLocation, PatchSpec};
use crate::defense::{defend, detect_audio, detect_image, DefenseConfig, Modality, Verdict};
use crate::error::{Error, Result};
use crate::nn::ModelGraph;
use crate::profiles::{ProfileStore, Sample};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Attack {
    /// Attacked set is the natural set itself.
    None,
    /// Square patch at a random location per input. `None` draws fresh
    /// uniform noise for every input.
    Patch {
        size: usize,
        patch: Option<Tensor>,
    },
    Fgsm {
        epsilon: f64,
        target: Option<usize>,
    },
    Bim {
        epsilon: f64,
        step: f64,
        iters: usize,
        target: Option<usize>,
    },
}

impl Attack {
    pub fn describe(&self) -> String {
        let target = |t: &Option<usize>| t.map_or("untargeted".to_string(), |t| format!("target={t}"));
        match self {
            Attack::None => "none".into(),
            Attack::Patch { size, patch: None } => format!("random-patch size={size}"),
            Attack::Patch { size, patch: Some(_) } => format!("patch size={size}"),
            Attack::Fgsm { epsilon, target: t } => format!("fgsm eps={epsilon} {}", target(t)),
            Attack::Bim {
                epsilon,
                step,
                iters,
                target: t,
            } => format!("bim eps={epsilon} step={step} iters={iters} {}", target(t)),
        }
    }

    /// Attacks one input. `rng` should be private to the input.
    pub fn apply(&self, model: &ModelGraph, sample: &Sample, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        match self {
            Attack::None => Ok(sample.input.clone()),
            Attack::Patch { size, patch } => {
                let &[c, h, w] = sample.input.shape() else {
                    return Err(Error::InvalidConfig("patch attacks need [C, H, W] inputs".into()));
                };
                let spec = PatchSpec {
                    size: *size,
                    location: PatchLocation::Random,
                    content: PatchContent::HighFrequencyRandom,
                };
                let (top, left) = spec.place(h, w, rng)?;
                let noise;
                let patch = match patch {
                    Some(p) => p,
                    None => {
                        noise = random_patch(c, *size, rng);
                        &noise
                    }
                };
                apply_patch(&sample.input, patch, top, left)
            }
            Attack::Fgsm { epsilon, target } => fgsm_audio(model, &sample.input, sample.label, *epsilon, *target, None),
            Attack::Bim {
                epsilon,
                step,
                iters,
                target,
            } => bim_audio(
                model,
                &sample.input,
                sample.label,
                *epsilon,
                *step,
                *iters,
                *target,
                None,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub attack: Attack,
    pub defense: DefenseConfig,
    pub seed: u64,
    /// Measure per-input defense time. Timing makes reports differ between
    /// runs; leave it off when comparing reports byte for byte.
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Natural,
    Attacked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub set: SetKind,
    pub index: usize,
    pub label: usize,
    pub predicted: usize,
    pub inconsistency: Option<f64>,
    pub verdict: Verdict,
    pub final_label: usize,
    pub elapsed_ms: Option<f64>,
}

impl InputRecord {
    pub fn flagged(&self) -> bool {
        self.verdict == Verdict::Adversarial
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub attack: String,
    pub modality: Modality,
    pub threshold: f64,
    pub seed: u64,
    pub n_natural: usize,
    pub n_attacked: usize,
    /// Naturals classified correctly, before any defense.
    pub clean_accuracy: f64,
    /// Attacked inputs still classified correctly, before any defense.
    pub attacked_accuracy: f64,
    pub detection_rate: f64,
    pub false_positive_rate: f64,
    /// Attacked inputs whose final label is correct.
    pub recovery_accuracy: f64,
    /// Flagged attacked inputs whose final label is correct.
    pub detected_recovery_rate: Option<f64>,
    /// Flagged, misclassified attacked inputs whose final label is correct.
    pub misclassified_restored_rate: Option<f64>,
    /// Naturals whose final label is correct.
    pub natural_accuracy_after: f64,
    pub auc: f64,
    pub median_d_natural: Option<f64>,
    pub median_d_attacked: Option<f64>,
    pub mean_ms: Option<f64>,
    pub records: Vec<InputRecord>,
}

/// Random stream for input `stream` of a run seeded with `seed`.
pub fn per_input_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_one(
    model: &ModelGraph,
    store: &ProfileStore,
    input: &Tensor,
    sample: &Sample,
    set: SetKind,
    index: usize,
    cfg: &EvalConfig,
) -> Result<InputRecord> {
    let started = Instant::now();
    let (report, final_label) = match defend(model, input, store, &cfg.defense) {
        Ok(outcome) => (outcome.report, outcome.label),
        // Whole-image sources cannot be interpolated; keep the prediction.
        Err(Error::RecoveryImpossible(_)) => {
            let report = match cfg.defense.modality {
                Modality::Audio => detect_audio(model, input, store, cfg.defense.audio_threshold)?,
                _ => detect_image(model, input, store, cfg.defense.image_threshold, cfg.defense.alpha)?,
            };
            let label = report.predicted;
            (report, label)
        }
        Err(e) => return Err(e),
    };
    let elapsed = started.elapsed().as_secs_f64() * 1e3;
    Ok(InputRecord {
        set,
        index,
        label: sample.label,
        predicted: report.predicted,
        inconsistency: report.inconsistency,
        verdict: report.verdict,
        final_label,
        elapsed_ms: cfg.timing.then_some(elapsed),
    })
}

/// Attacks every natural input, defends both sets and aggregates.
///
/// Per-input work runs in parallel; every input draws from its own random
/// stream, so the report does not depend on scheduling.
pub fn evaluate(model: &ModelGraph, store: &ProfileStore, natural: &[Sample], cfg: &EvalConfig) -> Result<EvalReport> {
    if natural.is_empty() {
        return Err(Error::Dataset("natural set is empty".into()));
    }
    let attacked = natural
        .par_iter()
        .enumerate()
        .map(|(i, s)| cfg.attack.apply(model, s, &mut per_input_rng(cfg.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut records = natural
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_one(model, store, &s.input, s, SetKind::Natural, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    records.extend(
        natural
            .par_iter()
            .zip(&attacked)
            .enumerate()
            .map(|(i, (s, x))| run_one(model, store, x, s, SetKind::Attacked, i, cfg))
            .collect::<Result<Vec<_>>>()?,
    );
    Ok(summarize(records, cfg))
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn summarize(records: Vec<InputRecord>, cfg: &EvalConfig) -> EvalReport {
    let nat: Vec<&InputRecord> = records.iter().filter(|r| r.set == SetKind::Natural).collect();
    let adv: Vec<&InputRecord> = records.iter().filter(|r| r.set == SetKind::Attacked).collect();
    let count = |set: &[&InputRecord], f: &dyn Fn(&InputRecord) -> bool| set.iter().filter(|r| f(r)).count();
    let detected: Vec<&InputRecord> = adv.iter().copied().filter(|r| r.flagged()).collect();
    let detected_wrong: Vec<&InputRecord> = detected.iter().copied().filter(|r| r.predicted != r.label).collect();
    let scores = |set: &[&InputRecord]| set.iter().map(|r| r.inconsistency).collect::<Vec<_>>();
    let (nat_scores, adv_scores) = (scores(&nat), scores(&adv));
    let flat = |s: &[Option<f64>]| s.iter().flatten().copied().collect::<Vec<_>>();
    let mean_ms = cfg.timing.then(|| {
        let t: Vec<f64> = records.iter().filter_map(|r| r.elapsed_ms).collect();
        t.iter().sum::<f64>() / t.len().max(1) as f64
    });
    EvalReport {
        attack: cfg.attack.describe(),
        modality: cfg.defense.modality,
        threshold: cfg.defense.threshold(),
        seed: cfg.seed,
        n_natural: nat.len(),
        n_attacked: adv.len(),
        clean_accuracy: rate(count(&nat, &|r| r.predicted == r.label), nat.len()),
        attacked_accuracy: rate(count(&adv, &|r| r.predicted == r.label), adv.len()),
        detection_rate: rate(detected.len(), adv.len()),
        false_positive_rate: rate(count(&nat, &|r| r.flagged()), nat.len()),
        recovery_accuracy: rate(count(&adv, &|r| r.final_label == r.label), adv.len()),
        detected_recovery_rate: (!detected.is_empty())
            .then(|| rate(count(&detected, &|r| r.final_label == r.label), detected.len())),
        misclassified_restored_rate: (!detected_wrong.is_empty()).then(|| {
            rate(
                count(&detected_wrong, &|r| r.final_label == r.label),
                detected_wrong.len(),
            )
        }),
        natural_accuracy_after: rate(count(&nat, &|r| r.final_label == r.label), nat.len()),
        auc: auc(&nat_scores, &adv_scores),
        median_d_natural: median(&flat(&nat_scores)),
        median_d_attacked: median(&flat(&adv_scores)),
        mean_ms,
        records,
    }
}

impl EvalReport {
    pub fn natural_scores(&self) -> Vec<Option<f64>> {
        self.scores(SetKind::Natural)
    }

    pub fn attacked_scores(&self) -> Vec<Option<f64>> {
        self.scores(SetKind::Attacked)
    }

    fn scores(&self, set: SetKind) -> Vec<Option<f64>> {
        self.records
            .iter()
            .filter(|r| r.set == set)
            .map(|r| r.inconsistency)
            .collect()
    }

    /// Aligned text table; the timing column appears only when measured.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut rows = vec![
            ("attack", self.attack.clone()),
            ("modality", format!("{:?}", self.modality).to_lowercase()),
            ("threshold", format!("{:.4}", self.threshold)),
            ("seed", self.seed.to_string()),
            ("natural inputs", self.n_natural.to_string()),
            ("attacked inputs", self.n_attacked.to_string()),
            ("clean accuracy", format!("{:.4}", self.clean_accuracy)),
            ("accuracy under attack", format!("{:.4}", self.attacked_accuracy)),
            ("detection success rate", format!("{:.4}", self.detection_rate)),
            ("false positive rate", format!("{:.4}", self.false_positive_rate)),
            ("recovery accuracy", format!("{:.4}", self.recovery_accuracy)),
            ("recovery on detected", opt(self.detected_recovery_rate)),
            ("restored misclassified", opt(self.misclassified_restored_rate)),
            ("natural accuracy after", format!("{:.4}", self.natural_accuracy_after)),
            ("roc auc", format!("{:.4}", self.auc)),
            ("median D natural", opt(self.median_d_natural)),
            ("median D attacked", opt(self.median_d_attacked)),
        ];
        if let Some(ms) = self.mean_ms {
            rows.push(("mean defense time (ms)", format!("{ms:.3}")));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }

    /// One summary record followed by one record per input.
    pub fn to_json_lines(&self) -> String {
        let mut summary = serde_json::to_value(self).expect("report serializes");
        summary.as_object_mut().expect("object").remove("records");
        let mut out = serde_json::json!({ "record": "summary", "report": summary }).to_string();
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::json!({ "record": "input", "input": r }).to_string());
            out.push('\n');
        }
        out
    }
}

/// Probability that an attacked score exceeds a natural one, ties counting
/// half. Missing scores rank below every real score.
pub fn auc(natural: &[Option<f64>], attacked: &[Option<f64>]) -> f64 {
    if natural.is_empty() || attacked.is_empty() {
        return 0.5;
    }
    let key = |s: &Option<f64>| s.unwrap_or(f64::NEG_INFINITY);
    let mut wins = 0.0;
    for a in attacked {
        for n in natural {
            match key(a).total_cmp(&key(n)) {
                std::cmp::Ordering::Greater => wins += 1.0,
                std::cmp::Ordering::Equal => wins += 0.5,
                std::cmp::Ordering::Less => {}
            }
        }
    }
    wins / (natural.len() * attacked.len()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub detection_rate: f64,
    pub false_positive_rate: f64,
}

fn flagged_rate(scores: &[Option<f64>], t: f64) -> f64 {
    rate(scores.iter().flatten().filter(|&&d| d > t).count(), scores.len())
}

/// Detection and false-positive rates at each threshold, using the same
/// `D > threshold` rule as the defense.
pub fn threshold_sweep(natural: &[Option<f64>], attacked: &[Option<f64>], thresholds: &[f64]) -> Vec<RocPoint> {
    thresholds
        .iter()
        .map(|&t| RocPoint {
            threshold: t,
            detection_rate: flagged_rate(attacked, t),
            false_positive_rate: flagged_rate(natural, t),
        })
        .collect()
}

/// Full ROC: one point per distinct observed score plus one below them all,
/// ordered by decreasing threshold.
pub fn roc_curve(natural: &[Option<f64>], attacked: &[Option<f64>]) -> Vec<RocPoint> {
    let mut ts: Vec<f64> = natural.iter().chain(attacked).flatten().copied().collect();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    ts.push(ts.last().map_or(0.0, |&m| m - 1.0));
    threshold_sweep(natural, attacked, &ts)
}

/// Lowest observed natural score whose false-positive rate stays within
/// `max_fpr`.
pub fn calibrate_threshold(natural: &[Option<f64>], max_fpr: f64) -> Result<f64> {
    let mut scores: Vec<f64> = natural.iter().flatten().copied().collect();
    if scores.is_empty() {
        return Err(Error::Dataset("no natural scores to calibrate on".into()));
    }
    scores.sort_by(|a, b| b.total_cmp(a));
    let allowed = (max_fpr * natural.len() as f64).floor() as usize;
    Ok(scores.get(allowed).copied().unwrap_or(scores[scores.len() - 1] - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_extremes() {
        let nat = [Some(0.1), Some(0.2)];
        let adv = [Some(0.5), Some(0.9)];
        assert_eq!(auc(&nat, &adv), 1.0);
        assert_eq!(auc(&adv, &nat), 0.0);
        assert_eq!(auc(&nat, &nat), 0.5);
        assert_eq!(auc(&[None], &[Some(0.0)]), 1.0);
    }

    #[test]
    fn sweep_is_monotone() {
        let nat = [Some(0.1), Some(0.3), None, Some(0.5)];
        let adv = [Some(0.4), Some(0.6), Some(0.6), Some(0.2)];
        let roc = roc_curve(&nat, &adv);
        for w in roc.windows(2) {
            assert!(w[0].threshold > w[1].threshold);
            assert!(w[0].detection_rate <= w[1].detection_rate);
            assert!(w[0].false_positive_rate <= w[1].false_positive_rate);
        }
        let last = roc.last().unwrap();
        assert_eq!(last.detection_rate, 1.0);
        assert_eq!(last.false_positive_rate, 0.75);
    }

    #[test]
    fn calibration_bounds_fpr() {
        let nat: Vec<Option<f64>> = (0..20).map(|i| Some(i as f64 / 20.0)).collect();
        let t = calibrate_threshold(&nat, 0.1).unwrap();
        assert!(flagged_rate(&nat, t) <= 0.1);
        assert!(flagged_rate(&nat, t - 0.01) > 0.1);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
