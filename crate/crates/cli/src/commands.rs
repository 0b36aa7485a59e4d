use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;
use vigil::complexity::{
    pipeline_cost, vgg16, CostModel, Scenario, BASELINE_AUDIO, BASELINE_IMAGE_LOCAL_GRADIENT, REFERENCE_AUDIO_COMMAND,
    REFERENCE_IMAGE_VGG16,
};
use vigil::defense::{
    defend, detect_audio, detect_image, inspect_audio, inspect_image, recover_audio, recover_image, DetectionReport,
    Modality, Recovered, RecoveryOutcome,
};
use vigil::evalkit::{
    accuracy, audio_toy_model, calibrate_threshold, channel_stats, command_dataset, command_labels, evaluate,
    fold_normalization, image_toy_model, load_dataset, normalize, per_input_rng, read_tensor, save_dataset,
    texture_labels, textures_dataset, train, write_tensor, Attack, EvalConfig, TrainConfig,
};
use vigil::nn::Architecture;
use vigil::pattern::features_to_input;
use vigil::profiles::{build_audio_profile, build_image_profile, load_profiles, save_profiles, ProfileStore, Sample};
use vigil::signal::MfccExtractor;
use vigil::{load_model, save_model, ModelGraph, Tensor};

use crate::config::RunConfig;
use crate::{Arch, AttackKind, AttackSpec, Command};

pub fn run(cfg: &RunConfig, command: Command) -> Result<()> {
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .context("starting worker pool")?;
    }
    match command {
        Command::Synth { per_class } => synth(cfg, per_class),
        Command::Train {
            data,
            epochs,
            batch_size,
            learning_rate,
        } => {
            let tc = TrainConfig {
                epochs,
                batch_size,
                learning_rate,
                seed: cfg.seed,
            };
            cmd_train(cfg, &data, &tc)
        }
        Command::Profile { data, present_only } => cmd_profile(cfg, &data, present_only),
        Command::Detect { input } => cmd_detect(cfg, &input),
        Command::Recover { input } => cmd_recover(cfg, &input),
        Command::Defend { input } => cmd_defend(cfg, &input),
        Command::Attack { data, spec } => cmd_attack(cfg, &data, &spec),
        Command::Eval { data, spec, calibrate } => cmd_eval(cfg, &data, &spec, calibrate),
        Command::Flops {
            arch,
            repaired_pixels,
            recover,
            flops_per_mac,
            json,
        } => cmd_flops(cfg, arch, repaired_pixels, recover, flops_per_mac, json),
    }
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn out_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.out.as_deref().context("no output path given (out = ... or --out)")
}

fn read_model(cfg: &RunConfig) -> Result<ModelGraph> {
    let path = cfg.model_path()?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_model(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn read_store(cfg: &RunConfig, model: &ModelGraph) -> Result<ProfileStore> {
    let path = cfg.profiles_path()?;
    load_profiles(path, model).with_context(|| format!("loading {}", path.display()))
}

/// Audio inputs may be raw waveforms (rank 1); they are turned into features.
fn read_input(cfg: &RunConfig, path: &Path) -> Result<Tensor> {
    let t = read_tensor(path).with_context(|| format!("reading {}", path.display()))?;
    if cfg.modality == Modality::Audio && t.rank() == 1 {
        let mfcc = MfccExtractor::new(cfg.mfcc)?;
        return Ok(features_to_input(&mfcc.extract(t.data())?)?);
    }
    Ok(t)
}

fn scrub(cfg: &RunConfig, mut report: DetectionReport) -> DetectionReport {
    if !cfg.timing {
        report.elapsed_ms = 0.0;
    }
    report
}

fn synth(cfg: &RunConfig, per_class: usize) -> Result<()> {
    let data = match cfg.modality {
        Modality::Audio => command_dataset(per_class, cfg.seed, &MfccExtractor::new(cfg.mfcc)?)?,
        Modality::Image | Modality::Combined => textures_dataset(per_class, cfg.seed),
    };
    let out = out_path(cfg)?;
    save_dataset(out, &data)?;
    emit(json!({ "samples": data.len(), "out": out.display().to_string() }));
    Ok(())
}

fn cmd_train(cfg: &RunConfig, data: &Path, tc: &TrainConfig) -> Result<()> {
    let mut data = load_dataset(data)?;
    let (mut model, stats) = match cfg.modality {
        Modality::Audio => {
            let &[coefficients, frames, 1] = data[0].input.shape() else {
                bail!(
                    "audio samples must be [coefficients, frames, 1], got {:?}",
                    data[0].input.shape()
                );
            };
            let stats = channel_stats(&data)?;
            normalize(&mut data, &stats.0, &stats.1);
            (
                audio_toy_model(coefficients, frames, command_labels(), cfg.seed)?,
                Some(stats),
            )
        }
        Modality::Image | Modality::Combined => (image_toy_model(texture_labels(), cfg.seed)?, None),
    };
    let report = train(&mut model, &data, tc)?;
    if let Some((mean, std)) = stats {
        fold_normalization(&mut model, &mean, &std)?;
    }
    let out = out_path(cfg)?;
    fs::write(out, save_model(&model)).with_context(|| format!("writing {}", out.display()))?;
    emit(json!({
        "epoch_loss": report.epoch_loss,
        "train_accuracy": report.train_accuracy,
        "out": out.display().to_string(),
    }));
    Ok(())
}

pub fn cmd_profile(cfg: &RunConfig, data: &Path, present_only: bool) -> Result<()> {
    let model = read_model(cfg)?;
    let data = load_dataset(data)?;
    let classes: Vec<usize> = if present_only {
        let mut seen: Vec<usize> = data.iter().map(|s| s.label).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    } else {
        (0..model.num_classes()).collect()
    };
    let pc = cfg.profile();
    let mut store = ProfileStore::new(&model, pc);
    for &class in &classes {
        if cfg.modality != Modality::Audio {
            store.insert_image(build_image_profile(&model, &data, class, &pc)?);
        }
        if cfg.modality != Modality::Image {
            store.insert_audio(build_audio_profile(&model, &data, class, &pc)?);
        }
    }
    let out = out_path(cfg)?;
    save_profiles(&store, out)?;
    emit(json!({ "profiles": store.len(), "classes": classes, "out": out.display().to_string() }));
    Ok(())
}

pub fn cmd_detect(cfg: &RunConfig, input: &Path) -> Result<()> {
    let model = read_model(cfg)?;
    let store = read_store(cfg, &model)?;
    let x = read_input(cfg, input)?;
    let report = match cfg.modality {
        Modality::Image => detect_image(&model, &x, &store, cfg.image_threshold, cfg.alpha)?,
        Modality::Audio => detect_audio(&model, &x, &store, cfg.audio_threshold)?,
        // The combined check is only exposed through the full defense.
        Modality::Combined => defend(&model, &x, &store, &cfg.defense())?.report,
    };
    emit(json!({ "record": "detection", "report": scrub(cfg, report) }));
    Ok(())
}

fn emit_recovery(cfg: &RunConfig, recovery: &RecoveryOutcome) -> Result<()> {
    if let (Recovered::Image(img), Some(out)) = (&recovery.recovered, &cfg.out) {
        write_tensor(out, img).with_context(|| format!("writing {}", out.display()))?;
    }
    emit(json!({ "record": "recovery", "recovery": recovery }));
    Ok(())
}

pub fn cmd_recover(cfg: &RunConfig, input: &Path) -> Result<()> {
    let model = read_model(cfg)?;
    let store = read_store(cfg, &model)?;
    let x = read_input(cfg, input)?;
    let recovery = match cfg.modality {
        Modality::Image | Modality::Combined => {
            let (report, _) = inspect_image(&model, &x, &store, cfg.image_threshold, cfg.alpha)?;
            let region = report.region.context("heatmap has no active region to repair")?;
            let mut r = recover_image(&model, &x, &region)?;
            r.old_confidence = Some(report.confidence);
            r
        }
        Modality::Audio => {
            let (report, forward) = inspect_audio(&model, &x, &store, cfg.audio_threshold)?;
            recover_audio(&model, &forward, &store, report.predicted, cfg.k)?
        }
    };
    emit_recovery(cfg, &recovery)
}

pub fn cmd_defend(cfg: &RunConfig, input: &Path) -> Result<()> {
    let model = read_model(cfg)?;
    let store = read_store(cfg, &model)?;
    let x = read_input(cfg, input)?;
    let out = defend(&model, &x, &store, &cfg.defense())?;
    emit(json!({
        "record": "detection",
        "label": out.label,
        "class": model.labels()[out.label],
        "report": scrub(cfg, out.report),
    }));
    if let Some(r) = &out.recovery {
        emit_recovery(cfg, r)?;
    }
    Ok(())
}

fn build_attack(spec: &AttackSpec) -> Result<Attack> {
    Ok(match spec.attack {
        AttackKind::None => Attack::None,
        AttackKind::Patch => match &spec.patch {
            Some(path) => {
                let p = read_tensor(path).with_context(|| format!("reading {}", path.display()))?;
                let &[_, size, w] = p.shape() else {
                    bail!("patch must be [C, S, S], got {:?}", p.shape());
                };
                if size != w {
                    bail!("patch must be square, got {size}x{w}");
                }
                Attack::Patch { size, patch: Some(p) }
            }
            None => Attack::Patch {
                size: spec.size,
                patch: None,
            },
        },
        AttackKind::Fgsm => Attack::Fgsm {
            epsilon: spec.epsilon,
            target: spec.target,
        },
        AttackKind::Bim => Attack::Bim {
            epsilon: spec.epsilon,
            step: spec.step,
            iters: spec.iters,
            target: spec.target,
        },
    })
}

fn cmd_attack(cfg: &RunConfig, data: &Path, spec: &AttackSpec) -> Result<()> {
    let model = read_model(cfg)?;
    let natural = load_dataset(data)?;
    let attack = build_attack(spec)?;
    let attacked = natural
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(Sample {
                input: attack.apply(&model, s, &mut per_input_rng(cfg.seed, i as u64))?,
                label: s.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = out_path(cfg)?;
    save_dataset(out, &attacked)?;
    emit(json!({
        "attack": attack.describe(),
        "samples": attacked.len(),
        "clean_accuracy": accuracy(&model, &natural)?,
        "attacked_accuracy": accuracy(&model, &attacked)?,
        "out": out.display().to_string(),
    }));
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, data: &Path, spec: &AttackSpec, calibrate: Option<f64>) -> Result<()> {
    let model = read_model(cfg)?;
    let store = read_store(cfg, &model)?;
    let natural = load_dataset(data)?;
    let mut defense = cfg.defense();
    if let Some(max_fpr) = calibrate {
        let probe = EvalConfig {
            attack: Attack::None,
            defense,
            seed: cfg.seed,
            timing: false,
        };
        let scores = evaluate(&model, &store, &natural, &probe)?.natural_scores();
        defense = defense.with_threshold(calibrate_threshold(&scores, max_fpr)?);
    }
    let ec = EvalConfig {
        attack: build_attack(spec)?,
        defense,
        seed: cfg.seed,
        timing: cfg.timing,
    };
    let report = evaluate(&model, &store, &natural, &ec)?;
    match &cfg.out {
        Some(out) => {
            fs::write(out, report.to_json_lines()).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", report.to_table());
        }
        None => {
            print!("{}", report.to_json_lines());
            eprint!("{}", report.to_table());
        }
    }
    Ok(())
}

fn cmd_flops(
    cfg: &RunConfig,
    arch: Arch,
    repaired_pixels: usize,
    recover: bool,
    flops_per_mac: u64,
    as_json: bool,
) -> Result<()> {
    let (architecture, name): (Architecture, String) = match &cfg.model {
        Some(_) => (read_model(cfg)?.architecture(), cfg.model_path()?.display().to_string()),
        None => match arch {
            Arch::Vgg16 => (vgg16(), "vgg16".into()),
            Arch::ImageToy => (image_toy_model(texture_labels(), 0)?.architecture(), "image-toy".into()),
            Arch::AudioToy => (
                audio_toy_model(13, 48, command_labels(), 0)?.architecture(),
                "audio-toy".into(),
            ),
        },
    };
    let scenario = match cfg.modality {
        Modality::Audio => Scenario::Audio { recover },
        Modality::Image | Modality::Combined => Scenario::Image {
            repaired_pixels,
            crop_size: cfg.crop_size,
            recover,
        },
    };
    let cm = CostModel {
        flops_per_mac,
        ..CostModel::default()
    };
    let b = pipeline_cost(&architecture, scenario, &cm)?;
    let (reference, baselines) = match scenario {
        Scenario::Audio { .. } => (REFERENCE_AUDIO_COMMAND, BASELINE_AUDIO.to_vec()),
        Scenario::Image { .. } => (REFERENCE_IMAGE_VGG16, vec![BASELINE_IMAGE_LOCAL_GRADIENT]),
    };
    if as_json {
        emit(json!({
            "model": name,
            "scenario": scenario,
            "breakdown": b,
            "inference_share": b.inference_share(),
            "reference": reference,
            "baselines": baselines,
        }));
        return Ok(());
    }
    println!("model {name}, {} inference pass(es)", b.inference_passes);
    for (part, n) in b.components() {
        println!("{part:<14} {:>16} {:>10.2}M", n, n as f64 / 1e6);
    }
    println!("{:<14} {:>16} {:>10.2}M", "total", b.total, b.total as f64 / 1e6);
    println!("inference share {:.4}", b.inference_share());
    println!("published reference {:.0}M", reference as f64 / 1e6);
    for v in baselines {
        println!("competing defense {:.0}M", v as f64 / 1e6);
    }
    Ok(())
}
