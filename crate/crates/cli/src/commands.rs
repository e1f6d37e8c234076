//! The subcommands, as library functions returning what they wrote.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sxai_core::cam::{
    bands_from_edges, frequency_profile, overlay, Explainer, Explanation, FrequencyImportance,
};
use sxai_core::corpus::{
    build_manifest, extract_segments, parse_alignment, synthesize_corpus, DatasetManifest,
};
use sxai_core::eval::{evaluate, summarize, ConfusionMatrix, EvalReport};
use sxai_core::nn::{train_with_progress, Checkpoint, Dataset, EpochStats, Network};
use sxai_core::signal::wav::{read_wav, write_wav};
use sxai_core::signal::AudioClip;
use sxai_core::{Error, Result};

use crate::config::RunConfig;

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Writes each clip under `root` at its `source_id` and saves the manifest.
fn write_corpus(
    clips: &[AudioClip],
    cfg: &RunConfig,
    labels: &[String],
) -> Result<DatasetManifest> {
    let root = manifest_dir(&cfg.manifest);
    for clip in clips {
        let path = root.join(&clip.source_id);
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
        write_wav(&path, clip)?;
    }
    let manifest = build_manifest(clips, labels, cfg.train_fraction, cfg.seed)?;
    create_dir(&root)?;
    manifest.save(&cfg.manifest)?;
    Ok(manifest)
}

fn count_lines(manifest: &DatasetManifest) -> String {
    let mut out = String::new();
    for ((label, split), n) in manifest.counts() {
        let _ = writeln!(out, "{label} {split}: {n}");
    }
    out
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub manifest_path: PathBuf,
    pub manifest: DatasetManifest,
}

impl SynthSummary {
    pub fn report(&self) -> String {
        format!(
            "wrote {} clips and {}\n{}",
            self.manifest.entries.len(),
            self.manifest_path.display(),
            count_lines(&self.manifest)
        )
    }
}

/// Synthesizes the experiment's classes as WAVs plus a split manifest.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let classes = cfg.classes()?;
    let clips = synthesize_corpus(&classes, cfg.clips_per_class, cfg.sample_rate, cfg.seed)?;
    let manifest = write_corpus(&clips, cfg, &cfg.labels)?;
    Ok(SynthSummary {
        manifest_path: cfg.manifest.clone(),
        manifest,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ExtractSummary {
    pub clips_per_label: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
    /// `None` when no clip was kept.
    pub manifest_path: Option<PathBuf>,
}

impl ExtractSummary {
    pub fn report(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        for (label, n) in &self.clips_per_label {
            let _ = writeln!(out, "{label}: {n} clips");
        }
        match &self.manifest_path {
            Some(p) => {
                let _ = writeln!(out, "wrote {}", p.display());
            }
            None => out.push_str("no clips kept; no manifest written\n"),
        }
        out
    }
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case(ext))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

/// Cuts the kept phone segments out of recordings paired with alignment
/// CSVs by file stem. Problems are warnings unless `strict`.
pub fn cmd_extract(cfg: &RunConfig) -> Result<ExtractSummary> {
    let need = |p: &Option<PathBuf>, key: &str| {
        p.clone()
            .ok_or_else(|| Error::Config(format!("extract needs {key}")))
    };
    let wav_dir = need(&cfg.wav_dir, "wav_dir")?;
    let align_dir = need(&cfg.alignment_dir, "alignment_dir")?;
    let mut summary = ExtractSummary::default();
    let problem = |summary: &mut ExtractSummary, e: Error| -> Result<()> {
        if cfg.strict {
            Err(e)
        } else {
            summary.warnings.push(e.to_string());
            Ok(())
        }
    };
    if cfg.keep.is_empty() {
        summary
            .warnings
            .push("keep is empty; nothing will be extracted".into());
    }

    let wavs = sorted_files(&wav_dir, "wav")?;
    let csvs = sorted_files(&align_dir, "csv")?;
    let wav_stems: Vec<String> = wavs.iter().map(|p| stem(p)).collect();
    for csv in &csvs {
        if !wav_stems.contains(&stem(csv)) {
            problem(
                &mut summary,
                Error::InvalidInput(format!("{} has no matching recording", csv.display())),
            )?;
        }
    }
    let mut clips = Vec::new();
    for wav in &wavs {
        let s = stem(wav);
        let csv = align_dir.join(format!("{s}.csv"));
        if !csv.exists() {
            problem(
                &mut summary,
                Error::InvalidInput(format!(
                    "{} has no alignment {}",
                    wav.display(),
                    csv.display()
                )),
            )?;
            continue;
        }
        let text = std::fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?;
        let annotations = match parse_alignment(&text) {
            Ok(a) => a,
            Err(e) => {
                problem(
                    &mut summary,
                    Error::InvalidInput(format!("{}: {e}", csv.display())),
                )?;
                continue;
            }
        };
        let recording = read_wav(wav, "")?;
        let segments = match extract_segments(&recording, &annotations, &cfg.keep) {
            Ok(s) => s,
            Err(e) => {
                problem(
                    &mut summary,
                    Error::InvalidInput(format!("{}: {e}", csv.display())),
                )?;
                continue;
            }
        };
        for (i, mut clip) in segments.into_iter().enumerate() {
            clip.source_id = format!("{}/{s}_{i:04}.wav", clip.label);
            clips.push(clip);
        }
    }
    for c in &clips {
        *summary.clips_per_label.entry(c.label.clone()).or_default() += 1;
    }
    if clips.is_empty() {
        return Ok(summary);
    }
    // Labels in the order first requested, restricted to those found.
    let labels: Vec<String> = cfg
        .keep
        .iter()
        .filter(|l| summary.clips_per_label.contains_key(*l))
        .cloned()
        .collect();
    write_corpus(&clips, cfg, &labels)?;
    summary.manifest_path = Some(cfg.manifest.clone());
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint_path: PathBuf,
    pub history_path: PathBuf,
    pub history: Vec<EpochStats>,
    pub checkpoint: Checkpoint,
    pub seconds: f64,
}

impl TrainSummary {
    pub fn report(&self) -> String {
        let last = self.history.last();
        format!(
            "wrote {} and {}\nfinal loss = {}\nfinal train accuracy = {}\ntraining seconds = {:.1}\n",
            self.checkpoint_path.display(),
            self.history_path.display(),
            last.map_or(f64::NAN, |s| s.loss),
            last.map_or(f64::NAN, |s| s.accuracy),
            self.seconds
        )
    }
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,accuracy\n");
    for s in history {
        let _ = writeln!(out, "{},{},{}", s.epoch, s.loss, s.accuracy);
    }
    out
}

fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    Ok(manifest)
}

/// Trains on the manifest's train split and writes the checkpoint and the
/// per-epoch history.
pub fn cmd_train(cfg: &RunConfig, progress: impl FnMut(&EpochStats)) -> Result<TrainSummary> {
    let start = Instant::now();
    let manifest = load_manifest(cfg)?;
    if manifest.label_set != cfg.labels {
        return Err(Error::Config(format!(
            "manifest labels {:?} differ from configured labels {:?}",
            manifest.label_set, cfg.labels
        )));
    }
    let data = Dataset::from_manifest(
        &manifest,
        &cfg.manifest,
        &cfg.pipeline,
        sxai_core::corpus::Split::Train,
    )?;
    let net = Network::new(cfg.network.clone())?;
    let (checkpoint, history) =
        train_with_progress(net, &data, &cfg.pipeline, &cfg.train, progress)?;
    if let Some(parent) = cfg.checkpoint.parent() {
        create_dir(parent)?;
    }
    checkpoint.save(&cfg.checkpoint)?;
    let history_path = cfg.output_dir.join("history.csv");
    write_text(&history_path, &history_csv(&history))?;
    Ok(TrainSummary {
        checkpoint_path: cfg.checkpoint.clone(),
        history_path,
        history,
        checkpoint,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub matrix: ConfusionMatrix,
    pub report: EvalReport,
    pub dir: PathBuf,
}

impl EvalSummary {
    pub fn report_text(&self) -> String {
        format!(
            "accuracy = {}\n{}wrote {}\n",
            self.report.accuracy,
            self.matrix.to_csv(),
            self.dir.display()
        )
    }
}

/// Scores the configured split and writes `eval/confusion.csv`,
/// `eval/report.txt` and `eval/asymmetry.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalSummary> {
    let start = Instant::now();
    let checkpoint = Checkpoint::load(&cfg.checkpoint)?;
    let manifest = load_manifest(cfg)?;
    let matrix = evaluate(&checkpoint, &manifest, &cfg.manifest, cfg.eval_split)?;
    let report = summarize(&matrix, start.elapsed().as_secs_f64())?;
    let dir = cfg.output_dir.join("eval");
    write_text(&dir.join("confusion.csv"), &matrix.to_csv())?;
    write_text(&dir.join("report.txt"), &report.to_kv())?;
    write_text(&dir.join("asymmetry.csv"), &report.asymmetry_csv())?;
    Ok(EvalSummary {
        matrix,
        report,
        dir,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ExplainSummary {
    /// Files written, in order.
    pub written: Vec<PathBuf>,
    /// Class-mean profile per label (manifest mode only).
    pub class_means: BTreeMap<String, FrequencyImportance>,
    /// Highest frequency on the overlays' axis, in Hz.
    pub f_max: f64,
}

impl ExplainSummary {
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (label, p) in &self.class_means {
            let _ = writeln!(
                out,
                "{label}: peak band {}-{} Hz",
                p.peak_band.0, p.peak_band.1
            );
        }
        let _ = writeln!(
            out,
            "wrote {} files (frequency axis 0-{} Hz)",
            self.written.len(),
            self.f_max
        );
        out
    }
}

fn write_explanation(
    e: &Explanation,
    cfg: &RunConfig,
    dir: &Path,
    name: &str,
    profile: &FrequencyImportance,
    summary: &mut ExplainSummary,
) -> Result<()> {
    create_dir(dir)?;
    let png = dir.join(format!("{name}.png"));
    overlay(&e.spectrogram, &e.cam.upsampled, cfg.alpha)?.save_png(&png)?;
    let csv = dir.join(format!("{name}_profile.csv"));
    write_text(&csv, &profile.to_csv())?;
    summary.written.push(png);
    summary.written.push(csv);
    Ok(())
}

/// Renders CAM overlays and frequency profiles, either for `explain_clip`
/// or for every item of the configured manifest split (maps of the true
/// class; the first `explain_per_class` items per class get files, all of
/// them enter the class-mean profile).
pub fn cmd_explain(cfg: &RunConfig) -> Result<ExplainSummary> {
    let checkpoint = Checkpoint::load(&cfg.checkpoint)?;
    let explainer = Explainer::new(checkpoint)?;
    let labels = explainer.checkpoint().labels.clone();
    let dir = cfg.output_dir.join("explain");
    let mut summary = ExplainSummary::default();
    let profile_of = |e: &Explanation| {
        let bands = bands_from_edges(&cfg.band_edges, e.spectrogram.f_max);
        frequency_profile(&e.cam.upsampled, &e.spectrogram, &bands)
    };

    if let Some(clip_path) = &cfg.explain_clip {
        let clip = read_wav(clip_path, "")?;
        let class = match &cfg.explain_class {
            Some(l) => Some(
                labels
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| Error::Config(format!("checkpoint has no label {l:?}")))?,
            ),
            None => None,
        };
        let e = explainer.explain(&clip, class)?;
        let profile = profile_of(&e)?;
        let name = format!("{}_{}", stem(clip_path), labels[e.cam.class_id]);
        write_explanation(&e, cfg, &dir, &name, &profile, &mut summary)?;
        summary.f_max = e.spectrogram.f_max;
        return Ok(summary);
    }

    let manifest = load_manifest(cfg)?;
    if manifest.label_set != labels {
        return Err(Error::Config(format!(
            "checkpoint labels {:?} differ from manifest labels {:?}",
            labels, manifest.label_set
        )));
    }
    let mut profiles: Vec<Vec<FrequencyImportance>> = vec![Vec::new(); labels.len()];
    let mut rendered = vec![0usize; labels.len()];
    for entry in manifest.split(cfg.explain_split) {
        let class = manifest
            .label_index(&entry.label)
            .expect("label in label set");
        let path = DatasetManifest::resolve(&cfg.manifest, entry);
        let clip = read_wav(&path, &entry.label)?;
        let e = explainer.explain(&clip, Some(class))?;
        let profile = profile_of(&e)?;
        summary.f_max = e.spectrogram.f_max;
        if rendered[class] < cfg.explain_per_class {
            rendered[class] += 1;
            let name = stem(Path::new(&entry.path));
            write_explanation(
                &e,
                cfg,
                &dir.join(&entry.label),
                &name,
                &profile,
                &mut summary,
            )?;
        }
        profiles[class].push(profile);
    }
    for (label, ps) in labels.iter().zip(&profiles) {
        if ps.is_empty() {
            continue;
        }
        let mean = FrequencyImportance::mean(ps)?;
        let path = dir.join(format!("class_mean_{label}.csv"));
        write_text(&path, &mean.to_csv())?;
        summary.written.push(path);
        summary.class_means.insert(label.clone(), mean);
    }
    if summary.class_means.is_empty() {
        return Err(Error::Config(format!(
            "manifest has no {} entries",
            cfg.explain_split
        )));
    }
    Ok(summary)
}
