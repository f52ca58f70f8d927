//! Stage operations shared by the CLI subcommands, and the cached end-to-end
//! run.
//!
//! Every artifact carries the hash of the run config: NDJSON lines in a
//! `config_hash` field, binary files in a `<file>.meta.json` sidecar that also
//! echoes the full config. A run writes one stamp per stage under `stages/`
//! listing the SHA-256 of its inputs and outputs. A stage is skipped when its
//! stamp matches; a stamp from a different config is refused.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RecordInput, RunConfig};
use crate::diffusion::{self, DdpmModel};
use crate::error::{Error, Result};
use crate::imaging::tsim::{self, ImageBatch};
use crate::imaging::{deembed_channel, embed_samples, is_flagged, MtfConfig, CHANNELS};
use crate::ingest::{load_annotations_csv, read_format212, split_dataset, RawRecord, RecordDoc};
use crate::jsonio;
use crate::metrics::{evaluate, Evaluation, HarnessData};
use crate::plot;
use crate::signal::{segment_record, BeatSeries};
use crate::wgan::{self, WganModel};

/// Case id of the adversarial generator in reports.
pub const GAN_CASE: &str = "GAN";

/// Where a beat came from, kept next to images that lost it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub record: String,
    pub label: char,
    pub r_peak: usize,
}

/// Sidecar written next to binary artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub config: RunConfig,
    /// What produced the artifact, e.g. `embed` or `ddpm-01`.
    pub source: String,
    pub count: usize,
    /// Deembedded images whose GASF diagonal left `[-1, 1]` beyond tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flagged: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<Provenance>,
}

/// Final evaluation document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub config_hash: String,
    pub config: RunConfig,
    pub evaluation: Evaluation,
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

pub fn write_meta(artifact: &Path, meta: &ArtifactMeta) -> Result<()> {
    jsonio::write_json(&meta_path(artifact), meta)
}

pub fn read_meta(artifact: &Path) -> Result<ArtifactMeta> {
    jsonio::read_json(&meta_path(artifact))
}

/// A meta sidecar for `cfg`.
pub fn meta(cfg: &RunConfig, source: impl Into<String>, count: usize) -> Result<ArtifactMeta> {
    Ok(ArtifactMeta { config_hash: cfg.hash()?, config: cfg.clone(), source: source.into(), count, flagged: None, provenance: Vec::new() })
}

fn stamp_hash<T>(items: &mut [T], hash: &str, set: impl Fn(&mut T, Option<String>)) {
    for item in items {
        set(item, Some(hash.to_string()));
    }
}

/// Reads one record file pair. The record id is the `.dat` file stem.
pub fn ingest_record(input: &RecordInput) -> Result<RecordDoc> {
    let (a, b) = read_format212(&input.dat)?;
    let annotations = load_annotations_csv(&input.ann)?;
    let id = input.dat.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let raw = RawRecord::new(id, input.sampling_rate_hz, vec![a, b], input.gain)?;
    RecordDoc::from_raw(&raw, annotations).map_err(|e| Error::file(&input.ann, e.to_string()))
}

pub fn ingest_records(inputs: &[RecordInput], hash: &str) -> Result<Vec<RecordDoc>> {
    if inputs.is_empty() {
        return Err(Error::Config("no records configured".into()));
    }
    let mut docs = inputs.iter().map(ingest_record).collect::<Result<Vec<_>>>()?;
    stamp_hash(&mut docs, hash, |d, h| d.config_hash = h);
    Ok(docs)
}

pub fn segment_records(records: &[RecordDoc], len: usize, cutoff: f64, hash: &str) -> Result<Vec<BeatSeries>> {
    let mut beats = Vec::new();
    for rec in records {
        beats.extend(segment_record(rec, len, cutoff)?);
    }
    stamp_hash(&mut beats, hash, |b, h| b.config_hash = h);
    Ok(beats)
}

/// Embeds beats of one common length into a `3 × L × L` image batch.
pub fn embed_beats(beats: &[BeatSeries], cfg: MtfConfig) -> Result<(ImageBatch, Vec<Provenance>)> {
    let n = beats.first().map(BeatSeries::len).ok_or_else(|| Error::Insufficient("no beats to embed".into()))?;
    let mut data = Vec::with_capacity(beats.len() * CHANNELS * n * n);
    for (i, b) in beats.iter().enumerate() {
        if b.len() != n {
            return Err(Error::invalid(format!("beat {i} has length {}, expected {n}", b.len())));
        }
        data.extend(embed_samples(&b.samples, cfg)?);
    }
    let prov = beats.iter().map(|b| Provenance { record: b.record.clone(), label: b.label, r_peak: b.r_peak }).collect();
    Ok((ImageBatch::new(CHANNELS, n, n, data)?, prov))
}

/// Recovers beats from the GASF diagonals. Beats without provenance take
/// `source` as record, `label`, and their index as `r_peak`. Also returns
/// how many images strayed outside `[-1, 1]` beyond the tolerance.
pub fn deembed_batch(batch: &ImageBatch, prov: &[Provenance], source: &str, label: char, hash: &str) -> Result<(Vec<BeatSeries>, usize)> {
    if batch.height != batch.width {
        return Err(Error::shape("deembed", format!("images are {}×{}", batch.height, batch.width)));
    }
    let n = batch.width;
    let mut beats = Vec::with_capacity(batch.len());
    let mut flagged = 0;
    for i in 0..batch.len() {
        let (samples, violation) = deembed_channel(&batch.image(i)[..n * n], n)?;
        flagged += is_flagged(violation) as usize;
        let mut b = match prov.get(i) {
            Some(p) if prov.len() == batch.len() => BeatSeries::new(p.record.clone(), p.label, p.r_peak, samples),
            _ => BeatSeries::new(source, label, i, samples),
        };
        b.config_hash = Some(hash.to_string());
        beats.push(b);
    }
    Ok((beats, flagged))
}

/// Draws `n` images in chunks of 64 to bound memory, each chunk with its own
/// derived seed.
pub fn sample_ddpm(model: &DdpmModel, n: usize, seed: u64, clip_denoised: bool) -> Result<ImageBatch> {
    const CHUNK: usize = 64;
    let c = model.denoiser.config.channels;
    let mut data = Vec::new();
    for (k, start) in (0..n).step_by(CHUNK).enumerate() {
        let m = CHUNK.min(n - start);
        data.extend(model.sample_with(m, derive_seed(seed, &format!("chunk{k}")), clip_denoised)?.data);
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Undefined(format!(
            "reverse chain produced a non-finite value in image {}; an undertrained model may need ddpm.clip_denoised",
            i / (c * model.height * model.width)
        )));
    }
    ImageBatch::new(c, model.height, model.width, data)
}

pub fn synthetic_beats(samples: Vec<Vec<f64>>, source: &str, label: char, hash: &str) -> Vec<BeatSeries> {
    samples
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut b = BeatSeries::new(source, label, i, s);
            b.config_hash = Some(hash.to_string());
            b
        })
        .collect()
}

/// Distinct deterministic seed per purpose.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let d = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(tag.as_bytes()).finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// The single config hash shared by all inputs, or an error naming the
/// disagreeing ones. Inputs without a hash count as their own value.
pub fn common_hash(sets: &[(&str, &[BeatSeries])]) -> Result<Option<String>> {
    let mut seen: BTreeSet<Option<&str>> = BTreeSet::new();
    let mut names = Vec::new();
    for (name, beats) in sets {
        for b in beats.iter() {
            if seen.insert(b.config_hash.as_deref()) {
                names.push(format!("{name}: {}", b.config_hash.as_deref().unwrap_or("none")));
            }
        }
    }
    if seen.len() > 1 {
        return Err(Error::Config(format!("inputs come from different configs ({})", names.join(", "))));
    }
    Ok(seen.into_iter().next().flatten().map(str::to_string))
}

/// How many synthetic positives the augmentation scenario needs.
pub fn augmentation_need(train: &[BeatSeries], cfg: &RunConfig) -> usize {
    let data = HarnessData {
        train_pos: train.iter().filter(|b| b.label == cfg.eval.positive_label).map(|b| b.samples.clone()).collect(),
        ..Default::default()
    };
    if data.train_pos.is_empty() {
        return 0;
    }
    data.train_pos.len() - data.minority_count(cfg.eval.harness.minority_ratio)
}

pub fn synth_count(train: &[BeatSeries], cfg: &RunConfig) -> usize {
    cfg.synth_per_case.unwrap_or_else(|| augmentation_need(train, cfg))
}

/// Evaluates synthetic sets after checking every input shares one config.
pub fn evaluate_sets(
    train: &[BeatSeries],
    test: &[BeatSeries],
    synth: &[(String, Vec<BeatSeries>)],
    cfg: &RunConfig,
) -> Result<RunReport> {
    let mut sets: Vec<(&str, &[BeatSeries])> = vec![("train", train), ("test", test)];
    sets.extend(synth.iter().map(|(c, b)| (c.as_str(), b.as_slice())));
    common_hash(&sets)?;
    let by_case: Vec<(String, Vec<Vec<f64>>)> =
        synth.iter().map(|(c, b)| (c.clone(), b.iter().map(|x| x.samples.clone()).collect())).collect();
    let evaluation = evaluate(train, test, &by_case, &cfg.eval, cfg.seed)?;
    Ok(RunReport { config_hash: cfg.hash()?, config: cfg.clone(), evaluation })
}

/// Stages that ran and stages whose stamps matched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stamp {
    stage: String,
    config_hash: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    hash: String,
    out: &'a Path,
    summary: RunSummary,
}

impl Runner<'_> {
    fn digests(&self, names: &[String]) -> Result<Vec<FileDigest>> {
        names.iter().map(|n| Ok(FileDigest { path: n.clone(), sha256: sha256_file(&self.out.join(n))? })).collect()
    }

    fn fresh(&self, stamp: &Stamp, inputs: &[String]) -> bool {
        let current = |d: &FileDigest| sha256_file(&self.out.join(&d.path)).is_ok_and(|h| h == d.sha256);
        stamp.inputs.iter().map(|d| &d.path).eq(inputs.iter()) && stamp.inputs.iter().chain(&stamp.outputs).all(current)
    }

    /// Runs `body` unless a matching stamp exists. `inputs` and `outputs`
    /// are relative to the output directory.
    fn stage(&mut self, name: &str, inputs: &[String], outputs: &[String], body: impl FnOnce(&Self) -> Result<()>) -> Result<()> {
        let wrap = |e: Error| Error::Stage { stage: name.to_string(), source: Box::new(e) };
        let stamp_path = self.out.join("stages").join(format!("{name}.json"));
        if stamp_path.exists() {
            let stamp: Stamp = jsonio::read_json(&stamp_path).map_err(wrap)?;
            if stamp.config_hash != self.hash {
                return Err(wrap(Error::Config(format!(
                    "{} holds artifacts of config {}, refusing to reuse it for config {}",
                    self.out.display(),
                    stamp.config_hash,
                    self.hash
                ))));
            }
            if self.fresh(&stamp, inputs) {
                self.summary.skipped.push(name.to_string());
                return Ok(());
            }
        }
        body(self).map_err(wrap)?;
        let stamp = Stamp {
            stage: name.to_string(),
            config_hash: self.hash.clone(),
            inputs: self.digests(inputs).map_err(wrap)?,
            outputs: self.digests(outputs).map_err(wrap)?,
        };
        jsonio::write_json(&stamp_path, &stamp).map_err(wrap)?;
        self.summary.executed.push(name.to_string());
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn beats(&self, name: &str) -> Result<Vec<BeatSeries>> {
        jsonio::read_ndjson(&self.path(name))
    }

    fn positives(&self, name: &str) -> Result<Vec<BeatSeries>> {
        let label = self.cfg.eval.positive_label;
        Ok(self.beats(name)?.into_iter().filter(|b| b.label == label).collect())
    }
}

fn names(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn with_meta(name: &str) -> [String; 2] {
    [name.to_string(), format!("{name}.meta.json")]
}

/// Runs every stage in order into `out_dir`:
/// ingest, segment, split, embed, per-case DDPM train, sample and deembed,
/// WGAN-GP train and sample, evaluate and plot.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir.join("stages")).map_err(|e| Error::file(out_dir, e.to_string()))?;
    fs::create_dir_all(out_dir.join("plots")).map_err(|e| Error::file(out_dir, e.to_string()))?;
    let mut r = Runner { cfg, hash: cfg.hash()?, out: out_dir, summary: RunSummary::default() };
    let pos = cfg.eval.positive_label;

    r.stage("ingest", &[], &names(&["records.ndjson"]), |r| {
        jsonio::write_ndjson(&r.path("records.ndjson"), &ingest_records(&cfg.resolved_records(), &r.hash)?)
    })?;
    r.stage("segment", &names(&["records.ndjson"]), &names(&["beats.ndjson"]), |r| {
        let records: Vec<RecordDoc> = jsonio::read_ndjson(&r.path("records.ndjson"))?;
        jsonio::write_ndjson(&r.path("beats.ndjson"), &segment_records(&records, cfg.beat_len, cfg.cutoff, &r.hash)?)
    })?;
    r.stage("split", &names(&["beats.ndjson"]), &names(&["train.ndjson", "test.ndjson"]), |r| {
        let beats = r.beats("beats.ndjson")?;
        let (train, test) = split_dataset(&beats, cfg.seed, (cfg.train_fraction, cfg.test_fraction))?;
        jsonio::write_ndjson(&r.path("train.ndjson"), &train)?;
        jsonio::write_ndjson(&r.path("test.ndjson"), &test)
    })?;
    r.stage("embed", &names(&["train.ndjson"]), &with_meta("train_pos.tsim"), |r| {
        let (batch, provenance) = embed_beats(&r.positives("train.ndjson")?, cfg.mtf())?;
        let path = r.path("train_pos.tsim");
        tsim::write(&path, &batch)?;
        write_meta(&path, &ArtifactMeta { provenance, ..meta(cfg, "embed", batch.len())? })
    })?;

    let n_synth = synth_count(&r.beats("train.ndjson")?, cfg);
    let mut synth_files = Vec::new();
    for case_id in &cfg.ddpm.cases {
        let ckpt = format!("ddpm_{case_id}.tsnn");
        let trace = format!("ddpm_{case_id}.trace.csv");
        let mut outs = with_meta(&ckpt).to_vec();
        outs.push(trace.clone());
        r.stage(&format!("train-ddpm-{case_id}"), &names(&["train_pos.tsim"]), &outs, |r| {
            let data = tsim::read(&r.path("train_pos.tsim"))?;
            let (model, rows) = diffusion::train_ddpm(&data, cfg.case(case_id)?, &cfg.ddpm_train())?;
            model.save(&r.path(&ckpt))?;
            write_meta(&r.path(&ckpt), &meta(cfg, format!("train-ddpm-{case_id}"), data.len())?)?;
            fs::write(r.path(&trace), diffusion::train::trace_csv(&rows)).map_err(|e| Error::file(r.path(&trace), e.to_string()))
        })?;
        let samples = format!("samples_{case_id}.tsim");
        r.stage(&format!("sample-ddpm-{case_id}"), std::slice::from_ref(&ckpt), &with_meta(&samples), |r| {
            let model = DdpmModel::load(&r.path(&ckpt))?;
            let batch = sample_ddpm(&model, n_synth, derive_seed(cfg.seed, &format!("sample-ddpm-{case_id}")), cfg.ddpm.clip_denoised)?;
            tsim::write(&r.path(&samples), &batch)?;
            write_meta(&r.path(&samples), &meta(cfg, format!("ddpm-{case_id}"), batch.len())?)
        })?;
        let synth = format!("synth_{case_id}.ndjson");
        r.stage(&format!("deembed-{case_id}"), std::slice::from_ref(&samples), &with_meta(&synth), |r| {
            let batch = tsim::read(&r.path(&samples))?;
            let (beats, flagged) = deembed_batch(&batch, &[], &format!("ddpm-{case_id}"), pos, &r.hash)?;
            jsonio::write_ndjson(&r.path(&synth), &beats)?;
            let m = ArtifactMeta { flagged: Some(flagged), ..meta(cfg, format!("deembed-{case_id}"), beats.len())? };
            write_meta(&r.path(&synth), &m)
        })?;
        synth_files.push((case_id.clone(), synth));
    }

    r.stage("train-wgangp", &names(&["train.ndjson"]), &names(&["wgan.tsnn", "wgan.tsnn.meta.json", "wgan.trace.csv"]), |r| {
        let beats: Vec<Vec<f64>> = r.positives("train.ndjson")?.into_iter().map(|b| b.samples).collect();
        let (model, rows) = wgan::train_wgan_gp(&beats, &cfg.wgan_train())?;
        model.save(&r.path("wgan.tsnn"))?;
        write_meta(&r.path("wgan.tsnn"), &meta(cfg, "train-wgangp", beats.len())?)?;
        let trace = r.path("wgan.trace.csv");
        fs::write(&trace, wgan::train::trace_csv(&rows)).map_err(|e| Error::file(&trace, e.to_string()))
    })?;
    r.stage("sample-wgangp", &names(&["wgan.tsnn"]), &names(&["synth_GAN.ndjson"]), |r| {
        let model = WganModel::load(&r.path("wgan.tsnn"))?;
        let samples = model.sample(n_synth, derive_seed(cfg.seed, "sample-wgangp"))?;
        jsonio::write_ndjson(&r.path("synth_GAN.ndjson"), &synthetic_beats(samples, "wgan", pos, &r.hash))
    })?;
    synth_files.push((GAN_CASE.to_string(), "synth_GAN.ndjson".to_string()));

    let mut eval_inputs = names(&["train.ndjson", "test.ndjson"]);
    eval_inputs.extend(synth_files.iter().map(|(_, f)| f.clone()));
    r.stage("evaluate", &eval_inputs, &names(&["report.json"]), |r| {
        let synth = synth_files.iter().map(|(c, f)| Ok((c.clone(), r.beats(f)?))).collect::<Result<Vec<_>>>()?;
        let report = evaluate_sets(&r.beats("train.ndjson")?, &r.beats("test.ndjson")?, &synth, cfg)?;
        jsonio::write_json(&r.path("report.json"), &report)
    })?;

    let mut traces: Vec<String> = cfg.ddpm.cases.iter().map(|c| format!("ddpm_{c}.trace.csv")).collect();
    traces.push("wgan.trace.csv".into());
    let mut plot_inputs = names(&["report.json"]);
    plot_inputs.extend(traces.iter().cloned());
    let report: Option<RunReport> = jsonio::read_json(&r.path("report.json")).ok();
    let plot_outputs: Vec<String> = match &report {
        Some(rep) => plot::file_names(&rep.evaluation, &traces).into_iter().map(|f| format!("plots/{f}")).collect(),
        None => Vec::new(),
    };
    r.stage("plot", &plot_inputs, &plot_outputs, |r| {
        let report: RunReport = jsonio::read_json(&r.path("report.json"))?;
        let dir = r.path("plots");
        plot::write_report_plots(&report.evaluation, &dir)?;
        for t in &traces {
            let text = fs::read_to_string(r.path(t)).map_err(|e| Error::file(r.path(t), e.to_string()))?;
            plot::write_trace_plot(&text, t, &dir)?;
        }
        Ok(())
    })?;
    Ok(r.summary)
}
