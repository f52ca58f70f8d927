use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beatsynth::config::{RecordInput, RunConfig};
use beatsynth::diffusion::{self, DdpmModel};
use beatsynth::imaging::tsim;
use beatsynth::ingest::{split_dataset, DEFAULT_GAIN, DEFAULT_SAMPLING_RATE_HZ};
use beatsynth::pipeline::{self, ArtifactMeta, RunReport};
use beatsynth::signal::BeatSeries;
use beatsynth::wgan::{self, WganModel};
use beatsynth::{jsonio, plot, Error, Result};

#[derive(Parser)]
#[command(name = "beatsynth", version, about = "Heartbeat imaging, synthesis and evaluation")]
struct Cli {
    /// Run config (JSON). Unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a format-212 record and its annotation CSV into record NDJSON.
    Ingest {
        #[arg(long)]
        dat: PathBuf,
        #[arg(long)]
        ann: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GAIN)]
        gain: f64,
        #[arg(long, default_value_t = DEFAULT_SAMPLING_RATE_HZ)]
        rate: u32,
    },
    /// Cut records into normalized fixed-length beats.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        cutoff: Option<f64>,
    },
    /// Encode beats as GASF/GADF/MTF image stacks.
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
        /// Keep only beats with this label.
        #[arg(long)]
        label: Option<char>,
    },
    /// Recover beats from the GASF channel of an image file.
    Deembed {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label for images without provenance; defaults to the positive label.
        #[arg(long)]
        label: Option<char>,
    },
    /// Train a diffusion denoiser on an image file.
    TrainDdpm {
        #[arg(long = "case")]
        case_id: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw images from a diffusion checkpoint.
    SampleDdpm {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Clamp the implied x0 prediction to [-1, 1] at every step.
        #[arg(long)]
        clip_denoised: bool,
    },
    /// Train the WGAN-GP generator and critic on beats.
    TrainWgangp {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Keep only beats with this label.
        #[arg(long)]
        label: Option<char>,
    },
    /// Draw beats from a WGAN-GP checkpoint.
    SampleWgangp {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score synthetic beat sets against real beats.
    Evaluate {
        /// Real beats; split into train and test unless `--test` is given.
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Synthetic beat files, paired in order with `--case-id`.
        #[arg(long, required = true)]
        synth: Vec<PathBuf>,
        #[arg(long = "case-id", required = true)]
        case_id: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render PR/ROC curves, beat overlays and training traces as SVG.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Vec<PathBuf>,
    },
    /// Run every stage into one output directory, reusing matching stages.
    Run {
        #[arg(long)]
        out: PathBuf,
    },
}

fn beats(path: &Path) -> Result<Vec<BeatSeries>> {
    jsonio::read_ndjson(path)
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::file(path, e.to_string()))
}

fn trace_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("trace.csv")
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Ingest { dat, ann, out, gain, rate } => {
            let input = RecordInput { dat, ann, sampling_rate_hz: rate, gain };
            cfg.records = vec![input.clone()];
            cfg.validate()?;
            jsonio::write_ndjson(&out, &pipeline::ingest_records(&[input], &cfg.hash()?)?)
        }
        Command::Segment { input, out, len, cutoff } => {
            cfg.beat_len = len.unwrap_or(cfg.beat_len);
            cfg.cutoff = cutoff.unwrap_or(cfg.cutoff);
            cfg.validate()?;
            let records = jsonio::read_ndjson(&input)?;
            jsonio::write_ndjson(&out, &pipeline::segment_records(&records, cfg.beat_len, cfg.cutoff, &cfg.hash()?)?)
        }
        Command::Embed { input, out, bins, label } => {
            cfg.mtf_bins = bins.unwrap_or(cfg.mtf_bins);
            cfg.validate()?;
            let all = beats(&input)?;
            let kept: Vec<BeatSeries> = all.into_iter().filter(|b| label.is_none_or(|l| b.label == l)).collect();
            let (batch, provenance) = pipeline::embed_beats(&kept, cfg.mtf())?;
            tsim::write(&out, &batch)?;
            pipeline::write_meta(&out, &ArtifactMeta { provenance, ..pipeline::meta(&cfg, "embed", batch.len())? })
        }
        Command::Deembed { input, out, label } => {
            cfg.validate()?;
            let batch = tsim::read(&input)?;
            let meta = pipeline::read_meta(&input).ok();
            let (prov, source) = match &meta {
                Some(m) => (m.provenance.clone(), m.source.clone()),
                None => (Vec::new(), "synthetic".to_string()),
            };
            let label = label.unwrap_or(cfg.eval.positive_label);
            let (beats, flagged) = pipeline::deembed_batch(&batch, &prov, &source, label, &cfg.hash()?)?;
            if flagged > 0 {
                eprintln!("warning: {flagged} of {} images left [-1, 1] beyond tolerance", batch.len());
            }
            jsonio::write_ndjson(&out, &beats)
        }
        Command::TrainDdpm { case_id, data, steps, out } => {
            cfg.ddpm.steps = steps.unwrap_or(cfg.ddpm.steps);
            cfg.ddpm.cases = vec![case_id.clone()];
            cfg.validate()?;
            let images = tsim::read(&data)?;
            let (model, rows) = diffusion::train_ddpm(&images, cfg.case(&case_id)?, &cfg.ddpm_train())?;
            model.save(&out)?;
            pipeline::write_meta(&out, &pipeline::meta(&cfg, format!("train-ddpm-{case_id}"), images.len())?)?;
            write_text(&trace_path(&out), diffusion::train::trace_csv(&rows))
        }
        Command::SampleDdpm { ckpt, n, out, clip_denoised } => {
            cfg.ddpm.clip_denoised |= clip_denoised;
            cfg.validate()?;
            let model = DdpmModel::load(&ckpt)?;
            let batch = pipeline::sample_ddpm(&model, n, cfg.seed, cfg.ddpm.clip_denoised)?;
            tsim::write(&out, &batch)?;
            pipeline::write_meta(&out, &pipeline::meta(&cfg, "ddpm", batch.len())?)
        }
        Command::TrainWgangp { data, steps, out, label } => {
            cfg.wgan.steps = steps.unwrap_or(cfg.wgan.steps);
            let train: Vec<Vec<f64>> =
                beats(&data)?.into_iter().filter(|b| label.is_none_or(|l| b.label == l)).map(|b| b.samples).collect();
            if let Some(b) = train.first() {
                cfg.beat_len = b.len();
            }
            cfg.validate()?;
            let (model, rows) = wgan::train_wgan_gp(&train, &cfg.wgan_train())?;
            model.save(&out)?;
            pipeline::write_meta(&out, &pipeline::meta(&cfg, "train-wgangp", train.len())?)?;
            write_text(&trace_path(&out), wgan::train::trace_csv(&rows))
        }
        Command::SampleWgangp { ckpt, n, out } => {
            cfg.validate()?;
            let model = WganModel::load(&ckpt)?;
            let samples = model.sample(n, cfg.seed)?;
            jsonio::write_ndjson(&out, &pipeline::synthetic_beats(samples, "wgan", cfg.eval.positive_label, &cfg.hash()?))
        }
        Command::Evaluate { real, test, synth, case_id, out } => {
            cfg.validate()?;
            if synth.len() != case_id.len() {
                return Err(Error::Config(format!("{} --synth files but {} --case-id values", synth.len(), case_id.len())));
            }
            let real_beats = beats(&real)?;
            let (train, test) = match test {
                Some(t) => (real_beats, beats(&t)?),
                None => split_dataset(&real_beats, cfg.seed, (cfg.train_fraction, cfg.test_fraction))?,
            };
            let sets = case_id.into_iter().zip(&synth).map(|(c, p)| Ok((c, beats(p)?))).collect::<Result<Vec<_>>>()?;
            jsonio::write_json(&out, &pipeline::evaluate_sets(&train, &test, &sets, &cfg)?)
        }
        Command::Plot { report, out, trace } => {
            let doc: RunReport = jsonio::read_json(&report)?;
            plot::write_report_plots(&doc.evaluation, &out)?;
            for t in &trace {
                let text = fs::read_to_string(t).map_err(|e| Error::file(t, e.to_string()))?;
                let name = t.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                plot::write_trace_plot(&text, &name, &out)?;
            }
            Ok(())
        }
        Command::Run { out } => {
            let summary = pipeline::run_pipeline(&cfg, &out)?;
            println!("{}", jsonio::to_string(&summary)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
