//! `percept`: build reference stores, calibrate, detect, simulate and report.
//!
//! Exit status: 0 success/benign, 2 attack detected, 1 usage or data error.

mod format;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use percept_core::embedding::{
    provider_from_id, ProviderSpec, TokenHashProvider, DEFAULT_DIM, REMOTE_URL_ENV,
};
use percept_core::scenario::{self, AttackKind, AttackSpec, ScenarioConfig};
use percept_core::scoring::{calibrate, detect, DetectionParams, Verdict};
use percept_core::store::{self, ReferenceStore};

use crate::format::sig6;

const EXIT_ATTACK: u8 = 2;

#[derive(Parser)]
#[command(
    name = "percept",
    version,
    about = "Perception-graph cognitive attack detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a scene-description file into a reference store.
    BuildRef {
        #[arg(long)]
        scenes: PathBuf,
        /// token-hash[:seed], fixture:PATH or remote[:URL]
        #[arg(long, value_parser = parse_provider_spec)]
        embedder: ProviderSpec,
        #[arg(long)]
        out: PathBuf,
        /// Embedding dimension for token-hash and remote encoders.
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        #[arg(long)]
        tau_match: Option<f64>,
        #[arg(long)]
        modify_threshold: Option<f64>,
        #[arg(long)]
        w_min: Option<f64>,
        #[arg(long)]
        z_threshold: Option<f64>,
    },
    /// Compute the benign baseline from all reference pairs and store it.
    Calibrate {
        #[arg(long)]
        store: PathBuf,
    },
    /// Score observed frames against a calibrated store.
    Detect {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
        #[arg(long)]
        z_threshold: Option<f64>,
        /// Defaults to `<store stem>.history.jsonl` next to the store.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Generate benign reference scenes and one attacked frame.
    Simulate {
        #[arg(long, default_value = "agridrone")]
        scenario: String,
        #[arg(long)]
        attack: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; receives scenes.json and attacked.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = scenario::DEFAULT_REFERENCE_FRAMES)]
        frames: usize,
        #[arg(long, default_value_t = scenario::DEFAULT_JITTER)]
        jitter: f64,
        /// Node targeted by route-modification or map-deletion.
        #[arg(long)]
        target: Option<String>,
    },
    /// Export detection history as CSV.
    Report {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Also write one row per (frame, reference) score.
        #[arg(long)]
        per_reference: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

fn parse_provider_spec(s: &str) -> Result<ProviderSpec, String> {
    s.parse()
        .map_err(|e: percept_core::embedding::EmbedError| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) if is_broken_pipe(&e) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::BuildRef {
            scenes,
            embedder,
            out,
            dim,
            tau_match,
            modify_threshold,
            w_min,
            z_threshold,
        } => {
            let defaults = DetectionParams::default();
            let params = DetectionParams {
                tau_match: tau_match.unwrap_or(defaults.tau_match),
                modify_threshold: modify_threshold.unwrap_or(defaults.modify_threshold),
                w_min: w_min.unwrap_or(defaults.w_min),
                z_threshold: z_threshold.unwrap_or(defaults.z_threshold),
            };
            cmd_build_ref(&scenes, &embedder, dim, &out, params)
        }
        Command::Calibrate { store } => cmd_calibrate(&store),
        Command::Detect {
            store,
            frames,
            format,
            z_threshold,
            history,
        } => {
            let history = history.unwrap_or_else(|| default_history_path(&store));
            cmd_detect(&store, &frames, format, z_threshold, &history)
        }
        Command::Simulate {
            scenario,
            attack,
            seed,
            out,
            frames,
            jitter,
            target,
        } => {
            let config = ScenarioConfig {
                scenario_name: scenario,
                n_reference_frames: frames,
                jitter,
                seed,
            };
            let spec = AttackSpec {
                kind: attack.parse::<AttackKind>()?,
                target_node: target,
            };
            cmd_simulate(&config, &spec, &out)
        }
        Command::Report {
            history,
            csv,
            per_reference,
        } => cmd_report(&history, &csv, per_reference.as_deref()),
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<io::Error>())
        .any(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

fn default_history_path(store: &Path) -> PathBuf {
    let stem = store
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "store".into());
    store.with_file_name(format!("{stem}.history.jsonl"))
}

fn cmd_build_ref(
    scenes: &Path,
    spec: &ProviderSpec,
    dim: usize,
    out: &Path,
    params: DetectionParams,
) -> Result<u8> {
    let default_url = std::env::var(REMOTE_URL_ENV).ok();
    let provider = spec.build(dim, default_url.as_deref())?;
    let graphs = store::read_scene_file(scenes, provider.as_ref())?;
    if graphs.is_empty() {
        bail!("{}: no frames", scenes.display());
    }
    let reference_store = ReferenceStore::new(provider.id(), graphs, params)?;
    store::save_store(&reference_store, out)?;
    let mut stdout = io::stdout().lock();
    for g in &reference_store.references {
        writeln!(
            stdout,
            "{} nodes={} edges={}",
            g.frame_id,
            g.nodes.len(),
            g.edges.len()
        )?;
    }
    Ok(0)
}

fn cmd_calibrate(path: &Path) -> Result<u8> {
    let mut reference_store = store::load_store(path)?;
    let stats = calibrate(&reference_store.references, &reference_store.params)?;
    reference_store.baseline = Some(stats);
    store::save_store(&reference_store, path)?;
    println!(
        "mu={} sigma={} n={}",
        sig6(stats.mu),
        sig6(stats.sigma),
        stats.sample_count
    );
    if stats.degenerate {
        eprintln!(
            "warning: degenerate baseline; sigma floored at {}",
            sig6(stats.sigma)
        );
    }
    Ok(0)
}

fn cmd_detect(
    store_path: &Path,
    frames: &Path,
    format: OutputFormat,
    z_threshold: Option<f64>,
    history: &Path,
) -> Result<u8> {
    let reference_store = store::load_store(store_path)?;
    let Some(stats) = reference_store.baseline else {
        bail!(
            "{} has no baseline; run calibrate first",
            store_path.display()
        );
    };
    let mut params = reference_store.params;
    if let Some(z) = z_threshold {
        params.z_threshold = z;
    }
    let provider = provider_from_id(&reference_store.provider)?;
    reference_store.check_provider(&provider.id())?;
    let observed = store::read_scene_file(frames, provider.as_ref())?;

    let mut stdout = io::stdout().lock();
    let mut attack = false;
    for frame in &observed {
        let report = detect(frame, &reference_store.references, &stats, &params)
            .with_context(|| format!("frame {}", frame.frame_id))?;
        store::append_history(history, &report)?;
        match format {
            OutputFormat::Text => writeln!(
                stdout,
                "{} score={} z={} verdict={} top={}",
                report.frame_id,
                sig6(report.score),
                sig6(report.z),
                report.verdict,
                report.top_evidence().map_or("-", |c| c.element_id())
            )?,
            OutputFormat::Json => writeln!(stdout, "{}", store::report_to_line(&report)?)?,
        }
        attack |= report.verdict == Verdict::Attack;
    }
    Ok(if attack { EXIT_ATTACK } else { 0 })
}

fn cmd_simulate(config: &ScenarioConfig, spec: &AttackSpec, out: &Path) -> Result<u8> {
    // Embeddings are discarded; the files carry descriptions only.
    let provider = TokenHashProvider::new(DEFAULT_DIM, 0)?;
    let sim = scenario::simulate(config, spec, &provider)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let scenes = out.join("scenes.json");
    let attacked = out.join("attacked.json");
    store::write_scene_file(&scenes, &sim.references)?;
    store::write_scene_file(&attacked, std::slice::from_ref(&sim.attacked))?;
    println!(
        "wrote {} ({} frames) and {} ({})",
        scenes.display(),
        sim.references.len(),
        attacked.display(),
        spec.kind
    );
    Ok(0)
}

fn cmd_report(history: &Path, csv_path: &Path, per_reference: Option<&Path>) -> Result<u8> {
    let h = store::read_history(history)?;
    if h.warnings > 0 {
        eprintln!("warning: skipped {} malformed history line(s)", h.warnings);
    }

    let mut w = csv::Writer::from_path(csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    w.write_record(["frame_id", "score", "z", "verdict", "ref_frame_id"])?;
    for r in &h.records {
        w.write_record([
            r.frame_id.as_str(),
            &r.score.to_string(),
            &r.z.to_string(),
            &r.verdict.to_string(),
            r.ref_frame_id.as_str(),
        ])?;
    }
    w.flush()?;

    if let Some(path) = per_reference {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["frame_id", "ref_frame_id", "score"])?;
        for r in &h.records {
            for s in &r.reference_scores {
                w.write_record([
                    r.frame_id.as_str(),
                    s.ref_frame_id.as_str(),
                    &s.score.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }

    let attacks = h
        .records
        .iter()
        .filter(|r| r.verdict == Verdict::Attack)
        .count();
    let max_z = h
        .records
        .iter()
        .map(|r| r.z)
        .fold(None, |m: Option<f64>, z| Some(m.map_or(z, |m| m.max(z))));
    println!(
        "records={} attacks={} max_z={}",
        h.records.len(),
        attacks,
        max_z.map_or_else(|| "-".to_string(), sig6)
    );
    Ok(0)
}
