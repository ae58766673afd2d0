use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use uniweb::analysis::{AnomalyRule, PcaMode, DEFAULT_TOP_N};
use uniweb::measurement::campaign::{
    resume_campaign, run_campaign, CampaignError, CampaignPolicy, Checkpoint,
};
use uniweb::measurement::snapshot::{read_snapshots, write_snapshot_csv};
use uniweb::measurement::{
    emulated_queries, waves_from_labels, MeasurementSource, MissingPolicy, ReplaySource, Snapshot,
    StubSource, SyntheticConfig, SyntheticSource, Wave,
};
use uniweb::registry::{load_registry, Registry, RegistryFormat};
use uniweb::report::export::write_report;
use uniweb::report::manifest::RunManifest;
use uniweb::report::{build_report, ReportOptions};

#[derive(Parser)]
#[command(
    name = "uniweb",
    version,
    about = "Webometric indicators for university web systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a registry and print the admission report.
    Ingest(IngestArgs),
    /// Measure every wave against a source and write snapshot files.
    Run(RunArgs),
    /// Compute indicators, aggregates and analyses from snapshots.
    Report(ReportArgs),
    /// Generate a synthetic system (registry and snapshots).
    Synth(SynthArgs),
}

#[derive(Args)]
struct RegistryArgs {
    #[arg(long)]
    registry: PathBuf,
    /// csv or json; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<RegistryFormat>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    registry: RegistryArgs,
    /// Also write admission.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Required except with a synthetic source, which brings its own.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    format: Option<RegistryFormat>,
    /// replay:<snapshot dir or file>, synthetic:<config.json> or stub.
    #[arg(long)]
    source: String,
    /// Comma-separated wave labels (YYYY-MM), strictly increasing.
    #[arg(long, value_delimiter = ',')]
    waves: Vec<String>,
    /// URLs per second across all workers.
    #[arg(long)]
    rate_limit: Option<f64>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// error or zero-with-flag, for URLs a replay source has no data for.
    #[arg(long, default_value = "zero-with-flag")]
    missing_policy: MissingPolicy,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalysisArgs {
    /// Comma-separated top-N thresholds.
    #[arg(long, value_delimiter = ',')]
    top_n: Vec<usize>,
    /// Entity ids left out of correlations and PCA.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
    #[arg(long, default_value = "correlation")]
    pca_mode: PcaMode,
    /// Months per compounding period of the growth rate.
    #[arg(long, default_value_t = 1)]
    period_months: u32,
    /// Size of the nonzero top subset in the unit correlation.
    #[arg(long, default_value_t = 1000)]
    top_k: usize,
    #[arg(long, default_value_t = 500.0)]
    wif_threshold: f64,
    #[arg(long, default_value_t = 5.0)]
    anomaly_k: f64,
    #[arg(long, default_value_t = 10.0)]
    anomaly_floor: f64,
    /// Count multi-URL units once per wave instead of summing URL variants.
    #[arg(long)]
    dedupe: bool,
}

impl AnalysisArgs {
    fn options(&self) -> ReportOptions {
        ReportOptions {
            top_n: if self.top_n.is_empty() {
                DEFAULT_TOP_N.to_vec()
            } else {
                self.top_n.clone()
            },
            exclude: self.exclude.clone(),
            pca_mode: self.pca_mode,
            period_months: self.period_months,
            top_k: self.top_k,
            anomaly: AnomalyRule {
                k: self.anomaly_k,
                floor: self.anomaly_floor,
            },
            wif_threshold: self.wif_threshold,
            dedupe_unit_urls: self.dedupe,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    registry: RegistryArgs,
    /// Snapshot files or directories.
    #[arg(long, required = true, num_args = 1..)]
    snapshots: Vec<PathBuf>,
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit status: 1 for validation, 2 for source failures.
struct Failure {
    code: u8,
    message: String,
}

fn validation(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn source_failure(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path, format: Option<RegistryFormat>) -> Result<Registry, Failure> {
    let format = format.unwrap_or_else(|| RegistryFormat::from_path(path));
    let registry = load_registry(path, format).map_err(validation)?;
    if registry.universities().is_empty() {
        warn!("registry {} is empty", path.display());
    }
    Ok(registry)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| validation(format!("{}: {e}", path.display())))
}

fn ingest(args: IngestArgs) -> Result<(), Failure> {
    let registry = load(&args.registry.registry, args.registry.format)?;
    let mut stdout = std::io::stdout().lock();
    let s = registry.summary();
    let mut lines = Vec::new();
    for e in registry.admission_log() {
        lines.push(format!(
            "{} row {} {} {} ({})",
            if e.admitted { "admitted" } else { "rejected" },
            e.row,
            e.owner,
            e.url,
            e.rule.as_str()
        ));
    }
    let summary = format!(
        "{} universities, {} units, {} URLs admitted, {} rejected",
        s.universities, s.units, s.admitted_urls, s.rejected_urls
    );
    for l in &lines {
        let _ = writeln!(stdout, "{l}");
    }
    if s.excluded_units > 0 {
        let _ = writeln!(
            stdout,
            "{} units excluded (no admitted URL)",
            s.excluded_units
        );
    }
    let _ = writeln!(stdout, "{summary}");
    if let Some(out) = args.out {
        fs::create_dir_all(&out).map_err(validation)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "owner", "url", "admitted", "rule"])
            .map_err(validation)?;
        for e in registry.admission_log() {
            w.write_record([
                e.row.to_string(),
                e.owner.clone(),
                e.url.clone(),
                e.admitted.to_string(),
                e.rule.as_str().to_string(),
            ])
            .map_err(validation)?;
        }
        let bytes = w.into_inner().map_err(|e| validation(e.to_string()))?;
        write_file(&out.join("admission.csv"), &bytes)?;
    }
    Ok(())
}

fn seeded_config(path: &Path) -> Result<SyntheticConfig, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| validation(format!("{}: {e}", path.display())))?;
    let mut config: SyntheticConfig =
        serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))?;
    if let Ok(seed) = std::env::var("UNIWEB_SEED") {
        config.seed = seed
            .trim()
            .parse()
            .map_err(|_| validation(format!("UNIWEB_SEED `{seed}` is not an unsigned integer")))?;
        info!("seed overridden by UNIWEB_SEED: {}", config.seed);
    }
    Ok(config)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let requested = if args.waves.is_empty() {
        None
    } else {
        Some(waves_from_labels(&args.waves).map_err(validation)?)
    };
    let (kind, rest) = args
        .source
        .split_once(':')
        .unwrap_or((args.source.as_str(), ""));
    let (source, registry, default_waves): (
        Box<dyn MeasurementSource>,
        Registry,
        Option<Vec<Wave>>,
    ) = match kind {
        "replay" => {
            let snaps = read_snapshots(&[PathBuf::from(rest)]).map_err(validation)?;
            let waves = snaps.iter().map(|s| s.wave).collect();
            let path = args
                .registry
                .as_ref()
                .ok_or_else(|| validation("--registry is required for a replay source"))?;
            let registry = load(path, args.format)?;
            (
                Box::new(ReplaySource::from_snapshots(
                    rest,
                    &snaps,
                    args.missing_policy,
                )),
                registry,
                Some(waves),
            )
        }
        "synthetic" => {
            let config = seeded_config(Path::new(rest))?;
            let (generated, source) = SyntheticSource::build(&config).map_err(validation)?;
            let waves = source.waves().to_vec();
            let registry = match &args.registry {
                Some(p) => load(p, args.format)?,
                None => generated,
            };
            (Box::new(source), registry, Some(waves))
        }
        "stub" => {
            let path = args
                .registry
                .as_ref()
                .ok_or_else(|| validation("--registry is required for the stub source"))?;
            (Box::new(StubSource), load(path, args.format)?, None)
        }
        other => {
            return Err(validation(format!(
                "unknown source kind `{other}` (expected replay, synthetic or stub)"
            )))
        }
    };
    let waves = requested
        .or(default_waves)
        .ok_or_else(|| validation("--waves is required for this source"))?;
    let policy = CampaignPolicy {
        parallelism: args.parallelism,
        rate_limit: args.rate_limit,
        retries: args.retries,
        ..Default::default()
    };

    fs::create_dir_all(&args.out).map_err(validation)?;
    let mut manifest = RunManifest::new(
        "run",
        registry.hash(),
        registry.version(),
        vec![source.identity()],
        waves.iter().map(|w| w.label.to_string()).collect(),
        serde_json::to_value(&policy).map_err(validation)?,
    );
    if args.registry.is_none() {
        let mut bytes = Vec::new();
        registry.write_csv(&mut bytes).map_err(validation)?;
        write_file(&args.out.join("registry.csv"), &bytes)?;
        manifest.record_file("registry.csv", &bytes);
    }
    for wave in &waves {
        let label = wave.label;
        let snap_name = format!("snapshot-{label}.csv");
        let snap_path = args.out.join(&snap_name);
        let checkpoint_path = args.out.join(format!("checkpoint-{label}.json"));
        let queries_name = format!("queries-{label}.txt");

        let mut queries = String::new();
        for url in uniweb::measurement::campaign::eligible_urls(&registry, wave) {
            let (size, vis) = emulated_queries(url);
            queries.push_str(&format!("{size}\n{vis}\n"));
        }
        write_file(&args.out.join(&queries_name), queries.as_bytes())?;
        manifest.record_file(&queries_name, queries.as_bytes());

        if snap_path.exists() && !checkpoint_path.exists() {
            info!("{snap_name} already present; skipping {wave}");
            let bytes = fs::read(&snap_path).map_err(validation)?;
            manifest.record_file(&snap_name, &bytes);
            continue;
        }
        let result = if checkpoint_path.exists() {
            let text = fs::read_to_string(&checkpoint_path).map_err(validation)?;
            let checkpoint: Checkpoint = serde_json::from_str(&text).map_err(validation)?;
            info!(
                "resuming {wave} with {} URLs pending",
                checkpoint.pending.len()
            );
            resume_campaign(&registry, source.as_ref(), checkpoint, &policy)
        } else {
            run_campaign(&registry, source.as_ref(), *wave, &policy)
        };
        let snapshot: Snapshot = match result {
            Ok(s) => s,
            Err(CampaignError::Aborted { checkpoint }) => {
                let text = serde_json::to_string_pretty(&checkpoint).map_err(validation)?;
                write_file(&checkpoint_path, text.as_bytes())?;
                manifest.write(&args.out).map_err(validation)?;
                return Err(source_failure(format!(
                    "{}; checkpoint written to {} (rerun the same command to resume)",
                    CampaignError::Aborted { checkpoint },
                    checkpoint_path.display()
                )));
            }
            Err(e) => return Err(validation(e)),
        };
        if !snapshot.is_complete() {
            warn!(
                "{wave}: {} URLs recorded as missing",
                snapshot.missing.len()
            );
        }
        let mut bytes = Vec::new();
        write_snapshot_csv(&snapshot, &mut bytes).map_err(validation)?;
        write_file(&snap_path, &bytes)?;
        manifest.record_file(&snap_name, &bytes);
        if checkpoint_path.exists() {
            fs::remove_file(&checkpoint_path).map_err(validation)?;
        }
    }
    manifest.write(&args.out).map_err(validation)?;
    println!(
        "{} snapshot files written to {}",
        waves.len(),
        args.out.display()
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let registry = load(&args.registry.registry, args.registry.format)?;
    let snapshots = read_snapshots(&args.snapshots).map_err(validation)?;
    let options = args.analysis.options();
    let report = build_report(&registry, &snapshots, &options).map_err(validation)?;
    let manifest = write_report(&report, registry.version(), &args.out).map_err(validation)?;
    println!(
        "{} files written to {} (run {})",
        manifest.files.len(),
        args.out.display(),
        &manifest.run_hash[..12]
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    let config = seeded_config(&args.config)?;
    let (registry, snapshots) =
        uniweb::measurement::generate_synthetic_system(&config).map_err(validation)?;
    fs::create_dir_all(&args.out).map_err(validation)?;
    let mut manifest = RunManifest::new(
        "synth",
        registry.hash(),
        registry.version(),
        vec![format!("synthetic:seed={}", config.seed)],
        snapshots.iter().map(|s| s.wave.label.to_string()).collect(),
        serde_json::to_value(&config).map_err(validation)?,
    );
    let mut bytes = Vec::new();
    registry.write_csv(&mut bytes).map_err(validation)?;
    write_file(&args.out.join("registry.csv"), &bytes)?;
    manifest.record_file("registry.csv", &bytes);
    for s in &snapshots {
        let name = format!("snapshot-{}.csv", s.wave.label);
        let mut bytes = Vec::new();
        write_snapshot_csv(s, &mut bytes).map_err(validation)?;
        write_file(&args.out.join(&name), &bytes)?;
        manifest.record_file(&name, &bytes);
    }
    manifest.write(&args.out).map_err(validation)?;
    let summary = registry.summary();
    println!(
        "{} universities, {} units, {} waves written to {}",
        summary.universities,
        summary.units,
        snapshots.len(),
        args.out.display()
    );
    Ok(())
}
