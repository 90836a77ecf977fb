//! `cinf` command-line harness: signal demos, parameter sweeps and raw-file
//! filtering. Every command writes CSV plus a `manifest.json` from which the
//! run can be reproduced (`--config <out>/manifest.json`).
//!
//! Exit codes: 0 success, 1 invariant failure or runtime error, 2
//! configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cinf::adc::{AdcChain, ChainTrace};
use cinf::config::{sha256_hex, unix_now, RunConfig, RunManifest};
use cinf::demos::{run_chirp_demo, run_morph_demo, ChirpDemoResult, MorphDemoResult};
use cinf::signal::{read_raw_f64, write_raw_f64};
use cinf::sweep::{point_input, run_sweep, Variant};
use cinf::Error;

/// Rows kept in a sweep trace dump.
const SWEEP_TRACE_ROWS: usize = 1 << 16;

#[derive(Parser, Debug)]
#[command(name = "cinf", version, about = "Complementary intermittently nonlinear filtering harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file, or a manifest.json from an earlier run.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named preset: fig10, fig11, fig12, chirp, morph.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Seed for every random source (overrides the configuration).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps (default: available cores).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Also dump per-stage traces.
    #[arg(long)]
    trace: bool,
    /// Override one configuration value, e.g. `--set sweep.replicates=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Same event train through outlier-visible, resonant and pileup filters.
    DemoMorph(Common),
    /// Chirp plus outlier noise through the CAF, linear vs CAF comparison.
    DemoChirp(Common),
    /// Run the configured sweep grid.
    Sweep(Common),
    /// Apply a configured chain to a raw little-endian f64 file sampled at
    /// the experiment rate.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Input file (headerless little-endian f64).
        input: PathBuf,
        /// Chain variant: linear, clipper, clipper+caf, clipper+caf-open.
        #[arg(long, default_value = "clipper+caf", value_parser = parse_variant)]
        variant: Variant,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    [
        Variant::Linear,
        Variant::Clipper,
        Variant::ClipperCaf,
        Variant::ClipperCafOpen,
    ]
    .into_iter()
    .find(|v| v.name() == s)
    .ok_or_else(|| format!("unknown variant '{s}'"))
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Invariant(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn resolve_config(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path, c.preset.as_deref(), &c.sets)?,
        None => RunConfig::resolve(c.preset.as_deref(), None, &c.sets)?,
    };
    if let Some(seed) = c.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

/// Collects output files and finalizes the manifest.
struct Run {
    out: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(command: &str, c: &Common, cfg: &RunConfig) -> Result<Self, Failure> {
        fs::create_dir_all(&c.out)?;
        Ok(Self {
            out: c.out.clone(),
            manifest: RunManifest::new(command, cfg, unix_now())?,
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), Failure> {
        fs::write(self.out.join(name), contents)?;
        self.record(name, contents);
        Ok(())
    }

    fn record(&mut self, name: &str, contents: &[u8]) {
        self.manifest.outputs.push((name.to_string(), sha256_hex(contents)));
    }

    fn finish(mut self) -> Result<(), Failure> {
        self.manifest.finished_unix = unix_now();
        let json = self.manifest.to_json()?;
        fs::write(self.out.join("manifest.json"), json)?;
        eprintln!("wrote {}", self.out.display());
        Ok(())
    }
}

fn csv(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn demo_morph(c: &Common) -> Result<(), Failure> {
    let cfg = resolve_config(c)?;
    let mut run = Run::start("demo-morph", c, &cfg)?;
    let r = run_morph_demo(&cfg.morph)?;
    run.write("morph.csv", csv(MorphDemoResult::CSV_HEADER, r.csv_rows()).as_bytes())?;
    println!("trace,excess_kurtosis,signal_excess_kurtosis");
    for (k, name) in ["visible", "resonant", "pileup"].iter().enumerate() {
        println!("{name},{:.4},{:.4}", r.kurtosis[k], r.signal_kurtosis[k]);
    }
    run.finish()
}

fn demo_chirp(c: &Common) -> Result<(), Failure> {
    let cfg = resolve_config(c)?;
    let mut run = Run::start("demo-chirp", c, &cfg)?;
    let r = run_chirp_demo(&cfg.chirp)?;
    run.write("chirp.csv", csv(ChirpDemoResult::CSV_HEADER, r.csv_rows()).as_bytes())?;
    let summary = format!(
        "snr_linear_db,snr_caf_db,gain_db,blanking_duty,group_delay_samples\n{},{},{},{},{}\n",
        r.snr_linear_db,
        r.snr_caf_db,
        r.snr_caf_db - r.snr_linear_db,
        r.blanking_duty,
        r.group_delay
    );
    run.write("chirp_summary.csv", summary.as_bytes())?;
    println!(
        "linear SNR {:.2} dB, CAF SNR {:.2} dB (gain {:+.2} dB), blanking duty {:.4}",
        r.snr_linear_db,
        r.snr_caf_db,
        r.snr_caf_db - r.snr_linear_db,
        r.blanking_duty
    );
    run.finish()
}

fn sweep(c: &Common) -> Result<(), Failure> {
    let cfg = resolve_config(c)?;
    let workers = c
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut run = Run::start("sweep", c, &cfg)?;
    let points = cfg.sweep.points();
    eprintln!(
        "sweep '{}': {} points on {workers} worker(s)",
        cfg.sweep.scenario,
        points.len()
    );
    let result = run_sweep(&cfg.experiment, &cfg.sweep, workers)?;
    run.write("sweep.csv", result.to_csv().as_bytes())?;
    run.write("summary.csv", result.summary_csv().as_bytes())?;
    if c.trace {
        if let Some(p) = points.first() {
            let input = point_input(&cfg.experiment, p)?;
            let mut chain = AdcChain::new(cfg.experiment.chain(Variant::ClipperCaf)?)?;
            let out = chain.process(&input.noisy, true)?;
            let trace = out.trace.unwrap_or_default();
            let rows = trace.rows().take(SWEEP_TRACE_ROWS);
            run.write("trace.csv", csv(ChainTrace::CSV_HEADER, rows).as_bytes())?;
        }
    }
    let mut problems: Vec<String> = result
        .failures
        .iter()
        .map(|f| format!("point {:?} failed: {}", f.point, f.message))
        .collect();
    problems.extend(result.invariant_violations());
    if !problems.is_empty() {
        run.finish()?;
        return Err(Failure::Invariant(problems.join("\n")));
    }
    eprintln!("{} records", result.records.len());
    run.finish()
}

fn filter(c: &Common, input: &Path, variant: Variant) -> Result<(), Failure> {
    let cfg = resolve_config(c)?;
    let fs_in = cfg.experiment.sample_rate();
    let signal = read_raw_f64(input, fs_in).map_err(|e| Failure::Config(e.to_string()))?;
    let out_path = c.out.join("filtered.f64");
    if out_path.exists() && fs::canonicalize(&out_path)? == fs::canonicalize(input)? {
        return Err(Failure::Config("output would overwrite the input file".into()));
    }
    let mut run = Run::start(&format!("filter --variant {}", variant.name()), c, &cfg)?;
    let mut chain = AdcChain::new(cfg.experiment.chain(variant)?)?;
    let out = chain.process(&signal, c.trace)?;
    write_raw_f64(&out_path, &out.output)?;
    let bytes = fs::read(&out_path)?;
    run.record("filtered.f64", &bytes);
    if let Some(trace) = &out.trace {
        run.write("trace.csv", csv(ChainTrace::CSV_HEADER, trace.rows()).as_bytes())?;
    }
    println!(
        "{} samples in, {} out at {} (clip events {}, blanking duty {:.4})",
        signal.len(),
        out.output.len(),
        out.output.sample_rate(),
        out.clip_events.len(),
        out.blanking_duty
    );
    run.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::DemoMorph(c) => demo_morph(c),
        Command::DemoChirp(c) => demo_chirp(c),
        Command::Sweep(c) => sweep(c),
        Command::Filter {
            common,
            input,
            variant,
        } => filter(common, input, *variant),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant(m)) => {
            eprintln!("invariant failure:\n{m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
