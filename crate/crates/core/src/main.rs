use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tubelab::cross_section::{disk_ground_mode, project_section, upsilon};
use tubelab::pipeline::{self, Format, RunConfig, RunRecord};

#[derive(Parser)]
#[command(name = "tubelab", version, about = "Dumbbell eigenfunction asymptotics laboratory")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Opts {
    /// Run configuration (JSON); defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for records, tables, plots and the profile cache.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma separated tube radii, strictly decreasing.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Corner grading depth for every mesh.
    #[arg(long, global = true)]
    levels: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Allow radii below 0.05; left-side statements become advisory.
    #[arg(long, global = true)]
    cascade_only: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the cross-section and sphere constants.
    CrossSection,
    /// Compute (or load from cache) the profile constants.
    Profiles,
    /// Full run: profiles, sweep, verdicts and all outputs.
    Sweep,
    /// Re-evaluate the verdicts of a stored record.
    Verify {
        /// Record to check (default: <out>/record.json).
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Write CSV tables and SVG plots for a stored record.
    Report {
        #[arg(long)]
        record: Option<PathBuf>,
    },
}

fn config(o: &Opts) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(out) = &o.out {
        cfg.out_dir = out.clone();
    }
    if let Some(eps) = &o.eps {
        cfg.sweep = eps.clone();
    }
    if let Some(l) = o.levels {
        cfg.mesh.levels = l;
        cfg.profile.mesh.levels = l;
    }
    if let Some(j) = o.jobs {
        cfg.jobs = j;
    }
    cfg.cascade_only |= o.cascade_only;
    cfg.validate()?;
    Ok(cfg)
}

fn record_path(cfg: &RunConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.out_dir.join("record.json"))
}

fn load_record(path: &Path) -> Result<RunRecord> {
    pipeline::load(path).with_context(|| format!("reading record {}", path.display()))
}

fn verdict_code(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = config(&cli.opts)?;
    match cli.cmd {
        Cmd::CrossSection => {
            let m = disk_ground_mode(cfg.n, 1e-14)?;
            println!("sqrt_lambda1   {:.16e}", m.sqrt_lambda1);
            println!("lambda1        {:.16e}", m.lambda1);
            println!("norm_constant  {:.16e}", m.norm_constant);
            println!("upsilon        {:.16e}", upsilon(cfg.n));
            println!("psi1_integral  {:.16e}", project_section(|_, _| Ok(1.0), 0.0, 1.0, &m)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Profiles => {
            let rep = pipeline::run_profiles(&cfg)?;
            println!("{}", pipeline::to_json(&rep)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sweep => {
            let record = pipeline::run(&cfg)?;
            let files = pipeline::emit(&record, &cfg.out_dir, &[Format::Record, Format::Csv, Format::Svg])?;
            for e in record.sweep.iter().filter(|e| e.error.is_some()) {
                eprintln!("eps {}: {}", e.eps, e.error.as_deref().unwrap_or_default());
            }
            print!("{}", pipeline::render_verdicts(&record.verdicts));
            eprintln!("wrote {} files under {}", files.len(), cfg.out_dir.display());
            Ok(verdict_code(record.verdicts.pass))
        }
        Cmd::Verify { record } => {
            let path = record_path(&cfg, &record);
            let rec = load_record(&path)?;
            let v = pipeline::verify(&rec, &rec.config.tolerances);
            print!("{}", pipeline::render_verdicts(&v));
            Ok(verdict_code(v.pass))
        }
        Cmd::Report { record } => {
            let path = record_path(&cfg, &record);
            let rec = load_record(&path)?;
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            for f in pipeline::emit(&rec, &dir, &[Format::Csv, Format::Svg])? {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
