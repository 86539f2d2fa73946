use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use vmsched::estimator::{estimate_completion_time, min_slots, JobTimingModel};
use vmsched::metrics::{
    compare, emit_report, render_report, run_experiment, write_json, Matrix, ReportFormat, SimReport,
};
use vmsched::model::{ShuffleModel, SimConfig};
use vmsched::sim;
use vmsched::workload::{ProfileSet, Workload};

/// Deadline-driven MapReduce scheduling on a simulated virtual cluster.
#[derive(Parser)]
#[command(name = "vmsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one workload under one scheduler.
    Run {
        /// Cluster configuration (TOML). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Job profile file (TOML). The shipped profiles apply when omitted.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Preset name (paper-sweep, table2) or workload trace file.
        #[arg(long)]
        workload: String,
        #[arg(long, value_parser = ["ct", "fair", "fifo"])]
        scheduler: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the event trace.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long)]
        shuffle_model: Option<ShuffleModel>,
        /// Report format printed to stdout: table, csv or jsonl.
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Run a scheduler x workload x seed matrix.
    Sweep {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relative differences of report A against report B.
    Compare { report_a: PathBuf, report_b: PathBuf },
    /// Minimum map and reduce slots for a job to meet its deadline.
    Estimate {
        #[arg(long)]
        um: u32,
        #[arg(long)]
        tm: f64,
        #[arg(long)]
        vr: u32,
        #[arg(long)]
        tr: f64,
        #[arg(long)]
        ts: f64,
        #[arg(long)]
        deadline: f64,
    },
}

/// Problems with what the user asked for, as opposed to failures while
/// running it.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { config, profiles, workload, scheduler, seed, out, trace, jitter, shuffle_model, format } => {
            let format: ReportFormat = format.parse().map_err(|e: vmsched::metrics::ReportError| Usage(e.to_string()))?;
            let mut cfg = match config {
                Some(p) => SimConfig::load(&p)?,
                None => SimConfig::default(),
            };
            if let Some(j) = jitter {
                cfg.options.jitter = j;
            }
            if let Some(m) = shuffle_model {
                cfg.options.shuffle_model = m;
            }
            cfg.validate().map_err(|e| Usage(e.to_string()))?;
            let profiles = load_profiles(profiles.as_deref())?;
            let w = Workload::resolve(&workload, seed, &profiles, &cfg.cluster)?;
            let outcome = sim::run(&cfg, &w, &profiles, &scheduler, seed)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_all(&outcome.report, &out)?;
            if trace {
                let path = out.join("trace.tsv");
                std::fs::write(&path, outcome.trace.to_tsv()).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{}", render_report(&outcome.report, format));
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { matrix, parallel, out } => {
            if parallel == 0 {
                return Err(Usage("--parallel must be at least 1".into()).into());
            }
            let m = Matrix::load(&matrix)?;
            let cells = run_experiment(&m, parallel)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut summary = String::from(
                "policy,workload,seed,status,makespan,throughput,mean_completion_time,deadline_misses,map_locality_rate,core_moves,fallback_fraction\n",
            );
            let mut failed = 0;
            for c in &cells {
                let e = &c.entry;
                match &c.report {
                    Ok(r) => {
                        let dir = out.join(e.label());
                        std::fs::create_dir_all(&dir)?;
                        write_all(r, &dir)?;
                        let _ = writeln!(
                            summary,
                            "{},{},{},ok,{},{},{},{},{},{},{}",
                            e.policy,
                            r.workload_id,
                            e.seed,
                            r.makespan,
                            r.throughput,
                            r.mean_completion_time,
                            r.deadline_misses,
                            r.map_locality_rate,
                            r.core_moves,
                            r.fallback_fraction
                        );
                    }
                    Err(msg) => {
                        failed += 1;
                        eprintln!("cell {} failed: {msg}", e.label());
                        let _ = writeln!(summary, "{},{},{},failed,,,,,,,", e.policy, e.workload, e.seed);
                    }
                }
            }
            std::fs::write(out.join("summary.csv"), &summary)?;
            println!("{} cells, {} failed", cells.len(), failed);
            Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Compare { report_a, report_b } => {
            let a = read_report(&report_a)?;
            let b = read_report(&report_b)?;
            print!("{}", compare(&a, &b)?.render());
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate { um, tm, vr, tr, ts, deadline } => {
            let mut model = JobTimingModel::new(tm, ts, um, vr);
            model.mean_reduce_time = tr;
            let d = min_slots(&model, deadline).map_err(|e| Usage(e.to_string()))?;
            println!("map_slots {}", d.map_slots);
            println!("reduce_slots {}", d.reduce_slots);
            println!("feasible {}", d.feasible);
            println!("continuous {:.4} {:.4}", d.continuous_map, d.continuous_reduce);
            if let Ok(t) = estimate_completion_time(&model, &d) {
                println!("estimated_completion {t:.3}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_profiles(path: Option<&Path>) -> Result<ProfileSet> {
    Ok(match path {
        Some(p) => ProfileSet::load(p)?,
        None => ProfileSet::default(),
    })
}

fn write_all(report: &SimReport, dir: &Path) -> Result<()> {
    write_json(report, &dir.join("report.json"))?;
    for f in ReportFormat::ALL {
        emit_report(report, f, &dir.join(format!("report.{}", f.extension())))?;
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<SimReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
