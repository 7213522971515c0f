use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use btba::config::{Profile, SimulationConfig, DEFAULT_CONFIG_TOML};
use btba::diagnostics::{SummaryOptions, VarianceKind};
use btba::orchestration::{
    diagnose, load_reports, read_estimates, read_truths, run_grid, verdict_table, write_reports,
    RunOptions,
};
use btba::plots::{boxplot_reports, ridge_panel_estimates, ridge_panel_zstar, FacetBy, PanelLayout};
use btba::{Error, Result};

#[derive(Parser)]
#[command(name = "btba", version, about = "Bias-acceptance simulations for latent growth models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Ci,
    Local,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    RidgelineEst,
    RidgelineZstar,
    Boxplot,
}

#[derive(Clone, Copy, ValueEnum)]
enum FacetArg {
    DataCondition,
    Rho,
    None,
}

#[derive(Subcommand)]
enum Command {
    /// Run the condition grid and write records, reports, tables and plots.
    Simulate {
        /// TOML config; the shipped default is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Base seed. BTBA_SEED takes precedence when set.
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
        /// Replication preset (ci = 200, local = 1000, full = 5000).
        #[arg(long, value_enum)]
        profile: Option<ProfileArg>,
        /// Explicit replication count; overrides the profile.
        #[arg(long)]
        replications: Option<usize>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_plots: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate estimates produced by other software.
    Diagnose {
        /// CSV with condition_id, replication_id, converged, estimate.
        #[arg(long)]
        estimates: PathBuf,
        /// CSV with condition_id, truth.
        #[arg(long)]
        truths: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the R − 1 denominator for the variance of Z*.
        #[arg(long)]
        sample_variance: bool,
    },
    /// Draw an SVG from a directory of reports.
    Plot {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "data-condition")]
        facet: FacetArg,
        /// Keep only conditions with this population value.
        #[arg(long)]
        rho: Option<f64>,
        /// Also write the density curves as CSV.
        #[arg(long)]
        density_csv: Option<PathBuf>,
        #[arg(long)]
        show_mode: bool,
    },
    /// Print the verdict table for a directory of reports.
    Verdict {
        #[arg(long)]
        reports: PathBuf,
        /// Print CSV instead of aligned text.
        #[arg(long)]
        csv: bool,
    },
    /// Print the shipped default configuration.
    DefaultConfig,
}

fn seed_from_env(cli_seed: u64) -> Result<u64> {
    match std::env::var("BTBA_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("BTBA_SEED={s:?} is not an unsigned integer"))),
        Err(_) => Ok(cli_seed),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            profile,
            replications,
            jobs,
            out,
            no_plots,
            quiet,
        } => {
            let config = match config {
                Some(path) => SimulationConfig::load(&path)?,
                None => SimulationConfig::from_toml_str(DEFAULT_CONFIG_TOML)?,
            };
            let profile = profile.map(|p| match p {
                ProfileArg::Ci => Profile::Ci,
                ProfileArg::Local => Profile::Local,
                ProfileArg::Full => Profile::Full,
            });
            let reps = replications
                .or(profile.map(Profile::replications))
                .unwrap_or(config.design.replications);
            let mut options = RunOptions::new(seed_from_env(seed)?, reps);
            options.profile = profile;
            options.jobs = jobs;
            options.plots = !no_plots;
            options.progress = !quiet;
            let output = run_grid(&config, &options, &out)?;
            if !quiet {
                eprintln!(
                    "{} conditions ({} computed, {} reused) written to {}",
                    output.reports.len(),
                    output.computed,
                    output.reused,
                    out.display()
                );
            }
            print!("{}", output.table.to_text());
        }
        Command::Diagnose {
            estimates,
            truths,
            out,
            sample_variance,
        } => {
            let est = read_estimates(&estimates)?;
            let truths = read_truths(&truths)?;
            let options = SummaryOptions {
                variance_kind: if sample_variance { VarianceKind::Sample } else { VarianceKind::Population },
                ..SummaryOptions::default()
            };
            let reports = diagnose(&est, &truths, &options)?;
            fs::create_dir_all(&out)?;
            write_reports(&out, &reports)?;
            for r in &reports {
                println!(
                    "{}: R = {}, M = {:.3}, V = {:.3}, {}",
                    r.condition_id, r.replications, r.zstar_mean, r.zstar_var, r.verdict.verdict
                );
            }
            if let Ok(table) = verdict_table(&reports) {
                fs::write(out.join("verdict_table.csv"), table.to_csv()?)?;
                fs::write(out.join("verdict_table.txt"), table.to_text())?;
            }
        }
        Command::Plot {
            reports,
            kind,
            out,
            facet,
            rho,
            density_csv,
            show_mode,
        } => {
            let mut reports = load_reports(&reports)?;
            if let Some(rho) = rho {
                reports.retain(|r| r.truth == rho);
            }
            let layout = PanelLayout {
                facet_by: match facet {
                    FacetArg::DataCondition => FacetBy::DataCondition,
                    FacetArg::Rho => FacetBy::Rho,
                    FacetArg::None => FacetBy::None,
                },
                show_mode,
                ..PanelLayout::default()
            };
            let (svg, csv) = match kind {
                PlotKind::RidgelineEst => {
                    let p = ridge_panel_estimates(&reports, &layout)?;
                    (p.to_svg(&layout), Some(p.density_csv()))
                }
                PlotKind::RidgelineZstar => {
                    let p = ridge_panel_zstar(&reports, &layout)?;
                    (p.to_svg(&layout), Some(p.density_csv()))
                }
                PlotKind::Boxplot => (boxplot_reports(&reports, &layout)?, None),
            };
            fs::write(&out, svg)?;
            if let (Some(path), Some(csv)) = (density_csv, csv) {
                fs::write(path, csv)?;
            }
        }
        Command::Verdict { reports, csv } => {
            let reports = load_reports(&reports)?;
            let table = verdict_table(&reports)?;
            if csv {
                print!("{}", table.to_csv()?);
            } else {
                print!("{}", table.to_text());
            }
        }
        Command::DefaultConfig => print!("{DEFAULT_CONFIG_TOML}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
