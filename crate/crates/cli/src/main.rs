use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gapdecomp::pipeline::{run, Analysis, OutputFormat, ReferenceGroup, RunConfig};
use gapdecomp::synth::{generate, McEstimator, RandomizedDgp, SyntheticDgp};
use gapdecomp::{Error, MediatorSet};

/// Environment variable overriding the bootstrap worker count.
const WORKERS_ENV: &str = "GAPDECOMP_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "gapdecomp", version, about = "Direct and indirect decompositions of group gaps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an analysis and emit a report.
    Run(RunArgs),
    /// Draw a synthetic dataset from a design file.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AnalysisArg {
    Oaxaca,
    Ipw,
    AteExperiment,
    Balance,
    Support,
    SynthMc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MediatorArg {
    M1,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Female,
    Male,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum McArg {
    Oaxaca,
    Ipw,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Input CSV (for synth_mc: the synthetic design TOML).
    #[arg(long)]
    data: PathBuf,
    /// Column role map (TOML).
    #[arg(long)]
    roles: Option<PathBuf>,
    #[arg(long, value_enum)]
    analysis: AnalysisArg,
    #[arg(long, value_enum, default_value = "m1")]
    mediators: MediatorArg,
    #[arg(long, value_enum, default_value = "both")]
    reference: ReferenceArg,
    /// Symmetric propensity-score trimming threshold.
    #[arg(long, default_value_t = 0.02)]
    trim: f64,
    /// Trim on Pr(G=1|X,W) only.
    #[arg(long)]
    trim_mediator_only: bool,
    /// Bootstrap replications.
    #[arg(long, default_value_t = 499)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add the controls to the Oaxaca-Blinder regressions.
    #[arg(long)]
    include_controls: bool,
    /// Histogram bins for the support analysis.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Estimator evaluated by synth_mc.
    #[arg(long, value_enum, default_value = "ipw")]
    mc_estimator: McArg,
    /// Replications for synth_mc.
    #[arg(long, default_value_t = 200)]
    mc_reps: usize,
}

#[derive(Debug, clap::Args)]
struct GenerateArgs {
    /// Design TOML.
    #[arg(long)]
    dgp: PathBuf,
    /// The design is a randomized-treatment design.
    #[arg(long)]
    randomized: bool,
    /// Overrides the seed in the design file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the matching role map here.
    #[arg(long)]
    roles_out: Option<PathBuf>,
}

fn workers_from_env() -> Result<Option<usize>, Error> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&k| k > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn config_from(args: RunArgs) -> Result<(RunConfig, Option<PathBuf>), Error> {
    let analysis = match args.analysis {
        AnalysisArg::Oaxaca => Analysis::Oaxaca,
        AnalysisArg::Ipw => Analysis::Ipw,
        AnalysisArg::AteExperiment => Analysis::AteExperiment,
        AnalysisArg::Balance => Analysis::Balance,
        AnalysisArg::Support => Analysis::Support,
        AnalysisArg::SynthMc => Analysis::SynthMc,
    };
    let mut c = RunConfig::new(analysis, args.data, args.roles);
    c.mediator_set = match args.mediators {
        MediatorArg::M1 => MediatorSet::M1,
        MediatorArg::All => MediatorSet::M1PlusM2,
    };
    c.reference_group = match args.reference {
        ReferenceArg::Female => ReferenceGroup::Female,
        ReferenceArg::Male => ReferenceGroup::Male,
        ReferenceArg::Both => ReferenceGroup::Both,
    };
    c.output_format = match args.format {
        FormatArg::Text => OutputFormat::Text,
        FormatArg::Csv => OutputFormat::Csv,
        FormatArg::Json => OutputFormat::Json,
    };
    c.mc_estimator = match args.mc_estimator {
        McArg::Oaxaca => McEstimator::OaxacaBlinder,
        McArg::Ipw => McEstimator::Ipw,
    };
    c.trim = args.trim;
    c.trim_mediator_score_only = args.trim_mediator_only;
    c.bootstrap_b = args.bootstrap;
    c.seed = args.seed;
    c.include_controls = args.include_controls;
    c.support_bins = args.bins;
    c.mc_replications = args.mc_reps;
    c.workers = workers_from_env()?;
    Ok((c, args.out))
}

fn run_command(args: RunArgs) -> Result<(), Error> {
    let (config, out) = config_from(args)?;
    let rendered = run(&config)?.render()?;
    match out {
        Some(path) => fs::write(path, rendered)?,
        None => std::io::stdout().write_all(rendered.as_bytes())?,
    }
    Ok(())
}

fn generate_command(args: GenerateArgs) -> Result<(), Error> {
    let text = fs::read_to_string(&args.dgp)?;
    let (data, roles) = if args.randomized {
        let mut dgp = RandomizedDgp::from_toml_str(&text)?;
        dgp.seed = args.seed.unwrap_or(dgp.seed);
        (dgp.generate()?, dgp.roles())
    } else {
        let mut dgp = SyntheticDgp::from_toml_str(&text)?;
        dgp.seed = args.seed.unwrap_or(dgp.seed);
        (generate(&dgp)?, dgp.roles())
    };
    data.save_csv(&args.out, &roles.missing_token)?;
    if let Some(path) = args.roles_out {
        fs::write(path, roles.to_toml_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run_command(a),
        Command::Generate(a) => generate_command(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{record}");
            ExitCode::from(2)
        }
    }
}
