use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mdp_lab::PolicyKind;
use mdp_lab_cli::{
    cmd_robustness, cmd_simulate, solve_report, CliError, ExperimentSpec, Overrides, PAPER_EXAMPLE,
};

#[derive(Parser)]
#[command(
    name = "mdplab",
    version,
    about = "Adaptive control experiments for finite MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimality equations of the spec's model and print a report.
    Solve(Common),
    /// Run clean experiments and write CSV and SVG regret curves.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Plot t on a logarithmic axis.
        #[arg(long)]
        log_x: bool,
    },
    /// Run experiments with the rigged prior preloaded.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log_x: bool,
        /// Also run clean experiments and emit both curves per policy.
        #[arg(long)]
        paired: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Spec file path or preset name.
    #[arg(default_value = PAPER_EXAMPLE)]
    spec: String,
    /// Policies to run (repeatable or comma separated); overrides the spec.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<PolicyKind>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Print the resolved spec as TOML and exit.
    #[arg(long)]
    dump_spec: bool,
}

impl Common {
    fn resolve(&self) -> Result<Option<ExperimentSpec>, CliError> {
        let mut spec = ExperimentSpec::load(&self.spec)?;
        Overrides {
            policies: self.policy.clone(),
            horizon: self.horizon,
            replications: self.reps,
            seed: self.seed,
            out_dir: self.out_dir.clone(),
        }
        .apply(&mut spec)?;
        if self.dump_spec {
            print!("{}", spec.to_toml());
            return Ok(None);
        }
        Ok(Some(spec))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(common) => {
            if let Some(spec) = common.resolve()? {
                print!("{}", solve_report(&spec)?);
            }
        }
        Command::Simulate { common, log_x } => {
            if let Some(spec) = common.resolve()? {
                let out = cmd_simulate(&spec, log_x)?;
                summarize(&out);
            }
        }
        Command::Robustness {
            common,
            log_x,
            paired,
        } => {
            if let Some(spec) = common.resolve()? {
                let out = cmd_robustness(&spec, paired, log_x)?;
                summarize(&out);
            }
        }
    }
    Ok(())
}

fn summarize(out: &mdp_lab_cli::Outputs) {
    for set in &out.sets {
        let c = &set.curves;
        let t = c.horizon();
        println!(
            "{:<12} R({t}) = {:.3} +/- {:.3}",
            set.label,
            c.final_mean(),
            c.ci_half_width[t - 1]
        );
    }
    println!("wrote {}", out.csv.display());
    println!("wrote {}", out.svg.display());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
