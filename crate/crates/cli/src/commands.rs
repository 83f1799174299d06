//! Subcommand implementations, kept separate from argument parsing so tests
//! can drive them directly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use mdp_lab::{run_experiment, AggregateCurves, Analysis, PolicyKind};

use crate::error::CliError;
use crate::spec::ExperimentSpec;
use crate::svg;

pub const CSV_HEADER: [&str; 6] = [
    "t",
    "policy",
    "mean_regret",
    "variance",
    "ci_low",
    "ci_high",
];

/// Aggregated regret curves for one labelled run.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub label: String,
    pub curves: AggregateCurves,
}

/// Files written by `simulate` or `robustness`.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub sets: Vec<CurveSet>,
}

/// Human-readable solution of the spec's model: gain, bias, optimal action
/// sets, greedy policy and loss table. States and actions print one-based.
pub fn solve_report(spec: &ExperimentSpec) -> Result<String, CliError> {
    let model = spec.model()?;
    let analysis = Analysis::new(&model)?;
    let mut out = String::new();
    let _ = writeln!(out, "model: {} ({} states)", spec.name, model.num_states());
    let _ = writeln!(out, "gain: {:.10}", analysis.solution.gain);
    let bias: Vec<String> = analysis
        .solution
        .bias
        .iter()
        .map(|v| format!("{v:.10}"))
        .collect();
    let _ = writeln!(out, "bias: [{}]", bias.join(", "));
    let _ = writeln!(out, "optimal action sets:");
    for (x, set) in analysis.optimal.iter().enumerate() {
        let names: Vec<String> = set.iter().map(|a| format!("a{}", a + 1)).collect();
        let _ = writeln!(out, "  x{}: {{{}}}", x + 1, names.join(", "));
    }
    let policy: Vec<String> = analysis
        .greedy_policy()
        .actions()
        .iter()
        .map(|a| format!("a{}", a + 1))
        .collect();
    let _ = writeln!(out, "optimal policy: ({})", policy.join(", "));
    let _ = writeln!(out, "losses (delta):");
    for (x, row) in analysis.deltas.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(a, d)| format!("a{}={d:.10}", a + 1))
            .collect();
        let _ = writeln!(out, "  x{}: {}", x + 1, cells.join("  "));
    }
    Ok(out)
}

fn run_sets(spec: &ExperimentSpec, rigged: bool, suffix: &str) -> Result<Vec<CurveSet>, CliError> {
    spec.policies
        .iter()
        .map(|&policy| {
            let cfg = spec.sim_config(policy, rigged)?;
            Ok(CurveSet {
                label: format!("{}{suffix}", policy.name()),
                curves: run_experiment(&cfg)?,
            })
        })
        .collect()
}

/// Clean runs of every listed policy.
pub fn simulate_sets(spec: &ExperimentSpec) -> Result<Vec<CurveSet>, CliError> {
    run_sets(spec, false, "")
}

/// Runs with the rigged prior preloaded. When `paired`, each policy's clean
/// curve is emitted first and the rigged one is labelled `<policy>-rigged`.
pub fn robustness_sets(spec: &ExperimentSpec, paired: bool) -> Result<Vec<CurveSet>, CliError> {
    if spec.rigged_prior.is_none() {
        return Err(CliError::Validation(
            "robustness requires a [rigged_prior] block".into(),
        ));
    }
    if !paired {
        return run_sets(spec, true, "");
    }
    let clean = run_sets(spec, false, "")?;
    let rigged = run_sets(spec, true, "-rigged")?;
    Ok(clean
        .into_iter()
        .zip(rigged)
        .flat_map(|(c, r)| [c, r])
        .collect())
}

/// Serializes curves to CSV, one row per (policy, t), policies in order.
pub fn write_csv<W: std::io::Write>(sets: &[CurveSet], sink: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for set in sets {
        let c = &set.curves;
        for t in 1..=c.horizon() {
            w.write_record([
                t.to_string(),
                set.label.clone(),
                c.mean[t - 1].to_string(),
                c.variance[t - 1].to_string(),
                c.ci_low(t).to_string(),
                c.ci_high(t).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_outputs(
    sets: Vec<CurveSet>,
    dir: &Path,
    stem: &str,
    title: &str,
    log_x: bool,
) -> Result<Outputs, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let svg_path = dir.join(format!("{stem}.svg"));
    let file = fs::File::create(&csv_path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", csv_path.display())))?;
    write_csv(&sets, std::io::BufWriter::new(file))?;
    let mut f = fs::File::create(&svg_path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", svg_path.display())))?;
    f.write_all(svg::render(&sets, title, log_x).as_bytes())?;
    Ok(Outputs {
        csv: csv_path,
        svg: svg_path,
        sets,
    })
}

pub fn cmd_simulate(spec: &ExperimentSpec, log_x: bool) -> Result<Outputs, CliError> {
    let sets = simulate_sets(spec)?;
    write_outputs(
        sets,
        &spec.output.dir,
        "simulate",
        "Average cumulative regret",
        log_x,
    )
}

pub fn cmd_robustness(
    spec: &ExperimentSpec,
    paired: bool,
    log_x: bool,
) -> Result<Outputs, CliError> {
    let sets = robustness_sets(spec, paired)?;
    write_outputs(
        sets,
        &spec.output.dir,
        "robustness",
        "Average cumulative regret, rigged prior",
        log_x,
    )
}

/// Applies command-line overrides to a loaded spec and revalidates it.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub policies: Vec<PolicyKind>,
    pub horizon: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) -> Result<(), CliError> {
        if !self.policies.is_empty() {
            spec.policies = self.policies.clone();
        }
        if let Some(h) = self.horizon {
            spec.horizon = h;
        }
        if let Some(r) = self.replications {
            spec.replications = r;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(dir) = &self.out_dir {
            spec.output.dir = dir.clone();
        }
        spec.validate()
    }
}
