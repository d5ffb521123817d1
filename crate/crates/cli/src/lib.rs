//! Experiment driver behind the `pmbpqm` binary.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use thiserror::Error;

pub mod experiments;
pub mod output;

use experiments::{Experiment, Family, Method, Outcome, SweepSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pmbpqm::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for usage errors, 3 for resource caps, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Core(pmbpqm::Error::Contract(_)) => 2,
            Self::Core(pmbpqm::Error::ResourceCap { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    Fg5,
    Fg7,
    Lemma3q,
    De,
    Decode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Full,
    Ci,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pmbpqm,
    PmbpqmMc,
    Helstrom,
    Lg,
}

#[derive(Clone, Debug, Parser)]
#[command(
    name = "pmbpqm",
    version,
    about = "Paired-measurement BPQM experiments"
)]
pub struct Args {
    #[arg(long, value_enum)]
    pub experiment: ExperimentArg,
    #[arg(long, default_value_t = 0.0)]
    pub theta_min: f64,
    #[arg(long, default_value_t = FRAC_PI_2)]
    pub theta_max: f64,
    /// Defaults to 50 for graph sweeps and 9 for density evolution.
    #[arg(long)]
    pub theta_steps: Option<usize>,
    /// Bit-flip probabilities applied to pure-state outputs.
    #[arg(long, value_delimiter = ',', conflicts_with = "q_list")]
    pub p_list: Option<Vec<f64>>,
    /// Depolarizing weights `q` instead of flip probabilities.
    #[arg(long, value_delimiter = ',')]
    pub q_list: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    pub dv: usize,
    #[arg(long, default_value_t = 6)]
    pub dc: usize,
    /// Population size; defaults from the profile.
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Iterations; defaults from the profile.
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub bisect_steps: usize,
    /// Holevo-curve rates; defaults to the ensemble design rate.
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Profile::Full)]
    pub profile: Profile,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output file; for `de`, a path stem for `_threshold.csv`, `_holevo.csv` and `.svg`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON factor graph for `decode`.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Pmbpqm, MethodArg::Helstrom, MethodArg::Lg])]
    pub methods: Vec<MethodArg>,
    /// Monte-Carlo trials for `pmbpqm-mc`.
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
}

impl Args {
    pub fn to_spec(&self) -> Result<SweepSpec, CliError> {
        let experiment = match self.experiment {
            ExperimentArg::Fg5 => Experiment::Fg5,
            ExperimentArg::Fg7 => Experiment::Fg7,
            ExperimentArg::Lemma3q => Experiment::Lemma3q,
            ExperimentArg::De => Experiment::De,
            ExperimentArg::Decode => Experiment::Decode,
        };
        let steps = self
            .theta_steps
            .unwrap_or(if experiment == Experiment::De { 9 } else { 50 });
        let (family, noise) = match (&self.q_list, &self.p_list) {
            (Some(q), _) => (Family::Depolarized, q.clone()),
            (None, Some(p)) => (Family::Flip, p.clone()),
            (None, None) => (Family::Flip, vec![0.0, 0.1, 0.2]),
        };
        let (m, n) = match self.profile {
            Profile::Full => (5000, 100),
            Profile::Ci => (1000, 50),
        };
        Ok(SweepSpec {
            experiment,
            thetas: SweepSpec::theta_grid(self.theta_min, self.theta_max, steps)?,
            family,
            noise,
            methods: self
                .methods
                .iter()
                .map(|m| match m {
                    MethodArg::Pmbpqm => Method::Pmbpqm,
                    MethodArg::PmbpqmMc => Method::PmbpqmMc,
                    MethodArg::Helstrom => Method::Helstrom,
                    MethodArg::Lg => Method::Lg,
                })
                .collect(),
            dv: self.dv,
            dc: self.dc,
            m: self.m.unwrap_or(m),
            n: self.n.unwrap_or(n),
            bisect_steps: self.bisect_steps,
            rates: self.rates.clone().unwrap_or_default(),
            trials: self.trials,
            seed: self.seed,
            threads: self.threads,
            graph: self.graph.clone(),
        })
    }
}

fn stem_with(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Runs the experiment on a pool of `args.threads` workers and writes its output.
/// Returns what should go to standard output.
pub fn execute(args: &Args) -> Result<String, CliError> {
    let spec = args.to_spec()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let outcome: Outcome = pool.install(|| experiments::run(&spec))?;
    let mut stdout = outcome.report.clone().unwrap_or_default();
    match (&args.out, outcome.tables.as_slice()) {
        (Some(path), [(_, table)]) => std::fs::write(path, table.to_csv()?)?,
        (Some(stem), tables) => {
            for (name, table) in tables {
                std::fs::write(stem_with(stem, &format!("_{name}.csv")), table.to_csv()?)?;
            }
            if let Some(svg) = &outcome.svg {
                std::fs::write(stem_with(stem, ".svg"), svg)?;
            }
        }
        (None, tables) => {
            if outcome.report.is_none() {
                for (_, table) in tables {
                    stdout += &table.to_csv()?;
                }
            }
        }
    }
    Ok(stdout)
}
