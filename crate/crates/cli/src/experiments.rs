//! Named experiments producing CSV tables and plots.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use rayon::prelude::*;

use pmbpqm::channel::{from_flip_family, GeneralBSCQ, QubitBSCQ};
use pmbpqm::combine::varoast;
use pmbpqm::de::{holevo_curve, threshold_curve, DEConfig};
use pmbpqm::decoder::{
    collective_helstrom, grouped_local_measurements, locally_greedy, pmbpqm_exact, pmbpqm_mc,
    TreeFactorGraph,
};
use pmbpqm::qla::CMatrix;

use crate::output::{fmt_num, line_plot, Series, Table};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Fg5,
    Fg7,
    Lemma3q,
    De,
    Decode,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fg5 => "fg5",
            Self::Fg7 => "fg7",
            Self::Lemma3q => "lemma3q",
            Self::De => "de",
            Self::Decode => "decode",
        }
    }
}

/// How the second sweep axis parameterizes the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Pure states hit by a bit flip with probability `p`.
    Flip,
    /// `(1-q)|±θ><±θ| + q I/2`.
    Depolarized,
}

impl Family {
    pub fn axis(self) -> &'static str {
        match self {
            Self::Flip => "p",
            Self::Depolarized => "q",
        }
    }

    pub fn channel(self, theta: f64, x: f64) -> pmbpqm::Result<QubitBSCQ> {
        match self {
            Self::Flip => from_flip_family(theta, x),
            Self::Depolarized => QubitBSCQ::new(theta, x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Pmbpqm,
    PmbpqmMc,
    Helstrom,
    Lg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pmbpqm => "pmbpqm",
            Self::PmbpqmMc => "pmbpqm_mc",
            Self::Helstrom => "helstrom",
            Self::Lg => "lg",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub thetas: Vec<f64>,
    pub family: Family,
    pub noise: Vec<f64>,
    pub methods: Vec<Method>,
    pub dv: usize,
    pub dc: usize,
    pub m: usize,
    pub n: usize,
    pub bisect_steps: usize,
    pub rates: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub threads: usize,
    pub graph: Option<PathBuf>,
}

impl SweepSpec {
    /// `steps` evenly spaced angles from `min` to `max`.
    pub fn theta_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>, CliError> {
        if steps == 0 {
            return Err(CliError::Usage("--theta-steps must be at least 1".into()));
        }
        if !(0.0..=FRAC_PI_2 + 1e-12).contains(&min)
            || !(0.0..=FRAC_PI_2 + 1e-12).contains(&max)
            || min > max
        {
            return Err(CliError::Usage(format!(
                "theta range [{min}, {max}] must lie within [0, pi/2]"
            )));
        }
        if steps == 1 {
            return Ok(vec![min]);
        }
        Ok((0..steps)
            .map(|i| min + (max - min) * i as f64 / (steps - 1) as f64)
            .collect())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.thetas.is_empty() {
            return Err(CliError::Usage("empty theta grid".into()));
        }
        if self.noise.is_empty() || self.noise.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(CliError::Usage(format!(
                "--{}-list values must lie in [0, 1]",
                self.family.axis()
            )));
        }
        if self.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(CliError::Usage("--rates values must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn echo(&self) -> String {
        let list = |xs: &[f64]| xs.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(";");
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        format!(
            "experiment={} theta=[{}..{}]x{} {}_list={} methods={} dv={} dc={} M={} N={} bisect_steps={} rates={} trials={} threads={} graph={}",
            self.experiment.name(),
            fmt_num(self.thetas[0]),
            fmt_num(*self.thetas.last().expect("nonempty")),
            self.thetas.len(),
            self.family.axis(),
            list(&self.noise),
            methods.join(";"),
            self.dv,
            self.dc,
            self.m,
            self.n,
            self.bisect_steps,
            list(&self.rates),
            self.trials,
            self.threads,
            self.graph.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into()),
        )
    }

    fn header(&self, table: &mut Table) {
        table.comment(format!("pmbpqm {VERSION}"));
        table.comment(self.echo());
        table.comment(format!("seed={}", self.seed));
    }

    fn grid(&self) -> Vec<(f64, f64)> {
        self.noise
            .iter()
            .flat_map(|&x| self.thetas.iter().map(move |&t| (t, x)))
            .collect()
    }
}

/// Everything an experiment emits.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<(String, Table)>,
    pub svg: Option<String>,
    pub report: Option<String>,
}

impl Outcome {
    fn single(name: &str, table: Table) -> Self {
        Self {
            tables: vec![(name.into(), table)],
            ..Self::default()
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn run(spec: &SweepSpec) -> Result<Outcome, CliError> {
    spec.validate()?;
    match spec.experiment {
        Experiment::Fg5 => Ok(Outcome::single("fg5", run_fg5(spec)?)),
        Experiment::Fg7 => Ok(Outcome::single("fg7", run_fg7(spec)?)),
        Experiment::Lemma3q => run_lemma3q(spec),
        Experiment::De => run_de(spec),
        Experiment::Decode => Ok(Outcome::single("decode", run_decode(spec)?)),
    }
}

fn sweep<F>(
    spec: &SweepSpec,
    graph: fn(QubitBSCQ) -> TreeFactorGraph,
    eval: F,
) -> Result<Vec<Vec<f64>>, CliError>
where
    F: Fn(&TreeFactorGraph) -> pmbpqm::Result<Vec<f64>> + Sync,
{
    spec.grid()
        .par_iter()
        .map(|&(theta, x)| {
            let g = graph(spec.family.channel(theta, x)?);
            let mut row = vec![theta, x];
            row.extend(eval(&g)?);
            Ok(row)
        })
        .collect::<pmbpqm::Result<_>>()
        .map_err(CliError::from)
}

/// Five-qubit graph: PMBPQM against collective Helstrom.
pub fn run_fg5(spec: &SweepSpec) -> Result<Table, CliError> {
    let rows = sweep(spec, TreeFactorGraph::five_qubit, |g| {
        let pm = pmbpqm_exact(g)?.success_prob;
        let hel = collective_helstrom(g)?.success_prob;
        Ok(vec![pm, hel, (hel - pm) / hel])
    })?;
    let mut t = Table::new(&[
        "theta",
        spec.family.axis(),
        "P_pmbpqm",
        "P_helstrom",
        "rel_diff",
    ]);
    spec.header(&mut t);
    rows.iter().for_each(|r| t.push_nums(r));
    Ok(t)
}

/// Seven-qubit graph: PMBPQM against the locally greedy decoder.
pub fn run_fg7(spec: &SweepSpec) -> Result<Table, CliError> {
    let rows = sweep(spec, TreeFactorGraph::seven_qubit, |g| {
        Ok(vec![
            pmbpqm_exact(g)?.success_prob,
            locally_greedy(g)?.success_prob,
        ])
    })?;
    let mut t = Table::new(&["theta", spec.family.axis(), "P_pmbpqm", "P_lg"]);
    spec.header(&mut t);
    rows.iter().for_each(|r| t.push_nums(r));
    Ok(t)
}

/// The three-qubit repetition instance: root and one leaf through `W`, one leaf through `W'`.
pub fn three_qubit_channels() -> (QubitBSCQ, QubitBSCQ) {
    let build = |off: f64| {
        GeneralBSCQ::new(
            CMatrix::from_real_rows(&[&[2.0 / 3.0, off], &[off, 1.0 / 3.0]]),
            CMatrix::pauli_x(),
        )
        .and_then(|w| w.canonicalize())
        .expect("valid instance channel")
    };
    (build(1.0 / 6.0), build(1.0 / 8.0))
}

pub fn run_lemma3q(spec: &SweepSpec) -> Result<Outcome, CliError> {
    let (w, w2) = three_qubit_channels();
    let g = TreeFactorGraph::three_qubit_repetition(w, w2);
    let helstrom = collective_helstrom(&g)?.success_prob;
    let pm = pmbpqm_exact(&g)?.success_prob;
    let groupings =
        grouped_local_measurements(&varoast(&w.to_general(), &w2.to_general()), &w.to_general())?;
    let mut t = Table::new(&["quantity", "success"]);
    spec.header(&mut t);
    t.push(vec!["P_H".into(), fmt_num(helstrom)]);
    for gr in &groupings {
        t.push(vec![format!("grouping {}", gr.label), fmt_num(gr.success)]);
    }
    t.push(vec!["P_pmbpqm".into(), fmt_num(pm)]);
    let best = groupings.iter().map(|g| g.success).fold(f64::MIN, f64::max);
    let mut report = format!("P_H = {}\n", fmt_num(helstrom));
    for gr in &groupings {
        report += &format!("P[{}] = {}\n", gr.label, fmt_num(gr.success));
    }
    report += &format!(
        "P_LM = {}  (gap P_H - P_LM = {})\n",
        fmt_num(best),
        fmt_num(helstrom - best)
    );
    report += &format!("P_pmbpqm = {}\n", fmt_num(pm));
    Ok(Outcome {
        tables: vec![("lemma3q".into(), t)],
        svg: None,
        report: Some(report),
    })
}

pub fn run_de(spec: &SweepSpec) -> Result<Outcome, CliError> {
    let cfg = DEConfig {
        dv: spec.dv,
        dc: spec.dc,
        m: spec.m,
        n: spec.n,
        success_eps: 1e-3,
        bisect_steps: spec.bisect_steps,
        base_channel: QubitBSCQ::PERFECT,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let curve = threshold_curve(&cfg, &spec.thetas, spec.seed)?;
    let rates = if spec.rates.is_empty() {
        vec![cfg.rate()]
    } else {
        spec.rates.clone()
    };

    let mut thresholds = Table::new(&[
        "theta",
        "q_threshold",
        "p_threshold",
        "dv",
        "dc",
        "M",
        "N",
        "seed",
    ]);
    spec.header(&mut thresholds);
    for p in &curve {
        thresholds.push(vec![
            fmt_num(p.theta),
            fmt_num(p.q_threshold),
            fmt_num(p.p_threshold),
            p.dv.to_string(),
            p.dc.to_string(),
            p.m.to_string(),
            p.n.to_string(),
            p.seed.to_string(),
        ]);
    }

    let mut holevo = Table::new(&["theta", "q_bound", "rate"]);
    spec.header(&mut holevo);
    let mut series = vec![Series {
        label: format!("PMBPQM ({},{})", cfg.dv, cfg.dc),
        points: curve.iter().map(|p| (p.theta, p.p_threshold)).collect(),
        dashed: false,
    }];
    for &rate in &rates {
        let bound = holevo_curve(rate, &spec.thetas)?;
        for b in &bound {
            holevo.push_nums(&[b.theta, b.q_bound, b.rate]);
        }
        series.push(Series {
            label: format!("Holevo rate {}", fmt_num(rate)),
            points: bound.iter().map(|b| (b.theta, b.q_bound / 2.0)).collect(),
            dashed: true,
        });
    }
    let svg = line_plot("Noise thresholds", "theta", "p = q/2", &series);
    Ok(Outcome {
        tables: vec![("threshold".into(), thresholds), ("holevo".into(), holevo)],
        svg: Some(svg),
        report: None,
    })
}

/// Decodes a JSON factor graph with the selected methods.
pub fn run_decode(spec: &SweepSpec) -> Result<Table, CliError> {
    let path = spec
        .graph
        .as_ref()
        .ok_or_else(|| CliError::Usage("--graph is required for the decode experiment".into()))?;
    let text = std::fs::read_to_string(path)?;
    let g = TreeFactorGraph::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut t = Table::new(&["method", "success_prob", "branch_count"]);
    spec.header(&mut t);
    for &m in &spec.methods {
        let r = match m {
            Method::Pmbpqm => pmbpqm_exact(&g)?,
            Method::PmbpqmMc => pmbpqm_mc(&g, spec.trials, spec.seed)?,
            Method::Helstrom => collective_helstrom(&g)?,
            Method::Lg => locally_greedy(&g)?,
        };
        t.push(vec![
            m.name().into(),
            fmt_num(r.success_prob),
            r.branch_count.to_string(),
        ]);
    }
    Ok(t)
}
