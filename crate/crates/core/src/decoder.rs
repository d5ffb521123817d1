//! Decoding the root bit of a tree factor graph whose bits were sent through
//! qubit channels.

use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{helstrom_measurement, helstrom_success, ChannelSpec, GeneralBSCQ, QubitBSCQ};
use crate::combine::{
    bit_qubit, boxast, check_qubit, paired_measurement, varoast, Branch, BranchDistribution,
    PRUNE_TOL,
};
use crate::error::{Error, Result};
use crate::qla::{herm_eig, kron, CMatrix};

/// Largest number of observed qubits accepted by [`collective_helstrom`].
pub const MAX_COLLECTIVE_QUBITS: usize = 13;
/// Monte-Carlo trials per deterministic work chunk.
const MC_CHUNK: u64 = 4096;
/// Outcome sequences with smaller total probability are dropped by the
/// locally greedy enumeration.
const NEGLIGIBLE: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Variable,
    Check,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    /// Child ids in ascending order.
    pub children: Vec<usize>,
    pub channel: Option<QubitBSCQ>,
}

/// A factor graph that is a tree, rooted at a variable node, alternating
/// variable and check levels.
#[derive(Debug, Clone)]
pub struct TreeFactorGraph {
    root: usize,
    nodes: Vec<Node>,
    index: HashMap<usize, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: usize,
    pub kind: NodeKind,
    #[serde(default)]
    pub children: Vec<usize>,
    #[serde(default)]
    pub channel: Option<ChannelSpec>,
}

/// JSON form of a [`TreeFactorGraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSpec {
    pub root: usize,
    pub nodes: Vec<NodeSpec>,
}

fn graph_err(msg: impl Into<String>) -> Error {
    Error::Graph(msg.into())
}

impl TreeFactorGraph {
    pub fn new(root: usize, nodes: Vec<Node>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (pos, n) in nodes.iter().enumerate() {
            if index.insert(n.id, pos).is_some() {
                return Err(graph_err(format!("duplicate node id {}", n.id)));
            }
        }
        let mut nodes = nodes;
        for n in &mut nodes {
            n.children.sort_unstable();
        }
        let g = Self { root, nodes, index };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let root = self
            .index
            .get(&self.root)
            .map(|&p| &self.nodes[p])
            .ok_or_else(|| graph_err(format!("root {} is not a node", self.root)))?;
        if root.kind != NodeKind::Variable {
            return Err(graph_err("root must be a variable node"));
        }
        let mut parent: HashMap<usize, usize> = HashMap::new();
        for n in &self.nodes {
            for &c in &n.children {
                let child =
                    self.index.get(&c).map(|&p| &self.nodes[p]).ok_or_else(|| {
                        graph_err(format!("node {} lists unknown child {c}", n.id))
                    })?;
                if child.kind == n.kind {
                    return Err(graph_err(format!(
                        "edge {} -> {c} joins two nodes of the same kind",
                        n.id
                    )));
                }
                if let Some(p) = parent.insert(c, n.id) {
                    return Err(graph_err(format!(
                        "node {c} has two parents ({p} and {})",
                        n.id
                    )));
                }
            }
            match n.kind {
                NodeKind::Check => {
                    if n.children.is_empty() {
                        return Err(graph_err(format!(
                            "check {} has fewer than two neighbors",
                            n.id
                        )));
                    }
                    if n.channel.is_some() {
                        return Err(graph_err(format!("check {} carries a channel", n.id)));
                    }
                }
                NodeKind::Variable => {
                    if n.children.is_empty() && n.channel.is_none() {
                        return Err(graph_err(format!("leaf variable {} has no channel", n.id)));
                    }
                }
            }
        }
        if parent.contains_key(&self.root) {
            return Err(graph_err("root has a parent"));
        }
        // Single parents plus full reachability from the root make a tree.
        let mut seen = HashSet::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return Err(graph_err(format!("cycle through node {id}")));
            }
            stack.extend(&self.node(id).children);
        }
        if seen.len() != self.nodes.len() {
            return Err(graph_err(format!(
                "{} nodes unreachable from the root",
                self.nodes.len() - seen.len()
            )));
        }
        Ok(())
    }

    pub fn from_spec(spec: &GraphSpec) -> Result<Self> {
        let nodes = spec
            .nodes
            .iter()
            .map(|n| {
                let channel = match &n.channel {
                    None => None,
                    Some(ChannelSpec::Qubit { theta, q }) => Some(QubitBSCQ::new(*theta, *q)?),
                    Some(general) => {
                        let w = general.to_general()?;
                        if w.dim() != 2 {
                            return Err(graph_err(format!(
                                "node {} has a {}-dimensional channel; only qubit channels are supported",
                                n.id,
                                w.dim()
                            )));
                        }
                        Some(w.canonicalize()?)
                    }
                };
                Ok(Node {
                    id: n.id,
                    kind: n.kind,
                    children: n.children.clone(),
                    channel,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec.root, nodes)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(text)?)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            root: self.root,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSpec {
                    id: n.id,
                    kind: n.kind,
                    children: n.children.clone(),
                    channel: n.channel.map(ChannelSpec::from),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("graph serializes")
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[self.index[&id]]
    }

    /// Ids of variables with a channel, ascending.
    pub fn observed(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .nodes
            .iter()
            .filter(|n| n.channel.is_some())
            .map(|n| n.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Longest downward path length from `id`.
    pub fn height(&self, id: usize) -> usize {
        self.node(id)
            .children
            .iter()
            .map(|&c| 1 + self.height(c))
            .max()
            .unwrap_or(0)
    }

    /// A single observed variable.
    pub fn single(w: QubitBSCQ) -> Self {
        Self::new(1, vec![var(1, &[], Some(w))]).expect("valid graph")
    }

    /// Root `x1` with parity checks `x1 = x2 ⊕ x3` and `x1 = x4 ⊕ x5`; every
    /// bit observed through `w`.
    pub fn five_qubit(w: QubitBSCQ) -> Self {
        let nodes = vec![
            var(1, &[6, 7], Some(w)),
            var(2, &[], Some(w)),
            var(3, &[], Some(w)),
            var(4, &[], Some(w)),
            var(5, &[], Some(w)),
            check(6, &[2, 3]),
            check(7, &[4, 5]),
        ];
        Self::new(1, nodes).expect("valid graph")
    }

    /// Checks `x1 = x2 ⊕ x3`, `x1 = x4 ⊕ x5`, `x4 = x6`, `x4 = x7`; every bit
    /// observed through `w`.
    pub fn seven_qubit(w: QubitBSCQ) -> Self {
        let nodes = vec![
            var(1, &[8, 9], Some(w)),
            var(2, &[], Some(w)),
            var(3, &[], Some(w)),
            var(4, &[10, 11], Some(w)),
            var(5, &[], Some(w)),
            var(6, &[], Some(w)),
            var(7, &[], Some(w)),
            check(8, &[2, 3]),
            check(9, &[4, 5]),
            check(10, &[6]),
            check(11, &[7]),
        ];
        Self::new(1, nodes).expect("valid graph")
    }

    /// Three copies of one bit: root and `x2` through `w`, `x3` through `w2`.
    pub fn three_qubit_repetition(w: QubitBSCQ, w2: QubitBSCQ) -> Self {
        let nodes = vec![
            var(1, &[4, 5], Some(w)),
            var(2, &[], Some(w)),
            var(3, &[], Some(w2)),
            check(4, &[2]),
            check(5, &[3]),
        ];
        Self::new(1, nodes).expect("valid graph")
    }

    /// All codewords, as `(observed bits in ascending id order, root bit)`.
    pub fn codewords(&self) -> Vec<(Vec<u8>, u8)> {
        let observed = self.observed();
        let mut out = Vec::new();
        for root_bit in 0..2u8 {
            for assignment in self.assign(self.root, root_bit) {
                let map: HashMap<usize, u8> = assignment.into_iter().collect();
                out.push((observed.iter().map(|id| map[id]).collect(), root_bit));
            }
        }
        out
    }

    /// Every assignment of the subtree of variable `id` consistent with the
    /// parity checks when the variable takes value `bit`.
    fn assign(&self, id: usize, bit: u8) -> Vec<Vec<(usize, u8)>> {
        let mut acc = vec![vec![(id, bit)]];
        for &c in &self.node(id).children {
            let kids = &self.node(c).children;
            let mut options = Vec::new();
            for mask in 0u32..(1 << kids.len()) {
                if (mask.count_ones() as u8 & 1) != bit {
                    continue;
                }
                let mut partial: Vec<Vec<(usize, u8)>> = vec![Vec::new()];
                for (k, &kid) in kids.iter().enumerate() {
                    let sub = self.assign(kid, ((mask >> k) & 1) as u8);
                    partial = partial
                        .iter()
                        .flat_map(|p| {
                            sub.iter()
                                .map(move |s| p.iter().chain(s).copied().collect())
                        })
                        .collect();
                }
                options.extend(partial);
            }
            acc = acc
                .iter()
                .flat_map(|a| {
                    options
                        .iter()
                        .map(move |o| a.iter().chain(o).copied().collect())
                })
                .collect();
        }
        acc
    }
}

fn var(id: usize, children: &[usize], channel: Option<QubitBSCQ>) -> Node {
    Node {
        id,
        kind: NodeKind::Variable,
        children: children.to_vec(),
        channel,
    }
}

fn check(id: usize, children: &[usize]) -> Node {
    Node {
        id,
        kind: NodeKind::Check,
        children: children.to_vec(),
        channel: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PmbpqmExact,
    PmbpqmMc,
    Helstrom,
    LocallyGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub success_prob: f64,
    pub branch_count: u64,
    pub method: Method,
}

/// Pairs neighbours left to right, carrying an odd one over, until one
/// item remains.
fn tournament<T>(mut items: Vec<T>, mut merge: impl FnMut(T, T) -> Result<T>) -> Result<Option<T>> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)?),
                None => next.push(a),
            }
        }
        items = next;
    }
    Ok(items.pop())
}

fn product(
    a: Vec<Branch>,
    b: Vec<Branch>,
    op: fn(&QubitBSCQ, &QubitBSCQ) -> BranchDistribution,
) -> Vec<Branch> {
    let mut out = Vec::with_capacity(a.len() * b.len() * 2);
    for x in &a {
        for y in &b {
            for r in op(&x.channel, &y.channel).iter() {
                out.push(Branch {
                    prob: x.prob * y.prob * r.prob,
                    channel: r.channel,
                });
            }
        }
    }
    out
}

fn exact_message(g: &TreeFactorGraph, id: usize) -> Result<Vec<Branch>> {
    let node = g.node(id);
    let inputs = node
        .children
        .iter()
        .map(|&c| exact_message(g, c))
        .collect::<Result<Vec<_>>>()?;
    match node.kind {
        NodeKind::Check => {
            Ok(tournament(inputs, |a, b| Ok(product(a, b, check_qubit)))?
                .expect("check has children"))
        }
        NodeKind::Variable => {
            let combined = tournament(inputs, |a, b| Ok(product(a, b, bit_qubit)))?;
            let own = node.channel.map(|w| {
                vec![Branch {
                    prob: 1.0,
                    channel: w,
                }]
            });
            Ok(match (combined, own) {
                (Some(c), Some(o)) => product(c, o, bit_qubit),
                (Some(c), None) => c,
                (None, Some(o)) => o,
                (None, None) => unreachable!("validated graph"),
            })
        }
    }
}

/// PMBPQM with every paired-measurement outcome enumerated.
///
/// Checks reduce their children with ⊞ and variables with ⊛, pairing left to
/// right in ascending id order; a variable's own channel joins last. The
/// root qubit is read out with the Helstrom measurement.
pub fn pmbpqm_exact(g: &TreeFactorGraph) -> Result<DecodeResult> {
    let branches = exact_message(g, g.root())?;
    Ok(DecodeResult {
        success_prob: branches.iter().map(|b| b.prob * b.channel.helstrom()).sum(),
        branch_count: branches.len() as u64,
        method: Method::PmbpqmExact,
    })
}

/// A message in the codeword-tracking evaluation: the channel the next
/// measurement is designed for, and the state actually present.
#[derive(Clone)]
struct Tracked {
    prob: f64,
    design: GeneralBSCQ,
    state: CMatrix,
}

fn tracked_merge(a: Vec<Tracked>, b: Vec<Tracked>, check: bool) -> Result<Vec<Tracked>> {
    let mut out = Vec::new();
    for x in &a {
        for y in &b {
            let design = if check {
                boxast(&x.design, &y.design)
            } else {
                varoast(&x.design, &y.design)
            };
            let state = kron(&x.state, &y.state);
            let pm = paired_measurement(&design)?;
            for p in &pm.pairs {
                let actual = p.compress(&state);
                let prob = actual.trace().re;
                if prob < PRUNE_TOL || p.prob < PRUNE_TOL {
                    continue;
                }
                let rho = p.compress(design.rho()).scale(1.0 / p.prob);
                out.push(Tracked {
                    prob: x.prob * y.prob * prob,
                    design: GeneralBSCQ::from_parts(rho, CMatrix::pauli_x()),
                    state: actual.scale(1.0 / prob),
                });
            }
        }
    }
    Ok(out)
}

fn tracked_message(
    g: &TreeFactorGraph,
    id: usize,
    bits: &HashMap<usize, u8>,
) -> Result<Vec<Tracked>> {
    let node = g.node(id);
    let inputs = node
        .children
        .iter()
        .map(|&c| tracked_message(g, c, bits))
        .collect::<Result<Vec<_>>>()?;
    let check = node.kind == NodeKind::Check;
    let combined = tournament(inputs, |a, b| tracked_merge(a, b, check))?;
    let own = node.channel.map(|w| {
        vec![Tracked {
            prob: 1.0,
            design: w.to_general(),
            state: w.density(bits[&id]),
        }]
    });
    Ok(match (combined, own) {
        (Some(c), Some(o)) => tracked_merge(c, o, false)?,
        (Some(c), None) => c,
        (None, Some(o)) => o,
        (None, None) => unreachable!("validated graph"),
    })
}

/// PMBPQM success probability when a specific codeword is transmitted.
///
/// `observed_bits` follows [`TreeFactorGraph::observed`]. Measurements are
/// designed from the channel descriptions while outcome statistics come
/// from the transmitted state; a root readout with no preference guesses.
pub fn pmbpqm_codeword(g: &TreeFactorGraph, observed_bits: &[u8], root_bit: u8) -> Result<f64> {
    let observed = g.observed();
    if observed.len() != observed_bits.len() {
        return Err(Error::Dimension(format!(
            "{} bits for {} observed variables",
            observed_bits.len(),
            observed.len()
        )));
    }
    let bits: HashMap<usize, u8> = observed
        .iter()
        .copied()
        .zip(observed_bits.iter().copied())
        .collect();
    let mut success = 0.0;
    for t in tracked_message(g, g.root(), &bits)? {
        let eig = herm_eig(&t.design.difference())?;
        let tol = 1e-12;
        for (lam, v) in eig.values.iter().zip(&eig.vectors) {
            let mass = t.state.sandwich(v, v).re;
            let credit = if lam.abs() <= tol {
                0.5
            } else if (*lam > 0.0) == (root_bit == 0) {
                1.0
            } else {
                0.0
            };
            success += t.prob * mass * credit;
        }
    }
    Ok(success)
}

type Cache = HashMap<(u8, u64, u64, u64, u64), BranchDistribution>;

fn cached(cache: &mut Cache, check: bool, a: &QubitBSCQ, b: &QubitBSCQ) -> BranchDistribution {
    let key = (
        check as u8,
        a.theta.to_bits(),
        a.q.to_bits(),
        b.theta.to_bits(),
        b.q.to_bits(),
    );
    cache
        .entry(key)
        .or_insert_with(|| {
            if check {
                check_qubit(a, b)
            } else {
                bit_qubit(a, b)
            }
        })
        .clone()
}

fn sampled_message(
    g: &TreeFactorGraph,
    id: usize,
    rng: &mut ChaCha8Rng,
    cache: &mut Cache,
) -> QubitBSCQ {
    let node = g.node(id);
    let inputs: Vec<QubitBSCQ> = node
        .children
        .iter()
        .map(|&c| sampled_message(g, c, rng, cache))
        .collect();
    let check = node.kind == NodeKind::Check;
    let mut step =
        |a: QubitBSCQ, b: QubitBSCQ, check: bool| cached(cache, check, &a, &b).sample(rng);
    let combined = tournament(inputs, |a, b| Ok(step(a, b, check))).expect("infallible");
    match (combined, node.channel) {
        (Some(c), Some(o)) => step(c, o, false),
        (Some(c), None) => c,
        (None, Some(o)) => o,
        (None, None) => unreachable!("validated graph"),
    }
}

/// Monte-Carlo PMBPQM: one outcome is sampled per paired measurement and
/// the final Helstrom success is averaged over trials.
///
/// Trials run in fixed chunks with independent ChaCha streams, so the
/// estimate depends only on `seed` and `trials`.
pub fn pmbpqm_mc(g: &TreeFactorGraph, trials: u64, seed: u64) -> Result<DecodeResult> {
    if trials == 0 {
        return Err(crate::error::contract("trials must be at least 1"));
    }
    let chunks = trials.div_ceil(MC_CHUNK);
    let sums: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let mut cache = Cache::new();
            let n = MC_CHUNK.min(trials - chunk * MC_CHUNK);
            (0..n)
                .map(|_| sampled_message(g, g.root(), &mut rng, &mut cache).helstrom())
                .sum()
        })
        .collect();
    Ok(DecodeResult {
        success_prob: sums.iter().sum::<f64>() / trials as f64,
        branch_count: trials,
        method: Method::PmbpqmMc,
    })
}

/// Observation states `ρ_0, ρ_1` for the root bit: the uniform mixture over
/// codewords with that root value of the product of observed channel
/// outputs, qubits in ascending id order.
pub fn observation_states(g: &TreeFactorGraph) -> Result<(CMatrix, CMatrix)> {
    let observed = g.observed();
    if observed.len() > MAX_COLLECTIVE_QUBITS {
        return Err(Error::ResourceCap {
            what: "observed qubits",
            got: observed.len(),
            max: MAX_COLLECTIVE_QUBITS,
        });
    }
    let channels: Vec<QubitBSCQ> = observed
        .iter()
        .map(|&id| g.node(id).channel.expect("observed"))
        .collect();
    let dim = 1usize << observed.len();
    let mut states = [CMatrix::zeros(dim, dim), CMatrix::zeros(dim, dim)];
    let mut counts = [0usize; 2];
    for (bits, root_bit) in g.codewords() {
        let term = channels
            .iter()
            .zip(&bits)
            .fold(CMatrix::identity(1), |acc, (w, &b)| {
                kron(&acc, &w.density(b))
            });
        let z = root_bit as usize;
        states[z] = &states[z] + &term;
        counts[z] += 1;
    }
    let [s0, s1] = states;
    Ok((
        s0.scale(1.0 / counts[0] as f64),
        s1.scale(1.0 / counts[1] as f64),
    ))
}

/// Optimal joint measurement of all observed qubits.
pub fn collective_helstrom(g: &TreeFactorGraph) -> Result<DecodeResult> {
    let (rho0, rho1) = observation_states(g)?;
    Ok(DecodeResult {
        success_prob: helstrom_success(&rho0, &rho1, 0.5)?,
        branch_count: 1,
        method: Method::Helstrom,
    })
}

/// Likelihoods `P(outcomes so far | bit)` and possibly one unmeasured qubit
/// carrying the same bit.
#[derive(Debug, Clone)]
struct Greedy {
    like: [f64; 2],
    qubit: Option<QubitBSCQ>,
}

/// Helstrom test between `like[0]·a0` and `like[1]·a1`; returns
/// `Tr(Π_k a_x)` for both outcomes `k`.
fn greedy_measure(like: [f64; 2], a0: &CMatrix, a1: &CMatrix) -> Result<[[f64; 2]; 2]> {
    let total = like[0] + like[1];
    let (pi, _) = helstrom_measurement(a0, a1, like[0] / total)?;
    let t0 = [(&pi * a0).trace().re, (&pi * a1).trace().re];
    let t1 = [a0.trace().re - t0[0], a1.trace().re - t0[1]];
    Ok([t0, t1])
}

fn outcomes(like: [f64; 2], masses: [[f64; 2]; 2]) -> impl Iterator<Item = [f64; 2]> {
    masses
        .into_iter()
        .map(move |m| [like[0] * m[0], like[1] * m[1]])
        .filter(|l| l[0] + l[1] > NEGLIGIBLE)
}

fn qubit_density(q: &Option<QubitBSCQ>, bit: u8) -> CMatrix {
    q.map(|w| w.density(bit))
        .unwrap_or_else(|| CMatrix::identity(1))
}

/// Joins two child messages of a check into a message about their parity,
/// measuring any qubits with the Helstrom test for prior `prior`.
fn greedy_parity(a: &Greedy, b: &Greedy, prior: [f64; 2]) -> Result<Vec<Greedy>> {
    let mut states = [CMatrix::zeros(1, 1), CMatrix::zeros(1, 1)];
    let mut classical = [0.0; 2];
    for y in 0..2u8 {
        let mut acc: Option<CMatrix> = None;
        for ya in 0..2u8 {
            let yb = ya ^ y;
            let weight = 0.5 * a.like[ya as usize] * b.like[yb as usize];
            classical[y as usize] += weight;
            let term =
                kron(&qubit_density(&a.qubit, ya), &qubit_density(&b.qubit, yb)).scale(weight);
            acc = Some(match acc {
                Some(m) => &m + &term,
                None => term,
            });
        }
        states[y as usize] = acc.expect("two terms");
    }
    if a.qubit.is_none() && b.qubit.is_none() {
        return Ok(vec![Greedy {
            like: classical,
            qubit: None,
        }]);
    }
    let masses = greedy_measure(prior, &states[0], &states[1])?;
    Ok(masses
        .into_iter()
        .filter(|m| m[0] + m[1] > NEGLIGIBLE)
        .map(|m| Greedy {
            like: m,
            qubit: None,
        })
        .collect())
}

fn greedy_check(g: &TreeFactorGraph, id: usize, prior: [f64; 2]) -> Result<Vec<Greedy>> {
    let kids = &g.node(id).children;
    let per_child = kids
        .iter()
        .map(|&c| greedy_variable(g, c, false))
        .collect::<Result<Vec<_>>>()?;
    let mut acc: Vec<Greedy> = per_child[0].clone();
    for (k, options) in per_child.iter().enumerate().skip(1) {
        let local = if k + 1 == kids.len() {
            prior
        } else {
            [1.0, 1.0]
        };
        let mut next = Vec::new();
        for a in &acc {
            for b in options {
                next.extend(greedy_parity(a, b, local)?);
            }
        }
        acc = next;
    }
    Ok(acc)
}

#[derive(Clone)]
struct GreedyState {
    like: [f64; 2],
    pending: Vec<QubitBSCQ>,
}

fn measure_pair(s: &GreedyState, a: &QubitBSCQ, b: &QubitBSCQ) -> Result<Vec<GreedyState>> {
    let a0 = kron(&a.density(0), &b.density(0));
    let a1 = kron(&a.density(1), &b.density(1));
    let masses = greedy_measure(s.like, &a0, &a1)?;
    Ok(outcomes(s.like, masses)
        .map(|like| GreedyState {
            like,
            pending: s.pending.clone(),
        })
        .collect())
}

fn measure_single(s: &GreedyState, w: &QubitBSCQ) -> Result<Vec<GreedyState>> {
    let masses = greedy_measure(s.like, &w.density(0), &w.density(1))?;
    Ok(outcomes(s.like, masses)
        .map(|like| GreedyState {
            like,
            pending: Vec::new(),
        })
        .collect())
}

fn greedy_variable(g: &TreeFactorGraph, id: usize, is_root: bool) -> Result<Vec<Greedy>> {
    let node = g.node(id);
    let mut order = node.children.clone();
    order.sort_by_key(|&c| (std::cmp::Reverse(g.height(c)), c));
    let mut states = vec![GreedyState {
        like: [1.0, 1.0],
        pending: Vec::new(),
    }];
    for c in order {
        let mut next = Vec::new();
        for s in &states {
            for m in greedy_check(g, c, s.like)? {
                let mut t = s.clone();
                t.like = [s.like[0] * m.like[0], s.like[1] * m.like[1]];
                if t.like[0] + t.like[1] <= NEGLIGIBLE {
                    continue;
                }
                match m.qubit {
                    Some(q) if t.pending.len() == 1 => {
                        let first = t.pending.pop().expect("one pending");
                        next.extend(measure_pair(&t, &first, &q)?);
                    }
                    Some(q) => {
                        t.pending.push(q);
                        next.push(t);
                    }
                    None => next.push(t),
                }
            }
        }
        states = next;
    }
    let mut out = Vec::new();
    for mut s in states {
        let leftover = s.pending.pop();
        match (leftover, node.channel) {
            (Some(p), Some(own)) => {
                for t in measure_pair(&s, &p, &own)? {
                    out.push(Greedy {
                        like: t.like,
                        qubit: None,
                    });
                }
            }
            (Some(q), None) | (None, Some(q)) if is_root => {
                for t in measure_single(&s, &q)? {
                    out.push(Greedy {
                        like: t.like,
                        qubit: None,
                    });
                }
            }
            (qubit, own) => out.push(Greedy {
                like: s.like,
                qubit: qubit.or(own),
            }),
        }
    }
    Ok(out)
}

/// Locally greedy decoding: qubits are measured two at a time, bottom up,
/// each with the Helstrom test for the current prior of the bit it
/// informs, and the prior is updated by Bayes' rule after every outcome.
///
/// Subtrees are visited deepest first (ties by ascending id). A degree-two
/// check forwards its child's qubit; pending qubits at a variable are
/// measured in pairs, and a leftover is measured with the variable's own
/// qubit. Every binary outcome is enumerated.
pub fn locally_greedy(g: &TreeFactorGraph) -> Result<DecodeResult> {
    let finals = greedy_variable(g, g.root(), true)?;
    Ok(DecodeResult {
        success_prob: finals.iter().map(|f| 0.5 * f.like[0].max(f.like[1])).sum(),
        branch_count: finals.len() as u64,
        method: Method::LocallyGreedy,
    })
}

/// A binary measurement on the children built by grouping two Helstrom
/// eigenprojectors, and the resulting success after a collective readout
/// with the root qubit.
#[derive(Debug, Clone, Serialize)]
pub struct Grouping {
    pub label: &'static str,
    pub success: f64,
}

/// Enumerates the three rank-two groupings of the eigenvectors
/// `|λ1⟩, |λ2⟩, |-λ2⟩, |-λ1⟩` of `W(0) - W(1)` for a four-dimensional
/// `children` channel. Each outcome of `{Π, I - Π}` is followed by the
/// Helstrom test on `root(z) ⊗ Π children(z) Π`.
pub fn grouped_local_measurements(
    children: &GeneralBSCQ,
    root: &GeneralBSCQ,
) -> Result<Vec<Grouping>> {
    if children.dim() != 4 {
        return Err(Error::Dimension(format!(
            "expected a 4-dimensional channel, got {}",
            children.dim()
        )));
    }
    let eig = herm_eig(&children.difference())?;
    let scale = eig.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if eig.values.windows(2).any(|w| w[0] - w[1] <= 1e-10 * scale) {
        return Err(Error::Numerical(
            "degenerate spectrum: grouping is not unique".into(),
        ));
    }
    let c0 = children.rho().clone();
    let c1 = children.density(1);
    let r0 = root.rho().clone();
    let r1 = root.density(1);
    let groups: [(&'static str, [usize; 2]); 3] = [
        ("lambda1+lambda2", [0, 1]),
        ("lambda1+(-lambda1)", [0, 3]),
        ("lambda1+(-lambda2)", [0, 2]),
    ];
    groups
        .iter()
        .map(|(label, keep)| {
            let pi = CMatrix::outer(&eig.vectors[keep[0]], &eig.vectors[keep[0]]);
            let pi = &pi + &CMatrix::outer(&eig.vectors[keep[1]], &eig.vectors[keep[1]]);
            let rest = &CMatrix::identity(4) - &pi;
            let mut success = 0.0;
            for p in [&pi, &rest] {
                let s0 = kron(&r0, &(&(p * &c0) * p));
                let s1 = kron(&r1, &(&(p * &c1) * p));
                success += helstrom_success(&s0, &s1, 0.5)?;
            }
            Ok(Grouping { label, success })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::from_flip_family;
    use crate::combine::pm_reduce;
    use std::f64::consts::FRAC_PI_2;

    fn three_qubit_channels() -> (QubitBSCQ, QubitBSCQ) {
        let w = GeneralBSCQ::new(
            CMatrix::from_real_rows(&[&[2.0 / 3.0, 1.0 / 6.0], &[1.0 / 6.0, 1.0 / 3.0]]),
            CMatrix::pauli_x(),
        )
        .unwrap();
        let w2 = GeneralBSCQ::new(
            CMatrix::from_real_rows(&[&[2.0 / 3.0, 1.0 / 8.0], &[1.0 / 8.0, 1.0 / 3.0]]),
            CMatrix::pauli_x(),
        )
        .unwrap();
        (w.canonicalize().unwrap(), w2.canonicalize().unwrap())
    }

    fn grid() -> Vec<QubitBSCQ> {
        let mut out = Vec::new();
        for p in [0.0, 0.1, 0.25, 0.4] {
            for i in 0..=8 {
                out.push(from_flip_family(FRAC_PI_2 * i as f64 / 8.0, p).unwrap());
            }
        }
        out
    }

    #[test]
    fn single_node_is_one_qubit_helstrom() {
        let w = QubitBSCQ::new(0.9, 0.3).unwrap();
        let g = TreeFactorGraph::single(w);
        for r in [
            pmbpqm_exact(&g).unwrap(),
            collective_helstrom(&g).unwrap(),
            locally_greedy(&g).unwrap(),
            pmbpqm_mc(&g, 17, 3).unwrap(),
        ] {
            assert!((r.success_prob - w.helstrom()).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn pure_state_five_qubit_is_optimal() {
        for i in 0..50 {
            let theta = FRAC_PI_2 * i as f64 / 49.0;
            let g = TreeFactorGraph::five_qubit(QubitBSCQ::pure(theta).unwrap());
            let pm = pmbpqm_exact(&g).unwrap().success_prob;
            let h = collective_helstrom(&g).unwrap().success_prob;
            assert!((pm - h).abs() < 1e-9, "theta={theta}: {pm} vs {h}");
        }
    }

    #[test]
    fn worthless_flip_family_gives_coin_flip() {
        let w = from_flip_family(0.8, 0.5).unwrap();
        for g in [
            TreeFactorGraph::five_qubit(w),
            TreeFactorGraph::seven_qubit(w),
        ] {
            for r in [
                pmbpqm_exact(&g).unwrap(),
                collective_helstrom(&g).unwrap(),
                locally_greedy(&g).unwrap(),
            ] {
                assert!((r.success_prob - 0.5).abs() < 1e-9, "{r:?}");
            }
        }
        let g = TreeFactorGraph::five_qubit(QubitBSCQ::WORTHLESS);
        assert!((collective_helstrom(&g).unwrap().success_prob - 0.5).abs() < 1e-12);
    }

    #[test]
    fn three_qubit_instance() {
        let (w, w2) = three_qubit_channels();
        let g = TreeFactorGraph::three_qubit_repetition(w, w2);
        let h = collective_helstrom(&g).unwrap().success_prob;
        assert!((h - 0.7412702830486415).abs() < 1e-9, "{h}");
        let same = TreeFactorGraph::three_qubit_repetition(w, w);
        let h3 = collective_helstrom(&same).unwrap().success_prob;
        assert!((h3 - 0.7414702224846196).abs() < 1e-9, "{h3}");
        let pm = pmbpqm_exact(&g).unwrap().success_prob;
        assert!(pm < h && pm > 0.5);
    }

    #[test]
    fn grouping_table() {
        let (w, w2) = three_qubit_channels();
        let children = varoast(&w.to_general(), &w2.to_general());
        let rows = grouped_local_measurements(&children, &w.to_general()).unwrap();
        let expected = [0.7370876, 0.7362763, 0.7387937];
        for (row, e) in rows.iter().zip(expected) {
            assert!((row.success - e).abs() < 1e-6, "{row:?}");
        }
        let h = collective_helstrom(&TreeFactorGraph::three_qubit_repetition(w, w2))
            .unwrap()
            .success_prob;
        assert!(rows.iter().all(|r| r.success < h));
    }

    #[test]
    fn grouping_rejects_degenerate_spectrum() {
        let p = QubitBSCQ::PERFECT.to_general();
        let c = boxast(&p, &p);
        assert!(matches!(
            grouped_local_measurements(&c, &p),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn every_codeword_decodes_equally() {
        for w in [
            QubitBSCQ::new(0.7, 0.3).unwrap(),
            from_flip_family(1.1, 0.15).unwrap(),
            QubitBSCQ::pure(0.5).unwrap(),
            QubitBSCQ::bsc(0.1).unwrap(),
        ] {
            for g in [
                TreeFactorGraph::five_qubit(w),
                TreeFactorGraph::seven_qubit(w),
            ] {
                let exact = pmbpqm_exact(&g).unwrap().success_prob;
                for (bits, root_bit) in g.codewords() {
                    let s = pmbpqm_codeword(&g, &bits, root_bit).unwrap();
                    assert!(
                        (s - exact).abs() < 1e-10,
                        "{bits:?}/{root_bit}: {s} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn codeword_count() {
        let g = TreeFactorGraph::seven_qubit(QubitBSCQ::PERFECT);
        // 7 bits, 4 independent checks.
        assert_eq!(g.codewords().len(), 8);
        let g = TreeFactorGraph::five_qubit(QubitBSCQ::PERFECT);
        assert_eq!(g.codewords().len(), 8);
        for (bits, root) in g.codewords() {
            assert_eq!(bits[0], root);
            assert_eq!(bits[0], bits[1] ^ bits[2]);
            assert_eq!(bits[0], bits[3] ^ bits[4]);
        }
    }

    #[test]
    fn ordering_on_grid() {
        for w in grid() {
            for g in [
                TreeFactorGraph::five_qubit(w),
                TreeFactorGraph::seven_qubit(w),
            ] {
                let pm = pmbpqm_exact(&g).unwrap().success_prob;
                let h = collective_helstrom(&g).unwrap().success_prob;
                let lg = locally_greedy(&g).unwrap().success_prob;
                assert!(h >= pm - 1e-9 && pm >= 0.5 - 1e-12, "{w:?}: h={h} pm={pm}");
                assert!(h >= lg - 1e-9 && lg >= 0.5 - 1e-12, "{w:?}: h={h} lg={lg}");
            }
        }
    }

    #[test]
    fn seven_qubit_pmbpqm_beats_greedy() {
        for w in grid() {
            let g = TreeFactorGraph::seven_qubit(w);
            let pm = pmbpqm_exact(&g).unwrap().success_prob;
            let lg = locally_greedy(&g).unwrap().success_prob;
            assert!(pm >= lg - 1e-9, "{w:?}: pm={pm} lg={lg}");
        }
    }

    #[test]
    fn greedy_matches_hand_schedule_on_seven_qubits() {
        // Steps: qubits 6,7 at x4; then 4,5 at the check; then 2,3; then the root.
        let w = from_flip_family(1.0, 0.1).unwrap();
        let (w0, w1) = (w.density(0), w.density(1));
        let pair = |a: &CMatrix, b: &CMatrix| kron(a, b);
        let mut total = 0.0;
        let m1 = greedy_measure([1.0, 1.0], &pair(&w0, &w0), &pair(&w1, &w1)).unwrap();
        for l4 in m1 {
            let a0 = (&pair(&w0, &w0).scale(l4[0]) + &pair(&w1, &w1).scale(l4[1])).scale(0.5);
            let a1 = (&pair(&w0, &w1).scale(l4[0]) + &pair(&w1, &w0).scale(l4[1])).scale(0.5);
            for l45 in greedy_measure([1.0, 1.0], &a0, &a1).unwrap() {
                let b0 = (&pair(&w0, &w0) + &pair(&w1, &w1)).scale(0.5);
                let b1 = (&pair(&w0, &w1) + &pair(&w1, &w0)).scale(0.5);
                for l23 in greedy_measure(l45, &b0, &b1).unwrap() {
                    let like = [l45[0] * l23[0], l45[1] * l23[1]];
                    for l1 in greedy_measure(like, &w0, &w1).unwrap() {
                        total += 0.5 * (like[0] * l1[0]).max(like[1] * l1[1]);
                    }
                }
            }
        }
        let lg = locally_greedy(&TreeFactorGraph::seven_qubit(w))
            .unwrap()
            .success_prob;
        assert!((lg - total).abs() < 1e-12, "{lg} vs {total}");
    }

    #[test]
    fn collective_equals_unmeasured_combination() {
        let w = QubitBSCQ::new(0.6, 0.2).unwrap().to_general();
        let chk = boxast(&w, &w);
        let combined = varoast(&varoast(&chk, &chk), &w);
        let g = TreeFactorGraph::five_qubit(QubitBSCQ::new(0.6, 0.2).unwrap());
        let h = collective_helstrom(&g).unwrap().success_prob;
        assert!((h - combined.helstrom()).abs() < 1e-10);
    }

    #[test]
    fn branch_counts() {
        let g = TreeFactorGraph::five_qubit(QubitBSCQ::pure(0.7).unwrap());
        assert_eq!(pmbpqm_exact(&g).unwrap().branch_count, 4);
        let g = TreeFactorGraph::five_qubit(QubitBSCQ::new(0.7, 0.2).unwrap());
        let r = pmbpqm_exact(&g).unwrap();
        assert_eq!(r.branch_count, 16);
        // Fan-outs realized at each step: two checks, then two bit combines.
        let w = QubitBSCQ::new(0.7, 0.2).unwrap();
        let chk = pm_reduce(&boxast(&w.to_general(), &w.to_general())).unwrap();
        assert_eq!(chk.len(), 2);
        let g = TreeFactorGraph::single(w);
        assert_eq!(pmbpqm_exact(&g).unwrap().branch_count, 1);
    }

    #[test]
    fn monte_carlo_is_reproducible_and_unbiased() {
        let w = from_flip_family(0.9, 0.2).unwrap();
        let g = TreeFactorGraph::five_qubit(w);
        let exact = pmbpqm_exact(&g).unwrap().success_prob;
        let a = pmbpqm_mc(&g, 200_000, 11).unwrap().success_prob;
        let b = pmbpqm_mc(&g, 200_000, 11).unwrap().success_prob;
        assert_eq!(a.to_bits(), b.to_bits());
        // Per-trial values lie in [1/2, 1], so the standard deviation is at most 1/4.
        let sigma = 0.25 / (200_000f64).sqrt();
        assert!((a - exact).abs() < 3.0 * sigma, "{a} vs {exact}");
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = one.install(|| pmbpqm_mc(&g, 200_000, 11).unwrap().success_prob);
        assert_eq!(a.to_bits(), c.to_bits());
        assert!(pmbpqm_mc(&g, 0, 1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = TreeFactorGraph::seven_qubit(QubitBSCQ::new(0.4, 0.1).unwrap());
        let back = TreeFactorGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        let text = r#"{"root": 1, "nodes": [
            {"id": 1, "kind": "variable", "children": [2], "channel": {"theta": 1.0, "q": 0.1}},
            {"id": 2, "kind": "check", "children": [3]},
            {"id": 3, "kind": "variable", "children": [], "channel":
                {"rho": [[0.5,0],[0.25,0],[0.25,0],[0.5,0]], "u": [[0,0],[1,0],[1,0],[0,0]]}}
        ]}"#;
        let g = TreeFactorGraph::from_json(text).unwrap();
        let c = g.node(3).channel.unwrap();
        assert!((c.q - 0.5).abs() < 1e-12 && c.theta.abs() < 1e-12);
    }

    #[test]
    fn invalid_graphs_rejected() {
        let ch = r#"{"theta": 1.0, "q": 0.0}"#;
        let cases = [
            format!(r#"{{"root": 1, "nodes": [{{"id": 1, "kind": "check", "children": [2]}}, {{"id": 2, "kind": "variable", "channel": {ch}}}]}}"#),
            format!(r#"{{"root": 1, "nodes": [{{"id": 1, "kind": "variable", "children": [2], "channel": {ch}}}, {{"id": 2, "kind": "check", "children": [1]}}]}}"#),
            format!(r#"{{"root": 1, "nodes": [{{"id": 1, "kind": "variable", "children": [2, 3], "channel": {ch}}}, {{"id": 2, "kind": "check", "children": [4]}}, {{"id": 3, "kind": "check", "children": [4]}}, {{"id": 4, "kind": "variable", "channel": {ch}}}]}}"#),
            format!(r#"{{"root": 1, "nodes": [{{"id": 1, "kind": "variable", "children": [9], "channel": {ch}}}]}}"#),
            format!(r#"{{"root": 1, "nodes": [{{"id": 1, "kind": "variable", "children": [2], "channel": {ch}}}, {{"id": 2, "kind": "check"}}]}}"#),
            format!(r#"{{"root": 1, "nodes": [{{"id": 1, "kind": "variable", "children": [2], "channel": {ch}}}, {{"id": 2, "kind": "check", "children": [3]}}, {{"id": 3, "kind": "variable"}}]}}"#),
            format!(r#"{{"root": 1, "nodes": [{{"id": 1, "kind": "variable", "channel": {ch}}}, {{"id": 5, "kind": "variable", "channel": {ch}}}]}}"#),
            r#"{"root": 1, "nodes": [{"id": 1, "kind": "variable", "channel": {"theta": 3.0, "q": 0.0}}]}"#.to_string(),
            r#"{"root": 1, "nodes": [{"id": 1, "kind": "variable", "channel": {"rho": [[0.25,0],[0,0],[0,0],[0,0],[0,0],[0.25,0],[0,0],[0,0],[0,0],[0,0],[0.25,0],[0,0],[0,0],[0,0],[0,0],[0.25,0]], "u": [[1,0],[0,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[0,0],[1,0]]}}]}"#.to_string(),
        ];
        for text in &cases {
            assert!(TreeFactorGraph::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn collective_resource_cap() {
        let w = QubitBSCQ::new(1.0, 0.1).unwrap();
        let mut nodes = vec![var(0, &(100..113).collect::<Vec<_>>(), Some(w))];
        for k in 0..13 {
            nodes.push(check(100 + k, &[1 + k]));
            nodes.push(var(1 + k, &[], Some(w)));
        }
        let g = TreeFactorGraph::new(0, nodes).unwrap();
        assert!(matches!(
            collective_helstrom(&g),
            Err(Error::ResourceCap {
                got: 14,
                max: 13,
                ..
            })
        ));
    }
}
