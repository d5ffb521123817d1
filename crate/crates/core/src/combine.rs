//! Bit-node (⊛) and check-node (⊞) combining, paired measurements and the
//! post-measurement qubit channels they leave behind.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{canonicalize_sigma_x, DeltaGamma, GeneralBSCQ, QubitBSCQ};
use crate::error::{contract, Error, Result};
use crate::qla::{herm_eig, kron, CMatrix, CVector};

/// Branches with smaller probability are dropped by [`pm_reduce`].
pub const PRUNE_TOL: f64 = 1e-14;
/// Relative eigenvalue tolerance (against the largest `|λ|` of `W(0) - W(1)`)
/// separating positive, negative and null eigenvalues.
pub const SPECTRUM_TOL: f64 = 1e-10;

/// `[W ⊛ W'](z) = W(z) ⊗ W'(z)` with symmetry `U ⊗ U'`.
pub fn varoast(w: &GeneralBSCQ, w2: &GeneralBSCQ) -> GeneralBSCQ {
    GeneralBSCQ::from_parts(kron(w.rho(), w2.rho()), kron(w.u(), w2.u()))
}

/// `[W ⊞ W'](z) = ½ Σ_{z'} W(z ⊕ z') ⊗ W'(z')` with symmetry `U ⊗ I`.
pub fn boxast(w: &GeneralBSCQ, w2: &GeneralBSCQ) -> GeneralBSCQ {
    let even = kron(w.rho(), w2.rho());
    let odd = kron(&w.density(1), &w2.density(1));
    let rho = (&even + &odd).scale(0.5);
    GeneralBSCQ::from_parts(rho, kron(w.u(), &CMatrix::identity(w2.dim())))
}

/// One outcome of a paired measurement: the projector onto `span{v, uv}`.
#[derive(Debug, Clone)]
pub struct MeasurementPair {
    pub v: CVector,
    /// `U v` for pairs drawn from the nonzero spectrum. For pairs built inside
    /// the null space of `W(0) - W(1)` this is the image under the rebalanced
    /// involution, which may differ from `U v`.
    pub uv: CVector,
    pub prob: f64,
}

#[derive(Debug, Clone)]
pub struct PairedMeasurement {
    pub pairs: Vec<MeasurementPair>,
    /// Number of leading pairs built from strictly positive eigenvalues.
    pub signal_pairs: usize,
}

/// A classical mixture of canonical qubit channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDistribution {
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub prob: f64,
    pub channel: QubitBSCQ,
}

impl BranchDistribution {
    pub fn single(channel: QubitBSCQ) -> Self {
        Self {
            branches: vec![Branch { prob: 1.0, channel }],
        }
    }

    /// Drops branches below [`PRUNE_TOL`] and rescales the rest to sum to one.
    fn pruned(branches: Vec<Branch>) -> Self {
        let mut branches: Vec<Branch> = branches
            .into_iter()
            .filter(|b| b.prob >= PRUNE_TOL)
            .collect();
        let total: f64 = branches.iter().map(|b| b.prob).sum();
        for b in &mut branches {
            b.prob /= total;
        }
        Self { branches }
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter()
    }

    pub fn total_prob(&self) -> f64 {
        self.branches.iter().map(|b| b.prob).sum()
    }

    /// Average Helstrom success over branches.
    pub fn success(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.prob * b.channel.helstrom())
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> QubitBSCQ {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for b in &self.branches {
            acc += b.prob;
            if u < acc {
                return b.channel;
            }
        }
        self.branches.last().expect("nonempty distribution").channel
    }

    /// Branches sorted by `(prob, theta, q)` for order-insensitive comparison.
    pub fn sorted(&self) -> Vec<Branch> {
        let mut v = self.branches.clone();
        v.sort_by(|a, b| {
            a.prob
                .total_cmp(&b.prob)
                .then(a.channel.theta.total_cmp(&b.channel.theta))
                .then(a.channel.q.total_cmp(&b.channel.q))
        });
        v
    }

    /// Largest difference in `(prob, theta, q)` between two distributions
    /// after sorting, or infinity when the branch counts differ.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.sorted()
            .iter()
            .zip(other.sorted())
            .map(|(a, b)| {
                // Angle gap scaled by the Bloch radius.
                let radius = (1.0 - a.channel.q).max(1.0 - b.channel.q);
                let theta_gap = (a.channel.theta - b.channel.theta).abs() * radius;
                (a.prob - b.prob)
                    .abs()
                    .max(theta_gap)
                    .max((a.channel.q - b.channel.q).abs())
            })
            .fold(0.0, f64::max)
    }
}

fn combine(a: &[Complex64], ca: f64, b: &[Complex64], cb: f64) -> CVector {
    a.iter().zip(b).map(|(x, y)| x * ca + y * cb).collect()
}

/// Rotates `basis` by the eigenvectors of the compression of `op`; vectors
/// sharing an eigenvalue are refined further by the remaining operators.
fn refine(basis: Vec<CVector>, ops: &[&CMatrix]) -> Result<Vec<CVector>> {
    let Some((op, rest)) = ops.split_first() else {
        return Ok(basis);
    };
    if basis.len() <= 1 {
        return Ok(basis);
    }
    let eig = herm_eig(&op.compress(&basis).hermitian_part())?;
    // Measured against the full operator so that noise-level compressions
    // count as degenerate.
    let tol = SPECTRUM_TOL * op.max_abs();
    if eig.values[0] - eig.values[eig.dim() - 1] <= tol {
        // Fully degenerate: any rotation is noise.
        return refine(basis, rest);
    }
    let rotated: Vec<CVector> = eig
        .vectors
        .iter()
        .map(|coeffs| {
            let mut out = vec![Complex64::new(0.0, 0.0); basis[0].len()];
            for (c, b) in coeffs.iter().zip(&basis) {
                for (o, x) in out.iter_mut().zip(b) {
                    *o += c * x;
                }
            }
            out
        })
        .collect();
    let mut out = Vec::with_capacity(rotated.len());
    let mut start = 0;
    for end in 1..=rotated.len() {
        if end == rotated.len() || eig.values[end - 1] - eig.values[end] > tol {
            out.extend(refine(rotated[start..end].to_vec(), rest)?);
            start = end;
        }
    }
    Ok(out)
}

/// Builds the paired measurement of a channel from the spectrum of
/// `W(0) - W(1)`.
///
/// Positive eigenvectors `v` pair with `U v`, in descending eigenvalue
/// order. A degenerate positive eigenspace is resolved by diagonalizing the
/// compression of `ρ`, then of the Hermitian part of `ρU`. The null space is
/// split into `±1` eigenvectors of `U` diagonalized jointly with `ρ`,
/// rebalanced to equal counts, and paired as `(u ± u')/√2`.
pub fn paired_measurement(w: &GeneralBSCQ) -> Result<PairedMeasurement> {
    let n = w.dim();
    if !n.is_multiple_of(2) {
        return Err(contract(format!("paired measurement on odd dimension {n}")));
    }
    let rho = w.rho();
    let u = w.u();
    let eig = herm_eig(&w.difference())?;
    let scale = eig.values.iter().fold(rho.max_abs(), |m, l| m.max(l.abs()));
    let tol = SPECTRUM_TOL * scale;
    let positive = eig.values.iter().filter(|&&l| l > tol).count();
    let negative = eig.values.iter().filter(|&&l| l < -tol).count();
    if positive != negative {
        return Err(Error::Numerical(format!(
            "asymmetric spectrum: {positive} positive vs {negative} negative eigenvalues"
        )));
    }

    let rho_u = (rho * u).hermitian_part();
    let mut signal = Vec::with_capacity(positive);
    let mut start = 0;
    for end in 1..=positive {
        if end == positive || eig.values[end - 1] - eig.values[end] > tol {
            signal.extend(refine(eig.vectors[start..end].to_vec(), &[rho, &rho_u])?);
            start = end;
        }
    }

    let mut pairs: Vec<MeasurementPair> = signal
        .into_iter()
        .map(|v| {
            let uv = u.mul_vec(&v);
            pair(rho, v, uv)
        })
        .collect();

    let null: Vec<CVector> = eig.vectors[positive..n - negative].to_vec();
    if !null.is_empty() {
        let sym = herm_eig(&u.compress(&null).hermitian_part())?;
        let lift = |coeffs: &CVector| -> CVector {
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            for (c, b) in coeffs.iter().zip(&null) {
                for (o, x) in out.iter_mut().zip(b) {
                    *o += c * x;
                }
            }
            out
        };
        let (plus, minus): (Vec<_>, Vec<_>) = sym
            .values
            .iter()
            .zip(&sym.vectors)
            .partition(|(l, _)| **l > 0.0);
        let mut plus = refine(plus.into_iter().map(|(_, c)| lift(c)).collect(), &[rho])?;
        let mut minus = refine(minus.into_iter().map(|(_, c)| lift(c)).collect(), &[rho])?;
        while plus.len() > minus.len() {
            minus.push(plus.pop().expect("nonempty"));
        }
        while minus.len() > plus.len() {
            plus.push(minus.pop().expect("nonempty"));
        }
        for (a, b) in plus.iter().zip(&minus) {
            let v = combine(a, FRAC_1_SQRT_2, b, FRAC_1_SQRT_2);
            let uv = combine(a, FRAC_1_SQRT_2, b, -FRAC_1_SQRT_2);
            pairs.push(pair(rho, v, uv));
        }
    }
    Ok(PairedMeasurement {
        pairs,
        signal_pairs: positive,
    })
}

fn pair(rho: &CMatrix, v: CVector, uv: CVector) -> MeasurementPair {
    let prob = rho.sandwich(&v, &v).re + rho.sandwich(&uv, &uv).re;
    MeasurementPair {
        v,
        uv,
        prob: prob.max(0.0),
    }
}

impl MeasurementPair {
    /// `[[⟨v|σ|v⟩, ⟨v|σ|uv⟩], [⟨uv|σ|v⟩, ⟨uv|σ|uv⟩]]`
    pub fn compress(&self, sigma: &CMatrix) -> CMatrix {
        sigma.compress(&[self.v.clone(), self.uv.clone()])
    }
}

/// Paired measurement followed by extraction of the qubit channel left in
/// each outcome.
pub fn pm_reduce(w: &GeneralBSCQ) -> Result<BranchDistribution> {
    let pm = paired_measurement(w)?;
    let branches = pm
        .pairs
        .iter()
        .filter(|p| p.prob >= PRUNE_TOL)
        .map(|p| Branch {
            prob: p.prob,
            channel: canonicalize_sigma_x(&p.compress(w.rho())),
        })
        .collect();
    Ok(BranchDistribution::pruned(branches))
}

/// Check combining of two pure-state channels.
pub fn psc_check_closed(theta: f64, theta2: f64) -> BranchDistribution {
    let (c, c2) = (theta.cos(), theta2.cos());
    let p0 = 0.5 * (1.0 + c * c2);
    let angle = |num: f64, den: f64| {
        if den <= 0.0 {
            FRAC_PI_2
        } else {
            (num / den).abs().min(1.0).acos()
        }
    };
    BranchDistribution::pruned(vec![
        Branch {
            prob: p0,
            channel: QubitBSCQ::clamped(angle(c + c2, 1.0 + c * c2), 0.0),
        },
        Branch {
            prob: 1.0 - p0,
            channel: QubitBSCQ::clamped(angle(c - c2, 1.0 - c * c2), 0.0),
        },
    ])
}

/// Bit combining of two pure-state channels: `cos θ⊛ = cos θ cos θ'`.
pub fn psc_bit_closed(theta: f64, theta2: f64) -> BranchDistribution {
    let c = (theta.cos() * theta2.cos()).clamp(-1.0, 1.0);
    BranchDistribution::single(QubitBSCQ::clamped(c.abs().acos(), 0.0))
}

fn dg_branch(prob: f64, delta: f64, gamma: f64) -> Branch {
    let m = CMatrix::from_real_rows(&[&[delta, gamma], &[gamma, 1.0 - delta]]);
    Branch {
        prob,
        channel: canonicalize_sigma_x(&m),
    }
}

/// Check combining in the `(δ, γ)` view with the symmetric resolution of the
/// `|00⟩, |11⟩` degeneracy.
///
/// Outcome 0 has probability `½ + 2γ₁γ₂` and unnormalized entries
/// `δ̃ = ½(2γ₁γ₂ + 2δ₁δ₂ - δ₁ - δ₂ + 1)`, `γ̃ = (γ₁ + γ₂)/2`; outcome 1 flips
/// the sign of `γ₁γ₂` in both and uses `γ̃ = (γ₁ - γ₂)/2`.
pub fn dg_check_closed(a: DeltaGamma, b: DeltaGamma) -> BranchDistribution {
    let DeltaGamma {
        delta: d1,
        gamma: g1,
    } = a;
    let DeltaGamma {
        delta: d2,
        gamma: g2,
    } = b;
    let cross = g1 * g2;
    let base = 2.0 * d1 * d2 - d1 - d2 + 1.0;
    let p0 = 0.5 + 2.0 * cross;
    let p1 = 0.5 - 2.0 * cross;
    let mut branches = Vec::with_capacity(2);
    if p0 >= PRUNE_TOL {
        branches.push(dg_branch(
            p0,
            0.5 * (2.0 * cross + base) / p0,
            0.5 * (g1 + g2) / p0,
        ));
    }
    if p1 >= PRUNE_TOL {
        branches.push(dg_branch(
            p1,
            0.5 * (base - 2.0 * cross) / p1,
            0.5 * (g1 - g2) / p1,
        ));
    }
    BranchDistribution::pruned(branches)
}

/// Bit combining of a channel with itself in the `(δ, γ)` view.
///
/// The branch with probability `(2(δ-1)δ + 6γ² + 1)/(4γ² + 1)` carries the
/// informative post-measurement state; the complementary branch is the
/// `θ = 0` state `[[½, -2γ²], [-2γ², ½]]` from the null space.
pub fn dg_bit_closed(dg: DeltaGamma) -> BranchDistribution {
    let DeltaGamma { delta: d, gamma: g } = dg;
    let g2 = g * g;
    let s = (4.0 * g2 + 1.0).sqrt();
    let p_signal = (2.0 * (d - 1.0) * d + 6.0 * g2 + 1.0) / (4.0 * g2 + 1.0);
    let den = 4.0 * (d - 1.0) * d + 12.0 * g2 + 2.0;
    let delta_signal =
        (2.0 * d * d - 2.0 * d * (4.0 * s * g2 + s + 1.0) + g2 * (4.0 * s + 6.0) + s + 1.0) / den;
    let gamma_signal =
        2.0 * g2 * (-2.0 * (d - 1.0) * d + 2.0 * g2 + 1.0) / (2.0 * (d - 1.0) * d + 6.0 * g2 + 1.0);
    BranchDistribution::pruned(vec![
        dg_branch(p_signal, delta_signal, gamma_signal),
        dg_branch(1.0 - p_signal, 0.5, -2.0 * g2),
    ])
}

/// Check combining of two qubit channels.
pub fn check_qubit(a: &QubitBSCQ, b: &QubitBSCQ) -> BranchDistribution {
    dg_check_closed(a.delta_gamma(), b.delta_gamma())
}

/// Bit combining of two qubit channels.
///
/// In the eigenbasis of the symmetry `σx ⊗ σx`, `W(0) - W(1)` only couples
/// the even and odd sectors through a real 2x2 block; its singular vector
/// pairs are the measurement outcomes. Degenerate singular values fall back
/// to [`pm_reduce`].
pub fn bit_qubit(a: &QubitBSCQ, b: &QubitBSCQ) -> BranchDistribution {
    bit_qubit_fast(a, b).unwrap_or_else(|| {
        pm_reduce(&varoast(&a.to_general(), &b.to_general())).expect("qubit bit combine")
    })
}

/// Bloch components of `W(0)` in the symmetry eigenbasis: `axial` along the
/// symmetry, `signal` the part that flips with the input.
fn bloch(w: &QubitBSCQ) -> (f64, f64) {
    let r = 1.0 - w.q;
    (r * w.theta.cos(), r * w.theta.sin())
}

fn bit_qubit_fast(a: &QubitBSCQ, b: &QubitBSCQ) -> Option<BranchDistribution> {
    let (x1, z1) = bloch(a);
    let (x2, z2) = bloch(b);
    // Cross block of W(0) - W(1): rows |00>, |11>; columns |01>, |10>.
    let m = [
        [0.5 * z2 * (1.0 + x1), 0.5 * z1 * (1.0 + x2)],
        [0.5 * z1 * (1.0 - x2), 0.5 * z2 * (1.0 - x1)],
    ];
    // Right singular vectors from the Gram matrix m^T m.
    let g00 = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let g11 = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let g01 = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let spread = (0.5 * (g00 - g11)).hypot(g01);
    let mean = 0.5 * (g00 + g11);
    let s1 = (mean + spread).sqrt();
    if s1 < 1e-12 || 2.0 * spread <= 1e-9 * (g00 + g11) {
        return None;
    }
    let s2 = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs() / s1;
    let phi = 0.5 * (2.0 * g01).atan2(g00 - g11);
    let right = [[phi.cos(), phi.sin()], [-phi.sin(), phi.cos()]];
    let apply = |v: [f64; 2]| {
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    };
    let l1 = apply(right[0]);
    let left1 = [l1[0] / s1, l1[1] / s1];
    let left = [left1, [-left1[1], left1[0]]];
    // Diagonal blocks of W(0) ⊗ W'(0) in the same sectors.
    let even = [
        [0.25 * (1.0 + x1) * (1.0 + x2), 0.25 * z1 * z2],
        [0.25 * z1 * z2, 0.25 * (1.0 - x1) * (1.0 - x2)],
    ];
    let odd = [
        [0.25 * (1.0 + x1) * (1.0 - x2), 0.25 * z1 * z2],
        [0.25 * z1 * z2, 0.25 * (1.0 - x1) * (1.0 + x2)],
    ];
    let quad = |blk: &[[f64; 2]; 2], v: &[f64; 2]| {
        blk[0][0] * v[0] * v[0] + 2.0 * blk[0][1] * v[0] * v[1] + blk[1][1] * v[1] * v[1]
    };
    let branches = [s1, s2]
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let e = quad(&even, &left[i]);
            let o = quad(&odd, &right[i]);
            let prob = e + o;
            let cross = 0.5 * s;
            Branch {
                prob,
                channel: QubitBSCQ::clamped(
                    cross.atan2(0.5 * (e - o).abs()),
                    1.0 - (e - o).hypot(2.0 * cross) / prob,
                ),
            }
        })
        .collect();
    Some(BranchDistribution::pruned(branches))
}

/// Agreement between a closed form and the paired-measurement path.
#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormCheck {
    pub closed: BranchDistribution,
    pub numeric: BranchDistribution,
    pub max_deviation: f64,
}

impl ClosedFormCheck {
    pub fn agrees(&self, tol: f64) -> bool {
        self.max_deviation <= tol
    }
}

/// Compares [`dg_bit_closed`] against `pm_reduce(W ⊛ W)`.
pub fn validate_dg_bit(dg: DeltaGamma) -> Result<ClosedFormCheck> {
    let w = dg.to_qubit()?.to_general();
    let numeric = pm_reduce(&varoast(&w, &w))?;
    let closed = dg_bit_closed(dg);
    let max_deviation = closed.distance(&numeric);
    Ok(ClosedFormCheck {
        closed,
        numeric,
        max_deviation,
    })
}

/// Compares [`dg_check_closed`] against `pm_reduce(W ⊞ W')`.
pub fn validate_dg_check(a: DeltaGamma, b: DeltaGamma) -> Result<ClosedFormCheck> {
    let numeric = pm_reduce(&boxast(
        &a.to_qubit()?.to_general(),
        &b.to_qubit()?.to_general(),
    ))?;
    let closed = dg_check_closed(a, b);
    let max_deviation = closed.distance(&numeric);
    Ok(ClosedFormCheck {
        closed,
        numeric,
        max_deviation,
    })
}
