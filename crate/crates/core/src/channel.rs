//! Binary-input symmetric classical-quantum channels.
//!
//! A channel maps a bit `z` to a density matrix `W(z) = U^z ρ U^z` where `U`
//! is a unitary involution. Every qubit channel is unitarily equivalent to the
//! two-parameter family [`QubitBSCQ`]: a pure state at Bloch angle `theta`
//! depolarized with weight `q`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::qla::{herm_eig, kron, vn_entropy, CMatrix};

/// Parameter slack tolerated (and clamped) at the edges of the canonical
/// domain.
const DOMAIN_SLACK: f64 = 1e-9;
/// `q` this close to one is the worthless channel; `theta` is pinned to zero.
pub const WORTHLESS_TOL: f64 = 1e-12;

/// Canonical qubit channel `(theta, q)` with `theta` in `[0, π/2]` and `q` in
/// `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitBSCQ {
    pub theta: f64,
    pub q: f64,
}

/// The `(δ, γ)` view of a qubit channel: `W(0) = [[δ, γ], [γ, 1-δ]]` with
/// symmetry `σx`. `γ` is kept real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaGamma {
    pub delta: f64,
    pub gamma: f64,
}

/// A channel on a `2n`-dimensional space: output density `rho` for input 0 and
/// a unitary involution `u` with `W(1) = u rho u`.
#[derive(Debug, Clone)]
pub struct GeneralBSCQ {
    rho: CMatrix,
    u: CMatrix,
}

impl QubitBSCQ {
    pub const PERFECT: QubitBSCQ = QubitBSCQ {
        theta: FRAC_PI_2,
        q: 0.0,
    };
    pub const WORTHLESS: QubitBSCQ = QubitBSCQ { theta: 0.0, q: 1.0 };

    /// Validates the canonical domain; values within 1e-9 outside it are
    /// clamped.
    pub fn new(theta: f64, q: f64) -> Result<Self> {
        if !(-DOMAIN_SLACK..=FRAC_PI_2 + DOMAIN_SLACK).contains(&theta)
            || !(-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&q)
        {
            return Err(contract(format!(
                "qubit channel parameters out of range: theta={theta}, q={q}"
            )));
        }
        Ok(Self::clamped(theta, q))
    }

    pub(crate) fn clamped(theta: f64, q: f64) -> Self {
        let q = q.clamp(0.0, 1.0);
        if 1.0 - q <= WORTHLESS_TOL {
            return Self::WORTHLESS;
        }
        Self {
            theta: theta.clamp(0.0, FRAC_PI_2),
            q,
        }
    }

    /// Pure-state channel with overlap `cos theta`.
    pub fn pure(theta: f64) -> Result<Self> {
        Self::new(theta, 0.0)
    }

    /// Classical binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        Self::new(FRAC_PI_2, 2.0 * p)
    }

    pub fn delta_gamma(&self) -> DeltaGamma {
        theta_q_to_delta_gamma(self.theta, self.q)
    }

    pub fn density(&self, z: u8) -> CMatrix {
        self.delta_gamma().density(z)
    }

    pub fn to_general(&self) -> GeneralBSCQ {
        GeneralBSCQ {
            rho: self.density(0),
            u: CMatrix::pauli_x(),
        }
    }

    /// `½(1 + (1-q) sin θ)`
    pub fn helstrom(&self) -> f64 {
        0.5 * (1.0 + (1.0 - self.q) * self.theta.sin())
    }

    /// Holevo information (bits) for equiprobable inputs.
    pub fn holevo(&self) -> f64 {
        let w0 = self.density(0);
        let w1 = self.density(1);
        let avg = (&w0 + &w1).scale(0.5);
        // Densities built here are valid by construction.
        let s = |m: &CMatrix| vn_entropy(m).expect("qubit channel density");
        (s(&avg) - 0.5 * s(&w0) - 0.5 * s(&w1)).clamp(0.0, 1.0)
    }

    pub fn is_worthless(&self) -> bool {
        self.helstrom() <= 0.5 + 1e-15
    }
}

impl DeltaGamma {
    pub fn new(delta: f64, gamma: f64) -> Result<Self> {
        let dg = Self { delta, gamma };
        if !(0.0..=1.0).contains(&delta) || gamma * gamma > delta * (1.0 - delta) + 1e-12 {
            return Err(contract(format!(
                "(delta, gamma) = ({delta}, {gamma}) is not a density matrix"
            )));
        }
        Ok(dg)
    }

    pub fn density(&self, z: u8) -> CMatrix {
        let (a, b) = if z == 0 {
            (self.delta, 1.0 - self.delta)
        } else {
            (1.0 - self.delta, self.delta)
        };
        CMatrix::from_real_rows(&[&[a, self.gamma], &[self.gamma, b]])
    }

    pub fn to_qubit(&self) -> Result<QubitBSCQ> {
        delta_gamma_to_theta_q(*self)
    }
}

/// `δ = q/2 + ½(1-q)(1-sin θ)`, `γ = ½(1-q) cos θ`.
pub fn theta_q_to_delta_gamma(theta: f64, q: f64) -> DeltaGamma {
    DeltaGamma {
        delta: 0.5 * q + 0.5 * (1.0 - q) * (1.0 - theta.sin()),
        gamma: 0.5 * (1.0 - q) * theta.cos(),
    }
}

/// Inverse of [`theta_q_to_delta_gamma`] up to the `θ ↔ π-θ` and `γ ↔ -γ`
/// equivalences, which fold into the canonical domain.
pub fn delta_gamma_to_theta_q(dg: DeltaGamma) -> Result<QubitBSCQ> {
    let DeltaGamma { delta, gamma } = dg;
    if !(delta.is_finite() && gamma.is_finite())
        || !(-1e-12..=1.0 + 1e-12).contains(&delta)
        || gamma * gamma > delta * (1.0 - delta) + 1e-12
    {
        return Err(contract(format!(
            "(delta, gamma) = ({delta}, {gamma}) is not a density matrix"
        )));
    }
    Ok(canonical_from_bloch(2.0 * gamma, 0.0, 2.0 * delta - 1.0))
}

/// Canonical parameters from the Bloch vector of `W(0)` in a frame where the
/// symmetry is `σx`: `x` is the component along the symmetry axis.
fn canonical_from_bloch(x: f64, y: f64, z: f64) -> QubitBSCQ {
    let perp = y.hypot(z);
    let r = x.hypot(perp);
    QubitBSCQ::clamped(perp.atan2(x.abs()), 1.0 - r)
}

/// Canonicalizes a (possibly unnormalized) 2x2 matrix whose channel symmetry
/// is `σx`.
pub(crate) fn canonicalize_sigma_x(m: &CMatrix) -> QubitBSCQ {
    let tr = (m[(0, 0)] + m[(1, 1)]).re;
    let off = m[(0, 1)] + m[(1, 0)].conj();
    // Bloch components of m/tr, using the Hermitian part of the off-diagonal.
    let x = off.re / tr;
    let y = -off.im / tr;
    let z = (m[(0, 0)].re - m[(1, 1)].re) / tr;
    canonical_from_bloch(x, y, z)
}

impl GeneralBSCQ {
    /// Validates `rho` (Hermitian, PSD, unit trace, even dimension) and `u`
    /// (unitary involution of matching size).
    pub fn new(rho: CMatrix, u: CMatrix) -> Result<Self> {
        if !rho.is_square() || !u.is_square() || rho.rows() != u.rows() {
            return Err(Error::Dimension(format!(
                "rho is {}x{}, u is {}x{}",
                rho.rows(),
                rho.cols(),
                u.rows(),
                u.cols()
            )));
        }
        if !rho.rows().is_multiple_of(2) {
            return Err(contract(format!("odd channel dimension {}", rho.rows())));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(contract(format!("rho has trace {tr}")));
        }
        let eig = herm_eig(&rho)?;
        if let Some(&min) = eig.values.last() {
            if min < -1e-10 {
                return Err(contract(format!("rho is not PSD (eigenvalue {min:.3e})")));
            }
        }
        let n = u.rows();
        let id = CMatrix::identity(n);
        if !(&u * &u.adjoint()).approx_eq(&id, 1e-10) {
            return Err(contract("u is not unitary"));
        }
        if !(&u * &u).approx_eq(&id, 1e-10) {
            return Err(contract("u is not an involution"));
        }
        Ok(Self {
            rho: rho.hermitian_part(),
            u,
        })
    }

    /// Skips validation; callers guarantee the invariants (combining valid
    /// channels preserves them).
    pub(crate) fn from_parts(rho: CMatrix, u: CMatrix) -> Self {
        Self { rho, u }
    }

    pub fn dim(&self) -> usize {
        self.rho.rows()
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn u(&self) -> &CMatrix {
        &self.u
    }

    pub fn density(&self, z: u8) -> CMatrix {
        if z == 0 {
            self.rho.clone()
        } else {
            &(&self.u * &self.rho) * &self.u
        }
    }

    /// `W(0) - W(1)`
    pub fn difference(&self) -> CMatrix {
        (&self.rho - &self.density(1)).hermitian_part()
    }

    pub fn helstrom(&self) -> f64 {
        helstrom_success(&self.rho, &self.density(1), 0.5).expect("valid channel")
    }

    /// Canonical qubit parameters of a two-dimensional channel.
    pub fn canonicalize(&self) -> Result<QubitBSCQ> {
        if self.dim() != 2 {
            return Err(contract(format!(
                "canonicalize needs a qubit channel, got dimension {}",
                self.dim()
            )));
        }
        let rho = &self.rho;
        let tr = rho.trace().re;
        // Bloch length from the purity: |r|^2 = 2 Tr ρ^2 - 1.
        let purity = (rho * rho).trace().re / (tr * tr);
        let r = (2.0 * purity - 1.0).max(0.0).sqrt();
        let u_trace = self.u.trace().re;
        if u_trace.abs() > 1.0 {
            // u = ±I: both outputs coincide.
            return Ok(QubitBSCQ::clamped(0.0, 1.0 - r));
        }
        let parallel = (rho * &self.u).trace().re / tr;
        let d = self.difference();
        let perp = (d[(0, 0)].re.powi(2) + d[(0, 1)].norm_sqr()).sqrt() / tr;
        let r = parallel.hypot(perp);
        Ok(QubitBSCQ::clamped(perp.atan2(parallel.abs()), 1.0 - r))
    }
}

/// Optimal success probability for discriminating `rho0` (prior `p`) from
/// `rho1` (prior `1-p`), evaluated through the Helstrom projector onto the
/// nonnegative eigenspace of `p rho0 - (1-p) rho1`.
pub fn helstrom_success(rho0: &CMatrix, rho1: &CMatrix, p: f64) -> Result<f64> {
    let (_, success) = helstrom_measurement(rho0, rho1, p)?;
    Ok(success)
}

/// Returns the Helstrom projector `Π₊` together with the success probability.
pub fn helstrom_measurement(rho0: &CMatrix, rho1: &CMatrix, p: f64) -> Result<(CMatrix, f64)> {
    if rho0.rows() != rho1.rows() || rho0.cols() != rho1.cols() {
        return Err(Error::Dimension(format!(
            "cannot discriminate {}x{} from {}x{}",
            rho0.rows(),
            rho0.cols(),
            rho1.rows(),
            rho1.cols()
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(contract(format!("prior {p} outside [0, 1]")));
    }
    let weighted0 = rho0.scale(p);
    let weighted1 = rho1.scale(1.0 - p);
    let eig = herm_eig(&(&weighted0 - &weighted1))?;
    let mut success = 0.0;
    for (lam, v) in eig.values.iter().zip(&eig.vectors) {
        success += if *lam >= 0.0 {
            weighted0.sandwich(v, v).re
        } else {
            weighted1.sandwich(v, v).re
        };
    }
    Ok((eig.projector(|l| l >= 0.0), success))
}

pub fn helstrom_qubit(w: &QubitBSCQ) -> f64 {
    w.helstrom()
}

pub fn holevo(w: &QubitBSCQ) -> f64 {
    w.holevo()
}

/// Canonical form of the flip-mixture family
/// `W(z) = (1-p) H|(-1)^z θ⟩⟨·|H + p H|(-1)^{z⊕1} θ⟩⟨·|H`.
///
/// `q = 1 - sqrt(1 - 4p(1-p) sin²θ)` and the canonical angle satisfies
/// `cos θ̃ = cos θ / (1-q)`, `sin θ̃ = (1-2p) sin θ / (1-q)`.
pub fn from_flip_family(theta: f64, p: f64) -> Result<QubitBSCQ> {
    if !(0.0..=FRAC_PI_2 + DOMAIN_SLACK).contains(&theta)
        || !(0.0..=0.5 + DOMAIN_SLACK).contains(&p)
    {
        return Err(contract(format!(
            "flip family needs theta in [0, π/2] and p in [0, 1/2], got ({theta}, {p})"
        )));
    }
    let s = theta.sin();
    let x = theta.cos();
    let z = (1.0 - 2.0 * p) * s;
    Ok(canonical_from_bloch(x, 0.0, z))
}

/// Direct density-matrix construction of the flip-mixture family (symmetry
/// `σx`).
pub fn flip_family_channel(theta: f64, p: f64) -> GeneralBSCQ {
    let h = CMatrix::hadamard();
    let ket = |t: f64| {
        vec![
            Complex64::new((t / 2.0).cos(), 0.0),
            Complex64::new((t / 2.0).sin(), 0.0),
        ]
    };
    let proj = |t: f64| {
        let v = h.mul_vec(&ket(t));
        CMatrix::outer(&v, &v)
    };
    let rho = &proj(theta).scale(1.0 - p) + &proj(-theta).scale(p);
    GeneralBSCQ::from_parts(rho, CMatrix::pauli_x())
}

/// Tensor product of qubit channels, `W_1(z) ⊗ ... ⊗ W_k(z)`.
pub fn product_density(channels: &[QubitBSCQ], bits: &[u8]) -> CMatrix {
    channels
        .iter()
        .zip(bits)
        .fold(CMatrix::identity(1), |acc, (w, &b)| {
            kron(&acc, &w.density(b))
        })
}

/// JSON form of a channel: either canonical qubit parameters or a full
/// density matrix with its symmetry, each as row-major `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Qubit {
        theta: f64,
        q: f64,
    },
    General {
        rho: Vec<[f64; 2]>,
        u: Vec<[f64; 2]>,
    },
}

impl ChannelSpec {
    pub fn to_general(&self) -> Result<GeneralBSCQ> {
        match self {
            ChannelSpec::Qubit { theta, q } => Ok(QubitBSCQ::new(*theta, *q)?.to_general()),
            ChannelSpec::General { rho, u } => {
                let to_matrix = |entries: &[[f64; 2]]| -> Result<CMatrix> {
                    let n = (entries.len() as f64).sqrt().round() as usize;
                    CMatrix::from_vec(
                        n,
                        n,
                        entries
                            .iter()
                            .map(|[re, im]| Complex64::new(*re, *im))
                            .collect(),
                    )
                };
                GeneralBSCQ::new(to_matrix(rho)?, to_matrix(u)?)
            }
        }
    }

    pub fn from_general(w: &GeneralBSCQ) -> Self {
        let flat = |m: &CMatrix| m.as_slice().iter().map(|z| [z.re, z.im]).collect();
        ChannelSpec::General {
            rho: flat(w.rho()),
            u: flat(w.u()),
        }
    }
}

impl From<QubitBSCQ> for ChannelSpec {
    fn from(w: QubitBSCQ) -> Self {
        ChannelSpec::Qubit {
            theta: w.theta,
            q: w.q,
        }
    }
}
