//! Two-mode Gaussian states in shot-noise units.
//!
//! Matrices use the mode ordering `(x_A, p_A, x_B, p_B)`. Mode `A` is the
//! sender's retained mode and mode `B` the receiver's mode after the
//! equivalent one-way channel.

use std::f64::consts::LN_2;

use nalgebra::{Matrix2, Matrix4};
use serde::Serialize;

use crate::channel::EquivalentChannel;
use crate::error::{domain, Error, Result};

/// Slack below 1 tolerated on symplectic eigenvalues before they are rejected.
pub const SYMPLECTIC_FLOOR_TOL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-12;

/// Real symmetric 4x4 covariance matrix of a two-mode Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix2Mode(Matrix4<f64>);

impl CovMatrix2Mode {
    /// Wraps `m` after checking symmetry to 1e-12 relative to its largest entry.
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("covariance matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(1.0);
        for i in 0..4 {
            for j in (i + 1)..4 {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Contract(format!(
                        "covariance matrix not symmetric at ({i},{j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_diagonal(d: [f64; 4]) -> Result<Self> {
        Self::new(Matrix4::from_diagonal(&d.into()))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    /// Local block of mode A.
    pub fn block_a(&self) -> Matrix2<f64> {
        self.0.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// Local block of mode B.
    pub fn block_b(&self) -> Matrix2<f64> {
        self.0.fixed_view::<2, 2>(2, 2).into_owned()
    }

    /// Correlation block (rows A, columns B).
    pub fn block_c(&self) -> Matrix2<f64> {
        self.0.fixed_view::<2, 2>(0, 2).into_owned()
    }

    /// True when no entry couples an x quadrature to a p quadrature.
    fn is_quadrature_decoupled(&self) -> bool {
        [(0, 1), (0, 3), (2, 1), (2, 3)]
            .iter()
            .all(|&(i, j)| self.0[(i, j)] == 0.0)
    }
}

/// The two symplectic eigenvalues of a two-mode state, `nu1 >= nu2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymplecticSpectrum {
    pub nu1: f64,
    pub nu2: f64,
}

impl SymplecticSpectrum {
    /// Whether both eigenvalues respect the uncertainty principle.
    pub fn is_physical(&self) -> bool {
        self.nu2 >= 1.0 - SYMPLECTIC_FLOOR_TOL
    }

    /// von Neumann entropy of the state, in bits.
    pub fn entropy(&self) -> Result<f64> {
        Ok(entropy_g(self.nu1)? + entropy_g(self.nu2)?)
    }
}

/// Two-mode squeezed source with the second mode squeezed so that only `x` is modulated.
pub fn source_covariance(v: f64) -> Result<CovMatrix2Mode> {
    if !(v >= 1.0) || !v.is_finite() {
        return domain(format!("source variance must be >= 1, got {v}"));
    }
    let s = v * v - 1.0;
    let cx = (v * s).sqrt();
    let cp = -(s / v).sqrt();
    #[rustfmt::skip]
    let m = Matrix4::new(
        v,   0.0, cx,    0.0,
        0.0, v,   0.0,   cp,
        cx,  0.0, v * v, 0.0,
        0.0, cp,  0.0,   1.0,
    );
    CovMatrix2Mode::new(m)
}

/// State shared by the sender's retained mode and the receiver after the equivalent channel.
pub fn shared_covariance(v: f64, ch: &EquivalentChannel) -> Result<CovMatrix2Mode> {
    if !(v >= 1.0) || !v.is_finite() {
        return domain(format!("source variance must be >= 1, got {v}"));
    }
    check_channel_inputs(ch.t_x, ch.eps_prime_x)?;
    check_channel_inputs(ch.t_p, ch.eps_prime_p)?;
    let s = v * v - 1.0;
    let cx = ch.t_x.sqrt() * (v * s).sqrt();
    let cp = -ch.t_p.sqrt() * (s / v).sqrt();
    let bx = ch.t_x * (s + ch.eps_prime_x) + 1.0;
    let bp = 1.0 + ch.t_p * ch.eps_prime_p;
    #[rustfmt::skip]
    let m = Matrix4::new(
        v,   0.0, cx,  0.0,
        0.0, v,   0.0, cp,
        cx,  0.0, bx,  0.0,
        0.0, cp,  0.0, bp,
    );
    CovMatrix2Mode::new(m)
}

/// Symmetric EPR state of variance `v` sent through a phase-insensitive channel.
pub fn epr_covariance(v: f64, t: f64, eps: f64) -> Result<CovMatrix2Mode> {
    if !(v >= 1.0) || !v.is_finite() {
        return domain(format!("source variance must be >= 1, got {v}"));
    }
    check_channel_inputs(t, eps)?;
    let c = (t * (v * v - 1.0)).sqrt();
    let b = t * (v - 1.0) + 1.0 + t * eps;
    #[rustfmt::skip]
    let m = Matrix4::new(
        v,   0.0, c,   0.0,
        0.0, v,   0.0, -c,
        c,   0.0, b,   0.0,
        0.0, -c,  0.0, b,
    );
    CovMatrix2Mode::new(m)
}

fn check_channel_inputs(t: f64, eps: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return domain(format!("equivalent transmittance must be finite and >= 0, got {t}"));
    }
    if !eps.is_finite() {
        return domain(format!("equivalent excess noise must be finite, got {eps}"));
    }
    Ok(())
}

/// Symplectic spectrum from the two-mode invariants `Delta` and `det(gamma)`.
///
/// `nu^2 = (Delta +- sqrt(Delta^2 - 4 det))/2`. When the state has no
/// x-p cross terms, `Delta` and `det` are the trace and determinant of
/// `X * P` (the product of the x and p blocks), and the discriminant is
/// evaluated from that product without cancellation. Near-pure states
/// would otherwise lose half their significant digits in the square root.
pub fn symplectic_eigenvalues(cov: &CovMatrix2Mode) -> SymplecticSpectrum {
    let g = cov.matrix();
    let (trace, disc, det) = if cov.is_quadrature_decoupled() {
        let x = Matrix2::new(g[(0, 0)], g[(0, 2)], g[(2, 0)], g[(2, 2)]);
        let p = Matrix2::new(g[(1, 1)], g[(1, 3)], g[(3, 1)], g[(3, 3)]);
        let m = x * p;
        let diff = m[(0, 0)] - m[(1, 1)];
        let disc = diff * diff + 4.0 * m[(0, 1)] * m[(1, 0)];
        (m.trace(), disc, x.determinant() * p.determinant())
    } else {
        let delta = cov.block_a().determinant()
            + cov.block_b().determinant()
            + 2.0 * cov.block_c().determinant();
        let det = g.determinant();
        (delta, delta * delta - 4.0 * det, det)
    };
    let root = disc.max(0.0).sqrt();
    let nu1_sq = 0.5 * (trace + root);
    let nu2_sq = if nu1_sq > 0.0 {
        det / nu1_sq
    } else {
        0.5 * (trace - root)
    };
    SymplecticSpectrum {
        nu1: nu1_sq.max(0.0).sqrt(),
        nu2: nu2_sq.max(0.0).sqrt(),
    }
}

/// Symplectic spectrum as the moduli of the eigenvalues of `i * Omega * gamma`.
pub fn symplectic_eigenvalues_eigensolver(cov: &CovMatrix2Mode) -> SymplecticSpectrum {
    #[rustfmt::skip]
    let omega = Matrix4::new(
        0.0,  1.0, 0.0,  0.0,
        -1.0, 0.0, 0.0,  0.0,
        0.0,  0.0, 0.0,  1.0,
        0.0,  0.0, -1.0, 0.0,
    );
    // Eigenvalues of Omega*gamma come in pairs +-i*nu.
    let mut moduli: Vec<f64> = (omega * cov.matrix())
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    SymplecticSpectrum {
        nu1: 0.5 * (moduli[0] + moduli[1]),
        nu2: 0.5 * (moduli[2] + moduli[3]),
    }
}

/// Entropy in bits of a thermal mode with symplectic eigenvalue `nu`.
///
/// Values in `[1 - 1e-9, 1)` are clamped to 1. The expression is evaluated as
/// `log2(a) + b * log2(1 + 1/b)` with `a = (nu+1)/2`, `b = (nu-1)/2`, which
/// equals the textbook difference of `x log x` terms but stays accurate for
/// large `nu`.
pub fn entropy_g(nu: f64) -> Result<f64> {
    if nu.is_nan() || nu < 1.0 - SYMPLECTIC_FLOOR_TOL {
        return domain(format!("symplectic eigenvalue must be >= 1, got {nu}"));
    }
    if nu.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let nu = nu.max(1.0);
    let a = 0.5 * (nu + 1.0);
    let b = 0.5 * (nu - 1.0);
    if b == 0.0 {
        return Ok(0.0);
    }
    Ok(a.log2() + b * (1.0 / b).ln_1p() / LN_2)
}

/// Covariance of mode A after an ideal homodyne measurement of `x_B`.
///
/// Schur complement through the Moore-Penrose pseudo-inverse of
/// `diag(1,0) * gamma_B * diag(1,0)`; a zero `x_B` variance conditions on nothing.
pub fn condition_on_homodyne_x(cov: &CovMatrix2Mode) -> Matrix2<f64> {
    let a = cov.block_a();
    let c = cov.block_c();
    let vb = cov.get(2, 2);
    if vb <= 0.0 {
        return a;
    }
    let col = c.column(0);
    a - (col * col.transpose()) / vb
}

/// Symplectic eigenvalue of a single-mode covariance, `sqrt(det)`.
pub fn single_mode_symplectic(m: &Matrix2<f64>) -> f64 {
    m.determinant().max(0.0).sqrt()
}
