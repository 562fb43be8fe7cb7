//! Semiclassical equations of motion for every dissipator family, the
//! analytic fixed points of the bare dissipator and the shifted harmonic
//! oscillator toy model.
//!
//! Operators are replaced by c-numbers with the symmetrization rule
//! {A, B} → 2AB. Every right-hand side returns the time derivative of the
//! 5-vector (q, p, S_x, S_y, S_z).

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{self, DiagError, DiagonalizationResult, DressedCoefficients};
use crate::model::{self, Branch, ModelParams, SemiclassicalState, SrMinimum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiclassicalError {
    #[error("{0} dissipator requires the superradiant phase")]
    NormalPhase(&'static str),
    #[error("diagonalization was computed for different model parameters")]
    ParamMismatch,
    #[error("branch mismatch: dissipator built for {expected}, diagonalization is for {found}")]
    BranchMismatch { expected: Branch, found: Branch },
    #[error("damped critical coupling undefined: 1 - (1 + eps) u = {0} <= 0")]
    NonPositiveDenominator(f64),
    #[error(transparent)]
    Diag(#[from] DiagError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissipatorKind {
    /// Purely unitary flow.
    None,
    /// Lindblad operators built from the bare photon and spin lowering
    /// operators.
    Bare,
    /// Bare dissipator shifted by the condensate and rotated onto the
    /// superradiant minimum.
    AdHocRotated,
    /// Dissipators built from the Bogoliubov polaritons.
    Dressed,
}

impl DissipatorKind {
    pub fn requires_superradiant(self) -> bool {
        matches!(self, DissipatorKind::AdHocRotated | DissipatorKind::Dressed)
    }
}

impl std::fmt::Display for DissipatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DissipatorKind::None => "none",
            DissipatorKind::Bare => "bare",
            DissipatorKind::AdHocRotated => "ad_hoc_rotated",
            DissipatorKind::Dressed => "dressed",
        })
    }
}

/// Hamiltonian flow Ṡ = ∇H × S together with Hamilton's equations for q, p.
pub fn unitary_rhs(x: &SemiclassicalState, params: &ModelParams) -> SemiclassicalState {
    let ModelParams { omega, e_z, g, eps, .. } = *params;
    let dip = (1.0 + eps) * g * g;
    SemiclassicalState {
        q: x.p + g * x.sy,
        p: -omega * omega * x.q,
        sx: g * x.p * x.sz + e_z * x.sy + dip * x.sy * x.sz,
        sy: -e_z * x.sx,
        sz: -g * x.p * x.sx - dip * x.sx * x.sy,
    }
}

/// Unitary flow plus photon damping κ₁ and spin damping κ₂ built from the
/// bare lowering operators.
pub fn bare_rhs(x: &SemiclassicalState, params: &ModelParams) -> SemiclassicalState {
    let mut d = unitary_rhs(x, params);
    let (k1, k2) = (params.kappa1, params.kappa2);
    d.q -= k1 * x.q;
    d.p -= k1 * x.p;
    d.sx -= k2 * x.sx;
    d.sy -= k2 * x.sy;
    d.sz += k2 * (params.n() - 2.0 * x.sz);
    d
}

/// Bare dissipator shifted to p0 and rotated by θ onto one superradiant
/// minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdHocRotated {
    pub params: ModelParams,
    pub minimum: SrMinimum,
}

impl AdHocRotated {
    pub fn new(params: &ModelParams, branch: Branch) -> Result<Self, SemiclassicalError> {
        let minimum =
            model::superradiant_minimum(params, branch).ok_or(SemiclassicalError::NormalPhase("ad hoc rotated"))?;
        Ok(Self {
            params: *params,
            minimum,
        })
    }

    /// The dissipator terms alone (without κ prefactors).
    pub fn dissipator(&self, x: &SemiclassicalState) -> SemiclassicalState {
        let (s, c) = self.minimum.theta.sin_cos();
        let spin = self.params.s;
        SemiclassicalState {
            q: -x.q,
            p: -(x.p - self.minimum.p),
            sx: -x.sx,
            sy: 2.0 * s * spin - (1.0 + s * s) * x.sy - s * c * x.sz,
            sz: 2.0 * c * spin - s * c * x.sy - (1.0 + c * c) * x.sz,
        }
    }

    pub fn rhs(&self, x: &SemiclassicalState) -> SemiclassicalState {
        let mut d = unitary_rhs(x, &self.params);
        let dis = self.dissipator(x);
        let (k1, k2) = (self.params.kappa1, self.params.kappa2);
        d.q += k1 * dis.q;
        d.p += k1 * dis.p;
        d.sx += k2 * dis.sx;
        d.sy += k2 * dis.sy;
        d.sz += k2 * dis.sz;
        d
    }
}

/// Convenience wrapper for a one-off evaluation of the ad hoc dissipator.
pub fn adhoc_rotated_rhs(x: &SemiclassicalState, params: &ModelParams, sr: &SrMinimum) -> SemiclassicalState {
    AdHocRotated {
        params: *params,
        minimum: *sr,
    }
    .rhs(x)
}

/// Polariton-built dissipators weighted by the effective viscosities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dressed {
    pub params: ModelParams,
    pub diag: DiagonalizationResult,
    pub coefficients: DressedCoefficients,
    pub kappa_eff: (f64, f64),
}

impl Dressed {
    pub fn new(
        params: &ModelParams,
        diag: &DiagonalizationResult,
        kappa_eff: (f64, f64),
    ) -> Result<Self, SemiclassicalError> {
        if model::classify_phase(params) != model::Phase::Superradiant {
            return Err(SemiclassicalError::NormalPhase("dressed"));
        }
        if !diag.matches(params) {
            return Err(SemiclassicalError::ParamMismatch);
        }
        Ok(Self {
            params: *params,
            diag: *diag,
            coefficients: diag::dressed_coefficients(diag),
            kappa_eff,
        })
    }

    /// Like [`Dressed::new`], additionally asserting the branch.
    pub fn for_branch(
        params: &ModelParams,
        diag: &DiagonalizationResult,
        branch: Branch,
        kappa_eff: (f64, f64),
    ) -> Result<Self, SemiclassicalError> {
        if diag.branch != branch {
            return Err(SemiclassicalError::BranchMismatch {
                expected: branch,
                found: diag.branch,
            });
        }
        Self::new(params, diag, kappa_eff)
    }

    pub fn branch(&self) -> Branch {
        self.diag.branch
    }

    pub fn rhs(&self, x: &SemiclassicalState) -> SemiclassicalState {
        let mut d = unitary_rhs(x, &self.params).to_array();
        let weights = [self.kappa_eff.0, self.kappa_eff.1];
        for (ch, k) in self.coefficients.channels().iter().zip(weights) {
            if k == 0.0 {
                continue;
            }
            let dis = diag::channel_dissipator(ch, self.diag.theta, self.diag.p0, self.params.s, x);
            for (di, v) in d.iter_mut().zip(dis) {
                *di += k * v;
            }
        }
        d.into()
    }
}

pub fn dressed_rhs(
    x: &SemiclassicalState,
    params: &ModelParams,
    diag: &DiagonalizationResult,
    kappa_eff: (f64, f64),
) -> Result<SemiclassicalState, SemiclassicalError> {
    Ok(Dressed::new(params, diag, kappa_eff)?.rhs(x))
}

/// Damping renormalizations u = 1 + κ₁²/ω² and v = 1 + κ₂²/E_Z².
pub fn damping_factors(params: &ModelParams) -> (f64, f64) {
    (
        1.0 + (params.kappa1 / params.omega).powi(2),
        1.0 + (params.kappa2 / params.e_z).powi(2),
    )
}

/// Critical coupling and dipole parameter of the bare-damped system:
/// g_c = √((E_Z/S) u v / (1 − (1+ε)u)), ε_c = 1/u − 1.
pub fn damped_critical_values(params: &ModelParams) -> Result<(f64, f64), SemiclassicalError> {
    let (u, v) = damping_factors(params);
    let denom = 1.0 - (1.0 + params.eps) * u;
    if !(denom > 0.0) {
        return Err(SemiclassicalError::NonPositiveDenominator(denom));
    }
    Ok(((params.e_z / params.s * u * v / denom).sqrt(), 1.0 / u - 1.0))
}

/// Stationary points of [`bare_rhs`]: the trivial point (0, 0, 0, 0, S) and,
/// beyond the damped thresholds, a pair of tilted points (S_y > 0 first).
pub fn bare_fixed_points(params: &ModelParams) -> Vec<SemiclassicalState> {
    let s = params.s;
    let mut points = vec![SemiclassicalState::new(0.0, 0.0, 0.0, 0.0, s)];
    let Ok((gc, eps_c)) = damped_critical_values(params) else {
        return points;
    };
    if !(params.eps <= eps_c && params.g.abs() >= gc) {
        return points;
    }
    let (u, v) = damping_factors(params);
    let g = params.g;
    let sz = params.e_z / (g * g) * u * v / (1.0 - (1.0 + params.eps) * u);
    let sy_abs = (sz * (2.0 * s - 2.0 * sz) / v).max(0.0).sqrt();
    for sign in [1.0, -1.0] {
        let sy = sign * sy_abs;
        let p = -g * sy / u;
        points.push(SemiclassicalState {
            q: -params.kappa1 * p / (params.omega * params.omega),
            p,
            sx: -params.kappa2 * sy / params.e_z,
            sy,
            sz,
        });
    }
    points
}

/// Shared, thread-safe right-hand side.
pub type Rhs = Arc<dyn Fn(&SemiclassicalState) -> SemiclassicalState + Send + Sync>;

/// Options needed to build a right-hand side for any dissipator.
#[derive(Debug, Clone, Copy)]
pub struct RhsSpec {
    pub kind: DissipatorKind,
    pub branch: Branch,
    /// Dressed-channel weights; defaults to (κ₁, κ₂) when absent.
    pub kappa_eff: Option<(f64, f64)>,
}

pub fn build_rhs(params: &ModelParams, spec: &RhsSpec) -> Result<Rhs, SemiclassicalError> {
    let p = *params;
    Ok(match spec.kind {
        DissipatorKind::None => Arc::new(move |x| unitary_rhs(x, &p)),
        DissipatorKind::Bare => Arc::new(move |x| bare_rhs(x, &p)),
        DissipatorKind::AdHocRotated => {
            let a = AdHocRotated::new(&p, spec.branch)?;
            Arc::new(move |x| a.rhs(x))
        }
        DissipatorKind::Dressed => {
            if model::classify_phase(&p) != model::Phase::Superradiant {
                return Err(SemiclassicalError::NormalPhase("dressed"));
            }
            let d = diag::diagonalize(&p, spec.branch)?;
            let k = spec.kappa_eff.unwrap_or((p.kappa1, p.kappa2));
            let dressed = Dressed::for_branch(&p, &d, spec.branch, k)?;
            Arc::new(move |x| dressed.rhs(x))
        }
    })
}

/// Single damped oscillator with a momentum offset p0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedHoParams {
    pub omega: f64,
    pub p0: f64,
    pub kappa: f64,
    /// Whether the dissipator acts on p − p0 rather than on p.
    pub shifted_dissipator: bool,
}

pub fn shifted_ho_rhs(x: [f64; 2], hop: &ShiftedHoParams) -> [f64; 2] {
    let [q, p] = x;
    let damp_p = if hop.shifted_dissipator { p - hop.p0 } else { p };
    [
        p - hop.p0 - hop.kappa * q,
        -hop.omega * hop.omega * q - hop.kappa * damp_p,
    ]
}

pub fn shifted_ho_fixed_point(hop: &ShiftedHoParams) -> [f64; 2] {
    if hop.shifted_dissipator {
        return [0.0, hop.p0];
    }
    let (w, k) = (hop.omega, hop.kappa);
    [-k / (w * w + k * k) * hop.p0, hop.p0 / (1.0 + (k / w).powi(2))]
}

/// Closed-form solution z(t) = z* + e^{−κt} M(t)(z0 − z*), with M the
/// undamped rotation of the oscillator.
pub fn shifted_ho_exact(x0: [f64; 2], t: f64, hop: &ShiftedHoParams) -> [f64; 2] {
    let fp = shifted_ho_fixed_point(hop);
    let (dq, dp) = (x0[0] - fp[0], x0[1] - fp[1]);
    let w = hop.omega;
    let (s, c) = (w * t).sin_cos();
    let decay = (-hop.kappa * t).exp();
    [
        fp[0] + decay * (c * dq + s / w * dp),
        fp[1] + decay * (-w * s * dq + c * dp),
    ]
}
