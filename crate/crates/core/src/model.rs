//! Extended Dicke model: parameters, semiclassical energy and the closed-form
//! equilibria of the normal and superradiant phases.
//!
//! Units are dimensionless with ħ = 1. The superspin length `s` is a free
//! positive real (N = 2S two-level systems).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("critical coupling requires eps < 0, got eps = {0}")]
    NonNegativeEps(f64),
}

/// Physical constants of the extended Dicke model plus the two bare damping
/// rates (photonic `kappa1`, spin `kappa2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub omega: f64,
    pub e_z: f64,
    pub g: f64,
    pub eps: f64,
    #[serde(default = "default_spin")]
    pub s: f64,
    #[serde(default)]
    pub kappa1: f64,
    #[serde(default)]
    pub kappa2: f64,
}

fn default_spin() -> f64 {
    1.0
}

impl ModelParams {
    pub fn new(omega: f64, e_z: f64, g: f64, eps: f64, s: f64, kappa1: f64, kappa2: f64) -> Result<Self, ModelError> {
        let p = Self {
            omega,
            e_z,
            g,
            eps,
            s,
            kappa1,
            kappa2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters of the bare-dissipator and rotated-dissipator figures,
    /// with the normalized sphere S = 1.
    pub fn fig2() -> Self {
        Self {
            omega: 1.0,
            e_z: 0.2,
            g: 0.46,
            eps: -1.0,
            s: 1.0,
            kappa1: 0.02,
            kappa2: 0.02,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |name, value: f64, ok: bool, reason| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter { name, value, reason })
            }
        };
        check("omega", self.omega, self.omega > 0.0, "must be > 0")?;
        check("e_z", self.e_z, self.e_z > 0.0, "must be > 0")?;
        check("g", self.g, true, "must be finite")?;
        check("eps", self.eps, true, "must be finite")?;
        check("s", self.s, self.s > 0.0, "must be > 0")?;
        check("kappa1", self.kappa1, self.kappa1 >= 0.0, "must be >= 0")?;
        check("kappa2", self.kappa2, self.kappa2 >= 0.0, "must be >= 0")?;
        Ok(())
    }

    /// Number of two-level systems, N = 2S.
    pub fn n(&self) -> f64 {
        2.0 * self.s
    }

    pub fn undamped(&self) -> Self {
        Self {
            kappa1: 0.0,
            kappa2: 0.0,
            ..*self
        }
    }
}

/// The 5-vector (q, p, S_x, S_y, S_z) of photon quadratures and superspin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SemiclassicalState {
    pub q: f64,
    pub p: f64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl SemiclassicalState {
    pub const fn new(q: f64, p: f64, sx: f64, sy: f64, sz: f64) -> Self {
        Self { q, p, sx, sy, sz }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.q, self.p, self.sx, self.sy, self.sz]
    }

    pub fn spin_norm_sq(&self) -> f64 {
        self.sx * self.sx + self.sy * self.sy + self.sz * self.sz
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().map(|x| x.abs()).fold(0.0, f64::max)
    }
}

impl From<[f64; 5]> for SemiclassicalState {
    fn from(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }
}

impl From<SemiclassicalState> for [f64; 5] {
    fn from(s: SemiclassicalState) -> Self {
        s.to_array()
    }
}

/// Selects one of the two degenerate superradiant minima: `Plus` has
/// S_y > 0 and p < 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::Plus => f.write_str("plus"),
            Branch::Minus => f.write_str("minus"),
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plus" | "+" | "+1" => Ok(Branch::Plus),
            "minus" | "-" | "-1" => Ok(Branch::Minus),
            other => Err(format!("unknown branch `{other}` (expected plus|minus)")),
        }
    }
}

/// One of the two symmetry-broken superradiant energy minima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrMinimum {
    /// Rotation of the spin away from the z axis; sin θ = S_y/S.
    pub theta: f64,
    pub sy: f64,
    pub sz: f64,
    pub p: f64,
    pub energy: f64,
    pub branch: Branch,
}

impl SrMinimum {
    pub fn state(&self) -> SemiclassicalState {
        SemiclassicalState::new(0.0, self.p, 0.0, self.sy, self.sz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Normal,
    Superradiant,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Normal => f.write_str("normal"),
            Phase::Superradiant => f.write_str("superradiant"),
        }
    }
}

/// Semiclassical value of the extended Dicke Hamiltonian.
pub fn energy(state: &SemiclassicalState, params: &ModelParams) -> f64 {
    let SemiclassicalState { q, p, sy, sz, .. } = *state;
    let g2 = params.g * params.g;
    0.5 * (p * p + params.omega * params.omega * q * q) + params.g * p * sy - params.e_z * sz
        + (1.0 + params.eps) * 0.5 * g2 * sy * sy
}

pub fn normal_minimum(params: &ModelParams) -> (SemiclassicalState, f64) {
    (
        SemiclassicalState::new(0.0, 0.0, 0.0, 0.0, params.s),
        -params.e_z * params.s,
    )
}

/// g_c = sqrt(-E_Z / (eps S)).
pub fn critical_coupling_undamped(params: &ModelParams) -> Result<f64, ModelError> {
    if params.eps >= 0.0 || params.eps.is_nan() {
        return Err(ModelError::NonNegativeEps(params.eps));
    }
    Ok((-params.e_z / (params.eps * params.s)).sqrt())
}

/// Superradiant iff eps < 0 and |g| is strictly above the undamped critical
/// coupling. The boundary itself counts as normal.
pub fn classify_phase(params: &ModelParams) -> Phase {
    match critical_coupling_undamped(params) {
        Ok(gc) if params.g.abs() > gc => Phase::Superradiant,
        _ => Phase::Normal,
    }
}

/// Superradiant minimum coordinates evaluated without checking the phase.
/// Inside the normal phase S_y is clamped to zero.
pub(crate) fn sr_minimum_unchecked(params: &ModelParams, branch: Branch) -> SrMinimum {
    let s = params.s;
    let g2 = params.g * params.g;
    let sz = -params.e_z / (params.eps * g2);
    let sy = branch.sign() * (s * s - sz * sz).max(0.0).sqrt();
    let p = -params.g * sy;
    let energy = -params.e_z * sz + 0.5 * params.eps * g2 * (s * s - sz * sz);
    SrMinimum {
        theta: (sy / s).atan2(sz / s),
        sy,
        sz,
        p,
        energy,
        branch,
    }
}

/// Both degenerate minima `(plus, minus)`, or `None` in the normal phase.
pub fn superradiant_minima(params: &ModelParams) -> Option<(SrMinimum, SrMinimum)> {
    match classify_phase(params) {
        Phase::Superradiant => Some((
            sr_minimum_unchecked(params, Branch::Plus),
            sr_minimum_unchecked(params, Branch::Minus),
        )),
        Phase::Normal => None,
    }
}

pub fn superradiant_minimum(params: &ModelParams, branch: Branch) -> Option<SrMinimum> {
    superradiant_minima(params).map(|(plus, minus)| match branch {
        Branch::Plus => plus,
        Branch::Minus => minus,
    })
}

/// Lowest semiclassical energy for the given parameters.
pub fn ground_energy(params: &ModelParams) -> f64 {
    match superradiant_minima(params) {
        Some((plus, _)) => plus.energy,
        None => normal_minimum(params).1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn normal_minimum_energy() {
        let p = ModelParams::fig2();
        let (state, e) = normal_minimum(&p);
        assert_abs_diff_eq!(e, -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(energy(&state, &p), -0.2, epsilon = 1e-15);

        let big = ModelParams { s: 100.0, ..p };
        assert_abs_diff_eq!(normal_minimum(&big).1, -20.0, epsilon = 1e-12);
        assert_eq!(energy(&SemiclassicalState::default(), &p), 0.0);
    }

    #[test]
    fn fig2_superradiant_minimum() {
        let p = ModelParams::fig2();
        assert_eq!(classify_phase(&p), Phase::Superradiant);
        let (plus, minus) = superradiant_minima(&p).unwrap();
        // sz = 0.2 / 0.2116, sy = sqrt(1 - sz^2), p = -0.46 sy
        assert_abs_diff_eq!(plus.sz, 0.945_179_584_120_983, epsilon = 1e-12);
        assert_abs_diff_eq!(plus.sy, 0.326_550_997_182_500_75, epsilon = 1e-6);
        assert_abs_diff_eq!(plus.sy, 0.32657, epsilon = 5e-5);
        assert_abs_diff_eq!(plus.p, -0.150_222, epsilon = 5e-5);
        assert_abs_diff_eq!(minus.sy, -plus.sy, epsilon = 0.0);
        assert_abs_diff_eq!(minus.p, -plus.p, epsilon = 0.0);
        assert_abs_diff_eq!(plus.energy, -0.200_318, epsilon = 1e-6);
        assert_abs_diff_eq!(energy(&plus.state(), &p), plus.energy, epsilon = 1e-15);
    }

    #[test]
    fn critical_coupling() {
        let p = ModelParams::fig2();
        assert_abs_diff_eq!(critical_coupling_undamped(&p).unwrap(), 0.447_213_595_5, epsilon = 1e-9);
        let p4 = ModelParams { s: 4.0, ..p };
        assert_abs_diff_eq!(
            critical_coupling_undamped(&p4).unwrap(),
            0.223_606_797_7,
            epsilon = 1e-9
        );
        let p0 = ModelParams { eps: 0.0, ..p };
        assert_eq!(critical_coupling_undamped(&p0), Err(ModelError::NonNegativeEps(0.0)));
    }

    #[test]
    fn phase_classification() {
        let p = ModelParams::fig2();
        assert_eq!(classify_phase(&ModelParams { g: 0.0, ..p }), Phase::Normal);
        let gc = critical_coupling_undamped(&p).unwrap();
        assert_eq!(classify_phase(&ModelParams { g: 0.9 * gc, ..p }), Phase::Normal);
        assert_eq!(classify_phase(&ModelParams { g: gc, ..p }), Phase::Normal);
        assert_eq!(classify_phase(&ModelParams { eps: 1.0, ..p }), Phase::Normal);
        assert!(superradiant_minima(&ModelParams { eps: 1.0, g: 3.0, ..p }).is_none());
    }

    #[test]
    fn boundary_is_degenerate_with_normal() {
        let p = ModelParams::fig2();
        let gc = critical_coupling_undamped(&p).unwrap();
        let at = sr_minimum_unchecked(&ModelParams { g: gc, ..p }, Branch::Plus);
        assert!(at.sy.abs() < 1e-7);
        let above = ModelParams {
            g: gc * (1.0 + 1e-10),
            ..p
        };
        let (plus, _) = superradiant_minima(&above).unwrap();
        assert_abs_diff_eq!(plus.energy, normal_minimum(&above).1, epsilon = 1e-8);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ModelParams::new(0.0, 0.2, 0.46, -1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.2, 0.46, -1.0, -1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.2, 0.46, -1.0, 1.0, -0.1, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.2, f64::NAN, -1.0, 1.0, 0.0, 0.0).is_err());
    }

    fn sr_params() -> impl Strategy<Value = ModelParams> {
        (0.2f64..3.0, 0.05f64..1.0, -2.0f64..-0.05, 0.5f64..5.0, 1.01f64..3.0).prop_map(
            |(omega, e_z, eps, s, ratio)| {
                let gc = (-e_z / (eps * s)).sqrt();
                ModelParams {
                    omega,
                    e_z,
                    g: ratio * gc,
                    eps,
                    s,
                    kappa1: 0.0,
                    kappa2: 0.0,
                }
            },
        )
    }

    proptest! {
        #[test]
        fn superradiant_lies_below_normal(p in sr_params()) {
            prop_assert_eq!(classify_phase(&p), Phase::Superradiant);
            let (plus, minus) = superradiant_minima(&p).unwrap();
            prop_assert!(normal_minimum(&p).1 >= plus.energy);
            prop_assert!((plus.energy - minus.energy).abs() < 1e-12);
            let cos_theta = -p.e_z / (p.eps * p.g * p.g * p.s);
            prop_assert!((plus.theta.cos() - cos_theta).abs() < 1e-12);
            prop_assert!((plus.theta.sin() - plus.sy / p.s).abs() < 1e-12);
            prop_assert!(plus.sy * plus.sy + plus.sz * plus.sz <= p.s * p.s * (1.0 + 1e-12));
        }
    }
}
