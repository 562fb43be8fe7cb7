//! Superradiant-frame diagonalization of the quadratic fluctuation
//! Hamiltonian, polariton Bogoliubov coefficients, the dressed-dissipator
//! coefficient tables and the bath-derived effective viscosities.
//!
//! The photon is shifted by the condensate momentum `p0` and the spin frame
//! is rotated by θ onto the chosen superradiant minimum. A Holstein–Primakoff
//! boson `b` then describes small spin fluctuations, and the two coupled
//! oscillators `c`, `b` are mixed by the Bogoliubov angle χ into the
//! polaritons `d1`, `d2` with energies ε₁, ε₂.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, Branch, ModelError, ModelParams, Phase, SemiclassicalState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("parameters are in the normal phase; the superradiant diagonalization is undefined")]
    NormalPhase,
    #[error("negative coupling g = {0} is not supported (flip the sign of S_y instead)")]
    NegativeCoupling(f64),
    #[error("unstable polariton spectrum: eps1^2 = {eps1_sq}, eps2^2 = {eps2_sq}")]
    Unstable { eps1_sq: f64, eps2_sq: f64 },
    #[error("spectral density is negative or non-finite at nu = {nu}: {value}")]
    NegativeSpectral { nu: f64, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Result of the superradiant-frame diagonalization for one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalizationResult {
    pub theta: f64,
    pub chi: f64,
    /// Spin-wave stiffness F = E_Z / cos θ.
    #[serde(rename = "F")]
    pub f_cap: f64,
    /// Constant energy offset of the diagonal form (equals E^SR).
    #[serde(rename = "G")]
    pub g_cap: f64,
    #[serde(rename = "K")]
    pub k_cap: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub p0: f64,
    pub branch: Branch,
    /// Photon–spin coupling λ = g ω √(S F) cos θ in the quadratic form.
    pub coupling: f64,
    /// Squared spin frequency including the dipole term,
    /// F² + 2 S K F cos²θ.
    pub stiffness_sq: f64,
    pub params: ModelParams,
}

impl DiagonalizationResult {
    pub fn omega(&self) -> f64 {
        self.params.omega
    }

    pub fn s(&self) -> f64 {
        self.params.s
    }

    /// Superradiant minimum described by this frame.
    pub fn minimum(&self) -> SemiclassicalState {
        let s = self.params.s;
        SemiclassicalState::new(0.0, self.p0, 0.0, s * self.theta.sin(), s * self.theta.cos())
    }

    /// Whether this result was computed for exactly these physical
    /// constants (damping rates are ignored).
    pub fn matches(&self, params: &ModelParams) -> bool {
        self.params.undamped() == params.undamped()
    }
}

/// Frequencies of the two normal modes in the superradiant frame.
pub fn diagonalize(params: &ModelParams, branch: Branch) -> Result<DiagonalizationResult, DiagError> {
    params.validate()?;
    if model::classify_phase(params) == Phase::Normal {
        return Err(DiagError::NormalPhase);
    }
    if params.g < 0.0 {
        return Err(DiagError::NegativeCoupling(params.g));
    }
    let min = model::sr_minimum_unchecked(params, branch);
    let theta = min.theta;
    let cos_t = theta.cos();
    let s = params.s;
    let omega = params.omega;
    let f_cap = params.e_z / cos_t;
    let g_cap = -0.5 * params.e_z * s * (1.0 + cos_t * cos_t) / cos_t;
    let k_cap = 0.5 * (1.0 + params.eps) * params.g * params.g;
    let coupling = params.g * omega * (s * f_cap).sqrt() * cos_t;
    let stiffness_sq = f_cap * f_cap + 2.0 * s * k_cap * f_cap * cos_t * cos_t;
    // atan2 with a positive first argument keeps 2χ inside (0, π).
    let two_chi = (2.0 * coupling).atan2(stiffness_sq - omega * omega);
    let chi = 0.5 * two_chi;
    let (eps1_sq, eps2_sq) = energies_sq_simplified(omega, coupling, two_chi);
    if !(eps1_sq > 0.0 && eps2_sq > 0.0) {
        return Err(DiagError::Unstable { eps1_sq, eps2_sq });
    }
    Ok(DiagonalizationResult {
        theta,
        chi,
        f_cap,
        g_cap,
        k_cap,
        eps1: eps1_sq.sqrt(),
        eps2: eps2_sq.sqrt(),
        p0: -params.g * s * theta.sin(),
        branch,
        coupling,
        stiffness_sq,
        params: *params,
    })
}

/// ε²₁,₂ = ω² + λ (cos 2χ ∓ 1) / sin 2χ.
fn energies_sq_simplified(omega: f64, coupling: f64, two_chi: f64) -> (f64, f64) {
    let (s2, c2) = two_chi.sin_cos();
    let w2 = omega * omega;
    (w2 + coupling * (c2 - 1.0) / s2, w2 + coupling * (c2 + 1.0) / s2)
}

/// Polariton energies from the unsimplified quadratic-form expression
/// 2ε²₁,₂ = ω² + F'² ∓ (F'² − ω²) cos 2χ ∓ 2λ sin 2χ, evaluated at the
/// diagonalizing angle. Independent of the simplified route used by
/// [`diagonalize`] and therefore usable as a cross-check.
pub fn energies_full(diag: &DiagonalizationResult) -> Result<(f64, f64), DiagError> {
    energies_at_angle(diag, diag.chi)
}

/// Expectation values of the quadratic form along the directions rotated by
/// an arbitrary angle χ. At the diagonalizing angle these are the polariton
/// energies; at χ = 0 they are the bare photon and spin frequencies.
pub fn energies_at_angle(diag: &DiagonalizationResult, chi: f64) -> Result<(f64, f64), DiagError> {
    let w2 = diag.omega() * diag.omega();
    let f2 = diag.stiffness_sq;
    let (s2, c2) = (2.0 * chi).sin_cos();
    let mean = w2 + f2;
    let split = (f2 - w2) * c2 + 2.0 * diag.coupling * s2;
    let eps1_sq = 0.5 * (mean - split);
    let eps2_sq = 0.5 * (mean + split);
    if !(eps1_sq > 0.0 && eps2_sq > 0.0) {
        return Err(DiagError::Unstable { eps1_sq, eps2_sq });
    }
    Ok((eps1_sq.sqrt(), eps2_sq.sqrt()))
}

/// Coefficients of one polariton, d = α c + β c† + γ b + δ b†.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl ModeCoefficients {
    /// α² − β² + γ² − δ², equal to one for a canonical boson.
    pub fn normalization(&self) -> f64 {
        self.alpha * self.alpha - self.beta * self.beta + self.gamma * self.gamma - self.delta * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BogoliubovCoefficients {
    pub mode1: ModeCoefficients,
    pub mode2: ModeCoefficients,
}

impl BogoliubovCoefficients {
    pub fn modes(&self) -> [ModeCoefficients; 2] {
        [self.mode1, self.mode2]
    }

    /// Rows (d1, d1†, d2, d2†) expressed in the basis (c, c†, b, b†).
    pub fn forward_matrix(&self) -> [[f64; 4]; 4] {
        let row = |m: &ModeCoefficients| [m.alpha, m.beta, m.gamma, m.delta];
        let row_dag = |m: &ModeCoefficients| [m.beta, m.alpha, m.delta, m.gamma];
        [
            row(&self.mode1),
            row_dag(&self.mode1),
            row(&self.mode2),
            row_dag(&self.mode2),
        ]
    }
}

/// Symmetric/antisymmetric squeezing pair ((√(x/ε) + √(ε/x))/2,
/// (√(x/ε) − √(ε/x))/2) for an oscillator of frequency `x` re-quantized at ε.
fn squeeze_pair(x: f64, energy: f64) -> (f64, f64) {
    let r = (x / energy).sqrt();
    (0.5 * (r + 1.0 / r), 0.5 * (r - 1.0 / r))
}

/// Polariton operators in terms of the shifted photon `c` and the
/// Holstein–Primakoff boson `b`:
/// d₁ = cos χ·(photon at ε₁) − sin χ·(spin at ε₁),
/// d₂ = sin χ·(photon at ε₂) + cos χ·(spin at ε₂).
///
/// This is the exact inverse of [`dressed_from_bogoliubov`].
pub fn bogoliubov_coefficients(diag: &DiagonalizationResult) -> BogoliubovCoefficients {
    let (sin_c, cos_c) = diag.chi.sin_cos();
    let omega = diag.omega();
    let f = diag.f_cap;
    let mode = |energy: f64, photon: f64, spin: f64| {
        let (a, b) = squeeze_pair(omega, energy);
        let (g, d) = squeeze_pair(f, energy);
        ModeCoefficients {
            alpha: photon * a,
            beta: photon * b,
            gamma: spin * g,
            delta: spin * d,
        }
    };
    BogoliubovCoefficients {
        mode1: mode(diag.eps1, cos_c, -sin_c),
        mode2: mode(diag.eps2, sin_c, cos_c),
    }
}

/// Rows (c, c†, b, b†) expressed in the polariton basis (d1, d1†, d2, d2†):
///
/// ```text
/// c =  (cos χ/2)[(√(ε₁/ω) − √(ω/ε₁)) d₁† + (√(ε₁/ω) + √(ω/ε₁)) d₁]
///    + (sin χ/2)[same with ε₂, d₂]
/// b = −(sin χ/2)[(√(ε₁/F) − √(F/ε₁)) d₁† + (√(ε₁/F) + √(F/ε₁)) d₁]
///    + (cos χ/2)[same with ε₂, d₂]
/// ```
pub fn dressed_from_bogoliubov(diag: &DiagonalizationResult) -> [[f64; 4]; 4] {
    let (sin_c, cos_c) = diag.chi.sin_cos();
    let omega = diag.omega();
    let f = diag.f_cap;
    // (coefficient of d, coefficient of d†) for a mode of frequency x at energy ε.
    let pair = |x: f64, energy: f64| {
        let r = (energy / x).sqrt();
        (0.5 * (r + 1.0 / r), 0.5 * (r - 1.0 / r))
    };
    let (c1, c1d) = pair(omega, diag.eps1);
    let (c2, c2d) = pair(omega, diag.eps2);
    let (b1, b1d) = pair(f, diag.eps1);
    let (b2, b2d) = pair(f, diag.eps2);
    let c_row = [cos_c * c1, cos_c * c1d, sin_c * c2, sin_c * c2d];
    let b_row = [-sin_c * b1, -sin_c * b1d, cos_c * b2, cos_c * b2d];
    let dag = |r: [f64; 4]| [r[1], r[0], r[3], r[2]];
    [c_row, dag(c_row), b_row, dag(b_row)]
}

/// max |(inverse ∘ forward) − I| over the 4×4 coefficient space.
pub fn round_trip_residual(diag: &DiagonalizationResult) -> f64 {
    let fwd = bogoliubov_coefficients(diag).forward_matrix();
    let inv = dressed_from_bogoliubov(diag);
    let fwd = Matrix4::from_fn(|i, j| fwd[i][j]);
    let inv = Matrix4::from_fn(|i, j| inv[i][j]);
    (inv * fwd - Matrix4::identity()).amax()
}

/// The six dissipator constants of one dressed channel. In the rotated,
/// shifted frame (q̃ = q, p̃ = p − p0, J = R(θ) S) the channel acts as
/// D[q̃] = −A q̃ + B J_x,   D[p̃] = −A p̃ + C J_y,
/// D[J_x] = −D J_x + E q̃,  D[J_y] = −D J_y + F p̃,
/// D[J_z] = 2D (S − J_z) − C q̃ J_x − B p̃ J_y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl ChannelCoefficients {
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.a - other.a,
            self.b - other.b,
            self.c - other.c,
            self.d - other.d,
            self.e - other.e,
            self.f - other.f,
        ]
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedCoefficients {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub e1: f64,
    pub e2: f64,
    pub f1: f64,
    pub f2: f64,
}

impl DressedCoefficients {
    pub fn from_channels(ch1: ChannelCoefficients, ch2: ChannelCoefficients) -> Self {
        Self {
            a1: ch1.a,
            a2: ch2.a,
            b1: ch1.b,
            b2: ch2.b,
            c1: ch1.c,
            c2: ch2.c,
            d1: ch1.d,
            d2: ch2.d,
            e1: ch1.e,
            e2: ch2.e,
            f1: ch1.f,
            f2: ch2.f,
        }
    }

    pub fn channel1(&self) -> ChannelCoefficients {
        ChannelCoefficients {
            a: self.a1,
            b: self.b1,
            c: self.c1,
            d: self.d1,
            e: self.e1,
            f: self.f1,
        }
    }

    pub fn channel2(&self) -> ChannelCoefficients {
        ChannelCoefficients {
            a: self.a2,
            b: self.b2,
            c: self.c2,
            d: self.d2,
            e: self.e2,
            f: self.f2,
        }
    }

    pub fn channels(&self) -> [ChannelCoefficients; 2] {
        [self.channel1(), self.channel2()]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.channel1()
            .max_abs_diff(&other.channel1())
            .max(self.channel2().max_abs_diff(&other.channel2()))
    }
}

/// Closed-form coefficient table:
/// 2A₁ = 2D₂ = cos²χ, 2A₂ = 2D₁ = sin²χ, and with s·c = sin χ cos χ
/// 2B₁,₂ = ±sc √(F/S)/ω, 2C₁,₂ = ±sc ω/√(SF),
/// 2E₁,₂ = ±sc ω √(S/F), 2F₁,₂ = ±sc √(SF)/ω.
pub fn dressed_coefficients(diag: &DiagonalizationResult) -> DressedCoefficients {
    let (sin_c, cos_c) = diag.chi.sin_cos();
    let sc = sin_c * cos_c;
    let (omega, s, f) = (diag.omega(), diag.s(), diag.f_cap);
    let channel = |sign: f64, a: f64, d: f64| ChannelCoefficients {
        a: 0.5 * a,
        b: 0.5 * sign * sc * (f / s).sqrt() / omega,
        c: 0.5 * sign * sc * omega / (s * f).sqrt(),
        d: 0.5 * d,
        e: 0.5 * sign * sc * omega * (s / f).sqrt(),
        f: 0.5 * sign * sc * (s * f).sqrt() / omega,
    };
    DressedCoefficients::from_channels(
        channel(1.0, cos_c * cos_c, sin_c * sin_c),
        channel(-1.0, sin_c * sin_c, cos_c * cos_c),
    )
}

/// Coordinates in the shifted, rotated frame of one superradiant minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedCoordinates {
    pub qt: f64,
    pub pt: f64,
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
}

impl RotatedCoordinates {
    pub fn from_state(state: &SemiclassicalState, theta: f64, p0: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            qt: state.q,
            pt: state.p - p0,
            jx: state.sx,
            jy: c * state.sy - s * state.sz,
            jz: s * state.sy + c * state.sz,
        }
    }
}

/// Generic single-channel dissipator for d = α c + β c† + γ b + δ b†,
/// written in the rotated frame. Returns (D[q̃], D[p̃], D[J_x], D[J_y], D[J_z]).
pub fn rotated_frame_dissipator(mode: &ModeCoefficients, omega: f64, s: f64, x: &RotatedCoordinates) -> [f64; 5] {
    let ModeCoefficients {
        alpha: al,
        beta: be,
        gamma: ga,
        delta: de,
    } = *mode;
    let photon = 0.5 * (al * al - be * be);
    let spin = 0.5 * (ga * ga - de * de);
    let d_q = -photon * x.qt + (1.0 / (omega * s)).sqrt() * (be - al) * (de + ga) * 0.5 * x.jx;
    let d_p = -photon * x.pt + (al + be) * (de - ga) * 0.5 * (omega / s).sqrt() * x.jy;
    let d_jx = -spin * x.jx + (de - ga) * (al + be) * 0.5 * (omega * s).sqrt() * x.qt;
    let d_jy = -spin * x.jy + (de + ga) * (be - al) * 0.5 * (s / omega).sqrt() * x.pt;
    let d_jz = 2.0 * spin * (s - x.jz)
        + (al + be) * (ga - de) * 0.5 * (omega / s).sqrt() * x.qt * x.jx
        + (al - be) * (ga + de) * 0.5 * (1.0 / (omega * s)).sqrt() * x.pt * x.jy;
    [d_q, d_p, d_jx, d_jy, d_jz]
}

/// Maps a rotated-frame dissipator back onto (q, p, S_x, S_y, S_z).
pub fn rotate_back(theta: f64, d: [f64; 5]) -> [f64; 5] {
    let (s, c) = theta.sin_cos();
    [d[0], d[1], d[2], c * d[3] + s * d[4], -s * d[3] + c * d[4]]
}

/// Reads the A–F constants off the generic dissipator of one mode.
pub fn channel_from_mode(mode: &ModeCoefficients, omega: f64, s: f64) -> ChannelCoefficients {
    let ModeCoefficients {
        alpha: al,
        beta: be,
        gamma: ga,
        delta: de,
    } = *mode;
    ChannelCoefficients {
        a: 0.5 * (al * al - be * be),
        b: (1.0 / (omega * s)).sqrt() * (be - al) * (de + ga) * 0.5,
        c: (al + be) * (de - ga) * 0.5 * (omega / s).sqrt(),
        d: 0.5 * (ga * ga - de * de),
        e: (de - ga) * (al + be) * 0.5 * (omega * s).sqrt(),
        f: (de + ga) * (be - al) * 0.5 * (s / omega).sqrt(),
    }
}

/// A–F table obtained by pushing the Bogoliubov coefficients through the
/// generic dissipator, as an independent route to [`dressed_coefficients`].
pub fn dressed_coefficients_from_pipeline(diag: &DiagonalizationResult) -> DressedCoefficients {
    let bog = bogoliubov_coefficients(diag);
    DressedCoefficients::from_channels(
        channel_from_mode(&bog.mode1, diag.omega(), diag.s()),
        channel_from_mode(&bog.mode2, diag.omega(), diag.s()),
    )
}

/// Evaluates one channel's A–F dissipator at a state, in lab coordinates.
pub fn channel_dissipator(
    ch: &ChannelCoefficients,
    theta: f64,
    p0: f64,
    s: f64,
    state: &SemiclassicalState,
) -> [f64; 5] {
    let x = RotatedCoordinates::from_state(state, theta, p0);
    let rot = [
        -ch.a * x.qt + ch.b * x.jx,
        -ch.a * x.pt + ch.c * x.jy,
        -ch.d * x.jx + ch.e * x.qt,
        -ch.d * x.jy + ch.f * x.pt,
        2.0 * ch.d * (s - x.jz) - ch.c * x.qt * x.jx - ch.b * x.pt * x.jy,
    ];
    rotate_back(theta, rot)
}

/// A user-supplied spectral density ν ↦ g(ν)α²(ν).
#[derive(Clone)]
pub struct CustomSpectral(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomSpectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomSpectral(..)")
    }
}

/// Bath spectral density g(ν)α²(ν).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpectralDensity {
    /// Identically zero: no bath.
    Zero,
    /// (η/π), frequency independent.
    Flat { eta: f64 },
    /// (η/π) ν exp(−ν/ν_c), the Caldeira–Leggett ohmic form.
    Ohmic { eta: f64, cutoff: f64 },
    #[serde(skip)]
    Custom(CustomSpectral),
}

impl Default for SpectralDensity {
    fn default() -> Self {
        SpectralDensity::Ohmic {
            eta: 0.02,
            cutoff: 10.0,
        }
    }
}

impl SpectralDensity {
    pub fn eval(&self, nu: f64) -> f64 {
        match self {
            SpectralDensity::Zero => 0.0,
            SpectralDensity::Flat { eta } => eta / PI,
            SpectralDensity::Ohmic { eta, cutoff } => eta / PI * nu * (-nu / cutoff).exp(),
            SpectralDensity::Custom(f) => (f.0)(nu),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BathChannel {
    /// Couples to the photon quadrature.
    Photon,
    /// Couples to the transverse spin.
    Spin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    #[serde(default)]
    pub spectral: SpectralDensity,
    #[serde(default)]
    pub temperature: f64,
    pub channel: BathChannel,
}

impl BathSpec {
    pub fn new(spectral: SpectralDensity, temperature: f64, channel: BathChannel) -> Self {
        Self {
            spectral,
            temperature,
            channel,
        }
    }

    /// Golden-rule rate κ(ν) = π g(ν) α²(ν).
    pub fn rate(&self, nu: f64) -> Result<f64, DiagError> {
        let value = self.spectral.eval(nu);
        if !(value >= 0.0 && value.is_finite()) {
            return Err(DiagError::NegativeSpectral { nu, value });
        }
        Ok(PI * value)
    }
}

/// Holstein–Primakoff amplitude used for S⁻ → λ b. It fixes the weight of
/// the spin bath in the effective viscosities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HpNormalization {
    /// S⁻ → √(S/2) b: spin weight S/(2F).
    #[default]
    Reduced,
    /// S⁻ → √(2S) b: spin weight 2S/F.
    Conventional,
}

impl HpNormalization {
    pub fn spin_weight(self, s: f64, f_cap: f64) -> f64 {
        match self {
            HpNormalization::Reduced => s / (2.0 * f_cap),
            HpNormalization::Conventional => 2.0 * s / f_cap,
        }
    }
}

/// κ_eff1 = ε₁(cos²χ κ_a(ε₁)/ω + w_S sin²χ κ_S(ε₁)),
/// κ_eff2 = ε₂(sin²χ κ_a(ε₂)/ω + w_S cos²χ κ_S(ε₂)), with the spin weight
/// w_S from the Holstein–Primakoff normalization.
pub fn effective_viscosities(
    diag: &DiagonalizationResult,
    bath_a: &BathSpec,
    bath_s: &BathSpec,
    hp: HpNormalization,
) -> Result<(f64, f64), DiagError> {
    let (sin_c, cos_c) = diag.chi.sin_cos();
    let (c2, s2) = (cos_c * cos_c, sin_c * sin_c);
    let omega = diag.omega();
    let w_s = hp.spin_weight(diag.s(), diag.f_cap);
    let k1 = diag.eps1 * (c2 * bath_a.rate(diag.eps1)? / omega + w_s * s2 * bath_s.rate(diag.eps1)?);
    let k2 = diag.eps2 * (s2 * bath_a.rate(diag.eps2)? / omega + w_s * c2 * bath_s.rate(diag.eps2)?);
    Ok((k1, k2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fig2() -> DiagonalizationResult {
        diagonalize(&ModelParams::fig2(), Branch::Plus).unwrap()
    }

    #[test]
    fn fig2_values() {
        let d = fig2();
        let p = ModelParams::fig2();
        assert_abs_diff_eq!(d.theta.cos(), 0.945_179_584_120_983, epsilon = 1e-12);
        assert_abs_diff_eq!(d.f_cap * d.theta.cos(), p.e_z, epsilon = 1e-15);
        assert_abs_diff_eq!(d.k_cap, 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(
            d.g_cap,
            model::superradiant_minima(&p).unwrap().0.energy,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(d.p0, -0.150_213_458_703_950_3, epsilon = 1e-12);
        assert!(d.chi > 0.0 && d.chi < PI / 2.0);
        assert!(d.eps1 > 0.0 && d.eps2 > 0.0 && d.eps1 < d.eps2);
        let (e1, e2) = energies_full(&d).unwrap();
        assert_abs_diff_eq!(e1, d.eps1, epsilon = 1e-12);
        assert_abs_diff_eq!(e2, d.eps2, epsilon = 1e-12);
    }

    #[test]
    fn mirror_branch_has_same_spectrum() {
        let plus = fig2();
        let minus = diagonalize(&ModelParams::fig2(), Branch::Minus).unwrap();
        assert_abs_diff_eq!(minus.theta, -plus.theta, epsilon = 1e-15);
        assert_abs_diff_eq!(minus.p0, -plus.p0, epsilon = 1e-15);
        assert_abs_diff_eq!(minus.eps1, plus.eps1, epsilon = 1e-15);
        assert_abs_diff_eq!(minus.eps2, plus.eps2, epsilon = 1e-15);
    }

    #[test]
    fn forced_zero_angle_gives_bare_frequencies() {
        let d = fig2();
        let (e1, e2) = energies_at_angle(&d, 0.0).unwrap();
        assert_abs_diff_eq!(e1, 1.0, epsilon = 1e-14);
        // K = 0 at eps = -1, so the spin frequency is F itself.
        assert_abs_diff_eq!(e2, d.f_cap, epsilon = 1e-14);
    }

    #[test]
    fn soft_mode_near_threshold() {
        let base = ModelParams::fig2();
        let gc = model::critical_coupling_undamped(&base).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..=4 {
            let g = gc * (1.0 + 10f64.powi(-k));
            let d = diagonalize(&ModelParams { g, ..base }, Branch::Plus).unwrap();
            let soft = d.eps1.min(d.eps2);
            assert!(soft < last);
            last = soft;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn rejects_normal_phase() {
        let p = ModelParams {
            g: 0.3,
            ..ModelParams::fig2()
        };
        assert_eq!(diagonalize(&p, Branch::Plus), Err(DiagError::NormalPhase));
    }

    #[test]
    fn zero_angle_photon_is_pure() {
        let mut d = fig2();
        d.chi = 0.0;
        let bog = bogoliubov_coefficients(&d);
        assert_eq!(bog.mode1.gamma, 0.0);
        assert_eq!(bog.mode1.delta, 0.0);
    }

    #[test]
    fn coefficient_table_structure() {
        let d = fig2();
        let t = dressed_coefficients(&d);
        let (s, c) = d.chi.sin_cos();
        assert_abs_diff_eq!(2.0 * t.a1, c * c, epsilon = 1e-15);
        assert_abs_diff_eq!(2.0 * t.d2, c * c, epsilon = 1e-15);
        assert_abs_diff_eq!(2.0 * t.a2, s * s, epsilon = 1e-15);
        assert_abs_diff_eq!(2.0 * t.d1, s * s, epsilon = 1e-15);
        for (x, y) in [(t.b1, t.b2), (t.c1, t.c2), (t.e1, t.e2), (t.f1, t.f2)] {
            assert_eq!(x, -y);
        }
        assert!(t.max_abs_diff(&dressed_coefficients_from_pipeline(&d)) < 1e-12);
    }

    #[test]
    fn quarter_angle_table_value() {
        let mut d = fig2();
        d.chi = PI / 4.0;
        let t = dressed_coefficients(&d);
        assert_abs_diff_eq!(2.0 * t.b1, 0.5 / d.omega() * (d.f_cap / d.s()).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn viscosities() {
        let d = fig2();
        let zero = |ch| BathSpec::new(SpectralDensity::Zero, 0.0, ch);
        let r = effective_viscosities(
            &d,
            &zero(BathChannel::Photon),
            &zero(BathChannel::Spin),
            HpNormalization::Reduced,
        )
        .unwrap();
        assert_eq!(r, (0.0, 0.0));

        let eta = 0.3;
        let flat = |ch, t| BathSpec::new(SpectralDensity::Flat { eta }, t, ch);
        let (k1, _) = effective_viscosities(
            &d,
            &flat(BathChannel::Photon, 0.0),
            &flat(BathChannel::Spin, 0.0),
            HpNormalization::Reduced,
        )
        .unwrap();
        let (s, c) = d.chi.sin_cos();
        let expected = d.eps1 * eta * (c * c / d.omega() + d.s() * s * s / (2.0 * d.f_cap));
        assert_abs_diff_eq!(k1, expected, epsilon = 1e-15);

        let hot = effective_viscosities(
            &d,
            &flat(BathChannel::Photon, 5.0),
            &flat(BathChannel::Spin, 5.0),
            HpNormalization::Reduced,
        )
        .unwrap();
        assert_eq!(hot.0, k1);

        let bad = BathSpec::new(SpectralDensity::Flat { eta: -1.0 }, 0.0, BathChannel::Photon);
        assert!(matches!(
            effective_viscosities(&d, &bad, &zero(BathChannel::Spin), HpNormalization::Reduced),
            Err(DiagError::NegativeSpectral { .. })
        ));
    }

    #[test]
    fn conventional_normalization_quadruples_spin_weight() {
        let w = HpNormalization::Reduced.spin_weight(2.0, 0.5);
        assert_abs_diff_eq!(
            HpNormalization::Conventional.spin_weight(2.0, 0.5),
            4.0 * w,
            epsilon = 1e-15
        );
    }

    #[test]
    fn generic_dissipator_vanishes_at_minimum() {
        let d = fig2();
        let min = d.minimum();
        for mode in bogoliubov_coefficients(&d).modes() {
            let x = RotatedCoordinates::from_state(&min, d.theta, d.p0);
            let lab = rotate_back(d.theta, rotated_frame_dissipator(&mode, d.omega(), d.s(), &x));
            assert!(lab.iter().all(|v| v.abs() < 1e-15));
        }
    }

    pub(crate) fn sr_params() -> impl Strategy<Value = ModelParams> {
        (0.2f64..3.0, 0.05f64..1.0, -2.0f64..-0.05, 0.5f64..5.0, 1.05f64..3.0).prop_map(
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
        fn diagonal_invariants(p in sr_params(), minus in any::<bool>()) {
            let branch = if minus { Branch::Minus } else { Branch::Plus };
            let d = match diagonalize(&p, branch) {
                Ok(d) => d,
                // Strong dipole repulsion can destabilize the spin wave.
                Err(DiagError::Unstable { .. }) => return Ok(()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            prop_assert!((d.f_cap * d.theta.cos() - p.e_z).abs() <= 1e-14 * p.e_z.max(1.0));
            let (e1, e2) = energies_full(&d).unwrap();
            prop_assert!(((e1 - d.eps1) / d.eps1).abs() < 1e-8);
            prop_assert!(((e2 - d.eps2) / d.eps2).abs() < 1e-8);
            let bog = bogoliubov_coefficients(&d);
            for m in bog.modes() {
                prop_assert!((m.normalization() - 1.0).abs() < 1e-12);
            }
            prop_assert!(round_trip_residual(&d) < 1e-12);
            let t = dressed_coefficients(&d);
            prop_assert!(t.max_abs_diff(&dressed_coefficients_from_pipeline(&d)) < 1e-12);
        }
    }
}
