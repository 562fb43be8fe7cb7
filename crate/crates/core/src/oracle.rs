//! Brute-force quantum reference: a Lindblad master-equation evolver on a
//! truncated two-mode Fock space (shifted photon `c`, Holstein–Primakoff
//! boson `b`).
//!
//! The Hamiltonian is the diagonal polariton form H = ε₁ d₁†d₁ + ε₂ d₂†d₂
//! built from truncated ladder matrices, so every property checked here
//! (dark states, thermal occupations, relaxation rates) is an independent
//! numerical consequence rather than an algebraic restatement.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{
    self, BathChannel, BathSpec, BogoliubovCoefficients, DiagError, DiagonalizationResult, HpNormalization,
    SpectralDensity,
};
use crate::model::{Branch, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),
    #[error("operator shape mismatch: expected {expected}x{expected}, got {rows}x{cols} for `{label}`")]
    ShapeMismatch {
        label: String,
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("truncation too small: top Fock level of mode {mode} holds population {population:e} at t = {t}")]
    Truncation { mode: char, population: f64, t: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Diag(#[from] DiagError),
}

fn default_edge_guard() -> f64 {
    1e-4
}

/// Maximum occupations kept for each mode, plus the top-level population
/// above which an evolution aborts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockTruncation {
    pub n_c: usize,
    pub n_b: usize,
    #[serde(default = "default_edge_guard")]
    pub edge_guard: f64,
}

impl FockTruncation {
    pub fn new(n_c: usize, n_b: usize) -> Result<Self, OracleError> {
        let t = Self {
            n_c,
            n_b,
            edge_guard: default_edge_guard(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn uniform(n: usize) -> Result<Self, OracleError> {
        Self::new(n, n)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.n_c < 1 || self.n_b < 1 {
            return Err(OracleError::InvalidTruncation(format!(
                "n_c = {}, n_b = {}: each mode needs at least one excited level",
                self.n_c, self.n_b
            )));
        }
        if !(self.edge_guard > 0.0 && self.edge_guard < 1.0) {
            return Err(OracleError::InvalidTruncation(format!(
                "edge_guard = {} must lie in (0, 1)",
                self.edge_guard
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        (self.n_c + 1) * (self.n_b + 1)
    }

    /// Basis index of |n_c_occ, n_b_occ⟩.
    pub fn index(&self, i_c: usize, i_b: usize) -> usize {
        i_c * (self.n_b + 1) + i_b
    }

    /// Indices whose states lie strictly below both top levels; there the
    /// truncated ladder operators obey canonical commutation.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.n_c)
            .flat_map(|i| (0..self.n_b).map(move |j| (i, j)))
            .map(|(i, j)| self.index(i, j))
            .collect()
    }

    /// (population of the top c level, population of the top b level).
    pub fn edge_populations(&self, diag_of: impl Fn(usize) -> f64) -> (f64, f64) {
        let top_c = (0..=self.n_b).map(|j| diag_of(self.index(self.n_c, j))).sum();
        let top_b = (0..=self.n_c).map(|i| diag_of(self.index(i, self.n_b))).sum();
        (top_c, top_b)
    }
}

/// Dense complex operator on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<Complex64>,
    pub label: String,
}

impl OperatorMatrix {
    pub fn new(matrix: DMatrix<Complex64>, label: impl Into<String>) -> Self {
        Self {
            matrix,
            label: label.into(),
        }
    }

    pub fn from_real(matrix: &DMatrix<f64>, label: impl Into<String>) -> Self {
        Self::new(matrix.map(|v| Complex64::new(v, 0.0)), label)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dagger(&self) -> Self {
        Self::new(self.matrix.adjoint(), format!("{}†", self.label))
    }

    pub fn commutator(&self, other: &Self) -> DMatrix<Complex64> {
        &self.matrix * &other.matrix - &other.matrix * &self.matrix
    }

    fn check_dim(&self, dim: usize) -> Result<(), OracleError> {
        if self.matrix.nrows() != dim || self.matrix.ncols() != dim {
            return Err(OracleError::ShapeMismatch {
                label: self.label.clone(),
                expected: dim,
                rows: self.matrix.nrows(),
                cols: self.matrix.ncols(),
            });
        }
        Ok(())
    }
}

/// max |M_ij − target_ij| over the given index block.
pub fn block_residual(m: &DMatrix<Complex64>, target: &DMatrix<Complex64>, block: &[usize]) -> f64 {
    let mut worst = 0.0f64;
    for &i in block {
        for &j in block {
            worst = worst.max((m[(i, j)] - target[(i, j)]).norm());
        }
    }
    worst
}

/// Truncated annihilation operator on levels 0..=n.
pub fn ladder(n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for k in 1..=n {
        a[(k - 1, k)] = (k as f64).sqrt();
    }
    a
}

/// c = a ⊗ I and b = I ⊗ a.
pub fn build_mode_operators(trunc: &FockTruncation) -> (OperatorMatrix, OperatorMatrix) {
    let a_c = ladder(trunc.n_c);
    let a_b = ladder(trunc.n_b);
    let c = a_c.kronecker(&DMatrix::identity(trunc.n_b + 1, trunc.n_b + 1));
    let b = DMatrix::identity(trunc.n_c + 1, trunc.n_c + 1).kronecker(&a_b);
    (OperatorMatrix::from_real(&c, "c"), OperatorMatrix::from_real(&b, "b"))
}

/// d_m = α_m c + β_m c† + γ_m b + δ_m b†.
pub fn build_dressed_operators(
    trunc: &FockTruncation,
    coeffs: &BogoliubovCoefficients,
) -> (OperatorMatrix, OperatorMatrix) {
    let (c, b) = build_mode_operators(trunc);
    let (c, b) = (c.matrix.map(|z| z.re), b.matrix.map(|z| z.re));
    let (cd, bd) = (c.transpose(), b.transpose());
    let build = |m: &diag::ModeCoefficients, label: &str| {
        let d = &c * m.alpha + &cd * m.beta + &b * m.gamma + &bd * m.delta;
        OperatorMatrix::from_real(&d, label)
    };
    (build(&coeffs.mode1, "d1"), build(&coeffs.mode2, "d2"))
}

/// H = ε₁ d₁†d₁ + ε₂ d₂†d₂ (the constant offset is dropped).
pub fn hamiltonian_matrix(diag: &DiagonalizationResult, d1: &OperatorMatrix, d2: &OperatorMatrix) -> OperatorMatrix {
    let n1 = d1.matrix.adjoint() * &d1.matrix;
    let n2 = d2.matrix.adjoint() * &d2.matrix;
    OperatorMatrix::new(n1 * Complex64::from(diag.eps1) + n2 * Complex64::from(diag.eps2), "H")
}

/// Bose–Einstein occupation 1/(e^{ν/T} − 1), zero at T = 0.
pub fn bose_einstein(nu: f64, temperature: f64) -> Result<f64, OracleError> {
    if !(nu > 0.0) {
        return Err(OracleError::InvalidInput(format!("frequency must be > 0, got {nu}")));
    }
    if !(temperature >= 0.0) {
        return Err(OracleError::InvalidInput(format!(
            "temperature must be >= 0, got {temperature}"
        )));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (nu / temperature).exp_m1())
}

/// Temperature at which a mode of frequency ν has the given occupation.
pub fn temperature_for_occupation(nu: f64, occupation: f64) -> f64 {
    nu / (1.0 + 1.0 / occupation).ln()
}

/// One dissipative channel: rate·[(n+1) D_L + n D_{L†}].
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub op: OperatorMatrix,
    pub rate: f64,
    pub n_th: f64,
}

/// Hermitian, unit-trace density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<Complex64>) -> Self {
        Self { matrix }
    }

    /// |ψ⟩⟨ψ| for a normalized real state vector.
    pub fn pure(psi: &[f64]) -> Self {
        let n = psi.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| Complex64::new(psi[i] * psi[j], 0.0)))
    }

    /// Projector onto basis state `k` of an `n`-dimensional space.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut m = DMatrix::zeros(n, n);
        m[(k, k)] = Complex64::new(1.0, 0.0);
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::from(0.5);
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// tr(ρ O), real part.
    pub fn expectation(&self, op: &DMatrix<Complex64>) -> f64 {
        (&self.matrix * op).trace().re
    }

    /// ⟨ψ|ρ|ψ⟩ for a normalized real vector.
    pub fn fidelity_with(&self, psi: &[f64]) -> f64 {
        let n = psi.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.matrix[(i, j)] * (psi[i] * psi[j]);
            }
        }
        acc.re
    }

    pub fn check(&self, tol: &InvariantTolerances) -> Result<(), String> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(format!("trace {tr} deviates from 1"));
        }
        let herm = self.hermiticity_error();
        if herm > tol.hermiticity {
            return Err(format!("hermiticity error {herm:e}"));
        }
        let m = self.min_eigenvalue();
        if m < -tol.positivity {
            return Err(format!("negative eigenvalue {m:e}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantTolerances {
    pub trace: f64,
    pub hermiticity: f64,
    pub positivity: f64,
}

impl Default for InvariantTolerances {
    fn default() -> Self {
        Self {
            trace: 1e-9,
            hermiticity: 1e-10,
            positivity: 1e-8,
        }
    }
}

/// Dense reference implementation of
/// dρ/dt = −i[H, ρ] + Σ rate[(n+1)(2LρL† − {L†L, ρ}) + n(2L†ρL − {LL†, ρ})].
pub fn lindblad_rhs(
    rho: &DMatrix<Complex64>,
    h: &OperatorMatrix,
    channels: &[Channel],
) -> Result<DMatrix<Complex64>, OracleError> {
    let dim = rho.nrows();
    if rho.ncols() != dim {
        return Err(OracleError::ShapeMismatch {
            label: "rho".into(),
            expected: dim,
            rows: rho.nrows(),
            cols: rho.ncols(),
        });
    }
    h.check_dim(dim)?;
    let i = Complex64::new(0.0, 1.0);
    let mut out = (&h.matrix * rho - rho * &h.matrix) * (-i);
    for ch in channels {
        ch.op.check_dim(dim)?;
        let l = &ch.op.matrix;
        let ld = l.adjoint();
        let dis = |a: &DMatrix<Complex64>, ad: &DMatrix<Complex64>| {
            let ada = ad * a;
            (a * rho * ad) * Complex64::from(2.0) - &ada * rho - rho * &ada
        };
        if ch.n_th + 1.0 != 0.0 {
            out += dis(l, &ld) * Complex64::from(ch.rate * (ch.n_th + 1.0));
        }
        if ch.n_th != 0.0 {
            out += dis(&ld, l) * Complex64::from(ch.rate * ch.n_th);
        }
    }
    Ok(out)
}

/// Compressed sparse rows of a complex matrix.
#[derive(Debug, Clone)]
struct Csr {
    dim: usize,
    indptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl Csr {
    fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let dim = m.nrows();
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let cutoff = scale * 1e-17;
        let mut indptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v.norm() > cutoff {
                    cols.push(j);
                    vals.push(v);
                }
            }
            indptr.push(cols.len());
        }
        Self {
            dim,
            indptr,
            cols,
            vals,
        }
    }

    /// out = A·X for row-major dense X.
    fn mul_dense(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        out.fill(Complex64::new(0.0, 0.0));
        for i in 0..n {
            let row_out = &mut out[i * n..(i + 1) * n];
            for k in self.indptr[i]..self.indptr[i + 1] {
                let a = self.vals[k];
                let row_x = &x[self.cols[k] * n..(self.cols[k] + 1) * n];
                for (o, xv) in row_out.iter_mut().zip(row_x) {
                    *o += a * xv;
                }
            }
        }
    }
}

fn adjoint_into(x: &[Complex64], out: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = x[i * n + j].conj();
        }
    }
}

/// Liouvillian compiled into an effective non-Hermitian Hamiltonian
/// H_eff = H − i Σ_j γ_j J_j†J_j plus sandwich terms 2γ_j J_j ρ J_j†.
#[derive(Debug, Clone)]
pub struct CompiledLindblad {
    dim: usize,
    h_eff: Csr,
    jumps: Vec<(Csr, f64)>,
    max_rate: f64,
    generator_bound: f64,
}

struct Workspace {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl CompiledLindblad {
    pub fn new(h: &OperatorMatrix, channels: &[Channel]) -> Result<Self, OracleError> {
        let dim = h.dim();
        h.check_dim(dim)?;
        let i = Complex64::new(0.0, 1.0);
        let mut h_eff = h.matrix.clone();
        let mut jumps = Vec::new();
        let mut max_rate = 0.0f64;
        for ch in channels {
            ch.op.check_dim(dim)?;
            if !(ch.rate >= 0.0 && ch.n_th >= 0.0) {
                return Err(OracleError::InvalidInput(format!(
                    "channel `{}` needs rate >= 0 and n_th >= 0",
                    ch.op.label
                )));
            }
            let l = &ch.op.matrix;
            for (op, gamma) in [(l.clone(), ch.rate * (ch.n_th + 1.0)), (l.adjoint(), ch.rate * ch.n_th)] {
                if gamma == 0.0 {
                    continue;
                }
                max_rate = max_rate.max(gamma);
                h_eff -= (op.adjoint() * &op) * (i * gamma);
                jumps.push((Csr::from_dense(&op), 2.0 * gamma));
            }
        }
        // ‖L‖ ≤ 2‖H_eff‖ + Σ 2γ‖J‖² in the induced Hilbert–Schmidt norm.
        let spectral_norm = |m: &DMatrix<Complex64>| m.singular_values().max();
        let mut generator_bound = 2.0 * spectral_norm(&h_eff);
        for (ch, gamma) in channels
            .iter()
            .flat_map(|c| [(c, c.rate * (c.n_th + 1.0)), (c, c.rate * c.n_th)])
        {
            if gamma > 0.0 {
                generator_bound += 2.0 * gamma * spectral_norm(&ch.op.matrix).powi(2);
            }
        }
        Ok(Self {
            dim,
            h_eff: Csr::from_dense(&h_eff),
            jumps,
            max_rate,
            generator_bound,
        })
    }

    /// Upper bound on the norm of the generator; RK4 is stable for
    /// dt·bound below ≈ 2.8.
    pub fn generator_bound(&self) -> f64 {
        self.generator_bound
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest per-jump rate, used for choosing the time step.
    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }

    fn workspace(&self) -> Workspace {
        let n2 = self.dim * self.dim;
        Workspace {
            a: vec![Complex64::new(0.0, 0.0); n2],
            b: vec![Complex64::new(0.0, 0.0); n2],
        }
    }

    /// out = L[ρ] for a Hermitian row-major ρ.
    fn apply(&self, rho: &[Complex64], out: &mut [Complex64], ws: &mut Workspace) {
        let n = self.dim;
        let i = Complex64::new(0.0, 1.0);
        // −i(H_eff ρ − ρ H_eff†) = −i(Z − Z†) with Z = H_eff ρ.
        self.h_eff.mul_dense(rho, &mut ws.a);
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = -i * (ws.a[r * n + c] - ws.a[c * n + r].conj());
            }
        }
        for (j, w) in &self.jumps {
            // J ρ J† = J (J ρ)†.
            j.mul_dense(rho, &mut ws.a);
            adjoint_into(&ws.a, &mut ws.b, n);
            j.mul_dense(&ws.b, &mut ws.a);
            for (o, v) in out.iter_mut().zip(&ws.a) {
                *o += v * *w;
            }
        }
        // The shortcut −i(Z − Z†) treats an anti-Hermitian component of ρ
        // with the wrong sign, so rounding-level anti-Hermitian parts of the
        // sandwich terms must not be fed back into the state.
        for r in 0..n {
            out[r * n + r].im = 0.0;
            for c in r + 1..n {
                let v = (out[r * n + c] + out[c * n + r].conj()) * 0.5;
                out[r * n + c] = v;
                out[c * n + r] = v.conj();
            }
        }
    }

    /// Applies the Liouvillian to a dense density matrix.
    pub fn rhs(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.dim;
        let flat = to_row_major(rho);
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        let mut ws = self.workspace();
        self.apply(&flat, &mut out, &mut ws);
        from_row_major(&out, n)
    }
}

fn to_row_major(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn from_row_major(v: &[Complex64], n: usize) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(n, n, v)
}

/// Options for [`evolve`].
#[derive(Debug, Clone, Default)]
pub struct EvolveOptions {
    /// Fixed step; defaults to 0.01 / max(ε₁, ε₂, rates), capped by the RK4
    /// stability limit, when `None`.
    pub dt: Option<f64>,
    /// Interval between recorded samples; every step when `None`.
    pub record_interval: Option<f64>,
    /// Enables the top-level population guard.
    pub truncation: Option<FockTruncation>,
    /// Observables whose expectation values are recorded.
    pub observables: Vec<OperatorMatrix>,
    /// Verify trace, hermiticity and positivity at every sample.
    pub check_invariants: bool,
    /// Frequency scale entering the default time step, typically max(ε₁, ε₂).
    pub frequency_scale: f64,
}

/// Worst-case invariant violations observed during an evolution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InvariantLog {
    pub max_trace_drift: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub max_edge_population: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    /// `expectations[k][s]` is ⟨observable k⟩ at sample s.
    pub expectations: Vec<Vec<f64>>,
    pub final_state: DensityMatrix,
    pub dt: f64,
    pub invariants: InvariantLog,
}

/// Fixed-step RK4 integration of the master equation from t = 0 to `t_end`.
pub fn evolve(
    rho0: &DensityMatrix,
    h: &OperatorMatrix,
    channels: &[Channel],
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionResult, OracleError> {
    let liou = CompiledLindblad::new(h, channels)?;
    evolve_compiled(rho0, &liou, t_end, opts)
}

pub fn evolve_compiled(
    rho0: &DensityMatrix,
    liou: &CompiledLindblad,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<EvolutionResult, OracleError> {
    let n = liou.dim();
    if rho0.dim() != n {
        return Err(OracleError::ShapeMismatch {
            label: "rho0".into(),
            expected: n,
            rows: rho0.matrix.nrows(),
            cols: rho0.matrix.ncols(),
        });
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(OracleError::InvalidInput(format!("t_end must be > 0, got {t_end}")));
    }
    for o in &opts.observables {
        o.check_dim(n)?;
    }
    if let Some(tr) = &opts.truncation {
        tr.validate()?;
        if tr.dim() != n {
            return Err(OracleError::InvalidTruncation(format!(
                "truncation dimension {} does not match operators ({n})",
                tr.dim()
            )));
        }
    }
    let tol = InvariantTolerances::default();
    let scale = opts.frequency_scale.max(liou.max_rate());
    // The truncated ladder operators have norms growing with the cutoff, so
    // the physical step 0.01/max(ε, κ) is additionally capped by the RK4
    // stability limit of the compiled generator.
    let stable = 2.0 / liou.generator_bound().max(f64::MIN_POSITIVE);
    let dt_nominal = match opts.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(OracleError::InvalidInput(format!("dt must be > 0, got {dt}"))),
        None if scale > 0.0 => (0.01 / scale).min(stable),
        None => 0.01f64.min(stable),
    };
    let steps = (t_end / dt_nominal).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let record_every = opts
        .record_interval
        .map(|r| ((r / dt).round() as usize).max(1))
        .unwrap_or(1);

    let obs: Vec<Vec<Complex64>> = opts.observables.iter().map(|o| to_row_major(&o.matrix)).collect();
    let expect = |rho: &[Complex64], o: &[Complex64]| -> f64 {
        // tr(ρ O) = Σ_ij ρ_ij O_ji
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += rho[i * n + j] * o[j * n + i];
            }
        }
        acc.re
    };

    let mut rho = to_row_major(&rho0.matrix);
    let n2 = n * n;
    let zero = Complex64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; n2], vec![zero; n2], vec![zero; n2], vec![zero; n2]);
    let mut tmp = vec![zero; n2];
    let mut ws = liou.workspace();
    let mut log = InvariantLog {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let mut times = Vec::new();
    let mut expectations = vec![Vec::new(); obs.len()];

    let mut sample = |t: f64, rho: &[Complex64], log: &mut InvariantLog| -> Result<(), OracleError> {
        times.push(t);
        for (k, o) in obs.iter().enumerate() {
            expectations[k].push(expect(rho, o));
        }
        let tr: Complex64 = (0..n).map(|i| rho[i * n + i]).sum();
        log.max_trace_drift = log.max_trace_drift.max((tr - 1.0).norm());
        if opts.check_invariants {
            let dm = DensityMatrix::new(from_row_major(rho, n));
            log.max_hermiticity_error = log.max_hermiticity_error.max(dm.hermiticity_error());
            log.min_eigenvalue = log.min_eigenvalue.min(dm.min_eigenvalue());
            dm.check(&tol).map_err(OracleError::Numerical)?;
        }
        Ok(())
    };
    let guard = |t: f64, rho: &[Complex64], log: &mut InvariantLog| -> Result<(), OracleError> {
        if let Some(tr) = &opts.truncation {
            let (pc, pb) = tr.edge_populations(|k| rho[k * n + k].re);
            log.max_edge_population = log.max_edge_population.max(pc).max(pb);
            for (mode, population) in [('c', pc), ('b', pb)] {
                if population > tr.edge_guard {
                    return Err(OracleError::Truncation { mode, population, t });
                }
            }
        }
        Ok(())
    };

    guard(0.0, &rho, &mut log)?;
    sample(0.0, &rho, &mut log)?;
    for step in 1..=steps {
        liou.apply(&rho, &mut k1, &mut ws);
        for i in 0..n2 {
            tmp[i] = rho[i] + k1[i] * (0.5 * dt);
        }
        liou.apply(&tmp, &mut k2, &mut ws);
        for i in 0..n2 {
            tmp[i] = rho[i] + k2[i] * (0.5 * dt);
        }
        liou.apply(&tmp, &mut k3, &mut ws);
        for i in 0..n2 {
            tmp[i] = rho[i] + k3[i] * dt;
        }
        liou.apply(&tmp, &mut k4, &mut ws);
        for i in 0..n2 {
            rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        let t = step as f64 * dt;
        if !rho[0].re.is_finite() {
            return Err(OracleError::Numerical(format!("non-finite density matrix at t = {t}")));
        }
        guard(t, &rho, &mut log)?;
        if step % record_every == 0 || step == steps {
            sample(t, &rho, &mut log)?;
        }
    }
    if !opts.check_invariants {
        log.min_eigenvalue = DensityMatrix::new(from_row_major(&rho, n)).min_eigenvalue();
    }
    Ok(EvolutionResult {
        times,
        expectations,
        final_state: DensityMatrix::new(from_row_major(&rho, n)),
        dt,
        invariants: log,
    })
}

/// Largest deviation between the two sides of the linear operator identities
/// (c + c†) = cos χ √(ε₁/ω)(d₁ + d₁†) + sin χ √(ε₂/ω)(d₂ + d₂†) and
/// √(S/2)(b + b†) = −sin χ √(S ε₁/2F)(d₁ + d₁†) + cos χ √(S ε₂/2F)(d₂ + d₂†),
/// evaluated on the interior block of the truncated space.
pub fn cmn_identity_residual(diag: &DiagonalizationResult, trunc: &FockTruncation) -> f64 {
    let (c, b) = build_mode_operators(trunc);
    let (d1, d2) = build_dressed_operators(trunc, &diag::bogoliubov_coefficients(diag));
    let x = |o: &OperatorMatrix| &o.matrix + o.matrix.adjoint();
    let (sin_c, cos_c) = diag.chi.sin_cos();
    let (omega, s, f) = (diag.omega(), diag.s(), diag.f_cap);
    let r = |v: f64| Complex64::from(v);
    let photon_rhs = x(&d1) * r(cos_c * (diag.eps1 / omega).sqrt()) + x(&d2) * r(sin_c * (diag.eps2 / omega).sqrt());
    let spin_lhs = x(&b) * r((s / 2.0).sqrt());
    let spin_rhs = x(&d1) * r(-sin_c * (s * diag.eps1 / (2.0 * f)).sqrt())
        + x(&d2) * r(cos_c * (s * diag.eps2 / (2.0 * f)).sqrt());
    let block = trunc.interior();
    block_residual(&x(&c), &photon_rhs, &block).max(block_residual(&spin_lhs, &spin_rhs, &block))
}

/// (⟨d₁†d₁⟩, ⟨d₂†d₂⟩) in the given state.
pub fn thermal_occupations(rho: &DensityMatrix, d1: &OperatorMatrix, d2: &OperatorMatrix) -> (f64, f64) {
    let n = |d: &OperatorMatrix| rho.expectation(&(d.matrix.adjoint() * &d.matrix));
    (n(d1), n(d2))
}

/// Least-squares slope of −ln y against t: the rate k of y ∝ e^{−k t}.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / m, sy / m);
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in &pts {
        num += (t - mt) * (y - my);
        den += (t - mt) * (t - mt);
    }
    (den > 0.0).then(|| -num / den)
}

/// Ground state (lowest eigenpair) of a real-symmetric operator matrix.
pub fn ground_state(h: &OperatorMatrix) -> (f64, Vec<f64>) {
    let real = h.matrix.map(|z| z.re);
    let sym = (&real + real.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (k, e0) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, e)| if e < acc.1 { (k, e) } else { acc });
    (e0, eig.eigenvectors.column(k).iter().copied().collect())
}

/// Which jump operators a scenario uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSet {
    /// Purely unitary evolution.
    None,
    /// Polariton channels d₁, d₂ with bath-derived rates κ_eff.
    Dressed {
        #[serde(default)]
        mode1_only: bool,
    },
    /// Bare photon channel c (and optionally the bare spin boson b).
    Bare {
        rate: f64,
        #[serde(default)]
        include_spin: bool,
    },
}

fn default_photon_bath() -> SpectralDensity {
    SpectralDensity::Ohmic { eta: 1.0, cutoff: 10.0 }
}

fn default_record_interval() -> f64 {
    0.5
}

/// Complete description of one oracle run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleScenario {
    pub params: ModelParams,
    pub branch: Branch,
    pub truncation: FockTruncation,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_photon_bath")]
    pub photon_bath: SpectralDensity,
    #[serde(default = "default_photon_bath")]
    pub spin_bath: SpectralDensity,
    #[serde(default)]
    pub hp_normalization: HpNormalization,
    pub channels: ChannelSet,
    pub t_end: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_record_interval")]
    pub record_interval: f64,
    #[serde(default)]
    pub check_invariants: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResiduals {
    pub trace_drift: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
    pub max_edge_population: f64,
    pub cmn_identity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSeries {
    pub t: Vec<f64>,
    pub energy: Vec<f64>,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub params: ModelParams,
    pub branch: Branch,
    pub truncation: FockTruncation,
    #[serde(rename = "T")]
    pub temperature: f64,
    pub channels: ChannelSet,
    pub eps1: f64,
    pub eps2: f64,
    pub kappa_eff: (f64, f64),
    pub dt: f64,
    pub t_end: f64,
    pub steady_energy: f64,
    pub ground_energy: f64,
    pub energy_gap: f64,
    pub fidelity: f64,
    pub occupations: (f64, f64),
    pub residuals: OracleResiduals,
    pub series: OracleSeries,
}

/// Builds the operators for a scenario, evolves from the c/b vacuum and
/// summarizes the final state.
pub fn run_scenario(sc: &OracleScenario) -> Result<OracleReport, OracleError> {
    sc.truncation.validate()?;
    let diag = diag::diagonalize(&sc.params, sc.branch)?;
    let bog = diag::bogoliubov_coefficients(&diag);
    let (c, b) = build_mode_operators(&sc.truncation);
    let (d1, d2) = build_dressed_operators(&sc.truncation, &bog);
    let h = hamiltonian_matrix(&diag, &d1, &d2);
    let bath_a = BathSpec::new(sc.photon_bath.clone(), sc.temperature, BathChannel::Photon);
    let bath_s = BathSpec::new(sc.spin_bath.clone(), sc.temperature, BathChannel::Spin);
    let kappa_eff = diag::effective_viscosities(&diag, &bath_a, &bath_s, sc.hp_normalization)?;
    let t = sc.temperature;

    let channels = match &sc.channels {
        ChannelSet::None => vec![],
        ChannelSet::Dressed { mode1_only } => {
            let mut v = vec![Channel {
                op: d1.clone(),
                rate: kappa_eff.0,
                n_th: bose_einstein(diag.eps1, t)?,
            }];
            if !mode1_only {
                v.push(Channel {
                    op: d2.clone(),
                    rate: kappa_eff.1,
                    n_th: bose_einstein(diag.eps2, t)?,
                });
            }
            v
        }
        ChannelSet::Bare { rate, include_spin } => {
            let mut v = vec![Channel {
                op: c.clone(),
                rate: *rate,
                n_th: bose_einstein(sc.params.omega, t)?,
            }];
            if *include_spin {
                v.push(Channel {
                    op: b.clone(),
                    rate: *rate,
                    n_th: bose_einstein(diag.f_cap, t)?,
                });
            }
            v
        }
    };

    let n1_op = OperatorMatrix::new(d1.matrix.adjoint() * &d1.matrix, "n1");
    let n2_op = OperatorMatrix::new(d2.matrix.adjoint() * &d2.matrix, "n2");
    let opts = EvolveOptions {
        dt: sc.dt,
        record_interval: Some(sc.record_interval),
        truncation: Some(sc.truncation),
        observables: vec![h.clone(), n1_op, n2_op],
        check_invariants: sc.check_invariants,
        frequency_scale: diag.eps1.max(diag.eps2),
    };
    let rho0 = DensityMatrix::basis(sc.truncation.dim(), sc.truncation.index(0, 0));
    let res = evolve(&rho0, &h, &channels, sc.t_end, &opts)?;
    let (ground_energy, gs) = ground_state(&h);
    let steady_energy = *res.expectations[0].last().expect("at least one sample");
    let fin = &res.final_state;
    let last = |k: usize| *res.expectations[k].last().expect("at least one sample");
    Ok(OracleReport {
        params: sc.params,
        branch: sc.branch,
        truncation: sc.truncation,
        temperature: t,
        channels: sc.channels.clone(),
        eps1: diag.eps1,
        eps2: diag.eps2,
        kappa_eff,
        dt: res.dt,
        t_end: sc.t_end,
        steady_energy,
        ground_energy,
        energy_gap: steady_energy - ground_energy,
        fidelity: fin.fidelity_with(&gs),
        occupations: (last(1), last(2)),
        residuals: OracleResiduals {
            trace_drift: res.invariants.max_trace_drift,
            hermiticity: res.invariants.max_hermiticity_error.max(fin.hermiticity_error()),
            min_eigenvalue: res.invariants.min_eigenvalue,
            max_edge_population: res.invariants.max_edge_population,
            cmn_identity: cmn_identity_residual(&diag, &sc.truncation),
        },
        series: OracleSeries {
            t: res.times,
            energy: res.expectations[0].clone(),
            n1: res.expectations[1].clone(),
            n2: res.expectations[2].clone(),
        },
    })
}
