//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a non-zero status if any criterion fails. Every criterion also has a
//! wall-clock budget that counts towards its verdict.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dissipative_dicke::cli::InitialState;
use dissipative_dicke::diag::{self, DiagError};
use dissipative_dicke::dynamics::{self, Method, SolverConfig};
use dissipative_dicke::model::{self, Branch, ModelParams};
use dissipative_dicke::oracle::{self, ChannelSet, FockTruncation, OracleScenario};
use dissipative_dicke::semiclassical::{self, DissipatorKind, RhsSpec, ShiftedHoParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Result<Verdict, String>;

fn fig2_solver(t_end: f64) -> SolverConfig {
    SolverConfig {
        method: Method::Rk45 {
            rtol: 1e-10,
            atol: 1e-13,
        },
        ..SolverConfig::rk45(t_end)
    }
}

fn perturbed_minimum(params: &ModelParams) -> model::SemiclassicalState {
    InitialState::MinimumNoise { sigma: 1e-3 }
        .resolve(params, Branch::Plus, 1)
        .expect("valid noise")
}

/// Oracle parameters: deep enough in the superradiant phase that the soft
/// polariton fits comfortably in an 8-level truncation.
fn oracle_params() -> ModelParams {
    ModelParams {
        omega: 1.0,
        e_z: 0.4,
        g: 0.8,
        eps: -1.0,
        s: 1.0,
        kappa1: 0.0,
        kappa2: 0.0,
    }
}

fn oracle_scenario(n: usize, channels: ChannelSet, t_end: f64) -> OracleScenario {
    let ohmic = diag::SpectralDensity::Ohmic { eta: 1.0, cutoff: 10.0 };
    OracleScenario {
        params: oracle_params(),
        branch: Branch::Plus,
        truncation: FockTruncation::uniform(n).expect("valid truncation"),
        temperature: 0.0,
        photon_bath: ohmic.clone(),
        spin_bath: ohmic,
        hp_normalization: Default::default(),
        channels,
        t_end,
        dt: None,
        record_interval: 0.5,
        check_invariants: true,
    }
}

fn bare_anomaly() -> Result<Verdict, String> {
    let p = ModelParams::fig2();
    let x0 = perturbed_minimum(&p);
    let traj = dynamics::integrate_semiclassical(|x| semiclassical::bare_rhs(x, &p), x0, &fig2_solver(3000.0))
        .map_err(|e| e.to_string())?;
    let xf = traj.final_semiclassical();
    let dist = semiclassical::bare_fixed_points(&p)
        .iter()
        .map(|fp| fp.max_abs_diff(&xf))
        .fold(f64::INFINITY, f64::min);
    let e = model::energy(&xf, &p);
    let e_sr = model::ground_energy(&p);
    let pass = dist < 1e-4 && (e + 0.2).abs() < 1e-5 && e > e_sr && (e_sr + 0.200318).abs() < 1e-6;
    Ok(Verdict::new(pass, format!("dist={dist:.2e} E={e:.9} E_SR={e_sr:.9}")))
}

fn fixed_point_energies() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut drawn = 0;
    while drawn < 50 {
        let mut p = ModelParams {
            omega: rng.random_range(0.5..2.0),
            e_z: rng.random_range(0.05..0.5),
            g: 0.0,
            eps: rng.random_range(-1.5..-0.2),
            s: rng.random_range(0.5..3.0),
            kappa1: 0.1 * (1.0 - rng.random::<f64>()),
            kappa2: 0.1 * (1.0 - rng.random::<f64>()),
        };
        let Ok((gc, eps_c)) = semiclassical::damped_critical_values(&p) else {
            continue;
        };
        if p.eps >= eps_c {
            continue;
        }
        p.g = gc * rng.random_range(1.05..2.5);
        let pts = semiclassical::bare_fixed_points(&p);
        if pts.len() != 3 {
            return Err(format!("expected 3 fixed points, got {} for {p:?}", pts.len()));
        }
        for x in &pts {
            worst = worst.max((model::energy(x, &p) + p.e_z * p.s).abs());
        }
        drawn += 1;
    }
    Ok(Verdict::new(
        worst < 1e-12,
        format!("max|E + E_Z S|={worst:.2e} over 50 draws"),
    ))
}

fn rotated_and_dressed_relaxation() -> Result<Verdict, String> {
    let p = ModelParams::fig2();
    let min = model::superradiant_minimum(&p, Branch::Plus).ok_or("normal phase")?;
    let x0 = perturbed_minimum(&p);
    let mut details = Vec::new();
    let mut pass = true;
    for kind in [DissipatorKind::AdHocRotated, DissipatorKind::Dressed] {
        let spec = RhsSpec {
            kind,
            branch: Branch::Plus,
            kappa_eff: None,
        };
        let rhs = semiclassical::build_rhs(&p, &spec).map_err(|e| e.to_string())?;
        let traj =
            dynamics::integrate_semiclassical(|x| rhs(x), x0, &fig2_solver(3000.0)).map_err(|e| e.to_string())?;
        let de = (model::energy(&traj.final_semiclassical(), &p) - min.energy).abs();
        let r = rhs(&min.state()).max_abs();
        pass &= de < 1e-6 && r < 1e-10;
        details.push(format!("{kind}: |E-E_SR|={de:.1e} |rhs(min)|={r:.1e}"));
    }
    Ok(Verdict::new(pass, details.join("; ")))
}

fn shifted_oscillator() -> Result<Verdict, String> {
    let mut worst: [f64; 2] = [0.0; 2];
    for (k, shifted) in [false, true].into_iter().enumerate() {
        let hop = ShiftedHoParams {
            omega: 1.3,
            p0: 0.4,
            kappa: 0.1,
            shifted_dissipator: shifted,
        };
        let traj = dynamics::integrate(
            |x: &[f64; 2]| semiclassical::shifted_ho_rhs(*x, &hop),
            [0.2, -0.1],
            &fig2_solver(400.0),
        )
        .map_err(|e| e.to_string())?;
        let fin = traj.final_state();
        let target = if shifted {
            [0.0, hop.p0]
        } else {
            semiclassical::shifted_ho_fixed_point(&hop)
        };
        worst[k] = (fin[0] - target[0]).abs().max((fin[1] - target[1]).abs());
    }
    Ok(Verdict::new(
        worst[0] < 1e-8 && worst[1] < 1e-8,
        format!("unshifted err={:.1e} shifted err={:.1e}", worst[0], worst[1]),
    ))
}

fn diagonalization_suite() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut norm, mut rel, mut round, mut table) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut drawn = 0;
    while drawn < 100 {
        let omega: f64 = rng.random_range(0.2..3.0);
        let e_z: f64 = rng.random_range(0.05..1.0);
        let eps: f64 = rng.random_range(-2.0..-0.05);
        let s: f64 = rng.random_range(0.5..5.0);
        let gc = (-e_z / (eps * s)).sqrt();
        let p = ModelParams {
            omega,
            e_z,
            g: gc * rng.random_range(1.05..3.0),
            eps,
            s,
            kappa1: 0.0,
            kappa2: 0.0,
        };
        let branch = if rng.random::<bool>() {
            Branch::Plus
        } else {
            Branch::Minus
        };
        let d = match diag::diagonalize(&p, branch) {
            Ok(d) => d,
            Err(DiagError::Unstable { .. }) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let bog = diag::bogoliubov_coefficients(&d);
        for m in bog.modes() {
            norm = norm.max((m.normalization() - 1.0).abs());
        }
        let (e1, e2) = diag::energies_full(&d).map_err(|e| e.to_string())?;
        rel = rel
            .max(((e1 - d.eps1) / d.eps1).abs())
            .max(((e2 - d.eps2) / d.eps2).abs());
        round = round.max(diag::round_trip_residual(&d));
        table = table.max(diag::dressed_coefficients(&d).max_abs_diff(&diag::dressed_coefficients_from_pipeline(&d)));
        drawn += 1;
    }
    Ok(Verdict::new(
        norm < 1e-12 && rel < 1e-8 && round < 1e-12 && table < 1e-12,
        format!("norm={norm:.1e} eps_rel={rel:.1e} round_trip={round:.1e} A-F={table:.1e}"),
    ))
}

fn oracle_zero_temperature() -> Result<Verdict, String> {
    let dressed = oracle::run_scenario(&oracle_scenario(8, ChannelSet::Dressed { mode1_only: false }, 30.0))
        .map_err(|e| e.to_string())?;
    let bare = |n| {
        oracle::run_scenario(&oracle_scenario(
            n,
            ChannelSet::Bare {
                rate: 0.5,
                include_spin: false,
            },
            60.0,
        ))
        .map_err(|e| e.to_string())
    };
    let (b8, b10) = (bare(8)?, bare(10)?);
    let res = &dressed.residuals;
    let stable = (b8.energy_gap / b10.energy_gap - 1.0).abs() < 0.1;
    let pass = dressed.fidelity >= 0.999
        && res.trace_drift < 1e-9
        && res.min_eigenvalue > -1e-8
        && b8.energy_gap > 0.0
        && b10.energy_gap > 0.0
        && stable;
    Ok(Verdict::new(
        pass,
        format!(
            "fidelity={:.6} trace_drift={:.1e} min_eig={:.1e} bare gap n8={:.5} n10={:.5}",
            dressed.fidelity, res.trace_drift, res.min_eigenvalue, b8.energy_gap, b10.energy_gap
        ),
    ))
}

fn zero_temperature_viscosity() -> Result<Verdict, String> {
    let mut sc = oracle_scenario(8, ChannelSet::Dressed { mode1_only: false }, 30.0);
    sc.check_invariants = false;
    let r = oracle::run_scenario(&sc).map_err(|e| e.to_string())?;
    let (t, n1): (Vec<f64>, Vec<f64>) = r
        .series
        .t
        .iter()
        .zip(&r.series.n1)
        .filter(|(t, _)| **t >= 5.0)
        .map(|(t, v)| (*t, *v))
        .unzip();
    let rate = oracle::fit_decay_rate(&t, &n1).ok_or("decay fit failed")?;
    let expected = 2.0 * r.kappa_eff.0;
    let dev = (rate / expected - 1.0).abs();
    Ok(Verdict::new(
        dev < 0.05,
        format!("fitted rate={rate:.5} 2*kappa_eff1={expected:.5} rel dev={dev:.2e}"),
    ))
}

fn cmn_identity() -> Result<Verdict, String> {
    let d = diag::diagonalize(&ModelParams::fig2(), Branch::Plus).map_err(|e| e.to_string())?;
    let r = oracle::cmn_identity_residual(&d, &FockTruncation::uniform(8).map_err(|e| e.to_string())?);
    Ok(Verdict::new(r < 1e-10, format!("residual={r:.1e}")))
}

fn thermal_consistency() -> Result<Verdict, String> {
    let mut sc = oracle_scenario(10, ChannelSet::Dressed { mode1_only: false }, 30.0);
    sc.check_invariants = false;
    let d = diag::diagonalize(&sc.params, sc.branch).map_err(|e| e.to_string())?;
    sc.temperature = oracle::temperature_for_occupation(d.eps1, 0.5);
    let r = oracle::run_scenario(&sc).map_err(|e| e.to_string())?;
    let n1 = r.occupations.0;
    let dev = (n1 / 0.5 - 1.0).abs();
    Ok(Verdict::new(
        dev < 0.02,
        format!("<d1+d1>={n1:.5} T={:.5} rel dev={dev:.1e}", sc.temperature),
    ))
}

fn integrator_order() -> Result<Verdict, String> {
    // x'' + 2γx' + ω²x = 0 with x(0) = 1, x'(0) = 0.
    let (w0, gamma) = (1.0f64, 0.1f64);
    let wd = (w0 * w0 - gamma * gamma).sqrt();
    let exact = |t: f64| (-gamma * t).exp() * ((wd * t).cos() + gamma / wd * (wd * t).sin());
    let t_end = 10.0;
    let err = |dt: f64| -> Result<f64, String> {
        let traj = dynamics::integrate(
            |y: &[f64; 2]| [y[1], -w0 * w0 * y[0] - 2.0 * gamma * y[1]],
            [1.0, 0.0],
            &SolverConfig::rk4(dt, t_end),
        )
        .map_err(|e| e.to_string())?;
        Ok((traj.final_state()[0] - exact(traj.final_time())).abs())
    };
    let ratio = err(0.1)? / err(0.05)?;
    Ok(Verdict::new(
        (ratio / 16.0 - 1.0).abs() < 0.2,
        format!("error ratio={ratio:.3}"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Duration, Check); 10] = [
        (
            1,
            "bare dissipator stalls above the minimum",
            Duration::from_secs(5),
            bare_anomaly,
        ),
        (
            2,
            "bare fixed points share the energy -E_Z S",
            Duration::from_secs(1),
            fixed_point_energies,
        ),
        (
            3,
            "rotated and dressed dissipators reach E_SR",
            Duration::from_secs(5),
            rotated_and_dressed_relaxation,
        ),
        (
            4,
            "shifted oscillator fixed points",
            Duration::from_secs(1),
            shifted_oscillator,
        ),
        (
            5,
            "diagonalization invariants",
            Duration::from_secs(2),
            diagonalization_suite,
        ),
        (
            6,
            "oracle at T=0: dressed ground state, bare gap",
            Duration::from_secs(60),
            oracle_zero_temperature,
        ),
        (
            7,
            "oracle at T=0: decay rate 2 kappa_eff1",
            Duration::from_secs(60),
            zero_temperature_viscosity,
        ),
        (
            8,
            "quadrature identities on the Fock space",
            Duration::from_secs(1),
            cmn_identity,
        ),
        (
            9,
            "oracle thermal occupation 0.5",
            Duration::from_secs(60),
            thermal_consistency,
        ),
        (10, "RK4 global error order", Duration::from_secs(1), integrator_order),
    ];
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass && elapsed < budget, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} {id:>2} {name}: {detail} [{:.2} s / {} s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
