//! Self-check suite: operator identities on the exact state vector,
//! quadrature normalization and the chain closed form.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ensemble::{DipolePattern, EnsembleGeometry, Transition};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_direction_function, Cap, QuadratureSpec};
use crate::radiation::{self, chain_coherence, coherence_factor};
use crate::statevec::{self, PureState, MAX_QUBITS};
use crate::vector::{Direction, Vec3};

/// Maps (state, φ_L, geometry, k_L) to a new state.
pub type Operator = fn(&PureState, f64, &EnsembleGeometry, Direction) -> Result<PureState>;

pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const FIDELITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: impl Into<String>, max_error: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            passed: max_error <= tolerance,
            max_error,
            tolerance,
        }
    }
}

/// `n` emitters uniformly in a cube of side three wavelengths.
pub fn random_geometry<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<EnsembleGeometry> {
    let t = Transition::new(852e-9, 30e-9, DipolePattern::SigmaPlus)?;
    let side = 3.0 * t.wavelength;
    let positions = (0..n)
        .map(|_| {
            Vec3::new(
                side * rng.random::<f64>(),
                side * rng.random::<f64>(),
                side * rng.random::<f64>(),
            )
        })
        .collect();
    EnsembleGeometry::new(positions, t, "random")
}

pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Direction {
    let c: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    Direction::from_polar(Direction::PLUS_Z, c.acos(), phi)
}

fn guard(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits {
            requested: n,
            max: MAX_QUBITS,
        });
    }
    Ok(())
}

/// Largest elementwise difference between `lhs` and `rhs` over every basis
/// state, for a random geometry, k_L and several φ_L.
pub fn check_operator_identity(
    name: &str,
    lhs: Operator,
    rhs: Operator,
    n: usize,
    seed: u64,
) -> Result<CheckResult> {
    guard(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = random_geometry(n, &mut rng)?;
    let k_l = random_direction(&mut rng);
    let mut worst: f64 = 0.0;
    for phi in [0.0, 0.7, rng.random_range(0.0..2.0 * PI)] {
        for idx in 0..1usize << n {
            let basis = PureState::basis(n, idx)?;
            let a = lhs(&basis, phi, &geom, k_l)?;
            let b = rhs(&basis, phi, &geom, k_l)?;
            worst = worst.max(a.max_abs_diff(&b)?);
        }
    }
    Ok(CheckResult::new(format!("{name} N={n}"), worst, IDENTITY_TOLERANCE))
}

fn m_ent_composite_forward(s: &PureState, phi: f64, g: &EnsembleGeometry, k_l: Direction) -> Result<PureState> {
    statevec::apply_m_ent_composite(s, phi, g, k_l, k_l)
}

/// Composite pulse sequences against their operator expansions.
pub fn identity_pairs() -> Vec<(&'static str, Operator, Operator)> {
    vec![
        (
            "detection operator expansion",
            statevec::apply_m_det as Operator,
            statevec::apply_m_det_expansion as Operator,
        ),
        (
            "interference operator expansion",
            m_ent_composite_forward as Operator,
            statevec::apply_m_ent as Operator,
        ),
    ]
}

/// normalize(M_ent|g…g⟩) against the phased W state over random geometries.
pub fn check_heralded_w(n: usize, geometries: usize, seed: u64) -> Result<CheckResult> {
    guard(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..geometries {
        let geom = random_geometry(n, &mut rng)?;
        let k_l = random_direction(&mut rng);
        let phi = rng.random_range(0.0..2.0 * PI);
        let out = statevec::apply_m_ent(&PureState::ground(n)?, phi, &geom, k_l)?.normalized();
        let f = statevec::fidelity(&out, &statevec::w_state(&geom, k_l)?)?;
        worst = worst.max((f - 1.0).abs());
    }
    Ok(CheckResult::new(format!("heralded W state N={n}"), worst, FIDELITY_TOLERANCE))
}

/// |⟨W(k_L)|W(k_det)⟩|² = ζ(k_det)/N.
pub fn check_mismatch_identity(n: usize, samples: usize, seed: u64) -> Result<CheckResult> {
    guard(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let geom = random_geometry(n, &mut rng)?;
        let k_l = random_direction(&mut rng);
        let k_det = random_direction(&mut rng);
        let f = statevec::fidelity(&statevec::w_state(&geom, k_l)?, &statevec::w_state(&geom, k_det)?)?;
        worst = worst.max((f - radiation::mismatch_fidelity(&geom, k_l, k_det)).abs());
    }
    Ok(CheckResult::new(format!("mismatch fidelity N={n}"), worst, FIDELITY_TOLERANCE))
}

/// Dipole patterns integrate to one and a lone emitter has S = 1.
pub fn check_quadrature_normalization() -> Result<CheckResult> {
    let quad = QuadratureSpec::general();
    let axis = Direction::normalize(Vec3::new(0.3, -0.2, 0.9))?;
    let mut worst: f64 = 0.0;
    for p in DipolePattern::all() {
        let total = integrate_direction_function(|d| p.density(d.cos_angle(axis)), axis, &quad, Cap::FullSphere);
        worst = worst.max((total - 1.0).abs());
        let t = Transition::new(852e-9, 30e-9, p)?;
        let single = EnsembleGeometry::new(vec![Vec3::ZERO], t, "single")?;
        worst = worst.max((radiation::emission_rate(&single, axis, &quad) - 1.0).abs());
    }
    Ok(CheckResult::new("quadrature normalization", worst, 1e-9))
}

/// Direct ζ sum against the Dirichlet-kernel form for chains.
pub fn check_chain_closed_form(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for n in [1, 2, 7, 30, 100] {
        let axis = random_direction(&mut rng).vector();
        let spacing = rng.random_range(200e-9..900e-9);
        let t = Transition::new(852e-9, 30e-9, DipolePattern::SigmaPlus)?;
        let geom = crate::ensemble::make_linear_chain(n, spacing, axis, t)?;
        for _ in 0..50 {
            let k_l = random_direction(&mut rng);
            let k = random_direction(&mut rng);
            let direct = coherence_factor(&geom, k_l, k);
            let closed = chain_coherence(n, spacing, t.wavelength, axis, k_l, k);
            worst = worst.max((direct - closed).abs() / n as f64);
        }
    }
    Ok(CheckResult::new("chain closed form", worst, 1e-9))
}

/// Full suite over the given state-vector sizes.
pub fn run_suite(sizes: &[usize], seed: u64) -> Result<Vec<CheckResult>> {
    for &n in sizes {
        guard(n)?;
    }
    let mut out = Vec::new();
    for &n in sizes {
        for (name, lhs, rhs) in identity_pairs() {
            out.push(check_operator_identity(name, lhs, rhs, n, seed ^ n as u64)?);
        }
        out.push(check_heralded_w(n, 100, seed.wrapping_add(n as u64))?);
        out.push(check_mismatch_identity(n, 100, seed.wrapping_add(100 + n as u64))?);
    }
    out.push(check_quadrature_normalization()?);
    out.push(check_chain_closed_form(seed)?);
    Ok(out)
}

pub fn format_matrix(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(
            s,
            "{status}  {:<width$}  max_error={:.3e}  tol={:.1e}",
            r.name, r.max_error, r.tolerance
        );
    }
    s
}
