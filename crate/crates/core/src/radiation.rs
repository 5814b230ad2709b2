//! Collective radiation pattern of a coherently excited ensemble and the
//! scalar quantities derived from it.
//!
//! With excitation wavevector k_L, the short-time emission intensity is
//! `I(k) = I₀(k) · (N/4) · (1 + ζ(k))`, where
//! `ζ(k) = |Σ_j exp(−i (k − k_L)·x_j)|² / N` and `I₀` is the single-emitter
//! pattern normalized to unit integral over the sphere. All rates are in
//! units of 1/τ.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    make_cylinder_from, CylinderShape, CylinderSpec, DipolePattern, EnsembleGeometry, Transition,
};
use crate::error::Result;
use crate::exec::Execution;
use crate::quadrature::{Cap, DirectionGrid, QuadratureSpec};
use crate::vector::{wavenumber, Direction, Vec3};

/// Anything that can supply a coherence factor ζ(k).
pub trait EmitterModel: Sync {
    fn emitter_count(&self) -> usize;

    fn transition(&self) -> Transition;

    /// ζ(k) for excitation along `k_l`; lies in [0, N].
    fn coherence(&self, k_l: Direction, k: Direction) -> f64;

    /// True if ζ depends on k only through its angle to `k_l`.
    fn is_axisymmetric_about(&self, k_l: Direction) -> bool;
}

impl EmitterModel for EnsembleGeometry {
    fn emitter_count(&self) -> usize {
        self.len()
    }

    fn transition(&self) -> Transition {
        EnsembleGeometry::transition(self)
    }

    fn coherence(&self, k_l: Direction, k: Direction) -> f64 {
        coherence_factor(self, k_l, k)
    }

    fn is_axisymmetric_about(&self, k_l: Direction) -> bool {
        self.is_collinear_along(k_l)
    }
}

/// ζ(k) by direct summation over emitter positions.
pub fn coherence_factor(geom: &EnsembleGeometry, k_l: Direction, k: Direction) -> f64 {
    let dk = (k.vector() - k_l.vector()) * wavenumber(geom.wavelength());
    let (mut re, mut im) = (0.0, 0.0);
    for &x in geom.positions() {
        let (s, c) = dk.dot(x).sin_cos();
        re += c;
        im -= s;
    }
    let n = geom.len() as f64;
    ((re * re + im * im) / n).clamp(0.0, n)
}

/// Closed-form ζ for an equally spaced chain: `sin²(N u/2) / (N sin²(u/2))`
/// with `u = k d (k̂ − k̂_L)·â`. The removable singularity at u ≡ 0 mod 2π
/// evaluates to N.
pub fn chain_coherence(n: usize, spacing: f64, wavelength: f64, chain_axis: Vec3, k_l: Direction, k: Direction) -> f64 {
    let u = wavenumber(wavelength) * spacing * (k.vector() - k_l.vector()).dot(chain_axis);
    dirichlet_kernel(n, u)
}

/// `sin²(N u/2) / (N sin²(u/2))`, with its limit N at u ≡ 0 mod 2π.
pub fn dirichlet_kernel(n: usize, u: f64) -> f64 {
    let nf = n as f64;
    // Both factors are 2π-periodic in u up to sign, so reduce first.
    let r = u - 2.0 * PI * (u / (2.0 * PI)).round();
    if r.abs() < 1e-7 {
        return nf * (1.0 - (nf * nf - 1.0) * r * r / 12.0);
    }
    let num = (nf * r / 2.0).sin();
    let den = (r / 2.0).sin();
    num * num / (nf * den * den)
}

/// I(k) in units of 1/τ per steradian.
pub fn intensity<M: EmitterModel + ?Sized>(model: &M, k_l: Direction, k: Direction) -> f64 {
    let n = model.emitter_count() as f64;
    let pattern = model.transition().pattern;
    pattern.density(k.cos_angle(k_l)) * (n / 4.0) * (1.0 + model.coherence(k_l, k))
}

/// Pattern of one half-excited emitter, I₀/2.
pub fn single_emitter_intensity(pattern: DipolePattern, k_l: Direction, k: Direction) -> f64 {
    pattern.density(k.cos_angle(k_l)) / 2.0
}

/// Default quadrature for a model: 512 × 1 when ζ is axisymmetric, else 256 × 64.
pub fn default_quadrature<M: EmitterModel + ?Sized>(model: &M, k_l: Direction) -> QuadratureSpec {
    if model.is_axisymmetric_about(k_l) {
        QuadratureSpec::axisymmetric()
    } else {
        QuadratureSpec::general()
    }
}

/// ∫ I dΩ over the whole sphere.
pub fn total_emission<M: EmitterModel + ?Sized>(model: &M, k_l: Direction, quad: &QuadratureSpec) -> f64 {
    DirectionGrid::new(k_l, quad, Cap::FullSphere).integrate(Execution::default(), |k| intensity(model, k_l, k))
}

/// Per-emitter emission rate S in units of 1/τ, normalized so that
/// uncorrelated emitters give S = 1: `S = (2/N) ∫ I dΩ = (1 + ⟨ζ⟩_{I₀}) / 2`.
pub fn emission_rate<M: EmitterModel + ?Sized>(model: &M, k_l: Direction, quad: &QuadratureSpec) -> f64 {
    2.0 * total_emission(model, k_l, quad) / model.emitter_count() as f64
}

/// How directions inside the detection cone are weighted when averaging ζ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeWeighting {
    #[default]
    SolidAngle,
    Intensity,
}

impl std::str::FromStr for ConeWeighting {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "solid" | "solid_angle" => Ok(ConeWeighting::SolidAngle),
            "intensity" => Ok(ConeWeighting::Intensity),
            other => Err(format!("unknown weighting `{other}` (solid|intensity)")),
        }
    }
}

/// Mean ζ over the cap of half-angle `alpha` about k_L.
pub fn cone_mean_coherence<M: EmitterModel + ?Sized>(
    model: &M,
    k_l: Direction,
    alpha: f64,
    quad: &QuadratureSpec,
    weighting: ConeWeighting,
) -> f64 {
    if alpha <= 0.0 {
        return model.coherence(k_l, k_l);
    }
    let grid = DirectionGrid::new(k_l, quad, Cap::HalfAngle(alpha));
    let pattern = model.transition().pattern;
    let [num, den] = grid.integrate_many(Execution::default(), |k| {
        let zeta = model.coherence(k_l, k);
        let w = match weighting {
            ConeWeighting::SolidAngle => 1.0,
            ConeWeighting::Intensity => pattern.density(k.cos_angle(k_l)) * (1.0 + zeta),
        };
        [w * zeta, w]
    });
    if den <= 0.0 {
        return model.coherence(k_l, k_l);
    }
    (num / den).clamp(0.0, model.emitter_count() as f64)
}

/// Fraction of all emitted power inside the cap of half-angle `alpha`.
pub fn detection_fraction<M: EmitterModel + ?Sized>(
    model: &M,
    k_l: Direction,
    alpha: f64,
    quad: &QuadratureSpec,
) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    let total = total_emission(model, k_l, quad);
    let cap = DirectionGrid::new(k_l, quad, Cap::HalfAngle(alpha))
        .integrate(Execution::default(), |k| intensity(model, k_l, k));
    (cap / total).clamp(0.0, 1.0)
}

/// |⟨W|W′⟩|² = ζ(k_det)/N for a photon detected along `k_det`.
pub fn mismatch_fidelity<M: EmitterModel + ?Sized>(model: &M, k_l: Direction, k_det: Direction) -> f64 {
    (model.coherence(k_l, k_det) / model.emitter_count() as f64).clamp(0.0, 1.0)
}

/// Ensemble-averaged ζ for `n` emitters uniformly filling a cylinder:
/// `1 + (n − 1) |ρ̂(Δk)|²` with `ρ̂ = [2 J₁(q⊥R)/(q⊥R)] · sinc(q_z L/2)`.
pub fn cylinder_expected_coherence(
    n: usize,
    shape: CylinderShape,
    axis: Direction,
    wavelength: f64,
    k_l: Direction,
    k: Direction,
) -> f64 {
    let dk = (k.vector() - k_l.vector()) * wavenumber(wavelength);
    let a = axis.vector();
    let qz = dk.dot(a);
    let qperp = (dk - a * qz).norm();
    let form = airy_factor(qperp * shape.radius) * sinc(qz * shape.length / 2.0);
    1.0 + (n as f64 - 1.0) * form * form
}

fn airy_factor(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 8.0
    } else {
        2.0 * libm::j1(x) / x
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Continuum cylinder: the ensemble average of ζ over uniform i.i.d. positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformCylinder {
    pub n: usize,
    pub shape: CylinderShape,
    pub axis: Direction,
    pub transition: Transition,
}

impl UniformCylinder {
    pub fn from_spec(spec: &CylinderSpec) -> Result<Self> {
        Ok(UniformCylinder {
            n: spec.n,
            shape: spec.shape()?,
            axis: spec.axis,
            transition: spec.transition,
        })
    }
}

impl EmitterModel for UniformCylinder {
    fn emitter_count(&self) -> usize {
        self.n
    }

    fn transition(&self) -> Transition {
        self.transition
    }

    fn coherence(&self, k_l: Direction, k: Direction) -> f64 {
        cylinder_expected_coherence(self.n, self.shape, self.axis, self.transition.wavelength, k_l, k)
    }

    fn is_axisymmetric_about(&self, k_l: Direction) -> bool {
        self.axis.angle_to(k_l) < 1e-12
    }
}

/// Mean of S over `seeds` independent cylinder realizations (seeds 0..seeds
/// offset by `base_seed`), evaluated under `exec`.
pub fn seed_averaged_emission_rate(
    spec: &CylinderSpec,
    k_l: Direction,
    seeds: usize,
    base_seed: u64,
    quad: &QuadratureSpec,
    exec: Execution,
) -> Result<f64> {
    let per_seed = exec.map_indexed(seeds, |i| -> Result<f64> {
        let geom = make_cylinder_from(spec, base_seed.wrapping_add(i as u64))?;
        let grid = DirectionGrid::new(k_l, quad, Cap::FullSphere);
        let total = grid.integrate(Execution::Sequential, |k| intensity(&geom, k_l, k));
        Ok(2.0 * total / geom.len() as f64)
    });
    let mut sum = 0.0;
    for s in per_seed {
        sum += s?;
    }
    Ok(sum / seeds as f64)
}
