//! Constrained choice of protocol parameters from per-source error budgets.
//!
//! Pipeline: S → α_det → η_det → T_det → N_tr → T_init → T_prep. Every error
//! source (double emission, wavevector mismatch, broadening, initialization)
//! gets the budget ε, by default 0.2/N.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ensemble::{make_cylinder_from, CylinderSpec, EnsembleGeometry};
use crate::error::{Error, Result};
use crate::protocol::FWHM_PER_SIGMA;
use crate::quadrature::QuadratureSpec;
use crate::radiation::{self, ConeWeighting, EmitterModel, UniformCylinder};
use crate::vector::Direction;

/// Bracket for the detection half-angle, radians.
pub const ALPHA_BRACKET: (f64, f64) = (1e-4, std::f64::consts::FRAC_PI_2);
/// Absolute α tolerance, radians.
pub const ALPHA_TOLERANCE: f64 = 1e-4;
/// Trial counts beyond this are reported as solver failures.
pub const MAX_EXPECTED_TRIALS: f64 = 1e15;
/// Relative tolerance on the broadening-limited detection time.
pub const BROADENING_TOLERANCE: f64 = 1e-3;

/// How a cylinder ensemble enters the radiative integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CylinderModel {
    /// Ensemble-averaged form factor.
    #[default]
    Average,
    /// One seeded realization of the positions.
    Sampled,
}

impl std::str::FromStr for CylinderModel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "average" => Ok(CylinderModel::Average),
            "sampled" => Ok(CylinderModel::Sampled),
            other => Err(format!("unknown cylinder model `{other}` (average|sampled)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EmitterSource {
    Geometry { geometry: EnsembleGeometry },
    Cylinder { spec: CylinderSpec, model: CylinderModel, seed: u64 },
}

impl EmitterSource {
    pub fn emitter_count(&self) -> usize {
        match self {
            EmitterSource::Geometry { geometry } => geometry.len(),
            EmitterSource::Cylinder { spec, .. } => spec.n,
        }
    }

    pub fn lifetime(&self) -> f64 {
        match self {
            EmitterSource::Geometry { geometry } => geometry.lifetime(),
            EmitterSource::Cylinder { spec, .. } => spec.transition.lifetime,
        }
    }

    /// Positions for simulation; cylinders are sampled with their seed.
    pub fn geometry(&self) -> Result<EnsembleGeometry> {
        match self {
            EmitterSource::Geometry { geometry } => Ok(geometry.clone()),
            EmitterSource::Cylinder { spec, seed, .. } => make_cylinder_from(spec, *seed),
        }
    }

    /// The ζ model used by the radiative integrals.
    pub fn model(&self) -> Result<Box<dyn EmitterModel>> {
        match self {
            EmitterSource::Geometry { geometry } => Ok(Box::new(geometry.clone())),
            EmitterSource::Cylinder {
                spec,
                model: CylinderModel::Average,
                ..
            } => Ok(Box::new(UniformCylinder::from_spec(spec)?)),
            EmitterSource::Cylinder {
                spec,
                model: CylinderModel::Sampled,
                seed,
            } => Ok(Box::new(make_cylinder_from(spec, *seed)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignInputs {
    pub source: EmitterSource,
    pub k_l: Direction,
    /// Per-source error budget; `None` means 0.2/N.
    pub budget: Option<f64>,
    /// Initialization budget; `None` means the common budget.
    pub init_budget: Option<f64>,
    /// Success probability defining N_tr.
    pub target: f64,
    /// Hz (cyclic)
    pub broadening_fwhm: f64,
    pub weighting: ConeWeighting,
    pub interference_factor: f64,
    /// Replaces the computed η_det in p_det when set.
    pub eta_override: Option<f64>,
    /// `None` picks the default layout for the model.
    pub quadrature: Option<QuadratureSpec>,
}

impl DesignInputs {
    pub fn new(source: EmitterSource, k_l: Direction) -> Self {
        DesignInputs {
            source,
            k_l,
            budget: None,
            init_budget: None,
            target: 0.5,
            broadening_fwhm: 0.0,
            weighting: ConeWeighting::SolidAngle,
            interference_factor: 1.0,
            eta_override: None,
            quadrature: None,
        }
    }

    pub fn n(&self) -> usize {
        self.source.emitter_count()
    }

    pub fn epsilon(&self) -> f64 {
        self.budget.unwrap_or(0.2 / self.n() as f64)
    }

    pub fn init_epsilon(&self) -> f64 {
        self.init_budget.unwrap_or_else(|| self.epsilon())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 {
            return Err(Error::validation("n", "must be at least 1"));
        }
        for (field, v) in [("budget", self.budget), ("init_budget", self.init_budget)] {
            if let Some(e) = v {
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::validation(field, "must lie in (0, 1)"));
                }
            }
        }
        if !(self.target > 0.0 && self.target < 1.0) {
            return Err(Error::validation("target", "must lie in (0, 1)"));
        }
        if !(self.broadening_fwhm.is_finite() && self.broadening_fwhm >= 0.0) {
            return Err(Error::validation("broadening_fwhm", "must be nonnegative"));
        }
        if !(self.interference_factor > 0.0 && self.interference_factor <= 1.0) {
            return Err(Error::validation("interference_factor", "must lie in (0, 1]"));
        }
        if let Some(eta) = self.eta_override {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::validation("eta_override", "must lie in (0, 1]"));
            }
        }
        if let Some(q) = &self.quadrature {
            q.validate()?;
        }
        Ok(())
    }
}

/// Which cap set T_det.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    DoubleEmission,
    Broadening,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionTime {
    pub t_det: f64,
    pub double_emission_cap: f64,
    pub broadening_cap: Option<f64>,
    pub binding: Binding,
}

/// Cone results for one weighting choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSolution {
    pub weighting: ConeWeighting,
    pub alpha_det: f64,
    pub mean_coherence: f64,
    pub eta_det: f64,
}

/// Expected error per source at the design point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetBreakdown {
    pub double_emission: f64,
    pub mismatch: f64,
    pub broadening: f64,
    pub initialization: f64,
}

/// Solved parameters, SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub n: usize,
    pub wavelength: f64,
    pub lifetime: f64,
    pub budget: f64,
    pub init_budget: f64,
    pub target: f64,
    pub emission_rate: f64,
    pub alpha_det: f64,
    pub mean_coherence: f64,
    pub eta_det: f64,
    /// Same quantities under the other cone weighting.
    pub alternate: ConeSolution,
    /// η_det that entered p_det.
    pub eta_used: f64,
    pub t_det: f64,
    pub t_det_double_emission_cap: f64,
    pub t_det_broadening_cap: Option<f64>,
    pub binding: Binding,
    pub p_det: f64,
    pub n_tr: u64,
    pub t_init: f64,
    /// τ·ln(N_tr·N)
    pub t_init_unit_budget: f64,
    pub t_prep: f64,
    pub breakdown: BudgetBreakdown,
    pub witness_applicable: bool,
}

/// Bisection for the boundary of a predicate that holds at `lo` and fails
/// at `hi`. Returns the last point known to satisfy it.
pub fn bisect_feasible<F: FnMut(f64) -> bool>(mut lo: f64, mut hi: f64, tol: f64, mut ok: F) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Expected broadening infidelity 1 − exp(−σ²T²) for a Gaussian FWHM in Hz.
pub fn broadening_infidelity(fwhm_hz: f64, t: f64) -> f64 {
    let sigma = 2.0 * std::f64::consts::PI * fwhm_hz / FWHM_PER_SIGMA;
    -(-(sigma * t).powi(2)).exp_m1()
}

/// T_det = min(ε·τ/(S·N), broadening cap).
pub fn solve_t_det(inputs: &DesignInputs, s: f64) -> Result<DetectionTime> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Solver(format!("emission rate must be positive, got {s}")));
    }
    let n = inputs.n() as f64;
    let eps = inputs.epsilon();
    let tau = inputs.source.lifetime();
    let double_emission_cap = eps * tau / (s * n);

    let broadening_cap = if inputs.broadening_fwhm > 0.0 {
        let fwhm = inputs.broadening_fwhm;
        let mut hi = double_emission_cap.max(1e-15);
        while broadening_infidelity(fwhm, hi) <= eps {
            hi *= 2.0;
            if hi > 1.0 {
                return Err(Error::Solver("broadening cap did not bracket".into()));
            }
        }
        let mut lo = hi;
        while broadening_infidelity(fwhm, lo) > eps {
            lo /= 2.0;
            if lo < 1e-30 {
                return Err(Error::Solver("broadening cap has no positive solution".into()));
            }
        }
        let tol = BROADENING_TOLERANCE * lo;
        Some(bisect_feasible(lo, hi, tol, |t| broadening_infidelity(fwhm, t) <= eps))
    } else {
        None
    };

    let (t_det, binding) = match broadening_cap {
        Some(b) if b < double_emission_cap => (b, Binding::Broadening),
        _ => (double_emission_cap, Binding::DoubleEmission),
    };
    if !(t_det > 0.0) {
        return Err(Error::Solver("detection time is not positive".into()));
    }
    Ok(DetectionTime {
        t_det,
        double_emission_cap,
        broadening_cap,
        binding,
    })
}

fn quadrature_for(inputs: &DesignInputs, model: &dyn EmitterModel) -> QuadratureSpec {
    inputs
        .quadrature
        .unwrap_or_else(|| radiation::default_quadrature(model, inputs.k_l))
}

/// Largest α whose cone-averaged mismatch 1 − ζ̄/N stays within ε.
pub fn solve_alpha_det_with(
    model: &dyn EmitterModel,
    k_l: Direction,
    eps: f64,
    quad: &QuadratureSpec,
    weighting: ConeWeighting,
) -> Result<f64> {
    let n = model.emitter_count() as f64;
    let ok = |a: f64| 1.0 - radiation::cone_mean_coherence(model, k_l, a, quad, weighting) / n <= eps;
    let (lo, hi) = ALPHA_BRACKET;
    if ok(hi) {
        return Ok(hi);
    }
    if !ok(lo) {
        return Err(Error::Solver(format!(
            "mismatch budget {eps} exceeded even at α = {lo} rad"
        )));
    }
    Ok(bisect_feasible(lo, hi, ALPHA_TOLERANCE, ok))
}

pub fn solve_alpha_det(inputs: &DesignInputs) -> Result<f64> {
    let model = inputs.source.model()?;
    let quad = quadrature_for(inputs, model.as_ref());
    solve_alpha_det_with(model.as_ref(), inputs.k_l, inputs.epsilon(), &quad, inputs.weighting)
}

/// Smallest n with 1 − (1 − p)^n ≥ target.
pub fn expected_trials(p: f64, target: f64) -> Result<u64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::validation("p_det", "must lie in (0, 1]"));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::validation("target", "must lie in (0, 1)"));
    }
    if p == 1.0 {
        return Ok(1);
    }
    let reached = |m: u64| -(m as f64 * (-p).ln_1p()).exp_m1() >= target;
    let estimate = ((-target).ln_1p() / (-p).ln_1p()).ceil().max(1.0);
    if estimate > MAX_EXPECTED_TRIALS {
        return Err(Error::Solver(format!(
            "detection probability {p:e} needs more than {MAX_EXPECTED_TRIALS:e} trials"
        )));
    }
    let mut n = estimate as u64;
    while n > 1 && reached(n - 1) {
        n -= 1;
    }
    while !reached(n) {
        n += 1;
    }
    Ok(n)
}

/// T_init = τ·ln(N_tr/ε_init), so that N_tr·e^{−T_init/τ} = ε_init; clamped at 0.
pub fn solve_t_init(n_tr: u64, inputs: &DesignInputs) -> Result<f64> {
    if n_tr < 1 {
        return Err(Error::validation("n_tr", "must be at least 1"));
    }
    let tau = inputs.source.lifetime();
    Ok((tau * (n_tr as f64 / inputs.init_epsilon()).ln()).max(0.0))
}

fn other(w: ConeWeighting) -> ConeWeighting {
    match w {
        ConeWeighting::SolidAngle => ConeWeighting::Intensity,
        ConeWeighting::Intensity => ConeWeighting::SolidAngle,
    }
}

fn cone_solution(
    model: &dyn EmitterModel,
    inputs: &DesignInputs,
    quad: &QuadratureSpec,
    weighting: ConeWeighting,
) -> Result<ConeSolution> {
    let alpha = solve_alpha_det_with(model, inputs.k_l, inputs.epsilon(), quad, weighting)?;
    Ok(ConeSolution {
        weighting,
        alpha_det: alpha,
        mean_coherence: radiation::cone_mean_coherence(model, inputs.k_l, alpha, quad, weighting),
        eta_det: radiation::detection_fraction(model, inputs.k_l, alpha, quad),
    })
}

pub fn design_report(inputs: &DesignInputs) -> Result<DesignReport> {
    inputs.validate()?;
    let model = inputs.source.model()?;
    let model = model.as_ref();
    let quad = quadrature_for(inputs, model);
    let n = inputs.n();
    let nf = n as f64;
    let eps = inputs.epsilon();
    let tau = inputs.source.lifetime();

    let s = radiation::emission_rate(model, inputs.k_l, &quad);
    let primary = cone_solution(model, inputs, &quad, inputs.weighting)?;
    let alternate = cone_solution(model, inputs, &quad, other(inputs.weighting))?;
    let eta_used = inputs.eta_override.unwrap_or(primary.eta_det);

    let det = solve_t_det(inputs, s)?;
    let mean_emissions = s * nf * det.t_det / tau;
    let p_det = mean_emissions * eta_used * inputs.interference_factor;
    if !(p_det > 0.0 && p_det <= 1.0) {
        return Err(Error::Solver(format!("detection probability {p_det} outside (0, 1]")));
    }
    let n_tr = expected_trials(p_det, inputs.target)?;
    let t_init = solve_t_init(n_tr, inputs)?;
    let t_init_unit_budget = (tau * (n_tr as f64 * nf).ln()).max(0.0);
    let t_prep = n_tr as f64 * (t_init + 2.0 * det.t_det);

    let broadening = if inputs.broadening_fwhm > 0.0 {
        broadening_infidelity(inputs.broadening_fwhm, det.t_det)
    } else {
        0.0
    };
    Ok(DesignReport {
        n,
        wavelength: model.transition().wavelength,
        lifetime: tau,
        budget: eps,
        init_budget: inputs.init_epsilon(),
        target: inputs.target,
        emission_rate: s,
        alpha_det: primary.alpha_det,
        mean_coherence: primary.mean_coherence,
        eta_det: primary.eta_det,
        alternate,
        eta_used,
        t_det: det.t_det,
        t_det_double_emission_cap: det.double_emission_cap,
        t_det_broadening_cap: det.broadening_cap,
        binding: det.binding,
        p_det,
        n_tr,
        t_init,
        t_init_unit_budget,
        t_prep,
        breakdown: BudgetBreakdown {
            double_emission: mean_emissions,
            mismatch: 1.0 - primary.mean_coherence / nf,
            broadening,
            initialization: n_tr as f64 * (-t_init / tau).exp(),
        },
        witness_applicable: n >= 2,
    })
}

/// Aligned text table, one column per report, in presentation units.
pub fn format_table(reports: &[DesignReport]) -> String {
    type Row = (&'static str, fn(&DesignReport) -> String);
    let rows: [Row; 10] = [
        ("N", |r| r.n.to_string()),
        ("S", |r| format!("{:.2}", r.emission_rate)),
        ("alpha_det [mrad]", |r| format!("{:.1}", r.alpha_det * 1e3)),
        ("eta_det", |r| format!("{:.4}", r.eta_used)),
        ("T_det [ps]", |r| format!("{:.3}", r.t_det * 1e12)),
        ("T_det bound", |r| match r.binding {
            Binding::DoubleEmission => "double".into(),
            Binding::Broadening => "broadening".into(),
        }),
        ("T_init [ns]", |r| format!("{:.0}", r.t_init * 1e9)),
        ("T_init unit [ns]", |r| format!("{:.0}", r.t_init_unit_budget * 1e9)),
        ("N_tr", |r| r.n_tr.to_string()),
        ("T_prep [us]", |r| format!("{:.1}", r.t_prep * 1e6)),
    ];
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, f)| reports.iter().map(f).collect())
        .collect();
    let width = cells
        .iter()
        .flatten()
        .map(|c| c.chars().count())
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = String::new();
    for ((label, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{label:<label_width$}");
        for c in row {
            let _ = write!(out, "  {c:>width$}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{make_linear_chain, DipolePattern, Transition};
    use crate::vector::Vec3;

    fn cs(n: usize) -> DesignInputs {
        let t = Transition::new(852e-9, 30e-9, DipolePattern::SigmaPlus).unwrap();
        let geometry = make_linear_chain(n, 532e-9, Vec3::new(0.0, 0.0, 1.0), t).unwrap();
        DesignInputs::new(EmitterSource::Geometry { geometry }, Direction::PLUS_Z)
    }

    #[test]
    fn expected_trials_examples() {
        assert_eq!(expected_trials(0.5, 0.5).unwrap(), 1);
        assert_eq!(expected_trials(1.0, 0.5).unwrap(), 1);
        // 0.9^6 = 0.531, 0.9^7 = 0.478
        assert_eq!(expected_trials(0.1, 0.5).unwrap(), 7);
        assert!(expected_trials(0.0, 0.5).is_err());
        assert!(expected_trials(-0.1, 0.5).is_err());
        let n = expected_trials(1e-4, 0.5).unwrap() as f64;
        assert!((n - std::f64::consts::LN_2 / 1e-4).abs() / n < 1e-3);
    }

    #[test]
    fn t_det_double_emission_closed_form() {
        let inputs = cs(10);
        let d = solve_t_det(&inputs, 1.2).unwrap();
        assert_eq!(d.binding, Binding::DoubleEmission);
        let expected = 0.2 * 30e-9 / (1.2 * 100.0);
        assert!((d.t_det - expected).abs() < 1e-9 * expected);
        assert!(solve_t_det(&inputs, 0.0).is_err());
    }

    #[test]
    fn t_det_broadening_matches_inverse() {
        let mut inputs = cs(10);
        inputs.broadening_fwhm = 20e9;
        let d = solve_t_det(&inputs, 1.85).unwrap();
        let sigma = 2.0 * std::f64::consts::PI * 20e9 / FWHM_PER_SIGMA;
        let exact = (-(1.0f64 - 0.02).ln()).sqrt() / sigma;
        let cap = d.broadening_cap.unwrap();
        assert!((cap - exact).abs() / exact < 0.01, "{cap} vs {exact}");
        assert!(cap <= exact);
    }

    #[test]
    fn t_init_monotone_and_clamped() {
        let mut inputs = cs(10);
        inputs.init_budget = Some(0.5);
        let one = solve_t_init(1, &inputs).unwrap();
        assert!((one - 30e-9 * 2f64.ln()).abs() < 1e-20);
        let a = solve_t_init(100, &inputs).unwrap();
        let b = solve_t_init(1000, &inputs).unwrap();
        assert!(b > a && a > 0.0);
        assert!(solve_t_init(0, &inputs).is_err());
    }

    #[test]
    fn single_emitter_design_is_degenerate() {
        let r = design_report(&cs(1)).unwrap();
        assert_eq!(r.alpha_det, ALPHA_BRACKET.1);
        assert!(!r.witness_applicable);
        assert!((r.emission_rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bisection_finds_boundary() {
        let x = bisect_feasible(0.0, 2.0, 1e-9, |x| x * x <= 2.0);
        assert!((x - 2f64.sqrt()).abs() < 1e-8 && x * x <= 2.0);
    }

    #[test]
    fn table_lists_all_rows() {
        let r = design_report(&cs(4)).unwrap();
        let t = format_table(&[r.clone(), r]);
        assert_eq!(t.lines().count(), 10);
        assert!(t.contains("T_prep [us]"));
    }
}
