//! Monte Carlo of the repeat-until-success preparation.
//!
//! Each trial emits a Poisson number of photons at the collective rate
//! S·N/τ over the detection time; every photon draws its direction from
//! I(k). A click requires at least one photon inside the detection cone that
//! also passes the interference time-bin (probability `interference_factor`).
//! Inhomogeneous detunings are static within a preparation run.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleGeometry;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::quadrature::QuadratureSpec;
use crate::radiation::{self, EmitterModel};
use crate::statevec::{self, PureState};
use crate::vector::Direction;

const MAX_PROPOSALS: u64 = 1_000_000;

/// FWHM → standard deviation of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

/// Largest ensemble replayed through the exact oracle.
pub const REPLAY_MAX_QUBITS: usize = 10;

/// How the double-emission budget maps onto the two detection windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowBudget {
    /// Poisson mean S·N·T_det/τ for the whole trial.
    #[default]
    Single,
    /// Poisson mean S·N·T_det/τ in each of the two windows.
    PerWindow,
}

impl WindowBudget {
    fn windows(self) -> f64 {
        match self {
            WindowBudget::Single => 1.0,
            WindowBudget::PerWindow => 2.0,
        }
    }
}

impl std::str::FromStr for WindowBudget {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "single" => Ok(WindowBudget::Single),
            "per_window" | "per-window" => Ok(WindowBudget::PerWindow),
            other => Err(format!("unknown window budget `{other}` (single|per_window)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub geometry: EnsembleGeometry,
    pub k_l: Direction,
    /// radians
    pub alpha_det: f64,
    /// seconds
    pub t_det: f64,
    /// seconds
    pub t_init: f64,
    pub phi_l: f64,
    /// Hz (cyclic); 0 disables broadening
    pub broadening_fwhm: f64,
    pub max_trials: u64,
    pub seed: u64,
    pub interference_factor: f64,
    pub window_budget: WindowBudget,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_det.is_finite() && self.t_det > 0.0) {
            return Err(Error::validation("t_det", "must be positive"));
        }
        if !(self.t_init.is_finite() && self.t_init > 0.0) {
            return Err(Error::validation("t_init", "must be positive"));
        }
        if !(self.alpha_det > 0.0 && self.alpha_det <= PI) {
            return Err(Error::validation("alpha_det", "must lie in (0, π]"));
        }
        if self.max_trials < 1 {
            return Err(Error::validation("max_trials", "must be at least 1"));
        }
        if !(self.broadening_fwhm.is_finite() && self.broadening_fwhm >= 0.0) {
            return Err(Error::validation("broadening_fwhm", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.interference_factor) {
            return Err(Error::validation("interference_factor", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub emissions: u32,
    pub detected: bool,
    pub detected_direction: Option<Direction>,
    pub double_emission: bool,
    /// ζ(k_det)/N for the detected photon
    pub mismatch_fidelity: f64,
    /// |Σ_j e^{iδ_j T_det}|² / N²
    pub broadening_factor: f64,
    /// Fidelity of the heralded state; 0 unless exactly one photon was emitted and detected.
    pub heralded_fidelity: f64,
    /// Per-qubit excitation probability carried into the next trial.
    pub residual_excitation: f64,
}

/// Errors attributed to each source for one preparation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub double_emission: f64,
    pub mismatch: f64,
    pub initialization: f64,
    pub broadening: f64,
}

impl ErrorBudget {
    pub fn total(&self) -> f64 {
        self.double_emission + self.mismatch + self.initialization + self.broadening
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparationResult {
    pub run_index: u64,
    pub trials: u64,
    pub success: bool,
    pub fidelity: f64,
    /// 1 − 1/N − F; absent for N = 1 or failed runs.
    pub witness: Option<f64>,
    pub budget: ErrorBudget,
    /// trials · (T_init + 2 T_det), seconds
    pub preparation_time: f64,
    pub detected_angle: Option<f64>,
}

/// Per-run frozen randomness: the static detunings (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct RunContext {
    pub detunings: Vec<f64>,
}

impl RunContext {
    pub fn draw<R: Rng + ?Sized>(n: usize, fwhm_hz: f64, rng: &mut R) -> Self {
        if fwhm_hz == 0.0 {
            return RunContext {
                detunings: vec![0.0; n],
            };
        }
        let sigma = 2.0 * PI * fwhm_hz / FWHM_PER_SIGMA;
        let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
        RunContext {
            detunings: (0..n).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn broadening_factor(&self, t_det: f64) -> f64 {
        let n = self.detunings.len() as f64;
        let s: Complex64 = self
            .detunings
            .iter()
            .map(|&d| Complex64::from_polar(1.0, d * t_det))
            .sum();
        (s.norm_sqr() / (n * n)).min(1.0)
    }
}

/// Rejection-samples a direction with density ∝ I(k). Returns the direction
/// and the number of proposals used.
pub fn sample_emission_direction_counted<M, R>(model: &M, k_l: Direction, rng: &mut R) -> Result<(Direction, u64)>
where
    M: EmitterModel + ?Sized,
    R: Rng + ?Sized,
{
    // Proposal ∝ I₀; accept with (1 + ζ)/(1 + N) since ζ ≤ N.
    let pattern = model.transition().pattern;
    let bound = 1.0 + model.emitter_count() as f64;
    for proposals in 1..=MAX_PROPOSALS {
        let c = pattern.sample_cos_theta(rng);
        let phi = 2.0 * PI * rng.random::<f64>();
        let k = Direction::from_axis_offset(k_l, 1.0 - c, phi);
        if rng.random::<f64>() * bound <= 1.0 + model.coherence(k_l, k) {
            return Ok((k, proposals));
        }
    }
    Err(Error::Sampling(format!(
        "no direction accepted after {MAX_PROPOSALS} proposals"
    )))
}

pub fn sample_emission_direction<M, R>(model: &M, k_l: Direction, rng: &mut R) -> Result<Direction>
where
    M: EmitterModel + ?Sized,
    R: Rng + ?Sized,
{
    sample_emission_direction_counted(model, k_l, rng).map(|(d, _)| d)
}

/// Protocol parameters together with the radiative quantities they imply.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ProtocolParams,
    emission_rate: f64,
    detection_fraction: f64,
}

impl Simulator {
    /// Computes S and η_det for the geometry by quadrature.
    pub fn new(params: ProtocolParams, quad: &QuadratureSpec) -> Result<Self> {
        params.validate()?;
        quad.validate()?;
        let s = radiation::emission_rate(&params.geometry, params.k_l, quad);
        let eta = radiation::detection_fraction(&params.geometry, params.k_l, params.alpha_det, quad);
        Ok(Simulator {
            params,
            emission_rate: s,
            detection_fraction: eta,
        })
    }

    /// Uses caller-supplied S (may be 0 to switch emission off) and η_det.
    pub fn with_rates(params: ProtocolParams, emission_rate: f64, detection_fraction: f64) -> Result<Self> {
        params.validate()?;
        if !(emission_rate.is_finite() && emission_rate >= 0.0) {
            return Err(Error::validation("emission_rate", "must be nonnegative"));
        }
        Ok(Simulator {
            params,
            emission_rate,
            detection_fraction: detection_fraction.clamp(0.0, 1.0),
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn emission_rate(&self) -> f64 {
        self.emission_rate
    }

    pub fn detection_fraction(&self) -> f64 {
        self.detection_fraction
    }

    fn n(&self) -> usize {
        self.params.geometry.len()
    }

    /// Poisson mean of photons emitted per trial.
    pub fn mean_emissions(&self) -> f64 {
        let p = &self.params;
        p.window_budget.windows() * self.emission_rate * self.n() as f64 * p.t_det / p.geometry.lifetime()
    }

    /// P(click) per trial.
    pub fn analytic_detection_probability(&self) -> f64 {
        let rate = self.mean_emissions() * self.detection_fraction * self.params.interference_factor;
        -(-rate).exp_m1()
    }

    /// P(≥ 2 photons emitted | click).
    pub fn analytic_double_emission_given_detection(&self) -> f64 {
        let mu = self.mean_emissions();
        let q = self.detection_fraction * self.params.interference_factor;
        let p_click = -(-mu * q).exp_m1();
        if p_click == 0.0 {
            return 0.0;
        }
        1.0 - mu * q * (-mu).exp() / p_click
    }

    /// Per-qubit excitation left by an unsuccessful trial: emission into
    /// undetected modes smeared uniformly over the ensemble.
    pub fn leftover_per_qubit(&self) -> f64 {
        (self.mean_emissions() * (1.0 - self.detection_fraction) / self.n() as f64).min(1.0)
    }

    fn init_survival(&self) -> f64 {
        (-self.params.t_init / self.params.geometry.lifetime()).exp()
    }

    pub fn rng_for_run(&self, run_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        rng.set_stream(run_index);
        rng
    }

    pub fn run_trial<R: Rng + ?Sized>(
        &self,
        ctx: &RunContext,
        rng: &mut R,
        residual_excitation: f64,
    ) -> Result<TrialRecord> {
        if !(0.0..=1.0).contains(&residual_excitation) {
            return Err(Error::validation("residual_excitation", "must lie in [0, 1]"));
        }
        let p = &self.params;
        let mu = self.mean_emissions();
        let emissions = if mu > 0.0 {
            let poisson = Poisson::new(mu).map_err(|e| Error::Sampling(e.to_string()))?;
            poisson.sample(rng) as u32
        } else {
            0
        };

        let mut detected_direction = None;
        for _ in 0..emissions {
            let k = sample_emission_direction(&p.geometry, p.k_l, rng)?;
            let in_cone = k.angle_to(p.k_l) < p.alpha_det;
            let in_bin = rng.random::<f64>() < p.interference_factor;
            if in_cone && in_bin && detected_direction.is_none() {
                detected_direction = Some(k);
            }
        }

        let detected = detected_direction.is_some();
        let double_emission = detected && emissions >= 2;
        let (mismatch, broadening) = match detected_direction {
            Some(k) => (
                radiation::mismatch_fidelity(&p.geometry, p.k_l, k),
                ctx.broadening_factor(p.t_det),
            ),
            None => (1.0, 1.0),
        };
        let heralded = if detected && !double_emission {
            mismatch * broadening
        } else {
            0.0
        };
        let residual = ((residual_excitation + self.leftover_per_qubit()) * self.init_survival()).min(1.0);

        Ok(TrialRecord {
            emissions,
            detected,
            detected_direction,
            double_emission,
            mismatch_fidelity: mismatch,
            broadening_factor: broadening,
            heralded_fidelity: heralded,
            residual_excitation: residual,
        })
    }

    fn trial_duration(&self) -> f64 {
        self.params.t_init + 2.0 * self.params.t_det
    }

    /// Repeats trials until a click or `max_trials`.
    pub fn run_until_success<R: Rng + ?Sized>(&self, rng: &mut R, run_index: u64) -> Result<PreparationResult> {
        let p = &self.params;
        let n = self.n();
        let ctx = RunContext::draw(n, p.broadening_fwhm, rng);
        let mut residual = 0.0;
        for trial in 1..=p.max_trials {
            let rec = self.run_trial(&ctx, rng, residual)?;
            residual = rec.residual_excitation;
            if !rec.detected {
                continue;
            }
            // trials · N · leftover · e^{−T_init/τ}
            let kappa =
                (trial as f64 * n as f64 * self.leftover_per_qubit() * self.init_survival()).min(1.0);
            let fidelity = (rec.heralded_fidelity * (1.0 - kappa)).clamp(0.0, 1.0);
            let budget = ErrorBudget {
                double_emission: if rec.double_emission { 1.0 } else { 0.0 },
                mismatch: 1.0 - rec.mismatch_fidelity,
                initialization: kappa,
                broadening: 1.0 - rec.broadening_factor,
            };
            return Ok(PreparationResult {
                run_index,
                trials: trial,
                success: true,
                fidelity,
                witness: (n >= 2).then(|| statevec::witness_value(n, fidelity)).transpose()?,
                budget,
                preparation_time: trial as f64 * self.trial_duration(),
                detected_angle: rec.detected_direction.map(|k| k.angle_to(p.k_l)),
            });
        }
        Ok(PreparationResult {
            run_index,
            trials: p.max_trials,
            success: false,
            fidelity: 0.0,
            witness: None,
            budget: ErrorBudget::default(),
            preparation_time: p.max_trials as f64 * self.trial_duration(),
            detected_angle: None,
        })
    }

    /// `runs` independent preparations, run i seeded from (seed, i).
    pub fn run_batch(&self, runs: u64, exec: Execution) -> Result<Vec<PreparationResult>> {
        exec.map_indexed(runs as usize, |i| {
            let mut rng = self.rng_for_run(i as u64);
            self.run_until_success(&mut rng, i as u64)
        })
        .into_iter()
        .collect()
    }

    /// Plain trials (no repetition logic) from one stream; returns the click count.
    pub fn count_detections(&self, trials: u64, stream: u64) -> Result<u64> {
        let mut rng = self.rng_for_run(stream);
        let ctx = RunContext::draw(self.n(), self.params.broadening_fwhm, &mut rng);
        let mut hits = 0;
        for _ in 0..trials {
            if self.run_trial(&ctx, &mut rng, 0.0)?.detected {
                hits += 1;
            }
        }
        Ok(hits)
    }

    /// Exact fidelity of a single-photon click replayed through the state
    /// vector: composite heralding with the detected wavevector, then the
    /// detuning phases, compared against the ideal W state along k_L.
    pub fn oracle_replay(&self, trial: &TrialRecord, ctx: &RunContext) -> Result<f64> {
        let p = &self.params;
        let n = self.n();
        if n > REPLAY_MAX_QUBITS {
            return Err(Error::TooManyQubits {
                requested: n,
                max: REPLAY_MAX_QUBITS,
            });
        }
        let k_det = match (trial.detected_direction, trial.double_emission) {
            (Some(k), false) => k,
            _ => {
                return Err(Error::validation(
                    "trial",
                    "only single-photon clicks can be replayed",
                ))
            }
        };
        let heralded = statevec::apply_m_ent_composite(&PureState::ground(n)?, p.phi_l, &p.geometry, p.k_l, k_det)?
            .normalized();
        let phases: Vec<f64> = ctx.detunings.iter().map(|d| -d * p.t_det).collect();
        let actual = heralded.with_excited_phases(&phases)?;
        let ideal = statevec::w_state(&p.geometry, p.k_l)?;
        statevec::fidelity(&ideal, &actual)
    }
}

/// Aggregate over a batch of preparations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: u64,
    pub successes: u64,
    pub success_fraction: f64,
    pub median_trials: Option<f64>,
    pub mean_trials: Option<f64>,
    pub mean_fidelity: Option<f64>,
    pub mean_infidelity: Option<f64>,
    pub witness_negative_fraction: Option<f64>,
    pub mean_budget: ErrorBudget,
    pub median_preparation_time: Option<f64>,
    pub analytic_detection_probability: f64,
    pub analytic_median_trials: Option<f64>,
    pub emission_rate: f64,
    pub detection_fraction: f64,
    pub mean_emissions_per_trial: f64,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

pub fn summarize(sim: &Simulator, results: &[PreparationResult]) -> BatchSummary {
    let ok: Vec<&PreparationResult> = results.iter().filter(|r| r.success).collect();
    let count = ok.len() as f64;
    let mean = |f: &dyn Fn(&PreparationResult) -> f64| (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / count);
    let mut budget = ErrorBudget::default();
    if !ok.is_empty() {
        for r in &ok {
            budget.double_emission += r.budget.double_emission / count;
            budget.mismatch += r.budget.mismatch / count;
            budget.initialization += r.budget.initialization / count;
            budget.broadening += r.budget.broadening / count;
        }
    }
    let p = sim.analytic_detection_probability();
    BatchSummary {
        runs: results.len() as u64,
        successes: ok.len() as u64,
        success_fraction: if results.is_empty() {
            0.0
        } else {
            count / results.len() as f64
        },
        median_trials: median(ok.iter().map(|r| r.trials as f64).collect()),
        mean_trials: mean(&|r| r.trials as f64),
        mean_fidelity: mean(&|r| r.fidelity),
        mean_infidelity: mean(&|r| 1.0 - r.fidelity),
        witness_negative_fraction: mean(&|r| if r.witness.is_some_and(|w| w < 0.0) { 1.0 } else { 0.0 }),
        mean_budget: budget,
        median_preparation_time: median(ok.iter().map(|r| r.preparation_time).collect()),
        analytic_detection_probability: p,
        analytic_median_trials: (p > 0.0).then(|| LN_2 / -(-p).ln_1p()),
        emission_rate: sim.emission_rate,
        detection_fraction: sim.detection_fraction,
        mean_emissions_per_trial: sim.mean_emissions(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{make_linear_chain, DipolePattern, Transition};
    use crate::vector::Vec3;

    fn chain(n: usize, pattern: DipolePattern) -> EnsembleGeometry {
        let t = Transition::new(852e-9, 30e-9, pattern).unwrap();
        make_linear_chain(n, 532e-9, Vec3::new(0.0, 0.0, 1.0), t).unwrap()
    }

    fn params(geometry: EnsembleGeometry) -> ProtocolParams {
        ProtocolParams {
            geometry,
            k_l: Direction::PLUS_Z,
            alpha_det: 0.21,
            t_det: 50e-12,
            t_init: 300e-9,
            phi_l: 0.0,
            broadening_fwhm: 0.0,
            max_trials: 100_000,
            seed: 1,
            interference_factor: 1.0,
            window_budget: WindowBudget::Single,
        }
    }

    #[test]
    fn zero_rate_never_emits() {
        let sim = Simulator::with_rates(params(chain(10, DipolePattern::SigmaPlus)), 0.0, 0.07).unwrap();
        let mut rng = sim.rng_for_run(0);
        let ctx = RunContext::draw(10, 0.0, &mut rng);
        for _ in 0..100 {
            let rec = sim.run_trial(&ctx, &mut rng, 0.0).unwrap();
            assert_eq!(rec.emissions, 0);
            assert!(!rec.detected);
        }
    }

    #[test]
    fn zero_rate_fails_after_cap() {
        let mut p = params(chain(4, DipolePattern::SigmaPlus));
        p.max_trials = 50;
        let sim = Simulator::with_rates(p, 0.0, 0.1).unwrap();
        let r = sim.run_until_success(&mut sim.rng_for_run(0), 0).unwrap();
        assert!(!r.success);
        assert_eq!(r.trials, 50);
        assert!(r.witness.is_none());
    }

    #[test]
    fn detection_implies_emission() {
        let sim = Simulator::with_rates(params(chain(6, DipolePattern::SigmaPlus)), 50.0, 0.3).unwrap();
        let mut rng = sim.rng_for_run(3);
        let ctx = RunContext::draw(6, 0.0, &mut rng);
        for _ in 0..2000 {
            let rec = sim.run_trial(&ctx, &mut rng, 0.0).unwrap();
            if rec.detected {
                assert!(rec.emissions >= 1);
                assert!(rec.heralded_fidelity <= 1.0);
            }
            if rec.double_emission {
                assert_eq!(rec.heralded_fidelity, 0.0);
            }
        }
    }

    #[test]
    fn broadening_factor_limits() {
        let ctx = RunContext {
            detunings: vec![0.0; 5],
        };
        assert_eq!(ctx.broadening_factor(1e-12), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ctx = RunContext::draw(20, 20e9, &mut rng);
        let tiny = ctx.broadening_factor(1e-18);
        assert!((tiny - 1.0).abs() < 1e-10);
        assert!(ctx.broadening_factor(1e-11) < 1.0);
    }

    #[test]
    fn seeded_runs_reproducible() {
        let sim = Simulator::with_rates(params(chain(5, DipolePattern::SigmaPlus)), 1.2, 0.1).unwrap();
        let a = sim.run_batch(20, Execution::Sequential).unwrap();
        let b = sim.run_batch(20, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejection_sampler_respects_cap_geometry() {
        let g = chain(3, DipolePattern::Pi);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d = sample_emission_direction(&g, Direction::PLUS_Z, &mut rng).unwrap();
            assert!(d.is_unit());
        }
    }

    #[test]
    fn replay_rejects_large_or_unclicked() {
        let sim = Simulator::with_rates(params(chain(12, DipolePattern::SigmaPlus)), 1.2, 0.1).unwrap();
        let rec = TrialRecord {
            emissions: 1,
            detected: true,
            detected_direction: Some(Direction::PLUS_Z),
            double_emission: false,
            mismatch_fidelity: 1.0,
            broadening_factor: 1.0,
            heralded_fidelity: 1.0,
            residual_excitation: 0.0,
        };
        let ctx = RunContext {
            detunings: vec![0.0; 12],
        };
        assert!(matches!(sim.oracle_replay(&rec, &ctx), Err(Error::TooManyQubits { .. })));

        let small = Simulator::with_rates(params(chain(3, DipolePattern::SigmaPlus)), 1.2, 0.1).unwrap();
        let ctx3 = RunContext {
            detunings: vec![0.0; 3],
        };
        let miss = TrialRecord {
            detected: false,
            detected_direction: None,
            ..rec.clone()
        };
        assert!(small.oracle_replay(&miss, &ctx3).is_err());
        assert!((small.oracle_replay(&rec, &ctx3).unwrap() - 1.0).abs() < 1e-12);
    }
}
