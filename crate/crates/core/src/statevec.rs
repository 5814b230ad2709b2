//! Brute-force state-vector engine for small ensembles.
//!
//! Basis ordering: bit j of the index is the excitation of qubit j
//! (0 = ground). σ_z|e⟩ = +|e⟩, σ_z|g⟩ = −|g⟩. The collective operators are
//! `J_z = Σ σ_z`, `J₊^k = Σ σ₊ e^{i k·x_j}` and `J₋^k = (J₊^k)†`.
//!
//! A pulse of area A and phase φ along k_L acts as
//! `U_A(φ) = exp[i (A/2)(e^{−iφ} J₊^{k_L} + e^{iφ} J₋^{k_L})]`. Each qubit's
//! generator commutes with the others', so U factorizes into 2×2 rotations.
//! For A = π/2 the heralding operators expand as
//!
//! ```text
//! M_det(φ) = U(φ+π) J₋ U(φ) = ½e^{−2iφ} J₊ + ½ J₋ − (i/2) e^{−iφ} J_z
//! M_ent    = ½ (M_det(φ) + M_det(φ+π)) = ½e^{−2iφ} J₊ + ½ J₋
//! ```

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::EnsembleGeometry;
use crate::error::{Error, Result};
use crate::vector::{wavenumber, Direction};

pub const MAX_QUBITS: usize = 14;

const NORM_SLACK: f64 = 1e-12;
const NORMALIZED_TOLERANCE: f64 = 1e-9;
const SECTOR_LEAKAGE_LIMIT: f64 = 1e-9;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Types exposing a flat amplitude vector.
pub trait Amplitudes {
    fn amplitudes(&self) -> &[Complex64];

    fn norm_sqr(&self) -> f64 {
        self.amplitudes().iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨self|other⟩
    fn inner(&self, other: &Self) -> Result<Complex64> {
        let (a, b) = (self.amplitudes(), other.amplitudes());
        if a.len() != b.len() {
            return Err(Error::Dimension {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(a.iter().zip(b).map(|(x, y)| x.conj() * y).sum())
    }
}

/// Full 2^N amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl Amplitudes for PureState {
    fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits {
            requested: n,
            max: MAX_QUBITS,
        });
    }
    if n == 0 {
        return Err(Error::validation("qubits", "need at least one qubit"));
    }
    Ok(())
}

impl PureState {
    pub fn from_amplitudes(qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_qubits(qubits)?;
        if amps.len() != 1 << qubits {
            return Err(Error::Dimension {
                expected: 1 << qubits,
                got: amps.len(),
            });
        }
        if amps.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::validation("amplitudes", "non-finite entry"));
        }
        Ok(PureState { qubits, amps })
    }

    pub fn basis(qubits: usize, index: usize) -> Result<Self> {
        check_qubits(qubits)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        let len = amps.len();
        *amps.get_mut(index).ok_or(Error::Dimension {
            expected: len,
            got: index,
        })? = Complex64::new(1.0, 0.0);
        Ok(PureState { qubits, amps })
    }

    /// |gg…g⟩
    pub fn ground(qubits: usize) -> Result<Self> {
        Self::basis(qubits, 0)
    }

    /// |ee…e⟩
    pub fn all_excited(qubits: usize) -> Result<Self> {
        check_qubits(qubits)?;
        Self::basis(qubits, (1 << qubits) - 1)
    }

    /// Haar-like random normalized state.
    pub fn random<R: Rng + ?Sized>(qubits: usize, rng: &mut R) -> Result<Self> {
        check_qubits(qubits)?;
        let amps = (0..1usize << qubits)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Ok(PureState { qubits, amps }.normalized())
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescales to unit norm; the zero vector is returned unchanged.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for a in &mut self.amps {
                *a /= n;
            }
        }
        self
    }

    pub fn scaled(mut self, c: Complex64) -> Self {
        for a in &mut self.amps {
            *a *= c;
        }
        self
    }

    /// self + other
    pub fn plus(&self, other: &PureState) -> Result<PureState> {
        self.same_dims(other)?;
        let amps = self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect();
        Ok(PureState {
            qubits: self.qubits,
            amps,
        })
    }

    fn same_dims(&self, other: &PureState) -> Result<()> {
        if self.qubits != other.qubits {
            return Err(Error::Dimension {
                expected: self.qubits,
                got: other.qubits,
            });
        }
        Ok(())
    }

    /// Largest elementwise |self − other|.
    pub fn max_abs_diff(&self, other: &PureState) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Multiplies the excited component of qubit j by e^{i phases[j]}.
    pub fn with_excited_phases(mut self, phases: &[f64]) -> Result<Self> {
        if phases.len() != self.qubits {
            return Err(Error::Dimension {
                expected: self.qubits,
                got: phases.len(),
            });
        }
        let factors: Vec<Complex64> = phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        for (idx, a) in self.amps.iter_mut().enumerate() {
            for (j, f) in factors.iter().enumerate() {
                if idx & (1 << j) != 0 {
                    *a *= f;
                }
            }
        }
        Ok(self)
    }

    /// Writes `index,re,im` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,re,im\n");
        for (i, a) in self.amps.iter().enumerate() {
            out.push_str(&format!("{i},{:e},{:e}\n", a.re, a.im));
        }
        out
    }
}

/// Single-excitation amplitudes c_j of Σ_j c_j |0…1_j…0⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationAmplitudes {
    amps: Vec<Complex64>,
}

impl Amplitudes for ExcitationAmplitudes {
    fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }
}

impl ExcitationAmplitudes {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::validation("amplitudes", "empty"));
        }
        if amps.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(Error::validation("amplitudes", "non-finite entry"));
        }
        let e = ExcitationAmplitudes { amps };
        if e.norm_sqr() > 1.0 + NORM_SLACK {
            return Err(Error::validation("amplitudes", "norm exceeds 1"));
        }
        Ok(e)
    }

    /// Normalized amplitudes e^{i k·x_j}/√N.
    pub fn phased_w(geom: &EnsembleGeometry, k: Direction) -> Self {
        let n = geom.len() as f64;
        let amps = position_phases(geom, k)
            .into_iter()
            .map(|p| Complex64::from_polar(1.0 / n.sqrt(), p))
            .collect();
        ExcitationAmplitudes { amps }
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn with_phases(mut self, phases: &[f64]) -> Result<Self> {
        if phases.len() != self.amps.len() {
            return Err(Error::Dimension {
                expected: self.amps.len(),
                got: phases.len(),
            });
        }
        for (a, &p) in self.amps.iter_mut().zip(phases) {
            *a *= Complex64::from_polar(1.0, p);
        }
        Ok(self)
    }

    /// Embeds back into the full 2^N space.
    pub fn to_pure_state(&self) -> Result<PureState> {
        let n = self.amps.len();
        check_qubits(n)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        for (j, &c) in self.amps.iter().enumerate() {
            amps[1 << j] = c;
        }
        PureState::from_amplitudes(n, amps)
    }
}

/// |⟨a|b⟩|² for two normalized states.
pub fn fidelity<T: Amplitudes>(a: &T, b: &T) -> Result<f64> {
    for s in [a, b] {
        if (s.norm_sqr() - 1.0).abs() > NORMALIZED_TOLERANCE {
            return Err(Error::validation(
                "state",
                format!("not normalized (norm² = {})", s.norm_sqr()),
            ));
        }
    }
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

/// Witness expectation 1 − 1/n − F; negative certifies entanglement.
pub fn witness_value(n: usize, fidelity: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::validation("n", "witness needs at least 2 qubits"));
    }
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::validation("fidelity", "must lie in [0, 1]"));
    }
    Ok(1.0 - 1.0 / n as f64 - fidelity)
}

/// Phases k·x_j with |k| = 2π/λ.
pub fn position_phases(geom: &EnsembleGeometry, k: Direction) -> Vec<f64> {
    let kv = k.vector() * wavenumber(geom.wavelength());
    geom.positions().iter().map(|&x| kv.dot(x)).collect()
}

/// Collective operator selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Collective {
    Jz,
    JPlus(Direction),
    JMinus(Direction),
}

fn check_geometry(state: &PureState, geom: &EnsembleGeometry) -> Result<()> {
    if geom.len() != state.qubits {
        return Err(Error::Dimension {
            expected: state.qubits,
            got: geom.len(),
        });
    }
    Ok(())
}

pub fn apply_collective(state: &PureState, which: Collective, geom: &EnsembleGeometry) -> Result<PureState> {
    check_geometry(state, geom)?;
    let n = state.qubits;
    let mut out = vec![Complex64::new(0.0, 0.0); state.amps.len()];
    match which {
        Collective::Jz => {
            for (idx, (o, a)) in out.iter_mut().zip(&state.amps).enumerate() {
                let excited = idx.count_ones() as f64;
                *o = a * (2.0 * excited - n as f64);
            }
        }
        Collective::JPlus(k) => {
            let phases = position_phases(geom, k);
            for (j, &p) in phases.iter().enumerate() {
                let f = Complex64::from_polar(1.0, p);
                let bit = 1 << j;
                for (idx, a) in state.amps.iter().enumerate() {
                    if idx & bit == 0 {
                        out[idx | bit] += f * a;
                    }
                }
            }
        }
        Collective::JMinus(k) => {
            let phases = position_phases(geom, k);
            for (j, &p) in phases.iter().enumerate() {
                let f = Complex64::from_polar(1.0, -p);
                let bit = 1 << j;
                for (idx, a) in state.amps.iter().enumerate() {
                    if idx & bit != 0 {
                        out[idx & !bit] += f * a;
                    }
                }
            }
        }
    }
    Ok(PureState { qubits: n, amps: out })
}

/// Pulse of area `area` and phase `phi_l` along `k_l`, as a product of
/// per-qubit rotations.
pub fn apply_pulse(
    state: &PureState,
    phi_l: f64,
    area: f64,
    geom: &EnsembleGeometry,
    k_l: Direction,
) -> Result<PureState> {
    check_geometry(state, geom)?;
    if !area.is_finite() || !phi_l.is_finite() {
        return Err(Error::validation("pulse", "area and phase must be finite"));
    }
    let (s, c) = (area / 2.0).sin_cos();
    let mut amps = state.amps.clone();
    for (j, theta) in position_phases(geom, k_l).into_iter().enumerate() {
        let beta = Complex64::from_polar(1.0, theta - phi_l);
        let up = I * s * beta; // ⟨e|U|g⟩
        let down = I * s * beta.conj(); // ⟨g|U|e⟩
        let bit = 1 << j;
        for idx in 0..amps.len() {
            if idx & bit == 0 {
                let (a0, a1) = (amps[idx], amps[idx | bit]);
                amps[idx] = c * a0 + down * a1;
                amps[idx | bit] = up * a0 + c * a1;
            }
        }
    }
    Ok(PureState {
        qubits: state.qubits,
        amps,
    })
}

/// π/2 pulse, photon emission along `k_det`, π/2 pulse with phase + π.
pub fn apply_m_det_along(
    state: &PureState,
    phi_l: f64,
    geom: &EnsembleGeometry,
    k_l: Direction,
    k_det: Direction,
) -> Result<PureState> {
    let s = apply_pulse(state, phi_l, FRAC_PI_2, geom, k_l)?;
    let s = apply_collective(&s, Collective::JMinus(k_det), geom)?;
    apply_pulse(&s, phi_l + PI, FRAC_PI_2, geom, k_l)
}

/// M_det(φ) in composite form: U(φ+π) J₋^{k_L} U(φ).
pub fn apply_m_det(state: &PureState, phi_l: f64, geom: &EnsembleGeometry, k_l: Direction) -> Result<PureState> {
    apply_m_det_along(state, phi_l, geom, k_l, k_l)
}

/// M_det(φ) from its operator expansion ½e^{−2iφ}J₊ + ½J₋ − (i/2)e^{−iφ}J_z.
pub fn apply_m_det_expansion(
    state: &PureState,
    phi_l: f64,
    geom: &EnsembleGeometry,
    k_l: Direction,
) -> Result<PureState> {
    let plus = apply_collective(state, Collective::JPlus(k_l), geom)?
        .scaled(Complex64::from_polar(0.5, -2.0 * phi_l));
    let minus = apply_collective(state, Collective::JMinus(k_l), geom)?.scaled(Complex64::new(0.5, 0.0));
    let z = apply_collective(state, Collective::Jz, geom)?.scaled(-0.5 * I * Complex64::from_polar(1.0, -phi_l));
    plus.plus(&minus)?.plus(&z)
}

/// M_ent = ½e^{−2iφ}J₊^{k_L} + ½J₋^{k_L} (unnormalized result).
pub fn apply_m_ent(state: &PureState, phi_l: f64, geom: &EnsembleGeometry, k_l: Direction) -> Result<PureState> {
    let plus = apply_collective(state, Collective::JPlus(k_l), geom)?
        .scaled(Complex64::from_polar(0.5, -2.0 * phi_l));
    let minus = apply_collective(state, Collective::JMinus(k_l), geom)?.scaled(Complex64::new(0.5, 0.0));
    plus.plus(&minus)
}

/// ½(M_det(φ) + M_det(φ+π)) built from composite pulses, with the detected
/// photon along `k_det`.
pub fn apply_m_ent_composite(
    state: &PureState,
    phi_l: f64,
    geom: &EnsembleGeometry,
    k_l: Direction,
    k_det: Direction,
) -> Result<PureState> {
    let a = apply_m_det_along(state, phi_l, geom, k_l, k_det)?;
    let b = apply_m_det_along(state, phi_l + PI, geom, k_l, k_det)?;
    Ok(a.plus(&b)?.scaled(Complex64::new(0.5, 0.0)))
}

/// Normalized W state with amplitude e^{i k·x_j}/√N on qubit j's excitation.
pub fn w_state(geom: &EnsembleGeometry, k: Direction) -> Result<PureState> {
    ExcitationAmplitudes::phased_w(geom, k).to_pure_state()
}

/// Projects a state living in the single-excitation sector onto its N amplitudes.
pub fn to_single_excitation(state: &PureState) -> Result<ExcitationAmplitudes> {
    let mut leakage = 0.0;
    let mut amps = vec![Complex64::new(0.0, 0.0); state.qubits];
    for (idx, a) in state.amps.iter().enumerate() {
        if idx.count_ones() == 1 {
            amps[idx.trailing_zeros() as usize] = *a;
        } else {
            leakage += a.norm_sqr();
        }
    }
    if leakage >= SECTOR_LEAKAGE_LIMIT {
        return Err(Error::validation(
            "state",
            format!("weight {leakage:e} outside the single-excitation sector"),
        ));
    }
    ExcitationAmplitudes::new(amps)
}
