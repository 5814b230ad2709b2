//! Emitter ensembles: positions plus the radiative parameters of the
//! transition they share.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{Direction, Vec3};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Ensemble extent must stay below this fraction of cτ.
const RETARDATION_FRACTION: f64 = 1e-3;

/// Single-emitter angular emission pattern, θ measured from the excitation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipolePattern {
    /// ∝ 1
    Isotropic,
    /// ∝ 1 + cos²θ (circularly polarized excitation)
    SigmaPlus,
    /// ∝ cos²θ (π-polarized excitation)
    Pi,
}

impl DipolePattern {
    /// Pattern density per steradian, normalized to unit integral over the sphere.
    pub fn density(self, cos_theta: f64) -> f64 {
        let c2 = cos_theta * cos_theta;
        match self {
            DipolePattern::Isotropic => 1.0 / (4.0 * PI),
            DipolePattern::SigmaPlus => 3.0 * (1.0 + c2) / (16.0 * PI),
            DipolePattern::Pi => 3.0 * c2 / (4.0 * PI),
        }
    }

    pub fn max_density(self) -> f64 {
        self.density(1.0)
    }

    /// Draws cos θ with density ∝ pattern on [-1, 1].
    pub fn sample_cos_theta<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            DipolePattern::Isotropic => rng.random_range(-1.0..=1.0),
            DipolePattern::SigmaPlus => loop {
                let c: f64 = rng.random_range(-1.0..=1.0);
                if rng.random::<f64>() * 2.0 <= 1.0 + c * c {
                    break c;
                }
            },
            // CDF (c³ + 1)/2 inverts in closed form.
            DipolePattern::Pi => (2.0 * rng.random::<f64>() - 1.0).cbrt(),
        }
    }

    pub fn all() -> [DipolePattern; 3] {
        [
            DipolePattern::Isotropic,
            DipolePattern::SigmaPlus,
            DipolePattern::Pi,
        ]
    }

    fn as_str(self) -> &'static str {
        match self {
            DipolePattern::Isotropic => "isotropic",
            DipolePattern::SigmaPlus => "sigma_plus",
            DipolePattern::Pi => "pi",
        }
    }
}

impl fmt::Display for DipolePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DipolePattern {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "isotropic" => Ok(DipolePattern::Isotropic),
            "sigma_plus" | "sigma+" | "sigmaplus" => Ok(DipolePattern::SigmaPlus),
            "pi" => Ok(DipolePattern::Pi),
            other => Err(format!("unknown dipole pattern `{other}`")),
        }
    }
}

/// Radiative parameters shared by every emitter in an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// metres
    pub wavelength: f64,
    /// seconds
    pub lifetime: f64,
    pub pattern: DipolePattern,
}

impl Transition {
    pub fn new(wavelength: f64, lifetime: f64, pattern: DipolePattern) -> Result<Self> {
        let t = Transition {
            wavelength,
            lifetime,
            pattern,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::validation(
                "wavelength",
                format!("must be positive, got {}", self.wavelength),
            ));
        }
        if !(self.lifetime.is_finite() && self.lifetime > 0.0) {
            return Err(Error::validation(
                "lifetime_tau",
                format!("must be positive, got {}", self.lifetime),
            ));
        }
        Ok(())
    }
}

/// Fixed emitter positions with their shared transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleGeometry {
    positions: Vec<Vec3>,
    transition: Transition,
    label: String,
}

impl EnsembleGeometry {
    pub fn new(positions: Vec<Vec3>, transition: Transition, label: impl Into<String>) -> Result<Self> {
        let g = EnsembleGeometry {
            positions,
            transition,
            label: label.into(),
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        self.transition.validate()?;
        if self.positions.is_empty() {
            return Err(Error::validation("positions", "at least one emitter required"));
        }
        if let Some(i) = self.positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::validation(
                "positions",
                format!("non-finite coordinate at emitter {i}"),
            ));
        }
        let extent = self.extent();
        let limit = RETARDATION_FRACTION * SPEED_OF_LIGHT * self.transition.lifetime;
        if extent > limit {
            return Err(Error::validation(
                "positions",
                format!("extent {extent:e} m exceeds 1e-3 c tau = {limit:e} m"),
            ));
        }
        Ok(())
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn transition(&self) -> Transition {
        self.transition
    }

    pub fn wavelength(&self) -> f64 {
        self.transition.wavelength
    }

    pub fn lifetime(&self) -> f64 {
        self.transition.lifetime
    }

    pub fn pattern(&self) -> DipolePattern {
        self.transition.pattern
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Bounding-box diagonal.
    pub fn extent(&self) -> f64 {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for p in &self.positions {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        (hi - lo).norm()
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self.positions.iter().fold(Vec3::ZERO, |acc, &p| acc + p);
        sum * (1.0 / self.len() as f64)
    }

    /// Rigid shift of every emitter.
    pub fn translated(&self, offset: Vec3) -> Result<Self> {
        EnsembleGeometry::new(
            self.positions.iter().map(|&p| p + offset).collect(),
            self.transition,
            self.label.clone(),
        )
    }

    /// True when every emitter lies on one line parallel to `axis`.
    pub fn is_collinear_along(&self, axis: Direction) -> bool {
        let origin = self.positions[0];
        let scale = self.extent().max(f64::MIN_POSITIVE);
        self.positions
            .iter()
            .all(|&p| (p - origin).cross(axis.vector()).norm() <= 1e-12 * scale)
    }

    /// Serializes to the line-oriented geometry format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# dicke-forge geometry");
        if !self.label.is_empty() {
            let _ = writeln!(out, "label={}", self.label);
        }
        let _ = writeln!(out, "wavelength_m={:e}", self.transition.wavelength);
        let _ = writeln!(out, "tau_s={:e}", self.transition.lifetime);
        let _ = writeln!(out, "pattern={}", self.transition.pattern);
        for p in &self.positions {
            let _ = writeln!(out, "{:e} {:e} {:e}", p.x, p.y, p.z);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a geometry file.
pub fn load_geometry(path: impl AsRef<Path>) -> Result<EnsembleGeometry> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_geometry(&text, path)
}

/// Parses the geometry text format; `origin` is only used in error messages.
pub fn parse_geometry(text: &str, origin: &Path) -> Result<EnsembleGeometry> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut wavelength = None;
    let mut lifetime = None;
    let mut pattern = None;
    let mut label = String::new();
    let mut positions = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            if !positions.is_empty() {
                return Err(parse_err(lineno, "header line after coordinates".into()));
            }
            let value = value.trim();
            let number = || {
                value
                    .parse::<f64>()
                    .map_err(|e| parse_err(lineno, format!("bad number `{value}`: {e}")))
            };
            match key.trim() {
                "wavelength_m" => wavelength = Some(number()?),
                "tau_s" => lifetime = Some(number()?),
                "pattern" => pattern = Some(value.parse().map_err(|e| parse_err(lineno, e))?),
                "label" => label = value.to_string(),
                other => return Err(parse_err(lineno, format!("unknown header `{other}`"))),
            }
            continue;
        }
        let coords: Vec<&str> = line.split_whitespace().collect();
        if coords.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected `x y z`, found {} fields", coords.len()),
            ));
        }
        let mut xyz = [0.0; 3];
        for (slot, tok) in xyz.iter_mut().zip(&coords) {
            *slot = tok
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad coordinate `{tok}`: {e}")))?;
        }
        positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
    }

    let missing = |name: &str| parse_err(0, format!("missing header `{name}`"));
    let transition = Transition {
        wavelength: wavelength.ok_or_else(|| missing("wavelength_m"))?,
        lifetime: lifetime.ok_or_else(|| missing("tau_s"))?,
        pattern: pattern.ok_or_else(|| missing("pattern"))?,
    };
    EnsembleGeometry::new(positions, transition, label)
}

/// Equally spaced chain starting at the origin: x_j = j · spacing · axis.
pub fn make_linear_chain(
    n: usize,
    spacing: f64,
    axis: Vec3,
    transition: Transition,
) -> Result<EnsembleGeometry> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::validation(
            "spacing",
            format!("must be positive, got {spacing}"),
        ));
    }
    let axis = Direction::new(axis)?.vector();
    let positions = (0..n).map(|j| axis * (j as f64 * spacing)).collect();
    EnsembleGeometry::new(positions, transition, format!("chain n={n} d={spacing:e}"))
}

/// Right circular cylinder holding `n` emitters at a fixed number density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderShape {
    pub radius: f64,
    pub length: f64,
}

impl CylinderShape {
    /// Volume n/density with length = aspect_ratio · diameter.
    pub fn from_density(n: usize, number_density: f64, aspect_ratio: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("n", "must be at least 1"));
        }
        if !(number_density.is_finite() && number_density > 0.0) {
            return Err(Error::validation("number_density", "must be positive"));
        }
        if !(aspect_ratio.is_finite() && aspect_ratio > 0.0) {
            return Err(Error::validation("aspect_ratio", "must be positive"));
        }
        let volume = n as f64 / number_density;
        // π R² · (2 a R) = V
        let radius = (volume / (2.0 * aspect_ratio * PI)).cbrt();
        Ok(CylinderShape {
            radius,
            length: 2.0 * aspect_ratio * radius,
        })
    }

    pub fn volume(&self) -> f64 {
        PI * self.radius * self.radius * self.length
    }
}

/// Parameters for a uniformly filled cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderSpec {
    pub n: usize,
    /// emitters per m³
    pub number_density: f64,
    /// length / diameter
    pub aspect_ratio: f64,
    pub axis: Direction,
    pub transition: Transition,
}

impl CylinderSpec {
    pub fn shape(&self) -> Result<CylinderShape> {
        CylinderShape::from_density(self.n, self.number_density, self.aspect_ratio)
    }
}

/// Samples `n` i.i.d. uniform positions in a cylinder centred on the origin
/// with its axis along +z.
pub fn make_cylinder(
    n: usize,
    number_density: f64,
    aspect_ratio: f64,
    seed: u64,
    transition: Transition,
) -> Result<EnsembleGeometry> {
    make_cylinder_from(
        &CylinderSpec {
            n,
            number_density,
            aspect_ratio,
            axis: Direction::PLUS_Z,
            transition,
        },
        seed,
    )
}

pub fn make_cylinder_from(spec: &CylinderSpec, seed: u64) -> Result<EnsembleGeometry> {
    let shape = spec.shape()?;
    let axis = spec.axis;
    let (u, v) = axis.orthonormal_frame();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..spec.n)
        .map(|_| {
            let r = shape.radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let z = shape.length * (rng.random::<f64>() - 0.5);
            axis.vector() * z + u * (r * phi.cos()) + v * (r * phi.sin())
        })
        .collect();
    EnsembleGeometry::new(
        positions,
        spec.transition,
        format!("cylinder n={} seed={seed}", spec.n),
    )
}
