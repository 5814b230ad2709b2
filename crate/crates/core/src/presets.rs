//! Material presets: a Cs chain in an optical lattice and an NV-centre cylinder.

use serde::{Deserialize, Serialize};

use crate::design::{CylinderModel, DesignInputs, EmitterSource};
use crate::ensemble::{make_linear_chain, CylinderSpec, DipolePattern, EnsembleGeometry, Transition};
use crate::error::{Error, Result};
use crate::vector::{Direction, Vec3};

pub const CS_WAVELENGTH: f64 = 852e-9;
pub const CS_SPACING: f64 = 532e-9;
pub const CS_LIFETIME: f64 = 30e-9;

pub const NV_WAVELENGTH: f64 = 637e-9;
pub const NV_LIFETIME: f64 = 13e-9;
/// 2×10¹⁴ cm⁻³
pub const NV_DENSITY: f64 = 2e20;
pub const NV_ASPECT_RATIO: f64 = 10.0;
pub const NV_FWHM: f64 = 20e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Cs,
    Nv,
    Custom,
}

pub fn cs_transition() -> Transition {
    Transition::new(CS_WAVELENGTH, CS_LIFETIME, DipolePattern::SigmaPlus).expect("valid Cs constants")
}

pub fn nv_transition() -> Transition {
    Transition::new(NV_WAVELENGTH, NV_LIFETIME, DipolePattern::Pi).expect("valid NV constants")
}

/// Chain along +z, the excitation direction.
pub fn cs_chain(n: usize) -> Result<EnsembleGeometry> {
    make_linear_chain(n, CS_SPACING, Vec3::new(0.0, 0.0, 1.0), cs_transition())
}

/// Cylinder with its axis along +z, the excitation direction.
pub fn nv_cylinder(n: usize) -> Result<CylinderSpec> {
    if n == 0 {
        return Err(Error::validation("n", "must be at least 1"));
    }
    Ok(CylinderSpec {
        n,
        number_density: NV_DENSITY,
        aspect_ratio: NV_ASPECT_RATIO,
        axis: Direction::PLUS_Z,
        transition: nv_transition(),
    })
}

/// Design inputs with the preset defaults; `geometry` is required for `Custom`.
pub fn design_inputs(
    preset: Preset,
    n: usize,
    seed: u64,
    cylinder_model: CylinderModel,
    geometry: Option<EnsembleGeometry>,
) -> Result<DesignInputs> {
    let k_l = Direction::PLUS_Z;
    Ok(match preset {
        Preset::Cs => DesignInputs::new(EmitterSource::Geometry { geometry: cs_chain(n)? }, k_l),
        Preset::Nv => {
            let mut inputs = DesignInputs::new(
                EmitterSource::Cylinder {
                    spec: nv_cylinder(n)?,
                    model: cylinder_model,
                    seed,
                },
                k_l,
            );
            inputs.broadening_fwhm = NV_FWHM;
            inputs
        }
        Preset::Custom => {
            let geometry = geometry.ok_or_else(|| Error::validation("geometry", "custom preset needs a geometry file"))?;
            DesignInputs::new(EmitterSource::Geometry { geometry }, k_l)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_material_constants() {
        let cs = design_inputs(Preset::Cs, 10, 0, CylinderModel::Average, None).unwrap();
        assert_eq!(cs.n(), 10);
        assert_eq!(cs.broadening_fwhm, 0.0);
        assert_eq!(cs.source.lifetime(), 30e-9);
        let nv = design_inputs(Preset::Nv, 30, 0, CylinderModel::Average, None).unwrap();
        assert_eq!(nv.broadening_fwhm, 20e9);
        assert_eq!(nv.source.lifetime(), 13e-9);
        assert!(design_inputs(Preset::Custom, 3, 0, CylinderModel::Average, None).is_err());
    }
}
