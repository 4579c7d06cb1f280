//! Elastic materials and layered-plate homogenization.
//!
//! A resonator stack is a list of layers (bottom to top), exactly one of
//! which is the piezoelectric transduction film. For lateral Lamb modes the
//! stack is reduced to an effective single plate by thickness-weighted
//! averaging of density and plane-stress stiffness; the effective
//! permittivity is that of the transduction film, since only it loads the
//! electrode capacitance.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialsError {
    #[error("material {name:?}: density must be positive, got {value}")]
    BadDensity { name: String, value: f64 },
    #[error("material {name:?}: c11 must be positive, got {value}")]
    BadC11 { name: String, value: f64 },
    #[error(
        "material {name:?}: require c11 > |c12| for a stable crystal, got c11={c11}, c12={c12}"
    )]
    BadC12 { name: String, c11: f64, c12: f64 },
    #[error("material {name:?}: c44 must be positive, got {value}")]
    BadC44 { name: String, value: f64 },
    #[error("material {name:?}: relative permittivity must be >= 1, got {value}")]
    BadPermittivity { name: String, value: f64 },
    #[error("layer stack must contain at least one layer")]
    EmptyStack,
    #[error("layer {index} ({name:?}): thickness must be positive, got {value}")]
    BadThickness { index: usize, name: String, value: f64 },
    #[error("no layer is flagged as the piezoelectric transduction film")]
    NoPiezoLayer,
    #[error("layers {first} and {second} are both flagged piezoelectric; exactly one is allowed")]
    MultiplePiezoLayers { first: usize, second: usize },
    #[error("unknown material {0:?} in materials file")]
    UnknownMaterial(String),
    #[error("reading materials file: {0}")]
    Io(#[from] std::io::Error),
    #[error("decoding materials file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Linear-elastic, optionally piezoelectric material. Stiffnesses are the
/// cubic constants in Pa; `e11` is the lateral piezoelectric stress constant
/// in C/m^2 (zero for non-piezoelectric materials); `eps11_r` is the lateral
/// relative permittivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticMaterial {
    pub name: String,
    /// kg/m^3
    pub density: f64,
    /// Pa
    pub c11: f64,
    /// Pa
    pub c12: f64,
    /// Pa
    pub c44: f64,
    /// C/m^2
    pub e11: f64,
    /// dimensionless, >= 1
    pub eps11_r: f64,
}

impl ElasticMaterial {
    pub fn new(
        name: impl Into<String>,
        density: f64,
        c11: f64,
        c12: f64,
        c44: f64,
        e11: f64,
        eps11_r: f64,
    ) -> Result<Self, MaterialsError> {
        let m = Self { name: name.into(), density, c11, c12, c44, e11, eps11_r };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MaterialsError> {
        let name = self.name.clone();
        if !(self.density > 0.0) {
            return Err(MaterialsError::BadDensity { name, value: self.density });
        }
        if !(self.c11 > 0.0) {
            return Err(MaterialsError::BadC11 { name, value: self.c11 });
        }
        if !(self.c11 > self.c12.abs()) {
            return Err(MaterialsError::BadC12 { name, c11: self.c11, c12: self.c12 });
        }
        if !(self.c44 > 0.0) {
            return Err(MaterialsError::BadC44 { name, value: self.c44 });
        }
        if !(self.eps11_r >= 1.0) {
            return Err(MaterialsError::BadPermittivity { name, value: self.eps11_r });
        }
        Ok(())
    }

    /// Plane-stress lateral stiffness `c11 - c12^2 / c11`.
    ///
    /// The plate is free to relax vertically, so the effective modulus
    /// driving in-plane extension is the c11 row of the stiffness matrix
    /// with the transverse normal stress eliminated.
    pub fn plane_stress_stiffness(&self) -> f64 {
        self.c11 - self.c12 * self.c12 / self.c11
    }
}

/// One layer of a resonator stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub material: ElasticMaterial,
    /// m
    pub thickness: f64,
    /// Marks the piezoelectric transduction film. Exactly one per stack.
    #[serde(default)]
    pub piezo: bool,
}

/// Layer stack, bottom to top. Construction validates every layer and the
/// single-transduction-film rule, so a held `LayerStack` is always usable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    layers: Vec<Layer>,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Result<Self, MaterialsError> {
        if layers.is_empty() {
            return Err(MaterialsError::EmptyStack);
        }
        let mut piezo_at: Option<usize> = None;
        for (index, layer) in layers.iter().enumerate() {
            layer.material.validate()?;
            if !(layer.thickness > 0.0) {
                return Err(MaterialsError::BadThickness {
                    index,
                    name: layer.material.name.clone(),
                    value: layer.thickness,
                });
            }
            if layer.piezo {
                match piezo_at {
                    None => piezo_at = Some(index),
                    Some(first) => {
                        return Err(MaterialsError::MultiplePiezoLayers { first, second: index })
                    }
                }
            }
        }
        if piezo_at.is_none() {
            return Err(MaterialsError::NoPiezoLayer);
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn total_thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }

    fn piezo_layer(&self) -> &Layer {
        // Single flagged layer is guaranteed by the constructor.
        self.layers.iter().find(|l| l.piezo).expect("validated stack has a piezo layer")
    }

    /// Reduce the stack to an effective homogeneous plate.
    ///
    /// Density, plane-stress stiffness, and shear stiffness are
    /// thickness-weighted means (a uniform-strain approximation, adequate
    /// for sub-wavelength-thick stacks); the effective permittivity is the
    /// transduction film's.
    pub fn homogenize(&self) -> EffectivePlate {
        let total: f64 = self.total_thickness();
        let mut rho = 0.0;
        let mut c = 0.0;
        let mut c44 = 0.0;
        for layer in &self.layers {
            let w = layer.thickness / total;
            rho += w * layer.material.density;
            c += w * layer.material.plane_stress_stiffness();
            c44 += w * layer.material.c44;
        }
        EffectivePlate {
            total_thickness: total,
            rho_eff: rho,
            c_eff: c,
            c44_eff: c44,
            eps_eff_r: self.piezo_layer().material.eps11_r,
        }
    }
}

/// Homogenized plate used by the dispersion and capacitance models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectivePlate {
    /// m
    pub total_thickness: f64,
    /// kg/m^3
    pub rho_eff: f64,
    /// Effective plane-stress lateral stiffness, Pa.
    pub c_eff: f64,
    /// Effective shear stiffness, Pa. Needed alongside `c_eff` to pose the
    /// full plate dispersion problem.
    pub c44_eff: f64,
    /// Relative permittivity of the transduction film.
    pub eps_eff_r: f64,
}

/// One record of the materials fixture file: an [`ElasticMaterial`] plus a
/// free-text provenance note (where the constants came from).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialRecord {
    #[serde(flatten)]
    pub material: ElasticMaterial,
    pub provenance: String,
}

/// Materials fixture: a named collection of [`MaterialRecord`]s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialDb {
    pub materials: Vec<MaterialRecord>,
}

impl MaterialDb {
    pub fn get(&self, name: &str) -> Result<&ElasticMaterial, MaterialsError> {
        self.materials
            .iter()
            .map(|r| &r.material)
            .find(|m| m.name == name)
            .ok_or_else(|| MaterialsError::UnknownMaterial(name.to_string()))
    }
}

/// Load and validate a materials fixture file.
pub fn load_materials(path: impl AsRef<Path>) -> Result<MaterialDb, MaterialsError> {
    let text = std::fs::read_to_string(path)?;
    let db: MaterialDb = serde_json::from_str(&text)?;
    for record in &db.materials {
        record.material.validate()?;
    }
    Ok(db)
}
