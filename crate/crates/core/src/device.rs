//! Lateral device geometry: overtone ladder, excitation-field overlap
//! weights, and static capacitance.
//!
//! The resonant cavity is the full released width `W`. Stress-free lateral
//! boundaries give cosine mode shapes `phi_n(x) = cos(n pi x / W)` with
//! frequencies `f_n = n v / (2 W)`. Two coplanar electrodes sit symmetric
//! about the center; the lateral drive field is uniform in the single
//! inter-electrode gap and zero elsewhere, so each mode couples through the
//! overlap of that field with the mode's lateral strain. For a gap of width
//! `g` centered at `W/2` the overlap integral collapses to
//!
//! ```text
//! I_n = -2 sin(n pi / 2) sin(n pi g / (2 W)),
//! ```
//!
//! which vanishes for every even `n`: a symmetric drive cannot excite an
//! antisymmetric-strain overtone. Relative weights of the odd overtones are
//! set entirely by the gap, which is why the electrode-to-release-window
//! spacing is an explicit configuration knob.

use crate::EPS0;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("geometry field {field} must be positive, got {value}")]
    BadLength { field: &'static str, value: f64 },
    #[error("electrodes do not fit: {n} electrodes of {we} m exceed the {w} m width")]
    ElectrodesTooWide { n: usize, we: f64, w: f64 },
    #[error("inter-electrode gap {gap} m and electrodes exceed the {w} m width")]
    GapTooWide { gap: f64, w: f64 },
    #[error("field model requires exactly 2 electrodes, geometry has {0}")]
    UnsupportedElectrodeCount(usize),
    #[error("overtone anchor index must be >= 1")]
    BadAnchorIndex,
    #[error("effective permittivity must be >= 1, got {0}")]
    BadPermittivity(f64),
}

/// Lateral resonator geometry. Lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceGeometry {
    /// Total released lateral width of the acoustic cavity.
    pub lateral_width: f64,
    /// Width of each drive electrode.
    pub electrode_width: f64,
    /// Electrode count; the coplanar drive model supports exactly 2.
    pub n_electrodes: usize,
    /// Acoustic aperture (transverse electrode length).
    pub aperture: f64,
    /// Transduction-film thickness.
    pub bto_thickness: f64,
    /// Electrode metal thickness. Enters mass loading through the layer
    /// stack, not the lateral model; kept here so one record describes the
    /// device.
    pub electrode_thickness: f64,
    /// Lateral release undercut. Recorded for provenance; the lateral model
    /// uses `lateral_width` directly.
    #[serde(default)]
    pub undercut: Option<f64>,
    /// Inter-electrode gap. `None` splits the free width evenly between the
    /// central gap and the two electrode-to-edge gaps.
    #[serde(default)]
    pub electrode_gap: Option<f64>,
}

impl DeviceGeometry {
    pub fn validate(&self) -> Result<(), DeviceError> {
        for (field, value) in [
            ("lateral_width", self.lateral_width),
            ("electrode_width", self.electrode_width),
            ("aperture", self.aperture),
            ("bto_thickness", self.bto_thickness),
            ("electrode_thickness", self.electrode_thickness),
        ] {
            if !(value > 0.0) {
                return Err(DeviceError::BadLength { field, value });
            }
        }
        if self.n_electrodes as f64 * self.electrode_width >= self.lateral_width {
            return Err(DeviceError::ElectrodesTooWide {
                n: self.n_electrodes,
                we: self.electrode_width,
                w: self.lateral_width,
            });
        }
        let gap = self.inter_electrode_gap();
        if !(gap > 0.0) {
            return Err(DeviceError::BadLength { field: "electrode_gap", value: gap });
        }
        if self.edge_gap() < 0.0 {
            return Err(DeviceError::GapTooWide { gap, w: self.lateral_width });
        }
        Ok(())
    }

    /// Central gap between the two electrodes. Defaults to an even split of
    /// the free width into the three gaps of the symmetric layout.
    pub fn inter_electrode_gap(&self) -> f64 {
        self.electrode_gap.unwrap_or_else(|| {
            (self.lateral_width - self.n_electrodes as f64 * self.electrode_width)
                / (self.n_electrodes as f64 + 1.0)
        })
    }

    /// Electrode-to-release-window spacing on each side, derived from the
    /// symmetric layout: `(W - 2 w_e - g) / 2`.
    pub fn edge_gap(&self) -> f64 {
        (self.lateral_width
            - self.n_electrodes as f64 * self.electrode_width
            - self.inter_electrode_gap())
            / 2.0
    }
}

/// Overtone ladder `f_n = n v / (2 W)` for `n = 1..=n_max`.
pub fn overtone_frequencies(geom: &DeviceGeometry, v_s0: f64, n_max: usize) -> Vec<f64> {
    let f1 = v_s0 / (2.0 * geom.lateral_width);
    (1..=n_max).map(|n| n as f64 * f1).collect()
}

/// Phase velocity that places overtone `n_anchor` of the ladder at
/// `f_anchor`: `v = 2 W f_anchor / n_anchor`. Which overtone index a
/// measured mode corresponds to is a calibration choice, so the index is an
/// explicit argument.
pub fn calibrated_velocity(
    geom: &DeviceGeometry,
    f_anchor: f64,
    n_anchor: usize,
) -> Result<f64, DeviceError> {
    if n_anchor == 0 {
        return Err(DeviceError::BadAnchorIndex);
    }
    Ok(2.0 * geom.lateral_width * f_anchor / n_anchor as f64)
}

/// Piecewise-constant lateral field profile over `[0, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile {
    /// Contiguous segments `(x0, x1, amplitude)` covering the full width.
    pub segments: Vec<(f64, f64, f64)>,
}

impl FieldProfile {
    pub fn eval(&self, x: f64) -> f64 {
        for &(x0, x1, a) in &self.segments {
            if x >= x0 && x <= x1 {
                return a;
            }
        }
        0.0
    }

    /// Total length where the field is nonzero.
    pub fn support(&self) -> f64 {
        self.segments.iter().filter(|s| s.2 != 0.0).map(|s| s.1 - s.0).sum()
    }
}

/// Unit-amplitude drive field: nonzero only in the inter-electrode gap,
/// zero under the electrodes and in the edge gaps.
pub fn lateral_field_profile(geom: &DeviceGeometry) -> Result<FieldProfile, DeviceError> {
    geom.validate()?;
    if geom.n_electrodes != 2 {
        return Err(DeviceError::UnsupportedElectrodeCount(geom.n_electrodes));
    }
    let edge = geom.edge_gap();
    let we = geom.electrode_width;
    let g = geom.inter_electrode_gap();
    let w = geom.lateral_width;
    let x0 = edge + we;
    let x1 = x0 + g;
    Ok(FieldProfile {
        segments: vec![
            (0.0, edge, 0.0),
            (edge, x0, 0.0),
            (x0, x1, 1.0),
            (x1, x1 + we, 0.0),
            (x1 + we, w, 0.0),
        ],
    })
}

/// One entry of an overtone spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvertoneMode {
    /// Ladder index, starting at 1.
    pub index: usize,
    /// Hz
    pub frequency: f64,
    /// Coupling weight, normalized so the strongest computed mode is 1.
    pub weight: f64,
}

/// Squared field-strain overlap per overtone, normalized so the maximum
/// over the computed modes is 1.
///
/// The overlap of the gap field with mode `n`'s strain integrates in closed
/// form to the difference of the mode shape at the gap edges,
/// `I_n = phi_n(x1) - phi_n(x0)`; the weight is `I_n^2`. Even overtones
/// cancel exactly for the symmetric layout.
pub fn coupling_weights(geom: &DeviceGeometry, n_max: usize) -> Result<Vec<f64>, DeviceError> {
    let profile = lateral_field_profile(geom)?;
    let w = geom.lateral_width;
    let (x0, x1) = profile
        .segments
        .iter()
        .find(|s| s.2 != 0.0)
        .map(|s| (s.0, s.1))
        .expect("profile has a drive gap");
    let mut raw: Vec<f64> = (1..=n_max)
        .map(|n| {
            let k = n as f64 * std::f64::consts::PI / w;
            let overlap = (k * x1).cos() - (k * x0).cos();
            overlap * overlap
        })
        .collect();
    let max = raw.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in &mut raw {
            *v /= max;
        }
    }
    Ok(raw)
}

/// Overtone ladder with coupling weights attached.
pub fn overtone_set(
    geom: &DeviceGeometry,
    v_s0: f64,
    n_max: usize,
) -> Result<Vec<OvertoneMode>, DeviceError> {
    let freqs = overtone_frequencies(geom, v_s0, n_max);
    let weights = coupling_weights(geom, n_max)?;
    Ok(freqs
        .into_iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (frequency, weight))| OvertoneMode { index: i + 1, frequency, weight })
        .collect())
}

/// Static electrode capacitance of the coplanar pair:
/// `C0 = eps0 * eps_eff_r * (aperture * film_thickness) / gap`.
pub fn static_capacitance(geom: &DeviceGeometry, eps_eff_r: f64) -> Result<f64, DeviceError> {
    geom.validate()?;
    if !(eps_eff_r >= 1.0) {
        return Err(DeviceError::BadPermittivity(eps_eff_r));
    }
    Ok(EPS0 * eps_eff_r * geom.aperture * geom.bto_thickness / geom.inter_electrode_gap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn demo_geometry() -> DeviceGeometry {
        DeviceGeometry {
            lateral_width: 7.75e-6,
            electrode_width: 1.25e-6,
            n_electrodes: 2,
            aperture: 50e-6,
            bto_thickness: 125e-9,
            electrode_thickness: 75e-9,
            undercut: Some(10e-6),
            electrode_gap: None,
        }
    }

    #[test]
    fn default_gap_splits_free_width_evenly() {
        let g = demo_geometry();
        g.validate().unwrap();
        assert_relative_eq!(g.inter_electrode_gap(), 1.75e-6, max_relative = 1e-12);
        assert_relative_eq!(g.edge_gap(), 1.75e-6, max_relative = 1e-12);
        let mut custom = g;
        custom.electrode_gap = Some(2.5e-6);
        custom.validate().unwrap();
        assert_relative_eq!(
            custom.edge_gap(),
            (7.75e-6 - 2.5e-6 - 2.5e-6) / 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn geometry_validation() {
        let mut g = demo_geometry();
        g.electrode_width = 4e-6;
        assert!(matches!(g.validate(), Err(DeviceError::ElectrodesTooWide { .. })));
        let mut g = demo_geometry();
        g.electrode_gap = Some(6e-6);
        assert!(matches!(g.validate(), Err(DeviceError::GapTooWide { .. })));
        let mut g = demo_geometry();
        g.aperture = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn overtone_ladder_is_harmonic() {
        let g = demo_geometry();
        let f = overtone_frequencies(&g, 4650.0, 5);
        assert_eq!(f.len(), 5);
        assert_relative_eq!(f[0], 300e6, max_relative = 1e-12);
        for (i, fi) in f.iter().enumerate() {
            assert_relative_eq!(*fi, (i + 1) as f64 * f[0], max_relative = 1e-12);
        }
    }

    #[test]
    fn velocity_calibration_inverts_the_ladder() {
        let g = demo_geometry();
        let v = calibrated_velocity(&g, 300e6, 1).unwrap();
        assert_relative_eq!(v, 4650.0, max_relative = 1e-12);
        let v3 = calibrated_velocity(&g, 300e6, 3).unwrap();
        assert_relative_eq!(v3, 1550.0, max_relative = 1e-12);
        assert_relative_eq!(overtone_frequencies(&g, v3, 3)[2], 300e6, max_relative = 1e-12);
        assert!(calibrated_velocity(&g, 300e6, 0).is_err());
    }

    #[test]
    fn field_profile_shape() {
        let g = demo_geometry();
        let p = lateral_field_profile(&g).unwrap();
        assert_relative_eq!(p.support(), g.inter_electrode_gap(), max_relative = 1e-12);
        // Zero under electrodes and edge gaps, one in the central gap.
        assert_eq!(p.eval(0.5e-6), 0.0);
        assert_eq!(p.eval(2.0e-6), 0.0);
        assert_eq!(p.eval(7.75e-6 / 2.0), 1.0);
        assert_eq!(p.eval(6.0e-6), 0.0);
        // Symmetric about the center.
        let w = g.lateral_width;
        for x in [0.3e-6, 1.9e-6, 3.2e-6, 3.875e-6] {
            assert_eq!(p.eval(x), p.eval(w - x));
        }
        let mut three = g;
        three.n_electrodes = 3;
        assert!(matches!(
            lateral_field_profile(&three),
            Err(DeviceError::UnsupportedElectrodeCount(3))
        ));
    }

    /// Brute-force overlap integral on a dense Simpson rule; oracle for the
    /// closed-form weights.
    fn quadrature_weight(geom: &DeviceGeometry, n: usize, panels: usize) -> f64 {
        let p = lateral_field_profile(geom).unwrap();
        let w = geom.lateral_width;
        let k = n as f64 * std::f64::consts::PI / w;
        // Integrate E(x) * d/dx cos(k x) over the drive gap only; the field
        // vanishes elsewhere.
        let (x0, x1) = p.segments.iter().find(|s| s.2 != 0.0).map(|s| (s.0, s.1)).unwrap();
        let h = (x1 - x0) / panels as f64;
        let strain = |x: f64| -k * (k * x).sin();
        let mut acc = strain(x0) + strain(x1);
        for i in 1..panels {
            let x = x0 + i as f64 * h;
            acc += strain(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        // Antiderivative of the strain is the mode shape itself, so this
        // must land on cos(k x1) - cos(k x0).
        let overlap = acc * h / 3.0;
        overlap * overlap
    }

    #[test]
    fn closed_form_weights_match_quadrature() {
        let g = demo_geometry();
        let n_max = 10;
        let weights = coupling_weights(&g, n_max).unwrap();
        let raw_quad: Vec<f64> = (1..=n_max).map(|n| quadrature_weight(&g, n, 10_000)).collect();
        let max_quad = raw_quad.iter().cloned().fold(0.0f64, f64::max);
        for (i, (w_closed, w_quad)) in weights.iter().zip(&raw_quad).enumerate() {
            let normalized_quad = w_quad / max_quad;
            assert!(
                (w_closed - normalized_quad).abs() <= 1e-8,
                "mode {}: closed {w_closed} vs quadrature {normalized_quad}",
                i + 1
            );
        }
    }

    #[test]
    fn even_overtones_are_parity_forbidden() {
        let g = demo_geometry();
        let weights = coupling_weights(&g, 12).unwrap();
        let max = weights.iter().cloned().fold(0.0f64, f64::max);
        assert_relative_eq!(max, 1.0, max_relative = 1e-15);
        for (i, w) in weights.iter().enumerate() {
            let n = i + 1;
            if n % 2 == 0 {
                assert!(*w < 1e-12, "even mode {n} should not couple, weight {w}");
            } else {
                assert!(*w > 1e-12, "odd mode {n} should couple, weight {w}");
            }
        }
    }

    #[test]
    fn parity_holds_for_any_admissible_gap() {
        let g0 = demo_geometry();
        for gap in [0.25e-6, 0.8e-6, 1.75e-6, 3.0e-6, 5.0e-6] {
            let mut g = g0.clone();
            g.electrode_gap = Some(gap);
            g.validate().unwrap();
            let weights = coupling_weights(&g, 9).unwrap();
            for (i, w) in weights.iter().enumerate() {
                if (i + 1) % 2 == 0 {
                    assert!(*w < 1e-12, "gap {gap}: even mode {} coupled: {w}", i + 1);
                }
            }
        }
    }

    #[test]
    fn anchored_spectrum_reaches_the_700_mhz_band() {
        // Anchoring the strong low mode at 300 MHz as the third overtone
        // puts the seventh at 700 MHz; both are odd, so both couple.
        let g = demo_geometry();
        let v = calibrated_velocity(&g, 300e6, 3).unwrap();
        let set = overtone_set(&g, v, 10).unwrap();
        let in_band: Vec<_> = set
            .iter()
            .filter(|m| m.frequency >= 600e6 && m.frequency <= 800e6 && m.weight >= 0.05)
            .collect();
        assert!(!in_band.is_empty(), "expected a coupled overtone in 600-800 MHz: {set:?}");
        assert_eq!(in_band[0].index, 7);
        // And at least two usable modes below 1 GHz.
        let usable = set.iter().filter(|m| m.frequency < 1e9 && m.weight >= 0.05).count();
        assert!(usable >= 2, "{set:?}");
    }

    #[test]
    fn static_capacitance_known_value() {
        let g = demo_geometry();
        let c0 = static_capacitance(&g, 1000.0).unwrap();
        // eps0 * 1000 * (50 um * 125 nm) / 1.75 um, fixed after first run.
        let by_hand = 8.854_187_812_8e-12 * 1000.0 * (50e-6 * 125e-9) / 1.75e-6;
        assert_relative_eq!(c0, by_hand, max_relative = 1e-12);
        assert_relative_eq!(c0, 3.162_209_933_142_857e-14, max_relative = 1e-12);
        assert!(c0 > 0.0);
        assert!(static_capacitance(&g, 0.5).is_err());
    }
}
