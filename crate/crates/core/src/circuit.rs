//! Multi-branch modified Butterworth-Van Dyke admittance synthesis.
//!
//! A resonator is a static capacitance `c0` in parallel with one series RLC
//! branch per acoustic mode, optionally behind a small series electrode
//! resistance. Each branch is specified by physical parameters
//! (series resonance `fs`, coupling `k2`, quality factor `q`) and mapped to
//! element values with the fundamental-mode relations
//!
//! ```text
//! C = c0 * (8/pi^2) * k2,   L = 1 / ((2 pi fs)^2 C),   R = 2 pi fs L / q,
//! ```
//!
//! which make the parallel resonance land exactly at
//! `fp = fs * sqrt(1 + (8/pi^2) k2)`, i.e. the same frequency pair the
//! coupling definition `k2 = (pi^2/8)(fp^2/fs^2 - 1)` inverts.

use crate::EIGHT_OVER_PI_SQ;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("branch {index}: series resonance must be positive, got {fs}")]
    BadFs { index: usize, fs: f64 },
    #[error("branch {index}: coupling must satisfy 0 <= k2 < 1, got {k2}")]
    BadK2 { index: usize, k2: f64 },
    #[error("branch {index}: quality factor must be positive, got {q}")]
    BadQ { index: usize, q: f64 },
    #[error("static capacitance must be positive, got {0}")]
    BadC0(f64),
    #[error("series resistance must be non-negative, got {0}")]
    BadRs(f64),
    #[error("branches {a} and {b} share the series resonance {fs} Hz; branch frequencies must be distinct")]
    DuplicateFs { a: usize, b: usize, fs: f64 },
    #[error("frequency grid and admittance vector lengths differ: {nf} vs {ny}")]
    LengthMismatch { nf: usize, ny: usize },
    #[error("frequency grid must be positive and strictly increasing (violation at index {0})")]
    BadGrid(usize),
    #[error("frequency grid is empty")]
    EmptyGrid,
    #[error("response CSV line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// One acoustic mode of the equivalent circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalBranch {
    /// Series (motional) resonance, Hz.
    pub fs: f64,
    /// Electromechanical coupling, dimensionless fraction in [0, 1).
    /// Zero marks an inert branch that contributes no admittance.
    pub k2: f64,
    /// Mechanical quality factor. `f64::INFINITY` is accepted and gives a
    /// lossless branch.
    pub q: f64,
}

impl ModalBranch {
    pub fn new(fs: f64, k2: f64, q: f64) -> Result<Self, CircuitError> {
        let b = Self { fs, k2, q };
        b.validate(0)?;
        Ok(b)
    }

    pub fn validate(&self, index: usize) -> Result<(), CircuitError> {
        if !(self.fs > 0.0) {
            return Err(CircuitError::BadFs { index, fs: self.fs });
        }
        if !(self.k2 >= 0.0 && self.k2 < 1.0) {
            return Err(CircuitError::BadK2 { index, k2: self.k2 });
        }
        if !(self.q > 0.0) {
            return Err(CircuitError::BadQ { index, q: self.q });
        }
        Ok(())
    }

    pub fn is_inert(&self) -> bool {
        self.k2 == 0.0
    }
}

/// Series RLC element values of one branch, or nothing for an inert branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchElements {
    Inert,
    Series {
        /// Ohm
        r: f64,
        /// H
        l: f64,
        /// F
        c: f64,
    },
}

/// Map a branch's physical parameters to RLC element values against a given
/// static capacitance. `k2 = 0` yields [`BranchElements::Inert`] rather than
/// a division by zero.
pub fn branch_rlc(branch: &ModalBranch, c0: f64) -> BranchElements {
    if branch.is_inert() {
        return BranchElements::Inert;
    }
    let c = c0 * EIGHT_OVER_PI_SQ * branch.k2;
    let ws = TAU * branch.fs;
    let l = 1.0 / (ws * ws * c);
    let r = ws * l / branch.q;
    BranchElements::Series { r, l, c }
}

/// Parallel (anti-) resonance of a branch: `fs * sqrt(1 + (8/pi^2) k2)`.
/// Independent of the static capacitance because the branch elements are
/// constructed from it.
pub fn parallel_resonance(branch: &ModalBranch) -> f64 {
    branch.fs * (1.0 + EIGHT_OVER_PI_SQ * branch.k2).sqrt()
}

/// Coupling-to-frequency-pair relation solved for `k2`:
/// `k2 = (pi^2/8) (fp^2/fs^2 - 1)`. Exact inverse of [`parallel_resonance`].
pub fn coupling_from_pair(fs: f64, fp: f64) -> f64 {
    (fp * fp / (fs * fs) - 1.0) / EIGHT_OVER_PI_SQ
}

/// Full equivalent circuit: static capacitance, optional series electrode
/// resistance, and one branch per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorModel {
    /// Static (plate) capacitance, F.
    pub c0: f64,
    /// Series electrode resistance, Ohm. Defaults to zero.
    #[serde(default)]
    pub rs_shunt: f64,
    pub branches: Vec<ModalBranch>,
}

impl ResonatorModel {
    pub fn new(c0: f64, rs_shunt: f64, branches: Vec<ModalBranch>) -> Result<Self, CircuitError> {
        let m = Self { c0, rs_shunt, branches };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if !(self.c0 > 0.0) {
            return Err(CircuitError::BadC0(self.c0));
        }
        if !(self.rs_shunt >= 0.0) {
            return Err(CircuitError::BadRs(self.rs_shunt));
        }
        for (i, b) in self.branches.iter().enumerate() {
            b.validate(i)?;
        }
        for a in 0..self.branches.len() {
            for b in a + 1..self.branches.len() {
                if self.branches[a].fs == self.branches[b].fs {
                    return Err(CircuitError::DuplicateFs { a, b, fs: self.branches[a].fs });
                }
            }
        }
        Ok(())
    }

    /// Complex admittance at a single frequency.
    pub fn admittance(&self, f: f64) -> Complex64 {
        let w = TAU * f;
        let mut y = Complex64::new(0.0, w * self.c0);
        for branch in &self.branches {
            if let BranchElements::Series { r, l, c } = branch_rlc(branch, self.c0) {
                let z = Complex64::new(r, w * l - 1.0 / (w * c));
                y += z.inv();
            }
        }
        if self.rs_shunt == 0.0 {
            // Keep the pure parallel result bit-exact; the general path
            // below would round-trip through two divisions.
            return y;
        }
        (Complex64::new(self.rs_shunt, 0.0) + y.inv()).inv()
    }
}

/// Complex admittance sampled on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    /// Hz, strictly increasing, all positive.
    pub freqs: Vec<f64>,
    /// Siemens, one sample per grid point.
    pub y: Vec<Complex64>,
}

impl FrequencyResponse {
    pub fn new(freqs: Vec<f64>, y: Vec<Complex64>) -> Result<Self, CircuitError> {
        if freqs.len() != y.len() {
            return Err(CircuitError::LengthMismatch { nf: freqs.len(), ny: y.len() });
        }
        validate_grid(&freqs)?;
        Ok(Self { freqs, y })
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

pub(crate) fn validate_grid(freqs: &[f64]) -> Result<(), CircuitError> {
    if freqs.is_empty() {
        return Err(CircuitError::EmptyGrid);
    }
    if !(freqs[0] > 0.0) {
        return Err(CircuitError::BadGrid(0));
    }
    for i in 1..freqs.len() {
        if !(freqs[i] > freqs[i - 1]) {
            return Err(CircuitError::BadGrid(i));
        }
    }
    Ok(())
}

/// Evaluate the model on a frequency grid.
pub fn synthesize(
    model: &ResonatorModel,
    freqs: &[f64],
) -> Result<FrequencyResponse, CircuitError> {
    model.validate()?;
    validate_grid(freqs)?;
    let y = freqs.iter().map(|&f| model.admittance(f)).collect();
    Ok(FrequencyResponse { freqs: freqs.to_vec(), y })
}

/// Uniform grid of `n >= 2` points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (stop - start) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
    v[n - 1] = stop;
    v
}

/// Serialize a response to the plot-ready CSV schema
/// `freq_hz,re_y_s,im_y_s`. Scientific notation keeps the round trip exact.
pub fn response_to_csv(fr: &FrequencyResponse) -> String {
    let mut out = String::with_capacity(32 * fr.len() + 24);
    out.push_str("freq_hz,re_y_s,im_y_s\n");
    for (f, y) in fr.freqs.iter().zip(&fr.y) {
        out.push_str(&format!("{:e},{:e},{:e}\n", f, y.re, y.im));
    }
    out
}

/// Parse the CSV schema written by [`response_to_csv`]. Errors carry
/// 1-based line numbers.
pub fn response_from_csv(text: &str) -> Result<FrequencyResponse, CircuitError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(CircuitError::Csv {
        line: 1,
        message: "empty file, expected header freq_hz,re_y_s,im_y_s".into(),
    })?;
    if header.trim() != "freq_hz,re_y_s,im_y_s" {
        return Err(CircuitError::Csv {
            line: 1,
            message: format!("unexpected header {header:?}, expected freq_hz,re_y_s,im_y_s"),
        });
    }
    let mut freqs = Vec::new();
    let mut y = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(CircuitError::Csv {
                line,
                message: format!("expected 3 comma-separated fields, got {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 3];
        for (k, field) in fields.iter().enumerate() {
            vals[k] = field.trim().parse().map_err(|e| CircuitError::Csv {
                line,
                message: format!("bad float {field:?}: {e}"),
            })?;
        }
        freqs.push(vals[0]);
        y.push(Complex64::new(vals[1], vals[2]));
    }
    if freqs.is_empty() {
        return Err(CircuitError::Csv { line: 1, message: "no data rows".into() });
    }
    FrequencyResponse::new(freqs, y)
}
