//! S0 Lamb-wave dispersion for the homogenized plate.
//!
//! Two entry points: the thin-plate limit `v = sqrt(c_eff / rho_eff)`, and
//! the symmetric Rayleigh-Lamb characteristic equation solved on a
//! frequency-thickness grid. The plate is mapped to an isotropic equivalent
//! by taking the shear velocity from `c44_eff` and choosing the
//! longitudinal velocity so the zero-frequency S0 limit reproduces the
//! plane-stress plate velocity exactly:
//!
//! ```text
//! vt = sqrt(c44_eff / rho),  vp = sqrt(c_eff / rho),
//! vl = 2 vt^2 / sqrt(4 vt^2 - vp^2)        (requires vp < 2 vt).
//! ```
//!
//! The characteristic function used for root finding is the
//! cross-multiplied symmetric Rayleigh-Lamb form written in terms of the
//! entire functions `s(x) = sin(sqrt x)/sqrt x` and `c(x) = cos(sqrt x)`
//! (which continue to sinh/cosh for negative argument), so it is real and
//! continuous across the regime boundaries at `v = vt` and `v = vl` and has
//! no tangent poles. Roots are bracketed by a fixed-resolution sign scan
//! over a velocity window around the thin-plate value and polished by
//! bisection; the branch is followed by continuity from the thin-plate
//! anchor. Grid points where no validated root exists inside the window are
//! reported as unresolved, never interpolated.

use crate::materials::EffectivePlate;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Sign-scan resolution (intervals across the search window). Test oracles
/// re-scan at a multiple of this.
pub const SCAN_INTERVALS: usize = 600;

/// Velocity search window around the thin-plate velocity.
pub const WINDOW: (f64, f64) = (0.3, 3.0);

/// Accepted roots must satisfy the characteristic equation to this fraction
/// of its local term scale.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DispersionError {
    #[error(
        "plate moduli c_eff={c_eff} Pa, c44_eff={c44_eff} Pa admit no isotropic equivalent \
         (need c_eff < 4 c44_eff)"
    )]
    InvalidModuli { c_eff: f64, c44_eff: f64 },
    #[error("fd grid must be positive and strictly increasing (violation at index {0})")]
    BadGrid(usize),
    #[error("fd grid is empty")]
    EmptyGrid,
}

/// Zero-frequency (thin-plate) S0 phase velocity, m/s.
pub fn s0_thin_plate_velocity(plate: &EffectivePlate) -> f64 {
    (plate.c_eff / plate.rho_eff).sqrt()
}

/// One resolved dispersion sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionPoint {
    /// Frequency-thickness product, Hz·m.
    pub fd: f64,
    /// Phase velocity, m/s.
    pub velocity: f64,
}

/// A labeled dispersion branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionCurve {
    pub branch: String,
    pub points: Vec<DispersionPoint>,
}

/// Solver output: the resolved branch, per-point normalized residuals of
/// the characteristic equation, and any grid points left unresolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S0Solution {
    pub curve: DispersionCurve,
    /// Same order as `curve.points`.
    pub residuals: Vec<f64>,
    /// fd values where no validated root was found in the window.
    pub unresolved: Vec<f64>,
}

/// Isotropic-equivalent velocities (vl, vt, vp) for the plate.
fn equivalent_velocities(plate: &EffectivePlate) -> Result<(f64, f64, f64), DispersionError> {
    let vp = (plate.c_eff / plate.rho_eff).sqrt();
    let vt = (plate.c44_eff / plate.rho_eff).sqrt();
    let disc = 4.0 * vt * vt - vp * vp;
    if !(disc > 0.0) {
        return Err(DispersionError::InvalidModuli { c_eff: plate.c_eff, c44_eff: plate.c44_eff });
    }
    let vl = 2.0 * vt * vt / disc.sqrt();
    Ok((vl, vt, vp))
}

/// `sin(sqrt x)/sqrt x`, continued through zero and to `sinh` for x < 0.
fn s_half(x: f64) -> f64 {
    if x > 1e-12 {
        let r = x.sqrt();
        r.sin() / r
    } else if x < -1e-12 {
        let r = (-x).sqrt();
        r.sinh() / r
    } else {
        1.0 - x / 6.0
    }
}

/// `cos(sqrt x)`, continued to `cosh` for x < 0.
fn c_half(x: f64) -> f64 {
    if x >= 0.0 {
        x.sqrt().cos()
    } else {
        (-x).sqrt().cosh()
    }
}

fn characteristic_terms(vl: f64, vt: f64, fd: f64, v: f64) -> (f64, f64) {
    let pf = PI * fd;
    let pf2 = pf * pf;
    let a = pf2 * (1.0 / (vl * vl) - 1.0 / (v * v));
    let b = pf2 * (1.0 / (vt * vt) - 1.0 / (v * v));
    let kk = pf2 / (v * v);
    let t1 = (b - kk) * (b - kk) * s_half(b) * c_half(a);
    let t2 = 4.0 * kk * a * s_half(a) * c_half(b);
    (t1, t2)
}

/// Symmetric Rayleigh-Lamb characteristic function; zero on the S0 branch.
pub fn s0_characteristic(plate: &EffectivePlate, fd: f64, v: f64) -> Result<f64, DispersionError> {
    let (vl, vt, _) = equivalent_velocities(plate)?;
    let (t1, t2) = characteristic_terms(vl, vt, fd, v);
    Ok(t1 + t2)
}

/// Residual of the characteristic equation normalized by the magnitude of
/// its two constituent terms.
pub fn s0_residual(plate: &EffectivePlate, fd: f64, v: f64) -> Result<f64, DispersionError> {
    let (vl, vt, _) = equivalent_velocities(plate)?;
    let (t1, t2) = characteristic_terms(vl, vt, fd, v);
    let scale = t1.abs() + t2.abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((t1 + t2).abs() / scale)
}

fn bisect(vl: f64, vt: f64, fd: f64, mut lo: f64, mut hi: f64) -> f64 {
    let f = |v: f64| {
        let (t1, t2) = characteristic_terms(vl, vt, fd, v);
        t1 + t2
    };
    let mut flo = f(lo);
    for _ in 0..200 {
        if (hi - lo) <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if flo * fmid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    0.5 * (lo + hi)
}

/// All validated characteristic roots in the window at one fd, found by an
/// `intervals`-point sign scan plus bisection. Shared by the solver and by
/// the brute-force oracles that re-scan at higher resolution.
pub fn scan_roots(
    plate: &EffectivePlate,
    fd: f64,
    intervals: usize,
) -> Result<Vec<f64>, DispersionError> {
    let (vl, vt, vp) = equivalent_velocities(plate)?;
    let (wlo, whi) = (WINDOW.0 * vp, WINDOW.1 * vp);
    let f = |v: f64| {
        let (t1, t2) = characteristic_terms(vl, vt, fd, v);
        t1 + t2
    };
    let step = (whi - wlo) / intervals as f64;
    let mut roots = Vec::new();
    let mut prev_v = wlo;
    let mut prev_f = f(prev_v);
    for i in 1..=intervals {
        let v = wlo + step * i as f64;
        let fv = f(v);
        if prev_f == 0.0 {
            roots.push(prev_v);
        } else if prev_f * fv < 0.0 {
            roots.push(bisect(vl, vt, fd, prev_v, v));
        }
        prev_v = v;
        prev_f = fv;
    }
    if prev_f == 0.0 {
        roots.push(prev_v);
    }
    // Keep only genuine roots of the tangent-form equation: discard
    // pole-generated zeros of the cross-multiplied form and anything that
    // fails the residual check.
    let pf2 = (PI * fd) * (PI * fd);
    roots.retain(|&v| {
        let a = pf2 * (1.0 / (vl * vl) - 1.0 / (v * v));
        let b = pf2 * (1.0 / (vt * vt) - 1.0 / (v * v));
        if c_half(a).abs() < 1e-6 || c_half(b).abs() < 1e-6 {
            return false;
        }
        let (t1, t2) = characteristic_terms(vl, vt, fd, v);
        let scale = t1.abs() + t2.abs();
        scale == 0.0 || (t1 + t2).abs() / scale < RESIDUAL_TOL
    });
    Ok(roots)
}

/// Solve the S0 branch on a frequency-thickness grid.
pub fn rayleigh_lamb_s0(
    plate: &EffectivePlate,
    fd_grid: &[f64],
) -> Result<S0Solution, DispersionError> {
    if fd_grid.is_empty() {
        return Err(DispersionError::EmptyGrid);
    }
    if !(fd_grid[0] > 0.0) {
        return Err(DispersionError::BadGrid(0));
    }
    for i in 1..fd_grid.len() {
        if !(fd_grid[i] > fd_grid[i - 1]) {
            return Err(DispersionError::BadGrid(i));
        }
    }
    let vp = equivalent_velocities(plate)?.2;

    let mut points = Vec::with_capacity(fd_grid.len());
    let mut residuals = Vec::with_capacity(fd_grid.len());
    let mut unresolved = Vec::new();
    // Follow the branch by continuity, anchored at the thin-plate velocity.
    let mut anchor = vp;
    for &fd in fd_grid {
        let roots = scan_roots(plate, fd, SCAN_INTERVALS)?;
        let best =
            roots.iter().cloned().min_by(|a, b| (a - anchor).abs().total_cmp(&(b - anchor).abs()));
        match best {
            Some(v) => {
                anchor = v;
                points.push(DispersionPoint { fd, velocity: v });
                residuals.push(s0_residual(plate, fd, v)?);
            }
            None => unresolved.push(fd),
        }
    }
    Ok(S0Solution { curve: DispersionCurve { branch: "S0".into(), points }, residuals, unresolved })
}

/// Plot-ready CSV of a dispersion curve: `fd_hz_m,velocity_m_s`.
pub fn curve_to_csv(curve: &DispersionCurve) -> String {
    let mut out = String::with_capacity(32 * curve.points.len() + 24);
    out.push_str("fd_hz_m,velocity_m_s\n");
    for p in &curve.points {
        out.push_str(&format!("{:e},{:e}\n", p.fd, p.velocity));
    }
    out
}
