//! Phenomenological DC-bias model for ferroelectric resonators.
//!
//! Below a turning voltage, increasing bias aligns ferroelectric domains:
//! coupling grows as `tanh²(v/v_c)` (zero slope at zero bias, saturation at
//! large bias), the quality factor grows on the same `tanh` scale, the
//! parallel resonance stays put while the series resonance is pulled down by
//! the widening coupling gap, and the static capacitance falls as the
//! permittivity is suppressed. Above the turning voltage the trends reverse:
//! coupling decays exponentially, the parallel resonance walks upward
//! linearly, and Q decays linearly at the coupling's fractional rate.
//!
//! The laws are deliberately simple two-parameter shapes; each is calibrated
//! against endpoint values rather than fitted curves, and [`k2_max_for`] /
//! [`q_sat_for`] solve the calibration equations when the known quantities
//! are at the turning voltage. Negative bias is out of scope.

use crate::circuit::{parallel_resonance, CircuitError, ModalBranch, ResonatorModel};
use crate::EIGHT_OVER_PI_SQ;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TuningError {
    #[error("saturation scale v_c must be positive, got {0}")]
    BadVc(f64),
    #[error("turning voltage must be positive, got {0}")]
    BadVTurn(f64),
    #[error("mode {mode}: coupling ceiling must lie in (0, 1), got {value}")]
    BadK2Max { mode: usize, value: f64 },
    #[error("need q_sat >= q0 > 0, got q0={q0}, q_sat={q_sat}")]
    BadQEndpoints { q0: f64, q_sat: f64 },
    #[error("zero-bias permittivity must be >= 1, got {0}")]
    BadEpsR0(f64),
    #[error("permittivity suppression coefficient must be non-negative, got {0}")]
    BadAlpha(f64),
    #[error("coupling decay rate must be non-negative, got {0}")]
    BadGamma(f64),
    #[error("mode {mode} out of range for a model with {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("tuning model has {model} modes but the base circuit has {base} branches")]
    ModeCountMismatch { model: usize, base: usize },
    #[error("bias voltages must be non-negative and strictly increasing")]
    BadVoltages,
    #[error("sweep produced a non-positive value at {v} V ({what})")]
    BadRowValue { v: f64, what: &'static str },
    #[error("need at least {need} sweep rows, got {rows}")]
    InsufficientRows { rows: usize, need: usize },
    #[error("every row has zero coupling; tunability is undefined for an off device")]
    AllInert,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Bias-response parameters. All voltages in volts; `k2_max` carries one
/// coupling ceiling per acoustic mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningModel {
    /// Domain-alignment saturation scale, V.
    pub v_c: f64,
    /// Per-mode coupling ceiling (the v → ∞ limit of the alignment law).
    pub k2_max: Vec<f64>,
    /// Quality factor at zero bias.
    pub q0: f64,
    /// Quality-factor saturation value.
    pub q_sat: f64,
    /// Relative permittivity at zero bias.
    pub eps_r0: f64,
    /// Permittivity suppression coefficient, 1/V².
    pub alpha_eps: f64,
    /// Regime boundary where the trends reverse, V.
    pub v_turn: f64,
    /// Post-turn parallel-resonance slope, Hz/V.
    pub beta_turn: f64,
    /// Post-turn coupling decay rate, 1/V.
    pub gamma_decay: f64,
}

impl TuningModel {
    pub fn validate(&self) -> Result<(), TuningError> {
        if !(self.v_c > 0.0) {
            return Err(TuningError::BadVc(self.v_c));
        }
        if !(self.v_turn > 0.0) {
            return Err(TuningError::BadVTurn(self.v_turn));
        }
        for (mode, &k) in self.k2_max.iter().enumerate() {
            if !(k > 0.0 && k < 1.0) {
                return Err(TuningError::BadK2Max { mode, value: k });
            }
        }
        if !(self.q0 > 0.0 && self.q_sat >= self.q0) {
            return Err(TuningError::BadQEndpoints { q0: self.q0, q_sat: self.q_sat });
        }
        if !(self.eps_r0 >= 1.0) {
            return Err(TuningError::BadEpsR0(self.eps_r0));
        }
        if !(self.alpha_eps >= 0.0) {
            return Err(TuningError::BadAlpha(self.alpha_eps));
        }
        if !(self.gamma_decay >= 0.0) {
            return Err(TuningError::BadGamma(self.gamma_decay));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.k2_max.len()
    }

    /// Calibrate a model against a circuit known at the turning voltage:
    /// per-mode ceilings solve `k2_max tanh²(v_turn/v_c) = k2_branch`, and
    /// the Q endpoints solve the same equation for the mean branch Q.
    #[allow(clippy::too_many_arguments)]
    pub fn calibrated(
        base: &ResonatorModel,
        v_turn: f64,
        v_c: f64,
        q0: f64,
        eps_r0: f64,
        alpha_eps: f64,
        beta_turn: f64,
        gamma_decay: f64,
    ) -> Result<Self, TuningError> {
        base.validate()?;
        let k2_max =
            base.branches.iter().map(|b| k2_max_for(b.k2, v_turn, v_c)).collect::<Vec<_>>();
        let q_turn =
            base.branches.iter().map(|b| b.q).sum::<f64>() / base.branches.len().max(1) as f64;
        let model = Self {
            v_c,
            k2_max,
            q0,
            q_sat: q_sat_for(q_turn, q0, v_turn, v_c),
            eps_r0,
            alpha_eps,
            v_turn,
            beta_turn,
            gamma_decay,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Ceiling that makes the alignment law hit `k2_at_turn` at the turning
/// voltage: `k2_at_turn / tanh²(v_turn/v_c)`.
pub fn k2_max_for(k2_at_turn: f64, v_turn: f64, v_c: f64) -> f64 {
    let t = (v_turn / v_c).tanh();
    k2_at_turn / (t * t)
}

/// Saturation Q that makes the growth law hit `q_at_turn` at the turning
/// voltage.
pub fn q_sat_for(q_at_turn: f64, q0: f64, v_turn: f64, v_c: f64) -> f64 {
    q0 + (q_at_turn - q0) / (v_turn / v_c).tanh()
}

fn assert_bias(v: f64) {
    assert!(v >= 0.0 && v.is_finite(), "bias must be finite and non-negative, got {v}");
}

/// Electromechanical coupling at bias `v`: `k2_max tanh²(v/v_c)` up to the
/// turning voltage, exponential decay beyond it.
///
/// Panics if `v` is negative or `mode` is out of range.
pub fn k2_of_bias(m: &TuningModel, mode: usize, v: f64) -> f64 {
    assert_bias(v);
    let k2_max = m.k2_max[mode];
    let aligned = |v: f64| {
        let t = (v / m.v_c).tanh();
        k2_max * t * t
    };
    if v <= m.v_turn {
        aligned(v)
    } else {
        aligned(m.v_turn) * (-m.gamma_decay * (v - m.v_turn)).exp()
    }
}

/// Series/parallel resonance pair at bias `v`, anchored to the below-turn
/// parallel resonance `fp0`. Below the turning voltage only the series
/// resonance moves; above it the parallel resonance walks linearly and the
/// series resonance follows the coupling relation against the shifted value.
///
/// Panics if `v` is negative, `fp0` is not positive, or `mode` is out of
/// range.
pub fn fs_fp_of_bias(m: &TuningModel, mode: usize, v: f64, fp0: f64) -> (f64, f64) {
    assert_bias(v);
    assert!(fp0 > 0.0, "parallel-resonance anchor must be positive, got {fp0}");
    let k2 = k2_of_bias(m, mode, v);
    let fp = if v <= m.v_turn { fp0 } else { fp0 + m.beta_turn * (v - m.v_turn) };
    let fs = fp / (1.0 + EIGHT_OVER_PI_SQ * k2).sqrt();
    (fs, fp)
}

/// Quality factor at bias `v`: `q0 + (q_sat - q0) tanh(v/v_c)` up to the
/// turning voltage, then a linear decay at the coupling's fractional rate,
/// floored at `q0`.
///
/// Panics if `v` is negative.
pub fn q_of_bias(m: &TuningModel, v: f64) -> f64 {
    assert_bias(v);
    let grown = |v: f64| m.q0 + (m.q_sat - m.q0) * (v / m.v_c).tanh();
    if v <= m.v_turn {
        grown(v)
    } else {
        (grown(m.v_turn) * (1.0 - m.gamma_decay * (v - m.v_turn))).max(m.q0)
    }
}

/// Static capacitance at bias `v` from the geometric scale
/// `geom_c0_per_eps` (farads per unit relative permittivity):
/// `geom_c0_per_eps · eps_r0 / (1 + alpha_eps v²)`.
///
/// Panics if `v` is negative or the scale is not positive.
pub fn c0_of_bias(m: &TuningModel, geom_c0_per_eps: f64, v: f64) -> f64 {
    assert_bias(v);
    assert!(geom_c0_per_eps > 0.0, "capacitance scale must be positive");
    geom_c0_per_eps * m.eps_r0 / (1.0 + m.alpha_eps * v * v)
}

/// One mode's state at a bias point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub fs: f64,
    pub fp: f64,
    pub k2: f64,
    pub q: f64,
}

/// All mode states plus the static capacitance at one bias point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v_dc: f64,
    pub modes: Vec<ModeState>,
    pub c0: f64,
}

impl SweepRow {
    /// Equivalent circuit at this bias point (no series parasitic). Modes
    /// with zero coupling become inert branches.
    pub fn to_model(&self) -> Result<ResonatorModel, CircuitError> {
        let branches =
            self.modes.iter().map(|s| ModalBranch { fs: s.fs, k2: s.k2, q: s.q }).collect();
        ResonatorModel::new(self.c0, 0.0, branches)
    }
}

/// Result of [`simulate_sweep`]: one row per bias voltage, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSweepResult {
    pub rows: Vec<SweepRow>,
}

/// Evaluate the bias laws over a voltage sweep.
///
/// The base circuit is read as the device's calibration state *at the
/// turning voltage*: each branch's parallel resonance anchors `fp0` (the
/// below-turn constant), while `base.c0` is read as the zero-bias
/// capacitance (capacitance only falls with bias). The tuning model must
/// carry one `k2_max` entry per base branch.
pub fn simulate_sweep(
    m: &TuningModel,
    base: &ResonatorModel,
    voltages: &[f64],
) -> Result<BiasSweepResult, TuningError> {
    m.validate()?;
    base.validate()?;
    if m.n_modes() != base.branches.len() {
        return Err(TuningError::ModeCountMismatch {
            model: m.n_modes(),
            base: base.branches.len(),
        });
    }
    if voltages.is_empty()
        || voltages[0] < 0.0
        || voltages.windows(2).any(|w| !(w[1] > w[0]))
        || !voltages.iter().all(|v| v.is_finite())
    {
        return Err(TuningError::BadVoltages);
    }
    let fp0: Vec<f64> = base.branches.iter().map(parallel_resonance).collect();
    let geom = base.c0 / m.eps_r0;
    let mut rows = Vec::with_capacity(voltages.len());
    for &v in voltages {
        let q = q_of_bias(m, v);
        let c0 = c0_of_bias(m, geom, v);
        let mut modes = Vec::with_capacity(fp0.len());
        for (mode, &anchor) in fp0.iter().enumerate() {
            let k2 = k2_of_bias(m, mode, v);
            let (fs, fp) = fs_fp_of_bias(m, mode, v, anchor);
            if !(fs > 0.0 && fp > 0.0) {
                return Err(TuningError::BadRowValue { v, what: "resonance frequency" });
            }
            modes.push(ModeState { fs, fp, k2, q });
        }
        if !(c0 > 0.0 && q > 0.0) {
            return Err(TuningError::BadRowValue { v, what: "c0 or q" });
        }
        rows.push(SweepRow { v_dc: v, modes, c0 });
    }
    Ok(BiasSweepResult { rows })
}

/// Which per-row scalar a change-point detection runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMetric {
    SeriesFrequency(usize),
    ParallelFrequency(usize),
    Coupling(usize),
    Quality,
    Capacitance,
}

impl SweepMetric {
    fn value(&self, row: &SweepRow) -> Option<f64> {
        match *self {
            SweepMetric::SeriesFrequency(m) => row.modes.get(m).map(|s| s.fs),
            SweepMetric::ParallelFrequency(m) => row.modes.get(m).map(|s| s.fp),
            SweepMetric::Coupling(m) => row.modes.get(m).map(|s| s.k2),
            SweepMetric::Quality => row.modes.first().map(|s| s.q),
            SweepMetric::Capacitance => Some(row.c0),
        }
    }
}

/// Outcome of [`detect_turning_voltage`]. `v_turn` is `None` when the
/// two-segment fit does not beat a single line by at least 1% of its sum of
/// squared errors (the metric is effectively linear).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPointReport {
    pub v_turn: Option<f64>,
    pub breakpoint_index: Option<usize>,
    pub sse_single_line: f64,
    pub sse_two_segment: f64,
    /// Fractional SSE improvement of the hinge fit over the single line.
    pub improvement: f64,
}

fn least_squares_sse(cols: &[&[f64]], y: &[f64]) -> f64 {
    let n = y.len();
    let k = cols.len();
    let a = DMatrix::from_fn(n, k, |i, j| cols[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    match svd.solve(&b, 1e-12) {
        Ok(x) => (a * x - b).norm_squared(),
        Err(_) => f64::INFINITY,
    }
}

/// Locate the bias where a sweep metric changes trend, by exhaustive
/// two-segment continuous piecewise-linear least squares over interior grid
/// points (each segment keeps at least three points). Needs at least six
/// rows.
pub fn detect_turning_voltage(
    sweep: &BiasSweepResult,
    metric: SweepMetric,
) -> Result<TurningPointReport, TuningError> {
    let n = sweep.rows.len();
    if n < 6 {
        return Err(TuningError::InsufficientRows { rows: n, need: 6 });
    }
    let xs: Vec<f64> = sweep.rows.iter().map(|r| r.v_dc).collect();
    let ys: Vec<f64> = sweep
        .rows
        .iter()
        .map(|r| {
            metric.value(r).ok_or(TuningError::ModeOutOfRange {
                mode: match metric {
                    SweepMetric::SeriesFrequency(m)
                    | SweepMetric::ParallelFrequency(m)
                    | SweepMetric::Coupling(m) => m,
                    _ => 0,
                },
                n_modes: r.modes.len(),
            })
        })
        .collect::<Result<_, _>>()?;

    let ones = vec![1.0; n];
    let sse_line = least_squares_sse(&[&ones, &xs], &ys);

    let mut best = (f64::INFINITY, 0usize);
    for j in 2..=n - 3 {
        let hinge: Vec<f64> = xs.iter().map(|&v| (v - xs[j]).max(0.0)).collect();
        let sse = least_squares_sse(&[&ones, &xs, &hinge], &ys);
        if sse < best.0 {
            best = (sse, j);
        }
    }
    let (sse_hinge, j_best) = best;

    // A numerically exact line leaves only rounding noise in both fits;
    // don't let the hinge "explain" rounding noise as a kink.
    let scale: f64 = ys.iter().map(|y| y * y).sum();
    let effectively_linear = sse_line <= 1e-20 * scale;
    let improvement =
        if effectively_linear || sse_line <= 0.0 { 0.0 } else { (sse_line - sse_hinge) / sse_line };

    if improvement < 0.01 {
        return Ok(TurningPointReport {
            v_turn: None,
            breakpoint_index: None,
            sse_single_line: sse_line,
            sse_two_segment: sse_hinge,
            improvement,
        });
    }
    Ok(TurningPointReport {
        v_turn: Some(xs[j_best]),
        breakpoint_index: Some(j_best),
        sse_single_line: sse_line,
        sse_two_segment: sse_hinge,
        improvement,
    })
}

/// Percent series-frequency tuning over a sweep:
/// `100 (max fs - min fs) / fs_ref`, where the reference row is the first
/// with nonzero coupling in the chosen mode (an off device has no series
/// resonance of its own).
pub fn tunability(sweep: &BiasSweepResult, mode: usize) -> Result<f64, TuningError> {
    let n = sweep.rows.len();
    if n < 2 {
        return Err(TuningError::InsufficientRows { rows: n, need: 2 });
    }
    let states: Vec<&ModeState> = sweep
        .rows
        .iter()
        .map(|r| {
            r.modes.get(mode).ok_or(TuningError::ModeOutOfRange { mode, n_modes: r.modes.len() })
        })
        .collect::<Result<_, _>>()?;
    let reference = states.iter().find(|s| s.k2 > 0.0).ok_or(TuningError::AllInert)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &states {
        lo = lo.min(s.fs);
        hi = hi.max(s.fs);
    }
    Ok(100.0 * (hi - lo) / reference.fs)
}

/// Export a sweep as CSV, one row per (voltage, mode).
pub fn sweep_to_csv(sweep: &BiasSweepResult) -> String {
    let mut out = String::from("v_dc,mode_index,fs_hz,fp_hz,k2,q,c0_f\n");
    for row in &sweep.rows {
        for (i, s) in row.modes.iter().enumerate() {
            writeln!(
                out,
                "{:e},{},{:e},{:e},{:e},{:e},{:e}",
                row.v_dc, i, s.fs, s.fp, s.k2, s.q, row.c0
            )
            .expect("string write");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::synthesize;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn base_model() -> ResonatorModel {
        ResonatorModel::new(
            1e-12,
            0.0,
            vec![
                ModalBranch { fs: 300e6, k2: 0.08, q: 150.0 },
                ModalBranch { fs: 700e6, k2: 0.03, q: 150.0 },
            ],
        )
        .unwrap()
    }

    fn calibrated() -> TuningModel {
        TuningModel::calibrated(&base_model(), 20.0, 8.0, 50.0, 1000.0, 5e-4, 5e5, 0.2).unwrap()
    }

    #[test]
    fn coupling_endpoints_and_monotonicity() {
        let m = calibrated();
        assert_eq!(k2_of_bias(&m, 0, 0.0), 0.0);
        assert_relative_eq!(k2_of_bias(&m, 0, 20.0), 0.08, max_relative = 1e-12);
        assert_relative_eq!(k2_of_bias(&m, 1, 20.0), 0.03, max_relative = 1e-12);
        let below: Vec<f64> = (0..=200).map(|i| k2_of_bias(&m, 0, 0.1 * i as f64)).collect();
        assert!(below.windows(2).all(|w| w[1] > w[0]));
        let above: Vec<f64> = (0..=100).map(|i| k2_of_bias(&m, 0, 20.0 + 0.1 * i as f64)).collect();
        assert!(above.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn coupling_saturates_at_the_ceiling() {
        let mut m = calibrated();
        m.v_turn = 1e9;
        assert_eq!(k2_of_bias(&m, 0, 1e8), m.k2_max[0]);
    }

    #[test]
    fn resonance_pair_below_and_above_the_turn() {
        let m = calibrated();
        let fp0 = 708.46e6;
        let (fs0, fpv0) = fs_fp_of_bias(&m, 1, 0.0, fp0);
        assert_eq!(fs0, fp0);
        assert_eq!(fpv0, fp0);
        // fp pinned below the turn.
        for v in [1.0, 5.0, 12.0, 20.0] {
            let (fs, fp) = fs_fp_of_bias(&m, 1, v, fp0);
            assert_eq!(fp, fp0);
            assert!(fs < fp);
        }
        // Both rise above the turn.
        let mut prev = fs_fp_of_bias(&m, 1, 20.0, fp0);
        for i in 1..=50 {
            let cur = fs_fp_of_bias(&m, 1, 20.0 + 0.2 * i as f64, fp0);
            assert!(cur.0 > prev.0 && cur.1 > prev.1);
            prev = cur;
        }
    }

    #[test]
    fn fractional_series_drop_matches_the_closed_form() {
        // Coupling swept 0 -> 3% at fixed fp: the fractional fs drop has the
        // closed form 1 - (1 + (8/pi^2) k2)^(-1/2).
        let m = calibrated();
        let fp0 = 708.46e6;
        let (fs_off, _) = fs_fp_of_bias(&m, 1, 0.0, fp0);
        let (fs_on, _) = fs_fp_of_bias(&m, 1, 20.0, fp0);
        let drop = 1.0 - fs_on / fs_off;
        let closed = 1.0 - (1.0 + EIGHT_OVER_PI_SQ * 0.03).powf(-0.5);
        assert!((drop - closed).abs() < 1e-10, "drop {drop} vs closed form {closed}");
        assert!((100.0 * drop - 1.1).abs() < 0.3, "percent {} vs reported 1.1", 100.0 * drop);
    }

    #[test]
    fn quality_factor_endpoints_and_floor() {
        let m = calibrated();
        assert_eq!(q_of_bias(&m, 0.0), m.q0);
        assert_relative_eq!(q_of_bias(&m, 20.0), 150.0, max_relative = 1e-12);
        let below: Vec<f64> = (0..=100).map(|i| q_of_bias(&m, 0.2 * i as f64)).collect();
        assert!(below.windows(2).all(|w| w[1] >= w[0]));
        // Linear decay runs into the q0 floor well before 30 V at this rate.
        assert_eq!(q_of_bias(&m, 30.0), m.q0);
        assert!(q_of_bias(&m, 21.0) < 150.0);
    }

    #[test]
    fn capacitance_decreases_with_bias() {
        let m = calibrated();
        let geom = 1e-12 / m.eps_r0;
        assert_relative_eq!(c0_of_bias(&m, geom, 0.0), 1e-12, max_relative = 1e-12);
        let vals: Vec<f64> = (0..=1000).map(|i| c0_of_bias(&m, geom, 0.05 * i as f64)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        let mut frozen = m.clone();
        frozen.alpha_eps = 0.0;
        assert_eq!(c0_of_bias(&frozen, geom, 37.0), c0_of_bias(&frozen, geom, 0.0));
    }

    #[test]
    fn zero_bias_row_is_a_pure_capacitor() {
        let m = calibrated();
        let sweep = simulate_sweep(&m, &base_model(), &[0.0]).unwrap();
        assert_eq!(sweep.rows.len(), 1);
        let row = &sweep.rows[0];
        assert!(row.modes.iter().all(|s| s.k2 == 0.0 && s.fs == s.fp));
        let model = row.to_model().unwrap();
        assert!(model.branches.iter().all(|b| b.is_inert()));
        let freqs = crate::circuit::linspace(1e8, 1e9, 501);
        let fr = synthesize(&model, &freqs).unwrap();
        for (&f, y) in fr.freqs.iter().zip(&fr.y) {
            let ideal = std::f64::consts::TAU * f * row.c0;
            assert!((y.norm() - ideal).abs() <= 1e-12 * ideal);
            assert_eq!(y.re, 0.0);
        }
    }

    #[test]
    fn sweep_trace_has_the_kink_at_the_turn() {
        let m = calibrated();
        let volts: Vec<f64> = (0..=30).map(f64::from).collect();
        let sweep = simulate_sweep(&m, &base_model(), &volts).unwrap();
        assert_eq!(sweep.rows.len(), 31);
        let fs: Vec<f64> = sweep.rows.iter().map(|r| r.modes[0].fs).collect();
        // Strictly decreasing up to 20 V, strictly increasing after.
        assert!(fs[..21].windows(2).all(|w| w[1] < w[0]));
        assert!(fs[20..].windows(2).all(|w| w[1] > w[0]));
        // Calibration state reproduced at the turn.
        assert_relative_eq!(fs[20], 300e6, max_relative = 1e-12);
        assert_relative_eq!(sweep.rows[20].modes[1].fs, 700e6, max_relative = 1e-12);
        // fp constant below the turn.
        let fp: Vec<f64> = sweep.rows.iter().map(|r| r.modes[1].fp).collect();
        for w in fp[..21].windows(2) {
            assert!((w[1] - w[0]).abs() <= 1e-12 * w[0]);
        }
    }

    #[test]
    fn sweep_input_validation() {
        let m = calibrated();
        let base = base_model();
        assert!(matches!(simulate_sweep(&m, &base, &[]), Err(TuningError::BadVoltages)));
        assert!(matches!(
            simulate_sweep(&m, &base, &[0.0, 2.0, 1.0]),
            Err(TuningError::BadVoltages)
        ));
        assert!(matches!(simulate_sweep(&m, &base, &[-1.0, 2.0]), Err(TuningError::BadVoltages)));
        let single =
            ResonatorModel::new(1e-12, 0.0, vec![ModalBranch { fs: 300e6, k2: 0.08, q: 150.0 }])
                .unwrap();
        assert!(matches!(
            simulate_sweep(&m, &single, &[0.0, 1.0]),
            Err(TuningError::ModeCountMismatch { model: 2, base: 1 })
        ));
    }

    #[test]
    fn turning_point_recovered_exactly_on_noiseless_sweep() {
        let m = calibrated();
        let volts: Vec<f64> = (0..=30).map(f64::from).collect();
        let sweep = simulate_sweep(&m, &base_model(), &volts).unwrap();
        // The parallel frequency is piecewise linear by construction, so the
        // hinge fit is well-specified and lands on the grid point exactly.
        for metric in [SweepMetric::ParallelFrequency(0), SweepMetric::ParallelFrequency(1)] {
            let report = detect_turning_voltage(&sweep, metric).unwrap();
            let v = report.v_turn.expect("kink should be detected");
            assert!((v - 20.0).abs() <= 1.0, "detected {v} V");
            assert!(report.improvement > 0.5);
        }
    }

    #[test]
    fn planted_piecewise_linear_breakpoint_is_recovered_on_the_grid() {
        // Oracle: data built from the hinge model itself, breakpoint at 20 V.
        let rows: Vec<SweepRow> = (0..=30)
            .map(|i| {
                let v = f64::from(i);
                let fs = 309.57e6 - 6.2e4 * v + 2.3e6 * (v - 20.0).max(0.0);
                SweepRow {
                    v_dc: v,
                    modes: vec![ModeState { fs, fp: fs * 1.01, k2: 0.01, q: 100.0 }],
                    c0: 1e-12,
                }
            })
            .collect();
        let sweep = BiasSweepResult { rows };
        let report = detect_turning_voltage(&sweep, SweepMetric::SeriesFrequency(0)).unwrap();
        assert_eq!(report.v_turn, Some(20.0));
        assert_eq!(report.breakpoint_index, Some(20));
    }

    #[test]
    fn saturating_series_frequency_biases_the_breakpoint_low() {
        // fs(v) flattens as the alignment law saturates, so a two-segment
        // linear fit trades curvature against the kink and breaks early.
        // Documented behavior: the kink is found, a little below the truth.
        let m = calibrated();
        let volts: Vec<f64> = (0..=30).map(f64::from).collect();
        let sweep = simulate_sweep(&m, &base_model(), &volts).unwrap();
        let report = detect_turning_voltage(&sweep, SweepMetric::SeriesFrequency(0)).unwrap();
        let v = report.v_turn.expect("kink should still be detected");
        assert!((14.0..=20.0).contains(&v), "detected {v} V");
        assert!(report.improvement > 0.5);
    }

    #[test]
    fn linear_metric_reports_no_turning_point() {
        let rows: Vec<SweepRow> = (0..12)
            .map(|i| {
                let v = i as f64;
                SweepRow {
                    v_dc: v,
                    modes: vec![ModeState {
                        fs: 1e6 * (300.0 + 2.0 * v),
                        fp: 4e8,
                        k2: 0.01,
                        q: 100.0,
                    }],
                    c0: 1e-12,
                }
            })
            .collect();
        let sweep = BiasSweepResult { rows };
        let report = detect_turning_voltage(&sweep, SweepMetric::SeriesFrequency(0)).unwrap();
        assert_eq!(report.v_turn, None);
        assert!(report.improvement < 0.01);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let m = calibrated();
        let sweep = simulate_sweep(&m, &base_model(), &[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(
            detect_turning_voltage(&sweep, SweepMetric::Quality),
            Err(TuningError::InsufficientRows { rows: 5, need: 6 })
        ));
    }

    #[test]
    fn noisy_turning_point_within_one_volt() {
        let m = calibrated();
        let volts: Vec<f64> = (0..=30).map(f64::from).collect();
        let sweep = simulate_sweep(&m, &base_model(), &volts).unwrap();
        let fp: Vec<f64> = sweep.rows.iter().map(|r| r.modes[0].fp).collect();
        let span = fp.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - fp.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hits = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.01 * span).unwrap();
            let mut noisy = sweep.clone();
            for row in &mut noisy.rows {
                row.modes[0].fp += noise.sample(&mut rng);
            }
            let report = detect_turning_voltage(&noisy, SweepMetric::ParallelFrequency(0)).unwrap();
            if let Some(v) = report.v_turn {
                if (v - 20.0).abs() <= 1.0 {
                    hits += 1;
                }
            }
        }
        assert!(hits >= 19, "only {hits}/20 noisy trials within a volt");
    }

    #[test]
    fn tunability_below_the_turn_matches_the_reported_scale() {
        let m = calibrated();
        let volts: Vec<f64> = (0..=20).map(f64::from).collect();
        let sweep = simulate_sweep(&m, &base_model(), &volts).unwrap();
        let t = tunability(&sweep, 1).unwrap();
        assert!((t - 1.19).abs() < 0.05, "mode-2 tunability {t}%");
        // Doubling the ceiling increases the swing.
        let mut wider = m.clone();
        wider.k2_max[1] *= 2.0;
        let sweep2 = simulate_sweep(&wider, &base_model(), &volts).unwrap();
        assert!(tunability(&sweep2, 1).unwrap() > t);
    }

    #[test]
    fn tunability_degenerate_cases() {
        let mk_row = |v: f64, k2: f64| SweepRow {
            v_dc: v,
            modes: vec![ModeState { fs: 3e8, fp: 3.1e8, k2, q: 100.0 }],
            c0: 1e-12,
        };
        let constant = BiasSweepResult { rows: vec![mk_row(0.0, 0.01), mk_row(1.0, 0.01)] };
        assert_eq!(tunability(&constant, 0).unwrap(), 0.0);
        let inert = BiasSweepResult { rows: vec![mk_row(0.0, 0.0), mk_row(1.0, 0.0)] };
        assert!(matches!(tunability(&inert, 0), Err(TuningError::AllInert)));
        let short = BiasSweepResult { rows: vec![mk_row(0.0, 0.01)] };
        assert!(matches!(tunability(&short, 0), Err(TuningError::InsufficientRows { .. })));
    }

    #[test]
    fn model_validation_rejects_bad_fields() {
        let good = calibrated();
        let mut m = good.clone();
        m.v_c = 0.0;
        assert!(matches!(m.validate(), Err(TuningError::BadVc(_))));
        let mut m = good.clone();
        m.k2_max[0] = 1.0;
        assert!(matches!(m.validate(), Err(TuningError::BadK2Max { mode: 0, .. })));
        let mut m = good.clone();
        m.q_sat = m.q0 / 2.0;
        assert!(matches!(m.validate(), Err(TuningError::BadQEndpoints { .. })));
        let mut m = good;
        m.eps_r0 = 0.5;
        assert!(matches!(m.validate(), Err(TuningError::BadEpsR0(_))));
    }

    #[test]
    fn model_round_trips_through_json() {
        let m = calibrated();
        let text = serde_json::to_string(&m).unwrap();
        let back: TuningModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn sweep_csv_layout() {
        let m = calibrated();
        let sweep = simulate_sweep(&m, &base_model(), &[0.0, 10.0, 20.0]).unwrap();
        let csv = sweep_to_csv(&sweep);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "v_dc,mode_index,fs_hz,fp_hz,k2,q,c0_f");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[1].starts_with("0e0,0,"));
        assert!(lines[4].ends_with(&format!("{:e}", sweep.rows[1].c0)));
    }
}
