//! Inverse path: resonance detection, 3-dB quality factors, and
//! damped-least-squares equivalent-circuit fits.
//!
//! Peak work happens on the baseline-subtracted magnitude
//! `D(f) = |Y(f) - j w c0_est|` rather than on raw `|Y|`. The static
//! susceptance both shifts the raw magnitude maximum off the series
//! resonance (by roughly `(pi^2/8)/(k2 q)` half-widths) and widens the raw
//! 3-dB interval; subtracting the fitted baseline restores the symmetric
//! Lorentzian of the motional branch, which peaks at `fs` and has the exact
//! `fs/Q` half-power width. Antiresonances are located on raw `|Y|`, where
//! the static branch provides the cancellation that creates the dip.
//!
//! The circuit fit is a Levenberg-Marquardt descent on the stacked
//! real/imaginary residuals. Positive parameters (`c0`, per-branch
//! `fs`, `k2`, `q`) are optimized in log space; the optional series
//! resistance stays linear and is clamped at zero. Inert branches are
//! frozen, not optimized.

use crate::circuit::{parallel_resonance, FrequencyResponse, ModalBranch, ResonatorModel};
use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("resonance pair must satisfy fp > fs > 0, got fs={fs}, fp={fp}")]
    BadPair { fs: f64, fp: f64 },
    #[error("3-dB crossing not bracketed on the {side} side of the peak")]
    NotBracketed { side: &'static str },
    #[error("peak spans only {samples} grid samples; too coarse to measure a 3-dB width")]
    TooCoarse { samples: usize },
    #[error("frequency {fs} Hz lies outside the response grid")]
    OutOfGrid { fs: f64 },
    #[error("response holds {len} points; need at least {need}")]
    TooFewPoints { len: usize, need: usize },
    #[error("initial model has {got} branches, fit was asked for {want}")]
    InitSizeMismatch { got: usize, want: usize },
    #[error(transparent)]
    Circuit(#[from] crate::circuit::CircuitError),
}

/// A detected series/parallel resonance pair with the magnitudes at both
/// extrema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonancePair {
    /// Series resonance (motional peak), Hz.
    pub fs: f64,
    /// Parallel resonance (admittance dip), Hz.
    pub fp: f64,
    /// |Y| at the peak, S.
    pub peak_mag: f64,
    /// |Y| at the dip, S.
    pub dip_mag: f64,
}

impl ResonancePair {
    pub fn new(fs: f64, fp: f64, peak_mag: f64, dip_mag: f64) -> Result<Self, ExtractError> {
        if !(fs > 0.0 && fp > fs) {
            return Err(ExtractError::BadPair { fs, fp });
        }
        Ok(Self { fs, fp, peak_mag, dip_mag })
    }
}

/// Result of a resonance scan: pairs in ascending frequency order plus
/// human-readable notes about anything that was dropped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResonanceScan {
    pub pairs: Vec<ResonancePair>,
    pub diagnostics: Vec<String>,
}

/// Coupling from a resonance pair: `k2 = (pi^2/8)(fp^2/fs^2 - 1)`.
pub fn k2_from_pair(fs: f64, fp: f64) -> Result<f64, ExtractError> {
    if !(fs > 0.0 && fp > fs) {
        return Err(ExtractError::BadPair { fs, fp });
    }
    Ok(crate::circuit::coupling_from_pair(fs, fp))
}

/// Robust static-capacitance estimate: the median of `Im(Y)/w` over the
/// grid. Resonant regions perturb `Im(Y)/w` in both directions, so the
/// median tracks the capacitive floor.
pub fn estimate_c0(fr: &FrequencyResponse) -> f64 {
    let mut ratios: Vec<f64> = fr.freqs.iter().zip(&fr.y).map(|(&f, y)| y.im / (TAU * f)).collect();
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    let median = if n % 2 == 1 { ratios[n / 2] } else { 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]) };
    if median > 0.0 && median.is_finite() {
        return median;
    }
    // Pathological data (inductive or empty floor): fall back to the mean
    // magnitude slope.
    let mean: f64 = fr.freqs.iter().zip(&fr.y).map(|(&f, y)| y.norm() / (TAU * f)).sum::<f64>()
        / fr.len() as f64;
    mean.max(f64::MIN_POSITIVE)
}

/// Parabolic vertex through three samples; returns (x*, y*) clamped to the
/// outer abscissae. Falls back to the middle sample when the points are
/// collinear or curve the wrong way.
fn refine_extremum(x: [f64; 3], y: [f64; 3], maximum: bool) -> (f64, f64) {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (0.5 * (x[2] - x[0]));
    let ok = if maximum { curv < 0.0 } else { curv > 0.0 };
    if !ok || !curv.is_finite() {
        return (x[1], y[1]);
    }
    // Vertex of the interpolating parabola (zero of its derivative).
    let xv = (0.5 * (x[0] + x[1]) - d1 / curv).clamp(x[0], x[2]);
    let yv = {
        // Evaluate the same quadratic at the vertex via Newton form.
        let f01 = d1;
        let f012 = curv / 2.0;
        y[0] + f01 * (xv - x[0]) + f012 * (xv - x[0]) * (xv - x[1])
    };
    (xv, yv)
}

/// Half-width (in samples) a point must dominate to count as a local
/// extremum; rejects noise-split double peaks.
const DOMINANCE: usize = 8;

fn is_window_max(d: &[f64], i: usize) -> bool {
    if i == 0 || i + 1 == d.len() {
        return false;
    }
    if !(d[i] > d[i - 1] && d[i] >= d[i + 1]) {
        return false;
    }
    let lo = i.saturating_sub(DOMINANCE);
    let hi = (i + DOMINANCE).min(d.len() - 1);
    (lo..=hi).all(|j| d[j] <= d[i])
}

fn is_window_min(d: &[f64], i: usize, lo_bound: usize, hi_bound: usize) -> bool {
    if i <= lo_bound || i >= hi_bound {
        return false;
    }
    if !(d[i] < d[i - 1] && d[i] <= d[i + 1]) {
        return false;
    }
    let lo = i.saturating_sub(DOMINANCE).max(lo_bound);
    let hi = (i + DOMINANCE).min(hi_bound);
    (lo..=hi).all(|j| d[j] >= d[i])
}

/// Locate series/parallel resonance pairs.
///
/// Series resonances are window-dominant maxima of the baseline-subtracted
/// magnitude whose raw `|Y|` exceeds the capacitive baseline by at least
/// `min_prominence_db`; each is paired with the first subsequent
/// window-dominant minimum of raw `|Y|`. Both extrema are refined to
/// sub-sample positions with a three-point parabola. An empty result is not
/// an error; unpairable peaks are dropped with a diagnostic.
pub fn find_resonances(fr: &FrequencyResponse, min_prominence_db: f64) -> ResonanceScan {
    let n = fr.len();
    let mut scan = ResonanceScan::default();
    if n < 5 {
        return scan;
    }
    let c0 = estimate_c0(fr);
    let d: Vec<f64> = fr
        .freqs
        .iter()
        .zip(&fr.y)
        .map(|(&f, y)| (y - Complex64::new(0.0, TAU * f * c0)).norm())
        .collect();
    let raw: Vec<f64> = fr.y.iter().map(|y| y.norm()).collect();

    let peaks: Vec<usize> = (1..n - 1)
        .filter(|&i| {
            is_window_max(&d, i) && {
                let baseline = TAU * fr.freqs[i] * c0;
                20.0 * (raw[i] / baseline).log10() >= min_prominence_db
            }
        })
        .collect();

    for (pi, &i) in peaks.iter().enumerate() {
        let (fs, _) = refine_extremum(
            [fr.freqs[i - 1], fr.freqs[i], fr.freqs[i + 1]],
            [d[i - 1], d[i], d[i + 1]],
            true,
        );
        // Peak magnitude on raw |Y|, whose maximum can sit a sample or two
        // away from the motional peak.
        let j = (i.saturating_sub(3)..=(i + 3).min(n - 1))
            .max_by(|&a, &b| raw[a].total_cmp(&raw[b]))
            .unwrap();
        let peak_mag = if j > 0 && j < n - 1 {
            refine_extremum(
                [fr.freqs[j - 1], fr.freqs[j], fr.freqs[j + 1]],
                [raw[j - 1], raw[j], raw[j + 1]],
                true,
            )
            .1
        } else {
            raw[j]
        };

        let hi_bound = if pi + 1 < peaks.len() { peaks[pi + 1] } else { n - 1 };
        let dip = (i + 1..hi_bound).find(|&k| is_window_min(&raw, k, i, hi_bound));
        let Some(k) = dip else {
            scan.diagnostics.push(format!(
                "peak at {fs:.6e} Hz: no antiresonance before the next peak; dropped"
            ));
            continue;
        };
        let (fp, dip_mag) = refine_extremum(
            [fr.freqs[k - 1], fr.freqs[k], fr.freqs[k + 1]],
            [raw[k - 1], raw[k], raw[k + 1]],
            false,
        );
        match ResonancePair::new(fs, fp, peak_mag, dip_mag) {
            Ok(p) => scan.pairs.push(p),
            Err(e) => scan.diagnostics.push(format!("pair near {fs:.6e} Hz rejected: {e}")),
        }
    }
    scan
}

/// Quality factor from the 3-dB width of the baseline-subtracted magnitude
/// around the series peak: `Q = fs / (f_hi - f_lo)` where the crossings of
/// `peak/sqrt(2)` are found by linear interpolation.
pub fn q_3db(fr: &FrequencyResponse, fs: f64) -> Result<f64, ExtractError> {
    let n = fr.len();
    if n < 5 {
        return Err(ExtractError::TooFewPoints { len: n, need: 5 });
    }
    if fs < fr.freqs[0] || fs > fr.freqs[n - 1] {
        return Err(ExtractError::OutOfGrid { fs });
    }
    let c0 = estimate_c0(fr);
    let d: Vec<f64> = fr
        .freqs
        .iter()
        .zip(&fr.y)
        .map(|(&f, y)| (y - Complex64::new(0.0, TAU * f * c0)).norm())
        .collect();
    // Nearest grid index, then hill-climb to the motional peak.
    let mut i = match fr.freqs.binary_search_by(|f| f.total_cmp(&fs)) {
        Ok(i) => i,
        Err(i) => i.min(n - 1),
    };
    if i > 0 && (fr.freqs[i] - fs).abs() > (fs - fr.freqs[i - 1]).abs() {
        i -= 1;
    }
    while i + 1 < n && d[i + 1] > d[i] {
        i += 1;
    }
    while i > 0 && d[i - 1] > d[i] {
        i -= 1;
    }
    let peak = if i > 0 && i < n - 1 {
        refine_extremum(
            [fr.freqs[i - 1], fr.freqs[i], fr.freqs[i + 1]],
            [d[i - 1], d[i], d[i + 1]],
            true,
        )
        .1
    } else {
        d[i]
    };
    let level = peak / std::f64::consts::SQRT_2;

    let Some(kr) = (i + 1..n).find(|&k| d[k] < level) else {
        return Err(ExtractError::NotBracketed { side: "high-frequency" });
    };
    let Some(kl) = (0..i).rev().find(|&k| d[k] < level) else {
        return Err(ExtractError::NotBracketed { side: "low-frequency" });
    };
    let inside = kr - kl - 1;
    if inside < 3 {
        return Err(ExtractError::TooCoarse { samples: inside });
    }
    let interp = |a: usize, b: usize| {
        let t = (level - d[a]) / (d[b] - d[a]);
        fr.freqs[a] + t * (fr.freqs[b] - fr.freqs[a])
    };
    let f_hi = interp(kr - 1, kr);
    let f_lo = interp(kl + 1, kl);
    Ok(fs / (f_hi - f_lo))
}

/// Outcome of [`fit_mbvd`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ResonatorModel,
    /// Root-mean-square of `|Y_fit - Y_data|` over the grid, S.
    pub residual_rms: f64,
    /// Outer (Jacobian) iterations spent.
    pub iterations: usize,
    pub converged: bool,
    /// Cost (sum of squared residuals) after the initial point and each
    /// accepted step; non-increasing by construction.
    pub cost_trace: Vec<f64>,
    /// Indices of branches that were frozen inert (no resonance to seed
    /// them).
    pub inert_branches: Vec<usize>,
    pub diagnostics: Vec<String>,
}

impl FitReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Fit an `n_branches`-mode circuit to a measured response.
///
/// With no initial model the fit seeds itself: `c0` from the capacitive
/// floor, one branch per detected resonance pair (coupling from the pair,
/// quality factor from the 3-dB width), series resistance zero. Surplus
/// branches beyond the detected pairs are frozen inert and reported.
/// Convergence: relative cost decrease below 1e-10 or step norm below
/// 1e-12, capped at 500 iterations.
pub fn fit_mbvd(
    fr: &FrequencyResponse,
    n_branches: usize,
    init: Option<&ResonatorModel>,
) -> Result<FitReport, ExtractError> {
    let n = fr.len();
    if n < 8 {
        return Err(ExtractError::TooFewPoints { len: n, need: 8 });
    }
    let mut diagnostics = Vec::new();
    let mut inert_branches = Vec::new();

    let seed_model = match init {
        Some(m) => {
            if m.branches.len() != n_branches {
                return Err(ExtractError::InitSizeMismatch {
                    got: m.branches.len(),
                    want: n_branches,
                });
            }
            m.validate()?;
            m.clone()
        }
        None => {
            let c0 = estimate_c0(fr);
            let mut scan = find_resonances(fr, 3.0);
            if scan.pairs.is_empty() {
                // Weak modes barely clear the capacitive floor; retry with a
                // permissive threshold before giving up.
                scan = find_resonances(fr, 0.1);
            }
            let mut pairs = scan.pairs;
            if pairs.len() > n_branches {
                pairs.sort_by(|a, b| b.peak_mag.total_cmp(&a.peak_mag));
                pairs.truncate(n_branches);
                pairs.sort_by(|a, b| a.fs.total_cmp(&b.fs));
                diagnostics.push(format!(
                    "detected more resonances than branches; kept the {n_branches} strongest"
                ));
            }
            let mut branches = Vec::with_capacity(n_branches);
            for p in &pairs {
                let k2 = k2_from_pair(p.fs, p.fp)?.clamp(1e-6, 0.5);
                let q = q_3db(fr, p.fs).unwrap_or(100.0).clamp(5.0, 1e7);
                branches.push(ModalBranch { fs: p.fs, k2, q });
            }
            let f_top = fr.freqs[n - 1];
            for s in pairs.len()..n_branches {
                inert_branches.push(s);
                diagnostics
                    .push(format!("branch {s}: no resonance detected to seed it; frozen inert"));
                branches.push(ModalBranch {
                    fs: f_top * (2.0 + 0.1 * (s - pairs.len()) as f64),
                    k2: 0.0,
                    q: 100.0,
                });
            }
            ResonatorModel { c0, rs_shunt: 0.0, branches }
        }
    };
    if init.is_some() {
        for (i, b) in seed_model.branches.iter().enumerate() {
            if b.is_inert() {
                inert_branches.push(i);
            }
        }
    }

    let engine = LmProblem::new(fr, &seed_model, &inert_branches);
    let outcome = engine.run(500);
    let model = engine.model_from(&outcome.theta);
    let residual_rms = (outcome.cost / n as f64).sqrt();
    if !outcome.converged {
        diagnostics.push(format!("fit stopped without convergence: {}", outcome.stop_reason));
    }
    Ok(FitReport {
        model,
        residual_rms,
        iterations: outcome.iterations,
        converged: outcome.converged,
        cost_trace: outcome.cost_trace,
        inert_branches,
        diagnostics,
    })
}

/// Damped least-squares engine for the circuit model. Parameter vector:
/// `[ln c0, rs, (ln fs, ln k2, ln q) per active branch]`.
struct LmProblem<'a> {
    fr: &'a FrequencyResponse,
    /// (branch index, frozen flag) in model order.
    frozen: Vec<bool>,
    template: ResonatorModel,
    /// Cost at which residuals are double-rounding noise on this data
    /// (relative residual ~1e-14); below it there is nothing left to fit.
    cost_floor: f64,
}

struct LmOutcome {
    theta: DVector<f64>,
    cost: f64,
    iterations: usize,
    converged: bool,
    cost_trace: Vec<f64>,
    stop_reason: String,
}

const MAX_K2: f64 = 0.95;

impl<'a> LmProblem<'a> {
    fn new(fr: &'a FrequencyResponse, seed: &ResonatorModel, inert: &[usize]) -> Self {
        let frozen = (0..seed.branches.len())
            .map(|i| inert.contains(&i) || seed.branches[i].is_inert())
            .collect();
        let data_ssq: f64 = fr.y.iter().map(|y| y.norm_sqr()).sum();
        Self { fr, frozen, template: seed.clone(), cost_floor: 1e-28 * data_ssq }
    }

    fn pack(&self) -> DVector<f64> {
        let mut v = vec![self.template.c0.ln(), self.template.rs_shunt];
        for (b, &frozen) in self.template.branches.iter().zip(&self.frozen) {
            if !frozen {
                v.push(b.fs.ln());
                v.push(b.k2.max(1e-12).ln());
                v.push(b.q.ln());
            }
        }
        DVector::from_vec(v)
    }

    fn model_from(&self, theta: &DVector<f64>) -> ResonatorModel {
        let mut m = self.template.clone();
        m.c0 = theta[0].exp();
        m.rs_shunt = theta[1].max(0.0);
        let mut k = 2;
        for (i, frozen) in self.frozen.iter().enumerate() {
            if !frozen {
                m.branches[i].fs = theta[k].exp();
                m.branches[i].k2 = theta[k + 1].exp().min(MAX_K2);
                m.branches[i].q = theta[k + 2].exp();
                k += 3;
            }
        }
        m
    }

    fn residuals(&self, theta: &DVector<f64>) -> Vec<f64> {
        let m = self.model_from(theta);
        let mut r = Vec::with_capacity(2 * self.fr.len());
        for (&f, y) in self.fr.freqs.iter().zip(&self.fr.y) {
            let delta = m.admittance(f) - y;
            r.push(delta.re);
            r.push(delta.im);
        }
        r
    }

    fn cost_of(r: &[f64]) -> f64 {
        let c: f64 = r.iter().map(|v| v * v).sum();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }

    fn run(&self, max_iter: usize) -> LmOutcome {
        let mut theta = self.pack();
        let p = theta.len();
        let mut r0 = self.residuals(&theta);
        let mut cost = Self::cost_of(&r0);
        let mut trace = vec![cost];
        let mut lambda = 1e-3;
        let mut stop_reason = String::from("iteration cap reached");
        let mut converged = false;
        let mut iterations = 0;

        for _ in 0..max_iter {
            iterations += 1;
            if !cost.is_finite() {
                stop_reason = "cost is not finite at the current parameters".into();
                break;
            }
            if cost <= self.cost_floor {
                converged = true;
                stop_reason = "residuals at numerical noise floor".into();
                break;
            }
            // Forward-difference Jacobian columns.
            let m = r0.len();
            let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
            for j in 0..p {
                let h = if j == 1 {
                    1e-6 * theta[j].abs().max(1.0)
                } else {
                    1e-6 * theta[j].abs().max(1e-3)
                };
                let mut th = theta.clone();
                th[j] += h;
                let rh = self.residuals(&th);
                cols.push((0..m).map(|i| (rh[i] - r0[i]) / h).collect());
            }
            let mut jtj = DMatrix::<f64>::zeros(p, p);
            let mut g = DVector::<f64>::zeros(p);
            for a in 0..p {
                for b in a..p {
                    let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
                    jtj[(a, b)] = dot;
                    jtj[(b, a)] = dot;
                }
                g[a] = cols[a].iter().zip(&r0).map(|(x, y)| x * y).sum();
            }

            let mut accepted = false;
            for _ in 0..60 {
                let mut damped = jtj.clone();
                for a in 0..p {
                    let d = jtj[(a, a)];
                    damped[(a, a)] = if d > 0.0 { d * (1.0 + lambda) } else { lambda.max(1e-12) };
                }
                let Some(chol) = Cholesky::new(damped) else {
                    lambda = (lambda * 10.0).min(1e14);
                    continue;
                };
                let delta = chol.solve(&(-&g));
                let mut trial = &theta + &delta;
                trial[1] = trial[1].max(0.0);
                let r_trial = self.residuals(&trial);
                let c_trial = Self::cost_of(&r_trial);
                if c_trial < cost {
                    let drop = cost - c_trial;
                    let step = delta.norm();
                    theta = trial;
                    r0 = r_trial;
                    let prev = cost;
                    cost = c_trial;
                    trace.push(cost);
                    lambda = (lambda / 3.0).max(1e-14);
                    accepted = true;
                    if drop <= 1e-10 * prev {
                        converged = true;
                        stop_reason = "relative cost decrease below 1e-10".into();
                    } else if step <= 1e-12 * (1.0 + theta.norm()) {
                        converged = true;
                        stop_reason = "step norm below 1e-12".into();
                    }
                    break;
                }
                lambda = (lambda * 10.0).min(1e14);
                if lambda >= 1e14 {
                    break;
                }
            }
            if converged {
                break;
            }
            if !accepted {
                // Damping maxed out without an acceptable step: stalled at a
                // point that meets no convergence criterion.
                stop_reason = "no descent step found at maximum damping".into();
                break;
            }
        }
        LmOutcome { theta, cost, iterations, converged, cost_trace: trace, stop_reason }
    }
}

/// Add seeded complex Gaussian noise with RMS magnitude
/// `relative_std * max|Y|`; used by the Monte-Carlo robustness checks and
/// the simulator's noise option.
pub fn add_complex_noise(fr: &mut FrequencyResponse, relative_std: f64, seed: u64) {
    let peak = fr.y.iter().map(|y| y.norm()).fold(0.0f64, f64::max);
    let sigma = relative_std * peak / std::f64::consts::SQRT_2;
    if sigma <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    for y in &mut fr.y {
        *y += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
    }
}

/// Convenience for tests and calibration: the exact parallel resonance the
/// synthesizer will produce for a branch.
pub fn expected_pair(branch: &ModalBranch) -> (f64, f64) {
    (branch.fs, parallel_resonance(branch))
}
