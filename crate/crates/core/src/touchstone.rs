//! Touchstone v1 ingestion: parse one- and two-port VNA exports, convert
//! S-parameters to admittance, and de-embed a series-through device.
//!
//! Scope is deliberately v1-only (the format bench VNAs emit by default):
//! `!` comment lines, a single `#` option line, then one data point per
//! line in the documented two-port column order S11 S21 S12 S22. Files
//! using Touchstone v2 bracket keywords are rejected with a clear error.
//!
//! The canonical writer always emits real/imaginary values in Hz with
//! shortest round-trip formatting, so `parse(write(n)) == n` holds exactly
//! and golden files are byte-stable. A device measured in series between
//! the two ports has branch admittance `-Y21`; reciprocity (`Y12 == Y21`)
//! is checked and asymmetry beyond 1% is flagged rather than fatal, since
//! real measurements are noisy.

use crate::circuit::{CircuitError, FrequencyResponse};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TouchstoneError {
    #[error("no option line ('#' ...) before the first data line")]
    MissingOptionLine,
    #[error("line {line}: second option line (only one '#' line is allowed)")]
    DuplicateOptionLine { line: usize },
    #[error("line {line}: bad option line: {message}")]
    BadOptionLine { line: usize, message: String },
    #[error(
        "line {line}: parameter type '{param}' unsupported; only S-parameter files are accepted"
    )]
    UnsupportedParameter { line: usize, param: String },
    #[error("line {line}: bracket keyword found; Touchstone v2 is not supported")]
    UnsupportedVersion { line: usize },
    #[error("line {line}: cannot parse '{token}' as a number")]
    BadNumber { line: usize, token: String },
    #[error(
        "line {line}: {got} values per line fits neither a 1-port (3) nor a 2-port (9) record"
    )]
    WrongValueCount { line: usize, got: usize },
    #[error("line {line}: {got} values, but earlier lines established {want} per record")]
    InconsistentRow { line: usize, got: usize, want: usize },
    #[error("line {line}: frequency does not increase over the previous point")]
    NonMonotonicFrequency { line: usize },
    #[error("file contains no data lines")]
    NoData,
    #[error("reference impedance must be positive, got {z0}")]
    BadReference { z0: f64 },
    #[error("(I + S) is singular at {freq} Hz; admittance undefined there")]
    SingularAtFrequency { freq: f64 },
    #[error("operation needs {need}-port data, got {got}-port")]
    WrongPortCount { need: usize, got: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Value encoding declared by a file's option line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceFormat {
    /// Real/imaginary pairs.
    Ri,
    /// Magnitude and angle in degrees.
    Ma,
    /// Magnitude in dB (20 log10) and angle in degrees.
    Db,
}

/// Frequency unit declared by a file's option line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreqUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FreqUnit {
    pub fn multiplier(self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::KHz => 1e3,
            FreqUnit::MHz => 1e6,
            FreqUnit::GHz => 1e9,
        }
    }
}

/// A parsed network: frequencies normalized to Hz, per-point S-matrices in
/// row-major order, plus what the source file declared (format, unit) and
/// its comments, so a rewrite can be compared against the original.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkData {
    /// Hz, strictly increasing.
    pub freqs: Vec<f64>,
    /// Per point: `n_ports²` entries, row-major (2-port: S11 S12 S21 S22).
    pub s: Vec<Vec<Complex64>>,
    /// Reference impedance, ohms.
    pub z0: f64,
    pub n_ports: usize,
    /// Encoding the source file used (the canonical writer always emits RI).
    pub source_format: SourceFormat,
    /// Unit the source file declared (the canonical writer always emits Hz).
    pub freq_unit_declared: FreqUnit,
    /// Comment lines, stored trimmed, in order of appearance.
    pub comments: Vec<String>,
}

impl NetworkData {
    pub fn validate(&self) -> Result<(), TouchstoneError> {
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(TouchstoneError::BadReference { z0: self.z0 });
        }
        if self.n_ports != 1 && self.n_ports != 2 {
            return Err(TouchstoneError::WrongPortCount { need: 2, got: self.n_ports });
        }
        if self.freqs.is_empty() {
            return Err(TouchstoneError::NoData);
        }
        if self.freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(TouchstoneError::NonMonotonicFrequency { line: 0 });
        }
        let want = self.n_ports * self.n_ports;
        if self.s.len() != self.freqs.len() || self.s.iter().any(|m| m.len() != want) {
            return Err(TouchstoneError::InconsistentRow { line: 0, got: self.s.len(), want });
        }
        Ok(())
    }

    /// Physical equality: same ports, reference, frequencies, and S values.
    /// Source format, declared unit, and comments are bookkeeping and do not
    /// participate — a canonical rewrite of an MA file is the same network.
    pub fn same_network(&self, other: &Self) -> bool {
        self.n_ports == other.n_ports
            && self.z0 == other.z0
            && self.freqs == other.freqs
            && self.s == other.s
    }
}

/// Map between file value order and internal row-major order. The 2-port
/// permutation (S11 S21 S12 S22 ↔ S11 S12 S21 S22) swaps the middle pair,
/// so it is its own inverse and serves both directions.
fn reorder(values: &[Complex64], n_ports: usize) -> Vec<Complex64> {
    match n_ports {
        1 => values.to_vec(),
        2 => vec![values[0], values[2], values[1], values[3]],
        _ => unreachable!("ports limited to 1 or 2 at parse time"),
    }
}

struct OptionLine {
    unit: FreqUnit,
    format: SourceFormat,
    z0: f64,
}

fn parse_option(rest: &str, line: usize) -> Result<OptionLine, TouchstoneError> {
    // Touchstone v1 defaults: GHz S MA R 50.
    let mut unit = FreqUnit::GHz;
    let mut format = SourceFormat::Ma;
    let mut z0: f64 = 50.0;
    let mut tokens = rest.split_whitespace().peekable();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_lowercase().as_str() {
            "hz" => unit = FreqUnit::Hz,
            "khz" => unit = FreqUnit::KHz,
            "mhz" => unit = FreqUnit::MHz,
            "ghz" => unit = FreqUnit::GHz,
            "ri" => format = SourceFormat::Ri,
            "ma" => format = SourceFormat::Ma,
            "db" => format = SourceFormat::Db,
            "s" => {}
            "y" | "z" | "h" | "g" => {
                return Err(TouchstoneError::UnsupportedParameter {
                    line,
                    param: tok.to_ascii_uppercase(),
                })
            }
            "r" => {
                let Some(val) = tokens.next() else {
                    return Err(TouchstoneError::BadOptionLine {
                        line,
                        message: "'R' with no impedance value".into(),
                    });
                };
                z0 = val.parse().map_err(|_| TouchstoneError::BadOptionLine {
                    line,
                    message: format!("cannot parse reference impedance '{val}'"),
                })?;
            }
            other => {
                return Err(TouchstoneError::BadOptionLine {
                    line,
                    message: format!("unrecognized token '{other}'"),
                })
            }
        }
    }
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(TouchstoneError::BadReference { z0 });
    }
    Ok(OptionLine { unit, format, z0 })
}

fn decode(format: SourceFormat, a: f64, b: f64) -> Complex64 {
    match format {
        SourceFormat::Ri => Complex64::new(a, b),
        SourceFormat::Ma => Complex64::from_polar(a, b.to_radians()),
        SourceFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
    }
}

/// Parse Touchstone v1 text. Errors carry 1-based line numbers.
pub fn parse(text: &str) -> Result<NetworkData, TouchstoneError> {
    let mut comments = Vec::new();
    let mut option: Option<OptionLine> = None;
    let mut freqs: Vec<f64> = Vec::new();
    let mut s: Vec<Vec<Complex64>> = Vec::new();
    let mut n_ports = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut body = raw;
        if let Some(pos) = body.find('!') {
            comments.push(body[pos + 1..].trim().to_string());
            body = &body[..pos];
        }
        let t = body.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('[') {
            return Err(TouchstoneError::UnsupportedVersion { line });
        }
        if let Some(rest) = t.strip_prefix('#') {
            if option.is_some() {
                return Err(TouchstoneError::DuplicateOptionLine { line });
            }
            option = Some(parse_option(rest, line)?);
            continue;
        }
        let Some(opt) = option.as_ref() else {
            return Err(TouchstoneError::MissingOptionLine);
        };
        let mut vals = Vec::new();
        for token in t.split_whitespace() {
            let v: f64 = token
                .parse()
                .map_err(|_| TouchstoneError::BadNumber { line, token: token.to_string() })?;
            vals.push(v);
        }
        if n_ports == 0 {
            n_ports = match vals.len() {
                3 => 1,
                9 => 2,
                got => return Err(TouchstoneError::WrongValueCount { line, got }),
            };
        }
        let want = 1 + 2 * n_ports * n_ports;
        if vals.len() != want {
            return Err(TouchstoneError::InconsistentRow { line, got: vals.len(), want });
        }
        let f = vals[0] * opt.unit.multiplier();
        if let Some(&prev) = freqs.last() {
            if !(f > prev) {
                return Err(TouchstoneError::NonMonotonicFrequency { line });
            }
        }
        let file_order: Vec<Complex64> =
            vals[1..].chunks_exact(2).map(|p| decode(opt.format, p[0], p[1])).collect();
        freqs.push(f);
        s.push(reorder(&file_order, n_ports));
    }

    let Some(opt) = option else {
        return Err(TouchstoneError::MissingOptionLine);
    };
    if freqs.is_empty() {
        return Err(TouchstoneError::NoData);
    }
    Ok(NetworkData {
        freqs,
        s,
        z0: opt.z0,
        n_ports,
        source_format: opt.format,
        freq_unit_declared: opt.unit,
        comments,
    })
}

/// Render a network as canonical Touchstone v1: comments first, then
/// `# Hz S RI R <z0>`, then one point per line with shortest round-trip
/// number formatting. `parse(write(n))` reproduces `n`'s physical fields
/// bit-exactly (with format and unit normalized to RI/Hz); writing a
/// canonically parsed network again is byte-identical.
///
/// Panics if the network violates its own invariants.
pub fn write(n: &NetworkData) -> String {
    n.validate().expect("network invariants must hold before writing");
    let mut out = String::new();
    for c in &n.comments {
        let c = c.trim();
        if c.is_empty() {
            out.push_str("!\n");
        } else {
            writeln!(out, "! {c}").expect("string write");
        }
    }
    writeln!(out, "# Hz S RI R {}", n.z0).expect("string write");
    for (f, mat) in n.freqs.iter().zip(&n.s) {
        write!(out, "{f:e}").expect("string write");
        for v in reorder(mat, n.n_ports) {
            write!(out, " {:e} {:e}", v.re, v.im).expect("string write");
        }
        out.push('\n');
    }
    out
}

/// Per-point admittance matrices derived from a network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrices {
    /// Hz, strictly increasing.
    pub freqs: Vec<f64>,
    /// Row-major, `n_ports²` entries per point, siemens.
    pub mats: Vec<Vec<Complex64>>,
    pub n_ports: usize,
}

fn mat_inverse(m: &[Complex64], n: usize) -> Option<Vec<Complex64>> {
    match n {
        1 => {
            if m[0].norm() == 0.0 {
                return None;
            }
            Some(vec![m[0].inv()])
        }
        2 => {
            let det = m[0] * m[3] - m[1] * m[2];
            if det.norm() == 0.0 {
                return None;
            }
            Some(vec![m[3] / det, -m[1] / det, -m[2] / det, m[0] / det])
        }
        _ => unreachable!("ports limited to 1 or 2"),
    }
}

fn mat_mul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[i * n + j] += a[i * n + k] * b[k * n + j];
            }
        }
    }
    out
}

fn identity(n: usize) -> Vec<Complex64> {
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        m[i * n + i] = Complex64::new(1.0, 0.0);
    }
    m
}

fn mat_add(a: &[Complex64], b: &[Complex64], sign: f64) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x + y * sign).collect()
}

/// Convert S to Y per point: `Y = (1/z0)(I + S)⁻¹(I − S)`. A singular
/// `(I + S)` (a short at the reference plane) reports the offending
/// frequency.
pub fn s_to_y(n: &NetworkData) -> Result<AdmittanceMatrices, TouchstoneError> {
    n.validate()?;
    let dim = n.n_ports;
    let eye = identity(dim);
    let mut mats = Vec::with_capacity(n.s.len());
    for (&f, s) in n.freqs.iter().zip(&n.s) {
        let plus = mat_add(&eye, s, 1.0);
        let minus = mat_add(&eye, s, -1.0);
        let Some(inv) = mat_inverse(&plus, dim) else {
            return Err(TouchstoneError::SingularAtFrequency { freq: f });
        };
        let y: Vec<Complex64> = mat_mul(&inv, &minus, dim).into_iter().map(|v| v / n.z0).collect();
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(TouchstoneError::SingularAtFrequency { freq: f });
        }
        mats.push(y);
    }
    Ok(AdmittanceMatrices { freqs: n.freqs.clone(), mats, n_ports: dim })
}

/// Convert Y back to S per point: `S = (I − z0·Y)(I + z0·Y)⁻¹`.
pub fn y_to_s(y: &AdmittanceMatrices, z0: f64) -> Result<Vec<Vec<Complex64>>, TouchstoneError> {
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(TouchstoneError::BadReference { z0 });
    }
    let dim = y.n_ports;
    let eye = identity(dim);
    let mut out = Vec::with_capacity(y.mats.len());
    for (&f, m) in y.freqs.iter().zip(&y.mats) {
        let zy: Vec<Complex64> = m.iter().map(|v| v * z0).collect();
        let plus = mat_add(&eye, &zy, 1.0);
        let minus = mat_add(&eye, &zy, -1.0);
        let Some(inv) = mat_inverse(&plus, dim) else {
            return Err(TouchstoneError::SingularAtFrequency { freq: f });
        };
        out.push(mat_mul(&minus, &inv, dim));
    }
    Ok(out)
}

/// Reciprocity bookkeeping from a series-through de-embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReciprocityReport {
    pub points: usize,
    /// Points where |Y12 − Y21| exceeds 1% of the larger magnitude.
    pub flagged: usize,
    pub worst_asymmetry: f64,
    pub worst_frequency: Option<f64>,
}

/// Asymmetry threshold above which a point is flagged as non-reciprocal.
pub const RECIPROCITY_TOL: f64 = 0.01;

/// Extract the branch admittance of a two-terminal device measured in
/// series between ports 1 and 2: `Y_device = −Y21`. Exact for an ideal
/// series element, whose two-port Y-matrix is `[[Y, −Y], [−Y, Y]]`.
/// Non-reciprocal points are flagged in the report, not fatal.
pub fn series_through_admittance(
    y: &AdmittanceMatrices,
) -> Result<(FrequencyResponse, ReciprocityReport), TouchstoneError> {
    if y.n_ports != 2 {
        return Err(TouchstoneError::WrongPortCount { need: 2, got: y.n_ports });
    }
    let mut report = ReciprocityReport {
        points: y.mats.len(),
        flagged: 0,
        worst_asymmetry: 0.0,
        worst_frequency: None,
    };
    let mut device = Vec::with_capacity(y.mats.len());
    for (&f, m) in y.freqs.iter().zip(&y.mats) {
        let (y12, y21) = (m[1], m[2]);
        let scale = y12.norm().max(y21.norm());
        let asym = if scale > 0.0 { (y12 - y21).norm() / scale } else { 0.0 };
        if asym > report.worst_asymmetry {
            report.worst_asymmetry = asym;
            report.worst_frequency = Some(f);
        }
        if asym > RECIPROCITY_TOL {
            report.flagged += 1;
        }
        device.push(-y21);
    }
    let fr = FrequencyResponse::new(y.freqs.clone(), device)?;
    Ok((fr, report))
}

/// Embed a device admittance as an ideal series-through two-port and return
/// the network at reference `z0` — the synthetic analog of measuring the
/// device on a VNA.
pub fn embed_series_through(
    fr: &FrequencyResponse,
    z0: f64,
) -> Result<NetworkData, TouchstoneError> {
    let mats: Vec<Vec<Complex64>> = fr.y.iter().map(|&yd| vec![yd, -yd, -yd, yd]).collect();
    let y = AdmittanceMatrices { freqs: fr.freqs.clone(), mats, n_ports: 2 };
    let s = y_to_s(&y, z0)?;
    Ok(NetworkData {
        freqs: fr.freqs.clone(),
        s,
        z0,
        n_ports: 2,
        source_format: SourceFormat::Ri,
        freq_unit_declared: FreqUnit::Hz,
        comments: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{linspace, synthesize, ModalBranch, ResonatorModel};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matched_load_one_port() {
        let n = parse("# GHz S RI R 50\n1.0 0.0 0.0\n").unwrap();
        assert_eq!(n.n_ports, 1);
        assert_eq!(n.freqs, vec![1e9]);
        assert_eq!(n.s[0][0], Complex64::new(0.0, 0.0));
        assert_eq!(n.z0, 50.0);
        assert_eq!(n.source_format, SourceFormat::Ri);
        assert_eq!(n.freq_unit_declared, FreqUnit::GHz);
    }

    #[test]
    fn polar_ninety_degrees_is_j() {
        let n = parse("# MHz S MA R 50\n5 1 90\n").unwrap();
        assert_eq!(n.freqs, vec![5e6]);
        let s = n.s[0][0];
        assert!(s.re.abs() < 1e-15);
        assert_eq!(s.im, 1.0);
    }

    #[test]
    fn db_format_decodes_magnitude() {
        let db = 20.0 * 2.0f64.log10();
        let text = format!("# Hz S DB R 50\n10 {db} 0\n");
        let n = parse(&text).unwrap();
        assert_relative_eq!(n.s[0][0].re, 2.0, max_relative = 1e-12);
        assert_eq!(n.s[0][0].im, 0.0);
    }

    #[test]
    fn option_defaults_are_ghz_ma_fifty_ohms() {
        let n = parse("#\n1 0 0\n").unwrap();
        assert_eq!(n.freq_unit_declared, FreqUnit::GHz);
        assert_eq!(n.source_format, SourceFormat::Ma);
        assert_eq!(n.z0, 50.0);
        assert_eq!(n.freqs, vec![1e9]);
    }

    #[test]
    fn two_port_column_order_is_s11_s21_s12_s22() {
        let text = "# Hz S RI R 50\n1 0.11 0 0.21 0 0.12 0 0.22 0\n";
        let n = parse(text).unwrap();
        assert_eq!(n.n_ports, 2);
        // Internal layout is row-major S11 S12 S21 S22.
        assert_eq!(n.s[0][0].re, 0.11);
        assert_eq!(n.s[0][1].re, 0.12);
        assert_eq!(n.s[0][2].re, 0.21);
        assert_eq!(n.s[0][3].re, 0.22);
    }

    #[test]
    fn comments_are_preserved_in_order() {
        let text = "! first\n# Hz S RI R 50\n! between\n1 0 0\n2 0 0 ! inline\n";
        let n = parse(text).unwrap();
        assert_eq!(n.comments, vec!["first", "between", "inline"]);
        assert_eq!(n.freqs.len(), 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse("# Hz S RI R 50\n# Hz S RI R 75\n1 0 0\n") {
            Err(TouchstoneError::DuplicateOptionLine { line: 2 }) => {}
            other => panic!("expected duplicate option at line 2, got {other:?}"),
        }
        match parse("1 0 0\n# Hz S RI R 50\n") {
            Err(TouchstoneError::MissingOptionLine) => {}
            other => panic!("expected missing option line, got {other:?}"),
        }
        match parse("# Hz S RI R 50\n1 0 zero\n") {
            Err(TouchstoneError::BadNumber { line: 2, token }) => assert_eq!(token, "zero"),
            other => panic!("expected bad number at line 2, got {other:?}"),
        }
        match parse("# Hz S RI R 50\n1 0 0 0 0\n") {
            Err(TouchstoneError::WrongValueCount { line: 2, got: 5 }) => {}
            other => panic!("expected wrong value count, got {other:?}"),
        }
        match parse("# Hz S RI R 50\n1 0 0\n2 0 0 0 0 0 0 0 0\n") {
            Err(TouchstoneError::InconsistentRow { line: 3, got: 9, want: 3 }) => {}
            other => panic!("expected inconsistent row, got {other:?}"),
        }
        match parse("# Hz S RI R 50\n2 0 0\n1 0 0\n") {
            Err(TouchstoneError::NonMonotonicFrequency { line: 3 }) => {}
            other => panic!("expected non-monotonic frequency, got {other:?}"),
        }
        match parse("# Hz S RI R 50\n") {
            Err(TouchstoneError::NoData) => {}
            other => panic!("expected no-data error, got {other:?}"),
        }
        match parse("# Hz Y RI R 50\n1 0 0\n") {
            Err(TouchstoneError::UnsupportedParameter { line: 1, param }) => {
                assert_eq!(param, "Y")
            }
            other => panic!("expected unsupported parameter, got {other:?}"),
        }
        match parse("[Version] 2.0\n# Hz S RI R 50\n1 0 0\n") {
            Err(TouchstoneError::UnsupportedVersion { line: 1 }) => {}
            other => panic!("expected v2 rejection, got {other:?}"),
        }
        match parse("# Hz S RI R -50\n1 0 0\n") {
            Err(TouchstoneError::BadReference { .. }) => {}
            other => panic!("expected bad reference, got {other:?}"),
        }
    }

    #[test]
    fn canonical_write_is_idempotent() {
        let text = "! probe A\n# MHz S MA R 75\n1 0.5 10\n2 0.25 -20\n";
        let n1 = parse(text).unwrap();
        let c1 = write(&n1);
        let n2 = parse(&c1).unwrap();
        assert!(n1.same_network(&n2));
        assert_eq!(n2.comments, n1.comments);
        // Physical equality plus canonical declarations: full struct equality
        // from here on, and byte-identical re-writes.
        assert_eq!(write(&n2), c1);
        assert_eq!(parse(&write(&n2)).unwrap(), n2);
    }

    #[test]
    fn unit_declarations_normalize_to_the_same_network() {
        let variants = [
            "# GHz S RI R 50\n0.3 0.5 -0.25\n",
            "# MHz S RI R 50\n300 0.5 -0.25\n",
            "# kHz S RI R 50\n300000 0.5 -0.25\n",
            "# Hz S RI R 50\n300000000 0.5 -0.25\n",
        ];
        let parsed: Vec<NetworkData> = variants.iter().map(|t| parse(t).unwrap()).collect();
        for n in &parsed[1..] {
            assert!(n.same_network(&parsed[0]));
            assert_eq!(n.freqs[0], 3e8);
        }
    }

    #[test]
    fn random_networks_round_trip_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let n_ports = if rng.gen_bool(0.5) { 1 } else { 2 };
            let points = rng.gen_range(2..30);
            let mut f = rng.gen_range(1e6..1e9);
            let mut freqs = Vec::new();
            let mut s = Vec::new();
            for _ in 0..points {
                freqs.push(f);
                f += rng.gen_range(1e3..1e8);
                s.push(
                    (0..n_ports * n_ports)
                        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect(),
                );
            }
            let n = NetworkData {
                freqs,
                s,
                z0: *[25.0, 50.0, 75.0].get(rng.gen_range(0..3)).unwrap(),
                n_ports,
                source_format: SourceFormat::Ri,
                freq_unit_declared: FreqUnit::Hz,
                comments: vec!["synthetic".into()],
            };
            let back = parse(&write(&n)).unwrap();
            assert_eq!(back, n);
        }
    }

    #[test]
    fn s_to_y_known_values_and_singularity() {
        let matched = parse("# Hz S RI R 50\n1 0 0\n").unwrap();
        let y = s_to_y(&matched).unwrap();
        assert_eq!(y.mats[0][0], Complex64::new(0.02, 0.0));

        let short = parse("# Hz S RI R 50\n7 -1 0\n").unwrap();
        match s_to_y(&short) {
            Err(TouchstoneError::SingularAtFrequency { freq }) => assert_eq!(freq, 7.0),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn s_y_conversions_are_mutually_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..200 {
            let n_ports = if rng.gen_bool(0.5) { 1 } else { 2 };
            let dim = n_ports * n_ports;
            // Small reflections keep (I+S) comfortably nonsingular.
            let s_point: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)))
                .collect();
            let n = NetworkData {
                freqs: vec![1e9],
                s: vec![s_point.clone()],
                z0: 50.0,
                n_ports,
                source_format: SourceFormat::Ri,
                freq_unit_declared: FreqUnit::Hz,
                comments: vec![],
            };
            let y = s_to_y(&n).unwrap();
            let s_back = y_to_s(&y, n.z0).unwrap();
            for (a, b) in s_back[0].iter().zip(&s_point) {
                assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
            }
            // Independent identity: S = 2(I + z0 Y)^{-1} - I.
            let zy: Vec<Complex64> = y.mats[0].iter().map(|v| v * n.z0).collect();
            let plus = mat_add(&identity(n_ports), &zy, 1.0);
            let inv = mat_inverse(&plus, n_ports).unwrap();
            for i in 0..n_ports {
                for j in 0..n_ports {
                    let alt = 2.0 * inv[i * n_ports + j]
                        - if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                    let direct = s_back[0][i * n_ports + j];
                    assert!((alt - direct).norm() <= 1e-12 * direct.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn series_element_is_recovered_exactly() {
        let yd = Complex64::new(1.7e-3, -4.2e-4);
        let y = AdmittanceMatrices {
            freqs: vec![1e8, 2e8],
            mats: vec![vec![yd, -yd, -yd, yd]; 2],
            n_ports: 2,
        };
        let (fr, report) = series_through_admittance(&y).unwrap();
        assert_eq!(fr.y, vec![yd, yd]);
        assert_eq!(report.flagged, 0);
        assert_eq!(report.points, 2);
    }

    #[test]
    fn asymmetric_data_is_flagged_not_fatal() {
        let yd = Complex64::new(1e-3, 0.0);
        let y = AdmittanceMatrices {
            freqs: vec![1e8],
            mats: vec![vec![yd, -yd * 1.05, -yd, yd]],
            n_ports: 2,
        };
        let (fr, report) = series_through_admittance(&y).unwrap();
        assert_eq!(fr.y[0], yd);
        assert_eq!(report.flagged, 1);
        assert!(report.worst_asymmetry > RECIPROCITY_TOL);
        assert_eq!(report.worst_frequency, Some(1e8));
    }

    #[test]
    fn one_port_series_through_is_a_shape_error() {
        let y = AdmittanceMatrices {
            freqs: vec![1e8],
            mats: vec![vec![Complex64::new(1e-3, 0.0)]],
            n_ports: 1,
        };
        assert!(matches!(
            series_through_admittance(&y),
            Err(TouchstoneError::WrongPortCount { need: 2, got: 1 })
        ));
    }

    #[test]
    fn embedded_resonator_survives_the_file_round_trip() {
        let model =
            ResonatorModel::new(1e-12, 0.0, vec![ModalBranch { fs: 300e6, k2: 0.08, q: 150.0 }])
                .unwrap();
        let fr = synthesize(&model, &linspace(1e8, 1e9, 801)).unwrap();
        let network = embed_series_through(&fr, 50.0).unwrap();
        let reparsed = parse(&write(&network)).unwrap();
        let (recovered, report) = series_through_admittance(&s_to_y(&reparsed).unwrap()).unwrap();
        assert_eq!(report.flagged, 0);
        for (a, b) in recovered.y.iter().zip(&fr.y) {
            assert!((a - b).norm() <= 1e-12 * b.norm());
        }
    }
}
