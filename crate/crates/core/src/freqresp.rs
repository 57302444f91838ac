//! Sampled frequency responses: grid, per-port samples, CSV and Touchstone
//! ingestion, and band slicing.
//!
//! Samples are stored at non-negative frequencies only. Every fitter assumes
//! `H(-jw) = conj(H(jw))`; nothing here stores or checks the mirrored half.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest grid accepted anywhere in the crate.
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyGrid {
    freqs_hz: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(freqs_hz: Vec<f64>) -> Result<Self> {
        if freqs_hz.len() < MIN_POINTS {
            return Err(Error::invalid(format!(
                "fewer than {MIN_POINTS} points ({} given)",
                freqs_hz.len()
            )));
        }
        for (i, f) in freqs_hz.iter().enumerate() {
            if !f.is_finite() || *f < 0.0 {
                return Err(Error::invalid(format!("frequency #{i} = {f} is not finite and >= 0")));
            }
            if i > 0 && *f <= freqs_hz[i - 1] {
                return Err(Error::invalid(format!("non-monotone grid at index {i}")));
            }
        }
        Ok(FrequencyGrid { freqs_hz })
    }

    /// `n` points evenly spaced over `[f_start, f_stop]`, both ends included.
    pub fn linear(f_start: f64, f_stop: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("a linear grid needs at least 2 points"));
        }
        let step = (f_stop - f_start) / (n - 1) as f64;
        let mut f: Vec<f64> = (0..n).map(|i| f_start + step * i as f64).collect();
        f[n - 1] = f_stop;
        Self::new(f)
    }

    /// `n` points evenly spaced in log-frequency over `[f_start, f_stop]`.
    pub fn logarithmic(f_start: f64, f_stop: f64, n: usize) -> Result<Self> {
        if n < 2 || f_start <= 0.0 {
            return Err(Error::invalid("a log grid needs n >= 2 and f_start > 0"));
        }
        let (a, b) = (f_start.ln(), f_stop.ln());
        let mut f: Vec<f64> = (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect();
        f[0] = f_start;
        f[n - 1] = f_stop;
        Self::new(f)
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    /// Angular frequencies ω = 2πf in rad/s.
    pub fn omegas(&self) -> Vec<f64> {
        self.freqs_hz.iter().map(|f| 2.0 * PI * f).collect()
    }

    pub fn f_min(&self) -> f64 {
        self.freqs_hz[0]
    }

    pub fn f_max(&self) -> f64 {
        self.freqs_hz[self.freqs_hz.len() - 1]
    }

    pub fn omega_max(&self) -> f64 {
        2.0 * PI * self.f_max()
    }
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        FrequencyGrid::new(v)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Vec<f64> {
        g.freqs_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    /// v/i at a current-probed node, Ω.
    Impedance,
    /// i/v of a voltage-probed branch, S.
    Admittance,
    /// Anything dimensionless (S-parameters, modal transfers).
    Transfer,
}

impl ResponseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResponseKind::Impedance => "impedance",
            ResponseKind::Admittance => "admittance",
            ResponseKind::Transfer => "transfer",
        }
    }
}

impl std::str::FromStr for ResponseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "impedance" => Ok(ResponseKind::Impedance),
            "admittance" => Ok(ResponseKind::Admittance),
            "transfer" => Ok(ResponseKind::Transfer),
            other => Err(Error::invalid(format!("unknown response kind `{other}`"))),
        }
    }
}

/// How a port's response was excited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Excitation {
    NodeCurrent { node: String },
    BranchVoltage { element: String },
    Modal { nodes: Vec<String>, phases_deg: Vec<f64> },
    /// Imported data with no circuit-level meaning attached.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortLabel {
    pub name: String,
    pub excitation: Excitation,
}

impl PortLabel {
    pub fn new(name: impl Into<String>, excitation: Excitation) -> Result<Self> {
        if let Excitation::Modal { nodes, phases_deg } = &excitation {
            if nodes.len() != phases_deg.len() {
                return Err(Error::invalid("modal excitation needs one phase per node"));
            }
        }
        Ok(PortLabel { name: name.into(), excitation })
    }

    pub fn external(name: impl Into<String>) -> Self {
        PortLabel { name: name.into(), excitation: Excitation::External }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortResponse {
    pub label: PortLabel,
    pub kind: ResponseKind,
    pub values: Vec<Complex64>,
}

/// Multi-port sampled response on one shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponseSet {
    grid: FrequencyGrid,
    ports: Vec<PortResponse>,
}

impl FrequencyResponseSet {
    pub fn new(grid: FrequencyGrid, ports: Vec<PortResponse>) -> Result<Self> {
        for p in &ports {
            if p.values.len() != grid.len() {
                return Err(Error::invalid(format!(
                    "port `{}` has {} samples for a {}-point grid",
                    p.label.name,
                    p.values.len(),
                    grid.len()
                )));
            }
            if p.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::invalid(format!("port `{}` has NaN/Inf samples", p.label.name)));
            }
        }
        Ok(FrequencyResponseSet { grid, ports })
    }

    /// Convenience constructor for a single transfer-kind port.
    pub fn single(grid: FrequencyGrid, name: &str, values: Vec<Complex64>) -> Result<Self> {
        Self::new(
            grid,
            vec![PortResponse {
                label: PortLabel::external(name),
                kind: ResponseKind::Transfer,
                values,
            }],
        )
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn ports(&self) -> &[PortResponse] {
        &self.ports
    }

    pub fn n_ports(&self) -> usize {
        self.ports.len()
    }

    pub fn port(&self, name: &str) -> Option<&PortResponse> {
        self.ports.iter().find(|p| p.label.name == name)
    }

    pub fn port_index(&self, name: &str) -> Option<usize> {
        self.ports.iter().position(|p| p.label.name == name)
    }

    /// One-port view of port `idx`.
    pub fn select(&self, idx: usize) -> FrequencyResponseSet {
        FrequencyResponseSet { grid: self.grid.clone(), ports: vec![self.ports[idx].clone()] }
    }

    /// Concatenate the ports of two sets sampled on the same grid.
    pub fn merge(mut self, other: FrequencyResponseSet) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::invalid("cannot merge responses on different grids"));
        }
        self.ports.extend(other.ports);
        Ok(self)
    }

    /// Samples at frequencies inside `[f_lo, f_hi]`, values untouched.
    pub fn slice_band(&self, f_lo: f64, f_hi: f64) -> Result<FrequencyResponseSet> {
        if !(f_lo < f_hi) {
            return Err(Error::invalid(format!("slice needs f_lo < f_hi ({f_lo} >= {f_hi})")));
        }
        let idx: Vec<usize> = self
            .grid
            .freqs_hz
            .iter()
            .enumerate()
            .filter(|(_, f)| **f >= f_lo && **f <= f_hi)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < MIN_POINTS {
            return Err(Error::invalid(format!(
                "sub-band [{f_lo}, {f_hi}] Hz holds {} points, fewer than {MIN_POINTS}",
                idx.len()
            )));
        }
        let grid = FrequencyGrid { freqs_hz: idx.iter().map(|&i| self.grid.freqs_hz[i]).collect() };
        let ports = self
            .ports
            .iter()
            .map(|p| PortResponse {
                label: p.label.clone(),
                kind: p.kind,
                values: idx.iter().map(|&i| p.values[i]).collect(),
            })
            .collect();
        Ok(FrequencyResponseSet { grid, ports })
    }

    /// Canonical CSV form (see [`parse_csv`]). Numbers use the shortest
    /// representation that round-trips exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let kinds: Vec<String> = self
            .ports
            .iter()
            .filter(|p| p.kind != ResponseKind::Transfer)
            .map(|p| format!("{}={}", p.label.name, p.kind.as_str()))
            .collect();
        if !kinds.is_empty() {
            let _ = writeln!(out, "# kind: {}", kinds.join(","));
        }
        out.push_str("freq_hz");
        for p in &self.ports {
            let _ = write!(out, ",{0}_re,{0}_im", p.label.name);
        }
        out.push('\n');
        for (i, f) in self.grid.freqs_hz.iter().enumerate() {
            let _ = write!(out, "{f:?}");
            for p in &self.ports {
                let v = p.values[i];
                let _ = write!(out, ",{:?},{:?}", v.re, v.im);
            }
            out.push('\n');
        }
        out
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("unparseable number `{}`", tok.trim())))
}

/// Parse the canonical CSV schema:
///
/// ```text
/// # kind: p1=impedance
/// freq_hz,p1_re,p1_im,p2_re,p2_im
/// 1e9,0.5,-0.1,1.0,0.0
/// ```
///
/// Ports default to `transfer` unless named in a `# kind:` comment.
pub fn parse_csv(text: &str) -> Result<FrequencyResponseSet> {
    let mut kinds: Vec<(String, ResponseKind)> = Vec::new();
    let mut names: Option<Vec<String>> = None;
    let mut freqs: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<Complex64>> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(spec) = comment.trim().strip_prefix("kind:") {
                for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
                    let (port, kind) = item
                        .split_once('=')
                        .ok_or_else(|| Error::parse(line_no, "kind entries look like `port=kind`"))?;
                    let kind = kind
                        .parse::<ResponseKind>()
                        .map_err(|e| Error::parse(line_no, e.to_string()))?;
                    kinds.push((port.trim().to_string(), kind));
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        match &names {
            None => {
                if cols[0].trim() != "freq_hz" || cols.len() % 2 == 0 {
                    return Err(Error::parse(line_no, "header must be freq_hz,<port>_re,<port>_im,..."));
                }
                let mut ports = Vec::new();
                for pair in cols[1..].chunks(2) {
                    let re = pair[0].trim();
                    let im = pair[1].trim();
                    let (Some(a), Some(b)) = (re.strip_suffix("_re"), im.strip_suffix("_im")) else {
                        return Err(Error::parse(line_no, format!("bad column pair `{re}`,`{im}`")));
                    };
                    if a != b || a.is_empty() {
                        return Err(Error::parse(line_no, format!("bad column pair `{re}`,`{im}`")));
                    }
                    ports.push(a.to_string());
                }
                values = vec![Vec::new(); ports.len()];
                names = Some(ports);
            }
            Some(ports) => {
                if cols.len() != 1 + 2 * ports.len() {
                    return Err(Error::parse(
                        line_no,
                        format!("ragged row: {} columns, expected {}", cols.len(), 1 + 2 * ports.len()),
                    ));
                }
                let f = parse_f64(cols[0], line_no)?;
                if !f.is_finite() || f < 0.0 {
                    return Err(Error::parse(line_no, format!("invalid frequency {f}")));
                }
                if let Some(prev) = freqs.last() {
                    if f <= *prev {
                        return Err(Error::parse(line_no, format!("non-monotone grid at line {line_no}")));
                    }
                }
                freqs.push(f);
                for (k, pair) in cols[1..].chunks(2).enumerate() {
                    let re = parse_f64(pair[0], line_no)?;
                    let im = parse_f64(pair[1], line_no)?;
                    if !re.is_finite() || !im.is_finite() {
                        return Err(Error::parse(line_no, "NaN/Inf sample"));
                    }
                    values[k].push(Complex64::new(re, im));
                }
            }
        }
    }
    let names = names.ok_or_else(|| Error::invalid("missing header row"))?;
    let grid = FrequencyGrid::new(freqs)?;
    for (port, _) in &kinds {
        if !names.contains(port) {
            return Err(Error::invalid(format!("`# kind:` names unknown port `{port}`")));
        }
    }
    let ports = names
        .into_iter()
        .zip(values)
        .map(|(name, vals)| {
            let kind = kinds
                .iter()
                .rev()
                .find(|(p, _)| *p == name)
                .map(|(_, k)| *k)
                .unwrap_or(ResponseKind::Transfer);
            PortResponse { label: PortLabel::external(name), kind, values: vals }
        })
        .collect();
    FrequencyResponseSet::new(grid, ports)
}

#[derive(Clone, Copy)]
enum TsFormat {
    Ri,
    Ma,
    Db,
}

/// Read a version-1 Touchstone file holding one- or two-port S-parameters.
///
/// Each S_ij becomes a transfer-kind port named `Sij`, in file order
/// (S11, S21, S12, S22 for two-ports).
pub fn parse_touchstone(text: &str) -> Result<FrequencyResponseSet> {
    let mut unit_scale: Option<f64> = None;
    let mut format = TsFormat::Ma;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.split_once('!') {
            Some((before, _)) => before,
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(opts) = line.strip_prefix('#') {
            if unit_scale.is_some() {
                continue; // later option lines are ignored, as in v1 readers
            }
            let toks: Vec<String> = opts.split_whitespace().map(|t| t.to_ascii_uppercase()).collect();
            let mut scale = 1e9;
            let mut j = 0;
            while j < toks.len() {
                match toks[j].as_str() {
                    "HZ" => scale = 1.0,
                    "KHZ" => scale = 1e3,
                    "MHZ" => scale = 1e6,
                    "GHZ" => scale = 1e9,
                    "S" => {}
                    "Y" | "Z" | "H" | "G" => return Err(Error::UnsupportedParameter(toks[j].clone())),
                    "RI" => format = TsFormat::Ri,
                    "MA" => format = TsFormat::Ma,
                    "DB" => format = TsFormat::Db,
                    "R" => {
                        j += 1;
                        let z0 = toks.get(j).ok_or_else(|| Error::parse(line_no, "R needs a value"))?;
                        parse_f64(z0, line_no)?;
                    }
                    other => return Err(Error::parse(line_no, format!("unknown option `{other}`"))),
                }
                j += 1;
            }
            unit_scale = Some(scale);
            continue;
        }
        if unit_scale.is_none() {
            return Err(Error::parse(line_no, "missing option line before data"));
        }
        let nums = line
            .split_whitespace()
            .map(|t| parse_f64(t, line_no))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line_no, nums));
    }
    let scale = unit_scale.ok_or_else(|| Error::invalid("missing option line"))?;
    let Some((_, first)) = rows.first() else {
        return Err(Error::invalid("no data rows"));
    };
    let (n_params, names): (usize, Vec<&str>) = match first.len() {
        3 => (1, vec!["S11"]),
        9 => (4, vec!["S11", "S21", "S12", "S22"]),
        n => {
            return Err(Error::invalid(format!(
                "data rows with {n} columns: only 1- and 2-port files are supported"
            )))
        }
    };
    let mut freqs = Vec::with_capacity(rows.len());
    let mut values = vec![Vec::with_capacity(rows.len()); n_params];
    for (line_no, nums) in &rows {
        if nums.len() != 1 + 2 * n_params {
            return Err(Error::parse(*line_no, "ragged row"));
        }
        let f = nums[0] * scale;
        if let Some(prev) = freqs.last() {
            if f <= *prev {
                return Err(Error::parse(*line_no, format!("non-monotone grid at line {line_no}")));
            }
        }
        freqs.push(f);
        for k in 0..n_params {
            let (a, b) = (nums[1 + 2 * k], nums[2 + 2 * k]);
            let v = match format {
                TsFormat::Ri => Complex64::new(a, b),
                TsFormat::Ma => polar_deg(a, b),
                TsFormat::Db => polar_deg(10f64.powf(a / 20.0), b),
            };
            values[k].push(v);
        }
    }
    let grid = FrequencyGrid::new(freqs)?;
    let ports = names
        .into_iter()
        .zip(values)
        .map(|(n, v)| PortResponse { label: PortLabel::external(n), kind: ResponseKind::Transfer, values: v })
        .collect();
    FrequencyResponseSet::new(grid, ports)
}

/// `mag · e^{j·deg}` with exact results on the axes.
fn polar_deg(mag: f64, deg: f64) -> Complex64 {
    let d = deg.rem_euclid(360.0);
    let (s, c) = if d == 0.0 {
        (0.0, 1.0)
    } else if d == 90.0 {
        (1.0, 0.0)
    } else if d == 180.0 {
        (0.0, -1.0)
    } else if d == 270.0 {
        (-1.0, 0.0)
    } else {
        d.to_radians().sin_cos()
    };
    Complex64::new(mag * c, mag * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ten_ghz_set() -> FrequencyResponseSet {
        let grid = FrequencyGrid::new((1..=10).map(|k| k as f64 * 1e9).collect()).unwrap();
        let vals = (1..=10).map(|k| Complex64::new(k as f64, -(k as f64))).collect();
        FrequencyResponseSet::single(grid, "p1", vals).unwrap()
    }

    #[test]
    fn csv_maps_fields_directly() {
        let text = "freq_hz,p1_re,p1_im\n1e9,0.5,-0.1\n2e9,0,0\n3e9,0,0\n4e9,0,0\n";
        let set = parse_csv(text).unwrap();
        assert_eq!(set.n_ports(), 1);
        assert_eq!(set.ports()[0].label.name, "p1");
        assert_eq!(set.ports()[0].kind, ResponseKind::Transfer);
        assert_eq!(set.grid().freqs_hz()[0], 1e9);
        assert_eq!(set.ports()[0].values[0], Complex64::new(0.5, -0.1));
    }

    #[test]
    fn csv_duplicate_frequency_reports_line() {
        let text = "freq_hz,p1_re,p1_im\n1e9,0.5,-0.1\n1e9,0.5,-0.1\n2e9,0,0\n3e9,0,0\n";
        let err = parse_csv(text).unwrap_err().to_string();
        assert!(err.contains("non-monotone grid at line 3"), "{err}");
    }

    #[test]
    fn csv_three_rows_is_too_short() {
        let text = "freq_hz,p1_re,p1_im\n1e9,1,0\n2e9,1,0\n3e9,1,0\n";
        let err = parse_csv(text).unwrap_err().to_string();
        assert!(err.contains("fewer than 4 points"), "{err}");
    }

    #[test]
    fn csv_ragged_and_garbage_rows() {
        let ragged = "freq_hz,p1_re,p1_im\n1e9,1\n";
        assert!(parse_csv(ragged).unwrap_err().to_string().contains("line 2"));
        let garbage = "freq_hz,p1_re,p1_im\n1e9,1,0\n2e9,x,0\n";
        let e = parse_csv(garbage).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("unparseable"), "{e}");
    }

    #[test]
    fn csv_kind_comment_and_crlf() {
        let text = "# kind: a=impedance\r\nfreq_hz,a_re,a_im,b_re,b_im\r\n1,1,0,2,0\r\n2,1,0,2,0\r\n3,1,0,2,0\r\n4,1,0,2,0\r\n";
        let set = parse_csv(text).unwrap();
        assert_eq!(set.ports()[0].kind, ResponseKind::Impedance);
        assert_eq!(set.ports()[1].kind, ResponseKind::Transfer);
    }

    #[test]
    fn touchstone_ri_ghz() {
        let text = "! test\n# GHz S RI R 50\n1.0 0.5 -0.1\n2.0 0 0\n3.0 0 0\n4.0 0 0\n";
        let set = parse_touchstone(text).unwrap();
        assert_eq!(set.grid().freqs_hz()[0], 1e9);
        assert_eq!(set.ports()[0].values[0], Complex64::new(0.5, -0.1));
    }

    #[test]
    fn touchstone_ma_mhz() {
        let text = "# MHz S MA R 50\n100 1.0 90\n200 1 0\n300 1 0\n400 1 0\n";
        let set = parse_touchstone(text).unwrap();
        assert_eq!(set.grid().freqs_hz()[0], 1e8);
        assert_eq!(set.ports()[0].values[0], Complex64::new(0.0, 1.0));
    }

    #[test]
    fn touchstone_db_two_port() {
        let text = "# Hz S DB R 50\n1 0 0 -20 180 -20 180 0 0\n2 0 0 -20 180 -20 180 0 0\n3 0 0 -20 180 -20 180 0 0\n4 0 0 -20 180 -20 180 0 0\n";
        let set = parse_touchstone(text).unwrap();
        assert_eq!(set.n_ports(), 4);
        assert_eq!(set.ports()[1].label.name, "S21");
        assert!((set.ports()[1].values[0] - Complex64::new(-0.1, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn touchstone_rejects_y_and_missing_options() {
        let e = parse_touchstone("# GHz Y RI R 50\n1 0 0\n").unwrap_err().to_string();
        assert_eq!(e, "unsupported parameter type Y");
        assert!(parse_touchstone("1 0 0\n2 0 0\n3 0 0\n4 0 0\n").is_err());
    }

    #[test]
    fn slice_interior() {
        let set = ten_ghz_set();
        let s = set.slice_band(3e9, 7e9).unwrap();
        assert_eq!(s.grid().freqs_hz(), &[3e9, 4e9, 5e9, 6e9, 7e9]);
        assert_eq!(s.ports()[0].values[0], Complex64::new(3.0, -3.0));
    }

    #[test]
    fn slice_full_band_is_identity() {
        let set = ten_ghz_set();
        assert_eq!(set.slice_band(1e9, 10e9).unwrap(), set);
    }

    #[test]
    fn slice_too_narrow() {
        let set = ten_ghz_set();
        assert!(set.slice_band(8e9, 9e9).is_err());
        assert!(set.slice_band(9e9, 8e9).is_err());
    }

    #[test]
    fn grid_invariants() {
        assert!(FrequencyGrid::new(vec![1.0, 2.0, 3.0]).is_err());
        assert!(FrequencyGrid::new(vec![1.0, 2.0, 2.0, 3.0]).is_err());
        assert!(FrequencyGrid::new(vec![-1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(FrequencyGrid::new(vec![0.0, 2.0, 3.0, f64::INFINITY]).is_err());
        assert!(FrequencyGrid::new(vec![0.0, 2.0, 3.0, 4.0]).is_ok());
    }

    fn arb_set() -> impl Strategy<Value = FrequencyResponseSet> {
        (4usize..30, 1usize..4).prop_flat_map(|(n, p)| {
            (
                proptest::collection::vec(1e-3f64..1e3, n),
                proptest::collection::vec((-1e12f64..1e12, -1e12f64..1e12), n * p),
                Just(p),
            )
                .prop_map(move |(steps, vals, p)| {
                    let mut f = Vec::with_capacity(steps.len());
                    let mut acc = 0.0;
                    for s in steps {
                        acc += s;
                        f.push(acc);
                    }
                    let grid = FrequencyGrid::new(f).unwrap();
                    let ports = (0..p)
                        .map(|k| PortResponse {
                            label: PortLabel::external(format!("p{k}")),
                            kind: if k == 1 { ResponseKind::Admittance } else { ResponseKind::Transfer },
                            values: vals[k * n..(k + 1) * n].iter().map(|(a, b)| Complex64::new(*a, *b)).collect(),
                        })
                        .collect();
                    FrequencyResponseSet::new(grid, ports).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(set in arb_set()) {
            let back = parse_csv(&set.to_csv()).unwrap();
            prop_assert_eq!(back, set);
        }

        #[test]
        fn slice_is_idempotent_and_conserves_samples(set in arb_set(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let f = set.grid().freqs_hz();
            let n = f.len();
            let i = ((a * n as f64) as usize).min(n - 1);
            let j = ((b * n as f64) as usize).min(n - 1);
            let (lo, hi) = (f[i.min(j)], f[i.max(j)]);
            if let Ok(once) = set.slice_band(lo, hi) {
                let twice = once.slice_band(lo, hi).unwrap();
                prop_assert_eq!(&twice, &once);
                // partition: below lo, [lo, hi], above hi
                let below = f.iter().filter(|x| **x < lo).count();
                let above = f.iter().filter(|x| **x > hi).count();
                prop_assert_eq!(below + once.grid().len() + above, n);
            }
        }
    }
}
