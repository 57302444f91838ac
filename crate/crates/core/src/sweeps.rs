//! Parametric analyses built on the circuit engine and the fitters: pole
//! loci versus one element value, stabilization-threshold search, Monte
//! Carlo pole clouds, the spiral termination path and the proviso scan.
//!
//! Independent sweep points and trials run in parallel; results are always
//! gathered by index, so every output is deterministic.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::FrequencyGrid;
use crate::netsim::{analytic_poles, frequency_response, with_termination, ElementClass, Netlist, ProbeSpec};
use crate::poles::assign_min_cost;
use crate::ratfit::{fit_common_denominator, FitConfig, PartialFractionModel};
use crate::staban::{auto_identify, PoleClass, StabConfig};

/// Sampling grid and fit template shared by the sweep operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: FrequencyGrid,
    pub fit: FitConfig,
}

impl SweepConfig {
    pub fn new(grid: FrequencyGrid, fit: FitConfig) -> Self {
        SweepConfig { grid, fit }
    }
}

fn fit_poles(net: &Netlist, probe: &ProbeSpec, cfg: &SweepConfig) -> Result<PartialFractionModel> {
    let resp = frequency_response(net, probe, &cfg.grid)?;
    Ok(fit_common_denominator(&resp, &cfg.fit)?.0)
}

fn max_re(poles: &[Complex64]) -> f64 {
    poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------- loci

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleTrack {
    /// One entry per parameter value; `None` where the fit failed.
    pub poles: Vec<Option<Complex64>>,
    /// Some step had no pole for this track.
    pub terminated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub track: usize,
    /// Interpolated parameter value where Re changes sign.
    pub param: f64,
    /// Interpolated pole location at the crossing.
    pub pole: Complex64,
    /// true for right-to-left crossings as the parameter increases.
    pub into_lhp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleTrajectory {
    pub param_name: String,
    pub param_values: Vec<f64>,
    pub tracks: Vec<PoleTrack>,
    pub crossing_events: Vec<CrossingEvent>,
    /// Fit failures by step index.
    pub failures: Vec<(usize, String)>,
}

impl PoleTrajectory {
    /// Largest real part over all tracks at step `k`.
    pub fn max_re_at(&self, k: usize) -> Option<f64> {
        let v: Vec<Complex64> = self.tracks.iter().filter_map(|t| t.poles[k]).collect();
        if v.is_empty() {
            None
        } else {
            Some(max_re(&v))
        }
    }

    /// `step,param,track,re,im`, one row per pole per step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,param,track,re,im\n");
        for (k, v) in self.param_values.iter().enumerate() {
            for (t, tr) in self.tracks.iter().enumerate() {
                if let Some(p) = tr.poles[k] {
                    out.push_str(&format!("{k},{v:e},{t},{:e},{:e}\n", p.re, p.im));
                }
            }
        }
        out
    }
}

/// Sweep element `param` over `values`, fitting the probed response at each
/// value and linking the poles into tracks by optimal assignment. Crossings
/// are reported once per conjugate pair (the upper track).
pub fn trace_pole_locus(
    net: &Netlist,
    probe: &ProbeSpec,
    param: &str,
    values: &[f64],
    cfg: &SweepConfig,
) -> Result<PoleTrajectory> {
    if values.is_empty() {
        return Err(Error::invalid("no parameter values"));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("parameter values must be strictly ascending"));
    }
    net.element(param).ok_or_else(|| Error::Unknown { kind: "element", name: param.into() })?;
    cfg.fit.validate()?;
    let steps: Vec<Result<Vec<Complex64>>> = values
        .par_iter()
        .map(|&v| Ok(fit_poles(&net.with_value(param, v)?, probe, cfg)?.poles))
        .collect();

    let scale = 2.0 * PI * (cfg.grid.f_max() - cfg.grid.f_min()).max(cfg.grid.f_max() * 1e-12);
    let mut tracks: Vec<PoleTrack> = Vec::new();
    let mut last: Vec<Option<Complex64>> = Vec::new();
    let mut failures = Vec::new();
    for (k, step) in steps.into_iter().enumerate() {
        let poles = match step {
            Ok(p) => p,
            Err(e) => {
                failures.push((k, e.to_string()));
                for t in tracks.iter_mut() {
                    t.poles.push(None);
                    t.terminated = true;
                }
                continue;
            }
        };
        if tracks.is_empty() {
            for p in &poles {
                let mut v = vec![None; k];
                v.push(Some(*p));
                tracks.push(PoleTrack { poles: v, terminated: k > 0 });
                last.push(Some(*p));
            }
            continue;
        }
        let live: Vec<usize> = (0..tracks.len()).filter(|&t| last[t].is_some()).collect();
        let cost: Vec<Vec<f64>> = live
            .iter()
            .map(|&t| poles.iter().map(|p| (p - last[t].unwrap()).norm() / scale).collect())
            .collect();
        let assignment = assign_min_cost(&cost);
        let mut used = vec![false; poles.len()];
        let mut next: Vec<Option<Complex64>> = vec![None; tracks.len()];
        for (row, col) in assignment.into_iter().enumerate() {
            if let Some(j) = col {
                next[live[row]] = Some(poles[j]);
                used[j] = true;
            }
        }
        for (t, tr) in tracks.iter_mut().enumerate() {
            tr.poles.push(next[t]);
            if next[t].is_none() {
                tr.terminated = true;
            }
        }
        for (j, p) in poles.iter().enumerate() {
            if !used[j] {
                let mut v = vec![None; k];
                v.push(Some(*p));
                tracks.push(PoleTrack { poles: v, terminated: true });
                next.push(Some(*p));
            }
        }
        last = next;
    }

    let mut crossing_events = Vec::new();
    for (t, tr) in tracks.iter().enumerate() {
        for k in 1..values.len() {
            let (Some(a), Some(b)) = (tr.poles[k - 1], tr.poles[k]) else { continue };
            // conjugate tracks mirror each other; report the upper one
            if (a.re > 0.0) == (b.re > 0.0) || a.im + b.im < 0.0 {
                continue;
            }
            crossing_events.push(locate_crossing(net, param, t, (values[k - 1], a), (values[k], b)));
        }
    }
    Ok(PoleTrajectory { param_name: param.into(), param_values: values.to_vec(), tracks, crossing_events, failures })
}

/// Linear interpolation of Re between the bracketing steps, then one
/// bisection level against the analytic poles of the patched netlist.
fn locate_crossing(net: &Netlist, param: &str, track: usize, (v0, p0): (f64, Complex64), (v1, p1): (f64, Complex64)) -> CrossingEvent {
    let lerp = |va: f64, ra: f64, vb: f64, rb: f64| va + (vb - va) * ra / (ra - rb);
    let t = p0.re / (p0.re - p1.re);
    let mut v = lerp(v0, p0.re, v1, p1.re);
    let mut pole = p0 + (p1 - p0) * t;
    let analytic = net.with_value(param, v).and_then(|n| analytic_poles(&n));
    if let Ok(ap) = analytic {
        if let Some(q) = ap.poles.iter().copied().min_by(|a, b| (a - pole).norm().total_cmp(&(b - pole).norm())) {
            if q.re != 0.0 {
                if (q.re > 0.0) == (p0.re > 0.0) {
                    v = lerp(v, q.re, v1, p1.re);
                    pole = q + (p1 - q) * (q.re / (q.re - p1.re));
                } else {
                    v = lerp(v0, p0.re, v, q.re);
                    pole = p0 + (q - p0) * (p0.re / (p0.re - q.re));
                }
            } else {
                pole = q;
            }
        }
    }
    CrossingEvent { track, param: v, pole, into_lhp: p0.re > 0.0 }
}

// ---------------------------------------------------------------- threshold

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    /// Final bracket; fitted max Re changes sign across it.
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// Analytic max Re at the returned value.
    pub analytic_max_re: f64,
    /// The analytic poles change sign across the final bracket too.
    pub verified: bool,
}

/// Bisection on max Re of the fitted poles until the bracket's relative
/// width is at most `tol_rel`. Positive brackets are bisected geometrically.
pub fn stabilization_threshold(
    net: &Netlist,
    probe: &ProbeSpec,
    param: &str,
    lo: f64,
    hi: f64,
    tol_rel: f64,
    cfg: &SweepConfig,
) -> Result<Threshold> {
    if !(lo.is_finite() && hi.is_finite()) || lo == hi {
        return Err(Error::invalid("threshold search needs two distinct finite end points"));
    }
    if !(tol_rel > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let (mut a, mut b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    let fitted = |v: f64| -> Result<f64> { Ok(max_re(&fit_poles(&net.with_value(param, v)?, probe, cfg)?.poles)) };
    let (ra, rb) = rayon::join(|| fitted(a), || fitted(b));
    let (ra, rb) = (ra?, rb?);
    if (ra > 0.0) == (rb > 0.0) {
        return Err(Error::NoThreshold { lo_re: ra, hi_re: rb });
    }
    let a_unstable = ra > 0.0;
    let geometric = a > 0.0;
    let mut iterations = 0;
    while (b - a) / a.abs().max(b.abs()) > tol_rel {
        let m = if geometric { (a * b).sqrt() } else { 0.5 * (a + b) };
        if !(m > a && m < b) {
            break;
        }
        if (fitted(m)? > 0.0) == a_unstable {
            a = m;
        } else {
            b = m;
        }
        iterations += 1;
    }
    let value = if geometric { (a * b).sqrt() } else { 0.5 * (a + b) };
    let analytic = |v: f64| -> Result<f64> { Ok(max_re(&analytic_poles(&net.with_value(param, v)?)?.poles)) };
    let (ea, eb) = (analytic(a)?, analytic(b)?);
    Ok(Threshold {
        value,
        bracket: (a, b),
        iterations,
        analytic_max_re: analytic(value)?,
        verified: (ea > 0.0) != (eb > 0.0),
    })
}

// ---------------------------------------------------------------- Monte Carlo

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spread {
    /// `u` uniform in [-1, 1].
    Uniform,
    /// `u` standard normal.
    Gaussian,
}

/// Relative spread per element class; each value is scaled by `1 + σ·u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub resistor: f64,
    pub inductor: f64,
    pub capacitor: f64,
    pub vccs: f64,
    pub spread: Spread,
}

impl Perturbation {
    /// Same uniform σ for every element class.
    pub fn uniform(sigma: f64) -> Self {
        Perturbation { resistor: sigma, inductor: sigma, capacitor: sigma, vccs: sigma, spread: Spread::Uniform }
    }

    fn sigma(&self, class: ElementClass) -> f64 {
        match class {
            ElementClass::Resistor => self.resistor,
            ElementClass::Inductor => self.inductor,
            ElementClass::Capacitor => self.capacitor,
            ElementClass::Vccs => self.vccs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub trial: usize,
    pub pole: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub max_re: f64,
    /// Smallest `-Re(p)/|p|`; negative when some pole is unstable.
    pub min_damping: f64,
    /// Fraction of successful trials with at least one pole in the RHP.
    pub fraction_unstable: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleCloud {
    pub trials: usize,
    pub seed: u64,
    pub points: Vec<CloudPoint>,
    pub margin_stats: Option<MarginStats>,
    /// Trials whose fit failed, with the reason.
    pub skipped: Vec<(usize, String)>,
}

impl PoleCloud {
    /// `trial,re,im`, one row per pole.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,re,im\n");
        for p in &self.points {
            out.push_str(&format!("{},{:e},{:e}\n", p.trial, p.pole.re, p.pole.im));
        }
        out
    }
}

/// Netlist of trial `trial`: a fresh ChaCha8 stream per trial, one draw per
/// element in netlist order.
pub fn perturbed_netlist(net: &Netlist, pert: &Perturbation, seed: u64, trial: usize) -> Result<Netlist> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    net.map_values(|e| {
        let u: f64 = match pert.spread {
            Spread::Uniform => rng.random_range(-1.0..=1.0),
            Spread::Gaussian => rng.sample(StandardNormal),
        };
        e.value() * (1.0 + pert.sigma(e.class()) * u)
    })
}

pub fn monte_carlo_cloud(
    net: &Netlist,
    probe: &ProbeSpec,
    pert: &Perturbation,
    trials: usize,
    seed: u64,
    cfg: &SweepConfig,
) -> Result<PoleCloud> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let sig = [pert.resistor, pert.inductor, pert.capacitor, pert.vccs];
    if sig.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid("perturbation sigmas must be finite and >= 0"));
    }
    cfg.fit.validate()?;
    let results: Vec<Result<Vec<Complex64>>> = (0..trials)
        .into_par_iter()
        .map(|t| Ok(fit_poles(&perturbed_netlist(net, pert, seed, t)?, probe, cfg)?.poles))
        .collect();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    let mut ok = 0usize;
    let mut unstable = 0usize;
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(poles) => {
                ok += 1;
                if poles.iter().any(|p| p.re > 0.0) {
                    unstable += 1;
                }
                points.extend(poles.into_iter().map(|pole| CloudPoint { trial: t, pole }));
            }
            Err(e) => skipped.push((t, e.to_string())),
        }
    }
    let margin_stats = (ok > 0 && !points.is_empty()).then(|| MarginStats {
        max_re: points.iter().map(|p| p.pole.re).fold(f64::NEG_INFINITY, f64::max),
        min_damping: points
            .iter()
            .filter(|p| p.pole.norm() > 0.0)
            .map(|p| -p.pole.re / p.pole.norm())
            .fold(f64::INFINITY, f64::min),
        fraction_unstable: unstable as f64 / ok as f64,
    });
    Ok(PoleCloud { trials, seed, points, margin_stats, skipped })
}

// ---------------------------------------------------------------- spiral

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralSample {
    pub h: f64,
    pub gamma: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralPath {
    pub turns: u32,
    pub r_max: f64,
    pub samples: Vec<SpiralSample>,
}

/// `e^{jπ m/d}` with exact values on the quarter turns.
fn exact_phasor(m: u64, d: u64) -> Complex64 {
    let m = m % (2 * d);
    if (2 * m) % d == 0 {
        return match 2 * m / d {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    let (s, c) = (PI * m as f64 / d as f64).sin_cos();
    Complex64::new(c, s)
}

impl SpiralPath {
    /// `Γ(h) = r_max·h·e^{j(2N+1)πh}` at `points` uniform values of h in [0, 1].
    pub fn new(turns: u32, points: usize, r_max: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::invalid("a spiral needs at least two points"));
        }
        if !(r_max > 0.0 && r_max <= 1.0) {
            return Err(Error::invalid(format!("r_max must be in (0, 1], got {r_max}")));
        }
        let d = (points - 1) as u64;
        let k_phase = 2 * turns as u64 + 1;
        let samples = (0..points as u64)
            .map(|k| {
                let h = if k == d { 1.0 } else { k as f64 / d as f64 };
                // phase (2N+1)πk/d, reduced with integer arithmetic
                let m = (k_phase % (2 * d)) * k % (2 * d);
                SpiralSample { h, gamma: exact_phasor(m, d) * (r_max * h) }
            })
            .collect();
        Ok(SpiralPath { turns, r_max, samples })
    }

    /// The single sample h = 0 (matched load).
    pub fn matched_only(r_max: f64) -> Self {
        SpiralPath { turns: 0, r_max, samples: vec![SpiralSample { h: 0.0, gamma: Complex64::new(0.0, 0.0) }] }
    }

    /// `h,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,re,im\n");
        for s in &self.samples {
            out.push_str(&format!("{:e},{:e},{:e}\n", s.h, s.gamma.re, s.gamma.im));
        }
        out
    }
}

/// Convenience alias for [`SpiralPath::new`].
pub fn spiral_path(turns: u32, points: usize, r_max: f64) -> Result<SpiralPath> {
    SpiralPath::new(turns, points, r_max)
}

// ---------------------------------------------------------------- proviso

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminationCase {
    Open,
    Short,
    Spiral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisoCase {
    pub case: TerminationCase,
    pub h: Option<f64>,
    pub gamma: Complex64,
    /// Unstable poles (upper half plane and real axis) after pruning.
    pub rhp_poles: Vec<Complex64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisoReport {
    pub schema_version: u32,
    pub port: String,
    pub probe: String,
    pub r_max: f64,
    pub turns: u32,
    pub cases: Vec<ProvisoCase>,
    /// Number of terminations that produced at least one RHP pole.
    pub findings: usize,
    pub failures: usize,
}

impl ProvisoReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const PROVISO_SCHEMA_VERSION: u32 = 1;

/// Identify the internal probe under the near-open and near-short loads and
/// every spiral termination; report every load that leaves an RHP pole.
pub fn proviso_scan(
    net: &Netlist,
    port: &str,
    probe: &ProbeSpec,
    spiral: &SpiralPath,
    grid: &FrequencyGrid,
    cfg: &StabConfig,
) -> Result<ProvisoReport> {
    let tp = net.port(port).ok_or_else(|| Error::Unknown { kind: "port", name: port.into() })?;
    if let ProbeSpec::NodeCurrent { node } = probe {
        if *node == tp.node {
            return Err(Error::invalid("the proviso probe must be internal, not the port node"));
        }
    }
    cfg.validate()?;
    let r = spiral.r_max;
    let mut jobs = vec![
        (TerminationCase::Open, None, Complex64::new(r, 0.0)),
        (TerminationCase::Short, None, Complex64::new(-r, 0.0)),
    ];
    jobs.extend(spiral.samples.iter().map(|s| (TerminationCase::Spiral, Some(s.h), s.gamma)));
    let cases: Vec<ProvisoCase> = jobs
        .par_iter()
        .map(|&(case, h, gamma)| {
            let run = || -> Result<Vec<Complex64>> {
                let loaded = with_termination(net, port, gamma)?;
                let resp = frequency_response(&loaded, probe, grid)?;
                let v = auto_identify(&resp, cfg)?;
                Ok(v.poles.iter().filter(|p| p.class == PoleClass::Unstable && p.value.im >= 0.0).map(|p| p.value).collect())
            };
            match run() {
                Ok(rhp_poles) => ProvisoCase { case, h, gamma, rhp_poles, error: None },
                Err(e) => ProvisoCase { case, h, gamma, rhp_poles: Vec::new(), error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(ProvisoReport {
        schema_version: PROVISO_SCHEMA_VERSION,
        port: port.into(),
        probe: probe.to_string(),
        r_max: r,
        turns: spiral.turns,
        findings: cases.iter().filter(|c| !c.rhp_poles.is_empty()).count(),
        failures: cases.iter().filter(|c| c.error.is_some()).count(),
        cases,
    })
}
