//! Stability interpretation of fitted models.
//!
//! The entry point is [`auto_identify`]: scan model orders, pick the
//! smallest adequate one, compute the residue factor ρ of every pole pair at
//! every port, and re-identify low-ρ unstable pairs in narrower sub-bands to
//! weed out over-modeling artifacts.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::FrequencyResponseSet;
use crate::poles::{assign_min_cost, match_poles, PolePair};
use crate::ratfit::{fit_common_denominator, FitConfig, FitReport, PartialFractionModel};

pub const STABILITY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoleClass {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPole {
    /// rad/s
    pub value: Complex64,
    pub resonant_freq_hz: f64,
    /// `-Re/|p|`; negative for unstable poles.
    pub damping: f64,
    pub class: PoleClass,
}

/// Classify and sort by descending real part (ties: descending Im).
pub fn classify_poles(poles: &[Complex64], margin_tol: f64) -> Vec<ClassifiedPole> {
    let mut out: Vec<ClassifiedPole> = poles
        .iter()
        .map(|&p| {
            let class = if p.re.abs() <= margin_tol {
                PoleClass::Marginal
            } else if p.re > 0.0 {
                PoleClass::Unstable
            } else {
                PoleClass::Stable
            };
            let mag = p.norm();
            ClassifiedPole {
                value: p,
                resonant_freq_hz: p.im.abs() / (2.0 * PI),
                damping: if mag > 0.0 { -p.re / mag } else { 0.0 },
                class,
            }
        })
        .collect();
    out.sort_by(|a, b| b.value.re.total_cmp(&a.value.re).then(b.value.im.total_cmp(&a.value.im)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CancellationOrigin {
    PhysicalLowSensitivity,
    NumericalOvermodeling,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiCancellation {
    pub pole: Complex64,
    pub zero: Complex64,
    pub rel_distance: f64,
    pub origin: CancellationOrigin,
}

/// Pole-zero pairs closer than `threshold` in relative distance
/// `|p - z| / max(|p|, omega_floor)`, using the minimum-total-distance
/// one-to-one pairing.
pub fn detect_quasi_cancellations(
    poles: &[Complex64],
    zeros: &[Complex64],
    threshold: f64,
    omega_floor: f64,
) -> Result<Vec<QuasiCancellation>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("cancellation threshold must be in (0, 1), got {threshold}")));
    }
    let rel = |p: Complex64, z: Complex64| (p - z).norm() / p.norm().max(omega_floor).max(f64::MIN_POSITIVE);
    let cost: Vec<Vec<f64>> = poles.iter().map(|&p| zeros.iter().map(|&z| rel(p, z)).collect()).collect();
    let mut out = Vec::new();
    for (i, j) in assign_min_cost(&cost).into_iter().enumerate() {
        let Some(j) = j else { continue };
        let d = cost[i][j];
        if d <= threshold {
            out.push(QuasiCancellation { pole: poles[i], zero: zeros[j], rel_distance: d, origin: CancellationOrigin::Undecided });
        }
    }
    Ok(out)
}

/// Residue factor of one pole pair at one port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rho {
    pub value: f64,
    /// The pair is the whole response at ω_r (vanishing complement, or the
    /// pole sits on the axis at ω_r); `value` is then `f64::MAX`.
    pub saturated: bool,
}

/// ρ of pair `pair` (an index into `model.pairs()`) at port `port`.
pub fn rho_factor(model: &PartialFractionModel, port: usize, pair: usize) -> Result<Rho> {
    let pairs = model.pairs();
    let pp = *pairs.get(pair).ok_or_else(|| Error::invalid(format!("model has no pole pair #{pair}")))?;
    if port >= model.ports.len() {
        return Err(Error::invalid(format!("model has no port #{port}")));
    }
    Ok(rho_of(model, port, pp))
}

fn rho_of(model: &PartialFractionModel, port: usize, pp: PolePair) -> Rho {
    let p = model.poles[pp.upper];
    let w_r = if pp.lower.is_some() { p.im.abs() } else { 0.0 };
    let s = Complex64::new(0.0, w_r);
    let on_pole = (s - p).norm() < 1e-300 || pp.lower.map_or(false, |l| (s - model.poles[l]).norm() < 1e-300);
    if model.ports[port].residues[pp.upper].norm() == 0.0 {
        return Rho { value: 0.0, saturated: false };
    }
    if on_pole {
        return Rho { value: f64::MAX, saturated: true };
    }
    let num = model.pair_contribution(port, pp, s).norm();
    let den = model.complement(port, pp, s).norm();
    if den < 1e-300 {
        return Rho { value: f64::MAX, saturated: true };
    }
    Rho { value: num / den, saturated: false }
}

/// `rho[n][k]` for every port `n` and pole pair `k` (in `model.pairs()` order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoMatrix {
    pub ports: Vec<String>,
    /// Upper member (or the real pole) of each pair.
    pub pairs: Vec<Complex64>,
    pub rho: Vec<Vec<f64>>,
    /// `(port, pair)` entries holding the saturation sentinel.
    pub saturated: Vec<(usize, usize)>,
}

impl RhoMatrix {
    pub fn compute(model: &PartialFractionModel) -> Self {
        let pairs = model.pairs();
        let mut saturated = Vec::new();
        let rho = (0..model.ports.len())
            .map(|n| {
                pairs
                    .iter()
                    .enumerate()
                    .map(|(k, pp)| {
                        let r = rho_of(model, n, *pp);
                        if r.saturated {
                            saturated.push((n, k));
                        }
                        r.value
                    })
                    .collect()
            })
            .collect();
        RhoMatrix {
            ports: model.ports.iter().map(|p| p.name.clone()).collect(),
            pairs: pairs.iter().map(|pp| model.poles[pp.upper]).collect(),
            rho,
            saturated,
        }
    }

    pub fn max_over_ports(&self, pair: usize) -> f64 {
        self.rho.iter().map(|row| row[pair]).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Physical,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandTrial {
    pub width_hz: f64,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub order: Option<usize>,
    /// Closest re-identified pole to the suspect, if any.
    pub nearest: Option<Complex64>,
    pub rel_distance: Option<f64>,
    pub found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandOutcome {
    pub suspect: Complex64,
    pub origin: Origin,
    pub trials: Vec<SubbandTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabConfig {
    /// Fitting template; its `order` is ignored.
    pub fit: FitConfig,
    /// Candidate orders, ascending.
    pub orders: Vec<usize>,
    /// RMS relative error an order must reach to be selected.
    pub err_target: f64,
    pub rho_floor: f64,
    pub cancel_tol: f64,
    /// rad/s; `None` means 1e-6 × the top grid frequency.
    pub margin_tol: Option<f64>,
    /// Relative distance within which a pole counts as the same pole.
    pub persist_tol: f64,
    /// Sub-band widths as fractions of the full band.
    pub subband_fractions: Vec<f64>,
}

impl Default for StabConfig {
    fn default() -> Self {
        StabConfig {
            fit: FitConfig::vf(0),
            orders: (0..=20).collect(),
            err_target: 1e-3,
            rho_floor: 1e-4,
            cancel_tol: 0.05,
            margin_tol: None,
            persist_tol: 0.02,
            subband_fractions: vec![1.0, 0.5, 0.25],
        }
    }
}

impl StabConfig {
    pub fn with_orders(mut self, orders: impl IntoIterator<Item = usize>) -> Self {
        self.orders = orders.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() {
            return Err(Error::invalid("order list is empty"));
        }
        if self.orders.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("orders must be strictly ascending"));
        }
        if !(self.err_target > 0.0) || !(self.rho_floor >= 0.0) || !(self.persist_tol > 0.0) {
            return Err(Error::invalid("err_target and persist_tol must be > 0, rho_floor >= 0"));
        }
        if !(self.cancel_tol > 0.0 && self.cancel_tol < 1.0) {
            return Err(Error::invalid("cancel_tol must be in (0, 1)"));
        }
        if self.subband_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::invalid("sub-band fractions must be in (0, 1]"));
        }
        self.fit.validate()
    }

    fn margin_for(&self, resps: &FrequencyResponseSet) -> f64 {
        self.margin_tol.unwrap_or(1e-6 * resps.grid().omega_max())
    }
}

/// One row of the order scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTrial {
    pub order: usize,
    pub rms_rel_error: Option<f64>,
    /// Every pole reappears at order + 2.
    pub persistent: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderScan {
    pub selected: usize,
    /// An order met both the error target and the persistence rule.
    pub converged: bool,
    pub model: PartialFractionModel,
    pub report: FitReport,
    pub trials: Vec<OrderTrial>,
}

fn fit_at(resps: &FrequencyResponseSet, cfg: &StabConfig, order: usize) -> Result<(PartialFractionModel, FitReport)> {
    let fc = FitConfig { order, ..cfg.fit.clone() };
    fit_common_denominator(resps, &fc)
}

/// Every pole of `a` has a partner in `b` within `tol` relative distance
/// under the optimal pairing.
fn persists(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    if a.len() > b.len() {
        return false;
    }
    let m = match_poles(a, b);
    m.len() == a.len() && m.iter().all(|&(i, j)| (a[i] - b[j]).norm() <= tol * a[i].norm().max(f64::MIN_POSITIVE))
}

/// Smallest order whose error meets the target and whose poles persist two
/// orders up. Falls back to the lowest-error attempt with `converged = false`.
pub fn select_order(resps: &FrequencyResponseSet, cfg: &StabConfig) -> Result<OrderScan> {
    cfg.validate()?;
    let mut needed: Vec<usize> = cfg.orders.iter().flat_map(|&n| [n, n + 2]).collect();
    needed.sort_unstable();
    needed.dedup();
    let fits: Vec<(usize, Result<(PartialFractionModel, FitReport)>)> =
        needed.par_iter().map(|&n| (n, fit_at(resps, cfg, n))).collect();
    let get = |n: usize| fits.iter().find(|(m, _)| *m == n).map(|(_, r)| r);

    let mut trials = Vec::with_capacity(cfg.orders.len());
    let mut chosen: Option<usize> = None;
    for &n in &cfg.orders {
        let Some(res) = get(n) else { continue };
        match res {
            Ok((model, rep)) => {
                let persistent = match get(n + 2) {
                    Some(Ok((up, _))) => Some(persists(&model.poles, &up.poles, cfg.persist_tol)),
                    _ => None,
                };
                trials.push(OrderTrial { order: n, rms_rel_error: Some(rep.rms_rel_error), persistent, error: None });
                // above the point budget the persistence check cannot run; only an
                // exact-fit model is then accepted on error alone
                let ok_persist = persistent.unwrap_or(rep.rms_rel_error <= 1e-12);
                if chosen.is_none() && rep.rms_rel_error <= cfg.err_target && ok_persist {
                    chosen = Some(n);
                }
            }
            Err(e) => trials.push(OrderTrial { order: n, rms_rel_error: None, persistent: None, error: Some(e.to_string()) }),
        }
    }
    let (selected, converged) = match chosen {
        Some(n) => (n, true),
        None => {
            let best = cfg
                .orders
                .iter()
                .filter_map(|&n| match get(n) {
                    Some(Ok((_, r))) => Some((n, r.rms_rel_error)),
                    _ => None,
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .ok_or_else(|| Error::Numeric("no candidate order could be fitted".into()))?;
            (best.0, false)
        }
    };
    let (model, mut report) = match get(selected) {
        Some(Ok(v)) => v.clone(),
        _ => unreachable!("selected order was fitted"),
    };
    report.converged = converged;
    Ok(OrderScan { selected, converged, model, report, trials })
}

/// Decide whether `suspect` is a physical pole by re-identifying the
/// response in sub-bands centered at its resonant frequency.
///
/// Each width (Hz) yields one sub-band, clipped to the grid. The pole is
/// physical when every sub-band re-identifies it within `cfg.persist_tol`.
/// Real suspects are centered at their corner frequency clamped to the grid.
pub fn subband_consistency_check(
    resps: &FrequencyResponseSet,
    suspect: Complex64,
    widths_hz: &[f64],
    cfg: &StabConfig,
) -> Result<SubbandOutcome> {
    let grid = resps.grid();
    // A real pole has no resonance; its corner frequency, pulled into the
    // band, centers the sub-bands instead.
    let f_r = if suspect.im == 0.0 {
        (suspect.re.abs() / (2.0 * PI)).clamp(grid.f_min(), grid.f_max())
    } else {
        suspect.im.abs() / (2.0 * PI)
    };
    if f_r < grid.f_min() || f_r > grid.f_max() {
        return Err(Error::invalid(format!(
            "suspect resonance {f_r:.6e} Hz lies outside the grid [{:.6e}, {:.6e}] Hz",
            grid.f_min(),
            grid.f_max()
        )));
    }
    if widths_hz.is_empty() {
        return Err(Error::invalid("no sub-band widths given"));
    }
    let mut trials = Vec::with_capacity(widths_hz.len());
    for &w in widths_hz {
        if !(w > 0.0) {
            return Err(Error::invalid("sub-band widths must be positive"));
        }
        let (lo, hi) = centered_band(f_r, w, grid.f_min(), grid.f_max());
        let sub = resps.slice_band(lo, hi).map_err(|e| Error::invalid(format!("sub-band of width {w:.6e} Hz: {e}")))?;
        let orders: Vec<usize> = cfg.orders.iter().copied().filter(|&n| n + 3 <= sub.grid().len()).collect();
        if orders.is_empty() {
            return Err(Error::invalid(format!("sub-band of width {w:.6e} Hz is too narrow for any fit")));
        }
        let sub_cfg = StabConfig { orders, ..cfg.clone() };
        let trial = match select_order(&sub, &sub_cfg) {
            Ok(scan) => {
                let nearest = scan
                    .model
                    .poles
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - suspect).norm().total_cmp(&(b - suspect).norm()));
                let rel = nearest.map(|p| (p - suspect).norm() / suspect.norm().max(f64::MIN_POSITIVE));
                SubbandTrial {
                    width_hz: w,
                    f_lo_hz: sub.grid().f_min(),
                    f_hi_hz: sub.grid().f_max(),
                    order: Some(scan.selected),
                    nearest,
                    rel_distance: rel,
                    found: rel.map_or(false, |d| d <= cfg.persist_tol),
                }
            }
            Err(_) => SubbandTrial {
                width_hz: w,
                f_lo_hz: sub.grid().f_min(),
                f_hi_hz: sub.grid().f_max(),
                order: None,
                nearest: None,
                rel_distance: None,
                found: false,
            },
        };
        trials.push(trial);
    }
    let origin = if trials.iter().all(|t| t.found) { Origin::Physical } else { Origin::Numerical };
    Ok(SubbandOutcome { suspect, origin, trials })
}

/// `[f - w/2, f + w/2]`, shifted to stay inside `[lo, hi]` where possible.
fn centered_band(f: f64, w: f64, lo: f64, hi: f64) -> (f64, f64) {
    if w >= hi - lo {
        return (lo, hi);
    }
    let mut a = f - 0.5 * w;
    let mut b = f + 0.5 * w;
    if a < lo {
        b += lo - a;
        a = lo;
    }
    if b > hi {
        a -= b - hi;
        b = hi;
    }
    (a.max(lo), b.min(hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedPair {
    pub pole: Complex64,
    pub max_rho: f64,
    pub audit: SubbandOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub schema_version: u32,
    pub stable: bool,
    /// Unstable and marginal poles that survived pruning.
    pub critical_poles: Vec<ClassifiedPole>,
    /// Every surviving pole, classified.
    pub poles: Vec<ClassifiedPole>,
    pub cancellations: Vec<PortCancellation>,
    pub rho: RhoMatrix,
    pub model: PartialFractionModel,
    pub scan: Vec<OrderTrial>,
    pub selected_order: usize,
    pub converged: bool,
    pub rms_rel_error: f64,
    pub margin_tol: f64,
    pub pruned: Vec<PrunedPair>,
    /// Low-ρ unstable pairs that were confirmed physical.
    pub confirmed: Vec<PrunedPair>,
    pub config: StabConfig,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortCancellation {
    pub port: String,
    #[serde(flatten)]
    pub cancellation: QuasiCancellation,
}

impl StabilityVerdict {
    /// Number of unstable or marginal conjugate pairs (real poles count one).
    pub fn critical_pairs(&self) -> usize {
        self.critical_poles.iter().filter(|p| p.value.im >= 0.0).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: StabilityVerdict = serde_json::from_str(text)?;
        if v.schema_version != STABILITY_SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported verdict schema version {}", v.schema_version)));
        }
        Ok(v)
    }
}

/// Full identification pipeline: order scan, ρ analysis, sub-band pruning
/// of low-ρ unstable pairs, classification.
pub fn auto_identify(resps: &FrequencyResponseSet, cfg: &StabConfig) -> Result<StabilityVerdict> {
    let scan = select_order(resps, cfg)?;
    verdict_for_model(resps, scan.model.clone(), cfg, scan.trials, scan.selected, scan.converged, scan.report.rms_rel_error)
}

/// Pipeline steps after order selection, for a given model.
pub fn verdict_for_model(
    resps: &FrequencyResponseSet,
    model: PartialFractionModel,
    cfg: &StabConfig,
    scan: Vec<OrderTrial>,
    selected_order: usize,
    converged: bool,
    rms_rel_error: f64,
) -> Result<StabilityVerdict> {
    cfg.validate()?;
    let margin_tol = cfg.margin_for(resps);
    let omega_floor = 1e-9 * resps.grid().omega_max();
    let rho = RhoMatrix::compute(&model);
    let pairs = model.pairs();
    let band = resps.grid().f_max() - resps.grid().f_min();
    let widths: Vec<f64> = cfg.subband_fractions.iter().map(|f| f * band).collect();

    let mut notes = Vec::new();
    let mut pruned = Vec::new();
    let mut confirmed = Vec::new();
    let mut removed = vec![false; model.poles.len()];
    for (k, pp) in pairs.iter().enumerate() {
        let p = model.poles[pp.upper];
        if p.re <= margin_tol {
            continue;
        }
        let max_rho = rho.max_over_ports(k);
        if max_rho >= cfg.rho_floor {
            continue;
        }
        match subband_consistency_check(resps, p, &widths, cfg) {
            Ok(out) if out.origin == Origin::Numerical => {
                removed[pp.upper] = true;
                if let Some(l) = pp.lower {
                    removed[l] = true;
                }
                pruned.push(PrunedPair { pole: p, max_rho, audit: out });
            }
            Ok(out) => confirmed.push(PrunedPair { pole: p, max_rho, audit: out }),
            Err(e) => notes.push(format!("sub-band check of {p} skipped: {e}")),
        }
    }

    let mut cancellations = Vec::new();
    for (n, port) in model.ports.iter().enumerate() {
        let zeros = match model.zeros(n) {
            Ok(z) => z,
            Err(e) => {
                notes.push(format!("zeros of port {} unavailable: {e}", port.name));
                continue;
            }
        };
        for mut qc in detect_quasi_cancellations(&model.poles, &zeros, cfg.cancel_tol, omega_floor)? {
            if pruned.iter().any(|pp| same_pair(pp.pole, qc.pole)) {
                qc.origin = CancellationOrigin::NumericalOvermodeling;
            } else if confirmed.iter().any(|pp| same_pair(pp.pole, qc.pole)) {
                qc.origin = CancellationOrigin::PhysicalLowSensitivity;
            }
            cancellations.push(PortCancellation { port: port.name.clone(), cancellation: qc });
        }
    }

    let kept: Vec<Complex64> = model.poles.iter().zip(&removed).filter(|(_, r)| !**r).map(|(p, _)| *p).collect();
    let poles = classify_poles(&kept, margin_tol);
    let critical_poles: Vec<ClassifiedPole> = poles.iter().filter(|p| p.class != PoleClass::Stable).cloned().collect();
    let stable = !poles.iter().any(|p| p.class == PoleClass::Unstable);
    if !converged {
        notes.push("no candidate order met the error target with persistent poles; best attempt reported".into());
    }
    Ok(StabilityVerdict {
        schema_version: STABILITY_SCHEMA_VERSION,
        stable,
        critical_poles,
        poles,
        cancellations,
        rho,
        model,
        scan,
        selected_order,
        converged,
        rms_rel_error,
        margin_tol,
        pruned,
        confirmed,
        config: cfg.clone(),
        notes,
    })
}

fn same_pair(a: Complex64, b: Complex64) -> bool {
    a == b || a == b.conj()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortRank {
    pub port: String,
    pub rho: f64,
}

/// Ports by descending ρ for pair `pair`; values equal to within rounding
/// keep declaration order.
pub fn rank_ports(verdict: &StabilityVerdict, pair: usize) -> Result<Vec<PortRank>> {
    rank_rho(&verdict.rho, pair)
}

pub fn rank_rho(rho: &RhoMatrix, pair: usize) -> Result<Vec<PortRank>> {
    if pair >= rho.pairs.len() {
        return Err(Error::invalid(format!("no pole pair #{pair}")));
    }
    let mut out: Vec<PortRank> = Vec::with_capacity(rho.ports.len());
    for (n, name) in rho.ports.iter().enumerate() {
        let v = rho.rho[n][pair];
        // insert after every entry that is not clearly smaller
        let pos = out
            .iter()
            .position(|e| e.rho < v && (v - e.rho) > 4.0 * f64::EPSILON * v.abs())
            .unwrap_or(out.len());
        out.insert(pos, PortRank { port: name.clone(), rho: v });
    }
    Ok(out)
}

/// Index of the pair with the largest real part (the dominant pair).
pub fn dominant_pair(rho: &RhoMatrix) -> Option<usize> {
    (0..rho.pairs.len()).max_by(|&a, &b| rho.pairs[a].re.total_cmp(&rho.pairs[b].re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::freqresp::FrequencyGrid;
    use crate::ratfit::PfPort;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn model_1(d: f64) -> PartialFractionModel {
        PartialFractionModel::from_upper("h", &[(c(-1.0, 10.0), c(1.0, 0.0))], d).unwrap()
    }

    #[test]
    fn classification_examples() {
        let got = classify_poles(&[c(-1.0, 1.0), c(1e8, 2.0 * PI * 1.4e9), c(0.0, 5.0)], 1e-3);
        assert_eq!(got[0].class, PoleClass::Unstable);
        assert!((got[0].resonant_freq_hz - 1.4e9).abs() < 1e-3);
        assert_eq!(got[1].class, PoleClass::Marginal);
        assert_eq!(got[2].class, PoleClass::Stable);
        assert!(got[0].damping < 0.0);
    }

    #[test]
    fn exact_and_distant_cancellations() {
        let p = c(-1.0, 10.0);
        let q = detect_quasi_cancellations(&[p], &[p], 0.05, 1e-9).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].rel_distance, 0.0);
        assert_eq!(q[0].origin, CancellationOrigin::Undecided);
        let q = detect_quasi_cancellations(&[p], &[c(-1.0, 1000.0)], 0.05, 1e-9).unwrap();
        assert!(q.is_empty());
        assert!(detect_quasi_cancellations(&[p], &[p], 1.0, 1e-9).is_err());
    }

    #[test]
    fn cancellation_pairing_is_optimal() {
        // greedy would pair p0 with z0 (0.010) leaving p1-z1 (0.3): total 0.31;
        // the optimum pairs p0-z1 and p1-z0 for a total near 0.03
        let poles = [c(0.0, 100.0), c(0.0, 102.0)];
        let zeros = [c(0.0, 101.0), c(0.0, 70.0)];
        let q = detect_quasi_cancellations(&poles, &zeros, 0.5, 1e-9).unwrap();
        let total: f64 = q.iter().map(|x| x.rel_distance).sum();
        // enumerate both assignments
        let d = |p: Complex64, z: Complex64| (p - z).norm() / p.norm();
        let a = d(poles[0], zeros[0]) + d(poles[1], zeros[1]);
        let b = d(poles[0], zeros[1]) + d(poles[1], zeros[0]);
        assert_eq!(q.len(), 2);
        assert!((total - a.min(b)).abs() < 1e-15);
    }

    #[test]
    fn rho_examples() {
        let r = rho_factor(&model_1(1.0), 0, 0).unwrap();
        assert!((r.value - (404f64 / 401.0).sqrt()).abs() < 1e-12);
        let r = rho_factor(&model_1(100.0), 0, 0).unwrap();
        // the complement is the direct term alone
        assert!((r.value - (404f64 / 401.0).sqrt() / 100.0).abs() < 1e-14);
        assert!((r.value - 0.0100374).abs() < 1e-6);
        let zero = PartialFractionModel::from_upper("h", &[(c(-1.0, 10.0), c(0.0, 0.0))], 1.0).unwrap();
        assert_eq!(rho_factor(&zero, 0, 0).unwrap().value, 0.0);
        assert!(rho_factor(&zero, 0, 3).is_err());
    }

    #[test]
    fn rho_saturates_when_pair_is_everything() {
        // H = 1/(s-p) + 1/(s-p*) evaluated at ω_r = 10 has a zero complement
        let r = rho_factor(&model_1(0.0), 0, 0).unwrap();
        assert!(r.saturated);
        assert_eq!(r.value, f64::MAX);
    }

    #[test]
    fn rho_for_real_pole_uses_dc() {
        let m = PartialFractionModel::from_upper("h", &[(c(-2.0, 0.0), c(4.0, 0.0))], 1.0).unwrap();
        // contribution 4/2 = 2 at s = 0, complement 1
        assert!((rho_factor(&m, 0, 0).unwrap().value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ranking_ties_keep_declaration_order() {
        let rho = RhoMatrix {
            ports: vec!["a".into(), "b".into(), "c".into()],
            pairs: vec![c(1.0, 1.0)],
            rho: vec![vec![0.5], vec![0.5 * (1.0 + f64::EPSILON)], vec![3.0]],
            saturated: vec![],
        };
        let r = rank_rho(&rho, 0).unwrap();
        let names: Vec<&str> = r.iter().map(|x| x.port.as_str()).collect();
        assert_eq!(names, ["c", "a", "b"]);
        assert!(rank_rho(&rho, 1).is_err());
    }

    #[test]
    fn constant_response_selects_order_zero() {
        let grid = FrequencyGrid::linear(1e6, 1e9, 60).unwrap();
        let data = FrequencyResponseSet::single(grid, "h", vec![c(2.5, 0.0); 60]).unwrap();
        let v = auto_identify(&data, &StabConfig::default().with_orders(0..=6)).unwrap();
        assert_eq!(v.selected_order, 0);
        assert!(v.stable);
        assert!(v.poles.is_empty());
        assert!(v.converged);
    }

    #[test]
    fn clean_unstable_model_is_flagged() {
        let m = PartialFractionModel::from_upper("h", &[(c(5e7, 2e9), c(1e8, 0.0)), (c(-2e8, 6e9), c(3e8, 1e8))], 0.0).unwrap();
        let grid = FrequencyGrid::linear(1e6, 1.5e9, 300).unwrap();
        let v = auto_identify(&m.sample(&grid).unwrap(), &StabConfig::default().with_orders(1..=8)).unwrap();
        assert_eq!(v.selected_order, 4);
        assert!(!v.stable);
        assert_eq!(v.critical_pairs(), 1);
        assert!((v.critical_poles[0].value - c(5e7, 2e9)).norm() < 1e-6 * 2e9);
        let json = v.to_json().unwrap();
        assert_eq!(StabilityVerdict::from_json(&json).unwrap(), v);
    }

    #[test]
    fn subband_rejects_out_of_grid_suspect() {
        let m = model_1(1.0);
        let grid = FrequencyGrid::linear(0.1, 3.0, 100).unwrap();
        let data = m.sample(&grid).unwrap();
        let err = subband_consistency_check(&data, c(1.0, 2.0 * PI * 50.0), &[1.0], &StabConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn subband_confirms_a_true_unstable_pole() {
        let p = c(3e7, 2.0 * PI * 1e9);
        let m = PartialFractionModel::from_upper("h", &[(p, c(1e7, 2e6)), (c(-5e8, 2.0 * PI * 3e9), c(2e9, 0.0))], 0.5).unwrap();
        let grid = FrequencyGrid::linear(1e7, 4e9, 400).unwrap();
        let data = m.sample(&grid).unwrap();
        let band = grid.f_max() - grid.f_min();
        let out = subband_consistency_check(&data, p, &[band, band / 2.0, band / 4.0], &StabConfig::default().with_orders(0..=8)).unwrap();
        assert_eq!(out.origin, Origin::Physical, "{out:?}");
        assert_eq!(out.trials.len(), 3);
    }

    #[test]
    fn config_validation() {
        assert!(StabConfig::default().with_orders(Vec::<usize>::new()).validate().is_err());
        assert!(StabConfig::default().with_orders([4, 2]).validate().is_err());
        assert!(StabConfig { cancel_tol: 0.0, ..StabConfig::default() }.validate().is_err());
    }

    #[test]
    fn centered_band_is_clipped() {
        assert_eq!(centered_band(5.0, 2.0, 0.0, 10.0), (4.0, 6.0));
        assert_eq!(centered_band(0.5, 2.0, 0.0, 10.0), (0.0, 2.0));
        assert_eq!(centered_band(9.5, 2.0, 0.0, 10.0), (8.0, 10.0));
        assert_eq!(centered_band(5.0, 20.0, 0.0, 10.0), (0.0, 10.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rho_is_scale_invariant(seed in 0u64..10_000, order in 2usize..10, k in -6.0f64..6.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = fixtures::random_pf_model(&mut rng, order, 1e9, 1, 1e3);
            let scale = 10f64.powf(k) * if seed % 2 == 0 { 1.0 } else { -1.0 };
            let scaled = PartialFractionModel {
                poles: m.poles.clone(),
                ports: vec![PfPort {
                    name: "h".into(),
                    residues: m.ports[0].residues.iter().map(|r| r * scale).collect(),
                    direct: m.ports[0].direct * scale,
                }],
            };
            for pair in 0..m.pairs().len() {
                let a = rho_factor(&m, 0, pair).unwrap().value;
                let b = rho_factor(&scaled, 0, pair).unwrap().value;
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            }
        }

        #[test]
        fn conjugates_share_a_class(re in -10.0f64..10.0, im in 0.1f64..100.0, tol in 0.0f64..1.0) {
            let p = c(re, im);
            let got = classify_poles(&[p, p.conj()], tol);
            prop_assert_eq!(got[0].class, got[1].class);
        }
    }
}
