//! Rational-model fitting.
//!
//! Two engines share one configuration type:
//!
//! * [`fit_polynomial_ratio`] fits `A(s)/B(s)` with Levy's linearization and
//!   Sanathanan–Koerner reweighting. The frequency variable is normalized by
//!   the top grid frequency and the coefficient vector is the unit-norm
//!   smallest singular direction of the stacked real system.
//! * [`fit_common_denominator`] is relaxed vector fitting: one pole set for
//!   every port, per-port residues and a real direct term.
//!
//! Neither engine reflects unstable poles into the left half plane.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::{FrequencyGrid, FrequencyResponseSet, PortLabel, PortResponse, ResponseKind};
use crate::linalg;
use crate::poles::{pole_pairs, sort_poles, PolePair};

const LSTSQ_RCOND: f64 = 1e-14;
/// Trailing polynomial coefficients below this fraction of the largest
/// coefficient are treated as exact zeros before root finding.
const COEFF_TRIM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Poly,
    Vf,
}

impl std::str::FromStr for FitMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poly" => Ok(FitMethod::Poly),
            "vf" => Ok(FitMethod::Vf),
            _ => Err(Error::invalid(format!("unknown fit method `{s}` (poly|vf)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseMagnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub order: usize,
    pub method: FitMethod,
    /// Sanathanan–Koerner iterations (poly) or pole relocations (vf).
    pub iters: usize,
    pub weight: Weighting,
    /// Phase-error quality target in degrees, reported against.
    pub phase_tol_deg: f64,
    /// Relaxed non-triviality constraint for vector fitting; `false` pins the
    /// scaling function's constant term to one.
    pub relaxed: bool,
    /// Relative pole (or coefficient) change below which iteration stops.
    pub tol: f64,
}

impl FitConfig {
    pub fn vf(order: usize) -> Self {
        FitConfig {
            order,
            method: FitMethod::Vf,
            iters: 30,
            weight: Weighting::Uniform,
            phase_tol_deg: 1.0,
            relaxed: true,
            tol: 1e-11,
        }
    }

    pub fn poly(order: usize) -> Self {
        FitConfig { method: FitMethod::Poly, iters: 20, ..Self::vf(order) }
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.iters = iters;
        self
    }

    pub fn with_weight(mut self, weight: Weighting) -> Self {
        self.weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.iters > 100 {
            return Err(Error::invalid(format!("iters must be in 1..=100, got {}", self.iters)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub rms_rel_error: f64,
    pub max_phase_err_deg: f64,
    pub iters_used: usize,
    pub converged: bool,
}

/// `H(s) = A(s/s_scale) / B(s/s_scale)` with real, jointly unit-norm
/// coefficients in ascending powers of the normalized variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialRatioModel {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    /// rad/s
    pub s_scale: f64,
}

impl PolynomialRatioModel {
    /// Normalizes `(num, den)` to unit joint norm.
    pub fn new(num: Vec<f64>, den: Vec<f64>, s_scale: f64) -> Result<Self> {
        if den.iter().all(|b| *b == 0.0) {
            return Err(Error::invalid("zero denominator polynomial"));
        }
        if !(s_scale > 0.0 && s_scale.is_finite()) {
            return Err(Error::invalid("s_scale must be positive"));
        }
        let norm = num.iter().chain(den.iter()).map(|v| v * v).sum::<f64>().sqrt();
        Ok(PolynomialRatioModel {
            num: num.iter().map(|v| v / norm).collect(),
            den: den.iter().map(|v| v / norm).collect(),
            s_scale,
        })
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let x = s / self.s_scale;
        let b = horner(&self.den, x);
        if b.norm() < 1e-300 {
            return Err(Error::AtPole { re: s.re, im: s.im });
        }
        Ok(horner(&self.num, x) / b)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        scaled_roots(&self.den, self.s_scale, self.coeff_floor())
    }

    pub fn zeros(&self) -> Result<Vec<Complex64>> {
        if self.num.iter().all(|a| *a == 0.0) {
            return Ok(Vec::new());
        }
        scaled_roots(&self.num, self.s_scale, self.coeff_floor())
    }

    fn coeff_floor(&self) -> f64 {
        COEFF_TRIM * self.num.iter().chain(self.den.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

fn horner(c: &[f64], x: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * x + v)
}

fn scaled_roots(c: &[f64], scale: f64, floor: f64) -> Result<Vec<Complex64>> {
    let mut deg = c.len();
    while deg > 0 && c[deg - 1].abs() <= floor {
        deg -= 1;
    }
    if deg == 0 {
        return Err(Error::invalid("zero polynomial"));
    }
    let mut r: Vec<Complex64> = linalg::poly_roots(&c[..deg])?.into_iter().map(|z| z * scale).collect();
    sort_poles(&mut r);
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfPort {
    pub name: String,
    /// One residue per model pole, same order as the poles.
    pub residues: Vec<Complex64>,
    pub direct: f64,
}

/// `H_n(s) = Σ_k r_{n,k} / (s - p_k) + D_n` with a pole set shared by all
/// ports. Poles are stored in canonical order (see [`sort_poles`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialFractionModel {
    pub poles: Vec<Complex64>,
    pub ports: Vec<PfPort>,
}

impl PartialFractionModel {
    /// Checks conjugate closure of poles and residues and sorts poles
    /// canonically (residues follow).
    pub fn new(poles: Vec<Complex64>, ports: Vec<PfPort>) -> Result<Self> {
        for p in &ports {
            if p.residues.len() != poles.len() {
                return Err(Error::invalid(format!("port {} has {} residues for {} poles", p.name, p.residues.len(), poles.len())));
            }
        }
        let mut order: Vec<usize> = (0..poles.len()).collect();
        let mut sorted = poles.clone();
        sort_poles(&mut sorted);
        // recover the permutation (exact values, stable under duplicates)
        let mut taken = vec![false; poles.len()];
        for (k, target) in sorted.iter().enumerate() {
            let i = (0..poles.len()).find(|&i| !taken[i] && poles[i] == *target).expect("same multiset");
            taken[i] = true;
            order[k] = i;
        }
        let ports: Vec<PfPort> = ports
            .into_iter()
            .map(|p| PfPort { residues: order.iter().map(|&i| p.residues[i]).collect(), ..p })
            .collect();
        let model = PartialFractionModel { poles: sorted, ports };
        model.check_conjugate_closure()?;
        Ok(model)
    }

    /// Single-port convenience constructor from upper-half poles; conjugates
    /// are added automatically for complex entries.
    pub fn from_upper(name: &str, upper: &[(Complex64, Complex64)], direct: f64) -> Result<Self> {
        let mut poles = Vec::new();
        let mut res = Vec::new();
        for &(p, r) in upper {
            poles.push(p);
            res.push(if p.im == 0.0 { Complex64::new(r.re, 0.0) } else { r });
            if p.im != 0.0 {
                poles.push(p.conj());
                res.push(r.conj());
            }
        }
        Self::new(poles, vec![PfPort { name: name.into(), residues: res, direct }])
    }

    fn check_conjugate_closure(&self) -> Result<()> {
        for pair in pole_pairs(&self.poles) {
            let p = self.poles[pair.upper];
            match pair.lower {
                None if p.im != 0.0 => {
                    return Err(Error::invalid(format!("pole {p} has no conjugate partner")))
                }
                None => {
                    for port in &self.ports {
                        if port.residues[pair.upper].im != 0.0 {
                            return Err(Error::invalid("real pole with complex residue"));
                        }
                    }
                }
                Some(l) => {
                    if self.poles[l] != p.conj() {
                        return Err(Error::invalid(format!("pole {p} is not exactly conjugated")));
                    }
                    for port in &self.ports {
                        if port.residues[l] != port.residues[pair.upper].conj() {
                            return Err(Error::invalid("conjugate poles need conjugate residues"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.poles.len()
    }

    pub fn port_index(&self, name: &str) -> Option<usize> {
        self.ports.iter().position(|p| p.name == name)
    }

    /// Real poles and conjugate pairs, in pole order.
    pub fn pairs(&self) -> Vec<PolePair> {
        pole_pairs(&self.poles)
    }

    /// Term-by-term evaluation of port `n` at complex frequency `s`.
    pub fn eval(&self, n: usize, s: Complex64) -> Result<Complex64> {
        // Conjugate terms are summed together first so that
        // H(conj(s)) == conj(H(s)) holds bit for bit.
        let port = &self.ports[n];
        let term = |k: usize| -> Result<Complex64> {
            let d = s - self.poles[k];
            if d.norm() < 1e-300 {
                return Err(Error::AtPole { re: s.re, im: s.im });
            }
            Ok(port.residues[k] / d)
        };
        let mut acc = Complex64::new(port.direct, 0.0);
        let mut k = 0;
        while k < self.poles.len() {
            let p = self.poles[k];
            if p.im > 0.0 && self.poles.get(k + 1) == Some(&p.conj()) {
                acc += term(k)? + term(k + 1)?;
                k += 2;
            } else {
                acc += term(k)?;
                k += 1;
            }
        }
        Ok(acc)
    }

    /// Samples every port on `grid` as transfer-kind data.
    pub fn sample(&self, grid: &FrequencyGrid) -> Result<FrequencyResponseSet> {
        let ports = (0..self.ports.len())
            .map(|n| {
                let values = grid
                    .omegas()
                    .into_iter()
                    .map(|w| self.eval(n, Complex64::new(0.0, w)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(PortResponse {
                    label: PortLabel::external(self.ports[n].name.clone()),
                    kind: ResponseKind::Transfer,
                    values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FrequencyResponseSet::new(grid.clone(), ports)
    }

    /// Contribution `H_{n,k}(s)` of one real pole or conjugate pair.
    pub fn pair_contribution(&self, n: usize, pair: PolePair, s: Complex64) -> Complex64 {
        let port = &self.ports[n];
        let mut acc = port.residues[pair.upper] / (s - self.poles[pair.upper]);
        if let Some(l) = pair.lower {
            acc += port.residues[l] / (s - self.poles[l]);
        }
        acc
    }

    /// Everything except one pair: the other terms plus the direct term.
    pub fn complement(&self, n: usize, pair: PolePair, s: Complex64) -> Complex64 {
        let port = &self.ports[n];
        let mut acc = Complex64::new(port.direct, 0.0);
        for (k, (p, r)) in self.poles.iter().zip(&port.residues).enumerate() {
            if k == pair.upper || Some(k) == pair.lower {
                continue;
            }
            acc += r / (s - p);
        }
        acc
    }

    /// Zeros of port `n`.
    ///
    /// With a significant direct term the zeros are the eigenvalues of
    /// `A - B D⁻¹ C` for the real block-diagonal realization, computed as the
    /// finite eigenvalues of the system pencil `[[A, B], [C, D]]`. Otherwise
    /// the expanded numerator polynomial is factored.
    pub fn zeros(&self, n: usize) -> Result<Vec<Complex64>> {
        let port = &self.ports[n];
        let order = self.poles.len();
        if order == 0 {
            return Ok(Vec::new());
        }
        let scale = self.poles.iter().fold(0.0_f64, |m, p| m.max(p.norm())).max(f64::MIN_POSITIVE);
        let poles: Vec<Complex64> = self.poles.iter().map(|p| p / scale).collect();
        let res: Vec<Complex64> = port.residues.iter().map(|r| r / scale).collect();
        let rmax = res.iter().fold(0.0_f64, |m, r| m.max(r.norm()));
        if rmax == 0.0 && port.direct == 0.0 {
            return Ok(Vec::new());
        }
        let mut zeros = if port.direct.abs() > 1e-12 * rmax {
            let (a, b) = real_realization(&poles);
            let cvec = real_output_row(&poles, &res);
            let dim = order + 1;
            let mut sys = DMatrix::<f64>::zeros(dim, dim);
            let mut e = DMatrix::<f64>::zeros(dim, dim);
            sys.view_mut((0, 0), (order, order)).copy_from(&a);
            for k in 0..order {
                sys[(k, order)] = b[k];
                sys[(order, k)] = cvec[k];
                e[(k, k)] = 1.0;
            }
            sys[(order, order)] = port.direct;
            let (z, _) = linalg::generalized_eigenvalues(&sys, &e, 1.0, 1e15)?
                .ok_or_else(|| Error::Numeric("zero pencil is singular".into()))?;
            z
        } else if let Some(z) = relative_degree_one_zeros(&poles, &res)? {
            z
        } else {
            let num = expanded_numerator(&poles, &res, port.direct);
            let floor = COEFF_TRIM * num.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let mut deg = num.len();
            while deg > 0 && num[deg - 1].abs() <= floor {
                deg -= 1;
            }
            linalg::poly_roots(&num[..deg])?
        };
        for z in zeros.iter_mut() {
            *z *= scale;
        }
        sort_poles(&mut zeros);
        Ok(zeros)
    }
}

/// Zeros of a strictly proper port with `c·b ≠ 0`: the zero dynamics
/// `A - b·cA/(cb)` leave `ker c` invariant, so the zeros are the eigenvalues
/// of that operator compressed onto an orthonormal basis of `ker c`.
/// Returns `None` when `c·b` is too small for the projection to be reliable.
fn relative_degree_one_zeros(poles: &[Complex64], res: &[Complex64]) -> Result<Option<Vec<Complex64>>> {
    let (a, b) = real_realization(poles);
    let b = DVector::from_vec(b);
    let c = DVector::from_vec(real_output_row(poles, res));
    let n = c.len();
    let cb = c.dot(&b);
    if !(cb.abs() > 1e-8 * c.norm() * b.norm()) {
        return Ok(None);
    }
    if n == 1 {
        return Ok(Some(Vec::new()));
    }
    // Householder reflector sending c to a multiple of e1; its other columns span ker c.
    let mut w = c.clone() / c.norm();
    w[0] += if w[0] >= 0.0 { 1.0 } else { -1.0 };
    let w = w.normalize();
    let h = DMatrix::<f64>::identity(n, n) - &w * w.transpose() * 2.0;
    let basis = h.columns(1, n - 1).into_owned();
    let ca = c.transpose() * &a;
    let zd = &a - &b * ca / cb;
    let reduced = basis.transpose() * zd * &basis;
    Ok(Some(linalg::eigenvalues(&reduced)?))
}

/// Real block-diagonal state matrix and input vector for a conjugate-closed
/// pole list (pairs become `[[α, β], [-β, α]]` with input `[2, 0]`).
fn real_realization(poles: &[Complex64]) -> (DMatrix<f64>, Vec<f64>) {
    let n = poles.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = vec![0.0; n];
    let mut k = 0;
    for pair in pole_pairs(poles) {
        let p = poles[pair.upper];
        if pair.lower.is_some() {
            a[(k, k)] = p.re;
            a[(k, k + 1)] = p.im;
            a[(k + 1, k)] = -p.im;
            a[(k + 1, k + 1)] = p.re;
            b[k] = 2.0;
            k += 2;
        } else {
            a[(k, k)] = p.re;
            b[k] = 1.0;
            k += 1;
        }
    }
    (a, b)
}

/// Output row matching [`real_realization`]: `[Re r, Im r]` per pair.
fn real_output_row(poles: &[Complex64], res: &[Complex64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(poles.len());
    for pair in pole_pairs(poles) {
        let r = res[pair.upper];
        if pair.lower.is_some() {
            c.push(r.re);
            c.push(r.im);
        } else {
            c.push(r.re);
        }
    }
    c
}

/// Real coefficients (ascending) of `Σ r_k Π_{j≠k}(s - p_j) + D Π_j (s - p_j)`.
fn expanded_numerator(poles: &[Complex64], res: &[Complex64], direct: f64) -> Vec<f64> {
    let n = poles.len();
    let mut total = vec![Complex64::new(0.0, 0.0); n + 1];
    let full = poly_from_roots(poles);
    for (c, f) in total.iter_mut().zip(&full) {
        *c += f * direct;
    }
    for k in 0..n {
        let others: Vec<Complex64> = poles.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, p)| *p).collect();
        let q = poly_from_roots(&others);
        for (c, f) in total.iter_mut().zip(&q) {
            *c += f * res[k];
        }
    }
    total.iter().map(|c| c.re).collect()
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, v) in c.iter().enumerate() {
            next[i + 1] += v;
            next[i] -= v * r;
        }
        c = next;
    }
    c
}

/// Either kind of fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum RationalModel {
    Poly(PolynomialRatioModel),
    Vf(PartialFractionModel),
}

impl From<PolynomialRatioModel> for RationalModel {
    fn from(m: PolynomialRatioModel) -> Self {
        RationalModel::Poly(m)
    }
}

impl From<PartialFractionModel> for RationalModel {
    fn from(m: PartialFractionModel) -> Self {
        RationalModel::Vf(m)
    }
}

impl RationalModel {
    pub fn n_ports(&self) -> usize {
        match self {
            RationalModel::Poly(_) => 1,
            RationalModel::Vf(m) => m.ports.len(),
        }
    }

    pub fn eval(&self, port: usize, s: Complex64) -> Result<Complex64> {
        match self {
            RationalModel::Poly(m) => m.eval(s),
            RationalModel::Vf(m) => m.eval(port, s),
        }
    }
}

/// Poles and zeros of a model. Partial-fraction models need a port name for
/// the zeros; polynomial models ignore `port`.
pub fn poles_and_zeros(model: &RationalModel, port: Option<&str>) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    match model {
        RationalModel::Poly(m) => Ok((m.poles()?, m.zeros()?)),
        RationalModel::Vf(m) => {
            let name = port.ok_or_else(|| Error::invalid("partial-fraction zeros are per port: name one"))?;
            let n = m.port_index(name).ok_or_else(|| Error::Unknown { kind: "port", name: name.into() })?;
            Ok((m.poles.clone(), m.zeros(n)?))
        }
    }
}

/// Model samples of `port` on `grid` at s = jω.
pub fn evaluate_model(model: &RationalModel, port: usize, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    if port >= model.n_ports() {
        return Err(Error::invalid(format!("model has no port #{port}")));
    }
    grid.omegas()
        .into_iter()
        .map(|w| model.eval(port, Complex64::new(0.0, w)))
        .collect()
}

/// Error metrics of a model against data. Port `n` of the model is compared
/// with port `n` of `resp`.
pub fn fit_error(model: &RationalModel, resp: &FrequencyResponseSet) -> Result<FitReport> {
    if model.n_ports() != resp.n_ports() {
        return Err(Error::invalid("model and data have different port counts"));
    }
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut max_phase: f64 = 0.0;
    for (n, port) in resp.ports().iter().enumerate() {
        let fit = evaluate_model(model, n, resp.grid())?;
        let hmax = port.values.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
        let denom = if hmax > 0.0 { hmax } else { 1.0 };
        for (f, h) in fit.iter().zip(&port.values) {
            let e = (f - h).norm() / denom;
            sq += e * e;
            count += 1;
            let ph = if h.norm() == 0.0 || f.norm() == 0.0 {
                0.0
            } else {
                (f / h).arg().abs().to_degrees()
            };
            max_phase = max_phase.max(ph);
        }
    }
    Ok(FitReport {
        rms_rel_error: (sq / count.max(1) as f64).sqrt(),
        max_phase_err_deg: max_phase,
        iters_used: 0,
        converged: true,
    })
}

fn sample_weights(values: &[Complex64], weight: Weighting) -> Vec<f64> {
    match weight {
        Weighting::Uniform => vec![1.0; values.len()],
        Weighting::InverseMagnitude => {
            let floor = 1e-12 * values.iter().fold(0.0_f64, |m, v| m.max(v.norm())).max(f64::MIN_POSITIVE);
            values.iter().map(|v| 1.0 / v.norm().max(floor)).collect()
        }
    }
}

/// Polynomial-ratio fit of a one-port response.
pub fn fit_polynomial_ratio(resp: &FrequencyResponseSet, cfg: &FitConfig) -> Result<(PolynomialRatioModel, FitReport)> {
    cfg.validate()?;
    if resp.n_ports() != 1 {
        return Err(Error::invalid("polynomial-ratio fitting takes a single-port response"));
    }
    let n = cfg.order;
    let ns = resp.grid().len();
    if ns < 2 * (n + 1) {
        return Err(Error::RankDeficient(format!("order {n} needs at least {} points, have {ns}", 2 * (n + 1))));
    }
    let h = &resp.ports()[0].values;
    let s_scale = resp.grid().omega_max();
    let xs: Vec<Complex64> = resp.grid().omegas().iter().map(|w| Complex64::new(0.0, w / s_scale)).collect();
    // powers of the normalized variable, reused every iteration
    let powers: Vec<Vec<Complex64>> = xs
        .iter()
        .map(|x| {
            let mut p = Vec::with_capacity(n + 1);
            let mut acc = Complex64::new(1.0, 0.0);
            for _ in 0..=n {
                p.push(acc);
                acc *= x;
            }
            p
        })
        .collect();
    let base_w = sample_weights(h, cfg.weight);
    let ncols = 2 * (n + 1);

    let mut sk = vec![1.0; ns];
    let mut prev: Option<DVector<f64>> = None;
    let mut best: Option<(PolynomialRatioModel, FitReport)> = None;
    let mut converged = false;
    let mut iters_used = 0;
    for it in 0..cfg.iters {
        iters_used = it + 1;
        let mut a = DMatrix::<f64>::zeros(2 * ns, ncols);
        for i in 0..ns {
            let w = base_w[i] * sk[i];
            for k in 0..=n {
                let num = powers[i][k] * w;
                let den = -h[i] * powers[i][k] * w;
                a[(2 * i, k)] = num.re;
                a[(2 * i + 1, k)] = num.im;
                a[(2 * i, n + 1 + k)] = den.re;
                a[(2 * i + 1, n + 1 + k)] = den.im;
            }
        }
        // Equilibrate columns for the SVD, then map back and renormalize:
        // an exact null vector stays exact, and rank tests become scale-free.
        let col_scale: Vec<f64> = (0..ncols)
            .map(|j| {
                let n = a.column(j).norm();
                if n > 0.0 { 1.0 / n } else { 1.0 }
            })
            .collect();
        for (j, c) in col_scale.iter().enumerate() {
            a.column_mut(j).scale_mut(*c);
        }
        let (vs, sv) = linalg::null_direction(&a)?;
        let mut v = DVector::from_iterator(ncols, vs.iter().zip(&col_scale).map(|(x, c)| x * c));
        let norm = v.norm();
        v /= norm;
        if sv.len() >= 2 && sv[sv.len() - 2] <= 1e-15 * sv[0] {
            return Err(Error::RankDeficient(format!(
                "order {n}: null space of the linearized system has dimension > 1 (order too high for data)"
            )));
        }
        let model = PolynomialRatioModel::new(v.rows(0, n + 1).iter().copied().collect(), v.rows(n + 1, n + 1).iter().copied().collect(), s_scale)?;
        let mut report = fit_error(&RationalModel::Poly(model.clone()), resp)?;
        report.iters_used = iters_used;
        let better = best.as_ref().map_or(true, |(_, b)| report.rms_rel_error < b.rms_rel_error);
        if better {
            best = Some((model.clone(), report));
        }
        if let Some(p) = &prev {
            if (&v - p).norm() < cfg.tol {
                converged = true;
                break;
            }
        }
        for i in 0..ns {
            let b = horner(&model.den, xs[i]).norm();
            sk[i] = if b > 0.0 { 1.0 / b } else { 1.0 };
        }
        prev = Some(v);
    }
    let (model, mut report) = best.expect("at least one iteration");
    report.iters_used = iters_used;
    report.converged = converged || cfg.iters == 1;
    Ok((model, report))
}

/// Real-form basis over a conjugate-closed pole list (normalized units).
struct Basis {
    pairs: Vec<(Complex64, bool)>,
}

impl Basis {
    fn new(poles: &[Complex64]) -> Self {
        let pairs = pole_pairs(poles)
            .into_iter()
            .map(|pp| (poles[pp.upper], pp.lower.is_some()))
            .collect();
        Basis { pairs }
    }

    fn len(&self) -> usize {
        self.pairs.iter().map(|(_, c)| if *c { 2 } else { 1 }).sum()
    }

    fn eval(&self, s: Complex64, out: &mut Vec<Complex64>) {
        out.clear();
        let j = Complex64::new(0.0, 1.0);
        for &(p, complex) in &self.pairs {
            if complex {
                let a = (s - p).inv();
                let b = (s - p.conj()).inv();
                out.push(a + b);
                out.push(j * a - j * b);
            } else {
                out.push((s - p).inv());
            }
        }
    }

    /// Residues in pole order from real basis coefficients.
    fn residues(&self, poles: &[Complex64], coef: &[f64]) -> Vec<Complex64> {
        let mut res = vec![Complex64::new(0.0, 0.0); poles.len()];
        let mut k = 0;
        for pp in pole_pairs(poles) {
            if pp.lower.is_some() {
                let r = Complex64::new(coef[k], coef[k + 1]);
                res[pp.upper] = r;
                res[pp.lower.unwrap()] = r.conj();
                k += 2;
            } else {
                res[pp.upper] = Complex64::new(coef[k], 0.0);
                k += 1;
            }
        }
        res
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Starting poles (normalized units): conjugate pairs with imaginary parts
/// spread linearly over the band and real parts one hundredth of them, plus
/// one real pole at mid-band when the order is odd.
fn initial_poles(order: usize, w_lo: f64, w_hi: f64) -> Vec<Complex64> {
    let lo = w_lo.max(w_hi * 1e-3);
    let mut poles = Vec::with_capacity(order);
    for b in linspace(lo, w_hi, order / 2) {
        poles.push(Complex64::new(-b / 100.0, b));
        poles.push(Complex64::new(-b / 100.0, -b));
    }
    if order % 2 == 1 {
        poles.push(Complex64::new(-0.5 * (lo + w_hi), 0.0));
    }
    sort_poles(&mut poles);
    poles
}

/// Vector fitting with a common denominator across all ports.
pub fn fit_common_denominator(resps: &FrequencyResponseSet, cfg: &FitConfig) -> Result<(PartialFractionModel, FitReport)> {
    cfg.validate()?;
    if resps.n_ports() == 0 {
        return Err(Error::invalid("no ports to fit"));
    }
    let n = cfg.order;
    let ns = resps.grid().len();
    if ns < n + 1 {
        return Err(Error::RankDeficient(format!("order {n} exceeds the {ns}-point budget")));
    }
    let w0 = resps.grid().omega_max();
    if !(w0 > 0.0) {
        return Err(Error::invalid("grid must extend above 0 Hz"));
    }
    let s: Vec<Complex64> = resps.grid().omegas().iter().map(|w| Complex64::new(0.0, w / w0)).collect();
    let weights: Vec<Vec<f64>> = resps.ports().iter().map(|p| sample_weights(&p.values, cfg.weight)).collect();

    let mut poles = initial_poles(n, resps.grid().f_min() * 2.0 * PI / w0, 1.0);
    let mut converged = n == 0;
    let mut iters_used = 0;
    if n > 0 {
        for it in 0..cfg.iters {
            iters_used = it + 1;
            let new_poles = relocate(&poles, &s, resps, &weights, cfg.relaxed)?;
            let change = relative_change(&poles, &new_poles);
            poles = new_poles;
            if change < cfg.tol {
                converged = true;
                break;
            }
        }
    }
    let model_n = residue_solve(&poles, &s, resps, &weights)?;
    let model = PartialFractionModel {
        poles: model_n.poles.iter().map(|p| p * w0).collect(),
        ports: model_n
            .ports
            .into_iter()
            .map(|p| PfPort { residues: p.residues.iter().map(|r| r * w0).collect(), ..p })
            .collect(),
    };
    let mut report = fit_error(&RationalModel::Vf(model.clone()), resps)?;
    report.iters_used = iters_used;
    report.converged = converged;
    Ok((model, report))
}

fn relative_change(old: &[Complex64], new: &[Complex64]) -> f64 {
    let scale = old.iter().chain(new).fold(0.0_f64, |m, p| m.max(p.norm())).max(f64::MIN_POSITIVE);
    if old.len() != new.len() {
        return f64::INFINITY;
    }
    crate::poles::match_poles(new, old)
        .into_iter()
        .map(|(i, j)| (new[i] - old[j]).norm() / scale)
        .fold(0.0, f64::max)
}

/// One pole relocation: solve for the scaling function jointly over all
/// ports and return its zeros.
fn relocate(
    poles: &[Complex64],
    s: &[Complex64],
    resps: &FrequencyResponseSet,
    weights: &[Vec<f64>],
    relaxed: bool,
) -> Result<Vec<Complex64>> {
    let basis = Basis::new(poles);
    let nb = basis.len();
    let ns = s.len();
    let phi: Vec<Vec<Complex64>> = s
        .iter()
        .map(|&si| {
            let mut v = Vec::with_capacity(nb);
            basis.eval(si, &mut v);
            v
        })
        .collect();

    let sigma_cols = if relaxed { nb + 1 } else { nb };
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut rhs_blocks: Vec<Vec<f64>> = Vec::new();
    let mut energy = 0.0;
    let (mut r_max, mut r22_max) = (0.0_f64, 0.0_f64);
    for (port, w) in resps.ports().iter().zip(weights) {
        // columns: [Φ, 1 | -HΦ, -H] (relaxed) or [Φ, 1 | -HΦ] with rhs H
        let ncols = nb + 1 + sigma_cols + usize::from(!relaxed);
        let mut m = DMatrix::<f64>::zeros(2 * ns, ncols);
        for i in 0..ns {
            let h = port.values[i] * w[i];
            energy += h.norm_sqr();
            let mut put = |col: usize, v: Complex64| {
                m[(2 * i, col)] = v.re;
                m[(2 * i + 1, col)] = v.im;
            };
            for k in 0..nb {
                put(k, phi[i][k] * w[i]);
                put(nb + 1 + k, -h * phi[i][k]);
            }
            put(nb, Complex64::new(w[i], 0.0));
            if relaxed {
                put(2 * nb + 1, -h);
            } else {
                put(2 * nb + 1, h); // rhs column, carried through the QR
            }
        }
        let r = linalg::qr_r(m);
        let rows = r.nrows();
        let lead = nb + 1;
        if rows <= lead {
            continue;
        }
        let take = (rows - lead).min(sigma_cols);
        let r22 = r.view((lead, lead), (take, sigma_cols)).into_owned();
        r_max = r_max.max(r.amax());
        r22_max = r22_max.max(r22.amax());
        let rhs: Vec<f64> = if relaxed {
            vec![0.0; take]
        } else {
            (0..take).map(|t| r[(lead + t, lead + sigma_cols)]).collect()
        };
        blocks.push(r22);
        rhs_blocks.push(rhs);
    }
    if r22_max <= 1e-13 * r_max {
        // the current poles already reproduce every port exactly; any
        // scaling function would do, so keep them
        return Ok(poles.to_vec());
    }
    let extra = usize::from(relaxed);
    let total_rows: usize = blocks.iter().map(|b| b.nrows()).sum::<usize>() + extra;
    let mut a = DMatrix::<f64>::zeros(total_rows, sigma_cols);
    let mut b = DVector::<f64>::zeros(total_rows);
    let mut row = 0;
    for (blk, rhs) in blocks.iter().zip(&rhs_blocks) {
        a.view_mut((row, 0), (blk.nrows(), sigma_cols)).copy_from(blk);
        for (t, v) in rhs.iter().enumerate() {
            b[row + t] = *v;
        }
        row += blk.nrows();
    }
    if relaxed {
        // Σ_i Re σ(s_i) = Ns, scaled to the data
        let scale = energy.sqrt() / ns as f64;
        for k in 0..nb {
            let sum: f64 = phi.iter().map(|p| p[k].re).sum();
            a[(row, k)] = scale * sum;
        }
        a[(row, nb)] = scale * ns as f64;
        b[row] = scale * ns as f64;
    }
    let x = linalg::lstsq(&a, &b, LSTSQ_RCOND)?;
    let (c_sigma, d_sigma) = if relaxed {
        (x.rows(0, nb).iter().copied().collect::<Vec<f64>>(), x[nb])
    } else {
        (x.iter().copied().collect::<Vec<f64>>(), 1.0)
    };
    if relaxed && d_sigma.abs() < 1e-8 {
        // degenerate relaxation: fall back to the classic constraint
        return relocate(poles, s, resps, weights, false);
    }
    let (amat, bvec) = real_realization_from_basis(&basis);
    let mut h = amat;
    for i in 0..nb {
        for j in 0..nb {
            h[(i, j)] -= bvec[i] * c_sigma[j] / d_sigma;
        }
    }
    let mut z = linalg::eigenvalues(&h)
        .map_err(|e| Error::Numeric(format!("pole relocation eigenproblem: {e}")))?;
    sort_poles(&mut z);
    Ok(z)
}

fn real_realization_from_basis(basis: &Basis) -> (DMatrix<f64>, Vec<f64>) {
    let mut poles = Vec::new();
    for &(p, c) in &basis.pairs {
        poles.push(p);
        if c {
            poles.push(p.conj());
        }
    }
    sort_poles(&mut poles);
    // same pair order as the basis (both follow pole_pairs over sorted poles)
    real_realization(&poles)
}

/// Per-port residues and direct terms against fixed poles (normalized units).
fn residue_solve(
    poles: &[Complex64],
    s: &[Complex64],
    resps: &FrequencyResponseSet,
    weights: &[Vec<f64>],
) -> Result<PartialFractionModel> {
    let basis = Basis::new(poles);
    let nb = basis.len();
    let ns = s.len();
    let mut phi = Vec::with_capacity(nb);
    let mut a = DMatrix::<f64>::zeros(2 * ns, nb + 1);
    let mut ports = Vec::with_capacity(resps.n_ports());
    for (port, w) in resps.ports().iter().zip(weights) {
        let mut b = DVector::<f64>::zeros(2 * ns);
        for i in 0..ns {
            basis.eval(s[i], &mut phi);
            for k in 0..nb {
                let v = phi[k] * w[i];
                a[(2 * i, k)] = v.re;
                a[(2 * i + 1, k)] = v.im;
            }
            a[(2 * i, nb)] = w[i];
            a[(2 * i + 1, nb)] = 0.0;
            let h = port.values[i] * w[i];
            b[2 * i] = h.re;
            b[2 * i + 1] = h.im;
        }
        let x = linalg::lstsq(&a, &b, LSTSQ_RCOND)?;
        let coef: Vec<f64> = x.iter().copied().collect();
        ports.push(PfPort {
            name: port.label.name.clone(),
            residues: basis.residues(poles, &coef[..nb]),
            direct: coef[nb],
        });
    }
    Ok(PartialFractionModel { poles: poles.to_vec(), ports })
}

/// Dispatch on `cfg.method`.
pub fn fit(resps: &FrequencyResponseSet, cfg: &FitConfig) -> Result<(RationalModel, FitReport)> {
    match cfg.method {
        FitMethod::Poly => fit_polynomial_ratio(resps, cfg).map(|(m, r)| (m.into(), r)),
        FitMethod::Vf => fit_common_denominator(resps, cfg).map(|(m, r)| (m.into(), r)),
    }
}

/// Serialized model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub order: usize,
    pub model: RationalModel,
    pub report: Option<FitReport>,
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

impl ModelDocument {
    pub fn new(order: usize, model: RationalModel, report: Option<FitReport>) -> Self {
        ModelDocument { schema_version: MODEL_SCHEMA_VERSION, order, model, report }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported model schema version {}", doc.schema_version)));
        }
        if let RationalModel::Vf(m) = &doc.model {
            m.check_conjugate_closure()?;
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::netsim::{self, ProbeSpec};
    use crate::poles::max_relative_error;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rad_grid(w_lo: f64, w_hi: f64, n: usize) -> FrequencyGrid {
        FrequencyGrid::linear(w_lo / (2.0 * PI), w_hi / (2.0 * PI), n).unwrap()
    }

    #[test]
    fn poly_recovers_second_order_denominator() {
        let grid = rad_grid(1.0, 100.0, 200);
        let h: Vec<Complex64> = grid
            .omegas()
            .iter()
            .map(|w| {
                let s = c(0.0, *w);
                (s * s + 2.0 * s + 101.0).inv()
            })
            .collect();
        let data = FrequencyResponseSet::single(grid, "h", h).unwrap();
        let (m, rep) = fit_polynomial_ratio(&data, &FitConfig::poly(2)).unwrap();
        // quadratic formula on s² + 2s + 101
        let truth = [c(-1.0, 10.0), c(-1.0, -10.0)];
        assert!(max_relative_error(&m.poles().unwrap(), &truth) < 1e-8);
        assert!(rep.rms_rel_error < 1e-10);
        let norm: f64 = m.num.iter().chain(&m.den).map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn poly_order_zero_fits_a_constant() {
        let grid = FrequencyGrid::linear(1.0, 10.0, 8).unwrap();
        let data = FrequencyResponseSet::single(grid, "h", vec![c(2.0, 0.0); 8]).unwrap();
        let (m, _) = fit_polynomial_ratio(&data, &FitConfig::poly(0)).unwrap();
        assert!((m.num[0] / m.den[0] - 2.0).abs() < 1e-15);
        assert!(m.poles().unwrap().is_empty());
    }

    #[test]
    fn poly_keeps_unstable_rlc_poles() {
        let net = fixtures::parallel_rlc(-50.0, 1e-9, 1e-12).unwrap();
        let grid = FrequencyGrid::linear(1e8, 2e10, 300).unwrap();
        let data = netsim::frequency_response(&net, &ProbeSpec::node("a"), &grid).unwrap();
        let (m, _) = fit_polynomial_ratio(&data, &FitConfig::poly(2)).unwrap();
        let oracle = netsim::analytic_poles(&net).unwrap().poles;
        let fitted = m.poles().unwrap();
        assert!(max_relative_error(&fitted, &oracle) < 1e-8);
        assert!(fitted.iter().all(|p| p.re > 0.0));
        assert!(max_relative_error(&fitted, &[c(1e10, 3e10), c(1e10, -3e10)]) < 1e-8);
    }

    #[test]
    fn poly_rejects_too_few_points() {
        let grid = FrequencyGrid::linear(1.0, 10.0, 5).unwrap();
        let data = FrequencyResponseSet::single(grid, "h", vec![c(1.0, 0.0); 5]).unwrap();
        assert!(matches!(fit_polynomial_ratio(&data, &FitConfig::poly(2)), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn vf_shares_poles_across_ports() {
        let p = c(-1e9, 2.0 * PI * 1.4e9);
        let model = PartialFractionModel::new(
            vec![p, p.conj()],
            vec![
                PfPort { name: "a".into(), residues: vec![c(3e8, 1e8), c(3e8, -1e8)], direct: 0.5 },
                PfPort { name: "b".into(), residues: vec![c(-2e7, 5e8), c(-2e7, -5e8)], direct: 0.0 },
            ],
        )
        .unwrap();
        let grid = FrequencyGrid::linear(1e7, 4e9, 300).unwrap();
        let data = model.sample(&grid).unwrap();
        let (fit, rep) = fit_common_denominator(&data, &FitConfig::vf(2)).unwrap();
        assert!(max_relative_error(&fit.poles, &model.poles) < 1e-8);
        assert!(rep.converged);
        for (got, want) in fit.ports.iter().zip(&model.ports) {
            for (r, r0) in got.residues.iter().zip(&want.residues) {
                assert!((r - r0).norm() < 1e-7 * r0.norm());
            }
            assert!((got.direct - want.direct).abs() < 1e-8);
        }
    }

    #[test]
    fn vf_constant_response_has_negligible_residues() {
        let grid = FrequencyGrid::linear(1e6, 1e9, 100).unwrap();
        let data = FrequencyResponseSet::single(grid, "h", vec![c(3.0, 0.0); 100]).unwrap();
        let (fit, _) = fit_common_denominator(&data, &FitConfig::vf(2)).unwrap();
        let port = &fit.ports[0];
        assert!((port.direct - 3.0).abs() < 1e-9);
        for (r, p) in port.residues.iter().zip(&fit.poles) {
            assert!(r.norm() <= 1e-9 * 3.0 * p.norm(), "residue {r} at {p}");
        }
    }

    #[test]
    fn vf_does_not_flip_unstable_poles() {
        let model = PartialFractionModel::from_upper("h", &[(c(2e8, 6e9), c(1e8, 3e8)), (c(-5e8, 2e10), c(4e8, 0.0))], 0.1).unwrap();
        let grid = FrequencyGrid::linear(1e7, 5e9, 400).unwrap();
        let (fit, _) = fit_common_denominator(&model.sample(&grid).unwrap(), &FitConfig::vf(4)).unwrap();
        assert!(max_relative_error(&fit.poles, &model.poles) < 1e-8);
        assert_eq!(fit.poles.iter().filter(|p| p.re > 0.0).count(), 2);
    }

    #[test]
    fn classic_constraint_also_converges() {
        let model = PartialFractionModel::from_upper("h", &[(c(-1e8, 6e9), c(1e8, 3e8))], 0.0).unwrap();
        let grid = FrequencyGrid::linear(1e7, 2e9, 200).unwrap();
        let cfg = FitConfig { relaxed: false, ..FitConfig::vf(2) };
        let (fit, _) = fit_common_denominator(&model.sample(&grid).unwrap(), &cfg).unwrap();
        assert!(max_relative_error(&fit.poles, &model.poles) < 1e-8);
    }

    #[test]
    fn vf_rejects_order_above_point_budget() {
        let grid = FrequencyGrid::linear(1.0, 10.0, 5).unwrap();
        let data = FrequencyResponseSet::single(grid, "h", vec![c(1.0, 0.0); 5]).unwrap();
        assert!(matches!(fit_common_denominator(&data, &FitConfig::vf(6)), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn wideband_high_order_favours_vf() {
        // Resonances spread over three and a half decades, grid 1 MHz to 40 GHz.
        let mut upper = Vec::new();
        for k in 0..10 {
            let f = 1e7 * 10f64.powf(3.4 * k as f64 / 9.0);
            let w = 2.0 * PI * f;
            upper.push((c(-0.02 * w, w), c(0.01 * w, 0.003 * w)));
        }
        let model = PartialFractionModel::from_upper("h", &upper, 0.2).unwrap();
        let grid = FrequencyGrid::logarithmic(1e6, 40e9, 400).unwrap();
        let data = model.sample(&grid).unwrap();
        let (vf, _) = fit_common_denominator(&data, &FitConfig::vf(20)).unwrap();
        assert!(max_relative_error(&vf.poles, &model.poles) < 1e-6);
        let poly_err = match fit_polynomial_ratio(&data, &FitConfig::poly(20)) {
            Ok((m, _)) => m.poles().map(|p| max_relative_error(&p, &model.poles)).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        };
        assert!(poly_err > 1e-6, "monomial fit unexpectedly succeeded: {poly_err:e}");
    }

    #[test]
    fn poly_poles_and_zeros_from_coefficients() {
        let m = PolynomialRatioModel::new(vec![101.0, 2.0, 1.0], vec![101.0, 2.0, 1.0], 1.0).unwrap();
        let (p, z) = poles_and_zeros(&RationalModel::Poly(m), None).unwrap();
        assert!(max_relative_error(&p, &[c(-1.0, 10.0), c(-1.0, -10.0)]) < 1e-14);
        assert_eq!(p, z);
    }

    #[test]
    fn pf_zero_from_expanded_numerator() {
        let m = PartialFractionModel::from_upper("h", &[(c(-1.0, 10.0), c(1.0, 0.0))], 0.0).unwrap();
        let (_, z) = poles_and_zeros(&RationalModel::Vf(m), Some("h")).unwrap();
        // 1/(s+1-10j) + 1/(s+1+10j) = (2s + 2)/(...)
        assert_eq!(z.len(), 1);
        assert!((z[0] - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pf_zeros_from_system_pencil() {
        // H = 1 + (2s+2)/(s²+2s+101) = (s² + 4s + 103)/(s²+2s+101)
        let m = PartialFractionModel::from_upper("h", &[(c(-1.0, 10.0), c(1.0, 0.0))], 1.0).unwrap();
        let z = m.zeros(0).unwrap();
        let truth = [c(-2.0, 99f64.sqrt()), c(-2.0, -99f64.sqrt())];
        assert!(max_relative_error(&z, &truth) < 1e-12);
    }

    #[test]
    fn pf_zeros_need_a_port_name() {
        let m = PartialFractionModel::from_upper("h", &[(c(-1.0, 10.0), c(1.0, 0.0))], 0.0).unwrap();
        assert!(poles_and_zeros(&RationalModel::Vf(m.clone()), None).is_err());
        assert!(matches!(poles_and_zeros(&RationalModel::Vf(m), Some("x")), Err(Error::Unknown { .. })));
    }

    #[test]
    fn zero_denominator_rejected() {
        assert!(PolynomialRatioModel::new(vec![1.0], vec![0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn pf_evaluation_at_resonance() {
        let m = PartialFractionModel::from_upper("h", &[(c(-1.0, 10.0), c(1.0, 0.0))], 1.0).unwrap();
        let grid = rad_grid(10.0, 20.0, 4);
        let v = evaluate_model(&RationalModel::Vf(m), 0, &grid).unwrap();
        // 1 + 1/1 + 1/(1 + 20j)
        let want = c(2.0, 0.0) + c(1.0, 20.0).inv();
        assert!((v[0] - want).norm() < 1e-14);
        assert!((v[0] - c(2.0024938, -0.0498753)).norm() < 1e-7);
    }

    #[test]
    fn evaluation_at_a_pole_is_an_error() {
        let m = PartialFractionModel::from_upper("h", &[(c(0.0, 10.0), c(1.0, 0.0))], 0.0).unwrap();
        assert!(matches!(m.eval(0, c(0.0, 10.0)), Err(Error::AtPole { .. })));
        let p = PolynomialRatioModel::new(vec![2.0], vec![1.0], 1.0).unwrap();
        assert!((p.eval(c(0.0, 123.0)).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn fit_error_metrics() {
        let m = PartialFractionModel::from_upper("h", &[(c(-1.0, 10.0), c(1.0, 0.0))], 1.0).unwrap();
        let grid = rad_grid(1.0, 30.0, 50);
        let data = m.sample(&grid).unwrap();
        let model = RationalModel::Vf(m);
        assert!(fit_error(&model, &data).unwrap().rms_rel_error <= 1e-10);

        let mut bumped = data.clone();
        let mut ports = bumped.ports().to_vec();
        ports[0].values[17] *= c(1.0, 0.01);
        bumped = FrequencyResponseSet::new(bumped.grid().clone(), ports).unwrap();
        let rep = fit_error(&model, &bumped).unwrap();
        assert!((rep.max_phase_err_deg - 0.01f64.atan().to_degrees()).abs() < 1e-9);

        let constant = RationalModel::Poly(PolynomialRatioModel::new(vec![2.0], vec![1.0], 1.0).unwrap());
        let rot = Complex64::from_polar(2.0, 0.01f64.to_radians());
        let data = FrequencyResponseSet::single(grid.clone(), "h", vec![rot; grid.len()]).unwrap();
        assert!((fit_error(&constant, &data).unwrap().max_phase_err_deg - 0.01).abs() < 1e-12);
    }

    #[test]
    fn config_limits() {
        assert!(FitConfig::vf(2).with_iters(0).validate().is_err());
        assert!(FitConfig::vf(2).with_iters(101).validate().is_err());
        assert_eq!("vf".parse::<FitMethod>().unwrap(), FitMethod::Vf);
        assert!("spline".parse::<FitMethod>().is_err());
    }

    #[test]
    fn model_document_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = fixtures::random_pf_model(&mut rng, 7, 1e9, 2, 1e3);
        let doc = ModelDocument::new(7, RationalModel::Vf(m), None);
        let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        let p = PolynomialRatioModel::new(vec![0.1, 1.0 / 3.0], vec![2.0f64.sqrt(), 1e-9, 7.0], 1.234e10).unwrap();
        let doc = ModelDocument::new(2, RationalModel::Poly(p), None);
        assert_eq!(ModelDocument::from_json(&doc.to_json().unwrap()).unwrap(), doc);
    }

    #[test]
    fn inverse_magnitude_weighting_fits_large_dynamic_range() {
        let model = PartialFractionModel::from_upper("h", &[(c(-1e6, 1e8), c(1e3, 0.0)), (c(-1e8, 1e10), c(1e9, 2e8))], 0.0).unwrap();
        let grid = FrequencyGrid::logarithmic(1e5, 1e10, 300).unwrap();
        let cfg = FitConfig::vf(4).with_weight(Weighting::InverseMagnitude);
        let (fit, _) = fit_common_denominator(&model.sample(&grid).unwrap(), &cfg).unwrap();
        assert!(max_relative_error(&fit.poles, &model.poles) < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn models_are_conjugate_symmetric(seed in 0u64..10_000, order in 1usize..9, w in 1e6f64..1e10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = fixtures::random_pf_model(&mut rng, order, 1e9, 1, 1e2);
            let s = c(-1e7, w);
            let a = m.eval(0, s).unwrap();
            let b = m.eval(0, s.conj()).unwrap();
            prop_assert_eq!(a, b.conj());
        }

        #[test]
        fn vf_round_trip_recovers_random_models(seed in 0u64..10_000, pairs in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = fixtures::random_pf_model(&mut rng, 2 * pairs, 10e9, 2, 1e3);
            let grid = FrequencyGrid::linear(25e6, 10e9, 400).unwrap();
            let data = m.sample(&grid).unwrap();
            let (fit, rep) = fit_common_denominator(&data, &FitConfig::vf(2 * pairs)).unwrap();
            prop_assert!(max_relative_error(&fit.poles, &m.poles) < 1e-6);
            prop_assert!(rep.rms_rel_error < 1e-8);
            let back = evaluate_model(&RationalModel::Vf(fit), 1, &grid).unwrap();
            let scale = data.ports()[1].values.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
            for (x, y) in back.iter().zip(&data.ports()[1].values) {
                prop_assert!((x - y).norm() <= 1e-8 * scale);
            }
        }

        #[test]
        fn poly_round_trip_recovers_random_models(seed in 0u64..10_000, pairs in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = fixtures::random_pf_model(&mut rng, 2 * pairs, 10e9, 1, 1e3);
            let grid = FrequencyGrid::linear(25e6, 10e9, 400).unwrap();
            let (fit, _) = fit_polynomial_ratio(&m.sample(&grid).unwrap(), &FitConfig::poly(2 * pairs)).unwrap();
            prop_assert!(max_relative_error(&fit.poles().unwrap(), &m.poles) < 1e-6);
        }
    }
}
