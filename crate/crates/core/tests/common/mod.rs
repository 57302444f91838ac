//! Oracles shared by the integration tests. They use only the circuit
//! engine's eigenpencil solver, never the fitters.

#![allow(dead_code)]

use num_complex::Complex64;
use pzid::netsim::{analytic_poles, Netlist};

pub fn analytic_max_re(net: &Netlist) -> f64 {
    analytic_poles(net).unwrap().poles.iter().map(|p| p.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Bisection on the analytic max Re over element `param` in `[lo, hi]`
/// (positive values, geometric midpoints) down to relative width `tol`.
pub fn analytic_threshold(net: &Netlist, param: &str, lo: f64, hi: f64, tol: f64) -> f64 {
    let re = |v: f64| analytic_max_re(&net.with_value(param, v).unwrap());
    let (mut a, mut b) = (lo, hi);
    let a_unstable = re(a) > 0.0;
    assert_ne!(a_unstable, re(b) > 0.0, "no sign change on [{lo}, {hi}]");
    while (b - a) / b > tol {
        let m = (a * b).sqrt();
        if (re(m) > 0.0) == a_unstable {
            a = m;
        } else {
            b = m;
        }
    }
    (a * b).sqrt()
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a * (b / a).powf(k as f64 / (n - 1) as f64)).collect()
}

pub fn band_of(poles: &[Complex64]) -> (f64, f64) {
    let two_pi = 2.0 * std::f64::consts::PI;
    let lo = poles.iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min) / two_pi;
    let hi = poles.iter().map(|p| p.norm()).fold(0.0, f64::max) / two_pi;
    (lo, hi)
}
