mod common;

use num_complex::Complex64;
use pzid::fixtures::*;
use pzid::freqresp::FrequencyGrid;
use pzid::netsim::{Netlist, ProbeSpec};
use pzid::ratfit::FitConfig;
use pzid::staban::StabConfig;
use pzid::sweeps::*;

use common::*;

fn resonator_cfg() -> SweepConfig {
    SweepConfig::new(FrequencyGrid::linear(5e8, 4e9, 300).unwrap(), FitConfig::vf(4))
}

#[test]
fn node_a_locus_stays_in_the_rhp() {
    let net = double_resonator("a", 1e6).unwrap();
    let t = trace_pole_locus(&net, &ProbeSpec::node("b"), "rstab", &logspace(10.0, 1e6, 31), &resonator_cfg()).unwrap();
    assert!(t.failures.is_empty());
    for k in 0..t.param_values.len() {
        assert!(t.max_re_at(k).unwrap() > 0.0);
    }
    assert!(t.crossing_events.is_empty());
}

#[test]
fn node_b_locus_crosses_once_near_the_analytic_threshold() {
    let net = double_resonator("b", 1e6).unwrap();
    let t = trace_pole_locus(&net, &ProbeSpec::node("b"), "rstab", &logspace(10.0, 1e6, 31), &resonator_cfg()).unwrap();
    assert_eq!(t.crossing_events.len(), 1);
    let ev = t.crossing_events[0];
    // ascending R moves the pole out of the LHP, i.e. + to - as R decreases
    assert!(!ev.into_lhp);
    let oracle = analytic_threshold(&net, "rstab", 100.0, 1e4, 1e-9);
    assert!((ev.param - oracle).abs() <= 0.01 * oracle, "{} vs {oracle}", ev.param);
}

#[test]
fn locus_tracks_use_optimal_assignment() {
    let net = double_resonator("b", 1e6).unwrap();
    let t = trace_pole_locus(&net, &ProbeSpec::node("b"), "rstab", &logspace(30.0, 3e3, 12), &resonator_cfg()).unwrap();
    let n = t.tracks.len();
    assert_eq!(n, 4);
    for k in 1..t.param_values.len() {
        let prev: Vec<Complex64> = t.tracks.iter().map(|tr| tr.poles[k - 1].unwrap()).collect();
        let cur: Vec<Complex64> = t.tracks.iter().map(|tr| tr.poles[k].unwrap()).collect();
        let chosen: f64 = (0..n).map(|i| (cur[i] - prev[i]).norm()).sum();
        // exhaustive search over the 24 permutations
        let mut best = f64::INFINITY;
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut |p| {
            best = best.min((0..n).map(|i| (cur[p[i]] - prev[i]).norm()).sum());
        });
        assert!(chosen <= best * (1.0 + 1e-12), "step {k}");
        // continuity: every move is shorter than the closest pair of poles
        let mut gap = f64::INFINITY;
        for set in [&prev, &cur] {
            for i in 0..n {
                for j in 0..i {
                    gap = gap.min((set[i] - set[j]).norm());
                }
            }
        }
        for i in 0..n {
            assert!((cur[i] - prev[i]).norm() < gap, "step {k} track {i}");
        }
    }
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

#[test]
fn threshold_matches_the_eigenpencil_bisection() {
    let net = double_resonator("b", 1e6).unwrap();
    let th = stabilization_threshold(&net, &ProbeSpec::node("b"), "rstab", 100.0, 1e4, 1e-6, &resonator_cfg()).unwrap();
    let oracle = analytic_threshold(&net, "rstab", 100.0, 1e4, 1e-9);
    assert!((th.value - oracle).abs() <= 1e-3 * oracle);
    assert!(th.verified);
    assert!(th.bracket.0 < th.bracket.1);
}

fn marginal_cfg() -> SweepConfig {
    SweepConfig::new(FrequencyGrid::linear(1e9, 1e10, 200).unwrap(), FitConfig::vf(2))
}

#[test]
fn monte_carlo_erodes_the_margin_of_a_marginal_resonator() {
    let net = marginal_rlc().unwrap();
    let probe = ProbeSpec::node("a");
    let c = monte_carlo_cloud(&net, &probe, &Perturbation::uniform(0.05), 100, 11, &marginal_cfg()).unwrap();
    let f = c.margin_stats.unwrap().fraction_unstable;
    assert!(f > 0.0 && f < 1.0, "{f}");
    assert!(c.points.len() <= 100 * 2);
    assert!(c.skipped.is_empty());
    // every trial's fitted verdict agrees with its own netlist's oracle
    for t in 0..100 {
        let fitted_unstable = c.points.iter().filter(|p| p.trial == t).any(|p| p.pole.re > 0.0);
        let oracle_unstable = analytic_max_re(&perturbed_netlist(&net, &Perturbation::uniform(0.05), 11, t).unwrap()) > 0.0;
        assert_eq!(fitted_unstable, oracle_unstable, "trial {t}");
    }
}

#[test]
fn monte_carlo_is_reproducible() {
    let net = parallel_rlc(50.0, 1e-9, 1e-12).unwrap();
    let probe = ProbeSpec::node("a");
    let run = || monte_carlo_cloud(&net, &probe, &Perturbation::uniform(0.05), 100, 2024, &marginal_cfg()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.margin_stats.unwrap().fraction_unstable, 0.0);
    let other = monte_carlo_cloud(&net, &probe, &Perturbation::uniform(0.05), 100, 2025, &marginal_cfg()).unwrap();
    assert_ne!(a.points, other.points);
}

fn proviso_grid() -> FrequencyGrid {
    FrequencyGrid::linear(2e8, 6e9, 200).unwrap()
}

fn passive_net() -> Netlist {
    let mut n = Netlist::new();
    n.capacitor("ci", "i", "0", 2e-12).unwrap();
    n.resistor("ri", "i", "0", 300.0).unwrap();
    n.inductor("ls", "i", "p", 3e-9).unwrap();
    n.capacitor("cp", "p", "0", 0.3e-12).unwrap();
    n.add_port("P1", "p", 50.0, 1e9).unwrap();
    n
}

#[test]
fn proviso_scan_flags_the_short_circuit() {
    let cfg = StabConfig::default().with_orders(0..=6);
    let net = proviso_net().unwrap();
    let spiral = spiral_path(11, 21, 0.999).unwrap();
    let rep = proviso_scan(&net, "P1", &ProbeSpec::node("i"), &spiral, &proviso_grid(), &cfg).unwrap();
    assert_eq!(rep.failures, 0);
    let short = rep.cases.iter().find(|c| c.case == TerminationCase::Short).unwrap();
    assert_eq!(short.rhp_poles.len(), 1);
    let open = rep.cases.iter().find(|c| c.case == TerminationCase::Open).unwrap();
    assert!(open.rhp_poles.is_empty());
    // each flagged load is confirmed by the oracle
    for c in &rep.cases {
        let loaded = pzid::netsim::with_termination(&net, "P1", c.gamma).unwrap();
        assert_eq!(!c.rhp_poles.is_empty(), analytic_max_re(&loaded) > 0.0, "{:?}", c.h);
    }
    assert!(rep.to_json().unwrap().contains("\"schema_version\": 1"));
}

#[test]
fn passive_network_has_no_proviso_findings() {
    let cfg = StabConfig::default().with_orders(0..=6);
    let spiral = spiral_path(11, 21, 0.999).unwrap();
    let rep = proviso_scan(&passive_net(), "P1", &ProbeSpec::node("i"), &spiral, &proviso_grid(), &cfg).unwrap();
    assert_eq!(rep.findings, 0);
    assert_eq!(rep.failures, 0);
    assert_eq!(rep.cases.len(), 23);
}

#[test]
fn single_sample_spiral_is_the_matched_load() {
    let cfg = StabConfig::default().with_orders(0..=6);
    let rep = proviso_scan(&passive_net(), "P1", &ProbeSpec::node("i"), &SpiralPath::matched_only(0.999), &proviso_grid(), &cfg).unwrap();
    let spiral: Vec<_> = rep.cases.iter().filter(|c| c.case == TerminationCase::Spiral).collect();
    assert_eq!(spiral.len(), 1);
    assert_eq!(spiral[0].gamma, Complex64::new(0.0, 0.0));
}

#[test]
fn proviso_probe_must_be_internal() {
    let cfg = StabConfig::default().with_orders(0..=4);
    let spiral = spiral_path(1, 3, 0.999).unwrap();
    assert!(proviso_scan(&passive_net(), "P1", &ProbeSpec::node("p"), &spiral, &proviso_grid(), &cfg).is_err());
    assert!(proviso_scan(&passive_net(), "P9", &ProbeSpec::node("i"), &spiral, &proviso_grid(), &cfg).is_err());
}
