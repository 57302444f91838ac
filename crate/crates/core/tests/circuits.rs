mod common;

use num_complex::Complex64;
use pzid::fixtures::*;
use pzid::freqresp::FrequencyGrid;
use pzid::netsim::*;
use pzid::poles::max_relative_error;
use pzid::ratfit::{fit_common_denominator, FitConfig};
use pzid::staban::{rank_rho, RhoMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

#[test]
fn double_resonator_node_a_never_stabilizes() {
    for r in logspace(10.0, 1e6, 25) {
        assert!(analytic_max_re(&double_resonator("a", r).unwrap()) > 0.0, "R = {r}");
    }
}

#[test]
fn double_resonator_node_b_crosses_once() {
    let re: Vec<f64> = logspace(10.0, 1e6, 61).iter().map(|&r| analytic_max_re(&double_resonator("b", r).unwrap())).collect();
    let changes = re.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count();
    assert_eq!(changes, 1);
    assert!(re[0] < 0.0 && *re.last().unwrap() > 0.0);
}

#[test]
fn combiner_odd_mode_is_invisible_at_the_combining_node() {
    let net = combiner().unwrap();
    let ap = analytic_poles(&net).unwrap().poles;
    let grid = FrequencyGrid::linear(1e9, 6e9, 300).unwrap();
    let probes = [ProbeSpec::node("cmb"), ProbeSpec::modal(&["x1", "x2"], &[0.0, 180.0]).unwrap()];
    let resp = frequency_responses(&net, &probes, &grid).unwrap();
    let (m, _) = fit_common_denominator(&resp, &FitConfig::vf(ap.len())).unwrap();
    assert!(max_relative_error(&m.poles, &ap) < 1e-8);
    let pairs = m.pairs();
    let odd = pairs.iter().position(|pp| m.poles[pp.upper].re > 0.0).expect("odd mode is unstable");
    let k = pairs[odd].upper;
    let ratio = m.ports[0].residues[k].norm() / m.ports[1].residues[k].norm();
    assert!(ratio <= 1e-8, "{ratio:e}");
    let rho = RhoMatrix::compute(&m);
    assert!(rho.rho[1][odd] >= 1e4 * rho.rho[0][odd]);
}

#[test]
fn two_stage_instability_localizes_to_stage_two() {
    let net = two_stage().unwrap();
    let ap = analytic_poles(&net).unwrap().poles;
    let grid = FrequencyGrid::linear(1e8, 6e9, 300).unwrap();
    let probes: Vec<ProbeSpec> = ["g1", "d1", "g2", "d2"].iter().map(|n| ProbeSpec::node(n)).collect();
    let resp = frequency_responses(&net, &probes, &grid).unwrap();
    let (m, _) = fit_common_denominator(&resp, &FitConfig::vf(ap.len())).unwrap();
    let k = m.pairs().iter().position(|pp| m.poles[pp.upper].re > 0.0).unwrap();
    let rank = rank_rho(&RhoMatrix::compute(&m), k).unwrap();
    let names: Vec<&str> = rank.iter().map(|r| r.port.as_str()).collect();
    assert!(names[..2].contains(&"inode:g2") && names[..2].contains(&"inode:d2"), "{names:?}");
    assert!(rank[1].rho >= 1e3 * rank[2].rho);
}

#[test]
fn proviso_net_hides_an_unstable_mode_behind_the_port() {
    let net = proviso_net().unwrap();
    let stable = |g: f64| analytic_max_re(&with_termination(&net, "P1", Complex64::new(g, 0.0)).unwrap()) < 0.0;
    assert!(analytic_max_re(&net) < 0.0);
    assert!(stable(0.0) && stable(0.999) && stable(1.0));
    assert!(!stable(-0.999) && !stable(-1.0));
}

#[test]
fn exact_short_is_the_limit_of_near_shorts() {
    let net = proviso_net().unwrap();
    let short = analytic_poles(&with_termination(&net, "P1", Complex64::new(-1.0, 0.0)).unwrap()).unwrap().poles;
    let near = analytic_poles(&with_termination(&net, "P1", Complex64::new(-1.0 + 1e-7, 0.0)).unwrap()).unwrap().poles;
    // the near short keeps one very fast real pole from the tiny resistor
    let near: Vec<Complex64> = near.into_iter().filter(|p| p.norm() < 1e12).collect();
    let e = max_relative_error(&near, &short);
    assert!(e < 1e-5, "{e:e} {near:?} {short:?}");
}

#[test]
fn marginal_rlc_straddles_the_axis_under_five_percent() {
    let net = marginal_rlc().unwrap();
    assert!(analytic_max_re(&net) < 0.0);
    let hot = net.with_value("rpos", 105.0).unwrap();
    assert!(analytic_max_re(&hot) > 0.0);
}

#[test]
fn random_nets_match_the_eigenpencil() {
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let net = random_net(&mut rng, 3 + seed as usize).unwrap();
        let ap = analytic_poles(&net).unwrap().poles;
        let (lo, hi) = band_of(&ap);
        let grid = FrequencyGrid::logarithmic(lo / 10.0, hi * 10.0, 300).unwrap();
        let probes: Vec<ProbeSpec> = net.nodes().iter().map(|n| ProbeSpec::node(n)).collect();
        let resp = frequency_responses(&net, &probes, &grid).unwrap();
        let (m, _) = fit_common_denominator(&resp, &FitConfig::vf(ap.len())).unwrap();
        assert!(max_relative_error(&m.poles, &ap) < 1e-6, "seed {seed}");
        let node = &net.nodes()[0];
        let gz = analytic_poles(&net.with_node_grounded(node).unwrap()).unwrap().poles;
        assert!(max_relative_error(&m.zeros(0).unwrap(), &gz) < 1e-6, "seed {seed}");
    }
}
