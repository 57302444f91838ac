//! Reproducible test circuits and random models.
//!
//! These are the self-valued instances the tests, the acceptance suite and
//! the CLI examples share. Element values are chosen here, not taken from any
//! published design.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::Result;
use crate::netsim::Netlist;
use crate::ratfit::{PartialFractionModel, PfPort};

/// Random conjugate-closed partial-fraction model.
///
/// Resonances are spread over `[0.05, 0.95]·f_max` with at least 2% relative
/// spacing, damping ratios lie in `[0.005, 0.1]`, and roughly a third of the
/// pairs are mirrored into the right half plane. Residue magnitudes span up
/// to `dyn_range` and scale with the pole frequency so every term peaks at a
/// comparable level. Odd orders get one real pole.
pub fn random_pf_model<R: Rng>(rng: &mut R, order: usize, f_max: f64, n_ports: usize, dyn_range: f64) -> PartialFractionModel {
    let n_pairs = order / 2;
    let w_max = 2.0 * PI * f_max;
    let mut freqs: Vec<f64> = Vec::with_capacity(n_pairs);
    while freqs.len() < n_pairs {
        let f = rng.random_range(0.05..0.95);
        if freqs.iter().all(|g| (f - g).abs() > 0.02 * f.max(*g)) {
            freqs.push(f);
        }
    }
    let mut poles = Vec::with_capacity(order);
    for f in &freqs {
        let w = f * w_max;
        let zeta: f64 = rng.random_range(0.005..0.1);
        let unstable = rng.random_bool(0.3);
        let re = if unstable { zeta * w } else { -zeta * w };
        let im = w * (1.0 - zeta * zeta).sqrt();
        poles.push(Complex64::new(re, im));
        poles.push(Complex64::new(re, -im));
    }
    if order % 2 == 1 {
        poles.push(Complex64::new(-rng.random_range(0.05..0.95) * w_max, 0.0));
    }
    let ports = (0..n_ports)
        .map(|n| {
            let mut residues = Vec::with_capacity(order);
            for pair in poles.chunks(2) {
                let p = pair[0];
                let mag = dyn_range.powf(rng.random::<f64>()) * p.re.abs().max(1.0);
                if pair.len() == 2 {
                    let ph = rng.random_range(0.0..2.0 * PI);
                    let r = Complex64::from_polar(mag, ph);
                    residues.push(r);
                    residues.push(r.conj());
                } else {
                    residues.push(Complex64::new(mag, 0.0));
                }
            }
            PfPort { name: format!("p{n}"), residues, direct: rng.random_range(-1.0..1.0) }
        })
        .collect();
    PartialFractionModel::new(poles, ports).expect("conjugate closed by construction")
}

/// Parallel R, L, C from node `a` to ground with a port at `a`.
pub fn parallel_rlc(r: f64, l: f64, c: f64) -> Result<Netlist> {
    let mut n = Netlist::new();
    n.resistor("r1", "a", "0", r)?;
    n.inductor("l1", "a", "0", l)?;
    n.capacitor("c1", "a", "0", c)?;
    Ok(n)
}

/// Two coupled resonators. Node `b` carries a negative resistance that makes
/// its mode unstable; node `a` is a lossy passive resonator weakly coupled to
/// `b`. A shunt stabilization resistor sits at the node named by
/// `stab_node` ("a" or "b") with the given value.
///
/// Loading `a` cannot stabilize the circuit; loading `b` below roughly
/// 500 Ω does.
pub fn double_resonator(stab_node: &str, r_stab: f64) -> Result<Netlist> {
    let mut n = Netlist::new();
    n.inductor("l1", "a", "0", 1e-9)?;
    n.capacitor("c1", "a", "0", 4e-12)?;
    n.resistor("r1", "a", "0", 200.0)?;
    n.capacitor("cc", "a", "b", 0.2e-12)?;
    n.inductor("l2", "b", "0", 1e-9)?;
    n.capacitor("c2", "b", "0", 10e-12)?;
    n.resistor("rneg", "b", "0", -500.0)?;
    n.resistor("rstab", stab_node, "0", r_stab)?;
    Ok(n)
}

/// Two cascaded stages with unilateral forward coupling and a weak
/// feedback capacitor between the stages. Stage 1 (nodes `g1`, `d1`) is
/// stable; stage 2 (`g2`, `d2`) hosts an unstable resonance at `d2`.
pub fn two_stage() -> Result<Netlist> {
    let mut n = Netlist::new();
    // stage 1
    n.resistor("rg1", "g1", "0", 50.0)?;
    n.capacitor("cg1", "g1", "0", 1e-12)?;
    n.vccs("gm1", "d1", "0", "g1", "0", 0.04)?;
    n.resistor("rd1", "d1", "0", 200.0)?;
    n.inductor("ld1", "d1", "0", 2e-9)?;
    n.capacitor("cd1", "d1", "0", 2e-12)?;
    // interstage
    n.vccs("gmc", "g2", "0", "d1", "0", 0.01)?;
    n.capacitor("cf", "d1", "g2", 0.3e-15)?;
    // stage 2
    n.resistor("rg2", "g2", "0", 100.0)?;
    n.inductor("lg2", "g2", "0", 3e-9)?;
    n.capacitor("cg2", "g2", "0", 1e-12)?;
    n.capacitor("cgd2", "g2", "d2", 0.05e-12)?;
    n.vccs("gm2", "d2", "0", "g2", "0", 0.05)?;
    n.resistor("rd2", "d2", "0", -300.0)?;
    n.inductor("ld2", "d2", "0", 1e-9)?;
    n.capacitor("cd2", "d2", "0", 3e-12)?;
    Ok(n)
}

/// Symmetric two-branch power combiner. Each branch node `x1`, `x2` is an
/// active resonator tied to the combining node `cmb` through a capacitor.
/// The odd mode (branches in anti-phase) sees `cmb` as a virtual ground and
/// is unstable; the even mode is damped by the load at `cmb`.
pub fn combiner() -> Result<Netlist> {
    let mut n = Netlist::new();
    for x in ["x1", "x2"] {
        n.inductor(&format!("l_{x}"), x, "0", 1e-9)?;
        n.capacitor(&format!("c_{x}"), x, "0", 2e-12)?;
        n.resistor(&format!("rneg_{x}"), x, "0", -400.0)?;
        n.capacitor(&format!("cc_{x}"), x, "cmb", 0.5e-12)?;
    }
    n.resistor("rload", "cmb", "0", 25.0)?;
    n.capacitor("cload", "cmb", "0", 0.5e-12)?;
    Ok(n)
}

/// One-port whose internal node `i` hides a negative-resistance resonator
/// behind a series inductor. With the port (node `p`, 50 Ω) matched or open
/// the loss through `p` keeps it stable; shorting the port removes that loss
/// and the internal mode goes unstable.
pub fn proviso_net() -> Result<Netlist> {
    let mut n = Netlist::new();
    n.capacitor("ci", "i", "0", 2e-12)?;
    n.resistor("rneg", "i", "0", -300.0)?;
    n.inductor("ls", "i", "p", 3e-9)?;
    n.resistor("rp", "p", "0", 40.0)?;
    n.capacitor("cp", "p", "0", 0.3e-12)?;
    n.add_port("P1", "p", 50.0, crate::netsim::DEFAULT_PORT_FREF_HZ)?;
    Ok(n)
}

/// Parallel resonator whose net conductance is barely positive, so modest
/// element spreads push it either side of the stability boundary.
pub fn marginal_rlc() -> Result<Netlist> {
    let mut n = Netlist::new();
    n.resistor("rpos", "a", "0", 100.0)?;
    n.resistor("rneg", "a", "0", -102.0)?;
    n.inductor("l1", "a", "0", 1e-9)?;
    n.capacitor("c1", "a", "0", 1e-12)?;
    Ok(n)
}

/// Random connected RLC network with optional transconductors.
///
/// Every node gets a shunt capacitor and a shunt resistor, so all natural
/// frequencies are finite and the pencil order equals nodes + inductors.
/// A random spanning tree of series R or L branches connects the nodes;
/// a few extra resistive branches and up to two VCCS are sprinkled on top.
pub fn random_net<R: Rng>(rng: &mut R, n_nodes: usize) -> Result<Netlist> {
    let name = |i: usize| format!("n{i}");
    let mut n = Netlist::new();
    let mut k = 0usize;
    let mut next = |p: &str| {
        k += 1;
        format!("{p}{k}")
    };
    for i in 0..n_nodes {
        n.capacitor(&next("c"), &name(i), "0", rng.random_range(0.5e-12..2e-12))?;
        n.resistor(&next("r"), &name(i), "0", rng.random_range(100.0..1000.0))?;
    }
    let mut branch = |n: &mut Netlist, rng: &mut R, a: usize, b: usize| -> Result<()> {
        if rng.random_bool(0.5) {
            n.inductor(&next("l"), &name(a), &name(b), rng.random_range(1e-9..5e-9))?;
        } else {
            n.resistor(&next("r"), &name(a), &name(b), rng.random_range(20.0..200.0))?;
        }
        Ok(())
    };
    for i in 1..n_nodes {
        let j = rng.random_range(0..i);
        branch(&mut n, rng, i, j)?;
    }
    for _ in 0..n_nodes / 3 {
        let a = rng.random_range(0..n_nodes);
        let b = rng.random_range(0..n_nodes);
        if a != b {
            // resistive only, so no loop is made entirely of inductors
            n.resistor(&next("r"), &name(a), &name(b), rng.random_range(20.0..200.0))?;
        }
    }
    if n_nodes >= 2 {
        for _ in 0..rng.random_range(0..=2usize) {
            let a = rng.random_range(0..n_nodes);
            let b = (a + rng.random_range(1..n_nodes)) % n_nodes;
            let g = rng.random_range(-5e-3..5e-3);
            let nm = next("g");
            n.vccs(&nm, &name(a), "0", &name(b), "0", g)?;
        }
    }
    Ok(n)
}
