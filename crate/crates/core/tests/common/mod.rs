#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64;
use qvsec::network::{
    parse_standard_case, Branch, Bus, BusKind, Generator, HvdcControl, HvdcLink, Network,
    PowerFactor, Zone,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn case_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(file)
}

pub fn load_standard(file: &str) -> Network {
    let text = std::fs::read_to_string(case_path(file)).unwrap();
    parse_standard_case(&text).unwrap()
}

pub fn zone(id: u32) -> Zone {
    Zone {
        id,
        label: format!("zone {id}"),
    }
}

/// Slack bus 1 at `v1`, load bus 2, one lossless branch of reactance `x`.
pub fn two_bus(x: f64, p_load: f64, q_load: f64) -> Network {
    let mut b2 = Bus::new(2, BusKind::Pq);
    b2.p_load = p_load;
    b2.q_load = q_load;
    Network {
        name: "two-bus".into(),
        mva_base: 100.0,
        buses: vec![Bus::new(1, BusKind::Slack), b2],
        generators: vec![Generator::new(1, 0.0, 1.0, -9999.0, 9999.0)],
        branches: vec![Branch::line(1, 2, 0.0, x, 0.0)],
        hvdc_links: vec![],
        zones: vec![zone(1)],
    }
}

/// Two zones joined by the 2-3 tie. Zone 2 (buses 3, 4, 5) carries most of
/// the load and has only a small generator at bus 5.
pub fn five_bus_two_zone() -> Network {
    let text = std::fs::read_to_string(case_path("five_bus_two_zone.toml")).unwrap();
    qvsec::network::parse_native_case(&text).unwrap()
}

/// Independent Gauss-Seidel solution (dense admittance, no Q limits),
/// iterated until the largest voltage update is below `tol`.
pub fn gauss_seidel(net: &Network, tol: f64, max_iter: usize) -> Vec<Complex64> {
    let n = net.buses.len();
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for (i, b) in net.buses.iter().enumerate() {
        y[i][i] += Complex64::new(b.g_shunt, b.b_shunt);
    }
    for br in net.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (pos(br.from_bus), pos(br.to_bus));
        let z = Complex64::new(br.r, br.x);
        let ys = Complex64::new(1.0, 0.0) / z;
        let a = Complex64::new(br.tap * br.shift.cos(), br.tap * br.shift.sin());
        let half = Complex64::new(0.0, br.b * 0.5);
        y[f][f] += (ys + half) / (br.tap * br.tap);
        y[t][t] += ys + half;
        y[f][t] -= ys / a.conj();
        y[t][f] -= ys / a;
    }

    let base = net.mva_base;
    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    let mut v_set: Vec<Option<f64>> = vec![None; n];
    for (i, b) in net.buses.iter().enumerate() {
        p_spec[i] -= b.p_load / base;
        q_spec[i] -= b.q_load / base;
    }
    for g in net.generators.iter().filter(|g| g.in_service) {
        let i = pos(g.bus);
        p_spec[i] += g.p_set / base;
        v_set[i] = Some(g.v_set);
    }
    let slack = net.buses.iter().position(|b| b.kind == BusKind::Slack).unwrap();
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(v_set[i].unwrap_or(1.0), 0.0))
        .collect();

    for _ in 0..max_iter {
        let mut worst = 0.0f64;
        for i in 0..n {
            if i == slack {
                continue;
            }
            let mut sum = Complex64::new(0.0, 0.0);
            for k in 0..n {
                if k != i {
                    sum += y[i][k] * v[k];
                }
            }
            let q = if v_set[i].is_some() {
                -(v[i].conj() * (sum + y[i][i] * v[i])).im
            } else {
                q_spec[i]
            };
            let s = Complex64::new(p_spec[i], q);
            let mut next = ((s / v[i]).conj() - sum) / y[i][i];
            if let Some(vs) = v_set[i] {
                next = next / next.norm() * vs;
            }
            worst = worst.max((next - v[i]).norm());
            v[i] = next;
        }
        if worst < tol {
            return v;
        }
    }
    panic!("Gauss-Seidel did not reach {tol}");
}

/// Random connected network of `n` buses (2..=10) with lines, a tap
/// changer, shunts, PV generators with wide limits and, optionally, HVDC
/// links including one that feeds an AC island.
pub fn random_network(seed: u64, n: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buses = Vec::new();
    for i in 1..=n as u32 {
        let kind = if i == 1 { BusKind::Slack } else { BusKind::Pq };
        let mut b = Bus::new(i, kind);
        if i > 1 {
            b.p_load = rng.random_range(0.0..30.0);
            b.q_load = rng.random_range(-5.0..15.0);
            if rng.random_bool(0.3) {
                b.b_shunt = rng.random_range(0.0..0.1);
                b.g_shunt = rng.random_range(0.0..0.01);
            }
        }
        buses.push(b);
    }
    // a dc-fed island made of the last two buses when requested
    let island = n >= 6 && rng.random_bool(0.4);
    let ac_n = if island { n - 2 } else { n };
    let mut branches = Vec::new();
    for i in 2..=ac_n as u32 {
        let j = rng.random_range(1..i);
        branches.push(random_line(&mut rng, j, i));
    }
    for _ in 0..rng.random_range(0..3) {
        let a = rng.random_range(1..=ac_n as u32);
        let b = rng.random_range(1..=ac_n as u32);
        if a != b {
            branches.push(random_line(&mut rng, a, b));
        }
    }
    if let Some(br) = branches.last_mut() {
        br.tap = rng.random_range(0.95..1.05);
        br.shift = rng.random_range(-0.05..0.05);
    }
    let mut generators = vec![Generator::new(1, 0.0, 1.0, -500.0, 500.0)];
    for i in 2..=ac_n as u32 {
        if rng.random_bool(0.3) {
            buses[i as usize - 1].kind = BusKind::Pv;
            let v = rng.random_range(0.98..1.04);
            generators.push(Generator::new(i, rng.random_range(0.0..40.0), v, -500.0, 500.0));
        }
    }
    let mut hvdc_links = Vec::new();
    if island {
        let (a, b) = (n as u32 - 1, n as u32);
        branches.push(random_line(&mut rng, a, b));
        buses[b as usize - 1].kind = BusKind::Pv;
        generators.push(Generator::new(b, 0.0, 1.0, -500.0, 500.0));
        hvdc_links.push(HvdcLink {
            from_bus: rng.random_range(2..=ac_n as u32),
            to_bus: a,
            p_set: 0.0,
            loss_factor: 0.02,
            control: HvdcControl::PPf {
                pf_from: PowerFactor::lagging(0.95),
                pf_to: PowerFactor::leading(0.9),
            },
        });
    }
    if ac_n >= 3 && rng.random_bool(0.5) {
        let from = rng.random_range(2..=ac_n as u32);
        let mut to = rng.random_range(2..=ac_n as u32);
        if to == from {
            to = if from == 2 { 3 } else { 2 };
        }
        let has_gen = |bus: u32| generators.iter().any(|g| g.bus == bus);
        let control = if has_gen(from) || has_gen(to) || rng.random_bool(0.5) {
            HvdcControl::PPf {
                pf_from: PowerFactor::lagging(0.97),
                pf_to: PowerFactor::lagging(0.93),
            }
        } else {
            HvdcControl::PV {
                v_set_from: 1.0,
                v_set_to: 1.01,
                q_min_from: -300.0,
                q_max_from: 300.0,
                q_min_to: -300.0,
                q_max_to: 300.0,
            }
        };
        hvdc_links.push(HvdcLink {
            from_bus: from,
            to_bus: to,
            p_set: rng.random_range(0.0..20.0),
            loss_factor: 0.01,
            control,
        });
    }
    Network {
        name: format!("random-{seed}"),
        mva_base: 100.0,
        buses,
        generators,
        branches,
        hvdc_links,
        zones: vec![zone(1)],
    }
}

fn random_line(rng: &mut ChaCha8Rng, a: u32, b: u32) -> Branch {
    Branch::line(
        a,
        b,
        rng.random_range(0.0..0.03),
        rng.random_range(0.03..0.2),
        rng.random_range(0.0..0.05),
    )
}

/// Reactive-limit complementarity of a converged solution, `tol` in p.u.
/// (voltages) and p.u. of the MVA base (reactive power). Returns the
/// offending units, empty when every condition holds.
pub fn complementarity_violations(
    net: &Network,
    sol: &qvsec::powerflow::PowerFlowSolution,
    tol: f64,
) -> Vec<String> {
    use qvsec::powerflow::UnitState;
    let idx = net.bus_index();
    let qtol = tol * net.mva_base;
    let mut bad = Vec::new();
    let mut check = |name: String, state: UnitState, v: f64, v_set: f64, q: f64, q_min: f64, q_max: f64| {
        let ok = match state {
            UnitState::Regulating => {
                (v - v_set).abs() <= tol && q >= q_min - qtol && q <= q_max + qtol
            }
            UnitState::AtMax => {
                (q - q_max).abs() <= qtol && (v_set - v) * (q_max - q) >= -tol && v <= v_set + tol
            }
            UnitState::AtMin => {
                (q - q_min).abs() <= qtol && (v - v_set) * (q - q_min) >= -tol && v >= v_set - tol
            }
            UnitState::Fixed | UnitState::Offline => true,
        };
        if !ok {
            bad.push(format!("{name}: {state:?} v={v} v_set={v_set} q={q} [{q_min}, {q_max}]"));
        }
    };
    for (g, gen) in net.generators.iter().enumerate() {
        let b = idx[&gen.bus];
        if !gen.in_service || net.buses[b].kind == BusKind::Slack || gen.fictitious {
            continue;
        }
        check(
            format!("generator {g}"),
            sol.gen_state[g],
            sol.v_mag[b],
            gen.v_set,
            sol.gen_q[g],
            gen.q_min,
            gen.q_max,
        );
    }
    for (l, link) in net.hvdc_links.iter().enumerate() {
        if let HvdcControl::PV {
            v_set_from,
            v_set_to,
            q_min_from,
            q_max_from,
            q_min_to,
            q_max_to,
        } = link.control
        {
            let ends = [
                (link.from_bus, v_set_from, q_min_from, q_max_from),
                (link.to_bus, v_set_to, q_min_to, q_max_to),
            ];
            for (k, (bus, v_set, lo, hi)) in ends.into_iter().enumerate() {
                check(
                    format!("link {l} end {k}"),
                    sol.hvdc_state[l][k],
                    sol.v_mag[idx[&bus]],
                    v_set,
                    sol.hvdc_q[l][k],
                    lo,
                    hi,
                );
            }
        }
    }
    bad
}
