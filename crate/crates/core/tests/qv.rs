mod common;

use approx::assert_relative_eq;
use qvsec::network::{BusKind, Generator, Network};
use qvsec::parallel::ExecMode;
use qvsec::powerflow::{solve, SolverOptions};
use qvsec::qv::{batch_qv, compute_qv_curve, q_margin_of, QvCurve, SweepOptions};
use qvsec::Error;

use common::*;

fn base(net: &Network) -> qvsec::powerflow::PowerFlowSolution {
    let sol = solve(net, &SolverOptions::default(), None).unwrap();
    assert!(sol.converged);
    sol
}

fn ieee14() -> Network {
    let text = std::fs::read_to_string(case_path("ieee14.toml")).unwrap();
    qvsec::network::parse_native_case(&text).unwrap()
}

fn fine() -> SweepOptions {
    SweepOptions {
        v_step: 1e-4,
        ..SweepOptions::default()
    }
}

/// Received Q over a lossless line into a bus with shunt `b`, minus the
/// shunt's own injection: q(V) = V²(1/x - b) - V/x, in p.u.
fn two_bus_q(v: f64, x: f64, b: f64) -> f64 {
    v * v * (1.0 / x - b) - v / x
}

#[test]
fn two_bus_curve_follows_the_closed_form() {
    let net = two_bus(0.1, 0.0, 0.0);
    let c = compute_qv_curve(&net, &base(&net), 2, &SweepOptions::default()).unwrap();
    for (v, q) in c.converged_points() {
        assert!((q / 100.0 - two_bus_q(v, 0.1, 0.0)).abs() < 1e-8, "v={v} q={q}");
    }
    assert_relative_eq!(c.q_margin, 250.0, max_relative = 1e-3);
    assert!((c.v_nose - 0.5).abs() < 0.02);

    let f = compute_qv_curve(&net, &base(&net), 2, &fine()).unwrap();
    assert_relative_eq!(f.q_margin, c.q_margin, max_relative = 1e-3);
    assert!((f.v_nose - 0.5).abs() < 1e-3);
}

#[test]
fn capacitive_shunt_never_lowers_the_two_bus_margin() {
    let mut last = 0.0;
    for b in [0.0, 0.5, 2.0] {
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.buses[1].b_shunt = b;
        let c = compute_qv_curve(&net, &base(&net), 2, &SweepOptions::default()).unwrap();
        let y = 1.0 / 0.1 - b;
        let v_star = (1.0 / 0.1) / (2.0 * y);
        let analytic = -100.0 * two_bus_q(v_star, 0.1, b);
        assert_relative_eq!(c.q_margin, analytic, max_relative = 1e-3);
        assert!((c.v_nose - v_star).abs() <= 0.01, "b={b}: {} vs {v_star}", c.v_nose);
        assert!(c.q_margin >= last);
        last = c.q_margin;
    }
}

#[test]
fn study_bus_voltage_tracks_the_setpoint() {
    let net = ieee14();
    let sol = base(&net);
    let c = compute_qv_curve(&net, &sol, 14, &SweepOptions::default()).unwrap();
    let pts: Vec<_> = c.converged_points().collect();
    assert!(pts.windows(2).all(|w| w[0].0 > w[1].0));
    for &(v, q) in pts.iter().take(5) {
        let mut study = net.clone();
        study.generators.push(Generator::fictitious(14, v));
        let s = solve(&study, &SolverOptions::default(), None).unwrap();
        assert!(s.converged);
        assert!((s.v_mag[13] - v).abs() < 1e-8);
        assert!((s.gen_q.last().unwrap() - q).abs() < 1e-5, "v={v}");
    }
}

#[test]
fn stored_margin_equals_recomputed_margin() {
    let net = ieee14();
    let sol = base(&net);
    for (_, c) in batch_qv(&net, &sol, &net.load_buses(), &SweepOptions::default()) {
        let c = c.unwrap();
        assert_eq!(q_margin_of(&c).unwrap(), c.q_margin);
    }
}

#[test]
fn ieee14_load_bus_margins_match_the_fine_grid() {
    let net = ieee14();
    let sol = base(&net);
    let buses = net.load_buses();
    assert_eq!(buses, vec![4, 5, 7, 9, 10, 11, 12, 13, 14]);
    let coarse = batch_qv(&net, &sol, &buses, &SweepOptions::default());
    let fine = batch_qv(&net, &sol, &buses, &fine());
    assert_eq!(coarse.len(), 9);
    for b in &buses {
        let c = coarse[b].as_ref().unwrap();
        let f = fine[b].as_ref().unwrap();
        assert!(c.q_margin > 0.0);
        // sampling a smooth minimum on a coarser grid can only miss downward
        assert!(c.q_margin <= f.q_margin + 1e-9);
        assert_relative_eq!(c.q_margin, f.q_margin, max_relative = 5e-3);
        let expected = IEEE14_FINE_MARGINS.iter().find(|(id, _)| id == b).unwrap().1;
        assert_relative_eq!(f.q_margin, expected, max_relative = 1e-6);
    }
}

/// Fine-grid (v_step 1e-4) margins of the zoned IEEE 14 case, MVAr.
const IEEE14_FINE_MARGINS: [(u32, f64); 9] = [
    (4, 238.002821631978),
    (5, 259.37149664634705),
    (7, 120.48615941592679),
    (9, 103.65203718876697),
    (10, 88.93428569247686),
    (11, 83.6104728035466),
    (12, 70.09310352799855),
    (13, 82.70321452631852),
    (14, 67.73732517182147),
];

#[test]
fn heavy_shunt_compensation_moves_the_nose_up() {
    // doubled demand held up by capacitors at every load bus
    let mut net = ieee14();
    for b in net.buses.iter_mut() {
        b.p_load *= 2.0;
        b.q_load *= 2.0;
        if b.kind == BusKind::Pq {
            b.b_shunt += 0.22;
        }
    }
    for g in net.generators.iter_mut() {
        g.p_set *= 2.0;
    }
    let sol = base(&net);
    let curves = batch_qv(&net, &sol, &net.load_buses(), &SweepOptions::default());
    let high = curves
        .values()
        .filter_map(|c| c.as_ref().ok())
        .map(|c| c.v_nose)
        .fold(0.0, f64::max);
    assert!(high > 0.9, "highest nose {high}");
}

#[test]
fn collapse_bracket_is_refined() {
    // heavy load propped up by a shunt: the curve collapses before the floor
    let mut net = two_bus(0.3, 180.0, 0.0);
    net.buses[1].b_shunt = 1.0;
    let sol = base(&net);
    for steps in [0, 4, 8] {
        let opts = SweepOptions {
            refine_bisection_steps: steps,
            ..SweepOptions::default()
        };
        let c = compute_qv_curve(&net, &sol, 2, &opts).unwrap();
        assert!(c.collapse_detected);
        let grid: Vec<_> = c.points.iter().filter(|p| grid_point(&c, p.v_set)).collect();
        let last_good = grid.iter().filter(|p| p.converged).last().unwrap().v_set;
        let first_bad = grid.iter().find(|p| !p.converged).unwrap().v_set;
        assert!((last_good - first_bad - opts.v_step).abs() < 1e-12);
        let lowest_ok = c.converged_points().map(|(v, _)| v).fold(f64::INFINITY, f64::min);
        // Q rises steeply into a real-power collapse, so the minimum sits
        // well above the bracket here; it can never sit below it
        assert!(c.v_nose >= lowest_ok);
        assert!(c.v_nose > last_good + opts.v_step);
        let highest_bad = c
            .points
            .iter()
            .filter(|p| !p.converged && p.v_set < lowest_ok)
            .map(|p| p.v_set)
            .fold(f64::NEG_INFINITY, f64::max);
        let width = lowest_ok - highest_bad;
        assert!(width <= opts.v_step / 2f64.powi(steps as i32) + 1e-12, "steps={steps} width={width}");
    }
}

fn grid_point(c: &QvCurve, v: f64) -> bool {
    let v0 = c.points[0].v_set;
    let k = (v0 - v) / 0.01;
    (k - k.round()).abs() < 1e-9
}

#[test]
fn curves_are_bit_identical_across_runs_and_modes() {
    let net = ieee14();
    let sol = base(&net);
    let buses = net.load_buses();
    let seq = SweepOptions {
        exec: ExecMode::Sequential,
        ..SweepOptions::default()
    };
    let a = batch_qv(&net, &sol, &buses, &SweepOptions::default());
    let b = batch_qv(&net, &sol, &buses, &SweepOptions::default());
    let c = batch_qv(&net, &sol, &buses, &seq);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn batch_is_order_independent() {
    let net = ieee14();
    let sol = base(&net);
    let mut buses = net.load_buses();
    let fwd = batch_qv(&net, &sol, &buses, &SweepOptions::default());
    buses.reverse();
    assert_eq!(fwd, batch_qv(&net, &sol, &buses, &SweepOptions::default()));

    let one = batch_qv(&net, &sol, &[9], &SweepOptions::default());
    assert_eq!(one.len(), 1);
    assert_eq!(one[&9], compute_qv_curve(&net, &sol, 9, &SweepOptions::default()));
}

#[test]
fn batch_keeps_per_bus_errors() {
    let net = ieee14();
    let sol = base(&net);
    let out = batch_qv(&net, &sol, &[1, 9, 99], &SweepOptions::default());
    assert_eq!(out[&1], Err(Error::StudyBusIsSlack(1)));
    assert_eq!(out[&99], Err(Error::UnknownBus(99)));
    assert!(out[&9].is_ok());
}

#[test]
fn input_network_is_untouched() {
    let net = ieee14();
    let sol = base(&net);
    let before = net.clone();
    compute_qv_curve(&net, &sol, 14, &SweepOptions::default()).unwrap();
    assert_eq!(net, before);
}

#[test]
fn rrb_lists_each_generator_once_in_pinning_order() {
    let net = ieee14();
    let sol = base(&net);
    for (bus, c) in batch_qv(&net, &sol, &net.load_buses(), &SweepOptions::default()) {
        let c = c.unwrap();
        let mut ids: Vec<_> = c.rrb.iter().map(|e| e.generator).collect();
        assert!(c.rrb.windows(2).all(|w| w[0].v_set >= w[1].v_set), "bus {bus}");
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), c.rrb.len());
        for e in &c.rrb {
            assert_ne!(sol.gen_state[e.generator], qvsec::powerflow::UnitState::AtMax);
        }
    }
}
