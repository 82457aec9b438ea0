mod common;

use std::collections::BTreeMap;

use approx::assert_relative_eq;
use qvsec::network::{HvdcControl, HvdcScheme, Network};
use qvsec::powerflow::{branch_flows, solve};
use qvsec::qv::SweepOptions;
use qvsec::scenario::*;
use qvsec::Error;

use common::*;

fn ieee14() -> Network {
    let text = std::fs::read_to_string(case_path("ieee14.toml")).unwrap();
    qvsec::network::parse_native_case(&text).unwrap()
}

fn base_case(net: &Network) -> BaseCase {
    BaseCase::compute(net, &ZonePolicy::default(), &SweepOptions::default()).unwrap().0
}

#[test]
fn fixed_injection_scenario_reproduces_base_voltages() {
    let net = ieee14();
    let base = base_case(&net);
    let tol = SweepOptions::default().solver.tol;
    let mut checked = 0;
    for id in 1..=net.branches.len() {
        let spec = ScenarioSpec::new(BranchRef::Id(id), HvdcScheme::PPf);
        let scen = match make_hvdc_scenario(&net, &base.solution, &spec, &ScenarioOptions::default()) {
            Ok(n) => n,
            Err(Error::ZeroBaseFlow { .. }) => continue,
            Err(e) => panic!("branch {id}: {e}"),
        };
        let sol = solve(&scen, &Default::default(), None).unwrap();
        assert!(sol.converged, "branch {id}");
        for (a, b) in sol.v_mag.iter().zip(&base.solution.v_mag) {
            assert!((a - b).abs() <= 10.0 * tol, "branch {id}: {a} vs {b}");
        }
        for (a, b) in sol.v_ang.iter().zip(&base.solution.v_ang) {
            assert!((a - b).abs() <= 10.0 * tol, "branch {id}");
        }
        checked += 1;
    }
    assert_eq!(checked, 19);
}

#[test]
fn link_setpoints_follow_the_base_flow() {
    let net = ieee14();
    let base = base_case(&net);
    let flows = branch_flows(&net, &base.solution);
    for id in [2, 5, 10] {
        let scen = make_hvdc_scenario(
            &net,
            &base.solution,
            &ScenarioSpec::new(BranchRef::Id(id), HvdcScheme::PPf),
            &ScenarioOptions::default(),
        )
        .unwrap();
        let link = scen.hvdc_links.last().unwrap();
        let f = flows[id - 1];
        let br = &net.branches[id - 1];
        let (ps, pr) = if f.p_from > 0.0 { (f.p_from, f.p_to) } else { (f.p_to, f.p_from) };
        assert_eq!(link.from_bus, if f.p_from > 0.0 { br.from_bus } else { br.to_bus });
        assert_relative_eq!(link.p_set, ps, max_relative = 1e-12);
        assert_relative_eq!(link.p_delivered(), -pr, max_relative = 1e-9);
        assert!(!scen.branches[id - 1].in_service);
        let others_same = scen
            .branches
            .iter()
            .zip(&net.branches)
            .enumerate()
            .all(|(i, (a, b))| i == id - 1 || a == b);
        assert!(others_same && scen.buses == net.buses && scen.generators == net.generators);
        assert!(scen.validate().is_empty());
    }
}

#[test]
fn regulated_link_holds_end_voltages_at_base_values() {
    let net = ieee14();
    let base = base_case(&net);
    let wide = ScenarioOptions { pv_q_limit_scale: 100.0 };
    let idx = net.bus_index();
    for id in [3, 7, 12, 17] {
        let spec = ScenarioSpec::new(BranchRef::Id(id), HvdcScheme::PV);
        let scen = make_hvdc_scenario(&net, &base.solution, &spec, &wide).unwrap();
        let sol = solve(&scen, &Default::default(), None).unwrap();
        assert!(sol.converged, "branch {id}");
        let link = scen.hvdc_links.last().unwrap();
        for bus in [link.from_bus, link.to_bus] {
            let i = idx[&bus];
            assert!((sol.v_mag[i] - base.solution.v_mag[i]).abs() < 1e-8, "branch {id} bus {bus}");
        }
        assert!(matches!(link.control, HvdcControl::PV { .. }));
    }
}

#[test]
fn out_of_service_branch_is_rejected() {
    let mut net = ieee14();
    net.branches[4].in_service = false;
    let sol = solve(&net, &Default::default(), None).unwrap();
    let spec = ScenarioSpec::new(BranchRef::Id(5), HvdcScheme::PPf);
    assert_eq!(
        make_hvdc_scenario(&net, &sol, &spec, &ScenarioOptions::default()),
        Err(Error::BranchOutOfService(5))
    );
}

#[test]
fn zero_flow_branch_needs_explicit_setpoints() {
    let net = ieee14();
    let base = base_case(&net);
    let spec = ScenarioSpec::new(BranchRef::Endpoints(7, 8), HvdcScheme::PPf);
    assert_eq!(
        make_hvdc_scenario(&net, &base.solution, &spec, &ScenarioOptions::default()),
        Err(Error::ZeroBaseFlow { branch: 14 })
    );
    let explicit = ScenarioSpec {
        policy: SetpointPolicy::Explicit(ExplicitSetpoints::transfer(5.0)),
        ..spec.clone()
    };
    let scen = make_hvdc_scenario(&net, &base.solution, &explicit, &ScenarioOptions::default()).unwrap();
    assert_eq!(scen.hvdc_links[0].from_bus, 7);
    let reversed = ScenarioSpec {
        policy: SetpointPolicy::Explicit(ExplicitSetpoints::transfer(-5.0)),
        ..spec
    };
    let scen = make_hvdc_scenario(&net, &base.solution, &reversed, &ScenarioOptions::default()).unwrap();
    assert_eq!((scen.hvdc_links[0].from_bus, scen.hvdc_links[0].p_set), (8, 5.0));
}

#[test]
fn regulated_end_on_the_slack_is_rejected() {
    let net = ieee14();
    let base = base_case(&net);
    let spec = ScenarioSpec::new(BranchRef::Endpoints(1, 2), HvdcScheme::PV);
    assert!(matches!(
        make_hvdc_scenario(&net, &base.solution, &spec, &ScenarioOptions::default()),
        Err(Error::PvEndOnSlack { bus: 1, .. })
    ));
}

#[test]
fn branch_orientation_does_not_matter() {
    let net = ieee14();
    let base = base_case(&net);
    for scheme in [HvdcScheme::PPf, HvdcScheme::PV] {
        let a = run_scenario(
            &net,
            &base,
            &ScenarioSpec::new(BranchRef::Endpoints(4, 9), scheme),
            &SweepOptions::default(),
            &ScenarioOptions::default(),
        )
        .unwrap();
        let b = run_scenario(
            &net,
            &base,
            &ScenarioSpec::new(BranchRef::Endpoints(9, 4), scheme),
            &SweepOptions::default(),
            &ScenarioOptions::default(),
        )
        .unwrap();
        assert_eq!(a.branch_id, b.branch_id);
        assert_eq!(a.label, b.label);
        assert_eq!(a.zone_margin, b.zone_margin);
        assert_eq!(a.zone_delta_pct, b.zone_delta_pct);
        assert_eq!(a.per_bus_margins, b.per_bus_margins);
        assert_eq!(a.link, b.link);
    }
}

#[test]
fn zone_means_recompute_from_per_bus_margins() {
    let net = ieee14();
    let base = base_case(&net);
    let r = run_scenario(
        &net,
        &base,
        &ScenarioSpec::new(BranchRef::Id(8), HvdcScheme::PV),
        &SweepOptions::default(),
        &ScenarioOptions::default(),
    )
    .unwrap();
    assert!(r.feasible);
    let idx = net.bus_index();
    let mut sums: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (bus, m) in &r.per_bus_margins {
        sums.entry(net.buses[idx[bus]].zone).or_default().push(*m);
    }
    assert_eq!(sums.values().map(Vec::len).sum::<usize>(), base.buses.len());
    for (zone, ms) in sums {
        let mean = ms.iter().sum::<f64>() / ms.len() as f64;
        assert_relative_eq!(r.zone_margin[&zone], mean, max_relative = 1e-9);
        let expected = 100.0 * (mean - base.margins.zone_margin[&zone]) / base.margins.zone_margin[&zone];
        assert_relative_eq!(r.zone_delta_pct[&zone].pct().unwrap(), expected, max_relative = 1e-9);
    }
}

#[test]
fn single_bus_zone_mean_is_that_bus() {
    let net = ieee14();
    let mut per_bus = BTreeMap::new();
    per_bus.insert(4, 123.0);
    per_bus.insert(9, 10.0);
    per_bus.insert(10, 30.0);
    let means = zone_means(&net, &per_bus);
    assert_eq!(means[&1], 123.0);
    assert_eq!(means[&3], 20.0);
}

#[test]
fn percent_delta_arithmetic() {
    assert_eq!(ZoneDelta::between(200.0, 260.0), ZoneDelta::Pct(30.0));
    assert_eq!(ZoneDelta::between(200.0, 150.0), ZoneDelta::Pct(-25.0));
    assert_eq!(ZoneDelta::between(0.0, 50.0), ZoneDelta::Undefined);
    assert_eq!(ZoneDelta::Undefined.pct(), None);
}

#[test]
fn restoring_the_branch_reproduces_base_margins() {
    let net = ieee14();
    let base = base_case(&net);
    let mut scen = net.clone();
    scen.branches[6].in_service = false;
    scen.branches[6].in_service = true;
    let sol = solve(&scen, &Default::default(), None).unwrap();
    let (m, _) = margins(&scen, &sol, &base.buses, &SweepOptions::default());
    assert_eq!(m, base.margins);
}

#[test]
fn one_branch_gives_two_cases() {
    let net = ieee14();
    let scan = run_scan(
        &net,
        &[BranchRef::Id(10)],
        &[HvdcScheme::PV, HvdcScheme::PPf],
        &ZonePolicy::default(),
        &SweepOptions::default(),
        &ScenarioOptions::default(),
    )
    .unwrap();
    assert_eq!(scan.cases.len(), 2);
    assert_eq!(scan.cases[0].scheme, HvdcScheme::PPf);
    assert_eq!(scan.features.n_rows(), 2);
    assert_eq!(scan.features.n_cols(), net.zones.len());
    assert_eq!(scan.feature_zones, vec![1, 2, 3]);
}

#[test]
fn scan_is_deterministic_and_mode_independent() {
    let net = ieee14();
    let branches: Vec<_> = (1..=net.branches.len()).map(BranchRef::Id).collect();
    let schemes = [HvdcScheme::PPf, HvdcScheme::PV];
    let run = |sweep: &SweepOptions| {
        run_scan(&net, &branches, &schemes, &ZonePolicy::default(), sweep, &ScenarioOptions::default()).unwrap()
    };
    let a = run(&SweepOptions::default());
    let b = run(&SweepOptions::default());
    let c = run(&SweepOptions {
        exec: qvsec::parallel::ExecMode::Sequential,
        ..SweepOptions::default()
    });
    assert_eq!(a.cases.len(), 40);
    assert_eq!(a.features, b.features);
    assert_eq!(a.cases, c.cases);
    assert_eq!(a.features, c.features);
    let errors: Vec<_> = a.cases.iter().filter(|c| c.outcome.is_err()).map(|c| c.label.as_str()).collect();
    assert_eq!(errors, ["1:1-2:p_v", "2:1-5:p_v", "14:7-8:p_pf", "14:7-8:p_v"]);
}

#[test]
fn kv_floor_limits_the_study_buses() {
    let net = ieee14();
    assert_eq!(ZonePolicy::default().study_buses(&net), vec![4, 5, 7, 9, 10, 11, 12, 13, 14]);
    assert_eq!(ZonePolicy { kv_floor: 100.0 }.study_buses(&net), vec![4, 5]);
}

/// Receiving-zone mean margin of the five-bus fixture under a scenario on
/// the 2-3 tie.
fn receiving(net: &Network, base: &BaseCase, spec: ScenarioSpec, opts: ScenarioOptions) -> ScenarioResult {
    let r = run_scenario(net, base, &spec, &SweepOptions::default(), &opts).unwrap();
    assert!(r.feasible, "{}", r.label);
    r
}

#[test]
fn regulated_link_beats_fixed_injections_in_the_weak_zone() {
    let net = five_bus_two_zone();
    let base = base_case(&net);
    let tie = BranchRef::Endpoints(2, 3);
    let ppf = receiving(&net, &base, ScenarioSpec::new(tie, HvdcScheme::PPf), ScenarioOptions::default());
    let pv = receiving(&net, &base, ScenarioSpec::new(tie, HvdcScheme::PV), ScenarioOptions::default());
    assert!(ppf.zone_delta_pct[&2].pct().unwrap() <= pv.zone_delta_pct[&2].pct().unwrap());
}
