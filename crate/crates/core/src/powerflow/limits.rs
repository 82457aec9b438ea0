//! PV/PQ switching on reactive limits.

use serde::{Deserialize, Serialize};

use super::model::{Model, State};
use super::{PowerFlowSolution, SolverOptions, UnitState};
use crate::network::{BusKind, HvdcControl, Network};

/// New state for one unit, or `None` to keep it.
///
/// A regulating unit outside its range pins to the violated limit. A pinned
/// unit is released when its bus voltage crosses back over the setpoint,
/// which is exactly when regulating would need less than the limit.
fn rule(
    state: UnitState,
    q: f64,
    v: f64,
    v_set: f64,
    q_min: f64,
    q_max: f64,
    tol: f64,
    may_release: bool,
) -> Option<UnitState> {
    match state {
        UnitState::Regulating if q > q_max + tol => Some(UnitState::AtMax),
        UnitState::Regulating if q < q_min - tol => Some(UnitState::AtMin),
        UnitState::AtMax if may_release && v > v_set + tol => Some(UnitState::Regulating),
        UnitState::AtMin if may_release && v < v_set - tol => Some(UnitState::Regulating),
        _ => None,
    }
}

pub(crate) fn proposed_switches(
    model: &Model,
    st: &State,
    opts: &SolverOptions,
    released: &[bool],
) -> Vec<(usize, UnitState)> {
    let (_, q) = model.unit_outputs(st);
    let mut out = Vec::new();
    for (u, unit) in model.units.iter().enumerate() {
        if unit.on_slack || unit.fictitious || st.forced[u] {
            continue;
        }
        let may_release = opts.allow_switchback && !released[u];
        if let Some(next) = rule(
            st.unit[u],
            q[u],
            st.v[unit.bus],
            unit.v_set,
            unit.q_min,
            unit.q_max,
            opts.tol,
            may_release,
        ) {
            out.push((u, next));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitAssignment {
    pub gen_state: Vec<UnitState>,
    pub hvdc_state: Vec<[UnitState; 2]>,
    pub changed: bool,
}

/// One switching pass over a solved point: which generators and P-V
/// converter ends should pin or release. Limits and `tol` are compared in
/// MVAr, voltages in p.u.
pub fn check_limits_and_switch(
    net: &Network,
    sol: &PowerFlowSolution,
    allow_switchback: bool,
    tol: f64,
) -> LimitAssignment {
    let index = net.bus_index();
    let mut gen_state = sol.gen_state.clone();
    let mut hvdc_state = sol.hvdc_state.clone();
    let mut changed = false;
    for (g, gen) in net.generators.iter().enumerate() {
        let bus = index[&gen.bus];
        if !gen.in_service || gen.fictitious || net.buses[bus].kind == BusKind::Slack {
            continue;
        }
        if let Some(next) = rule(
            gen_state[g],
            sol.gen_q[g],
            sol.v_mag[bus],
            gen.v_set,
            gen.q_min,
            gen.q_max,
            tol,
            allow_switchback,
        ) {
            gen_state[g] = next;
            changed = true;
        }
    }
    for (l, link) in net.hvdc_links.iter().enumerate() {
        let HvdcControl::PV {
            v_set_from,
            v_set_to,
            q_min_from,
            q_max_from,
            q_min_to,
            q_max_to,
        } = link.control
        else {
            continue;
        };
        let ends = [
            (link.from_bus, v_set_from, q_min_from, q_max_from),
            (link.to_bus, v_set_to, q_min_to, q_max_to),
        ];
        for (k, (bus, v_set, q_min, q_max)) in ends.into_iter().enumerate() {
            if let Some(next) = rule(
                hvdc_state[l][k],
                sol.hvdc_q[l][k],
                sol.v_mag[index[&bus]],
                v_set,
                q_min,
                q_max,
                tol,
                allow_switchback,
            ) {
                hvdc_state[l][k] = next;
                changed = true;
            }
        }
    }
    LimitAssignment {
        gen_state,
        hvdc_state,
        changed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::two_bus;
    use crate::network::{Branch, Bus, Generator};
    use crate::powerflow::solve;

    fn with_pv_gen(q_max: f64) -> Network {
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.buses.push(Bus::new(3, BusKind::Pv));
        net.branches.push(Branch::line(2, 3, 0.0, 0.1, 0.0));
        net.buses[1].q_load = 30.0;
        net.generators.push(Generator::new(3, 0.0, 1.0, -100.0, q_max));
        net
    }

    #[test]
    fn within_limits_is_unchanged() {
        let net = with_pv_gen(100.0);
        let sol = solve(&net, &SolverOptions::default(), None).unwrap();
        let a = check_limits_and_switch(&net, &sol, true, 1e-6);
        assert!(!a.changed);
        assert_eq!(a.gen_state, sol.gen_state);
    }

    #[test]
    fn overshoot_pins_at_q_max() {
        let net = with_pv_gen(100.0);
        let mut sol = solve(&net, &SolverOptions::default(), None).unwrap();
        let mut tight = net.clone();
        tight.generators[1].q_max = sol.gen_q[1] - 5.0;
        sol.gen_state[1] = UnitState::Regulating;
        let a = check_limits_and_switch(&tight, &sol, true, 1e-6);
        assert!(a.changed);
        assert_eq!(a.gen_state[1], UnitState::AtMax);
        assert_eq!(a.gen_state[0], UnitState::Regulating);
    }
}
