//! AC power flow with reactive-limit enforcement and VSC-HVDC boundary
//! conditions.

mod flows;
mod hvdc;
mod limits;
pub(crate) mod model;
mod newton;
mod ybus;

use serde::{Deserialize, Serialize};

pub use flows::{branch_flows, BranchFlow};
pub use hvdc::{embed_hvdc, ConverterEnd, HvdcEmbedding, Injection};
pub use limits::{check_limits_and_switch, LimitAssignment};
pub use newton::MismatchSystem;
pub use ybus::{build_ybus, YbusMatrix};

use crate::error::{Error, Result};
use crate::network::{BusId, Network};
use model::{Model, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_switch_rounds: usize,
    pub flat_start: bool,
    pub allow_switchback: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 30,
            max_switch_rounds: 10,
            flat_start: true,
            allow_switchback: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidOption(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidOption("max_iter must be at least 1".into()));
        }
        if self.max_switch_rounds < 1 {
            return Err(Error::InvalidOption("max_switch_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    SingularJacobian,
    Diverged,
    SwitchRoundLimit,
}

/// Reactive control state of a generator or P-V converter end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitState {
    Regulating,
    AtMax,
    AtMin,
    /// Q held at a fixed value (P-PF converter ends, units sharing a bus
    /// with a study generator at the same setpoint).
    Fixed,
    Offline,
}

impl UnitState {
    pub fn is_pinned(self) -> bool {
        matches!(self, UnitState::AtMax | UnitState::AtMin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkEnd {
    From,
    To,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitRef {
    /// Index into `Network::generators`.
    Generator(usize),
    /// Index into `Network::hvdc_links`.
    Converter { link: usize, end: LinkEnd },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub round: usize,
    pub unit: UnitRef,
    pub bus: BusId,
    pub from: UnitState,
    pub to: UnitState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub converged: bool,
    pub status: SolveStatus,
    /// Per bus, in `Network::buses` order.
    pub v_mag: Vec<f64>,
    /// Radians.
    pub v_ang: Vec<f64>,
    /// MW per generator (slack takes the balance).
    pub gen_p: Vec<f64>,
    /// MVAr per generator.
    pub gen_q: Vec<f64>,
    pub gen_state: Vec<UnitState>,
    /// MW injected at the (from, to) converter of each link.
    pub hvdc_p: Vec<[f64; 2]>,
    /// MVAr injected at the (from, to) converter of each link.
    pub hvdc_q: Vec<[f64; 2]>,
    pub hvdc_state: Vec<[UnitState; 2]>,
    /// Newton iterations summed over switch rounds.
    pub iterations: usize,
    pub switch_rounds: usize,
    pub max_mismatch: f64,
    pub switch_log: Vec<SwitchEvent>,
}

impl PowerFlowSolution {
    /// Generators pinned at a reactive limit.
    pub fn gen_at_limit(&self) -> Vec<usize> {
        (0..self.gen_state.len())
            .filter(|&g| self.gen_state[g].is_pinned())
            .collect()
    }

    /// P-V converter ends pinned at a reactive limit.
    pub fn hvdc_at_limit(&self) -> Vec<(usize, LinkEnd)> {
        let mut out = Vec::new();
        for (l, s) in self.hvdc_state.iter().enumerate() {
            for (k, end) in [LinkEnd::From, LinkEnd::To].into_iter().enumerate() {
                if s[k].is_pinned() {
                    out.push((l, end));
                }
            }
        }
        out
    }

    pub fn to_native_string(&self) -> String {
        toml::to_string(self).expect("solutions always serialize")
    }
}

/// Solve the power flow. Non-convergence is reported through
/// `converged`/`status`; `Err` is reserved for invalid inputs.
pub fn solve(
    net: &Network,
    opts: &SolverOptions,
    warm: Option<&PowerFlowSolution>,
) -> Result<PowerFlowSolution> {
    opts.validate()?;
    net.ensure_valid()?;
    let model = Model::build(net)?;
    let mut st = model.initial_state(net, opts, warm)?;
    let mut released = vec![false; model.units.len()];
    let mut log = Vec::new();
    let mut iterations = 0;
    let mut rounds = 0;

    let (status, max_mismatch) = loop {
        let layout = newton::Layout::new(&model, &st);
        let out = newton::run(&model, &layout, &mut st, opts);
        iterations += out.iterations;
        if out.status != SolveStatus::Converged {
            break (out.status, out.max_mismatch);
        }
        let changes = limits::proposed_switches(&model, &st, opts, &released);
        if changes.is_empty() {
            break (SolveStatus::Converged, out.max_mismatch);
        }
        if rounds >= opts.max_switch_rounds {
            break (SolveStatus::SwitchRoundLimit, out.max_mismatch);
        }
        rounds += 1;
        for (u, to) in changes {
            let from = st.unit[u];
            if to == UnitState::Regulating {
                released[u] = true;
            }
            st.unit[u] = to;
            log.push(SwitchEvent {
                round: rounds,
                unit: model.units[u].id,
                bus: model.ids[model.units[u].bus],
                from,
                to,
            });
        }
    };

    Ok(assemble(net, &model, &st, status, iterations, rounds, max_mismatch, log))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    net: &Network,
    model: &Model,
    st: &State,
    status: SolveStatus,
    iterations: usize,
    switch_rounds: usize,
    max_mismatch: f64,
    switch_log: Vec<SwitchEvent>,
) -> PowerFlowSolution {
    let base = model.mva_base;
    let (p_units, q_units) = model.unit_outputs(st);
    let ng = net.generators.len();
    let mut gen_p = vec![0.0; ng];
    let mut gen_q = vec![0.0; ng];
    let mut gen_state = vec![UnitState::Offline; ng];
    for (g, u) in model.gen_unit.iter().enumerate() {
        if let Some(u) = *u {
            gen_p[g] = p_units[u] * base;
            gen_q[g] = q_units[u] * base;
            gen_state[g] = st.unit[u];
        }
    }
    let mut hvdc_p = Vec::with_capacity(model.links.len());
    let mut hvdc_q = Vec::with_capacity(model.links.len());
    let mut hvdc_state = Vec::with_capacity(model.links.len());
    for (l, link) in model.links.iter().enumerate() {
        let p = st.p_link[l];
        hvdc_p.push([-p * base, p * link.keep * base]);
        match (link.q_ratio, model.link_units[l]) {
            (Some((qf, qt)), _) => {
                hvdc_q.push([p * qf * base, p * link.keep * qt * base]);
                hvdc_state.push([UnitState::Fixed; 2]);
            }
            (None, Some([a, b])) => {
                hvdc_q.push([q_units[a] * base, q_units[b] * base]);
                hvdc_state.push([st.unit[a], st.unit[b]]);
            }
            (None, None) => unreachable!("every link is either fixed-pf or voltage-controlled"),
        }
    }
    PowerFlowSolution {
        converged: status == SolveStatus::Converged,
        status,
        v_mag: st.v.clone(),
        v_ang: st.theta.clone(),
        gen_p,
        gen_q,
        gen_state,
        hvdc_p,
        hvdc_q,
        hvdc_state,
        iterations,
        switch_rounds,
        max_mismatch,
        switch_log,
    }
}
