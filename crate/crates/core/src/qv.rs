//! Q-V curves by the fictitious-generator method.
//!
//! A study generator with unbounded Q is placed at the bus and its voltage
//! setpoint is walked down; the Q it must inject at each setpoint traces the
//! curve. The deepest negative injection is the reactive margin.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusId, BusKind, Generator, Network};
use crate::parallel::{map_ordered, ExecMode};
use crate::powerflow::{solve, PowerFlowSolution, SolverOptions, UnitState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    /// Added to the solved study-bus voltage to get the first setpoint.
    pub v_start_offset: f64,
    pub v_step: f64,
    pub v_floor: f64,
    pub refine_bisection_steps: u32,
    pub solver: SolverOptions,
    pub exec: ExecMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            v_start_offset: 0.0,
            v_step: 0.01,
            v_floor: 0.5,
            refine_bisection_steps: 8,
            solver: SolverOptions::default(),
            exec: ExecMode::default(),
        }
    }
}

impl SweepOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_step > 0.0) {
            return Err(Error::InvalidOption(format!("v_step must be positive, got {}", self.v_step)));
        }
        if !(self.v_floor > 0.0) {
            return Err(Error::InvalidOption(format!("v_floor must be positive, got {}", self.v_floor)));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QvPoint {
    pub v_set: f64,
    /// MVAr injected by the study generator; absent when the solve failed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub q_fict: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinEvent {
    /// Index into `Network::generators`.
    pub generator: usize,
    pub v_set: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvCurve {
    pub study_bus: BusId,
    /// Strictly decreasing `v_set`.
    pub points: Vec<QvPoint>,
    /// MVAr, never negative.
    pub q_margin: f64,
    pub v_nose: f64,
    pub collapse_detected: bool,
    /// Generators that newly reached q_max, highest setpoint first.
    pub rrb: Vec<PinEvent>,
    /// Generators that newly reached q_min. Not part of the basin.
    pub q_min_pins: Vec<PinEvent>,
}

impl QvCurve {
    pub fn converged_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points
            .iter()
            .filter(|p| p.converged)
            .filter_map(|p| p.q_fict.map(|q| (p.v_set, q)))
    }
}

/// Minimum of the converged points as (v_set, q_fict).
fn nose(curve: &QvCurve) -> Option<(f64, f64)> {
    curve
        .converged_points()
        .fold(None, |best: Option<(f64, f64)>, (v, q)| match best {
            Some((_, bq)) if bq <= q => best,
            _ => Some((v, q)),
        })
}

/// Recompute the margin from the points: `-min q_fict` when that minimum is
/// not positive, else zero.
pub fn q_margin_of(curve: &QvCurve) -> Result<f64> {
    let (_, q) = nose(curve).ok_or(Error::EmptyCurve)?;
    Ok(if q <= 0.0 { -q } else { 0.0 })
}

struct Sweep<'a> {
    net: Network,
    fict: usize,
    base: &'a PowerFlowSolution,
    opts: &'a SweepOptions,
    points: Vec<QvPoint>,
    rrb: Vec<PinEvent>,
    q_min_pins: Vec<PinEvent>,
}

impl Sweep<'_> {
    fn solve_at(&mut self, v: f64, warm: &PowerFlowSolution) -> Result<Option<PowerFlowSolution>> {
        self.net.generators[self.fict].v_set = v;
        let sol = solve(&self.net, &self.opts.solver, Some(warm))?;
        if !sol.converged {
            self.points.push(QvPoint {
                v_set: v,
                q_fict: None,
                converged: false,
            });
            return Ok(None);
        }
        self.points.push(QvPoint {
            v_set: v,
            q_fict: Some(sol.gen_q[self.fict]),
            converged: true,
        });
        for g in 0..self.fict {
            let was = self.base.gen_state[g];
            let log = match sol.gen_state[g] {
                UnitState::AtMax if was != UnitState::AtMax => &mut self.rrb,
                UnitState::AtMin if was != UnitState::AtMin => &mut self.q_min_pins,
                _ => continue,
            };
            if !log.iter().any(|e| e.generator == g) {
                log.push(PinEvent { generator: g, v_set: v });
            }
        }
        Ok(Some(sol))
    }
}

pub fn compute_qv_curve(
    net: &Network,
    base: &PowerFlowSolution,
    study_bus: BusId,
    opts: &SweepOptions,
) -> Result<QvCurve> {
    opts.validate()?;
    if !base.converged {
        return Err(Error::BaseNotConverged);
    }
    let idx = *net.bus_index().get(&study_bus).ok_or(Error::UnknownBus(study_bus))?;
    if net.buses[idx].kind == BusKind::Slack {
        return Err(Error::StudyBusIsSlack(study_bus));
    }
    if base.v_mag.len() != net.buses.len() || base.gen_state.len() != net.generators.len() {
        return Err(Error::WarmStartMismatch("base solution does not belong to this network".into()));
    }

    let v0 = base.v_mag[idx] + opts.v_start_offset;
    let mut study = net.clone();
    study.generators.push(Generator::fictitious(study_bus, v0));
    let mut sweep = Sweep {
        fict: net.generators.len(),
        net: study,
        base,
        opts,
        points: Vec::new(),
        rrb: Vec::new(),
        q_min_pins: Vec::new(),
    };

    let mut warm = base.clone();
    let mut failed_at = None;
    let mut last_good = None;
    for i in 0.. {
        let v = v0 - i as f64 * opts.v_step;
        if v < opts.v_floor - 1e-9 {
            break;
        }
        match sweep.solve_at(v, &warm)? {
            Some(sol) => {
                warm = sol;
                last_good = Some(v);
            }
            None => {
                failed_at = Some(v);
                break;
            }
        }
    }

    if let (Some(mut good), Some(mut bad)) = (last_good, failed_at) {
        for _ in 0..opts.refine_bisection_steps {
            let mid = 0.5 * (good + bad);
            match sweep.solve_at(mid, &warm)? {
                Some(sol) => {
                    warm = sol;
                    good = mid;
                }
                None => bad = mid,
            }
        }
    }

    let Sweep {
        mut points,
        mut rrb,
        q_min_pins,
        ..
    } = sweep;
    points.sort_by(|a, b| b.v_set.total_cmp(&a.v_set));
    rrb.sort_by(|a, b| b.v_set.total_cmp(&a.v_set));
    let mut curve = QvCurve {
        study_bus,
        points,
        q_margin: 0.0,
        v_nose: v0,
        collapse_detected: failed_at.is_some(),
        rrb,
        q_min_pins,
    };
    if let Some((v, _)) = nose(&curve) {
        curve.v_nose = v;
        curve.q_margin = q_margin_of(&curve)?;
    }
    Ok(curve)
}

/// Curves for several buses, keyed by bus id. A failing bus gets its error
/// in its own slot; the rest of the batch is unaffected.
pub fn batch_qv(
    net: &Network,
    base: &PowerFlowSolution,
    buses: &[BusId],
    opts: &SweepOptions,
) -> BTreeMap<BusId, Result<QvCurve>> {
    let curves = map_ordered(opts.exec, buses, |&b| compute_qv_curve(net, base, b, opts));
    buses.iter().copied().zip(curves).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::two_bus;

    fn curve(points: &[(f64, Option<f64>)]) -> QvCurve {
        QvCurve {
            study_bus: 2,
            points: points
                .iter()
                .map(|&(v, q)| QvPoint {
                    v_set: v,
                    q_fict: q,
                    converged: q.is_some(),
                })
                .collect(),
            q_margin: 0.0,
            v_nose: 0.0,
            collapse_detected: false,
            rrb: vec![],
            q_min_pins: vec![],
        }
    }

    #[test]
    fn margin_sign_convention() {
        let c = curve(&[(1.0, Some(0.0)), (0.9, Some(-250.0)), (0.8, Some(-100.0))]);
        assert_eq!(q_margin_of(&c).unwrap(), 250.0);
    }

    #[test]
    fn unsupportable_bus_has_zero_margin() {
        let c = curve(&[(1.0, Some(30.0)), (0.9, Some(10.0)), (0.8, None)]);
        assert_eq!(q_margin_of(&c).unwrap(), 0.0);
    }

    #[test]
    fn empty_curve_is_an_error() {
        let c = curve(&[(1.0, None)]);
        assert_eq!(q_margin_of(&c), Err(Error::EmptyCurve));
    }

    #[test]
    fn slack_study_bus_rejected() {
        let net = two_bus(0.1, 0.0, 0.0);
        let base = solve(&net, &SolverOptions::default(), None).unwrap();
        assert_eq!(
            compute_qv_curve(&net, &base, 1, &SweepOptions::default()),
            Err(Error::StudyBusIsSlack(1))
        );
    }

    #[test]
    fn unconverged_base_rejected() {
        let net = two_bus(0.1, 0.0, 0.0);
        let mut base = solve(&net, &SolverOptions::default(), None).unwrap();
        base.converged = false;
        assert_eq!(
            compute_qv_curve(&net, &base, 2, &SweepOptions::default()),
            Err(Error::BaseNotConverged)
        );
    }

    #[test]
    fn first_point_sits_on_the_operating_point() {
        let net = two_bus(0.1, 30.0, 10.0);
        let base = solve(&net, &SolverOptions::default(), None).unwrap();
        let c = compute_qv_curve(&net, &base, 2, &SweepOptions::default()).unwrap();
        assert!(c.points[0].q_fict.unwrap().abs() < 1e-6);
        assert_eq!(c.points[0].v_set, base.v_mag[1]);
    }
}
