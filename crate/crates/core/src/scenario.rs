//! Per-branch VSC-HVDC upgrade scenarios and their zone-level Q-margin
//! impact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::FeatureMatrix;
use crate::error::{Error, Result};
use crate::network::{BusId, BusKind, HvdcControl, HvdcLink, HvdcScheme, Network, PowerFactor, ZoneId};
use crate::parallel::map_ordered;
use crate::powerflow::{branch_flows, solve, PowerFlowSolution};
use crate::qv::{batch_qv, QvCurve, SweepOptions};

/// Below this the base-case real flow counts as zero (MW).
const ZERO_FLOW_MW: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchRef {
    /// 1-based position in `Network::branches`.
    Id(usize),
    /// First in-service branch joining the two buses, either orientation.
    Endpoints(BusId, BusId),
}

impl BranchRef {
    /// 1-based branch id.
    pub fn resolve(&self, net: &Network) -> Result<usize> {
        match *self {
            BranchRef::Id(id) if id >= 1 && id <= net.branches.len() => Ok(id),
            BranchRef::Id(id) => Err(Error::UnknownBranch(format!("id {id}"))),
            BranchRef::Endpoints(a, b) => {
                let joins = |br: &crate::network::Branch| {
                    (br.from_bus == a && br.to_bus == b) || (br.from_bus == b && br.to_bus == a)
                };
                net.branches
                    .iter()
                    .position(|br| br.in_service && joins(br))
                    .or_else(|| net.branches.iter().position(joins))
                    .map(|i| i + 1)
                    .ok_or_else(|| Error::UnknownBranch(format!("{a}-{b}")))
            }
        }
    }
}

/// User-chosen converter setpoints. Direction follows the branch's
/// from/to orientation; a negative `p_set` reverses it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplicitSetpoints {
    pub p_set: f64,
    #[serde(default)]
    pub loss_factor: f64,
    #[serde(default)]
    pub pf_from: Option<PowerFactor>,
    #[serde(default)]
    pub pf_to: Option<PowerFactor>,
    #[serde(default)]
    pub v_set_from: Option<f64>,
    #[serde(default)]
    pub v_set_to: Option<f64>,
    /// Converter Q limits per end, MVAr; unset limits default to
    /// `±pv_q_limit_scale · |p_set|`.
    #[serde(default)]
    pub q_min_from: Option<f64>,
    #[serde(default)]
    pub q_max_from: Option<f64>,
    #[serde(default)]
    pub q_min_to: Option<f64>,
    #[serde(default)]
    pub q_max_to: Option<f64>,
}

impl ExplicitSetpoints {
    pub fn transfer(p_set: f64) -> Self {
        ExplicitSetpoints {
            p_set,
            loss_factor: 0.0,
            pf_from: None,
            pf_to: None,
            v_set_from: None,
            v_set_to: None,
            q_min_from: None,
            q_max_from: None,
            q_min_to: None,
            q_max_to: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetpointPolicy {
    #[default]
    FromBaseFlow,
    Explicit(ExplicitSetpoints),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub branch: BranchRef,
    pub scheme: HvdcScheme,
    pub policy: SetpointPolicy,
    /// Empty means "derive from the branch and scheme".
    #[serde(default)]
    pub label: String,
}

impl ScenarioSpec {
    pub fn new(branch: BranchRef, scheme: HvdcScheme) -> Self {
        ScenarioSpec {
            branch,
            scheme,
            policy: SetpointPolicy::FromBaseFlow,
            label: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioOptions {
    /// P-V converter Q limits are `±scale · p_set` MVAr.
    pub pv_q_limit_scale: f64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions { pv_q_limit_scale: 1.0 }
    }
}

/// Which buses enter the zone averages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ZonePolicy {
    /// Minimum base kV; 0 includes every bus.
    pub kv_floor: f64,
}

impl ZonePolicy {
    /// Load buses (no slack, no in-service real generator) at or above the
    /// kV floor, ascending by id.
    pub fn study_buses(&self, net: &Network) -> Vec<BusId> {
        let mut ids: Vec<BusId> = net
            .load_buses()
            .into_iter()
            .filter(|id| net.bus(*id).is_some_and(|b| b.base_kv >= self.kv_floor))
            .collect();
        ids.sort_unstable();
        ids
    }
}

/// Q-margins of the study buses and their zone means, for either the base
/// case or a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSet {
    /// MVAr per bus whose curve could be computed.
    pub per_bus: BTreeMap<BusId, f64>,
    /// Arithmetic mean of `per_bus` over each zone's buses.
    pub zone_margin: BTreeMap<ZoneId, f64>,
    /// Buses whose curve failed, with the reason.
    pub failed: BTreeMap<BusId, String>,
}

pub fn margins(
    net: &Network,
    sol: &PowerFlowSolution,
    buses: &[BusId],
    opts: &SweepOptions,
) -> (MarginSet, BTreeMap<BusId, QvCurve>) {
    let mut per_bus = BTreeMap::new();
    let mut failed = BTreeMap::new();
    let mut curves = BTreeMap::new();
    for (bus, curve) in batch_qv(net, sol, buses, opts) {
        match curve {
            Ok(c) => {
                per_bus.insert(bus, c.q_margin);
                curves.insert(bus, c);
            }
            Err(e) => {
                log::warn!("bus {bus}: {e}");
                failed.insert(bus, e.to_string());
            }
        }
    }
    let zone_margin = zone_means(net, &per_bus);
    (
        MarginSet {
            per_bus,
            zone_margin,
            failed,
        },
        curves,
    )
}

pub fn zone_means(net: &Network, per_bus: &BTreeMap<BusId, f64>) -> BTreeMap<ZoneId, f64> {
    let mut acc: BTreeMap<ZoneId, (f64, usize)> = BTreeMap::new();
    for (&bus, &m) in per_bus {
        if let Some(b) = net.bus(bus) {
            let e = acc.entry(b.zone).or_default();
            e.0 += m;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(z, (s, n))| (z, s / n as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneDelta {
    Pct(f64),
    /// Base zone margin is zero, so no percentage exists.
    Undefined,
}

impl ZoneDelta {
    pub fn between(base: f64, scenario: f64) -> Self {
        if base > 0.0 {
            ZoneDelta::Pct(100.0 * (scenario - base) / base)
        } else {
            ZoneDelta::Undefined
        }
    }

    pub fn pct(&self) -> Option<f64> {
        match self {
            ZoneDelta::Pct(v) => Some(*v),
            ZoneDelta::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub spec: ScenarioSpec,
    /// 1-based id of the replaced branch.
    pub branch_id: usize,
    pub label: String,
    /// The scenario's base point converged.
    pub feasible: bool,
    pub zone_margin: BTreeMap<ZoneId, f64>,
    pub zone_delta_pct: BTreeMap<ZoneId, ZoneDelta>,
    pub per_bus_margins: BTreeMap<BusId, f64>,
    pub link: Option<LinkSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub p_set: f64,
    pub loss_factor: f64,
}

fn default_label(net: &Network, branch_id: usize, scheme: HvdcScheme) -> String {
    let br = &net.branches[branch_id - 1];
    format!("{branch_id}:{}-{}:{}", br.from_bus, br.to_bus, scheme)
}

/// The base network with the branch taken out of service and an HVDC link
/// added between its endpoints.
pub fn make_hvdc_scenario(
    base_net: &Network,
    base_sol: &PowerFlowSolution,
    spec: &ScenarioSpec,
    opts: &ScenarioOptions,
) -> Result<Network> {
    if !base_sol.converged {
        return Err(Error::BaseNotConverged);
    }
    let id = spec.branch.resolve(base_net)?;
    let br = &base_net.branches[id - 1];
    if !br.in_service {
        return Err(Error::BranchOutOfService(id));
    }
    let idx = base_net.bus_index();
    let v_of = |bus: BusId| base_sol.v_mag[idx[&bus]];

    let link = match spec.policy {
        SetpointPolicy::FromBaseFlow => {
            let flow = branch_flows(base_net, base_sol)[id - 1];
            // sending end is wherever the real power enters the branch
            let (from_bus, to_bus, ps, qs, pr, qr) = if flow.p_from >= 0.0 {
                (br.from_bus, br.to_bus, flow.p_from, flow.q_from, flow.p_to, flow.q_to)
            } else {
                (br.to_bus, br.from_bus, flow.p_to, flow.q_to, flow.p_from, flow.q_from)
            };
            if ps.abs() < ZERO_FLOW_MW {
                return Err(Error::ZeroBaseFlow { branch: id });
            }
            let loss_factor = ((ps + pr) / ps).clamp(0.0, 1.0 - 1e-12);
            let control = match spec.scheme {
                HvdcScheme::PPf => HvdcControl::PPf {
                    pf_from: PowerFactor::from_pq(ps, qs).ok_or(Error::ZeroBaseFlow { branch: id })?,
                    pf_to: PowerFactor::from_pq(-pr, -qr).ok_or(Error::ZeroBaseFlow { branch: id })?,
                },
                HvdcScheme::PV => {
                    let q = opts.pv_q_limit_scale * ps;
                    HvdcControl::PV {
                        v_set_from: v_of(from_bus),
                        v_set_to: v_of(to_bus),
                        q_min_from: -q,
                        q_max_from: q,
                        q_min_to: -q,
                        q_max_to: q,
                    }
                }
            };
            HvdcLink {
                from_bus,
                to_bus,
                p_set: ps,
                loss_factor,
                control,
            }
        }
        SetpointPolicy::Explicit(e) => {
            // fields are given in branch orientation; swap when reversed
            let fwd = e.p_set >= 0.0;
            fn pick<T>(fwd: bool, a: T, b: T) -> (T, T) {
                if fwd { (a, b) } else { (b, a) }
            }
            let (from_bus, to_bus) = pick(fwd, br.from_bus, br.to_bus);
            let p = e.p_set.abs();
            let q = opts.pv_q_limit_scale * p;
            let control = match spec.scheme {
                HvdcScheme::PPf => {
                    let (a, b) = pick(fwd, e.pf_from, e.pf_to);
                    HvdcControl::PPf {
                        pf_from: a.unwrap_or(PowerFactor::UNITY),
                        pf_to: b.unwrap_or(PowerFactor::UNITY),
                    }
                }
                HvdcScheme::PV => {
                    let (va, vb) = pick(fwd, e.v_set_from, e.v_set_to);
                    let (lo_a, lo_b) = pick(fwd, e.q_min_from, e.q_min_to);
                    let (hi_a, hi_b) = pick(fwd, e.q_max_from, e.q_max_to);
                    HvdcControl::PV {
                        v_set_from: va.unwrap_or_else(|| v_of(from_bus)),
                        v_set_to: vb.unwrap_or_else(|| v_of(to_bus)),
                        q_min_from: lo_a.unwrap_or(-q),
                        q_max_from: hi_a.unwrap_or(q),
                        q_min_to: lo_b.unwrap_or(-q),
                        q_max_to: hi_b.unwrap_or(q),
                    }
                }
            };
            HvdcLink {
                from_bus,
                to_bus,
                p_set: p,
                loss_factor: e.loss_factor,
                control,
            }
        }
    };

    if spec.scheme == HvdcScheme::PV {
        for bus in [link.from_bus, link.to_bus] {
            if base_net.buses[idx[&bus]].kind == BusKind::Slack {
                return Err(Error::PvEndOnSlack {
                    link: base_net.hvdc_links.len() + 1,
                    bus,
                });
            }
        }
    }

    let mut net = base_net.clone();
    net.branches[id - 1].in_service = false;
    net.hvdc_links.push(link);
    net.ensure_valid()?;
    Ok(net)
}

/// Everything a scenario needs from the base case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseCase {
    pub solution: PowerFlowSolution,
    pub buses: Vec<BusId>,
    pub margins: MarginSet,
}

impl BaseCase {
    pub fn compute(net: &Network, policy: &ZonePolicy, opts: &SweepOptions) -> Result<(BaseCase, BTreeMap<BusId, QvCurve>)> {
        let solution = solve(net, &opts.solver, None)?;
        if !solution.converged {
            return Err(Error::BaseNotConverged);
        }
        let buses = policy.study_buses(net);
        let (margins, curves) = margins(net, &solution, &buses, opts);
        Ok((
            BaseCase {
                solution,
                buses,
                margins,
            },
            curves,
        ))
    }
}

pub fn run_scenario(
    base_net: &Network,
    base: &BaseCase,
    spec: &ScenarioSpec,
    sweep: &SweepOptions,
    opts: &ScenarioOptions,
) -> Result<ScenarioResult> {
    let net = make_hvdc_scenario(base_net, &base.solution, spec, opts)?;
    let branch_id = spec.branch.resolve(base_net)?;
    let label = if spec.label.is_empty() {
        default_label(base_net, branch_id, spec.scheme)
    } else {
        spec.label.clone()
    };
    let link = net.hvdc_links.last().map(|l| LinkSummary {
        from_bus: l.from_bus,
        to_bus: l.to_bus,
        p_set: l.p_set,
        loss_factor: l.loss_factor,
    });
    let mut result = ScenarioResult {
        spec: spec.clone(),
        branch_id,
        label,
        feasible: false,
        zone_margin: BTreeMap::new(),
        zone_delta_pct: BTreeMap::new(),
        per_bus_margins: BTreeMap::new(),
        link,
    };
    let sol = solve(&net, &sweep.solver, Some(&base.solution))?;
    if !sol.converged {
        log::info!("{}: scenario base point did not converge ({:?})", result.label, sol.status);
        return Ok(result);
    }
    let (m, _) = margins(&net, &sol, &base.buses, sweep);
    result.feasible = true;
    for (&zone, &base_margin) in &base.margins.zone_margin {
        let delta = match m.zone_margin.get(&zone) {
            Some(&z) => ZoneDelta::between(base_margin, z),
            None => ZoneDelta::Undefined,
        };
        result.zone_delta_pct.insert(zone, delta);
    }
    result.zone_margin = m.zone_margin;
    result.per_bus_margins = m.per_bus;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCase {
    pub branch_id: usize,
    pub scheme: HvdcScheme,
    pub label: String,
    pub outcome: std::result::Result<ScenarioResult, String>,
}

impl ScanCase {
    pub fn feasible(&self) -> Option<&ScenarioResult> {
        self.outcome.as_ref().ok().filter(|r| r.feasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub base: BaseCase,
    /// Ordered by branch id, then scheme (p_pf before p_v).
    pub cases: Vec<ScanCase>,
    /// Rows: feasible cases in `cases` order. Columns: zones with a defined
    /// delta, ascending by id.
    pub features: FeatureMatrix,
    /// Index into `cases` for each feature row.
    pub feature_rows: Vec<usize>,
    pub feature_zones: Vec<ZoneId>,
    pub notes: Vec<String>,
}

/// Run both schemes (or the given subset) on every listed branch.
pub fn run_scan(
    base_net: &Network,
    branches: &[BranchRef],
    schemes: &[HvdcScheme],
    policy: &ZonePolicy,
    sweep: &SweepOptions,
    opts: &ScenarioOptions,
) -> Result<Scan> {
    let (base, _) = BaseCase::compute(base_net, policy, sweep)?;
    run_scan_from(base_net, base, branches, schemes, sweep, opts)
}

pub fn run_scan_from(
    base_net: &Network,
    base: BaseCase,
    branches: &[BranchRef],
    schemes: &[HvdcScheme],
    sweep: &SweepOptions,
    opts: &ScenarioOptions,
) -> Result<Scan> {
    let mut ids = branches
        .iter()
        .map(|b| b.resolve(base_net))
        .collect::<Result<Vec<_>>>()?;
    ids.sort_unstable();
    ids.dedup();
    let mut schemes = schemes.to_vec();
    schemes.sort();
    schemes.dedup();

    let specs: Vec<(usize, ScenarioSpec)> = ids
        .iter()
        .flat_map(|&id| schemes.iter().map(move |&s| (id, ScenarioSpec::new(BranchRef::Id(id), s))))
        .collect();
    let outcomes = map_ordered(sweep.exec, &specs, |(_, spec)| run_scenario(base_net, &base, spec, sweep, opts));
    let cases: Vec<ScanCase> = specs
        .into_iter()
        .zip(outcomes)
        .map(|((id, spec), outcome)| {
            let label = default_label(base_net, id, spec.scheme);
            match &outcome {
                Ok(r) if r.feasible => log::info!("case {label}: done"),
                Ok(_) => log::info!("case {label}: infeasible"),
                Err(e) => log::warn!("case {label}: {e}"),
            }
            ScanCase {
                branch_id: id,
                scheme: spec.scheme,
                label,
                outcome: outcome.map_err(|e| e.to_string()),
            }
        })
        .collect();

    let mut notes = Vec::new();
    let feature_rows: Vec<usize> = (0..cases.len()).filter(|&i| cases[i].feasible().is_some()).collect();
    let mut feature_zones = Vec::new();
    for &zone in base.margins.zone_margin.keys() {
        let defined = feature_rows.iter().all(|&i| {
            cases[i].feasible().unwrap().zone_delta_pct.get(&zone).and_then(ZoneDelta::pct).is_some()
        });
        if defined {
            feature_zones.push(zone);
        } else {
            notes.push(format!(
                "zone {zone} dropped from features: base margin is zero or a scenario has no margins there"
            ));
        }
    }
    let values = feature_rows
        .iter()
        .map(|&i| {
            let r = cases[i].feasible().unwrap();
            feature_zones
                .iter()
                .map(|z| r.zone_delta_pct[z].pct().unwrap())
                .collect()
        })
        .collect();
    let features = FeatureMatrix::new(
        feature_rows.iter().map(|&i| cases[i].label.clone()).collect(),
        feature_zones
            .iter()
            .map(|&z| base_net.zone_label(z).map_or_else(|| format!("zone {z}"), str::to_string))
            .collect(),
        values,
    )?;
    Ok(Scan {
        base,
        cases,
        features,
        feature_rows,
        feature_zones,
        notes,
    })
}
