//! Electrical network data model.
//!
//! Quantities follow the usual load-flow conventions: loads and generator
//! outputs in MW/MVAr, impedances and shunt admittances in per-unit on the
//! network MVA base, angles in radians.

mod matpower;
mod native;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

pub use matpower::{parse_standard_case, parse_standard_case_with_warnings};
pub use native::{parse_native_case, to_native_string};

pub type BusId = u32;
pub type ZoneId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    #[serde(default = "one")]
    pub v_mag: f64,
    #[serde(default)]
    pub v_ang: f64,
    pub base_kv: f64,
    #[serde(default = "one_u32")]
    pub zone: ZoneId,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    #[serde(default)]
    pub g_shunt: f64,
    #[serde(default)]
    pub b_shunt: f64,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

impl Bus {
    pub fn new(id: BusId, kind: BusKind) -> Self {
        Bus {
            id,
            kind,
            v_mag: 1.0,
            v_ang: 0.0,
            base_kv: 1.0,
            zone: 1,
            p_load: 0.0,
            q_load: 0.0,
            g_shunt: 0.0,
            b_shunt: 0.0,
            v_min: default_v_min(),
            v_max: default_v_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    #[serde(default)]
    pub p_set: f64,
    #[serde(default = "one")]
    pub v_set: f64,
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
    /// Study generator placed by the Q-V sweep; carries unbounded limits.
    #[serde(default)]
    pub fictitious: bool,
}

impl Generator {
    pub fn new(bus: BusId, p_set: f64, v_set: f64, q_min: f64, q_max: f64) -> Self {
        Generator {
            bus,
            p_set,
            v_set,
            q_min,
            q_max,
            in_service: true,
            fictitious: false,
        }
    }

    /// Unbounded, zero-MW regulating source used for Q-V studies.
    pub fn fictitious(bus: BusId, v_set: f64) -> Self {
        Generator {
            bus,
            p_set: 0.0,
            v_set,
            q_min: f64::NEG_INFINITY,
            q_max: f64::INFINITY,
            in_service: true,
            fictitious: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    #[serde(default)]
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "one")]
    pub tap: f64,
    #[serde(default)]
    pub shift: f64,
    #[serde(default)]
    pub rating: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

impl Branch {
    pub fn line(from_bus: BusId, to_bus: BusId, r: f64, x: f64, b: f64) -> Self {
        Branch {
            from_bus,
            to_bus,
            r,
            x,
            b,
            tap: 1.0,
            shift: 0.0,
            rating: 0.0,
            in_service: true,
        }
    }
}

/// Power factor magnitude with a lead/lag flag.
///
/// Lagging at the receiving (inverter) end means the converter delivers
/// positive Q to its bus; lagging at the sending (rectifier) end means the
/// converter draws Q from its bus, like a lagging load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFactor {
    pub value: f64,
    pub lagging: bool,
}

impl PowerFactor {
    pub const UNITY: PowerFactor = PowerFactor {
        value: 1.0,
        lagging: true,
    };

    pub fn lagging(value: f64) -> Self {
        PowerFactor {
            value,
            lagging: true,
        }
    }

    pub fn leading(value: f64) -> Self {
        PowerFactor {
            value,
            lagging: false,
        }
    }

    /// Signed Q/P ratio: `tan(acos(pf))`, positive when lagging.
    pub fn q_per_p(&self) -> f64 {
        let t = (1.0 - self.value * self.value).max(0.0).sqrt() / self.value;
        if self.lagging {
            t
        } else {
            -t
        }
    }

    /// Power factor reproducing the given P/Q pair at an injection with
    /// `q_per_p` sign semantics. Undefined when `p == 0`.
    pub fn from_pq(p: f64, q: f64) -> Option<Self> {
        let s = p.hypot(q);
        if p == 0.0 || !s.is_finite() {
            return None;
        }
        Some(PowerFactor {
            value: p.abs() / s,
            lagging: q / p >= 0.0,
        })
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum HvdcScheme {
    #[default]
    PPf,
    PV,
}

impl HvdcScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            HvdcScheme::PPf => "p_pf",
            HvdcScheme::PV => "p_v",
        }
    }
}

impl std::fmt::Display for HvdcScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HvdcControl {
    /// Fixed P and power factor at both ends.
    PPf {
        pf_from: PowerFactor,
        pf_to: PowerFactor,
    },
    /// Fixed P; each converter regulates its AC bus within Q limits (MVAr).
    PV {
        v_set_from: f64,
        v_set_to: f64,
        q_min_from: f64,
        q_max_from: f64,
        q_min_to: f64,
        q_max_to: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HvdcLink {
    /// Sending (rectifier) end.
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// MW leaving `from_bus`.
    pub p_set: f64,
    /// Fraction of `p_set` lost in the DC link.
    pub loss_factor: f64,
    pub control: HvdcControl,
}

impl HvdcLink {
    pub fn scheme(&self) -> HvdcScheme {
        match self.control {
            HvdcControl::PPf { .. } => HvdcScheme::PPf,
            HvdcControl::PV { .. } => HvdcScheme::PV,
        }
    }

    /// MW delivered at `to_bus`.
    pub fn p_delivered(&self) -> f64 {
        self.p_set * (1.0 - self.loss_factor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub mva_base: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    pub hvdc_links: Vec<HvdcLink>,
    pub zones: Vec<Zone>,
}

impl Network {
    /// Bus id → position in `buses`.
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn slack_bus(&self) -> Option<&Bus> {
        self.buses.iter().find(|b| b.kind == BusKind::Slack)
    }

    pub fn zone_label(&self, id: ZoneId) -> Option<&str> {
        self.zones
            .iter()
            .find(|z| z.id == id)
            .map(|z| z.label.as_str())
    }

    /// Buses that no in-service real generator regulates (and not the slack).
    pub fn load_buses(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .filter(|b| b.kind != BusKind::Slack)
            .filter(|b| {
                !self
                    .generators
                    .iter()
                    .any(|g| g.in_service && !g.fictitious && g.bus == b.id)
            })
            .map(|b| b.id)
            .collect()
    }

    pub fn p_load_pu(&self, bus: &Bus) -> f64 {
        bus.p_load / self.mva_base
    }

    pub fn q_load_pu(&self, bus: &Bus) -> f64 {
        bus.q_load / self.mva_base
    }

    /// Check every structural invariant; an empty list means the network is
    /// solvable as far as its data goes.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    /// Map the first reference-type violation to its dedicated error, or
    /// wrap the whole list.
    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            return Ok(());
        }
        for v in &violations {
            match v {
                Violation::UndeclaredBus { bus, context } => {
                    return Err(Error::UndeclaredBus {
                        bus: *bus,
                        context: context.clone(),
                    })
                }
                Violation::ZeroImpedance {
                    branch,
                    from_bus,
                    to_bus,
                } => {
                    return Err(Error::ZeroImpedance {
                        branch: *branch,
                        from_bus: *from_bus,
                        to_bus: *to_bus,
                    })
                }
                Violation::SlackCount { slack_buses } if slack_buses.is_empty() => {
                    return Err(Error::NoSlack)
                }
                _ => {}
            }
        }
        Err(Error::Invalid(violations))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("MVA base must be positive")]
    NonPositiveBase,
    #[error("expected exactly one slack bus, found {slack_buses:?}")]
    SlackCount { slack_buses: Vec<BusId> },
    #[error("bus id {0} declared more than once")]
    DuplicateBus(BusId),
    #[error("bus {0} has non-positive voltage magnitude")]
    NonPositiveVoltage(BusId),
    #[error("bus {0} has non-positive base kV")]
    NonPositiveBaseKv(BusId),
    #[error("bus {bus} references undeclared zone {zone}")]
    UndeclaredZone { bus: BusId, zone: ZoneId },
    #[error("{context} references undeclared bus {bus}")]
    UndeclaredBus { bus: BusId, context: String },
    #[error("branch {branch} ({from_bus}-{to_bus}) has zero impedance")]
    ZeroImpedance {
        branch: usize,
        from_bus: BusId,
        to_bus: BusId,
    },
    #[error("branch {0} connects a bus to itself")]
    BranchSelfLoop(usize),
    #[error("branch {0} has a non-positive tap ratio")]
    BadTap(usize),
    #[error("generator {0} has q_min > q_max")]
    GeneratorLimits(usize),
    #[error("fictitious generator {0} must have unbounded Q limits")]
    FictitiousLimits(usize),
    #[error("generator {generator} regulates bus {bus}, which is typed pq")]
    GeneratorOnPqBus { generator: usize, bus: BusId },
    #[error("no in-service generator")]
    NoInServiceGenerator,
    #[error("HVDC link {0} connects a bus to itself")]
    HvdcSelfLoop(usize),
    #[error("HVDC link {0} has negative p_set")]
    HvdcNegativePower(usize),
    #[error("HVDC link {0} loss factor outside [0, 1)")]
    HvdcLossFactor(usize),
    #[error("HVDC link {0} power factor outside (0, 1]")]
    HvdcPowerFactor(usize),
    #[error("HVDC link {0} has q_min > q_max at a converter end")]
    HvdcLimits(usize),
    #[error("buses {0:?} are not connected to the slack bus")]
    Islanded(Vec<BusId>),
}

fn validate(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(net.mva_base > 0.0) {
        out.push(Violation::NonPositiveBase);
    }

    let mut index: HashMap<BusId, usize> = HashMap::new();
    for (i, b) in net.buses.iter().enumerate() {
        if index.insert(b.id, i).is_some() {
            out.push(Violation::DuplicateBus(b.id));
        }
    }
    let slack: Vec<BusId> = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id)
        .collect();
    if slack.len() != 1 {
        out.push(Violation::SlackCount {
            slack_buses: slack.clone(),
        });
    }
    for b in &net.buses {
        if !(b.v_mag > 0.0) {
            out.push(Violation::NonPositiveVoltage(b.id));
        }
        if !(b.base_kv > 0.0) {
            out.push(Violation::NonPositiveBaseKv(b.id));
        }
        if !net.zones.iter().any(|z| z.id == b.zone) {
            out.push(Violation::UndeclaredZone {
                bus: b.id,
                zone: b.zone,
            });
        }
    }

    let known = |bus: BusId, context: String, out: &mut Vec<Violation>| -> bool {
        if index.contains_key(&bus) {
            true
        } else {
            out.push(Violation::UndeclaredBus { bus, context });
            false
        }
    };

    for (i, br) in net.branches.iter().enumerate() {
        let id = i + 1;
        let a = known(br.from_bus, format!("branch {id}"), &mut out);
        let b = known(br.to_bus, format!("branch {id}"), &mut out);
        if a && b && br.from_bus == br.to_bus {
            out.push(Violation::BranchSelfLoop(id));
        }
        if br.r == 0.0 && br.x == 0.0 {
            out.push(Violation::ZeroImpedance {
                branch: id,
                from_bus: br.from_bus,
                to_bus: br.to_bus,
            });
        }
        if !(br.tap > 0.0) {
            out.push(Violation::BadTap(id));
        }
    }

    let mut any_gen = false;
    for (i, g) in net.generators.iter().enumerate() {
        let id = i + 1;
        if !known(g.bus, format!("generator {id}"), &mut out) {
            continue;
        }
        if g.q_min > g.q_max {
            out.push(Violation::GeneratorLimits(id));
        }
        if g.fictitious && (g.q_min != f64::NEG_INFINITY || g.q_max != f64::INFINITY) {
            out.push(Violation::FictitiousLimits(id));
        }
        if g.in_service {
            any_gen = true;
            if !g.fictitious && net.buses[index[&g.bus]].kind == BusKind::Pq {
                out.push(Violation::GeneratorOnPqBus {
                    generator: id,
                    bus: g.bus,
                });
            }
        }
    }
    if !any_gen {
        out.push(Violation::NoInServiceGenerator);
    }

    for (i, link) in net.hvdc_links.iter().enumerate() {
        let id = i + 1;
        let a = known(link.from_bus, format!("HVDC link {id}"), &mut out);
        let b = known(link.to_bus, format!("HVDC link {id}"), &mut out);
        if a && b && link.from_bus == link.to_bus {
            out.push(Violation::HvdcSelfLoop(id));
        }
        if !(link.p_set >= 0.0) {
            out.push(Violation::HvdcNegativePower(id));
        }
        if !(0.0..1.0).contains(&link.loss_factor) {
            out.push(Violation::HvdcLossFactor(id));
        }
        match link.control {
            HvdcControl::PPf { pf_from, pf_to } => {
                if [pf_from, pf_to]
                    .iter()
                    .any(|pf| !(pf.value > 0.0 && pf.value <= 1.0))
                {
                    out.push(Violation::HvdcPowerFactor(id));
                }
            }
            HvdcControl::PV {
                q_min_from,
                q_max_from,
                q_min_to,
                q_max_to,
                ..
            } => {
                if q_min_from > q_max_from || q_min_to > q_max_to {
                    out.push(Violation::HvdcLimits(id));
                }
            }
        }
    }

    if slack.len() == 1 && out.iter().all(|v| !matches!(v, Violation::UndeclaredBus { .. })) {
        let islanded = unreachable_from(net, &index, slack[0]);
        if !islanded.is_empty() {
            out.push(Violation::Islanded(islanded));
        }
    }
    out
}

/// Buses not reachable from `root` through in-service branches or HVDC links.
fn unreachable_from(net: &Network, index: &HashMap<BusId, usize>, root: BusId) -> Vec<BusId> {
    let n = net.buses.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let edges = net
        .branches
        .iter()
        .filter(|b| b.in_service)
        .map(|b| (b.from_bus, b.to_bus))
        .chain(net.hvdc_links.iter().map(|l| (l.from_bus, l.to_bus)));
    for (f, t) in edges {
        let (f, t) = (index[&f], index[&t]);
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![index[&root]];
    seen[index[&root]] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    let mut ids: Vec<BusId> = (0..n)
        .filter(|&i| !seen[i])
        .map(|i| net.buses[i].id)
        .collect();
    ids.sort_unstable();
    ids
}

/// Zone id → buses, ascending.
pub fn buses_by_zone(net: &Network) -> BTreeMap<ZoneId, Vec<BusId>> {
    let mut map: BTreeMap<ZoneId, Vec<BusId>> = BTreeMap::new();
    for b in &net.buses {
        map.entry(b.zone).or_default().push(b.id);
    }
    for v in map.values_mut() {
        v.sort_unstable();
    }
    map
}

fn one() -> f64 {
    1.0
}
fn one_u32() -> u32 {
    1
}
fn yes() -> bool {
    true
}
fn default_v_min() -> f64 {
    0.9
}
fn default_v_max() -> f64 {
    1.1
}
