//! Solver-side view of a network: bus indexing, reactive units, HVDC
//! boundary conditions and angle references for AC islands.

use num_complex::Complex64;

use super::hvdc::{embed_hvdc, HvdcEmbedding};
use super::ybus::{build_ybus, YbusMatrix};
use super::{LinkEnd, PowerFlowSolution, SolverOptions, UnitRef, UnitState};
use crate::error::{Error, Result};
use crate::network::{BusId, BusKind, Network, Violation};

#[derive(Debug, Clone)]
pub(crate) struct Unit {
    pub id: UnitRef,
    pub bus: usize,
    pub v_set: f64,
    /// Per-unit limits.
    pub q_min: f64,
    pub q_max: f64,
    pub fictitious: bool,
    pub on_slack: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct LinkModel {
    pub from: usize,
    pub to: usize,
    /// Sending-end power, per-unit.
    pub p_set: f64,
    /// `1 - loss_factor`.
    pub keep: f64,
    /// Q/P ratios of fixed-PF ends, already signed as injections.
    pub q_ratio: Option<(f64, f64)>,
    /// Sending power is a free variable balancing an island without slack.
    pub dc_ref: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub ids: Vec<BusId>,
    pub mva_base: f64,
    pub ybus: YbusMatrix,
    pub slack: usize,
    pub slack_v: f64,
    pub angle_ref: Vec<bool>,
    /// Fixed P injection per bus (p.u.): non-slack generation minus load.
    pub p_base: Vec<f64>,
    /// Fixed Q injection per bus (p.u.): minus load.
    pub q_base: Vec<f64>,
    pub units: Vec<Unit>,
    /// Unit index per in-service generator (None when out of service).
    pub gen_unit: Vec<Option<usize>>,
    /// Unit indices of P-V converter ends.
    pub link_units: Vec<Option<[usize; 2]>>,
    pub links: Vec<LinkModel>,
    pub gen_p_set: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct State {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Sending-end power per link, p.u.
    pub p_link: Vec<f64>,
    pub unit: Vec<UnitState>,
    /// Q of units in `Fixed` state, p.u.
    pub held_q: Vec<f64>,
    /// Units whose state is imposed by a co-located study generator.
    pub forced: Vec<bool>,
}

impl Model {
    pub fn build(net: &Network) -> Result<Model> {
        let index = net.bus_index();
        let base = net.mva_base;
        let slack = net
            .buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .ok_or(Error::NoSlack)?;

        let mut p_base: Vec<f64> = net.buses.iter().map(|b| -b.p_load / base).collect();
        let q_base: Vec<f64> = net.buses.iter().map(|b| -b.q_load / base).collect();

        let mut units = Vec::new();
        let mut gen_unit = vec![None; net.generators.len()];
        for (gi, g) in net.generators.iter().enumerate() {
            if !g.in_service {
                continue;
            }
            let bus = index[&g.bus];
            if bus != slack {
                p_base[bus] += g.p_set / base;
            }
            gen_unit[gi] = Some(units.len());
            units.push(Unit {
                id: UnitRef::Generator(gi),
                bus,
                v_set: g.v_set,
                q_min: g.q_min / base,
                q_max: g.q_max / base,
                fictitious: g.fictitious,
                on_slack: bus == slack,
            });
        }
        let slack_v = units
            .iter()
            .find(|u| u.on_slack)
            .map_or(net.buses[slack].v_mag, |u| u.v_set);

        let mut links = Vec::with_capacity(net.hvdc_links.len());
        let mut link_units = vec![None; net.hvdc_links.len()];
        for (li, link) in net.hvdc_links.iter().enumerate() {
            let from = index[&link.from_bus];
            let to = index[&link.to_bus];
            let q_ratio = match embed_hvdc(net, link).map_err(|e| match e {
                Error::PvEndOnSlack { bus, .. } => Error::PvEndOnSlack { link: li + 1, bus },
                e => e,
            })? {
                HvdcEmbedding::FixedInjection { .. } => match link.control {
                    crate::network::HvdcControl::PPf { pf_from, pf_to } => {
                        Some((-pf_from.q_per_p(), pf_to.q_per_p()))
                    }
                    _ => unreachable!(),
                },
                HvdcEmbedding::VoltageControl { from: f, to: t } => {
                    let mut pair = [0usize; 2];
                    for (k, (end, bus, conv)) in [
                        (LinkEnd::From, from, f),
                        (LinkEnd::To, to, t),
                    ]
                    .into_iter()
                    .enumerate()
                    {
                        pair[k] = units.len();
                        units.push(Unit {
                            id: UnitRef::Converter { link: li, end },
                            bus,
                            v_set: conv.v_set,
                            q_min: conv.q_min / base,
                            q_max: conv.q_max / base,
                            fictitious: false,
                            on_slack: false,
                        });
                    }
                    link_units[li] = Some(pair);
                    None
                }
            };
            links.push(LinkModel {
                from,
                to,
                p_set: link.p_set / base,
                keep: 1.0 - link.loss_factor,
                q_ratio,
                dc_ref: false,
            });
        }

        let angle_ref = assign_references(net, &index, slack, &mut links)?;

        Ok(Model {
            ids: net.buses.iter().map(|b| b.id).collect(),
            mva_base: base,
            ybus: build_ybus(net),
            slack,
            slack_v,
            angle_ref,
            p_base,
            q_base,
            units,
            gen_unit,
            link_units,
            links,
            gen_p_set: net.generators.iter().map(|g| g.p_set).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn initial_state(
        &self,
        net: &Network,
        opts: &SolverOptions,
        warm: Option<&PowerFlowSolution>,
    ) -> Result<State> {
        let n = self.n();
        let nu = self.units.len();
        let mut st = State {
            v: vec![1.0; n],
            theta: vec![0.0; n],
            p_link: self.links.iter().map(|l| l.p_set).collect(),
            unit: vec![UnitState::Regulating; nu],
            held_q: vec![0.0; nu],
            forced: vec![false; nu],
        };
        let mut warm_q = vec![None; nu];
        if let Some(w) = warm {
            if w.v_mag.len() != n || w.v_ang.len() != n {
                return Err(Error::WarmStartMismatch(format!(
                    "{} buses in warm start, {} in network",
                    w.v_mag.len(),
                    n
                )));
            }
            if w.gen_q.len() > net.generators.len() || w.hvdc_q.len() > net.hvdc_links.len() {
                return Err(Error::WarmStartMismatch(
                    "warm start has more units than the network".into(),
                ));
            }
            if w.v_mag.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::WarmStartMismatch("non-physical voltages".into()));
            }
            st.v.copy_from_slice(&w.v_mag);
            st.theta.copy_from_slice(&w.v_ang);
            for (gi, u) in self.gen_unit.iter().enumerate() {
                if let (Some(u), Some(s)) = (u, w.gen_state.get(gi)) {
                    if matches!(s, UnitState::AtMax | UnitState::AtMin) && !self.units[*u].on_slack {
                        st.unit[*u] = *s;
                    }
                    warm_q[*u] = w.gen_q.get(gi).map(|q| q / self.mva_base);
                }
            }
            for (li, pair) in self.link_units.iter().enumerate() {
                if let (Some(pair), Some(states)) = (pair, w.hvdc_state.get(li)) {
                    for k in 0..2 {
                        if matches!(states[k], UnitState::AtMax | UnitState::AtMin) {
                            st.unit[pair[k]] = states[k];
                        }
                        warm_q[pair[k]] = Some(w.hvdc_q[li][k] / self.mva_base);
                    }
                }
                if let Some(p) = w.hvdc_p.get(li) {
                    if self.links[li].dc_ref {
                        st.p_link[li] = -p[0] / self.mva_base;
                    }
                }
            }
        } else if !opts.flat_start {
            for (i, b) in net.buses.iter().enumerate() {
                st.v[i] = b.v_mag;
                st.theta[i] = b.v_ang;
            }
        }

        // units sharing a bus with a study generator follow its setpoint
        for f in self.units.iter().filter(|u| u.fictitious) {
            for (ui, u) in self.units.iter().enumerate() {
                if u.fictitious || u.bus != f.bus {
                    continue;
                }
                st.forced[ui] = true;
                st.unit[ui] = if u.v_set > f.v_set + 1e-9 {
                    UnitState::AtMax
                } else if u.v_set < f.v_set - 1e-9 {
                    UnitState::AtMin
                } else {
                    st.held_q[ui] = warm_q[ui].unwrap_or(0.0).clamp(u.q_min, u.q_max);
                    UnitState::Fixed
                };
            }
        }
        Ok(st)
    }

    /// Q of a unit that is not regulating, p.u.
    pub fn fixed_unit_q(&self, st: &State, u: usize) -> Option<f64> {
        match st.unit[u] {
            UnitState::AtMax => Some(self.units[u].q_max),
            UnitState::AtMin => Some(self.units[u].q_min),
            UnitState::Fixed => Some(st.held_q[u]),
            UnitState::Regulating | UnitState::Offline => None,
        }
    }

    /// P and Q injected by HVDC converters at each bus (p.u.), excluding
    /// the reactive output of P-V converter ends.
    pub fn link_injections(&self, st: &State) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for (l, pl) in self.links.iter().zip(&st.p_link) {
            p[l.from] -= pl;
            p[l.to] += pl * l.keep;
            if let Some((qf, qt)) = l.q_ratio {
                q[l.from] += pl * qf;
                q[l.to] += pl * l.keep * qt;
            }
        }
        (p, q)
    }

    pub fn complex_voltages(&self, st: &State) -> Vec<Complex64> {
        st.v.iter()
            .zip(&st.theta)
            .map(|(&v, &a)| Complex64::from_polar(v, a))
            .collect()
    }

    /// Complex power leaving each bus into the network, p.u.
    pub fn bus_power(&self, st: &State) -> Vec<Complex64> {
        let v = self.complex_voltages(st);
        let i = self.ybus.mul(&v);
        v.iter().zip(&i).map(|(v, i)| v * i.conj()).collect()
    }

    /// Reactive output of every unit and real output of the slack units at
    /// the current state (p.u.).
    pub fn unit_outputs(&self, st: &State) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let s = self.bus_power(st);
        let (lp, lq) = self.link_injections(st);
        let nu = self.units.len();
        let mut q = vec![0.0; nu];
        let mut p = vec![0.0; nu];

        // Q still needed from regulating units at each bus
        let mut need: Vec<f64> = (0..n).map(|i| s[i].im - self.q_base[i] - lq[i]).collect();
        for u in 0..nu {
            if let Some(fixed) = self.fixed_unit_q(st, u) {
                q[u] = fixed;
                need[self.units[u].bus] -= fixed;
            }
        }
        let mut at_bus: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, unit) in self.units.iter().enumerate() {
            if st.unit[u] == UnitState::Regulating {
                at_bus[unit.bus].push(u);
            }
        }
        for (bus, regs) in at_bus.iter().enumerate() {
            if regs.is_empty() {
                continue;
            }
            let total = need[bus];
            if let Some(&f) = regs.iter().find(|&&u| self.units[u].fictitious) {
                q[f] = total;
                continue;
            }
            let finite = regs
                .iter()
                .all(|&u| self.units[u].q_min.is_finite() && self.units[u].q_max.is_finite());
            let range: f64 = regs
                .iter()
                .map(|&u| self.units[u].q_max - self.units[u].q_min)
                .sum();
            if regs.len() > 1 && finite && range > 0.0 {
                let qmin_sum: f64 = regs.iter().map(|&u| self.units[u].q_min).sum();
                for &u in regs {
                    let share = (self.units[u].q_max - self.units[u].q_min) / range;
                    q[u] = self.units[u].q_min + (total - qmin_sum) * share;
                }
            } else {
                for &u in regs {
                    q[u] = total / regs.len() as f64;
                }
            }
        }

        for (u, unit) in self.units.iter().enumerate() {
            match unit.id {
                UnitRef::Generator(g) => p[u] = self.gen_p_set[g] / self.mva_base,
                UnitRef::Converter { .. } => {}
            }
        }
        let slack_units: Vec<usize> = (0..nu).filter(|&u| self.units[u].on_slack).collect();
        if let Some((&first, rest)) = slack_units.split_first() {
            let others: f64 = rest.iter().map(|&u| p[u]).sum();
            p[first] = s[self.slack].re - self.p_base[self.slack] - lp[self.slack] - others;
        }
        (p, q)
    }
}

/// Give every AC island an angle reference: the slack bus for its own island,
/// and for islands reached only through HVDC the converter end inside the
/// island, whose link power then becomes free.
fn assign_references(
    net: &Network,
    index: &std::collections::HashMap<BusId, usize>,
    slack: usize,
    links: &mut [LinkModel],
) -> Result<Vec<bool>> {
    let n = net.buses.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for br in net.branches.iter().filter(|b| b.in_service) {
        let a = find(&mut parent, index[&br.from_bus]);
        let b = find(&mut parent, index[&br.to_bus]);
        if a != b {
            parent[a] = b;
        }
    }
    let comp: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut referenced = vec![false; n];
    let mut angle_ref = vec![false; n];
    referenced[comp[slack]] = true;
    angle_ref[slack] = true;
    loop {
        let mut changed = false;
        for l in links.iter_mut() {
            let (rf, rt) = (referenced[comp[l.from]], referenced[comp[l.to]]);
            if rf != rt {
                let end = if rf { l.to } else { l.from };
                referenced[comp[end]] = true;
                angle_ref[end] = true;
                l.dc_ref = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let orphans: Vec<BusId> = (0..n)
        .filter(|&i| !referenced[comp[i]])
        .map(|i| net.buses[i].id)
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Invalid(vec![Violation::Islanded(orphans)]));
    }
    Ok(angle_ref)
}
