//! VSC-HVDC links as power-flow boundary conditions.
//!
//! P-PF: both converters are constant P/Q injections. P-V: both converters
//! inject fixed P and regulate their AC bus voltage with Q inside limits,
//! switching to a fixed Q exactly like a generator at its limit.

use crate::error::{Error, Result};
use crate::network::{BusId, BusKind, HvdcControl, HvdcLink, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub bus: BusId,
    /// MW into the bus.
    pub p: f64,
    /// MVAr into the bus.
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterEnd {
    pub bus: BusId,
    /// MW into the bus.
    pub p: f64,
    pub v_set: f64,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HvdcEmbedding {
    FixedInjection { from: Injection, to: Injection },
    VoltageControl { from: ConverterEnd, to: ConverterEnd },
}

pub fn embed_hvdc(net: &Network, link: &HvdcLink) -> Result<HvdcEmbedding> {
    let from_bus = net.bus(link.from_bus).ok_or(Error::UnknownBus(link.from_bus))?;
    let to_bus = net.bus(link.to_bus).ok_or(Error::UnknownBus(link.to_bus))?;
    let p_from = -link.p_set;
    let p_to = link.p_delivered();
    Ok(match link.control {
        HvdcControl::PPf { pf_from, pf_to } => HvdcEmbedding::FixedInjection {
            from: Injection {
                bus: link.from_bus,
                p: p_from,
                q: -link.p_set * pf_from.q_per_p(),
            },
            to: Injection {
                bus: link.to_bus,
                p: p_to,
                q: p_to * pf_to.q_per_p(),
            },
        },
        HvdcControl::PV {
            v_set_from,
            v_set_to,
            q_min_from,
            q_max_from,
            q_min_to,
            q_max_to,
        } => {
            let position = net.hvdc_links.iter().position(|l| l == link).map_or(0, |p| p + 1);
            for bus in [from_bus, to_bus] {
                if bus.kind == BusKind::Slack {
                    return Err(Error::PvEndOnSlack {
                        link: position,
                        bus: bus.id,
                    });
                }
            }
            HvdcEmbedding::VoltageControl {
                from: ConverterEnd {
                    bus: link.from_bus,
                    p: p_from,
                    v_set: v_set_from,
                    q_min: q_min_from,
                    q_max: q_max_from,
                },
                to: ConverterEnd {
                    bus: link.to_bus,
                    p: p_to,
                    v_set: v_set_to,
                    q_min: q_min_to,
                    q_max: q_max_to,
                },
            }
        }
    })
}
