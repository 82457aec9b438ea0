//! Native case format: a TOML document with `system`, `zones`, `buses`,
//! `generators`, `branches` and `hvdc_links` sections. Field names match the
//! in-memory types; see `docs/native-format.md` for the schema.

use serde::{Deserialize, Serialize};

use super::{Branch, Bus, Generator, HvdcControl, HvdcLink, HvdcScheme, Network, PowerFactor, Zone};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    system: System,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    zones: Vec<Zone>,
    #[serde(default)]
    buses: Vec<Bus>,
    #[serde(default)]
    generators: Vec<Generator>,
    #[serde(default)]
    branches: Vec<Branch>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    hvdc_links: Vec<RawLink>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct System {
    #[serde(default)]
    name: String,
    mva_base: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    from_bus: u32,
    to_bus: u32,
    p_set: f64,
    #[serde(default)]
    loss_factor: f64,
    scheme: HvdcScheme,
    #[serde(skip_serializing_if = "Option::is_none")]
    pf_from: Option<PowerFactor>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pf_to: Option<PowerFactor>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_set_from: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_set_to: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_min_from: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_max_from: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_min_to: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_max_to: Option<f64>,
}

impl RawLink {
    fn into_link(self, index: usize) -> Result<HvdcLink> {
        let path = |field: &str| format!("hvdc_links[{index}].{field}");
        fn need<T>(v: Option<T>, path: String) -> Result<T> {
            v.ok_or_else(|| Error::Schema {
                path,
                message: "required by the selected scheme".into(),
            })
        }
        let forbid = |present: bool, field: &str, scheme: HvdcScheme| -> Result<()> {
            if present {
                Err(Error::Schema {
                    path: path(field),
                    message: format!("not allowed for scheme {scheme}"),
                })
            } else {
                Ok(())
            }
        };
        let control = match self.scheme {
            HvdcScheme::PPf => {
                for (present, f) in [
                    (self.v_set_from.is_some(), "v_set_from"),
                    (self.v_set_to.is_some(), "v_set_to"),
                    (self.q_min_from.is_some(), "q_min_from"),
                    (self.q_max_from.is_some(), "q_max_from"),
                    (self.q_min_to.is_some(), "q_min_to"),
                    (self.q_max_to.is_some(), "q_max_to"),
                ] {
                    forbid(present, f, self.scheme)?;
                }
                HvdcControl::PPf {
                    pf_from: need(self.pf_from, path("pf_from"))?,
                    pf_to: need(self.pf_to, path("pf_to"))?,
                }
            }
            HvdcScheme::PV => {
                forbid(self.pf_from.is_some(), "pf_from", self.scheme)?;
                forbid(self.pf_to.is_some(), "pf_to", self.scheme)?;
                HvdcControl::PV {
                    v_set_from: need(self.v_set_from, path("v_set_from"))?,
                    v_set_to: need(self.v_set_to, path("v_set_to"))?,
                    q_min_from: need(self.q_min_from, path("q_min_from"))?,
                    q_max_from: need(self.q_max_from, path("q_max_from"))?,
                    q_min_to: need(self.q_min_to, path("q_min_to"))?,
                    q_max_to: need(self.q_max_to, path("q_max_to"))?,
                }
            }
        };
        Ok(HvdcLink {
            from_bus: self.from_bus,
            to_bus: self.to_bus,
            p_set: self.p_set,
            loss_factor: self.loss_factor,
            control,
        })
    }

    fn from_link(link: &HvdcLink) -> Self {
        let mut raw = RawLink {
            from_bus: link.from_bus,
            to_bus: link.to_bus,
            p_set: link.p_set,
            loss_factor: link.loss_factor,
            scheme: link.scheme(),
            ..Default::default()
        };
        match link.control {
            HvdcControl::PPf { pf_from, pf_to } => {
                raw.pf_from = Some(pf_from);
                raw.pf_to = Some(pf_to);
            }
            HvdcControl::PV {
                v_set_from,
                v_set_to,
                q_min_from,
                q_max_from,
                q_min_to,
                q_max_to,
            } => {
                raw.v_set_from = Some(v_set_from);
                raw.v_set_to = Some(v_set_to);
                raw.q_min_from = Some(q_min_from);
                raw.q_max_from = Some(q_max_from);
                raw.q_min_to = Some(q_min_to);
                raw.q_max_to = Some(q_max_to);
            }
        }
        raw
    }
}

pub fn parse_native_case(text: &str) -> Result<Network> {
    let doc: Document = toml::from_str(text).map_err(|e| {
        let path = match e.span() {
            Some(span) => format!("line {}", text[..span.start].matches('\n').count() + 1),
            None => "document".to_string(),
        };
        Error::Schema {
            path,
            message: e.message().to_string(),
        }
    })?;
    let hvdc_links = doc
        .hvdc_links
        .into_iter()
        .enumerate()
        .map(|(i, raw)| raw.into_link(i))
        .collect::<Result<Vec<_>>>()?;
    let net = Network {
        name: doc.system.name,
        mva_base: doc.system.mva_base,
        buses: doc.buses,
        generators: doc.generators,
        branches: doc.branches,
        hvdc_links,
        zones: doc.zones,
    };
    net.ensure_valid()?;
    Ok(net)
}

pub fn to_native_string(net: &Network) -> String {
    let doc = Document {
        system: System {
            name: net.name.clone(),
            mva_base: net.mva_base,
        },
        zones: net.zones.clone(),
        buses: net.buses.clone(),
        generators: net.generators.clone(),
        branches: net.branches.clone(),
        hvdc_links: net.hvdc_links.iter().map(RawLink::from_link).collect(),
    };
    toml::to_string(&doc).expect("network documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::two_bus;
    use crate::network::BusKind;

    fn with_pv_link() -> Network {
        let mut net = two_bus(0.1, 20.0, 5.0);
        net.buses.push(Bus::new(3, BusKind::Pq));
        net.branches.push(Branch::line(2, 3, 0.01, 0.05, 0.02));
        net.hvdc_links.push(HvdcLink {
            from_bus: 2,
            to_bus: 3,
            p_set: 40.0,
            loss_factor: 0.01,
            control: HvdcControl::PV {
                v_set_from: 1.0,
                v_set_to: 0.98,
                q_min_from: -40.0,
                q_max_from: 40.0,
                q_min_to: -40.0,
                q_max_to: 40.0,
            },
        });
        net
    }

    #[test]
    fn pv_link_round_trips() {
        let net = with_pv_link();
        let text = to_native_string(&net);
        let back = parse_native_case(&text).unwrap();
        assert_eq!(back.hvdc_links.len(), 1);
        assert!(matches!(
            back.hvdc_links[0].control,
            HvdcControl::PV { v_set_from, v_set_to, .. } if v_set_from == 1.0 && v_set_to == 0.98
        ));
        assert_eq!(back, net);
    }

    #[test]
    fn missing_pf_to_is_a_schema_violation() {
        let text = r#"
[system]
mva_base = 100.0

[[zones]]
id = 1
label = "a"

[[buses]]
id = 1
kind = "slack"
base_kv = 230.0

[[buses]]
id = 2
kind = "pq"
base_kv = 230.0

[[generators]]
bus = 1
q_min = -100.0
q_max = 100.0

[[branches]]
from_bus = 1
to_bus = 2
x = 0.1

[[hvdc_links]]
from_bus = 1
to_bus = 2
p_set = 10.0
scheme = "p_pf"
pf_from = { value = 1.0, lagging = true }
"#;
        match parse_native_case(text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "hvdc_links[0].pf_to"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn toml_errors_carry_a_line() {
        let err = parse_native_case("[system]\nmva_base = \"x\"\n").unwrap_err();
        match err {
            Error::Schema { path, .. } => assert_eq!(path, "line 2"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unbounded_limits_survive() {
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.generators.push(Generator::fictitious(2, 0.97));
        let back = parse_native_case(&to_native_string(&net)).unwrap();
        assert_eq!(back, net);
    }
}
