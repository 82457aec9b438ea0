use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PowerFlowSolution;
use crate::network::Network;

/// Complex power entering a branch at each terminal, MW/MVAr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

impl BranchFlow {
    pub fn p_loss(&self) -> f64 {
        self.p_from + self.p_to
    }
}

/// Terminal flows for every branch; out-of-service branches carry zero.
pub fn branch_flows(net: &Network, sol: &PowerFlowSolution) -> Vec<BranchFlow> {
    let index = net.bus_index();
    let v: Vec<Complex64> = sol
        .v_mag
        .iter()
        .zip(&sol.v_ang)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    net.branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return BranchFlow {
                    p_from: 0.0,
                    q_from: 0.0,
                    p_to: 0.0,
                    q_to: 0.0,
                };
            }
            let (vf, vt) = (v[index[&br.from_bus]], v[index[&br.to_bus]]);
            let ys = Complex64::new(br.r, br.x).inv();
            let ytt = ys + Complex64::new(0.0, br.b / 2.0);
            let tap = Complex64::from_polar(br.tap, br.shift);
            let i_from = ytt / (br.tap * br.tap) * vf - ys / tap.conj() * vt;
            let i_to = ytt * vt - ys / tap * vf;
            let sf = vf * i_from.conj() * net.mva_base;
            let st = vt * i_to.conj() * net.mva_base;
            BranchFlow {
                p_from: sf.re,
                q_from: sf.im,
                p_to: st.re,
                q_to: st.im,
            }
        })
        .collect()
}
