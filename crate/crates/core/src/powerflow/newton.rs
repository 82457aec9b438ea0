//! Polar-form Newton-Raphson on the bus power mismatch.
//!
//! Unknowns: angles of non-reference buses, magnitudes of buses without a
//! regulating unit, and the sending power of HVDC links that balance an
//! island without slack. Equations: P at every non-slack bus, Q at every
//! non-regulated bus.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::model::{Model, State};
use super::{PowerFlowSolution, SolveStatus, SolverOptions, UnitState};
use crate::error::Result;
use crate::network::Network;

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub regulated: Vec<bool>,
    pub v_target: Vec<f64>,
    ang_var: Vec<Option<usize>>,
    mag_var: Vec<Option<usize>>,
    p_var: Vec<Option<usize>>,
    p_row: Vec<Option<usize>>,
    q_row: Vec<Option<usize>>,
    dim: usize,
}

impl Layout {
    pub fn new(model: &Model, st: &State) -> Layout {
        let n = model.n();
        let mut regulated = vec![false; n];
        let mut v_target = vec![f64::NAN; n];
        regulated[model.slack] = true;
        v_target[model.slack] = model.slack_v;
        // study generators take precedence, then unit order
        for pass_fictitious in [true, false] {
            for (u, unit) in model.units.iter().enumerate() {
                if unit.on_slack || unit.fictitious != pass_fictitious {
                    continue;
                }
                if st.unit[u] == UnitState::Regulating && !regulated[unit.bus] {
                    regulated[unit.bus] = true;
                    v_target[unit.bus] = unit.v_set;
                }
            }
        }

        let mut next = 0;
        let mut alloc = |flag: bool| {
            if flag {
                next += 1;
                Some(next - 1)
            } else {
                None
            }
        };
        let ang_var: Vec<_> = (0..n).map(|i| alloc(!model.angle_ref[i])).collect();
        let mag_var: Vec<_> = (0..n).map(|i| alloc(!regulated[i])).collect();
        let p_var: Vec<_> = model.links.iter().map(|l| alloc(l.dc_ref)).collect();
        let dim = next;
        let mut row = 0;
        let mut alloc_row = |flag: bool| {
            if flag {
                row += 1;
                Some(row - 1)
            } else {
                None
            }
        };
        let p_row: Vec<_> = (0..n).map(|i| alloc_row(i != model.slack)).collect();
        let q_row: Vec<_> = (0..n).map(|i| alloc_row(!regulated[i])).collect();
        debug_assert_eq!(row, dim);
        Layout {
            regulated,
            v_target,
            ang_var,
            mag_var,
            p_var,
            p_row,
            q_row,
            dim,
        }
    }

    pub fn pack(&self, st: &State) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for i in 0..st.v.len() {
            if let Some(c) = self.ang_var[i] {
                x[c] = st.theta[i];
            }
            if let Some(c) = self.mag_var[i] {
                x[c] = st.v[i];
            }
        }
        for (l, c) in self.p_var.iter().enumerate() {
            if let Some(c) = c {
                x[*c] = st.p_link[l];
            }
        }
        x
    }

    pub fn unpack(&self, x: &[f64], st: &mut State) {
        for i in 0..st.v.len() {
            if let Some(c) = self.ang_var[i] {
                st.theta[i] = x[c];
            }
            if let Some(c) = self.mag_var[i] {
                st.v[i] = x[c];
            }
        }
        for (l, c) in self.p_var.iter().enumerate() {
            if let Some(c) = c {
                st.p_link[l] = x[*c];
            }
        }
    }

    /// Pin regulated magnitudes to their targets.
    pub fn apply_targets(&self, st: &mut State) {
        for (i, &r) in self.regulated.iter().enumerate() {
            if r {
                st.v[i] = self.v_target[i];
            }
        }
    }
}

/// Specified P and Q injection per bus at the current state, p.u.
fn specified(model: &Model, st: &State) -> (Vec<f64>, Vec<f64>) {
    let (lp, lq) = model.link_injections(st);
    let p: Vec<f64> = model.p_base.iter().zip(&lp).map(|(a, b)| a + b).collect();
    let mut q: Vec<f64> = model.q_base.iter().zip(&lq).map(|(a, b)| a + b).collect();
    for u in 0..model.units.len() {
        if let Some(fixed) = model.fixed_unit_q(st, u) {
            q[model.units[u].bus] += fixed;
        }
    }
    (p, q)
}

pub(crate) fn mismatch(model: &Model, layout: &Layout, st: &State) -> Vec<f64> {
    let s = model.bus_power(st);
    let (p_spec, q_spec) = specified(model, st);
    let mut f = vec![0.0; layout.dim];
    for i in 0..model.n() {
        if let Some(r) = layout.p_row[i] {
            f[r] = s[i].re - p_spec[i];
        }
        if let Some(r) = layout.q_row[i] {
            f[r] = s[i].im - q_spec[i];
        }
    }
    f
}

pub(crate) fn jacobian(model: &Model, layout: &Layout, st: &State) -> DMatrix<f64> {
    let n = model.n();
    let v = model.complex_voltages(st);
    let vn: Vec<Complex64> = v.iter().map(|z| z / z.norm()).collect();
    let ibus = model.ybus.mul(&v);
    let j = Complex64::new(0.0, 1.0);
    let mut jac = DMatrix::<f64>::zeros(layout.dim, layout.dim);

    for i in 0..n {
        let (pr, qr) = (layout.p_row[i], layout.q_row[i]);
        if pr.is_none() && qr.is_none() {
            continue;
        }
        let mut put = |col: Option<usize>, z: Complex64| {
            if let Some(c) = col {
                if let Some(r) = pr {
                    jac[(r, c)] += z.re;
                }
                if let Some(r) = qr {
                    jac[(r, c)] += z.im;
                }
            }
        };
        for &(k, y) in model.ybus.row(i) {
            // dS/dθ and dS/d|V| from the admittance term
            put(layout.ang_var[k], -j * v[i] * (y * v[k]).conj());
            put(layout.mag_var[k], v[i] * (y * vn[k]).conj());
        }
        put(layout.ang_var[i], j * v[i] * ibus[i].conj());
        put(layout.mag_var[i], ibus[i].conj() * vn[i]);
    }

    for (l, link) in model.links.iter().enumerate() {
        let Some(c) = layout.p_var[l] else { continue };
        if let Some(r) = layout.p_row[link.from] {
            jac[(r, c)] += 1.0;
        }
        if let Some(r) = layout.p_row[link.to] {
            jac[(r, c)] -= link.keep;
        }
        if let Some((qf, qt)) = link.q_ratio {
            if let Some(r) = layout.q_row[link.from] {
                jac[(r, c)] -= qf;
            }
            if let Some(r) = layout.q_row[link.to] {
                jac[(r, c)] -= link.keep * qt;
            }
        }
    }
    jac
}

pub(crate) struct NewtonOutcome {
    pub status: SolveStatus,
    pub iterations: usize,
    pub max_mismatch: f64,
}

pub(crate) fn run(model: &Model, layout: &Layout, st: &mut State, opts: &SolverOptions) -> NewtonOutcome {
    layout.apply_targets(st);
    let mut x = layout.pack(st);
    let mut iterations = 0;
    loop {
        let f = mismatch(model, layout, st);
        let max = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let out = |status| NewtonOutcome {
            status,
            iterations,
            max_mismatch: max,
        };
        if !max.is_finite() || max > 1e8 {
            return out(SolveStatus::Diverged);
        }
        if max <= opts.tol {
            return out(SolveStatus::Converged);
        }
        if iterations >= opts.max_iter {
            return out(SolveStatus::MaxIterations);
        }
        let jac = jacobian(model, layout, st);
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|v| -v));
        let lu = jac.lu();
        let Some(dx) = lu.solve(&rhs) else {
            return out(SolveStatus::SingularJacobian);
        };
        if dx.iter().any(|d| !d.is_finite()) {
            return out(SolveStatus::SingularJacobian);
        }
        for (xi, d) in x.iter_mut().zip(dx.iter()) {
            *xi += d;
        }
        layout.unpack(&x, st);
        iterations += 1;
        if st.v.iter().any(|&v| !(v > 0.0)) {
            return NewtonOutcome {
                status: SolveStatus::Diverged,
                iterations,
                max_mismatch: f64::INFINITY,
            };
        }
    }
}

/// Mismatch function and analytic Jacobian at a solved operating point,
/// with the unit assignment frozen. Exposed for derivative checks.
pub struct MismatchSystem {
    model: Model,
    layout: Layout,
    state: State,
}

impl MismatchSystem {
    pub fn at_solution(net: &Network, sol: &PowerFlowSolution) -> Result<Self> {
        let model = Model::build(net)?;
        let opts = SolverOptions::default();
        let mut state = model.initial_state(net, &opts, Some(sol))?;
        for (gi, u) in model.gen_unit.iter().enumerate() {
            if let Some(u) = u {
                if !state.forced[*u] && !model.units[*u].on_slack {
                    state.unit[*u] = sol.gen_state[gi];
                }
            }
        }
        let layout = Layout::new(&model, &state);
        Ok(MismatchSystem {
            model,
            layout,
            state,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// Current unknown vector.
    pub fn x(&self) -> Vec<f64> {
        self.layout.pack(&self.state)
    }

    pub fn mismatch(&self, x: &[f64]) -> Vec<f64> {
        let mut st = self.state.clone();
        self.layout.unpack(x, &mut st);
        mismatch(&self.model, &self.layout, &st)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut st = self.state.clone();
        self.layout.unpack(x, &mut st);
        jacobian(&self.model, &self.layout, &st)
    }
}
