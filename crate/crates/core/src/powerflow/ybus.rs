use num_complex::Complex64;

use crate::network::Network;

/// Sparse bus admittance matrix, row-compressed, columns sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct YbusMatrix {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl YbusMatrix {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(p) => self.rows[i][p].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `Y · v`
    pub fn mul(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, y)| y * v[k]).sum())
            .collect()
    }
}

/// Assemble the pi-model admittance matrix. Bus order follows
/// `network.buses`; HVDC links are injections and add nothing here.
pub fn build_ybus(net: &Network) -> YbusMatrix {
    let index = net.bus_index();
    let n = net.buses.len();
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let mut add = |i: usize, j: usize, y: Complex64| match rows[i].iter_mut().find(|e| e.0 == j) {
        Some(e) => e.1 += y,
        None => rows[i].push((j, y)),
    };

    for (i, bus) in net.buses.iter().enumerate() {
        if bus.g_shunt != 0.0 || bus.b_shunt != 0.0 {
            add(i, i, Complex64::new(bus.g_shunt, bus.b_shunt));
        }
    }
    for br in net.branches.iter().filter(|b| b.in_service) {
        let f = index[&br.from_bus];
        let t = index[&br.to_bus];
        let ys = Complex64::new(br.r, br.x).inv();
        let charging = Complex64::new(0.0, br.b / 2.0);
        let tap = Complex64::from_polar(br.tap, br.shift);
        let ytt = ys + charging;
        add(f, f, ytt / (br.tap * br.tap));
        add(t, t, ytt);
        add(f, t, -ys / tap.conj());
        add(t, f, -ys / tap);
    }
    for row in &mut rows {
        row.sort_by_key(|e| e.0);
    }
    YbusMatrix { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::two_bus;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_branch_assembly() {
        let y = build_ybus(&two_bus(0.1, 0.0, 0.0));
        assert_abs_diff_eq!(y.get(0, 1).im, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(0, 1).re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(0, 0).im, -10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(1, 1).im, -10.0, epsilon = 1e-12);
        assert_eq!(y.get(0, 1), y.get(1, 0));
    }

    #[test]
    fn out_of_service_branch_leaves_zeros() {
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.branches[0].in_service = false;
        let y = build_ybus(&net);
        assert_eq!(y.nnz(), 0);
        assert_eq!(y.get(0, 0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn off_nominal_tap() {
        // hand assembly: ys = 1/(0.02 + j0.1), b = 0.04
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.branches[0].r = 0.02;
        net.branches[0].b = 0.04;
        net.branches[0].tap = 1.05;
        let y = build_ybus(&net);
        let ys = Complex64::new(0.02, 0.1).inv();
        let half_b = Complex64::new(0.0, 0.02);
        let y11 = (ys + half_b) / (1.05 * 1.05);
        assert_abs_diff_eq!(y.get(0, 0).re, y11.re, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(0, 0).im, y11.im, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(1, 1).im, (ys + half_b).im, epsilon = 1e-12);
        assert_abs_diff_eq!(y.get(0, 1).re, (-ys / 1.05).re, epsilon = 1e-12);
        // scaling relative to the nominal-tap diagonal
        net.branches[0].tap = 1.0;
        let y0 = build_ybus(&net);
        assert_abs_diff_eq!(
            (y.get(0, 0) * 1.05 * 1.05 - y0.get(0, 0)).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rows_sum_to_zero_without_shunts() {
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.branches[0].r = 0.03;
        let y = build_ybus(&net);
        for i in 0..y.dim() {
            let s: Complex64 = y.row(i).iter().map(|e| e.1).sum();
            assert!(s.norm() < 1e-12);
        }
    }
}
