//! Small dense numerical kernels shared by the solvers.

use alloc::vec;
use alloc::vec::Vec;

/// Square band matrix with `lower` sub-diagonals and `upper` super-diagonals,
/// stored row by row (`lower + upper + 1` slots per row).
#[derive(Clone, Debug)]
pub(crate) struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self { n, lower, upper, data: vec![0.0; n * (lower + upper + 1)] }
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.lower >= row && col <= row + self.upper);
        row * (self.lower + self.upper + 1) + (col + self.lower - row)
    }

    pub(crate) fn add(&mut self, row: usize, col: usize, value: f64) {
        let s = self.slot(row, col);
        self.data[s] += value;
    }

    #[cfg(test)]
    pub(crate) fn get(&self, row: usize, col: usize) -> f64 {
        if col + self.lower < row || col > row + self.upper {
            0.0
        } else {
            self.data[self.slot(row, col)]
        }
    }

    /// In-place LU factorisation without pivoting. Only valid for matrices
    /// whose leading minors are nonsingular; the chain systems are strictly
    /// diagonally dominant, which suffices.
    pub(crate) fn factor(mut self) -> Option<BandLu> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.data[self.slot(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            let row_end = (k + self.lower + 1).min(n);
            let col_end = (k + self.upper + 1).min(n);
            for i in (k + 1)..row_end {
                let s = self.slot(i, k);
                let factor = self.data[s] / pivot;
                self.data[s] = factor;
                if factor == 0.0 {
                    continue;
                }
                for j in (k + 1)..col_end {
                    let src = self.data[self.slot(k, j)];
                    let dst = self.slot(i, j);
                    self.data[dst] -= factor * src;
                }
            }
        }
        Some(BandLu { m: self })
    }
}

/// Factored band matrix; solves any number of right-hand sides.
#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub(crate) fn solve_in_place(&self, rhs: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        assert_eq!(rhs.len(), n);
        for i in 0..n {
            let start = i.saturating_sub(m.lower);
            let mut acc = rhs[i];
            for (j, r) in rhs.iter().enumerate().take(i).skip(start) {
                acc -= m.data[m.slot(i, j)] * r;
            }
            rhs[i] = acc;
        }
        for i in (0..n).rev() {
            let end = (i + m.upper + 1).min(n);
            let mut acc = rhs[i];
            for (j, r) in rhs.iter().enumerate().take(end).skip(i + 1) {
                acc -= m.data[m.slot(i, j)] * r;
            }
            rhs[i] = acc / m.data[m.slot(i, i)];
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximiser of a unimodal function on
/// `[lo, hi]`. `better(a, b)` must return true when the objective at `a` is
/// strictly larger than at `b`.
pub(crate) fn golden_section_max<F>(mut lo: f64, mut hi: f64, width: f64, better: F) -> f64
where
    F: Fn(f64, f64) -> bool,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    for _ in 0..400 {
        if hi - lo <= width {
            break;
        }
        if better(x1, x2) {
            hi = x2;
            x2 = x1;
            x1 = hi - INV_PHI * (hi - lo);
        } else {
            lo = x1;
            x1 = x2;
            x2 = lo + INV_PHI * (hi - lo);
        }
        if !(x1 < x2) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `ln(sum(exp(v)))` without overflow.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

/// Relative difference scaled by the larger magnitude (with a floor of 1e-300).
pub(crate) fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-300);
    (a - b).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_lu_solves_tridiagonal_system() {
        // [4 1 0; 1 4 1; 0 1 4] x = [1 2 3]
        let mut m = BandMatrix::zeros(3, 1, 1);
        for i in 0..3 {
            m.add(i, i, 4.0);
        }
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 2, 1.0);
        m.add(2, 1, 1.0);
        let lu = m.factor().unwrap();
        let mut x = [1.0, 2.0, 3.0];
        lu.solve_in_place(&mut x);
        let expected = [5.0 / 28.0, 2.0 / 7.0, 19.0 / 28.0];
        for (a, b) in x.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn band_lu_wider_band_matches_dense_reconstruction() {
        let n = 7;
        let mut m = BandMatrix::zeros(n, 2, 3);
        for i in 0..n {
            for j in i.saturating_sub(2)..(i + 4).min(n) {
                let v = if i == j { 10.0 } else { ((i * 3 + j) % 5) as f64 * 0.3 - 0.6 };
                m.add(i, j, v);
            }
        }
        let dense: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect();
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let mut x = b.clone();
        m.factor().unwrap().solve_in_place(&mut x);
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let f = |x: f64| -(x - 1.234).powi(2);
        let x = golden_section_max(0.0, 5.0, 1e-10, |a, b| f(a) > f(b));
        assert!((x - 1.234).abs() < 1e-8);
    }

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
    }
}
