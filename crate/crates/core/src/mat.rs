//! Dense column-major matrices.
//!
//! Only the handful of operations the detectors need is provided. Storage is
//! column-major because every hot loop walks whole channel columns.

use num_complex::Complex64;

/// Dense real matrix, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from an element function, filled column by column.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                m.data[c * rows + r] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[c * self.rows + r] = v;
    }

    pub fn col(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// A·x. Uncounted; instrumented paths run their own loops.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (c, &xc) in x.iter().enumerate() {
            for (yk, &hk) in y.iter_mut().zip(self.col(c)) {
                *yk += hk * xc;
            }
        }
        y
    }

    /// Aᵀ·x. Uncounted; instrumented paths run their own loops.
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        (0..self.cols)
            .map(|c| self.col(c).iter().zip(x).map(|(&h, &v)| h * v).sum())
            .collect()
    }
}

/// Dense complex matrix, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::ZERO; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for c in 0..cols {
            for r in 0..rows {
                m.data[c * rows + r] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[c * self.rows + r]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[c * self.rows + r] = v;
    }

    pub fn col(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// A·x. Uncounted helper for tests and oracles.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![Complex64::ZERO; self.rows];
        for (c, &xc) in x.iter().enumerate() {
            for (yk, &hk) in y.iter_mut().zip(self.col(c)) {
                *yk += hk * xc;
            }
        }
        y
    }
}

/// Real block expansion [[Re, −Im], [Im, Re]] of a complex matrix.
pub fn real_expansion(a: &CMat) -> RMat {
    let (m, n) = (a.rows(), a.cols());
    RMat::from_fn(2 * m, 2 * n, |r, c| {
        let z = a.get(r % m, c % n);
        match (r < m, c < n) {
            (true, true) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
            (false, false) => z.re,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn col_major_layout_round_trips() {
        let mut m = RMat::zeros(2, 3);
        m.set(1, 2, 5.0);
        m.set(0, 0, -1.0);
        assert_eq!(m.get(1, 2), 5.0);
        assert_eq!(m.get(0, 0), -1.0);
        assert_eq!(m.col(2), &[0.0, 5.0]);
    }

    #[test]
    fn matvec_matches_hand_computation() {
        // [[1, 2], [3, 4]] · [5, 6] = [17, 39]
        let m = RMat::from_fn(2, 2, |r, c| (2 * r + c + 1) as f64);
        assert_eq!(m.matvec(&[5.0, 6.0]), vec![17.0, 39.0]);
        assert_eq!(m.t_matvec(&[5.0, 6.0]), vec![23.0, 34.0]);
    }

    #[test]
    fn real_expansion_of_scalar_matrix() {
        // H = [[1+2j]] expands to [[1, -2], [2, 1]].
        let h = CMat::from_fn(1, 1, |_, _| Complex64::new(1.0, 2.0));
        let hr = real_expansion(&h);
        assert_eq!(hr.get(0, 0), 1.0);
        assert_eq!(hr.get(0, 1), -2.0);
        assert_eq!(hr.get(1, 0), 2.0);
        assert_eq!(hr.get(1, 1), 1.0);
    }

    #[test]
    fn complex_matvec_matches_real_expansion() {
        let h = CMat::from_fn(2, 2, |r, c| Complex64::new((r + c) as f64, (r as f64) - (c as f64)));
        let x = [Complex64::new(0.5, -1.0), Complex64::new(2.0, 0.25)];
        let yc = h.matvec(&x);

        let hr = real_expansion(&h);
        let xr = [x[0].re, x[1].re, x[0].im, x[1].im];
        let yr = hr.matvec(&xr);
        for k in 0..2 {
            assert!((yc[k].re - yr[k]).abs() < 1e-15);
            assert!((yc[k].im - yr[k + 2]).abs() < 1e-15);
        }
    }
}
