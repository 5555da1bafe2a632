//! Small dense complex helpers sized for the 8x32 receive block.

use num_complex::Complex64;

pub type C64 = Complex64;

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    data: Vec<C64>,
    rows: usize,
    cols: usize,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { data: vec![C64::new(0.0, 0.0); rows * cols], rows, cols }
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c));
        Self { data: rows.into_iter().flatten().collect(), rows: r, cols: c }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Columns `lo..hi` as a new matrix.
    pub fn col_slice(&self, lo: usize, hi: usize) -> CMat {
        let mut out = CMat::zeros(self.rows, hi - lo);
        for r in 0..self.rows {
            for c in lo..hi {
                out.set(r, c - lo, self.get(r, c));
            }
        }
        out
    }

    /// `A v`.
    pub fn mat_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }

    /// `A conj(v)`.
    pub fn mat_vec_conj(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, x)| a * x.conj()).sum())
            .collect()
    }

    /// `A^H u` without materializing the transpose.
    pub fn herm_vec(&self, u: &[C64]) -> Vec<C64> {
        assert_eq!(u.len(), self.rows);
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (r, row) in self.data.chunks_exact(self.cols).enumerate() {
            let ur = u[r];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * ur;
            }
        }
        out
    }

    /// `A - x y^T`.
    pub fn sub_outer(&self, x: &[C64], y: &[C64]) -> CMat {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        let mut out = self.clone();
        for (r, &xr) in x.iter().enumerate() {
            for (c, &yc) in y.iter().enumerate() {
                let v = out.get(r, c) - xr * yc;
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// `sum conj(a_i) b_i`.
pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn herm_vec_matches_explicit_transpose() {
        let a = CMat::from_rows(vec![
            vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.25), C64::new(0.0, 1.0)],
            vec![C64::new(0.5, -1.0), C64::new(2.0, 0.0), C64::new(-1.0, -1.0)],
        ]);
        let u = vec![C64::new(0.3, -0.7), C64::new(-1.2, 0.4)];
        let got = a.herm_vec(&u);
        for c in 0..a.cols() {
            let want: C64 = (0..a.rows()).map(|r| a.get(r, c).conj() * u[r]).sum();
            assert!((got[c] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn sub_outer_elementwise() {
        let a = CMat::zeros(2, 2);
        let x = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let y = vec![C64::new(2.0, 0.0), C64::new(0.0, -1.0)];
        let m = a.sub_outer(&x, &y);
        assert_eq!(m.get(0, 0), C64::new(-2.0, 0.0));
        assert_eq!(m.get(1, 1), C64::new(-1.0, 0.0));
    }
}
