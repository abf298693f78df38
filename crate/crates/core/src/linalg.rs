//! Small dense matrices.
//!
//! Everything in this crate works with fiducial-set sized matrices (K x K with
//! K rarely above a few dozen), so the solvers here are the plain textbook
//! ones: partial-pivot elimination for inverses and cyclic Jacobi for
//! symmetric eigenproblems. Complex Hermitian eigenvalues are obtained through
//! the real embedding [[A, -B], [B, A]].

use num_complex::Complex64;

/// Dense real matrix, row major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Mat {
            rows: r,
            cols: c,
            data: rows.concat(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Max-row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    ///
    /// Returns the inverse together with an infinity-norm condition estimate
    /// `|A| * |A^-1|`, or `None` when a pivot degenerates.
    pub fn invert(&self) -> Option<(Mat, f64)> {
        assert_eq!(self.rows, self.cols, "inverse of non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Mat::identity(n);
        let scale = self.norm_inf().max(f64::MIN_POSITIVE);
        for col in 0..n {
            let mut pivot = col;
            for r in col + 1..n {
                if a[(r, col)].abs() > a[(pivot, col)].abs() {
                    pivot = r;
                }
            }
            if a[(pivot, col)].abs() <= 1e-300 * scale {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(col * n + j, pivot * n + j);
                    inv.data.swap(col * n + j, pivot * n + j);
                }
            }
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[(r, j)] -= f * a[(col, j)];
                    inv[(r, j)] -= f * inv[(col, j)];
                }
            }
        }
        let cond = self.norm_inf() * inv.norm_inf();
        Some((inv, cond))
    }

    /// Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi.
    ///
    /// Returns `(values, vectors)` with `vectors` holding eigenvectors as
    /// columns, so `A = V diag(values) V^T`. Values are ascending.
    pub fn sym_eigen(&self) -> (Vec<f64>, Mat) {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut v = Mat::identity(n);
        let off = |m: &Mat| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        s += m[(i, j)] * m[(i, j)];
                    }
                }
            }
            s.sqrt()
        };
        let scale = self.norm_inf().max(f64::MIN_POSITIVE);
        for _sweep in 0..200 {
            if off(&a) <= 1e-14 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
        let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = Mat::zeros(n, n);
        for (newcol, &oldcol) in order.iter().enumerate() {
            for r in 0..n {
                vectors[(r, newcol)] = v[(r, oldcol)];
            }
        }
        (values, vectors)
    }

    /// sigma_min / sigma_max of an arbitrary rectangular matrix, via the
    /// eigenvalues of the k x k Gram matrix (k = rows, assumed <= cols).
    pub fn singular_value_ratio(&self) -> f64 {
        let gram = self.matmul(&self.transpose());
        let (vals, _) = gram.sym_eigen();
        let lo = vals.first().copied().unwrap_or(0.0).max(0.0);
        let hi = vals.last().copied().unwrap_or(0.0).max(0.0);
        if hi == 0.0 {
            0.0
        } else {
            (lo / hi).sqrt()
        }
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense complex matrix, row major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn adjoint(&self) -> CMat {
        let mut t = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].conj();
            }
        }
        t
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> CMat {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                if (self[(i, j)] - self[(j, i)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Kronecker product with the FIRST factor varying fastest:
    /// `out[(ia + a.rows*ib, ja + a.cols*jb)] = a[ia,ja] * b[ib,jb]`.
    ///
    /// This is the composite-index convention used everywhere in the crate.
    pub fn kron_ff(&self, other: &CMat) -> CMat {
        let mut out = CMat::zeros(self.rows * other.rows, self.cols * other.cols);
        for ib in 0..other.rows {
            for jb in 0..other.cols {
                let b = other[(ib, jb)];
                if b.re == 0.0 && b.im == 0.0 {
                    continue;
                }
                for ia in 0..self.rows {
                    for ja in 0..self.cols {
                        out[(ia + self.rows * ib, ja + self.cols * jb)] = self[(ia, ja)] * b;
                    }
                }
            }
        }
        out
    }

    /// Smallest eigenvalue of a Hermitian matrix.
    ///
    /// Uses the real symmetric embedding [[A, -B], [B, A]] of H = A + iB,
    /// whose spectrum is that of H with doubled multiplicities.
    pub fn hermitian_min_eigenvalue(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut e = Mat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = self[(i, j)];
                e[(i, j)] = z.re;
                e[(i + n, j + n)] = z.re;
                e[(i, j + n)] = -z.im;
                e[(i + n, j)] = z.im;
            }
        }
        let (vals, _) = e.sym_eigen();
        vals[0]
    }

    /// Flatten a Hermitian matrix to a real coordinate vector (re and im parts
    /// of every entry). Real-linear independence of Hermitian operators is
    /// independence of these vectors.
    pub fn to_real_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.data.len());
        for z in &self.data {
            v.push(z.re);
        }
        for z in &self.data {
            v.push(z.im);
        }
        v
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Real Kronecker product with the first factor varying fastest.
pub fn kron_ff_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for vb in b {
        for va in a {
            out.push(va * vb);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invert_round_trips() {
        let m = Mat::from_rows(&[
            vec![1.0, 0.0, 0.5, 0.5],
            vec![0.0, 1.0, 0.5, 0.5],
            vec![0.5, 0.5, 1.0, 0.5],
            vec![0.5, 0.5, 0.5, 1.0],
        ]);
        let (inv, cond) = m.invert().unwrap();
        let prod = m.matmul(&inv);
        assert!(prod.max_abs_diff(&Mat::identity(4)) < 1e-12);
        assert!(cond > 1.0 && cond < 1e3);
    }

    #[test]
    fn invert_rejects_singular() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(m.invert().is_none());
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let m = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (vals, vecs) = m.sym_eigen();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // reconstruct
        let mut d = Mat::zeros(2, 2);
        d[(0, 0)] = vals[0];
        d[(1, 1)] = vals[1];
        let rec = vecs.matmul(&d).matmul(&vecs.transpose());
        assert!(rec.max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn singular_ratio_flags_dependence() {
        let dep = Mat::from_rows(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]);
        assert!(dep.singular_value_ratio() < 1e-12);
        let ind = Mat::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert!((ind.singular_value_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hermitian_min_eigenvalue_matches_hand_value() {
        // H = [[0, -i], [i, 0]] has eigenvalues -1 and 1
        let mut h = CMat::zeros(2, 2);
        h[(0, 1)] = Complex64::new(0.0, -1.0);
        h[(1, 0)] = Complex64::new(0.0, 1.0);
        assert!(h.is_hermitian(0.0));
        assert!((h.hermitian_min_eigenvalue() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn kron_ff_first_factor_fastest() {
        let mut a = CMat::zeros(2, 1);
        a[(0, 0)] = Complex64::new(1.0, 0.0);
        a[(1, 0)] = Complex64::new(2.0, 0.0);
        let mut b = CMat::zeros(2, 1);
        b[(0, 0)] = Complex64::new(10.0, 0.0);
        b[(1, 0)] = Complex64::new(20.0, 0.0);
        let k = a.kron_ff(&b);
        // flat index = ia + 2*ib
        let got: Vec<f64> = k.data.iter().map(|z| z.re).collect();
        assert_eq!(got, vec![10.0, 20.0, 20.0, 40.0]);
        assert_eq!(kron_ff_vec(&[1.0, 2.0], &[10.0, 20.0]), got);
    }
}
