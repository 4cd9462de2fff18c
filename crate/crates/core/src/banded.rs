//! Banded matrices and an LU factorization with partial pivoting.
//!
//! Storage is row oriented: row `i` keeps the columns `i - kl ..= i + ku`.
//! The factorization widens every row by `kl` extra upper diagonals to make
//! room for the fill produced by row interchanges, the same layout trick as
//! LAPACK's `gbtrf`.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl fmt::Debug for BandMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BandMatrix")
            .field("n", &self.n)
            .field("kl", &self.kl)
            .field("ku", &self.ku)
            .finish()
    }
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        Self { n, kl, ku, data: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        m.data.fill(1.0);
        m
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self { n: d.len(), kl: 0, ku: 0, data: d.to_vec() }
    }

    /// Builds a matrix from `(row, col, value)` triplets; the bandwidth is the
    /// smallest one containing every triplet. Repeated entries are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let mut m = Self::zeros(n, kl, ku);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn lower(&self) -> usize {
        self.kl
    }

    #[inline]
    pub fn upper(&self) -> usize {
        self.ku
    }

    #[inline]
    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    /// Column range stored for row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= self.n || j >= self.n || !self.in_band(i, j) {
            0.0
        } else {
            self.data[i * self.width() + j + self.kl - i]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band ({}, {})", self.kl, self.ku);
        let w = self.width();
        self.data[i * w + j + self.kl - i] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band ({}, {})", self.kl, self.ku);
        let w = self.width();
        self.data[i * w + j + self.kl - i] = v;
    }

    /// Stored entries of row `i` as `(col, value)` pairs, zeros included.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let w = self.width();
        let base = i * w + self.kl - i;
        self.row_range(i).map(move |j| (j, self.data[base + j]))
    }

    /// `y = A x`, summing each row left to right.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let w = self.width();
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_range(i);
            let base = i * w + self.kl - i;
            let coeffs = &self.data[base + r.start..base + r.end];
            *yi = coeffs.iter().zip(&x[r]).map(|(a, b)| a * b).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// Matrix product, with the result trimmed to its true bandwidth.
    pub fn mul(&self, rhs: &BandMatrix) -> BandMatrix {
        assert_eq!(self.n, rhs.n);
        let mut out = BandMatrix::zeros(self.n, self.kl + rhs.kl, self.ku + rhs.ku);
        for i in 0..self.n {
            for (m, a) in self.row(i) {
                if a == 0.0 {
                    continue;
                }
                for (j, b) in rhs.row(m) {
                    if b != 0.0 {
                        out.add(i, j, a * b);
                    }
                }
            }
        }
        out.trimmed()
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &BandMatrix, b: f64) -> BandMatrix {
        assert_eq!(self.n, other.n);
        let mut out = BandMatrix::zeros(self.n, self.kl.max(other.kl), self.ku.max(other.ku));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out.add(i, j, a * v);
            }
            for (j, v) in other.row(i) {
                out.add(i, j, b * v);
            }
        }
        out
    }

    /// Drops outer diagonals that are identically zero.
    pub fn trimmed(&self) -> BandMatrix {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    if i > j {
                        kl = kl.max(i - j);
                    } else {
                        ku = ku.max(j - i);
                    }
                }
            }
        }
        let mut out = BandMatrix::zeros(self.n, kl, ku);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// Dense row-major copy, for small systems and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn lu(&self) -> Result<BandLu, SingularPivot> {
        BandLu::factor(self)
    }
}

/// Reported when elimination meets a (numerically) zero pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPivot {
    pub row: usize,
    pub pivot: f64,
}

/// `P A = L U` for a band matrix.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn w(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.w() + j + self.kl - i
    }

    pub fn factor(m: &BandMatrix) -> Result<Self, SingularPivot> {
        let (n, kl, ku) = (m.n, m.kl, m.ku);
        let mut lu = BandLu { n, kl, ku, a: vec![0.0; n * (2 * kl + ku + 1)], piv: vec![0; n] };
        let mut scale = 0.0f64;
        for i in 0..n {
            for (j, v) in m.row(i) {
                let k = lu.idx(i, j);
                lu.a[k] = v;
                scale = scale.max(v.abs());
            }
        }
        let tiny = scale * f64::EPSILON * 1e-2;
        let uw = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.a[lu.idx(k, k)].abs();
            for r in k + 1..=last {
                let v = lu.a[lu.idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(SingularPivot { row: k, pivot: best });
            }
            lu.piv[k] = p;
            let cmax = (k + uw).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    let (ik, ip) = (lu.idx(k, c), lu.idx(p, c));
                    lu.a.swap(ik, ip);
                }
            }
            let d = lu.a[lu.idx(k, k)];
            for r in k + 1..=last {
                let ir = lu.idx(r, k);
                let l = lu.a[ir] / d;
                lu.a[ir] = l;
                if l != 0.0 {
                    for c in k + 1..=cmax {
                        let kc = lu.idx(k, c);
                        let rc = lu.idx(r, c);
                        lu.a[rc] -= l * lu.a[kc];
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + self.kl).min(n - 1) {
                    b[r] -= self.a[self.idx(r, k)] * bk;
                }
            }
        }
        let uw = self.kl + self.ku;
        for i in (0..n).rev() {
            let mut s = b[i];
            for c in i + 1..=(i + uw).min(n - 1) {
                s -= self.a[self.idx(i, c)] * b[c];
            }
            b[i] = s / self.a[self.idx(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    fn test_matrix(n: usize) -> BandMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(3)..(i + 3).min(n) {
                let v = ((i * 7 + j * 13) % 11) as f64 - 5.0;
                t.push((i, j, v));
            }
        }
        // a zero diagonal entry forces pivoting
        t.push((0, 0, 0.0));
        BandMatrix::from_triplets(n, &t)
    }

    #[test]
    fn lu_solves_with_pivoting() {
        let n: usize = 40;
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(3)..(i + 3).min(n) {
                if i != j || i % 5 != 0 {
                    t.push((i, j, (((i * 7 + j * 13) % 11) as f64 - 5.0) + if i == j { 0.5 } else { 0.0 }));
                }
            }
        }
        let m = BandMatrix::from_triplets(n, &t);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = m.matvec(&x);
        let lu = m.lu().expect("nonsingular");
        let mut sol = b.clone();
        lu.solve_in_place(&mut sol);
        let err = sol.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err = {err}");
    }

    #[test]
    fn product_matches_dense() {
        let a = test_matrix(25);
        let b = test_matrix(25).combine(1.0, &BandMatrix::identity(25), 2.0);
        let c = a.mul(&b);
        let x: Vec<f64> = (0..25).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let lhs = c.matvec(&x);
        let rhs = dense_mul(&a.to_dense(), &dense_mul(&b.to_dense(), &x));
        for (p, q) in lhs.iter().zip(&rhs) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = BandMatrix::zeros(4, 1, 1);
        assert!(m.lu().is_err());
    }
}
