//! Sparse matrices, banded/dense LU and matrix-exponential actions.

use nalgebra::DMatrix;
use serde::Serialize;

/// Compressed sparse row matrix, square n×n, columns sorted within rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Sums duplicate entries; keeps explicit zeros out.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Csr {
        t.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            assert!(i < n && j < n, "triplet ({i},{j}) out of range for n={n}");
            if last == Some((i, j)) {
                *data.last_mut().expect("previous entry") += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        let mut m = Csr {
            n,
            indptr,
            indices,
            data,
        };
        m.prune();
        m
    }

    fn prune(&mut self) {
        let mut t = Vec::with_capacity(self.data.len());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        if t.len() == self.data.len() {
            return;
        }
        let mut indptr = vec![0; self.n + 1];
        for (i, _, _) in &t {
            indptr[i + 1] += 1;
        }
        for i in 0..self.n {
            indptr[i + 1] += indptr[i];
        }
        self.indptr = indptr;
        self.indices = t.iter().map(|e| e.1).collect();
        self.data = t.iter().map(|e| e.2).collect();
    }

    pub fn zeros(n: usize) -> Csr {
        Csr {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Csr {
        Csr::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Csr {
        Csr::from_triplets(d.len(), d.iter().enumerate().map(|(i, v)| (i, i, *v)).collect())
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// a·self + b·other
    pub fn axpby(&self, a: f64, other: &Csr, b: f64) -> Csr {
        assert_eq!(self.n, other.n);
        let mut t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (i, j, a * v)).collect();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, b * v)));
        Csr::from_triplets(self.n, t)
    }

    /// self + diag(d)
    pub fn add_diag(&self, d: &[f64]) -> Csr {
        self.axpby(1.0, &Csr::diag(d), 1.0)
    }

    /// diag(d)·self
    pub fn scale_rows(&self, d: &[f64]) -> Csr {
        let mut m = self.clone();
        for i in 0..self.n {
            for k in m.indptr[i]..m.indptr[i + 1] {
                m.data[k] *= d[i];
            }
        }
        m
    }

    pub fn transpose(&self) -> Csr {
        Csr::from_triplets(self.n, self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect())
    }

    /// Principal submatrix on the given (sorted, distinct) index set.
    pub fn principal(&self, idx: &[usize]) -> Csr {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut t = Vec::new();
        for (k, &i) in idx.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    t.push((k, pos[j], v));
                }
            }
        }
        Csr::from_triplets(idx.len(), t)
    }

    /// (lower, upper) bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular;

/// Banded LU with partial pivoting. Row i stores columns
/// [i − kl, i + ku + kl] so fill-in from row swaps fits.
#[derive(Debug, Clone)]
struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    rows: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn new(a: &Csr) -> Result<BandLu, Singular> {
        let n = a.n;
        let (kl, ku) = a.bandwidth();
        let width = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            width,
            rows: vec![0.0; n * width],
            piv: vec![0; n],
        };
        for (i, j, v) in a.triplets() {
            let k = lu.idx(i, j);
            lu.rows[k] = v;
        }
        let scale = a.max_abs();
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.rows[lu.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = lu.rows[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > scale * 1e-300) || !best.is_finite() {
                return Err(Singular);
            }
            lu.piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a1, a2) = (lu.idx(k, j), lu.idx(p, j));
                    lu.rows.swap(a1, a2);
                }
            }
            let pivot = lu.rows[lu.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = lu.idx(i, k);
                let m = lu.rows[ik] / pivot;
                if m == 0.0 {
                    continue;
                }
                lu.rows[ik] = m;
                for j in k + 1..=last_col {
                    let kj = lu.rows[lu.idx(k, j)];
                    let ij = lu.idx(i, j);
                    lu.rows[ij] -= m * kj;
                }
            }
        }
        Ok(lu)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let kl = self.kl;
        let ku_eff = self.width - 1 - kl;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            x.swap(k, p);
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] -= self.rows[self.idx(i, k)] * x[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + ku_eff).min(n - 1) {
                s -= self.rows[self.idx(k, j)] * x[j];
            }
            x[k] = s / self.rows[self.idx(k, k)];
        }
        x
    }
}

/// A factorization reusable across right-hand sides.
#[derive(Debug, Clone)]
pub enum Factor {
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Banded(BandLuHandle),
}

#[derive(Debug, Clone)]
pub struct BandLuHandle(BandLu);

impl Factor {
    /// Banded LU when the band is narrow relative to n, dense LU otherwise.
    pub fn new(a: &Csr) -> Result<Factor, Singular> {
        let (kl, ku) = a.bandwidth();
        let band_cost = a.n * (2 * kl + ku + 1) * (kl + 1);
        let dense_cost = a.n * a.n * a.n / 3;
        if a.n > 64 && band_cost < dense_cost {
            return Ok(Factor::Banded(BandLuHandle(BandLu::new(a)?)));
        }
        let lu = a.to_dense().lu();
        if !lu.is_invertible() {
            return Err(Singular);
        }
        Ok(Factor::Dense(lu))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, Singular> {
        let x = match self {
            Factor::Dense(lu) => {
                let v = nalgebra::DVector::from_column_slice(b);
                lu.solve(&v).ok_or(Singular)?.as_slice().to_vec()
            }
            Factor::Banded(h) => h.0.solve(b),
        };
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Singular)
        }
    }
}

pub fn solve(a: &Csr, b: &[f64]) -> Result<Vec<f64>, Singular> {
    Factor::new(a)?.solve(b)
}

/// Largest n for which exp(tL) is formed densely (Padé with scaling and squaring).
pub const DENSE_EXPM_MAX: usize = 256;

pub fn expm_dense(l: &Csr, t: f64) -> DMatrix<f64> {
    (l.to_dense() * t).exp()
}

/// exp(tL)·v. Dense Padé for small n; uniformization otherwise, which needs
/// L to have nonnegative off-diagonal entries.
pub fn expm_action(l: &Csr, t: f64, v: &[f64]) -> Vec<f64> {
    if l.n <= DENSE_EXPM_MAX {
        let e = expm_dense(l, t);
        let x = e * nalgebra::DVector::from_column_slice(v);
        return x.as_slice().to_vec();
    }
    uniformized_action(l, t, v)
}

/// Σ_k Poisson(k; qt) P^k v with P = I + L/q, split into chunks with qt ≤ 400.
pub fn uniformized_action(l: &Csr, t: f64, v: &[f64]) -> Vec<f64> {
    let q = (0..l.n).map(|i| -l.get(i, i)).fold(0.0f64, f64::max).max(1e-300);
    let p = l.axpby(1.0 / q, &Csr::identity(l.n), 1.0);
    let chunks = ((q * t) / 400.0).ceil().max(1.0) as usize;
    let lam = q * t / chunks as f64;
    let mut x = v.to_vec();
    for _ in 0..chunks {
        let mut term = x.clone();
        let mut w = (-lam).exp();
        let mut acc: Vec<f64> = term.iter().map(|a| a * w).collect();
        let mut cum = w;
        let mut k = 0usize;
        while 1.0 - cum > 1e-16 && k < 100_000 {
            k += 1;
            term = p.matvec(&term);
            w *= lam / k as f64;
            cum += w;
            for (a, b) in acc.iter_mut().zip(&term) {
                *a += w * b;
            }
            if k as f64 > lam && w < 1e-18 {
                break;
            }
        }
        x = acc;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tridiag(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0 + i as f64 * 0.01));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.3));
            }
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = Csr::from_triplets(2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 0.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn banded_matches_dense() {
        let a = tridiag(300);
        assert!(matches!(Factor::new(&a).unwrap(), Factor::Banded(_)));
        let b: Vec<f64> = (0..300).map(|i| (i as f64).sin()).collect();
        let x = solve(&a, &b).unwrap();
        let r = a.matvec(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_pivoting() {
        // zero diagonal forces row swaps
        let n = 100;
        let mut t = Vec::new();
        for i in 0..n {
            if i + 1 < n {
                t.push((i, i + 1, 1.0));
                t.push((i + 1, i, 2.0));
            }
        }
        t.push((0, 0, 0.5));
        let a = Csr::from_triplets(n, t);
        let lu = BandLu::new(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let x = lu.solve(&b);
        let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for i in 0..n {
            assert!((x[i] - dense[i]).abs() < 1e-9 * (1.0 + dense[i].abs()));
        }
    }

    #[test]
    fn singular_detected() {
        let a = Csr::from_triplets(3, vec![(0, 0, 1.0), (1, 1, 1.0)]);
        assert!(solve(&a, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn uniformization_matches_pade() {
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            t.push((i, j, 1.5));
            t.push((j, i, 0.5));
            t.push((i, i, -1.5));
            t.push((j, j, -0.5));
        }
        t.push((0, 0, -1.0));
        let l = Csr::from_triplets(n, t);
        let v: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        for time in [0.01, 1.0, 30.0] {
            let a = uniformized_action(&l, time, &v);
            let b = expm_action(&l, time, &v);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-11, "{time}: {x} vs {y}");
            }
        }
    }

    proptest! {
        #[test]
        fn principal_of_identity(n in 1usize..30, mask in proptest::collection::vec(any::<bool>(), 30)) {
            let idx: Vec<usize> = (0..n).filter(|i| mask[*i]).collect();
            let p = Csr::identity(n).principal(&idx);
            prop_assert_eq!(p.n, idx.len());
            prop_assert_eq!(p.row_sums(), vec![1.0; idx.len()]);
        }
    }
}
