//! Sparse assembly storage and direct solvers.
//!
//! Matrices are assembled as triplets and compressed to CSR. The structured
//! meshes used here have small bandwidth once unknowns are ordered along the
//! long axis of the domain, so factorizations are banded: Cholesky for the
//! SPD Laplace systems and LU with partial pivoting for the indefinite Stokes
//! saddle-point systems. Small dense SPD systems (the boundary Schur
//! complements) use a dense Cholesky.

use crate::error::{Error, Result};

/// Coordinate-format accumulator. Duplicate entries are summed in insertion
/// order when compressed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    pub fn into_csr(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Square compressed-sparse-row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// Largest absolute asymmetry `|a_rc - a_cr|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = TripletBuilder::new(keep.len());
        for (new_r, &old_r) in keep.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                if map[c] != usize::MAX {
                    t.add(new_r, map[c], v);
                }
            }
        }
        t.into_csr()
    }
}

/// Orders unknowns by their `(x, y)` position so that a structured mesh
/// elongated in `x` yields a narrow band. Ties keep the original order.
pub fn ordering_by_position(positions: &[[f64; 2]]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..positions.len()).collect();
    perm.sort_by(|&a, &b| {
        let (pa, pb) = (positions[a], positions[b]);
        pa[0]
            .total_cmp(&pb[0])
            .then(pa[1].total_cmp(&pb[1]))
            .then(a.cmp(&b))
    });
    perm
}

fn permuted_bandwidths(a: &CsrMatrix, inv: &[usize]) -> (usize, usize) {
    let (mut kl, mut ku) = (0usize, 0usize);
    for r in 0..a.n() {
        let pr = inv[r];
        for (c, _) in a.row(r) {
            let pc = inv[c];
            if pc < pr {
                kl = kl.max(pr - pc);
            } else {
                ku = ku.max(pc - pr);
            }
        }
    }
    (kl, ku)
}

fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// LU factorization with partial pivoting of a permuted band matrix.
///
/// `perm[new] = old` maps factor rows/columns to the original unknowns.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n();
        assert_eq!(perm.len(), n);
        let inv = inverse_permutation(&perm);
        let (kl, ku) = permuted_bandwidths(a, &inv);
        let width = 2 * kl + ku + 1;
        let mut data = vec![0.0; n * width];
        let at = |r: usize, c: usize| r * width + c + kl - r;

        let mut scale = 0.0f64;
        for r in 0..n {
            for (c, v) in a.row(r) {
                let (pr, pc) = (inv[r], inv[c]);
                data[at(pr, pc)] += v;
                scale = scale.max(v.abs());
            }
        }
        let tiny = scale * f64::EPSILON * 1e-6;

        let mut pivots = vec![0; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = data[at(k, k)].abs();
            for r in k + 1..=last_row {
                let v = data[at(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > tiny) {
                return Err(Error::SingularMatrix { row: perm[k] });
            }
            pivots[k] = p;
            if p != k {
                for c in k..=last_col {
                    data.swap(at(k, c), at(p, c));
                }
            }
            let diag = data[at(k, k)];
            let pivot_row = at(k, k);
            for r in k + 1..=last_row {
                let lr = at(r, k);
                let l = data[lr] / diag;
                data[lr] = l;
                if l != 0.0 {
                    let len = last_col - k;
                    let (head, tail) = data.split_at_mut(lr);
                    let src = &head[pivot_row + 1..pivot_row + 1 + len];
                    let dst = &mut tail[1..1 + len];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d -= l * s;
                    }
                }
            }
        }

        Ok(Self {
            n,
            kl,
            ku,
            width,
            data,
            pivots,
            perm,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * self.width + c + self.kl - r
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_many_in_place(&mut x, 1);
        x
    }

    /// Solves for `m` right-hand sides stored row-major (`rhs[i * m + j]` is
    /// row `i` of column `j`), overwriting them with the solutions.
    pub fn solve_many_in_place(&self, rhs: &mut [f64], m: usize) {
        let n = self.n;
        assert_eq!(rhs.len(), n * m);
        let mut y = vec![0.0; n * m];
        for (new, &old) in self.perm.iter().enumerate() {
            y[new * m..(new + 1) * m].copy_from_slice(&rhs[old * m..(old + 1) * m]);
        }

        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                for j in 0..m {
                    y.swap(k * m + j, p * m + j);
                }
            }
            let last_row = (k + self.kl).min(n - 1);
            let (head, tail) = y.split_at_mut((k + 1) * m);
            let yk = &head[k * m..];
            for r in k + 1..=last_row {
                let l = self.data[self.at(r, k)];
                if l != 0.0 {
                    let off = (r - k - 1) * m;
                    for (d, s) in tail[off..off + m].iter_mut().zip(yk) {
                        *d -= l * s;
                    }
                }
            }
        }

        for r in (0..n).rev() {
            let last_col = (r + self.kl + self.ku).min(n - 1);
            let (head, tail) = y.split_at_mut((r + 1) * m);
            let yr = &mut head[r * m..];
            for c in r + 1..=last_col {
                let u = self.data[self.at(r, c)];
                if u != 0.0 {
                    let off = (c - r - 1) * m;
                    for (d, s) in yr.iter_mut().zip(&tail[off..off + m]) {
                        *d -= u * s;
                    }
                }
            }
            let inv_diag = 1.0 / self.data[self.at(r, r)];
            for v in yr.iter_mut() {
                *v *= inv_diag;
            }
        }

        for (new, &old) in self.perm.iter().enumerate() {
            rhs[old * m..(old + 1) * m].copy_from_slice(&y[new * m..(new + 1) * m]);
        }
    }
}

/// Cholesky factorization `P A P^T = L L^T` of a permuted SPD band matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    width: usize,
    data: Vec<f64>,
    perm: Vec<usize>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n();
        assert_eq!(perm.len(), n);
        let inv = inverse_permutation(&perm);
        let (kl, ku) = permuted_bandwidths(a, &inv);
        let bw = kl.max(ku);
        let width = bw + 1;
        // row r holds columns r - bw ..= r
        let at = |r: usize, c: usize| r * width + c + bw - r;
        let mut data = vec![0.0; n * width];
        for r in 0..n {
            for (c, v) in a.row(r) {
                let (pr, pc) = (inv[r], inv[c]);
                if pc <= pr {
                    data[at(pr, pc)] += v;
                }
            }
        }

        for r in 0..n {
            let first = r.saturating_sub(bw);
            for c in first..=r {
                let lo = first.max(c.saturating_sub(bw));
                let mut s = data[at(r, c)];
                let row_r = &data[at(r, lo)..at(r, c)];
                let row_c = &data[at(c, lo)..at(c, c)];
                s -= row_r.iter().zip(row_c).map(|(a, b)| a * b).sum::<f64>();
                if c == r {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            row: perm[r],
                            pivot: s,
                        });
                    }
                    data[at(r, r)] = s.sqrt();
                } else {
                    data[at(r, c)] = s / data[at(c, c)];
                }
            }
        }

        Ok(Self {
            n,
            bw,
            width,
            data,
            perm,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * self.width + c + self.bw - r
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_many_in_place(&mut x, 1);
        x
    }

    /// Same layout as [`BandedLu::solve_many_in_place`].
    pub fn solve_many_in_place(&self, rhs: &mut [f64], m: usize) {
        let n = self.n;
        assert_eq!(rhs.len(), n * m);
        let mut y = vec![0.0; n * m];
        for (new, &old) in self.perm.iter().enumerate() {
            y[new * m..(new + 1) * m].copy_from_slice(&rhs[old * m..(old + 1) * m]);
        }

        // L y = b
        for r in 0..n {
            let first = r.saturating_sub(self.bw);
            let (head, tail) = y.split_at_mut(r * m);
            let yr = &mut tail[..m];
            for c in first..r {
                let l = self.data[self.at(r, c)];
                if l != 0.0 {
                    for (d, s) in yr.iter_mut().zip(&head[c * m..(c + 1) * m]) {
                        *d -= l * s;
                    }
                }
            }
            let inv_diag = 1.0 / self.data[self.at(r, r)];
            for v in yr.iter_mut() {
                *v *= inv_diag;
            }
        }

        // L^T x = y
        for r in (0..n).rev() {
            let inv_diag = 1.0 / self.data[self.at(r, r)];
            let first = r.saturating_sub(self.bw);
            let (head, tail) = y.split_at_mut(r * m);
            let yr = &mut tail[..m];
            for v in yr.iter_mut() {
                *v *= inv_diag;
            }
            for c in first..r {
                let l = self.data[self.at(r, c)];
                if l != 0.0 {
                    for (d, s) in head[c * m..(c + 1) * m].iter_mut().zip(yr.iter()) {
                        *d -= l * s;
                    }
                }
            }
        }

        for (new, &old) in self.perm.iter().enumerate() {
            rhs[old * m..(old + 1) * m].copy_from_slice(&y[new * m..(new + 1) * m]);
        }
    }
}

/// Dense Cholesky factor of a small SPD matrix stored row-major.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..=r {
                let dot: f64 = l[r * n..r * n + c]
                    .iter()
                    .zip(&l[c * n..c * n + c])
                    .map(|(x, y)| x * y)
                    .sum();
                let s = a[r * n + c] - dot;
                if c == r {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: r, pivot: s });
                    }
                    l[r * n + r] = s.sqrt();
                } else {
                    l[r * n + c] = s / l[c * n + c];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for r in 0..n {
            let dot: f64 = self.l[r * n..r * n + r]
                .iter()
                .zip(&y[..r])
                .map(|(a, b)| a * b)
                .sum();
            y[r] = (y[r] - dot) / self.l[r * n + r];
        }
        for r in (0..n).rev() {
            let yr = y[r] / self.l[r * n + r];
            y[r] = yr;
            for c in 0..r {
                y[c] -= self.l[r * n + c] * yr;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_band(n: usize, bw: usize, seed: u64, spd: bool) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = TripletBuilder::new(n);
        for r in 0..n {
            for c in r.saturating_sub(bw)..=(r + bw).min(n - 1) {
                if spd && c < r {
                    continue;
                }
                let v: f64 = rng.random_range(-1.0..1.0);
                if spd {
                    t.add(r, c, v);
                    if c != r {
                        t.add(c, r, v);
                    } else {
                        t.add(r, r, 2.0 * bw as f64 + 1.0);
                    }
                } else {
                    t.add(r, c, v);
                }
            }
        }
        t.into_csr()
    }

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        a.matvec(x)
            .iter()
            .zip(b)
            .map(|(ax, bb)| (ax - bb).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletBuilder::new(2);
        t.add(0, 1, 1.0);
        t.add(0, 1, 2.5);
        t.add(1, 0, -1.0);
        let a = t.into_csr();
        assert_eq!(a.get(0, 1), 3.5);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn lu_needs_pivoting() {
        // zero leading diagonal, like a saddle-point system
        let mut t = TripletBuilder::new(3);
        t.add(0, 1, 1.0);
        t.add(1, 0, 1.0);
        t.add(1, 1, 2.0);
        t.add(1, 2, 1.0);
        t.add(2, 1, 1.0);
        t.add(2, 2, 1.0);
        let a = t.into_csr();
        let lu = BandedLu::factor(&a, vec![0, 1, 2]).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        assert!(residual(&a, &x, &b) < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let mut t = TripletBuilder::new(2);
        t.add(0, 0, 1.0);
        t.add(0, 1, 1.0);
        t.add(1, 0, 1.0);
        t.add(1, 1, 1.0);
        let a = t.into_csr();
        assert!(matches!(
            BandedLu::factor(&a, vec![0, 1]),
            Err(Error::SingularMatrix { .. })
        ));
        assert!(BandedCholesky::factor(&a, vec![0, 1]).is_err());
    }

    #[test]
    fn dense_cholesky_matches_banded() {
        let a = random_band(12, 3, 4, true);
        let mut dense = vec![0.0; 144];
        for r in 0..12 {
            for (c, v) in a.row(r) {
                dense[r * 12 + c] = v;
            }
        }
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let x1 = DenseCholesky::factor(&dense, 12).unwrap().solve(&b);
        let x2 = BandedCholesky::factor(&a, (0..12).collect()).unwrap().solve(&b);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn lu_solves_permuted_band(n in 2usize..40, bw in 0usize..5, seed in 0u64..1000) {
            let a = random_band(n, bw, seed, false);
            // diagonal boost keeps the random matrix comfortably nonsingular
            let mut t = TripletBuilder::new(n);
            for r in 0..n {
                for (c, v) in a.row(r) { t.add(r, c, v); }
                t.add(r, r, 3.0 * (bw as f64 + 1.0));
            }
            let a = t.into_csr();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() { perm.swap(i, rng.random_range(0..=i)); }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = BandedLu::factor(&a, perm.clone()).unwrap().solve(&b);
            prop_assert!(residual(&a, &x, &b) < 1e-10);
            let x = BandedCholesky::factor(&random_band(n, bw, seed, true), perm).unwrap().solve(&b);
            prop_assert!(residual(&random_band(n, bw, seed, true), &x, &b) < 1e-10);
        }

        #[test]
        fn many_rhs_matches_single(n in 2usize..25, m in 1usize..5, seed in 0u64..100) {
            let a = random_band(n, 2, seed, true);
            let lu = BandedLu::factor(&a, (0..n).rev().collect()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rhs: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut many = rhs.clone();
            lu.solve_many_in_place(&mut many, m);
            for j in 0..m {
                let col: Vec<f64> = (0..n).map(|i| rhs[i * m + j]).collect();
                let x = lu.solve(&col);
                for i in 0..n {
                    prop_assert!((x[i] - many[i * m + j]).abs() < 1e-12);
                }
            }
        }
    }
}
