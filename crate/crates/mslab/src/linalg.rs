//! Minimal sparse linear algebra: CSR matrices, preconditioned CG and
//! BiCGStab, a small dense LU solver, and a Lanczos estimate of the smallest
//! Ritz value used by the coercivity checks.

use crate::{MsError, Result};
use std::io::{BufRead, Write};
use std::time::Instant;

/// Row-compressed sparse matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from coordinate triplets. Duplicate entries are summed;
    /// structural zeros are kept.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(MsError::Linalg(format!(
                    "triplet index ({i},{j}) out of range for {n_rows}x{n_cols} matrix"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut prev: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            if prev == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                prev = Some((i, j));
            }
            row_ptr[i + 1] = col_idx.len();
        }
        // fill gaps for empty rows
        for i in 1..=n_rows {
            if row_ptr[i] < row_ptr[i - 1] {
                row_ptr[i] = row_ptr[i - 1];
            }
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.values[k];
                }
            }
        }
        d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                return self.values[k];
            }
        }
        0.0
    }

    /// Largest |A_ij - A_ji| over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                m = m.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Coordinate text export: one `i j value` line per stored entry.
    pub fn write_coo<W: Write>(&self, w: &mut W) -> Result<()> {
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(w, "{} {} {:.17e}", i, self.col_idx[k], self.values[k])?;
            }
        }
        Ok(())
    }

    /// Coordinate text import, counterpart of [`write_coo`](Self::write_coo).
    pub fn read_coo<R: BufRead>(n_rows: usize, n_cols: usize, r: R) -> Result<Self> {
        let mut triplets = Vec::new();
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let toks: Vec<&str> = t.split_whitespace().collect();
            let perr = |msg: String| MsError::Parse {
                file: "<coo>".into(),
                line: ln + 1,
                msg,
            };
            if toks.len() != 3 {
                return Err(perr("expected `i j value`".into()));
            }
            let i: usize = toks[0].parse().map_err(|e| perr(format!("{e}")))?;
            let j: usize = toks[1].parse().map_err(|e| perr(format!("{e}")))?;
            let v: f64 = toks[2].parse().map_err(|e| perr(format!("{e}")))?;
            triplets.push((i, j, v));
        }
        SparseMatrix::from_triplets(n_rows, n_cols, &triplets)
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn jacobi_inv(a: &SparseMatrix) -> Vec<f64> {
    a.diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

/// Preconditioned conjugate gradients. The caller asserts that `a` is
/// symmetric positive definite.
pub fn cg(
    a: &SparseMatrix,
    b: &[f64],
    rtol: f64,
    maxit: usize,
    precond: Preconditioner,
) -> (Vec<f64>, SolveReport) {
    let start = Instant::now();
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
                wall_secs: start.elapsed().as_secs_f64(),
            },
        );
    }
    let minv = match precond {
        Preconditioner::Jacobi => Some(jacobi_inv(a)),
        Preconditioner::None => None,
    };
    let apply_m = |r: &[f64]| -> Vec<f64> {
        match &minv {
            Some(d) => r.iter().zip(d).map(|(x, y)| x * y).collect(),
            None => r.to_vec(),
        }
    };
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut ap = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let mut res = f64::INFINITY;
    let _ = res;
    // restart on the true residual: the recurrence residual can drift below
    // the true one on ill-conditioned systems
    let mut prev_round = f64::INFINITY;
    let mut stalled = false;
    for _restart in 0..4 {
        a.matvec(&x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
        res = norm(&r) / bnorm;
        if res <= rtol || iterations >= maxit {
            break;
        }
        // a restart round that fails to halve the true residual means the
        // attainable accuracy (~ condition number times machine epsilon) is
        // reached; further rounds cannot improve on it
        if res > 0.5 * prev_round {
            stalled = true;
            break;
        }
        prev_round = res;
        let mut z = apply_m(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < maxit {
            a.matvec(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break; // not SPD or breakdown
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if norm(&r) / bnorm <= rtol {
                break;
            }
            z = apply_m(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    a.matvec(&x, &mut ax);
    res = b
        .iter()
        .zip(&ax)
        .map(|(bi, axi)| (bi - axi) * (bi - axi))
        .sum::<f64>()
        .sqrt()
        / bnorm;
    // accept a stall at attainable accuracy as converged when the residual
    // is still small in absolute terms (ill-conditioned but resolved system)
    let converged = res <= rtol || (stalled && res <= 1e-5);
    (
        x,
        SolveReport {
            iterations,
            residual: res,
            converged,
            wall_secs: start.elapsed().as_secs_f64(),
        },
    )
}

/// BiCGStab for general nonsingular systems. Breakdown (`rho ~ 0`) is
/// reported as non-convergence with the breakdown residual.
pub fn bicgstab(
    a: &SparseMatrix,
    b: &[f64],
    rtol: f64,
    maxit: usize,
    precond: Preconditioner,
) -> (Vec<f64>, SolveReport) {
    let start = Instant::now();
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
                wall_secs: start.elapsed().as_secs_f64(),
            },
        );
    }
    let minv = match precond {
        Preconditioner::Jacobi => Some(jacobi_inv(a)),
        Preconditioner::None => None,
    };
    let apply_m = |r: &[f64]| -> Vec<f64> {
        match &minv {
            Some(d) => r.iter().zip(d).map(|(x, y)| x * y).collect(),
            None => r.to_vec(),
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut iterations = 0;
    let mut t = vec![0.0; n];
    while iterations < maxit && norm(&r) / bnorm > rtol {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            break; // breakdown
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let phat = apply_m(&p);
        a.matvec(&phat, &mut v);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) / bnorm <= rtol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            iterations += 1;
            break;
        }
        let shat = apply_m(&s);
        a.matvec(&shat, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        iterations += 1;
        if omega.abs() < 1e-300 {
            break;
        }
    }
    let mut ax = vec![0.0; n];
    a.matvec(&x, &mut ax);
    let res: f64 = b
        .iter()
        .zip(&ax)
        .map(|(bi, axi)| (bi - axi) * (bi - axi))
        .sum::<f64>()
        .sqrt()
        / bnorm;
    (
        x,
        SolveReport {
            iterations,
            residual: res,
            converged: res <= rtol,
            wall_secs: start.elapsed().as_secs_f64(),
        },
    )
}

/// Dense LU solve with partial pivoting; meant for small systems (the 3x3
/// oversampling combination matrix and test oracles).
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(MsError::Linalg("dense_solve: shape mismatch".into()));
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, m[i][k].abs()))
            .max_by(|p, q| p.1.partial_cmp(&q.1).unwrap())
            .unwrap();
        if pmax < 1e-14 {
            return Err(MsError::Linalg(format!(
                "dense_solve: singular matrix (pivot {pmax:.3e} in column {k})"
            )));
        }
        m.swap(k, piv);
        x.swap(k, piv);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            m[i][k] = 0.0;
            for j in k + 1..n {
                m[i][j] -= f * m[k][j];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        for j in k + 1..n {
            x[k] -= m[k][j] * x[j];
        }
        x[k] /= m[k][k];
    }
    Ok(x)
}

/// Estimate the smallest Ritz value of a symmetric matrix with `steps`
/// Lanczos iterations (full reorthogonalization) from a seeded start vector.
pub fn min_ritz_lanczos(a: &SparseMatrix, steps: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let n = a.n_rows;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let qn = norm(&q);
    for v in q.iter_mut() {
        *v /= qn;
    }
    let m = steps.min(n);
    let mut basis: Vec<Vec<f64>> = vec![q.clone()];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut w = vec![0.0; n];
    for j in 0..m {
        a.matvec(&basis[j], &mut w);
        let alpha = dot(&w, &basis[j]);
        alphas.push(alpha);
        for (i, qv) in basis[j].iter().enumerate() {
            w[i] -= alpha * qv;
        }
        if j > 0 {
            let b = betas[j - 1];
            for (i, qv) in basis[j - 1].iter().enumerate() {
                w[i] -= b * qv;
            }
        }
        // full reorthogonalization keeps the small Ritz values honest
        for qb in &basis {
            let c = dot(&w, qb);
            for i in 0..n {
                w[i] -= c * qb[i];
            }
        }
        let beta = norm(&w);
        if beta < 1e-14 || j + 1 == m {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|v| v / beta).collect());
    }
    tridiag_min_eig(&alphas, &betas)
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix via Sturm bisection.
fn tridiag_min_eig(alpha: &[f64], beta: &[f64]) -> f64 {
    let n = alpha.len();
    assert!(n > 0);
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let b0 = if i > 0 { beta[i - 1].abs() } else { 0.0 };
        let b1 = if i < n - 1 { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - b0 - b1);
        hi = hi.max(alpha[i] + b0 + b1);
    }
    // count of eigenvalues < x
    let count = |x: f64| -> usize {
        let mut cnt = 0;
        let mut d = 1.0f64;
        for i in 0..n {
            let b2 = if i > 0 { beta[i - 1] * beta[i - 1] } else { 0.0 };
            d = alpha[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -1e-300;
            }
            if d < 0.0 {
                cnt += 1;
            }
        }
        cnt
    };
    let mut a = lo - 1e-12 * (1.0 + lo.abs());
    let mut b = hi + 1e-12 * (1.0 + hi.abs());
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if count(mid) >= 1 {
            b = mid;
        } else {
            a = mid;
        }
        if b - a <= 1e-14 * (1.0 + b.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
    }

    #[test]
    fn triplets_empty_is_zero_matrix() {
        let a = SparseMatrix::from_triplets(3, 4, &[]).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.apply(&[1.0, 1.0, 1.0, 1.0]), vec![0.0; 3]);
    }

    #[test]
    fn triplets_out_of_range_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn triplets_match_dense_accumulation_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let triplets: Vec<(usize, usize, f64)> = (0..600)
            .map(|_| {
                (
                    rng.gen_range(0..n),
                    rng.gen_range(0..n),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        // dense accumulation oracle
        let mut dense = vec![vec![0.0f64; n]; n];
        for &(i, j, v) in &triplets {
            dense[i][j] += v;
        }
        let a = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(a.get(i, j), dense[i][j], "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn cg_identity_one_iteration() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        let b = vec![1.0, -2.0, 3.0];
        let (x, rep) = cg(&a, &b, 1e-12, 10, Preconditioner::None);
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        for i in 0..3 {
            assert!((x[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_2x2_hand_solve() {
        // [[4,1],[1,3]] x = (1,2)  =>  x = (1/11, 7/11)
        let a =
            SparseMatrix::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)])
                .unwrap();
        let (x, rep) = cg(&a, &[1.0, 2.0], 1e-14, 50, Preconditioner::Jacobi);
        assert!(rep.converged);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    /// 1D Laplacian [-1 2 -1] as an SPD probe.
    fn laplace_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn jacobi_cg_not_slower_than_plain_on_scaled_laplace() {
        // symmetric diagonal scaling D^1/2 A D^1/2 keeps the matrix SPD but
        // makes the diagonal nonuniform so Jacobi actually helps
        let base = laplace_1d(512);
        let scale = |i: usize| (1.0 + 9.0 * (i % 7) as f64).sqrt();
        let mut t = Vec::new();
        for i in 0..base.n_rows {
            for k in base.row_ptr[i]..base.row_ptr[i + 1] {
                let j = base.col_idx[k];
                t.push((i, j, scale(i) * scale(j) * base.values[k]));
            }
        }
        let a = SparseMatrix::from_triplets(base.n_rows, base.n_cols, &t).unwrap();
        let b = vec![1.0; a.n_rows];
        let (_, plain) = cg(&a, &b, 1e-10, 100_000, Preconditioner::None);
        let (_, jac) = cg(&a, &b, 1e-10, 100_000, Preconditioner::Jacobi);
        assert!(plain.converged && jac.converged);
        assert!(
            jac.iterations < plain.iterations,
            "jacobi {} vs plain {}",
            jac.iterations,
            plain.iterations
        );
    }

    #[test]
    fn cg_error_a_norm_monotone() {
        // CG minimizes the A-norm of the error over growing Krylov spaces,
        // so truncated runs must have nonincreasing A-norm error.
        let a = laplace_1d(64);
        let b: Vec<f64> = (0..64).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let (xstar, rep) = cg(&a, &b, 1e-14, 10_000, Preconditioner::None);
        assert!(rep.converged);
        let a_norm_err = |x: &[f64]| {
            let e: Vec<f64> = x.iter().zip(&xstar).map(|(u, v)| u - v).collect();
            dot(&e, &a.apply(&e)).sqrt()
        };
        let mut prev = f64::INFINITY;
        for it in [1, 2, 4, 8, 16, 32, 64] {
            let (x, _) = cg(&a, &b, 0.0, it, Preconditioner::None);
            let e = a_norm_err(&x);
            assert!(e <= prev + 1e-9, "A-norm error rose at {it} iterations");
            prev = e;
        }
    }

    #[test]
    fn bicgstab_identity_and_triangular() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let (x, rep) = bicgstab(&a, &[5.0, -3.0], 1e-12, 10, Preconditioner::None);
        assert!(rep.converged && rep.iterations <= 1);
        assert!((x[0] - 5.0).abs() < 1e-10 && (x[1] + 3.0).abs() < 1e-10);

        // [[2,1],[0,1]] x = (3,1)  =>  x = (1,1)
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 1.0)]).unwrap();
        let (x, rep) = bicgstab(&a, &[3.0, 1.0], 1e-12, 50, Preconditioner::Jacobi);
        assert!(rep.converged);
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bicgstab_agrees_with_cg_on_spd() {
        let a = laplace_1d(200);
        let b: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        let (xc, rc) = cg(&a, &b, 1e-12, 10_000, Preconditioner::Jacobi);
        let (xb, rb) = bicgstab(&a, &b, 1e-12, 10_000, Preconditioner::Jacobi);
        assert!(rc.converged && rb.converged);
        let diff = xc
            .iter()
            .zip(&xb)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-8, "cg/bicgstab mismatch {diff:.3e}");
    }

    #[test]
    fn dense_solve_identity_and_hilbert() {
        let a = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let x = dense_solve(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);

        // Hilbert 3x3 with b = row sums has solution (1,1,1)
        let h: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| 1.0 / (i + j + 1) as f64).collect())
            .collect();
        let b: Vec<f64> = h.iter().map(|row| row.iter().sum()).collect();
        let x = dense_solve(&h, &b).unwrap();
        for xi in x {
            assert!((xi - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_solve_random_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 10;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| rng.gen_range(-1.0..1.0) + if i == j { 4.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = dense_solve(&a, &b).unwrap();
        let bnorm = norm(&b);
        for i in 0..n {
            let r: f64 = b[i] - dot(&a[i], &x);
            assert!(r.abs() <= 1e-11 * bnorm.max(1.0));
        }
    }

    #[test]
    fn dense_solve_singular_rejected() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(dense_solve(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn symmetric_matvec_inner_product_identity() {
        use rand::{Rng, SeedableRng};
        let a = laplace_1d(100);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let scale = a.max_abs();
        for _ in 0..100 {
            let x: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = dot(&a.apply(&x), &y);
            let rhs = dot(&x, &a.apply(&y));
            assert!((lhs - rhs).abs() <= 1e-12 * scale * norm(&x) * norm(&y));
        }
    }

    #[test]
    fn lanczos_finds_small_eigenvalue_of_laplace() {
        let n = 64;
        let a = laplace_1d(n);
        // exact: 2 - 2 cos(pi/(n+1))
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        let est = min_ritz_lanczos(&a, 80, 1);
        assert!(
            (est - exact).abs() < 1e-6 * exact + 1e-10,
            "est {est:.6e} vs exact {exact:.6e}"
        );
    }

    #[test]
    fn coo_round_trip() {
        let a = laplace_1d(5);
        let mut buf = Vec::new();
        a.write_coo(&mut buf).unwrap();
        let b = SparseMatrix::read_coo(5, 5, &buf[..]).unwrap();
        assert_eq!(a.row_ptr, b.row_ptr);
        assert_eq!(a.col_idx, b.col_idx);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn determinism_bitwise() {
        let a = laplace_1d(300);
        let b: Vec<f64> = (0..300).map(|i| ((i * 31) % 17) as f64).collect();
        let (x1, _) = cg(&a, &b, 1e-10, 10_000, Preconditioner::Jacobi);
        let (x2, _) = cg(&a, &b, 1e-10, 10_000, Preconditioner::Jacobi);
        assert_eq!(x1, x2);
    }
}
