//! Singular value decompositions for POD basis construction.
//!
//! Two routes: a one-sided Jacobi SVD that returns the complete spectrum of a
//! small dense matrix, and a randomized subspace iteration that returns the
//! leading block of a large one. POD only ever consumes the leading left
//! singular vectors; the Jacobi path doubles as the reference in tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Left singular vectors (column-major, `m × sigma.len()`) and singular
/// values in descending order.
pub(crate) struct LeftSvd {
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 60;
const SUBSPACE_MAX_ITERS: usize = 400;
const SUBSPACE_OVERSAMPLE: usize = 20;
const SUBSPACE_SEED: u64 = 0x504f44; // fixed: decomposition must be deterministic

/// Matrices up to this edge length take the dense Jacobi route and get the
/// full spectrum.
pub(crate) const DENSE_SVD_LIMIT: usize = 400;

pub(crate) fn leading_left_svd(a: &[f64], m: usize, n: usize, k: usize) -> LeftSvd {
    assert!(k <= m.min(n));
    if m.max(n) <= DENSE_SVD_LIMIT {
        jacobi_svd_left(a, m, n)
    } else {
        subspace_svd_left(a, m, n, k)
    }
}

/// One-sided Jacobi on the columns of `a` (row-major m×n). After the column
/// set is pairwise orthogonal, column norms are the singular values and the
/// normalized columns the left singular vectors.
pub(crate) fn jacobi_svd_left(a: &[f64], m: usize, n: usize) -> LeftSvd {
    // column-major working copy
    let mut w = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            w[j * m + i] = a[i * n + j];
        }
    }
    let tol = 1e-15;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (cp, cq) = column_pair(&mut w, m, p, q);
                let alpha: f64 = cp.iter().map(|x| x * x).sum();
                let beta: f64 = cq.iter().map(|x| x * x).sum();
                let gamma: f64 = cp.iter().zip(cq.iter()).map(|(x, y)| x * y).sum();
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let x = cp[i];
                    let y = cq[i];
                    cp[i] = c * x - s * y;
                    cq[i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let k = m.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| w[j * m..(j + 1) * m].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u = vec![0.0; m * k];
    let mut sigma = vec![0.0; k];
    for (out, &j) in order.iter().take(k).enumerate() {
        sigma[out] = norms[j];
        if norms[j] > 0.0 {
            for i in 0..m {
                u[out * m + i] = w[j * m + i] / norms[j];
            }
        }
    }
    LeftSvd { u, sigma }
}

fn column_pair(w: &mut [f64], m: usize, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (head, tail) = w.split_at_mut(q * m);
    (&mut head[p * m..(p + 1) * m], &mut tail[..m])
}

/// Randomized subspace iteration on `A Aᵀ`, Rayleigh–Ritz extraction, for the
/// leading `k` left singular triplets of a large row-major m×n matrix.
pub(crate) fn subspace_svd_left(a: &[f64], m: usize, n: usize, k: usize) -> LeftSvd {
    let kk = (k + SUBSPACE_OVERSAMPLE).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(SUBSPACE_SEED);
    // Q: m×kk row-major with orthonormal columns
    let mut q: Vec<f64> = (0..m * kk)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    orthonormalize_columns(&mut q, m, kk);

    let mut c = vec![0.0; n * kk]; // Aᵀ Q, row-major n×kk
    let mut y = vec![0.0; m * kk];
    let mut prev_ritz = vec![0.0; k];
    let mut eig = SymmetricEig::workspace(kk);
    for iter in 0..SUBSPACE_MAX_ITERS {
        // C = Aᵀ Q
        c.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let row = &a[i * n..(i + 1) * n];
            let qi = &q[i * kk..(i + 1) * kk];
            for (j, &s) in row.iter().enumerate() {
                let out = &mut c[j * kk..(j + 1) * kk];
                for l in 0..kk {
                    out[l] = s.mul_add(qi[l], out[l]);
                }
            }
        }
        // H = Cᵀ C, Ritz values of A Aᵀ restricted to span(Q)
        let mut h = vec![0.0; kk * kk];
        for jrow in 0..n {
            let cj = &c[jrow * kk..(jrow + 1) * kk];
            for r in 0..kk {
                let cr = cj[r];
                let hrow = &mut h[r * kk..(r + 1) * kk];
                for s in 0..kk {
                    hrow[s] = cr.mul_add(cj[s], hrow[s]);
                }
            }
        }
        eig.decompose(&h);
        let ritz: Vec<f64> = (0..k).map(|i| eig.values[i].max(0.0).sqrt()).collect();
        let converged = iter >= 4
            && ritz
                .iter()
                .zip(&prev_ritz)
                .all(|(now, before)| (now - before).abs() <= 1e-13 * now.max(1e-300));
        if converged || iter == SUBSPACE_MAX_ITERS - 1 {
            // rotate Q into the Ritz basis and keep the leading k columns
            let mut u = vec![0.0; m * k];
            for i in 0..m {
                let qi = &q[i * kk..(i + 1) * kk];
                for col in 0..k {
                    let mut acc = 0.0;
                    for l in 0..kk {
                        acc = qi[l].mul_add(eig.vectors[l * kk + col], acc);
                    }
                    u[col * m + i] = acc;
                }
            }
            return LeftSvd { u, sigma: ritz };
        }
        prev_ritz = ritz;
        // Y = A C (power step), then re-orthonormalize
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let row = &a[i * n..(i + 1) * n];
            let out = &mut y[i * kk..(i + 1) * kk];
            for (j, &s) in row.iter().enumerate() {
                let cj = &c[j * kk..(j + 1) * kk];
                for l in 0..kk {
                    out[l] = s.mul_add(cj[l], out[l]);
                }
            }
        }
        std::mem::swap(&mut q, &mut y);
        orthonormalize_columns(&mut q, m, kk);
    }
    unreachable!("subspace iteration returns from within the loop");
}

/// Two passes of modified Gram–Schmidt over the columns of a row-major m×k
/// matrix.
fn orthonormalize_columns(q: &mut [f64], m: usize, k: usize) {
    for _pass in 0..2 {
        for col in 0..k {
            for prev in 0..col {
                let mut dot = 0.0;
                for i in 0..m {
                    dot += q[i * k + col] * q[i * k + prev];
                }
                for i in 0..m {
                    q[i * k + col] -= dot * q[i * k + prev];
                }
            }
            let mut norm2 = 0.0;
            for i in 0..m {
                norm2 += q[i * k + col] * q[i * k + col];
            }
            let norm = norm2.sqrt();
            if norm > 0.0 {
                let inv = 1.0 / norm;
                for i in 0..m {
                    q[i * k + col] *= inv;
                }
            }
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix, eigenvalues
/// descending.
struct SymmetricEig {
    n: usize,
    values: Vec<f64>,
    vectors: Vec<f64>, // row-major, column `c` holds the c-th eigenvector
}

impl SymmetricEig {
    fn workspace(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n],
            vectors: vec![0.0; n * n],
        }
    }

    fn decompose(&mut self, h: &[f64]) {
        let n = self.n;
        let mut a = h.to_vec();
        let v = &mut self.vectors;
        v.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        for _sweep in 0..60 {
            let mut off: f64 = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off = off.max(a[p * n + q].abs());
                }
            }
            let scale: f64 = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
            if off <= 1e-15 * scale.max(1e-300) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq.abs() <= 1e-18 * scale.max(1e-300) {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..n {
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        a[i * n + p] = c * aip - s * aiq;
                        a[i * n + q] = s * aip + c * aiq;
                    }
                    for j in 0..n {
                        let apj = a[p * n + j];
                        let aqj = a[q * n + j];
                        a[p * n + j] = c * apj - s * aqj;
                        a[q * n + j] = s * apj + c * aqj;
                    }
                    for i in 0..n {
                        let vip = v[i * n + p];
                        let viq = v[i * n + q];
                        v[i * n + p] = c * vip - s * viq;
                        v[i * n + q] = s * vip + c * viq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
        let old = v.clone();
        for (new_col, &src) in order.iter().enumerate() {
            self.values[new_col] = diag[src];
            for i in 0..n {
                v[i * n + new_col] = old[i * n + src];
            }
        }
    }
}
