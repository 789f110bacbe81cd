//! One-sided (Hestenes) Jacobi SVD for 4x4 complex matrices.
//!
//! Columns of a working copy of `H` are rotated pairwise until mutually
//! orthogonal; the accumulated rotations form `V`, the column norms are the
//! singular values and the normalised columns form `U`.

use num_complex::Complex64;
use serde::Serialize;

use super::matrix::{inner, vec_norm, CMatrix4, DIM};
use super::ChannelError;

const MAX_SWEEPS: usize = 64;

/// `H = U diag(sigma) V^H`, singular values descending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvdFactors {
    #[serde(serialize_with = "super::serialize_matrix")]
    pub u: CMatrix4,
    pub sigma: [f64; DIM],
    #[serde(serialize_with = "super::serialize_matrix")]
    pub v: CMatrix4,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> CMatrix4 {
        let sigma = CMatrix4::from_real_diagonal(self.sigma);
        self.u * sigma * self.v.adjoint()
    }

    /// Number of singular values strictly above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.sigma.iter().filter(|&&s| s > tol).count()
    }
}

pub(crate) fn jacobi_svd(h: &CMatrix4) -> Result<SvdFactors, ChannelError> {
    if !h.is_finite() {
        return Err(ChannelError::NonFinite);
    }
    let mut cols: [[Complex64; DIM]; DIM] = std::array::from_fn(|j| h.column(j));
    let mut vcols: [[Complex64; DIM]; DIM] = std::array::from_fn(|j| CMatrix4::identity().column(j));

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..DIM - 1 {
            for q in p + 1..DIM {
                let alpha = vec_norm(&cols[p]).powi(2);
                let beta = vec_norm(&cols[q]).powi(2);
                let gamma = inner(&cols[p], &cols[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = Complex64::from_polar(1.0, -gamma.arg());
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, phase, c, s);
                rotate(&mut vcols, p, q, phase, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: [f64; DIM] = std::array::from_fn(|j| vec_norm(&cols[j]));
    let mut order: [usize; DIM] = std::array::from_fn(|j| j);
    // Stable sort keeps ties in column order.
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma_max = norms[order[0]];
    let negligible = sigma_max * DIM as f64 * f64::EPSILON;
    let mut u = CMatrix4::zeros();
    let mut v = CMatrix4::zeros();
    let mut sigma = [0.0; DIM];
    let mut filled = 0;
    for (k, &j) in order.iter().enumerate() {
        sigma[k] = norms[j];
        v.set_column(k, vcols[j]);
        if norms[j] > negligible && norms[j] > 0.0 {
            u.set_column(k, cols[j].map(|z| z / norms[j]));
            filled += 1;
        }
    }
    complete_basis(&mut u, filled);

    // Fix the phase freedom so each U column's largest entry is real >= 0.
    for k in 0..DIM {
        let col = u.column(k);
        let mut pivot = 0;
        for i in 1..DIM {
            if col[i].norm() > col[pivot].norm() {
                pivot = i;
            }
        }
        let rot = Complex64::from_polar(1.0, -col[pivot].arg());
        u.set_column(k, col.map(|z| z * rot));
        u[(pivot, k)] = Complex64::new(u[(pivot, k)].norm(), 0.0);
        v.set_column(k, v.column(k).map(|z| z * rot));
    }

    Ok(SvdFactors { u, sigma, v })
}

fn rotate(cols: &mut [[Complex64; DIM]; DIM], p: usize, q: usize, phase: Complex64, c: f64, s: f64) {
    for i in 0..DIM {
        let ap = cols[p][i];
        let aq = cols[q][i] * phase;
        cols[p][i] = ap * c - aq * s;
        cols[q][i] = ap * s + aq * c;
    }
}

/// Fills columns `filled..DIM` of `u` with an orthonormal completion, taking
/// the standard basis vector with the largest residual each time.
fn complete_basis(u: &mut CMatrix4, filled: usize) {
    for k in filled..DIM {
        let mut best = [Complex64::new(0.0, 0.0); DIM];
        let mut best_norm = -1.0;
        for e in 0..DIM {
            let mut x = [Complex64::new(0.0, 0.0); DIM];
            x[e] = Complex64::new(1.0, 0.0);
            // Two passes of Gram-Schmidt.
            for _ in 0..2 {
                for j in 0..k {
                    let col = u.column(j);
                    let proj = inner(&col, &x);
                    for i in 0..DIM {
                        x[i] -= col[i] * proj;
                    }
                }
            }
            let n = vec_norm(&x);
            if n > best_norm {
                best_norm = n;
                best = x.map(|z| z / n);
            }
        }
        u.set_column(k, best);
    }
}
