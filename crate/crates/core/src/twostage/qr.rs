//! Householder QR with column pivoting for tall dense systems.

use crate::error::{DiivError, Result};

/// Relative pivot threshold below which a column is treated as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Factorization `X P = Q R` of an `n x k` matrix, `n >= k`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    n: usize,
    k: usize,
    /// Upper triangle of R, row-major `k x k`.
    r: Vec<f64>,
    /// Householder vectors, reflector `j` acting on rows `j..n`.
    reflectors: Vec<Vec<f64>>,
    /// `perm[j]` is the original column stored in factor position `j`.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    /// Factorizes column-major data: `columns[c][row]`.
    pub fn new(columns: &[Vec<f64>]) -> Result<Self> {
        let k = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(DiivError::InvalidInput("design has no columns".into()));
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(DiivError::InvalidInput("design columns differ in length".into()));
        }
        if n < k {
            return Err(DiivError::RankDeficient { rank: n, columns: k });
        }

        let mut a: Vec<Vec<f64>> = columns.to_vec();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut reflectors = Vec::with_capacity(k);
        let mut r = vec![0.0; k * k];
        let mut first_pivot = 0.0_f64;
        let mut rank = k;

        for j in 0..k {
            // Norms are recomputed from the active block; k is small, and this
            // avoids the downdating cancellation of the classic update formula.
            let (p, best) = (j..k)
                .map(|c| (c, norm(&a[c][j..])))
                .fold((j, -1.0), |acc, (c, v)| if v > acc.1 { (c, v) } else { acc });
            a.swap(j, p);
            perm.swap(j, p);
            for row in 0..j {
                r.swap(row * k + j, row * k + p);
            }
            if j == 0 {
                first_pivot = best;
            }
            if best <= RANK_TOLERANCE * first_pivot || best == 0.0 {
                rank = rank.min(j);
            }

            let x = &a[j][j..];
            let alpha = x[0];
            let sigma = norm(x);
            let mut v = x.to_vec();
            let diag = if sigma == 0.0 {
                0.0
            } else {
                let s = if alpha >= 0.0 { 1.0 } else { -1.0 };
                v[0] += s * sigma;
                -s * sigma
            };
            let vtv: f64 = v.iter().map(|t| t * t).sum();
            r[j * k + j] = diag;
            for c in j + 1..k {
                if vtv > 0.0 {
                    reflect(&v, vtv, &mut a[c][j..]);
                }
                r[j * k + c] = a[c][j];
            }
            reflectors.push(v);
        }

        if rank < k {
            return Err(DiivError::RankDeficient { rank, columns: k });
        }
        Ok(PivotedQr {
            n,
            k,
            r,
            reflectors,
            perm,
            rank,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.k
    }

    /// Least-squares coefficients for response `b`, in original column order.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(DiivError::InvalidInput("response length differs from design".into()));
        }
        let mut qtb = b.to_vec();
        for (j, v) in self.reflectors.iter().enumerate() {
            let vtv: f64 = v.iter().map(|t| t * t).sum();
            if vtv > 0.0 {
                reflect(v, vtv, &mut qtb[j..]);
            }
        }
        let k = self.k;
        let mut z = vec![0.0; k];
        for i in (0..k).rev() {
            let tail: f64 = (i + 1..k).map(|c| self.r[i * k + c] * z[c]).sum();
            z[i] = (qtb[i] - tail) / self.r[i * k + i];
        }
        let mut out = vec![0.0; k];
        for (pos, &col) in self.perm.iter().enumerate() {
            out[col] = z[pos];
        }
        Ok(out)
    }

    /// `(X'X)^{-1}` in original column order, row-major `k x k`.
    pub fn gram_inverse(&self) -> Vec<f64> {
        let k = self.k;
        // R^{-1} by back substitution, column by column.
        let mut rinv = vec![0.0; k * k];
        for c in 0..k {
            for i in (0..=c).rev() {
                let e = if i == c { 1.0 } else { 0.0 };
                let tail: f64 = (i + 1..=c).map(|m| self.r[i * k + m] * rinv[m * k + c]).sum();
                rinv[i * k + c] = (e - tail) / self.r[i * k + i];
            }
        }
        let mut out = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                let v: f64 = (i.max(j)..k).map(|m| rinv[i * k + m] * rinv[j * k + m]).sum();
                out[self.perm[i] * k + self.perm[j]] = v;
            }
        }
        out
    }
}

fn norm(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v / scale) * (v / scale)).sum::<f64>().sqrt()
}

/// Applies `I - 2 v v' / (v'v)` to `x` in place.
fn reflect(v: &[f64], vtv: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vtv;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}
