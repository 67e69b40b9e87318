//! Straightforward reference implementations that tests compare the
//! optimized code against.
//!
//! Everything here works on plain vectors and uses textbook summation forms,
//! so it shares no code or data layout with the library under test.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random control set and query signature.
#[derive(Debug, Clone)]
pub struct Instance {
    pub us: Vec<Vec<f64>>,
    pub vs: Vec<[u8; 3]>,
    pub x: Vec<f64>,
}

impl Instance {
    pub fn vs_f64(&self) -> Vec<[f64; 3]> {
        self.vs.iter().map(|v| v.map(f64::from)).collect()
    }
}

/// Positive signatures with entries in `[1, 10)` and uniformly random colors.
pub fn random_instance(seed: u64, p: usize, n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sig = |rng: &mut ChaCha8Rng| (0..p).map(|_| rng.random_range(1.0..10.0)).collect::<Vec<f64>>();
    let us = (0..n).map(|_| sig(&mut rng)).collect();
    let x = sig(&mut rng);
    let vs = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    Instance { us, vs, x }
}

/// Control pairs lying exactly on an integer affine map `V = AᵀU + c`.
///
/// Returns the instance together with `A` (`p` rows of 3) and `c`.
pub fn affine_instance(seed: u64, p: usize, n: usize) -> (Instance, Vec<[f64; 3]>, [f64; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<[f64; 3]> = (0..p)
        .map(|_| [0; 3].map(|_: i32| rng.random_range(0..4) as f64))
        .collect();
    let c = [0; 3].map(|_: i32| rng.random_range(0..20) as f64);
    let mut us = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    while us.len() < n {
        let u: Vec<f64> = (0..p).map(|_| rng.random_range(1..=6) as f64).collect();
        let v = affine_apply(&a, &c, &u);
        if v.iter().all(|&y| y <= 255.0) {
            vs.push(v.map(|y| y as u8));
            us.push(u);
        }
    }
    let x = (0..p).map(|_| rng.random_range(0.5..8.0)).collect();
    (Instance { us, vs, x }, a, c)
}

/// Spectral angle via the summation form of the normalized dot product.
pub fn spectral_angle(x: &[f64], u: &[f64]) -> f64 {
    let mut xu = 0.0;
    let mut xx = 0.0;
    let mut uu = 0.0;
    for i in 0..x.len() {
        xu += x[i] * u[i];
        xx += x[i] * x[i];
        uu += u[i] * u[i];
    }
    let c = xu / (xx.sqrt() * uu.sqrt());
    c.clamp(-1.0, 1.0).acos()
}

/// `w_k = 1 / max(angle, eps)^beta`.
pub fn sad_weights(x: &[f64], us: &[Vec<f64>], eps: f64, beta: f64) -> Vec<f64> {
    us.iter().map(|u| 1.0 / spectral_angle(x, u).max(eps).powf(beta)).collect()
}

/// Solves the square system `m · s = r` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col] == 0.0 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut s = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = r[row];
        for k in row + 1..n {
            acc -= m[row][k] * s[k];
        }
        s[row] = acc / m[row][row];
    }
    Some(s)
}

/// Affine fit `(F, b)` minimizing `Σ w_k |Fᵀ U_k + b − V_k|²`.
///
/// Each output channel is solved separately from the normal equations of the
/// augmented regressor `z_k = [U_k; 1]`, assembled term by term. `F` is
/// returned as `p` rows of 3.
pub fn weighted_affine_fit(us: &[Vec<f64>], vs: &[[f64; 3]], w: &[f64]) -> Option<(Vec<[f64; 3]>, [f64; 3])> {
    let p = us[0].len();
    let dim = p + 1;
    let z = |k: usize, i: usize| if i < p { us[k][i] } else { 1.0 };
    let mut m = vec![vec![0.0; dim]; dim];
    for k in 0..us.len() {
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] += w[k] * z(k, i) * z(k, j);
            }
        }
    }
    let mut f = vec![[0.0; 3]; p];
    let mut b = [0.0; 3];
    for c in 0..3 {
        let mut r = vec![0.0; dim];
        for k in 0..us.len() {
            for (i, ri) in r.iter_mut().enumerate() {
                *ri += w[k] * z(k, i) * vs[k][c];
            }
        }
        let s = gauss_solve(m.clone(), r)?;
        for i in 0..p {
            f[i][c] = s[i];
        }
        b[c] = s[p];
    }
    Some((f, b))
}

/// `Fᵀ x + b` with `F` given as `p` rows of 3.
pub fn affine_apply(f: &[[f64; 3]], b: &[f64; 3], x: &[f64]) -> [f64; 3] {
    let mut y = *b;
    for (row, &xi) in f.iter().zip(x) {
        for c in 0..3 {
            y[c] += row[c] * xi;
        }
    }
    y
}

/// `Σ w_k |Fᵀ U_k + b − V_k|²` evaluated term by term.
pub fn weighted_objective(f: &[[f64; 3]], b: &[f64; 3], us: &[Vec<f64>], vs: &[[f64; 3]], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..us.len() {
        let y = affine_apply(f, b, &us[k]);
        for c in 0..3 {
            total += w[k] * (y[c] - vs[k][c]).powi(2);
        }
    }
    total
}

/// Relative Frobenius norm of `2ŪWŪᵀF − 2ŪWV̄ᵀ` against `2ŪWV̄ᵀ`, with the
/// columns centered on the weighted centroids.
pub fn stationarity_residual(f: &[[f64; 3]], us: &[Vec<f64>], vs: &[[f64; 3]], w: &[f64]) -> f64 {
    let p = us[0].len();
    let total: f64 = w.iter().sum();
    let mut ub = vec![0.0; p];
    let mut vb = [0.0; 3];
    for k in 0..us.len() {
        for i in 0..p {
            ub[i] += w[k] * us[k][i] / total;
        }
        for c in 0..3 {
            vb[c] += w[k] * vs[k][c] / total;
        }
    }
    let mut grad = vec![[0.0; 3]; p];
    let mut rhs = vec![[0.0; 3]; p];
    for k in 0..us.len() {
        let du: Vec<f64> = (0..p).map(|i| us[k][i] - ub[i]).collect();
        let proj: Vec<f64> = (0..3).map(|c| (0..p).map(|i| du[i] * f[i][c]).sum()).collect();
        for i in 0..p {
            for c in 0..3 {
                grad[i][c] += 2.0 * w[k] * du[i] * (proj[c] - (vs[k][c] - vb[c]));
                rhs[i][c] += 2.0 * w[k] * du[i] * (vs[k][c] - vb[c]);
            }
        }
    }
    let norm = |m: &[[f64; 3]]| m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    norm(&grad) / norm(&rhs)
}

/// Shannon entropy (bits) of a histogram of counts.
pub fn histogram_entropy(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n as f64;
            -q * q.log2()
        })
        .sum()
}

/// Projective map of a point by a row-major 3×3 matrix.
pub fn project(h: &[[f64; 3]; 3], x: f64, y: f64) -> (f64, f64) {
    let d = h[2][0] * x + h[2][1] * y + h[2][2];
    (
        (h[0][0] * x + h[0][1] * y + h[0][2]) / d,
        (h[1][0] * x + h[1][1] * y + h[1][2]) / d,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_solves_small_system() {
        let s = gauss_solve(vec![vec![0.0, 2.0], vec![3.0, 1.0]], vec![4.0, 5.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15 && (s[1] - 2.0).abs() < 1e-15);
        assert!(gauss_solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn exact_fit_has_zero_objective() {
        let us = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 1.0]];
        let vs: Vec<[f64; 3]> = us.iter().map(|u| [u[0] + 1.0, 2.0 * u[1], u[0] - u[1] + 5.0]).collect();
        let w = vec![1.0, 2.0, 3.0, 4.0];
        let (f, b) = weighted_affine_fit(&us, &vs, &w).unwrap();
        assert!(weighted_objective(&f, &b, &us, &vs, &w) < 1e-20);
        assert!((affine_apply(&f, &b, &[3.0, 3.0])[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_two_equal_bins() {
        assert_eq!(histogram_entropy(&[5, 0, 5]), 1.0);
    }
}
