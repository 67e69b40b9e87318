//! Moving least squares color transfer.
//!
//! For a spectral signature `x` every control pair `(U_k, V_k)` gets the
//! weight `w_k = 1 / SAD(x, U_k)^β`, and the affine map `f(x) = Fᵀx + b`
//! minimizing `Σ w_k |Fᵀ U_k + b − V_k|²` is solved in closed form:
//!
//! ```text
//! ū = Σ w_k U_k / Σ w_k           v̄ = Σ w_k V_k / Σ w_k
//! F = (Ū W Ūᵀ + λI)⁻¹ Ū W V̄ᵀ      b = v̄ − Fᵀ ū
//! ```
//!
//! where `Ū`, `V̄` hold the control columns centered on the weighted
//! centroids. The ridge term `λ` is zero in the textbook solution; it is
//! needed whenever there are no more pairs than bands.

mod render;

use nalgebra::{Cholesky, DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::points::ControlPointSet;

pub use render::{render, render_strided};

/// Ridge regularization added to the weighted normal matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `λ = scale · tr(Ū W Ūᵀ) / p`, adapting to the data's magnitude.
    TraceScaled(f64),
    /// A fixed `λ`; zero gives the unregularized solution.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlsConfig {
    /// Floor (radians) applied to the spectral angle before taking its reciprocal.
    pub sad_epsilon: f64,
    pub ridge: Ridge,
    /// Exponent β in `w_k = 1 / SAD^β`.
    pub weight_exponent: f64,
    /// Solve bitwise-identical signatures once when rendering.
    pub dedup: bool,
}

impl Default for MlsConfig {
    fn default() -> Self {
        Self {
            sad_epsilon: 1e-8,
            ridge: Ridge::TraceScaled(1e-6),
            weight_exponent: 1.0,
            dedup: true,
        }
    }
}

impl MlsConfig {
    /// Default configuration without any ridge term.
    pub fn unregularized() -> Self {
        Self {
            ridge: Ridge::Fixed(0.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sad_epsilon > 0.0 && self.sad_epsilon.is_finite()) {
            return Err(Error::Invalid(format!("sad epsilon must be > 0, got {}", self.sad_epsilon)));
        }
        let lambda = match self.ridge {
            Ridge::TraceScaled(s) => s,
            Ridge::Fixed(l) => l,
        };
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Invalid(format!("ridge lambda must be >= 0, got {lambda}")));
        }
        if !(self.weight_exponent > 0.0 && self.weight_exponent.is_finite()) {
            return Err(Error::Invalid(format!(
                "weight exponent must be > 0, got {}",
                self.weight_exponent
            )));
        }
        Ok(())
    }
}

/// Per-signature affine map `f(x) = Fᵀ x + b` from band space to RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineColorMap {
    linear: DMatrix<f64>,
    translation: Vector3<f64>,
}

impl AffineColorMap {
    pub fn new(linear: DMatrix<f64>, translation: Vector3<f64>) -> Result<Self> {
        if linear.ncols() != 3 {
            return Err(Error::LengthMismatch {
                expected: 3,
                got: linear.ncols(),
            });
        }
        if linear.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("affine map entries must be finite".into()));
        }
        Ok(Self { linear, translation })
    }

    pub fn bands(&self) -> usize {
        self.linear.nrows()
    }

    /// The `p × 3` linear part `F`.
    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    /// The translation `b`.
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `Fᵀ x + b` without clamping.
    pub fn apply_unclamped(&self, x: &[f64]) -> Result<[f64; 3]> {
        if x.len() != self.bands() {
            return Err(Error::LengthMismatch {
                expected: self.bands(),
                got: x.len(),
            });
        }
        let mut y = [self.translation[0], self.translation[1], self.translation[2]];
        for (c, out) in y.iter_mut().enumerate() {
            *out += self.linear.column(c).iter().zip(x).map(|(f, v)| f * v).sum::<f64>();
        }
        Ok(y)
    }

    /// `Fᵀ x + b` clamped to the 8-bit range `[0, 255]`.
    pub fn apply(&self, x: &[f64]) -> Result<[f64; 3]> {
        Ok(self.apply_unclamped(x)?.map(clamp_channel))
    }
}

pub fn clamp_channel(v: f64) -> f64 {
    v.clamp(0.0, 255.0)
}

/// Free-function form of [`AffineColorMap::apply`].
pub fn apply_map(map: &AffineColorMap, x: &[f64]) -> Result<[f64; 3]> {
    map.apply(x)
}

/// Positive per-pair weights, the diagonal of `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Invalid("weight vector is empty".into()));
        }
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Invalid(format!("weights must be positive and finite, got {bad}")));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Spectral angle between two signatures, in `[0, π]`.
pub fn sad(x: &[f64], u: &[f64]) -> Result<f64> {
    if x.len() != u.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: u.len(),
        });
    }
    let (nx, nu) = (norm(x), norm(u));
    if nx == 0.0 || nu == 0.0 {
        return Err(Error::ZeroSignature("spectral angle argument".into()));
    }
    let xh: Vec<f64> = x.iter().map(|v| v / nx).collect();
    let uh: Vec<f64> = u.iter().map(|v| v / nu).collect();
    Ok(angle_between_units(&xh, &uh))
}

/// Angle between unit vectors as `2·atan2(|a − b|, |a + b|)`.
///
/// Unlike `acos(a·b)`, this resolves angles far below `√ε`, and is exactly
/// zero for bitwise-equal inputs.
#[inline]
fn angle_between_units(a: &[f64], b: &[f64]) -> f64 {
    let mut diff = [0.0; 4];
    let mut sum = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (mut dt, mut st) = (0.0, 0.0);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        dt += (x - y) * (x - y);
        st += (x + y) * (x + y);
    }
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            diff[i] += (x[i] - y[i]) * (x[i] - y[i]);
            sum[i] += (x[i] + y[i]) * (x[i] + y[i]);
        }
    }
    let d = (diff[0] + diff[1]) + (diff[2] + diff[3]) + dt;
    let s = (sum[0] + sum[1]) + (sum[2] + sum[3]) + st;
    2.0 * d.sqrt().atan2(s.sqrt())
}

#[inline]
fn weight_from_angle(angle: f64, cfg: &MlsConfig) -> f64 {
    let a = angle.max(cfg.sad_epsilon);
    if cfg.weight_exponent == 1.0 {
        1.0 / a
    } else {
        a.powf(-cfg.weight_exponent)
    }
}

/// `w_k = 1 / max(SAD(x, U_k), ε)^β` for every control pair.
pub fn weights(x: &[f64], set: &ControlPointSet, cfg: &MlsConfig) -> Result<WeightVector> {
    let w = set
        .iter()
        .map(|pair| sad(x, &pair.u).map(|angle| weight_from_angle(angle, cfg)))
        .collect::<Result<Vec<_>>>()?;
    WeightVector::new(w)
}

/// Weighted centroids `(ū, v̄)` of the control signatures and colors.
pub fn weighted_centroids(set: &ControlPointSet, w: &WeightVector) -> Result<(DVector<f64>, Vector3<f64>)> {
    if w.len() != set.len() {
        return Err(Error::LengthMismatch {
            expected: set.len(),
            got: w.len(),
        });
    }
    let total = w.sum();
    let mut u_bar = DVector::zeros(set.bands());
    let mut v_bar = Vector3::zeros();
    for (pair, &wk) in set.iter().zip(w.as_slice()) {
        for (acc, &u) in u_bar.iter_mut().zip(&pair.u) {
            *acc += wk * u;
        }
        v_bar += wk * Vector3::from(pair.v_f64());
    }
    Ok((u_bar / total, v_bar / total))
}

/// Solves the weighted least squares for the signature `x`.
pub fn solve_affine(x: &[f64], set: &ControlPointSet, cfg: &MlsConfig) -> Result<AffineColorMap> {
    cfg.validate()?;
    if x.len() != set.bands() {
        return Err(Error::LengthMismatch {
            expected: set.bands(),
            got: x.len(),
        });
    }
    let solver = Solver::new(set, cfg);
    let mut ws = Workspace::new(&solver);
    solver.solve(x, &mut ws)?;
    Ok(ws.to_map())
}

/// Weighted objective `Σ w_k |Fᵀ U_k + b − V_k|²` at `x` (the ridge term is not included).
pub fn objective(map: &AffineColorMap, x: &[f64], set: &ControlPointSet, cfg: &MlsConfig) -> Result<f64> {
    let w = weights(x, set, cfg)?;
    let mut total = 0.0;
    for (pair, &wk) in set.iter().zip(w.as_slice()) {
        let y = map.apply_unclamped(&pair.u)?;
        let v = pair.v_f64();
        total += wk * y.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

/// Unweighted color centroid, used for zero signatures where the angle is undefined.
pub fn mean_color(set: &ControlPointSet) -> [f64; 3] {
    let n = set.len() as f64;
    let mut acc = [0.0; 3];
    for pair in set {
        for (a, v) in acc.iter_mut().zip(pair.v_f64()) {
            *a += v;
        }
    }
    acc.map(|a| a / n)
}

/// Control data laid out for repeated solves.
pub(crate) struct Solver<'a> {
    cfg: &'a MlsConfig,
    bands: usize,
    n: usize,
    /// `p × n`, column k is `U_k`.
    u: DMatrix<f64>,
    /// `U` with unit-length columns.
    u_hat: DMatrix<f64>,
    /// `n × 3`, row k is `V_k`.
    v: DMatrix<f64>,
}

/// Scratch buffers reused across solves on one thread.
pub(crate) struct Workspace {
    x_hat: Vec<f64>,
    weights: Vec<f64>,
    /// `p × n` scaled, centered signatures `√w_k (U_k − ū)`.
    a: DMatrix<f64>,
    /// `n × 3` scaled, centered colors.
    b: DMatrix<f64>,
    normal: DMatrix<f64>,
    rhs: DMatrix<f64>,
    u_bar: DVector<f64>,
    v_bar: Vector3<f64>,
    linear: DMatrix<f64>,
    translation: Vector3<f64>,
}

impl Workspace {
    pub(crate) fn new(solver: &Solver<'_>) -> Self {
        let (p, n) = (solver.bands, solver.n);
        Self {
            x_hat: vec![0.0; p],
            weights: vec![0.0; n],
            a: DMatrix::zeros(p, n),
            b: DMatrix::zeros(n, 3),
            normal: DMatrix::zeros(p, p),
            rhs: DMatrix::zeros(p, 3),
            u_bar: DVector::zeros(p),
            v_bar: Vector3::zeros(),
            linear: DMatrix::zeros(p, 3),
            translation: Vector3::zeros(),
        }
    }

    fn to_map(&self) -> AffineColorMap {
        AffineColorMap {
            linear: self.linear.clone(),
            translation: self.translation,
        }
    }

    /// `Fᵀ x + b` for the last solve.
    pub(crate) fn evaluate(&self, x: &[f64]) -> [f64; 3] {
        let mut y = [self.translation[0], self.translation[1], self.translation[2]];
        for (c, out) in y.iter_mut().enumerate() {
            *out += self.linear.column(c).iter().zip(x).map(|(f, v)| f * v).sum::<f64>();
        }
        y
    }
}

/// Relative pivot below which an unregularized normal matrix counts as singular.
const SINGULAR_PIVOT: f64 = 1e-12;

/// Weighted spread `tr(Ū W Ūᵀ)`, relative to `Σ w_k |U_k|²`, that is
/// indistinguishable from centroid rounding error.
const NEGLIGIBLE_SPREAD: f64 = 1e-20;

impl<'a> Solver<'a> {
    pub(crate) fn new(set: &ControlPointSet, cfg: &'a MlsConfig) -> Self {
        let (p, n) = (set.bands(), set.len());
        let u = DMatrix::from_fn(p, n, |j, k| set.pairs()[k].u[j]);
        let v = DMatrix::from_fn(n, 3, |k, c| set.pairs()[k].v[c] as f64);
        let mut u_hat = u.clone();
        for mut col in u_hat.column_iter_mut() {
            let nu = norm(col.as_slice());
            col.iter_mut().for_each(|v| *v /= nu);
        }
        Self {
            cfg,
            bands: p,
            n,
            u,
            u_hat,
            v,
        }
    }

    /// Solves for `x`, leaving `F` and `b` in the workspace.
    pub(crate) fn solve(&self, x: &[f64], ws: &mut Workspace) -> Result<()> {
        let (p, n) = (self.bands, self.n);
        let x_norm = norm(x);
        if x_norm == 0.0 {
            return Err(Error::ZeroSignature("query signature".into()));
        }

        // Weights from spectral angles.
        for (h, &v) in ws.x_hat.iter_mut().zip(x) {
            *h = v / x_norm;
        }
        let u = self.u.as_slice();
        let u_hat = self.u_hat.as_slice();
        let mut total = 0.0;
        for k in 0..n {
            let w = weight_from_angle(angle_between_units(&u_hat[k * p..(k + 1) * p], &ws.x_hat), self.cfg);
            ws.weights[k] = w;
            total += w;
        }

        // Weighted centroids.
        let u_bar = ws.u_bar.as_mut_slice();
        u_bar.fill(0.0);
        ws.v_bar.fill(0.0);
        let mut energy = 0.0;
        for k in 0..n {
            let w = ws.weights[k];
            for (acc, &v) in u_bar.iter_mut().zip(&u[k * p..(k + 1) * p]) {
                *acc += w * v;
                energy += w * v * v;
            }
            for c in 0..3 {
                ws.v_bar[c] += w * self.v[(k, c)];
            }
        }
        u_bar.iter_mut().for_each(|v| *v /= total);
        ws.v_bar /= total;

        // Scaled, centered data: normal = Σ w_k Ū_k Ū_kᵀ, rhs = Σ w_k Ū_k V̄_kᵀ.
        let a = ws.a.as_mut_slice();
        for k in 0..n {
            let s = ws.weights[k].sqrt();
            for ((dst, &src), &m) in a[k * p..(k + 1) * p].iter_mut().zip(&u[k * p..(k + 1) * p]).zip(&*u_bar) {
                *dst = s * (src - m);
            }
            for c in 0..3 {
                ws.b[(k, c)] = s * (self.v[(k, c)] - ws.v_bar[c]);
            }
        }
        let pi = p as isize;
        // SAFETY: `a` is p×n column-major and `normal` is p×p; the strides
        // describe `a` and its transpose within the same allocation.
        unsafe {
            matrixmultiply::dgemm(
                p, n, p,
                1.0, a.as_ptr(), 1, pi, a.as_ptr(), pi, 1,
                0.0, ws.normal.as_mut_ptr(), 1, pi,
            );
        }
        let rhs = ws.rhs.as_mut_slice();
        rhs.fill(0.0);
        for k in 0..n {
            let col = &a[k * p..(k + 1) * p];
            for c in 0..3 {
                let bk = ws.b[(k, c)];
                for (r, &av) in rhs[c * p..(c + 1) * p].iter_mut().zip(col) {
                    *r += av * bk;
                }
            }
        }

        let trace = ws.normal.trace();
        let lambda = match self.cfg.ridge {
            Ridge::TraceScaled(s) => s * trace / p as f64,
            Ridge::Fixed(l) => l,
        };

        let ridge_active = match self.cfg.ridge {
            Ridge::TraceScaled(s) => s > 0.0,
            Ridge::Fixed(l) => l > 0.0,
        };
        if trace <= NEGLIGIBLE_SPREAD * energy {
            // The control signatures coincide up to rounding in the centroid,
            // so the centered data carry no information. F = 0 is the ridge
            // solution; without a ridge the system is singular.
            if !ridge_active {
                return Err(Error::Singular);
            }
            ws.linear.fill(0.0);
        } else {
            for j in 0..p {
                ws.normal[(j, j)] += lambda;
            }
            let max_diag = (0..p).map(|j| ws.normal[(j, j)]).fold(0.0, f64::max);
            if max_diag <= 0.0 {
                return Err(Error::Singular);
            }
            let chol = Cholesky::new(ws.normal.clone()).ok_or(Error::Singular)?;
            if lambda == 0.0 {
                let l = chol.l_dirty();
                let min_pivot = (0..p).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
                if min_pivot < SINGULAR_PIVOT * max_diag {
                    return Err(Error::Singular);
                }
            }
            ws.linear.copy_from(&ws.rhs);
            chol.solve_mut(&mut ws.linear);
        }

        ws.translation = ws.v_bar - ws.linear.tr_mul(&ws.u_bar).fixed_rows::<3>(0).into_owned();
        if ws.linear.iter().chain(ws.translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        Ok(())
    }
}
