//! Poincaré ball of curvature `-κ`, radius `1/√κ`.
//!
//! The typed API ([`PoincarePoint`], [`hdist`], [`hscale`], ...) checks its
//! inputs. The [`raw`] module works on plain slices and also provides the
//! vector-Jacobian products used by the trainer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest argument passed to `artanh`.
pub const ARTANH_CLAMP: f64 = 1.0 - 1e-12;
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid ball: {0}")]
    InvalidSpec(String),
    #[error("points live in different balls")]
    SpecMismatch,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("point with norm {norm} is outside the ball (limit {limit})")]
    OutsideBall { norm: f64, limit: f64 },
    #[error("non-finite coordinate")]
    NonFinite,
}

/// Dimension `2m`, curvature `κ` and the boundary margin kept by projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub dim: usize,
    pub kappa: f64,
    pub eps: f64,
}

impl BallSpec {
    pub fn new(dim: usize, kappa: f64, eps: f64) -> Result<Self, GeometryError> {
        let spec = BallSpec { dim, kappa, eps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn unit(dim: usize) -> Self {
        BallSpec::new(dim, 1.0, DEFAULT_EPS).expect("valid unit ball")
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(GeometryError::InvalidSpec(format!(
                "dimension must be even and positive, got {}",
                self.dim
            )));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(GeometryError::InvalidSpec(format!(
                "curvature must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.eps.is_finite() && self.eps > 0.0 && self.eps < self.radius()) {
            return Err(GeometryError::InvalidSpec(format!(
                "boundary margin must lie in (0, radius), got {}",
                self.eps
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        1.0 / self.kappa.sqrt()
    }

    /// Largest Euclidean norm a stored point may have.
    pub fn max_norm(&self) -> f64 {
        self.radius() - self.eps
    }

    pub fn rotation_pairs(&self) -> usize {
        self.dim / 2
    }
}

/// A point of the ball with norm at most `radius - eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincarePoint {
    coords: Vec<f64>,
    spec: BallSpec,
}

impl PoincarePoint {
    pub fn new(coords: Vec<f64>, spec: BallSpec) -> Result<Self, GeometryError> {
        if coords.len() != spec.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: spec.dim,
                found: coords.len(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let norm = raw::norm(&coords);
        if norm > spec.max_norm() {
            return Err(GeometryError::OutsideBall {
                norm,
                limit: spec.max_norm(),
            });
        }
        Ok(PoincarePoint { coords, spec })
    }

    pub(crate) fn from_raw(coords: Vec<f64>, spec: BallSpec) -> Self {
        debug_assert_eq!(coords.len(), spec.dim);
        PoincarePoint { coords, spec }
    }

    pub fn origin(spec: BallSpec) -> Self {
        PoincarePoint {
            coords: vec![0.0; spec.dim],
            spec,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn spec(&self) -> BallSpec {
        self.spec
    }

    pub fn euclidean_norm(&self) -> f64 {
        raw::norm(&self.coords)
    }

    pub fn is_origin(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }
}

/// Per-pair rotation angles `θ_1..θ_m` in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationAngles(pub Vec<f64>);

impl RotationAngles {
    pub fn zeros(m: usize) -> Self {
        RotationAngles(vec![0.0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn same_spec(x: &PoincarePoint, y: &PoincarePoint) -> Result<(), GeometryError> {
    if x.spec != y.spec {
        return Err(GeometryError::SpecMismatch);
    }
    Ok(())
}

/// Hyperbolic distance.
pub fn hdist(x: &PoincarePoint, y: &PoincarePoint) -> Result<f64, GeometryError> {
    same_spec(x, y)?;
    Ok(raw::dist(&x.coords, &y.coords, x.spec.kappa))
}

/// Hyperbolic distance to the origin.
pub fn hnorm(x: &PoincarePoint) -> f64 {
    raw::hnorm(&x.coords, x.spec.kappa)
}

/// Scaling product `k ⊙ x`, moving `x` along its ray from the origin.
///
/// For `κ ≠ 1` the unit-ball formula is applied to `√κ·x` and the result is
/// mapped back. The result is clamped to the stored-point margin. The origin
/// maps to itself for every `k`.
pub fn hscale(k: f64, x: &PoincarePoint) -> PoincarePoint {
    PoincarePoint::from_raw(raw::scale(k, &x.coords, &x.spec), x.spec)
}

/// Block-diagonal rotation, one 2×2 block per coordinate pair.
pub fn hrotate(angles: &RotationAngles, x: &PoincarePoint) -> Result<PoincarePoint, GeometryError> {
    if 2 * angles.len() != x.spec.dim {
        return Err(GeometryError::DimensionMismatch {
            expected: x.spec.dim / 2,
            found: angles.len(),
        });
    }
    Ok(PoincarePoint::from_raw(raw::rotate(&angles.0, &x.coords), x.spec))
}

/// Maps an arbitrary vector into the ball: `(radius - eps)·tanh(‖v‖)·v/‖v‖`.
pub fn project_to_ball(v: &[f64], spec: BallSpec) -> Result<PoincarePoint, GeometryError> {
    if v.len() != spec.dim {
        return Err(GeometryError::DimensionMismatch {
            expected: spec.dim,
            found: v.len(),
        });
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    Ok(PoincarePoint::from_raw(raw::project(v, &spec), spec))
}

/// Slice-level kernels and their vector-Jacobian products.
pub mod raw {
    use super::{BallSpec, ARTANH_CLAMP};

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn sq_norm(a: &[f64]) -> f64 {
        dot(a, a)
    }

    pub fn norm(a: &[f64]) -> f64 {
        sq_norm(a).sqrt()
    }

    fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// `1 - κ‖x‖²`, floored so points on the boundary stay finite.
    fn conformal(x: &[f64], kappa: f64) -> f64 {
        (1.0 - kappa * sq_norm(x)).max(f64::MIN_POSITIVE)
    }

    /// `arcosh(1 + t) / √κ` evaluated as `ln(1 + t + √(t(2+t))) / √κ`, which
    /// stays accurate for small `t`.
    fn acosh1p(t: f64) -> f64 {
        let t = t.max(0.0);
        (t + (t * (2.0 + t)).sqrt()).ln_1p()
    }

    pub fn dist(x: &[f64], y: &[f64], kappa: f64) -> f64 {
        let t = 2.0 * kappa * sq_dist(x, y) / (conformal(x, kappa) * conformal(y, kappa));
        acosh1p(t) / kappa.sqrt()
    }

    pub fn hnorm(x: &[f64], kappa: f64) -> f64 {
        let zero = vec![0.0; x.len()];
        dist(x, &zero, kappa)
    }

    /// Distance plus its gradients with respect to both points. At `x = y`
    /// the distance is not differentiable and both gradients are zero.
    pub fn dist_grad(x: &[f64], y: &[f64], kappa: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let a = sq_dist(x, y);
        let bx = conformal(x, kappa);
        let by = conformal(y, kappa);
        let t = 2.0 * kappa * a / (bx * by);
        let d = acosh1p(t) / kappa.sqrt();
        let n = x.len();
        if t <= 0.0 {
            return (d, vec![0.0; n], vec![0.0; n]);
        }
        let dd_dt = 1.0 / (kappa.sqrt() * (t * (2.0 + t)).sqrt());
        let c_diff = 4.0 * kappa / (bx * by);
        let cx = 4.0 * kappa * kappa * a / (bx * bx * by);
        let cy = 4.0 * kappa * kappa * a / (bx * by * by);
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        for i in 0..n {
            let diff = x[i] - y[i];
            gx[i] = dd_dt * (c_diff * diff + cx * x[i]);
            gy[i] = dd_dt * (-c_diff * diff + cy * y[i]);
        }
        (d, gx, gy)
    }

    pub fn hnorm_grad(x: &[f64], kappa: f64) -> (f64, Vec<f64>) {
        let zero = vec![0.0; x.len()];
        let (d, gx, _) = dist_grad(x, &zero, kappa);
        (d, gx)
    }

    pub fn rotate(angles: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (i, &theta) in angles.iter().enumerate() {
            let (s, c) = theta.sin_cos();
            let (x0, x1) = (x[2 * i], x[2 * i + 1]);
            out[2 * i] = c * x0 - s * x1;
            out[2 * i + 1] = s * x0 + c * x1;
        }
        out
    }

    /// Returns (∂/∂x, ∂/∂θ) given the upstream gradient `g` of the output.
    pub fn rotate_backward(angles: &[f64], x: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gx = vec![0.0; x.len()];
        let mut gtheta = vec![0.0; angles.len()];
        for (i, &theta) in angles.iter().enumerate() {
            let (s, c) = theta.sin_cos();
            let (x0, x1) = (x[2 * i], x[2 * i + 1]);
            let (g0, g1) = (g[2 * i], g[2 * i + 1]);
            gx[2 * i] = c * g0 + s * g1;
            gx[2 * i + 1] = -s * g0 + c * g1;
            gtheta[i] = g0 * (-s * x0 - c * x1) + g1 * (c * x0 - s * x1);
        }
        (gx, gtheta)
    }

    struct ScaleParts {
        n: f64,
        root_kappa: f64,
        u: f64,
        u_clamped: bool,
        at: f64,
        t: f64,
        t_clamped: bool,
    }

    fn scale_parts(k: f64, x: &[f64], spec: &BallSpec) -> Option<ScaleParts> {
        let n = norm(x);
        if n == 0.0 {
            return None;
        }
        let root_kappa = spec.kappa.sqrt();
        let u_raw = root_kappa * n;
        let u_clamped = u_raw > ARTANH_CLAMP;
        let u = u_raw.min(ARTANH_CLAMP);
        let at = u.atanh();
        let t_raw = (k * at).tanh();
        // rescaled-coordinate limit that corresponds to radius - eps
        let t_max = 1.0 - root_kappa * spec.eps;
        let t_clamped = t_raw.abs() > t_max;
        let t = if t_clamped { t_max.copysign(t_raw) } else { t_raw };
        Some(ScaleParts {
            n,
            root_kappa,
            u,
            u_clamped,
            at,
            t,
            t_clamped,
        })
    }

    pub fn scale(k: f64, x: &[f64], spec: &BallSpec) -> Vec<f64> {
        match scale_parts(k, x, spec) {
            None => vec![0.0; x.len()],
            Some(p) => {
                let psi = p.t / (p.root_kappa * p.n);
                x.iter().map(|v| psi * v).collect()
            }
        }
    }

    /// Returns (∂/∂x, ∂/∂k) given the upstream gradient `g` of `k ⊙ x`.
    pub fn scale_backward(k: f64, x: &[f64], spec: &BallSpec, g: &[f64]) -> (Vec<f64>, f64) {
        let Some(p) = scale_parts(k, x, spec) else {
            // near the origin k ⊙ x ≈ k·x
            return (g.iter().map(|v| k * v).collect(), 0.0);
        };
        let rk_n = p.root_kappa * p.n;
        let psi = p.t / rk_n;
        let dt_du = if p.t_clamped {
            0.0
        } else {
            (1.0 - p.t * p.t) * k / (1.0 - p.u * p.u)
        };
        let du_dn = if p.u_clamped { 0.0 } else { p.root_kappa };
        let dpsi_dn = dt_du * du_dn / rk_n - p.t / (rk_n * p.n);
        let xg = dot(x, g);
        let gx = x
            .iter()
            .zip(g)
            .map(|(xi, gi)| psi * gi + dpsi_dn * xg / p.n * xi)
            .collect();
        let dt_dk = if p.t_clamped { 0.0 } else { (1.0 - p.t * p.t) * p.at };
        (gx, xg / rk_n * dt_dk)
    }

    fn project_factor(n: f64, s: f64) -> (f64, f64) {
        if n < 1e-4 {
            let n2 = n * n;
            (
                s * (1.0 - n2 / 3.0 + 2.0 * n2 * n2 / 15.0),
                s * (-2.0 * n / 3.0 + 8.0 * n2 * n / 15.0),
            )
        } else {
            let th = n.tanh();
            let sech2 = 1.0 - th * th;
            (s * th / n, s * (n * sech2 - th) / (n * n))
        }
    }

    pub fn project(v: &[f64], spec: &BallSpec) -> Vec<f64> {
        let n = norm(v);
        if n == 0.0 {
            return vec![0.0; v.len()];
        }
        let (phi, _) = project_factor(n, spec.max_norm());
        v.iter().map(|x| phi * x).collect()
    }

    pub fn project_backward(v: &[f64], spec: &BallSpec, g: &[f64]) -> Vec<f64> {
        let s = spec.max_norm();
        let n = norm(v);
        if n == 0.0 {
            return g.iter().map(|x| s * x).collect();
        }
        let (phi, dphi) = project_factor(n, s);
        let vg = dot(v, g);
        v.iter()
            .zip(g)
            .map(|(vi, gi)| phi * gi + dphi * vg / n * vi)
            .collect()
    }
}
