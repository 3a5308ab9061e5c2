//! Energy bounds for the axially symmetric problem: the explicit competitor
//! `u₀` with two boundary defects, the level-set coordinate machinery, and
//! the lower bound obtained from it.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{UnitVec3, Vec3};
use crate::quad::{integrate, integrate_pieces, QuadError};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("level value c = {0} must lie in (-1, 1) and be nonzero")]
    Level(f64),
    #[error("c1 = {0} must be positive")]
    C1(f64),
    #[error("level-set integration unstable at t = {t}: lambda_rho = {lambda}")]
    Unstable { t: f64, lambda: f64 },
    #[error("degenerate gradient of u_rho at ({rho}, {z}): |grad| = {norm:e}")]
    Degenerate { rho: f64, z: f64, norm: f64 },
    #[error("no point on the level u_rho = {c} along z = {z}")]
    NoStart { c: f64, z: f64 },
    #[error("invalid parameter: {0}")]
    Param(&'static str),
}

/// `E(u₀) = 5π − π³/4`.
pub fn upper_bound_exact() -> f64 {
    5.0 * PI - PI.powi(3) / 4.0
}

/// `(4/3)π(2√2 − 1)`.
pub fn lower_bound_exact() -> f64 {
    4.0 / 3.0 * PI * (2.0 * 2f64.sqrt() - 1.0)
}

/// Unnormalized `u₀` in Cartesian components and the squared norm of that
/// vector.
fn u0_raw(x: Vec3) -> (Vec3, f64) {
    let rho2 = x.x1 * x.x1 + x.x2 * x.x2;
    let z = x.x3;
    let v = Vec3::new(-2.0 * z * x.x1, -2.0 * z * x.x2, rho2 - z * z + 1.0);
    (v, v.norm_sq())
}

/// The competitor `u₀ = ((ρ²−z²+1)e_z − 2zρ e_ρ)/|·|`. At the poles, where
/// the numerator vanishes, the axial limit `e₃` is returned.
pub fn competitor_u0(x: Vec3) -> UnitVec3 {
    let (v, n2) = u0_raw(x);
    if n2 == 0.0 {
        return UnitVec3::new(Vec3::E3).expect("unit");
    }
    UnitVec3::normalize(v).expect("nonzero")
}

/// `ψ₀ = atan2(−2zρ, ρ² − z² + 1)`, so that `u₀ = sin ψ₀ e_ρ + cos ψ₀ e_z`.
pub fn psi0(rho: f64, z: f64) -> f64 {
    (-2.0 * z * rho).atan2(rho * rho - z * z + 1.0)
}

/// `|∇u₀|² = (4ρ² + 8z²)/(ρ⁴ + 2ρ²z² + 2ρ² + z⁴ − 2z² + 1)`; `+∞` at the
/// poles `(0, ±1)`.
pub fn grad_norm_sq_u0(rho: f64, z: f64) -> f64 {
    let (r2, z2) = (rho * rho, z * z);
    let den = r2 * r2 + 2.0 * r2 * z2 + 2.0 * r2 + z2 * z2 - 2.0 * z2 + 1.0;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (4.0 * r2 + 8.0 * z2) / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpperBound {
    pub exact: f64,
    /// Extrapolated quadrature of `E(u₀)`.
    pub quadrature: f64,
    /// `∫|∇u₀|²` without the factor ½, and its closed form `10π − π³/2`.
    pub gradient_integral: f64,
    pub gradient_integral_exact: f64,
    /// `(ε, energy outside the pole disks of radius ε)`.
    pub samples: Vec<(f64, f64)>,
}

pub const POLE_RADII: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// `π ∫∫ |∇u₀|² ρ dρ dz` over the half-disk with the disks of radius `eps`
/// about `(0, ±1)` removed.
pub fn u0_energy_excluding_poles(eps: f64) -> Result<f64, BoundsError> {
    let inner = |z: f64| -> Result<f64, QuadError> {
        let hi = (1.0 - z * z).max(0.0).sqrt();
        let dz = 1.0 - z.abs();
        let lo = if dz < eps { (eps * eps - dz * dz).max(0.0).sqrt() } else { 0.0 };
        if hi <= lo {
            return Ok(0.0);
        }
        integrate(|r| grad_norm_sq_u0(r, z) * r, lo, hi, 1e-13, 1e-11, 4000).map(|q| q.value)
    };
    let mut err = None;
    let outer = integrate_pieces(
        |z| match inner(z) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        &[-1.0, -1.0 + eps, -1.0 + 0.25, 0.0, 1.0 - 0.25, 1.0 - eps, 1.0],
        1e-11,
        1e-11,
        4000,
    )?;
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(PI * outer.value)
}

/// Three-level Richardson extrapolation for samples at `ε, ε/2, ε/4`,
/// removing the `O(ε)` and `O(ε²)` terms.
fn richardson(v: [f64; 3]) -> f64 {
    let r1 = 2.0 * v[1] - v[0];
    let r2 = 2.0 * v[2] - v[1];
    (4.0 * r2 - r1) / 3.0
}

pub fn upper_bound() -> Result<UpperBound, BoundsError> {
    let mut vals = [0.0; 3];
    let mut samples = Vec::with_capacity(3);
    for (k, &eps) in POLE_RADII.iter().enumerate() {
        vals[k] = u0_energy_excluding_poles(eps)?;
        samples.push((eps, vals[k]));
    }
    let quadrature = richardson(vals);
    let exact = upper_bound_exact();
    Ok(UpperBound {
        exact,
        quadrature,
        gradient_integral: 2.0 * quadrature,
        gradient_integral_exact: 10.0 * PI - PI.powi(3) / 2.0,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub exact: f64,
    /// `2π ∫₋₁¹ √(c²(2−c²)) dc` by quadrature.
    pub quadrature: f64,
    pub integral: f64,
    /// `(2/3)(2√2 − 1)`.
    pub integral_exact: f64,
}

pub fn lower_bound_integrand(c: f64) -> f64 {
    (c * c * (2.0 - c * c)).max(0.0).sqrt()
}

pub fn lower_bound() -> Result<LowerBound, BoundsError> {
    let q = integrate_pieces(lower_bound_integrand, &[-1.0, 0.0, 1.0], 1e-14, 1e-14, 200)?;
    Ok(LowerBound {
        exact: lower_bound_exact(),
        quadrature: 2.0 * PI * q.value,
        integral: q.value,
        integral_exact: 2.0 / 3.0 * (2.0 * 2f64.sqrt() - 1.0),
    })
}

/// Constants of one level `u_ρ = c` of the axially symmetric minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetParams {
    pub c: f64,
    /// `α = c(1 − c²)`, the constant value of `λ_ρ λ̇_z`.
    pub alpha: f64,
    /// `b = (3/4) α c³`.
    pub b: f64,
    pub c1: f64,
    /// `c₂ = −√(108 b³ / c₁⁴)`.
    pub c2: f64,
    /// Starting height `λ_z(0)` on the axis.
    pub z0: f64,
}

impl LevelSetParams {
    /// Default `c₁ = 9b / (2√(1−c²))`, which puts the end of the explicit
    /// branch at `λ_ρ = 2√(1−c²)`.
    pub fn new(c: f64) -> Result<Self, BoundsError> {
        if !(c.abs() < 1.0) || c == 0.0 {
            return Err(BoundsError::Level(c));
        }
        let b = 0.75 * c.powi(4) * (1.0 - c * c);
        Self::with_c1(c, 9.0 * b / (2.0 * (1.0 - c * c).sqrt()))
    }

    pub fn with_c1(c: f64, c1: f64) -> Result<Self, BoundsError> {
        if !(c.abs() < 1.0) || c == 0.0 {
            return Err(BoundsError::Level(c));
        }
        if !(c1 > 0.0) {
            return Err(BoundsError::C1(c1));
        }
        let alpha = c * (1.0 - c * c);
        let b = 0.75 * alpha * c.powi(3);
        let c2 = -(108.0 * b.powi(3) / c1.powi(4)).sqrt();
        Ok(LevelSetParams { c, alpha, b, c1, c2, z0: 0.0 })
    }

    pub fn with_z0(mut self, z0: f64) -> Self {
        self.z0 = z0;
        self
    }

    /// Constant `K` of the first integral `(λ_ρ λ̇_ρ)² = K λ_ρ + 4b/3`.
    pub fn k(&self) -> f64 {
        4.0 * self.c1 / 9.0
    }

    /// `λ_ρ ≈ a √t` near the axis, `a = 2√6 b / (c₁ √|c₂|)`.
    pub fn leading_coefficient(&self) -> f64 {
        2.0 * 6f64.sqrt() * self.b / (self.c1 * self.c2.abs().sqrt())
    }

    /// `(c₂ + t)² − (1/c₁)(λ + 3b/c₁)(λ − 6b/c₁)²`.
    pub fn implicit_residual(&self, t: f64, lambda: f64) -> f64 {
        let (b, c1) = (self.b, self.c1);
        (self.c2 + t).powi(2) - (lambda + 3.0 * b / c1) * (lambda - 6.0 * b / c1).powi(2) / c1
    }

    /// Closed-form `λ_ρ(t)` on `0 < t < −2c₂`, using the branch of the
    /// angle that is continuous on the whole interval.
    pub fn explicit_lambda(&self, t: f64) -> Option<f64> {
        let c2 = self.c2;
        if !(t > 0.0 && t < -2.0 * c2) {
            return None;
        }
        let s = c2 + t;
        let mut theta = (-s * (t * (-2.0 * c2 - t)).sqrt()).atan2(s * s - c2 * c2 / 2.0);
        if theta < 0.0 {
            theta += 2.0 * PI;
        }
        let third = theta / 3.0;
        Some(3.0 * self.b / self.c1 * (1.0 - third.cos() + 3f64.sqrt() * third.sin()))
    }

    /// Limit of `tan ς = λ̇_ρ/λ̇_z` at the axis, `c/√(1−c²)`.
    pub fn departure_tan(&self) -> f64 {
        self.c / (1.0 - self.c * self.c).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetPoint {
    pub t: f64,
    pub lambda_rho: f64,
    pub lambda_z: f64,
    pub dot_rho: f64,
    pub dot_z: f64,
    pub implicit_residual: f64,
    pub explicit_lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelSetStop {
    /// The curve left the closed half-disk.
    Exited,
    /// `t_end` was reached inside the half-disk.
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct LevelSetTrajectory {
    pub params: LevelSetParams,
    pub points: Vec<LevelSetPoint>,
    pub stop: LevelSetStop,
    pub max_implicit_residual: f64,
    pub max_explicit_deviation: f64,
    /// `λ̇_ρ/λ̇_z` at the first point.
    pub departure_tan: f64,
}

/// First recorded point of the series segment, in `σ = √t`.
const SIGMA_FIRST: f64 = 1e-6;
const SERIES_TERMS: usize = 16;
/// Series points recorded per decade of `σ`.
const SERIES_POINTS_PER_DECADE: usize = 20;

fn series_sqrt(s: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; s.len()];
    r[0] = s[0].sqrt();
    for k in 1..s.len() {
        let cross: f64 = (1..k).map(|i| r[i] * r[k - i]).sum();
        r[k] = (s[k] - cross) / (2.0 * r[0]);
    }
    r
}

fn series_recip(p: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; p.len()];
    r[0] = 1.0 / p[0];
    for k in 1..p.len() {
        r[k] = -(1..=k).map(|i| p[i] * r[k - i]).sum::<f64>() / p[0];
    }
    r
}

/// Coefficients `p_k` with `λ_ρ = σ Σ p_k σ^k`, from `λ_ρ λ_ρ' = 2σ √(β² + Kλ_ρ)`.
fn bootstrap_series(p: &LevelSetParams) -> Vec<f64> {
    let beta2 = 4.0 * p.b / 3.0;
    let k = p.k();
    let mut coef = vec![0.0; SERIES_TERMS];
    coef[0] = (4.0 * beta2.sqrt() / 2.0).sqrt();
    for _ in 0..SERIES_TERMS {
        let mut inside = vec![0.0; SERIES_TERMS];
        inside[0] = beta2;
        for j in 1..SERIES_TERMS {
            inside[j] = k * coef[j - 1];
        }
        let q = series_sqrt(&inside);
        let sq: Vec<f64> = (0..SERIES_TERMS).map(|j| 4.0 * q[j] / (j as f64 + 2.0)).collect();
        coef = series_sqrt(&sq);
    }
    coef
}

fn eval_series(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Integrates the level-set ODE `λ̈_ρ = −λ̇_ρ²/(2λ_ρ) − (2b/3)/λ_ρ³`,
/// `λ_ρ λ̇_z = α`, from the axis. The singular start is covered by a power
/// series in `σ = √t` (recorded from `t = 10⁻¹²`); classical RK4 in `σ`
/// takes over inside the series' disk of convergence, with `steps`
/// uniform steps over `[0, √t_end]` and smaller steps while `σ` is small. Stops when the curve leaves
/// the half-disk or at `t_end`.
pub fn level_set_ode_solve(
    p: &LevelSetParams,
    t_end: f64,
    steps: usize,
) -> Result<LevelSetTrajectory, BoundsError> {
    let coef = bootstrap_series(p);
    let recip = series_recip(&coef);
    // The series converges for λ_ρ < 3b/c₁; hand over well inside that.
    let s_switch = (0.05 * 3.0 * p.b / p.c1 / coef[0]).min(t_end.sqrt());
    if !(t_end > SIGMA_FIRST * SIGMA_FIRST) || steps == 0 {
        return Err(BoundsError::Param("t_end must exceed the bootstrap time and steps must be positive"));
    }
    let series_state = |s: f64| -> [f64; 3] {
        let lam = s * eval_series(&coef, s);
        let dlam: f64 = coef
            .iter()
            .enumerate()
            .map(|(k, c)| (k as f64 + 1.0) * c * s.powi(k as i32))
            .sum();
        // λ_z = z0 + 2α ∫ 1/P dσ
        let z_int: f64 = recip
            .iter()
            .enumerate()
            .map(|(k, r)| r * s.powi(k as i32 + 1) / (k as f64 + 1.0))
            .sum();
        [lam, dlam, p.z0 + 2.0 * p.alpha * z_int]
    };
    let (b, alpha) = (p.b, p.alpha);
    // State (λ, λ', λ_z) in σ.
    let rhs = |s: f64, y: [f64; 3]| -> [f64; 3] {
        let (l, dl) = (y[0], y[1]);
        [
            dl,
            dl / s - dl * dl / (2.0 * l) - 8.0 * b * s * s / (3.0 * l.powi(3)),
            2.0 * s * alpha / l,
        ]
    };
    let point = |s: f64, y: [f64; 3]| -> LevelSetPoint {
        let t = s * s;
        let dot_rho = y[1] / (2.0 * s);
        LevelSetPoint {
            t,
            lambda_rho: y[0],
            lambda_z: y[2],
            dot_rho,
            dot_z: alpha / y[0],
            implicit_residual: p.implicit_residual(t, y[0]),
            explicit_lambda: p.explicit_lambda(t),
        }
    };

    let s_end = t_end.sqrt();
    let h_max = s_end / steps as f64;
    let mut points = Vec::new();
    let decades = (s_switch / SIGMA_FIRST).log10().max(0.0);
    let n_series = (decades * SERIES_POINTS_PER_DECADE as f64).ceil() as usize;
    for k in 0..n_series {
        let s = SIGMA_FIRST * (s_switch / SIGMA_FIRST).powf(k as f64 / n_series as f64);
        points.push(point(s, series_state(s)));
    }
    let mut s = s_switch;
    let mut y = series_state(s);
    points.push(point(s, y));
    let mut stop = LevelSetStop::TimeLimit;
    while s < s_end {
        let h = h_max.min(0.01 * s).min(s_end - s);
        let k1 = rhs(s, y);
        let add = |y: [f64; 3], k: [f64; 3], f: f64| [y[0] + f * k[0], y[1] + f * k[1], y[2] + f * k[2]];
        let k2 = rhs(s + h / 2.0, add(y, k1, h / 2.0));
        let k3 = rhs(s + h / 2.0, add(y, k2, h / 2.0));
        let k4 = rhs(s + h, add(y, k3, h));
        for i in 0..3 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        s += h;
        if !(y[0] > 0.0) || !y[0].is_finite() {
            return Err(BoundsError::Unstable { t: s * s, lambda: y[0] });
        }
        points.push(point(s, y));
        if y[0] * y[0] + y[2] * y[2] > 1.0 {
            stop = LevelSetStop::Exited;
            break;
        }
    }

    let max_implicit_residual = points.iter().map(|q| q.implicit_residual.abs()).fold(0.0, f64::max);
    let max_explicit_deviation = points
        .iter()
        .filter_map(|q| q.explicit_lambda.map(|e| (e - q.lambda_rho).abs()))
        .fold(0.0, f64::max);
    let first = points[0];
    Ok(LevelSetTrajectory {
        params: *p,
        departure_tan: first.dot_rho / first.dot_z,
        points,
        stop,
        max_implicit_residual,
        max_explicit_deviation,
    })
}

/// A scalar `u_ρ(ρ, z)` with an analytic gradient, used to build level-set
/// coordinates.
pub trait LevelSetFixture {
    fn value(&self, rho: f64, z: f64) -> f64;
    /// `(∂_ρ, ∂_z)`.
    fn gradient(&self, rho: f64, z: f64) -> (f64, f64);
}

/// `u_ρ = ρ`.
#[derive(Debug, Clone, Copy)]
pub struct LinearRho;

impl LevelSetFixture for LinearRho {
    fn value(&self, rho: f64, _z: f64) -> f64 {
        rho
    }
    fn gradient(&self, _rho: f64, _z: f64) -> (f64, f64) {
        (1.0, 0.0)
    }
}

/// `u_ρ = ρ(1 − z²)/2`.
#[derive(Debug, Clone, Copy)]
pub struct RhoTimesProfile;

impl LevelSetFixture for RhoTimesProfile {
    fn value(&self, rho: f64, z: f64) -> f64 {
        0.5 * rho * (1.0 - z * z)
    }
    fn gradient(&self, rho: f64, z: f64) -> (f64, f64) {
        (0.5 * (1.0 - z * z), -rho * z)
    }
}

/// Patch of `(t, c)` coordinates: levels `c_lo..=c_hi` start on the line
/// `z = z_start` and are flowed along `∇^⊥u_ρ = (−∂_z u_ρ, ∂_ρ u_ρ)` for
/// `0 ≤ t ≤ t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianPatch {
    pub c_lo: f64,
    pub c_hi: f64,
    pub n_c: usize,
    pub z_start: f64,
    pub t_end: f64,
    pub steps: usize,
}

fn start_point<F: LevelSetFixture>(f: &F, c: f64, z: f64) -> Result<f64, BoundsError> {
    // Bisection for u_ρ(ρ, z) = c on ρ ∈ [0, 1].
    let g = |r: f64| f.value(r, z) - c;
    let (mut lo, mut hi) = (0.0, 1.0);
    if g(lo) * g(hi) > 0.0 {
        return Err(BoundsError::NoStart { c, z });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(lo) * g(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn flow_level<F: LevelSetFixture>(
    f: &F,
    c: f64,
    patch: &JacobianPatch,
) -> Result<Vec<(f64, f64)>, BoundsError> {
    let field = |p: (f64, f64)| -> Result<(f64, f64), BoundsError> {
        let (gr, gz) = f.gradient(p.0, p.1);
        let norm = gr.hypot(gz);
        if norm < 1e-8 {
            return Err(BoundsError::Degenerate { rho: p.0, z: p.1, norm });
        }
        Ok((-gz, gr))
    };
    let mut p = (start_point(f, c, patch.z_start)?, patch.z_start);
    let dt = patch.t_end / patch.steps as f64;
    let mut out = Vec::with_capacity(patch.steps + 1);
    out.push(p);
    for _ in 0..patch.steps {
        let k1 = field(p)?;
        let k2 = field((p.0 + 0.5 * dt * k1.0, p.1 + 0.5 * dt * k1.1))?;
        let k3 = field((p.0 + 0.5 * dt * k2.0, p.1 + 0.5 * dt * k2.1))?;
        let k4 = field((p.0 + dt * k3.0, p.1 + dt * k3.1))?;
        p = (
            p.0 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            p.1 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        );
        out.push(p);
    }
    Ok(out)
}

/// Builds `Φ(t, c)` on the patch and returns the largest deviation of the
/// central-difference `det ∇Φ` from `−1` over interior samples.
pub fn levelset_jacobian_check<F: LevelSetFixture>(
    f: &F,
    patch: &JacobianPatch,
) -> Result<f64, BoundsError> {
    if patch.n_c < 2 || patch.steps < 2 || !(patch.c_hi > patch.c_lo) || !(patch.t_end > 0.0) {
        return Err(BoundsError::Param("patch needs n_c >= 2, steps >= 2 and a nonempty range"));
    }
    let dc = (patch.c_hi - patch.c_lo) / patch.n_c as f64;
    let dt = patch.t_end / patch.steps as f64;
    let levels: Vec<Vec<(f64, f64)>> = (0..=patch.n_c)
        .map(|m| flow_level(f, patch.c_lo + m as f64 * dc, patch))
        .collect::<Result<_, _>>()?;
    let mut worst: f64 = 0.0;
    for m in 1..patch.n_c {
        for k in 1..patch.steps {
            let phi_t = (
                (levels[m][k + 1].0 - levels[m][k - 1].0) / (2.0 * dt),
                (levels[m][k + 1].1 - levels[m][k - 1].1) / (2.0 * dt),
            );
            let phi_c = (
                (levels[m + 1][k].0 - levels[m - 1][k].0) / (2.0 * dc),
                (levels[m + 1][k].1 - levels[m - 1][k].1) / (2.0 * dc),
            );
            let det = phi_t.0 * phi_c.1 - phi_t.1 * phi_c.0;
            worst = worst.max((det + 1.0).abs());
        }
    }
    Ok(worst)
}

/// One row of the level-set table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetRow {
    pub c: f64,
    pub alpha: f64,
    pub b: f64,
    /// Departure angle `ς` in radians, from the first integrated point.
    pub departure_angle: f64,
    pub implicit_residual: f64,
}

pub fn level_set_row(c: f64, t_end: f64, steps: usize) -> Result<LevelSetRow, BoundsError> {
    let p = LevelSetParams::new(c)?;
    let tr = level_set_ode_solve(&p, t_end, steps)?;
    Ok(LevelSetRow {
        c,
        alpha: p.alpha,
        b: p.b,
        departure_angle: tr.departure_tan.atan(),
        implicit_residual: tr.max_implicit_residual,
    })
}

pub const LEVEL_SET_CSV_HEADER: &str = "c,alpha,b,departure_angle,implicit_residual";

pub fn level_set_csv(rows: &[LevelSetRow]) -> String {
    let mut s = String::from(LEVEL_SET_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:.6},{:.16e},{:.16e},{:.16e},{:.6e}",
            r.c, r.alpha, r.b, r.departure_angle, r.implicit_residual
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::to_cylindrical;
    use proptest::prelude::*;

    #[test]
    fn exact_constants() {
        assert!((upper_bound_exact() - 7.956_394_098).abs() < 1e-9);
        assert!((lower_bound_exact() - 7.658_897_630).abs() < 1e-9);
    }

    #[test]
    fn competitor_values() {
        assert_eq!(competitor_u0(Vec3::ZERO).get(), Vec3::E3);
        assert!((competitor_u0(Vec3::E1).get() - Vec3::E3).norm() < 1e-15);
        assert_eq!(competitor_u0(Vec3::E3).get(), Vec3::E3);
        let s = 0.5f64.sqrt();
        let x = Vec3::new(s, 0.0, s);
        assert!(competitor_u0(x).get().dot(x).abs() < 1e-14);
    }

    #[test]
    fn psi0_matches_competitor() {
        for &(r, z) in &[(0.3, 0.2), (0.7, -0.5), (0.1, 0.9)] {
            let u = competitor_u0(Vec3::new(r, 0.0, z)).get();
            let p = psi0(r, z);
            assert!((u.x1 - p.sin()).abs() < 1e-14 && (u.x3 - p.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_norm_special_points() {
        assert_eq!(grad_norm_sq_u0(0.0, 0.0), 0.0);
        assert_eq!(grad_norm_sq_u0(0.0, 1.0), f64::INFINITY);
        assert_eq!(grad_norm_sq_u0(0.0, -1.0), f64::INFINITY);
    }

    fn fd_grad_sq(x: Vec3) -> f64 {
        let h = 1e-5;
        (0..3)
            .map(|i| {
                let e = Vec3::basis(i) * h;
                let d = (competitor_u0(x + e).get() - competitor_u0(x - e).get()) * (0.5 / h);
                d.norm_sq()
            })
            .sum()
    }

    proptest! {
        #[test]
        fn gradient_norm_matches_finite_differences(
            x in -0.9f64..0.9, y in -0.9f64..0.9, z in -0.9f64..0.9
        ) {
            let p = Vec3::new(x, y, z);
            prop_assume!(p.norm() < 0.95);
            let c = to_cylindrical(p);
            let exact = grad_norm_sq_u0(c.rho, c.z);
            let fd = fd_grad_sq(p);
            prop_assert!((fd - exact).abs() <= 1e-5 * exact.max(1e-3), "{fd} vs {exact}");
        }

        #[test]
        fn competitor_is_unit_and_tangential(t in 0.0f64..PI, ph in 0.0f64..(2.0 * PI)) {
            let x = Vec3::new(t.sin() * ph.cos(), t.sin() * ph.sin(), t.cos());
            let u = competitor_u0(x).get();
            prop_assert!((u.norm() - 1.0).abs() < 1e-14);
            prop_assert!(u.dot(x).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_bound_integral() {
        let lb = lower_bound().unwrap();
        assert!((lb.integral - lb.integral_exact).abs() < 1e-12);
        assert!((lb.integral - 1.218_95).abs() < 1e-5);
        assert!((lower_bound_integrand(1.0) - 1.0).abs() < 1e-15);
        assert!((lower_bound_integrand(-1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn upper_bound_quadrature() {
        let ub = upper_bound().unwrap();
        assert!((ub.quadrature - ub.exact).abs() / ub.exact < 1e-3, "{ub:?}");
        assert!((ub.gradient_integral - ub.gradient_integral_exact).abs() / ub.gradient_integral_exact < 1e-3);
        assert!(ub.samples.windows(2).all(|w| w[1].1 > w[0].1));
    }

    #[test]
    fn level_set_constants() {
        let p = LevelSetParams::new(0.5).unwrap();
        assert_eq!(p.alpha, 0.5 * 0.75);
        assert!((p.b - 0.75 * p.alpha * 0.125).abs() < 1e-16);
        assert!(p.c2 < 0.0);
        assert!((p.c2 * p.c2 - 108.0 * p.b.powi(3) / p.c1.powi(4)).abs() < 1e-12);
        assert!(p.implicit_residual(0.0, 0.0).abs() < 1e-12);
        assert!(LevelSetParams::new(1.0).is_err());
        assert!(LevelSetParams::new(0.0).is_err());
        assert!(LevelSetParams::with_c1(0.5, -1.0).is_err());
    }

    #[test]
    fn explicit_branch_is_continuous_and_solves_the_cubic() {
        let p = LevelSetParams::new(0.5).unwrap();
        let t_max = -2.0 * p.c2;
        let mut prev = 0.0;
        for k in 1..1000 {
            let t = t_max * k as f64 / 1000.0;
            let l = p.explicit_lambda(t).unwrap();
            assert!(l > prev);
            assert!(p.implicit_residual(t, l).abs() < 1e-10);
            prev = l;
        }
        assert!((prev - 9.0 * p.b / p.c1).abs() < 1e-2);
        let t = 1e-10;
        let ratio = p.explicit_lambda(t).unwrap() / t.sqrt();
        assert!((ratio - p.leading_coefficient()).abs() < 1e-4);
        assert!(p.explicit_lambda(t_max + 1.0).is_none());
    }

    #[test]
    fn series_bootstrap_matches_leading_term() {
        let p = LevelSetParams::new(0.25).unwrap();
        let coef = bootstrap_series(&p);
        assert!((coef[0] - p.leading_coefficient()).abs() < 1e-12 * coef[0]);
    }

    #[test]
    fn trajectories_satisfy_the_implicit_relation() {
        for c in [0.25, 0.5, 0.75, -0.5] {
            let p = LevelSetParams::new(c).unwrap();
            let tr = level_set_ode_solve(&p, 50.0, 20_000).unwrap();
            assert_eq!(tr.stop, LevelSetStop::Exited);
            assert!(tr.max_implicit_residual < 1e-8, "c={c}: {}", tr.max_implicit_residual);
            assert!(tr.max_explicit_deviation < 1e-6, "c={c}: {}", tr.max_explicit_deviation);
            assert!((tr.departure_tan - p.departure_tan()).abs() < 1e-3);
            for q in &tr.points {
                assert!((q.lambda_rho * q.dot_z - p.alpha).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_is_minus_one() {
        let patch = JacobianPatch { c_lo: 0.2, c_hi: 0.6, n_c: 8, z_start: -0.3, t_end: 0.5, steps: 50 };
        assert!(levelset_jacobian_check(&LinearRho, &patch).unwrap() < 1e-4);
        let patch = JacobianPatch { c_lo: 0.05, c_hi: 0.15, n_c: 20, z_start: 0.0, t_end: 0.3, steps: 60 };
        let d = levelset_jacobian_check(&RhoTimesProfile, &patch).unwrap();
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn jacobian_deviation_shrinks_under_refinement() {
        let mut prev = f64::INFINITY;
        for r in [1usize, 2, 4] {
            let patch = JacobianPatch {
                c_lo: 0.05,
                c_hi: 0.15,
                n_c: 4 * r,
                z_start: 0.0,
                t_end: 0.6,
                steps: 3 * r,
            };
            let d = levelset_jacobian_check(&RhoTimesProfile, &patch).unwrap();
            assert!(d < prev * 0.6, "{d} vs {prev}");
            prev = d;
        }
    }

    #[test]
    fn jacobian_rejects_degenerate_gradient() {
        struct Flat;
        impl LevelSetFixture for Flat {
            fn value(&self, rho: f64, _z: f64) -> f64 {
                rho
            }
            fn gradient(&self, _rho: f64, _z: f64) -> (f64, f64) {
                (0.0, 0.0)
            }
        }
        let patch = JacobianPatch { c_lo: 0.2, c_hi: 0.6, n_c: 4, z_start: 0.0, t_end: 0.5, steps: 10 };
        assert!(matches!(
            levelset_jacobian_check(&Flat, &patch),
            Err(BoundsError::Degenerate { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let rows = [level_set_row(0.5, 20.0, 2000).unwrap()];
        let csv = level_set_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(LEVEL_SET_CSV_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 5);
    }
}
