//! Closed-form geometric operators: cylindrical coordinates, the sphere
//! inversion, the reflection matrix `A(x) = I - 2xxᵀ/|x|²`, the extension
//! across the unit sphere and the boundary chart around a point of the sphere.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{op}: argument {value:?} outside the domain ({reason})")]
    Domain {
        op: &'static str,
        value: [f64; 3],
        reason: &'static str,
    },
    #[error("vector {0:?} is not of unit length")]
    NotUnit([f64; 3]),
}

/// Smallest admissible |x| for operators singular at the origin.
pub const ORIGIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const E1: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const E2: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Vec3 { x1, x2, x3 }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    /// Standard basis vector `e_i`, `i ∈ {0,1,2}`.
    pub fn basis(i: usize) -> Self {
        let mut a = [0.0; 3];
        a[i] = 1.0;
        Vec3::from_array(a)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x1 * o.x1 + self.x2 * o.x2 + self.x3 * o.x3
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.x2 * o.x3 - self.x3 * o.x2,
            self.x3 * o.x1 - self.x1 * o.x3,
            self.x1 * o.x2 - self.x2 * o.x1,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    /// `self / |self|`, or `None` when the norm is below `eps`.
    pub fn normalized(self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        (n >= eps && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn outer(self, o: Vec3) -> Mat3 {
        let a = self.to_array();
        let b = o.to_array();
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i] * b[j];
            }
        }
        Mat3 { m }
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x1,
            1 => &self.x2,
            2 => &self.x3,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x1 + o.x1, self.x2 + o.x2, self.x3 + o.x3)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x1 - o.x1, self.x2 - o.x2, self.x3 - o.x3)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x1, -self.x2, -self.x3)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x1 * s, self.x2 * s, self.x3 * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

/// A vector with | |v| − 1 | ≤ 1e−12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3(Vec3);

impl UnitVec3 {
    pub const TOL: f64 = 1e-12;

    pub fn new(v: Vec3) -> Result<Self, GeometryError> {
        if v.is_finite() && (v.norm() - 1.0).abs() <= Self::TOL {
            Ok(UnitVec3(v))
        } else {
            Err(GeometryError::NotUnit(v.to_array()))
        }
    }

    /// Normalizes `v`; fails for (near) zero vectors.
    pub fn normalize(v: Vec3) -> Result<Self, GeometryError> {
        v.normalized(1e-300)
            .map(UnitVec3)
            .ok_or(GeometryError::NotUnit(v.to_array()))
    }

    pub fn get(self) -> Vec3 {
        self.0
    }
}

impl From<UnitVec3> for Vec3 {
    fn from(u: UnitVec3) -> Vec3 {
        u.0
    }
}

/// 3×3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };
    pub const ZERO: Mat3 = Mat3 { m: [[0.0; 3]; 3] };

    pub fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Self {
        Mat3 { m: [r0, r1, r2] }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3::from_rows(
            [c0.x1, c1.x1, c2.x1],
            [c0.x2, c1.x2, c2.x2],
            [c0.x3, c1.x3, c2.x3],
        )
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Mat3::from_rows([a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c])
    }

    pub fn col(&self, j: usize) -> Vec3 {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::from_array(self.m[i])
    }

    pub fn transpose(&self) -> Mat3 {
        let mut t = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        r
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut r = *self;
        r.m.iter_mut().flatten().for_each(|v| *v *= s);
        r
    }

    pub fn add(&self, o: &Mat3) -> Mat3 {
        let mut r = *self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] += o.m[i][j];
            }
        }
        r
    }

    pub fn sub(&self, o: &Mat3) -> Mat3 {
        self.add(&o.scale(-1.0))
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.m.iter().flatten().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, o: &Mat3) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(o.m.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylCoords {
    pub rho: f64,
    /// In `[0, 2π)`; reported as 0 on the axis.
    pub theta: f64,
    pub z: f64,
    /// Set when `rho == 0`, where `theta` carries no information.
    pub on_axis: bool,
}

pub fn to_cylindrical(p: Vec3) -> CylCoords {
    let rho = p.x1.hypot(p.x2);
    if rho == 0.0 {
        return CylCoords {
            rho: 0.0,
            theta: 0.0,
            z: p.x3,
            on_axis: true,
        };
    }
    let mut theta = p.x2.atan2(p.x1);
    if theta < 0.0 {
        theta += 2.0 * PI;
    }
    if theta >= 2.0 * PI {
        theta = 0.0;
    }
    CylCoords {
        rho,
        theta,
        z: p.x3,
        on_axis: false,
    }
}

pub fn from_cylindrical(c: CylCoords) -> Vec3 {
    Vec3::new(c.rho * c.theta.cos(), c.rho * c.theta.sin(), c.z)
}

/// Cylindrical frame `(e_ρ, e_θ, e_z)` at angle `theta`.
pub fn frame_at(theta: f64) -> (UnitVec3, UnitVec3, UnitVec3) {
    let (s, c) = theta.sin_cos();
    (
        UnitVec3(Vec3::new(c, s, 0.0)),
        UnitVec3(Vec3::new(-s, c, 0.0)),
        UnitVec3(Vec3::E3),
    )
}

fn check_nonzero(op: &'static str, x: Vec3) -> Result<f64, GeometryError> {
    let r2 = x.norm_sq();
    if !x.is_finite() || r2.sqrt() < ORIGIN_EPS {
        return Err(GeometryError::Domain {
            op,
            value: x.to_array(),
            reason: "|x| must exceed 1e-12",
        });
    }
    Ok(r2)
}

/// Inversion about the unit sphere, `x / |x|²`.
pub fn inversion(x: Vec3) -> Result<Vec3, GeometryError> {
    let r2 = check_nonzero("inversion", x)?;
    Ok(x * (1.0 / r2))
}

/// Analytic Jacobian of the inversion, `A(x)/|x|²`.
pub fn inversion_jacobian(x: Vec3) -> Result<Mat3, GeometryError> {
    let r2 = check_nonzero("inversion_jacobian", x)?;
    Ok(reflection_matrix(x)?.scale(1.0 / r2))
}

/// `A(x) = I − 2xxᵀ/|x|²`.
pub fn reflection_matrix(x: Vec3) -> Result<Mat3, GeometryError> {
    let r2 = check_nonzero("reflection_matrix", x)?;
    Ok(Mat3::IDENTITY.sub(&x.outer(x).scale(2.0 / r2)))
}

/// `∂A/∂x_i = −(2/|x|²)[e_i xᵀ + x e_iᵀ] + (4x_i/|x|⁴) xxᵀ`.
pub fn reflection_matrix_partial(x: Vec3, i: usize) -> Result<Mat3, GeometryError> {
    let r2 = check_nonzero("reflection_matrix_partial", x)?;
    let e = Vec3::basis(i);
    let sym = e.outer(x).add(&x.outer(e));
    Ok(sym
        .scale(-2.0 / r2)
        .add(&x.outer(x).scale(4.0 * x[i] / (r2 * r2))))
}

/// `ΔA(x) = 12xxᵀ/|x|⁴ − 4I/|x|²`.
pub fn reflection_matrix_laplacian(x: Vec3) -> Result<Mat3, GeometryError> {
    let r2 = check_nonzero("reflection_matrix_laplacian", x)?;
    Ok(x.outer(x)
        .scale(12.0 / (r2 * r2))
        .sub(&Mat3::IDENTITY.scale(4.0 / r2)))
}

/// Value of the extension `ū(x) = A(x) u(x/|x|²)` for `1 < |x| ≤ 2`.
pub fn extend_field_value<F>(u_at: F, x: Vec3) -> Result<UnitVec3, GeometryError>
where
    F: Fn(Vec3) -> Vec3,
{
    let r = x.norm();
    if !(r > 1.0 && r <= 2.0 + 1e-12) {
        return Err(GeometryError::Domain {
            op: "extend_field_value",
            value: x.to_array(),
            reason: "requires 1 < |x| <= 2; evaluate u directly inside the ball",
        });
    }
    let v = reflection_matrix(x)?.mul_vec(u_at(inversion(x)?));
    UnitVec3::normalize(v)
}

/// Same map without the range restriction: `A(x) u(ι(x))` for any `x ≠ 0`.
pub fn reflect_value<F>(u_at: F, x: Vec3) -> Result<Vec3, GeometryError>
where
    F: Fn(Vec3) -> Vec3,
{
    Ok(reflection_matrix(x)?.mul_vec(u_at(inversion(x)?)))
}

/// Proper rotation taking `e₃` to the unit vector `to` along the shortest arc.
/// For `to = −e₃` the rotation by π about `e₁` is used.
pub fn rotation_from_e3(to: Vec3) -> Mat3 {
    let c = to.x3;
    let axis = Vec3::E3.cross(to);
    let s = axis.norm();
    if s < 1e-14 {
        return if c > 0.0 {
            Mat3::IDENTITY
        } else {
            Mat3::diag(1.0, -1.0, -1.0)
        };
    }
    let k = axis * (1.0 / s);
    let kx = Mat3::from_rows([0.0, -k.x3, k.x2], [k.x3, 0.0, -k.x1], [-k.x2, k.x1, 0.0]);
    Mat3::IDENTITY
        .add(&kx.scale(s))
        .add(&kx.mul_mat(&kx).scale(1.0 - c))
}

/// Boundary chart `Φ(y) = (1 + y₃)(y₁, y₂, √(1 − y₁² − y₂²))` around `e₃`,
/// transported to `base_point` by a rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryChart {
    base_point: Vec3,
    rotation: Mat3,
    r0: f64,
}

impl BoundaryChart {
    pub fn new(base_point: Vec3, r0: f64) -> Result<Self, GeometryError> {
        if (base_point.norm() - 1.0).abs() > 1e-12 {
            return Err(GeometryError::Domain {
                op: "BoundaryChart::new",
                value: base_point.to_array(),
                reason: "base point must lie on the unit sphere",
            });
        }
        if !(r0 > 0.0 && r0 < 0.25) {
            return Err(GeometryError::Domain {
                op: "BoundaryChart::new",
                value: [r0, 0.0, 0.0],
                reason: "chart radius must lie in (0, 1/4)",
            });
        }
        Ok(BoundaryChart {
            base_point,
            rotation: rotation_from_e3(base_point),
            r0,
        })
    }

    pub fn base_point(&self) -> Vec3 {
        self.base_point
    }

    pub fn rotation(&self) -> Mat3 {
        self.rotation
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    fn check_y(&self, op: &'static str, y: Vec3) -> Result<(), GeometryError> {
        if y.is_finite() && y.norm() < self.r0 {
            Ok(())
        } else {
            Err(GeometryError::Domain {
                op,
                value: y.to_array(),
                reason: "chart coordinate outside B_r0(0)",
            })
        }
    }

    /// Rotated-frame point `Rᵀx`, checked to lie in the chart image.
    fn local_x(&self, op: &'static str, x: Vec3) -> Result<Vec3, GeometryError> {
        let xl = self.rotation.transpose().mul_vec(x);
        let r = xl.norm();
        let err = GeometryError::Domain {
            op,
            value: x.to_array(),
            reason: "point outside the chart image",
        };
        if !(r > 0.0) || xl.x3 <= 0.0 {
            return Err(err);
        }
        let y = Vec3::new(xl.x1 / r, xl.x2 / r, r - 1.0);
        if y.norm() < self.r0 {
            Ok(xl)
        } else {
            Err(err)
        }
    }

    pub fn forward(&self, y: Vec3) -> Result<Vec3, GeometryError> {
        self.check_y("chart_forward", y)?;
        let s = (1.0 - y.x1 * y.x1 - y.x2 * y.x2).sqrt();
        let t = 1.0 + y.x3;
        Ok(self.rotation.mul_vec(Vec3::new(t * y.x1, t * y.x2, t * s)))
    }

    pub fn inverse(&self, x: Vec3) -> Result<Vec3, GeometryError> {
        let xl = self.local_x("chart_inverse", x)?;
        let r = xl.norm();
        Ok(Vec3::new(xl.x1 / r, xl.x2 / r, r - 1.0))
    }

    /// `∇Φ(y)`.
    pub fn jacobian_forward(&self, y: Vec3) -> Result<Mat3, GeometryError> {
        self.check_y("chart_jacobian_forward", y)?;
        let s = (1.0 - y.x1 * y.x1 - y.x2 * y.x2).sqrt();
        let t = 1.0 + y.x3;
        let local = Mat3::from_rows(
            [t, 0.0, y.x1],
            [0.0, t, y.x2],
            [-y.x1 * t / s, -y.x2 * t / s, s],
        );
        Ok(self.rotation.mul_mat(&local))
    }

    /// `∇Φ(Φ⁻¹(x))` in the closed form expressed through `x`.
    pub fn jacobian_forward_at(&self, x: Vec3) -> Result<Mat3, GeometryError> {
        let xl = self.local_x("chart_jacobian_forward_at", x)?;
        let r = xl.norm();
        let local = Mat3::from_rows(
            [r, 0.0, xl.x1 / r],
            [0.0, r, xl.x2 / r],
            [-xl.x1 * r / xl.x3, -xl.x2 * r / xl.x3, xl.x3 / r],
        );
        Ok(self.rotation.mul_mat(&local))
    }

    /// `∇Φ⁻¹(x)`.
    pub fn jacobian_inverse(&self, x: Vec3) -> Result<Mat3, GeometryError> {
        let xl = self.local_x("chart_jacobian_inverse", x)?;
        let r = xl.norm();
        let r3 = r * r * r;
        let mut local = Mat3::ZERO;
        for j in 0..3 {
            let d = |i: usize| if i == j { 1.0 } else { 0.0 };
            local.m[0][j] = d(0) / r - xl.x1 * xl[j] / r3;
            local.m[1][j] = d(1) / r - xl.x2 * xl[j] / r3;
            local.m[2][j] = xl[j] / r;
        }
        Ok(local.mul_mat(&self.rotation.transpose()))
    }

    /// `max ‖∇Φ⁻¹(x) − Rᵀ‖_F / r₀` over `samples` points of the chart image,
    /// i.e. the constant `K` in `‖∇Φ⁻¹ − I‖ ≤ K r₀` (in the base-point frame).
    pub fn inverse_jacobian_deviation(&self, samples: usize) -> Result<f64, GeometryError> {
        let rt = self.rotation.transpose();
        let mut worst: f64 = 0.0;
        let k = (samples as f64).cbrt().ceil().max(2.0) as usize;
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    let f = |i: usize| (2.0 * (i as f64 + 0.5) / k as f64 - 1.0) * 0.99;
                    let y = Vec3::new(f(a), f(b), f(c)) * (self.r0 / 3f64.sqrt());
                    let x = self.forward(y)?;
                    let dev = self.jacobian_inverse(x)?.sub(&rt).frobenius();
                    worst = worst.max(dev / self.r0);
                }
            }
        }
        Ok(worst)
    }
}

/// Worst relative deviations of the reflection identities over random points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub samples: usize,
    /// `max |A(x)A(x) − I|`.
    pub involution: f64,
    /// `max ||A(x)|² − 3| / 3`.
    pub frobenius: f64,
    /// Finite-difference `det ∇ι(x)` against `−1/|x|⁶`.
    pub inversion_det: f64,
    /// Finite-difference `|∇[u∘ι]|²` against `|∇u(ι(x))|²/|x|⁴` for a smooth map.
    pub gradient_norm: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        self.involution.max(self.frobenius).max(self.inversion_det).max(self.gradient_norm)
    }
}

fn smooth_test_map(y: Vec3) -> Vec3 {
    Vec3::new((y.x1 + 2.0 * y.x2).sin(), y.x3.cos() * y.x1, y.x2.exp() * y.x3)
}

fn smooth_test_map_gradient(y: Vec3) -> Mat3 {
    let c = (y.x1 + 2.0 * y.x2).cos();
    Mat3::from_rows(
        [c, 2.0 * c, 0.0],
        [y.x3.cos(), 0.0, -y.x3.sin() * y.x1],
        [0.0, y.x2.exp() * y.x3, y.x2.exp()],
    )
}

fn fd_jacobian<F: Fn(Vec3) -> Vec3>(f: F, x: Vec3, step: f64) -> Mat3 {
    let cols: Vec<Vec3> = (0..3)
        .map(|j| {
            let e = Vec3::basis(j) * step;
            (f(x + e) - f(x - e)) * (0.5 / step)
        })
        .collect();
    Mat3::from_cols(cols[0], cols[1], cols[2])
}

/// Checks the reflection and inversion identities at `samples` points drawn
/// uniformly from the shell `0.5 < |x| < 2`.
pub fn reflection_identity_checks(samples: usize, seed: u64) -> IdentityReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rep = IdentityReport { samples, involution: 0.0, frobenius: 0.0, inversion_det: 0.0, gradient_norm: 0.0 };
    let mut done = 0;
    while done < samples {
        let x = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let r = x.norm();
        if !(0.5..2.0).contains(&r) {
            continue;
        }
        done += 1;
        let a = reflection_matrix(x).expect("nonzero point");
        rep.involution = rep.involution.max(a.mul_mat(&a).max_abs_diff(&Mat3::IDENTITY));
        rep.frobenius = rep.frobenius.max((a.frobenius_sq() - 3.0).abs() / 3.0);
        let step = 1e-5 * r;
        let inv = |p: Vec3| p * (1.0 / p.norm_sq());
        let det = fd_jacobian(inv, x, step).det();
        let want = -1.0 / r.powi(6);
        rep.inversion_det = rep.inversion_det.max((det - want).abs() / want.abs());
        let lhs = fd_jacobian(|p| smooth_test_map(inv(p)), x, step).frobenius_sq();
        let rhs = smooth_test_map_gradient(inv(x)).frobenius_sq() / r.powi(4);
        rep.gradient_norm = rep.gradient_norm.max((lhs - rhs).abs() / rhs.max(1e-300));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn fd_matrix<F: Fn(Vec3) -> Mat3>(f: F, x: Vec3, i: usize, h: f64) -> Mat3 {
        let e = Vec3::basis(i) * h;
        f(x + e).sub(&f(x - e)).scale(0.5 / h)
    }

    #[test]
    fn cylindrical_examples() {
        let c = to_cylindrical(Vec3::new(0.0, 1.0, 0.0));
        assert!(close(c.rho, 1.0, 1e-15) && close(c.theta, PI / 2.0, 1e-15) && !c.on_axis);
        let c = to_cylindrical(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!((c.rho, c.theta, c.z), (1.0, 0.0, 0.0));
        let c = to_cylindrical(Vec3::new(0.0, 0.0, 0.5));
        assert!(c.on_axis && c.theta == 0.0 && c.z == 0.5);
        let c = to_cylindrical(Vec3::new(0.0, -1.0, 0.0));
        assert!(close(c.theta, 1.5 * PI, 1e-15));
    }

    #[test]
    fn frame_examples() {
        let (a, b, c) = frame_at(0.0);
        assert_eq!((a.get(), b.get(), c.get()), (Vec3::E1, Vec3::E2, Vec3::E3));
        let (a, b, _) = frame_at(PI / 2.0);
        assert!((a.get() - Vec3::E2).norm() < 1e-15);
        assert!((b.get() + Vec3::E1).norm() < 1e-15);
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(inversion(Vec3::new(2.0, 0.0, 0.0)).unwrap(), Vec3::new(0.5, 0.0, 0.0));
        let u = Vec3::new(0.6, 0.0, 0.8);
        assert!((inversion(u).unwrap() - u).norm() < 1e-15);
        assert!(inversion(Vec3::ZERO).is_err());
        let x = Vec3::new(1.5, 0.0, 0.0);
        let h = 1e-6;
        let cols: Vec<Vec3> = (0..3)
            .map(|i| {
                let e = Vec3::basis(i) * h;
                (inversion(x + e).unwrap() - inversion(x - e).unwrap()) * (0.5 / h)
            })
            .collect();
        let det = Mat3::from_cols(cols[0], cols[1], cols[2]).det();
        let want = -1.0 / 1.5f64.powi(6);
        assert!(((det - want) / want).abs() < 1e-6, "{det} vs {want}");
        assert!(close(inversion_jacobian(x).unwrap().det(), want, 1e-14));
    }

    #[test]
    fn reflection_examples() {
        let a = reflection_matrix(Vec3::E3).unwrap();
        assert_eq!(a, Mat3::diag(1.0, 1.0, -1.0));
        assert!(reflection_matrix(Vec3::ZERO).is_err());
    }

    #[test]
    fn partial_matches_finite_differences() {
        let x = Vec3::new(0.3, 0.7, -0.2);
        for i in 0..3 {
            let fd = fd_matrix(|p| reflection_matrix(p).unwrap(), x, i, 1e-5);
            let an = reflection_matrix_partial(x, i).unwrap();
            let rel = fd.sub(&an).frobenius() / an.frobenius();
            assert!(rel < 1e-6, "axis {i}: rel err {rel}");
        }
    }

    #[test]
    fn partial_on_axis_has_symmetric_block_pattern() {
        let p = reflection_matrix_partial(Vec3::new(0.8, 0.0, 0.0), 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let allowed = (i, j) == (0, 1) || (i, j) == (1, 0);
                if !allowed {
                    assert_eq!(p.m[i][j], 0.0);
                }
            }
        }
        assert!(p.m[0][1] != 0.0 && p.m[0][1] == p.m[1][0]);
    }

    #[test]
    fn laplacian_matches_second_differences() {
        let x = Vec3::new(0.4, -0.9, 1.1);
        let h = 1e-4;
        let a0 = reflection_matrix(x).unwrap();
        let mut lap = Mat3::ZERO;
        for i in 0..3 {
            let e = Vec3::basis(i) * h;
            let s = reflection_matrix(x + e)
                .unwrap()
                .add(&reflection_matrix(x - e).unwrap())
                .sub(&a0.scale(2.0));
            lap = lap.add(&s.scale(1.0 / (h * h)));
        }
        let an = reflection_matrix_laplacian(x).unwrap();
        assert!(lap.max_abs_diff(&an) < 1e-5);
    }

    #[test]
    fn extension_examples() {
        let x = Vec3::new(0.0, 0.0, 2.0);
        let v = extend_field_value(|_| Vec3::E1, x).unwrap().get();
        assert!((v - Vec3::E1).norm() < 1e-15);
        let v = extend_field_value(|_| Vec3::E3, x).unwrap().get();
        assert!((v + Vec3::E3).norm() < 1e-15);
        assert!(extend_field_value(|_| Vec3::E3, Vec3::new(0.5, 0.0, 0.0)).is_err());
    }

    #[test]
    fn chart_examples() {
        let c = BoundaryChart::new(Vec3::E3, 0.2).unwrap();
        assert_eq!(c.forward(Vec3::ZERO).unwrap(), Vec3::E3);
        let p = c.forward(Vec3::new(0.0, 0.0, -0.1)).unwrap();
        assert!((p - Vec3::new(0.0, 0.0, 0.9)).norm() < 1e-15 && p.norm() < 1.0);
        assert!(c.jacobian_forward(Vec3::ZERO).unwrap().max_abs_diff(&Mat3::IDENTITY) < 1e-15);
        assert!(c.forward(Vec3::new(0.3, 0.0, 0.0)).is_err());
        assert!(c.inverse(Vec3::new(0.0, 0.0, -1.0)).is_err());
        assert!(BoundaryChart::new(Vec3::E3, 0.3).is_err());
        assert!(BoundaryChart::new(Vec3::new(0.0, 0.0, 0.9), 0.1).is_err());
    }

    #[test]
    fn chart_sides_of_the_sphere() {
        let c = BoundaryChart::new(Vec3::new(0.0, 0.6, 0.8), 0.2).unwrap();
        for &(y1, y2) in &[(0.05, -0.03), (-0.1, 0.02), (0.0, 0.0)] {
            assert!(c.forward(Vec3::new(y1, y2, -0.05)).unwrap().norm() < 1.0);
            assert!(c.forward(Vec3::new(y1, y2, 0.05)).unwrap().norm() > 1.0);
            assert!((c.forward(Vec3::new(y1, y2, 0.0)).unwrap().norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn chart_inverse_jacobian_matches_finite_differences() {
        let c = BoundaryChart::new(Vec3::new(0.48, -0.6, 0.64), 0.2).unwrap();
        let ys = [
            Vec3::new(0.05, 0.02, -0.04),
            Vec3::new(-0.1, 0.07, 0.06),
            Vec3::new(0.0, -0.12, 0.1),
        ];
        for y in ys {
            let x = c.forward(y).unwrap();
            let h = 1e-6;
            let cols: Vec<Vec3> = (0..3)
                .map(|i| {
                    let e = Vec3::basis(i) * h;
                    (c.inverse(x + e).unwrap() - c.inverse(x - e).unwrap()) * (0.5 / h)
                })
                .collect();
            let fd = Mat3::from_cols(cols[0], cols[1], cols[2]);
            let an = c.jacobian_inverse(x).unwrap();
            assert!(fd.sub(&an).frobenius() / an.frobenius() < 1e-6);
            let fwd = c.jacobian_forward(y).unwrap();
            assert!(fwd.max_abs_diff(&c.jacobian_forward_at(x).unwrap()) < 1e-12);
            assert!(fwd.mul_mat(&an).max_abs_diff(&Mat3::IDENTITY) < 1e-10);
        }
    }

    #[test]
    fn chart_deviation_decays_linearly() {
        let mut ks = Vec::new();
        for r0 in [0.2, 0.1, 0.05, 0.025] {
            let c = BoundaryChart::new(Vec3::new(0.0, 0.0, -1.0), r0).unwrap();
            ks.push(c.inverse_jacobian_deviation(125).unwrap());
        }
        // dev / r0 stays bounded, so dev = O(r0).
        let kmax = ks.iter().cloned().fold(0.0, f64::max);
        let kmin = ks.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(kmax < 3.0 && kmin > 0.3 && kmax / kmin < 1.5, "{ks:?}");
    }

    #[test]
    fn identity_checks_hold_at_random_points() {
        let rep = reflection_identity_checks(1000, 7);
        assert_eq!(rep.samples, 1000);
        assert!(rep.involution < 1e-14 && rep.frobenius < 1e-14, "{rep:?}");
        assert!(rep.max() < 1e-5, "{rep:?}");
    }

    #[test]
    fn rotation_fallback_at_south_pole() {
        let r = rotation_from_e3(-Vec3::E3);
        assert!((r.mul_vec(Vec3::E3) + Vec3::E3).norm() < 1e-15);
        assert!((r.det() - 1.0).abs() < 1e-15);
    }

    fn arb_point(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
        (lo..hi, 0.0..PI, 0.0..2.0 * PI).prop_map(|(r, t, p)| {
            Vec3::new(r * t.sin() * p.cos(), r * t.sin() * p.sin(), r * t.cos())
        })
    }

    proptest! {
        #[test]
        fn cylindrical_round_trip(x1 in -3.0..3.0f64, x2 in -3.0..3.0f64, x3 in -3.0..3.0f64) {
            let p = Vec3::new(x1, x2, x3);
            let q = from_cylindrical(to_cylindrical(p));
            prop_assert!((p - q).norm() < 1e-14 * (1.0 + p.norm()));
            let c = to_cylindrical(p);
            prop_assert!(c.theta >= 0.0 && c.theta < 2.0 * PI);
        }

        #[test]
        fn frame_is_orthonormal_and_right_handed(t in -10.0..10.0f64) {
            let (a, b, c) = frame_at(t);
            prop_assert!(a.get().dot(b.get()).abs() < 1e-15);
            prop_assert!((a.get().cross(b.get()) - c.get()).norm() < 1e-15);
        }

        #[test]
        fn inversion_is_involutive(x in arb_point(0.5, 2.0)) {
            let back = inversion(inversion(x).unwrap()).unwrap();
            prop_assert!((back - x).norm() < 1e-12);
        }

        #[test]
        fn reflection_identities(x in arb_point(0.05, 3.0)) {
            let a = reflection_matrix(x).unwrap();
            prop_assert!(a.mul_mat(&a).max_abs_diff(&Mat3::IDENTITY) < 1e-14);
            prop_assert!((a.frobenius_sq() - 3.0).abs() < 1e-13);
            prop_assert!(a.max_abs_diff(&a.transpose()) == 0.0);
        }

        #[test]
        fn partial_is_traceless_on_sphere(x in arb_point(1.0, 1.0 + 1e-15), i in 0usize..3) {
            let p = reflection_matrix_partial(x, i).unwrap();
            prop_assert!(p.trace().abs() < 1e-13);
        }

        #[test]
        fn extension_preserves_norm(x in arb_point(1.0001, 2.0)) {
            let u = |p: Vec3| {
                let v = Vec3::new(p.x2.sin() + 0.3, p.x1 * p.x3, 1.0 + p.x1.cos());
                v * (1.0 / v.norm())
            };
            let v = extend_field_value(u, x).unwrap().get();
            prop_assert!((v.norm() - 1.0).abs() < 1e-13);
        }

        #[test]
        fn chart_round_trip(y1 in -0.1..0.1f64, y2 in -0.1..0.1f64, y3 in -0.1..0.1f64,
                            base in arb_point(1.0, 1.0 + 1e-15)) {
            let c = BoundaryChart::new(base * (1.0 / base.norm()), 0.2).unwrap();
            let y = Vec3::new(y1, y2, y3);
            let back = c.inverse(c.forward(y).unwrap()).unwrap();
            prop_assert!((back - y).norm() < 1e-12);
        }
    }
}
