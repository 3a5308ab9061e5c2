//! Discrete director fields: Cartesian samples on a masked ball grid, the
//! equivariant angle field ψ(ρ,z) on the half disk, and cylindrical samples
//! used by the symmetrization.

mod checkpoint;
mod cyl;
mod grid;
mod psi;

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{frame_at, reflect_value, to_cylindrical, GeometryError, UnitVec3, Vec3};
use crate::par;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use cyl::{CylField, CylGrid};
pub use grid::{BallGrid3, GridSpec, NodeClass};
pub use psi::{lift_equivariant, psi_boundary_value, Branch, HalfDiskMesh, LiftedPsi, NodeKind, PsiField};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid specification: {0}")]
    InvalidGrid(String),
    #[error("grid mask is empty")]
    EmptyMask,
    #[error("value at node {node} (position {pos:?}) has norm below 1e-8")]
    ZeroNorm { node: usize, pos: [f64; 3] },
    #[error("value at node {node} is not unit length (defect {defect:e})")]
    NotUnit { node: usize, defect: f64 },
    #[error("value at boundary node {node} (position {pos:?}) is parallel to the normal")]
    SingularTangent { node: usize, pos: [f64; 3] },
    #[error("field undefined at {0:?}")]
    Undefined([f64; 3]),
    #[error("point (rho, z) = {0:?} lies outside the psi mesh and no boundary data is attached")]
    Extrapolation([f64; 2]),
    #[error("boundary tangential component u_theta reaches {max:e}, above {tol:e}")]
    BoundaryUTheta { max: f64, tol: f64 },
    #[error("circle average of u_rho is {value} at node {node}")]
    AverageOutOfRange { node: usize, value: f64 },
    #[error("value count {got} does not match the grid ({want})")]
    LengthMismatch { got: usize, want: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Anything that can be evaluated at a point of space.
///
/// `None` means the point is outside the region where the field is known.
pub trait VectorField: Sync {
    fn eval(&self, x: Vec3) -> Option<Vec3>;
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        (**self).eval(x)
    }
}

/// Closed-form field from a function.
pub struct FnField<F>(pub F);

impl<F: Fn(Vec3) -> Vec3 + Sync> VectorField for FnField<F> {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        let v = (self.0)(x);
        v.is_finite().then_some(v)
    }
}

/// `ū`: the field itself inside the unit ball and `A(x)u(x/|x|²)` outside.
pub struct Extended<F>(pub F);

impl<F: VectorField> VectorField for Extended<F> {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        if x.norm() <= 1.0 {
            self.0.eval(x)
        } else {
            let y = crate::geometry::inversion(x).ok()?;
            let v = self.0.eval(y)?;
            reflect_value(|_| v, x).ok()
        }
    }
}

/// `ũ(x) = A(x)u(x/|x|²)` at every `x ≠ 0`.
pub struct Reflected<F>(pub F);

impl<F: VectorField> VectorField for Reflected<F> {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        let y = crate::geometry::inversion(x).ok()?;
        let v = self.0.eval(y)?;
        reflect_value(|_| v, x).ok()
    }
}

/// Unit vector field sampled at the masked nodes of a [`BallGrid3`].
#[derive(Debug, Clone)]
pub struct Field3 {
    grid: Arc<BallGrid3>,
    values: Vec<Vec3>,
}

/// Norm tolerance for stored values.
pub const UNIT_TOL: f64 = 1e-9;

impl Field3 {
    /// Wraps values, checking `| |v| − 1 | ≤ 1e−9`.
    pub fn from_values(grid: Arc<BallGrid3>, values: Vec<Vec3>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                got: values.len(),
                want: grid.len(),
            });
        }
        if let Some((node, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !((v.norm() - 1.0).abs() <= UNIT_TOL))
        {
            return Err(FieldError::NotUnit {
                node,
                defect: (v.norm() - 1.0).abs(),
            });
        }
        Ok(Field3 { grid, values })
    }

    /// Wraps values and normalizes them.
    pub fn from_raw(grid: Arc<BallGrid3>, values: Vec<Vec3>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                got: values.len(),
                want: grid.len(),
            });
        }
        project_unit(&Field3 { grid, values })
    }

    pub fn grid(&self) -> &Arc<BallGrid3> {
        &self.grid
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn value(&self, p: usize) -> Vec3 {
        self.values[p]
    }

    /// Trilinear interpolation without normalization. Missing corners are
    /// dropped and the remaining weights renormalized; `None` if all are missing.
    pub fn sample_raw(&self, x: Vec3) -> Option<Vec3> {
        self.trilinear(x, false)
    }

    /// Trilinear interpolation projected back to the sphere.
    pub fn sample(&self, x: Vec3) -> Result<UnitVec3, FieldError> {
        let v = self.sample_raw(x).ok_or(FieldError::Undefined(x.to_array()))?;
        UnitVec3::normalize(v).map_err(|_| FieldError::Undefined(x.to_array()))
    }

    fn trilinear(&self, x: Vec3, strict: bool) -> Option<Vec3> {
        let g = &self.grid;
        let c = g.local_coords(x);
        let base = c.map(|v| v.floor());
        let t = [c[0] - base[0], c[1] - base[1], c[2] - base[2]];
        let mut acc = Vec3::ZERO;
        let mut wsum = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            for k in 0..3 {
                w *= if o[k] == 1 { t[k] } else { 1.0 - t[k] };
            }
            if w <= 1e-14 {
                continue;
            }
            match g.lookup(
                base[0] as i64 + o[0] as i64,
                base[1] as i64 + o[1] as i64,
                base[2] as i64 + o[2] as i64,
            ) {
                Some(p) => {
                    acc += self.values[p] * w;
                    wsum += w;
                }
                None if strict => return None,
                None => {}
            }
        }
        (wsum > 0.0).then(|| acc * (1.0 / wsum))
    }

    pub fn map_values<F>(&self, f: F) -> Result<Field3, FieldError>
    where
        F: Fn(usize, Vec3) -> Vec3 + Sync,
    {
        let values = (0..self.values.len())
            .into_par_iter()
            .map(|p| f(p, self.values[p]))
            .collect();
        Field3::from_values(self.grid.clone(), values)
    }

    /// Largest `| |v| − 1 |`.
    pub fn norm_defect(&self) -> f64 {
        par::max(self.values.len(), |p| (self.values[p].norm() - 1.0).abs()).max(0.0)
    }

    /// Largest `|v·ν|` over boundary-adjacent nodes (0 without a tangency sphere).
    pub fn tangency_residual(&self) -> f64 {
        let g = &self.grid;
        par::max(self.values.len(), |p| {
            if g.is_boundary(p) {
                let x = g.position(p);
                self.values[p].dot(x * (1.0 / x.norm())).abs()
            } else {
                0.0
            }
        })
        .max(0.0)
    }
}

/// [`Field3`] evaluated with the lenient (renormalizing) interpolation.
pub struct Lenient<'a>(pub &'a Field3);

impl VectorField for Lenient<'_> {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        self.0.sample(x).ok().map(|u| u.get())
    }
}

/// Strict trilinear evaluation: `None` if a corner with non-zero weight is unmasked.
impl VectorField for Field3 {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        self.trilinear(x, true)
    }
}

/// Samples `f` at every masked node and normalizes.
pub fn field_from_closed_form<F: VectorField>(
    f: &F,
    grid: Arc<BallGrid3>,
) -> Result<Field3, FieldError> {
    let values: Result<Vec<Vec3>, FieldError> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let x = grid.position(p);
            let v = f.eval(x).ok_or(FieldError::Undefined(x.to_array()))?;
            v.normalized(1e-8).ok_or(FieldError::ZeroNorm {
                node: p,
                pos: x.to_array(),
            })
        })
        .collect();
    Ok(Field3 {
        grid,
        values: values?,
    })
}

/// Normalizes every value.
pub fn project_unit(f: &Field3) -> Result<Field3, FieldError> {
    let g = &f.grid;
    let values: Result<Vec<Vec3>, FieldError> = (0..f.values.len())
        .into_par_iter()
        .map(|p| {
            f.values[p].normalized(1e-8).ok_or(FieldError::ZeroNorm {
                node: p,
                pos: g.position(p).to_array(),
            })
        })
        .collect();
    Ok(Field3 {
        grid: g.clone(),
        values: values?,
    })
}

/// Removes the normal component at boundary-adjacent nodes and renormalizes.
/// Returns the projected field and the largest remaining `|v·ν|`.
pub fn project_tangential(f: &Field3) -> Result<(Field3, f64), FieldError> {
    let g = &f.grid;
    let values: Result<Vec<Vec3>, FieldError> = (0..f.values.len())
        .into_par_iter()
        .map(|p| {
            let v = f.values[p];
            if !g.is_boundary(p) {
                return Ok(v);
            }
            let x = g.position(p);
            let nu = x * (1.0 / x.norm());
            (v - nu * v.dot(nu))
                .normalized(1e-8)
                .ok_or(FieldError::SingularTangent {
                    node: p,
                    pos: x.to_array(),
                })
        })
        .collect();
    let out = Field3 {
        grid: g.clone(),
        values: values?,
    };
    let res = out.tangency_residual();
    Ok((out, res))
}

/// Ring resolution used by circle averages on a grid with `n` cells per axis.
pub fn circle_samples(n: usize) -> usize {
    4 * n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaAverageReport {
    /// Nodes where an average in `(1, 1 + 1e−6]` was clamped to 1.
    pub clamped: usize,
}

/// Replaces `u` by the equivariant field `ũ_ρ e_ρ + √(1 − ũ_ρ²) e_z`, where
/// `ũ_ρ(ρ,z)` is the average of `u_ρ` over the circle through the node.
pub fn theta_average(
    f: &Field3,
    boundary_tol: f64,
) -> Result<(Field3, ThetaAverageReport), FieldError> {
    let g = f.grid.clone();
    let worst = par::max(g.len(), |p| {
        if g.is_boundary(p) {
            let c = to_cylindrical(g.position(p));
            if c.on_axis {
                0.0
            } else {
                f.values[p].dot(frame_at(c.theta).1.get()).abs()
            }
        } else {
            0.0
        }
    });
    if worst > boundary_tol {
        return Err(FieldError::BoundaryUTheta {
            max: worst,
            tol: boundary_tol,
        });
    }
    let ns = circle_samples(g.n());
    let results: Vec<Result<(Vec3, bool), FieldError>> = (0..g.len())
        .into_par_iter()
        .map(|p| {
            let x = g.position(p);
            let c = to_cylindrical(x);
            let mut avg = 0.0;
            if !c.on_axis {
                // Circles through cut nodes may leave the sampled region; such
                // points are skipped.
                let mut count = 0usize;
                for l in 0..ns {
                    let th = 2.0 * PI * (l as f64 + 0.5) / ns as f64;
                    let (er, _, _) = frame_at(th);
                    let q = Vec3::new(c.rho * th.cos(), c.rho * th.sin(), c.z);
                    if let Ok(v) = f.sample(q) {
                        avg += v.get().dot(er.get());
                        count += 1;
                    }
                }
                if count == 0 {
                    return Err(FieldError::Undefined(x.to_array()));
                }
                avg /= count as f64;
            }
            let mut clamped = false;
            if avg.abs() > 1.0 {
                if avg.abs() <= 1.0 + 1e-6 {
                    avg = avg.signum();
                    clamped = true;
                } else {
                    return Err(FieldError::AverageOutOfRange { node: p, value: avg });
                }
            }
            let (er, _, ez) = frame_at(c.theta);
            let v = er.get() * avg + ez.get() * (1.0 - avg * avg).max(0.0).sqrt();
            Ok((v, clamped))
        })
        .collect();
    let mut values = Vec::with_capacity(g.len());
    let mut clamped = 0;
    for r in results {
        let (v, c) = r?;
        clamped += usize::from(c);
        values.push(v);
    }
    Ok((Field3::from_values(g, values)?, ThetaAverageReport { clamped }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn ball(n: usize) -> Arc<BallGrid3> {
        Arc::new(BallGrid3::new(GridSpec::ball(n, 1.0)).unwrap())
    }

    #[test]
    fn project_unit_examples() {
        let g = ball(6);
        let f = Field3 {
            grid: g.clone(),
            values: vec![Vec3::new(0.0, 0.0, 2.0); g.len()],
        };
        let u = project_unit(&f).unwrap();
        assert!(u.values().iter().all(|v| *v == Vec3::E3));
        let again = project_unit(&u).unwrap();
        assert_eq!(again.values(), u.values());
        let mut bad = f.clone();
        bad.values[3] = Vec3::ZERO;
        assert!(matches!(project_unit(&bad), Err(FieldError::ZeroNorm { node: 3, .. })));
    }

    #[test]
    fn project_unit_random() {
        let g = ball(10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values = (0..g.len())
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.1..1.0)))
            .collect();
        let u = project_unit(&Field3 { grid: g, values }).unwrap();
        assert!(u.norm_defect() < 1e-14);
    }

    #[test]
    fn project_tangential_examples() {
        let g = ball(8);
        let p = (0..g.len()).find(|&p| g.is_boundary(p)).unwrap();
        let x = g.position(p);
        let nu = x * (1.0 / x.norm());
        let t = nu.cross(Vec3::new(0.3, -0.2, 0.9)).normalized(1e-12).unwrap();
        let mut values = vec![Vec3::E3; g.len()];
        values[p] = (nu + t) * (0.5f64.sqrt());
        let (out, res) = project_tangential(&Field3 { grid: g.clone(), values: values.clone() }).unwrap();
        assert!((out.value(p) - t).norm() < 1e-14);
        assert!(res < 1e-14 || (0..g.len()).any(|q| g.is_boundary(q)));
        values[p] = nu;
        assert!(matches!(
            project_tangential(&Field3 { grid: g, values }),
            Err(FieldError::SingularTangent { .. })
        ));
    }

    #[test]
    fn tangent_value_unchanged() {
        let g = ball(8);
        let f = field_from_closed_form(&FnField(|x: Vec3| Vec3::new(-x.x2, x.x1, 0.3 * x.x3 + 1e-3).normalized(1e-12).unwrap_or(Vec3::E3)), g).unwrap();
        let (out, _) = project_tangential(&f).unwrap();
        for p in 0..f.grid().len() {
            if !f.grid().is_boundary(p) {
                assert_eq!(out.value(p), f.value(p));
            }
        }
        // e₃ at (1,0,0) is already tangent.
        let g = Arc::new(BallGrid3::new(GridSpec::local(Vec3::new(1.0, 0.0, 0.0), 0.05, 2, 1.5)).unwrap());
        let f = Field3::from_values(g.clone(), vec![Vec3::E3; g.len()]).unwrap();
        assert_eq!(f.tangency_residual(), 0.0);
    }

    #[test]
    fn sampling_contract() {
        let g = ball(10);
        let c = Vec3::new(0.6, 0.0, 0.8);
        let f = Field3::from_values(g.clone(), vec![c; g.len()]).unwrap();
        for x in [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.7, 0.5, 0.1), Vec3::new(0.0, 0.0, 0.99)] {
            assert!((f.sample(x).unwrap().get() - c).norm() < 1e-15);
        }
        // node values are reproduced and a linear component is exact.
        let lin = |x: Vec3| Vec3::new(0.5, 0.2, 0.1 + 0.05 * x.x3);
        let raw = Field3 {
            grid: g.clone(),
            values: (0..g.len()).map(|p| lin(g.position(p))).collect(),
        };
        let p = g.len() / 2;
        assert!((raw.sample_raw(g.position(p)).unwrap() - raw.value(p)).norm() < 1e-15);
        let x = Vec3::new(0.123, -0.2, 0.301);
        assert!((raw.eval(x).unwrap().x3 - lin(x).x3).abs() < 1e-15);
    }

    #[test]
    fn extended_field_is_continuous_across_sphere() {
        let hedgehog = FnField(|x: Vec3| x * (1.0 / x.norm()));
        let e = Extended(&hedgehog);
        let inner = e.eval(Vec3::new(0.0, 0.6, 0.8 - 1e-9)).unwrap();
        let outer = e.eval(Vec3::new(0.0, 0.6, 0.8) * (1.0 + 1e-9)).unwrap();
        // A(x)(x/|x|) = −x/|x|: the hedgehog flips across the sphere.
        assert!((inner + outer).norm() < 1e-8);
    }

    #[test]
    fn theta_average_fixed_point_and_constant_rings() {
        let g = ball(16);
        let eq = FnField(|x: Vec3| {
            let c = to_cylindrical(x);
            let psi = 0.8 * c.rho * (1.0 - c.z * c.z);
            let (er, _, ez) = frame_at(c.theta);
            er.get() * psi.sin() + ez.get() * psi.cos()
        });
        let f = field_from_closed_form(&eq, g.clone()).unwrap();
        let (avg, rep) = theta_average(&f, 1e-6).unwrap();
        assert_eq!(rep.clamped, 0);
        let err = (0..g.len())
            .filter(|&p| g.depth(p) > 2.0 * g.h())
            .map(|p| (avg.value(p) - f.value(p)).norm())
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
        let (again, _) = theta_average(&avg, 1e-6).unwrap();
        let drift = (0..g.len())
            .filter(|&p| g.depth(p) > 2.0 * g.h())
            .map(|p| (again.value(p) - avg.value(p)).norm())
            .fold(0.0, f64::max);
        assert!(drift < 5e-3, "{drift}");

        // u_ρ constant on circles stays the same.
        let c0 = 0.3;
        let ring = FnField(move |x: Vec3| {
            let c = to_cylindrical(x);
            let (er, et, ez) = frame_at(c.theta);
            let w = 0.2 * (3.0 * c.theta).sin() * c.rho;
            er.get() * (c0 * c.rho) + et.get() * w + ez.get() * (1.0 - (c0 * c.rho).powi(2) - w * w).sqrt()
        });
        let f = field_from_closed_form(&ring, g.clone()).unwrap();
        let avg = theta_average(&f, 1.0).unwrap().0;
        for p in (0..g.len()).filter(|&p| g.depth(p) > 2.0 * g.h()) {
            let c = to_cylindrical(g.position(p));
            if !c.on_axis {
                let ur = avg.value(p).dot(frame_at(c.theta).0.get());
                assert!((ur - c0 * c.rho).abs() < 2e-3, "{ur} vs {}", c0 * c.rho);
            }
        }
    }

    #[test]
    fn theta_average_rejects_boundary_u_theta() {
        let g = ball(10);
        let swirl = FnField(|x: Vec3| Vec3::new(-x.x2, x.x1, 0.2).normalized(1e-12).unwrap());
        let f = field_from_closed_form(&swirl, g).unwrap();
        assert!(matches!(theta_average(&f, 1e-3), Err(FieldError::BoundaryUTheta { .. })));
    }

    proptest! {
        #[test]
        fn unit_then_tangential_projection_meets_tolerances(seed in 0u64..1000) {
            let g = ball(8);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<Vec3> = (0..g.len())
                .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let f = Field3 { grid: g, values };
            if let Ok((t, res)) = project_tangential(&f) {
                let u = project_unit(&t).unwrap();
                prop_assert!(u.norm_defect() < 1e-9);
                prop_assert!(res < 1e-6 && u.tangency_residual() < 1e-6);
            }
        }
    }
}
