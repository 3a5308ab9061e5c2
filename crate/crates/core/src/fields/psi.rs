use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rayon::prelude::*;

use crate::geometry::{frame_at, to_cylindrical, Vec3};

use super::{BallGrid3, Field3, FieldError, VectorField};

/// Which of the two boundary angles `φ ∓ π/2` is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `ψ = φ − π/2`.
    Minus,
    /// `ψ = φ + π/2`.
    Plus,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Minus => "minus",
            Branch::Plus => "plus",
        }
    }

    pub fn parse(s: &str) -> Option<Branch> {
        match s {
            "minus" => Some(Branch::Minus),
            "plus" => Some(Branch::Plus),
            _ => None,
        }
    }
}

/// Boundary angle at `(ρ, z)` using the polar angle `φ = atan2(ρ, z)` of
/// the point itself (0-homogeneous continuation off the circle).
pub fn psi_boundary_value(branch: Branch, rho: f64, z: f64) -> f64 {
    let phi = rho.atan2(z);
    match branch {
        Branch::Minus => phi - FRAC_PI_2,
        Branch::Plus => phi + FRAC_PI_2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Unknown: cell centre strictly inside the unit disk.
    Free,
    /// Centre outside the disk; carries boundary data.
    Fixed,
    Absent,
}

/// Cell-centred mesh of the half disk `{ρ > 0, ρ² + z² < 1}`.
///
/// Cells have side `h = 1/m`; centres sit at `ρ_i = (i+½)h` and
/// `z_j = −1 + (j − g + ½)h`, where `g` ghost rows pad the disk below, above
/// and to the right. Cells whose centre is outside the disk but which meet
/// it, their edge neighbours, and (for `pad > 0`) all centres within
/// `pad + 1.5h` of the disk are `Fixed`. Every edge carries the area fraction of its dual rectangle inside
/// the disk, every node the area fraction of its own cell.
#[derive(Debug, Clone)]
pub struct HalfDiskMesh {
    m: usize,
    h: f64,
    ghost: usize,
    pad: f64,
    ni: usize,
    nj: usize,
    kind: Vec<NodeKind>,
    frac: Vec<f64>,
    w_rho: Vec<f64>,
    w_z: Vec<f64>,
}

const SUB: usize = 8;

fn rect_fraction(r0: f64, r1: f64, z0: f64, z1: f64) -> f64 {
    let near = {
        let dr = if r0 > 0.0 { r0 } else if r1 < 0.0 { -r1 } else { 0.0 };
        let dz = if z0 > 0.0 { z0 } else if z1 < 0.0 { -z1 } else { 0.0 };
        dr * dr + dz * dz
    };
    let far = r0.abs().max(r1.abs()).powi(2) + z0.abs().max(z1.abs()).powi(2);
    if far <= 1.0 {
        return 1.0;
    }
    if near >= 1.0 {
        return 0.0;
    }
    let mut hits = 0;
    for a in 0..SUB {
        for b in 0..SUB {
            let r = r0 + (r1 - r0) * (a as f64 + 0.5) / SUB as f64;
            let z = z0 + (z1 - z0) * (b as f64 + 0.5) / SUB as f64;
            if r * r + z * z < 1.0 {
                hits += 1;
            }
        }
    }
    hits as f64 / (SUB * SUB) as f64
}

impl HalfDiskMesh {
    pub fn new(m: usize) -> Result<Self, FieldError> {
        Self::with_padding(m, 0.0)
    }

    /// Mesh whose fixed band extends a distance `pad` beyond the unit circle.
    pub fn with_padding(m: usize, pad: f64) -> Result<Self, FieldError> {
        if m < 2 || !(pad >= 0.0) || pad > 1.0 {
            return Err(FieldError::InvalidGrid(format!("half-disk mesh m = {m}, pad = {pad}")));
        }
        let h = 1.0 / m as f64;
        let ghost = (pad * m as f64).ceil() as usize + 1;
        let ni = m + ghost;
        let nj = 2 * (m + ghost);
        let rho = |i: usize| (i as f64 + 0.5) * h;
        let z = |j: usize| -1.0 + (j as f64 - ghost as f64 + 0.5) * h;
        let mut frac = vec![0.0; ni * nj];
        let mut kind = vec![NodeKind::Absent; ni * nj];
        for j in 0..nj {
            for i in 0..ni {
                let k = j * ni + i;
                frac[k] = rect_fraction(rho(i) - 0.5 * h, rho(i) + 0.5 * h, z(j) - 0.5 * h, z(j) + 0.5 * h);
                if rho(i).powi(2) + z(j).powi(2) < 1.0 {
                    kind[k] = NodeKind::Free;
                }
            }
        }
        let touches = |i: usize, j: usize| frac[j * ni + i] > 0.0;
        for j in 0..nj {
            for i in 0..ni {
                let k = j * ni + i;
                if kind[k] == NodeKind::Free {
                    continue;
                }
                let (r, zz) = (rho(i), z(j));
                let near = (pad > 0.0 && (r * r + zz * zz).sqrt() <= 1.0 + pad + 1.5 * h)
                    || touches(i, j)
                    || (i > 0 && touches(i - 1, j))
                    || (i + 1 < ni && touches(i + 1, j))
                    || (j > 0 && touches(i, j - 1))
                    || (j + 1 < nj && touches(i, j + 1));
                if near {
                    kind[k] = NodeKind::Fixed;
                }
            }
        }
        let mut w_rho = vec![0.0; ni * nj];
        let mut w_z = vec![0.0; ni * nj];
        for j in 0..nj {
            for i in 0..ni {
                let k = j * ni + i;
                if kind[k] == NodeKind::Absent {
                    continue;
                }
                if i + 1 < ni && kind[k + 1] != NodeKind::Absent {
                    w_rho[k] = rect_fraction(rho(i), rho(i + 1), z(j) - 0.5 * h, z(j) + 0.5 * h);
                }
                if j + 1 < nj && kind[k + ni] != NodeKind::Absent {
                    w_z[k] = rect_fraction(rho(i) - 0.5 * h, rho(i) + 0.5 * h, z(j), z(j + 1));
                }
            }
        }
        Ok(HalfDiskMesh {
            m,
            h,
            ghost,
            pad,
            ni,
            nj,
            kind,
            frac,
            w_rho,
            w_z,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn pad(&self) -> f64 {
        self.pad
    }

    /// `(ni, nj)`: extent of the index box including ghost rows.
    pub fn dims(&self) -> (usize, usize) {
        (self.ni, self.nj)
    }

    pub fn len(&self) -> usize {
        self.ni * self.nj
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.ni + i
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.ni, k / self.ni)
    }

    pub fn rho(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    pub fn z(&self, j: usize) -> f64 {
        -1.0 + (j as f64 - self.ghost as f64 + 0.5) * self.h
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.rho(i), self.z(j))
    }

    pub fn kind(&self, k: usize) -> NodeKind {
        self.kind[k]
    }

    pub fn cell_fraction(&self, k: usize) -> f64 {
        self.frac[k]
    }

    /// Weight of the edge from `k` to its `+ρ` neighbour.
    pub fn edge_weight_rho(&self, k: usize) -> f64 {
        self.w_rho[k]
    }

    /// Weight of the edge from `k` to its `+z` neighbour.
    pub fn edge_weight_z(&self, k: usize) -> f64 {
        self.w_z[k]
    }

    pub fn free_count(&self) -> usize {
        self.kind.iter().filter(|k| **k == NodeKind::Free).count()
    }
}

/// Angle field ψ(ρ,z) on a [`HalfDiskMesh`], encoding `u = sin ψ e_ρ + cos ψ e_z`.
#[derive(Debug, Clone)]
pub struct PsiField {
    mesh: Arc<HalfDiskMesh>,
    psi: Vec<f64>,
    bc: Option<Branch>,
}

impl PsiField {
    /// Samples `f(ρ, z)` at every present node; with `bc`, fixed nodes are
    /// overwritten by the boundary angle.
    pub fn from_fn<F>(mesh: Arc<HalfDiskMesh>, f: F, bc: Option<Branch>) -> Result<Self, FieldError>
    where
        F: Fn(f64, f64) -> f64,
    {
        let psi: Vec<f64> = (0..mesh.len())
            .map(|k| {
                let (r, z) = mesh.coords(k);
                match (mesh.kind(k), bc) {
                    (NodeKind::Absent, _) => 0.0,
                    (NodeKind::Fixed, Some(b)) => psi_boundary_value(b, r, z),
                    _ => f(r, z),
                }
            })
            .collect();
        if let Some(k) = (0..psi.len()).find(|&k| !psi[k].is_finite()) {
            return Err(FieldError::Undefined([mesh.coords(k).0, 0.0, mesh.coords(k).1]));
        }
        Ok(PsiField { mesh, psi, bc })
    }

    /// Wraps raw values (one per mesh index, absent nodes ignored).
    pub fn from_values(
        mesh: Arc<HalfDiskMesh>,
        psi: Vec<f64>,
        bc: Option<Branch>,
    ) -> Result<Self, FieldError> {
        if psi.len() != mesh.len() {
            return Err(FieldError::LengthMismatch {
                got: psi.len(),
                want: mesh.len(),
            });
        }
        let mut out = PsiField { mesh, psi, bc };
        out.reset_boundary();
        Ok(out)
    }

    /// Re-imposes the boundary angle on fixed nodes (no-op without `bc`).
    pub fn reset_boundary(&mut self) {
        if let Some(b) = self.bc {
            for k in 0..self.psi.len() {
                if self.mesh.kind(k) == NodeKind::Fixed {
                    let (r, z) = self.mesh.coords(k);
                    self.psi[k] = psi_boundary_value(b, r, z);
                }
            }
        }
    }

    pub fn mesh(&self) -> &Arc<HalfDiskMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.psi
    }

    pub fn bc(&self) -> Option<Branch> {
        self.bc
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.psi[self.mesh.index(i, j)]
    }

    /// Value at a mesh index, continued oddly across the axis (`i = −1`) and
    /// by boundary data at absent nodes.
    fn corner(&self, i: i64, j: i64) -> Result<f64, (f64, f64)> {
        let mesh = &self.mesh;
        let (ni, nj) = mesh.dims();
        let h = mesh.h();
        let rho = (i as f64 + 0.5) * h;
        let z = -1.0 + (j as f64 - mesh.ghost as f64 + 0.5) * h;
        if i == -1 {
            return self.corner(0, j).map(|v| -v);
        }
        let present = i >= 0
            && j >= 0
            && (i as usize) < ni
            && (j as usize) < nj
            && mesh.kind(mesh.index(i as usize, j as usize)) != NodeKind::Absent;
        if present {
            return Ok(self.psi[mesh.index(i as usize, j as usize)]);
        }
        match self.bc {
            Some(b) if i >= 0 => Ok(psi_boundary_value(b, rho, z)),
            _ => Err((rho, z)),
        }
    }

    /// Bilinear interpolation at `(ρ, z)`, `ρ ≥ 0`.
    pub fn interpolate(&self, rho: f64, z: f64) -> Result<f64, FieldError> {
        let h = self.mesh.h();
        let a = rho / h - 0.5;
        let b = (z + 1.0) / h + self.mesh.ghost as f64 - 0.5;
        let (i0, j0) = (a.floor(), b.floor());
        let (ta, tb) = (a - i0, b - j0);
        let (i0, j0) = (i0 as i64, j0 as i64);
        let mut acc = 0.0;
        for (di, wi) in [(0, 1.0 - ta), (1, ta)] {
            for (dj, wj) in [(0, 1.0 - tb), (1, tb)] {
                let w = wi * wj;
                if w <= 1e-14 {
                    continue;
                }
                acc += w * self
                    .corner(i0 + di, j0 + dj)
                    .map_err(|(r, z)| FieldError::Extrapolation([r, z]))?;
            }
        }
        Ok(acc)
    }

    /// `ψ(0, z)` by linear extrapolation from the first two columns.
    pub fn axis_value(&self, j: usize) -> f64 {
        1.5 * self.get(0, j) - 0.5 * self.get(1, j)
    }

    /// Copy with `ψ` replaced by `f(ψ)` at free nodes.
    pub fn map_free<F: Fn(f64) -> f64>(&self, f: F) -> PsiField {
        let mut out = self.clone();
        for k in 0..out.psi.len() {
            if self.mesh.kind(k) == NodeKind::Free {
                out.psi[k] = f(out.psi[k]);
            }
        }
        out
    }

    /// Interpolates onto another mesh (boundary data re-imposed there).
    pub fn resample(&self, mesh: Arc<HalfDiskMesh>) -> Result<PsiField, FieldError> {
        let vals: Result<Vec<f64>, FieldError> = (0..mesh.len())
            .map(|k| {
                let (r, z) = mesh.coords(k);
                match mesh.kind(k) {
                    NodeKind::Absent => Ok(0.0),
                    NodeKind::Fixed if self.bc.is_some() => Ok(0.0),
                    _ => self.interpolate(r, z),
                }
            })
            .collect();
        PsiField::from_values(mesh, vals?, self.bc)
    }
}

/// The lifted equivariant field as a point-evaluable source.
pub struct LiftedPsi<'a>(pub &'a PsiField);

impl LiftedPsi<'_> {
    pub fn value(&self, x: Vec3) -> Result<Vec3, FieldError> {
        let c = to_cylindrical(x);
        let psi = self.0.interpolate(c.rho, c.z)?;
        let (er, _, ez) = frame_at(c.theta);
        Ok(er.get() * psi.sin() + ez.get() * psi.cos())
    }
}

impl VectorField for LiftedPsi<'_> {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        self.value(x).ok()
    }
}

/// `u = sin ψ e_ρ + cos ψ e_z` at every node of `grid`, ψ interpolated bilinearly.
pub fn lift_equivariant(p: &PsiField, grid: Arc<BallGrid3>) -> Result<Field3, FieldError> {
    let lift = LiftedPsi(p);
    let values: Result<Vec<Vec3>, FieldError> = (0..grid.len())
        .into_par_iter()
        .map(|q| lift.value(grid.position(q)))
        .collect();
    Field3::from_values(grid, values?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;
    use std::f64::consts::PI;

    #[test]
    fn mesh_layout() {
        let mesh = HalfDiskMesh::new(16).unwrap();
        for k in 0..mesh.len() {
            let (r, z) = mesh.coords(k);
            assert!(r > 0.0);
            match mesh.kind(k) {
                NodeKind::Free => assert!(r * r + z * z < 1.0),
                NodeKind::Fixed => assert!(r * r + z * z >= 1.0),
                NodeKind::Absent => assert_eq!(mesh.cell_fraction(k), 0.0),
            }
        }
        let area: f64 = (0..mesh.len()).map(|k| mesh.cell_fraction(k)).sum::<f64>() * mesh.h().powi(2);
        assert!((area - PI / 2.0).abs() < 1e-3, "{area}");
    }

    #[test]
    fn boundary_values_on_circle() {
        let phi = 0.7f64;
        let v = psi_boundary_value(Branch::Minus, phi.sin(), phi.cos());
        assert!((v - (phi - FRAC_PI_2)).abs() < 1e-15);
        assert!((psi_boundary_value(Branch::Plus, 1.0, 0.0) - PI).abs() < 1e-15);
    }

    #[test]
    fn lift_examples() {
        let mesh = Arc::new(HalfDiskMesh::with_padding(32, 0.2).unwrap());
        let grid = Arc::new(BallGrid3::new(GridSpec::ball(12, 1.0)).unwrap());
        let zero = PsiField::from_fn(mesh.clone(), |_, _| 0.0, None).unwrap();
        let f = lift_equivariant(&zero, grid.clone()).unwrap();
        assert!(f.values().iter().all(|v| (*v - Vec3::E3).norm() < 1e-15));
        let half = PsiField::from_fn(mesh.clone(), |_, _| FRAC_PI_2, None).unwrap();
        let lifted = LiftedPsi(&half);
        let x = Vec3::new(0.3, -0.4, 0.1);
        let v = lifted.eval(x).unwrap();
        assert!((v - Vec3::new(0.6, -0.8, 0.0)).norm() < 1e-14);
        let g = PsiField::from_fn(mesh, |r, z| r * (1.0 - z * z), Some(Branch::Minus)).unwrap();
        let f = lift_equivariant(&g, grid.clone()).unwrap();
        let worst = (0..grid.len())
            .map(|q| {
                let c = to_cylindrical(grid.position(q));
                f.value(q).dot(frame_at(c.theta).1.get()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-12);
    }

    #[test]
    fn lift_without_bc_rejects_far_points() {
        let mesh = Arc::new(HalfDiskMesh::new(8).unwrap());
        let p = PsiField::from_fn(mesh, |r, _| r, None).unwrap();
        assert!(matches!(p.interpolate(0.2, 1.5), Err(FieldError::Extrapolation(_))));
        let padded = Arc::new(HalfDiskMesh::with_padding(8, 0.3).unwrap());
        let p = PsiField::from_fn(padded, |r, _| r, None).unwrap();
        assert!(p.interpolate(0.2, 1.2).is_ok());
        assert!(p.interpolate(0.2, 0.3).is_ok());
    }

    #[test]
    fn odd_continuation_at_axis() {
        let mesh = Arc::new(HalfDiskMesh::new(16).unwrap());
        let p = PsiField::from_fn(mesh, |r, z| 2.0 * r * (1.0 + z), None).unwrap();
        assert!(p.interpolate(0.0, 0.2).unwrap().abs() < 1e-15);
        let v = p.interpolate(0.01, 0.2).unwrap();
        assert!((v - 0.024).abs() < 1e-12, "{v}");
    }

    #[test]
    fn lift_is_equivariant() {
        let mesh = Arc::new(HalfDiskMesh::new(24).unwrap());
        let p = PsiField::from_fn(mesh, |r, z| (r * 3.0).sin() * (1.0 - z * z) - 0.4 * r, Some(Branch::Minus)).unwrap();
        let lifted = LiftedPsi(&p);
        for k in 0..8 {
            let a = 0.37 + 0.71 * k as f64;
            let (s, c) = a.sin_cos();
            let rot = |v: Vec3| Vec3::new(c * v.x1 - s * v.x2, s * v.x1 + c * v.x2, v.x3);
            for x in [Vec3::new(0.2, 0.1, 0.3), Vec3::new(-0.5, 0.4, -0.2), Vec3::new(0.05, -0.6, 0.7)] {
                let d = lifted.eval(rot(x)).unwrap() - rot(lifted.eval(x).unwrap());
                assert!(d.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn resample_preserves_smooth_fields() {
        let coarse = Arc::new(HalfDiskMesh::with_padding(16, 0.1).unwrap());
        let fine = Arc::new(HalfDiskMesh::new(32).unwrap());
        let f = |r: f64, z: f64| 0.5 * r * z;
        let p = PsiField::from_fn(coarse, f, None).unwrap();
        let q = p.resample(fine.clone()).unwrap();
        for k in 0..fine.len() {
            if fine.kind(k) == NodeKind::Free {
                let (r, z) = fine.coords(k);
                assert!((q.values()[k] - f(r, z)).abs() < 1e-3);
            }
        }
    }
}
