use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::geometry::{frame_at, to_cylindrical, Vec3};

use super::{FieldError, VectorField};

/// Sample lattice `(ρ_i, θ_l, z_j)` over the ball `B_R`:
/// `ρ_i = (i+½)Δρ`, `θ_l = (l+½)2π/N_θ`, `z_j = −R + (j+½)Δz`.
///
/// A column `(i, j)` is present when its `(ρ,z)` cell meets the disk of
/// radius `R`; `fraction` is the area share of the cell inside the disk.
#[derive(Debug, Clone)]
pub struct CylGrid {
    n_rho: usize,
    n_theta: usize,
    n_z: usize,
    radius: f64,
    d_rho: f64,
    d_z: f64,
    frac: Vec<f64>,
    boundary: Vec<bool>,
}

impl CylGrid {
    /// `n_theta` must be a power of two.
    pub fn new(n_rho: usize, n_theta: usize, n_z: usize, radius: f64) -> Result<Self, FieldError> {
        if n_rho < 2 || n_z < 2 || !n_theta.is_power_of_two() || n_theta < 2 || !(radius > 0.0) {
            return Err(FieldError::InvalidGrid(format!(
                "cylindrical grid {n_rho}x{n_theta}x{n_z}, R = {radius}"
            )));
        }
        let d_rho = radius / n_rho as f64;
        let d_z = 2.0 * radius / n_z as f64;
        let mut frac = vec![0.0; n_rho * n_z];
        const S: usize = 8;
        for j in 0..n_z {
            for i in 0..n_rho {
                let mut hits = 0;
                for a in 0..S {
                    for b in 0..S {
                        let r = (i as f64 + (a as f64 + 0.5) / S as f64) * d_rho;
                        let z = -radius + (j as f64 + (b as f64 + 0.5) / S as f64) * d_z;
                        if r * r + z * z < radius * radius {
                            hits += 1;
                        }
                    }
                }
                frac[j * n_rho + i] = hits as f64 / (S * S) as f64;
            }
        }
        let present = |i: i64, j: i64| {
            i >= 0 && j >= 0 && (i as usize) < n_rho && (j as usize) < n_z && frac[j as usize * n_rho + i as usize] > 0.0
        };
        let mut boundary = vec![false; n_rho * n_z];
        for j in 0..n_z as i64 {
            for i in 0..n_rho as i64 {
                if present(i, j) {
                    boundary[j as usize * n_rho + i as usize] = !present(i + 1, j)
                        || !present(i, j + 1)
                        || !present(i, j - 1)
                        || frac[j as usize * n_rho + i as usize] < 1.0;
                }
            }
        }
        Ok(CylGrid {
            n_rho,
            n_theta,
            n_z,
            radius,
            d_rho,
            d_z,
            frac,
            boundary,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_rho, self.n_theta, self.n_z)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn d_rho(&self) -> f64 {
        self.d_rho
    }

    pub fn d_z(&self) -> f64 {
        self.d_z
    }

    pub fn d_theta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn rho(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.d_rho
    }

    pub fn theta(&self, l: usize) -> f64 {
        (l as f64 + 0.5) * self.d_theta()
    }

    pub fn z(&self, j: usize) -> f64 {
        -self.radius + (j as f64 + 0.5) * self.d_z
    }

    pub fn fraction(&self, i: usize, j: usize) -> f64 {
        self.frac[j * self.n_rho + i]
    }

    pub fn present(&self, i: usize, j: usize) -> bool {
        self.fraction(i, j) > 0.0
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        self.boundary[j * self.n_rho + i]
    }

    /// Flat index of sample `(i, l, j)`; rings are contiguous in `l`.
    pub fn index(&self, i: usize, l: usize, j: usize) -> usize {
        (j * self.n_rho + i) * self.n_theta + l
    }

    pub fn len(&self) -> usize {
        self.n_rho * self.n_theta * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Cylindrical components `(u_ρ, u_θ, u_z)` on a [`CylGrid`].
#[derive(Debug, Clone)]
pub struct CylField {
    grid: Arc<CylGrid>,
    comps: Vec<[f64; 3]>,
}

impl CylField {
    /// Samples and normalizes `f` at every present sample point.
    pub fn from_field<F: VectorField>(f: &F, grid: Arc<CylGrid>) -> Result<Self, FieldError> {
        let (nr, nt, nz) = grid.dims();
        let cols: Result<Vec<Vec<[f64; 3]>>, FieldError> = (0..nr * nz)
            .into_par_iter()
            .map(|c| {
                let (i, j) = (c % nr, c / nr);
                if !grid.present(i, j) {
                    return Ok(vec![[0.0; 3]; nt]);
                }
                (0..nt)
                    .map(|l| {
                        let th = grid.theta(l);
                        let (r, z) = (grid.rho(i), grid.z(j));
                        let x = Vec3::new(r * th.cos(), r * th.sin(), z);
                        let v = f
                            .eval(x)
                            .and_then(|v| v.normalized(1e-8))
                            .ok_or(FieldError::Undefined(x.to_array()))?;
                        let (er, et, ez) = frame_at(th);
                        Ok([v.dot(er.get()), v.dot(et.get()), v.dot(ez.get())])
                    })
                    .collect()
            })
            .collect();
        let mut comps = vec![[0.0; 3]; grid.len()];
        for (c, col) in cols?.into_iter().enumerate() {
            let (i, j) = (c % nr, c / nr);
            for (l, v) in col.into_iter().enumerate() {
                comps[grid.index(i, l, j)] = v;
            }
        }
        Ok(CylField { grid, comps })
    }

    /// Builds from a function of `(ρ, θ, z)` returning cylindrical components.
    pub fn from_components<F>(grid: Arc<CylGrid>, f: F) -> Result<Self, FieldError>
    where
        F: Fn(f64, f64, f64) -> [f64; 3],
    {
        let (nr, nt, nz) = grid.dims();
        let mut comps = vec![[0.0; 3]; grid.len()];
        for j in 0..nz {
            for i in 0..nr {
                if !grid.present(i, j) {
                    continue;
                }
                for l in 0..nt {
                    let v = f(grid.rho(i), grid.theta(l), grid.z(j));
                    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if !(n > 1e-8) || !n.is_finite() {
                        return Err(FieldError::ZeroNorm {
                            node: grid.index(i, l, j),
                            pos: [grid.rho(i), grid.theta(l), grid.z(j)],
                        });
                    }
                    comps[grid.index(i, l, j)] = [v[0] / n, v[1] / n, v[2] / n];
                }
            }
        }
        Ok(CylField { grid, comps })
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        &self.grid
    }

    pub fn comps(&self) -> &[[f64; 3]] {
        &self.comps
    }

    pub fn get(&self, i: usize, l: usize, j: usize) -> [f64; 3] {
        self.comps[self.grid.index(i, l, j)]
    }

    pub(crate) fn with_comps(&self, comps: Vec<[f64; 3]>) -> CylField {
        CylField {
            grid: self.grid.clone(),
            comps,
        }
    }

    /// Largest `| |u| − 1 |` over present samples.
    pub fn norm_defect(&self) -> f64 {
        let g = &self.grid;
        let (nr, nt, nz) = g.dims();
        let mut worst: f64 = 0.0;
        for j in 0..nz {
            for i in 0..nr {
                if g.present(i, j) {
                    for l in 0..nt {
                        let v = self.get(i, l, j);
                        worst = worst.max(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest `|u·ν|` over boundary columns, `ν = (ρ e_ρ + z e_z)/|(ρ,z)|`.
    pub fn tangency_residual(&self) -> f64 {
        let g = &self.grid;
        let (nr, nt, nz) = g.dims();
        let mut worst: f64 = 0.0;
        for j in 0..nz {
            for i in 0..nr {
                if g.present(i, j) && g.is_boundary(i, j) {
                    let (r, z) = (g.rho(i), g.z(j));
                    let n = r.hypot(z);
                    for l in 0..nt {
                        let v = self.get(i, l, j);
                        worst = worst.max(((v[0] * r + v[2] * z) / n).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest component difference between samples `period` apart in θ.
    pub fn periodicity_defect(&self, period: usize) -> f64 {
        let g = &self.grid;
        let (nr, nt, nz) = g.dims();
        let mut worst: f64 = 0.0;
        for j in 0..nz {
            for i in 0..nr {
                if !g.present(i, j) {
                    continue;
                }
                for l in 0..nt {
                    let a = self.get(i, l, j);
                    let b = self.get(i, (l + period) % nt, j);
                    for k in 0..3 {
                        worst = worst.max((a[k] - b[k]).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Interpolation in `(ρ, θ, z)` (periodic in θ, constant below the first
/// ring), returned as a normalized Cartesian vector.
impl VectorField for CylField {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        let g = &self.grid;
        let (nr, nt, nz) = g.dims();
        let c = to_cylindrical(x);
        let a = (c.rho / g.d_rho - 0.5).max(0.0);
        let t = c.theta / g.d_theta() - 0.5;
        let b = (c.z + g.radius) / g.d_z - 0.5;
        let (i0, l0, j0) = (a.floor(), t.floor(), b.floor());
        let (ta, tt, tb) = (a - i0, t - l0, b - j0);
        let mut acc = [0.0; 3];
        let mut wsum = 0.0;
        for (di, wi) in [(0i64, 1.0 - ta), (1, ta)] {
            for (dj, wj) in [(0i64, 1.0 - tb), (1, tb)] {
                let (i, j) = (i0 as i64 + di, j0 as i64 + dj);
                if wi * wj <= 1e-14 || i < 0 || j < 0 || i as usize >= nr || j as usize >= nz || !g.present(i as usize, j as usize) {
                    continue;
                }
                for (dl, wl) in [(0i64, 1.0 - tt), (1, tt)] {
                    let l = (l0 as i64 + dl).rem_euclid(nt as i64) as usize;
                    let w = wi * wj * wl;
                    let v = self.get(i as usize, l, j as usize);
                    for k in 0..3 {
                        acc[k] += w * v[k];
                    }
                    wsum += w;
                }
            }
        }
        if wsum <= 0.0 {
            return None;
        }
        let (er, et, ez) = frame_at(c.theta);
        (er.get() * acc[0] + et.get() * acc[1] + ez.get() * acc[2]).normalized(1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FnField;

    #[test]
    fn grid_checks() {
        assert!(CylGrid::new(8, 12, 16, 1.0).is_err());
        let g = CylGrid::new(16, 8, 32, 1.0).unwrap();
        let area: f64 = (0..32)
            .flat_map(|j| (0..16).map(move |i| (i, j)))
            .map(|(i, j)| g.fraction(i, j))
            .sum::<f64>()
            * g.d_rho()
            * g.d_z();
        assert!((area - PI / 2.0).abs() < 2e-3);
    }

    #[test]
    fn round_trip_through_cartesian() {
        let g = Arc::new(CylGrid::new(12, 16, 24, 1.0).unwrap());
        let f = FnField(|x: Vec3| Vec3::new(x.x2, -x.x1, 1.0).normalized(1e-12).unwrap());
        let c = CylField::from_field(&f, g.clone()).unwrap();
        assert!(c.norm_defect() < 1e-14);
        // components are θ-independent for this equivariant field
        assert!(c.periodicity_defect(1) < 1e-14);
        let x = Vec3::new(0.31, 0.2, -0.1);
        let v = c.eval(x).unwrap();
        assert!((v - f.eval(x).unwrap()).norm() < 2e-3);
    }
}
