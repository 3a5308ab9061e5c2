//! Discrete energies and Euler–Lagrange residuals.
//!
//! Cartesian fields use cut-cell midpoint quadrature. The Dirichlet energy
//! takes, per node and axis, the mean of the squared forward and backward
//! differences (one-sided where a neighbour is missing); this is the
//! functional the 3D solver descends. Quantities that need the full Jacobian
//! at a node use central differences.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::fields::{BallGrid3, CylField, Field3, FieldError, NodeKind, PsiField, VectorField};
use crate::geometry::{frame_at, to_cylindrical, Vec3};
use crate::par;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("node at {pos:?} is closer than 2h to the domain boundary (depth {depth:e}, h {h:e})")]
    NearBoundary { pos: [f64; 3], depth: f64, h: f64 },
    #[error("field undefined at {0:?}")]
    Undefined([f64; 3]),
    #[error("degenerate sector [{0}, {1}]")]
    Sector(f64, f64),
    #[error("{0}")]
    Domain(String),
}

/// Number of present neighbours of `p` along `axis`.
fn axis_count(g: &BallGrid3, p: usize, axis: usize) -> usize {
    usize::from(g.neighbor(p, axis, -1).is_some()) + usize::from(g.neighbor(p, axis, 1).is_some())
}

/// Per-axis contributions `[x, y, z]` to `½∫|∇u|²`.
pub fn dirichlet_energy_axes(f: &Field3) -> [f64; 3] {
    let g = f.grid();
    let inv_h2 = 1.0 / (g.h() * g.h());
    par::sum_array::<3, _>(g.len(), |p| {
        let u = f.value(p);
        let mut out = [0.0; 3];
        for (a, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut cnt = 0;
            for dir in [-1, 1] {
                if let Some(q) = g.neighbor(p, a, dir) {
                    acc += (f.value(q) - u).norm_sq();
                    cnt += 1;
                }
            }
            if cnt > 0 {
                *slot = 0.5 * g.volume(p) * acc * inv_h2 / cnt as f64;
            }
        }
        out
    })
}

/// `½∫|∇u|²` over the grid's domain.
pub fn dirichlet_energy(f: &Field3) -> f64 {
    dirichlet_energy_axes(f).iter().sum()
}

/// Gradient of [`dirichlet_energy`] with respect to the nodal values.
pub fn dirichlet_gradient(f: &Field3) -> Vec<Vec3> {
    use rayon::prelude::*;
    let g = f.grid();
    let inv_h2 = 1.0 / (g.h() * g.h());
    (0..g.len())
        .into_par_iter()
        .map(|p| {
            let u = f.value(p);
            let mut acc = Vec3::ZERO;
            for a in 0..3 {
                let cp = axis_count(g, p, a);
                for dir in [-1, 1] {
                    if let Some(q) = g.neighbor(p, a, dir) {
                        let w = g.volume(p) / cp as f64 + g.volume(q) / axis_count(g, q, a) as f64;
                        acc += (u - f.value(q)) * (w * inv_h2);
                    }
                }
            }
            acc
        })
        .collect()
}

/// Central-difference Jacobian `J[i][a] = ∂_a u_i` at node `p`, one-sided
/// where a neighbour is missing.
fn node_jacobian(f: &Field3, p: usize) -> [[f64; 3]; 3] {
    let g = f.grid();
    let h = g.h();
    let u = f.value(p);
    let mut j = [[0.0; 3]; 3];
    for a in 0..3 {
        let d = match (g.neighbor(p, a, -1), g.neighbor(p, a, 1)) {
            (Some(m), Some(q)) => (f.value(q) - f.value(m)) * (0.5 / h),
            (None, Some(q)) => (f.value(q) - u) * (1.0 / h),
            (Some(m), None) => (u - f.value(m)) * (1.0 / h),
            (None, None) => Vec3::ZERO,
        };
        for i in 0..3 {
            j[i][a] = d[i];
        }
    }
    j
}

/// The pieces of the exterior energy, each `½∫ |x|⁻² [·]` over `B₂∖B₁`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExteriorTerms {
    /// The constant `4π`.
    pub constant: f64,
    /// `|∇w|²`.
    pub gradient: f64,
    /// `(4/|x|⁴)(w·x)²`.
    pub normal: f64,
    /// `(4/|x|²) wᵀ(∇w)ᵀx`.
    pub advective: f64,
    /// `−(4/|x|²)(w·x) div w`.
    pub divergence: f64,
}

impl ExteriorTerms {
    pub fn total(&self) -> f64 {
        self.constant + self.gradient + self.normal + self.advective + self.divergence
    }
}

fn exterior_integrand(x: Vec3, w: Vec3, j: &[[f64; 3]; 3]) -> [f64; 4] {
    let r2 = x.norm_sq();
    let grad: f64 = j.iter().flatten().map(|v| v * v).sum();
    let wx = w.dot(x);
    let adv: f64 = (0..3).map(|i| x[i] * (0..3).map(|a| j[i][a] * w[a]).sum::<f64>()).sum();
    let div = j[0][0] + j[1][1] + j[2][2];
    [
        grad / r2,
        4.0 * wx * wx / (r2 * r2 * r2),
        4.0 * adv / (r2 * r2),
        -4.0 * wx * div / (r2 * r2),
    ]
}

/// Exterior energy of a field sampled on the shell `B₂∖B₁`.
pub fn exterior_energy_terms(f: &Field3) -> Result<ExteriorTerms, EnergyError> {
    let g = f.grid();
    let s = g.spec();
    if (s.r_in - 1.0).abs() > 1e-12 || (s.r_out - 2.0).abs() > 1e-12 {
        return Err(EnergyError::Domain(format!(
            "exterior energy needs the shell 1 < |x| < 2, got {} < |x| < {}",
            s.r_in, s.r_out
        )));
    }
    let t = par::sum_array::<4, _>(g.len(), |p| {
        let v = exterior_integrand(g.position(p), f.value(p), &node_jacobian(f, p));
        v.map(|x| 0.5 * g.volume(p) * x)
    });
    Ok(ExteriorTerms {
        constant: 4.0 * PI,
        gradient: t[0],
        normal: t[1],
        advective: t[2],
        divergence: t[3],
    })
}

pub fn exterior_energy(f: &Field3) -> Result<f64, EnergyError> {
    exterior_energy_terms(f).map(|t| t.total())
}

/// Exterior energy of a closed-form field by tensor quadrature on the shell:
/// Gauss–Legendre in `r`, in `cos φ` and uniform in the azimuth, with the
/// Jacobian by central differences of step `fd_step`.
pub fn exterior_energy_reference<F: VectorField>(
    f: &F,
    n_r: usize,
    n_polar: usize,
    fd_step: f64,
) -> Result<f64, EnergyError> {
    let (xr, wr) = crate::quad::gauss_legendre(n_r);
    let (xp, wp) = crate::quad::gauss_legendre(n_polar);
    let n_az = 2 * n_polar;
    let eval = |x: Vec3| f.eval(x).ok_or(EnergyError::Undefined(x.to_array()));
    let mut total = 0.0;
    for (a, &sr) in xr.iter().enumerate() {
        let r = 1.5 + 0.5 * sr;
        for (b, &ct) in xp.iter().enumerate() {
            let st = (1.0 - ct * ct).sqrt();
            for c in 0..n_az {
                let ph = 2.0 * PI * (c as f64 + 0.5) / n_az as f64;
                let x = Vec3::new(r * st * ph.cos(), r * st * ph.sin(), r * ct);
                let w = eval(x)?;
                let mut j = [[0.0; 3]; 3];
                for k in 0..3 {
                    let e = Vec3::basis(k) * fd_step;
                    let d = (eval(x + e)? - eval(x - e)?) * (0.5 / fd_step);
                    for i in 0..3 {
                        j[i][k] = d[i];
                    }
                }
                let v: f64 = exterior_integrand(x, w, &j).iter().sum();
                total += 0.5 * v * r * r * 0.5 * wr[a] * wp[b] * (2.0 * PI / n_az as f64);
            }
        }
    }
    Ok(4.0 * PI + total)
}

/// Result of the T-functional quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TReport {
    pub value: f64,
    /// Nodes with `ρ < 2h`, left out of the sum.
    pub excluded_nodes: usize,
    pub excluded_volume: f64,
}

/// `T = ∫ ρ⁻²(u_ρ ∂_θu_θ − u_θ ∂_θu_ρ)` over the nodes of `grid`, with
/// `∂_θ` by central differences along the circle through each node
/// (`N_θ = 4n` points per circle).
pub fn t_functional<F: VectorField>(f: &F, grid: &BallGrid3) -> Result<TReport, EnergyError> {
    let h = grid.h();
    let dth = 2.0 * PI / crate::fields::circle_samples(grid.n()) as f64;
    let comps = |rho: f64, th: f64, z: f64| -> Result<[f64; 2], EnergyError> {
        let x = Vec3::new(rho * th.cos(), rho * th.sin(), z);
        let v = f.eval(x).ok_or(EnergyError::Undefined(x.to_array()))?;
        let (er, et, _) = frame_at(th);
        Ok([v.dot(er.get()), v.dot(et.get())])
    };
    let failed = std::sync::atomic::AtomicBool::new(false);
    let first_err = std::sync::Mutex::new(None);
    let [value, excluded_nodes, excluded_volume] = par::sum_array::<3, _>(grid.len(), |p| {
        let c = to_cylindrical(grid.position(p));
        if c.rho < 2.0 * h {
            return [0.0, 1.0, grid.volume(p)];
        }
        let res = (|| -> Result<f64, EnergyError> {
            let u = comps(c.rho, c.theta, c.z)?;
            let up = comps(c.rho, c.theta + dth, c.z)?;
            let um = comps(c.rho, c.theta - dth, c.z)?;
            let d = [(up[0] - um[0]) / (2.0 * dth), (up[1] - um[1]) / (2.0 * dth)];
            Ok((u[0] * d[1] - u[1] * d[0]) / (c.rho * c.rho))
        })();
        match res {
            Ok(v) => [v * grid.volume(p), 0.0, 0.0],
            Err(e) => {
                failed.store(true, std::sync::atomic::Ordering::Relaxed);
                first_err.lock().expect("lock").get_or_insert(e);
                [0.0; 3]
            }
        }
    });
    if failed.into_inner() {
        if let Some(e) = first_err.into_inner().expect("lock") {
            return Err(e);
        }
    }
    Ok(TReport {
        value,
        excluded_nodes: excluded_nodes as usize,
        excluded_volume,
    })
}

/// Energies of a [`CylField`], all sharing one set of discrete operators,
/// so that `sym = dirichlet − t − theta_term` holds to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CylEnergies {
    /// `½∫|∇u|²`.
    pub dirichlet: f64,
    /// `∫ρ⁻²(u_ρ∂_θu_θ − u_θ∂_θu_ρ)`.
    pub t: f64,
    /// `½ Σ_a ∫ (∂_θu_a)²/(2ρ) dρ dθ dz`.
    pub theta_term: f64,
    /// The modified energy with halved θ-derivative weight and no T.
    pub sym: f64,
    /// `Σ_a ∫ (∂_θu_a)²/ρ² dx`, zero exactly for θ-independent components.
    pub theta_derivative: f64,
}

/// Energies over the samples `l ∈ [l_lo, l_hi)`; θ-differences are taken
/// periodically and may reach outside the range.
pub fn cyl_energies_range(f: &CylField, l_lo: usize, l_hi: usize) -> CylEnergies {
    let g = f.grid();
    let (nr, nt, nz) = g.dims();
    let (dr, dz, dth) = (g.d_rho(), g.d_z(), g.d_theta());
    let cols = nr * nz;
    let s = par::sum_array::<5, _>(cols, |c| {
        let (i, j) = (c % nr, c / nr);
        if !g.present(i, j) {
            return [0.0; 5];
        }
        let rho = g.rho(i);
        let w = rho * dr * dth * dz * g.fraction(i, j);
        let mut nb_r = Vec::with_capacity(2);
        if i > 0 && g.present(i - 1, j) {
            nb_r.push(i - 1);
        }
        if i + 1 < nr && g.present(i + 1, j) {
            nb_r.push(i + 1);
        }
        let mut nb_z = Vec::with_capacity(2);
        if j > 0 && g.present(i, j - 1) {
            nb_z.push(j - 1);
        }
        if j + 1 < nz && g.present(i, j + 1) {
            nb_z.push(j + 1);
        }
        let mut out = [0.0; 5];
        for l in l_lo..l_hi {
            let u = f.get(i, l, j);
            let up = f.get(i, (l + 1) % nt, j);
            let um = f.get(i, (l + nt - 1) % nt, j);
            let sq = |a: [f64; 3], b: [f64; 3]| -> f64 { (0..3).map(|k| (a[k] - b[k]).powi(2)).sum() };
            let d_r = if nb_r.is_empty() {
                0.0
            } else {
                nb_r.iter().map(|&q| sq(f.get(q, l, j), u)).sum::<f64>() / (nb_r.len() as f64 * dr * dr)
            };
            let d_z = if nb_z.is_empty() {
                0.0
            } else {
                nb_z.iter().map(|&q| sq(f.get(i, l, q), u)).sum::<f64>() / (nb_z.len() as f64 * dz * dz)
            };
            let d_th = 0.5 * (sq(up, u) + sq(um, u)) / (dth * dth);
            let c_rho = (up[0] - um[0]) / (2.0 * dth);
            let c_th = (up[1] - um[1]) / (2.0 * dth);
            let r2 = rho * rho;
            let tloc = (u[0] * c_th - u[1] * c_rho) / r2;
            let zero = (u[0] * u[0] + u[1] * u[1]) / r2;
            out[0] += w * 0.5 * (d_r + d_z + d_th / r2 + 2.0 * tloc + zero);
            out[1] += w * tloc;
            out[2] += w * d_th / (4.0 * r2);
            out[3] += w * 0.5 * (d_r + d_z + d_th / (2.0 * r2) + zero);
            out[4] += w * d_th / r2;
        }
        out
    });
    CylEnergies {
        dirichlet: s[0],
        t: s[1],
        theta_term: s[2],
        sym: s[3],
        theta_derivative: s[4],
    }
}

pub fn cyl_energies(f: &CylField) -> CylEnergies {
    cyl_energies_range(f, 0, f.grid().dims().1)
}

/// Sample range `[l_lo, l_hi)` of the sector `[θ₁, θ₂)`.
pub fn sector_range(f: &CylField, theta1: f64, theta2: f64) -> Result<(usize, usize), EnergyError> {
    if !(theta2 > theta1) || theta1 < 0.0 || theta2 > 2.0 * PI + 1e-12 {
        return Err(EnergyError::Sector(theta1, theta2));
    }
    let g = f.grid();
    let nt = g.dims().1;
    let lo = (0..nt).find(|&l| g.theta(l) >= theta1).unwrap_or(nt);
    let hi = (0..nt).find(|&l| g.theta(l) >= theta2).unwrap_or(nt);
    if hi <= lo {
        return Err(EnergyError::Sector(theta1, theta2));
    }
    Ok((lo, hi))
}

/// The symmetrization energy over the sector `[θ₁, θ₂)`.
pub fn symmetrization_energy(f: &CylField, theta1: f64, theta2: f64) -> Result<f64, EnergyError> {
    let (lo, hi) = sector_range(f, theta1, theta2)?;
    Ok(cyl_energies_range(f, lo, hi).sym)
}

/// `π Σ_edges ρ_e w_e (Δψ)²` and `π Σ_nodes h² frac sin²ψ/ρ`.
pub fn reduced_energy_terms(p: &PsiField) -> (f64, f64) {
    let mesh = p.mesh();
    let (ni, _) = mesh.dims();
    let h = mesh.h();
    let psi = p.values();
    let [grad, pot] = par::sum_array::<2, _>(mesh.len(), |k| {
        if mesh.kind(k) == NodeKind::Absent {
            return [0.0; 2];
        }
        let (i, _) = mesh.ij(k);
        let rho = mesh.rho(i);
        let mut g = 0.0;
        let wr = mesh.edge_weight_rho(k);
        if wr > 0.0 {
            g += (i as f64 + 1.0) * h * wr * (psi[k + 1] - psi[k]).powi(2);
        }
        let wz = mesh.edge_weight_z(k);
        if wz > 0.0 {
            g += rho * wz * (psi[k + ni] - psi[k]).powi(2);
        }
        [g, h * h * mesh.cell_fraction(k) * psi[k].sin().powi(2) / rho]
    });
    (PI * grad, PI * pot)
}

/// `π∫(ψ_ρ² + ψ_z² + sin²ψ/ρ²) ρ dρ dz`, the Dirichlet energy of the lift.
pub fn reduced_energy(p: &PsiField) -> f64 {
    let (a, b) = reduced_energy_terms(p);
    a + b
}

/// Gradient of [`reduced_energy`] at free nodes (zero elsewhere).
pub fn reduced_gradient(p: &PsiField) -> Vec<f64> {
    use rayon::prelude::*;
    let mesh = p.mesh();
    let (ni, _) = mesh.dims();
    let h = mesh.h();
    let psi = p.values();
    (0..mesh.len())
        .into_par_iter()
        .map(|k| {
            if mesh.kind(k) != NodeKind::Free {
                return 0.0;
            }
            let (i, _) = mesh.ij(k);
            let rho = mesh.rho(i);
            let mut g = h * h * mesh.cell_fraction(k) * (2.0 * psi[k]).sin() / rho;
            let w = mesh.edge_weight_rho(k);
            if w > 0.0 {
                g += 2.0 * (i as f64 + 1.0) * h * w * (psi[k] - psi[k + 1]);
            }
            if i > 0 {
                let w = mesh.edge_weight_rho(k - 1);
                if w > 0.0 {
                    g += 2.0 * i as f64 * h * w * (psi[k] - psi[k - 1]);
                }
            }
            let w = mesh.edge_weight_z(k);
            if w > 0.0 {
                g += 2.0 * rho * w * (psi[k] - psi[k + ni]);
            }
            if k >= ni {
                let w = mesh.edge_weight_z(k - ni);
                if w > 0.0 {
                    g += 2.0 * rho * w * (psi[k] - psi[k - ni]);
                }
            }
            PI * g
        })
        .collect()
}

/// Central-difference Laplacian, gradient Jacobian and value of a
/// closed-form field at `x` with step `h`.
fn stencil<F: VectorField>(f: &F, x: Vec3, h: f64) -> Result<(Vec3, [[f64; 3]; 3], Vec3), EnergyError> {
    let eval = |y: Vec3| f.eval(y).ok_or(EnergyError::Undefined(y.to_array()));
    let u = eval(x)?;
    let mut lap = Vec3::ZERO;
    let mut j = [[0.0; 3]; 3];
    for a in 0..3 {
        let e = Vec3::basis(a) * h;
        let (up, um) = (eval(x + e)?, eval(x - e)?);
        lap += (up + um - u * 2.0) * (1.0 / (h * h));
        let d = (up - um) * (0.5 / h);
        for i in 0..3 {
            j[i][a] = d[i];
        }
    }
    Ok((lap, j, u))
}

fn grid_stencil(f: &Field3, p: usize) -> Result<(Vec3, [[f64; 3]; 3], Vec3), EnergyError> {
    let g = f.grid();
    let h = g.h();
    let x = g.position(p);
    let depth = g.depth(p);
    let near = || EnergyError::NearBoundary { pos: x.to_array(), depth, h };
    if depth < 2.0 * h {
        return Err(near());
    }
    let u = f.value(p);
    let mut lap = Vec3::ZERO;
    let mut j = [[0.0; 3]; 3];
    for a in 0..3 {
        let up = f.value(g.neighbor(p, a, 1).ok_or_else(near)?);
        let um = f.value(g.neighbor(p, a, -1).ok_or_else(near)?);
        lap += (up + um - u * 2.0) * (1.0 / (h * h));
        let d = (up - um) * (0.5 / h);
        for i in 0..3 {
            j[i][a] = d[i];
        }
    }
    Ok((lap, j, u))
}

fn harmonic_from(lap: Vec3, j: &[[f64; 3]; 3], u: Vec3) -> Vec3 {
    let g2: f64 = j.iter().flatten().map(|v| v * v).sum();
    -lap - u * g2
}

/// `−Δu − |∇u|²u` at node `p` by central second differences.
pub fn harmonic_residual(f: &Field3, p: usize) -> Result<Vec3, EnergyError> {
    let (lap, j, u) = grid_stencil(f, p)?;
    Ok(harmonic_from(lap, &j, u))
}

/// `−Δu − |∇u|²u` of a closed-form field at `x`, stencil step `h`.
pub fn harmonic_residual_at<F: VectorField>(f: &F, x: Vec3, h: f64) -> Result<Vec3, EnergyError> {
    let (lap, j, u) = stencil(f, x, h)?;
    Ok(harmonic_from(lap, &j, u))
}

/// Components of `r` along `u`, along `e_θ` and along `u_z e_ρ − u_ρ e_z`
/// at the point `x`.
pub fn axisymmetric_components(r: Vec3, x: Vec3, u: Vec3) -> [f64; 3] {
    let c = to_cylindrical(x);
    let (er, et, ez) = frame_at(c.theta);
    let (er, et, ez) = (er.get(), et.get(), ez.get());
    let third = er * u.dot(ez) - ez * u.dot(er);
    [r.dot(u), r.dot(et), r.dot(third)]
}

/// Which form of the reflected Euler–Lagrange equation to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElVariant {
    /// Scalar factor with `+(4/|y|²) y·((∇ũ)ũ)`; vanishes on reflected
    /// harmonic maps.
    Corrected,
    /// Scalar factor with the constant `−4/|y|²` as printed.
    Printed,
}

/// Right-hand side of the reflected equation for `ũ` at `y`.
pub fn reflected_el_rhs(y: Vec3, u: Vec3, j: &[[f64; 3]; 3], variant: ElVariant) -> Vec3 {
    let r2 = y.norm_sq();
    let col = |a: usize| Vec3::new(j[0][a], j[1][a], j[2][a]);
    let row = |i: usize| Vec3::new(j[i][0], j[i][1], j[i][2]);
    let y_grad: Vec3 = (0..3).fold(Vec3::ZERO, |acc, a| acc + col(a) * y[a]);
    let yt_j: Vec3 = (0..3).fold(Vec3::ZERO, |acc, i| acc + row(i) * y[i]);
    let j_u: Vec3 = (0..3).fold(Vec3::ZERO, |acc, a| acc + col(a) * u[a]);
    let div = j[0][0] + j[1][1] + j[2][2];
    let uy = u.dot(y);
    let g2: f64 = j.iter().flatten().map(|v| v * v).sum();
    let extra = match variant {
        ElVariant::Corrected => 4.0 / r2 * y.dot(j_u),
        ElVariant::Printed => -4.0 / r2,
    };
    let scalar = g2 + 4.0 / (r2 * r2) * uy * uy - 4.0 / r2 * uy * div + extra;
    y_grad * (-2.0 / r2) - y * (4.0 / (r2 * r2) * uy) - yt_j * (4.0 / r2) + y * (4.0 / r2 * div) + u * scalar
}

/// `−Δũ − rhs` at node `p` of a field on the shell `B₂∖B₁`.
pub fn reflected_el_residual(f: &Field3, p: usize, variant: ElVariant) -> Result<Vec3, EnergyError> {
    let (lap, j, u) = grid_stencil(f, p)?;
    Ok(-lap - reflected_el_rhs(f.grid().position(p), u, &j, variant))
}

/// `−Δũ − rhs` of a closed-form field at `y`, stencil step `h`.
pub fn reflected_el_residual_at<F: VectorField>(
    f: &F,
    y: Vec3,
    h: f64,
    variant: ElVariant,
) -> Result<Vec3, EnergyError> {
    let r = y.norm();
    if r - 1.0 < 2.0 * h || 2.0 - r < 2.0 * h {
        return Err(EnergyError::NearBoundary { pos: y.to_array(), depth: (r - 1.0).min(2.0 - r), h });
    }
    let (lap, j, u) = stencil(f, y, h)?;
    Ok(-lap - reflected_el_rhs(y, u, &j, variant))
}

/// Collected energies of one field, serializable as `key: value` text or
/// as a CSV row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyReport {
    pub dirichlet: Option<f64>,
    pub exterior: Option<f64>,
    pub t_functional: Option<f64>,
    pub reduced: Option<f64>,
    pub terms: BTreeMap<String, f64>,
    pub resolution: String,
    pub scheme: String,
}

pub const REPORT_CSV_HEADER: &str = "resolution,scheme,dirichlet,exterior,combined,t_functional,reduced";

impl EnergyReport {
    pub fn new(resolution: impl Into<String>, scheme: impl Into<String>) -> Self {
        EnergyReport {
            resolution: resolution.into(),
            scheme: scheme.into(),
            ..Default::default()
        }
    }

    /// `E + Ẽ` when both are present.
    pub fn combined(&self) -> Option<f64> {
        Some(self.dirichlet? + self.exterior?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "resolution: {}", self.resolution);
        let _ = writeln!(s, "scheme: {}", self.scheme);
        for (k, v) in [
            ("dirichlet", self.dirichlet),
            ("exterior", self.exterior),
            ("combined", self.combined()),
            ("t_functional", self.t_functional),
            ("reduced", self.reduced),
        ] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k}: {v:.12e}");
            }
        }
        for (k, v) in &self.terms {
            let _ = writeln!(s, "term.{k}: {v:.12e}");
        }
        s
    }

    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.12e}"));
        format!(
            "{},{},{},{},{},{},{}",
            self.resolution,
            self.scheme,
            f(self.dirichlet),
            f(self.exterior),
            f(self.combined()),
            f(self.t_functional),
            f(self.reduced)
        )
    }
}
