//! Dyadic sector symmetrization toward an equivariant field, and the
//! non-equivariant example field with vanishing T.
//!
//! The transform runs on a [`CylField`] whose `N_θ` is a power of two, so a
//! reflection across a sector boundary maps samples onto samples. Level `k`
//! works on the sector of `P = N_θ/2^{k−1}` samples: of its two halves the
//! one with smaller `Ẽ_sym` is kept, mirrored onto the other, and the result
//! repeated with period `P`. Reflection acts on the coefficients
//! `(u_ρ, u_θ, u_z)` without sign changes.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::energy::{cyl_energies, cyl_energies_range, CylEnergies};
use crate::fields::{
    field_from_closed_form, project_tangential, BallGrid3, CylField, CylGrid, Field3, FieldError, Lenient,
    VectorField,
};
use crate::geometry::{frame_at, to_cylindrical, Vec3};

#[derive(Debug, Error)]
pub enum SymmetrizeError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("level {level} needs {need} θ-samples per sector half, grid has N_θ = {n_theta}")]
    Level { level: usize, need: usize, n_theta: usize },
    #[error("level {level} input is not symmetric from the previous level: max deviation {deviation:e}")]
    Precondition { level: usize, deviation: f64 },
    #[error("fixture amplitude {amplitude} too large: u_z² − η² − 2u_θη = {radicand:e} at (ρ, z) = ({rho}, {z})")]
    Amplitude { amplitude: f64, radicand: f64, rho: f64, z: f64 },
}

/// Tolerance on the symmetry left by the previous level.
pub const PRECONDITION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub kept: Half,
    /// `Ẽ_sym` of the two halves of the working sector.
    pub half_energies: [f64; 2],
    pub sym_before: f64,
    pub sym_after: f64,
    pub theta_derivative: f64,
    /// Largest component change at any sample.
    pub max_change: f64,
}

impl LevelReport {
    pub fn changed(&self) -> bool {
        self.max_change > 1e-12
    }
}

fn max_symmetry_defect(f: &CylField, period: usize, mid: usize) -> f64 {
    let g = f.grid();
    let (nr, nt, nz) = g.dims();
    let mut worst: f64 = 0.0;
    for j in 0..nz {
        for i in 0..nr {
            if !g.present(i, j) {
                continue;
            }
            for l in 0..nt {
                let a = f.get(i, l, j);
                let base = l - l % period;
                let m = base + (2 * mid - 1 - l % period) % period;
                let p = f.get(i, (l + period) % nt, j);
                let r = f.get(i, m, j);
                for k in 0..3 {
                    worst = worst.max((a[k] - p[k]).abs()).max((a[k] - r[k]).abs());
                }
            }
        }
    }
    worst
}

/// One level of the dyadic symmetrization.
///
/// For `k ≥ 2` the input must be `2P`-periodic and even about sample `P`
/// (the output shape of level `k−1`), within [`PRECONDITION_TOL`].
pub fn dyadic_symmetrize_step(f: &CylField, k: usize) -> Result<(CylField, LevelReport), SymmetrizeError> {
    let g = f.grid();
    let (nr, nt, nz) = g.dims();
    if k == 0 || nt >> (k - 1) < 2 {
        return Err(SymmetrizeError::Level { level: k, need: 1, n_theta: nt });
    }
    let p = nt >> (k - 1);
    let h = p / 2;
    if k >= 2 {
        let deviation = max_symmetry_defect(f, 2 * p, p);
        if deviation > PRECONDITION_TOL {
            return Err(SymmetrizeError::Precondition { level: k, deviation });
        }
    }
    let before = cyl_energies(f);
    let e_first = cyl_energies_range(f, 0, h).sym;
    let e_second = cyl_energies_range(f, h, p).sym;
    let kept = if e_second < e_first { Half::Second } else { Half::First };
    let mut comps = f.comps().to_vec();
    let mut max_change: f64 = 0.0;
    for j in 0..nz {
        for i in 0..nr {
            if !g.present(i, j) {
                continue;
            }
            for l in 0..nt {
                let s = l % p;
                let keep_s = match kept {
                    Half::First if s < h => s,
                    Half::Second if s >= h => s,
                    _ => 2 * h - 1 - s,
                };
                let v = f.get(i, keep_s, j);
                let idx = g.index(i, l, j);
                for c in 0..3 {
                    max_change = max_change.max((v[c] - comps[idx][c]).abs());
                }
                comps[idx] = v;
            }
        }
    }
    let out = f.with_comps(comps);
    let after = cyl_energies(&out);
    Ok((
        out,
        LevelReport {
            level: k,
            kept,
            half_energies: [e_first, e_second],
            sym_before: before.sym,
            sym_after: after.sym,
            theta_derivative: after.theta_derivative,
            max_change,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizeReport {
    pub input: CylEnergies,
    pub output: CylEnergies,
    pub levels: Vec<LevelReport>,
    /// `T(input) < −tol`: the energy comparison is not claimed.
    pub negative_t: bool,
    pub tangency_before: f64,
    pub tangency_after: f64,
}

impl SymmetrizeReport {
    pub fn effective_changes(&self) -> usize {
        self.levels.iter().filter(|l| l.changed()).count()
    }

    /// `Ẽ_sym` never increased from one level to the next (up to `slack`).
    pub fn sym_monotone(&self, slack: f64) -> bool {
        self.levels.iter().all(|l| l.sym_after <= l.sym_before + slack)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input_dirichlet: {:.12e}", self.input.dirichlet);
        let _ = writeln!(s, "input_t: {:.12e}", self.input.t);
        let _ = writeln!(s, "input_sym: {:.12e}", self.input.sym);
        let _ = writeln!(s, "input_theta_derivative: {:.12e}", self.input.theta_derivative);
        if self.negative_t {
            let _ = writeln!(s, "warning: T < 0, energy comparison not asserted");
        }
        for l in &self.levels {
            let _ = writeln!(
                s,
                "level {}: kept {} (halves {:.12e} {:.12e}) sym {:.12e} -> {:.12e} theta_derivative {:.6e} max_change {:.3e}",
                l.level,
                match l.kept {
                    Half::First => "first",
                    Half::Second => "second",
                },
                l.half_energies[0],
                l.half_energies[1],
                l.sym_before,
                l.sym_after,
                l.theta_derivative,
                l.max_change
            );
        }
        let _ = writeln!(s, "output_dirichlet: {:.12e}", self.output.dirichlet);
        let _ = writeln!(s, "output_sym: {:.12e}", self.output.sym);
        let _ = writeln!(s, "output_theta_derivative: {:.12e}", self.output.theta_derivative);
        let _ = writeln!(s, "tangency: {:.3e} -> {:.3e}", self.tangency_before, self.tangency_after);
        let _ = writeln!(s, "effective_changes: {}", self.effective_changes());
        s
    }
}

/// Runs levels `1..=max_levels` (capped at `log₂ N_θ`), stopping once the
/// θ-derivative energy is below `tol`.
pub fn symmetrize(f: &CylField, max_levels: usize, tol: f64) -> Result<(CylField, SymmetrizeReport), SymmetrizeError> {
    let input = cyl_energies(f);
    let nt = f.grid().dims().1;
    let cap = nt.trailing_zeros() as usize;
    let mut cur = f.clone();
    let mut levels = Vec::new();
    if input.theta_derivative >= tol {
        for k in 1..=max_levels.min(cap) {
            let (next, rep) = dyadic_symmetrize_step(&cur, k)?;
            cur = next;
            levels.push(rep);
            if rep.theta_derivative < tol {
                break;
            }
        }
    }
    let report = SymmetrizeReport {
        input,
        output: cyl_energies(&cur),
        levels,
        negative_t: input.t < -tol,
        tangency_before: f.tangency_residual(),
        tangency_after: cur.tangency_residual(),
    };
    Ok((cur, report))
}

/// Cylindrical sample grid matched to a Cartesian grid of `n` cells per axis.
pub fn matching_cyl_grid(grid: &BallGrid3) -> Result<Arc<CylGrid>, FieldError> {
    let n = grid.n();
    let r = grid.spec().r_out;
    let nt = (4 * n).next_power_of_two();
    Ok(Arc::new(CylGrid::new((n / 2).max(2), nt, n.max(2), r)?))
}

/// Column centres may sit just outside the ball; those are evaluated at
/// radius `r_in` on the same ray.
struct PulledIn<F> {
    f: F,
    r_in: f64,
}

impl<F: VectorField> VectorField for PulledIn<F> {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        self.f.eval(x).or_else(|| {
            let r = x.norm();
            (r > self.r_in).then(|| self.f.eval(x * (self.r_in / r))).flatten()
        })
    }
}

/// Cartesian front end: samples `f` on the matching cylindrical grid,
/// symmetrizes, and resamples onto `f`'s grid. Also returns the largest
/// difference between the cylindrical input and `f` at Cartesian nodes
/// (the interpolation error that qualifies energy comparisons).
pub fn symmetrize_field3(
    f: &Field3,
    max_levels: usize,
    tol: f64,
) -> Result<(Field3, SymmetrizeReport, f64), SymmetrizeError> {
    let cg = matching_cyl_grid(f.grid())?;
    let g = f.grid();
    let r_in = g.spec().r_out - 0.5 * g.h();
    let cyl = CylField::from_field(&PulledIn { f: Lenient(f), r_in }, cg)?;
    let (out, report) = symmetrize(&cyl, max_levels, tol)?;
    let interp = (0..g.len())
        .map(|p| {
            let v = PulledIn { f: &cyl, r_in }.eval(g.position(p));
            v.map_or(f64::INFINITY, |v| (v - f.value(p)).norm())
        })
        .fold(0.0, f64::max);
    let back = field_from_closed_form(&PulledIn { f: &out, r_in }, g.clone())?;
    let (back, _) = project_tangential(&back)?;
    Ok((back, report, interp))
}

/// Smooth bump on the disk of radius `radius` about `(ρ, z) = center`.
fn bump(rho: f64, z: f64, center: (f64, f64), radius: f64) -> f64 {
    let s2 = ((rho - center.0).powi(2) + (z - center.1).powi(2)) / (radius * radius);
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

/// The example field: boundary data `sin φ e_θ + cos φ e_φ`, blended
/// linearly in ρ toward `e₃` on the axis and normalized, with `u_θ` raised
/// by `η = A·bump(ρ,z)·(1 + cos θ)/2` and `u_z` lowered to keep `|u| = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleFixture {
    pub amplitude: f64,
}

impl ExampleFixture {
    pub const BUMP_CENTER: (f64, f64) = (0.15, 0.1);
    pub const BUMP_RADIUS: f64 = 0.08;

    /// `(u_ρ, u_θ, u_z)` of the unperturbed field.
    pub fn base(rho: f64, z: f64) -> [f64; 3] {
        let boundary = |sin_phi: f64, cos_phi: f64| [cos_phi * cos_phi, sin_phi, -cos_phi * sin_phi];
        let rb = (1.0 - z * z).max(0.0).sqrt();
        if rho >= rb {
            let r = rho.hypot(z);
            return boundary(rho / r, z / r);
        }
        let t = rho / rb;
        let b = boundary(rb, z);
        let v = [t * b[0], t * b[1], (1.0 - t) + t * b[2]];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    pub fn eta(&self, rho: f64, theta: f64, z: f64) -> f64 {
        self.amplitude * bump(rho, z, Self::BUMP_CENTER, Self::BUMP_RADIUS) * 0.5 * (1.0 + theta.cos())
    }

    pub fn components(&self, rho: f64, theta: f64, z: f64) -> Result<[f64; 3], SymmetrizeError> {
        let u = Self::base(rho, z);
        let eta = self.eta(rho, theta, z);
        if eta == 0.0 {
            return Ok(u);
        }
        let radicand = u[2] * u[2] - eta * eta - 2.0 * u[1] * eta;
        if radicand < 0.0 || u[2] <= 0.0 {
            return Err(SymmetrizeError::Amplitude { amplitude: self.amplitude, radicand, rho, z });
        }
        Ok([u[0], u[1] + eta, radicand.sqrt()])
    }

    /// Checks the square-root domain over the bump support.
    pub fn check(&self) -> Result<(), SymmetrizeError> {
        let (c, r) = (Self::BUMP_CENTER, Self::BUMP_RADIUS);
        for a in 0..=64 {
            for b in 0..=64 {
                let rho = c.0 - r + 2.0 * r * a as f64 / 64.0;
                let z = c.1 - r + 2.0 * r * b as f64 / 64.0;
                self.components(rho, 0.0, z)?;
            }
        }
        Ok(())
    }
}

impl VectorField for ExampleFixture {
    fn eval(&self, x: Vec3) -> Option<Vec3> {
        let c = to_cylindrical(x);
        let v = self.components(c.rho, c.theta, c.z).ok()?;
        let (er, et, ez) = frame_at(c.theta);
        Some(er.get() * v[0] + et.get() * v[1] + ez.get() * v[2])
    }
}

fn tangential_columns(f: &CylField) -> CylField {
    let g = f.grid();
    let (nr, nt, nz) = g.dims();
    let mut comps = f.comps().to_vec();
    for j in 0..nz {
        for i in 0..nr {
            if !(g.present(i, j) && g.is_boundary(i, j)) {
                continue;
            }
            let (r, z) = (g.rho(i), g.z(j));
            let n = r.hypot(z);
            let nu = [r / n, 0.0, z / n];
            for l in 0..nt {
                let v = &mut comps[g.index(i, l, j)];
                let d = v[0] * nu[0] + v[2] * nu[2];
                let w = [v[0] - d * nu[0], v[1], v[2] - d * nu[2]];
                let m = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                *v = [w[0] / m, w[1] / m, w[2] / m];
            }
        }
    }
    f.with_comps(comps)
}

/// The example field on a cylindrical grid, tangentially projected on
/// boundary columns.
pub fn make_example_fixture(grid: Arc<CylGrid>, amplitude: f64) -> Result<CylField, SymmetrizeError> {
    let fx = ExampleFixture { amplitude };
    fx.check()?;
    let raw = CylField::from_components(grid, |r, th, z| {
        fx.components(r, th, z).unwrap_or([f64::NAN; 3])
    })?;
    Ok(tangential_columns(&raw))
}

/// The example field on a Cartesian grid, tangentially projected.
pub fn make_example_fixture_field3(grid: Arc<BallGrid3>, amplitude: f64) -> Result<Field3, SymmetrizeError> {
    let fx = ExampleFixture { amplitude };
    fx.check()?;
    let f = field_from_closed_form(&fx, grid)?;
    Ok(project_tangential(&f)?.0)
}

/// `2π/2^{k−1}`, the sector width handled at level `k`.
pub fn sector_width(k: usize) -> f64 {
    2.0 * PI / (1u64 << (k.saturating_sub(1))) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;

    fn cyl(nr: usize, nt: usize, nz: usize) -> Arc<CylGrid> {
        Arc::new(CylGrid::new(nr, nt, nz, 1.0).unwrap())
    }

    #[test]
    fn base_field_is_admissible() {
        for (r, z) in [(0.0, 0.3), (0.5, 0.5), (0.99, 0.0), (0.6, -0.8), (1.2, 0.1)] {
            let u = ExampleFixture::base(r, z);
            assert!(((u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt() - 1.0).abs() < 1e-14);
        }
        // tangent on the unit circle
        for phi in [0.1f64, 0.7, 1.5, 2.9] {
            let (r, z) = (phi.sin(), phi.cos());
            let u = ExampleFixture::base(r, z);
            assert!((u[0] * r + u[2] * z).abs() < 1e-14);
        }
    }

    #[test]
    fn fixture_has_zero_t_and_theta_dependence() {
        let f = make_example_fixture(cyl(32, 32, 64), 0.1).unwrap();
        let e = cyl_energies(&f);
        assert!(e.t.abs() < 1e-6, "{}", e.t);
        assert!(e.theta_derivative > 0.0);
        assert!(f.tangency_residual() < 1e-6);
        assert!(f.norm_defect() < 1e-12);
        let base = make_example_fixture(cyl(32, 32, 64), 0.0).unwrap();
        let e = cyl_energies(&base);
        assert!(e.t.abs() < 1e-12 && e.theta_derivative < 1e-20);
    }

    #[test]
    fn fixture_rejects_large_amplitude() {
        assert!(matches!(ExampleFixture { amplitude: 5.0 }.check(), Err(SymmetrizeError::Amplitude { .. })));
        assert!(make_example_fixture(cyl(8, 8, 16), 5.0).is_err());
    }

    #[test]
    fn cartesian_fixture_is_tangent() {
        let g = Arc::new(BallGrid3::new(GridSpec::ball(24, 1.0)).unwrap());
        let f = make_example_fixture_field3(g, 0.1).unwrap();
        assert!(f.tangency_residual() < 1e-6);
    }

    #[test]
    fn single_step_properties() {
        let f = make_example_fixture(cyl(24, 16, 48), 0.1).unwrap();
        let tang = f.tangency_residual();
        let (out, rep) = dyadic_symmetrize_step(&f, 1).unwrap();
        assert!(rep.sym_after <= rep.sym_before + 1e-10);
        assert!((out.tangency_residual() - tang).abs() < 1e-12);
        assert!(out.norm_defect() < 1e-12);
        // even about θ = π and 2π-periodic
        assert!(max_symmetry_defect(&out, 16, 8) < 1e-15);
        assert!(dyadic_symmetrize_step(&out, 2).is_ok());
        let odd = CylField::from_components(cyl(8, 16, 16), |_, th, _| [0.0, 0.3 * th.sin(), 1.0]).unwrap();
        assert!(matches!(dyadic_symmetrize_step(&odd, 2), Err(SymmetrizeError::Precondition { .. })));
        let (odd1, _) = dyadic_symmetrize_step(&odd, 1).unwrap();
        assert!(dyadic_symmetrize_step(&odd1, 2).is_ok());
    }

    #[test]
    fn full_symmetrization_of_fixture() {
        let f = make_example_fixture(cyl(32, 32, 64), 0.1).unwrap();
        let (out, rep) = symmetrize(&f, 10, 1e-12).unwrap();
        assert_eq!(rep.levels.len(), 5);
        assert!(rep.output.theta_derivative < 1e-6);
        assert!(out.periodicity_defect(1) == 0.0);
        assert!(rep.sym_monotone(1e-10));
        assert!(rep.output.dirichlet <= rep.input.dirichlet);
        assert!(!rep.negative_t);
        assert!(rep.to_text().contains("level 5"));
    }

    #[test]
    fn equivariant_input_is_a_fixed_point() {
        let f = make_example_fixture(cyl(16, 16, 32), 0.0).unwrap();
        let (out, rep) = symmetrize(&f, 4, 1e-12).unwrap();
        assert_eq!(rep.effective_changes(), 0);
        assert_eq!(out.comps(), f.comps());
        // forcing the steps still changes nothing
        let (_, r) = dyadic_symmetrize_step(&f, 1).unwrap();
        assert!(!r.changed());
    }

    #[test]
    fn enumeration_reaches_constant_in_theta() {
        // every sample distinct in θ; after log₂ 16 levels all equal
        let g = cyl(4, 16, 8);
        let f = CylField::from_components(g, |r, th, z| [0.3 * r * (3.0 * th).sin(), 0.2 * th.cos() + 0.1 * th, 1.0 + z]).unwrap();
        let (out, rep) = symmetrize(&f, 4, 0.0f64.max(1e-300)).unwrap();
        assert_eq!(rep.levels.len(), 4);
        assert_eq!(out.periodicity_defect(1), 0.0);
        assert!(rep.sym_monotone(1e-12));
    }

    #[test]
    fn cartesian_round_trip() {
        let g = Arc::new(BallGrid3::new(GridSpec::ball(16, 1.0)).unwrap());
        let f = make_example_fixture_field3(g, 0.1).unwrap();
        let (out, rep, interp) = symmetrize_field3(&f, 10, 1e-10).unwrap();
        assert!(rep.output.theta_derivative < 1e-10);
        assert!(out.tangency_residual() < 1e-6);
        assert!(interp.is_finite());
    }
}
