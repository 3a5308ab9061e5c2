//! Density diagnostics on the extended field `ū`: the 1-density Θ, the
//! weighted monotonicity quantity f, topological degrees on spheres and
//! defect detection.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::fields::{Extended, VectorField};
use crate::geometry::{BoundaryChart, Vec3};
use crate::par;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("radius {r} is below 3h = {min}")]
    Resolution { r: f64, min: f64 },
    #[error("sphere of radius {r} about {center:?} leaves the field's support at {at:?}")]
    Clipped { center: [f64; 3], r: f64, at: [f64; 3] },
    #[error("radii must be positive and strictly increasing")]
    Radii,
}

/// Weight in the monotonicity quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// Θ itself.
    None,
    /// `min{1, 1/|x|²}` (default for f).
    InvSquare,
    /// `min{1, 1/|x|}`.
    Inv,
}

impl Weight {
    pub fn at(self, x: Vec3) -> f64 {
        let r = x.norm();
        match self {
            Weight::None => 1.0,
            Weight::InvSquare => (1.0 / (r * r)).min(1.0),
            Weight::Inv => (1.0 / r).min(1.0),
        }
    }

    pub fn parse(s: &str) -> Option<Weight> {
        match s {
            "none" => Some(Weight::None),
            "inv_square" => Some(Weight::InvSquare),
            "inv" => Some(Weight::Inv),
            _ => None,
        }
    }
}

/// Cubic lattice of `n³` samples, `n` even, centred on `center` with
/// spacing `h` (no sample at the centre itself).
struct Lattice {
    center: Vec3,
    h: f64,
    n: usize,
    vals: Vec<Option<Vec3>>,
}

impl Lattice {
    fn sample<F: VectorField>(src: &F, center: Vec3, half_width: f64, h: f64) -> Lattice {
        use rayon::prelude::*;
        let n = 2 * ((half_width / h).ceil() as usize + 1);
        let mut out = Lattice { center, h, n, vals: Vec::new() };
        out.vals = (0..n * n * n)
            .into_par_iter()
            .map(|k| src.eval(out.position(k)).and_then(|v| v.normalized(1e-12)))
            .collect();
        out
    }

    fn coord(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.n as f64 - 1.0)) * self.h
    }

    fn position(&self, k: usize) -> Vec3 {
        let n = self.n;
        self.center + Vec3::new(self.coord(k % n), self.coord(k / n % n), self.coord(k / (n * n)))
    }

    /// `|∇u|²` at sample `k` from the mean squared geodesic edge lengths.
    fn grad_sq(&self, k: usize) -> f64 {
        let Some(u) = self.vals[k] else { return 0.0 };
        let n = self.n;
        let idx = [k % n, k / n % n, k / (n * n)];
        let stride = [1, n, n * n];
        let mut total = 0.0;
        for a in 0..3 {
            let mut acc = 0.0;
            let mut cnt = 0;
            if idx[a] > 0 {
                if let Some(v) = self.vals[k - stride[a]] {
                    acc += arc_sq(u, v);
                    cnt += 1;
                }
            }
            if idx[a] + 1 < n {
                if let Some(v) = self.vals[k + stride[a]] {
                    acc += arc_sq(u, v);
                    cnt += 1;
                }
            }
            if cnt > 0 {
                total += acc / cnt as f64;
            }
        }
        total / (self.h * self.h)
    }
}

fn arc_sq(u: Vec3, v: Vec3) -> f64 {
    let a = 2.0 * (0.5 * (v - u).norm()).min(1.0).asin();
    a * a
}

/// Share of the cube of side `h` about `x` inside `B_r(x0)`.
fn ball_fraction(x: Vec3, h: f64, x0: Vec3, r: f64) -> f64 {
    let d = (x - x0).norm();
    let half_diag = 0.5 * 3f64.sqrt() * h;
    if d + half_diag <= r {
        return 1.0;
    }
    if d - half_diag >= r {
        return 0.0;
    }
    const S: usize = 4;
    let mut hits = 0;
    for a in 0..S {
        for b in 0..S {
            for c in 0..S {
                let o = Vec3::new(a as f64 + 0.5, b as f64 + 0.5, c as f64 + 0.5) * (h / S as f64) - Vec3::new(0.5, 0.5, 0.5) * h;
                if (x + o - x0).norm() < r {
                    hits += 1;
                }
            }
        }
    }
    hits as f64 / (S * S * S) as f64
}

/// `(1/2r) ∫_{B_r(x₀)} w |∇src|²` for a field defined on the whole ball
/// `B_r(x₀)`, with lattice spacing `h`.
pub fn density_of<F: VectorField>(src: &F, x0: Vec3, r: f64, h: f64, weight: Weight) -> Result<f64, AnalysisError> {
    if r < 3.0 * h {
        return Err(AnalysisError::Resolution { r, min: 3.0 * h });
    }
    let lat = Lattice::sample(src, x0, r, h);
    let h3 = h * h * h;
    let total = par::sum(lat.vals.len(), |k| {
        let x = lat.position(k);
        let frac = ball_fraction(x, h, x0, r);
        if frac == 0.0 {
            return 0.0;
        }
        frac * weight.at(x) * lat.grad_sq(k) * h3
    });
    Ok(total / (2.0 * r))
}

/// Θ(ū, x₀, r) for a field `u` on the unit ball, extended by reflection.
pub fn density<F: VectorField>(u: &F, x0: Vec3, r: f64, h: f64, weight: Weight) -> Result<f64, AnalysisError> {
    density_of(&Extended(u), x0, r, h, weight)
}

/// Fitted constants for `e^{C₁r} f(r) + C₂ r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneFit {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub center: Vec3,
    pub radii: Vec<f64>,
    pub theta: Vec<f64>,
    pub f: Vec<f64>,
    pub weight: Weight,
    /// Smallest constants on the candidate grid, if any meets the tolerance.
    pub fit: Option<MonotoneFit>,
    /// Largest decrease of the fitted sequence (or of the best candidate).
    pub residual: f64,
}

/// Candidate constants `0, 0.5, …, 50`.
pub const FIT_STEP: f64 = 0.5;
pub const FIT_MAX: f64 = 50.0;
pub const FIT_TOL: f64 = 1e-3;

fn violation(radii: &[f64], f: &[f64], c1: f64, c2: f64) -> f64 {
    let g: Vec<f64> = radii.iter().zip(f).map(|(&r, &v)| (c1 * r).exp() * v + c2 * r).collect();
    g.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max)
}

/// Lexicographically smallest `(C₁, C₂)` on the candidate grid making the
/// sequence non-decreasing up to [`FIT_TOL`]; otherwise the best residual.
pub fn fit_monotone(radii: &[f64], f: &[f64]) -> (Option<MonotoneFit>, f64) {
    let steps = (FIT_MAX / FIT_STEP).round() as usize;
    let mut best = f64::INFINITY;
    for a in 0..=steps {
        for b in 0..=steps {
            let (c1, c2) = (a as f64 * FIT_STEP, b as f64 * FIT_STEP);
            let v = violation(radii, f, c1, c2);
            if v <= FIT_TOL {
                return (Some(MonotoneFit { c1, c2 }), v);
            }
            best = best.min(v);
        }
    }
    (None, best)
}

/// Θ and the weighted f at each radius, with the monotonicity fit of f.
pub fn density_profile<F: VectorField>(
    u: &F,
    x0: Vec3,
    radii: &[f64],
    h: f64,
    weight: Weight,
) -> Result<DensityProfile, AnalysisError> {
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::Radii);
    }
    let mut theta = Vec::with_capacity(radii.len());
    let mut f = Vec::with_capacity(radii.len());
    for &r in radii {
        theta.push(density(u, x0, r, h, Weight::None)?);
        f.push(if weight == Weight::None { *theta.last().unwrap_or(&0.0) } else { density(u, x0, r, h, weight)? });
    }
    let (fit, residual) = fit_monotone(radii, &f);
    Ok(DensityProfile { center: x0, radii: radii.to_vec(), theta, f, weight, fit, residual })
}

impl DensityProfile {
    pub const CSV_HEADER: &'static str = "r,theta,f";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for k in 0..self.radii.len() {
            let _ = writeln!(s, "{:.9e},{:.12e},{:.12e}", self.radii[k], self.theta[k], self.f[k]);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let c = self.center;
        let mut s = format!("center: {} {} {}\n", c.x1, c.x2, c.x3);
        let _ = writeln!(s, "weight: {:?}", self.weight);
        match self.fit {
            Some(fit) => {
                let _ = writeln!(s, "c1: {}\nc2: {}", fit.c1, fit.c2);
            }
            None => s.push_str("c1: none\nc2: none\n"),
        }
        let _ = writeln!(s, "residual: {:.6e}", self.residual);
        s
    }
}

/// `∫ |∂_r(ū∘Φ)|²/r` over the chart annulus `Φ({r₁ < |y| < r₂})` about a
/// boundary point, compared against the increment of f and the energy
/// of the same annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialReport {
    pub r1: f64,
    pub r2: f64,
    pub radial_integral: f64,
    pub f_increment: f64,
    pub annulus_energy: f64,
    /// `radial_integral / (f_increment + annulus_energy)`.
    pub ratio: f64,
}

pub fn radial_derivative_diagnostic<F: VectorField>(
    u: &F,
    base_point: Vec3,
    r1: f64,
    r2: f64,
    h: f64,
    weight: Weight,
) -> Result<RadialReport, AnalysisError> {
    if !(r1 > 0.0 && r2 > r1) {
        return Err(AnalysisError::Radii);
    }
    if r1 < 3.0 * h {
        return Err(AnalysisError::Resolution { r: r1, min: 3.0 * h });
    }
    let chart = BoundaryChart::new(base_point, (1.5 * r2).min(0.249)).map_err(|_| AnalysisError::Radii)?;
    let src = Extended(u);
    // Φ is a near-isometry at this scale; pad the box for the distortion.
    let lat = Lattice::sample(&src, base_point, 1.25 * r2 + 2.0 * h, h);
    let h3 = h * h * h;
    let eps = 0.5 * h;
    const S: usize = 2;
    let [radial, energy] = par::sum_array::<2, _>(lat.vals.len(), |k| {
        let x = lat.position(k);
        let Ok(y) = chart.inverse(x) else { return [0.0; 2] };
        let ry = y.norm();
        if ry < r1 - 2.0 * h || ry > r2 + 2.0 * h {
            return [0.0; 2];
        }
        let mut inside = 0;
        for c in 0..S * S * S {
            let o = Vec3::new((c % S) as f64 + 0.5, (c / S % S) as f64 + 0.5, (c / (S * S)) as f64 + 0.5) * (h / S as f64)
                - Vec3::new(0.5, 0.5, 0.5) * h;
            if let Ok(ys) = chart.inverse(x + o) {
                let r = ys.norm();
                if r > r1 && r < r2 {
                    inside += 1;
                }
            }
        }
        if inside == 0 {
            return [0.0; 2];
        }
        let frac = inside as f64 / (S * S * S) as f64;
        let dir = y * (1.0 / ry);
        let dr = match (chart.forward(y + dir * eps), chart.forward(y - dir * eps)) {
            (Ok(xp), Ok(xm)) => match (src.eval(xp), src.eval(xm)) {
                (Some(a), Some(b)) => (a - b).norm_sq() / (4.0 * eps * eps),
                _ => 0.0,
            },
            _ => 0.0,
        };
        [frac * h3 * dr / ry, 0.5 * frac * h3 * lat.grad_sq(k)]
    });
    let f1 = density(u, base_point, r1, h, weight)?;
    let f2 = density(u, base_point, r2, h, weight)?;
    let f_increment = f2 - f1;
    Ok(RadialReport {
        r1,
        r2,
        radial_integral: radial,
        f_increment,
        annulus_energy: energy,
        ratio: radial / (f_increment + energy),
    })
}

/// Signed solid angle of the spherical triangle `(a, b, c)`.
fn solid_angle(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    2.0 * a.dot(b.cross(c)).atan2(1.0 + a.dot(b) + b.dot(c) + c.dot(a))
}

/// Degree of `u` restricted to the sphere `S_r(center)`, as the summed
/// signed area of the image of an `n_lat × n_lon` triangulation over 4π.
pub fn degree_on_sphere<F: VectorField>(
    u: &F,
    center: Vec3,
    r: f64,
    n_lat: usize,
    n_lon: usize,
) -> Result<f64, AnalysisError> {
    let mut pts = Vec::with_capacity((n_lat + 1) * n_lon);
    for i in 0..=n_lat {
        let th = PI * i as f64 / n_lat as f64;
        for j in 0..n_lon {
            let ph = 2.0 * PI * j as f64 / n_lon as f64;
            let x = center + Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()) * r;
            let v = u
                .eval(x)
                .and_then(|v| v.normalized(1e-12))
                .ok_or(AnalysisError::Clipped { center: center.to_array(), r, at: x.to_array() })?;
            pts.push(v);
        }
    }
    let at = |i: usize, j: usize| pts[i * n_lon + j % n_lon];
    let total = par::sum(n_lat * n_lon, |k| {
        let (i, j) = (k / n_lon, k % n_lon);
        let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
        solid_angle(a, b, c) + solid_angle(a, c, d)
    });
    Ok(total / (4.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectKind {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defect {
    pub location: Vec3,
    pub kind: DefectKind,
    pub density: f64,
    /// Rounded degree on a small sphere (interior defects only).
    pub degree: Option<i64>,
    pub raw_degree: Option<f64>,
    /// Number of scan nodes above threshold in the cluster.
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectList {
    pub defects: Vec<Defect>,
    pub threshold: f64,
    pub scan_radius: f64,
    pub h: f64,
}

impl DefectList {
    pub const CSV_HEADER: &'static str = "x,y,z,kind,density,degree";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for d in &self.defects {
            let _ = writeln!(
                s,
                "{:.9},{:.9},{:.9},{},{:.9e},{}",
                d.location.x1,
                d.location.x2,
                d.location.x3,
                match d.kind {
                    DefectKind::Interior => "interior",
                    DefectKind::Boundary => "boundary",
                },
                d.density,
                d.degree.map_or(String::new(), |g| g.to_string())
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "defects: {}\nthreshold: {}\nscan_radius: {}\nh: {}\n",
            self.defects.len(),
            self.threshold,
            self.scan_radius,
            self.h
        );
        for (k, d) in self.defects.iter().enumerate() {
            let _ = writeln!(
                s,
                "defect {k}: at ({:.6}, {:.6}, {:.6}) {:?} density {:.6e} degree {}",
                d.location.x1,
                d.location.x2,
                d.location.x3,
                d.kind,
                d.density,
                d.degree.map_or("-".to_string(), |g| g.to_string())
            );
        }
        s
    }
}

/// Scans every lattice node of the closed ball (spacing `h`) for
/// `Θ(ū, ·, scan_radius) > threshold`, clusters hits within
/// `2·scan_radius`, and reports each cluster at its densest node.
pub fn detect_defects<F: VectorField>(
    u: &F,
    threshold: f64,
    scan_radius: f64,
    h: f64,
) -> Result<DefectList, AnalysisError> {
    detect_defects_of(&Extended(u), threshold, scan_radius, h)
}

/// As [`detect_defects`] for a field already defined around the closed ball.
pub fn detect_defects_of<F: VectorField>(
    src: &F,
    threshold: f64,
    scan_radius: f64,
    h: f64,
) -> Result<DefectList, AnalysisError> {
    use rayon::prelude::*;
    if scan_radius < 3.0 * h {
        return Err(AnalysisError::Resolution { r: scan_radius, min: 3.0 * h });
    }
    let lat = Lattice::sample(src, Vec3::ZERO, 1.0 + scan_radius + 2.0 * h, h);
    let h3 = h * h * h;
    let e: Vec<f64> = (0..lat.vals.len()).into_par_iter().map(|k| lat.grad_sq(k) * h3).collect();
    let m = (scan_radius / h).ceil() as i64 + 1;
    let mut offsets = Vec::new();
    for c in -m..=m {
        for b in -m..=m {
            for a in -m..=m {
                let o = Vec3::new(a as f64, b as f64, c as f64) * h;
                let w = ball_fraction(o, h, Vec3::ZERO, scan_radius);
                if w > 0.0 {
                    offsets.push((a, b, c, w));
                }
            }
        }
    }
    let n = lat.n as i64;
    let hits: Vec<(usize, f64)> = (0..lat.vals.len())
        .into_par_iter()
        .filter_map(|k| {
            let x = lat.position(k);
            if x.norm() > 1.0 + 0.5 * h || lat.vals[k].is_none() {
                return None;
            }
            let (i, j, l) = ((k as i64) % n, (k as i64) / n % n, (k as i64) / (n * n));
            let mut acc = 0.0;
            for &(a, b, c, w) in &offsets {
                let (p, q, s) = (i + a, j + b, l + c);
                if p >= 0 && q >= 0 && s >= 0 && p < n && q < n && s < n {
                    acc += w * e[((s * n + q) * n + p) as usize];
                }
            }
            let theta = acc / (2.0 * scan_radius);
            (theta > threshold).then_some((k, theta))
        })
        .collect();
    // single-linkage clustering
    let mut label: Vec<usize> = (0..hits.len()).collect();
    fn find(label: &mut [usize], a: usize) -> usize {
        let mut r = a;
        while label[r] != r {
            r = label[r];
        }
        let mut c = a;
        while label[c] != r {
            let next = label[c];
            label[c] = r;
            c = next;
        }
        r
    }
    let link = 2.0 * scan_radius;
    for a in 0..hits.len() {
        for b in a + 1..hits.len() {
            if (lat.position(hits[a].0) - lat.position(hits[b].0)).norm() <= link {
                let (ra, rb) = (find(&mut label, a), find(&mut label, b));
                if ra != rb {
                    label[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, (usize, f64, usize)> = Default::default();
    for (a, &(k, theta)) in hits.iter().enumerate() {
        let root = find(&mut label, a);
        let entry = clusters.entry(root).or_insert((k, theta, 0));
        entry.2 += 1;
        if theta > entry.1 {
            entry.0 = k;
            entry.1 = theta;
        }
    }
    let mut defects: Vec<Defect> = clusters
        .into_values()
        .map(|(k, theta, count)| {
            let x = lat.position(k);
            let kind = if (x.norm() - 1.0).abs() < scan_radius { DefectKind::Boundary } else { DefectKind::Interior };
            let raw_degree = match kind {
                DefectKind::Interior => degree_on_sphere(src, x, 0.5 * scan_radius, 64, 128).ok(),
                DefectKind::Boundary => None,
            };
            let degree = raw_degree.filter(|d| (d - d.round()).abs() < 0.1).map(|d| d.round() as i64);
            Defect { location: x, kind, density: theta, degree, raw_degree, hits: count }
        })
        .collect();
    defects.sort_by(|a, b| {
        (a.location.x3, a.location.x2, a.location.x1)
            .partial_cmp(&(b.location.x3, b.location.x2, b.location.x1))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(DefectList { defects, threshold, scan_radius, h })
}
