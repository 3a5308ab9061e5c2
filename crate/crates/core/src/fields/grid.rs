use crate::geometry::Vec3;

use super::FieldError;

pub(crate) const NONE: u32 = u32::MAX;

/// Sub-samples per axis used for cut-cell volume fractions.
const FRAC_SUBSAMPLES: usize = 6;

/// Geometry of a Cartesian sample grid: an axis-aligned box cut into `n³`
/// cubic cells, restricted to the spherical shell `r_in < |x| < r_out`
/// about the origin (`r_in = 0` for a ball).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub center: Vec3,
    pub half_width: f64,
    pub n: usize,
    pub r_in: f64,
    pub r_out: f64,
    /// Sphere on which the field must be tangent, if any.
    pub tangent_sphere: Option<f64>,
}

impl GridSpec {
    /// `B_R(0)` on `[−R, R]³`, tangency on `|x| = R`.
    pub fn ball(n: usize, radius: f64) -> Self {
        GridSpec {
            center: Vec3::ZERO,
            half_width: radius,
            n,
            r_in: 0.0,
            r_out: radius,
            tangent_sphere: Some(radius),
        }
    }

    /// `B_{r_out} ∖ B_{r_in}` on `[−r_out, r_out]³`, tangency on the outer sphere.
    pub fn shell(n: usize, r_in: f64, r_out: f64) -> Self {
        GridSpec {
            r_in,
            ..GridSpec::ball(n, r_out)
        }
    }

    /// `B₂ ∖ B₁` on `[−2, 2]³`, tangency on the unit sphere.
    pub fn annulus(n: usize) -> Self {
        GridSpec {
            center: Vec3::ZERO,
            half_width: 2.0,
            n,
            r_in: 1.0,
            r_out: 2.0,
            tangent_sphere: Some(1.0),
        }
    }

    /// Box of half-width `half_width` about `center`, clipped to `|x| < r_out`.
    pub fn local(center: Vec3, half_width: f64, n: usize, r_out: f64) -> Self {
        GridSpec {
            center,
            half_width,
            n,
            r_in: 0.0,
            r_out,
            tangent_sphere: None,
        }
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    BoundaryAdjacent,
    Exterior,
}

/// Cell-centred Cartesian grid with a cut-cell mask.
///
/// Masked nodes are the centres of cells that meet the shell; each carries
/// the volume fraction of its cell inside the shell. Nodes closer than `h`
/// to the tangency sphere are boundary-adjacent.
#[derive(Debug, Clone)]
pub struct BallGrid3 {
    spec: GridSpec,
    h: f64,
    corner: Vec3,
    index: Vec<u32>,
    ijk: Vec<[u32; 3]>,
    frac: Vec<f64>,
    boundary: Vec<bool>,
    nbr: Vec<[u32; 6]>,
}

fn cell_distance_range(c: Vec3, h: f64) -> (f64, f64) {
    let mut near = 0.0;
    let mut far = 0.0;
    for k in 0..3 {
        let lo = c[k] - 0.5 * h;
        let hi = c[k] + 0.5 * h;
        let n = if lo > 0.0 {
            lo
        } else if hi < 0.0 {
            -hi
        } else {
            0.0
        };
        let f = lo.abs().max(hi.abs());
        near += n * n;
        far += f * f;
    }
    (near.sqrt(), far.sqrt())
}

pub(crate) fn cell_fraction(c: Vec3, h: f64, r_in: f64, r_out: f64) -> f64 {
    let (near, far) = cell_distance_range(c, h);
    if near >= r_in && far <= r_out {
        return 1.0;
    }
    if far <= r_in || near >= r_out {
        return 0.0;
    }
    let s = FRAC_SUBSAMPLES;
    let mut hits = 0usize;
    for a in 0..s {
        for b in 0..s {
            for d in 0..s {
                let off = |i: usize| ((i as f64 + 0.5) / s as f64 - 0.5) * h;
                let r = (c + Vec3::new(off(a), off(b), off(d))).norm();
                if r > r_in && r < r_out {
                    hits += 1;
                }
            }
        }
    }
    hits as f64 / (s * s * s) as f64
}

impl BallGrid3 {
    pub fn new(spec: GridSpec) -> Result<Self, FieldError> {
        if spec.n < 2 || !(spec.half_width > 0.0) || !(spec.r_out > spec.r_in) || spec.r_in < 0.0 {
            return Err(FieldError::InvalidGrid(format!("{spec:?}")));
        }
        let n = spec.n;
        let h = spec.h();
        let corner = spec.center - Vec3::new(1.0, 1.0, 1.0) * spec.half_width;
        let mut index = vec![NONE; n * n * n];
        let mut ijk = Vec::new();
        let mut frac = Vec::new();
        let mut boundary = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let x = corner + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * h;
                    let f = cell_fraction(x, h, spec.r_in, spec.r_out);
                    if f > 0.0 {
                        index[(k * n + j) * n + i] = ijk.len() as u32;
                        ijk.push([i as u32, j as u32, k as u32]);
                        frac.push(f);
                        boundary.push(
                            spec.tangent_sphere
                                .is_some_and(|r| (x.norm() - r).abs() < h),
                        );
                    }
                }
            }
        }
        if ijk.is_empty() {
            return Err(FieldError::EmptyMask);
        }
        let mut grid = BallGrid3 {
            spec,
            h,
            corner,
            index,
            ijk,
            frac,
            boundary,
            nbr: Vec::new(),
        };
        grid.nbr = (0..grid.len())
            .map(|p| {
                let [i, j, k] = grid.ijk[p].map(|v| v as i64);
                let mut out = [NONE; 6];
                for (slot, (di, dj, dk)) in [
                    (-1, 0, 0),
                    (1, 0, 0),
                    (0, -1, 0),
                    (0, 1, 0),
                    (0, 0, -1),
                    (0, 0, 1),
                ]
                .into_iter()
                .enumerate()
                {
                    out[slot] = grid.lookup(i + di, j + dj, k + dk).map_or(NONE, |q| q as u32);
                }
                out
            })
            .collect();
        Ok(grid)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of masked nodes.
    pub fn len(&self) -> usize {
        self.ijk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ijk.is_empty()
    }

    pub fn position(&self, p: usize) -> Vec3 {
        let [i, j, k] = self.ijk[p];
        self.corner + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.h
    }

    pub fn indices(&self, p: usize) -> [u32; 3] {
        self.ijk[p]
    }

    pub fn fraction(&self, p: usize) -> f64 {
        self.frac[p]
    }

    /// `fraction · h³`.
    pub fn volume(&self, p: usize) -> f64 {
        self.frac[p] * self.h * self.h * self.h
    }

    pub fn is_boundary(&self, p: usize) -> bool {
        self.boundary[p]
    }

    pub fn class(&self, p: usize) -> NodeClass {
        if self.boundary[p] {
            NodeClass::BoundaryAdjacent
        } else {
            NodeClass::Interior
        }
    }

    /// Class of an arbitrary index triple (exterior when unmasked).
    pub fn class_at(&self, i: i64, j: i64, k: i64) -> NodeClass {
        self.lookup(i, j, k).map_or(NodeClass::Exterior, |p| self.class(p))
    }

    pub fn lookup(&self, i: i64, j: i64, k: i64) -> Option<usize> {
        let n = self.spec.n as i64;
        if i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n {
            return None;
        }
        let v = self.index[((k * n + j) * n + i) as usize];
        (v != NONE).then_some(v as usize)
    }

    /// Neighbour of node `p` along `axis` in direction `dir = ±1`.
    pub fn neighbor(&self, p: usize, axis: usize, dir: i32) -> Option<usize> {
        let v = self.nbr[p][2 * axis + usize::from(dir > 0)];
        (v != NONE).then_some(v as usize)
    }

    /// Fractional cell coordinates of `x`, node centres at integers.
    pub(crate) fn local_coords(&self, x: Vec3) -> [f64; 3] {
        let d = x - self.corner;
        [d.x1 / self.h - 0.5, d.x2 / self.h - 0.5, d.x3 / self.h - 0.5]
    }

    /// Signed distance from node `p` to the domain boundary (positive inside).
    pub fn depth(&self, p: usize) -> f64 {
        let r = self.position(p).norm();
        let outer = self.spec.r_out - r;
        if self.spec.r_in > 0.0 {
            outer.min(r - self.spec.r_in)
        } else {
            outer
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn masked_volume_approximates_ball() {
        let g = BallGrid3::new(GridSpec::ball(32, 1.0)).unwrap();
        let v: f64 = (0..g.len()).map(|p| g.volume(p)).sum();
        assert!((v - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0) < 2e-3, "{v}");
        assert!((g.h() * g.n() as f64 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn annulus_volume_and_classes() {
        let g = BallGrid3::new(GridSpec::annulus(40)).unwrap();
        let v: f64 = (0..g.len()).map(|p| g.volume(p)).sum();
        let want = 4.0 * PI / 3.0 * 7.0;
        assert!((v - want).abs() / want < 2e-3);
        for p in 0..g.len() {
            let r = g.position(p).norm();
            assert_eq!(g.is_boundary(p), (r - 1.0).abs() < g.h());
        }
        assert_eq!(g.class_at(20, 20, 20), NodeClass::Exterior);
    }

    #[test]
    fn neighbours_are_consistent() {
        let g = BallGrid3::new(GridSpec::ball(12, 1.0)).unwrap();
        for p in 0..g.len() {
            for axis in 0..3 {
                if let Some(q) = g.neighbor(p, axis, 1) {
                    assert_eq!(g.neighbor(q, axis, -1), Some(p));
                    let d = g.position(q) - g.position(p);
                    assert!((d[axis] - g.h()).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(BallGrid3::new(GridSpec::ball(1, 1.0)).is_err());
        assert!(BallGrid3::new(GridSpec::shell(8, 1.0, 0.5)).is_err());
        let far = GridSpec::local(Vec3::new(5.0, 0.0, 0.0), 0.1, 4, 1.0);
        assert!(matches!(BallGrid3::new(far), Err(FieldError::EmptyMask)));
    }
}
