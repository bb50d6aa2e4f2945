//! Norms on R^3 = R^2 x R, the distances they induce on the plane slice and
//! on the thickened torus, and related constants.

use core::fmt;
use core::ops::{Add, Mul, Sub};
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::math;

/// A point of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        math::hypot(self.x, self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector at angle `theta` from the positive x-axis.
    pub fn from_angle(theta: f64) -> Self {
        Point2::new(math::cos(theta), math::sin(theta))
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// A vector of R^2 x R: two planar coordinates and a height (time) coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x1: f64,
    pub x2: f64,
    pub t: f64,
}

impl Vec3 {
    pub const fn new(x1: f64, x2: f64, t: f64) -> Self {
        Vec3 { x1, x2, t }
    }

    pub fn planar(self) -> Point2 {
        Point2::new(self.x1, self.x2)
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.t.is_finite()
    }

    pub fn euclid_norm(self) -> f64 {
        math::sqrt(self.x1 * self.x1 + self.x2 * self.x2 + self.t * self.t)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x1 * o.x1 + self.x2 * o.x2 + self.t * o.t
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x1 + o.x1, self.x2 + o.x2, self.t + o.t)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x1 - o.x1, self.x2 - o.x2, self.t - o.t)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x1 * k, self.x2 * k, self.t * k)
    }
}

/// The three norms on R^3 that define the tessellations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    /// `sqrt(x1^2 + x2^2) + |t|`: crystals grow as discs at unit speed.
    JohnsonMehl,
    /// The usual Euclidean norm of R^3; slices give planar power diagrams.
    Euclidean3,
    /// `|x1| + |x2| + |t|`: crystals grow as squares.
    L1Sum,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::JohnsonMehl, MetricKind::Euclidean3, MetricKind::L1Sum];

    /// Norm of the vector with planar part `(dx, dy)` and height `dt`.
    #[inline]
    pub fn norm3(self, dx: f64, dy: f64, dt: f64) -> f64 {
        match self {
            MetricKind::JohnsonMehl => math::sqrt(dx * dx + dy * dy) + math::abs(dt),
            MetricKind::Euclidean3 => math::sqrt(dx * dx + dy * dy + dt * dt),
            MetricKind::L1Sum => math::abs(dx) + math::abs(dy) + math::abs(dt),
        }
    }

    #[inline]
    pub fn norm(self, v: Vec3) -> f64 {
        self.norm3(v.x1, v.x2, v.t)
    }

    /// Distance between the plane point `(x, 0)` and a seed `(w, t)`.
    #[inline]
    pub fn slice_distance(self, x: Point2, w: Point2, t: f64) -> f64 {
        self.norm3(x.x - w.x, x.y - w.y, t)
    }

    /// Largest ratio between this norm and the planar Euclidean norm on
    /// vectors of the plane `t = 0`.
    pub fn planar_lipschitz(self) -> f64 {
        match self {
            MetricKind::L1Sum => core::f64::consts::SQRT_2,
            _ => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::JohnsonMehl => "jm",
            MetricKind::Euclidean3 => "euclid3",
            MetricKind::L1Sum => "l1",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jm" => Ok(MetricKind::JohnsonMehl),
            "euclid3" => Ok(MetricKind::Euclidean3),
            "l1" => Ok(MetricKind::L1Sum),
            _ => Err(invalid("metric", "expected one of jm, euclid3, l1")),
        }
    }
}

/// Norm of `v` under `m`.
pub fn norm_value(v: Vec3, m: MetricKind) -> f64 {
    m.norm(v)
}

/// `C_d`, the diameter of the unit cube `[0,1]^3` in the metric of `m`.
///
/// For a norm the supremum is attained at opposite corners, so this is the
/// norm of `(1, 1, 1)`.
pub fn unit_cube_diameter(m: MetricKind) -> f64 {
    m.norm(Vec3::new(1.0, 1.0, 1.0))
}

/// The thickened torus `T(s) x [0, h]`: planar coordinates wrap modulo `s`,
/// the height axis does not wrap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGeometry {
    pub side: f64,
    pub thickness: f64,
}

impl TorusGeometry {
    pub fn new(side: f64, thickness: f64) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) {
            return Err(invalid("side", "must be finite and positive"));
        }
        if !(thickness.is_finite() && thickness >= 0.0) {
            return Err(invalid("thickness", "must be finite and nonnegative"));
        }
        Ok(TorusGeometry { side, thickness })
    }

    pub fn contains(&self, v: Vec3) -> bool {
        v.is_finite()
            && (0.0..self.side).contains(&v.x1)
            && (0.0..self.side).contains(&v.x2)
            && (0.0..=self.thickness).contains(&v.t)
    }

    /// Reduce a planar coordinate into `[0, side)`.
    pub fn wrap(&self, c: f64) -> f64 {
        let r = c - self.side * math::floor(c / self.side);
        if r >= self.side {
            0.0
        } else {
            r
        }
    }

    pub fn wrap_point(&self, p: Point2) -> Point2 {
        Point2::new(self.wrap(p.x), self.wrap(p.y))
    }

    /// Signed planar difference folded into `[-side/2, side/2]`.
    #[inline]
    pub fn fold(&self, d: f64) -> f64 {
        let s = self.side;
        let mut d = d - s * math::round(d / s);
        if d > 0.5 * s {
            d -= s;
        } else if d < -0.5 * s {
            d += s;
        }
        d
    }
}

/// Distance on `T(s) x [0, h]` induced by `m`: the minimum of the norm over the
/// nine planar wrap images of `a - b`. The height difference never wraps.
pub fn torus_distance(a: Vec3, b: Vec3, g: &TorusGeometry, m: MetricKind) -> Result<f64> {
    if !g.contains(a) || !g.contains(b) {
        return Err(Error::OutsideDomain);
    }
    let d = a - b;
    let s = g.side;
    let mut best = f64::INFINITY;
    for i in -1..=1 {
        for j in -1..=1 {
            let v = m.norm3(d.x1 + i as f64 * s, d.x2 + j as f64 * s, d.t);
            if v < best {
                best = v;
            }
        }
    }
    Ok(best)
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` with positive area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(invalid("rect", "coordinates must be finite"));
        }
        if !(x0 < x1 && y0 < y1) {
            return Err(invalid("rect", "requires x0 < x1 and y0 < y1"));
        }
        Ok(Rect { x0, x1, y0, y1 })
    }

    /// `[0, rho*s] x [0, s]`.
    pub fn crossing_box(rho: f64, s: f64) -> Result<Self> {
        Rect::new(0.0, rho * s, 0.0, s)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Aspect ratio width / height.
    pub fn aspect(&self) -> f64 {
        self.width() / self.height()
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn expand(&self, margin: f64) -> Rect {
        Rect {
            x0: self.x0 - margin,
            x1: self.x1 + margin,
            y0: self.y0 - margin,
            y1: self.y1 + margin,
        }
    }

    /// Planar Euclidean distance from an interior point to the boundary.
    pub fn inner_distance(&self, p: Point2) -> f64 {
        let dx = (p.x - self.x0).min(self.x1 - p.x);
        let dy = (p.y - self.y0).min(self.y1 - p.y);
        dx.min(dy)
    }

    /// Largest `r >= 0` with `p + r*dir` inside the rectangle (p inside).
    pub fn ray_extent(&self, p: Point2, dir: Point2) -> f64 {
        let mut r = f64::INFINITY;
        if dir.x > 0.0 {
            r = r.min((self.x1 - p.x) / dir.x);
        } else if dir.x < 0.0 {
            r = r.min((self.x0 - p.x) / dir.x);
        }
        if dir.y > 0.0 {
            r = r.min((self.y1 - p.y) / dir.y);
        } else if dir.y < 0.0 {
            r = r.min((self.y0 - p.y) / dir.y);
        }
        r.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        assert_eq!(norm_value(Vec3::new(3.0, 4.0, 2.0), MetricKind::JohnsonMehl), 7.0);
        assert_eq!(norm_value(Vec3::new(1.0, 2.0, 2.0), MetricKind::Euclidean3), 3.0);
        assert_eq!(norm_value(Vec3::new(1.0, 2.0, 3.0), MetricKind::L1Sum), 6.0);
        for m in MetricKind::ALL {
            assert_eq!(norm_value(Vec3::default(), m), 0.0);
            assert_eq!(
                norm_value(Vec3::new(-1.0, 2.0, -3.0), m),
                norm_value(Vec3::new(1.0, -2.0, 3.0), m)
            );
        }
    }

    #[test]
    fn torus_wrap_examples() {
        let g = TorusGeometry::new(10.0, 10.0).unwrap();
        let a = Vec3::new(9.0, 0.0, 0.0);
        let o = Vec3::new(0.0, 0.0, 0.0);
        assert_eq!(torus_distance(a, o, &g, MetricKind::JohnsonMehl).unwrap(), 1.0);
        let d = torus_distance(Vec3::new(9.0, 9.0, 0.0), o, &g, MetricKind::Euclidean3).unwrap();
        assert!((d - core::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(torus_distance(a, a, &g, MetricKind::L1Sum).unwrap(), 0.0);
    }

    #[test]
    fn torus_height_never_wraps() {
        let g = TorusGeometry::new(10.0, 10.0).unwrap();
        let d = torus_distance(
            Vec3::new(0.0, 0.0, 9.5),
            Vec3::new(0.0, 0.0, 0.5),
            &g,
            MetricKind::JohnsonMehl,
        )
        .unwrap();
        assert_eq!(d, 9.0);
    }

    #[test]
    fn torus_rejects_outside_points() {
        let g = TorusGeometry::new(10.0, 5.0).unwrap();
        let o = Vec3::default();
        for bad in [
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(-0.1, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 5.5),
            Vec3::new(f64::NAN, 0.0, 0.0),
        ] {
            assert_eq!(
                torus_distance(bad, o, &g, MetricKind::JohnsonMehl),
                Err(Error::OutsideDomain)
            );
        }
    }

    #[test]
    fn cube_diameters() {
        assert!((unit_cube_diameter(MetricKind::Euclidean3) - 3f64.sqrt()).abs() < 1e-15);
        assert!((unit_cube_diameter(MetricKind::JohnsonMehl) - (2f64.sqrt() + 1.0)).abs() < 1e-15);
        assert_eq!(unit_cube_diameter(MetricKind::L1Sum), 3.0);
    }

    #[test]
    fn fold_matches_nine_images() {
        let g = TorusGeometry::new(7.0, 7.0).unwrap();
        let pts = [(0.1, 6.9, 0.3), (3.4, 3.6, 1.0), (6.5, 0.2, 6.9), (3.5, 0.0, 2.0)];
        for m in MetricKind::ALL {
            for a in pts {
                for b in pts {
                    let (a, b) = (Vec3::new(a.0, a.1, a.2), Vec3::new(b.0, b.1, b.2));
                    let folded = m.norm3(g.fold(a.x1 - b.x1), g.fold(a.x2 - b.x2), a.t - b.t);
                    let exact = torus_distance(a, b, &g, m).unwrap();
                    assert!((folded - exact).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for m in MetricKind::ALL {
            assert_eq!(m.as_str().parse::<MetricKind>().unwrap(), m);
        }
        assert!("l2".parse::<MetricKind>().is_err());
    }

    #[test]
    fn rect_ray_extent() {
        let r = Rect::new(0.0, 10.0, 0.0, 5.0).unwrap();
        let p = Point2::new(2.0, 1.0);
        assert!((r.ray_extent(p, Point2::new(1.0, 0.0)) - 8.0).abs() < 1e-15);
        assert!((r.ray_extent(p, Point2::new(0.0, -1.0)) - 1.0).abs() < 1e-15);
        assert!(Rect::new(0.0, 0.0, 0.0, 1.0).is_err());
    }
}
