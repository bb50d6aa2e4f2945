//! Poisson point processes on the thickened torus and on padded planar
//! windows, with a monotone threshold colouring.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Result};
use crate::geometry::{Point2, Rect, TorusGeometry};
use crate::math;
use crate::rng::{trial_rng, TrialRng};

/// Index of a seed inside its process (and inside any tessellation built on it).
pub type SeedId = u32;

/// A point `z = (w, t)` of the process together with its colour uniform `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub id: SeedId,
    pub w: Point2,
    pub t: f64,
    pub u: f64,
}

impl Seed {
    pub fn new(id: SeedId, w: Point2, t: f64, u: f64) -> Self {
        Seed { id, w, t, u }
    }

    /// Black at level `p` iff `u <= p`; raising `p` only turns seeds black.
    #[inline]
    pub fn is_black(&self, p: f64) -> bool {
        self.u <= p
    }
}

/// A planar target rectangle surrounded by a padding margin, with seeds born
/// no later than `height_cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarWindow {
    pub target: Rect,
    pub padding: f64,
    pub height_cap: f64,
}

impl PlanarWindow {
    pub fn new(target: Rect, padding: f64, height_cap: f64) -> Result<Self> {
        if !(padding.is_finite() && padding >= 0.0) {
            return Err(invalid("padding", "must be finite and nonnegative"));
        }
        if !(height_cap.is_finite() && height_cap >= padding) {
            return Err(invalid("height_cap", "must be finite and at least the padding"));
        }
        Ok(PlanarWindow {
            target,
            padding,
            height_cap,
        })
    }

    /// Padding of three localization radii at `scale`, with the height cap
    /// equal to the padding.
    pub fn standard(target: Rect, scale: f64, a: f64) -> Result<Self> {
        let pad = 3.0 * padding_radius(scale, a)?;
        PlanarWindow::new(target, pad, pad)
    }

    /// The region where seeds are sampled.
    pub fn footprint(&self) -> Rect {
        self.target.expand(self.padding)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimDomain {
    Torus(TorusGeometry),
    PlanarWindow(PlanarWindow),
}

impl SimDomain {
    /// Planar region covered by the domain (the fundamental square for a torus).
    pub fn footprint(&self) -> Rect {
        match self {
            SimDomain::Torus(g) => Rect {
                x0: 0.0,
                x1: g.side,
                y0: 0.0,
                y1: g.side,
            },
            SimDomain::PlanarWindow(w) => w.footprint(),
        }
    }

    pub fn height(&self) -> f64 {
        match self {
            SimDomain::Torus(g) => g.thickness,
            SimDomain::PlanarWindow(w) => w.height_cap,
        }
    }

    pub fn volume(&self) -> f64 {
        self.footprint().area() * self.height()
    }

    pub fn torus(&self) -> Option<&TorusGeometry> {
        match self {
            SimDomain::Torus(g) => Some(g),
            SimDomain::PlanarWindow(_) => None,
        }
    }
}

/// `A (log scale)^{1/3}`: the distance within which, with high probability,
/// every point of a region of diameter `scale` has a process point.
pub fn padding_radius(scale: f64, a: f64) -> Result<f64> {
    if !(scale.is_finite() && scale >= 3.0) {
        return Err(invalid("scale", "must be at least 3"));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(invalid("A", "must be positive"));
    }
    Ok(a * math::cbrt(math::ln(scale)))
}

fn poisson_count(rng: &mut TrialRng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    // Poisson::new only fails for non-finite or nonpositive means.
    let dist = Poisson::new(mean).expect("finite positive mean");
    dist.sample(rng) as usize
}

/// Homogeneous Poisson process on `[x0,x1] x [y0,y1] x [t0,t1]`, appended to
/// `out` with consecutive ids starting at `out.len()`.
pub fn sample_box_into(rng: &mut TrialRng, footprint: &Rect, t0: f64, t1: f64, intensity: f64, out: &mut Vec<Seed>) {
    let volume = footprint.area() * (t1 - t0);
    let n = poisson_count(rng, intensity * volume);
    out.reserve(n);
    for _ in 0..n {
        let x = footprint.x0 + footprint.width() * rng.random::<f64>();
        let y = footprint.y0 + footprint.height() * rng.random::<f64>();
        let t = t0 + (t1 - t0) * rng.random::<f64>();
        let u = rng.random::<f64>();
        let id = out.len() as SeedId;
        out.push(Seed::new(id, Point2::new(x, y), t, u));
    }
}

/// Planar Poisson process of the given areal intensity; every height is 0,
/// which turns any of the three metrics into the classical Voronoi distance
/// (Euclidean3) or its analogue.
pub fn sample_flat_into(rng: &mut TrialRng, footprint: &Rect, intensity: f64, out: &mut Vec<Seed>) {
    let n = poisson_count(rng, intensity * footprint.area());
    out.reserve(n);
    for _ in 0..n {
        let x = footprint.x0 + footprint.width() * rng.random::<f64>();
        let y = footprint.y0 + footprint.height() * rng.random::<f64>();
        let u = rng.random::<f64>();
        let id = out.len() as SeedId;
        out.push(Seed::new(id, Point2::new(x, y), 0.0, u));
    }
}

fn validate_domain(domain: &SimDomain) -> Result<()> {
    let fp = domain.footprint();
    let finite = fp.x0.is_finite() && fp.x1.is_finite() && fp.y0.is_finite() && fp.y1.is_finite();
    if !finite || fp.x1 < fp.x0 || fp.y1 < fp.y0 {
        return Err(invalid("domain", "degenerate footprint"));
    }
    let h = domain.height();
    if !(h.is_finite() && h >= 0.0) {
        return Err(invalid("domain", "height must be finite and nonnegative"));
    }
    Ok(())
}

/// Sample the trial `trial_index` of the experiment keyed by `master_seed`.
///
/// The count is Poisson with mean `intensity * volume`, positions are uniform,
/// and each seed carries an independent colour uniform. Zero-volume domains
/// yield an empty process.
pub fn sample_poisson(domain: &SimDomain, intensity: f64, master_seed: u64, trial_index: u64) -> Result<Vec<Seed>> {
    if !(intensity.is_finite() && intensity > 0.0) {
        return Err(invalid("intensity", "must be finite and positive"));
    }
    validate_domain(domain)?;
    let mut rng = trial_rng(master_seed, trial_index);
    let mut seeds = Vec::new();
    sample_box_into(
        &mut rng,
        &domain.footprint(),
        0.0,
        domain.height(),
        intensity,
        &mut seeds,
    );
    Ok(seeds)
}

/// A sampled process with its colouring level.
#[derive(Debug, Clone, PartialEq)]
pub struct ColouredProcess {
    pub seeds: Vec<Seed>,
    pub p: f64,
    pub intensity: f64,
    pub master_seed: u64,
    pub trial_index: u64,
}

impl ColouredProcess {
    pub fn sample(domain: &SimDomain, intensity: f64, p: f64, master_seed: u64, trial_index: u64) -> Result<Self> {
        check_probability("p", p)?;
        let seeds = sample_poisson(domain, intensity, master_seed, trial_index)?;
        Ok(ColouredProcess {
            seeds,
            p,
            intensity,
            master_seed,
            trial_index,
        })
    }

    /// The same positions and uniforms recoloured at level `p`.
    pub fn with_level(&self, p: f64) -> Self {
        ColouredProcess { p, ..self.clone() }
    }
}

/// Split into `(P+, P-)` by the threshold rule `u <= p`.
pub fn colour_split(process: &ColouredProcess) -> (Vec<Seed>, Vec<Seed>) {
    process.seeds.iter().partition(|z| z.is_black(process.p))
}

pub(crate) fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(name, "must lie in [0, 1]"))
    }
}
