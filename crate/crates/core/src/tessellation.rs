//! Nearest-seed queries, colours, robust blackness, star-domain ray probing
//! and the cell adjacency graph.
//!
//! Cells are never built explicitly. A point `x` of the plane belongs to the
//! cell of the seed minimizing `d((x, 0), z)`, ties going to the lowest id.
//! Queries go through a planar bucket grid whose buckets keep their seeds
//! sorted by height; since every supported norm dominates both the planar
//! Euclidean distance and `|t|`, a bucket scan can stop at the first seed
//! whose height exceeds the current bound.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::error::{invalid, Error, Result};
use crate::geometry::{MetricKind, Point2, Rect};
use crate::math;
use crate::process::{check_probability, Seed, SeedId, SimDomain};

/// Radial tolerance of boundary probes.
pub const PROBE_TOLERANCE: f64 = 1e-9;
/// Angular resolution floor of adaptive ray refinement, `2 pi / 2^20`.
pub const MIN_PROBE_ANGLE: f64 = TAU / (1u64 << 20) as f64;

const NO_SEED: SeedId = SeedId::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Colour {
    Black,
    White,
}

/// Winner and runner-up of a nearest-seed query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestResult {
    pub winner: SeedId,
    pub d1: f64,
    /// `None` when the process has a single seed; `d2` is then infinite.
    pub runner_up: Option<SeedId>,
    pub d2: f64,
}

/// Best black and best white seed at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColourDistances {
    pub black: Option<(SeedId, f64)>,
    pub white: Option<(SeedId, f64)>,
}

impl ColourDistances {
    pub fn black_distance(&self) -> f64 {
        self.black.map_or(f64::INFINITY, |b| b.1)
    }

    pub fn white_distance(&self) -> f64 {
        self.white.map_or(f64::INFINITY, |w| w.1)
    }
}

// ---------------------------------------------------------------------------
// Collectors used by the bucket search.

trait Collector {
    /// Seeds whose distance is certainly above this can be skipped.
    fn bound(&self) -> f64;
    fn offer(&mut self, id: SeedId, d: f64);
}

#[inline]
fn precedes(a: (SeedId, f64), b: (SeedId, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}

struct Best1 {
    best: (SeedId, f64),
}

impl Collector for Best1 {
    #[inline]
    fn bound(&self) -> f64 {
        self.best.1
    }

    #[inline]
    fn offer(&mut self, id: SeedId, d: f64) {
        if id == self.best.0 {
            if d < self.best.1 {
                self.best.1 = d;
            }
        } else if precedes((id, d), self.best) {
            self.best = (id, d);
        }
    }
}

struct Best2 {
    best: (SeedId, f64),
    second: (SeedId, f64),
}

impl Best2 {
    fn new() -> Self {
        Best2 {
            best: (NO_SEED, f64::INFINITY),
            second: (NO_SEED, f64::INFINITY),
        }
    }
}

impl Collector for Best2 {
    #[inline]
    fn bound(&self) -> f64 {
        self.second.1
    }

    #[inline]
    fn offer(&mut self, id: SeedId, d: f64) {
        let cand = (id, d);
        if id == self.best.0 {
            if d < self.best.1 {
                self.best.1 = d;
            }
        } else if id == self.second.0 {
            if d < self.second.1 {
                self.second.1 = d;
                if precedes(self.second, self.best) {
                    core::mem::swap(&mut self.best, &mut self.second);
                }
            }
        } else if precedes(cand, self.best) {
            self.second = self.best;
            self.best = cand;
        } else if precedes(cand, self.second) {
            self.second = cand;
        }
    }
}

struct ByColour<'a> {
    seeds: &'a [Seed],
    p: f64,
    black: (SeedId, f64),
    white: (SeedId, f64),
}

impl Collector for ByColour<'_> {
    #[inline]
    fn bound(&self) -> f64 {
        self.black.1.max(self.white.1)
    }

    #[inline]
    fn offer(&mut self, id: SeedId, d: f64) {
        let slot = if self.seeds[id as usize].is_black(self.p) {
            &mut self.black
        } else {
            &mut self.white
        };
        if slot.0 == id {
            if d < slot.1 {
                slot.1 = d;
            }
        } else if precedes((id, d), *slot) {
            *slot = (id, d);
        }
    }
}

// ---------------------------------------------------------------------------
// Bucket grid.

#[derive(Debug, Clone)]
struct BucketGrid {
    x0: f64,
    y0: f64,
    bx: f64,
    by: f64,
    nx: usize,
    ny: usize,
    wrap: Option<f64>,
    starts: Vec<u32>,
    entries: Vec<Entry>,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    w: Point2,
    t: f64,
    id: SeedId,
}

impl BucketGrid {
    fn build(seeds: &[Seed], fp: &Rect, wrap: Option<f64>, bucket: f64) -> Self {
        let n_axis = |len: f64| -> usize {
            let n = math::floor(len / bucket);
            if n.is_finite() {
                (n as usize).clamp(1, 4096)
            } else {
                1
            }
        };
        let nx = n_axis(fp.width());
        let ny = n_axis(fp.height());
        let bx = fp.width() / nx as f64;
        let by = fp.height() / ny as f64;
        let mut grid = BucketGrid {
            x0: fp.x0,
            y0: fp.y0,
            bx,
            by,
            nx,
            ny,
            wrap,
            starts: vec![0; nx * ny + 1],
            entries: Vec::with_capacity(seeds.len()),
        };
        let mut keyed: Vec<(usize, Entry)> = seeds
            .iter()
            .map(|z| {
                let (i, j) = grid.cell_of(z.w);
                (
                    j * nx + i,
                    Entry {
                        w: z.w,
                        t: z.t,
                        id: z.id,
                    },
                )
            })
            .collect();
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.t.total_cmp(&b.1.t)).then(a.1.id.cmp(&b.1.id)));
        for (k, _) in &keyed {
            grid.starts[k + 1] += 1;
        }
        for k in 0..nx * ny {
            grid.starts[k + 1] += grid.starts[k];
        }
        grid.entries.extend(keyed.into_iter().map(|(_, e)| e));
        grid
    }

    #[inline]
    fn cell_of(&self, p: Point2) -> (usize, usize) {
        let i = math::floor((p.x - self.x0) / self.bx);
        let j = math::floor((p.y - self.y0) / self.by);
        let clamp = |v: f64, n: usize| -> usize {
            if v.is_nan() || v < 0.0 {
                0
            } else if v >= n as f64 {
                n - 1
            } else {
                v as usize
            }
        };
        (clamp(i, self.nx), clamp(j, self.ny))
    }
}

// ---------------------------------------------------------------------------

/// An immutable tessellation of a domain by a coloured seed set.
#[derive(Debug, Clone)]
pub struct Tessellation {
    domain: SimDomain,
    metric: MetricKind,
    seeds: Vec<Seed>,
    p: f64,
    grid: BucketGrid,
}

impl Tessellation {
    /// Build the query structure. Seed ids must equal their positions.
    pub fn new(domain: SimDomain, metric: MetricKind, seeds: Vec<Seed>, p: f64) -> Result<Self> {
        let bucket = default_bucket_size(&domain, seeds.len());
        Self::with_bucket_size(domain, metric, seeds, p, bucket)
    }

    pub fn with_bucket_size(
        domain: SimDomain,
        metric: MetricKind,
        mut seeds: Vec<Seed>,
        p: f64,
        bucket: f64,
    ) -> Result<Self> {
        check_probability("p", p)?;
        if !(bucket.is_finite() && bucket > 0.0) {
            return Err(invalid("bucket", "must be finite and positive"));
        }
        if seeds.len() >= NO_SEED as usize {
            return Err(invalid("seeds", "too many seeds"));
        }
        if seeds.iter().enumerate().any(|(i, z)| z.id as usize != i) {
            return Err(invalid("seeds", "ids must equal positions"));
        }
        if let SimDomain::Torus(g) = &domain {
            for z in seeds.iter_mut() {
                z.w = g.wrap_point(z.w);
            }
        }
        let wrap = domain.torus().map(|g| g.side);
        let grid = BucketGrid::build(&seeds, &domain.footprint(), wrap, bucket);
        Ok(Tessellation {
            domain,
            metric,
            seeds,
            p,
            grid,
        })
    }

    pub fn domain(&self) -> &SimDomain {
        &self.domain
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn seeds(&self) -> &[Seed] {
        &self.seeds
    }

    pub fn seed(&self, id: SeedId) -> &Seed {
        &self.seeds[id as usize]
    }

    pub fn level(&self) -> f64 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// The same positions recoloured at level `p`.
    pub fn recoloured(&self, p: f64) -> Result<Self> {
        check_probability("p", p)?;
        Ok(Tessellation { p, ..self.clone() })
    }

    pub fn is_black(&self, id: SeedId) -> bool {
        self.seeds[id as usize].is_black(self.p)
    }

    pub fn colour_of(&self, id: SeedId) -> Colour {
        if self.is_black(id) {
            Colour::Black
        } else {
            Colour::White
        }
    }

    /// Canonical representative of a planar point (wrapped on the torus).
    #[inline]
    pub fn canonical(&self, x: Point2) -> Point2 {
        match &self.domain {
            SimDomain::Torus(g) => g.wrap_point(x),
            SimDomain::PlanarWindow(_) => x,
        }
    }

    /// `d((x, 0), (w, t))` in the domain's geometry.
    #[inline]
    pub fn point_distance(&self, x: Point2, w: Point2, t: f64) -> f64 {
        match &self.domain {
            SimDomain::Torus(g) => self.metric.norm3(g.fold(x.x - w.x), g.fold(x.y - w.y), t),
            SimDomain::PlanarWindow(_) => self.metric.slice_distance(x, w, t),
        }
    }

    #[inline]
    pub fn seed_distance(&self, x: Point2, id: SeedId) -> f64 {
        let z = &self.seeds[id as usize];
        self.point_distance(x, z.w, z.t)
    }

    fn search<C: Collector>(&self, x: Point2, c: &mut C) {
        let g = &self.grid;
        let x = self.canonical(x);
        let (ci, cj) = g.cell_of(x);
        let (ci, cj) = (ci as isize, cj as isize);
        let (nx, ny) = (g.nx as isize, g.ny as isize);
        let max_ring = (ci.max(nx - 1 - ci)).max(cj.max(ny - 1 - cj));
        let mut k: isize = 0;
        loop {
            if k > 0 {
                let left = x.x - (g.x0 + (ci - k + 1) as f64 * g.bx);
                let right = (g.x0 + (ci + k) as f64 * g.bx) - x.x;
                let down = x.y - (g.y0 + (cj - k + 1) as f64 * g.by);
                let up = (g.y0 + (cj + k) as f64 * g.by) - x.y;
                let lb = left.min(right).min(down).min(up).max(0.0);
                if lb > c.bound() {
                    return;
                }
            }
            match g.wrap {
                None => {
                    if k > max_ring {
                        return;
                    }
                }
                Some(_) => {
                    if 2 * k + 1 > nx.min(ny) {
                        self.scan_all(x, c);
                        return;
                    }
                }
            }
            for j in (cj - k)..=(cj + k) {
                let ring_row = j == cj - k || j == cj + k;
                let step = if ring_row { 1 } else { (2 * k).max(1) };
                let mut i = ci - k;
                while i <= ci + k {
                    self.scan_bucket(x, i, j, c);
                    i += step;
                }
            }
            k += 1;
        }
    }

    #[inline]
    fn scan_bucket<C: Collector>(&self, x: Point2, i: isize, j: isize, c: &mut C) {
        let g = &self.grid;
        let (nx, ny) = (g.nx as isize, g.ny as isize);
        let (bi, bj, ox, oy) = match g.wrap {
            None => {
                if i < 0 || j < 0 || i >= nx || j >= ny {
                    return;
                }
                (i, j, 0.0, 0.0)
            }
            Some(s) => {
                let bi = i.rem_euclid(nx);
                let bj = j.rem_euclid(ny);
                (bi, bj, (i - bi) as f64 / nx as f64 * s, (j - bj) as f64 / ny as f64 * s)
            }
        };
        // Planar lower bound to the bucket (in unwrapped coordinates).
        let lo_x = g.x0 + i as f64 * g.bx;
        let lo_y = g.y0 + j as f64 * g.by;
        let dx = (lo_x - x.x).max(x.x - (lo_x + g.bx)).max(0.0);
        let dy = (lo_y - x.y).max(x.y - (lo_y + g.by)).max(0.0);
        if dx * dx + dy * dy > c.bound() * c.bound() {
            return;
        }
        let b = (bj * nx + bi) as usize;
        let (s, e) = (g.starts[b] as usize, g.starts[b + 1] as usize);
        for entry in &g.entries[s..e] {
            if entry.t > c.bound() {
                break;
            }
            let d = self
                .metric
                .norm3(x.x - (entry.w.x + ox), x.y - (entry.w.y + oy), entry.t);
            c.offer(entry.id, d);
        }
    }

    fn scan_all<C: Collector>(&self, x: Point2, c: &mut C) {
        for z in &self.seeds {
            c.offer(z.id, self.point_distance(x, z.w, z.t));
        }
    }

    /// Winner and runner-up at `x`.
    pub fn nearest_seed(&self, x: Point2) -> Result<NearestResult> {
        if self.seeds.is_empty() {
            return Err(Error::EmptyProcess);
        }
        let mut c = Best2::new();
        self.search(x, &mut c);
        Ok(NearestResult {
            winner: c.best.0,
            d1: c.best.1,
            runner_up: (c.second.0 != NO_SEED).then_some(c.second.0),
            d2: c.second.1,
        })
    }

    /// Winner at `x`, seeding the search with a guess (e.g. the winner of a
    /// neighbouring raster cell). The guess only affects speed.
    #[inline]
    pub fn winner_with_hint(&self, x: Point2, hint: Option<SeedId>) -> Option<(SeedId, f64)> {
        if self.seeds.is_empty() {
            return None;
        }
        let best = match hint {
            Some(h) if (h as usize) < self.seeds.len() => (h, self.seed_distance(x, h)),
            _ => (NO_SEED, f64::INFINITY),
        };
        let mut c = Best1 { best };
        self.search(x, &mut c);
        Some(c.best)
    }

    pub fn winner(&self, x: Point2) -> Option<(SeedId, f64)> {
        self.winner_with_hint(x, None)
    }

    /// Reference answer by exhaustive scan; used to cross-check the index.
    pub fn nearest_linear(&self, x: Point2) -> Result<NearestResult> {
        if self.seeds.is_empty() {
            return Err(Error::EmptyProcess);
        }
        let mut c = Best2::new();
        self.scan_all(self.canonical(x), &mut c);
        Ok(NearestResult {
            winner: c.best.0,
            d1: c.best.1,
            runner_up: (c.second.0 != NO_SEED).then_some(c.second.0),
            d2: c.second.1,
        })
    }

    pub fn colour_at(&self, x: Point2) -> Result<Colour> {
        self.nearest_seed(x).map(|r| self.colour_of(r.winner))
    }

    /// Nearest black seed and nearest white seed at `x`.
    pub fn colour_distances(&self, x: Point2) -> ColourDistances {
        let mut c = ByColour {
            seeds: &self.seeds,
            p: self.p,
            black: (NO_SEED, f64::INFINITY),
            white: (NO_SEED, f64::INFINITY),
        };
        self.search(x, &mut c);
        ColourDistances {
            black: (c.black.0 != NO_SEED).then_some(c.black),
            white: (c.white.0 != NO_SEED).then_some(c.white),
        }
    }

    /// `d(x, P+) <= d(x, P-) - eta`, with `d(x, empty) = +inf`.
    pub fn is_robustly_black(&self, x: Point2, eta: f64) -> Result<bool> {
        if !(eta >= 0.0) {
            return Err(invalid("eta", "must be nonnegative"));
        }
        if self.seeds.is_empty() {
            return Err(Error::EmptyProcess);
        }
        let cd = self.colour_distances(x);
        Ok(robust_margin_holds(cd.black_distance(), cd.white_distance(), eta))
    }

    /// Largest radius a ray from `centre` may travel while staying inside the
    /// domain (inside the footprint, or within the torus injectivity radius).
    pub fn ray_limit(&self, centre: Point2, dir: Point2) -> f64 {
        match &self.domain {
            SimDomain::Torus(g) => 0.5 * g.side,
            SimDomain::PlanarWindow(w) => w.footprint().ray_extent(centre, dir),
        }
    }

    /// Whether seed `id` wins at its own planar position.
    pub fn owns_centre(&self, id: SeedId) -> bool {
        let z = &self.seeds[id as usize];
        matches!(self.winner(z.w), Some((w, _)) if w == id)
    }

    /// Ray from the seed's centre `w` in direction `dir` (normalized here) up
    /// to the first point where the seed stops being the strict winner.
    pub fn cell_boundary_probe(&self, id: SeedId, dir: Point2) -> Result<ProbeOutcome> {
        if id as usize >= self.seeds.len() {
            return Err(invalid("id", "no such seed"));
        }
        if !self.owns_centre(id) {
            return Err(Error::CentreNotOwned(id));
        }
        let n = dir.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(invalid("direction", "must be a nonzero finite vector"));
        }
        let dir = dir * (1.0 / n);
        let w = self.seeds[id as usize].w;
        let limit = self.ray_limit(w, dir);
        Ok(ray_exit(&OwnedCell { tess: self, owner: id }, w, dir, limit))
    }

    /// Probe the whole cell of `id` from `centre`, which must lie in the cell.
    pub fn probe_cell(&self, id: SeedId, centre: Point2, angular_budget: usize) -> CellProbe {
        let rival = OwnedCell { tess: self, owner: id };
        probe_star(&rival, centre, angular_budget, |dir| self.ray_limit(centre, dir))
    }

    /// A point inside the cell of `id` from which rays can be shot: the
    /// seed's centre when owned, else (for convex-cell metrics) the interior
    /// raster point of largest margin found at spacing `step`.
    pub fn probe_centre(&self, id: SeedId, step: f64) -> Option<Point2> {
        if self.owns_centre(id) {
            return Some(self.seeds[id as usize].w);
        }
        match self.metric {
            // Cells are star domains about w: not owning w means empty.
            MetricKind::JohnsonMehl | MetricKind::L1Sum => None,
            MetricKind::Euclidean3 => self.interior_point_by_sampling(id, step),
        }
    }

    /// A point in the cell of `id` near `x` (typically a boundary witness of
    /// that cell), found by sampling small circles around `x`. Among the hits
    /// on the smallest successful circle, the one with the largest margin
    /// over the runner-up is returned.
    pub fn interior_point_near(&self, id: SeedId, x: Point2) -> Option<Point2> {
        let mut radius = 1e-7;
        while radius < 1.0 {
            let mut best: Option<(Point2, f64)> = None;
            for k in 0..24 {
                let y = x + Point2::from_angle(TAU * k as f64 / 24.0) * radius;
                if let Ok(r) = self.nearest_seed(y) {
                    if r.winner == id && best.is_none_or(|b| r.d2 - r.d1 > b.1) {
                        best = Some((y, r.d2 - r.d1));
                    }
                }
            }
            if let Some(b) = best {
                return Some(b.0);
            }
            radius *= 4.0;
        }
        None
    }

    /// A probe centre for a cell known to touch `known`: `w` when owned,
    /// otherwise (cells convex but not star about `w`) a nearby interior point.
    pub fn probe_centre_near(&self, id: SeedId, known: Point2) -> Option<Point2> {
        if self.owns_centre(id) {
            return Some(self.seeds[id as usize].w);
        }
        match self.metric {
            MetricKind::JohnsonMehl | MetricKind::L1Sum => None,
            MetricKind::Euclidean3 => self.interior_point_near(id, known),
        }
    }

    /// Whether seed `id` sits where window truncation could matter: born
    /// within `margin` of the height cap, or within `margin` of the
    /// footprint's sides. Never true on the torus.
    pub fn boundary_suspect(&self, id: SeedId, margin: f64) -> bool {
        match &self.domain {
            SimDomain::Torus(_) => false,
            SimDomain::PlanarWindow(w) => {
                let z = &self.seeds[id as usize];
                z.t > w.height_cap - margin || w.footprint().inner_distance(z.w) < margin
            }
        }
    }

    fn interior_point_by_sampling(&self, id: SeedId, step: f64) -> Option<Point2> {
        self.interior_points_by_sampling(step)[id as usize]
    }

    /// For every seed, the raster point of largest margin among those it
    /// wins, in one sweep at spacing `step`.
    fn interior_points_by_sampling(&self, step: f64) -> Vec<Option<Point2>> {
        let fp = self.domain.footprint();
        let nx = math::ceil(fp.width() / step).max(1.0) as usize;
        let ny = math::ceil(fp.height() / step).max(1.0) as usize;
        let (hx, hy) = (fp.width() / nx as f64, fp.height() / ny as f64);
        let mut best: Vec<Option<(Point2, f64)>> = vec![None; self.seeds.len()];
        for j in 0..ny {
            for i in 0..nx {
                let x = Point2::new(fp.x0 + (i as f64 + 0.5) * hx, fp.y0 + (j as f64 + 0.5) * hy);
                let Ok(r) = self.nearest_seed(x) else {
                    continue;
                };
                let margin = r.d2 - r.d1;
                let slot = &mut best[r.winner as usize];
                if slot.is_none_or(|b| margin > b.1) {
                    *slot = Some((x, margin));
                }
            }
        }
        best.into_iter().map(|b| b.map(|b| b.0)).collect()
    }

    /// The adjacency graph `G_P`: two seeds are adjacent when their cells
    /// meet. Cells are probed by star-domain ray shooting with adaptive
    /// angular refinement; `raster_step` is the sampling spacing used to
    /// look for cells that do not contain their own centre.
    pub fn adjacency_graph(&self, angular_budget: usize, raster_step: f64) -> Result<AdjacencyGraph> {
        if angular_budget < 16 {
            return Err(invalid("angular_budget", "must be at least 16"));
        }
        if !(raster_step.is_finite() && raster_step > 0.0) {
            return Err(invalid("raster_step", "must be finite and positive"));
        }
        let n = self.seeds.len();
        let owned: Vec<bool> = (0..n as SeedId).map(|id| self.owns_centre(id)).collect();
        let sampled = match self.metric {
            MetricKind::Euclidean3 if owned.iter().any(|o| !o) => self.interior_points_by_sampling(raster_step),
            _ => vec![None; n],
        };
        let mut probes = Vec::with_capacity(n);
        for id in 0..n as SeedId {
            let owns = owned[id as usize];
            let centre = if owns {
                Some(self.seeds[id as usize].w)
            } else {
                sampled[id as usize]
            };
            let probe = centre.map(|c| self.probe_cell(id, c, angular_budget));
            probes.push((owns, probe));
        }
        Ok(AdjacencyGraph::from_probes(angular_budget, probes))
    }
}

/// Robust blackness comparison with the convention `inf - eta = inf`.
#[inline]
pub fn robust_margin_holds(d_black: f64, d_white: f64, eta: f64) -> bool {
    if d_white.is_infinite() {
        return d_black.is_finite() || d_black == d_white;
    }
    d_black <= d_white - eta
}

fn default_bucket_size(domain: &SimDomain, n: usize) -> f64 {
    let fp = domain.footprint();
    let area = fp.area();
    if n == 0 || !(area > 0.0) {
        return fp.width().max(fp.height()).max(1.0);
    }
    let h = domain.height();
    // Roughly two seeds within reach of a query per bucket.
    if h > 0.0 {
        let lambda = n as f64 / (area * h);
        1.2 / math::cbrt(lambda)
    } else {
        1.2 * math::sqrt(area / n as f64)
    }
}

// ---------------------------------------------------------------------------
// Ray probing.

/// Competition between one owner and everyone else along a ray.
pub trait Rivalry {
    fn owner_distance(&self, x: Point2) -> f64;
    /// Closest competitor at `x`, or `None` if nobody competes.
    fn rival(&self, x: Point2) -> Option<(SeedId, f64)>;
    fn rival_distance(&self, x: Point2, rival: SeedId) -> f64;
    /// Whether the owner is the (tie-broken) winner against this rival.
    fn owner_beats(&self, owner_d: f64, rival: SeedId, rival_d: f64) -> bool;
}

/// The owner is a seed of the tessellation itself.
pub struct OwnedCell<'a> {
    pub tess: &'a Tessellation,
    pub owner: SeedId,
}

impl Rivalry for OwnedCell<'_> {
    fn owner_distance(&self, x: Point2) -> f64 {
        self.tess.seed_distance(x, self.owner)
    }

    fn rival(&self, x: Point2) -> Option<(SeedId, f64)> {
        let r = self.tess.nearest_seed(x).ok()?;
        if r.winner != self.owner {
            Some((r.winner, r.d1))
        } else {
            r.runner_up.map(|id| (id, r.d2))
        }
    }

    fn rival_distance(&self, x: Point2, rival: SeedId) -> f64 {
        self.tess.seed_distance(x, rival)
    }

    fn owner_beats(&self, owner_d: f64, rival: SeedId, rival_d: f64) -> bool {
        precedes((self.owner, owner_d), (rival, rival_d))
    }
}

/// Result of a single ray probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeOutcome {
    /// The owner stops winning at radius `r`; `co_winner` ties it there.
    Boundary { r: f64, point: Point2, co_winner: SeedId },
    /// The ray reached the domain limit `r` with the owner still winning.
    DomainExit { r: f64, point: Point2 },
}

impl ProbeOutcome {
    pub fn label(&self) -> Option<SeedId> {
        match self {
            ProbeOutcome::Boundary { co_winner, .. } => Some(*co_winner),
            ProbeOutcome::DomainExit { .. } => None,
        }
    }

    pub fn point(&self) -> Point2 {
        match self {
            ProbeOutcome::Boundary { point, .. } | ProbeOutcome::DomainExit { point, .. } => *point,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            ProbeOutcome::Boundary { r, .. } | ProbeOutcome::DomainExit { r, .. } => *r,
        }
    }
}

fn owner_wins_at<R: Rivalry>(c: &R, x: Point2) -> bool {
    match c.rival(x) {
        None => true,
        Some((id, d)) => c.owner_beats(c.owner_distance(x), id, d),
    }
}

/// First exit of the owner's cell along `centre + r dir`, `0 <= r <= limit`.
///
/// The cell is star-shaped about `centre`, so along the ray the owner wins on
/// an initial interval. The search chases rivals: find who beats the owner at
/// the current far end, solve the two-seed tie along the ray by bisection,
/// then check nobody else beats the owner just inside that tie.
pub fn ray_exit<R: Rivalry>(c: &R, centre: Point2, dir: Point2, limit: f64) -> ProbeOutcome {
    let at = |r: f64| centre + dir * r;
    let mut hi = limit;
    for _ in 0..64 {
        let x = at(hi);
        let (rid, rd) = match c.rival(x) {
            None => return ProbeOutcome::DomainExit { r: hi, point: x },
            Some(v) => v,
        };
        if c.owner_beats(c.owner_distance(x), rid, rd) {
            return ProbeOutcome::DomainExit { r: hi, point: x };
        }
        let beats = |r: f64| {
            let y = at(r);
            c.owner_beats(c.owner_distance(y), rid, c.rival_distance(y, rid))
        };
        let (mut lo, mut up) = (0.0, hi);
        while up - lo > PROBE_TOLERANCE {
            let mid = 0.5 * (lo + up);
            if beats(mid) {
                lo = mid;
            } else {
                up = mid;
            }
        }
        if owner_wins_at(c, at(lo)) {
            let r = 0.5 * (lo + up);
            return ProbeOutcome::Boundary {
                r,
                point: at(r),
                co_winner: rid,
            };
        }
        hi = lo;
    }
    // Rival chasing did not settle: plain bisection on the winner predicate.
    let (mut lo, mut up) = (0.0, hi);
    while up - lo > PROBE_TOLERANCE {
        let mid = 0.5 * (lo + up);
        if owner_wins_at(c, at(mid)) {
            lo = mid;
        } else {
            up = mid;
        }
    }
    let r = 0.5 * (lo + up);
    match c.rival(at(up)) {
        Some((rid, _)) => ProbeOutcome::Boundary {
            r,
            point: at(r),
            co_winner: rid,
        },
        None => ProbeOutcome::DomainExit { r, point: at(r) },
    }
}

/// One ray of a cell probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub theta: f64,
    pub outcome: ProbeOutcome,
}

/// Boundary samples of one cell, sorted by angle.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProbe {
    pub centre: Point2,
    pub rays: Vec<RaySample>,
}

impl CellProbe {
    /// Distinct co-winners met by the rays, with one boundary witness each.
    pub fn neighbours(&self) -> Vec<(SeedId, Point2)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for ray in &self.rays {
            if let ProbeOutcome::Boundary { co_winner, point, .. } = ray.outcome {
                if seen.insert(co_winner) {
                    out.push((co_winner, point));
                }
            }
        }
        out
    }

    pub fn reaches_domain_limit(&self) -> bool {
        self.rays
            .iter()
            .any(|r| matches!(r.outcome, ProbeOutcome::DomainExit { .. }))
    }

    pub fn boundary_points(&self) -> impl Iterator<Item = Point2> + '_ {
        self.rays.iter().map(|r| r.outcome.point())
    }
}

/// Shoot `budget` evenly spaced rays from `centre` and bisect every angular
/// gap whose end rays see different co-winners, down to [`MIN_PROBE_ANGLE`].
pub fn probe_star<R: Rivalry>(c: &R, centre: Point2, budget: usize, limit: impl Fn(Point2) -> f64) -> CellProbe {
    let budget = budget.max(1);
    let shoot = |theta: f64| {
        let dir = Point2::from_angle(theta);
        RaySample {
            theta,
            outcome: ray_exit(c, centre, dir, limit(dir)),
        }
    };
    let initial: Vec<RaySample> = (0..budget).map(|i| shoot(TAU * i as f64 / budget as f64)).collect();
    let mut rays = Vec::with_capacity(initial.len() * 2);
    for i in 0..budget {
        let a = initial[i];
        let mut b = initial[(i + 1) % budget];
        if i + 1 == budget {
            b.theta += TAU;
        }
        rays.push(a);
        let mut stack = vec![(a, b)];
        let mut extra = Vec::new();
        while let Some((a, b)) = stack.pop() {
            if a.outcome.label() == b.outcome.label() || b.theta - a.theta < MIN_PROBE_ANGLE {
                continue;
            }
            let m = shoot(0.5 * (a.theta + b.theta));
            extra.push(m);
            stack.push((m, b));
            stack.push((a, m));
        }
        extra.sort_by(|x, y| x.theta.total_cmp(&y.theta));
        rays.extend(extra);
    }
    for r in rays.iter_mut() {
        if r.theta >= TAU {
            r.theta -= TAU;
        }
    }
    rays.sort_by(|x, y| x.theta.total_cmp(&y.theta));
    CellProbe { centre, rays }
}

// ---------------------------------------------------------------------------

/// The graph `G_P` at a finite probe resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    pub angular_budget: usize,
    pub min_angle: f64,
    /// Whether each seed's cell was found to be nonempty.
    pub nonempty: Vec<bool>,
    /// Whether each seed wins at its own centre.
    pub owns_centre: Vec<bool>,
    /// Unordered edges `(a, b)` with `a < b`, each with a boundary witness.
    pub edges: Vec<(SeedId, SeedId, Point2)>,
    adjacency: Vec<Vec<SeedId>>,
}

impl AdjacencyGraph {
    /// Assemble from per-seed results `(owns_centre, probe of the cell)`;
    /// edges are symmetrized.
    pub fn from_probes(angular_budget: usize, probes: Vec<(bool, Option<CellProbe>)>) -> Self {
        let n = probes.len();
        let mut edge_set: alloc::collections::BTreeMap<(SeedId, SeedId), Point2> = alloc::collections::BTreeMap::new();
        let mut nonempty = vec![false; n];
        let mut owns = vec![false; n];
        for (id, (o, probe)) in probes.into_iter().enumerate() {
            owns[id] = o;
            if let Some(probe) = probe {
                nonempty[id] = true;
                for (nb, witness) in probe.neighbours() {
                    if nb as usize == id {
                        continue;
                    }
                    let key = ((id as SeedId).min(nb), (id as SeedId).max(nb));
                    edge_set.entry(key).or_insert(witness);
                }
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(edge_set.len());
        for ((a, b), w) in edge_set {
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
            nonempty[a as usize] = true;
            nonempty[b as usize] = true;
            edges.push((a, b, w));
        }
        AdjacencyGraph {
            angular_budget,
            min_angle: MIN_PROBE_ANGLE,
            nonempty,
            owns_centre: owns,
            edges,
            adjacency,
        }
    }

    pub fn neighbours(&self, id: SeedId) -> &[SeedId] {
        &self.adjacency[id as usize]
    }

    pub fn has_edge(&self, a: SeedId, b: SeedId) -> bool {
        self.adjacency[a as usize].contains(&b)
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TorusGeometry;
    use crate::process::PlanarWindow;

    fn window(x0: f64, x1: f64, y0: f64, y1: f64) -> SimDomain {
        let r = Rect::new(x0, x1, y0, y1).unwrap();
        SimDomain::PlanarWindow(PlanarWindow::new(r, 0.0, 200.0).unwrap())
    }

    fn seeds(spec: &[(f64, f64, f64, f64)]) -> Vec<Seed> {
        spec.iter()
            .enumerate()
            .map(|(i, &(x, y, t, u))| Seed::new(i as SeedId, Point2::new(x, y), t, u))
            .collect()
    }

    fn tess(m: MetricKind, spec: &[(f64, f64, f64, f64)]) -> Tessellation {
        Tessellation::new(window(-30.0, 30.0, -30.0, 30.0), m, seeds(spec), 0.5).unwrap()
    }

    #[test]
    fn nearest_examples() {
        let t = tess(MetricKind::JohnsonMehl, &[(0.0, 0.0, 0.0, 0.1), (10.0, 0.0, 5.0, 0.9)]);
        let r = t.nearest_seed(Point2::new(6.0, 0.0)).unwrap();
        assert_eq!((r.winner, r.d1, r.runner_up, r.d2), (0, 6.0, Some(1), 9.0));

        let t = tess(MetricKind::Euclidean3, &[(0.0, 0.0, 0.0, 0.1), (4.0, 0.0, 3.0, 0.9)]);
        let r = t.nearest_seed(Point2::new(3.0, 0.0)).unwrap();
        assert_eq!(r.winner, 0);
        assert!((r.d2 - 10f64.sqrt()).abs() < 1e-12);

        let t = tess(MetricKind::JohnsonMehl, &[(-1.0, 0.0, 0.0, 0.1), (1.0, 0.0, 0.0, 0.9)]);
        let r = t.nearest_seed(Point2::new(0.0, 0.0)).unwrap();
        assert_eq!(r.winner, 0);
        assert_eq!(r.d1, r.d2);
    }

    #[test]
    fn empty_process_errors() {
        let t = Tessellation::new(window(0.0, 1.0, 0.0, 1.0), MetricKind::JohnsonMehl, Vec::new(), 0.5).unwrap();
        assert_eq!(t.nearest_seed(Point2::default()), Err(Error::EmptyProcess));
        assert_eq!(t.is_robustly_black(Point2::default(), 0.0), Err(Error::EmptyProcess));
    }

    #[test]
    fn colours_follow_winner() {
        let t = tess(MetricKind::JohnsonMehl, &[(0.0, 0.0, 0.0, 0.2), (10.0, 0.0, 0.0, 0.8)]);
        assert_eq!(t.colour_at(Point2::new(1.0, 0.0)).unwrap(), Colour::Black);
        assert_eq!(t.colour_at(Point2::new(9.0, 0.0)).unwrap(), Colour::White);
        let all = t.recoloured(1.0).unwrap();
        assert_eq!(all.colour_at(Point2::new(9.0, 0.0)).unwrap(), Colour::Black);
    }

    #[test]
    fn robust_black_examples() {
        // d(x, P+) = 3.0, d(x, P-) = 3.5 at the origin.
        let t = tess(MetricKind::JohnsonMehl, &[(3.0, 0.0, 0.0, 0.1), (-3.5, 0.0, 0.0, 0.9)]);
        let x = Point2::new(0.0, 0.0);
        assert!(t.is_robustly_black(x, 0.4).unwrap());
        assert!(!t.is_robustly_black(x, 0.6).unwrap());
        let only_black = tess(MetricKind::JohnsonMehl, &[(3.0, 0.0, 0.0, 0.1)]);
        assert!(only_black.is_robustly_black(x, 1e9).unwrap());
        let only_white = tess(MetricKind::JohnsonMehl, &[(3.0, 0.0, 0.0, 0.9)]);
        assert!(!only_white.is_robustly_black(x, 0.0).unwrap());
        assert!(t.is_robustly_black(x, -1.0).is_err());
    }

    #[test]
    fn probe_single_seed_exits_domain() {
        let t = tess(MetricKind::JohnsonMehl, &[(0.0, 0.0, 0.0, 0.1)]);
        let out = t.cell_boundary_probe(0, Point2::new(1.0, 0.0)).unwrap();
        assert!(matches!(out, ProbeOutcome::DomainExit { .. }));
    }

    #[test]
    fn probe_bisector_examples() {
        let t = tess(MetricKind::JohnsonMehl, &[(0.0, 0.0, 0.0, 0.1), (10.0, 0.0, 0.0, 0.9)]);
        match t.cell_boundary_probe(0, Point2::new(1.0, 0.0)).unwrap() {
            ProbeOutcome::Boundary { r, co_winner, .. } => {
                assert!((r - 5.0).abs() < 1e-8);
                assert_eq!(co_winner, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        let t = tess(MetricKind::JohnsonMehl, &[(0.0, 0.0, 0.0, 0.1), (10.0, 0.0, 2.0, 0.9)]);
        match t.cell_boundary_probe(0, Point2::new(1.0, 0.0)).unwrap() {
            ProbeOutcome::Boundary { r, point, co_winner } => {
                assert!((r - 6.0).abs() < 1e-8);
                assert!((point.x - 6.0).abs() < 1e-8 && point.y.abs() < 1e-12);
                assert_eq!(co_winner, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn probe_requires_owned_centre() {
        let t = tess(MetricKind::JohnsonMehl, &[(0.0, 0.0, 100.0, 0.1), (0.0, 0.0, 0.0, 0.9)]);
        assert_eq!(
            t.cell_boundary_probe(0, Point2::new(1.0, 0.0)),
            Err(Error::CentreNotOwned(0))
        );
    }

    #[test]
    fn adjacency_small_examples() {
        let t = tess(MetricKind::JohnsonMehl, &[(0.0, 0.0, 0.0, 0.1), (5.0, 1.0, 0.5, 0.9)]);
        let g = t.adjacency_graph(32, 0.5).unwrap();
        assert_eq!(g.edges.len(), 1);

        let t = tess(
            MetricKind::JohnsonMehl,
            &[(0.0, 0.0, 0.0, 0.1), (10.0, 0.0, 0.0, 0.9), (20.0, 0.0, 0.0, 0.5)],
        );
        let g = t.adjacency_graph(64, 0.5).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && !g.has_edge(0, 2));

        let t = tess(MetricKind::JohnsonMehl, &[(0.0, 0.0, 100.0, 0.1), (0.0, 0.0, 0.0, 0.9)]);
        let g = t.adjacency_graph(16, 0.5).unwrap();
        assert!(g.edges.is_empty());
        assert!(!g.nonempty[0] && g.neighbours(0).is_empty());
        assert!(t.adjacency_graph(8, 0.5).is_err());
    }

    #[test]
    fn torus_queries_wrap() {
        let g = TorusGeometry::new(10.0, 10.0).unwrap();
        let s = seeds(&[(0.5, 0.5, 0.0, 0.1), (5.0, 5.0, 0.0, 0.9)]);
        let t = Tessellation::new(SimDomain::Torus(g), MetricKind::JohnsonMehl, s, 0.5).unwrap();
        let r = t.nearest_seed(Point2::new(9.8, 9.8)).unwrap();
        assert_eq!(r.winner, 0);
        assert!((r.d1 - 0.7 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r, t.nearest_linear(Point2::new(9.8, 9.8)).unwrap());
    }
}
