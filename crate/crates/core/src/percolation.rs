//! Crossings of rectangles, crossing probabilities, origin clusters,
//! subcritical tails and bracketing of the critical point.
//!
//! Crossings are read off a raster of cell winners. Black paths use
//! 8-connectivity and white paths 4-connectivity, the pairing for which
//! exactly one of "black left-right" and "white top-bottom" holds on a grid.
//! A sample counts as certified when, in addition, the black crossing does
//! not depend on the connectivity used (8 versus 4): if it does, some
//! feature of the tessellation is below the raster resolution, and the grid
//! is refined.
//!
//! Because winners do not depend on `p`, one raster answers every level: a
//! trial is summarized by bottleneck thresholds, e.g. the smallest `p` at
//! which a black 8-connected left-right crossing exists.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{MetricKind, Point2, Rect};
use crate::math;
use crate::process::{check_probability, padding_radius, sample_poisson, PlanarWindow, SeedId, SimDomain};
use crate::rng::{purpose, stream};
use crate::stats::{fit_line, quantile_sorted, EstimateCI, LineFit};
use crate::tessellation::{CellProbe, Colour, Tessellation};
use crate::unionfind::UnionFind;

/// Raster divisions of the short side at depth 0 (`h0 = s / 256`).
pub const DEFAULT_DIVISIONS: usize = 256;
/// Maximum number of grid halvings when a crossing is not certified.
pub const MAX_REFINEMENTS: u32 = 6;
/// Refinement stops early rather than exceed this many raster cells.
pub const MAX_GRID_CELLS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Winners at the centres of a regular grid over a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct WinnerGrid {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub depth: u32,
    pub winners: Vec<SeedId>,
}

impl WinnerGrid {
    /// Raster with cell side at most `h` (exactly `h` when it divides the sides).
    pub fn compute(t: &Tessellation, rect: Rect, h: f64, depth: u32) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(invalid("h", "must be finite and positive"));
        }
        if t.is_empty() {
            return Err(Error::EmptyProcess);
        }
        let nx = (math::round(rect.width() / h * 1e6) / 1e6).ceil_usize();
        let ny = (math::round(rect.height() / h * 1e6) / 1e6).ceil_usize();
        Self::with_size(t, rect, nx, ny, depth)
    }

    pub fn with_size(t: &Tessellation, rect: Rect, nx: usize, ny: usize, depth: u32) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid("grid", "needs at least one cell per axis"));
        }
        if t.is_empty() {
            return Err(Error::EmptyProcess);
        }
        let mut g = WinnerGrid {
            rect,
            nx,
            ny,
            depth,
            winners: Vec::with_capacity(nx * ny),
        };
        let mut row_hint = None;
        for j in 0..ny {
            let mut hint = row_hint;
            for i in 0..nx {
                let (id, _) = t.winner_with_hint(g.centre(i, j), hint).ok_or(Error::EmptyProcess)?;
                if i == 0 {
                    row_hint = Some(id);
                }
                hint = Some(id);
                g.winners.push(id);
            }
        }
        Ok(g)
    }

    pub fn hx(&self) -> f64 {
        self.rect.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.rect.height() / self.ny as f64
    }

    #[inline]
    pub fn centre(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.rect.x0 + (i as f64 + 0.5) * self.hx(),
            self.rect.y0 + (j as f64 + 0.5) * self.hy(),
        )
    }

    #[inline]
    pub fn winner(&self, i: usize, j: usize) -> SeedId {
        self.winners[j * self.nx + i]
    }

    pub fn colours(&self, t: &Tessellation) -> ColourGrid {
        ColourGrid {
            rect: self.rect,
            nx: self.nx,
            ny: self.ny,
            depth: self.depth,
            black: self.winners.iter().map(|&w| t.is_black(w)).collect(),
        }
    }

    /// Distinct winners, ascending.
    pub fn distinct_winners(&self) -> Vec<SeedId> {
        let mut v = self.winners.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

trait CeilUsize {
    fn ceil_usize(self) -> usize;
}

impl CeilUsize for f64 {
    fn ceil_usize(self) -> usize {
        math::ceil(self).max(1.0) as usize
    }
}

/// Rasterized colouring.
#[derive(Debug, Clone, PartialEq)]
pub struct ColourGrid {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub depth: u32,
    pub black: Vec<bool>,
}

impl ColourGrid {
    #[inline]
    pub fn is_black(&self, i: usize, j: usize) -> bool {
        self.black[j * self.nx + i]
    }

    /// Left-right crossing by cells of the given colour.
    pub fn crosses_horizontally(&self, colour: Colour, conn: Connectivity) -> bool {
        let want = colour == Colour::Black;
        let starts = (0..self.ny).map(|j| (0, j));
        self.flood(want, conn, starts, |i, _| i + 1 == self.nx)
    }

    /// Bottom-top crossing by cells of the given colour.
    pub fn crosses_vertically(&self, colour: Colour, conn: Connectivity) -> bool {
        let want = colour == Colour::Black;
        let starts = (0..self.nx).map(|i| (i, 0));
        self.flood(want, conn, starts, |_, j| j + 1 == self.ny)
    }

    /// A left-right path of cells of the given colour, as grid indices from
    /// the left column to the right column.
    pub fn horizontal_path(&self, colour: Colour, conn: Connectivity) -> Option<Vec<(usize, usize)>> {
        let want = colour == Colour::Black;
        let n = self.nx * self.ny;
        let mut parent = vec![usize::MAX; n];
        let mut queue = alloc::collections::VecDeque::new();
        for j in 0..self.ny {
            let k = j * self.nx;
            if self.black[k] == want {
                parent[k] = k;
                queue.push_back(k);
            }
        }
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % self.nx, k / self.nx);
            if i + 1 == self.nx {
                let mut path = vec![(i, j)];
                let mut c = k;
                while parent[c] != c {
                    c = parent[c];
                    path.push((c % self.nx, c / self.nx));
                }
                path.reverse();
                return Some(path);
            }
            for (di, dj) in neighbour_offsets(conn) {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni < 0 || nj < 0 || ni >= self.nx as isize || nj >= self.ny as isize {
                    continue;
                }
                let m = nj as usize * self.nx + ni as usize;
                if self.black[m] == want && parent[m] == usize::MAX {
                    parent[m] = k;
                    queue.push_back(m);
                }
            }
        }
        None
    }

    fn flood(
        &self,
        want: bool,
        conn: Connectivity,
        starts: impl Iterator<Item = (usize, usize)>,
        goal: impl Fn(usize, usize) -> bool,
    ) -> bool {
        let mut seen = vec![false; self.nx * self.ny];
        let mut stack = Vec::new();
        for (i, j) in starts {
            let k = j * self.nx + i;
            if self.black[k] == want && !seen[k] {
                seen[k] = true;
                stack.push((i, j));
            }
        }
        while let Some((i, j)) = stack.pop() {
            if goal(i, j) {
                return true;
            }
            for (di, dj) in neighbour_offsets(conn) {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni < 0 || nj < 0 || ni >= self.nx as isize || nj >= self.ny as isize {
                    continue;
                }
                let k = nj as usize * self.nx + ni as usize;
                if self.black[k] == want && !seen[k] {
                    seen[k] = true;
                    stack.push((ni as usize, nj as usize));
                }
            }
        }
        false
    }
}

fn neighbour_offsets(conn: Connectivity) -> &'static [(isize, isize)] {
    const FOUR: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    const EIGHT: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    match conn {
        Connectivity::Four => &FOUR,
        Connectivity::Eight => &EIGHT,
    }
}

/// Outcome of one crossing test at a fixed level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrossingSample {
    pub hb: bool,
    pub vw: bool,
    pub certified: bool,
    pub depth: u32,
}

/// Crossing of `r` at the tessellation's own level, by flood fill, refining
/// the raster (halving `h`) until certified or the refinement cap is hit.
pub fn crossing(t: &Tessellation, r: Rect, h0: f64) -> Result<CrossingSample> {
    let mut h = h0;
    let mut depth = 0;
    loop {
        let grid = WinnerGrid::compute(t, r, h, depth)?.colours(t);
        let hb = grid.crosses_horizontally(Colour::Black, Connectivity::Eight);
        let hb4 = grid.crosses_horizontally(Colour::Black, Connectivity::Four);
        let vw = grid.crosses_vertically(Colour::White, Connectivity::Four);
        let certified = (hb != vw) && hb == hb4;
        let next_cells = grid.nx * grid.ny * 4;
        if certified || depth >= MAX_REFINEMENTS || next_cells > MAX_GRID_CELLS {
            return Ok(CrossingSample {
                hb,
                vw,
                certified,
                depth,
            });
        }
        h *= 0.5;
        depth += 1;
    }
}

/// Level thresholds of one raster: black 8-connected (resp. 4-connected)
/// left-right crossings exist iff `p >= hb8` (resp. `p >= hb4`), and a white
/// 4-connected bottom-top crossing exists iff `p < vw4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingThresholds {
    pub hb8: f64,
    pub hb4: f64,
    pub vw4: f64,
    pub depth: u32,
    /// Some raster winner lies where window truncation could matter.
    pub boundary_suspect: bool,
}

impl CrossingThresholds {
    pub fn from_grid(grid: &WinnerGrid, t: &Tessellation) -> Self {
        let u: Vec<f64> = grid.winners.iter().map(|&w| t.seed(w).u).collect();
        let mut order: Vec<u32> = (0..u.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| u[a as usize].total_cmp(&u[b as usize]).then(a.cmp(&b)));
        let hb8 = sweep(grid, &u, order.iter().copied(), Connectivity::Eight, true);
        let hb4 = sweep(grid, &u, order.iter().copied(), Connectivity::Four, true);
        let vw4 = sweep(grid, &u, order.iter().rev().copied(), Connectivity::Four, false);
        CrossingThresholds {
            hb8,
            hb4,
            vw4,
            depth: grid.depth,
            boundary_suspect: false,
        }
    }

    pub fn at(&self, p: f64) -> CrossingSample {
        let hb = self.hb8 <= p;
        let hb4 = self.hb4 <= p;
        let vw = p < self.vw4;
        CrossingSample {
            hb,
            vw,
            certified: (hb != vw) && hb == hb4,
            depth: self.depth,
        }
    }

    /// Certified at every level.
    pub fn fully_certified(&self) -> bool {
        self.hb8 == self.hb4 && self.hb8 == self.vw4
    }
}

/// Activate cells in `order` (by the colour uniform of their winner) and
/// return the uniform at which the two opposite sides first connect.
/// `horizontal` selects left-right; otherwise bottom-top.
fn sweep(grid: &WinnerGrid, u: &[f64], order: impl Iterator<Item = u32>, conn: Connectivity, horizontal: bool) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let n = nx * ny;
    let (src, dst) = (n, n + 1);
    let mut uf = UnionFind::new(n + 2);
    let mut active = vec![false; n];
    let order: Vec<u32> = order.collect();
    let mut k = 0;
    while k < order.len() {
        let level = u[order[k] as usize];
        while k < order.len() && u[order[k] as usize] == level {
            let c = order[k] as usize;
            active[c] = true;
            let (i, j) = (c % nx, c / nx);
            let (at_src, at_dst) = if horizontal {
                (i == 0, i + 1 == nx)
            } else {
                (j == 0, j + 1 == ny)
            };
            if at_src {
                uf.union(c, src);
            }
            if at_dst {
                uf.union(c, dst);
            }
            for (di, dj) in neighbour_offsets(conn) {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni < 0 || nj < 0 || ni >= nx as isize || nj >= ny as isize {
                    continue;
                }
                let m = nj as usize * nx + ni as usize;
                if active[m] {
                    uf.union(c, m);
                }
            }
            k += 1;
        }
        if uf.connected(src, dst) {
            return level;
        }
    }
    if horizontal {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Thresholds for the rectangle, refining while any of `levels` (or, when
/// empty, any level at all) is uncertified.
pub fn crossing_thresholds(
    t: &Tessellation,
    r: Rect,
    h0: f64,
    levels: &[f64],
    suspect_margin: f64,
) -> Result<CrossingThresholds> {
    let mut h = h0;
    let mut depth = 0;
    loop {
        let grid = WinnerGrid::compute(t, r, h, depth)?;
        let mut th = CrossingThresholds::from_grid(&grid, t);
        let ok = if levels.is_empty() {
            th.fully_certified()
        } else {
            levels.iter().all(|&p| th.at(p).certified)
        };
        let next_cells = grid.nx * grid.ny * 4;
        if ok || depth >= MAX_REFINEMENTS || next_cells > MAX_GRID_CELLS {
            th.boundary_suspect = grid
                .distinct_winners()
                .into_iter()
                .any(|w| t.boundary_suspect(w, suspect_margin));
            return Ok(th);
        }
        h *= 0.5;
        depth += 1;
    }
}

/// Parameters shared by the trials of a crossing experiment on
/// `[0, rho s] x [0, s]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingSetup {
    pub metric: MetricKind,
    pub rho: f64,
    pub s: f64,
    pub intensity: f64,
    /// Localization constant `A` of the padding radius.
    pub a: f64,
    pub master_seed: u64,
    /// Grid cells along the side of length `s` at depth 0.
    pub divisions: usize,
}

impl CrossingSetup {
    pub fn new(metric: MetricKind, rho: f64, s: f64, master_seed: u64) -> Self {
        CrossingSetup {
            metric,
            rho,
            s,
            intensity: 1.0,
            a: 2.0,
            master_seed,
            divisions: DEFAULT_DIVISIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(invalid("rho", "must be finite and positive"));
        }
        if self.divisions == 0 {
            return Err(invalid("divisions", "must be positive"));
        }
        self.window().map(|_| ())
    }

    pub fn rect(&self) -> Result<Rect> {
        Rect::crossing_box(self.rho, self.s)
    }

    pub fn scale(&self) -> f64 {
        self.s.max(self.rho * self.s)
    }

    pub fn window(&self) -> Result<PlanarWindow> {
        PlanarWindow::standard(self.rect()?, self.scale(), self.a)
    }

    /// The trial's tessellation at level `p` (positions do not depend on `p`).
    pub fn tessellation(&self, trial: u64, p: f64) -> Result<Tessellation> {
        let domain = SimDomain::PlanarWindow(self.window()?);
        let seeds = sample_poisson(&domain, self.intensity, self.master_seed, trial)?;
        Tessellation::new(domain, self.metric, seeds, p)
    }

    pub fn h0(&self) -> f64 {
        self.s / self.divisions as f64
    }

    /// Thresholds of one trial; see [`crossing_thresholds`].
    pub fn trial_thresholds(&self, trial: u64, levels: &[f64]) -> Result<CrossingThresholds> {
        let t = self.tessellation(trial, 0.5)?;
        let margin = padding_radius(self.scale(), self.a)?;
        crossing_thresholds(&t, self.rect()?, self.h0(), levels, margin)
    }
}

/// Aggregate of crossing outcomes at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingEstimate {
    pub p: f64,
    pub hb: EstimateCI,
    pub vw_count: u64,
    pub uncertified: u64,
    /// Certified samples violating `Hb XOR Vw` (must be zero).
    pub duality_failures: u64,
    pub boundary_suspect: u64,
}

impl CrossingEstimate {
    pub fn from_samples(p: f64, samples: &[(CrossingSample, bool)]) -> Self {
        let n = samples.len() as u64;
        let hb = samples.iter().filter(|s| s.0.hb).count() as u64;
        CrossingEstimate {
            p,
            hb: EstimateCI::bernoulli(hb, n),
            vw_count: samples.iter().filter(|s| s.0.vw).count() as u64,
            uncertified: samples.iter().filter(|s| !s.0.certified).count() as u64,
            duality_failures: samples.iter().filter(|s| s.0.certified && s.0.hb == s.0.vw).count() as u64,
            boundary_suspect: samples.iter().filter(|s| s.1).count() as u64,
        }
    }

    pub fn from_thresholds(p: f64, th: &[CrossingThresholds]) -> Self {
        let samples: Vec<(CrossingSample, bool)> = th.iter().map(|t| (t.at(p), t.boundary_suspect)).collect();
        Self::from_samples(p, &samples)
    }

    pub fn uncertified_fraction(&self) -> f64 {
        self.uncertified as f64 / self.hb.trials as f64
    }
}

/// `f_p(rho, s)` over trials `0..n`.
pub fn estimate_crossing_prob(
    p: f64,
    rho: f64,
    s: f64,
    n: u64,
    master_seed: u64,
    metric: MetricKind,
) -> Result<CrossingEstimate> {
    check_probability("p", p)?;
    if n == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let setup = CrossingSetup::new(metric, rho, s, master_seed);
    setup.validate()?;
    let mut th = Vec::with_capacity(n as usize);
    for trial in 0..n {
        th.push(setup.trial_thresholds(trial, &[p])?);
    }
    Ok(CrossingEstimate::from_thresholds(p, &th))
}

// ---------------------------------------------------------------------------
// Critical point bracketing.

#[derive(Debug, Clone, PartialEq)]
pub struct PcBracket {
    pub lo: f64,
    pub hi: f64,
    /// Every level probed, in order, with its estimate.
    pub probes: Vec<(f64, EstimateCI)>,
}

impl PcBracket {
    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

pub const MIN_BRACKET_TOLERANCE: f64 = 0.02;

/// Bisection for the level where `f_p = 1/2`. A probe moves an end of the
/// bracket only when it is more than three stderr away from 1/2; inconclusive
/// probes halve the step and try both sides of the midpoint.
///
/// `thresholds` holds one entry per trial, all evaluated on the same
/// positions and uniforms, so the estimates are exactly monotone in `p`.
pub fn bracket_pc(thresholds: &[CrossingThresholds], tolerance: f64) -> Result<PcBracket> {
    if !(tolerance >= MIN_BRACKET_TOLERANCE) {
        return Err(invalid("tolerance", "must be at least 0.02"));
    }
    if thresholds.is_empty() {
        return Err(invalid("trials", "must be at least 1"));
    }
    let mut probes = Vec::new();
    let mut eval = |p: f64| -> i8 {
        let e = CrossingEstimate::from_thresholds(p, thresholds).hb;
        probes.push((p, e));
        let se = e.stderr.max(0.5 / math::sqrt(e.trials as f64) * 1e-3);
        if e.estimate < 0.5 - 3.0 * se {
            -1
        } else if e.estimate > 0.5 + 3.0 * se {
            1
        } else {
            0
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let step_floor = tolerance / 16.0;
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        match eval(mid) {
            -1 => lo = mid,
            1 => hi = mid,
            _ => {
                let mut step = 0.25 * (hi - lo);
                let mut moved = false;
                while step >= step_floor {
                    let (a, b) = (mid - step, mid + step);
                    let ra = if a > lo { eval(a) } else { 0 };
                    let rb = if b < hi { eval(b) } else { 0 };
                    if ra == -1 {
                        lo = a;
                        moved = true;
                    }
                    if rb == 1 {
                        hi = b;
                        moved = true;
                    }
                    if moved {
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
        }
    }
    Ok(PcBracket { lo, hi, probes })
}

// ---------------------------------------------------------------------------
// Origin clusters.

/// Settings for cluster exploration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSettings {
    pub angular_budget: usize,
    /// Raster spacing for cluster areas.
    pub area_step: f64,
    /// Region inside which the tessellation is trusted.
    pub safe: Rect,
    /// Members whose centre is this close to the safe boundary censor.
    pub margin: f64,
    /// Exploration stops (censored) beyond this many members.
    pub max_members: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    /// Winner at the origin.
    pub origin_seed: Option<SeedId>,
    /// Members, ascending.
    pub members: Vec<SeedId>,
    pub area: f64,
    pub diameter: f64,
    pub censored: bool,
    /// Members whose cell could not be probed (no interior point found).
    pub unresolved: usize,
}

impl ClusterReport {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    fn empty(origin_seed: Option<SeedId>) -> Self {
        ClusterReport {
            origin_seed,
            members: Vec::new(),
            area: 0.0,
            diameter: 0.0,
            censored: false,
            unresolved: 0,
        }
    }
}

/// Open cluster of the origin's seed in `G_P`, exploring cells lazily with
/// ray probes.
pub fn cluster_of_origin(t: &Tessellation, origin: Point2, cfg: &ClusterSettings) -> Result<ClusterReport> {
    let z0 = t.nearest_seed(origin)?.winner;
    if !t.is_black(z0) {
        return Ok(ClusterReport::empty(Some(z0)));
    }
    let mut probes: BTreeMap<SeedId, CellProbe> = BTreeMap::new();
    let mut visited = BTreeSet::new();
    let mut queue = alloc::collections::VecDeque::new();
    visited.insert(z0);
    queue.push_back((z0, origin));
    let mut censored = false;
    let mut unresolved = 0;
    while let Some((id, known)) = queue.pop_front() {
        let w = t.seed(id).w;
        if !cfg.safe.contains(w) || cfg.safe.inner_distance(w) < cfg.margin {
            censored = true;
        }
        let centre = if id == z0 && !t.owns_centre(id) {
            t.probe_centre_near(id, origin)
        } else {
            t.probe_centre_near(id, known)
        };
        let Some(centre) = centre else {
            unresolved += 1;
            continue;
        };
        let probe = t.probe_cell(id, centre, cfg.angular_budget);
        if probe.reaches_domain_limit() {
            censored = true;
        }
        for (nb, witness) in probe.neighbours() {
            if t.is_black(nb) && visited.insert(nb) {
                if visited.len() > cfg.max_members {
                    censored = true;
                    continue;
                }
                queue.push_back((nb, witness));
            }
        }
        probes.insert(id, probe);
    }
    let members: Vec<SeedId> = visited.into_iter().collect();
    let (area, diameter) = cluster_geometry(t, &members, &probes, cfg.area_step);
    Ok(ClusterReport {
        origin_seed: Some(z0),
        members,
        area,
        diameter,
        censored,
        unresolved,
    })
}

/// Area by rasterizing the bounding box of the probed boundary points, and
/// diameter of those points (planar Euclidean).
fn cluster_geometry(
    t: &Tessellation,
    members: &[SeedId],
    probes: &BTreeMap<SeedId, CellProbe>,
    step: f64,
) -> (f64, f64) {
    let pts: Vec<Point2> = probes.values().flat_map(|p| p.boundary_points()).collect();
    if pts.is_empty() {
        return (0.0, 0.0);
    }
    let diameter = point_set_diameter(&pts);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let nx = math::ceil((x1 - x0) / step).max(1.0) as usize;
    let ny = math::ceil((y1 - y0) / step).max(1.0) as usize;
    let mut hits = 0usize;
    let mut hint = None;
    for j in 0..ny {
        for i in 0..nx {
            let x = Point2::new(x0 + (i as f64 + 0.5) * step, y0 + (j as f64 + 0.5) * step);
            if let Some((w, _)) = t.winner_with_hint(x, hint) {
                hint = Some(w);
                if members.binary_search(&w).is_ok() {
                    hits += 1;
                }
            }
        }
    }
    (hits as f64 * step * step, diameter)
}

/// Euclidean diameter of a finite point set via its convex hull.
pub fn point_set_diameter(points: &[Point2]) -> f64 {
    let hull = convex_hull(points);
    let mut best = 0.0f64;
    for (i, a) in hull.iter().enumerate() {
        for b in &hull[i + 1..] {
            best = best.max(a.dist(*b));
        }
    }
    best
}

/// Andrew's monotone chain; collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: Point2, a: Point2, b: Point2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

// ---------------------------------------------------------------------------
// Subcritical tails.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSetup {
    pub p: f64,
    pub metric: MetricKind,
    pub max_n: usize,
    pub trials: u64,
    /// Side of the square target window centred at the origin.
    pub scale: f64,
    pub intensity: f64,
    pub a: f64,
    pub master_seed: u64,
    pub angular_budget: usize,
    pub area_step: f64,
}

impl TailSetup {
    pub fn new(p: f64, metric: MetricKind, trials: u64, master_seed: u64) -> Self {
        TailSetup {
            p,
            metric,
            max_n: 20,
            trials,
            scale: 20.0,
            intensity: 1.0,
            a: 2.0,
            master_seed,
            angular_budget: 32,
            area_step: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("p", self.p)?;
        if self.max_n < 2 {
            return Err(invalid("max_n", "must be at least 2"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if !(self.area_step.is_finite() && self.area_step > 0.0) {
            return Err(invalid("area_step", "must be finite and positive"));
        }
        padding_radius(self.scale, self.a).map(|_| ())
    }

    fn target(&self) -> Result<Rect> {
        let l = 0.5 * self.scale;
        Rect::new(-l, l, -l, l)
    }

    pub fn trial(&self, trial: u64) -> Result<TailSample> {
        let target = self.target()?;
        let window = PlanarWindow::standard(target, self.scale, self.a)?;
        let domain = SimDomain::PlanarWindow(window);
        let seeds = sample_poisson(&domain, self.intensity, self.master_seed, trial)?;
        let t = Tessellation::new(domain, self.metric, seeds, self.p)?;
        let cfg = ClusterSettings {
            angular_budget: self.angular_budget,
            area_step: self.area_step,
            safe: target,
            margin: padding_radius(self.scale, self.a)?,
            max_members: 50 * self.max_n,
        };
        let r = cluster_of_origin(&t, Point2::new(0.0, 0.0), &cfg)?;
        Ok(TailSample {
            count: r.count(),
            area: r.area,
            diameter: r.diameter,
            censored: r.censored,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSample {
    pub count: usize,
    pub area: f64,
    pub diameter: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub n: usize,
    pub survival: f64,
    pub stderr: f64,
    /// Censored samples with observed size below `n`, counted as reaching it.
    pub censored_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub fit: LineFit,
    pub n_lo: usize,
    pub n_hi: usize,
    /// Bootstrap 95% interval of the slope.
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub scale: f64,
    pub trials: u64,
    pub censored: u64,
    pub rows: Vec<TailRow>,
    /// Survival of area and diameter at the thresholds `1..=max_n`.
    pub area_survival: Vec<f64>,
    pub diameter_survival: Vec<f64>,
    pub fit: Option<SlopeFit>,
}

impl TailReport {
    pub fn censoring_rate(&self) -> f64 {
        self.censored as f64 / self.trials as f64
    }
}

fn survival_counts(samples: &[TailSample], max_n: usize) -> Vec<u64> {
    let mut at_least = vec![0u64; max_n + 2];
    for s in samples {
        let c = if s.censored { max_n } else { s.count.min(max_n) };
        at_least[c] += 1;
    }
    for n in (0..=max_n).rev() {
        at_least[n] += at_least[n + 1];
    }
    at_least
}

fn log_slope(at_least: &[u64], trials: usize, n_lo: usize, n_hi: usize) -> Option<LineFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (n, &count) in at_least.iter().enumerate().take(n_hi + 1).skip(n_lo) {
        if count > 0 {
            xs.push(n as f64);
            ys.push(math::ln(count as f64 / trials as f64));
        }
    }
    fit_line(&xs, &ys)
}

/// Survival table and log-slope fit. The fit uses `n in [2, max_n]` where the
/// survival is at least `20 / trials`; its interval comes from `bootstrap`
/// resamples of the trials.
pub fn summarize_tail(samples: &[TailSample], max_n: usize, scale: f64, bootstrap: usize, seed: u64) -> TailReport {
    let trials = samples.len();
    let at_least = survival_counts(samples, max_n);
    let mut rows = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let e = EstimateCI::bernoulli(at_least[n], trials as u64);
        let censored_count = samples.iter().filter(|s| s.censored && s.count < n).count() as u64;
        rows.push(TailRow {
            n,
            survival: e.estimate,
            stderr: e.stderr,
            censored_count,
        });
    }
    let frac =
        |pred: &dyn Fn(&TailSample) -> bool| samples.iter().filter(|s| pred(s)).count() as f64 / trials.max(1) as f64;
    let area_survival = (1..=max_n)
        .map(|n| frac(&|s| s.censored || s.area >= n as f64))
        .collect();
    let diameter_survival = (1..=max_n)
        .map(|n| frac(&|s| s.censored || s.diameter >= n as f64))
        .collect();

    let floor = 20.0 / trials as f64;
    let n_lo = 2;
    let n_hi = (n_lo..=max_n)
        .take_while(|&n| at_least[n] as f64 / trials as f64 >= floor)
        .last();
    let fit = n_hi.and_then(|n_hi| {
        let fit = log_slope(&at_least, trials, n_lo, n_hi)?;
        let mut rng = stream(seed, purpose::BOOTSTRAP, 0);
        let mut slopes = Vec::with_capacity(bootstrap);
        let mut resample = Vec::with_capacity(trials);
        for _ in 0..bootstrap {
            resample.clear();
            for _ in 0..trials {
                resample.push(samples[rng.random_range(0..trials)]);
            }
            let counts = survival_counts(&resample, max_n);
            if let Some(f) = log_slope(&counts, trials, n_lo, n_hi) {
                slopes.push(f.slope);
            }
        }
        slopes.sort_by(f64::total_cmp);
        let (ci_lo, ci_hi) = if slopes.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (quantile_sorted(&slopes, 0.025), quantile_sorted(&slopes, 0.975))
        };
        Some(SlopeFit {
            fit,
            n_lo,
            n_hi,
            ci_lo,
            ci_hi,
        })
    });
    TailReport {
        scale,
        trials: trials as u64,
        censored: samples.iter().filter(|s| s.censored).count() as u64,
        rows,
        area_survival,
        diameter_survival,
        fit,
    }
}

/// Censoring above this rate triggers one retry on a larger window.
pub const MAX_CENSORING: f64 = 0.05;

/// Sequential driver: run all trials, retrying once on a window 1.5 times
/// larger if censoring is excessive.
pub fn tail_estimate(setup: &TailSetup) -> Result<TailReport> {
    setup.validate()?;
    let mut s = *setup;
    for attempt in 0..2 {
        let samples = (0..s.trials).map(|i| s.trial(i)).collect::<Result<Vec<_>>>()?;
        let report = summarize_tail(&samples, s.max_n, s.scale, 400, s.master_seed);
        if report.censoring_rate() <= MAX_CENSORING {
            return Ok(report);
        }
        if attempt == 1 {
            return Err(Error::ExcessiveCensoring {
                rate: report.censoring_rate(),
            });
        }
        s.scale *= 1.5;
    }
    unreachable!()
}
