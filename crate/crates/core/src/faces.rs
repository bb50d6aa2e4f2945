//! Neighbour counts of the cell of an adjoined origin: 3D cells under the
//! three norms, and planar cells of flat processes (classical Voronoi for
//! the Euclidean norm).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Result};
use crate::geometry::{MetricKind, Point2, Rect, Vec3};
use crate::math;
use crate::process::{sample_flat_into, PlanarWindow, Seed, SimDomain};
use crate::rng::{purpose, stream};
use crate::stats::EstimateCI;
use crate::tessellation::Tessellation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaceMode {
    ThreeD,
    PlanarVoronoi,
}

impl FaceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FaceMode::ThreeD => "threeD",
            FaceMode::PlanarVoronoi => "planarVoronoi",
        }
    }
}

impl core::str::FromStr for FaceMode {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threeD" | "3d" => Ok(FaceMode::ThreeD),
            "planarVoronoi" | "planar" => Ok(FaceMode::PlanarVoronoi),
            _ => Err(invalid("mode", "expected threeD or planarVoronoi")),
        }
    }
}

pub const MAX_SPHERE_DEPTH: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSettings {
    /// Minimum number of initial directions (3D: icosphere vertices; planar:
    /// evenly spaced angles).
    pub probes: usize,
    /// Adaptive refinement levels allowed beyond the initial icosphere.
    pub max_depth: u32,
    /// Extra levels for triangles whose corners see three distinct labels.
    pub junction_depth: u32,
    /// Localization constant `A`.
    pub a: f64,
    /// Largest face count of interest; fixes the window radius.
    pub k_max: usize,
}

impl Default for FaceSettings {
    fn default() -> Self {
        FaceSettings {
            probes: 64,
            max_depth: MAX_SPHERE_DEPTH,
            junction_depth: 3,
            a: 2.0,
            k_max: 25,
        }
    }
}

impl FaceSettings {
    pub fn validate(&self) -> Result<()> {
        if self.probes < 64 {
            return Err(invalid("probes", "must be at least 64"));
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(invalid("A", "must be positive"));
        }
        if self.k_max == 0 {
            return Err(invalid("k_max", "must be positive"));
        }
        Ok(())
    }

    /// `2 A k_max^{1/3}`.
    pub fn window_radius(&self) -> f64 {
        2.0 * self.a * math::cbrt(self.k_max as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceCountSample {
    pub k: usize,
    pub probes: usize,
    pub metric: MetricKind,
    pub mode: FaceMode,
    /// Some direction left the window without meeting another cell.
    pub unbounded: bool,
}

// ---------------------------------------------------------------------------
// Icosphere.

/// Smallest icosphere level with at least `probes` vertices.
pub fn base_level(probes: usize) -> u32 {
    let mut level = 0;
    while 10 * 4usize.pow(level) + 2 < probes {
        level += 1;
    }
    level
}

fn unit(v: Vec3) -> Vec3 {
    v * (1.0 / v.euclid_norm())
}

/// Vertices and triangles of the icosahedron refined `level` times, with
/// vertices on the unit sphere.
pub fn icosphere(level: u32) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let g = (1.0 + math::sqrt(5.0)) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, g, 0.0),
        (1.0, g, 0.0),
        (-1.0, -g, 0.0),
        (1.0, -g, 0.0),
        (0.0, -1.0, g),
        (0.0, 1.0, g),
        (0.0, -1.0, -g),
        (0.0, 1.0, -g),
        (g, 0.0, -1.0),
        (g, 0.0, 1.0),
        (-g, 0.0, -1.0),
        (-g, 0.0, 1.0),
    ]
    .iter()
    .map(|&(a, b, c)| unit(Vec3::new(a, b, c)))
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(unit(verts[a as usize] + verts[b as usize]));
                (verts.len() - 1) as u32
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

// ---------------------------------------------------------------------------
// 3D cells.

/// Sites relative to an owner, sorted by norm, for rival searches.
struct Rivals {
    metric: MetricKind,
    /// (norm, relative position, site index)
    sorted: Vec<(f64, Vec3, usize)>,
    /// Norms beyond this may be missing from the window.
    reach: f64,
}

impl Rivals {
    fn new(sites: &[Vec3], owner: usize, metric: MetricKind, window_radius: f64) -> Self {
        let o = sites[owner];
        let mut sorted: Vec<(f64, Vec3, usize)> = sites
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != owner)
            .map(|(i, &z)| {
                let v = z - o;
                (metric.norm(v), v, i)
            })
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        // Every site within Euclidean distance `window_radius - |o|` of the
        // owner is present, and each norm dominates the Euclidean norm.
        let reach = window_radius - o.euclid_norm();
        Rivals { metric, sorted, reach }
    }

    /// Closest site strictly nearer to `x` than the owner is, as a
    /// position in `sorted`; ties between rivals go to the lower site index.
    fn beats(&self, x: Vec3) -> Option<usize> {
        let d_o = self.metric.norm(x);
        let mut best: Option<(usize, f64)> = None;
        for (k, &(n, v, i)) in self.sorted.iter().enumerate() {
            if n > 2.0 * d_o {
                break;
            }
            let d = self.metric.norm(x - v);
            if d < d_o && best.is_none_or(|b| d < b.1 || (d == b.1 && i < self.sorted[b.0].2)) {
                best = Some((k, d));
            }
        }
        best.map(|b| b.0)
    }

    fn gap(&self, x: Vec3, k: usize) -> f64 {
        self.metric.norm(x) - self.metric.norm(x - self.sorted[k].1)
    }

    /// Bracket `[a, b]` of the radius where `z` starts to beat the owner
    /// along `u`, by the Illinois method. The gap `d(x, O) - d(x, z)` is
    /// nondecreasing along the ray, nonpositive at 0 and positive at `hi`.
    fn crossing(&self, u: Vec3, z: usize, hi: f64) -> (f64, f64) {
        let tol = 1e-10 * hi.max(1.0);
        let (mut a, mut b) = (0.0, hi);
        let (mut fa, mut fb) = (self.gap(Vec3::default(), z), self.gap(u * hi, z));
        let mut side = 0i8;
        for _ in 0..200 {
            if b - a <= tol {
                break;
            }
            let mut m = if fb > fa {
                (a * fb - b * fa) / (fb - fa)
            } else {
                0.5 * (a + b)
            };
            if !(m > a && m < b) {
                m = 0.5 * (a + b);
            }
            // Keep the bracket shrinking when the interpolant stalls.
            let m = m.clamp(a + 0.25 * tol, b - 0.25 * tol);
            let fm = self.gap(u * m, z);
            if fm > 0.0 {
                b = m;
                fb = fm;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            } else {
                a = m;
                fa = fm;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            }
        }
        (a, b)
    }

    /// Exit of the owner's cell along `u`: the co-winner there, or `None` if
    /// the ray leaves the region where the window is complete.
    fn exit(&self, u: Vec3) -> Option<(usize, f64)> {
        let nu = self.metric.norm(u);
        let r_max = 0.5 * self.reach / nu;
        if r_max <= 0.0 {
            return None;
        }
        // Grow the ray until some site beats the owner; far points need long
        // rival scans, so start short.
        let mut hi = (0.5 / nu).min(r_max);
        let mut z = loop {
            if let Some(z) = self.beats(u * hi) {
                break z;
            }
            if hi >= r_max {
                return None;
            }
            hi = (2.0 * hi).min(r_max);
        };
        for _ in 0..64 {
            let (a, b) = self.crossing(u, z, hi);
            match self.beats(u * a) {
                Some(z2) if z2 != z => {
                    z = z2;
                    hi = a;
                }
                _ => return Some((self.sorted[z].2, b)),
            }
        }
        Some((self.sorted[z].2, hi))
    }
}

/// Closed-form Euclidean exit radius of the origin's cell along the unit
/// vector `u`: `min |z|^2 / (2 u.z)` over sites with `u.z > 0`.
pub fn euclid_exit_radius(sites: &[Vec3], u: Vec3) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, z) in sites.iter().enumerate() {
        let c = u.dot(*z);
        if c > 0.0 {
            let r = z.dot(*z) / (2.0 * c);
            if best.is_none_or(|b| r < b.1) {
                best = Some((i, r));
            }
        }
    }
    best
}

/// Exit of the cell of `sites[owner]` along the direction `u` (any length):
/// the co-winner's site index and the exit radius, measured from the owner in
/// units of `|u|`.
pub fn ray_exit_3d(
    sites: &[Vec3],
    owner: usize,
    metric: MetricKind,
    window_radius: f64,
    u: Vec3,
) -> Option<(usize, f64)> {
    let rivals = Rivals::new(sites, owner, metric, window_radius);
    rivals.exit(u)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellNeighbours {
    pub neighbours: Vec<usize>,
    pub unbounded: bool,
    pub rays: usize,
}

/// Neighbours of `sites[owner]` in the 3D tessellation of `sites`, by rays
/// from the owner over an icosphere refined where adjacent directions see
/// different co-winners. Sites are assumed complete within Euclidean
/// distance `window_radius` of the origin.
pub fn cell_neighbours(
    sites: &[Vec3],
    owner: usize,
    metric: MetricKind,
    settings: &FaceSettings,
    window_radius: f64,
) -> CellNeighbours {
    let rivals = Rivals::new(sites, owner, metric, window_radius);
    let level = base_level(settings.probes);
    let (verts, faces) = icosphere(level);
    let mut cache: BTreeMap<[u64; 3], Option<usize>> = BTreeMap::new();
    let probe = |u: Vec3, cache: &mut BTreeMap<[u64; 3], Option<usize>>| -> Option<usize> {
        let key = [u.x1.to_bits(), u.x2.to_bits(), u.t.to_bits()];
        *cache.entry(key).or_insert_with(|| rivals.exit(u).map(|e| e.0))
    };
    let labels: Vec<Option<usize>> = verts.iter().map(|&u| probe(u, &mut cache)).collect();
    let mut stack: Vec<(Vec3, Vec3, Vec3, Option<usize>, Option<usize>, Option<usize>, u32)> = faces
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| i as usize);
            (verts[a], verts[b], verts[c], labels[a], labels[b], labels[c], level)
        })
        .collect();
    while let Some((a, b, c, la, lb, lc, depth)) = stack.pop() {
        if la == lb && lb == lc {
            continue;
        }
        // Tiny faces hide where three or more cells meet; such triangles
        // refine past the cap.
        let junction = la != lb && lb != lc && la != lc;
        let cap = level + settings.max_depth + if junction { settings.junction_depth } else { 0 };
        if depth >= cap {
            continue;
        }
        let ab = unit(a + b);
        let bc = unit(b + c);
        let ca = unit(c + a);
        let (lab, lbc, lca) = (probe(ab, &mut cache), probe(bc, &mut cache), probe(ca, &mut cache));
        stack.push((a, ab, ca, la, lab, lca, depth + 1));
        stack.push((b, bc, ab, lb, lbc, lab, depth + 1));
        stack.push((c, ca, bc, lc, lca, lbc, depth + 1));
        stack.push((ab, bc, ca, lab, lbc, lca, depth + 1));
    }
    let mut set = BTreeSet::new();
    let mut unbounded = false;
    for l in cache.values() {
        match l {
            Some(i) => {
                set.insert(*i);
            }
            None => unbounded = true,
        }
    }
    CellNeighbours {
        neighbours: set.into_iter().collect(),
        unbounded,
        rays: cache.len(),
    }
}

/// Face count of the cell of the origin `O` adjoined to `points`.
pub fn neighbor_count_3d(points: &[Vec3], metric: MetricKind, settings: &FaceSettings) -> FaceCountSample {
    let mut sites = Vec::with_capacity(points.len() + 1);
    sites.push(Vec3::default());
    sites.extend_from_slice(points);
    let cell = cell_neighbours(&sites, 0, metric, settings, settings.window_radius());
    FaceCountSample {
        k: cell.neighbours.len(),
        probes: settings.probes,
        metric,
        mode: FaceMode::ThreeD,
        unbounded: cell.unbounded || points.is_empty(),
    }
}

/// Face count of the planar cell of the origin adjoined to a flat process
/// on `window`.
pub fn neighbor_count_planar(
    points: &[Point2],
    window: Rect,
    metric: MetricKind,
    settings: &FaceSettings,
) -> Result<FaceCountSample> {
    let mut seeds: Vec<Seed> = points
        .iter()
        .enumerate()
        .map(|(i, &w)| Seed::new(i as u32, w, 0.0, 0.5))
        .collect();
    let origin = seeds.len() as u32;
    seeds.push(Seed::new(origin, Point2::default(), 0.0, 0.5));
    let domain = SimDomain::PlanarWindow(PlanarWindow::new(window, 0.0, 0.0)?);
    let tess = Tessellation::new(domain, metric, seeds, 0.5)?;
    let probe = tess.probe_cell(origin, Point2::default(), settings.probes);
    Ok(FaceCountSample {
        k: probe.neighbours().len(),
        probes: settings.probes,
        metric,
        mode: FaceMode::PlanarVoronoi,
        unbounded: probe.reaches_domain_limit(),
    })
}

/// Poisson points of intensity 1 in the Euclidean ball of radius `r`.
pub fn sample_ball(r: f64, master_seed: u64, trial: u64) -> Vec<Vec3> {
    let mut rng = stream(master_seed, purpose::FACES, trial);
    let mean = 8.0 * r * r * r;
    let n = Poisson::new(mean).map(|d| d.sample(&mut rng) as usize).unwrap_or(0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let v = Vec3::new(
            r * (2.0 * rng.random::<f64>() - 1.0),
            r * (2.0 * rng.random::<f64>() - 1.0),
            r * (2.0 * rng.random::<f64>() - 1.0),
        );
        if v.euclid_norm() <= r {
            out.push(v);
        }
    }
    out
}

/// One independent local configuration and its face count.
pub fn face_trial(
    metric: MetricKind,
    mode: FaceMode,
    settings: &FaceSettings,
    master_seed: u64,
    trial: u64,
) -> Result<FaceCountSample> {
    settings.validate()?;
    let r = settings.window_radius();
    match mode {
        FaceMode::ThreeD => Ok(neighbor_count_3d(&sample_ball(r, master_seed, trial), metric, settings)),
        FaceMode::PlanarVoronoi => {
            let window = Rect::new(-r, r, -r, r)?;
            let mut rng = stream(master_seed, purpose::FACES, trial);
            let mut seeds = Vec::new();
            sample_flat_into(&mut rng, &window, 1.0, &mut seeds);
            let pts: Vec<Point2> = seeds.iter().map(|z| z.w).collect();
            neighbor_count_planar(&pts, window, metric, settings)
        }
    }
}

// ---------------------------------------------------------------------------
// Tails and ratios.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceTailRow {
    pub k: usize,
    /// Fraction of trials with at least `k` faces.
    pub survival: EstimateCI,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDiff {
    pub k: usize,
    /// `ln S(k+1) - ln S(k)`.
    pub diff: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceTail {
    pub rows: Vec<FaceTailRow>,
    pub log_diffs: Vec<LogDiff>,
    pub mean: EstimateCI,
    pub unbounded: u64,
}

impl FaceTail {
    pub fn nonincreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].survival.estimate <= w[0].survival.estimate)
    }

    /// The log-survival differences, from their maximum on, never rise by
    /// more than two standard errors and end at least two standard errors
    /// below the maximum; at least three differences after the maximum.
    pub fn eventually_decreasing(&self) -> bool {
        let d = &self.log_diffs;
        let Some(peak) = (0..d.len()).max_by(|&a, &b| d[a].diff.total_cmp(&d[b].diff)) else {
            return false;
        };
        let tail = &d[peak..];
        if tail.len() < 4 {
            return false;
        }
        let noise = |a: &LogDiff, b: &LogDiff| 2.0 * math::hypot(a.stderr, b.stderr);
        let steady = tail.windows(2).all(|w| w[1].diff <= w[0].diff + noise(&w[0], &w[1]));
        let last = tail[tail.len() - 1];
        steady && last.diff < tail[0].diff - noise(&tail[0], &last)
    }
}

/// Survival `Pr(k faces >= k0)` for `k0` in `k_lo..=k_hi`, with log
/// differences kept while at least `min_hits` trials reach `k0 + 1`.
pub fn face_tail_estimate(samples: &[FaceCountSample], k_lo: usize, k_hi: usize, min_hits: u64) -> FaceTail {
    let n = samples.len() as u64;
    let at_least = |k: usize| samples.iter().filter(|s| s.k >= k).count() as u64;
    let rows: Vec<FaceTailRow> = (k_lo..=k_hi)
        .map(|k| FaceTailRow {
            k,
            survival: EstimateCI::bernoulli(at_least(k), n),
        })
        .collect();
    let mut log_diffs = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (at_least(w[0].k), at_least(w[1].k));
        if b < min_hits.max(1) {
            break;
        }
        let c = b as f64 / a as f64;
        log_diffs.push(LogDiff {
            k: w[0].k,
            diff: math::ln(c),
            stderr: math::sqrt((1.0 - c) / (c * a as f64)),
        });
    }
    let ks: Vec<f64> = samples.iter().map(|s| s.k as f64).collect();
    FaceTail {
        rows,
        log_diffs,
        mean: EstimateCI::mean_of(&ks),
        unbounded: samples.iter().filter(|s| s.unbounded).count() as u64,
    }
}

/// `8 pi^2 / ((2k+1)(2k+2))`.
pub fn hilhorst_ratio(k: usize) -> f64 {
    8.0 * PI * PI / (((2 * k + 1) * (2 * k + 2)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HilhorstRow {
    pub k: usize,
    pub hits_k: u64,
    pub hits_next: u64,
    /// `p_{k+1} / p_k`.
    pub ratio: f64,
    pub stderr: f64,
    pub target: f64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HilhorstTable {
    pub rows: Vec<HilhorstRow>,
    /// Requested `k` with fewer than `min_hits` hits at `k` or `k + 1`.
    pub dropped: Vec<usize>,
    pub trials: u64,
}

impl HilhorstTable {
    pub fn row(&self, k: usize) -> Option<&HilhorstRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

pub fn hilhorst_ratio_check(samples: &[FaceCountSample], ks: &[usize], min_hits: u64) -> HilhorstTable {
    let n = samples.len() as u64;
    let exactly = |k: usize| samples.iter().filter(|s| s.k == k).count() as u64;
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for &k in ks {
        let (a, b) = (exactly(k), exactly(k + 1));
        if a < min_hits || b < min_hits {
            dropped.push(k);
            continue;
        }
        let ratio = b as f64 / a as f64;
        // Multinomial delta method for ln(p_{k+1} / p_k).
        let var_ln = 1.0 / a as f64 + 1.0 / b as f64 + 2.0 / n as f64;
        let target = hilhorst_ratio(k);
        rows.push(HilhorstRow {
            k,
            hits_k: a,
            hits_next: b,
            ratio,
            stderr: ratio * math::sqrt(var_ln.max(0.0)),
            target,
            relative_deviation: (ratio - target) / target,
        });
    }
    HilhorstTable {
        rows,
        dropped,
        trials: n,
    }
}
