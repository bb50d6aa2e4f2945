//! Crude states, the natural coupling of two colourings, defect clusters,
//! the crossing-over coupling, checks of the global event, and the downward
//! shift that turns blackness into robust blackness.
//!
//! Processes live on the torus `T(s) x [0, s]`. Three independent inputs are
//! sampled: `P` (intensity 1 on heights `[d', s]`), `P_low` (intensity 1 on
//! `[0, d']`) and the potential defects `P_pot` (intensity `d'^(-1/2)` on
//! `[0, d']`), where `d' = s^(-eps')`. Each input point carries a uniform
//! that drives its coin in the natural coupling.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::geometry::{unit_cube_diameter, MetricKind, Point2, Rect, TorusGeometry};
use crate::math;
use crate::process::{padding_radius, sample_box_into, Seed, SeedId, SimDomain};
use crate::rng::{purpose, stream, trial_rng, TrialRng};
use crate::tessellation::{probe_star, Rivalry, Tessellation};
use crate::unionfind::UnionFind;

// ---------------------------------------------------------------------------
// Crude states.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(i8)]
pub enum CrudeState {
    Bad = -1,
    Neutral = 0,
    Good = 1,
}

/// States of the `(s/delta)^3` cubes of side `delta` of `T(s) x [0, s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrudeGrid {
    pub s: f64,
    pub delta: f64,
    /// Cubes per axis.
    pub n: usize,
    /// Indexed `(k * n + j) * n + i` for cube `[i, j, k] * delta`.
    pub states: Vec<CrudeState>,
}

impl CrudeGrid {
    pub fn gamma(&self) -> f64 {
        self.delta * self.delta * self.delta
    }

    pub fn cube_count(&self) -> usize {
        self.states.len()
    }

    /// Counts of (bad, neutral, good).
    pub fn counts(&self) -> [u64; 3] {
        let mut c = [0u64; 3];
        for s in &self.states {
            c[(*s as i8 + 1) as usize] += 1;
        }
        [c[0], c[1], c[2]]
    }

    pub fn state(&self, i: usize, j: usize, k: usize) -> CrudeState {
        self.states[(k * self.n + j) * self.n + i]
    }
}

/// `(p_bad, p_neutral, p_good)` for a cube of volume `gamma`:
/// `1 - e^{-gamma(1-p)}`, `e^{-gamma}`, `e^{-gamma(1-p)} (1 - e^{-gamma p})`.
pub fn crude_state_law(gamma: f64, p: f64) -> [f64; 3] {
    let no_white = math::exp(-gamma * (1.0 - p));
    [
        1.0 - no_white,
        math::exp(-gamma),
        no_white * (1.0 - math::exp(-gamma * p)),
    ]
}

fn cube_count(s: f64, delta: f64) -> Result<usize> {
    if !(s.is_finite() && s > 0.0 && delta.is_finite() && delta > 0.0) {
        return Err(invalid("delta", "s and delta must be finite and positive"));
    }
    let ratio = s / delta;
    let n = math::round(ratio);
    if n < 1.0 || math::abs(ratio - n) > 1e-9 * ratio.max(1.0) {
        return Err(invalid("delta", "s / delta must be an integer"));
    }
    Ok(n as usize)
}

/// Crude states from black and white points of `T(s) x [0, s]`.
pub fn crude_states(black: &[Seed], white: &[Seed], s: f64, delta: f64) -> Result<CrudeGrid> {
    let n = cube_count(s, delta)?;
    let total = n
        .checked_mul(n)
        .and_then(|m| m.checked_mul(n))
        .ok_or(invalid("delta", "too many cubes"))?;
    let mut states = vec![CrudeState::Neutral; total];
    let index = |z: &Seed| -> usize {
        let c = |v: f64| ((math::floor(v / delta).max(0.0)) as usize).min(n - 1);
        (c(z.t) * n + c(z.w.y)) * n + c(z.w.x)
    };
    for z in black {
        states[index(z)] = CrudeState::Good;
    }
    for z in white {
        states[index(z)] = CrudeState::Bad;
    }
    Ok(CrudeGrid { s, delta, n, states })
}

/// Move every point uniformly within its own cube of side at most `delta`
/// (cubes tile `T(s) x [0, s]`), giving another realization with the same
/// crude states.
pub fn crude_resample(seeds: &[Seed], s: f64, delta: f64, rng: &mut TrialRng) -> Vec<Seed> {
    let n = math::ceil(s / delta).max(1.0);
    let side = s / n;
    seeds
        .iter()
        .map(|z| {
            let cell = |v: f64| (math::floor(v / side).clamp(0.0, n - 1.0)) * side;
            let x = cell(z.w.x) + side * rng.random::<f64>();
            let y = cell(z.w.y) + side * rng.random::<f64>();
            let t = cell(z.t) + side * rng.random::<f64>();
            Seed::new(z.id, Point2::new(x, y), t, z.u)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Inputs.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    pub s: f64,
    pub eps_prime: f64,
    pub p1: f64,
    pub p2: f64,
    pub metric: MetricKind,
    /// Intensity of `P` (1 in the construction; raised only in tests).
    pub intensity: f64,
    /// Localization constant `A`.
    pub a_pad: f64,
    /// Neighbourhood-size constant `a` of the bad events.
    pub a_size: f64,
    pub master_seed: u64,
    pub angular_budget: usize,
    /// Apply crossing-over even when a bad event holds (diagnostics). Clusters
    /// with `q > 1` or overlapping neighbourhoods still keep the natural
    /// coupling.
    pub force_crossing: bool,
}

impl CouplingParams {
    pub fn new(metric: MetricKind, s: f64, p1: f64, p2: f64, master_seed: u64) -> Self {
        CouplingParams {
            s,
            eps_prime: 0.3,
            p1,
            p2,
            metric,
            intensity: 1.0,
            a_pad: 2.0,
            a_size: 0.1,
            master_seed,
            angular_budget: 32,
            force_crossing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.p1 && self.p1 <= self.p2 && self.p2 < 1.0) {
            return Err(invalid("p1, p2", "require 0 < p1 <= p2 < 1"));
        }
        if !(self.eps_prime.is_finite() && self.eps_prime > 0.0) {
            return Err(invalid("eps_prime", "must be positive"));
        }
        if !(self.intensity.is_finite() && self.intensity > 0.0) {
            return Err(invalid("intensity", "must be positive"));
        }
        if !(self.a_size.is_finite() && self.a_size > 0.0) {
            return Err(invalid("a", "must be positive"));
        }
        if self.angular_budget < 16 {
            return Err(invalid("angular_budget", "must be at least 16"));
        }
        padding_radius(self.s, self.a_pad)?;
        TorusGeometry::new(self.s, self.s)?;
        let d = self.delta();
        if !(d > 0.0 && d < 1.0) {
            return Err(invalid("eps_prime", "delta' = s^-eps' must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `d' = s^(-eps')`.
    pub fn delta(&self) -> f64 {
        math::powf(self.s, -self.eps_prime)
    }

    /// `A (log s)^{1/3}`.
    pub fn loc_radius(&self) -> f64 {
        self.a_pad * math::cbrt(math::ln(self.s))
    }

    pub fn close_radius(&self) -> f64 {
        4.0 * self.loc_radius()
    }

    pub fn very_close_radius(&self) -> f64 {
        2.0 * self.loc_radius()
    }

    /// Probability that a potential defect becomes a defect, `p1 d'^(1/2)`.
    pub fn defect_probability(&self) -> f64 {
        self.p1 * math::sqrt(self.delta())
    }

    /// `a log s`.
    pub fn neighbourhood_limit(&self) -> f64 {
        self.a_size * math::ln(self.s)
    }

    /// Largest allowed defect cluster, `10 / eps'`.
    pub fn cluster_limit(&self) -> f64 {
        10.0 / self.eps_prime
    }

    pub fn torus(&self) -> TorusGeometry {
        TorusGeometry {
            side: self.s,
            thickness: self.s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingInputs {
    pub params: CouplingParams,
    pub run: u64,
    pub delta: f64,
    /// `P` on heights `[d', s]`.
    pub base: Vec<Seed>,
    /// `P_low` on heights `[0, d']`.
    pub low: Vec<Seed>,
    /// Potential defects on heights `[0, d']`.
    pub potential: Vec<Seed>,
}

impl CouplingInputs {
    pub fn sample(params: &CouplingParams, run: u64) -> Result<Self> {
        params.validate()?;
        let delta = params.delta();
        let s = params.s;
        let fp = Rect {
            x0: 0.0,
            x1: s,
            y0: 0.0,
            y1: s,
        };
        let mut rng = trial_rng(params.master_seed, run);
        let mut base = Vec::new();
        let mut low = Vec::new();
        let mut potential = Vec::new();
        sample_box_into(&mut rng, &fp, delta, s, params.intensity, &mut base);
        sample_box_into(&mut rng, &fp, 0.0, delta, 1.0, &mut low);
        sample_box_into(&mut rng, &fp, 0.0, delta, 1.0 / math::sqrt(delta), &mut potential);
        Ok(CouplingInputs {
            params: *params,
            run,
            delta,
            base,
            low,
            potential,
        })
    }

    pub fn domain(&self) -> SimDomain {
        SimDomain::Torus(self.params.torus())
    }

    /// Torus distance between two input points (3D).
    pub fn distance(&self, a: &Seed, b: &Seed) -> f64 {
        let g = self.params.torus();
        self.params
            .metric
            .norm3(g.fold(a.w.x - b.w.x), g.fold(a.w.y - b.w.y), a.t - b.t)
    }
}

// ---------------------------------------------------------------------------
// Natural coupling.

/// Three-sided coin of a point of `P` or `P_low`: probability `p1`,
/// `p2 - p1`, `1 - p2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coin {
    Low,
    Middle,
    High,
}

pub fn coin(u: f64, p1: f64, p2: f64) -> Coin {
    if u < p1 {
        Coin::Low
    } else if u < p2 {
        Coin::Middle
    } else {
        Coin::High
    }
}

/// Assignment of every input point to the four output processes.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOutput {
    /// Per point of `P`: in `P1+` (otherwise in `P1-`).
    pub black1: Vec<bool>,
    /// Per point of `P`: in `P2+` (otherwise in `P2-`).
    pub black2: Vec<bool>,
    /// Per point of `P_low`: present (white) in `P1-`.
    pub low_in1: Vec<bool>,
    /// Per point of `P_low`: present (white) in `P2-`.
    pub low_in2: Vec<bool>,
    /// Per potential defect: selected as a defect (black in `P1+`).
    pub defect: Vec<bool>,
    pub clusters: Vec<DefectCluster>,
    pub records: Vec<ClusterRecord>,
    pub bad: BadEvents,
    /// A bad event held and the natural coupling was kept everywhere.
    pub fallback: bool,
    /// Clusters that kept the natural coupling because `q > 1`.
    pub q_fallbacks: usize,
    /// Clusters that kept the natural coupling because their neighbourhoods
    /// overlap another cluster's.
    pub overlap_fallbacks: usize,
}

impl CouplingOutput {
    /// `P1+ = P_open ∪ D`, as seeds.
    pub fn p1_plus<'a>(&'a self, inp: &'a CouplingInputs) -> impl Iterator<Item = &'a Seed> + 'a {
        inp.base
            .iter()
            .zip(&self.black1)
            .filter(|(_, &b)| b)
            .map(|(z, _)| z)
            .chain(
                inp.potential
                    .iter()
                    .zip(&self.defect)
                    .filter(|(_, &d)| d)
                    .map(|(z, _)| z),
            )
    }

    pub fn p1_minus<'a>(&'a self, inp: &'a CouplingInputs) -> impl Iterator<Item = &'a Seed> + 'a {
        inp.base
            .iter()
            .zip(&self.black1)
            .filter(|(_, &b)| !b)
            .map(|(z, _)| z)
            .chain(inp.low.iter().zip(&self.low_in1).filter(|(_, &i)| i).map(|(z, _)| z))
    }

    pub fn p2_plus<'a>(&'a self, inp: &'a CouplingInputs) -> impl Iterator<Item = &'a Seed> + 'a {
        inp.base.iter().zip(&self.black2).filter(|(_, &b)| b).map(|(z, _)| z)
    }

    pub fn p2_minus<'a>(&'a self, inp: &'a CouplingInputs) -> impl Iterator<Item = &'a Seed> + 'a {
        inp.base
            .iter()
            .zip(&self.black2)
            .filter(|(_, &b)| !b)
            .map(|(z, _)| z)
            .chain(inp.low.iter().zip(&self.low_in2).filter(|(_, &i)| i).map(|(z, _)| z))
    }

    pub fn defect_count(&self) -> usize {
        self.defect.iter().filter(|&&d| d).count()
    }

    /// `P_open ⊆ P2+` and `P1- ⊇ P2-`.
    pub fn monotone(&self) -> bool {
        self.black1.iter().zip(&self.black2).all(|(&b1, &b2)| !b1 || b2)
            && self.low_in1.iter().zip(&self.low_in2).all(|(&i1, &i2)| !i2 || i1)
    }
}

/// The natural coupling: each point's coin fixes both sides, defects are an
/// independent thinning of the potential defects.
pub fn natural_coupling(inp: &CouplingInputs) -> CouplingOutput {
    let (p1, p2) = (inp.params.p1, inp.params.p2);
    let dp = inp.params.defect_probability();
    let base_coins: Vec<Coin> = inp.base.iter().map(|z| coin(z.u, p1, p2)).collect();
    let low_coins: Vec<Coin> = inp.low.iter().map(|z| coin(z.u, p1, p2)).collect();
    CouplingOutput {
        black1: base_coins.iter().map(|&c| c == Coin::Low).collect(),
        black2: base_coins.iter().map(|&c| c != Coin::High).collect(),
        low_in1: low_coins.iter().map(|&c| c != Coin::Low).collect(),
        low_in2: low_coins.iter().map(|&c| c == Coin::High).collect(),
        defect: inp.potential.iter().map(|z| z.u < dp).collect(),
        clusters: Vec::new(),
        records: Vec::new(),
        bad: BadEvents::default(),
        fallback: false,
        q_fallbacks: 0,
        overlap_fallbacks: 0,
    }
}

// ---------------------------------------------------------------------------
// Defect clusters and bad events.

/// A cluster of potential defects with its neighbourhood `Gamma(C)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DefectCluster {
    /// Indices into the potential defects.
    pub members: Vec<u32>,
    /// Indices into `P` of points potentially adjacent to a member.
    pub gamma_base: Vec<u32>,
    /// Indices into `P_low` of points very close to a member.
    pub gamma_low: Vec<u32>,
}

impl DefectCluster {
    pub fn gamma_len(&self) -> usize {
        self.gamma_base.len() + self.gamma_low.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BadEvents {
    /// Some point of the torus has no point of `P` within `A (log s)^{1/3}`.
    pub b1: bool,
    /// A cluster has more than `10 / eps'` potential defects.
    pub b2: bool,
    /// A potential defect is potentially adjacent to at least `a log s`
    /// points of `P`. `None` when not evaluated (an earlier event already
    /// forced the fallback).
    pub b3: Option<bool>,
    /// A potential defect is very close to at least `a log s` points of `P_low`.
    pub b4: bool,
}

impl BadEvents {
    pub fn any(&self) -> bool {
        self.b1 || self.b2 || self.b3.unwrap_or(false) || self.b4
    }
}

/// Clusters of the "close" relation (d-distance at most `4 A (log s)^{1/3}`).
pub fn close_clusters(inp: &CouplingInputs) -> Vec<Vec<u32>> {
    let n = inp.potential.len();
    let r = inp.params.close_radius();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if inp.distance(&inp.potential[i], &inp.potential[j]) <= r {
                uf.union(i, j);
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for i in 0..n {
        by_root.entry(uf.find(i)).or_default().push(i as u32);
    }
    by_root.into_values().collect()
}

/// A point `z'` added to the tessellation of `P`: its cell in `P ∪ {z'}`.
/// Ties go to the points of `P`.
pub struct AddedSeed<'a> {
    pub tess: &'a Tessellation,
    pub w: Point2,
    pub t: f64,
}

impl Rivalry for AddedSeed<'_> {
    fn owner_distance(&self, x: Point2) -> f64 {
        self.tess.point_distance(x, self.w, self.t)
    }

    fn rival(&self, x: Point2) -> Option<(SeedId, f64)> {
        self.tess.winner(x)
    }

    fn rival_distance(&self, x: Point2, rival: SeedId) -> f64 {
        self.tess.seed_distance(x, rival)
    }

    fn owner_beats(&self, owner_d: f64, _rival: SeedId, rival_d: f64) -> bool {
        owner_d < rival_d
    }
}

impl AddedSeed<'_> {
    fn wins_at(&self, x: Point2) -> bool {
        match self.tess.winner(x) {
            Some((_, d)) => self.owner_distance(x) < d,
            None => true,
        }
    }

    /// A point of the cell from which it can be probed: `w` itself when
    /// owned, else for convex cells a sampled interior point near `w`.
    fn centre(&self, search_radius: f64, step: f64) -> Option<Point2> {
        if self.wins_at(self.w) {
            return Some(self.w);
        }
        if self.tess.metric() != MetricKind::Euclidean3 {
            return None;
        }
        let n = math::ceil(search_radius / step) as i64;
        let mut best: Option<(Point2, f64)> = None;
        for j in -n..=n {
            for i in -n..=n {
                let x = self.w + Point2::new(i as f64 * step, j as f64 * step);
                if let Some((_, d)) = self.tess.winner(x) {
                    let margin = d - self.owner_distance(x);
                    if margin > 0.0 && best.is_none_or(|b| margin > b.1) {
                        best = Some((x, margin));
                    }
                }
            }
        }
        best.map(|b| b.0)
    }
}

/// Points of `P` whose planar cells meet the cell of `z'` in the
/// tessellation of `P ∪ {z'}`.
pub fn potentially_adjacent(base_tess: &Tessellation, z: &Seed, budget: usize, step: f64) -> Vec<SeedId> {
    let added = AddedSeed {
        tess: base_tess,
        w: z.w,
        t: z.t,
    };
    let reach = match base_tess.domain() {
        SimDomain::Torus(g) => 0.5 * g.side,
        SimDomain::PlanarWindow(w) => w.footprint().width().max(w.footprint().height()),
    };
    let Some(centre) = added.centre(reach.min(8.0), step) else {
        return Vec::new();
    };
    let probe = probe_star(&added, centre, budget, |dir| match base_tess.domain() {
        SimDomain::Torus(g) => 0.5 * g.side,
        SimDomain::PlanarWindow(w) => w.footprint().ray_extent(centre, dir),
    });
    let mut v: Vec<SeedId> = probe.neighbours().into_iter().map(|(id, _)| id).collect();
    v.sort_unstable();
    v
}

/// Largest `d((x, 0), P)` over a grid of spacing at most `spacing`, plus a
/// Lipschitz allowance so that exceeding `radius` anywhere on the torus is
/// never missed.
pub fn b1_holds(base_tess: &Tessellation, s: f64, spacing: f64, radius: f64) -> bool {
    let n = math::ceil(s / spacing).max(1.0) as usize;
    let h = s / n as f64;
    let slack = base_tess.metric().planar_lipschitz() * h * core::f64::consts::FRAC_1_SQRT_2;
    let mut hint = None;
    for j in 0..n {
        for i in 0..n {
            let x = Point2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            match base_tess.winner_with_hint(x, hint) {
                None => return true,
                Some((id, d)) => {
                    hint = Some(id);
                    if d > radius - slack {
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn base_tessellation(inp: &CouplingInputs) -> Result<Tessellation> {
    Tessellation::new(inp.domain(), inp.params.metric, inp.base.clone(), 1.0)
}

/// Clusters with their neighbourhoods, and per-potential-defect counts of
/// potentially adjacent points of `P` and very close points of `P_low`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DefectAnalysis {
    pub clusters: Vec<DefectCluster>,
    pub adjacent_counts: Vec<usize>,
    pub very_close_counts: Vec<usize>,
}

pub fn defect_clusters(inp: &CouplingInputs, base_tess: &Tessellation) -> DefectAnalysis {
    let groups = close_clusters(inp);
    let step = inp.params.s / 256.0;
    let rv = inp.params.very_close_radius();
    let mut adjacent_counts = vec![0; inp.potential.len()];
    let mut very_close_counts = vec![0; inp.potential.len()];
    let mut clusters = Vec::with_capacity(groups.len());
    for members in groups {
        let mut gb = Vec::new();
        let mut gl = Vec::new();
        for &m in &members {
            let z = &inp.potential[m as usize];
            let adj = potentially_adjacent(base_tess, z, inp.params.angular_budget, step);
            adjacent_counts[m as usize] = adj.len();
            gb.extend(adj);
            let close: Vec<u32> = inp
                .low
                .iter()
                .filter(|y| inp.distance(z, y) <= rv)
                .map(|y| y.id)
                .collect();
            very_close_counts[m as usize] = close.len();
            gl.extend(close);
        }
        gb.sort_unstable();
        gb.dedup();
        gl.sort_unstable();
        gl.dedup();
        clusters.push(DefectCluster {
            members,
            gamma_base: gb,
            gamma_low: gl,
        });
    }
    DefectAnalysis {
        clusters,
        adjacent_counts,
        very_close_counts,
    }
}

/// All four bad events for a run (B3 always evaluated).
pub fn bad_events(inp: &CouplingInputs) -> Result<(BadEvents, DefectAnalysis)> {
    let base_tess = base_tessellation(inp)?;
    let analysis = defect_clusters(inp, &base_tess);
    let mut bad = cheap_bad_events(inp, &base_tess, &analysis);
    let limit = inp.params.neighbourhood_limit();
    bad.b3 = Some(analysis.adjacent_counts.iter().any(|&c| c as f64 >= limit));
    Ok((bad, analysis))
}

fn cheap_bad_events(inp: &CouplingInputs, base_tess: &Tessellation, analysis: &DefectAnalysis) -> BadEvents {
    let pr = &inp.params;
    let limit = pr.neighbourhood_limit();
    BadEvents {
        b1: b1_holds(base_tess, pr.s, inp.delta, pr.loc_radius()),
        b2: analysis
            .clusters
            .iter()
            .any(|c| c.members.len() as f64 > pr.cluster_limit()),
        b3: None,
        b4: analysis.very_close_counts.iter().any(|&c| c as f64 >= limit),
    }
}

fn very_close_only(inp: &CouplingInputs) -> DefectAnalysis {
    let rv = inp.params.very_close_radius();
    let clusters = close_clusters(inp)
        .into_iter()
        .map(|members| DefectCluster {
            members,
            ..Default::default()
        })
        .collect();
    DefectAnalysis {
        clusters,
        adjacent_counts: vec![0; inp.potential.len()],
        very_close_counts: inp
            .potential
            .iter()
            .map(|z| inp.low.iter().filter(|y| inp.distance(z, y) <= rv).count())
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Crossing over.

/// `Pr(B(C))`, `Pr(G(C))` and the threshold `q` with `Pr(G'(C)) = Pr(B(C))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterOdds {
    pub pr_b: f64,
    pub pr_g: f64,
    pub q: f64,
}

pub fn cluster_odds(cluster_size: usize, gamma_size: usize, p1: f64, p2: f64, defect_probability: f64) -> ClusterOdds {
    let pr_b = 1.0 - math::powf(1.0 - defect_probability, cluster_size as f64);
    let pr_g = math::powf(p2 - p1, gamma_size as f64);
    let denom = pr_g * (1.0 - pr_b);
    let q = if pr_b == 0.0 {
        0.0
    } else if denom > 0.0 {
        pr_b / denom
    } else {
        f64::INFINITY
    };
    ClusterOdds { pr_b, pr_g, q }
}

/// The second-level side of a neighbourhood: for its points of `P`, whether
/// they are in `P2+`; for its points of `P_low`, whether they are in `P2-`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Side2 {
    pub base_black: Vec<bool>,
    pub low_present: Vec<bool>,
}

impl Side2 {
    /// The configuration forced by `G(C)`.
    pub fn forced(base: usize, low: usize) -> Self {
        Side2 {
            base_black: vec![true; base],
            low_present: vec![false; low],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossAction {
    Natural,
    /// `B(C)` held: the side was set to the `G(C)` configuration.
    Forced,
    /// `G'(C)` held: the side was redrawn independently.
    Redrawn,
}

/// Final second-level side of a neighbourhood from its natural side, an
/// independent redraw, and the events `B(C)` and `G'(C)`.
pub fn resolve_side2(natural: &Side2, redraw: &Side2, in_b: bool, in_g_prime: bool) -> (Side2, CrossAction) {
    if in_b {
        (
            Side2::forced(natural.base_black.len(), natural.low_present.len()),
            CrossAction::Forced,
        )
    } else if in_g_prime {
        (redraw.clone(), CrossAction::Redrawn)
    } else {
        (natural.clone(), CrossAction::Natural)
    }
}

/// `Pr(z in P2+)` for the single point `z` of `P` in the neighbourhood of a
/// one-point cluster, by exact enumeration of its coin, the defect coin, the
/// threshold uniform and the redraw, each resolved by [`resolve_side2`].
pub fn single_cluster_marginal(p1: f64, p2: f64, defect_probability: f64) -> f64 {
    let odds = cluster_odds(1, 1, p1, p2, defect_probability);
    let crossing = odds.q <= 1.0;
    let mut total = 0.0;
    for (c, pc) in [(Coin::Low, p1), (Coin::Middle, p2 - p1), (Coin::High, 1.0 - p2)] {
        let natural = Side2 {
            base_black: vec![c != Coin::High],
            low_present: Vec::new(),
        };
        let in_g = c == Coin::Middle;
        for (in_b, pb) in [(true, odds.pr_b), (false, 1.0 - odds.pr_b)] {
            let pu = if crossing { odds.q.min(1.0) } else { 0.0 };
            for (below, pq) in [(true, pu), (false, 1.0 - pu)] {
                for (redraw_black, pr) in [(true, p2), (false, 1.0 - p2)] {
                    let redraw = Side2 {
                        base_black: vec![redraw_black],
                        low_present: Vec::new(),
                    };
                    let in_g_prime = crossing && in_g && !in_b && below;
                    let side = if crossing {
                        resolve_side2(&natural, &redraw, in_b, in_g_prime).0
                    } else {
                        natural.clone()
                    };
                    if side.base_black[0] {
                        total += pc * pb * pq * pr;
                    }
                }
            }
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterRecord {
    pub odds: ClusterOdds,
    pub in_b: bool,
    pub in_g: bool,
    pub in_g_prime: bool,
    pub action: CrossAction,
    /// Natural coupling kept (q > 1 or overlapping neighbourhood).
    pub fallback: bool,
}

/// The crossed-over coupling. When a bad event holds (and crossing is not
/// forced) the natural coupling is returned with `fallback` set.
pub fn crossed_coupling(inp: &CouplingInputs) -> Result<CouplingOutput> {
    let pr = inp.params;
    let mut out = natural_coupling(inp);
    let base_tess = base_tessellation(inp)?;
    let quick = very_close_only(inp);
    let mut bad = cheap_bad_events(inp, &base_tess, &quick);
    if bad.any() && !pr.force_crossing {
        out.bad = bad;
        out.fallback = true;
        out.clusters = quick.clusters;
        return Ok(out);
    }
    let analysis = defect_clusters(inp, &base_tess);
    bad.b3 = Some(
        analysis
            .adjacent_counts
            .iter()
            .any(|&c| c as f64 >= pr.neighbourhood_limit()),
    );
    out.bad = bad;
    out.clusters = analysis.clusters;
    if bad.any() && !pr.force_crossing {
        out.fallback = true;
        return Ok(out);
    }

    // Neighbourhoods shared between clusters cannot be crossed independently.
    let mut owner_base: BTreeMap<u32, usize> = BTreeMap::new();
    let mut owner_low: BTreeMap<u32, usize> = BTreeMap::new();
    let mut overlapping = vec![false; out.clusters.len()];
    for (ci, c) in out.clusters.iter().enumerate() {
        for &b in &c.gamma_base {
            if let Some(&other) = owner_base.get(&b) {
                overlapping[ci] = true;
                overlapping[other] = true;
            } else {
                owner_base.insert(b, ci);
            }
        }
        for &l in &c.gamma_low {
            if let Some(&other) = owner_low.get(&l) {
                overlapping[ci] = true;
                overlapping[other] = true;
            } else {
                owner_low.insert(l, ci);
            }
        }
    }

    let mut rng = stream(pr.master_seed, purpose::COUPLING, inp.run);
    let mut records = Vec::with_capacity(out.clusters.len());
    for (ci, c) in out.clusters.iter().enumerate() {
        let odds = cluster_odds(c.members.len(), c.gamma_len(), pr.p1, pr.p2, pr.defect_probability());
        // Fixed consumption per cluster keeps runs reproducible.
        let u_c: f64 = rng.random();
        let redraw = Side2 {
            base_black: c.gamma_base.iter().map(|_| rng.random::<f64>() < pr.p2).collect(),
            low_present: c.gamma_low.iter().map(|_| rng.random::<f64>() >= pr.p2).collect(),
        };
        let in_b = c.members.iter().any(|&m| out.defect[m as usize]);
        let in_g = c
            .gamma_base
            .iter()
            .all(|&b| coin(inp.base[b as usize].u, pr.p1, pr.p2) == Coin::Middle)
            && c.gamma_low
                .iter()
                .all(|&l| coin(inp.low[l as usize].u, pr.p1, pr.p2) == Coin::Middle);
        let fallback = odds.q > 1.0 || overlapping[ci];
        let in_g_prime = !fallback && in_g && !in_b && u_c < odds.q;
        let action = if fallback {
            CrossAction::Natural
        } else {
            let natural = Side2 {
                base_black: c.gamma_base.iter().map(|&b| out.black2[b as usize]).collect(),
                low_present: c.gamma_low.iter().map(|&l| out.low_in2[l as usize]).collect(),
            };
            let (side, action) = resolve_side2(&natural, &redraw, in_b, in_g_prime);
            for (k, &b) in c.gamma_base.iter().enumerate() {
                out.black2[b as usize] = side.base_black[k];
            }
            for (k, &l) in c.gamma_low.iter().enumerate() {
                out.low_in2[l as usize] = side.low_present[k];
            }
            action
        };
        if fallback && odds.q > 1.0 {
            out.q_fallbacks += 1;
        } else if fallback {
            out.overlap_fallbacks += 1;
        }
        records.push(ClusterRecord {
            odds,
            in_b,
            in_g,
            in_g_prime,
            action,
            fallback,
        });
    }
    out.records = records;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Global event checks.

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VerifyReport {
    pub skipped: bool,
    pub grid_points: u64,
    /// Check (i): level-1 black, non-defect winner, but level-2 white.
    pub containment_violations: u64,
    pub unions: u64,
    pub boundary_points: u64,
    /// Check (ii): outer boundary points of defect unions that are not
    /// level-2 black.
    pub boundary_violations: u64,
    /// Boundary transitions whose outer side is still a defect cell.
    pub ambiguous_boundary: u64,
    /// Check (iii): unions of diameter above `log s`.
    pub oversized_unions: u64,
    pub max_union_diameter: f64,
}

fn tess_of(inp: &CouplingInputs, seeds: impl Iterator<Item = (Seed, bool)>) -> Result<(Tessellation, Vec<bool>)> {
    let mut v = Vec::new();
    let mut flags = Vec::new();
    for (i, (z, flag)) in seeds.enumerate() {
        v.push(Seed::new(i as SeedId, z.w, z.t, z.u));
        flags.push(flag);
    }
    Ok((Tessellation::new(inp.domain(), inp.params.metric, v, 0.5)?, flags))
}

/// Tessellation whose colouring is given by `black` flags (`u = 0` black,
/// `u = 1` white at level 1/2).
fn coloured_tess(inp: &CouplingInputs, seeds: impl Iterator<Item = (Seed, bool)>) -> Result<Tessellation> {
    let coloured = seeds.map(|(z, black)| (Seed::new(0, z.w, z.t, if black { 0.0 } else { 1.0 }), false));
    tess_of(inp, coloured).map(|(t, _)| t)
}

/// Level-1 tessellation `(P1+, P1-)`; returns it with a per-seed defect flag.
pub fn level1_tessellation(inp: &CouplingInputs, out: &CouplingOutput) -> Result<(Tessellation, Vec<bool>)> {
    let seeds = inp
        .base
        .iter()
        .zip(&out.black1)
        .map(|(z, &b)| (Seed::new(0, z.w, z.t, if b { 0.0 } else { 1.0 }), false))
        .chain(
            inp.low
                .iter()
                .zip(&out.low_in1)
                .filter(|(_, &i)| i)
                .map(|(z, _)| (Seed::new(0, z.w, z.t, 1.0), false)),
        )
        .chain(
            inp.potential
                .iter()
                .zip(&out.defect)
                .filter(|(_, &d)| d)
                .map(|(z, _)| (Seed::new(0, z.w, z.t, 0.0), true)),
        );
    tess_of(inp, seeds)
}

/// Level-2 tessellation `(P2+, P2-)` before the shift.
pub fn level2_tessellation(inp: &CouplingInputs, out: &CouplingOutput) -> Result<Tessellation> {
    let seeds = inp.base.iter().zip(&out.black2).map(|(z, &b)| (*z, b)).chain(
        inp.low
            .iter()
            .zip(&out.low_in2)
            .filter(|(_, &i)| i)
            .map(|(z, _)| (*z, false)),
    );
    coloured_tess(inp, seeds)
}

/// Checks of the global event on a raster of spacing at most `step`.
pub fn verify_global_event(inp: &CouplingInputs, out: &CouplingOutput, step: f64) -> Result<VerifyReport> {
    if out.fallback {
        return Ok(VerifyReport {
            skipped: true,
            ..Default::default()
        });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(invalid("step", "must be finite and positive"));
    }
    let s = inp.params.s;
    let (t1, defect1) = level1_tessellation(inp, out)?;
    let t2 = level2_tessellation(inp, out)?;
    let mut rep = VerifyReport::default();
    let n = math::ceil(s / step).max(1.0) as usize;
    let h = s / n as f64;
    let centre = |i: i64, j: i64| Point2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
    let black2 = |x: Point2| t2.winner(x).is_some_and(|(w, _)| t2.is_black(w));

    // (i)
    for j in 0..n as i64 {
        for i in 0..n as i64 {
            let x = centre(i, j);
            rep.grid_points += 1;
            if let Some((w, _)) = t1.winner(x) {
                if t1.is_black(w) && !defect1[w as usize] && !black2(x) {
                    rep.containment_violations += 1;
                }
            }
        }
    }

    // (ii), (iii): unions of defect cells in the tessellation by D ∪ P.
    let defect_seeds: Vec<Seed> = inp
        .potential
        .iter()
        .zip(&out.defect)
        .filter(|(_, &d)| d)
        .map(|(z, _)| *z)
        .collect();
    if defect_seeds.is_empty() {
        return Ok(rep);
    }
    let nb = inp.base.len();
    let (tv, is_defect) = tess_of(
        inp,
        inp.base
            .iter()
            .map(|z| (*z, false))
            .chain(defect_seeds.iter().map(|z| (*z, true))),
    )?;
    let in_defect_cell = |x: Point2| tv.winner(x).is_some_and(|(w, _)| is_defect[w as usize]);
    let mut mask = vec![false; n * n];
    let mut hint = None;
    for j in 0..n {
        for i in 0..n {
            if let Some((w, _)) = tv.winner_with_hint(centre(i as i64, j as i64), hint) {
                hint = Some(w);
                mask[j * n + i] = w as usize >= nb;
            }
        }
    }
    let wrap = |v: i64| v.rem_euclid(n as i64) as usize;
    let mut label = vec![u32::MAX; n * n];
    let mut next = 0u32;
    for start in 0..n * n {
        if !mask[start] || label[start] != u32::MAX {
            continue;
        }
        // Unwrapped flood fill of one union (8-connected, across seams).
        let mut comp: Vec<(i64, i64)> = Vec::new();
        let mut stack = vec![((start % n) as i64, (start / n) as i64)];
        label[start] = next;
        while let Some((i, j)) = stack.pop() {
            comp.push((i, j));
            for dj in -1..=1i64 {
                for di in -1..=1i64 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ui, uj) = (i + di, j + dj);
                    let k = wrap(uj) * n + wrap(ui);
                    if mask[k] && label[k] == u32::MAX {
                        label[k] = next;
                        stack.push((ui, uj));
                    }
                }
            }
        }
        next += 1;
        rep.unions += 1;
        let (mut i0, mut i1, mut j0, mut j1) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
        for &(i, j) in &comp {
            i0 = i0.min(i);
            i1 = i1.max(i);
            j0 = j0.min(j);
            j1 = j1.max(j);
        }
        let pts: Vec<Point2> = comp.iter().map(|&(i, j)| centre(i, j)).collect();
        let diam = crate::percolation::point_set_diameter(&pts);
        rep.max_union_diameter = rep.max_union_diameter.max(diam);
        if diam > math::ln(s) {
            rep.oversized_unions += 1;
        }
        let (bw, bh) = ((i1 - i0 + 3) as usize, (j1 - j0 + 3) as usize);
        if bw >= n || bh >= n {
            // Wraps around the torus: no bounded exterior to speak of.
            rep.oversized_unions += u64::from(diam <= math::ln(s));
            continue;
        }
        let local = |i: i64, j: i64| ((j - j0 + 1) as usize) * bw + (i - i0 + 1) as usize;
        let mut in_u = vec![false; bw * bh];
        for &(i, j) in &comp {
            in_u[local(i, j)] = true;
        }
        // Exterior: complement cells reachable from the box frame.
        let mut outside = vec![false; bw * bh];
        let mut stack = Vec::new();
        for a in 0..bw {
            for b in [0, bh - 1] {
                stack.push((a, b));
            }
        }
        for b in 0..bh {
            for a in [0, bw - 1] {
                stack.push((a, b));
            }
        }
        while let Some((a, b)) = stack.pop() {
            let k = b * bw + a;
            if in_u[k] || outside[k] {
                continue;
            }
            outside[k] = true;
            if a > 0 {
                stack.push((a - 1, b));
            }
            if a + 1 < bw {
                stack.push((a + 1, b));
            }
            if b > 0 {
                stack.push((a, b - 1));
            }
            if b + 1 < bh {
                stack.push((a, b + 1));
            }
        }
        for &(i, j) in &comp {
            for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (oi, oj) = (i + di, j + dj);
                if !outside[local(oi, oj)] {
                    continue;
                }
                // Locate the cell boundary between the two pixel centres.
                let (mut a, mut b) = (centre(i, j), centre(oi, oj));
                for _ in 0..48 {
                    let m = (a + b) * 0.5;
                    if in_defect_cell(m) {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                rep.boundary_points += 1;
                if in_defect_cell(b) {
                    rep.ambiguous_boundary += 1;
                } else if !black2(b) {
                    rep.boundary_violations += 1;
                }
            }
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Downward shift and robust blackness.

/// `d(x, z) - d(x, z shifted down by delta)`.
pub fn shift_reduction(x: Point2, z: &Seed, delta: f64, metric: MetricKind, torus: &TorusGeometry) -> f64 {
    let dx = torus.fold(x.x - z.w.x);
    let dy = torus.fold(x.y - z.w.y);
    metric.norm3(dx, dy, z.t) - metric.norm3(dx, dy, z.t - delta)
}

/// `P2+`: the points of `black` shifted down by `delta`, together with a fresh
/// intensity-`p2` layer on heights `[s - delta, s]`. Ids are renumbered.
pub fn shift_transform(black: &[Seed], delta: f64, p2: f64, torus: &TorusGeometry, rng: &mut TrialRng) -> Vec<Seed> {
    let mut out: Vec<Seed> = black
        .iter()
        .enumerate()
        .map(|(i, z)| Seed::new(i as SeedId, z.w, z.t - delta, 0.0))
        .collect();
    let fp = Rect {
        x0: 0.0,
        x1: torus.side,
        y0: 0.0,
        y1: torus.side,
    };
    let start = out.len();
    sample_box_into(rng, &fp, torus.thickness - delta, torus.thickness, p2, &mut out);
    for z in &mut out[start..] {
        z.u = 0.0;
    }
    out
}

/// `x` is `eta`-robustly black in the tessellation of `(P2+, P2-)`.
pub fn robust_from_shift_check(x: Point2, p2_tess: &Tessellation, eta: f64) -> Result<bool> {
    p2_tess.is_robustly_black(x, eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobustShiftReport {
    /// Sampled points black before the shift.
    pub checked: u64,
    /// Of those, points not `2 C_d delta`-robustly black after the shift.
    pub failures: u64,
    pub eta: f64,
    pub delta_prime: f64,
    /// Robustly black points checked against a crude-state resample.
    pub resample_checked: u64,
    pub resample_flips: u64,
}

/// One run: couple at `eps' = eps / 3`, shift the level-2 black points down
/// by `d'`, and test sampled black points for `2 C_d s^(-eps)`-robust
/// blackness; then resample within cubes of side `s^(-eps)` and count robust
/// points that change colour.
pub fn robust_shift_run(params: &CouplingParams, eps: f64, run: u64, points: usize) -> Result<RobustShiftReport> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("eps", "must be positive"));
    }
    let pr = CouplingParams {
        eps_prime: eps / 3.0,
        ..*params
    };
    let inp = CouplingInputs::sample(&pr, run)?;
    let out = crossed_coupling(&inp)?;
    let before = level2_tessellation(&inp, &out)?;
    let torus = pr.torus();
    let mut rng = stream(pr.master_seed, purpose::SHIFT, run);
    let black: Vec<Seed> = out.p2_plus(&inp).copied().collect();
    let shifted = shift_transform(&black, inp.delta, pr.p2, &torus, &mut rng);
    let seeds = shifted
        .iter()
        .map(|z| (*z, true))
        .chain(out.p2_minus(&inp).map(|z| (*z, false)));
    let after = coloured_tess(&inp, seeds)?;
    let delta = math::powf(pr.s, -eps);
    let eta = 2.0 * unit_cube_diameter(pr.metric) * delta;
    let mut rep = RobustShiftReport {
        eta,
        delta_prime: inp.delta,
        ..Default::default()
    };
    for _ in 0..points {
        let x = Point2::new(pr.s * rng.random::<f64>(), pr.s * rng.random::<f64>());
        if before.colour_at(x)? == crate::tessellation::Colour::Black {
            rep.checked += 1;
            if !robust_from_shift_check(x, &after, eta)? {
                rep.failures += 1;
            }
        }
    }
    let resampled_seeds = crude_resample(after.seeds(), pr.s, delta, &mut rng);
    let resampled = Tessellation::new(after.domain().clone(), pr.metric, resampled_seeds, 0.5)?;
    for _ in 0..points {
        let x = Point2::new(pr.s * rng.random::<f64>(), pr.s * rng.random::<f64>());
        if after.is_robustly_black(x, eta)? {
            rep.resample_checked += 1;
            if resampled.colour_at(x)? != crate::tessellation::Colour::Black {
                rep.resample_flips += 1;
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(id: u32, x: f64, y: f64, t: f64, u: f64) -> Seed {
        Seed::new(id, Point2::new(x, y), t, u)
    }

    #[test]
    fn crude_state_examples() {
        let g = crude_states(&[], &[], 2.0, 1.0).unwrap();
        assert!(g.states.iter().all(|&s| s == CrudeState::Neutral));
        let g = crude_states(&[seed(0, 0.5, 0.5, 0.5, 0.0)], &[seed(1, 0.4, 0.6, 0.2, 1.0)], 2.0, 1.0).unwrap();
        assert_eq!(g.state(0, 0, 0), CrudeState::Bad);
        assert_eq!(g.counts(), [1, 7, 0]);
        assert!(crude_states(&[], &[], 2.0, 0.3).is_err());
    }

    #[test]
    fn crude_law_sums_to_one() {
        let [b, n, g] = crude_state_law(1e-3, 0.5);
        assert!((b + n + g - 1.0).abs() < 1e-15);
        assert!((b - (1.0 - (-0.0005f64).exp())).abs() < 1e-18);
    }

    #[test]
    fn odds_and_threshold() {
        let o = cluster_odds(1, 1, 0.45, 0.55, 0.1);
        assert!((o.pr_b - 0.1).abs() < 1e-15);
        assert!((o.pr_g - 0.1).abs() < 1e-12);
        assert!((o.q - 0.1 / (0.1 * 0.9)).abs() < 1e-9);
        let degenerate = cluster_odds(2, 3, 0.5, 0.5, 0.1);
        assert_eq!(degenerate.pr_g, 0.0);
        assert!(degenerate.q.is_infinite());
    }

    #[test]
    fn resolve_prefers_forced_then_redraw() {
        let nat = Side2 {
            base_black: vec![false, true],
            low_present: vec![true],
        };
        let red = Side2 {
            base_black: vec![true, false],
            low_present: vec![true],
        };
        assert_eq!(resolve_side2(&nat, &red, true, false).0, Side2::forced(2, 1));
        assert_eq!(resolve_side2(&nat, &red, false, true).0, red);
        assert_eq!(resolve_side2(&nat, &red, false, false).0, nat);
    }

    #[test]
    fn shift_examples() {
        let g = TorusGeometry::new(100.0, 100.0).unwrap();
        let x = Point2::new(0.0, 0.0);
        let z = seed(0, 0.0, 0.0, 5.0, 0.0);
        assert!((shift_reduction(x, &z, 0.1, MetricKind::Euclidean3, &g) - 0.1).abs() < 1e-12);
        let z = seed(0, 4.0, 0.0, 3.0, 0.0);
        let r = shift_reduction(x, &z, 0.1, MetricKind::Euclidean3, &g);
        assert!((r - (5.0 - (16.0f64 + 8.41).sqrt())).abs() < 1e-12);
        assert!(r > 0.01 / 10.0);
        assert!((shift_reduction(x, &z, 0.1, MetricKind::JohnsonMehl, &g) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn degenerate_levels_never_use_middle_branch() {
        let pr = CouplingParams::new(MetricKind::JohnsonMehl, 10.0, 0.5, 0.5, 3);
        let inp = CouplingInputs::sample(&pr, 0).unwrap();
        let out = natural_coupling(&inp);
        for (b1, b2) in out.black1.iter().zip(&out.black2) {
            assert_eq!(b1, b2);
        }
        assert!(out.monotone());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(CouplingParams::new(MetricKind::JohnsonMehl, 10.0, 0.6, 0.5, 0)
            .validate()
            .is_err());
        assert!(CouplingParams::new(MetricKind::JohnsonMehl, 2.0, 0.4, 0.5, 0)
            .validate()
            .is_err());
    }
}
