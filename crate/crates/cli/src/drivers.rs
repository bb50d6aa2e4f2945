//! One driver per subcommand. Trials run on the rayon pool and are collected
//! in trial order, so outputs do not depend on the number of workers.

use std::path::PathBuf;

use jmperc::coupling::{
    crossed_coupling, crude_states, robust_shift_run, verify_global_event, CouplingInputs, CrossAction,
    RobustShiftReport, VerifyReport,
};
use jmperc::faces::{face_tail_estimate, face_trial, hilhorst_ratio_check, FaceCountSample, FaceMode};
use jmperc::percolation::{
    bracket_pc, summarize_tail, CrossingEstimate, CrossingSetup, CrossingThresholds, TailSample, TailSetup,
    MAX_CENSORING,
};
use jmperc::process::Seed;
use jmperc::stats::EstimateCI;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Command, ExperimentConfig, Metric, Mode};
use crate::error::Result;
use crate::output::{sidecar, write_csv, write_json, Estimate};
use crate::render::render_svg;

/// Result of an acceptance check run with `--check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    /// One-line human summary.
    pub summary: String,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn execute(cfg: &ExperimentConfig) -> Result<RunReport> {
    match cfg.command() {
        Command::Cross => run_cross(cfg),
        Command::Tail => run_tail(cfg),
        Command::Pc => run_pc(cfg),
        Command::Couple => run_couple(cfg),
        Command::Faces => run_faces(cfg),
        Command::Hilhorst => run_hilhorst(cfg),
        Command::Render => run_render(cfg),
    }
}

fn par_trials<T: Send>(n: u64, f: impl Fn(u64) -> jmperc::error::Result<T> + Sync + Send) -> Result<Vec<T>> {
    Ok((0..n)
        .into_par_iter()
        .map(f)
        .collect::<jmperc::error::Result<Vec<T>>>()?)
}

// ---------------------------------------------------------------------------
// cross

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub trial_index: u64,
    pub p: f64,
    pub rho: f64,
    pub s: f64,
    pub metric: Metric,
    #[serde(rename = "Hb")]
    pub hb: bool,
    #[serde(rename = "Vw")]
    pub vw: bool,
    pub certified: bool,
    pub depth: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLevelSummary {
    pub p: f64,
    pub hb: Estimate,
    pub vw_count: u64,
    pub uncertified: u64,
    pub uncertified_fraction: f64,
    pub duality_failures: u64,
    pub boundary_suspect: u64,
}

impl CrossLevelSummary {
    pub fn from_estimate(e: &CrossingEstimate) -> Self {
        CrossLevelSummary {
            p: e.p,
            hb: e.hb.into(),
            vw_count: e.vw_count,
            uncertified: e.uncertified,
            uncertified_fraction: e.uncertified_fraction(),
            duality_failures: e.duality_failures,
            boundary_suspect: e.boundary_suspect,
        }
    }

    /// Recompute from CSV rows of one level (boundary flags are not in the CSV).
    pub fn from_rows(p: f64, rows: &[CrossRow]) -> Self {
        let n = rows.len() as u64;
        let count = |f: &dyn Fn(&CrossRow) -> bool| rows.iter().filter(|r| f(r)).count() as u64;
        let uncertified = count(&|r| !r.certified);
        CrossLevelSummary {
            p,
            hb: EstimateCI::bernoulli(count(&|r| r.hb), n).into(),
            vw_count: count(&|r| r.vw),
            uncertified,
            uncertified_fraction: uncertified as f64 / n as f64,
            duality_failures: count(&|r| r.certified && r.hb == r.vw),
            boundary_suspect: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSummary {
    pub levels: Vec<CrossLevelSummary>,
}

pub fn cross_setup(cfg: &ExperimentConfig) -> CrossingSetup {
    let mut st = CrossingSetup::new(cfg.metric(), cfg.rho, cfg.s, cfg.seed);
    st.intensity = cfg.intensity;
    st.a = cfg.a;
    st
}

/// Per-trial thresholds, refined until every requested level is certified.
pub fn cross_thresholds(cfg: &ExperimentConfig, levels: &[f64]) -> Result<Vec<CrossingThresholds>> {
    let st = cross_setup(cfg);
    st.validate()?;
    par_trials(cfg.trials, |i| st.trial_thresholds(i, levels))
}

pub fn cross_rows(cfg: &ExperimentConfig, th: &[CrossingThresholds]) -> Vec<CrossRow> {
    let mut rows = Vec::with_capacity(th.len() * cfg.p.len());
    for (i, t) in th.iter().enumerate() {
        for &p in &cfg.p {
            let c = t.at(p);
            rows.push(CrossRow {
                trial_index: i as u64,
                p,
                rho: cfg.rho,
                s: cfg.s,
                metric: cfg.metric,
                hb: c.hb,
                vw: c.vw,
                certified: c.certified,
                depth: c.depth,
                seed: cfg.seed,
            });
        }
    }
    rows
}

pub fn run_cross(cfg: &ExperimentConfig) -> Result<RunReport> {
    let th = cross_thresholds(cfg, &cfg.p)?;
    let rows = cross_rows(cfg, &th);
    let summary = CrossSummary {
        levels: cfg
            .p
            .iter()
            .map(|&p| CrossLevelSummary::from_estimate(&CrossingEstimate::from_thresholds(p, &th)))
            .collect(),
    };
    let out = cfg.out_path();
    let summary_path = sidecar(&out, "summary.json");
    write_csv(&out, cfg, &rows)?;
    write_json(&summary_path, cfg, &summary)?;

    let mut checks = Vec::new();
    for l in &summary.levels {
        checks.push(Check::new(
            format!("duality p={}", l.p),
            l.duality_failures == 0 && l.uncertified_fraction < 0.01,
            format!(
                "{} failures, uncertified {:.4}",
                l.duality_failures, l.uncertified_fraction
            ),
        ));
        let e = l.hb;
        if l.p == 0.5 && cfg.rho == 1.0 {
            checks.push(Check::new(
                "self-duality",
                (e.estimate - 0.5).abs() <= 3.0 * e.stderr,
                format!("f = {:.4} +- {:.4}", e.estimate, e.stderr),
            ));
        } else if l.p == 0.0 || l.p == 1.0 {
            checks.push(Check::new(
                format!("trivial level p={}", l.p),
                e.estimate == l.p,
                format!("f = {}", e.estimate),
            ));
        }
    }
    let line = summary
        .levels
        .iter()
        .map(|l| format!("p={} f={:.4}+-{:.4}", l.p, l.hb.estimate, l.hb.stderr))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(RunReport {
        files: vec![out, summary_path],
        checks,
        summary: line,
    })
}

// ---------------------------------------------------------------------------
// tail

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCsvRow {
    pub n: usize,
    pub survival: f64,
    pub stderr: f64,
    pub censored_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailTrialRow {
    pub trial_index: u64,
    pub count: usize,
    pub area: f64,
    pub diameter: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n_lo: usize,
    pub n_hi: usize,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Per-trial cluster records with their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub records: Vec<TailTrialRow>,
    /// Censoring frequency.
    pub theta: Estimate,
    /// Mean origin cluster size; a lower bound when `chi_censored`.
    pub chi: Estimate,
    pub chi_censored: bool,
}

impl TrialStats {
    pub fn from_records(records: Vec<TailTrialRow>) -> Self {
        let n = records.len() as u64;
        let censored = records.iter().filter(|r| r.censored).count() as u64;
        let sizes: Vec<f64> = records.iter().map(|r| r.count as f64).collect();
        TrialStats {
            theta: EstimateCI::bernoulli(censored, n).into(),
            chi: EstimateCI::mean_of(&sizes).into(),
            chi_censored: censored > 0,
            records,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub scale: f64,
    pub theta: Estimate,
    pub chi: Estimate,
    pub chi_censored: bool,
    pub censoring_rate: f64,
    pub fit: Option<SlopeSummary>,
}

pub fn tail_setup(cfg: &ExperimentConfig) -> TailSetup {
    let t = &cfg.tail;
    let mut s = TailSetup::new(cfg.level(), cfg.metric(), cfg.trials, cfg.seed);
    s.max_n = t.max_n;
    s.scale = t.scale;
    s.intensity = cfg.intensity;
    s.a = cfg.a;
    s.angular_budget = t.angular_budget;
    s.area_step = t.area_step;
    s
}

/// Tail samples, retried once on a window 1.5 times larger when censoring
/// exceeds the limit. Returns the samples and the window side used.
pub fn tail_samples(cfg: &ExperimentConfig) -> Result<(Vec<TailSample>, f64)> {
    let mut setup = tail_setup(cfg);
    setup.validate()?;
    let mut samples = par_trials(setup.trials, |i| setup.trial(i))?;
    let censored = samples.iter().filter(|s| s.censored).count() as f64;
    if censored / samples.len() as f64 > MAX_CENSORING {
        setup.scale *= 1.5;
        samples = par_trials(setup.trials, |i| setup.trial(i))?;
    }
    Ok((samples, setup.scale))
}

pub fn run_tail(cfg: &ExperimentConfig) -> Result<RunReport> {
    let (samples, scale) = tail_samples(cfg)?;
    let report = summarize_tail(&samples, cfg.tail.max_n, scale, cfg.tail.bootstrap, cfg.seed);
    let rows: Vec<TailCsvRow> = report
        .rows
        .iter()
        .map(|r| TailCsvRow {
            n: r.n,
            survival: r.survival,
            stderr: r.stderr,
            censored_count: r.censored_count,
        })
        .collect();
    let records: Vec<TailTrialRow> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| TailTrialRow {
            trial_index: i as u64,
            count: s.count,
            area: s.area,
            diameter: s.diameter,
            censored: s.censored,
        })
        .collect();
    let stats = TrialStats::from_records(records);
    let summary = TailSummary {
        scale,
        theta: stats.theta,
        chi: stats.chi,
        chi_censored: stats.chi_censored,
        censoring_rate: report.censoring_rate(),
        fit: report.fit.map(|f| SlopeSummary {
            slope: f.fit.slope,
            intercept: f.fit.intercept,
            slope_stderr: f.fit.slope_stderr,
            n_lo: f.n_lo,
            n_hi: f.n_hi,
            ci_lo: f.ci_lo,
            ci_hi: f.ci_hi,
        }),
    };
    let out = cfg.out_path();
    let trials_path = sidecar(&out, "trials.csv");
    let summary_path = sidecar(&out, "summary.json");
    write_csv(&out, cfg, &rows)?;
    write_csv(&trials_path, cfg, &stats.records)?;
    write_json(&summary_path, cfg, &summary)?;

    let mut checks = vec![Check::new(
        "censoring",
        summary.censoring_rate < MAX_CENSORING,
        format!("rate {:.4}", summary.censoring_rate),
    )];
    if cfg.level() < 0.5 {
        let pass = summary.fit.as_ref().is_some_and(|f| f.slope < 0.0 && f.ci_hi < 0.0);
        checks.push(Check::new("negative slope", pass, format!("{:?}", summary.fit)));
    }
    Ok(RunReport {
        files: vec![out, trials_path, summary_path],
        checks,
        summary: format!(
            "chi {:.4} theta {:.4} slope {:?}",
            summary.chi.estimate,
            summary.theta.estimate,
            summary.fit.as_ref().map(|f| f.slope)
        ),
    })
}

// ---------------------------------------------------------------------------
// pc

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcRow {
    pub p: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub trial_index: u64,
    pub hb8: f64,
    pub hb4: f64,
    pub vw4: f64,
    pub depth: u32,
    pub boundary_suspect: bool,
}

impl ThresholdRow {
    pub fn thresholds(&self) -> CrossingThresholds {
        CrossingThresholds {
            hb8: self.hb8,
            hb4: self.hb4,
            vw4: self.vw4,
            depth: self.depth,
            boundary_suspect: self.boundary_suspect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcSummary {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub contains_half: bool,
    pub tolerance: f64,
}

pub fn run_pc(cfg: &ExperimentConfig) -> Result<RunReport> {
    let th = cross_thresholds(cfg, &[])?;
    let b = bracket_pc(&th, cfg.pc.tolerance)?;
    let rows: Vec<PcRow> = b
        .probes
        .iter()
        .map(|(p, e)| PcRow {
            p: *p,
            estimate: e.estimate,
            stderr: e.stderr,
            trials: e.trials,
        })
        .collect();
    let trials: Vec<ThresholdRow> = th
        .iter()
        .enumerate()
        .map(|(i, t)| ThresholdRow {
            trial_index: i as u64,
            hb8: t.hb8,
            hb4: t.hb4,
            vw4: t.vw4,
            depth: t.depth,
            boundary_suspect: t.boundary_suspect,
        })
        .collect();
    let summary = PcSummary {
        lo: b.lo,
        hi: b.hi,
        width: b.width(),
        contains_half: b.contains(0.5),
        tolerance: cfg.pc.tolerance,
    };
    let out = cfg.out_path();
    let trials_path = sidecar(&out, "trials.csv");
    let summary_path = sidecar(&out, "summary.json");
    write_csv(&out, cfg, &rows)?;
    write_csv(&trials_path, cfg, &trials)?;
    write_json(&summary_path, cfg, &summary)?;
    Ok(RunReport {
        files: vec![out, trials_path, summary_path],
        checks: vec![Check::new(
            "bracket contains 1/2",
            summary.contains_half,
            format!("[{:.4}, {:.4}]", summary.lo, summary.hi),
        )],
        summary: format!("p_c in [{:.4}, {:.4}]", b.lo, b.hi),
    })
}

// ---------------------------------------------------------------------------
// couple

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyJson {
    pub grid_points: u64,
    pub containment_violations: u64,
    pub unions: u64,
    pub boundary_points: u64,
    pub boundary_violations: u64,
    pub ambiguous_boundary: u64,
    pub oversized_unions: u64,
    pub max_union_diameter: f64,
}

impl From<VerifyReport> for VerifyJson {
    fn from(v: VerifyReport) -> Self {
        VerifyJson {
            grid_points: v.grid_points,
            containment_violations: v.containment_violations,
            unions: v.unions,
            boundary_points: v.boundary_points,
            boundary_violations: v.boundary_violations,
            ambiguous_boundary: v.ambiguous_boundary,
            oversized_unions: v.oversized_unions,
            max_union_diameter: v.max_union_diameter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftJson {
    pub checked: u64,
    pub failures: u64,
    pub eta: f64,
    pub delta_prime: f64,
    pub resample_checked: u64,
    pub resample_flips: u64,
}

impl From<RobustShiftReport> for ShiftJson {
    fn from(r: RobustShiftReport) -> Self {
        ShiftJson {
            checked: r.checked,
            failures: r.failures,
            eta: r.eta,
            delta_prime: r.delta_prime,
            resample_checked: r.resample_checked,
            resample_flips: r.resample_flips,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupleRun {
    pub run: u64,
    pub fallback: bool,
    pub b1: bool,
    pub b2: bool,
    pub b3: Option<bool>,
    pub b4: bool,
    pub base: usize,
    pub low: usize,
    pub potential: usize,
    pub defects: usize,
    pub clusters: usize,
    pub largest_cluster: usize,
    pub q_fallbacks: usize,
    pub overlap_fallbacks: usize,
    pub forced: usize,
    pub redrawn: usize,
    pub p1_plus: usize,
    pub p2_plus: usize,
    pub monotone: bool,
    /// Crude-state counts `[bad, neutral, good]` of level 1.
    pub crude: Option<[u64; 3]>,
    pub verify: Option<VerifyJson>,
    pub shift: Option<ShiftJson>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoupleSummary {
    pub runs: u64,
    pub fallback_runs: u64,
    pub non_fallback_runs: u64,
    pub monotone_runs: u64,
    pub monotone_non_fallback: u64,
    pub containment_violations: u64,
    pub boundary_violations: u64,
    pub boundary_points: u64,
    pub oversized_unions: u64,
    pub shift_checked: u64,
    pub shift_failures: u64,
}

impl CoupleSummary {
    pub fn from_runs(runs: &[CoupleRun]) -> Self {
        let mut s = CoupleSummary {
            runs: runs.len() as u64,
            ..Default::default()
        };
        for r in runs {
            s.fallback_runs += u64::from(r.fallback);
            s.non_fallback_runs += u64::from(!r.fallback);
            s.monotone_runs += u64::from(r.monotone);
            s.monotone_non_fallback += u64::from(r.monotone && !r.fallback);
            if let Some(v) = r.verify {
                s.containment_violations += v.containment_violations;
                s.boundary_violations += v.boundary_violations;
                s.boundary_points += v.boundary_points;
                s.oversized_unions += v.oversized_unions;
            }
            if let Some(sh) = r.shift {
                s.shift_checked += sh.checked;
                s.shift_failures += sh.failures;
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupleDocument {
    pub runs: Vec<CoupleRun>,
    pub summary: CoupleSummary,
}

pub fn couple_run(cfg: &ExperimentConfig, run: u64) -> jmperc::error::Result<CoupleRun> {
    let params = cfg.coupling_params(run);
    let inp = CouplingInputs::sample(&params, run)?;
    let out = crossed_coupling(&inp)?;
    let crude = match cfg.coupling.delta {
        Some(d) => {
            let n = (cfg.s / d).round().max(1.0);
            let black: Vec<Seed> = out.p1_plus(&inp).copied().collect();
            let white: Vec<Seed> = out.p1_minus(&inp).copied().collect();
            Some(crude_states(&black, &white, cfg.s, cfg.s / n)?.counts())
        }
        None => None,
    };
    let verify = if out.fallback {
        None
    } else {
        Some(verify_global_event(&inp, &out, cfg.coupling.verify_step)?.into())
    };
    let shift = if cfg.coupling.shift_points > 0 {
        Some(robust_shift_run(&params, cfg.coupling.eps, run, cfg.coupling.shift_points)?.into())
    } else {
        None
    };
    let actions = |a: CrossAction| out.records.iter().filter(|r| r.action == a).count();
    Ok(CoupleRun {
        run,
        fallback: out.fallback,
        b1: out.bad.b1,
        b2: out.bad.b2,
        b3: out.bad.b3,
        b4: out.bad.b4,
        base: inp.base.len(),
        low: inp.low.len(),
        potential: inp.potential.len(),
        defects: out.defect_count(),
        clusters: out.clusters.len(),
        largest_cluster: out.clusters.iter().map(|c| c.members.len()).max().unwrap_or(0),
        q_fallbacks: out.q_fallbacks,
        overlap_fallbacks: out.overlap_fallbacks,
        forced: actions(CrossAction::Forced),
        redrawn: actions(CrossAction::Redrawn),
        p1_plus: out.p1_plus(&inp).count(),
        p2_plus: out.p2_plus(&inp).count(),
        monotone: out.monotone(),
        crude,
        verify,
        shift,
    })
}

pub fn run_couple(cfg: &ExperimentConfig) -> Result<RunReport> {
    let runs = par_trials(cfg.trials, |r| couple_run(cfg, r))?;
    let summary = CoupleSummary::from_runs(&runs);
    let out = cfg.out_path();
    let doc = CoupleDocument { runs, summary };
    write_json(&out, cfg, &doc)?;
    let s = &doc.summary;
    let mut checks = vec![
        Check::new(
            "monotone inclusion",
            s.monotone_runs == s.runs,
            format!(
                "{} of {} runs ({} non-fallback)",
                s.monotone_runs, s.runs, s.non_fallback_runs
            ),
        ),
        Check::new(
            "defect detour",
            s.containment_violations == 0 && s.boundary_violations == 0,
            format!(
                "{} containment, {} boundary violations over {} non-fallback runs",
                s.containment_violations, s.boundary_violations, s.non_fallback_runs
            ),
        ),
    ];
    if cfg.coupling.shift_points > 0 {
        checks.push(Check::new(
            "robust from shift",
            s.shift_failures == 0,
            format!("{} of {} points fail", s.shift_failures, s.shift_checked),
        ));
    }
    Ok(RunReport {
        files: vec![out],
        checks,
        summary: format!("{} runs, {} fallback", s.runs, s.fallback_runs),
    })
}

// ---------------------------------------------------------------------------
// faces and hilhorst

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRow {
    pub k: usize,
    pub survival: f64,
    pub stderr: f64,
    pub trials: u64,
    pub metric: Metric,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceTrialRow {
    pub trial_index: u64,
    pub k: usize,
    pub unbounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDiffJson {
    pub k: usize,
    pub diff: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSummary {
    pub mean: Estimate,
    pub unbounded: u64,
    pub nonincreasing: bool,
    pub eventually_decreasing: bool,
    pub log_diffs: Vec<LogDiffJson>,
}

pub fn face_samples(cfg: &ExperimentConfig, mode: FaceMode) -> Result<Vec<FaceCountSample>> {
    let settings = cfg.face_settings();
    par_trials(cfg.trials, |i| face_trial(cfg.metric(), mode, &settings, cfg.seed, i))
}

fn face_trial_rows(samples: &[FaceCountSample]) -> Vec<FaceTrialRow> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| FaceTrialRow {
            trial_index: i as u64,
            k: s.k,
            unbounded: s.unbounded,
        })
        .collect()
}

pub fn run_faces(cfg: &ExperimentConfig) -> Result<RunReport> {
    let f = &cfg.faces;
    let mode = f.mode.0;
    let samples = face_samples(cfg, mode)?;
    let tail = face_tail_estimate(&samples, f.k_lo, f.k_hi, f.min_hits);
    let rows: Vec<FaceRow> = tail
        .rows
        .iter()
        .map(|r| FaceRow {
            k: r.k,
            survival: r.survival.estimate,
            stderr: r.survival.stderr,
            trials: r.survival.trials,
            metric: cfg.metric,
            mode: f.mode,
        })
        .collect();
    let summary = FaceSummary {
        mean: tail.mean.into(),
        unbounded: tail.unbounded,
        nonincreasing: tail.nonincreasing(),
        eventually_decreasing: tail.eventually_decreasing(),
        log_diffs: tail
            .log_diffs
            .iter()
            .map(|d| LogDiffJson {
                k: d.k,
                diff: d.diff,
                stderr: d.stderr,
            })
            .collect(),
    };
    let out = cfg.out_path();
    let trials_path = sidecar(&out, "trials.csv");
    let summary_path = sidecar(&out, "summary.json");
    write_csv(&out, cfg, &rows)?;
    write_csv(&trials_path, cfg, &face_trial_rows(&samples))?;
    write_json(&summary_path, cfg, &summary)?;
    let checks = match mode {
        FaceMode::ThreeD => vec![Check::new(
            "face tail",
            summary.nonincreasing && summary.eventually_decreasing,
            format!(
                "nonincreasing {}, eventually decreasing {}",
                summary.nonincreasing, summary.eventually_decreasing
            ),
        )],
        FaceMode::PlanarVoronoi => vec![Check::new(
            "planar mean",
            (summary.mean.estimate - 6.0).abs() <= 0.05,
            format!("mean {:.4}", summary.mean.estimate),
        )],
    };
    Ok(RunReport {
        files: vec![out, trials_path, summary_path],
        checks,
        summary: format!("mean {:.4} +- {:.4}", summary.mean.estimate, summary.mean.stderr),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HilhorstCsvRow {
    pub k: usize,
    pub hits_k: u64,
    pub hits_next: u64,
    pub ratio: f64,
    pub stderr: f64,
    pub target: f64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HilhorstSummary {
    pub trials: u64,
    pub dropped: Vec<usize>,
    pub mean: Estimate,
}

pub fn run_hilhorst(cfg: &ExperimentConfig) -> Result<RunReport> {
    let f = &cfg.faces;
    let samples = face_samples(cfg, FaceMode::PlanarVoronoi)?;
    let table = hilhorst_ratio_check(&samples, &f.ks, f.min_hits);
    let rows: Vec<HilhorstCsvRow> = table
        .rows
        .iter()
        .map(|r| HilhorstCsvRow {
            k: r.k,
            hits_k: r.hits_k,
            hits_next: r.hits_next,
            ratio: r.ratio,
            stderr: r.stderr,
            target: r.target,
            relative_deviation: r.relative_deviation,
        })
        .collect();
    let ks: Vec<f64> = samples.iter().map(|s| s.k as f64).collect();
    let summary = HilhorstSummary {
        trials: table.trials,
        dropped: table.dropped.clone(),
        mean: EstimateCI::mean_of(&ks).into(),
    };
    for k in &summary.dropped {
        eprintln!("k = {k} dropped: fewer than {} hits", f.min_hits);
    }
    let out = cfg.out_path();
    let trials_path = sidecar(&out, "trials.csv");
    let summary_path = sidecar(&out, "summary.json");
    write_csv(&out, cfg, &rows)?;
    write_csv(&trials_path, cfg, &face_trial_rows(&samples))?;
    write_json(&summary_path, cfg, &summary)?;
    let at6 = table.row(6);
    let checks = vec![Check::new(
        "ratio at k=6",
        at6.is_some_and(|r| r.relative_deviation.abs() <= 0.15),
        match at6 {
            Some(r) => format!(
                "{:.4} vs {:.4} ({:+.1}%)",
                r.ratio,
                r.target,
                100.0 * r.relative_deviation
            ),
            None => "k = 6 not in table".into(),
        },
    )];
    Ok(RunReport {
        files: vec![out, trials_path, summary_path],
        checks,
        summary: rows
            .iter()
            .map(|r| format!("k={} ratio {:.4} target {:.4}", r.k, r.ratio, r.target))
            .collect::<Vec<_>>()
            .join(", "),
    })
}

// ---------------------------------------------------------------------------
// render

pub fn run_render(cfg: &ExperimentConfig) -> Result<RunReport> {
    let svg = render_svg(cfg)?;
    let out = cfg.out_path();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&out, &svg.text)?;
    Ok(RunReport {
        files: vec![out],
        checks: Vec::new(),
        summary: format!("{} seeds, {} cells drawn", svg.seeds, svg.cells),
    })
}
