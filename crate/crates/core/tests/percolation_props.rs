use jmperc::geometry::{MetricKind, Point2};
use jmperc::percolation::{crossing, Connectivity, CrossingSetup, CrossingThresholds, WinnerGrid};
use jmperc::tessellation::{Colour, Tessellation};

fn setup(metric: MetricKind, s: f64, seed: u64) -> CrossingSetup {
    CrossingSetup::new(metric, 1.0, s, seed)
}

#[test]
fn duality_at_three_levels() {
    let levels = [0.3, 0.5, 0.7];
    for metric in [MetricKind::JohnsonMehl, MetricKind::Euclidean3] {
        let st = setup(metric, 10.0, 101);
        let th: Vec<CrossingThresholds> = (0..1000).map(|i| st.trial_thresholds(i, &levels).unwrap()).collect();
        for p in levels {
            let samples: Vec<_> = th.iter().map(|t| t.at(p)).collect();
            let uncertified = samples.iter().filter(|s| !s.certified).count();
            let certified = samples.len() - uncertified;
            assert!(certified >= 1000 - 9, "{metric:?} p={p}: {uncertified} uncertified");
            assert!(samples.iter().filter(|s| s.certified).all(|s| s.hb != s.vw));
        }
        // Independent route: flood fill on the recoloured tessellation.
        for i in 0..60 {
            let t = st.tessellation(i, 0.5).unwrap();
            for p in levels {
                let flood = crossing(&t.recoloured(p).unwrap(), st.rect().unwrap(), st.h0()).unwrap();
                let fast = th[i as usize].at(p);
                if flood.certified && fast.certified {
                    assert_eq!((flood.hb, flood.vw), (fast.hb, fast.vw), "{metric:?} trial {i} p={p}");
                }
            }
        }
    }
}

#[test]
fn crossings_monotone_in_p_by_flood_fill() {
    let st = setup(MetricKind::JohnsonMehl, 10.0, 7);
    let r = st.rect().unwrap();
    for i in 0..200 {
        let t = st.tessellation(i, 0.5).unwrap();
        let grid = WinnerGrid::compute(&t, r, st.h0(), 0).unwrap();
        let hb: Vec<bool> = [0.2, 0.4, 0.5, 0.6, 0.8]
            .iter()
            .map(|&p| {
                grid.colours(&t.recoloured(p).unwrap())
                    .crosses_horizontally(Colour::Black, Connectivity::Eight)
            })
            .collect();
        for w in hb.windows(2) {
            assert!(!w[0] || w[1], "trial {i}: {hb:?}");
        }
    }
}

// Winners met along the segment a..b, found by bisection; thin cells that fall
// between pixel centres show up here.
fn segment_winners(t: &Tessellation, a: Point2, b: Point2, out: &mut Vec<u32>) {
    let wa = t.winner(a).unwrap().0;
    let wb = t.winner(b).unwrap().0;
    if wa == wb {
        return;
    }
    if (b - a).norm() < 1e-9 {
        out.push(wb);
        return;
    }
    let m = (a + b) * 0.5;
    segment_winners(t, a, m, out);
    segment_winners(t, m, b, out);
}

#[test]
fn crossing_paths_walk_the_adjacency_graph() {
    let mut spot_checked = 0;
    let mut steps = 0usize;
    let mut slips = 0usize;
    for metric in MetricKind::ALL {
        let st = setup(metric, 8.0, 55);
        let r = st.rect().unwrap();
        let mut trial = 0;
        let mut done = 0;
        while done < 34 {
            let t = st.tessellation(trial, 0.5).unwrap();
            trial += 1;
            let grid = WinnerGrid::compute(&t, r, st.h0(), 0).unwrap();
            let Some(path) = grid.colours(&t).horizontal_path(Colour::Black, Connectivity::Four) else {
                continue;
            };
            let g = t.adjacency_graph(64, 0.05).unwrap();
            let mut walk = vec![grid.winner(path[0].0, path[0].1)];
            for e in path.windows(2) {
                let (a, b) = (grid.centre(e[0].0, e[0].1), grid.centre(e[1].0, e[1].1));
                let before = walk.len();
                segment_winners(&t, a, b, &mut walk);
                steps += 1;
                // a white sliver between two black pixels is a raster slip
                if walk[before..].iter().any(|w| !t.is_black(*w)) {
                    slips += 1;
                }
            }
            walk.dedup();
            for e in walk.windows(2) {
                assert!(
                    g.has_edge(e[0], e[1]),
                    "{metric:?} trial {}: {} -> {} not adjacent",
                    trial - 1,
                    e[0],
                    e[1]
                );
            }
            done += 1;
        }
        spot_checked += done;
    }
    assert!(spot_checked >= 100);
    assert!((slips as f64) < 0.01 * steps as f64, "{slips} slips in {steps} steps");
}

#[test]
fn square_crossings_symmetric_at_half() {
    let st = setup(MetricKind::JohnsonMehl, 10.0, 909);
    let r = st.rect().unwrap();
    let n = 1000;
    let mut diffs = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let t = st.tessellation(i, 0.5).unwrap();
        let cg = WinnerGrid::compute(&t, r, st.h0(), 0).unwrap().colours(&t);
        let h = cg.crosses_horizontally(Colour::Black, Connectivity::Eight) as i32 as f64;
        let v = cg.crosses_vertically(Colour::Black, Connectivity::Eight) as i32 as f64;
        diffs.push(h - v);
    }
    let m = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    assert!(m.abs() < 3.0 * se.max(1e-12), "Hb - Vb = {m}, se {se}");
}
