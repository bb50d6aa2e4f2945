use jmperc::geometry::{MetricKind, Point2, Rect};
use jmperc::percolation::CrossingSetup;
use jmperc::process::{PlanarWindow, Seed, SimDomain};
use jmperc::tessellation::{Colour, Tessellation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(metric: MetricKind, trial: u64) -> (Tessellation, Rect) {
    let setup = CrossingSetup::new(metric, 1.0, 10.0, 40 + trial);
    (setup.tessellation(trial, 0.5).unwrap(), setup.rect().unwrap())
}

fn uniform_in(rng: &mut ChaCha8Rng, r: &Rect) -> Point2 {
    Point2::new(
        r.x0 + r.width() * rng.random::<f64>(),
        r.y0 + r.height() * rng.random::<f64>(),
    )
}

#[test]
fn cells_are_star_shaped_about_their_centres() {
    for metric in [MetricKind::JohnsonMehl, MetricKind::L1Sum] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut failures = 0;
        for trial in 0..10 {
            let (t, r) = instance(metric, trial);
            for _ in 0..1000 {
                let x = uniform_in(&mut rng, &r);
                let (z, _) = t.winner(x).unwrap();
                let w = t.seed(z).w;
                for lambda in [0.25, 0.5, 0.75] {
                    if t.winner(w + (x - w) * lambda).unwrap().0 != z {
                        failures += 1;
                    }
                }
            }
        }
        assert_eq!(failures, 0, "{metric:?}");
    }
}

#[test]
fn euclidean_cells_are_convex() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = 0;
    let mut checked = 0;
    for trial in 0..10 {
        let (t, r) = instance(MetricKind::Euclidean3, trial);
        while checked < 1000 * (trial + 1) {
            let x = uniform_in(&mut rng, &r);
            let y = x + Point2::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2.0;
            let z = t.winner(x).unwrap().0;
            if t.winner(y).unwrap().0 != z {
                continue;
            }
            checked += 1;
            for lambda in [0.25, 0.5, 0.75] {
                if t.winner(x + (y - x) * lambda).unwrap().0 != z {
                    failures += 1;
                }
            }
        }
    }
    assert_eq!(failures, 0);
}

#[test]
fn robust_points_have_black_neighbourhoods() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for metric in MetricKind::ALL {
        let mut robust = 0;
        let mut trial = 0;
        while robust < 10_000 / 3 {
            let (t, r) = instance(metric, trial);
            trial += 1;
            for _ in 0..2000 {
                let x = uniform_in(&mut rng, &r);
                let eta = 0.5 * rng.random::<f64>();
                if !t.is_robustly_black(x, eta).unwrap() {
                    continue;
                }
                robust += 1;
                let mut tested = 0;
                while tested < 100 {
                    let v = Point2::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0) * (eta / 2.0);
                    if metric.slice_distance(v, Point2::default(), 0.0) > eta / 2.0 {
                        continue;
                    }
                    tested += 1;
                    assert_eq!(
                        t.colour_at(x + v).unwrap(),
                        Colour::Black,
                        "{metric:?} x={x:?} eta={eta}"
                    );
                }
            }
        }
    }
}

#[test]
fn power_diagram_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut queries = 0;
    for trial in 0..10 {
        let (t, r) = instance(MetricKind::Euclidean3, trial);
        for _ in 0..10_000 {
            let x = uniform_in(&mut rng, &r);
            let power = |z: &Seed| {
                let d = x - z.w;
                d.x * d.x + d.y * d.y + z.t * z.t
            };
            let best = t
                .seeds()
                .iter()
                .min_by(|a, b| power(a).total_cmp(&power(b)).then(a.id.cmp(&b.id)))
                .unwrap();
            assert_eq!(t.nearest_seed(x).unwrap().winner, best.id);
            queries += 1;
        }
    }
    assert_eq!(queries, 100_000);
}

#[test]
fn index_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for metric in MetricKind::ALL {
        for trial in 0..10 {
            let (t, _) = instance(metric, trial);
            let fp = t.domain().footprint();
            for _ in 0..1000 {
                let x = uniform_in(&mut rng, &fp.expand(1.0));
                let a = t.nearest_seed(x).unwrap();
                let b = t.nearest_linear(x).unwrap();
                assert_eq!(a, b, "{metric:?} at {x:?}");
            }
        }
    }
}

fn small_instance(metric: MetricKind, rng: &mut ChaCha8Rng) -> Tessellation {
    let fp = Rect::new(0.0, 5.0, 0.0, 5.0).unwrap();
    let n = rng.random_range(2..=30);
    let seeds = (0..n)
        .map(|i| Seed::new(i, uniform_in(rng, &fp), rng.random::<f64>() * 1.5, 0.5))
        .collect();
    let domain = SimDomain::PlanarWindow(PlanarWindow::new(fp, 0.0, 1.5).unwrap());
    Tessellation::new(domain, metric, seeds, 0.5).unwrap()
}

/// Boundary between the cells of `a` and `b` on the segment from `x` (in
/// `a`) to `y` (in `b`), if the first change of winner is directly to `b`.
fn confirm_transition(t: &Tessellation, x: Point2, y: Point2, a: u32, b: u32) -> bool {
    let (mut lo, mut hi) = (x, y);
    for _ in 0..60 {
        let m = (lo + hi) * 0.5;
        if t.winner(m).unwrap().0 == a {
            lo = m;
        } else {
            hi = m;
        }
    }
    t.winner(hi).unwrap().0 == b
}

#[test]
fn adjacency_edges_have_tied_witnesses_and_cover_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for metric in MetricKind::ALL {
        for _ in 0..10 {
            let t = small_instance(metric, &mut rng);
            let g = t.adjacency_graph(256, 0.02).unwrap();
            for &(a, b, w) in &g.edges {
                let (da, db) = (t.seed_distance(w, a), t.seed_distance(w, b));
                assert!((da - db).abs() <= 1e-6, "{metric:?} edge {a}-{b}: {da} vs {db}");
                let best = t.nearest_seed(w).unwrap().d1;
                assert!(da <= best + 1e-6 && db <= best + 1e-6);
            }
            let fp = t.domain().footprint();
            let n = 400;
            let h = fp.width() / n as f64;
            let c = |i: usize, j: usize| Point2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let win: Vec<u32> = (0..n * n).map(|k| t.winner(c(k % n, k / n)).unwrap().0).collect();
            for j in 0..n {
                for i in 0..n {
                    let a = win[j * n + i];
                    for (ni, nj) in [(i + 1, j), (i, j + 1)] {
                        if ni >= n || nj >= n {
                            continue;
                        }
                        let b = win[nj * n + ni];
                        if a != b && confirm_transition(&t, c(i, j), c(ni, nj), a, b) {
                            assert!(g.has_edge(a, b), "{metric:?}: grid edge {a}-{b} missing");
                        }
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn recolouring_never_whitens(seed in any::<u64>(), p in 0.0..1.0f64, q in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = small_instance(MetricKind::JohnsonMehl, &mut rng);
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let (a, b) = (t.recoloured(lo).unwrap(), t.recoloured(hi).unwrap());
        for id in 0..t.len() as u32 {
            prop_assert!(!a.is_black(id) || b.is_black(id));
        }
    }
}
