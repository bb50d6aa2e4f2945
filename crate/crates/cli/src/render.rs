//! SVG rendering of the tessellation restricted to `[0, s]^2`: one path per
//! cell traced by boundary probes, seeds drawn as dots.

use std::f64::consts::TAU;
use std::fmt::Write;

use jmperc::geometry::{Point2, Rect};
use jmperc::process::{sample_poisson, PlanarWindow, Seed, SimDomain};
use jmperc::rng::{purpose, stream};
use jmperc::tessellation::{CellProbe, Colour, ProbeOutcome, Tessellation};
use rand::Rng;

use crate::config::ExperimentConfig;
use crate::error::Result;

pub struct RenderedSvg {
    pub text: String,
    pub seeds: usize,
    pub cells: usize,
    /// Outline of each drawn cell with its seed, in plane coordinates.
    pub outlines: Vec<(u32, Vec<Point2>)>,
}

/// Seeds of the render: exactly `points` uniform seeds when set, otherwise a
/// Poisson sample.
pub fn render_seeds(cfg: &ExperimentConfig, window: &PlanarWindow) -> Result<Vec<Seed>> {
    let domain = SimDomain::PlanarWindow(*window);
    match cfg.render.points {
        Some(n) => {
            let mut rng = stream(cfg.seed, purpose::PROCESS, 0);
            let fp = window.footprint();
            Ok((0..n)
                .map(|i| {
                    let w = Point2::new(
                        fp.x0 + fp.width() * rng.random::<f64>(),
                        fp.y0 + fp.height() * rng.random::<f64>(),
                    );
                    let t = window.height_cap * rng.random::<f64>();
                    Seed::new(i as u32, w, t, rng.random::<f64>())
                })
                .collect())
        }
        None if window.height_cap > 0.0 => Ok(sample_poisson(&domain, cfg.intensity, cfg.seed, 0)?),
        None => Ok(Vec::new()),
    }
}

fn angle_of(c: Point2, x: Point2) -> f64 {
    let a = (x.y - c.y).atan2(x.x - c.x);
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

/// Polygon through the probe's boundary points; where two consecutive rays
/// both leave through the frame, the frame corners between them are added.
pub fn outline(probe: &CellProbe, frame: &Rect) -> Vec<Point2> {
    let c = probe.centre;
    let corners = [
        Point2::new(frame.x0, frame.y0),
        Point2::new(frame.x1, frame.y0),
        Point2::new(frame.x1, frame.y1),
        Point2::new(frame.x0, frame.y1),
    ];
    let n = probe.rays.len();
    let mut out = Vec::with_capacity(n + 4);
    for k in 0..n {
        let a = probe.rays[k];
        let b = probe.rays[(k + 1) % n];
        out.push(a.outcome.point());
        let exits = |o: &ProbeOutcome| matches!(o, ProbeOutcome::DomainExit { .. });
        if exits(&a.outcome) && exits(&b.outcome) {
            let (ta, mut tb) = (a.theta, b.theta);
            if tb <= ta {
                tb += TAU;
            }
            let mut between: Vec<(f64, Point2)> = corners
                .iter()
                .map(|&q| {
                    let mut t = angle_of(c, q);
                    if t < ta {
                        t += TAU;
                    }
                    (t, q)
                })
                .filter(|(t, _)| *t > ta && *t < tb)
                .collect();
            between.sort_by(|x, y| x.0.total_cmp(&y.0));
            out.extend(between.into_iter().map(|(_, q)| q));
        }
    }
    out
}

pub fn render_svg(cfg: &ExperimentConfig) -> Result<RenderedSvg> {
    let s = cfg.s;
    let frame = Rect::new(0.0, s, 0.0, s)?;
    let window = PlanarWindow::new(frame, 0.0, cfg.render.height)?;
    let seeds = render_seeds(cfg, &window)?;
    let n = seeds.len();
    let px = cfg.render.size_px as f64;
    let k = px / s;
    let to_px = |x: Point2| (x.x * k, (s - x.y) * k);

    let mut text = String::new();
    writeln!(
        text,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{px}" height="{px}" viewBox="0 0 {px} {px}">"#
    )
    .unwrap();
    writeln!(
        text,
        r#"<rect x="0" y="0" width="{px}" height="{px}" fill="white" stroke="black" stroke-width="1"/>"#
    )
    .unwrap();
    let mut outlines = Vec::new();
    if n > 0 {
        let t = Tessellation::new(SimDomain::PlanarWindow(window), cfg.metric(), seeds, cfg.level())?;
        let step = s / 200.0;
        text.push_str("<g id=\"cells\">\n");
        for id in 0..n as u32 {
            let Some(centre) = t.probe_centre(id, step) else {
                continue;
            };
            let probe = t.probe_cell(id, centre, cfg.render.rays);
            let poly = outline(&probe, &frame);
            let fill = match (cfg.render.fill, t.colour_of(id)) {
                (false, _) => "none",
                (true, Colour::Black) => "#404040",
                (true, Colour::White) => "#ffffff",
            };
            let mut d = String::new();
            for (i, &q) in poly.iter().enumerate() {
                let (x, y) = to_px(q);
                write!(d, "{}{x:.3},{y:.3} ", if i == 0 { "M" } else { "L" }).unwrap();
            }
            d.push('Z');
            writeln!(
                text,
                r##"<path id="cell-{id}" d="{d}" fill="{fill}" stroke="#808080" stroke-width="1"/>"##
            )
            .unwrap();
            outlines.push((id, poly));
        }
        text.push_str("</g>\n<g id=\"seeds\">\n");
        for z in t.seeds() {
            let (x, y) = to_px(z.w);
            writeln!(text, r##"<circle cx="{x:.3}" cy="{y:.3}" r="2" fill="#d03030"/>"##).unwrap();
        }
        text.push_str("</g>\n");
    }
    text.push_str("</svg>\n");
    Ok(RenderedSvg {
        text,
        seeds: n,
        cells: outlines.len(),
        outlines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Command, Overrides};

    fn cfg(points: Option<usize>) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            s: 10.0,
            ..Default::default()
        };
        c.render.points = points;
        c.render.size_px = 100;
        c.resolve(Command::Render, Overrides::default()).unwrap()
    }

    #[test]
    fn empty_process_draws_only_the_frame() {
        let r = render_svg(&cfg(Some(0))).unwrap();
        assert_eq!(r.cells, 0);
        assert!(r.text.contains("<rect"));
        assert!(!r.text.contains("<path"));
    }

    #[test]
    fn single_seed_fills_the_canvas() {
        let r = render_svg(&cfg(Some(1))).unwrap();
        assert_eq!(r.cells, 1);
        let poly = &r.outlines[0].1;
        // shoelace area of the outline equals the frame
        let area: f64 = (0..poly.len())
            .map(|i| {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            * 0.5;
        assert!((area - 100.0).abs() < 1e-6, "area {area}");
        assert_eq!(r.text.matches("<path").count(), 1);
    }
}
