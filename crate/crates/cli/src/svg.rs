//! Three-panel SVG in the layout of the reference figure: flow field with
//! noise centers, forward most probable paths against the deterministic
//! flow, and boundary value solutions between deterministic endpoints.
//!
//! Each trajectory is exactly one `<polyline>` and each noise center one
//! `<circle class="noise-center">`. In one dimension the panels show
//! `(t, x)` and the flow panel becomes a slope field.

use std::fmt::Write;

use mpflow::fields::VectorFieldSpec;
use mpflow::om::Path;

const PANEL: f64 = 320.0;
const MARGIN: f64 = 24.0;
const ARROWS: usize = 15;

pub struct Figure<'a> {
    pub title: String,
    pub dim: usize,
    pub horizon: f64,
    pub drift: Option<&'a VectorFieldSpec<f64>>,
    pub noise_centers: Vec<Vec<f64>>,
    pub deterministic: Vec<Path<f64>>,
    pub forward: Vec<Path<f64>>,
    pub bvp: Vec<Path<f64>>,
    pub targets: Vec<Vec<f64>>,
}

struct Frame {
    lo: (f64, f64),
    hi: (f64, f64),
}

impl Frame {
    fn map(&self, p: (f64, f64)) -> (f64, f64) {
        let w = PANEL - 2.0 * MARGIN;
        let sx = (p.0 - self.lo.0) / (self.hi.0 - self.lo.0);
        let sy = (p.1 - self.lo.1) / (self.hi.1 - self.lo.1);
        (MARGIN + sx * w, PANEL - MARGIN - sy * w)
    }
}

impl Figure<'_> {
    fn project(&self, t: f64, x: &[f64]) -> (f64, f64) {
        if self.dim == 1 {
            (t, x[0])
        } else {
            (x[0], x[1])
        }
    }

    fn frame(&self) -> Frame {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for p in self
            .deterministic
            .iter()
            .chain(&self.forward)
            .chain(&self.bvp)
        {
            pts.extend(
                p.times
                    .iter()
                    .zip(&p.points)
                    .map(|(&t, x)| self.project(t, x)),
            );
        }
        pts.extend(self.noise_centers.iter().map(|c| self.project(0.0, c)));
        pts.extend(self.targets.iter().map(|c| self.project(self.horizon, c)));
        pts.retain(|p| p.0.is_finite() && p.1.is_finite());
        if pts.is_empty() {
            return Frame {
                lo: (-1.0, -1.0),
                hi: (1.0, 1.0),
            };
        }
        let (mut lo, mut hi) = (pts[0], pts[0]);
        for p in &pts {
            lo = (lo.0.min(p.0), lo.1.min(p.1));
            hi = (hi.0.max(p.0), hi.1.max(p.1));
        }
        // square frame with 10% padding so both axes share a scale
        let span = (hi.0 - lo.0).max(hi.1 - lo.1).max(1e-9) * 1.2;
        let c = ((lo.0 + hi.0) / 2.0, (lo.1 + hi.1) / 2.0);
        Frame {
            lo: (c.0 - span / 2.0, c.1 - span / 2.0),
            hi: (c.0 + span / 2.0, c.1 + span / 2.0),
        }
    }

    pub fn render(&self) -> String {
        let frame = self.frame();
        let mut s = String::new();
        let width = 3.0 * PANEL;
        let height = PANEL + 30.0;
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
        );
        let _ = writeln!(s, r#"<title>{}</title>"#, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<rect width="{width}" height="{height}" fill="white"/>"#
        );
        let panels = ["flow field at t=0", "forward MPP", "boundary value MPP"];
        for (k, name) in panels.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<g id="panel-{k}" transform="translate({},30)">"#,
                k as f64 * PANEL
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="-10" text-anchor="middle" font-size="13" font-family="sans-serif">{name}</text>"#,
                PANEL / 2.0
            );
            let _ = writeln!(
                s,
                r##"<rect class="frame" x="{MARGIN}" y="{MARGIN}" width="{w}" height="{w}" fill="none" stroke="#999"/>"##,
                w = PANEL - 2.0 * MARGIN
            );
            match k {
                0 => self.flow_panel(&frame, &mut s),
                1 => {
                    self.polylines(&frame, &self.deterministic, "deterministic", "red", &mut s);
                    self.polylines(&frame, &self.forward, "mpp", "blue", &mut s);
                }
                _ => {
                    self.polylines(&frame, &self.bvp, "bvp", "blue", &mut s);
                    for c in &self.targets {
                        let (x, y) = frame.map(self.project(self.horizon, c));
                        let _ = writeln!(
                            s,
                            r#"<circle class="target" cx="{x:.2}" cy="{y:.2}" r="2" fill="red"/>"#
                        );
                    }
                }
            }
            s.push_str("</g>\n");
        }
        s.push_str("</svg>\n");
        s
    }

    fn polylines(
        &self,
        frame: &Frame,
        paths: &[Path<f64>],
        class: &str,
        color: &str,
        s: &mut String,
    ) {
        for p in paths {
            let pts: Vec<String> = p
                .times
                .iter()
                .zip(&p.points)
                .map(|(&t, x)| {
                    let (a, b) = frame.map(self.project(t, x));
                    format!("{a:.2},{b:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
                pts.join(" ")
            );
        }
    }

    fn flow_panel(&self, frame: &Frame, s: &mut String) {
        if let Some(drift) = self.drift {
            let mut arrows = Vec::new();
            for i in 0..ARROWS {
                for j in 0..ARROWS {
                    let a =
                        frame.lo.0 + (i as f64 + 0.5) / ARROWS as f64 * (frame.hi.0 - frame.lo.0);
                    let b =
                        frame.lo.1 + (j as f64 + 0.5) / ARROWS as f64 * (frame.hi.1 - frame.lo.1);
                    let (base, dir) = if self.dim == 1 {
                        // slope field of dx/dt = u(t, x)
                        ((a, b), (1.0, drift.value(a, &[b])[0]))
                    } else {
                        let mut x = vec![0.0; self.dim];
                        x[0] = a;
                        x[1] = b;
                        let u = drift.value(0.0, &x);
                        ((a, b), (u[0], u[1]))
                    };
                    arrows.push((base, dir));
                }
            }
            let cell = (frame.hi.0 - frame.lo.0) / ARROWS as f64;
            let longest = arrows
                .iter()
                .map(|(_, d)| d.0.hypot(d.1))
                .filter(|v| v.is_finite())
                .fold(0.0, f64::max);
            if longest > 0.0 {
                let scale = 0.8 * cell / longest;
                for ((a, b), (u, v)) in arrows {
                    if !(u.is_finite() && v.is_finite()) {
                        continue;
                    }
                    let (x0, y0) = frame.map((a, b));
                    let (x1, y1) = frame.map((a + scale * u, b + scale * v));
                    let _ = writeln!(
                        s,
                        r##"<line class="flow" x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="#555" stroke-width="0.8"/>"##
                    );
                }
            }
        }
        for c in &self.noise_centers {
            let (x, y) = frame.map(self.project(0.0, c));
            let _ = writeln!(
                s,
                r#"<circle class="noise-center" cx="{x:.2}" cy="{y:.2}" r="4" fill="green"/>"#
            );
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
