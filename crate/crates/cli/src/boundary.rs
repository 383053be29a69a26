//! Decision-boundary lattices over the latent plane of a synthetic task,
//! their 0.5 level set, and a static SVG rendering.

use std::collections::HashMap;
use std::fmt::Write as _;

use vatlab::data::EmbeddingMap;
use vatlab::numerics::softmax;
use vatlab::{Error, Mlp, Tensor};

/// `p(y = 1 | x)` sampled on a regular `nu × nv` lattice; index `j·nu + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryGrid {
    pub u: (f64, f64),
    pub v: (f64, f64),
    pub nu: usize,
    pub nv: usize,
    pub values: Vec<f64>,
}

/// Axis-aligned bounds of `points`, widened by `pad` times the extent on
/// each side.
pub fn padded_bounds(points: &[[f64; 2]], pad: f64) -> ((f64, f64), (f64, f64)) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let widen = |k: usize| {
        let ext = (hi[k] - lo[k]).max(1e-9);
        (lo[k] - pad * ext, hi[k] + pad * ext)
    };
    (widen(0), widen(1))
}

impl BoundaryGrid {
    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        let lerp = |(a, b): (f64, f64), k: usize, n: usize| a + (b - a) * k as f64 / (n - 1) as f64;
        [lerp(self.u, i, self.nu), lerp(self.v, j, self.nv)]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nu + i]
    }

    /// Probes `net` at every lattice point lifted through `embedding`.
    pub fn evaluate(
        net: &Mlp,
        embedding: &EmbeddingMap,
        u: (f64, f64),
        v: (f64, f64),
        resolution: usize,
    ) -> Result<Self, Error> {
        if resolution < 2 {
            return Err(Error::Config("lattice resolution must be >= 2".into()));
        }
        let mut grid = BoundaryGrid {
            u,
            v,
            nu: resolution,
            nv: resolution,
            values: Vec::with_capacity(resolution * resolution),
        };
        let coords: Vec<[f64; 2]> = (0..resolution)
            .flat_map(|j| (0..resolution).map(move |i| (i, j)))
            .map(|(i, j)| grid.coord(i, j))
            .collect();
        for chunk in coords.chunks(4096) {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|&p| embedding.embed_point(p)).collect();
            let probs = softmax(&net.logits(&Tensor::from_rows(&rows)?)?)?;
            grid.values.extend(probs.row_iter().map(|r| r[1]));
        }
        Ok(grid)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,v,p1\n");
        for j in 0..self.nv {
            for i in 0..self.nu {
                let [u, v] = self.coord(i, j);
                let _ = writeln!(s, "{u},{v},{}", self.value(i, j));
            }
        }
        s
    }

    /// Marching squares at `level`, joined into polylines. Saddle cells are
    /// resolved by the mean of their four corners.
    pub fn contours(&self, level: f64) -> Vec<Vec<[f64; 2]>> {
        // an edge is keyed by its lower-left lattice point and direction
        type Edge = (usize, usize, bool);
        let above = |i: usize, j: usize| self.value(i, j) > level;
        let point = |(i, j, horizontal): Edge| -> [f64; 2] {
            let (i2, j2) = if horizontal { (i + 1, j) } else { (i, j + 1) };
            let (a, b) = (self.value(i, j), self.value(i2, j2));
            let t = (level - a) / (b - a);
            let (p, q) = (self.coord(i, j), self.coord(i2, j2));
            [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
        };
        let mut segments: Vec<(Edge, Edge)> = Vec::new();
        for j in 0..self.nv.saturating_sub(1) {
            for i in 0..self.nu.saturating_sub(1) {
                let bottom = (i, j, true);
                let right = (i + 1, j, false);
                let top = (i, j + 1, true);
                let left = (i, j, false);
                let case = usize::from(above(i, j))
                    | usize::from(above(i + 1, j)) << 1
                    | usize::from(above(i + 1, j + 1)) << 2
                    | usize::from(above(i, j + 1)) << 3;
                let centre_above = (self.value(i, j)
                    + self.value(i + 1, j)
                    + self.value(i + 1, j + 1)
                    + self.value(i, j + 1))
                    / 4.0
                    > level;
                match case {
                    0 | 15 => {}
                    5 | 10 => {
                        // corners a, c above (5) or b, d above (10)
                        if (case == 5) == centre_above {
                            segments.push((bottom, right));
                            segments.push((top, left));
                        } else {
                            segments.push((left, bottom));
                            segments.push((right, top));
                        }
                    }
                    _ => {
                        let crossing: Vec<Edge> = [
                            (bottom, (case & 1 != 0) != (case & 2 != 0)),
                            (right, (case & 2 != 0) != (case & 4 != 0)),
                            (top, (case & 4 != 0) != (case & 8 != 0)),
                            (left, (case & 8 != 0) != (case & 1 != 0)),
                        ]
                        .into_iter()
                        .filter(|(_, c)| *c)
                        .map(|(e, _)| e)
                        .collect();
                        segments.push((crossing[0], crossing[1]));
                    }
                }
            }
        }

        let mut at: HashMap<Edge, Vec<usize>> = HashMap::new();
        for (k, (a, b)) in segments.iter().enumerate() {
            at.entry(*a).or_default().push(k);
            at.entry(*b).or_default().push(k);
        }
        let mut used = vec![false; segments.len()];
        let walk = |start: usize, from: Edge, used: &mut Vec<bool>| {
            let mut line = vec![from];
            let mut seg = start;
            let mut cur = from;
            loop {
                used[seg] = true;
                let (a, b) = segments[seg];
                let next = if a == cur { b } else { a };
                line.push(next);
                cur = next;
                match at[&cur].iter().find(|&&s| !used[s]) {
                    Some(&s) => seg = s,
                    None => break,
                }
            }
            line
        };
        let mut lines = Vec::new();
        // open chains start at an edge touched by one segment
        let mut starts: Vec<(Edge, usize)> = at
            .iter()
            .filter(|(_, s)| s.len() == 1)
            .map(|(e, s)| (*e, s[0]))
            .collect();
        starts.sort_unstable();
        for (edge, seg) in starts {
            if !used[seg] {
                lines.push(walk(seg, edge, &mut used));
            }
        }
        for seg in 0..segments.len() {
            if !used[seg] {
                lines.push(walk(seg, segments[seg].0, &mut used));
            }
        }
        lines.into_iter().map(|l| l.into_iter().map(point).collect()).collect()
    }
}

pub struct Plot<'a> {
    pub grid: &'a BoundaryGrid,
    pub contours: &'a [Vec<[f64; 2]>],
    pub points: &'a [[f64; 2]],
    pub labels: &'a [usize],
    pub title: String,
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;
const HEADER: f64 = 28.0;

impl Plot<'_> {
    fn project(&self, p: [f64; 2]) -> (f64, f64) {
        let g = self.grid;
        let x = MARGIN + (p[0] - g.u.0) / (g.u.1 - g.u.0) * SIZE;
        let y = HEADER + MARGIN + (g.v.1 - p[1]) / (g.v.1 - g.v.0) * SIZE;
        (x, y)
    }

    pub fn to_svg(&self) -> String {
        let w = SIZE + 2.0 * MARGIN;
        let h = SIZE + 2.0 * MARGIN + HEADER;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, "<title>{}</title>", escape(&self.title));
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="13">{}</text>"#,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN}" y="{}" width="{SIZE}" height="{SIZE}" fill="none" stroke="#999"/>"##,
            HEADER + MARGIN
        );
        for line in self.contours {
            let pts: Vec<String> = line
                .iter()
                .map(|&p| {
                    let (x, y) = self.project(p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
        }
        for (p, &y) in self.points.iter().zip(self.labels) {
            let (x, yy) = self.project(*p);
            if y == 1 {
                let _ = writeln!(
                    s,
                    r##"<rect class="y1" x="{:.2}" y="{:.2}" width="8" height="8" fill="#d62728"/>"##,
                    x - 4.0,
                    yy - 4.0
                );
            } else {
                let _ = writeln!(
                    s,
                    r##"<circle class="y0" cx="{x:.2}" cy="{yy:.2}" r="4.5" fill="#1f77b4"/>"##
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from(nu: usize, nv: usize, f: impl Fn(f64, f64) -> f64) -> BoundaryGrid {
        let mut g = BoundaryGrid {
            u: (-1.0, 1.0),
            v: (-1.0, 1.0),
            nu,
            nv,
            values: Vec::new(),
        };
        for j in 0..nv {
            for i in 0..nu {
                let [u, v] = g.coord(i, j);
                g.values.push(f(u, v));
            }
        }
        g
    }

    #[test]
    fn flat_grid_has_no_contour() {
        assert!(grid_from(20, 20, |_, _| 0.5).contours(0.5).is_empty());
    }

    #[test]
    fn linear_field_gives_one_exact_line() {
        // p = 0.5 + 0.2·(u − 0.3); the level set is u = 0.3
        let g = grid_from(31, 17, |u, _| 0.5 + 0.2 * (u - 0.3));
        let lines = g.contours(0.5);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].len(), 17);
        for p in &lines[0] {
            assert!((p[0] - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_is_one_closed_loop_near_the_true_radius() {
        let g = grid_from(101, 101, |u, v| 1.0 / (1.0 + (4.0 * ((u * u + v * v).sqrt() - 0.5)).exp()));
        let lines = g.contours(0.5);
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert_eq!(l.first(), l.last());
        for p in l {
            assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 0.5).abs() < 2e-3);
        }
    }

    #[test]
    fn padding_widens_by_thirty_percent() {
        let ((u0, u1), (v0, v1)) = padded_bounds(&[[0.0, 0.0], [1.0, 2.0]], 0.3);
        assert!((u0 + 0.3).abs() < 1e-12 && (u1 - 1.3).abs() < 1e-12);
        assert!((v0 + 0.6).abs() < 1e-12 && (v1 - 2.6).abs() < 1e-12);
    }
}
