use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::{CurveLoop, Mesh, Point};
use crate::error::{Error, Result};

/// Ring spacing grows by this factor per ring away from the curve.
const GROWTH: f64 = 1.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshGenConfig {
    /// The domain is `[-half_width, half_width]^2`.
    pub half_width: f64,
    /// Target mesh size away from the curve.
    pub h: f64,
    pub radius: f64,
    pub segments: usize,
}

impl Default for MeshGenConfig {
    fn default() -> Self {
        MeshGenConfig { half_width: 10.0, h: 1.0, radius: 1.0, segments: 48 }
    }
}

impl MeshGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments < 8 {
            return Err(Error::Config(format!("segment count {} < 8", self.segments)));
        }
        if !(self.h > 0.0) {
            return Err(Error::Config(format!("mesh size h = {} must be positive", self.h)));
        }
        if !(self.radius > 0.0 && self.radius < self.half_width) {
            return Err(Error::Config(format!(
                "radius {} must lie in (0, half_width = {})",
                self.radius, self.half_width
            )));
        }
        Ok(())
    }
}

/// `count` points on a circle at angles `(2k + shift) π / count`, `shift`
/// being 0 or 1. Coordinates come from the angle reduced to the first
/// quadrant, so mirror images of points are exact negations and the
/// triangulation sees a bitwise symmetric cloud.
fn ring(points: &mut Vec<Point>, radius: f64, count: usize, shift: usize) {
    for k in 0..count {
        let mut m = 2 * k + shift;
        let (mut sx, mut sy) = (1.0, 1.0);
        if 2 * m > 2 * count {
            m = 2 * count - m;
            sy = -1.0;
        }
        if 2 * m > count {
            m = count - m;
            sx = -1.0;
        }
        let phi = PI * m as f64 / count as f64;
        points.push(Point::new(sx * radius * phi.cos(), sy * radius * phi.sin()));
    }
}

/// Point count of ring `k ≥ 2` closest to spacing `s`.
///
/// Counts are even so every ring is symmetric under both axis reflections.
/// Ring 2 gets a multiple of 8 (points on both axes and both diagonals);
/// later rings get `2 mod 4`, which with alternating phase puts a point on
/// the x axis or the y axis in turn and breaks the diagonal symmetry. Two
/// neighbouring rings then never form an isosceles trapezoid across a
/// symmetry line, whose exactly cocircular corners would let the Delaunay
/// tie-break spoil the mirror symmetry of the mesh.
/// The outermost ring, which meets the background lattice, gets a multiple
/// of 4 with zero phase so it has points on both axes.
fn symmetric_count(k: i32, rho: f64, s: f64, last: bool) -> usize {
    let ideal = 2.0 * PI * rho / s;
    if last {
        4 * (ideal / 4.0).round().max(1.0) as usize
    } else if k == 2 {
        8 * (ideal / 8.0).round().max(1.0) as usize
    } else {
        4 * ((ideal - 2.0) / 4.0).round().max(1.0) as usize + 2
    }
}

fn row_height(spacing: f64) -> f64 {
    spacing * 3f64.sqrt() / 2.0
}

/// Vertex cloud: the curve polygon first, then graded staggered rings on
/// both sides of it, then a triangular lattice filling the rest of the square.
fn point_cloud(cfg: &MeshGenConfig) -> Vec<Point> {
    let n = cfg.segments;
    let (r, h, half) = (cfg.radius, cfg.h, cfg.half_width);
    let s0 = 2.0 * PI * r / n as f64;
    let mut points = Vec::new();
    ring(&mut points, r, n, 0);

    // Inside the curve.
    let (mut rho, mut s_prev) = (r, s0);
    for k in 1.. {
        let s = (s0 * GROWTH.powi(k)).min(h);
        rho -= row_height(0.5 * (s_prev + s));
        if rho < 0.75 * s {
            break;
        }
        let count = if k == 1 { n } else { symmetric_count(k, rho, s, false) };
        if count < 5 {
            break;
        }
        ring(&mut points, rho, count, (k % 2) as usize);
        s_prev = s;
    }
    points.push(Point::zeros());

    // Outside the curve, until the spacing reaches h.
    let (mut rho, mut s_prev) = (r, s0);
    let mut last = (r, s0);
    for k in 1.. {
        let s = (s0 * GROWTH.powi(k)).min(h);
        rho += row_height(0.5 * (s_prev + s));
        if rho + s > half - 0.5 * h {
            break;
        }
        let outermost = s >= h;
        let count = if k == 1 { n } else { symmetric_count(k, rho, s, outermost) };
        let shift = if outermost { 0 } else { (k % 2) as usize };
        ring(&mut points, rho, count, shift);
        last = (rho, s);
        s_prev = s;
        if s >= h {
            break;
        }
    }

    // Background lattice; row ends are pinned to the square sides.
    let hole = last.0 + 0.5 * (last.1 + h);
    let nx = (2.0 * half / h).ceil() as usize;
    // An even row count keeps the lattice symmetric under y → −y.
    let ny = 2 * (half / row_height(h)).ceil() as usize;
    // Integer offsets from the centre keep the lattice exactly symmetric.
    let (hx, hy) = (half / nx as f64, half / ny as f64);
    for j in 0..=ny {
        let y = (2 * j as i64 - ny as i64) as f64 * hy;
        let mut xs: Vec<f64> = Vec::with_capacity(nx + 2);
        if j % 2 == 0 || j == ny {
            xs.extend((0..=nx).map(|i| (2 * i as i64 - nx as i64) as f64 * hx));
        } else {
            xs.push(-half);
            xs.extend((0..nx).map(|i| (2 * i as i64 + 1 - nx as i64) as f64 * hx));
            xs.push(half);
        }
        let on_side = j == 0 || j == ny;
        for (i, &x) in xs.iter().enumerate() {
            let p = Point::new(x, y);
            let on_boundary = on_side || i == 0 || i == xs.len() - 1;
            if on_boundary || p.norm() >= hole {
                points.push(p);
            }
        }
    }
    points
}

/// Triangulates the square with the regular `segments`-gon inscribed in the
/// circle of the given radius embedded in the interior edges.
pub fn generate_template_mesh(cfg: &MeshGenConfig) -> Result<(Mesh, CurveLoop)> {
    cfg.validate()?;
    let points = point_cloud(cfg);
    let n = cfg.segments;
    let constraints: Vec<[usize; 2]> = (0..n).map(|k| [k, (k + 1) % n]).collect();
    let spade_points: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(spade_points, constraints)
        .map_err(|e| Error::GenerationFailure(format!("triangulation failed: {e:?}")))?;
    if cdt.num_vertices() != points.len() {
        return Err(Error::GenerationFailure("duplicate vertices in point cloud".into()));
    }
    let vertices: Vec<Point> = cdt.vertices().map(|v| Point::new(v.position().x, v.position().y)).collect();
    let cells: Vec<[usize; 3]> = cdt
        .inner_faces()
        .map(|f| {
            let [a, b, c] = f.vertices();
            [a.fix().index(), b.fix().index(), c.fix().index()]
        })
        .collect();
    let mesh = Mesh::from_cells(vertices, cells)?;
    for c in 0..mesh.n_cells() {
        let area = mesh.signed_area(c);
        if area <= 1e-10 * cfg.h * cfg.h {
            return Err(Error::GenerationFailure(format!("cell {c} is degenerate (area {area:e})")));
        }
    }
    let diameter = mesh.max_diameter();
    if diameter > 2.0 * cfg.h {
        return Err(Error::GenerationFailure(format!(
            "max cell diameter {diameter} exceeds 2h = {}",
            2.0 * cfg.h
        )));
    }
    let curve_edges = (0..n)
        .map(|k| {
            mesh.find_edge(k, (k + 1) % n)
                .ok_or_else(|| Error::GenerationFailure(format!("curve segment {k} missing from triangulation")))
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = CurveLoop::from_edges(&mesh, &curve_edges)?;
    Ok((mesh, curve))
}
