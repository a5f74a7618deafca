//! Fixed raster used as the common misfit space: indicator rasterization of
//! a closed polygon and the smoothing `(I − κΔ)^{-1}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RasterSpec {
    pub nx: usize,
    pub ny: usize,
    /// `[xmin, ymin, xmax, ymax]`.
    pub bbox: [f64; 4],
}

impl Default for RasterSpec {
    fn default() -> Self {
        RasterSpec { nx: 128, ny: 128, bbox: [-10.0, -10.0, 10.0, 10.0] }
    }
}

impl RasterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 || self.ny < 8 {
            return Err(Error::Config(format!("raster {}x{} is smaller than 8x8", self.nx, self.ny)));
        }
        let [x0, y0, x1, y1] = self.bbox;
        if !(x1 > x0 && y1 > y0) || self.bbox.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("degenerate raster box {:?}", self.bbox)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        (self.bbox[2] - self.bbox[0]) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.bbox[3] - self.bbox[1]) / self.ny as f64
    }

    /// Area of one cell.
    pub fn weight(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Centre of cell `(i, j)`, `i` along x.
    pub fn center(&self, i: usize, j: usize) -> Point {
        Point::new(self.bbox[0] + (i as f64 + 0.5) * self.dx(), self.bbox[1] + (j as f64 + 0.5) * self.dy())
    }

    /// Cell containing `p`, if inside the box.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let i = ((p.x - self.bbox[0]) / self.dx()).floor();
        let j = ((p.y - self.bbox[1]) / self.dy()).floor();
        (i >= 0.0 && j >= 0.0 && (i as usize) < self.nx && (j as usize) < self.ny).then_some((i as usize, j as usize))
    }
}

/// Cell-centre values, row-major with x varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterField {
    spec: RasterSpec,
    values: Vec<f64>,
}

impl RasterField {
    pub fn new(spec: RasterSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::ShapeMismatch { expected: spec.len(), found: values.len() });
        }
        Ok(RasterField { spec, values })
    }

    pub fn constant(spec: &RasterSpec, c: f64) -> Self {
        RasterField { spec: spec.clone(), values: vec![c; spec.len()] }
    }

    pub fn spec(&self) -> &RasterSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.nx + i]
    }

    /// `Σ values · w`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.weight()
    }
}

/// 1 at cell centres with nonzero winding number, 0 elsewhere.
pub fn rasterize_indicator(polygon: &[Point], spec: &RasterSpec) -> RasterField {
    let mut values = vec![0.0; spec.len()];
    let n = polygon.len();
    let mut crossings: Vec<(f64, i32)> = Vec::new();
    for j in 0..spec.ny {
        let y = spec.center(0, j).y;
        crossings.clear();
        for k in 0..n {
            let (p, q) = (polygon[k], polygon[(k + 1) % n]);
            let dir = if p.y <= y && q.y > y {
                1
            } else if q.y <= y && p.y > y {
                -1
            } else {
                continue;
            };
            let x = p.x + (y - p.y) / (q.y - p.y) * (q.x - p.x);
            crossings.push((x, dir));
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Winding number of a point = sum of directions of crossings to its
        // right; sweep left to right subtracting the ones passed.
        let mut winding: i32 = crossings.iter().map(|c| c.1).sum();
        let mut next = 0;
        for i in 0..spec.nx {
            let x = spec.center(i, j).x;
            while next < crossings.len() && crossings[next].0 <= x {
                winding -= crossings[next].1;
                next += 1;
            }
            if winding != 0 {
                values[j * spec.nx + i] = 1.0;
            }
        }
    }
    RasterField { spec: spec.clone(), values }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Smoother {
    pub kappa: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Smoother {
    fn default() -> Self {
        Smoother { kappa: 10.0, tol: 1e-8, max_iter: 20_000 }
    }
}

impl Smoother {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Config(format!("smoother needs kappa > 0 and tol > 0, got {self:?}")));
        }
        Ok(())
    }
}

/// `y = (I − κΔ_h) x` with the 5-point Laplacian and reflecting ghost cells.
fn apply_operator(spec: &RasterSpec, kappa: f64, x: &[f64], y: &mut [f64]) {
    let (nx, ny) = (spec.nx, spec.ny);
    let cx = kappa / (spec.dx() * spec.dx());
    let cy = kappa / (spec.dy() * spec.dy());
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let u = x[k];
            let mut lap = 0.0;
            if i > 0 {
                lap += cx * (x[k - 1] - u);
            }
            if i + 1 < nx {
                lap += cx * (x[k + 1] - u);
            }
            if j > 0 {
                lap += cy * (x[k - nx] - u);
            }
            if j + 1 < ny {
                lap += cy * (x[k + nx] - u);
            }
            y[k] = u - lap;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(I − κΔ_h) τ = f` with homogeneous Neumann conditions by
/// conjugate gradients.
pub fn smooth(f: &RasterField, s: &Smoother) -> Result<RasterField> {
    s.validate()?;
    let spec = f.spec();
    let b = f.values();
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(RasterField::constant(spec, 0.0));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 0..s.max_iter {
        if rr.sqrt() <= s.tol * bnorm {
            return RasterField::new(spec.clone(), x);
        }
        apply_operator(spec, s.kappa, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        if !rr.is_finite() {
            return Err(Error::NotConverged { residual: f64::NAN, iterations: it });
        }
    }
    if rr.sqrt() <= s.tol * bnorm {
        return RasterField::new(spec.clone(), x);
    }
    Err(Error::NotConverged { residual: rr.sqrt() / bnorm, iterations: s.max_iter })
}

/// `Σ a_i b_i w` in index order.
pub fn l2_inner(a: &RasterField, b: &RasterField) -> Result<f64> {
    if a.spec != b.spec {
        return Err(Error::ShapeMismatch { expected: a.spec.len(), found: b.spec.len() });
    }
    Ok(dot(&a.values, &b.values) * a.spec.weight())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    nx: usize,
    ny: usize,
    bbox: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    kappa: Option<f64>,
}

/// Writes little-endian f64 values (row-major) to `path` and a JSON sidecar
/// next to it (`<path>.json`).
pub fn write_raster(field: &RasterField, kappa: Option<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = field.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = Sidecar { nx: field.spec.nx, ny: field.spec.ny, bbox: field.spec.bbox, kappa };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&sidecar)? + "\n").map_err(|e| Error::io(&side, e))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<RasterField> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    let spec = RasterSpec { nx: sidecar.nx, ny: sidecar.ny, bbox: sidecar.bbox };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 8 * spec.len() {
        return Err(Error::Parse {
            path: path.into(),
            message: format!("expected {} bytes, found {}", 8 * spec.len(), bytes.len()),
        });
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    RasterField::new(spec, values)
}
