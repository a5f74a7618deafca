//! Forward model: explicit Euler integration of the reduced Hamiltonian
//! system on the moving mesh, and the forward operator `p ↦ C^{-1} 1_{q_1}`.

use std::path::Path;
use std::sync::OnceLock;

use faer::sparse::linalg::solvers::SymbolicLlt;
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{analyze, assemble_scalar, curve_load, AssemblyContext, DofMap, SparseOperator, SparsityPattern, SpdSolver};
use crate::mesh::{csv_error, polygon_area, CurveLoop, Mesh, Point};
use crate::raster::{rasterize_indicator, smooth, RasterField, RasterSpec, Smoother};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    pub alpha: f64,
    /// Number of time steps; `dt = 1 / steps`.
    pub steps: usize,
}

impl ForwardConfig {
    /// Parameters used to generate synthetic targets.
    pub fn target() -> Self {
        ForwardConfig { alpha: 0.5, steps: 15 }
    }

    /// Parameters used inside the inversion.
    pub fn inversion() -> Self {
        ForwardConfig { alpha: 1.0, steps: 10 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha = {} must be positive", self.alpha)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }
}

/// Velocity of one step in scalar numbering, one vector per component.
#[derive(Clone, Debug)]
pub struct Velocity {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `½ a(u, u)`.
    pub energy: f64,
}

impl Velocity {
    /// Point values at the mesh vertices.
    pub fn at_vertices(&self, dofmap: &DofMap, n_vertices: usize) -> Vec<Point> {
        (0..n_vertices)
            .map(|v| {
                let s = dofmap.vertex_dof(v);
                Point::new(self.x[s], self.y[s])
            })
            .collect()
    }
}

/// Template mesh plus everything that depends on connectivity only, so that
/// repeated forward evaluations reuse the DOF map, the sparsity pattern and
/// the symbolic factorization.
pub struct ForwardModel {
    mesh0: Mesh,
    curve: CurveLoop,
    config: ForwardConfig,
    dofmap: DofMap,
    pattern: SparsityPattern,
    symbolic: OnceLock<SymbolicLlt<usize>>,
}

impl ForwardModel {
    pub fn new(mesh0: Mesh, curve: CurveLoop, config: ForwardConfig) -> Result<Self> {
        config.validate()?;
        let dofmap = DofMap::new(&mesh0);
        let pattern = SparsityPattern::new(&mesh0, &dofmap);
        Ok(ForwardModel { mesh0, curve, config, dofmap, pattern, symbolic: OnceLock::new() })
    }

    pub fn mesh0(&self) -> &Mesh {
        &self.mesh0
    }

    pub fn curve(&self) -> &CurveLoop {
        &self.curve
    }

    pub fn config(&self) -> &ForwardConfig {
        &self.config
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    /// Clamped scalar operator on `mesh_t`.
    pub fn operator(&self, mesh_t: &Mesh) -> Result<SparseOperator> {
        let mut op = assemble_scalar(AssemblyContext::shared(), &self.pattern, mesh_t, self.config.alpha)?;
        op.apply_dirichlet(self.dofmap.boundary_mask());
        Ok(op)
    }

    fn symbolic(&self, op: &SparseOperator) -> Result<SymbolicLlt<usize>> {
        if let Some(s) = self.symbolic.get() {
            return Ok(s.clone());
        }
        let s = analyze(op)?;
        Ok(self.symbolic.get_or_init(|| s).clone())
    }

    /// Solves for the velocity on `mesh_t` driven by the momentum.
    pub fn velocity(&self, mesh_t: &Mesh, momentum: &[f64]) -> Result<Velocity> {
        if !mesh_t.shares_topology(&self.mesh0) {
            return Err(Error::Config("mesh does not share the template connectivity".into()));
        }
        let load = curve_load(AssemblyContext::shared(), &self.mesh0, mesh_t, &self.curve, momentum, &self.dofmap)?;
        let op = self.operator(mesh_t)?;
        let solver = SpdSolver::with_symbolic(&op, self.symbolic(&op)?)?;
        let mut sol = solver.solve_many(&[&load.x, &load.y])?;
        let y = sol.pop().expect("two components");
        let x = sol.pop().expect("two components");
        let energy = 0.5 * (op.quadratic_form(&x) + op.quadratic_form(&y));
        Ok(Velocity { x, y, energy })
    }

    /// One Euler step: velocity on `mesh_t`, then every vertex moves by
    /// `dt · u(vertex)`.
    pub fn step(&self, mesh_t: &Mesh, momentum: &[f64]) -> Result<(Mesh, Velocity)> {
        let u = self.velocity(mesh_t, momentum)?;
        let mut v = u.at_vertices(&self.dofmap, mesh_t.n_vertices());
        for (i, vi) in v.iter_mut().enumerate() {
            // Clamped rows solve to zero up to round-off.
            if mesh_t.is_boundary_vertex(i) {
                *vi = Point::zeros();
            }
        }
        let next = crate::mesh::displace(mesh_t, &v, self.config.dt())?;
        Ok((next, u))
    }

    /// All `steps` Euler steps from the template.
    pub fn integrate(&self, momentum: &[f64]) -> Result<Trajectory> {
        if momentum.len() != self.curve.len() {
            return Err(Error::ShapeMismatch { expected: self.curve.len(), found: momentum.len() });
        }
        let mut meshes = vec![self.mesh0.clone()];
        let mut energies = Vec::with_capacity(self.config.steps);
        for k in 0..self.config.steps {
            let (next, u) = self
                .step(meshes.last().expect("nonempty"), momentum)
                .map_err(|e| Error::StepFailed { step: k, source: Box::new(e) })?;
            energies.push(u.energy);
            meshes.push(next);
        }
        let polygons = meshes.iter().map(|m| self.curve.polygon(m)).collect();
        Ok(Trajectory { polygons, energies, meshes })
    }
}

/// Single step from scratch.
pub fn step(mesh0: &Mesh, mesh_t: &Mesh, curve: &CurveLoop, momentum: &[f64], cfg: &ForwardConfig) -> Result<(Mesh, Velocity)> {
    ForwardModel::new(mesh0.clone(), curve.clone(), cfg.clone())?.step(mesh_t, momentum)
}

/// Whole trajectory from scratch.
pub fn integrate(mesh0: &Mesh, curve: &CurveLoop, momentum: &[f64], cfg: &ForwardConfig) -> Result<Trajectory> {
    ForwardModel::new(mesh0.clone(), curve.clone(), cfg.clone())?.integrate(momentum)
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Curve polygon at every step, `steps + 1` entries.
    pub polygons: Vec<Vec<Point>>,
    /// Kinetic energy of the velocity used in each step.
    pub energies: Vec<f64>,
    pub meshes: Vec<Mesh>,
}

impl Trajectory {
    pub fn final_polygon(&self) -> &[Point] {
        self.polygons.last().expect("trajectory has the initial state")
    }

    pub fn areas(&self) -> Vec<f64> {
        self.polygons.iter().map(|p| polygon_area(p)).collect()
    }

    /// `step,vertex_index,x,y` rows for every step.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
            w.write_record(["step", "vertex_index", "x", "y"])?;
            for (k, poly) in self.polygons.iter().enumerate() {
                for (i, p) in poly.iter().enumerate() {
                    w.write_record([k.to_string(), i.to_string(), p.x.to_string(), p.y.to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        };
        write(&mut w).map_err(|e| csv_error(path, e))
    }
}

/// Largest relative gap between the momentum transported by an explicit
/// Euler integration of `ṗ = −∇u^T p` and the closed form `F^{-T} p_0`.
///
/// Both live in each cell adjacent to a curve facet. `∇u` on a cell is the
/// gradient of the piecewise-linear vertex motion between stored meshes, so
/// the only difference between the two is the time discretisation.
pub fn transport_drift(trajectory: &Trajectory, curve: &CurveLoop, momentum: &[f64]) -> Result<f64> {
    if momentum.len() != curve.len() {
        return Err(Error::ShapeMismatch { expected: curve.len(), found: momentum.len() });
    }
    let meshes = &trajectory.meshes;
    let steps = meshes.len().saturating_sub(1);
    if steps == 0 || momentum.iter().all(|&p| p == 0.0) {
        return Ok(0.0);
    }
    let dt = 1.0 / steps as f64;
    let mesh0 = &meshes[0];
    let mut worst: f64 = 0.0;
    for (k, &p) in momentum.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let p0 = curve.template_normals()[k] * p;
        let adj = mesh0.edge_cells(curve.facets()[k]);
        for c in [Some(adj.first), adj.second].into_iter().flatten() {
            let e0_inv = invert(mesh0.edge_matrix(c), c)?;
            let mut pk = p0;
            for s in 0..steps {
                let ek = meshes[s].edge_matrix(c);
                let grad = (meshes[s + 1].edge_matrix(c) - ek) / dt * invert(ek, c)?;
                pk -= dt * grad.transpose() * pk;
                let f = meshes[s + 1].edge_matrix(c) * e0_inv;
                let exact = invert(f, c)?.transpose() * p0;
                worst = worst.max((pk - exact).norm() / exact.norm());
            }
        }
    }
    Ok(worst)
}

fn invert(m: Matrix2<f64>, cell: usize) -> Result<Matrix2<f64>> {
    m.try_inverse().ok_or(Error::SingularCell { cell, det: m.determinant() })
}

/// Template, forward parameters and misfit space: everything the forward
/// operator needs besides the momentum.
pub struct Scenario {
    pub model: ForwardModel,
    pub raster: RasterSpec,
    pub smoother: Smoother,
}

impl Scenario {
    pub fn new(mesh0: Mesh, curve: CurveLoop, forward: ForwardConfig, raster: RasterSpec, smoother: Smoother) -> Result<Self> {
        raster.validate()?;
        smoother.validate()?;
        Ok(Scenario { model: ForwardModel::new(mesh0, curve, forward)?, raster, smoother })
    }

    pub fn curve(&self) -> &CurveLoop {
        self.model.curve()
    }

    /// Smoothed indicator of a polygon's interior.
    pub fn shape_field(&self, polygon: &[Point]) -> Result<RasterField> {
        smooth(&rasterize_indicator(polygon, &self.raster), &self.smoother)
    }

    /// Final polygon and its smoothed indicator.
    pub fn evaluate(&self, momentum: &[f64]) -> Result<(Vec<Point>, RasterField)> {
        let traj = self.model.integrate(momentum)?;
        let polygon = traj.final_polygon().to_vec();
        let field = self.shape_field(&polygon)?;
        Ok((polygon, field))
    }
}

/// `τ = C^{-1} 1_{q_1}` for the time-one curve.
pub fn forward_operator(momentum: &[f64], scenario: &Scenario) -> Result<RasterField> {
    Ok(scenario.evaluate(momentum)?.1)
}

/// Symmetric Hausdorff distance between two vertex sets.
pub fn hausdorff(a: &[Point], b: &[Point]) -> f64 {
    let directed = |a: &[Point], b: &[Point]| {
        a.iter()
            .map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Area of the polygon's interior inside each open quadrant, counterclockwise
/// from `x > 0, y > 0`.
pub fn quadrant_areas(polygon: &[Point]) -> [f64; 4] {
    let signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    signs.map(|(sx, sy)| {
        let clipped = clip_half_plane(polygon, |p| sx * p.x, |a, b| {
            let t = a.x / (a.x - b.x);
            a + (b - a) * t
        });
        let clipped = clip_half_plane(&clipped, |p| sy * p.y, |a, b| {
            let t = a.y / (a.y - b.y);
            a + (b - a) * t
        });
        polygon_area(&clipped).abs()
    })
}

/// Sutherland-Hodgman clip against `{side(p) ≥ 0}`.
fn clip_half_plane(poly: &[Point], side: impl Fn(&Point) -> f64, cross: impl Fn(Point, Point) -> Point) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 4);
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (sa, sb) = (side(&a), side(&b));
        if sa >= 0.0 {
            out.push(a);
        }
        if (sa >= 0.0) != (sb >= 0.0) {
            out.push(cross(a, b));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_template_mesh, MeshGenConfig};
    use crate::momentum::{synthetic_momentum, SyntheticKind};

    fn coarse() -> (Mesh, CurveLoop) {
        generate_template_mesh(&MeshGenConfig { segments: 24, h: 2.0, ..Default::default() }).unwrap()
    }

    fn model(alpha: f64, steps: usize) -> ForwardModel {
        let (mesh, curve) = coarse();
        ForwardModel::new(mesh, curve, ForwardConfig { alpha, steps }).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ForwardConfig { alpha: 0.0, steps: 3 }.validate().is_err());
        assert!(ForwardConfig { alpha: 1.0, steps: 0 }.validate().is_err());
        assert_eq!(ForwardConfig::target(), ForwardConfig { alpha: 0.5, steps: 15 });
        assert_eq!(ForwardConfig::inversion().dt(), 0.1);
    }

    #[test]
    fn zero_momentum_leaves_mesh_unchanged() {
        let m = model(1.0, 3);
        let traj = m.integrate(&vec![0.0; m.curve().len()]).unwrap();
        for mesh in &traj.meshes {
            assert_eq!(mesh.vertices(), m.mesh0().vertices());
        }
        assert!(traj.energies.iter().all(|&e| e == 0.0));
        assert_eq!(transport_drift(&traj, m.curve(), &vec![0.0; m.curve().len()]).unwrap(), 0.0);
    }

    #[test]
    fn contraction_shrinks_every_step() {
        let m = model(0.5, 6);
        let p = synthetic_momentum(SyntheticKind::Contract, m.curve());
        let traj = m.integrate(p.values()).unwrap();
        let areas = traj.areas();
        assert_eq!(areas.len(), 7);
        for w in areas.windows(2) {
            assert!(w[1] < w[0], "{areas:?}");
        }
        assert!(traj.energies.iter().all(|e| e.is_finite() && *e > 0.0));
    }

    #[test]
    fn velocity_is_linear_in_momentum() {
        let m = model(1.0, 1);
        let n = m.curve().len();
        let a: Vec<f64> = (0..n).map(|k| (k as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).cos() - 0.2).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let (ua, ub, us) = (m.velocity(m.mesh0(), &a).unwrap(), m.velocity(m.mesh0(), &b).unwrap(), m.velocity(m.mesh0(), &sum).unwrap());
        let scale = us.x.iter().chain(&us.y).fold(0.0f64, |s, v| s.max(v.abs()));
        for i in 0..ua.x.len() {
            assert!((2.0 * ua.x[i] - 3.0 * ub.x[i] - us.x[i]).abs() <= 1e-10 * scale);
            assert!((2.0 * ua.y[i] - 3.0 * ub.y[i] - us.y[i]).abs() <= 1e-10 * scale);
        }
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let un = m.velocity(m.mesh0(), &neg).unwrap();
        assert!(un.x.iter().zip(&ua.x).all(|(p, q)| *p == -*q));
    }

    #[test]
    fn one_step_trajectory_equals_step() {
        let m = model(1.0, 1);
        let p = synthetic_momentum(SyntheticKind::Star, m.curve());
        let traj = m.integrate(p.values()).unwrap();
        let (next, _) = step(m.mesh0(), m.mesh0(), m.curve(), p.values(), m.config()).unwrap();
        assert_eq!(traj.meshes[1].vertices(), next.vertices());
        assert_eq!(traj.polygons.len(), 2);
    }

    #[test]
    fn deterministic_forward_operator() {
        let (mesh, curve) = coarse();
        let raster = RasterSpec { nx: 32, ny: 32, ..Default::default() };
        let sc = Scenario::new(mesh, curve, ForwardConfig::inversion(), raster, Smoother::default()).unwrap();
        let p = synthetic_momentum(SyntheticKind::Contract, sc.curve());
        let a = forward_operator(p.values(), &sc).unwrap();
        let b = forward_operator(p.values(), &sc).unwrap();
        assert_eq!(a, b);
        let template = forward_operator(&vec![0.0; sc.curve().len()], &sc).unwrap();
        assert!(a.mass() < template.mass());
    }

    #[test]
    fn mismatched_momentum_is_rejected() {
        let m = model(1.0, 2);
        assert!(matches!(m.integrate(&[1.0; 3]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn quadrant_areas_of_a_square() {
        let sq = [Point::new(-1.0, -1.0), Point::new(2.0, -1.0), Point::new(2.0, 1.0), Point::new(-1.0, 1.0)];
        let q = quadrant_areas(&sq);
        assert!((q[0] - 2.0).abs() < 1e-12 && (q[1] - 1.0).abs() < 1e-12);
        assert!((q[2] - 1.0).abs() < 1e-12 && (q[3] - 2.0).abs() < 1e-12);
        assert_eq!(hausdorff(&sq, &sq), 0.0);
    }

    #[test]
    fn trajectory_csv_rows() {
        let m = model(1.0, 2);
        let traj = m.integrate(&vec![0.0; m.curve().len()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        traj.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * m.curve().len());
        assert!(text.starts_with("step,vertex_index,x,y\n0,0,"));
    }
}
