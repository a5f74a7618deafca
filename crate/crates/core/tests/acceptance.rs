//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! FAIL. Heavy (several minutes in release mode on one core).

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use curvereg::config::RunConfig;
use curvereg::eki::{self, init_ensemble, predict, EkiConfig, Ensemble};
use curvereg::element::{
    build_reference_element, cell_geometry_with_ids, deriv_index, duality_error, physical_tabulate, transform, ElementKind,
};
use curvereg::fem::{assemble_operator, centroid_gradient_norms, solve_spd, AssemblyContext, DofMap};
use curvereg::forward::{quadrant_areas, transport_drift, ForwardConfig, ForwardModel, Scenario};
use curvereg::mesh::{generate_template_mesh, MeshGenConfig, Point};
use curvereg::momentum::{synthetic_momentum, SyntheticKind};
use curvereg::pipeline::{self, DIAGNOSTICS};
use curvereg::raster::{l2_inner, rasterize_indicator, smooth, RasterField, RasterSpec, Smoother};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Non-degenerate random triangle: smallest angle above 15°.
fn random_triangle(rng: &mut ChaCha8Rng) -> [Point; 3] {
    loop {
        let p = [0, 1, 2].map(|_| Point::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
        let angle = |a: Point, b: Point, c: Point| (b - a).angle(&(c - a));
        let min = angle(p[0], p[1], p[2]).min(angle(p[1], p[2], p[0])).min(angle(p[2], p[0], p[1]));
        if min > 15f64.to_radians() {
            return if (p[1] - p[0]).perp(&(p[2] - p[0])) > 0.0 { p } else { [p[0], p[2], p[1]] };
        }
    }
}

fn element_duality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for kind in [ElementKind::Standard, ElementKind::Robust] {
        let re = build_reference_element(kind).map_err(err)?;
        for _ in 0..100 {
            let geom = cell_geometry_with_ids(random_triangle(&mut rng), [0, 1, 2]).map_err(err)?;
            let t = transform(&re, &geom, false).map_err(err)?;
            worst = worst.max(duality_error(&re, &geom, &t.m));
        }
    }
    Ok((worst < 1e-9, format!("max |n_i(psi_j) - delta_ij| = {worst:.2e} over 100 cells x 2 elements (< 1e-9)")))
}

/// Derivative table of `Σ c[a][b] x^a y^b` (total degree ≤ 3).
fn cubic_table(c: &[[f64; 4]; 4], p: Point) -> [f64; 10] {
    let mut out = [0.0; 10];
    for dx in 0..4 {
        for dy in 0..4 - dx {
            let mut v = 0.0;
            for a in dx..4 {
                for b in dy..4 - a {
                    let fa: f64 = (a - dx + 1..=a).map(|k| k as f64).product();
                    let fb: f64 = (b - dy + 1..=b).map(|k| k as f64).product();
                    v += c[a][b] * fa * fb * p.x.powi((a - dx) as i32) * p.y.powi((b - dy) as i32);
                }
            }
            out[deriv_index(dx, dy)] = v;
        }
    }
    out
}

fn cubic_reproduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for kind in [ElementKind::Standard, ElementKind::Robust] {
        let re = build_reference_element(kind).map_err(err)?;
        for _ in 0..20 {
            let mut c = [[0.0; 4]; 4];
            for (a, row) in c.iter_mut().enumerate() {
                for v in row.iter_mut().take(4 - a) {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            let geom = cell_geometry_with_ids(random_triangle(&mut rng), [0, 1, 2]).map_err(err)?;
            let t = transform(&re, &geom, false).map_err(err)?;
            let f = |p: Point| cubic_table(&c, p);
            let dofs: Vec<f64> = re
                .nodes()
                .iter()
                .map(|&node| curvereg::element::apply_node(node, &geom.vertices, &geom.edges, false, &f))
                .collect();
            let points: Vec<Point> = (0..7)
                .map(|_| {
                    let (mut s, mut u) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                    if s + u > 1.0 {
                        (s, u) = (1.0 - s, 1.0 - u);
                    }
                    geom.to_physical(Point::new(s, u))
                })
                .collect();
            let tab = physical_tabulate(&re, &t.m, &geom, &points, 2).map_err(err)?;
            for (q, &p) in points.iter().enumerate() {
                let exact = f(p);
                for d in 0..6 {
                    let v: f64 = dofs.iter().enumerate().map(|(i, w)| w * tab.get(q, d, i)).sum();
                    worst = worst.max((v - exact[d]).abs() / exact[d].abs().max(1.0));
                }
            }
        }
    }
    Ok((worst < 1e-9, format!("max error in value, gradient, Hessian = {worst:.2e} over 20 cubics x 2 elements (< 1e-9)")))
}

fn operator_sanity() -> Check {
    let (mesh, _) = generate_template_mesh(&MeshGenConfig::default()).map_err(err)?;
    let dofmap = DofMap::new(&mesh);
    let start = Instant::now();
    let a = assemble_operator(&mesh, &dofmap, 1.0).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<f64> = (0..a.dim()).map(|i| if dofmap.is_boundary(i / 2) { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
    let b = a.matvec(&y);
    let x = solve_spd(&a, &b).map_err(err)?;
    let seconds = start.elapsed().as_secs_f64();
    let sym = a.symmetry_error();
    let gap = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() / y.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((
        sym <= 1e-10 && gap <= 1e-8 && seconds <= 30.0,
        format!("symmetry {sym:.1e} (<= 1e-10), |A^-1(Ay) - y|/|y| = {gap:.1e} (<= 1e-8), assembly+solve {seconds:.2} s (<= 30 s), {} unknowns", a.dim()),
    ))
}

fn max_centroid_gradient(h: f64, alpha: f64) -> Result<f64, String> {
    let (mesh, curve) = generate_template_mesh(&MeshGenConfig { h, ..Default::default() }).map_err(err)?;
    let model = ForwardModel::new(mesh.clone(), curve.clone(), ForwardConfig { alpha, steps: 15 }).map_err(err)?;
    let p = synthetic_momentum(SyntheticKind::Contract, &curve);
    let u = model.velocity(&mesh, p.values()).map_err(err)?;
    let g = centroid_gradient_norms(AssemblyContext::shared(), &mesh, model.dofmap(), &u.x, &u.y).map_err(err)?;
    Ok(g.into_iter().fold(0.0, f64::max))
}

fn gradient_mesh_stability() -> Check {
    let coarse = max_centroid_gradient(1.0, 0.5)?;
    let fine = max_centroid_gradient(0.5, 0.5)?;
    let change = (fine - coarse).abs() / coarse;
    Ok((
        change < 0.1,
        format!("max centroid |grad u| at step 0, contract: h=1 {coarse:.4}, h=0.5 {fine:.4}, change {:.2}% (< 10%)", 100.0 * change),
    ))
}

fn transport_halving() -> Check {
    let (mesh, curve) = generate_template_mesh(&MeshGenConfig::default()).map_err(err)?;
    let p = synthetic_momentum(SyntheticKind::Contract, &curve);
    let mut drift = Vec::new();
    for steps in [10, 20, 40] {
        let model = ForwardModel::new(mesh.clone(), curve.clone(), ForwardConfig { alpha: 0.5, steps }).map_err(err)?;
        let traj = model.integrate(p.values()).map_err(err)?;
        drift.push(transport_drift(&traj, &curve, p.values()).map_err(err)?);
    }
    let ratios = [drift[0] / drift[1], drift[1] / drift[2]];
    Ok((
        ratios.iter().all(|r| (1.5..=2.5).contains(r)),
        format!(
            "drift T=10 {:.3e}, T=20 {:.3e}, T=40 {:.3e}; ratios {:.3}, {:.3} (in [1.5, 2.5])",
            drift[0], drift[1], drift[2], ratios[0], ratios[1]
        ),
    ))
}

fn forward_behaviour() -> Check {
    let (mesh, curve) = generate_template_mesh(&MeshGenConfig::default()).map_err(err)?;
    let model = ForwardModel::new(mesh, curve.clone(), ForwardConfig::target()).map_err(err)?;
    let contract = model.integrate(synthetic_momentum(SyntheticKind::Contract, &curve).values()).map_err(err)?;
    let areas = contract.areas();
    let decreasing = areas.len() == 16 && areas.windows(2).all(|w| w[1] < w[0]);
    let star = model.integrate(synthetic_momentum(SyntheticKind::Star, &curve).values()).map_err(err)?;
    let q = quadrant_areas(star.final_polygon());
    let mean = q.iter().sum::<f64>() / 4.0;
    let spread = q.iter().map(|a| (a - mean).abs() / mean).fold(0.0, f64::max);
    Ok((
        decreasing && spread <= 0.02,
        format!(
            "contract area {:.4} -> {:.4} strictly decreasing over 15 steps: {decreasing}; star quadrant areas {:.4?}, max deviation {:.2e} (<= 2%)",
            areas[0],
            areas[areas.len() - 1],
            q,
            spread
        ),
    ))
}

fn raster_and_smoother() -> Check {
    let (mesh, curve) = generate_template_mesh(&MeshGenConfig::default()).map_err(err)?;
    let polygon = curve.polygon(&mesh);
    let spec = RasterSpec::default();
    let smoother = Smoother::default();
    let ind = rasterize_indicator(&polygon, &spec);
    let exact = 0.5 * 48.0 * (2.0 * PI / 48.0).sin();
    let mass = ind.mass();
    // The tolerance the criterion names: perimeter times cell diagonal.
    let bound = curve.perimeter() * spec.dx().hypot(spec.dy());
    let sm = smooth(&ind, &smoother).map_err(err)?;
    let conservation = (sm.mass() - mass).abs() / mass;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = RasterField::new(spec.clone(), (0..spec.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).map_err(err)?;
    let sg = smooth(&g, &smoother).map_err(err)?;
    let lhs = l2_inner(&sm, &g).map_err(err)?;
    let rhs = l2_inner(&ind, &sg).map_err(err)?;
    let adjoint = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
    let gap = (mass - exact).abs();
    Ok((
        gap <= bound && conservation <= 1e-6 && adjoint <= 1e-6,
        format!(
            "48-gon mass {mass:.4} vs {exact:.4}, |gap| {gap:.4} <= perimeter*diagonal {bound:.3} (nominal 0.1 {}); conservation {conservation:.1e}; self-adjointness {adjoint:.1e}",
            if gap <= 0.1 { "met" } else { "missed" }
        ),
    ))
}

/// Analysis increments assembled from the raster-space covariance.
fn dense_increments(ens: &Ensemble, fields: &[RasterField], qbar: &RasterField, target: &RasterField, xi: f64) -> Vec<DVector<f64>> {
    let n = ens.len();
    let len = target.spec().len();
    let w = target.spec().weight();
    let pbar = ens.mean();
    let a = DMatrix::from_fn(len, n, |i, j| fields[j].values()[i] - qbar.values()[i]);
    let b = DMatrix::from_fn(ens.n_facets(), n, |i, j| ens.member(j)[i] - pbar[i]);
    let s = 1.0 / (n - 1) as f64;
    let c = &a * a.transpose() * (w * s) + DMatrix::identity(len, len) * xi;
    let lu = c.lu();
    (0..n)
        .map(|j| {
            let r = DVector::from_fn(len, |i, _| target.values()[i] - fields[j].values()[i]);
            let z = lu.solve(&r).expect("regularised covariance is invertible");
            &b * (a.transpose() * z) * (w * s)
        })
        .collect()
}

fn eki_correctness() -> Check {
    let (mesh, curve) = generate_template_mesh(&MeshGenConfig::default()).map_err(err)?;
    let spec = RasterSpec { nx: 16, ny: 16, ..Default::default() };
    let scenario =
        Scenario::new(mesh, curve.clone(), ForwardConfig::inversion(), spec, Smoother::default()).map_err(err)?;
    let target = scenario.evaluate(synthetic_momentum(SyntheticKind::Star, &curve).values()).map_err(err)?.1;
    let cfg = EkiConfig { seed: 5, ..Default::default() };
    let mut ens = init_ensemble(3, curve.len(), &cfg).map_err(err)?;
    let pred = predict(&mut ens, &scenario).map_err(err)?;
    if pred.n_valid() != 3 {
        return Err(format!("{} member(s) failed in the forward model", 3 - pred.n_valid()));
    }
    let fields: Vec<RasterField> = pred.fields.iter().flatten().cloned().collect();
    let fast = eki::analysis_increments(&ens, &pred, &target, cfg.xi).map_err(err)?;
    let dense = dense_increments(&ens, &fields, &pred.mean_field, &target, cfg.xi);
    let scale = dense.iter().flat_map(|d| d.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) {
        return Err("members have identical fields on the 16x16 raster, the update is trivially zero".into());
    }
    let woodbury = fast
        .iter()
        .zip(&dense)
        .flat_map(|(f, d)| f.iter().zip(d.iter()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
        / scale;

    // Anomalies sum to zero, so the first N − 1 span their space.
    let pbar = ens.mean();
    let b = DMatrix::from_fn(ens.n_facets(), 2, |i, j| ens.member(j)[i] - pbar[i]);
    let qr = b.clone().qr();
    let mut subspace: f64 = 0.0;
    for dp in &fast {
        let v = DVector::from_column_slice(dp);
        let coef = qr.r().solve_upper_triangular(&(qr.q().transpose() * &v)).ok_or("rank-deficient anomalies")?;
        subspace = subspace.max((&b * coef - &v).norm() / v.norm());
    }

    let order = [2, 0, 1];
    let mut perm = ens.permuted(&order);
    let pred_p = predict(&mut perm, &scenario).map_err(err)?;
    let fast_p = eki::analysis_increments(&perm, &pred_p, &target, cfg.xi).map_err(err)?;
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + a.abs());
    let mut perm_gap: f64 = 0.0;
    for (x, y) in pred.mean_momentum.iter().zip(&pred_p.mean_momentum) {
        perm_gap = perm_gap.max(rel(*x, *y));
    }
    for (x, y) in pred.mean_field.values().iter().zip(pred_p.mean_field.values()) {
        perm_gap = perm_gap.max(rel(*x, *y));
    }
    for (k, &j) in order.iter().enumerate() {
        for (x, y) in fast[j].iter().zip(&fast_p[k]) {
            perm_gap = perm_gap.max(rel(*x, *y));
        }
    }
    Ok((
        woodbury <= 1e-8 && subspace < 1e-8 && perm_gap <= 1e-12,
        format!(
            "16x16 raster, N=3: Woodbury vs dense {woodbury:.1e} (<= 1e-8); subspace residual {subspace:.1e} (< 1e-8); permutation {perm_gap:.1e} (<= 1e-12)"
        ),
    ))
}

fn inversion(kind: SyntheticKind, n: usize, dir: &Path) -> Result<(pipeline::InvertSummary, f64), String> {
    let mut cfg = RunConfig { scenario: Some(kind), out_dir: dir.to_path_buf(), ..Default::default() };
    cfg.eki.ensemble_size = n;
    pipeline::make_target(&cfg).map_err(err)?;
    let start = Instant::now();
    let summary = pipeline::invert(&cfg).map_err(err)?;
    Ok((summary, start.elapsed().as_secs_f64()))
}

fn eki_end_to_end() -> Check {
    let root = tempfile::tempdir().map_err(err)?;
    let (contract, seconds) = inversion(SyntheticKind::Contract, 20, &root.path().join("contract"))?;
    let h = &contract.history;
    let ratio = h[5].misfit / h[0].misfit;
    let s_drop = h[5].consensus < h[0].consensus;
    let (star, _) = inversion(SyntheticKind::Star, 40, &root.path().join("star"))?;
    let (target, recon) = match (star.target_area, star.reconstruction_area) {
        (Some(t), Some(r)) => (t, r),
        _ => return Err("star run has no target or reconstruction curve".into()),
    };
    let area_err = (recon - target).abs() / target;
    Ok((
        h.len() == 6 && ratio <= 0.5 && s_drop && area_err <= 0.1 && seconds <= 600.0,
        format!(
            "contract N=20: E5/E0 = {ratio:.3} (<= 0.5), S {:.3} -> {:.3}, {seconds:.0} s (<= 600 s); star N=40: area {recon:.3} vs target {target:.3}, error {:.1}% (<= 10%)",
            h[0].consensus,
            h[5].consensus,
            100.0 * area_err
        ),
    ))
}

fn reproducibility() -> Check {
    let root = tempfile::tempdir().map_err(err)?;
    let mut cfg = RunConfig { scenario: Some(SyntheticKind::Squeeze), out_dir: root.path().join("run"), seed: 9, ..Default::default() };
    cfg.eki.ensemble_size = 5;
    cfg.eki.max_iter = 2;
    pipeline::invert(&cfg).map_err(err)?;
    let files = [DIAGNOSTICS, "ensemble_final.csv", "mean_curve_002.csv"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(cfg.out_dir.join(f))).collect::<Result<_, _>>().map_err(err)?;
    let resolved = RunConfig::load(cfg.out_dir.join(pipeline::CONFIG_FILE)).map_err(err)?;
    pipeline::invert(&resolved).map_err(err)?;
    let second: Vec<Vec<u8>> =
        files.iter().map(|f| std::fs::read(resolved.out_dir.join(f))).collect::<Result<_, _>>().map_err(err)?;
    let same = first == second && resolved == cfg;
    Ok((same, format!("re-run from resolved config.json: {} byte-identical: {same}", files.join(", "))))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 10] = [
        ("element duality", element_duality),
        ("cubic reproduction", cubic_reproduction),
        ("operator sanity", operator_sanity),
        ("velocity gradient mesh stability", gradient_mesh_stability),
        ("momentum transport convergence", transport_halving),
        ("forward behaviour", forward_behaviour),
        ("raster and smoother", raster_and_smoother),
        ("EKI correctness", eki_correctness),
        ("EKI end-to-end", eki_end_to_end),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    let only = std::env::var("ACCEPTANCE_ONLY").ok();
    for (name, check) in checks {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {name}: {detail} [{:.1} s]", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
