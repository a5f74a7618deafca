//! Mesh snapshots (`vertices.csv`, `cells.csv`, `mesh.json`) and curve
//! polygon tables.

use std::path::Path;

use serde::Serialize;

use super::{CurveLoop, Mesh, Point};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Header<'a> {
    n_vertices: usize,
    n_cells: usize,
    n_edges: usize,
    curve_vertices: &'a [usize],
    curve_facets: Vec<[usize; 2]>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

/// Writes `vertices.csv` (id,x,y), `cells.csv` (id,v0,v1,v2) and `mesh.json`
/// (sizes plus the curve facet list) into `dir`.
pub fn write_mesh_snapshot(mesh: &Mesh, curve: &CurveLoop, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("vertices.csv");
    let mut w = csv_writer(&path)?;
    let write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["id", "x", "y"])?;
        for (i, p) in mesh.vertices().iter().enumerate() {
            w.write_record([i.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| csv_error(&path, e))?;

    let path = dir.join("cells.csv");
    let mut w = csv_writer(&path)?;
    let write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["id", "v0", "v1", "v2"])?;
        for (i, c) in mesh.cells().iter().enumerate() {
            w.write_record([i.to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| csv_error(&path, e))?;

    let header = Header {
        n_vertices: mesh.n_vertices(),
        n_cells: mesh.n_cells(),
        n_edges: mesh.n_edges(),
        curve_vertices: curve.vertices(),
        curve_facets: (0..curve.len()).map(|k| {
            let (a, b) = curve.facet_vertices(k);
            [a, b]
        }).collect(),
    };
    let path = dir.join("mesh.json");
    let text = serde_json::to_string_pretty(&header)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Writes a closed polygon as `vertex_index,x,y` rows.
pub fn write_curve_csv(polygon: &[Point], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let write = |w: &mut csv::Writer<_>| -> csv::Result<()> {
        w.write_record(["vertex_index", "x", "y"])?;
        for (i, p) in polygon.iter().enumerate() {
            w.write_record([i.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| csv_error(path, e))
}

/// Reads a polygon written by [`write_curve_csv`].
pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in r.deserialize::<(usize, f64, f64)>() {
        let (i, x, y) = row.map_err(|e| csv_error(path, e))?;
        if i != out.len() {
            return Err(Error::Parse { path: path.into(), message: format!("vertex index {i} out of order") });
        }
        out.push(Point::new(x, y));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_template_mesh, MeshGenConfig};

    #[test]
    fn snapshot_files() {
        let cfg = MeshGenConfig { segments: 12, h: 2.5, ..Default::default() };
        let (mesh, curve) = generate_template_mesh(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_mesh_snapshot(&mesh, &curve, dir.path()).unwrap();
        let cells = std::fs::read_to_string(dir.path().join("cells.csv")).unwrap();
        assert_eq!(cells.lines().count(), mesh.n_cells() + 1);
        let header: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("mesh.json")).unwrap()).unwrap();
        assert_eq!(header["curve_facets"].as_array().unwrap().len(), 12);

        let path = dir.path().join("curve.csv");
        let polygon = curve.polygon(&mesh);
        write_curve_csv(&polygon, &path).unwrap();
        assert_eq!(read_curve_csv(&path).unwrap(), polygon);
    }
}
