//! Minimal Gmsh MSH 2.2 ASCII support: nodes, 2-node lines and 3-node
//! triangles with physical tags. Everything else is rejected.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{CurveLoop, Mesh, Point};
use crate::error::{Error, Result};

/// Physical tag written for curve line elements.
pub const CURVE_TAG: i64 = 1;
/// Physical tag written for domain triangles.
pub const DOMAIN_TAG: i64 = 2;

const LINE: u32 = 1;
const TRIANGLE: u32 = 2;

pub fn load_msh(path: impl AsRef<Path>, curve_tag: i64) -> Result<(Mesh, CurveLoop)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_msh(&text, curve_tag).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

fn parse_error(message: impl Into<String>) -> Error {
    Error::Parse { path: "<msh>".into(), message: message.into() }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.inner.next() {
                Some((i, l)) if !l.trim().is_empty() => return Ok((i + 1, l.trim())),
                Some(_) => continue,
                None => return Err(parse_error("unexpected end of file")),
            }
        }
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let (no, line) = self.next_line()?;
        if line != tag {
            return Err(parse_error(format!("line {no}: expected {tag}, found {line:?}")));
        }
        Ok(())
    }
}

fn num<T: std::str::FromStr>(token: Option<&str>, no: usize, what: &str) -> Result<T> {
    token
        .ok_or_else(|| parse_error(format!("line {no}: missing {what}")))?
        .parse()
        .map_err(|_| parse_error(format!("line {no}: malformed {what}")))
}

pub fn parse_msh(text: &str, curve_tag: i64) -> Result<(Mesh, CurveLoop)> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let mut nodes: HashMap<u64, Point> = HashMap::new();
    let mut triangles: Vec<[u64; 3]> = Vec::new();
    let mut curve_lines: Vec<[u64; 2]> = Vec::new();
    let mut seen_format = false;
    loop {
        let (no, header) = match lines.next_line() {
            Ok(l) => l,
            Err(_) => break,
        };
        match header {
            "$MeshFormat" => {
                let (no, line) = lines.next_line()?;
                let mut it = line.split_whitespace();
                let version: String = num(it.next(), no, "version")?;
                let file_type: u32 = num(it.next(), no, "file type")?;
                if !version.starts_with("2.2") || file_type != 0 {
                    return Err(parse_error(format!("line {no}: only MSH 2.2 ASCII is supported")));
                }
                lines.expect("$EndMeshFormat")?;
                seen_format = true;
            }
            "$PhysicalNames" => {
                let (no, line) = lines.next_line()?;
                let count: usize = num(line.split_whitespace().next(), no, "name count")?;
                for _ in 0..count {
                    lines.next_line()?;
                }
                lines.expect("$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let (no, line) = lines.next_line()?;
                let count: usize = num(line.split_whitespace().next(), no, "node count")?;
                for _ in 0..count {
                    let (no, line) = lines.next_line()?;
                    let mut it = line.split_whitespace();
                    let id: u64 = num(it.next(), no, "node id")?;
                    let x: f64 = num(it.next(), no, "x")?;
                    let y: f64 = num(it.next(), no, "y")?;
                    let _z: f64 = num(it.next(), no, "z")?;
                    if nodes.insert(id, Point::new(x, y)).is_some() {
                        return Err(parse_error(format!("line {no}: duplicate node {id}")));
                    }
                }
                lines.expect("$EndNodes")?;
            }
            "$Elements" => {
                let (no, line) = lines.next_line()?;
                let count: usize = num(line.split_whitespace().next(), no, "element count")?;
                for _ in 0..count {
                    let (no, line) = lines.next_line()?;
                    let mut it = line.split_whitespace();
                    let _id: u64 = num(it.next(), no, "element id")?;
                    let kind: u32 = num(it.next(), no, "element type")?;
                    let ntags: usize = num(it.next(), no, "tag count")?;
                    let mut tags = Vec::with_capacity(ntags);
                    for _ in 0..ntags {
                        tags.push(num::<i64>(it.next(), no, "tag")?);
                    }
                    let physical = tags.first().copied().unwrap_or(0);
                    match kind {
                        LINE => {
                            let a = num(it.next(), no, "node")?;
                            let b = num(it.next(), no, "node")?;
                            if physical == curve_tag {
                                curve_lines.push([a, b]);
                            }
                        }
                        TRIANGLE => {
                            triangles.push([
                                num(it.next(), no, "node")?,
                                num(it.next(), no, "node")?,
                                num(it.next(), no, "node")?,
                            ]);
                        }
                        other => {
                            return Err(parse_error(format!("line {no}: unsupported element type {other}")));
                        }
                    }
                    if it.next().is_some() {
                        return Err(parse_error(format!("line {no}: trailing data in element")));
                    }
                }
                lines.expect("$EndElements")?;
            }
            other if other.starts_with('$') => {
                return Err(parse_error(format!("line {no}: unsupported section {other}")));
            }
            other => return Err(parse_error(format!("line {no}: unexpected content {other:?}"))),
        }
    }
    if !seen_format {
        return Err(parse_error("missing $MeshFormat section"));
    }
    if triangles.is_empty() {
        return Err(parse_error("no triangles"));
    }

    // Keep only nodes used by triangles, numbered by ascending node id.
    let mut used: Vec<u64> = triangles.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let index: HashMap<u64, usize> = used.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let vertices = used
        .iter()
        .map(|id| nodes.get(id).copied().ok_or_else(|| parse_error(format!("undefined node {id}"))))
        .collect::<Result<Vec<_>>>()?;
    let cells = triangles.iter().map(|t| [index[&t[0]], index[&t[1]], index[&t[2]]]).collect();
    let mesh = Mesh::from_cells(vertices, cells).map_err(|e| parse_error(e.to_string()))?;

    let curve_edges = curve_lines
        .iter()
        .map(|[a, b]| {
            let (a, b) = match (index.get(a), index.get(b)) {
                (Some(&a), Some(&b)) => (a, b),
                _ => return Err(parse_error(format!("curve line {a}-{b} uses nodes outside the triangulation"))),
            };
            mesh.find_edge(a, b).ok_or_else(|| parse_error(format!("curve line {a}-{b} is not a mesh edge")))
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = CurveLoop::from_edges(&mesh, &curve_edges)?;
    Ok((mesh, curve))
}

/// Serialises a mesh and its curve as MSH 2.2 ASCII (curve lines tagged
/// [`CURVE_TAG`], triangles [`DOMAIN_TAG`]).
pub fn to_msh_string(mesh: &Mesh, curve: &CurveLoop) -> String {
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let _ = writeln!(out, "$Nodes\n{}", mesh.n_vertices());
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(out, "{} {} {} 0", i + 1, p.x, p.y);
    }
    out.push_str("$EndNodes\n");
    let _ = writeln!(out, "$Elements\n{}", curve.len() + mesh.n_cells());
    let mut id = 1;
    for k in 0..curve.len() {
        let (a, b) = curve.facet_vertices(k);
        let _ = writeln!(out, "{id} {LINE} 2 {CURVE_TAG} {CURVE_TAG} {} {}", a + 1, b + 1);
        id += 1;
    }
    for cell in mesh.cells() {
        let _ = writeln!(out, "{id} {TRIANGLE} 2 {DOMAIN_TAG} {DOMAIN_TAG} {} {} {}", cell[0] + 1, cell[1] + 1, cell[2] + 1);
        id += 1;
    }
    out.push_str("$EndElements\n");
    out
}

pub fn write_msh(mesh: &Mesh, curve: &CurveLoop, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_msh_string(mesh, curve)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_template_mesh, MeshGenConfig};

    const TWO_TRIANGLES: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n$Elements\n2\n1 2 2 2 2 1 2 3\n2 2 2 2 2 1 3 4\n$EndElements\n";

    #[test]
    fn no_tagged_edges_is_not_closed() {
        assert!(matches!(parse_msh(TWO_TRIANGLES, CURVE_TAG), Err(Error::CurveNotClosed(_))));
    }

    #[test]
    fn tagged_boundary_edge_is_rejected() {
        let text = TWO_TRIANGLES.replace("$Elements\n2\n", "$Elements\n3\n9 1 2 1 1 1 2\n");
        assert!(matches!(parse_msh(&text, CURVE_TAG), Err(Error::CurveOnBoundary { .. })));
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(parse_msh("$Nodes\n", 1), Err(Error::Parse { .. })));
        let text = TWO_TRIANGLES.replace("1 2 2 2 2 1 2 3", "1 4 2 2 2 1 2 3 4");
        assert!(matches!(parse_msh(&text, 1), Err(Error::Parse { .. })));
        let text = TWO_TRIANGLES.replace("2 1 0 0", "2 one 0 0");
        assert!(matches!(parse_msh(&text, 1), Err(Error::Parse { .. })));
    }

    #[test]
    fn generator_round_trip() {
        let cfg = MeshGenConfig { segments: 16, h: 2.0, ..Default::default() };
        let (mesh, curve) = generate_template_mesh(&cfg).unwrap();
        let text = to_msh_string(&mesh, &curve);
        let (mesh2, curve2) = parse_msh(&text, CURVE_TAG).unwrap();
        assert_eq!(curve2.len(), curve.len());
        assert_eq!(mesh2.n_cells(), mesh.n_cells());
        assert!((curve2.perimeter() - curve.perimeter()).abs() < 1e-12);
    }
}
