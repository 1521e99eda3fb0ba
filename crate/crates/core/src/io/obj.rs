use std::fmt::Write as _;
use std::path::Path;

use crate::binding::TriangleMesh;
use crate::error::{Error, Result};

use super::{read_text, write_atomic};

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    parse_obj(&read_text(path)?, path)
}

/// Parses `v` and `f` records; everything else is ignored. Face corners may
/// be `i`, `i/t`, `i//n` or `i/t/n`, with negative indices counted from the
/// end of the vertex list read so far.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut fields = raw.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<&str> = fields.collect();
                if coords.len() < 3 {
                    return Err(parse_err(line, format!("vertex needs 3 coordinates, found {}", coords.len())));
                }
                let mut p = [0.0; 3];
                for (a, c) in coords[..3].iter().enumerate() {
                    p[a] = c
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(line, format!("bad coordinate {c:?}")))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let corners: Vec<&str> = fields.collect();
                if corners.len() != 3 {
                    return Err(Error::NonTriangularFace {
                        path: path.to_path_buf(),
                        line,
                    });
                }
                let mut face = [0u32; 3];
                for (c, corner) in corners.iter().enumerate() {
                    let head = corner.split('/').next().unwrap_or("");
                    let index: i64 = head.parse().map_err(|_| parse_err(line, format!("bad face index {corner:?}")))?;
                    let resolved = match index {
                        i if i > 0 => i - 1,
                        i if i < 0 => vertices.len() as i64 + i,
                        _ => -1,
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::IndexOutOfRange {
                            path: path.to_path_buf(),
                            line,
                            index,
                        });
                    }
                    face[c] = resolved as u32;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn format_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_atomic(path, format_obj(mesh).as_bytes())
}
