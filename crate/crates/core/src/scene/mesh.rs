//! Triangle meshes with optional per-vertex colour, read from OBJ
//! (`v x y z [r g b]`, `f i j k ...`) or ASCII PLY.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ssdr::Point;

/// Triangles with area at or below this are skipped by the raycaster.
pub const MIN_TRIANGLE_AREA: f64 = 1e-18;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// RGB in `[0, 1]` per vertex.
    pub colors: Option<Vec<[f64; 3]>>,
}

fn area(a: &Point, b: &Point, c: &Point) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, colors: Option<Vec<[f64; 3]>>) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidInput(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if let Some(c) = &colors {
            if c.len() != n {
                return Err(Error::InvalidInput(format!("{} colours for {n} vertices", c.len())));
            }
            if c.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidInput("vertex colours must lie in [0, 1]".into()));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            colors,
        })
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    /// Loads `.obj` or `.ply` by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
            Some("obj") => parse_obj(&text, path),
            Some("ply") => parse_ply(&text, path),
            _ => Err(Error::format(path, 0, "unknown mesh extension (expected .obj or .ply)")),
        }
    }
}

fn numbers(fields: &[&str], path: &Path, line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|e| Error::format(path, line, format!("`{f}`: {e}"))))
        .collect()
}

/// Fan triangulation of a polygon.
fn fan(poly: &[usize]) -> impl Iterator<Item = [usize; 3]> + '_ {
    (1..poly.len().saturating_sub(1)).map(move |i| [poly[0], poly[i], poly[i + 1]])
}

pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields.first() {
            Some(&"v") => {
                let v = numbers(&fields[1..], path, line)?;
                match v.len() {
                    3 => vertices.push([v[0], v[1], v[2]]),
                    6 => {
                        vertices.push([v[0], v[1], v[2]]);
                        colors.push((vertices.len() - 1, [v[3], v[4], v[5]]));
                    }
                    _ => return Err(Error::format(path, line, "vertex needs 3 or 6 numbers")),
                }
            }
            Some(&"f") => {
                let mut poly = Vec::with_capacity(fields.len() - 1);
                for f in &fields[1..] {
                    let idx = f.split('/').next().unwrap_or("");
                    let k: i64 = idx
                        .parse()
                        .map_err(|e| Error::format(path, line, format!("face index `{f}`: {e}")))?;
                    let n = vertices.len() as i64;
                    let resolved = if k < 0 { n + k } else { k - 1 };
                    if !(0..n).contains(&resolved) {
                        return Err(Error::format(path, line, format!("face index {k} out of range")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(Error::format(path, line, "face needs at least 3 vertices"));
                }
                triangles.extend(fan(&poly));
            }
            _ => {}
        }
    }
    let colors = if !colors.is_empty() {
        if colors.len() != vertices.len() {
            return Err(Error::format(path, 0, "either every vertex or none must carry a colour"));
        }
        Some(colors.into_iter().map(|(_, c)| c).collect())
    } else {
        None
    };
    TriangleMesh::new(vertices, triangles, colors).map_err(|e| Error::format(path, 0, e.to_string()))
}

/// Element name, count and its `(name, type)` properties.
type Element = (String, usize, Vec<(String, String)>);

pub fn parse_ply(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::format(path, 1, "missing `ply` magic")),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut ended = false;
    for (line, l) in lines.by_ref() {
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(Error::format(path, line, "only ASCII PLY is supported")),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let n = count
                    .parse()
                    .map_err(|e| Error::format(path, line, format!("element count: {e}")))?;
                elements.push((name.to_string(), n, Vec::new()));
            }
            ["property", "list", _, _, name] | ["property", _, name] => {
                let ty = if f[1] == "list" { "list" } else { f[1] };
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(path, line, "property before element"))?;
                el.2.push((name.to_string(), ty.to_string()));
            }
            ["end_header"] => {
                ended = true;
                break;
            }
            _ => return Err(Error::format(path, line, format!("unexpected header line `{l}`"))),
        }
    }
    if !ended {
        return Err(Error::format(path, 0, "missing end_header"));
    }
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut triangles = Vec::new();
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for (name, count, props) in &elements {
        for _ in 0..*count {
            let (line, l) = body
                .next()
                .ok_or_else(|| Error::format(path, 0, format!("file ends inside element `{name}`")))?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            match name.as_str() {
                "vertex" => {
                    let v = numbers(&fields, path, line)?;
                    if v.len() < props.len() {
                        return Err(Error::format(path, line, "too few vertex properties"));
                    }
                    let get = |key: &str| props.iter().position(|(n, _)| n == key);
                    let (x, y, z) = match (get("x"), get("y"), get("z")) {
                        (Some(x), Some(y), Some(z)) => (v[x], v[y], v[z]),
                        _ => return Err(Error::format(path, line, "vertex lacks x/y/z")),
                    };
                    vertices.push([x, y, z]);
                    if let (Some(r), Some(g), Some(b)) = (get("red"), get("green"), get("blue")) {
                        let scale = if props[r].1.contains("char") { 255.0 } else { 1.0 };
                        colors.push([v[r] / scale, v[g] / scale, v[b] / scale]);
                    }
                }
                "face" => {
                    let v = numbers(&fields, path, line)?;
                    let k = v.first().copied().unwrap_or(0.0) as usize;
                    if k < 3 || v.len() != k + 1 {
                        return Err(Error::format(path, line, "face needs a vertex count followed by >= 3 indices"));
                    }
                    let poly: Vec<usize> = v[1..].iter().map(|&i| i as usize).collect();
                    triangles.extend(fan(&poly));
                }
                _ => {}
            }
        }
    }
    let colors = (!colors.is_empty()).then_some(colors);
    TriangleMesh::new(vertices, triangles, colors).map_err(|e| Error::format(path, 0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_with_colours_and_quads() {
        let text = "# quad\nv 0 0 1 1 0 0\nv 1 0 1 0 1 0\nv 1 1 1 0 0 1\nv 0 1 1 1 1 1\nf 1 2 3 4\n";
        let m = parse_obj(text, Path::new("q.obj")).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.colors.as_ref().unwrap()[3], [1.0, 1.0, 1.0]);
        assert!((m.triangle_area(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn obj_errors_carry_lines() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 9\n", Path::new("bad.obj")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 3, .. }), "{err}");
    }

    #[test]
    fn ply_ascii() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
                    property uchar red\nproperty uchar green\nproperty uchar blue\nelement face 1\n\
                    property list uchar int vertex_indices\nend_header\n0 0 2 255 0 0\n1 0 2 0 255 0\n0 1 2 0 0 255\n3 0 1 2\n";
        let m = parse_ply(text, Path::new("t.ply")).unwrap();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert_eq!(m.colors.unwrap()[1], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(TriangleMesh::new(vec![[0.0; 3]], vec![[0, 0, 1]], None).is_err());
    }
}
