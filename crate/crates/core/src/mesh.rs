//! Triangle meshes: validation, OFF/OBJ I/O, icospheres and Procrustes alignment.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * norm(&cross(&sub(b, a), &sub(c, a)))
}

/// Indexed triangle mesh with consistently oriented faces.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

impl TriangleMesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Same connectivity, new vertex positions. Positions are not revalidated.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::dims("vertex count", self.vertices.len(), vertices.len()));
        }
        Ok(TriangleMesh {
            vertices,
            faces: self.faces.clone(),
        })
    }

    fn edge_faces(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::with_capacity(self.faces.len() * 2);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn num_edges(&self) -> usize {
        self.edge_faces().len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_faces() as i64
    }

    /// Every edge shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        self.edge_faces().values().all(|&c| c == 2)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edge_faces();
        if edges.is_empty() {
            return 0.0;
        }
        let mut keys: Vec<_> = edges.keys().copied().collect();
        keys.sort_unstable();
        let total: f64 = keys
            .iter()
            .map(|&(a, b)| norm(&sub(&self.vertices[a], &self.vertices[b])))
            .sum();
        total / keys.len() as f64
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn centroid(&self) -> Point3 {
        centroid(&self.vertices)
    }

    /// Length of the bounding-box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        norm(&sub(&hi, &lo))
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.vertices.len();
        for (i, v) in self.vertices.iter().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation {
                    element: "vertex",
                    index: i,
                    message: "non-finite coordinate".into(),
                });
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&idx| idx >= s) {
                return Err(Error::Validation {
                    element: "face",
                    index: fi,
                    message: format!("index {bad} out of range for {s} vertices"),
                });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Validation {
                    element: "face",
                    index: fi,
                    message: "repeated vertex index".into(),
                });
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let e = (f[k], f[(k + 1) % 3]);
                if let Some(prev) = directed.insert(e, fi) {
                    return Err(Error::Validation {
                        element: "face",
                        index: fi,
                        message: format!(
                            "edge ({}, {}) also used with the same orientation by face {prev}",
                            e.0, e.1
                        ),
                    });
                }
            }
        }
        for (&(a, b), &count) in &self.edge_faces() {
            if count > 2 {
                // report the first face that touches the edge
                let fi = self
                    .faces
                    .iter()
                    .position(|f| f.contains(&a) && f.contains(&b))
                    .unwrap_or(0);
                return Err(Error::Validation {
                    element: "face",
                    index: fi,
                    message: format!("non-manifold edge ({a}, {b}) shared by {count} faces"),
                });
            }
        }
        let h = self.mean_edge_length();
        let min_area = 1e-12 * h * h;
        for fi in 0..self.faces.len() {
            let area = self.face_area(fi);
            if !(area > min_area) {
                return Err(Error::Validation {
                    element: "face",
                    index: fi,
                    message: format!("degenerate triangle (area {area:e})"),
                });
            }
        }
        Ok(())
    }

    pub fn load(path: &Path, format: MeshFormat) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match format {
            MeshFormat::Off => parse_off(&text),
            MeshFormat::Obj => parse_obj(&text),
        }
    }

    pub fn save_off(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_off_string())?;
        Ok(())
    }

    /// OFF text with 17 significant digits per coordinate.
    pub fn to_off_string(&self) -> String {
        let mut out = String::with_capacity(64 * (self.vertices.len() + self.faces.len()));
        out.push_str("OFF\n");
        let _ = writeln!(out, "{} {} 0", self.vertices.len(), self.faces.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
        }
        out
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    TriangleMesh::load(path, format)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        }
        .trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?
    .parse()
    .map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what}"),
    })
}

pub fn parse_off(text: &str) -> Result<TriangleMesh> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("OFF") {
        return Err(Error::Parse {
            line: hline,
            message: "expected OFF header".into(),
        });
    }
    // counts may follow the keyword on the same line
    let rest: Vec<&str> = toks.collect();
    let (cline, counts) = if rest.is_empty() {
        let (l, c) = lines.next().ok_or(Error::Parse {
            line: hline + 1,
            message: "missing counts line".into(),
        })?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (hline, rest)
    };
    let mut it = counts.into_iter();
    let nv: usize = parse_num(it.next(), cline, "vertex count")?;
    let nf: usize = parse_num(it.next(), cline, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, line) = lines.next().ok_or(Error::Parse {
            line: 0,
            message: "unexpected end of file in vertex block".into(),
        })?;
        let mut t = line.split_whitespace();
        let x = parse_num(t.next(), l, "x coordinate")?;
        let y = parse_num(t.next(), l, "y coordinate")?;
        let z = parse_num(t.next(), l, "z coordinate")?;
        vertices.push([x, y, z]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, line) = lines.next().ok_or(Error::Parse {
            line: 0,
            message: "unexpected end of file in face block".into(),
        })?;
        let mut t = line.split_whitespace();
        let arity: usize = parse_num(t.next(), l, "face arity")?;
        if arity != 3 {
            return Err(Error::Parse {
                line: l,
                message: format!("only triangles are supported, found {arity}-gon"),
            });
        }
        let a = parse_num(t.next(), l, "face index")?;
        let b = parse_num(t.next(), l, "face index")?;
        let c = parse_num(t.next(), l, "face index")?;
        faces.push([a, b, c]);
    }
    TriangleMesh::new(vertices, faces)
}

/// OBJ import: `v` and `f` records only; polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (l, line) in content_lines(text) {
        let mut t = line.split_whitespace();
        match t.next() {
            Some("v") => {
                let x = parse_num(t.next(), l, "x coordinate")?;
                let y = parse_num(t.next(), l, "y coordinate")?;
                let z = parse_num(t.next(), l, "z coordinate")?;
                vertices.push([x, y, z]);
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in t {
                    let head = tok.split('/').next().unwrap_or("");
                    let raw: i64 = parse_num(Some(head), l, "face index")?;
                    let resolved = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        vertices.len() as i64 + raw
                    } else {
                        return Err(Error::Parse {
                            line: l,
                            message: "OBJ indices are 1-based".into(),
                        });
                    };
                    if resolved < 0 {
                        return Err(Error::Parse {
                            line: l,
                            message: format!("relative index {raw} out of range"),
                        });
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(Error::Parse {
                        line: l,
                        message: "face with fewer than 3 vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub const MAX_ICOSPHERE_LEVEL: u32 = 7;

/// Subdivided icosahedron projected onto a sphere of the given radius.
pub fn icosphere(subdivisions: u32, radius: f64) -> Result<TriangleMesh> {
    if subdivisions > MAX_ICOSPHERE_LEVEL {
        return Err(Error::LimitExceeded(format!(
            "icosphere subdivision {subdivisions} exceeds {MAX_ICOSPHERE_LEVEL}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let unit = |p: Point3| {
        let r = norm(&p);
        [p[0] / r, p[1] / r, p[2] / r]
    };
    for v in vertices.iter_mut() {
        *v = unit(*v);
    }
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (pa, pb) = (vertices[a], vertices[b]);
                vertices.push(unit([
                    0.5 * (pa[0] + pb[0]),
                    0.5 * (pa[1] + pb[1]),
                    0.5 * (pa[2] + pb[2]),
                ]));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    for v in vertices.iter_mut() {
        for x in v.iter_mut() {
            *x *= radius;
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub(crate) fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        for d in 0..3 {
            c[d] += p[d];
        }
    }
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Root-sum-square distance of the points from their centroid.
pub fn centroid_size(points: &[Point3]) -> f64 {
    let c = centroid(points);
    points
        .iter()
        .map(|p| {
            let d = sub(p, &c);
            dot(&d, &d)
        })
        .sum::<f64>()
        .sqrt()
}

fn normalize_configuration(points: &[Point3]) -> Vec<Point3> {
    let c = centroid(points);
    let size = centroid_size(points);
    points
        .iter()
        .map(|p| {
            let d = sub(p, &c);
            [d[0] / size, d[1] / size, d[2] / size]
        })
        .collect()
}

fn apply_rotation(r: &Matrix3<f64>, points: &[Point3]) -> Vec<Point3> {
    points
        .iter()
        .map(|p| {
            let v = r * nalgebra::Vector3::new(p[0], p[1], p[2]);
            [v.x, v.y, v.z]
        })
        .collect()
}

/// Proper rotation R minimizing sum |R x_i - y_i|^2 over centered configurations.
fn optimal_rotation(source: &[Point3], target: &[Point3]) -> Matrix3<f64> {
    let mut h = Matrix3::<f64>::zeros();
    for (x, y) in source.iter().zip(target) {
        for r in 0..3 {
            for c in 0..3 {
                h[(r, c)] += y[r] * x[c];
            }
        }
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = (u * v_t).determinant().signum();
    let fix = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d));
    u * fix * v_t
}

/// Orthonormal frame fixed by the labeled vertices of a centered configuration.
fn labeled_frame(points: &[Point3]) -> Matrix3<f64> {
    let scale = points.iter().map(norm).fold(0.0, f64::max);
    let tol = 1e-6 * scale.max(f64::MIN_POSITIVE);
    let Some(first) = points.iter().find(|p| norm(p) > tol) else {
        return Matrix3::identity();
    };
    let e1 = {
        let r = norm(first);
        [first[0] / r, first[1] / r, first[2] / r]
    };
    let e2 = points.iter().find_map(|p| {
        let proj = dot(p, &e1);
        let w = [p[0] - proj * e1[0], p[1] - proj * e1[1], p[2] - proj * e1[2]];
        let r = norm(&w);
        (r > tol).then(|| [w[0] / r, w[1] / r, w[2] / r])
    });
    let Some(e2) = e2 else {
        return Matrix3::identity();
    };
    let e3 = cross(&e1, &e2);
    // rows are the frame axes, so R maps the frame onto the coordinate axes
    Matrix3::new(
        e1[0], e1[1], e1[2], e2[0], e2[1], e2[2], e3[0], e3[1], e3[2],
    )
}

#[derive(Debug, Clone)]
pub struct ProcrustesResult {
    pub aligned: Vec<TriangleMesh>,
    pub template: TriangleMesh,
    pub iterations: usize,
}

pub const GPA_TOLERANCE: f64 = 1e-10;
pub const GPA_MAX_ITER: usize = 100;

/// Generalized Procrustes analysis with rotations only (no reflections).
///
/// The output frame is pinned by the template's labeled vertices, so the
/// result does not depend on the orientation any input arrives in.
pub fn generalized_procrustes(meshes: &[TriangleMesh]) -> Result<ProcrustesResult> {
    if meshes.len() < 2 {
        return Err(Error::InvalidArgument(
            "generalized Procrustes needs at least two meshes".into(),
        ));
    }
    let reference = &meshes[0];
    for (i, m) in meshes.iter().enumerate().skip(1) {
        if m.num_vertices() != reference.num_vertices() || m.faces() != reference.faces() {
            return Err(Error::ConnectivityMismatch(i));
        }
    }
    let mut configs: Vec<Vec<Point3>> = meshes
        .iter()
        .map(|m| normalize_configuration(m.vertices()))
        .collect();
    let s = reference.num_vertices();
    let vertex_mean = |configs: &[Vec<Point3>]| -> Vec<Point3> {
        let k = configs.len() as f64;
        (0..s)
            .map(|j| {
                let mut acc = [0.0; 3];
                for c in configs {
                    for d in 0..3 {
                        acc[d] += c[j][d];
                    }
                }
                [acc[0] / k, acc[1] / k, acc[2] / k]
            })
            .collect()
    };

    let mut mean = configs[0].clone();
    let mut iterations = 0;
    while iterations < GPA_MAX_ITER {
        iterations += 1;
        for c in configs.iter_mut() {
            let r = optimal_rotation(c, &mean);
            *c = apply_rotation(&r, c);
        }
        let next = normalize_configuration(&vertex_mean(&configs));
        let change = next
            .iter()
            .zip(&mean)
            .map(|(a, b)| {
                let d = sub(a, b);
                dot(&d, &d)
            })
            .sum::<f64>()
            .sqrt();
        mean = next;
        if change < GPA_TOLERANCE {
            break;
        }
    }
    // one last pass against the converged mean, then pin the frame
    for c in configs.iter_mut() {
        let r = optimal_rotation(c, &mean);
        *c = apply_rotation(&r, c);
    }
    let frame = labeled_frame(&vertex_mean(&configs));
    let aligned_points: Vec<Vec<Point3>> =
        configs.iter().map(|c| apply_rotation(&frame, c)).collect();
    let template_points = vertex_mean(&aligned_points);

    let aligned = aligned_points
        .into_iter()
        .map(|p| reference.with_vertices(p))
        .collect::<Result<Vec<_>>>()?;
    let template = reference.with_vertices(template_points)?;
    Ok(ProcrustesResult {
        aligned,
        template,
        iterations,
    })
}
