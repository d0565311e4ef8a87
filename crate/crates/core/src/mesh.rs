//! Conforming triangulations with globally oriented edges.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// An edge of the triangulation.
///
/// `endpoints` is stored as (lower index, higher index); the edge
/// parametrization `s in [-1, 1]` runs in that direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub endpoints: [usize; 2],
    /// Unit normal `n_e`. Equals the outward normal of the incident element
    /// with the smallest index, which is outward from the domain on the
    /// boundary.
    pub global_normal: Point,
    pub is_boundary: bool,
    pub length: f64,
    /// Incident elements in increasing order (one or two).
    pub incident_elements: Vec<usize>,
}

impl EdgeRecord {
    /// The incident element whose outward normal agrees with `n_e`.
    pub fn owner(&self) -> usize {
        self.incident_elements[0]
    }

    /// For an interior edge, the incident element that is not `element`.
    pub fn neighbor_of(&self, element: usize) -> Option<usize> {
        self.incident_elements.iter().copied().find(|&t| t != element)
    }
}

/// Local view of an element edge: local edge `l` joins local vertices
/// `l` and `(l + 1) % 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEdge {
    pub edge: usize,
    /// `n_T . n_e`, either `+1.0` or `-1.0`.
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub edges: Vec<EdgeRecord>,
    pub element_edges: Vec<[LocalEdge; 3]>,
    pub h_max: f64,
    /// Cells per side when the mesh came from [`build_uniform_mesh`].
    structured: Option<usize>,
}

/// Structured mesh of the unit square with `n x n` cells, each cut along
/// the diagonal from its lower-left to its upper-right corner.
///
/// Elements are numbered cell by cell in row-major order; cell `c` holds
/// elements `2c` (below the diagonal) and `2c + 1` (above it).
pub fn build_uniform_mesh(n: usize) -> Result<Mesh2D> {
    if n == 0 {
        return Err(Error::InvalidArgument("mesh resolution n must be at least 1".into()));
    }
    let step = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * step, j as f64 * step]);
        }
    }
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            elements.push([v00, v10, v11]);
            elements.push([v00, v11, v01]);
        }
    }
    let mut mesh = Mesh2D::from_parts(vertices, elements)?;
    mesh.structured = Some(n);
    Ok(mesh)
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

impl Mesh2D {
    /// Builds the edge structure of an arbitrary conforming triangulation.
    /// Clockwise triangles are reoriented; degenerate ones are rejected.
    pub fn from_parts(vertices: Vec<Point>, mut elements: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in elements.iter_mut().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::InvalidArgument(format!(
                    "element {t} references vertex {v}, but only {} vertices exist",
                    vertices.len()
                )));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            let scale = (0..3)
                .map(|l| dist(vertices[tri[l]], vertices[tri[(l + 1) % 3]]))
                .fold(0.0, f64::max);
            if area.abs() <= 1e-14 * scale * scale {
                return Err(Error::Geometry {
                    element: t,
                    detail: format!("area {area:e} is not positive"),
                });
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<EdgeRecord> = Vec::new();
        let mut local: Vec<[usize; 3]> = Vec::with_capacity(elements.len());
        for (t, tri) in elements.iter().enumerate() {
            let mut ids = [0; 3];
            for l in 0..3 {
                let (a, b) = (tri[l], tri[(l + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(EdgeRecord {
                        endpoints: [key.0, key.1],
                        global_normal: [0.0, 0.0],
                        is_boundary: false,
                        length: dist(vertices[key.0], vertices[key.1]),
                        incident_elements: Vec::with_capacity(2),
                    });
                    edges.len() - 1
                });
                if edges[id].incident_elements.len() == 2 {
                    return Err(Error::InvalidArgument(format!(
                        "edge ({}, {}) is shared by more than two elements",
                        key.0, key.1
                    )));
                }
                edges[id].incident_elements.push(t);
                ids[l] = id;
            }
            local.push(ids);
        }

        for e in &mut edges {
            e.is_boundary = e.incident_elements.len() == 1;
            let [p, q] = [vertices[e.endpoints[0]], vertices[e.endpoints[1]]];
            // Counterclockwise rotation of the lower-to-higher direction.
            let mut n = [-(q[1] - p[1]) / e.length, (q[0] - p[0]) / e.length];
            let owner = e.incident_elements[0];
            let out = outward_normal_towards(&vertices, &elements[owner], e.endpoints);
            if n[0] * out[0] + n[1] * out[1] < 0.0 {
                n = [-n[0], -n[1]];
            }
            e.global_normal = n;
        }

        let element_edges = local
            .iter()
            .enumerate()
            .map(|(t, ids)| {
                let mut le = [LocalEdge { edge: 0, tau: 1.0 }; 3];
                for l in 0..3 {
                    let e = &edges[ids[l]];
                    let tau = if e.owner() == t { 1.0 } else { -1.0 };
                    le[l] = LocalEdge { edge: ids[l], tau };
                }
                le
            })
            .collect();

        let h_max = elements
            .iter()
            .map(|tri| (0..3).map(|l| dist(vertices[tri[l]], vertices[tri[(l + 1) % 3]])).fold(0.0, f64::max))
            .fold(0.0, f64::max);

        Ok(Self {
            vertices,
            elements,
            edges,
            element_edges,
            h_max,
            structured: None,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Cells per side for meshes from [`build_uniform_mesh`].
    pub fn structured_size(&self) -> Option<usize> {
        self.structured
    }

    pub fn element_vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.elements[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn element_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.element_vertices(t);
        signed_area(a, b, c)
    }

    /// Element diameter (longest edge).
    pub fn element_diameter(&self, t: usize) -> f64 {
        self.element_edges[t]
            .iter()
            .map(|le| self.edges[le.edge].length)
            .fold(0.0, f64::max)
    }

    /// `n_T . n_e` for an edge of element `t`.
    pub fn tau(&self, element: usize, edge: usize) -> Result<f64> {
        self.element_edges
            .get(element)
            .and_then(|les| les.iter().find(|le| le.edge == edge))
            .map(|le| le.tau)
            .ok_or(Error::NotIncident { element, edge })
    }

    pub fn interior_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.is_boundary).count()
    }

    /// Physical point at parameter `s` on edge `e`.
    pub fn edge_point(&self, e: usize, s: f64) -> Point {
        let [p, q] = self.edges[e].endpoints.map(|v| self.vertices[v]);
        [
            0.5 * (p[0] + q[0]) + 0.5 * s * (q[0] - p[0]),
            0.5 * (p[1] + q[1]) + 0.5 * s * (q[1] - p[1]),
        ]
    }

    /// Serializes to the `pdwg-mesh v1` text format (0-based indices).
    pub fn to_text(&self) -> String {
        let mut out = String::from("pdwg-mesh v1\n");
        let _ = writeln!(out, "{}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:e} {:e}", v[0], v[1]);
        }
        let _ = writeln!(out, "{}", self.elements.len());
        for t in &self.elements {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.by_ref().find(|(_, l)| !l.trim().is_empty());
        match header {
            Some((_, l)) if l.trim() == "pdwg-mesh v1" => {}
            Some((i, l)) => {
                return Err(Error::MeshFormat {
                    line: i + 1,
                    detail: format!("expected header `pdwg-mesh v1`, found `{}`", l.trim()),
                })
            }
            None => return Err(Error::MeshFormat { line: 1, detail: "empty input".into() }),
        }
        let mut tokens = lines.flat_map(|(i, l)| l.split_whitespace().map(move |tok| (i + 1, tok)));
        let mut last_line = 1;
        let mut next = |what: &str| -> Result<(usize, &str)> {
            match tokens.next() {
                Some((line, tok)) => {
                    last_line = line;
                    Ok((line, tok))
                }
                None => Err(Error::MeshFormat {
                    line: last_line,
                    detail: format!("unexpected end of input while reading {what}"),
                }),
            }
        };
        fn num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
            tok.parse().map_err(|_| Error::MeshFormat {
                line,
                detail: format!("cannot parse `{tok}` as {what}"),
            })
        }

        let (line, tok) = next("vertex count")?;
        let nv: usize = num(line, tok, "vertex count")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (l1, x) = next("vertex coordinate")?;
            let x = num(l1, x, "coordinate")?;
            let (l2, y) = next("vertex coordinate")?;
            let y = num(l2, y, "coordinate")?;
            vertices.push([x, y]);
        }
        let (line, tok) = next("element count")?;
        let ne: usize = num(line, tok, "element count")?;
        let mut elements = Vec::with_capacity(ne);
        for _ in 0..ne {
            let mut tri = [0; 3];
            for v in &mut tri {
                let (l, tok) = next("element vertex index")?;
                *v = num(l, tok, "vertex index")?;
            }
            elements.push(tri);
        }
        if let Some((line, tok)) = tokens.next() {
            return Err(Error::MeshFormat {
                line,
                detail: format!("trailing token `{tok}`"),
            });
        }
        Self::from_parts(vertices, elements)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Outward unit normal of counterclockwise triangle `tri` on the edge with
/// vertex set `ends`.
fn outward_normal_towards(vertices: &[Point], tri: &[usize; 3], ends: [usize; 2]) -> Point {
    for l in 0..3 {
        let (a, b) = (tri[l], tri[(l + 1) % 3]);
        if (a == ends[0] && b == ends[1]) || (a == ends[1] && b == ends[0]) {
            return outward_normal(vertices[a], vertices[b]);
        }
    }
    unreachable!("edge is not on the element")
}

/// Outward normal of the counterclockwise edge from `a` to `b`.
pub(crate) fn outward_normal(a: Point, b: Point) -> Point {
    let len = dist(a, b);
    [(b[1] - a[1]) / len, -(b[0] - a[0]) / len]
}
