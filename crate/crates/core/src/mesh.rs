//! Two-dimensional polytopal meshes with global face numbering.
//!
//! Elements are stored as closed polygons (a vertex loop plus the list of
//! their faces), so the operator code never assumes triangles even though the
//! builders below only produce them.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Areas at or below this value are rejected as degenerate.
pub const MIN_ELEMENT_AREA: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct Face {
    /// Endpoints, sorted by vertex index.
    pub vertices: [usize; 2],
    /// Incident elements (one for boundary faces, two for internal ones).
    pub elements: Vec<usize>,
    pub boundary: bool,
    pub length: f64,
    pub centroid: Vec2,
    /// Unit tangent pointing from `vertices[0]` to `vertices[1]`.
    pub tangent: Vec2,
}

impl Face {
    /// Face diameter `h_F`.
    pub fn diameter(&self) -> f64 {
        self.length
    }
}

/// A face as seen from one of its elements.
#[derive(Debug, Clone, Copy)]
pub struct ElementFace {
    pub face: usize,
    /// Outward unit normal `n_TF`.
    pub normal: Vec2,
}

#[derive(Debug, Clone)]
pub struct Element {
    /// Counterclockwise vertex loop.
    pub vertices: Vec<usize>,
    pub faces: Vec<ElementFace>,
    pub area: f64,
    pub diameter: f64,
    pub centroid: Vec2,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vec2>,
    elements: Vec<Element>,
    faces: Vec<Face>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    /// Mesh size `h = max_T h_T`.
    pub h: f64,
    pub min_element_diameter: f64,
    pub max_element_diameter: f64,
    /// Smallest interior angle over all elements, in radians.
    pub min_angle: f64,
    /// Smallest `h_F / h_T` over all element/face pairs.
    pub min_face_element_ratio: f64,
    /// Largest `h_F / h_T` over all element/face pairs.
    pub max_face_element_ratio: f64,
}

impl Mesh {
    /// Builds the connectivity of a mesh from raw vertex coordinates and
    /// polygon vertex loops. Clockwise loops are reoriented.
    pub fn from_polygons(vertices: Vec<Vec2>, polygons: Vec<Vec<usize>>) -> Result<Self> {
        let mut elements = Vec::with_capacity(polygons.len());
        for (id, mut poly) in polygons.into_iter().enumerate() {
            if poly.len() < 3 {
                return Err(Error::InvalidInput(format!(
                    "element {id} has {} vertices",
                    poly.len()
                )));
            }
            if let Some(&bad) = poly.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::InvalidInput(format!(
                    "element {id} references vertex {bad} but only {} vertices exist",
                    vertices.len()
                )));
            }
            let mut signed = signed_area(&vertices, &poly);
            if signed < 0.0 {
                poly.reverse();
                signed = -signed;
            }
            if signed <= MIN_ELEMENT_AREA {
                return Err(Error::DegenerateElement {
                    element: id,
                    area: signed,
                });
            }
            let centroid = polygon_centroid(&vertices, &poly, signed);
            let mut diameter: f64 = 0.0;
            for (i, &a) in poly.iter().enumerate() {
                for &b in &poly[i + 1..] {
                    diameter = diameter.max((vertices[a] - vertices[b]).norm());
                }
            }
            elements.push(Element {
                vertices: poly,
                faces: Vec::new(),
                area: signed,
                diameter,
                centroid,
            });
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        for (id, element) in elements.iter_mut().enumerate() {
            let nv = element.vertices.len();
            for i in 0..nv {
                let a = element.vertices[i];
                let b = element.vertices[(i + 1) % nv];
                let key = (a.min(b), a.max(b));
                let face_id = *lookup.entry(key).or_insert_with(|| {
                    let (p, q) = (vertices[key.0], vertices[key.1]);
                    let d = q - p;
                    let length = d.norm();
                    faces.push(Face {
                        vertices: [key.0, key.1],
                        elements: Vec::with_capacity(2),
                        boundary: false,
                        length,
                        centroid: (p + q) * 0.5,
                        tangent: d / length,
                    });
                    faces.len() - 1
                });
                let face = &mut faces[face_id];
                face.elements.push(id);
                if face.elements.len() > 2 {
                    return Err(Error::NonManifoldEdge {
                        a: key.0,
                        b: key.1,
                        count: face.elements.len(),
                    });
                }
                // counterclockwise loop: the outward normal is the edge
                // direction rotated clockwise
                let d = vertices[b] - vertices[a];
                let normal = Vec2::new(d.y, -d.x) / d.norm();
                element.faces.push(ElementFace {
                    face: face_id,
                    normal,
                });
            }
        }
        for face in faces.iter_mut() {
            face.boundary = face.elements.len() == 1;
        }

        Ok(Self {
            vertices,
            elements,
            faces,
        })
    }

    /// Triangles-only convenience wrapper around [`Mesh::from_polygons`].
    pub fn from_triangles(vertices: Vec<Vec2>, triangles: &[[usize; 3]]) -> Result<Self> {
        Self::from_polygons(vertices, triangles.iter().map(|t| t.to_vec()).collect())
    }

    /// The `n x n` grid of the unit square with every cell split along its
    /// `(0,0)-(1,1)` diagonal, giving `2 n^2` right triangles and `h = sqrt(2)/n`.
    pub fn structured_triangular(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput(
                "structured mesh needs at least one cell per side".into(),
            ));
        }
        let np = n + 1;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                vertices.push(Vec2::new(i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        let idx = |i: usize, j: usize| j * np + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = idx(i, j);
                let v10 = idx(i + 1, j);
                let v11 = idx(i + 1, j + 1);
                let v01 = idx(i, j + 1);
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::from_triangles(vertices, &triangles)
    }

    /// Reads the `nv ne` / vertices / triangles text format.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses mesh text; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().filter_map(|(i, raw)| {
            let content = raw.split('#').next().unwrap_or("").trim();
            (!content.is_empty()).then_some((i + 1, content))
        });

        let (line_no, header) = lines
            .next()
            .ok_or_else(|| err(1, "missing `nv ne` header".into()))?;
        let counts = parse_fields::<usize>(header)
            .filter(|c| c.len() == 2)
            .ok_or_else(|| err(line_no, format!("expected `nv ne`, found `{header}`")))?;
        let (nv, ne) = (counts[0], counts[1]);

        let mut vertices = Vec::with_capacity(nv);
        for v in 0..nv {
            let (line_no, content) = lines
                .next()
                .ok_or_else(|| err(line_no, format!("expected {nv} vertices, found {v}")))?;
            let xy = parse_fields::<f64>(content)
                .filter(|c| c.len() == 2 && c.iter().all(|x| x.is_finite()))
                .ok_or_else(|| err(line_no, format!("expected `x y`, found `{content}`")))?;
            vertices.push(Vec2::new(xy[0], xy[1]));
        }

        let mut triangles = Vec::with_capacity(ne);
        for e in 0..ne {
            let (line_no, content) = lines
                .next()
                .ok_or_else(|| err(line_no, format!("expected {ne} elements, found {e}")))?;
            let ijk = parse_fields::<usize>(content)
                .filter(|c| c.len() == 3)
                .ok_or_else(|| err(line_no, format!("expected `i j k`, found `{content}`")))?;
            if let Some(&bad) = ijk.iter().find(|&&i| i >= nv) {
                return Err(err(line_no, format!("vertex index {bad} out of range (nv = {nv})")));
            }
            triangles.push([ijk[0], ijk[1], ijk[2]]);
        }
        if let Some((line_no, content)) = lines.next() {
            return Err(err(line_no, format!("unexpected trailing content `{content}`")));
        }
        Self::from_triangles(vertices, &triangles)
    }

    /// Writes the mesh in the text format read by [`Mesh::load`]. Only
    /// triangular meshes can be written.
    pub fn to_text(&self) -> Result<String> {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.vertices.len(), self.elements.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", v.x, v.y);
        }
        for (id, e) in self.elements.iter().enumerate() {
            if e.vertices.len() != 3 {
                return Err(Error::InvalidInput(format!(
                    "element {id} is not a triangle"
                )));
            }
            let _ = writeln!(out, "{} {} {}", e.vertices[0], e.vertices[1], e.vertices[2]);
        }
        Ok(out)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn element(&self, id: usize) -> &Element {
        &self.elements[id]
    }

    pub fn face(&self, id: usize) -> &Face {
        &self.faces[id]
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.boundary).count()
    }

    pub fn num_internal_faces(&self) -> usize {
        self.num_faces() - self.num_boundary_faces()
    }

    /// Vertex coordinates of an element in loop order.
    pub fn element_points(&self, id: usize) -> Vec<Vec2> {
        self.elements[id]
            .vertices
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    pub fn face_points(&self, id: usize) -> [Vec2; 2] {
        let [a, b] = self.faces[id].vertices;
        [self.vertices[a], self.vertices[b]]
    }

    pub fn h(&self) -> f64 {
        self.elements.iter().map(|e| e.diameter).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    pub fn stats(&self) -> MeshStats {
        let mut stats = MeshStats {
            h: 0.0,
            min_element_diameter: f64::INFINITY,
            max_element_diameter: 0.0,
            min_angle: f64::INFINITY,
            min_face_element_ratio: f64::INFINITY,
            max_face_element_ratio: 0.0,
        };
        for (id, e) in self.elements.iter().enumerate() {
            stats.min_element_diameter = stats.min_element_diameter.min(e.diameter);
            stats.max_element_diameter = stats.max_element_diameter.max(e.diameter);
            let pts = self.element_points(id);
            let nv = pts.len();
            for i in 0..nv {
                let prev = pts[(i + nv - 1) % nv] - pts[i];
                let next = pts[(i + 1) % nv] - pts[i];
                let angle = (prev.dot(&next) / (prev.norm() * next.norm()))
                    .clamp(-1.0, 1.0)
                    .acos();
                stats.min_angle = stats.min_angle.min(angle);
            }
            for ef in &e.faces {
                let ratio = self.faces[ef.face].length / e.diameter;
                stats.min_face_element_ratio = stats.min_face_element_ratio.min(ratio);
                stats.max_face_element_ratio = stats.max_face_element_ratio.max(ratio);
            }
        }
        stats.h = stats.max_element_diameter;
        stats
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str) -> Option<Vec<T>> {
    line.split_whitespace().map(|t| t.parse().ok()).collect()
}

fn signed_area(vertices: &[Vec2], poly: &[usize]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let a = vertices[poly[i]];
            let b = vertices[poly[(i + 1) % n]];
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}

fn polygon_centroid(vertices: &[Vec2], poly: &[usize], area: f64) -> Vec2 {
    // shift to the first vertex to limit cancellation
    let origin = vertices[poly[0]];
    let n = poly.len();
    let mut c = Vec2::zeros();
    for i in 0..n {
        let a = vertices[poly[i]] - origin;
        let b = vertices[poly[(i + 1) % n]] - origin;
        let cross = a.x * b.y - b.x * a.y;
        c += (a + b) * cross;
    }
    origin + c / (6.0 * area)
}
