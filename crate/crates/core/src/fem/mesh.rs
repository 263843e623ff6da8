//! Quadrilateral meshes, boundary tagging and the plain-text mesh format.
//!
//! ```text
//! # comments start with '#'
//! nodes <count>
//! <x> <y>                      # one line per node, mm
//! elements <count>
//! <n0> <n1> <n2> <n3>          # 0-based ids, counter-clockwise
//! dirichlet <count>
//! <node> <mask_x> <mask_y> <scale_x> <scale_y>
//! neumann <count>
//! <n0> <n1> <mask_x> <mask_y> <traction_x> <traction_y>
//! ```
//!
//! A Dirichlet entry prescribes `u_c = scale_c · u_D(t)` on every component
//! whose mask is 1. A Neumann entry applies the traction (MPa) on the edge
//! `n0 → n1`, scaled by the load waveform, on every masked component.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::element::{gauss_data, GaussPoint, GAUSS_PER_ELEMENT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletNode {
    pub node: usize,
    pub mask: [bool; 2],
    pub scale: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannEdge {
    pub nodes: [usize; 2],
    pub mask: [bool; 2],
    pub traction: [f64; 2],
}

/// 2D mesh of bilinear quadrilaterals with boundary tags and cached quadrature.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 4]>,
    dirichlet: Vec<DirichletNode>,
    neumann: Vec<NeumannEdge>,
    gauss: Vec<GaussPoint>,
}

impl Mesh {
    pub fn new(
        nodes: Vec<[f64; 2]>,
        elements: Vec<[usize; 4]>,
        dirichlet: Vec<DirichletNode>,
        neumann: Vec<NeumannEdge>,
    ) -> Result<Self> {
        let n = nodes.len();
        if nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Geometry("non-finite node coordinate".into()));
        }
        for (e, conn) in elements.iter().enumerate() {
            if let Some(&bad) = conn.iter().find(|&&i| i >= n) {
                return Err(Error::Geometry(format!(
                    "element {e} references node {bad}, but the mesh has {n} nodes"
                )));
            }
        }
        let mut constrained = vec![[false; 2]; n];
        for d in &dirichlet {
            if d.node >= n {
                return Err(Error::Geometry(format!("Dirichlet node {} out of range", d.node)));
            }
            for c in 0..2 {
                if d.mask[c] && constrained[d.node][c] {
                    return Err(Error::Argument(format!(
                        "node {} component {c} is constrained twice",
                        d.node
                    )));
                }
                constrained[d.node][c] |= d.mask[c];
            }
        }
        for edge in &neumann {
            for &node in &edge.nodes {
                if node >= n {
                    return Err(Error::Geometry(format!("Neumann node {node} out of range")));
                }
                for c in 0..2 {
                    if edge.mask[c] && constrained[node][c] {
                        return Err(Error::Argument(format!(
                            "node {node} component {c} is both Dirichlet and Neumann"
                        )));
                    }
                }
            }
        }
        let mut gauss = Vec::with_capacity(elements.len() * GAUSS_PER_ELEMENT);
        for (e, conn) in elements.iter().enumerate() {
            let coords = conn.map(|i| nodes[i]);
            let data = gauss_data(&coords)
                .map_err(|err| Error::Geometry(format!("element {e}: {err}")))?;
            gauss.extend_from_slice(&data);
        }
        Ok(Mesh {
            nodes,
            elements,
            dirichlet,
            neumann,
            gauss,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn dirichlet(&self) -> &[DirichletNode] {
        &self.dirichlet
    }

    pub fn neumann(&self) -> &[NeumannEdge] {
        &self.neumann
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn dof_count(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn gauss_count(&self) -> usize {
        self.gauss.len()
    }

    /// Quadrature data, indexed by global Gauss point `4·element + local`.
    pub fn gauss_points(&self) -> &[GaussPoint] {
        &self.gauss
    }

    pub fn element_gauss(&self, element: usize) -> &[GaussPoint] {
        &self.gauss[GAUSS_PER_ELEMENT * element..GAUSS_PER_ELEMENT * (element + 1)]
    }

    pub fn element_dofs(&self, element: usize) -> [usize; 8] {
        let c = self.elements[element];
        [
            2 * c[0],
            2 * c[0] + 1,
            2 * c[1],
            2 * c[1] + 1,
            2 * c[2],
            2 * c[2] + 1,
            2 * c[3],
            2 * c[3] + 1,
        ]
    }

    pub fn element_of_gauss(gauss_point: usize) -> usize {
        gauss_point / GAUSS_PER_ELEMENT
    }

    pub fn area(&self) -> f64 {
        self.gauss.iter().map(|g| g.weight).sum()
    }

    /// Copy of the mesh with a different set of boundary tags.
    pub fn with_boundary(
        &self,
        dirichlet: Vec<DirichletNode>,
        neumann: Vec<NeumannEdge>,
    ) -> Result<Self> {
        Mesh::new(self.nodes.clone(), self.elements.clone(), dirichlet, neumann)
    }

    /// Gauss point closest to a location.
    pub fn nearest_gauss_point(&self, x: [f64; 2]) -> usize {
        let d2 = |g: &GaussPoint| (g.position[0] - x[0]).powi(2) + (g.position[1] - x[1]).powi(2);
        (0..self.gauss.len())
            .min_by(|&a, &b| d2(&self.gauss[a]).total_cmp(&d2(&self.gauss[b])))
            .unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:.17e} {:.17e}", p[0], p[1]);
        }
        let _ = writeln!(s, "elements {}", self.elements.len());
        for c in &self.elements {
            let _ = writeln!(s, "{} {} {} {}", c[0], c[1], c[2], c[3]);
        }
        let _ = writeln!(s, "dirichlet {}", self.dirichlet.len());
        for d in &self.dirichlet {
            let _ = writeln!(
                s,
                "{} {} {} {:.17e} {:.17e}",
                d.node, d.mask[0] as u8, d.mask[1] as u8, d.scale[0], d.scale[1]
            );
        }
        let _ = writeln!(s, "neumann {}", self.neumann.len());
        for e in &self.neumann {
            let _ = writeln!(
                s,
                "{} {} {} {} {:.17e} {:.17e}",
                e.nodes[0], e.nodes[1], e.mask[0] as u8, e.mask[1] as u8, e.traction[0], e.traction[1]
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let mut nodes = Vec::new();
        let mut elements = Vec::new();
        let mut dirichlet = Vec::new();
        let mut neumann = Vec::new();
        let mut seen_nodes = false;
        while let Some((lineno, header)) = lines.next() {
            let mut parts = header.split_whitespace();
            let keyword = parts.next().unwrap_or("");
            let count: usize = parts
                .next()
                .ok_or_else(|| parse_err(lineno, "missing count"))?
                .parse()
                .map_err(|_| parse_err(lineno, "invalid count"))?;
            let mut rows = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, line) = lines
                    .next()
                    .ok_or_else(|| parse_err(lineno, "unexpected end of file"))?;
                rows.push((ln, line.split_whitespace().collect::<Vec<_>>()));
            }
            match keyword {
                "nodes" => {
                    seen_nodes = true;
                    for (ln, f) in rows {
                        let v = parse_fields::<f64>(ln, &f, 2)?;
                        nodes.push([v[0], v[1]]);
                    }
                }
                "elements" => {
                    for (ln, f) in rows {
                        let v = parse_fields::<usize>(ln, &f, 4)?;
                        elements.push([v[0], v[1], v[2], v[3]]);
                    }
                }
                "dirichlet" => {
                    for (ln, f) in rows {
                        if f.len() != 5 {
                            return Err(parse_err(ln, "dirichlet rows have 5 fields"));
                        }
                        let node = parse_one::<usize>(ln, f[0])?;
                        let mask = [parse_mask(ln, f[1])?, parse_mask(ln, f[2])?];
                        let scale = [parse_one::<f64>(ln, f[3])?, parse_one::<f64>(ln, f[4])?];
                        dirichlet.push(DirichletNode { node, mask, scale });
                    }
                }
                "neumann" => {
                    for (ln, f) in rows {
                        if f.len() != 6 {
                            return Err(parse_err(ln, "neumann rows have 6 fields"));
                        }
                        let n0 = parse_one::<usize>(ln, f[0])?;
                        let n1 = parse_one::<usize>(ln, f[1])?;
                        let mask = [parse_mask(ln, f[2])?, parse_mask(ln, f[3])?];
                        let traction = [parse_one::<f64>(ln, f[4])?, parse_one::<f64>(ln, f[5])?];
                        neumann.push(NeumannEdge {
                            nodes: [n0, n1],
                            mask,
                            traction,
                        });
                    }
                }
                other => return Err(parse_err(lineno, &format!("unknown block '{other}'"))),
            }
        }
        if !seen_nodes {
            return Err(Error::Parse("mesh file has no 'nodes' block".into()));
        }
        Mesh::new(nodes, elements, dirichlet, neumann)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Mesh::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Rectangular bar centred at the origin, clamped at both ends.
    ///
    /// The left end is driven with `u_x = −u_D(t)` and the right end with
    /// `u_x = +u_D(t)`; `u_y = 0` on both ends.
    pub fn rectangular_bar(length: f64, height: f64, nx: usize, ny: usize) -> Result<Self> {
        structured(nx, ny, |s, t| {
            [(s - 0.5) * length, (t - 0.5) * height]
        })
    }

    /// Dog-bone specimen built on a structured `nx × ny` grid.
    pub fn dog_bone(params: &DogBone) -> Result<Self> {
        params.validate()?;
        let p = *params;
        structured(p.nx, p.ny, move |s, t| {
            let x = (s - 0.5) * p.length;
            [x, (t - 0.5) * p.width_at(x)]
        })
    }
}

/// Parametric dog-bone outline: wide grips, narrow gauge section and cosine
/// fillets in between. The default reproduces a 50 × 10 element specimen
/// (500 elements, 561 nodes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DogBone {
    pub length: f64,
    pub grip_width: f64,
    pub gauge_width: f64,
    pub gauge_length: f64,
    pub fillet_length: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for DogBone {
    fn default() -> Self {
        DogBone {
            length: 100.0,
            grip_width: 20.0,
            gauge_width: 10.0,
            gauge_length: 40.0,
            fillet_length: 15.0,
            nx: 50,
            ny: 10,
        }
    }
}

impl DogBone {
    fn validate(&self) -> Result<()> {
        let ok = self.length > 0.0
            && self.gauge_width > 0.0
            && self.grip_width >= self.gauge_width
            && self.gauge_length >= 0.0
            && self.fillet_length >= 0.0
            && self.gauge_length + 2.0 * self.fillet_length <= self.length
            && self.nx > 0
            && self.ny > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("inconsistent dog-bone parameters {self:?}")))
        }
    }

    pub fn width_at(&self, x: f64) -> f64 {
        let a = x.abs() - 0.5 * self.gauge_length;
        if a <= 0.0 {
            self.gauge_width
        } else if a >= self.fillet_length {
            self.grip_width
        } else {
            let s = a / self.fillet_length;
            let blend = 0.5 * (1.0 - (std::f64::consts::PI * s).cos());
            self.gauge_width + (self.grip_width - self.gauge_width) * blend
        }
    }
}

/// Structured grid mapped by `map(s, t)` with `(s, t) ∈ [0,1]²`; nodes are
/// numbered with the short (vertical) index running fastest.
fn structured(nx: usize, ny: usize, map: impl Fn(f64, f64) -> [f64; 2]) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::Argument("grid needs at least one element per direction".into()));
    }
    let id = |i: usize, j: usize| i * (ny + 1) + j;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            nodes.push(map(i as f64 / nx as f64, j as f64 / ny as f64));
        }
    }
    let mut elements = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            elements.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let mut dirichlet = Vec::with_capacity(2 * (ny + 1));
    for (i, sign) in [(0, -1.0), (nx, 1.0)] {
        for j in 0..=ny {
            dirichlet.push(DirichletNode {
                node: id(i, j),
                mask: [true, true],
                scale: [sign, 0.0],
            });
        }
    }
    Mesh::new(nodes, elements, dirichlet, Vec::new())
}

fn parse_err(lineno: usize, msg: &str) -> Error {
    Error::Parse(format!("line {}: {msg}", lineno + 1))
}

fn parse_one<T: std::str::FromStr>(lineno: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| parse_err(lineno, &format!("cannot parse '{s}'")))
}

fn parse_fields<T: std::str::FromStr>(lineno: usize, f: &[&str], n: usize) -> Result<Vec<T>> {
    if f.len() != n {
        return Err(parse_err(lineno, &format!("expected {n} fields, got {}", f.len())));
    }
    f.iter().map(|s| parse_one(lineno, s)).collect()
}

fn parse_mask(lineno: usize, s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(parse_err(lineno, "component masks are 0 or 1")),
    }
}
