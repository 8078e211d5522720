//! Conforming triangulations with newest-vertex bisection.
//!
//! Every element is stored counter-clockwise with its *newest vertex* in
//! local slot 0, so the refinement edge of element `[v0, v1, v2]` is always
//! `(v1, v2)`. Local edge `i` is the edge opposite local vertex `i`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use crate::error::MeshError;
use crate::fem::DiscreteField;

pub type Point = [f64; 2];

/// Local edge `i` as a pair of local vertex slots.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    generation: Vec<u32>,
    boundary: Vec<bool>,
    /// `neighbors[t][i]` is the element across local edge `i` of `t`.
    neighbors: Vec<[Option<usize>; 3]>,
}

/// How each cell of a structured square grid is split into triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SquareSplit {
    /// Two triangles per cell, cut along the lower-left to upper-right diagonal.
    Diagonal,
    /// Four triangles per cell around an added center vertex.
    #[default]
    Crisscross,
}

/// Elements to refine.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarkedSet(BTreeSet<usize>);

impl MarkedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: usize) -> bool {
        self.0.insert(t)
    }

    pub fn contains(&self, t: usize) -> bool {
        self.0.contains(&t)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn extend(&mut self, other: &MarkedSet) {
        self.0.extend(other.iter());
    }
}

impl FromIterator<usize> for MarkedSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// For each vertex created by [`Mesh::refine`], the coarse edge it bisects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parentage {
    pub coarse_vertices: usize,
    /// `parents[k]` belongs to fine vertex `coarse_vertices + k`.
    pub parents: Vec<[usize; 2]>,
}

/// An edge of the mesh with its one or two incident elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub elements: [Option<usize>; 2],
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        self.elements[1].is_some()
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Newest-vertex bisection of `[a, b, c]` at the midpoint `m` of `(b, c)`.
fn bisect(tri: [usize; 3], m: usize) -> ([usize; 3], [usize; 3]) {
    let [a, b, c] = tri;
    ([m, a, b], [m, c, a])
}

impl Mesh {
    /// Builds a mesh from counter-clockwise elements whose local vertex 0 is
    /// opposite the refinement edge.
    pub fn new(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        generation: Vec<u32>,
    ) -> Result<Self, MeshError> {
        assert_eq!(elements.len(), generation.len());
        for (t, e) in elements.iter().enumerate() {
            let area = signed_area(vertices[e[0]], vertices[e[1]], vertices[e[2]]);
            if !(area > 0.0) {
                return Err(MeshError::NonPositiveArea { element: t, area });
            }
        }

        let mut owner: HashMap<(usize, usize), (usize, usize)> =
            HashMap::with_capacity(elements.len() * 2);
        let mut neighbors = vec![[None; 3]; elements.len()];
        for (t, e) in elements.iter().enumerate() {
            for (i, [p, q]) in LOCAL_EDGES.iter().enumerate() {
                let key = edge_key(e[*p], e[*q]);
                match owner.get(&key) {
                    None => {
                        owner.insert(key, (t, i));
                    }
                    Some(&(s, j)) => {
                        if neighbors[s][j].is_some() {
                            return Err(MeshError::NonManifoldEdge(key.0, key.1));
                        }
                        neighbors[s][j] = Some(t);
                        neighbors[t][i] = Some(s);
                    }
                }
            }
        }

        let mut boundary = vec![false; vertices.len()];
        for (t, e) in elements.iter().enumerate() {
            for (i, [p, q]) in LOCAL_EDGES.iter().enumerate() {
                if neighbors[t][i].is_none() {
                    boundary[e[*p]] = true;
                    boundary[e[*q]] = true;
                }
            }
        }

        Ok(Self {
            vertices,
            elements,
            generation,
            boundary,
            neighbors,
        })
    }

    /// Builds a generation-0 mesh from arbitrary triangles, orienting each
    /// counter-clockwise and choosing its longest edge as refinement edge.
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let elements = triangles
            .into_iter()
            .map(|mut tri| {
                if signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) < 0.0 {
                    tri.swap(1, 2);
                }
                let len = |i: usize| {
                    let [p, q] = LOCAL_EDGES[i];
                    dist(vertices[tri[p]], vertices[tri[q]])
                };
                // first longest edge wins ties
                let mut longest = 0;
                for i in 1..3 {
                    if len(i) > len(longest) * (1.0 + 1e-12) {
                        longest = i;
                    }
                }
                [tri[longest], tri[(longest + 1) % 3], tri[(longest + 2) % 3]]
            })
            .collect::<Vec<_>>();
        let generation = vec![0; elements.len()];
        Self::new(vertices, elements, generation)
    }

    /// Structured triangulation of the unit square with `n_per_side` cells
    /// per side. `Diagonal` yields `2 n^2` elements, `Crisscross` `4 n^2`.
    pub fn unit_square(n_per_side: usize, split: SquareSplit) -> Self {
        assert!(n_per_side >= 1, "n_per_side must be at least 1");
        let n = n_per_side;
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let grid = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1));
                match split {
                    SquareSplit::Diagonal => {
                        triangles.push([a, b, c]);
                        triangles.push([a, c, d]);
                    }
                    SquareSplit::Crisscross => {
                        let center = vertices.len();
                        vertices.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
                        triangles.push([a, b, center]);
                        triangles.push([b, c, center]);
                        triangles.push([c, d, center]);
                        triangles.push([d, a, center]);
                    }
                }
            }
        }
        Self::from_triangles(vertices, triangles).expect("structured mesh is valid")
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn element(&self, t: usize) -> [usize; 3] {
        self.elements[t]
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    pub fn generations(&self) -> &[u32] {
        &self.generation
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn neighbor(&self, t: usize, local_edge: usize) -> Option<usize> {
        self.neighbors[t][local_edge]
    }

    /// Global vertex pair of the refinement edge of `t`.
    pub fn refinement_edge(&self, t: usize) -> [usize; 2] {
        let e = self.elements[t];
        [e[1], e[2]]
    }

    pub fn coords(&self, t: usize) -> [Point; 3] {
        let e = self.elements[t];
        [self.vertices[e[0]], self.vertices[e[1]], self.vertices[e[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.coords(t);
        signed_area(a, b, c)
    }

    /// Longest edge length of element `t`.
    pub fn element_diameter(&self, t: usize) -> Result<f64, MeshError> {
        if t >= self.elements.len() {
            return Err(MeshError::ElementOutOfRange {
                index: t,
                count: self.elements.len(),
            });
        }
        Ok(self.diameter(t))
    }

    pub(crate) fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.coords(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.num_elements()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    /// Diameter over inradius, the shape-regularity measure of `t`.
    pub fn shape_ratio(&self, t: usize) -> f64 {
        let [a, b, c] = self.coords(t);
        let perimeter = dist(a, b) + dist(b, c) + dist(c, a);
        let inradius = 2.0 * signed_area(a, b, c) / perimeter;
        self.diameter(t) / inradius
    }

    pub fn min_generation(&self) -> u32 {
        self.generation.iter().copied().min().unwrap_or(0)
    }

    /// All edges, each listed once, in order of first appearance.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.elements.len() * 3 / 2 + 1);
        for (t, e) in self.elements.iter().enumerate() {
            for (i, [p, q]) in LOCAL_EDGES.iter().enumerate() {
                match self.neighbors[t][i] {
                    Some(s) if s < t => {}
                    nb => out.push(Edge {
                        vertices: [e[*p], e[*q]],
                        elements: [Some(t), nb],
                    }),
                }
            }
        }
        out
    }

    /// Checks positive orientation and that every edge has one or two
    /// elements with no vertex lying in the interior of another edge.
    pub fn check_conforming(&self) -> Result<(), MeshError> {
        for t in 0..self.num_elements() {
            let area = self.area(t);
            if !(area > 0.0) {
                return Err(MeshError::NonPositiveArea { element: t, area });
            }
        }
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for e in &self.elements {
            for [p, q] in LOCAL_EDGES {
                *counts.entry(edge_key(e[p], e[q])).or_default() += 1;
            }
        }
        if let Some((k, _)) = counts.iter().find(|(_, &c)| c > 2) {
            return Err(MeshError::NonManifoldEdge(k.0, k.1));
        }
        // Any vertex lying strictly inside a single-sided edge is hanging.
        let single: Vec<(usize, usize)> =
            counts.iter().filter(|(_, &c)| c == 1).map(|(k, _)| *k).collect();
        let on_single: BTreeSet<usize> = single.iter().flat_map(|&(a, b)| [a, b]).collect();
        for &(a, b) in &single {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let len = dist(pa, pb);
            for &v in &on_single {
                if v == a || v == b {
                    continue;
                }
                let pv = self.vertices[v];
                let along = dist(pa, pv) + dist(pv, pb) - len;
                if along.abs() < 1e-12 * len {
                    return Err(MeshError::HangingVertex { vertex: v, a, b });
                }
            }
        }
        Ok(())
    }

    /// Newest-vertex bisection of the marked elements plus the conforming
    /// closure. Marked elements are bisected at least once.
    pub fn refine(&self, marked: &MarkedSet) -> Result<(Mesh, Parentage), MeshError> {
        let nt = self.num_elements();
        if let Some(t) = marked.iter().find(|&t| t >= nt) {
            return Err(MeshError::ElementOutOfRange { index: t, count: nt });
        }

        // Number edges and record the local-edge -> edge id map.
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::with_capacity(nt * 2);
        let mut edge_verts: Vec<[usize; 2]> = Vec::with_capacity(nt * 2);
        let mut elem_edges = vec![[0usize; 3]; nt];
        for (t, e) in self.elements.iter().enumerate() {
            for (i, [p, q]) in LOCAL_EDGES.iter().enumerate() {
                let key = edge_key(e[*p], e[*q]);
                let id = *edge_id.entry(key).or_insert_with(|| {
                    edge_verts.push([key.0, key.1]);
                    edge_verts.len() - 1
                });
                elem_edges[t][i] = id;
            }
        }

        let mut edge_marked = vec![false; edge_verts.len()];
        for t in marked.iter() {
            edge_marked[elem_edges[t][0]] = true;
        }

        // Closure: an element with any marked edge must bisect its refinement edge.
        let max_sweeps = edge_verts.len() + 2;
        let mut sweeps = 0;
        loop {
            let mut changed = false;
            for edges in &elem_edges {
                if !edge_marked[edges[0]] && (edge_marked[edges[1]] || edge_marked[edges[2]]) {
                    edge_marked[edges[0]] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            sweeps += 1;
            if sweeps > max_sweeps {
                return Err(MeshError::ClosureDiverged(sweeps));
            }
        }

        let mut vertices = self.vertices.clone();
        let mut parents = Vec::new();
        let mut midpoint = vec![usize::MAX; edge_verts.len()];
        for (id, &[a, b]) in edge_verts.iter().enumerate() {
            if edge_marked[id] {
                midpoint[id] = vertices.len();
                let (pa, pb) = (self.vertices[a], self.vertices[b]);
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                parents.push([a, b]);
            }
        }

        let mut elements = Vec::with_capacity(nt + 3 * parents.len());
        let mut generation = Vec::with_capacity(elements.capacity());
        for (t, &tri) in self.elements.iter().enumerate() {
            let g = self.generation[t];
            let edges = elem_edges[t];
            if !edge_marked[edges[0]] {
                elements.push(tri);
                generation.push(g);
                continue;
            }
            let (left, right) = bisect(tri, midpoint[edges[0]]);
            // `left` has refinement edge (v0, v1) = local edge 2 of `tri`,
            // `right` has (v2, v0) = local edge 1.
            for (child, parent_edge) in [(left, edges[2]), (right, edges[1])] {
                if edge_marked[parent_edge] {
                    let (c1, c2) = bisect(child, midpoint[parent_edge]);
                    elements.extend([c1, c2]);
                    generation.extend([g + 2, g + 2]);
                } else {
                    elements.push(child);
                    generation.push(g + 1);
                }
            }
        }

        let fine = Mesh::new(vertices, elements, generation)?;
        Ok((
            fine,
            Parentage {
                coarse_vertices: self.num_vertices(),
                parents,
            },
        ))
    }

    /// Refines every element of minimum generation.
    pub fn coarsest_elements(&self) -> MarkedSet {
        let g = self.min_generation();
        (0..self.num_elements()).filter(|&t| self.generation[t] == g).collect()
    }

    /// Element containing `p` together with its barycentric coordinates.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        for t in 0..self.num_elements() {
            let [a, b, c] = self.coords(t);
            let area = signed_area(a, b, c);
            let l0 = signed_area(p, b, c) / area;
            let l1 = signed_area(a, p, c) / area;
            let l2 = signed_area(a, b, p) / area;
            let tol = -1e-12;
            if l0 >= tol && l1 >= tol && l2 >= tol {
                return Some((t, [l0, l1, l2]));
            }
        }
        None
    }

    /// Writes the line-oriented dump: `vertices N`, `elements M`, then
    /// `x y boundary_flag` per vertex and `v0 v1 v2 generation` per element.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "vertices {}", self.num_vertices())?;
        writeln!(out, "elements {}", self.num_elements())?;
        let mut line = String::new();
        for (v, p) in self.vertices.iter().enumerate() {
            line.clear();
            let _ = write!(line, "{:.16e} {:.16e} {}", p[0], p[1], u8::from(self.boundary[v]));
            writeln!(out, "{line}")?;
        }
        for (t, e) in self.elements.iter().enumerate() {
            writeln!(out, "{} {} {} {}", e[0], e[1], e[2], self.generation[t])?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(input: R) -> Result<Self, MeshError> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), MeshError> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(MeshError::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                }),
                None => Err(MeshError::Parse {
                    line: 0,
                    reason: format!("unexpected end of input, expected {what}"),
                }),
            }
        };
        let header = |(no, l): (usize, String), key: &str| -> Result<usize, MeshError> {
            let mut it = l.split_whitespace();
            match (it.next(), it.next().map(str::parse::<usize>)) {
                (Some(k), Some(Ok(n))) if k == key => Ok(n),
                _ => Err(MeshError::Parse {
                    line: no,
                    reason: format!("expected '{key} <count>'"),
                }),
            }
        };
        let nv = header(next("vertex header")?, "vertices")?;
        let ne = header(next("element header")?, "elements")?;
        let bad = |line: usize, reason: &str| MeshError::Parse {
            line,
            reason: reason.to_string(),
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (no, l) = next("vertex")?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(no, "vertex line needs 'x y flag'"));
            }
            let x = f[0].parse().map_err(|_| bad(no, "bad x"))?;
            let y = f[1].parse().map_err(|_| bad(no, "bad y"))?;
            vertices.push([x, y]);
        }
        let mut elements = Vec::with_capacity(ne);
        let mut generation = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (no, l) = next("element")?;
            let f: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad(no, "element line needs four integers"))?;
            if f.len() != 4 || f[..3].iter().any(|&v| v >= nv) {
                return Err(bad(no, "element line needs 'v0 v1 v2 generation' with valid vertices"));
            }
            elements.push([f[0], f[1], f[2]]);
            generation.push(f[3] as u32);
        }
        Mesh::new(vertices, elements, generation)
    }
}

/// Transfers a field from `coarse` to the mesh produced by refining it.
/// New vertices take the mean of their parent-edge endpoints; boundary
/// vertices are set to zero.
pub fn interpolate(
    coarse: &Mesh,
    fine: &Mesh,
    parentage: &Parentage,
    field: &DiscreteField,
) -> Result<DiscreteField, MeshError> {
    if field.len() != coarse.num_vertices() || parentage.coarse_vertices != coarse.num_vertices() {
        return Err(MeshError::FieldLength {
            expected: coarse.num_vertices(),
            got: field.len(),
        });
    }
    let expected = coarse.num_vertices() + parentage.parents.len();
    if fine.num_vertices() != expected {
        return Err(MeshError::FieldLength {
            expected,
            got: fine.num_vertices(),
        });
    }
    let mut values = Vec::with_capacity(expected);
    values.extend_from_slice(field.values());
    for &[a, b] in &parentage.parents {
        values.push(0.5 * (values[a] + values[b]));
    }
    for (v, val) in values.iter_mut().enumerate() {
        if fine.is_boundary(v) {
            *val = 0.0;
        }
    }
    Ok(DiscreteField::from_values(values))
}
