//! Finite regions of the square lattice, their graph structure, boundaries,
//! and the extended graph obtained by placing a site at each edge midpoint.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("annulus requires 0 <= l1 < l2, got l1={l1}, l2={l2}")]
    InvalidAnnulus { l1: u32, l2: u32 },
    #[error("empty region")]
    EmptyRegion,
}

/// A vertex of Z^2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub x: i32,
    pub y: i32,
}

impl Vertex {
    pub const ORIGIN: Vertex = Vertex { x: 0, y: 0 };

    pub fn new(x: i32, y: i32) -> Self {
        Vertex { x, y }
    }

    /// Graph (l1) distance on Z^2.
    pub fn distance(self, other: Vertex) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// The four lattice neighbors.
    pub fn neighbors(self) -> [Vertex; 4] {
        [
            Vertex::new(self.x + 1, self.y),
            Vertex::new(self.x - 1, self.y),
            Vertex::new(self.x, self.y + 1),
            Vertex::new(self.x, self.y - 1),
        ]
    }
}

/// A finite vertex set of Z^2 with its induced nearest-neighbor edges.
///
/// Vertices are kept in canonical sorted order so enumeration and RNG
/// consumption downstream are deterministic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    vertices: Vec<Vertex>,
    /// Induced edges as index pairs `[i, j]` with `i < j`, sorted.
    edges: Vec<[u32; 2]>,
}

impl Region {
    pub fn from_vertices(vertices: impl IntoIterator<Item = Vertex>) -> Self {
        let set: BTreeSet<Vertex> = vertices.into_iter().collect();
        let vertices: Vec<Vertex> = set.into_iter().collect();
        let mut edges = Vec::new();
        for (i, &v) in vertices.iter().enumerate() {
            // Only look "up" in canonical order: +x and +y neighbors.
            for n in [Vertex::new(v.x + 1, v.y), Vertex::new(v.x, v.y + 1)] {
                if let Ok(j) = vertices.binary_search(&n) {
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    edges.push([a as u32, b as u32]);
                }
            }
        }
        edges.sort_unstable();
        Region { vertices, edges }
    }

    /// Graph-distance ball of radius `l` around `center` (the spec's box).
    pub fn ball(center: Vertex, l: u32) -> Self {
        let l = l as i32;
        let mut vs = Vec::new();
        for dx in -l..=l {
            let r = l - dx.abs();
            for dy in -r..=r {
                vs.push(Vertex::new(center.x + dx, center.y + dy));
            }
        }
        Region::from_vertices(vs)
    }

    /// Vertices with l1 < d(center, v) <= l2, with induced edges.
    pub fn annulus(center: Vertex, l1: u32, l2: u32) -> Result<Self, LatticeError> {
        if l1 >= l2 {
            return Err(LatticeError::InvalidAnnulus { l1, l2 });
        }
        let big = Region::ball(center, l2);
        Ok(Region::from_vertices(
            big.vertices
                .iter()
                .copied()
                .filter(|v| v.distance(center) > l1),
        ))
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, idx: u32) -> Vertex {
        self.vertices[idx as usize]
    }

    pub fn edge_endpoints(&self, edge: u32) -> (Vertex, Vertex) {
        let [a, b] = self.edges[edge as usize];
        (self.vertices[a as usize], self.vertices[b as usize])
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn vertex_index(&self, v: Vertex) -> Option<u32> {
        self.vertices.binary_search(&v).ok().map(|i| i as u32)
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.vertices.iter().all(|&v| other.contains(v))
    }

    /// Vertices of `self` having a lattice neighbor outside `self`.
    ///
    /// With `ambient = None` all four Z^2 neighbors count; otherwise only
    /// neighbors lying in `ambient` are considered missing-from-`self`.
    pub fn internal_boundary(&self, ambient: Option<&Region>) -> Vec<Vertex> {
        self.vertices
            .iter()
            .copied()
            .filter(|v| {
                v.neighbors().iter().any(|&n| {
                    !self.contains(n) && ambient.map_or(true, |a| a.contains(n))
                })
            })
            .collect()
    }
}

/// Serializable description of a region, used by CLI configuration.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegionSpec {
    Box { center: [i32; 2], radius: u32 },
    Annulus { center: [i32; 2], l1: u32, l2: u32 },
    Explicit { vertices: Vec<[i32; 2]> },
}

impl RegionSpec {
    pub fn build(&self) -> Result<Region, LatticeError> {
        match self {
            RegionSpec::Box { center, radius } => {
                Ok(Region::ball(Vertex::new(center[0], center[1]), *radius))
            }
            RegionSpec::Annulus { center, l1, l2 } => {
                Region::annulus(Vertex::new(center[0], center[1]), *l1, *l2)
            }
            RegionSpec::Explicit { vertices } => {
                if vertices.is_empty() {
                    return Err(LatticeError::EmptyRegion);
                }
                Ok(Region::from_vertices(
                    vertices.iter().map(|&[x, y]| Vertex::new(x, y)),
                ))
            }
        }
    }
}

/// A site of the extended graph: vertices first (region order), then one
/// mid-edge site per induced edge (edge order).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteId(pub u32);

/// The extended graph of a region: vertex sites plus one mid-edge site per
/// edge, adjacency {v, e-midpoint} for v an endpoint of e.
///
/// Site coordinates are stored doubled so mid-edges stay integral: a vertex
/// (x, y) sits at (2x, 2y), a mid-edge at the sum of its endpoints.
#[derive(Clone, Debug)]
pub struct ExtendedGraph {
    n_vertices: u32,
    n_edges: u32,
    adjacency: Vec<Vec<SiteId>>,
    coords_x2: Vec<(i32, i32)>,
}

impl ExtendedGraph {
    pub fn new(region: &Region) -> Self {
        let n_vertices = region.num_vertices() as u32;
        let n_edges = region.num_edges() as u32;
        let n = (n_vertices + n_edges) as usize;
        let mut adjacency = vec![Vec::new(); n];
        let mut coords_x2 = Vec::with_capacity(n);
        for v in region.vertices() {
            coords_x2.push((2 * v.x, 2 * v.y));
        }
        for (e, &[a, b]) in region.edges().iter().enumerate() {
            let m = SiteId(n_vertices + e as u32);
            adjacency[a as usize].push(m);
            adjacency[b as usize].push(m);
            adjacency[m.0 as usize].push(SiteId(a));
            adjacency[m.0 as usize].push(SiteId(b));
            let (u, w) = (region.vertex(a), region.vertex(b));
            coords_x2.push((u.x + w.x, u.y + w.y));
        }
        ExtendedGraph {
            n_vertices,
            n_edges,
            adjacency,
            coords_x2,
        }
    }

    pub fn n_sites(&self) -> usize {
        (self.n_vertices + self.n_edges) as usize
    }

    pub fn n_vertices(&self) -> u32 {
        self.n_vertices
    }

    pub fn n_edges(&self) -> u32 {
        self.n_edges
    }

    pub fn vertex_site(&self, vertex_idx: u32) -> SiteId {
        debug_assert!(vertex_idx < self.n_vertices);
        SiteId(vertex_idx)
    }

    pub fn midedge_site(&self, edge_idx: u32) -> SiteId {
        debug_assert!(edge_idx < self.n_edges);
        SiteId(self.n_vertices + edge_idx)
    }

    pub fn is_vertex_site(&self, s: SiteId) -> bool {
        s.0 < self.n_vertices
    }

    /// Vertex index for a vertex site, edge index for a mid-edge site.
    pub fn local_index(&self, s: SiteId) -> u32 {
        if self.is_vertex_site(s) {
            s.0
        } else {
            s.0 - self.n_vertices
        }
    }

    pub fn neighbors(&self, s: SiteId) -> &[SiteId] {
        &self.adjacency[s.0 as usize]
    }

    /// Doubled coordinates of a site.
    pub fn coords_x2(&self, s: SiteId) -> (i32, i32) {
        self.coords_x2[s.0 as usize]
    }

    /// l1 distance from `center` in doubled units (vertex rings sit at even
    /// values 2k, mid-edges between rings k and k+1 at 2k+1).
    pub fn distance_x2(&self, s: SiteId, center: Vertex) -> u32 {
        let (x, y) = self.coords_x2(s);
        x.abs_diff(2 * center.x) + y.abs_diff(2 * center.y)
    }

    pub fn sites(&self) -> impl Iterator<Item = SiteId> + '_ {
        (0..self.n_sites() as u32).map(SiteId)
    }
}
