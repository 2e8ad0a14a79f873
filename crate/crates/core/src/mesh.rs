//! Tetrahedral meshes, rest-state quantities, and the one-time virtual-node
//! cut preprocessing.
//!
//! Preprocessing duplicates every element that intersects the cutting
//! surface so each copy owns the material on one side, inserts a pair of
//! virtual nodes (barycentric points) on every intersected edge, and joins
//! the pair with a zero-rest-length cutting spring. The springs later carry
//! the damage model; the material-side edge sections carry knife contact.

use crate::error::{Result, SimError};
use crate::math::{Mat3, Vec3, Vec3f};
use crate::scalar::Real;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Rest-state tetrahedral discretization with precomputed element data.
#[derive(Clone, Debug)]
pub struct TetMesh {
    pub vertices: Vec<Vec3f>,
    pub tets: Vec<[u32; 4]>,
    /// Material density in kg/m^3.
    pub density: f64,
    /// Per-tet inverse rest-shape matrix `Dm^{-1}`.
    pub rest_inv: Vec<Mat3<f64>>,
    /// Per-tet rest volume in m^3.
    pub rest_volume: Vec<f64>,
    /// Per-vertex lumped mass in kg.
    pub mass: Vec<f64>,
}

const MIN_VOLUME: f64 = 1e-15;

impl TetMesh {
    /// Builds a mesh and validates it: indices in range, every tet with
    /// positive rest volume, lumped masses summing to density * volume.
    pub fn new(vertices: Vec<Vec3f>, tets: Vec<[u32; 4]>, density: f64) -> Result<Self> {
        let uniform = vec![0.25f64; tets.len()];
        Self::with_mass_factors(vertices, tets, density, &uniform)
    }

    /// `mass_factor[e]` is the fraction of element e's mass assigned to each
    /// of its four vertices (0.25 normally, 0.125 for duplicated copies).
    fn with_mass_factors(
        vertices: Vec<Vec3f>,
        tets: Vec<[u32; 4]>,
        density: f64,
        mass_factor: &[f64],
    ) -> Result<Self> {
        let n = vertices.len();
        let mut rest_inv = Vec::with_capacity(tets.len());
        let mut rest_volume = Vec::with_capacity(tets.len());
        let mut mass = vec![0.0f64; n];
        for (e, tet) in tets.iter().enumerate() {
            for &i in tet {
                if i as usize >= n {
                    return Err(SimError::IndexOutOfRange { element: e, index: i as usize, len: n });
                }
            }
            let [a, b, c, d] = tet.map(|i| vertices[i as usize]);
            let dm = Mat3::from_cols(b - a, c - a, d - a);
            let vol = dm.det() / 6.0;
            if vol <= MIN_VOLUME {
                return Err(SimError::DegenerateTet { element: e, volume: vol });
            }
            rest_inv.push(dm.inverse().ok_or(SimError::DegenerateTet { element: e, volume: vol })?);
            rest_volume.push(vol);
            let m = density * vol * mass_factor[e];
            for &i in tet {
                mass[i as usize] += m;
            }
        }
        Ok(TetMesh { vertices, tets, density, rest_inv, rest_volume, mass })
    }

    pub fn total_volume(&self) -> f64 {
        self.rest_volume.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Unique undirected edges, each as `(lo, hi)` in ascending order.
    pub fn unique_edges(&self) -> BTreeSet<(u32, u32)> {
        let mut edges = BTreeSet::new();
        for tet in &self.tets {
            for (p, q) in tet_edge_pairs(tet) {
                edges.insert(ordered(p, q));
            }
        }
        edges
    }
}

fn tet_edge_pairs(tet: &[u32; 4]) -> [(u32, u32); 6] {
    let [a, b, c, d] = *tet;
    [(a, b), (a, c), (a, d), (b, c), (b, d), (c, d)]
}

fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Prescribed cutting surface. The canonical case is a vertical plane at a
/// fixed x; arbitrary triangle soups are supported through per-edge
/// segment-triangle intersection.
#[derive(Clone, Debug)]
pub enum CutSurface {
    /// Plane `x = x_cut`, normal +x (the "above" side has larger x).
    PlaneX(f64),
    /// Watertight triangle strip across the cut band. Each triangle is a
    /// vertex triple; the normal (right-handed winding) points "above".
    Triangles(Vec<[Vec3f; 3]>),
}

impl CutSurface {
    pub fn plane_x(x_cut: f64) -> Self {
        CutSurface::PlaneX(x_cut)
    }
}

/// Which side of the cutting surface a vertex or a material portion is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Above,
    Below,
}

/// Interpolated node at barycentric coordinate `u` on an edge of the
/// duplicated mesh. Its kinematics are entirely determined by the two
/// parent vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualNode {
    pub parent_i: u32,
    pub parent_j: u32,
    pub u: f64,
    pub side: Side,
}

impl VirtualNode {
    /// Position `(1-u) x_i + u x_j`.
    pub fn position<T: Real>(&self, x: &[Vec3<T>]) -> Vec3<T> {
        let xi = x[self.parent_i as usize];
        let xj = x[self.parent_j as usize];
        xi.scale(xi.x.lift(1.0 - self.u)) + xj.scale(xj.x.lift(self.u))
    }

    /// Position and velocity interpolated with the same weights.
    pub fn state<T: Real>(&self, x: &[Vec3<T>], v: &[Vec3<T>]) -> (Vec3<T>, Vec3<T>) {
        (self.position(x), self.position(v))
    }
}

/// Zero-rest-length spring joining the two virtual nodes that originate
/// from the same original mesh edge, on opposite sides of the cut.
#[derive(Clone, Debug, PartialEq)]
pub struct CutSpring {
    pub node_above: u32,
    pub node_below: u32,
    /// Original (pre-duplication) edge, ascending order.
    pub orig_edge: (u32, u32),
    pub u: f64,
}

/// Material-side edge section participating in knife contact: the segment
/// from a real vertex to a virtual node. Empty-portion sections are not
/// emitted (they are contact-inert).
#[derive(Clone, Debug, PartialEq)]
pub struct ContactSection {
    /// Index of the real-material parent vertex (segment start).
    pub vertex: u32,
    /// Virtual node at the cut (segment end).
    pub node: u32,
    /// Spring receiving this section's knife force for the damage update.
    pub spring: u32,
}

/// Material fill of an element after preprocessing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fill {
    /// Untouched element, fully material.
    Full,
    /// Duplicated copy whose real material lies on the given side.
    Cut(Side),
}

/// A [`TetMesh`] augmented by the virtual-node cut preprocessing.
#[derive(Clone, Debug)]
pub struct CutMesh {
    pub base: TetMesh,
    pub virtual_nodes: Vec<VirtualNode>,
    pub springs: Vec<CutSpring>,
    pub sections: Vec<ContactSection>,
    /// Aligned with `base.tets`.
    pub fill: Vec<Fill>,
    pub n_original_vertices: usize,
    /// Plane shift applied to resolve a vertex lying exactly on the surface
    /// (0.0 when none was needed).
    pub shift_applied: f64,
}

impl CutMesh {
    pub fn n_springs(&self) -> usize {
        self.springs.len()
    }

    /// 2D interface coordinates (y, z) of each spring's rest position, used
    /// for optimal-transport parameter transfer.
    pub fn spring_interface_points(&self) -> Vec<[f64; 2]> {
        self.springs
            .iter()
            .map(|s| {
                let node = &self.virtual_nodes[s.node_above as usize];
                let p = node.position(&self.base.vertices);
                [p.y, p.z]
            })
            .collect()
    }
}

/// Classification of one edge crossing: parameter along the ascending edge
/// and which endpoint is above.
struct EdgeCut {
    u: f64,
    lo_side: Side,
}

/// One-time virtual node preprocessing. Non-intersected meshes come back
/// structurally identical with zero springs.
pub fn preprocess_cut(mesh: &TetMesh, surface: &CutSurface) -> Result<CutMesh> {
    match surface {
        CutSurface::PlaneX(x_cut) => {
            // A vertex exactly on the plane makes duplication ill-defined;
            // shift the plane by 1 nm until clear (warn via shift_applied).
            let mut shift = 0.0;
            for attempt in 0..4 {
                let c = x_cut + shift;
                let on_plane = mesh.vertices.iter().any(|v| (v.x - c).abs() < 1e-12);
                if !on_plane {
                    return preprocess_with(mesh, |a, b| plane_edge_cut(mesh, c, a, b), shift);
                }
                shift = 1e-9 * (attempt + 1) as f64;
            }
            Err(SimError::Config(format!(
                "cut plane x = {x_cut} keeps hitting vertices exactly after perturbation"
            )))
        }
        CutSurface::Triangles(tris) => {
            preprocess_with(mesh, |a, b| triangle_edge_cut(mesh, tris, a, b), 0.0)
        }
    }
}

fn plane_edge_cut(mesh: &TetMesh, c: f64, a: u32, b: u32) -> Result<Option<EdgeCut>> {
    let xa = mesh.vertices[a as usize].x;
    let xb = mesh.vertices[b as usize].x;
    let (sa, sb) = (xa > c, xb > c);
    if sa == sb {
        return Ok(None);
    }
    let u = (c - xa) / (xb - xa);
    Ok(Some(EdgeCut { u, lo_side: if sa { Side::Above } else { Side::Below } }))
}

fn triangle_edge_cut(
    mesh: &TetMesh,
    tris: &[[Vec3f; 3]],
    a: u32,
    b: u32,
) -> Result<Option<EdgeCut>> {
    let pa = mesh.vertices[a as usize];
    let pb = mesh.vertices[b as usize];
    let mut found: Option<EdgeCut> = None;
    for tri in tris {
        if let Some((u, above_at_a)) = segment_triangle(pa, pb, tri)? {
            if let Some(prev) = &found {
                // A hit on an edge shared by two triangles is the same
                // crossing; genuinely distinct crossings violate the
                // watertight-band precondition.
                if (prev.u - u).abs() < 1e-9 {
                    continue;
                }
                return Err(SimError::Config(format!(
                    "edge ({a}, {b}) crosses the cutting surface more than once"
                )));
            }
            found = Some(EdgeCut {
                u,
                lo_side: if above_at_a { Side::Above } else { Side::Below },
            });
        }
    }
    Ok(found)
}

/// Segment-triangle intersection. Returns the segment parameter and whether
/// the segment start lies on the normal ("above") side.
fn segment_triangle(pa: Vec3f, pb: Vec3f, tri: &[Vec3f; 3]) -> Result<Option<(f64, bool)>> {
    let n = (tri[1] - tri[0]).cross(tri[2] - tri[0]);
    let da = (pa - tri[0]).dot(n);
    let db = (pb - tri[0]).dot(n);
    if da == 0.0 && db == 0.0 {
        return Err(SimError::Config(
            "edge lies exactly inside a cutting-surface triangle plane".into(),
        ));
    }
    if (da > 0.0) == (db > 0.0) {
        return Ok(None);
    }
    let u = da / (da - db);
    let p = pa + (pb - pa) * u;
    // Inside test via same-side edge functions.
    for k in 0..3 {
        let e = tri[(k + 1) % 3] - tri[k];
        if e.cross(p - tri[k]).dot(n) < 0.0 {
            return Ok(None);
        }
    }
    Ok(Some((u, da > 0.0)))
}

fn preprocess_with(
    mesh: &TetMesh,
    edge_cut: impl Fn(u32, u32) -> Result<Option<EdgeCut>>,
    shift_applied: f64,
) -> Result<CutMesh> {
    // Pass 1: find crossing edges and classify vertex sides.
    let mut cuts: BTreeMap<(u32, u32), EdgeCut> = BTreeMap::new();
    let mut side: BTreeMap<u32, Side> = BTreeMap::new();
    let mut intersected: Vec<usize> = Vec::new();
    for (e, tet) in mesh.tets.iter().enumerate() {
        let mut hit = false;
        for (p, q) in tet_edge_pairs(tet) {
            let (lo, hi) = ordered(p, q);
            if let Some(cut) = edge_cut(lo, hi).map_err(|err| match err {
                SimError::Config(_) => SimError::DegenerateCut { element: e },
                other => other,
            })? {
                if cut.u <= 0.0 || cut.u >= 1.0 {
                    return Err(SimError::DegenerateCut { element: e });
                }
                let hi_side = opposite(cut.lo_side);
                for (v, s) in [(lo, cut.lo_side), (hi, hi_side)] {
                    if let Some(prev) = side.insert(v, s) {
                        if prev != s {
                            return Err(SimError::Config(format!(
                                "inconsistent side classification at vertex {v}; \
                                 cutting surface is not watertight across the band"
                            )));
                        }
                    }
                }
                cuts.insert((lo, hi), cut);
                hit = true;
            }
        }
        if hit {
            intersected.push(e);
        }
    }

    if intersected.is_empty() {
        return Ok(CutMesh {
            base: mesh.clone(),
            virtual_nodes: Vec::new(),
            springs: Vec::new(),
            sections: Vec::new(),
            fill: vec![Fill::Full; mesh.tets.len()],
            n_original_vertices: mesh.vertices.len(),
            shift_applied,
        });
    }

    // Every vertex of an intersected tet must have a known side (it always
    // touches a crossing edge when the band is watertight).
    for &e in &intersected {
        for &v in &mesh.tets[e] {
            if !side.contains_key(&v) {
                return Err(SimError::Config(format!(
                    "vertex {v} of intersected element {e} has no side classification"
                )));
            }
        }
    }

    // Pass 2: duplicate vertices used by intersected tets (one ghost per
    // vertex, serving all opposite-side copies).
    let mut vertices = mesh.vertices.clone();
    let mut dup: BTreeMap<u32, u32> = BTreeMap::new();
    let mut band_vertices: BTreeSet<u32> = BTreeSet::new();
    for &e in &intersected {
        band_vertices.extend(mesh.tets[e].iter().copied());
    }
    for &v in &band_vertices {
        let ghost = vertices.len() as u32;
        vertices.push(mesh.vertices[v as usize]);
        dup.insert(v, ghost);
    }
    let map_to = |v: u32, want: Side| -> u32 {
        if side[&v] == want {
            v
        } else {
            dup[&v]
        }
    };

    // Pass 3: rebuild the element list. Intersected tets become an
    // above-material copy in place plus an appended below-material copy;
    // both carry the full element for dynamics with mass halved per copy.
    let mut tets = mesh.tets.clone();
    let mut fill = vec![Fill::Full; mesh.tets.len()];
    let mut mass_factor = vec![0.25f64; mesh.tets.len()];
    for &e in &intersected {
        let orig = mesh.tets[e];
        tets[e] = orig.map(|v| map_to(v, Side::Above));
        fill[e] = Fill::Cut(Side::Above);
        mass_factor[e] = 0.125;
        tets.push(orig.map(|v| map_to(v, Side::Below)));
        fill.push(Fill::Cut(Side::Below));
        mass_factor.push(0.125);
    }

    // Pass 4: virtual nodes, springs, and material-side contact sections,
    // one pair per unique crossing edge.
    let mut virtual_nodes = Vec::with_capacity(2 * cuts.len());
    let mut springs = Vec::with_capacity(cuts.len());
    let mut sections = Vec::with_capacity(2 * cuts.len());
    for (&(lo, hi), cut) in &cuts {
        let spring_idx = springs.len() as u32;
        let node_above = virtual_nodes.len() as u32;
        virtual_nodes.push(VirtualNode {
            parent_i: map_to(lo, Side::Above),
            parent_j: map_to(hi, Side::Above),
            u: cut.u,
            side: Side::Above,
        });
        let node_below = virtual_nodes.len() as u32;
        virtual_nodes.push(VirtualNode {
            parent_i: map_to(lo, Side::Below),
            parent_j: map_to(hi, Side::Below),
            u: cut.u,
            side: Side::Below,
        });
        let (above_vert, below_vert) = if cut.lo_side == Side::Above {
            (lo, hi)
        } else {
            (hi, lo)
        };
        sections.push(ContactSection { vertex: above_vert, node: node_above, spring: spring_idx });
        sections.push(ContactSection { vertex: below_vert, node: node_below, spring: spring_idx });
        springs.push(CutSpring { node_above, node_below, orig_edge: (lo, hi), u: cut.u });
    }

    let base = TetMesh::with_mass_factors(vertices, tets, mesh.density, &mass_factor)?;
    Ok(CutMesh {
        base,
        virtual_nodes,
        springs,
        sections,
        fill,
        n_original_vertices: mesh.vertices.len(),
        shift_applied,
    })
}

fn opposite(s: Side) -> Side {
    match s {
        Side::Above => Side::Below,
        Side::Below => Side::Above,
    }
}

/// Volume of the part of a tetrahedron on one side of the plane `x = c`.
/// Used to verify that the material portions of a duplicated pair partition
/// the original element volume.
pub fn tet_halfspace_volume(verts: [Vec3f; 4], c: f64, side: Side) -> f64 {
    // Clip each outward face against the half-space and close the cut with
    // a cap, then integrate the divergence theorem over the boundary.
    let keep = |p: Vec3f| -> bool {
        match side {
            Side::Above => p.x >= c,
            Side::Below => p.x <= c,
        }
    };
    let faces = [[0usize, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
    let mut volume6 = 0.0;
    let mut cap: Vec<Vec3f> = Vec::new();
    for f in faces {
        let poly: Vec<Vec3f> = f.iter().map(|&i| verts[i]).collect();
        let mut clipped: Vec<Vec3f> = Vec::new();
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let (ka, kb) = (keep(a), keep(b));
            if ka {
                clipped.push(a);
            }
            if ka != kb {
                let t = (c - a.x) / (b.x - a.x);
                let p = a + (b - a) * t;
                clipped.push(p);
                cap.push(p);
            }
        }
        for i in 1..clipped.len().saturating_sub(1) {
            volume6 += clipped[0].dot(clipped[i].cross(clipped[i + 1]));
        }
    }
    if cap.len() >= 3 {
        // Orient the cap outward (normal -x for Above, +x for Below) by
        // sorting its points by angle in the (y, z) plane.
        let centroid = cap.iter().fold(Vec3::new(0.0, 0.0, 0.0), |s, &p| s + p)
            * (1.0 / cap.len() as f64);
        let mut pts = cap;
        pts.sort_by(|p, q| {
            let ap = crate::scalar::atan2(p.z - centroid.z, p.y - centroid.y);
            let aq = crate::scalar::atan2(q.z - centroid.z, q.y - centroid.y);
            ap.partial_cmp(&aq).unwrap_or(core::cmp::Ordering::Equal)
        });
        let mut cap6 = 0.0;
        for i in 1..pts.len() - 1 {
            cap6 += pts[0].dot(pts[i].cross(pts[i + 1]));
        }
        // Winding above gives outward -x for Above side; flip as needed.
        let n = (pts[1] - pts[0]).cross(pts[2.min(pts.len() - 1)] - pts[0]);
        let want_neg_x = matches!(side, Side::Above);
        if (n.x < 0.0) != want_neg_x {
            cap6 = -cap6;
        }
        volume6 += cap6;
    }
    (volume6 / 6.0).abs()
}

// ---------------------------------------------------------------------------
// Mesh generators used by tests and the CLI.
// ---------------------------------------------------------------------------

/// Single right tetrahedron with legs of length `scale` at the origin.
pub fn single_tet(scale: f64, density: f64) -> TetMesh {
    let s = scale;
    let vertices = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(s, 0.0, 0.0),
        Vec3::new(0.0, s, 0.0),
        Vec3::new(0.0, 0.0, s),
    ];
    TetMesh::new(vertices, vec![[0, 1, 2, 3]], density).expect("canonical tet is valid")
}

/// Axis-aligned box split into `nx*ny*nz` cells of six tetrahedra each
/// (Kuhn split; conforming across cells).
pub fn box_mesh(
    origin: Vec3f,
    size: Vec3f,
    divisions: (usize, usize, usize),
    density: f64,
) -> TetMesh {
    let (nx, ny, nz) = divisions;
    assert!(nx > 0 && ny > 0 && nz > 0);
    let vid = |i: usize, j: usize, k: usize| -> usize {
        i * (ny + 1) * (nz + 1) + j * (nz + 1) + k
    };
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                vertices.push(Vec3::new(
                    origin.x + size.x * i as f64 / nx as f64,
                    origin.y + size.y * j as f64 / ny as f64,
                    origin.z + size.z * k as f64 / nz as f64,
                ));
            }
        }
    }
    // Six tets around the main diagonal c000-c111 of each cell.
    const PATHS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(nx * ny * nz * 6);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                for path in PATHS {
                    let mut corner = [0usize; 3];
                    let mut quad = [vid(i, j, k); 4];
                    for (step, &axis) in path.iter().enumerate() {
                        corner[axis] = 1;
                        quad[step + 1] = vid(i + corner[0], j + corner[1], k + corner[2]);
                    }
                    tets.push(orient_positive(&vertices, quad));
                }
            }
        }
    }
    TetMesh::new(vertices, tets, density).expect("box mesh is valid")
}

/// Unit-cube five-tetrahedron split (four corner tets and one central).
pub fn cube_5tet(origin: Vec3f, size: f64, density: f64) -> TetMesh {
    let corner = |bx: usize, by: usize, bz: usize| {
        Vec3::new(
            origin.x + size * bx as f64,
            origin.y + size * by as f64,
            origin.z + size * bz as f64,
        )
    };
    let mut vertices = Vec::new();
    for b in 0..8usize {
        vertices.push(corner(b & 1, (b >> 1) & 1, (b >> 2) & 1));
    }
    let raw = [[0, 1, 2, 4], [1, 2, 3, 7], [1, 4, 5, 7], [2, 4, 6, 7], [1, 2, 4, 7]];
    let tets = raw.map(|t| orient_positive(&vertices, t.map(|i: i32| i as usize))).to_vec();
    TetMesh::new(vertices, tets, density).expect("cube split is valid")
}

fn orient_positive(vertices: &[Vec3f], idx: [usize; 4]) -> [u32; 4] {
    let [a, b, c, d] = idx.map(|i| vertices[i]);
    let det = Mat3::from_cols(b - a, c - a, d - a).det();
    if det >= 0.0 {
        idx.map(|i| i as u32)
    } else {
        [idx[0] as u32, idx[1] as u32, idx[3] as u32, idx[2] as u32]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tet_volume_and_mass() {
        let mesh = single_tet(1.0, 600.0);
        assert!((mesh.total_volume() - 1.0 / 6.0).abs() < 1e-15);
        assert!((mesh.total_mass() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn cube_5tet_volumes_sum_to_cube() {
        let mesh = cube_5tet(Vec3::new(0.0, 0.0, 0.0), 1.0, 787.0);
        assert_eq!(mesh.tets.len(), 5);
        let sum: f64 = mesh.rest_volume.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "cube tet volumes sum to {sum}");
    }

    #[test]
    fn box_mesh_conforms_and_fills_volume() {
        let mesh = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.02, 0.01, 0.03), (2, 1, 3), 787.0);
        assert!((mesh.total_volume() - 0.02 * 0.01 * 0.03).abs() < 1e-12);
        assert!((mesh.total_mass() - 787.0 * 0.02 * 0.01 * 0.03).abs() < 1e-9);
    }

    #[test]
    fn mass_sums_match_density_times_volume() {
        let mesh = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.02, 0.02, 0.02), (2, 2, 2), 630.0);
        let expect = 630.0 * mesh.total_volume();
        assert!((mesh.total_mass() - expect).abs() / expect < 1e-9);
    }

    #[test]
    fn invalid_index_and_degenerate_tet_are_reported() {
        let verts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let err = TetMesh::new(verts.clone(), vec![[0, 1, 2, 9]], 1.0).unwrap_err();
        assert!(matches!(err, SimError::IndexOutOfRange { element: 0, index: 9, .. }));

        // Inverted tet: swapped winding gives negative volume.
        let err = TetMesh::new(verts, vec![[0, 2, 1, 3]], 1.0).unwrap_err();
        assert!(matches!(err, SimError::DegenerateTet { element: 0, .. }));
    }

    #[test]
    fn virtual_node_interpolation() {
        let x = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        let v = vec![Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 3.0, 0.0)];
        let node = VirtualNode { parent_i: 0, parent_j: 1, u: 0.5, side: Side::Above };
        let (p, vel) = node.state(&x, &v);
        assert_eq!(p, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(vel, Vec3::new(0.0, 2.0, 0.0));

        // u = 0 returns the first endpoint exactly.
        let node0 = VirtualNode { parent_i: 0, parent_j: 1, u: 0.0, side: Side::Above };
        assert_eq!(node0.position(&x), x[0]);

        // Random u matches the direct formula.
        let u = 0.372519;
        let node_u = VirtualNode { parent_i: 0, parent_j: 1, u, side: Side::Below };
        let p = node_u.position(&x);
        assert!((p.x - (1.0 - u) * 0.0 - u * 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_tet_cut_topology() {
        // Plane through three edges: 2 elements, 6 virtual nodes, 3 springs.
        let mesh = single_tet(1.0, 600.0);
        let cut = preprocess_cut(&mesh, &CutSurface::plane_x(0.25)).unwrap();
        assert_eq!(cut.base.tets.len(), 2);
        assert_eq!(cut.virtual_nodes.len(), 6);
        assert_eq!(cut.springs.len(), 3);
        assert_eq!(cut.sections.len(), 6);
        // Mass is conserved through duplication.
        assert!((cut.base.total_mass() - mesh.total_mass()).abs() / mesh.total_mass() < 1e-9);
    }

    #[test]
    fn mesh_on_one_side_is_untouched() {
        let mesh = single_tet(1.0, 600.0);
        let cut = preprocess_cut(&mesh, &CutSurface::plane_x(5.0)).unwrap();
        assert_eq!(cut.springs.len(), 0);
        assert_eq!(cut.base.tets, mesh.tets);
        assert_eq!(cut.base.vertices.len(), mesh.vertices.len());
        assert_eq!(cut.base.mass, mesh.mass);
    }

    #[test]
    fn spring_count_matches_independent_edge_scan() {
        let mesh = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0), (2, 2, 2), 1.0);
        let c = 0.52; // off the grid planes
        let cut = preprocess_cut(&mesh, &CutSurface::plane_x(c)).unwrap();
        // Independent oracle: count unique edges straddling the plane.
        let crossing = mesh
            .unique_edges()
            .iter()
            .filter(|&&(a, b)| {
                (mesh.vertices[a as usize].x > c) != (mesh.vertices[b as usize].x > c)
            })
            .count();
        assert_eq!(cut.springs.len(), crossing);
        assert!(crossing > 0);
    }

    #[test]
    fn spring_endpoints_coincide_at_rest() {
        let mesh = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.02, 0.02, 0.02), (2, 2, 2), 787.0);
        let cut = preprocess_cut(&mesh, &CutSurface::plane_x(0.0104)).unwrap();
        for s in &cut.springs {
            let a = cut.virtual_nodes[s.node_above as usize].position(&cut.base.vertices);
            let b = cut.virtual_nodes[s.node_below as usize].position(&cut.base.vertices);
            assert!((a - b).norm() < 1e-12);
        }
        // Springs pair identical u on opposite sides of the same edge.
        for s in &cut.springs {
            let na = &cut.virtual_nodes[s.node_above as usize];
            let nb = &cut.virtual_nodes[s.node_below as usize];
            assert_eq!(na.u, nb.u);
            assert_eq!(na.side, Side::Above);
            assert_eq!(nb.side, Side::Below);
        }
    }

    #[test]
    fn duplicated_count_matches_intersected_tets() {
        let mesh = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0), (3, 2, 2), 1.0);
        let c = 0.4;
        let intersected = mesh
            .tets
            .iter()
            .filter(|t| {
                let above = t.iter().filter(|&&v| mesh.vertices[v as usize].x > c).count();
                above > 0 && above < 4
            })
            .count();
        let cut = preprocess_cut(&mesh, &CutSurface::plane_x(c)).unwrap();
        assert_eq!(cut.base.tets.len(), mesh.tets.len() + intersected);
        let n_cut = cut.fill.iter().filter(|f| matches!(f, Fill::Cut(_))).count();
        assert_eq!(n_cut, 2 * intersected);
    }

    #[test]
    fn material_portions_partition_element_volume() {
        let mesh = box_mesh(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0), (2, 2, 2), 1.0);
        let c = 0.47;
        let mut above_total = 0.0;
        let mut below_total = 0.0;
        let mut orig_total = 0.0;
        for (e, t) in mesh.tets.iter().enumerate() {
            let verts = t.map(|i| mesh.vertices[i as usize]);
            let sides = t.map(|i| mesh.vertices[i as usize].x > c);
            let n_above = sides.iter().filter(|&&s| s).count();
            if n_above == 0 || n_above == 4 {
                continue;
            }
            above_total += tet_halfspace_volume(verts, c, Side::Above);
            below_total += tet_halfspace_volume(verts, c, Side::Below);
            orig_total += mesh.rest_volume[e];
        }
        assert!(orig_total > 0.0);
        assert!(
            ((above_total + below_total) - orig_total).abs() / orig_total < 1e-9,
            "portions {above_total} + {below_total} vs {orig_total}"
        );
    }

    #[test]
    fn vertex_on_plane_is_perturbed_with_warning() {
        let mesh = single_tet(1.0, 600.0);
        // Plane exactly through vertex x = 0.
        let cut = preprocess_cut(&mesh, &CutSurface::plane_x(0.0)).unwrap();
        assert!(cut.shift_applied > 0.0);
    }

    #[test]
    fn triangle_surface_matches_plane_result() {
        let mesh = single_tet(1.0, 600.0);
        let c = 0.25;
        // Two large triangles spanning the cut band at x = c, normal +x.
        let quad = [
            Vec3::new(c, -10.0, -10.0),
            Vec3::new(c, 10.0, -10.0),
            Vec3::new(c, 10.0, 10.0),
            Vec3::new(c, -10.0, 10.0),
        ];
        let tris = vec![[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]];
        let from_tris = preprocess_cut(&mesh, &CutSurface::Triangles(tris)).unwrap();
        let from_plane = preprocess_cut(&mesh, &CutSurface::plane_x(c)).unwrap();
        assert_eq!(from_tris.springs.len(), from_plane.springs.len());
        for (a, b) in from_tris.springs.iter().zip(&from_plane.springs) {
            assert_eq!(a.orig_edge, b.orig_edge);
            assert!((a.u - b.u).abs() < 1e-12);
        }
    }
}
