//! Symmetric triangulations of the reference half-disk and the parametric
//! scaling map.
//!
//! The generator produces a structured polar-graded mesh: rings of nodes at
//! decreasing radii, each ring carrying an angular grid that is fine inside
//! the (symmetrized) contact arc and geometrically coarsened elsewhere.
//! Moving inward, rings switch to coarser angular grids (pairwise interval
//! merging) and larger radial steps, with conforming transition layers.
//! Mirror symmetry about the vertical axis holds exactly: left-half node
//! coordinates are bitwise negations of their right-half partners.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
    Contact,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    /// Node coordinates in meters.
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise node-index triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Target edge length used by the generator (and by the Nitsche scaling).
    pub mesh_size_h: f64,
}

/// The scaling map x -> center + mu * (x - center).
#[derive(Debug, Clone, Copy)]
pub struct GeometricMapping {
    pub mu: f64,
    pub center: [f64; 2],
}

impl GeometricMapping {
    pub fn scaling(mu: f64) -> GeometricMapping {
        GeometricMapping {
            mu,
            center: [0.0, 0.0],
        }
    }
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    /// Nodes touched by Contact-tagged boundary edges.
    pub fn contact_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == BoundaryTag::Contact)
            .flat_map(|e| e.nodes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Node permutation induced by x -> -x, or None if the mesh is not
    /// mirror-symmetric. perm[i] is the node at the reflected position.
    pub fn mirror_permutation(&self) -> Option<Vec<usize>> {
        use std::collections::HashMap;
        let key = |x: f64, y: f64| -> (u64, u64) {
            let cx = if x == 0.0 { 0.0 } else { x };
            let cy = if y == 0.0 { 0.0 } else { y };
            (cx.to_bits(), cy.to_bits())
        };
        let mut map = HashMap::with_capacity(self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            map.insert(key(p[0], p[1]), i);
        }
        let mut perm = Vec::with_capacity(self.nodes.len());
        for p in &self.nodes {
            perm.push(*map.get(&key(-p[0], p[1]))?);
        }
        Some(perm)
    }
}

/// Applies the geometric mapping, scaling node coordinates about its center.
/// Connectivity and boundary tags are unchanged.
pub fn apply_mapping(mesh: &Mesh, map: &GeometricMapping) -> Mesh {
    assert!(map.mu > 0.0, "mapping requires mu > 0");
    let nodes = mesh
        .nodes
        .iter()
        .map(|p| {
            [
                map.center[0] + map.mu * (p[0] - map.center[0]),
                map.center[1] + map.mu * (p[1] - map.center[1]),
            ]
        })
        .collect();
    Mesh {
        nodes,
        triangles: mesh.triangles.clone(),
        boundary_edges: mesh.boundary_edges.clone(),
        mesh_size_h: mesh.mesh_size_h,
    }
}

// Angular grading knobs. The fine spacing inside the contact arc is
// h_target / CONTACT_REFINE; outside, intervals grow geometrically up to
// COARSE_CAP radians. Calibrated so the h = 2.5 mm mesh lands near the
// 1956-node / 633-contact-node reference resolution.
const CONTACT_REFINE: f64 = 2.0;
const ANGULAR_GROWTH: f64 = 1.25;
const COARSE_CAP: f64 = 0.08;
const RADIAL_GROWTH_DEEP: f64 = 1.8;
const MIN_HALF_INTERVALS: usize = 4;

/// Angular half-grid on [-pi/2, 0] for one grading level, plus the index
/// subsample that produced it from the next finer level.
struct HalfGrid {
    angles: Vec<f64>,
    /// For level > 0: angles[i] == finer.angles[from_finer[i]].
    from_finer: Vec<usize>,
}

fn build_master_half_grid(h_target: f64, fine_hi: f64) -> Vec<f64> {
    // fine part: [-pi/2, fine_hi] at uniform spacing ~ h/CONTACT_REFINE
    let delta_c = h_target / CONTACT_REFINE;
    let fine_span = fine_hi + std::f64::consts::FRAC_PI_2;
    let n_fine = (fine_span / delta_c).ceil().max(1.0) as usize;
    let delta = fine_span / n_fine as f64;
    let mut angles: Vec<f64> = (0..=n_fine)
        .map(|i| -std::f64::consts::FRAC_PI_2 + i as f64 * delta)
        .collect();
    // coarse part: geometric growth capped at COARSE_CAP (never below the
    // fine spacing), rescaled to land exactly on 0.
    let span = -fine_hi;
    if span > 1e-12 {
        let cap = COARSE_CAP.max(delta);
        let mut steps = Vec::new();
        let mut step = delta;
        let mut acc = 0.0;
        while acc < span {
            step = (step * ANGULAR_GROWTH).min(cap);
            steps.push(step);
            acc += step;
        }
        let scale = span / acc;
        let mut theta = fine_hi;
        for (i, s) in steps.iter().enumerate() {
            theta += s * scale;
            if i + 1 == steps.len() {
                theta = 0.0;
            }
            angles.push(theta);
        }
    } else {
        *angles.last_mut().unwrap() = 0.0;
    }
    angles
}

fn coarsen_half(finer: &[f64]) -> HalfGrid {
    let n = finer.len() - 1; // interval count
    let mut from_finer = Vec::new();
    let mut i = 0;
    while i < n {
        from_finer.push(i);
        i += 2;
    }
    from_finer.push(n);
    let angles = from_finer.iter().map(|&i| finer[i]).collect();
    HalfGrid { angles, from_finer }
}

/// Full symmetric grid size: a half-grid with n intervals yields 2n full
/// intervals. Full index k in [0, 2n]; k = n is theta = -pi/2.
fn full_point(half: &[f64], r: f64, k: usize) -> [f64; 2] {
    let n = half.len() - 1;
    if k == n {
        return [0.0, -r];
    }
    let (theta, sign) = if k > n {
        (half[k - n], 1.0)
    } else {
        (half[n - k], -1.0)
    };
    let (s, c) = theta.sin_cos();
    [sign * r * c, r * s]
}

/// Maps a coarse full-grid index to the corresponding fine full-grid index.
fn full_index_on_finer(grid: &HalfGrid, n_fine_half: usize, k: usize) -> usize {
    let n = grid.angles.len() - 1;
    if k >= n {
        n_fine_half + grid.from_finer[k - n]
    } else {
        n_fine_half - grid.from_finer[n - k]
    }
}

/// Generates the symmetric reference half-disk mesh (radius 1, flat top edge
/// at y = 0, curved boundary below). Curved edges whose midpoint angle lies
/// in `contact_arc` (radians, within [-pi, 0]) are tagged Contact; the flat
/// top is Dirichlet; the rest of the circle is Neumann.
pub fn build_reference_halfdisk(h_target: f64, contact_arc: (f64, f64)) -> Result<Mesh> {
    assert!(h_target > 0.0, "h_target must be positive");
    let (lo, hi) = contact_arc;
    if !(lo < hi) {
        return Err(Error::InvalidArc(format!("empty arc [{lo}, {hi}]")));
    }
    if lo < -std::f64::consts::PI - 1e-12 || hi > 1e-12 {
        return Err(Error::InvalidArc(format!(
            "arc [{lo}, {hi}] not contained in [-pi, 0]"
        )));
    }
    // Symmetrize the refined angular region about -pi/2 so that grading
    // never breaks the mirror symmetry, even for an asymmetric arc.
    let fine_hi = hi.max(-std::f64::consts::PI - lo).min(-1e-9);
    if fine_hi <= -std::f64::consts::FRAC_PI_2 {
        return Err(Error::InvalidArc(format!(
            "arc [{lo}, {hi}] does not reach around the lower pole"
        )));
    }

    // Angular grid hierarchy.
    let master = build_master_half_grid(h_target, fine_hi);
    let mut levels: Vec<HalfGrid> = vec![HalfGrid {
        from_finer: (0..master.len()).collect(),
        angles: master,
    }];
    loop {
        let finer = &levels.last().unwrap().angles;
        if (finer.len() - 1) / 2 < MIN_HALF_INTERVALS {
            break;
        }
        let next = coarsen_half(finer);
        levels.push(next);
    }
    let max_level = levels.len() - 1;

    // Ring schedule: (radius, level), outermost first.
    let dr0 = h_target / CONTACT_REFINE;
    let mut rings: Vec<(f64, usize)> = vec![(1.0, 0)];
    let mut level = 0usize;
    let mut placed_at_level = 1usize;
    let mut dr = dr0;
    let mut r = 1.0;
    loop {
        let rings_here = if level == 0 { 2 } else { 1 };
        let (next_level, next_dr) = if placed_at_level >= rings_here && level < max_level {
            (level + 1, dr * 2.0)
        } else if placed_at_level >= rings_here && level == max_level {
            (level, dr * RADIAL_GROWTH_DEEP)
        } else {
            (level, dr)
        };
        let r_next = r - next_dr;
        if r_next <= 0.55 * next_dr {
            break;
        }
        if next_level != level {
            placed_at_level = 0;
        }
        level = next_level;
        dr = next_dr;
        r = r_next;
        placed_at_level += 1;
        rings.push((r, level));
    }

    // Nodes, ring by ring; ring_nodes[i][k] is the node id of full index k.
    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut ring_nodes: Vec<Vec<usize>> = Vec::new();
    for &(radius, lv) in &rings {
        let half = &levels[lv].angles;
        let n_full = 2 * (half.len() - 1);
        let mut ids = Vec::with_capacity(n_full + 1);
        // right half and pole first, then mirror the left half bitwise
        for k in 0..=n_full {
            let p = if k * 2 >= n_full {
                full_point(half, radius, k)
            } else {
                let q = full_point(half, radius, n_full - k);
                [-q[0], q[1]]
            };
            ids.push(nodes.len());
            nodes.push(p);
        }
        ring_nodes.push(ids);
    }
    let center = nodes.len();
    nodes.push([0.0, 0.0]);

    // Triangles between consecutive rings.
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for w in 0..rings.len() - 1 {
        let (outer, inner) = (w, w + 1);
        let (lo_lv, li_lv) = (rings[outer].1, rings[inner].1);
        let o = &ring_nodes[outer];
        let i_ring = &ring_nodes[inner];
        let n_out_half = levels[lo_lv].angles.len() - 1;
        let n_in = i_ring.len() - 1; // full interval count, inner
        let n_in_half = n_in / 2;
        if lo_lv == li_lv {
            for j in 0..n_in {
                let (a, b, c, d) = (o[j], o[j + 1], i_ring[j], i_ring[j + 1]);
                if j < n_in_half {
                    triangles.push([a, b, c]);
                    triangles.push([c, b, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([a, d, c]);
                }
            }
        } else {
            debug_assert_eq!(li_lv, lo_lv + 1);
            let grid = &levels[li_lv];
            for j in 0..n_in {
                let a = full_index_on_finer(grid, n_out_half, j);
                let b = full_index_on_finer(grid, n_out_half, j + 1);
                match b - a {
                    2 => {
                        triangles.push([i_ring[j], o[a], o[a + 1]]);
                        triangles.push([i_ring[j], o[a + 1], i_ring[j + 1]]);
                        triangles.push([i_ring[j + 1], o[a + 1], o[a + 2]]);
                    }
                    1 => {
                        let (p, q, c, d) = (o[a], o[a + 1], i_ring[j], i_ring[j + 1]);
                        if j < n_in_half {
                            triangles.push([p, q, c]);
                            triangles.push([c, q, d]);
                        } else {
                            triangles.push([p, q, d]);
                            triangles.push([p, d, c]);
                        }
                    }
                    _ => {
                        return Err(Error::MeshFailure(format!(
                            "transition interval covers {} fine intervals",
                            b - a
                        )))
                    }
                }
            }
        }
    }
    // Center fan.
    let innermost = ring_nodes.last().unwrap();
    for j in 0..innermost.len() - 1 {
        triangles.push([center, innermost[j], innermost[j + 1]]);
    }

    // Enforce counterclockwise orientation.
    for t in &mut triangles {
        let area = signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        if area < 0.0 {
            t.swap(1, 2);
        }
    }
    for (ti, t) in triangles.iter().enumerate() {
        let area = signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        if area <= 0.0 {
            return Err(Error::MeshFailure(format!(
                "triangle {ti} has nonpositive area {area:.3e}"
            )));
        }
    }

    // Boundary edges: outer circle + flat top.
    let mut boundary_edges = Vec::new();
    let outer = &ring_nodes[0];
    for j in 0..outer.len() - 1 {
        let (a, b) = (outer[j], outer[j + 1]);
        let mx = 0.5 * (nodes[a][0] + nodes[b][0]);
        let my = 0.5 * (nodes[a][1] + nodes[b][1]);
        let theta = my.atan2(mx);
        let tag = if theta >= lo && theta <= hi {
            BoundaryTag::Contact
        } else {
            BoundaryTag::Neumann
        };
        boundary_edges.push(BoundaryEdge { nodes: [a, b], tag });
    }
    for side in [0usize, 1] {
        // side 0: left end of each ring grid (theta = -pi); side 1: right end.
        let pick = |ids: &Vec<usize>| -> usize {
            if side == 0 {
                ids[0]
            } else {
                *ids.last().unwrap()
            }
        };
        for w in 0..rings.len() - 1 {
            boundary_edges.push(BoundaryEdge {
                nodes: [pick(&ring_nodes[w]), pick(&ring_nodes[w + 1])],
                tag: BoundaryTag::Dirichlet,
            });
        }
        boundary_edges.push(BoundaryEdge {
            nodes: [pick(ring_nodes.last().unwrap()), center],
            tag: BoundaryTag::Dirichlet,
        });
    }

    let mesh = Mesh {
        nodes,
        triangles,
        boundary_edges,
        mesh_size_h: h_target,
    };
    validate_topology(&mesh)?;
    Ok(mesh)
}

/// Checks that boundary edges belong to exactly one triangle and interior
/// edges to exactly two.
fn validate_topology(mesh: &Mesh) -> Result<()> {
    use std::collections::HashMap;
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &mesh.triangles {
        for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = (e.0.min(e.1), e.0.max(e.1));
            *edge_count.entry(key).or_insert(0) += 1;
        }
    }
    let mut tagged: HashMap<(usize, usize), usize> = HashMap::new();
    for be in &mesh.boundary_edges {
        let key = (be.nodes[0].min(be.nodes[1]), be.nodes[0].max(be.nodes[1]));
        *tagged.entry(key).or_insert(0) += 1;
        match edge_count.get(&key) {
            Some(1) => {}
            other => {
                return Err(Error::MeshFailure(format!(
                    "boundary edge {key:?} belongs to {other:?} triangles"
                )))
            }
        }
    }
    for (key, count) in &edge_count {
        let on_boundary = tagged.contains_key(key);
        if on_boundary && tagged[key] != 1 {
            return Err(Error::MeshFailure(format!("edge {key:?} double-tagged")));
        }
        if !on_boundary && *count != 2 {
            return Err(Error::MeshFailure(format!(
                "interior edge {key:?} belongs to {count} triangles"
            )));
        }
    }
    Ok(())
}

/// The paper-scale contact arc, theta in [-5pi/8, -3pi/8].
pub fn hertz_contact_arc() -> (f64, f64) {
    let pi = std::f64::consts::PI;
    (-5.0 * pi / 8.0, -3.0 * pi / 8.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_arcs() {
        assert!(matches!(
            build_reference_halfdisk(0.2, (-1.0, -1.0)),
            Err(Error::InvalidArc(_))
        ));
        assert!(matches!(
            build_reference_halfdisk(0.2, (-1.0, 0.5)),
            Err(Error::InvalidArc(_))
        ));
        assert!(matches!(
            build_reference_halfdisk(0.2, (-4.0, -3.5)),
            Err(Error::InvalidArc(_))
        ));
    }

    #[test]
    fn symmetric_nodes_and_triangles() {
        let mesh = build_reference_halfdisk(0.25, hertz_contact_arc()).unwrap();
        let perm = mesh.mirror_permutation().expect("mesh must be symmetric");
        // the permutation must map triangles to triangles (as node sets)
        let mut set: std::collections::HashSet<[usize; 3]> = std::collections::HashSet::new();
        for t in &mesh.triangles {
            let mut s = *t;
            s.sort_unstable();
            set.insert(s);
        }
        for t in &mesh.triangles {
            let mut m = [perm[t[0]], perm[t[1]], perm[t[2]]];
            m.sort_unstable();
            assert!(set.contains(&m), "mirrored triangle missing");
        }
    }

    #[test]
    fn contact_edges_inside_arc() {
        let arc = hertz_contact_arc();
        let mesh = build_reference_halfdisk(0.25, arc).unwrap();
        let mut n_contact = 0;
        for be in &mesh.boundary_edges {
            if be.tag == BoundaryTag::Contact {
                n_contact += 1;
                let [a, b] = be.nodes;
                let mx = 0.5 * (mesh.nodes[a][0] + mesh.nodes[b][0]);
                let my = 0.5 * (mesh.nodes[a][1] + mesh.nodes[b][1]);
                let theta = my.atan2(mx);
                assert!(theta >= arc.0 && theta <= arc.1);
            }
        }
        assert!(n_contact > 0);
    }

    #[test]
    fn boundary_circle_nodes_on_unit_circle() {
        let mesh = build_reference_halfdisk(0.1, hertz_contact_arc()).unwrap();
        for be in &mesh.boundary_edges {
            if be.tag == BoundaryTag::Dirichlet {
                continue;
            }
            for n in be.nodes {
                let [x, y] = mesh.nodes[n];
                assert!((x.hypot(y) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paper_resolution_node_counts() {
        let mesh = build_reference_halfdisk(0.0025, hertz_contact_arc()).unwrap();
        let n = mesh.n_nodes() as f64;
        let nc = mesh.contact_nodes().len() as f64;
        assert!(
            (n - 1956.0).abs() <= 0.2 * 1956.0,
            "node count {n} not within 20% of 1956"
        );
        assert!(
            (nc - 633.0).abs() <= 0.2 * 633.0,
            "contact node count {nc} not within 20% of 633"
        );
    }

    #[test]
    fn mapping_identity_and_roundtrip() {
        let mesh = build_reference_halfdisk(0.25, hertz_contact_arc()).unwrap();
        let id = apply_mapping(&mesh, &GeometricMapping::scaling(1.0));
        for (a, b) in mesh.nodes.iter().zip(&id.nodes) {
            assert_eq!(a, b);
        }
        let there = apply_mapping(&mesh, &GeometricMapping::scaling(2.0));
        let back = apply_mapping(&there, &GeometricMapping::scaling(0.5));
        for (a, b) in mesh.nodes.iter().zip(&back.nodes) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn mapping_scales_radius_and_area() {
        let mesh = build_reference_halfdisk(0.25, hertz_contact_arc()).unwrap();
        let mu = 0.7;
        let mapped = apply_mapping(&mesh, &GeometricMapping::scaling(mu));
        for be in &mapped.boundary_edges {
            if be.tag == BoundaryTag::Dirichlet {
                continue;
            }
            for n in be.nodes {
                let [x, y] = mapped.nodes[n];
                assert!((x.hypot(y) - mu).abs() < 1e-12);
            }
        }
        for t in 0..mesh.triangles.len() {
            let a0 = mesh.triangle_area(t);
            let a1 = mapped.triangle_area(t);
            assert!(a1 > 0.0, "orientation must be preserved");
            assert!((a1 - mu * mu * a0).abs() <= 1e-12 * a0.abs().max(a1.abs()));
        }
    }

    #[test]
    fn default_resolution_size() {
        let mesh = build_reference_halfdisk(0.01, hertz_contact_arc()).unwrap();
        let n = mesh.n_nodes();
        assert!(
            (300..=900).contains(&n),
            "default mesh has {n} nodes, expected a few hundred"
        );
    }
}
