//! Ray / triangle-mesh intersection: a brute-force scan and a median-split
//! BVH that must agree hit for hit.

use crate::geometry::Vec3;

/// Slack on barycentric bounds so rays through shared edges are not lost.
const EDGE_EPS: f64 = 1e-12;
/// Smallest accepted hit distance.
const MIN_DISTANCE: f64 = 1e-12;
const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub point: Vec3,
    pub face: usize,
    pub distance: f64,
    pub bary: [f64; 3],
}

/// A triangle tagged with the index of the face it came from.
#[derive(Clone, Copy, Debug)]
pub struct Triangle {
    pub face: usize,
    pub v: [Vec3; 3],
}

impl Triangle {
    fn centroid(&self) -> Vec3 {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }
}

/// Collects triangles for `subset` of `faces` (all faces when `None`).
pub fn triangles(vertices: &[Vec3], faces: &[[usize; 3]], subset: Option<&[usize]>) -> Vec<Triangle> {
    let make = |i: usize| {
        let f = faces[i];
        Triangle {
            face: i,
            v: [vertices[f[0]], vertices[f[1]], vertices[f[2]]],
        }
    };
    match subset {
        Some(s) => s.iter().map(|&i| make(i)).collect(),
        None => (0..faces.len()).map(make).collect(),
    }
}

/// Möller–Trumbore. Returns `(distance, u, v)` with barycentrics
/// `(1-u-v, u, v)` over the triangle's vertices.
pub fn intersect_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-18 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if u < -EDGE_EPS || u > 1.0 + EDGE_EPS {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if t > MIN_DISTANCE && t.is_finite() {
        Some((t, u, v))
    } else {
        None
    }
}

fn make_hit(tri: &Triangle, t: f64, u: f64, v: f64) -> Hit {
    let u = u.clamp(0.0, 1.0);
    let v = v.clamp(0.0, 1.0 - u);
    let w = 1.0 - u - v;
    Hit {
        point: tri.v[0] * w + tri.v[1] * u + tri.v[2] * v,
        face: tri.face,
        distance: t,
        bary: [w, u, v],
    }
}

fn tie_tolerance(d: f64) -> f64 {
    1e-12 * (1.0 + d.abs())
}

/// Nearest hit wins; hits at equal distance go to the lower face index.
fn better(candidate: &Hit, best: &Option<Hit>) -> bool {
    match best {
        None => true,
        Some(b) => {
            if (candidate.distance - b.distance).abs() <= tie_tolerance(b.distance) {
                candidate.face < b.face
            } else {
                candidate.distance < b.distance
            }
        }
    }
}

/// Tests every triangle. Reference path for the BVH.
pub fn intersect_brute_force(tris: &[Triangle], origin: &Vec3, dir: &Vec3) -> Option<Hit> {
    let mut best = None;
    for tri in tris {
        if let Some((t, u, v)) = intersect_triangle(origin, dir, &tri.v) {
            let hit = make_hit(tri, t, u, v);
            if better(&hit, &best) {
                best = Some(hit);
            }
        }
    }
    best
}

/// Nearest positive-distance intersection of a ray with the mesh faces in
/// `subset` (or all faces), or `None` on a miss.
pub fn ray_mesh_intersect(
    origin: &Vec3,
    dir: &Vec3,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    subset: Option<&[usize]>,
) -> Option<Hit> {
    intersect_brute_force(&triangles(vertices, faces, subset), origin, dir)
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    /// Entry distance of the ray into the (slightly padded) box, if any.
    fn entry(&self, origin: &Vec3, inv_dir: &Vec3, limit: f64) -> Option<f64> {
        let pad = 1e-9;
        let mut t0 = 0.0f64;
        let mut t1 = limit;
        for a in 0..3 {
            let lo = self.min[a] - pad;
            let hi = self.max[a] + pad;
            if inv_dir[a].is_infinite() {
                if origin[a] < lo || origin[a] > hi {
                    return None;
                }
                continue;
            }
            let mut near = (lo - origin[a]) * inv_dir[a];
            let mut far = (hi - origin[a]) * inv_dir[a];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Bounding volume hierarchy over triangles, split at the median centroid
/// along the widest centroid axis.
#[derive(Clone, Debug)]
pub struct MeshBvh {
    tris: Vec<Triangle>,
    nodes: Vec<Node>,
}

impl MeshBvh {
    pub fn build(mut tris: Vec<Triangle>) -> Self {
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            let n = tris.len();
            build_node(&mut tris, 0, n, &mut nodes);
        }
        Self { tris, nodes }
    }

    pub fn from_mesh(vertices: &[Vec3], faces: &[[usize; 3]], subset: Option<&[usize]>) -> Self {
        Self::build(triangles(vertices, faces, subset))
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.tris
    }

    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let limit = best.map_or(f64::INFINITY, |b| b.distance + tie_tolerance(b.distance));
            if self.nodes[idx].bounds().entry(origin, &inv, limit).is_none() {
                continue;
            }
            match &self.nodes[idx] {
                Node::Leaf { start, count, .. } => {
                    for tri in &self.tris[*start..start + count] {
                        if let Some((t, u, v)) = intersect_triangle(origin, dir, &tri.v) {
                            let hit = make_hit(tri, t, u, v);
                            if better(&hit, &best) {
                                best = Some(hit);
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().entry(origin, &inv, limit);
                    let dr = self.nodes[*right].bounds().entry(origin, &inv, limit);
                    // Push the farther child first so the nearer is visited first.
                    match (dl, dr) {
                        (Some(a), Some(b)) if a <= b => {
                            stack.push(*right);
                            stack.push(*left);
                        }
                        (Some(_), Some(_)) => {
                            stack.push(*left);
                            stack.push(*right);
                        }
                        (Some(_), None) => stack.push(*left),
                        (None, Some(_)) => stack.push(*right),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }
}

fn build_node(tris: &mut [Triangle], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for t in &tris[start..end] {
        for v in &t.v {
            bounds.grow(v);
        }
        cbounds.grow(&t.centroid());
    }
    let idx = nodes.len();
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, count });
        return idx;
    }
    let extent = cbounds.max - cbounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = start + count / 2;
    tris[start..end].select_nth_unstable_by(count / 2, |a, b| {
        a.centroid()[axis]
            .total_cmp(&b.centroid()[axis])
            .then(a.face.cmp(&b.face))
    });
    nodes.push(Node::Leaf { bounds, start, count });
    let left = build_node(tris, start, mid, nodes);
    let right = build_node(tris, mid, end, nodes);
    nodes[idx] = Node::Inner { bounds, left, right };
    idx
}

/// Closest point on a triangle to `p` (Ericson's region walk).
pub fn closest_point_on_triangle(p: &Vec3, tri: &[Vec3; 3]) -> Vec3 {
    let (a, b, c) = (tri[0], tri[1], tri[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Face nearest to `p` and the closest point on it.
pub fn nearest_triangle(tris: &[Triangle], p: &Vec3) -> Option<(usize, Vec3, f64)> {
    let mut best: Option<(usize, Vec3, f64)> = None;
    for tri in tris {
        let q = closest_point_on_triangle(p, &tri.v);
        let d = (q - p).norm();
        if best.map_or(true, |(f, _, bd)| d < bd || (d == bd && tri.face < f)) {
            best = Some((tri.face, q, d));
        }
    }
    best
}

/// Distance from `p` to a triangle.
pub fn distance_to_triangle(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    (closest_point_on_triangle(p, tri) - p).norm()
}
