//! Binary BVH over world-space triangles, built with binned SAH.

use glam::DVec3;

use crate::geometry::{intersect_triangle, Aabb, Ray};

pub const MAX_LEAF_SIZE: usize = 4;
const BINS: usize = 12;
/// Below this depth SAH is abandoned for median splits, which bounds the
/// traversal stack.
const SAH_MAX_DEPTH: usize = 48;
const STACK: usize = 128;

/// Triangle stored as one vertex plus two edges, the form the
/// intersection routine consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub v0: DVec3,
    pub e1: DVec3,
    pub e2: DVec3,
}

impl Triangle {
    pub fn new(a: DVec3, b: DVec3, c: DVec3) -> Self {
        Triangle {
            v0: a,
            e1: b - a,
            e2: c - a,
        }
    }

    pub fn vertices(&self) -> [DVec3; 3] {
        [self.v0, self.v0 + self.e1, self.v0 + self.e2]
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices())
    }

    pub fn geometric_normal(&self) -> DVec3 {
        self.e1.cross(self.e2).normalize_or_zero()
    }

    #[inline]
    pub fn intersect(&self, ray: &Ray, t_min: f64) -> Option<(f64, f64, f64)> {
        intersect_triangle(ray, self.v0, self.e1, self.e2, t_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Index into the triangle array the BVH was built from.
    pub tri: u32,
    pub t: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Hit {
    /// Nearest first; equal distances resolve to the lower triangle index.
    #[inline]
    pub fn closer_than(&self, other: &Hit) -> bool {
        self.t < other.t || (self.t == other.t && self.tri < other.tri)
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first slot in `indices`. Interior: index of the left child
    /// (the right child follows it).
    start: u32,
    /// Zero for interior nodes.
    count: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    indices: Vec<u32>,
    triangles: Vec<Triangle>,
}

struct BuildItem {
    bounds: Aabb,
    centroid: DVec3,
}

impl Bvh {
    pub fn new(triangles: Vec<Triangle>) -> Self {
        let items: Vec<BuildItem> = triangles
            .iter()
            .map(|t| {
                let b = t.bounds();
                BuildItem {
                    bounds: b,
                    centroid: b.center(),
                }
            })
            .collect();
        let mut indices: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len().max(1));
        nodes.push(Node {
            bounds: Aabb::EMPTY,
            start: 0,
            count: 0,
        });
        if !triangles.is_empty() {
            build(&items, &mut indices, 0, triangles.len(), 0, 0, &mut nodes);
        }
        Bvh {
            nodes,
            indices,
            triangles,
        }
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        if self.triangles.is_empty() {
            return None;
        }
        let inv = ray.dir.recip();
        let mut best: Option<Hit> = None;
        let mut best_t = t_max;
        let mut stack = [0u32; STACK];
        let mut sp = 0usize;
        self.nodes[0].bounds.hit(ray.origin, inv, t_min, best_t)?;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.count > 0 {
                let range = node.start as usize..(node.start + node.count) as usize;
                for &tri in &self.indices[range] {
                    if let Some((t, b1, b2)) = self.triangles[tri as usize].intersect(ray, t_min) {
                        let hit = Hit { tri, t, b1, b2 };
                        if t <= best_t && best.is_none_or(|b| hit.closer_than(&b)) {
                            best_t = t;
                            best = Some(hit);
                        }
                    }
                }
                continue;
            }
            let (l, r) = (node.start, node.start + 1);
            // equal-distance ties must still be visited, hence the inclusive bound
            let tl = self.nodes[l as usize].bounds.hit(ray.origin, inv, t_min, best_t);
            let tr = self.nodes[r as usize].bounds.hit(ray.origin, inv, t_min, best_t);
            match (tl, tr) {
                (Some(a), Some(b)) => {
                    let (near, far) = if a <= b { (l, r) } else { (r, l) };
                    stack[sp] = far;
                    stack[sp + 1] = near;
                    sp += 2;
                }
                (Some(_), None) => {
                    stack[sp] = l;
                    sp += 1;
                }
                (None, Some(_)) => {
                    stack[sp] = r;
                    sp += 1;
                }
                (None, None) => {}
            }
        }
        best
    }

    /// True if any triangle is hit with `t_min < t < t_max`.
    pub fn occluded(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let inv = ray.dir.recip();
        let mut stack = [0u32; STACK];
        let mut sp = 1usize;
        stack[0] = 0;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.hit(ray.origin, inv, t_min, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let range = node.start as usize..(node.start + node.count) as usize;
                for &tri in &self.indices[range] {
                    if let Some((t, _, _)) = self.triangles[tri as usize].intersect(ray, t_min) {
                        if t < t_max {
                            return true;
                        }
                    }
                }
            } else {
                stack[sp] = node.start;
                stack[sp + 1] = node.start + 1;
                sp += 2;
            }
        }
        false
    }

    /// Checks the structural invariants: every triangle referenced exactly
    /// once, leaves hold at most four triangles, children nest in parents.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = vec![0u32; self.triangles.len()];
        for node in &self.nodes {
            if node.count > 0 {
                if node.count as usize > MAX_LEAF_SIZE {
                    return Err(format!("leaf with {} triangles", node.count));
                }
                for &i in &self.indices[node.start as usize..(node.start + node.count) as usize] {
                    seen[i as usize] += 1;
                    if !node.bounds.contains_box(&self.triangles[i as usize].bounds()) {
                        return Err(format!("triangle {i} escapes its leaf"));
                    }
                }
            } else if !self.triangles.is_empty() {
                for child in [node.start, node.start + 1] {
                    if !node.bounds.contains_box(&self.nodes[child as usize].bounds) {
                        return Err(format!("child {child} escapes its parent"));
                    }
                }
            }
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            return Err(format!("triangle {i} referenced {} times", seen[i]));
        }
        Ok(())
    }
}

fn build(
    items: &[BuildItem],
    indices: &mut [u32],
    start: usize,
    end: usize,
    node: usize,
    depth: usize,
    nodes: &mut Vec<Node>,
) {
    let slice = &mut indices[start..end];
    let bounds = slice
        .iter()
        .fold(Aabb::EMPTY, |b, &i| b.union(items[i as usize].bounds));
    let count = end - start;
    let make_leaf = |nodes: &mut Vec<Node>| {
        nodes[node] = Node {
            bounds,
            start: start as u32,
            count: count as u32,
        };
    };
    if count <= 1 {
        make_leaf(nodes);
        return;
    }

    let cbounds = slice
        .iter()
        .fold(Aabb::EMPTY, |b, &i| b.grow(items[i as usize].centroid));
    let extent = cbounds.extent();
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };

    let mid = if extent[axis] <= 0.0 || depth >= SAH_MAX_DEPTH {
        if count <= MAX_LEAF_SIZE {
            make_leaf(nodes);
            return;
        }
        0
    } else {
        let lo = cbounds.min[axis];
        let scale = BINS as f64 / extent[axis];
        let bin_of = |i: u32| (((items[i as usize].centroid[axis] - lo) * scale) as usize).min(BINS - 1);
        let mut bin_bounds = [Aabb::EMPTY; BINS];
        let mut bin_counts = [0usize; BINS];
        for &i in slice.iter() {
            let b = bin_of(i);
            bin_counts[b] += 1;
            bin_bounds[b] = bin_bounds[b].union(items[i as usize].bounds);
        }
        // sweep both directions for the split cost of planes 1..BINS
        let mut right_area = [0.0; BINS];
        let mut right_count = [0usize; BINS];
        let (mut acc, mut n) = (Aabb::EMPTY, 0);
        for b in (1..BINS).rev() {
            acc = acc.union(bin_bounds[b]);
            n += bin_counts[b];
            right_area[b] = acc.surface_area();
            right_count[b] = n;
        }
        let (mut acc, mut n) = (Aabb::EMPTY, 0);
        let mut best = (f64::INFINITY, 0);
        for plane in 1..BINS {
            acc = acc.union(bin_bounds[plane - 1]);
            n += bin_counts[plane - 1];
            if n == 0 || right_count[plane] == 0 {
                continue;
            }
            let cost = acc.surface_area() * n as f64 + right_area[plane] * right_count[plane] as f64;
            if cost < best.0 {
                best = (cost, plane);
            }
        }
        let leaf_cost = bounds.surface_area() * count as f64;
        if count <= MAX_LEAF_SIZE && (best.1 == 0 || 0.125 * bounds.surface_area() + best.0 >= leaf_cost) {
            make_leaf(nodes);
            return;
        }
        if best.1 == 0 {
            0
        } else {
            let split = best.1;
            partition_in_place(slice, |i| bin_of(i) < split)
        }
    };

    let mid = if mid == 0 || mid == count {
        // degenerate partition: fall back to a median split along the axis
        slice.sort_by(|&a, &b| {
            items[a as usize].centroid[axis]
                .total_cmp(&items[b as usize].centroid[axis])
                .then(a.cmp(&b))
        });
        count / 2
    } else {
        mid
    };

    let left = nodes.len();
    nodes.push(Node {
        bounds: Aabb::EMPTY,
        start: 0,
        count: 0,
    });
    nodes.push(Node {
        bounds: Aabb::EMPTY,
        start: 0,
        count: 0,
    });
    nodes[node] = Node {
        bounds,
        start: left as u32,
        count: 0,
    };
    build(items, indices, start, start + mid, left, depth + 1, nodes);
    build(items, indices, start + mid, end, left + 1, depth + 1, nodes);
}

fn partition_in_place(slice: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut i = 0;
    for j in 0..slice.len() {
        if pred(slice[j]) {
            slice.swap(i, j);
            i += 1;
        }
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{stream, uniform};

    fn random_triangles(n: usize, seed: u64) -> Vec<Triangle> {
        let mut rng = stream(seed);
        (0..n)
            .map(|_| {
                let c = DVec3::new(uniform(&mut rng, -5.0, 5.0), uniform(&mut rng, -5.0, 5.0), uniform(&mut rng, -5.0, 5.0));
                let mut v = || c + DVec3::new(uniform(&mut rng, -0.7, 0.7), uniform(&mut rng, -0.7, 0.7), uniform(&mut rng, -0.7, 0.7));
                Triangle::new(v(), v(), v())
            })
            .collect()
    }

    fn brute(tris: &[Triangle], ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, t) in tris.iter().enumerate() {
            if let Some((d, b1, b2)) = t.intersect(ray, 0.0) {
                let h = Hit { tri: i as u32, t: d, b1, b2 };
                if best.is_none_or(|b| h.closer_than(&b)) {
                    best = Some(h);
                }
            }
        }
        best
    }

    #[test]
    fn single_triangle_is_one_leaf() {
        let tri = Triangle::new(DVec3::new(-1.0, -1.0, -3.0), DVec3::new(1.0, -1.0, -3.0), DVec3::new(0.0, 1.0, -3.0));
        let bvh = Bvh::new(vec![tri]);
        assert_eq!(bvh.node_count(), 1);
        assert_eq!(bvh.leaf_count(), 1);
        let centroid = (tri.vertices()[0] + tri.vertices()[1] + tri.vertices()[2]) / 3.0;
        let ray = Ray::new(DVec3::ZERO, centroid.normalize());
        let hit = bvh.intersect(&ray, 0.0, f64::INFINITY).unwrap();
        // plane z = -3 along the ray
        let analytic = -3.0 / ray.dir.z;
        assert!((hit.t - analytic).abs() < 1e-12);
        assert_eq!(Some(hit), brute(&[tri], &ray));
    }

    #[test]
    fn invariants_hold_on_random_sets() {
        for (n, seed) in [(0, 1), (1, 2), (5, 3), (1000, 4), (4096, 5)] {
            let bvh = Bvh::new(random_triangles(n, seed));
            bvh.check_invariants().unwrap();
        }
    }

    #[test]
    fn identical_centroids_still_split() {
        let tri = Triangle::new(DVec3::ZERO, DVec3::X, DVec3::Y);
        let bvh = Bvh::new(vec![tri; 37]);
        bvh.check_invariants().unwrap();
        let ray = Ray::new(DVec3::new(0.2, 0.2, 1.0), -DVec3::Z);
        assert_eq!(bvh.intersect(&ray, 0.0, f64::INFINITY).unwrap().tri, 0);
    }

    #[test]
    fn matches_brute_force() {
        let tris = random_triangles(1000, 7);
        let bvh = Bvh::new(tris.clone());
        let mut rng = stream(8);
        for _ in 0..1000 {
            let o = DVec3::new(uniform(&mut rng, -8.0, 8.0), uniform(&mut rng, -8.0, 8.0), uniform(&mut rng, -8.0, 8.0));
            let d = DVec3::new(uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0)).normalize();
            let ray = Ray::new(o, d);
            let want = brute(&tris, &ray);
            assert_eq!(bvh.intersect(&ray, 0.0, f64::INFINITY), want);
            assert_eq!(bvh.occluded(&ray, 0.0, f64::INFINITY), want.is_some());
        }
    }

    #[test]
    fn empty_space_ray_misses() {
        let tris = random_triangles(100, 9);
        let bvh = Bvh::new(tris.clone());
        let ray = Ray::new(DVec3::new(100.0, 100.0, 100.0), DVec3::ONE.normalize());
        assert!(bvh.intersect(&ray, 0.0, f64::INFINITY).is_none());
        assert!(brute(&tris, &ray).is_none());
        assert!(Bvh::new(Vec::new()).intersect(&ray, 0.0, f64::INFINITY).is_none());
    }
}
