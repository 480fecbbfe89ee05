//! Bounding volume hierarchy over the scene triangles.

use crate::math::{Aabb, Vec3};
use crate::scene::SceneGeometry;

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first primitive index. Interior: index of the right child (the
    /// left child follows the node directly).
    offset: u32,
    /// Zero for interior nodes.
    count: u32,
}

#[derive(Clone, Copy, Debug)]
struct Tri {
    v0: Vec3,
    e1: Vec3,
    e2: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub prim: u32,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    tris: Vec<Tri>,
    /// Maps BVH order to scene triangle index.
    prims: Vec<u32>,
}

impl Bvh {
    pub fn build(scene: &SceneGeometry) -> Self {
        let bounds: Vec<Aabb> = scene.triangles.iter().map(|t| t.bounds()).collect();
        let centers: Vec<Vec3> = bounds.iter().map(Aabb::center).collect();
        let mut order: Vec<u32> = (0..scene.triangles.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * order.len() / LEAF_SIZE + 1);
        if !order.is_empty() {
            build_rec(&mut nodes, &mut order, 0, &bounds, &centers);
        }
        let tris = order
            .iter()
            .map(|&i| {
                let v = scene.triangles[i as usize].v;
                Tri {
                    v0: v[0],
                    e1: v[1] - v[0],
                    e2: v[2] - v[0],
                }
            })
            .collect();
        Bvh {
            nodes,
            tris,
            prims: order,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map(|n| n.bounds).unwrap_or(Aabb::EMPTY)
    }

    /// Closest hit along `origin + t·dir` for `t` in (0, t_max).
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_max: f64) -> Option<Hit> {
        self.traverse(origin, dir, t_max, false)
    }

    /// Whether anything blocks the segment (0, t_max).
    pub fn occluded(&self, origin: Vec3, dir: Vec3, t_max: f64) -> bool {
        self.traverse(origin, dir, t_max, true).is_some()
    }

    fn traverse(&self, origin: Vec3, dir: Vec3, t_max: f64, any: bool) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let neg = [dir.x < 0.0, dir.y < 0.0, dir.z < 0.0];
        let mut best: Option<Hit> = None;
        let mut t_best = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.bounds.hit(origin, inv, t_best).is_some() {
                if node.count > 0 {
                    let start = node.offset as usize;
                    for k in start..start + node.count as usize {
                        if let Some(t) = intersect_tri(&self.tris[k], origin, dir, t_best) {
                            t_best = t;
                            best = Some(Hit {
                                t,
                                prim: self.prims[k],
                            });
                            if any {
                                return best;
                            }
                        }
                    }
                } else {
                    // Visit the child on the ray's near side first.
                    let axis = split_axis(node);
                    let (first, second) = if neg[axis] {
                        (node.offset as usize, idx + 1)
                    } else {
                        (idx + 1, node.offset as usize)
                    };
                    stack[sp] = second as u32;
                    sp += 1;
                    idx = first;
                    continue;
                }
            }
            if sp == 0 {
                break;
            }
            sp -= 1;
            idx = stack[sp] as usize;
        }
        best
    }
}

fn split_axis(node: &Node) -> usize {
    let e = node.bounds.extent();
    if e.x >= e.y && e.x >= e.z {
        0
    } else if e.y >= e.z {
        1
    } else {
        2
    }
}

fn build_rec(nodes: &mut Vec<Node>, order: &mut [u32], first: usize, bounds: &[Aabb], centers: &[Vec3]) -> usize {
    let mut b = Aabb::EMPTY;
    for &i in order.iter() {
        b = b.union(bounds[i as usize]);
    }
    let me = nodes.len();
    nodes.push(Node {
        bounds: b,
        offset: first as u32,
        count: order.len() as u32,
    });
    if order.len() <= LEAF_SIZE {
        return me;
    }
    // Split on the node's own longest axis so traversal can recover it.
    let axis = split_axis(&nodes[me]);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &c| {
        centers[a as usize][axis]
            .partial_cmp(&centers[c as usize][axis])
            .unwrap()
            .then(a.cmp(&c))
    });
    let (left, right) = order.split_at_mut(mid);
    build_rec(nodes, left, first, bounds, centers);
    let r = build_rec(nodes, right, first + mid, bounds, centers);
    nodes[me].offset = r as u32;
    nodes[me].count = 0;
    me
}

/// Möller–Trumbore, two-sided.
#[inline]
fn intersect_tri(tri: &Tri, origin: Vec3, dir: Vec3, t_max: f64) -> Option<f64> {
    let p = dir.cross(tri.e2);
    let det = tri.e1.dot(p);
    if det.abs() < 1e-18 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri.v0;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(tri.e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = tri.e2.dot(q) * inv;
    (t > 0.0 && t < t_max).then_some(t)
}
