//! Bounding-volume hierarchy used at every level of the scene, and the static
//! grid of tile boxes used to walk a replication area closest-first.

use std::convert::Infallible;
use std::mem::size_of;

use crate::geom::{ray_aabb, vec3, Aabb, Ray, Vec3};

const LEAF_SIZE: usize = 4;
const STACK_SIZE: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Leaf: first slot in the primitive permutation. Interior: index of the
    /// second child; the first child immediately follows its parent.
    pub offset: u32,
    /// Primitive count for leaves, zero for interior nodes.
    pub count: u32,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    prim_ids: Vec<u32>,
    prim_bounds: Vec<Aabb>,
}

/// Closest accepted hit from a traversal: `(t, primitive id, payload)`.
pub type Closest<H> = Option<(f64, u32, H)>;

impl Bvh {
    /// Median split on the longest centroid axis. Primitives with empty
    /// bounds are kept in the input numbering but never visited.
    pub fn build(bounds: &[Aabb]) -> Bvh {
        let mut ids: Vec<u32> = (0..bounds.len() as u32)
            .filter(|&i| !bounds[i as usize].is_empty())
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * ids.len() / LEAF_SIZE + 1),
            prim_ids: Vec::with_capacity(ids.len()),
            prim_bounds: bounds.to_vec(),
        };
        if ids.is_empty() {
            return bvh;
        }
        let centroids: Vec<Vec3> = bounds.iter().map(|b| b.center()).collect();
        bvh.build_node(&mut ids, &centroids);
        bvh
    }

    fn build_node(&mut self, ids: &mut [u32], centroids: &[Vec3]) -> usize {
        let bounds = ids
            .iter()
            .fold(Aabb::EMPTY, |b, &i| b.union(&self.prim_bounds[i as usize]));
        let index = self.nodes.len();
        self.nodes.push(BvhNode {
            bounds: pad(bounds),
            offset: 0,
            count: 0,
        });
        let cb = Aabb::from_points(ids.iter().map(|&i| centroids[i as usize]));
        let ext = cb.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        if ids.len() <= LEAF_SIZE || ext[axis] <= 0.0 {
            self.nodes[index].offset = self.prim_ids.len() as u32;
            self.nodes[index].count = ids.len() as u32;
            self.prim_ids.extend_from_slice(ids);
            return index;
        }
        let mid = ids.len() / 2;
        ids.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let (left, right) = ids.split_at_mut(mid);
        self.build_node(left, centroids);
        let second = self.build_node(right, centroids);
        self.nodes[index].offset = second as u32;
        index
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    /// Test hook for corrupting a hierarchy.
    #[doc(hidden)]
    pub fn nodes_mut(&mut self) -> &mut [BvhNode] {
        &mut self.nodes
    }

    pub fn primitive_bounds(&self) -> &[Aabb] {
        &self.prim_bounds
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes.first().map_or(Aabb::EMPTY, |n| n.bounds)
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[BvhNode], i: usize) -> usize {
            let n = &nodes[i];
            if n.is_leaf() {
                1
            } else {
                1 + rec(nodes, i + 1).max(rec(nodes, n.offset as usize))
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            rec(&self.nodes, 0)
        }
    }

    pub fn byte_size(&self) -> usize {
        self.nodes.len() * size_of::<BvhNode>()
            + self.prim_ids.len() * size_of::<u32>()
            + self.prim_bounds.len() * size_of::<Aabb>()
    }

    /// Every node contains its children, every leaf contains its primitives,
    /// and each non-empty primitive sits in exactly one leaf.
    pub fn check_containment(&self) -> Result<(), String> {
        let mut seen = vec![0u32; self.prim_bounds.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.bounds.is_empty() {
                return Err(format!("node {i} has inverted bounds"));
            }
            if n.is_leaf() {
                let range = n.offset as usize..(n.offset + n.count) as usize;
                let Some(ids) = self.prim_ids.get(range) else {
                    return Err(format!("leaf {i} references primitives out of range"));
                };
                for &p in ids {
                    seen[p as usize] += 1;
                    if !n.bounds.contains(&self.prim_bounds[p as usize]) {
                        return Err(format!("leaf {i} does not contain primitive {p}"));
                    }
                }
            } else {
                for c in [i + 1, n.offset as usize] {
                    let Some(child) = self.nodes.get(c) else {
                        return Err(format!("node {i} references missing child {c}"));
                    };
                    if !n.bounds.contains(&child.bounds) {
                        return Err(format!("node {i} does not contain child {c}"));
                    }
                }
            }
        }
        for (p, (&count, b)) in seen.iter().zip(&self.prim_bounds).enumerate() {
            let expected = u32::from(!b.is_empty());
            if count != expected {
                return Err(format!("primitive {p} referenced {count} times"));
            }
        }
        Ok(())
    }

    /// Closest-hit traversal. `visit` receives a primitive id and the ray
    /// with `t_max` shrunk to the best hit so far, and returns its own hit.
    /// Equal `t` goes to the smaller primitive id, so the result does not
    /// depend on visiting order.
    pub fn traverse<H>(
        &self,
        ray: &Ray,
        mut visit: impl FnMut(u32, &Ray) -> Option<(f64, H)>,
    ) -> Closest<H> {
        let r: Result<_, Infallible> = self.try_traverse(ray, |p, r| Ok(visit(p, r)));
        match r {
            Ok(v) => v,
            Err(e) => match e {},
        }
    }

    pub fn try_traverse<H, E>(
        &self,
        ray: &Ray,
        mut visit: impl FnMut(u32, &Ray) -> Result<Option<(f64, H)>, E>,
    ) -> Result<Closest<H>, E> {
        let mut best: Closest<H> = None;
        if self.nodes.is_empty() {
            return Ok(best);
        }
        let mut work = *ray;
        let mut stack = [(0u32, 0.0f64); STACK_SIZE];
        let mut sp = 0;
        match ray_aabb(&work, &self.nodes[0].bounds) {
            Some(iv) if iv.overlaps(work.t_min, work.t_max) => {
                stack[0] = (0, iv.t_enter);
                sp = 1;
            }
            _ => {}
        }
        while sp > 0 {
            sp -= 1;
            let (ni, enter) = stack[sp];
            if enter > work.t_max {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.is_leaf() {
                let start = node.offset as usize;
                for &p in &self.prim_ids[start..start + node.count as usize] {
                    if let Some((t, h)) = visit(p, &work)? {
                        if t < work.t_min || t > work.t_max || t.is_nan() {
                            continue;
                        }
                        let better = match &best {
                            None => true,
                            Some((bt, bp, _)) => t < *bt || (t == *bt && p < *bp),
                        };
                        if better {
                            work.t_max = t;
                            best = Some((t, p, h));
                        }
                    }
                }
                continue;
            }
            let a = ni + 1;
            let b = node.offset;
            let ia = self.child_entry(&work, a);
            let ib = self.child_entry(&work, b);
            match (ia, ib) {
                (Some(ta), Some(tb)) => {
                    let (near, far) = if tb < ta { ((b, tb), (a, ta)) } else { ((a, ta), (b, tb)) };
                    stack[sp] = far;
                    stack[sp + 1] = near;
                    sp += 2;
                }
                (Some(ta), None) => {
                    stack[sp] = (a, ta);
                    sp += 1;
                }
                (None, Some(tb)) => {
                    stack[sp] = (b, tb);
                    sp += 1;
                }
                (None, None) => {}
            }
            debug_assert!(sp < STACK_SIZE - 1);
        }
        Ok(best)
    }

    #[inline]
    fn child_entry(&self, ray: &Ray, i: u32) -> Option<f64> {
        let iv = ray_aabb(ray, &self.nodes[i as usize].bounds)?;
        iv.overlaps(ray.t_min, ray.t_max).then_some(iv.t_enter)
    }
}

fn pad(b: Aabb) -> Aabb {
    let scale = b.extent().max_element() + b.min.abs().max(b.max.abs()).max_element();
    b.expand(scale * 1e-12)
}

/// Static grid of tile boxes laid out around the centre of a replication
/// area, in tile object space.
#[derive(Debug, Clone, PartialEq)]
pub struct RepGrid {
    pub dims: (u32, u32),
    pub tile_size: f64,
    pub cells: Vec<Aabb>,
    pub bvh: Bvh,
}

impl RepGrid {
    /// Cells of extent `(s, 2·h_max, s)`.
    pub fn new(dims: (u32, u32), tile_size: f64, h_max: f64) -> RepGrid {
        let h = tile_size * 0.5;
        let cell = Aabb::new(vec3(-h, -h_max, -h), vec3(h, h_max, h));
        RepGrid::with_cell_box(dims, tile_size, cell)
    }

    /// Cells are translated copies of `cell_box`.
    pub fn with_cell_box(dims: (u32, u32), tile_size: f64, cell_box: Aabb) -> RepGrid {
        let mut cells = Vec::with_capacity((dims.0 * dims.1) as usize);
        for j in 0..dims.1 {
            for i in 0..dims.0 {
                let o = Self::cell_offset(dims, tile_size, i, j);
                cells.push(Aabb::new(cell_box.min + o, cell_box.max + o));
            }
        }
        let bvh = Bvh::build(&cells);
        RepGrid {
            dims,
            tile_size,
            cells,
            bvh,
        }
    }

    pub fn cell_offset(dims: (u32, u32), s: f64, i: u32, j: u32) -> Vec3 {
        vec3(
            (i as f64 + 0.5) * s - dims.0 as f64 * s * 0.5,
            0.0,
            (j as f64 + 0.5) * s - dims.1 as f64 * s * 0.5,
        )
    }

    pub fn byte_size(&self) -> usize {
        self.cells.len() * size_of::<Aabb>() + self.bvh.byte_size()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ray_sphere;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spheres(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Vec3, f64)> {
        (0..n)
            .map(|_| {
                (
                    vec3(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)),
                    rng.gen_range(0.1..1.5),
                )
            })
            .collect()
    }

    fn sphere_bounds(s: &[(Vec3, f64)]) -> Vec<Aabb> {
        s.iter().map(|&(c, r)| Aabb::from_center_half(c, Vec3::splat(r))).collect()
    }

    fn linear(s: &[(Vec3, f64)], ray: &Ray) -> Option<(f64, u32)> {
        let mut best: Option<(f64, u32)> = None;
        for (i, &(c, r)) in s.iter().enumerate() {
            if let Some(t) = ray_sphere(ray, c, r) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i as u32));
                }
            }
        }
        best
    }

    fn random_ray(rng: &mut ChaCha8Rng) -> Ray {
        let o = vec3(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let target = vec3(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
        Ray::new(o, target - o)
    }

    #[test]
    fn single_primitive_is_root_leaf() {
        let bvh = Bvh::build(&[Aabb::new(Vec3::ZERO, Vec3::ONE)]);
        assert_eq!(bvh.nodes().len(), 1);
        assert!(bvh.nodes()[0].is_leaf());
        let r = Ray::new(vec3(0.5, 0.5, -1.0), Vec3::Z);
        let hit = bvh.traverse(&r, |p, _| Some((1.0, p)));
        assert_eq!(hit.map(|h| h.1), Some(0));
    }

    #[test]
    fn empty_hierarchy_never_hits() {
        let bvh = Bvh::build(&[]);
        let r = Ray::new(Vec3::ZERO, Vec3::Z);
        assert!(bvh.traverse(&r, |_, _| Some((1.0, ()))).is_none());
        assert!(bvh.check_containment().is_ok());
    }

    #[test]
    fn shrinking_t_max_skips_far_hit() {
        let bounds = [
            Aabb::new(vec3(-1.0, -1.0, 0.5), vec3(1.0, 1.0, 1.5)),
            Aabb::new(vec3(-1.0, -1.0, 2.5), vec3(1.0, 1.0, 3.5)),
        ];
        let bvh = Bvh::build(&bounds);
        let r = Ray::new(vec3(0.0, 0.0, 0.0), Vec3::Z);
        let mut accepted_far = false;
        let hit = bvh.traverse(&r, |p, work| {
            let t = if p == 0 { 1.0 } else { 3.0 };
            if t <= work.t_max {
                if p == 1 && work.t_max < 3.0 {
                    accepted_far = true;
                }
                Some((t, ()))
            } else {
                None
            }
        });
        assert_eq!(hit.map(|h| h.0), Some(1.0));
        assert!(!accepted_far);
    }

    #[test]
    fn rejecting_callback_gives_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = spheres(&mut rng, 50);
        let bvh = Bvh::build(&sphere_bounds(&s));
        for _ in 0..100 {
            let r = random_ray(&mut rng);
            assert!(bvh.traverse(&r, |_, _| None::<(f64, ())>).is_none());
        }
    }

    #[test]
    fn candidate_set_covers_true_overlaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = spheres(&mut rng, 1000);
        let bounds = sphere_bounds(&s);
        let bvh = Bvh::build(&bounds);
        bvh.check_containment().unwrap();
        for _ in 0..200 {
            let r = random_ray(&mut rng);
            let mut visited = vec![false; bounds.len()];
            bvh.traverse(&r, |p, _| {
                visited[p as usize] = true;
                None::<(f64, ())>
            });
            for (i, b) in bounds.iter().enumerate() {
                if ray_aabb(&r, b).is_some_and(|iv| iv.overlaps(r.t_min, r.t_max)) {
                    assert!(visited[i], "primitive {i} overlapping the ray was skipped");
                }
            }
        }
    }

    #[test]
    fn closest_hit_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = spheres(&mut rng, 200);
        let bvh = Bvh::build(&sphere_bounds(&s));
        let mut hits = 0;
        for _ in 0..10_000 {
            let r = random_ray(&mut rng);
            let got = bvh.traverse(&r, |p, w| {
                let (c, rad) = s[p as usize];
                ray_sphere(w, c, rad).map(|t| (t, ()))
            });
            let want = linear(&s, &r);
            match (got, want) {
                (Some((t, p, _)), Some((wt, wp))) => {
                    hits += 1;
                    assert!((t - wt).abs() <= 1e-7 * wt.abs().max(1e-9));
                    assert_eq!(p, wp);
                }
                (None, None) => {}
                (g, w) => panic!("bvh {:?} vs linear {:?}", g.map(|h| (h.0, h.1)), w),
            }
        }
        assert!(hits > 1000);
    }

    #[test]
    fn build_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = sphere_bounds(&spheres(&mut rng, 300));
        assert_eq!(Bvh::build(&b), Bvh::build(&b));
    }

    #[test]
    fn corrupted_bound_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut bvh = Bvh::build(&sphere_bounds(&spheres(&mut rng, 64)));
        let n = &mut bvh.nodes_mut()[1];
        std::mem::swap(&mut n.bounds.min, &mut n.bounds.max);
        assert!(bvh.check_containment().is_err());
    }

    #[test]
    fn equal_t_goes_to_smaller_id() {
        let b = vec![Aabb::new(Vec3::ZERO, Vec3::ONE); 9];
        let bvh = Bvh::build(&b);
        let r = Ray::new(vec3(0.5, 0.5, -1.0), Vec3::Z);
        let hit = bvh.traverse(&r, |_, _| Some((1.0, ())));
        assert_eq!(hit.map(|h| h.1), Some(0));
    }

    #[test]
    fn rep_grid_layout() {
        let g = RepGrid::new((1, 1), 2.0, 1.0);
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.cells[0].center(), Vec3::ZERO);
        let g = RepGrid::new((2, 1), 2.0, 1.0);
        assert_eq!(g.cells[0].max.x, 0.0);
        assert_eq!(g.cells[1].min.x, 0.0);
        assert_eq!(g.cells[0].extent(), vec3(2.0, 2.0, 2.0));
    }

    #[test]
    fn rep_grid_reports_closest_cell_first() {
        let g = RepGrid::new((4, 1), 1.0, 0.5);
        let r = Ray::new(vec3(-5.0, 0.0, 0.0), Vec3::X);
        let mut order = Vec::new();
        g.bvh.traverse(&r, |p, _| {
            order.push(p);
            None::<(f64, ())>
        });
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    proptest! {
        #[test]
        fn nodes_contain_children(seed in any::<u64>(), n in 0usize..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bvh = Bvh::build(&sphere_bounds(&spheres(&mut rng, n)));
            prop_assert!(bvh.check_containment().is_ok());
        }

        #[test]
        fn traversal_matches_linear_scan(seed in any::<u64>(), n in 1usize..120) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = spheres(&mut rng, n);
            let bvh = Bvh::build(&sphere_bounds(&s));
            for _ in 0..20 {
                let r = random_ray(&mut rng);
                let got = bvh.traverse(&r, |p, w| {
                    let (c, rad) = s[p as usize];
                    ray_sphere(w, c, rad).map(|t| (t, ()))
                }).map(|h| (h.0, h.1));
                prop_assert_eq!(got, linear(&s, &r));
            }
        }
    }
}
