//! The core grid: box index arithmetic, the front/back ray interval through
//! a proxy mesh, and the voxel walk over the boxes a ray passes.

use crate::geom::{ray_aabb, vec3, Aabb, Ray, Vec3};
use crate::mesh::ProxyMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoxCoord {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl BoxCoord {
    pub const fn new(i: u32, j: u32, k: u32) -> BoxCoord {
        BoxCoord { i, j, k }
    }

    pub fn as_array(self) -> [u32; 3] {
        [self.i, self.j, self.k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreGridMeta {
    pub aabb: Aabb,
    pub dims: (u32, u32, u32),
    pub box_size: Vec3,
}

impl CoreGridMeta {
    /// Smallest grid of `box_size` cubes anchored at `aabb.min` that covers
    /// `aabb`.
    pub fn covering(aabb: Aabb, box_size: f64) -> CoreGridMeta {
        let e = aabb.extent();
        let n = |v: f64| ((v / box_size).ceil() as u32).max(1);
        CoreGridMeta {
            aabb,
            dims: (n(e.x), n(e.y), n(e.z)),
            box_size: Vec3::splat(box_size),
        }
    }

    pub fn box_count(&self) -> u64 {
        self.dims.0 as u64 * self.dims.1 as u64 * self.dims.2 as u64
    }

    fn dim(&self, axis: usize) -> u32 {
        [self.dims.0, self.dims.1, self.dims.2][axis]
    }

    /// The region actually tiled by boxes, `[min, min + dims·size]`.
    pub fn region(&self) -> Aabb {
        let d = vec3(self.dims.0 as f64, self.dims.1 as f64, self.dims.2 as f64);
        Aabb::new(self.aabb.min, self.aabb.min + d.mul_elem(self.box_size))
    }

    pub fn linear_index(&self, b: BoxCoord) -> u32 {
        (b.k * self.dims.1 + b.j) * self.dims.0 + b.i
    }

    pub fn coord_of(&self, index: u32) -> BoxCoord {
        let i = index % self.dims.0;
        let j = (index / self.dims.0) % self.dims.1;
        let k = index / (self.dims.0 * self.dims.1);
        BoxCoord::new(i, j, k)
    }

    pub fn box_aabb(&self, b: BoxCoord) -> Aabb {
        let lo = box_min(self, b);
        Aabb::new(lo, lo + self.box_size)
    }

    pub fn box_center(&self, b: BoxCoord) -> Vec3 {
        box_min(self, b) + self.box_size * 0.5
    }
}

/// `floor((p − min) / size)` per axis, clamped into the grid. The quotient
/// is nudged by one where rounding disagrees with [`box_min`], so a point
/// always lands in the box whose half-open extent holds it.
pub fn point_to_box(meta: &CoreGridMeta, p: Vec3) -> BoxCoord {
    let idx = |axis: usize| -> u32 {
        let size = meta.box_size[axis];
        let lo = meta.aabb.min[axis];
        let hi = meta.dim(axis) as i64 - 1;
        let mut v = ((p[axis] - lo) / size).floor().clamp(-1.0, hi as f64 + 1.0) as i64;
        let start = |c: i64| c as f64 * size + lo;
        if v < hi && start(v + 1) <= p[axis] {
            v += 1;
        } else if v > 0 && start(v) > p[axis] {
            v -= 1;
        }
        v.clamp(0, hi) as u32
    };
    BoxCoord::new(idx(0), idx(1), idx(2))
}

/// `b · size + min`.
pub fn box_min(meta: &CoreGridMeta, b: BoxCoord) -> Vec3 {
    vec3(
        b.i as f64 * meta.box_size.x + meta.aabb.min.x,
        b.j as f64 * meta.box_size.y + meta.aabb.min.y,
        b.k as f64 * meta.box_size.z + meta.aabb.min.z,
    )
}

/// Interior segment of a mesh-space ray: from the closest front-facing hit
/// to the closest back-facing hit, or from `eps` when the origin is inside.
pub fn ray_interval(mesh: &ProxyMesh, local_ray: &Ray, eps: f64) -> Option<(f64, f64)> {
    let back = mesh.closest_facing(local_ray, false)?.0;
    let front = mesh.closest_facing(local_ray, true).map(|h| h.0);
    match front {
        Some(tq) if tq < back => Some((tq, back)),
        Some(tq) if tq == back => None,
        _ => (eps < back).then_some((eps, back)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxVisit {
    pub coord: BoxCoord,
    pub t_enter: f64,
    pub t_exit: f64,
}

/// Voxel walk over every box the segment `[t_lo, t_hi]` of `ray` touches,
/// in order of entry. Ties between axes step x, then y, then z.
#[derive(Debug, Clone)]
pub struct GridWalk {
    meta: CoreGridMeta,
    origin: Vec3,
    inv: Vec3,
    cell: [i64; 3],
    step: [i64; 3],
    t: f64,
    t_end: f64,
    done: bool,
}

impl GridWalk {
    fn next_crossing(&self, axis: usize) -> f64 {
        if self.step[axis] == 0 {
            return f64::INFINITY;
        }
        let c = self.cell[axis] + i64::from(self.step[axis] > 0);
        let boundary = c as f64 * self.meta.box_size[axis] + self.meta.aabb.min[axis];
        (boundary - self.origin[axis]) * self.inv[axis]
    }
}

impl Iterator for GridWalk {
    type Item = BoxVisit;

    fn next(&mut self) -> Option<BoxVisit> {
        if self.done {
            return None;
        }
        let crossings = [self.next_crossing(0), self.next_crossing(1), self.next_crossing(2)];
        let mut axis = 0;
        for a in 1..3 {
            if crossings[a] < crossings[axis] {
                axis = a;
            }
        }
        let exit = crossings[axis];
        let visit = BoxVisit {
            coord: BoxCoord::new(self.cell[0] as u32, self.cell[1] as u32, self.cell[2] as u32),
            t_enter: self.t,
            t_exit: exit.min(self.t_end),
        };
        if exit > self.t_end {
            self.done = true;
        } else {
            self.cell[axis] += self.step[axis];
            self.t = exit.max(self.t);
            let n = self.meta.dim(axis) as i64;
            if self.cell[axis] < 0 || self.cell[axis] >= n {
                self.done = true;
            }
        }
        Some(visit)
    }
}

pub fn grid_traverse(meta: &CoreGridMeta, local_ray: &Ray, interval: (f64, f64)) -> GridWalk {
    let mut walk = GridWalk {
        meta: *meta,
        origin: local_ray.origin,
        inv: vec3(
            1.0 / local_ray.direction.x,
            1.0 / local_ray.direction.y,
            1.0 / local_ray.direction.z,
        ),
        cell: [0; 3],
        step: [0; 3],
        t: 0.0,
        t_end: 0.0,
        done: true,
    };
    let Some(iv) = ray_aabb(local_ray, &meta.region()) else {
        return walk;
    };
    let lo = interval.0.max(iv.t_enter);
    let hi = interval.1.min(iv.t_exit);
    if !(lo <= hi) {
        return walk;
    }
    let start = point_to_box(meta, local_ray.at(lo));
    walk.cell = [start.i as i64, start.j as i64, start.k as i64];
    for a in 0..3 {
        let d = local_ray.direction[a];
        walk.step[a] = if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        };
    }
    walk.t = lo;
    walk.t_end = hi;
    walk.done = false;
    walk
}
