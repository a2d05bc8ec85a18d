//! Brute-force reference renderer. Every virtual atom the renderer could
//! show is written out in world space up front, then each ray scans the
//! spheres linearly. Only the coarse gates are shared with the renderer:
//! the prism boundary kernel, prism containment, and the clip tests on
//! prism, box and molecule corners. Hierarchies, the voxel walk, inverse
//! instance transforms and the sphere solver are all replaced.

use rayon::prelude::*;

use vinst_core::geom::{ray_aabb, ray_triangle, vec2, Aabb, Affine, Plane, Ray, Vec3};
use vinst_core::grid::BoxCoord;
use vinst_core::render::{instance_transform, jitter_rotation, Camera, HitRecord, Layer, RenderConfig, SmoothNormal};
use vinst_core::scene::Scene;
use vinst_core::shell::{point_in_prism, ray_prism_intersect};

pub type Identity = (Layer, u32, u32, [u32; 3], u32, u32, u32);

/// One instance in world space.
pub struct Placed {
    pub id: (Layer, u32, u32, [u32; 3], u32, u32),
    pub to_world: Affine,
    pub from_world: Affine,
    pub bounds: Aabb,
}

pub struct ShellGroup {
    pub mesh_instance: u32,
    pub prism: u32,
    pub instances: Vec<Placed>,
}

pub struct CoreGroup {
    pub mesh_instance: u32,
    pub boxes: Vec<(BoxCoord, Aabb, Vec<Placed>)>,
}

pub struct Oracle<'a> {
    pub scene: &'a Scene,
    pub shell: Vec<ShellGroup>,
    pub core: Vec<CoreGroup>,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleHit {
    pub t: f64,
    pub id: Identity,
    /// Closest distinct candidate behind the winner.
    pub runner_up: Option<f64>,
    pub grazing: bool,
}

fn invisible(points: &[Vec3], plane: &Option<Plane>) -> bool {
    match plane {
        Some(p) => points.iter().all(|&q| p.signed_distance(q) < 0.0),
        None => false,
    }
}

fn place(
    scene: &Scene,
    world: &Affine,
    w_mesh: Affine,
    molecule: u32,
    id: (Layer, u32, u32, [u32; 3], u32, u32),
    plane: &Option<Plane>,
) -> Option<Placed> {
    let to_world = world.compose(&w_mesh);
    let m = &scene.molecules[molecule as usize];
    let corners = m.aabb.corners().map(|c| to_world.transform_point(c));
    if invisible(&corners, plane) {
        return None;
    }
    let from_world = to_world.inverse().ok()?;
    Some(Placed {
        id,
        to_world,
        from_world,
        bounds: Aabb::from_points(corners),
    })
}

impl<'a> Oracle<'a> {
    pub fn new(scene: &'a Scene, cfg: &RenderConfig) -> Oracle<'a> {
        let plane = cfg.clip.enabled.then(|| cfg.clip.plane());
        let mut shell = Vec::new();
        let mut core = Vec::new();
        for (mi, inst) in scene.instances.iter().enumerate() {
            let mi = mi as u32;
            let mesh = &scene.meshes[inst.mesh as usize];
            if let (Some(sp), Some(tiles)) = (&mesh.shell, &scene.shell_tiles) {
                let s = tiles.set.world_size;
                let t = tiles.recipe.tile_uv_size;
                for (pi, prism) in sp.prisms.iter().enumerate() {
                    if prism.degenerate {
                        continue;
                    }
                    let verts = prism.vertices().map(|v| inst.world.transform_point(v));
                    if invisible(&verts, &plane) {
                        continue;
                    }
                    let frame = &sp.frames[pi];
                    let origin = sp.origins[pi];
                    let mut placed = Vec::new();
                    for j in 0..sp.window.1 {
                        for i in 0..sp.window.0 {
                            let cell = (origin.0 + i, origin.1 + j);
                            let g = vec2((cell.0 as f64 + 0.5) * t, (cell.1 as f64 + 0.5) * t);
                            let m1 = frame.m1(g);
                            let tile_id = tiles.recipe.lookup(cell.0, cell.1).unwrap();
                            for (k, mi_inst) in tiles.set.tiles[tile_id as usize].instances.iter().enumerate() {
                                if !point_in_prism(prism, m1.transform_point(mi_inst.position)) {
                                    continue;
                                }
                                let c3 = [cell.0, cell.1, 0];
                                let jitter =
                                    jitter_rotation(mi, c3, k as u32, Layer::Shell, cfg.time, cfg.jitter_amplitude);
                                let smooth = cfg.smooth_normals.then(|| SmoothNormal {
                                    normal: frame.smooth_normal(
                                        g + vec2(mi_inst.position.x, mi_inst.position.z) * (t / s),
                                    ),
                                    up: scene.molecules[mi_inst.molecule as usize].up_vector,
                                });
                                let w = instance_transform(&m1, mi_inst, smooth, jitter);
                                let id = (Layer::Shell, mi, pi as u32, c3, k as u32, mi_inst.molecule);
                                if let Some(p) = place(scene, &inst.world, w, mi_inst.molecule, id, &plane) {
                                    placed.push(p);
                                }
                            }
                        }
                    }
                    shell.push(ShellGroup {
                        mesh_instance: mi,
                        prism: pi as u32,
                        instances: placed,
                    });
                }
            }
            if let (Some(cs), Some(tiles)) = (&mesh.core, &scene.core_tiles) {
                let meta = &cs.meta;
                let mut boxes = Vec::new();
                for k in 0..meta.dims.2 {
                    for j in 0..meta.dims.1 {
                        for i in 0..meta.dims.0 {
                            let b = BoxCoord::new(i, j, k);
                            let bb = meta.box_aabb(b);
                            let corners = bb.corners().map(|c| inst.world.transform_point(c));
                            if invisible(&corners, &plane) {
                                continue;
                            }
                            let m1 = Affine::from_translation(meta.box_center(b));
                            let tile_id = tiles.recipe.lookup(i, j, k).unwrap();
                            let region = meta.linear_index(b);
                            let mut placed = Vec::new();
                            for (n, ci) in tiles.set.tiles[tile_id as usize].instances.iter().enumerate() {
                                let jitter =
                                    jitter_rotation(mi, b.as_array(), n as u32, Layer::Core, cfg.time, cfg.jitter_amplitude);
                                let w = instance_transform(&m1, ci, None, jitter);
                                let id = (Layer::Core, mi, region, b.as_array(), n as u32, ci.molecule);
                                if let Some(p) = place(scene, &inst.world, w, ci.molecule, id, &plane) {
                                    placed.push(p);
                                }
                            }
                            boxes.push((b, bb, placed));
                        }
                    }
                }
                core.push(CoreGroup {
                    mesh_instance: mi,
                    boxes,
                });
            }
        }
        Oracle { scene, shell, core }
    }

    pub fn atom_count(&self) -> usize {
        let count = |v: &[Placed]| -> usize {
            v.iter()
                .map(|p| self.scene.molecules[p.id.5 as usize].atoms.len())
                .sum()
        };
        self.shell.iter().map(|g| count(&g.instances)).sum::<usize>()
            + self
                .core
                .iter()
                .flat_map(|g| g.boxes.iter())
                .map(|b| count(&b.2))
                .sum::<usize>()
    }

    /// Hits of every atom of `p` within `[lo, hi]`, appended to `out`.
    fn scan(&self, p: &Placed, ray: &Ray, lo: f64, hi: f64, out: &mut Vec<(f64, Identity, bool)>) {
        match ray_aabb(ray, &p.bounds.expand(1e-6 * (1.0 + p.bounds.diagonal()))) {
            Some(iv) if iv.t_exit >= lo && iv.t_enter <= hi => {}
            _ => return,
        }
        let o = p.from_world.transform_point(ray.origin);
        let d = p.from_world.transform_vector(ray.direction);
        let m = &self.scene.molecules[p.id.5 as usize];
        for (ai, atom) in m.atoms.iter().enumerate() {
            // Plain quadratic |o + t·d − c|² = r².
            let oc = o - atom.center;
            let a = d.dot(d);
            let b = 2.0 * d.dot(oc);
            let c = oc.dot(oc) - atom.radius * atom.radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            let t0 = (-b - sq) / (2.0 * a);
            let t1 = (-b + sq) / (2.0 * a);
            let t = if t0 >= lo { t0 } else { t1 };
            if t < lo || t > hi {
                continue;
            }
            // Distance of the line from the centre, relative to the radius.
            let closest = (oc - d * (oc.dot(d) / a)).length() / atom.radius;
            let id = (p.id.0, p.id.1, p.id.2, p.id.3, p.id.4, p.id.5, ai as u32);
            out.push((t, id, closest > 1.0 - 1e-3));
        }
    }

    /// Interior interval of a mesh-space ray by linear scan over triangles.
    fn interval(&self, mesh_index: u32, local: &Ray) -> Option<(f64, f64)> {
        let mesh = &self.scene.meshes[mesh_index as usize].mesh;
        let unbounded = local.with_t_max(f64::INFINITY);
        let (mut front, mut back) = (f64::INFINITY, f64::INFINITY);
        for tri in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.positions(tri);
            if let Some(h) = ray_triangle(&unbounded, a, b, c) {
                if h.front_facing {
                    front = front.min(h.t);
                } else {
                    back = back.min(h.t);
                }
            }
        }
        if !back.is_finite() {
            return None;
        }
        if front < back {
            Some((front, back))
        } else if front == back {
            None
        } else {
            (self.scene.epsilon < back).then_some((self.scene.epsilon, back))
        }
    }

    pub fn candidates(&self, ray: &Ray) -> Vec<(f64, Identity, bool)> {
        let mut out = Vec::new();
        for g in &self.shell {
            let inst = &self.scene.instances[g.mesh_instance as usize];
            let local = inst.inverse.transform_ray(ray);
            let prism = &self.scene.meshes[inst.mesh as usize].shell.as_ref().unwrap().prisms[g.prism as usize];
            match ray_prism_intersect(prism, &local) {
                Some(iv) if iv.t_exit >= ray.t_min => {}
                _ => continue,
            }
            for p in &g.instances {
                self.scan(p, ray, ray.t_min, ray.t_max, &mut out);
            }
        }
        for g in &self.core {
            let inst = &self.scene.instances[g.mesh_instance as usize];
            let local = inst.inverse.transform_ray(ray);
            let Some((lo, hi)) = self.interval(inst.mesh, &local) else { continue };
            let lo = lo.max(ray.t_min);
            if lo > hi {
                continue;
            }
            for (_, bb, placed) in &g.boxes {
                match ray_aabb(&local, bb) {
                    Some(iv) if iv.t_exit >= lo && iv.t_enter <= hi => {}
                    _ => continue,
                }
                for p in placed {
                    self.scan(p, ray, lo, hi, &mut out);
                }
            }
        }
        out
    }

    pub fn trace(&self, ray: &Ray) -> Option<OracleHit> {
        let mut c = self.candidates(ray);
        // Shell sorts before core, so exact depth ties go to the shell.
        c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (t, id, grazing) = *c.first()?;
        let runner_up = c.iter().find(|x| x.1 != id).map(|x| x.0);
        Some(OracleHit {
            t,
            id,
            runner_up,
            grazing,
        })
    }

    pub fn render(&self, camera: &Camera) -> Vec<Option<OracleHit>> {
        let (w, h) = (camera.width, camera.height);
        (0..w * h)
            .into_par_iter()
            .map(|i| self.trace(&camera.primary_ray(i % w, i / w)))
            .collect()
    }
}

/// Whether the ray passes within a relative 1e-3 of the hit atom's rim.
pub fn renderer_hit_grazes(scene: &Scene, hit: &HitRecord, ray: &Ray) -> bool {
    let Ok(inv) = hit.composed.inverse() else { return true };
    let r = scene.molecules[hit.molecule_type_id as usize].atoms[hit.atom_index as usize].radius;
    let o = inv.transform_point(ray.origin);
    let d = inv.transform_vector(ray.direction);
    let dist = (o - d * (o.dot(d) / d.dot(d))).length();
    dist / r > 1.0 - 1e-3
}

#[derive(Debug, Default)]
pub struct Comparison {
    pub pixels: usize,
    pub matched: usize,
    pub mismatched: usize,
    pub silhouette_mismatches: usize,
    pub worst_rel_dt: f64,
    pub hits: usize,
}

impl Comparison {
    pub fn identical_fraction(&self) -> f64 {
        self.matched as f64 / self.pixels as f64
    }

    pub fn mismatches_on_silhouettes(&self) -> bool {
        self.silhouette_mismatches == self.mismatched
    }
}

pub fn compare(scene: &Scene, camera: &Camera, hits: &[Option<HitRecord>], oracle: &[Option<OracleHit>]) -> Comparison {
    let mut c = Comparison {
        pixels: hits.len(),
        ..Default::default()
    };
    for (i, (h, o)) in hits.iter().zip(oracle).enumerate() {
        let ray = camera.primary_ray(i as u32 % camera.width, i as u32 / camera.width);
        if h.is_some() {
            c.hits += 1;
        }
        match (h, o) {
            (None, None) => c.matched += 1,
            (Some(h), Some(o)) if h.identity() == o.id => {
                c.matched += 1;
                c.worst_rel_dt = c.worst_rel_dt.max((h.t - o.t).abs() / o.t);
            }
            _ => {
                c.mismatched += 1;
                let near_tie = o.is_some_and(|o| {
                    o.grazing
                        || o.runner_up.is_some_and(|r| (r - o.t).abs() <= 1e-3 * o.t)
                        || h.is_some_and(|h| (h.t - o.t).abs() <= 1e-3 * o.t)
                });
                let graze = h.is_some_and(|h| renderer_hit_grazes(scene, &h, &ray));
                if near_tie || graze {
                    c.silhouette_mismatches += 1;
                }
            }
        }
    }
    c
}
