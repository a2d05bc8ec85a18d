//! Shell and core traversal, the tile and instance transform chain,
//! clipping, jitter, compositing and shading.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    barycentric_2d, barycentric_interp, ray_aabb, ray_sphere, vec2, Affine, Mat3, Plane, Quat, Ray,
    Vec2, Vec3,
};
use crate::grid::{grid_traverse, ray_interval};
use crate::scene::{MeshData, Scene, ShellSpace, TileAccel};
use crate::shell::{point_in_prism, ray_prism_intersect};
use crate::wang::MoleculeInstance;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("triangle has zero uv area")]
pub struct DegenerateUv;

/// Tile-to-mesh frame of one proxy triangle. All tiles of the triangle share
/// the linear part and differ only in where their centre lands.
#[derive(Debug, Clone, PartialEq)]
pub struct TileFrame {
    pub positions: [Vec3; 3],
    pub normals: [Vec3; 3],
    pub uvs: [Vec2; 3],
    pub linear: Mat3,
    pub inv_linear: Mat3,
}

impl TileFrame {
    /// Columns `J_u·t/s`, unit face normal, `J_v·t/s`, where `J_u`, `J_v`
    /// are the derivatives of position with respect to uv.
    pub fn new(
        positions: [Vec3; 3],
        normals: [Vec3; 3],
        uvs: [Vec2; 3],
        tile_size: f64,
        tile_uv_size: f64,
    ) -> Result<TileFrame, DegenerateUv> {
        let e1 = positions[1] - positions[0];
        let e2 = positions[2] - positions[0];
        let d1 = uvs[1] - uvs[0];
        let d2 = uvs[2] - uvs[0];
        let det = d1.perp_dot(d2);
        if det.abs() <= 1e-300 || !det.is_finite() {
            return Err(DegenerateUv);
        }
        let ju = (e1 * d2.y - e2 * d1.y) / det;
        let jv = (e2 * d1.x - e1 * d2.x) / det;
        let k = tile_uv_size / tile_size;
        let n = e1.cross(e2).normalize();
        let linear = Mat3::from_cols(ju * k, n, jv * k);
        let inv_linear = linear.inverse().map_err(|_| DegenerateUv)?;
        Ok(TileFrame {
            positions,
            normals,
            uvs,
            linear,
            inv_linear,
        })
    }

    pub fn weights(&self, uv: Vec2) -> (f64, f64, f64) {
        barycentric_2d(uv, self.uvs[0], self.uvs[1], self.uvs[2]).unwrap_or((1.0, 0.0, 0.0))
    }

    /// Position at `uv`, extrapolating outside the triangle.
    pub fn point_at(&self, uv: Vec2) -> Vec3 {
        barycentric_interp(self.weights(uv), self.positions[0], self.positions[1], self.positions[2])
    }

    pub fn m1(&self, g_uv: Vec2) -> Affine {
        Affine::new(self.linear, self.point_at(g_uv))
    }

    pub fn m1_inverse(&self, g_uv: Vec2) -> Affine {
        let t = self.point_at(g_uv);
        Affine::new(self.inv_linear, -self.inv_linear.mul_vec(t))
    }

    /// Interpolated vertex normal at `uv`.
    pub fn smooth_normal(&self, uv: Vec2) -> Vec3 {
        barycentric_interp(self.weights(uv), self.normals[0], self.normals[1], self.normals[2]).normalize()
    }
}

/// Tile frame of a proxy triangle placed in the world by `mesh_world`.
pub fn tile_frame_transform_shell(
    positions: [Vec3; 3],
    uvs: [Vec2; 3],
    mesh_world: &Affine,
    g_uv: Vec2,
    tile_size: f64,
    tile_uv_size: f64,
) -> Result<Affine, DegenerateUv> {
    let frame = TileFrame::new(positions, [Vec3::Y; 3], uvs, tile_size, tile_uv_size)?;
    Ok(mesh_world.compose(&frame.m1(g_uv)))
}

/// Molecule orientation in smooth-normal mode: `normal` is the interpolated
/// surface normal in the frame's target space, `up` the molecule's up axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothNormal {
    pub normal: Vec3,
    pub up: Vec3,
}

/// Rotation part of the instance transform, applied inside the tile.
fn instance_rotation(m1_linear: &Mat3, inst: &MoleculeInstance, smooth: Option<SmoothNormal>, jitter: Option<Quat>) -> Quat {
    let mut q = inst.rotation;
    if let Some(j) = jitter {
        q = j * q;
    }
    if let Some(s) = smooth {
        let d = m1_linear
            .inverse()
            .map(|inv| inv.mul_vec(s.normal).normalize())
            .unwrap_or(Vec3::Y);
        q = Quat::from_arc(Vec3::Y, d) * q * Quat::from_arc(s.up, Vec3::Y);
    }
    q
}

/// `W = M1 ∘ T(position) ∘ R`, with `R` the jittered instance rotation,
/// optionally re-aligned to a smooth surface normal.
pub fn instance_transform(m1: &Affine, inst: &MoleculeInstance, smooth: Option<SmoothNormal>, jitter: Option<Quat>) -> Affine {
    let q = instance_rotation(&m1.linear, inst, smooth, jitter);
    m1.compose(&Affine::new(q.to_mat3(), inst.position))
}

/// Both `W` and its inverse, the inverse built from `m1_inv` without a
/// general matrix inversion.
fn instance_pair(
    m1: &Affine,
    m1_inv: &Affine,
    inst: &MoleculeInstance,
    smooth: Option<SmoothNormal>,
    jitter: Option<Quat>,
) -> (Affine, Affine) {
    let q = instance_rotation(&m1.linear, inst, smooth, jitter);
    let r = q.to_mat3();
    let local = Affine::new(r, inst.position);
    let rt = r.transpose();
    let local_inv = Affine::new(rt, -rt.mul_vec(inst.position));
    (m1.compose(&local), local_inv.compose(m1_inv))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Shell,
    Core,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Small periodic wobble of one virtual instance: a hashed axis and phase,
/// angle `amplitude · sin(2π·time + phase)` at 1 Hz. `None` at zero
/// amplitude, so static frames skip the multiplication entirely.
pub fn jitter_rotation(
    mesh_instance: u32,
    cell: [u32; 3],
    instance_index: u32,
    layer: Layer,
    time: f64,
    amplitude: f64,
) -> Option<Quat> {
    if amplitude == 0.0 {
        return None;
    }
    let mut h = splitmix(mesh_instance as u64 ^ ((layer as u64) << 40));
    for c in cell {
        h = splitmix(h ^ c as u64);
    }
    h = splitmix(h ^ instance_index as u64);
    let z = 2.0 * unit(h) - 1.0;
    let h2 = splitmix(h);
    let phi = std::f64::consts::TAU * unit(h2);
    let rho = (1.0 - z * z).max(0.0).sqrt();
    let axis = Vec3 {
        x: rho * phi.cos(),
        y: rho * phi.sin(),
        z,
    };
    let phase = std::f64::consts::TAU * unit(splitmix(h2));
    let cycle = time.rem_euclid(1.0);
    let angle = amplitude * (std::f64::consts::TAU * cycle + phase).sin();
    Some(Quat::from_axis_angle(axis, angle))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipPlane {
    pub normal: Vec3,
    pub offset: f64,
    pub enabled: bool,
}

impl Default for ClipPlane {
    fn default() -> Self {
        ClipPlane {
            normal: Vec3::Z,
            offset: 0.0,
            enabled: false,
        }
    }
}

impl ClipPlane {
    pub fn new(normal: Vec3, offset: f64) -> ClipPlane {
        ClipPlane {
            normal: normal.normalize(),
            offset,
            enabled: true,
        }
    }

    pub fn plane(&self) -> Plane {
        Plane {
            normal: self.normal,
            offset: self.offset,
        }
    }

    pub fn is_visible(&self, p: Vec3) -> bool {
        !self.enabled || self.plane().signed_distance(p) >= 0.0
    }
}

/// True iff the plane is enabled and every point lies in the invisible
/// half-space.
pub fn clip_reject(points: &[Vec3], plane: &ClipPlane) -> bool {
    plane.enabled && all_invisible(points, &plane.plane())
}

fn all_invisible(points: &[Vec3], plane: &Plane) -> bool {
    points.iter().all(|&p| plane.signed_distance(p) < 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    Shell,
    Core,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub clip: ClipPlane,
    pub time: f64,
    pub jitter_amplitude: f64,
    pub use_rep_las: bool,
    pub smooth_normals: bool,
    pub background: [f64; 3],
    pub mode: RenderMode,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            clip: ClipPlane::default(),
            time: 0.0,
            jitter_amplitude: 0.0,
            use_rep_las: true,
            smooth_normals: false,
            background: [0.06, 0.07, 0.1],
            mode: RenderMode::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn look_at(position: Vec3, target: Vec3, up: Vec3, fov_y: f64, width: u32, height: u32) -> Camera {
        Camera::new(position, target - position, up, fov_y, width, height)
    }

    /// Orthonormalizes `forward` and `up`.
    pub fn new(position: Vec3, forward: Vec3, up: Vec3, fov_y: f64, width: u32, height: u32) -> Camera {
        let f = forward.normalize();
        let mut u = (up - f * up.dot(f)).normalize();
        if u.length_squared() == 0.0 {
            u = f.any_orthogonal();
        }
        Camera {
            position,
            forward: f,
            up: u,
            fov_y,
            width,
            height,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0
            && self.height > 0
            && self.fov_y > 0.0
            && self.fov_y < std::f64::consts::PI
            && self.position.is_finite()
            && (self.forward.length() - 1.0).abs() < 1e-9
            && (self.up.length() - 1.0).abs() < 1e-9
    }

    /// Unit-direction ray through the centre of pixel `(x, y)`, rows top-down.
    pub fn primary_ray(&self, x: u32, y: u32) -> Ray {
        let right = self.forward.cross(self.up).normalize();
        let h = (self.fov_y * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let px = (2.0 * (x as f64 + 0.5) / self.width as f64 - 1.0) * h * aspect;
        let py = (1.0 - 2.0 * (y as f64 + 0.5) / self.height as f64) * h;
        Ray::new(self.position, (self.forward + right * px + self.up * py).normalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitRecord {
    pub t: f64,
    pub world_point: Vec3,
    pub world_normal: Vec3,
    pub layer: Layer,
    pub mesh_instance_id: u32,
    /// Proxy triangle (shell) or linear box index (core).
    pub region: u32,
    /// Recipe cell: `(i, j, 0)` for squares, the box coordinate for cubes.
    pub cell: [u32; 3],
    pub tile_id: u32,
    pub instance_index: u32,
    pub molecule_type_id: u32,
    pub atom_index: u32,
    /// Atom frame to world.
    pub composed: Affine,
}

impl HitRecord {
    /// Everything that names the virtual atom, without geometry.
    pub fn identity(&self) -> (Layer, u32, u32, [u32; 3], u32, u32, u32) {
        (
            self.layer,
            self.mesh_instance_id,
            self.region,
            self.cell,
            self.instance_index,
            self.molecule_type_id,
            self.atom_index,
        )
    }
}

/// Hit inside one mesh, before the mesh's world transform is applied.
#[derive(Debug, Clone, Copy)]
struct LocalHit {
    region: u32,
    cell: [u32; 3],
    tile: u32,
    instance: u32,
    molecule: u32,
    atom: u32,
    /// Instance to mesh space.
    w: Affine,
    /// Molecule-space normal direction at the hit.
    normal: Vec3,
}

struct Ctx<'a> {
    scene: &'a Scene,
    cfg: &'a RenderConfig,
    mesh_instance: u32,
    /// Clip plane pulled back into mesh space.
    plane: Option<Plane>,
}

fn trace_atoms(ctx: &Ctx, w_inv: &Affine, molecule: u32, mesh_ray: &Ray) -> Option<(f64, u32, Vec3)> {
    let m = &ctx.scene.molecules[molecule as usize];
    let ar = w_inv.transform_ray(mesh_ray);
    m.bvh
        .traverse(&ar, |a, r| {
            let atom = &m.atoms[a as usize];
            ray_sphere(r, atom.center, atom.radius).map(|t| (t, r.at(t) - atom.center))
        })
}

/// Shared by the shell and core paths: walks one tile's instances in the
/// frame `m1`, applying the per-instance clip and `accept` filters.
#[allow(clippy::too_many_arguments)]
fn trace_tile(
    ctx: &Ctx,
    tile: &TileAccel,
    instances: &[MoleculeInstance],
    m1: &Affine,
    m1_inv: &Affine,
    mesh_ray: &Ray,
    layer: Layer,
    cell: [u32; 3],
    smooth: Option<&TileFrame>,
    smooth_uv: Option<(Vec2, f64, f64)>,
    accept: impl Fn(Vec3) -> bool,
) -> Option<(f64, u32, LocalHit)> {
    let tile_ray = m1_inv.transform_ray(mesh_ray);
    let scene = ctx.scene;
    tile.bvh.traverse(&tile_ray, |k, tr| {
        let inst = &instances[k as usize];
        if !accept(m1.transform_point(inst.position)) {
            return None;
        }
        let mol = &scene.molecules[inst.molecule as usize];
        let jitter = jitter_rotation(ctx.mesh_instance, cell, k, layer, ctx.cfg.time, ctx.cfg.jitter_amplitude);
        let sn = match (smooth, smooth_uv) {
            (Some(frame), Some((g_uv, s, t))) => Some(SmoothNormal {
                normal: frame.smooth_normal(g_uv + vec2(inst.position.x, inst.position.z) * (t / s)),
                up: mol.up_vector,
            }),
            _ => None,
        };
        let (w, w_inv) = instance_pair(m1, m1_inv, inst, sn, jitter);
        if let Some(pl) = &ctx.plane {
            let corners = mol.aabb.corners().map(|c| w.transform_point(c));
            if all_invisible(&corners, pl) {
                return None;
            }
        }
        let mut r = *mesh_ray;
        r.t_min = tr.t_min;
        r.t_max = tr.t_max;
        let (t, atom, normal) = trace_atoms(ctx, &w_inv, inst.molecule, &r)?;
        Some((
            t,
            LocalHit {
                region: 0,
                cell,
                tile: 0,
                instance: k,
                molecule: inst.molecule,
                atom,
                w,
                normal,
            },
        ))
    })
    .map(|(t, _, h)| (t, h.instance, h))
}

/// Closest hit of one replication-area entry in one prism.
fn shell_entry(ctx: &Ctx, shell: &ShellSpace, prism: u32, entry: u32, mesh_ray: &Ray) -> Option<(f64, LocalHit)> {
    let scene = ctx.scene;
    let tiles = scene.shell_tiles.as_ref()?;
    let frame = &shell.frames[prism as usize];
    let origin = shell.origins[prism as usize];
    let (nu, _) = shell.window;
    let cell = (origin.0 + entry % nu, origin.1 + entry / nu);
    let t_uv = tiles.recipe.tile_uv_size;
    let s = tiles.set.world_size;
    let g_uv = vec2((cell.0 as f64 + 0.5) * t_uv, (cell.1 as f64 + 0.5) * t_uv);
    let m1 = frame.m1(g_uv);
    let m1_inv = frame.m1_inverse(g_uv);
    let er = m1_inv.transform_ray(mesh_ray);
    match ray_aabb(&er, &tiles.tile_box) {
        Some(iv) if iv.overlaps(mesh_ray.t_min, mesh_ray.t_max) => {}
        _ => return None,
    }
    let tile_id = tiles.recipe.lookup(cell.0, cell.1).ok()?;
    let prism_ref = &shell.prisms[prism as usize];
    let smooth = ctx.cfg.smooth_normals;
    let (t, _, mut hit) = trace_tile(
        ctx,
        &tiles.accel[tile_id as usize],
        &tiles.set.tiles[tile_id as usize].instances,
        &m1,
        &m1_inv,
        mesh_ray,
        Layer::Shell,
        [cell.0, cell.1, 0],
        smooth.then_some(frame),
        smooth.then_some((g_uv, s, t_uv)),
        |p| point_in_prism(prism_ref, p),
    )?;
    hit.region = prism;
    hit.tile = tile_id;
    Some((t, hit))
}

fn shell_prism(ctx: &Ctx, shell: &ShellSpace, prism: u32, mesh_ray: &Ray) -> Option<(f64, LocalHit)> {
    let p = &shell.prisms[prism as usize];
    let iv = ray_prism_intersect(p, mesh_ray)?;
    if iv.t_exit < mesh_ray.t_min {
        return None;
    }
    if let Some(pl) = &ctx.plane {
        if all_invisible(&p.vertices(), pl) {
            return None;
        }
    }
    let n = shell.window.0 * shell.window.1;
    if ctx.cfg.use_rep_las {
        let tiles = ctx.scene.shell_tiles.as_ref()?;
        let frame = &shell.frames[p.triangle as usize];
        let origin = shell.origins[prism as usize];
        let t_uv = tiles.recipe.tile_uv_size;
        let center = vec2(
            (origin.0 as f64 + shell.window.0 as f64 * 0.5) * t_uv,
            (origin.1 as f64 + shell.window.1 as f64 * 0.5) * t_uv,
        );
        let rep_ray = frame.m1_inverse(center).transform_ray(mesh_ray);
        shell
            .rep_grid
            .bvh
            .traverse(&rep_ray, |e, rr| {
                let mut r = *mesh_ray;
                r.t_max = rr.t_max;
                shell_entry(ctx, shell, prism, e, &r)
            })
            .map(|(t, _, h)| (t, h))
    } else {
        let mut best: Option<(f64, LocalHit)> = None;
        let mut r = *mesh_ray;
        for e in 0..n {
            if let Some((t, h)) = shell_entry(ctx, shell, prism, e, &r) {
                if best.as_ref().is_none_or(|b| t < b.0) {
                    r.t_max = t;
                    best = Some((t, h));
                }
            }
        }
        best
    }
}

fn finish(scene: &Scene, mesh_instance: u32, layer: Layer, t: f64, h: LocalHit, ray: &Ray) -> HitRecord {
    let world = &scene.instances[mesh_instance as usize].world;
    let atom = scene.molecules[h.molecule as usize].atoms[h.atom as usize];
    let to_world = world.compose(&h.w);
    let composed = to_world.compose(&Affine::from_translation(atom.center));
    let world_normal = to_world.transform_normal(h.normal).unwrap_or(h.normal.normalize());
    HitRecord {
        t,
        world_point: ray.at(t),
        world_normal,
        layer,
        mesh_instance_id: mesh_instance,
        region: h.region,
        cell: h.cell,
        tile_id: h.tile,
        instance_index: h.instance,
        molecule_type_id: h.molecule,
        atom_index: h.atom,
        composed,
    }
}

fn mesh_ctx<'a>(scene: &'a Scene, cfg: &'a RenderConfig, mesh_instance: u32) -> Ctx<'a> {
    let inst = &scene.instances[mesh_instance as usize];
    Ctx {
        scene,
        cfg,
        mesh_instance,
        plane: cfg.clip.enabled.then(|| cfg.clip.plane().pull_back(&inst.world)),
    }
}

/// Closest shell hit: mesh instances, then prisms, then the replication
/// area, tile instances and atoms.
pub fn trace_shell(scene: &Scene, ray: &Ray, cfg: &RenderConfig) -> Option<HitRecord> {
    let mu = &scene.mu_las;
    mu.shell
        .traverse(ray, |slot, r| {
            let mi = mu.shell_ids[slot as usize];
            let inst = &scene.instances[mi as usize];
            let MeshData { shell, .. } = &scene.meshes[inst.mesh as usize];
            let shell = shell.as_ref()?;
            let ctx = mesh_ctx(scene, cfg, mi);
            let local = inst.inverse.transform_ray(r);
            shell
                .bvh
                .traverse(&local, |p, lr| shell_prism(&ctx, shell, p, lr))
                .map(|(t, _, h)| (t, h))
        })
        .map(|(t, slot, h)| finish(scene, mu.shell_ids[slot as usize], Layer::Shell, t, h, ray))
}

/// Closest core hit within one mesh instance, or `None`.
fn core_instance(scene: &Scene, cfg: &RenderConfig, mi: u32, ray: &Ray) -> Option<(f64, LocalHit)> {
    let inst = &scene.instances[mi as usize];
    let mesh = &scene.meshes[inst.mesh as usize];
    let core = mesh.core.as_ref()?;
    let tiles = scene.core_tiles.as_ref()?;
    let ctx = mesh_ctx(scene, cfg, mi);
    let local = inst.inverse.transform_ray(ray);
    let (lo, hi) = ray_interval(&mesh.mesh, &local.with_t_max(f64::INFINITY), scene.epsilon)?;
    let margin = core.margin / local.direction.length();
    let mut best: Option<(f64, LocalHit)> = None;
    let mut t_max = ray.t_max;
    for visit in grid_traverse(&core.meta, &local, (lo.max(ray.t_min), hi)) {
        if t_max < visit.t_enter - margin {
            break;
        }
        let coord = visit.coord;
        if let Some(pl) = &ctx.plane {
            if all_invisible(&core.meta.box_aabb(coord).corners(), pl) {
                continue;
            }
        }
        let Ok(tile_id) = tiles.recipe.lookup(coord.i, coord.j, coord.k) else {
            continue;
        };
        let center = core.meta.box_center(coord);
        let m1 = Affine::from_translation(center);
        let m1_inv = Affine::from_translation(-center);
        let mut r = local;
        r.t_min = ray.t_min.max(lo);
        r.t_max = t_max.min(hi);
        if r.t_min > r.t_max {
            continue;
        }
        let region = core.meta.linear_index(coord);
        if let Some((t, _, mut h)) = trace_tile(
            &ctx,
            &tiles.accel[tile_id as usize],
            &tiles.set.tiles[tile_id as usize].instances,
            &m1,
            &m1_inv,
            &r,
            Layer::Core,
            coord.as_array(),
            None,
            None,
            |_| true,
        ) {
            h.region = region;
            h.tile = tile_id;
            let better = match &best {
                None => true,
                Some((bt, bh)) => t < *bt || (t == *bt && region < bh.region),
            };
            if better {
                t_max = t;
                best = Some((t, h));
            }
        }
    }
    best
}

/// Closest core hit: mesh instances closest-first by bounds entry, each
/// walking its grid boxes in ray order.
pub fn trace_core(scene: &Scene, ray: &Ray, cfg: &RenderConfig) -> Option<HitRecord> {
    let mu = &scene.mu_las;
    let mut order: Vec<(f64, u32)> = Vec::new();
    mu.core.traverse(ray, |slot, _| {
        let b = &mu.core.primitive_bounds()[slot as usize];
        if let Some(iv) = ray_aabb(ray, b) {
            order.push((iv.t_enter.max(ray.t_min), mu.core_ids[slot as usize]));
        }
        None::<(f64, ())>
    });
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best: Option<(f64, u32, LocalHit)> = None;
    let mut r = *ray;
    for (enter, mi) in order {
        if best.as_ref().is_some_and(|b| b.0 < enter) {
            break;
        }
        if let Some((t, h)) = core_instance(scene, cfg, mi, &r) {
            let better = match &best {
                None => true,
                Some((bt, bm, _)) => t < *bt || (t == *bt && mi < *bm),
            };
            if better {
                r.t_max = t;
                best = Some((t, mi, h));
            }
        }
    }
    best.map(|(t, mi, h)| finish(scene, mi, Layer::Core, t, h, ray))
}

/// Depth-composited hit of both renderers; shell wins exact ties.
pub fn trace(scene: &Scene, ray: &Ray, cfg: &RenderConfig) -> Option<HitRecord> {
    let shell = matches!(cfg.mode, RenderMode::Shell | RenderMode::Both)
        .then(|| trace_shell(scene, ray, cfg))
        .flatten();
    let core = matches!(cfg.mode, RenderMode::Core | RenderMode::Both)
        .then(|| trace_core(scene, ray, cfg))
        .flatten();
    composite(shell, core)
}

pub fn composite(shell: Option<HitRecord>, core: Option<HitRecord>) -> Option<HitRecord> {
    match (shell, core) {
        (Some(s), Some(c)) => Some(if c.t < s.t { c } else { s }),
        (s, c) => s.or(c),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Framebuffer {
    pub width: u32,
    pub height: u32,
    pub color: Vec<[u8; 3]>,
    /// Hit distance per pixel, `+∞` on a miss.
    pub depth: Vec<f64>,
}

impl Framebuffer {
    pub fn rgb_bytes(&self) -> Vec<u8> {
        self.color.iter().flatten().copied().collect()
    }
}

fn quantize(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Headlight Lambert term over a 15% ambient floor.
pub fn shade(base: [f64; 3], normal: Vec3, direction: Vec3) -> [u8; 3] {
    let k = 0.15 + 0.85 * normal.dot(-direction.normalize()).max(0.0);
    base.map(|c| quantize(c * k))
}

/// Closest hit per pixel, rows top-down.
pub fn render_hits(scene: &Scene, camera: &Camera, cfg: &RenderConfig) -> Vec<Option<HitRecord>> {
    let (w, h) = (camera.width, camera.height);
    (0..h)
        .into_par_iter()
        .flat_map_iter(|y| (0..w).map(move |x| trace(scene, &camera.primary_ray(x, y), cfg)))
        .collect()
}

pub fn render_frame(scene: &Scene, camera: &Camera, cfg: &RenderConfig) -> Framebuffer {
    let hits = render_hits(scene, camera, cfg);
    let bg = cfg.background.map(quantize);
    let mut color = Vec::with_capacity(hits.len());
    let mut depth = Vec::with_capacity(hits.len());
    for (i, hit) in hits.iter().enumerate() {
        match hit {
            Some(h) => {
                let (x, y) = (i as u32 % camera.width, i as u32 / camera.width);
                let dir = camera.primary_ray(x, y).direction;
                color.push(shade(scene.molecules[h.molecule_type_id as usize].color, h.world_normal, dir));
                depth.push(h.t);
            }
            None => {
                color.push(bg);
                depth.push(f64::INFINITY);
            }
        }
    }
    Framebuffer {
        width: camera.width,
        height: camera.height,
        color,
        depth,
    }
}
