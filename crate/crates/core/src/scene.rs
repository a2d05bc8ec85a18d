//! Scene description files, the built immutable scene, build statistics and
//! structural validation.

use std::fmt;
use std::mem::size_of;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvh::{Bvh, RepGrid};
use crate::geom::{vec3, Aabb, Affine, Mat3, Quat, Vec3};
use crate::grid::CoreGridMeta;
use crate::mesh::{parse_obj, ObjError, ProxyMesh};
use crate::molecule::{parse_pdb, MoleculeType, PdbError};
use crate::render::{Camera, ClipPlane, RenderConfig, RenderMode, TileFrame};
use crate::shell::{build_adaptive_prisms, point_in_prism, Prism};
use crate::wang::{
    generate_recipe_2d, generate_recipe_3d, map_triangle, replication_area_dims, CubeTileSet, MoleculeInstance,
    SquareTileSet, TilingRecipe2D, TilingRecipe3D, WangCubeTile, WangError, WangSquareTile,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{}: {field}: {message}", file.display())]
    Schema {
        file: PathBuf,
        field: String,
        message: String,
    },
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Pdb { path: PathBuf, source: PdbError },
    #[error("{}: {source}", path.display())]
    Obj { path: PathBuf, source: ObjError },
    #[error(transparent)]
    Wang(#[from] WangError),
    #[error("mesh instance {0}: transform is singular")]
    Singular(u32),
    #[error("mesh {mesh} triangle {triangle}: uv triangle has zero area")]
    DegenerateUv { mesh: u32, triangle: u32 },
    #[error("no mesh instance {0}")]
    NoSuchInstance(u32),
    #[error("{0}")]
    Invalid(String),
}

fn schema(file: &Path, field: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::Schema {
        file: file.to_path_buf(),
        field: field.into(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    pub version: u32,
    pub molecules: Vec<MoleculeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub square_tiles: Option<SquareTilesEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cube_tiles: Option<CubeTilesEntry>,
    pub meshes: Vec<MeshEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraEntry>,
    #[serde(default)]
    pub render: RenderEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeEntry {
    pub file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_color")]
    pub color: [f64; 3],
    /// Molecule-space axis that smooth-normal mode aligns with the surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<[f64; 3]>,
}

fn default_color() -> [f64; 3] {
    [0.8, 0.8, 0.8]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareTilesEntry {
    pub file: PathBuf,
    /// Uv extent of one tile.
    pub tile_uv_size: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeTilesEntry {
    pub file: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[u32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshEntry {
    pub file: PathBuf,
    #[serde(default = "yes")]
    pub shell: bool,
    #[serde(default)]
    pub core: bool,
    /// One identity instance when empty.
    #[serde(default)]
    pub instances: Vec<InstanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceEntry {
    #[serde(default)]
    pub translation: [f64; 3],
    /// `[w, x, y, z]`.
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
    #[serde(default = "one")]
    pub scale: f64,
    /// Full affine map as three rows `[a, b, c, tx]`; overrides the other
    /// fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[f64; 4]; 3]>,
}

impl Default for InstanceEntry {
    fn default() -> Self {
        InstanceEntry {
            translation: [0.0; 3],
            rotation: identity_rotation(),
            scale: 1.0,
            matrix: None,
        }
    }
}

fn identity_rotation() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub position: [f64; 3],
    #[serde(default)]
    pub target: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    #[serde(default = "default_fov")]
    pub fov: f64,
    #[serde(default = "default_size")]
    pub width: u32,
    #[serde(default = "default_size")]
    pub height: u32,
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn default_fov() -> f64 {
    40.0
}

fn default_size() -> u32 {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderEntry {
    #[serde(default = "default_background")]
    pub background: [f64; 3],
    #[serde(default)]
    pub jitter_amplitude: f64,
    #[serde(default)]
    pub time: f64,
    #[serde(default = "yes")]
    pub use_rep_las: bool,
    #[serde(default)]
    pub smooth_normals: bool,
    #[serde(default)]
    pub mode: RenderMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<ClipEntry>,
}

fn default_background() -> [f64; 3] {
    RenderConfig::default().background
}

impl Default for RenderEntry {
    fn default() -> Self {
        RenderEntry {
            background: default_background(),
            jitter_amplitude: 0.0,
            time: 0.0,
            use_rep_las: true,
            smooth_normals: false,
            mode: RenderMode::Both,
            clip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub normal: [f64; 3],
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "yes")]
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileKind {
    Square,
    Cube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileSetFile {
    pub version: u32,
    pub kind: TileKind,
    pub world_size: f64,
    pub tiles: Vec<TileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileEntry {
    /// N, E, S, W for squares; +x, −x, +y, −y, +z, −z for cubes.
    pub colors: Vec<u32>,
    #[serde(default)]
    pub instances: Vec<InstanceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub molecule: u32,
    pub position: [f64; 3],
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeFile {
    pub version: u32,
    /// Two entries for square recipes, three for cube recipes.
    pub dims: Vec<u32>,
    pub cells: Vec<u32>,
}

impl RecipeFile {
    pub fn from_2d(r: &TilingRecipe2D) -> RecipeFile {
        RecipeFile {
            version: SCHEMA_VERSION,
            dims: vec![r.dims.0, r.dims.1],
            cells: r.cells.clone(),
        }
    }

    pub fn from_3d(r: &TilingRecipe3D) -> RecipeFile {
        RecipeFile {
            version: SCHEMA_VERSION,
            dims: vec![r.dims.0, r.dims.1, r.dims.2],
            cells: r.cells.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("recipe serializes")
    }
}

fn read_text(path: &Path) -> Result<String, SceneError> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            SceneError::MissingFile(path.to_path_buf())
        } else {
            SceneError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

/// Parses a TOML document, reporting the dotted path of the offending field.
pub fn parse_document<T: DeserializeOwned>(text: &str, file: &Path) -> Result<T, SceneError> {
    let de = toml::Deserializer::parse(text).map_err(|e| schema(file, "", e.message()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        schema(file, if field == "." { String::new() } else { field }, e.inner().message())
    })
}

fn check_version(v: u32, file: &Path) -> Result<(), SceneError> {
    if v != SCHEMA_VERSION {
        return Err(schema(file, "version", format!("unsupported version {v}, expected {SCHEMA_VERSION}")));
    }
    Ok(())
}

fn quat(q: [f64; 4], file: &Path, field: &str) -> Result<Quat, SceneError> {
    Quat::from_wxyz(q).ok_or_else(|| schema(file, field, "rotation must be a non-zero quaternion"))
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Edge or face colours of one tile with its placed molecules.
pub type RawTile = (Vec<u32>, Vec<MoleculeInstance>);

pub fn load_tile_set(path: &Path, molecule_count: usize) -> Result<(TileKind, f64, Vec<RawTile>), SceneError> {
    let text = read_text(path)?;
    let f: TileSetFile = parse_document(&text, path)?;
    check_version(f.version, path)?;
    if !(f.world_size.is_finite() && f.world_size > 0.0) {
        return Err(schema(path, "world_size", "must be positive"));
    }
    if f.tiles.is_empty() {
        return Err(schema(path, "tiles", "at least one tile is required"));
    }
    let sides = match f.kind {
        TileKind::Square => 4,
        TileKind::Cube => 6,
    };
    let mut tiles = Vec::with_capacity(f.tiles.len());
    for (ti, t) in f.tiles.iter().enumerate() {
        if t.colors.len() != sides {
            return Err(schema(path, format!("tiles[{ti}].colors"), format!("expected {sides} colors")));
        }
        let mut inst = Vec::with_capacity(t.instances.len());
        for (k, s) in t.instances.iter().enumerate() {
            let field = format!("tiles[{ti}].instances[{k}]");
            if s.molecule as usize >= molecule_count {
                return Err(schema(path, format!("{field}.molecule"), format!("no molecule {}", s.molecule)));
            }
            if !finite(&s.position) {
                return Err(schema(path, format!("{field}.position"), "must be finite"));
            }
            inst.push(MoleculeInstance {
                molecule: s.molecule,
                position: Vec3::from_array(s.position),
                rotation: quat(s.rotation, path, &format!("{field}.rotation"))?,
            });
        }
        tiles.push((t.colors.clone(), inst));
    }
    Ok((f.kind, f.world_size, tiles))
}

pub fn load_square_tiles(path: &Path, molecule_count: usize) -> Result<SquareTileSet, SceneError> {
    let (kind, world_size, tiles) = load_tile_set(path, molecule_count)?;
    if kind != TileKind::Square {
        return Err(schema(path, "kind", "expected a square tile set"));
    }
    Ok(SquareTileSet {
        world_size,
        tiles: tiles
            .into_iter()
            .enumerate()
            .map(|(i, (c, instances))| WangSquareTile {
                id: i as u32,
                edges: [c[0], c[1], c[2], c[3]],
                instances,
            })
            .collect(),
    })
}

pub fn load_cube_tiles(path: &Path, molecule_count: usize) -> Result<CubeTileSet, SceneError> {
    let (kind, world_size, tiles) = load_tile_set(path, molecule_count)?;
    if kind != TileKind::Cube {
        return Err(schema(path, "kind", "expected a cube tile set"));
    }
    Ok(CubeTileSet {
        world_size,
        tiles: tiles
            .into_iter()
            .enumerate()
            .map(|(i, (c, instances))| WangCubeTile {
                id: i as u32,
                faces: [c[0], c[1], c[2], c[3], c[4], c[5]],
                instances,
            })
            .collect(),
    })
}

fn load_recipe(path: &Path, axes: usize, tile_count: usize) -> Result<(Vec<u32>, Vec<u32>), SceneError> {
    let text = read_text(path)?;
    let f: RecipeFile = parse_document(&text, path)?;
    check_version(f.version, path)?;
    if f.dims.len() != axes || f.dims.contains(&0) {
        return Err(schema(path, "dims", format!("expected {axes} positive dimensions")));
    }
    let n: u64 = f.dims.iter().map(|&d| d as u64).product();
    if f.cells.len() as u64 != n {
        return Err(schema(path, "cells", format!("expected {n} cells, found {}", f.cells.len())));
    }
    if let Some(i) = f.cells.iter().position(|&c| c as usize >= tile_count) {
        return Err(schema(path, format!("cells[{i}]"), format!("no tile {}", f.cells[i])));
    }
    Ok((f.dims, f.cells))
}

pub fn load_recipe_2d(path: &Path, tile_count: usize, tile_uv_size: f64) -> Result<TilingRecipe2D, SceneError> {
    let (dims, cells) = load_recipe(path, 2, tile_count)?;
    Ok(TilingRecipe2D {
        dims: (dims[0], dims[1]),
        cells,
        tile_uv_size,
    })
}

pub fn load_recipe_3d(path: &Path, tile_count: usize) -> Result<TilingRecipe3D, SceneError> {
    let (dims, cells) = load_recipe(path, 3, tile_count)?;
    Ok(TilingRecipe3D {
        dims: (dims[0], dims[1], dims[2]),
        cells,
    })
}

pub fn load_obj(path: &Path) -> Result<ProxyMesh, SceneError> {
    let text = read_text(path)?;
    parse_obj(&text).map_err(|source| SceneError::Obj {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_pdb(path: &Path) -> Result<MoleculeType, SceneError> {
    let text = read_text(path)?;
    parse_pdb(&text).map_err(|source| SceneError::Pdb {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Built scene

/// Instance hierarchy of one tile, in tile object space.
#[derive(Debug, Clone)]
pub struct TileAccel {
    pub bvh: Bvh,
    /// Union of the instance bounds.
    pub bounds: Aabb,
    pub atom_count: u64,
}

impl TileAccel {
    /// Each instance is bounded by the cube around its bounding sphere, so
    /// the bound holds under any rotation about the instance position.
    pub fn build(instances: &[MoleculeInstance], molecules: &[MoleculeType]) -> TileAccel {
        let bounds: Vec<Aabb> = instances
            .iter()
            .map(|i| {
                let r = molecules[i.molecule as usize].bounding_radius;
                Aabb::from_center_half(i.position, Vec3::splat(r * (1.0 + 1e-9)))
            })
            .collect();
        let union = bounds.iter().fold(Aabb::EMPTY, |a, b| a.union(b));
        TileAccel {
            bvh: Bvh::build(&bounds),
            bounds: union,
            atom_count: instances
                .iter()
                .map(|i| molecules[i.molecule as usize].atoms.len() as u64)
                .sum(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShellTiles {
    pub set: SquareTileSet,
    pub recipe: TilingRecipe2D,
    pub accel: Vec<TileAccel>,
    /// Union of every tile's content bounds.
    pub tile_box: Aabb,
}

#[derive(Debug, Clone)]
pub struct CoreTiles {
    pub set: CubeTileSet,
    pub recipe: TilingRecipe3D,
    pub accel: Vec<TileAccel>,
    /// How far tile content reaches past the tile's own box.
    pub overhang: f64,
}

/// Mesh-space shell structures; one prism per triangle.
#[derive(Debug, Clone)]
pub struct ShellSpace {
    pub prisms: Vec<Prism>,
    pub frames: Vec<TileFrame>,
    /// First recipe cell of each triangle's replication area.
    pub origins: Vec<(u32, u32)>,
    pub window: (u32, u32),
    /// Over prisms; each bound also covers the accepted instances.
    pub bvh: Bvh,
    pub rep_grid: RepGrid,
}

#[derive(Debug, Clone)]
pub struct CoreSpace {
    pub meta: CoreGridMeta,
    /// Mesh-space distance by which box content can precede the box entry.
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct MeshData {
    pub mesh: ProxyMesh,
    pub shell: Option<ShellSpace>,
    pub core: Option<CoreSpace>,
}

#[derive(Debug, Clone, Copy)]
pub struct MeshInstance {
    pub mesh: u32,
    pub world: Affine,
    pub inverse: Affine,
}

/// Top level: world bounds of every mesh instance, one tree per renderer.
#[derive(Debug, Clone, Default)]
pub struct MuLas {
    pub shell: Bvh,
    pub shell_ids: Vec<u32>,
    pub core: Bvh,
    pub core_ids: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildCounters {
    pub mu_las: u64,
    pub m_las: u64,
    pub n_las: u64,
    pub rep_las: u64,
}

pub struct MeshPart {
    pub mesh: ProxyMesh,
    pub shell: bool,
    pub core: bool,
}

/// Everything a scene is built from, already parsed.
pub struct SceneParts {
    pub molecules: Vec<MoleculeType>,
    pub squares: Option<(SquareTileSet, TilingRecipe2D)>,
    pub cubes: Option<(CubeTileSet, TilingRecipe3D)>,
    pub meshes: Vec<MeshPart>,
    pub instances: Vec<(u32, Affine)>,
    pub camera: Option<Camera>,
    pub config: RenderConfig,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub molecules: Vec<MoleculeType>,
    pub shell_tiles: Option<ShellTiles>,
    pub core_tiles: Option<CoreTiles>,
    pub meshes: Vec<MeshData>,
    pub instances: Vec<MeshInstance>,
    pub mu_las: MuLas,
    /// World bounds of all content.
    pub bounds: Aabb,
    /// Offset used when a ray starts inside a core mesh.
    pub epsilon: f64,
    pub counters: BuildCounters,
    pub camera: Camera,
    pub config: RenderConfig,
}

/// Replication-area size that fits every triangle of `mesh`.
pub fn shell_window(mesh: &ProxyMesh, tile_uv_size: f64) -> (u32, u32) {
    replication_area_dims((0..mesh.triangles.len()).map(|t| mesh.uvs(t)), tile_uv_size)
}

fn pad(b: Aabb) -> Aabb {
    if b.is_empty() {
        return b;
    }
    let scale = b.extent().max_element() + b.min.abs().max(b.max.abs()).max_element();
    b.expand(scale * 1e-9)
}

fn build_shell(
    mesh_id: u32,
    mesh: &ProxyMesh,
    tiles: &ShellTiles,
    molecules: &[MoleculeType],
) -> Result<ShellSpace, SceneError> {
    let s = tiles.set.world_size;
    let t = tiles.recipe.tile_uv_size;
    let window = shell_window(mesh, t);
    let prisms = build_adaptive_prisms(mesh, &tiles.recipe, &tiles.set, molecules, window)?;
    let mut frames = Vec::with_capacity(prisms.len());
    let mut origins = Vec::with_capacity(prisms.len());
    let mut bounds = Vec::with_capacity(prisms.len());
    for (tri, prism) in prisms.iter().enumerate() {
        let frame = TileFrame::new(mesh.positions(tri), mesh.normals(tri), mesh.uvs(tri), s, t).map_err(|_| {
            SceneError::DegenerateUv {
                mesh: mesh_id,
                triangle: tri as u32,
            }
        })?;
        let area = map_triangle(mesh.uvs(tri), &tiles.recipe, window);
        let mut b = Aabb::EMPTY;
        if !prism.degenerate {
            b = prism.aabb();
            for e in &area.entries {
                let m1 = frame.m1(e.g_uv);
                let half_scale = m1.linear.row_norms();
                let tile = &tiles.set.tiles[tiles.recipe.lookup(e.cell.0, e.cell.1)? as usize];
                for inst in &tile.instances {
                    let p = m1.transform_point(inst.position);
                    if point_in_prism(prism, p) {
                        let r = molecules[inst.molecule as usize].bounding_radius;
                        b = b.union(&Aabb::from_center_half(p, half_scale * r));
                    }
                }
            }
            b = pad(b);
        }
        origins.push(area.origin);
        frames.push(frame);
        bounds.push(b);
    }
    let cell_box = tiles.tile_box.expand(s * 1e-6);
    Ok(ShellSpace {
        prisms,
        frames,
        origins,
        window,
        bvh: Bvh::build(&bounds),
        rep_grid: RepGrid::with_cell_box(window, s, cell_box),
    })
}

fn build_core(mesh: &ProxyMesh, tiles: &CoreTiles) -> CoreSpace {
    let s = tiles.set.world_size;
    let meta = CoreGridMeta::covering(mesh.aabb, s);
    let margin = if tiles.overhang > 0.0 {
        (s + 2.0 * tiles.overhang) * 3f64.sqrt()
    } else {
        let r = meta.region();
        1e-9 * (r.extent().max_element() + r.min.abs().max(r.max.abs()).max_element())
    };
    CoreSpace { meta, margin }
}

impl Scene {
    pub fn build(parts: SceneParts) -> Result<Scene, SceneError> {
        let SceneParts {
            mut molecules,
            squares,
            cubes,
            meshes,
            instances,
            camera,
            config,
        } = parts;
        for (i, m) in molecules.iter_mut().enumerate() {
            m.id = i as u32;
        }
        let mut counters = BuildCounters {
            n_las: molecules.len() as u64,
            ..Default::default()
        };
        let shell_tiles = squares.map(|(set, recipe)| {
            let accel: Vec<TileAccel> = set.tiles.iter().map(|t| TileAccel::build(&t.instances, &molecules)).collect();
            counters.m_las += accel.len() as u64;
            let tile_box = accel.iter().fold(Aabb::EMPTY, |a, t| a.union(&t.bounds));
            ShellTiles {
                set,
                recipe,
                accel,
                tile_box: pad(tile_box),
            }
        });
        let core_tiles = cubes.map(|(set, recipe)| {
            let accel: Vec<TileAccel> = set.tiles.iter().map(|t| TileAccel::build(&t.instances, &molecules)).collect();
            counters.m_las += accel.len() as u64;
            let h = set.world_size * 0.5;
            let overhang = accel
                .iter()
                .filter(|a| !a.bounds.is_empty())
                .map(|a| (a.bounds.max - Vec3::splat(h)).max(Vec3::splat(-h) - a.bounds.min).max_element())
                .fold(0.0f64, f64::max);
            CoreTiles {
                set,
                recipe,
                accel,
                overhang,
            }
        });

        let mut built = Vec::with_capacity(meshes.len());
        for (id, part) in meshes.into_iter().enumerate() {
            let shell = match (part.shell, &shell_tiles) {
                (false, _) => None,
                (true, None) => return Err(SceneError::Invalid(format!("mesh {id} wants a shell but no square tiles are given"))),
                (true, Some(tiles)) => {
                    counters.m_las += 1;
                    counters.rep_las += 1;
                    Some(build_shell(id as u32, &part.mesh, tiles, &molecules)?)
                }
            };
            let core = match (part.core, &core_tiles) {
                (false, _) => None,
                (true, None) => return Err(SceneError::Invalid(format!("mesh {id} wants a core but no cube tiles are given"))),
                (true, Some(tiles)) => {
                    let c = build_core(&part.mesh, tiles);
                    let (gd, rd) = (c.meta.dims, tiles.recipe.dims);
                    if gd.0 > rd.0 || gd.1 > rd.1 || gd.2 > rd.2 {
                        return Err(SceneError::Invalid(format!(
                            "mesh {id}: core grid {gd:?} exceeds the cube recipe {rd:?}"
                        )));
                    }
                    Some(c)
                }
            };
            built.push(MeshData {
                mesh: part.mesh,
                shell,
                core,
            });
        }

        let mut inst = Vec::with_capacity(instances.len());
        for (i, (mesh, world)) in instances.into_iter().enumerate() {
            if mesh as usize >= built.len() {
                return Err(SceneError::Invalid(format!("mesh instance {i} refers to missing mesh {mesh}")));
            }
            let inverse = world.inverse().map_err(|_| SceneError::Singular(i as u32))?;
            inst.push(MeshInstance { mesh, world, inverse });
        }

        let mut scene = Scene {
            molecules,
            shell_tiles,
            core_tiles,
            meshes: built,
            instances: inst,
            mu_las: MuLas::default(),
            bounds: Aabb::EMPTY,
            epsilon: 0.0,
            counters,
            camera: Camera::look_at(vec3(0.0, 0.0, 1.0), Vec3::ZERO, Vec3::Y, 40f64.to_radians(), 256, 256),
            config,
        };
        scene.rebuild_mu_las();
        scene.camera = camera.unwrap_or_else(|| scene.default_camera(256, 256));
        Ok(scene)
    }

    fn core_bounds(&self, mesh: &MeshData) -> Option<Aabb> {
        let overhang = self.core_tiles.as_ref()?.overhang;
        mesh.core.as_ref().map(|c| c.meta.region().expand(overhang))
    }

    /// Rebuilds both top-level trees from the current mesh transforms.
    fn rebuild_mu_las(&mut self) {
        let mut shell_bounds = Vec::new();
        let mut shell_ids = Vec::new();
        let mut core_bounds = Vec::new();
        let mut core_ids = Vec::new();
        for (i, inst) in self.instances.iter().enumerate() {
            let mesh = &self.meshes[inst.mesh as usize];
            if let Some(shell) = &mesh.shell {
                shell_bounds.push(pad(shell.bvh.root_bounds().transformed(&inst.world)));
                shell_ids.push(i as u32);
            }
            if let Some(b) = self.core_bounds(mesh) {
                core_bounds.push(pad(b.transformed(&inst.world)));
                core_ids.push(i as u32);
            }
        }
        let bounds = shell_bounds.iter().chain(&core_bounds).fold(Aabb::EMPTY, |a, b| a.union(b));
        self.mu_las = MuLas {
            shell: Bvh::build(&shell_bounds),
            shell_ids,
            core: Bvh::build(&core_bounds),
            core_ids,
        };
        self.bounds = bounds;
        self.epsilon = if bounds.is_empty() { 1e-9 } else { 1e-4 * bounds.diagonal() };
        self.counters.mu_las += 1;
    }

    /// Looks at the centre of the scene from +z, framing its bounding sphere.
    pub fn default_camera(&self, width: u32, height: u32) -> Camera {
        let fov = 40f64.to_radians();
        let (c, r) = if self.bounds.is_empty() {
            (Vec3::ZERO, 1.0)
        } else {
            (self.bounds.center(), self.bounds.diagonal() * 0.5)
        };
        let dist = r / (fov * 0.5).sin() * 1.05;
        Camera::look_at(c + Vec3::Z * dist, c, Vec3::Y, fov, width, height)
    }

    /// Replaces one mesh instance's world transform. Only the top-level trees
    /// are rebuilt; tile and atom hierarchies stay as they are.
    pub fn set_mesh_transform(&mut self, id: u32, world: Affine) -> Result<(), SceneError> {
        let inverse = world.inverse().map_err(|_| SceneError::Singular(id))?;
        let inst = self.instances.get_mut(id as usize).ok_or(SceneError::NoSuchInstance(id))?;
        inst.world = world;
        inst.inverse = inverse;
        self.rebuild_mu_las();
        Ok(())
    }

    /// Atoms the scene represents, counted from recipes alone.
    pub fn virtual_atom_count(&self) -> u64 {
        let mut total = 0u64;
        for inst in &self.instances {
            let mesh = &self.meshes[inst.mesh as usize];
            if let (Some(shell), Some(tiles)) = (&mesh.shell, &self.shell_tiles) {
                total += shell_virtual_atoms(shell, tiles);
            }
            if let (Some(core), Some(tiles)) = (&mesh.core, &self.core_tiles) {
                total += core_virtual_atoms(&core.meta, tiles);
            }
        }
        total
    }

    pub fn report(&self) -> BuildReport {
        BuildReport::of(self)
    }

    /// Structural invariants; an empty list means the scene is sound.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut bvh = |what: String, b: &Bvh| {
            if let Err(e) = b.check_containment() {
                problems.push(format!("{what}: {e}"));
            }
        };
        for m in &self.molecules {
            bvh(format!("molecule {} atom hierarchy", m.id), &m.bvh);
        }
        if let Some(t) = &self.shell_tiles {
            for (i, a) in t.accel.iter().enumerate() {
                bvh(format!("square tile {i} hierarchy"), &a.bvh);
            }
        }
        if let Some(t) = &self.core_tiles {
            for (i, a) in t.accel.iter().enumerate() {
                bvh(format!("cube tile {i} hierarchy"), &a.bvh);
            }
        }
        for (i, m) in self.meshes.iter().enumerate() {
            bvh(format!("mesh {i} triangle hierarchy"), &m.mesh.bvh);
            if let Some(s) = &m.shell {
                bvh(format!("mesh {i} prism hierarchy"), &s.bvh);
                bvh(format!("mesh {i} replication grid"), &s.rep_grid.bvh);
            }
        }
        bvh("shell top level".into(), &self.mu_las.shell);
        bvh("core top level".into(), &self.mu_las.core);

        if let Some(t) = &self.shell_tiles {
            if let Err(e) = t.recipe.check(&t.set.tiles) {
                problems.push(format!("square recipe: {e}"));
            }
            if !t.recipe.covers_unit_square() {
                problems.push("square recipe does not cover uv [0,1]²".into());
            }
        }
        if let Some(t) = &self.core_tiles {
            if let Err(e) = t.recipe.check(&t.set.tiles) {
                problems.push(format!("cube recipe: {e}"));
            }
        }
        for (i, m) in self.meshes.iter().enumerate() {
            if let Err(e) = m.mesh.check() {
                problems.push(format!("mesh {i}: {e}"));
            }
            if let Some(s) = &m.shell {
                for p in s.prisms.iter().filter(|p| !p.degenerate) {
                    if let Err(e) = p.check_convex() {
                        problems.push(format!("mesh {i} prism {}: {e}", p.triangle));
                    }
                }
            }
        }
        problems
    }

    pub fn from_description(desc: &SceneDescription, base: &Path, file: &Path) -> Result<Scene, SceneError> {
        check_version(desc.version, file)?;
        let resolve = |p: &Path| base.join(p);
        let mut molecules = Vec::with_capacity(desc.molecules.len());
        for (i, entry) in desc.molecules.iter().enumerate() {
            let mut m = load_pdb(&resolve(&entry.file))?;
            if !finite(&entry.color) {
                return Err(schema(file, format!("molecules[{i}].color"), "must be finite"));
            }
            m.color = entry.color;
            if let Some(name) = &entry.name {
                m.name = name.clone();
            }
            if let Some(up) = entry.up {
                let v = Vec3::from_array(up);
                if !(v.is_finite() && v.length() > 0.0) {
                    return Err(schema(file, format!("molecules[{i}].up"), "must be a non-zero vector"));
                }
                m.up_vector = v.normalize();
            }
            molecules.push(m);
        }
        if desc.meshes.is_empty() {
            return Err(schema(file, "meshes", "at least one mesh is required"));
        }
        let mut meshes = Vec::with_capacity(desc.meshes.len());
        let mut instances = Vec::new();
        for (i, entry) in desc.meshes.iter().enumerate() {
            meshes.push(MeshPart {
                mesh: load_obj(&resolve(&entry.file))?,
                shell: entry.shell,
                core: entry.core,
            });
            let default = [InstanceEntry::default()];
            let list: &[InstanceEntry] = if entry.instances.is_empty() { &default } else { &entry.instances };
            for (k, ie) in list.iter().enumerate() {
                let field = format!("meshes[{i}].instances[{k}]");
                let world = match ie.matrix {
                    Some(rows) => {
                        if !rows.iter().all(|r| finite(r)) {
                            return Err(schema(file, format!("{field}.matrix"), "must be finite"));
                        }
                        Affine::new(
                            Mat3::from_rows(
                                vec3(rows[0][0], rows[0][1], rows[0][2]),
                                vec3(rows[1][0], rows[1][1], rows[1][2]),
                                vec3(rows[2][0], rows[2][1], rows[2][2]),
                            ),
                            vec3(rows[0][3], rows[1][3], rows[2][3]),
                        )
                    }
                    None => {
                        if !(finite(&ie.translation) && ie.scale.is_finite() && ie.scale != 0.0) {
                            return Err(schema(file, field.clone(), "translation and scale must be finite, scale non-zero"));
                        }
                        Affine::from_trs(
                            Vec3::from_array(ie.translation),
                            quat(ie.rotation, file, &format!("{field}.rotation"))?,
                            ie.scale,
                        )
                    }
                };
                instances.push((i as u32, world));
            }
        }

        let squares = match &desc.square_tiles {
            None => None,
            Some(e) => {
                if !(e.tile_uv_size.is_finite() && e.tile_uv_size > 0.0 && e.tile_uv_size <= 1.0) {
                    return Err(schema(file, "square_tiles.tile_uv_size", "must be in (0, 1]"));
                }
                let set = load_square_tiles(&resolve(&e.file), molecules.len())?;
                let recipe = match &e.recipe {
                    Some(p) => load_recipe_2d(&resolve(p), set.tiles.len(), e.tile_uv_size)?,
                    None => {
                        let dims = match e.dims {
                            Some([w, h]) => (w, h),
                            None => {
                                let n = (1.0 / e.tile_uv_size).floor() as u32 + 1;
                                let mut d = (n, n);
                                for m in meshes.iter().filter(|m| m.shell) {
                                    let w = shell_window(&m.mesh, e.tile_uv_size);
                                    d = (d.0.max(w.0), d.1.max(w.1));
                                }
                                d
                            }
                        };
                        let mut r = generate_recipe_2d(&set.tiles, dims, e.seed)?;
                        r.tile_uv_size = e.tile_uv_size;
                        r
                    }
                };
                Some((set, recipe))
            }
        };
        let cubes = match &desc.cube_tiles {
            None => None,
            Some(e) => {
                let set = load_cube_tiles(&resolve(&e.file), molecules.len())?;
                let recipe = match &e.recipe {
                    Some(p) => load_recipe_3d(&resolve(p), set.tiles.len())?,
                    None => {
                        let dims = match e.dims {
                            Some([a, b, c]) => (a, b, c),
                            None => meshes.iter().filter(|m| m.core).fold((1, 1, 1), |d, m| {
                                let g = CoreGridMeta::covering(m.mesh.aabb, set.world_size).dims;
                                (d.0.max(g.0), d.1.max(g.1), d.2.max(g.2))
                            }),
                        };
                        generate_recipe_3d(&set.tiles, dims, e.seed)?
                    }
                };
                Some((set, recipe))
            }
        };

        let mut config = RenderConfig {
            time: desc.render.time,
            jitter_amplitude: desc.render.jitter_amplitude,
            use_rep_las: desc.render.use_rep_las,
            smooth_normals: desc.render.smooth_normals,
            background: desc.render.background,
            mode: desc.render.mode,
            clip: ClipPlane::default(),
        };
        if !(config.jitter_amplitude.is_finite() && config.jitter_amplitude >= 0.0) {
            return Err(schema(file, "render.jitter_amplitude", "must be finite and non-negative"));
        }
        if let Some(c) = &desc.render.clip {
            let n = Vec3::from_array(c.normal);
            if !(n.is_finite() && n.length() > 0.0 && c.offset.is_finite()) {
                return Err(schema(file, "render.clip", "normal must be non-zero and finite"));
            }
            config.clip = ClipPlane::new(n, c.offset);
            config.clip.enabled = c.enabled;
        }
        let camera = match &desc.camera {
            None => None,
            Some(c) => {
                let cam = Camera::look_at(
                    Vec3::from_array(c.position),
                    Vec3::from_array(c.target),
                    Vec3::from_array(c.up),
                    c.fov.to_radians(),
                    c.width,
                    c.height,
                );
                if !cam.is_valid() {
                    return Err(schema(file, "camera", "needs a positive size, fov in (0, 180) and distinct position and target"));
                }
                Some(cam)
            }
        };
        Scene::build(SceneParts {
            molecules,
            squares,
            cubes,
            meshes,
            instances,
            camera,
            config,
        })
    }
}

pub fn shell_virtual_atoms(shell: &ShellSpace, tiles: &ShellTiles) -> u64 {
    let (nu, nv) = shell.window;
    let mut total = 0;
    for (p, origin) in shell.prisms.iter().zip(&shell.origins) {
        if p.degenerate {
            continue;
        }
        for j in 0..nv {
            for i in 0..nu {
                if let Ok(t) = tiles.recipe.lookup(origin.0 + i, origin.1 + j) {
                    total += tiles.accel[t as usize].atom_count;
                }
            }
        }
    }
    total
}

pub fn core_virtual_atoms(meta: &CoreGridMeta, tiles: &CoreTiles) -> u64 {
    let (a, b, c) = meta.dims;
    let mut total = 0;
    for k in 0..c {
        for j in 0..b {
            for i in 0..a {
                if let Ok(t) = tiles.recipe.lookup(i, j, k) {
                    total += tiles.accel[t as usize].atom_count;
                }
            }
        }
    }
    total
}

/// Reads and builds a scene file; relative paths resolve against the
/// file's directory.
pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let text = read_text(path)?;
    let desc: SceneDescription = parse_document(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Scene::from_description(&desc, base, path)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureBytes {
    pub atoms: usize,
    pub tiles: usize,
    pub tile_hierarchies: usize,
    pub recipes: usize,
    pub meshes: usize,
    pub prisms: usize,
    pub prism_hierarchies: usize,
    pub replication_grids: usize,
    pub core_grids: usize,
    /// Sum of the above. Independent of how many times meshes are instanced.
    pub geometry: usize,
    /// Mesh instance transforms and the top-level trees over them.
    pub instance_table: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub molecules: usize,
    pub atoms: usize,
    pub square_tiles: usize,
    pub cube_tiles: usize,
    pub meshes: usize,
    pub mesh_instances: usize,
    pub triangles: usize,
    pub prisms: usize,
    pub replication_windows: Vec<[u32; 2]>,
    pub grid_dims: Vec<[u32; 3]>,
    pub core_boxes: u64,
    pub recipe_2d_dims: Option<[u32; 2]>,
    pub recipe_3d_dims: Option<[u32; 3]>,
    pub virtual_atoms: u64,
    pub bytes: StructureBytes,
    pub counters: BuildCounters,
}

impl BuildReport {
    pub fn of(scene: &Scene) -> BuildReport {
        let mut b = StructureBytes {
            atoms: scene.molecules.iter().map(MoleculeType::byte_size).sum(),
            ..Default::default()
        };
        if let Some(t) = &scene.shell_tiles {
            b.tiles += t.set.byte_size();
            b.tile_hierarchies += t.accel.iter().map(|a| a.bvh.byte_size()).sum::<usize>();
            b.recipes += t.recipe.byte_size();
        }
        if let Some(t) = &scene.core_tiles {
            b.tiles += t.set.byte_size();
            b.tile_hierarchies += t.accel.iter().map(|a| a.bvh.byte_size()).sum::<usize>();
            b.recipes += t.recipe.byte_size();
        }
        let mut prisms = 0;
        let mut windows = Vec::new();
        let mut grids = Vec::new();
        let mut boxes = 0;
        for m in &scene.meshes {
            b.meshes += m.mesh.byte_size();
            if let Some(s) = &m.shell {
                let live = s.prisms.iter().filter(|p| !p.degenerate).count();
                prisms += live;
                b.prisms += s.prisms.iter().map(Prism::byte_size).sum::<usize>()
                    + s.frames.len() * size_of::<TileFrame>()
                    + s.origins.len() * size_of::<(u32, u32)>();
                b.prism_hierarchies += s.bvh.byte_size();
                b.replication_grids += s.rep_grid.byte_size();
                windows.push([s.window.0, s.window.1]);
            }
            if let Some(c) = &m.core {
                b.core_grids += size_of::<CoreSpace>();
                grids.push([c.meta.dims.0, c.meta.dims.1, c.meta.dims.2]);
                boxes += c.meta.box_count();
            }
        }
        b.geometry = b.atoms
            + b.tiles
            + b.tile_hierarchies
            + b.recipes
            + b.meshes
            + b.prisms
            + b.prism_hierarchies
            + b.replication_grids
            + b.core_grids;
        b.instance_table = scene.instances.len() * size_of::<MeshInstance>()
            + scene.mu_las.shell.byte_size()
            + scene.mu_las.core.byte_size()
            + (scene.mu_las.shell_ids.len() + scene.mu_las.core_ids.len()) * size_of::<u32>();
        BuildReport {
            molecules: scene.molecules.len(),
            atoms: scene.molecules.iter().map(|m| m.atoms.len()).sum(),
            square_tiles: scene.shell_tiles.as_ref().map_or(0, |t| t.set.tiles.len()),
            cube_tiles: scene.core_tiles.as_ref().map_or(0, |t| t.set.tiles.len()),
            meshes: scene.meshes.len(),
            mesh_instances: scene.instances.len(),
            triangles: scene.meshes.iter().map(|m| m.mesh.triangles.len()).sum(),
            prisms,
            replication_windows: windows,
            grid_dims: grids,
            core_boxes: boxes,
            recipe_2d_dims: scene.shell_tiles.as_ref().map(|t| [t.recipe.dims.0, t.recipe.dims.1]),
            recipe_3d_dims: scene
                .core_tiles
                .as_ref()
                .map(|t| [t.recipe.dims.0, t.recipe.dims.1, t.recipe.dims.2]),
            virtual_atoms: scene.virtual_atom_count(),
            bytes: b,
            counters: scene.counters,
        }
    }
}

impl fmt::Display for BuildReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "virtual atoms: {}", self.virtual_atoms)?;
        writeln!(f, "molecule types: {} ({} atoms)", self.molecules, self.atoms)?;
        writeln!(f, "tiles: {} square, {} cube", self.square_tiles, self.cube_tiles)?;
        writeln!(
            f,
            "meshes: {} ({} instances, {} triangles)",
            self.meshes, self.mesh_instances, self.triangles
        )?;
        writeln!(f, "prisms: {}", self.prisms)?;
        for w in &self.replication_windows {
            writeln!(f, "replication window: {}x{}", w[0], w[1])?;
        }
        for g in &self.grid_dims {
            writeln!(f, "core grid: {}x{}x{}", g[0], g[1], g[2])?;
        }
        writeln!(f, "core boxes: {}", self.core_boxes)?;
        if let Some(d) = self.recipe_2d_dims {
            writeln!(f, "square recipe: {}x{}", d[0], d[1])?;
        }
        if let Some(d) = self.recipe_3d_dims {
            writeln!(f, "cube recipe: {}x{}x{}", d[0], d[1], d[2])?;
        }
        let b = &self.bytes;
        writeln!(f, "bytes:")?;
        for (name, v) in [
            ("atoms", b.atoms),
            ("tiles", b.tiles),
            ("tile hierarchies", b.tile_hierarchies),
            ("recipes", b.recipes),
            ("meshes", b.meshes),
            ("prisms", b.prisms),
            ("prism hierarchies", b.prism_hierarchies),
            ("replication grids", b.replication_grids),
            ("core grids", b.core_grids),
            ("geometry total", b.geometry),
            ("instance table", b.instance_table),
        ] {
            writeln!(f, "  {name}: {v}")?;
        }
        write!(
            f,
            "builds: top {} tile {} molecule {} replication {}",
            self.counters.mu_las, self.counters.m_las, self.counters.n_las, self.counters.rep_las
        )
    }
}
