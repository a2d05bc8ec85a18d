//! Wang square and cube tiles, tiling recipes, and the mapping from proxy
//! triangles to the window of recipe cells they can overlap.

use std::mem::size_of;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::{vec2, Quat, Vec2, Vec3};

/// Square edge order.
pub const NORTH: usize = 0;
pub const EAST: usize = 1;
pub const SOUTH: usize = 2;
pub const WEST: usize = 3;

/// Cube face order: +x, −x, +y, −y, +z, −z.
pub const POS_X: usize = 0;
pub const NEG_X: usize = 1;
pub const POS_Y: usize = 2;
pub const NEG_Y: usize = 3;
pub const POS_Z: usize = 4;
pub const NEG_Z: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WangError {
    #[error("tile set is empty")]
    NoTiles,
    #[error("no tile satisfies the constraints at cell {cell:?}")]
    Unsatisfiable { cell: Vec<u32> },
    #[error("recipe cell {cell:?} outside dims {dims:?}")]
    OutOfBounds { cell: Vec<u32>, dims: Vec<u32> },
    #[error("recipe dims must be positive, got {0:?}")]
    BadDims(Vec<u32>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoleculeInstance {
    pub molecule: u32,
    /// Tile object space; for squares `y` is the height above the tile plane.
    pub position: Vec3,
    pub rotation: Quat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WangSquareTile {
    pub id: u32,
    /// N, E, S, W. East is +u, north is +v.
    pub edges: [u32; 4],
    pub instances: Vec<MoleculeInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WangCubeTile {
    pub id: u32,
    /// +x, −x, +y, −y, +z, −z.
    pub faces: [u32; 6],
    pub instances: Vec<MoleculeInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareTileSet {
    pub world_size: f64,
    pub tiles: Vec<WangSquareTile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeTileSet {
    pub world_size: f64,
    pub tiles: Vec<WangCubeTile>,
}

fn instances_bytes(v: &[MoleculeInstance]) -> usize {
    std::mem::size_of_val(v)
}

impl SquareTileSet {
    pub fn byte_size(&self) -> usize {
        self.tiles
            .iter()
            .map(|t| size_of::<WangSquareTile>() + instances_bytes(&t.instances))
            .sum()
    }
}

impl CubeTileSet {
    pub fn byte_size(&self) -> usize {
        self.tiles
            .iter()
            .map(|t| size_of::<WangCubeTile>() + instances_bytes(&t.instances))
            .sum()
    }
}

/// Cells are stored row-major with `i` (u) fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TilingRecipe2D {
    pub dims: (u32, u32),
    pub cells: Vec<u32>,
    pub tile_uv_size: f64,
}

/// Cells are stored with `i` fastest, then `j`, then `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TilingRecipe3D {
    pub dims: (u32, u32, u32),
    pub cells: Vec<u32>,
}

impl TilingRecipe2D {
    pub fn lookup(&self, i: u32, j: u32) -> Result<u32, WangError> {
        if i >= self.dims.0 || j >= self.dims.1 {
            return Err(WangError::OutOfBounds {
                cell: vec![i, j],
                dims: vec![self.dims.0, self.dims.1],
            });
        }
        Ok(self.cells[(j * self.dims.0 + i) as usize])
    }

    pub fn covers_unit_square(&self) -> bool {
        let (w, h) = self.dims;
        w as f64 * self.tile_uv_size >= 1.0 - 1e-12 && h as f64 * self.tile_uv_size >= 1.0 - 1e-12
    }

    pub fn byte_size(&self) -> usize {
        self.cells.len() * size_of::<u32>()
    }

    /// First adjacency violation or out-of-range tile index, if any.
    pub fn check(&self, tiles: &[WangSquareTile]) -> Result<(), String> {
        let (w, h) = self.dims;
        if self.cells.len() != (w * h) as usize {
            return Err(format!("recipe has {} cells for dims {w}x{h}", self.cells.len()));
        }
        let tile = |i: u32, j: u32| -> Result<&WangSquareTile, String> {
            let id = self.cells[(j * w + i) as usize];
            tiles
                .get(id as usize)
                .ok_or_else(|| format!("cell ({i},{j}) references missing tile {id}"))
        };
        for j in 0..h {
            for i in 0..w {
                let t = tile(i, j)?;
                if i + 1 < w && t.edges[EAST] != tile(i + 1, j)?.edges[WEST] {
                    return Err(format!("adjacency violation between cells ({i},{j}) and ({},{j})", i + 1));
                }
                if j + 1 < h && t.edges[NORTH] != tile(i, j + 1)?.edges[SOUTH] {
                    return Err(format!("adjacency violation between cells ({i},{j}) and ({i},{})", j + 1));
                }
            }
        }
        Ok(())
    }
}

impl TilingRecipe3D {
    pub fn lookup(&self, i: u32, j: u32, k: u32) -> Result<u32, WangError> {
        let (w, h, d) = self.dims;
        if i >= w || j >= h || k >= d {
            return Err(WangError::OutOfBounds {
                cell: vec![i, j, k],
                dims: vec![w, h, d],
            });
        }
        Ok(self.cells[((k * h + j) * w + i) as usize])
    }

    pub fn byte_size(&self) -> usize {
        self.cells.len() * size_of::<u32>()
    }

    pub fn check(&self, tiles: &[WangCubeTile]) -> Result<(), String> {
        let (w, h, d) = self.dims;
        if self.cells.len() != (w * h * d) as usize {
            return Err(format!("recipe has {} cells for dims {w}x{h}x{d}", self.cells.len()));
        }
        let tile = |i: u32, j: u32, k: u32| -> Result<&WangCubeTile, String> {
            let id = self.cells[((k * h + j) * w + i) as usize];
            tiles
                .get(id as usize)
                .ok_or_else(|| format!("cell ({i},{j},{k}) references missing tile {id}"))
        };
        for k in 0..d {
            for j in 0..h {
                for i in 0..w {
                    let t = tile(i, j, k)?;
                    let neighbours = [
                        (i + 1 < w, (i + 1, j, k), POS_X, NEG_X),
                        (j + 1 < h, (i, j + 1, k), POS_Y, NEG_Y),
                        (k + 1 < d, (i, j, k + 1), POS_Z, NEG_Z),
                    ];
                    for (present, (a, b, c), mine, theirs) in neighbours {
                        if present && t.faces[mine] != tile(a, b, c)?.faces[theirs] {
                            return Err(format!(
                                "adjacency violation between cells ({i},{j},{k}) and ({a},{b},{c})"
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Row-major scanline fill; each cell picks uniformly among the tiles that
/// match its already-placed west and south neighbours. The uv size defaults
/// to the coarsest value for which the recipe still covers uv [0,1]².
pub fn generate_recipe_2d(
    tiles: &[WangSquareTile],
    dims: (u32, u32),
    seed: u64,
) -> Result<TilingRecipe2D, WangError> {
    if tiles.is_empty() {
        return Err(WangError::NoTiles);
    }
    let (w, h) = dims;
    if w == 0 || h == 0 {
        return Err(WangError::BadDims(vec![w, h]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = vec![0u32; (w * h) as usize];
    let mut candidates = Vec::with_capacity(tiles.len());
    for j in 0..h {
        for i in 0..w {
            let west = (i > 0).then(|| tiles[cells[(j * w + i - 1) as usize] as usize].edges[EAST]);
            let south = (j > 0).then(|| tiles[cells[((j - 1) * w + i) as usize] as usize].edges[NORTH]);
            candidates.clear();
            candidates.extend(tiles.iter().enumerate().filter_map(|(idx, t)| {
                let ok = west.is_none_or(|c| t.edges[WEST] == c)
                    && south.is_none_or(|c| t.edges[SOUTH] == c);
                ok.then_some(idx as u32)
            }));
            if candidates.is_empty() {
                return Err(WangError::Unsatisfiable { cell: vec![i, j] });
            }
            cells[(j * w + i) as usize] = candidates[rng.gen_range(0..candidates.len())];
        }
    }
    Ok(TilingRecipe2D {
        dims,
        cells,
        tile_uv_size: 1.0 / w.min(h) as f64,
    })
}

/// The 3D analogue of [`generate_recipe_2d`] with −x, −y and −z neighbours.
pub fn generate_recipe_3d(
    tiles: &[WangCubeTile],
    dims: (u32, u32, u32),
    seed: u64,
) -> Result<TilingRecipe3D, WangError> {
    if tiles.is_empty() {
        return Err(WangError::NoTiles);
    }
    let (w, h, d) = dims;
    if w == 0 || h == 0 || d == 0 {
        return Err(WangError::BadDims(vec![w, h, d]));
    }
    let idx = |i: u32, j: u32, k: u32| ((k * h + j) * w + i) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = vec![0u32; (w * h * d) as usize];
    let mut candidates = Vec::with_capacity(tiles.len());
    for k in 0..d {
        for j in 0..h {
            for i in 0..w {
                let face = |c: usize, f: usize| tiles[cells[c] as usize].faces[f];
                let nx = (i > 0).then(|| face(idx(i - 1, j, k), POS_X));
                let ny = (j > 0).then(|| face(idx(i, j - 1, k), POS_Y));
                let nz = (k > 0).then(|| face(idx(i, j, k - 1), POS_Z));
                candidates.clear();
                candidates.extend(tiles.iter().enumerate().filter_map(|(n, t)| {
                    let ok = nx.is_none_or(|c| t.faces[NEG_X] == c)
                        && ny.is_none_or(|c| t.faces[NEG_Y] == c)
                        && nz.is_none_or(|c| t.faces[NEG_Z] == c);
                    ok.then_some(n as u32)
                }));
                if candidates.is_empty() {
                    return Err(WangError::Unsatisfiable { cell: vec![i, j, k] });
                }
                cells[idx(i, j, k)] = candidates[rng.gen_range(0..candidates.len())];
            }
        }
    }
    Ok(TilingRecipe3D { dims, cells })
}

/// Window size that holds every recipe cell any of the triangles can touch:
/// `ceil(max extent / tile_uv_size) + 1` per axis.
pub fn replication_area_dims<I>(uv_triangles: I, tile_uv_size: f64) -> (u32, u32)
where
    I: IntoIterator<Item = [Vec2; 3]>,
{
    let mut ext = vec2(0.0, 0.0);
    for t in uv_triangles {
        let lo = t[0].min(t[1]).min(t[2]);
        let hi = t[0].max(t[1]).max(t[2]);
        ext = ext.max(hi - lo);
    }
    let n = |e: f64| (e / tile_uv_size).ceil() as u32 + 1;
    (n(ext.x), n(ext.y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaEntry {
    pub cell: (u32, u32),
    /// Tile centre in uv.
    pub g_uv: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationArea {
    pub origin: (u32, u32),
    pub dims: (u32, u32),
    /// Window-local `(i, j)` at index `j·nU + i`.
    pub entries: Vec<AreaEntry>,
}

impl ReplicationArea {
    /// Uv of the window centre.
    pub fn center_uv(&self, tile_uv_size: f64) -> Vec2 {
        vec2(
            (self.origin.0 as f64 + self.dims.0 as f64 * 0.5) * tile_uv_size,
            (self.origin.1 as f64 + self.dims.1 as f64 * 0.5) * tile_uv_size,
        )
    }
}

/// Anchors the window at the cell holding the triangle's minimum uv, clamped
/// so the window stays inside the recipe.
pub fn map_triangle(uvs: [Vec2; 3], recipe: &TilingRecipe2D, dims: (u32, u32)) -> ReplicationArea {
    let t = recipe.tile_uv_size;
    let lo = uvs[0].min(uvs[1]).min(uvs[2]);
    let anchor = |v: f64, recipe_dim: u32, window: u32| -> u32 {
        let c = (v / t).floor().max(0.0) as u32;
        c.min(recipe_dim.saturating_sub(window))
    };
    let origin = (anchor(lo.x, recipe.dims.0, dims.0), anchor(lo.y, recipe.dims.1, dims.1));
    let mut entries = Vec::with_capacity((dims.0 * dims.1) as usize);
    for j in 0..dims.1 {
        for i in 0..dims.0 {
            let cell = (origin.0 + i, origin.1 + j);
            entries.push(AreaEntry {
                cell,
                g_uv: vec2((cell.0 as f64 + 0.5) * t, (cell.1 as f64 + 0.5) * t),
            });
        }
    }
    ReplicationArea {
        origin,
        dims,
        entries,
    }
}

pub fn recipe_lookup_2d(recipe: &TilingRecipe2D, cell: (u32, u32)) -> Result<u32, WangError> {
    recipe.lookup(cell.0, cell.1)
}

pub fn recipe_lookup_3d(recipe: &TilingRecipe3D, b: (u32, u32, u32)) -> Result<u32, WangError> {
    recipe.lookup(b.0, b.1, b.2)
}

/// Every NESW combination over `colors` colours, without content.
pub fn complete_square_set(colors: u32) -> Vec<WangSquareTile> {
    let n = colors.pow(4);
    (0..n)
        .map(|id| {
            let mut e = [0; 4];
            let mut v = id;
            for slot in &mut e {
                *slot = v % colors;
                v /= colors;
            }
            WangSquareTile {
                id,
                edges: e,
                instances: Vec::new(),
            }
        })
        .collect()
}

/// Every face combination over `colors` colours, without content.
pub fn complete_cube_set(colors: u32) -> Vec<WangCubeTile> {
    let n = colors.pow(6);
    (0..n)
        .map(|id| {
            let mut f = [0; 6];
            let mut v = id;
            for slot in &mut f {
                *slot = v % colors;
                v /= colors;
            }
            WangCubeTile {
                id,
                faces: f,
                instances: Vec::new(),
            }
        })
        .collect()
}
