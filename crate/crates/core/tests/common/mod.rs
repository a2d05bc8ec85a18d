#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use vinst_core::geom::{vec2, vec3, Affine, Quat, Vec3};
use vinst_core::mesh::{parse_obj, ProxyMesh, Vertex};
use vinst_core::molecule::{Atom, MoleculeType};
use vinst_core::render::RenderConfig;
use vinst_core::scene::{load_scene, MeshPart, Scene, SceneParts};
use vinst_core::wang::{
    generate_recipe_2d, generate_recipe_3d, CubeTileSet, MoleculeInstance, SquareTileSet, WangCubeTile,
    WangSquareTile,
};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn micro_cell() -> Scene {
    load_scene(&fixture("scenes/micro-cell.toml")).expect("micro-cell loads")
}

pub fn single_atom(radius: f64) -> MoleculeType {
    MoleculeType::from_atoms(0, "atom", vec![Atom::new(Vec3::ZERO, radius, "C")]).unwrap()
}

pub fn at(molecule: u32, p: Vec3) -> MoleculeInstance {
    MoleculeInstance {
        molecule,
        position: p,
        rotation: Quat::IDENTITY,
    }
}

/// 40 × 40 quad in the xz plane facing +y, u along +x and v along −z.
pub fn flat_quad() -> ProxyMesh {
    let v = |p: Vec3, u: f64, w: f64| Vertex {
        position: p,
        normal: Vec3::Y,
        uv: vec2(u, w),
    };
    ProxyMesh::new(
        vec![
            v(Vec3::ZERO, 0.0, 0.0),
            v(vec3(40.0, 0.0, 0.0), 1.0, 0.0),
            v(vec3(40.0, 0.0, -40.0), 1.0, 1.0),
            v(vec3(0.0, 0.0, -40.0), 0.0, 1.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
}

pub fn cube_mesh(lo: f64, hi: f64) -> ProxyMesh {
    let mut s = String::new();
    for z in [lo, hi] {
        for y in [lo, hi] {
            for x in [lo, hi] {
                s += &format!("v {x} {y} {z}\n");
            }
        }
    }
    s += "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n";
    for f in [[1, 3, 4, 2], [5, 6, 8, 7], [1, 2, 6, 5], [3, 7, 8, 4], [1, 5, 7, 3], [2, 4, 8, 6]] {
        s += &format!("f {}/1 {}/2 {}/3 {}/4\n", f[0], f[1], f[2], f[3]);
    }
    parse_obj(&s).unwrap()
}

/// Flat quad shell with tile size 10 and uv size 0.25, so tiles are
/// undistorted and cell `(i, j)` is centred at `((i+½)·10, 0, −(j+½)·10)`.
pub fn quad_scene(molecules: Vec<MoleculeType>, instances: Vec<MoleculeInstance>, config: RenderConfig) -> Scene {
    let tiles = vec![WangSquareTile {
        id: 0,
        edges: [0; 4],
        instances,
    }];
    let mut recipe = generate_recipe_2d(&tiles, (5, 5), 1).unwrap();
    recipe.tile_uv_size = 0.25;
    Scene::build(SceneParts {
        molecules,
        squares: Some((
            SquareTileSet {
                world_size: 10.0,
                tiles,
            },
            recipe,
        )),
        cubes: None,
        meshes: vec![MeshPart {
            mesh: flat_quad(),
            shell: true,
            core: false,
        }],
        instances: vec![(0, Affine::IDENTITY)],
        camera: None,
        config,
    })
    .unwrap()
}

/// Closed cube `[0, n·s]³` filled with one cube tile.
pub fn cube_scene(
    molecules: Vec<MoleculeType>,
    instances: Vec<MoleculeInstance>,
    box_size: f64,
    n: u32,
    config: RenderConfig,
) -> Scene {
    let tiles = vec![WangCubeTile {
        id: 0,
        faces: [0; 6],
        instances,
    }];
    let recipe = generate_recipe_3d(&tiles, (n, n, n), 1).unwrap();
    Scene::build(SceneParts {
        molecules,
        squares: None,
        cubes: Some((
            CubeTileSet {
                world_size: box_size,
                tiles,
            },
            recipe,
        )),
        meshes: vec![MeshPart {
            mesh: cube_mesh(0.0, box_size * n as f64),
            shell: false,
            core: true,
        }],
        instances: vec![(0, Affine::IDENTITY)],
        camera: None,
        config,
    })
    .unwrap()
}
