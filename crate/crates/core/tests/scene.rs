mod common;

use std::path::Path;

use common::*;
use vinst_core::geom::{vec2, vec3, Aabb, Affine, Vec3};
use vinst_core::image::{decode_ppm, encode_ppm, Image};
use vinst_core::mesh::{ProxyMesh, Vertex};
use vinst_core::molecule::{Atom, MoleculeType};
use vinst_core::render::{render_frame, RenderConfig};
use vinst_core::scene::{
    load_scene, parse_document, shell_virtual_atoms, MeshPart, Scene, SceneDescription, SceneError, SceneParts,
};
use vinst_core::wang::{generate_recipe_2d, SquareTileSet, WangSquareTile};

fn write_scene(dir: &Path, text: &str) -> std::path::PathBuf {
    let fixtures = fixture("").canonicalize().unwrap();
    let text = text.replace("../", &format!("{}/", fixtures.display()));
    let path = dir.join("scene.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn minimal_text() -> String {
    std::fs::read_to_string(fixture("scenes/minimal.toml")).unwrap()
}

#[test]
fn minimal_scene_builds_with_virtual_atoms() {
    let scene = load_scene(&fixture("scenes/minimal.toml")).unwrap();
    assert!(scene.virtual_atom_count() > 0);
    assert!(scene.validate().is_empty(), "{:?}", scene.validate());
    let report = scene.report();
    assert_eq!(report.mesh_instances, 1);
    assert_eq!(report.counters.mu_las, 1);
}

#[test]
fn missing_molecule_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scene(dir.path(), &minimal_text().replace("small.pdb", "absent.pdb"));
    let err = load_scene(&path).unwrap_err();
    assert!(matches!(err, SceneError::MissingFile(_)), "{err:?}");
    assert!(err.to_string().contains("absent.pdb"), "{err}");
}

#[test]
fn schema_errors_carry_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scene(dir.path(), &minimal_text().replace("fov = 50.0", "fov = \"wide\""));
    match load_scene(&path).unwrap_err() {
        SceneError::Schema { field, .. } => assert_eq!(field, "camera.fov"),
        e => panic!("unexpected {e:?}"),
    }
    let path = write_scene(dir.path(), &minimal_text().replace("version = 1", "version = 7"));
    match load_scene(&path).unwrap_err() {
        SceneError::Schema { field, .. } => assert_eq!(field, "version"),
        e => panic!("unexpected {e:?}"),
    }
    let err = parse_document::<SceneDescription>("version = 1\nmolecules = []\nmeshes = []\nextra = 3\n", &path);
    assert!(matches!(err, Err(SceneError::Schema { .. })));
}

#[test]
fn loading_is_deterministic() {
    let a = load_scene(&fixture("scenes/micro-cell.toml")).unwrap();
    let b = load_scene(&fixture("scenes/micro-cell.toml")).unwrap();
    assert_eq!(a.report(), b.report());
    assert_eq!(a.shell_tiles.unwrap().recipe, b.shell_tiles.unwrap().recipe);
}

#[test]
fn filled_cube_counts_every_box() {
    // 80³ cube, 10³ boxes, one 100-atom molecule per box.
    let scene = load_scene(&fixture("scenes/grid512.toml")).unwrap();
    let report = scene.report();
    assert_eq!(report.core_boxes, 512);
    assert_eq!(report.virtual_atoms, 51_200);
}

#[test]
fn single_window_triangle_counts_one_tile() {
    let mol = MoleculeType::from_atoms(
        0,
        "ten",
        (0..10).map(|i| Atom::new(vec3(i as f64 * 0.5, 0.0, 0.0), 0.3, "C")).collect(),
    )
    .unwrap();
    let tiles = vec![WangSquareTile {
        id: 0,
        edges: [0; 4],
        instances: vec![at(0, vec3(0.0, 1.0, 0.0))],
    }];
    let mut recipe = generate_recipe_2d(&tiles, (5, 5), 1).unwrap();
    recipe.tile_uv_size = 0.25;
    let v = |p: Vec3, u: f64, w: f64| Vertex {
        position: p,
        normal: Vec3::Y,
        uv: vec2(u, w),
    };
    // uv triangle well inside cell (0, 0).
    let mesh = ProxyMesh::new(
        vec![
            v(vec3(2.0, 0.0, -2.0), 0.05, 0.05),
            v(vec3(6.0, 0.0, -2.0), 0.15, 0.05),
            v(vec3(2.0, 0.0, -6.0), 0.05, 0.15),
        ],
        vec![[0, 1, 2]],
    );
    let scene = Scene::build(SceneParts {
        molecules: vec![mol],
        squares: Some((SquareTileSet { world_size: 10.0, tiles }, recipe)),
        cubes: None,
        meshes: vec![MeshPart { mesh, shell: true, core: false }],
        instances: vec![(0, Affine::IDENTITY)],
        camera: None,
        config: RenderConfig::default(),
    })
    .unwrap();
    let tiles = scene.shell_tiles.as_ref().unwrap();
    let mut shell = scene.meshes[0].shell.clone().unwrap();
    // The sized window leaves room for an unaligned triangle of this extent.
    assert_eq!(shell.window, (2, 2));
    assert_eq!(shell_virtual_atoms(&shell, tiles), 40);
    shell.window = (1, 1);
    assert_eq!(shell_virtual_atoms(&shell, tiles), 10);
}

#[test]
fn fixtures_validate() {
    for name in ["minimal", "micro-cell", "micro-cell-100", "grid512"] {
        let scene = load_scene(&fixture(&format!("scenes/{name}.toml"))).unwrap();
        assert!(scene.validate().is_empty(), "{name}: {:?}", scene.validate());
    }
}

#[test]
fn bad_recipe_fails_validation() {
    let scene = load_scene(&fixture("scenes/bad-recipe.toml")).unwrap();
    let problems = scene.validate();
    assert!(problems.iter().any(|p| p.contains("square recipe")), "{problems:?}");
}

#[test]
fn folded_normals_fail_prism_convexity() {
    let scene = load_scene(&fixture("scenes/degenerate-prism.toml")).unwrap();
    let problems = scene.validate();
    assert!(problems.iter().any(|p| p.contains("folded")), "{problems:?}");
}

#[test]
fn corrupted_hierarchy_bounds_fail_validation() {
    let mut scene = load_scene(&fixture("scenes/minimal.toml")).unwrap();
    let mol = &mut scene.molecules[0];
    let root = &mut mol.bvh.nodes_mut()[0];
    root.bounds = Aabb::new(root.bounds.max, root.bounds.min);
    let problems = scene.validate();
    assert!(problems.iter().any(|p| p.contains("molecule 0")), "{problems:?}");
}

#[test]
fn rendered_frames_round_trip_through_ppm() {
    let scene = load_scene(&fixture("scenes/minimal.toml")).unwrap();
    let fb = render_frame(&scene, &scene.camera, &scene.config);
    let img = Image::from_framebuffer(&fb);
    let bytes = encode_ppm(&img);
    assert!(bytes.starts_with(b"P6\n64 64\n255\n"));
    assert_eq!(bytes.len(), "P6\n64 64\n255\n".len() + 64 * 64 * 3);
    assert_eq!(decode_ppm(&bytes).unwrap(), img);
    // A second render of the same scene is byte-identical.
    let again = render_frame(&scene, &scene.camera, &scene.config);
    assert_eq!(encode_ppm(&Image::from_framebuffer(&again)), bytes);
}
