//! Adaptive shell prisms: one per proxy triangle, sized from the molecules
//! that its replication area can place on it.

use std::mem::size_of;

use crate::geom::{ray_triangle_line, Aabb, Interval, Plane, Ray, Vec3};
use crate::mesh::ProxyMesh;
use crate::molecule::MoleculeType;
use crate::wang::{map_triangle, SquareTileSet, TilingRecipe2D, WangError};

/// Boundary triangles: two caps, then two per side quad.
const FACES: [[usize; 3]; 8] = [
    [3, 4, 5],
    [0, 2, 1],
    [0, 1, 4],
    [0, 4, 3],
    [1, 2, 5],
    [1, 5, 4],
    [2, 0, 3],
    [2, 3, 5],
];

#[derive(Debug, Clone, PartialEq)]
pub struct Prism {
    pub triangle: u32,
    pub top: [Vec3; 3],
    pub bottom: [Vec3; 3],
    pub h_plus: f64,
    pub h_minus: f64,
    pub side_offset: f64,
    /// Outward planes of the eight boundary triangles, unit normals.
    pub planes: [Plane; 8],
    /// No content maps onto the triangle; such prisms are left out of the
    /// scene hierarchy.
    pub degenerate: bool,
    eps: f64,
}

impl Prism {
    /// Bottom vertices then top vertices.
    pub fn vertices(&self) -> [Vec3; 6] {
        [self.bottom[0], self.bottom[1], self.bottom[2], self.top[0], self.top[1], self.top[2]]
    }

    pub fn from_vertices(triangle: u32, bottom: [Vec3; 3], top: [Vec3; 3]) -> Prism {
        let verts = [bottom[0], bottom[1], bottom[2], top[0], top[1], top[2]];
        let centroid = verts.iter().fold(Vec3::ZERO, |s, &v| s + v) / 6.0;
        let eps = 1e-9 * Aabb::from_points(verts).diagonal().max(1e-300);
        let planes = FACES.map(|[a, b, c]| {
            let mut n = (verts[b] - verts[a]).cross(verts[c] - verts[a]).normalize();
            if n.dot(centroid - verts[a]) > 0.0 {
                n = -n;
            }
            Plane::through(n, verts[a])
        });
        Prism {
            triangle,
            top,
            bottom,
            h_plus: 0.0,
            h_minus: 0.0,
            side_offset: 0.0,
            planes,
            degenerate: false,
            eps,
        }
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.vertices())
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices().iter().fold(Vec3::ZERO, |s, &v| s + v) / 6.0
    }

    /// Signed volume from the boundary triangles in their stored winding.
    pub fn volume(&self) -> f64 {
        let v = self.vertices();
        let c = self.centroid();
        FACES
            .iter()
            .map(|&[a, b, d]| (v[a] - c).dot((v[b] - c).cross(v[d] - c)) / 6.0)
            .sum::<f64>()
            .abs()
    }

    /// Sound solid: positive volume, every vertex on the convex hull of the
    /// six, and a top cap that has not folded over the base.
    pub fn check_convex(&self) -> Result<(), String> {
        if self.volume() <= self.eps * self.eps * self.eps {
            return Err(format!("prism {} has no volume", self.triangle));
        }
        let v = self.vertices();
        let tol = self.eps * 1e3;
        for i in 0..6 {
            let others: Vec<usize> = (0..6).filter(|&k| k != i).collect();
            // Extreme iff some plane through it and two others has the rest
            // strictly on one side.
            let extreme = (0..5).any(|a| {
                (a + 1..5).any(|b| {
                    let n = (v[others[a]] - v[i]).cross(v[others[b]] - v[i]);
                    if n.length_squared() == 0.0 {
                        return false;
                    }
                    let n = n.normalize();
                    let d: Vec<f64> = others.iter().map(|&k| n.dot(v[k] - v[i])).collect();
                    d.iter().all(|&x| x <= tol) || d.iter().all(|&x| x >= -tol)
                })
            });
            if !extreme {
                return Err(format!("prism {} is not convex: vertex {i} inside the hull", self.triangle));
            }
        }
        let normal = |t: [Vec3; 3]| (t[1] - t[0]).cross(t[2] - t[0]);
        if normal(self.top).dot(normal(self.bottom)) <= 0.0 {
            return Err(format!("prism {} is folded: top cap faces against the base", self.triangle));
        }
        Ok(())
    }

    pub fn byte_size(&self) -> usize {
        size_of::<Prism>()
    }
}

/// Entry and exit of the ray's line through the triangulated boundary,
/// ignoring the ray's own interval.
pub fn ray_prism_intersect(prism: &Prism, ray: &Ray) -> Option<Interval> {
    let v = prism.vertices();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for [a, b, c] in FACES {
        if let Some(h) = ray_triangle_line(ray, v[a], v[b], v[c]) {
            lo = lo.min(h.t);
            hi = hi.max(h.t);
        }
    }
    (lo <= hi).then(|| Interval::new(lo, hi))
}

pub fn point_in_prism(prism: &Prism, p: Vec3) -> bool {
    prism.planes.iter().all(|pl| pl.signed_distance(p) <= prism.eps)
}

/// Per-triangle offsets from the instances of every tile in the triangle's
/// replication area.
pub fn build_adaptive_prisms(
    mesh: &ProxyMesh,
    recipe: &TilingRecipe2D,
    tiles: &SquareTileSet,
    molecules: &[MoleculeType],
    window: (u32, u32),
) -> Result<Vec<Prism>, WangError> {
    let mut prisms = Vec::with_capacity(mesh.triangles.len());
    for tri in 0..mesh.triangles.len() {
        let area = map_triangle(mesh.uvs(tri), recipe, window);
        let mut h_plus = 0.0f64;
        let mut h_minus = 0.0f64;
        let mut width = 0.0f64;
        let mut any = false;
        for e in &area.entries {
            let tile = &tiles.tiles[recipe.lookup(e.cell.0, e.cell.1)? as usize];
            for inst in &tile.instances {
                let m = &molecules[inst.molecule as usize];
                h_plus = h_plus.max(inst.position.y + m.aabb.max.y);
                h_minus = h_minus.max(-(inst.position.y + m.aabb.min.y));
                width = width.max(m.width);
                any = true;
            }
        }
        let side_offset = width * 0.5;
        let p = mesh.positions(tri);
        let n = mesh.normals(tri);
        let c = (p[0] + p[1] + p[2]) / 3.0;
        let base = p.map(|v| v + (v - c).normalize() * side_offset);
        let top = [0, 1, 2].map(|i| base[i] + n[i] * h_plus);
        let bottom = [0, 1, 2].map(|i| base[i] - n[i] * h_minus);
        let mut prism = Prism::from_vertices(tri as u32, bottom, top);
        prism.h_plus = h_plus;
        prism.h_minus = h_minus;
        prism.side_offset = side_offset;
        prism.degenerate = !any || h_plus + h_minus <= 0.0;
        prisms.push(prism);
    }
    Ok(prisms)
}
