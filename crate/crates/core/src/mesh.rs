//! Proxy meshes and the wavefront OBJ subset they are loaded from.

use std::collections::HashMap;
use std::mem::size_of;

use thiserror::Error;

use crate::bvh::Bvh;
use crate::geom::{ray_triangle, vec2, vec3, Aabb, Ray, TriangleHit, Vec2, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: face vertex has no texture coordinate")]
    MissingUv { line: usize },
    #[error("mesh has no faces")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub position: Vec3,
    pub normal: Vec3,
    pub uv: Vec2,
}

#[derive(Debug, Clone)]
pub struct ProxyMesh {
    pub vertices: Vec<Vertex>,
    /// Counter-clockwise front faces.
    pub triangles: Vec<[u32; 3]>,
    pub bvh: Bvh,
    pub aabb: Aabb,
}

impl ProxyMesh {
    pub fn new(vertices: Vec<Vertex>, triangles: Vec<[u32; 3]>) -> ProxyMesh {
        let bounds: Vec<Aabb> = triangles
            .iter()
            .map(|t| Aabb::from_points(t.iter().map(|&i| vertices[i as usize].position)))
            .collect();
        let bvh = Bvh::build(&bounds);
        let aabb = Aabb::from_points(vertices.iter().map(|v| v.position));
        ProxyMesh {
            vertices,
            triangles,
            bvh,
            aabb,
        }
    }

    pub fn positions(&self, tri: usize) -> [Vec3; 3] {
        self.triangles[tri].map(|i| self.vertices[i as usize].position)
    }

    pub fn normals(&self, tri: usize) -> [Vec3; 3] {
        self.triangles[tri].map(|i| self.vertices[i as usize].normal)
    }

    pub fn uvs(&self, tri: usize) -> [Vec2; 3] {
        self.triangles[tri].map(|i| self.vertices[i as usize].uv)
    }

    /// Closest hit among triangles whose facing matches `front`, with `t`
    /// in the ray interval. Equal `t` goes to the smaller triangle index.
    pub fn closest_facing(&self, ray: &Ray, front: bool) -> Option<(f64, u32)> {
        self.bvh
            .traverse(ray, |p, r| {
                let [a, b, c] = self.positions(p as usize);
                ray_triangle(r, a, b, c)
                    .filter(|h: &TriangleHit| h.front_facing == front)
                    .map(|h| (h.t, ()))
            })
            .map(|(t, p, _)| (t, p))
    }

    /// Mesh invariants: unit normals, uv in [0,1]², non-degenerate faces.
    pub fn check(&self) -> Result<(), String> {
        for (i, v) in self.vertices.iter().enumerate() {
            if (v.normal.length() - 1.0).abs() > 1e-6 {
                return Err(format!("vertex {i} normal is not unit length"));
            }
            if !(0.0..=1.0).contains(&v.uv.x) || !(0.0..=1.0).contains(&v.uv.y) {
                return Err(format!("vertex {i} uv outside [0,1]"));
            }
        }
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.positions(t);
            if (b - a).cross(c - a).length() * 0.5 <= 1e-12 {
                return Err(format!("triangle {t} is degenerate"));
            }
        }
        Ok(())
    }

    pub fn byte_size(&self) -> usize {
        self.vertices.len() * size_of::<Vertex>()
            + self.triangles.len() * size_of::<[u32; 3]>()
            + self.bvh.byte_size()
    }
}

/// Parses `v`, `vt`, `vn` and `f` records; polygons are fan-triangulated,
/// missing normals become area-weighted vertex normals and uvs are clamped
/// to [0,1].
pub fn parse_obj(text: &str) -> Result<ProxyMesh, ObjError> {
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut normals = Vec::new();
    // (position, uv, optional normal) per corner.
    let mut corners: Vec<(usize, usize, Option<usize>)> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut lookup: HashMap<(usize, usize, Option<usize>), usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let bad = |reason: String| ObjError::Malformed { line, reason };
        let content = raw.split('#').next().unwrap_or("");
        let mut parts = content.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let nums = |parts: std::str::SplitWhitespace, n: usize| -> Result<Vec<f64>, ObjError> {
            let v: Result<Vec<f64>, _> = parts.take(n).map(str::parse::<f64>).collect();
            match v {
                Ok(v) if v.len() >= n.min(2) && v.iter().all(|x| x.is_finite()) => Ok(v),
                _ => Err(ObjError::Malformed {
                    line,
                    reason: format!("bad {tag} record"),
                }),
            }
        };
        match tag {
            "v" => {
                let v = nums(parts, 3)?;
                if v.len() < 3 {
                    return Err(bad("vertex needs 3 coordinates".into()));
                }
                positions.push(vec3(v[0], v[1], v[2]));
            }
            "vt" => {
                let v = nums(parts, 2)?;
                uvs.push(vec2(v[0].clamp(0.0, 1.0), v[1].clamp(0.0, 1.0)));
            }
            "vn" => {
                let v = nums(parts, 3)?;
                if v.len() < 3 {
                    return Err(bad("normal needs 3 components".into()));
                }
                normals.push(vec3(v[0], v[1], v[2]).normalize());
            }
            "f" => {
                let mut poly = Vec::new();
                for corner in parts {
                    let mut it = corner.split('/');
                    let resolve = |s: Option<&str>, len: usize, what: &str| -> Result<Option<usize>, ObjError> {
                        match s {
                            None | Some("") => Ok(None),
                            Some(s) => {
                                let i: i64 = s.parse().map_err(|_| ObjError::Malformed {
                                    line,
                                    reason: format!("bad {what} index {s:?}"),
                                })?;
                                let r = if i > 0 { i - 1 } else { len as i64 + i };
                                if i == 0 || r < 0 || r >= len as i64 {
                                    return Err(ObjError::Malformed {
                                        line,
                                        reason: format!("undefined {what} index {i}"),
                                    });
                                }
                                Ok(Some(r as usize))
                            }
                        }
                    };
                    let p = resolve(it.next(), positions.len(), "v")?
                        .ok_or_else(|| bad("face corner without vertex".into()))?;
                    let t = resolve(it.next(), uvs.len(), "vt")?.ok_or(ObjError::MissingUv { line })?;
                    let n = resolve(it.next(), normals.len(), "vn")?;
                    let key = (p, t, n);
                    let id = *lookup.entry(key).or_insert_with(|| {
                        corners.push(key);
                        corners.len() - 1
                    });
                    poly.push(id);
                }
                if poly.len() < 3 {
                    return Err(bad("face needs at least 3 vertices".into()));
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if faces.is_empty() {
        return Err(ObjError::Empty);
    }

    // Area-weighted normals per position for corners without an explicit one.
    let mut accum = vec![Vec3::ZERO; positions.len()];
    for f in &faces {
        let [a, b, c] = f.map(|i| positions[corners[i].0]);
        let n = (b - a).cross(c - a);
        for &i in f {
            accum[corners[i].0] += n;
        }
    }
    let vertices = corners
        .iter()
        .map(|&(p, t, n)| Vertex {
            position: positions[p],
            normal: n.map_or_else(|| accum[p].normalize(), |n| normals[n]),
            uv: uvs[t],
        })
        .collect();
    let triangles = faces.iter().map(|f| f.map(|i| i as u32)).collect();
    Ok(ProxyMesh::new(vertices, triangles))
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n";

    #[test]
    fn quad_fan() {
        let m = parse_obj(QUAD).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles.len(), 2);
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        for v in &m.vertices {
            assert!((v.normal - Vec3::Z).length() < 1e-12);
        }
        m.check().unwrap();
    }

    #[test]
    fn undefined_uv_index_is_an_error() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/2 3/3\n";
        assert_eq!(
            parse_obj(text).unwrap_err(),
            ObjError::Malformed {
                line: 5,
                reason: "undefined vt index 2".into()
            }
        );
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        assert_eq!(parse_obj(text).unwrap_err(), ObjError::MissingUv { line: 4 });
        assert!(matches!(parse_obj("v 0 0\n"), Err(ObjError::Malformed { line: 1, .. })));
    }

    fn cube_obj() -> String {
        let mut s = String::new();
        for z in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for x in [0.0, 1.0] {
                    s += &format!("v {x} {y} {z}\n");
                }
            }
        }
        s += "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n";
        // Outward counter-clockwise quads.
        for f in [[1, 3, 4, 2], [5, 6, 8, 7], [1, 2, 6, 5], [3, 7, 8, 4], [1, 5, 7, 3], [2, 4, 8, 6]] {
            s += &format!("f {}/1 {}/2 {}/3 {}/4\n", f[0], f[1], f[2], f[3]);
        }
        s
    }

    #[test]
    fn cube_without_normals_gets_unit_normals() {
        let m = parse_obj(&cube_obj()).unwrap();
        assert_eq!(m.triangles.len(), 12);
        for v in &m.vertices {
            assert!((v.normal.length() - 1.0).abs() < 1e-6);
            // Corner normals point away from the centre.
            assert!(v.normal.dot(v.position - Vec3::splat(0.5)) > 0.0);
        }
    }

    #[test]
    fn facing_queries() {
        let m = parse_obj(&cube_obj()).unwrap();
        let r = Ray::new(vec3(0.5, 0.5, -1.0), Vec3::Z);
        assert_eq!(m.closest_facing(&r, true).map(|h| h.0), Some(1.0));
        assert_eq!(m.closest_facing(&r, false).map(|h| h.0), Some(2.0));
    }
}
