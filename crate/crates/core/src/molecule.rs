//! PDB ingestion, per-molecule metrics and the atom hierarchy.

use std::mem::size_of;

use thiserror::Error;

use crate::bvh::Bvh;
use crate::geom::{vec3, Aabb, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdbError {
    #[error("no ATOM or HETATM records")]
    Empty,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub center: Vec3,
    pub radius: f64,
    /// Upper-case element symbol, space padded.
    pub element: [u8; 2],
}

impl Atom {
    pub fn new(center: Vec3, radius: f64, element: &str) -> Atom {
        let mut e = [b' '; 2];
        for (slot, b) in e.iter_mut().zip(element.trim().bytes()) {
            *slot = b.to_ascii_uppercase();
        }
        Atom {
            center,
            radius,
            element: e,
        }
    }

    pub fn symbol(&self) -> &str {
        std::str::from_utf8(&self.element).unwrap_or("").trim()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_center_half(self.center, Vec3::splat(self.radius))
    }
}

/// Van der Waals radius in ångström.
pub fn element_radius(symbol: &str) -> f64 {
    match symbol.trim().to_ascii_uppercase().as_str() {
        "H" => 1.20,
        "C" => 1.70,
        "N" => 1.55,
        "O" => 1.52,
        "S" => 1.80,
        "P" => 1.80,
        _ => 1.60,
    }
}

#[derive(Debug, Clone)]
pub struct MoleculeType {
    pub id: u32,
    pub name: String,
    pub atoms: Vec<Atom>,
    pub aabb: Aabb,
    pub height: f64,
    pub width: f64,
    pub up_vector: Vec3,
    pub color: [f64; 3],
    /// Largest distance from the object-space origin to any atom surface.
    pub bounding_radius: f64,
    pub bvh: Bvh,
}

impl MoleculeType {
    /// Computes metrics and builds the atom hierarchy. Atoms are used as
    /// given; `parse_pdb` is what recentres them.
    pub fn from_atoms(id: u32, name: impl Into<String>, atoms: Vec<Atom>) -> Result<MoleculeType, PdbError> {
        if atoms.is_empty() {
            return Err(PdbError::Empty);
        }
        let (aabb, height, width) = molecule_metrics(&atoms);
        let bounding_radius = atoms
            .iter()
            .map(|a| a.center.length() + a.radius)
            .fold(0.0, f64::max);
        let bvh = build_atom_bvh(&atoms);
        Ok(MoleculeType {
            id,
            name: name.into(),
            atoms,
            aabb,
            height,
            width,
            up_vector: Vec3::Y,
            color: [0.8, 0.8, 0.8],
            bounding_radius,
            bvh,
        })
    }

    pub fn byte_size(&self) -> usize {
        self.atoms.len() * size_of::<Atom>() + self.bvh.byte_size() + self.name.len()
    }
}

/// `(aabb, height, width)`: the union of atom sphere bounds, its y extent,
/// and the larger of its x and z extents.
pub fn molecule_metrics(atoms: &[Atom]) -> (Aabb, f64, f64) {
    let aabb = atoms.iter().fold(Aabb::EMPTY, |b, a| b.union(&a.bounds()));
    let e = aabb.extent();
    (aabb, e.y, e.x.max(e.z))
}

pub fn build_atom_bvh(atoms: &[Atom]) -> Bvh {
    let bounds: Vec<Aabb> = atoms.iter().map(Atom::bounds).collect();
    Bvh::build(&bounds)
}

/// Reads ATOM/HETATM records of the first model and recentres the atoms on
/// their centroid.
pub fn parse_pdb(text: &str) -> Result<MoleculeType, PdbError> {
    let mut atoms = Vec::new();
    let mut name = String::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with("ENDMDL") {
            break;
        }
        if name.is_empty() && (line.starts_with("HEADER") || line.starts_with("COMPND")) {
            name = line.get(10..).unwrap_or("").trim().to_string();
        }
        if !(line.starts_with("ATOM  ") || line.starts_with("HETATM")) {
            continue;
        }
        let bad = |reason: &str| PdbError::Malformed {
            line: line_no,
            reason: reason.to_string(),
        };
        if !line.is_ascii() {
            return Err(bad("non-ASCII record"));
        }
        if line.len() < 54 {
            return Err(bad("record shorter than 54 columns"));
        }
        let coord = |range: std::ops::Range<usize>, axis: &str| -> Result<f64, PdbError> {
            let field = line[range].trim();
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(&format!("bad {axis} coordinate {field:?}")))
        };
        let center = vec3(coord(30..38, "x")?, coord(38..46, "y")?, coord(46..54, "z")?);
        let element = line
            .get(76..78)
            .map(str::trim)
            .filter(|e| !e.is_empty())
            .map(str::to_string)
            .or_else(|| {
                line.get(12..16)
                    .and_then(|n| n.chars().find(|c| c.is_ascii_alphabetic()))
                    .map(|c| c.to_string())
            })
            .ok_or_else(|| bad("no element symbol or atom name"))?;
        atoms.push(Atom::new(center, element_radius(&element), &element));
    }
    if atoms.is_empty() {
        return Err(PdbError::Empty);
    }
    let centroid = atoms.iter().fold(Vec3::ZERO, |s, a| s + a.center) / atoms.len() as f64;
    for a in &mut atoms {
        a.center = a.center - centroid;
    }
    if name.is_empty() {
        name = "molecule".to_string();
    }
    MoleculeType::from_atoms(0, name, atoms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{ray_sphere, Ray};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(serial: usize, name: &str, x: f64, y: f64, z: f64, element: &str) -> String {
        format!(
            "ATOM  {serial:>5} {name:<4} ALA A   1    {x:>8.3}{y:>8.3}{z:>8.3}  1.00  0.00          {element:>2}"
        )
    }

    #[test]
    fn record_columns_line_up() {
        let r = record(1, "CA", 1.0, 2.0, 3.0, "C");
        assert_eq!(&r[30..38], "   1.000");
        assert_eq!(&r[76..78], " C");
    }

    #[test]
    fn single_carbon_recentred() {
        let m = parse_pdb(&record(1, "CA", 1.0, 2.0, 3.0, "C")).unwrap();
        assert_eq!(m.atoms.len(), 1);
        assert_eq!(m.atoms[0].radius, 1.70);
        assert_eq!(m.atoms[0].center, Vec3::ZERO);
        assert_eq!(m.atoms[0].symbol(), "C");
    }

    #[test]
    fn nitrogen_pair_bounds() {
        let text = [record(1, "N1", -1.0, 0.0, 0.0, "N"), record(2, "N2", 1.0, 0.0, 0.0, "N")].join("\n");
        let m = parse_pdb(&text).unwrap();
        assert_eq!(m.aabb.min.x, -1.0 - 1.55);
        assert_eq!(m.aabb.max.x, 1.0 + 1.55);
    }

    #[test]
    fn element_falls_back_to_atom_name() {
        let mut r = record(1, " OG1", 0.0, 0.0, 0.0, "");
        r.truncate(66);
        let m = parse_pdb(&r).unwrap();
        assert_eq!(m.atoms[0].symbol(), "O");
        assert_eq!(m.atoms[0].radius, 1.52);
    }

    #[test]
    fn unknown_element_gets_default_radius() {
        let m = parse_pdb(&record(1, "FE", 0.0, 0.0, 0.0, "FE")).unwrap();
        assert_eq!(m.atoms[0].radius, 1.60);
    }

    #[test]
    fn errors() {
        assert_eq!(parse_pdb("HEADER nothing\nEND\n").unwrap_err(), PdbError::Empty);
        let good = record(1, "CA", 0.0, 0.0, 0.0, "C");
        let bad = format!("{good}\nATOM      2  CA  ALA A   1    abc");
        match parse_pdb(&bad).unwrap_err() {
            PdbError::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        let bad_coord = record(1, "CA", 0.0, 0.0, 0.0, "C").replacen("   0.000", "   x.000", 1);
        assert!(matches!(parse_pdb(&bad_coord), Err(PdbError::Malformed { line: 1, .. })));
    }

    #[test]
    fn first_model_wins_and_order_is_kept() {
        let text = [
            "MODEL        1".to_string(),
            record(1, "CA", 0.0, 0.0, 0.0, "C"),
            record(2, "N", 2.0, 0.0, 0.0, "N"),
            "ENDMDL".to_string(),
            "MODEL        2".to_string(),
            record(1, "CA", 9.0, 9.0, 9.0, "C"),
            "ENDMDL".to_string(),
        ]
        .join("\n");
        let m = parse_pdb(&text).unwrap();
        assert_eq!(m.atoms.len(), 2);
        assert_eq!(m.atoms[0].symbol(), "C");
        assert_eq!(m.atoms[1].symbol(), "N");
        assert_eq!(m.atoms[0].center, vec3(-1.0, 0.0, 0.0));
    }

    #[test]
    fn metrics_examples() {
        let (b, h, w) = molecule_metrics(&[Atom::new(Vec3::ZERO, 1.0, "C")]);
        assert_eq!(b, Aabb::new(Vec3::splat(-1.0), Vec3::ONE));
        assert_eq!((h, w), (2.0, 2.0));
        let (_, h, w) = molecule_metrics(&[
            Atom::new(vec3(0.0, -3.0, 0.0), 1.0, "C"),
            Atom::new(vec3(0.0, 3.0, 0.0), 1.0, "C"),
        ]);
        assert_eq!((h, w), (8.0, 2.0));
    }

    fn brute_metrics(atoms: &[(f64, f64, f64, f64)]) -> ([f64; 6], f64, f64) {
        let mut lo = [f64::MAX; 3];
        let mut hi = [f64::MIN; 3];
        for &(x, y, z, r) in atoms {
            for (k, c) in [x, y, z].into_iter().enumerate() {
                lo[k] = lo[k].min(c - r);
                hi[k] = hi[k].max(c + r);
            }
        }
        let h = hi[1] - lo[1];
        let w = (hi[0] - lo[0]).max(hi[2] - lo[2]);
        ([lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]], h, w)
    }

    #[test]
    fn parsed_metrics_match_direct_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let elements = ["C", "N", "O", "S", "H", "P"];
        let mut lines = Vec::new();
        let mut raw = Vec::new();
        for i in 0..20 {
            let (x, y, z) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            let (x, y, z): (f64, f64, f64) = ((x * 1000.0f64).round() / 1000.0, (y * 1000.0f64).round() / 1000.0, (z * 1000.0f64).round() / 1000.0);
            let e = elements[i % elements.len()];
            lines.push(record(i + 1, e, x, y, z, e));
            raw.push((x, y, z, element_radius(e)));
        }
        let m = parse_pdb(&lines.join("\n")).unwrap();
        let n = raw.len() as f64;
        let c = raw.iter().fold([0.0; 3], |s, a| [s[0] + a.0, s[1] + a.1, s[2] + a.2]);
        let centred: Vec<_> = raw.iter().map(|a| (a.0 - c[0] / n, a.1 - c[1] / n, a.2 - c[2] / n, a.3)).collect();
        let (b, h, w) = brute_metrics(&centred);
        assert!((m.height - h).abs() < 1e-9);
        assert!((m.width - w).abs() < 1e-9);
        let got = [m.aabb.min.x, m.aabb.min.y, m.aabb.min.z, m.aabb.max.x, m.aabb.max.y, m.aabb.max.z];
        for k in 0..6 {
            assert!((got[k] - b[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn random_metrics_match_direct_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let raw: Vec<_> = (0..50)
            .map(|_| (rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0), rng.gen_range(1.0..2.0)))
            .collect();
        let atoms: Vec<Atom> = raw.iter().map(|a| Atom::new(vec3(a.0, a.1, a.2), a.3, "C")).collect();
        let m = MoleculeType::from_atoms(0, "r", atoms.clone()).unwrap();
        let (b, h, w) = brute_metrics(&raw);
        assert_eq!((m.height, m.width), (h, w));
        assert_eq!(m.aabb, Aabb::new(vec3(b[0], b[1], b[2]), vec3(b[3], b[4], b[5])));
        assert_eq!(m.aabb, molecule_metrics(&atoms).0);
    }

    #[test]
    fn atom_bvh_small_cases() {
        let one = MoleculeType::from_atoms(0, "a", vec![Atom::new(Vec3::ZERO, 1.0, "C")]).unwrap();
        assert_eq!(one.bvh.nodes().len(), 1);
        let r = Ray::new(vec3(0.0, 0.0, -5.0), Vec3::Z);
        let hit = one.bvh.traverse(&r, |p, w| ray_sphere(w, one.atoms[p as usize].center, 1.0).map(|t| (t, ())));
        assert_eq!(hit.map(|h| h.1), Some(0));

        let two = MoleculeType::from_atoms(
            0,
            "b",
            vec![Atom::new(vec3(-3.0, 0.0, 0.0), 1.0, "C"), Atom::new(vec3(3.0, 0.0, 0.0), 1.0, "C")],
        )
        .unwrap();
        let r = Ray::new(vec3(3.0, 0.0, -5.0), Vec3::Z);
        let mut visited = Vec::new();
        let hit = two.bvh.traverse(&r, |p, w| {
            visited.push(p);
            ray_sphere(w, two.atoms[p as usize].center, 1.0).map(|t| (t, ()))
        });
        assert_eq!(hit.map(|h| h.1), Some(1));
    }

    #[test]
    fn atom_bvh_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let atoms: Vec<Atom> = (0..200)
            .map(|_| {
                let c = vec3(rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0));
                Atom::new(c, rng.gen_range(1.2..1.8), "C")
            })
            .collect();
        let m = MoleculeType::from_atoms(0, "m", atoms).unwrap();
        for _ in 0..10_000 {
            let o = vec3(rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0));
            let target = vec3(rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0));
            let r = Ray::new(o, target - o);
            let got = m
                .bvh
                .traverse(&r, |p, w| {
                    let a = m.atoms[p as usize];
                    ray_sphere(w, a.center, a.radius).map(|t| (t, ()))
                })
                .map(|h| (h.0, h.1));
            let mut want: Option<(f64, u32)> = None;
            for (i, a) in m.atoms.iter().enumerate() {
                if let Some(t) = ray_sphere(&r, a.center, a.radius) {
                    if want.is_none_or(|(bt, _)| t < bt) {
                        want = Some((t, i as u32));
                    }
                }
            }
            match (got, want) {
                (Some(g), Some(w)) => {
                    assert_eq!(g.1, w.1);
                    assert!((g.0 - w.0).abs() <= 1e-7 * w.0);
                }
                (None, None) => {}
                other => panic!("{other:?}"),
            }
        }
    }
}
