use std::fs::File;
use std::io::{BufReader, BufWriter};

use approx::assert_relative_eq;
use hamspec::eigen::{read_spectrum, solve_generalized, write_spectrum, SolveOptions};
use hamspec::fem::{mesh_pencil, PotentialField};
use hamspec::mesh::io::{self, PlyEncoding, BUNDLED};
use hamspec::mesh::shapes;

#[test]
fn every_format_survives_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = shapes::finger_plate(6, 5).unwrap();
    for name in ["m.off", "m.obj", "m.ply"] {
        let path = dir.path().join(name);
        io::save(&mesh, &path).unwrap();
        let back = io::load(&path).unwrap();
        assert_eq!(back.triangles(), mesh.triangles(), "{name}");
        for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
            for c in 0..3 {
                assert_relative_eq!(a[c], b[c], epsilon = 1e-12);
            }
        }
    }
    let bin = dir.path().join("b.ply");
    io::save_ply(&mesh, &bin, PlyEncoding::BinaryLittleEndian, &["note".into()]).unwrap();
    assert_eq!(io::load(&bin).unwrap().vertices(), mesh.vertices());
}

#[test]
fn spectrum_file_keeps_values_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = io::bundled("cube").unwrap();
    let v: Vec<f64> = mesh.vertices().iter().map(|p| 2.0 * p[2]).collect();
    let s = solve_generalized(&mesh_pencil(&mesh, &PotentialField::new(v).unwrap()).unwrap(), 8, &SolveOptions::default()).unwrap();
    let path = dir.path().join("s.hspec");
    write_spectrum(BufWriter::new(File::create(&path).unwrap()), &s, serde_json::json!({"k": 8})).unwrap();
    let (back, header) = read_spectrum(BufReader::new(File::open(&path).unwrap())).unwrap();
    assert_eq!(back.values(), s.values());
    assert_eq!(back.vectors(), s.vectors());
    assert_eq!(header.metadata["k"], 8);
}

#[test]
fn bundled_meshes_match_their_generators() {
    for name in BUNDLED {
        assert!(io::bundled(name).unwrap().n_vertices() > 200, "{name}");
    }
    let generated = [("sphere", shapes::icosphere(3).unwrap()), ("cube", shapes::cube(8).unwrap()), ("square", shapes::grid(21).unwrap())];
    for (name, g) in generated {
        let m = io::bundled(name).unwrap();
        assert_eq!(m.triangles(), g.triangles(), "{name}");
        for (a, b) in m.vertices().iter().zip(g.vertices()) {
            for c in 0..3 {
                assert_relative_eq!(a[c], b[c], epsilon = 1e-12);
            }
        }
    }
    assert!(io::bundled("teapot").is_err());
}
