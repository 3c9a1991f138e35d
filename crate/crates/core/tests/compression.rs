use hamspec::compression::*;
use hamspec::eigen::{solve_generalized, SolveOptions};
use hamspec::fem::{graph_laplacian, DiagOperator, Pencil};
use hamspec::mesh::{shapes, TriMesh};
use proptest::prelude::*;

fn max_abs_diff(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter().zip(b).flat_map(|(p, q)| (0..3).map(move |i| (p[i] - q[i]).abs())).fold(0.0, f64::max)
}

fn plate() -> TriMesh {
    shapes::finger_plate(12, 10).unwrap()
}

#[test]
fn unquantized_error_is_truncation_error() {
    let m = plate();
    let n = m.n_vertices();
    let k = 12;
    let c = encode(&m, &CompressionMode::Mhb, k, 0.0).unwrap();
    let d = decode(&c, m.triangles(), None).unwrap();
    // Independent projection onto the graph-Laplacian eigenvectors.
    let p = Pencil { h: graph_laplacian(n, m.triangles()).unwrap(), mass: DiagOperator::identity(n) };
    let s = solve_generalized(&p, k, &SolveOptions::dense()).unwrap();
    let expect: Vec<[f64; 3]> = {
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|c| {
                let f: Vec<f64> = m.vertices().iter().map(|v| v[c]).collect();
                s.synthesize(&s.project(&f))
            })
            .collect();
        (0..n).map(|i| [cols[0][i], cols[1][i], cols[2][i]]).collect()
    };
    assert!(max_abs_diff(&d.vertices, &expect) < 1e-10);
    assert!(geometry_error(&m, &d.vertices).unwrap() > 0.0);
}

#[test]
fn affine_potential_reordered_equals_explicit() {
    let m = plate();
    let n = m.n_vertices();
    let v: Vec<f64> = (0..n).map(|i| 0.01 * (i + 1) as f64 + 0.5).collect();
    let a = encode(&m, &CompressionMode::HReordered { potential: v.clone() }, 15, 0.0).unwrap();
    assert_eq!(a.order.as_deref(), Some(&(0..n).collect::<Vec<_>>()[..]));
    let (alpha, beta) = a.affine.unwrap();
    assert!((alpha - 0.01).abs() < 1e-12 && (beta - 0.5).abs() < 1e-12);
    let b = encode(&m, &CompressionMode::HOpt { potential: v, operators: Operators::Graph }, 15, 0.0).unwrap();
    let da = decode(&a, m.triangles(), None).unwrap();
    let db = decode(&b, m.triangles(), None).unwrap();
    assert!(max_abs_diff(&da.vertices, &db.vertices) < 1e-9);
}

#[test]
fn reordering_restores_original_indexing() {
    let m = plate();
    let n = m.n_vertices();
    let v: Vec<f64> = m.vertices().iter().map(|p| (3.0 * p[0]).sin() + p[1]).collect();
    let c = encode(&m, &CompressionMode::HReordered { potential: v }, n, 0.0).unwrap();
    let tris = transmitted_connectivity(&m, &c).unwrap();
    assert_ne!(&tris[..], m.triangles());
    let d = decode(&c, &tris, None).unwrap();
    let restored = d.in_original_order(c.order.as_deref());
    assert!(max_abs_diff(&restored, m.vertices()) < 1e-9);
}

#[test]
fn cotangent_hopt_needs_reference() {
    let m = plate();
    let c = encode(&m, &CompressionMode::HOpt { potential: vec![1.0; m.n_vertices()], operators: Operators::Cotangent }, 8, 0.0).unwrap();
    assert!(decode(&c, m.triangles(), None).is_err());
    let d = decode(&c, m.triangles(), Some(&m)).unwrap();
    assert_eq!(d.vertices.len(), m.n_vertices());
}

#[test]
fn mhb_rate_distortion_monotone() {
    for m in [plate(), shapes::cube(6).unwrap(), shapes::icosphere(2).unwrap()] {
        let ks = [2, 4, 8, 16, 32, 64, 100];
        let rows = rd_curve(&m, &RdConfig::mhb(), &ks, 1e-4).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].error <= w[0].error, "{:?}", rows);
            assert!(w[1].bits > w[0].bits);
        }
    }
}

#[test]
fn full_k_hits_quantization_floor() {
    let m = plate();
    let n = m.n_vertices();
    let q = 1e-3;
    let rows = rd_curve(&m, &RdConfig::mhb(), &[n], q).unwrap();
    // Orthonormal basis: per-coordinate error ≤ k·(q/2)² summed over coefficients.
    assert!(rows[0].error <= 3.0 * n as f64 * (q / 2.0).powi(2));
}

#[test]
fn bitrate_accounting() {
    let m = plate();
    let n = m.n_vertices() as u64;
    let c = encode(&m, &CompressionMode::HOpt { potential: vec![0.0; n as usize], operators: Operators::Graph }, 10, 0.0).unwrap();
    let b = c.bitrate();
    assert_eq!(b.coefficients, 3 * 10 * 64);
    assert_eq!(b.potential, 64 * n);
    assert_eq!(b.total(), HEADER_BITS + 1920 + 64 * n);
    assert_eq!(to_bytes(&c).len() as u64 * 8, b.total());
}

#[test]
fn container_roundtrip_all_modes() {
    let m = plate();
    let n = m.n_vertices();
    let v: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64).collect();
    for mode in [
        CompressionMode::Mhb,
        CompressionMode::HOpt { potential: v.clone(), operators: Operators::Graph },
        CompressionMode::HReordered { potential: v.clone() },
    ] {
        for q in [0.0, 1e-3] {
            let c = encode(&m, &mode, 9, q).unwrap();
            let bytes = to_bytes(&c);
            assert_eq!(&bytes[..4], MAGIC);
            let back = from_bytes(&bytes).unwrap();
            assert_eq!(back, c);
            assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
            let mut extra = bytes.clone();
            extra.push(0);
            assert!(from_bytes(&extra).is_err());
        }
    }
    let mut bad = to_bytes(&encode(&m, &CompressionMode::Mhb, 3, 0.0).unwrap());
    bad[0] = b'X';
    assert!(from_bytes(&bad).is_err());
}

proptest! {
    #[test]
    fn quantization_error_within_half_step(seed in 0u64..1000, q in 1e-4f64..1e-1) {
        let m = shapes::grid(5).unwrap();
        let n = m.n_vertices();
        let v: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64 / 97.0).collect();
        let mode = CompressionMode::HReordered { potential: v };
        let exact = encode(&m, &mode, 10, 0.0).unwrap().coefficient_table();
        let quant = encode(&m, &mode, 10, q).unwrap().coefficient_table();
        for (a, b) in exact.iter().zip(quant.iter()) {
            prop_assert!((a - b).abs() <= q / 2.0 + 1e-15);
        }
    }
}
