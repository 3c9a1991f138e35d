//! Regenerates the OFF files under `data/` from the deterministic shape
//! generators: `cargo run -p hamspec --example bundle_meshes`.

use std::path::Path;

use hamspec::mesh::{io, shapes};

fn main() -> hamspec::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir)?;
    let meshes = [
        ("square.off", shapes::grid(21)?),
        ("hand_plate.off", shapes::finger_plate(24, 20)?),
        ("sphere.off", shapes::icosphere(3)?),
        ("cube.off", shapes::cube(8)?),
        ("symmetric_plate.off", shapes::symmetric_plate(41, 21)?),
    ];
    for (name, mesh) in meshes {
        std::fs::write(dir.join(name), io::to_off(&mesh))?;
        println!("{name}: {} vertices, {} triangles", mesh.n_vertices(), mesh.n_triangles());
    }
    Ok(())
}
