//! Builds both triangulations of the unit square, assembles the stiffness
//! and mass matrices for a variable coefficient and prints a short summary.
//!
//!     cargo run --release --example mesh_assembly -- 17

use eiguq::mesh::{Layout, Mesh, NodalField};

fn main() -> eiguq::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);

    for layout in [Layout::Diagonal, Layout::CrissCross] {
        let mesh = Mesh::build(n, layout)?;
        let mu = NodalField::from_fn(&mesh, |x, y| 1.0 + 0.5 * x * y);
        let a = mesh.assemble_stiffness(&mu);
        let m = mesh.assemble_mass(&NodalField::constant(&mesh, 1.0));
        let area: f64 = mesh.areas().iter().sum();
        println!(
            "{layout:?}: nodes={} triangles={} free={} h={:.4} area={area:.12} nnz(A)={} nnz(M)={}",
            mesh.n_nodes(),
            mesh.triangles().len(),
            mesh.n_free(),
            mesh.h(),
            a.nnz(),
            m.nnz(),
        );
    }
    Ok(())
}
