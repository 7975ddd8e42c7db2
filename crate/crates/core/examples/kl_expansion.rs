//! Truncated Karhunen–Loève expansion of the Gaussian kernel on a mesh.

use eiguq::field::{build_kl, pivoted_cholesky, sample_stream, FieldId, KernelSpec};
use eiguq::mesh::{Layout, Mesh, NodalField};

fn main() -> eiguq::Result<()> {
    let mesh = Mesh::build(17, Layout::CrissCross)?;
    let kernel = KernelSpec::gaussian(20.0);
    let mass = mesh.assemble_mass_full(&NodalField::constant(&mesh, 1.0));

    let nodes = mesh.nodes();
    let entry = |i: usize, j: usize| {
        let (a, b) = (nodes[i], nodes[j]);
        kernel.evaluate(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
    };
    let chol = pivoted_cholesky(mesh.n_nodes(), entry, 1e-5, 2000)?;
    println!("pivoted Cholesky: rank {} residual trace {:.3e}", chol.rank(), chol.trace_error());
    for (k, t) in chol.trace_history.iter().enumerate().take(12) {
        println!("  after {k:2} pivots: {t:.3e}");
    }

    let kl = build_kl(&mesh, &kernel, &mass, 1e-5, 2000)?;
    println!("sigmas: {:?}", kl.sigmas.iter().map(|s| format!("{s:.3e}")).collect::<Vec<_>>());
    println!("sup bound of the fluctuation: {:.4}", kl.sup_bound());

    let mut rng = sample_stream(7, 0, FieldId::Mu);
    let (field, z) = kl.sample(&mut rng);
    println!("one draw: z[0]={:+.4}  min={:.4}", z[0], field.min());
    Ok(())
}
