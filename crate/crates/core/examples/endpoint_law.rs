//! The endpoint law of X_t: a non-central Wishart distribution. Prints the
//! closed-form mean, Laplace transform and density, and checks the Laplace
//! transform against exact samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wishart_bridge::harness::Moments;
use wishart_bridge::{SymMat, Variant, WishartParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = WishartParams::with_identity_a(3.0, SymMat::zeros(2), SymMat::identity(2))?;
    let t = 1.0;
    let law = params.endpoint_spec(t)?;
    println!("dof {}  scale {:?}", law.dof(), law.scale().to_row_major());
    println!("mean {:?}", law.mean().to_row_major());

    let y = SymMat::from_row_major(2, &[4.0, 0.5, 0.5, 3.0])?;
    println!("density at y = {:.6e}", law.density(&y, Default::default())?);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<SymMat> = (0..50_000).map(|_| law.sample(&mut rng).map(|x| x.into_sym())).collect::<Result<_, _>>()?;
    for s in [0.1, 0.25, 0.45] {
        let u = SymMat::scalar(2, s);
        let mut m = Moments::default();
        for x in &draws {
            m.push((-u.trace_product(x)).exp());
        }
        let e = m.estimate();
        let derived = law.laplace(&u, Variant::Derived)?;
        let printed = law.laplace(&u, Variant::Printed)?;
        println!(
            "u = {s}·I   MC {:.5} ± {:.5}   derived {derived:.5}   printed {printed:.5}",
            e.mean, e.stderr
        );
    }
    Ok(())
}
