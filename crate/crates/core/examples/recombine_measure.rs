//! Shrink a 10 000-atom uniform measure to n + 1 atoms that keep the same
//! expectations of n test functions.

use caratheodory::recombination::{recombine, recombine_hierarchical, DiscreteMeasure, MomentMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> caratheodory::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (atoms, n) = (10_000, 5);
    // test functions: x, x², sin x, cos 3x, e^{-x} of a uniform sample
    let xs: Vec<f64> = (0..atoms).map(|_| rng.random_range(-2.0..2.0)).collect();
    let f = DMatrix::from_fn(atoms, n, |i, j| {
        let x = xs[i];
        [x, x * x, x.sin(), (3.0 * x).cos(), (-x).exp()][j]
    });
    let f = MomentMatrix::new(f)?;
    let mu = DiscreteMeasure::uniform(atoms);

    let t = std::time::Instant::now();
    let r = recombine_hierarchical(&f, &mu, 1e-9)?;
    println!("hierarchical: {} atoms left in {:.1?}, residual {:.2e}", r.measure.len(), t.elapsed(), r.moment_residual);
    for (atom, w) in r.measure.iter() {
        println!("  x = {:+.4}  weight {:.6}", xs[atom], w);
    }

    let small = DiscreteMeasure::uniform(500);
    let f_small = MomentMatrix::new(f.values().rows(0, 500).into_owned())?;
    let t = std::time::Instant::now();
    let flat = recombine(&f_small, &small, 1e-9)?;
    println!("sliding window on 500 atoms: {} left in {:.1?}", flat.measure.len(), t.elapsed());

    let target = mu.moments(&f);
    let got = r.measure.moments(&f);
    println!("moments   full: {:?}", target.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>());
    println!("moments reduced: {:?}", got.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>());
    Ok(())
}
