//! Gradient descent against its recombined variant on a logistic problem.
//! Both stop at ‖∇L‖ ≤ 1e-3; the cost column counts full data passes.

use caratheodory::data::{gen_logistic_2d, LOGISTIC_THETA};
use caratheodory::model::ModelSpec;
use caratheodory::optim::{cagd, gd, CaGdConfig, DirectionOracle, HessianMode};

fn main() -> caratheodory::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let data = gen_logistic_2d(n, 5, LOGISTIC_THETA)?.with_intercept();
    let model = ModelSpec::logistic();

    for gamma in [0.01, 0.1] {
        let cfg = CaGdConfig { gamma, it_max_ca: CaGdConfig::logistic_it_max_ca(gamma), ..Default::default() };
        let plain = gd(&model, &data, &cfg)?;
        let fast = cagd(&model, &data, &cfg, &mut DirectionOracle::neg_gradient())?;
        let scalar = cagd(
            &model,
            &data,
            &CaGdConfig { hessian_mode: HessianMode::ScalarSecant, ..cfg.clone() },
            &mut DirectionOracle::neg_gradient(),
        )?;
        println!("N = {n}, gamma = {gamma}");
        for (name, t) in [("gd", &plain), ("cagd", &fast), ("cagd scalar", &scalar)] {
            let last = t.last().unwrap();
            println!(
                "  {name:<12} passes {:>9.2}  time {:>7.3}s  loss {:.6}  theta {:.4?}  recombinations {}",
                last.full_pass_equivalent,
                last.wall_clock,
                last.loss,
                last.theta.as_slice(),
                last.recombinations
            );
        }
        let longest = fast.phases.iter().map(|p| p.retained).max().unwrap_or(0);
        println!("  longest reduced phase kept {longest} steps, plain anchor steps {}", fast.plain_steps);
    }
    Ok(())
}
