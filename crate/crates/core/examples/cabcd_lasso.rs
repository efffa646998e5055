//! Block coordinate descent with and without recombination on a sparse
//! LASSO problem, Gauss-Southwell blocks of size 2 and momentum directions.

use caratheodory::bcd::{cabcd, BcdConfig, PlanSource};
use caratheodory::data::gen_dataset_a;
use caratheodory::model::ModelSpec;
use caratheodory::optim::OracleKind;

fn main() -> caratheodory::Result<()> {
    let (data, theta_x) = gen_dataset_a(20_000, 50, 1)?;
    let model = ModelSpec::lasso(0.01);
    let cfg = BcdConfig {
        oracle: OracleKind::Momentum { beta: 0.9 },
        fpe_budget: Some(100.0),
        eps_grad: 0.0,
        ..Default::default()
    };
    let plan = PlanSource::gs(2);
    let plain = cabcd(&model, &data, &cfg, &plan, false)?;
    let fast = cabcd(&model, &data, &cfg, &plan, true)?;

    println!("nonzeros in the generating parameter: {}", theta_x.iter().filter(|v| **v != 0.0).count());
    println!("{:>8} {:>12} {:>12}", "passes", "BCD", "CaBCD");
    for budget in [2.0, 5.0, 10.0, 25.0, 50.0, 100.0] {
        println!("{budget:>8} {:>12.6} {:>12.6}", plain.best_loss_within(budget), fast.best_loss_within(budget));
    }
    let target = plain.final_loss();
    if let Some(r) = fast.first_reaching(target * 1.01) {
        println!(
            "CaBCD within 1% of BCD's final loss after {:.2} passes (BCD used {:.2})",
            r.full_pass_equivalent,
            plain.full_passes()
        );
    }
    println!("recombinations: {}, time {:.2}s vs {:.2}s", fast.recombinations(), fast.last().unwrap().wall_clock, plain.last().unwrap().wall_clock);
    Ok(())
}
