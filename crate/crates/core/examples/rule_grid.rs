//! Every partition / selection / direction rule on one least-squares
//! problem, with and without recombination, at a fixed pass budget.

use caratheodory::bcd::{cabcd, BcdConfig, PlanSource, RuleId};
use caratheodory::data::gen_dataset_a;
use caratheodory::model::ModelSpec;

fn main() -> caratheodory::Result<()> {
    let budget: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let (data, _) = gen_dataset_a(5_000, 20, 3)?;
    let model = ModelSpec::least_squares();
    let cfg = BcdConfig { fpe_budget: Some(budget), eps_grad: 0.0, seed: 3, ..Default::default() };

    let mut rows = Vec::new();
    for rule in RuleId::all() {
        for ca in [false, true] {
            let label = rule.label(ca);
            match cabcd(&model, &data, &cfg, &PlanSource::rule(rule, 5), ca) {
                Ok(t) => rows.push((label, t.best_loss_within(budget))),
                Err(e) => println!("{label:<22} skipped: {e}"),
            }
        }
    }
    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (label, loss) in rows {
        println!("{label:<22} {loss:.6}");
    }
    Ok(())
}
