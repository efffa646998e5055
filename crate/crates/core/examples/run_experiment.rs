//! Build an experiment config in code, run it, and read the results back
//! the way a plotting script would.

use caratheodory::bench::{run, ExperimentConfig};
use caratheodory::trace::Trace;

const CONFIG: &str = r#"
version = 1

[dataset.source]
kind = "generator"
name = "logistic_2d"
n = 5000
seed = 7

[model]
family = "logistic"

[[optimizers]]
kind = "gd"
[optimizers.config]
gamma = 0.1

[[optimizers]]
kind = "cagd"
[optimizers.config]
gamma = 0.1

[[optimizers]]
kind = "adam"
[optimizers.config]
learning_rate = 0.05
batch_size = 256
fpe_budget = 200.0
"#;

fn main() -> caratheodory::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let out = std::env::temp_dir().join("caratheodory_run_example");
    let summary = run(&cfg, &out)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);

    let f = std::fs::File::open(out.join("cagd.trace.csv")).map_err(|e| caratheodory::Error::Io { path: out.clone(), source: e })?;
    let t = Trace::read_csv(f)?;
    println!("cagd trace: {} rows, final loss {:.6}", t.records.len(), t.final_loss());
    Ok(())
}
