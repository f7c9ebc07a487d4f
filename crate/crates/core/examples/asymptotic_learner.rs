use nn_economy::asymptotic::{run_asymptotic, AsymptoticConfig};
use nn_economy::config::RunConfig;
use nn_economy::run::Model;

fn main() -> nn_economy::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let model = Model::solve(&RunConfig::default())?;
    let cfg = AsymptoticConfig::new(n, 42);
    let env = model.environment(&cfg.hp)?;
    for run in run_asymptotic(&cfg, &env, &model.eq.policy, &model.eq.distribution)? {
        println!("agent {}", run.agent_id);
        for (age, gap) in run.gaps.iter().step_by(10) {
            println!("  age {age:>3}  gap {gap:.4}");
        }
        println!("  final gap {:.4}, max |Euler residual| {:.4}", run.final_gap, run.max_abs_euler_residual);
    }
    Ok(())
}
