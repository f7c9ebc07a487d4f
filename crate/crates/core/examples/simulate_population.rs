use std::time::Instant;

use nn_economy::agent::Hyperparameters;
use nn_economy::config::RunConfig;
use nn_economy::population::{diversion_by_age, simulate_population, PanelDataset, SimulationConfig};
use nn_economy::run::Model;

fn main() -> nn_economy::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let model = Model::solve(&RunConfig::default())?;
    let hp = Hyperparameters::low();
    let env = model.environment(&hp)?;
    let start = Instant::now();
    let pop = simulate_population(&SimulationConfig::new(n, hp.clone(), 42), &env, &model.eq.policy, &model.eq.distribution)?;
    let panel = PanelDataset::from_population(&pop, hp.childhood);
    println!("{n} agents in {:.1?}, {} panel rows", start.elapsed(), panel.rows.len());
    println!("age  mean diversion  sd");
    for (age, mean, sd) in diversion_by_age(&panel).into_iter().step_by(10) {
        println!("{age:>3}  {mean:14.4}  {sd:.4}");
    }
    Ok(())
}
