use nn_economy::agent::Hyperparameters;
use nn_economy::config::RunConfig;
use nn_economy::population::{simulate_population, simulate_second_generation, PanelDataset, SimulationConfig};
use nn_economy::run::Model;
use nn_economy::stats::{self, View};

fn main() -> nn_economy::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let model = Model::solve(&RunConfig::default())?;
    let hp = Hyperparameters::low();
    let env = model.environment(&hp)?;
    let cfg = SimulationConfig::new(n, hp.clone(), 42);
    let parents = PanelDataset::from_population(
        &simulate_population(&cfg, &env, &model.eq.policy, &model.eq.distribution)?,
        hp.childhood,
    );
    let children = PanelDataset::from_population(
        &simulate_second_generation(&parents, &cfg, &env, &model.eq.policy)?,
        hp.childhood,
    );
    for (name, panel) in [("parents", &parents), ("children", &children)] {
        let w = stats::adult_wealth(panel, View::Learned);
        println!("{name:>8}: wealth Gini {:.4}, mean MPC {:.4}", stats::gini(&w)?, stats::average_mpc(panel, View::Learned)?);
    }
    Ok(())
}
