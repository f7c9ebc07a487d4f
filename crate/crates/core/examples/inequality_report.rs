use nn_economy::agent::Hyperparameters;
use nn_economy::config::RunConfig;
use nn_economy::population::{simulate_population, PanelDataset, SimulationConfig};
use nn_economy::run::Model;
use nn_economy::stats::{self, View};

fn main() -> nn_economy::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let model = Model::solve(&RunConfig::default())?;
    let p = model.prices();
    let hp = Hyperparameters::low();
    let env = model.environment(&hp)?;
    let pop = simulate_population(&SimulationConfig::new(n, hp.clone(), 42), &env, &model.eq.policy, &model.eq.distribution)?;
    let panel = PanelDataset::from_population(&pop, hp.childhood);
    println!("view      gini   top1   top5   top20  h2m    p2     mpc    elasticity");
    for view in [View::Learned, View::Rational] {
        let w = stats::adult_wealth(&panel, view);
        let top = stats::top_shares(&w, &[0.01, 0.05, 0.2])?;
        println!(
            "{:<8} {:.3}  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}",
            format!("{view:?}"),
            stats::gini(&w)?,
            top[0],
            top[1],
            top[2],
            stats::h2m_frequency(&panel, view, p)?,
            stats::h2m_persistence(&panel, view, p, 2)?,
            stats::average_mpc(&panel, view)?,
            stats::sensitivity_elasticity(&panel, view, p, 0.6)?
        );
    }
    Ok(())
}
