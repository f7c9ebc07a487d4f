use nn_economy::agent::Preset;
use nn_economy::config::RunConfig;
use nn_economy::population::{simulate_population, PanelDataset, SimulationConfig};
use nn_economy::run::Model;
use nn_economy::stats;

fn main() -> nn_economy::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let model = Model::solve(&RunConfig::default())?;
    for preset in [Preset::Low, Preset::High] {
        let hp = preset.hyperparameters();
        let env = model.environment(&hp)?;
        let pop = simulate_population(&SimulationConfig::new(n, hp.clone(), 42), &env, &model.eq.policy, &model.eq.distribution)?;
        let panel = PanelDataset::from_population(&pop, hp.childhood);
        let (u_nn, u_re) = stats::discounted_utilities(&panel, model.prefs, hp.childhood)?;
        let (cv, ev) = stats::welfare_variation(u_nn, u_re, model.prefs.gamma)?;
        println!("{:>4}: CV {cv:.4}, EV {ev:.4}", preset.name());
    }
    Ok(())
}
