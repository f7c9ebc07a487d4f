use nn_economy::config::RunConfig;
use nn_economy::population::PanelDataset;
use nn_economy::run::Model;
use nn_economy::stats::{self, MobilityAges, View};

fn main() -> nn_economy::Result<()> {
    let model = Model::solve(&RunConfig::default())?;
    let panel = PanelDataset::rational(2000, 100, 20, &model.eq.policy, &model.eq.distribution, 42)?;
    let m = stats::mobility_pairs(&panel, View::Learned, model.prices(), MobilityAges::default())?;
    println!("income rank-rank slope {:.3}", stats::rank_rank_slope(&m.parent_income, &m.child_income)?);
    println!("wealth rank-rank slope {:.3}", stats::rank_rank_slope(&m.parent_wealth, &m.child_wealth)?);
    println!("wealth Shorrocks index {:.3}", stats::shorrocks_index(&m.parent_wealth, &m.child_wealth, 5)?);
    for row in stats::transition_matrix(&m.parent_wealth, &m.child_wealth, 5)? {
        println!("  {}", row.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
