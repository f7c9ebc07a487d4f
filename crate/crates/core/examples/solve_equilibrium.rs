use std::time::Instant;

use nn_economy::economy::{Preferences, Technology};
use nn_economy::markov::{ArOneSpec, MarkovChain};
use nn_economy::rational::{find_equilibrium, AssetGrid};

fn main() -> nn_economy::Result<()> {
    let chain = MarkovChain::tauchen(&ArOneSpec::baseline())?;
    let grid = AssetGrid::baseline();
    let start = Instant::now();
    let eq = find_equilibrium(Technology::baseline(), Preferences::baseline(), &chain, &grid)?;
    println!("r = {:.6}, w = {:.6}", eq.prices.r, eq.prices.w);
    println!("K = {:.6} (supply {:.6}), L = {:.6}", eq.capital_demand, eq.capital_supply, eq.labor);
    println!("bisection steps {}, solved in {:.1?}", eq.bisection_steps, start.elapsed());
    Ok(())
}
