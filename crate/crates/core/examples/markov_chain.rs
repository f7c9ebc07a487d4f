use nn_economy::economy::labor_supply;
use nn_economy::markov::{ArOneSpec, MarkovChain};

fn main() -> nn_economy::Result<()> {
    let chain = MarkovChain::tauchen(&ArOneSpec::baseline())?;
    let pi = chain.stationary_distribution()?;
    println!("{} states, z in [{:.4}, {:.4}]", chain.n_states(), chain.z_min(), chain.z(chain.n_states() - 1));
    for (i, (z, p)) in chain.states().iter().zip(&pi).enumerate() {
        println!("{i:>2}  z = {z:8.4}  stationary mass {p:.5}");
    }
    println!("aggregate labor supply {:.6}", labor_supply(&chain)?);
    Ok(())
}
