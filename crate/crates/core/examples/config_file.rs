use nn_economy::config::RunConfig;

const EXAMPLE: &str = "\
# coarser grid and a smaller population
grid_points = 150
n_agents = 500
preset = high
learn_freq = 3
seed = 7
";

fn main() -> nn_economy::Result<()> {
    let cfg = RunConfig::parse_str(EXAMPLE)?;
    print!("{}", cfg.to_text());
    println!("config hash {}", cfg.hash());
    match RunConfig::parse_str("grid_points = many\n") {
        Err(e) => println!("rejected (exit code {}): {e}", e.exit_code()),
        Ok(_) => println!("unexpectedly accepted"),
    }
    Ok(())
}
