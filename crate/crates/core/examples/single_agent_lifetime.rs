use nn_economy::agent::{simulate_lifetime, stream_rng, Agent, Childhood, Hyperparameters};
use nn_economy::config::RunConfig;
use nn_economy::run::Model;

fn main() -> nn_economy::Result<()> {
    let model = Model::solve(&RunConfig::default())?;
    let hp = Hyperparameters::low();
    let env = model.environment(&hp)?;
    let mut agent = Agent::new(hp.clone(), &env, stream_rng(42, 0))?;
    let life = simulate_lifetime(&mut agent, &env, Childhood::Rational(&model.eq.policy), (2.0, 10), &[])?;
    println!("age      a        z     a'       c    clip  euler");
    for r in life.records.iter().step_by(10) {
        println!(
            "{:>3} {:8.3} {:8.3} {:8.3} {:8.3} {:>5} {:8.4}",
            r.age,
            r.a,
            env.z(r.z_index),
            r.action,
            r.consumption,
            r.clip.code(),
            r.euler_error
        );
    }
    Ok(())
}
