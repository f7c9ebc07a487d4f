use nn_economy::agent::stream_rng;
use nn_economy::net::Mlp;

fn main() -> nn_economy::Result<()> {
    let mut rng = stream_rng(42, 0);
    let net = Mlp::init(&[8, 8], &mut rng)?;
    let (a, z) = (5.0, 1.2);
    let grad = net.grad(a, z);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..net.n_params() {
        let (mut up, mut down) = (net.clone(), net.clone());
        up.params_mut()[k] += h;
        down.params_mut()[k] -= h;
        let fd = (up.forward(a, z)? - down.forward(a, z)?) / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / fd.abs().max(1e-8));
    }
    println!("{} parameters, output {:.6}", net.n_params(), net.forward(a, z)?);
    println!("largest relative gap between backprop and finite differences: {worst:.2e}");
    Ok(())
}
