//! Reverse-mode gradients on a small expression, then Adam fitting a line.
//!
//!     cargo run --example autodiff

use automaton_drive::autodiff::Tape;
use automaton_drive::optim::{OptimizerConfig, OptimizerState};
use automaton_drive::params::ParamSet;
use automaton_drive::Tensor;

fn main() -> automaton_drive::Result<()> {
    // f(x, y) = sigmoid(x * y) + relu(x - y)
    let mut tape = Tape::new();
    let x = tape.parameter(Tensor::scalar(0.8));
    let y = tape.parameter(Tensor::scalar(-0.4));
    let xy = tape.mul(x, y)?;
    let s = tape.sigmoid(xy)?;
    let d = tape.sub(x, y)?;
    let r = tape.relu(d)?;
    let f = tape.add(s, r)?;
    let g = tape.backward(f)?;
    println!("f = {:.6}", tape.scalar_value(f)?);
    println!("df/dx = {:.6}  df/dy = {:.6}", g.get(x).item()?, g.get(y).item()?);

    // least squares fit of y = 2x - 1 as [x, 1] @ theta
    let xs: Vec<f64> = (0..20).map(|i| i as f64 / 10.0 - 1.0).collect();
    let design: Vec<f64> = xs.iter().flat_map(|x| [*x, 1.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
    let mut params = ParamSet::new();
    params.insert("theta", Tensor::zeros(&[2, 1]));
    let mut opt = OptimizerState::new(
        OptimizerConfig {
            learning_rate: 0.05,
            ..OptimizerConfig::default()
        },
        &params,
    );
    for it in 0..400 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant(Tensor::matrix(20, 2, design.clone())?);
        let pred = tape.matmul(x, bound.get("theta")?)?;
        let pred = tape.reshape(pred, &[20])?;
        let target = tape.constant(Tensor::vector(ys.clone()));
        let loss = tape.mse_loss(pred, target)?;
        let grads = bound.collect(&tape.backward(loss)?);
        opt.step(&mut params, &grads)?;
        if it % 100 == 0 {
            println!("iter {it:>3}  loss {:.6}", tape.scalar_value(loss)?);
        }
    }
    let theta = params.get("theta").unwrap().data();
    println!("slope {:.4}  intercept {:.4}", theta[0], theta[1]);
    Ok(())
}
