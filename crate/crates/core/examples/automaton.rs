//! A three-state automaton whose transition matrix is synthesised from two
//! predicate activations. Switching the active predicate moves the state
//! distribution to a different stationary point.
//!
//!     cargo run --example automaton

use automaton_drive::vagn::{AutomatonState, TransitionTensor};
use automaton_drive::Tensor;

fn main() -> automaton_drive::Result<()> {
    // W[m][to][from]: predicate 0 pushes every state to state 0, predicate 1 to state 2
    let mut w = vec![0.0; 2 * 3 * 3];
    for from in 0..3 {
        w[from] = 4.0;
        w[(3 + 2) * 3 + from] = 4.0;
    }
    let transitions = TransitionTensor::new(Tensor::new(vec![2, 3, 3], w)?)?;

    let mut q = AutomatonState::uniform(3)?;
    for t in 0..12 {
        let pv = if t < 6 { [1.0, 0.0] } else { [0.0, 1.0] };
        q = transitions.step(&pv, &q)?;
        let probs: Vec<String> = q.probs().iter().map(|p| format!("{p:.3}")).collect();
        println!("t={t:>2} pv={pv:?} q=[{}]", probs.join(", "));
    }
    println!("transition matrix for pv = [0.5, 0.5]:");
    let m = transitions.transition_matrix(&[0.5, 0.5])?;
    for row in m.data().chunks(3) {
        println!("  {row:.3?}");
    }
    Ok(())
}
