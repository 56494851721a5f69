//! Visual automaton: input-conditioned transition synthesis and
//! differentiable propagation of the automaton state distribution.
//!
//! Transition matrices follow the column-source convention: entry `(i, j)`
//! is the probability of moving from state `j` to state `i`. Columns sum to
//! one, so `q_t = T q_{t-1}` stays on the probability simplex.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Accepted deviation of an incoming distribution from the simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Learnable transition weights, shape `[M, N, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTensor {
    weights: Tensor,
}

impl TransitionTensor {
    pub fn new(weights: Tensor) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 3 || s[1] != s[2] || s[1] < 2 {
            return Err(Error::shape(format!("transition tensor must be [M, N, N], got {s:?}")));
        }
        if !weights.is_finite() {
            return Err(Error::NonFinite("transition tensor".into()));
        }
        Ok(TransitionTensor { weights })
    }

    pub fn zeros(predicates: usize, states: usize) -> Result<Self> {
        TransitionTensor::new(Tensor::zeros(&[predicates, states, states]))
    }

    pub fn predicates(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn states(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    /// Column-stochastic transition matrix for predicate activations `pv`.
    pub fn transition_matrix(&self, pv: &[f64]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let w = tape.constant(self.weights.clone());
        let p = tape.constant(Tensor::vector(pv.to_vec()));
        let t = transition_matrix(&mut tape, w, p)?;
        Ok(tape.value(t).clone())
    }

    pub fn step(&self, pv: &[f64], q_prev: &AutomatonState) -> Result<AutomatonState> {
        let mut tape = Tape::new();
        let w = tape.constant(self.weights.clone());
        let p = tape.constant(Tensor::vector(pv.to_vec()));
        let q = tape.constant(Tensor::vector(q_prev.probs().to_vec()));
        let next = step(&mut tape, w, p, q)?;
        AutomatonState::new(tape.value(next).data().to_vec())
    }
}

/// Probability distribution over automaton states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomatonState(Vec<f64>);

impl AutomatonState {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs)?;
        Ok(AutomatonState(probs))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("automaton needs at least 2 states, got {n}")));
        }
        Ok(AutomatonState(vec![1.0 / n as f64; n]))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.0.clone())
    }
}

fn check_simplex(q: &[f64]) -> Result<()> {
    let sum: f64 = q.iter().sum();
    if q.iter().any(|p| !p.is_finite() || *p < -SIMPLEX_TOLERANCE) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::Domain(format!("state distribution off the simplex (sum {sum})")));
    }
    Ok(())
}

/// How the state distribution is initialised before a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QInit {
    #[default]
    Uniform,
    /// Flat Dirichlet sample.
    Random,
}

pub fn init_state(n: usize, mode: QInit, seed: u64) -> Result<AutomatonState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_state_with(n, mode, &mut rng)
}

pub fn init_state_with<R: rand::Rng + ?Sized>(n: usize, mode: QInit, rng: &mut R) -> Result<AutomatonState> {
    let uniform = AutomatonState::uniform(n)?;
    match mode {
        QInit::Uniform => Ok(uniform),
        QInit::Random => {
            // normalised i.i.d. Exp(1) draws are Dirichlet(1, ..., 1)
            let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).map(|x: f64| x.max(1e-300)).collect();
            let total: f64 = draws.iter().sum();
            Ok(AutomatonState(draws.into_iter().map(|x| x / total).collect()))
        }
    }
}

/// `W^{pv} = sum_i pv_i W_i` for `W: [M, N, N]` and `pv: [M]`.
pub fn combine_transitions(tape: &mut Tape, w: Var, pv: Var) -> Result<Var> {
    let ws = tape.value(w).shape().to_vec();
    let m = tape.value(pv).numel();
    if ws.len() != 3 || ws[0] != m || ws[1] != ws[2] {
        return Err(Error::shape(format!(
            "transitions {:?} with {} predicates",
            ws, m
        )));
    }
    let n = ws[1];
    let flat = tape.reshape(w, &[m, n * n])?;
    let row = tape.reshape(pv, &[1, m])?;
    let combined = tape.matmul(row, flat)?;
    tape.reshape(combined, &[n, n])
}

/// `softmax_columns(relu(W^{pv}))`.
pub fn transition_matrix(tape: &mut Tape, w: Var, pv: Var) -> Result<Var> {
    let combined = combine_transitions(tape, w, pv)?;
    let positive = tape.relu(combined)?;
    tape.softmax_columns(positive)
}

/// One automaton update `q_t = T(pv) q_{t-1}`; `q_prev` has shape `[N]`.
pub fn step(tape: &mut Tape, w: Var, pv: Var, q_prev: Var) -> Result<Var> {
    check_simplex(tape.value(q_prev).data())?;
    let t = transition_matrix(tape, w, pv)?;
    let n = tape.value(t).shape()[0];
    if tape.value(q_prev).numel() != n {
        return Err(Error::shape(format!(
            "state of length {} for {} automaton states",
            tape.value(q_prev).numel(),
            n
        )));
    }
    let col = tape.reshape(q_prev, &[n, 1])?;
    let next = tape.matmul(t, col)?;
    tape.reshape(next, &[n])
}

/// Writes one transition matrix as `step,from,to,probability` rows.
pub fn write_transition_rows<W: Write>(w: &mut csv::Writer<W>, step: usize, matrix: &Tensor) -> Result<()> {
    let n = matrix.shape()[0];
    for from in 0..n {
        for to in 0..n {
            w.write_record([
                step.to_string(),
                from.to_string(),
                to.to_string(),
                matrix.data()[to * n + from].to_string(),
            ])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn one_hot_selects_and_zero_clears() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..18).map(f64::from).collect();
        let w = tape.constant(Tensor::new(vec![2, 3, 3], data.clone()).unwrap());
        let e1 = tape.constant(Tensor::vector(vec![0.0, 1.0]));
        let c = combine_transitions(&mut tape, w, e1).unwrap();
        assert_eq!(tape.value(c).data(), &data[9..]);
        let z = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let c = combine_transitions(&mut tape, w, z).unwrap();
        assert!(tape.value(c).data().iter().all(|v| *v == 0.0));
        let bad = tape.constant(Tensor::vector(vec![1.0; 3]));
        assert!(combine_transitions(&mut tape, w, bad).is_err());
    }

    #[test]
    fn zero_weights_give_uniform_next_state() {
        let t = TransitionTensor::zeros(3, 4).unwrap();
        let m = t.transition_matrix(&[0.3, -1.0, 2.0]).unwrap();
        assert!(m.data().iter().all(|v| *v == 0.25));
        let q = AutomatonState::new(vec![0.7, 0.1, 0.2, 0.0]).unwrap();
        let next = t.step(&[0.3, -1.0, 2.0], &q).unwrap();
        assert!(next.probs().iter().all(|v| (*v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn closed_form_two_state_step() {
        // W^{pv} column 0 = [ln 2, 0]
        let w = Tensor::new(vec![1, 2, 2], vec![2f64.ln(), 0.0, 0.0, 0.0]).unwrap();
        let t = TransitionTensor::new(w).unwrap();
        let q = t.step(&[1.0], &AutomatonState::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert!((q.probs()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((q.probs()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn off_simplex_input_is_rejected() {
        let t = TransitionTensor::zeros(1, 2).unwrap();
        let mut tape = Tape::new();
        let w = tape.constant(t.weights().clone());
        let p = tape.constant(Tensor::vector(vec![1.0]));
        let q = tape.constant(Tensor::vector(vec![0.7, 0.7]));
        assert!(matches!(step(&mut tape, w, p, q), Err(Error::Domain(_))));
        assert!(AutomatonState::new(vec![1.2, -0.2]).is_err());
    }

    #[test]
    fn random_steps_stay_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut q = AutomatonState::uniform(5).unwrap();
        for _ in 0..1000 {
            let w = Tensor::new(vec![3, 5, 5], (0..75).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap();
            let t = TransitionTensor::new(w).unwrap();
            let pv: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            q = t.step(&pv, &q).unwrap();
            assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(q.probs().iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn init_modes() {
        let u = init_state(5, QInit::Uniform, 0).unwrap();
        assert_eq!(u.probs(), &[0.2; 5]);
        let r = init_state(6, QInit::Random, 42).unwrap();
        assert!((r.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r.probs().iter().all(|p| *p > 0.0));
        assert_eq!(r, init_state(6, QInit::Random, 42).unwrap());
        assert_ne!(r, init_state(6, QInit::Random, 43).unwrap());
        assert!(init_state(1, QInit::Uniform, 0).is_err());
    }

    #[test]
    fn fixed_input_converges_to_stationary_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Tensor::new(vec![2, 4, 4], (0..32).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let t = TransitionTensor::new(w).unwrap();
        let pv = [0.8, -0.4];
        let mut q = init_state(4, QInit::Random, 9).unwrap();
        let mut residual = f64::INFINITY;
        for _ in 0..1000 {
            let next = t.step(&pv, &q).unwrap();
            residual = next.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum();
            q = next;
        }
        assert!(residual < 1e-8);
    }

    #[test]
    fn transition_rows_are_written_from_source_state() {
        let m = Tensor::matrix(2, 2, vec![0.9, 0.3, 0.1, 0.7]).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        write_transition_rows(&mut w, 4, &m).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "4,0,0,0.9");
        assert_eq!(rows[1], "4,0,1,0.1");
    }
}
