mod common;

use automaton_drive::autodiff::Tape;
use automaton_drive::baseline::BaselineConfig;
use automaton_drive::controller::{ControllerConfig, Variant, ZetaPenalty};
use automaton_drive::dmp::zeta_hinge_penalty_var;
use automaton_drive::model::ModelConfig;
use automaton_drive::perception::RasterSpec;
use automaton_drive::vagn;
use automaton_drive::Tensor;
use common::{demo_window, max_grad_error, model_grad_error, probe, scrambled, seeded, tiny_controller};

const TOL: f64 = 1e-5;

#[test]
fn matmul_and_transpose() {
    let e = max_grad_error(&[seeded(&[3, 4], 1), seeded(&[4, 2], 2)], |t, v| {
        let p = t.matmul(v[0], v[1]).unwrap();
        let p = t.transpose(p).unwrap();
        probe(t, p)
    });
    assert!(e < TOL, "{e}");
}

#[test]
fn conv2d_strides_and_padding() {
    for (stride, padding) in [(1, 0), (1, 1), (2, 1), (2, 0)] {
        let e = max_grad_error(&[seeded(&[2, 7, 6], 3), seeded(&[3, 2, 3, 3], 4), seeded(&[3], 5)], |t, v| {
            let c = t.conv2d(v[0], v[1], stride, padding).unwrap();
            let c = t.add_bias(c, v[2]).unwrap();
            probe(t, c)
        });
        assert!(e < TOL, "stride {stride} padding {padding}: {e}");
    }
}

#[test]
fn elementwise_ops() {
    let a = seeded(&[2, 3], 6);
    let b = seeded(&[2, 3], 7);
    let e = max_grad_error(&[a, b], |t, v| {
        let s = t.add(v[0], v[1]).unwrap();
        let d = t.sub(s, v[1]).unwrap();
        let m = t.mul(d, v[1]).unwrap();
        let q = t.div(m, v[0]).unwrap();
        let r = t.relu(q).unwrap();
        let g = t.sigmoid(v[0]).unwrap();
        let sq = t.sqrt(g).unwrap();
        let sc = t.scale(sq, -1.7).unwrap();
        let ac = t.add_const(sc, 0.3).unwrap();
        let cl = t.clamp(v[1], -0.6, 0.6).unwrap();
        let all = t.concat(&[r, ac, cl]).unwrap();
        probe(t, all)
    });
    assert!(e < TOL, "{e}");
}

#[test]
fn softmax_pooling_and_indexing() {
    let e = max_grad_error(&[seeded(&[4, 4], 8), seeded(&[3, 5, 5], 9)], |t, v| {
        let s = t.softmax_columns(v[0]).unwrap();
        let g = t.global_avg_pool(v[1]).unwrap();
        let r = t.reshape(s, &[16]).unwrap();
        let i = t.index(r, 5).unwrap();
        let j = t.index(g, 2).unwrap();
        let all = t.concat(&[r, g, i, j]).unwrap();
        probe(t, all)
    });
    assert!(e < TOL, "{e}");
}

#[test]
fn mse_against_both_arguments() {
    let e = max_grad_error(&[seeded(&[5], 10), seeded(&[5], 11)], |t, v| t.mse_loss(v[0], v[1]).unwrap());
    assert!(e < TOL, "{e}");
}

#[test]
fn automaton_step() {
    let w = seeded(&[2, 3, 3], 12);
    let pv = Tensor::vector(vec![0.7, 1.3]);
    // q stays fixed: perturbing it would leave the simplex
    let q = Tensor::vector(vec![0.2, 0.5, 0.3]);
    let e = max_grad_error(&[w, pv], |t, v| {
        let q = t.constant(q.clone());
        let next = vagn::step(t, v[0], v[1], q).unwrap();
        probe(t, next)
    });
    assert!(e < TOL, "{e}");
}

#[test]
fn damping_hinge_penalty() {
    // alpha 1, beta 4 gives zeta 0.25, inside the active region of the hinge
    let e = max_grad_error(&[Tensor::scalar(1.0), Tensor::scalar(4.0)], |t, v| {
        zeta_hinge_penalty_var(t, v[0], v[1], 0.8, 2.0).unwrap()
    });
    assert!(e < TOL, "{e}");
}

#[test]
fn full_controller_single_step() {
    let config = tiny_controller(Variant::Full);
    let model = scrambled(config.clone(), 3, 0.3);
    let (e, n) = model_grad_error(&model, &demo_window(&config, 12, 1), 1);
    assert!(n > 3000);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn unrolled_controller_with_damping_penalty() {
    let config = match tiny_controller(Variant::Full) {
        ModelConfig::Controller(c) => ModelConfig::Controller(ControllerConfig {
            zeta_penalty: Some(ZetaPenalty {
                zeta_min: 1.0,
                weight: 0.5,
            }),
            ..c
        }),
        _ => unreachable!(),
    };
    let model = scrambled(config.clone(), 4, 0.3);
    let (e, _) = model_grad_error(&model, &demo_window(&config, 20, 3), 2);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn ablation_variants() {
    for variant in [Variant::VagnOnly, Variant::DmpOnly] {
        let config = tiny_controller(variant);
        let model = scrambled(config.clone(), 5, 0.3);
        let (e, _) = model_grad_error(&model, &demo_window(&config, 8, 1), 3);
        assert!(e < 1e-4, "{variant:?}: {e}");
    }
}

#[test]
fn regressor_baseline() {
    let config = ModelConfig::Baseline(BaselineConfig {
        raster: RasterSpec {
            channels: 5,
            size: 16,
            resolution: 2.0,
        },
        hidden: 8,
        ..BaselineConfig::default()
    });
    let model = scrambled(config.clone(), 6, 0.2);
    let (e, _) = model_grad_error(&model, &demo_window(&config, 30, 1), 0);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn gradient_is_accumulated_across_reuse() {
    // x used three times: d/dx (x*x + 2x) = 2x + 2
    let mut tape = Tape::new();
    let x = tape.parameter(Tensor::scalar(1.5));
    let sq = tape.mul(x, x).unwrap();
    let two = tape.scale(x, 2.0).unwrap();
    let y = tape.add(sq, two).unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(x).data(), &[5.0]);
}
