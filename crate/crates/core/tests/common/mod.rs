#![allow(dead_code)]

use emsr_core::neuralnet::{ops, Model, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(seed: u64, dims: [usize; 4], lo: f64, hi: f64) -> Tensor4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    Tensor4::new(dims, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Below this magnitude gradients are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_name: String,
}

/// Compares every analytic parameter gradient of `MSE(model(x), target)`
/// with a central difference of step `h`.
pub fn gradient_check(model: &mut Model, x: &Tensor4, target: &Tensor4, h: f64) -> GradCheck {
    model.zero_grads();
    let (out, trace) = model.forward_train(x).unwrap();
    let (_, g) = ops::mse_loss(&out, target).unwrap();
    model.backward(&trace, &g).unwrap();

    let loss = |m: &Model| ops::mse_loss(&m.forward(x).unwrap(), target).unwrap().0;
    let mut report = GradCheck {
        checked: 0,
        worst_rel: 0.0,
        worst_name: String::new(),
    };
    for pi in 0..model.params().len() {
        for k in 0..model.params()[pi].value.len() {
            let analytic = model.params()[pi].grad.data()[k];
            let orig = model.params()[pi].value.data()[k];
            model.params_mut()[pi].value.data_mut()[k] = orig + h;
            let up = loss(model);
            model.params_mut()[pi].value.data_mut()[k] = orig - h;
            let down = loss(model);
            model.params_mut()[pi].value.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
            report.checked += 1;
            if rel > report.worst_rel {
                report.worst_rel = rel;
                report.worst_name = format!("{}[{k}]", model.params()[pi].name);
            }
        }
    }
    report
}

/// Nudges every bias so no pre-activation sits near the ReLU kink.
pub fn perturb_biases(model: &mut Model, seed: u64) {
    for (i, p) in model.params_mut().iter_mut().enumerate() {
        if p.name.ends_with(".bias") {
            let r = random_tensor(seed + i as u64, p.value.dims(), -0.05, 0.05);
            p.value = r;
        }
    }
}

use emsr_core::grid::{Compound, EmissionGrid, GeoBounds, GridMeta, Timestamp};

pub fn meta(h: usize, w: usize) -> GridMeta {
    GridMeta {
        bounds: GeoBounds::centered(h, w, 0.25),
        timestamp: Timestamp::new(2010, 1).unwrap(),
        compound: Compound::Isoprene,
    }
}

pub fn grid(h: usize, w: usize, values: Vec<f64>) -> EmissionGrid {
    EmissionGrid::new(h, w, values, meta(h, w)).unwrap()
}

/// Sparse log-uniform field: each cell is zero with probability `p_zero`,
/// otherwise `10^U(lo, hi)`.
pub fn sparse_values(seed: u64, n: usize, p_zero: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < p_zero {
                0.0
            } else {
                10f64.powf(rng.random_range(lo..hi))
            }
        })
        .collect()
}
