mod common;

use common::{gradient_check, perturb_biases, random_tensor};
use emsr_core::neuralnet::{checkpoint, ops, Activation, Model, ModelConfig, Tensor4};
use emsr_core::Error;

fn toy_resnet(alpha: usize, activation: Activation) -> ModelConfig {
    ModelConfig {
        architecture: "resnet_t".into(),
        alpha,
        resnet_blocks: 1,
        resnet_width: 4,
        activation,
        init_seed: 3,
        ..ModelConfig::default()
    }
}

fn toy_srcnn(alpha: usize) -> ModelConfig {
    ModelConfig {
        architecture: "srcnn_t".into(),
        alpha,
        srcnn_kernels: [3, 1, 3],
        srcnn_widths: [4, 3],
        activation: Activation::Prelu,
        init_seed: 5,
        ..ModelConfig::default()
    }
}

#[test]
fn resnet_gradients_match_finite_differences() {
    for (alpha, act) in [(4, Activation::Prelu), (2, Activation::Relu)] {
        let mut model = Model::new(toy_resnet(alpha, act)).unwrap();
        perturb_biases(&mut model, 100);
        let x = random_tensor(1, [1, 1, 8, 8], 0.0, 1.0);
        let t = random_tensor(2, [1, 1, 8 * alpha, 8 * alpha], 0.0, 1.0);
        let r = gradient_check(&mut model, &x, &t, 1e-5);
        assert_eq!(r.checked, model.parameter_count());
        assert!(r.worst_rel < 1e-4, "alpha {alpha}: {r:?}");
    }
}

#[test]
fn srcnn_gradients_match_finite_differences() {
    let mut model = Model::new(toy_srcnn(2)).unwrap();
    perturb_biases(&mut model, 200);
    let x = random_tensor(3, [2, 1, 8, 8], 0.0, 1.0);
    let t = random_tensor(4, [2, 1, 16, 16], 0.0, 1.0);
    let r = gradient_check(&mut model, &x, &t, 1e-5);
    assert!(r.worst_rel < 1e-4, "{r:?}");
}

#[test]
fn output_is_alpha_times_input() {
    for cfg in [
        ModelConfig::srcnn(),
        ModelConfig::resnet(),
        ModelConfig { alpha: 2, ..ModelConfig::resnet() },
        ModelConfig { alpha: 2, ..toy_srcnn(2) },
    ] {
        let alpha = cfg.alpha;
        let model = Model::new(cfg).unwrap();
        let y = model.forward(&Tensor4::filled([1, 1, 16, 12], 0.5)).unwrap();
        assert_eq!(y.dims(), [1, 1, 16 * alpha, 12 * alpha]);
    }
}

#[test]
fn forward_is_deterministic_per_seed_and_item() {
    let a = Model::new(toy_resnet(4, Activation::Prelu)).unwrap();
    let b = Model::new(toy_resnet(4, Activation::Prelu)).unwrap();
    assert_eq!(a.params(), b.params());
    let x = random_tensor(9, [1, 1, 6, 6], 0.0, 1.0);
    let xx = Tensor4::stack(&[x.clone(), x.clone()]).unwrap();
    let y = a.forward(&xx).unwrap();
    assert_eq!(y.item(0), y.item(1));
    assert_eq!(y.item(0), a.forward(&x).unwrap().data());
}

fn zero_param(model: &mut Model, name: &str) {
    model.param_mut(name).unwrap().value.fill(0.0);
}

#[test]
fn zeroed_final_layer_exposes_the_skip_path() {
    let x = random_tensor(10, [1, 1, 5, 7], 0.0, 1.0);

    let mut srcnn = Model::new(toy_srcnn(2)).unwrap();
    zero_param(&mut srcnn, "reconstruct.weight");
    srcnn.param_mut("reconstruct.bias").unwrap().value.fill(0.125);
    assert!(srcnn.forward(&x).unwrap().data().iter().all(|v| *v == 0.125));

    let mut resnet = Model::new(toy_resnet(4, Activation::Prelu)).unwrap();
    zero_param(&mut resnet, "tail.weight");
    zero_param(&mut resnet, "tail.bias");
    assert_eq!(resnet.forward(&x).unwrap(), ops::bicubic_upsample(&x, 4).unwrap());
}

#[test]
fn zeroed_residual_blocks_reduce_to_the_upsampling_path() {
    let cfg = ModelConfig {
        resnet_blocks: 2,
        ..toy_resnet(4, Activation::Prelu)
    };
    let mut full = Model::new(cfg.clone()).unwrap();
    for i in 0..2 {
        for part in ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"] {
            zero_param(&mut full, &format!("block{i}.{part}"));
        }
    }
    let mut bare = Model::new(ModelConfig {
        resnet_blocks: 0,
        ..cfg
    })
    .unwrap();
    for p in bare.params_mut() {
        p.value = full.param(&p.name).unwrap().value.clone();
    }
    let x = random_tensor(11, [2, 1, 6, 6], 0.0, 1.0);
    assert_eq!(full.forward(&x).unwrap(), bare.forward(&x).unwrap());
}

#[test]
fn config_validation() {
    let bad_alpha = ModelConfig { alpha: 3, ..ModelConfig::resnet() };
    assert!(Model::new(bad_alpha).unwrap_err().is_config());
    let even = ModelConfig { srcnn_kernels: [9, 2, 5], ..ModelConfig::srcnn() };
    assert!(Model::new(even).unwrap_err().is_config());
    let unknown = ModelConfig { architecture: "rcan".into(), ..ModelConfig::resnet() };
    assert!(Model::new(unknown).unwrap_err().is_config());
}

#[test]
fn multi_channel_input_is_a_shape_error() {
    let m = Model::new(toy_resnet(2, Activation::Relu)).unwrap();
    assert!(matches!(m.forward(&Tensor4::zeros([1, 2, 4, 4])), Err(Error::Shape(_))));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [toy_srcnn(4), toy_resnet(2, Activation::Prelu)] {
        let model = Model::new(cfg).unwrap();
        let path = dir.path().join("m.emw");
        checkpoint::save(&model, &path).unwrap();
        let back = checkpoint::load(&path).unwrap();
        assert_eq!(back.config(), model.config());
        assert_eq!(back.params(), model.params());
        assert_eq!(checkpoint::encode(&back), std::fs::read(&path).unwrap());
    }
    let bytes = checkpoint::encode(&Model::new(toy_srcnn(2)).unwrap());
    assert!(matches!(checkpoint::decode(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
}
