mod common;

use common::{fixture_matrix, fixture_values, rbm_energy_loops, spin_states};
use nalgebra::{DMatrix, DVector};
use rgflow::dataset::{Dataset, ValueRange};
use rgflow::ising::{generate_ising_dataset, IsingSamplerConfig};
use rgflow::rbm::{
    cd1_step, decode_params, encode_params, hidden_activation_prob, hidden_probs_batch,
    load_params, propagate, rbm_energy, reconstruct, reconstruction_error, sample_binary,
    save_params, train, train_stacked, visible_activation_prob, visible_probs_batch,
    write_params_csv, InitMode, RbmParams, StackFeed, StackLayer, TrainConfig,
};
use rgflow::rng;

fn params(seed: u64, nv: usize, nh: usize) -> RbmParams {
    RbmParams::unstructured(
        fixture_matrix(seed, nv, nh),
        DVector::from_vec(fixture_values(seed + 100, nv)),
        DVector::from_vec(fixture_values(seed + 200, nh)),
    )
    .unwrap()
}

fn spins(seed: u64, n: usize) -> Vec<f64> {
    fixture_values(seed, n)
        .into_iter()
        .map(|x| if x < 0.0 { -1.0 } else { 1.0 })
        .collect()
}

#[test]
fn energy_matches_loop_oracle() {
    for seed in 0..10 {
        let p = params(seed, 4, 2);
        let (v, h) = (spins(seed + 7, 4), spins(seed + 8, 2));
        let lib = rbm_energy(&v, &h, &p).unwrap();
        let oracle = rbm_energy_loops(
            p.weights(),
            p.visible_bias().as_slice(),
            p.hidden_bias().as_slice(),
            &v,
            &h,
        );
        assert!((lib - oracle).abs() < 1e-12);
    }
    assert!(rbm_energy(&[1.0; 3], &[1.0; 2], &params(0, 4, 2)).is_err());
}

#[test]
fn conditionals_match_loop_oracle() {
    let p = params(3, 9, 4);
    let v = spins(4, 9);
    let h = spins(5, 4);
    let ph = hidden_activation_prob(&v, &p).unwrap();
    for a in 0..4 {
        let mut field = p.hidden_bias()[a];
        for i in 0..9 {
            field += p.weights()[(i, a)] * v[i];
        }
        assert!((ph[a] - 0.5 * (1.0 + field.tanh())).abs() < 1e-15);
    }
    let pv = visible_activation_prob(&h, &p).unwrap();
    for i in 0..9 {
        let mut field = p.visible_bias()[i];
        for a in 0..4 {
            field += p.weights()[(i, a)] * h[a];
        }
        assert!((pv[i] - 0.5 * (1.0 + field.tanh())).abs() < 1e-15);
    }
    let batch = DMatrix::from_row_slice(1, 9, &v);
    assert_eq!(hidden_probs_batch(&batch, &p).row(0).transpose(), ph);
}

#[test]
fn transpose_symmetry_of_conditionals() {
    let a = fixture_matrix(9, 4, 4);
    let w = (&a + a.transpose()) / 2.0;
    let p = RbmParams::new(w, DVector::zeros(4), DVector::zeros(4), 2, 2).unwrap();
    let x = spins(10, 4);
    assert_eq!(
        visible_activation_prob(&x, &p).unwrap(),
        hidden_activation_prob(&x, &p).unwrap()
    );
}

#[test]
fn global_flip_keeps_coupling_and_negates_bias_terms() {
    let p = params(11, 4, 3);
    let zero_bias =
        RbmParams::unstructured(p.weights().clone(), DVector::zeros(4), DVector::zeros(3)).unwrap();
    for s in 0..8 {
        let (v, h) = (spins(s, 4), spins(s + 50, 3));
        let (nv, nh): (Vec<f64>, Vec<f64>) =
            (v.iter().map(|x| -x).collect(), h.iter().map(|x| -x).collect());
        let coupling = rbm_energy(&v, &h, &zero_bias).unwrap();
        assert!((coupling - rbm_energy(&nv, &nh, &zero_bias).unwrap()).abs() < 1e-12);
        let bias = rbm_energy(&v, &h, &p).unwrap() - coupling;
        let flipped_bias = rbm_energy(&nv, &nh, &p).unwrap() - coupling;
        assert!((bias + flipped_bias).abs() < 1e-12);
    }
}

#[test]
fn marginal_over_hidden_matches_closed_form() {
    // Σ_h e^{-E(v,h)} = e^{b_v·v} Π_a 2 cosh((Wᵀv + b_h)_a)
    let p = params(21, 3, 2);
    let w = p.weights();
    for v in spin_states(3) {
        let summed: f64 = spin_states(2)
            .iter()
            .map(|h| (-rbm_energy(&v, h, &p).unwrap()).exp())
            .sum();
        let vb: f64 = (0..3).map(|i| v[i] * p.visible_bias()[i]).sum();
        let mut closed = vb.exp();
        for a in 0..2 {
            let f: f64 = (0..3).map(|i| w[(i, a)] * v[i]).sum::<f64>() + p.hidden_bias()[a];
            closed *= 2.0 * f.cosh();
        }
        assert!((summed - closed).abs() / closed < 1e-12);
    }
}

fn flat_rows(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

#[test]
fn cd_step_replays_from_public_pieces() {
    let p = params(30, 9, 4);
    let batch = DMatrix::from_row_slice(5, 9, &spins(31, 45));
    let grad = cd1_step(&batch, &p, &mut rng::seeded(8)).unwrap();

    let mut r = rng::seeded(8);
    let hd = sample_binary(&flat_rows(&hidden_probs_batch(&batch, &p)), &mut r).unwrap();
    let hd = DMatrix::from_row_slice(5, 4, &hd);
    let vm = sample_binary(&flat_rows(&visible_probs_batch(&hd, &p)), &mut r).unwrap();
    let vm = DMatrix::from_row_slice(5, 9, &vm);
    let hm = sample_binary(&flat_rows(&hidden_probs_batch(&vm, &p)), &mut r).unwrap();
    let hm = DMatrix::from_row_slice(5, 4, &hm);

    let mut dw = DMatrix::zeros(9, 4);
    for s in 0..5 {
        for i in 0..9 {
            for a in 0..4 {
                dw[(i, a)] += (batch[(s, i)] * hd[(s, a)] - vm[(s, i)] * hm[(s, a)]) / 5.0;
            }
        }
    }
    assert!((grad.weights - dw).amax() < 1e-12);
    // bias terms are differences of empirical means
    for i in 0..9 {
        let d: f64 = (0..5).map(|s| batch[(s, i)] - vm[(s, i)]).sum::<f64>() / 5.0;
        assert!((grad.visible_bias[i] - d).abs() < 1e-12);
    }
    for a in 0..4 {
        let d: f64 = (0..5).map(|s| hd[(s, a)] - hm[(s, a)]).sum::<f64>() / 5.0;
        assert!((grad.hidden_bias[a] - d).abs() < 1e-12);
    }
    assert!(cd1_step(&DMatrix::zeros(0, 9), &p, &mut rng::seeded(0)).is_err());
}

fn ising_small() -> Dataset {
    generate_ising_dataset(&IsingSamplerConfig {
        side_length: 8,
        temperature: 3.0,
        burn_in_sweeps: 200,
        sweeps_per_sample: 2,
        sample_count: 400,
        rng_seed: 5,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn training_is_reproducible_and_lowers_error() {
    let ds = ising_small();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        batch_size: 50,
        epochs: 15,
        rng_seed: 4,
        init_mode: InitMode::Xavier,
    };
    let init = RbmParams::xavier(8, 4, &mut rng::seeded(1));
    let a = train(&ds, &cfg, &init).unwrap();
    let b = train(&ds, &cfg, &init).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.history.len(), 16);
    let first = a.history[0].train_error;
    let last = a.history.last().unwrap().train_error;
    assert!(last < first, "{first} -> {last}");
    assert!((a.history[0].train_error - reconstruction_error(&ds, &init).unwrap()).abs() < 1e-15);
    let zero = train(&ds, &TrainConfig { epochs: 0, ..cfg }, &init).unwrap();
    assert_eq!(zero.params, init);
    assert!(train(&ds, &cfg, &RbmParams::zeros(4, 2)).is_err());
}

#[test]
fn single_layer_stack_equals_train() {
    let ds = ising_small();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        batch_size: 40,
        epochs: 3,
        rng_seed: 2,
        init_mode: InitMode::Xavier,
    };
    let init = RbmParams::xavier(8, 4, &mut rng::seeded(3));
    let mut layer = StackLayer::new(4, cfg.clone());
    layer.init = Some(init.clone());
    let stacked = train_stacked(&ds, &[layer], StackFeed::Expected).unwrap();
    assert_eq!(stacked.len(), 1);
    assert_eq!(stacked[0], train(&ds, &cfg, &init).unwrap());
}

#[test]
fn two_layer_stack_bookkeeping() {
    let ds = ising_small();
    let cfg = |seed| TrainConfig {
        learning_rate: 0.01,
        batch_size: 40,
        epochs: 2,
        rng_seed: seed,
        init_mode: InitMode::BlockSpin,
    };
    let mut l1 = StackLayer::new(4, cfg(1));
    l1.block_size = 2;
    let mut l2 = StackLayer::new(2, cfg(2));
    l2.block_size = 2;
    for feed in [StackFeed::Expected, StackFeed::Sampled] {
        let out = train_stacked(&ds, &[l1.clone(), l2.clone()], feed).unwrap();
        assert_eq!(out[0].params.weights().shape(), (64, 16));
        assert_eq!(out[1].params.weights().shape(), (16, 4));
        let hidden = propagate(&ds, &out[0].params, feed, &mut rng::seeded(0)).unwrap();
        assert_eq!((hidden.dim(), hidden.len()), (16, ds.len()));
        let expect_range = match feed {
            StackFeed::Expected => ValueRange::Real,
            StackFeed::Sampled => ValueRange::Spin,
        };
        assert_eq!(hidden.range(), expect_range);
    }
    let bad = StackLayer::new(3, cfg(1));
    assert!(train_stacked(&ds, &[bad], StackFeed::Expected).is_err());
}

#[test]
fn reconstruction_is_deterministic_and_bounded() {
    let p = params(40, 16, 4);
    let v = spins(41, 16);
    let a = reconstruct(&v, &p).unwrap();
    assert_eq!(a, reconstruct(&v, &p).unwrap());
    assert!(a.iter().all(|&x| x > 0.0 && x < 1.0));
    let ds = Dataset::new(vec![v], 4, ValueRange::Spin, "").unwrap();
    let e = reconstruction_error(&ds, &p).unwrap();
    assert!((0.0..=4.0).contains(&e));
}

#[test]
fn rbmw_round_trip_and_layout() {
    let p = RbmParams::new(
        fixture_matrix(50, 9, 4),
        DVector::from_vec(fixture_values(51, 9)),
        DVector::from_vec(fixture_values(52, 4)),
        3,
        2,
    )
    .unwrap();
    let bytes = encode_params(&p).unwrap();
    assert_eq!(&bytes[..4], b"RBMW");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
    assert_eq!(bytes.len(), 16 + 8 * (36 + 9 + 4));
    let f = |k: usize| f64::from_le_bytes(bytes[16 + 8 * k..24 + 8 * k].try_into().unwrap());
    // row-major weights, then visible then hidden biases
    assert_eq!(f(1), p.weights()[(0, 1)]);
    assert_eq!(f(4), p.weights()[(1, 0)]);
    assert_eq!(f(36), p.visible_bias()[0]);
    assert_eq!(f(45), p.hidden_bias()[0]);
    assert_eq!(decode_params(&bytes).unwrap(), p);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.rbmw");
    save_params(&p, &path).unwrap();
    assert_eq!(load_params(&path).unwrap(), p);
    assert!(encode_params(&params(0, 3, 2)).is_err());
}

#[test]
fn csv_export_lists_every_parameter() {
    let p = RbmParams::zeros(2, 1);
    let mut buf = Vec::new();
    write_params_csv(&p, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kind,row,col,value");
    assert_eq!(lines.len(), 1 + 4 + 4 + 1);
    assert_eq!(lines[1], "w,0,0,0");
    assert_eq!(lines[9], "bh,0,0,0");
}
