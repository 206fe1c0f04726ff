use super::*;
use crate::error::Error;

fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data).unwrap()
}

#[test]
fn conv_identity_kernel() {
    let tape = Tape::<f64>::inference();
    let x = t(vec![1, 2, 3, 3], (1..=18).map(|v| v as f64).collect());
    let w = t(vec![1, 1, 1, 1, 1], vec![1.0]);
    let b = t(vec![1], vec![0.0]);
    let y = tape.conv3d(&x, &w, &b).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn conv_same_padding_shape() {
    let tape = Tape::<f64>::inference();
    let x = Tensor::zeros(vec![2, 4, 8, 8]);
    let w = t(vec![3, 2, 1, 3, 3], vec![0.5; 3 * 2 * 9]);
    let b = Tensor::zeros(vec![3]);
    let y = tape.conv3d(&x, &w, &b).unwrap();
    assert_eq!(y.shape(), &[3, 4, 8, 8]);
}

#[test]
fn conv_channel_mismatch_and_even_kernel() {
    let tape = Tape::<f64>::inference();
    let x = Tensor::zeros(vec![2, 2, 2, 2]);
    let w = Tensor::zeros(vec![1, 3, 1, 3, 3]);
    let b = Tensor::zeros(vec![1]);
    assert!(matches!(tape.conv3d(&x, &w, &b), Err(Error::Shape(_))));
    let w = Tensor::zeros(vec![1, 2, 1, 2, 2]);
    assert!(matches!(tape.conv3d(&x, &w, &b), Err(Error::Config(_))));
}

#[test]
fn conv_2d_kernel_equals_independent_slicewise_2d() {
    // kd = 1 must behave as an independent 2D convolution of every slice.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let (ci, co, d, h, w) = (2, 3, 4, 5, 6);
    let x: Vec<f64> = (0..ci * d * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let wt: Vec<f64> = (0..co * ci * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias: Vec<f64> = (0..co).map(|_| rng.random_range(-1.0..1.0)).collect();
    let tape = Tape::<f64>::inference();
    let y = tape
        .conv3d(
            &t(vec![ci, d, h, w], x.clone()),
            &t(vec![co, ci, 1, 3, 3], wt.clone()),
            &t(vec![co], bias.clone()),
        )
        .unwrap();
    // direct 2D oracle, slice by slice
    for z in 0..d {
        for cho in 0..co {
            for yy in 0..h {
                for xx in 0..w {
                    let mut acc = bias[cho];
                    for chi in 0..ci {
                        for dy in 0..3i64 {
                            for dx in 0..3i64 {
                                let iy = yy as i64 + dy - 1;
                                let ix = xx as i64 + dx - 1;
                                if iy < 0 || iy >= h as i64 || ix < 0 || ix >= w as i64 {
                                    continue;
                                }
                                acc += wt[((cho * ci + chi) * 9) + (dy * 3 + dx) as usize]
                                    * x[((chi * d + z) * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    let got = y.data()[((cho * d + z) * h + yy) * w + xx];
                    assert!((got - acc).abs() < 1e-12, "mismatch {got} vs {acc}");
                }
            }
        }
    }
}

#[test]
fn maxpool_examples() {
    let tape = Tape::<f64>::inference();
    let x = t(vec![1, 2, 2, 2], (1..=8).map(|v| v as f64).collect());
    let y = tape.maxpool(&x, (2, 2, 2)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.data(), &[8.0]);
    let y = tape.maxpool(&x, (1, 2, 2)).unwrap();
    assert_eq!(y.shape(), &[1, 2, 1, 1]);
    assert_eq!(y.data(), &[4.0, 8.0]);
    assert!(matches!(tape.maxpool(&x, (3, 1, 1)), Err(Error::Shape(_))));
}

#[test]
fn maxpool_backward_routes_to_argmax() {
    let tape = Tape::<f64>::new();
    let x = tape.watch(&t(vec![1, 2, 2, 2], (1..=8).map(|v| v as f64).collect()));
    let y = tape.maxpool(&x, (2, 2, 2)).unwrap();
    let loss = tape.sum(&y);
    let grads = tape.backward(&loss).unwrap();
    let gx = grads.get(&x).unwrap();
    assert_eq!(gx, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn maxpool_tie_breaks_first_in_scan_order() {
    let tape = Tape::<f64>::new();
    let x = tape.watch(&t(vec![1, 1, 2, 2], vec![5.0, 5.0, 5.0, 5.0]));
    let y = tape.maxpool(&x, (1, 2, 2)).unwrap();
    let loss = tape.sum(&y);
    let grads = tape.backward(&loss).unwrap();
    assert_eq!(grads.get(&x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn upsample_hand_example() {
    let tape = Tape::<f64>::inference();
    let x = t(vec![1, 1, 1, 1], vec![2.0]);
    let w = t(vec![1, 1, 1, 2, 2], vec![0.5; 4]);
    let b = Tensor::zeros(vec![1]);
    let y = tape.upsample_transposed(&x, &w, &b, (1, 2, 2)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0]);
}

#[test]
fn upsample_shape_and_factor_mismatch() {
    let tape = Tape::<f64>::inference();
    let x = Tensor::zeros(vec![64, 2, 8, 8]);
    let w = Tensor::zeros(vec![32, 64, 2, 2, 2]);
    let b = Tensor::zeros(vec![32]);
    let y = tape.upsample_transposed(&x, &w, &b, (2, 2, 2)).unwrap();
    assert_eq!(y.shape(), &[32, 4, 16, 16]);
    assert!(matches!(
        tape.upsample_transposed(&x, &w, &b, (1, 2, 2)),
        Err(Error::Config(_))
    ));
}

#[test]
fn concat_ordering_shape_and_backward() {
    let tape = Tape::<f64>::new();
    let a = tape.watch(&t(vec![2, 1, 1, 1], vec![1.0, 2.0]));
    let b = tape.watch(&t(vec![1, 1, 1, 1], vec![9.0]));
    let y = tape.concat_channels(&a, &b).unwrap();
    assert_eq!(y.shape(), &[3, 1, 1, 1]);
    assert_eq!(y.data(), &[1.0, 2.0, 9.0]);
    let loss = tape.sum(&y);
    let grads = tape.backward(&loss).unwrap();
    assert_eq!(grads.get(&a).unwrap(), &[1.0, 1.0]);
    assert_eq!(grads.get(&b).unwrap(), &[1.0]);

    let bad = Tensor::<f64>::zeros(vec![1, 2, 1, 1]);
    assert!(matches!(tape.concat_channels(&a, &bad), Err(Error::Shape(_))));
}

#[test]
fn relu_values_and_gradient_mask() {
    let tape = Tape::<f64>::new();
    let x = tape.watch(&t(vec![3, 1, 1, 1], vec![-1.0, 0.0, 2.0]));
    let y = tape.relu(&x);
    assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    let loss = tape.sum(&y);
    let grads = tape.backward(&loss).unwrap();
    assert_eq!(grads.get(&x).unwrap(), &[0.0, 0.0, 1.0]);
}

#[test]
fn relu_idempotent() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let tape = Tape::<f64>::inference();
    let x = t(vec![4, 2, 3, 3], (0..72).map(|_| rng.random_range(-2.0..2.0)).collect());
    let once = tape.relu(&x);
    let twice = tape.relu(&once);
    assert_eq!(once.data(), twice.data());
}

#[test]
fn softmax_symmetry_and_stability() {
    let tape = Tape::<f64>::inference();
    let x = t(vec![3, 1, 1, 1], vec![0.0, 0.0, 0.0]);
    let y = tape.softmax_channels(&x).unwrap();
    for &v in y.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
    let x = t(vec![3, 1, 1, 1], vec![1000.0, 0.0, 0.0]);
    let y = tape.softmax_channels(&x).unwrap();
    assert!(y.data().iter().all(|v| v.is_finite()));
    assert!((y.data()[0] - 1.0).abs() < 1e-12);
    assert!(y.data()[1].abs() < 1e-12 && y.data()[2].abs() < 1e-12);
}

#[test]
fn softmax_normalizes_random_tensors() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let tape = Tape::<f64>::inference();
    let (c, d, h, w) = (5, 2, 4, 4);
    let x = t(
        vec![c, d, h, w],
        (0..c * d * h * w).map(|_| rng.random_range(-10.0..10.0)).collect(),
    );
    let y = tape.softmax_channels(&x).unwrap();
    let sp = d * h * w;
    for v in 0..sp {
        let s: f64 = (0..c).map(|ch| y.data()[ch * sp + v]).sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!((0..c).all(|ch| (0.0..=1.0).contains(&y.data()[ch * sp + v])));
    }
}

#[test]
fn backward_product_rule_and_fanout() {
    let tape = Tape::<f64>::new();
    let wv = tape.watch(&t(vec![1, 1, 1, 1], vec![3.0]));
    let x = tape.watch(&t(vec![1, 1, 1, 1], vec![2.0]));
    let y = tape.mul(&wv, &x).unwrap();
    let loss = tape.sum(&y);
    let grads = tape.backward(&loss).unwrap();
    assert_eq!(grads.get(&wv).unwrap(), &[2.0]);
    assert_eq!(grads.get(&x).unwrap(), &[3.0]);

    let tape = Tape::<f64>::new();
    let x = tape.watch(&t(vec![1, 1, 1, 1], vec![5.0]));
    let y = tape.add(&x, &x).unwrap();
    let loss = tape.sum(&y);
    let grads = tape.backward(&loss).unwrap();
    assert_eq!(grads.get(&x).unwrap(), &[2.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let tape = Tape::<f64>::new();
    let x = tape.watch(&t(vec![2, 1, 1, 1], vec![1.0, 2.0]));
    assert!(matches!(tape.backward(&x), Err(Error::Usage(_))));
}

#[test]
fn glorot_bound_determinism_and_mean() {
    // fan_in = fan_out = 3 => bound = 1
    let a: Vec<f64> = glorot_uniform_init(&[3, 3, 1, 1, 1], 42).unwrap();
    assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    let b: Vec<f64> = glorot_uniform_init(&[3, 3, 1, 1, 1], 42).unwrap();
    assert_eq!(a, b);

    assert!(matches!(
        glorot_uniform_init::<f64>(&[0, 3, 1, 1, 1], 1),
        Err(Error::Config(_))
    ));

    // statistical check: mean of 1e5 draws near 0 (bound 1 here)
    let big: Vec<f64> = glorot_uniform_init(&[100, 125, 2, 2, 2], 9).unwrap();
    assert_eq!(big.len(), 100_000);
    let mean = big.iter().sum::<f64>() / big.len() as f64;
    assert!(mean.abs() < 0.01, "mean {mean}");
}

#[test]
fn adam_first_step_magnitude() {
    let mut p = vec![1.0f64];
    let g = vec![0.7f64];
    let mut st = AdamState::new(1, AdamHyper::default()).unwrap();
    adam_step(&mut p, &g, &mut st, 0.1, 0.0, true).unwrap();
    let delta = (p[0] - 1.0).abs();
    assert!((0.0999..=0.1).contains(&delta), "delta {delta}");
    assert_eq!(st.step_count, 1);
}

#[test]
fn adam_zero_grad_no_move_and_l2_decay() {
    let mut p = vec![0.5f64];
    let mut st = AdamState::new(1, AdamHyper::default()).unwrap();
    adam_step(&mut p, &[0.0], &mut st, 0.1, 0.0, true).unwrap();
    assert_eq!(p[0], 0.5);

    // l2 alone shrinks a kernel weight, leaves a bias untouched
    let mut wv = vec![0.5f64];
    let mut st = AdamState::new(1, AdamHyper::default()).unwrap();
    adam_step(&mut wv, &[0.0], &mut st, 0.01, 1e-2, true).unwrap();
    assert!(wv[0] < 0.5 && wv[0] > 0.0);
    let mut bias = vec![0.5f64];
    let mut st = AdamState::new(1, AdamHyper::default()).unwrap();
    adam_step(&mut bias, &[0.0], &mut st, 0.01, 1e-2, false).unwrap();
    assert_eq!(bias[0], 0.5);
}

#[test]
fn adam_shape_mismatch() {
    let mut p = vec![0.0f64; 2];
    let mut st = AdamState::new(2, AdamHyper::default()).unwrap();
    assert!(matches!(
        adam_step(&mut p, &[1.0], &mut st, 0.1, 0.0, true),
        Err(Error::Usage(_))
    ));
}

#[test]
fn maxpool_then_upsample_preserves_shape() {
    let tape = Tape::<f64>::inference();
    let x = Tensor::<f64>::zeros(vec![3, 4, 8, 8]);
    let pooled = tape.maxpool(&x, (2, 2, 2)).unwrap();
    let w = Tensor::zeros(vec![3, 3, 2, 2, 2]);
    let b = Tensor::zeros(vec![3]);
    let up = tape.upsample_transposed(&pooled, &w, &b, (2, 2, 2)).unwrap();
    assert_eq!(up.shape(), x.shape());
}

#[test]
fn weighted_nll_hand_example() {
    // gt=TZ p=0.5 (weight 2) and gt=background p=1.0 (weight 1):
    // loss = (2*ln2 + 0)/2 = ln2
    let tape = Tape::<f64>::inference();
    let probs = t(vec![3, 1, 1, 2], vec![0.5, 1.0, 0.5, 0.0, 0.0, 0.0]);
    let loss = tape
        .weighted_nll(&probs, &[1, 0], &[1.0, 2.0, 6.0], None)
        .unwrap();
    assert!((loss.item() - std::f64::consts::LN_2).abs() < 1e-12);
}
