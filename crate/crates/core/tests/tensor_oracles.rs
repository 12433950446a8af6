mod common;

use agfa_core::tensor::*;
use common::oracles::{compensated_sum, conv3d_naive, matmul_naive, pool_naive, softmax_row_precise};
use common::{distinct, max_abs_diff, rng, uniform};

fn conv_against_oracle(shape: [usize; 4], p: ConvParams, seed: u64) {
    let mut r = rng(seed);
    let x = uniform(&shape, -1.0, 1.0, &mut r);
    let w = uniform(&p.weight_shape(), -1.0, 1.0, &mut r);
    let b = uniform(&[p.out_channels], -1.0, 1.0, &mut r);
    let y = conv3d(&x, &w, Some(&b), &p).unwrap();
    let sp = [shape[1], shape[2], shape[3]];
    let (expect, ext) = conv3d_naive(&x.to_vec(), sp, &w.to_vec(), Some(&b.to_vec()), &p);
    assert_eq!(y.shape(), &[p.out_channels, ext[0], ext[1], ext[2]]);
    let err = max_abs_diff(&y.to_vec(), &expect);
    assert!(err <= 1e-12, "{p:?}: {err:e}");
}

#[test]
fn conv_dilation2_pad2_matches_direct_loops() {
    conv_against_oracle([1, 4, 4, 4], ConvParams::same(1, 1, [3; 3], 2), 1);
    conv_against_oracle([1, 4, 4, 4], ConvParams::same(1, 5, [3; 3], 2), 2);
}

#[test]
fn conv_variants_match_direct_loops() {
    let cases = [
        ([3, 5, 4, 6], ConvParams::same(3, 4, [3; 3], 1)),
        ([2, 6, 6, 6], ConvParams::same(2, 1, [7; 3], 1)),
        ([2, 6, 5, 4], ConvParams::same(2, 2, [5, 3, 1], 1)),
        ([4, 2, 2, 2], ConvParams::same(4, 4, [3; 3], 4)),
        ([4, 2, 2, 2], ConvParams::same(4, 1, [3; 3], 3)),
        ([2, 7, 6, 5], ConvParams { stride: [2, 1, 3], ..ConvParams::same(2, 3, [3; 3], 1) }),
        ([2, 4, 4, 4], ConvParams { padding: [0, 1, 0], ..ConvParams::same(2, 2, [3; 3], 1) }),
        ([3, 3, 3, 3], ConvParams::same(3, 6, [1; 3], 1)),
    ];
    for (i, (shape, p)) in cases.into_iter().enumerate() {
        conv_against_oracle(shape, p, 10 + i as u64);
    }
}

#[test]
fn batched_conv_equals_per_sample() {
    let mut r = rng(3);
    let p = ConvParams::same(2, 3, [3; 3], 2);
    let x = uniform(&[3, 2, 4, 4, 4], -1.0, 1.0, &mut r);
    let w = uniform(&p.weight_shape(), -1.0, 1.0, &mut r);
    let y = conv3d(&x, &w, None, &p).unwrap();
    for s in 0..3 {
        let xs = narrow(&x, 0, s, 1).unwrap().reshape(&[2, 4, 4, 4]).unwrap();
        let ys = conv3d(&xs, &w, None, &p).unwrap();
        assert_eq!(narrow(&y, 0, s, 1).unwrap().to_vec(), ys.to_vec());
    }
}

#[test]
fn conv_trivial_cases() {
    let mut r = rng(4);
    let x = uniform(&[1, 3, 3, 3], -1.0, 1.0, &mut r);
    let id = Tensor::ones(&[1, 1, 1, 1, 1]);
    let p = ConvParams::same(1, 1, [1; 3], 1);
    assert_eq!(conv3d(&x, &id, Some(&Tensor::zeros(&[1])), &p).unwrap().to_vec(), x.to_vec());

    let p = ConvParams::same(2, 3, [3; 3], 2);
    let w = uniform(&p.weight_shape(), -1.0, 1.0, &mut r);
    let b = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
    let y = conv3d(&Tensor::zeros(&[2, 3, 3, 3]), &w, Some(&b), &p).unwrap();
    for (c, chunk) in y.to_vec().chunks(27).enumerate() {
        assert!(chunk.iter().all(|&v| v == b.to_vec()[c]));
    }
}

#[test]
fn pooling_matches_windowed_loops() {
    let mut r = rng(5);
    let x = uniform(&[1, 4, 4, 4], -1.0, 1.0, &mut r);
    for max in [true, false] {
        let kind = if max { PoolKind::Max } else { PoolKind::Avg };
        let y = pool3d(&x, kind, [2; 3], [2; 3]).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 2]);
        assert!(max_abs_diff(&y.to_vec(), &pool_naive(&x.to_vec(), 1, [4; 3], 2, 2, max)) <= 1e-12);
    }
    let x = uniform(&[2, 5, 5, 5], -1.0, 1.0, &mut r);
    let y = pool3d(&x, PoolKind::Max, [3; 3], [2; 3]).unwrap();
    assert!(max_abs_diff(&y.to_vec(), &pool_naive(&x.to_vec(), 2, [5; 3], 3, 2, true)) <= 1e-12);
}

#[test]
fn pool_trivial_cases_and_errors() {
    let mut data = vec![0.0; 8];
    data[5] = 3.0;
    let x = Tensor::from_vec(&[1, 2, 2, 2], data).unwrap();
    assert_eq!(pool3d(&x, PoolKind::Max, [2; 3], [2; 3]).unwrap().to_vec(), vec![3.0]);
    let c = Tensor::full(&[2, 4, 4, 4], 1.25);
    assert!(pool3d(&c, PoolKind::Avg, [2; 3], [2; 3]).unwrap().to_vec().iter().all(|&v| v == 1.25));
    assert!(pool3d(&c, PoolKind::Max, [5, 2, 2], [1; 3]).is_err());
}

#[test]
fn max_pool_tie_routes_gradient_to_first() {
    let x = Tensor::full(&[1, 2, 2, 2], 1.0).requires_grad();
    sum(&pool3d(&x, PoolKind::Max, [2; 3], [2; 3]).unwrap()).backward().unwrap();
    let g = x.grad().unwrap();
    assert_eq!(g[0], 1.0);
    assert!(g[1..].iter().all(|&v| v == 0.0));
}

#[test]
fn global_and_channel_pools_match_scans() {
    let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(global_pool_channelwise(&x, PoolKind::Avg).unwrap().to_vec(), vec![2.5]);
    assert_eq!(global_pool_channelwise(&x, PoolKind::Max).unwrap().to_vec(), vec![4.0]);

    let mut r = rng(6);
    let x = uniform(&[3, 2, 2, 2], -1.0, 1.0, &mut r);
    let v = x.to_vec();
    let avg = global_pool_channelwise(&x, PoolKind::Avg).unwrap();
    let max = global_pool_channelwise(&x, PoolKind::Max).unwrap();
    assert_eq!(avg.shape(), &[3]);
    for c in 0..3 {
        let ch = &v[c * 8..(c + 1) * 8];
        assert!((avg.to_vec()[c] - ch.iter().sum::<f64>() / 8.0).abs() <= 1e-12);
        assert_eq!(max.to_vec()[c], ch.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    let x = uniform(&[4, 2, 2, 2], -1.0, 1.0, &mut r);
    let v = x.to_vec();
    let avg = spatial_pool_across_channels(&x, PoolKind::Avg).unwrap();
    let max = spatial_pool_across_channels(&x, PoolKind::Max).unwrap();
    assert_eq!(avg.shape(), &[1, 2, 2, 2]);
    for i in 0..8 {
        let vals: Vec<f64> = (0..4).map(|c| v[c * 8 + i]).collect();
        assert!((avg.to_vec()[i] - vals.iter().sum::<f64>() / 4.0).abs() <= 1e-12);
        assert_eq!(max.to_vec()[i], vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    let single = uniform(&[1, 2, 3, 2], -1.0, 1.0, &mut r);
    assert_eq!(spatial_pool_across_channels(&single, PoolKind::Avg).unwrap().to_vec(), single.to_vec());
    let half = uniform(&[1, 2, 2, 2], -1.0, 1.0, &mut r);
    let sym = concat(&[half.clone(), scale(&half, -1.0)], 0).unwrap();
    assert!(spatial_pool_across_channels(&sym, PoolKind::Avg).unwrap().to_vec().iter().all(|&v| v == 0.0));
}

#[test]
fn activations() {
    assert_eq!(sigmoid(&Tensor::scalar(0.0)).item(), 0.5);
    assert_eq!(relu(&Tensor::from_vec(&[2], vec![-3.0, 3.0]).unwrap()).to_vec(), vec![0.0, 3.0]);
    let mut r = rng(7);
    let x = uniform(&[50], -30.0, 30.0, &mut r);
    let s = sigmoid(&x).to_vec();
    let sn = sigmoid(&scale(&x, -1.0)).to_vec();
    for (a, b) in s.iter().zip(&sn) {
        assert!((a + b - 1.0).abs() < 1e-15);
    }
}

#[test]
fn softmax_matches_precise_oracle() {
    assert_eq!(softmax(&Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap(), 0).unwrap().to_vec(), vec![0.5, 0.5]);
    let big = softmax(&Tensor::from_vec(&[2], vec![1000.0, 0.0]).unwrap(), 0).unwrap().to_vec();
    assert!(big.iter().all(|v| v.is_finite()));
    assert!((big[0] - 1.0).abs() < 1e-15 && big[1] < 1e-300);

    let mut r = rng(8);
    for _ in 0..20 {
        let x = uniform(&[5], -3.0, 3.0, &mut r);
        let y = softmax(&x, 0).unwrap().to_vec();
        let expect = softmax_row_precise(&x.to_vec());
        for (a, b) in y.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-15 * b.max(1e-300).max(1.0) * 4.0, "{a} vs {b}");
        }
        assert!((compensated_sum(y.iter().copied()) - 1.0).abs() < 1e-15);
    }
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(9);
    let a = uniform(&[3, 4], -1.0, 1.0, &mut r);
    let b = uniform(&[4, 2], -1.0, 1.0, &mut r);
    let y = matmul(&a, &b).unwrap();
    assert_eq!(y.shape(), &[3, 2]);
    assert!(max_abs_diff(&y.to_vec(), &matmul_naive(&a.to_vec(), &b.to_vec(), 3, 4, 2)) <= 1e-12);

    let eye = Tensor::from_vec(&[3, 3], (0..9).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
    assert_eq!(matmul(&eye, &a).unwrap().to_vec(), a.to_vec());
    assert!(matmul(&a, &Tensor::zeros(&[4, 5])).unwrap().to_vec().iter().all(|&v| v == 0.0));
    assert!(matmul(&a, &a).is_err());

    let a3 = uniform(&[2, 3, 4], -1.0, 1.0, &mut r);
    let b3 = uniform(&[2, 4, 5], -1.0, 1.0, &mut r);
    let y3 = matmul(&a3, &b3).unwrap().to_vec();
    for s in 0..2 {
        let expect = matmul_naive(&a3.to_vec()[s * 12..(s + 1) * 12], &b3.to_vec()[s * 20..(s + 1) * 20], 3, 4, 5);
        assert!(max_abs_diff(&y3[s * 15..(s + 1) * 15], &expect) <= 1e-12);
    }
    let t = transpose_last(&a).unwrap();
    assert_eq!(t.shape(), &[4, 3]);
    assert_eq!(t.to_vec()[3 * 1 + 2], a.to_vec()[2 * 4 + 1]);
}

#[test]
fn batch_norm_moments() {
    let mut r = rng(10);
    let x = uniform(&[2, 3, 4, 4, 4], -5.0, 9.0, &mut r);
    let mut rs = RunningStats::new(3);
    let y = batch_norm(&x, &Tensor::ones(&[3]), &Tensor::zeros(&[3]), &mut rs, BatchNormMode::Train).unwrap();
    let v = y.to_vec();
    for c in 0..3 {
        let vals: Vec<f64> = (0..2).flat_map(|s| v[(s * 3 + c) * 64..(s * 3 + c + 1) * 64].to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() <= 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-5, "var {var}");
    }
    // eval mode now uses the updated running stats
    assert!(batch_norm(&x, &Tensor::ones(&[3]), &Tensor::zeros(&[3]), &mut rs, BatchNormMode::Eval).is_ok());
}

#[test]
fn upsample_linear_ramp_and_constants() {
    let c = Tensor::full(&[2, 2, 3, 1], 0.7);
    let y = upsample_trilinear2x(&c).unwrap();
    assert_eq!(y.shape(), &[2, 4, 6, 2]);
    assert!(y.to_vec().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    let one = upsample_trilinear2x(&Tensor::full(&[1, 1, 1, 1], -2.5)).unwrap();
    assert_eq!(one.shape(), &[1, 2, 2, 2]);
    assert!(one.to_vec().iter().all(|&v| v == -2.5));

    // f(d, h, w) = 3d - 1 along the depth axis only
    let n = 5;
    let x = Tensor::from_vec(&[1, n, 2, 2], (0..n * 4).map(|i| 3.0 * (i / 4) as f64 - 1.0).collect()).unwrap();
    let y = upsample_trilinear2x(&x).unwrap().to_vec();
    for o in 0..2 * n {
        // sample position in source coordinates, clamped at the borders
        let src = ((o as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n - 1) as f64);
        let expect = 3.0 * src - 1.0;
        for k in 0..16 {
            assert!((y[o * 16 + k] - expect).abs() < 1e-12);
        }
    }
    // away from the clamped end samples the output is a straight line
    for o in 2..2 * n - 2 {
        let d2 = y[(o + 1) * 16] - 2.0 * y[o * 16] + y[(o - 1) * 16];
        assert!(d2.abs() < 1e-12, "{o}: {d2}");
    }
}

#[test]
fn broadcasting_matches_tiling() {
    let mut r = rng(12);
    let x = uniform(&[3, 2, 2, 2], -1.0, 1.0, &mut r);
    let c = uniform(&[3], -1.0, 1.0, &mut r);
    let tiled: Vec<f64> = (0..24).map(|i| c.to_vec()[i / 8]).collect();
    let y = mul(&x, &c).unwrap().to_vec();
    let expect: Vec<f64> = x.to_vec().iter().zip(&tiled).map(|(a, b)| a * b).collect();
    assert_eq!(y, expect);

    let m = uniform(&[1, 2, 2, 2], -1.0, 1.0, &mut r);
    let y = add(&x, &m).unwrap().to_vec();
    for i in 0..24 {
        assert_eq!(y[i], x.to_vec()[i] + m.to_vec()[i % 8]);
    }
    assert_eq!(mul(&x, &Tensor::ones(&[3, 2, 2, 2])).unwrap().to_vec(), x.to_vec());
    assert_eq!(add(&x, &Tensor::zeros(&[3, 2, 2, 2])).unwrap().to_vec(), x.to_vec());
    assert!(add(&x, &Tensor::zeros(&[2, 2, 2, 2])).is_err());
}

#[test]
fn backward_sum_and_square() {
    let mut r = rng(13);
    let x = distinct(&[2, 3], &mut r).requires_grad();
    sum(&x).backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    x.zero_grad();
    sum(&mul(&x, &x).unwrap()).backward().unwrap();
    let expect: Vec<f64> = x.to_vec().iter().map(|v| 2.0 * v).collect();
    assert_eq!(x.grad().unwrap(), expect);
}

#[test]
fn grad_check_of_sum_is_exact() {
    let mut r = rng(14);
    let x = uniform(&[10], -2.0, 2.0, &mut r);
    let rep = grad_check(|t| Ok(sum(t)), &x, 1e-4, 1e-4).unwrap();
    assert!(rep.passed);
    assert!(rep.max_relative_error < 1e-9);
}
