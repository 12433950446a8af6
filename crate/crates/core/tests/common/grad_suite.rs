//! Central-difference gradient checks for every differentiable primitive.

use agfa_core::tensor::*;

use super::{away_from_zero, distinct, project, rng, uniform};

pub const STEP: f64 = 1e-4;
pub const PRIMITIVE_TOL: f64 = 1e-4;

pub type Case = (String, GradCheckReport);

fn check(name: impl Into<String>, x: &Tensor, f: impl Fn(&Tensor) -> Result<Tensor>) -> Case {
    (name.into(), grad_check(f, x, STEP, PRIMITIVE_TOL).unwrap())
}

fn conv_cases(out: &mut Vec<Case>) {
    let mut r = rng(11);
    let configs: [(&str, Vec<usize>, ConvParams); 5] = [
        ("conv3d k3 gemm", vec![2, 4, 4, 4], ConvParams::same(2, 3, [3; 3], 1)),
        ("conv3d k3 dilation2 direct", vec![2, 4, 4, 4], ConvParams::same(2, 1, [3; 3], 2)),
        ("conv3d anisotropic 1x3x1", vec![3, 3, 4, 3], ConvParams::same(3, 3, [1, 3, 1], 1)),
        ("conv3d stride2", vec![2, 5, 5, 5], ConvParams { stride: [2; 3], ..ConvParams::same(2, 3, [3; 3], 1) }),
        ("conv3d batched pointwise", vec![2, 3, 2, 3, 2], ConvParams::same(3, 2, [1; 3], 1)),
    ];
    for (i, (name, shape, p)) in configs.into_iter().enumerate() {
        let x = uniform(&shape, -2.0, 2.0, &mut r);
        let w = uniform(&p.weight_shape(), -1.0, 1.0, &mut r);
        let b = uniform(&[p.out_channels], -1.0, 1.0, &mut r);
        let seed = 100 + i as u64;
        out.push(check(format!("{name} / input"), &x, |t| Ok(project(&conv3d(t, &w, Some(&b), &p)?, seed))));
        out.push(check(format!("{name} / weights"), &w, |t| Ok(project(&conv3d(&x, t, Some(&b), &p)?, seed))));
        out.push(check(format!("{name} / bias"), &b, |t| Ok(project(&conv3d(&x, &w, Some(t), &p)?, seed))));
    }
}

pub fn primitive_cases() -> Vec<Case> {
    let mut out = Vec::new();
    conv_cases(&mut out);
    let mut r = rng(5);

    let x = distinct(&[2, 4, 4, 4], &mut r);
    out.push(check("pool3d max", &x, |t| Ok(project(&pool3d(t, PoolKind::Max, [2; 3], [2; 3])?, 1))));
    let x = uniform(&[2, 4, 4, 4], -2.0, 2.0, &mut r);
    out.push(check("pool3d avg", &x, |t| Ok(project(&pool3d(t, PoolKind::Avg, [2; 3], [2; 3])?, 2))));
    let x = distinct(&[3, 2, 2, 2], &mut r);
    out.push(check("global pool max", &x, |t| Ok(project(&global_pool_channelwise(t, PoolKind::Max)?, 3))));
    out.push(check("global pool avg", &x, |t| Ok(project(&global_pool_channelwise(t, PoolKind::Avg)?, 4))));
    let x = distinct(&[2, 4, 2, 2, 2], &mut r);
    out.push(check("channel pool max", &x, |t| Ok(project(&spatial_pool_across_channels(t, PoolKind::Max)?, 5))));
    out.push(check("channel pool avg", &x, |t| Ok(project(&spatial_pool_across_channels(t, PoolKind::Avg)?, 6))));

    let x = uniform(&[3, 2, 2, 2], -2.0, 2.0, &mut r);
    out.push(check("sigmoid", &x, |t| Ok(project(&sigmoid(t), 7))));
    let x = away_from_zero(&[3, 2, 2, 2], 0.05, &mut r);
    out.push(check("relu", &x, |t| Ok(project(&relu(t), 8))));
    let x = uniform(&[3, 5], -2.0, 2.0, &mut r);
    out.push(check("softmax axis 1", &x, |t| Ok(project(&softmax(t, 1)?, 9))));
    out.push(check("softmax axis 0", &x, |t| Ok(project(&softmax(t, 0)?, 10))));

    let a = uniform(&[3, 4], -2.0, 2.0, &mut r);
    let b = uniform(&[4, 2], -2.0, 2.0, &mut r);
    out.push(check("matmul / left", &a, |t| Ok(project(&matmul(t, &b)?, 11))));
    out.push(check("matmul / right", &b, |t| Ok(project(&matmul(&a, t)?, 11))));
    let a3 = uniform(&[2, 3, 4], -2.0, 2.0, &mut r);
    let b3 = uniform(&[2, 4, 3], -2.0, 2.0, &mut r);
    out.push(check("matmul batched", &a3, |t| Ok(project(&matmul(t, &b3)?, 12))));
    out.push(check("transpose_last", &a3, |t| Ok(project(&transpose_last(t)?, 13))));

    let x = uniform(&[3, 2, 3, 2], -2.0, 2.0, &mut r);
    let sc = uniform(&[3], 0.5, 1.5, &mut r);
    let sh = uniform(&[3], -1.0, 1.0, &mut r);
    let bn = |x: &Tensor, s: &Tensor, h: &Tensor, mode| {
        let mut rs = RunningStats { mean: vec![0.1, -0.2, 0.3], var: vec![1.5, 0.7, 2.0], initialized: true };
        batch_norm(x, s, h, &mut rs, mode)
    };
    out.push(check("batch_norm train / input", &x, |t| Ok(project(&bn(t, &sc, &sh, BatchNormMode::Train)?, 14))));
    out.push(check("batch_norm train / scale", &sc, |t| Ok(project(&bn(&x, t, &sh, BatchNormMode::Train)?, 14))));
    out.push(check("batch_norm train / shift", &sh, |t| Ok(project(&bn(&x, &sc, t, BatchNormMode::Train)?, 14))));
    out.push(check("batch_norm eval / input", &x, |t| Ok(project(&bn(t, &sc, &sh, BatchNormMode::Eval)?, 15))));

    let x = uniform(&[2, 2, 3, 2], -2.0, 2.0, &mut r);
    out.push(check("upsample trilinear", &x, |t| Ok(project(&upsample_trilinear2x(t)?, 16))));
    let y = uniform(&[3, 2, 3, 2], -2.0, 2.0, &mut r);
    out.push(check("concat", &x, |t| Ok(project(&concat(&[y.clone(), t.clone()], 0)?, 17))));
    out.push(check("split", &y, |t| {
        let parts = split(t, 0, 3)?;
        Ok(add(&project(&parts[0], 18), &project(&mul(&parts[2], &parts[1])?, 19))?)
    }));
    out.push(check("narrow", &y, |t| Ok(project(&narrow(t, 2, 1, 2)?, 20))));

    let a = uniform(&[3, 2, 2, 2], -2.0, 2.0, &mut r);
    let cvec = uniform(&[3], -2.0, 2.0, &mut r);
    let smap = uniform(&[1, 2, 2, 2], -2.0, 2.0, &mut r);
    out.push(check("add", &a, |t| Ok(project(&add(t, &smap)?, 21))));
    out.push(check("sub / right broadcast", &smap, |t| Ok(project(&sub(&a, t)?, 22))));
    out.push(check("mul / channel vector", &cvec, |t| Ok(project(&mul(&a, t)?, 23))));
    out.push(check("mul / spatial map", &smap, |t| Ok(project(&mul(&a, t)?, 24))));
    out.push(check("mul / same shape", &a, |t| Ok(project(&mul(t, t)?, 25))));
    out.push(check("scale", &a, |t| Ok(project(&scale(t, -1.7), 26))));
    out.push(check("add_scalar", &a, |t| Ok(project(&add_scalar(t, 0.3), 27))));
    out.push(check("sum", &a, |t| Ok(sum(&mul(t, t)?))));
    out.push(check("mean", &a, |t| Ok(mean(&sigmoid(t)))));
    out.push(check("reshape", &a, |t| Ok(project(&softmax(&t.reshape(&[3, 8])?, 1)?, 28))));

    let x = away_from_zero(&[2, 2, 4, 4], 0.05, &mut r);
    let w = uniform(&[2, 2, 3, 3, 3], -0.5, 0.5, &mut r);
    let p = ConvParams::same(2, 2, [3; 3], 1);
    out.push(check("composite chain", &x, |t| {
        let h = sigmoid(&conv3d(t, &w, None, &p)?);
        let u = upsample_trilinear2x(&pool3d(&h, PoolKind::Avg, [2; 3], [2; 3])?)?;
        Ok(project(&mul(&u, &softmax(t, 0)?)?, 29))
    }));
    out
}

/// Loss gradients with respect to logits; the foreground weight is pinned
/// so the loss is a smooth function of the probabilities.
pub fn loss_cases() -> Vec<Case> {
    use agfa_core::metrics::{combined_loss_with_omega, dice_loss, weighted_ce_loss_with_omega};
    let mut r = rng(31);
    let logits = uniform(&[1, 4, 4, 4], -3.0, 3.0, &mut r);
    let g = Tensor::from_vec(&[1, 4, 4, 4], (0..64).map(|i| ((i * 7 + 3) % 5 == 0) as u8 as f64).collect()).unwrap();
    let mut out = Vec::new();
    for eps in [1.0, 1e-3] {
        out.push(check(format!("dice loss eps {eps}"), &logits, |t| Ok(dice_loss(&sigmoid(t), &g, eps).unwrap())));
    }
    out.push(check("weighted ce loss", &logits, |t| Ok(weighted_ce_loss_with_omega(&sigmoid(t), &g, 3.5).unwrap())));
    for lambda in [0.0, 0.6, 1.0] {
        out.push(check(format!("combined loss lambda {lambda}"), &logits, |t| {
            Ok(combined_loss_with_omega(t, &g, lambda, 1.0, Some(2.25)).unwrap().0)
        }));
    }
    out
}

pub const END_TO_END_TOL: f64 = 1e-3;

fn leaf_cases(name: &str, params: &[(String, Tensor)], loss: &dyn Fn() -> Result<Tensor>, out: &mut Vec<Case>) {
    for (pname, p) in params {
        let idx: Vec<usize> = (0..p.numel()).step_by((p.numel() / 12).max(1)).collect();
        let report = check_leaf(loss, p, &idx, STEP, PRIMITIVE_TOL).unwrap();
        out.push((format!("{name} / {pname}"), report));
    }
}

/// Input and parameter gradients of the three attention modules.
pub fn module_cases() -> Vec<Case> {
    use agfa_core::model::{hfim_fuse_level, Frm, Hfim, Mode, Safa};
    let mut out = Vec::new();
    let mut r = rng(21);

    let frm = Frm::new(8, 4, &mut r).unwrap();
    let x = distinct(&[8, 3, 2, 3], &mut r);
    out.push(check("frm_forward / input", &x, |t| Ok(project(&frm.forward(t).unwrap(), 31))));
    let params = vec![
        ("mlp.w1".to_string(), frm.mlp.w1.clone()),
        ("mlp.w2".to_string(), frm.mlp.w2.clone()),
        ("spatial.weight".to_string(), frm.spatial.weight.clone()),
        ("spatial.bias".to_string(), frm.spatial.bias.clone().unwrap()),
    ];
    leaf_cases("frm_forward", &params, &|| Ok(project(&frm.forward(&x).unwrap(), 31)), &mut out);

    let safa = Safa::new(8, &[1, 2, 3, 4], true, &mut r).unwrap();
    let x = uniform(&[8, 3, 3, 3], -2.0, 2.0, &mut r);
    let fwd = |t: &Tensor| safa.forward(t, Mode::Train).unwrap();
    out.push(check("safa_forward / input", &x, |t| Ok(project(&fwd(t), 32))));
    let att = safa.attention.as_ref().unwrap();
    let mut params = vec![
        ("branch0.weight".to_string(), safa.branches[0].weight.clone()),
        ("branch3.bias".to_string(), safa.branches[3].bias.clone().unwrap()),
    ];
    for (n, l) in [("query", &att.query), ("key", &att.key), ("value", &att.value)] {
        params.push((format!("{n}.weight"), l.conv.weight.clone()));
        params.push((format!("{n}.bn.scale"), l.bn.scale.clone()));
    }
    leaf_cases("safa_forward", &params, &|| Ok(project(&fwd(&x), 32)), &mut out);

    let hfim = Hfim::new(4, 8, &mut r).unwrap();
    let low = uniform(&[4, 4, 2, 4], -2.0, 2.0, &mut r);
    let high = uniform(&[8, 2, 1, 2], -2.0, 2.0, &mut r);
    out.push(check("hfim_fuse_level / low", &low, |t| Ok(project(&hfim_fuse_level(t, &high, &hfim).unwrap(), 33))));
    out.push(check("hfim_fuse_level / high", &high, |t| Ok(project(&hfim_fuse_level(&low, t, &hfim).unwrap(), 33))));
    let params = vec![
        ("gate.weight".to_string(), hfim.gate.weight.clone()),
        ("gate.bias".to_string(), hfim.gate.bias.clone().unwrap()),
        ("fuse.weight".to_string(), hfim.fuse.weight.clone()),
    ];
    leaf_cases("hfim_fuse_level", &params, &|| Ok(project(&hfim_fuse_level(&low, &high, &hfim).unwrap(), 33)), &mut out);
    out
}

/// Module a parameter name belongs to, for per-module sampling.
pub fn module_of(name: &str) -> &'static str {
    if name.contains(".frm.") {
        "frm"
    } else if name.starts_with("safa") {
        "safa"
    } else if name.starts_with("hfim") {
        "hfim"
    } else if name.starts_with("enc") {
        "encoder"
    } else if name.starts_with("dec") {
        "decoder"
    } else {
        "head"
    }
}

/// Full network at 16^3, batch 2, eval mode: analytic gradients of a fixed
/// projection of the logits against central differences for `per_module`
/// randomly chosen parameter elements of every module.
///
/// A single weight of an early layer moves thousands of ReLU and max-pool
/// inputs, so a +/-1e-4 stencil sometimes straddles a kink. A draw counts as
/// straddling when the central differences at `h` and `h / 10` disagree by
/// more than the tolerance; such draws are redrawn and counted in the case
/// name. Train-mode batch statistics are avoided because the 1^3 bottleneck
/// of a 16^3 input leaves two values per channel, a near-singular variance.
pub fn end_to_end_cases(per_module: usize) -> Vec<Case> {
    use agfa_core::model::{build_network, ModelConfig, Mode};
    use rand::Rng;
    let config = ModelConfig { base_channels: 4, frm_reduction: 4, ..ModelConfig::default() };
    let net = build_network(&config, 5).unwrap();
    let mut r = rng(41);
    let x = uniform(&[2, 1, 16, 16, 16], 0.0, 1.0, &mut r);
    let loss = || -> Result<Tensor> { Ok(project(&net.forward(&x, Mode::Eval).unwrap(), 42)) };

    let params = net.named_parameters();
    net.zero_grad();
    loss().unwrap().backward().unwrap();
    let grads: Vec<Vec<f64>> = params.iter().map(|(_, p)| p.grad().unwrap_or_else(|| vec![0.0; p.numel()])).collect();
    net.zero_grad();

    let central = |p: &Tensor, k: usize, h: f64| {
        let orig = p.data()[k];
        p.data_mut()[k] = orig + h;
        let plus = no_grad(loss).unwrap().item();
        p.data_mut()[k] = orig - h;
        let minus = no_grad(loss).unwrap().item();
        p.data_mut()[k] = orig;
        (plus - minus) / (2.0 * h)
    };

    let mut out = Vec::new();
    for module in ["encoder", "safa", "frm", "decoder", "hfim", "head"] {
        let members: Vec<(usize, usize)> = (0..params.len())
            .filter(|&i| module_of(&params[i].0) == module)
            .flat_map(|i| (0..params[i].1.numel()).map(move |k| (i, k)))
            .collect();
        let mut report =
            GradCheckReport { checked: 0, max_relative_error: 0.0, max_abs_error: 0.0, worst_index: None, passed: true };
        let mut worst = String::new();
        let mut straddling = 0;
        let target = per_module.min(members.len());
        while report.checked < target && straddling <= target {
            let (pi, k) = members[r.random_range(0..members.len())];
            let p = &params[pi].1;
            let numeric = central(p, k, STEP);
            let analytic = grads[pi][k];
            let rel = relative_error(analytic, numeric);
            if rel > END_TO_END_TOL && relative_error(numeric, central(p, k, STEP / 10.0)) > END_TO_END_TOL {
                straddling += 1;
                continue;
            }
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((analytic - numeric).abs());
            if rel >= report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_index = Some(k);
                worst = format!("{}[{k}]", params[pi].0);
            }
        }
        report.passed = report.checked == target && report.max_relative_error <= END_TO_END_TOL;
        out.push((format!("end-to-end 16^3 / {module} (worst {worst}, {straddling} kink draws redrawn)"), report));
    }
    out
}
