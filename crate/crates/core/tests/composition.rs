//! Blocks against hand-chained tensor ops, and attention against the
//! brute-force quadratic loop.

use lowformer::analyzer;
use lowformer::blocks::{
    merge_heads, split_heads, AttentionSpec, ConvBn, Init, LowFormerBlock, LowFormerBlockSpec, MbConv, MbConvSpec, MlpSpec,
    OutputProjection, Parameters,
};
use lowformer::harness::random_input;
use lowformer::model::{Ablation, Model, ModelConfig, ModelLayout, Variant};
use lowformer::ops::{activation, add, batch_norm_inference, conv2d, conv_transpose2d, layer_norm, Activation};
use lowformer::rng::Rng;
use lowformer::{Shape, Tensor};
use lowformer_oracle::{self as oracle, Counter};

fn perturb(p: &mut impl Parameters, seed: u64) {
    let mut v = Vec::new();
    p.params_mut("", &mut v);
    for t in v {
        let mut rng = Rng::for_path(seed, &t.name);
        for x in t.data.iter_mut() {
            *x += rng.uniform(0.1);
        }
    }
}

fn conv_bn(l: &ConvBn, x: &Tensor) -> Tensor {
    let y = conv2d(x, &l.conv.weight, l.conv.bias.as_deref(), &l.conv.params).unwrap();
    activation(&batch_norm_inference(&y, &l.bn.scale, &l.bn.shift).unwrap(), l.act)
}

#[test]
fn unfused_mbconv_equals_op_pipeline() {
    let spec = MbConvSpec::new(24, 24, 4, 1, false).unwrap();
    let mut b = MbConv::new(spec, &Init::new(9), "m").unwrap();
    perturb(&mut b, 9);
    let x = random_input(Shape::new(2, 24, 14, 14), 1);
    let layers: Vec<_> = b.layers().collect();
    assert_eq!(layers.iter().map(|l| l.0).collect::<Vec<_>>(), ["expand", "dw", "project"]);
    let mut y = x.clone();
    for (_, l) in &layers {
        y = conv_bn(l, &y);
    }
    let want = add(&y, &x).unwrap();
    assert!(b.forward(&x).unwrap().bit_eq(&want));
}

#[test]
fn fused_mbconv_layer_shapes() {
    let spec = MbConvSpec::new(64, 64, 4, 1, true).unwrap();
    let costs = analyzer::mbconv_costs(&spec, "m", Shape::new(1, 64, 56, 56)).unwrap();
    let convs: Vec<_> = costs.iter().filter(|l| l.kind != analyzer::LayerKind::Norm).collect();
    assert_eq!(convs.len(), 2);
    assert_eq!((convs[0].output.c, convs[1].output.c), (256, 64));
    let b = MbConv::new(spec, &Init::new(0), "m").unwrap();
    let layers: Vec<_> = b.layers().collect();
    assert_eq!(layers[0].1.conv.params.kernel, (3, 3));
    assert_eq!(layers[1].1.conv.params.kernel, (1, 1));
}

#[test]
fn lowformer_block_equals_op_pipeline() {
    for fuse_output in [true, false] {
        let mut att = AttentionSpec::with_head_dim(256, 16, 1).unwrap();
        att.fuse_output = fuse_output;
        let spec = LowFormerBlockSpec::new(att, MlpSpec::new(256, 4).unwrap()).unwrap();
        let mut b = LowFormerBlock::new(spec, &Init::new(4), "blk").unwrap();
        perturb(&mut b, 4);
        let x = random_input(Shape::new(2, 256, 7, 7), 2);

        let a = &b.attn;
        let down = conv2d(&x, &a.down.weight, a.down.bias.as_deref(), &a.down.params).unwrap();
        let qkv = conv2d(&down, &a.qkv.weight, a.qkv.bias.as_deref(), &a.qkv.params).unwrap();
        let (q, k, v) = split_heads(&qkv, att.heads, att.compressed());
        let o = lowformer::blocks::sda(&q, &k, &v).unwrap();
        let ds = down.shape();
        let merged = merge_heads(&o, ds.n, att.heads, ds.h, ds.w);
        let out = match &a.out {
            OutputProjection::Fused(t) => conv_transpose2d(&merged, &t.weight, t.bias.as_deref(), &t.params).unwrap(),
            OutputProjection::Unfused { proj, up } => {
                let p = conv2d(&merged, &proj.weight, proj.bias.as_deref(), &proj.params).unwrap();
                conv_transpose2d(&p, &up.weight, up.bias.as_deref(), &up.params).unwrap()
            }
        };
        let y = add(&x, &out).unwrap();
        let m = &b.mlp;
        let h = layer_norm(&y, &m.norm.gamma, &m.norm.beta, m.norm.eps).unwrap();
        let h = activation(&conv2d(&h, &m.fc1.weight, m.fc1.bias.as_deref(), &m.fc1.params).unwrap(), Activation::Gelu);
        let h = conv2d(&h, &m.fc2.weight, m.fc2.bias.as_deref(), &m.fc2.params).unwrap();
        let want = add(&y, &h).unwrap();

        let got = b.forward(&x).unwrap();
        assert_eq!(got.shape(), Shape::new(2, 256, 7, 7));
        assert!(got.max_abs_diff(&want) <= 1e-5 * (1.0 + want.data().iter().fold(0.0f32, |m, v| m.max(v.abs()))));
    }
}

#[test]
fn attention_sda_equals_bruteforce_loop() {
    let att = AttentionSpec::new(64, 2, 2).unwrap();
    let a = lowformer::blocks::LowFormerAttention::new(att, &Init::new(6), "a").unwrap();
    let x = random_input(Shape::new(1, 64, 8, 8), 3);
    let t = a.forward_traced(&x).unwrap();
    assert_eq!(t.q.rows, 16);
    assert_eq!(t.q.cols, 16);
    let want = oracle::sda(&t.q, &t.k, &t.v, &mut Counter::default());
    assert!(t.attended.bit_eq(&want));
    let seen = oracle::attention(&a, &x, &mut Counter::default());
    assert!(t.output.max_abs_diff(&seen) <= 1e-5);
}

#[test]
fn b1_at_256_stage_maps() {
    let m = Model::build(&ModelConfig::for_variant(Variant::B1), Ablation::Baseline, 0).unwrap();
    let stages = m.forward_stages(&random_input(Shape::new(2, 3, 256, 256), 5)).unwrap();
    assert_eq!(stages[3].shape(), Shape::new(2, 128, 16, 16));
    assert_eq!(stages[4].shape(), Shape::new(2, 256, 8, 8));
}

#[test]
fn b1_seed_42_is_bit_identical() {
    let cfg = ModelConfig::for_variant(Variant::B1);
    let x = random_input(Shape::new(1, 3, 224, 224), 42);
    let a = Model::build(&cfg, Ablation::Baseline, 42).unwrap().forward(&x).unwrap();
    let b = Model::build(&cfg, Ablation::Baseline, 42).unwrap().forward(&x).unwrap();
    assert!(a.bit_eq(&b));
}

#[test]
fn unfused_ablation_keeps_layer_count() {
    let cfg = ModelConfig::for_variant(Variant::B1);
    let base = ModelLayout::new(&cfg, Ablation::Baseline).unwrap();
    let unfused = ModelLayout::new(&cfg, Ablation::UnfusedMbconv).unwrap();
    assert_eq!(base.mbconvs().count(), unfused.mbconvs().count());
    assert_eq!(base.attention_blocks().count(), unfused.attention_blocks().count());
    assert!(unfused.mbconvs().all(|m| !m.fused));
    assert!(base.mbconvs().any(|m| m.fused));
}
