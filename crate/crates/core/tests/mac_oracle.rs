//! Analyzer MAC counts against multiplies counted by the naive executor.

use lowformer::analyzer::{self, block_costs, mbconv_costs, mbconv_mac_ratio};
use lowformer::blocks::{AttentionSpec, BlockSpec, Init, LowFormerBlock, LowFormerBlockSpec, MbConv, MbConvSpec, MlpSpec, Parameters};
use lowformer::model::{Ablation, Block, Model, ModelConfig};
use lowformer::rng::Rng;
use lowformer::{Shape, Tensor};
use lowformer_oracle::{self as oracle, Counter};

fn pick(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

/// Non-trivial norm and bias terms so every parameter influences the output.
fn randomize(p: &mut impl Parameters, seed: u64) {
    let mut v = Vec::new();
    p.params_mut("", &mut v);
    for t in v {
        let mut rng = Rng::for_path(seed, &t.name);
        let affine = t.name.ends_with("scale") || t.name.ends_with("gamma");
        for x in t.data.iter_mut() {
            *x = if affine { 1.0 + rng.uniform(0.25) } else { *x + rng.uniform(0.05) };
        }
    }
}

fn random_block(rng: &mut Rng, seed: u64) -> (Block, BlockSpec, Shape) {
    let n = pick(rng, 1, 2);
    if pick(rng, 0, 1) == 0 {
        let stride = pick(rng, 1, 2);
        let in_ch = pick(rng, 1, 24);
        let out_ch = if pick(rng, 0, 1) == 0 { in_ch } else { pick(rng, 1, 24) };
        let spec = MbConvSpec::new(in_ch, out_ch, [1, 2, 4, 6][pick(rng, 0, 3)], stride, pick(rng, 0, 1) == 1).unwrap();
        let res = pick(rng, 3, 20);
        let b = MbConv::new(spec, &Init::new(seed), "b").unwrap();
        (Block::MbConv(b), BlockSpec::MbConv(spec), Shape::new(n, in_ch, res, res + pick(rng, 0, 3)))
    } else {
        let heads = pick(rng, 1, 3);
        let c = 2 * heads * pick(rng, 1, 6);
        let down = pick(rng, 1, 2);
        let mut att = AttentionSpec::new(c, heads, down).unwrap();
        att.fuse_output = pick(rng, 0, 1) == 1;
        let spec = LowFormerBlockSpec::new(att, MlpSpec::new(c, pick(rng, 1, 4)).unwrap()).unwrap();
        let res = down * pick(rng, 1, 8);
        let b = LowFormerBlock::new(spec, &Init::new(seed), "b").unwrap();
        (Block::LowFormer(b), BlockSpec::LowFormer(spec), Shape::new(n, c, res, res))
    }
}

#[test]
fn analyzer_equals_counted_multiplies_on_random_blocks() {
    let mut rng = Rng::new(5);
    let (mut mb, mut lf) = (0, 0);
    for case in 0..64u64 {
        let (mut block, spec, shape) = random_block(&mut rng, case);
        randomize(&mut block, case);
        match spec {
            BlockSpec::MbConv(_) => mb += 1,
            BlockSpec::LowFormer(_) => lf += 1,
        }
        let x = Tensor::new(shape, rng.fill_uniform(shape.numel(), 1.0)).unwrap();
        let mut counter = Counter::default();
        let want = oracle::block(&block, &x, &mut counter);
        let costs = block_costs(&spec, "b", shape).unwrap();
        let analytic: u64 = costs.iter().map(|l| l.macs).sum();
        assert_eq!(analytic, counter.macs, "case {case}: {spec:?} at {shape:?}");
        let params: u64 = costs.iter().map(|l| l.params).sum();
        assert_eq!(params as usize, block.param_count(), "case {case}");
        let got = block.forward(&x).unwrap();
        assert_eq!(got.shape(), want.shape());
        assert_eq!(costs.last().unwrap().output.c, got.shape().c);
        let scale = want.data().iter().fold(1.0f32, |m, v| m.max(v.abs()));
        let diff = got.max_abs_diff(&want);
        assert!(diff <= 1e-4 * scale, "case {case}: {spec:?} diff {diff} scale {scale}");
    }
    assert!(mb >= 10 && lf >= 10, "mbconv {mb}, lowformer {lf}");
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        name: "tiny".into(),
        channels: [8, 16, 16, 32, 32],
        depths: [0, 1, 1, 1, 1],
        head_dim: 8,
        num_classes: 10,
        ..ModelConfig::for_variant(lowformer::model::Variant::B0)
    }
}

#[test]
fn whole_model_counts_match_for_every_ablation() {
    for ablation in Ablation::ALL {
        let mut model = Model::build(&tiny_config(), ablation, 3).unwrap();
        randomize(&mut model, 3);
        let x = Tensor::new(Shape::new(1, 3, 64, 64), Rng::new(1).fill_uniform(3 * 64 * 64, 1.0)).unwrap();
        let mut counter = Counter::default();
        let want = oracle::model(&model, &x, &mut counter);
        let report = analyzer::count(model.layout(), 64, 64).unwrap();
        assert_eq!(report.total_macs, counter.macs, "{ablation:?}");
        assert_eq!(report.total_params as usize, model.param_count(), "{ablation:?}");
        let got = model.forward(&x).unwrap();
        let scale = want.data().iter().fold(1.0f32, |m, v| m.max(v.abs()));
        assert!(got.max_abs_diff(&want) <= 1e-4 * scale, "{ablation:?}");
    }
}

#[test]
fn fused_unfused_ratio_closed_form() {
    for c in 8..=1024usize {
        let closed = 10.0 * c as f64 / (2.0 * c as f64 + 9.0);
        let mut per_e = Vec::new();
        for e in [4, 6] {
            let shape = Shape::new(1, c, 14, 14);
            let macs = |fused| -> u64 {
                mbconv_costs(&MbConvSpec::new(c, c, e, 1, fused).unwrap(), "m", shape)
                    .unwrap()
                    .iter()
                    .map(|l| l.macs)
                    .sum()
            };
            let counted = macs(true) as f64 / macs(false) as f64;
            assert!((counted - closed).abs() <= 1e-12, "C={c} e={e}: {counted} vs {closed}");
            assert!((mbconv_mac_ratio(c, e) - closed).abs() <= 1e-12);
            per_e.push(counted);
        }
        assert_eq!(per_e[0], per_e[1], "C={c}");
    }
}

#[test]
fn counted_ratio_on_executed_blocks() {
    for c in [8, 16] {
        let x = Tensor::new(Shape::new(1, c, 9, 9), Rng::new(c as u64).fill_uniform(c * 81, 1.0)).unwrap();
        let count = |fused| {
            let b = MbConv::new(MbConvSpec::new(c, c, 4, 1, fused).unwrap(), &Init::new(0), "m").unwrap();
            let mut k = Counter::default();
            oracle::mbconv(&b, &x, &mut k);
            k.macs
        };
        let r = count(true) as f64 / count(false) as f64;
        assert!((r - 10.0 * c as f64 / (2.0 * c as f64 + 9.0)).abs() < 1e-12);
    }
}
