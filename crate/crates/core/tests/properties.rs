use lowformer::analyzer::{block_costs, mbconv_mac_ratio, scenario_mac_ratio};
use lowformer::blocks::{BlockSpec, MbConvSpec};
use lowformer::io::{sig6, NamedTensor, WeightFile};
use lowformer::ops::{conv2d, softmax_row, ConvParams};
use lowformer::rng::Rng;
use lowformer::{Shape, Tensor};
use proptest::prelude::*;

fn conv_case() -> impl Strategy<Value = (ConvParams, Shape, u64)> {
    (1usize..4, 1usize..8, 1usize..8, prop_oneof![Just(1usize), Just(3), Just(5)], 1usize..3, 0usize..3, 5usize..20, 5usize..20, any::<u64>())
        .prop_map(|(g, ci, co, k, s, p, h, w, seed)| {
            let p = ConvParams {
                in_ch: g * ci,
                out_ch: g * co,
                kernel: (k, k),
                stride: (s, s),
                padding: (p.min(k / 2), p.min(k / 2)),
                groups: g,
                has_bias: false,
            };
            (p, Shape::new(1, g * ci, h, w), seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_output_shape_formula((p, s, seed) in conv_case()) {
        let mut rng = Rng::new(seed);
        let x = Tensor::new(s, rng.fill_uniform(s.numel(), 1.0)).unwrap();
        let w = Tensor::new(p.weight_shape(), rng.fill_uniform(p.weight_shape().numel(), 1.0)).unwrap();
        let y = conv2d(&x, &w, None, &p).unwrap();
        let (kh, sh, ph) = (p.kernel.0, p.stride.0, p.padding.0);
        prop_assert_eq!(y.shape(), Shape::new(1, p.out_ch, (s.h + 2 * ph - kh) / sh + 1, (s.w + 2 * ph - kh) / sh + 1));
        prop_assert_eq!((y.shape().h, y.shape().w), p.output_hw(s.h, s.w).unwrap());
    }

    #[test]
    fn conv_is_linear_in_weights((p, s, seed) in conv_case()) {
        let mut rng = Rng::new(seed);
        let x = Tensor::new(s, rng.fill_uniform(s.numel(), 1.0)).unwrap();
        let ws = p.weight_shape();
        let w1 = rng.fill_uniform(ws.numel(), 1.0);
        let w2 = rng.fill_uniform(ws.numel(), 1.0);
        let sum: Vec<f32> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let f = |w: Vec<f32>| conv2d(&x, &Tensor::new(ws, w).unwrap(), None, &p).unwrap();
        let (a, b, c) = (f(w1), f(w2), f(sum));
        for ((a, b), c) in a.data().iter().zip(b.data()).zip(c.data()) {
            prop_assert!((a + b - c).abs() <= 1e-4 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn mbconv_macs_scale_with_batch(c in 1usize..64, o in 1usize..64, e in 1usize..7, fused: bool, stride in 1usize..3, res in 4usize..40, n in 1usize..5) {
        let spec = BlockSpec::MbConv(MbConvSpec::new(c, o, e, stride, fused).unwrap());
        let total = |n| -> u64 { block_costs(&spec, "m", Shape::new(n, c, res, res)).unwrap().iter().map(|l| l.macs).sum() };
        prop_assert_eq!(total(n), n as u64 * total(1));
    }

    #[test]
    fn fused_ratio_bounded_and_growing(c in 2usize..4096, e in 1usize..9) {
        let r = mbconv_mac_ratio(c, e);
        prop_assert!(r > 1.0 && r < 5.0);
        prop_assert!(mbconv_mac_ratio(c + 1, e) > r);
        prop_assert_eq!(r, mbconv_mac_ratio(c, e + 1));
    }

    #[test]
    fn scenario_ratio_is_reciprocal(ra in 1usize..64, ca in 1usize..512, rb in 1usize..64, cb in 1usize..512, depth in 1usize..30) {
        let ab = scenario_mac_ratio(ra * 4, ca, rb * 4, cb, 3, depth);
        let ba = scenario_mac_ratio(rb * 4, cb, ra * 4, ca, 3, depth);
        prop_assert!((ab * ba - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_file_round_trip(dims in prop::collection::vec(prop::collection::vec(1usize..5, 0..4), 0..6), seed: u64) {
        let mut rng = Rng::new(seed);
        let tensors = dims
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let len = d.iter().product::<usize>();
                NamedTensor { name: format!("layer{i}.weight"), dims: d.clone(), data: rng.fill_uniform(len, 10.0) }
            })
            .collect();
        let file = WeightFile { tensors };
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        let back = WeightFile::read_from(&mut bytes.as_slice()).unwrap();
        prop_assert!(back.bit_eq(&file));
        if !bytes.is_empty() {
            let cut = bytes.len() - 1;
            prop_assert!(WeightFile::read_from(&mut &bytes[..cut]).is_err());
        }
    }

    #[test]
    fn sig6_keeps_six_digits(x in -1e12f64..1e12) {
        let r = sig6(x);
        prop_assert_eq!(sig6(r), r);
        prop_assert!((r - x).abs() <= 5e-6 * x.abs());
    }

    #[test]
    fn softmax_rows_are_distributions(row in prop::collection::vec(-50f32..50.0, 1..64)) {
        let mut r = row.clone();
        softmax_row(&mut r);
        prop_assert!(r.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!((r.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        let argmax = row.iter().enumerate().fold(0, |m, (i, v)| if *v > row[m] { i } else { m });
        prop_assert!(r.iter().all(|&p| p <= r[argmax]));
    }
}
