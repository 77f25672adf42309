use nedb::harness::gradcheck::registry;
use nedb::tensor::gradcheck::CheckConfig;
use nedb::tensor::{ops, Shape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tensor(shape: Shape) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, shape.numel()).prop_map(move |d| Tensor::new(shape, d).unwrap())
}

/// Direct cross-correlation with zero padding.
fn conv_oracle(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    let ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    let mut out = Vec::new();
    for n in 0..xs.n {
        for o in 0..ws.n {
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = 0.0;
                    for i in 0..ws.c {
                        for kr in 0..ws.h {
                            for kc in 0..ws.w {
                                let (yr, yc) = ((r * stride + kr) as isize - pad as isize, (c * stride + kc) as isize - pad as isize);
                                if yr >= 0 && yc >= 0 && (yr as usize) < xs.h && (yc as usize) < xs.w {
                                    acc += x.at(n, i, yr as usize, yc as usize) * w.at(o, i, kr, kc);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts(x in tensor(Shape::new(2, 1, 4, 6)), shift in -50.0f64..50.0) {
        let y = ops::softmax_rows(&x);
        for row in y.data().chunks(6) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted = ops::softmax_rows(&x.map(|v| v + shift).unwrap());
        for (a, b) in y.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_is_linear(
        x in tensor(Shape::new(1, 2, 5, 5)),
        y in tensor(Shape::new(1, 2, 5, 5)),
        w in tensor(Shape::new(3, 2, 3, 3)),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let mix = Tensor::new(x.shape(), x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let lhs = ops::conv2d(&mix, &w, None, 1, 1).unwrap();
        let cx = ops::conv2d(&x, &w, None, 1, 1).unwrap();
        let cy = ops::conv2d(&y, &w, None, 1, 1).unwrap();
        for ((l, p), q) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
            prop_assert!((l - (a * p + b * q)).abs() < 1e-10);
        }
    }

    #[test]
    fn conv_matches_direct_cross_correlation(
        x in tensor(Shape::new(2, 3, 7, 6)),
        w in tensor(Shape::new(2, 3, 3, 3)),
        stride in 1usize..3,
        pad in 0usize..2,
    ) {
        let got = ops::conv2d(&x, &w, None, stride, pad).unwrap();
        for (g, o) in got.data().iter().zip(conv_oracle(&x, &w, stride, pad)) {
            prop_assert!((g - o).abs() < 1e-10);
        }
    }

    #[test]
    fn concat_then_slice_recovers_inputs(a in tensor(Shape::new(2, 2, 3, 3)), b in tensor(Shape::new(2, 3, 3, 3))) {
        let cat = ops::concat_channels(&[&a, &b]).unwrap();
        prop_assert_eq!(ops::slice_channels(&cat, 0, 2).unwrap(), a);
        prop_assert_eq!(ops::slice_channels(&cat, 2, 3).unwrap(), b);
    }
}

#[test]
fn every_op_passes_over_twenty_seeds() {
    let cfg = CheckConfig::default();
    for case in registry() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = case.check(&mut rng, &cfg).unwrap();
            assert!(r.passed, "{} seed {seed}: {r:?}", case.name);
        }
    }
}
