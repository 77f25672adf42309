use nedb::attention::{attention_weights, non_local_on_tape, DistanceMatrix, NonLocalVars};
use nedb::tensor::{Shape, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{grid_distance, monotonicity_instance, non_local_shapes, random, vanilla_non_local};

proptest! {
    #[test]
    fn rows_sum_to_one(seed in any::<u64>(), h in 1usize..6, w in 1usize..6, distance in any::<bool>()) {
        let p = h * w;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cor = random(&mut rng, Shape::new(2, 1, p, p), 20.0);
        let d = DistanceMatrix::new(h, w).unwrap();
        let a = attention_weights(&cor, distance.then_some(&d)).unwrap();
        for row in a.data().chunks(p) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_depends_only_on_offsets(h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
        let d = DistanceMatrix::new(h, w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let (i, j, k) = (rng.gen_range(0..h * w), rng.gen_range(0..h * w), rng.gen_range(0..h * w));
            let (dr, dc) = ((j / w) as isize - (i / w) as isize, (j % w) as isize - (i % w) as isize);
            let (lr, lc) = ((k / w) as isize + dr, (k % w) as isize + dc);
            if lr >= 0 && lc >= 0 && (lr as usize) < h && (lc as usize) < w {
                let l = lr as usize * w + lc as usize;
                prop_assert_eq!(d.get(i, j), d.get(k, l));
            }
        }
    }
}

/// For a query with two keys of equal correlation `c`, the nearer key wins
/// when `c > 0` and loses when `c < 0`.
#[test]
fn nearer_key_wins_for_positive_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 100 {
        let Some((h, w, q, near, far)) = monotonicity_instance(&mut rng, grid_distance) else { continue };
        let p = h * w;
        let d = DistanceMatrix::new(h, w).unwrap();
        for sign in [1.0, -1.0] {
            let c = sign * rng.gen_range(0.1..5.0);
            let mut cor = random(&mut rng, Shape::new(1, 1, p, p), 3.0).into_vec();
            cor[q * p + near] = c;
            cor[q * p + far] = c;
            let a = attention_weights(&Tensor::new(Shape::new(1, 1, p, p), cor).unwrap(), Some(&d)).unwrap();
            let (an, af) = (a.data()[q * p + near], a.data()[q * p + far]);
            if sign > 0.0 {
                assert!(an > af, "c={c}: near {an} far {af}");
            } else {
                assert!(an < af, "c={c}: near {an} far {af}");
            }
        }
        checked += 1;
    }
}

#[test]
fn vanilla_matches_textbook_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (c, r) = (16, 2);
    let x = random(&mut rng, Shape::new(1, c, 8, 8), 1.0);
    let ws: Vec<Tensor> = non_local_shapes(c, r).iter().map(|&s| random(&mut rng, s, 0.5)).collect();
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let v: Vec<_> = ws.iter().map(|w| tape.constant(w.clone())).collect();
    let vars = NonLocalVars { query: (v[0], v[1]), key: (v[2], v[3]), value: (v[4], v[5]), out: (v[6], v[7]) };
    let (y, _) = non_local_on_tape(&mut tape, xv, &vars, None).unwrap();
    for (a, b) in tape.value(y).data().iter().zip(vanilla_non_local(&x, &ws)) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
}
