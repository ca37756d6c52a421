//! Hard-gate, diagonal-inertness and always-open-gate properties of the LI layer and head.

use lateral_core::head::{head_backward, head_forward, AcousticHead, HeadKind};
use lateral_core::li::{li_backward, li_forward, LiParams, SurrogateMode};
use lateral_core::linalg::{Matrix, Vector};
use lateral_core::rng::DetRng;
use proptest::prelude::*;

fn random_params(d: usize, rng: &mut DetRng) -> LiParams {
    let w = Matrix::from_vec(d, d, (0..d * d).map(|_| rng.normal()).collect()).unwrap();
    let b = Vector((0..d).map(|_| 0.5 * rng.normal()).collect());
    LiParams::new(w, b, 10.0).unwrap()
}

fn with_random_diag(p: &LiParams, rng: &mut DetRng) -> LiParams {
    let mut q = p.clone();
    for i in 0..q.dim() {
        q.w.set(i, i, 100.0 * rng.normal());
    }
    q
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn hard_gate_outputs_are_zero_or_input() {
    let mut rng = DetRng::new(3);
    for _ in 0..1000 {
        let d = 1 + rng.below(8) as usize;
        let p = random_params(d, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let (y, _) = li_forward(&x, &p).unwrap();
        for (yi, xi) in y.iter().zip(&x) {
            assert!(yi.to_bits() == 0.0f64.to_bits() || yi.to_bits() == xi.to_bits(), "{yi} vs {xi}");
        }
    }
}

#[test]
fn diagonal_of_w_is_inert() {
    let mut rng = DetRng::new(4);
    for _ in 0..300 {
        let d = 2 + rng.below(6) as usize;
        let p = random_params(d, &mut rng);
        let q = with_random_diag(&p, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let dy: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let (yp, cp) = li_forward(&x, &p).unwrap();
        let (yq, cq) = li_forward(&x, &q).unwrap();
        assert_eq!(bits(&yp), bits(&yq));
        for mode in [SurrogateMode::Hard, SurrogateMode::Relaxed] {
            let gp = li_backward(&cp, &p, &dy, mode).unwrap();
            let gq = li_backward(&cq, &q, &dy, mode).unwrap();
            assert_eq!(bits(&gp.dx), bits(&gq.dx));
            assert_eq!(bits(&gp.db), bits(&gq.db));
            assert_eq!(bits(gp.dw.as_slice()), bits(gq.dw.as_slice()));
            for i in 0..d {
                assert_eq!(gp.dw.get(i, i), 0.0);
            }
        }
    }
}

#[test]
fn head_with_open_gates_equals_feed_forward() {
    let mut rng = DetRng::new(5);
    let (d, v) = (6, 5);
    for case in 0..50 {
        let mut dense_a = DetRng::new(case);
        let mut dense_b = DetRng::new(case);
        let mut li_rng = DetRng::new(1000 + case);
        let ff = AcousticHead::init(HeadKind::FeedForward, d, v, 10.0, &mut dense_a, &mut li_rng).unwrap();
        let mut li = AcousticHead::init(HeadKind::LateralInhibition, d, v, 10.0, &mut dense_b, &mut li_rng).unwrap();
        li.li.as_mut().unwrap().b = Vector(vec![1e6; d]);
        let t = 1 + rng.below(6) as usize;
        let frames = Matrix::from_vec(t, d, (0..t * d).map(|_| rng.normal()).collect()).unwrap();
        let (a, _) = head_forward(&frames, &ff).unwrap();
        let (b, _) = head_forward(&frames, &li).unwrap();
        assert_eq!(bits(a.as_slice()), bits(b.as_slice()));
    }
}

#[test]
fn open_gate_dense_gradients_equal_feed_forward() {
    let mut rng = DetRng::new(6);
    let (d, v, t) = (4, 3, 5);
    let mut dense_a = DetRng::new(1);
    let mut dense_b = DetRng::new(1);
    let mut li_rng = DetRng::new(2);
    let ff = AcousticHead::init(HeadKind::FeedForward, d, v, 10.0, &mut dense_a, &mut li_rng).unwrap();
    let mut li = AcousticHead::init(HeadKind::LateralInhibition, d, v, 10.0, &mut dense_b, &mut li_rng).unwrap();
    li.li.as_mut().unwrap().b = Vector(vec![1e6; d]);
    let frames = Matrix::from_vec(t, d, (0..t * d).map(|_| rng.normal()).collect()).unwrap();
    let up = Matrix::from_vec(t, v, (0..t * v).map(|_| rng.normal()).collect()).unwrap();
    let (_, cf) = head_forward(&frames, &ff).unwrap();
    let (_, cl) = head_forward(&frames, &li).unwrap();
    let gf = head_backward(&ff, &cf, &up, SurrogateMode::Hard).unwrap();
    let gl = head_backward(&li, &cl, &up, SurrogateMode::Hard).unwrap();
    assert_eq!(bits(gf.dp.as_slice()), bits(gl.dp.as_slice()));
    assert_eq!(bits(&gf.dc), bits(&gl.dc));
}

proptest! {
    #[test]
    fn forward_is_bitwise_zero_or_input(
        seed in any::<u64>(),
        d in 1usize..10,
    ) {
        let mut rng = DetRng::new(seed);
        let p = random_params(d, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| 3.0 * rng.normal()).collect();
        let (y, cache) = li_forward(&x, &p).unwrap();
        for i in 0..d {
            let open = cache.z[i] > 0.0;
            prop_assert_eq!(cache.g[i], if open { 1.0 } else { 0.0 });
            prop_assert_eq!(y[i].to_bits(), if open { x[i].to_bits() } else { 0.0f64.to_bits() });
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients(seed in any::<u64>(), d in 1usize..8) {
        let mut rng = DetRng::new(seed);
        let p = random_params(d, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let (_, cache) = li_forward(&x, &p).unwrap();
        let g = li_backward(&cache, &p, &vec![0.0; d], SurrogateMode::Hard).unwrap();
        prop_assert!(g.dx.iter().chain(g.db.iter()).chain(g.dw.as_slice()).all(|&v| v == 0.0));
    }
}
