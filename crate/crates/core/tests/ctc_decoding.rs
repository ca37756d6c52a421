//! CTC loss against exhaustive path enumeration, and decoder behaviour.

mod common;

use common::{feasible_instance, needed_frames, random_log_probs};
use lateral_core::ctc::{
    beam_decode, collapse, ctc_brute_force, ctc_loss, greedy_decode, min_frames, prefix_log_prob, BeamConfig,
};
use lateral_core::head::Alphabet;
use lateral_core::linalg::Matrix;
use lateral_core::lm::CharNGramLm;
use lateral_core::rng::DetRng;
use lateral_core::Error;

#[test]
fn loss_equals_brute_force() {
    let mut rng = DetRng::new(11);
    for _ in 0..200 {
        let (lp, target) = feasible_instance(&mut rng, 6, 4, 3);
        let fast = ctc_loss(&lp, &target).unwrap().loss;
        let slow = ctc_brute_force(&lp, &target).unwrap();
        assert!((fast - slow).abs() <= 1e-9, "{fast} vs {slow} for {target:?}");
        assert!(fast >= 0.0);
    }
}

#[test]
fn gradient_rows_sum_to_minus_one() {
    let mut rng = DetRng::new(12);
    for _ in 0..100 {
        let (lp, target) = feasible_instance(&mut rng, 8, 5, 4);
        let res = ctc_loss(&lp, &target).unwrap();
        for t in 0..lp.rows() {
            let s: f64 = res.grad.row(t).iter().sum();
            assert!((s + 1.0).abs() < 1e-9, "row {t} sums to {s}");
            assert!(res.grad.row(t).iter().all(|&g| g <= 1e-15));
        }
    }
}

#[test]
fn infeasible_targets_are_reported() {
    let mut rng = DetRng::new(13);
    for _ in 0..100 {
        let t = 1 + rng.below(4) as usize;
        let target: Vec<usize> = (0..t + 1 + rng.below(3) as usize).map(|_| 1 + rng.below(2) as usize).collect();
        let lp = random_log_probs(&mut rng, t, 3, 1.0);
        assert_eq!(min_frames(&target), needed_frames(&target));
        assert!(matches!(ctc_loss(&lp, &target), Err(Error::Infeasible { .. })));
    }
    // repeats need a separating blank
    let lp = random_log_probs(&mut rng, 2, 3, 1.0);
    assert!(matches!(ctc_loss(&lp, &[1, 1]), Err(Error::Infeasible { .. })));
    assert!(ctc_loss(&lp, &[1, 2]).is_ok());
}

#[test]
fn empty_target_is_all_blank_path() {
    let mut rng = DetRng::new(14);
    let lp = random_log_probs(&mut rng, 4, 3, 1.0);
    let expected: f64 = -(0..4).map(|t| lp.get(t, 0)).sum::<f64>();
    assert!((ctc_loss(&lp, &[]).unwrap().loss - expected).abs() < 1e-12);
}

#[test]
fn collapse_examples() {
    assert_eq!(collapse(&[1, 0, 1]), vec![1, 1]);
    assert_eq!(collapse(&[1, 1, 0, 2, 2]), vec![1, 2]);
    assert_eq!(collapse(&[0, 0]), Vec::<usize>::new());
}

#[test]
fn greedy_takes_best_path() {
    let alphabet = Alphabet::from_chars("ab").unwrap();
    let rows = [[0.1, 0.8, 0.1], [0.1, 0.8, 0.1], [0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]];
    let lp = Matrix::from_rows(&rows.iter().map(|r| r.iter().map(|p: &f64| p.ln()).collect()).collect::<Vec<Vec<f64>>>()).unwrap();
    assert_eq!(greedy_decode(&lp, &alphabet), "aab");
}

/// Every label sequence over `1..v` of length at most `max_len`.
fn all_prefixes(v: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for c in 1..v {
                let mut q: Vec<usize> = p.clone();
                q.push(c);
                next.push(q);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn wide_beam_without_lm_finds_most_probable_labelling() {
    let alphabet = Alphabet::from_chars("ab").unwrap();
    let lm = CharNGramLm::train(&["ab"], 2).unwrap();
    let cfg = BeamConfig { beam_width: 64, alpha: 0.0, beta: 0.0 };
    let mut rng = DetRng::new(15);
    for _ in 0..60 {
        let t = 1 + rng.below(5) as usize;
        let lp = random_log_probs(&mut rng, t, 3, 2.0);
        let scored: Vec<(f64, Vec<usize>)> = all_prefixes(3, t)
            .into_iter()
            .map(|p| (prefix_log_prob(&lp, &p), p))
            .collect();
        let best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let got = alphabet.encode(&beam_decode(&lp, &alphabet, &lm, &cfg).unwrap()).unwrap();
        let got_score = prefix_log_prob(&lp, &got);
        assert!((got_score - best).abs() < 1e-9, "beam {got:?} {got_score} vs best {best}");
    }
}

#[test]
fn language_model_steers_ambiguous_frames() {
    let alphabet = Alphabet::from_chars("ab").unwrap();
    // each frame is split evenly between 'a' and 'b'
    let row = [0.02f64.ln(), 0.49f64.ln(), 0.49f64.ln()];
    let lp = Matrix::from_rows(&[row.to_vec(), vec![0.9f64.ln(), 0.05f64.ln(), 0.05f64.ln()], row.to_vec()]).unwrap();
    for want in ["ab", "ba", "aa"] {
        let lm = CharNGramLm::train_with_vocab(&vec![want; 50], 3, "ab".chars()).unwrap();
        let cfg = BeamConfig { beam_width: 8, alpha: 2.0, beta: 0.0 };
        assert_eq!(beam_decode(&lp, &alphabet, &lm, &cfg).unwrap(), want);
    }
}

#[test]
fn beam_rejects_bad_settings() {
    let alphabet = Alphabet::from_chars("ab").unwrap();
    let lm = CharNGramLm::train(&["ab"], 2).unwrap();
    let lp = random_log_probs(&mut DetRng::new(1), 2, 3, 1.0);
    let bad = BeamConfig { beam_width: 0, ..BeamConfig::default() };
    assert!(beam_decode(&lp, &alphabet, &lm, &bad).is_err());
    let wrong_width = random_log_probs(&mut DetRng::new(1), 2, 4, 1.0);
    assert!(beam_decode(&wrong_width, &alphabet, &lm, &BeamConfig::default()).is_err());
}
