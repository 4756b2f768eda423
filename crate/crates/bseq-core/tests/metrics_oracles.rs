//! Oracle tests for the sequence metrics: macro scores re-derived with
//! direct per-class arithmetic, and rank AUC re-derived with quadratic
//! pairwise counting (ties worth one half).

use bseq_core::metrics::{rank_auc, seq_metrics};
use bseq_core::mlp::ClassProbSequence;
use bseq_core::seeds;
use rand::Rng;

fn pairwise_auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0u64;
    for i in 0..scores.len() {
        if !positives[i] {
            continue;
        }
        for j in 0..scores.len() {
            if positives[j] {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    if pairs == 0 {
        None
    } else {
        Some(wins / pairs as f64)
    }
}

#[test]
fn rank_auc_equals_pairwise_counting_with_heavy_ties() {
    let mut rng = seeds::rng(404, &[]);
    for trial in 0..50 {
        let n = rng.gen_range(2..=500);
        // Quantized scores force plenty of exact ties.
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect();
        let mut positives: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        // Guarantee both classes so the AUC is defined.
        positives[0] = true;
        if n > 1 {
            positives[1] = false;
        }
        let got = rank_auc(&scores, &positives);
        let want = pairwise_auc(&scores, &positives);
        match (got, want) {
            (Some(g), Some(w)) => {
                assert!((g - w).abs() < 1e-12, "trial {trial}: rank {g} vs pairwise {w}")
            }
            (g, w) => panic!("trial {trial}: definedness mismatch {g:?} vs {w:?}"),
        }
    }
}

#[test]
fn macro_scores_match_direct_arithmetic() {
    let mut rng = seeds::rng(405, &[]);
    for trial in 0..50 {
        let k = rng.gen_range(2..=5usize);
        let n = rng.gen_range(1..=500usize);
        let preds: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k) as u8).collect();
        let gts: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k) as u8).collect();
        let got = seq_metrics(&preds, &gts, k, None).unwrap();

        let mut sum_p = 0.0;
        let mut sum_r = 0.0;
        let mut sum_f1 = 0.0;
        let mut correct = 0usize;
        for c in 0..k as u8 {
            let tp = preds.iter().zip(&gts).filter(|(&p, &g)| p == c && g == c).count() as f64;
            let fp = preds.iter().zip(&gts).filter(|(&p, &g)| p == c && g != c).count() as f64;
            let fneg = preds.iter().zip(&gts).filter(|(&p, &g)| p != c && g == c).count() as f64;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
            sum_p += prec;
            sum_r += rec;
            sum_f1 += if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        }
        for (p, g) in preds.iter().zip(&gts) {
            correct += (p == g) as usize;
        }
        assert!((got.precision - sum_p / k as f64).abs() < 1e-12, "trial {trial} precision");
        assert!((got.recall - sum_r / k as f64).abs() < 1e-12, "trial {trial} recall");
        assert!((got.f1 - sum_f1 / k as f64).abs() < 1e-12, "trial {trial} f1");
        assert!((got.accuracy - correct as f64 / n as f64).abs() < 1e-12, "trial {trial} accuracy");
    }
}

#[test]
fn macro_auc_averages_defined_classes_only() {
    let mut rng = seeds::rng(406, &[]);
    for trial in 0..25 {
        let k = 3usize;
        let n = rng.gen_range(3..=200usize);
        // Class 2 never appears in the ground truth: it must be skipped.
        let gts: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
        let preds: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k) as u8).collect();
        let mut probs = vec![0.0; n * k];
        for row in probs.chunks_mut(k) {
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = rng.gen_range(0.05..1.0);
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let seq = ClassProbSequence { n, k, probs: probs.clone() };
        let got = seq_metrics(&preds, &gts, k, Some(&seq)).unwrap();

        let mut expect = Vec::new();
        for c in 0..k {
            let scores: Vec<f64> = (0..n).map(|i| probs[i * k + c]).collect();
            let pos: Vec<bool> = gts.iter().map(|&g| g as usize == c).collect();
            if let Some(a) = pairwise_auc(&scores, &pos) {
                expect.push(a);
            }
        }
        if expect.is_empty() {
            assert_eq!(got.auc, None, "trial {trial}");
        } else {
            let want = expect.iter().sum::<f64>() / expect.len() as f64;
            let g = got.auc.expect("AUC should be defined");
            assert!((g - want).abs() < 1e-12, "trial {trial}: {g} vs {want}");
        }
    }
}
