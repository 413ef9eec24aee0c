//! Training objectives and the grounding metric: token cross-entropy, mask
//! binary cross-entropy, dice loss and IoU. Losses are unreduced sums.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, MaskError};

/// BCE clamps predictions to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_DICE_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("position {position}: target {target} outside vocabulary of {vocab}")]
    TargetOutOfVocabulary { position: usize, target: usize, vocab: usize },
    #[error("position {position}: probabilities sum to {sum}")]
    NotNormalized { position: usize, sum: f64 },
    #[error("position {position}: non-positive probability")]
    NonPositive { position: usize },
    #[error("prediction and ground truth sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("ground truth must be 0 or 1")]
    NonBinaryTruth,
    #[error("dice epsilon must be positive")]
    BadEpsilon,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Per-position next-token distributions with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistributionSequence {
    probs: Vec<Vec<f64>>,
    targets: Vec<usize>,
}

impl TokenDistributionSequence {
    pub fn new(probs: Vec<Vec<f64>>, targets: Vec<usize>) -> Result<Self, ObjectiveError> {
        if probs.len() != targets.len() {
            return Err(ObjectiveError::SizeMismatch(probs.len(), targets.len()));
        }
        for (i, (p, &t)) in probs.iter().zip(&targets).enumerate() {
            if t >= p.len() {
                return Err(ObjectiveError::TargetOutOfVocabulary { position: i, target: t, vocab: p.len() });
            }
            if p.iter().any(|&x| !(x > 0.0)) {
                return Err(ObjectiveError::NonPositive { position: i });
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(ObjectiveError::NotNormalized { position: i, sum });
            }
        }
        Ok(TokenDistributionSequence { probs, targets })
    }

    /// Softmax of each score row.
    pub fn from_logits(logits: &[Vec<f64>], targets: Vec<usize>) -> Result<Self, ObjectiveError> {
        let probs = logits
            .iter()
            .map(|row| {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
                let z: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / z).collect()
            })
            .collect();
        TokenDistributionSequence::new(probs, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// `-sum_i ln p_i(y_i)`.
pub fn cross_entropy(seq: &TokenDistributionSequence) -> f64 {
    seq.probs.iter().zip(&seq.targets).map(|(p, &t)| -p[t].ln()).sum()
}

/// Predicted probabilities paired with a binary ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftMask {
    pub width: u32,
    pub height: u32,
    pub pred: Vec<f64>,
    pub truth: Vec<f64>,
}

impl SoftMask {
    pub fn new(width: u32, height: u32, pred: Vec<f64>, truth: Vec<f64>) -> Result<Self, ObjectiveError> {
        let n = width as usize * height as usize;
        if pred.len() != n || truth.len() != n {
            return Err(ObjectiveError::SizeMismatch(pred.len(), truth.len()));
        }
        if truth.iter().any(|&g| g != 0.0 && g != 1.0) {
            return Err(ObjectiveError::NonBinaryTruth);
        }
        Ok(SoftMask { width, height, pred, truth })
    }

    pub fn from_masks(pred: Vec<f64>, truth: &BinaryMask) -> Result<Self, ObjectiveError> {
        let t = truth.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        SoftMask::new(truth.width(), truth.height(), pred, t)
    }

    fn clamped(&self, i: usize) -> f64 {
        self.pred[i].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }
}

/// A loss value with its gradient with respect to every predicted pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub fn bce_mask(mask: &SoftMask) -> LossGrad {
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(mask.pred.len());
    for (i, &g) in mask.truth.iter().enumerate() {
        let p = mask.clamped(i);
        value -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
        grad.push(-g / p + (1.0 - g) / (1.0 - p));
    }
    LossGrad { value, grad }
}

/// `1 - 2 sum(p g) / (sum p + sum g + eps)`.
pub fn dice_loss(mask: &SoftMask, eps: f64) -> Result<LossGrad, ObjectiveError> {
    if !(eps > 0.0) {
        return Err(ObjectiveError::BadEpsilon);
    }
    let inter: f64 = mask.pred.iter().zip(&mask.truth).map(|(p, g)| p * g).sum();
    let denom: f64 = mask.pred.iter().sum::<f64>() + mask.truth.iter().sum::<f64>() + eps;
    let value = 1.0 - 2.0 * inter / denom;
    let grad = mask
        .truth
        .iter()
        .map(|g| -2.0 * (g * denom - inter) / (denom * denom))
        .collect();
    Ok(LossGrad { value, grad })
}

/// BCE plus dice.
pub fn joint_grounding_loss(mask: &SoftMask, eps: f64) -> Result<LossGrad, ObjectiveError> {
    let b = bce_mask(mask);
    let d = dice_loss(mask, eps)?;
    Ok(LossGrad {
        value: b.value + d.value,
        grad: b.grad.iter().zip(&d.grad).map(|(x, y)| x + y).collect(),
    })
}

/// Planning plus grounding loss, `plan + weight * grounding`.
pub fn total_loss(plan: f64, grounding: f64, grounding_weight: f64) -> f64 {
    plan + grounding_weight * grounding
}

/// `|a ∩ b| / |a ∪ b|`; two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, ObjectiveError> {
    a.same_shape(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all components.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub bce_max_rel_error: f64,
    pub dice_max_rel_error: f64,
    pub joint_max_rel_error: f64,
    pub ce_uniform_max_abs_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.bce_max_rel_error < tol
            && self.dice_max_rel_error < tol
            && self.joint_max_rel_error < tol
            && self.ce_uniform_max_abs_error <= 1e-12
    }
}

/// Finite-difference check over `instances` random 8x8 soft masks.
pub fn check_gradients(instances: usize, seed: u64) -> GradCheckReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut report = GradCheckReport {
        instances,
        bce_max_rel_error: 0.0,
        dice_max_rel_error: 0.0,
        joint_max_rel_error: 0.0,
        ce_uniform_max_abs_error: 0.0,
    };
    for _ in 0..instances {
        let pred: Vec<f64> = (0..64).map(|_| rng.gen_range(0.05..0.95)).collect();
        let truth: Vec<f64> = (0..64).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
        let mask = SoftMask::new(8, 8, pred.clone(), truth.clone()).expect("8x8");
        let with = |p: &[f64]| SoftMask { pred: p.to_vec(), ..mask.clone() };

        let bce = bce_mask(&mask);
        let num = finite_difference(&pred, h, |p| bce_mask(&with(p)).value);
        report.bce_max_rel_error = report.bce_max_rel_error.max(max_relative_error(&bce.grad, &num, 1e-8));

        let dice = dice_loss(&mask, DEFAULT_DICE_EPS).expect("eps > 0");
        let num = finite_difference(&pred, h, |p| dice_loss(&with(p), DEFAULT_DICE_EPS).unwrap().value);
        report.dice_max_rel_error = report.dice_max_rel_error.max(max_relative_error(&dice.grad, &num, 1e-8));

        let joint = joint_grounding_loss(&mask, DEFAULT_DICE_EPS).expect("eps > 0");
        let num = finite_difference(&pred, h, |p| joint_grounding_loss(&with(p), DEFAULT_DICE_EPS).unwrap().value);
        report.joint_max_rel_error = report.joint_max_rel_error.max(max_relative_error(&joint.grad, &num, 1e-8));

        let n = rng.gen_range(1..20usize);
        let v = rng.gen_range(2..50usize);
        let seq = TokenDistributionSequence::new(vec![vec![1.0 / v as f64; v]; n], vec![0; n]).or_else(|_| {
            // 1/v may not sum to exactly 1 within 1e-12 for every v; fall back to logits.
            TokenDistributionSequence::from_logits(&vec![vec![0.0; v]; n], vec![0; n])
        });
        let ce = cross_entropy(&seq.expect("uniform rows"));
        let expected = n as f64 * (v as f64).ln();
        report.ce_uniform_max_abs_error = report.ce_uniform_max_abs_error.max((ce - expected).abs());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mask(pred: Vec<f64>, truth: Vec<f64>) -> SoftMask {
        let n = pred.len() as u32;
        SoftMask::new(n, 1, pred, truth).unwrap()
    }

    #[test]
    fn uniform_cross_entropy() {
        let (n, v) = (6, 13);
        let seq = TokenDistributionSequence::from_logits(&vec![vec![0.5; v]; n], vec![3; n]).unwrap();
        assert!((cross_entropy(&seq) - n as f64 * (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_cross_entropy_is_zero() {
        let seq = TokenDistributionSequence::from_logits(&[vec![0.0, 40.0, 0.0]], vec![1]).unwrap();
        assert!(cross_entropy(&seq).abs() < 1e-12);
    }

    #[test]
    fn random_cross_entropy_matches_direct_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let logits: Vec<Vec<f64>> = (0..5).map(|_| (0..7).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let targets: Vec<usize> = (0..5).map(|_| rng.gen_range(0..7)).collect();
        // Oracle: log-sum-exp written out per position.
        let expected: f64 = logits
            .iter()
            .zip(&targets)
            .map(|(row, &t)| row.iter().map(|x| x.exp()).sum::<f64>().ln() - row[t])
            .sum();
        let seq = TokenDistributionSequence::from_logits(&logits, targets).unwrap();
        assert_relative_eq!(cross_entropy(&seq), expected, max_relative = 1e-14);
    }

    #[test]
    fn target_outside_vocabulary() {
        let err = TokenDistributionSequence::new(vec![vec![0.5, 0.5]], vec![2]).unwrap_err();
        assert!(matches!(err, ObjectiveError::TargetOutOfVocabulary { .. }));
    }

    #[test]
    fn bce_single_pixel_half() {
        let l = bce_mask(&mask(vec![0.5], vec![1.0]));
        assert!((l.value - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_near_perfect() {
        let truth = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let l = bce_mask(&mask(truth.clone(), truth.clone()));
        assert!(l.value <= truth.len() as f64 * 1.1e-7);
    }

    #[test]
    fn dice_perfect_and_disjoint() {
        let eps = DEFAULT_DICE_EPS;
        let truth = vec![1.0, 1.0, 0.0, 1.0];
        let s = 3.0;
        let l = dice_loss(&mask(truth.clone(), truth), eps).unwrap();
        assert!((l.value - (1.0 - 2.0 * s / (2.0 * s + eps))).abs() < 1e-15);
        let l = dice_loss(&mask(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]), eps).unwrap();
        assert_eq!(l.value, 1.0);
        assert!(dice_loss(&mask(vec![0.5], vec![1.0]), 0.0).is_err());
    }

    #[test]
    fn joint_is_sum() {
        let m = mask(vec![0.2, 0.7, 0.9], vec![0.0, 1.0, 1.0]);
        let j = joint_grounding_loss(&m, 1e-6).unwrap();
        let b = bce_mask(&m);
        let d = dice_loss(&m, 1e-6).unwrap();
        assert_eq!(j.value, b.value + d.value);
        for i in 0..3 {
            assert_eq!(j.grad[i], b.grad[i] + d.grad[i]);
        }
        assert_eq!(total_loss(2.0, j.value, 0.5), 2.0 + 0.5 * j.value);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let r = check_gradients(100, 42);
        assert!(r.passes(1e-4), "{r:?}");
    }

    #[test]
    fn iou_cases() {
        let a = BinaryMask::from_vec(2, 2, vec![true, true, false, false]).unwrap();
        let b = BinaryMask::from_vec(2, 2, vec![false, false, true, true]).unwrap();
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let e = BinaryMask::empty(2, 2);
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert!(iou(&a, &BinaryMask::empty(3, 2)).is_err());
    }

    proptest! {
        #[test]
        fn iou_matches_brute_force(a in proptest::collection::vec(any::<bool>(), 64), b in proptest::collection::vec(any::<bool>(), 64)) {
            let ma = BinaryMask::from_vec(8, 8, a.clone()).unwrap();
            let mb = BinaryMask::from_vec(8, 8, b.clone()).unwrap();
            let i = a.iter().zip(&b).filter(|(x, y)| **x && **y).count();
            let u = a.iter().zip(&b).filter(|(x, y)| **x || **y).count();
            let expected = if u == 0 { 1.0 } else { i as f64 / u as f64 };
            prop_assert_eq!(iou(&ma, &mb).unwrap(), expected);
            prop_assert_eq!(iou(&ma, &mb).unwrap(), iou(&mb, &ma).unwrap());
        }

        #[test]
        fn losses_bounded(pred in proptest::collection::vec(0.0f64..=1.0, 16), truth in proptest::collection::vec(any::<bool>(), 16)) {
            let t: Vec<f64> = truth.iter().map(|&b| b as u8 as f64).collect();
            let m = SoftMask::new(4, 4, pred, t).unwrap();
            prop_assert!(bce_mask(&m).value >= 0.0);
            let d = dice_loss(&m, DEFAULT_DICE_EPS).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn ce_decreases_toward_target(v in 2usize..10, shift in 0.01f64..2.0) {
            let base = vec![0.0; v];
            let mut better = base.clone();
            better[0] += shift;
            let a = cross_entropy(&TokenDistributionSequence::from_logits(&[base], vec![0]).unwrap());
            let b = cross_entropy(&TokenDistributionSequence::from_logits(&[better], vec![0]).unwrap());
            prop_assert!(b < a);
        }
    }
}
