//! Loss terms for boundary prediction. The fusion loss combines a reciprocal
//! soft Dice overlap term, which scores the whole image at once and is
//! insensitive to the positive/negative imbalance, with a pixelwise
//! cross-entropy term that keeps per-pixel probabilities calibrated. All
//! gradients are analytic and returned alongside the value.

use crate::error::{Error, Result};
use crate::layers::SIGMOID_CLAMP;

/// Lower clamp bound for predicted probabilities (mirrors the sigmoid clamp).
pub const P_MIN: f64 = SIGMOID_CLAMP;
/// Upper clamp bound for predicted probabilities.
pub const P_MAX: f64 = 1.0 - SIGMOID_CLAMP;

/// A single-channel map of edge probabilities. Values are clamped into
/// [P_MIN, P_MAX] on construction so logarithms and reciprocals stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    h: usize,
    w: usize,
    values: Vec<f64>,
}

impl EdgeMap {
    pub fn new(h: usize, w: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::shape(
                "EdgeMap::new",
                format!("{} values for {}x{}", h * w, h, w),
                format!("{} values", values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Usage(format!(
                "edge map value at index {} is not finite",
                i
            )));
        }
        let values = values.into_iter().map(|v| v.clamp(P_MIN, P_MAX)).collect();
        Ok(EdgeMap { h, w, values })
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.w + c]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count_at_least(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&v| v >= threshold).count()
    }
}

/// Binary ground-truth annotation; every value is exactly 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    h: usize,
    w: usize,
    values: Vec<u8>,
}

impl GroundTruth {
    pub fn new(h: usize, w: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::shape(
                "GroundTruth::new",
                format!("{} values for {}x{}", h * w, h, w),
                format!("{} values", values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(Error::Usage(format!(
                "ground truth value at index {} is {}, expected 0 or 1",
                i, values[i]
            )));
        }
        Ok(GroundTruth { h, w, values })
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.values[r * self.w + c] == 1
    }

    #[inline]
    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn count_positive(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// (row, col) of every positive pixel, row-major order.
    pub fn positives(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.h {
            for c in 0..self.w {
                if self.values[r * self.w + c] == 1 {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

/// Loss value with its analytic gradient with respect to each probability.
/// The gradient has one entry per pixel of the input map.
#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    pub grad: Vec<f64>,
    pub h: usize,
    pub w: usize,
}

impl LossResult {
    fn zero(h: usize, w: usize) -> Self {
        LossResult {
            value: 0.0,
            grad: vec![0.0; h * w],
            h,
            w,
        }
    }
}

/// Which cross-entropy variant the fusion loss combines with the Dice term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CeTerm {
    /// -sum(g log p + (1-g)(1 - log p)). This is the form the fusion loss is
    /// defined with; note the second term is 1 - log p, not log(1-p), so the
    /// total can be negative on negative pixels.
    #[default]
    Paper,
    /// Standard binary cross-entropy -sum(g log p + (1-g) log(1-p)).
    StandardBce,
    /// Class-balanced cross-entropy with the per-image negative fraction as
    /// the positive weight.
    WeightedCe,
}

impl CeTerm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(CeTerm::Paper),
            "bce" => Ok(CeTerm::StandardBce),
            "weighted" => Ok(CeTerm::WeightedCe),
            other => Err(Error::Usage(format!(
                "unknown ce term '{}', expected paper|bce|weighted",
                other
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CeTerm::Paper => "paper",
            CeTerm::StandardBce => "bce",
            CeTerm::WeightedCe => "weighted",
        }
    }
}

/// Weights of the fusion loss: alpha scales the Dice term, beta_fuse the
/// cross-entropy term. epsilon stabilizes the Dice denominator; 0 selects the
/// bare form used for gradient verification and requires a nonzero overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub alpha: f64,
    pub beta_fuse: f64,
    pub epsilon: f64,
    pub ce_term: CeTerm,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            alpha: 1.0,
            beta_fuse: 0.001,
            epsilon: 1.0,
            ce_term: CeTerm::Paper,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta_fuse.is_finite() && self.epsilon.is_finite()) {
            return Err(Error::Config("fusion weights must be finite".into()));
        }
        if self.alpha < 0.0 || self.beta_fuse < 0.0 {
            return Err(Error::Config("fusion weights must be nonnegative".into()));
        }
        if self.epsilon < 0.0 {
            return Err(Error::Config("epsilon must be nonnegative".into()));
        }
        if self.alpha + self.beta_fuse == 0.0 {
            return Err(Error::Config(
                "at least one of alpha, beta_fuse must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Pure Dice objective.
    pub fn dice_only(epsilon: f64) -> Self {
        FusionConfig {
            alpha: 1.0,
            beta_fuse: 0.0,
            epsilon,
            ce_term: CeTerm::Paper,
        }
    }

    /// Pure class-balanced cross-entropy objective (the comparison baseline).
    pub fn weighted_ce_only() -> Self {
        FusionConfig {
            alpha: 0.0,
            beta_fuse: 1.0,
            epsilon: 1.0,
            ce_term: CeTerm::WeightedCe,
        }
    }
}

fn check_dims(p: &EdgeMap, g: &GroundTruth, context: &str) -> Result<()> {
    if p.h != g.h || p.w != g.w {
        return Err(Error::shape(
            context,
            format!("{}x{}", p.h, p.w),
            format!("{}x{}", g.h, g.w),
        ));
    }
    if p.is_empty() {
        return Err(Error::Usage(format!("{}: empty inputs", context)));
    }
    Ok(())
}

/// Class-balanced cross-entropy. With beta = |negatives| / |pixels| computed
/// per image:
///   L = -beta * sum over positives of log p  -  (1-beta) * sum over
///   negatives of log(1-p).
pub fn weighted_ce(p: &EdgeMap, g: &GroundTruth) -> Result<LossResult> {
    check_dims(p, g, "weighted_ce")?;
    let total = p.len() as f64;
    let neg = (p.len() - g.count_positive()) as f64;
    let beta = neg / total;
    let mut out = LossResult::zero(p.h, p.w);
    for i in 0..p.len() {
        let pv = p.values[i];
        if g.values[i] == 1 {
            out.value -= beta * pv.ln();
            out.grad[i] = -beta / pv;
        } else {
            out.value -= (1.0 - beta) * (1.0 - pv).ln();
            out.grad[i] = (1.0 - beta) / (1.0 - pv);
        }
    }
    Ok(out)
}

/// Reciprocal soft Dice:
///   L = (sum p^2 + sum g^2 + eps) / (2 sum pg + eps)
/// which is minimized (at 1 for eps = 0) exactly when p equals g. Unlike a
/// pixelwise loss this couples every pixel through the overlap sums, so
/// sparse positives are not drowned out by the negative majority.
pub fn dice_loss(p: &EdgeMap, g: &GroundTruth, epsilon: f64) -> Result<LossResult> {
    check_dims(p, g, "dice_loss")?;
    if epsilon < 0.0 {
        return Err(Error::Usage("dice epsilon must be nonnegative".into()));
    }
    let mut s_pg = 0.0;
    let mut s_pp = 0.0;
    let mut s_gg = 0.0;
    for i in 0..p.len() {
        let pv = p.values[i];
        s_pp += pv * pv;
        if g.values[i] == 1 {
            s_pg += pv;
            s_gg += 1.0;
        }
    }
    let denom = 2.0 * s_pg + epsilon;
    if denom == 0.0 {
        return Err(Error::NumericAbort(
            "dice loss with epsilon 0 requires a nonzero prediction/truth overlap".into(),
        ));
    }
    let numer = s_pp + s_gg + epsilon;
    let value = numer / denom;
    let mut out = LossResult::zero(p.h, p.w);
    out.value = value;
    let denom2 = denom * denom;
    for i in 0..p.len() {
        let pv = p.values[i];
        let gv = g.values[i] as f64;
        out.grad[i] = (2.0 * pv * denom - 2.0 * gv * numer) / denom2;
    }
    Ok(out)
}

/// Cross-entropy in the exact form the fusion loss is defined with:
///   L = -sum(g log p + (1-g)(1 - log p)),   dL/dp_k = -(2 g_k - 1) / p_k.
/// The negative-pixel term is (1 - log p), not log(1-p), so negative pixels
/// are pushed toward 0 through the -log p slope and the value can be
/// negative.
pub fn paper_ce(p: &EdgeMap, g: &GroundTruth) -> Result<LossResult> {
    check_dims(p, g, "paper_ce")?;
    let mut out = LossResult::zero(p.h, p.w);
    for i in 0..p.len() {
        let pv = p.values[i];
        if g.values[i] == 1 {
            out.value -= pv.ln();
            out.grad[i] = -1.0 / pv;
        } else {
            out.value -= 1.0 - pv.ln();
            out.grad[i] = 1.0 / pv;
        }
    }
    Ok(out)
}

/// Standard (unweighted) binary cross-entropy.
pub fn standard_bce(p: &EdgeMap, g: &GroundTruth) -> Result<LossResult> {
    check_dims(p, g, "standard_bce")?;
    let mut out = LossResult::zero(p.h, p.w);
    for i in 0..p.len() {
        let pv = p.values[i];
        if g.values[i] == 1 {
            out.value -= pv.ln();
            out.grad[i] = -1.0 / pv;
        } else {
            out.value -= (1.0 - pv).ln();
            out.grad[i] = 1.0 / (1.0 - pv);
        }
    }
    Ok(out)
}

/// Fusion loss: alpha * dice + beta_fuse * cross-entropy, with the
/// cross-entropy variant selected by the config. Gradients combine linearly.
pub fn fusion_loss(p: &EdgeMap, g: &GroundTruth, cfg: &FusionConfig) -> Result<LossResult> {
    cfg.validate()?;
    check_dims(p, g, "fusion_loss")?;
    let mut out = LossResult::zero(p.h, p.w);
    if cfg.alpha != 0.0 {
        let dice = dice_loss(p, g, cfg.epsilon)?;
        out.value += cfg.alpha * dice.value;
        for (o, d) in out.grad.iter_mut().zip(&dice.grad) {
            *o += cfg.alpha * d;
        }
    }
    if cfg.beta_fuse != 0.0 {
        let ce = match cfg.ce_term {
            CeTerm::Paper => paper_ce(p, g)?,
            CeTerm::StandardBce => standard_bce(p, g)?,
            CeTerm::WeightedCe => weighted_ce(p, g)?,
        };
        out.value += cfg.beta_fuse * ce.value;
        for (o, c) in out.grad.iter_mut().zip(&ce.grad) {
            *o += cfg.beta_fuse * c;
        }
    }
    if !out.value.is_finite() {
        return Err(Error::NumericAbort(format!(
            "fusion loss is not finite (alpha {}, beta_fuse {}, epsilon {})",
            cfg.alpha, cfg.beta_fuse, cfg.epsilon
        )));
    }
    Ok(out)
}

/// Per-pair fusion losses and their sum over a batch.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub total: f64,
    pub per_pair: Vec<LossResult>,
}

/// Batch objective: the sum of the fusion loss over all (prediction, truth)
/// pairs. Pairs are independent, so each pair's gradient is unchanged by the
/// others.
pub fn batch_loss(preds: &[EdgeMap], gts: &[GroundTruth], cfg: &FusionConfig) -> Result<BatchLoss> {
    if preds.is_empty() {
        return Err(Error::Usage("batch_loss: empty batch".into()));
    }
    if preds.len() != gts.len() {
        return Err(Error::shape(
            "batch_loss",
            format!("{} predictions", preds.len()),
            format!("{} ground truths", gts.len()),
        ));
    }
    let mut per_pair = Vec::with_capacity(preds.len());
    let mut total = 0.0;
    for (i, (p, g)) in preds.iter().zip(gts).enumerate() {
        let r = fusion_loss(p, g, cfg)
            .map_err(|e| Error::NumericAbort(format!("batch pair {}: {}", i, e)))?;
        total += r.value;
        per_pair.push(r);
    }
    Ok(BatchLoss { total, per_pair })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(h: usize, w: usize, v: Vec<f64>) -> EdgeMap {
        EdgeMap::new(h, w, v).unwrap()
    }

    fn truth(h: usize, w: usize, v: Vec<u8>) -> GroundTruth {
        GroundTruth::new(h, w, v).unwrap()
    }

    /// Central-difference gradient of a loss function, staying inside (0,1).
    fn numeric_grad(
        p: &EdgeMap,
        g: &GroundTruth,
        f: impl Fn(&EdgeMap, &GroundTruth) -> f64,
    ) -> Vec<f64> {
        let h = 1e-6;
        let mut out = vec![0.0; p.len()];
        for i in 0..p.len() {
            let mut vp = p.values().to_vec();
            vp[i] += h;
            let lp = f(&EdgeMap::new(p.h(), p.w(), vp).unwrap(), g);
            let mut vm = p.values().to_vec();
            vm[i] -= h;
            let lm = f(&EdgeMap::new(p.h(), p.w(), vm).unwrap(), g);
            out[i] = (lp - lm) / (2.0 * h);
        }
        out
    }

    fn random_pair(rng: &mut ChaCha8Rng, h: usize, w: usize) -> (EdgeMap, GroundTruth) {
        // Keep probabilities in the interior so the clamp never interferes
        // with finite differences, and force at least one overlap pixel.
        let p: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.05..0.95)).collect();
        let mut g: Vec<u8> = (0..h * w).map(|_| rng.random_range(0..2) as u8).collect();
        g[0] = 1;
        (map(h, w, p), truth(h, w, g))
    }

    #[test]
    fn edge_map_clamps_into_open_interval() {
        let m = map(1, 3, vec![0.0, 0.5, 1.0]);
        assert_eq!(m.values(), &[P_MIN, 0.5, P_MAX]);
        assert!(EdgeMap::new(1, 2, vec![0.5, f64::NAN]).is_err());
    }

    #[test]
    fn ground_truth_rejects_nonbinary() {
        assert!(GroundTruth::new(1, 2, vec![0, 2]).is_err());
        assert!(GroundTruth::new(1, 2, vec![0, 1]).is_ok());
    }

    #[test]
    fn weighted_ce_hand_value() {
        // 2x2, one positive, p = 0.5 everywhere: beta = 3/4,
        // loss = (3/4) ln 2 + 3 * (1/4) ln 2 = 1.5 ln 2.
        let p = map(2, 2, vec![0.5; 4]);
        let g = truth(2, 2, vec![1, 0, 0, 0]);
        let r = weighted_ce(&p, &g).unwrap();
        assert!((r.value - 1.5 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((r.grad[0] + 1.5).abs() < 1e-12);
        assert!((r.grad[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weighted_ce_all_negative_is_zero() {
        // beta = 1 leaves no weight on the negative term.
        let p = map(1, 4, vec![0.3, 0.6, 0.2, 0.9]);
        let g = truth(1, 4, vec![0, 0, 0, 0]);
        let r = weighted_ce(&p, &g).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn dice_hand_value_single_pixel() {
        // p = 0.5, g = 1, eps = 0: (0.25 + 1) / (2 * 0.5) = 1.25,
        // grad = (2*0.5*1 - 2*1*1.25) / 1 = -1.5.
        let p = map(1, 1, vec![0.5]);
        let g = truth(1, 1, vec![1]);
        let r = dice_loss(&p, &g, 0.0).unwrap();
        assert!((r.value - 1.25).abs() < 1e-12);
        assert!((r.grad[0] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn dice_equals_one_exactly_when_p_equals_g() {
        // Bypassing the clamp is impossible through EdgeMap, so check the
        // identity on a map whose positives and negatives sit exactly at the
        // clamp bounds, then compare against the analytic expansion:
        // value - 1 = sum((p-g)^2) / (2 sum(pg)).
        let g = truth(2, 2, vec![1, 0, 1, 0]);
        let p = map(2, 2, vec![1.0, 0.0, 1.0, 0.0]); // clamps to P_MAX / P_MIN
        let r = dice_loss(&p, &g, 0.0).unwrap();
        let s_pg = 2.0 * P_MAX;
        let resid = 2.0 * (P_MAX - 1.0).powi(2) + 2.0 * P_MIN.powi(2);
        assert!((r.value - 1.0 - resid / (2.0 * s_pg)).abs() < 1e-15);
        assert!(r.value > 1.0);
    }

    #[test]
    fn dice_zero_overlap_with_zero_epsilon_aborts() {
        let p = map(1, 2, vec![0.5, 0.5]);
        let g = truth(1, 2, vec![0, 0]);
        assert!(matches!(
            dice_loss(&p, &g, 0.0),
            Err(Error::NumericAbort(_))
        ));
        // A positive epsilon removes the singularity.
        assert!(dice_loss(&p, &g, 1.0).is_ok());
    }

    #[test]
    fn paper_ce_hand_values_including_negative_total() {
        let p = map(1, 1, vec![0.5]);
        let r = paper_ce(&p, &truth(1, 1, vec![1])).unwrap();
        assert!((r.value - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((r.grad[0] + 2.0).abs() < 1e-12);
        // On a negative pixel the value is -(1 - ln 0.5) = -(1 + ln 2) < 0.
        let r = paper_ce(&p, &truth(1, 1, vec![0])).unwrap();
        assert!((r.value + 1.0 + std::f64::consts::LN_2).abs() < 1e-12);
        assert!((r.grad[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let (p, g) = random_pair(&mut rng, 4, 5);
            let cases: Vec<(LossResult, Box<dyn Fn(&EdgeMap, &GroundTruth) -> f64>)> = vec![
                (
                    weighted_ce(&p, &g).unwrap(),
                    Box::new(|p, g| weighted_ce(p, g).unwrap().value),
                ),
                (
                    dice_loss(&p, &g, 0.0).unwrap(),
                    Box::new(|p, g| dice_loss(p, g, 0.0).unwrap().value),
                ),
                (
                    dice_loss(&p, &g, 1.0).unwrap(),
                    Box::new(|p, g| dice_loss(p, g, 1.0).unwrap().value),
                ),
                (
                    paper_ce(&p, &g).unwrap(),
                    Box::new(|p, g| paper_ce(p, g).unwrap().value),
                ),
                (
                    standard_bce(&p, &g).unwrap(),
                    Box::new(|p, g| standard_bce(p, g).unwrap().value),
                ),
                (
                    fusion_loss(&p, &g, &FusionConfig::default()).unwrap(),
                    Box::new(|p, g| fusion_loss(p, g, &FusionConfig::default()).unwrap().value),
                ),
            ];
            for (analytic, f) in cases {
                let numeric = numeric_grad(&p, &g, f);
                for (a, n) in analytic.grad.iter().zip(&numeric) {
                    let rel = (a - n).abs() / f64::max(1.0, a.abs() + n.abs());
                    assert!(rel < 1e-6, "analytic {} vs numeric {}", a, n);
                }
            }
        }
    }

    #[test]
    fn fusion_is_linear_combination_of_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (p, g) = random_pair(&mut rng, 3, 3);
        let cfg = FusionConfig {
            alpha: 0.7,
            beta_fuse: 0.3,
            epsilon: 0.5,
            ce_term: CeTerm::StandardBce,
        };
        let f = fusion_loss(&p, &g, &cfg).unwrap();
        let d = dice_loss(&p, &g, 0.5).unwrap();
        let c = standard_bce(&p, &g).unwrap();
        assert!((f.value - (0.7 * d.value + 0.3 * c.value)).abs() < 1e-12);
        for i in 0..f.grad.len() {
            assert!((f.grad[i] - (0.7 * d.grad[i] + 0.3 * c.grad[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_weighted_ce_preset_equals_weighted_ce() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (p, g) = random_pair(&mut rng, 4, 4);
        let f = fusion_loss(&p, &g, &FusionConfig::weighted_ce_only()).unwrap();
        let w = weighted_ce(&p, &g).unwrap();
        assert_eq!(f.value, w.value);
        assert_eq!(f.grad, w.grad);
    }

    #[test]
    fn batch_loss_sums_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (p1, g1) = random_pair(&mut rng, 3, 3);
        let (p2, g2) = random_pair(&mut rng, 3, 3);
        let cfg = FusionConfig::default();
        let b = batch_loss(&[p1.clone(), p2.clone()], &[g1.clone(), g2.clone()], &cfg).unwrap();
        let v1 = fusion_loss(&p1, &g1, &cfg).unwrap().value;
        let v2 = fusion_loss(&p2, &g2, &cfg).unwrap().value;
        assert!((b.total - (v1 + v2)).abs() < 1e-12);
        assert_eq!(b.per_pair.len(), 2);
        assert!(batch_loss(&[], &[], &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::default().validate().is_ok());
        let bad = FusionConfig {
            alpha: -1.0,
            ..FusionConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FusionConfig {
            alpha: 0.0,
            beta_fuse: 0.0,
            ..FusionConfig::default()
        };
        assert!(bad.validate().is_err());
        // epsilon 0 is a supported verification mode.
        let ok = FusionConfig {
            epsilon: 0.0,
            ..FusionConfig::default()
        };
        assert!(ok.validate().is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Reciprocal Dice with eps = 0 is bounded below by 1:
        /// (sum p^2 + sum g^2) >= 2 sum pg since sum (p-g)^2 >= 0.
        #[test]
        fn dice_at_least_one(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, g) = random_pair(&mut rng, 4, 4);
            let r = dice_loss(&p, &g, 0.0).unwrap();
            prop_assert!(r.value >= 1.0 - 1e-12);
        }

        /// The larger the pointwise distance from the truth, the larger the
        /// excess over 1 (sanity of the residual identity).
        #[test]
        fn dice_excess_matches_residual_identity(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, g) = random_pair(&mut rng, 3, 5);
            let r = dice_loss(&p, &g, 0.0).unwrap();
            let s_pg: f64 = p.values().iter().zip(g.values())
                .map(|(pv, &gv)| pv * gv as f64).sum();
            let resid: f64 = p.values().iter().zip(g.values())
                .map(|(pv, &gv)| (pv - gv as f64).powi(2)).sum();
            prop_assert!((r.value - 1.0 - resid / (2.0 * s_pg)).abs() < 1e-12);
        }

        /// Weighted CE is nonnegative and zero only when every pixel is
        /// weightless or perfectly predicted.
        #[test]
        fn weighted_ce_nonnegative(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, g) = random_pair(&mut rng, 4, 4);
            let r = weighted_ce(&p, &g).unwrap();
            prop_assert!(r.value >= 0.0);
        }
    }
}
