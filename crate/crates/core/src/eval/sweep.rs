//! Precision-recall sweep over a fixed threshold grid, with dataset-level
//! (ODS) and per-image (OIS) optimal F-measures, plus the before/after-NMS
//! crispness comparison.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::matching::{match_boundaries, MatchCounts};
use crate::eval::nms::nms_thin;
use crate::loss::{EdgeMap, GroundTruth};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Number of thresholds K; the grid is t_k = k/(K+1), k = 1..=K.
    pub thresholds: usize,
    /// Matching tolerance as a fraction of the image diagonal.
    pub max_dist_fraction: f64,
    pub apply_nms: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: 99,
            max_dist_fraction: 0.0075,
            apply_nms: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds == 0 {
            return Err(Error::Config("threshold count must be at least 1".into()));
        }
        if !self.max_dist_fraction.is_finite() || self.max_dist_fraction <= 0.0 {
            return Err(Error::Config(format!(
                "max-dist-fraction {} must be positive",
                self.max_dist_fraction
            )));
        }
        Ok(())
    }

    pub fn threshold(&self, k: usize) -> f64 {
        (k + 1) as f64 / (self.thresholds + 1) as f64
    }

    pub fn max_dist(&self, h: usize, w: usize) -> f64 {
        self.max_dist_fraction * ((h * h + w * w) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ImageEval {
    pub best_threshold: f64,
    pub best_f: f64,
    pub gt_positives: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub points: Vec<PrPoint>,
    pub ods_threshold: f64,
    pub ods_f: f64,
    pub ois_f: f64,
    pub per_image: Vec<ImageEval>,
    /// Image-threshold pairs excluded because the image had no GT positives.
    pub excluded_pairs: usize,
}

fn binarize(map: &EdgeMap, t: f64) -> GroundTruth {
    let labels = map.values().iter().map(|&v| u8::from(v >= t)).collect();
    GroundTruth::new(map.h(), map.w(), labels).expect("binary by construction")
}

fn check_aligned(predictions: &[EdgeMap], gts: &[GroundTruth]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::Usage("evaluation needs at least one image".into()));
    }
    if predictions.len() != gts.len() {
        return Err(Error::Usage(format!(
            "{} predictions vs {} ground truths",
            predictions.len(),
            gts.len()
        )));
    }
    for (i, (p, g)) in predictions.iter().zip(gts).enumerate() {
        if (p.h(), p.w()) != (g.h(), g.w()) {
            return Err(Error::shape(
                format!("evaluation pair {}", i),
                format!("{}x{}", g.h(), g.w()),
                format!("{}x{}", p.h(), p.w()),
            ));
        }
    }
    Ok(())
}

/// Sweeps the threshold grid. Per-image work runs in parallel; aggregation
/// is an ordered reduction over image index, so results do not depend on
/// scheduling.
pub fn pr_sweep(
    predictions: &[EdgeMap],
    gts: &[GroundTruth],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    check_aligned(predictions, gts)?;
    let k_count = cfg.thresholds;

    // counts[i][k] for image i at threshold k; None when the image has no GT
    // positives (excluded from every aggregate).
    let tables: Vec<Result<Option<Vec<MatchCounts>>>> = predictions
        .par_iter()
        .zip(gts.par_iter())
        .map(|(pred, gt)| {
            if gt.count_positive() == 0 {
                return Ok(None);
            }
            let map = if cfg.apply_nms {
                nms_thin(pred)
            } else {
                pred.clone()
            };
            let max_dist = cfg.max_dist(gt.h(), gt.w());
            let mut row = Vec::with_capacity(k_count);
            for k in 0..k_count {
                row.push(match_boundaries(&binarize(&map, cfg.threshold(k)), gt, max_dist)?);
            }
            Ok(Some(row))
        })
        .collect();

    let mut per_image_counts: Vec<Option<Vec<MatchCounts>>> = Vec::with_capacity(tables.len());
    for t in tables {
        per_image_counts.push(t?);
    }
    let excluded_pairs = per_image_counts.iter().filter(|t| t.is_none()).count() * k_count;

    let mut points = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let mut agg = MatchCounts::ZERO;
        for table in per_image_counts.iter().flatten() {
            agg.add(table[k]);
        }
        points.push(PrPoint {
            threshold: cfg.threshold(k),
            precision: agg.precision(),
            recall: agg.recall(),
            f: agg.f_measure(),
        });
    }

    let mut ods_k = 0usize;
    for (k, pt) in points.iter().enumerate() {
        if pt.f > points[ods_k].f {
            ods_k = k;
        }
    }

    let mut ois_agg = MatchCounts::ZERO;
    let mut per_image = Vec::with_capacity(per_image_counts.len());
    for (table, gt) in per_image_counts.iter().zip(gts) {
        match table {
            None => per_image.push(ImageEval {
                best_threshold: cfg.threshold(ods_k),
                best_f: 0.0,
                gt_positives: 0,
            }),
            Some(counts) => {
                let mut best_k = 0usize;
                for k in 1..k_count {
                    if counts[k].f_measure() > counts[best_k].f_measure() {
                        best_k = k;
                    }
                }
                ois_agg.add(counts[best_k]);
                per_image.push(ImageEval {
                    best_threshold: cfg.threshold(best_k),
                    best_f: counts[best_k].f_measure(),
                    gt_positives: gt.count_positive(),
                });
            }
        }
    }

    Ok(EvalReport {
        ods_threshold: cfg.threshold(ods_k),
        ods_f: points[ods_k].f,
        ois_f: ois_agg.f_measure(),
        points,
        per_image,
        excluded_pairs,
    })
}

#[derive(Debug, Clone)]
pub struct CrispnessReport {
    pub pre_nms: EvalReport,
    pub post_nms: EvalReport,
    /// Positives at the pre-NMS ODS threshold divided by positives after NMS
    /// at the same threshold, averaged over images with a nonzero
    /// denominator; 1.0 when no image qualifies.
    pub thickness_ratio: f64,
}

pub fn crispness_report(
    predictions: &[EdgeMap],
    gts: &[GroundTruth],
    cfg: &EvalConfig,
) -> Result<CrispnessReport> {
    let pre = pr_sweep(
        predictions,
        gts,
        &EvalConfig {
            apply_nms: false,
            ..cfg.clone()
        },
    )?;
    let post = pr_sweep(
        predictions,
        gts,
        &EvalConfig {
            apply_nms: true,
            ..cfg.clone()
        },
    )?;
    let t = pre.ods_threshold;
    let mut sum = 0.0;
    let mut n = 0usize;
    for pred in predictions {
        let before = pred.count_at_least(t);
        let after = nms_thin(pred).count_at_least(t);
        if after > 0 {
            sum += before as f64 / after as f64;
            n += 1;
        }
    }
    Ok(CrispnessReport {
        pre_nms: pre,
        post_nms: post,
        thickness_ratio: if n > 0 { sum / n as f64 } else { 1.0 },
    })
}
