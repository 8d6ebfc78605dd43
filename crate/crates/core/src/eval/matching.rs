//! Tolerance-based one-to-one boundary matching. Production path is greedy
//! in ascending pair distance; `optimal_match_count` is an exact
//! maximum-cardinality reference (augmenting paths) used to bound how much
//! the greedy heuristic gives up.

use crate::error::{Error, Result};
use crate::loss::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub const ZERO: MatchCounts = MatchCounts {
        tp: 0,
        fp: 0,
        fn_: 0,
    };

    pub fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f_measure(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn check_inputs(pred: &GroundTruth, gt: &GroundTruth, max_dist: f64) -> Result<()> {
    if (pred.h(), pred.w()) != (gt.h(), gt.w()) {
        return Err(Error::shape(
            "match_boundaries",
            format!("{}x{}", gt.h(), gt.w()),
            format!("{}x{}", pred.h(), pred.w()),
        ));
    }
    if !max_dist.is_finite() || max_dist <= 0.0 {
        return Err(Error::Usage(format!(
            "matching tolerance {} must be positive",
            max_dist
        )));
    }
    Ok(())
}

/// All admissible (pred-index, gt-index, squared-distance) pairs, found via
/// a bucket grid so cost stays near-linear at tight tolerances.
type PairKey = (u64, u64, u64);

fn admissible_pairs(
    pred: &[(usize, usize)],
    gt: &[(usize, usize)],
    w: usize,
    max_dist: f64,
) -> Vec<(PairKey, usize, usize)> {
    let cell = max_dist.ceil().max(1.0) as usize;
    let max_d2 = max_dist * max_dist;
    let mut buckets: std::collections::HashMap<(usize, usize), Vec<usize>> =
        std::collections::HashMap::new();
    for (j, &(r, c)) in gt.iter().enumerate() {
        buckets.entry((r / cell, c / cell)).or_default().push(j);
    }
    let mut pairs = Vec::new();
    for (i, &(pr, pc)) in pred.iter().enumerate() {
        let (br, bc) = (pr / cell, pc / cell);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let key = (br as i64 + dr, bc as i64 + dc);
                if key.0 < 0 || key.1 < 0 {
                    continue;
                }
                let Some(cands) = buckets.get(&(key.0 as usize, key.1 as usize)) else {
                    continue;
                };
                for &j in cands {
                    let (gr, gc) = gt[j];
                    let d2 = (pr as i64 - gr as i64).pow(2) + (pc as i64 - gc as i64).pow(2);
                    if (d2 as f64) <= max_d2 {
                        // Sort key symmetric under swapping pred and gt, so
                        // the matched pair set (and tp) is too.
                        let (a, b) = ((pr * w + pc) as u64, (gr * w + gc) as u64);
                        pairs.push(((d2 as u64, a.min(b), a.max(b)), i, j));
                    }
                }
            }
        }
    }
    pairs
}

struct GreedyState<'a> {
    pairs: &'a [(PairKey, usize, usize)],
    by_pred: Vec<Vec<usize>>,
    by_gt: Vec<Vec<usize>>,
    deg_pred: Vec<usize>,
    deg_gt: Vec<usize>,
    used_pred: Vec<bool>,
    used_gt: Vec<bool>,
    live: Vec<bool>,
    // Pairs whose pred or gt pixel has exactly one admissible partner left.
    // Matching such a pair never costs cardinality, so they go first.
    forced: std::collections::BinaryHeap<std::cmp::Reverse<(PairKey, usize)>>,
    tp: usize,
}

impl<'a> GreedyState<'a> {
    fn new(pairs: &'a [(PairKey, usize, usize)], np: usize, ng: usize) -> Self {
        let mut by_pred = vec![Vec::new(); np];
        let mut by_gt = vec![Vec::new(); ng];
        for (k, &(_, i, j)) in pairs.iter().enumerate() {
            by_pred[i].push(k);
            by_gt[j].push(k);
        }
        let deg_pred = by_pred.iter().map(|v: &Vec<usize>| v.len()).collect();
        let deg_gt = by_gt.iter().map(|v: &Vec<usize>| v.len()).collect();
        GreedyState {
            pairs,
            by_pred,
            by_gt,
            deg_pred,
            deg_gt,
            used_pred: vec![false; np],
            used_gt: vec![false; ng],
            live: vec![true; pairs.len()],
            forced: std::collections::BinaryHeap::new(),
            tp: 0,
        }
    }

    fn push_if_forced_pred(&mut self, i: usize) {
        if !self.used_pred[i] && self.deg_pred[i] == 1 {
            if let Some(&k) = self.by_pred[i].iter().find(|&&k| self.live[k]) {
                self.forced.push(std::cmp::Reverse((self.pairs[k].0, k)));
            }
        }
    }

    fn push_if_forced_gt(&mut self, j: usize) {
        if !self.used_gt[j] && self.deg_gt[j] == 1 {
            if let Some(&k) = self.by_gt[j].iter().find(|&&k| self.live[k]) {
                self.forced.push(std::cmp::Reverse((self.pairs[k].0, k)));
            }
        }
    }

    fn take(&mut self, k: usize) {
        let (_, i, j) = self.pairs[k];
        self.used_pred[i] = true;
        self.used_gt[j] = true;
        self.tp += 1;
        let incident: Vec<usize> = self.by_pred[i]
            .iter()
            .chain(self.by_gt[j].iter())
            .copied()
            .collect();
        for k2 in incident {
            if !self.live[k2] {
                continue;
            }
            self.live[k2] = false;
            let (_, i2, j2) = self.pairs[k2];
            self.deg_pred[i2] -= 1;
            self.deg_gt[j2] -= 1;
            if i2 != i {
                self.push_if_forced_pred(i2);
            }
            if j2 != j {
                self.push_if_forced_gt(j2);
            }
        }
    }

    fn run(&mut self) -> usize {
        for i in 0..self.used_pred.len() {
            self.push_if_forced_pred(i);
        }
        for j in 0..self.used_gt.len() {
            self.push_if_forced_gt(j);
        }
        let mut ptr = 0usize;
        loop {
            if let Some(std::cmp::Reverse((_, k))) = self.forced.pop() {
                // Stale heap entries (pair died since the push) are skipped.
                if self.live[k] {
                    self.take(k);
                }
                continue;
            }
            while ptr < self.pairs.len() && !self.live[ptr] {
                ptr += 1;
            }
            if ptr >= self.pairs.len() {
                break;
            }
            let k = ptr;
            ptr += 1;
            self.take(k);
        }
        self.tp
    }
}

/// Greedy ascending-distance one-to-one matching between predicted and GT
/// boundary pixels within `max_dist` (Euclidean, pixels). Pixels left with a
/// single admissible partner are matched eagerly before the distance scan
/// resumes; everything stays deterministic and symmetric in the two sides.
pub fn match_boundaries(
    pred: &GroundTruth,
    gt: &GroundTruth,
    max_dist: f64,
) -> Result<MatchCounts> {
    check_inputs(pred, gt, max_dist)?;
    let pred_pos = pred.positives();
    let gt_pos = gt.positives();
    let mut pairs = admissible_pairs(&pred_pos, &gt_pos, pred.w().max(1), max_dist);
    pairs.sort_unstable_by_key(|&(key, _, _)| key);
    let tp = GreedyState::new(&pairs, pred_pos.len(), gt_pos.len()).run();
    Ok(MatchCounts {
        tp,
        fp: pred_pos.len() - tp,
        fn_: gt_pos.len() - tp,
    })
}

/// Exact maximum-cardinality matching size on the same admissibility graph,
/// via augmenting paths. Reference implementation for bounding the greedy
/// matcher; cost O(V·E), fine for test-scale inputs.
pub fn optimal_match_count(pred: &GroundTruth, gt: &GroundTruth, max_dist: f64) -> Result<usize> {
    check_inputs(pred, gt, max_dist)?;
    let pred_pos = pred.positives();
    let gt_pos = gt.positives();
    let pairs = admissible_pairs(&pred_pos, &gt_pos, pred.w().max(1), max_dist);
    let mut adj = vec![Vec::new(); pred_pos.len()];
    for &(_, i, j) in &pairs {
        adj[i].push(j);
    }
    let mut gt_owner = vec![usize::MAX; gt_pos.len()];
    fn try_augment(
        i: usize,
        adj: &[Vec<usize>],
        gt_owner: &mut [usize],
        visited: &mut [bool],
    ) -> bool {
        for &j in &adj[i] {
            if visited[j] {
                continue;
            }
            visited[j] = true;
            if gt_owner[j] == usize::MAX
                || try_augment(gt_owner[j], adj, gt_owner, visited)
            {
                gt_owner[j] = i;
                return true;
            }
        }
        false
    }
    let mut matched = 0usize;
    for i in 0..pred_pos.len() {
        let mut visited = vec![false; gt_pos.len()];
        if try_augment(i, &adj, &mut gt_owner, &mut visited) {
            matched += 1;
        }
    }
    Ok(matched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mask(h: usize, w: usize, pts: &[(usize, usize)]) -> GroundTruth {
        let mut v = vec![0u8; h * w];
        for &(r, c) in pts {
            v[r * w + c] = 1;
        }
        GroundTruth::new(h, w, v).unwrap()
    }

    #[test]
    fn exact_overlap_is_a_true_positive() {
        let a = mask(8, 8, &[(3, 3)]);
        let m = match_boundaries(&a, &a, 1.0).unwrap();
        assert_eq!(
            m,
            MatchCounts {
                tp: 1,
                fp: 0,
                fn_: 0
            }
        );
    }

    #[test]
    fn out_of_tolerance_counts_both_sides() {
        let pred = mask(8, 8, &[(0, 0)]);
        let gt = mask(8, 8, &[(0, 4)]);
        let m = match_boundaries(&pred, &gt, 3.0).unwrap();
        assert_eq!(
            m,
            MatchCounts {
                tp: 0,
                fp: 1,
                fn_: 1
            }
        );
    }

    #[test]
    fn within_tolerance_matches_once() {
        let pred = mask(8, 8, &[(2, 2), (2, 3)]);
        let gt = mask(8, 8, &[(2, 2)]);
        let m = match_boundaries(&pred, &gt, 2.0).unwrap();
        assert_eq!(
            m,
            MatchCounts {
                tp: 1,
                fp: 1,
                fn_: 0
            }
        );
    }

    #[test]
    fn counts_satisfy_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let pred_pts: Vec<_> = (0..rng.random_range(0..8usize))
                .map(|_| (rng.random_range(0..6usize), rng.random_range(0..6usize)))
                .collect();
            let gt_pts: Vec<_> = (0..rng.random_range(0..8usize))
                .map(|_| (rng.random_range(0..6usize), rng.random_range(0..6usize)))
                .collect();
            let pred = mask(6, 6, &pred_pts);
            let gt = mask(6, 6, &gt_pts);
            let m = match_boundaries(&pred, &gt, 1.5).unwrap();
            assert_eq!(m.tp + m.fp, pred.count_positive());
            assert_eq!(m.tp + m.fn_, gt.count_positive());
        }
    }

    #[test]
    fn swapping_sides_swaps_fp_and_fn() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a_pts: Vec<_> = (0..rng.random_range(1..7usize))
                .map(|_| (rng.random_range(0..5usize), rng.random_range(0..5usize)))
                .collect();
            let b_pts: Vec<_> = (0..rng.random_range(1..7usize))
                .map(|_| (rng.random_range(0..5usize), rng.random_range(0..5usize)))
                .collect();
            let a = mask(5, 5, &a_pts);
            let b = mask(5, 5, &b_pts);
            let ab = match_boundaries(&a, &b, 2.0).unwrap();
            let ba = match_boundaries(&b, &a, 2.0).unwrap();
            assert_eq!(ab.tp, ba.tp);
            assert_eq!(ab.fp, ba.fn_);
            assert_eq!(ab.fn_, ba.fp);
        }
    }

    #[test]
    fn greedy_never_beats_the_exact_matcher() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut agree = 0usize;
        let trials = 300usize;
        for _ in 0..trials {
            let pred_pts: Vec<_> = (0..rng.random_range(0..=6usize))
                .map(|_| (rng.random_range(0..5usize), rng.random_range(0..5usize)))
                .collect();
            let gt_pts: Vec<_> = (0..rng.random_range(0..=6usize))
                .map(|_| (rng.random_range(0..5usize), rng.random_range(0..5usize)))
                .collect();
            let pred = mask(5, 5, &pred_pts);
            let gt = mask(5, 5, &gt_pts);
            let greedy = match_boundaries(&pred, &gt, 2.0).unwrap().tp;
            let exact = optimal_match_count(&pred, &gt, 2.0).unwrap();
            assert!(greedy <= exact, "greedy {} > exact {}", greedy, exact);
            if greedy == exact {
                agree += 1;
            }
        }
        assert!(agree * 100 >= trials * 95, "only {}/{} agree", agree, trials);
    }

    #[test]
    fn exact_matcher_is_monotone_in_added_correct_pixels() {
        // Adding a predicted pixel within tolerance of an unmatched GT pixel
        // never lowers the optimal tp.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let gt_pts: Vec<_> = (0..rng.random_range(2..6usize))
                .map(|_| (rng.random_range(0..6usize), rng.random_range(0..6usize)))
                .collect();
            let pred_pts: Vec<_> = (0..rng.random_range(1..4usize))
                .map(|_| (rng.random_range(0..6usize), rng.random_range(0..6usize)))
                .collect();
            let gt = mask(6, 6, &gt_pts);
            let pred = mask(6, 6, &pred_pts);
            let before = optimal_match_count(&pred, &gt, 1.5).unwrap();
            let mut extended = pred_pts.clone();
            extended.push(gt_pts[0]);
            let after = optimal_match_count(&mask(6, 6, &extended), &gt, 1.5).unwrap();
            assert!(after >= before);
        }
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let a = mask(4, 4, &[(1, 1)]);
        let b = mask(4, 5, &[(1, 1)]);
        assert!(match_boundaries(&a, &b, 1.0).is_err());
        assert!(match_boundaries(&a, &a, 0.0).is_err());
    }
}

