//! Boundary benchmark: non-maximum suppression, tolerance matching, PR
//! sweeps with ODS/OIS summaries, and report serialization.

pub mod emit;
pub mod matching;
pub mod nms;
pub mod sweep;

pub use emit::{crispness_block, read_pr_csv, report_block, write_pr_csv, write_pr_svg, write_text};
pub use matching::{match_boundaries, optimal_match_count, MatchCounts};
pub use nms::{gaussian_smooth, nms_thin};
pub use sweep::{crispness_report, pr_sweep, CrispnessReport, EvalConfig, EvalReport, ImageEval, PrPoint};
