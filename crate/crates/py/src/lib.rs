//! Python bindings over the crispedge core: losses with gradients, the
//! edge network, NMS thinning, boundary matching, and dataset evaluation.
//! All image arguments are flat row-major lists plus explicit dimensions;
//! probability maps are f64 in [0, 1], masks are 0/1 integers.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use crispedge::cli::predict_image;
use crispedge::data::{synth_generate, Image, SynthSpec};
use crispedge::error::Error;
use crispedge::eval;
use crispedge::loss::{self, CeTerm, EdgeMap, FusionConfig, GroundTruth};
use crispedge::model::{
    load_checkpoint_file, save_checkpoint_file, Network, NetworkConfig,
};
use crispedge::tensor::Tensor4;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Config(_) | Error::Usage(_) | Error::Shape { .. } => {
            PyValueError::new_err(err.to_string())
        }
        Error::Io { .. } | Error::Parse { .. } | Error::CorruptCheckpoint { .. } => {
            PyIOError::new_err(err.to_string())
        }
        Error::Layer { .. } | Error::NumericAbort(_) => PyRuntimeError::new_err(err.to_string()),
    }
}

fn edge_map(h: usize, w: usize, p: Vec<f64>) -> PyResult<EdgeMap> {
    EdgeMap::new(h, w, p).map_err(to_py_err)
}

fn truth_mask(h: usize, w: usize, g: Vec<u8>) -> PyResult<GroundTruth> {
    GroundTruth::new(h, w, g).map_err(to_py_err)
}

fn fusion_config(alpha: f64, beta_fuse: f64, epsilon: f64, ce: &str) -> PyResult<FusionConfig> {
    let cfg = FusionConfig {
        alpha,
        beta_fuse,
        epsilon,
        ce_term: CeTerm::parse(ce).map_err(to_py_err)?,
    };
    cfg.validate().map_err(to_py_err)?;
    Ok(cfg)
}

/// Reciprocal soft Dice loss; returns (value, gradient).
#[pyfunction]
#[pyo3(signature = (h, w, p, g, epsilon = 1.0))]
fn dice_loss(h: usize, w: usize, p: Vec<f64>, g: Vec<u8>, epsilon: f64) -> PyResult<(f64, Vec<f64>)> {
    let out = loss::dice_loss(&edge_map(h, w, p)?, &truth_mask(h, w, g)?, epsilon)
        .map_err(to_py_err)?;
    Ok((out.value, out.grad))
}

/// Class-balanced cross-entropy; returns (value, gradient).
#[pyfunction]
fn weighted_ce(h: usize, w: usize, p: Vec<f64>, g: Vec<u8>) -> PyResult<(f64, Vec<f64>)> {
    let out = loss::weighted_ce(&edge_map(h, w, p)?, &truth_mask(h, w, g)?).map_err(to_py_err)?;
    Ok((out.value, out.grad))
}

/// Cross-entropy term of the fusion objective, -sum(g log p + (1-g)(1 - log p));
/// returns (value, gradient). Can be negative on confident negatives.
#[pyfunction]
fn paper_ce(h: usize, w: usize, p: Vec<f64>, g: Vec<u8>) -> PyResult<(f64, Vec<f64>)> {
    let out = loss::paper_ce(&edge_map(h, w, p)?, &truth_mask(h, w, g)?).map_err(to_py_err)?;
    Ok((out.value, out.grad))
}

/// Standard binary cross-entropy; returns (value, gradient).
#[pyfunction]
fn standard_bce(h: usize, w: usize, p: Vec<f64>, g: Vec<u8>) -> PyResult<(f64, Vec<f64>)> {
    let out = loss::standard_bce(&edge_map(h, w, p)?, &truth_mask(h, w, g)?).map_err(to_py_err)?;
    Ok((out.value, out.grad))
}

/// Fused objective alpha * dice + beta_fuse * ce; ce is one of
/// "paper" | "bce" | "weighted". Returns (value, gradient).
#[pyfunction]
#[pyo3(signature = (h, w, p, g, alpha = 1.0, beta_fuse = 0.001, epsilon = 1.0, ce = "paper"))]
#[allow(clippy::too_many_arguments)]
fn fusion_loss(
    h: usize,
    w: usize,
    p: Vec<f64>,
    g: Vec<u8>,
    alpha: f64,
    beta_fuse: f64,
    epsilon: f64,
    ce: &str,
) -> PyResult<(f64, Vec<f64>)> {
    let cfg = fusion_config(alpha, beta_fuse, epsilon, ce)?;
    let out = loss::fusion_loss(&edge_map(h, w, p)?, &truth_mask(h, w, g)?, &cfg)
        .map_err(to_py_err)?;
    Ok((out.value, out.grad))
}

/// Thin a probability map to ~1 px ridges along the edge-normal direction.
#[pyfunction]
fn nms_thin(h: usize, w: usize, p: Vec<f64>) -> PyResult<Vec<f64>> {
    let thinned = eval::nms_thin(&edge_map(h, w, p)?);
    Ok(thinned.values().to_vec())
}

/// Greedy tolerance matching between two binary masks; returns (tp, fp, fn).
#[pyfunction]
fn match_boundaries(
    h: usize,
    w: usize,
    pred: Vec<u8>,
    gt: Vec<u8>,
    max_dist: f64,
) -> PyResult<(usize, usize, usize)> {
    let counts = eval::match_boundaries(&truth_mask(h, w, pred)?, &truth_mask(h, w, gt)?, max_dist)
        .map_err(to_py_err)?;
    Ok((counts.tp, counts.fp, counts.fn_))
}

/// Dataset-level PR sweep result.
#[pyclass]
struct EvalSummary {
    #[pyo3(get)]
    ods_threshold: f64,
    #[pyo3(get)]
    ods_f: f64,
    #[pyo3(get)]
    ois_f: f64,
    /// Rows of (threshold, precision, recall, f).
    #[pyo3(get)]
    points: Vec<(f64, f64, f64, f64)>,
}

fn paired_maps(
    h: usize,
    w: usize,
    preds: Vec<Vec<f64>>,
    gts: Vec<Vec<u8>>,
) -> PyResult<(Vec<EdgeMap>, Vec<GroundTruth>)> {
    if preds.len() != gts.len() {
        return Err(PyValueError::new_err(format!(
            "got {} predictions but {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    let mut p = Vec::with_capacity(preds.len());
    let mut g = Vec::with_capacity(gts.len());
    for values in preds {
        p.push(edge_map(h, w, values)?);
    }
    for mask in gts {
        g.push(truth_mask(h, w, mask)?);
    }
    Ok((p, g))
}

/// Threshold sweep with ODS/OIS aggregation over same-sized images.
#[pyfunction]
#[pyo3(signature = (h, w, preds, gts, thresholds = 99, max_dist_fraction = 0.0075, nms = false))]
fn pr_sweep(
    h: usize,
    w: usize,
    preds: Vec<Vec<f64>>,
    gts: Vec<Vec<u8>>,
    thresholds: usize,
    max_dist_fraction: f64,
    nms: bool,
) -> PyResult<EvalSummary> {
    let (p, g) = paired_maps(h, w, preds, gts)?;
    let cfg = eval::EvalConfig {
        thresholds,
        max_dist_fraction,
        apply_nms: nms,
    };
    let report = eval::pr_sweep(&p, &g, &cfg).map_err(to_py_err)?;
    Ok(EvalSummary {
        ods_threshold: report.ods_threshold,
        ods_f: report.ods_f,
        ois_f: report.ois_f,
        points: report
            .points
            .iter()
            .map(|pt| (pt.threshold, pt.precision, pt.recall, pt.f))
            .collect(),
    })
}

/// Pre-NMS ODS, post-NMS ODS, and the thickness ratio of a prediction set.
#[pyfunction]
#[pyo3(signature = (h, w, preds, gts, thresholds = 99, max_dist_fraction = 0.0075))]
fn crispness(
    h: usize,
    w: usize,
    preds: Vec<Vec<f64>>,
    gts: Vec<Vec<u8>>,
    thresholds: usize,
    max_dist_fraction: f64,
) -> PyResult<(f64, f64, f64)> {
    let (p, g) = paired_maps(h, w, preds, gts)?;
    let cfg = eval::EvalConfig {
        thresholds,
        max_dist_fraction,
        apply_nms: false,
    };
    let report = eval::crispness_report(&p, &g, &cfg).map_err(to_py_err)?;
    Ok((
        report.pre_nms.ods_f,
        report.post_nms.ods_f,
        report.thickness_ratio,
    ))
}

/// Random shape scenes with 1-px region-boundary annotations; returns a
/// list of (image, mask) flat row-major pairs.
#[pyfunction]
#[pyo3(signature = (count, width = 64, height = 64, seed = 0, noise_sigma = 0.02))]
fn synth(
    count: usize,
    width: usize,
    height: usize,
    seed: u64,
    noise_sigma: f64,
) -> PyResult<Vec<(Vec<f64>, Vec<u8>)>> {
    let spec = SynthSpec {
        width,
        height,
        seed,
        noise_sigma,
        ..SynthSpec::default()
    };
    let samples = synth_generate(&spec, count).map_err(to_py_err)?;
    Ok(samples
        .into_iter()
        .map(|s| (s.image.data().to_vec(), s.truth.values().to_vec()))
        .collect())
}

/// Bottom-up/top-down edge detector with trainable parameters.
#[pyclass]
struct EdgeNet {
    net: Network,
}

#[pymethods]
impl EdgeNet {
    #[new]
    #[pyo3(signature = (stages = 3, stage_channels = None, side_groups = 4, in_channels = 1, seed = 7))]
    fn new(
        stages: usize,
        stage_channels: Option<Vec<usize>>,
        side_groups: usize,
        in_channels: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let config = NetworkConfig {
            stages,
            stage_channels: stage_channels.unwrap_or_else(|| vec![8, 16, 32]),
            side_groups,
            in_channels,
            seed,
        };
        Ok(EdgeNet {
            net: Network::new(config).map_err(to_py_err)?,
        })
    }

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Probability map for an image with the given channel count; any
    /// spatial size (the input is padded internally and cropped back).
    #[pyo3(signature = (h, w, image, channels = 1, multiscale = false))]
    fn predict(
        &self,
        h: usize,
        w: usize,
        image: Vec<f64>,
        channels: usize,
        multiscale: bool,
    ) -> PyResult<Vec<f64>> {
        let image = Image::new(channels, h, w, image).map_err(to_py_err)?;
        let probs = predict_image(&self.net, &image, multiscale).map_err(to_py_err)?;
        Ok(probs.values().to_vec())
    }

    /// One ADAM step on a batch of same-sized grayscale pairs; h and w must
    /// be divisible by the network's downsample factor. Returns the batch
    /// loss before the step.
    #[pyo3(signature = (h, w, images, truths, lr = 1e-3, weight_decay = 0.0,
                        alpha = 1.0, beta_fuse = 0.001, epsilon = 1.0, ce = "paper"))]
    #[allow(clippy::too_many_arguments)]
    fn train_step(
        &mut self,
        h: usize,
        w: usize,
        images: Vec<Vec<f64>>,
        truths: Vec<Vec<u8>>,
        lr: f64,
        weight_decay: f64,
        alpha: f64,
        beta_fuse: f64,
        epsilon: f64,
        ce: &str,
    ) -> PyResult<f64> {
        let cfg = fusion_config(alpha, beta_fuse, epsilon, ce)?;
        let cin = self.net.config().in_channels;
        let mut tensors = Vec::with_capacity(images.len());
        for data in images {
            tensors.push(Tensor4::from_vec(1, cin, h, w, data).map_err(to_py_err)?);
        }
        let mut masks = Vec::with_capacity(truths.len());
        for mask in truths {
            masks.push(truth_mask(h, w, mask)?);
        }
        self.net
            .train_step(&tensors, &masks, &cfg, lr, weight_decay)
            .map_err(to_py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint_file(&self.net, path.as_ref()).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(EdgeNet {
            net: load_checkpoint_file(path.as_ref()).map_err(to_py_err)?,
        })
    }
}

#[pymodule]
fn crispedge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(dice_loss, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_ce, m)?)?;
    m.add_function(wrap_pyfunction!(paper_ce, m)?)?;
    m.add_function(wrap_pyfunction!(standard_bce, m)?)?;
    m.add_function(wrap_pyfunction!(fusion_loss, m)?)?;
    m.add_function(wrap_pyfunction!(nms_thin, m)?)?;
    m.add_function(wrap_pyfunction!(match_boundaries, m)?)?;
    m.add_function(wrap_pyfunction!(pr_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(crispness, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_class::<EvalSummary>()?;
    m.add_class::<EdgeNet>()?;
    Ok(())
}
