//! Report serialization: PR curves as CSV and SVG, and the scalar metrics as
//! a flat key=value block for scripting.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::sweep::{CrispnessReport, EvalReport, PrPoint};

pub fn write_pr_csv(points: &[PrPoint], path: &Path) -> Result<()> {
    let mut text = String::from("threshold,precision,recall,f\n");
    for p in points {
        text.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6}\n",
            p.threshold, p.precision, p.recall, p.f
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_pr_csv(path: &Path) -> Result<Vec<PrPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: msg.into(),
        };
        if fields.len() != 4 {
            return Err(parse_err("expected 4 comma-separated fields"));
        }
        let mut vals = [0.0f64; 4];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .trim()
                .parse()
                .map_err(|_| parse_err(&format!("invalid number {:?}", f)))?;
        }
        points.push(PrPoint {
            threshold: vals[0],
            precision: vals[1],
            recall: vals[2],
            f: vals[3],
        });
    }
    if points.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "no data rows".into(),
        });
    }
    Ok(points)
}

/// Precision over recall on [0,1]^2 axes, one polyline, ODS point marked.
pub fn write_pr_svg(points: &[PrPoint], ods: Option<(f64, f64)>, path: &Path) -> Result<()> {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 48.0;
    let sx = |r: f64| PAD + r * SIZE;
    let sy = |p: f64| PAD + (1.0 - p) * SIZE;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        SIZE + 2.0 * PAD
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
            sx(t),
            sy(0.0),
            sx(t),
            sy(1.0)
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
            sx(0.0),
            sy(t),
            sx(1.0),
            sy(t)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{:.2}</text>\n",
            sx(t),
            sy(0.0) + 18.0,
            t
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">{:.2}</text>\n",
            sx(0.0) - 6.0,
            sy(t) + 4.0,
            t
        ));
    }
    svg.push_str(&format!(
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        sx(0.0),
        sy(1.0),
        SIZE,
        SIZE
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">recall</text>\n",
        sx(0.5),
        sy(0.0) + 36.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 {:.1} {:.1})\">precision</text>\n",
        sx(0.0) - 34.0,
        sy(0.5),
        sx(0.0) - 34.0,
        sy(0.5)
    ));
    let mut coords: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.precision)).collect();
    coords.sort_by(|a, b| a.partial_cmp(b).expect("finite pr values"));
    let poly: Vec<String> = coords
        .iter()
        .map(|&(r, p)| format!("{:.2},{:.2}", sx(r), sy(p)))
        .collect();
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#c33\" stroke-width=\"2\"/>\n",
        poly.join(" ")
    ));
    if let Some((r, p)) = ods {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#36c\"/>\n",
            sx(r),
            sy(p)
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

fn push_kv(out: &mut String, key: &str, value: f64) {
    out.push_str(&format!("{}={:.6}\n", key, value));
}

/// Flat key=value serialization of the report scalars.
pub fn report_block(report: &EvalReport, prefix: &str) -> String {
    let mut out = String::new();
    push_kv(&mut out, &format!("{}ods_threshold", prefix), report.ods_threshold);
    push_kv(&mut out, &format!("{}ods_f", prefix), report.ods_f);
    push_kv(&mut out, &format!("{}ois_f", prefix), report.ois_f);
    out.push_str(&format!("{}images={}\n", prefix, report.per_image.len()));
    out.push_str(&format!(
        "{}excluded_pairs={}\n",
        prefix, report.excluded_pairs
    ));
    out
}

pub fn crispness_block(crisp: &CrispnessReport, prefix: &str) -> String {
    let mut out = String::new();
    out.push_str(&report_block(&crisp.pre_nms, &format!("{}pre_nms_", prefix)));
    out.push_str(&report_block(
        &crisp.post_nms,
        &format!("{}post_nms_", prefix),
    ));
    push_kv(
        &mut out,
        &format!("{}thickness_ratio", prefix),
        crisp.thickness_ratio,
    );
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
