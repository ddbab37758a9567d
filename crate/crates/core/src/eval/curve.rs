//! Correlation curves: captured annotator importance versus summary length.
//!
//! Frames are ranked by descending predicted score; point k of the curve is
//! the cumulative mean-annotator importance of the first k frames, divided
//! by the total, so a perfectly concordant ranking traces the upper
//! envelope (the mean-annotator ordering itself) and a random ranking sits
//! on the diagonal in expectation. Each annotator's own ordering is emitted
//! as a reference curve.

use std::io::Write as _;
use std::path::Path;

use super::UserAnnotations;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    /// Sampled summary-length fractions in [0, 1].
    pub fractions: Vec<f64>,
    /// Captured importance under the model's ordering.
    pub model: Vec<f64>,
    /// Upper envelope: the mean-annotator ordering itself.
    pub mean_annotator: Vec<f64>,
    /// Analytic expectation for a random ordering (the diagonal).
    pub random_expectation: Vec<f64>,
    /// One reference curve per annotator, ordered by their own scores.
    pub annotators: Vec<Vec<f64>>,
}

/// Indices sorted by descending score; ties resolve by frame index.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Normalized cumulative mean importance captured by a frame ordering,
/// sampled at the given fractions.
fn capture_curve(order: &[usize], mean_scores: &[f64], samples: usize, total: f64) -> Vec<f64> {
    let t = mean_scores.len();
    let mut cumulative = Vec::with_capacity(t + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for &idx in order {
        acc += mean_scores[idx];
        cumulative.push(acc);
    }
    (0..samples)
        .map(|s| {
            let fraction = s as f64 / (samples - 1) as f64;
            let k = (fraction * t as f64).round() as usize;
            cumulative[k.min(t)] / total
        })
        .collect()
}

/// Build the correlation curve of a prediction against the annotations,
/// sampled at `samples` evenly spaced summary-length fractions.
pub fn correlation_curve(
    pred: &[f64],
    users: &UserAnnotations,
    samples: usize,
) -> Result<CorrelationCurve> {
    if samples < 2 {
        return Err(Error::Input(format!(
            "need at least 2 curve samples, got {}",
            samples
        )));
    }
    if pred.len() != users.frames() {
        return Err(Error::shape(
            "correlation_curve",
            format!("{} predictions vs {} frames", pred.len(), users.frames()),
        ));
    }
    let mean_scores = users.mean_scores();
    let total: f64 = mean_scores.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numeric(
            "correlation_curve: mean annotator importance sums to zero".into(),
        ));
    }

    let fractions: Vec<f64> = (0..samples)
        .map(|s| s as f64 / (samples - 1) as f64)
        .collect();
    let model = capture_curve(&descending_order(pred), mean_scores, samples, total);
    let mean_annotator = capture_curve(&descending_order(mean_scores), mean_scores, samples, total);
    let annotators: Vec<Vec<f64>> = (0..users.annotators())
        .map(|u| {
            capture_curve(
                &descending_order(users.annotator_scores(u)),
                mean_scores,
                samples,
                total,
            )
        })
        .collect();

    Ok(CorrelationCurve {
        random_expectation: fractions.clone(),
        fractions,
        model,
        mean_annotator,
        annotators,
    })
}

/// CSV export: `fraction,model,mean_annotator,random_expectation` plus one
/// column per annotator.
pub fn write_curve_csv(path: &Path, curve: &CorrelationCurve) -> Result<()> {
    let mut out = String::from("fraction,model,mean_annotator,random_expectation");
    for u in 0..curve.annotators.len() {
        out.push_str(&format!(",annotator_{}", u + 1));
    }
    out.push('\n');
    for i in 0..curve.fractions.len() {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6}",
            curve.fractions[i],
            curve.model[i],
            curve.mean_annotator[i],
            curve.random_expectation[i]
        ));
        for annotator in &curve.annotators {
            out.push_str(&format!(",{:.6}", annotator[i]));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Minimal self-contained SVG rendering of the same data: annotators in
/// red, the mean-annotator envelope in blue, the random diagonal dashed,
/// the model in magenta.
pub fn write_curve_svg(path: &Path, curve: &CorrelationCurve) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 48.0;

    let to_xy = |frac: f64, val: f64| {
        let x = M + frac * (W - 2.0 * M);
        let y = H - M - val * (H - 2.0 * M);
        (x, y)
    };
    let polyline = |xs: &[f64], ys: &[f64], style: &str| {
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&f, &v)| {
                let (x, y) = to_xy(f, v);
                format!("{:.1},{:.1}", x, y)
            })
            .collect();
        format!(
            "<polyline fill=\"none\" {} points=\"{}\"/>\n",
            style,
            points.join(" ")
        )
    };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    svg.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - M,
        W - M,
        H - M
    ));
    svg.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - M
    ));
    for annotator in &curve.annotators {
        svg.push_str(&polyline(
            &curve.fractions,
            annotator,
            "stroke=\"#d88\" stroke-width=\"1\"",
        ));
    }
    svg.push_str(&polyline(
        &curve.fractions,
        &curve.random_expectation,
        "stroke=\"black\" stroke-dasharray=\"6 4\" stroke-width=\"1\"",
    ));
    svg.push_str(&polyline(
        &curve.fractions,
        &curve.mean_annotator,
        "stroke=\"#36c\" stroke-width=\"2\"",
    ));
    svg.push_str(&polyline(
        &curve.fractions,
        &curve.model,
        "stroke=\"#c3c\" stroke-width=\"2\"",
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">summary fraction</text>\n",
        W / 2.0 - 50.0,
        H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\">captured importance</text>\n",
        H / 2.0 + 60.0,
        H / 2.0 + 60.0
    ));
    svg.push_str("</svg>\n");
    write_file(path, svg.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let display = path.display().to_string();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&display, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Matrix, SeededRng};

    fn make_users(mean: Vec<f64>) -> UserAnnotations {
        let frames = mean.len();
        let scores = Matrix::from_rows(std::slice::from_ref(&mean)).unwrap();
        UserAnnotations::new(scores, mean, vec![vec![false; frames]]).unwrap()
    }

    #[test]
    fn concordant_prediction_traces_the_upper_envelope() {
        let mean = vec![0.9, 0.1, 0.7, 0.3, 0.5];
        let users = make_users(mean.clone());
        let curve = correlation_curve(&mean, &users, 11).unwrap();
        for (m, e) in curve.model.iter().zip(&curve.mean_annotator) {
            assert!((m - e).abs() < 1e-12);
        }
        // The envelope dominates the diagonal.
        for (e, r) in curve.mean_annotator.iter().zip(&curve.random_expectation) {
            assert!(e + 1e-12 >= *r);
        }
    }

    #[test]
    fn reversed_prediction_traces_the_lower_envelope() {
        let mean = vec![0.9, 0.1, 0.7, 0.3, 0.5];
        let reversed: Vec<f64> = mean.iter().map(|v| 1.0 - v).collect();
        let users = make_users(mean.clone());
        let curve = correlation_curve(&reversed, &users, 11).unwrap();
        // Ascending order of importance: the minimal capture at every k.
        let ascending = descending_order(&reversed);
        let total: f64 = mean.iter().sum();
        let oracle = capture_curve(&ascending, &mean, 11, total);
        assert_eq!(curve.model, oracle);
        // Sum of the k smallest importances never exceeds k/T of the total;
        // compare at the rounded frame count each sample actually uses.
        let t = mean.len() as f64;
        for (m, f) in curve.model.iter().zip(&curve.fractions) {
            let k = (f * t).round();
            assert!(m - 1e-12 <= k / t, "{} vs {}", m, k / t);
        }
    }

    #[test]
    fn random_orderings_average_to_the_diagonal() {
        let mut rng = SeededRng::new(4);
        let frames = 50;
        let mean: Vec<f64> = (0..frames).map(|_| rng.uniform(0.05, 1.0)).collect();
        let users = make_users(mean);
        let samples = 11;
        let mut sums = vec![0.0; samples];
        let trials = 1000;
        for _ in 0..trials {
            let pred: Vec<f64> = (0..frames).map(|_| rng.uniform(0.0, 1.0)).collect();
            let curve = correlation_curve(&pred, &users, samples).unwrap();
            for (s, v) in sums.iter_mut().zip(&curve.model) {
                *s += v;
            }
        }
        let curve = correlation_curve(&vec![0.5; frames], &users, samples).unwrap();
        for (i, s) in sums.iter().enumerate() {
            let avg = s / trials as f64;
            assert!(
                (avg - curve.random_expectation[i]).abs() < 0.02,
                "sample {}: {} vs {}",
                i,
                avg,
                curve.random_expectation[i]
            );
        }
    }

    #[test]
    fn csv_and_svg_exports_write_expected_structure() {
        let mean = vec![0.2, 0.8, 0.5, 0.6];
        let users = make_users(mean.clone());
        let curve = correlation_curve(&[0.3, 0.1, 0.9, 0.4], &users, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();

        let csv_path = dir.path().join("curve.csv");
        write_curve_csv(&csv_path, &curve).unwrap();
        let csv = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "fraction,model,mean_annotator,random_expectation,annotator_1"
        );
        assert_eq!(lines.count(), 5);

        let svg_path = dir.path().join("curve.svg");
        write_curve_svg(&svg_path, &curve).unwrap();
        let svg = std::fs::read_to_string(&svg_path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let users = make_users(vec![0.5, 0.6]);
        assert!(correlation_curve(&[0.1, 0.2], &users, 1).is_err());
    }
}
