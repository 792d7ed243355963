//! Minimal SVG scatter writer for 2-D embeddings.

use crate::embedding::EmbeddingError;
use crate::preprocess::ClassLabel;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;

/// One fill color per class, in `ClassLabel::ALL` order.
const COLORS: [&str; 4] = ["#4daf4a", "#377eb8", "#ff7f00", "#e41a1c"];

fn class_color(label: ClassLabel) -> &'static str {
    COLORS[label.index()]
}

/// Render labeled points as an SVG scatter plot with a class legend.
/// Coordinates min-max scale into the drawing area; a degenerate axis
/// (all points equal) centers on that axis.
pub fn scatter_svg(
    points: &[[f64; 2]],
    labels: &[ClassLabel],
) -> Result<String, EmbeddingError> {
    if points.is_empty() {
        return Err(EmbeddingError::EmptyPlot);
    }
    if points.len() != labels.len() {
        return Err(EmbeddingError::LengthMismatch {
            points: points.len(),
            labels: labels.len(),
        });
    }

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let scale = |v: f64, d: usize, span: f64| -> f64 {
        if hi[d] > lo[d] {
            MARGIN + (v - lo[d]) / (hi[d] - lo[d]) * span
        } else {
            MARGIN + span / 2.0
        }
    };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );
    for (p, &label) in points.iter().zip(labels) {
        let x = scale(p[0], 0, WIDTH - 2.0 * MARGIN);
        // SVG y grows downward; flip so larger coordinates plot higher.
        let y = HEIGHT - scale(p[1], 1, HEIGHT - 2.0 * MARGIN);
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
            class_color(label)
        ));
    }
    for (i, &label) in ClassLabel::ALL.iter().enumerate() {
        let y = MARGIN + 18.0 * i as f64;
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"{}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
            WIDTH - MARGIN - 100.0,
            class_color(label),
            WIDTH - MARGIN - 90.0,
            y + 4.0,
            label.as_str()
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Write a scatter plot to `path`.
pub fn write_scatter_svg(
    path: &std::path::Path,
    points: &[[f64; 2]],
    labels: &[ClassLabel],
) -> Result<(), EmbeddingError> {
    let svg = scatter_svg(points, labels)?;
    std::fs::write(path, svg).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_contains_every_point_and_all_class_names() {
        let points = vec![[0.0, 0.0], [1.0, 2.0], [-3.0, 4.0]];
        let labels = vec![ClassLabel::Normal, ClassLabel::Benign, ClassLabel::Invasive];
        let svg = scatter_svg(&points, &labels).unwrap();
        // 3 data circles + 4 legend swatches.
        assert_eq!(svg.matches("<circle").count(), 7);
        for label in ClassLabel::ALL {
            assert!(svg.contains(&format!(">{}<", label.as_str())));
        }
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn distinct_classes_get_distinct_colors() {
        let mut seen = std::collections::HashSet::new();
        for label in ClassLabel::ALL {
            assert!(seen.insert(class_color(label)));
        }
    }

    #[test]
    fn degenerate_axis_centers_points() {
        let points = vec![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0], [5.0, 4.0]];
        let labels = vec![ClassLabel::Normal; 4];
        let svg = scatter_svg(&points, &labels).unwrap();
        // All x coordinates collapse to the horizontal center.
        let expected_x = format!("cx=\"{:.2}\"", MARGIN + (WIDTH - 2.0 * MARGIN) / 2.0);
        assert_eq!(svg.matches(expected_x.as_str()).count(), 4);
    }

    #[test]
    fn rejects_empty_and_mismatched_inputs() {
        assert!(matches!(scatter_svg(&[], &[]), Err(EmbeddingError::EmptyPlot)));
        assert!(matches!(
            scatter_svg(&[[0.0, 0.0]], &[]),
            Err(EmbeddingError::LengthMismatch { points: 1, labels: 0 })
        ));
    }
}
