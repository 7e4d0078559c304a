//! Clip timeline rendered as SVG.

use std::fmt::Write;

const CELL: usize = 12;
const ROW: usize = 16;
const GAP: usize = 4;
const GRAY: &str = "#b0b0b0";
const ORANGE: &str = "#f28e2b";
const GREEN: &str = "#59a14f";

fn row(svg: &mut String, class: &str, fill: &str, y: usize, clips: impl Iterator<Item = usize>) {
    for c in clips {
        let _ = writeln!(
            svg,
            r#"  <rect class="{class}" x="{}" y="{y}" width="{}" height="{ROW}" fill="{fill}"/>"#,
            c * CELL,
            CELL - 1
        );
    }
}

/// One gray cell per clip, the prediction in orange below it and the
/// ground truth, when known, in green below that.
pub fn timeline(clips: usize, predicted: &[usize], ground_truth: Option<&[usize]>) -> String {
    let rows = if ground_truth.is_some() { 3 } else { 2 };
    let width = (clips * CELL).max(1);
    let height = rows * ROW + (rows - 1) * GAP;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    row(&mut svg, "clip", GRAY, 0, 0..clips);
    row(&mut svg, "pred", ORANGE, ROW + GAP, predicted.iter().copied());
    if let Some(gt) = ground_truth {
        row(&mut svg, "gt", GREEN, 2 * (ROW + GAP), gt.iter().copied());
    }
    svg.push_str("</svg>\n");
    svg
}
