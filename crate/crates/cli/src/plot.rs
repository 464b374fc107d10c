//! Minimal SVG line chart of a loss log.

use std::fmt::Write as _;

use piqa_core::optim::LossLog;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Per-step loss in grey with the per-epoch mean in blue, log-scaled y axis.
pub fn loss_svg(log: &LossLog) -> String {
    let steps: Vec<(f64, f64)> = log.rows.iter().map(|r| (r.step as f64, r.loss)).collect();
    let mut epochs = Vec::new();
    let mut last_step = 0.0;
    for (epoch, mean) in log.epoch_means() {
        if let Some(r) = log.rows.iter().rev().find(|r| r.epoch == epoch) {
            last_step = r.step as f64;
        }
        epochs.push((last_step, mean));
    }
    let floor = 1e-12;
    let ys: Vec<f64> = steps.iter().map(|p| p.1.max(floor).log10()).collect();
    let (y_lo, y_hi) = bounds(&ys);
    let x_hi = steps.last().map_or(1.0, |p| p.0.max(1.0));
    let map = |(x, y): (f64, f64)| {
        let px = MARGIN + (x / x_hi) * (WIDTH - 2.0 * MARGIN);
        let py = HEIGHT - MARGIN - (y.max(floor).log10() - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
        format!("{px:.2},{py:.2}")
    };
    let line = |pts: &[(f64, f64)]| pts.iter().map(|&p| map(p)).collect::<Vec<_>>().join(" ");

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#
    );
    let _ = writeln!(
        s,
        r##"<polyline points="{}" stroke="#aaaaaa" fill="none" stroke-width="1"/>"##,
        line(&steps)
    );
    let _ = writeln!(
        s,
        r##"<polyline points="{}" stroke="#1f5fbf" fill="none" stroke-width="2"/>"##,
        line(&epochs)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">step</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{x0}" y="{}" font-size="12">loss (log10 {y_lo:.2} .. {y_hi:.2})</text>"#,
        MARGIN - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{x1}" y="{}" font-size="12" text-anchor="end">{}</text>"#,
        HEIGHT - 35.0,
        x_hi
    );
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
