//! Minimal SVG plotting: a rollout error band (median with a p10-p90
//! envelope on a log scale) and the stable-step CDF. No styling knobs; the
//! files are meant for a quick look at a finished run.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 64.0;
const MR: f64 = 20.0;
const MT: f64 = 24.0;
const MB: f64 = 46.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        ML + (v - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }

    fn y(&self, v: f64) -> f64 {
        H - MB - (v - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

fn svg_open(out: &mut String) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    );
}

fn axes(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = write!(
        out,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n\
         <text x=\"{}\" y=\"16\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        W - ML - MR,
        H - MT - MB,
        (ML + W - MR) / 2.0,
        (ML + W - MR) / 2.0,
        H - 10.0,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
    );
}

fn x_ticks(out: &mut String, frame: &Frame, ticks: &[f64]) {
    for &t in ticks {
        let x = frame.x(t);
        let _ = write!(
            out,
            "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"#444\"/>\n\
             <text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{t}</text>\n",
            H - MB,
            H - MB + 5.0,
            H - MB + 18.0,
        );
    }
}

fn polyline(out: &mut String, points: &[(f64, f64)], color: &str, width: f64) {
    let mut path = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let _ = write!(path, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
    }
    let _ = write!(
        out,
        "<polyline points=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>\n"
    );
}

fn round_ticks(max: f64) -> Vec<f64> {
    let raw = max / 4.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|s| s * mag)
        .find(|&s| max / s <= 5.0)
        .unwrap_or(mag);
    let mut ticks = Vec::new();
    let mut t = 0.0;
    while t <= max * 1.0001 {
        ticks.push(t);
        t += step;
    }
    ticks
}

/// Median rollout error with a p10-p90 band, log-scaled vertically.
pub fn error_band_svg(median: &[f64], p10: &[f64], p90: &[f64]) -> String {
    let floor = 1e-12;
    let logc = |v: f64| v.max(floor).log10();
    let lo = p10
        .iter()
        .chain(median)
        .fold(f64::INFINITY, |a, &v| a.min(logc(v)));
    let hi = p90
        .iter()
        .chain(median)
        .fold(f64::NEG_INFINITY, |a, &v| a.max(logc(v)));
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let frame = Frame {
        x0: 1.0,
        x1: median.len().max(2) as f64,
        y0: lo,
        y1: hi,
    };

    let mut out = String::new();
    svg_open(&mut out);
    axes(&mut out, "Rollout error", "step", "nRMSE");

    let mut band = String::new();
    for (i, &v) in p90.iter().enumerate() {
        let _ = write!(
            band,
            "{}{:.2},{:.2}",
            if i == 0 { "" } else { " " },
            frame.x((i + 1) as f64),
            frame.y(logc(v))
        );
    }
    for (i, &v) in p10.iter().enumerate().rev() {
        let _ = write!(
            band,
            " {:.2},{:.2}",
            frame.x((i + 1) as f64),
            frame.y(logc(v))
        );
    }
    let _ = write!(
        out,
        "<polygon points=\"{band}\" fill=\"#7aa6d9\" fill-opacity=\"0.35\" stroke=\"none\"/>\n"
    );

    let curve: Vec<(f64, f64)> = median
        .iter()
        .enumerate()
        .map(|(i, &v)| (frame.x((i + 1) as f64), frame.y(logc(v))))
        .collect();
    polyline(&mut out, &curve, "#1f4e8c", 1.8);

    let mut decade = lo as i64;
    while decade <= hi as i64 {
        let y = frame.y(decade as f64);
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#444\"/>\n\
             <text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">1e{decade}</text>\n",
            ML - 5.0,
            ML,
            ML - 8.0,
            y + 4.0,
        );
        decade += 1;
    }
    x_ticks(
        &mut out,
        &frame,
        &round_ticks(median.len() as f64)
            .into_iter()
            .filter(|&t| t >= 1.0)
            .collect::<Vec<_>>(),
    );
    out.push_str("</svg>\n");
    out
}

/// Empirical CDF of stable steps: fraction of trajectories at or below each
/// observed horizon.
pub fn stable_cdf_svg(points: &[(f64, f64)], x_max: f64) -> String {
    let frame = Frame {
        x0: 0.0,
        x1: x_max.max(1.0),
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    svg_open(&mut out);
    axes(
        &mut out,
        "Stable steps",
        "steps survived",
        "fraction of trajectories",
    );

    let mut curve = vec![(frame.x(0.0), frame.y(0.0))];
    let mut prev = 0.0;
    for &(x, f) in points {
        curve.push((frame.x(x), frame.y(prev)));
        curve.push((frame.x(x), frame.y(f)));
        prev = f;
    }
    curve.push((frame.x(frame.x1), frame.y(prev)));
    polyline(&mut out, &curve, "#1f4e8c", 1.8);

    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = frame.y(frac);
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#444\"/>\n\
             <text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{frac}</text>\n",
            ML - 5.0,
            ML,
            ML - 8.0,
            y + 4.0,
        );
    }
    x_ticks(&mut out, &frame, &round_ticks(frame.x1));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_band_svg_is_well_formed() {
        let median = vec![0.01, 0.02, 0.05, 0.1, 0.4];
        let p10 = vec![0.005, 0.01, 0.02, 0.05, 0.2];
        let p90 = vec![0.02, 0.05, 0.1, 0.3, 0.9];
        let svg = error_band_svg(&median, &p10, &p90);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polygon"));
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn cdf_svg_steps_through_every_point() {
        let points = vec![(3.0, 0.25), (7.0, 0.75), (10.0, 1.0)];
        let svg = stable_cdf_svg(&points, 12.0);
        assert!(svg.contains("<polyline"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn round_ticks_stay_coarse() {
        assert!(round_ticks(100.0).len() <= 7);
        assert!(round_ticks(7.0).len() <= 7);
    }
}
