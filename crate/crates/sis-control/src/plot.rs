//! Minimal SVG line plots for experiment artifacts.
//!
//! Self-contained on purpose: the plots are diagnostic line charts with
//! axes, ticks, and a legend, written as standalone `.svg` files. Output is
//! a pure function of the input series, so rerunning an experiment
//! reproduces its plots byte for byte.

use std::path::Path;

use crate::error::{Error, Result};

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
        }
    }
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Plot y on a log10 scale (nonpositive values are dropped).
    pub log_y: bool,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 46.0;
const MARGIN_B: f64 = 58.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    for mult in [1.0, 2.0, 5.0, 10.0] {
        if mult * mag >= raw {
            return mult * mag;
        }
    }
    10.0 * mag
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-3 {
        format!("{v:e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

impl LinePlot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        LinePlot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            log_y: false,
        }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    fn transformed(&self) -> Vec<(usize, Vec<(f64, f64)>)> {
        self.series
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let pts = s
                    .points
                    .iter()
                    .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
                    .map(|&(x, y)| (x, if self.log_y { y.log10() } else { y }))
                    .collect();
                (i, pts)
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let data = self.transformed();
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for (_, pts) in &data {
            for &(x, y) in pts {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
        if !xmin.is_finite() {
            xmin = 0.0;
            xmax = 1.0;
            ymin = 0.0;
            ymax = 1.0;
        }
        if xmax - xmin < 1e-300 {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if ymax - ymin < 1e-300 {
            ymin -= 0.5;
            ymax += 0.5;
        }
        let pad = 0.04 * (ymax - ymin);
        ymin -= pad;
        ymax += pad;

        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let px = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * pw;
        let py = |y: f64| MARGIN_T + (ymax - y) / (ymax - ymin) * ph;

        let mut svg = String::new();
        svg.push_str(&format!(
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" ",
                "font-family=\"sans-serif\" font-size=\"13\">\n",
                "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
            ),
            w = WIDTH,
            h = HEIGHT
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            MARGIN_L + pw / 2.0,
            escape(&self.title)
        ));

        // Frame.
        svg.push_str(&format!(
            "<rect x=\"{MARGIN_L:.1}\" y=\"{MARGIN_T:.1}\" width=\"{pw:.1}\" height=\"{ph:.1}\" fill=\"none\" stroke=\"#333\"/>\n"
        ));

        // X ticks.
        let xstep = nice_step(xmax - xmin, 8);
        let mut t = (xmin / xstep).ceil() * xstep;
        while t <= xmax + 1e-12 * xstep {
            let x = px(t);
            svg.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n",
                MARGIN_T + ph,
                MARGIN_T + ph + 5.0
            ));
            svg.push_str(&format!(
                "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
                MARGIN_T + ph + 20.0,
                fmt_tick((t / xstep).round() * xstep)
            ));
            t += xstep;
        }

        // Y ticks: decades when logarithmic, nice steps otherwise.
        let mut ticks: Vec<(f64, String)> = Vec::new();
        if self.log_y {
            let lo = ymin.floor() as i64;
            let hi = ymax.ceil() as i64;
            for d in lo..=hi {
                let y = d as f64;
                if y >= ymin && y <= ymax {
                    ticks.push((y, format!("1e{d}")));
                }
            }
        } else {
            let ystep = nice_step(ymax - ymin, 6);
            let mut t = (ymin / ystep).ceil() * ystep;
            while t <= ymax + 1e-12 * ystep {
                ticks.push((t, fmt_tick((t / ystep).round() * ystep)));
                t += ystep;
            }
        }
        for (yv, label) in ticks {
            let y = py(yv);
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#333\"/>\n",
                MARGIN_L - 5.0,
                MARGIN_L
            ));
            svg.push_str(&format!(
                "<line x1=\"{MARGIN_L:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
                MARGIN_L + pw
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>\n",
                MARGIN_L - 9.0,
                y + 4.5
            ));
        }

        // Axis titles.
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_L + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"20\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {0:.1})\">{1}</text>\n",
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        ));

        // Series and legend.
        for (i, pts) in &data {
            let color = PALETTE[i % PALETTE.len()];
            if pts.len() == 1 {
                let (x, y) = pts[0];
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                    px(x),
                    py(y)
                ));
            } else if !pts.is_empty() {
                let mut d = String::new();
                for (k, &(x, y)) in pts.iter().enumerate() {
                    d.push_str(if k == 0 { "M" } else { " L" });
                    d.push_str(&format!("{:.2} {:.2}", px(x), py(y)));
                }
                svg.push_str(&format!(
                    "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n"
                ));
            }
            let ly = MARGIN_T + 16.0 + 18.0 * *i as f64;
            let lx = MARGIN_L + pw - 150.0;
            svg.push_str(&format!(
                "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                lx + 22.0
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
                lx + 28.0,
                ly + 4.5,
                escape(&self.series[*i].label)
            ));
        }

        svg.push_str("</svg>\n");
        svg
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io("write plot", path, e))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
