//! Posterior-chain summaries and artifact export.
//!
//! Turns kept draws into treatment-effect decompositions (per-W, per-Z, and
//! the two average-effect definitions), computes summary statistics, and
//! writes the chain CSV plus three self-contained SVG panels:
//!
//! - `fig_a.svg`: scatter of the W-personalized effects (Δ|W=0 vs Δ|W=1)
//! - `fig_b.svg`: scatter of the Z-personalized effects (Δ|Z=0 vs Δ|Z=1)
//! - `fig_c.svg`: histogram of the half-sum average effect
//!
//! Two average-effect definitions are first-class: the half-sum
//! `(Δ|W=0 + Δ|W=1) / 2` (exact when P(W) is uniform) and the fully
//! marginalized `sum_z nu_z (rho[z][1] - rho[z][0])`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::mcmc::{chain_columns, chain_row, Chain};
use crate::model::ParameterDraw;
use crate::{Error, Result};

/// Treatment-effect decomposition of one parameter draw. Entries lie in
/// `[-1, 1]`; `ate_half_sum` is exactly the mean of the `d_w` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSample {
    /// `theta[1][w] - theta[0][w]` per latent value `w`.
    pub d_w: Vec<f64>,
    /// `rho[z][1] - rho[z][0]` per observed `z`.
    pub d_z: [f64; 2],
    /// Uniform-weight average of `d_w` (the half-sum when `k` = 2).
    pub ate_half_sum: f64,
    /// `sum_z nu[z] * d_z[z]`.
    pub ate_marginal: f64,
}

/// Computes the effect decomposition of a draw (pure; order of application
/// over a chain does not matter).
pub fn effects_of_draw(d: &ParameterDraw) -> EffectSample {
    let k = d.k;
    let d_w: Vec<f64> = (0..k).map(|w| d.theta(1, w) - d.theta(0, w)).collect();
    let rho = d.rho();
    let d_z = [rho[0][1] - rho[0][0], rho[1][1] - rho[1][0]];
    let ate_half_sum = d_w.iter().sum::<f64>() / k as f64;
    let ate_marginal = d.nu[0] * d_z[0] + d.nu[1] * d_z[1];
    EffectSample {
        d_w,
        d_z,
        ate_half_sum,
        ate_marginal,
    }
}

/// Names of the quantities tracked by the importance-sampling oracle:
/// the four `psi` cells, the `d_w` components, both `d_z` components, the
/// two average-effect definitions, and the first `omega` coordinate per `z`.
pub fn effect_quantity_names(k: usize) -> Vec<String> {
    let mut names = Vec::new();
    for z in 0..2 {
        for t in 0..2 {
            names.push(format!("psi_z{z}_t{t}"));
        }
    }
    for w in 0..k {
        names.push(format!("d_w{w}"));
    }
    names.push("d_z0".into());
    names.push("d_z1".into());
    names.push("ate_half_sum".into());
    names.push("ate_marginal".into());
    names.push("omega_w0_z0".into());
    names.push("omega_w0_z1".into());
    names
}

/// Fills `out` with the values matching [`effect_quantity_names`].
pub fn effect_quantity_values(d: &ParameterDraw, out: &mut [f64]) {
    let psi = d.psi();
    let eff = effects_of_draw(d);
    let mut i = 0;
    for z in 0..2 {
        for t in 0..2 {
            out[i] = psi[z][t];
            i += 1;
        }
    }
    for &v in &eff.d_w {
        out[i] = v;
        i += 1;
    }
    out[i] = eff.d_z[0];
    out[i + 1] = eff.d_z[1];
    out[i + 2] = eff.ate_half_sum;
    out[i + 3] = eff.ate_marginal;
    out[i + 4] = d.omega(0, 0);
    out[i + 5] = d.omega(0, 1);
}

/// Mean, standard deviation and 5%/95% quantiles of one chain column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q95: f64,
}

/// Pearson correlation with an explicit undefined flag (fewer than three
/// draws, or zero variance) instead of a silent zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationStat {
    pub defined: bool,
    pub value: Option<f64>,
}

impl CorrelationStat {
    fn undefined() -> CorrelationStat {
        CorrelationStat {
            defined: false,
            value: None,
        }
    }

    fn of(v: f64) -> CorrelationStat {
        CorrelationStat {
            defined: true,
            value: Some(v),
        }
    }
}

/// Per-column statistics over a chain plus the two effect correlations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    pub draws: usize,
    pub accepted: u64,
    pub proposed: u64,
    pub acceptance_rate: f64,
    pub quantities: Vec<QuantityStats>,
    /// corr(d_w0, d_w1); defined only for `k` = 2 chains with variance.
    pub corr_d_w: CorrelationStat,
    /// corr(d_z0, d_z1).
    pub corr_d_z: CorrelationStat,
}

impl ChainSummary {
    pub fn get(&self, name: &str) -> Option<&QuantityStats> {
        self.quantities.iter().find(|q| q.name == name)
    }
}

/// Compensated (Kahan) sum.
fn ksum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

fn column_stats(name: &str, values: &[f64]) -> QuantityStats {
    let n = values.len();
    let mean = ksum(values.iter().copied()) / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (ksum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64).sqrt()
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("chain values are finite"));
    QuantityStats {
        name: name.to_owned(),
        mean,
        std,
        q05: quantile(&sorted, 0.05),
        q95: quantile(&sorted, 0.95),
    }
}

/// Linear interpolation between order statistics on a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> CorrelationStat {
    let n = xs.len();
    if n < 3 {
        return CorrelationStat::undefined();
    }
    let mx = ksum(xs.iter().copied()) / n as f64;
    let my = ksum(ys.iter().copied()) / n as f64;
    let sxx = ksum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let syy = ksum(ys.iter().map(|y| (y - my) * (y - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return CorrelationStat::undefined();
    }
    let sxy = ksum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    CorrelationStat::of(sxy / (sxx * syy).sqrt())
}

/// Summarizes a chain: per-column mean/std/quantiles and the effect
/// correlations. Errors on an empty chain.
pub fn summarize(chain: &Chain) -> Result<ChainSummary> {
    if chain.draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let k = chain.draws[0].params.k;
    let names = chain_columns(k);
    let n = chain.draws.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); names.len()];
    for kept in &chain.draws {
        for (col, v) in columns.iter_mut().zip(chain_row(kept)) {
            col.push(v);
        }
    }
    let quantities: Vec<QuantityStats> = names
        .iter()
        .zip(&columns)
        .map(|(name, col)| column_stats(name, col))
        .collect();
    let col = |name: &str| -> &[f64] {
        let idx = names.iter().position(|n| n == name).expect("known column");
        &columns[idx]
    };
    let corr_d_w = if k == 2 {
        pearson(col("d_w0"), col("d_w1"))
    } else {
        CorrelationStat::undefined()
    };
    let corr_d_z = pearson(col("d_z0"), col("d_z1"));
    Ok(ChainSummary {
        draws: n,
        accepted: chain.accepted,
        proposed: chain.proposed,
        acceptance_rate: chain.acceptance_rate(),
        quantities,
        corr_d_w,
        corr_d_z,
    })
}

// ---------------------------------------------------------------------------
// SVG panels
// ---------------------------------------------------------------------------

const SCATTER_SIZE: f64 = 600.0;
const HIST_W: f64 = 800.0;
const HIST_H: f64 = 400.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 56.0;
const HIST_BINS: usize = 80;

struct Frame {
    width: f64,
    height: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn plot_w(&self) -> f64 {
        self.width - MARGIN_L - MARGIN_R
    }

    fn plot_h(&self) -> f64 {
        self.height - MARGIN_T - MARGIN_B
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_min) / (self.x_max - self.x_min) * self.plot_w()
    }

    fn py(&self, y: f64) -> f64 {
        MARGIN_T + (self.y_max - y) / (self.y_max - self.y_min) * self.plot_h()
    }
}

fn svg_open(out: &mut String, frame: &Frame) {
    let (w, h) = (frame.width, frame.height);
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
}

fn svg_axes(
    out: &mut String,
    frame: &Frame,
    x_ticks: &[f64],
    y_ticks: &[f64],
    x_label: &str,
    y_label: &str,
    y_tick_fmt: impl Fn(f64) -> String,
) {
    let (x0, x1) = (MARGIN_L, frame.width - MARGIN_R);
    let (y0, y1) = (MARGIN_T, frame.height - MARGIN_B);
    for &t in x_ticks {
        let x = frame.px(t);
        let _ = write!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{y1:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n\
             <text x=\"{x:.2}\" y=\"{ty:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{t}</text>\n",
            ty = y1 + 18.0
        );
    }
    for &t in y_ticks {
        let y = frame.py(t);
        let _ = write!(
            out,
            "<line x1=\"{x0:.2}\" y1=\"{y:.2}\" x2=\"{x1:.2}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n\
             <text x=\"{tx:.2}\" y=\"{ty:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{label}</text>\n",
            tx = x0 - 6.0,
            ty = y + 4.0,
            label = y_tick_fmt(t)
        );
    }
    let _ = write!(
        out,
        "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
         fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n\
         <text x=\"{cx:.2}\" y=\"{by:.2}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"16\" y=\"{cy:.2}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\" transform=\"rotate(-90 16 {cy:.2})\">{y_label}</text>\n",
        w = x1 - x0,
        h = y1 - y0,
        cx = (x0 + x1) / 2.0,
        by = frame.height - 14.0,
        cy = (y0 + y1) / 2.0,
    );
}

/// Scatter over the fixed [-1, 1]^2 effect square.
fn scatter_svg(points: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    let frame = Frame {
        width: SCATTER_SIZE,
        height: SCATTER_SIZE,
        x_min: -1.0,
        x_max: 1.0,
        y_min: -1.0,
        y_max: 1.0,
    };
    let mut out = String::new();
    svg_open(&mut out, &frame);
    let ticks = [-1.0, -0.5, 0.0, 0.5, 1.0];
    svg_axes(&mut out, &frame, &ticks, &ticks, x_label, y_label, |t| {
        format!("{t}")
    });
    for &(x, y) in points {
        let _ = write!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#1f77b4\" fill-opacity=\"0.35\"/>\n",
            frame.px(x.clamp(-1.0, 1.0)),
            frame.py(y.clamp(-1.0, 1.0)),
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Histogram over the fixed [-1, 1] range with 80 bins.
fn histogram_svg(values: &[f64], x_label: &str) -> String {
    let mut counts = [0u64; HIST_BINS];
    for &v in values {
        let pos = (v.clamp(-1.0, 1.0) + 1.0) / 2.0 * HIST_BINS as f64;
        let bin = (pos as usize).min(HIST_BINS - 1);
        counts[bin] += 1;
    }
    let max_count = counts.iter().copied().max().unwrap_or(0).max(1);
    let frame = Frame {
        width: HIST_W,
        height: HIST_H,
        x_min: -1.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: max_count as f64 * 1.05,
    };
    let mut out = String::new();
    svg_open(&mut out, &frame);
    let x_ticks = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let y_ticks: Vec<f64> = (0..=4).map(|i| max_count as f64 * i as f64 / 4.0).collect();
    svg_axes(&mut out, &frame, &x_ticks, &y_ticks, x_label, "draws", |t| {
        format!("{:.0}", t)
    });
    let bin_w = 2.0 / HIST_BINS as f64;
    for (i, &c) in counts.iter().enumerate() {
        let x = -1.0 + i as f64 * bin_w;
        let x_px = frame.px(x);
        let top = frame.py(c as f64);
        let base = frame.py(0.0);
        let _ = write!(
            out,
            "<rect class=\"bar\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"#1f77b4\" stroke=\"white\" stroke-width=\"0.5\"/>\n",
            x_px,
            top,
            frame.px(x + bin_w) - x_px,
            base - top,
        );
    }
    out.push_str("</svg>\n");
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

/// Writes `chain.csv`, `fig_a.svg`, `fig_b.svg` and `fig_c.svg` into
/// `out_dir` (created if missing) and returns the paths written.
pub fn export_artifacts(chain: &Chain, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let effects: Vec<EffectSample> = chain
        .draws
        .iter()
        .map(|d| effects_of_draw(&d.params))
        .collect();
    let dw: Vec<(f64, f64)> = effects
        .iter()
        .map(|e| (e.d_w[0], *e.d_w.get(1).unwrap_or(&e.d_w[0])))
        .collect();
    let dz: Vec<(f64, f64)> = effects.iter().map(|e| (e.d_z[0], e.d_z[1])).collect();
    let ate: Vec<f64> = effects.iter().map(|e| e.ate_half_sum).collect();
    let mut written = Vec::new();
    written.push(write_file(out_dir, "chain.csv", &chain.to_csv())?);
    written.push(write_file(
        out_dir,
        "fig_a.svg",
        &scatter_svg(&dw, "effect given W=0", "effect given W=1"),
    )?);
    written.push(write_file(
        out_dir,
        "fig_b.svg",
        &scatter_svg(&dz, "effect given Z=0", "effect given Z=1"),
    )?);
    written.push(write_file(
        out_dir,
        "fig_c.svg",
        &histogram_svg(&ate, "average treatment effect"),
    )?);
    Ok(written)
}
