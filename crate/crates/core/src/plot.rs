//! Static SVG figures.
//!
//! Rendering is a pure function of the input rows: no simulation happens
//! here, and equal inputs give byte-identical documents.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::BankRiskProfile;
use crate::report::ResultRow;

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 110.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const BAR_W: f64 = 16.0;

const VIRIDIS: [(f64, f64, f64); 5] =
    [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];

const DIVERGING: [(f64, f64, f64); 3] = [(33.0, 102.0, 172.0), (247.0, 247.0, 247.0), (178.0, 24.0, 43.0)];

/// A `rows × columns` grid of values; columns are ψ values.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub title: String,
    pub row_labels: Vec<String>,
    pub col_values: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Heatmap {
    fn check(&self) -> Result<()> {
        if self.row_labels.is_empty() || self.col_values.is_empty() {
            return Err(Error::Plot(format!("heatmap `{}` has an empty grid", self.title)));
        }
        if self.values.len() != self.row_labels.len()
            || self.values.iter().any(|r| r.len() != self.col_values.len())
        {
            return Err(Error::Plot(format!("heatmap `{}` has a ragged grid", self.title)));
        }
        Ok(())
    }

    fn range(&self) -> (f64, f64) {
        let finite = self.values.iter().flatten().copied().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo > hi {
            (0.0, 1.0)
        } else {
            (lo, hi)
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn ramp(stops: &[(f64, f64, f64)], t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (stops.len() - 1) as f64;
    let k = (x.floor() as usize).min(stops.len() - 2);
    let f = x - k as f64;
    let (a, b) = (stops[k], stops[k + 1]);
    let c = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

/// Maps values onto colors: viridis for nonnegative data, a diverging
/// scale centered on zero otherwise.
struct ColorScale {
    lo: f64,
    hi: f64,
    diverging: bool,
}

impl ColorScale {
    fn new(lo: f64, hi: f64) -> Self {
        if lo < 0.0 {
            let m = lo.abs().max(hi.abs());
            ColorScale { lo: -m, hi: m, diverging: true }
        } else {
            ColorScale { lo, hi, diverging: false }
        }
    }

    fn unit(&self, v: f64) -> f64 {
        if self.hi > self.lo {
            (v - self.lo) / (self.hi - self.lo)
        } else {
            0.5
        }
    }

    fn color(&self, v: f64) -> String {
        if !v.is_finite() {
            return "#bdbdbd".into();
        }
        let stops: &[(f64, f64, f64)] = if self.diverging { &DIVERGING } else { &VIRIDIS };
        ramp(stops, self.unit(v))
    }

    fn bar(&self, out: &mut String, id: &str, x: f64, y: f64, h: f64, label: &str) {
        let stops: &[(f64, f64, f64)] = if self.diverging { &DIVERGING } else { &VIRIDIS };
        let _ = writeln!(out, r#"<defs><linearGradient id="{id}" x1="0" y1="1" x2="0" y2="0">"#);
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let _ = writeln!(out, r#"<stop offset="{t:.1}" stop-color="{}"/>"#, ramp(stops, t));
        }
        let _ = writeln!(out, "</linearGradient></defs>");
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{BAR_W:.2}" height="{h:.2}" fill="url(#{id})" stroke="#333"/>"##
        );
        let tx = x + BAR_W + 4.0;
        let _ =
            writeln!(out, r#"<text x="{tx:.2}" y="{:.2}" font-size="10">{}</text>"#, y + 8.0, tick(self.hi));
        let _ =
            writeln!(out, r#"<text x="{tx:.2}" y="{:.2}" font-size="10">{}</text>"#, y + h, tick(self.lo));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            x + BAR_W / 2.0,
            y - 6.0,
            escape(label)
        );
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

/// Stacks one panel per heatmap, each with its own color bar.
pub fn render_heatmaps(maps: &[Heatmap]) -> Result<String> {
    if maps.is_empty() {
        return Err(Error::Plot("no heatmaps to render".into()));
    }
    for m in maps {
        m.check()?;
    }
    let total_w = MARGIN_L + PANEL_W + MARGIN_R;
    let block = MARGIN_T + PANEL_H + MARGIN_B;
    let mut out = String::new();
    header(&mut out, total_w, block * maps.len() as f64);

    for (p, map) in maps.iter().enumerate() {
        let top = p as f64 * block + MARGIN_T;
        let (lo, hi) = map.range();
        let scale = ColorScale::new(lo, hi);
        let rows = map.row_labels.len();
        let cols = map.col_values.len();
        let cw = PANEL_W / cols as f64;
        let rh = PANEL_H / rows as f64;

        let _ = writeln!(out, r#"<g class="panel">"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
            MARGIN_L + PANEL_W / 2.0,
            top - 14.0,
            escape(&map.title)
        );
        for (r, row) in map.values.iter().enumerate() {
            let y = top + r as f64 * rh;
            for (c, &v) in row.iter().enumerate() {
                let _ = writeln!(
                    out,
                    r#"<rect class="cell" x="{:.2}" y="{y:.2}" width="{:.2}" height="{rh:.2}" fill="{}"/>"#,
                    MARGIN_L + c as f64 * cw,
                    cw + 0.05,
                    scale.color(v)
                );
            }
        }
        let _ = writeln!(
            out,
            r##"<rect x="{MARGIN_L:.2}" y="{top:.2}" width="{PANEL_W:.2}" height="{PANEL_H:.2}" fill="none" stroke="#333"/>"##
        );

        // y axis: one label per row, thinned to at most 20
        let every = rows.div_ceil(20);
        for (r, label) in map.row_labels.iter().enumerate().filter(|(r, _)| r % every == 0) {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end" dominant-baseline="middle">{}</text>"#,
                MARGIN_L - 6.0,
                top + (r as f64 + 0.5) * rh,
                escape(label)
            );
        }
        // x axis: five ticks at evenly spaced columns
        let bottom = top + PANEL_H;
        let ticks: BTreeSet<usize> = (0..5).map(|k| k * (cols - 1) / 4).collect();
        for c in ticks {
            let x = MARGIN_L + (c as f64 + 0.5) * cw;
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##,
                bottom + 4.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                bottom + 16.0,
                tick(map.col_values[c])
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">ψ</text>"#,
            MARGIN_L + PANEL_W / 2.0,
            bottom + 34.0
        );
        scale.bar(
            &mut out,
            &format!("scale{p}"),
            MARGIN_L + PANEL_W + 24.0,
            top + 14.0,
            PANEL_H - 14.0,
            "DS",
        );
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_heatmap(path: &Path, maps: &[Heatmap]) -> Result<()> {
    let svg = render_heatmaps(maps)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Year × ψ panels of `ds_mean` from the group rows of a results file,
/// one per `(damping, ρ, λ)` in order of first appearance.
///
/// When a damping mode has both `ρ = 0` and a larger ρ on the same grid,
/// a difference panel (largest ρ minus zero) follows its curves.
pub fn heatmaps_from_results(rows: &[ResultRow]) -> Result<Vec<Heatmap>> {
    let group: Vec<(&ResultRow, f64)> = rows.iter().filter_map(|r| Some((r, r.psi()?))).collect();
    if group.is_empty() {
        return Err(Error::Plot("results contain no group-shock rows".into()));
    }

    let mut keys: Vec<(String, f64, f64)> = Vec::new();
    for (r, _) in &group {
        let key = (r.damping.clone(), r.rho, r.lambda);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }

    let mut maps = Vec::new();
    let mut by_key = Vec::new();
    for (damping, rho, lambda) in &keys {
        let cells: Vec<&(&ResultRow, f64)> = group
            .iter()
            .filter(|(r, _)| &r.damping == damping && r.rho == *rho && r.lambda == *lambda)
            .collect();
        let years: BTreeSet<i32> = cells.iter().map(|(r, _)| r.year).collect();
        let mut psis: Vec<f64> = cells.iter().map(|(_, p)| *p).collect();
        psis.sort_by(f64::total_cmp);
        psis.dedup();
        let mut values = Vec::with_capacity(years.len());
        for &y in &years {
            let row = psis
                .iter()
                .map(|&p| {
                    cells
                        .iter()
                        .find(|(r, q)| r.year == y && *q == p)
                        .map(|(r, _)| r.ds_mean)
                        .ok_or_else(|| Error::Plot(format!("missing cell year {y}, psi {p}")))
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        let map = Heatmap {
            title: format!("DS(t*)  {damping}  ρ={rho}  λ={lambda}"),
            row_labels: years.iter().map(|y| y.to_string()).collect(),
            col_values: psis,
            values,
        };
        by_key.push(map.clone());
        maps.push(map);
    }

    let mut modes: Vec<(&String, f64)> = Vec::new();
    for (d, _, l) in &keys {
        if !modes.iter().any(|(m, ll)| *m == d && *ll == *l) {
            modes.push((d, *l));
        }
    }
    for (damping, lambda) in modes {
        let of_mode: Vec<usize> =
            (0..keys.len()).filter(|&k| &keys[k].0 == damping && keys[k].2 == lambda).collect();
        let zero = of_mode.iter().copied().find(|&k| keys[k].1 == 0.0);
        let top = of_mode
            .iter()
            .copied()
            .filter(|&k| keys[k].1 > 0.0)
            .max_by(|&a, &b| keys[a].1.total_cmp(&keys[b].1));
        if let (Some(z), Some(t)) = (zero, top) {
            let (a, b) = (&by_key[t], &by_key[z]);
            if a.row_labels == b.row_labels && a.col_values == b.col_values {
                maps.push(Heatmap {
                    title: format!("DS difference  {damping}  ρ={} minus ρ=0", keys[t].1),
                    row_labels: a.row_labels.clone(),
                    col_values: a.col_values.clone(),
                    values: a
                        .values
                        .iter()
                        .zip(&b.values)
                        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
                        .collect(),
                });
            }
        }
    }
    Ok(maps)
}

/// Impact against vulnerability, one marker per bank; marker area is
/// proportional to ν and color follows the extended leverage.
pub fn render_scatter(profiles: &[BankRiskProfile]) -> Result<String> {
    if profiles.is_empty() {
        return Err(Error::Plot("no bank profiles to plot".into()));
    }
    let (w, h) = (560.0, 520.0);
    let (left, right, top, bottom) = (70.0, 110.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let finite_max = |f: fn(&BankRiskProfile) -> f64| {
        profiles.iter().map(f).filter(|v| v.is_finite()).fold(0.0f64, f64::max)
    };
    let x_hi = finite_max(|p| p.impact).max(1.0);
    let y_hi = finite_max(|p| p.vulnerability).max(1.0);
    let nu_max = finite_max(|p| p.nu);
    let (lev_lo, lev_hi) = profiles
        .iter()
        .map(|p| p.ext_leverage)
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let scale = if lev_lo > lev_hi { ColorScale::new(0.0, 1.0) } else { ColorScale::new(lev_lo, lev_hi) };

    let mut out = String::new();
    header(&mut out, w, h);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" font-size="14" text-anchor="middle">Impact and vulnerability</text>"#,
        left + pw / 2.0
    );
    let _ = writeln!(
        out,
        r##"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333"/>"##
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let x = left + f * pw;
        let y = top + ph - f * ph;
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            top + ph + 16.0,
            tick(f * x_hi)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{y:.2}" font-size="10" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            left - 6.0,
            tick(f * y_hi)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">impact</text>"#,
        left + pw / 2.0,
        top + ph + 38.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 20 {:.2})">vulnerability</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    // largest banks first so small markers stay visible
    let mut order: Vec<usize> = (0..profiles.len()).collect();
    order.sort_by(|&a, &b| profiles[b].nu.total_cmp(&profiles[a].nu).then(a.cmp(&b)));
    let _ = writeln!(out, r##"<g fill-opacity="0.75" stroke="#222" stroke-width="0.5">"##);
    for i in order {
        let p = &profiles[i];
        let r =
            if nu_max > 0.0 && p.nu.is_finite() { 2.0 + 16.0 * (p.nu.max(0.0) / nu_max).sqrt() } else { 4.0 };
        let x = left + p.impact.clamp(0.0, x_hi) / x_hi * pw;
        let y = top + ph - p.vulnerability.clamp(0.0, y_hi) / y_hi * ph;
        let _ = writeln!(
            out,
            r#"<circle class="bank" cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{}"><title>{} I={} V={}</title></circle>"#,
            scale.color(p.ext_leverage),
            escape(&p.bank_id),
            p.impact,
            p.vulnerability
        );
    }
    let _ = writeln!(out, "</g>");
    scale.bar(&mut out, "scale", left + pw + 30.0, top + 14.0, ph - 14.0, "ext. leverage");
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_scatter(path: &Path, profiles: &[BankRiskProfile]) -> Result<()> {
    let svg = render_scatter(profiles)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
