//! Files written for a sweep: heat-map CSV, boundary CSV, an SVG rendering
//! and a JSON manifest that is sufficient to re-run the computation.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GridAxis, HeatMapResult};
use crate::classifier::{
    DEFAULT_BATCH, DEFAULT_FP_IDENTITY_TOL, DEFAULT_FP_REL_TOL, DEFAULT_LC_REL_TOL, DEFAULT_MAX_STEPS,
};
use crate::error::{Error, Result};
use crate::rng::{RNG_ALGORITHM, SEED_MIXING};

/// Which cell statistic colours the heat map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapValue {
    #[default]
    FixedPoint,
    LimitCycle,
    Multiplicity,
}

impl MapValue {
    pub fn label(self) -> &'static str {
        match self {
            Self::FixedPoint => "fraction converged to a fixed point",
            Self::LimitCycle => "fraction converged to a limit cycle",
            Self::Multiplicity => "fraction of games with multiple fixed points",
        }
    }
}

/// Make sure `dir` exists and is writable.
pub fn preflight_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-test");
    File::create(&probe)?.write_all(b"ok")?;
    fs::remove_file(&probe)?;
    Ok(())
}

/// Classifier constants and generator details recorded with every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The full configuration of the command; enough to re-run it.
    pub config: serde_json::Value,
    pub rng_algorithm: String,
    pub seed_mixing: String,
    pub classifier_defaults: ClassifierDefaults,
    pub elapsed_seconds: f64,
    pub outputs: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierDefaults {
    pub max_steps: u64,
    pub batch: u64,
    pub fp_rel_tol: f64,
    pub lc_rel_tol: f64,
    pub fp_identity_tol: f64,
}

impl Default for ClassifierDefaults {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            batch: DEFAULT_BATCH,
            fp_rel_tol: DEFAULT_FP_REL_TOL,
            lc_rel_tol: DEFAULT_LC_REL_TOL,
            fp_identity_tol: DEFAULT_FP_IDENTITY_TOL,
        }
    }
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, elapsed_seconds: f64, outputs: Vec<String>) -> Result<Self> {
        Ok(Self {
            tool: "ewa".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?,
            rng_algorithm: RNG_ALGORITHM.into(),
            seed_mixing: SEED_MIXING.into(),
            classifier_defaults: ClassifierDefaults::default(),
            elapsed_seconds,
            outputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn quote(s: &Option<String>) -> String {
    s.as_ref().map(|s| format!("\"{}\"", s.replace('"', "'"))).unwrap_or_default()
}

pub fn write_heatmap_csv<W: Write>(result: &HeatMapResult, mut w: W) -> Result<()> {
    writeln!(
        w,
        "alpha_index,gamma_index,alpha,gamma,alpha_over_beta,fixed_point,limit_cycle,non_convergent,multiplicity,mean_steps,failed,error"
    )?;
    let beta = result.config.beta;
    for c in &result.cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.alpha_index,
            c.gamma_index,
            c.alpha,
            c.gamma,
            c.alpha / beta,
            c.fixed_point,
            c.limit_cycle,
            c.non_convergent,
            c.multiplicity,
            opt(c.mean_steps),
            c.failed,
            quote(&c.error)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_boundary_csv<W: Write>(result: &HeatMapResult, mut w: W) -> Result<()> {
    writeln!(w, "p,gamma,critical_alpha_over_beta,critical_alpha,error")?;
    let beta = result.config.beta;
    for b in &result.boundary {
        writeln!(
            w,
            "{},{},{},{},{}",
            result.config.players,
            b.gamma,
            opt(b.inverse_r),
            opt(b.inverse_r.map(|v| v * beta)),
            quote(&b.error)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Colour ramp: 0 white, 0.1-0.35 yellow, 0.5-0.7 red, 1 black; linear in
/// between.
pub fn fraction_color(f: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, [f64; 3]); 6] = [
        (0.0, [255.0, 255.0, 255.0]),
        (0.1, [255.0, 255.0, 0.0]),
        (0.35, [255.0, 255.0, 0.0]),
        (0.5, [255.0, 0.0, 0.0]),
        (0.7, [255.0, 0.0, 0.0]),
        (1.0, [0.0, 0.0, 0.0]),
    ];
    let f = if f.is_nan() { 0.0 } else { f.clamp(0.0, 1.0) };
    let k = STOPS.windows(2).position(|w| f <= w[1].0).unwrap_or(STOPS.len() - 2);
    let ((a, ca), (b, cb)) = (STOPS[k], STOPS[k + 1]);
    let t = if b > a { (f - a) / (b - a) } else { 0.0 };
    let mix = |i: usize| (ca[i] + t * (cb[i] - ca[i])).round() as u8;
    (mix(0), mix(1), mix(2))
}

const CELL: f64 = 40.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;

/// Continuous cell coordinate of `v` on a grid axis (cell `k` is centred on `k`).
fn axis_position(axis: &GridAxis, v: f64) -> Option<f64> {
    if axis.count == 1 {
        return (v == axis.min).then_some(0.0);
    }
    let (a, b) = (axis.scale(axis.min), axis.scale(axis.max));
    let s = axis.scale(v);
    s.is_finite().then(|| (s - a) / (b - a) * (axis.count - 1) as f64)
}

/// Heat map of `value` with α/β on the horizontal axis and Γ on the vertical
/// axis (Γ increasing upwards), plus the theory boundary as a polyline.
pub fn write_svg<W: Write>(result: &HeatMapResult, value: MapValue, mut w: W) -> Result<()> {
    let cfg = &result.config;
    let (na, ng) = (cfg.alpha.count, cfg.gamma.count);
    let width = MARGIN_LEFT + CELL * na as f64 + MARGIN_RIGHT;
    let height = MARGIN_TOP + CELL * ng as f64 + MARGIN_BOTTOM;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<title>{} (p={}, N={}, beta={})</title>"#, value.label(), cfg.players, cfg.actions, cfg.beta);
    let x_of = |pos: f64| MARGIN_LEFT + CELL * (pos + 0.5);
    let y_of = |pos: f64| MARGIN_TOP + CELL * (ng as f64 - 0.5 - pos);
    for c in &result.cells {
        let f = match value {
            MapValue::FixedPoint => c.fixed_point,
            MapValue::LimitCycle => c.limit_cycle,
            MapValue::Multiplicity => c.multiplicity,
        };
        let (r, g, b) = if c.error.is_some() { (128, 128, 128) } else { fraction_color(f) };
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({r},{g},{b})"><title>alpha={} gamma={} value={}</title></rect>"#,
            x_of(c.alpha_index as f64) - CELL / 2.0,
            y_of(c.gamma_index as f64) - CELL / 2.0,
            c.alpha,
            c.gamma,
            f
        );
    }
    let points: Vec<String> = result
        .boundary
        .iter()
        .filter_map(|b| {
            let alpha = b.inverse_r? * cfg.beta;
            let px = axis_position(&cfg.alpha, alpha)?;
            let py = axis_position(&cfg.gamma, b.gamma)?;
            Some(format!("{:.3},{:.3}", x_of(px), y_of(py)))
        })
        .collect();
    if !points.is_empty() {
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="rgb(0,160,0)" stroke-width="3"/>"#,
            points.join(" ")
        );
    }
    let plot_bottom = MARGIN_TOP + CELL * ng as f64;
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        CELL * na as f64,
        CELL * ng as f64
    );
    for (k, a) in cfg.alpha.values().iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{:.3}</text>"#,
            x_of(k as f64),
            plot_bottom + 14.0,
            a / cfg.beta
        );
    }
    for (k, g) in cfg.gamma.values().iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3}</text>"#,
            MARGIN_LEFT - 6.0,
            y_of(k as f64) + 3.0,
            g
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">alpha/beta</text>"#,
        MARGIN_LEFT + CELL * na as f64 / 2.0,
        plot_bottom + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">Gamma</text>"#,
        MARGIN_TOP + CELL * ng as f64 / 2.0,
        MARGIN_TOP + CELL * ng as f64 / 2.0
    );
    s.push_str("</svg>\n");
    w.write_all(s.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Paths of the files written by [`emit_outputs`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputFiles {
    pub heatmap_csv: PathBuf,
    pub boundary_csv: PathBuf,
    pub svg: PathBuf,
    pub manifest: PathBuf,
}

/// Write `heatmap.csv`, `boundary.csv`, `heatmap.svg` and `manifest.json`
/// into `dir`, under the given command name.
pub fn emit_outputs(result: &HeatMapResult, command: &str, dir: &Path) -> Result<OutputFiles> {
    preflight_output_dir(dir)?;
    let files = OutputFiles {
        heatmap_csv: dir.join("heatmap.csv"),
        boundary_csv: dir.join("boundary.csv"),
        svg: dir.join("heatmap.svg"),
        manifest: dir.join("manifest.json"),
    };
    write_heatmap_csv(result, BufWriter::new(File::create(&files.heatmap_csv)?))?;
    write_boundary_csv(result, BufWriter::new(File::create(&files.boundary_csv)?))?;
    write_svg(result, result.config.map_value, BufWriter::new(File::create(&files.svg)?))?;
    let names = ["heatmap.csv", "boundary.csv", "heatmap.svg"].map(String::from).to_vec();
    RunManifest::new(command, &result.config, result.elapsed_seconds, names)?.write(&files.manifest)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{CellResult, SweepConfig};

    #[test]
    fn ramp_anchors() {
        assert_eq!(fraction_color(0.0), (255, 255, 255));
        assert_eq!(fraction_color(0.1), (255, 255, 0));
        assert_eq!(fraction_color(0.2), (255, 255, 0));
        assert_eq!(fraction_color(0.6), (255, 0, 0));
        assert_eq!(fraction_color(1.0), (0, 0, 0));
        assert_eq!(fraction_color(0.85), (128, 0, 0));
        assert_eq!(fraction_color(0.05), (255, 255, 128));
    }

    fn single_cell(fp: f64) -> HeatMapResult {
        let config = SweepConfig {
            alpha: GridAxis::linear(0.1, 0.1, 1),
            gamma: GridAxis::linear(-0.5, -0.5, 1),
            ..SweepConfig::default()
        };
        HeatMapResult {
            config,
            cells: vec![CellResult {
                alpha_index: 0,
                gamma_index: 0,
                alpha: 0.1,
                gamma: -0.5,
                fixed_point: fp,
                limit_cycle: 0.0,
                non_convergent: 1.0 - fp,
                multiplicity: 0.0,
                mean_steps: None,
                failed: 0,
                error: None,
            }],
            boundary: Vec::new(),
            elapsed_seconds: 0.0,
        }
    }

    #[test]
    fn single_cell_outputs() {
        let r = single_cell(1.0);
        let mut svg = Vec::new();
        write_svg(&r, MapValue::FixedPoint, &mut svg).unwrap();
        let svg = String::from_utf8(svg).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"fill="rgb(0,0,0)""#));
        assert!(svg.trim_end().ends_with("</svg>"));
        let mut csv = Vec::new();
        write_heatmap_csv(&r, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0,0.1,-0.5,"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = single_cell(0.5);
        let files = emit_outputs(&r, "sweep", dir.path()).unwrap();
        let m = RunManifest::read(&files.manifest).unwrap();
        assert_eq!(m.command, "sweep");
        assert_eq!(m.classifier_defaults.max_steps, 500_000);
        let back: SweepConfig = serde_json::from_value(m.config).unwrap();
        assert_eq!(back, r.config);
    }

    #[test]
    fn unwritable_directory_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain-file");
        std::fs::write(&file, b"x").unwrap();
        assert!(preflight_output_dir(&file.join("sub")).is_err());
    }
}
