//! Draw a trial's paths over its field.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use qipp_core::field::{load_field, Field, Point, RasterFormat};
use qipp_core::team::{Partition, TrialResult};

use crate::error::{HarnessError, Result};

const PALETTE: [&str; 8] = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#ffff33", "#a65628", "#f781bf",
];

/// Target size of the longer side, in pixels.
const CANVAS: f64 = 500.0;

pub fn load_trial(path: impl AsRef<Path>) -> Result<TrialResult> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// SVG with the field as a grayscale background, one colored polyline per
/// robot with a cross at every visited cell, black start markers, and white
/// partition boundaries when the trial was partitioned.
pub fn paths_svg(trial: &TrialResult, field: &Field) -> Result<String> {
    let grid = field.grid();
    if *grid != trial.grid {
        return Err(HarnessError::Validation(
            "field grid does not match the trial grid".into(),
        ));
    }
    let scale = CANVAS / grid.width_m().max(grid.height_m());
    let (w, h) = (grid.width_m() * scale, grid.height_m() * scale);
    let px = |p: Point| (p.x * scale, p.y * scale);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(s, r#"<g class="field">"#);
    let (nx, ny) = grid.lattice_dims();
    let (pw, ph) = (grid.pixel_width_m() * scale, grid.pixel_height_m() * scale);
    for j in 0..ny {
        for i in 0..nx {
            let g = (field.at_node(i, j).clamp(0.0, 1.0) * 255.0).round() as u8;
            let _ = writeln!(
                s,
                r##"<rect x="{:.3}" y="{:.3}" width="{pw:.3}" height="{ph:.3}" fill="#{g:02x}{g:02x}{g:02x}"/>"##,
                i as f64 * pw,
                j as f64 * ph,
            );
        }
    }
    let _ = writeln!(s, "</g>");

    if let Some(owners) = &trial.partition {
        let partition = Partition {
            seeds: trial.starts.clone(),
            owners: owners.clone(),
        };
        let mut d = String::new();
        for (a, b) in partition.boundary_segments(grid) {
            let ((x1, y1), (x2, y2)) = (px(a), px(b));
            let _ = write!(d, "M{x1:.3} {y1:.3}L{x2:.3} {y2:.3}");
        }
        if !d.is_empty() {
            let _ = writeln!(
                s,
                r##"<path class="partition" d="{d}" fill="none" stroke="#ffffff" stroke-width="2"/>"##
            );
        }
    }

    let arm = 0.2 * grid.cell_width_m().min(grid.cell_height_m()) * scale;
    for (id, path) in trial.paths.iter().enumerate() {
        let color = PALETTE[id % PALETTE.len()];
        let centers: Vec<(f64, f64)> = path.iter().map(|&c| px(grid.cell_center(c))).collect();
        let _ = writeln!(s, r#"<g class="robot" id="robot-{id}">"#);
        if centers.len() > 1 {
            let pts: Vec<String> = centers.iter().map(|(x, y)| format!("{x:.3},{y:.3}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
        }
        for (x, y) in &centers {
            let _ = writeln!(
                s,
                r#"<path class="visit" d="M{:.3} {:.3}L{:.3} {:.3}M{:.3} {:.3}L{:.3} {:.3}" stroke="{color}" stroke-width="1.5"/>"#,
                x - arm,
                y - arm,
                x + arm,
                y + arm,
                x - arm,
                y + arm,
                x + arm,
                y - arm,
            );
        }
        if let Some((x, y)) = centers.first() {
            let _ = writeln!(
                s,
                r#"<circle class="start" cx="{x:.3}" cy="{y:.3}" r="{:.3}" fill="black"/>"#,
                arm * 1.2
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Read a trial JSON and a field CSV and write the SVG to `out`.
pub fn render(trial: impl AsRef<Path>, field: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<()> {
    let trial = load_trial(trial)?;
    let field_path = field.as_ref();
    let format = RasterFormat::from_path(field_path).unwrap_or(RasterFormat::Csv);
    let field = load_field(field_path, format, trial.grid)?;
    let svg = paths_svg(&trial, &field)?;
    let out = out.as_ref();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(out, svg).map_err(|e| HarnessError::io(out, e))
}
