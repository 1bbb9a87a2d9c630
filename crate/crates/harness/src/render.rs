//! Tensor glyph renders: one ellipse per node from the eigensystem of the
//! in-plane 2×2 block, colored by geometric anisotropy.

use std::fmt::Write as _;
use std::path::Path;

use metamorph_core::field::ManifoldImage;
use metamorph_core::ManifoldKind;
use nalgebra::{Matrix2, Matrix3, SymmetricEigen};

use crate::error::{HarnessError, Result};

/// Geometry of one glyph in image units (cell size 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Glyph {
    pub cx: f64,
    pub cy: f64,
    /// Semi-axes, major first.
    pub rx: f64,
    pub ry: f64,
    /// Angle of the major axis from the `x₁` axis, in degrees, counter-clockwise.
    pub angle: f64,
    pub anisotropy: f64,
}

/// `sqrt(Σ (ln λᵢ − mean ln λ)²)` over all eigenvalues.
pub fn geometric_anisotropy(eigenvalues: &[f64]) -> f64 {
    let logs: Vec<f64> = eigenvalues.iter().map(|l| l.max(1e-300).ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>().sqrt()
}

fn planar_block(kind: ManifoldKind, v: &[f64]) -> Result<(Matrix2<f64>, Vec<f64>)> {
    match kind {
        ManifoldKind::Spd(2) => {
            let m = Matrix2::new(v[0], v[1], v[1], v[2]);
            let e = SymmetricEigen::new(m).eigenvalues;
            Ok((m, e.as_slice().to_vec()))
        }
        ManifoldKind::Spd(3) => {
            let m = Matrix3::new(v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5]);
            let e = SymmetricEigen::new(m).eigenvalues;
            Ok((Matrix2::new(v[0], v[1], v[1], v[3]), e.as_slice().to_vec()))
        }
        other => Err(HarnessError::Validation(format!("cannot render {other} images as tensors"))),
    }
}

/// Glyphs for a 2-D tensor image; the largest semi-axis spans 0.45 cells.
pub fn glyphs(image: &ManifoldImage) -> Result<Vec<Glyph>> {
    let grid = image.grid();
    if grid.dim() != 2 {
        return Err(HarnessError::Validation("render needs a 2-D grid".into()));
    }
    let rows = grid.shape()[1];
    let mut raw = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (m, all) = planar_block(image.kind(), image.value(i))?;
        let e = SymmetricEigen::new(m);
        let (major, minor) = if e.eigenvalues[0] >= e.eigenvalues[1] { (0, 1) } else { (1, 0) };
        let v = e.eigenvectors.column(major);
        let mut angle = v[1].atan2(v[0]).to_degrees();
        // axis direction is defined up to sign
        if angle <= -90.0 {
            angle += 180.0;
        } else if angle > 90.0 {
            angle -= 180.0;
        }
        let mi = grid.multi_index(i);
        raw.push(Glyph {
            cx: mi[0] as f64 + 0.5,
            cy: (rows - 1 - mi[1]) as f64 + 0.5,
            rx: e.eigenvalues[major].max(0.0).sqrt(),
            ry: e.eigenvalues[minor].max(0.0).sqrt(),
            angle,
            anisotropy: geometric_anisotropy(&all),
        });
    }
    let top = raw.iter().map(|g| g.rx).fold(0.0, f64::max);
    let scale = if top > 0.0 { 0.45 / top } else { 0.0 };
    for g in &mut raw {
        g.rx *= scale;
        g.ry *= scale;
    }
    Ok(raw)
}

/// Hue in degrees: 240 (blue) for isotropic tensors down to 0 (red).
pub fn hue(anisotropy: f64) -> f64 {
    240.0 * (1.0 - anisotropy / (1.0 + anisotropy))
}

fn hsv_to_rgb(h: f64) -> [u8; 3] {
    let c = 0.85;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = 0.1;
    [r, g, b].map(|v| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// SVG text; identical inputs give identical bytes.
pub fn render_svg(image: &ManifoldImage, cell: f64) -> Result<String> {
    let gl = glyphs(image)?;
    let shape = image.grid().shape();
    let (w, h) = (shape[0] as f64 * cell, shape[1] as f64 * cell);
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.3} {h:.3}\">"
    )
    .expect("string write");
    writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>").expect("string write");
    for g in &gl {
        let [r, gr, b] = hsv_to_rgb(hue(g.anisotropy));
        let (cx, cy) = (g.cx * cell, g.cy * cell);
        // SVG y points down, so counter-clockwise angles turn negative
        writeln!(
            s,
            "<ellipse cx=\"{cx:.3}\" cy=\"{cy:.3}\" rx=\"{:.3}\" ry=\"{:.3}\" transform=\"rotate({:.3} {cx:.3} {cy:.3})\" fill=\"#{r:02x}{gr:02x}{b:02x}\"/>",
            g.rx * cell,
            g.ry * cell,
            -g.angle + 0.0,
        )
        .expect("string write");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Rasterized glyphs, `cell` pixels per node.
pub fn render_png(image: &ManifoldImage, cell: u32) -> Result<image::RgbImage> {
    let gl = glyphs(image)?;
    let shape = image.grid().shape();
    let mut img = image::RgbImage::from_pixel(shape[0] as u32 * cell, shape[1] as u32 * cell, image::Rgb([255, 255, 255]));
    let c = cell as f64;
    for g in &gl {
        let color = image::Rgb(hsv_to_rgb(hue(g.anisotropy)));
        let (sn, cs) = g.angle.to_radians().sin_cos();
        let (x0, y0) = ((g.cx - 0.5) * c, (g.cy - 0.5) * c);
        for py in 0..cell {
            for px in 0..cell {
                let dx = (x0 + px as f64 + 0.5) / c - g.cx;
                let dy = -((y0 + py as f64 + 0.5) / c - g.cy);
                let u = dx * cs + dy * sn;
                let v = -dx * sn + dy * cs;
                let inside = g.rx > 0.0 && g.ry > 0.0 && (u / g.rx).powi(2) + (v / g.ry).powi(2) <= 1.0;
                if inside {
                    img.put_pixel(x0 as u32 + px, y0 as u32 + py, color);
                }
            }
        }
    }
    Ok(img)
}

/// Writes SVG or PNG depending on the extension of `out`.
pub fn render_to(image: &ManifoldImage, out: &Path) -> Result<()> {
    let ext = out.extension().and_then(|e| e.to_str()).unwrap_or("svg");
    match ext {
        "svg" => std::fs::write(out, render_svg(image, 24.0)?)
            .map_err(|e| HarnessError::io(out.display().to_string(), e)),
        "png" => render_png(image, 24)?
            .save(out)
            .map_err(|e| HarnessError::Format(format!("png: {e}"))),
        other => Err(HarnessError::Validation(format!("unknown render format '{other}'"))),
    }
}
