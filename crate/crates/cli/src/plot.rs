//! Fixed-size scatter rasterizer for 2-D samples.
//!
//! Real points are drawn in blue (31, 119, 180), generated points on top in
//! orange (255, 127, 14), on a white background with a grey frame and grey
//! lines through the origin when it is in view. The axis range is the
//! padded, square bounding box of all points. Output depends only on the
//! inputs.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use orthowgan::linalg::Matrix;

use crate::error::CliError;

pub const SIZE: u32 = 800;
pub const REAL_COLOR: [u8; 3] = [31, 119, 180];
pub const GENERATED_COLOR: [u8; 3] = [255, 127, 14];
const AXIS_COLOR: [u8; 3] = [200, 200, 200];
const FRAME_COLOR: [u8; 3] = [120, 120, 120];

/// Square data window `(x_min, y_min, span)`.
fn window(sets: &[&Matrix]) -> (f64, f64, f64) {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for m in sets {
        for r in 0..m.rows() {
            for d in 0..2 {
                lo[d] = lo[d].min(m[(r, d)]);
                hi[d] = hi[d].max(m[(r, d)]);
            }
        }
    }
    if !lo[0].is_finite() {
        return (-1.0, -1.0, 2.0);
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9) * 1.1;
    let cx = 0.5 * (lo[0] + hi[0]);
    let cy = 0.5 * (lo[1] + hi[1]);
    (cx - 0.5 * span, cy - 0.5 * span, span)
}

fn check_2d(m: &Matrix, what: &str) -> Result<(), CliError> {
    if m.cols() != 2 {
        return Err(CliError::Plot(format!("{what} samples are {}-D; only 2-D data can be plotted", m.cols())));
    }
    if !m.is_finite() {
        return Err(CliError::Plot(format!("{what} samples contain non-finite values")));
    }
    Ok(())
}

/// Renders the scatter plot into an image.
pub fn render(real: Option<&Matrix>, generated: Option<&Matrix>) -> Result<RgbImage, CliError> {
    if let Some(m) = real {
        check_2d(m, "real")?;
    }
    if let Some(m) = generated {
        check_2d(m, "generated")?;
    }
    let sets: Vec<&Matrix> = real.into_iter().chain(generated).collect();
    let (x0, y0, span) = window(&sets);
    let px = |v: f64, origin: f64| ((v - origin) / span * (SIZE - 1) as f64).round() as i64;

    let mut img = RgbImage::from_pixel(SIZE, SIZE, Rgb([255, 255, 255]));
    let last = SIZE as i64 - 1;
    let ox = px(0.0, x0);
    let oy = last - px(0.0, y0);
    for i in 0..SIZE {
        if (0..=last).contains(&ox) {
            img.put_pixel(ox as u32, i, Rgb(AXIS_COLOR));
        }
        if (0..=last).contains(&oy) {
            img.put_pixel(i, oy as u32, Rgb(AXIS_COLOR));
        }
        for edge in [0, SIZE - 1] {
            img.put_pixel(edge, i, Rgb(FRAME_COLOR));
            img.put_pixel(i, edge, Rgb(FRAME_COLOR));
        }
    }
    let mut dots = |m: &Matrix, color: [u8; 3]| {
        for r in 0..m.rows() {
            let (cx, cy) = (px(m[(r, 0)], x0), last - px(m[(r, 1)], y0));
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (x, y) = (cx + dx, cy + dy);
                    if (1..last).contains(&x) && (1..last).contains(&y) {
                        img.put_pixel(x as u32, y as u32, Rgb(color));
                    }
                }
            }
        }
    };
    if let Some(m) = real {
        dots(m, REAL_COLOR);
    }
    if let Some(m) = generated {
        dots(m, GENERATED_COLOR);
    }
    Ok(img)
}

pub fn write_png(path: &Path, real: Option<&Matrix>, generated: Option<&Matrix>) -> Result<(), CliError> {
    let img = render(real, generated)?;
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| CliError::format(path, e))
}
