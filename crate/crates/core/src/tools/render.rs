//! Rasterizes vector layers into a PNG map, bottom layer first.

use std::io::Cursor;

use image::{ImageFormat, Rgba, RgbaImage};

use super::layer::{Geometry, Layer};

pub const COLOR_RAMPS: [&str; 5] = ["OrRd", "Blues", "Greens", "Greys", "Viridis"];

fn ramp_stops(name: &str) -> [[u8; 3]; 3] {
    match name {
        "Blues" => [[222, 235, 247], [158, 202, 225], [49, 130, 189]],
        "Greens" => [[229, 245, 224], [161, 217, 155], [49, 163, 84]],
        "Greys" => [[240, 240, 240], [189, 189, 189], [99, 99, 99]],
        "Viridis" => [[68, 1, 84], [33, 145, 140], [253, 231, 37]],
        _ => [[254, 232, 200], [253, 187, 132], [227, 74, 51]],
    }
}

fn ramp_color(name: &str, t: f64) -> [u8; 3] {
    let stops = ramp_stops(name);
    let t = t.clamp(0.0, 1.0) * 2.0;
    let (a, b, f) = if t <= 1.0 { (stops[0], stops[1], t) } else { (stops[1], stops[2], t - 1.0) };
    let mix = |i: usize| (a[i] as f64 + (b[i] as f64 - a[i] as f64) * f).round() as u8;
    [mix(0), mix(1), mix(2)]
}

pub struct MapStyle<'a> {
    pub color_ramp: &'a str,
    pub alpha: f64,
    pub width: u32,
    pub height: u32,
}

/// Renders layers onto a white canvas. Extents are the union of all layer
/// bounds plus a 5% margin.
pub fn render_layers(layers: &[Layer], style: &MapStyle<'_>) -> RgbaImage {
    let (w, h) = (style.width.max(1), style.height.max(1));
    let mut img = RgbaImage::from_pixel(w, h, Rgba([255, 255, 255, 255]));
    let bounds = layers.iter().filter_map(Layer::bounds).fold(None, |acc: Option<[f64; 4]>, b| {
        Some(match acc {
            None => b,
            Some(a) => [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])],
        })
    });
    let Some([x0, y0, x1, y1]) = bounds else {
        return img;
    };
    let span_x = (x1 - x0).max(1e-9);
    let span_y = (y1 - y0).max(1e-9);
    let (x0, y0) = (x0 - span_x * 0.05, y0 - span_y * 0.05);
    let (span_x, span_y) = (span_x * 1.1, span_y * 1.1);
    let to_px = |p: [f64; 2]| -> (f64, f64) {
        ((p[0] - x0) / span_x * w as f64, (1.0 - (p[1] - y0) / span_y) * h as f64)
    };
    let to_world = |px: f64, py: f64| -> [f64; 2] { [x0 + px / w as f64 * span_x, y0 + (1.0 - py / h as f64) * span_y] };

    let alpha = style.alpha.clamp(0.0, 1.0);
    let n = layers.len();
    for (i, layer) in layers.iter().enumerate() {
        let color = ramp_color(style.color_ramp, (i + 1) as f64 / n as f64);
        for feature in &layer.features {
            match &feature.geometry {
                Geometry::Polygon(_) => {
                    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
                    for v in feature.geometry.vertices() {
                        let (px, py) = to_px(v);
                        lo_x = lo_x.min(px);
                        hi_x = hi_x.max(px);
                        lo_y = lo_y.min(py);
                        hi_y = hi_y.max(py);
                    }
                    let cx0 = lo_x.floor().max(0.0) as u32;
                    let cy0 = lo_y.floor().max(0.0) as u32;
                    let cx1 = (hi_x.ceil().max(0.0) as u32).min(w);
                    let cy1 = (hi_y.ceil().max(0.0) as u32).min(h);
                    for py in cy0..cy1 {
                        for px in cx0..cx1 {
                            if feature.geometry.contains(to_world(px as f64 + 0.5, py as f64 + 0.5)) {
                                blend(&mut img, px, py, color, alpha);
                            }
                        }
                    }
                }
                Geometry::Point(p) => {
                    let (px, py) = to_px(*p);
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            let (x, y) = (px.floor() as i64 + dx, py.floor() as i64 + dy);
                            if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
                                blend(&mut img, x as u32, y as u32, color, alpha);
                            }
                        }
                    }
                }
            }
        }
    }
    img
}

fn blend(img: &mut RgbaImage, x: u32, y: u32, color: [u8; 3], alpha: f64) {
    let px = img.get_pixel_mut(x, y);
    for c in 0..3 {
        let under = px[c] as f64;
        px[c] = (alpha * color[c] as f64 + (1.0 - alpha) * under).round() as u8;
    }
}

pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}
