// SPDX-License-Identifier: Apache-2.0

//! Heatmap rendering of rhythm spectrograms to PNG.

use std::io::Write;

use rfa_core::RhythmSpectrogram;

pub const PX_PER_SLICE: usize = 4;
pub const PX_PER_BIN: usize = 2;

/// Polynomial fit of the viridis colormap, lowest order first.
const VIRIDIS: [[f64; 3]; 7] = [
    [0.277_727_327_223_417_7, 0.005_407_344_544_966_578, 0.334_099_805_335_306_1],
    [0.105_093_043_108_577_4, 1.404_613_529_898_575, 1.384_590_162_594_685],
    [-0.330_861_828_725_556_3, 0.214_847_559_468_213, 0.095_095_163_028_236_59],
    [-4.634_230_498_983_486, -5.799_100_973_351_585, -19.332_440_956_279_87],
    [6.228_269_936_347_081, 14.179_933_366_805_09, 56.690_552_600_681_05],
    [4.776_384_997_670_288, -13.745_145_377_746_01, -65.353_032_633_372_34],
    [-5.435_455_855_934_631, 4.645_852_612_178_535, 26.312_435_249_583_2],
];

pub fn colormap(v: f64) -> [u8; 3] {
    let t = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let mut rgb = [0u8; 3];
    for (ch, out) in rgb.iter_mut().enumerate() {
        let c = VIRIDIS.iter().rev().fold(0.0, |acc, k| acc * t + k[ch]);
        *out = (c.clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    rgb
}

/// RGB raster: time on x, frequency on y with the lowest bin at the bottom.
pub fn raster(spec: &RhythmSpectrogram) -> (u32, u32, Vec<u8>) {
    let mags = spec.magnitudes();
    let n_bins = spec.n_bins();
    let width = mags.len() * PX_PER_SLICE;
    let height = n_bins * PX_PER_BIN;
    let mut buf = vec![0u8; width * height * 3];
    for y in 0..height {
        let bin = n_bins - 1 - y / PX_PER_BIN;
        for x in 0..width {
            let rgb = colormap(mags[x / PX_PER_SLICE][bin]);
            let o = (y * width + x) * 3;
            buf[o..o + 3].copy_from_slice(&rgb);
        }
    }
    (width as u32, height as u32, buf)
}

/// Encodes the heatmap with `text` entries stored as PNG tEXt chunks.
pub fn write_png<W: Write>(spec: &RhythmSpectrogram, text: &[(&str, String)], out: W) -> Result<(), png::EncodingError> {
    let (w, h, buf) = raster(spec);
    let mut enc = png::Encoder::new(out, w, h);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_compression(png::Compression::Balanced);
    for (k, v) in text {
        enc.add_text_chunk(k.to_string(), v.clone())?;
    }
    let mut writer = enc.write_header()?;
    writer.write_image_data(&buf)?;
    writer.finish()
}
