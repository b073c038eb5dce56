//! PNG (8/16-bit) and portable float map reading and writing.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use induction_core::colorimetry::{ColorEncoding, TriImage};
use induction_core::plane::{Mask, Plane};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Png8,
    Png16,
    Pfm,
}

impl Format {
    /// Format implied by a file extension, with `png_depth` for PNG files.
    pub fn from_path(path: &Path, png_depth: Format) -> CliResult<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => Ok(png_depth),
            Some("pfm") => Ok(Format::Pfm),
            _ => Err(CliError::io(format!(
                "{}: unsupported extension (expected .png or .pfm)",
                path.display()
            ))),
        }
    }

    fn is_png(self) -> bool {
        matches!(self, Format::Png8 | Format::Png16)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::io(format!("{}: {e}", path.display()))
}

/// Reads a display image; values are scaled to `[0, 1]` for PNG and taken
/// as stored for PFM. Alpha channels are dropped.
pub fn read_image(path: &Path) -> CliResult<(TriImage, Format)> {
    if Format::from_path(path, Format::Png8)? == Format::Pfm {
        return read_pfm(path).map(|img| (img, Format::Pfm));
    }
    let img = image::open(path).map_err(|e| io_err(path, e))?;
    let sixteen = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, format) = if sixteen {
        let buf = img.to_rgb16();
        (split(w, h, buf.as_raw().iter().map(|&v| v as f64 / 65535.0)), Format::Png16)
    } else {
        let buf = img.to_rgb8();
        (split(w, h, buf.as_raw().iter().map(|&v| v as f64 / 255.0)), Format::Png8)
    };
    let image = TriImage::new(channels, ColorEncoding::DisplayRGB).map_err(|e| io_err(path, e))?;
    Ok((image, format))
}

fn split(w: usize, h: usize, interleaved: impl Iterator<Item = f64>) -> [Plane; 3] {
    let mut data: [Vec<f64>; 3] = Default::default();
    for (i, v) in interleaved.enumerate() {
        data[i % 3].push(v);
    }
    data.map(|d| Plane::new(w, h, d).expect("decoder output matches its dimensions"))
}

fn interleave(image: &TriImage) -> impl Iterator<Item = f64> + '_ {
    let ch = image.channels();
    (0..image.width() * image.height()).flat_map(move |i| (0..3).map(move |c| ch[c].as_slice()[i]))
}

/// Rejects an output path whose extension disagrees with `format`.
pub fn check_output_path(path: &Path, format: Format) -> CliResult<()> {
    if Format::from_path(path, Format::Png8)?.is_png() != format.is_png() {
        return Err(CliError::io(format!(
            "{}: extension does not match the {format:?} output format (pass --format to convert)",
            path.display()
        )));
    }
    Ok(())
}

fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| io_err(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_image(path: &Path, image: &TriImage, format: Format) -> CliResult<()> {
    check_output_path(path, format)?;
    create_parent(path)?;
    let (w, h) = (image.width() as u32, image.height() as u32);
    match format {
        Format::Png8 => {
            let raw: Vec<u8> = interleave(image).map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw)
                .expect("buffer sized from the image")
                .save(path)
                .map_err(|e| io_err(path, e))
        }
        Format::Png16 => {
            let raw: Vec<u16> = interleave(image).map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw)
                .expect("buffer sized from the image")
                .save(path)
                .map_err(|e| io_err(path, e))
        }
        Format::Pfm => write_pfm(path, image.width(), image.height(), 3, interleave(image)),
    }
}

/// Writes a single float plane as a grayscale PFM.
pub fn write_plane_pfm(path: &Path, plane: &Plane) -> CliResult<()> {
    create_parent(path)?;
    write_pfm(path, plane.width(), plane.height(), 1, plane.as_slice().iter().copied())
}

/// Writes a mask as an 8-bit grayscale PNG (255 inside).
pub fn write_mask(path: &Path, mask: &Mask) -> CliResult<()> {
    create_parent(path)?;
    let raw: Vec<u8> = mask.as_slice().iter().map(|&m| if m { 255 } else { 0 }).collect();
    ImageBuffer::<Luma<u8>, _>::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .expect("buffer sized from the mask")
        .save(path)
        .map_err(|e| io_err(path, e))
}

// PFM stores rows bottom to top; a negative scale marks little-endian data.
fn write_pfm(path: &Path, w: usize, h: usize, channels: usize, values: impl Iterator<Item = f64>) -> CliResult<()> {
    let values: Vec<f32> = values.map(|v| v as f32).collect();
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    let row = w * channels;
    for y in (0..h).rev() {
        for v in &values[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn header_token(reader: &mut impl BufRead, path: &Path) -> CliResult<String> {
    let mut token = Vec::new();
    loop {
        let mut byte = [0u8];
        if reader.read(&mut byte).map_err(|e| io_err(path, e))? == 0 {
            return Err(io_err(path, "truncated PFM header"));
        }
        if byte[0].is_ascii_whitespace() {
            if !token.is_empty() {
                return String::from_utf8(token).map_err(|e| io_err(path, e));
            }
        } else {
            token.push(byte[0]);
        }
    }
}

fn read_pfm(path: &Path) -> CliResult<TriImage> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = BufReader::new(file);
    let channels = match header_token(&mut reader, path)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(io_err(path, format!("not a PFM file (magic {other:?})"))),
    };
    let parse = |t: String| t.parse::<usize>().map_err(|e| io_err(path, format!("bad PFM size {t:?}: {e}")));
    let w = parse(header_token(&mut reader, path)?)?;
    let h = parse(header_token(&mut reader, path)?)?;
    let scale: f64 = header_token(&mut reader, path)?
        .parse()
        .map_err(|e| io_err(path, format!("bad PFM scale: {e}")))?;
    if w == 0 || h == 0 || scale == 0.0 {
        return Err(io_err(path, "PFM with zero size or scale"));
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
    let expected = w * h * channels * 4;
    if bytes.len() != expected {
        return Err(io_err(path, format!("expected {expected} bytes of PFM data, found {}", bytes.len())));
    }
    let little = scale < 0.0;
    let floats: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
        })
        .collect();
    let row = w * channels;
    let mut data: [Vec<f64>; 3] = Default::default();
    for y in (0..h).rev() {
        for px in floats[y * row..(y + 1) * row].chunks_exact(channels) {
            for (c, d) in data.iter_mut().enumerate() {
                d.push(px[c.min(channels - 1)]);
            }
        }
    }
    let planes = data.map(|d| Plane::new(w, h, d).expect("sized from the header"));
    TriImage::new(planes, ColorEncoding::DisplayRGB).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample(w: usize, h: usize) -> TriImage {
        TriImage::from_pixel_fn(w, h, ColorEncoding::DisplayRGB, |x, y| {
            [x as f64 / w as f64, y as f64 / h as f64, ((x * 7 + y * 3) % 11) as f64 / 10.0]
        })
    }

    fn quantized(w: usize, h: usize, levels: f64) -> impl Strategy<Value = TriImage> {
        prop::collection::vec(0..=levels as u32, w * h * 3).prop_map(move |v| {
            TriImage::from_pixel_fn(w, h, ColorEncoding::DisplayRGB, |x, y| {
                let i = 3 * (y * w + x);
                [v[i], v[i + 1], v[i + 2]].map(|q| q as f64 / levels)
            })
        })
    }

    fn any_size(levels: f64) -> impl Strategy<Value = TriImage> {
        (1usize..20, 1usize..20).prop_flat_map(move |(w, h)| quantized(w, h, levels))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn every_format_round_trips(png16 in any_size(65535.0), png8 in any_size(255.0), pfm in any_size(1e6)) {
            let dir = tempfile::tempdir().unwrap();
            for (img, format, name) in [(png16, Format::Png16, "a.png"), (png8, Format::Png8, "b.png")] {
                let path = dir.path().join(name);
                write_image(&path, &img, format).unwrap();
                let (back, read_as) = read_image(&path).unwrap();
                prop_assert_eq!(read_as, format);
                prop_assert_eq!(back, img);
            }
            let path = dir.path().join("c.pfm");
            write_image(&path, &pfm, Format::Pfm).unwrap();
            let (back, read_as) = read_image(&path).unwrap();
            prop_assert_eq!(read_as, Format::Pfm);
            prop_assert!(back.max_abs_diff(&pfm) <= 6e-8);
        }
    }

    #[test]
    fn mismatched_extension_is_rejected_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample(4, 4);
        let png = dir.path().join("a.png");
        assert!(write_image(&png, &img, Format::Pfm).is_err());
        assert!(write_image(&dir.path().join("a.pfm"), &img, Format::Png16).is_err());
        assert!(!png.exists());
        let nested = dir.path().join("x/y/z.pfm");
        write_image(&nested, &img, Format::Pfm).unwrap();
        assert!(nested.exists());
    }

    #[test]
    fn png16_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = sample(13, 7).map_pixels(ColorEncoding::DisplayRGB, |p| p.map(|v| (v * 65535.0).round() / 65535.0));
        write_image(&path, &img, Format::Png16).unwrap();
        let (back, format) = read_image(&path).unwrap();
        assert_eq!(format, Format::Png16);
        assert_eq!(back, img);
    }

    #[test]
    fn png8_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = sample(9, 4).map_pixels(ColorEncoding::DisplayRGB, |p| p.map(|v| (v * 255.0).round() / 255.0));
        write_image(&path, &img, Format::Png8).unwrap();
        let (back, format) = read_image(&path).unwrap();
        assert_eq!(format, Format::Png8);
        assert_eq!(back, img);
    }

    #[test]
    fn pfm_round_trip_within_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pfm");
        let img = sample(5, 8);
        write_image(&path, &img, Format::Pfm).unwrap();
        let (back, format) = read_image(&path).unwrap();
        assert_eq!(format, Format::Pfm);
        assert!(back.max_abs_diff(&img) < 1e-7);
        // Bottom-up storage: the first stored row is the last image row.
        let bytes = fs::read(&path).unwrap();
        let header = b"PF\n5 8\n-1.0\n".len();
        let first = f32::from_le_bytes(bytes[header..header + 4].try_into().unwrap());
        assert!((first as f64 - img.pixel(0, 7)[0]).abs() < 1e-7);
    }

    #[test]
    fn grayscale_pfm_fills_all_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.pfm");
        let plane = Plane::from_fn(4, 3, |x, y| (x + 10 * y) as f64);
        write_plane_pfm(&path, &plane).unwrap();
        let (back, _) = read_image(&path).unwrap();
        for c in 0..3 {
            assert_eq!(back.channel(c), &plane);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("j.pfm");
        fs::write(&junk, b"P6\n1 1\n255\n\0\0\0").unwrap();
        assert!(read_image(&junk).is_err());
        let short = dir.path().join("s.pfm");
        fs::write(&short, b"PF\n2 2\n-1.0\n\0\0\0\0").unwrap();
        assert!(read_image(&short).is_err());
        assert!(read_image(&dir.path().join("missing.png")).is_err());
        assert!(Format::from_path(Path::new("x.tif"), Format::Png8).is_err());
        let img = sample(2, 2);
        assert!(write_image(&dir.path().join("o.pfm"), &img, Format::Png16).is_err());
    }
}
