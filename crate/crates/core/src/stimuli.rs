//! Synthetic bar and ring patterns sized in visual degrees.

use serde::{Deserialize, Serialize};

use crate::colorimetry::{lab_to_display_pixel, ColorEncoding, ScreenSpec, TriImage};
use crate::error::{Error, Result};
use crate::plane::{Mask, Plane};

/// Linear degree-to-pixel mapping for an image `image_height` pixels tall.
pub fn degrees_to_pixels(angle: f64, screen: &ScreenSpec, image_height: usize) -> Result<f64> {
    screen.validate()?;
    if !(angle >= 0.0) || angle > screen.vertical_angle_deg {
        return Err(Error::Parameter(format!(
            "angle {angle} deg outside the {} deg vertical field",
            screen.vertical_angle_deg
        )));
    }
    Ok(angle / screen.vertical_angle_deg * image_height as f64 * screen.scale_factor)
}

pub fn pixels_per_degree(screen: &ScreenSpec, image_height: usize) -> Result<f64> {
    degrees_to_pixels(1.0f64.min(screen.vertical_angle_deg), screen, image_height)
        .map(|px| px / 1.0f64.min(screen.vertical_angle_deg))
}

/// Comparison widths (degrees) of the achromatic factor grid.
pub const GRID_WIDTHS_DEG: [f64; 5] = [0.19, 0.38, 0.54, 0.76, 0.96];
/// Initial comparison luminances (cd/m^2) of the achromatic factor grid.
pub const GRID_INITIAL_LUMINANCE: [f64; 3] = [4.0, 8.1, 22.0];
pub const INDUCING_WIDTH_DEG: f64 = 0.19;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarPatternSpec {
    pub inducing_bar_width_deg: f64,
    pub comparison_bar_width_deg: f64,
    pub gray_luminance: f64,
    pub white_luminance: f64,
    pub black_luminance: f64,
    pub background_luminance: f64,
    pub pattern_size_px: usize,
    pub pixels_per_degree: f64,
    /// Horizontal extent of each grating.
    pub grating_width_deg: f64,
    pub bar_length_deg: f64,
    /// Display gamma used to encode luminances.
    pub gamma: f64,
}

impl BarPatternSpec {
    /// Defaults on an `size x size` canvas of `screen`.
    pub fn for_screen(screen: &ScreenSpec, size: usize, comparison_bar_width_deg: f64) -> Result<Self> {
        Ok(Self {
            inducing_bar_width_deg: INDUCING_WIDTH_DEG,
            comparison_bar_width_deg,
            gray_luminance: 8.1,
            white_luminance: 90.0,
            black_luminance: 0.6,
            background_luminance: 0.6,
            pattern_size_px: size,
            pixels_per_degree: pixels_per_degree(screen, size)?,
            grating_width_deg: 7.0,
            bar_length_deg: 5.0,
            gamma: screen.gamma,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inducing_bar_width_deg > 0.0) || !(self.comparison_bar_width_deg > 0.0) {
            return Err(Error::Parameter(format!(
                "bar widths must be > 0, got inducing {} and comparison {}",
                self.inducing_bar_width_deg, self.comparison_bar_width_deg
            )));
        }
        let lums = [
            self.gray_luminance,
            self.white_luminance,
            self.black_luminance,
            self.background_luminance,
        ];
        if lums.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Parameter("luminances must be >= 0".into()));
        }
        if !(self.white_luminance > self.gray_luminance && self.gray_luminance > self.black_luminance) {
            return Err(Error::Parameter(format!(
                "need white > gray > black, got {} / {} / {}",
                self.white_luminance, self.gray_luminance, self.black_luminance
            )));
        }
        if self.background_luminance > self.white_luminance {
            return Err(Error::Parameter("background brighter than white".into()));
        }
        if self.pattern_size_px == 0 || !(self.pixels_per_degree > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::Parameter("pattern size, pixels per degree and gamma must be > 0".into()));
        }
        if !(self.grating_width_deg > 0.0) || !(self.bar_length_deg > 0.0) {
            return Err(Error::Parameter("grating extent must be > 0".into()));
        }
        Ok(())
    }

    /// Display value of a luminance, white bars at full drive.
    pub fn encode_luminance(&self, luminance: f64) -> f64 {
        (luminance / self.white_luminance).powf(1.0 / self.gamma)
    }

    pub fn decode_luminance(&self, value: f64) -> f64 {
        value.max(0.0).powf(self.gamma) * self.white_luminance
    }

    /// The same physical pattern rendered at `factor` times the resolution.
    pub fn scaled(&self, factor: usize) -> Self {
        Self {
            pattern_size_px: self.pattern_size_px * factor,
            pixels_per_degree: self.pixels_per_degree * factor as f64,
            ..self.clone()
        }
    }
}

/// All comparison widths crossed with all initial gray levels (15 patterns).
pub fn factor_grid(base: &BarPatternSpec) -> Vec<BarPatternSpec> {
    let mut out = Vec::with_capacity(15);
    for &w in &GRID_WIDTHS_DEG {
        for &l in &GRID_INITIAL_LUMINANCE {
            out.push(BarPatternSpec {
                comparison_bar_width_deg: w,
                gray_luminance: l,
                ..base.clone()
            });
        }
    }
    out
}

/// Pixel-space interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    fn overlap(&self, a: f64, b: f64) -> f64 {
        (self.end.min(b) - self.start.max(a)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarGeometry {
    pub inducing_px: f64,
    pub comparison_px: f64,
    pub rows: Span,
    /// Gray bars of the grating on white inducers (left half).
    pub gray_over_white: Vec<Span>,
    /// Gray bars of the grating on black inducers (right half).
    pub gray_over_black: Vec<Span>,
    pub gratings: [Span; 2],
}

#[derive(Debug, Clone)]
pub struct BarStimulus {
    pub image: TriImage,
    /// Fully covered pixels of the central gray bar among white inducers.
    pub over_white: Mask,
    pub over_black: Mask,
    pub geometry: BarGeometry,
}

fn grating_layout(center: f64, budget: f64, wi: f64, wc: f64) -> Option<(Span, Vec<Span>)> {
    let k = ((budget - wi) / (wi + wc)).floor();
    if !(k >= 1.0) {
        return None;
    }
    let k = k as usize;
    let total = (k as f64 + 1.0) * wi + k as f64 * wc;
    let start = center - total / 2.0;
    let grays = (0..k)
        .map(|i| {
            let s = start + wi + i as f64 * (wi + wc);
            Span { start: s, end: s + wc }
        })
        .collect();
    Some((
        Span {
            start,
            end: start + total,
        },
        grays,
    ))
}

fn full_mask(width: usize, height: usize, cols: Span, rows: Span) -> Mask {
    Mask::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        x >= cols.start && x + 1.0 <= cols.end && y >= rows.start && y + 1.0 <= rows.end
    })
}

/// Two gratings side by side: gray bars between white inducers on the left,
/// between black inducers on the right, over a uniform background.
pub fn generate_bars(spec: &BarPatternSpec) -> Result<BarStimulus> {
    spec.validate()?;
    let n = spec.pattern_size_px;
    let ppd = spec.pixels_per_degree;
    let wi = spec.inducing_bar_width_deg * ppd;
    let wc = spec.comparison_bar_width_deg * ppd;
    if wi.round() < 1.0 || wc.round() < 1.0 {
        return Err(Error::Parameter(format!(
            "bar widths round to zero pixels ({wi:.3} px inducing, {wc:.3} px comparison)"
        )));
    }
    let half = n as f64 / 2.0;
    let budget = (spec.grating_width_deg * ppd).min(0.9 * half);
    let length = (spec.bar_length_deg * ppd).min(0.9 * n as f64);
    let rows = Span {
        start: half - length / 2.0,
        end: half + length / 2.0,
    };
    let overflow = || Error::Parameter("grating does not fit a single comparison bar".into());
    let (left, gray_w) = grating_layout(half / 2.0, budget, wi, wc).ok_or_else(overflow)?;
    let (right, gray_b) = grating_layout(1.5 * half, budget, wi, wc).ok_or_else(overflow)?;

    let v_gray = spec.encode_luminance(spec.gray_luminance);
    let v_white = spec.encode_luminance(spec.white_luminance);
    let v_black = spec.encode_luminance(spec.black_luminance);
    let v_bg = spec.encode_luminance(spec.background_luminance);

    // Column profile: fraction of each pixel column that is inducer or gray,
    // integrated exactly over the pixel footprint.
    let column = |x: usize| -> (f64, f64, f64) {
        let (a, b) = (x as f64, x as f64 + 1.0);
        let gw: f64 = gray_w.iter().map(|s| s.overlap(a, b)).sum();
        let gb: f64 = gray_b.iter().map(|s| s.overlap(a, b)).sum();
        let white = left.overlap(a, b) - gw;
        let black = right.overlap(a, b) - gb;
        (gw + gb, white, black)
    };
    let columns: Vec<(f64, f64, f64)> = (0..n).map(column).collect();
    let plane = Plane::from_fn(n, n, |x, y| {
        let cy = rows.overlap(y as f64, y as f64 + 1.0);
        let (g, w, k) = columns[x];
        let inside = cy * (g + w + k);
        v_bg * (1.0 - inside) + cy * (g * v_gray + w * v_white + k * v_black)
    });
    let image = TriImage::new([plane.clone(), plane.clone(), plane], ColorEncoding::DisplayRGB)?;
    let over_white = full_mask(n, n, gray_w[gray_w.len() / 2], rows);
    let over_black = full_mask(n, n, gray_b[gray_b.len() / 2], rows);
    if over_white.count() == 0 || over_black.count() == 0 {
        return Err(Error::Parameter("comparison bars cover no whole pixel".into()));
    }
    Ok(BarStimulus {
        image,
        over_white,
        over_black,
        geometry: BarGeometry {
            inducing_px: wi,
            comparison_px: wc,
            rows,
            gray_over_white: gray_w,
            gray_over_black: gray_b,
            gratings: [left, right],
        },
    })
}

pub const PATTERN_DIAMETER_DEG: f64 = 11.0;
pub const CENTER_DIAMETER_DEG: f64 = 4.39;

/// Concentric test pattern: a test ring with inducing rings on both sides.
///
/// Colours are CIELAB triples relative to the screen white.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingPatternSpec {
    pub pattern_diameter_deg: f64,
    /// Diameter of the test ring's centre line.
    pub center_diameter_deg: f64,
    /// First inducer (adjacent to the test ring) then second inducer.
    pub ring_colors: [[f64; 3]; 2],
    pub test_color: [f64; 3],
    pub n_inducing_rings: usize,
    pub background: [f64; 3],
    /// Field around the comparison ring; defaults to a neutral at the test L*.
    #[serde(default)]
    pub comparison_field: Option<[f64; 3]>,
    pub pattern_size_px: usize,
    pub pixels_per_degree: f64,
    /// Samples per pixel side used to antialias ring edges.
    pub supersample: usize,
}

/// Ring annuli in pixels, measured from the pattern centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingGeometry {
    pub center: (f64, f64),
    pub test: Span,
    /// Inner-to-outer annuli with the index of their colour in `ring_colors`.
    pub inducers: Vec<(Span, usize)>,
    pub pattern_radius: f64,
}

#[derive(Debug, Clone)]
pub struct RingStimulus {
    pub test_image: TriImage,
    pub comparison_image: TriImage,
    /// Pixels entirely inside the test ring (same in both images).
    pub test_mask: Mask,
    pub geometry: RingGeometry,
}

impl RingPatternSpec {
    pub fn for_screen(
        screen: &ScreenSpec,
        size: usize,
        ring_colors: [[f64; 3]; 2],
        test_color: [f64; 3],
    ) -> Result<Self> {
        Ok(Self {
            pattern_diameter_deg: PATTERN_DIAMETER_DEG,
            center_diameter_deg: CENTER_DIAMETER_DEG,
            ring_colors,
            test_color,
            n_inducing_rings: 16,
            background: [0.0, 0.0, 0.0],
            comparison_field: None,
            pattern_size_px: size,
            pixels_per_degree: pixels_per_degree(screen, size)?,
            supersample: 4,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pattern_diameter_deg > 0.0) || !(self.center_diameter_deg > 0.0) {
            return Err(Error::Parameter("ring diameters must be > 0".into()));
        }
        if !(self.center_diameter_deg < self.pattern_diameter_deg) {
            return Err(Error::Parameter(format!(
                "centre diameter {} must be below pattern diameter {}",
                self.center_diameter_deg, self.pattern_diameter_deg
            )));
        }
        if self.n_inducing_rings < 2 || !self.n_inducing_rings.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "need an even number (>= 2) of inducing rings, got {}",
                self.n_inducing_rings
            )));
        }
        if self.pattern_size_px == 0 || !(self.pixels_per_degree > 0.0) || self.supersample == 0 {
            return Err(Error::Parameter("pattern size, pixels per degree and supersampling must be > 0".into()));
        }
        Ok(())
    }

    /// Swaps first and second inducer colours.
    pub fn swapped(&self) -> Self {
        Self {
            ring_colors: [self.ring_colors[1], self.ring_colors[0]],
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.supersample.is_multiple_of(factor) {
            return Err(Error::Parameter(format!(
                "cannot rescale {}x supersampling by {factor}",
                self.supersample
            )));
        }
        Ok(Self {
            pattern_size_px: self.pattern_size_px * factor,
            pixels_per_degree: self.pixels_per_degree * factor as f64,
            supersample: self.supersample / factor,
            ..self.clone()
        })
    }

    /// Equal-width rings on each side of the test ring: the outer half tiles
    /// out to the pattern edge, the inner half tiles in to the centre.
    pub fn geometry(&self) -> Result<RingGeometry> {
        self.validate()?;
        let ppd = self.pixels_per_degree;
        let radius = self.pattern_diameter_deg / 2.0 * ppd;
        let rc = self.center_diameter_deg / 2.0 * ppd;
        let half = self.n_inducing_rings / 2;
        let width = (radius - rc) / (half as f64 + 0.5);
        let test = Span {
            start: rc - width / 2.0,
            end: rc + width / 2.0,
        };
        if !(test.start > 0.0) {
            return Err(Error::Parameter("test ring reaches the pattern centre".into()));
        }
        if 2.0 * radius > self.pattern_size_px as f64 {
            return Err(Error::Parameter(format!(
                "pattern of {:.1} px does not fit a {} px canvas",
                2.0 * radius,
                self.pattern_size_px
            )));
        }
        if width < 1.0 {
            return Err(Error::Parameter(format!("rings are {width:.3} px wide, below one pixel")));
        }
        let inner_width = test.start / half as f64;
        let mut inducers = Vec::with_capacity(2 * half);
        for k in (0..half).rev() {
            // k = 0 is adjacent to the test ring.
            let end = test.start - k as f64 * inner_width;
            inducers.push((
                Span {
                    start: end - inner_width,
                    end,
                },
                k % 2,
            ));
        }
        for k in 0..half {
            let start = test.end + k as f64 * width;
            inducers.push((
                Span {
                    start,
                    end: start + width,
                },
                k % 2,
            ));
        }
        let c = self.pattern_size_px as f64 / 2.0;
        Ok(RingGeometry {
            center: (c, c),
            test,
            inducers,
            pattern_radius: radius,
        })
    }
}

/// Renders by averaging `s x s` point samples per pixel of a radial colour map.
fn render_radial(size: usize, s: usize, center: (f64, f64), color_at: impl Fn(f64) -> [f64; 3]) -> TriImage {
    let inv = 1.0 / (s * s) as f64;
    TriImage::from_pixel_fn(size, size, ColorEncoding::DisplayRGB, |x, y| {
        let mut acc = [0.0; 3];
        for j in 0..s {
            for i in 0..s {
                let px = x as f64 + (i as f64 + 0.5) / s as f64 - center.0;
                let py = y as f64 + (j as f64 + 0.5) / s as f64 - center.1;
                let c = color_at((px * px + py * py).sqrt());
                for k in 0..3 {
                    acc[k] += c[k];
                }
            }
        }
        acc.map(|v| v * inv)
    })
}

pub fn generate_rings(spec: &RingPatternSpec, screen: &ScreenSpec) -> Result<RingStimulus> {
    let geometry = spec.geometry()?;
    let tol = 1e-3;
    let test_rgb = lab_to_display_pixel(spec.test_color, screen, tol)?;
    let inducer_rgb = [
        lab_to_display_pixel(spec.ring_colors[0], screen, tol)?,
        lab_to_display_pixel(spec.ring_colors[1], screen, tol)?,
    ];
    let bg_rgb = lab_to_display_pixel(spec.background, screen, tol)?;
    let field = spec.comparison_field.unwrap_or([spec.test_color[0], 0.0, 0.0]);
    let field_rgb = lab_to_display_pixel(field, screen, tol)?;

    let g = &geometry;
    let in_span = |r: f64, s: &Span| r >= s.start && r < s.end;
    let test_color_at = |r: f64| {
        if in_span(r, &g.test) {
            return test_rgb;
        }
        for (span, idx) in &g.inducers {
            if in_span(r, span) {
                return inducer_rgb[*idx];
            }
        }
        bg_rgb
    };
    let comparison_color_at = |r: f64| {
        if in_span(r, &g.test) {
            test_rgb
        } else if r < g.pattern_radius {
            field_rgb
        } else {
            bg_rgb
        }
    };
    let n = spec.pattern_size_px;
    let test_image = render_radial(n, spec.supersample, g.center, test_color_at);
    let comparison_image = render_radial(n, spec.supersample, g.center, comparison_color_at);

    // A pixel is inside the ring when its nearest and farthest points are.
    let test_mask = Mask::from_fn(n, n, |x, y| {
        let (x0, x1) = (x as f64 - g.center.0, x as f64 + 1.0 - g.center.0);
        let (y0, y1) = (y as f64 - g.center.1, y as f64 + 1.0 - g.center.1);
        let far = x0.abs().max(x1.abs()).hypot(y0.abs().max(y1.abs()));
        let nx = if x0 <= 0.0 && x1 >= 0.0 { 0.0 } else { x0.abs().min(x1.abs()) };
        let ny = if y0 <= 0.0 && y1 >= 0.0 { 0.0 } else { y0.abs().min(y1.abs()) };
        let near = nx.hypot(ny);
        near >= g.test.start && far < g.test.end
    });
    if test_mask.count() == 0 {
        return Err(Error::Parameter("test ring covers no whole pixel".into()));
    }
    Ok(RingStimulus {
        test_image,
        comparison_image,
        test_mask,
        geometry,
    })
}

/// Box downsampling by an integer factor.
pub fn downsample(image: &TriImage, factor: usize) -> Result<TriImage> {
    let (w, h) = image.dims();
    if factor == 0 || w % factor != 0 || h % factor != 0 {
        return Err(Error::Parameter(format!("{w}x{h} is not divisible by {factor}")));
    }
    let inv = 1.0 / (factor * factor) as f64;
    Ok(TriImage::from_pixel_fn(w / factor, h / factor, image.encoding(), |x, y| {
        let mut acc = [0.0; 3];
        for j in 0..factor {
            for i in 0..factor {
                let p = image.pixel(x * factor + i, y * factor + j);
                for k in 0..3 {
                    acc[k] += p[k];
                }
            }
        }
        acc.map(|v| v * inv)
    }))
}
