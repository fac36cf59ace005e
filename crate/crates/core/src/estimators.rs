//! Global illuminant estimators: gray world, white patch, shades of gray and
//! first-order gray edge. Each maps a rectangular image region to a single
//! unit-norm illuminant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::{check_dims, normalize_to_unit, Illuminant, LinearImage, PixelMask, Rgb};

pub const DEFAULT_MINKOWSKI_P: f64 = 6.0;
pub const DEFAULT_EDGE_SIGMA: f64 = 1.0;

/// Smallest side accepted by [`gray_edge`].
pub const GRAY_EDGE_MIN_SIDE: usize = 3;

/// A rectangular view into an image, optionally with pixels to skip.
///
/// The exclusion mask is in parent-image coordinates. If it would exclude
/// every pixel of the rectangle, the whole rectangle is used instead.
#[derive(Clone, Copy, Debug)]
pub struct Region<'a> {
    image: &'a LinearImage,
    x0: usize,
    y0: usize,
    width: usize,
    height: usize,
    exclude: Option<&'a PixelMask>,
}

impl<'a> Region<'a> {
    pub fn new(
        image: &'a LinearImage,
        x0: usize,
        y0: usize,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > image.width() || y0 + height > image.height() {
            return Err(Error::Config(format!(
                "region {width}x{height}+{x0}+{y0} outside {}x{} image",
                image.width(),
                image.height()
            )));
        }
        Ok(Self {
            image,
            x0,
            y0,
            width,
            height,
            exclude: None,
        })
    }

    pub fn full(image: &'a LinearImage) -> Self {
        Self {
            image,
            x0: 0,
            y0: 0,
            width: image.width(),
            height: image.height(),
            exclude: None,
        }
    }

    pub fn with_exclusion(mut self, mask: &'a PixelMask) -> Result<Self> {
        check_dims(self.image.dims(), mask.dims())?;
        self.exclude = Some(mask);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel at region-local coordinates.
    #[inline]
    fn at(&self, x: usize, y: usize) -> Rgb {
        self.image.get(self.x0 + x, self.y0 + y)
    }

    fn all_excluded(&self) -> bool {
        match self.exclude {
            None => false,
            Some(mask) => (0..self.height)
                .all(|y| (0..self.width).all(|x| mask.get(self.x0 + x, self.y0 + y))),
        }
    }

    /// Region-local coordinates of the pixels that feed the statistics.
    fn included(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mask = if self.all_excluded() {
            None
        } else {
            self.exclude
        };
        let (x0, y0, w) = (self.x0, self.y0, self.width);
        (0..self.height)
            .flat_map(move |y| (0..w).map(move |x| (x, y)))
            .filter(move |&(x, y)| mask.is_none_or(|m| !m.get(x0 + x, y0 + y)))
    }

    fn included_pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.included().map(|(x, y)| self.at(x, y))
    }
}

/// Which global estimator to run, with its parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum EstimatorId {
    #[default]
    GrayWorld,
    WhitePatch,
    ShadesOfGray {
        p: f64,
    },
    GrayEdge {
        p: f64,
        sigma: f64,
    },
}

impl EstimatorId {
    /// The registry: every estimator with its default parameters.
    pub fn registry() -> [EstimatorId; 4] {
        [
            EstimatorId::GrayWorld,
            EstimatorId::WhitePatch,
            EstimatorId::ShadesOfGray {
                p: DEFAULT_MINKOWSKI_P,
            },
            EstimatorId::GrayEdge {
                p: DEFAULT_MINKOWSKI_P,
                sigma: DEFAULT_EDGE_SIGMA,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let check_p = |p: f64| {
            if p.is_finite() && p >= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "Minkowski exponent must be finite and >= 1, got {p}"
                )))
            }
        };
        match *self {
            EstimatorId::GrayWorld | EstimatorId::WhitePatch => Ok(()),
            EstimatorId::ShadesOfGray { p } => check_p(p),
            EstimatorId::GrayEdge { p, sigma } => {
                check_p(p)?;
                if sigma.is_finite() && sigma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "gray-edge sigma must be positive, got {sigma}"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorId::GrayWorld => f.write_str("gray-world"),
            EstimatorId::WhitePatch => f.write_str("white-patch"),
            EstimatorId::ShadesOfGray { p } => write!(f, "shades-of-gray:p={p}"),
            EstimatorId::GrayEdge { p, sigma } => write!(f, "gray-edge:p={p},sigma={sigma}"),
        }
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    /// Parses `gray-world`, `white-patch`, `shades-of-gray[:p=P]` and
    /// `gray-edge[:p=P,sigma=S]`. Underscores in the name are accepted.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.trim().split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.trim(), None),
        };
        let name = name.replace('_', "-");
        let mut p = DEFAULT_MINKOWSKI_P;
        let mut sigma = DEFAULT_EDGE_SIGMA;
        let mut seen_sigma = false;
        for kv in args
            .into_iter()
            .flat_map(|a| a.split(','))
            .filter(|kv| !kv.is_empty())
        {
            let (key, value) = kv.split_once('=').ok_or_else(|| {
                Error::Config(format!("malformed estimator parameter `{kv}` in `{s}`"))
            })?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("non-numeric value in `{kv}`")))?;
            match key.trim() {
                "p" => p = value,
                "sigma" => {
                    sigma = value;
                    seen_sigma = true;
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown estimator parameter `{other}`"
                    )))
                }
            }
        }
        let id = match name.as_str() {
            "gray-world" | "white-patch" if args.is_some_and(|a| !a.is_empty()) => {
                return Err(Error::Config(format!("`{name}` takes no parameters")))
            }
            "gray-world" => EstimatorId::GrayWorld,
            "white-patch" => EstimatorId::WhitePatch,
            "shades-of-gray" if seen_sigma => {
                return Err(Error::Config("shades-of-gray takes no sigma".into()))
            }
            "shades-of-gray" => EstimatorId::ShadesOfGray { p },
            "gray-edge" => EstimatorId::GrayEdge { p, sigma },
            other => return Err(Error::Config(format!("unknown estimator `{other}`"))),
        };
        id.validate()?;
        Ok(id)
    }
}

impl Serialize for EstimatorId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn gray_world(region: &Region<'_>) -> Result<Illuminant> {
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for px in region.included_pixels() {
        for k in 0..3 {
            sum[k] += px[k];
        }
        n += 1;
    }
    let n = n as f64;
    normalize_to_unit(sum.map(|s| s / n))
}

pub fn white_patch(region: &Region<'_>) -> Result<Illuminant> {
    let mut max = [0.0f64; 3];
    for px in region.included_pixels() {
        for k in 0..3 {
            max[k] = max[k].max(px[k]);
        }
    }
    normalize_to_unit(max)
}

/// Per-channel Minkowski mean `(mean v^p)^(1/p)` of a stream of triples.
///
/// Values are divided by the channel maximum before exponentiation so large
/// exponents neither overflow nor underflow; the maximum is multiplied back.
fn minkowski_mean(values: &[Rgb], p: f64) -> Rgb {
    let n = values.len() as f64;
    let mut out = [0.0; 3];
    for k in 0..3 {
        if p == 1.0 {
            out[k] = values.iter().map(|v| v[k]).sum::<f64>() / n;
            continue;
        }
        let max = values.iter().map(|v| v[k]).fold(0.0, f64::max);
        if max == 0.0 {
            continue;
        }
        let mean = values.iter().map(|v| (v[k] / max).powf(p)).sum::<f64>() / n;
        out[k] = max * mean.powf(1.0 / p);
    }
    out
}

pub fn shades_of_gray(region: &Region<'_>, p: f64) -> Result<Illuminant> {
    EstimatorId::ShadesOfGray { p }.validate()?;
    let values: Vec<Rgb> = region.included_pixels().collect();
    normalize_to_unit(minkowski_mean(&values, p))
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub(crate) fn smoothing_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable convolution with replicate-edge padding over a `w`×`h` buffer.
fn smooth_replicate(src: &[Rgb], w: usize, h: usize, kernel: &[f64]) -> Vec<Rgb> {
    let r = (kernel.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![[0.0; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, wt) in kernel.iter().enumerate() {
                let sx = clamp(x as i64 + i as i64 - r, w);
                let px = src[y * w + sx];
                for k in 0..3 {
                    acc[k] += wt * px[k];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![[0.0; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, wt) in kernel.iter().enumerate() {
                let sy = clamp(y as i64 + i as i64 - r, h);
                let px = tmp[sy * w + x];
                for k in 0..3 {
                    acc[k] += wt * px[k];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// First-order gray edge: Minkowski-p mean of per-channel gradient magnitudes
/// of the Gaussian-smoothed region.
pub fn gray_edge(region: &Region<'_>, p: f64, smooth_sigma: f64) -> Result<Illuminant> {
    EstimatorId::GrayEdge {
        p,
        sigma: smooth_sigma,
    }
    .validate()?;
    let (w, h) = (region.width, region.height);
    if w < GRAY_EDGE_MIN_SIDE || h < GRAY_EDGE_MIN_SIDE {
        return Err(Error::RegionTooSmall {
            width: w,
            height: h,
            min: GRAY_EDGE_MIN_SIDE,
        });
    }
    let src: Vec<Rgb> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| region.at(x, y))
        .collect();
    let smooth = smooth_replicate(&src, w, h, &smoothing_kernel(smooth_sigma));

    let grads: Vec<Rgb> = region
        .included()
        .map(|(x, y)| {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let mut g = [0.0; 3];
            for k in 0..3 {
                let dx = (smooth[y * w + xr][k] - smooth[y * w + xl][k]) / 2.0;
                let dy = (smooth[yd * w + x][k] - smooth[yu * w + x][k]) / 2.0;
                g[k] = (dx * dx + dy * dy).sqrt();
            }
            g
        })
        .collect();
    normalize_to_unit(minkowski_mean(&grads, p))
}

/// Run the named estimator on a region.
pub fn estimate(id: &EstimatorId, region: &Region<'_>) -> Result<Illuminant> {
    match *id {
        EstimatorId::GrayWorld => gray_world(region),
        EstimatorId::WhitePatch => white_patch(region),
        EstimatorId::ShadesOfGray { p } => shades_of_gray(region, p),
        EstimatorId::GrayEdge { p, sigma } => gray_edge(region, p, sigma),
    }
}
