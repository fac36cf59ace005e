use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_dims, PixelMask, Rgb, DEGENERATE_NORM};
use crate::spatial::IlluminantField;

/// Angle in degrees between two nonzero vectors.
pub fn angular_error(gt: Rgb, est: Rgb) -> Result<f64> {
    let dot = gt[0] * est[0] + gt[1] * est[1] + gt[2] * est[2];
    let ng = (gt[0] * gt[0] + gt[1] * gt[1] + gt[2] * gt[2]).sqrt();
    let ne = (est[0] * est[0] + est[1] * est[1] + est[2] * est[2]).sqrt();
    if !(ng >= DEGENERATE_NORM && ne >= DEGENERATE_NORM) {
        return Err(Error::DegenerateVector {
            threshold: DEGENERATE_NORM,
        });
    }
    // atan2 of the cross and dot products stays accurate near 0° and 180°
    let cross = [
        gt[1] * est[2] - gt[2] * est[1],
        gt[2] * est[0] - gt[0] * est[2],
        gt[0] * est[1] - gt[1] * est[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    Ok(sin.atan2(dot).to_degrees())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub best25_mean: f64,
    pub worst25_mean: f64,
    pub max: f64,
    pub count: usize,
}

/// Mean, median (midpoint for even counts), mean of the ⌈n/4⌉ smallest and
/// largest values, and maximum.
pub fn summary_stats(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::Degenerate("no errors to summarize".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let q = n.div_ceil(4);
    let mean_of = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(ErrorStats {
        mean: mean_of(&sorted),
        median,
        best25_mean: mean_of(&sorted[..q]),
        worst25_mean: mean_of(&sorted[n - q..]),
        max: sorted[n - 1],
        count: n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelErrors {
    pub width: usize,
    pub height: usize,
    /// Degrees per pixel; `None` where the mask excluded the pixel.
    pub errors: Vec<Option<f64>>,
    pub stats: ErrorStats,
}

/// Angular error at every pixel where `mask` (if given) is set.
pub fn pixelwise_error(
    gt: &IlluminantField,
    est: &IlluminantField,
    mask: Option<&PixelMask>,
) -> Result<PixelErrors> {
    check_dims(gt.dims(), est.dims())?;
    if let Some(m) = mask {
        check_dims(gt.dims(), m.dims())?;
    }
    let mut errors = Vec::with_capacity(gt.pixels().len());
    let mut included = Vec::new();
    for (i, (g, e)) in gt.pixels().iter().zip(est.pixels()).enumerate() {
        if mask.is_some_and(|m| !m.bits()[i]) {
            errors.push(None);
            continue;
        }
        let err = angular_error(g.rgb(), e.rgb())?;
        included.push(err);
        errors.push(Some(err));
    }
    if included.is_empty() {
        return Err(Error::Degenerate(
            "evaluation mask excludes every pixel".into(),
        ));
    }
    Ok(PixelErrors {
        width: gt.width(),
        height: gt.height(),
        errors,
        stats: summary_stats(&included)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::normalize_to_unit;

    #[test]
    fn closed_form_angles() {
        assert!((angular_error([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap() - 90.0).abs() < 1e-9);
        assert!(angular_error([1.0; 3], [2.0; 3]).unwrap().abs() < 1e-9);
        let want = (2.0 / 6f64.sqrt()).acos().to_degrees();
        assert!((angular_error([1.0; 3], [1.0, 1.0, 0.0]).unwrap() - want).abs() < 1e-9);
        assert!((want - 35.264).abs() < 1e-3);
        assert!(angular_error([0.0; 3], [1.0; 3]).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = summary_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            (s.mean, s.median, s.best25_mean, s.worst25_mean, s.max),
            (2.5, 2.5, 1.0, 4.0, 4.0)
        );
        let s = summary_stats(&[5.0]).unwrap();
        assert_eq!(
            (
                s.mean,
                s.median,
                s.best25_mean,
                s.worst25_mean,
                s.max,
                s.count
            ),
            (5.0, 5.0, 5.0, 5.0, 5.0, 1)
        );
        // n=5: quartile size 2
        let s = summary_stats(&[9.0, 1.0, 5.0, 3.0, 7.0]).unwrap();
        assert_eq!((s.median, s.best25_mean, s.worst25_mean), (5.0, 2.0, 8.0));
        assert!(summary_stats(&[]).is_err());
    }

    #[test]
    fn pixelwise_error_examples() {
        let red = normalize_to_unit([1.0, 0.0, 0.0]).unwrap();
        let green = normalize_to_unit([0.0, 1.0, 0.0]).unwrap();
        let a = IlluminantField::constant(4, 3, red).unwrap();
        let b = IlluminantField::constant(4, 3, green).unwrap();
        let same = pixelwise_error(&a, &a, None).unwrap();
        assert_eq!(same.stats.max, 0.0);
        let ortho = pixelwise_error(&a, &b, None).unwrap();
        assert!(ortho
            .errors
            .iter()
            .all(|e| (e.unwrap() - 90.0).abs() < 1e-9));

        let mut mask = PixelMask::empty(4, 3);
        mask.set(1, 1, true);
        let masked = pixelwise_error(&a, &b, Some(&mask)).unwrap();
        assert_eq!(masked.stats.count, 1);
        assert_eq!(masked.errors.iter().filter(|e| e.is_none()).count(), 11);
        assert!(pixelwise_error(&a, &b, Some(&PixelMask::empty(4, 3))).is_err());
    }
}
