//! Library results against direct, unoptimized reimplementations.

use std::f64::consts::PI;

use illumap::bench::{angular_error, pixelwise_error};
use illumap::estimators::{gray_edge, gray_world, white_patch};
use illumap::spatial::{blockify, confidence_map, sparse_estimates, whiteness_map};
use illumap::{
    normalize_to_unit, EstimatorId, IlluminantField, LinearImage, PixelMask, Region, Rgb,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(seed: u64, w: usize, h: usize) -> LinearImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LinearImage::from_fn(w, h, |_, _| [0; 3].map(|_| rng.gen_range(0.0..1.0))).unwrap()
}

/// Non-separable 2-D Gaussian blur with replicated borders, then central
/// differences, then a Minkowski mean computed without rescaling.
fn gray_edge_oracle(img: &LinearImage, p: f64, sigma: f64) -> Rgb {
    let (w, h) = img.dims();
    let r = (3.0 * sigma).ceil() as i64;
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            total += (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
        }
    }
    let at = |x: i64, y: i64| {
        img.get(
            x.clamp(0, w as i64 - 1) as usize,
            y.clamp(0, h as i64 - 1) as usize,
        )
    };
    let mut smooth = vec![[0.0; 3]; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = [0.0; 3];
            for dy in -r..=r {
                for dx in -r..=r {
                    let g = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp() / total;
                    let px = at(x + dx, y + dy);
                    for k in 0..3 {
                        acc[k] += g * px[k];
                    }
                }
            }
            smooth[y as usize * w + x as usize] = acc;
        }
    }
    let s = |x: i64, y: i64| {
        smooth[y.clamp(0, h as i64 - 1) as usize * w + x.clamp(0, w as i64 - 1) as usize]
    };
    let mut sums = [0.0; 3];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for k in 0..3 {
                let gx = (s(x + 1, y)[k] - s(x - 1, y)[k]) / 2.0;
                let gy = (s(x, y + 1)[k] - s(x, y - 1)[k]) / 2.0;
                sums[k] += (gx * gx + gy * gy).sqrt().powf(p);
            }
        }
    }
    sums.map(|v| (v / (w * h) as f64).powf(1.0 / p))
}

#[test]
fn gray_edge_matches_brute_force() {
    for (seed, p, sigma) in [(1, 6.0, 1.0), (2, 1.0, 0.7), (3, 2.0, 2.0), (4, 6.0, 1.5)] {
        let img = random_image(seed, 23, 17);
        let got = gray_edge(&Region::full(&img), p, sigma).unwrap();
        let want = normalize_to_unit(gray_edge_oracle(&img, p, sigma)).unwrap();
        for k in 0..3 {
            assert!(
                (got.rgb()[k] - want.rgb()[k]).abs() < 1e-9,
                "seed {seed}: {got:?} vs {want:?}"
            );
        }
    }
}

#[test]
fn block_estimates_match_raster_means() {
    let img = random_image(5, 21, 14);
    let grid = blockify(21, 14, 4).unwrap();
    let sparse = sparse_estimates(
        &img,
        &grid,
        &EstimatorId::GrayWorld,
        illumap::Illuminant::white(),
        None,
    )
    .unwrap();
    assert_eq!(sparse.entries.len(), grid.blocks.len());
    for (block, entry) in grid.blocks.iter().zip(&sparse.entries) {
        let mut sum = [0.0; 3];
        for y in block.y0..block.y0 + block.height {
            for x in block.x0..block.x0 + block.width {
                for k in 0..3 {
                    sum[k] += img.get(x, y)[k];
                }
            }
        }
        let want = normalize_to_unit(sum).unwrap();
        assert!(angular_error(want.rgb(), entry.illuminant.rgb()).unwrap() < 1e-9);
        assert_eq!((entry.x, entry.y), block.center);
    }
}

#[test]
fn masked_region_statistics_match_filtered_loops() {
    let img = random_image(6, 30, 20);
    let mask = PixelMask::from_fn(30, 20, |x, y| (x * 7 + y * 3) % 5 == 0);
    let region = Region::new(&img, 4, 3, 15, 11)
        .unwrap()
        .with_exclusion(&mask)
        .unwrap();
    let (mut sum, mut max) = ([0.0; 3], [0.0f64; 3]);
    for y in 3..14 {
        for x in 4..19 {
            if mask.get(x, y) {
                continue;
            }
            for k in 0..3 {
                sum[k] += img.get(x, y)[k];
                max[k] = max[k].max(img.get(x, y)[k]);
            }
        }
    }
    let gw = gray_world(&region).unwrap();
    let wp = white_patch(&region).unwrap();
    assert!(angular_error(gw.rgb(), sum).unwrap() < 1e-9);
    assert!(angular_error(wp.rgb(), max).unwrap() < 1e-9);
}

#[test]
fn whiteness_and_confidence_match_closed_forms() {
    let img = random_image(8, 13, 9);
    let n = (13 * 9) as f64;
    let mean: Vec<f64> = (0..3)
        .map(|k| img.pixels().iter().map(|p| p[k]).sum::<f64>() / n)
        .collect();
    let w = whiteness_map(&img).unwrap();
    let mut expected = Vec::new();
    for p in img.pixels() {
        let t: Vec<f64> = (0..3).map(|k| p[k] / mean[k]).collect();
        let dot =
            (t[0] + t[1] + t[2]) / (3f64.sqrt() * (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt());
        expected.push(dot.acos());
    }
    for (a, b) in w.values.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-7);
    }
    let c = confidence_map(&w);
    let mu = expected.iter().sum::<f64>() / n;
    let var = expected.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    for (got, wv) in c.values.iter().zip(&expected) {
        let want = (-(wv - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var);
        assert!((got - want).abs() < 1e-6 * want.max(1.0));
    }
    assert!(!c.degenerate);
}

#[test]
fn pixelwise_error_matches_flat_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut unit = || normalize_to_unit([0; 3].map(|_| rng.gen_range(0.05..1.0))).unwrap();
    let a: Vec<_> = (0..60).map(|_| unit()).collect();
    let b: Vec<_> = (0..60).map(|_| unit()).collect();
    let fa = IlluminantField::new(10, 6, a.clone()).unwrap();
    let fb = IlluminantField::new(10, 6, b.clone()).unwrap();
    let mask = PixelMask::from_fn(10, 6, |x, y| (x + y) % 3 != 0);
    let got = pixelwise_error(&fa, &fb, Some(&mask)).unwrap();
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..60 {
        if !mask.bits()[i] {
            assert!(got.errors[i].is_none());
            continue;
        }
        let (p, q) = (a[i].rgb(), b[i].rgb());
        let cos = (p[0] * q[0] + p[1] * q[1] + p[2] * q[2]).clamp(-1.0, 1.0);
        let want = cos.acos().to_degrees();
        assert!((got.errors[i].unwrap() - want).abs() < 1e-6);
        total += want;
        count += 1;
    }
    assert_eq!(got.stats.count, count);
    assert!((got.stats.mean - total / count as f64).abs() < 1e-6);
}
