use illumap::bench::angular_error;
use illumap::image::{decode_png, encode_png};
use illumap::spatial::{gaussian_interpolate, SparseEntry, SparseField};
use illumap::{
    apply_correction, normalize_to_unit, run_pipeline, BitDepth, Illuminant, LinearImage, Mode,
    PipelineParams, Rgb, Transfer,
};
use proptest::prelude::*;

fn positive_rgb() -> impl Strategy<Value = Rgb> {
    [0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0]
}

fn image(max_side: usize) -> impl Strategy<Value = LinearImage> {
    (8..max_side, 8..max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(positive_rgb(), w * h)
            .prop_map(move |px| LinearImage::new(w, h, px).unwrap())
    })
}

fn sparse(w: usize, h: usize, max_entries: usize) -> impl Strategy<Value = SparseField> {
    prop::collection::btree_set((0..w, 0..h), 1..max_entries).prop_flat_map(move |cells| {
        let n = cells.len();
        (
            Just(cells),
            prop::collection::vec(positive_rgb(), n),
            prop::collection::vec(0.1f64..2.0, n),
        )
            .prop_map(move |(cells, colors, weights)| {
                let entries = cells
                    .into_iter()
                    .zip(colors)
                    .zip(weights)
                    .map(|(((x, y), c), weight)| SparseEntry {
                        x,
                        y,
                        illuminant: normalize_to_unit(c).unwrap(),
                        weight,
                        degenerate: false,
                    })
                    .collect();
                SparseField::new(w, h, entries).unwrap()
            })
    })
}

fn norm(v: Rgb) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_is_idempotent(v in positive_rgb(), k in 0.001f64..1000.0) {
        let once = normalize_to_unit(v).unwrap();
        let twice = normalize_to_unit(once.rgb()).unwrap();
        let scaled = normalize_to_unit(v.map(|c| c * k)).unwrap();
        for c in 0..3 {
            prop_assert!((once.rgb()[c] - twice.rgb()[c]).abs() < 1e-15);
            prop_assert!((once.rgb()[c] - scaled.rgb()[c]).abs() < 1e-15);
        }
        prop_assert!((norm(once.rgb()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn png_codes_survive_decode_and_reencode(img in image(24), srgb in any::<bool>(), wide in any::<bool>()) {
        let transfer = if srgb { Transfer::Srgb } else { Transfer::Linear };
        let depth = if wide { BitDepth::Sixteen } else { BitDepth::Eight };
        let bytes = encode_png(&img, transfer, depth).unwrap();
        let decoded = decode_png(&bytes, transfer).unwrap();
        prop_assert_eq!(encode_png(&decoded, transfer, depth).unwrap(), bytes);
        if !srgb {
            let step = 0.5 / depth.max_code();
            for (a, b) in img.pixels().iter().zip(decoded.pixels()) {
                for c in 0..3 {
                    prop_assert!((a[c] - b[c]).abs() <= step + 1e-12);
                }
            }
        }
    }

    #[test]
    fn angle_is_symmetric_and_scale_free(a in positive_rgb(), b in positive_rgb(), s in 0.01f64..100.0, t in 0.01f64..100.0) {
        let ab = angular_error(a, b).unwrap();
        prop_assert!((ab - angular_error(b, a).unwrap()).abs() < 1e-9);
        prop_assert!((ab - angular_error(a.map(|c| c * s), b.map(|c| c * t)).unwrap()).abs() < 1e-9);
        prop_assert!((0.0..=180.0).contains(&ab));
    }

    #[test]
    fn interpolated_field_is_unit_and_inside_the_entry_cone(field in sparse(40, 30, 12), sigma in 1.0f64..30.0) {
        let dense = gaussian_interpolate(&field, sigma).unwrap();
        let chroma = |v: Rgb| v.map(|c| c / (v[0] + v[1] + v[2]));
        let entry_chroma: Vec<Rgb> = field.entries.iter().map(|e| chroma(e.illuminant.rgb())).collect();
        for px in dense.pixels() {
            prop_assert!((norm(px.rgb()) - 1.0).abs() < 1e-12);
            let c = chroma(px.rgb());
            for k in 0..3 {
                let lo = entry_chroma.iter().map(|e| e[k]).fold(f64::INFINITY, f64::min);
                let hi = entry_chroma.iter().map(|e| e[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(c[k] >= lo - 1e-12 && c[k] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn pipeline_ignores_exposure(img in image(40), k in prop::sample::select(vec![0.1, 0.5, 2.0, 10.0])) {
        let params = PipelineParams { saturation_threshold: None, ..PipelineParams::default() };
        let a = run_pipeline(&img, &params, Mode::Pixelwise, None).unwrap();
        let b = run_pipeline(&img.scaled(k).unwrap(), &params, Mode::Pixelwise, None).unwrap();
        prop_assert!(angular_error(a.global.rgb(), b.global.rgb()).unwrap() < 1e-9);
        for (p, q) in a.field.unwrap().pixels().iter().zip(b.field.unwrap().pixels()) {
            prop_assert!(angular_error(p.rgb(), q.rgb()).unwrap() < 1e-9);
        }
    }

    #[test]
    fn correction_undoes_a_known_illuminant(refl in image(16), l in positive_rgb()) {
        let l = normalize_to_unit(l).unwrap();
        let lit = refl.map(|p| [0, 1, 2].map(|k| p[k] * 3f64.sqrt() * l.rgb()[k])).unwrap();
        let (back, clamped) = apply_correction(&lit, l).unwrap();
        prop_assert_eq!(clamped, 0);
        for (a, b) in refl.pixels().iter().zip(back.pixels()) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn white_correction_is_identity() {
    let img = LinearImage::from_fn(9, 7, |x, y| [x as f64 * 0.1, y as f64 * 0.13, 0.37]).unwrap();
    let (out, _) = apply_correction(&img, Illuminant::white()).unwrap();
    assert_eq!(out, img);
}
