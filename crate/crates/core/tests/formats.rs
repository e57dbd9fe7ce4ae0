//! Round trips of the file formats.

use proptest::prelude::*;

use diffprim::io::{
    decode_feature_image, encode_feature_image, parse_pose2d, parse_scene, ppm_preview,
    serialize_scene, FimgError, SAMPLE_SCENE,
};
use diffprim::renderer::FeatureImage;
use diffprim::skeleton::Appearances;

fn sample_render() -> FeatureImage {
    let scene = parse_scene(SAMPLE_SCENE).unwrap();
    scene
        .setup(scene.camera("front").unwrap())
        .render(scene.pose("standing").unwrap())
        .unwrap()
}

#[test]
fn sample_render_round_trips_through_fimg() {
    let image = sample_render();
    assert_eq!(image.shape(), (256, 256, 16));
    let bytes = encode_feature_image(&image).unwrap();
    assert_eq!(bytes.len(), 18 + 4 * 256 * 256 * 16);
    let back = decode_feature_image(&bytes).unwrap();
    assert_eq!(back.shape(), image.shape());
    for (b, a) in back.as_slice().iter().zip(image.as_slice()) {
        assert_eq!(b.to_bits(), (*a as f32 as f64).to_bits());
    }
    assert_eq!(encode_feature_image(&back).unwrap(), bytes);
    assert!(matches!(
        decode_feature_image(&bytes[..bytes.len() - 1]),
        Err(FimgError::PayloadLength { .. })
    ));
}

#[test]
fn sample_render_preview_header() {
    let ppm = ppm_preview(&sample_render(), [0, 1, 2], (-1.0, 1.0)).unwrap();
    let header = b"P6\n256 256\n255\n";
    assert_eq!(&ppm[..header.len()], header);
    assert_eq!(ppm.len() - header.len(), 196_608);
}

#[test]
fn sample_scene_serialization_is_idempotent() {
    let scene = parse_scene(SAMPLE_SCENE).unwrap();
    let text = serialize_scene(&scene);
    let first = parse_scene(&text).unwrap();
    assert_eq!(first, scene);
    assert_eq!(serialize_scene(&first), text);
}

proptest! {
    #[test]
    fn fimg_is_bit_exact_for_finite_f32(
        (h, w, a, bits) in (1usize..5, 1usize..5, 1usize..4)
            .prop_flat_map(|(h, w, a)| (Just(h), Just(w), Just(a), prop::collection::vec(any::<u32>(), h * w * a)))
    ) {
        // every finite f32, subnormals and signed zero included
        let values: Vec<f64> = bits
            .iter()
            .map(|&b| f32::from_bits(b))
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .map(f64::from)
            .collect();
        let image = FeatureImage::new(h, w, a, values).unwrap();
        let back = decode_feature_image(&encode_feature_image(&image).unwrap()).unwrap();
        prop_assert_eq!(back.shape(), image.shape());
        for (x, y) in back.as_slice().iter().zip(image.as_slice()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn perturbed_scenes_round_trip(
        widths in prop::collection::vec(1e-3f64..0.5, 16),
        values in prop::collection::vec(-1e3f64..1e3, 16 * 16),
        alpha in 1e-3f64..1.0,
    ) {
        let mut scene = parse_scene(SAMPLE_SCENE).unwrap();
        scene.topology = scene.topology.with_widths(widths).unwrap();
        scene.appearances = Appearances::from_flat(values, 16).unwrap();
        scene.params.alpha = alpha;
        let first = parse_scene(&serialize_scene(&scene)).unwrap();
        prop_assert_eq!(&first, &scene);
        let second = parse_scene(&serialize_scene(&first)).unwrap();
        prop_assert_eq!(second, first);
    }

    #[test]
    fn pose2d_text_round_trips(
        rows in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0.0f64..=1.0), 1..20)
    ) {
        let text: String = rows.iter().map(|(x, y, c)| format!("{x:?} {y:?} {c:?}\n")).collect();
        let parsed = parse_pose2d(&format!("# header\n\n{text}")).unwrap();
        prop_assert_eq!(parsed.len(), rows.len());
        for ((p, c), (x, y, cc)) in parsed.points.iter().zip(&parsed.confidences).zip(&rows) {
            prop_assert_eq!((p.x, p.y, *c), (*x, *y, *cc));
        }
    }
}
