use proptest::prelude::*;

use craft::formats::{feature_map, flo, pnm, volume, weights};
use craft::FormatError;
use craft_core::corr::{dot_correlation, normalize_volume, CfaParams, VolumeKind};
use craft_core::rng::{seeded, uniform_tensor};
use craft_core::{CorrelationVolume, FeatureMap, FlowField, Image, Tensor};

fn f32_values(t: Tensor) -> Tensor {
    t.map(|v| v as f32 as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feature_maps_round_trip(seed: u64, h in 1usize..6, w in 1usize..6, d in 1usize..9) {
        let f = FeatureMap::new(f32_values(uniform_tensor(&mut seeded(seed), &[h, w, d], 50.0))).unwrap();
        let bytes = feature_map::encode(&f).unwrap();
        prop_assert_eq!(bytes.len(), 16 + 4 * h * w * d);
        prop_assert_eq!(feature_map::decode(&bytes).unwrap(), f);
    }

    #[test]
    fn volumes_round_trip(seed: u64, h in 1usize..4, w in 1usize..4, code in 0u8..4) {
        let kind = VolumeKind::from_code(code).unwrap();
        let v = CorrelationVolume::new(f32_values(uniform_tensor(&mut seeded(seed), &[h, w, h, w], 3.0)), kind).unwrap();
        prop_assert_eq!(volume::decode(&volume::encode(&v).unwrap()).unwrap(), v);
    }

    #[test]
    fn flow_round_trip(seed: u64, w in 1usize..9, h in 1usize..9) {
        let t = f32_values(uniform_tensor(&mut seeded(seed), &[2, w * h], 400.0));
        let valid: Vec<bool> = (0..w * h).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        let (u, v) = t.data().split_at(w * h);
        let zero = |x: &[f64]| x.iter().zip(&valid).map(|(a, ok)| if *ok { *a } else { 0.0 }).collect::<Vec<_>>();
        let f = FlowField::new(w, h, zero(u), zero(v), valid.clone()).unwrap();
        prop_assert_eq!(flo::decode(&flo::encode(&f).unwrap()).unwrap(), f);
    }

    #[test]
    fn images_round_trip(samples in prop::collection::vec(any::<u8>(), 1..300), w in 1usize..20, color: bool) {
        let c = if color { 3 } else { 1 };
        let h = samples.len() / (w * c);
        prop_assume!(h > 0);
        let img = Image::new(w, h, c, samples[..w * h * c].to_vec()).unwrap();
        prop_assert_eq!(pnm::decode(&pnm::encode(&img)).unwrap(), img);
    }

    #[test]
    fn weights_round_trip(seed: u64, n in 0usize..6) {
        let mut rng = seeded(seed);
        let records = (0..n)
            .map(|i| {
                let dims = vec![1 + i % 3, 2 + i % 2];
                let data = f32_values(uniform_tensor(&mut rng, &dims, 2.0)).into_data();
                weights::Record { name: format!("layer.{i}"), dims, data }
            })
            .collect();
        let w = weights::WeightsFile { records };
        prop_assert_eq!(weights::decode(&weights::encode(&w).unwrap()).unwrap(), w);
    }

    #[test]
    fn truncation_is_always_reported(seed: u64, cut in 1usize..40) {
        let f = FeatureMap::new(uniform_tensor(&mut seeded(seed), &[2, 2, 2], 1.0)).unwrap();
        let b = feature_map::encode(&f).unwrap();
        let cut = cut.min(b.len());
        prop_assert!(feature_map::decode(&b[..b.len() - cut]).is_err());
    }
}

#[test]
fn normalized_volume_file_keeps_moments() {
    let mut rng = seeded(4);
    let f1 = FeatureMap::new(uniform_tensor(&mut rng, &[3, 3, 4], 1.0)).unwrap();
    let f2 = FeatureMap::new(uniform_tensor(&mut rng, &[3, 3, 4], 1.0)).unwrap();
    let c = normalize_volume(&dot_correlation(&f1, &f2).unwrap(), &CfaParams::identity(4, 1)).unwrap();
    let back = volume::decode(&volume::encode(&c).unwrap()).unwrap();
    let (mu, var) = craft_core::tensor::moments(back.values().data());
    assert!(mu.abs() < 1e-6 && (var - 1.0).abs() < 1e-5, "{mu} {var}");
    assert_eq!(back.kind(), VolumeKind::NormalizedDot);
}

#[test]
fn errors_carry_offsets() {
    let err = volume::decode(b"CRCV\x07").unwrap_err();
    assert!(matches!(err, FormatError::Invalid { offset: 4, .. }), "{err}");
    assert!(err.to_string().contains("byte 4"));
}
