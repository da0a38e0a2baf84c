use std::f64::consts::PI;

use proptest::prelude::*;
use qumos::data::{downsample, prepare, DatasetName};

proptest! {
    #[test]
    fn downsampling_keeps_mass_and_range(pixels in prop::collection::vec(any::<u8>(), 784)) {
        let small = downsample(&pixels, 28, 28).unwrap();
        let big_mean = pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / 784.0 * PI / 255.0;
        prop_assert!((small.iter().sum::<f64>() / 16.0 - big_mean).abs() < 1e-9);
        prop_assert!(small.iter().all(|v| (0.0..=PI).contains(v)));
    }
}

#[test]
fn bad_shapes_are_rejected() {
    assert!(downsample(&[0; 784], 27, 29).is_err());
    assert!(downsample(&[0; 100], 28, 28).is_err());
}

#[test]
fn synthetic_sets_are_balanced_and_in_range() {
    for name in [DatasetName::Synth2, DatasetName::Synth4] {
        let (train, test) = prepare(name, std::path::Path::new("."), 1).unwrap();
        assert_eq!(train.n_classes(), name.n_classes());
        for set in [&train, &test] {
            for i in 0..set.len() {
                assert!(set.features(i).iter().all(|v| (0.0..=PI).contains(v)));
            }
            let mut counts = vec![0usize; set.n_classes()];
            set.labels().iter().for_each(|&l| counts[l] += 1);
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{name}: {counts:?}");
        }
    }
}

#[test]
fn mnist2_when_present() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let Ok((train, test)) = prepare(DatasetName::Mnist2, &dir, 0) else {
        return;
    };
    assert_eq!(train.n_classes(), 2);
    assert!(test.len() >= 300);
    // First 300 test images are reproducible across seeds.
    let (_, again) = prepare(DatasetName::Mnist2, &dir, 5).unwrap();
    assert_eq!(test.features(0), again.features(0));
}
