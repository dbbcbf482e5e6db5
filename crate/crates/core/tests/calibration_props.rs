//! Calibration post-conditions over randomized manifests.

mod support;

use proptest::prelude::*;
use vfc_core::calibration::calibrate_filter;

#[test]
fn hundred_random_manifests_satisfy_post_conditions() {
    for b in [2, 16, 256] {
        let bad = support::calibration_violations(100, b);
        assert!(bad.is_empty(), "{bad:#?}");
    }
}

#[test]
fn table_example_caps_each_concept() {
    use vfc_core::corpus::*;
    let mut m = DatasetManifest::default();
    m.videos = (0..3)
        .map(|i| VideoRecord {
            video_id: format!("v{i}"),
            split: Split::Train,
        })
        .collect();
    for (v, p) in [("v0", "run"), ("v1", "run"), ("v2", "eat")] {
        m.captions.push(CaptionRecord::new(v, format!("someone {p}s"), verb_phrases(&[p])));
    }
    let gens = [("run", 5), ("eat", 1), ("jump", 3)];
    for (p, n) in gens {
        for k in 0..n {
            m.generations.push(GeneratedCaption {
                parent_video_id: format!("v{}", k % 3),
                parent_caption: m.captions[k % 3].text.clone(),
                text: format!("someone {p}s {k}"),
                kind: GenerationKind::HardNegative,
                backend: GenBackend::RandomVerb,
                verb_phrases: verb_phrases(&[p]),
                kept: true,
            });
        }
    }
    let (out, _) = calibrate_filter(&m, 8);
    let counts = support::scan_counts(&out);
    assert_eq!(counts["run"], (2, 2));
    assert_eq!(counts["eat"], (1, 1));
    assert_eq!(counts.get("jump").copied().unwrap_or_default(), (0, 0));
}

proptest! {
    #[test]
    fn kept_never_exceeds_supply(seed in any::<u64>(), b in 2usize..64) {
        let m = support::random_manifest(seed);
        let (once, _) = calibrate_filter(&m, b);
        for (concept, (s, g)) in support::scan_counts(&once) {
            prop_assert!(g <= s, "{} kept {} > {}", concept, g, s);
        }
        prop_assert_eq!(calibrate_filter(&once, b).0, once);
    }
}
