use lesiontrack::field::binary_centroid;
use lesiontrack::metrics::dice;
use lesiontrack::prompt::Prompt;
use lesiontrack::registration::RegistrationConfig;
use lesiontrack::synth::{phantom, PhantomSpec};
use lesiontrack::tracking::{
    segment_single, track, BaselineSegmenter, LoadedSeries, SegFlag, TrackingConfig,
};
use lesiontrack::Point3;

fn spec() -> PhantomSpec {
    PhantomSpec {
        shape: [48; 3],
        lesions: 2,
        radius_mm: [5.0, 6.0],
        ..Default::default()
    }
}

#[test]
fn baseline_segmenter_on_point_prompts() {
    let ph = phantom(&spec(), 11).unwrap();
    for les in &ph.lesions {
        let p = Prompt::Point(Point3(les.center_mm));
        let out = segment_single(&ph.image, &p, &BaselineSegmenter::default(), [32; 3]).unwrap();
        let d = dice(&out.mask, &ph.mask.binary(les.label)).unwrap();
        assert!(d > 0.85, "lesion {} dice {d}", les.label);
    }
}

#[test]
fn prompt_on_background_is_flagged() {
    let ph = phantom(&spec(), 12).unwrap();
    // a corner of the volume is air
    let p = Prompt::Point(Point3([3.0, 3.0, 3.0]));
    let out = segment_single(&ph.image, &p, &BaselineSegmenter::default(), [32; 3]).unwrap();
    assert!(out.flags.contains(&SegFlag::LowConfidence));
    for l in ph.mask.labels() {
        assert_eq!(dice(&out.mask, &ph.mask.binary(l)).unwrap(), 0.0);
    }
}

#[test]
fn duplicated_scan_keeps_the_lesion() {
    let ph = phantom(&spec(), 13).unwrap();
    let series = LoadedSeries::from_images("dup", vec![ph.image.clone(), ph.image.clone()]);
    let prompts: Vec<(u16, Prompt)> = ph
        .lesions
        .iter()
        .map(|l| (l.label, Prompt::Point(Point3(l.center_mm))))
        .collect();
    let cfg = TrackingConfig {
        patch_size: [32; 3],
        registration: RegistrationConfig {
            work_shape: [24; 3],
            levels: vec![2, 1],
            iters_per_level: vec![20, 10],
            ..Default::default()
        },
        ..Default::default()
    };
    let r = track(&series, &prompts, &BaselineSegmenter::default(), &cfg).unwrap();
    assert_eq!(r.report.empty_count(), 0);
    for l in ph.mask.labels() {
        let a = r.masks[0].binary(l);
        let b = r.masks[1].binary(l);
        assert!(dice(&a, &b).unwrap() > 0.95);
        let shift = binary_centroid(&a).unwrap().distance(&binary_centroid(&b).unwrap());
        assert!(shift < 1.0);
    }
}
