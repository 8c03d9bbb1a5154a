mod common;

use volfx_core::playback::{EditScope, PlayState, Playback, SelectMode};
use volfx_core::scene::ObjectBody;
use volfx_core::{Pixel, Project};

const FRAMES: u32 = 150;

fn fresh_stream(n: u32) -> Vec<String> {
    let mut pb = common::demo_playback(FRAMES);
    let mut out = vec![pb.snapshot().to_json()];
    for _ in 0..n {
        out.push(pb.step().unwrap().snapshot.to_json());
    }
    out
}

#[test]
fn two_fresh_runs_are_identical() {
    assert_eq!(fresh_stream(FRAMES - 1), fresh_stream(FRAMES - 1));
}

#[test]
fn seek_matches_fresh_stepping() {
    let reference = fresh_stream(FRAMES - 1);
    let mut pb = common::demo_playback(FRAMES);
    for n in [0, 17, 60, 149, 3, 90, 31, 30, 29, 149, 0] {
        let got = pb.seek(n).unwrap().snapshot.to_json();
        assert_eq!(got, reference[n as usize], "seek({n})");
    }
}

#[test]
fn seek_then_step_continues_the_monotone_stream() {
    let reference = fresh_stream(80);
    let mut pb = common::demo_playback(FRAMES);
    pb.seek(70).unwrap();
    pb.seek(12).unwrap();
    for f in 13..=80 {
        assert_eq!(pb.step().unwrap().snapshot.to_json(), reference[f]);
    }
}

#[test]
fn step_at_end_pauses() {
    let mut pb = common::demo_playback(40);
    pb.seek(38).unwrap();
    pb.play();
    assert_eq!(pb.state(), PlayState::Playing);
    assert_eq!(pb.step().unwrap().snapshot.frame, 39);
    assert_eq!(pb.state(), PlayState::Paused);
    assert_eq!(pb.step().unwrap().snapshot.frame, 39);
    assert!(pb.seek(40).is_err());
}

#[test]
fn paused_snapshot_is_stable() {
    let mut pb = common::demo_playback(40);
    pb.seek(10).unwrap();
    let a = pb.snapshot().to_json();
    let b = pb.seek(10).unwrap().snapshot.to_json();
    assert_eq!(a, b);
}

#[test]
fn history_edit_equals_project_that_had_it_all_along() {
    // Add a tracker by clicking mid-clip, then compare with a fresh session
    // built from the edited project.
    let mut pb = common::demo_playback(60);
    pb.seek(25).unwrap();
    let truth = common::demo_scene(60).render_frame(25).1;
    let green = truth[2].centroid_px.unwrap();
    let name = pb.select(SelectMode::Color, Pixel::new(green[0], green[1]), None).unwrap();
    assert_eq!(name, "obj_3");
    let edited = pb.snapshot().to_json();

    let project: Project = pb.project().clone();
    let (res, _) = common::memory_resources(&common::demo_scene(60));
    let mut fresh = Playback::new(project, res).unwrap();
    assert_eq!(fresh.seek(25).unwrap().snapshot.to_json(), edited);
}

#[test]
fn scene_edit_keeps_history_and_rejects_bad_templates() {
    let mut pb = common::demo_playback(40);
    pb.seek(20).unwrap();
    pb.edit(EditScope::Scene, |p| {
        let obj = p.scene.object_mut("label_1").unwrap();
        obj.kind = serde_json::from_value(serde_json::json!({"kind": "text", "template": "d=${distance_1}"})).unwrap();
        Ok::<_, volfx_core::PlaybackError>(())
    })
    .unwrap();
    let ObjectBody::Text { text, .. } = &pb.snapshot().object("label_1").unwrap().body else { panic!() };
    let d = pb.current().registry.value("distance_1").unwrap();
    assert_eq!(text, &format!("d={}", volfx_core::expr::format_fixed(d, 2)));

    let before = pb.snapshot().to_json();
    let err = pb.edit(EditScope::Scene, |p| {
        let obj = p.scene.object_mut("label_1").unwrap();
        obj.kind = serde_json::from_value(serde_json::json!({"kind": "text", "template": "${nope_9}"})).unwrap();
        Ok::<_, volfx_core::PlaybackError>(())
    });
    assert!(err.unwrap_err().to_string().contains("nope_9"));
    assert_eq!(pb.snapshot().to_json(), before);
}

#[test]
fn snapshots_never_contain_nan() {
    let mut pb = common::demo_playback(60);
    for _ in 0..59 {
        let json = pb.step().unwrap().snapshot.to_json();
        assert!(!json.contains("NaN") && !json.contains("inf"));
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["type"], "Snapshot");
    }
}

#[test]
fn validity_counts_occlusion() {
    let pb = common::demo_playback(100);
    let v = pb.validity("obj_2", 0..100).unwrap();
    let lost: Vec<u32> = (0..100).filter(|&f| !v[f as usize]).collect();
    assert_eq!(lost, (40..=49).collect::<Vec<_>>());
    assert!(pb.validity("obj_2", 5..5).is_err());
}
