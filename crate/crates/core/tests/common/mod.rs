#![allow(dead_code)]

use std::sync::Arc;

use volfx_core::playback::{Playback, Resources};
use volfx_core::project::Project;
use volfx_core::synth::{GroundTruth, SynthScene};
use volfx_core::MemorySequence;

/// Red disk on a circle, blue disk sliding along x, green square at rest.
pub fn demo_scene(frames: u32) -> SynthScene {
    let spec = serde_json::json!({
        "frames": frames,
        "seed": 7,
        "background": {"depth_mm": 2000, "color": [30, 30, 30], "texture": 4},
        "primitives": [
            {"name": "red", "shape": "disk", "color": [220, 20, 20], "radius_px": 14,
             "circle": {"center": [0.0, 0.0, 1.5], "radius_m": 0.2, "period_frames": 90.0}},
            {"name": "blue", "shape": "disk", "color": [20, 20, 220], "radius_px": 12,
             "path": [{"frame": 0, "world": [-0.4, 0.25, 1.6]},
                      {"frame": frames - 1, "world": [0.4, 0.25, 1.6]}],
             "occlusions": [{"start": 40, "end": 49}]},
            {"name": "green", "shape": "square", "color": [20, 200, 20], "radius_px": 10,
             "path": [{"frame": 0, "pixel": [500.0, 120.0], "depth_mm": 1800}]}
        ]
    });
    SynthScene::new(serde_json::from_value(spec).unwrap()).unwrap()
}

pub fn demo_project() -> Project {
    let doc = serde_json::json!({
        "projver": 1,
        "sequence": "demo.rvv",
        "camera": {"mode": "orbit", "target": [0.0, 0.0, 1.5], "radius": 1.5, "period_frames": 120,
                   "elevation_deg": 20.0},
        "trackers": [
            {"kind": "color", "name": "obj_1", "reference_rgb": [220, 20, 20]},
            {"kind": "color", "name": "obj_2", "reference_rgb": [20, 20, 220]},
            {"kind": "stationary", "name": "anchor_1", "position": [0.0, 0.0, 1.5]}
        ],
        "params": [
            {"kind": "distance", "operands": ["obj_1", "obj_2"]},
            {"kind": "angle", "operands": ["obj_1", "anchor_1", "obj_2"]},
            {"kind": "area3", "operands": ["obj_1", "obj_2", "anchor_1"]},
            {"kind": "speed", "operands": ["obj_1"]},
            {"kind": "distance", "operands": ["obj_1", "anchor_1"]}
        ],
        "objects": [
            {"id": "label_1", "kind": "text", "template": "PositionX: ${obj_1.x}"},
            {"id": "label_2", "kind": "text", "template": "v = ${obj_2.speed} m/s"},
            {"id": "ring", "kind": "highlight", "shape": "sphere"},
            {"id": "panel", "kind": "visual", "source": "chart://angle", "series": "angle_graph"},
            {"id": "link_1", "kind": "link", "a": "obj_1", "b": "obj_2"},
            {"id": "box_2", "kind": "highlight", "shape": "box"}
        ],
        "bindings": [
            {"object": "label_1", "tracker": "obj_1"},
            {"object": "label_2", "tracker": "obj_2"},
            {"object": "ring", "tracker": "obj_1"},
            {"object": "panel", "tracker": "anchor_1", "offset": [0.0, -0.3, 0.0]},
            {"object": "box_2", "tracker": "obj_2"}
        ],
        "property_bindings": [
            {"object": "ring", "property": "scale", "source": "distance_1", "a": 0.2, "b": 0.05},
            {"object": "box_2", "property": "opacity", "source": "angle_1 / 180"}
        ],
        "effects": [
            {"id": "trail", "effect": "trajectory", "tracker": "obj_1"},
            {"id": "ghosts", "effect": "ghost", "tracker": "obj_2", "cadence_frames": 30},
            {"id": "angle_graph", "effect": "graph", "variable": "angle_1", "window_frames": 60}
        ]
    });
    serde_json::from_value(doc).unwrap()
}

pub fn memory_resources(scene: &SynthScene) -> (Resources, GroundTruth) {
    let (seq, truth) = scene.generate();
    let res = Resources { source: Arc::new(seq) as Arc<dyn volfx_core::FrameSource>, pose: None, background: None };
    (res, truth)
}

pub fn demo_playback(frames: u32) -> Playback {
    let (res, _) = memory_resources(&demo_scene(frames));
    Playback::new(demo_project(), res).unwrap()
}

pub fn sequence_of(scene: &SynthScene) -> MemorySequence {
    scene.generate().0
}
