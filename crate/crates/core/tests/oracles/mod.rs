//! Independent reference computations. Nothing here calls into the engine's
//! math: distances use nested `hypot`, angles go through `atan2`, triangle
//! areas through projected shoelace sums, and speeds are recomputed from the
//! raw scripted tracks.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use volfx_core::kinematics::{Kinematics, ParamKind, ParamSpec};
use volfx_core::tracking::{TrackedPoint, TrackerKind, TrackerSet};
use volfx_core::Vec3;

pub type P = [f64; 3];

pub fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn distance(a: P, b: P) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1]).hypot(d[2])
}

pub fn angle_deg(a: P, v: P, c: P) -> Option<f64> {
    let (u, w) = (sub(a, v), sub(c, v));
    let nu = u[0].hypot(u[1]).hypot(u[2]);
    let nw = w[0].hypot(w[1]).hypot(w[2]);
    if nu <= 1e-9 || nw <= 1e-9 {
        return None;
    }
    let cx = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
    let sin = cx[0].hypot(cx[1]).hypot(cx[2]);
    let cos = u[0] * w[0] + u[1] * w[1] + u[2] * w[2];
    Some(sin.atan2(cos) * 180.0 / std::f64::consts::PI)
}

/// Signed shoelace area of a 2D polygon.
pub fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]).sum::<f64>() / 2.0
}

/// Triangle area from its three axis-plane shadows.
pub fn area3(a: P, b: P, c: P) -> f64 {
    let shadow = |i: usize, j: usize| shoelace(&[[a[i], a[j]], [b[i], b[j]], [c[i], c[j]]]);
    let (xy, yz, zx) = (shadow(0, 1), shadow(1, 2), shadow(2, 0));
    xy.hypot(yz).hypot(zx)
}

pub fn area4(a: P, b: P, c: P, d: P) -> f64 {
    area3(a, b, c) + area3(a, c, d)
}

/// Endpoint speed on a raw track: displacement between frames `t - 15` and `t` over
/// half a second, with the per-axis absolute rates.
pub fn speed(track: &[Option<P>], t: usize) -> Option<(f64, P)> {
    let t0 = t.checked_sub(15)?;
    let (p0, p1) = (track[t0]?, track[t]?);
    let d = sub(p1, p0);
    Some((distance(p1, p0) / 0.5, [d[0].abs() / 0.5, d[1].abs() / 0.5, d[2].abs() / 0.5]))
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    let scale = got.abs().max(want.abs());
    if scale == 0.0 {
        0.0
    } else {
        (got - want).abs() / scale.max(1e-300)
    }
}

fn rand_point(rng: &mut ChaCha8Rng) -> P {
    [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.3..4.0)]
}

/// Random rotation (unit quaternion from four gaussians) as a 3x3 matrix.
pub fn rand_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let mut q = [0.0f64; 4];
    loop {
        for c in &mut q {
            *c = rng.gen_range(-1.0..1.0);
        }
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            q.iter_mut().for_each(|c| *c /= n);
            break;
        }
    }
    let [x, y, z, w] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn apply(r: &[[f64; 3]; 3], t: P, p: P) -> P {
    let m = |i: usize| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i];
    [m(0), m(1), m(2)]
}

#[derive(Debug, Default, Clone)]
pub struct OpStats {
    pub cases: usize,
    pub max_rel: f64,
    /// Availability disagreements or errors above tolerance.
    pub failures: Vec<String>,
}

impl OpStats {
    fn check(&mut self, label: &str, got: Option<f64>, want: Option<f64>, tol: f64) {
        self.cases += 1;
        match (got, want) {
            (Some(g), Some(w)) => {
                let e = rel_err(g, w);
                self.max_rel = self.max_rel.max(e);
                if e > tol && (g - w).abs() > 1e-12 {
                    self.failures.push(format!("{label}: got {g}, want {w}"));
                }
            }
            (None, None) => {}
            _ => self.failures.push(format!("{label}: availability got {got:?}, want {want:?}")),
        }
    }
}

pub const OPS: [&str; 5] = ["speed", "distance", "angle", "area3", "area4"];

/// Run `configs` random multi-tracker clips through [`Kinematics`] and compare
/// every published value against the oracles.
pub fn kinematics_suite(seed: u64, configs: usize, tol: f64) -> BTreeMap<&'static str, OpStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: BTreeMap<&'static str, OpStats> = OPS.iter().map(|o| (*o, OpStats::default())).collect();
    let names = ["t0", "t1", "t2", "t3"];
    for cfg in 0..configs {
        let frames = rng.gen_range(16..40);
        let drop_p = if cfg % 4 == 0 { 0.0 } else { rng.gen_range(0.0..0.3) };
        let tracks: Vec<Vec<Option<P>>> = names
            .iter()
            .map(|_| {
                let start = rand_point(&mut rng);
                let vel = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.05..0.05)];
                (0..frames)
                    .map(|f| {
                        let jitter =
                            [rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01), rng.gen_range(-0.01..0.01)];
                        let p = [
                            start[0] + vel[0] * f as f64 + jitter[0],
                            start[1] + vel[1] * f as f64 + jitter[1],
                            start[2] + vel[2] * f as f64 + jitter[2],
                        ];
                        (!rng.gen_bool(drop_p)).then_some(p)
                    })
                    .collect()
            })
            .collect();

        let mut set = TrackerSet::new();
        for n in names {
            set.insert(Some(n.into()), TrackerKind::Stationary { position: Vec3::ZERO }).unwrap();
        }
        let mut kin = Kinematics::new();
        let spec = |kind, ops: &[&str], name: &str| ParamSpec {
            kind,
            operands: ops.iter().map(|s| s.to_string()).collect(),
            name: Some(name.into()),
        };
        kin.add(spec(ParamKind::Distance, &["t0", "t1"], "d"), &set).unwrap();
        kin.add(spec(ParamKind::Angle, &["t0", "t1", "t2"], "ang"), &set).unwrap();
        kin.add(spec(ParamKind::Area3, &["t0", "t1", "t2"], "tri"), &set).unwrap();
        kin.add(spec(ParamKind::Area4, &["t0", "t1", "t2", "t3"], "quad"), &set).unwrap();

        for f in 0..frames {
            let points: Vec<TrackedPoint> = names
                .iter()
                .zip(&tracks)
                .map(|(n, tr)| TrackedPoint {
                    tracker: n.to_string(),
                    frame: f as u32,
                    world: tr[f].map(Vec3::from).unwrap_or(Vec3::ZERO),
                    valid: tr[f].is_some(),
                })
                .collect();
            let reg = kin.commit_frame(f as u32, &points);
            let at = |i: usize| tracks[i][f];
            let label = |op: &str| format!("config {cfg} frame {f} {op}");

            for (i, n) in names.iter().enumerate() {
                let want = speed(&tracks[i], f);
                let s = stats.get_mut("speed").unwrap();
                s.check(&label("speed"), reg.value(&format!("{n}.speed")), want.map(|w| w.0), tol);
                for (ax, c) in ["x", "y", "z"].iter().zip(0..) {
                    s.check(&label("speed axis"), reg.value(&format!("{n}.speed.{ax}")), want.map(|w| w.1[c]), tol);
                }
            }
            let both = |a: Option<P>, b: Option<P>| a.zip(b);
            stats.get_mut("distance").unwrap().check(
                &label("distance"),
                reg.value("d"),
                both(at(0), at(1)).map(|(a, b)| distance(a, b)),
                tol,
            );
            let tri = at(0).zip(at(1)).zip(at(2)).map(|((a, b), c)| (a, b, c));
            stats.get_mut("angle").unwrap().check(
                &label("angle"),
                reg.value("ang"),
                tri.and_then(|(a, b, c)| angle_deg(a, b, c)),
                tol,
            );
            stats.get_mut("area3").unwrap().check(
                &label("area3"),
                reg.value("tri"),
                tri.map(|(a, b, c)| area3(a, b, c)),
                tol,
            );
            let quad = tri.zip(at(3)).map(|((a, b, c), d)| area4(a, b, c, d));
            stats.get_mut("area4").unwrap().check(&label("area4"), reg.value("quad"), quad, tol);
        }
    }
    stats
}

/// Random convex quad in a random plane: (3D vertices, in-plane shoelace area).
pub fn planar_quad(rng: &mut ChaCha8Rng) -> ([P; 4], f64) {
    let mut angles: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let (rx, ry) = (rng.gen_range(0.05..1.5), rng.gen_range(0.05..1.5));
    let poly: Vec<[f64; 2]> = angles.iter().map(|a| [rx * a.cos(), ry * a.sin()]).collect();
    let area = shoelace(&poly).abs();
    let r = rand_rotation(rng);
    let t = rand_point(rng);
    let pts: Vec<P> = poly.iter().map(|q| apply(&r, t, [q[0], q[1], 0.0])).collect();
    ([pts[0], pts[1], pts[2], pts[3]], area)
}

/// Clean synthetic clips (no depth noise, no holes) with the primitives to
/// track on each, for the color-tracking oracle.
pub fn clean_clips(frames: u32) -> Vec<(volfx_core::synth::SynthScene, Vec<(String, [u8; 3])>)> {
    let mut out = Vec::new();
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let colors: [[u8; 3]; 3] = [[220, 20, 20], [20, 20, 220], [20, 200, 20]];
        let mut prims = Vec::new();
        for (i, c) in colors.iter().enumerate() {
            let r = rng.gen_range(6.0..20.0);
            let shape = if rng.gen_bool(0.5) { "disk" } else { "square" };
            let depth = rng.gen_range(800.0..2500.0);
            let p0 = [rng.gen_range(60.0..580.0), rng.gen_range(60.0..516.0)];
            let p1 = [rng.gen_range(60.0..580.0), rng.gen_range(60.0..516.0)];
            prims.push(serde_json::json!({
                "name": format!("p{i}"), "shape": shape, "color": c, "radius_px": r,
                "path": [{"frame": 0, "pixel": p0, "depth_mm": depth},
                         {"frame": frames - 1, "pixel": p1, "depth_mm": depth + rng.gen_range(-300.0..300.0)}]
            }));
        }
        let spec = serde_json::json!({
            "frames": frames, "seed": seed,
            "background": {"depth_mm": 3000, "color": [40, 40, 40], "texture": 6},
            "primitives": prims
        });
        let scene = volfx_core::synth::SynthScene::new(serde_json::from_value(spec).unwrap()).unwrap();
        let targets = colors.iter().enumerate().map(|(i, c)| (format!("p{i}"), *c)).collect();
        out.push((scene, targets));
    }
    out
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CentroidAgreement {
    pub visible: usize,
    pub within: usize,
    pub max_px: f64,
    pub max_mm: f64,
}

impl CentroidAgreement {
    pub fn fraction(&self) -> f64 {
        self.within as f64 / self.visible.max(1) as f64
    }
}

/// Compare the color tracker against ground truth on every frame where the
/// primitive is visible: centroid within 1 px and depth within 1 mm.
pub fn color_agreement(scene: &volfx_core::synth::SynthScene, targets: &[(String, [u8; 3])]) -> CentroidAgreement {
    use volfx_core::tracking::color::{track_color, ColorTrackerState};
    let mut acc = CentroidAgreement::default();
    let k = *scene.intrinsics();
    for f in 0..scene.frame_count() {
        let (frame, truth) = scene.render_frame(f);
        for (name, rgb) in targets {
            let i = scene.spec().primitives.iter().position(|p| &p.name == name).unwrap();
            let t = &truth[i];
            if !t.visible {
                continue;
            }
            acc.visible += 1;
            let obs = track_color(&frame, &k, &ColorTrackerState::new((*rgb).into()));
            let (Some(c), Some(d), Some(tc)) = (obs.centroid, obs.depth_mm, t.centroid_px) else { continue };
            let px = (c.u - tc[0]).hypot(c.v - tc[1]);
            let mm = (d - f64::from(t.depth_mm)).abs();
            acc.max_px = acc.max_px.max(px);
            acc.max_mm = acc.max_mm.max(mm);
            if px <= 1.0 && mm <= 1.0 {
                acc.within += 1;
            }
        }
    }
    acc
}

const VARS: [&str; 6] = ["obj_1.x", "obj_2.speed", "distance_1", "angle_1", "a", "obj_1.speed.z"];

/// Random expression source text in a deliberately noisy surface syntax:
/// redundant parentheses, mixed whitespace and the unicode operator forms.
pub fn random_expr_src(rng: &mut ChaCha8Rng, depth: u32) -> String {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        return match rng.gen_range(0..4) {
            0 => format!("{}", rng.gen_range(0..1000)),
            1 => format!("{:.3}", rng.gen_range(0.0..100.0)),
            2 => format!("{}e{}", rng.gen_range(1..9), rng.gen_range(-3..4)),
            _ => VARS[rng.gen_range(0..VARS.len())].to_string(),
        };
    }
    let ws = |rng: &mut ChaCha8Rng| [" ", "", "  ", "\t"][rng.gen_range(0..4)];
    match rng.gen_range(0..10) {
        0 => format!("-{}", random_expr_src(rng, depth - 1)),
        1 => format!("({})", random_expr_src(rng, depth - 1)),
        2 => "time()".to_string(),
        _ => {
            let op = ["+", "-", "*", "/", "×", "÷", "−"][rng.gen_range(0..7)];
            let (a, b) = (random_expr_src(rng, depth - 1), random_expr_src(rng, depth - 1));
            let (w1, w2) = (ws(rng), ws(rng));
            format!("({a}){w1}{op}{w2}({b})")
        }
    }
}

/// A corpus of template strings mixing literals, escapes and holes.
pub fn template_corpus(seed: u64, n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut s = String::new();
            for _ in 0..rng.gen_range(1..5) {
                match rng.gen_range(0..5) {
                    0 => s.push_str("Speed: "),
                    1 => s.push_str(" m/s $$ ünïcode ✓ "),
                    2 => s.push_str("cost $5 "),
                    _ => {
                        let depth = rng.gen_range(0..5);
                        s.push_str(&format!("${{{}}}", random_expr_src(&mut rng, depth)));
                    }
                }
            }
            s
        })
        .collect()
}

/// Bytes drawn mostly from the template grammar's alphabet.
pub fn random_bytes(rng: &mut ChaCha8Rng) -> Vec<u8> {
    const ALPHA: &[u8] = b"${}()+-*/.0123456789eE_abxyz ";
    let len = rng.gen_range(0..48);
    (0..len).map(|_| if rng.gen_bool(0.8) { ALPHA[rng.gen_range(0..ALPHA.len())] } else { rng.gen() }).collect()
}

/// Walk a playback from frame 0 to the end and check every effect against
/// a replay of its rules over the observed tracker validity and registries.
/// Returns the number of (frame, effect) checks made.
pub fn check_effect_timing(pb: &mut volfx_core::Playback) -> Result<usize, String> {
    use volfx_core::effects::{EffectGeometry, EffectKind};

    let effects = pb.project().effects.clone();
    let mut valid: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    let mut history: Vec<std::sync::Arc<volfx_core::kinematics::VariableRegistry>> = Vec::new();
    let mut checks = 0;
    let len = pb.len();
    for f in 0..len {
        let out = if f == 0 { pb.seek(0) } else { pb.step() }.map_err(|e| e.to_string())?;
        for p in &out.points {
            valid.entry(p.tracker.clone()).or_default().push(p.valid);
        }
        history.push(out.registry.clone());
        for spec in &effects {
            let geo = out.snapshot.effects.iter().find(|g| geo_id(g) == spec.id).ok_or("missing effect")?;
            let observed = (spec.start_frame..=f).filter(|_| spec.start_frame <= f);
            checks += 1;
            match (&spec.kind, geo) {
                (EffectKind::Trajectory { tracker, ttl_frames, .. }, EffectGeometry::Trajectory { markers, .. }) => {
                    let v = &valid[tracker];
                    let want: Vec<u32> = observed.filter(|&b| v[b as usize] && f - b < *ttl_frames).collect();
                    let got: Vec<u32> = markers.iter().map(|m| f - m.age).collect();
                    if got != want {
                        return Err(format!("{} frame {f}: markers born {got:?}, want {want:?}", spec.id));
                    }
                }
                (
                    EffectKind::Ghost { tracker, cadence_frames, max_ghosts, .. },
                    EffectGeometry::Ghost { ghosts, .. },
                ) => {
                    let v = &valid[tracker];
                    let mut want: Vec<u32> =
                        observed.filter(|&b| (b - spec.start_frame) % cadence_frames == 0 && v[b as usize]).collect();
                    if let Some(m) = max_ghosts {
                        want = want.split_off(want.len().saturating_sub(*m));
                    }
                    want.reverse();
                    let got: Vec<u32> = ghosts.iter().map(|g| g.frame).collect();
                    if got != want {
                        return Err(format!("{} frame {f}: ghosts {got:?}, want {want:?}", spec.id));
                    }
                }
                (EffectKind::Graph { variable, window_frames, .. }, EffectGeometry::Graph { samples, .. }) => {
                    let frames: Vec<u32> = observed.collect();
                    let keep = &frames[frames.len().saturating_sub(*window_frames as usize)..];
                    if samples.len() != keep.len() {
                        return Err(format!("{} frame {f}: {} samples, want {}", spec.id, samples.len(), keep.len()));
                    }
                    for (s, &b) in samples.iter().zip(keep) {
                        let want = history[b as usize].value(variable).map(f64::to_bits);
                        if s.frame != b || s.value.map(f64::to_bits) != want {
                            return Err(format!("{} frame {f}: sample {s:?} differs from registry at {b}", spec.id));
                        }
                    }
                }
                _ => return Err(format!("{}: geometry kind mismatch", spec.id)),
            }
        }
    }
    Ok(checks)
}

fn geo_id(g: &volfx_core::effects::EffectGeometry) -> &str {
    use volfx_core::effects::EffectGeometry::*;
    match g {
        Trajectory { id, .. } | Ghost { id, .. } | Graph { id, .. } => id,
    }
}

/// Minimum of dot(local +z, direction to camera) over every billboarded
/// object on every frame, and the number of (frame, object) pairs checked.
pub fn billboard_alignment(pb: &mut volfx_core::Playback) -> Result<(f64, usize), String> {
    use volfx_core::scene::{ObjectBody, ObjectKind};

    let billboarded: Vec<String> = pb
        .project()
        .scene
        .objects
        .iter()
        .filter(|o| {
            matches!(o.kind, ObjectKind::Text { billboard: true, .. } | ObjectKind::Visual { billboard: true, .. })
        })
        .map(|o| o.id.clone())
        .collect();
    let (mut worst, mut n) = (f64::INFINITY, 0);
    for f in 0..pb.len() {
        let out = if f == 0 { pb.seek(0) } else { pb.step() }.map_err(|e| e.to_string())?;
        let snap = &out.snapshot;
        for id in &billboarded {
            let Some(o) = snap.object(id) else { continue };
            let (ObjectBody::Text { position, orientation, .. } | ObjectBody::Visual { position, orientation, .. }) =
                &o.body
            else {
                return Err(format!("{id}: unexpected body"));
            };
            let Some(to_cam) = (snap.camera - *position).normalized() else { continue };
            worst = worst.min(orientation.rotate(Vec3::Z).dot(to_cam));
            n += 1;
        }
    }
    Ok((worst, n))
}
