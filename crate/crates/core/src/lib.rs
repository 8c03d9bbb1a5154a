//! Object-centric augmentation of recorded RGB-D sequences.
//!
//! The pipeline runs once per frame: decode the frame, resolve every tracker
//! to a 3D point, commit the frame's variable registry, advance the motion
//! effects and evaluate the scene into a self-contained [`SceneSnapshot`].

pub mod camera;
pub mod container;
pub mod effects;
pub mod expr;
pub mod frame;
pub mod geometry;
pub mod kinematics;
pub mod playback;
pub mod ply;
pub mod project;
pub mod scene;
pub mod snapshot;
pub mod synth;
pub mod tracking;

pub use camera::{CameraIntrinsics, Pixel};
pub use container::{load_sequence, FrameSource, MemorySequence};
pub use frame::{unproject, PointCloud, RgbdFrame};
pub use geometry::{Quat, Rgb8, Rgba, Vec3};
pub use playback::{Playback, PlaybackError, Resources};
pub use project::Project;
pub use snapshot::SceneSnapshot;
