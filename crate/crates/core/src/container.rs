//! Sequence container (`RVV1`) and the frame-source abstraction.
//!
//! Layout, little-endian:
//!
//! ```text
//! "RVV1" | u16 width | u16 height | u16 fps | f32 fx fy cx cy | u32 frame_count
//! per frame: width*height u16 depth (mm), then width*height*3 u8 RGB
//! ```

use std::fs::File;
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use thiserror::Error;

use crate::camera::{CameraError, CameraIntrinsics};
use crate::frame::{ColorFrame, DepthFrame, RgbdFrame, FPS};
use crate::geometry::Rgb8;

pub const MAGIC: &[u8; 4] = b"RVV1";
pub const HEADER_LEN: usize = 30;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic {0:?}, expected \"RVV1\"")]
    BadMagic([u8; 4]),
    #[error("container header truncated ({0} of {HEADER_LEN} bytes)")]
    TruncatedHeader(usize),
    #[error("unsupported frame rate {0} (only 30 fps sequences are accepted)")]
    UnsupportedFps(u16),
    #[error("header intrinsics rejected: {0}")]
    Intrinsics(#[from] CameraError),
    #[error("frame {index} truncated: payload needs {expected} bytes, {available} present")]
    TruncatedFrame { index: u32, expected: usize, available: usize },
    #[error("{0} unexpected trailing bytes after the last frame")]
    TrailingBytes(u64),
    #[error("frame {index} out of range (sequence has {len} frames)")]
    OutOfRange { index: usize, len: usize },
    #[error("frame {index} is {got_w}x{got_h}, container is {want_w}x{want_h}")]
    FrameDimensions { index: u32, got_w: u16, got_h: u16, want_w: u16, want_h: u16 },
}

impl ContainerError {
    fn io(path: &Path, source: io::Error) -> Self {
        ContainerError::Io { path: path.to_path_buf(), source }
    }
}

/// Anything that can hand out frames by index: decoded containers, in-memory
/// synthetic clips, and (later) live capture adapters.
pub trait FrameSource: Send + Sync {
    fn intrinsics(&self) -> &CameraIntrinsics;
    fn len(&self) -> usize;
    fn frame(&self, index: usize) -> Result<Arc<RgbdFrame>, ContainerError>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn frame_payload_len(k: &CameraIntrinsics) -> usize {
    k.pixel_count() * 5
}

pub fn encode_header(k: &CameraIntrinsics, frame_count: u32) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(MAGIC);
    h[4..6].copy_from_slice(&k.width.to_le_bytes());
    h[6..8].copy_from_slice(&k.height.to_le_bytes());
    h[8..10].copy_from_slice(&(FPS as u16).to_le_bytes());
    for (i, v) in [k.fx, k.fy, k.cx, k.cy].into_iter().enumerate() {
        h[10 + 4 * i..14 + 4 * i].copy_from_slice(&(v as f32).to_le_bytes());
    }
    h[26..30].copy_from_slice(&frame_count.to_le_bytes());
    h
}

pub fn decode_header(bytes: &[u8]) -> Result<(CameraIntrinsics, u32), ContainerError> {
    if bytes.len() < HEADER_LEN {
        return Err(ContainerError::TruncatedHeader(bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let f32_at = |o: usize| f64::from(f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()));
    let fps = u16_at(8);
    if u32::from(fps) != FPS {
        return Err(ContainerError::UnsupportedFps(fps));
    }
    let k = CameraIntrinsics {
        width: u16_at(4),
        height: u16_at(6),
        fx: f32_at(10),
        fy: f32_at(14),
        cx: f32_at(18),
        cy: f32_at(22),
    };
    k.validate()?;
    let count = u32::from_le_bytes(bytes[26..30].try_into().unwrap());
    Ok((k, count))
}

/// Append one frame's payload to `out`.
pub fn encode_frame_into(frame: &RgbdFrame, k: &CameraIntrinsics, out: &mut Vec<u8>) -> Result<(), ContainerError> {
    frame.check_dims(k).map_err(|m| ContainerError::FrameDimensions {
        index: frame.index,
        got_w: m.got_w,
        got_h: m.got_h,
        want_w: m.want_w,
        want_h: m.want_h,
    })?;
    out.reserve(frame_payload_len(k));
    for d in &frame.depth.data {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for c in &frame.color.data {
        out.extend_from_slice(&[c.r, c.g, c.b]);
    }
    Ok(())
}

pub fn decode_frame(payload: &[u8], index: u32, k: &CameraIntrinsics) -> RgbdFrame {
    let n = k.pixel_count();
    debug_assert_eq!(payload.len(), n * 5);
    let (depth_bytes, color_bytes) = payload.split_at(n * 2);
    let depth = depth_bytes.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
    let color = color_bytes.chunks_exact(3).map(|b| Rgb8::new(b[0], b[1], b[2])).collect();
    RgbdFrame {
        index,
        depth: DepthFrame { width: k.width, height: k.height, data: depth },
        color: ColorFrame { width: k.width, height: k.height, data: color },
    }
}

/// Streaming writer; the frame count is fixed up front so the header can be
/// written first.
pub struct ContainerWriter<W: Write> {
    out: W,
    k: CameraIntrinsics,
    expected: u32,
    written: u32,
    buf: Vec<u8>,
}

impl<W: Write> ContainerWriter<W> {
    pub fn new(mut out: W, k: CameraIntrinsics, frame_count: u32) -> io::Result<Self> {
        out.write_all(&encode_header(&k, frame_count))?;
        Ok(Self { out, k, expected: frame_count, written: 0, buf: Vec::new() })
    }

    pub fn push(&mut self, frame: &RgbdFrame) -> Result<(), ContainerError> {
        self.buf.clear();
        encode_frame_into(frame, &self.k, &mut self.buf)?;
        self.out.write_all(&self.buf).map_err(|e| ContainerError::io(Path::new("<writer>"), e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        if self.written != self.expected {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("declared {} frames, wrote {}", self.expected, self.written),
            ));
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Encode a whole clip into memory.
pub fn encode_sequence(k: &CameraIntrinsics, frames: &[RgbdFrame]) -> Result<Vec<u8>, ContainerError> {
    let mut out = encode_header(k, frames.len() as u32).to_vec();
    for f in frames {
        encode_frame_into(f, k, &mut out)?;
    }
    Ok(out)
}

pub fn write_sequence_file(path: &Path, k: &CameraIntrinsics, frames: &[RgbdFrame]) -> Result<(), ContainerError> {
    let file = File::create(path).map_err(|e| ContainerError::io(path, e))?;
    let mut w =
        ContainerWriter::new(BufWriter::new(file), *k, frames.len() as u32).map_err(|e| ContainerError::io(path, e))?;
    for f in frames {
        w.push(f)?;
    }
    w.finish().map_err(|e| ContainerError::io(path, e))?;
    Ok(())
}

fn check_payload_size(k: &CameraIntrinsics, count: u32, body_len: u64) -> Result<(), ContainerError> {
    let per = frame_payload_len(k) as u64;
    let needed = per * u64::from(count);
    if body_len < needed {
        let index = (body_len / per) as u32;
        let available = (body_len - u64::from(index) * per) as usize;
        return Err(ContainerError::TruncatedFrame { index, expected: per as usize, available });
    }
    if body_len > needed {
        return Err(ContainerError::TrailingBytes(body_len - needed));
    }
    Ok(())
}

/// A fully in-memory clip.
#[derive(Debug, Clone)]
pub struct MemorySequence {
    k: CameraIntrinsics,
    frames: Vec<Arc<RgbdFrame>>,
}

impl MemorySequence {
    pub fn new(k: CameraIntrinsics, frames: Vec<RgbdFrame>) -> Result<Self, ContainerError> {
        k.validate()?;
        let mut out = Vec::with_capacity(frames.len());
        for (i, mut f) in frames.into_iter().enumerate() {
            f.index = i as u32;
            if let Err(m) = f.check_dims(&k) {
                return Err(ContainerError::FrameDimensions {
                    index: i as u32,
                    got_w: m.got_w,
                    got_h: m.got_h,
                    want_w: m.want_w,
                    want_h: m.want_h,
                });
            }
            out.push(Arc::new(f));
        }
        Ok(Self { k, frames: out })
    }

    /// Decode an in-memory container buffer.
    pub fn decode(bytes: &[u8]) -> Result<Self, ContainerError> {
        let (k, count) = decode_header(bytes)?;
        let body = &bytes[HEADER_LEN..];
        check_payload_size(&k, count, body.len() as u64)?;
        let per = frame_payload_len(&k);
        let frames = body.chunks_exact(per).enumerate().map(|(i, p)| Arc::new(decode_frame(p, i as u32, &k))).collect();
        Ok(Self { k, frames })
    }

    pub fn encode(&self) -> Result<Vec<u8>, ContainerError> {
        let mut out = encode_header(&self.k, self.frames.len() as u32).to_vec();
        for f in &self.frames {
            encode_frame_into(f, &self.k, &mut out)?;
        }
        Ok(out)
    }

    pub fn frames(&self) -> &[Arc<RgbdFrame>] {
        &self.frames
    }
}

impl FrameSource for MemorySequence {
    fn intrinsics(&self) -> &CameraIntrinsics {
        &self.k
    }

    fn len(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> Result<Arc<RgbdFrame>, ContainerError> {
        self.frames.get(index).cloned().ok_or(ContainerError::OutOfRange { index, len: self.frames.len() })
    }
}

/// File-backed container with random access; frames are decoded on demand.
#[derive(Debug)]
pub struct ContainerSequence {
    path: PathBuf,
    k: CameraIntrinsics,
    count: u32,
    file: Mutex<File>,
}

impl ContainerSequence {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ContainerError> {
        let path = path.as_ref();
        let mut file = File::open(path).map_err(|e| ContainerError::io(path, e))?;
        let total = file.metadata().map_err(|e| ContainerError::io(path, e))?.len();
        let mut header = Vec::with_capacity(HEADER_LEN);
        (&mut file).take(HEADER_LEN as u64).read_to_end(&mut header).map_err(|e| ContainerError::io(path, e))?;
        let (k, count) = decode_header(&header)?;
        check_payload_size(&k, count, total - HEADER_LEN as u64)?;
        Ok(Self { path: path.to_path_buf(), k, count, file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl FrameSource for ContainerSequence {
    fn intrinsics(&self) -> &CameraIntrinsics {
        &self.k
    }

    fn len(&self) -> usize {
        self.count as usize
    }

    fn frame(&self, index: usize) -> Result<Arc<RgbdFrame>, ContainerError> {
        if index >= self.len() {
            return Err(ContainerError::OutOfRange { index, len: self.len() });
        }
        let per = frame_payload_len(&self.k);
        let mut payload = vec![0u8; per];
        {
            let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
            f.seek(SeekFrom::Start(HEADER_LEN as u64 + (index * per) as u64))
                .and_then(|_| f.read_exact(&mut payload))
                .map_err(|e| ContainerError::io(&self.path, e))?;
        }
        Ok(Arc::new(decode_frame(&payload, index as u32, &self.k)))
    }
}

/// Open a sequence file as a shareable frame source.
pub fn load_sequence(path: impl AsRef<Path>) -> Result<Arc<dyn FrameSource>, ContainerError> {
    Ok(Arc::new(ContainerSequence::open(path)?))
}

/// Bounded read-ahead over a frame range. Frames arrive strictly in index
/// order; at most `depth` decoded frames wait in the queue.
pub struct ReadAhead {
    rx: Option<Receiver<Result<Arc<RgbdFrame>, ContainerError>>>,
    worker: Option<JoinHandle<()>>,
}

impl ReadAhead {
    pub fn new(source: Arc<dyn FrameSource>, range: std::ops::Range<usize>, depth: usize) -> Self {
        let (tx, rx) = sync_channel(depth.max(1));
        let worker = std::thread::spawn(move || {
            for i in range {
                let r = source.frame(i);
                let stop = r.is_err();
                if tx.send(r).is_err() || stop {
                    break;
                }
            }
        });
        Self { rx: Some(rx), worker: Some(worker) }
    }
}

impl Iterator for ReadAhead {
    type Item = Result<Arc<RgbdFrame>, ContainerError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.rx.as_ref()?.recv().ok()
    }
}

impl Drop for ReadAhead {
    fn drop(&mut self) {
        // Hanging up unblocks a worker parked on a full queue.
        self.rx.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
