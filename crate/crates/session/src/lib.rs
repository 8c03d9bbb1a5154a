//! Authoring sessions for volfx: the command protocol, a transport-free
//! session host, headless export and a WebSocket server.

pub mod client;
pub mod export;
pub mod host;
pub mod protocol;
pub mod server;

pub use export::{export, ExportError, ExportSummary};
pub use host::{Response, SessionHost, LIVE_STRIDE};
pub use protocol::{Command, Envelope, ErrorCode, Outgoing, Role, ServerMessage};
pub use server::{Server, ServerHandle, DEFAULT_LISTEN};
