//! Blocking client used by tests and scripted sessions.

use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use crate::protocol::ServerMessage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Incoming {
    Text(String),
    Cloud(Vec<u8>),
}

impl Incoming {
    /// Parsed control message, if this is one. Snapshots are not control
    /// messages.
    pub fn message(&self) -> Option<ServerMessage> {
        match self {
            Incoming::Text(t) => serde_json::from_str(t).ok(),
            Incoming::Cloud(_) => None,
        }
    }

    pub fn is_snapshot(&self) -> bool {
        matches!(self, Incoming::Text(t) if t.starts_with(r#"{"type":"Snapshot""#))
    }
}

pub struct SessionClient {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
}

impl SessionClient {
    pub fn connect(addr: SocketAddr) -> Result<Self, tungstenite::Error> {
        let (ws, _) = tungstenite::connect(format!("ws://{addr}/"))?;
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_secs(30)))?;
        }
        Ok(Self { ws })
    }

    pub fn send_text(&mut self, text: &str) -> Result<(), tungstenite::Error> {
        self.ws.send(Message::Text(text.to_string()))
    }

    pub fn recv(&mut self) -> Result<Incoming, tungstenite::Error> {
        loop {
            match self.ws.read()? {
                Message::Text(t) => return Ok(Incoming::Text(t)),
                Message::Binary(b) => return Ok(Incoming::Cloud(b)),
                Message::Close(_) => return Err(tungstenite::Error::ConnectionClosed),
                _ => {}
            }
        }
    }

    /// Receive until the Ack or Error for `seq`, returning everything seen
    /// on the way, the reply included.
    pub fn recv_reply(&mut self, seq: u64) -> Result<Vec<Incoming>, tungstenite::Error> {
        let mut seen = Vec::new();
        loop {
            let m = self.recv()?;
            let done = m.message().and_then(|s| s.reply_seq()).is_some_and(|s| s == Some(seq));
            seen.push(m);
            if done {
                return Ok(seen);
            }
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}
