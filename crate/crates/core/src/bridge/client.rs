//! Minimal blocking client for scripted sessions and tests.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::protocol::{decode_message, encode_command, Command, ServerMessage};
use crate::error::{Error, Result};

pub struct Client {
    ws: WebSocket<TcpStream>,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        let (ws, _) = tungstenite::client(format!("ws://{addr}/"), stream)
            .map_err(|e| Error::Protocol(format!("handshake with {addr} failed: {e}")))?;
        ws.get_ref()
            .set_read_timeout(Some(Duration::from_millis(20)))?;
        Ok(Self { ws })
    }

    pub fn send(&mut self, cmd: &Command) -> Result<()> {
        self.send_raw(&encode_command(cmd))
    }

    pub fn send_raw(&mut self, text: &str) -> Result<()> {
        self.ws
            .send(Message::text(text))
            .map_err(|e| Error::Protocol(e.to_string()))
    }

    /// Next server message, or `None` if nothing arrives within `timeout`.
    /// A closed connection is an error.
    pub fn recv(&mut self, timeout: Duration) -> Result<Option<ServerMessage>> {
        let until = Instant::now() + timeout;
        while Instant::now() < until {
            match self.ws.read() {
                Ok(Message::Text(t)) => return Ok(Some(decode_message(t.as_str())?)),
                Ok(Message::Close(_)) => {
                    return Err(Error::Protocol("server closed the connection".into()))
                }
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) => return Err(Error::Protocol(e.to_string())),
            }
        }
        Ok(None)
    }

    /// Read messages until one satisfies `pred`.
    pub fn wait_for(
        &mut self,
        timeout: Duration,
        pred: impl Fn(&ServerMessage) -> bool,
    ) -> Result<Option<ServerMessage>> {
        let until = Instant::now() + timeout;
        while let Some(left) = until.checked_duration_since(Instant::now()) {
            match self.recv(left)? {
                Some(m) if pred(&m) => return Ok(Some(m)),
                Some(_) => {}
                None => break,
            }
        }
        Ok(None)
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}
