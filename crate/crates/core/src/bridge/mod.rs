//! Live streaming boundary between a running session and an interactive client.

pub mod client;
pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{
    decode_command, encode_message, Command, ErrorCode, ErrorReply, ServerMessage, Snapshot,
};
pub use server::{serve, ServeOptions, ServerHandle, DEFAULT_PORT};
pub use session::{LoggedInput, Session, SessionRecord};
