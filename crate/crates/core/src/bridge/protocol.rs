//! JSON text protocol spoken over the websocket.
//!
//! Client to server, one command per text frame:
//!
//! ```json
//! {"type": "pose", "payload": {"x_m": [0.02, 0.0, 0.0, 0.0, 0.0, 0.0]}, "client_t": 3.25}
//! {"type": "grasp", "payload": {"grasp": true}, "client_t": 3.30}
//! {"type": "channel", "payload": {"delay": 0.25, "rate": 100.0, "drop_probability": 0.0}, "client_t": 4.0}
//! {"type": "viapoint", "payload": {"pose": [0.42, 0.22, 0.0, 0.0, 0.0, 0.0], "duration": 1.5}, "client_t": 5.0}
//! ```
//!
//! Server to client: `welcome`, `snapshot` and `error` messages, each tagged by `type`.
//! Unknown fields are ignored everywhere; missing required fields are rejected.

use serde::{Deserialize, Serialize};

use crate::fic::DOF;
use crate::scenarios::interactive::{InteractiveState, MasterInput};
use crate::teleop::ChannelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MalformedJson,
    InvalidCommand,
    UnknownType,
    /// Another client already controls the session.
    SessionBusy,
    /// The command parsed but the simulation refused it.
    Rejected,
    ProtocolViolation,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorReply {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    pub kinetic: f64,
    pub storage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub q: Vec<f64>,
    /// End-effector pose: position then rotation vector.
    pub pose: [f64; DOF],
    pub x_d: [f64; DOF],
    /// Wrench delivered to the master after the feedback channel.
    pub feedback: [f64; DOF],
    /// 1 for convergence, 0 for divergence, per task axis.
    pub phase: [u8; DOF],
    pub energy: Energy,
    pub grasp: bool,
    pub channel: ChannelParams,
    /// No command for longer than the stale limit; master input is frozen.
    pub stale: bool,
}

impl Snapshot {
    pub fn from_state(s: &InteractiveState, channel: ChannelParams, stale: bool) -> Self {
        Self {
            t: s.t,
            q: s.q.clone(),
            pose: s.pose,
            x_d: s.x_d,
            feedback: s.feedback,
            phase: s.phase,
            energy: Energy {
                kinetic: s.kinetic,
                storage: s.storage,
            },
            grasp: s.grasp,
            channel,
            stale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        client_id: u64,
        dt: f64,
        snapshot_rate: f64,
    },
    Snapshot(Snapshot),
    Error(ErrorReply),
}

/// A decoded client command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub input: MasterInput,
    /// Client clock when sent (s); informational only.
    pub client_t: f64,
}

#[derive(Deserialize)]
struct Envelope {
    #[serde(rename = "type")]
    kind: String,
    payload: serde_json::Value,
    client_t: f64,
}

#[derive(Deserialize)]
struct PosePayload {
    x_m: [f64; DOF],
}

#[derive(Deserialize)]
struct GraspPayload {
    grasp: bool,
}

#[derive(Deserialize)]
struct ChannelPayload {
    delay: f64,
    rate: f64,
    #[serde(default)]
    drop_probability: f64,
}

#[derive(Deserialize)]
struct ViaPointPayload {
    pose: [f64; DOF],
    duration: f64,
}

fn invalid(e: serde_json::Error) -> ErrorReply {
    ErrorReply::new(ErrorCode::InvalidCommand, e.to_string())
}

fn payload<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, ErrorReply> {
    serde_json::from_value(v).map_err(invalid)
}

pub fn decode_command(text: &str) -> Result<Command, ErrorReply> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| {
        if e.is_data() {
            invalid(e)
        } else {
            ErrorReply::new(ErrorCode::MalformedJson, e.to_string())
        }
    })?;
    let input = match env.kind.as_str() {
        "pose" => MasterInput::Pose {
            x_m: payload::<PosePayload>(env.payload)?.x_m,
        },
        "grasp" => MasterInput::Grasp {
            grasp: payload::<GraspPayload>(env.payload)?.grasp,
        },
        "channel" => {
            let c: ChannelPayload = payload(env.payload)?;
            let params = ChannelParams::new(c.delay, c.rate, c.drop_probability)
                .map_err(|e| ErrorReply::new(ErrorCode::InvalidCommand, e.to_string()))?;
            MasterInput::Channel { params }
        }
        "viapoint" => {
            let v: ViaPointPayload = payload(env.payload)?;
            MasterInput::ViaPoint {
                pose: v.pose,
                duration: v.duration,
            }
        }
        other => {
            return Err(ErrorReply::new(
                ErrorCode::UnknownType,
                format!(
                    "unknown command type '{other}', expected pose, grasp, channel or viapoint"
                ),
            ))
        }
    };
    Ok(Command {
        input,
        client_t: env.client_t,
    })
}

/// Inverse of [`decode_command`], used by scripted clients.
pub fn encode_command(cmd: &Command) -> String {
    let (kind, payload) = match cmd.input {
        MasterInput::Pose { x_m } => ("pose", serde_json::json!({ "x_m": x_m })),
        MasterInput::Grasp { grasp } => ("grasp", serde_json::json!({ "grasp": grasp })),
        MasterInput::Channel { params } => (
            "channel",
            serde_json::json!({ "delay": params.delay, "rate": params.rate, "drop_probability": params.drop_probability }),
        ),
        MasterInput::ViaPoint { pose, duration } => (
            "viapoint",
            serde_json::json!({ "pose": pose, "duration": duration }),
        ),
    };
    serde_json::json!({ "type": kind, "payload": payload, "client_t": cmd.client_t }).to_string()
}

pub fn encode_message(msg: &ServerMessage) -> String {
    serde_json::to_string(msg).expect("server messages always encode")
}

pub fn decode_message(text: &str) -> serde_json::Result<ServerMessage> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snapshot() -> Snapshot {
        Snapshot {
            t: 1.25,
            q: vec![0.1, -0.2, 0.3],
            pose: [0.4, 0.2, 0.0, 0.0, 0.0, 0.1],
            x_d: [0.41, 0.2, 0.0, 0.0, 0.0, 0.1],
            feedback: [1.0, -2.0, 0.0, 0.0, 0.0, 0.05],
            phase: [0, 1, 0, 0, 0, 1],
            energy: Energy {
                kinetic: 0.01,
                storage: 0.02,
            },
            grasp: true,
            channel: ChannelParams::default(),
            stale: false,
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let msg = ServerMessage::Snapshot(snapshot());
        assert_eq!(decode_message(&encode_message(&msg)).unwrap(), msg);
    }

    #[test]
    fn commands_round_trip() {
        let cmds = [
            MasterInput::Pose {
                x_m: [0.01, 0.02, 0.0, 0.0, 0.0, -0.1],
            },
            MasterInput::Grasp { grasp: true },
            MasterInput::Channel {
                params: ChannelParams::new(1.0, 20.0, 0.1).unwrap(),
            },
            MasterInput::ViaPoint {
                pose: [0.4, 0.3, 0.0, 0.0, 0.0, 0.0],
                duration: 2.0,
            },
        ];
        for input in cmds {
            let c = Command {
                input,
                client_t: 0.5,
            };
            assert_eq!(decode_command(&encode_command(&c)).unwrap(), c);
        }
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let c = decode_command(
            r#"{"type":"grasp","payload":{"grasp":true,"color":"red"},"client_t":1,"extra":5}"#,
        );
        assert_eq!(c.unwrap().input, MasterInput::Grasp { grasp: true });
    }

    #[test]
    fn missing_fields_are_rejected() {
        let e = decode_command(r#"{"type":"grasp","payload":{},"client_t":1}"#).unwrap_err();
        assert_eq!(e.code, ErrorCode::InvalidCommand);
        let e = decode_command(r#"{"type":"pose","payload":{"x_m":[0,0,0,0,0,0]}}"#).unwrap_err();
        assert_eq!(e.code, ErrorCode::InvalidCommand);
        assert!(e.message.contains("client_t"), "{}", e.message);
    }

    #[test]
    fn malformed_and_unknown_are_distinguished() {
        assert_eq!(
            decode_command("{not json").unwrap_err().code,
            ErrorCode::MalformedJson
        );
        assert_eq!(
            decode_command(r#"{"type":"jump","payload":{},"client_t":0}"#)
                .unwrap_err()
                .code,
            ErrorCode::UnknownType
        );
    }

    #[test]
    fn bad_channel_settings_are_invalid() {
        let e =
            decode_command(r#"{"type":"channel","payload":{"delay":-1,"rate":20},"client_t":0}"#)
                .unwrap_err();
        assert_eq!(e.code, ErrorCode::InvalidCommand);
    }
}
