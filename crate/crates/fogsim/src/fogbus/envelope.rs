//! The framework message format. Every inter-component interaction is one
//! `Envelope`: a kind, a request id, the sender's advertised reply address,
//! the destination address, and a kind-specific payload. On the wire an
//! envelope is a length-prefixed UTF-8 JSON object.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::Address;
use crate::fogbus::calc::{CalcInput, CalcOutput};
use crate::fogbus::logstore::LogEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    RegisterActor,
    PlacementRequest,
    TaskCommand,
    TaskResult,
    FinalResult,
    Log,
    Ack,
}

impl std::fmt::Display for MessageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MessageKind::RegisterActor => "register_actor",
            MessageKind::PlacementRequest => "placement_request",
            MessageKind::TaskCommand => "task_command",
            MessageKind::TaskResult => "task_result",
            MessageKind::FinalResult => "final_result",
            MessageKind::Log => "log",
            MessageKind::Ack => "ack",
        };
        write!(f, "{s}")
    }
}

/// Success-or-error outcome of a task, carried by result messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOutcome {
    Ok(CalcOutput),
    Err(String),
}

/// Kind-specific payload record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadBody {
    RegisterActor {
        actor_name: String,
        actor_address: Address,
    },
    PlacementRequest {
        task_type: String,
        input: CalcInput,
    },
    TaskCommand {
        task_type: String,
        input: CalcInput,
        user_address: Address,
        user_name: String,
    },
    TaskResult {
        outcome: TaskOutcome,
        user_address: Address,
        user_name: String,
    },
    FinalResult {
        outcome: TaskOutcome,
    },
    Log {
        entry: LogEntry,
    },
    Ack {
        of: MessageKind,
        note: Option<String>,
    },
}

impl PayloadBody {
    pub fn kind(&self) -> MessageKind {
        match self {
            PayloadBody::RegisterActor { .. } => MessageKind::RegisterActor,
            PayloadBody::PlacementRequest { .. } => MessageKind::PlacementRequest,
            PayloadBody::TaskCommand { .. } => MessageKind::TaskCommand,
            PayloadBody::TaskResult { .. } => MessageKind::TaskResult,
            PayloadBody::FinalResult { .. } => MessageKind::FinalResult,
            PayloadBody::Log { .. } => MessageKind::Log,
            PayloadBody::Ack { .. } => MessageKind::Ack,
        }
    }
}

/// Payload plus the optional proxy routing header. `route_to` names the
/// logical destination when messages travel via the proxy; `from_name` is
/// the sender's logical name so that replies can be routed back by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route_to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_name: Option<String>,
    #[serde(flatten)]
    pub body: PayloadBody,
}

/// One framework message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: MessageKind,
    pub request_id: u64,
    pub reply_to: Address,
    pub dest: Address,
    /// Number of proxy traversals so far; at most one is allowed.
    #[serde(default)]
    pub hops: u32,
    pub payload: Payload,
}

impl Envelope {
    /// Builds an envelope with `kind` derived from the payload body.
    pub fn new(request_id: u64, reply_to: Address, dest: Address, payload: Payload) -> Self {
        Self {
            kind: payload.body.kind(),
            request_id,
            reply_to,
            dest,
            hops: 0,
            payload,
        }
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame too short: {0} bytes")]
    Truncated(usize),
    #[error("frame length {len} exceeds remaining {remaining} bytes")]
    LengthMismatch { len: usize, remaining: usize },
    #[error("invalid JSON payload: {0}")]
    Json(#[from] serde_json::Error),
    #[error("kind `{kind}` does not match payload body `{body}`")]
    KindMismatch {
        kind: MessageKind,
        body: MessageKind,
    },
}

/// Encodes one envelope as a 4-byte big-endian length prefix followed by
/// the JSON object bytes.
pub fn encode_envelope(env: &Envelope) -> Vec<u8> {
    let json = serde_json::to_vec(env).expect("envelopes always serialize");
    let mut out = Vec::with_capacity(4 + json.len());
    out.extend_from_slice(&(json.len() as u32).to_be_bytes());
    out.extend_from_slice(&json);
    out
}

/// Decodes one envelope from the front of `bytes`, returning it together
/// with the number of bytes consumed.
pub fn decode_envelope(bytes: &[u8]) -> Result<(Envelope, usize), WireError> {
    if bytes.len() < 4 {
        return Err(WireError::Truncated(bytes.len()));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let remaining = bytes.len() - 4;
    if len > remaining {
        return Err(WireError::LengthMismatch { len, remaining });
    }
    let env: Envelope = serde_json::from_slice(&bytes[4..4 + len])?;
    if env.kind != env.payload.body.kind() {
        return Err(WireError::KindMismatch {
            kind: env.kind,
            body: env.payload.body.kind(),
        });
    }
    Ok((env, 4 + len))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::fogbus::logstore::{LogEntry, LogLevel};
    use proptest::prelude::*;

    fn arb_address() -> impl Strategy<Value = Address> {
        (any::<u32>(), 1u16..u16::MAX)
            .prop_map(|(ip, port)| Address::new(std::net::Ipv4Addr::from(ip), port))
    }

    fn arb_outcome() -> impl Strategy<Value = TaskOutcome> {
        prop_oneof![
            (any::<f64>(), any::<f64>(), any::<f64>(), any::<f64>())
                .prop_filter("finite JSON numbers", |(a, b, c, d)| {
                    a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()
                })
                .prop_map(|(part0, part1, part2, final_result)| {
                    TaskOutcome::Ok(CalcOutput {
                        part0,
                        part1,
                        part2,
                        final_result,
                    })
                }),
            "[a-z /0-9()+^]{0,40}".prop_map(TaskOutcome::Err),
        ]
    }

    fn arb_body() -> impl Strategy<Value = PayloadBody> {
        let finite = || any::<f64>().prop_filter("finite", |v| v.is_finite());
        prop_oneof![
            ("[a-z0-9-]{1,20}", arb_address()).prop_map(|(actor_name, actor_address)| {
                PayloadBody::RegisterActor {
                    actor_name,
                    actor_address,
                }
            }),
            ("[a-z]{1,10}", finite(), finite(), finite()).prop_map(|(t, a, b, c)| {
                PayloadBody::PlacementRequest {
                    task_type: t,
                    input: CalcInput::new(a, b, c),
                }
            }),
            (
                "[a-z]{1,10}",
                finite(),
                finite(),
                finite(),
                arb_address(),
                "[a-z0-9-]{1,20}"
            )
                .prop_map(|(t, a, b, c, user_address, user_name)| {
                    PayloadBody::TaskCommand {
                        task_type: t,
                        input: CalcInput::new(a, b, c),
                        user_address,
                        user_name,
                    }
                }),
            (arb_outcome(), arb_address(), "[a-z0-9-]{1,20}").prop_map(
                |(outcome, user_address, user_name)| PayloadBody::TaskResult {
                    outcome,
                    user_address,
                    user_name,
                }
            ),
            arb_outcome().prop_map(|outcome| PayloadBody::FinalResult { outcome }),
            (finite(), "[a-z0-9-]{1,20}", "[ -~]{0,60}").prop_map(|(time_ms, source, text)| {
                PayloadBody::Log {
                    entry: LogEntry {
                        time_ms,
                        source,
                        level: LogLevel::Info,
                        text,
                    },
                }
            }),
            proptest::option::of("[ -~]{0,40}").prop_map(|note| PayloadBody::Ack {
                of: MessageKind::PlacementRequest,
                note,
            }),
        ]
    }

    fn arb_envelope() -> impl Strategy<Value = Envelope> {
        (
            any::<u64>(),
            arb_address(),
            arb_address(),
            0u32..3,
            proptest::option::of("[a-z0-9-]{1,20}"),
            proptest::option::of("[a-z0-9-]{1,20}"),
            arb_body(),
        )
            .prop_map(
                |(request_id, reply_to, dest, hops, route_to, from_name, body)| {
                    let mut env = Envelope::new(
                        request_id,
                        reply_to,
                        dest,
                        Payload {
                            route_to,
                            from_name,
                            body,
                        },
                    );
                    env.hops = hops;
                    env
                },
            )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn wire_roundtrip_preserves_envelopes(env in arb_envelope()) {
            let bytes = encode_envelope(&env);
            let (decoded, consumed) = decode_envelope(&bytes).expect("well-formed frame");
            prop_assert_eq!(consumed, bytes.len());
            prop_assert_eq!(decoded, env);
        }
    }
}
