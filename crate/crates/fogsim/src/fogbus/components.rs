//! Runtime behavior of the five framework components. Each component is a
//! single-threaded message handler driven by the simulator's event loop;
//! all interaction happens through envelopes.
//!
//! The flow for one submission: the user sends a placement request to the
//! master, the master picks an actor round-robin and issues a task command
//! carrying the user's advertised address, the actor reuses or starts a
//! task executor and returns the result to the master, and the master
//! forwards the final result to the user. Master and actor report steps to
//! the remote logger along the way.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use thiserror::Error;

use crate::addr::Address;
use crate::fogbus::calc::{execute_calculation, CalcInput, CalcOutput};
use crate::fogbus::envelope::{Envelope, MessageKind, Payload, PayloadBody, TaskOutcome};
use crate::fogbus::logstore::{LogEntry, LogLevel, LogStore};
use crate::fogbus::scheduler::SchedulerState;
use crate::netsim::{Component, Ctx, FailureReason, SimError, Simulation, TraceOutcome};

/// Error payload the master returns when no actor is registered.
pub const PLACEMENT_REJECTED: &str = "placement_rejected";

/// A peer as seen by a sender: its logical name plus the address it
/// advertised. Direct modes send to the address; proxy mode sends to the
/// proxy and routes by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub name: String,
    pub address: Address,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommsMode {
    Direct,
    Proxy { proxy: Address },
}

/// How a component addresses its peers: its own logical name, the address
/// it advertises for replies, and whether traffic goes direct or through
/// the proxy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comms {
    pub self_name: String,
    pub advertise: Address,
    pub mode: CommsMode,
}

impl Comms {
    pub fn envelope(&self, request_id: u64, target: &Target, body: PayloadBody) -> Envelope {
        let (dest, route_to) = match &self.mode {
            CommsMode::Direct => (target.address, None),
            CommsMode::Proxy { proxy } => (*proxy, Some(target.name.clone())),
        };
        Envelope::new(
            request_id,
            self.advertise,
            dest,
            Payload {
                route_to,
                from_name: Some(self.self_name.clone()),
                body,
            },
        )
    }

    fn log(
        &self,
        ctx: &mut Ctx<'_>,
        logger: &Target,
        request_id: u64,
        level: LogLevel,
        text: String,
    ) {
        let entry = LogEntry {
            time_ms: ctx.now_ms(),
            source: self.self_name.clone(),
            level,
            text,
        };
        let env = self.envelope(request_id, logger, PayloadBody::Log { entry });
        ctx.send(env);
    }
}

/// Remote logger: appends every received log entry to the store.
pub struct RemoteLoggerComponent {
    pub name: String,
    pub store: Rc<RefCell<LogStore>>,
}

impl Component for RemoteLoggerComponent {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, env: Envelope, _ctx: &mut Ctx<'_>) {
        if let PayloadBody::Log { entry } = env.payload.body {
            // a closed store silently drops late entries
            let _ = self.store.borrow_mut().append(entry);
        }
    }
}

/// Master: registers actors, schedules placement requests round-robin, and
/// relays task results back to the requesting user.
pub struct MasterComponent {
    pub comms: Comms,
    pub logger: Target,
    pub scheduler: Rc<RefCell<SchedulerState>>,
}

impl Component for MasterComponent {
    fn name(&self) -> &str {
        &self.comms.self_name
    }

    fn handle(&mut self, env: Envelope, ctx: &mut Ctx<'_>) {
        let request_id = env.request_id;
        let reply_to = env.reply_to;
        let from_name = env.payload.from_name.clone();
        match env.payload.body {
            PayloadBody::RegisterActor {
                actor_name,
                actor_address,
            } => {
                self.scheduler
                    .borrow_mut()
                    .register(actor_name.clone(), actor_address);
                self.comms.log(
                    ctx,
                    &self.logger,
                    request_id,
                    LogLevel::Info,
                    format!("registered actor {actor_name} at {actor_address}"),
                );
                let ack_target = Target {
                    name: from_name.unwrap_or(actor_name),
                    address: reply_to,
                };
                let ack = self.comms.envelope(
                    request_id,
                    &ack_target,
                    PayloadBody::Ack {
                        of: MessageKind::RegisterActor,
                        note: None,
                    },
                );
                ctx.send(ack);
            }
            PayloadBody::PlacementRequest { task_type, input } => {
                let user_name = from_name.unwrap_or_default();
                let user = Target {
                    name: user_name.clone(),
                    address: reply_to,
                };
                let picked = self.scheduler.borrow_mut().next_actor();
                match picked {
                    Err(_) => {
                        self.comms.log(
                            ctx,
                            &self.logger,
                            request_id,
                            LogLevel::Warn,
                            format!("request {request_id}: no actors registered, rejecting"),
                        );
                        let reject = self.comms.envelope(
                            request_id,
                            &user,
                            PayloadBody::FinalResult {
                                outcome: TaskOutcome::Err(PLACEMENT_REJECTED.to_string()),
                            },
                        );
                        ctx.send(reject);
                    }
                    Ok(actor) => {
                        self.comms.log(
                            ctx,
                            &self.logger,
                            request_id,
                            LogLevel::Info,
                            format!("request {request_id}: scheduled on {}", actor.name),
                        );
                        let actor_target = Target {
                            name: actor.name,
                            address: actor.address,
                        };
                        let command = self.comms.envelope(
                            request_id,
                            &actor_target,
                            PayloadBody::TaskCommand {
                                task_type,
                                input,
                                user_address: user.address,
                                user_name,
                            },
                        );
                        ctx.send(command);
                    }
                }
            }
            PayloadBody::TaskResult {
                outcome,
                user_address,
                user_name,
            } => {
                self.comms.log(
                    ctx,
                    &self.logger,
                    request_id,
                    LogLevel::Info,
                    format!("request {request_id}: dispatching result to {user_name}"),
                );
                let user = Target {
                    name: user_name,
                    address: user_address,
                };
                let final_result =
                    self.comms
                        .envelope(request_id, &user, PayloadBody::FinalResult { outcome });
                ctx.send(final_result);
            }
            _ => {}
        }
    }
}

/// A task executor living inside an actor, typed by image label and reused
/// across requests of the same type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Executor {
    pub task_type: String,
    pub runs: u32,
}

impl Executor {
    fn run(&mut self, input: &CalcInput) -> TaskOutcome {
        self.runs += 1;
        match execute_calculation(input) {
            Ok(output) => TaskOutcome::Ok(output),
            Err(e) => TaskOutcome::Err(e.to_string()),
        }
    }
}

/// Counters shared with the harness for executor-reuse assertions.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ActorStats {
    pub executors_started: u32,
    pub tasks_run: u32,
}

/// Actor: receives task commands, launches or reuses the executor for the
/// task type, and returns the result to the command's reply address.
pub struct ActorComponent {
    pub comms: Comms,
    pub logger: Target,
    pub executors: BTreeMap<String, Executor>,
    pub stats: Rc<RefCell<ActorStats>>,
}

impl Component for ActorComponent {
    fn name(&self) -> &str {
        &self.comms.self_name
    }

    fn handle(&mut self, env: Envelope, ctx: &mut Ctx<'_>) {
        let request_id = env.request_id;
        let reply_to = env.reply_to;
        let from_name = env.payload.from_name.clone();
        if let PayloadBody::TaskCommand {
            task_type,
            input,
            user_address,
            user_name,
        } = env.payload.body
        {
            self.comms.log(
                ctx,
                &self.logger,
                request_id,
                LogLevel::Info,
                format!("request {request_id}: received task `{task_type}`"),
            );
            let executor = self.executors.entry(task_type.clone()).or_insert_with(|| {
                self.stats.borrow_mut().executors_started += 1;
                Executor { task_type, runs: 0 }
            });
            let outcome = executor.run(&input);
            self.stats.borrow_mut().tasks_run += 1;
            let master = Target {
                name: from_name.unwrap_or_default(),
                address: reply_to,
            };
            let result = self.comms.envelope(
                request_id,
                &master,
                PayloadBody::TaskResult {
                    outcome,
                    user_address,
                    user_name,
                },
            );
            ctx.send(result);
        }
    }
}

/// Everything the user received, keyed by request id.
#[derive(Debug, Default)]
pub struct UserInbox {
    pub results: BTreeMap<u64, (TaskOutcome, u64)>,
    pub notices: BTreeMap<u64, String>,
}

/// User: records final results (and any undeliverable notices) for the
/// submission driver to pick up.
pub struct UserComponent {
    pub name: String,
    pub inbox: Rc<RefCell<UserInbox>>,
}

impl Component for UserComponent {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, env: Envelope, ctx: &mut Ctx<'_>) {
        match env.payload.body {
            PayloadBody::FinalResult { outcome } => {
                self.inbox
                    .borrow_mut()
                    .results
                    .insert(env.request_id, (outcome, ctx.now_us()));
            }
            PayloadBody::Ack {
                note: Some(note), ..
            } => {
                self.inbox.borrow_mut().notices.insert(env.request_id, note);
            }
            _ => {}
        }
    }
}

/// Handle owned by the submission driver: the user component's identity
/// plus the shared inbox.
#[derive(Clone)]
pub struct UserHandle {
    pub comms: Comms,
    pub bind: Address,
    pub inbox: Rc<RefCell<UserInbox>>,
    pub timeout_ms: f64,
}

/// A completed submission.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub output: CalcOutput,
    pub response_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubmitError {
    #[error("transport error: {0}")]
    Sim(#[from] SimError),
    #[error("undeliverable: {0}")]
    Undeliverable(FailureReason),
    #[error("placement rejected: no actors registered")]
    PlacementRejected,
    #[error("task failed: {0}")]
    TaskFailed(String),
    #[error("proxy could not deliver: {0}")]
    ProxyUndeliverable(String),
    #[error("timed out after {waited_ms} ms")]
    Timeout { waited_ms: f64 },
}

impl SubmitError {
    /// Short machine-readable reason for benchmark CSV rows.
    pub fn reason(&self) -> String {
        match self {
            SubmitError::Sim(_) => "transport_error".to_string(),
            SubmitError::Undeliverable(r) => r.to_string(),
            SubmitError::PlacementRejected => PLACEMENT_REJECTED.to_string(),
            SubmitError::TaskFailed(e) => format!("task_failed: {e}"),
            SubmitError::ProxyUndeliverable(_) => "proxy_undeliverable".to_string(),
            SubmitError::Timeout { .. } => "timeout".to_string(),
        }
    }
}

/// Sends one placement request and drives the simulation until the final
/// result arrives (or the failure is classified). The response time is the
/// virtual-clock interval between the send and the receipt of the final
/// result at the user.
pub fn user_submit(
    sim: &mut Simulation,
    user: &UserHandle,
    request_id: u64,
    input: CalcInput,
    master: &Target,
) -> Result<Submission, SubmitError> {
    let sent_at_us = sim.now_us();
    let env = user.comms.envelope(
        request_id,
        master,
        PayloadBody::PlacementRequest {
            task_type: "calculation".to_string(),
            input,
        },
    );
    let result = sim.send_from(user.bind, env)?;
    if let Some(reason) = result.failure_reason {
        return Err(SubmitError::Undeliverable(reason));
    }
    sim.run_until_idle();

    let received = user.inbox.borrow_mut().results.remove(&request_id);
    match received {
        Some((TaskOutcome::Ok(output), received_at_us)) => {
            let response_time_ms = (received_at_us - sent_at_us) as f64 / 1000.0;
            if response_time_ms > user.timeout_ms {
                return Err(SubmitError::Timeout {
                    waited_ms: response_time_ms,
                });
            }
            Ok(Submission {
                output,
                response_time_ms,
            })
        }
        Some((TaskOutcome::Err(e), _)) => {
            if e == PLACEMENT_REJECTED {
                Err(SubmitError::PlacementRejected)
            } else {
                Err(SubmitError::TaskFailed(e))
            }
        }
        None => {
            if let Some(note) = user.inbox.borrow_mut().notices.remove(&request_id) {
                return Err(SubmitError::ProxyUndeliverable(note));
            }
            // the reply chain broke somewhere: attribute the first failed
            // protocol leg of this request
            let failed = sim
                .trace()
                .iter()
                .filter(|r| {
                    r.request_id == request_id
                        && r.sent_at_us >= sent_at_us
                        && r.kind != MessageKind::Log
                })
                .find_map(|r| match r.outcome {
                    TraceOutcome::Failed(reason) => Some(reason),
                    TraceOutcome::Delivered => None,
                });
            match failed {
                Some(reason) => Err(SubmitError::Undeliverable(reason)),
                None => Err(SubmitError::Timeout {
                    waited_ms: (sim.now_us() - sent_at_us) as f64 / 1000.0,
                }),
            }
        }
    }
}
