//! The five-component distributed application framework: message envelopes
//! and their wire form, the calculation workload, round-robin task
//! placement, the log store, and the component runtimes (user, master,
//! actor with its task executors, remote logger).

pub mod calc;
pub mod components;
pub mod envelope;
pub mod logstore;
pub mod scheduler;

pub use calc::{execute_calculation, CalcError, CalcInput, CalcOutput};
pub use components::{
    user_submit, ActorComponent, ActorStats, Comms, CommsMode, MasterComponent,
    RemoteLoggerComponent, Submission, SubmitError, Target, UserComponent, UserHandle, UserInbox,
};
pub use envelope::{
    decode_envelope, encode_envelope, Envelope, MessageKind, Payload, PayloadBody, TaskOutcome,
    WireError,
};
pub use logstore::{LogEntry, LogLevel, LogStore, LogStoreError};
pub use scheduler::{ActorEntry, SchedulerState};
