/// A halt point the runtime reports at a hook. One hook site may report
/// several phases at once; each breakpoint type matches exactly one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    ActivityCreation,
    ActivityExecution,
    BeforeJoin,
    AfterJoin,
    ActorMessageSend,
    ActorMessageReceiver,
    BeforeAsyncMethodActivation,
    AfterAsyncMethodActivation,
    BeforePromiseResolution,
    OnPromiseResolution,
    BeforeChannelSend,
    AfterChannelReceive,
    BeforeChannelReceive,
    AfterChannelSend,
    BeforeTransaction,
    BeforeCommit,
    AfterCommit,
    BeforeAcquire,
    AfterAcquire,
    BeforeRelease,
    AfterRelease,
    /// Before an executable statement; drives sequential stepping.
    Statement,
    /// Before the first statement of any turn, message or callback.
    TurnStart,
}

impl Phase {
    /// The phases that back a breakpoint type, in catalog order.
    pub const BREAKPOINTS: [Phase; 21] = [
        Phase::ActivityCreation,
        Phase::ActivityExecution,
        Phase::BeforeJoin,
        Phase::AfterJoin,
        Phase::ActorMessageSend,
        Phase::ActorMessageReceiver,
        Phase::BeforeAsyncMethodActivation,
        Phase::AfterAsyncMethodActivation,
        Phase::BeforePromiseResolution,
        Phase::OnPromiseResolution,
        Phase::BeforeChannelSend,
        Phase::AfterChannelReceive,
        Phase::BeforeChannelReceive,
        Phase::AfterChannelSend,
        Phase::BeforeTransaction,
        Phase::BeforeCommit,
        Phase::AfterCommit,
        Phase::BeforeAcquire,
        Phase::AfterAcquire,
        Phase::BeforeRelease,
        Phase::AfterRelease,
    ];

    pub fn breakpoint_name(self) -> Option<&'static str> {
        Some(match self {
            Phase::ActivityCreation => "activity-creation",
            Phase::ActivityExecution => "activity-execution",
            Phase::BeforeJoin => "before-join",
            Phase::AfterJoin => "after-join",
            Phase::ActorMessageSend => "actor-message-send",
            Phase::ActorMessageReceiver => "actor-message-receiver",
            Phase::BeforeAsyncMethodActivation => "before-async-method-activation",
            Phase::AfterAsyncMethodActivation => "after-async-method-activation",
            Phase::BeforePromiseResolution => "before-promise-resolution",
            Phase::OnPromiseResolution => "on-promise-resolution",
            Phase::BeforeChannelSend => "before-channel-send",
            Phase::AfterChannelReceive => "after-channel-receive",
            Phase::BeforeChannelReceive => "before-channel-receive",
            Phase::AfterChannelSend => "after-channel-send",
            Phase::BeforeTransaction => "before-transaction",
            Phase::BeforeCommit => "before-commit",
            Phase::AfterCommit => "after-commit",
            Phase::BeforeAcquire => "before-acquire",
            Phase::AfterAcquire => "after-acquire",
            Phase::BeforeRelease => "before-release",
            Phase::AfterRelease => "after-release",
            Phase::Statement | Phase::TurnStart => return None,
        })
    }

    pub fn from_breakpoint_name(name: &str) -> Option<Phase> {
        Phase::BREAKPOINTS.into_iter().find(|p| p.breakpoint_name() == Some(name))
    }
}

/// The entity a one-shot flag waits for. The variant says which role the
/// id plays at the hook, so ids of different roles never match each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlagKey {
    /// A freshly created activity.
    Child(u64),
    /// An activity being joined.
    Joined(u64),
    Message(u64),
    Promise(u64),
    /// The actor whose turn starts.
    Actor(u64),
    Lock(u64),
    /// The sending side of a completed rendezvous.
    ChannelSender(u64),
    /// The receiving side of a completed rendezvous.
    ChannelReceiver(u64),
}
