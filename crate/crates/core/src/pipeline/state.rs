use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four-state status indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TurnState {
    #[default]
    Idle,
    Listening,
    Thinking,
    Speaking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnEvent {
    UserBeganInput,
    InputCaptured,
    ReplyReady,
    PlaybackDone,
    Error,
}

impl TurnState {
    pub const ALL: [TurnState; 4] = [
        TurnState::Idle,
        TurnState::Listening,
        TurnState::Thinking,
        TurnState::Speaking,
    ];

    /// Total over `(state, event)`: every pair yields a state or a rejection.
    pub fn transition(self, event: TurnEvent) -> Result<TurnState, IllegalTransition> {
        use TurnEvent::*;
        use TurnState::*;
        match (self, event) {
            (_, Error) => Ok(Idle),
            (Idle, UserBeganInput) => Ok(Listening),
            (Listening, InputCaptured) => Ok(Thinking),
            (Thinking, ReplyReady) => Ok(Speaking),
            (Speaking, PlaybackDone) => Ok(Idle),
            (state, event) => Err(IllegalTransition { state, event }),
        }
    }

    /// Whether `self → next` is an edge of the transition graph.
    pub fn can_reach_directly(self, next: TurnState) -> bool {
        [
            TurnEvent::UserBeganInput,
            TurnEvent::InputCaptured,
            TurnEvent::ReplyReady,
            TurnEvent::PlaybackDone,
            TurnEvent::Error,
        ]
        .iter()
        .any(|&e| self.transition(e) == Ok(next))
    }
}

impl fmt::Display for TurnState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transition: event {event:?} in state {state:?}")]
pub struct IllegalTransition {
    pub state: TurnState,
    pub event: TurnEvent,
}

/// Checks that `path` starts at Idle, follows legal edges and ends at Idle.
pub fn is_legal_path(path: &[TurnState]) -> bool {
    path.first() == Some(&TurnState::Idle)
        && path.last() == Some(&TurnState::Idle)
        && path.windows(2).all(|w| w[0].can_reach_directly(w[1]))
}
