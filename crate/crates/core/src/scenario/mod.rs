//! Patient persona generation, system-prompt assembly and short-term
//! conversation memory.

mod memory;
mod persona;
mod plan;
mod prompt;
mod template;

use thiserror::Error;

use crate::knowledge_base::KbError;

pub use memory::{
    render_context, ChatMessage, ConversationMemory, MemoryTurn, Role, Speaker, DEFAULT_CHAR_BUDGET,
    DEFAULT_WINDOW,
};
pub use persona::{
    generate_persona, AffectTone, AgeBand, CommunicationStyle, PersonaCatalog, PersonaOverrides,
    PersonaProfile,
};
pub use plan::SessionPlan;
pub use prompt::{build_system_prompt, build_system_prompt_with, PromptPolicy, PromptTemplates, SystemPrompt};
pub use template::Template;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario has no symptoms")]
    NoSymptoms,
    #[error("text must not be empty")]
    EmptyText,
    #[error("memory window and character budget must be positive")]
    InvalidMemoryLimits,
    #[error("invalid persona: {0}")]
    InvalidPersona(String),
    #[error("template placeholder `{{{{{0}}}}}` has no value")]
    MissingPlaceholder(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Kb(#[from] KbError),
}
