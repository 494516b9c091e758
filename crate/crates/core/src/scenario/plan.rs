use serde::{Deserialize, Serialize};

use super::{build_system_prompt, generate_persona, PersonaOverrides, PersonaProfile, PromptPolicy, ScenarioError, SystemPrompt};
use crate::knowledge_base::{sample_scenario, KnowledgeBase, ScenarioSpec};

/// Everything fixed at session start: the hidden case, who the patient is,
/// and the prompt built from both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub scenario: ScenarioSpec,
    pub persona: PersonaProfile,
    pub prompt: SystemPrompt,
}

impl SessionPlan {
    /// Samples a syndrome and persona from one seed.
    pub fn sample(
        kb: &KnowledgeBase,
        seed: u64,
        policy: &PromptPolicy,
        overrides: Option<&PersonaOverrides>,
    ) -> Result<Self, ScenarioError> {
        let scenario = sample_scenario(kb, seed)?;
        let mut persona = generate_persona(seed);
        if let Some(o) = overrides {
            persona = o.apply(persona)?;
        }
        Self::from_parts(scenario, persona, policy)
    }

    pub fn from_parts(
        scenario: ScenarioSpec,
        persona: PersonaProfile,
        policy: &PromptPolicy,
    ) -> Result<Self, ScenarioError> {
        let prompt = build_system_prompt(&scenario, &persona, policy)?;
        Ok(SessionPlan { scenario, persona, prompt })
    }
}
