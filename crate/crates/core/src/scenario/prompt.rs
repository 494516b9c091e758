use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::persona::PersonaProfile;
use super::template::Template;
use super::ScenarioError;
use crate::knowledge_base::ScenarioSpec;

/// Settings for the empathy and safety sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptPolicy {
    /// Allow the patient's affect to shift with the doctor's tone.
    pub affect_variation: bool,
    pub cultural_context: Option<String>,
    /// Additional safety rules appended after the fixed ones.
    pub extra_safety_rules: Vec<String>,
}

impl Default for PromptPolicy {
    fn default() -> Self {
        PromptPolicy {
            affect_variation: true,
            cultural_context: None,
            extra_safety_rules: Vec::new(),
        }
    }
}

/// Section templates, one file per section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub role: Template,
    pub symptoms: Template,
    pub consistency: Template,
    pub empathy: Template,
    pub safety: Template,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            role: Template::new(include_str!("../../assets/prompt/role.txt")),
            symptoms: Template::new(include_str!("../../assets/prompt/symptoms.txt")),
            consistency: Template::new(include_str!("../../assets/prompt/consistency.txt")),
            empathy: Template::new(include_str!("../../assets/prompt/empathy.txt")),
            safety: Template::new(include_str!("../../assets/prompt/safety.txt")),
        }
    }
}

impl PromptTemplates {
    /// Loads `role.txt`, `symptoms.txt`, `consistency.txt`, `empathy.txt` and
    /// `safety.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, ScenarioError> {
        let read = |name: &str| -> Result<Template, ScenarioError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map(Template::new)
                .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))
        };
        let templates = PromptTemplates {
            role: read("role.txt")?,
            symptoms: read("symptoms.txt")?,
            consistency: read("consistency.txt")?,
            empathy: read("empathy.txt")?,
            safety: read("safety.txt")?,
        };
        if !templates.symptoms.placeholders().contains(&"symptom_list") {
            return Err(ScenarioError::Io(
                "symptoms.txt must contain {{symptom_list}}".into(),
            ));
        }
        Ok(templates)
    }
}

/// The rendered role-play constraints for one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemPrompt {
    pub role_section: String,
    pub symptom_section: String,
    pub consistency_section: String,
    pub empathy_section: String,
    pub safety_section: String,
    pub rendered: String,
}

impl SystemPrompt {
    pub fn sections(&self) -> [&str; 5] {
        [
            &self.role_section,
            &self.symptom_section,
            &self.consistency_section,
            &self.empathy_section,
            &self.safety_section,
        ]
    }
}

pub fn build_system_prompt(
    scenario: &ScenarioSpec,
    persona: &PersonaProfile,
    policy: &PromptPolicy,
) -> Result<SystemPrompt, ScenarioError> {
    build_system_prompt_with(&PromptTemplates::default(), scenario, persona, policy)
}

pub fn build_system_prompt_with(
    templates: &PromptTemplates,
    scenario: &ScenarioSpec,
    persona: &PersonaProfile,
    policy: &PromptPolicy,
) -> Result<SystemPrompt, ScenarioError> {
    if scenario.symptoms.is_empty() {
        return Err(ScenarioError::NoSymptoms);
    }
    persona.validate()?;

    let symptom_list = scenario
        .symptoms
        .iter()
        .map(|s| format!("- {s}"))
        .collect::<Vec<_>>()
        .join("\n");
    let affect_rule = if policy.affect_variation {
        "Your affect may shift within the conversation to match how you are treated."
    } else {
        "Keep your baseline affect throughout the conversation."
    };
    let extra_rules = policy
        .extra_safety_rules
        .iter()
        .map(|r| format!("- {}", r.trim()))
        .collect::<Vec<_>>()
        .join("\n");

    let mut values: BTreeMap<&str, String> = BTreeMap::new();
    values.insert("gender", persona.gender_descriptor.clone());
    values.insert("age_band", persona.age_band.to_string());
    values.insert("personality", persona.personality_tags.join(", "));
    values.insert("communication_style", persona.style_instruction().to_string());
    values.insert("affect_tone", persona.affect_tone.to_string());
    values.insert("syndrome", scenario.syndrome_name.clone());
    values.insert("symptom_list", symptom_list);
    values.insert("affect_rule", affect_rule.to_string());
    values.insert(
        "cultural_context",
        policy.cultural_context.clone().unwrap_or_default(),
    );
    values.insert("extra_rules", extra_rules);

    let clean = |s: String| -> String {
        s.lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join("\n")
    };
    let role_section = clean(templates.role.render(&values)?);
    let symptom_section = clean(templates.symptoms.render(&values)?);
    let consistency_section = clean(templates.consistency.render(&values)?);
    let empathy_section = clean(templates.empathy.render(&values)?);
    let safety_section = clean(templates.safety.render(&values)?);

    let rendered = [
        role_section.as_str(),
        &symptom_section,
        &consistency_section,
        &empathy_section,
        &safety_section,
    ]
    .join("\n\n");

    Ok(SystemPrompt {
        role_section,
        symptom_section,
        consistency_section,
        empathy_section,
        safety_section,
        rendered,
    })
}
