use std::fmt;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "18-29")]
    YoungAdult,
    #[serde(rename = "30-44")]
    Adult,
    #[serde(rename = "45-64")]
    MiddleAged,
    #[serde(rename = "65+")]
    Senior,
}

impl AgeBand {
    pub const ALL: [AgeBand; 4] = [
        AgeBand::YoungAdult,
        AgeBand::Adult,
        AgeBand::MiddleAged,
        AgeBand::Senior,
    ];
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgeBand::YoungAdult => "18-29",
            AgeBand::Adult => "30-44",
            AgeBand::MiddleAged => "45-64",
            AgeBand::Senior => "65 or older",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommunicationStyle {
    Terse,
    Talkative,
    Anxious,
    Guarded,
    Cooperative,
}

impl CommunicationStyle {
    pub const ALL: [CommunicationStyle; 5] = [
        CommunicationStyle::Terse,
        CommunicationStyle::Talkative,
        CommunicationStyle::Anxious,
        CommunicationStyle::Guarded,
        CommunicationStyle::Cooperative,
    ];

    fn instruction(self) -> &'static str {
        match self {
            CommunicationStyle::Terse => "terse; you answer in short sentences and rarely volunteer details",
            CommunicationStyle::Talkative => "talkative; you give long answers and sometimes drift off topic",
            CommunicationStyle::Anxious => "anxious; you worry aloud and ask whether things are serious",
            CommunicationStyle::Guarded => "guarded; you share personal details only when asked directly",
            CommunicationStyle::Cooperative => "cooperative; you answer clearly and follow the doctor's lead",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffectTone {
    Flat,
    Worried,
    Irritable,
    Warm,
}

impl AffectTone {
    pub const ALL: [AffectTone; 4] = [
        AffectTone::Flat,
        AffectTone::Worried,
        AffectTone::Irritable,
        AffectTone::Warm,
    ];
}

impl fmt::Display for AffectTone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AffectTone::Flat => "flat",
            AffectTone::Worried => "worried",
            AffectTone::Irritable => "irritable",
            AffectTone::Warm => "warm",
        })
    }
}

/// The simulated patient's demographics, personality and manner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub age_band: AgeBand,
    pub gender_descriptor: String,
    pub personality_tags: Vec<String>,
    pub communication_style: CommunicationStyle,
    pub affect_tone: AffectTone,
}

impl PersonaProfile {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.gender_descriptor.trim().is_empty() {
            return Err(ScenarioError::InvalidPersona("empty gender descriptor".into()));
        }
        if self.personality_tags.is_empty() {
            return Err(ScenarioError::InvalidPersona("no personality tags".into()));
        }
        if self.personality_tags.iter().any(|t| t.trim().is_empty()) {
            return Err(ScenarioError::InvalidPersona("empty personality tag".into()));
        }
        Ok(())
    }

    pub(crate) fn style_instruction(&self) -> &'static str {
        self.communication_style.instruction()
    }
}

/// Fixed text lists the persona generator draws from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaCatalog {
    pub genders: Vec<String>,
    pub personality_tags: Vec<String>,
}

impl Default for PersonaCatalog {
    fn default() -> Self {
        PersonaCatalog {
            genders: parse_list(include_str!("../../assets/personas/genders.txt")),
            personality_tags: parse_list(include_str!("../../assets/personas/personality_tags.txt")),
        }
    }
}

impl PersonaCatalog {
    /// Loads `genders.txt` and `personality_tags.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, ScenarioError> {
        let read = |name: &str| -> Result<Vec<String>, ScenarioError> {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
            let list = parse_list(&text);
            if list.is_empty() {
                return Err(ScenarioError::Io(format!("{}: empty catalog", path.display())));
            }
            Ok(list)
        };
        Ok(PersonaCatalog {
            genders: read("genders.txt")?,
            personality_tags: read("personality_tags.txt")?,
        })
    }

    pub fn generate(&self, seed: u64) -> PersonaProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PERSONA_STREAM);
        let age_band = *AgeBand::ALL.choose(&mut rng).expect("non-empty");
        let gender_descriptor = self.genders.choose(&mut rng).expect("non-empty catalog").clone();
        let n_tags = rng.random_range(1..=3.min(self.personality_tags.len()));
        let mut tags: Vec<String> = self.personality_tags.clone();
        tags.shuffle(&mut rng);
        tags.truncate(n_tags);
        let communication_style = *CommunicationStyle::ALL.choose(&mut rng).expect("non-empty");
        let affect_tone = *AffectTone::ALL.choose(&mut rng).expect("non-empty");
        PersonaProfile {
            age_band,
            gender_descriptor,
            personality_tags: tags,
            communication_style,
            affect_tone,
        }
    }
}

// Separates the persona RNG stream from scenario sampling under the same seed.
const PERSONA_STREAM: u64 = 0x7065_7273_6f6e_6121;

fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Generates a persona from the bundled catalogs.
pub fn generate_persona(seed: u64) -> PersonaProfile {
    PersonaCatalog::default().generate(seed)
}

/// Caller-supplied replacements for generated persona fields.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaOverrides {
    pub age_band: Option<AgeBand>,
    pub gender_descriptor: Option<String>,
    pub personality_tags: Option<Vec<String>>,
    pub communication_style: Option<CommunicationStyle>,
    pub affect_tone: Option<AffectTone>,
}

impl PersonaOverrides {
    pub fn apply(&self, mut persona: PersonaProfile) -> Result<PersonaProfile, ScenarioError> {
        if let Some(v) = self.age_band {
            persona.age_band = v;
        }
        if let Some(v) = &self.gender_descriptor {
            persona.gender_descriptor = v.trim().to_string();
        }
        if let Some(v) = &self.personality_tags {
            persona.personality_tags = v.iter().map(|t| t.trim().to_string()).collect();
        }
        if let Some(v) = self.communication_style {
            persona.communication_style = v;
        }
        if let Some(v) = self.affect_tone {
            persona.affect_tone = v;
        }
        persona.validate()?;
        Ok(persona)
    }
}
