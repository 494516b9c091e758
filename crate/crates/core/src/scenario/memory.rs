use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::prompt::SystemPrompt;
use super::ScenarioError;

pub const DEFAULT_WINDOW: usize = 12;
pub const DEFAULT_CHAR_BUDGET: usize = 8_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Doctor,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryTurn {
    pub speaker: Speaker,
    pub text: String,
    /// Set when the text was cut to fit the character budget.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

impl MemoryTurn {
    fn chars(&self) -> usize {
        self.text.chars().count()
    }
}

/// Short-term conversation memory: a FIFO window bounded by turn count and
/// total characters. The character budget wins when both apply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationMemory {
    turns: VecDeque<MemoryTurn>,
    window: usize,
    char_budget: usize,
}

impl Default for ConversationMemory {
    fn default() -> Self {
        ConversationMemory::new(DEFAULT_WINDOW, DEFAULT_CHAR_BUDGET).expect("defaults are positive")
    }
}

impl ConversationMemory {
    pub fn new(window: usize, char_budget: usize) -> Result<Self, ScenarioError> {
        if window == 0 || char_budget == 0 {
            return Err(ScenarioError::InvalidMemoryLimits);
        }
        Ok(ConversationMemory {
            turns: VecDeque::new(),
            window,
            char_budget,
        })
    }

    pub fn turns(&self) -> impl ExactSizeIterator<Item = &MemoryTurn> {
        self.turns.iter()
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn char_budget(&self) -> usize {
        self.char_budget
    }

    pub fn total_chars(&self) -> usize {
        self.turns.iter().map(MemoryTurn::chars).sum()
    }

    /// Returns a new memory with `text` appended, evicting oldest turns first.
    pub fn append(&self, speaker: Speaker, text: &str) -> Result<Self, ScenarioError> {
        let mut next = self.clone();
        next.push(speaker, text)?;
        Ok(next)
    }

    /// In-place form of [`ConversationMemory::append`].
    pub fn push(&mut self, speaker: Speaker, text: &str) -> Result<(), ScenarioError> {
        if text.trim().is_empty() {
            return Err(ScenarioError::EmptyText);
        }
        let mut turn = MemoryTurn {
            speaker,
            text: text.to_string(),
            truncated: false,
        };
        if turn.chars() > self.char_budget {
            turn.text = turn.text.chars().take(self.char_budget).collect();
            turn.truncated = true;
        }
        self.turns.push_back(turn);
        while self.turns.len() > self.window {
            self.turns.pop_front();
        }
        while self.total_chars() > self.char_budget {
            self.turns.pop_front();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

/// Builds the message list for the patient model:
/// `[system prompt, memory oldest→newest, trainee utterance]`.
///
/// Memory turns are dropped oldest-first until memory plus utterance fit the
/// memory's character budget. The system prompt is never dropped.
pub fn render_context(
    prompt: &SystemPrompt,
    memory: &ConversationMemory,
    utterance: &str,
) -> Result<Vec<ChatMessage>, ScenarioError> {
    if utterance.trim().is_empty() {
        return Err(ScenarioError::EmptyText);
    }
    let budget = memory.char_budget;
    let utterance: String = if utterance.chars().count() > budget {
        utterance.chars().take(budget).collect()
    } else {
        utterance.to_string()
    };
    let utterance_chars = utterance.chars().count();

    let mut kept: VecDeque<&MemoryTurn> = memory.turns.iter().collect();
    let mut used: usize = kept.iter().map(|t| t.chars()).sum();
    while used + utterance_chars > budget {
        let Some(dropped) = kept.pop_front() else { break };
        used -= dropped.chars();
    }

    let mut messages = Vec::with_capacity(kept.len() + 2);
    messages.push(ChatMessage::new(Role::System, prompt.rendered.clone()));
    messages.extend(kept.into_iter().map(|t| {
        let role = match t.speaker {
            Speaker::Doctor => Role::User,
            Speaker::Patient => Role::Assistant,
        };
        ChatMessage::new(role, t.text.clone())
    }));
    messages.push(ChatMessage::new(Role::User, utterance));
    Ok(messages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge_base::ScenarioSpec;
    use crate::scenario::{build_system_prompt, generate_persona, PromptPolicy};
    use proptest::prelude::*;

    fn prompt() -> SystemPrompt {
        let sc = ScenarioSpec {
            syndrome_name: "migraine".into(),
            symptoms: vec!["throbbing headache".into()],
            seed: 0,
        };
        build_system_prompt(&sc, &generate_persona(0), &PromptPolicy::default()).unwrap()
    }

    #[test]
    fn window_keeps_last_turns() {
        let mut m = ConversationMemory::new(2, 1000).unwrap();
        for i in 0..5 {
            m = m.append(Speaker::Doctor, &format!("turn {i}")).unwrap();
        }
        let texts: Vec<_> = m.turns().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["turn 3", "turn 4"]);
    }

    #[test]
    fn append_to_empty() {
        let m = ConversationMemory::default().append(Speaker::Patient, "hello").unwrap();
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn oversize_turn_is_truncated_and_flagged() {
        let m = ConversationMemory::new(4, 10).unwrap();
        let m = m.append(Speaker::Doctor, "short").unwrap();
        let m = m.append(Speaker::Patient, "this reply is far longer than ten").unwrap();
        assert_eq!(m.len(), 1);
        let t = m.turns().next().unwrap();
        assert!(t.truncated);
        assert_eq!(t.text, "this reply");
        assert_eq!(m.total_chars(), 10);
    }

    #[test]
    fn budget_wins_over_window() {
        let mut m = ConversationMemory::new(10, 12).unwrap();
        for t in ["aaaa", "bbbb", "cccc", "dddd"] {
            m.push(Speaker::Doctor, t).unwrap();
        }
        assert_eq!(m.len(), 3);
        assert!(m.total_chars() <= 12);
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(
            ConversationMemory::default().append(Speaker::Doctor, "  "),
            Err(ScenarioError::EmptyText)
        ));
        assert!(ConversationMemory::new(0, 1).is_err());
    }

    #[test]
    fn context_with_empty_memory() {
        let msgs = render_context(&prompt(), &ConversationMemory::default(), "hi").unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, Role::System);
        assert_eq!(msgs[1], ChatMessage::new(Role::User, "hi"));
    }

    #[test]
    fn context_orders_memory_oldest_first() {
        let m = ConversationMemory::default()
            .append(Speaker::Doctor, "what brings you in?")
            .unwrap()
            .append(Speaker::Patient, "my head hurts")
            .unwrap();
        let msgs = render_context(&prompt(), &m, "since when?").unwrap();
        let roles: Vec<_> = msgs.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::System, Role::User, Role::Assistant, Role::User]);
        assert_eq!(msgs[1].content, "what brings you in?");
        assert_eq!(msgs[3].content, "since when?");
    }

    #[test]
    fn over_budget_context_drops_oldest_but_keeps_system() {
        // Memory exactly at its 20-char budget; a 6-char utterance forces drops.
        let m = ConversationMemory::new(12, 20)
            .unwrap()
            .append(Speaker::Doctor, "aaaaa")
            .unwrap()
            .append(Speaker::Patient, "bbbbb")
            .unwrap()
            .append(Speaker::Doctor, "ccccc")
            .unwrap()
            .append(Speaker::Patient, "ddddd")
            .unwrap();
        assert_eq!(m.total_chars(), 20);
        let p = prompt();
        let msgs = render_context(&p, &m, "eeeeee").unwrap();
        let contents: Vec<_> = msgs.iter().map(|m| m.content.as_str()).collect();
        assert_eq!(contents, [p.rendered.as_str(), "ccccc", "ddddd", "eeeeee"]);
        let non_system: usize = msgs[1..].iter().map(|m| m.content.chars().count()).sum();
        assert!(non_system <= 20);
    }

    #[test]
    fn empty_utterance_rejected() {
        assert!(render_context(&prompt(), &ConversationMemory::default(), "").is_err());
    }

    proptest! {
        #[test]
        fn retained_turns_are_contiguous_suffix(
            texts in prop::collection::vec("[a-z]{1,30}", 1..40),
            window in 1usize..10,
            budget in 1usize..120,
        ) {
            let mut m = ConversationMemory::new(window, budget).unwrap();
            let mut all = Vec::new();
            for (i, t) in texts.iter().enumerate() {
                let text = format!("{i}:{t}");
                m = m.append(Speaker::Doctor, &text).unwrap();
                all.push(text);
                prop_assert!(m.len() <= window);
                prop_assert!(m.total_chars() <= budget);
                prop_assert!(!m.is_empty());
            }
            let kept: Vec<&MemoryTurn> = m.turns().collect();
            let start = all.len() - kept.len();
            for (k, original) in kept.iter().zip(&all[start..]) {
                if k.truncated {
                    prop_assert!(original.starts_with(&k.text));
                } else {
                    prop_assert_eq!(&k.text, original);
                }
            }
        }

        #[test]
        fn syndrome_never_in_trainee_messages(
            turns in prop::collection::vec("[a-z ]{1,20}", 0..10),
            utterance in "[a-z ]{0,20}[a-z]",
        ) {
            let p = prompt();
            let mut m = ConversationMemory::default();
            for (i, t) in turns.iter().enumerate() {
                let sp = if i % 2 == 0 { Speaker::Doctor } else { Speaker::Patient };
                if t.trim().is_empty() { continue; }
                m.push(sp, t).unwrap();
            }
            prop_assume!(!utterance.contains("migraine"));
            prop_assume!(!turns.iter().any(|t| t.contains("migraine")));
            let msgs = render_context(&p, &m, &utterance).unwrap();
            for msg in &msgs[1..] {
                prop_assert!(!msg.content.contains("migraine"));
            }
        }
    }
}
