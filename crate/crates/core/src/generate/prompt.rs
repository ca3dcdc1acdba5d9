use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{DocumentPair, EndpointKind, ModelConfig, SystemPromptId};
use crate::error::{Error, Result};

pub const MINIMAL_EN: &str = "Please continue the text in the same manner and style, ensuring it contains at least five thousand words. The text does not need to be factually correct, but please make sure it fits stylistically.";

pub const MINIMAL_CS: &str = "Please continue the Czech text in the same language, manner and style, ensuring it contains at least five thousand words. The text does not need to be factually correct, but please make sure it fits stylistically.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Message {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PromptPayload {
    Completion { prompt: String },
    Chat { messages: Vec<Message> },
}

/// User-supplied system prompt texts that are not shipped with the crate.
#[derive(Debug, Clone, Default)]
pub struct PromptTexts {
    pub long_assistant: Option<String>,
}

impl PromptTexts {
    pub fn with_long_assistant_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(PromptTexts {
            long_assistant: Some(text),
        })
    }
}

pub fn build_prompt(pair: &DocumentPair, config: &ModelConfig, texts: &PromptTexts) -> Result<PromptPayload> {
    config.validate()?;
    if config.endpoint_kind == EndpointKind::Completion {
        return Ok(PromptPayload::Completion {
            prompt: pair.part1_text.clone(),
        });
    }
    let system = match config.system_prompt_id {
        SystemPromptId::None => None,
        SystemPromptId::Minimal => Some(MINIMAL_EN.to_string()),
        SystemPromptId::MinimalCzech => Some(MINIMAL_CS.to_string()),
        SystemPromptId::LongAssistant => match (&texts.long_assistant, &config.appended_instruction) {
            (Some(text), Some(_)) => Some(text.clone()),
            _ => return Err(Error::MissingPromptFile(config.config_id.clone())),
        },
    };
    let user = match &config.appended_instruction {
        Some(extra) => format!("{}\n\n{}", pair.part1_text, extra),
        None => pair.part1_text.clone(),
    };
    let mut messages = Vec::with_capacity(2);
    if let Some(s) = system {
        messages.push(Message::new("system", s));
    }
    messages.push(Message::new("user", user));
    Ok(PromptPayload::Chat { messages })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Completion prompts hash to `sha256(part1)`; chat payloads hash their
/// serialized message list.
pub fn prompt_hash(payload: &PromptPayload) -> String {
    match payload {
        PromptPayload::Completion { prompt } => sha256_hex(prompt.as_bytes()),
        PromptPayload::Chat { messages } => {
            sha256_hex(serde_json::to_string(messages).expect("messages serialize").as_bytes())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> DocumentPair {
        DocumentPair {
            doc_id: "d1".into(),
            genre: "press".into(),
            language: "en".into(),
            part1_text: "  The first part,\nwith odd  spacing. ".into(),
            part2_text: "rest".into(),
            word_count_part1: 6,
            valid: true,
        }
    }

    fn config(kind: EndpointKind, sys: SystemPromptId) -> ModelConfig {
        ModelConfig {
            config_id: "c".into(),
            endpoint_kind: kind,
            model_name: "m".into(),
            temperature: 0.0,
            system_prompt_id: sys,
            appended_instruction: None,
            endpoint: "default".into(),
        }
    }

    #[test]
    fn completion_prompt_is_part1() {
        let p = build_prompt(&pair(), &config(EndpointKind::Completion, SystemPromptId::None), &PromptTexts::default())
            .unwrap();
        assert_eq!(p, PromptPayload::Completion { prompt: pair().part1_text });
        assert_eq!(prompt_hash(&p), sha256_hex(pair().part1_text.as_bytes()));
    }

    #[test]
    fn minimal_system_messages() {
        let p = build_prompt(&pair(), &config(EndpointKind::Chat, SystemPromptId::Minimal), &PromptTexts::default())
            .unwrap();
        let PromptPayload::Chat { messages } = p else { panic!() };
        assert_eq!(messages[0].role, "system");
        assert_eq!(messages[0].content, MINIMAL_EN);
        assert_eq!(messages[1].content, pair().part1_text);

        let p = build_prompt(&pair(), &config(EndpointKind::Chat, SystemPromptId::MinimalCzech), &PromptTexts::default())
            .unwrap();
        let PromptPayload::Chat { messages } = p else { panic!() };
        assert!(messages[0].content.starts_with("Please continue the Czech text in the same language"));
    }

    #[test]
    fn long_assistant_needs_file_and_instruction() {
        let mut c = config(EndpointKind::Chat, SystemPromptId::LongAssistant);
        let texts = PromptTexts {
            long_assistant: Some("You are a helpful assistant.".into()),
        };
        assert!(matches!(build_prompt(&pair(), &c, &texts), Err(Error::MissingPromptFile(_))));
        c.appended_instruction = Some("Generate continuation of this text.".into());
        assert!(matches!(
            build_prompt(&pair(), &c, &PromptTexts::default()),
            Err(Error::MissingPromptFile(_))
        ));
        let PromptPayload::Chat { messages } = build_prompt(&pair(), &c, &texts).unwrap() else { panic!() };
        assert_eq!(messages[0].content, "You are a helpful assistant.");
        assert_eq!(
            messages[1].content,
            format!("{}\n\nGenerate continuation of this text.", pair().part1_text)
        );
    }

    #[test]
    fn no_system_prompt_chat() {
        let p = build_prompt(&pair(), &config(EndpointKind::Chat, SystemPromptId::None), &PromptTexts::default())
            .unwrap();
        let PromptPayload::Chat { messages } = p else { panic!() };
        assert_eq!(messages.len(), 1);
    }
}
