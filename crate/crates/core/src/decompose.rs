//! Hierarchical query decomposition: one generator call turns a query into
//! entity, knowledge and causal captions for text-image matching.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{Message, Role};
use crate::error::{Error, Result};
use crate::types::Query;

pub const DECOMPOSE_TEMPLATE: &str = include_str!("../assets/decompose_v1.txt");
pub const DECOMPOSE_TEMPLATE_ID: &str = "decompose-v1";

pub const MAX_CAPTIONS_PER_LEVEL: usize = 5;
pub const MAX_CAPTION_WORDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaptionSet {
    pub entity: Vec<String>,
    pub knowledge: Vec<String>,
    pub causal: Vec<String>,
}

impl CaptionSet {
    /// Single-caption set holding the raw query text.
    pub fn fallback(query: &Query) -> Self {
        Self {
            entity: vec![clean_caption(&query.text).unwrap_or_else(|| query.text.clone())],
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.entity.len() + self.knowledge.len() + self.causal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All captions, entity level first.
    pub fn all(&self) -> Vec<String> {
        self.entity
            .iter()
            .chain(&self.knowledge)
            .chain(&self.causal)
            .cloned()
            .collect()
    }
}

/// Renders the decomposition prompt. `template` overrides the shipped one and
/// may use `{question}`, `{options}` and `{max_per_level}`.
pub fn build_decomposition_prompt(query: &Query, template: Option<&str>) -> Result<Vec<Message>> {
    query.validate()?;
    let options = if query.options.is_some() {
        format!("Options:\n{}", query.lettered_options().join("\n"))
    } else {
        String::new()
    };
    let text = template
        .unwrap_or(DECOMPOSE_TEMPLATE)
        .replace("{max_per_level}", &MAX_CAPTIONS_PER_LEVEL.to_string())
        .replace("{question}", query.text.trim())
        .replace("{options}", &options);
    Ok(vec![Message::text(Role::User, text.trim_end())])
}

fn clean_caption(raw: &str) -> Option<String> {
    let words: Vec<&str> = raw.split_whitespace().collect();
    if words.is_empty() {
        return None;
    }
    Some(words[..words.len().min(MAX_CAPTION_WORDS)].join(" "))
}

fn clean_level(items: Vec<String>) -> Vec<String> {
    items
        .iter()
        .filter_map(|s| clean_caption(s))
        .take(MAX_CAPTIONS_PER_LEVEL)
        .collect()
}

#[derive(Clone, Copy)]
enum Level {
    Entity,
    Knowledge,
    Causal,
}

fn level_of(key: &str) -> Option<Level> {
    let k = key.trim().to_ascii_lowercase();
    let k = k.trim_start_matches(|c: char| !c.is_ascii_alphabetic());
    if k.starts_with("entit") {
        Some(Level::Entity)
    } else if k.starts_with("know") {
        Some(Level::Knowledge)
    } else if k.starts_with("causal") || k.starts_with("cause") {
        Some(Level::Causal)
    } else {
        None
    }
}

fn strings_of(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items
            .iter()
            .filter_map(|i| i.as_str().map(str::to_string))
            .collect(),
        _ => Vec::new(),
    }
}

fn from_json_block(response: &str) -> Option<CaptionSet> {
    for (start, _) in response.match_indices('{') {
        let mut stream =
            serde_json::Deserializer::from_str(&response[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            let mut set = CaptionSet::default();
            let mut found = false;
            for (k, v) in &map {
                let items = strings_of(v);
                match level_of(k) {
                    Some(Level::Entity) => set.entity.extend(items),
                    Some(Level::Knowledge) => set.knowledge.extend(items),
                    Some(Level::Causal) => set.causal.extend(items),
                    None => continue,
                }
                found = true;
            }
            if found {
                return Some(set);
            }
        }
    }
    None
}

/// Fallback for replies like `Entity: a dog; a ball` followed by `- item` lines.
fn from_labeled_lists(response: &str) -> Option<CaptionSet> {
    let mut set = CaptionSet::default();
    let mut current: Option<Level> = None;
    let mut found = false;
    for line in response.lines() {
        let t = line.trim();
        if let Some((head, tail)) = t.split_once(':') {
            if let Some(level) = level_of(head).filter(|_| head.split_whitespace().count() <= 3) {
                current = Some(level);
                found = true;
                let items = tail
                    .split(';')
                    .map(str::to_string)
                    .filter(|s| !s.trim().is_empty());
                push(&mut set, level, items);
                continue;
            }
        }
        let bullet = t
            .strip_prefix("- ")
            .or_else(|| t.strip_prefix("* "))
            .or_else(|| t.strip_prefix("• "));
        match (current, bullet) {
            (Some(level), Some(item)) => push(&mut set, level, [item.to_string()]),
            (_, None) if t.is_empty() => {}
            (_, None) => current = None,
            _ => {}
        }
    }
    found.then_some(set)
}

fn push(set: &mut CaptionSet, level: Level, items: impl IntoIterator<Item = String>) {
    let target = match level {
        Level::Entity => &mut set.entity,
        Level::Knowledge => &mut set.knowledge,
        Level::Causal => &mut set.causal,
    };
    target.extend(items);
}

/// Extracts captions from a generator reply: the first JSON object carrying
/// level keys, else labeled lists. Levels are capped at five captions of at
/// most 64 words; blank captions are dropped. A reply with no captions at all
/// is [`Error::Unparseable`].
pub fn parse_decomposition(response: &str) -> Result<CaptionSet> {
    let raw = from_json_block(response)
        .or_else(|| from_labeled_lists(response))
        .ok_or(Error::Unparseable)?;
    let set = CaptionSet {
        entity: clean_level(raw.entity),
        knowledge: clean_level(raw.knowledge),
        causal: clean_level(raw.causal),
    };
    if set.is_empty() {
        return Err(Error::Unparseable);
    }
    Ok(set)
}

/// Decomposition result as recorded in the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub captions: CaptionSet,
    pub fallback: bool,
    pub template_id: String,
    pub raw_response: String,
}

#[cfg(feature = "engine")]
pub async fn decompose_query(
    generator: &dyn crate::backends::Generator,
    query: &Query,
    template: Option<&str>,
) -> Result<Decomposition> {
    let prompt = build_decomposition_prompt(query, template)?;
    let out = crate::backends::generate(generator, &prompt).await?;
    let template_id = if template.is_some() {
        "custom"
    } else {
        DECOMPOSE_TEMPLATE_ID
    };
    let (captions, fallback) = match parse_decomposition(&out.text) {
        Ok(c) => (c, false),
        Err(_) => {
            log::warn!(
                "query {}: decomposition unparseable, using the raw query as the only caption",
                query.id
            );
            (CaptionSet::fallback(query), true)
        }
    };
    Ok(Decomposition {
        captions,
        fallback,
        template_id: template_id.to_string(),
        raw_response: out.text,
    })
}
