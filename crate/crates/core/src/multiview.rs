//! Stage 3: question answering over the retrieved frames in several rounds,
//! each from a different analysis view, stopping early once two consecutive
//! answers agree and voting over the answers collected.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backends::{ContentPart, Message, Role};
use crate::error::{Error, Result};
use crate::types::{option_letter, FrameRecord, Query};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRound {
    pub t: usize,
    pub reason: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTrace {
    pub rounds: Vec<QaRound>,
    pub k: usize,
    #[serde(rename = "final")]
    pub final_answer: String,
    /// Generator calls made, retries included.
    pub calls: usize,
    /// Rounds dropped after the retry also had no answer.
    pub discarded: usize,
}

pub const VIEW_INSTRUCTION: &str = "Respond from a view that differs from those employed in previous rounds, and state that view explicitly at the start of your reason.";

/// Builds the prompt for round `history.len() + 1`: all frames as images,
/// then the question, then (from round 2 on) every earlier reason and answer.
pub fn build_round_prompt(query: &Query, frames: &[FrameRecord], history: &[QaRound]) -> Vec<Message> {
    let mut content: Vec<ContentPart> = frames
        .iter()
        .map(|f| Message::image(f.content_ref.clone()))
        .collect();
    let mut text = format!("Question: {}\n", query.text.trim());
    if query.options.is_some() {
        text.push_str("Options:\n");
        for line in query.lettered_options() {
            text.push_str(&line);
            text.push('\n');
        }
    }
    if !history.is_empty() {
        text.push_str("\nPrevious rounds:\n");
        for r in history {
            text.push_str(&format!("Round {} reason: {}\n", r.t, r.reason));
            text.push_str(&format!("Round {} answer: {}\n", r.t, r.answer));
        }
        text.push('\n');
        text.push_str(VIEW_INSTRUCTION);
        text.push('\n');
    }
    let answer_hint = if query.options.is_some() {
        "the letter of one option"
    } else {
        "a short answer"
    };
    text.push_str(&format!(
        "\nReply in exactly this format:\nREASON: <the view you take and your analysis>\nANSWER: <{answer_hint}>"
    ));
    content.push(ContentPart::Text { text });
    vec![Message {
        role: Role::User,
        content,
    }]
}

fn strip_label<'a>(line: &'a str, labels: &[&str]) -> Option<&'a str> {
    let t = line.trim_start().trim_start_matches(['*', '#', ' ']);
    let lower = t.to_ascii_lowercase();
    for label in labels {
        if lower.starts_with(label) {
            let rest = t[label.len()..].trim_start_matches(['*', ' ']);
            if let Some(rest) = rest.strip_prefix(':') {
                return Some(rest.trim_start_matches('*').trim());
            }
        }
    }
    None
}

/// Canonical answer form: whitespace collapsed, outer brackets and trailing
/// punctuation removed. A lone option letter (`b`, `(b)`, `B)`, `B. red`) is
/// upper-cased; other answers are lower-cased.
pub fn canonicalize_answer(raw: &str) -> String {
    let s = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    let s = s.trim_end_matches(['.', '!', ',', ';']).trim();
    let unwrapped = s
        .strip_prefix('(')
        .and_then(|x| x.strip_suffix(')'))
        .or_else(|| s.strip_prefix('[').and_then(|x| x.strip_suffix(']')))
        .unwrap_or(s)
        .trim();
    let mut chars = unwrapped.chars();
    if let Some(c) = chars.next() {
        if c.is_ascii_alphabetic() {
            let rest = chars.as_str();
            let letter_only = rest.is_empty()
                || rest == ")"
                || rest.starts_with(". ")
                || rest.starts_with(") ")
                || rest.starts_with(": ");
            if letter_only {
                return c.to_ascii_uppercase().to_string();
            }
        }
    }
    unwrapped.to_lowercase()
}

/// Maps a canonical answer onto an option letter when it spells out one of
/// the options.
pub fn match_option(answer: &str, query: &Query) -> String {
    if let Some(opts) = &query.options {
        if (0..opts.len()).any(|i| option_letter(i).to_string() == answer) {
            return answer.to_string();
        }
        for (i, o) in opts.iter().enumerate() {
            if canonicalize_answer(o) == answer {
                return option_letter(i).to_string();
            }
        }
    }
    answer.to_string()
}

/// Extracts `(reason, canonical answer)` from a reply with `REASON:` and
/// `ANSWER:` labels. The last answer label wins; the reason runs from its
/// label to the answer label, or is the text before the answer otherwise.
pub fn parse_round(response: &str) -> Result<(String, String)> {
    let lines: Vec<&str> = response.lines().collect();
    let ans_pos = lines
        .iter()
        .rposition(|l| strip_label(l, &["final answer", "answer"]).is_some())
        .ok_or(Error::AnswerMissing)?;
    let answer = canonicalize_answer(
        strip_label(lines[ans_pos], &["final answer", "answer"]).unwrap_or(""),
    );
    if answer.is_empty() {
        return Err(Error::AnswerMissing);
    }
    let reason_pos = lines[..ans_pos]
        .iter()
        .rposition(|l| strip_label(l, &["reason"]).is_some());
    let reason = match reason_pos {
        Some(p) => {
            let mut parts = vec![strip_label(lines[p], &["reason"]).unwrap_or("")];
            parts.extend(lines[p + 1..ans_pos].iter().map(|l| l.trim()));
            parts.join("\n")
        }
        None => lines[..ans_pos].join("\n"),
    };
    Ok((reason.trim().to_string(), answer))
}

/// True when the round budget is used up or the last two answers agree.
pub fn should_stop(answers: &[String], t: usize, max_rounds: usize) -> bool {
    debug_assert_eq!(t, answers.len());
    if t >= max_rounds {
        return true;
    }
    t >= 2 && canonicalize_answer(&answers[t - 1]) == canonicalize_answer(&answers[t - 2])
}

/// Plurality vote; ties go to the answer whose last occurrence is latest.
pub fn vote(answers: &[String]) -> Option<String> {
    let mut stats: HashMap<String, (usize, usize)> = HashMap::new();
    for (i, a) in answers.iter().enumerate() {
        let e = stats.entry(canonicalize_answer(a)).or_insert((0, 0));
        e.0 += 1;
        e.1 = i;
    }
    stats
        .into_iter()
        .max_by_key(|(_, (count, last))| (*count, *last))
        .map(|(a, _)| a)
}

#[cfg(feature = "engine")]
pub use engine::run_multiview;

#[cfg(feature = "engine")]
mod engine {
    use super::*;
    use crate::backends::{generate, Generator};

    /// Runs up to `max_rounds` answered rounds. A reply without an answer is
    /// retried once with the same prompt; if that fails too the round is
    /// dropped and does not count. At most `max_rounds` rounds may be dropped.
    pub async fn run_multiview(
        generator: &dyn Generator,
        frames: &[FrameRecord],
        query: &Query,
        max_rounds: usize,
    ) -> Result<QaTrace> {
        if frames.is_empty() {
            return Err(Error::Precondition("no frames to answer from".into()));
        }
        if max_rounds == 0 {
            return Err(Error::Precondition("n_views must be at least 1".into()));
        }
        query.validate()?;
        let mut rounds: Vec<QaRound> = Vec::new();
        let mut answers: Vec<String> = Vec::new();
        let mut calls = 0;
        let mut discarded = 0;
        while rounds.len() < max_rounds && discarded < max_rounds {
            let prompt = build_round_prompt(query, frames, &rounds);
            let mut parsed = None;
            for _ in 0..2 {
                calls += 1;
                let out = generate(generator, &prompt).await?;
                match parse_round(&out.text) {
                    Ok(p) => {
                        parsed = Some(p);
                        break;
                    }
                    Err(_) => log::warn!("query {}: reply without an answer", query.id),
                }
            }
            let Some((reason, answer)) = parsed else {
                discarded += 1;
                continue;
            };
            let answer = match_option(&answer, query);
            rounds.push(QaRound {
                t: rounds.len() + 1,
                reason,
                answer: answer.clone(),
            });
            answers.push(answer);
            if should_stop(&answers, answers.len(), max_rounds) {
                break;
            }
        }
        let final_answer = vote(&answers).ok_or(Error::QaFailed)?;
        Ok(QaTrace {
            k: rounds.len(),
            rounds,
            final_answer,
            calls,
            discarded,
        })
    }
}
