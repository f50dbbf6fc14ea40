use isac_reward_dsl::{parse, ParseError, ParseErrorKind, RewardExpr};
use thiserror::Error;

// Lines longer than this are not searched for bare expressions.
const MAX_SCAN_LINE: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error("no reward expression found in the response")]
    NoCandidate,
    #[error("fenced block does not parse: {0}")]
    ParseFailure(ParseError),
    #[error("fenced block uses an unknown feature: {0}")]
    UnknownFeature(ParseError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    /// The text that was parsed.
    pub source: String,
    pub expr: RewardExpr,
}

/// Pulls a reward expression out of free-form model output.
///
/// The first fenced code block wins when present. Otherwise the longest
/// word-aligned substring of a single line that parses and reads at least
/// one feature is taken.
pub fn extract_expression(raw_text: &str) -> Result<Extracted, ExtractError> {
    if let Some(block) = first_fenced_block(raw_text) {
        return match parse(&block) {
            Ok(expr) => Ok(Extracted { source: block, expr }),
            Err(e) if e.kind == ParseErrorKind::UnknownFeature => Err(ExtractError::UnknownFeature(e)),
            Err(e) => Err(ExtractError::ParseFailure(e)),
        };
    }
    raw_text
        .lines()
        .filter(|l| l.chars().count() <= MAX_SCAN_LINE)
        .filter_map(longest_parsing_substring)
        .fold(None, |best: Option<Extracted>, found| match best {
            Some(b) if b.source.chars().count() >= found.source.chars().count() => Some(b),
            _ => Some(found),
        })
        .ok_or(ExtractError::NoCandidate)
}

fn first_fenced_block(text: &str) -> Option<String> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let (first_line, rest) = after.split_once('\n').unwrap_or((after, ""));
    if let Some(close) = first_line.find("```") {
        return Some(first_line[..close].trim().to_string());
    }
    let tag = first_line.trim();
    let is_language_tag = tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    let body = if is_language_tag { rest.to_string() } else { format!("{first_line}\n{rest}") };
    let content = match body.find("```") {
        Some(close) => &body[..close],
        None => body.as_str(),
    };
    Some(content.trim().to_string())
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn longest_parsing_substring(line: &str) -> Option<Extracted> {
    let chars: Vec<char> = line.chars().collect();
    let n = chars.len();
    let starts: Vec<usize> = (0..n)
        .filter(|&i| !chars[i].is_whitespace() && (i == 0 || !is_word_char(chars[i - 1]) || !is_word_char(chars[i])))
        .collect();
    let ends: Vec<usize> = (1..=n)
        .filter(|&j| !chars[j - 1].is_whitespace() && (j == n || !is_word_char(chars[j]) || !is_word_char(chars[j - 1])))
        .collect();
    let mut best: Option<Extracted> = None;
    for &i in &starts {
        for &j in ends.iter().rev() {
            if j <= i {
                break;
            }
            if best.as_ref().is_some_and(|b| b.source.chars().count() >= j - i) {
                break;
            }
            let candidate: String = chars[i..j].iter().collect();
            if let Ok(expr) = parse(&candidate) {
                if !expr.features().is_empty() {
                    best = Some(Extracted { source: candidate, expr });
                    break;
                }
            }
        }
    }
    best
}
