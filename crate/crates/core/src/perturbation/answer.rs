use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Option index within a multiple-choice question, shown as a letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnswerOption(u8);

impl AnswerOption {
    pub const MAX_OPTIONS: usize = 26;

    pub fn from_index(i: usize) -> Option<Self> {
        (i < Self::MAX_OPTIONS).then_some(Self(i as u8))
    }

    pub fn from_letter(c: char) -> Option<Self> {
        let c = c.to_ascii_uppercase();
        c.is_ascii_uppercase().then(|| Self(c as u8 - b'A'))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }
}

impl fmt::Display for AnswerOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Answer {
    Option(AnswerOption),
    Unparseable,
}

impl Answer {
    pub fn as_option(self) -> Option<AnswerOption> {
        match self {
            Answer::Option(o) => Some(o),
            Answer::Unparseable => None,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Option(o) => write!(f, "{o}"),
            Answer::Unparseable => f.write_str("unparseable"),
        }
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        if raw == "unparseable" {
            return Ok(Answer::Unparseable);
        }
        let mut chars = raw.chars();
        match (chars.next().and_then(AnswerOption::from_letter), chars.next()) {
            (Some(o), None) => Ok(Answer::Option(o)),
            _ => Err(serde::de::Error::custom(format!("invalid answer {raw:?}"))),
        }
    }
}

/// Pick the answered option out of a free-text response.
///
/// The first standalone option letter wins. Uppercase letters count on
/// their own; lowercase ones only when bracketed or followed by `.`/`)`,
/// or when they are the whole response, so the article "a" is not read
/// as option A. Failing that, the earliest full option text in the
/// response wins.
pub fn parse_answer(text: &str, options: &[String]) -> Answer {
    let chars: Vec<char> = text.chars().collect();
    let whole = text.trim();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_ascii_alphabetic() {
            continue;
        }
        let prev = i.checked_sub(1).map(|j| chars[j]);
        let next = chars.get(i + 1).copied();
        if prev.is_some_and(char::is_alphanumeric) || next.is_some_and(char::is_alphanumeric) {
            continue;
        }
        let Some(opt) = AnswerOption::from_letter(c).filter(|o| o.index() < options.len()) else {
            continue;
        };
        let decorated = prev == Some('(') || matches!(next, Some('.' | ')'));
        if c.is_ascii_uppercase() || decorated || whole.len() == 1 {
            return Answer::Option(opt);
        }
    }

    let lower = text.to_lowercase();
    options
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            let o = o.trim().to_lowercase();
            if o.is_empty() {
                return None;
            }
            lower.find(&o).map(|pos| (pos, std::cmp::Reverse(o.len()), i))
        })
        .min()
        .and_then(|(_, _, i)| AnswerOption::from_index(i))
        .map_or(Answer::Unparseable, Answer::Option)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> Vec<String> {
        ["an association", "a dysplasia", "a sequence", "a syndrome"]
            .map(String::from)
            .to_vec()
    }

    fn letter(a: Answer) -> Option<char> {
        a.as_option().map(AnswerOption::letter)
    }

    #[test]
    fn letter_forms() {
        assert_eq!(letter(parse_answer("A. an association", &opts())), Some('A'));
        assert_eq!(letter(parse_answer("the answer is (c)", &opts())), Some('C'));
        assert_eq!(letter(parse_answer("b", &opts())), Some('B'));
        assert_eq!(letter(parse_answer("Answer: D", &opts())), Some('D'));
        assert_eq!(letter(parse_answer("d) a syndrome", &opts())), Some('D'));
    }

    #[test]
    fn unparseable() {
        assert_eq!(parse_answer("I cannot determine", &opts()), Answer::Unparseable);
        assert_eq!(parse_answer("", &opts()), Answer::Unparseable);
        assert_eq!(parse_answer("E.", &opts()), Answer::Unparseable);
    }

    #[test]
    fn article_is_not_an_option() {
        assert_eq!(letter(parse_answer("it is a sequence", &opts())), Some('C'));
    }

    #[test]
    fn option_text_fallback_prefers_earliest() {
        assert_eq!(
            letter(parse_answer("probably a syndrome, not a dysplasia", &opts())),
            Some('D')
        );
    }

    #[test]
    fn serde_forms() {
        let a = Answer::Option(AnswerOption::from_letter('c').unwrap());
        assert_eq!(serde_json::to_string(&a).unwrap(), "\"C\"");
        assert_eq!(serde_json::from_str::<Answer>("\"C\"").unwrap(), a);
        assert_eq!(
            serde_json::from_str::<Answer>("\"unparseable\"").unwrap(),
            Answer::Unparseable
        );
        assert!(serde_json::from_str::<Answer>("\"CC\"").is_err());
    }
}
