use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory as G};

/// Segmentation strategy applied after punctuation removal.
pub trait Tokenizer {
    fn segment(&self, text: &str) -> Vec<String>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    /// Whitespace split; CJK runs inside a word become one token per character.
    #[default]
    Whitespace,
    /// Every non-whitespace character is a token.
    Char,
}

impl TokenizerKind {
    pub fn name(self) -> &'static str {
        match self {
            TokenizerKind::Whitespace => "whitespace",
            TokenizerKind::Char => "char",
        }
    }
}

impl std::str::FromStr for TokenizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace" => Ok(TokenizerKind::Whitespace),
            "char" => Ok(TokenizerKind::Char),
            other => Err(format!("unknown tokenizer `{other}` (expected whitespace|char)")),
        }
    }
}

pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        G::ConnectorPunctuation
            | G::DashPunctuation
            | G::OpenPunctuation
            | G::ClosePunctuation
            | G::InitialPunctuation
            | G::FinalPunctuation
            | G::OtherPunctuation
    )
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // kana
        | 0x3400..=0x4DBF    // ext A
        | 0x4E00..=0x9FFF    // unified ideographs
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F) // ext B onwards
}

pub fn strip_punctuation(text: &str) -> String {
    text.chars().filter(|&c| !is_punctuation(c)).collect()
}

impl Tokenizer for TokenizerKind {
    fn segment(&self, text: &str) -> Vec<String> {
        match self {
            TokenizerKind::Char => text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
            TokenizerKind::Whitespace => {
                let mut out = Vec::new();
                for word in text.split_whitespace() {
                    let mut run = String::new();
                    for c in word.chars() {
                        if is_cjk(c) {
                            if !run.is_empty() {
                                out.push(std::mem::take(&mut run));
                            }
                            out.push(c.to_string());
                        } else {
                            run.push(c);
                        }
                    }
                    if !run.is_empty() {
                        out.push(run);
                    }
                }
                out
            }
        }
    }
}

/// Removes punctuation, then segments with `tokenizer`.
pub fn tokenize_with(text: &str, tokenizer: &dyn Tokenizer) -> Vec<String> {
    tokenizer.segment(&strip_punctuation(text))
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, &TokenizerKind::Whitespace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_punctuation() {
        assert_eq!(tokenize("buy low, sell high!"), vec!["buy", "low", "sell", "high"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ,.!? ").is_empty());
        // Symbols are not punctuation.
        assert_eq!(tokenize("up 5% to $3"), vec!["up", "5", "to", "$3"]);
    }

    #[test]
    fn cjk_falls_back_to_characters() {
        assert_eq!(tokenize("股市涨"), vec!["股", "市", "涨"]);
        assert_eq!(tokenize("A股，大涨！"), vec!["A", "股", "大", "涨"]);
        assert_eq!(tokenize_with("ab cd", &TokenizerKind::Char), vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn kind_parses() {
        assert_eq!("char".parse::<TokenizerKind>().unwrap(), TokenizerKind::Char);
        assert!("jieba".parse::<TokenizerKind>().is_err());
    }
}
