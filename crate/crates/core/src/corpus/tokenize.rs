//! Rule-based tokenizer.
//!
//! The rules are fixed so that every count in this crate is reproducible
//! without an external library:
//!
//! 1. lowercase the text (Unicode-aware),
//! 2. split on whitespace,
//! 3. peel leading and trailing non-alphanumeric characters off each chunk
//!    as single-character tokens (an apostrophe between letters stays put),
//! 4. split the contraction suffixes `'re`, `'ll`, `n't`, `'s` off the
//!    remaining core as their own tokens.
//!
//! `"You're DUMB!"` becomes `["you", "'re", "dumb", "!"]`.

/// Contraction suffixes split from a word core, longest first.
const CONTRACTIONS: [&str; 4] = ["'re", "'ll", "n't", "'s"];

/// Tokenizes one message. Empty input yields an empty stream.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        tokenize_chunk(chunk, &mut tokens);
    }
    tokens
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut start = 0;
    let mut end = chars.len();
    while start < end && !chars[start].is_alphanumeric() {
        start += 1;
    }
    while end > start && !chars[end - 1].is_alphanumeric() {
        end -= 1;
    }

    for &c in &chars[..start] {
        out.push(c.to_string());
    }
    if start < end {
        let core: String = chars[start..end].iter().collect();
        match split_contraction(&core) {
            Some((stem, suffix)) => {
                out.push(stem.to_string());
                out.push(suffix.to_string());
            }
            None => out.push(core),
        }
    }
    for &c in &chars[end..] {
        out.push(c.to_string());
    }
}

fn split_contraction(core: &str) -> Option<(&str, &str)> {
    for suffix in CONTRACTIONS {
        if let Some(stem) = core.strip_suffix(suffix) {
            if !stem.is_empty() {
                return Some((stem, &core[stem.len()..]));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text)
    }

    #[test]
    fn contraction_and_trailing_punctuation() {
        assert_eq!(toks("You're DUMB!"), ["you", "'re", "dumb", "!"]);
    }

    #[test]
    fn empty_input_is_empty_stream() {
        assert_eq!(toks(""), Vec::<String>::new());
        assert_eq!(toks("   \t\n "), Vec::<String>::new());
    }

    #[test]
    fn single_word_passes_through() {
        assert_eq!(toks("abc"), ["abc"]);
    }

    #[test]
    fn leading_punctuation_is_peeled_in_order() {
        assert_eq!(toks("\"(hi)\""), ["\"", "(", "hi", ")", "\""]);
        assert_eq!(toks("wow!!"), ["wow", "!", "!"]);
    }

    #[test]
    fn all_punctuation_chunk() {
        assert_eq!(toks("--"), ["-", "-"]);
    }

    #[test]
    fn negation_contraction() {
        assert_eq!(toks("can't you'll we's"), ["ca", "n't", "you", "'ll", "we", "'s"]);
    }

    #[test]
    fn internal_apostrophe_without_known_suffix_stays() {
        assert_eq!(toks("o'clock"), ["o'clock"]);
    }

    #[test]
    fn bare_suffix_is_not_split_again() {
        // Leading apostrophe peels first, leaving no stem to split.
        assert_eq!(toks("'s"), ["'", "s"]);
    }

    #[test]
    fn numbers_are_kept() {
        assert_eq!(toks("call 911 now"), ["call", "911", "now"]);
    }

    #[test]
    fn tokens_are_lowercase_and_nonempty() {
        let stream = toks("MiXeD ÉCLAIR don't STOP!!! 'TIL");
        for t in &stream {
            assert!(!t.is_empty());
            assert_eq!(t.to_lowercase(), *t, "token {t:?} not lowercase-stable");
        }
    }

    #[test]
    fn joined_output_is_lowercase_idempotent() {
        let stream = toks("He said: \"DON'T you'll they're!\" ÉCLAIR");
        let joined = stream.join(" ");
        assert_eq!(joined.to_lowercase(), joined);
    }
}
