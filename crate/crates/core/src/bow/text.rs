use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Identifies the preprocessing below; stored in serialized models.
pub const PREPROCESSING_TAG: &str = "nfkd-strip-marks-ascii-lower-ws";

/// Lowercases and folds text to ASCII, then splits on whitespace.
///
/// Folding is compatibility decomposition, removal of combining marks, then
/// removal of any remaining non-ASCII character.
pub fn preprocess(text: &str) -> Vec<String> {
    let folded: String = text
        .nfkd()
        .filter(|c| !is_combining_mark(*c) && c.is_ascii())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    folded.split_ascii_whitespace().map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases() {
        assert_eq!(preprocess("Vaccines WORK"), ["vaccines", "work"]);
    }

    #[test]
    fn folds_to_ascii() {
        assert_eq!(preprocess("café ❤️ vax"), ["cafe", "vax"]);
        assert_eq!(preprocess("ﬁne Ⅳ"), ["fine", "iv"]);
    }

    #[test]
    fn empty() {
        assert!(preprocess("").is_empty());
        assert!(preprocess("  \t ❤️ ").is_empty());
    }
}
