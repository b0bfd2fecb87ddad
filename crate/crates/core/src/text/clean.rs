/// Normalizes raw note text: every whitespace run (including CR, LF and
/// TAB) becomes a single space, control characters and the Unicode
/// replacement character are dropped, and the result is trimmed. Case,
/// acronyms and punctuation are left alone.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        if c.is_control() || c == char::REPLACEMENT_CHARACTER {
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(c);
    }
    out
}

/// Like [`clean_text`] for raw bytes: invalid UTF-8 sequences are dropped.
pub fn clean_bytes(raw: &[u8]) -> String {
    clean_text(&String::from_utf8_lossy(raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn control_whitespace_collapses() {
        assert_eq!(clean_text("a\r\nb\tc"), "a b c");
        assert_eq!(clean_text("  lots   of\u{a0}space \n"), "lots of space");
    }

    #[test]
    fn clean_input_is_unchanged() {
        assert_eq!(clean_text("already clean"), "already clean");
        assert_eq!(clean_text("Pt c/o SOB, ?PE."), "Pt c/o SOB, ?PE.");
    }

    #[test]
    fn invalid_bytes_are_dropped() {
        assert_eq!(clean_bytes(b"x\xffy"), "xy");
        assert_eq!(clean_bytes(b"x\x1ay"), "xy");
        assert_eq!(clean_text("x\u{fffd}y"), "xy");
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC*") {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once.clone());
            prop_assert!(!once.contains('\r') && !once.contains('\t') && !once.contains("  "));
        }

        #[test]
        fn idempotent_on_bytes(b in proptest::collection::vec(any::<u8>(), 0..64)) {
            let once = clean_bytes(&b);
            prop_assert_eq!(clean_text(&once), once);
        }
    }
}
