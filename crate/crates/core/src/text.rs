//! Byte classification shared by pre-tokenization, patching and corpus statistics.

/// ASCII space, tab, newline and carriage return.
pub fn is_space_like(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r')
}

/// Number of maximal runs of non-space bytes.
pub fn word_count(bytes: &[u8]) -> u64 {
    let mut words = 0;
    let mut in_word = false;
    for &b in bytes {
        let space = is_space_like(b);
        if !space && !in_word {
            words += 1;
        }
        in_word = !space;
    }
    words
}
