//! The character set shared by every subsystem: 26 lowercase letters followed
//! by 10 digits, with one extra class that doubles as the glyph-grid blank and
//! the text EOS/pad token.

/// Characters in canonical class order: index 0..=25 are 'a'..='z',
/// index 26..=35 are '0'..='9'.
pub const ALPHABET: &[u8; 36] = b"abcdefghijklmnopqrstuvwxyz0123456789";

/// Number of real characters.
pub const ALPHABET_LEN: usize = 36;

/// Class index of the blank glyph channel / EOS text token.
pub const EOS_CLASS: usize = 36;

/// Total class count (characters + blank/EOS).
pub const CLASS_COUNT: usize = 37;

/// Class index for a character, or `None` if it is outside the alphabet.
pub fn class_of(ch: u8) -> Option<usize> {
    match ch {
        b'a'..=b'z' => Some((ch - b'a') as usize),
        b'0'..=b'9' => Some(26 + (ch - b'0') as usize),
        _ => None,
    }
}

/// Character for a class index in `0..ALPHABET_LEN`. Panics on the blank
/// class or anything above it; callers handle EOS before looking up.
pub fn char_of(class: usize) -> u8 {
    assert!(class < ALPHABET_LEN, "class {class} has no character");
    ALPHABET[class]
}
