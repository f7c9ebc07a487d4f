//! Text serialization helpers shared by every writer.

/// Locale-free float formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}
