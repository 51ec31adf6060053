//! Decimal formatting with a fixed number of significant digits.

use std::fmt::Write as _;

/// Appends `v` rounded to `digits` significant digits, as the shortest text
/// that parses back to the rounded value. Plain notation for magnitudes in
/// `[1e-5, 1e15)`, exponent notation otherwise.
pub fn format_sig(v: f64, digits: usize, out: &mut String) {
    debug_assert!((1..=17).contains(&digits));
    let start = out.len();
    write_short(v, out);
    if significant_digits(&out[start..]) <= digits {
        return;
    }
    out.truncate(start);
    let rounded: f64 = format!("{v:.*e}", digits - 1).parse().expect("formatted float parses");
    write_short(rounded, out);
}

/// The value that `format_sig(v, digits)` parses back to.
pub fn round_sig(v: f64, digits: usize) -> f64 {
    let mut s = String::with_capacity(24);
    format_sig(v, digits, &mut s);
    s.parse().expect("formatted float parses")
}

fn write_short(v: f64, out: &mut String) {
    let a = v.abs();
    if v == 0.0 {
        out.push('0');
    } else if !(1e-5..1e15).contains(&a) {
        let _ = write!(out, "{v:e}");
    } else {
        let _ = write!(out, "{v}");
    }
}

fn significant_digits(s: &str) -> usize {
    let mantissa = s.split(['e', 'E']).next().unwrap_or("");
    let digits = mantissa.trim_start_matches('-').replace('.', "");
    digits.trim_start_matches('0').trim_end_matches('0').len()
}
