//! Canonical number formatting for CSV output.

/// Significant digits written for every float.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats `v` with [`SIGNIFICANT_DIGITS`] significant digits, trailing zeros
/// removed. Plain decimal notation is used for magnitudes in `[1e-5, 1e15)`,
/// scientific notation otherwise.
pub fn canonical(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // Round once in scientific form so the decimal exponent is exact.
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-5..15).contains(&exp) {
        return format!("{}e{exp}", trim(mantissa));
    }
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let mut out = String::with_capacity(digits.len() + 8);
    if negative {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    } else {
        let int = exp as usize + 1;
        if digits.len() <= int {
            out.push_str(&digits);
            out.extend(std::iter::repeat_n('0', int - digits.len()));
        } else {
            out.push_str(&digits[..int]);
            out.push('.');
            out.push_str(&digits[int..]);
        }
    }
    trim(&out).to_string()
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
