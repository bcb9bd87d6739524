//! Plain-decimal formatting at a fixed number of significant digits.
//!
//! Panels serialize at 10 significant digits and model records at 12. The
//! formatter is its own fixpoint: `format_sig(parse(format_sig(x)))` yields
//! the identical string, which is what makes text round-trips stable.

/// Format `x` as a plain decimal with `sig` significant digits.
///
/// Non-finite inputs are rendered with the default `Display` so they remain
/// visible in diagnostics; CSV writers are expected to map missing values to
/// empty cells before calling this.
pub fn format_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1, "significant digits must be >= 1");
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let decimals = sig_decimals(x, sig);
    if decimals >= 0 {
        format!("{:.*}", decimals as usize, x)
    } else {
        // Magnitude exceeds the significant width: round to a power of ten.
        let scale = 10f64.powi(-decimals);
        format!("{:.0}", (x / scale).round() * scale)
    }
}

/// Round `x` to `sig` significant digits by passing it through the text form.
pub fn quantize_sig(x: f64, sig: usize) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format_sig(x, sig).parse().expect("format_sig emits valid f64 text")
}

fn sig_decimals(x: f64, sig: usize) -> i32 {
    let exp = x.abs().log10().floor() as i32;
    let mut decimals = sig as i32 - 1 - exp;
    // Rounding can carry across a power of ten (0.99995 -> 1.0); recompute the
    // exponent from the rounded value so the printed width stays canonical.
    let scale = 10f64.powi(decimals);
    let rounded = (x * scale).round() / scale;
    if rounded != 0.0 {
        let exp2 = rounded.abs().log10().floor() as i32;
        if exp2 != exp {
            decimals = sig as i32 - 1 - exp2;
        }
    }
    decimals
}
