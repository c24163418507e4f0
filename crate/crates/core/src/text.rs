//! Decimal rendering helpers shared by the text file formats.

/// Renders `x` with `digits` significant digits in plain positional notation,
/// trimming trailing zeros. Magnitudes outside 1e-20..1e21 fall back to
/// exponent notation, which the parsers accept as well.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    debug_assert!(digits >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let mut sig: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    while sig.len() > 1 && sig.ends_with('0') {
        sig.pop();
    }

    if !(-20..=20).contains(&exp) {
        let (head, tail) = sig.split_at(1);
        let body = if tail.is_empty() {
            head.to_string()
        } else {
            format!("{head}.{tail}")
        };
        return format!("{}{}e{}", if negative { "-" } else { "" }, body, exp);
    }

    let point = exp + 1;
    let mut out = String::with_capacity(sig.len() + 24);
    if negative {
        out.push('-');
    }
    if point <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-point) as usize));
        out.push_str(&sig);
    } else if point as usize >= sig.len() {
        out.push_str(&sig);
        out.extend(std::iter::repeat_n('0', point as usize - sig.len()));
    } else {
        out.push_str(&sig[..point as usize]);
        out.push('.');
        out.push_str(&sig[point as usize..]);
    }
    out
}

/// 17-significant-digit rendering; parsing it back yields the same `f64`.
pub fn fmt_exact(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rounds `x` to what survives a `fmt_sig(x, 9)` / parse round trip.
pub fn quantize9(x: f64) -> f64 {
    fmt_sig(x, 9).parse().expect("fmt_sig output parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_rendering() {
        assert_eq!(fmt_sig(10.0, 9), "10");
        assert_eq!(fmt_sig(-1.0, 9), "-1");
        assert_eq!(fmt_sig(0.9, 9), "0.9");
        assert_eq!(fmt_sig(1.5, 9), "1.5");
        assert_eq!(fmt_sig(0.000123, 9), "0.000123");
        assert_eq!(fmt_sig(123456789012.0, 9), "123456789000");
        assert_eq!(fmt_sig(std::f64::consts::PI, 9), "3.14159265");
        assert_eq!(fmt_sig(-0.0, 9), "0");
    }

    #[test]
    fn extreme_magnitudes_use_exponent() {
        assert_eq!(fmt_sig(1.25e-30, 9), "1.25e-30");
        assert_eq!(fmt_sig(-2e25, 9), "-2e25");
        assert_eq!("1.25e-30".parse::<f64>().unwrap(), 1.25e-30);
    }

    #[test]
    fn exact_rendering_round_trips() {
        for x in [0.1, 1.0 / 3.0, -7.25e-12, 12345.678901234567, f64::MIN_POSITIVE] {
            assert_eq!(fmt_exact(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn quantize_is_idempotent() {
        for x in [0.123456789123, 88.77665544332211, -3.0000000004] {
            let q = quantize9(x);
            assert_eq!(quantize9(q), q);
            assert_eq!(fmt_sig(q, 9), fmt_sig(x, 9));
        }
    }
}
