/// Rendered in place of an unavailable value.
pub const UNAVAILABLE: &str = "--";

pub fn format_value(v: Option<f64>, precision: u8) -> String {
    match v {
        Some(x) if x.is_finite() => format_fixed(x, precision),
        _ => UNAVAILABLE.to_string(),
    }
}

/// Fixed-point rendering with `precision` decimals, rounding half away from
/// zero.
///
/// Rounding works on the shortest decimal string that round-trips to `x`, not
/// on the binary value: `1.005` is stored as `1.00499999999999989...` but is
/// written `1.005`, so it renders `"1.01"`. A result that rounds to zero is
/// printed without a sign.
pub fn format_fixed(x: f64, precision: u8) -> String {
    let p = usize::from(precision);
    let shortest = format!("{}", x.abs());
    let (int_part, frac_part) = shortest.split_once('.').unwrap_or((&shortest, ""));
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes()).map(|b| b - b'0').collect();
    let frac_len = frac_part.len();

    if frac_len > p {
        let keep = int_part.len() + p;
        let round_up = digits[keep] >= 5;
        digits.truncate(keep);
        if round_up {
            let mut i = digits.len();
            loop {
                if i == 0 {
                    digits.insert(0, 1);
                    break;
                }
                i -= 1;
                if digits[i] == 9 {
                    digits[i] = 0;
                } else {
                    digits[i] += 1;
                    break;
                }
            }
        }
    } else {
        digits.extend(std::iter::repeat(0).take(p - frac_len));
    }

    let split = digits.len() - p;
    let mut out = String::with_capacity(digits.len() + 2);
    if x.is_sign_negative() && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    out.extend(digits[..split].iter().map(|&d| char::from(b'0' + d)));
    if split == 0 {
        out.push('0');
    }
    if p > 0 {
        out.push('.');
        out.extend(digits[split..].iter().map(|&d| char::from(b'0' + d)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goldens() {
        let cases: &[(f64, u8, &str)] = &[
            (34.23, 2, "34.23"),
            (1.005, 2, "1.01"),
            (-1.005, 2, "-1.01"),
            (2.675, 2, "2.68"),
            (0.125, 2, "0.13"),
            (0.0, 2, "0.00"),
            (-0.0, 2, "0.00"),
            (-0.004, 2, "0.00"),
            (-0.005, 2, "-0.01"),
            (9.995, 2, "10.00"),
            (99.5, 0, "100"),
            (0.5, 0, "1"),
            (3.0, 3, "3.000"),
            (1e21, 1, "1000000000000000000000.0"),
            (1e-7, 2, "0.00"),
            (123.456, 1, "123.5"),
        ];
        for &(x, p, want) in cases {
            assert_eq!(format_fixed(x, p), want, "{x} @ {p}");
        }
        assert_eq!(format_value(None, 2), "--");
        assert_eq!(format_value(Some(f64::NAN), 2), "--");
    }
}
