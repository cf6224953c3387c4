//! Presentation helpers shared by the CLI and the HTTP API.

/// `score` as a percentage with two decimals, rounded half away from zero on
/// the shortest decimal form of the score: 0.6423 gives `"64.23%"`, 0.12345
/// gives `"12.35%"`.
pub fn format_percent(score: f64) -> String {
    if !score.is_finite() {
        return format!("{score}%");
    }
    // Display for f64 is the shortest round-tripping decimal, never exponential.
    let text = format!("{}", score.abs());
    let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
    let mut frac = frac.to_string();
    while frac.len() < 5 {
        frac.push('0');
    }
    // Digits of score * 10_000, i.e. the percentage in hundredths.
    let mut digits: Vec<u8> = int.bytes().chain(frac[..4].bytes()).map(|b| b - b'0').collect();
    if frac.as_bytes()[4] >= b'5' {
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
    let first_nonzero = digits.iter().position(|&d| d != 0);
    let split = digits.len() - 2;
    let whole_start = first_nonzero.map_or(split - 1, |p| p.min(split - 1));
    let whole: String = digits[whole_start..split].iter().map(|d| char::from(b'0' + d)).collect();
    let cents: String = digits[split..].iter().map(|d| char::from(b'0' + d)).collect();
    let sign = if score < 0.0 && first_nonzero.is_some() { "-" } else { "" };
    format!("{sign}{whole}.{cents}%")
}
