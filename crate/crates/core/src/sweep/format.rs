//! Number formatting shared by the table emitters and the CLI.

/// Two decimals; non-finite values print as `inf` / `nan`.
pub fn fixed2(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.2}")
    }
}

/// Integral thresholds print without a fractional part.
pub fn threshold(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

/// Probabilities in the tables' style: `1.00` for one, otherwise a mantissa
/// cut (not rounded) to two decimals with a two-digit exponent, as in
/// `3.90e-03` for `2^-8`.
pub fn probability(p: f64) -> String {
    if !(p > 0.0) || !p.is_finite() {
        return format!("{p}");
    }
    let mut e = p.log10().floor() as i32;
    let mut m = p / 10f64.powi(e);
    if m >= 10.0 {
        m /= 10.0;
        e += 1;
    } else if m < 1.0 {
        m *= 10.0;
        e -= 1;
    }
    let cut = (m * 100.0 + 1e-9).floor() / 100.0;
    if e == 0 {
        return format!("{cut:.2}");
    }
    let sign = if e < 0 { '-' } else { '+' };
    format!("{cut:.2}e{sign}{:02}", e.abs())
}

/// Shortest representation that parses back to the same value.
pub fn exact(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x}")
    }
}

/// Parses a number, accepting scientific notation such as `1e6`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Parses a count such as `1000000` or `1e6`; it must be a whole number.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let v = parse_number(s)?;
    if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(format!("`{s}` is not a non-negative whole number"));
    }
    Ok(v as u64)
}

/// Parses `a,b,c` or a geometric series `geom:start:ratio:count`.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if let Some(rest) = s.strip_prefix("geom:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("`{s}`: expected geom:start:ratio:count"));
        }
        let start = parse_number(parts[0])?;
        let ratio = parse_number(parts[1])?;
        let count = parse_count(parts[2])?;
        return Ok((0..count).map(|k| start * ratio.powi(k as i32)).collect());
    }
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_number).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_match_table_style() {
        let want = [
            "1.00", "5.00e-01", "2.50e-01", "1.25e-01", "6.25e-02", "3.12e-02", "1.56e-02", "7.81e-03", "3.90e-03",
            "1.95e-03", "9.76e-04", "4.88e-04", "2.44e-04", "1.22e-04", "6.10e-05", "3.05e-05", "1.52e-05", "7.62e-06",
            "3.81e-06", "1.90e-06", "9.53e-07", "4.76e-07",
        ];
        for (k, w) in want.iter().enumerate() {
            assert_eq!(probability(2f64.powi(-(k as i32))), *w);
        }
        assert_eq!(probability(0.1), "1.00e-01");
        assert_eq!(probability(1e-12), "1.00e-12");
    }

    #[test]
    fn numbers_and_lists() {
        assert_eq!(parse_count("1e6").unwrap(), 1_000_000);
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert_eq!(parse_number("4.88e-04").unwrap(), 4.88e-4);
        assert_eq!(parse_list("0,1, 2").unwrap(), vec![0.0, 1.0, 2.0]);
        assert_eq!(parse_list("geom:1:0.5:3").unwrap(), vec![1.0, 0.5, 0.25]);
        assert!(parse_list("geom:1:2").is_err());
        assert!(parse_list("1,x").is_err());
        assert_eq!(threshold(1048576.0), "1048576");
        assert_eq!(threshold(2.5), "2.5");
        assert_eq!(fixed2(f64::INFINITY), "inf");
        assert_eq!(fixed2(2.0 / 0.9), "2.22");
    }
}
