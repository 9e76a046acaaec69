use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("invalid argument: {0} is not a fraction in [0,1]")]
pub struct OutOfRange(pub f64);

/// Renders a fraction as a percent: ×100, round half-up to two decimals,
/// drop trailing zeros and a dangling decimal point.
///
/// Rounding works on the nine-decimal expansion so that values such as
/// 0.70905 (stored as 70.90499…×10⁻²) still round up to `70.91%`.
pub fn format_percent(value: f64) -> Result<String, OutOfRange> {
    if !(0.0..=1.0).contains(&value) {
        return Err(OutOfRange(value));
    }
    let expanded = format!("{:.9}", value * 100.0);
    let (int_part, frac) = expanded.split_once('.').expect("fixed-point formatting");
    let int: u64 = int_part.parse().expect("digits");
    let frac = frac.as_bytes();
    let mut hundredths = int * 100 + u64::from(frac[0] - b'0') * 10 + u64::from(frac[1] - b'0');
    if frac[2] >= b'5' {
        hundredths += 1;
    }
    let whole = hundredths / 100;
    let cents = hundredths % 100;
    Ok(match cents {
        0 => format!("{whole}%"),
        c if c % 10 == 0 => format!("{whole}.{}%", c / 10),
        c => format!("{whole}.{c:02}%"),
    })
}
