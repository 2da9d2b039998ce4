//! Exact rational arithmetic helpers.
//!
//! Every threshold comparison in the crate is decided on [`Ratio`] values,
//! which are arbitrary-precision rationals kept in reduced form.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serializer};
use thiserror::Error;

pub type Ratio = BigRational;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed rational {0:?}; expected \"p\" or \"p/q\"")]
pub struct ParseRatioError(pub String);

pub fn ratio(num: i64, den: i64) -> Ratio {
    Ratio::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Ratio {
    Ratio::from_integer(BigInt::from(v))
}

pub fn zero() -> Ratio {
    Ratio::zero()
}

pub fn one() -> Ratio {
    Ratio::one()
}

/// Parses `"p/q"`, `"p"` or a finite decimal such as `"0.25"`.
pub fn parse_ratio(s: &str) -> Result<Ratio, ParseRatioError> {
    let t = s.trim();
    let err = || ParseRatioError(s.to_string());
    if let Some((p, q)) = t.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| err())?;
        let q: BigInt = q.trim().parse().map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(Ratio::new(p, q));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let neg = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches('-');
        let digits = format!("{whole_digits}{frac}");
        let mut num: BigInt = digits.parse().map_err(|_| err())?;
        if neg {
            num = -num;
        }
        let den = num_traits::pow(BigInt::from(10), frac.len());
        return Ok(Ratio::new(num, den));
    }
    let p: BigInt = t.parse().map_err(|_| err())?;
    Ok(Ratio::from_integer(p))
}

/// Formats as `"p/q"`, or `"p"` for integers.
pub fn fmt_ratio(r: &Ratio) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn to_f64(r: &Ratio) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // numerator or denominator overflowed f64 individually
        let shift = r.numer().bits().max(r.denom().bits()) as i64 - 900;
        if shift <= 0 {
            return f64::NAN;
        }
        let n = (r.numer() >> shift as usize).to_f64().unwrap_or(f64::NAN);
        let d = (r.denom() >> shift as usize).to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

pub fn abs_diff(a: &Ratio, b: &Ratio) -> Ratio {
    (a - b).abs()
}

/// Sum of an iterator of borrowed rationals.
pub fn sum<'a, I: IntoIterator<Item = &'a Ratio>>(it: I) -> Ratio {
    it.into_iter().fold(Ratio::zero(), |acc, v| acc + v)
}

pub mod serde_ratio {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Ratio, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_ratio(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio, D::Error> {
        let s = String::deserialize(d)?;
        parse_ratio(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_ratio_opt {
    use super::*;
    use serde::Serialize;

    pub fn serialize<S: Serializer>(r: &Option<Ratio>, s: S) -> Result<S::Ok, S::Error> {
        r.as_ref().map(fmt_ratio).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Ratio>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| parse_ratio(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

pub mod serde_ratio_vec {
    use super::*;
    use serde::Serialize;

    pub fn serialize<S: Serializer>(v: &[Ratio], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(fmt_ratio).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Ratio>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| parse_ratio(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_ratio("3/5").unwrap(), ratio(3, 5));
        assert_eq!(parse_ratio("6/10").unwrap(), ratio(3, 5));
        assert_eq!(parse_ratio("2").unwrap(), int(2));
        assert_eq!(parse_ratio("0.25").unwrap(), ratio(1, 4));
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("abc").is_err());
        assert!(parse_ratio("1.").is_err());
    }

    #[test]
    fn format_round_trip() {
        for r in [ratio(3, 5), int(7), ratio(-1, 3), zero()] {
            assert_eq!(parse_ratio(&fmt_ratio(&r)).unwrap(), r);
        }
        assert_eq!(fmt_ratio(&ratio(20, 36)), "5/9");
    }
}
