//! Exact probabilities.
//!
//! Every probability in the crate is a [`BigRational`]. Literals are accepted
//! as `a/b` fractions, integers, or finite decimals (`0.25` is read as `1/4`).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Prob = BigRational;

pub fn parse_prob(text: &str) -> Result<Prob> {
    let bad = || Error::BadProbability(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int_part) || !all_digits(frac_part) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| bad())?
    };
    let denom = num_traits::pow(BigInt::from(10u32), frac_part.len());
    let value = BigRational::new(numer, denom);
    Ok(if negative { -value } else { value })
}

/// `p/q` in lowest terms, or just `p` when the denominator is one.
pub fn format_prob(p: &Prob) -> String {
    if p.denom().is_one() {
        p.numer().to_string()
    } else {
        format!("{}/{}", p.numer(), p.denom())
    }
}

pub fn to_f64(p: &Prob) -> f64 {
    p.to_f64().unwrap_or_else(|| {
        // numerator and denominator can both overflow f64; scale down first
        let shift = p.denom().bits().max(p.numer().bits()).saturating_sub(1000);
        let n = (p.numer() >> shift).to_f64().unwrap_or(0.0);
        let d = (p.denom() >> shift).to_f64().unwrap_or(1.0);
        n / d
    })
}

pub fn is_probability(p: &Prob) -> bool {
    p.is_positive() && *p <= Prob::one()
}

pub fn one() -> Prob {
    Prob::one()
}

pub fn zero() -> Prob {
    Prob::zero()
}

pub fn ratio(n: i64, d: i64) -> Prob {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `base^-exp` as an exact rational.
pub fn inverse_power(base: u32, exp: usize) -> Prob {
    BigRational::new(BigInt::one(), num_traits::pow(BigInt::from(base), exp))
}

pub(crate) mod serde_prob {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{format_prob, parse_prob, Prob};

    pub fn serialize<S: Serializer>(p: &Prob, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_prob(p))
    }

    #[allow(dead_code)]
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Prob, D::Error> {
        let text = String::deserialize(d)?;
        parse_prob(&text).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod serde_prob_map {
    use std::collections::BTreeMap;

    use serde::ser::SerializeMap;
    use serde::Serializer;

    use super::{format_prob, Prob};
    use crate::system::StateId;

    pub fn serialize<S: Serializer>(m: &BTreeMap<StateId, Prob>, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(m.len()))?;
        for (k, v) in m {
            map.serialize_entry(k.as_str(), &format_prob(v))?;
        }
        map.end()
    }
}
