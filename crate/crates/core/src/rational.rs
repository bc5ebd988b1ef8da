//! Exact rational helpers shared by the LP, bound and executor code.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn zero() -> Q {
    Q::zero()
}

pub fn one() -> Q {
    Q::one()
}

/// "p/q" with integers rendered as "p/1".
pub fn fmt_q(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub fn parse_q(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: BigInt = a.trim().parse().ok()?;
        let b: BigInt = b.trim().parse().ok()?;
        if b.is_zero() {
            return None;
        }
        Some(Q::new(a, b))
    } else {
        let a: BigInt = s.parse().ok()?;
        Some(Q::from_integer(a))
    }
}

pub fn to_f64(x: &Q) -> f64 {
    x.numer().to_f64().unwrap_or(f64::NAN) / x.denom().to_f64().unwrap_or(f64::NAN)
}

/// `value <= 2^e` decided exactly: with e = a/b (b > 0), value^b <= 2^a.
pub fn le_pow2(value: u64, e: &Q) -> bool {
    if value == 0 {
        return true;
    }
    if e.is_negative() {
        // 2^e < 1 <= value
        return false;
    }
    let a = e.numer().to_u64().expect("exponent numerator too large");
    let b = e.denom().to_u32().expect("exponent denominator too large");
    // clear cases are settled in floating point; the big power only runs near the boundary
    if value.is_power_of_two() {
        return value.trailing_zeros() as u64 * b as u64 <= a;
    }
    let lhs = b as f64 * (value as f64).log2();
    let gap = lhs - a as f64;
    if gap.abs() > 1e-12 * (lhs + a as f64) + 1e-9 {
        return gap < 0.0;
    }
    num::pow(BigInt::from(value), b as usize) <= (BigInt::one() << a)
}

/// ⌈log₂ v⌉ for v ≥ 1 (0 for v ≤ 1).
pub fn ceil_log2(v: u64) -> u32 {
    if v <= 1 {
        0
    } else {
        64 - (v - 1).leading_zeros()
    }
}

/// Smallest dyadic a/den with a/den ≥ log₂ v. Exact for powers of two.
pub fn log2_upper(v: u64, den: u64) -> Q {
    if v <= 1 {
        return zero();
    }
    if v.is_power_of_two() {
        return qi(v.trailing_zeros() as i64);
    }
    let x = (den as f64) * (v as f64).log2();
    let mut a = x.ceil();
    if a - x < 1e-6 {
        a += 1.0;
    }
    Q::new(BigInt::from(a as i64), BigInt::from(den))
}

pub fn lcm_denoms<'a>(xs: impl IntoIterator<Item = &'a Q>) -> BigInt {
    let mut l = BigInt::one();
    for x in xs {
        let d = x.denom().clone();
        l = num::integer::lcm(l, d);
    }
    l
}

pub fn max_q<'a>(xs: impl IntoIterator<Item = &'a Q>) -> Option<Q> {
    xs.into_iter().cloned().reduce(|a, b| if a >= b { a } else { b })
}

pub fn to_u64(x: &BigInt) -> u64 {
    x.to_u64().expect("integer out of range")
}

pub mod serde_q {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).ok_or_else(|| serde::de::Error::custom(format!("bad rational {s:?}")))
    }
}

pub mod serde_qvec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[Q], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(fmt_q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| parse_q(s).ok_or_else(|| serde::de::Error::custom(format!("bad rational {s:?}"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow2_test_exact() {
        assert!(le_pow2(8, &qi(3)));
        assert!(!le_pow2(9, &qi(3)));
        // 2^(3/2) ≈ 2.83
        assert!(le_pow2(2, &q(3, 2)));
        assert!(!le_pow2(3, &q(3, 2)));
        assert!(le_pow2(1, &zero()));
        assert!(!le_pow2(2, &zero()));
    }

    #[test]
    fn ceil_logs() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(15), 4);
        assert_eq!(log2_upper(64, 1 << 24), qi(6));
        let l = log2_upper(3, 1 << 10);
        assert!(to_f64(&l) >= 3f64.log2());
    }

    #[test]
    fn roundtrip_text() {
        assert_eq!(fmt_q(&q(6, 4)), "3/2");
        assert_eq!(fmt_q(&qi(2)), "2/1");
        assert_eq!(parse_q("3/2"), Some(q(3, 2)));
        assert_eq!(parse_q("-4"), Some(qi(-4)));
        assert_eq!(parse_q("1/0"), None);
    }
}
