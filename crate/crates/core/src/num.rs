//! Exact rational arithmetic used for reference time, clock readings and rates.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn int(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

pub fn frac(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub fn zero() -> Q {
    Q::zero()
}

pub fn one() -> Q {
    Q::one()
}

/// Exact conversion of a finite `f64`.
pub fn from_f64(v: f64) -> Option<Q> {
    Q::from_float(v)
}

pub fn to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or_else(|| {
        // Quotient of huge integers: fall back to scaled division.
        let n = v.numer().bits() as i64;
        let d = v.denom().bits() as i64;
        let shift = (n - d).max(0) as usize;
        let scaled = v / Q::from_integer(BigInt::one() << shift);
        scaled.to_f64().unwrap_or(f64::NAN) * 2f64.powi(shift as i32)
    })
}

pub fn pow(base: &Q, exp: u32) -> Q {
    let mut acc = one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

/// Largest multiple of `quantum` that is `<= v`.
pub fn floor_to(v: &Q, quantum: &Q) -> Q {
    (v / quantum).floor() * quantum
}

/// Smallest multiple of `quantum` that is `>= v`.
pub fn ceil_to(v: &Q, quantum: &Q) -> Q {
    (v / quantum).ceil() * quantum
}

pub fn abs(v: &Q) -> Q {
    v.abs()
}

pub fn min(a: &Q, b: &Q) -> Q {
    if a <= b {
        a.clone()
    } else {
        b.clone()
    }
}

pub fn max(a: &Q, b: &Q) -> Q {
    if a >= b {
        a.clone()
    } else {
        b.clone()
    }
}

/// Parses `"3"`, `"-3/4"` or a decimal such as `"0.125"` into an exact rational.
pub fn parse(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Q::new(n, d));
    }
    if let Some((ip, fp)) = s.split_once('.') {
        let neg = ip.starts_with('-');
        let ip = ip.trim_start_matches('-');
        let ip: BigInt = if ip.is_empty() { BigInt::zero() } else { ip.parse().ok()? };
        if fp.is_empty() || !fp.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let fv: BigInt = fp.parse().ok()?;
        let scale = BigInt::from(10u32).pow(fp.len() as u32);
        let v = Q::new(ip * &scale + fv, scale);
        return Some(if neg { -v } else { v });
    }
    let n: BigInt = s.parse().ok()?;
    Some(Q::from_integer(n))
}

/// Canonical text form used in traces and metrics (`"p/q"` or `"p"`).
pub fn fmt(v: &Q) -> String {
    if v.is_integer() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Integer base-2 logarithm rounded up, for values >= 1.
pub fn log2_ceil(v: &Q) -> u64 {
    let c = v.ceil().to_integer();
    if c <= BigInt::one() {
        return 0;
    }
    let m: BigInt = c - 1;
    m.bits()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse("3"), Some(int(3)));
        assert_eq!(parse("-3/4"), Some(frac(-3, 4)));
        assert_eq!(parse("0.125"), Some(frac(1, 8)));
        assert_eq!(parse("-1.5"), Some(frac(-3, 2)));
        assert_eq!(parse("1/0"), None);
        assert_eq!(parse("x"), None);
    }

    #[test]
    fn rounding_to_quantum() {
        let q = frac(1, 4);
        assert_eq!(floor_to(&frac(7, 10), &q), frac(1, 2));
        assert_eq!(ceil_to(&frac(7, 10), &q), frac(3, 4));
        assert_eq!(floor_to(&frac(-1, 10), &q), frac(-1, 4));
    }

    #[test]
    fn log2_ceil_values() {
        assert_eq!(log2_ceil(&int(1)), 0);
        assert_eq!(log2_ceil(&int(2)), 1);
        assert_eq!(log2_ceil(&int(3)), 2);
        assert_eq!(log2_ceil(&int(1024)), 10);
        assert_eq!(log2_ceil(&int(1025)), 11);
    }

    #[test]
    fn huge_to_f64() {
        let big = pow(&int(10), 400) / pow(&int(10), 398);
        assert!((to_f64(&big) - 100.0).abs() < 1e-9);
    }
}
