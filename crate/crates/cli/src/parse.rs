//! Value parsers for exact rationals, reals written as fractions and 3-vectors.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use serde::{Serialize, Serializer};

/// An exponent given on the command line, kept exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rat(pub Rational64);

impl Rat {
    pub fn f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for Rat {
    type Err = String;

    /// Accepts "p/q", integers and finite decimals such as "-0.125".
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let bad = || format!("'{s}' is not a rational number (expected p/q or a finite decimal)");
        if let Some((p, q)) = s.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(format!("'{s}' has a zero denominator"));
            }
            return Ok(Rat(Rational64::new(p, q)));
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 17 {
            return Err(bad());
        }
        let digits: i64 = format!("{int}{frac}").parse().map_err(|_| bad())?;
        let r = Rational64::new(digits, 10i64.pow(frac.len() as u32));
        Ok(Rat(if neg { -r } else { r }))
    }
}

pub fn rational(s: &str) -> Result<Rat, String> {
    s.parse()
}

/// A real number, also accepted as a fraction "p/q" or "inf".
pub fn real(s: &str) -> Result<f64, String> {
    let t = s.trim();
    if let Some((p, q)) = t.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
        let q: f64 = q.trim().parse().map_err(|_| format!("'{s}' is not a number"))?;
        return Ok(p / q);
    }
    t.parse().map_err(|_| format!("'{s}' is not a number"))
}

fn reals<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v = s.split(',').map(real).collect::<Result<Vec<_>, _>>()?;
    v.try_into().map_err(|_| format!("'{s}' needs {N} comma-separated numbers"))
}

pub fn vec3(s: &str) -> Result<[f64; 3], String> {
    reals::<3>(s)
}

pub fn vec4(s: &str) -> Result<[f64; 4], String> {
    reals::<4>(s)
}

pub fn eta(s: &str) -> Result<[u32; 3], String> {
    let v = s.split(',').map(|p| p.trim().parse::<u32>()).collect::<Result<Vec<_>, _>>().map_err(|e| format!("'{s}': {e}"))?;
    v.try_into().map_err(|_| format!("'{s}' needs 3 comma-separated nonnegative integers"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals_are_exact() {
        assert_eq!(rational("8/3").unwrap().0, Rational64::new(8, 3));
        assert_eq!(rational("0.5").unwrap().0, Rational64::new(1, 2));
        assert_eq!(rational("-0.125").unwrap().0, Rational64::new(-1, 8));
        assert_eq!(rational("7").unwrap().0, Rational64::from_integer(7));
        assert_eq!(rational("6/4").unwrap().to_string(), "3/2");
        for bad in ["", "1/0", "x", "1.2.3", "1e-3", "."] {
            assert!(rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn reals_accept_fractions() {
        assert_eq!(real("8/3").unwrap(), 8.0 / 3.0);
        assert_eq!(real("-0.5").unwrap(), -0.5);
        assert!(real("inf").unwrap().is_infinite());
        assert_eq!(vec3("1, -2,0.5").unwrap(), [1.0, -2.0, 0.5]);
        assert!(vec3("1,2").is_err());
        assert_eq!(eta("0,1,2").unwrap(), [0, 1, 2]);
    }
}
