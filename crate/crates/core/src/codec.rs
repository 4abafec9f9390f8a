//! Policies as k-ary strings, base-k numerals, and the `x·y` split form
//! used for the counter family.
//!
//! Digit 1 is the most significant. Positions handed to and returned from
//! this module are 1-based, matching state names `s_1 … s_m`.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::mdp::Policy;

pub const SEPARATOR: char = '·';

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KaryString {
    digits: Vec<usize>,
    base: usize,
}

impl KaryString {
    pub fn new(digits: Vec<usize>, base: usize) -> Result<Self> {
        if base < 2 {
            return Err(Error::InvalidParameter(format!("base {base} < 2")));
        }
        if let Some(&digit) = digits.iter().find(|&&d| d >= base) {
            return Err(Error::DigitOutOfRange { digit, base });
        }
        Ok(Self { digits, base })
    }

    pub fn zeros(len: usize, base: usize) -> Self {
        Self { digits: vec![0; len], base }
    }

    /// `(base − 1)^len`.
    pub fn max_digits(len: usize, base: usize) -> Self {
        Self { digits: vec![base - 1; len], base }
    }

    /// The `len`-digit string whose numeral is `value`.
    pub fn from_numeral(value: &BigUint, len: usize, base: usize) -> Result<Self> {
        let b = BigUint::from(base);
        let mut rest = value.clone();
        let mut digits = vec![0; len];
        for d in digits.iter_mut().rev() {
            let r = &rest % &b;
            *d = r.iter_u64_digits().next().unwrap_or(0) as usize;
            rest /= &b;
        }
        if !rest.is_zero() {
            return Err(Error::InvalidParameter(format!("{value} needs more than {len} base-{base} digits")));
        }
        Ok(Self { digits, base })
    }

    pub fn parse(text: &str, base: usize) -> Result<Self> {
        let digits = text
            .chars()
            .map(|c| {
                c.to_digit(36)
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::Parse(format!("bad digit {c:?} in {text:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(digits, base)
    }

    pub fn digits(&self) -> &[usize] {
        &self.digits
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// Digit at 1-based position `u`.
    pub fn at(&self, u: usize) -> usize {
        self.digits[u - 1]
    }

    /// `[x] = Σ x_u k^{r−u}`; the empty string is 0.
    pub fn numeral(&self) -> BigUint {
        self.digits
            .iter()
            .fold(BigUint::zero(), |acc, &d| acc * self.base + d)
    }

    /// First `r` digits.
    pub fn prefix(&self, r: usize) -> Result<Self> {
        if r > self.len() {
            return Err(Error::InvalidParameter(format!("prefix length {r} > {}", self.len())));
        }
        Ok(Self { digits: self.digits[..r].to_vec(), base: self.base })
    }

    pub fn concat(&self, other: &Self) -> Self {
        debug_assert_eq!(self.base, other.base);
        let mut digits = self.digits.clone();
        digits.extend_from_slice(&other.digits);
        Self { digits, base: self.base }
    }

    /// Appends `count` copies of `digit`.
    pub fn push_repeated(mut self, digit: usize, count: usize) -> Self {
        debug_assert!(digit < self.base);
        self.digits.extend(std::iter::repeat(digit).take(count));
        self
    }

    pub fn is_all_max(&self) -> bool {
        self.digits.iter().all(|&d| d == self.base - 1)
    }

    /// Largest 1-based position whose digit is not `k − 1`.
    pub fn last_non_max_index(&self) -> Result<usize> {
        self.digits
            .iter()
            .rposition(|&d| d != self.base - 1)
            .map(|i| i + 1)
            .ok_or_else(|| Error::InvalidParameter(format!("{self} has every digit equal to k − 1")))
    }
}

impl fmt::Display for KaryString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &d in &self.digits {
            let c = std::char::from_digit(d as u32, 36).ok_or(fmt::Error)?;
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Policy on the counter family written as `x·y`: `x` for `s_1 … s_m`,
/// `y` for the partners `s'_1 … s'_m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SplitPolicy {
    pub x: KaryString,
    pub y: KaryString,
}

impl SplitPolicy {
    pub fn new(x: KaryString, y: KaryString) -> Result<Self> {
        if x.len() != y.len() || x.base() != y.base() {
            return Err(Error::InvalidParameter(format!("halves {x} and {y} are not compatible")));
        }
        Ok(Self { x, y })
    }

    pub fn balanced(x: KaryString) -> Self {
        Self { y: x.clone(), x }
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn is_balanced(&self) -> bool {
        self.x == self.y
    }

    pub fn split(policy: &Policy, m: usize, k: usize) -> Result<Self> {
        if policy.len() != 2 * m {
            return Err(Error::PolicyLength { expected: 2 * m, got: policy.len() });
        }
        let a = policy.actions();
        Ok(Self {
            x: KaryString::new(a[..m].to_vec(), k)?,
            y: KaryString::new(a[m..].to_vec(), k)?,
        })
    }

    pub fn join(&self) -> Policy {
        let mut actions = self.x.digits().to_vec();
        actions.extend_from_slice(self.y.digits());
        Policy::new(actions)
    }

    /// Parses `x·y` (a plain `.` is accepted as separator too).
    pub fn parse(text: &str, k: usize) -> Result<Self> {
        let (x, y) = text
            .split_once(SEPARATOR)
            .or_else(|| text.split_once('.'))
            .ok_or_else(|| Error::Parse(format!("missing separator in {text:?}")))?;
        Self::new(KaryString::parse(x, k)?, KaryString::parse(y, k)?)
    }
}

impl fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{SEPARATOR}{}", self.x, self.y)
    }
}

/// Renders a policy, inserting the separator after the first `split_at`
/// states when given.
pub fn render(policy: &Policy, split_at: Option<usize>) -> String {
    match split_at {
        Some(m) if m <= policy.len() => {
            let (a, b) = policy.actions().split_at(m);
            format!("{}{SEPARATOR}{}", Policy::new(a.to_vec()), Policy::new(b.to_vec()))
        }
        _ => policy.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ks(s: &str, k: usize) -> KaryString {
        KaryString::parse(s, k).unwrap()
    }

    #[test]
    fn numerals() {
        assert_eq!(ks("012", 3).numeral(), BigUint::from(5u32));
        assert_eq!(ks("0000", 5).numeral(), BigUint::zero());
        assert_eq!(KaryString::max_digits(4, 3).numeral(), BigUint::from(80u32));
        assert_eq!(ks("", 3).numeral(), BigUint::zero());
    }

    #[test]
    fn prefixes() {
        assert_eq!(ks("012", 3).prefix(2).unwrap(), ks("01", 3));
        assert!(ks("012", 3).prefix(0).unwrap().is_empty());
        assert_eq!(ks("012", 3).prefix(3).unwrap(), ks("012", 3));
        assert!(ks("012", 3).prefix(4).is_err());
    }

    #[test]
    fn last_non_max() {
        assert_eq!(ks("002", 3).last_non_max_index().unwrap(), 2);
        assert_eq!(ks("000", 3).last_non_max_index().unwrap(), 3);
        assert_eq!(ks("120", 3).last_non_max_index().unwrap(), 3);
        assert!(ks("222", 3).last_non_max_index().is_err());
    }

    #[test]
    fn split_join() {
        let p = Policy::new(vec![0, 0, 0, 0, 0, 1]);
        let sp = SplitPolicy::split(&p, 3, 3).unwrap();
        assert_eq!(sp.x, ks("000", 3));
        assert_eq!(sp.y, ks("001", 3));
        assert_eq!(sp.to_string(), "000·001");
        assert_eq!(sp.join(), p);
        let bal = SplitPolicy::balanced(ks("012", 3));
        assert_eq!(bal.join(), Policy::new(vec![0, 1, 2, 0, 1, 2]));
        assert!(SplitPolicy::split(&p, 2, 3).is_err());
        assert_eq!(SplitPolicy::parse("002·012", 3).unwrap().to_string(), "002·012");
        assert_eq!(render(&p, Some(3)), "000·001");
        assert_eq!(render(&p, None), "000001");
    }

    #[test]
    fn digit_range_enforced() {
        assert!(matches!(KaryString::new(vec![0, 3], 3), Err(Error::DigitOutOfRange { digit: 3, base: 3 })));
    }

    /// Successor characterisation, exhaustively for k, m ≤ 4.
    #[test]
    fn successor_shape() {
        for k in 2usize..=4 {
            for m in 1..=4 {
                let total = k.pow(m as u32);
                for v in 0..total - 1 {
                    let x = KaryString::from_numeral(&BigUint::from(v), m, k).unwrap();
                    let y = KaryString::from_numeral(&BigUint::from(v + 1), m, k).unwrap();
                    let i = x.last_non_max_index().unwrap();
                    let expected = KaryString::new(vec![x.at(i) + 1], k)
                        .map(|mid| x.prefix(i - 1).unwrap().concat(&mid))
                        .unwrap()
                        .push_repeated(0, m - i);
                    assert_eq!(y, expected, "k={k} m={m} x={x}");
                }
            }
        }
    }

    fn kary() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, usize)> {
        (2usize..7).prop_flat_map(|k| {
            (
                proptest::collection::vec(0..k, 0..6),
                proptest::collection::vec(0..k, 0..6),
                Just(k),
            )
        })
    }

    proptest! {
        #[test]
        fn numeral_of_concat((a, b, k) in kary()) {
            let x = KaryString::new(a, k).unwrap();
            let y = KaryString::new(b, k).unwrap();
            let lhs = x.concat(&y).numeral();
            let rhs = x.numeral() * BigUint::from(k).pow(y.len() as u32) + y.numeral();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn numeral_is_bijective((a, _b, k) in kary()) {
            let x = KaryString::new(a, k).unwrap();
            let back = KaryString::from_numeral(&x.numeral(), x.len(), k).unwrap();
            prop_assert_eq!(back, x);
        }

        #[test]
        fn split_round_trip((a, b, k) in kary()) {
            let m = a.len().min(b.len());
            let mut actions = a[..m].to_vec();
            actions.extend_from_slice(&b[..m]);
            let p = Policy::new(actions);
            prop_assert_eq!(SplitPolicy::split(&p, m, k).unwrap().join(), p);
        }
    }
}
