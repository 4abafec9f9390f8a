//! Adversarial MDP families and the discount-transfer certificate.
//!
//! * `F(m, k)`: a k-ary counter on `s_1 … s_m` with a partner `s'_i` for
//!   every counter state. Deterministic, one terminal.
//! * `G(n, k)`: a chain `s_1 … s_n` where action 0 terminates with reward
//!   `−2^i`, action `k − 1` moves on, and intermediate actions mix the two.
//! * `H(n, k)`: the Simple-PI chain with decision states `s_i`, chance
//!   states `s'_i` and two terminals, action `j ≥ 1` paying `ε / 2^{k−1−j}`.
//!
//! Terminal-entry rewards are folded into `R(s, a)` as the expected entry
//! reward, so terminals themselves are reward-free.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::engine::analyze;
use crate::error::{Error, Result};
use crate::mdp::{policy_count, Mdp, MdpDefinition, Policy};
use crate::rational::{self, int, pow2, ratio, Rational};

/// Default cap on `k^n` for the Q-gap sweep.
pub const DEFAULT_DELTA_BUDGET: u128 = 100_000;
/// Denominator bound for the rational upper bound on an irrational root.
pub const ROOT_DENOMINATOR_BOUND: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyKind {
    F,
    G,
    H,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            FamilyKind::F => "F",
            FamilyKind::G => "G",
            FamilyKind::H => "H",
        };
        f.write_str(c)
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" | "f" => Ok(FamilyKind::F),
            "G" | "g" => Ok(FamilyKind::G),
            "H" | "h" => Ok(FamilyKind::H),
            other => Err(Error::Parse(format!("unknown family {other:?}"))),
        }
    }
}

/// `F:m,k`, `G:n,k` or `H:n,k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FamilyDescriptor {
    pub kind: FamilyKind,
    pub size: usize,
    pub k: usize,
}

impl FamilyDescriptor {
    pub fn new(kind: FamilyKind, size: usize, k: usize) -> Self {
        Self { kind, size, k }
    }

    pub fn build(&self) -> Result<(Mdp, FamilyLayout)> {
        match self.kind {
            FamilyKind::F => build_f(self.size, self.k),
            FamilyKind::G => build_g(self.size, self.k),
            FamilyKind::H => build_h(self.size, self.k),
        }
    }
}

impl fmt::Display for FamilyDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{},{}", self.kind, self.size, self.k)
    }
}

impl FromStr for FamilyDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad family descriptor {s:?}, expected e.g. F:3,3"));
        let (kind, params) = s.trim().split_once(':').ok_or_else(bad)?;
        let (size, k) = params.split_once(',').ok_or_else(bad)?;
        Ok(Self {
            kind: kind.trim().parse()?,
            size: size.trim().parse().map_err(|_| bad())?,
            k: k.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// State naming and indexing conventions of a family instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyLayout {
    pub kind: FamilyKind,
    /// `m` for F, `n` for G and H.
    pub size: usize,
    pub k: usize,
    /// Names of all states, non-terminals first.
    pub state_names: Vec<String>,
}

impl FamilyLayout {
    pub fn descriptor(&self) -> FamilyDescriptor {
        FamilyDescriptor::new(self.kind, self.size, self.k)
    }

    pub fn n_nonterminal(&self) -> usize {
        match self.kind {
            FamilyKind::F | FamilyKind::H => 2 * self.size,
            FamilyKind::G => self.size,
        }
    }

    /// Where the `·` goes when rendering policies: F splits counter from
    /// partner states, H splits decision from chance states.
    pub fn split_at(&self) -> Option<usize> {
        match self.kind {
            FamilyKind::F | FamilyKind::H => Some(self.size),
            FamilyKind::G => None,
        }
    }

    pub fn render(&self, policy: &Policy) -> String {
        crate::codec::render(policy, self.split_at())
    }

    pub fn zeros(&self) -> Policy {
        Policy::zeros(self.n_nonterminal())
    }

    /// Simple-PI indexing from lowest to highest. For H the chance states
    /// rank below every decision state and `s_i` ranks by `i`; otherwise
    /// state-creation order.
    pub fn simple_order(&self) -> Vec<usize> {
        match self.kind {
            FamilyKind::H => (self.size..2 * self.size).chain(0..self.size).collect(),
            _ => (0..self.n_nonterminal()).collect(),
        }
    }

    /// States whose action choice matters (H's chance states excluded).
    pub fn decision_states(&self) -> std::ops::Range<usize> {
        match self.kind {
            FamilyKind::H => 0..self.size,
            _ => 0..self.n_nonterminal(),
        }
    }
}

fn check_params(name: &str, size: usize, k: usize) -> Result<()> {
    if size < 1 || k < 2 {
        return Err(Error::InvalidParameter(format!(
            "{name}({size},{k}) needs size ≥ 1 and k ≥ 2"
        )));
    }
    Ok(())
}

/// Counter family: `s_i` at index `i − 1`, `s'_i` at `m + i − 1`, terminal
/// `s_T` at `2m`. From `s_i` and `s'_i` alike, action `j` pays `j·k^{m−i}`;
/// for `i ≥ 2` action 0 leads to `s'_{i−1}` and actions `j ≥ 1` to
/// `s_{i−1}`; from `i = 1` every action terminates.
pub fn build_f(m: usize, k: usize) -> Result<(Mdp, FamilyLayout)> {
    check_params("F", m, k)?;
    let terminal = 2 * m;
    let mut def = MdpDefinition::zeroed(2 * m, 1, k);
    let scale = |i: usize| Rational::from_integer(num_traits::pow(BigInt::from(k), m - i));
    for i in 1..=m {
        for s in [i - 1, m + i - 1] {
            for j in 0..k {
                let target = match (i, j) {
                    (1, _) => terminal,
                    (_, 0) => m + i - 2,
                    _ => i - 2,
                };
                def.set(s, j, int(j as i64) * scale(i), &[(target, int(1))]);
            }
        }
    }
    let mut names: Vec<String> = (1..=m).map(|i| format!("s_{i}")).collect();
    names.extend((1..=m).map(|i| format!("s'_{i}")));
    names.push("s_T".into());
    let layout = FamilyLayout { kind: FamilyKind::F, size: m, k, state_names: names };
    Ok((Mdp::try_from(def)?, layout))
}

/// `p_j = 1/2 + (k − j)/(2k)`.
pub fn g_intermediate_prob(j: usize, k: usize) -> Rational {
    ratio(1, 2) + ratio((k - j) as i64, 2 * k as i64)
}

/// Chain family: `s_i` at index `i − 1`; terminal `t_i` (entered by
/// terminating from `s_i`, entry reward `−2^i`) at `n + i − 1`; `t_end` at
/// `2n`. Intermediate actions are genuinely two-outcome.
pub fn build_g(n: usize, k: usize) -> Result<(Mdp, FamilyLayout)> {
    check_params("G", n, k)?;
    let mut def = MdpDefinition::zeroed(n, n + 1, k);
    for i in 1..=n {
        let s = i - 1;
        let stop = n + i - 1;
        let next = if i < n { i } else { 2 * n };
        let penalty = -pow2(i as i64);
        def.set(s, 0, penalty.clone(), &[(stop, int(1))]);
        def.set(s, k - 1, int(0), &[(next, int(1))]);
        for j in 1..k - 1 {
            let p = g_intermediate_prob(j, k);
            let q = Rational::one() - &p;
            def.set(s, j, &penalty * &p, &[(stop, p), (next, q)]);
        }
    }
    let mut names: Vec<String> = (1..=n).map(|i| format!("s_{i}")).collect();
    names.extend((1..=n).map(|i| format!("t_{i}")));
    names.push("t_end".into());
    let layout = FamilyLayout { kind: FamilyKind::G, size: n, k, state_names: names };
    Ok((Mdp::try_from(def)?, layout))
}

/// `ε = 2^{−n}`.
pub fn h_epsilon(n: usize) -> Rational {
    pow2(-(n as i64))
}

/// Simple-PI family: decision state `s_i` at index `i − 1`, chance state
/// `s'_i` at `n + i − 1`, `t_lose` (entry reward −1) at `2n`, `t_win` at
/// `2n + 1`.
///
/// Action 0 moves `s_i → s_{i−1}` with no reward, and `s_1` into `t_lose`.
/// Action `j ≥ 1` moves `s_i → s'_i` with reward `ε / 2^{k−1−j}`. Every
/// action of `s'_i` goes with probability 1/2 each to `s_{i−2}` and
/// `s'_{i−1}`, reading `s_0` and `s'_0` as `t_lose` and `s_{−1}` as `t_win`.
pub fn build_h(n: usize, k: usize) -> Result<(Mdp, FamilyLayout)> {
    check_params("H", n, k)?;
    let (lose, win) = (2 * n, 2 * n + 1);
    let eps = h_epsilon(n);
    let mut def = MdpDefinition::zeroed(2 * n, 2, k);
    let decision = |i: isize| match i {
        i if i >= 1 => (i - 1) as usize,
        0 => lose,
        _ => win,
    };
    let chance = |i: usize| if i >= 1 { n + i - 1 } else { lose };
    let half = ratio(1, 2);
    for i in 1..=n {
        let down = decision(i as isize - 1);
        let entry = if down == lose { int(-1) } else { int(0) };
        def.set(i - 1, 0, entry, &[(down, int(1))]);
        for j in 1..k {
            def.set(i - 1, j, &eps / pow2((k - 1 - j) as i64), &[(chance(i), int(1))]);
        }
        let outcomes = [(decision(i as isize - 2), half.clone()), (chance(i - 1), half.clone())];
        let loss: Rational = outcomes
            .iter()
            .filter(|(t, _)| *t == lose)
            .map(|(_, p)| p.clone())
            .sum();
        for j in 0..k {
            def.set(n + i - 1, j, -loss.clone(), &outcomes);
        }
    }
    let mut names: Vec<String> = (1..=n).map(|i| format!("s_{i}")).collect();
    names.extend((1..=n).map(|i| format!("s'_{i}")));
    names.extend(["t_lose".to_string(), "t_win".to_string()]);
    let layout = FamilyLayout { kind: FamilyKind::H, size: n, k, state_names: names };
    Ok((Mdp::try_from(def)?, layout))
}

/// Discount threshold above which every Q-value ordering of the
/// total-reward MDP is preserved.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiscountCertificate {
    /// Smallest gap between Q-values of two distinguishable actions.
    #[serde(with = "rational::text")]
    pub delta: Rational,
    pub horizon: usize,
    #[serde(with = "rational::text")]
    pub reward_bound: Rational,
    /// Threshold itself, or a rational upper bound on it when the root is
    /// irrational (`exact = false`).
    #[serde(with = "rational::text")]
    pub gamma0: Rational,
    pub exact: bool,
}

impl DiscountCertificate {
    /// `(1 + γ₀) / 2`, a discount strictly above the threshold.
    pub fn safe_discount(&self) -> Rational {
        (Rational::one() + &self.gamma0) / int(2)
    }
}

/// Minimum Q-gap over all policies, states and pairs of actions. Pairs of
/// actions with identical rows and rewards are skipped: their Q-values
/// coincide under every discount, so they cannot reorder.
pub fn min_q_gap(mdp: &Mdp, budget: u128) -> Result<Rational> {
    policy_count(mdp.n_nonterminal(), mdp.n_actions(), budget)?;
    let k = mdp.n_actions();
    let pairs: Vec<(usize, usize, usize)> = (0..mdp.n_nonterminal())
        .flat_map(|s| (0..k).flat_map(move |a| (a + 1..k).map(move |b| (s, a, b))))
        .filter(|&(s, a, b)| !mdp.actions_equivalent(s, a, b))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no distinguishable action pairs".into()));
    }
    let mut delta: Option<Rational> = None;
    for policy in Policy::enumerate(mdp.n_nonterminal(), k) {
        let q = analyze(mdp, &policy)?.q;
        for &(s, a, b) in &pairs {
            let gap = (q.get(s, a) - q.get(s, b)).abs();
            if gap.is_zero() {
                return Err(Error::ZeroGap { state: s, a, b, policy: policy.to_string() });
            }
            if delta.as_ref().is_none_or(|d| gap < *d) {
                delta = Some(gap);
            }
        }
    }
    Ok(delta.expect("at least one policy and pair"))
}

/// `γ₀ = (max{1 − Δ / (2(L − 1) R_max), 0})^{1/(L − 1)}`.
pub fn gamma_threshold(mdp: &Mdp, budget: u128) -> Result<DiscountCertificate> {
    let (horizon, reward_bound) = mdp.horizon_and_reward_bound()?;
    let delta = min_q_gap(mdp, budget)?;
    let (gamma0, exact) = gamma0_from(&delta, horizon, &reward_bound);
    Ok(DiscountCertificate { delta, horizon, reward_bound, gamma0, exact })
}

pub(crate) fn gamma0_from(delta: &Rational, horizon: usize, reward_bound: &Rational) -> (Rational, bool) {
    if horizon <= 1 || reward_bound.is_zero() {
        return (Rational::zero(), true);
    }
    let e = (horizon - 1) as u32;
    let base = Rational::one() - delta / (int(2) * int(e as i64) * reward_bound);
    if !base.is_positive() {
        return (Rational::zero(), true);
    }
    if let (Some(p), Some(q)) = (exact_root(base.numer(), e), exact_root(base.denom(), e)) {
        return (Rational::new(p, q), true);
    }
    (root_upper_bound(&base, e, ROOT_DENOMINATOR_BOUND), false)
}

fn exact_root(x: &BigInt, e: u32) -> Option<BigInt> {
    let r = x.nth_root(e);
    (num_traits::pow(r.clone(), e as usize) == *x).then_some(r)
}

/// Orders `(p/q)^e` against `base`.
fn cmp_power(p: &BigInt, q: &BigInt, e: u32, base: &Rational) -> Ordering {
    let lhs = num_traits::pow(p.clone(), e as usize) * base.denom();
    let rhs = base.numer() * num_traits::pow(q.clone(), e as usize);
    lhs.cmp(&rhs)
}

/// Smallest fraction with denominator at most `max_den` lying above the
/// irrational `base^{1/e}`, for `0 < base < 1`. Stern–Brocot descent with
/// runs of equal moves taken in one galloping search.
pub(crate) fn root_upper_bound(base: &Rational, e: u32, max_den: u64) -> Rational {
    let n = BigInt::from(max_den);
    let (mut lo_p, mut lo_q) = (BigInt::zero(), BigInt::one());
    let (mut hi_p, mut hi_q) = (BigInt::one(), BigInt::one());
    loop {
        let (mp, mq) = (&lo_p + &hi_p, &lo_q + &hi_q);
        if mq > n {
            break;
        }
        let above = cmp_power(&mp, &mq, e, base) == Ordering::Greater;
        // Largest t with the moved endpoint still on its side of the root.
        let ok = |t: &BigInt| -> bool {
            if above {
                let (p, q) = (&hi_p + t * &lo_p, &hi_q + t * &lo_q);
                q <= n && cmp_power(&p, &q, e, base) == Ordering::Greater
            } else {
                let (p, q) = (&lo_p + t * &hi_p, &lo_q + t * &hi_q);
                q <= n && cmp_power(&p, &q, e, base) == Ordering::Less
            }
        };
        let mut good = BigInt::one();
        let mut bad = BigInt::from(2);
        while ok(&bad) {
            good = bad.clone();
            bad *= 2;
        }
        while &bad - &good > BigInt::one() {
            let mid: BigInt = (&good + &bad) / 2;
            if ok(&mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        if above {
            hi_p += &good * &lo_p;
            hi_q += &good * &lo_q;
        } else {
            lo_p += &good * &hi_p;
            lo_q += &good * &hi_q;
        }
    }
    Rational::new(hi_p, hi_q)
}

/// Same tables, discount `γ ∈ (0, 1]`.
pub fn with_discount(mdp: &Mdp, gamma: Rational) -> Result<Mdp> {
    mdp.with_discount(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{improvement_set, ImprovementSet};

    #[test]
    fn descriptors() {
        let d: FamilyDescriptor = "F:3,3".parse().unwrap();
        assert_eq!(d, FamilyDescriptor::new(FamilyKind::F, 3, 3));
        assert_eq!(d.to_string(), "F:3,3");
        assert!("F:3".parse::<FamilyDescriptor>().is_err());
        assert!("Q:3,3".parse::<FamilyDescriptor>().is_err());
        assert!("F:0,1".parse::<FamilyDescriptor>().unwrap().build().is_err());
    }

    #[test]
    fn f_rewards_and_shape() {
        let (mdp, layout) = build_f(3, 3).unwrap();
        assert_eq!(mdp.n_nonterminal(), 6);
        assert_eq!(mdp.n_terminal(), 1);
        assert_eq!(mdp.reward(1, 2), &int(6));
        assert_eq!(mdp.reward(4, 2), &int(6));
        assert_eq!(layout.state_names[4], "s'_2");
        let (f1, _) = build_f(1, 4).unwrap();
        assert_eq!(f1.n_nonterminal(), 2);
        for s in 0..2 {
            for a in 0..4 {
                assert_eq!(f1.successors(s, a), &[(2, int(1))]);
            }
        }
    }

    #[test]
    fn g_probabilities_and_rewards() {
        assert_eq!(g_intermediate_prob(1, 3), ratio(5, 6));
        let (g, _) = build_g(3, 3).unwrap();
        assert_eq!(g.reward(1, 1), &ratio(-10, 3));
        assert_eq!(g.successors(1, 1), &[(2, ratio(1, 6)), (4, ratio(5, 6))]);
        assert_eq!(g.n_terminal(), 4);
        let (g2, _) = build_g(4, 2).unwrap();
        for s in 0..4 {
            assert_eq!(g2.successors(s, 0).len(), 1);
            assert_eq!(g2.successors(s, 1).len(), 1);
        }
    }

    #[test]
    fn h_shape() {
        for (n, k) in [(1, 2), (3, 2), (4, 5)] {
            let (h, layout) = build_h(n, k).unwrap();
            assert_eq!(h.n_nonterminal(), 2 * n);
            assert_eq!(h.n_terminal(), 2);
            for i in 0..n {
                assert_eq!(h.reward(i, k - 1), &h_epsilon(n));
            }
            assert_eq!(layout.simple_order().len(), 2 * n);
            assert!(h.validate().is_valid());
        }
    }

    #[test]
    fn h_chance_states_never_improvable() {
        let (h, _) = build_h(3, 3).unwrap();
        for p in Policy::enumerate(6, 3) {
            let set: ImprovementSet = improvement_set(&h, &p).unwrap();
            assert!(set.states().iter().all(|&s| s < 3), "{p}");
        }
    }

    #[test]
    fn gamma0_clamps_and_conventions() {
        // Δ large enough that the base clamps to zero.
        assert_eq!(gamma0_from(&int(100), 3, &int(1)), (int(0), true));
        assert_eq!(gamma0_from(&int(1), 1, &int(5)), (int(0), true));
        // base = 1 − 1/(2·1·2) = 3/4, e = 1.
        assert_eq!(gamma0_from(&int(1), 2, &int(2)), (ratio(3, 4), true));
        // base = 1 − 7/(2·2·4) = 9/16, square root 3/4 exactly.
        assert_eq!(gamma0_from(&int(7), 3, &int(4)), (ratio(3, 4), true));
    }

    #[test]
    fn root_upper_bound_is_tight_farey_neighbour() {
        // sqrt(1/2) ≈ 0.7071067811865476
        let ub = root_upper_bound(&ratio(1, 2), 2, 1000);
        let x = 0.5f64.sqrt();
        let v = rational::to_f64(&ub);
        assert!(v > x);
        // brute force: smallest p/q ≥ x with q ≤ 1000
        let mut best = (1i64, 1i64);
        for q in 1..=1000i64 {
            let p = (x * q as f64).ceil() as i64;
            if (p as f64) / (q as f64) < best.0 as f64 / best.1 as f64 {
                best = (p, q);
            }
        }
        assert_eq!(ub, ratio(best.0, best.1));
        assert_eq!(cmp_power(ub.numer(), ub.denom(), 2, &ratio(1, 2)), Ordering::Greater);
    }
}
