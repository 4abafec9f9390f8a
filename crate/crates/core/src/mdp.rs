//! Finite tabular MDPs with exact rational transition probabilities and
//! rewards, evaluated under total (`discount = 1`) or discounted reward.
//!
//! States `0..n_nonterminal` are decision states; terminal states follow and
//! carry no actions. Terminal-entry rewards are expected to be folded into
//! `R(s, a)` by whoever builds the definition, so terminals always have
//! value zero.
//!
//! Under total reward every policy must be proper. Admission enforces the
//! stronger structural condition that the transition graph over all actions,
//! restricted to non-terminal states, is acyclic.

use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rational::{self, Rational};

/// Default cap on `k^n` for exhaustive policy enumeration.
pub const DEFAULT_ORACLE_BUDGET: u128 = 10_000_000;

/// Raw, possibly invalid, MDP tables. Turned into an [`Mdp`] only after
/// passing [`MdpDefinition::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct MdpDefinition {
    pub n_nonterminal: usize,
    pub n_terminal: usize,
    pub n_actions: usize,
    pub discount: Rational,
    /// `transitions[s][a][s']` for non-terminal `s` and every state `s'`.
    pub transitions: Vec<Vec<Vec<Rational>>>,
    /// `rewards[s][a]` for non-terminal `s`.
    pub rewards: Vec<Vec<Rational>>,
}

impl MdpDefinition {
    /// All-zero tables with total-reward discount.
    pub fn zeroed(n_nonterminal: usize, n_terminal: usize, n_actions: usize) -> Self {
        let n_states = n_nonterminal + n_terminal;
        Self {
            n_nonterminal,
            n_terminal,
            n_actions,
            discount: Rational::one(),
            transitions: vec![vec![vec![Rational::zero(); n_states]; n_actions]; n_nonterminal],
            rewards: vec![vec![Rational::zero(); n_actions]; n_nonterminal],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_nonterminal + self.n_terminal
    }

    /// Overwrites the row for `(s, a)`. Repeated successors accumulate.
    pub fn set(&mut self, s: usize, a: usize, reward: Rational, successors: &[(usize, Rational)]) {
        let row = &mut self.transitions[s][a];
        row.iter_mut().for_each(|p| *p = Rational::zero());
        for (t, p) in successors {
            row[*t] += p;
        }
        self.rewards[s][a] = reward;
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n_states = self.n_states();

        if self.n_actions == 0 {
            violations.push(Violation::NoActions);
        }
        if self.n_terminal == 0 && self.discount.is_one() {
            violations.push(Violation::NoTerminal);
        }
        if !(self.discount.is_positive() && self.discount <= Rational::one()) {
            violations.push(Violation::DiscountOutOfRange(self.discount.clone()));
        }
        if self.transitions.len() != self.n_nonterminal || self.rewards.len() != self.n_nonterminal
        {
            violations.push(Violation::Shape(format!(
                "expected {} non-terminal rows, got {} transition rows and {} reward rows",
                self.n_nonterminal,
                self.transitions.len(),
                self.rewards.len()
            )));
            return ValidationReport { violations };
        }
        for s in 0..self.n_nonterminal {
            if self.transitions[s].len() != self.n_actions || self.rewards[s].len() != self.n_actions
            {
                violations.push(Violation::Shape(format!("state {s} does not have {} actions", self.n_actions)));
                continue;
            }
            for a in 0..self.n_actions {
                let row = &self.transitions[s][a];
                if row.len() != n_states {
                    violations.push(Violation::Shape(format!("row ({s}, {a}) has {} entries, expected {n_states}", row.len())));
                    continue;
                }
                let mut mass = Rational::zero();
                for (t, p) in row.iter().enumerate() {
                    if p.is_negative() || *p > Rational::one() {
                        violations.push(Violation::ProbabilityOutOfRange { s, a, target: t, p: p.clone() });
                    }
                    mass += p;
                }
                if !mass.is_one() {
                    violations.push(Violation::MassNotOne { s, a, mass });
                }
            }
        }
        if violations.is_empty() && self.discount.is_one() {
            if let Some(state) = find_cycle(&self.full_graph()) {
                violations.push(Violation::CycleUnderTotalReward { state });
            }
        }
        ValidationReport { violations }
    }

    fn full_graph(&self) -> Vec<Vec<usize>> {
        (0..self.n_nonterminal)
            .map(|s| {
                (0..self.n_nonterminal)
                    .filter(|&t| self.transitions[s].iter().any(|row| !row[t].is_zero()))
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoActions,
    NoTerminal,
    DiscountOutOfRange(Rational),
    Shape(String),
    ProbabilityOutOfRange { s: usize, a: usize, target: usize, p: Rational },
    MassNotOne { s: usize, a: usize, mass: Rational },
    DuplicateRecord { s: usize, a: usize },
    CycleUnderTotalReward { state: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoActions => write!(f, "action set is empty"),
            Violation::NoTerminal => write!(f, "total reward requires at least one terminal state"),
            Violation::DiscountOutOfRange(g) => {
                write!(f, "discount {} not in (0, 1]", rational::format(g))
            }
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
            Violation::ProbabilityOutOfRange { s, a, target, p } => write!(
                f,
                "probability T({s}, {a}, {target}) = {} outside [0, 1]",
                rational::format(p)
            ),
            Violation::MassNotOne { s, a, mass } => {
                write!(f, "distribution mass ≠ 1 at ({s}, {a}): {}", rational::format(mass))
            }
            Violation::DuplicateRecord { s, a } => write!(f, "duplicate record for ({s}, {a})"),
            Violation::CycleUnderTotalReward { state } => write!(
                f,
                "transition graph has a cycle through state {state} under total reward"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// A validated MDP. Immutable; share freely across threads.
#[derive(Clone, Debug)]
pub struct Mdp {
    def: MdpDefinition,
    // Sparse view of `def.transitions`: nonzero successors per (s, a).
    successors: Vec<Vec<Vec<(usize, Rational)>>>,
}

impl PartialEq for Mdp {
    fn eq(&self, other: &Self) -> bool {
        self.def == other.def
    }
}

impl TryFrom<MdpDefinition> for Mdp {
    type Error = Error;

    fn try_from(def: MdpDefinition) -> Result<Self> {
        let report = def.validate();
        if !report.is_valid() {
            return Err(Error::InvalidMdp(report));
        }
        let successors = def
            .transitions
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(_, p)| !p.is_zero())
                            .map(|(t, p)| (t, p.clone()))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { def, successors })
    }
}

impl Mdp {
    pub fn definition(&self) -> &MdpDefinition {
        &self.def
    }

    pub fn n_nonterminal(&self) -> usize {
        self.def.n_nonterminal
    }

    pub fn n_terminal(&self) -> usize {
        self.def.n_terminal
    }

    pub fn n_states(&self) -> usize {
        self.def.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.def.n_actions
    }

    pub fn discount(&self) -> &Rational {
        &self.def.discount
    }

    pub fn is_total_reward(&self) -> bool {
        self.def.discount.is_one()
    }

    pub fn reward(&self, s: usize, a: usize) -> &Rational {
        &self.def.rewards[s][a]
    }

    pub fn prob(&self, s: usize, a: usize, t: usize) -> &Rational {
        &self.def.transitions[s][a][t]
    }

    /// Nonzero-probability successors of `(s, a)` in increasing state order.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, Rational)] {
        &self.successors[s][a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        s >= self.def.n_nonterminal
    }

    /// Actions `a` and `b` have identical outgoing rows and rewards at `s`.
    pub fn actions_equivalent(&self, s: usize, a: usize, b: usize) -> bool {
        self.def.rewards[s][a] == self.def.rewards[s][b] && self.successors[s][a] == self.successors[s][b]
    }

    pub fn validate(&self) -> ValidationReport {
        self.def.validate()
    }

    /// Copy with the same tables and a new discount factor in `(0, 1]`.
    pub fn with_discount(&self, gamma: Rational) -> Result<Mdp> {
        if !(gamma.is_positive() && gamma <= Rational::one()) {
            return Err(Error::InvalidParameter(format!(
                "discount {} not in (0, 1]",
                rational::format(&gamma)
            )));
        }
        let mut def = self.def.clone();
        def.discount = gamma;
        Mdp::try_from(def)
    }

    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.len() != self.n_nonterminal() {
            return Err(Error::PolicyLength { expected: self.n_nonterminal(), got: policy.len() });
        }
        for (state, &action) in policy.actions().iter().enumerate() {
            if action >= self.n_actions() {
                return Err(Error::ActionOutOfRange { state, action, k: self.n_actions() });
            }
        }
        Ok(())
    }

    /// Exact value function of `policy`. Uses back-substitution when the
    /// policy's transition graph is acyclic, Gaussian elimination otherwise.
    pub fn evaluate(&self, policy: &Policy) -> Result<ValueFn> {
        self.check_policy(policy)?;
        match self.policy_order(policy) {
            Some(order) => Ok(self.back_substitute(policy, &order)),
            None if self.is_total_reward() => Err(Error::ImproperPolicy),
            None => self.evaluate_by_elimination(policy),
        }
    }

    /// Solves `(I - γ P_π) V = R_π` directly.
    pub fn evaluate_by_elimination(&self, policy: &Policy) -> Result<ValueFn> {
        self.check_policy(policy)?;
        let n = self.n_nonterminal();
        let gamma = self.discount();
        let mut a = vec![vec![Rational::zero(); n]; n];
        let mut b = Vec::with_capacity(n);
        for s in 0..n {
            let act = policy.action(s);
            a[s][s] = Rational::one();
            for (t, p) in self.successors(s, act) {
                if *t < n {
                    a[s][*t] -= gamma * p;
                }
            }
            b.push(self.reward(s, act).clone());
        }
        match linalg::solve(a, b) {
            Ok(values) => Ok(ValueFn { values }),
            Err(Error::Singular) if self.is_total_reward() => Err(Error::ImproperPolicy),
            Err(e) => Err(e),
        }
    }

    fn back_substitute(&self, policy: &Policy, order: &[usize]) -> ValueFn {
        let n = self.n_nonterminal();
        let mut values = vec![Rational::zero(); n];
        for &s in order {
            values[s] = self.backup(s, policy.action(s), &values);
        }
        ValueFn { values }
    }

    /// `R(s, a) + γ Σ T(s, a, s') V(s')` with terminal values zero.
    fn backup(&self, s: usize, a: usize, values: &[Rational]) -> Rational {
        let n = self.n_nonterminal();
        let mut future = Rational::zero();
        for (t, p) in self.successors(s, a) {
            if *t < n && !values[*t].is_zero() {
                future += p * &values[*t];
            }
        }
        if !self.is_total_reward() {
            future *= self.discount();
        }
        future + self.reward(s, a)
    }

    /// States ordered so every successor precedes its predecessors, or
    /// `None` when the policy graph has a cycle.
    fn policy_order(&self, policy: &Policy) -> Option<Vec<usize>> {
        let n = self.n_nonterminal();
        let graph: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                self.successors(s, policy.action(s))
                    .iter()
                    .map(|(t, _)| *t)
                    .filter(|&t| t < n)
                    .collect()
            })
            .collect();
        successors_first_order(&graph)
    }

    pub fn q_values(&self, policy: &Policy, values: &ValueFn) -> Result<QFn> {
        self.check_policy(policy)?;
        if values.len() != self.n_nonterminal() {
            return Err(Error::DimensionMismatch(values.len(), self.n_nonterminal()));
        }
        let q = (0..self.n_nonterminal())
            .map(|s| (0..self.n_actions()).map(|a| self.backup(s, a, &values.values)).collect())
            .collect();
        Ok(QFn { q })
    }

    /// Enumerates all `k^n` policies and returns one whose value function
    /// weakly dominates every other.
    pub fn brute_force_optimal(&self, budget: u128) -> Result<(Policy, ValueFn)> {
        let count = policy_count(self.n_nonterminal(), self.n_actions(), budget)?;
        debug_assert!(count <= budget);
        let mut best: Option<(Policy, ValueFn)> = None;
        let mut statewise_max: Option<Vec<Rational>> = None;
        for policy in Policy::enumerate(self.n_nonterminal(), self.n_actions()) {
            let v = self.evaluate(&policy)?;
            match statewise_max.as_mut() {
                None => statewise_max = Some(v.values.clone()),
                Some(m) => m.iter_mut().zip(&v.values).for_each(|(m, x)| {
                    if x > m {
                        *m = x.clone()
                    }
                }),
            }
            let replace = match &best {
                None => true,
                Some((_, bv)) => compare(&v, bv)? == Dominance::StrictlyDominates,
            };
            if replace {
                best = Some((policy, v));
            }
        }
        let (policy, v) = best.ok_or(Error::NoDominatingPolicy)?;
        if Some(&v.values) != statewise_max.as_ref() {
            return Err(Error::NoDominatingPolicy);
        }
        Ok((policy, v))
    }

    /// Longest path (counted in transitions, including the step into a
    /// terminal) and the largest absolute reward.
    pub fn horizon_and_reward_bound(&self) -> Result<(usize, Rational)> {
        let graph = self.def.full_graph();
        let order = successors_first_order(&graph).ok_or(Error::CyclicGraph)?;
        let mut depth = vec![0usize; self.n_nonterminal()];
        for &s in &order {
            depth[s] = 1 + graph[s].iter().map(|&t| depth[t]).max().unwrap_or(0);
        }
        let horizon = depth.into_iter().max().unwrap_or(0);
        let rmax = self
            .def
            .rewards
            .iter()
            .flatten()
            .map(|r| r.abs())
            .max()
            .unwrap_or_else(Rational::zero);
        Ok((horizon, rmax))
    }

    pub fn to_file(&self) -> MdpFile {
        let mut transitions = Vec::new();
        for s in 0..self.n_nonterminal() {
            for a in 0..self.n_actions() {
                transitions.push(TransitionRecord {
                    s,
                    a,
                    reward: self.reward(s, a).clone(),
                    successors: self
                        .successors(s, a)
                        .iter()
                        .map(|(t, p)| (*t, rational::format(p)))
                        .collect(),
                });
            }
        }
        MdpFile {
            n_nonterminal: self.n_nonterminal(),
            n_terminal: self.n_terminal(),
            n_actions: self.n_actions(),
            discount: self.discount().clone(),
            transitions,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("MDP serialises")
    }

    pub fn from_json(text: &str) -> Result<Mdp> {
        let file: MdpFile = serde_json::from_str(text)?;
        file.into_mdp()
    }

    /// SHA-256 of the compact canonical JSON form.
    pub fn content_hash(&self) -> String {
        let compact = serde_json::to_string(&self.to_file()).expect("MDP serialises");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }
}

/// On-disk JSON layout of an MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_nonterminal: usize,
    pub n_terminal: usize,
    pub n_actions: usize,
    #[serde(with = "rational::text")]
    pub discount: Rational,
    pub transitions: Vec<TransitionRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub s: usize,
    pub a: usize,
    #[serde(with = "rational::text")]
    pub reward: Rational,
    pub successors: Vec<(usize, String)>,
}

impl MdpFile {
    pub fn into_definition(self) -> Result<(MdpDefinition, Vec<Violation>)> {
        let mut def = MdpDefinition::zeroed(self.n_nonterminal, self.n_terminal, self.n_actions);
        def.discount = self.discount;
        let n_states = def.n_states();
        let mut seen = vec![vec![false; self.n_actions]; self.n_nonterminal];
        let mut extra = Vec::new();
        for rec in self.transitions {
            if rec.s >= self.n_nonterminal || rec.a >= self.n_actions {
                extra.push(Violation::Shape(format!("record ({}, {}) out of range", rec.s, rec.a)));
                continue;
            }
            if std::mem::replace(&mut seen[rec.s][rec.a], true) {
                extra.push(Violation::DuplicateRecord { s: rec.s, a: rec.a });
                continue;
            }
            let mut succ = Vec::with_capacity(rec.successors.len());
            for (t, p) in &rec.successors {
                if *t >= n_states {
                    extra.push(Violation::Shape(format!("successor {t} of ({}, {}) out of range", rec.s, rec.a)));
                    continue;
                }
                succ.push((*t, rational::parse(p)?));
            }
            def.set(rec.s, rec.a, rec.reward, &succ);
        }
        Ok((def, extra))
    }

    pub fn into_mdp(self) -> Result<Mdp> {
        let (def, extra) = self.into_definition()?;
        if !extra.is_empty() {
            let mut report = def.validate();
            report.violations.splice(0..0, extra);
            return Err(Error::InvalidMdp(report));
        }
        Mdp::try_from(def)
    }
}

/// Deterministic stationary policy: one action index per non-terminal state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn set(&mut self, s: usize, a: usize) {
        self.0[s] = a;
    }

    /// Lexicographic enumeration of `{0..k}^n`, state 0 most significant.
    pub fn enumerate(n: usize, k: usize) -> impl Iterator<Item = Policy> {
        let mut next = if k == 0 && n > 0 { None } else { Some(vec![0usize; n]) };
        std::iter::from_fn(move || {
            let current = next.take()?;
            let mut succ = current.clone();
            for i in (0..n).rev() {
                if succ[i] + 1 < k {
                    succ[i] += 1;
                    next = Some(succ);
                    break;
                }
                succ[i] = 0;
            }
            Some(Policy(current))
        })
    }

    /// Parses base-36 digits; any `·` or `.` separators are ignored.
    pub fn parse(text: &str) -> Result<Policy> {
        text.chars()
            .filter(|c| *c != '·' && *c != '.')
            .map(|c| {
                c.to_digit(36)
                    .map(|d| d as usize)
                    .ok_or_else(|| Error::Parse(format!("bad policy digit {c:?} in {text:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Policy)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &a in &self.0 {
            match std::char::from_digit(a as u32, 36) {
                Some(c) => write!(f, "{c}")?,
                None => write!(f, "[{a}]")?,
            }
        }
        Ok(())
    }
}

/// `V^π` on non-terminal states; terminal states are implicitly zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueFn {
    #[serde(with = "rational::text_vec")]
    pub values: Vec<Rational>,
}

impl ValueFn {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, s: usize) -> &Rational {
        &self.values[s]
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.values.iter().map(rational::format).collect()
    }
}

/// `Q^π(s, a)` for every non-terminal state and action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QFn {
    pub q: Vec<Vec<Rational>>,
}

impl QFn {
    pub fn get(&self, s: usize, a: usize) -> &Rational {
        &self.q[s][a]
    }

    pub fn max_at(&self, s: usize) -> &Rational {
        self.q[s].iter().max().expect("at least one action")
    }

    /// Smallest action index among maximisers.
    pub fn argmax_at(&self, s: usize) -> usize {
        let best = self.max_at(s);
        self.q[s].iter().position(|q| q == best).expect("max exists")
    }
}

/// Statewise comparison of `a` against `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dominance {
    Equal,
    /// `a ≥ b` everywhere and `a > b` somewhere.
    StrictlyDominates,
    /// `b ≥ a` everywhere and `b > a` somewhere.
    StrictlyDominated,
    Incomparable,
}

impl Dominance {
    pub fn weakly_dominates(self) -> bool {
        matches!(self, Dominance::Equal | Dominance::StrictlyDominates)
    }
}

pub fn compare(a: &ValueFn, b: &ValueFn) -> Result<Dominance> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    let (mut above, mut below) = (false, false);
    for (x, y) in a.values.iter().zip(&b.values) {
        match x.cmp(y) {
            std::cmp::Ordering::Greater => above = true,
            std::cmp::Ordering::Less => below = true,
            std::cmp::Ordering::Equal => {}
        }
    }
    Ok(match (above, below) {
        (false, false) => Dominance::Equal,
        (true, false) => Dominance::StrictlyDominates,
        (false, true) => Dominance::StrictlyDominated,
        (true, true) => Dominance::Incomparable,
    })
}

/// `k^n`, or `BudgetExceeded` when it is above `budget`.
pub fn policy_count(n: usize, k: usize, budget: u128) -> Result<u128> {
    let mut count: u128 = 1;
    for _ in 0..n {
        count = count.saturating_mul(k as u128);
        if count > budget {
            return Err(Error::BudgetExceeded { needed: count, budget });
        }
    }
    Ok(count)
}

/// States ordered so that every node comes after all of its successors,
/// or `None` when the graph has a cycle.
fn successors_first_order(graph: &[Vec<usize>]) -> Option<Vec<usize>> {
    let order = emit_successors_first(graph);
    (order.len() == graph.len()).then_some(order)
}

fn find_cycle(graph: &[Vec<usize>]) -> Option<usize> {
    // Walk forward through unemitted nodes until one repeats.
    let n = graph.len();
    let mut emitted = vec![false; n];
    for s in emit_successors_first(graph) {
        emitted[s] = true;
    }
    let mut cur = (0..n).find(|&s| !emitted[s])?;
    let mut visited = vec![false; n];
    while !visited[cur] {
        visited[cur] = true;
        cur = *graph[cur].iter().find(|&&t| !emitted[t])?;
    }
    Some(cur)
}

/// Kahn's algorithm on out-degrees. Nodes on or upstream of a cycle are
/// never emitted.
fn emit_successors_first(graph: &[Vec<usize>]) -> Vec<usize> {
    let n = graph.len();
    let mut preds = vec![Vec::new(); n];
    let mut pending: Vec<usize> = vec![0; n];
    for (s, outs) in graph.iter().enumerate() {
        for &t in outs {
            preds[t].push(s);
            pending[s] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&s| pending[s] == 0).collect();
    let mut order = Vec::new();
    while let Some(s) = ready.pop() {
        order.push(s);
        for &p in &preds[s] {
            pending[p] -= 1;
            if pending[p] == 0 {
                ready.push(p);
            }
        }
    }
    order
}
