//! Checkers for trajectory validity, visit counts, lemma sweeps, the H
//! embedding and discount transfer. Every checker returns a
//! [`ClaimReport`]; a failing report always names a concrete witness.
//! Errors are reserved for unmet preconditions such as budgets.

use std::collections::{HashMap, HashSet};
use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::codec::{KaryString, SplitPolicy};
use crate::engine::{improvement_set, is_improvement, run, run_with_rng, split_zeros, ActionSelector, StateSelector, Trajectory, Variant};
use crate::error::{Error, Result};
use crate::families::{build_f, build_g, build_h, g_intermediate_prob, gamma_threshold, FamilyDescriptor, FamilyKind, FamilyLayout};
use crate::mdp::{compare, policy_count, Dominance, Mdp, Policy, ValueFn, DEFAULT_ORACLE_BUDGET};
use crate::rational::{self, int, pow2, Rational};

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Stated for the construction itself.
    Stated,
    /// Computed here by an independent route.
    Derived,
    /// Observed once and pinned as a regression value.
    Frozen,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Stated => "stated",
            Basis::Derived => "derived",
            Basis::Frozen => "frozen",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClaimReport {
    pub claim: String,
    pub params: String,
    pub expected: String,
    pub basis: Basis,
    pub observed: String,
    pub passed: bool,
    pub witness: Option<String>,
}

impl ClaimReport {
    pub fn new(
        claim: &str,
        params: impl Into<String>,
        basis: Basis,
        expected: impl Into<String>,
        observed: impl Into<String>,
        witness: Option<String>,
    ) -> Self {
        Self {
            claim: claim.to_string(),
            params: params.into(),
            expected: expected.into(),
            basis,
            observed: observed.into(),
            passed: witness.is_none(),
            witness,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

impl fmt::Display for ClaimReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} [{}]: {}", self.claim, self.params, self.observed)?;
        if let Some(w) = &self.witness {
            write!(f, " -- witness: {w}")?;
        }
        Ok(())
    }
}

/// Fixed-width table of reports, one row each.
pub fn render_table(reports: &[ClaimReport]) -> String {
    let head = ["result", "claim", "params", "basis", "expected", "observed"];
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            let observed = match &r.witness {
                Some(w) => format!("{} ({w})", r.observed),
                None => r.observed.clone(),
            };
            [
                if r.passed { "pass" } else { "FAIL" }.to_string(),
                r.claim.clone(),
                r.params.clone(),
                r.basis.to_string(),
                r.expected.clone(),
                observed,
            ]
        })
        .collect();
    let mut widths = head.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(cell);
            } else {
                s.push_str(&format!("{cell}{}  ", " ".repeat(w - cell.chars().count())));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(head.to_vec());
    for row in &rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Enumeration caps used by the checkers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budgets {
    /// Cap on `k^n` for the brute-force optimum.
    pub oracle: u128,
    /// Cap on `k^n` for the Q-gap sweep behind `γ₀`.
    pub delta: u128,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { oracle: DEFAULT_ORACLE_BUDGET, delta: crate::families::DEFAULT_DELTA_BUDGET }
    }
}

impl Budgets {
    pub fn uniform(cap: u128) -> Self {
        Self { oracle: cap, delta: cap }
    }
}

/// Seeded generator for trial `trial` of a Monte-Carlo run: the base seed
/// picks the key, the trial index picks the stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Seed for cell `index` of a sweep: the first word of that cell's stream.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    trial_rng(seed, index).next_u64()
}

/// The Simple-PI order a family is meant to be run with.
pub fn simple_for(layout: &FamilyLayout) -> StateSelector {
    StateSelector::Simple { order: layout.simple_order() }
}

/// Variant each family is built against: Peculiar on F, Howard with
/// index-based actions on G, Simple with index-based actions on H.
pub fn designated_variant(layout: &FamilyLayout) -> Variant {
    match layout.kind {
        FamilyKind::F => Variant::new(
            StateSelector::Peculiar { m: layout.size, k: layout.k },
            ActionSelector::PeculiarCyclic,
        ),
        FamilyKind::G => Variant::new(StateSelector::Howard, ActionSelector::IndexMin),
        FamilyKind::H => Variant::new(simple_for(layout), ActionSelector::IndexMin),
    }
}

/// Cap on iterations: no run can visit more policies than exist.
fn iteration_cap(n: usize, k: usize) -> usize {
    (k as u128).checked_pow(n as u32).map_or(usize::MAX, |c| c.min(usize::MAX as u128) as usize)
}

// ---------------------------------------------------------------------------
// trajectories

/// Re-derives every step of `traj` by Gauss–Jordan evaluation: each switch
/// is to a strictly better Q-value, the next value function strictly
/// dominates, no policy repeats, and the last policy is greedy and, when
/// `k^n ≤ budget`, equal in value to the brute-force optimum.
pub fn certify_trajectory(mdp: &Mdp, traj: &Trajectory, budget: u128) -> ClaimReport {
    let oracle = match policy_count(mdp.n_nonterminal(), mdp.n_actions(), budget) {
        Ok(_) => match mdp.brute_force_optimal(budget) {
            Ok((_, v)) => Some(v),
            Err(e) => return trajectory_report(traj, Err(format!("oracle failed: {e}"))),
        },
        Err(_) => None,
    };
    certify_against(mdp, traj, oracle.as_ref())
}

/// As [`certify_trajectory`] with a precomputed optimum (or none).
pub fn certify_against(mdp: &Mdp, traj: &Trajectory, optimum: Option<&ValueFn>) -> ClaimReport {
    trajectory_report(traj, certify_steps(mdp, traj, optimum))
}

fn trajectory_report(traj: &Trajectory, outcome: std::result::Result<String, String>) -> ClaimReport {
    let params = format!(
        "{}+{} seed {} on {}",
        traj.meta.state_selector,
        traj.meta.action_selector,
        traj.meta.seed,
        &traj.meta.mdp_hash[..traj.meta.mdp_hash.len().min(12)]
    );
    let expected = "improving, strictly dominating, no revisits, optimal end";
    match outcome {
        Ok(observed) => ClaimReport::new("trajectory", params, Basis::Stated, expected, observed, None),
        Err(w) => ClaimReport::new("trajectory", params, Basis::Stated, expected, format!("{} policies", traj.len()), Some(w)),
    }
}

fn certify_steps(mdp: &Mdp, traj: &Trajectory, optimum: Option<&ValueFn>) -> std::result::Result<String, String> {
    if traj.is_empty() {
        return Err("empty trajectory".into());
    }
    let eval = |t: usize, p: &Policy| {
        mdp.evaluate_by_elimination(p).map_err(|e| format!("step {t}: {p} cannot be evaluated: {e}"))
    };
    let mut seen = HashSet::new();
    let mut values = eval(0, &traj.steps[0].policy)?;
    for (t, step) in traj.steps.iter().enumerate() {
        let policy = &step.policy;
        if !seen.insert(policy.clone()) {
            return Err(format!("step {t}: {policy} revisited"));
        }
        if step.values != values {
            return Err(format!("step {t}: recorded values of {policy} disagree with elimination"));
        }
        let q = mdp.q_values(policy, &values).map_err(|e| format!("step {t}: {e}"))?;
        let Some(next_step) = traj.steps.get(t + 1) else {
            if let Some(s) = (0..policy.len()).find(|&s| q.max_at(s) > q.get(s, policy.action(s))) {
                return Err(format!("step {t}: final policy {policy} still improvable at state {s}"));
            }
            if let Some(opt) = optimum {
                if opt != &values {
                    return Err(format!("step {t}: final policy {policy} is not optimal"));
                }
            }
            break;
        };
        let next = &next_step.policy;
        if next.len() != policy.len() {
            return Err(format!("step {}: policy length changed", t + 1));
        }
        let mut differing = Vec::new();
        for s in 0..policy.len() {
            let (a, b) = (policy.action(s), next.action(s));
            if a != b {
                if q.get(s, b) <= q.get(s, a) {
                    return Err(format!("step {}: {next} switches state {s} from {a} to non-improving {b}", t + 1));
                }
                differing.push((s, a, b));
            }
        }
        if differing.is_empty() {
            return Err(format!("step {}: {next} repeats {policy}", t + 1));
        }
        let next_values = eval(t + 1, next)?;
        if compare(&next_values, &values).map_err(|e| e.to_string())? != Dominance::StrictlyDominates {
            return Err(format!("step {}: {next} does not strictly dominate {policy}", t + 1));
        }
        let recorded: Vec<_> = step.switched.iter().map(|w| (w.state, w.from, w.to)).collect();
        if recorded != differing {
            return Err(format!("step {}: reached by {differing:?}, recorded {recorded:?}", t + 1));
        }
        values = next_values;
    }
    let oracle = if optimum.is_some() { "optimal per oracle" } else { "oracle over budget" };
    Ok(format!("{} policies, {oracle}", traj.len()))
}

// ---------------------------------------------------------------------------
// F(m, k)

/// `2k(k^m − 1)/(k − 1) − 2m + 1`.
pub fn f_count(m: usize, k: usize) -> Result<u128> {
    if m < 1 || k < 2 {
        return Err(Error::InvalidParameter(format!("f_count({m},{k}) needs m ≥ 1, k ≥ 2")));
    }
    let overflow = || Error::InvalidParameter(format!("f_count({m},{k}) overflows"));
    let km = (k as u128).checked_pow(m as u32).ok_or_else(overflow)?;
    let geometric = (km - 1) / (k as u128 - 1);
    let total = geometric.checked_mul(2 * k as u128).ok_or_else(overflow)?;
    Ok(total - 2 * m as u128 + 1)
}

pub const F33_FIXTURE: &str = include_str!("../fixtures/f33_trajectory.txt");

pub fn f33_table() -> Vec<&'static str> {
    F33_FIXTURE.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// Peculiar PI on `F(m, k)` from `0^m·0^m`.
pub fn peculiar_run(m: usize, k: usize) -> Result<(Mdp, FamilyLayout, Trajectory)> {
    let cap = f_count(m, k)? as usize;
    let (mdp, layout) = build_f(m, k)?;
    let traj = run(&mdp, &split_zeros(m, k), &designated_variant(&layout), 0, cap)?;
    Ok((mdp, layout, traj))
}

/// Length, single-state switches, balanced subsequence in numeral order,
/// final policy, and for `(3, 3)` the shipped table.
pub fn check_f(m: usize, k: usize, budget: u128) -> Result<ClaimReport> {
    let expected_len = f_count(m, k)?;
    if expected_len > budget {
        return Err(Error::BudgetExceeded { needed: expected_len, budget });
    }
    let params = format!("m={m} k={k}");
    let expected = format!("{expected_len} policies, {} balanced in order", (k as u128).pow(m as u32));
    let report = |observed: String, witness| ClaimReport::new("f-count", params.clone(), Basis::Stated, expected.clone(), observed, witness);
    let (_, layout, traj) = match peculiar_run(m, k) {
        Ok(r) => r,
        Err(e) => return Ok(report("run aborted".into(), Some(e.to_string()))),
    };
    let rendered = traj.rendered(layout.split_at());
    let balanced: Vec<&Policy> = traj
        .policies()
        .filter(|p| p.actions()[..m] == p.actions()[m..])
        .collect();
    let observed = format!("{} policies, {} balanced, final {}", traj.len(), balanced.len(), rendered.last().unwrap());
    let witness = (|| {
        if traj.len() as u128 != expected_len {
            return Some(format!("length {} ≠ {expected_len}", traj.len()));
        }
        if let Some(step) = traj.steps.iter().find(|s| !s.switched.is_empty() && s.switched.len() != 1) {
            return Some(format!("step {} switches {} states", step.t, step.switched.len()));
        }
        let count = (k as u64).pow(m as u32);
        for v in 0..count {
            let x = KaryString::from_numeral(&BigUint::from(v), m, k).ok()?;
            let want = SplitPolicy::balanced(x).join();
            match balanced.get(v as usize) {
                Some(&got) if *got == want => {}
                Some(got) => return Some(format!("balanced #{v} is {}, expected {}", layout.render(got), layout.render(&want))),
                None => return Some(format!("balanced #{v} missing")),
            }
        }
        if balanced.len() as u64 != count {
            return Some(format!("{} balanced policies, expected {count}", balanced.len()));
        }
        let top = SplitPolicy::balanced(KaryString::max_digits(m, k)).join();
        if *traj.last_policy() != top {
            return Some(format!("final {} ≠ {}", layout.render(traj.last_policy()), layout.render(&top)));
        }
        if (m, k) == (3, 3) {
            return table_mismatch(&rendered);
        }
        None
    })();
    Ok(report(observed, witness))
}

fn table_mismatch(rendered: &[String]) -> Option<String> {
    let table = f33_table();
    for (row, (got, want)) in rendered.iter().zip(&table).enumerate() {
        if got != want {
            return Some(format!("row {}: {got} ≠ {want}", row + 1));
        }
    }
    (rendered.len() != table.len()).then(|| format!("{} rows, table has {}", rendered.len(), table.len()))
}

/// The F(3,3) run equals the shipped table string for string.
pub fn check_f_table() -> Result<ClaimReport> {
    let expected = format!("{} rows of the fixture", f33_table().len());
    let (observed, witness) = match peculiar_run(3, 3) {
        Ok((_, layout, traj)) => {
            let rendered = traj.rendered(layout.split_at());
            (format!("{} rows", rendered.len()), table_mismatch(&rendered))
        }
        Err(e) => ("run aborted".into(), Some(e.to_string())),
    };
    Ok(ClaimReport::new("f-table", "m=3 k=3", Basis::Stated, expected, observed, witness))
}

/// `V^{x·x}(s_i) = V^{x·x}(s'_i) = k^{m−i}·[pre(x:i)]` for every `x`.
pub fn check_balanced_values(m: usize, k: usize, budget: u128) -> Result<ClaimReport> {
    let count = policy_count(m, k, budget)?;
    let (mdp, layout) = build_f(m, k)?;
    let mut witness = None;
    'outer: for v in 0..count {
        let x = KaryString::from_numeral(&BigUint::from(v), m, k)?;
        let policy = SplitPolicy::balanced(x.clone()).join();
        let values = mdp.evaluate(&policy)?;
        for i in 1..=m {
            let scale = BigUint::from(k).pow((m - i) as u32);
            let want = Rational::from_integer((scale * x.prefix(i)?.numeral()).into());
            for s in [i - 1, m + i - 1] {
                if *values.get(s) != want {
                    witness = Some(format!(
                        "{}: V({}) = {} ≠ {}",
                        layout.render(&policy),
                        layout.state_names[s],
                        rational::format(values.get(s)),
                        rational::format(&want)
                    ));
                    break 'outer;
                }
            }
        }
    }
    Ok(ClaimReport::new(
        "f-balanced-values",
        format!("m={m} k={k}"),
        Basis::Stated,
        "V(s_i) = V(s'_i) = k^(m-i)·[pre(x:i)]",
        format!("{count} balanced policies"),
        witness,
    ))
}

/// `[y] > [x]` implies `y·y` strictly dominates `x·x`, over all pairs.
pub fn check_prop1(m: usize, k: usize, budget: u128) -> Result<ClaimReport> {
    let count = policy_count(m, k, budget)?;
    let (mdp, layout) = build_f(m, k)?;
    let mut balanced = Vec::new();
    for v in 0..count {
        let x = KaryString::from_numeral(&BigUint::from(v), m, k)?;
        let p = SplitPolicy::balanced(x).join();
        let values = mdp.evaluate(&p)?;
        balanced.push((p, values));
    }
    let mut pairs = 0u64;
    let mut witness = None;
    'outer: for (a, (pa, va)) in balanced.iter().enumerate() {
        for (pb, vb) in &balanced[a + 1..] {
            pairs += 1;
            let d = compare(vb, va)?;
            if d != Dominance::StrictlyDominates {
                witness = Some(format!("{} vs {}: {d:?}", layout.render(pb), layout.render(pa)));
                break 'outer;
            }
        }
    }
    let total = count * (count.saturating_sub(1)) / 2;
    Ok(ClaimReport::new(
        "prop1",
        format!("m={m} k={k}"),
        Basis::Stated,
        format!("{total} ordered pairs strictly dominate"),
        format!("{pairs} pairs checked"),
        witness,
    ))
}

/// The improvement chain from `x·x` to `y·y`, `[y] = [x] + 1`, built from
/// `p_r` and `q_r` rather than from a PI run.
pub fn lemma1_chain(x: &KaryString) -> Result<Vec<SplitPolicy>> {
    let (m, k) = (x.len(), x.base());
    let i = x.last_non_max_index()?;
    let len = m - i + 1;
    let head = x.prefix(i - 1)?;
    let xi = x.at(i);
    let p = |r: usize| head.clone().push_repeated(xi + 1, 1).push_repeated(0, r - 1).push_repeated(k - 1, len - r);
    let q = |r: usize| head.clone().push_repeated(xi, 1).push_repeated(k - 1, len - r).push_repeated(0, r - 1);
    let y = p(len);
    let mut chain = vec![SplitPolicy::balanced(x.clone())];
    chain.extend((1..=len).map(|r| SplitPolicy { x: x.clone(), y: p(r) }));
    chain.extend((2..=len).map(|r| SplitPolicy { x: q(r), y: y.clone() }));
    chain.push(SplitPolicy::balanced(y));
    Ok(chain)
}

/// Each link of every chain is a PI step, and the Peculiar run follows the
/// chains exactly.
pub fn check_lemma1_segments(m: usize, k: usize, budget: u128) -> Result<ClaimReport> {
    let count = policy_count(m, k, budget)? as u64;
    let expected = format!("{} certified segments matching the run", count - 1);
    let report = |observed: String, witness| ClaimReport::new("lemma1", format!("m={m} k={k}"), Basis::Stated, expected.clone(), observed, witness);
    let (mdp, _, traj) = match peculiar_run(m, k) {
        Ok(r) => r,
        Err(e) => return Ok(report("run aborted".into(), Some(e.to_string()))),
    };
    let policies: Vec<&Policy> = traj.policies().collect();
    let position: HashMap<&Policy, usize> = policies.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let mut links = 0usize;
    for v in 0..count - 1 {
        let x = KaryString::from_numeral(&BigUint::from(v), m, k)?;
        let chain: Vec<Policy> = lemma1_chain(&x)?.iter().map(SplitPolicy::join).collect();
        for pair in chain.windows(2) {
            links += 1;
            if !is_improvement(&mdp, &pair[0], &pair[1])? {
                return Ok(report(format!("{links} links"), Some(format!("{} → {} is not an improvement", SplitPolicy::split(&pair[0], m, k)?, SplitPolicy::split(&pair[1], m, k)?))));
            }
        }
        let from = position.get(&chain[0]).copied();
        let to = position.get(chain.last().unwrap()).copied();
        let actual: Option<Vec<Policy>> = from.zip(to).map(|(a, b)| policies[a..=b.max(a)].iter().map(|p| (*p).clone()).collect());
        if actual.as_ref() != Some(&chain) {
            return Ok(report(format!("{links} links"), Some(format!("run segment from {} differs from the chain", SplitPolicy::balanced(x)))));
        }
    }
    Ok(report(format!("{} segments, {links} certified links", count - 1), None))
}

// ---------------------------------------------------------------------------
// G(n, k)

/// `π_ij = 0^{i−1} j (k−1)^{n−i}` for 1-based `i`.
pub fn g_policy(n: usize, k: usize, i: usize, j: usize) -> Policy {
    let mut actions = vec![0; i - 1];
    actions.push(j);
    actions.extend(std::iter::repeat(k - 1).take(n - i));
    Policy::new(actions)
}

/// Index-based visiting order from `0^n`: `0^{n−1}1 … 0^{n−1}(k−1)`, then
/// `0^{n−2}1(k−1) …`, ending at `(k−1)^n`.
pub fn g_index_order(n: usize, k: usize) -> Vec<Policy> {
    let mut order = vec![Policy::zeros(n)];
    for i in (1..=n).rev() {
        order.extend((1..k).map(|j| g_policy(n, k, i, j)));
    }
    order
}

/// Howard, Simple and random-subset state selection with index-based
/// actions all follow [`g_index_order`] with one improvable state per step.
pub fn check_g_index(n: usize, k: usize) -> Result<ClaimReport> {
    let (mdp, _) = build_g(n, k)?;
    let order = g_index_order(n, k);
    let params = format!("n={n} k={k}");
    let expected = format!("{} policies, identical across selectors", n * (k - 1) + 1);
    let selectors = [StateSelector::Howard, StateSelector::simple_identity(n), StateSelector::RandomSubset];
    let mut witness = None;
    for sel in selectors {
        let name = sel.name();
        let traj = match run(&mdp, &Policy::zeros(n), &Variant::new(sel, ActionSelector::IndexMin), 0, order.len()) {
            Ok(t) => t,
            Err(e) => {
                witness = Some(format!("{name}: {e}"));
                break;
            }
        };
        let got: Vec<&Policy> = traj.policies().collect();
        if let Some(pos) = (0..got.len().max(order.len())).find(|&i| got.get(i).copied() != order.get(i)) {
            let show = |p: Option<&Policy>| p.map_or("nothing".to_string(), Policy::to_string);
            witness = Some(format!("{name}: position {pos} is {}, expected {}", show(got.get(pos).copied()), show(order.get(pos))));
            break;
        }
        if let Some(step) = traj.steps.iter().find(|s| !s.improvable.is_empty() && s.improvable.len() != 1) {
            witness = Some(format!("{name}: {} has {} improvable states", step.policy, step.improvable.len()));
            break;
        }
    }
    Ok(ClaimReport::new("g-index", params, Basis::Stated, expected, format!("{} policies", order.len()), witness))
}

/// `t_j` for `j = 0 … k−2` from `t_{k−2} = 1`,
/// `t_j = 1 + (1/(k−j−1)) Σ_{j′>j} t_{j′}`.
pub fn g_random_steps(k: usize) -> Vec<Rational> {
    let mut t = vec![Rational::zero(); k - 1];
    let mut tail = Rational::zero();
    for j in (0..k - 1).rev() {
        t[j] = int(1) + &tail / int((k - j - 1) as i64);
        tail += &t[j];
    }
    t
}

/// `H(r) = 1 + 1/2 + … + 1/r`.
pub fn harmonic(r: usize) -> Rational {
    (1..=r).map(|i| Rational::new(1.into(), (i as i64).into())).sum()
}

/// Expected policy count with uniformly random improving actions:
/// `n·t_0 + 1`.
pub fn expected_g_random(n: usize, k: usize) -> Rational {
    int(n as i64) * &g_random_steps(k)[0] + int(1)
}

/// The recurrence's `t_0` equals `H(k−1)` for every `2 ≤ k ≤ k_max`.
pub fn check_g_harmonic(k_max: usize) -> ClaimReport {
    let witness = (2..=k_max).find_map(|k| {
        let t0 = &g_random_steps(k)[0];
        let h = harmonic(k - 1);
        (*t0 != h).then(|| format!("k={k}: t_0 = {} ≠ H({}) = {}", rational::format(t0), k - 1, rational::format(&h)))
    });
    ClaimReport::new("g-harmonic", format!("k ≤ {k_max}"), Basis::Derived, "t_0 = H(k-1)", format!("{} values of k", k_max.saturating_sub(1)), witness)
}

/// Monte-Carlo mean trajectory length under random actions against
/// `n·H(k−1) + 1`, passing within three standard errors.
pub fn check_g_random(n: usize, k: usize, trials: u64, seed: u64) -> Result<ClaimReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be ≥ 1".into()));
    }
    let (mdp, _) = build_g(n, k)?;
    let variant = Variant::new(StateSelector::Howard, ActionSelector::RandomUniform);
    let start = Policy::zeros(n);
    let cap = n * (k - 1) + 1;
    let lengths: Vec<std::result::Result<usize, String>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            run_with_rng(&mdp, &start, &variant, seed, &mut rng, cap)
                .map(|t| t.len())
                .map_err(|e| format!("trial {trial}: {e}"))
        })
        .collect();
    let expected = expected_g_random(n, k);
    let exp_f = rational::to_f64(&expected);
    let params = format!("n={n} k={k} trials={trials} seed={seed}");
    let expected_text = format!("mean {} ≈ {exp_f:.4} within 3 SE", rational::format(&expected));
    let lengths: Vec<usize> = match lengths.into_iter().collect() {
        Ok(l) => l,
        Err(w) => return Ok(ClaimReport::new("g-random", params, Basis::Derived, expected_text, "run aborted", Some(w))),
    };
    let count = lengths.len() as f64;
    let mean = lengths.iter().sum::<usize>() as f64 / count;
    let var = if lengths.len() > 1 {
        lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let se = (var / count).sqrt();
    let diff = (mean - exp_f).abs();
    let within = if se == 0.0 { diff < 1e-9 } else { diff <= 3.0 * se };
    let observed = format!("mean {mean:.4}, SE {se:.4}");
    let witness = (!within).then(|| format!("|{mean:.4} − {exp_f:.4}| = {diff:.4} > 3·SE = {:.4}", 3.0 * se));
    Ok(ClaimReport::new("g-random", params, Basis::Derived, expected_text, observed, witness))
}

/// `V^{π_ij}(s_u)`: `−2^u` below `i`, `−2^i p_j` at `i`, 0 above.
pub fn g_table_value(k: usize, i: usize, j: usize, u: usize) -> Rational {
    match u.cmp(&i) {
        std::cmp::Ordering::Less => -pow2(u as i64),
        std::cmp::Ordering::Equal => -pow2(i as i64) * g_intermediate_prob(j, k),
        std::cmp::Ordering::Greater => Rational::zero(),
    }
}

/// For every `π_ij` with `j ≤ k−2`: the improvable set is `{s_i}` with
/// improving actions `{j+1 … k−1}`, and the value table holds exactly.
pub fn check_lemma2(n: usize, k: usize) -> Result<ClaimReport> {
    let (mdp, _) = build_g(n, k)?;
    let mut checks = 0usize;
    let mut witness = None;
    'outer: for i in 1..=n {
        for j in 0..=k - 2 {
            let p = g_policy(n, k, i, j);
            checks += 1;
            let set = improvement_set(&mdp, &p)?;
            let want: Vec<usize> = (j + 1..k).collect();
            if set.states() != vec![i - 1] || set.actions(i - 1) != Some(&want[..]) {
                let found: Vec<_> = set.iter().map(|(s, a)| (s + 1, a.to_vec())).collect();
                witness = Some(format!("{p}: improvable {found:?}, expected s_{i} with {want:?}"));
                break 'outer;
            }
            let values = mdp.evaluate(&p)?;
            for u in 1..=n {
                let want = g_table_value(k, i, j, u);
                if *values.get(u - 1) != want {
                    witness = Some(format!("{p}: V(s_{u}) = {} ≠ {}", rational::format(values.get(u - 1)), rational::format(&want)));
                    break 'outer;
                }
            }
        }
    }
    Ok(ClaimReport::new(
        "lemma2",
        format!("n={n} k={k}"),
        Basis::Stated,
        format!("{} policy checks", n * (k - 1)),
        format!("{checks} policy checks"),
        witness,
    ))
}

// ---------------------------------------------------------------------------
// H(n, k)

/// Simple PI on `H(n, k)` from all zeros.
pub fn h_run(n: usize, k: usize, action: ActionSelector, seed: u64) -> Result<Trajectory> {
    let (mdp, layout) = build_h(n, k)?;
    let variant = Variant::new(simple_for(&layout), action);
    run(&mdp, &layout.zeros(), &variant, seed, iteration_cap(n, k))
}

/// Policies visited by Simple PI with index-based actions.
pub fn h_count(n: usize, k: usize) -> Result<usize> {
    Ok(h_run(n, k, ActionSelector::IndexMin, 0)?.len())
}

/// Counts observed for `n = 1 … 7`, keyed by `k`.
pub const H_COUNT_FIXTURE: [(usize, [usize; 7]); 4] = [
    (2, [2, 4, 8, 16, 32, 64, 128]),
    (3, [3, 6, 12, 24, 48, 96, 192]),
    (4, [4, 8, 16, 32, 64, 128, 256]),
    (5, [5, 10, 20, 40, 79, 158, 316]),
];

pub fn check_h_counts() -> Result<ClaimReport> {
    let mut witness = None;
    'outer: for (k, counts) in H_COUNT_FIXTURE {
        for (i, &want) in counts.iter().enumerate() {
            let got = h_count(i + 1, k)?;
            if got != want {
                witness = Some(format!("H({},{k}): {got} ≠ {want}", i + 1));
                break 'outer;
            }
        }
    }
    Ok(ClaimReport::new("h-counts", "n ≤ 7, k ≤ 5", Basis::Frozen, "fixture counts", "28 instances", witness))
}

fn decision_part(p: &Policy, n: usize) -> &[usize] {
    &p.actions()[..n]
}

/// The `{0, k−1}^n` subsequence of the `H(n, k)` run, restricted to
/// decision states, equals the `H(n, 2)` run with `1 ↦ k−1`.
pub fn check_h_embedding(n: usize, k: usize, action: ActionSelector, seed: u64) -> Result<ClaimReport> {
    let params = format!("n={n} k={k} {} seed={seed}", action.name());
    let low = h_run(n, 2, action.clone(), seed)?;
    let high = h_run(n, k, action, seed)?;
    let image: Vec<Vec<usize>> = low
        .policies()
        .map(|p| decision_part(p, n).iter().map(|&a| if a == 1 { k - 1 } else { a }).collect())
        .collect();
    let sub: Vec<&[usize]> = high
        .policies()
        .map(|p| decision_part(p, n))
        .filter(|d| d.iter().all(|&a| a == 0 || a == k - 1))
        .collect();
    let show = |d: Option<&[usize]>| d.map_or("nothing".to_string(), |d| Policy::new(d.to_vec()).to_string());
    let witness = (0..image.len().max(sub.len()))
        .find(|&i| image.get(i).map(Vec::as_slice) != sub.get(i).copied())
        .map(|i| format!("position {i}: k-run has {}, image of the 2-run has {}", show(sub.get(i).copied()), show(image.get(i).map(Vec::as_slice))));
    Ok(ClaimReport::new(
        "h-embedding",
        params,
        Basis::Stated,
        format!("{} matching policies", image.len()),
        format!("{} of {} k-run policies in {{0,k-1}}^n", sub.len(), high.len()),
        witness,
    ))
}

/// Iterations at `k` are at least `(k−1)` times (index-based) or at least
/// once (otherwise) the number of `0 → 1` switches of the `k = 2` run.
pub fn check_h_switch_count(n: usize, k: usize, action: ActionSelector, seed: u64) -> Result<ClaimReport> {
    let params = format!("n={n} k={k} {} seed={seed}", action.name());
    let multiplier = if action == ActionSelector::IndexMin { k - 1 } else { 1 };
    let low = h_run(n, 2, action.clone(), seed)?;
    let high = h_run(n, k, action, seed)?;
    let raises = low
        .steps
        .iter()
        .flat_map(|s| &s.switched)
        .filter(|w| w.state < n && w.from == 0 && w.to == 1)
        .count();
    let iterations = high.len() - 1;
    let bound = multiplier * raises;
    let witness = (iterations < bound).then(|| format!("{iterations} iterations < {multiplier}·{raises}"));
    Ok(ClaimReport::new(
        "h-switch-count",
        params,
        Basis::Stated,
        format!("≥ {bound} iterations"),
        format!("{iterations} iterations"),
        witness,
    ))
}

/// `count(n+1, 2) / count(n, 2) ∈ [1.8, 2.2]` for `n` in `from..=to`.
pub fn check_h_growth(from: usize, to: usize) -> Result<ClaimReport> {
    let counts: Vec<usize> = (from..=to + 1).map(|n| h_count(n, 2)).collect::<Result<_>>()?;
    let ratios: Vec<f64> = counts.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    let witness = ratios
        .iter()
        .zip(from..)
        .find(|(r, _)| !(1.8..=2.2).contains(*r))
        .map(|(r, n)| format!("count({},2)/count({n},2) = {r:.4}", n + 1));
    let observed = ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ");
    Ok(ClaimReport::new("h-growth", format!("n={from}..{to}"), Basis::Stated, "ratios in [1.8, 2.2]", observed, witness))
}

/// Chance states of `H(n, k)` are never improvable, over every assignment
/// of decision states.
pub fn check_h_chance_states(n: usize, k: usize, budget: u128) -> Result<ClaimReport> {
    let count = policy_count(n, k, budget)?;
    let (mdp, layout) = build_h(n, k)?;
    let mut witness = None;
    for decision in Policy::enumerate(n, k) {
        let mut actions = decision.actions().to_vec();
        actions.resize(2 * n, 0);
        let p = Policy::new(actions);
        if let Some(s) = improvement_set(&mdp, &p)?.states().into_iter().find(|&s| s >= n) {
            witness = Some(format!("{}: {} improvable", layout.render(&p), layout.state_names[s]));
            break;
        }
    }
    Ok(ClaimReport::new("h-chance-states", format!("n={n} k={k}"), Basis::Stated, "no chance state improvable", format!("{count} policies"), witness))
}

/// At an improvable decision state with action `a < k−1`, every action
/// above `a` improves.
pub fn check_h_improving_actions(n: usize, k: usize, budget: u128) -> Result<ClaimReport> {
    let count = policy_count(n, k, budget)?;
    let (mdp, layout) = build_h(n, k)?;
    let mut witness = None;
    'outer: for decision in Policy::enumerate(n, k) {
        let mut actions = decision.actions().to_vec();
        actions.resize(2 * n, 0);
        let p = Policy::new(actions);
        let set = improvement_set(&mdp, &p)?;
        for (s, improving) in set.iter() {
            let a = p.action(s);
            if let Some(b) = (a + 1..k).find(|b| !improving.contains(b)) {
                witness = Some(format!(
                    "{}: at {} action {b} above current {a} is not improving (improving {improving:?})",
                    layout.render(&p),
                    layout.state_names[s]
                ));
                break 'outer;
            }
        }
    }
    Ok(ClaimReport::new(
        "h-improving-actions",
        format!("n={n} k={k}"),
        Basis::Stated,
        "IA(s) ⊇ {a+1..k-1}",
        format!("{count} policies"),
        witness,
    ))
}

// ---------------------------------------------------------------------------
// discounting

/// Reruns the family's designated variant at `γ = (1 + γ₀)/2` and compares
/// the policy sequence with the total-reward run.
pub fn check_discount_transfer(desc: FamilyDescriptor, seed: u64, budget: u128) -> Result<ClaimReport> {
    let (mdp, layout) = desc.build()?;
    let cert = gamma_threshold(&mdp, budget)?;
    let gamma = cert.safe_discount();
    let discounted = mdp.with_discount(gamma.clone())?;
    let variant = designated_variant(&layout);
    let start = layout.zeros();
    let cap = iteration_cap(mdp.n_nonterminal(), mdp.n_actions());
    let bound = if cert.exact { "" } else { " (upper bound)" };
    let expected = "identical policy sequences";
    let params = format!("{desc} {variant} seed={seed}");
    let base = run(&mdp, &start, &variant, seed, cap);
    let disc = run(&discounted, &start, &variant, seed, cap);
    let (base, disc) = match (base, disc) {
        (Ok(b), Ok(d)) => (b, d),
        (Err(e), _) => return Ok(ClaimReport::new("discount-transfer", params, Basis::Stated, expected, "total-reward run aborted", Some(e.to_string()))),
        (_, Err(e)) => return Ok(ClaimReport::new("discount-transfer", params, Basis::Stated, expected, "discounted run aborted", Some(e.to_string()))),
    };
    let a: Vec<&Policy> = base.policies().collect();
    let b: Vec<&Policy> = disc.policies().collect();
    let witness = (0..a.len().max(b.len())).find(|&i| a.get(i) != b.get(i)).map(|i| {
        let show = |p: Option<&&Policy>| p.map_or("nothing".to_string(), |p| layout.render(p));
        format!("position {i}: {} vs {}", show(a.get(i)), show(b.get(i)))
    });
    let observed = format!(
        "Δ = {}, γ₀ = {}{bound}, γ = {}, {} policies",
        rational::format(&cert.delta),
        rational::format(&cert.gamma0),
        rational::format(&gamma),
        b.len()
    );
    Ok(ClaimReport::new("discount-transfer", params, Basis::Stated, expected, observed, witness))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn f_count_values() {
        assert_eq!(f_count(3, 3).unwrap(), 73);
        assert_eq!(f_count(2, 3).unwrap(), 21);
        assert_eq!(f_count(2, 2).unwrap(), 9);
        for k in 2..10 {
            assert_eq!(f_count(1, k).unwrap(), 2 * k as u128 - 1);
        }
        assert!(f_count(0, 3).is_err());
    }

    #[test]
    fn lemma1_chain_example() {
        let x = KaryString::parse("002", 3).unwrap();
        let chain: Vec<String> = lemma1_chain(&x).unwrap().iter().map(ToString::to_string).collect();
        assert_eq!(chain, ["002·002", "002·012", "002·010", "000·010", "010·010"]);
        for k in 2..6 {
            for d in 0..k - 1 {
                let x = KaryString::new(vec![d], k).unwrap();
                assert_eq!(lemma1_chain(&x).unwrap().len(), 3);
            }
        }
    }

    #[test]
    fn g_random_expectation() {
        assert_eq!(g_random_steps(3)[0], ratio(3, 2));
        assert_eq!(expected_g_random(4, 3), int(7));
        assert_eq!(expected_g_random(5, 2), int(6));
        assert_eq!(expected_g_random(1, 5), int(1) + ratio(25, 12));
    }

    #[test]
    fn g_order_example() {
        let order: Vec<String> = g_index_order(3, 3).iter().map(ToString::to_string).collect();
        assert_eq!(order, ["000", "001", "002", "012", "022", "122", "222"]);
    }

    #[test]
    fn corrupted_trajectory_is_caught() {
        let (mdp, _, mut traj) = peculiar_run(2, 2).unwrap();
        assert!(certify_trajectory(&mdp, &traj, 1 << 20).passed);
        traj.steps[4].policy = Policy::new(vec![1, 1, 1, 1]);
        let report = certify_trajectory(&mdp, &traj, 1 << 20);
        assert!(!report.passed);
        let w = report.witness.unwrap();
        assert!(w.starts_with("step 4"), "{w}");
    }

    #[test]
    fn optimal_start_certifies() {
        let (mdp, _) = build_g(3, 3).unwrap();
        let traj = run(&mdp, &Policy::new(vec![2, 2, 2]), &Variant::new(StateSelector::Howard, ActionSelector::IndexMin), 0, 10).unwrap();
        assert_eq!(traj.len(), 1);
        assert!(certify_trajectory(&mdp, &traj, 1000).passed);
    }

    #[test]
    fn table_renders() {
        let r = ClaimReport::new("x", "p", Basis::Derived, "e", "o", Some("w".into()));
        assert!(!r.passed);
        let t = render_table(&[r]);
        assert!(t.lines().nth(1).unwrap().starts_with("FAIL"));
    }
}
