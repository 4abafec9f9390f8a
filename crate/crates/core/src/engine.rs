//! Policy improvement and the pluggable Policy Iteration runner.
//!
//! A PI variant is a pair of strategies: which improvable states to switch
//! ([`StateSelector`]) and which improving action each switched state takes
//! ([`ActionSelector`]). Randomised strategies draw from a seeded ChaCha8
//! stream so that every run is reproducible from `(seed, MDP, π₀, variant)`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::codec::{self, KaryString, SplitPolicy};
use crate::error::{Error, Result};
use crate::mdp::{compare, Dominance, Mdp, Policy, QFn, ValueFn};

pub const GENERATOR_NAME: &str = "ChaCha8Rng (rand_chacha 0.3, seed_from_u64)";
pub const MAX_Q_TIE_BREAK: &str = "smallest-index";

/// Improvable states of a policy with their improving actions, both sorted
/// ascending. Represents `IP(π)` implicitly.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ImprovementSet {
    entries: BTreeMap<usize, Vec<usize>>,
}

impl ImprovementSet {
    pub fn from_q(policy: &Policy, q: &QFn) -> Self {
        let mut entries = BTreeMap::new();
        for (s, row) in q.q.iter().enumerate() {
            let current = &row[policy.action(s)];
            let better: Vec<usize> = (0..row.len()).filter(|&a| row[a] > *current).collect();
            if !better.is_empty() {
                entries.insert(s, better);
            }
        }
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn contains(&self, s: usize) -> bool {
        self.entries.contains_key(&s)
    }

    pub fn states(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    /// Improving actions at `s`, or `None` when `s` is not improvable.
    pub fn actions(&self, s: usize) -> Option<&[usize]> {
        self.entries.get(&s).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.entries.iter().map(|(s, a)| (*s, a.as_slice()))
    }
}

impl Serialize for ImprovementSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.entries.iter())
    }
}

/// Everything one PI iteration needs to know about a policy.
#[derive(Clone, Debug)]
pub struct PolicyAnalysis {
    pub values: ValueFn,
    pub q: QFn,
    pub improvement: ImprovementSet,
}

pub fn analyze(mdp: &Mdp, policy: &Policy) -> Result<PolicyAnalysis> {
    let values = mdp.evaluate(policy)?;
    let q = mdp.q_values(policy, &values)?;
    let improvement = ImprovementSet::from_q(policy, &q);
    Ok(PolicyAnalysis { values, q, improvement })
}

pub fn improvement_set(mdp: &Mdp, policy: &Policy) -> Result<ImprovementSet> {
    Ok(analyze(mdp, policy)?.improvement)
}

/// True iff `next ∈ IP(current)`: `next` differs from `current` somewhere,
/// and only on improvable states, each time with an improving action.
pub fn is_improvement(mdp: &Mdp, current: &Policy, next: &Policy) -> Result<bool> {
    mdp.check_policy(next)?;
    let set = improvement_set(mdp, current)?;
    Ok(improves_under(&set, current, next))
}

pub(crate) fn improves_under(set: &ImprovementSet, current: &Policy, next: &Policy) -> bool {
    let mut changed = false;
    for (s, (&a, &b)) in current.actions().iter().zip(next.actions()).enumerate() {
        if a == b {
            continue;
        }
        match set.actions(s) {
            Some(ia) if ia.contains(&b) => changed = true,
            _ => return false,
        }
    }
    changed
}

/// Where the memoryless counter rule wants to switch next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PeculiarTarget {
    /// Counter state `s_u` (1-based).
    Counter(usize),
    /// Partner state `s'_u` (1-based).
    Partner(usize),
    /// No defined target: `[y] < [x]`, or the rule points outside `1..=m`.
    OffTrajectory(String),
}

impl PeculiarTarget {
    /// State index in the counter family's layout (`s_1 … s_m, s'_1 … s'_m`).
    pub fn state(&self, m: usize) -> Option<usize> {
        match *self {
            PeculiarTarget::Counter(u) => Some(u - 1),
            PeculiarTarget::Partner(u) => Some(m + u - 1),
            PeculiarTarget::OffTrajectory(_) => None,
        }
    }
}

impl fmt::Display for PeculiarTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeculiarTarget::Counter(u) => write!(f, "s_{u}"),
            PeculiarTarget::Partner(u) => write!(f, "s'_{u}"),
            PeculiarTarget::OffTrajectory(why) => write!(f, "off-trajectory ({why})"),
        }
    }
}

/// Target state of the memoryless counter rule for `x·y`, with
/// `d = [y] − [x]` and `b = ⌊log_k d⌋`:
///
/// | case                   | target        |
/// |------------------------|---------------|
/// | `d < 0`                | off-trajectory|
/// | `d = 0`                | `s'_{I(x)}`   |
/// | `d = 1`                | `s_m`         |
/// | `d ≥ 2`, `y_m = k − 1` | `s'_{m−b+1}`  |
/// | otherwise              | `s_{m−b}`     |
pub fn peculiar_target(sp: &SplitPolicy) -> PeculiarTarget {
    let m = sp.m();
    let k = sp.x.base();
    let (x, y) = (sp.x.numeral(), sp.y.numeral());
    if y < x {
        return PeculiarTarget::OffTrajectory(format!("[y] < [x] at {sp}"));
    }
    let d = y - x;
    if d.is_zero() {
        return match sp.x.last_non_max_index() {
            Ok(i) => PeculiarTarget::Partner(i),
            Err(_) => PeculiarTarget::OffTrajectory(format!("{sp} is the all-max balanced policy")),
        };
    }
    if d.is_one() {
        return PeculiarTarget::Counter(m);
    }
    let b = floor_log(&d, k);
    let out_of_range = || PeculiarTarget::OffTrajectory(format!("b = {b} out of range at {sp}"));
    if sp.y.at(m) == k - 1 {
        match (m + 1).checked_sub(b) {
            Some(u) if (1..=m).contains(&u) => PeculiarTarget::Partner(u),
            _ => out_of_range(),
        }
    } else {
        match m.checked_sub(b) {
            Some(u) if u >= 1 => PeculiarTarget::Counter(u),
            _ => out_of_range(),
        }
    }
}

fn floor_log(d: &BigUint, k: usize) -> usize {
    let k = BigUint::from(k);
    let mut power = k.clone();
    let mut b = 0;
    while &power <= d {
        power *= &k;
        b += 1;
    }
    b
}

/// Which improvable states get switched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StateSelector {
    /// Every improvable state.
    Howard,
    /// The improvable state ranked highest in `order`, which lists all
    /// non-terminal states from lowest to highest index and stays fixed for
    /// the whole run.
    Simple { order: Vec<usize> },
    /// A uniformly random non-empty subset of the improvable states.
    RandomSubset,
    /// The memoryless counter rule on the `x·y` layout with `m` counter
    /// states and `k` actions.
    Peculiar { m: usize, k: usize },
}

impl StateSelector {
    pub fn simple_identity(n: usize) -> Self {
        StateSelector::Simple { order: (0..n).collect() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StateSelector::Howard => "howard",
            StateSelector::Simple { .. } => "simple",
            StateSelector::RandomSubset => "random",
            StateSelector::Peculiar { .. } => "peculiar",
        }
    }
}

/// Which improving action a switched state moves to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionSelector {
    IndexMin,
    RandomUniform,
    /// Argmax of Q; ties go to the smallest action index.
    MaxQ,
    /// `(current + 1) mod k`, which must be improving.
    PeculiarCyclic,
}

impl ActionSelector {
    pub fn name(&self) -> &'static str {
        match self {
            ActionSelector::IndexMin => "index",
            ActionSelector::RandomUniform => "random",
            ActionSelector::MaxQ => "maxq",
            ActionSelector::PeculiarCyclic => "cyclic",
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, ActionSelector::RandomUniform)
    }
}

impl FromStr for ActionSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "index" => Ok(ActionSelector::IndexMin),
            "random" => Ok(ActionSelector::RandomUniform),
            "maxq" => Ok(ActionSelector::MaxQ),
            "cyclic" => Ok(ActionSelector::PeculiarCyclic),
            other => Err(Error::Parse(format!("unknown action selector {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variant {
    pub state: StateSelector,
    pub action: ActionSelector,
}

impl Variant {
    pub fn new(state: StateSelector, action: ActionSelector) -> Self {
        Self { state, action }
    }

    pub fn is_random(&self) -> bool {
        self.action.is_random() || self.state == StateSelector::RandomSubset
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.state.name(), self.action.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Switch {
    pub state: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Converged,
    Improved { policy: Policy, switches: Vec<Switch> },
}

/// One PI iteration from `policy`.
pub fn step<R: Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    variant: &Variant,
    rng: &mut R,
) -> Result<StepOutcome> {
    let analysis = analyze(mdp, policy)?;
    step_with(mdp, policy, &analysis, variant, rng)
}

fn step_with<R: Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    analysis: &PolicyAnalysis,
    variant: &Variant,
    rng: &mut R,
) -> Result<StepOutcome> {
    let set = &analysis.improvement;
    if set.is_empty() {
        return Ok(StepOutcome::Converged);
    }
    let states = select_states(policy, set, &variant.state, rng)?;
    let mut next = policy.clone();
    let mut switches = Vec::with_capacity(states.len());
    for s in states {
        let improving = set.actions(s).expect("selected states are improvable");
        let from = policy.action(s);
        let to = match variant.action {
            ActionSelector::IndexMin => improving[0],
            ActionSelector::RandomUniform => improving[rng.gen_range(0..improving.len())],
            ActionSelector::MaxQ => analysis.q.argmax_at(s),
            ActionSelector::PeculiarCyclic => {
                let to = (from + 1) % mdp.n_actions();
                if !improving.contains(&to) {
                    return Err(Error::OffTrajectory(format!(
                        "cyclic successor {to} of action {from} is not improving at state {s}"
                    )));
                }
                to
            }
        };
        next.set(s, to);
        switches.push(Switch { state: s, from, to });
    }
    Ok(StepOutcome::Improved { policy: next, switches })
}

fn select_states<R: Rng + ?Sized>(
    policy: &Policy,
    set: &ImprovementSet,
    selector: &StateSelector,
    rng: &mut R,
) -> Result<Vec<usize>> {
    Ok(match selector {
        StateSelector::Howard => set.states(),
        StateSelector::Simple { order } => {
            let s = order
                .iter()
                .rev()
                .find(|&&s| set.contains(s))
                .copied()
                .ok_or_else(|| Error::InvalidParameter("Simple PI order omits every improvable state".into()))?;
            vec![s]
        }
        StateSelector::RandomSubset => {
            let states = set.states();
            if states.len() > 127 {
                return Err(Error::InvalidParameter(format!(
                    "{} improvable states exceed the 127-bit subset mask",
                    states.len()
                )));
            }
            let top = (1u128 << states.len()) - 1;
            let mask = rng.gen_range(1..=top);
            states
                .into_iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, s)| s)
                .collect()
        }
        StateSelector::Peculiar { m, k } => {
            let sp = SplitPolicy::split(policy, *m, *k)?;
            let target = peculiar_target(&sp);
            let s = target
                .state(*m)
                .ok_or_else(|| Error::OffTrajectory(target.to_string()))?;
            if !set.contains(s) {
                return Err(Error::OffTrajectory(format!("target {target} of {sp} is not improvable")));
            }
            vec![s]
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunMeta {
    pub mdp_hash: String,
    pub state_selector: String,
    pub action_selector: String,
    pub seed: u64,
    pub generator: String,
    pub max_q_tie_break: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub policy: Policy,
    pub values: ValueFn,
    pub improvable: ImprovementSet,
    /// Switches taking this policy to the next one; empty on the last step.
    pub switched: Vec<Switch>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub meta: RunMeta,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn policies(&self) -> impl Iterator<Item = &Policy> {
        self.steps.iter().map(|s| &s.policy)
    }

    pub fn last_policy(&self) -> &Policy {
        &self.steps.last().expect("trajectory holds π₀").policy
    }

    /// Policies rendered with an optional `x·y` split after `split_at`.
    pub fn rendered(&self, split_at: Option<usize>) -> Vec<String> {
        self.policies().map(|p| codec::render(p, split_at)).collect()
    }

    /// JSON-lines log: a header record, then one record per iteration.
    pub fn write_jsonl<W: Write>(&self, mut w: W, split_at: Option<usize>) -> Result<()> {
        let header = json!({ "header": self.meta });
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for step in &self.steps {
            let switched: Vec<[usize; 3]> =
                step.switched.iter().map(|s| [s.state, s.from, s.to]).collect();
            let record = json!({
                "t": step.t,
                "policy": codec::render(&step.policy, split_at),
                "values": step.values.to_strings(),
                "improvable": step.improvable,
                "switched": switched,
            });
            writeln!(w, "{}", serde_json::to_string(&record)?)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self, split_at: Option<usize>) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf, split_at).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs `variant` from `start` until convergence, certifying strict value
/// improvement at every step. `max_iters` bounds the number of switches.
pub fn run(mdp: &Mdp, start: &Policy, variant: &Variant, seed: u64, max_iters: usize) -> Result<Trajectory> {
    let mut rng = rng_from_seed(seed);
    run_with_rng(mdp, start, variant, seed, &mut rng, max_iters)
}

/// As [`run`], drawing from a caller-provided stream. `seed` is recorded in
/// the metadata only.
pub fn run_with_rng<R: Rng + ?Sized>(
    mdp: &Mdp,
    start: &Policy,
    variant: &Variant,
    seed: u64,
    rng: &mut R,
    max_iters: usize,
) -> Result<Trajectory> {
    mdp.check_policy(start)?;
    if let StateSelector::Simple { order } = &variant.state {
        check_permutation(order, mdp.n_nonterminal())?;
    }
    let meta = RunMeta {
        mdp_hash: mdp.content_hash(),
        state_selector: variant.state.name().to_string(),
        action_selector: variant.action.name().to_string(),
        seed,
        generator: GENERATOR_NAME.to_string(),
        max_q_tie_break: MAX_Q_TIE_BREAK.to_string(),
    };
    let mut steps = Vec::new();
    let mut policy = start.clone();
    let mut analysis = analyze(mdp, &policy)?;
    for t in 0.. {
        let outcome = step_with(mdp, &policy, &analysis, variant, rng)?;
        let StepOutcome::Improved { policy: next, switches } = outcome else {
            steps.push(TrajectoryStep {
                t,
                policy,
                values: analysis.values,
                improvable: analysis.improvement,
                switched: Vec::new(),
            });
            break;
        };
        if t >= max_iters {
            return Err(Error::MaxIterations(max_iters));
        }
        let next_analysis = analyze(mdp, &next)?;
        if compare(&next_analysis.values, &analysis.values)? != Dominance::StrictlyDominates {
            return Err(Error::Certification {
                step: t + 1,
                reason: format!("{next} does not strictly dominate {policy}"),
            });
        }
        steps.push(TrajectoryStep {
            t,
            policy,
            values: analysis.values,
            improvable: analysis.improvement,
            switched: switches,
        });
        policy = next;
        analysis = next_analysis;
    }
    Ok(Trajectory { meta, steps })
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let seen: HashSet<usize> = order.iter().copied().collect();
    if order.len() != n || seen.len() != n || order.iter().any(|&s| s >= n) {
        return Err(Error::InvalidParameter(format!(
            "Simple PI order {order:?} is not a permutation of 0..{n}"
        )));
    }
    Ok(())
}

/// Initial policy for the counter family and the `x·y` split.
pub fn split_zeros(m: usize, k: usize) -> Policy {
    SplitPolicy::balanced(KaryString::zeros(m, k)).join()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    fn sp(text: &str) -> SplitPolicy {
        SplitPolicy::parse(text, 3).unwrap()
    }

    #[test]
    fn peculiar_rule_cases() {
        assert_eq!(peculiar_target(&sp("002·012")), PeculiarTarget::Partner(3));
        assert_eq!(peculiar_target(&sp("000·000")), PeculiarTarget::Partner(3));
        assert_eq!(peculiar_target(&sp("002·010")), PeculiarTarget::Counter(3));
        assert_eq!(peculiar_target(&sp("000·010")), PeculiarTarget::Counter(2));
        assert_eq!(peculiar_target(&sp("022·122")), PeculiarTarget::Partner(2));
        assert!(matches!(peculiar_target(&sp("001·000")), PeculiarTarget::OffTrajectory(_)));
        assert!(matches!(peculiar_target(&sp("222·222")), PeculiarTarget::OffTrajectory(_)));
        assert_eq!(PeculiarTarget::Partner(3).state(3), Some(5));
        assert_eq!(PeculiarTarget::Counter(1).state(3), Some(0));
    }

    #[test]
    fn floor_log_values() {
        assert_eq!(floor_log(&BigUint::from(2u32), 3), 0);
        assert_eq!(floor_log(&BigUint::from(3u32), 3), 1);
        assert_eq!(floor_log(&BigUint::from(26u32), 3), 2);
        assert_eq!(floor_log(&BigUint::from(27u32), 3), 3);
    }

    #[test]
    fn improves_under_rules() {
        let mut set = ImprovementSet::default();
        set.entries.insert(1, vec![2]);
        let cur = Policy::new(vec![0, 0]);
        assert!(improves_under(&set, &cur, &Policy::new(vec![0, 2])));
        assert!(!improves_under(&set, &cur, &cur));
        assert!(!improves_under(&set, &cur, &Policy::new(vec![0, 1])));
        assert!(!improves_under(&set, &cur, &Policy::new(vec![1, 2])));
    }

    #[test]
    fn random_subset_is_nonempty_subset() {
        let mut set = ImprovementSet::default();
        for s in [0, 2, 5] {
            set.entries.insert(s, vec![1]);
        }
        let mut rng = rng_from_seed(7);
        let mut seen = HashSet::new();
        for _ in 0..400 {
            let chosen = select_states(&Policy::zeros(6), &set, &StateSelector::RandomSubset, &mut rng).unwrap();
            assert!(!chosen.is_empty());
            assert!(chosen.iter().all(|s| set.contains(*s)));
            seen.insert(chosen);
        }
        assert_eq!(seen.len(), 7);
    }

    #[test]
    fn simple_order_must_be_permutation() {
        let mut def = crate::mdp::MdpDefinition::zeroed(2, 1, 2);
        for s in 0..2 {
            for a in 0..2 {
                def.set(s, a, int(a as i64), &[(2, int(1))]);
            }
        }
        let mdp = Mdp::try_from(def).unwrap();
        let bad = Variant::new(StateSelector::Simple { order: vec![0, 0] }, ActionSelector::IndexMin);
        assert!(run(&mdp, &Policy::zeros(2), &bad, 0, 10).is_err());
        let good = Variant::new(StateSelector::Simple { order: vec![1, 0] }, ActionSelector::IndexMin);
        let traj = run(&mdp, &Policy::zeros(2), &good, 0, 10).unwrap();
        // highest-ranked state (0) switches first
        assert_eq!(traj.rendered(None), ["00", "10", "11"]);
        assert!(matches!(
            run(&mdp, &Policy::zeros(2), &good, 0, 1),
            Err(Error::MaxIterations(1))
        ));
    }
}
