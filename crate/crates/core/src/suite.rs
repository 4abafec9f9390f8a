//! The acceptance suite: ten numbered criteria, each a batch of claim
//! reports, plus the remaining checkers for `verify --all`.

use rayon::prelude::*;

use crate::engine::{run, ActionSelector, StateSelector, Variant};
use crate::error::Result;
use crate::families::{FamilyDescriptor, FamilyKind};
use crate::mdp::policy_count;
use crate::verify::{self, Basis, Budgets, ClaimReport};

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "F(3,3) Peculiar run equals the 73-row table"),
    (2, "F(m,k) Peculiar length, balanced order and final policy"),
    (3, "every produced trajectory certifies"),
    (4, "G(n,k) index-based runs: n(k-1)+1 policies, selector-independent"),
    (5, "G(n,k) random actions: mean length n·H(k-1)+1 within 3 SE"),
    (6, "G(n,k) improvable sets and value table for n,k ≤ 8"),
    (7, "F balanced-policy dominance and improvement chains"),
    (8, "H(n,k) embedding, switch count and doubling"),
    (9, "discount above γ₀ reproduces the total-reward runs"),
    (10, "seeded runs give byte-identical logs"),
];

pub const G_RANDOM_TRIALS: u64 = 10_000;
pub const G_RANDOM_SEED: u64 = 2024;

pub fn title(id: u8) -> &'static str {
    CRITERIA.iter().find(|(i, _)| *i == id).map_or("unknown criterion", |(_, t)| t)
}

pub fn criterion(id: u8, budgets: &Budgets) -> Result<Vec<ClaimReport>> {
    match id {
        1 => Ok(vec![verify::check_f_table()?, verify::check_f(3, 3, 100_000)?]),
        2 => f_grid(),
        3 => certification_grid(budgets),
        4 => (1..=10)
            .flat_map(|n| (2..=10).map(move |k| (n, k)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(n, k)| verify::check_g_index(n, k))
            .collect(),
        5 => {
            let mut out = vec![verify::check_g_harmonic(64)];
            for (n, k) in [(4, 3), (3, 5), (2, 8)] {
                out.push(verify::check_g_random(n, k, G_RANDOM_TRIALS, G_RANDOM_SEED)?);
            }
            Ok(out)
        }
        6 => (1..=8)
            .flat_map(|n| (2..=8).map(move |k| (n, k)))
            .map(|(n, k)| verify::check_lemma2(n, k))
            .collect(),
        7 => {
            let mut out = Vec::new();
            for (m, k) in [(2, 2), (2, 3), (3, 3)] {
                out.push(verify::check_prop1(m, k, budgets.oracle)?);
                out.push(verify::check_lemma1_segments(m, k, budgets.oracle)?);
            }
            Ok(out)
        }
        8 => {
            let mut out: Vec<ClaimReport> = (1..=8)
                .flat_map(|n| [3, 4, 5].map(|k| (n, k)))
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|(n, k)| -> Result<[ClaimReport; 2]> {
                    Ok([
                        verify::check_h_embedding(n, k, ActionSelector::IndexMin, 0)?,
                        verify::check_h_switch_count(n, k, ActionSelector::IndexMin, 0)?,
                    ])
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            out.push(verify::check_h_growth(6, 11)?);
            Ok(out)
        }
        9 => ["F:2,2", "F:2,3", "G:2,3", "H:3,2"]
            .iter()
            .map(|d| verify::check_discount_transfer(d.parse()?, 0, budgets.delta))
            .collect(),
        10 => determinism(),
        other => Err(crate::Error::InvalidParameter(format!("no criterion {other}"))),
    }
}

/// Checkers outside the numbered criteria.
pub fn extras(budgets: &Budgets) -> Result<Vec<ClaimReport>> {
    let mut out = Vec::new();
    for m in 1..=3 {
        for k in 2..=3 {
            out.push(verify::check_balanced_values(m, k, budgets.oracle)?);
        }
    }
    out.push(verify::check_h_counts()?);
    for (n, k) in [(3, 2), (3, 3), (4, 3), (4, 4)] {
        out.push(verify::check_h_chance_states(n, k, budgets.oracle)?);
        out.push(verify::check_h_improving_actions(n, k, budgets.oracle)?);
    }
    out.push(verify::check_h_embedding(3, 3, ActionSelector::RandomUniform, 7)?);
    out.push(verify::check_h_switch_count(3, 3, ActionSelector::RandomUniform, 7)?);
    Ok(out)
}

fn f_grid() -> Result<Vec<ClaimReport>> {
    let cells: Vec<(usize, usize)> = (1..=5)
        .flat_map(|m| (2..=5).map(move |k| (m, k)))
        .filter(|&(m, k)| verify::f_count(m, k).is_ok_and(|c| c <= 100_000))
        .collect();
    cells.into_par_iter().map(|(m, k)| verify::check_f(m, k, 100_000)).collect()
}

/// Instances certified under every variant.
pub fn certification_instances() -> Vec<FamilyDescriptor> {
    let mut out = Vec::new();
    for (m, k) in [(1, 2), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3), (2, 4)] {
        out.push(FamilyDescriptor::new(FamilyKind::F, m, k));
    }
    for n in 1..=4 {
        for k in 2..=4 {
            out.push(FamilyDescriptor::new(FamilyKind::G, n, k));
        }
    }
    out.push(FamilyDescriptor::new(FamilyKind::G, 3, 5));
    for n in 1..=3 {
        for k in 2..=4 {
            out.push(FamilyDescriptor::new(FamilyKind::H, n, k));
        }
    }
    out
}

/// Howard, Simple and random-subset states crossed with index, random and
/// max-Q actions (two seeds when random), plus Peculiar on F.
pub fn certification_variants(desc: &FamilyDescriptor) -> Result<Vec<(Variant, u64)>> {
    let (_, layout) = desc.build()?;
    let states = [StateSelector::Howard, verify::simple_for(&layout), StateSelector::RandomSubset];
    let actions = [ActionSelector::IndexMin, ActionSelector::RandomUniform, ActionSelector::MaxQ];
    let mut out = Vec::new();
    for s in &states {
        for a in &actions {
            let v = Variant::new(s.clone(), a.clone());
            let seeds: &[u64] = if v.is_random() { &[1, 2] } else { &[0] };
            out.extend(seeds.iter().map(|&seed| (v.clone(), seed)));
        }
    }
    if desc.kind == FamilyKind::F {
        out.push((verify::designated_variant(&layout), 0));
    }
    Ok(out)
}

fn certification_grid(budgets: &Budgets) -> Result<Vec<ClaimReport>> {
    let per_instance: Vec<Vec<ClaimReport>> = certification_instances()
        .into_par_iter()
        .map(|desc| -> Result<Vec<ClaimReport>> {
            let (mdp, layout) = desc.build()?;
            let oracle = match policy_count(mdp.n_nonterminal(), mdp.n_actions(), budgets.oracle) {
                Ok(_) => Some(mdp.brute_force_optimal(budgets.oracle)?.1),
                Err(_) => None,
            };
            let cap = usize::try_from(policy_count(mdp.n_nonterminal(), mdp.n_actions(), u128::MAX)?).unwrap_or(usize::MAX);
            let mut out = Vec::new();
            for (variant, seed) in certification_variants(&desc)? {
                let mut report = match run(&mdp, &layout.zeros(), &variant, seed, cap) {
                    Ok(traj) => verify::certify_against(&mdp, &traj, oracle.as_ref()),
                    Err(e) => ClaimReport::new("trajectory", "", Basis::Stated, "a certified run", "run aborted", Some(e.to_string())),
                };
                report.params = format!("{desc} {variant} seed={seed}");
                out.push(report);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_instance.into_iter().flatten().collect())
}

fn determinism() -> Result<Vec<ClaimReport>> {
    let mut out = Vec::new();
    for desc in ["F:3,3", "G:4,5", "H:4,3", "G:3,4", "H:3,4"] {
        let desc: FamilyDescriptor = desc.parse()?;
        let (mdp, layout) = desc.build()?;
        for (variant, seed) in certification_variants(&desc)?.into_iter().filter(|(v, _)| v.is_random()) {
            let go = || run(&mdp, &layout.zeros(), &variant, seed + 40, 1 << 20).map(|t| t.to_jsonl(layout.split_at()));
            let (a, b) = (go()?, go()?);
            let witness = (a != b).then(|| {
                let line = a.lines().zip(b.lines()).position(|(x, y)| x != y).unwrap_or(a.lines().count().min(b.lines().count()));
                format!("logs differ at line {line}")
            });
            out.push(ClaimReport::new(
                "determinism",
                format!("{desc} {variant} seed={}", seed + 40),
                Basis::Derived,
                "identical logs on rerun",
                format!("{} bytes", a.len()),
                witness,
            ));
        }
    }
    Ok(out)
}
