//! Regular two-level fractional factorial designs.
//!
//! Factors are indexed from 0. The first `p - q` factors are the base factors
//! of a full `2^(p-q)` factorial; each of the remaining `q` factors is the
//! product of the base columns listed in its generator. Words of the defining
//! relation are bit masks over all `p` factors.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::data::{default_factor_names, Coding, DesignMatrix};
use crate::error::{Error, Result};
use crate::rng::seeded;

const MAX_FACTORS: usize = 63;
const MAX_ENUMERATED_GENERATORS: usize = 32;
const SEARCH_BUDGET: usize = 20_000;

/// Parameters of a regular `2^(p-q)` fraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorialDesignSpec {
    p: usize,
    q: usize,
    generators: Vec<Vec<usize>>,
}

impl FactorialDesignSpec {
    /// `generators[j]` lists the base factors whose product defines factor
    /// `p - q + j`.
    pub fn new(p: usize, q: usize, generators: Vec<Vec<usize>>) -> Result<Self> {
        if p == 0 || p > MAX_FACTORS {
            return Err(Error::Construction(format!(
                "factor count must be in 1..={MAX_FACTORS}, got {p}"
            )));
        }
        if q >= p {
            return Err(Error::Construction(format!(
                "fraction exponent q={q} must be smaller than p={p}"
            )));
        }
        if generators.len() != q {
            return Err(Error::Construction(format!(
                "{} generators supplied for q={q}",
                generators.len()
            )));
        }
        let base = p - q;
        let mut normalized = Vec::with_capacity(q);
        for (j, g) in generators.into_iter().enumerate() {
            let mut g = g;
            g.sort_unstable();
            g.dedup();
            if g.iter().any(|&i| i >= base) {
                return Err(Error::Construction(format!(
                    "generator of {} uses a non-base factor",
                    factor_letter(base + j)
                )));
            }
            if g.len() < 2 {
                return Err(Error::Construction(format!(
                    "generator of {} must involve at least two base factors (defining word length >= 3)",
                    factor_letter(base + j)
                )));
            }
            normalized.push(g);
        }
        Ok(Self {
            p,
            q,
            generators: normalized,
        })
    }

    pub fn full(p: usize) -> Result<Self> {
        Self::new(p, 0, Vec::new())
    }

    pub fn factors(&self) -> usize {
        self.p
    }

    pub fn fraction_exponent(&self) -> usize {
        self.q
    }

    pub fn generators(&self) -> &[Vec<usize>] {
        &self.generators
    }

    pub fn base_factors(&self) -> usize {
        self.p - self.q
    }

    pub fn runs(&self) -> usize {
        1 << self.base_factors()
    }

    /// Column of every factor expressed as a mask over the base factors.
    fn base_masks(&self) -> Vec<u64> {
        let base = self.base_factors();
        (0..base)
            .map(|i| 1u64 << i)
            .chain(self.generators.iter().map(|g| mask_of(g)))
            .collect()
    }

    /// Generating words of the defining relation, as masks over all factors.
    fn defining_words(&self) -> Vec<u64> {
        let base = self.base_factors();
        self.generators
            .iter()
            .enumerate()
            .map(|(j, g)| mask_of(g) | (1u64 << (base + j)))
            .collect()
    }

    fn in_defining_relation(&self, word: u64, generators: &[u64]) -> bool {
        let added = word >> self.base_factors();
        let mut product = 0u64;
        for (j, g) in generators.iter().enumerate() {
            if added >> j & 1 == 1 {
                product ^= g;
            }
        }
        product == word
    }

    /// Human-readable generators, e.g. `D=ABC`.
    pub fn generator_labels(&self) -> Vec<String> {
        let base = self.base_factors();
        self.generators
            .iter()
            .enumerate()
            .map(|(j, g)| {
                let word: String = g.iter().map(|&i| factor_letter(i)).collect();
                format!("{}={}", factor_letter(base + j), word)
            })
            .collect()
    }
}

fn mask_of(indices: &[usize]) -> u64 {
    indices.iter().fold(0u64, |m, &i| m | (1u64 << i))
}

/// Letter label of factor `i`: A..Z, then a..z, then `F<i+1>`.
pub fn factor_letter(i: usize) -> String {
    match i {
        0..=25 => ((b'A' + i as u8) as char).to_string(),
        26..=51 => ((b'a' + (i - 26) as u8) as char).to_string(),
        _ => format!("F{}", i + 1),
    }
}

/// Design resolution: the length of the shortest defining word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    /// Complete factorial, no defining relation.
    Full,
    Finite(u32),
}

impl Resolution {
    pub fn at_least(self, r: u32) -> bool {
        match self {
            Resolution::Full => true,
            Resolution::Finite(v) => v >= r,
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const ROMAN: [&str; 9] = ["", "I", "II", "III", "IV", "V", "VI", "VII", "VIII"];
        match *self {
            Resolution::Full => f.write_str("full"),
            Resolution::Finite(r) if (r as usize) < ROMAN.len() => f.write_str(ROMAN[r as usize]),
            Resolution::Finite(r) => write!(f, "{r}"),
        }
    }
}

/// Aliasing summary of a regular fraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasStructure {
    /// Number of defining words of each length.
    pub word_length_pattern: BTreeMap<usize, u64>,
    /// For each main effect that has any, the main effects and two-factor
    /// interactions it is aliased with. Effects are sorted factor lists.
    pub aliases_of_main_effects: BTreeMap<usize, Vec<Vec<usize>>>,
    pub resolution: Resolution,
}

/// Enumerates the defining relation and the low-order aliases of every main
/// effect.
pub fn alias_structure(spec: &FactorialDesignSpec) -> Result<AliasStructure> {
    if spec.q > MAX_ENUMERATED_GENERATORS {
        return Err(Error::Construction(format!(
            "defining relation with 2^{} words is too large to enumerate",
            spec.q
        )));
    }
    let words = spec.defining_words();
    let mut pattern = BTreeMap::new();
    // Gray-code walk over all non-empty products of the generating words.
    let mut current = 0u64;
    for i in 1u64..(1u64 << spec.q) {
        let flip = i.trailing_zeros() as usize;
        current ^= words[flip];
        *pattern.entry(current.count_ones() as usize).or_insert(0u64) += 1;
    }
    let resolution = pattern
        .keys()
        .next()
        .map_or(Resolution::Full, |&len| Resolution::Finite(len as u32));

    let p = spec.p;
    let mut aliases = BTreeMap::new();
    for i in 0..p {
        let mut list = Vec::new();
        for a in 0..p {
            if a != i && spec.in_defining_relation((1u64 << i) ^ (1u64 << a), &words) {
                list.push(vec![a]);
            }
        }
        for a in 0..p {
            for b in (a + 1)..p {
                let effect = (1u64 << a) | (1u64 << b);
                let word = (1u64 << i) ^ effect;
                if word.count_ones() > 0 && spec.in_defining_relation(word, &words) {
                    list.push(vec![a, b]);
                }
            }
        }
        if !list.is_empty() {
            aliases.insert(i, list);
        }
    }
    Ok(AliasStructure {
        word_length_pattern: pattern,
        aliases_of_main_effects: aliases,
        resolution,
    })
}

/// A generated design together with its construction and alias summary.
#[derive(Debug, Clone)]
pub struct FactorialDesign {
    pub design: DesignMatrix,
    pub spec: FactorialDesignSpec,
    pub aliases: AliasStructure,
}

/// Expands a spec into a `±1` design. Runs are put in a random order drawn
/// from `seed`.
pub fn factorial_design(spec: &FactorialDesignSpec, seed: u64) -> Result<DesignMatrix> {
    let runs = spec.runs();
    let masks = spec.base_masks();
    let mut order: Vec<usize> = (0..runs).collect();
    order.shuffle(&mut seeded(seed));
    let values = DMatrix::from_fn(runs, spec.p, |r, j| {
        let run = order[r] as u64;
        if (run & masks[j]).count_ones() % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    });
    DesignMatrix::new(values, Coding::Factorial, Some(default_factor_names(spec.p)))
}

/// Builds the design for `spec` and rejects it when its resolution is below
/// `target_resolution`.
pub fn checked_factorial_design(
    spec: &FactorialDesignSpec,
    target_resolution: u32,
    seed: u64,
) -> Result<FactorialDesign> {
    let aliases = alias_structure(spec)?;
    if !aliases.resolution.at_least(target_resolution) {
        return Err(Error::Construction(format!(
            "generators {} give resolution {}, below the requested {}",
            spec.generator_labels().join(", "),
            aliases.resolution,
            Resolution::Finite(target_resolution)
        )));
    }
    Ok(FactorialDesign {
        design: factorial_design(spec, seed)?,
        spec: spec.clone(),
        aliases,
    })
}

/// Smallest number of base factors for which a regular fraction of the given
/// resolution exists.
fn minimal_base(p: usize, target_resolution: u32) -> usize {
    (1..=p)
        .find(|&b| b == p || max_factors(b, target_resolution) >= p)
        .unwrap_or(p)
}

fn max_factors(base: usize, target_resolution: u32) -> usize {
    if base >= MAX_FACTORS {
        return usize::MAX;
    }
    match target_resolution {
        0..=3 => (1usize << base) - 1,
        _ => 1usize << (base - 1),
    }
}

/// Smallest regular two-level design for `p` factors with resolution at least
/// `target_resolution` (3 or 4).
pub fn generate_fractional_factorial(p: usize, target_resolution: u32, seed: u64) -> Result<FactorialDesign> {
    check_target(target_resolution)?;
    if p == 0 || p > MAX_FACTORS {
        return Err(Error::Construction(format!(
            "factor count must be in 1..={MAX_FACTORS}, got {p}"
        )));
    }
    let base = minimal_base(p, target_resolution);
    fractional_factorial_with_runs(p, 1 << base, target_resolution, seed)
}

/// Regular design for `p` factors in exactly `runs` runs.
pub fn fractional_factorial_with_runs(
    p: usize,
    runs: usize,
    target_resolution: u32,
    seed: u64,
) -> Result<FactorialDesign> {
    check_target(target_resolution)?;
    if p == 0 || p > MAX_FACTORS {
        return Err(Error::Construction(format!(
            "factor count must be in 1..={MAX_FACTORS}, got {p}"
        )));
    }
    let smallest = 1usize << minimal_base(p, target_resolution);
    if !runs.is_power_of_two() || runs < 2 {
        return Err(Error::Construction(format!(
            "run count {runs} is not a power of two; smallest feasible run count is {smallest}"
        )));
    }
    let base = runs.trailing_zeros() as usize;
    if base > p {
        return Err(Error::Construction(format!(
            "{runs} runs exceed the 2^{p} distinct settings of {p} two-level factors"
        )));
    }
    if base < p && max_factors(base, target_resolution) < p {
        return Err(Error::Construction(format!(
            "no resolution {} design for {p} factors in {runs} runs; smallest feasible run count is {smallest}",
            Resolution::Finite(target_resolution)
        )));
    }
    let q = p - base;
    let generators = search_generators(base, q, target_resolution).ok_or_else(|| {
        Error::Construction(format!(
            "generator search failed for {p} factors in {runs} runs; smallest feasible run count is {smallest}"
        ))
    })?;
    let spec = FactorialDesignSpec::new(
        p,
        q,
        generators
            .into_iter()
            .map(|m| (0..base).filter(|i| m >> i & 1 == 1).collect())
            .collect(),
    )?;
    checked_factorial_design(&spec, target_resolution, seed)
}

fn check_target(target_resolution: u32) -> Result<()> {
    if !(3..=4).contains(&target_resolution) {
        return Err(Error::Construction(format!(
            "target resolution {target_resolution} unsupported; only III and IV constructions are available"
        )));
    }
    Ok(())
}

/// Candidate generator masks over `base` factors: at least two letters,
/// longest first, ties in lexicographic letter order.
fn candidates(base: usize, odd_only: bool) -> Vec<u64> {
    let mut c: Vec<u64> = (1u64..(1u64 << base))
        .filter(|m| m.count_ones() >= 2)
        .filter(|m| !odd_only || m.count_ones() % 2 == 1)
        .collect();
    c.sort_by(|a, b| {
        b.count_ones()
            .cmp(&a.count_ones())
            .then_with(|| letters(*a).cmp(&letters(*b)))
    });
    c
}

fn letters(m: u64) -> Vec<u32> {
    (0..64).filter(|i| m >> i & 1 == 1).collect()
}

/// Whether `cand` can join `masks` without creating a defining word shorter
/// than the target resolution.
fn compatible(masks: &[u64], cand: u64, target_resolution: u32) -> bool {
    if masks.contains(&cand) {
        return false;
    }
    if target_resolution >= 4 {
        for (i, a) in masks.iter().enumerate() {
            for b in &masks[i + 1..] {
                if a ^ b == cand {
                    return false;
                }
            }
        }
    }
    true
}

fn search_generators(base: usize, q: usize, target_resolution: u32) -> Option<Vec<u64>> {
    if q == 0 {
        return Some(Vec::new());
    }
    let singles: Vec<u64> = (0..base).map(|i| 1u64 << i).collect();
    let mut budget = SEARCH_BUDGET;
    let all = candidates(base, false);
    let mut chosen = Vec::new();
    let mut masks = singles.clone();
    if dfs(&all, 0, q, target_resolution, &mut masks, &mut chosen, &mut budget) {
        return Some(chosen);
    }
    // Odd-weight columns never combine into a word of length three, so this
    // greedy pass succeeds whenever p <= 2^(base-1).
    let mut chosen = Vec::new();
    let mut masks = singles;
    for c in candidates(base, target_resolution >= 4) {
        if chosen.len() == q {
            break;
        }
        if compatible(&masks, c, target_resolution) {
            masks.push(c);
            chosen.push(c);
        }
    }
    (chosen.len() == q).then_some(chosen)
}

fn dfs(
    cands: &[u64],
    start: usize,
    needed: usize,
    target_resolution: u32,
    masks: &mut Vec<u64>,
    chosen: &mut Vec<u64>,
    budget: &mut usize,
) -> bool {
    if chosen.len() == needed {
        return true;
    }
    for idx in start..cands.len() {
        if cands.len() - idx < needed - chosen.len() {
            return false;
        }
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        let c = cands[idx];
        if compatible(masks, c, target_resolution) {
            masks.push(c);
            chosen.push(c);
            if dfs(cands, idx + 1, needed, target_resolution, masks, chosen, budget) {
                return true;
            }
            masks.pop();
            chosen.pop();
        }
    }
    false
}
