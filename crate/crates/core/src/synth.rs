//! Synthetic populations, samplers and Monte Carlo sweeps.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Choice, CompleteChoiceRule, EmpiricalChoiceRule, Observation};
use crate::diagnostics::choice_overload_scan;
use crate::error::{Error, Result};
use crate::hypothesis::{bootstrap_pvalue, TestSpec};
use crate::linkfn::{consideration_from_index, hrc_forward, AttentionIndex, Link, MMGamma};
use crate::orders::{enumerate_orders, filter_eu, LotteryBook, PreferenceOrderSet};
use crate::rng::{self, tag};
use crate::universe::{iter_bits, ChoiceUniverse};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Process {
    La { eta: AttentionIndex },
    Mm { gamma: MMGamma },
    Rcg { eta: AttentionIndex },
    /// Full consideration over items; the default is never chosen.
    Fc,
    /// Preference maximization over `A ∪ {o}`; orders rank the default.
    Rum,
    EntropyLa { alpha: Vec<f64>, theta: f64 },
    /// `λ·MM-HRC + (1−λ)·CO`.
    CoMixture { lambda: f64 },
}

impl Process {
    pub fn tag(&self) -> &'static str {
        match self {
            Process::La { .. } => "LA",
            Process::Mm { .. } => "MM",
            Process::Rcg { .. } => "RCG",
            Process::Fc => "FC",
            Process::Rum => "RUM",
            Process::EntropyLa { .. } => "ENTROPY_LA",
            Process::CoMixture { .. } => "CO_MIXTURE",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub process: Process,
    pub orders: PreferenceOrderSet,
    pub pi: Vec<f64>,
}

impl GeneratorSpec {
    /// The overload mixture on the experiment's lotteries: `γ ≡ ½` and `π`
    /// uniform on the EU orders.
    pub fn co_mixture(lambda: f64) -> Result<Self> {
        let u = ChoiceUniverse::indexed(5)?;
        let eu = filter_eu(&enumerate_orders(&u, false)?, &LotteryBook::experiment())?;
        let pi = vec![1.0 / eu.len() as f64; eu.len()];
        Ok(Self { process: Process::CoMixture { lambda }, orders: eu, pi })
    }

    fn check(&self, universe: &ChoiceUniverse) -> Result<()> {
        let bad = |s: String| Err(Error::ImproperParameters(s));
        if self.pi.len() != self.orders.len() {
            return bad(format!("{} weights for {} orders", self.pi.len(), self.orders.len()));
        }
        if self.pi.iter().any(|&w| !(w >= 0.0)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return bad("preference weights are not a distribution".into());
        }
        if self.orders.n_items != universe.len() {
            return bad("order set and universe disagree".into());
        }
        let wants_default = matches!(self.process, Process::Rum);
        if self.orders.include_default != wants_default {
            return bad(format!("{} needs orders {} the default", self.process.tag(), if wants_default { "ranking" } else { "without" }));
        }
        match &self.process {
            Process::La { eta } | Process::Rcg { eta } => eta
                .check_proper(matches!(self.process, Process::La { .. }))
                .or_else(|e| bad(e.to_string())),
            Process::Mm { gamma } if gamma.gamma.len() != universe.len() || gamma.gamma.iter().any(|g| !(0.0..=1.0).contains(g)) => {
                bad("γ must lie in [0, 1] for every item".into())
            }
            Process::EntropyLa { alpha, theta } if alpha.len() != universe.subset_count() || !theta.is_finite() || alpha.iter().any(|a| !a.is_finite()) => {
                bad("α needs one finite value per subset and θ must be finite".into())
            }
            Process::CoMixture { lambda } if !(0.0..=1.0).contains(lambda) => bad(format!("λ = {lambda} outside [0, 1]")),
            _ => Ok(()),
        }
    }
}

/// `η(D) ∝ exp(θ α(D))`.
pub fn entropy_la_index(universe: &ChoiceUniverse, alpha: &[f64], theta: f64) -> Result<AttentionIndex> {
    let top = alpha.iter().map(|a| theta * a).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = alpha.iter().map(|a| (theta * a - top).exp()).collect();
    let s: f64 = w.iter().sum();
    AttentionIndex::new(universe, w.into_iter().map(|x| x / s).collect())
}

/// Overload rule: `p(o,A) = (|A|+1)/(|X|+1)`, the rest split evenly.
pub fn choice_overload_rule(universe: &ChoiceUniverse) -> CompleteChoiceRule {
    let n = universe.len();
    CompleteChoiceRule::from_fn(universe, |a, menu| {
        let k = menu.count_ones() as f64;
        let po = (k + 1.0) / (n as f64 + 1.0);
        if a == n {
            po
        } else {
            (1.0 - po) / k
        }
    })
}

/// Exact rule of the generating process.
pub fn population_rule(universe: &ChoiceUniverse, spec: &GeneratorSpec) -> Result<CompleteChoiceRule> {
    spec.check(universe)?;
    let (orders, pi) = (&spec.orders, spec.pi.as_slice());
    match &spec.process {
        Process::La { eta } => hrc_forward(&consideration_from_index(eta, Link::La), orders, pi),
        Process::Rcg { eta } => hrc_forward(&consideration_from_index(eta, Link::Rcg), orders, pi),
        Process::Mm { gamma } => hrc_forward(&gamma.consideration_rule(universe), orders, pi),
        Process::Fc => crate::linkfn::fc_rule(universe, orders, pi),
        Process::EntropyLa { alpha, theta } => {
            let eta = entropy_la_index(universe, alpha, *theta)?;
            hrc_forward(&consideration_from_index(&eta, Link::La), orders, pi)
        }
        Process::Rum => Ok(rum_rule(universe, orders, pi)),
        Process::CoMixture { lambda } => {
            let mm = MMGamma { gamma: vec![0.5; universe.len()] }.consideration_rule(universe);
            let hrc = hrc_forward(&mm, orders, pi)?;
            Ok(hrc.mix(&choice_overload_rule(universe), *lambda))
        }
    }
}

/// Preference maximization over `A ∪ {o}` with orders that rank the default.
pub fn rum_rule(universe: &ChoiceUniverse, orders: &PreferenceOrderSet, pi: &[f64]) -> CompleteChoiceRule {
    let n = universe.len();
    let full = universe.full_mask();
    let mut table = vec![0.0; (full as usize + 1) * (n + 1)];
    for (o, &w) in orders.orders.iter().zip(pi) {
        for menu in 1..=full {
            let top = o.top(menu | 1 << n).expect("nonempty");
            table[menu as usize * (n + 1) + top] += w;
        }
    }
    CompleteChoiceRule::from_fn(universe, |a, menu| table[menu as usize * (n + 1) + a])
}

/// Menu sample sizes proportional to `|A| + 1`, by largest remainder with at
/// least one observation per menu. Indexed by menu mask.
pub fn proportional_menu_sizes(universe: &ChoiceUniverse, total: u64) -> Vec<u64> {
    let full = universe.full_mask();
    let menus = full as u64;
    let mut sizes = vec![0u64; full as usize + 1];
    if total <= menus {
        sizes[1..].iter_mut().for_each(|s| *s = 1);
        return sizes;
    }
    let weight: u64 = (1..=full).map(|m| m.count_ones() as u64 + 1).sum();
    let mut remainders = Vec::with_capacity(full as usize);
    let mut used = 0;
    for m in 1..=full {
        let w = m.count_ones() as u64 + 1;
        let exact = total * w;
        sizes[m as usize] = exact / weight;
        used += sizes[m as usize];
        remainders.push((exact % weight, m));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, m) in remainders.iter().take((total - used) as usize) {
        sizes[m as usize] += 1;
    }
    // lift empty menus, taking from the largest
    for m in 1..=full as usize {
        if sizes[m] == 0 {
            let donor = (1..=full as usize).max_by_key(|&k| (sizes[k], std::cmp::Reverse(k))).expect("menus");
            sizes[donor] -= 1;
            sizes[m] = 1;
        }
    }
    sizes
}

fn draw<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let s: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    let mut u = rng.gen::<f64>() * s;
    for (k, p) in probs.iter().enumerate() {
        u -= p.max(0.0);
        if u < 0.0 {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Multinomial counts per menu from `rule`.
pub fn sample_counts<R: Rng + ?Sized>(
    rule: &CompleteChoiceRule,
    sizes: &[u64],
    treatment: &str,
    rng: &mut R,
) -> Result<EmpiricalChoiceRule> {
    let u = rule.universe();
    let n = u.len();
    let mut counts = vec![0u64; (u.full_mask() as usize + 1) * (n + 1)];
    for menu in 1..=u.full_mask() {
        let alts: Vec<usize> = iter_bits(menu).chain(std::iter::once(n)).collect();
        let probs: Vec<f64> = alts.iter().map(|&a| rule.prob(a, menu)).collect();
        for _ in 0..sizes[menu as usize] {
            counts[menu as usize * (n + 1) + alts[draw(rng, &probs)]] += 1;
        }
    }
    EmpiricalChoiceRule::from_counts(u, treatment, counts)
}

/// One observation per draw, subjects numbered from 1.
pub fn sample_dataset(rule: &CompleteChoiceRule, sizes: &[u64], treatment: &str, seed: u64) -> Vec<Observation> {
    let u = rule.universe();
    let n = u.len();
    let mut rng = rng::stream(seed, &[tag::DATASET]);
    let mut out = Vec::new();
    for menu in 1..=u.full_mask() {
        let alts: Vec<usize> = iter_bits(menu).chain(std::iter::once(n)).collect();
        let probs: Vec<f64> = alts.iter().map(|&a| rule.prob(a, menu)).collect();
        for _ in 0..sizes[menu as usize] {
            let a = alts[draw(&mut rng, &probs)];
            out.push(Observation {
                subject_id: (out.len() + 1).to_string(),
                treatment: treatment.to_string(),
                menu: u.menu(menu).expect("valid menu"),
                choice: if a == n { Choice::Default } else { Choice::Item(a) },
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoCell {
    pub n: u64,
    pub orders: usize,
    pub repetitions: usize,
    /// Share of repetitions with at least one overload violation.
    pub proportion: f64,
    /// Mean over repetitions of the summed violation magnitudes.
    pub total_magnitude: f64,
    /// `total_magnitude` divided by the number of comparisons.
    pub avg_marginal_magnitude: f64,
}

pub fn co_cell(universe: &ChoiceUniverse, n: u64, k: usize, repetitions: usize, seed: u64, cell: u64) -> Result<CoCell> {
    let all = enumerate_orders(universe, true)?;
    if k == 0 || k > all.len() {
        return Err(Error::Config(format!("cannot draw {k} of {} orders", all.len())));
    }
    let sizes = proportional_menu_sizes(universe, n);
    let results: Vec<Result<(bool, f64, usize)>> = (0..repetitions)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, &[tag::SWEEP, cell, r as u64]);
            let picked: Vec<usize> = sample(&mut rng, all.len(), k).into_vec();
            let orders = PreferenceOrderSet {
                orders: picked.iter().map(|&i| all.orders[i].clone()).collect(),
                ..all.clone()
            };
            let rule = rum_rule(universe, &orders, &vec![1.0 / k as f64; k]);
            let data = sample_counts(&rule, &sizes, "sim", &mut rng)?;
            let scan = choice_overload_scan(&data.rule());
            Ok((scan.violations > 0, scan.total_magnitude, scan.comparisons))
        })
        .collect();
    let mut hits = 0;
    let mut total = 0.0;
    let mut comparisons = 1;
    for r in results {
        let (hit, mag, c) = r?;
        hits += usize::from(hit);
        total += mag;
        comparisons = c.max(1);
    }
    let total_magnitude = total / repetitions as f64;
    Ok(CoCell {
        n,
        orders: k,
        repetitions,
        proportion: hits as f64 / repetitions as f64,
        total_magnitude,
        avg_marginal_magnitude: total_magnitude / comparisons as f64,
    })
}

fn open_append(path: &Path, header: &str) -> Result<std::fs::File> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    Ok(f)
}

fn done_keys(path: &Path, key_cols: usize) -> Result<HashSet<Vec<String>>> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.insert(rec.iter().take(key_cols).map(str::to_string).collect());
    }
    Ok(out)
}

const CO_HEADER: &str = "n,orders,repetitions,proportion,total_magnitude,avg_marginal_magnitude";

/// Overload incidence in finite RUM samples over a grid of sample sizes and
/// numbers of preference types. With `out`, each finished cell is appended
/// and cells already present are skipped.
pub fn co_sweep(
    universe: &ChoiceUniverse,
    repetitions: usize,
    n_grid: &[u64],
    heterogeneity_grid: &[usize],
    seed: u64,
    out: Option<&Path>,
) -> Result<Vec<CoCell>> {
    if n_grid.is_empty() || heterogeneity_grid.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let done = match out {
        Some(p) => done_keys(p, 2)?,
        None => HashSet::new(),
    };
    let mut file = out.map(|p| open_append(p, CO_HEADER)).transpose()?;
    let mut cells = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        for (j, &k) in heterogeneity_grid.iter().enumerate() {
            if done.contains(&vec![n.to_string(), k.to_string()]) {
                continue;
            }
            let cell = (i * heterogeneity_grid.len() + j) as u64;
            let c = co_cell(universe, n, k, repetitions, seed, cell)?;
            if let Some(f) = file.as_mut() {
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    c.n, c.orders, c.repetitions, c.proportion, c.total_magnitude, c.avg_marginal_magnitude
                )?;
                f.flush()?;
            }
            cells.push(c);
        }
    }
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRun {
    pub lambda: f64,
    pub dataset: usize,
    pub p_value: f64,
    pub statistic: f64,
    pub unreliable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub lambda: f64,
    pub n: u64,
    pub datasets: usize,
    pub reject_at_10: f64,
    pub reject_at_05: f64,
}

const POWER_HEADER: &str = "lambda,dataset,p_value,statistic,unreliable";

/// One mixture dataset of total size `n` and its test.
pub fn power_run(lambda: f64, n: u64, dataset: usize, spec: &TestSpec, seed: u64) -> Result<PowerRun> {
    let gen = GeneratorSpec::co_mixture(lambda)?;
    let u = ChoiceUniverse::indexed(5)?;
    let rule = population_rule(&u, &gen)?;
    let key = lambda.to_bits();
    let mut rng = rng::stream(seed, &[tag::DATASET, key, dataset as u64]);
    let data = sample_counts(&rule, &proportional_menu_sizes(&u, n), "sim", &mut rng)?;
    let mut s = spec.clone();
    s.seed = rng.gen();
    let report = bootstrap_pvalue(&s, &data, None)?;
    Ok(PowerRun { lambda, dataset, p_value: report.p_value, statistic: report.statistic, unreliable: report.unreliable })
}

/// Rejection rates of `spec` on mixture data across `lambdas`. With `out`,
/// per-dataset results are appended as they finish and reused on restart.
pub fn power_sweep(
    lambdas: &[f64],
    n: u64,
    datasets: usize,
    spec: &TestSpec,
    seed: u64,
    out: Option<&Path>,
) -> Result<(Vec<PowerRow>, Vec<PowerRun>)> {
    let mut runs: Vec<PowerRun> = Vec::new();
    if let Some(p) = out.filter(|p| p.exists()) {
        let mut rdr = csv::Reader::from_path(p)?;
        for rec in rdr.deserialize() {
            runs.push(rec?);
        }
    }
    let mut file = out.map(|p| open_append(p, POWER_HEADER)).transpose()?;
    for &lambda in lambdas {
        for d in 0..datasets {
            if runs.iter().any(|r| r.lambda == lambda && r.dataset == d) {
                continue;
            }
            let r = power_run(lambda, n, d, spec, seed)?;
            if let Some(f) = file.as_mut() {
                writeln!(f, "{},{},{},{},{}", r.lambda, r.dataset, r.p_value, r.statistic, r.unreliable)?;
                f.flush()?;
            }
            runs.push(r);
        }
    }
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let ps: Vec<f64> = runs
                .iter()
                .filter(|r| r.lambda == lambda && r.dataset < datasets)
                .map(|r| r.p_value)
                .collect();
            let rate = |level: f64| ps.iter().filter(|&&p| p < level).count() as f64 / ps.len().max(1) as f64;
            PowerRow { lambda, n, datasets: ps.len(), reject_at_10: rate(0.10), reject_at_05: rate(0.05) }
        })
        .collect();
    runs.retain(|r| lambdas.contains(&r.lambda) && r.dataset < datasets);
    Ok((rows, runs))
}
