//! Choice observations and (empirical or exact) stochastic choice rules.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::universe::{iter_bits, ChoiceUniverse, Menu};

/// Label used when observations from every treatment are combined.
pub const POOLED: &str = "pooled";

/// Tolerance on per-menu probability sums.
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    Item(usize),
    Default,
}

impl Choice {
    /// Column in the dense `(menu, alternative)` layout, default last.
    fn slot(self, n: usize) -> usize {
        match self {
            Choice::Item(i) => i,
            Choice::Default => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub subject_id: String,
    pub treatment: String,
    pub menu: Menu,
    pub choice: Choice,
}

/// How to read the observation CSV.
#[derive(Clone, Debug, Default)]
pub struct CsvFormat {
    /// Number of items; inferred from the largest index seen when `None`.
    pub n_items: Option<usize>,
    /// Accepted treatment labels; any nonempty label when `None`.
    pub treatments: Option<Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub universe: ChoiceUniverse,
    pub observations: Vec<Observation>,
}

impl Dataset {
    /// Treatment labels in sorted order.
    pub fn treatments(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.observations.iter().map(|o| o.treatment.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn rule(&self, treatment: Option<&str>) -> Result<EmpiricalChoiceRule> {
        empirical_rule(&self.universe, &self.observations, treatment)
    }
}

struct RawRow {
    line: usize,
    subject_id: String,
    treatment: String,
    menu: Vec<usize>,
    choice: usize,
}

fn parse_index(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.trim().parse::<usize>().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("bad {what} token `{tok}`"),
    })
}

/// Reads observations in the `subject_id,treatment,menu,choice` layout.
/// Menus are `|`-separated 1-based item indices; choice `0` is the default.
pub fn load_observations(path: impl AsRef<Path>, format: &CsvFormat) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_observations(file, format)
}

pub fn read_observations<R: std::io::Read>(reader: R, format: &CsvFormat) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["subject_id", "treatment", "menu", "choice"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", expected.join(",")),
        });
    }

    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::MalformedRow { line, reason: format!("expected 4 fields, got {}", rec.len()) });
        }
        let treatment = rec[1].to_string();
        if treatment.is_empty() {
            return Err(Error::MalformedRow { line, reason: "empty treatment".into() });
        }
        if let Some(allowed) = &format.treatments {
            if !allowed.iter().any(|t| *t == treatment) {
                return Err(Error::UnknownTreatment { line, treatment });
            }
        }
        let menu = rec[2]
            .split('|')
            .map(|t| parse_index(t, line, "menu"))
            .collect::<Result<Vec<_>>>()?;
        if menu.iter().any(|&i| i == 0) {
            return Err(Error::MalformedRow { line, reason: "menu indices are 1-based".into() });
        }
        let choice = parse_index(&rec[3], line, "choice")?;
        rows.push(RawRow { line, subject_id: rec[0].to_string(), treatment, menu, choice });
    }

    let n = match format.n_items {
        Some(n) => n,
        None => rows
            .iter()
            .flat_map(|r| r.menu.iter().copied().chain(std::iter::once(r.choice)))
            .max()
            .unwrap_or(0),
    };
    let universe = ChoiceUniverse::indexed(n)?;

    let mut observations = Vec::with_capacity(rows.len());
    for r in rows {
        let mut mask = 0u32;
        for &i in &r.menu {
            if i > n {
                return Err(Error::MalformedRow {
                    line: r.line,
                    reason: format!("item {i} outside universe of {n} items"),
                });
            }
            let bit = 1u32 << (i - 1);
            if mask & bit != 0 {
                return Err(Error::MalformedRow { line: r.line, reason: format!("item {i} repeated in menu") });
            }
            mask |= bit;
        }
        let menu = universe.menu(mask)?;
        let choice = match r.choice {
            0 => Choice::Default,
            c if c <= n && menu.contains(c - 1) => Choice::Item(c - 1),
            c => {
                return Err(Error::ChoiceOutsideMenu {
                    line: r.line,
                    menu: universe.describe(mask),
                    choice: c.to_string(),
                })
            }
        };
        observations.push(Observation { subject_id: r.subject_id, treatment: r.treatment, menu, choice });
    }
    Ok(Dataset { universe, observations })
}

/// Writes observations in the same CSV layout `load_observations` reads.
pub fn write_observations<W: std::io::Write>(writer: W, observations: &[Observation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "treatment", "menu", "choice"])?;
    for o in observations {
        let menu: Vec<String> = o.menu.items().map(|i| (i + 1).to_string()).collect();
        let choice = match o.choice {
            Choice::Item(i) => (i + 1).to_string(),
            Choice::Default => "0".to_string(),
        };
        w.write_record([o.subject_id.as_str(), o.treatment.as_str(), &menu.join("|"), &choice])?;
    }
    w.flush()?;
    Ok(())
}

/// A complete stochastic choice rule `p(a, A)` over every menu, with the
/// default stored after the items of each menu.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompleteChoiceRule {
    universe: ChoiceUniverse,
    /// Dense `2^n × (n+1)` table; row 0 is the empty menu with `p(o,∅) = 1`.
    probs: Vec<f64>,
}

impl CompleteChoiceRule {
    /// Builds a rule from `f(a, A)`, where `a == n` is the default.
    /// Entries for `a ∉ A ∪ {o}` are never queried and stay zero.
    pub fn from_fn(universe: &ChoiceUniverse, mut f: impl FnMut(usize, u32) -> f64) -> Self {
        let n = universe.len();
        let mut probs = vec![0.0; (1 << n) * (n + 1)];
        probs[n] = 1.0;
        for mask in 1..=universe.full_mask() {
            for a in iter_bits(mask) {
                probs[mask as usize * (n + 1) + a] = f(a, mask);
            }
            probs[mask as usize * (n + 1) + n] = f(n, mask);
        }
        Self { universe: universe.clone(), probs }
    }

    /// Like [`Self::from_fn`] but checks the per-menu simplex.
    pub fn try_from_fn(universe: &ChoiceUniverse, f: impl FnMut(usize, u32) -> f64) -> Result<Self> {
        let rule = Self::from_fn(universe, f);
        rule.validate()?;
        Ok(rule)
    }

    pub fn universe(&self) -> &ChoiceUniverse {
        &self.universe
    }

    pub fn n(&self) -> usize {
        self.universe.len()
    }

    /// `p(a, A)`; `a == n` is the default. Zero for `a ∉ A ∪ {o}`.
    pub fn prob(&self, a: usize, menu: u32) -> f64 {
        let n = self.n();
        if a < n && menu >> a & 1 == 0 {
            return 0.0;
        }
        self.probs[menu as usize * (n + 1) + a]
    }

    pub fn default_prob(&self, menu: u32) -> f64 {
        self.prob(self.n(), menu)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        for mask in 1..=self.universe.full_mask() {
            let mut sum = 0.0;
            for a in iter_bits(mask).chain(std::iter::once(n)) {
                let p = self.prob(a, mask);
                if !p.is_finite() || p < -SIMPLEX_TOL || p > 1.0 + SIMPLEX_TOL {
                    return Err(Error::InvalidRule {
                        menu: self.universe.describe(mask),
                        reason: format!("probability {p} out of range"),
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidRule {
                    menu: self.universe.describe(mask),
                    reason: format!("probabilities sum to {sum}"),
                });
            }
        }
        Ok(())
    }

    /// Mixture `λ·self + (1−λ)·other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Self {
        let probs = self.probs.iter().zip(&other.probs).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        Self { universe: self.universe.clone(), probs }
    }

    /// Largest absolute difference over every `(a, A)` coordinate.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Per-menu counts behind an empirical rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmpiricalChoiceRule {
    universe: ChoiceUniverse,
    treatment: String,
    /// Dense `2^n × (n+1)` counts, default last.
    counts: Vec<u64>,
    menu_totals: Vec<u64>,
}

impl EmpiricalChoiceRule {
    /// Requires every menu to have at least one observation.
    pub fn from_counts(universe: &ChoiceUniverse, treatment: impl Into<String>, counts: Vec<u64>) -> Result<Self> {
        let n = universe.len();
        if counts.len() != (1 << n) * (n + 1) {
            return Err(Error::DimensionMismatch(format!("{} counts for {} items", counts.len(), n)));
        }
        let mut menu_totals = vec![0u64; 1 << n];
        let mut missing = Vec::new();
        for mask in 1..=universe.full_mask() {
            let row = &counts[mask as usize * (n + 1)..(mask as usize + 1) * (n + 1)];
            if row.iter().enumerate().any(|(a, &c)| a < n && c > 0 && mask >> a & 1 == 0) {
                return Err(Error::InvalidRule {
                    menu: universe.describe(mask),
                    reason: "counts on items outside the menu".into(),
                });
            }
            menu_totals[mask as usize] = row.iter().sum();
            if menu_totals[mask as usize] == 0 {
                missing.push(universe.describe(mask));
            }
        }
        if !missing.is_empty() {
            return Err(Error::IncompleteCoverage(missing));
        }
        Ok(Self { universe: universe.clone(), treatment: treatment.into(), counts, menu_totals })
    }

    pub fn universe(&self) -> &ChoiceUniverse {
        &self.universe
    }

    pub fn treatment(&self) -> &str {
        &self.treatment
    }

    pub fn count(&self, a: usize, menu: u32) -> u64 {
        self.counts[menu as usize * (self.universe.len() + 1) + a]
    }

    /// `n_A`.
    pub fn menu_total(&self, menu: u32) -> u64 {
        self.menu_totals[menu as usize]
    }

    /// `n = ∑_A n_A`.
    pub fn total(&self) -> u64 {
        self.menu_totals.iter().sum()
    }

    pub fn min_menu_total(&self) -> u64 {
        self.menu_totals[1..].iter().copied().min().unwrap_or(0)
    }

    pub fn frequency(&self, a: usize, menu: u32) -> f64 {
        self.count(a, menu) as f64 / self.menu_total(menu) as f64
    }

    /// Exact count ratios.
    pub fn rule(&self) -> CompleteChoiceRule {
        CompleteChoiceRule::from_fn(&self.universe, |a, m| self.frequency(a, m))
    }

    /// Additive smoothing `(count + κ) / (n_A + κ·|A ∪ {o}|)`.
    pub fn smoothed_rule(&self, kappa: f64) -> CompleteChoiceRule {
        CompleteChoiceRule::from_fn(&self.universe, |a, m| {
            let alts = m.count_ones() as f64 + 1.0;
            (self.count(a, m) as f64 + kappa) / (self.menu_total(m) as f64 + kappa * alts)
        })
    }

    /// Stratified multinomial resample holding every `n_A` fixed.
    pub fn resample(&self, seed: u64) -> Self {
        self.resample_with(&mut rng::seeded(seed))
    }

    pub fn resample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let n = self.universe.len();
        let mut counts = vec![0u64; self.counts.len()];
        for mask in 1..=self.universe.full_mask() {
            let base = mask as usize * (n + 1);
            let row = &self.counts[base..base + n + 1];
            let total = self.menu_totals[mask as usize];
            draw_counts(rng, row, total, &mut counts[base..base + n + 1]);
        }
        Self {
            universe: self.universe.clone(),
            treatment: self.treatment.clone(),
            counts,
            menu_totals: self.menu_totals.clone(),
        }
    }

    /// Adds counts menu by menu across rules on the same universe.
    pub fn pool(rules: &[EmpiricalChoiceRule]) -> Result<Self> {
        let first = rules.first().ok_or_else(|| Error::Config("nothing to pool".into()))?;
        let mut counts = vec![0u64; first.counts.len()];
        for r in rules {
            if r.universe != first.universe {
                return Err(Error::TreatmentMismatch("pooled rules use different universes".into()));
            }
            for (c, x) in counts.iter_mut().zip(&r.counts) {
                *c += x;
            }
        }
        Self::from_counts(&first.universe, POOLED, counts)
    }

    pub fn to_export(&self) -> EmpiricalRuleExport {
        let n = self.universe.len();
        let cells = (1..=self.universe.full_mask())
            .map(|mask| {
                let freqs = iter_bits(mask)
                    .map(|a| FreqEntry { alternative: self.universe.item(a).to_string(), freq: self.frequency(a, mask) })
                    .chain(std::iter::once(FreqEntry {
                        alternative: self.universe.default_label().to_string(),
                        freq: self.frequency(n, mask),
                    }))
                    .collect();
                CellExport {
                    menu: iter_bits(mask).map(|i| i + 1).collect(),
                    n: self.menu_total(mask),
                    freqs,
                }
            })
            .collect();
        EmpiricalRuleExport { universe: self.universe.clone(), treatment: self.treatment.clone(), cells }
    }
}

/// Draws `total` categorical outcomes with probabilities `weights / ∑weights`
/// into `out`.
fn draw_counts<R: Rng + ?Sized>(rng: &mut R, weights: &[u64], total: u64, out: &mut [u64]) {
    let sum: u64 = weights.iter().sum();
    for _ in 0..total {
        let mut u = rng.gen_range(0..sum);
        for (slot, &w) in out.iter_mut().zip(weights) {
            if u < w {
                *slot += 1;
                break;
            }
            u -= w;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalRuleExport {
    pub universe: ChoiceUniverse,
    pub treatment: String,
    pub cells: Vec<CellExport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellExport {
    /// 1-based item indices.
    pub menu: Vec<usize>,
    pub n: u64,
    pub freqs: Vec<FreqEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FreqEntry {
    pub alternative: String,
    pub freq: f64,
}

/// Tabulates observations (optionally restricted to one treatment).
/// Passing `None` or [`POOLED`] combines every treatment.
pub fn empirical_rule(
    universe: &ChoiceUniverse,
    observations: &[Observation],
    treatment: Option<&str>,
) -> Result<EmpiricalChoiceRule> {
    let n = universe.len();
    let filter = treatment.filter(|t| *t != POOLED);
    let mut counts = vec![0u64; (1 << n) * (n + 1)];
    for o in observations {
        if filter.is_some_and(|t| t != o.treatment) {
            continue;
        }
        if o.menu.mask() & !universe.full_mask() != 0 {
            return Err(Error::InvalidMenu(o.menu.mask()));
        }
        if let Choice::Item(i) = o.choice {
            if !o.menu.contains(i) {
                return Err(Error::ChoiceOutsideMenu {
                    line: 0,
                    menu: universe.describe(o.menu.mask()),
                    choice: universe.item(i.min(n - 1)).to_string(),
                });
            }
        }
        counts[o.menu.mask() as usize * (n + 1) + o.choice.slot(n)] += 1;
    }
    EmpiricalChoiceRule::from_counts(universe, filter.unwrap_or(POOLED), counts)
}
