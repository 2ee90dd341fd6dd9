//! Strict preference orders, expected-utility and CRRA restrictions, and the
//! deterministic-choice matrices that span the random-utility cone.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::universe::{iter_bits, ChoiceUniverse, SubsetIndexer};

/// Largest number of ranked alternatives accepted by [`enumerate_orders`].
pub const MAX_RANKED: usize = 8;

/// Margin in the EU feasibility system `A·u ≥ margin`.
pub const EU_MARGIN: f64 = 1.0;
/// Box on Bernoulli utilities in the EU feasibility system.
pub const EU_UTILITY_BOUND: f64 = 1e6;
/// Shift applied to a zero prize when the CRRA utility diverges there.
pub const ZERO_PRIZE_SHIFT: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Restriction {
    All,
    Eu,
    Crra,
}

impl std::str::FromStr for Restriction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Self::All),
            "eu" => Ok(Self::Eu),
            "crra" => Ok(Self::Crra),
            _ => Err(Error::Config(format!("unknown preference restriction `{s}` (all, eu, crra)"))),
        }
    }
}

/// Lotteries over a common prize vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotteryBook {
    pub prizes: Vec<f64>,
    /// One probability vector per item.
    pub lotteries: Vec<Vec<f64>>,
    /// Degenerate lottery for the default, if it has one.
    pub default: Option<Vec<f64>>,
}

impl LotteryBook {
    pub fn new(prizes: Vec<f64>, lotteries: Vec<Vec<f64>>, default: Option<Vec<f64>>) -> Result<Self> {
        for (i, z) in prizes.iter().enumerate() {
            if !z.is_finite() || prizes[..i].contains(z) {
                return Err(Error::InvalidLottery(format!("prize {z} is not finite and distinct")));
            }
        }
        let check = |l: &Vec<f64>| -> Result<()> {
            if l.len() != prizes.len() {
                return Err(Error::InvalidLottery(format!("{} probabilities for {} prizes", l.len(), prizes.len())));
            }
            let s: f64 = l.iter().sum();
            if l.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidLottery(format!("probabilities {l:?} are not a distribution")));
            }
            Ok(())
        };
        lotteries.iter().try_for_each(check)?;
        if let Some(d) = &default {
            check(d)?;
            if d.iter().filter(|&&p| p > 0.0).count() != 1 {
                return Err(Error::InvalidLottery("default lottery must be degenerate".into()));
            }
        }
        Ok(Self { prizes, lotteries, default })
    }

    /// The five experimental lotteries (in tokens) and the sure default of 12.
    pub fn experiment() -> Self {
        let prizes = vec![0.0, 10.0, 12.0, 14.0, 30.0, 48.0, 50.0];
        let lot = |pairs: &[(f64, f64)]| {
            let mut v = vec![0.0; prizes.len()];
            for &(z, p) in pairs {
                let k = prizes.iter().position(|&x| x == z).expect("prize listed");
                v[k] += p;
            }
            v
        };
        let lotteries = vec![
            lot(&[(50.0, 0.5), (0.0, 0.5)]),
            lot(&[(30.0, 0.5), (10.0, 0.5)]),
            lot(&[(50.0, 0.25), (30.0, 0.25), (10.0, 0.25), (0.0, 0.25)]),
            lot(&[(50.0, 0.25), (48.0, 0.2), (14.0, 0.15), (0.0, 0.4)]),
            lot(&[(48.0, 0.2), (30.0, 0.25), (14.0, 0.15), (10.0, 0.25), (0.0, 0.15)]),
        ];
        let default = Some(lot(&[(12.0, 1.0)]));
        Self::new(prizes, lotteries, default).expect("experiment book is valid")
    }

    pub fn len(&self) -> usize {
        self.lotteries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lotteries.is_empty()
    }

    /// Lottery of alternative `a`; `a == len()` is the default.
    pub fn lottery(&self, a: usize) -> Option<&[f64]> {
        if a < self.len() {
            Some(&self.lotteries[a])
        } else if a == self.len() {
            self.default.as_deref()
        } else {
            None
        }
    }

    fn ranked_lotteries(&self, include_default: bool) -> Result<Vec<&[f64]>> {
        let k = self.len() + usize::from(include_default);
        (0..k)
            .map(|a| self.lottery(a).ok_or_else(|| Error::InvalidLottery("default has no lottery".into())))
            .collect()
    }

    /// Expected CRRA utility of every ranked alternative at risk parameter `sigma`.
    pub fn crra_values(&self, sigma: f64, include_default: bool) -> Result<Vec<f64>> {
        let u: Vec<f64> = self.prizes.iter().map(|&z| crra_utility(z, sigma)).collect();
        Ok(self
            .ranked_lotteries(include_default)?
            .iter()
            .map(|l| l.iter().zip(&u).filter(|(p, _)| **p > 0.0).map(|(p, v)| p * v).sum())
            .collect())
    }

    /// 1-based CRRA ranks (1 = best) at `sigma`.
    pub fn crra_ranks(&self, sigma: f64, include_default: bool) -> Result<Vec<usize>> {
        let order = self.crra_order(sigma, include_default)?;
        let mut ranks = vec![0; order.len()];
        for (r, &a) in order.ranking().iter().enumerate() {
            ranks[a] = r + 1;
        }
        Ok(ranks)
    }

    pub fn crra_order(&self, sigma: f64, include_default: bool) -> Result<PreferenceOrder> {
        let v = self.crra_values(sigma, include_default)?;
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        Ok(PreferenceOrder::new(idx))
    }
}

/// `x^{1−σ}/(1−σ)`, or `ln x` at `σ = 1`. A zero prize is shifted by
/// [`ZERO_PRIZE_SHIFT`] when the utility would diverge.
pub fn crra_utility(x: f64, sigma: f64) -> f64 {
    let x = if x == 0.0 && sigma >= 1.0 { ZERO_PRIZE_SHIFT } else { x };
    if sigma == 1.0 {
        x.ln()
    } else {
        x.powf(1.0 - sigma) / (1.0 - sigma)
    }
}

/// A strict order, best alternative first. When the order ranks the default,
/// it is alternative `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferenceOrder {
    ranking: Vec<usize>,
    #[serde(skip)]
    position: Vec<usize>,
}

impl PreferenceOrder {
    pub fn new(ranking: Vec<usize>) -> Self {
        let mut position = vec![usize::MAX; ranking.len()];
        for (r, &a) in ranking.iter().enumerate() {
            assert!(a < ranking.len() && position[a] == usize::MAX, "not a permutation: {ranking:?}");
            position[a] = r;
        }
        Self { ranking, position }
    }

    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    pub fn len(&self) -> usize {
        self.ranking.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranking.is_empty()
    }

    pub fn prefers(&self, a: usize, b: usize) -> bool {
        self.position[a] < self.position[b]
    }

    /// Best alternative of `mask`; bit `n` stands for the default.
    pub fn top(&self, mask: u32) -> Option<usize> {
        self.ranking.iter().copied().find(|&a| mask >> a & 1 == 1)
    }

    pub fn describe(&self, universe: &ChoiceUniverse) -> String {
        let names: Vec<&str> = self
            .ranking
            .iter()
            .map(|&a| if a < universe.len() { universe.item(a) } else { universe.default_label() })
            .collect();
        names.join(" > ")
    }
}

/// Contiguous range of the CRRA grid inducing one order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaBracket {
    /// First grid point inducing the order.
    pub first: f64,
    /// Last grid point inducing the order.
    pub last: f64,
    /// Reported interval: from the previous bracket's last point (or the
    /// range start) to this bracket's last point (or the range end).
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceOrderSet {
    pub restriction: Restriction,
    /// Whether the default is ranked (alternative `n`).
    pub include_default: bool,
    /// Number of nondefault items.
    pub n_items: usize,
    pub orders: Vec<PreferenceOrder>,
    /// Present for CRRA sets, aligned with `orders`.
    pub brackets: Option<Vec<SigmaBracket>>,
}

impl PreferenceOrderSet {
    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn contains(&self, order: &PreferenceOrder) -> bool {
        self.orders.contains(order)
    }

    pub fn to_export(&self, universe: &ChoiceUniverse) -> OrderSetExport {
        OrderSetExport {
            restriction: self.restriction,
            include_default: self.include_default,
            orders: self
                .orders
                .iter()
                .enumerate()
                .map(|(i, o)| OrderExport {
                    order: o.describe(universe),
                    ranking: o.ranking().to_vec(),
                    bracket: self.brackets.as_ref().map(|b| b[i]),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderSetExport {
    pub restriction: Restriction,
    pub include_default: bool,
    pub orders: Vec<OrderExport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderExport {
    pub order: String,
    pub ranking: Vec<usize>,
    pub bracket: Option<SigmaBracket>,
}

/// Every strict order on `X` (or `X ∪ {o}`), lexicographic by ranking.
pub fn enumerate_orders(universe: &ChoiceUniverse, include_default: bool) -> Result<PreferenceOrderSet> {
    let k = universe.len() + usize::from(include_default);
    if k > MAX_RANKED {
        return Err(Error::CapExceeded(format!("{k}! orders over {k} alternatives (cap {MAX_RANKED})")));
    }
    let mut orders = Vec::new();
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        orders.push(PreferenceOrder::new(perm.clone()));
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(PreferenceOrderSet {
        restriction: Restriction::All,
        include_default,
        n_items: universe.len(),
        orders,
        brackets: None,
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("pivot exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Whether some Bernoulli utility vector represents `order` as expected
/// utility on the book's lotteries.
pub fn eu_feasible(order: &PreferenceOrder, book: &LotteryBook) -> Result<bool> {
    eu_feasible_with_margin(order, book, EU_MARGIN)
}

pub fn eu_feasible_with_margin(order: &PreferenceOrder, book: &LotteryBook, margin: f64) -> Result<bool> {
    let lots: Vec<&[f64]> = order
        .ranking()
        .iter()
        .map(|&a| book.lottery(a).ok_or_else(|| Error::InvalidLottery(format!("alternative {a} has no lottery"))))
        .collect::<Result<_>>()?;
    if lots.len() < 2 {
        return Ok(true);
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let u: Vec<_> = book
        .prizes
        .iter()
        .map(|_| lp.add_var(0.0, (-EU_UTILITY_BOUND, EU_UTILITY_BOUND)))
        .collect();
    for w in lots.windows(2) {
        let row: Vec<_> = u
            .iter()
            .zip(w[0].iter().zip(w[1]))
            .map(|(&var, (a, b))| (var, a - b))
            .filter(|(_, c)| *c != 0.0)
            .collect();
        if row.is_empty() {
            return Ok(false);
        }
        lp.add_constraint(row.as_slice(), ComparisonOp::Ge, margin);
    }
    match lp.solve() {
        Ok(_) => Ok(true),
        Err(minilp::Error::Infeasible) => Ok(false),
        Err(minilp::Error::Unbounded) => Ok(true),
    }
}

pub fn filter_eu(orders: &PreferenceOrderSet, book: &LotteryBook) -> Result<PreferenceOrderSet> {
    let mut kept = Vec::new();
    for o in &orders.orders {
        if eu_feasible(o, book)? {
            kept.push(o.clone());
        }
    }
    Ok(PreferenceOrderSet { restriction: Restriction::Eu, orders: kept, brackets: None, ..orders.clone() })
}

/// Orders induced by CRRA expected utility on a grid of `sigma` values.
#[derive(Clone, Copy, Debug)]
pub struct CrraGrid {
    pub start: f64,
    pub end: f64,
    /// Number of grid steps; the grid has `steps + 1` points.
    pub steps: usize,
}

impl Default for CrraGrid {
    fn default() -> Self {
        Self { start: -1.0, end: 1.0, steps: 20_000 }
    }
}

impl CrraGrid {
    pub fn point(&self, i: usize) -> f64 {
        // Integer arithmetic first so that 0 and the endpoints are exact.
        let t = i as f64 / self.steps as f64;
        let s = self.start + (self.end - self.start) * t;
        if i == self.steps {
            self.end
        } else {
            (s * 1e12).round() / 1e12
        }
    }
}

pub fn enumerate_crra(book: &LotteryBook, grid: CrraGrid, include_default: bool) -> Result<PreferenceOrderSet> {
    if book.prizes.iter().any(|&z| z < 0.0) {
        return Err(Error::InvalidLottery("CRRA utilities need nonnegative prizes".into()));
    }
    let k = book.len() + usize::from(include_default);
    let mut runs: Vec<(PreferenceOrder, f64, f64)> = Vec::new();
    // Sign of (EU_a − EU_b) per pair, and how often it flipped.
    let mut last_sign = vec![0i8; k * k];
    let mut flips = vec![0u32; k * k];
    for i in 0..=grid.steps {
        let sigma = grid.point(i);
        let v = book.crra_values(sigma, include_default)?;
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let tied = (0..k).any(|a| (a + 1..k).any(|b| (v[a] - v[b]).abs() <= 1e-12 * scale));
        if tied {
            continue;
        }
        for a in 0..k {
            for b in a + 1..k {
                let s = if v[a] > v[b] { 1 } else { -1 };
                let cell = a * k + b;
                if last_sign[cell] != 0 && last_sign[cell] != s {
                    flips[cell] += 1;
                }
                last_sign[cell] = s;
            }
        }
        let order = book.crra_order(sigma, include_default)?;
        match runs.last_mut() {
            Some((o, _, last)) if *o == order => *last = sigma,
            _ => runs.push((order, sigma, sigma)),
        }
    }
    for a in 0..k {
        for b in a + 1..k {
            if flips[a * k + b] > 1 {
                return Err(Error::SingleCrossingViolation(format!("alternative {a}"), format!("alternative {b}")));
            }
        }
    }
    let mut orders = Vec::with_capacity(runs.len());
    let mut brackets = Vec::with_capacity(runs.len());
    for (j, (o, first, last)) in runs.iter().enumerate() {
        if orders.contains(o) {
            return Err(Error::SingleCrossingViolation(o.describe(&ChoiceUniverse::indexed(book.len())?), "recurring order".into()));
        }
        let lower = if j == 0 { grid.start } else { runs[j - 1].2 };
        let upper = if j + 1 == runs.len() { grid.end } else { *last };
        orders.push(o.clone());
        brackets.push(SigmaBracket { first: *first, last: *last, lower, upper });
    }
    Ok(PreferenceOrderSet {
        restriction: Restriction::Crra,
        include_default,
        n_items: book.len(),
        orders,
        brackets: Some(brackets),
    })
}

/// Order set for a restriction; EU and CRRA need a lottery book.
pub fn order_set(
    universe: &ChoiceUniverse,
    restriction: Restriction,
    include_default: bool,
    book: Option<&LotteryBook>,
) -> Result<PreferenceOrderSet> {
    let need_book = || {
        let b = book.ok_or_else(|| Error::Config("EU and CRRA restrictions need a lottery book".into()))?;
        if b.len() != universe.len() {
            return Err(Error::Config(format!("lottery book has {} lotteries for {} items", b.len(), universe.len())));
        }
        Ok(b)
    };
    match restriction {
        Restriction::All => enumerate_orders(universe, include_default),
        Restriction::Eu => filter_eu(&enumerate_orders(universe, include_default)?, need_book()?),
        Restriction::Crra => enumerate_crra(need_book()?, CrraGrid::default(), include_default),
    }
}

/// Deterministic choice table: column `l` is the indicator of order `l`'s
/// maximizer on every `(a, A)` coordinate. With `include_default_rows`, each
/// menu block also has a default row and the maximum is taken over `A ∪ {o}`.
pub fn build_b(orders: &PreferenceOrderSet, universe: &ChoiceUniverse, include_default_rows: bool) -> DMatrix<f64> {
    let n = universe.len();
    let ix = SubsetIndexer::new(universe, include_default_rows);
    let mut b = DMatrix::zeros(ix.choice_len(), orders.len());
    for (l, o) in orders.orders.iter().enumerate() {
        for menu in 1..=universe.full_mask() {
            let pool = if include_default_rows && orders.include_default { menu | 1 << n } else { menu };
            let top = o.top(pool).expect("menu is nonempty");
            if top < n || include_default_rows {
                b[(ix.choice_index(top, menu), l)] = 1.0;
            }
        }
    }
    b
}

/// `G = [[P, 0], [0, I]]` with a preference block `P` and an identity block.
#[derive(Clone, Debug)]
pub struct ConeMatrices {
    pub preference: DMatrix<f64>,
    pub identity_dim: usize,
}

impl ConeMatrices {
    pub fn rows(&self) -> usize {
        self.preference.nrows() + self.identity_dim
    }

    pub fn cols(&self) -> usize {
        self.preference.ncols() + self.identity_dim
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let (r, c) = self.preference.shape();
        let mut g = DMatrix::zeros(self.rows(), self.cols());
        g.view_mut((0, 0), (r, c)).copy_from(&self.preference);
        for i in 0..self.identity_dim {
            g[(r + i, c + i)] = 1.0;
        }
        g
    }

    /// `G·v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (r, c) = self.preference.shape();
        let mut out = vec![0.0; self.rows()];
        for j in 0..c {
            if v[j] != 0.0 {
                for i in 0..r {
                    out[i] += self.preference[(i, j)] * v[j];
                }
            }
        }
        out[r..].copy_from_slice(&v[c..c + self.identity_dim]);
        out
    }
}

pub fn build_g(b: DMatrix<f64>, d_m: usize) -> ConeMatrices {
    ConeMatrices { preference: b, identity_dim: d_m }
}

/// Deterministic choice vector of one order (the column of `B`).
pub fn choice_indicator(order: &PreferenceOrder, menu: u32, n: usize) -> Option<usize> {
    order.top(menu).filter(|&a| a < n || iter_bits(menu).count() == 0)
}
