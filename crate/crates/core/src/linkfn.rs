//! Attention indices, link functions and calibration.
//!
//! An attention index `η` is a set function on `2^X`. A link function turns it
//! into a consideration rule `m_A(D)` for every menu `A` and `D ⊆ A`.
//! Calibration inverts the map from `η` to default-choice probabilities.

use serde::{Deserialize, Serialize};

use crate::dataset::CompleteChoiceRule;
use crate::error::{Error, Result};
use crate::orders::PreferenceOrderSet;
use crate::universe::{iter_bits, submasks, ChoiceUniverse, SubsetIndexer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Link {
    La,
    Mm,
    Rcg,
    Fc,
}

impl Link {
    pub const ALL: [Link; 4] = [Link::La, Link::Mm, Link::Rcg, Link::Fc];

    pub fn name(self) -> &'static str {
        match self {
            Link::La => "LA",
            Link::Mm => "MM",
            Link::Rcg => "RCG",
            Link::Fc => "FC",
        }
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LA" => Ok(Link::La),
            "MM" => Ok(Link::Mm),
            "RCG" => Ok(Link::Rcg),
            "FC" => Ok(Link::Fc),
            _ => Err(Error::Config(format!("unknown link `{s}` (LA, MM, RCG, FC)"))),
        }
    }
}

/// In-place Möbius inversion over subsets: `f(D) ← Σ_{B⊆D} (−1)^{|D\B|} f(B)`.
pub fn mobius(f: &mut [f64]) {
    let n = f.len().trailing_zeros();
    for i in 0..n {
        let bit = 1usize << i;
        for mask in 0..f.len() {
            if mask & bit != 0 {
                f[mask] -= f[mask ^ bit];
            }
        }
    }
}

/// In-place zeta transform over subsets: `f(D) ← Σ_{B⊆D} f(B)`.
pub fn zeta(f: &mut [f64]) {
    let n = f.len().trailing_zeros();
    for i in 0..n {
        let bit = 1usize << i;
        for mask in 0..f.len() {
            if mask & bit != 0 {
                f[mask] += f[mask ^ bit];
            }
        }
    }
}

const PROPER_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionIndex {
    universe: ChoiceUniverse,
    /// `η(D)` indexed by the bitmask of `D`.
    values: Vec<f64>,
}

impl AttentionIndex {
    pub fn new(universe: &ChoiceUniverse, values: Vec<f64>) -> Result<Self> {
        if values.len() != universe.subset_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} attention values for {} subsets",
                values.len(),
                universe.subset_count()
            )));
        }
        Ok(Self { universe: universe.clone(), values })
    }

    pub fn from_fn(universe: &ChoiceUniverse, f: impl FnMut(u32) -> f64) -> Self {
        let values = (0..universe.subset_count() as u32).map(f).collect();
        Self { universe: universe.clone(), values }
    }

    pub fn universe(&self) -> &ChoiceUniverse {
        &self.universe
    }

    pub fn get(&self, set: u32) -> f64 {
        self.values[set as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_proper(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0) && (self.values.iter().sum::<f64>() - 1.0).abs() <= PROPER_TOL
    }

    pub fn check_proper(&self, strictly_positive: bool) -> Result<()> {
        if let Some((d, v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, &v)| !v.is_finite() || v < 0.0 || (strictly_positive && v <= 0.0))
        {
            return Err(Error::ImproperIndex(format!("η({}) = {v}", self.universe.describe(d as u32))));
        }
        let s: f64 = self.values.iter().sum();
        if (s - 1.0).abs() > PROPER_TOL {
            return Err(Error::ImproperIndex(format!("values sum to {s}")));
        }
        Ok(())
    }

    /// Marginal attention `Σ_{D∋a} η(D)` per item.
    pub fn marginals(&self) -> Vec<f64> {
        (0..self.universe.len())
            .map(|a| {
                self.values
                    .iter()
                    .enumerate()
                    .filter(|(d, _)| d >> a & 1 == 1)
                    .map(|(_, v)| v)
                    .sum()
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn to_export(&self) -> Vec<SetValue> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(d, &v)| SetValue { menu: None, set: self.universe.describe(d as u32), value: v })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetValue {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub menu: Option<String>,
    pub set: String,
    pub value: f64,
}

/// Independent consideration probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MMGamma {
    pub gamma: Vec<f64>,
}

impl MMGamma {
    pub fn well_defined(&self) -> bool {
        self.gamma.iter().all(|&g| g > 0.0 && g < 1.0)
    }

    /// Product-form index `η(D) = Π_{a∈D} γ(a) Π_{a∉D} (1 − γ(a))`.
    pub fn attention_index(&self, universe: &ChoiceUniverse) -> AttentionIndex {
        AttentionIndex::from_fn(universe, |d| product_mass(&self.gamma, d, universe.full_mask()))
    }

    pub fn consideration_rule(&self, universe: &ChoiceUniverse) -> ConsiderationRule {
        ConsiderationRule::from_fn(universe, Link::Mm, |d, a| product_mass(&self.gamma, d, a))
    }
}

fn product_mass(gamma: &[f64], d: u32, within: u32) -> f64 {
    iter_bits(within).map(|a| if d >> a & 1 == 1 { gamma[a] } else { 1.0 - gamma[a] }).product()
}

/// `m_A(D)` for every menu `A ⊆ X` (including `∅`) and `D ⊆ A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsiderationRule {
    universe: ChoiceUniverse,
    link: Link,
    /// Stored in consideration-coordinate order.
    values: Vec<f64>,
    #[serde(skip)]
    index: Option<SubsetIndexer>,
}

impl ConsiderationRule {
    pub fn from_fn(universe: &ChoiceUniverse, link: Link, mut f: impl FnMut(u32, u32) -> f64) -> Self {
        let ix = SubsetIndexer::new(universe, false);
        let mut values = vec![0.0; ix.consideration_len()];
        for menu in 0..=universe.full_mask() {
            for d in submasks(menu) {
                values[ix.consideration_index(d, menu)] = f(d, menu);
            }
        }
        Self { universe: universe.clone(), link, values, index: Some(ix) }
    }

    fn ix(&self) -> SubsetIndexer {
        self.index.clone().unwrap_or_else(|| SubsetIndexer::new(&self.universe, false))
    }

    pub fn universe(&self) -> &ChoiceUniverse {
        &self.universe
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn get(&self, d: u32, menu: u32) -> f64 {
        match &self.index {
            Some(ix) => self.values[ix.consideration_index(d, menu)],
            None => self.values[self.ix().consideration_index(d, menu)],
        }
    }

    /// Values in consideration-coordinate order (length `3^n`).
    pub fn as_vector(&self) -> &[f64] {
        &self.values
    }

    pub fn menu_sum(&self, menu: u32) -> f64 {
        submasks(menu).map(|d| self.get(d, menu)).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn to_export(&self) -> ConsiderationExport {
        let mut cells = Vec::new();
        for menu in 1..=self.universe.full_mask() {
            for d in submasks(menu) {
                let v = self.get(d, menu);
                if v != 0.0 {
                    cells.push(SetValue {
                        menu: Some(self.universe.describe(menu)),
                        set: self.universe.describe(d),
                        value: v,
                    });
                }
            }
        }
        ConsiderationExport { link: self.link, cells }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsiderationExport {
    pub link: Link,
    pub cells: Vec<SetValue>,
}

/// Consideration rule represented by `η` under link `L`.
pub fn forward_m(eta: &AttentionIndex, link: Link) -> Result<ConsiderationRule> {
    eta.check_proper(link == Link::La)?;
    Ok(consideration_from_index(eta, link))
}

/// Link applied without checking that `η` is proper; MM reads `η` through
/// its marginals.
pub fn consideration_from_index(eta: &AttentionIndex, link: Link) -> ConsiderationRule {
    let u = eta.universe();
    match link {
        Link::La => {
            let mut denom = eta.values().to_vec();
            zeta(&mut denom);
            ConsiderationRule::from_fn(u, link, |d, a| eta.get(d) / denom[a as usize])
        }
        Link::Mm => MMGamma { gamma: eta.marginals() }.consideration_rule(u),
        Link::Rcg => {
            let full = u.full_mask();
            let mut rule = ConsiderationRule::from_fn(u, link, |_, _| 0.0);
            let ix = rule.ix();
            for menu in 0..=full {
                for c in 0..=full {
                    rule.values[ix.consideration_index(c & menu, menu)] += eta.get(c);
                }
            }
            rule
        }
        Link::Fc => fc_consideration(u),
    }
}

pub fn fc_consideration(universe: &ChoiceUniverse) -> ConsiderationRule {
    ConsiderationRule::from_fn(universe, Link::Fc, |d, a| if d == a { 1.0 } else { 0.0 })
}

/// `p(o, A) = m_A(∅)` for every menu, indexed by mask.
pub fn default_probabilities(m: &ConsiderationRule) -> Vec<f64> {
    (0..=m.universe().full_mask()).map(|a| m.get(0, a)).collect()
}

fn default_row(p: &CompleteChoiceRule) -> Vec<f64> {
    (0..=p.universe().full_mask()).map(|a| p.default_prob(a)).collect()
}

fn require_positive_defaults(p: &CompleteChoiceRule, po: &[f64]) -> Result<()> {
    match po.iter().position(|&v| v <= 0.0) {
        Some(a) => Err(Error::DivisionByDefaultZero(p.universe().describe(a as u32))),
        None => Ok(()),
    }
}

/// MM attention probabilities from the grand set, with the largest deviation
/// of the per-menu estimates `1 − p(o,A)/p(o,A\{a})` from them.
pub fn calibrate_gamma(p: &CompleteChoiceRule) -> Result<(MMGamma, f64)> {
    let po = default_row(p);
    require_positive_defaults(p, &po)?;
    let full = p.universe().full_mask();
    let gamma: Vec<f64> = (0..p.n()).map(|a| 1.0 - po[full as usize] / po[(full & !(1 << a)) as usize]).collect();
    let mut dispersion = 0.0f64;
    for menu in 1..=full {
        for a in iter_bits(menu) {
            let g = 1.0 - po[menu as usize] / po[(menu & !(1 << a)) as usize];
            dispersion = dispersion.max((g - gamma[a]).abs());
        }
    }
    Ok((MMGamma { gamma }, dispersion))
}

/// Attention index implied by the default-choice probabilities of `p`.
pub fn calibrate_eta(p: &CompleteChoiceRule, link: Link) -> Result<AttentionIndex> {
    let u = p.universe();
    let full = u.full_mask() as usize;
    let po = default_row(p);
    match link {
        Link::La => {
            require_positive_defaults(p, &po)?;
            let mut f: Vec<f64> = po.iter().map(|&b| po[full] / b).collect();
            mobius(&mut f);
            AttentionIndex::new(u, f)
        }
        Link::Mm => Ok(calibrate_gamma(p)?.0.attention_index(u)),
        Link::Rcg => {
            let mut f: Vec<f64> = (0..=full).map(|b| po[full & !b]).collect();
            mobius(&mut f);
            AttentionIndex::new(u, f)
        }
        Link::Fc => Ok(AttentionIndex::from_fn(u, |d| if d as usize == full { 1.0 } else { 0.0 })),
    }
}

/// Calibrated consideration rule `m^L`. Values may leave `[0, 1]`; that is
/// what [`well_defined`] reports.
pub fn calibrate_m(p: &CompleteChoiceRule, link: Link) -> Result<ConsiderationRule> {
    let u = p.universe();
    match link {
        Link::La => {
            let eta = calibrate_eta(p, link)?;
            let po_full = p.default_prob(u.full_mask());
            // Σ_{C⊆A} η(C) = p(o,X)/p(o,A)
            Ok(ConsiderationRule::from_fn(u, link, |d, a| eta.get(d) * p.default_prob(a) / po_full))
        }
        Link::Mm => Ok(calibrate_gamma(p)?.0.consideration_rule(u)),
        Link::Rcg => Ok(consideration_from_index(&calibrate_eta(p, link)?, link)),
        Link::Fc => Ok(fc_consideration(u)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub menu: String,
    pub set: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellDefinedness {
    pub link: Link,
    pub well_defined: bool,
    pub violations: Vec<Violation>,
}

/// Whether every `m_A` is a distribution; LA and MM additionally need
/// strictly positive values.
pub fn well_defined(m: &ConsiderationRule, link: Link) -> WellDefinedness {
    let strict = matches!(link, Link::La | Link::Mm);
    let u = m.universe();
    let mut violations = Vec::new();
    for menu in 0..=u.full_mask() {
        for d in submasks(menu) {
            let v = m.get(d, menu);
            let bad = !v.is_finite() || v > 1.0 + PROPER_TOL || if strict { v <= 0.0 } else { v < -PROPER_TOL };
            if bad {
                violations.push(Violation { menu: u.describe(menu), set: u.describe(d), value: v });
            }
        }
    }
    WellDefinedness { link, well_defined: violations.is_empty(), violations }
}

/// `p_π(a, A)` for every menu `A` and `a ∈ A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedFullConsideration {
    universe: ChoiceUniverse,
    /// Choice-coordinate order without default rows.
    values: Vec<f64>,
}

impl CalibratedFullConsideration {
    pub fn universe(&self) -> &ChoiceUniverse {
        &self.universe
    }

    pub fn as_vector(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, a: usize, menu: u32) -> f64 {
        if menu >> a & 1 == 0 {
            return 0.0;
        }
        self.values[SubsetIndexer::new(&self.universe, false).choice_index(a, menu)]
    }

    pub fn to_export(&self) -> Vec<SetValue> {
        let ix = SubsetIndexer::new(&self.universe, false);
        (0..self.values.len())
            .map(|i| {
                let (a, menu) = ix.choice_coordinate(i);
                SetValue {
                    menu: Some(self.universe.describe(menu)),
                    set: self.universe.item(a).to_string(),
                    value: self.values[i],
                }
            })
            .collect()
    }
}

/// Peel consideration off `p` menu by menu, smallest menus first:
/// `p_π(a,A) = (p(a,A) − Σ_{C⊊A} m_A(C) p_π(a,C)) / m_A(A)`.
pub fn calibrate_full_consideration(p: &CompleteChoiceRule, m: &ConsiderationRule) -> Result<CalibratedFullConsideration> {
    let u = p.universe();
    let n = u.len();
    let full = u.full_mask();
    let mut menus: Vec<u32> = (1..=full).collect();
    menus.sort_by_key(|m| (m.count_ones(), *m));
    // dense p_π(a, C), zero for a ∉ C and for C = ∅
    let mut table = vec![0.0; (full as usize + 1) * n];
    for &menu in &menus {
        let mass = m.get(menu, menu);
        if mass.abs() < 1e-300 {
            return Err(Error::ZeroFullConsiderationMass(u.describe(menu)));
        }
        for a in iter_bits(menu) {
            let correction: f64 = submasks(menu)
                .filter(|&c| c != menu && c >> a & 1 == 1)
                .map(|c| m.get(c, menu) * table[c as usize * n + a])
                .sum();
            table[menu as usize * n + a] = (p.prob(a, menu) - correction) / mass;
        }
    }
    let ix = SubsetIndexer::new(u, false);
    let values = (0..ix.choice_len())
        .map(|i| {
            let (a, menu) = ix.choice_coordinate(i);
            table[menu as usize * n + a]
        })
        .collect();
    Ok(CalibratedFullConsideration { universe: u.clone(), values })
}

fn check_weights(orders: &PreferenceOrderSet, pi: &[f64]) -> Result<()> {
    if pi.len() != orders.len() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} orders", pi.len(), orders.len())));
    }
    if orders.include_default {
        return Err(Error::DimensionMismatch("consideration models rank items only".into()));
    }
    Ok(())
}

/// Choice rule generated by consideration rule `m` and preference weights `π`.
/// Considering nothing selects the default.
pub fn hrc_forward(m: &ConsiderationRule, orders: &PreferenceOrderSet, pi: &[f64]) -> Result<CompleteChoiceRule> {
    check_weights(orders, pi)?;
    let u = m.universe();
    let n = u.len();
    let full = u.full_mask();
    let mut table = vec![0.0; (full as usize + 1) * (n + 1)];
    for (o, &w) in orders.orders.iter().zip(pi) {
        if w == 0.0 {
            continue;
        }
        for menu in 1..=full {
            for d in submasks(menu).skip(1) {
                let top = o.top(d).expect("nonempty");
                table[menu as usize * (n + 1) + top] += w * m.get(d, menu);
            }
        }
    }
    Ok(CompleteChoiceRule::from_fn(u, |a, menu| {
        if a == n {
            m.get(0, menu)
        } else {
            table[menu as usize * (n + 1) + a]
        }
    }))
}

/// Full-consideration rule: `p(a,A) = Σ π(≻) 1[a tops A]`, default never chosen.
pub fn fc_rule(universe: &ChoiceUniverse, orders: &PreferenceOrderSet, pi: &[f64]) -> Result<CompleteChoiceRule> {
    hrc_forward(&fc_consideration(universe), orders, pi)
}

/// Every complete rule is an HRC rule: consider exactly the chosen item.
pub fn universal_hrc_decomposition(
    p: &CompleteChoiceRule,
    orders: &PreferenceOrderSet,
) -> Result<(ConsiderationRule, Vec<f64>)> {
    if orders.is_empty() || orders.include_default {
        return Err(Error::DimensionMismatch("need a nonempty order set over items".into()));
    }
    let m = ConsiderationRule::from_fn(p.universe(), Link::Fc, |d, menu| {
        if menu == 0 {
            1.0
        } else if d == 0 {
            p.default_prob(menu)
        } else if d.count_ones() == 1 {
            p.prob(d.trailing_zeros() as usize, menu)
        } else {
            0.0
        }
    });
    let pi = vec![1.0 / orders.len() as f64; orders.len()];
    Ok((m, pi))
}
