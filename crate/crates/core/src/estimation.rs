//! Second-stage estimation: proper consideration rules, preference weights,
//! attention shares and welfare.

use serde::{Deserialize, Serialize};

use crate::dataset::CompleteChoiceRule;
use crate::error::{Error, Result};
use crate::linkfn::{
    calibrate_full_consideration, calibrate_m, consideration_from_index, fc_consideration, AttentionIndex,
    ConsiderationRule, Link, MMGamma, SetValue,
};
use crate::orders::{build_b, build_g, OrderSetExport, PreferenceOrderSet};
use crate::qp::{solve_cone_default, ConeProblem};
use crate::universe::{iter_bits, submasks};

pub const DEFAULT_FLOOR: f64 = 1e-4;

/// Euclidean projection onto `{x ≥ floor, Σx = 1}`.
pub fn project_simplex(v: &[f64], floor: f64) -> Result<Vec<f64>> {
    let k = v.len() as f64;
    let mass = 1.0 - floor * k;
    if mass < 0.0 {
        return Err(Error::Config(format!("floor {floor} too large for {} coordinates", v.len())));
    }
    let y: Vec<f64> = v.iter().map(|x| x - floor).collect();
    let mut sorted = y.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - mass) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    Ok(y.iter().map(|x| (x - theta).max(0.0) + floor).collect())
}

/// Projects a calibrated rule onto the proper rules of its link. Returns the
/// projected rule and the attention index it comes from.
pub fn project_consideration(m: &ConsiderationRule, floor: f64) -> Result<(ConsiderationRule, AttentionIndex)> {
    let u = m.universe();
    let full = u.full_mask();
    let link = m.link();
    match link {
        Link::La | Link::Rcg => {
            // m_X(D) = η(D) for both links
            let raw: Vec<f64> = (0..=full).map(|d| m.get(d, full)).collect();
            let fl = if link == Link::La { floor } else { 0.0 };
            let eta = AttentionIndex::new(u, project_simplex(&raw, fl)?)?;
            Ok((consideration_from_index(&eta, link), eta))
        }
        Link::Mm => {
            let gamma = MMGamma {
                gamma: (0..u.len()).map(|a| m.get(1 << a, 1 << a).clamp(floor, 1.0 - floor)).collect(),
            };
            Ok((gamma.consideration_rule(u), gamma.attention_index(u)))
        }
        Link::Fc => Ok((fc_consideration(u), AttentionIndex::from_fn(u, |d| if d == full { 1.0 } else { 0.0 }))),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiEstimate {
    pub pi: Vec<f64>,
    /// Nonnegative solution before normalization.
    pub raw: Vec<f64>,
    /// `‖P_π − B π_raw‖`.
    pub residual: f64,
}

/// Nonnegative least squares of the calibrated full-consideration rule on
/// the order set, normalized to the simplex.
pub fn estimate_pi(p: &CompleteChoiceRule, m: &ConsiderationRule, orders: &PreferenceOrderSet) -> Result<PiEstimate> {
    let u = p.universe();
    let pf = calibrate_full_consideration(p, m)?;
    let b = build_b(orders, u, false);
    let rows = b.nrows();
    let problem = ConeProblem::new(pf.as_vector().to_vec(), build_g(b, 0), vec![1.0; rows], 0.0)?;
    let sol = solve_cone_default(&problem)?;
    let total: f64 = sol.v.iter().sum();
    let pi = if total > 0.0 {
        sol.v.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / orders.len() as f64; orders.len()]
    };
    Ok(PiEstimate { pi, raw: sol.v, residual: sol.objective.sqrt() })
}

/// `I_A(a) = Σ_{D∋a} m_A(D) / |D|` for every item, zero outside `A`.
pub fn attention_contribution(m: &ConsiderationRule, menu: u32) -> Vec<f64> {
    let mut out = vec![0.0; m.universe().len()];
    for d in submasks(menu).skip(1) {
        let share = m.get(d, menu) / d.count_ones() as f64;
        for a in iter_bits(d) {
            out[a] += share;
        }
    }
    out
}

/// Mass of decision makers whose favourite item in `A` goes unconsidered.
pub fn welfare_suboptimization(m: &ConsiderationRule, orders: &PreferenceOrderSet, pi: &[f64], menu: u32) -> f64 {
    orders
        .orders
        .iter()
        .zip(pi)
        .map(|(o, &w)| {
            let top = o.top(menu).expect("nonempty menu");
            w * submasks(menu).filter(|d| d >> top & 1 == 0).map(|d| m.get(d, menu)).sum::<f64>()
        })
        .sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BracketMass {
    pub order: String,
    pub lower: f64,
    pub upper: f64,
    pub mass: f64,
}

pub fn sigma_bracket(pi: &[f64], orders: &PreferenceOrderSet) -> Result<Vec<BracketMass>> {
    let brackets = orders
        .brackets
        .as_ref()
        .ok_or_else(|| Error::Config("order set carries no CRRA brackets".into()))?;
    let u = crate::universe::ChoiceUniverse::indexed(orders.n_items)?;
    Ok(orders
        .orders
        .iter()
        .zip(brackets)
        .zip(pi)
        .map(|((o, b), &mass)| BracketMass { order: o.describe(&u), lower: b.lower, upper: b.upper, mass })
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MenuWelfare {
    pub menu: String,
    pub suboptimizing: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WelfareReport {
    pub treatment: String,
    pub per_menu: Vec<MenuWelfare>,
    /// Grand-menu value.
    pub grand_menu: f64,
    pub mean_over_menus: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ItemAttention {
    pub item: String,
    pub attention: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimatedModel {
    pub link: Link,
    pub treatment: String,
    pub floor: f64,
    pub attention_index: Vec<SetValue>,
    pub grand_menu_attention: Vec<ItemAttention>,
    pub orders: OrderSetExport,
    pub pi: PiEstimate,
    pub brackets: Option<Vec<BracketMass>>,
    pub welfare: WelfareReport,
}

/// Calibrate, project and estimate in one pass.
pub fn estimate_model(
    p: &CompleteChoiceRule,
    treatment: &str,
    link: Link,
    orders: &PreferenceOrderSet,
    floor: f64,
) -> Result<EstimatedModel> {
    let u = p.universe();
    let full = u.full_mask();
    let (m, eta) = project_consideration(&calibrate_m(p, link)?, floor)?;
    let pi = estimate_pi(p, &m, orders)?;
    let brackets = match orders.brackets {
        Some(_) => Some(sigma_bracket(&pi.pi, orders)?),
        None => None,
    };
    let per_menu: Vec<MenuWelfare> = (1..=full)
        .map(|a| MenuWelfare { menu: u.describe(a), suboptimizing: welfare_suboptimization(&m, orders, &pi.pi, a) })
        .collect();
    let mean = per_menu.iter().map(|w| w.suboptimizing).sum::<f64>() / per_menu.len() as f64;
    let attention = attention_contribution(&m, full);
    Ok(EstimatedModel {
        link,
        treatment: treatment.to_string(),
        floor,
        attention_index: eta.to_export(),
        grand_menu_attention: attention
            .iter()
            .enumerate()
            .map(|(a, &v)| ItemAttention { item: u.item(a).to_string(), attention: v })
            .collect(),
        orders: orders.to_export(u),
        brackets,
        welfare: WelfareReport {
            treatment: treatment.to_string(),
            grand_menu: welfare_suboptimization(&m, orders, &pi.pi, full),
            per_menu,
            mean_over_menus: mean,
        },
        pi,
    })
}
