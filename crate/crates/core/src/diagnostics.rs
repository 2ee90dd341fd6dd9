//! Model-free scans of a choice rule: choice overload, attraction effects and
//! the RAM revealed-preference relation.

use serde::{Deserialize, Serialize};

use crate::dataset::CompleteChoiceRule;
use crate::universe::{iter_bits, ChoiceUniverse};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationRecord {
    pub menu: String,
    /// Item whose share rises (attraction) or the default (overload).
    pub alternative: String,
    /// Item removed from the menu (overload) or added to it (attraction).
    pub varied: String,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub comparisons: usize,
    pub violations: usize,
    pub proportion: f64,
    pub mean_magnitude: f64,
    pub std_magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub comparisons: usize,
    pub violations: usize,
    pub proportion: f64,
    /// Mean over violations.
    pub mean_magnitude: f64,
    pub std_magnitude: f64,
    pub total_magnitude: f64,
    pub by_size: Vec<GroupSummary>,
    pub by_varied: Vec<GroupSummary>,
    pub records: Vec<DeviationRecord>,
}

struct Tally {
    label: String,
    comparisons: usize,
    magnitudes: Vec<f64>,
}

impl Tally {
    fn new(label: String) -> Self {
        Self { label, comparisons: 0, magnitudes: Vec::new() }
    }

    fn add(&mut self, magnitude: f64) {
        self.comparisons += 1;
        if magnitude > 0.0 {
            self.magnitudes.push(magnitude);
        }
    }

    fn summary(&self) -> GroupSummary {
        let (mean, std) = mean_std(&self.magnitudes);
        GroupSummary {
            group: self.label.clone(),
            comparisons: self.comparisons,
            violations: self.magnitudes.len(),
            proportion: ratio(self.magnitudes.len(), self.comparisons),
            mean_magnitude: mean,
            std_magnitude: std,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Mean and sample standard deviation; zeros when undefined.
fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    (mean, var.sqrt())
}

fn finish(all: Tally, by_size: Vec<Tally>, by_varied: Vec<Tally>, records: Vec<DeviationRecord>) -> DeviationSummary {
    let s = all.summary();
    DeviationSummary {
        comparisons: s.comparisons,
        violations: s.violations,
        proportion: s.proportion,
        mean_magnitude: s.mean_magnitude,
        std_magnitude: s.std_magnitude,
        total_magnitude: all.magnitudes.iter().sum(),
        by_size: by_size.iter().filter(|t| t.comparisons > 0).map(Tally::summary).collect(),
        by_varied: by_varied.iter().map(Tally::summary).collect(),
        records,
    }
}

/// Pairs `(A, a)` with `|A| ≥ 2` where `p(o, A) > p(o, A \ {a})`.
pub fn choice_overload_scan(p: &CompleteChoiceRule) -> DeviationSummary {
    let u = p.universe();
    let n = u.len();
    let mut all = Tally::new("all".into());
    let mut by_size: Vec<Tally> = (0..=n).map(|k| Tally::new(format!("|A|={k}"))).collect();
    let mut by_varied: Vec<Tally> = (0..n).map(|a| Tally::new(u.item(a).to_string())).collect();
    let mut records = Vec::new();
    for menu in 1..=u.full_mask() {
        if menu.count_ones() < 2 {
            continue;
        }
        for a in iter_bits(menu) {
            let mag = (p.default_prob(menu) - p.default_prob(menu & !(1 << a))).max(0.0);
            all.add(mag);
            by_size[menu.count_ones() as usize].add(mag);
            by_varied[a].add(mag);
            if mag > 0.0 {
                records.push(DeviationRecord {
                    menu: u.describe(menu),
                    alternative: u.default_label().to_string(),
                    varied: u.item(a).to_string(),
                    magnitude: mag,
                });
            }
        }
    }
    finish(all, by_size, by_varied, records)
}

/// Triples `(a, A, x)` with `a ∈ A`, `x ∉ A` where `p(a, A ∪ {x}) > p(a, A)`.
pub fn attraction_effect_scan(p: &CompleteChoiceRule) -> DeviationSummary {
    let u = p.universe();
    let n = u.len();
    let full = u.full_mask();
    let mut all = Tally::new("all".into());
    let mut by_size: Vec<Tally> = (0..=n).map(|k| Tally::new(format!("|A|={k}"))).collect();
    let mut by_varied: Vec<Tally> = (0..n).map(|a| Tally::new(u.item(a).to_string())).collect();
    let mut records = Vec::new();
    for menu in 1..=full {
        for x in iter_bits(full & !menu) {
            let bigger = menu | 1 << x;
            for a in iter_bits(menu) {
                let mag = (p.prob(a, bigger) - p.prob(a, menu)).max(0.0);
                all.add(mag);
                by_size[menu.count_ones() as usize].add(mag);
                by_varied[x].add(mag);
                if mag > 0.0 {
                    records.push(DeviationRecord {
                        menu: u.describe(menu),
                        alternative: u.item(a).to_string(),
                        varied: u.item(x).to_string(),
                        magnitude: mag,
                    });
                }
            }
        }
    }
    finish(all, by_size, by_varied, records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevealedEdge {
    pub better: String,
    pub worse: String,
    /// Menu `A` with `p(better, A) > p(better, A \ {worse})`.
    pub menu: String,
    pub with: f64,
    pub without: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamReport {
    pub acyclic: bool,
    pub relation: Vec<RevealedEdge>,
    /// Pairs `(a, b)` in the transitive closure.
    pub closure: Vec<(String, String)>,
    /// Edges of one cycle, when there is one.
    pub cycle: Option<Vec<RevealedEdge>>,
}

/// Revealed preference `aPb` whenever removing `b` lowers the share of `a`,
/// closed transitively; the rule has a RAM representation only if the
/// closure is acyclic.
pub fn ram_acyclicity(p: &CompleteChoiceRule) -> RamReport {
    let u = p.universe();
    let n = u.len();
    let mut witness: Vec<Option<RevealedEdge>> = vec![None; n * n];
    for menu in 1..=u.full_mask() {
        for b in iter_bits(menu) {
            let without = menu & !(1 << b);
            for a in iter_bits(without) {
                let (pw, po) = (p.prob(a, menu), p.prob(a, without));
                if pw > po && witness[a * n + b].is_none() {
                    witness[a * n + b] = Some(edge(u, a, b, menu, pw, po));
                }
            }
        }
    }
    let mut reach: Vec<bool> = witness.iter().map(Option::is_some).collect();
    for k in 0..n {
        for i in 0..n {
            if reach[i * n + k] {
                for j in 0..n {
                    if reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
    }
    let cycle = (0..n).find(|&a| reach[a * n + a]).map(|start| shortest_cycle(&witness, n, start));
    RamReport {
        acyclic: cycle.is_none(),
        relation: witness.iter().flatten().cloned().collect(),
        closure: (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| reach[i * n + j])
            .map(|(i, j)| (u.item(i).to_string(), u.item(j).to_string()))
            .collect(),
        cycle,
    }
}

fn edge(u: &ChoiceUniverse, a: usize, b: usize, menu: u32, with: f64, without: f64) -> RevealedEdge {
    RevealedEdge {
        better: u.item(a).to_string(),
        worse: u.item(b).to_string(),
        menu: u.describe(menu),
        with,
        without,
    }
}

/// Breadth-first search back to `start` along direct edges.
fn shortest_cycle(witness: &[Option<RevealedEdge>], n: usize, start: usize) -> Vec<RevealedEdge> {
    let mut prev = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([start]);
    let mut seen = vec![false; n];
    while let Some(v) = queue.pop_front() {
        for w in 0..n {
            if witness[v * n + w].is_none() {
                continue;
            }
            if w == start {
                let mut path = vec![witness[v * n + w].clone().expect("edge")];
                let mut cur = v;
                while cur != start {
                    let p = prev[cur];
                    path.push(witness[p * n + cur].clone().expect("edge"));
                    cur = p;
                }
                path.reverse();
                return path;
            }
            if !seen[w] {
                seen[w] = true;
                prev[w] = v;
                queue.push_back(w);
            }
        }
    }
    unreachable!("start lies on a cycle")
}
