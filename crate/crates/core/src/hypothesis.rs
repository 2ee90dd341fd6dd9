//! Cone-projection tests with a recentered, tightened bootstrap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CompleteChoiceRule, EmpiricalChoiceRule};
use crate::error::{Error, Result};
use crate::linkfn::{calibrate_full_consideration, calibrate_m, well_defined, Link, WellDefinedness};
use crate::orders::{build_b, build_g, order_set, ConeMatrices, LotteryBook, PreferenceOrderSet, Restriction};
use crate::qp::{default_max_iter, generalized_inverse_weights, solve_cone, ConeProblem, ConeSolution, DEFAULT_TOL};
use crate::rng::{self, tag};
use crate::universe::{consideration_coordinate_count, ChoiceUniverse, SubsetIndexer};

/// Share of failed replications above which a report is flagged.
pub const UNRELIABLE_FAILURE_SHARE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "RUM")]
    Rum,
    #[serde(rename = "EU-RUM")]
    EuRum,
    #[serde(rename = "HRC")]
    Hrc(Link),
}

impl Model {
    pub fn link(self) -> Option<Link> {
        match self {
            Model::Hrc(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_rum(self) -> bool {
        self.link().is_none()
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rum" => Ok(Model::Rum),
            "eu-rum" | "eurum" => Ok(Model::EuRum),
            other => other
                .parse::<Link>()
                .map(Model::Hrc)
                .map_err(|_| Error::Config(format!("unknown model `{s}` (rum, eu-rum, la, mm, rcg, fc)"))),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::Rum => f.write_str("RUM"),
            Model::EuRum => f.write_str("EU-RUM"),
            Model::Hrc(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauRule {
    /// `sqrt(ln n_min / n_min)` with `n_min` the smallest menu sample.
    Ks,
    Zero,
    Fixed(f64),
}

impl TauRule {
    pub fn value(self, min_menu_n: u64) -> f64 {
        match self {
            TauRule::Ks => {
                let m = min_menu_n.max(1) as f64;
                (m.ln().max(0.0) / m).sqrt()
            }
            TauRule::Zero => 0.0,
            TauRule::Fixed(t) => t,
        }
    }
}

impl std::str::FromStr for TauRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ks" => Ok(TauRule::Ks),
            "zero" | "0" => Ok(TauRule::Zero),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite() && *t >= 0.0)
                .map(TauRule::Fixed)
                .ok_or_else(|| Error::Config(format!("--tau must be ks, zero or a nonnegative number, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestSpec {
    pub model: Model,
    pub restriction: Restriction,
    pub tau: TauRule,
    pub replications: usize,
    /// Preliminary bootstrap size for `Ω̂`.
    pub variance_replications: usize,
    /// Bootstrap size for `Ω̂*` inside each replication.
    pub inner_variance_replications: usize,
    pub seed: u64,
    /// Additive smoothing of frequencies before calibration.
    pub laplace: Option<f64>,
}

impl TestSpec {
    pub fn new(model: Model, restriction: Restriction) -> Self {
        Self {
            model,
            restriction: if model == Model::EuRum { Restriction::Eu } else { restriction },
            tau: TauRule::Ks,
            replications: 500,
            variance_replications: 200,
            inner_variance_replications: 50,
            seed: 0,
            laplace: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Config("at least one bootstrap replication is needed".into()));
        }
        if self.variance_replications < 2 || self.inner_variance_replications < 2 {
            return Err(Error::Config("variance estimation needs at least two replications".into()));
        }
        if self.model == Model::EuRum && self.restriction != Restriction::Eu {
            return Err(Error::Config("EU-RUM uses the EU restriction".into()));
        }
        if let Some(k) = self.laplace {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::Config("--laplace must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Maps data to the stacked moment vector `ĝ` and holds the matching `G`.
#[derive(Clone, Debug)]
pub struct Assembler {
    pub model: Model,
    pub universe: ChoiceUniverse,
    pub orders: PreferenceOrderSet,
    pub matrices: ConeMatrices,
    pub blocks: usize,
    pub laplace: Option<f64>,
}

impl Assembler {
    /// `blocks` stacked treatments sharing one preference column per order.
    pub fn new(
        universe: &ChoiceUniverse,
        model: Model,
        restriction: Restriction,
        book: Option<&LotteryBook>,
        blocks: usize,
    ) -> Result<Self> {
        let rum = model.is_rum();
        let restriction = if model == Model::EuRum { Restriction::Eu } else { restriction };
        let default_book;
        let book = match book {
            Some(b) => Some(b),
            None if restriction != Restriction::All && universe.len() == 5 => {
                default_book = LotteryBook::experiment();
                Some(&default_book)
            }
            None => None,
        };
        let orders = order_set(universe, restriction, rum, book)?;
        let b = build_b(&orders, universe, rum);
        let stacked = if blocks == 1 {
            b
        } else {
            let r = b.nrows();
            let mut s = nalgebra::DMatrix::zeros(r * blocks, b.ncols());
            for k in 0..blocks {
                s.view_mut((k * r, 0), (r, b.ncols())).copy_from(&b);
            }
            s
        };
        let d_m = if rum { 0 } else { consideration_coordinate_count(universe) * blocks };
        Ok(Self {
            model,
            universe: universe.clone(),
            orders,
            matrices: build_g(stacked, d_m),
            blocks,
            laplace: None,
        })
    }

    pub fn with_laplace(mut self, kappa: Option<f64>) -> Self {
        self.laplace = kappa;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrices.rows()
    }

    fn rule_of(&self, data: &EmpiricalChoiceRule) -> CompleteChoiceRule {
        match self.laplace {
            Some(k) if k > 0.0 => data.smoothed_rule(k),
            _ => data.rule(),
        }
    }

    /// `ĝ` from one rule per block.
    pub fn g(&self, data: &[EmpiricalChoiceRule]) -> Result<Vec<f64>> {
        let rules: Vec<CompleteChoiceRule> = data.iter().map(|d| self.rule_of(d)).collect();
        self.g_from_rules(&rules)
    }

    pub fn g_from_rules(&self, rules: &[CompleteChoiceRule]) -> Result<Vec<f64>> {
        if rules.len() != self.blocks {
            return Err(Error::DimensionMismatch(format!("{} rules for {} blocks", rules.len(), self.blocks)));
        }
        let mut head = Vec::with_capacity(self.dim());
        let mut tail = Vec::new();
        for p in rules {
            if p.universe() != &self.universe {
                return Err(Error::TreatmentMismatch("rule universe differs from the test universe".into()));
            }
            match self.model.link() {
                None => head.extend(choice_vector(p, true)),
                Some(link) => {
                    let m = calibrate_m(p, link)?;
                    let pf = calibrate_full_consideration(p, &m)?;
                    head.extend_from_slice(pf.as_vector());
                    tail.extend_from_slice(m.as_vector());
                }
            }
        }
        head.extend(tail);
        Ok(head)
    }

    /// Well-definedness of the calibrated consideration rule per block.
    pub fn precheck(&self, data: &[EmpiricalChoiceRule]) -> Vec<WellDefinedness> {
        let Some(link) = self.model.link() else { return Vec::new() };
        data.iter()
            .filter_map(|d| calibrate_m(&self.rule_of(d), link).ok().map(|m| well_defined(&m, link)))
            .collect()
    }
}

/// Choice probabilities in canonical coordinate order.
pub fn choice_vector(p: &CompleteChoiceRule, include_default: bool) -> Vec<f64> {
    let ix = SubsetIndexer::new(p.universe(), include_default);
    (0..ix.choice_len())
        .map(|i| {
            let (a, menu) = ix.choice_coordinate(i);
            p.prob(a, menu)
        })
        .collect()
}

/// `ĝ` and `G` for a single rule.
pub fn assemble_g(
    p: &CompleteChoiceRule,
    model: Model,
    restriction: Restriction,
    book: Option<&LotteryBook>,
) -> Result<(Vec<f64>, ConeMatrices)> {
    let asm = Assembler::new(p.universe(), model, restriction, book, 1)?;
    let g = asm.g_from_rules(std::slice::from_ref(p))?;
    Ok((g, asm.matrices))
}

/// Variance estimate per coordinate with the count of replications that
/// failed to calibrate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OmegaEstimate {
    /// `n · var` per coordinate.
    pub diagonal: Vec<f64>,
    pub used: usize,
    pub failed: usize,
}

/// `Ω̂_ii = n · var(ĝ*_i)` over a stratified bootstrap of the data.
pub fn estimate_omega(
    asm: &Assembler,
    data: &[EmpiricalChoiceRule],
    replications: usize,
    seed: u64,
    path: &[u64],
) -> Result<OmegaEstimate> {
    let n: u64 = data.iter().map(|d| d.total()).sum();
    let dim = asm.dim();
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    let mut used = 0usize;
    let mut failed = 0usize;
    for r in 0..replications {
        let mut p = path.to_vec();
        p.push(r as u64);
        let mut rng = rng::stream(seed, &p);
        let resampled: Vec<EmpiricalChoiceRule> = data.iter().map(|d| d.resample_with(&mut rng)).collect();
        match asm.g(&resampled) {
            Ok(g) => {
                used += 1;
                // Welford
                for i in 0..dim {
                    let delta = g[i] - mean[i];
                    mean[i] += delta / used as f64;
                    m2[i] += delta * (g[i] - mean[i]);
                }
            }
            Err(e) if is_calibration_failure(&e) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if used < 2 {
        return Err(Error::DivisionByDefaultZero(format!(
            "only {used} of {replications} variance replications calibrated"
        )));
    }
    let diagonal = m2.iter().map(|s| n as f64 * s / (used - 1) as f64).collect();
    Ok(OmegaEstimate { diagonal, used, failed })
}

fn is_calibration_failure(e: &Error) -> bool {
    matches!(e, Error::DivisionByDefaultZero(_) | Error::ZeroFullConsiderationMass(_))
}

/// Bound `τ/H` on every coordinate of `v`, `H` the number of orders.
pub fn tightened_bound(tau: f64, matrices: &ConeMatrices) -> f64 {
    tau / matrices.preference.ncols().max(1) as f64
}

/// `n · min_{v ≥ τ/H} (ĝ − Gv)ᵀ Ω̂⁻ (ĝ − Gv)` and the solution. The sample
/// statistic uses `τ = 0`; the bootstrap uses the tightened cone.
pub fn test_statistic(
    g: &[f64],
    matrices: &ConeMatrices,
    omega: &[f64],
    tau: f64,
    n: u64,
) -> Result<(f64, ConeSolution)> {
    let weights = generalized_inverse_weights(omega);
    let lb = tightened_bound(tau, matrices);
    let problem = ConeProblem::new(g.to_vec(), matrices.clone(), weights, lb)?;
    let sol = solve_cone(&problem, DEFAULT_TOL, default_max_iter(matrices.cols()))?;
    Ok((n as f64 * sol.objective, sol))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestReport {
    pub model: Model,
    pub restriction: Restriction,
    pub treatments: Vec<String>,
    /// Distance to the untightened cone, `n`-scaled.
    pub statistic: f64,
    pub p_value: f64,
    pub bootstrap_statistics: Vec<f64>,
    pub tau: f64,
    /// Bound on `v` in the bootstrap cone.
    pub lower_bound: f64,
    pub n: u64,
    pub min_menu_n: u64,
    pub orders: usize,
    pub moment_dim: usize,
    pub zero_weight_coordinates: usize,
    pub replications: usize,
    pub failed_replications: usize,
    pub variance_replications: usize,
    pub inner_variance_replications: usize,
    pub unreliable: bool,
    pub seed: u64,
    pub well_definedness: Vec<WellDefinedness>,
    pub solver: SolverDiagnostics,
}

impl TestReport {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Add-one bootstrap p-value.
pub fn add_one_pvalue(statistic: f64, bootstrap: &[f64]) -> f64 {
    let exceed = bootstrap.iter().filter(|&&t| t >= statistic).count();
    (1 + exceed) as f64 / (1 + bootstrap.len()) as f64
}

/// Runs the full bootstrap test with an explicit assembler; `data` holds one
/// rule per block.
pub fn run_test(asm: &Assembler, data: &[EmpiricalChoiceRule], spec: &TestSpec) -> Result<TestReport> {
    spec.validate()?;
    let n: u64 = data.iter().map(|d| d.total()).sum();
    let min_menu_n = data.iter().map(|d| d.min_menu_total()).min().unwrap_or(0);
    let g = asm.g(data)?;
    let omega = estimate_omega(asm, data, spec.variance_replications, spec.seed, &[tag::VARIANCE])?;
    let tau = spec.tau.value(min_menu_n);
    let (t_n, sol) = test_statistic(&g, &asm.matrices, &omega.diagonal, 0.0, n)?;
    let zero_weight = omega.diagonal.iter().filter(|&&s| s < crate::qp::ZERO_VARIANCE).count();
    // recenter on the projection onto the tightened cone
    let (_, tight) = test_statistic(&g, &asm.matrices, &omega.diagonal, tau, n)?;
    let center: Vec<f64> = tight.fitted.iter().zip(&g).map(|(eta, g)| eta - g).collect();

    let outcomes: Vec<Result<Option<f64>>> = (0..spec.replications)
        .into_par_iter()
        .map(|l| {
            let mut rng = rng::stream(spec.seed, &[tag::BOOTSTRAP, l as u64]);
            let resampled: Vec<EmpiricalChoiceRule> = data.iter().map(|d| d.resample_with(&mut rng)).collect();
            let raw = match asm.g(&resampled) {
                Ok(g) => g,
                Err(e) if is_calibration_failure(&e) => return Ok(None),
                Err(e) => return Err(e),
            };
            let om = match estimate_omega(
                asm,
                &resampled,
                spec.inner_variance_replications,
                spec.seed,
                &[tag::BOOTSTRAP_VARIANCE, l as u64],
            ) {
                Ok(o) => o,
                Err(e) if is_calibration_failure(&e) => return Ok(None),
                Err(e) => return Err(e),
            };
            let recentered: Vec<f64> = raw.iter().zip(&center).map(|(r, c)| r + c).collect();
            let (t, _) = test_statistic(&recentered, &asm.matrices, &om.diagonal, tau, n)?;
            Ok(Some(t))
        })
        .collect();
    let mut boot = Vec::with_capacity(spec.replications);
    let mut failed = 0;
    for o in outcomes {
        match o? {
            Some(t) => boot.push(t),
            None => failed += 1,
        }
    }
    Ok(TestReport {
        model: asm.model,
        restriction: asm.orders.restriction,
        treatments: data.iter().map(|d| d.treatment().to_string()).collect(),
        statistic: t_n,
        p_value: add_one_pvalue(t_n, &boot),
        bootstrap_statistics: boot,
        tau,
        lower_bound: tightened_bound(tau, &asm.matrices),
        n,
        min_menu_n,
        orders: asm.orders.len(),
        moment_dim: asm.dim(),
        zero_weight_coordinates: zero_weight,
        replications: spec.replications,
        failed_replications: failed,
        variance_replications: spec.variance_replications,
        inner_variance_replications: spec.inner_variance_replications,
        unreliable: failed as f64 > UNRELIABLE_FAILURE_SHARE * spec.replications as f64,
        seed: spec.seed,
        well_definedness: asm.precheck(data),
        solver: SolverDiagnostics { objective: sol.objective, kkt_residual: sol.kkt_residual, iterations: sol.iterations },
    })
}

/// Single-treatment test.
pub fn bootstrap_pvalue(spec: &TestSpec, data: &EmpiricalChoiceRule, book: Option<&LotteryBook>) -> Result<TestReport> {
    let asm = Assembler::new(data.universe(), spec.model, spec.restriction, book, 1)?.with_laplace(spec.laplace);
    run_test(&asm, std::slice::from_ref(data), spec)
}

/// One preference distribution shared by every treatment, each with its own
/// consideration rule.
pub fn joint_stability_test(
    spec: &TestSpec,
    data: &[EmpiricalChoiceRule],
    book: Option<&LotteryBook>,
) -> Result<TestReport> {
    let first = data.first().ok_or_else(|| Error::TreatmentMismatch("no treatments given".into()))?;
    if data.iter().any(|d| d.universe() != first.universe()) {
        return Err(Error::TreatmentMismatch("treatments use different universes".into()));
    }
    let asm = Assembler::new(first.universe(), spec.model, spec.restriction, book, data.len())?.with_laplace(spec.laplace);
    run_test(&asm, data, spec)
}

/// Pools counts across treatments and tests the pooled rule.
pub fn pooled_test(spec: &TestSpec, data: &[EmpiricalChoiceRule], book: Option<&LotteryBook>) -> Result<TestReport> {
    let pooled = EmpiricalChoiceRule::pool(data)?;
    bootstrap_pvalue(spec, &pooled, book)
}
