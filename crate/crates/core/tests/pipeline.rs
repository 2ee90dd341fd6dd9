//! Data in, report out: CSV round trips and tests on simulated populations
//! with known answers.

mod common;

use hrc::dataset::{read_observations, write_observations, CsvFormat, EmpiricalChoiceRule, POOLED};
use hrc::dataset::CompleteChoiceRule;
use hrc::hypothesis::{bootstrap_pvalue, joint_stability_test, pooled_test, test_statistic, Assembler, Model, TestSpec};
use hrc::linkfn::{hrc_forward, Link};
use hrc::orders::{enumerate_orders, filter_eu, LotteryBook, Restriction};
use hrc::rng;
use hrc::synth::{
    choice_overload_rule, population_rule, proportional_menu_sizes, sample_counts, sample_dataset, GeneratorSpec, Process,
};
use hrc::universe::ChoiceUniverse;

fn five() -> ChoiceUniverse {
    ChoiceUniverse::indexed(5).unwrap()
}

fn quick(model: Model, restriction: Restriction, seed: u64) -> TestSpec {
    let mut s = TestSpec::new(model, restriction);
    s.replications = 50;
    s.variance_replications = 60;
    s.inner_variance_replications = 20;
    s.seed = seed;
    s
}

/// LA population over the EU orders with a well-conditioned index.
fn la_rule(seed: u64) -> CompleteChoiceRule {
    let u = five();
    let eu = filter_eu(&enumerate_orders(&u, false).unwrap(), &LotteryBook::experiment()).unwrap();
    let mut r = rng::seeded(seed);
    let (m, _) = common::random_proper(&u, Link::La, &mut r);
    let pi = vec![0.1; 10];
    hrc_forward(&m, &eu, &pi).unwrap()
}

#[test]
fn csv_round_trip_keeps_counts() {
    let u = five();
    let rule = la_rule(1);
    let sizes = proportional_menu_sizes(&u, 3330);
    let mut obs = sample_dataset(&rule, &sizes, "high", 1);
    obs.extend(sample_dataset(&rule, &sizes, "low", 2));
    let mut buf = Vec::new();
    write_observations(&mut buf, &obs).unwrap();
    let ds = read_observations(buf.as_slice(), &CsvFormat { n_items: Some(5), treatments: None }).unwrap();
    assert_eq!(ds.observations, obs);
    assert_eq!(ds.treatments(), vec!["high".to_string(), "low".to_string()]);
    let high = ds.rule(Some("high")).unwrap();
    let pooled = ds.rule(None).unwrap();
    assert_eq!(high.total(), 3330);
    assert_eq!(pooled.total(), 6660);
    assert_eq!(pooled.treatment(), POOLED);
    for menu in 1..=31u32 {
        assert_eq!(high.menu_total(menu), sizes[menu as usize]);
    }
}

#[test]
fn csv_rejects_malformed_rows() {
    let bad = [
        "subject_id,treatment,menu,choice\n1,t,1,2\n",
        "subject_id,treatment,menu,choice\n1,t,,1\n",
        "subject_id,treatment\n1,t\n",
    ];
    for text in bad {
        assert!(read_observations(text.as_bytes(), &CsvFormat::default()).is_err(), "{text:?}");
    }
    let strict = CsvFormat { n_items: None, treatments: Some(vec!["high".into()]) };
    assert!(read_observations("subject_id,treatment,menu,choice\n1,low,1,1\n".as_bytes(), &strict).is_err());
}

#[test]
fn la_data_is_not_rejected() {
    let u = five();
    let mut r = rng::seeded(3);
    let data = sample_counts(&la_rule(3), &proportional_menu_sizes(&u, 20000), "sim", &mut r).unwrap();
    let report = bootstrap_pvalue(&quick(Model::Hrc(Link::La), Restriction::Eu, 3), &data, None).unwrap();
    assert!(report.p_value > 0.05, "p = {}", report.p_value);
    assert_eq!(report.orders, 10);
    assert_eq!(report.bootstrap_statistics.len() + report.failed_replications, 50);
}

#[test]
fn overload_data_is_rejected() {
    let u = five();
    let mut r = rng::seeded(4);
    let data = sample_counts(&choice_overload_rule(&u), &proportional_menu_sizes(&u, 4000), "sim", &mut r).unwrap();
    let report = bootstrap_pvalue(&quick(Model::Hrc(Link::La), Restriction::Eu, 4), &data, None).unwrap();
    assert!(report.p_value < 0.05, "p = {}", report.p_value);
}

#[test]
fn rum_data_is_not_rejected_by_rum() {
    let u = five();
    let orders = enumerate_orders(&u, true).unwrap();
    let mut r = rng::seeded(5);
    let picked: Vec<usize> = rand::seq::index::sample(&mut r, orders.len(), 20).into_vec();
    let spec = GeneratorSpec {
        process: Process::Rum,
        orders: hrc::orders::PreferenceOrderSet {
            orders: picked.iter().map(|&i| orders.orders[i].clone()).collect(),
            ..orders.clone()
        },
        pi: vec![0.05; 20],
    };
    let rule = population_rule(&u, &spec).unwrap();
    let data = sample_counts(&rule, &proportional_menu_sizes(&u, 8000), "sim", &mut r).unwrap();
    let report = bootstrap_pvalue(&quick(Model::Rum, Restriction::All, 5), &data, None).unwrap();
    assert!(report.p_value > 0.05, "p = {}", report.p_value);
    assert_eq!(report.orders, 720);
}

#[test]
fn stable_preferences_pass_the_joint_test() {
    let u = five();
    let sizes = proportional_menu_sizes(&u, 20000);
    let data: Vec<EmpiricalChoiceRule> = (0..2u64)
        .map(|t| {
            let mut r = rng::seeded(10 + t);
            let d = sample_counts(&la_rule(20 + t), &sizes, "sim", &mut r).unwrap();
            let counts = (0..32u32).flat_map(|m| (0..=5).map(move |a| (m, a))).map(|(m, a)| d.count(a, m)).collect();
            EmpiricalChoiceRule::from_counts(&u, format!("t{t}"), counts).unwrap()
        })
        .collect();
    let spec = quick(Model::Hrc(Link::La), Restriction::Eu, 6);
    let joint = joint_stability_test(&spec, &data, None).unwrap();
    assert_eq!(joint.treatments, vec!["t0".to_string(), "t1".to_string()]);
    assert_eq!(joint.moment_dim, 2 * 323);
    assert!(joint.p_value > 0.05, "p = {}", joint.p_value);
    let pooled = pooled_test(&spec, &data, None).unwrap();
    assert_eq!(pooled.n, 40000);
}

#[test]
fn fc_population_passes_the_size_setup() {
    let (rejections, _, p) = common::size_rejections(3, 30, 7);
    assert_eq!(p.len(), 3);
    assert!(rejections <= 1);
}

#[test]
fn single_replication_gives_half_or_one() {
    let u = five();
    let mut r = rng::seeded(8);
    let data = sample_counts(&la_rule(8), &proportional_menu_sizes(&u, 20000), "sim", &mut r).unwrap();
    let mut spec = quick(Model::Hrc(Link::La), Restriction::Eu, 8);
    spec.replications = 1;
    let p = bootstrap_pvalue(&spec, &data, None).unwrap().p_value;
    assert!(p == 0.5 || p == 1.0, "p = {p}");
}

fn unit_statistic(asm: &Assembler, rules: &[CompleteChoiceRule], tau: f64) -> f64 {
    let g = asm.g_from_rules(rules).unwrap();
    test_statistic(&g, &asm.matrices, &vec![1.0; g.len()], tau, 1).unwrap().0
}

#[test]
fn statistic_is_zero_on_the_model_and_grows_with_tau() {
    let u = five();
    let asm = Assembler::new(&u, Model::Hrc(Link::La), Restriction::Eu, None, 1).unwrap();
    assert!(unit_statistic(&asm, &[la_rule(9)], 0.0) < 1e-20);
    let mut r = rng::seeded(9);
    let noisy = sample_counts(&la_rule(9), &proportional_menu_sizes(&u, 20000), "sim", &mut r).unwrap().rule();
    let ts: Vec<f64> = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0].iter().map(|&t| unit_statistic(&asm, &[noisy.clone()], t)).collect();
    for w in ts.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "{ts:?}");
    }
    assert!(ts[5] > ts[0]);
}

#[test]
fn negative_consideration_mass_is_detected() {
    let u = five();
    let asm = Assembler::new(&u, Model::Hrc(Link::La), Restriction::Eu, None, 1).unwrap();
    let mut g = asm.g_from_rules(&[la_rule(12)]).unwrap();
    // the last coordinate is m_X(X); push it below zero and renormalize the rest of m_X
    let k = g.len() - 1;
    let shift = g[k] + 0.01;
    g[k] = -0.01;
    let others = k - 31..k;
    let rest: f64 = g[others.clone()].iter().sum();
    for i in others {
        g[i] *= (rest + shift) / rest;
    }
    let t = test_statistic(&g, &asm.matrices, &vec![1.0; g.len()], 0.0, 1).unwrap().0;
    assert!((t - 1e-4).abs() < 1e-12, "T = {t}");
}

/// The same population with item `i` renamed `perm[i]`.
fn relabel(p: &CompleteChoiceRule, perm: &[usize]) -> CompleteChoiceRule {
    let n = perm.len();
    let mut inverse = vec![0; n];
    for (i, &j) in perm.iter().enumerate() {
        inverse[j] = i;
    }
    let unmap = |mask: u32| (0..n).filter(|&i| mask >> i & 1 == 1).fold(0u32, |m, i| m | 1 << inverse[i]);
    CompleteChoiceRule::from_fn(p.universe(), |a, menu| if a == n { p.default_prob(unmap(menu)) } else { p.prob(inverse[a], unmap(menu)) })
}

#[test]
fn statistic_is_invariant_to_relabeling() {
    let u = five();
    let mut r = rng::seeded(13);
    let noisy = sample_counts(&la_rule(13), &proportional_menu_sizes(&u, 20000), "sim", &mut r).unwrap().rule();
    let asm = Assembler::new(&u, Model::Hrc(Link::La), Restriction::All, None, 1).unwrap();
    let base = unit_statistic(&asm, &[noisy.clone()], 0.05);
    for perm in [[1, 0, 2, 3, 4], [4, 3, 2, 1, 0], [2, 4, 1, 0, 3]] {
        let t = unit_statistic(&asm, &[relabel(&noisy, &perm)], 0.05);
        assert!((t - base).abs() <= 1e-9 * base.max(1.0), "{perm:?}: {t} vs {base}");
    }
}

#[test]
fn joint_statistic_separates_shared_and_distinct_preferences() {
    let u = five();
    let eu = filter_eu(&enumerate_orders(&u, false).unwrap(), &LotteryBook::experiment()).unwrap();
    let asm = Assembler::new(&u, Model::Hrc(Link::La), Restriction::Eu, None, 2).unwrap();
    let rule = |seed: u64, pi: &[f64]| {
        let (m, _) = common::random_proper(&u, Link::La, &mut rng::seeded(seed));
        hrc_forward(&m, &eu, pi).unwrap()
    };
    let mut first = vec![0.0; 10];
    first[0] = 1.0;
    let mut second = vec![0.0; 10];
    second[9] = 1.0;
    let same = unit_statistic(&asm, &[rule(1, &first), rule(2, &first)], 0.0);
    let distinct = unit_statistic(&asm, &[rule(1, &first), rule(2, &second)], 0.0);
    assert!(same < 1e-20);
    assert!(distinct > 0.1, "T = {distinct}");
}
