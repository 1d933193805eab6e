use proptest::prelude::*;

use qadapt::corpus::{generate_synthetic, SynthDomainSpec};
use qadapt::harness::{
    adaptation_curve, aggregate, cross_domain_grid, weighted_adaptation, Cell, Domain, ExperimentKind, ModelSettings,
    WeightedSetup,
};
use qadapt::model::QaModel;
use qadapt::trainer::{train, SubsetPlan, TrainConfig};
use qadapt::{Corpus, Error};

fn synth(manual: bool, name: &str, n: usize, seed: u64) -> Corpus {
    let mut s = if manual {
        SynthDomainSpec::manual_like(n, seed)
    } else {
        SynthDomainSpec::general_like(n, seed)
    };
    s.name = name.into();
    s.context_sentences = (2, 3);
    generate_synthetic(&s).unwrap()
}

fn settings() -> ModelSettings {
    ModelSettings {
        d_model: 8,
        n_layers: 1,
        n_heads: 1,
        ffn_dim: 16,
        ..ModelSettings::default()
    }
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::default()
    }
}

fn plan() -> SubsetPlan {
    SubsetPlan {
        fractions: vec![10.0, 50.0],
        n_draws: 3,
        master_seed: 5,
    }
}

struct Fixture {
    source: Corpus,
    target: Corpus,
    test: Corpus,
    base: QaModel,
}

fn fixture() -> Fixture {
    let source = synth(false, "src", 80, 1);
    let target = synth(true, "tgt", 60, 2);
    let test = synth(true, "tgt-test", 30, 3);
    let cfg = settings().config_for([&source, &target]);
    let (base, _) = train(QaModel::init(cfg).unwrap(), &source, &quick(), None).unwrap();
    Fixture {
        source,
        target,
        test,
        base,
    }
}

#[test]
fn fraction_zero_cell_is_a_plain_evaluation() {
    let f = fixture();
    let r = adaptation_curve(&f.base, &f.target, &f.test, &plan(), &quick(), None).unwrap();
    assert_eq!(r.kind, ExperimentKind::Curve);
    let standalone = f.base.evaluate(&f.test).unwrap();
    let cell = &r.cells[0];
    assert_eq!((cell.train_spec.as_str(), cell.fraction), ("base", Some(0.0)));
    assert_eq!(cell.f1, standalone.f1);
    assert_eq!(cell.em, Some(standalone.exact_match));
    assert_eq!(r.cells.len(), 1 + 2 * 3);
    assert!(r.cells.iter().all(|c| (0.0..=1.0).contains(&c.f1)));
}

#[test]
fn reruns_are_bit_identical() {
    let f = fixture();
    let a = adaptation_curve(&f.base, &f.target, &f.test, &plan(), &quick(), Some(&quick())).unwrap();
    let b = adaptation_curve(&f.base, &f.target, &f.test, &plan(), &quick(), Some(&quick())).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.series("scratch").len(), 2);
}

#[test]
fn overlapping_test_split_is_rejected() {
    let f = fixture();
    let leaky = f.target.select("tgt-test", &[0, 1, 2]);
    let err = adaptation_curve(&f.base, &f.target, &leaky, &plan(), &quick(), None).unwrap_err();
    assert!(matches!(err, Error::Experiment(_)), "{err}");
}

#[test]
fn weighted_curve_shares_seeds_with_the_unweighted_one() {
    let f = fixture();
    let model = settings().config_for([&f.source, &f.target]);
    let setup = WeightedSetup {
        source_train: &f.source,
        target_train: &f.target,
        target_test: &f.test,
        plan: &plan(),
        model: &model,
        base_config: &quick(),
        ft_config: &quick(),
        cap: 10.0,
    };
    let r = weighted_adaptation(&setup, Some(&f.base)).unwrap();
    let trained_here = weighted_adaptation(&setup, None).unwrap();
    assert_eq!(r, trained_here);
    for spec in ["weighted_base", "weighted_finetune", "unweighted_finetune"] {
        assert_eq!(r.cells.iter().filter(|c| c.train_spec == spec).count(), 6, "{spec}");
    }
    let curve = adaptation_curve(&f.base, &f.target, &f.test, &plan(), &quick(), None).unwrap();
    assert_eq!(r.series("unweighted_finetune"), curve.series("finetune"));
}

#[test]
fn degenerate_target_sample_is_recorded_not_fatal() {
    let f = fixture();
    // A single-pair draw cannot produce a length histogram.
    let tiny_plan = SubsetPlan {
        fractions: vec![2.0, 50.0],
        n_draws: 1,
        master_seed: 1,
    };
    let model = settings().config_for([&f.source, &f.target]);
    let setup = WeightedSetup {
        source_train: &f.source,
        target_train: &f.target,
        target_test: &f.test,
        plan: &tiny_plan,
        model: &model,
        base_config: &quick(),
        ft_config: &quick(),
        cap: 10.0,
    };
    let r = weighted_adaptation(&setup, Some(&f.base)).unwrap();
    assert_eq!(r.failures.len(), 1);
    assert_eq!(r.failures[0].fraction, Some(2.0));
    assert_eq!(r.series("weighted_base"), vec![(50.0, r.mean_f1("weighted_base", Some(50.0)).unwrap())]);
}

#[test]
fn grid_has_a_union_row() {
    let domains = vec![
        Domain {
            name: "a".into(),
            train: synth(false, "a", 40, 1),
            test: synth(false, "a-test", 20, 2),
        },
        Domain {
            name: "b".into(),
            train: synth(true, "b", 40, 3),
            test: synth(true, "b-test", 20, 4),
        },
    ];
    let r = cross_domain_grid(&domains, &settings(), &quick(), 0).unwrap();
    assert_eq!(r.cells.len(), 3 * 2);
    assert!(r.grid_f1("a+b", "b-test").is_some());
    assert!(cross_domain_grid(&domains[..1], &settings(), &quick(), 0).is_err());
}

fn cells_strategy() -> impl Strategy<Value = Vec<Cell>> {
    prop::collection::vec((0usize..3, 0usize..3, 0.0f64..1.0), 1..30).prop_map(|raw| {
        let mut seen = std::collections::HashSet::new();
        raw.into_iter()
            .filter(|(s, d, _)| seen.insert((*s, *d)))
            .map(|(s, d, f1)| Cell {
                train_spec: "finetune".into(),
                test_corpus: "t".into(),
                fraction: Some([1.0, 5.0, 10.0][s]),
                draw: Some(d),
                seed: 0,
                f1,
                em: Some(f1 / 3.0),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn aggregates_ignore_draw_order(cells in cells_strategy(), rot in 0usize..30) {
        let mut permuted = cells.clone();
        permuted.reverse();
        let k = rot % permuted.len();
        permuted.rotate_left(k);
        let mut a = aggregate(&cells);
        let mut b = aggregate(&permuted);
        let key = |x: &qadapt::harness::Aggregate| x.fraction.unwrap().to_bits();
        a.sort_by_key(key);
        b.sort_by_key(key);
        prop_assert_eq!(a, b);
    }
}
