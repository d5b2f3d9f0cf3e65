use teki::{ExperimentConfig, Init, ModelKind};
use teki_core::FlowKind;

#[test]
fn defaults() {
    let c = ExperimentConfig::default();
    assert_eq!(c.ensemble_size, 100);
    assert_eq!(c.iterations, 23);
    assert_eq!((c.h0, c.delta, c.gamma, c.lambda), (0.02, 0.05, 0.01, 1.0));
    assert_eq!(c.grid_n, 100);
    assert_eq!(c.snapshot_iters, vec![1, 5, 11, 17, 23]);
    assert_eq!(c.prior_kmax, 32);
}

#[test]
fn parses_dotted_keys_and_comments() {
    let c = ExperimentConfig::parse(
        "# comment\ncase = 3\nmethod=eki\ninit=kl-basis\nmodel=darcy  # trailing\n\nprior.alpha=2.5\nprior.kmax=8\nensemble_size=20\nsnapshot_iters=2,4\nrecord_trajectory=true\n",
    )
    .unwrap();
    assert_eq!(c.case, 3);
    assert_eq!(c.method, FlowKind::Eki);
    assert_eq!(c.init, Init::KlBasis);
    assert_eq!(c.model, ModelKind::Darcy);
    assert_eq!(c.prior_alpha, 2.5);
    assert_eq!(c.prior_kmax, 8);
    assert_eq!(c.snapshot_iters, vec![2, 4]);
    assert!(c.record_trajectory);
}

#[test]
fn unknown_keys_and_bad_values_are_errors() {
    assert!(ExperimentConfig::parse("colour=blue\n").is_err());
    assert!(ExperimentConfig::parse("case=4\n").is_err());
    assert!(ExperimentConfig::parse("method=ekf\n").is_err());
    assert!(ExperimentConfig::parse("h0=-1\n").is_err());
    assert!(ExperimentConfig::parse("iterations\n").is_err());
    assert!(ExperimentConfig::parse("prior.alpha=0.9\n").is_err());
    assert!(ExperimentConfig::parse("init=kl-basis\nprior.kmax=2\nensemble_size=10\n").is_err());
}

#[test]
fn init_exponent_follows_method() {
    let mut c = ExperimentConfig::default();
    c.method = FlowKind::Eki;
    assert_eq!(c.init_exponent(), 0.5);
    c.method = FlowKind::Teki;
    assert_eq!(c.init_exponent(), 1.0);
    c.prior_a = Some(0.8);
    assert_eq!(c.init_exponent(), 0.8);
}

#[test]
fn truth_table() {
    let mut c = ExperimentConfig::default();
    let expected = [(1, (2.0, 0.5)), (2, (3.2, 0.5)), (3, (2.0, 1.0))];
    for (case, params) in expected {
        c.case = case;
        assert_eq!(c.truth_params(), params);
    }
}

#[test]
fn text_round_trip() {
    let mut c = ExperimentConfig::parse("case=2\nmethod=eki\nseed=77\nprior.a=0.6\n").unwrap();
    c.output_dir = "runs/a".into();
    let back = ExperimentConfig::parse(&c.to_text()).unwrap();
    assert_eq!(back, c);
}
