use cellsysid::experiment::ExperimentConfig;
use std::path::Path;

fn load(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let cfg = ExperimentConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn paper_config_matches_defaults() {
    let cfg = load("paper.toml");
    let default = ExperimentConfig::default();
    assert_eq!(cfg.to_toml().unwrap().replace("lambda = 0.025\n", ""), default.to_toml().unwrap());
    for (a, b) in cfg.models.iter().zip(&default.models) {
        assert_eq!(a.layer_lambdas(), b.layer_lambdas());
    }
}

#[test]
fn desk_config_is_valid() {
    let cfg = load("desk.toml");
    assert_eq!(cfg.data.train_series, vec![2, 10]);
    assert_eq!(cfg.train_pool_size(), 10);
}
