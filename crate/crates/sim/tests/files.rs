use amod_core::learner::{Agent, FeatureConfig, TrainConfig};
use amod_core::scenario::{generate_synthetic_scenario, random_scenario};
use amod_core::ControlMode;
use amod_sim::checkpoint::Checkpoint;
use amod_sim::metrics::{read_metrics_csv, write_metrics_csv, MetricsRow, METRIC_FIELDS};
use amod_sim::scenario_file::{load_scenario, write_scenario, PriceField, ScenarioFile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn scenario_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    for s in [generate_synthetic_scenario(6, 20, 1.3, 7).unwrap(), random_scenario(5, 8, 3)] {
        let path = dir.path().join("s.json");
        write_scenario(&path, &s).unwrap();
        let back = load_scenario(&path).unwrap();
        assert_eq!(back, s);
    }
}

#[test]
fn scenario_file_carries_units() {
    let s = generate_synthetic_scenario(4, 6, 1.0, 1).unwrap();
    let f = ScenarioFile::from_scenario(&s);
    let v = serde_json::to_value(&f).unwrap();
    assert_eq!(v["units"]["step_minutes"], 3);
    assert!(v["units"]["currency"].is_string());
    assert!(v["units"]["travel_time"].is_string());
    assert!(v["units"]["wage"].is_string());
}

#[test]
fn static_and_per_step_prices_agree() {
    let s = generate_synthetic_scenario(4, 5, 1.0, 2).unwrap();
    let f = ScenarioFile::from_scenario(&s);
    let PriceField::Static(m) = f.ref_price.clone() else {
        panic!("synthetic prices are static");
    };
    let mut g = f.clone();
    g.ref_price = PriceField::PerStep(
        m.iter()
            .map(|r| r.iter().map(|&p| vec![p; 5]).collect())
            .collect(),
    );
    let a = f.into_scenario().unwrap();
    let b = g.into_scenario().unwrap();
    for t in 0..5 {
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.price(i, j, t), b.price(i, j, t));
            }
        }
    }
}

#[test]
fn malformed_scenarios_are_rejected() {
    let s = generate_synthetic_scenario(4, 5, 1.0, 2).unwrap();
    let base = ScenarioFile::from_scenario(&s);

    let mut f = base.clone();
    f.ref_demand[1].pop();
    assert!(f.into_scenario().is_err());

    let mut f = base.clone();
    f.ref_demand[0][1].push(1.0);
    assert!(f.into_scenario().is_err());

    let mut f = base.clone();
    f.adjacency = vec![vec![false; 4]; 4];
    assert!(f.into_scenario().is_err());

    let mut f = base.clone();
    f.ref_demand[0][1][0] = -1.0;
    assert!(f.into_scenario().is_err());

    let mut v = serde_json::to_value(&base).unwrap();
    v["surprise"] = serde_json::json!(1);
    assert!(serde_json::from_value::<ScenarioFile>(v).is_err());
}

fn small_agent() -> Agent {
    let cfg = TrainConfig {
        hidden: 8,
        mode: ControlMode::Joint,
        ..TrainConfig::default()
    };
    Agent::new(4, cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
}

#[test]
fn checkpoint_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_agent();
    let features = FeatureConfig {
        observe_competitor_prices: false,
        ..FeatureConfig::default()
    };
    let ck = Checkpoint::new(1, 4, ControlMode::Pricing, 12, &features, &a.params);
    let path = dir.path().join("ck.json");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let p = back.params().unwrap();
    assert_eq!(p.actor.params, a.params.actor.params);
    assert_eq!(p.critic.params, a.params.critic.params);
    assert_eq!(back.features(), features);
    assert_eq!(back.mode().unwrap(), ControlMode::Pricing);
}

#[test]
fn bad_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_agent();
    let ck = Checkpoint::new(0, 4, ControlMode::Joint, 0, &FeatureConfig::default(), &a.params);
    let path = dir.path().join("ck.json");

    let mut bad = ck.clone();
    bad.version = 99;
    bad.save(&path).unwrap();
    assert!(Checkpoint::load(&path).is_err());

    let mut bad = ck.clone();
    bad.format = "something-else".into();
    bad.save(&path).unwrap();
    assert!(Checkpoint::load(&path).is_err());

    let mut bad = ck.clone();
    bad.actor.tensors[0].shape[1] += 1;
    assert!(bad.params().is_err());

    let mut bad = ck.clone();
    bad.critic.tensors[2].data.pop();
    assert!(bad.params().is_err());

    let mut bad = ck.clone();
    bad.actor.tensors.swap(0, 1);
    assert!(bad.params().is_err());

    std::fs::write(&path, "{ not json").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn metrics_csv_round_trips_with_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![
        MetricsRow {
            run: 0,
            operator: "0".into(),
            reward: 12.5,
            rebalancing_cost: 3.25,
            rebalance_trips: 4,
            served_demand: 9,
            assigned_demand: 11,
            pool_size: 20,
            expired: 2,
            mean_price_scalar: 0.55,
            mean_wait_minutes: 1.5,
            mean_queue_length: 0.75,
        },
        MetricsRow {
            run: 0,
            operator: "total".into(),
            reward: 12.5,
            rebalancing_cost: 3.25,
            rebalance_trips: 4,
            served_demand: 9,
            assigned_demand: 11,
            pool_size: 20,
            expired: 2,
            mean_price_scalar: 0.55,
            mean_wait_minutes: 1.5,
            mean_queue_length: 0.75,
        },
    ];
    let path = dir.path().join("metrics.csv");
    write_metrics_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..2], ["run", "operator"]);
    assert_eq!(&header[2..], METRIC_FIELDS);
    assert_eq!(read_metrics_csv(&path).unwrap(), rows);
}
