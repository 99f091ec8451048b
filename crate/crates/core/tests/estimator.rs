//! The attention estimator against constant-turn-rate ground truth.

use bevflow::flow::{estimate_pose, estimate_pose_cv, train_estimator, EstimatorParams, TrainConfig, TrainingSample};
use bevflow::scene_sim::ObjectState;
use bevflow::tracker::{TrackState, Tracklet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn turning(rng: &mut ChaCha8Rng, speed: f64, yaw_rate: f64, ahead: f64) -> TrainingSample {
    let start = ObjectState {
        id: 0,
        x: rng.random_range(-20.0..20.0),
        y: rng.random_range(-20.0..20.0),
        heading: rng.random_range(-3.1..3.1),
        speed,
        yaw_rate,
        length: 4.5,
        width: 1.9,
    };
    let mut t = 0.0;
    let mut states = Vec::new();
    for _ in 0..3 {
        let o = start.advanced(t);
        states.push(TrackState { timestamp: t, x: o.x, y: o.y, heading: o.heading });
        t += rng.random_range(0.1..0.3);
    }
    let last = states.last().unwrap().timestamp;
    let target = start.advanced(last + ahead);
    TrainingSample {
        tracklet: Tracklet::from_states(0, states, (4.5, 1.9)).unwrap(),
        t_query: last + ahead,
        target_x: target.x,
        target_y: target.y,
        target_heading: target.heading,
    }
}

fn train(rng: &mut ChaCha8Rng) -> EstimatorParams {
    let samples: Vec<_> = (0..1500)
        .map(|_| {
            let speed = rng.random_range(0.0..20.0);
            let yaw = rng.random_range(-0.5..0.5);
            let ahead = rng.random_range(0.0..0.6);
            turning(rng, speed, yaw, ahead)
        })
        .collect();
    let cfg = TrainConfig { epochs: 400, ..TrainConfig::default() };
    let trained = train_estimator(&samples, &cfg).unwrap();
    assert!(trained.final_loss < trained.initial_loss);
    trained.params
}

#[test]
fn trained_estimator_beats_constant_velocity_on_turns() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = train(&mut rng);
    let (mut mha, mut cv) = (0.0, 0.0);
    let n = 500;
    for i in 0..n {
        let yaw = if i % 2 == 0 { 0.3 } else { -0.3 };
        let s = turning(&mut rng, 10.0, yaw, 0.3);
        let err = |x: f64, y: f64| (x - s.target_x).hypot(y - s.target_y);
        let p = estimate_pose(&s.tracklet, s.t_query, &params).unwrap();
        let c = estimate_pose_cv(&s.tracklet, s.t_query).unwrap();
        mha += err(p.x, p.y);
        cv += err(c.x, c.y);
    }
    let (mha, cv) = (mha / n as f64, cv / n as f64);
    assert!(mha < cv, "mean error attention {mha:.4} m vs constant velocity {cv:.4} m");
}

#[test]
fn saved_parameters_predict_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let samples: Vec<_> = (0..50).map(|_| turning(&mut rng, 8.0, 0.2, 0.2)).collect();
    let params = train_estimator(&samples, &TrainConfig { epochs: 5, ..TrainConfig::default() }).unwrap().params;
    let path = std::env::temp_dir().join(format!("bevflow-estimator-{}.bin", std::process::id()));
    params.save(&path).unwrap();
    let loaded = EstimatorParams::load(&path).unwrap();
    assert_eq!(loaded, params);
    let s = &samples[0];
    assert_eq!(
        estimate_pose(&s.tracklet, s.t_query, &params).unwrap(),
        estimate_pose(&s.tracklet, s.t_query, &loaded).unwrap()
    );
    let _ = std::fs::remove_file(path);
}
