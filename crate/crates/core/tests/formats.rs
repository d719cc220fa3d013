use std::path::Path;

use proptest::prelude::*;

use vimu::fusion::VimuSample;
use vimu::geometry::Vec3;
use vimu::imu_model::ImuSample;
use vimu::io::{
    group_by_imu, interleave, load_rig, load_scenario, parse_rig_str, parse_stream_str, parse_vimu_str, read_vimu,
    rig_to_string, save_rig, scenario_to_string, stream_to_string, validate_rig, write_vimu, IoError, StreamRecord,
};
use vimu::scenario::{RigPreset, Scenario};

const RIG: &str = r#"
target = [0.1, 0.0, 0.0]

[[imu]]
id = 3
quaternion_wxyz = [0.7071067811865476, 0.0, 0.0, 0.7071067811865476]
position = [1.0, 0.0, 0.0]

[[imu]]
id = 7
rotation = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
position = [-1.0, 0.0, 0.0]
noise = { sigma_g = 0.002, sigma_a = 0.03, sigma_bg = 1e-5, sigma_ba = 2e-4, rate_hz = 200.0 }
"#;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, -1e-6..1e-6f64, Just(0.0)]
}

fn v3() -> impl Strategy<Value = Vec3> {
    (finite(), finite(), finite()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

#[test]
fn validated_rig_survives_save_and_load() {
    let rig = validate_rig(&parse_rig_str(RIG, Path::new("rig.toml")).unwrap(), Path::new("rig.toml")).unwrap();
    assert_eq!(rig.ids, vec![3, 7]);
    assert!((rig.extrinsics[0].position - Vec3::new(0.9, 0.0, 0.0)).norm() < 1e-15);
    assert_eq!(rig.noise[1].rate_hz, 200.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rig.toml");
    save_rig(&path, &rig.to_file()).unwrap();
    let back = load_rig(&path).unwrap();
    assert_eq!(back.ids, rig.ids);
    assert_eq!(back.noise, rig.noise);
    assert_eq!(back.target, rig.target);
    for (a, b) in back.extrinsics.iter().zip(&rig.extrinsics) {
        assert!((a.position - b.position).norm() < 1e-15);
        assert!(a.rotation.angle_to(&b.rotation) < 1e-12);
    }
    // Text form is stable after one pass.
    let once = rig_to_string(&rig.to_file());
    let twice = rig_to_string(&validate_rig(&parse_rig_str(&once, &path).unwrap(), &path).unwrap().to_file());
    assert_eq!(once, twice);
}

#[test]
fn unknown_rig_keys_are_rejected_with_position() {
    let text = RIG.replace("position = [-1.0", "positon = [-1.0");
    match parse_rig_str(&text, Path::new("bad.toml")) {
        Err(IoError::Parse { line, .. }) => assert!(line > 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn scenario_round_trips_through_a_file() {
    let mut s = Scenario::default();
    s.imu_rate_hz = 250.0;
    s.layout.asym_perturbation = 0.25;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, scenario_to_string(&s)).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), s);
}

#[test]
fn simulated_streams_round_trip_bit_exact() {
    let scenario = Scenario {
        trajectory: vimu::sim::TrajectorySpec {
            duration_s: 2.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let gt = scenario.ground_truth().unwrap();
    let rig: Vec<_> = scenario.rig(RigPreset::A4, 9).into_iter().map(|(_, r)| r).collect();
    let synth = vimu::sim::synth_multi_imu(&gt, &rig, 9).unwrap();
    let ids = RigPreset::A4.imu_ids();
    let streams: Vec<(u32, &[ImuSample])> = ids.iter().copied().zip(synth.streams.iter().map(|s| s.as_slice())).collect();
    let text = stream_to_string(&interleave(&streams));
    let grouped = group_by_imu(&parse_stream_str(&text, Path::new("s.csv")).unwrap());
    for (id, s) in streams {
        assert_eq!(grouped[&id].as_slice(), s);
    }
}

proptest! {
    #[test]
    fn stream_text_round_trips(rows in prop::collection::vec((0u32..20, v3(), v3()), 0..40)) {
        let records: Vec<StreamRecord> = rows
            .iter()
            .enumerate()
            .map(|(k, (id, g, a))| StreamRecord { imu_id: *id, sample: ImuSample { t: k as f64 * 0.01, gyro: *g, accel: *a } })
            .collect();
        let back = parse_stream_str(&stream_to_string(&records), Path::new("p.csv")).unwrap();
        prop_assert_eq!(back, records);
    }

    #[test]
    fn vimu_file_round_trips(rows in prop::collection::vec((v3(), v3()), 1..30)) {
        let samples: Vec<VimuSample> = rows
            .iter()
            .enumerate()
            .map(|(k, (g, a))| VimuSample { t: 1.5 + k as f64 / 3.0, gyro: *g, accel: *a })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vimu.csv");
        write_vimu(&path, &samples).unwrap();
        prop_assert_eq!(read_vimu(&path).unwrap(), samples.clone());
        let text = std::fs::read_to_string(&path).unwrap();
        prop_assert_eq!(parse_vimu_str(&text, &path).unwrap(), samples);
    }
}
