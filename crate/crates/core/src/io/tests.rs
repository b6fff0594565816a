use super::*;
use crate::camera::CameraRig;
use crate::model::BodyModel;
use crate::objectives::Setting;
use crate::pipeline::{fit_sequence, FitSettings};
use crate::synth::{generate, NoiseSpec, SynthCapture, SynthSpec};
use proptest::prelude::*;
use std::sync::OnceLock;
use tempfile::tempdir;

fn capture() -> &'static SynthCapture {
    static CAP: OnceLock<SynthCapture> = OnceLock::new();
    CAP.get_or_init(|| {
        generate(&SynthSpec {
            frames: 4,
            cameras: 2,
            image_size: (96, 72),
            focal: 60.0,
            noise: NoiseSpec::default(),
            ..SynthSpec::default()
        })
        .unwrap()
    })
}

#[test]
fn sequence_directory_round_trips() {
    let cap = capture();
    let dir = tempdir().unwrap();
    save_sequence(dir.path(), &cap.sequence, Some(Setting::MvRgbd)).unwrap();
    let (seq, meta) = load_sequence(dir.path()).unwrap();
    assert_eq!(seq, cap.sequence);
    assert_eq!(meta.frames, 4);
    assert_eq!(meta.setting, Some(Setting::MvRgbd));
    assert!(view_dir(dir.path(), &seq.rig.cameras[1].id).join("depth").join(frame_file(3)).is_file());
}

#[test]
fn missing_frames_are_listed() {
    let cap = capture();
    let dir = tempdir().unwrap();
    save_sequence(dir.path(), &cap.sequence, None).unwrap();
    let id0 = &cap.sequence.rig.cameras[0].id;
    let id1 = &cap.sequence.rig.cameras[1].id;
    std::fs::remove_file(view_dir(dir.path(), id0).join("mask").join(frame_file(2))).unwrap();
    std::fs::remove_file(view_dir(dir.path(), id1).join("depth").join(frame_file(0))).unwrap();
    let msg = load_sequence(dir.path()).unwrap_err().to_string();
    assert!(msg.contains(&format!("view_{id0}/mask/000002.png")), "{msg}");
    assert!(msg.contains(&format!("view_{id1}/depth/000000.png")), "{msg}");
    assert!(msg.contains("2 item(s)"), "{msg}");
}

#[test]
fn extra_frames_name_the_view() {
    let cap = capture();
    let dir = tempdir().unwrap();
    save_sequence(dir.path(), &cap.sequence, None).unwrap();
    let id = &cap.sequence.rig.cameras[1].id;
    let masks = view_dir(dir.path(), id).join("mask");
    std::fs::copy(masks.join(frame_file(0)), masks.join(frame_file(4))).unwrap();
    let msg = load_sequence(dir.path()).unwrap_err().to_string();
    assert!(msg.contains(&format!("view `{id}`")), "{msg}");
}

#[test]
fn schema_errors_name_file_and_field() {
    let cap = capture();
    let dir = tempdir().unwrap();
    save_sequence(dir.path(), &cap.sequence, None).unwrap();
    let path = dir.path().join("cameras.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["cameras"][1]["fx"] = serde_json::json!("wide");
    std::fs::write(&path, v.to_string()).unwrap();
    match load_sequence(dir.path()) {
        Err(Error::Schema { file, field, .. }) => {
            assert!(file.ends_with("cameras.json"));
            assert_eq!(field, "cameras[1].fx");
        }
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, "{ not json").unwrap();
    assert!(matches!(load_sequence(dir.path()), Err(Error::Json { .. })));
    std::fs::write(dir.path().join("meta.json"), r#"{"frames": 4}"#).unwrap();
    assert!(matches!(read_json::<SequenceMeta>(&dir.path().join("meta.json")), Err(Error::Schema { .. })));
}

#[test]
fn bad_mask_values_are_rejected() {
    let cap = capture();
    let dir = tempdir().unwrap();
    save_sequence(dir.path(), &cap.sequence, None).unwrap();
    let cam = &cap.sequence.rig.cameras[0];
    let path = view_dir(dir.path(), &cam.id).join("mask").join(frame_file(1));
    image::GrayImage::from_pixel(cam.width, cam.height, image::Luma([128])).save(&path).unwrap();
    assert!(matches!(load_sequence(dir.path()), Err(Error::Image { .. })));
    image::GrayImage::from_pixel(3, 3, image::Luma([0])).save(&path).unwrap();
    assert!(matches!(load_sequence(dir.path()), Err(Error::Image { .. })));
}

#[test]
fn assets_and_solutions_round_trip_exactly() {
    let cap = capture();
    let dir = tempdir().unwrap();
    let p = dir.path().join("assets.json");
    save_assets(&p, &cap.model.assets).unwrap();
    assert_eq!(load_assets(&p).unwrap(), cap.model.assets);

    let model = BodyModel::new(cap.model.assets.clone()).unwrap();
    let mut s = FitSettings::for_setting(Setting::MvRgb);
    s.multipliers = Some([1, 1, 1]);
    s.sampling.samples = 200;
    let sol = fit_sequence(&model, &cap.sequence, &s).unwrap();
    let p = dir.path().join("out/solution.json");
    save_solution(&p, &sol).unwrap();
    let back = load_solution(&p).unwrap();
    assert_eq!(back, sol);
    back.validate(&model).unwrap();

    let csv = joints_csv(&model, &sol);
    assert_eq!(csv.lines().count(), 1 + sol.len() * model.joint_count());
    let logs = stage_logs_csv(&sol.logs);
    let steps: usize = sol.logs.iter().map(|l| l.loss.len()).sum();
    assert_eq!(logs.lines().count(), 1 + steps);
    let files = write_mesh_sequence(&dir.path().join("meshes"), &model, &sol).unwrap();
    assert_eq!(files.len(), sol.len());
    let obj = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), model.vertex_count());
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), model.assets.faces.len());
}

#[test]
fn obj_faces_are_one_based() {
    let s = obj_string(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.5, 0.0]], &[[0, 1, 2]]);
    assert_eq!(s, "v 0 0 0\nv 1 0 0\nv 0 1.5 0\nf 1 2 3\n");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn camera_json_is_bit_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 17)) {
        let cam = crate::camera::Camera {
            id: "c".into(),
            fx: vals[0],
            fy: vals[1],
            cx: vals[2],
            cy: vals[3],
            width: 640,
            height: 480,
            rotation: [[vals[4], vals[5], vals[6]], [vals[7], vals[8], vals[9]], [vals[10], vals[11], vals[12]]],
            translation: [vals[13], vals[14], vals[15]],
            depth_unit: vals[16],
        };
        let rig = CameraRig { id: "r".into(), cameras: vec![cam] };
        let dir = tempdir().unwrap();
        let p = dir.path().join("cameras.json");
        write_json(&p, &rig).unwrap();
        let back: CameraRig = read_json(&p).unwrap();
        prop_assert_eq!(back, rig);
    }
}
