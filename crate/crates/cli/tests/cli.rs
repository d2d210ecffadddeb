use isocast::depth::DepthImage;
use isocast::geometry::{RigidTransform, Rotation, Vec3};
use isocast::image_io::{read_pfm, write_pfm};
use isocast::motion::{LinkState, MotionClip, MotionFrame};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

const BOX: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/box.toml");

fn isocast(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isocast")).args(args).arg("--out").arg(out).output().expect("spawn isocast")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = isocast(out, args);
    assert!(o.status.success(), "isocast {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// CSV rows without the `# ` config header.
fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn render_empty_scene_is_far_everywhere() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[camera]\nwidth = 16\nheight = 12\nfar = 4.0\n");
    ok(dir.path(), &["--config", &cfg, "render"]);
    let raw = read_pfm(&dir.path().join("depth_raw.pfm")).unwrap();
    assert_eq!((raw.width, raw.height), (16, 12));
    assert!(raw.values.iter().all(|&v| v == 4.0));
    let processed = read_pfm(&dir.path().join("depth.pfm")).unwrap();
    assert!(processed.values.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn render_box_scene_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(a.path(), &["--config", BOX, "render"]);
    ok(b.path(), &["--config", BOX, "--workers", "2", "render"]);
    for name in ["depth_raw.pfm", "depth_raw.pgm", "depth.pfm", "depth.pgm"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let raw = read_pfm(&a.path().join("depth_raw.pfm")).unwrap();
    // The centre ray of the group-0 camera hits the static box face at 1.25 m,
    // not the group-1 box at 0.8 m.
    let centre = raw.values[24 * 64 + 32];
    assert!((centre - 1.25).abs() < 0.02, "centre depth {centre}");
    assert!(raw.values.iter().all(|&v| v > 0.3));

    let c = TempDir::new().unwrap();
    ok(c.path(), &["--config", BOX, "--seed", "8", "render"]);
    assert_ne!(fs::read(a.path().join("depth.pfm")).unwrap(), fs::read(c.path().join("depth.pfm")).unwrap());
}

#[test]
fn pipeline_processes_a_directory() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    for k in 0..2 {
        let values = (0..20 * 10).map(|i| 0.5 + 0.01 * (i % 20) as f64 + k as f64).collect();
        write_pfm(&input.join(format!("frame{k}.pfm")), &DepthImage::new(20, 10, values).unwrap()).unwrap();
    }
    let out = dir.path().join("out");
    ok(&out, &["pipeline", "--input", input.to_str().unwrap()]);
    for k in 0..2 {
        let img = read_pfm(&out.join(format!("frame{k}.pfm"))).unwrap();
        assert_eq!((img.width, img.height), (20, 10));
        assert!(img.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(out.join(format!("frame{k}.pgm")).exists());
    }
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert!(!isocast(&out, &["pipeline", "--input", empty.to_str().unwrap()]).status.success());
}

#[test]
fn curriculum_sim_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(a.path(), &["--config", BOX, "--seed", "3", "curriculum-sim"]);
    ok(b.path(), &["--config", BOX, "--seed", "3", "curriculum-sim"]);
    let trace = a.path().join("curriculum_trace.csv");
    assert_eq!(fs::read(&trace).unwrap(), fs::read(b.path().join("curriculum_trace.csv")).unwrap());

    let rows = rows(&trace);
    assert_eq!(rows[0], "iteration,k,bin,P");
    // 4 + 1 + 2 bins, initial distribution plus 2,000 iterations.
    assert_eq!(rows.len() - 1, 7 * 2001);
    let last: Vec<f64> =
        rows[rows.len() - 7..].iter().map(|r| r.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!((last.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    // Bin (0, 2) fails with probability 0.9 and ends up most likely.
    let hardest = last.iter().cloned().enumerate().max_by(|x, y| x.1.total_cmp(&y.1)).unwrap().0;
    assert_eq!(hardest, 2);
}

#[test]
fn never_failing_model_stays_uniform() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "[curriculum]\ndurations = [2.0, 1.5]\niterations = 50\n[curriculum.model]\nkind = \"never\"\n",
    );
    ok(dir.path(), &["--config", &cfg, "curriculum-sim"]);
    for row in &rows(&dir.path().join("curriculum_trace.csv"))[1..] {
        let p: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((p - 0.25).abs() < 1e-12);
    }
}

fn clip(id: &str) -> MotionClip {
    let frames = (0..10)
        .map(|i| {
            let t = i as f64 * 0.02;
            let root = RigidTransform::new(Rotation::rot_z(0.1 * t), Vec3::new(t, 0.0, 0.9));
            MotionFrame {
                root,
                joint_pos: vec![0.1 * t, -0.2],
                joint_vel: vec![0.1, 0.0],
                links: (0..3)
                    .map(|l| LinkState {
                        pose: root.compose(&RigidTransform::from_translation(Vec3::new(0.1 * l as f64, 0.2, -0.3))),
                        lin_vel: Vec3::new(1.0, 0.0, 0.0),
                        ang_vel: Vec3::new(0.0, 0.0, 0.1),
                    })
                    .collect(),
            }
        })
        .collect();
    MotionClip {
        id: id.into(),
        frame_rate: 50.0,
        link_names: vec!["pelvis".into(), "left_foot".into(), "right_foot".into()],
        frames,
    }
}

fn metric_row(out: &Path) -> Vec<(String, f64)> {
    let rows = rows(&out.join("metrics.csv"));
    rows[0].split(',').map(str::to_owned).zip(rows[1].split(',').map(|v| v.parse().unwrap())).collect()
}

#[test]
fn metrics_of_a_clip_against_itself_and_a_shifted_copy() {
    let dir = TempDir::new().unwrap();
    let reference = clip("walk");
    let shifted = reference.transformed(&RigidTransform::from_translation(Vec3::new(0.0, 0.3, 0.0)));
    let (a, b) = (dir.path().join("a.motion"), dir.path().join("b.motion"));
    reference.save(&a).unwrap();
    shifted.save(&b).unwrap();

    ok(dir.path(), &["metrics", a.to_str().unwrap(), a.to_str().unwrap()]);
    for (name, v) in metric_row(dir.path()) {
        if name != "reward_at_mean_error" {
            assert!(v.abs() < 1e-9, "{name} = {v}");
        }
    }

    ok(dir.path(), &["metrics", b.to_str().unwrap(), a.to_str().unwrap()]);
    let row = metric_row(dir.path());
    assert_eq!(row[0].0, "mpjpe_g");
    assert!((row[0].1 - 0.3).abs() < 1e-9);
    assert_eq!(row[1].0, "mpjpe_b");
    assert!(row[1].1.abs() < 1e-9);
}

#[test]
fn metrics_key_links_and_schema_errors() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.motion");
    clip("walk").save(&a).unwrap();
    let mut other = clip("run");
    other.link_names[2] = "head".into();
    let b = dir.path().join("b.motion");
    other.save(&b).unwrap();
    assert!(!isocast(dir.path(), &["metrics", a.to_str().unwrap(), b.to_str().unwrap()]).status.success());

    let cfg = write_config(dir.path(), "[metrics]\nkey_links = [\"pelvis\", \"left_foot\"]\n");
    ok(dir.path(), &["--config", &cfg, "metrics", a.to_str().unwrap(), b.to_str().unwrap()]);
    let cfg = write_config(dir.path(), "[metrics]\nkey_links = [\"tail\"]\n");
    assert!(!isocast(dir.path(), &["--config", &cfg, "metrics", a.to_str().unwrap(), b.to_str().unwrap()])
        .status
        .success());
}

#[test]
fn bench_small_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "[bench]\ngroups = [4, 64]\ninstances_per_group = 8\nstatic_instances = 2\nrays = 512\nrepetitions = 1\n",
    );
    let o = isocast(dir.path(), &["--config", &cfg, "bench"]);
    // Timing order is not asserted here; only the report itself.
    let rows = rows(&dir.path().join("bench.csv"));
    assert_eq!(rows[0], "G,instances_per_group,rays,ns_per_ray_naive,ns_per_ray_grouped,speedup");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("4,8,512,") && rows[2].starts_with("64,8,512,"));
    let text = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(text.starts_with("# "));
    assert!(o.status.success() || String::from_utf8_lossy(&o.stderr).contains("not strictly increasing"));
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[camera]\nwidht = 3\n");
    let o = isocast(dir.path(), &["--config", &cfg, "render"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let missing = dir.path().join("nope.toml");
    assert!(!isocast(dir.path(), &["--config", missing.to_str().unwrap(), "render"]).status.success());
    let cfg = write_config(dir.path(), "[[scene.prototypes]]\nname = \"x\"\ncuboid = [1.0, 1.0, 1.0]\nground = 2.0\n");
    assert!(!isocast(dir.path(), &["--config", &cfg, "render"]).status.success());
}
