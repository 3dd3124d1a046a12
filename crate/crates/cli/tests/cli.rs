use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use planefield::geometry::TriMesh;
use planefield::io::{read_scene, save_ply, write_scene, InstancesFile};
use planefield::Vec3;

fn planefield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planefield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = planefield(args);
    assert!(
        out.status.success(),
        "planefield {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(preset: &str, seed: u64, frames: usize, dir: &Path) {
    ok(&["synth", preset, "--seed", &seed.to_string(), "--frames", &frames.to_string(), "--out", path(dir)]);
}

fn instances(dir: &Path) -> InstancesFile {
    serde_json::from_str(&fs::read_to_string(dir.join("instances.json")).unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth("box6", 5, 3, &a);
    synth("box6", 5, 3, &b);
    for name in ["poses.txt", "intrinsics.txt", "gt_mesh.ply", "frames/000000.depth.bin", "frames/000002.emb.bin"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let gt = planefield::io::load_ply(&a.join("gt_mesh.ply")).unwrap();
    let mut ids = gt.labels.unwrap();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids, [0, 1, 2, 3, 4, 5]);
}

#[test]
fn picture_wall_has_coplanar_instances() {
    let tmp = tempfile::tempdir().unwrap();
    synth("picture-wall", 0, 2, tmp.path());
    let gt = planefield::io::load_ply(&tmp.path().join("gt_mesh.ply")).unwrap();
    let labels = gt.labels.unwrap();
    let mut ids = labels.clone();
    ids.sort_unstable();
    ids.dedup();
    // Per label, the set of axes along which every vertex shares a coordinate.
    let flat_axes = |label: i32| -> Vec<(usize, i64)> {
        let pts: Vec<Vec3> = gt.vertices.iter().zip(&labels).filter(|(_, &l)| l == label).map(|(p, _)| *p).collect();
        (0..3)
            .filter(|&k| pts.iter().all(|p| (p[k] - pts[0][k]).abs() < 1e-9))
            .map(|k| (k, (pts[0][k] * 1000.0).round() as i64))
            .collect()
    };
    let planes: Vec<_> = ids.iter().map(|&l| flat_axes(l)).collect();
    let coplanar = (0..planes.len())
        .flat_map(|i| (i + 1..planes.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| !planes[i].is_empty() && planes[i] == planes[j])
        .count();
    assert_eq!(coplanar, 1);
}

#[test]
fn box_room_reconstructs_six_planes() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, out) = (tmp.path().join("scene"), tmp.path().join("out"));
    synth("box6", 0, 8, &scene);
    ok(&["reconstruct", path(&scene), "--no-embeddings", "--out", path(&out)]);
    for name in ["mesh_planar.ply", "labels.txt", "instances.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    assert_eq!(instances(&out).instances.len(), 6);
}

#[test]
fn embeddings_separate_the_picture() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("picture-wall", 0, 12, &scene);
    let with = tmp.path().join("with");
    let without = tmp.path().join("without");
    ok(&["reconstruct", path(&scene), "--out", path(&with)]);
    ok(&["reconstruct", path(&scene), "--no-embeddings", "--out", path(&without)]);
    assert!(instances(&without).instances.len() < instances(&with).instances.len());
}

#[test]
fn reconstruction_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("box6", 1, 3, &scene);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = tmp.path().join(name);
            ok(&["reconstruct", path(&scene), "--seed", "3", "--voxel-size", "0.08", "--steps-per-kf", "2", "--out", path(&out)]);
            (
                fs::read(out.join("labels.txt")).unwrap(),
                fs::read(out.join("instances.json")).unwrap(),
            )
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn malformed_archives_name_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("box6", 0, 3, &scene);

    let depth = scene.join("frames/000001.depth.bin");
    let bytes = fs::read(&depth).unwrap();
    fs::write(&depth, &bytes[..bytes.len() / 2]).unwrap();
    let out = planefield(&["reconstruct", path(&scene), "--out", path(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("000001.depth.bin"));

    fs::write(scene.join("poses.txt"), "0 not a pose\n").unwrap();
    let out = planefield(&["reconstruct", path(&scene), "--out", path(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("poses.txt"));
}

#[test]
fn empty_archive_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("box6", 0, 2, &scene);
    fs::write(scene.join("poses.txt"), "").unwrap();
    for entry in fs::read_dir(scene.join("frames")).unwrap() {
        fs::remove_file(entry.unwrap().path()).unwrap();
    }
    let out = planefield(&["reconstruct", path(&scene), "--out", path(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("poses.txt"));
}

#[test]
fn config_file_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("box6", 0, 2, &scene);
    let cfg = tmp.path().join("run.toml");

    fs::write(&cfg, "voxel-size = 0.08\nno-embeddings = true\n").unwrap();
    ok(&["reconstruct", path(&scene), "--config", path(&cfg), "--out", path(&tmp.path().join("o"))]);

    // a flag that breaks the file's settings wins and is rejected
    let out = planefield(&["reconstruct", path(&scene), "--config", path(&cfg), "--voxel-size", "-1", "--out", path(&tmp.path().join("o"))]);
    assert!(!out.status.success());

    fs::write(&cfg, "voxel_size = 0.08\n").unwrap();
    let out = planefield(&["reconstruct", path(&scene), "--config", path(&cfg), "--out", path(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.toml"));
}

#[test]
fn online_logs_every_keyframe() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, out) = (tmp.path().join("scene"), tmp.path().join("out"));
    synth("two-rooms", 0, 4, &scene);
    ok(&["online", path(&scene), "--voxel-size", "0.08", "--steps-per-kf", "2", "--out", path(&out)]);
    let timings = fs::read_to_string(out.join("timings.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = timings.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 4);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["frame_id"], i as u64);
        for stage in ["depth_ingest_ms", "fusion_ms", "mlp_ms", "clustering_ms"] {
            assert!(r[stage].as_f64().unwrap() >= 0.0, "{stage}");
        }
    }
    assert_eq!(fs::read_to_string(out.join("planes.jsonl")).unwrap().lines().count(), 4);
    assert!(out.join("mesh_planar.ply").is_file());

    let out = planefield(&["online", path(&scene), "--no-embeddings", "--out", path(&tmp.path().join("o"))]);
    assert!(!out.status.success());
}

#[test]
fn online_replay_keeps_large_plane_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, twice, out) = (tmp.path().join("scene"), tmp.path().join("twice"), tmp.path().join("out"));
    synth("box6", 0, 5, &scene);
    let frames = read_scene(&scene).unwrap();
    let n = frames.len();
    let replay: Vec<_> = frames
        .iter()
        .chain(&frames)
        .enumerate()
        .map(|(i, f)| {
            let mut f = f.clone();
            f.frame_id = i as u32;
            f
        })
        .collect();
    write_scene(&twice, &replay).unwrap();
    // a frozen network isolates tracking from training drift
    ok(&["online", path(&twice), "--voxel-size", "0.08", "--lr", "1e-12", "--out", path(&out)]);
    let steps: Vec<serde_json::Value> = fs::read_to_string(out.join("planes.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ids = |step: &serde_json::Value| -> Vec<i64> {
        step["planes"].as_array().unwrap().iter().map(|p| p["id"].as_i64().unwrap()).collect()
    };
    // planes are listed largest first
    let settled: Vec<i64> = ids(&steps[n - 1]).into_iter().take(3).collect();
    assert!(!settled.is_empty());
    for step in &steps[n..] {
        let now = ids(step);
        for id in &settled {
            assert!(now.contains(id), "plane {id} lost at {}", step["frame_id"]);
        }
    }
}

fn two_squares() -> TriMesh {
    let mut mesh = TriMesh::default();
    let mut labels = Vec::new();
    for (label, z) in [(0, 0.0), (1, 1.0)] {
        let base = mesh.vertices.len();
        for j in 0..6 {
            for i in 0..6 {
                mesh.vertices.push(Vec3::new(i as f64 * 0.2, j as f64 * 0.2, z));
                labels.push(label);
            }
        }
        for j in 0..5 {
            for i in 0..5 {
                let a = base + j * 6 + i;
                mesh.faces.push([a, a + 1, a + 7]);
                mesh.faces.push([a, a + 7, a + 6]);
            }
        }
    }
    mesh.normals = vec![Vec3::z(); mesh.vertices.len()];
    mesh.labels = Some(labels);
    mesh
}

#[test]
fn evaluate_identical_meshes() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt.ply");
    save_ply(&gt, &two_squares()).unwrap();
    let csv = tmp.path().join("scores.csv");
    for _ in 0..2 {
        ok(&["evaluate", path(&gt), path(&gt), "--csv", path(&csv), "--out", path(tmp.path())]);
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    for (key, want) in [
        ("chamfer", 0.0),
        ("voi", 0.0),
        ("ri", 1.0),
        ("sc", 1.0),
        ("f1", 1.0),
        ("planar_fidelity", 0.0),
        ("planar_accuracy", 0.0),
        ("planar_chamfer", 0.0),
    ] {
        assert!((report[key].as_f64().unwrap() - want).abs() < 1e-12, "{key}: {}", report[key]);
    }
    let rows: Vec<_> = fs::read_to_string(&csv).unwrap().lines().map(String::from).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("chamfer,f1"));
}

#[test]
fn evaluate_needs_ground_truth_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = (tmp.path().join("pred.ply"), tmp.path().join("gt.ply"));
    save_ply(&pred, &two_squares()).unwrap();
    let unlabeled = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
                     element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
    fs::write(&gt, unlabeled).unwrap();
    let out = planefield(&["evaluate", path(&pred), path(&gt), "--out", path(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gt.ply"));
}
