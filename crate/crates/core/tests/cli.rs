use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};

use nriqa::cli::{cmd_ablate, ExperimentConfig, Schema};
use nriqa::features::{layout_from_dims, load_cache, save_cache, FeatureTable, FeatureVector};
use nriqa::graph_runtime::{synthetic, ModelSpec};
use nriqa::regressors::{QualityModel, RegressorKind};

fn nriqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nriqa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_images(dir: &Path, n: usize) {
    for i in 0..n {
        let img = RgbImage::from_fn(40 + 4 * i as u32, 32, |x, y| {
            Rgb([(x * 6 + i as u32 * 30) as u8, (y * 7) as u8, ((x + y) * 3 + i as u32 * 11) as u8])
        });
        img.save(dir.join(format!("img{i}.png"))).unwrap();
    }
}

/// Manifest over `img0..img{n}` plus one row whose file does not exist.
fn image_manifest(dir: &Path, n: usize) -> PathBuf {
    let mut csv = String::from("image_id,path,mos,ref_id\n");
    for i in 0..n {
        csv.push_str(&format!("img{i},img{i}.png,{},\n", 1.0 + (i % 5) as f64 * 0.8));
    }
    csv.push_str("ghost,ghost.png,3.0,\n");
    let path = dir.join("images.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

#[test]
fn extract_resumes_and_reports_missing_images() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sidecar = synthetic::tiny(&[("block_a", 4), ("block_b", 6)], 3).write_to(d).unwrap();
    write_images(d, 6);
    let manifest = image_manifest(d, 6);
    let (partial, whole) = (d.join("partial.mgfc"), d.join("whole.mgfc"));
    let common = ["--model-spec", s(&sidecar), "--manifest", s(&manifest), "--workers", "2"];

    let first = nriqa(&[&["extract"], &common[..], &["--cache", s(&partial), "--limit", "3", "--checkpoint-every", "2"]].concat());
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(load_cache(&partial).unwrap().len(), 3);

    let resumed = nriqa(&[&["extract"], &common[..], &["--cache", s(&partial)]].concat());
    assert_eq!(resumed.status.code(), Some(2), "a missing image is a partial data failure");
    let stdout = String::from_utf8_lossy(&resumed.stdout);
    assert!(stdout.contains("skipped 3") && stdout.contains("failed\tghost"), "{stdout}");

    let straight = nriqa(&[&["extract"], &common[..], &["--cache", s(&whole)]].concat());
    assert_eq!(straight.status.code(), Some(2));
    let (a, b) = (load_cache(&partial).unwrap(), load_cache(&whole).unwrap());
    assert_eq!(a.len(), 6);
    assert_eq!(a, b, "interrupted and uninterrupted runs disagree");
    let ids: Vec<&str> = a.rows().iter().map(|r| r.image_id.as_str()).collect();
    assert_eq!(ids, ["img0", "img1", "img2", "img3", "img4", "img5"]);
    assert_eq!(a.dim(), 10);
}

#[test]
fn extract_rejects_cache_from_another_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sidecar = synthetic::tiny(&[("block_a", 4)], 1).write_to(d).unwrap();
    write_images(d, 1);
    let manifest = image_manifest(d, 1);
    let cache = d.join("other.mgfc");
    save_cache(&FeatureTable::new(None, layout_from_dims([("x", 2)])).unwrap(), &cache).unwrap();
    let out = nriqa(&["extract", "--model-spec", s(&sidecar), "--manifest", s(&manifest), "--cache", s(&cache)]);
    assert_eq!(out.status.code(), Some(1));
}

/// Authentic database with MOS linear in the features; image files are not
/// needed once the cache exists.
fn feature_database(dir: &Path, name: &str, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let layout = layout_from_dims([("low", 3), ("high", 5)]);
    let mut table = FeatureTable::new(None, layout.clone()).unwrap();
    let mut csv = String::from("image_id,path,mos\n");
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    for i in 0..n {
        let f: Vec<f64> = (0..8)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                ((state >> 40) as f32 / (1u64 << 24) as f32 - 0.5) as f64
            })
            .collect();
        let mos = 3.0 + 1.5 * f[3] - 1.2 * f[5] + 0.8 * f[7];
        let id = format!("{name}{i:03}");
        csv.push_str(&format!("{id},{id}.jpg,{mos}\n"));
        table.push(FeatureVector::new(id, layout.clone(), f).unwrap()).unwrap();
    }
    let (manifest, cache) = (dir.join(format!("{name}.csv")), dir.join(format!("{name}.mgfc")));
    std::fs::write(&manifest, csv).unwrap();
    save_cache(&table, &cache).unwrap();
    (manifest, cache)
}

#[test]
fn eval_with_config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (manifest, cache) = feature_database(d, "koniq", 60, 1);
    let config = d.join("run.toml");
    std::fs::write(
        &config,
        "manifest = \"koniq.csv\"\ncache = \"koniq.mgfc\"\nsplits = 9\nregressor = \"gpr\"\nout = \"from_file\"\nworkers = 2\n",
    )
    .unwrap();
    let out_dir = d.join("results");
    let run = nriqa(&["eval", "--config", s(&config), "--splits", "3", "--out", s(&out_dir)]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let table = String::from_utf8_lossy(&run.stdout);
    assert!(table.contains("All concatenated") && table.contains("3/3"), "{table}");
    let splits = std::fs::read_to_string(out_dir.join("gpr_splits.csv")).unwrap();
    assert_eq!(splits.lines().count(), 4);
    assert!(splits.lines().nth(1).unwrap().starts_with("0,0,36,12,12,gpr,"));
    for f in ["gpr_summary.csv", "gpr_summary.md", "gpr_timing.json", "gpr_predictions/split_002.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    assert!(!d.join("from_file").exists());

    let layer = nriqa(&[
        "eval", "--manifest", s(&manifest), "--cache", s(&cache), "--splits", "2", "--layer", "high", "--out", s(&out_dir),
        "--standardize", "off",
    ]);
    assert_eq!(layer.status.code(), Some(0));
    assert!(out_dir.join("svr_high_splits.csv").exists());
}

#[test]
fn ablation_rows_share_one_split_series() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, cache) = feature_database(dir.path(), "db", 50, 2);
    let cfg = ExperimentConfig {
        manifest: Some(manifest),
        schema: Schema::Authentic,
        cache: Some(cache),
        regressor: RegressorKind::Gpr,
        splits: 4,
        seed: 17,
        out: dir.path().join("out"),
        workers: 2,
        ..ExperimentConfig::default()
    };
    let run = cmd_ablate(&cfg).unwrap();
    let labels: Vec<&str> = run.table.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["low", "high", "All concatenated"]);
    let seeds: Vec<Vec<u64>> = run.outcomes.iter().map(|o| o.iter().map(|x| x.seed).collect()).collect();
    assert!(seeds.iter().all(|s| s == &vec![17, 18, 19, 20]));
    for (row, outs) in run.table.rows.iter().zip(&run.outcomes) {
        assert_eq!(outs.len(), row.n_splits);
    }
    assert_eq!(run.best_layer(0), Some("high"));
}

#[test]
fn train_then_predict_from_cache_and_image() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (manifest, cache) = feature_database(d, "db", 40, 3);
    let model = d.join("model.json");
    let train = nriqa(&["train", "--manifest", s(&manifest), "--cache", s(&cache), "--model-out", s(&model)]);
    assert_eq!(train.status.code(), Some(0), "{}", String::from_utf8_lossy(&train.stderr));
    let m = QualityModel::load(&model).unwrap();
    assert_eq!(m.feature_dim, 8);

    let pred = nriqa(&["predict", "--model", s(&model), "--cache", s(&cache), "--id", "db007"]);
    assert_eq!(pred.status.code(), Some(0));
    let v: f64 = String::from_utf8_lossy(&pred.stdout).trim().parse().unwrap();
    let table = load_cache(&cache).unwrap();
    assert!((v - m.score(table.get("db007").unwrap()).unwrap()).abs() < 1e-9);

    let unknown = nriqa(&["predict", "--model", s(&model), "--cache", s(&cache), "--id", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
    let neither = nriqa(&["predict", "--model", s(&model)]);
    assert_eq!(neither.status.code(), Some(1));

    // image path: a model over the tiny graph's two taps
    let sidecar = synthetic::tiny(&[("block_a", 4), ("block_b", 6)], 5).write_to(d).unwrap();
    write_images(d, 15);
    let imgs = image_manifest(d, 15);
    let img_cache = d.join("imgs.mgfc");
    let ex = nriqa(&["extract", "--model-spec", s(&sidecar), "--manifest", s(&imgs), "--cache", s(&img_cache)]);
    assert_eq!(ex.status.code(), Some(2));
    // drop the ghost row so training sees only extracted images
    let text = std::fs::read_to_string(&imgs).unwrap().replace("ghost,ghost.png,3.0,\n", "");
    std::fs::write(&imgs, text).unwrap();
    let img_model = d.join("img_model.json");
    let tr = nriqa(&[
        "train", "--manifest", s(&imgs), "--cache", s(&img_cache), "--regressor", "gpr", "--model-out", s(&img_model),
    ]);
    assert_eq!(tr.status.code(), Some(0), "{}", String::from_utf8_lossy(&tr.stderr));
    let by_image = nriqa(&[
        "predict", "--model", s(&img_model), "--model-spec", s(&sidecar), "--image", s(&d.join("img2.png")), "--clamp",
    ]);
    assert_eq!(by_image.status.code(), Some(0), "{}", String::from_utf8_lossy(&by_image.stderr));
    let v: f64 = String::from_utf8_lossy(&by_image.stdout).trim().parse().unwrap();
    assert!((1.0..=5.0).contains(&v));
    let by_id = nriqa(&["predict", "--model", s(&img_model), "--cache", s(&img_cache), "--id", "img2", "--clamp"]);
    let w: f64 = String::from_utf8_lossy(&by_id.stdout).trim().parse().unwrap();
    // the cache holds f32 values, the image path keeps f64
    assert!((v - w).abs() < 1e-4, "{v} vs {w}");
}

#[test]
fn cross_database_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (a, ca) = feature_database(d, "koniq", 50, 4);
    let (b, cb) = feature_database(d, "clive", 30, 5);
    let model = d.join("cross_model.json");
    let out = d.join("out");
    let run = nriqa(&[
        "cross", "--manifest", s(&a), "--cache", s(&ca), "--test-manifest", s(&b), "--test-cache", s(&cb), "--out", s(&out),
        "--model-out", s(&model),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("PLCC "));
    let summary = std::fs::read_to_string(out.join("svr_cross.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("koniq,clive,50,30,"));
    assert_eq!(std::fs::read_to_string(out.join("svr_cross_predictions.csv")).unwrap().lines().count(), 31);
    assert!(model.exists());

    let same = nriqa(&["cross", "--manifest", s(&a), "--cache", s(&ca), "--test-manifest", s(&a), "--out", s(&out)]);
    assert_eq!(same.status.code(), Some(1));
}

#[test]
fn split_writes_plan_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let csv = "image_id,path,mos,ref_id\n".to_string()
        + &(0..30).map(|i| format!("d{i},d{i}.bmp,{},ref{}\n", 1 + i % 4, i / 3)).collect::<String>();
    let manifest = d.join("kadid.csv");
    std::fs::write(&manifest, csv).unwrap();
    let out = d.join("out");
    let run = nriqa(&["split", "--manifest", s(&manifest), "--splits", "4", "--seed", "5", "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let plan = std::fs::read_to_string(out.join("splits/split_003.csv")).unwrap();
    let mut lines = plan.lines();
    assert_eq!(lines.next(), Some("image_id,role,seed"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.ends_with(",8")));
    assert_eq!(rows.iter().filter(|r| r.contains(",test,")).count(), 6);
}

#[test]
fn exit_codes_follow_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (manifest, cache) = feature_database(d, "db", 20, 6);

    let no_manifest = nriqa(&["eval", "--manifest", s(&d.join("absent.csv")), "--cache", s(&cache)]);
    assert_eq!(no_manifest.status.code(), Some(1));

    let broken = d.join("broken.mgfc");
    let mut bytes = std::fs::read(&cache).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&broken, bytes).unwrap();
    let truncated = nriqa(&["eval", "--manifest", s(&manifest), "--cache", s(&broken)]);
    assert_eq!(truncated.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&truncated.stderr).contains("truncated"));

    let extra = d.join("extra.csv");
    let text = std::fs::read_to_string(&manifest).unwrap() + "unseen,unseen.jpg,2.5\n";
    std::fs::write(&extra, text).unwrap();
    let missing = nriqa(&["eval", "--manifest", s(&extra), "--cache", s(&cache), "--splits", "1"]);
    assert_eq!(missing.status.code(), Some(2));

    let flat = d.join("flat.csv");
    let text: String = std::fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l}\n") } else { format!("{},3.0\n", l.rsplit_once(',').unwrap().0) })
        .collect();
    std::fs::write(&flat, text).unwrap();
    let undefined = nriqa(&["eval", "--manifest", s(&flat), "--cache", s(&cache), "--splits", "2"]);
    assert_eq!(undefined.status.code(), Some(3), "constant MOS leaves every correlation undefined");
}

#[test]
fn stock_sidecars_declare_published_dimensions() {
    let models = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models");
    let g = ModelSpec::from_file(models.join("googlenet.toml")).unwrap();
    let v = ModelSpec::from_file(models.join("inception_v3.toml")).unwrap();
    assert_eq!((g.taps.len(), g.total_dim()), (9, 5488));
    assert_eq!((v.taps.len(), v.total_dim()), (11, 10048));
    assert_eq!(g, ModelSpec::stock_googlenet(models.join("googlenet.onnx")));
    assert_eq!(v, ModelSpec::stock_inception_v3(models.join("inception_v3.onnx")));
}
