use std::path::Path;
use std::process::Command;

use planex::checkpoint::load_checkpoint;
use planex::cli::{cli_run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use planex_core::train::Stage;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["planex"];
    argv.extend_from_slice(args);
    cli_run(argv)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const FAST: &[&str] = &[
    "--set",
    "schedule.teacher_epochs=1",
    "--set",
    "schedule.distill_epochs=5",
    "--set",
    "schedule.finetune_epochs=1",
    "--set",
    "schedule.rgb_epochs=1",
    "--set",
    "geometric.iterations=50",
    "--set",
    "teacher_hidden=16",
    "--set",
    "planes=4",
];

fn with_fast<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(FAST);
    v
}

fn make_small(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("data");
    let code = run(&[
        "make-synthetic",
        "--out",
        p(&out),
        "--planes",
        "3",
        "--size",
        "16",
        "--train-views",
        "2",
        "--test-views",
        "1",
        "--points",
        "300",
    ]);
    assert_eq!(code, EXIT_OK);
    out.join("manifest.json")
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_planex"))
        .args(["render", "--bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--bogus"), "{err}");
}

#[test]
fn help_exits_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_planex")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "make-synthetic",
        "fit-planes",
        "train",
        "distill",
        "finetune",
        "bake",
        "finetune-rgb",
        "render",
        "eval",
        "export-bundle",
        "serve",
        "inspect",
    ] {
        assert!(text.contains(sub), "missing {sub}");
    }
}

#[test]
fn missing_input_is_a_usage_error_naming_the_flag() {
    let out = Command::new(env!("CARGO_BIN_EXE_planex"))
        .args(["distill", "--checkpoint", "/nonexistent.ck", "--out", "/tmp/x.ck"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));
}

#[test]
fn bad_override_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_small(dir.path());
    let code = run(&[
        "fit-planes",
        "--dataset",
        p(&manifest),
        "--out",
        p(&dir.path().join("a.ck")),
        "--set",
        "schedule.bogus=3",
    ]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn presets_parse_and_unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_small(dir.path());
    let out = dir.path().join("a.ck");
    for preset in ["full", "synthetic"] {
        let code = run(&["fit-planes", "--preset", preset, "--dataset", p(&manifest), "--out", p(&out), "--set", "geometric.iterations=5"]);
        assert_eq!(code, EXIT_OK, "{preset}");
    }
    assert_eq!(run(&["fit-planes", "--preset", "huge", "--dataset", p(&manifest), "--out", p(&out)]), EXIT_USAGE);
}

#[test]
fn corrupt_checkpoint_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("bad.ck");
    std::fs::write(&ck, b"PLANEXCK\x05\x00\x00\x00{}").unwrap();
    assert_eq!(run(&["inspect", "--checkpoint", p(&ck)]), EXIT_FAILURE);
}

#[test]
fn eval_on_identical_pairs_reports_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = make_small(dir.path());
    let csv = dir.path().join("m.csv");
    let data_dir = manifest.parent().unwrap();
    assert_eq!(
        run(&["eval", "--dataset", p(&manifest), "--renders", p(data_dir), "--split", "train", "--out", p(&csv)]),
        EXIT_OK
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let mean = text.lines().find(|l| l.starts_with("mean,")).unwrap();
    assert_eq!(mean, "mean,100.000000,1.000000");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = make_small(d);
    let m = p(&manifest);
    let ck = |n: &str| d.join(n);
    assert_eq!(run(&with_fast(&["fit-planes", "--dataset", m, "--out", p(&ck("fit.ck"))])), EXIT_OK);
    let log = d.join("teacher.ndjson");
    assert_eq!(
        run(&with_fast(&[
            "train",
            "--dataset",
            m,
            "--checkpoint",
            p(&ck("fit.ck")),
            "--out",
            p(&ck("teacher.ck")),
            "--log",
            p(&log),
            "--set",
            "schedule.log_every=1",
        ])),
        EXIT_OK
    );
    let lines = std::fs::read_to_string(&log).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["stage"], "teacher");
    for key in ["step", "loss_color", "loss_geometric", "wall_time"] {
        assert!(!first[key].is_null(), "{key}");
    }
    assert_eq!(
        run(&with_fast(&["distill", "--checkpoint", p(&ck("teacher.ck")), "--out", p(&ck("distill.ck"))])),
        EXIT_OK
    );
    assert_eq!(
        run(&with_fast(&[
            "finetune",
            "--dataset",
            m,
            "--checkpoint",
            p(&ck("distill.ck")),
            "--out",
            p(&ck("ft.ck"))
        ])),
        EXIT_OK
    );
    assert_eq!(
        run(&["bake", "--checkpoint", p(&ck("ft.ck")), "--out", p(&ck("baked.ck")), "--resolution", "16"]),
        EXIT_OK
    );
    assert_eq!(
        run(&with_fast(&[
            "finetune-rgb",
            "--dataset",
            m,
            "--checkpoint",
            p(&ck("baked.ck")),
            "--out",
            p(&ck("rgb.ck"))
        ])),
        EXIT_OK
    );
    let baked = load_checkpoint(&ck("baked.ck")).unwrap();
    let rgb = load_checkpoint(&ck("rgb.ck")).unwrap();
    assert_eq!(rgb.stage, Stage::FinetuneRgb);
    assert_eq!(rgb.scene.planes.len(), 4);
    for (a, b) in baked.scene.experts.iter().zip(&rgb.scene.experts) {
        let r = a.alpha_params();
        assert_eq!(a.params()[r.clone()], b.params()[r]);
    }
    // finetune-rgb refuses an unbaked checkpoint
    assert_eq!(
        run(&with_fast(&["finetune-rgb", "--dataset", m, "--checkpoint", p(&ck("ft.ck")), "--out", p(&ck("x.ck"))])),
        EXIT_FAILURE
    );

    let png = d.join("view.png");
    let depth = d.join("view_depth");
    assert_eq!(
        run(&[
            "render",
            "--checkpoint",
            p(&ck("rgb.ck")),
            "--dataset",
            m,
            "--frame",
            "test/0000.png",
            "--out",
            p(&png),
            "--depth",
            p(&depth)
        ]),
        EXIT_OK
    );
    assert_eq!(image::open(&png).unwrap().to_rgb8().dimensions(), (16, 16));
    let raw = std::fs::read(d.join("view_depth.depth")).unwrap();
    assert_eq!(raw.len(), 20 + 16 * 16 * 4);
    assert_eq!(image::open(d.join("view_depth.png")).unwrap().color(), image::ColorType::L16);

    let csv = d.join("eval.csv");
    assert_eq!(
        run(&["eval", "--dataset", m, "--checkpoint", p(&ck("rgb.ck")), "--out", p(&csv)]),
        EXIT_OK
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("image,psnr,ssim\ntest/0000.png,"));

    let bundle = d.join("bundle");
    assert_eq!(
        run(&["export-bundle", "--checkpoint", p(&ck("rgb.ck")), "--out", p(&bundle), "--resolution", "8"]),
        EXIT_OK
    );
    assert!(bundle.join("bundle.json").exists());
    assert!(bundle.join("plane_0003.png").exists());
    assert_eq!(run(&["inspect", "--checkpoint", p(&ck("rgb.ck"))]), EXIT_OK);
}

#[test]
fn render_from_camera_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = make_small(d);
    let fit = d.join("fit.ck");
    assert_eq!(run(&with_fast(&["fit-planes", "--dataset", p(&manifest), "--out", p(&fit)])), EXIT_OK);
    let cam = d.join("cam.json");
    std::fs::write(
        &cam,
        r#"{"rotation":[[-1,0,0],[0,-1,0],[0,0,1]],"center":[0,0,-3],"fx":20,"fy":20,"cx":12,"cy":8,"width":24,"height":16}"#,
    )
    .unwrap();
    let out = d.join("c.png");
    assert_eq!(run(&["render", "--checkpoint", p(&fit), "--camera", p(&cam), "--out", p(&out)]), EXIT_OK);
    assert_eq!(image::open(&out).unwrap().to_rgb8().dimensions(), (24, 16));
    std::fs::write(
        &cam,
        r#"{"rotation":[[2,0,0],[0,1,0],[0,0,1]],"center":[0,0,-3],"fx":20,"fy":20,"cx":12,"cy":8,"width":24,"height":16}"#,
    )
    .unwrap();
    assert_eq!(run(&["render", "--checkpoint", p(&fit), "--camera", p(&cam), "--out", p(&out)]), EXIT_FAILURE);
}
