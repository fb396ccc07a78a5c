use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn salex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salex"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstderr: {}", o.status, stderr(o));
}

/// FER2013-format CSV with `n` rows per usage, labels cycling over 0..7 and
/// a class-dependent bright square so networks have something to learn.
fn write_fer(dir: &Path, n: usize) -> PathBuf {
    let mut s = String::from("emotion,pixels,Usage\n");
    for usage in ["Training", "PublicTest", "PrivateTest"] {
        for i in 0..n {
            let label = i % 7;
            let px: Vec<String> = (0..2304)
                .map(|p| {
                    let (x, y) = (p % 48, p / 48);
                    let inside = x / 12 == label % 4 && y / 12 == label / 4 + 1;
                    let noise = (p * 31 + i * 17) % 40;
                    (if inside { 200 + noise } else { 20 + noise }).to_string()
                })
                .collect();
            s.push_str(&format!("{label},{},{usage}\n", px.join(" ")));
        }
    }
    let path = dir.join("fer.csv");
    std::fs::write(&path, s).unwrap();
    path
}

fn fer_arg(path: &Path) -> String {
    format!("fer2013:{}", path.display())
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn help_lists_flags_and_defaults() {
    let o = salex(&["overlay", "--help"]);
    ok(&o);
    let text = stdout(&o);
    assert!(text.contains("--alpha") && text.contains("default: 0.5"), "{text}");
    let text = stdout(&salex(&["train", "--help"]));
    for flag in ["--dataset", "--mode", "--arch", "--lr", "--epochs", "--seed", "--out", "--config"] {
        assert!(text.contains(flag), "train help lacks {flag}");
    }
    assert!(text.contains("default: 0.01"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = salex(&["train", "--out", "x.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1, "{}", stderr(&o));
    let fer = write_fer(dir.path(), 7);
    let out = dir.path().join("m.ckpt");
    let o = salex(&["train", "--dataset", &fer_arg(&fer), "--lr", "-1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = salex(&["train", "--dataset", &fer_arg(&fer), "--fold", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = salex(&["train", "--dataset", "csv:whatever", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "emotion,pixels,Usage\n3,1 2 3,Training\n").unwrap();
    let o = salex(&["saliency", "--input", &fer_arg(&bad), "--out", dir.path().join("m").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: line 2:"), "{err}");
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let fer = write_fer(dir.path(), 7);
    let out = dir.path().join("m.ckpt");
    let o = salex(&[
        "train", "--dataset", &fer_arg(&fer), "--arch", "tiny", "--epochs", "2", "--lr", "1e300",
        "--batch-size", "7", "--crops", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged") || stderr(&o).contains("non-finite"), "{}", stderr(&o));
}

#[test]
fn saliency_writes_one_map_per_sample_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let fer = write_fer(dir.path(), 10);
    let run = |out: &str| {
        let out = dir.path().join(out);
        ok(&salex(&[
            "saliency", "--input", &fer_arg(&fer), "--partition", "Training", "--out", out.to_str().unwrap(),
        ]));
        out
    };
    let a = run("a");
    let b = run("b");
    let mut files: Vec<_> = std::fs::read_dir(a.join("Training")).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 10);
    assert!(files[0].ends_with("line000002.pgm"));
    for f in &files {
        let twin = b.join("Training").join(f.file_name().unwrap());
        assert_eq!(std::fs::read(f).unwrap(), std::fs::read(twin).unwrap());
    }
    assert!(read(&a.join("manifest.txt")).contains("maps_written: 10"));

    // the written maps feed the external backend; a missing one is named
    std::fs::remove_file(&files[3]).unwrap();
    let o = salex(&[
        "saliency", "--input", &fer_arg(&fer), "--partition", "Training",
        "--backend", &format!("external:{}", a.display()), "--out", dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Training/line000005"), "{}", stderr(&o));
}

#[test]
fn train_eval_correlate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let fer = write_fer(dir.path(), 100);
    let ckpt = |name: &str| dir.path().join(name);
    let train = |name: &str, mode: &str, seed: &str| {
        ok(&salex(&[
            "train", "--dataset", &fer_arg(&fer), "--mode", mode, "--arch", "tiny", "--epochs", "1",
            "--crops", "1", "--batch-size", "16", "--seed", seed, "--out", ckpt(name).to_str().unwrap(),
        ]));
    };
    let started = std::time::Instant::now();
    train("faces.ckpt", "faces", "5");
    assert!(started.elapsed().as_secs() < 60);
    train("faces2.ckpt", "faces", "5");
    train("sal.ckpt", "saliency", "5");
    assert_eq!(std::fs::read(ckpt("faces.ckpt")).unwrap(), std::fs::read(ckpt("faces2.ckpt")).unwrap());

    let manifest = read(&ckpt("faces.manifest.txt"));
    for line in ["config.learning_rate: 0.01", "dataset.Training: 100", "training_samples: 100", "output: "] {
        assert!(manifest.contains(line), "manifest lacks {line:?}:\n{manifest}");
    }
    assert!(manifest.contains("faces.log.csv") && manifest.contains("wall_clock_secs: "));
    let log = read(&ckpt("faces.log.csv"));
    assert!(log.starts_with("epoch,mean_loss,train_acc\n1,"), "{log}");

    let eval = |name: &str, mode: &str, tencrop: &str, out: &str| {
        let out = dir.path().join(out);
        ok(&salex(&[
            "eval", "--ckpt", ckpt(name).to_str().unwrap(), "--dataset", &fer_arg(&fer), "--partition",
            "PublicTest", "--mode", mode, "--tencrop", tencrop, "--out", out.to_str().unwrap(),
        ]));
        out
    };
    let faces = eval("faces.ckpt", "faces", "on", "rep-faces");
    let centre = eval("faces.ckpt", "faces", "off", "rep-centre");
    let sal = eval("sal.ckpt", "saliency", "on", "rep-sal");

    let summary = read(&faces.join("summary.csv"));
    assert!(summary.contains(",0.142857,100"), "{summary}");
    let total = |dir: &Path| -> u64 {
        read(&dir.join("confusion.csv"))
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').map(|v| v.parse::<u64>().unwrap()).collect::<Vec<_>>())
            .sum()
    };
    assert_eq!(total(&faces), 100);
    assert_eq!(total(&centre), 100);
    // each class's row sums to its sample count: labels cycle 0..7 over 100 rows
    let rows: Vec<u64> = read(&faces.join("confusion.csv"))
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse::<u64>().unwrap()).sum())
        .collect();
    assert_eq!(rows, [15, 15, 14, 14, 14, 14, 14]);

    let corr = dir.path().join("corr.csv");
    let o = salex(&[
        "correlate", "--report-a", faces.to_str().unwrap(), "--report-b", faces.to_str().unwrap(), "--out",
        corr.to_str().unwrap(),
    ]);
    // a one-epoch model may predict a single class, making the diagonal constant
    if o.status.success() {
        assert_eq!(stdout(&o).trim(), "r = 1.0000");
        assert!(read(&corr).ends_with(",1.000000\n"));
    } else {
        assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    }
    let _ = sal;
}

#[test]
fn correlate_matches_oracle_and_rejects_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, classes: &[&str], diag: &[u64]| {
        let d = dir.path().join(name);
        std::fs::create_dir_all(&d).unwrap();
        let k = classes.len();
        let mut s = classes.join(",") + "\n";
        for (i, &hits) in diag.iter().enumerate() {
            let row: Vec<String> = (0..k).map(|j| if i == j { hits } else if j == (i + 1) % k { 10 - hits } else { 0 }.to_string()).collect();
            s.push_str(&(row.join(",") + "\n"));
        }
        std::fs::write(d.join("confusion.csv"), s).unwrap();
        d
    };
    let classes = ["angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"];
    let a = write("a", &classes, &[5, 6, 7, 8, 9, 4, 3]);
    let b = write("b", &classes, &[6, 5, 8, 7, 9, 3, 4]);
    let x = [0.5, 0.6, 0.7, 0.8, 0.9, 0.4, 0.3];
    let y = [0.6, 0.5, 0.8, 0.7, 0.9, 0.3, 0.4];
    let (mx, my) = (x.iter().sum::<f64>() / 7.0, y.iter().sum::<f64>() / 7.0);
    let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let want = cov / (vx * vy).sqrt();
    let out = dir.path().join("r.csv");
    let o = salex(&["correlate", "--report-a", a.to_str().unwrap(), "--report-b", b.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    ok(&o);
    assert_eq!(stdout(&o).trim(), format!("r = {want:.4}"));
    let got: f64 = read(&out).lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((got - want).abs() < 1e-6);

    let c = write("c", &classes[..6], &[5, 6, 7, 8, 9, 4]);
    let o = salex(&["correlate", "--report-a", a.to_str().unwrap(), "--report-b", c.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let flat = write("flat", &classes, &[5; 7]);
    let o = salex(&["correlate", "--report-a", a.to_str().unwrap(), "--report-b", flat.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

fn write_pgm(path: &Path, w: usize, h: usize, f: impl Fn(usize, usize) -> u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            bytes.push(f(x, y));
        }
    }
    std::fs::write(path, bytes).unwrap();
}

#[test]
fn overlay_alpha_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let face = dir.path().join("face.pgm");
    let map = dir.path().join("map.pgm");
    write_pgm(&face, 48, 48, |x, y| ((x * 5 + y * 3) % 256) as u8);
    write_pgm(&map, 48, 48, |x, _| (50 + x * 2) as u8);
    let run = |alpha: &str, out: &str| {
        let out = dir.path().join(out);
        ok(&salex(&[
            "overlay", "--face", face.to_str().unwrap(), "--map", map.to_str().unwrap(), "--alpha", alpha, "--out",
            out.to_str().unwrap(),
        ]));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("0", "a0.pgm"), std::fs::read(&face).unwrap());
    // map min 50, max 144: normalised value of column x is 2x/94
    let full = run("1", "a1.pgm");
    let pixels = &full[full.len() - 48 * 48..];
    for (x, &px) in pixels.iter().take(48).enumerate() {
        assert_eq!(px, ((2 * x) as f64 / 94.0 * 255.0).round() as u8, "column {x}");
    }
    let small = dir.path().join("small.pgm");
    write_pgm(&small, 10, 10, |_, _| 0);
    let o = salex(&[
        "overlay", "--face", face.to_str().unwrap(), "--map", small.to_str().unwrap(), "--out",
        dir.path().join("x.pgm").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let fer = write_fer(dir.path(), 14);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "arch = \"tiny\"\nepochs = 1\nlearning_rate = 0.005\ncrops_per_sample = 1\nbatch_size = 7\n").unwrap();
    let out = dir.path().join("m.ckpt");
    ok(&salex(&[
        "train", "--dataset", &fer_arg(&fer), "--config", cfg.to_str().unwrap(), "--lr", "0.002", "--out",
        out.to_str().unwrap(),
    ]));
    let m = read(&dir.path().join("m.manifest.txt"));
    assert!(m.contains("config.learning_rate: 0.002"), "{m}");
    assert!(m.contains("config.epochs: 1") && m.contains("arch: tiny") && m.contains("config.batch_size: 7"), "{m}");

    std::fs::write(&cfg, "learnin_rate = 0.1\n").unwrap();
    let o = salex(&["train", "--dataset", &fer_arg(&fer), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn directory_dataset_with_folds() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ck");
    for (c, class) in ["angry", "happy", "surprise"].iter().enumerate() {
        std::fs::create_dir_all(root.join(class)).unwrap();
        for i in 0..4 {
            write_pgm(&root.join(class).join(format!("{i}.pgm")), 64, 64, |x, y| ((x + y * c + i) % 256) as u8);
        }
    }
    let data = format!("dir:{}", root.display());
    let out = dir.path().join("ck.ckpt");
    ok(&salex(&[
        "train", "--dataset", &data, "--taxonomy", "ckplus", "--folds", "3", "--fold", "0", "--arch", "tiny",
        "--epochs", "1", "--crops", "1", "--out", out.to_str().unwrap(),
    ]));
    let m = read(&dir.path().join("ck.manifest.txt"));
    assert!(m.contains("training_samples: 8") && m.contains("config.epochs: 1"), "{m}");
    let rep = dir.path().join("rep");
    let o = salex(&[
        "eval", "--ckpt", out.to_str().unwrap(), "--dataset", &data, "--taxonomy", "ckplus", "--folds", "3",
        "--partition", "fold:0", "--out", rep.to_str().unwrap(),
    ]);
    ok(&o);
    assert!(stdout(&o).contains("4 samples of Fold0"), "{}", stdout(&o));
    assert!(read(&rep.join("confusion.csv")).starts_with("angry,disgust,fear,happy,sad,surprise,contempt\n"));

    // a FER2013-sized network cannot score the CK+ taxonomy
    let fer = write_fer(dir.path(), 7);
    let fer_ckpt = dir.path().join("fer.ckpt");
    ok(&salex(&["train", "--dataset", &fer_arg(&fer), "--arch", "tiny", "--epochs", "1", "--crops", "1", "--out", fer_ckpt.to_str().unwrap()]));
    let o = salex(&["eval", "--ckpt", fer_ckpt.to_str().unwrap(), "--dataset", &data, "--taxonomy", "ckplus", "--out", rep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
