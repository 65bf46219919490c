use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gpcnoise_cli::EvalReport;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpcnoise"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Data rows of a CSV artifact: comment lines and the header dropped.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn numeric(row: &[String]) -> Vec<f64> {
    row.iter().map(|v| v.parse().unwrap()).collect()
}

#[test]
fn gen_data_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let msg = ok(
        d,
        &[
            "gen-data",
            "two-moons",
            "--n",
            "400",
            "--seed",
            "7",
            "-o",
            "banana.csv",
        ],
    );
    assert!(msg.contains("n=400") && msg.contains("seed=7") && msg.contains("surrogate"));
    let banana = fs::read_to_string(d.join("banana.csv")).unwrap();
    let data: Vec<&str> = banana.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 400);
    assert!(data.iter().all(|l| l.split(',').count() == 3));

    ok(
        d,
        &[
            "gen-data",
            "gp-multiclass",
            "--n",
            "900",
            "--classes",
            "3",
            "--seed",
            "1",
            "-o",
            "tri.csv",
        ],
    );
    let tri = fs::read_to_string(d.join("tri.csv")).unwrap();
    let mut labels: Vec<&str> = tri
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(labels.len(), 900);
    labels.sort_unstable();
    labels.dedup();
    assert_eq!(labels, vec!["1", "2", "3"]);
}

#[test]
fn missing_n_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen-data", "two-moons", "-o", "x.csv"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[invalid-args]: "), "{err}");
    assert!(err.contains("--n") && err.contains("Usage"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn errors_are_one_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "two-moons", "--n", "40", "-o", "b.csv"]);

    let out = run(
        d,
        &["train", "b.csv", "--likelihood", "softmax", "-o", "m.json"],
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[invalid-argument]: ") && err.contains("softmax"));
    assert!(
        !d.join("m.json").exists(),
        "no checkpoint after a rejected config"
    );

    let out = run(d, &["train", "b.csv", "--set", "bogus=1"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[invalid-args]: "));
    let out = run(d, &["train", "missing.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error["));
}

#[test]
fn identical_train_invocations_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen-data",
            "two-moons",
            "--n",
            "100",
            "--seed",
            "2",
            "-o",
            "b.csv",
        ],
    );
    let args = |name: &'static str| {
        vec![
            "train",
            "b.csv",
            "--iterations",
            "150",
            "--m",
            "10",
            "--batch-size",
            "32",
            "--seed",
            "5",
            "-o",
            name,
        ]
    };
    let first = ok(d, &args("a.json"));
    ok(d, &args("b.json"));
    assert_eq!(
        fs::read(d.join("a.json")).unwrap(),
        fs::read(d.join("b.json")).unwrap()
    );
    assert_eq!(
        fs::read(d.join("a.trace.csv")).unwrap(),
        fs::read(d.join("b.trace.csv")).unwrap()
    );
    assert!(first.contains("final elbo = "));

    let trace = fs::read_to_string(d.join("a.trace.csv")).unwrap();
    assert!(trace.contains("# seed = 5\n") && trace.contains("# likelihood = probit\n"));
    assert!(trace.contains("iteration,elbo,wall_seconds,delta,grad_norm\n"));
    let recs = rows(&d.join("a.trace.csv"));
    let its: Vec<&str> = recs.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(its, vec!["1", "100", "150"]);
    let elbo = |r: &Vec<String>| r[1].parse::<f64>().unwrap();
    assert!(elbo(recs.last().unwrap()) > elbo(&recs[0]));
}

#[test]
fn config_file_and_overrides_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "two-moons", "--n", "40", "-o", "b.csv"]);
    fs::write(
        d.join("run.cfg"),
        "# toy run\nlikelihood = logit\nm = 6\niterations = 20\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "train", "b.csv", "--config", "run.cfg", "--set", "m=5", "-o", "m.json",
        ],
    );
    let trace = fs::read_to_string(d.join("m.trace.csv")).unwrap();
    assert!(trace.contains("# likelihood = logit\n"));
    assert!(trace.contains("# m = 5\n"));
    assert!(trace.contains("# iterations = 20\n"));
    // the derived lengthscale default is recorded, not the placeholder
    assert!(trace.contains("# lengthscale = 0.1414"));
    let ck = fs::read_to_string(d.join("m.json")).unwrap();
    assert!(ck.contains("\"likelihood\": \"logit\""));
}

#[test]
fn grid_shape_and_untrained_binary_is_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "two-moons", "--n", "60", "-o", "b.csv"]);
    ok(
        d,
        &[
            "train",
            "b.csv",
            "--iterations",
            "0",
            "--m",
            "8",
            "-o",
            "u.json",
        ],
    );
    ok(d, &["grid", "u.json", "--resolution", "50", "-o", "g.csv"]);
    let g = rows(&d.join("g.csv"));
    assert_eq!(g.len(), 2500);
    for r in &g {
        let v = numeric(r);
        assert_eq!(v.len(), 4);
        assert_eq!(v[2], 0.5);
        assert_eq!(v[3], 0.5);
    }
    assert_eq!(numeric(&g[0])[..2], [-3.0, -3.0]);
    assert_eq!(numeric(&g[1])[..2], [-3.0 + 6.0 / 49.0, -3.0]);
    assert_eq!(numeric(&g[2499])[..2], [3.0, 3.0]);
    let z = rows(&d.join("g.inducing.csv"));
    assert_eq!(z.len(), 8);
}

#[test]
fn grid_and_predict_agree_at_the_same_points() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen-data",
            "gp-multiclass",
            "--n",
            "120",
            "--classes",
            "3",
            "-o",
            "t.csv",
        ],
    );
    for lik in ["softmax", "logit"] {
        let ck = format!("{lik}.json");
        ok(
            d,
            &[
                "train",
                "t.csv",
                "--likelihood",
                lik,
                "--iterations",
                "60",
                "--m",
                "10",
                "-o",
                &ck,
            ],
        );
        ok(
            d,
            &[
                "grid",
                &ck,
                "--resolution",
                "7",
                "--bounds",
                "-2,2,-1,3",
                "-o",
                "g.csv",
            ],
        );
        let g = rows(&d.join("g.csv"));
        assert_eq!(g.len(), 49);
        // feed the grid points back in reverse order
        let pts: String = g
            .iter()
            .rev()
            .map(|r| format!("{},{}\n", r[0], r[1]))
            .collect();
        fs::write(d.join("pts.csv"), pts).unwrap();
        ok(d, &["predict", &ck, "pts.csv", "-o", "p.csv"]);
        let p = rows(&d.join("p.csv"));
        assert_eq!(p.len(), 49);
        for (gr, pr) in g.iter().zip(p.iter().rev()) {
            let (gv, pv) = (numeric(gr), numeric(&pr[..5]));
            assert_eq!(gv[..2], pv[..2]);
            let sum: f64 = gv[2..].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            for k in 2..5 {
                assert!((0.0..=1.0).contains(&gv[k]));
                assert!((gv[k] - pv[k]).abs() <= 1e-10, "{lik}: {gv:?} vs {pv:?}");
            }
        }
    }
}

#[test]
fn predict_accepts_labelled_files_and_evaluate_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen-data",
            "two-moons",
            "--n",
            "80",
            "--seed",
            "4",
            "-o",
            "b.csv",
        ],
    );
    ok(
        d,
        &[
            "train",
            "b.csv",
            "--iterations",
            "200",
            "--m",
            "10",
            "-o",
            "m.json",
        ],
    );
    let p = ok(d, &["predict", "m.json", "b.csv"]);
    let header = p.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "x1,x2,p_0,p_1,predicted");
    assert_eq!(p.lines().filter(|l| !l.starts_with('#')).count(), 81);

    let json = ok(d, &["evaluate", "m.json", "b.csv", "-o", "r.json"]);
    let r: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(
        r,
        serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap()
    );
    assert_eq!(r.n_test, 80);
    assert!((0.0..=1.0).contains(&r.accuracy) && r.mean_nll >= 0.0);
    assert!(r.accuracy > 0.8);
    assert_eq!(r.confusion.iter().flatten().sum::<usize>(), 80);
    assert_eq!(r.class_labels, vec![0.0, 1.0]);

    fs::write(d.join("wide.csv"), "1,2,3,4,0\n2,3,4,5,1\n").unwrap();
    let out = run(d, &["evaluate", "m.json", "wide.csv"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[dimension-mismatch]"));
}

#[test]
fn grid_rejects_models_that_are_not_two_dimensional() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let text: String = (0..20)
        .map(|i| format!("{},{},{},{}\n", i, i * i % 7, (i * 3) % 5, i % 2))
        .collect();
    fs::write(d.join("three.csv"), text).unwrap();
    ok(
        d,
        &[
            "train",
            "three.csv",
            "--iterations",
            "5",
            "--m",
            "4",
            "-o",
            "m.json",
        ],
    );
    let out = run(d, &["grid", "m.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[dimension-mismatch]"));
}
