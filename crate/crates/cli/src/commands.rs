use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gpcnoise::data::{
    gen_gp_multiclass, gen_two_moons, load_csv, load_csv_with_labels, load_features, normalize,
    save_csv, Dataset, LoadOptions,
};
use gpcnoise::likelihood::LikelihoodKind;
use gpcnoise::model::{
    fit, init_inducing, load_checkpoint, predict as model_predict, save_checkpoint, Checkpoint,
    KernelSharing, ModelState, Prediction, Task, TrainConfig,
};
use gpcnoise::numerics::gauss_hermite;
use gpcnoise::{GpcError, KernelSpec};
use nalgebra::DMatrix;

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::eval::{score, EvalReport};
use crate::{EvaluateArgs, GenDataArgs, Generator, GlobalArgs, GridArgs, PredictArgs, TrainArgs};

const GEN_KEYS: &[&str] = &[
    "classes",
    "gen_kernel",
    "gen_lengthscale",
    "gen_variance",
    "noise",
    "seed",
];

const TRAIN_KEYS: &[&str] = &[
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "batch_size",
    "delta",
    "iterations",
    "kernel",
    "label_column",
    "learning_rate",
    "lengthscale",
    "likelihood",
    "m",
    "normalize",
    "per_class_kernels",
    "quadrature_order",
    "record_wall_time",
    "seed",
    "trace_every",
    "train_delta",
    "train_inducing",
    "train_kernel",
    "variance",
];

const PREDICT_KEYS: &[&str] = &["label_column", "predict_samples", "seed"];

const GRID_KEYS: &[&str] = &["bounds", "predict_samples", "resolution", "seed"];

/// Defaults, then `--config`, then `--set`, then `--seed`.
fn base_settings(g: &GlobalArgs) -> CliResult<Settings> {
    let sets = g
        .set
        .iter()
        .map(|s| crate::config::parse_assignment(s))
        .collect::<CliResult<Vec<_>>>()?;
    let mut s = Settings::resolve(g.config.as_deref(), &sets)?;
    if let Some(seed) = g.seed {
        s.set("seed", seed.to_string())?;
    }
    Ok(s)
}

fn set_opt<T: ToString>(s: &mut Settings, key: &str, v: &Option<T>) -> CliResult<()> {
    if let Some(v) = v {
        s.set(key, v.to_string())?;
    }
    Ok(())
}

/// `<stem><suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn comment_block(lines: &[String]) -> String {
    lines.iter().fold(String::new(), |mut s, l| {
        let _ = writeln!(s, "# {l}");
        s
    })
}

/// 1-based column number, or `last`, as a 0-based index.
fn label_column(s: &Settings) -> CliResult<Option<usize>> {
    match s.raw("label_column") {
        "last" => Ok(None),
        _ => match s.get::<usize>("label_column")? {
            0 => Err(CliError::Args("label_column is 1-based".into())),
            k => Ok(Some(k - 1)),
        },
    }
}

/// A family name, or several joined by `+` for a sum kernel.
pub fn parse_kernel(name: &str, lengthscale: f64, variance: f64) -> CliResult<KernelSpec> {
    let parts: Vec<&str> = name.split('+').map(str::trim).collect();
    if parts.len() == 1 {
        return Ok(KernelSpec::from_name(parts[0], lengthscale, variance)?);
    }
    let children = parts
        .iter()
        .map(|p| KernelSpec::from_name(p, lengthscale, variance))
        .collect::<gpcnoise::Result<Vec<_>>>()?;
    let k = KernelSpec::sum(children);
    k.validate()?;
    Ok(k)
}

fn format_row(vals: impl IntoIterator<Item = f64>) -> String {
    vals.into_iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn label_name(v: f64) -> String {
    format!("{v}")
}

pub fn gen_data(g: &GlobalArgs, a: &GenDataArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut s = base_settings(g)?;
    set_opt(&mut s, "noise", &a.noise)?;
    set_opt(&mut s, "classes", &a.classes)?;
    set_opt(&mut s, "gen_kernel", &a.kernel)?;
    set_opt(&mut s, "gen_lengthscale", &a.lengthscale)?;
    set_opt(&mut s, "gen_variance", &a.variance)?;
    let path = g
        .out
        .as_ref()
        .ok_or_else(|| CliError::Args("gen-data needs --out <FILE>".into()))?;
    let seed: u64 = s.get("seed")?;
    let (ds, label, keys): (Dataset, &str, Vec<&str>) = match a.generator {
        Generator::TwoMoons => (
            gen_two_moons(a.n, s.get("noise")?, seed)?,
            "two-moons (surrogate for the banana benchmark)",
            vec!["noise", "seed"],
        ),
        Generator::GpMulticlass => {
            let k = parse_kernel(
                s.raw("gen_kernel"),
                s.get("gen_lengthscale")?,
                s.get("gen_variance")?,
            )?;
            let draw = gen_gp_multiclass(a.n, s.get("classes")?, &k, seed)?;
            (
                draw.dataset,
                "gp-multiclass",
                GEN_KEYS.iter().copied().filter(|k| *k != "noise").collect(),
            )
        }
    };
    let mut comments = vec![format!("generator = {label}"), format!("n = {}", a.n)];
    comments.extend(s.echo(&keys));
    save_csv(&ds, path, None, &comments)?;
    writeln!(
        out,
        "wrote {}: generator={label} n={} d={} C={} seed={seed}",
        path.display(),
        ds.len(),
        ds.dim(),
        ds.num_classes
    )?;
    Ok(())
}

pub fn train(g: &GlobalArgs, a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut s = base_settings(g)?;
    set_opt(&mut s, "likelihood", &a.likelihood)?;
    set_opt(&mut s, "kernel", &a.kernel)?;
    set_opt(&mut s, "lengthscale", &a.lengthscale)?;
    set_opt(&mut s, "variance", &a.variance)?;
    set_opt(&mut s, "m", &a.m)?;
    set_opt(&mut s, "iterations", &a.iterations)?;
    set_opt(&mut s, "batch_size", &a.batch_size)?;
    set_opt(&mut s, "learning_rate", &a.learning_rate)?;
    set_opt(&mut s, "delta", &a.delta)?;
    set_opt(&mut s, "label_column", &a.label_column)?;

    let ckpt_path = g.out.clone().unwrap_or_else(|| PathBuf::from("model.json"));
    let trace_path = a
        .trace
        .clone()
        .unwrap_or_else(|| sibling(&ckpt_path, ".trace.csv"));

    let opts = LoadOptions {
        label_column: label_column(&s)?,
        has_header: None,
    };
    let raw = load_csv(&a.data, &opts)?;
    let likelihood = LikelihoodKind::from_name(s.raw("likelihood"))?;
    // rejects softmax on binary data before any work is done
    let task = Task::for_problem(likelihood, raw.num_classes)?;
    if s.raw("lengthscale") == "auto" {
        s.set(
            "lengthscale",
            format!("{}", 0.1 * (raw.dim() as f64).sqrt()),
        )?;
    }
    let ds = if s.get_bool("normalize")? {
        normalize(&raw)
    } else {
        raw
    };
    let n = ds.len();
    let seed: u64 = s.get("seed")?;
    let kernel = parse_kernel(s.raw("kernel"), s.get("lengthscale")?, s.get("variance")?)?;
    let sharing = if s.get_bool("per_class_kernels")? {
        KernelSharing::PerClass
    } else {
        KernelSharing::Shared
    };
    let m = s.get::<usize>("m")?.min(n);
    let inducing = init_inducing(&ds.x, m, seed)?;
    let model = ModelState::new(
        likelihood,
        ds.num_classes,
        kernel,
        sharing,
        inducing,
        s.get("delta")?,
        n,
    )?;
    let cfg = TrainConfig {
        iterations: s.get("iterations")?,
        batch_size: Some(s.get::<usize>("batch_size")?.min(n)),
        learning_rate: s.get("learning_rate")?,
        adam_beta1: s.get("adam_beta1")?,
        adam_beta2: s.get("adam_beta2")?,
        adam_eps: s.get("adam_eps")?,
        seed,
        quadrature_order: s.get("quadrature_order")?,
        trace_every: s.get("trace_every")?,
        train_kernel: s.get_bool("train_kernel")?,
        train_inducing: s.get_bool("train_inducing")?,
        train_delta: s.get_bool("train_delta")?,
        record_wall_time: s.get_bool("record_wall_time")?,
    };
    let (trained, trace) = fit(&model, &ds, &cfg)?;

    let mut config = s.subset(TRAIN_KEYS);
    config.insert("m".into(), m.to_string());
    config.insert("task".into(), task.name().into());
    let mut echo: Vec<String> = config.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    echo.sort();
    let ck = Checkpoint::new(
        trained.clone(),
        ds.label_map.clone(),
        ds.normalization.clone(),
        config,
    );
    save_checkpoint(&ck, &ckpt_path)?;
    fs::write(&trace_path, comment_block(&echo) + &trace.to_csv())?;

    let final_elbo = gpcnoise::model::elbo(
        &trained,
        &ds.x,
        &ds.class_indices(),
        &gauss_hermite(cfg.quadrature_order)?,
    )?;
    writeln!(
        out,
        "task={} likelihood={} n={n} d={} C={} m={m} iterations={} seed={seed}",
        task.name(),
        likelihood.name(),
        ds.dim(),
        ds.num_classes,
        cfg.iterations
    )?;
    if let (Some(first), Some(last)) = (trace.records.first(), trace.records.last()) {
        writeln!(
            out,
            "trace elbo: iteration {} = {}, iteration {} = {}",
            first.iteration, first.elbo, last.iteration, last.elbo
        )?;
    }
    if let Some(nf) = &trained.noise {
        writeln!(out, "delta = {}", nf.delta())?;
    }
    writeln!(out, "final elbo = {final_elbo}")?;
    writeln!(
        out,
        "wrote {} and {}",
        ckpt_path.display(),
        trace_path.display()
    )?;
    Ok(())
}

fn predict_settings(g: &GlobalArgs, samples: &Option<usize>) -> CliResult<Settings> {
    let mut s = base_settings(g)?;
    set_opt(&mut s, "predict_samples", samples)?;
    Ok(s)
}

/// Normalizes raw features with the checkpoint's statistics and predicts.
fn predict_raw(ck: &Checkpoint, x_raw: &DMatrix<f64>, s: &Settings) -> CliResult<Prediction> {
    let d = ck.model.input_dim();
    if x_raw.ncols() != d {
        return Err(GpcError::DimensionMismatch(format!(
            "data has {} features, checkpoint expects {d}",
            x_raw.ncols()
        ))
        .into());
    }
    let x = match &ck.normalization {
        Some(norm) => norm.apply(x_raw)?,
        None => x_raw.clone(),
    };
    let order = ck
        .config
        .get("quadrature_order")
        .map(|v| v.parse::<usize>())
        .transpose()
        .map_err(|_| CliError::Args("checkpoint has an invalid quadrature_order".into()))?
        .unwrap_or(gpcnoise::numerics::DEFAULT_QUADRATURE_ORDER);
    Ok(model_predict(
        &ck.model,
        &x,
        s.get("predict_samples")?,
        s.get("seed")?,
        &gauss_hermite(order)?,
    )?)
}

fn prob_header(ck: &Checkpoint, lead: &[String]) -> String {
    let mut cols = lead.to_vec();
    cols.extend(ck.label_map.iter().map(|&v| format!("p_{}", label_name(v))));
    cols.join(",")
}

pub fn predict(g: &GlobalArgs, a: &PredictArgs, out: &mut dyn Write) -> CliResult<()> {
    let s = predict_settings(g, &a.samples)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let d = ck.model.input_dim();
    let mut x = load_features(&a.data, None)?;
    if x.ncols() == d + 1 {
        let col = label_column(&s)?.unwrap_or(d);
        if col > d {
            return Err(CliError::Args(format!(
                "label column {} out of range for {} columns",
                col + 1,
                d + 1
            )));
        }
        x = x.remove_column(col);
    }
    let pred = predict_raw(&ck, &x, &s)?;
    let classes = pred.classes();

    let mut text = comment_block(&s.echo(PREDICT_KEYS));
    let lead: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    text.push_str(&prob_header(&ck, &lead));
    text.push_str(",predicted\n");
    for (i, &k) in classes.iter().enumerate() {
        let row = format_row(
            x.row(i)
                .iter()
                .copied()
                .chain(pred.probs.row(i).iter().copied()),
        );
        let _ = writeln!(text, "{row},{}", label_name(ck.label_map[k]));
    }
    match &g.out {
        Some(p) => {
            fs::write(p, text)?;
            writeln!(out, "wrote {} ({} rows)", p.display(), x.nrows())?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn evaluate(g: &GlobalArgs, a: &EvaluateArgs, out: &mut dyn Write) -> CliResult<()> {
    let s = predict_settings(g, &a.samples)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let opts = LoadOptions {
        label_column: label_column(&s)?,
        has_header: None,
    };
    let test = load_csv_with_labels(&a.data, &opts, &ck.label_map)?;
    let start = Instant::now();
    let pred = predict_raw(&ck, &test.x, &s)?;
    let runtime_seconds = start.elapsed().as_secs_f64();
    let (accuracy, mean_nll, confusion) = score(&pred.probs, &test.class_indices());
    let report = EvalReport {
        accuracy,
        mean_nll,
        n_test: test.len(),
        class_labels: ck.label_map.clone(),
        confusion,
        runtime_seconds,
        seed: s.get("seed")?,
        config: s.subset(PREDICT_KEYS),
    };
    let json = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(p) = &g.out {
        fs::write(p, &json)?;
    }
    out.write_all(json.as_bytes())?;
    Ok(())
}

/// Row-major grid: the second coordinate is the slow index.
pub fn grid_points(bounds: [f64; 4], resolution: usize) -> DMatrix<f64> {
    let axis = |lo: f64, hi: f64, k: usize| {
        if resolution == 1 {
            lo
        } else {
            lo + (hi - lo) * k as f64 / (resolution - 1) as f64
        }
    };
    DMatrix::from_fn(resolution * resolution, 2, |i, j| {
        let (r, c) = (i / resolution, i % resolution);
        if j == 0 {
            axis(bounds[0], bounds[1], c)
        } else {
            axis(bounds[2], bounds[3], r)
        }
    })
}

pub fn grid(g: &GlobalArgs, a: &GridArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut s = predict_settings(g, &a.samples)?;
    set_opt(&mut s, "bounds", &a.bounds)?;
    set_opt(&mut s, "resolution", &a.resolution)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    if ck.model.input_dim() != 2 {
        return Err(GpcError::DimensionMismatch(format!(
            "grid needs a 2-D model, checkpoint has {} inputs",
            ck.model.input_dim()
        ))
        .into());
    }
    let b = s.get_list("bounds")?;
    let bounds: [f64; 4] = b
        .as_slice()
        .try_into()
        .map_err(|_| CliError::Args("bounds needs x1min,x1max,x2min,x2max".into()))?;
    if !(bounds.iter().all(|v| v.is_finite()) && bounds[0] < bounds[1] && bounds[2] < bounds[3]) {
        return Err(CliError::Args(format!(
            "bounds must be finite with min < max, got {}",
            s.raw("bounds")
        )));
    }
    let res: usize = s.get("resolution")?;
    if res == 0 {
        return Err(CliError::Args("resolution must be >= 1".into()));
    }
    let x = grid_points(bounds, res);
    let pred = predict_raw(&ck, &x, &s)?;

    let echo = comment_block(&s.echo(GRID_KEYS));
    let mut text = echo.clone();
    text.push_str(&prob_header(&ck, &["x1".into(), "x2".into()]));
    text.push('\n');
    for i in 0..x.nrows() {
        text.push_str(&format_row(
            x.row(i)
                .iter()
                .copied()
                .chain(pred.probs.row(i).iter().copied()),
        ));
        text.push('\n');
    }
    let z = match &ck.normalization {
        Some(norm) => norm.invert(&ck.model.inducing.z)?,
        None => ck.model.inducing.z.clone(),
    };
    let mut ztext = echo;
    ztext.push_str("z1,z2\n");
    for i in 0..z.nrows() {
        ztext.push_str(&format_row(z.row(i).iter().copied()));
        ztext.push('\n');
    }

    let grid_path = g.out.clone().unwrap_or_else(|| PathBuf::from("grid.csv"));
    let z_path = a
        .inducing_out
        .clone()
        .unwrap_or_else(|| sibling(&grid_path, ".inducing.csv"));
    fs::write(&grid_path, text)?;
    fs::write(&z_path, ztext)?;
    writeln!(
        out,
        "wrote {} ({} rows) and {} ({} inducing points)",
        grid_path.display(),
        x.nrows(),
        z_path.display(),
        z.nrows()
    )?;
    Ok(())
}
