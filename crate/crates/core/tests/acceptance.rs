//! Acceptance gate: runs every criterion and prints one pass/fail line each.
//! Exits nonzero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use common::oracles::{brute_force_nn, fd_relative_error, pair_count_auroc, threshold_sweep_ap};
use ndarray::{array, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use synthaug::augment::{group_weights, smote_upsample, MethodId, SmoteColumn};
use synthaug::data::{FeatureSpec, Record, Schema, Table};
use synthaug::diagnostics::{discriminator_report, kde2d, l1_nn_distances, DEFAULT_KDE_GRID};
use synthaug::genclient::{
    Backend, BackendConfig, CallContext, GenError, Generator, MockBackend, MockGenerator,
};
use synthaug::metrics::{auprc, auroc};
use synthaug::model::{fit_logistic, ForestConfig, LogisticConfig, LogisticObjective};
use synthaug::prompt::{build_prompt, PromptVariant, HEART_CONTEXT};
use synthaug::runner::{
    read_csv, render_markdown, render_size_markdown, render_temperature_markdown, write_csv,
    CellStatus, DatasetSource, Experiment, ExperimentConfig, ResultsGrid,
};

type Outcome = Result<String, String>;

macro_rules! need {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric oracle equivalence", metric_oracles),
        ("logistic regression correctness", logistic_correctness),
        ("SMOTE geometry", smote_geometry),
        ("prompt goldens", prompt_goldens),
        ("generation robustness", generation_robustness),
        ("end-to-end determinism and scale", determinism_and_scale),
        ("designed-fixture effect direction", effect_direction),
        ("diagnostics", diagnostics),
        ("report fidelity", report_fidelity),
        ("skip semantics", skip_semantics),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.1}s] {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1}s] {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=500);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[n - 1] = false;
        let levels = rng.random_range(2..30);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 7.0).collect();
        worst = worst
            .max((auroc(&labels, &scores).unwrap() - pair_count_auroc(&labels, &scores)).abs())
            .max((auprc(&labels, &scores).unwrap() - threshold_sweep_ap(&labels, &scores)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    need!(worst <= 1e-9, "max deviation {worst:e}");
    need!(secs < 5.0, "took {secs:.2}s");
    Ok(format!("200 tied instances, max deviation {worst:.1e}, {secs:.2}s"))
}

fn logistic_problem(seed: u64, n: usize, d: usize) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut x = Array2::zeros((n, d));
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            x[[i, j]] = z * (j + 1) as f64 + 2.0;
            s += beta[j] * z;
        }
        y[i] = f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-s).exp()));
    }
    y[0] = 1.0;
    y[1] = 0.0;
    (x, y)
}

fn logistic_correctness() -> Outcome {
    let cfg = LogisticConfig::default();
    let mut worst_fd = 0.0f64;
    for seed in 0..20 {
        let (x, y) = logistic_problem(seed, 150, 4);
        let obj = LogisticObjective::new(x.view(), y.view(), None, cfg.l2).unwrap();
        let early = fit_logistic(x.view(), y.view(), None, &LogisticConfig { max_iter: 3, ..cfg }).unwrap();
        worst_fd = worst_fd.max(fd_relative_error(&obj, &early.params()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let p: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        worst_fd = worst_fd.max(fd_relative_error(&obj, &p));

        let full = fit_logistic(x.view(), y.view(), None, &cfg).unwrap();
        let trace = &full.report.objective_trace;
        need!(trace.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: objective increased");
    }
    need!(worst_fd <= 1e-4, "gradient relative error {worst_fd:e}");

    let (x, y) = logistic_problem(77, 80, 3);
    let ind: Array1<f64> = (0..80).map(|i| f64::from(i >= 60)).collect();
    let xi = ndarray::concatenate(Axis(1), &[x.view(), ind.view().insert_axis(Axis(1))]).unwrap();
    let w = group_weights(ind.view()).unwrap();
    let rows: Vec<usize> = (0..80).flat_map(|i| std::iter::repeat_n(i, if i >= 60 { 3 } else { 1 })).collect();
    let (xd, yd) = (xi.select(Axis(0), &rows), y.select(Axis(0), &rows));
    let a = fit_logistic(xi.view(), y.view(), Some(w.view()), &cfg).unwrap();
    let b = fit_logistic(xd.view(), yd.view(), None, &cfg).unwrap();
    let coef = a
        .params()
        .iter()
        .zip(b.params())
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max);
    let objective = (a.report.objective - b.report.objective).abs();
    need!(coef <= 1e-4, "weighted vs duplicated coefficients differ by {coef:e}");
    need!(objective <= 1e-8, "weighted vs duplicated objective differs by {objective:e}");
    Ok(format!(
        "fd error {worst_fd:.1e}, monotone on 20 problems, dup-vs-weights coef {coef:.1e} objective {objective:.1e}"
    ))
}

fn smote_geometry() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(10..60);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-4.0..4.0));
        let target = n + rng.random_range(1..200);
        let out = smote_upsample(x.view(), &[SmoteColumn::Continuous; 3], target, 5, seed, None).unwrap();
        need!(out.rows.nrows() == target - n, "seed {seed}: {} rows for target {target}", out.rows.nrows());
        for (r, &(b, nn, l)) in out.pairs.iter().enumerate() {
            let res = (0..3)
                .map(|c| (out.raw[[r, c]] - x[[b, c]] - l * (x[[nn, c]] - x[[b, c]])).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(res);
        }
    }
    need!(worst <= 1e-9, "collinearity residual {worst:e}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array2::from_shape_fn((100, 4), |_| rng.random_range(0.0..1.0));
    let out = smote_upsample(x.view(), &[SmoteColumn::Continuous; 4], 1000, 5, 0, None).unwrap();
    need!(out.rows.nrows() == 900, "100 -> 1000 gave {}", out.rows.nrows());
    let diag = smote_upsample(array![[0.0, 0.0], [1.0, 1.0]].view(), &[SmoteColumn::Continuous; 2], 30, 1, 0, None)
        .unwrap();
    need!(
        diag.rows.rows().into_iter().all(|r| r[0] == r[1] && (0.0..=1.0).contains(&r[0])),
        "two-point minority left the diagonal"
    );
    Ok(format!("residual {worst:.1e}, 100 -> 1000 adds 900 rows"))
}

fn prompt_goldens() -> Outcome {
    let schema = Schema::new(
        vec![
            FeatureSpec::numeric("Age", Some([0.0, 120.0])),
            FeatureSpec::binary("Sex (Male)"),
            FeatureSpec::categorical("Smoker", ["never", "current", "former"]),
            FeatureSpec::numeric("SBP", None),
        ],
        "race",
        vec!["White".into(), "Asian".into()],
        vec!["CVD".into(), "Death".into()],
    )
    .unwrap();
    let examples: Vec<Record> = [
        ([54.0, 1.0, 0.0, 128.25], [false, false]),
        ([61.5, 0.0, 1.0, 141.0], [true, false]),
        ([47.0, 1.0, 2.0, 119.333_333_3], [false, true]),
    ]
    .into_iter()
    .map(|(f, o)| common::record(&f, &o))
    .collect();
    let tailored = build_prompt(&schema, &examples, HEART_CONTEXT, PromptVariant::GroupTailored("Asian".into()), 10)
        .unwrap()
        .render();
    let generic = build_prompt(&schema, &examples, HEART_CONTEXT, PromptVariant::Generic, 10).unwrap().render();
    need!(tailored == include_str!("fixtures/prompts/tailored.txt"), "tailored prompt differs from golden");
    need!(generic == include_str!("fixtures/prompts/generic.txt"), "generic prompt differs from golden");
    for text in [&tailored, &generic] {
        for phrase in [
            "You are a synthetic data generator.",
            "DO NOT COPY THE EXAMPLES",
            "Use the same JSON format as above",
        ] {
            need!(text.contains(phrase), "missing {phrase:?}");
        }
    }
    need!(tailored.contains("specifically for Asian patients"), "tailored clause missing");
    need!(!generic.contains("specifically for"), "generic prompt names a group");
    Ok("both variants byte-identical to goldens".into())
}

struct Counting {
    inner: MockBackend,
    malformed: bool,
    calls: AtomicUsize,
}

impl Backend for Counting {
    fn id(&self) -> String {
        "counting".into()
    }

    fn complete(&self, rendered: &str, ctx: &CallContext) -> Result<String, GenError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.malformed {
            Ok("{\"x1\": [0.5,".into())
        } else {
            self.inner.complete(rendered, ctx)
        }
    }

    fn is_local(&self) -> bool {
        true
    }
}

fn generation_robustness() -> Outcome {
    let schema = Arc::new(common::schema(&["A", "B"]));
    let spec = common::designed_spec(&[("A", 50), ("B", 50)]);
    let table = spec.make_fixture(0).unwrap();
    let examples: Vec<Record> = table.records()[50..70].to_vec();
    let prompt = build_prompt(&schema, &examples, "test", PromptVariant::GroupTailored("B".into()), 10).unwrap();
    let backend = |malformed| {
        Arc::new(Counting {
            inner: MockBackend::new(Arc::clone(&schema), MockGenerator::default()),
            malformed,
            calls: AtomicUsize::new(0),
        })
    };
    let cfg = BackendConfig {
        max_retries_per_batch: 5,
        ..BackendConfig::mock()
    };

    let bad = backend(true);
    let result = Generator::new(bad.clone(), cfg.clone(), Arc::clone(&schema)).generate_to_target(&prompt, 10, 0);
    need!(
        matches!(result, Err(GenError::BackendExhausted { attempts: 5, .. })),
        "malformed backend gave {result:?}"
    );
    need!(bad.calls.load(Ordering::SeqCst) == 5, "expected 5 attempts");

    let mut counts = Vec::new();
    for target in [7, 10, 900] {
        let good = backend(false);
        let batch = Generator::new(good.clone(), cfg.clone(), Arc::clone(&schema))
            .generate_to_target(&prompt, target, 1)
            .map_err(|e| e.to_string())?;
        need!(batch.rows.len() == target, "target {target} gave {} rows", batch.rows.len());
        need!(
            good.calls.load(Ordering::SeqCst) == target.div_ceil(10),
            "target {target} used {} requests",
            good.calls.load(Ordering::SeqCst)
        );
        counts.push(format!("{target}->{}", batch.rows.len()));
    }
    Ok(format!("exhaustion after 5 malformed attempts; targets {}", counts.join(", ")))
}

fn determinism_and_scale() -> Outcome {
    let table = Arc::new(
        common::designed_spec(&[("A", 8000), ("B", 1000), ("C", 1000)])
            .make_fixture(2024)
            .unwrap(),
    );
    need!(table.len() == 10_000, "fixture has {} rows", table.len());
    let mut cfg = ExperimentConfig::new(
        DatasetSource::Fixture {
            spec: "designed.json".into(),
            seed: 2024,
        },
        "A",
        &["B", "C"],
        &common::OUTCOMES,
    );
    cfg.master_seed = 11;
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let run = || -> Result<(ResultsGrid, f64), String> {
        let start = Instant::now();
        let grid = Experiment::new(cfg.clone(), Arc::clone(&table))
            .map_err(|e| e.to_string())?
            .run_grid();
        Ok((grid, start.elapsed().as_secs_f64()))
    };
    let (a, ta) = run()?;
    let (b, tb) = run()?;
    need!(a.len() == 24, "{} cells", a.len());
    let complete = a.cells.iter().filter(|c| c.summary.status == CellStatus::Complete).count();
    need!(complete == 24, "{complete} of 24 cells complete");
    need!(a.cells.iter().all(|c| c.summary.reps == 25), "not every cell ran 25 reps");
    need!(a == b, "two runs differ");
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    write_csv(&a, &mut ca).unwrap();
    write_csv(&b, &mut cb).unwrap();
    need!(ca == cb, "serialized grids differ");
    need!(ta < 120.0 && tb < 120.0, "runs took {ta:.1}s and {tb:.1}s");
    Ok(format!(
        "24 cells x 25 reps on 10000 rows, bit-identical, {ta:.1}s and {tb:.1}s with {} workers",
        cfg.workers
    ))
}

fn effect_direction() -> Outcome {
    let spec = common::designed_spec(&[("A", 5000), ("B", 1000)]);
    let table = Arc::new(spec.make_fixture(99).unwrap());
    let sampler = Arc::new(spec.sampler().unwrap());
    let backend = Arc::new(MockBackend::new(table.schema_arc(), MockGenerator::with_oracle(sampler)));
    let mut cfg = ExperimentConfig::new(
        DatasetSource::Fixture {
            spec: "designed.json".into(),
            seed: 99,
        },
        "A",
        &["B"],
        &["y1"],
    );
    cfg.methods = vec![MethodId::Baseline, MethodId::GptGroup];
    cfg.master_seed = 3;
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let grid = Experiment::with_backend(cfg, table, backend)
        .map_err(|e| e.to_string())?
        .run_grid();
    let mean = |m| {
        grid.get("B", "y1", m)
            .and_then(|s| s.auroc)
            .map(|s| s.mean)
            .ok_or_else(|| format!("{m} cell has no AUROC"))
    };
    let (base, group) = (mean(MethodId::Baseline)?, mean(MethodId::GptGroup)?);
    let gain = group - base;
    need!(
        gain >= 0.005,
        "GptGroup {group:.4} vs Baseline {base:.4}: improvement {gain:.4} below 0.005"
    );
    Ok(format!(
        "GptGroup {group:.4} vs Baseline {base:.4} over 25 reps: improvement {gain:.4} (>= 0.02: {})",
        if gain >= 0.02 { "yes" } else { "no" }
    ))
}

fn diagnostics() -> Outcome {
    let schema = common::schema(&["A"]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let row = |rng: &mut ChaCha8Rng| {
        common::record(
            &[
                rng.random_range(-8.0..8.0),
                rng.random_range(-8.0..8.0),
                rng.random_range(0.0..40.0),
                f64::from(rng.random::<bool>()),
                rng.random_range(0..3) as f64,
            ],
            &[false, false],
        )
    };
    let reference: Vec<Record> = (0..200).map(|_| row(&mut rng)).collect();
    let mut synth: Vec<Record> = (0..100).map(|_| row(&mut rng)).collect();
    synth.push(reference[37].clone());
    let d = l1_nn_distances(&synth, &reference, &schema).unwrap();
    need!(d[100] == 0.0, "copied row distance {}", d[100]);
    need!(d == brute_force_nn(&synth, &reference, &schema), "distances differ from brute force");

    let x: Vec<f64> = (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
    let mass = kde2d(&x, &y, DEFAULT_KDE_GRID).unwrap().mass();
    need!((0.95..=1.0).contains(&mass), "KDE mass {mass}");

    let table = common::separable_spec(400, 200).make_fixture(1).unwrap();
    let group = |g: usize| -> Vec<Record> {
        table.rows_in_group(g).iter().map(|&i| table.record(i).clone()).collect()
    };
    let r = discriminator_report(&group(1), &group(0), &[], table.schema(), 5, &ForestConfig::default()).unwrap();
    let [_, min, maj] = r.means();
    need!(maj <= 0.2 && min >= 0.8, "holdout means majority {maj:.3} minority {min:.3}");
    Ok(format!(
        "copied row at 0, brute force exact, KDE mass {mass:.4}, discriminator majority {maj:.3} minority {min:.3}"
    ))
}

fn small_experiment(methods: &[MethodId]) -> Experiment {
    let table = Arc::new(
        common::designed_spec(&[("A", 600), ("B", 200), ("C", 200)])
            .make_fixture(4)
            .unwrap(),
    );
    let mut cfg = ExperimentConfig::new(
        DatasetSource::Fixture {
            spec: "designed.json".into(),
            seed: 4,
        },
        "A",
        &["B", "C"],
        &common::OUTCOMES,
    );
    cfg.methods = methods.to_vec();
    cfg.n_maj = 300;
    cfg.n_min = 50;
    cfg.k_prompt = 20;
    cfg.reps = 2;
    Experiment::new(cfg, table).unwrap()
}

fn report_fidelity() -> Outcome {
    let exp = small_experiment(&MethodId::ALL);
    let grid = exp.run_grid();
    let md = render_markdown(&grid, "designed");
    need!(
        md.contains("| Dataset | Subgroup | Outcome | Baseline | Upweighted | Separate | SMOTE | Group | Generic |"),
        "markdown header does not list the six methods"
    );
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| designed |")).collect();
    need!(rows.len() == 8, "expected 8 data rows (AUROC + AUPRC), got {}", rows.len());
    need!(rows.iter().all(|r| r.contains("**")), "a row lacks a best-method mark");

    let mut buf = Vec::new();
    write_csv(&grid, &mut buf).unwrap();
    need!(read_csv(buf.as_slice()).unwrap() == grid, "CSV round trip changed the grid");

    let temps = exp.sweep_temperature(&[0.5, 0.9, 1.2]).map_err(|e| e.to_string())?;
    let tmd = render_temperature_markdown(&temps);
    need!(
        tmd.contains("| Subgroup | Outcome | Temp = 0.5 | Temp = 0.9 | Temp = 1.2 |"),
        "temperature table header"
    );
    need!(tmd.lines().filter(|l| l.starts_with("| B |") || l.starts_with("| C |")).count() == 4, "temperature rows");

    let sizes = small_experiment(&[MethodId::Baseline, MethodId::GptGroup])
        .sweep_minority_size(&[50, 100, 150])
        .map_err(|e| e.to_string())?;
    let smd = render_size_markdown(&sizes);
    let order: Vec<String> = smd
        .lines()
        .filter(|l| l.starts_with("| B |") || l.starts_with("| C |"))
        .map(|l| l.split(" | ").take(3).collect::<Vec<_>>().join(" "))
        .collect();
    let expected: Vec<String> = ["B", "C"]
        .iter()
        .flat_map(|g| {
            common::OUTCOMES
                .iter()
                .flat_map(move |o| ["50", "100", "150"].map(|s| format!("| {g} {o} {s}")))
        })
        .collect();
    need!(order == expected, "size rows out of order: {order:?}");
    need!(smd.contains("| Subgroup | Outcome | Size | Baseline | Group |"), "size table header");
    Ok("six-method columns with best marks, lossless CSV, temperature and size layouts".into())
}

fn skip_semantics() -> Outcome {
    let mut spec = common::designed_spec(&[("A", 600), ("B", 200)]);
    spec.groups[1].outcomes[1] = synthaug::data::OutcomeModel {
        coefficients: vec![0.0; 6],
        intercept: Some(-60.0),
        prevalence: None,
    };
    let table: Table = spec.make_fixture(6).unwrap();
    let b = table.schema().require_group("B").unwrap();
    need!(table.positives(&table.rows_in_group(b), 1) == 0, "fixture has minority positives");
    let mut cfg = ExperimentConfig::new(
        DatasetSource::Fixture {
            spec: "designed.json".into(),
            seed: 6,
        },
        "A",
        &["B"],
        &common::OUTCOMES,
    );
    cfg.n_maj = 300;
    cfg.n_min = 50;
    cfg.reps = 2;
    let grid = Experiment::new(cfg, Arc::new(table)).map_err(|e| e.to_string())?.run_grid();
    for m in MethodId::ALL {
        let y2 = grid.get("B", "y2", m).ok_or("missing y2 cell")?;
        need!(matches!(y2.status, CellStatus::Skipped(_)), "{m} on y2 is {:?}", y2.status);
        need!(y2.reps == 0 && y2.auroc.is_none(), "{m} on y2 carries metrics");
        let y1 = grid.get("B", "y1", m).ok_or("missing y1 cell")?;
        need!(y1.status == CellStatus::Complete, "{m} on y1 is {:?}", y1.status);
    }
    let md = render_markdown(&grid, "designed");
    need!(md.contains("—[^1]"), "skipped cell not footnoted");
    Ok("6 zero-positive cells skipped with footnotes, 6 neighbors complete".into())
}
