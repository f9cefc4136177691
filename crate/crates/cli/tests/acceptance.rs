//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use physimage::classifier::{MlpModel, MlpShape};
use physimage::dataset::{assign_split, split_counts, Split, SplitFractions, SplitMode};
use physimage::embedding::{pca_fit, BuiltinExtractor, CONCAT_DIM, DEFAULT_EXTRACTOR_SEED, FEATURE_DIM};
use physimage::encoders::{
    encode, gadf, gadf_raw, gasf, gasf_raw, mtf, quantile_states, rp_binary, rp_continuous, transition_matrix,
    EncoderSpec, SquareMatrix,
};
use physimage::evaluation::{
    combined_matrix, compare, cross_user_matrix, encoder_comparison, paired_ttest, personalized, ExperimentConfig,
};
use physimage::pipeline::{featurize, PipelineConfig};
use physimage::signals::{synchronize, windows};
use physimage::synthgen::{distance_structured_session, generate_cohort, CohortConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn encoder_math() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for w in 0..1000 {
        let x: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..=1.0)).collect();
        let th = rng.random_range(0.05..0.95);
        let (rc, rb) = (rp_continuous(&x), rp_binary(&x, th));
        let (s, d) = (gasf_raw(&x).unwrap(), gadf_raw(&x).unwrap());
        for i in 0..120 {
            check(rc.get(i, i) == 0.0 && rb.get(i, i) == 1.0, || format!("window {w}: RP diagonal"))?;
            check(d.get(i, i).abs() < 1e-12, || format!("window {w}: GADF diagonal"))?;
            for j in 0..120 {
                check(rc.get(i, j) == rc.get(j, i) && rb.get(i, j) == rb.get(j, i), || format!("window {w}: RP symmetry"))?;
                check((s.get(i, j) - s.get(j, i)).abs() < 1e-12, || format!("window {w}: GASF symmetry"))?;
                check((d.get(i, j) + d.get(j, i)).abs() < 1e-12, || format!("window {w}: GADF antisymmetry"))?;
            }
        }
        for q in [4, 128] {
            let states = quantile_states(&x, q);
            let wm = transition_matrix::<f64>(&states);
            for row in wm.chunks(states.n_states) {
                check((row.iter().sum::<f64>() - 1.0).abs() < 1e-12, || format!("window {w}: MTF-{q} row sum"))?;
            }
        }
        let images = [rc, rb, gasf(&x).unwrap(), gadf(&x).unwrap(), mtf(&x, 4).unwrap(), mtf(&x, 128).unwrap()];
        for m in &images {
            check(m.as_slice().iter().all(|v| (0.0..=1.0).contains(v)), || format!("window {w}: entry outside [0,1]"))?;
        }
    }
    let el = t.elapsed();
    check(el < Duration::from_secs(30), || format!("took {}", secs(el)))?;
    Ok(format!("1000 windows in {}", secs(el)))
}

fn close(m: &SquareMatrix<f64>, want: &[&[f64]]) -> bool {
    let rows: Vec<Vec<f64>> = want.iter().map(|r| r.to_vec()).collect();
    m.max_abs_diff(&SquareMatrix::from_rows(&rows).unwrap()) <= 1e-12
}

fn hand_vectors() -> Outcome {
    check(close(&rp_continuous(&[0.0, 1.0]), &[&[0.0, 1.0], &[1.0, 0.0]]), || "continuous RP".into())?;
    check(
        close(&rp_binary(&[0.0, 0.4, 1.0], 0.5), &[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]),
        || "binary RP".into(),
    )?;
    check(close(&gasf_raw(&[0.0, 1.0]).unwrap(), &[&[-1.0, 0.0], &[0.0, 1.0]]), || "raw GASF".into())?;
    check(close(&gasf(&[0.0, 1.0]).unwrap(), &[&[0.0, 0.5], &[0.5, 1.0]]), || "GASF".into())?;
    check(close(&gadf_raw(&[0.0, 1.0]).unwrap(), &[&[0.0, 1.0], &[-1.0, 0.0]]), || "raw GADF".into())?;
    check(close(&gadf(&[0.0, 1.0]).unwrap(), &[&[0.5, 1.0], &[0.0, 0.5]]), || "GADF".into())?;
    let g = gadf(&[0.2, 0.9, 0.5, 0.1]).unwrap();
    check((0..4).all(|i| (g.get(i, i) - 0.5f64).abs() <= 1e-12), || "GADF diagonal 0.5".into())?;

    let x = [0.0, 1.0, 0.0, 1.0];
    let q = quantile_states(&x, 2);
    check(transition_matrix::<f64>(&q) == vec![0.0, 1.0, 1.0, 0.0], || "checkerboard W".into())?;
    let cb = mtf(&x, 2).unwrap();
    let want: Vec<Vec<f64>> =
        (0..4).map(|i| (0..4).map(|j| if (i + j) % 2 == 1 { 1.0 } else { 0.0 }).collect()).collect();
    check(cb.max_abs_diff(&SquareMatrix::from_rows(&want).unwrap()) <= 1e-12, || "checkerboard M".into())?;

    let ramp = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
    let q = quantile_states(&ramp, 2);
    check(q.states == vec![0, 0, 1, 1], || format!("ramp states {:?}", q.states))?;
    let w = transition_matrix::<f64>(&q);
    check(w.iter().zip([0.5, 0.5, 0.0, 1.0]).all(|(a, b)| (a - b).abs() <= 1e-12), || format!("ramp W {w:?}"))?;
    let m = mtf(&ramp, 2).unwrap();
    check((m.get(0, 2) - 0.5f64).abs() <= 1e-12 && (m.get(2, 2) - 1.0f64).abs() <= 1e-12, || "ramp M".into())?;
    Ok("RP, GASF/GADF, MTF checkerboard and ramp".into())
}

fn shape_contract() -> Outcome {
    let t = Instant::now();
    let cfg = CohortConfig { n_users: 1, duration_s: Some(30.0 + 3.0 * 159.0), ..Default::default() };
    let (_, rec) = generate_cohort(&cfg).unwrap().remove(0);
    let pc = PipelineConfig::default();
    let groups = windows(&synchronize(&rec, pc.window.fs).unwrap(), &pc.window).unwrap();
    let img = encode::<f64>(&groups[0].channels[0], &pc.encoder).unwrap();
    check(img.matrix.side() == 120, || format!("image side {}", img.matrix.side()))?;
    check(FEATURE_DIM == 2048, || "per-channel width".into())?;

    let ex = BuiltinExtractor::<f64>::new(DEFAULT_EXTRACTOR_SEED);
    let feats = featurize(&rec, &pc, &ex).unwrap();
    check(feats.records.len() == 160, || format!("{} windows", feats.records.len()))?;
    check(feats.records.iter().all(|r| r.concat.len() == 14_336) && CONCAT_DIM == 14_336, || "concat width".into())?;

    let x = ExperimentConfig { n_runs: 1, ..Default::default() };
    let (_, group) = personalized(&feats, &x).unwrap();
    let ck = group.checkpoint(0, &x);
    let pca = ck.pca.as_ref().unwrap();
    check(pca.k() == 100 && pca.dim() == 14_336, || format!("PCA {}x{}", pca.k(), pca.dim()))?;
    check(ck.mlp.shape().widths() == [100, 25, 10, 4], || format!("MLP {:?}", ck.mlp.shape().widths()))?;
    let el = t.elapsed();
    check(el < Duration::from_secs(60), || format!("took {}", secs(el)))?;
    Ok(format!("120x120 -> 2048 x 7 = 14336 -> 100 -> 25 -> 10 -> 4 in {}", secs(el)))
}

fn oracles() -> Outcome {
    // PCA against a covariance eigendecomposition
    let mut rng = ChaCha8Rng::seed_from_u64(50_200);
    let dirs: Vec<Vec<f64>> = (0..3).map(|_| (0..200).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let data: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let w: Vec<f64> = (0..3).map(|k| rng.random_range(-1.0..1.0) * (6.0 - 2.0 * k as f64)).collect();
            (0..200).map(|j| (0..3).map(|k| w[k] * dirs[k][j]).sum::<f64>() + 0.1 * rng.random_range(-1.0..1.0)).collect()
        })
        .collect();
    let rows: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
    let model = pca_fit(&rows, 3).unwrap();
    let m = DMatrix::from_fn(50, 200, |i, j| data[i][j]);
    let mean = m.row_mean();
    let c = DMatrix::from_fn(50, 200, |i, j| m[(i, j)] - mean[j]);
    let eig = SymmetricEigen::new(c.transpose() * &c / 49.0);
    let mut order: Vec<usize> = (0..200).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut worst = 0.0f64;
    for (k, &idx) in order.iter().take(3).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let plus = model.components[k].iter().zip(v.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let minus = model.components[k].iter().zip(v.iter()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        worst = worst.max(plus.min(minus));
    }
    check(worst < 1e-8, || format!("PCA component error {worst:e}"))?;

    // MLP gradient against central differences
    let shape = MlpShape { input: 5, hidden: [6, 4], classes: 4 };
    let net = MlpModel::<f64>::he_init(shape, &mut rng);
    let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i)).collect();
    let (_, grad) = net.backward(&batch);
    let p = net.params();
    let h = 1e-5;
    let mut rel = 0.0f64;
    for i in 0..p.len() {
        let at = |delta: f64| {
            let mut q = p.clone();
            q[i] += delta;
            let mut n = net.clone();
            n.set_params(&q);
            n.mean_loss(&batch)
        };
        let num = (at(h) - at(-h)) / (2.0 * h);
        rel = rel.max((num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-8));
    }
    check(rel < 1e-4, || format!("gradient relative error {rel:e}"))?;

    // paired t-test reference
    let t = paired_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
    check((t.t - 4.2426).abs() < 1e-4 && (t.p - 0.0132).abs() < 1e-3, || format!("t = {}, p = {}", t.t, t.p))?;
    Ok(format!("PCA {worst:.1e}, gradient {rel:.1e}, t = {:.4}, p = {:.4}", t.t, t.p))
}

fn split_contract() -> Outcome {
    let f = SplitFractions::default();
    for (n, want) in [(10, [7, 1, 2]), (100, [70, 15, 15]), (2158, [1510, 323, 325])] {
        let got = split_counts(n, &f);
        check(got == want, || format!("n = {n}: {got:?}"))?;
        for mode in [SplitMode::Random, SplitMode::Block] {
            let a = assign_split(n, 17, &f, mode);
            check(a == assign_split(n, 17, &f, mode), || format!("n = {n}: not reproducible"))?;
            let counts = Split::ALL.map(|s| a.iter().filter(|&&x| x == s).count());
            check(counts == want, || format!("n = {n} {mode:?}: assigned {counts:?}"))?;
        }
    }
    Ok("10 -> 7/1/2, 100 -> 70/15/15, 2158 -> 1510/323/325, bit-exact".into())
}

fn personalization_effect() -> Outcome {
    let t = Instant::now();
    let cfg = CohortConfig::default();
    let ex = BuiltinExtractor::<f64>::new(DEFAULT_EXTRACTOR_SEED);
    let users = generate_cohort(&cfg)
        .unwrap()
        .iter()
        .map(|(_, rec)| featurize(rec, &PipelineConfig::default(), &ex).unwrap())
        .collect::<Vec<_>>();
    let x = ExperimentConfig::default();
    let cross = cross_user_matrix(&users, &x).unwrap();
    let comb = combined_matrix(&users, &x).unwrap();
    let cmp = compare(&cross, &comb).unwrap();
    let el = t.elapsed();

    let n = users.len();
    let diag: Vec<f64> = (0..n).map(|i| cross.diagonal(i).unwrap().accuracy.mean).collect();
    let loo: Vec<f64> = (0..n).map(|i| comb.diagonal(i).unwrap().accuracy.mean).collect();
    let mean_diag = diag.iter().sum::<f64>() / n as f64;
    let off = cross.mean_off_diagonal_accuracy().ok_or("no off-diagonal cells")?;
    let pct = |v: &[f64]| v.iter().map(|a| format!("{:.1}", 100.0 * a)).collect::<Vec<_>>().join("/");
    let detail = format!(
        "diag {} %, off-diag {:.1} %, LOO {} %, p = {:.2e}, {}",
        pct(&diag),
        100.0 * off,
        pct(&loo),
        cmp.ttests[0].p,
        secs(el)
    );
    check(diag.iter().all(|&d| d >= 0.85), || format!("(a) diagonal below 0.85: {detail}"))?;
    check(off <= mean_diag - 0.20, || format!("(b) off-diagonal too high: {detail}"))?;
    check(loo.iter().zip(&diag).all(|(l, d)| *l <= d - 0.15), || format!("(c) leave-one-out too high: {detail}"))?;
    check(cmp.ttests[0].p < 0.05, || format!("(d) p not below 0.05: {detail}"))?;
    check(el <= Duration::from_secs(600), || format!("runtime: {detail}"))?;
    Ok(detail)
}

fn encoder_ranking() -> Outcome {
    let t = Instant::now();
    let rec = distance_structured_session(0.35, 400, 7).unwrap();
    let ex = BuiltinExtractor::<f64>::new(DEFAULT_EXTRACTOR_SEED);
    let r = encoder_comparison(
        &rec,
        &EncoderSpec::comparison_set(),
        &PipelineConfig::default(),
        &ex,
        &ExperimentConfig::default(),
    )
    .unwrap();
    let mut labels: Vec<&str> = r.rows.iter().map(|x| x.label.as_str()).collect();
    labels.sort();
    check(
        labels == ["Binary RP", "Continuous RP", "GADF", "GASF", "MTF-128", "MTF-4"],
        || format!("rows {labels:?}"),
    )?;
    let (crp, gadf) = (r.rank_of("Continuous RP").unwrap(), r.rank_of("GADF").unwrap());
    let order = r
        .rows
        .iter()
        .map(|x| format!("{} {:.1}", x.label, 100.0 * x.val_accuracy.mean))
        .collect::<Vec<_>>()
        .join(" > ");
    check(crp < gadf, || format!("Continuous RP rank {crp} vs GADF rank {gadf}: {order}"))?;
    Ok(format!("{order} ({})", secs(t.elapsed())))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_physimage")).args(args).output().map_err(|e| e.to_string())?;
    check(o.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn determinism() -> Outcome {
    let d = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| d.path().join(s).to_str().unwrap().to_string();
    let quick = ["--pca-k", "20", "--runs", "2"];
    cli(&["synth", "--out", &p("sessions"), "--users", "3", "--scale", "0", "--min-windows", "60"])?;
    cli(&["encode", "--input", &p("sessions"), "--out", &p("datasets")])?;
    cli(&["synth", "--out", &p("dist"), "--cohort", "distance", "--distance-windows", "60"])?;
    let (datasets, dist) = (p("datasets"), p("dist"));
    let mut compared = 0;
    for run in ["a", "b"] {
        let out = p(&format!("cmp_{run}"));
        let mut args = vec!["compare", "--input", &datasets, "--out", &out];
        args.extend(quick);
        cli(&args)?;
        let out = p(&format!("enc_{run}"));
        let mut args = vec!["encoders", "--input", &dist, "--out", &out];
        args.extend(quick);
        cli(&args)?;
    }
    for (a, b, files) in [
        ("cmp_a", "cmp_b", &["runs.jsonl", "table2.csv", "table3.csv", "table4.csv", "classwise_recall.csv"][..]),
        ("enc_a", "enc_b", &["runs.jsonl", "table1.csv"][..]),
    ] {
        for f in files {
            let read = |dir: &str| fs::read(Path::new(&p(dir)).join(f)).map_err(|e| format!("{dir}/{f}: {e}"));
            check(read(a)? == read(b)?, || format!("{a}/{f} and {b}/{f} differ"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} files byte-identical across repeated compare and encoders runs"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("encoder math suite", encoder_math),
        ("hand-computed encoder vectors", hand_vectors),
        ("pipeline shape contract", shape_contract),
        ("numerical oracles", oracles),
        ("split contract", split_contract),
        ("synthetic personalization effect", personalization_effect),
        ("encoder comparison harness", encoder_ranking),
        ("determinism", determinism),
    ];
    // keep panic output of a failing criterion out of the summary lines
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
