use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use physimage::dataset::{self, load_all, DatasetManifest, MANIFEST_FILE};
use physimage::embedding::{
    extract, write_sidecar, BuiltinExtractor, ExternalExtractor, FeatureExtractor, ImageKey,
};
use physimage::encoders::EncoderSpec;
use physimage::evaluation::{
    combined_matrix, compare, cross_user_matrix, encoder_comparison, personalized, report, EncoderRanking,
    ExperimentKind, MatrixReport, RunRecord,
};
use physimage::pipeline::featurize_dataset;
use physimage::signals::{load_session, Channel, MultimodalRecord, SessionFormat};
use physimage::synthgen::{distance_structured_session, generate_cohort, write_session};
use physimage::{Features, Real};

use crate::config::{ConfigError, RunConfig};

const SESSION_META: &str = "session.meta";
pub const EMBEDDING_EXT: &str = "pemb";

fn log(msg: impl AsRef<str>) {
    eprintln!("[physimage] {}", msg.as_ref());
}

fn sorted_subdirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for e in fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
        let p = e?.path();
        if p.is_dir() {
            dirs.push(p);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// `root` itself when it holds `marker`, else its immediate subdirectories
/// that do.
fn find_dirs(root: &Path, marker: &str) -> Result<Vec<PathBuf>> {
    if root.join(marker).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let dirs: Vec<_> = sorted_subdirs(root)?.into_iter().filter(|d| d.join(marker).is_file()).collect();
    if dirs.is_empty() {
        bail!("no directory with {marker} under {}", root.display());
    }
    Ok(dirs)
}

fn dir_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

fn pick<'a, X>(items: &'a [X], id: impl Fn(&X) -> &str, user: &str) -> Result<&'a X> {
    if user.is_empty() {
        return items.first().context("nothing to select from");
    }
    if let Ok(i) = user.parse::<usize>() {
        if i >= 1 && i <= items.len() {
            return Ok(&items[i - 1]);
        }
        bail!("user index {i} out of range 1..={}", items.len());
    }
    items.iter().find(|x| id(x) == user).with_context(|| format!("no user '{user}'"))
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let seed = cfg.seed()?;
    let records: Vec<MultimodalRecord> = match cfg.raw("cohort") {
        "distance" => {
            let noise: f64 = cfg.get("noise")?;
            vec![distance_structured_session(noise, cfg.get("distance_windows")?, seed)?]
        }
        _ => generate_cohort(&cfg.cohort_config()?)?.into_iter().map(|(_, r)| r).collect(),
    };
    for rec in &records {
        let dir = out.join(&rec.user_id);
        write_session(rec, &dir)?;
        log(format!("{}: {:.0} s session written to {}", rec.user_id, rec.duration(), dir.display()));
    }
    Ok(())
}

fn sessions(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    find_dirs(&cfg.required_path("input")?, SESSION_META)
}

pub fn encode(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let (wspec, espec, opts) = (cfg.window_spec()?, cfg.encoder_spec()?, cfg.build_options()?);
    for dir in sessions(cfg)? {
        let rec = load_session(&dir, SessionFormat::CsvDirectory)
            .with_context(|| format!("session {}", dir.display()))?;
        let target = out.join(dir_name(&dir));
        let m = dataset::build(&rec, &wspec, &espec, &target, &opts)
            .with_context(|| format!("encoding session {}", rec.session_id))?;
        let [tr, va, te] = m.split_counts();
        log(format!(
            "{}: {} windows, {} images ({}), split {tr}/{va}/{te} -> {}",
            rec.session_id,
            m.entries.len(),
            m.entries.len() * Channel::ALL.len(),
            espec.label(),
            target.display()
        ));
    }
    Ok(())
}

fn datasets(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    find_dirs(&cfg.required_path("input")?, MANIFEST_FILE)
}

fn builtin(cfg: &RunConfig) -> Result<BuiltinExtractor<Real>> {
    Ok(BuiltinExtractor::new(cfg.get("extractor_seed")?))
}

/// Writes `<out>/<dataset>.pemb` with one embedding per image.
pub fn features(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    fs::create_dir_all(&out)?;
    let ex = builtin(cfg)?;
    for dir in datasets(cfg)? {
        let m = DatasetManifest::read(&dir)?;
        let windows = load_all::<Real>(&m, &dir)?;
        let mut keys = Vec::new();
        let mut vecs = Vec::new();
        for w in &windows {
            for (ch, img) in Channel::ALL.iter().zip(&w.images) {
                let key = ImageKey::new(w.stem(), *ch);
                vecs.push(extract(&ex, &key, img)?);
                keys.push(key);
            }
        }
        let path = out.join(format!("{}.{EMBEDDING_EXT}", dir_name(&dir)));
        write_sidecar(&path, keys.iter().zip(vecs.iter().map(Vec::as_slice)))?;
        log(format!("{}: {} embeddings -> {}", m.user_id, keys.len(), path.display()));
    }
    Ok(())
}

fn load_users(cfg: &RunConfig) -> Result<Vec<Features>> {
    let ex = builtin(cfg)?;
    let side = cfg.path("features");
    let mut users = Vec::new();
    for dir in datasets(cfg)? {
        let m = DatasetManifest::read(&dir)?;
        let f = match &side {
            Some(s) => {
                let path = s.join(format!("{}.{EMBEDDING_EXT}", dir_name(&dir)));
                let ext = ExternalExtractor::open(&path)?;
                featurize_dataset(&m, &dir, &ext as &dyn FeatureExtractor<Real>)?
            }
            None => featurize_dataset(&m, &dir, &ex)?,
        };
        log(format!("{}: {} windows loaded from {}", f.user_id, f.records.len(), dir.display()));
        users.push(f);
    }
    Ok(users)
}

fn finish(out: &Path, runs: &[RunRecord]) -> Result<()> {
    report::emit_runs(runs, out)?;
    report::emit_notes(out)?;
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let users = load_users(cfg)?;
    let user = pick(&users, |u| &u.user_id, cfg.raw("user"))?;
    let x = cfg.experiment_config()?;
    let (rep, group) = personalized(user, &x)?;
    report::emit_matrix(&rep, &out, "personalized")?;
    for r in 0..x.n_runs {
        let path = out.join(format!("model_run{r}.pmlp"));
        group.checkpoint(r, &x).save(&path)?;
    }
    finish(&out, &rep.runs)?;
    print!("{}", report::matrix_text(&rep));
    Ok(())
}

pub fn xmatrix(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let rep = cross_user_matrix(&load_users(cfg)?, &cfg.experiment_config()?)?;
    report::emit_matrix(&rep, &out, "table2")?;
    finish(&out, &rep.runs)?;
    print!("{}", report::matrix_text(&rep));
    Ok(())
}

pub fn combined(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let rep = combined_matrix(&load_users(cfg)?, &cfg.experiment_config()?)?;
    report::emit_matrix(&rep, &out, "table3")?;
    finish(&out, &rep.runs)?;
    print!("{}", report::matrix_text(&rep));
    Ok(())
}

pub fn compare_cmd(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let users = load_users(cfg)?;
    let x = cfg.experiment_config()?;
    let cross = cross_user_matrix(&users, &x)?;
    let comb = combined_matrix(&users, &x)?;
    let cmp = compare(&cross, &comb)?;
    report::emit_matrix(&cross, &out, "table2")?;
    report::emit_matrix(&comb, &out, "table3")?;
    report::emit_comparison(&cmp, &out)?;
    let runs: Vec<RunRecord> = cross.runs.iter().chain(&comb.runs).cloned().collect();
    finish(&out, &runs)?;
    print!("{}", report::comparison_text(&cmp));
    Ok(())
}

pub fn encoders(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let recs = sessions(cfg)?
        .iter()
        .map(|d| load_session(d, SessionFormat::CsvDirectory).with_context(|| format!("session {}", d.display())))
        .collect::<Result<Vec<_>>>()?;
    let rec = pick(&recs, |r| &r.user_id, cfg.raw("user"))?;
    let ex = builtin(cfg)?;
    let ranking = encoder_comparison(
        rec,
        &EncoderSpec::comparison_set(),
        &cfg.pipeline_config()?,
        &ex,
        &cfg.experiment_config()?,
    )?;
    report::emit_ranking(&ranking, &out)?;
    finish(&out, &ranking.runs)?;
    print!("{}", report::ranking_text(&ranking));
    Ok(())
}

/// Rebuilds every table the run log supports.
pub fn report_cmd(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out();
    let input = cfg.required_path("input")?;
    let path = if input.is_dir() { input.join("runs.jsonl") } else { input };
    let runs = report::read_runs(&path)?;
    let has = |k: ExperimentKind| runs.iter().any(|r| r.experiment == k);
    let mut written = Vec::new();
    if has(ExperimentKind::EncoderComparison) {
        report::emit_ranking(&EncoderRanking::from_runs(runs.clone())?, &out)?;
        written.push("table1");
    }
    if has(ExperimentKind::Personalized) {
        report::emit_matrix(&MatrixReport::from_runs(ExperimentKind::Personalized, runs.clone())?, &out, "personalized")?;
        written.push("personalized");
    }
    let cross = has(ExperimentKind::CrossUser)
        .then(|| MatrixReport::from_runs(ExperimentKind::CrossUser, runs.clone()))
        .transpose()?;
    let comb = has(ExperimentKind::Combined)
        .then(|| MatrixReport::from_runs(ExperimentKind::Combined, runs.clone()))
        .transpose()?;
    if let Some(c) = &cross {
        report::emit_matrix(c, &out, "table2")?;
        written.push("table2");
    }
    if let Some(c) = &comb {
        report::emit_matrix(c, &out, "table3")?;
        written.push("table3");
    }
    if let (Some(a), Some(b)) = (&cross, &comb) {
        report::emit_comparison(&compare(a, b)?, &out)?;
        written.push("table4");
    }
    report::emit_notes(&out)?;
    log(format!("{} runs read; wrote {}", runs.len(), written.join(", ")));
    Ok(())
}

/// Keeps config errors distinguishable after passing through `anyhow`.
pub fn is_config_error(e: &anyhow::Error) -> bool {
    e.downcast_ref::<ConfigError>().is_some()
}
