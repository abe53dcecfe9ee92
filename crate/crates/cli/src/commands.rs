use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use mtpath::attn_ot::{build_reference_set, CalibrationBundle, OtContext, OtParams, ReferenceFilter};
use mtpath::combiner::{crossval_combine, labeled_rows, LinearModel, LogRegConfig};
use mtpath::eval::{
    build_word_task, evaluate, evaluate_words, matched_downsample, read_eval_csv, EvalCell, EvalMatrix, EvalResult,
    TaskId,
};
use mtpath::model::{load_corpus_with, read_records, validation_report, write_corpus, Corpus, LoadOptions, Side};
use mtpath::scores::{score_corpus, ScoreTable, WordScoreTable};
use mtpath::selection::{select as select_records, Strategy};
use mtpath::sentence::DetectorId;
use mtpath::synth::{generate_corpus, SynthConfig};
use mtpath::word::{word_rows, TokenFeature, WordRow};

use crate::error::{read_failure, write_failure, CliResult, Failure};
use crate::{CombineArgs, DownsampleArgs, EvalArgs, ReportArgs, ScoreArgs, SelectArgs, SynthArgs};

const COMBINED: &str = "combined";

pub fn load_options(path: Option<&Path>) -> CliResult<LoadOptions> {
    let Some(path) = path else { return Ok(LoadOptions::default()) };
    let text = fs::read_to_string(path).map_err(|e| read_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn load(path: &Path, opts: &LoadOptions) -> CliResult<Corpus> {
    if !path.is_file() {
        return Err(read_failure(path, "no such file"));
    }
    Ok(load_corpus_with(path, opts)?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| write_failure(path, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| write_failure(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> CliResult) -> CliResult {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| write_failure(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| write_failure(path, e))?;
        w.write_all(b"\n").map_err(|e| write_failure(path, e))
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| read_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| read_failure(path, e))
}

fn parse_task(s: &str) -> CliResult<TaskId> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = TaskId::ALL.iter().map(|t| t.name()).collect();
        Failure::Usage(format!("unknown task {s:?}; expected one of {}", names.join(", ")))
    })
}

fn fmt_score(v: f64) -> String {
    format!("{v:.4}")
}

pub fn validate(path: &Path, opts: &LoadOptions) -> CliResult {
    if !path.is_file() {
        return Err(read_failure(path, "no such file"));
    }
    let records = read_records(path, opts)?;
    let report = validation_report(&records);
    if !report.is_empty() {
        for r in &report {
            println!("{r}");
        }
        return Err(Failure::Validation(format!("{} of {} record(s) invalid", report.len(), records.len())));
    }
    let n = records.len();
    Corpus::new(records.into_iter().map(|(_, r, _)| r).collect())?;
    println!("ok: {n} valid record(s)");
    Ok(())
}

/// What a `score` run was asked for, split by level.
struct ScoreRequest {
    sentence: Vec<DetectorId>,
    word: Vec<TokenFeature>,
    model: Option<(LinearModel, Vec<TokenFeature>)>,
}

fn parse_score_request(a: &ScoreArgs) -> CliResult<ScoreRequest> {
    let mut req = ScoreRequest { sentence: Vec::new(), word: Vec::new(), model: None };
    let mut wants_model = false;
    for name in &a.detectors {
        let name = name.trim();
        if name == COMBINED {
            wants_model = true;
        } else if let Ok(d) = name.parse::<DetectorId>() {
            let d = if a.drop_eos { d.with_drop_eos(true) } else { d };
            if !req.sentence.contains(&d) {
                req.sentence.push(d);
            }
        } else if let Ok(f) = name.parse::<TokenFeature>() {
            if !req.word.contains(&f) {
                req.word.push(f);
            }
        } else {
            return Err(Failure::Usage(format!("unknown detector or feature {name:?}")));
        }
    }
    match (wants_model, &a.model) {
        (true, Some(path)) => {
            let model: LinearModel = read_json(path)?;
            let feats = model
                .feature_names
                .iter()
                .map(|n| n.parse::<TokenFeature>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
            if feats.iter().map(|f| f.side()).collect::<BTreeSet<_>>().len() > 1 {
                return Err(Failure::Validation(format!("{}: model mixes source and target features", path.display())));
            }
            req.model = Some((model, feats));
        }
        (true, None) => return Err(Failure::Usage("`combined` needs --model".into())),
        (false, Some(_)) => return Err(Failure::Usage("--model given but `combined` not requested".into())),
        (false, None) => {}
    }
    Ok(req)
}

fn ot_context(
    a: &ScoreArgs,
    corpus: &Corpus,
    detectors: &[DetectorId],
    opts: &LoadOptions,
) -> CliResult<Option<OtContext>> {
    let mut needs_ref = BTreeSet::new();
    let mut needs_cal = false;
    for d in detectors {
        if let DetectorId::Ot { kind, drop_eos } = d {
            if kind.needs_reference() {
                needs_ref.insert(*drop_eos);
            }
            needs_cal |= kind.needs_calibration();
        }
    }
    if needs_ref.is_empty() {
        return Ok(None);
    }
    let ref_path =
        a.reference.as_deref().ok_or_else(|| Failure::Usage("reference-based OT detectors need --ref".into()))?;
    let reference = load(ref_path, opts)?;
    let params = OtParams { k: a.ot_k, window: a.ot_window, tau_quantile: a.ot_tau };
    let mut ctx = OtContext::new(params);
    for &drop_eos in &needs_ref {
        ctx.add_references(build_reference_set(&reference, drop_eos, &ReferenceFilter::default())?);
    }
    if needs_cal {
        match &a.calib {
            Some(path) => {
                let bundle: CalibrationBundle = read_json(path)?;
                for c in bundle.calibrations {
                    ctx.add_calibration(c);
                }
            }
            None => {
                // unlabeled scored records outside the reference set
                let ref_ids: BTreeSet<&str> =
                    ctx.references.values().flat_map(|s| s.ids.iter().map(String::as_str)).collect();
                let held_out = corpus.filtered(|r| !ref_ids.contains(r.id.as_str()));
                ctx.calibrate_on(&held_out)?;
            }
        }
        if let Some(path) = &a.calib_out {
            write_json(path, &CalibrationBundle::from_context(&ctx))?;
        }
    }
    Ok(Some(ctx))
}

fn word_table(
    corpus: &Corpus,
    features: &[TokenFeature],
    model: Option<&(LinearModel, Vec<TokenFeature>)>,
) -> WordScoreTable {
    let sides: BTreeSet<Side> =
        features.iter().chain(model.iter().flat_map(|(_, f)| f.iter())).map(|f| f.side()).collect();
    let per_record: Vec<Vec<WordRow>> =
        corpus.records().par_iter().map(|r| sides.iter().flat_map(|&s| word_rows(r, s).rows).collect()).collect();
    let rows: Vec<WordRow> = per_record.into_iter().flatten().collect();
    let mut table = WordScoreTable::from_word_rows(&rows, features);
    if let Some((m, feats)) = model {
        let values = rows
            .iter()
            .map(|r| {
                let x: Option<Vec<f64>> = feats.iter().map(|f| r.features.get(f).copied()).collect();
                x.map(|x| m.decision(&x))
            })
            .collect();
        table.push_column(COMBINED, values);
    }
    table.sort();
    table
}

pub fn score(a: &ScoreArgs, opts: &LoadOptions) -> CliResult {
    let req = parse_score_request(a)?;
    let has_word = !req.word.is_empty() || req.model.is_some();
    if !req.sentence.is_empty() && has_word && a.word_out.is_none() {
        return Err(Failure::Usage("mixing sentence detectors and word features needs --word-out".into()));
    }
    let corpus = load(&a.corpus, opts)?;

    if !req.sentence.is_empty() {
        let ctx = ot_context(a, &corpus, &req.sentence, opts)?;
        let mut table = score_corpus(&corpus, &req.sentence, ctx.as_ref())?;
        table.sort_by_id();
        write_with(&a.output, |w| Ok(table.write_csv(w)?))?;
        let missing: usize = table.rows.iter().map(|r| r.values.iter().filter(|v| v.is_none()).count()).sum();
        println!(
            "scored {} record(s) with {} detector(s); {missing} missing cell(s)",
            table.rows.len(),
            table.detectors.len()
        );
    }
    if has_word {
        let table = word_table(&corpus, &req.word, req.model.as_ref());
        let path = if req.sentence.is_empty() { &a.output } else { a.word_out.as_ref().expect("checked above") };
        write_with(path, |w| Ok(table.write_csv(w)?))?;
        println!("wrote {} word row(s) with {} column(s)", table.rows.len(), table.detectors.len());
    }
    Ok(())
}

fn report_result(r: &EvalResult) {
    let excluded: Vec<String> = r.excluded.iter().map(ToString::to_string).collect();
    let per_dir: Vec<String> = r.scores.iter().map(|(d, v)| format!("{d}={}", fmt_score(*v))).collect();
    println!(
        "{} {}: mean={} [{}] excluded=[{}]",
        r.task,
        r.detector,
        fmt_score(r.mean),
        per_dir.join(" "),
        excluded.join(" ")
    );
}

fn pick_columns(available: &[String], requested: &[String]) -> CliResult<Vec<String>> {
    if requested.is_empty() {
        return Ok(available.to_vec());
    }
    for d in requested {
        if !available.contains(d) {
            return Err(Failure::Usage(format!("column {d:?} is not in the score table")));
        }
    }
    Ok(requested.to_vec())
}

pub fn eval(a: &EvalArgs, opts: &LoadOptions) -> CliResult {
    let task = parse_task(&a.task)?;
    let corpus = load(&a.corpus, opts)?;
    let results: Vec<EvalResult> = if task.is_word_level() {
        let table = WordScoreTable::read_csv(open(&a.scores)?)?;
        let (rows, orphans) = build_word_task(&corpus, task);
        if orphans > 0 {
            println!("{orphans} orphan word(s) left out");
        }
        pick_columns(&table.detectors, &a.detectors)?
            .iter()
            .map(|d| {
                let values = table.values_by_key(d).expect("column exists");
                let scores: Vec<Option<f64>> =
                    rows.iter().map(|r| values.get(&(r.id.clone(), r.side, r.word_index)).copied()).collect();
                evaluate_words(&rows, &scores, task, d)
            })
            .collect::<Result<_, _>>()?
    } else {
        let table = ScoreTable::read_csv(open(&a.scores)?)?;
        pick_columns(&table.detectors, &a.detectors)?
            .iter()
            .map(|d| evaluate(&corpus, &table, d, task))
            .collect::<Result<_, _>>()?
    };
    for r in &results {
        report_result(r);
    }
    let matrix = EvalMatrix { task, results };
    write_with(&a.output, |w| Ok(matrix.write_csv(w)?))?;
    if let Some(path) = &a.json {
        write_json(path, &matrix)?;
    }
    Ok(())
}

pub fn combine(a: &CombineArgs, opts: &LoadOptions) -> CliResult {
    let task = parse_task(&a.task)?;
    let Some(side) = task.side() else {
        return Err(Failure::Usage(format!("combine needs a word-level task, got {task}")));
    };
    let features = a
        .features
        .iter()
        .map(|f| f.parse::<TokenFeature>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(f) = features.iter().find(|f| f.side() != side) {
        return Err(Failure::Usage(format!(
            "feature {f} belongs to the {} side, task {task} to the {side} side",
            f.side()
        )));
    }
    if !(a.lambda >= 0.0) {
        return Err(Failure::Usage("--lambda must be non-negative".into()));
    }
    let corpus = load(&a.corpus, opts)?;
    let (rows, _) = build_word_task(&corpus, task);
    let labeled = labeled_rows(&rows, &features)?;
    let names: Vec<String> = features.iter().map(ToString::to_string).collect();
    let config = LogRegConfig { lambda: a.lambda, ..LogRegConfig::default() };
    let cv = crossval_combine(&labeled, &names, a.folds, a.seed, &config)?;

    let oof: Vec<Option<f64>> = cv.oof_scores.iter().copied().map(Some).collect();
    report_result(&evaluate_words(&rows, &oof, task, COMBINED)?);
    for (j, f) in features.iter().enumerate() {
        let single: Vec<Option<f64>> = labeled.iter().map(|r| Some(r.features[j])).collect();
        report_result(&evaluate_words(&rows, &single, task, f.name())?);
    }

    write_json(&a.output, &cv.final_fit.model)?;
    if let Some(path) = &a.oof {
        let mut table = WordScoreTable::from_word_rows(&rows, &features);
        table.push_column("oof", oof);
        table.sort();
        write_with(path, |w| Ok(table.write_csv(w)?))?;
    }
    Ok(())
}

fn audit_path(a: &SelectArgs) -> PathBuf {
    a.audit.clone().unwrap_or_else(|| {
        let mut s = a.output.clone().into_os_string();
        s.push(".audit.json");
        PathBuf::from(s)
    })
}

pub fn select(a: &SelectArgs, opts: &LoadOptions) -> CliResult {
    let strategy: Strategy = a.strategy.parse()?;
    let corpus = load(&a.corpus, opts)?;
    let table = ScoreTable::read_csv(open(&a.scores)?)?;
    let detectors = pick_columns(&table.detectors, &a.detectors)?;
    let exclude: BTreeSet<String> = match &a.exclude {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| read_failure(path, e))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect(),
        None => BTreeSet::new(),
    };
    let audit = select_records(&corpus, &table, &detectors, strategy, a.n, a.seed, &exclude)?;
    write_with(&a.output, |w| {
        for id in &audit.ids {
            writeln!(w, "{id}").map_err(|e| write_failure(&a.output, e))?;
        }
        Ok(())
    })?;
    write_json(&audit_path(a), &audit)?;
    println!("selected {} of {} eligible record(s) ({strategy})", audit.ids.len(), audit.eligible);
    Ok(())
}

fn output_file(dir: &Path, input: &Path) -> CliResult<PathBuf> {
    let name = input.file_name().ok_or_else(|| Failure::Usage(format!("{} has no file name", input.display())))?;
    fs::create_dir_all(dir).map_err(|e| write_failure(dir, e))?;
    Ok(dir.join(name))
}

pub fn downsample(a: &DownsampleArgs, opts: &LoadOptions) -> CliResult {
    let (ca, cb) = (load(&a.corpus_a, opts)?, load(&a.corpus_b, opts)?);
    let (da, db) = matched_downsample(&ca, &cb, a.seed);
    for (input, dir, c) in [(&a.corpus_a, &a.output[0], &da), (&a.corpus_b, &a.output[1], &db)] {
        let path = output_file(dir, input)?;
        if path == *input {
            return Err(Failure::Usage(format!("refusing to overwrite input {}", input.display())));
        }
        write_corpus(c, &path).map_err(|e| write_failure(&path, e))?;
        println!("{}: kept {} record(s)", path.display(), c.len());
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> CliResult {
    let config = match &a.config {
        Some(path) => SynthConfig::from_json(&fs::read_to_string(path).map_err(|e| read_failure(path, e))?)?,
        None => SynthConfig::default(),
    };
    let corpus = generate_corpus(&config, a.seed)?;
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| write_failure(dir, e))?;
    }
    write_corpus(&corpus, &a.output).map_err(|e| write_failure(&a.output, e))?;
    println!("wrote {} record(s) to {}", corpus.len(), a.output.display());
    Ok(())
}

pub fn report(a: &ReportArgs) -> CliResult {
    let mut cells: BTreeMap<(String, String, String), Option<f64>> = BTreeMap::new();
    for path in &a.evals {
        for c in read_eval_csv(open(path)?)? {
            let key = (c.task, c.direction, c.detector);
            if cells.insert(key.clone(), c.score).is_some() {
                return Err(Failure::Validation(format!(
                    "{}: duplicate cell task={} direction={} detector={}",
                    path.display(),
                    key.0,
                    key.1,
                    key.2
                )));
            }
        }
    }
    let cells: Vec<EvalCell> = cells
        .into_iter()
        .map(|((task, direction, detector), score)| EvalCell { task, direction, detector, score })
        .collect();
    fs::create_dir_all(&a.output).map_err(|e| write_failure(&a.output, e))?;
    let csv_path = a.output.join("combined.csv");
    write_with(&csv_path, |w| {
        writeln!(w, "task,direction,detector,score").map_err(|e| write_failure(&csv_path, e))?;
        for c in &cells {
            let score = c.score.map(|v| format!("{v:?}")).unwrap_or_default();
            writeln!(w, "{},{},{},{score}", c.task, c.direction, c.detector)
                .map_err(|e| write_failure(&csv_path, e))?;
        }
        Ok(())
    })?;
    write_json(&a.output.join("combined.json"), &cells)?;
    println!("merged {} cell(s) from {} file(s)", cells.len(), a.evals.len());
    Ok(())
}
