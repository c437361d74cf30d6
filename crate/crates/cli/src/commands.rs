use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use reorder::distill::{train_student, StudentModel};
use reorder::order::{
    find_heads, order_label, train_teacher, HeurTeacher, OrderPredictor, RandTeacher, TeacherModel, TeacherVariant,
};
use reorder::parser::{evaluate as evaluate_parser, train_parser, ParserModel};
use reorder::treebank::{parse_conllu, reorder_treebank, toy, write_conllu, RuleSet, Treebank, TripleKey};
use reorder::typology::{
    order_feature, pearson, predicted_order_frequency, select_triples, word_order_distance, TypologyVector,
};
use serde::Serialize;
use tensorgrad::Container;

use crate::config::{seeded, ExperimentConfig, TeacherKind, UsageError};
use crate::report::{RunReport, SeedRun, TargetResult};

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("{what} {} does not exist", path.display())).into());
    }
    Ok(())
}

fn required<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| UsageError(format!("config key {key} is required")).into())
}

/// Language code from the file name, e.g. `data/xx.conllu` -> `xx`.
pub fn language_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "und".into())
}

pub fn load_treebank(path: &Path) -> Result<Treebank> {
    require(path, "treebank")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let tb = parse_conllu(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(tb.with_language(&language_of(path)))
}

pub fn load_rules(name: &str) -> Result<RuleSet> {
    match name {
        "english" => Ok(toy::english_rules()),
        "verb-final" => Ok(toy::verb_final_rules()),
        path => {
            let p = Path::new(path);
            require(p, "rule file")?;
            Ok(RuleSet::parse(&std::fs::read_to_string(p)?)?)
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn target_results(
    parser: &ParserModel,
    source_feature: &TypologyVector,
    evals: &[(PathBuf, Treebank)],
    triples: &[TripleKey],
    normalize: bool,
) -> Result<Vec<TargetResult>> {
    evals
        .iter()
        .map(|(path, tb)| {
            let m = evaluate_parser(parser, tb)?;
            let distance = word_order_distance(source_feature, &order_feature(tb, triples), normalize)?;
            Ok(TargetResult {
                language: tb.language.clone(),
                path: path.display().to_string(),
                distance,
                uas: m.uas,
                las: m.las,
                n_tokens: m.n_tokens,
            })
        })
        .collect()
}

fn load_evals(cfg: &ExperimentConfig) -> Result<Vec<(PathBuf, Treebank)>> {
    cfg.eval_sets()
        .into_iter()
        .map(|p| {
            let tb = load_treebank(&p)?;
            Ok((p, tb))
        })
        .collect()
}

fn finish(command: &str, cfg: &ExperimentConfig, runs: Vec<SeedRun>, start: Instant) -> Result<RunReport> {
    let report = RunReport {
        command: command.into(),
        config: cfg.snapshot(),
        runs,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    report.write(&cfg.output_dir)?;
    print!("{}", report.to_table());
    Ok(report)
}

pub fn train_parser_cmd(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let source_path = required(&cfg.source, "source")?;
    let source = load_treebank(source_path)?;
    let evals = load_evals(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;

    let mut all: Vec<&Treebank> = vec![&source];
    all.extend(evals.iter().map(|(_, t)| t));
    let triples = select_triples(&all, cfg.k);
    let source_feature = order_feature(&source, &triples);

    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let (model, log) = train_parser(&source, &cfg.parser_train(), seed)?;
        model.save(&cfg.output_dir.join(format!("parser-seed{seed}.model")))?;
        let train = evaluate_parser(&model, &source)?;
        let mut metrics = BTreeMap::new();
        metrics.insert("final_loss".into(), log.last().map_or(f64::NAN, |e| e.loss));
        metrics.insert("source_uas".into(), train.uas);
        metrics.insert("source_las".into(), train.las);
        runs.push(SeedRun {
            seed,
            metrics,
            targets: target_results(&model, &source_feature, &evals, &triples, cfg.normalize)?,
        });
    }
    finish("train-parser", cfg, runs, start)
}

pub fn train_teacher_cmd(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let target = load_treebank(required(&cfg.target, "target")?)?;
    let source = cfg.source.as_deref().map(load_treebank).transpose()?;
    if !cfg.gold_heads {
        let template = required(&cfg.parser, "parser")?;
        for &seed in &cfg.seeds {
            require(&seeded(template, seed), "parser model")?;
        }
    }
    std::fs::create_dir_all(&cfg.output_dir)?;

    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let mut metrics = BTreeMap::new();
        let train_tb = if cfg.gold_heads {
            target.clone()
        } else {
            let parser = ParserModel::load(&seeded(cfg.parser.as_deref().unwrap_or_default(), seed))?;
            let headed = find_heads(&parser, &target)?;
            metrics.insert("head_acc".into(), headed.head_accuracy());
            headed.treebank
        };
        let (teacher, rep) = train_teacher(&train_tb, &cfg.teacher_train(), seed)?;
        teacher.save(&cfg.output_dir.join(format!("teacher-seed{seed}.model")))?;
        metrics.insert("train_acc".into(), rep.train_accuracy);
        if let Some(h) = rep.heldout_accuracy {
            metrics.insert("heldout_acc".into(), h);
        }
        metrics.insert(
            "gold_acc".into(),
            teacher.accuracy(&target.sentences.iter().collect::<Vec<_>>())?,
        );
        metrics.insert("final_loss".into(), rep.log.last().map_or(f64::NAN, |e| e.loss));
        if let Some(src) = &source {
            let triples = select_triples(&[src, &target], cfg.k);
            let predicted = predicted_order_frequency(&teacher, src, &triples)?;
            let d = word_order_distance(&predicted, &order_feature(&target, &triples), cfg.normalize)?;
            metrics.insert("order_distance".into(), d);
        }
        runs.push(SeedRun {
            seed,
            metrics,
            targets: Vec::new(),
        });
    }
    finish("train-teacher", cfg, runs, start)
}

fn build_teacher(
    cfg: &ExperimentConfig,
    target: Option<&Treebank>,
    source: &Treebank,
    seed: u64,
) -> Result<Option<TeacherVariant>> {
    if !cfg.variant.needs_teacher() {
        return Ok(None);
    }
    Ok(Some(match cfg.teacher_kind {
        TeacherKind::Ours => {
            let path = seeded(required(&cfg.teacher, "teacher")?, seed);
            TeacherVariant::Ours(TeacherModel::load(&path).with_context(|| format!("loading {}", path.display()))?)
        }
        TeacherKind::Rand => TeacherVariant::Rand(RandTeacher { seed }),
        TeacherKind::Heur => {
            let target = target.ok_or_else(|| UsageError("the heur teacher needs a target treebank".into()))?;
            let triples = select_triples(&[source, target], cfg.k);
            TeacherVariant::Heur(HeurTeacher::from_treebank(target, &triples))
        }
    }))
}

/// Share of edges whose thresholded order prediction matches the side the
/// dependent is actually on.
fn order_accuracy<P: OrderPredictor>(model: &P, tb: &Treebank) -> Result<f64> {
    let (mut n, mut ok) = (0usize, 0usize);
    for s in &tb.sentences {
        let edges = s.edges();
        if edges.is_empty() {
            continue;
        }
        for (&(d, h), p) in edges.iter().zip(model.predict(s, &edges)?) {
            n += 1;
            ok += usize::from(u8::from(p >= 0.5) == order_label(d, h));
        }
    }
    Ok(if n == 0 { 0.0 } else { ok as f64 / n as f64 })
}

pub fn train_student_cmd(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let source = load_treebank(required(&cfg.source, "source")?)?;
    let target = cfg.target.as_deref().map(load_treebank).transpose()?;
    let evals = load_evals(cfg)?;
    if cfg.variant.needs_teacher() && cfg.teacher_kind == TeacherKind::Ours {
        let template = required(&cfg.teacher, "teacher")?;
        for &seed in &cfg.seeds {
            require(&seeded(template, seed), "teacher model")?;
        }
    }
    std::fs::create_dir_all(&cfg.output_dir)?;

    let mut all: Vec<&Treebank> = vec![&source];
    all.extend(evals.iter().map(|(_, t)| t));
    let eval_triples = select_triples(&all, cfg.k);
    let source_feature = order_feature(&source, &eval_triples);

    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let teacher = build_teacher(cfg, target.as_ref(), &source, seed)?;
        let (student, log) = train_student(
            &source,
            teacher.as_ref().map(|t| t as &dyn OrderPredictor),
            &cfg.distill(),
            seed,
        )?;
        student.save(&cfg.output_dir.join(format!("student-seed{seed}.model")))?;
        let mut metrics = BTreeMap::new();
        metrics.insert("final_loss".into(), log.last().map_or(f64::NAN, |e| e.loss));
        metrics.insert("order_acc_source".into(), order_accuracy(&student, &source)?);
        if let Some(t) = &target {
            let triples = select_triples(&[&source, t], cfg.k);
            let predicted = predicted_order_frequency(&student, &source, &triples)?;
            let d = word_order_distance(&predicted, &order_feature(t, &triples), cfg.normalize)?;
            metrics.insert("order_distance".into(), d);
        }
        runs.push(SeedRun {
            seed,
            metrics,
            targets: target_results(
                &student.to_parser(),
                &source_feature,
                &evals,
                &eval_triples,
                cfg.normalize,
            )?,
        });
    }
    finish("train-student", cfg, runs, start)
}

#[derive(Serialize)]
struct FeatureRow {
    dep_upos: String,
    head_upos: String,
    deprel: String,
    left_freq: f64,
    support: usize,
}

fn rows(v: &TypologyVector) -> Vec<FeatureRow> {
    v.triples
        .iter()
        .zip(&v.values)
        .zip(&v.support)
        .map(|((k, &left_freq), &support)| FeatureRow {
            dep_upos: k.dep_upos.clone(),
            head_upos: k.head_upos.clone(),
            deprel: k.deprel.clone(),
            left_freq,
            support,
        })
        .collect()
}

#[derive(Serialize)]
pub struct EvalOutput {
    pub kind: String,
    pub uas: f64,
    pub las: f64,
    pub n_tokens: usize,
    /// Left frequencies in the parser's predicted trees.
    typology: Vec<FeatureRow>,
    /// Order-head left probabilities at gold edges (students only).
    #[serde(skip_serializing_if = "Option::is_none")]
    order_typology: Option<Vec<FeatureRow>>,
}

pub fn evaluate_cmd(model_path: &Path, treebank: &Path, k: usize, out: Option<&Path>) -> Result<EvalOutput> {
    require(model_path, "model")?;
    let tb = load_treebank(treebank)?;
    let bytes = std::fs::read(model_path)?;
    let container = Container::read(&bytes[..]).with_context(|| format!("reading {}", model_path.display()))?;
    let format = serde_json::from_str::<serde_json::Value>(&container.metadata)
        .ok()
        .and_then(|v| v.get("format").and_then(|f| f.as_str()).map(str::to_owned))
        .unwrap_or_default();
    let (parser, student) = match format.as_str() {
        "parser" => (ParserModel::from_container(&container)?, None),
        "student" => {
            let s = StudentModel::from_container(&container)?;
            (s.to_parser(), Some(s))
        }
        other => bail!(
            "{} is not a parser or student model (format {other:?})",
            model_path.display()
        ),
    };
    let triples = select_triples(&[&tb], k);
    let parsed = Treebank::new(
        &tb.language,
        tb.sentences
            .iter()
            .map(|s| parser.parse(s))
            .collect::<reorder::Result<Vec<_>>>()?,
    );
    let m = reorder::parser::attachment_scores(parsed.sentences.iter().zip(&tb.sentences));
    let output = EvalOutput {
        kind: format,
        uas: m.uas,
        las: m.las,
        n_tokens: m.n_tokens,
        typology: rows(&order_feature(&parsed, &triples)),
        order_typology: student
            .map(|s| predicted_order_frequency(&s, &tb, &triples).map(|v| rows(&v)))
            .transpose()?,
    };
    let json = serde_json::to_string_pretty(&output)?;
    match out {
        Some(p) => write_file(p, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(output)
}

pub fn typology_cmd(treebanks: &[PathBuf], k: usize, normalize: bool, out_dir: &Path) -> Result<Vec<Vec<f64>>> {
    if treebanks.len() < 2 {
        return Err(UsageError("typology needs at least two treebanks".into()).into());
    }
    let tbs = treebanks.iter().map(|p| load_treebank(p)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;
    let refs: Vec<&Treebank> = tbs.iter().collect();
    let triples = select_triples(&refs, k);
    let features: Vec<TypologyVector> = tbs.iter().map(|t| order_feature(t, &triples)).collect();

    let mut names: Vec<String> = Vec::new();
    for f in &features {
        let mut name = f.language.clone();
        let mut i = 2;
        while names.contains(&name) {
            name = format!("{}-{i}", f.language);
            i += 1;
        }
        names.push(name);
    }
    for (name, f) in names.iter().zip(&features) {
        let mut buf = Vec::new();
        f.write_csv(&mut buf)?;
        write_file(&out_dir.join(format!("features-{name}.csv")), buf)?;
    }
    let n = features.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            matrix[i][j] = word_order_distance(&features[i], &features[j], normalize)?;
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["language".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(&matrix) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    write_file(&out_dir.join("distances.csv"), w.into_inner()?)?;
    Ok(matrix)
}

pub fn synth_cmd(input: &Path, rules: &str, seed: u64, language: Option<&str>, out: &Path) -> Result<()> {
    let tb = load_treebank(input)?;
    let rules = load_rules(rules)?;
    let lang = language.map(str::to_owned).unwrap_or_else(|| language_of(out));
    write_file(out, write_conllu(&reorder_treebank(&tb, &rules, seed, &lang)))
}

pub fn generate_cmd(rules: &str, n: usize, seed: u64, out: &Path) -> Result<()> {
    let rules = load_rules(rules)?;
    write_file(out, write_conllu(&toy::generate(n, &rules, seed, &language_of(out))))
}

/// One (distance, performance) observation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Point {
    pub language: String,
    pub distance: f64,
    pub uas: f64,
    pub las: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub improvement: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
}

#[derive(Debug, Serialize)]
pub struct Analysis {
    pub n_points: usize,
    pub distance_vs_uas: Correlation,
    pub distance_vs_las: Correlation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction_vs_improvement: Option<Correlation>,
    pub points: Vec<Point>,
}

/// Seed-averaged target results from reports, one point per language.
pub fn points_from_reports(reports: &[RunReport]) -> Vec<Point> {
    let mut acc: BTreeMap<String, (f64, f64, f64, usize)> = BTreeMap::new();
    for r in reports {
        for run in &r.runs {
            for t in &run.targets {
                let e = acc.entry(t.language.clone()).or_default();
                e.0 += t.distance;
                e.1 += t.uas;
                e.2 += t.las;
                e.3 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(language, (d, u, l, n))| {
            let n = n as f64;
            Point {
                language,
                distance: d / n,
                uas: u / n,
                las: l / n,
                reduction: None,
                improvement: None,
            }
        })
        .collect()
}

/// Points from a CSV with columns `language,distance,uas,las` and
/// optionally `reduction,improvement`.
pub fn points_from_csv(path: &Path) -> Result<Vec<Point>> {
    require(path, "points file")?;
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| UsageError(format!("points file lacks a {name} column")));
    let (lang, dist, uas, las) = (need("language")?, need("distance")?, need("uas")?, need("las")?);
    let (red, imp) = (col("reduction"), col("improvement"));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| UsageError(format!("bad number {:?}", &rec[i])).into())
        };
        out.push(Point {
            language: rec[lang].to_owned(),
            distance: num(dist)?,
            uas: num(uas)?,
            las: num(las)?,
            reduction: red.map(num).transpose()?,
            improvement: imp.map(num).transpose()?,
        });
    }
    Ok(out)
}

pub fn analyze(points: Vec<Point>) -> Result<Analysis> {
    if points.len() < 3 {
        return Err(UsageError(format!("need at least 3 points, got {}", points.len())).into());
    }
    let xs: Vec<f64> = points.iter().map(|p| p.distance).collect();
    let corr = |ys: &[f64]| -> Result<Correlation> {
        let (r, p) = pearson(&xs, ys)?;
        Ok(Correlation { r, p })
    };
    let uas: Vec<f64> = points.iter().map(|p| p.uas).collect();
    let las: Vec<f64> = points.iter().map(|p| p.las).collect();
    let pairs: Option<(Vec<f64>, Vec<f64>)> = points
        .iter()
        .map(|p| p.reduction.zip(p.improvement))
        .collect::<Option<Vec<_>>>()
        .map(|v| v.into_iter().unzip());
    let reduction_vs_improvement = match pairs {
        Some((red, imp)) => {
            let (r, p) = pearson(&red, &imp)?;
            Some(Correlation { r, p })
        }
        None => None,
    };
    Ok(Analysis {
        n_points: points.len(),
        distance_vs_uas: corr(&uas)?,
        distance_vs_las: corr(&las)?,
        reduction_vs_improvement,
        points,
    })
}

pub fn analyze_cmd(reports: &[PathBuf], points_csv: Option<&Path>, out_dir: &Path) -> Result<Analysis> {
    let mut points = match points_csv {
        Some(p) => points_from_csv(p)?,
        None => Vec::new(),
    };
    if !reports.is_empty() {
        for r in reports {
            require(r, "report")?;
        }
        let loaded = reports.iter().map(|p| RunReport::read(p)).collect::<Result<Vec<_>>>()?;
        points.extend(points_from_reports(&loaded));
    }
    let analysis = analyze(points)?;
    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["language", "distance", "uas", "las"])?;
    for p in &analysis.points {
        w.write_record([
            p.language.clone(),
            p.distance.to_string(),
            p.uas.to_string(),
            p.las.to_string(),
        ])?;
    }
    write_file(&out_dir.join("analysis.csv"), w.into_inner()?)?;
    write_file(
        &out_dir.join("analysis.json"),
        serde_json::to_string_pretty(&analysis)? + "\n",
    )?;
    println!(
        "distance vs UAS: r = {:.4} (p = {:.3e}) over {} points",
        analysis.distance_vs_uas.r, analysis.distance_vs_uas.p, analysis.n_points
    );
    Ok(analysis)
}
