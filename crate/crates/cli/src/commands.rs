use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use simplex_core::oracle::{verify_theory, TheoryConfig};
use simplex_core::srls::error_rate;

use crate::artifact::ModelArtifact;
use crate::bench::Benchmark;
use crate::cli::{BenchArgs, Command, EvaluateArgs, PathArgs, PredictArgs, TrainArgs, VerifyArgs};
use crate::error::{usage, Exit};
use crate::fit::{s_ls_rates, train};

pub fn run(command: &Command) -> anyhow::Result<Exit> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Path(a) => cmd_path(a),
        Command::VerifyTheory(a) => cmd_verify_theory(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Prints `text` and copies it to `path` if given.
fn emit(text: &str, path: Option<&Path>) -> anyhow::Result<()> {
    println!("{text}");
    if let Some(p) = path {
        write_file(p, &format!("{text}\n"))?;
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> anyhow::Result<Exit> {
    let cfg = a.solver.config();
    cfg.validate()?;
    let data = a.data.source().load_labeled(&a.data.data)?;
    let (model, report) = train(&cfg, &data)?;
    if let Some(out) = &a.out {
        model.save(out)?;
    }
    let mut text = report.to_string();
    if let Some(out) = &a.out {
        let _ = write!(text, "\nmodel: {}", out.display());
    }
    emit(&text, a.report.as_deref())?;
    Ok(Exit::Success)
}

fn load_for_model(model: &ModelArtifact, args: &crate::cli::DataArgs) -> anyhow::Result<simplex_core::Dataset64> {
    let path = &args.data;
    args.source()
        .load(path, Some(model.features()))
        .with_context(|| format!("loading {}", path.display()))
}

pub fn cmd_predict(a: &PredictArgs) -> anyhow::Result<Exit> {
    let model = ModelArtifact::load(&a.model)?;
    let data = load_for_model(&model, &a.data)?;
    let mut text = String::new();
    for label in model.predict_labels(&data.x)? {
        text.push_str(label);
        text.push('\n');
    }
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(Exit::Success)
}

/// Accuracy and `T x T` counts, rows true class and columns predicted class,
/// both in the model's label order.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub labels: Vec<String>,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn new(labels: Vec<String>, predicted: &[usize], truth: &[usize]) -> Self {
        let t = labels.len();
        let mut confusion = vec![vec![0; t]; t];
        for (&p, &y) in predicted.iter().zip(truth) {
            confusion[y][p] += 1;
        }
        Self { labels, accuracy: 1.0 - error_rate(predicted, truth), confusion }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            s.push_str(l);
            for c in row {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let total: usize = self.confusion.iter().flatten().sum();
        let mut s = format!("accuracy: {:?}\nrows: {total}\nconfusion (rows true, columns predicted):\n", self.accuracy);
        let w = self
            .labels
            .iter()
            .map(String::len)
            .chain(self.confusion.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1);
        let _ = write!(s, "{:w$}", "");
        for l in &self.labels {
            let _ = write!(s, " {l:>w$}");
        }
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            let _ = write!(s, "\n{l:>w$}");
            for c in row {
                let _ = write!(s, " {c:>w$}");
            }
        }
        s
    }
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<Exit> {
    let model = ModelArtifact::load(&a.model)?;
    let data = load_for_model(&model, &a.data)?.remap_labels(&model.label_names)?;
    let eval = Evaluation::new(model.label_names.clone(), &model.predict(&data.x)?, &data.y);
    if let Some(p) = &a.out {
        write_file(p, &eval.to_csv())?;
    }
    emit(&eval.to_text(), a.report.as_deref())?;
    Ok(Exit::Success)
}

pub fn cmd_path(a: &PathArgs) -> anyhow::Result<Exit> {
    let cfg = a.solver.config();
    cfg.validate()?;
    let data = a.data.source().load_labeled(&a.data.data)?;
    let table = s_ls_rates(&cfg, &data)?;
    let mut csv = String::from("lambda,rate,selected\n");
    for (&l, &r) in table.lambdas.iter().zip(&table.rates) {
        let mark = u8::from(l == table.lambda);
        let _ = writeln!(csv, "{l:?},{r:?},{mark}");
    }
    match &a.out {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    let kind = match cfg.select {
        crate::config::Selection::Loo => "loo",
        crate::config::Selection::Ho => "validation",
    };
    let summary = format!("selected lambda: {:?}\n{kind} rate: {:?}", table.lambda, table.rate);
    match &a.report {
        Some(p) => write_file(p, &format!("{summary}\n"))?,
        None if a.out.is_some() => println!("{summary}"),
        None => eprintln!("{summary}"),
    }
    Ok(Exit::Success)
}

pub fn cmd_verify_theory(a: &VerifyArgs) -> anyhow::Result<Exit> {
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if a.classes < 2 {
        return Err(usage("--classes must be at least 2"));
    }
    let report = verify_theory(&TheoryConfig::new(a.classes, a.trials, a.seed))?;
    emit(&report.to_string(), a.report.as_deref())?;
    Ok(if report.passed() { Exit::Success } else { Exit::Partial })
}

pub fn cmd_benchmark(a: &BenchArgs) -> anyhow::Result<Exit> {
    let bench = Benchmark::from_file(&a.manifest)?;
    let table = bench.run();
    if let Some(p) = &a.out {
        write_file(p, &table.to_csv())?;
    }
    emit(table.to_text().trim_end(), a.report.as_deref())?;
    Ok(if table.failures() == 0 { Exit::Success } else { Exit::Partial })
}
