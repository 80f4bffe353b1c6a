use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Read as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context as _};
use log::info;
use pfolio_aspfeatures::{compute_static_features, emit_features, features_header, parse_smodels};
use pfolio_core::evaluation::{cross_validated_single_best, score, vbs, MetricReport};
use pfolio_core::pipeline::{
    evaluate_pipeline, evaluation_folds, load_model, plan_execution, save_model, train_pipeline, PipelineOptions,
    TrainedPortfolioSolver,
};
use pfolio_core::report::{compare, outcomes_csv_rows, Comparison, OUTCOMES_HEADER};
use pfolio_core::scenario::{load_scenario, Scenario, MISSING_TOKEN};
use pfolio_core::selectors::{cross_validated_choices, Approach, Grid, INNER_FOLDS};

use crate::args::{Cli, Command, Format, TrainingFlags};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::user(anyhow!("--jobs must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(CliError::internal)?;
    }
    match cli.command {
        Command::Train {
            scenario,
            approach,
            out,
            training,
            format,
        } => train(&scenario, &approach, &out, &training, format),
        Command::Select {
            model,
            features,
            stdin,
            format,
        } => select(&model, features, stdin, format),
        Command::Evaluate {
            scenario,
            approach,
            folds,
            training,
            out,
            format,
            permutations,
            alpha,
        } => evaluate(&scenario, &approach, folds, &training, out.as_deref(), format, permutations, alpha),
        Command::Compare {
            scenario,
            outcomes,
            seed,
            format,
            permutations,
            alpha,
            out,
        } => compare_files(&scenario, &outcomes, seed, format, permutations, alpha, out.as_deref()),
        Command::Features {
            program,
            stdin,
            instance,
            header,
        } => features(program.as_deref(), stdin, instance, header),
    }
}

fn parse_approach(id: &str) -> Result<Approach> {
    id.parse().map_err(|_| {
        let valid: Vec<&str> = Approach::ALL.iter().map(|a| a.id()).collect();
        CliError::user(anyhow!("unknown approach `{id}`; valid approaches: {}", valid.join(", ")))
    })
}

fn scenario_arg(path: &Path) -> Result<Scenario> {
    load_scenario(path).map_err(|e| CliError::user(anyhow!(e).context("cannot load scenario")))
}

fn options(approach: Approach, flags: &TrainingFlags) -> Result<PipelineOptions> {
    let mut opts = PipelineOptions::new(approach);
    opts.ignore_presolved = flags.ignore_presolved;
    opts.filter_algorithms = flags.filter_algorithms;
    if let Some(text) = &flags.grid {
        opts.grid = Some(Grid::parse(text).map_err(CliError::user)?);
    } else if flags.tune {
        opts.grid = Some(approach.default_grid());
    }
    Ok(opts)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display())).map_err(CliError::user)
}

fn names(ids: &[usize], all: &[String]) -> String {
    ids.iter().map(|&a| all[a].as_str()).collect::<Vec<_>>().join(" ")
}

fn train(scenario: &Path, approach: &str, out: &Path, flags: &TrainingFlags, format: Format) -> Result<()> {
    let approach = parse_approach(approach)?;
    let s = scenario_arg(scenario)?;
    let opts = options(approach, flags)?;
    let all = s.all_instances();
    let solver = train_pipeline(&s, &all, &opts, flags.seed)?;
    save_model(&solver, out).map_err(CliError::user)?;

    let estimate = if solver.model.is_schedule_only() {
        None
    } else {
        let model = &solver.model;
        let choices = cross_validated_choices(
            &s,
            &all,
            &model.algorithms,
            &opts.spec,
            &model.hyperparameters,
            INNER_FOLDS,
            flags.seed,
        )
        .map_err(|e| CliError::from(pfolio_core::Error::from(e)))?;
        let total: f64 = all
            .iter()
            .zip(&choices)
            .map(|(&i, c)| s.run(i, c.unwrap_or(solver.backup)).par(s.cutoff(), 10.0))
            .sum();
        Some(total / all.len() as f64)
    };
    print!("{}", train_summary(&solver, estimate, format));
    Ok(())
}

fn train_summary(solver: &TrainedPortfolioSolver, estimate: Option<f64>, format: Format) -> String {
    let algs = &solver.scenario_algorithms;
    let schedule: Vec<String> = solver
        .schedule
        .components
        .iter()
        .map(|c| format!("{}:{:.3}", algs[c.algorithm], c.slice))
        .collect();
    let selector = if solver.model.is_schedule_only() {
        "none".to_string()
    } else {
        solver.model.approach.id().to_string()
    };
    let fields = [
        ("approach", solver.approach().id().to_string()),
        ("selector", selector),
        ("hyperparameters", solver.model.hyperparameters.to_string()),
        ("algorithms", names(&solver.model.algorithms, algs)),
        ("backup", algs[solver.backup].clone()),
        ("schedule", schedule.join(" ")),
        ("selector_slice", format!("{:.3}", solver.selector_slice)),
        ("inner_cv_par10", estimate.map_or("-".into(), |e| format!("{e:.3}"))),
    ];
    let mut out = String::new();
    match format {
        Format::Text => {
            for (k, v) in fields {
                let _ = writeln!(out, "{k:<16} {v}");
            }
        }
        Format::Csv => {
            out.push_str("key,value\n");
            for (k, v) in fields {
                let _ = writeln!(out, "{k},{v}");
            }
        }
    }
    out
}

fn parse_row(text: &str) -> Result<Vec<Option<f64>>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|cell| {
            let cell = cell.trim();
            if cell == MISSING_TOKEN {
                Ok(None)
            } else {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| CliError::user(anyhow!("not a feature value: `{cell}`")))
            }
        })
        .collect()
}

fn select(model: &Path, features: Option<String>, stdin: bool, format: Format) -> Result<()> {
    let solver = load_model(model).map_err(CliError::user)?;
    let text = match (features, stdin) {
        (Some(t), _) => t,
        (None, true) => {
            let mut t = String::new();
            std::io::stdin().read_to_string(&mut t).map_err(CliError::user)?;
            t
        }
        (None, false) => return Err(CliError::user(anyhow!("give --features or --stdin"))),
    };
    let row = parse_row(&text)?;
    let expected = solver.model.n_features;
    if !row.is_empty() && row.len() != expected && !solver.model.is_schedule_only() {
        return Err(CliError::user(anyhow!(
            "feature row has {} values, the model expects {expected}",
            row.len()
        )));
    }
    let plan = plan_execution(&solver, &row).map_err(|e| CliError::from(pfolio_core::Error::from(e)))?;
    let algs = &solver.scenario_algorithms;
    let mut out = String::new();
    match format {
        Format::Text => {
            for c in &plan.presolve.components {
                let _ = writeln!(out, "presolve  {}  {:.3}", algs[c.algorithm], c.slice);
            }
            if let Some(a) = plan.final_algorithm {
                let role = if plan.uses_backup { "backup" } else { "selected" };
                let _ = writeln!(out, "{role:<8}  {}  remaining", algs[a]);
            }
        }
        Format::Csv => {
            out.push_str("step,algorithm,slice\n");
            for c in &plan.presolve.components {
                let _ = writeln!(out, "presolve,{},{:.3}", algs[c.algorithm], c.slice);
            }
            if let Some(a) = plan.final_algorithm {
                let role = if plan.uses_backup { "backup" } else { "selected" };
                let _ = writeln!(out, "{role},{},remaining", algs[a]);
            }
        }
    }
    print!("{out}");
    Ok(())
}

fn render(c: &Comparison, format: Format) -> String {
    match format {
        Format::Text => c.to_text(),
        Format::Csv => c.to_csv(),
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    scenario: &Path,
    approaches: &[String],
    k: usize,
    flags: &TrainingFlags,
    out: Option<&Path>,
    format: Format,
    permutations: usize,
    alpha: f64,
) -> Result<()> {
    let approaches: Vec<Approach> = if approaches.is_empty() {
        Approach::ALL.to_vec()
    } else {
        approaches.iter().map(|a| parse_approach(a)).collect::<Result<_>>()?
    };
    let s = scenario_arg(scenario)?;
    let folds = evaluation_folds(&s, k, flags.seed)?;
    let mut reports = Vec::new();
    let mut outcomes = String::from(OUTCOMES_HEADER);
    for &approach in &approaches {
        let started = Instant::now();
        let opts = options(approach, flags)?;
        let e = evaluate_pipeline(&s, &opts, k, flags.seed)?;
        let pairs: Vec<(bool, f64)> = e.outcomes.iter().map(|o| (o.solved, o.time)).collect();
        let report = score(&pairs, s.cutoff()).map_err(CliError::internal)?;
        info!(
            "{approach}: PAR10 {:.3}, {} timeouts ({:.2}s)",
            report.par10,
            report.timeouts,
            started.elapsed().as_secs_f64()
        );
        outcomes.push_str(&outcomes_csv_rows(approach.id(), &s, &e.folds, &e.outcomes));
        reports.push((approach.id().to_string(), report));
    }
    let all = s.all_instances();
    let oracle = vbs(&s, &all).map_err(CliError::internal)?;
    let single = cross_validated_single_best(&s, &folds).map_err(CliError::internal)?;
    let comparison = compare(reports, oracle, single, permutations, alpha, flags.seed).map_err(CliError::internal)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(CliError::user)?;
        write_file(&dir.join("comparison.csv"), &comparison.to_csv())?;
        write_file(&dir.join("outcomes.csv"), &outcomes)?;
    }
    print!("{}", render(&comparison, format));
    Ok(())
}

struct OutcomeTable {
    /// Approaches in order of first appearance.
    order: Vec<String>,
    rows: HashMap<String, HashMap<String, (usize, bool, f64)>>,
}

fn read_outcomes(paths: &[std::path::PathBuf]) -> Result<OutcomeTable> {
    let mut table = OutcomeTable {
        order: Vec::new(),
        rows: HashMap::new(),
    };
    let mut owner: HashMap<String, usize> = HashMap::new();
    for (p, path) in paths.iter().enumerate() {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(CliError::user)?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == OUTCOMES_HEADER.trim_end() => {}
            _ => return Err(CliError::user(anyhow!("{}: not an outcomes file", path.display()))),
        }
        for (n, line) in lines {
            let bad = |what: &str| CliError::user(anyhow!("{}:{}: {what}", path.display(), n + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad("expected 9 fields"));
            }
            let fold: usize = f[2].parse().map_err(|_| bad("bad fold"))?;
            let solved: bool = f[3].parse().map_err(|_| bad("bad solved flag"))?;
            let time: f64 = f[4].parse().map_err(|_| bad("bad time"))?;
            let approach = f[0].to_string();
            if *owner.entry(approach.clone()).or_insert(p) != p {
                return Err(bad("approach already read from another file"));
            }
            if !table.rows.contains_key(&approach) {
                table.order.push(approach.clone());
            }
            let rows = table.rows.entry(approach).or_default();
            if rows.insert(f[1].to_string(), (fold, solved, time)).is_some() {
                return Err(bad("duplicate instance"));
            }
        }
    }
    Ok(table)
}

fn compare_files(
    scenario: &Path,
    paths: &[std::path::PathBuf],
    seed: u64,
    format: Format,
    permutations: usize,
    alpha: f64,
    out: Option<&Path>,
) -> Result<()> {
    let s = scenario_arg(scenario)?;
    let table = read_outcomes(paths)?;
    if table.order.is_empty() {
        return Err(CliError::user(anyhow!("no outcomes found")));
    }
    let mut folds: Option<Vec<usize>> = None;
    let mut reports: Vec<(String, MetricReport)> = Vec::new();
    for approach in &table.order {
        let rows = &table.rows[approach];
        let mut pairs = Vec::with_capacity(s.n_instances());
        let mut these = Vec::with_capacity(s.n_instances());
        for inst in s.instances() {
            let &(fold, solved, time) = rows
                .get(inst)
                .ok_or_else(|| CliError::user(anyhow!("{approach}: no outcome for instance `{inst}`")))?;
            pairs.push((solved, time.min(s.cutoff())));
            these.push(fold);
        }
        if rows.len() != s.n_instances() {
            return Err(CliError::user(anyhow!("{approach}: outcomes for instances outside the scenario")));
        }
        match &folds {
            Some(f) if *f != these => {
                return Err(CliError::user(anyhow!("{approach}: fold assignment differs from {}", table.order[0])))
            }
            _ => folds = Some(these),
        }
        let report = score(&pairs, s.cutoff()).map_err(CliError::user)?;
        reports.push((approach.clone(), report));
    }
    let folds = folds.expect("at least one approach");
    let oracle = vbs(&s, &s.all_instances()).map_err(CliError::internal)?;
    let single = cross_validated_single_best(&s, &folds).map_err(CliError::internal)?;
    let comparison = compare(reports, oracle, single, permutations, alpha, seed).map_err(CliError::internal)?;
    if let Some(path) = out {
        write_file(path, &comparison.to_csv())?;
    }
    print!("{}", render(&comparison, format));
    Ok(())
}

fn features(program: Option<&Path>, stdin: bool, instance: Option<String>, header: bool) -> Result<()> {
    let (text, source) = if stdin {
        let mut t = String::new();
        std::io::stdin().read_to_string(&mut t).map_err(CliError::user)?;
        (t, "stdin".to_string())
    } else {
        let path = program.expect("clap requires a program or --stdin");
        let t = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(CliError::user)?;
        (t, path.display().to_string())
    };
    let parsed = parse_smodels(&text).map_err(|e| CliError::user(anyhow!("{source}: {e}")))?;
    let id = instance.unwrap_or_else(|| match program {
        Some(p) if !stdin => p.file_stem().map_or(source.clone(), |s| s.to_string_lossy().into_owned()),
        _ => source.clone(),
    });
    let vector = compute_static_features(&parsed);
    if header {
        println!("{}", features_header());
    }
    println!("{}", emit_features(&id, &vector));
    Ok(())
}
