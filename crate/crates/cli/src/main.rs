//! `hfset`: command-line front end for the hereditarily finite set workbench.

use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use hfset::absoluteness::{self, AbsError, FuzzConfig};
use hfset::collapse::{self, CollapseError, Digraph};
use hfset::definability;
use hfset::eval::{self, Environment, EvalOptions, Universe};
use hfset::logic::{self, Formula};
use hfset::metatheory::{self, Completeness, FinStructure, MetaError, Theory};
use hfset::{HfSet, SetStore};

#[derive(Parser)]
#[command(name = "hfset", version, about = "Hereditarily finite sets, collapse, absoluteness and finite model theory")]
struct Cli {
    /// Emit a JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a formula over a universe.
    Eval(EvalArgs),
    /// Build V_n or L_n[A] and print it or its Ackermann code.
    Build(BuildArgs),
    /// Mostowski-collapse a graph given as an edge list.
    Collapse(CollapseArgs),
    /// Present a transitive set as a graph through a seeded random bijection.
    Encode(EncodeArgs),
    /// Check one bounded formula in an inner and an outer universe.
    Absolute(AbsoluteArgs),
    /// Run the seeded absoluteness harness.
    Fuzz(FuzzArgs),
    /// Check a theory file for completeness within caps.
    Complete(CompleteArgs),
    /// Translate a first-order sentence into a bounded set formula.
    Translate(TranslateArgs),
}

#[derive(Args)]
struct FormulaArgs {
    /// Formula text.
    #[arg(long, conflicts_with = "formula_file")]
    formula: Option<String>,
    /// File holding the formula text.
    #[arg(long)]
    formula_file: Option<String>,
    /// Variable assignment NAME=SET, repeatable.
    #[arg(long = "var", value_name = "NAME=SET")]
    vars: Vec<String>,
    /// Parameter assignment NAME=SET (without `$`), repeatable.
    #[arg(long = "param", value_name = "NAME=SET")]
    params: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// `V<n>`, `L<n>[file]` or a set literal.
    #[arg(long)]
    universe: String,
    /// Interpretation of `A`, a set literal; defaults to the universe's own.
    #[arg(long)]
    pred: Option<String>,
    #[command(flatten)]
    formula: FormulaArgs,
    /// Reject values and quantifier bounds outside the carrier.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct BuildArgs {
    /// `V<n>` or `L<n>[file]`.
    #[arg(long)]
    stage: String,
    /// Print the Ackermann code instead of the literal.
    #[arg(long)]
    coded: bool,
}

#[derive(Args)]
struct CollapseArgs {
    /// Edge-list file.
    #[arg(long)]
    graph: String,
}

#[derive(Args)]
struct EncodeArgs {
    /// A transitive set literal.
    #[arg(long)]
    set: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AbsoluteArgs {
    #[arg(long)]
    inner: String,
    #[arg(long)]
    outer: String,
    /// Outer interpretation of `A`; the inner one is its restriction.
    #[arg(long)]
    pred: Option<String>,
    #[command(flatten)]
    formula: FormulaArgs,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 4)]
    max_stage: usize,
    /// Worker threads; output does not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// One line per trial.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct CompleteArgs {
    /// Theory file.
    #[arg(long)]
    theory: String,
    #[arg(long, default_value_t = 3)]
    size_cap: usize,
    #[arg(long, default_value_t = 3)]
    depth_cap: usize,
}

#[derive(Args)]
struct TranslateArgs {
    /// First-order sentence.
    #[arg(long)]
    sentence: String,
    /// Structure file.
    #[arg(long)]
    structure: String,
}

/// An error with a stable machine-readable code.
struct Failure {
    code: &'static str,
    message: String,
    /// Extra report lines printed on stdout before the error.
    detail: Vec<String>,
}

impl Failure {
    fn new(code: &'static str, message: impl ToString) -> Self {
        Failure {
            code,
            message: message.to_string(),
            detail: Vec::new(),
        }
    }
}

/// What a successful command produced.
struct Outcome {
    text: String,
    json: Value,
    /// Property violation: exit status 2.
    violation: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let mut lines = rendered.lines();
            let first = lines.next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            for l in lines {
                eprintln!("{l}");
            }
            return ExitCode::from(1);
        }
    };
    let json = cli.json;
    match run(cli.command) {
        Ok(out) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("serializable"));
            } else {
                print!("{}", out.text);
            }
            ExitCode::from(if out.violation { 2 } else { 0 })
        }
        Err(f) => {
            if json {
                let body = json!({"error": f.code, "message": f.message, "detail": f.detail});
                println!("{}", serde_json::to_string_pretty(&body).expect("serializable"));
            } else {
                for line in &f.detail {
                    println!("{line}");
                }
            }
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Outcome, Failure> {
    let mut store = SetStore::new();
    match command {
        Command::Eval(a) => cmd_eval(&mut store, a),
        Command::Build(a) => cmd_build(&mut store, a),
        Command::Collapse(a) => cmd_collapse(&mut store, a),
        Command::Encode(a) => cmd_encode(&mut store, a),
        Command::Absolute(a) => cmd_absolute(&mut store, a),
        Command::Fuzz(a) => cmd_fuzz(a),
        Command::Complete(a) => cmd_complete(a),
        Command::Translate(a) => cmd_translate(&mut store, a),
    }
}

fn read(path: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{path}: {e}")))
}

fn set_literal(store: &mut SetStore, text: &str) -> Result<HfSet, Failure> {
    store
        .parse_set(text)
        .map_err(|e| Failure::new("parse-set", format!("`{text}`: {e}")))
}

/// A parsed universe spec: carrier plus the predicate it carries by default.
struct UniverseSpec {
    carrier: HfSet,
    pred: HfSet,
}

fn universe_spec(store: &mut SetStore, spec: &str) -> Result<UniverseSpec, Failure> {
    let spec = spec.trim();
    let stage_number = |digits: &str| {
        digits
            .parse::<usize>()
            .map_err(|_| Failure::new("universe", format!("bad stage number in `{spec}`")))
    };
    if let Some(n) = spec.strip_prefix('V') {
        let n = stage_number(n)?;
        let carrier = store.v_stage(n).map_err(|e| Failure::new("cap", e))?;
        let pred = store.empty();
        return Ok(UniverseSpec { carrier, pred });
    }
    if let Some(rest) = spec.strip_prefix('L') {
        let (n, file) = match rest.split_once('[') {
            Some((n, file)) => {
                let file = file
                    .strip_suffix(']')
                    .ok_or_else(|| Failure::new("universe", format!("missing `]` in `{spec}`")))?;
                (n, Some(file))
            }
            None => (rest, None),
        };
        let n = stage_number(n)?;
        let a = match file {
            Some(path) => {
                let text = read(path)?;
                set_literal(store, text.trim())?
            }
            None => store.empty(),
        };
        let stage = definability::l_stage(store, n, a).map_err(|e| Failure::new("cap", e))?;
        let pred = eval::restrict(store, a, stage.set);
        return Ok(UniverseSpec {
            carrier: stage.set,
            pred,
        });
    }
    if spec.starts_with('{') {
        let carrier = set_literal(store, spec)?;
        let pred = store.empty();
        return Ok(UniverseSpec { carrier, pred });
    }
    Err(Failure::new(
        "universe",
        format!("`{spec}` is not `V<n>`, `L<n>[file]` or a set literal"),
    ))
}

fn formula_and_env(
    store: &mut SetStore,
    args: &FormulaArgs,
) -> Result<(Formula, Environment), Failure> {
    let text = match (&args.formula, &args.formula_file) {
        (Some(t), None) => t.clone(),
        (None, Some(path)) => read(path)?,
        _ => return Err(Failure::new("usage", "give exactly one of --formula and --formula-file")),
    };
    let f = logic::parse(store, &text).map_err(|e| Failure::new("parse-formula", e))?;
    let mut env = Environment::new();
    for (list, is_param) in [(&args.vars, false), (&args.params, true)] {
        for binding in list {
            let (name, value) = binding
                .split_once('=')
                .ok_or_else(|| Failure::new("usage", format!("expected NAME=SET, found `{binding}`")))?;
            let name = name.trim().trim_start_matches('$');
            let value = set_literal(store, value.trim())?;
            env = if is_param {
                env.with_param(name, value)
            } else {
                env.with_var(name, value)
            };
        }
    }
    Ok((f, env))
}

fn cmd_eval(store: &mut SetStore, a: EvalArgs) -> Result<Outcome, Failure> {
    let spec = universe_spec(store, &a.universe)?;
    let pred = match &a.pred {
        Some(p) => set_literal(store, p)?,
        None => spec.pred,
    };
    let u = Universe::new(store, spec.carrier, pred).map_err(|e| Failure::new("precondition", e))?;
    let (f, env) = formula_and_env(store, &a.formula)?;
    let opts = EvalOptions { strict: a.strict };
    let value = eval::eval_with(store, &f, &env, &u, opts).map_err(|e| Failure::new("eval", e))?;
    Ok(Outcome {
        text: format!("{value}\n"),
        json: json!({
            "formula": f.display(store).to_string(),
            "universe": a.universe,
            "bounded": f.is_bounded(),
            "value": value,
        }),
        violation: false,
    })
}

fn cmd_build(store: &mut SetStore, a: BuildArgs) -> Result<Outcome, Failure> {
    if a.stage.trim().starts_with('{') {
        return Err(Failure::new("universe", "build takes `V<n>` or `L<n>[file]`"));
    }
    let spec = universe_spec(store, &a.stage)?;
    let card = store.card(spec.carrier);
    let code = store
        .ackermann_code(spec.carrier)
        .map_err(|e| Failure::new("cap", e))?
        .to_string();
    let literal = store.to_literal(spec.carrier);
    let text = if a.coded { format!("{code}\n") } else { format!("{literal}\n") };
    Ok(Outcome {
        text,
        json: json!({
            "stage": a.stage,
            "cardinality": card,
            "rank": store.rank(spec.carrier),
            "code": code,
            "set": literal,
        }),
        violation: false,
    })
}

fn cmd_collapse(store: &mut SetStore, a: CollapseArgs) -> Result<Outcome, Failure> {
    let text = read(&a.graph)?;
    let g = Digraph::parse(&text).map_err(|e| Failure::new("parse-graph", e))?;
    match collapse::mostowski_collapse(store, &g) {
        Ok(result) => {
            let pi: Vec<String> = result.pi.iter().map(|s| store.to_literal(*s)).collect();
            Ok(Outcome {
                text: collapse::render_collapse(store, &result),
                json: json!({"pi": pi, "image": store.to_literal(result.image)}),
                violation: false,
            })
        }
        Err(CollapseError::NotWellFounded(w)) => Err(Failure {
            code: "not-well-founded",
            message: format!("cycle {:?} inside residual {:?}", w.cycle, w.residual),
            detail: vec![
                format!("residual\t{}", join(&w.residual)),
                format!("cycle\t{}", join(&w.cycle)),
            ],
        }),
        Err(CollapseError::NotExtensional(w)) => Err(Failure {
            code: "not-extensional",
            message: format!("nodes {} and {} have the same predecessors", w.x, w.y),
            detail: vec![format!("same-predecessors\t{} {}", w.x, w.y)],
        }),
        Err(e) => Err(Failure::new("precondition", e)),
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn cmd_encode(store: &mut SetStore, a: EncodeArgs) -> Result<Outcome, Failure> {
    let s = set_literal(store, &a.set)?;
    let enc = collapse::encode_as_graph(store, s, a.seed).map_err(|e| match e {
        CollapseError::NotTransitive => Failure::new("not-transitive", e),
        other => Failure::new("precondition", other),
    })?;
    let mut text = String::new();
    for (node, label) in enc.labels.iter().enumerate() {
        text.push_str(&format!("# {node} = {}\n", store.display(*label)));
    }
    text.push_str(&enc.graph.to_string());
    let labels: Vec<String> = enc.labels.iter().map(|l| store.to_literal(*l)).collect();
    let edges: Vec<[usize; 2]> = enc.graph.edges().map(|(u, v)| [u, v]).collect();
    Ok(Outcome {
        text,
        json: json!({"nodes": labels.len(), "edges": edges, "labels": labels, "seed": a.seed}),
        violation: false,
    })
}

fn cmd_absolute(store: &mut SetStore, a: AbsoluteArgs) -> Result<Outcome, Failure> {
    let outer_spec = universe_spec(store, &a.outer)?;
    let inner_spec = universe_spec(store, &a.inner)?;
    let pred = match &a.pred {
        Some(p) => set_literal(store, p)?,
        None => outer_spec.pred,
    };
    let outer = Universe::new(store, outer_spec.carrier, pred).map_err(|e| Failure::new("precondition", e))?;
    let inner = Universe::restricted(store, inner_spec.carrier, pred);
    let (f, env) = formula_and_env(store, &a.formula)?;
    let verdict = absoluteness::check_absolute(store, &f, &env, &inner, &outer).map_err(|e| match e {
        AbsError::Preconditions(vs) => Failure {
            code: "precondition",
            message: vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
            detail: vs.iter().map(|v| format!("violation\t{v}")).collect(),
        },
        other => Failure::new("eval", other),
    })?;
    let word = if verdict.agree() { "agree" } else { "DISAGREE" };
    Ok(Outcome {
        text: format!("{word}\tinner={}\touter={}\n", verdict.inner, verdict.outer),
        json: json!({
            "formula": f.display(store).to_string(),
            "inner": verdict.inner,
            "outer": verdict.outer,
            "agree": verdict.agree(),
        }),
        violation: !verdict.agree(),
    })
}

/// Per-worker result, rendered against the worker's own store.
struct FuzzChunk {
    trials: u64,
    agreements: u64,
    lines: Vec<String>,
    disagreements: Vec<String>,
}

fn fuzz_chunk(config: &FuzzConfig, range: std::ops::Range<u64>) -> Result<FuzzChunk, AbsError> {
    let mut store = SetStore::new();
    let report = absoluteness::fuzz_trials(&mut store, config, range)?;
    Ok(FuzzChunk {
        trials: report.trials,
        agreements: report.agreements,
        disagreements: report.disagreements.iter().map(|d| d.render(&store)).collect(),
        lines: report.lines,
    })
}

fn cmd_fuzz(a: FuzzArgs) -> Result<Outcome, Failure> {
    if a.max_stage > absoluteness::MAX_FUZZ_STAGE {
        return Err(Failure::new(
            "cap",
            format!("max stage {} exceeds {}", a.max_stage, absoluteness::MAX_FUZZ_STAGE),
        ));
    }
    let config = FuzzConfig {
        seed: a.seed,
        trials: a.trials,
        max_depth: a.max_depth,
        max_stage: a.max_stage,
        verbose: a.verbose,
    };
    let jobs = a.jobs.max(1) as u64;
    let per = a.trials.div_ceil(jobs).max(1);
    let ranges: Vec<_> = (0..jobs)
        .map(|j| (j * per).min(a.trials)..((j + 1) * per).min(a.trials))
        .filter(|r| !r.is_empty())
        .collect();
    let chunks: Vec<Result<FuzzChunk, AbsError>> = std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|r| {
                let r = r.clone();
                let config = &config;
                s.spawn(move || fuzz_chunk(config, r))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut total = FuzzChunk {
        trials: 0,
        agreements: 0,
        lines: Vec::new(),
        disagreements: Vec::new(),
    };
    for c in chunks {
        let c = c.map_err(|e| Failure::new("fuzz", e))?;
        total.trials += c.trials;
        total.agreements += c.agreements;
        total.lines.extend(c.lines);
        total.disagreements.extend(c.disagreements);
    }
    let mut text = String::new();
    for l in &total.lines {
        text.push_str(l);
        text.push('\n');
    }
    for d in &total.disagreements {
        text.push_str(&format!("disagreement\t{d}\n"));
    }
    text.push_str(&format!("{}/{} agree\n", total.agreements, total.trials));
    Ok(Outcome {
        text,
        json: json!({
            "seed": a.seed,
            "trials": total.trials,
            "agreements": total.agreements,
            "disagreements": total.disagreements,
            "lines": total.lines,
        }),
        violation: !total.disagreements.is_empty(),
    })
}

fn meta_failure(e: MetaError) -> Failure {
    let code = match &e {
        MetaError::Parse(_) | MetaError::NotClosed { .. } => "parse-theory",
        MetaError::Cap { .. } => "cap",
        MetaError::Signature(_) | MetaError::BadTuple { .. } | MetaError::EmptyDomain => "signature",
        _ => "metatheory",
    };
    Failure::new(code, e)
}

fn structure_json(m: &FinStructure) -> Value {
    let rels: serde_json::Map<String, Value> = m
        .signature()
        .iter()
        .enumerate()
        .map(|(j, (name, _))| (name.to_string(), json!(m.relation(j).iter().collect::<Vec<_>>())))
        .collect();
    json!({"size": m.size(), "relations": rels})
}

fn cmd_complete(a: CompleteArgs) -> Result<Outcome, Failure> {
    let t = Theory::parse(&read(&a.theory)?).map_err(meta_failure)?;
    let verdict = metatheory::check_complete_upto(&t, a.size_cap, a.depth_cap).map_err(meta_failure)?;
    let json = match &verdict {
        Completeness::Complete { models, size_cap, depth_cap } => json!({
            "verdict": "complete", "models": models, "size_cap": size_cap, "depth_cap": depth_cap
        }),
        Completeness::Counterexample { sentence, true_in, false_in } => json!({
            "verdict": "incomplete",
            "sentence": sentence.to_string(),
            "true_in": structure_json(true_in),
            "false_in": structure_json(false_in),
        }),
        Completeness::Inconsistent { size_cap } => json!({"verdict": "inconsistent", "size_cap": size_cap}),
    };
    Ok(Outcome {
        text: format!("{verdict}\n"),
        json,
        violation: false,
    })
}

fn cmd_translate(store: &mut SetStore, a: TranslateArgs) -> Result<Outcome, Failure> {
    let m = FinStructure::parse(&read(&a.structure)?).map_err(meta_failure)?;
    let phi = metatheory::parse_fo(&a.sentence).map_err(|e| Failure::new("parse-formula", e))?;
    if let Some(v) = phi.free_vars().into_iter().next() {
        return Err(Failure::new("parse-formula", format!("free variable `{v}` in sentence")));
    }
    let sigma = metatheory::sat_to_bounded(store, &phi, m.signature()).map_err(meta_failure)?;
    let encoded = metatheory::encode_structure(store, &m).map_err(meta_failure)?;
    let via_sets = metatheory::satisfies_via_sets(store, &m, &phi, &[]).map_err(meta_failure)?;
    let direct = metatheory::fo_holds(&m, &phi).map_err(meta_failure)?;
    let text = format!(
        "{}\nencoding\t{}\nbounded\t{}\nvalue\t{}\ndirect\t{}\n",
        sigma.display(store),
        store.display(encoded),
        sigma.is_bounded(),
        via_sets,
        direct
    );
    Ok(Outcome {
        text,
        json: json!({
            "formula": sigma.display(store).to_string(),
            "parameter": metatheory::STRUCTURE_PARAM,
            "encoding": store.to_literal(encoded),
            "bounded": sigma.is_bounded(),
            "value": via_sets,
            "direct": direct,
        }),
        violation: via_sets != direct,
    })
}
