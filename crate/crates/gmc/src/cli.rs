//! Command-line pipeline: compile shapes to plans, report penalty sweeps,
//! reproduce the ratio study, expand plans, and dump the kernel catalog.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 resource limit.

use crate::costmodel::{load_timing_grids, write_synthetic_grid, CostModel};
use crate::emit::{dispatch, emit_plan, render, Plan, Profile};
use crate::experiment::{run_flop_study, StudyConfig};
use crate::frontend::{normalize, parse, sample_instance, Instance, Shape};
use crate::poly::format_rat;
use crate::selection::{
    base_set, expand_set, penalty_bound, Objective, VariantPool, VariantSet,
};
use crate::variants::{EnumError, DEFAULT_ENUM_LIMIT};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "gmc",
    about = "Compile generalized matrix chains with symbolic sizes into multi-versioned dispatch plans",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Avg,
    Max,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Objective {
        match o {
            ObjectiveArg::Avg => Objective::Avg,
            ObjectiveArg::Max => Objective::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Flops,
    Time,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Training instances for representative choice and expansion.
    #[arg(long, default_value_t = 1000)]
    train: usize,
    /// Validation instances for reports.
    #[arg(long, default_value_t = 100)]
    validate: usize,
    /// Smallest sampled size.
    #[arg(long, default_value_t = 2)]
    lo: u32,
    /// Largest sampled size.
    #[arg(long, default_value_t = 1000)]
    hi: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a shape file into a dispatch plan.
    Compile {
        /// Input shape file (.gmc).
        input: PathBuf,
        /// Output plan file (.gmcplan).
        #[arg(short, long)]
        output: PathBuf,
        /// Extra variants to add greedily on top of the base set.
        #[arg(long, default_value_t = 0)]
        expand: usize,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Avg)]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value_t = ModelArg::Flops)]
        model: ModelArg,
        /// Timing-grid CSV (required with --model time).
        #[arg(long)]
        grids: Option<PathBuf>,
        /// Also render source text with this profile ("default" or a path).
        #[arg(long)]
        render: Option<String>,
        /// Where to write rendered source (defaults next to the plan).
        #[arg(long)]
        render_out: Option<PathBuf>,
        #[command(flatten)]
        sample: SampleArgs,
        /// Tree-enumeration cap (env GMC_ENUM_LIMIT overrides the default).
        #[arg(long)]
        enum_limit: Option<usize>,
    },
    /// Validation sweep of a plan against the left-to-right baseline and the
    /// exhaustive optimum; writes a per-instance CSV.
    Report {
        #[arg(long)]
        shape: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        enum_limit: Option<usize>,
        /// Worker threads for the sweep (0 = rayon default).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Ratio study over random shapes: base set, expansions, left-to-right.
    Bench {
        /// Chain length.
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Number of random shapes.
        #[arg(long, default_value_t = 50)]
        shapes: usize,
        /// Expansion steps measured on top of the base set.
        #[arg(long, default_value_t = 2)]
        expand: usize,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Avg)]
        objective: ObjectiveArg,
        #[arg(long)]
        enum_limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Grow an existing plan by k variants.
    Expand {
        #[arg(long)]
        shape: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(short = 'k', long = "add", default_value_t = 1)]
        add: usize,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Avg)]
        objective: ObjectiveArg,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        enum_limit: Option<usize>,
    },
    /// Dump the kernel catalog as JSON.
    DumpCatalog {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Emit a synthetic timing-grid CSV for testing the time model.
    GenSyntheticGrid {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Limit(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Limit(_) => EXIT_LIMIT,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Limit(m) => m,
        }
    }
}

impl From<EnumError> for CliError {
    fn from(e: EnumError) -> CliError {
        CliError::Limit(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Input(e.to_string())
    }
}

/// Parse and run; returns the process exit code. Tests drive this directly.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version output on --help and --version.
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn enum_limit_from(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("GMC_ENUM_LIMIT")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(DEFAULT_ENUM_LIMIT)
}

fn load_shape(path: &Path) -> Result<Shape, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let parsed = parse(&text).map_err(|e| CliError::Input(e.to_string()))?;
    normalize(&parsed).map_err(|e| CliError::Input(e.to_string()))
}

fn load_plan(path: &Path) -> Result<Plan, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Plan::from_json(&text).map_err(|e| CliError::Input(e.to_string()))
}

fn load_model(model: ModelArg, grids: Option<&Path>) -> Result<CostModel, CliError> {
    match model {
        ModelArg::Flops => Ok(CostModel::Flops),
        ModelArg::Time => {
            let path = grids.ok_or_else(|| {
                CliError::Input("--model time requires --grids <csv>".to_string())
            })?;
            let file = fs::File::open(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let (tm, warnings) =
                load_timing_grids(file).map_err(|e| CliError::Input(e.to_string()))?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            Ok(CostModel::Time(tm))
        }
    }
}

fn sample_instances(shape: &Shape, count: usize, lo: u32, hi: u32, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| sample_instance(shape.classes(), lo, hi, &mut rng))
        .collect()
}

/// Pool indices of the plan's variants, matched by parenthesization.
fn plan_members(plan: &Plan, pool: &VariantPool) -> Result<VariantSet, CliError> {
    let mut members = Vec::new();
    for v in &plan.variants {
        let idx = pool
            .variants
            .iter()
            .position(|pv| pv.tree.to_string() == v.tree)
            .ok_or_else(|| {
                CliError::Input(format!("plan variant `{}` not found for this shape", v.tree))
            })?;
        members.push(idx);
    }
    Ok(VariantSet::new(members))
}

fn with_jobs<R>(jobs: usize, body: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    if jobs == 0 {
        body()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool")
            .install(body)
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Compile {
            input,
            output,
            expand,
            objective,
            model,
            grids,
            render: render_profile,
            render_out,
            sample,
            enum_limit,
        } => {
            let shape = load_shape(&input)?;
            let cost_model = load_model(model, grids.as_deref())?;
            let limit = enum_limit_from(enum_limit);
            let pool = VariantPool::enumerate(&shape, limit)?;
            let train = sample_instances(&shape, sample.train, sample.lo, sample.hi, sample.seed);
            let (base, reps) = base_set(&pool, &cost_model, &train);
            let set = if expand > 0 {
                expand_set(
                    &pool,
                    &cost_model,
                    &train,
                    objective.into(),
                    base.len() + expand,
                    &base,
                )
            } else {
                base
            };
            let plan = emit_plan(&shape, &pool, &set, &cost_model);
            fs::write(&output, plan.to_json())?;

            let bound = penalty_bound(&pool);
            println!("shape: {}", shape.signature());
            println!(
                "classes: {} (representatives {:?})",
                shape.classes().n_classes(),
                reps
            );
            println!("variants: {} of {} candidates", set.len(), pool.len());
            println!(
                "penalty bound: {} (best-in-set within {}x of optimal FLOPs)",
                format_rat(bound),
                format_rat(bound + crate::poly::rat(1, 1))
            );
            println!("plan: {}", output.display());

            if let Some(profile_arg) = render_profile {
                let profile = if profile_arg == "default" {
                    Profile::default_profile()
                } else {
                    let text = fs::read_to_string(&profile_arg)
                        .map_err(|e| CliError::Input(format!("{profile_arg}: {e}")))?;
                    Profile::parse(&text).map_err(|e| CliError::Input(e.to_string()))?
                };
                let rendered =
                    render(&plan, &profile).map_err(|e| CliError::Input(e.to_string()))?;
                let path = render_out.unwrap_or_else(|| output.with_extension("txt"));
                fs::write(&path, rendered)?;
                println!("render: {}", path.display());
            }
            Ok(())
        }

        Command::Report {
            shape,
            plan,
            output,
            sample,
            enum_limit,
            jobs,
        } => {
            let shape = load_shape(&shape)?;
            let plan = load_plan(&plan)?;
            let limit = enum_limit_from(enum_limit);
            let pool = VariantPool::enumerate(&shape, limit)?;
            let set = plan_members(&plan, &pool)?;
            let model = match &plan.cost_model {
                crate::emit::CostModelDesc::Flops => CostModel::Flops,
                crate::emit::CostModelDesc::Time { model } => CostModel::Time(model.clone()),
            };
            let instances =
                sample_instances(&shape, sample.validate, sample.lo, sample.hi, sample.seed);
            let ltr = pool.left_to_right_index();

            let rows: Vec<(f64, f64, f64)> = with_jobs(jobs, || {
                use rayon::prelude::*;
                instances
                    .par_iter()
                    .map(|q| {
                        let costs = pool.costs(&model, q);
                        let opt = costs.iter().copied().fold(f64::INFINITY, f64::min);
                        let in_set = set
                            .members
                            .iter()
                            .map(|&i| costs[i])
                            .fold(f64::INFINITY, f64::min);
                        (in_set, costs[ltr], opt)
                    })
                    .collect()
            });

            let mut csv = String::new();
            let n_syms = shape.classes().n_symbols();
            let header: Vec<String> = (0..n_syms)
                .map(|i| format!("q{i}"))
                .chain(
                    ["cost_set", "cost_ltr", "cost_opt", "ratio_set", "ratio_ltr"]
                        .iter()
                        .map(|s| s.to_string()),
                )
                .collect();
            csv.push_str(&header.join(","));
            csv.push('\n');
            let mut ratios: Vec<f64> = Vec::new();
            for (q, (in_set, ltr_cost, opt)) in instances.iter().zip(&rows) {
                let ratio_set = in_set / opt;
                ratios.push(ratio_set);
                let row: Vec<String> = q
                    .0
                    .iter()
                    .map(|v| v.to_string())
                    .chain([
                        in_set.to_string(),
                        ltr_cost.to_string(),
                        opt.to_string(),
                        ratio_set.to_string(),
                        (ltr_cost / opt).to_string(),
                    ])
                    .collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            fs::write(&output, csv)?;

            ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let quantile = |p: f64| {
                let idx = ((p * ratios.len() as f64).ceil() as usize).clamp(1, ratios.len()) - 1;
                ratios[idx]
            };
            println!("instances: {}", ratios.len());
            println!("ratio over optimum (plan set):");
            println!("  max: {}", ratios.last().unwrap());
            println!(
                "  mean: {}",
                ratios.iter().sum::<f64>() / ratios.len() as f64
            );
            println!(
                "  p50: {}  p90: {}  p99: {}",
                quantile(0.5),
                quantile(0.9),
                quantile(0.99)
            );
            println!("report: {}", output.display());
            Ok(())
        }

        Command::Bench {
            n,
            shapes,
            expand,
            output,
            sample,
            objective,
            enum_limit,
            jobs,
        } => {
            let cfg = StudyConfig {
                n,
                shapes,
                train: sample.train,
                validate: sample.validate,
                lo: sample.lo,
                hi: sample.hi,
                seed: sample.seed,
                expand,
                objective: objective.into(),
                enum_limit: enum_limit_from(enum_limit),
            };
            let result = with_jobs(jobs, || run_flop_study(&cfg))?;
            let mut csv = Vec::new();
            result.write_csv(&mut csv)?;
            fs::write(&output, csv)?;

            println!(
                "shapes: {}  instances/shape: {}  rows: {}",
                cfg.shapes,
                cfg.validate,
                result.rows.len()
            );
            for (col, label) in result.set_labels.iter().enumerate() {
                println!(
                    "{label}: max ratio {:.4}, <=1.05 on {:.1}%, <=1.2 on {:.1}%",
                    result.max_ratio(col),
                    100.0 * result.fraction_at_most(col, 1.05),
                    100.0 * result.fraction_at_most(col, 1.2),
                );
            }
            let ltr_max = result
                .rows
                .iter()
                .map(|r| r.ratio_ltr)
                .fold(f64::NEG_INFINITY, f64::max);
            println!("left-to-right: max ratio {ltr_max:.4}");
            println!("rows: {}", output.display());
            Ok(())
        }

        Command::Expand {
            shape,
            plan,
            add,
            output,
            objective,
            sample,
            enum_limit,
        } => {
            let shape = load_shape(&shape)?;
            let plan = load_plan(&plan)?;
            let limit = enum_limit_from(enum_limit);
            let pool = VariantPool::enumerate(&shape, limit)?;
            let initial = plan_members(&plan, &pool)?;
            let model = match &plan.cost_model {
                crate::emit::CostModelDesc::Flops => CostModel::Flops,
                crate::emit::CostModelDesc::Time { model } => CostModel::Time(model.clone()),
            };
            let train = sample_instances(&shape, sample.train, sample.lo, sample.hi, sample.seed);
            let expanded = expand_set(
                &pool,
                &model,
                &train,
                objective.into(),
                initial.len() + add,
                &initial,
            );
            let new_plan = emit_plan(&shape, &pool, &expanded, &model);
            fs::write(&output, new_plan.to_json())?;
            println!("variants: {} -> {}", initial.len(), expanded.len());
            println!("plan: {}", output.display());
            Ok(())
        }

        Command::DumpCatalog { output } => {
            let dump = crate::catalog::dump_catalog();
            let mut json = serde_json::to_string_pretty(&dump).expect("catalog serializes");
            json.push('\n');
            match output {
                Some(path) => fs::write(path, json)?,
                None => print!("{json}"),
            }
            Ok(())
        }

        Command::GenSyntheticGrid { output, seed } => {
            let file = fs::File::create(&output)?;
            write_synthetic_grid(file, seed).map_err(|e| CliError::Input(e.to_string()))?;
            println!("grid: {}", output.display());
            Ok(())
        }
    }
}

/// Convenience for tests and embedding: dispatch through a plan file.
pub fn dispatch_plan_file(plan: &Path, q: &[u32]) -> Result<usize, String> {
    let plan = load_plan(plan).map_err(|e| e.message().to_string())?;
    dispatch(&plan, &Instance(q.to_vec())).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        run(args.iter().map(|s| s.to_string()))
    }

    #[test]
    fn usage_error_exits_one() {
        assert_eq!(run_args(&["gmc", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run_args(&["gmc", "compile"]), EXIT_USAGE);
    }

    #[test]
    fn missing_input_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out.gmcplan");
        assert_eq!(
            run_args(&[
                "gmc",
                "compile",
                "/nonexistent/missing.gmc",
                "-o",
                out.to_str().unwrap()
            ]),
            EXIT_INPUT
        );
    }

    #[test]
    fn bad_shape_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("bad.gmc");
        fs::write(&src, "Matrix A <General, SPD>; X := A * A;").unwrap();
        let out = dir.path().join("out.gmcplan");
        assert_eq!(
            run_args(&[
                "gmc",
                "compile",
                src.to_str().unwrap(),
                "-o",
                out.to_str().unwrap()
            ]),
            EXIT_INPUT
        );
    }

    #[test]
    fn enum_limit_exits_three() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("long.gmc");
        let decls: String = (1..=6)
            .map(|i| format!("Matrix A{i} <General, Singular>; "))
            .collect();
        let chain: Vec<String> = (1..=6).map(|i| format!("A{i}")).collect();
        fs::write(&src, format!("{decls}X := {};", chain.join(" * "))).unwrap();
        let out = dir.path().join("out.gmcplan");
        assert_eq!(
            run_args(&[
                "gmc",
                "compile",
                src.to_str().unwrap(),
                "-o",
                out.to_str().unwrap(),
                "--enum-limit",
                "4"
            ]),
            EXIT_LIMIT
        );
    }

    #[test]
    fn compile_writes_plan_and_render() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("chain.gmc");
        fs::write(
            &src,
            "Matrix G1 <General, Singular>; Matrix L <LowerTri, Invertible>; \
             Matrix U <UpperTri, Singular>; Matrix G2 <General, Singular>; \
             X := G1 * L^-1 * U * G2^T;",
        )
        .unwrap();
        let out = dir.path().join("chain.gmcplan");
        let code = run_args(&[
            "gmc",
            "compile",
            src.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
            "--render",
            "default",
        ]);
        assert_eq!(code, 0);
        let plan = load_plan(&out).unwrap();
        assert_eq!(plan.variants.len(), 3);
        assert!(dir.path().join("chain.txt").exists());
        // Dispatch through the written plan file.
        let idx = dispatch_plan_file(&out, &[4, 6, 6, 6, 3]).unwrap();
        assert!(idx < 3);
    }
}
