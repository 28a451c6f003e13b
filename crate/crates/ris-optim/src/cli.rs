//! Command-line front end: single solves, Monte-Carlo parameter sweeps, and
//! convergence studies, with CSV/JSON artifacts.
//!
//! Subcommands: `solve | sweep | convergence | validate-config`. Every run
//! with an explicit seed is bit-reproducible in its CSV outputs; wall-clock
//! timings therefore go to the JSON manifest, never into the CSVs. The env
//! var `RIS_OPTIM_PRESET` picks the preset used when `--config` is absent.
//!
//! Exit codes: 0 ok, 1 usage error, 2 infeasible, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::RisError;
use crate::model::StateDump;
use crate::powmin::{run_power_min, PowMinParams};
use crate::scenario::{
    build_scenario, db_to_linear, dbm_to_watts, ChannelDump, ConfigFile, Mode, Scenario,
    ScenarioConfig,
};
use crate::sumrate::{run_sum_rate, SumRateParams};
use crate::trace::{Problem, SolveTrace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Which scenario knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// BS power budget, values in dBm.
    BudgetBsDbm,
    /// RIS power budget, values in dBm (keeps the 2 P_R / M supply rule).
    BudgetRisDbm,
    /// Number of surface elements.
    NElements,
    /// Number of reflect-side users.
    NUsersReflect,
    /// Common SINR target, values in dB.
    SinrTargetDb,
}


impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SweepParameter::BudgetBsDbm => "budget_bs_dbm",
            SweepParameter::BudgetRisDbm => "budget_ris_dbm",
            SweepParameter::NElements => "n_elements",
            SweepParameter::NUsersReflect => "n_users_reflect",
            SweepParameter::SinrTargetDb => "sinr_target_db",
        };
        write!(f, "{name}")
    }
}

/// Declarative sweep description (JSON file behind `sweep --spec`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub trials: usize,
    /// Preset name the base config starts from (default `desk`).
    pub base_preset: Option<String>,
    /// Config file layered over the preset (optional).
    pub base_config: Option<PathBuf>,
    pub problem: Problem,
    pub modes: Vec<Mode>,
    pub base_seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> crate::error::Result<()> {
        if self.values.is_empty() {
            return Err(RisError::Config("sweep value list must be non-empty".into()));
        }
        if self.trials < 1 {
            return Err(RisError::Config("sweep needs trials >= 1".into()));
        }
        if self.modes.is_empty() {
            return Err(RisError::Config("sweep needs at least one mode".into()));
        }
        Ok(())
    }
}

/// Aggregated statistics for one (value, mode) sweep cell.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub value: f64,
    pub mode: Mode,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub mean_objective: f64,
    pub std_error: f64,
    pub mean_iterations: f64,
    pub mean_wall_seconds: f64,
}

#[derive(Debug, Clone)]
struct TrialOutcome {
    value: f64,
    mode: Mode,
    trial: usize,
    seed: u64,
    objective: Option<f64>,
    iterations: usize,
    wall_seconds: f64,
    status: &'static str,
}

fn trial_status(err: &RisError) -> &'static str {
    if err.is_infeasible() {
        "infeasible"
    } else {
        "error"
    }
}

/// Aggregate per-trial objectives: mean, standard error, mean iterations.
fn aggregate(value: f64, mode: Mode, outcomes: &[TrialOutcome]) -> AggregateRow {
    let ok: Vec<&TrialOutcome> = outcomes.iter().filter(|t| t.objective.is_some()).collect();
    let n = ok.len();
    let mean = if n > 0 {
        ok.iter().map(|t| t.objective.unwrap()).sum::<f64>() / n as f64
    } else {
        f64::NAN
    };
    let std_error = if n > 1 {
        let var = ok
            .iter()
            .map(|t| {
                let d = t.objective.unwrap() - mean;
                d * d
            })
            .sum::<f64>()
            / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    AggregateRow {
        value,
        mode,
        trials_ok: n,
        trials_failed: outcomes.len() - n,
        mean_objective: mean,
        std_error,
        mean_iterations: if n > 0 {
            ok.iter().map(|t| t.iterations as f64).sum::<f64>() / n as f64
        } else {
            f64::NAN
        },
        mean_wall_seconds: if n > 0 {
            ok.iter().map(|t| t.wall_seconds).sum::<f64>() / n as f64
        } else {
            f64::NAN
        },
    }
}

/// FNV-1a over the canonical JSON of the resolved config.
pub fn config_hash(cfg: &ScenarioConfig) -> u64 {
    let text = serde_json::to_string(cfg).unwrap_or_default();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn load_config(path: Option<&Path>) -> crate::error::Result<ScenarioConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            ConfigFile::parse(&text)?.resolve()
        }
        None => {
            let preset =
                std::env::var("RIS_OPTIM_PRESET").unwrap_or_else(|_| "paper-default".into());
            ScenarioConfig::preset(&preset)
        }
    }
}

fn apply_sweep_value(cfg: &mut ScenarioConfig, parameter: SweepParameter, value: f64) {
    match parameter {
        SweepParameter::BudgetBsDbm => cfg.budget_bs = dbm_to_watts(value),
        SweepParameter::BudgetRisDbm => {
            cfg.budget_ris = dbm_to_watts(value);
            cfg.budget_element = 2.0 * cfg.budget_ris / cfg.n_elements as f64;
        }
        SweepParameter::NElements => {
            cfg.n_elements = value.round() as usize;
            cfg.budget_element = 2.0 * cfg.budget_ris / cfg.n_elements as f64;
        }
        SweepParameter::NUsersReflect => cfg.n_users_reflect = value.round() as usize,
        SweepParameter::SinrTargetDb => {
            cfg.sinr_targets = vec![db_to_linear(value); cfg.n_users];
        }
    }
}

/// One solver invocation (library-level; the CLI and the sweep machinery both
/// route through here).
pub fn run_problem(
    scn: &Scenario,
    problem: Problem,
    mode: Mode,
) -> crate::error::Result<(crate::model::RisState, crate::model::BeamformerSet, SolveTrace)> {
    match problem {
        Problem::Sumrate => run_sum_rate(scn, &SumRateParams::default(), mode),
        Problem::Powmin => {
            let mut scn_mode = scn.clone();
            scn_mode.config.mode = mode;
            run_power_min(&scn_mode, &scn.config.sinr_targets, &PowMinParams::default())
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    version: &'static str,
    problem: Problem,
    mode: Mode,
    seed: u64,
    config_hash_fnv1a: String,
    converged: bool,
    iterations: usize,
    final_objective: Option<f64>,
    total_seconds: f64,
    config: &'a ScenarioConfig,
}

/// `solve`: one scenario, one problem, full artifact set.
#[allow(clippy::too_many_arguments)]
pub fn cmd_solve(
    config: Option<&Path>,
    problem: Problem,
    mode: Mode,
    seed: Option<u64>,
    out_dir: &Path,
    dump_channels: Option<&Path>,
    load_channels: Option<&Path>,
) -> i32 {
    let result = (|| -> crate::error::Result<bool> {
        let mut cfg = load_config(config)?;
        if let Some(s) = seed {
            cfg.rng_seed = s;
        }
        cfg.mode = mode;
        cfg.validate()?;
        let scn = match load_channels {
            Some(path) => {
                let dump: ChannelDump = serde_json::from_str(&fs::read_to_string(path)?)?;
                Scenario::from_dump(&dump)?
            }
            None => build_scenario(&cfg)?,
        };
        if let Some(path) = dump_channels {
            fs::write(path, serde_json::to_string(&scn.to_dump())?)?;
        }

        let (ris, w, trace) = run_problem(&scn, problem, mode)?;

        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("trace.csv"), trace.to_csv())?;
        fs::write(out_dir.join("trace.json"), trace.to_json()?)?;
        fs::write(
            out_dir.join("final_state.json"),
            serde_json::to_string_pretty(&StateDump::new(&ris, &w))?,
        )?;
        let report = crate::model::check_constraints(&scn, &ris, &w, &cfg.sinr_targets);
        fs::write(out_dir.join("constraints.json"), serde_json::to_string_pretty(&report)?)?;
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            problem,
            mode,
            seed: cfg.rng_seed,
            config_hash_fnv1a: format!("{:016x}", config_hash(&cfg)),
            converged: trace.converged,
            iterations: trace.n_iterations(),
            final_objective: trace.final_objective(),
            total_seconds: trace.total_seconds,
            config: &cfg,
        };
        fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(trace.converged)
    })();

    match result {
        Ok(converged) => {
            if !converged {
                eprintln!(
                    "note: iteration cap reached before the convergence tolerance; see manifest.json"
                );
            }
            EXIT_OK
        }
        Err(e) => report_error(e),
    }
}

fn report_error(e: RisError) -> i32 {
    eprintln!("error: {e}");
    match &e {
        RisError::Config(_) | RisError::Dimension(_) | RisError::Io(_) | RisError::Json(_) => {
            EXIT_USAGE
        }
        RisError::Infeasible(_) => EXIT_INFEASIBLE,
        RisError::InfeasibleDesign { report, .. } => {
            if let Ok(text) = serde_json::to_string_pretty(report) {
                eprintln!("constraint report at the failing state:\n{text}");
            }
            EXIT_INFEASIBLE
        }
        RisError::Numerical(_) => EXIT_NUMERICAL,
    }
}

/// `sweep`: Monte-Carlo trials over a swept parameter, aggregated per
/// (value, mode). Trial `i` always uses seed `base_seed + i`, so results are
/// independent of the scheduling order and of `jobs`.
pub fn cmd_sweep(spec_path: &Path, out_dir: &Path, jobs: usize, trials_override: Option<usize>) -> i32 {
    let result = (|| -> crate::error::Result<()> {
        let mut spec: SweepSpec = serde_json::from_str(&fs::read_to_string(spec_path)?)?;
        if let Some(t) = trials_override {
            spec.trials = t;
        }
        spec.validate()?;
        let base = match &spec.base_config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                ConfigFile::parse(&text)?.resolve()?
            }
            None => ScenarioConfig::preset(spec.base_preset.as_deref().unwrap_or("desk"))?,
        };

        // Task list with fixed (value, mode, trial) indexing.
        struct Task {
            value: f64,
            mode: Mode,
            trial: usize,
            cfg: ScenarioConfig,
        }
        let mut tasks = Vec::new();
        for &value in &spec.values {
            for &mode in &spec.modes {
                for trial in 0..spec.trials {
                    let mut cfg = base.clone();
                    apply_sweep_value(&mut cfg, spec.parameter, value);
                    cfg.rng_seed = spec.base_seed + trial as u64;
                    cfg.mode = mode;
                    tasks.push(Task { value, mode, trial, cfg });
                }
            }
        }

        let run_task = |task: &Task| -> TrialOutcome {
            let mut outcome = TrialOutcome {
                value: task.value,
                mode: task.mode,
                trial: task.trial,
                seed: task.cfg.rng_seed,
                objective: None,
                iterations: 0,
                wall_seconds: 0.0,
                status: "ok",
            };
            let solved = task
                .cfg
                .validate()
                .and_then(|_| build_scenario(&task.cfg))
                .and_then(|scn| run_problem(&scn, spec.problem, task.mode));
            match solved {
                Ok((_, _, trace)) => {
                    outcome.objective = trace.final_objective();
                    outcome.iterations = trace.n_iterations();
                    outcome.wall_seconds = trace.total_seconds;
                }
                Err(e) => outcome.status = trial_status(&e),
            }
            outcome
        };

        let outcomes: Vec<TrialOutcome> = if jobs > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| RisError::Numerical(format!("worker pool: {e}")))?;
            pool.install(|| tasks.par_iter().map(run_task).collect())
        } else {
            tasks.iter().map(run_task).collect()
        };

        fs::create_dir_all(out_dir)?;
        let objective_unit = match spec.problem {
            Problem::Sumrate => "mean_sum_rate_bits_per_s_per_hz",
            Problem::Powmin => "mean_total_power_watts",
        };

        let trial_unit = match spec.problem {
            Problem::Sumrate => "objective_bits_per_s_per_hz",
            Problem::Powmin => "objective_watts",
        };
        let mut trials_csv =
            format!("parameter,value,mode,trial,seed,{trial_unit},iterations,status\n");
        for t in &outcomes {
            trials_csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                spec.parameter,
                t.value,
                t.mode,
                t.trial,
                t.seed,
                t.objective.map(|o| format!("{o:.10e}")).unwrap_or_else(|| "nan".into()),
                t.iterations,
                t.status
            ));
        }
        fs::write(out_dir.join("trials.csv"), trials_csv)?;

        let mut agg_csv = format!(
            "parameter,value,mode,trials_ok,trials_failed,{objective_unit},std_error,mean_iterations\n"
        );
        let mut manifest_rows = Vec::new();
        for &value in &spec.values {
            for &mode in &spec.modes {
                let cell: Vec<TrialOutcome> = outcomes
                    .iter()
                    .filter(|t| t.value == value && t.mode == mode)
                    .cloned()
                    .collect();
                let row = aggregate(value, mode, &cell);
                agg_csv.push_str(&format!(
                    "{},{},{},{},{},{:.10e},{:.10e},{:.4}\n",
                    spec.parameter,
                    row.value,
                    row.mode,
                    row.trials_ok,
                    row.trials_failed,
                    row.mean_objective,
                    row.std_error,
                    row.mean_iterations
                ));
                manifest_rows.push(row);
            }
        }
        fs::write(out_dir.join("aggregate.csv"), agg_csv)?;
        // Wall-clock means are not reproducible; they live in the manifest only.
        fs::write(
            out_dir.join("sweep_manifest.json"),
            serde_json::to_string_pretty(&serde_json::json!({
                "version": env!("CARGO_PKG_VERSION"),
                "spec": spec,
                "rows": manifest_rows,
            }))?,
        )?;
        Ok(())
    })();

    match result {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(e),
    }
}

/// `convergence`: per-iteration objective averaged over seeds, one column per
/// mode. Shorter traces are padded with their final value.
pub fn cmd_convergence(
    config: Option<&Path>,
    problem: Problem,
    modes: &[Mode],
    seeds: u64,
    base_seed: u64,
    out_dir: &Path,
) -> i32 {
    let result = (|| -> crate::error::Result<()> {
        if modes.is_empty() || seeds == 0 {
            return Err(RisError::Config("need at least one mode and one seed".into()));
        }
        let base = load_config(config)?;
        let mut per_mode: Vec<Vec<f64>> = Vec::new();
        for &mode in modes {
            let mut traces: Vec<Vec<f64>> = Vec::new();
            for s in 0..seeds {
                let cfg = base.clone().with_seed(base_seed + s);
                let scn = build_scenario(&cfg)?;
                let (_, _, trace) = run_problem(&scn, problem, mode)?;
                traces.push(trace.objectives());
            }
            let max_len = traces.iter().map(Vec::len).max().unwrap_or(0);
            let mut means = Vec::with_capacity(max_len);
            for i in 0..max_len {
                let total: f64 = traces
                    .iter()
                    .map(|t| *t.get(i).unwrap_or_else(|| t.last().expect("non-empty trace")))
                    .sum();
                means.push(total / traces.len() as f64);
            }
            per_mode.push(means);
        }

        fs::create_dir_all(out_dir)?;
        let unit = match problem {
            Problem::Sumrate => "sum_rate_bits_per_s_per_hz",
            Problem::Powmin => "total_power_watts",
        };
        let mut csv = String::from("iteration");
        for mode in modes {
            csv.push_str(&format!(",{mode}_mean_{unit}"));
        }
        csv.push('\n');
        let rows = per_mode.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..rows {
            csv.push_str(&format!("{}", i + 1));
            for col in &per_mode {
                let v = col.get(i).or_else(|| col.last()).copied().unwrap_or(f64::NAN);
                csv.push_str(&format!(",{v:.10e}"));
            }
            csv.push('\n');
        }
        fs::write(out_dir.join("convergence.csv"), csv)?;
        Ok(())
    })();

    match result {
        Ok(()) => EXIT_OK,
        Err(e) => report_error(e),
    }
}

/// `validate-config`: parse, resolve and validate; prints the resolved
/// linear-unit config on success.
pub fn cmd_validate_config(path: &Path) -> i32 {
    match (|| -> crate::error::Result<ScenarioConfig> {
        let text = fs::read_to_string(path)?;
        ConfigFile::parse(&text)?.resolve()
    })() {
        Ok(cfg) => {
            println!("{}", serde_json::to_string_pretty(&cfg).unwrap_or_default());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("invalid config: {e}");
            EXIT_USAGE
        }
    }
}

const USAGE: &str = "ris-optim — joint beamforming and dual-functional active RIS design

USAGE:
  ris-optim solve --problem <sumrate|powmin> [--config PATH] [--mode op|ep|sd]
                  [--seed N] [--dump-channels PATH] [--load-channels PATH] --out DIR
  ris-optim sweep --spec PATH [--jobs N] [--trials N] --out DIR
  ris-optim convergence --problem <sumrate|powmin> [--config PATH]
                  [--modes op,ep,sd] [--seeds N] [--seed BASE] --out DIR
  ris-optim validate-config --config PATH

Without --config, the preset named by RIS_OPTIM_PRESET (default paper-default)
is used. Exit codes: 0 ok, 1 usage, 2 infeasible, 3 numerical failure.";

struct ArgMap {
    flags: std::collections::HashMap<String, String>,
}

impl ArgMap {
    fn parse(args: &[String]) -> Result<Self, String> {
        let mut flags = std::collections::HashMap::new();
        let mut i = 0;
        while i < args.len() {
            let key = &args[i];
            if !key.starts_with("--") {
                return Err(format!("unexpected argument `{key}`"));
            }
            let name = key.trim_start_matches("--").to_string();
            if i + 1 >= args.len() {
                return Err(format!("flag --{name} needs a value"));
            }
            flags.insert(name, args[i + 1].clone());
            i += 2;
        }
        Ok(ArgMap { flags })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.flags.get(name).map(String::as_str)
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.get(name).map(PathBuf::from)
    }

    fn required_path(&self, name: &str) -> Result<PathBuf, String> {
        self.path(name).ok_or_else(|| format!("missing required flag --{name}"))
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let argv: Vec<String> = args.into_iter().collect();
    if argv.is_empty() || argv[0] == "--help" || argv[0] == "-h" || argv[0] == "help" {
        println!("{USAGE}");
        return if argv.is_empty() { EXIT_USAGE } else { EXIT_OK };
    }
    let command = argv[0].as_str();
    let rest = &argv[1..];
    let parsed = match ArgMap::parse(rest) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("usage error: {msg}\n\n{USAGE}");
            return EXIT_USAGE;
        }
    };

    let parse_or_usage = |r: crate::error::Result<i32>| -> i32 {
        match r {
            Ok(code) => code,
            Err(e) => {
                eprintln!("usage error: {e}\n\n{USAGE}");
                EXIT_USAGE
            }
        }
    };

    match command {
        "solve" => parse_or_usage((|| {
            let problem: Problem = parsed
                .get("problem")
                .ok_or_else(|| RisError::Config("missing --problem".into()))?
                .parse()?;
            let mode: Mode = parsed.get("mode").unwrap_or("op").parse()?;
            let seed = match parsed.get("seed") {
                Some(s) => Some(
                    s.parse::<u64>()
                        .map_err(|_| RisError::Config(format!("bad --seed `{s}`")))?,
                ),
                None => None,
            };
            let out = parsed
                .required_path("out")
                .map_err(RisError::Config)?;
            Ok(cmd_solve(
                parsed.path("config").as_deref(),
                problem,
                mode,
                seed,
                &out,
                parsed.path("dump-channels").as_deref(),
                parsed.path("load-channels").as_deref(),
            ))
        })()),
        "sweep" => parse_or_usage((|| {
            let spec = parsed.required_path("spec").map_err(RisError::Config)?;
            let out = parsed.required_path("out").map_err(RisError::Config)?;
            let jobs = match parsed.get("jobs") {
                Some(j) => j
                    .parse::<usize>()
                    .map_err(|_| RisError::Config(format!("bad --jobs `{j}`")))?,
                None => 1,
            };
            let trials = match parsed.get("trials") {
                Some(t) => Some(
                    t.parse::<usize>()
                        .map_err(|_| RisError::Config(format!("bad --trials `{t}`")))?,
                ),
                None => None,
            };
            Ok(cmd_sweep(&spec, &out, jobs, trials))
        })()),
        "convergence" => parse_or_usage((|| {
            let problem: Problem = parsed
                .get("problem")
                .ok_or_else(|| RisError::Config("missing --problem".into()))?
                .parse()?;
            let modes: Vec<Mode> = parsed
                .get("modes")
                .unwrap_or("op")
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<crate::error::Result<_>>()?;
            let seeds = match parsed.get("seeds") {
                Some(s) => s
                    .parse::<u64>()
                    .map_err(|_| RisError::Config(format!("bad --seeds `{s}`")))?,
                None => 10,
            };
            let base_seed = match parsed.get("seed") {
                Some(s) => s
                    .parse::<u64>()
                    .map_err(|_| RisError::Config(format!("bad --seed `{s}`")))?,
                None => 1,
            };
            let out = parsed.required_path("out").map_err(RisError::Config)?;
            Ok(cmd_convergence(
                parsed.path("config").as_deref(),
                problem,
                &modes,
                seeds,
                base_seed,
                &out,
            ))
        })()),
        "validate-config" => parse_or_usage((|| {
            let config = parsed.required_path("config").map_err(RisError::Config)?;
            Ok(cmd_validate_config(&config))
        })()),
        other => {
            eprintln!("unknown subcommand `{other}`\n\n{USAGE}");
            EXIT_USAGE
        }
    }
}
