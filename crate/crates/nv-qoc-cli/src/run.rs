//! Command execution: a parsed config in, deterministic output files out.
//!
//! Every byte written to disk is a pure function of the config and seed, so
//! re-running a command reproduces its outputs exactly. Timing and other
//! run-to-run facts go to stdout instead.

use crate::config::{
    build_cost, build_optimizer, build_pulses, build_sensing, build_state, build_system,
    parse_config, BuiltSensing, Command, OptimizerChoice, ProblemConfig, StateConfig,
};
use crate::error::{CliError, Result};
use crate::table::{fmt_f64, Table};
use nv_qoc::costs::Terminal;
use nv_qoc::crab::{crab_optimize, dcrab_optimize, CrabBasis};
use nv_qoc::grape::grape_optimize;
use nv_qoc::limits::{controllability_rank, qsl_bhattacharyya};
use nv_qoc::propagate::propagate;
use nv_qoc::report::OptimizationReport;
use nv_qoc::sensing::dd_phase;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use toml::Value;

/// What a completed run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Files written, in write order.
    pub files: Vec<PathBuf>,
    /// Human-readable result lines for stdout.
    pub summary: Vec<String>,
}

/// Loads the config, applies the seed override and dispatches the command.
/// No output file is created until the whole configuration has validated.
pub fn execute(
    cmd: Command,
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<RunOutput> {
    let text = fs::read_to_string(config_path).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", config_path.display()))
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = seed_override {
        cfg.seed = Some(s);
    }
    // Materialize the effective seed so the echoed config pins this run down
    // even when the value came from the default.
    let seed = cfg.effective_seed();
    if seed > i64::MAX as u64 {
        return Err(CliError::Config(format!("seed {seed} exceeds {}", i64::MAX)));
    }
    cfg.seed = Some(seed);
    cfg.validate_blocks(cmd)?;
    match cmd {
        Command::Simulate => cmd_simulate(&cfg, out_dir),
        Command::Optimize => cmd_optimize(&cfg, out_dir),
        Command::Sense => cmd_sense(&cfg, out_dir),
        Command::Limits => cmd_limits(&cfg, out_dir),
    }
}

/// Canonical TOML serialization of the effective config, with its SHA-256.
/// Reports embed the table and the hash; re-serializing the embedded table
/// must reproduce the hashed bytes.
fn config_echo(cfg: &ProblemConfig) -> Result<(toml::Table, String)> {
    let text = toml::to_string(cfg)
        .map_err(|e| CliError::Config(format!("config cannot be echoed: {e}")))?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("config echo does not re-parse: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((table, hex))
}

fn write_file(out_dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

fn render_report(root: &toml::Table) -> String {
    // toml's serializer orders nested tables after plain values on its own;
    // Display for Table is the canonical rendering.
    root.to_string()
}

fn cmd_simulate(cfg: &ProblemConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = build_system(cfg.system.as_ref().expect("validated"))?;
    let pulses = build_pulses(
        cfg.pulse.as_ref().expect("validated"),
        sys.h.n_controls(),
        cfg.effective_seed(),
    )?;
    let default_psi0 = StateConfig { basis: Some(0), vector: None };
    let psi0_cfg = cfg
        .simulate
        .as_ref()
        .and_then(|s| s.psi0.as_ref())
        .unwrap_or(&default_psi0);
    let psi0 = build_state(psi0_cfg, sys.h.dim(), "[simulate] psi0")?;

    let traj = propagate(&sys.h, &pulses, &psi0)?;
    let dim = sys.h.dim();
    let mut header: Vec<String> = vec!["t".into()];
    for k in 0..dim {
        header.push(format!("p{k}"));
    }
    for k in 0..dim {
        header.push(format!("re{k}"));
        header.push(format!("im{k}"));
    }
    let mut table = Table::new(&header);
    for (t, psi) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![*t];
        for k in 0..dim {
            row.push(psi[k].norm_sqr());
        }
        for k in 0..dim {
            row.push(psi[k].re);
            row.push(psi[k].im);
        }
        table.push_row(&row);
    }

    let mut files = Vec::new();
    write_file(out_dir, "trajectory.tsv", &table.render(), &mut files)?;
    let p_final: Vec<String> = traj
        .final_state()
        .iter()
        .map(|c| fmt_f64(c.norm_sqr()))
        .collect();
    Ok(RunOutput {
        files,
        summary: vec![format!("final populations: {}", p_final.join(" "))],
    })
}

fn pulse_table(report: &OptimizationReport) -> String {
    let pulses = &report.final_pulses;
    let mut header: Vec<String> = vec!["t".into()];
    for i in 1..=pulses.n_controls() {
        header.push(format!("u{i}"));
    }
    let mut table = Table::new(&header);
    let mids = pulses.grid().midpoints();
    for (k, t) in mids.iter().enumerate() {
        let mut row = vec![*t];
        for amps in pulses.amplitudes() {
            row.push(amps[k]);
        }
        table.push_row(&row);
    }
    table.render()
}

fn cmd_optimize(cfg: &ProblemConfig, out_dir: &Path) -> Result<RunOutput> {
    let seed = cfg.effective_seed();
    let sys = build_system(cfg.system.as_ref().expect("validated"))?;
    let pulse_cfg = cfg.pulse.as_ref().expect("validated");
    let pulses = build_pulses(pulse_cfg, sys.h.n_controls(), seed)?;
    let (spec, mapping) = build_cost(cfg.cost.as_ref().expect("validated"), &sys)?;
    let choice = build_optimizer(cfg.optimizer.as_ref().expect("validated"), mapping, seed)?;

    if matches!(choice, OptimizerChoice::Grape(_)) && matches!(spec.terminal, Terminal::Fisher { .. }) {
        return Err(CliError::Unsupported(
            "gradient unavailable: the fisher cost has no analytic gradient; \
             use optimizer kind crab or dcrab"
                .into(),
        ));
    }
    if !matches!(choice, OptimizerChoice::Grape(_))
        && pulse_cfg.init.as_deref().unwrap_or("zeros") != "zeros"
    {
        return Err(CliError::Config(
            "crab and dcrab expand around the zero pulse; use [pulse] init = \"zeros\"".into(),
        ));
    }

    let report = match choice {
        OptimizerChoice::Grape(opts) => grape_optimize(&sys.h, &pulses, &spec, &opts)?,
        OptimizerChoice::Crab { opts, n_elements, omega_max } => {
            let cutoff = omega_max.unwrap_or_else(|| {
                CrabBasis::default_omega_max(n_elements, pulses.grid().t_final())
            });
            let basis = CrabBasis::sample(n_elements, cutoff, seed)?;
            crab_optimize(&sys.h, pulses.grid(), &spec, &basis, &opts)?
        }
        OptimizerChoice::Dcrab(opts) => dcrab_optimize(&sys.h, pulses.grid(), &spec, &opts)?,
    };

    let (echo, sha) = config_echo(cfg)?;
    let mut root = toml::Table::new();
    root.insert("command".into(), Value::String("optimize".into()));
    root.insert("seed".into(), Value::Integer(seed as i64));
    root.insert("final_cost".into(), Value::Float(report.final_cost));
    root.insert(
        "stop_reason".into(),
        Value::String(report.stop_reason.as_str().into()),
    );
    root.insert("iterations".into(), Value::Integer(report.iterations as i64));
    root.insert("evaluations".into(), Value::Integer(report.evaluations as i64));
    root.insert("pulse_file".into(), Value::String("pulses.tsv".into()));
    root.insert("config_sha256".into(), Value::String(sha));
    root.insert(
        "cost_trace".into(),
        Value::Array(report.cost_trace.iter().map(|&c| Value::Float(c)).collect()),
    );
    root.insert("config".into(), Value::Table(echo));

    let mut files = Vec::new();
    write_file(out_dir, "report.toml", &render_report(&root), &mut files)?;
    write_file(out_dir, "pulses.tsv", &pulse_table(&report), &mut files)?;
    Ok(RunOutput {
        files,
        summary: vec![
            format!("final cost: {}", fmt_f64(report.final_cost)),
            format!("stop reason: {}", report.stop_reason.as_str()),
            format!("evaluations: {}", report.evaluations),
        ],
    })
}

fn cmd_sense(cfg: &ProblemConfig, out_dir: &Path) -> Result<RunOutput> {
    let built: BuiltSensing = build_sensing(cfg.sensing.as_ref().expect("validated"))?;

    let mut phase_table = Table::new(&["tau", "phase"]);
    let mut pop_table = Table::new(&["tau", "p_bright"]);
    for &tau in &built.taus {
        let seq = built.protocol.sequence(tau)?;
        let phi = dd_phase(&seq, &built.signal, built.gamma)?;
        let w = built
            .envelope
            .as_ref()
            .map_or(1.0, |e| e.weight(seq.class(), seq.total_time()));
        let p = 0.5 * (1.0 + built.contrast * w * phi.cos());
        phase_table.push_row(&[tau, phi]);
        pop_table.push_row(&[tau, p]);
    }

    let mut files = Vec::new();
    write_file(out_dir, "phase.tsv", &phase_table.render(), &mut files)?;
    write_file(out_dir, "population.tsv", &pop_table.render(), &mut files)?;

    let mut file_names = vec!["phase.tsv".to_string(), "population.tsv".to_string()];
    if let Some(fc) = &built.filter {
        let seq = built.protocol.sequence(fc.tau)?;
        let step = (fc.omega_max - fc.omega_min) / (fc.n_omega - 1) as f64;
        let omegas: Vec<f64> = (0..fc.n_omega)
            .map(|i| fc.omega_min + i as f64 * step)
            .collect();
        let weights = nv_qoc::sensing::filter_function(&seq, &omegas);
        let mut filter_table = Table::new(&["omega", "weight"]);
        for (w, y) in omegas.iter().zip(&weights) {
            filter_table.push_row(&[*w, *y]);
        }
        write_file(out_dir, "filter.tsv", &filter_table.render(), &mut files)?;
        file_names.push("filter.tsv".to_string());
    }

    let (echo, sha) = config_echo(cfg)?;
    let mut root = toml::Table::new();
    root.insert("command".into(), Value::String("sense".into()));
    root.insert("seed".into(), Value::Integer(cfg.effective_seed() as i64));
    root.insert("n_tau".into(), Value::Integer(built.taus.len() as i64));
    root.insert("config_sha256".into(), Value::String(sha));
    root.insert(
        "files".into(),
        Value::Array(file_names.into_iter().map(Value::String).collect()),
    );
    root.insert("config".into(), Value::Table(echo));
    write_file(out_dir, "report.toml", &render_report(&root), &mut files)?;

    Ok(RunOutput {
        files,
        summary: vec![format!("swept {} tau values", built.taus.len())],
    })
}

fn cmd_limits(cfg: &ProblemConfig, out_dir: &Path) -> Result<RunOutput> {
    let sys = build_system(cfg.system.as_ref().expect("validated"))?;
    let default_limits = crate::config::LimitsConfig {
        psi0: None,
        psit: None,
        amplitudes: None,
        controllability: None,
    };
    let lc = cfg.limits.as_ref().unwrap_or(&default_limits);

    let n_controls = sys.h.n_controls();
    let zeros = vec![0.0; n_controls];
    let amps = lc.amplitudes.as_deref().unwrap_or(&zeros);
    if amps.len() != n_controls {
        return Err(CliError::Config(format!(
            "[limits] amplitudes has {} entries, expected one per control ({n_controls})",
            amps.len()
        )));
    }

    let mut summary = Vec::new();
    let mut root = toml::Table::new();
    root.insert("command".into(), Value::String("limits".into()));
    root.insert("seed".into(), Value::Integer(cfg.effective_seed() as i64));

    let qsl = match (&lc.psi0, &lc.psit) {
        (Some(a), Some(b)) => {
            let dim = sys.h.dim();
            let psi0 = build_state(a, dim, "[limits] psi0")?;
            let psit = build_state(b, dim, "[limits] psit")?;
            let h_const = sys.h.total(amps);
            Some(qsl_bhattacharyya(&h_const, &psi0, &psit)?)
        }
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "[limits] speed limit needs both `psi0` and `psit`".into(),
            ));
        }
    };
    if let Some(q) = &qsl {
        let mut tbl = toml::Table::new();
        tbl.insert("delta_e".into(), Value::Float(q.delta_e));
        tbl.insert("angle".into(), Value::Float(q.angle));
        tbl.insert("infinite".into(), Value::Boolean(q.infinite));
        if q.infinite {
            summary.push("t_qsl = infinite".to_string());
        } else {
            tbl.insert("t_qsl".into(), Value::Float(q.t_qsl));
            summary.push(format!("t_qsl = {}", fmt_f64(q.t_qsl)));
        }
        root.insert("qsl".into(), Value::Table(tbl));
    }

    if lc.controllability.unwrap_or(true) {
        let report = controllability_rank(sys.h.drift(), sys.h.controls())?;
        let mut tbl = toml::Table::new();
        tbl.insert("lie_dim".into(), Value::Integer(report.lie_dim as i64));
        tbl.insert("full_dim".into(), Value::Integer(report.full_dim as i64));
        tbl.insert("controllable".into(), Value::Boolean(report.controllable));
        summary.push(format!(
            "lie_dim = {} of {}, controllable = {}",
            report.lie_dim, report.full_dim, report.controllable
        ));
        root.insert("controllability".into(), Value::Table(tbl));
    }

    let (echo, sha) = config_echo(cfg)?;
    root.insert("config_sha256".into(), Value::String(sha));
    root.insert("config".into(), Value::Table(echo));

    let mut files = Vec::new();
    write_file(out_dir, "limits.toml", &render_report(&root), &mut files)?;
    Ok(RunOutput { files, summary })
}
