//! Subcommand bodies. Each returns the JSON envelope and its CSV rendering;
//! nothing is written until the whole run has finished.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;
use serde_json::{json, Value};
use tiltsens::adaptive::GameSolver;
use tiltsens::chibar::chi_bar_weights;
use tiltsens::conventional::ConventionalPrep;
use tiltsens::oracle::{self_check, Check};
use tiltsens::simulation::{
    design_cell, power_curve_with_progress, DesignCell, DesignSensitivity, GenerativeSpec, PowerRow,
};
use tiltsens::tilted::TiltPrep;
use tiltsens::{score, sensitivity_value, statistic_total, Method, SensitivityReport};

use crate::args::{Cli, Command};
use crate::config::{
    alpha_policy, resolve, AnalyzeConfig, ConfigFile, DesignSensConfig, PowerConfig, SenvalConfig, ValidateConfig,
};
use crate::error::{CliError, Result};
use crate::io::{format_f64, load_study};

/// Finished run: the JSON envelope, the CSV table, and an error to report
/// after the output has been written (failed validation).
#[derive(Debug)]
pub struct Outcome {
    pub json: Value,
    pub csv: String,
    pub failure: Option<CliError>,
}

fn envelope<C: Serialize, R: Serialize>(command: &str, config: &C, result: &R) -> Result<Value> {
    Ok(json!({
        "tool": "tiltsens",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "result": result,
    }))
}

/// CSV with the run header as `#` comments.
fn csv_table(json: &Value, header: &str, rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# tiltsens {} {}", json["version"].as_str().unwrap_or(""), json["command"].as_str().unwrap_or(""));
    let _ = writeln!(out, "# config: {}", json["config"]);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn require_input(input: &Option<std::path::PathBuf>, command: &str) -> Result<std::path::PathBuf> {
    input
        .clone()
        .ok_or_else(|| CliError::Usage(format!("{command} needs --input (or `input` in the config file)")))
}

#[derive(Debug, Serialize)]
pub struct AnalyzeRow {
    pub gamma: f64,
    pub method: Method,
    /// Deviate, or `B_Γ` for the adaptive method.
    pub statistic: f64,
    pub pvalue: f64,
    pub reject: bool,
    /// Chi-bar-square critical value (adaptive only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeResult {
    pub n_sets: usize,
    pub n_units: usize,
    pub statistic_total: f64,
    pub rows: Vec<AnalyzeRow>,
}

pub fn analyze(cfg: &AnalyzeConfig) -> Result<Outcome> {
    let path = require_input(&cfg.input, "analyze")?;
    let study = load_study(&path)?;
    let scores = score(&study, cfg.stat)?;
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        match method {
            Method::Conventional => {
                let prep = ConventionalPrep::new(&scores);
                for &gamma in &cfg.gamma.0 {
                    let r = prep.test(gamma, cfg.alpha)?;
                    rows.push(AnalyzeRow {
                        gamma,
                        method,
                        statistic: r.deviate,
                        pvalue: r.pvalue,
                        reject: r.reject,
                        critical: None,
                    });
                }
            }
            Method::Tilted(w) => {
                let prep = TiltPrep::new(&scores);
                prep.check_family(w)?;
                for &gamma in &cfg.gamma.0 {
                    let r = prep.test(gamma, w, cfg.alpha)?;
                    rows.push(AnalyzeRow {
                        gamma,
                        method,
                        statistic: r.deviate,
                        pvalue: r.pvalue,
                        reject: r.reject,
                        critical: None,
                    });
                }
            }
            Method::Adaptive(w) => {
                let solver = GameSolver::new(&scores);
                for &gamma in &cfg.gamma.0 {
                    let s = solver.solve(gamma, w, cfg.alpha)?;
                    rows.push(AnalyzeRow {
                        gamma,
                        method,
                        statistic: s.b,
                        pvalue: chi_bar_weights(s.rho_hat)?.tail(s.b),
                        reject: s.reject,
                        critical: Some(s.critical),
                    });
                }
            }
        }
    }
    let result = AnalyzeResult {
        n_sets: scores.n_sets(),
        n_units: scores.n_units(),
        statistic_total: statistic_total(&scores),
        rows,
    };
    let json = envelope("analyze", cfg, &result)?;
    let table: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                format_f64(r.gamma),
                r.method.to_string(),
                format_f64(r.statistic),
                format_f64(r.pvalue),
                r.reject.to_string(),
                r.critical.map(format_f64).unwrap_or_default(),
            ]
        })
        .collect();
    let csv = csv_table(&json, "gamma,method,statistic,pvalue,reject,critical", &table);
    Ok(Outcome { json, csv, failure: None })
}

pub fn senval(cfg: &SenvalConfig) -> Result<Outcome> {
    let path = require_input(&cfg.input, "senval")?;
    let study = load_study(&path)?;
    let report: SensitivityReport = sensitivity_value(&study, cfg.stat, cfg.method, cfg.alpha, cfg.gamma_max, cfg.tol)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let json = envelope("senval", cfg, &report)?;
    let table: Vec<Vec<String>> = report
        .gamma_grid
        .iter()
        .map(|p| vec![format_f64(p.gamma), format_f64(p.statistic), p.reject.to_string()])
        .collect();
    let mut csv = csv_table(&json, "gamma,statistic,reject", &table);
    csv.insert_str(csv.find("gamma,").unwrap_or(0), &format!("# senval: {}\n", report.senval));
    Ok(Outcome { json, csv, failure: None })
}

/// Report-table rendering: two decimals, sentinels spelled out.
fn round2(d: &DesignSensitivity) -> (String, String) {
    match *d {
        DesignSensitivity::Value { gamma, se } => (format!("{gamma:.2}"), format!("{se:.2}")),
        DesignSensitivity::AtMostOne => ("<=1".into(), String::new()),
        DesignSensitivity::Infinite => ("inf".into(), String::new()),
        DesignSensitivity::AboveMax { gamma_max } => (format!(">{gamma_max}"), String::new()),
    }
}

pub fn design_sens(cfg: &DesignSensConfig, progress: bool) -> Result<Outcome> {
    let total = cfg.family.len() * cfg.controls.len() * cfg.stat.len();
    let mut cells: Vec<DesignCell> = Vec::with_capacity(total);
    for &family in &cfg.family {
        for &stat in &cfg.stat {
            for &controls in &cfg.controls {
                if progress {
                    eprintln!("design-sens: cell {}/{total} ({family}, {stat}, J={controls})", cells.len() + 1);
                }
                let spec = GenerativeSpec {
                    alpha_policy: alpha_policy(cfg.fixed_effect_sd),
                    ..GenerativeSpec::new(family, cfg.ratio, controls, cfg.sets, cfg.seed)
                };
                cells.push(design_cell(&spec, stat)?);
            }
        }
    }
    let json = envelope("design-sens", cfg, &json!({ "cells": cells }))?;
    let table: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let (conv, conv_se) = round2(&c.conventional);
            let (tilt, tilt_se) = round2(&c.tilted);
            vec![
                c.spec.error_family.to_string(),
                c.spec.controls.to_string(),
                c.stat.to_string(),
                conv,
                conv_se,
                tilt,
                tilt_se,
                format!("{:.4}", c.heuristic.value),
            ]
        })
        .collect();
    let csv = csv_table(
        &json,
        "family,controls,stat,conventional,conventional_se,tilted,tilted_se,heuristic",
        &table,
    );
    Ok(Outcome { json, csv, failure: None })
}

pub fn power(cfg: &PowerConfig, progress: bool) -> Result<Outcome> {
    let step = (cfg.reps / 100).max(1);
    let last = AtomicUsize::new(0);
    let report = |done: usize, total: usize| {
        if progress && (done % step == 0 || done == total) && last.fetch_max(done, Ordering::Relaxed) < done {
            eprint!("\rpower: {done}/{total} replicates");
            if done == total {
                eprintln!();
            }
        }
    };
    let table = power_curve_with_progress(&cfg.spec(), cfg.stat, &cfg.methods, cfg.alpha, &cfg.gamma.0, cfg.reps, &report)?;
    let rows: Vec<PowerRow> = table.rows();
    let json = envelope("power", cfg, &json!({ "reps": table.reps, "rows": rows }))?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![format_f64(r.gamma), r.method.to_string(), format_f64(r.rate), format_f64(r.se)])
        .collect();
    let csv = csv_table(&json, "gamma,method,rate,se", &csv_rows);
    Ok(Outcome { json, csv, failure: None })
}

pub fn validate(cfg: &ValidateConfig, progress: bool) -> Result<Outcome> {
    let checks: Vec<Check> = self_check(cfg.seed);
    let failed = checks.iter().filter(|c| !c.passed).count();
    if progress {
        for c in &checks {
            eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    let json = envelope("validate", cfg, &json!({ "passed": failed == 0, "checks": checks }))?;
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![c.name.clone(), c.passed.to_string(), format!("\"{}\"", c.detail.replace('"', "\"\""))])
        .collect();
    let csv = csv_table(&json, "name,passed,detail", &rows);
    let failure = (failed > 0).then(|| CliError::Validation(format!("{failed} of {} oracle checks failed", checks.len())));
    Ok(Outcome { json, csv, failure })
}

/// Resolves the configuration for the chosen subcommand and runs it.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let file = match &cli.global.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let progress = !cli.global.quiet;
    let section = cli.command.name();
    match &cli.command {
        Command::Analyze(a) => analyze(&resolve(&file, section, a)?),
        Command::Senval(a) => senval(&resolve(&file, section, a)?),
        Command::DesignSens(a) => design_sens(&resolve(&file, section, a)?, progress),
        Command::Power(a) => power(&resolve(&file, section, a)?, progress),
        Command::Validate(a) => validate(&resolve(&file, section, a)?, progress),
    }
}
