//! One function per experiment: library calls in, rows and a summary out.

use crate::config::{BasisName, Experiment, ExperimentConfig, SideName, TieBreakName};
use crate::error::{config_err, numerical, CliError};
use crate::output::{num, RunResult};
use catmap::classical::HyperbolicMap;
use catmap::fup::{
    cantor_set, cell_for_map, dft_localization_norm, fit_beta, max_porosity, porosity_check, scale_grid,
    support_projection, IntervalSet, PorosityQuery, RasterSpec, Side,
};
use catmap::hilbert::{HilbertSpec, StateVector};
use catmap::observables::{
    deloc_scan, eigen_window_masses, husimi_grid, qe_variance, window_mass, BasisMode, WignerData,
};
use catmap::propagator::{build_cat_matrix, egorov_defect_power, eigendecompose_with, ModeEgorovSweep, TieBreak};
use catmap::quantize::{PartitionPair, TorusSymbol};
use catmap::stats::{loglog_fit, mann_kendall, median};
use catmap::words::{class_norm_scan, classify_words, Word, WordSchedule, BLOCKS};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::f64::consts::PI;

pub fn run(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    match cfg.experiment() {
        Experiment::Spectrum => spectrum(cfg),
        Experiment::Deloc => deloc(cfg),
        Experiment::Wigner => wigner(cfg),
        Experiment::Egorov => egorov(cfg),
        Experiment::Words => words(cfg),
        Experiment::Fup => fup(cfg),
        Experiment::Porosity => porosity(cfg),
        Experiment::Qe => qe(cfg),
    }
}

fn spec(n: usize) -> Result<HilbertSpec, CliError> {
    HilbertSpec::new(n).map_err(|e| config_err(e.to_string()))
}

fn tie_break(cfg: &ExperimentConfig) -> TieBreak {
    match cfg.tie_break {
        TieBreakName::Window => TieBreak::WindowMass { alpha1: cfg.window[0], alpha2: cfg.window[1] },
        TieBreakName::Solver => TieBreak::Solver,
    }
}

fn map_and_ns(cfg: &ExperimentConfig) -> Result<(HyperbolicMap, Vec<usize>), CliError> {
    let map = cfg.hyperbolic_map()?;
    let ns = cfg.n_values(&map)?;
    Ok((map, ns))
}

fn opt(x: Option<f64>) -> Value {
    x.filter(|v| v.is_finite()).map_or(Value::Null, |v| json!(v))
}

fn spectrum(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let (map, ns) = map_and_ns(cfg)?;
    let per_n = ns
        .par_iter()
        .map(|&n| -> Result<_, CliError> {
            let q = build_cat_matrix(&map, spec(n)?).map_err(numerical)?;
            let s = eigendecompose_with(&q, tie_break(cfg)).map_err(numerical)?;
            let masses = eigen_window_masses(&s, cfg.window[0], cfg.window[1]).map_err(numerical)?;
            let rows: Vec<Vec<String>> = s
                .eigenvalues
                .iter()
                .zip(&masses)
                .enumerate()
                .map(|(j, (z, m))| vec![n.to_string(), j.to_string(), num(z.arg().rem_euclid(2.0 * PI)), num(z.re), num(z.im), num(*m)])
                .collect();
            let stats = json!({
                "n": n,
                "max_degeneracy": s.max_degeneracy(),
                "clusters": s.clusters.len(),
                "gram_residual": s.gram_residual(),
                "reconstruction_residual": s.reconstruction_residual(&q.matrix),
                "max_modulus_defect": s.max_modulus_defect(),
            });
            Ok((rows, stats))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let worst = per_n.iter().map(|(_, s)| s["reconstruction_residual"].as_f64().unwrap_or(f64::NAN)).fold(0.0, f64::max);
    let stats: Vec<Value> = per_n.iter().map(|(_, s)| s.clone()).collect();
    Ok(RunResult {
        headers: vec!["n", "index", "angle", "re", "im", "window_mass"],
        rows: per_n.into_iter().flat_map(|(r, _)| r).collect(),
        headline: format!("spectrum: {} values of N, max reconstruction residual {worst:.3e}", stats.len()),
        summary: json!({ "per_n": stats, "max_reconstruction_residual": worst }),
        extra: Vec::new(),
    })
}

fn probe_symbol(cfg: &ExperimentConfig) -> Result<Option<TorusSymbol>, CliError> {
    cfg.probe
        .map(|[cx, cy, r0, r1]| TorusSymbol::radial_bump([cx, cy], r0, r1, 48).map_err(|e| config_err(format!("probe: {e}"))))
        .transpose()
}

fn deloc(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let (map, ns) = map_and_ns(cfg)?;
    let mode = match cfg.basis {
        BasisName::Deterministic => BasisMode::Deterministic,
        BasisName::Randomized => BasisMode::Randomized { seed: cfg.seed, rotations: cfg.rotations },
    };
    let probe = probe_symbol(cfg)?;
    let rows = deloc_scan(&map, (cfg.window[0], cfg.window[1]), &ns, mode, probe.as_ref()).map_err(numerical)?;
    let masses: Vec<f64> = rows.iter().map(|r| r.min_mass).collect();
    let (gmin, at) = rows.iter().map(|r| (r.min_mass, r.n)).fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
    let mk = (rows.len() >= 3).then(|| mann_kendall(&masses));
    let c1: Vec<f64> = rows.iter().filter_map(|r| r.c1_proxy).collect();
    let c1_summary = median(&c1).map(|med| {
        let max = c1.iter().copied().fold(0.0, f64::max);
        json!({ "max": max, "median": med, "ratio": max / med })
    });
    Ok(RunResult {
        headers: vec!["n", "min_mass", "c1_proxy", "max_degeneracy"],
        rows: rows
            .iter()
            .map(|r| vec![r.n.to_string(), num(r.min_mass), r.c1_proxy.map_or(String::new(), num), r.max_degeneracy.to_string()])
            .collect(),
        headline: format!("deloc: minimum window mass {gmin:.6} at N = {at}"),
        summary: json!({
            "window": cfg.window,
            "min_mass": gmin,
            "argmin_n": at,
            "positive": gmin > 0.0,
            "mann_kendall": mk.map(|m| json!({ "s": m.s, "z": m.z, "p_decreasing": m.p_decreasing, "significant_decrease": m.significant_decrease(0.05) })),
            "c1_proxy": c1_summary,
        }),
        extra: Vec::new(),
    })
}

fn parse_index(s: &str, prefix: &str) -> Option<usize> {
    s.strip_prefix(prefix).and_then(|v| v.parse().ok())
}

fn wigner(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let (map, ns) = map_and_ns(cfg)?;
    let [n] = ns[..] else {
        return Err(config_err("wigner takes a single N"));
    };
    let sp = spec(n)?;
    let state = if cfg.state == "uniform" {
        StateVector::uniform(sp)
    } else if let Some(j) = parse_index(&cfg.state, "position:") {
        StateVector::position_state(sp, j)
    } else if let Some(j) = parse_index(&cfg.state, "eigen:") {
        if j >= n {
            return Err(config_err(format!("eigenvector index {j} is out of range for N = {n}")));
        }
        let q = build_cat_matrix(&map, sp).map_err(numerical)?;
        eigendecompose_with(&q, tie_break(cfg)).map_err(numerical)?.state(j)
    } else {
        return Err(config_err(format!("state '{}' is not eigen:J, position:J or uniform", cfg.state)));
    };
    let table = WignerData::compute(&state, cfg.l_max);
    let rows = table.coefficients.iter().map(|(l, v)| vec![l[0].to_string(), l[1].to_string(), num(v.re), num(v.im)]).collect();
    let mass = window_mass(&state, cfg.window[0], cfg.window[1]).map_err(numerical)?;
    let mut extra = Vec::new();
    let mut husimi_mass = None;
    if let Some(res) = cfg.husimi {
        let g = husimi_grid(&state, res).map_err(|e| config_err(e.to_string()))?;
        husimi_mass = Some(g.mass());
        let pgm = g.to_pgm();
        // a comment line after the magic number carries the hash
        let mut bytes = b"P5\n".to_vec();
        bytes.extend(format!("# config_hash {}\n", cfg.hash()).into_bytes());
        bytes.extend_from_slice(&pgm[3..]);
        extra.push(("husimi.pgm".to_string(), bytes));
    }
    Ok(RunResult {
        headers: vec!["l1", "l2", "re", "im"],
        rows,
        headline: format!("wigner: N = {n}, state {}, hermitian defect {:.2e}", cfg.state, table.hermitian_defect()),
        summary: json!({
            "n": n,
            "state": cfg.state,
            "l_max": cfg.l_max,
            "hermitian_defect": table.hermitian_defect(),
            "window_mass": mass,
            "husimi_mass": opt(husimi_mass),
        }),
        extra,
    })
}

fn egorov(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let (map, ns) = map_and_ns(cfg)?;
    if cfg.max_power == 0 || cfg.mode_max < 0 {
        return Err(config_err("egorov needs max_power >= 1 and mode_max >= 0"));
    }
    let m = cfg.mode_max;
    let per_n = ns
        .par_iter()
        .map(|&n| -> Result<Vec<(usize, u32, f64, [i64; 2], f64)>, CliError> {
            let q = build_cat_matrix(&map, spec(n)?).map_err(numerical)?;
            (1..=cfg.max_power)
                .map(|p| {
                    let sweep = ModeEgorovSweep::new(&q, p).map_err(numerical)?;
                    let mut worst = (0.0, [0i64, 0]);
                    for l1 in -m..=m {
                        for l2 in -m..=m {
                            let d = sweep.defect_bound([l1, l2]);
                            if d > worst.0 {
                                worst = (d, [l1, l2]);
                            }
                        }
                    }
                    let dense = egorov_defect_power(&q, &TorusSymbol::mode(worst.1), p).map_err(numerical)?;
                    Ok((n, p, worst.0, worst.1, dense))
                })
                .collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let all: Vec<_> = per_n.into_iter().flatten().collect();
    let max = all.iter().map(|r| r.2.max(r.4)).fold(0.0, f64::max);
    let pass = all.iter().all(|r| r.2.max(r.4) <= r.1 as f64 * 1e-8);
    Ok(RunResult {
        headers: vec!["n", "power", "max_defect_bound", "worst_l1", "worst_l2", "worst_mode_defect"],
        rows: all
            .iter()
            .map(|(n, p, d, l, dense)| vec![n.to_string(), p.to_string(), num(*d), l[0].to_string(), l[1].to_string(), num(*dense)])
            .collect(),
        headline: format!("egorov: max defect {max:.3e} over modes |l| <= {m}, powers <= {} ({})", cfg.max_power, if pass { "within n·1e-8" } else { "EXCEEDS n·1e-8" }),
        summary: json!({ "max_defect": max, "mode_max": m, "max_power": cfg.max_power, "within_tolerance": pass }),
        extra: Vec::new(),
    })
}

fn words(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let (map, ns) = map_and_ns(cfg)?;
    let schedule = WordSchedule::new(cfg.t, cfg.rho, cfg.delta).map_err(|e| config_err(e.to_string()))?;
    let cls = classify_words(&schedule).map_err(|e| config_err(e.to_string()))?;
    let scan = class_norm_scan(&PartitionPair::standard(), &map, &schedule, &ns, cfg.random_x, cfg.seed).map_err(numerical)?;
    let all2 = Word::constant(2, BLOCKS as usize * cfg.t).to_string();
    let mut rows = Vec::new();
    for r in &scan.rows {
        rows.push(vec![r.n.to_string(), all2.clone(), "all2".into(), num(r.all2_norm)]);
        rows.push(vec![r.n.to_string(), "Z".into(), "z_sum".into(), num(r.z_norm)]);
        rows.push(vec![r.n.to_string(), "Z".into(), "z_bound".into(), num(r.z_bound)]);
        for (w, v) in &r.random_x {
            rows.push(vec![r.n.to_string(), w.clone(), "x_sample".into(), num(*v)]);
        }
    }
    Ok(RunResult {
        headers: vec!["n", "word_id", "kind", "norm"],
        rows,
        headline: format!("words: all-2 decay exponent {:?}, R² {:?}", scan.beta_hat, scan.r_squared),
        summary: json!({
            "t": cfg.t,
            "delta": cfg.delta,
            "z_count": cls.z.len(),
            "x_count_log2": cls.x_count_log2(),
            "beta_hat": opt(scan.beta_hat),
            "r_squared": opt(scan.r_squared),
            "delta_for_beta": opt(scan.delta_for_beta),
            "max_all2_norm": scan.rows.iter().map(|r| r.all2_norm).fold(0.0, f64::max),
        }),
        extra: Vec::new(),
    })
}

/// `cantor:BASE:DIGITS[:LEVEL]`.
fn parse_family(s: &str) -> Result<(usize, Vec<usize>, Option<u32>), CliError> {
    let bad = || config_err(format!("family '{s}' is not cantor:BASE:DIGITS[:LEVEL]"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() < 3 || parts.len() > 4 || parts[0] != "cantor" {
        return Err(bad());
    }
    let base: usize = parts[1].parse().map_err(|_| bad())?;
    let digits = parts[2].chars().map(|c| c.to_digit(36).map(|d| d as usize).ok_or_else(bad)).collect::<Result<Vec<_>, _>>()?;
    let level = parts.get(3).map(|l| l.parse::<u32>().map_err(|_| bad())).transpose()?;
    Ok((base, digits, level))
}

fn fup(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let family = cfg.family.as_deref().unwrap_or("cantor:3:02");
    let (base, digits, level) = parse_family(family)?;
    let levels: Vec<u32> = match level {
        Some(k) => vec![k],
        None => crate::config::parse_n_list(&cfg.levels)?.into_iter().map(|k| k as u32).collect(),
    };
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for k in levels {
        let c = cantor_set(base, &digits, k).map_err(|e| config_err(e.to_string()))?;
        let n = c.modulus();
        if n > 20_000 {
            return Err(config_err(format!("N = {n} is too large for a dense DFT block")));
        }
        let norm = dft_localization_norm(&c.residues, &c.residues, n, None).map_err(numerical)?;
        let smooth = cfg.smooth.map(|s| dft_localization_norm(&c.residues, &c.residues, n, Some(s))).transpose().map_err(numerical)?;
        rows.push(vec![n.to_string(), c.residues.len().to_string(), c.residues.len().to_string(), num(norm), smooth.map_or(String::new(), num)]);
        points.push((n, norm));
    }
    let fit = fit_beta(&points).ok();
    Ok(RunResult {
        headers: vec!["n", "x_size", "y_size", "norm", "smooth_norm"],
        rows,
        headline: format!("fup: {family}, β̂ = {:?}", fit.as_ref().map(|f| f.beta_hat)),
        summary: json!({
            "family": family,
            "beta_hat": opt(fit.as_ref().map(|f| f.beta_hat)),
            "r_squared": opt(fit.as_ref().map(|f| f.r_squared)),
            "points": points.len(),
        }),
        extra: Vec::new(),
    })
}

fn porosity(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let sources = [cfg.set_file.is_some(), cfg.family.is_some(), cfg.word.is_some()].iter().filter(|b| **b).count();
    if sources != 1 {
        return Err(config_err("porosity needs exactly one of set_file, family or word"));
    }
    let mut source = Value::Null;
    let omega = if let Some(path) = &cfg.set_file {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {path}: {e}")))?;
        IntervalSet::from_json(&text).map_err(|e| config_err(e.to_string()))?
    } else if let Some(f) = &cfg.family {
        let (base, digits, level) = parse_family(f)?;
        let level = level.ok_or_else(|| config_err("porosity needs a family with a level, e.g. cantor:3:02:6"))?;
        cantor_set(base, &digits, level).map_err(|e| config_err(e.to_string()))?.intervals
    } else {
        let w = Word::parse(cfg.word.as_deref().unwrap()).map_err(|e| config_err(e.to_string()))?;
        let map = cfg.hyperbolic_map()?;
        let cutoff = cell_for_map(&map, cfg.kappa, 16).map_err(|e| config_err(e.to_string()))?;
        let side = match cfg.side {
            SideName::Plus => Side::Plus,
            SideName::Minus => Side::Minus,
        };
        let raster = RasterSpec { resolution: cfg.resolution, threshold: cfg.threshold };
        source = json!({ "word": w.to_string(), "side": cfg.side, "resolution": cfg.resolution, "threshold": cfg.threshold });
        support_projection(&PartitionPair::standard(), &map, &cutoff, &w, side, raster)
    };
    let query = PorosityQuery::new(cfg.nu, cfg.tau0, cfg.tau1).map_err(|e| config_err(e.to_string()))?;
    let report = porosity_check(&omega, &query).map_err(numerical)?;
    let best = max_porosity(&omega, cfg.tau0, cfg.tau1).map_err(numerical)?;
    let rows = scale_grid(cfg.tau0, cfg.tau1)
        .into_iter()
        .map(|len| {
            let (g, x) = omega.min_gap(len);
            vec![num(len), num(g), num(g / len), num(x)]
        })
        .collect();
    Ok(RunResult {
        headers: vec!["scale", "min_gap", "gap_ratio", "window_start"],
        rows,
        headline: format!("porosity: porous at ν = {} on [{}, {}]: {}; max ν = {best}", cfg.nu, cfg.tau0, cfg.tau1, report.porous),
        summary: json!({
            "nu": cfg.nu,
            "tau0": cfg.tau0,
            "tau1": cfg.tau1,
            "porous": report.porous,
            "witness": report.witness,
            "certified_nu": report.certified_nu,
            "scales_checked": report.scales_checked,
            "max_porosity": best,
            "intervals": omega.len(),
            "measure": omega.measure(),
            "source": source,
        }),
        extra: Vec::new(),
    })
}

fn qe(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let (map, ns) = map_and_ns(cfg)?;
    let a = match cfg.symbol.as_str() {
        "cos-y" => TorusSymbol::cosine(1, 0),
        "cos-eta" => TorusSymbol::cosine(0, 1),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("symbol '{path}': {e}")))?;
            TorusSymbol::from_json(&text).map_err(|e| config_err(e.to_string()))?
        }
    };
    let vars = ns
        .par_iter()
        .map(|&n| qe_variance(&map, &a, spec(n)?).map_err(numerical))
        .collect::<Result<Vec<f64>, _>>()?;
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let fit = loglog_fit(&x, &vars);
    Ok(RunResult {
        headers: vec!["n", "variance"],
        rows: ns.iter().zip(&vars).map(|(n, v)| vec![n.to_string(), num(*v)]).collect(),
        headline: format!("qe: log-log slope {:?}", fit.map(|f| f.slope)),
        summary: json!({
            "symbol": cfg.symbol,
            "slope": opt(fit.map(|f| f.slope)),
            "r_squared": opt(fit.map(|f| f.r_squared)),
            "first": vars.first(),
            "last": vars.last(),
        }),
        extra: Vec::new(),
    })
}
