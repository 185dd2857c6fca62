use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use vnlab::attention::{
    kernel_convergence, self_attention, unnorm_score, AttnWeights, FeatureMap,
};
use vnlab::constructions::{
    compile_deep_vn, compile_performer_vn, run_and_report, DeepSimConfig, Gatv2Selection,
    MlpModeConfig, PerformerSimConfig, Reference, Selection, SimMode, TrialRow,
};
use vnlab::deepsets::{compile_linear, compile_network, eval_linear, DeepSetsNet, EquivariantLinear};
use vnlab::graphs::{calendar_days, window_count, WindowSpec};
use vnlab::mlp::Activation;
use vnlab::mpnnvn::{run_program_traced, star};
use vnlab::numkit::{uniform_ball_rows, Matrix, Rng};
use vnlab::separability::{
    amplification_for, hull_member, random_certified_instance, selection_bound,
    strict_separation, three_cluster_instance, train_gatv2_selector, vdelta_certificate,
    CertificateOutcome, SelectorConfig,
};

use crate::config::Config;
use crate::report::Report;
use crate::CliError;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

fn activation(name: &str) -> Result<Activation, CliError> {
    match name {
        "relu" => Ok(Activation::Relu),
        "leaky_relu" => Ok(Activation::LeakyRelu { slope: 0.2 }),
        "elu" => Ok(Activation::Elu),
        "identity" => Ok(Activation::Identity),
        other => Err(CliError::Usage(format!(
            "unknown activation '{other}' (relu, leaky_relu, elu, identity)"
        ))),
    }
}

// verify-deepsets

pub const DEEPSETS_DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("cases", "50"),
    ("n_max", "16"),
    ("d_max", "8"),
    ("tolerance", "1e-12"),
    ("activation", "relu"),
    ("fault", "none"),
];

#[derive(Serialize)]
struct DeepSetsRow {
    case: usize,
    n: usize,
    d_in: usize,
    d_out: usize,
    linear_err: f64,
    network_err: f64,
    passed: bool,
}

pub fn verify_deepsets(cfg: &Config) -> Result<Report, CliError> {
    let seed: u64 = cfg.get("seed")?;
    let cases: usize = cfg.get("cases")?;
    let n_max: usize = cfg.get("n_max")?;
    let d_max: usize = cfg.get("d_max")?;
    let tol: f64 = cfg.get("tolerance")?;
    let act = activation(&cfg.get::<String>("activation")?)?;
    let fault: String = cfg.get("fault")?;
    let perturb = match fault.as_str() {
        "none" => 0.0,
        "perturb-b" => 1e-6,
        other => return Err(CliError::Usage(format!("unknown fault '{other}' (none, perturb-b)"))),
    };
    if n_max == 0 || d_max == 0 {
        return Err(CliError::Usage("n_max and d_max must be positive".into()));
    }

    let rows = (0..cases)
        .into_par_iter()
        .map(|case| -> Result<DeepSetsRow, CliError> {
            let mut rng = Rng::derive(seed, case as u64);
            let n = 1 + rng.below(n_max);
            let d_in = 1 + rng.below(d_max);
            let d_out = 1 + rng.below(d_max);
            let x = Matrix::from_fn(n, d_in, |_, _| rng.normal());
            let layer = EquivariantLinear::random(d_in, d_out, &mut rng)?;
            let faulty = |l: &EquivariantLinear| -> EquivariantLinear {
                let mut l = l.clone();
                l.b = l.b.map(|v| v + perturb);
                l
            };
            let got = compile_linear(&faulty(&layer), n)?.apply_vn(&x)?;
            let linear_err = got.max_abs_diff(&eval_linear(&x, &layer)?);

            let net = DeepSetsNet::random(&[d_in, d_out, d_in], act, &mut rng)?;
            let mut layers = net.layers().to_vec();
            layers[0] = faulty(&layers[0]);
            let compiled = DeepSetsNet::new(layers, act)?;
            let got = compile_network(&compiled, n)?.apply_vn(&x)?;
            let network_err = got.max_abs_diff(&net.eval(&x)?);
            Ok(DeepSetsRow {
                case,
                n,
                d_in,
                d_out,
                linear_err,
                network_err,
                passed: linear_err <= tol && network_err <= tol,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut report = Report::new("verify-deepsets", cfg.echo());
    let worst = rows
        .iter()
        .map(|r| r.linear_err.max(r.network_err))
        .fold(0.0, f64::max);
    report.line(format!("{} cases, max abs error {worst:.3e} (tolerance {tol:e})", rows.len()));
    for r in rows.iter().filter(|r| !r.passed) {
        report.fail(format!(
            "case {} (n={}, d_in={}, d_out={}): linear {:.3e}, network {:.3e}",
            r.case, r.n, r.d_in, r.d_out, r.linear_err, r.network_err
        ));
    }
    report.summary = json!({"cases": rows.len(), "max_abs_error": worst});
    report.cases = rows.iter().map(|r| serde_json::to_value(r).unwrap()).collect();
    report.table("", &rows)?;
    Ok(report)
}

// verify-performer

pub const PERFORMER_DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("cases", "100"),
    ("n_max", "64"),
    ("d_max", "8"),
    ("m_max", "128"),
    ("feature_map", "performer"),
    ("tolerance", "1e-12"),
    ("sweep", "true"),
    ("sweep_features", "64,256,1024,4096"),
    ("sweep_pairs", "100"),
    ("sweep_seeds", "20"),
    ("sweep_dim", "3"),
    ("mlp", "false"),
    ("mlp_trials", "10"),
    ("mlp_tolerance", "1e-2"),
    ("mlp_nodes", "4"),
    ("mlp_features", "4"),
    ("mlp_seed", "2024"),
];

pub fn verify_performer(cfg: &Config) -> Result<Report, CliError> {
    let seed: u64 = cfg.get("seed")?;
    let cases: usize = cfg.get("cases")?;
    let n_max: usize = cfg.get("n_max")?;
    let d_max: usize = cfg.get("d_max")?;
    let m_max: usize = cfg.get("m_max")?;
    let tol: f64 = cfg.get("tolerance")?;
    let kind: String = cfg.get("feature_map")?;
    if !matches!(kind.as_str(), "performer" | "linear") {
        return Err(CliError::Usage(format!("unknown feature_map '{kind}' (performer, linear)")));
    }
    if n_max == 0 || d_max == 0 || m_max == 0 {
        return Err(CliError::Usage("n_max, d_max and m_max must be positive".into()));
    }
    let mut report = Report::new("verify-performer", cfg.echo());

    let rows = (0..cases)
        .into_par_iter()
        .map(|case| -> Result<TrialRow, CliError> {
            let mut rng = Rng::derive(seed, case as u64);
            let n = if case == 0 { 1 } else { 1 + rng.below(n_max) };
            let d = 1 + rng.below(d_max);
            let m = 1 + rng.below(m_max);
            let x = uniform_ball_rows(n, d, 1.0, &mut rng);
            let w = AttnWeights::random(d, d, 0.9, &mut rng)?;
            let (fm, reference) = if kind == "performer" {
                let fm = FeatureMap::performer(m, d, &mut rng)?;
                (fm.clone(), Reference::Performer { feature_map: fm })
            } else {
                (FeatureMap::linear_transformer(d), Reference::LinearTransformer)
            };
            let prog = compile_performer_vn(&w, &PerformerSimConfig::exact(fm.clone()))?.program;
            let rep = run_and_report(&x, &prog, &w, &reference, 1.0)?.with_seed(case as u64);
            Ok(rep.trial_row(n, d, fm.output_dim() as f64))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let worst = rows.iter().map(|r| r.max_err).fold(0.0, f64::max);
    report.line(format!(
        "exact mode: {} cases, max abs error {worst:.3e} (tolerance {tol:e})",
        rows.len()
    ));
    for r in rows.iter().filter(|r| r.max_err > tol) {
        report.fail(format!("case {} (n={}, d={}, m={}): error {:.3e}", r.seed, r.n, r.d, r.param, r.max_err));
    }
    report.table("", &rows)?;
    report.cases = rows.iter().map(|r| serde_json::to_value(r).unwrap()).collect();
    let mut summary = json!({"cases": rows.len(), "exact_max_abs_error": worst});

    if cfg.get::<bool>("sweep")? {
        let features: Vec<usize> = cfg.list("sweep_features")?;
        let pts = kernel_convergence(
            &features,
            cfg.get("sweep_dim")?,
            cfg.get("sweep_pairs")?,
            cfg.get("sweep_seeds")?,
            seed,
        )?;
        let monotone = pts
            .windows(2)
            .all(|w| w[1].median_rel_error <= w[0].median_rel_error);
        for p in &pts {
            report.line(format!(
                "kernel sweep: m = {:>5}, median relative error {:.4}",
                p.features, p.median_rel_error
            ));
        }
        if !monotone {
            report
                .notes
                .push("kernel sweep medians are not non-increasing in m".into());
        }
        report.table(".sweep", &pts)?;
        summary["sweep"] = json!({"points": pts, "monotone": monotone});
    }

    if cfg.get::<bool>("mlp")? {
        summary["mlp"] = mlp_table(cfg, &mut report)?;
    }
    report.summary = summary;
    Ok(report)
}

fn mlp_table(cfg: &Config, report: &mut Report) -> Result<Value, CliError> {
    let trials: u64 = cfg.get("mlp_trials")?;
    let tol: f64 = cfg.get("mlp_tolerance")?;
    let mc = MlpModeConfig {
        nodes: cfg.get("mlp_nodes")?,
        seed: cfg.get("mlp_seed")?,
        ..MlpModeConfig::default()
    };
    let d = 2;
    let mut rng = Rng::derive(mc.seed, 1);
    let w = AttnWeights::random(d, d, 0.85 * mc.c2, &mut rng)?;
    let fm = FeatureMap::performer(cfg.get("mlp_features")?, d, &mut rng)?;
    let compiled = compile_performer_vn(
        &w,
        &PerformerSimConfig {
            feature_map: fm.clone(),
            mode: SimMode::Mlp(mc.clone()),
        },
    )?;
    let exact = compile_performer_vn(&w, &PerformerSimConfig::exact(fm.clone()))?.program;
    let reference = Reference::Performer { feature_map: fm.clone() };
    let mut rows = Vec::new();
    let mut exact_worst = 0.0f64;
    for t in 0..trials {
        let x = uniform_ball_rows(mc.nodes, d, mc.c1, &mut Rng::derive(mc.seed, 100 + t));
        let rep = run_and_report(&x, &compiled.program, &w, &reference, mc.c1)?.with_seed(t);
        rows.push(rep.trial_row(mc.nodes, d, fm.output_dim() as f64));
        exact_worst = exact_worst.max(run_and_report(&x, &exact, &w, &reference, mc.c1)?.max_abs_error);
    }
    let worst = rows.iter().map(|r| r.max_err).fold(0.0, f64::max);
    for u in &compiled.fits {
        report.line(format!("mlp unit {:<18} sup-error {:.3e}", u.unit, u.sup_error));
    }
    report.line(format!(
        "mlp mode: max abs error {worst:.3e} over {trials} trials (exact {exact_worst:.3e}, tolerance {tol:e})"
    ));
    report.notes.extend(compiled.warnings.iter().cloned());
    if worst > tol {
        report.fail(format!("mlp-mode error {worst:.3e} exceeds {tol:e}"));
    }
    report.table(".mlp", &rows)?;
    Ok(json!({
        "max_abs_error": worst,
        "exact_max_abs_error": exact_worst,
        "fits": compiled.fits,
        "warnings": compiled.warnings,
        "trials": rows,
    }))
}

// verify-deep

pub const DEEP_DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("oracle_cases", "100"),
    ("oracle_n_max", "16"),
    ("oracle_d_max", "4"),
    ("oracle_tolerance", "1e-10"),
    ("n", "8"),
    ("d", "3"),
    ("seeds", "20"),
    ("min_delta", "0.1"),
    ("epsilon", "1e-4"),
    ("c_grid", "2,4,8,16"),
    ("rel_tolerance", "1e-2"),
    ("extra_linear", "false"),
    ("gatv2", "false"),
    ("gatv2_weight", "0.99"),
];

#[derive(Serialize)]
struct OracleRow {
    case: usize,
    n: usize,
    d: usize,
    max_err: f64,
    time2_exact: bool,
}

fn oracle_case(seed: u64, case: usize, n_max: usize, d_max: usize, extra: bool) -> Result<OracleRow, CliError> {
    let mut rng = Rng::derive(seed, case as u64);
    let n = 1 + rng.below(n_max);
    let d = 1 + rng.below(d_max);
    let x = uniform_ball_rows(n, d, 1.0, &mut rng);
    let w = AttnWeights::random(d, d, 0.9, &mut rng)?;
    let cfg = DeepSimConfig {
        extra_linear: extra,
        ..DeepSimConfig::oracle(n)
    };
    let prog = compile_deep_vn(&w, &cfg)?;
    let (states, _) = run_program_traced(&star(n), &prog.encode(&x)?, &prog)?;
    let out = prog.decode(states.last().expect("initial state"));
    let max_err = out.max_abs_diff(&self_attention(&x, &w)?);
    let mut time2_exact = true;
    let x1 = x.row(0);
    let v1 = w.value(x1);
    for i in 0..n {
        let e = unnorm_score(x.row(i), x1, &w)?.exp();
        let mut want = x.row(i).to_vec();
        want.extend(v1.iter().map(|v| e * v));
        want.push(e);
        time2_exact &= states[2].graph.row(i) == want.as_slice();
    }
    Ok(OracleRow {
        case,
        n,
        d,
        max_err,
        time2_exact,
    })
}

pub fn verify_deep(cfg: &Config) -> Result<Report, CliError> {
    let seed: u64 = cfg.get("seed")?;
    let extra: bool = cfg.get("extra_linear")?;
    let oracle_tol: f64 = cfg.get("oracle_tolerance")?;
    let n_max: usize = cfg.get("oracle_n_max")?;
    let d_max: usize = cfg.get("oracle_d_max")?;
    if n_max == 0 || d_max == 0 {
        return Err(CliError::Usage("oracle_n_max and oracle_d_max must be positive".into()));
    }
    let mut report = Report::new("verify-deep", cfg.echo());

    let oracle = (0..cfg.get::<usize>("oracle_cases")?)
        .into_par_iter()
        .map(|case| oracle_case(seed, case, n_max, d_max, extra))
        .collect::<Result<Vec<_>, _>>()?;
    let oracle_worst = oracle.iter().map(|r| r.max_err).fold(0.0, f64::max);
    report.line(format!(
        "oracle mode: {} cases, max abs error {oracle_worst:.3e} (tolerance {oracle_tol:e})",
        oracle.len()
    ));
    for r in &oracle {
        if r.max_err > oracle_tol {
            report.fail(format!("oracle case {} (n={}, d={}): error {:.3e}", r.case, r.n, r.d, r.max_err));
        }
        if !r.time2_exact {
            report.fail(format!("oracle case {}: time-2 state differs from the trace", r.case));
        }
    }
    report.table(".oracle", &oracle)?;

    let n: usize = cfg.get("n")?;
    let d: usize = cfg.get("d")?;
    let seeds: u64 = cfg.get("seeds")?;
    let min_delta: f64 = cfg.get("min_delta")?;
    let eps: f64 = cfg.get("epsilon")?;
    let grid: Vec<f64> = cfg.list("c_grid")?;
    let rel_tol: f64 = cfg.get("rel_tolerance")?;

    struct Trial {
        rel_err: f64,
        violations: Vec<String>,
        sweep: Vec<TrialRow>,
        selection: Value,
    }
    let trials = (0..seeds)
        .into_par_iter()
        .map(|s| -> Result<Trial, CliError> {
            let mut rng = Rng::derive(seed ^ 0xdee9, s);
            let (x, cert) = random_certified_instance(n, d, min_delta, 100_000, &mut rng)?;
            let w = AttnWeights::random(d, d, 0.9, &mut rng)?;
            let delta = cert.delta;
            let c = amplification_for(delta, eps, n)?;
            let sim = |c: f64| DeepSimConfig {
                extra_linear: extra,
                ..DeepSimConfig::softmax(cert.clone().with_amplification(c))
            };
            let rep = run_and_report(&x, &compile_deep_vn(&w, &sim(c))?, &w, &Reference::Full, 1.0)?;
            let floor = selection_bound(c, delta, n) - 1e-12;
            let mut violations = Vec::new();
            for sel in &rep.selection {
                if sel.weight < floor {
                    violations.push(format!("seed {s} layer {}: weight {} below {floor}", sel.layer, sel.weight));
                }
                if !sel.bound_satisfied {
                    violations.push(format!(
                        "seed {s} layer {}: selection error {:.3e} above bound {:.3e}",
                        sel.layer, sel.error, sel.bound
                    ));
                }
            }
            if rep.max_rel_error > rel_tol {
                violations.push(format!("seed {s}: relative error {:.3e}", rep.max_rel_error));
            }
            let sweep = grid
                .iter()
                .map(|k| -> Result<TrialRow, CliError> {
                    let c = k / delta;
                    let r = run_and_report(&x, &compile_deep_vn(&w, &sim(c))?, &w, &Reference::Full, 1.0)?;
                    Ok(r.with_seed(s).trial_row(n, d, c))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Trial {
                rel_err: rep.max_rel_error,
                violations,
                sweep,
                selection: json!({"seed": s, "delta": delta, "c": c, "layers": rep.selection}),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let worst_rel = trials.iter().map(|t| t.rel_err).fold(0.0, f64::max);
    report.line(format!(
        "softmax mode: {seeds} instances (n={n}, d={d}), max relative error {worst_rel:.3e} at c = c(δ, {eps:e})"
    ));
    for t in &trials {
        for v in &t.violations {
            report.fail(v.clone());
        }
    }
    let medians: Vec<f64> = (0..grid.len())
        .map(|k| median(trials.iter().map(|t| t.sweep[k].max_err).collect()))
        .collect();
    for (k, m) in grid.iter().zip(&medians) {
        report.line(format!("c = {k:>5}/δ: median max abs error {m:.3e}"));
    }
    if !medians.windows(2).all(|w| w[1] < w[0]) {
        report.fail("median error is not strictly decreasing along the c grid");
    }
    let sweep_rows: Vec<TrialRow> = trials.iter().flat_map(|t| t.sweep.clone()).collect();
    report.table("", &sweep_rows)?;
    report.cases = trials.iter().map(|t| t.selection.clone()).collect();
    let mut summary = json!({
        "oracle": {"cases": oracle.len(), "max_abs_error": oracle_worst},
        "softmax": {"max_rel_error": worst_rel, "c_grid": grid, "median_errors": medians},
    });

    if cfg.get::<bool>("gatv2")? {
        summary["gatv2"] = gatv2_case(cfg.get("gatv2_weight")?, extra, &mut report)?;
    }
    report.summary = summary;
    Ok(report)
}

fn gatv2_case(weight: f64, extra: bool, report: &mut Report) -> Result<Value, CliError> {
    let sets = three_cluster_instance(5, 0.1);
    let nodes = Matrix::from_rows(&[vec![-1.0], vec![0.0], vec![1.0]])?;
    let outer = Matrix::from_rows(&[vec![-1.0], vec![1.0]])?;
    let in_hull = hull_member(&[0.0], &outer)?;
    let scfg = SelectorConfig {
        jitter: 0.1,
        ..SelectorConfig::default()
    };
    let selections = (0..3)
        .map(|k| -> Result<Gatv2Selection, CliError> {
            let sel = train_gatv2_selector(&sets, k, 1.0, &scfg)?;
            Ok(Gatv2Selection {
                amplification: sel.amplification_for_weight(weight, 3)?,
                score: sel.score,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let w = AttnWeights::random(1, 1, 0.9, &mut Rng::new(scfg.seed))?;
    let prog = compile_deep_vn(
        &w,
        &DeepSimConfig {
            n: 3,
            selection: Selection::Gatv2(selections),
            extra_linear: extra,
        },
    )?;
    let rep = run_and_report(&nodes, &prog, &w, &Reference::Full, 1.0)?;
    let weights: Vec<f64> = rep.selection.iter().map(|s| s.weight).collect();
    report.line(format!(
        "gatv2 mode: middle point in hull = {in_hull}, selection weights {weights:.4?}, relative error {:.3e}",
        rep.max_rel_error
    ));
    if weights.iter().any(|&v| v < weight) {
        report.fail(format!("gatv2 selection weight below {weight}"));
    }
    Ok(json!({"middle_in_hull": in_hull, "weights": weights, "max_rel_error": rep.max_rel_error}))
}

// check-separability

pub const SEPARABILITY_DEFAULTS: &[(&str, &str)] = &[("epsilon", "1e-4")];

#[derive(Serialize)]
struct PointRow {
    index: usize,
    separable: bool,
    lp_margin: f64,
    unit_margin: Option<f64>,
    in_hull_of_rest: bool,
}

fn read_points(path: &Path) -> Result<Matrix, CliError> {
    let bad = |m: String| CliError::Usage(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) if r.iter().all(|v| v.is_finite()) => rows.push(r),
            Ok(_) => return Err(bad(format!("row {} has non-finite values", k + 1))),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(bad(format!("row {}: {e}", k + 1))),
        }
    }
    if rows.len() < 2 {
        return Err(bad("need at least two points".into()));
    }
    Matrix::from_rows(&rows).map_err(|e| bad(e.to_string()))
}

pub fn check_separability(path: &Path, cfg: &Config) -> Result<Report, CliError> {
    let eps: f64 = cfg.get("epsilon")?;
    let x = read_points(path)?;
    let (n, d) = x.shape();
    let mut config = cfg.echo();
    config.insert("points".into(), path.display().to_string());
    let mut report = Report::new("check-separability", config);

    let outcome = vdelta_certificate(&x)?;
    let unit: Option<Vec<f64>> = match &outcome {
        CertificateOutcome::Certified(c) => Some(c.margins.clone()),
        CertificateOutcome::Failed { .. } => None,
    };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let sep = strict_separation(i, &x)?;
        let others = Matrix::from_rows(
            &(0..n).filter(|&j| j != i).map(|j| x.row(j).to_vec()).collect::<Vec<_>>(),
        )?;
        rows.push(PointRow {
            index: i,
            separable: sep.is_some(),
            lp_margin: sep.map_or(0.0, |s| s.margin),
            unit_margin: unit.as_ref().map(|u| u[i]),
            in_hull_of_rest: hull_member(x.row(i), &others)?,
        });
    }
    report.line(format!("{n} points in R^{d}"));
    for r in &rows {
        report.line(format!(
            "point {:>3}: {} (lp margin {:.4e}{})",
            r.index,
            if r.separable { "separable" } else { "NOT separable" },
            r.lp_margin,
            r.unit_margin.map_or(String::new(), |m| format!(", unit margin {m:.4e}"))
        ));
    }
    report.summary = match outcome {
        CertificateOutcome::Certified(cert) => {
            let c = amplification_for(cert.delta, eps, n)?;
            report.line(format!("delta = {:.6e}, suggested c = {c:.6e} for epsilon = {eps:e}", cert.delta));
            json!({"n": n, "d": d, "certified": true, "delta": cert.delta, "epsilon": eps, "suggested_c": c})
        }
        CertificateOutcome::Failed { inseparable, .. } => {
            report.line(format!("not certified: points {inseparable:?} lie in the hull of the rest"));
            json!({"n": n, "d": d, "certified": false, "inseparable": inseparable})
        }
    };
    report.cases = rows.iter().map(|r| serde_json::to_value(r).unwrap()).collect();
    report.table("", &rows)?;
    Ok(report)
}

// dataset-arith

pub const DATASET_DEFAULTS: &[(&str, &str)] = &[
    ("history", "42"),
    ("horizons", "28,14,7"),
    ("regions", "11"),
    ("train", "1982-2018"),
    ("validation", "2019-2019"),
    ("test", "2020-2021"),
];

/// Windows per region for the default splits and horizons 28, 14, 7.
const EXPECTED_PER_REGION: [(&str, [u64; 3]); 3] = [
    ("train", [13_444, 13_458, 13_465]),
    ("validation", [295, 309, 316]),
    ("test", [661, 675, 682]),
];

#[derive(Serialize)]
struct SplitRow {
    split: String,
    start_year: i32,
    end_year: i32,
    days: u64,
    horizon: usize,
    windows: u64,
    expected: Option<u64>,
}

fn years(cfg: &Config, key: &str) -> Result<(i32, i32), CliError> {
    let raw: String = cfg.get(key)?;
    let bad = || CliError::Usage(format!("{key} must look like 1982-2018, got '{raw}'"));
    let (a, b) = raw.split_once('-').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn dataset_arith(cfg: &Config) -> Result<Report, CliError> {
    let history: usize = cfg.get("history")?;
    let horizons: Vec<usize> = cfg.list("horizons")?;
    let regions: u64 = cfg.get("regions")?;
    let defaults = crate::config::Config::new(DATASET_DEFAULTS);
    let standard = history == 42
        && horizons == [28, 14, 7]
        && ["train", "validation", "test"]
            .iter()
            .all(|k| years(cfg, k).ok() == years(&defaults, k).ok());
    let mut report = Report::new("dataset-arith", cfg.echo());
    let mut rows = Vec::new();
    for (split, per_region) in EXPECTED_PER_REGION {
        let (a, b) = years(cfg, split)?;
        let days = calendar_days(a, b)?;
        report.line(format!("{split}: {a}-{b}, {days} days"));
        for (k, &h) in horizons.iter().enumerate() {
            let spec = WindowSpec::new(history, h)?;
            let windows = window_count(days, &spec, regions)?;
            let expected = standard.then(|| per_region[k] * regions);
            report.line(format!(
                "  horizon {h:>2}: {windows} windows{}",
                expected.map_or(String::new(), |e| format!(" (expected {e})"))
            ));
            if let Some(e) = expected.filter(|&e| e != windows) {
                report.fail(format!("{split} horizon {h}: {windows} != {e}"));
            }
            rows.push(SplitRow {
                split: split.to_string(),
                start_year: a,
                end_year: b,
                days,
                horizon: h,
                windows,
                expected,
            });
        }
    }
    if !standard {
        report
            .notes
            .push("non-default splits or horizons: no expected values to compare".into());
    }
    report.summary = json!({"checked_against_expected": standard, "cells": rows.len()});
    report.cases = rows.iter().map(|r| serde_json::to_value(r).unwrap()).collect();
    report.table("", &rows)?;
    Ok(report)
}
