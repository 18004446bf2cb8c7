//! One function per experiment: run the core operation, tabulate, judge contracts.

use freeconv::ensembles::{derive_seed, WishartSpec};
use freeconv::freeprob::{density, norm_prediction, solve_g, FreeModel, DEFAULT_MAX_ITER};
use freeconv::linalg::{frobenius, CMatrix, C64};
use freeconv::montecarlo::{
    correction_check, hermitian_direction, master_residual_iid_scaling, master_residual_wishart_scaling,
    norm_convergence, resolvent_entry_variance, spectrum_containment, wishart_ibp_check, word_trace_variance,
    IbpFunction, ScalingReport,
};
use freeconv::ncpoly::Word;
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::{CliError, Result};

/// A declared contract and whether the emitted numbers satisfy it.
#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Contract {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Contract {
            name: name.to_string(),
            pass,
            detail,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "name": self.name, "pass": self.pass, "detail": self.detail })
    }
}

/// Flat table for the CSV file; cells are already formatted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub struct ExperimentOutput {
    pub results: Value,
    pub table: Table,
    pub contracts: Vec<Contract>,
}

/// 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

fn matrix_json(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| complex_json(m[(i, j)])).collect()))
            .collect(),
    )
}

fn scaling_json(s: &ScalingReport) -> Value {
    json!({
        "points": s.points.iter().map(|p| json!({"n": p.n, "value": p.value, "stderr": p.stderr})).collect::<Vec<_>>(),
        "slope": s.slope,
        "slope_stderr": s.slope_stderr,
    })
}

fn slope_contract(name: &str, s: &ScalingReport, range: [f64; 2]) -> Contract {
    match s.slope {
        Some(slope) => Contract::new(
            name,
            s.slope_within(range[0], range[1]),
            format!("slope {slope:.4} in [{}, {}]", range[0], range[1]),
        ),
        None => Contract::new(
            name,
            false,
            "slope unresolved (fewer than 3 points or some stderr >= value/3)".into(),
        ),
    }
}

pub fn run(r: &Resolved) -> Result<ExperimentOutput> {
    match r.experiment.as_str() {
        "solve" => solve(r),
        "density" => density_run(r),
        "norm-predict" => norm_predict(r),
        "converge" => converge(r),
        "master-check-iid" => master_iid(r),
        "master-check-wishart" => master_wishart(r),
        "correction-check" => correction(r),
        "variance-check" => variance(r),
        "wishart-ibp" => ibp(r),
        "containment" => containment(r),
        other => Err(CliError::Config(format!("unknown experiment `{other}`"))),
    }
}

fn solve(r: &Resolved) -> Result<ExperimentOutput> {
    let pencil = r.pencil()?;
    let model = r.model()?;
    let lambda = r.lambda(pencil.m())?;
    let tol = r.tol();
    let sol = solve_g(&pencil, model, &lambda, tol.solver_tol.unwrap(), DEFAULT_MAX_ITER)?;
    let mut table = Table::new(&["row", "col", "re", "im"]);
    for i in 0..sol.g.nrows() {
        for j in 0..sol.g.ncols() {
            let z = sol.g[(i, j)];
            table.push(vec![(i + 1).to_string(), (j + 1).to_string(), fmt_f(z.re), fmt_f(z.im)]);
        }
    }
    let max = tol.residual_max.unwrap();
    let contracts = vec![Contract::new(
        "converged",
        sol.converged && sol.residual_norm <= max,
        format!("residual {:e} <= {max:e}, converged = {}", sol.residual_norm, sol.converged),
    )];
    let results = json!({
        "g": matrix_json(&sol.g),
        "trace": complex_json(sol.normalized_trace()),
        "residual": sol.residual_norm,
        "iterations": sol.iterations,
        "converged": sol.converged,
    });
    Ok(ExperimentOutput { results, table, contracts })
}

fn density_run(r: &Resolved) -> Result<ExperimentOutput> {
    let pencil = r.pencil()?;
    let model = r.model()?;
    let grid = r.config.grid.expect("resolved grid").values();
    let y = r.config.y_levels.clone().expect("resolved y levels");
    let tol = r.tol();
    let est = density(&pencil, model, &grid, &y, tol.solver_tol.unwrap())?;
    let mut table = Table::new(&["x", "density", "unstable"]);
    for ((x, d), u) in est.grid.iter().zip(&est.density).zip(&est.unstable) {
        table.push(vec![fmt_f(*x), fmt_f(*d), (*u as u8).to_string()]);
    }
    let mass = est.integral();
    let limit = tol.mass_error.unwrap();
    let contracts = vec![Contract::new(
        "total mass",
        (mass - 1.0).abs() <= limit && !est.support.is_empty(),
        format!("|{mass:.6} - 1| <= {limit}, {} support interval(s)", est.support.len()),
    )];
    let results = json!({
        "support": est.support.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
        "integral": mass,
        "threshold": est.threshold,
        "unstable_points": est.unstable.iter().filter(|u| **u).count(),
    });
    Ok(ExperimentOutput { results, table, contracts })
}

fn norm_predict(r: &Resolved) -> Result<ExperimentOutput> {
    let p = r.polynomial()?;
    let model = r.model()?;
    let value = norm_prediction(&p, model, r.tol().solver_tol.unwrap())?;
    let mut table = Table::new(&["polynomial", "prediction"]);
    table.push(vec![p.to_string(), fmt_f(value)]);
    let contracts = vec![Contract::new("finite", value.is_finite(), format!("prediction {value}"))];
    Ok(ExperimentOutput {
        results: json!({ "polynomial": p.to_string(), "prediction": value }),
        table,
        contracts,
    })
}

fn converge(r: &Resolved) -> Result<ExperimentOutput> {
    let p = r.polynomial()?;
    let report = norm_convergence(&p, &r.ensemble()?, r.n_values(), r.seeds())?;
    let mut table = Table::new(&["n", "seed", "norm", "deviation"]);
    for pt in &report.points {
        for (seed, norm) in r.seeds().iter().zip(&pt.norms) {
            table.push(vec![pt.n.to_string(), seed.to_string(), fmt_f(*norm), fmt_f((norm - report.prediction).abs())]);
        }
    }
    let bound = r.tol().norm_deviation.unwrap();
    let last = report.points.last().expect("at least one n");
    let contracts = vec![
        Contract::new(
            "medians non-increasing",
            report.non_increasing,
            "consecutive medians may rise by at most their combined stderr".into(),
        ),
        Contract::new(
            "final deviation",
            last.median_deviation <= bound,
            format!("median deviation {:.5} at n = {} <= {bound}", last.median_deviation, last.n),
        ),
    ];
    let results = json!({
        "prediction": report.prediction,
        "points": report.points.iter().map(|p| json!({
            "n": p.n, "median_deviation": p.median_deviation, "median_stderr": p.median_stderr,
        })).collect::<Vec<_>>(),
    });
    Ok(ExperimentOutput { results, table, contracts })
}

fn master_iid(r: &Resolved) -> Result<ExperimentOutput> {
    let pencil = r.pencil()?;
    let dist = r.distribution()?;
    let lambda = r.lambda(pencil.m())?;
    let s = master_residual_iid_scaling(&pencil, &dist, &lambda, r.n_values(), r.replicas(), r.seed())?;
    let mut table = Table::new(&["n", "residual", "stderr", "residual_without_rn", "stderr_without_rn", "rn_norm", "rn_stderr"]);
    for rep in &s.reports {
        table.push(vec![
            rep.n.to_string(),
            fmt_f(rep.residual_norm()),
            fmt_f(rep.stderr),
            fmt_f(rep.residual_without_norm()),
            fmt_f(rep.stderr_without),
            fmt_f(frobenius(&rep.rn_hat)),
            fmt_f(rep.rn_stderr),
        ]);
    }
    let tol = r.tol();
    let mut contracts = vec![slope_contract("residual ~ n^-2", &s.with_rn, tol.slope_n2.unwrap())];
    if dist.kappa4() != 0.0 {
        contracts.push(slope_contract("residual without Rn/n ~ n^-1", &s.without_rn, tol.slope_n1.unwrap()));
    }
    let results = json!({
        "kappa4": dist.kappa4(),
        "with_rn": scaling_json(&s.with_rn),
        "without_rn": scaling_json(&s.without_rn),
        "reports": s.reports.iter().map(|rep| json!({
            "n": rep.n,
            "g_n": matrix_json(&rep.g_n),
            "rn_hat": matrix_json(&rep.rn_hat),
            "residual": matrix_json(&rep.residual),
            "residual_without_rn": matrix_json(&rep.residual_without),
            "controls": rep.controls,
        })).collect::<Vec<_>>(),
    });
    Ok(ExperimentOutput { results, table, contracts })
}

fn master_wishart(r: &Resolved) -> Result<ExperimentOutput> {
    let pencil = r.pencil()?;
    let FreeModel::MarchenkoPastur { alpha } = r.model()? else {
        return Err(CliError::Config("master-check-wishart needs a marchenko_pastur model".into()));
    };
    let lambda = r.lambda(pencil.m())?;
    let (reports, scaling) =
        master_residual_wishart_scaling(&pencil, alpha, &lambda, r.n_values(), r.replicas(), r.seed())?;
    // calibration constant from the smallest n, then the scaled bound at every n
    let first = &reports[0];
    let calib = first.residual_norm() * (first.n * first.n) as f64;
    let mut table = Table::new(&["n", "p", "residual", "stderr", "calibrated_bound"]);
    let mut within = true;
    for rep in &reports {
        let bound = 10.0 * (rep.stderr + calib / (rep.n * rep.n) as f64);
        within &= rep.residual_norm() <= bound;
        table.push(vec![rep.n.to_string(), rep.p.to_string(), fmt_f(rep.residual_norm()), fmt_f(rep.stderr), fmt_f(bound)]);
    }
    let mut contracts = Vec::new();
    if reports.len() >= 3 {
        contracts.push(slope_contract("residual ~ n^-2", &scaling, r.tol().slope_n2.unwrap()));
    }
    contracts.push(Contract::new(
        "calibrated bound",
        within,
        format!("residual <= 10 (stderr + c/n^2) with c = {calib:.6e} from n = {}", first.n),
    ));
    let results = json!({
        "alpha": alpha,
        "calibration": calib,
        "scaling": scaling_json(&scaling),
        "reports": reports.iter().map(|rep| json!({
            "n": rep.n, "p": rep.p,
            "g_n": matrix_json(&rep.g_n),
            "residual": matrix_json(&rep.residual),
            "controls": rep.controls,
        })).collect::<Vec<_>>(),
    });
    Ok(ExperimentOutput { results, table, contracts })
}

fn correction(r: &Resolved) -> Result<ExperimentOutput> {
    let pencil = r.pencil()?;
    let dist = r.distribution()?;
    let lambda = r.lambda(pencil.m())?;
    let rep = correction_check(&pencil, &dist, &lambda, r.n_values(), r.replicas(), r.seed())?;
    let m = pencil.m() as f64;
    let mut table = Table::new(&["n", "deviation", "stderr", "scaled_trace_re", "scaled_trace_im"]);
    for (pt, sp) in rep.points.iter().zip(&rep.scaling.points) {
        let t = pt.scaled_difference.trace() / m;
        table.push(vec![pt.n.to_string(), fmt_f(sp.value), fmt_f(sp.stderr), fmt_f(t.re), fmt_f(t.im)]);
    }
    let contracts = vec![Contract::new(
        "deviation decreases",
        rep.decreasing && !rep.inconclusive,
        if rep.inconclusive {
            "inconclusive: Monte Carlo error dominates the deviation".into()
        } else {
            "||n(Gn - G) - L|| decreases across n_values".into()
        },
    )];
    let results = json!({
        "kappa4": rep.kappa4,
        "g": matrix_json(&rep.g),
        "l": matrix_json(&rep.l),
        "scaling": scaling_json(&rep.scaling),
        "decreasing": rep.decreasing,
        "inconclusive": rep.inconclusive,
        "scaled_differences": rep.points.iter().map(|p| json!({
            "n": p.n, "value": matrix_json(&p.scaled_difference), "stderr": p.scaled_stderr,
        })).collect::<Vec<_>>(),
    });
    Ok(ExperimentOutput { results, table, contracts })
}

fn variance(r: &Resolved) -> Result<ExperimentOutput> {
    let ensemble = r.ensemble()?;
    let (label, report) = match &r.config.word {
        Some(word) => {
            let w = Word(word.iter().map(|g| g - 1).collect());
            ("word", word_trace_variance(&w, &ensemble, r.n_values(), r.replicas(), r.seed())?)
        }
        None => {
            let pencil = r.pencil()?;
            let lambda = r.lambda(pencil.m())?;
            let [i, j] = r.config.entry.expect("resolved entry");
            let rep = resolvent_entry_variance(&pencil, &ensemble, &lambda, (i - 1, j - 1), r.n_values(), r.replicas(), r.seed())?;
            ("resolvent entry", rep)
        }
    };
    let mut table = Table::new(&["n", "variance", "stderr"]);
    for p in &report.points {
        table.push(vec![p.n.to_string(), fmt_f(p.value), fmt_f(p.stderr)]);
    }
    let contract = if report.points.iter().all(|p| p.value == 0.0) {
        Contract::new("variance ~ n^-2", true, "variance identically zero".into())
    } else {
        slope_contract("variance ~ n^-2", &report, r.tol().slope_n2.unwrap())
    };
    Ok(ExperimentOutput {
        results: json!({ "statistic": label, "scaling": scaling_json(&report) }),
        table,
        contracts: vec![contract],
    })
}

fn ibp(r: &Resolved) -> Result<ExperimentOutput> {
    let sigmas = r.tol().ibp_sigmas.unwrap();
    let mut table = Table::new(&["case", "n", "p", "phi", "value_re", "value_im", "stderr"]);
    let mut contracts = Vec::new();
    let mut results = Vec::new();
    for (idx, case) in r.config.cases.as_ref().expect("resolved cases").iter().enumerate() {
        let spec = WishartSpec::with_p(case.n, case.p)?;
        let [dj, dk] = case.direction.expect("resolved direction");
        let h = hermitian_direction(case.n, dj - 1, dk - 1);
        let phi = match case.phi.as_str() {
            "zero" => IbpFunction::Zero,
            "trace" => {
                let [j, k] = case.index.expect("resolved index");
                let mut a = CMatrix::zeros(case.n, case.n);
                a[(j - 1, k - 1)] = C64::from(1.0);
                IbpFunction::TraceAgainst(a)
            }
            _ => {
                let [j, k] = case.index.expect("resolved index");
                IbpFunction::ResolventEntry {
                    z: case.z.expect("resolved z").value(),
                    j: j - 1,
                    k: k - 1,
                }
            }
        };
        let rep = wishart_ibp_check(&spec, &phi, &h, r.replicas(), derive_seed(r.seed(), idx as u64))?;
        let size = rep.value.norm();
        contracts.push(Contract::new(
            &format!("case {} ({}, n = {}, p = {})", idx + 1, case.phi, case.n, case.p),
            size <= sigmas * rep.stderr,
            format!("|value| = {size:.3e} <= {sigmas} x stderr {:.3e}", rep.stderr),
        ));
        table.push(vec![
            (idx + 1).to_string(),
            case.n.to_string(),
            case.p.to_string(),
            case.phi.clone(),
            fmt_f(rep.value.re),
            fmt_f(rep.value.im),
            fmt_f(rep.stderr),
        ]);
        results.push(json!({ "n": case.n, "p": case.p, "phi": case.phi, "value": complex_json(rep.value), "stderr": rep.stderr }));
    }
    Ok(ExperimentOutput {
        results: json!({ "cases": results }),
        table,
        contracts,
    })
}

fn containment(r: &Resolved) -> Result<ExperimentOutput> {
    let pencil = r.pencil()?;
    let ensemble = r.ensemble()?;
    let tol = r.tol();
    let (eps, min_rate) = (tol.epsilon.unwrap(), tol.min_pass_rate.unwrap());
    let mut table = Table::new(&["n", "seed", "min_eigenvalue", "max_eigenvalue", "max_excursion", "contained"]);
    let mut contracts = Vec::new();
    let mut results = Vec::new();
    for &n in r.n_values() {
        let rep = spectrum_containment(&pencil, &ensemble, n, eps, r.seeds())?;
        for s in &rep.samples {
            table.push(vec![
                n.to_string(),
                s.seed.to_string(),
                fmt_f(s.min_eigenvalue),
                fmt_f(s.max_eigenvalue),
                fmt_f(s.max_excursion),
                (s.contained as u8).to_string(),
            ]);
        }
        contracts.push(Contract::new(
            &format!("pass rate at n = {n}"),
            rep.pass_rate >= min_rate,
            format!("{:.3} >= {min_rate} (epsilon = {eps})", rep.pass_rate),
        ));
        results.push(json!({
            "n": n,
            "support": rep.support.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
            "pass_rate": rep.pass_rate,
        }));
    }
    Ok(ExperimentOutput {
        results: json!({ "per_n": results }),
        table,
        contracts,
    })
}
