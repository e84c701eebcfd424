//! Subcommand implementations.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use nowcast_core::asymclass::{
    classify, fit_weighted_logistic, observation_weights, read_classification_csv, Component, DetentionTemplate,
    LogisticOptions, LossQuartet,
};
use nowcast_core::datavintage::{
    align, format_timestamp, parse_timestamp, FillPolicy, MixedFrequencyPanel, Period, Vintage, VintageStore,
};
use nowcast_core::hdinfer::{granger_test, nodewise_precision_cv, GrangerConfig, KernelFamily, SingularPolicy, TailRegime};
use nowcast_core::lagpoly::{build_weight_matrix, construct_design, feature_row, GroupedDesign, LagSpec};
use nowcast_core::seeds::derive_seed;
use nowcast_core::sglasso::{fit_sg_lasso_with, lambda_grid, PenaltySpec, SgLassoFit, SolverOptions};
use nowcast_core::tensorfac::{rank_test, read_tensor_csv, tensor_pca};
use nowcast_core::tscv::{cross_validate, CvLoss, CvPlan, CvResult};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{Command, Settings};
use crate::error::{config_err, CliError, Result};
use crate::output::{num, opt_num, OutputDir};

// sub-seed tags
const CV_STREAM: u64 = 1;
const NODEWISE_STREAM: u64 = 2;
const NULL_STREAM: u64 = 3;

pub fn dispatch(settings: &Settings, out: &Path) -> Result<()> {
    let mut dir = OutputDir::create(out)?;
    match settings.command {
        Command::Fit => fit(settings, &mut dir)?,
        Command::Nowcast => nowcast(settings, &mut dir)?,
        Command::Cv => cv(settings, &mut dir)?,
        Command::Granger => granger(settings, &mut dir)?,
        Command::Classify => classify_cmd(settings, &mut dir)?,
        Command::TensorRank => tensor_rank(settings, &mut dir)?,
    }
    dir.finish(settings)
}

struct Midas {
    spec: LagSpec,
    panel: MixedFrequencyPanel,
    design: GroupedDesign,
}

/// `name:n_high:n_low` triples separated by commas.
fn parse_covariates(text: &str) -> Result<Vec<(String, usize, usize)>> {
    text.split(',')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split(':').collect();
            let bad = || CliError::Config(format!("covariate `{item}` is not of the form name:n_high:n_low"));
            match parts.as_slice() {
                [name, nh, nl] if !name.is_empty() => {
                    Ok((name.to_string(), nh.parse().map_err(|_| bad())?, nl.parse().map_err(|_| bad())?))
                }
                _ => Err(bad()),
            }
        })
        .collect()
}

fn solver_options(s: &Settings) -> Result<SolverOptions> {
    Ok(SolverOptions {
        max_passes: s.parse_required("max_passes")?,
        tolerance: s.parse_required("tolerance")?,
        ..SolverOptions::default()
    })
}

fn as_of(s: &Settings) -> Result<Option<Vintage>> {
    s.get("as_of").map(parse_timestamp).transpose().map_err(CliError::from)
}

fn load_midas(s: &Settings, query: Option<Vintage>) -> Result<Midas> {
    let path = s.input_path("data")?;
    let target = s.require("target")?;
    let covariates = parse_covariates(s.require("covariates")?)?;
    let mut store = VintageStore::new();
    store.declare_frequency(target, 1)?;
    for (name, nh, _) in &covariates {
        store.declare_frequency(name, *nh)?;
    }
    let file = File::open(&path).map_err(|_| CliError::MissingInput(path.clone()))?;
    store.ingest_csv(BufReader::new(file))?;
    let snapshot = match query {
        Some(q) => store.as_of(q),
        None => store.latest(),
    };
    if !snapshot.series.contains_key(target) {
        return Err(CliError::Runtime(format!("target `{target}` has no releases in the selected information set")));
    }
    let refs: Vec<(&str, usize, usize)> = covariates.iter().map(|(n, h, l)| (n.as_str(), *h, *l)).collect();
    let spec = LagSpec::legendre(&refs, s.parse_required("degrees")?, s.parse_required("ar_lags")?, s.parse_required("horizon")?)?;
    let fill = match s.require("fill")? {
        "drop" => FillPolicy::DropIncomplete,
        "zero" => FillPolicy::ZeroFill,
        other => return config_err(format!("fill must be `drop` or `zero`, got `{other}`")),
    };
    let panel = align(&snapshot, target, &spec)?.apply_fill(fill);
    let design = construct_design(&panel, &spec)?;
    log::info!("design: {} rows, {} columns", design.rows(), design.cols());
    Ok(Midas { spec, panel, design })
}

fn cv_plan(s: &Settings, sample_size: usize, stream: u64) -> Result<CvPlan> {
    let subsample: Option<usize> = s.parse("cv_subsample")?;
    let seed = match subsample {
        Some(_) => derive_seed(s.seed()?, stream),
        None => 0,
    };
    let loss = match s.require("cv_loss")? {
        "squared" => CvLoss::Squared,
        "absolute" => CvLoss::Absolute,
        other => return config_err(format!("cv_loss must be `squared` or `absolute`, got `{other}`")),
    };
    Ok(CvPlan::new(sample_size, s.parse_required("cv_gap")?, subsample, seed, loss)?)
}

fn run_cv(s: &Settings, design: &GroupedDesign, opts: &SolverOptions) -> Result<CvResult> {
    let gamma: f64 = s.parse_required("gamma")?;
    let grid = lambda_grid(design, gamma, s.parse_required("grid_size")?, s.parse_required("grid_ratio")?)?;
    let penalties = grid.into_iter().map(|l| PenaltySpec::new(l, gamma)).collect::<nowcast_core::Result<Vec<_>>>()?;
    let plan = cv_plan(s, design.rows(), CV_STREAM)?;
    Ok(cross_validate(design, &plan, &penalties, opts)?)
}

/// Fixed penalty when `lambda` is set, otherwise the CV choice.
fn choose_penalty(s: &Settings, design: &GroupedDesign, opts: &SolverOptions) -> Result<(PenaltySpec, Option<CvResult>)> {
    let gamma: f64 = s.parse_required("gamma")?;
    match s.parse::<f64>("lambda")? {
        Some(l) => Ok((PenaltySpec::new(l, gamma)?, None)),
        None => {
            let cv = run_cv(s, design, opts)?;
            Ok((cv.selected, Some(cv)))
        }
    }
}

fn period_label(panel: &MixedFrequencyPanel, index: i64) -> String {
    Period { index, kind: panel.period_kind }.to_string()
}

fn write_cv_curve(dir: &mut OutputDir, cv: &CvResult) -> Result<()> {
    let rows: Vec<Vec<String>> = cv
        .penalties
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                num(p.lambda),
                num(p.gamma),
                num(cv.cv_loss[i]),
                cv.excluded_folds[i].to_string(),
                u8::from(i == cv.selected_index).to_string(),
            ]
        })
        .collect();
    dir.write_table("cv_curve.csv", &["lambda", "gamma", "cv_loss", "excluded_folds", "selected"], &rows)
}

fn write_fit(dir: &mut OutputDir, m: &Midas, fit: &SgLassoFit) -> Result<()> {
    let groups = m.design.groups.groups();
    let mut rows = vec![vec!["intercept".to_string(), String::new(), num(fit.intercepts[0])]];
    for (j, name) in m.design.column_names.iter().enumerate() {
        let g = m.design.groups.group_of_column(j).map(|g| groups[g].label.clone()).unwrap_or_default();
        rows.push(vec![name.clone(), g, num(fit.coefficients[j])]);
    }
    dir.write_table("coefficients.csv", &["term", "group", "coefficient"], &rows)?;
    let fitted = fit.fitted_values(&m.design.matrix);
    let rows: Vec<Vec<String>> = (0..m.design.rows())
        .map(|r| {
            let target = m.design.row_periods[r] + m.spec.horizon as i64;
            vec![
                period_label(&m.panel, target),
                num(m.design.response[r]),
                num(fitted[r]),
                num(fit.residuals[r]),
            ]
        })
        .collect();
    dir.write_table("fitted.csv", &["period", "actual", "fitted", "residual"], &rows)?;
    dir.note("lambda", num(fit.penalty.lambda));
    dir.note("gamma", num(fit.penalty.gamma));
    dir.note("objective", num(fit.objective_value));
    dir.note("passes", fit.iterations.to_string());
    dir.note("converged", fit.converged.to_string());
    dir.note("rows", m.design.rows().to_string());
    Ok(())
}

fn fit(s: &Settings, dir: &mut OutputDir) -> Result<()> {
    let m = load_midas(s, as_of(s)?)?;
    let opts = solver_options(s)?;
    let (penalty, cv) = choose_penalty(s, &m.design, &opts)?;
    if let Some(cv) = &cv {
        write_cv_curve(dir, cv)?;
    }
    let fit = fit_sg_lasso_with(&m.design, penalty, &opts)?;
    write_fit(dir, &m, &fit)
}

fn nowcast(s: &Settings, dir: &mut OutputDir) -> Result<()> {
    let query = as_of(s)?.ok_or_else(|| CliError::Config("`nowcast` needs an as-of date (`--as-of`)".into()))?;
    let m = load_midas(s, Some(query))?;
    let opts = solver_options(s)?;
    let (penalty, cv) = choose_penalty(s, &m.design, &opts)?;
    if let Some(cv) = &cv {
        write_cv_curve(dir, cv)?;
    }
    let fit = fit_sg_lasso_with(&m.design, penalty, &opts)?;
    write_fit(dir, &m, &fit)?;

    let weights = (0..m.spec.covariates.len())
        .map(|k| build_weight_matrix(&m.spec, k))
        .collect::<nowcast_core::Result<Vec<_>>>()?;
    // latest row whose target is unreleased but whose regressors are complete
    let (row, x) = (0..m.panel.rows())
        .rev()
        .filter(|&r| m.panel.response(r).is_none())
        .find_map(|r| feature_row(&m.panel, &m.spec, &weights, r).map(|x| (r, x)))
        .ok_or_else(|| {
            CliError::Runtime("no unreleased target period has complete regressors; try `fill = zero`".into())
        })?;
    let target = period_label(&m.panel, m.panel.periods[row] + m.spec.horizon as i64);
    let value = fit.predict(&x);
    dir.write_table(
        "nowcast.csv",
        &["as_of", "target_period", "nowcast"],
        &[vec![format_timestamp(&query), target.clone(), num(value)]],
    )?;
    dir.note("target_period", target);
    dir.note("nowcast", num(value));
    Ok(())
}

fn cv(s: &Settings, dir: &mut OutputDir) -> Result<()> {
    let m = load_midas(s, as_of(s)?)?;
    let opts = solver_options(s)?;
    let cv = run_cv(s, &m.design, &opts)?;
    write_cv_curve(dir, &cv)?;
    let points: Vec<Vec<String>> = cv.evaluation_points.iter().map(|t| vec![t.to_string()]).collect();
    dir.write_table("evaluation_points.csv", &["t"], &points)?;
    dir.note("selected_lambda", num(cv.selected.lambda));
    dir.note("selected_cv_loss", num(cv.cv_loss[cv.selected_index]));
    Ok(())
}

fn tested_columns(s: &Settings, design: &GroupedDesign) -> Result<Vec<usize>> {
    let mut cols = Vec::new();
    for name in s.require("tested")?.split(',').map(str::trim) {
        let g = design
            .groups
            .groups()
            .iter()
            .find(|g| g.label == name)
            .ok_or_else(|| CliError::Config(format!("tested group `{name}` is not in the design")))?;
        cols.extend(g.columns.clone());
    }
    cols.sort_unstable();
    cols.dedup();
    Ok(cols)
}

fn granger(s: &Settings, dir: &mut OutputDir) -> Result<()> {
    let m = load_midas(s, as_of(s)?)?;
    let opts = solver_options(s)?;
    let tested = tested_columns(s, &m.design)?;
    let (penalty, cv) = choose_penalty(s, &m.design, &opts)?;
    if let Some(cv) = &cv {
        write_cv_curve(dir, cv)?;
    }
    let nodewise_gamma: f64 = s.parse_required("nodewise_gamma")?;
    let nodewise = match s.parse::<f64>("nodewise_lambda")? {
        Some(l) => vec![PenaltySpec::new(l, nodewise_gamma)?],
        None => {
            let plan = cv_plan(s, m.design.rows(), NODEWISE_STREAM)?;
            let grid_size = s.parse_required("grid_size")?;
            let ratio = s.parse_required("grid_ratio")?;
            nodewise_precision_cv(&m.design, &tested, nodewise_gamma, &plan, grid_size, ratio, &opts)?.penalties
        }
    };
    let regime = match s.require("regime")? {
        "subgaussian" => TailRegime::SubGaussian,
        "heavy" => TailRegime::HeavyTailed { moments: s.parse_required("moments")? },
        other => return config_err(format!("regime must be `subgaussian` or `heavy`, got `{other}`")),
    };
    let singular = match s.require("singular")? {
        "error" => SingularPolicy::Error,
        "floor" => SingularPolicy::Floor,
        "pinv" => SingularPolicy::PseudoInverse,
        other => return config_err(format!("singular must be `error`, `floor` or `pinv`, got `{other}`")),
    };
    let config = GrangerConfig {
        penalty,
        nodewise,
        kernel: s.parse_required::<KernelFamily>("kernel")?,
        regime,
        bandwidth: s.parse("bandwidth")?,
        level: s.parse_required("level")?,
        singular,
        solver: opts,
    };
    let report = granger_test(&m.design, &tested, &config)?;
    let rows: Vec<Vec<String>> = report.record().into_iter().map(|(k, v)| vec![k, v]).collect();
    dir.write_table("granger.csv", &["key", "value"], &rows)?;

    let z = Normal::standard().inverse_cdf(1.0 - config.level / 2.0);
    let block = &report.block;
    let rows: Vec<Vec<String>> = block
        .target_indices
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let (lo, hi) = block.confidence_interval(i, z);
            vec![
                m.design.column_names[j].clone(),
                num(report.fit.coefficients[j]),
                num(block.debiased_coefficients[i]),
                num(lo),
                num(hi),
            ]
        })
        .collect();
    dir.write_table("debiased.csv", &["term", "estimate", "debiased", "ci_lower", "ci_upper"], &rows)?;
    dir.note("statistic", num(report.test.statistic));
    dir.note("p_value", num(report.test.p_value));
    dir.note("reject", report.test.reject.to_string());
    Ok(())
}

fn component(s: &Settings, key: &str, features: &[String]) -> Result<Component> {
    let v = s.require(key)?;
    if let Ok(x) = v.parse::<f64>() {
        return Ok(Component::Constant(x));
    }
    features
        .iter()
        .position(|f| f == v)
        .map(Component::Column)
        .ok_or_else(|| CliError::Config(format!("`{key}` = `{v}` is neither a number nor a feature column")))
}

fn classify_cmd(s: &Settings, dir: &mut OutputDir) -> Result<()> {
    let path = s.input_path("data")?;
    let data = read_classification_csv(&path, s.require("label")?)?;
    let quartet = match s.require("quartet")? {
        "symmetric" => LossQuartet::symmetric(),
        "constant" => LossQuartet::constant(
            s.parse_required("loss_tp")?,
            s.parse_required("loss_fp")?,
            s.parse_required("loss_fn")?,
            s.parse_required("loss_tn")?,
        ),
        "detention" => LossQuartet::detention(DetentionTemplate {
            benefit: component(s, "benefit", &data.feature_names)?,
            detention_cost: component(s, "detention_cost", &data.feature_names)?,
            recidivism_cost: component(s, "recidivism_cost", &data.feature_names)?,
            group_weight: component(s, "group_weight", &data.feature_names)?,
        }),
        other => return config_err(format!("quartet must be `symmetric`, `constant` or `detention`, got `{other}`")),
    };
    let weights = observation_weights(&quartet, &data.features, &data.labels)?;
    let opts = LogisticOptions {
        intercept: s.parse_required("intercept")?,
        max_iterations: s.parse_required("max_iterations")?,
        ..LogisticOptions::default()
    };
    let lambda: f64 = s.parse_required("lambda")?;
    let fit = fit_weighted_logistic(&data.features, &data.labels, &weights, lambda, &opts)?;
    if fit.diverging {
        log::warn!("the weighted sample is separable; coefficients diverge without a penalty");
    }

    let mut rows = Vec::new();
    if fit.intercept {
        rows.push(vec!["intercept".to_string(), num(fit.coefficients[0])]);
    }
    for (name, b) in data.feature_names.iter().zip(fit.slopes().iter()) {
        rows.push(vec![name.clone(), num(*b)]);
    }
    dir.write_table("coefficients.csv", &["term", "coefficient"], &rows)?;

    let n = data.labels.len();
    let mut weighted_error = 0.0;
    let mut correct = 0usize;
    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let x: Vec<f64> = data.features.row(i).iter().copied().collect();
            let pred = classify(&fit, &x);
            if pred == data.labels[i] {
                correct += 1;
            } else {
                weighted_error += weights[i];
            }
            vec![
                (i + 1).to_string(),
                data.labels[i].to_string(),
                num(weights[i]),
                num(fit.decision_value(&x)),
                pred.to_string(),
            ]
        })
        .collect();
    dir.write_table("predictions.csv", &["row", "label", "weight", "decision", "predicted"], &rows)?;
    dir.note("accuracy", num(correct as f64 / n as f64));
    dir.note("weighted_error", num(weighted_error / n as f64));
    dir.note("converged", fit.converged.to_string());
    dir.note("diverging", fit.diverging.to_string());
    dir.note("objective", num(fit.objective_value));
    Ok(())
}

fn tensor_rank(s: &Settings, dir: &mut OutputDir) -> Result<()> {
    let path = s.input_path("data")?;
    let tensor = read_tensor_csv(&path)?;
    let k: usize = s.parse_required("k")?;
    let draws: usize = s.parse_required("draws")?;
    let seed = derive_seed(s.seed()?, NULL_STREAM);
    let report = rank_test(&tensor, k, s.parse("cap")?, draws, seed)?;
    let rows: Vec<Vec<String>> = report
        .modes
        .iter()
        .map(|t| {
            vec![
                t.mode.to_string(),
                t.dim.to_string(),
                opt_num(t.statistic),
                opt_num(t.p_value),
                t.degenerate.clone().unwrap_or_default(),
            ]
        })
        .collect();
    dir.write_table("rank_test.csv", &["mode", "dim", "statistic", "p_value", "excluded"], &rows)?;
    dir.note("p_mean", num(report.p_mean));
    dir.note("search_cap", report.cap.to_string());

    let rank = s.parse::<usize>("rank")?.unwrap_or(k.max(1));
    let pca = tensor_pca(&tensor, rank)?;
    let mut scree = Vec::new();
    for (j, spec) in pca.spectra.iter().enumerate() {
        for (i, v) in spec.iter().enumerate() {
            scree.push(vec![(j + 1).to_string(), (i + 1).to_string(), num(*v)]);
        }
    }
    dir.write_table("scree.csv", &["mode", "index", "eigenvalue"], &scree)?;
    let mut loadings = Vec::new();
    for (j, m) in pca.loadings.iter().enumerate() {
        for r in 0..m.ncols() {
            for i in 0..m.nrows() {
                loadings.push(vec![(j + 1).to_string(), (i + 1).to_string(), (r + 1).to_string(), num(m[(i, r)])]);
            }
        }
    }
    dir.write_table("loadings.csv", &["mode", "row", "factor", "loading"], &loadings)?;
    if let Some(sc) = &pca.joint_scales {
        let rows: Vec<Vec<String>> = sc.iter().enumerate().map(|(r, v)| vec![(r + 1).to_string(), num(*v)]).collect();
        dir.write_table("scales.csv", &["factor", "scale"], &rows)?;
    }
    Ok(())
}
