use std::f64::consts::PI;
use std::str::FromStr;

use logz_lab::anneal::{build_schedule, estimate_z, estimate_z_mlmc, LangevinStage, MalaStage, MlmcStage, Truncation};
use logz_lab::langevin::{final_states, w2_gaussian, ChainConfig, GradMode, Scheme};
use logz_lab::ledger::{
    compare, lower_bound_eps_exponent, measured_gradient_counts, predict_cost, Metered, Method, QueryLedger, SweepParam,
};
use logz_lab::mala::{run_mala, MixingWrapper, StartLaw, StepOptions};
use logz_lab::mlmc::{fit_rates, level_statistics, mlmc_estimate, LangevinLevels, LevelStats};
use logz_lab::oracle::{hessian_extremes, HardInstance, NoiseConfig, Region, TypeChoice};
use logz_lab::quadrature::GaussLegendre;
use logz_lab::qwalk::{
    discretize_chain, effective_gap_profile, mixing_time, reference_chains, walk_spectrum, DiscreteChain, GridConfig,
    Kernel,
};
use logz_lab::stats::{coordinate_moments, dist_sq};
use logz_lab::{rng, Error, FunctionInstance, Potential};
use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::output::{int, num, Table};
use crate::CliError;

pub struct Outcome {
    pub table: Table,
    pub summary: Value,
}

/// Rows of the cost table relevant to one run.
pub fn predictions(methods: impl IntoIterator<Item = Method>, kappa: f64, d: f64, eps: f64) -> Value {
    let rows: Vec<Value> = methods
        .into_iter()
        .filter_map(|m| predict_cost(m, kappa, d, eps).ok().map(|c| json!({ "method": m.name(), "predicted_cost": c })))
        .collect();
    json!({ "kappa": kappa, "d": d, "eps": eps, "rows": rows })
}

fn invalid(name: &'static str, reason: impl Into<String>) -> CliError {
    Error::InvalidParameter { name, reason: reason.into() }.into()
}

fn function(cfg: &Config) -> Result<FunctionInstance, CliError> {
    let f: FunctionInstance = cfg.instance()?;
    f.validate()?;
    Ok(f)
}

fn scheme(name: &str) -> Result<Scheme, CliError> {
    match name {
        "uld" => Ok(Scheme::Uld),
        "uld_rmm" => Ok(Scheme::UldRmm),
        other => Err(Error::UnknownMethod(other.to_string()).into()),
    }
}

fn start_point(p: &dyn Potential, x0: Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
    let x = x0.unwrap_or_else(|| p.minimizer());
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: x.len() }.into());
    }
    Ok(x)
}

/// Target covariance when `exp(-f)` is a centred Gaussian with diagonal covariance.
fn gaussian_law(f: &FunctionInstance) -> Option<Vec<f64>> {
    match f {
        FunctionInstance::Gaussian { dim } => Some(vec![1.0; *dim]),
        FunctionInstance::DiagonalQuadratic { coeffs } => Some(coeffs.iter().map(|a| 1.0 / a).collect()),
        _ => None,
    }
}

/// `∫ exp(-f)` in closed form or by tensor Gauss–Legendre quadrature (d ≤ 2).
pub fn reference_z(f: &FunctionInstance) -> Option<f64> {
    match f {
        FunctionInstance::Gaussian { dim } => Some((2.0 * PI).powf(*dim as f64 / 2.0)),
        FunctionInstance::DiagonalQuadratic { coeffs } => Some(coeffs.iter().map(|a| (2.0 * PI / a).sqrt()).product()),
        FunctionInstance::Hard(h) if h.k <= 3 => Some(h.partition_function(24)),
        _ if f.dim() <= 2 => {
            let m = f.minimizer();
            let fm = f.value(&m);
            let r = 12.0 / f.convexity().sqrt();
            let gl = GaussLegendre::new(16);
            let mass = if f.dim() == 1 {
                gl.composite(-r, r, 64, |u| (fm - f.value(&[m[0] + u])).exp())
            } else {
                gl.composite_2d(-r, r, 64, |u, v| (fm - f.value(&[m[0] + u, m[1] + v])).exp())
            };
            Some(mass * (-fm).exp())
        }
        _ => None,
    }
}

fn moments_summary(xs: &[Vec<f64>], law: Option<&[f64]>) -> Result<Value, CliError> {
    let (mean, var) = coordinate_moments(xs);
    let w2 = match law {
        Some(cov) => Some(w2_gaussian(xs, &vec![0.0; cov.len()], cov)?),
        None => None,
    };
    Ok(json!({ "mean": mean, "variance": var, "w2_to_target": w2 }))
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleParams {
    x0: Option<Vec<f64>>,
    h: f64,
    t_end: f64,
    replicas: usize,
    noise: Option<NoiseConfig>,
    eta: Option<f64>,
    steps: usize,
    lazy: bool,
    wrapper_eps: Option<f64>,
    eps: f64,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            x0: None,
            h: 0.1,
            t_end: 10.0,
            replicas: 1000,
            noise: None,
            eta: None,
            steps: 1000,
            lazy: false,
            wrapper_eps: None,
            eps: 0.1,
        }
    }
}

pub fn sample(cfg: &Config, seed: u64, ledger: &QueryLedger) -> Result<Outcome, CliError> {
    let f = function(cfg)?;
    let p: SampleParams = cfg.params()?;
    let metered = Metered::new(&f, ledger);
    let method = cfg.method.as_deref().unwrap_or("uld");
    let d = f.dim();
    let law = gaussian_law(&f);
    let mut header: Vec<String> = vec!["index".into()];
    header.extend((0..d).map(|i| format!("x{i}")));
    let (table, mut summary, method) = if method == "mala" {
        let eta = p.eta.unwrap_or(0.5 / f.smoothness().sqrt());
        let start = match p.x0 {
            Some(x) => StartLaw::Point(start_point(&f, Some(x))?),
            None => StartLaw::GaussianLinv,
        };
        let wrapper = p.wrapper_eps.map(|e| MixingWrapper::for_target(f.condition_number(), d, e));
        let opts = StepOptions { lazy: p.lazy, ..StepOptions::default() };
        let run = run_mala(&metered, &start, eta, p.steps, &mut rng::stream(seed, 0), opts, wrapper)?;
        let mut t = Table::new(&header);
        for (i, x) in run.samples.iter().enumerate() {
            t.push(std::iter::once(int(i)).chain(x.iter().map(|&v| num(v))).collect());
        }
        let mut s = moments_summary(&run.samples, law.as_deref())?;
        s["eta"] = json!(eta);
        s["acceptance_rate"] = json!(run.acceptance_rate());
        s["proposals"] = json!(run.proposals);
        (t, s, Method::Mala)
    } else {
        let sch = scheme(method)?;
        let x0 = start_point(&f, p.x0)?;
        let grad = match p.noise {
            Some(n) => {
                n.validate()?;
                GradMode::Noisy(n)
            }
            None => GradMode::Exact,
        };
        let chain = ChainConfig { grad, ..ChainConfig::exact(sch, p.h, p.t_end) };
        let end = final_states(&metered, &x0, &chain, p.replicas, seed)?;
        if end.iter().any(|s| !s.is_finite()) {
            return Err(Error::Divergence { stage: 0 }.into());
        }
        header.extend((0..d).map(|i| format!("v{i}")));
        let mut t = Table::new(&header);
        for (i, s) in end.iter().enumerate() {
            t.push(std::iter::once(int(i)).chain(s.x.iter().chain(&s.v).map(|&v| num(v))).collect());
        }
        let xs: Vec<Vec<f64>> = end.into_iter().map(|s| s.x).collect();
        let mut s = moments_summary(&xs, law.as_deref())?;
        s["h"] = json!(p.h);
        s["t_end"] = json!(p.t_end);
        s["replicas"] = json!(p.replicas);
        (t, s, if sch == Scheme::Uld { Method::Uld } else { Method::UldRmm })
    };
    summary["method"] = json!(method.name());
    summary["predictions"] = predictions([method], f.condition_number(), d as f64, p.eps);
    Ok(Outcome { table, summary })
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimateParams {
    eps: f64,
    k: usize,
    steps: usize,
    eta_scale: f64,
    h: f64,
    t_scale: f64,
    truncate: bool,
    stage_rel_eps: Option<f64>,
    pool_h: f64,
    coarse_h: f64,
}

impl Default for EstimateParams {
    fn default() -> Self {
        Self {
            eps: 0.1,
            k: 2000,
            steps: 20,
            eta_scale: 0.5,
            h: 0.05,
            t_scale: 8.0,
            truncate: false,
            stage_rel_eps: None,
            pool_h: 0.05,
            coarse_h: 0.5,
        }
    }
}

pub fn estimate(cfg: &Config, seed: u64, ledger: &QueryLedger) -> Result<Outcome, CliError> {
    let f = function(cfg)?;
    let p: EstimateParams = cfg.params()?;
    let method = Method::from_str(cfg.method.as_deref().unwrap_or("annealing_mala"))?;
    let schedule = build_schedule(f.dim(), f.smoothness(), f.convexity(), p.eps)?;
    let m = schedule.stages();
    let truncation = p.truncate.then_some(Truncation { eps: p.eps });
    let est = match method {
        Method::AnnealingMala => {
            let sampler = MalaStage { steps: p.steps, eta_scale: p.eta_scale };
            estimate_z(&f, &schedule, &sampler, p.k, seed, truncation, Some(ledger))?
        }
        Method::Uld | Method::UldRmm => {
            let sch = if method == Method::Uld { Scheme::Uld } else { Scheme::UldRmm };
            let sampler = LangevinStage { scheme: sch, h: p.h, t_scale: p.t_scale };
            estimate_z(&f, &schedule, &sampler, p.k, seed, truncation, Some(ledger))?
        }
        Method::MultilevelUld | Method::MultilevelUldRmm => {
            let sch = if method == Method::MultilevelUld { Scheme::Uld } else { Scheme::UldRmm };
            let stage = MlmcStage {
                scheme: sch,
                t_scale: p.t_scale,
                stage_rel_eps: p.stage_rel_eps.unwrap_or(p.eps / (2.0 * m as f64)),
                pool_h: p.pool_h,
                coarse_h: p.coarse_h,
            };
            estimate_z_mlmc(&f, &schedule, &stage, p.k, seed, Some(ledger))?
        }
        other => return Err(Error::UnknownMethod(format!("{} cannot estimate Z", other.name())).into()),
    };
    let mut t = Table::new(&["stage", "sigma_sq", "mean_g", "rel_var", "evaluations", "gradients"]);
    for s in &est.stages {
        t.push(vec![
            int(s.stage),
            num(s.sigma_sq),
            num(s.mean_g),
            num(s.rel_var),
            int(s.oracle_calls.evaluations),
            int(s.oracle_calls.gradients),
        ]);
    }
    let reference = reference_z(&f);
    let rel = reference.map(|z| (est.z_hat / z - 1.0).abs());
    let estimation = Method::ALL.into_iter().filter(|m| m.is_estimation());
    let summary = json!({
        "method": method.name(),
        "eps": p.eps,
        "k": p.k,
        "stages": m,
        "z_hat": est.z_hat,
        "log_z_hat": est.log_z_hat,
        "reference_z": reference,
        "relative_error": rel,
        "predictions": predictions(estimation, f.condition_number(), f.dim() as f64, p.eps),
    });
    Ok(Outcome { table: t, summary })
}

/// Chain given by name, by an explicit reversible matrix, or by discretizing
/// a kernel for a function on a grid.
#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ChainSpec {
    Named { name: String },
    Matrix { p: Vec<Vec<f64>>, pi: Vec<f64> },
    Grid { function: FunctionInstance, grid: GridConfig, kernel: Kernel },
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct SpectrumParams {
    eps: Option<f64>,
    rho0: Option<Vec<f64>>,
}

fn matrix_chain(rows: Vec<Vec<f64>>, pi: Vec<f64>) -> Result<DiscreteChain, CliError> {
    let n = rows.len();
    if pi.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(invalid("p", "transition matrix must be square and match pi"));
    }
    let flat: Vec<f64> = rows.concat();
    let chain =
        DiscreteChain { grid: (0..n).map(|i| vec![i as f64]).collect(), p: DMatrix::from_row_slice(n, n, &flat), pi };
    let stochastic = rows.iter().all(|r| r.iter().all(|&v| v >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    if !stochastic || chain.balance_residual() > 1e-10 || chain.stationarity_residual() > 1e-10 {
        return Err(invalid("p", "not a reversible stochastic matrix for pi"));
    }
    Ok(chain)
}

pub fn spectrum(cfg: &Config, ledger: &QueryLedger) -> Result<Outcome, CliError> {
    let spec: ChainSpec = cfg.instance()?;
    let p: SpectrumParams = cfg.params()?;
    let mut preds = json!({ "rows": [] });
    let (name, chain) = match spec {
        ChainSpec::Named { name } => {
            let chain = reference_chains()?
                .into_iter()
                .find(|(n, _)| *n == name)
                .map(|(_, c)| c)
                .ok_or_else(|| invalid("name", format!("unknown reference chain {name:?}")))?;
            (name, chain)
        }
        ChainSpec::Matrix { p, pi } => ("matrix".to_string(), matrix_chain(p, pi)?),
        ChainSpec::Grid { function, grid, kernel } => {
            function.validate()?;
            let metered = Metered::new(&function, ledger);
            let chain = discretize_chain(&metered, &grid, kernel)?;
            let quantum = Method::ALL.into_iter().filter(|m| m.is_quantum() && !m.is_estimation());
            preds = predictions(quantum, function.condition_number(), function.dim() as f64, p.eps.unwrap_or(0.1));
            ("grid".to_string(), chain)
        }
    };
    let ws = walk_spectrum(&chain)?;
    let mut t = Table::new(&["kind", "index", "value"]);
    for (i, &l) in ws.disc_eigs.iter().enumerate() {
        t.push(vec!["disc_eig".into(), int(i), num(l)]);
    }
    for (i, &ph) in ws.phases.iter().enumerate() {
        t.push(vec!["phase".into(), int(i), num(ph)]);
    }
    let mut summary = json!({
        "chain": name,
        "states": chain.len(),
        "disc_eigs": ws.disc_eigs,
        "phases": ws.phases,
        "delta": ws.delta,
        "phase_gap": ws.phase_gap,
        "dense_residual": ws.dense_residual,
        "balance_residual": chain.balance_residual(),
        "predictions": preds,
    });
    if let Some(eps) = p.eps {
        summary["t_mix"] = json!(mixing_time(&chain, eps, 48)?);
        if let Some(rho0) = p.rho0 {
            summary["gap_profile"] = serde_json::to_value(effective_gap_profile(&chain, &rho0, eps)?)?;
        }
    }
    Ok(Outcome { table: t, summary })
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MlmcParams {
    x0: Option<Vec<f64>>,
    t_end: f64,
    eps: Option<f64>,
    samples: Vec<u64>,
    base_steps: u64,
    cap: f64,
}

impl Default for MlmcParams {
    fn default() -> Self {
        Self { x0: None, t_end: 1.0, eps: None, samples: vec![10_000; 6], base_steps: 1, cap: 100.0 }
    }
}

fn level_table(levels: &[LevelStats]) -> Table {
    let mut t = Table::new(&["level", "n_steps", "mean_diff", "var_diff", "cost", "samples", "rejected"]);
    for l in levels {
        t.push(vec![
            int(l.level),
            int(l.n_steps),
            num(l.mean_diff),
            num(l.var_diff),
            num(l.cost),
            int(l.samples),
            int(l.rejected),
        ]);
    }
    t
}

/// Multilevel estimate of `E min(‖x_T − x*‖², cap)` under the chosen scheme.
pub fn mlmc(cfg: &Config, seed: u64, ledger: &QueryLedger) -> Result<Outcome, CliError> {
    let f = function(cfg)?;
    let p: MlmcParams = cfg.params()?;
    let name = cfg.method.as_deref().unwrap_or("uld");
    let sch = scheme(name)?;
    let x0 = start_point(&f, p.x0)?;
    let star = f.minimizer();
    let cap = p.cap;
    let payoff = move |x: &[f64]| dist_sq(x, &star).min(cap);
    let metered = Metered::new(&f, ledger);
    let levels = LangevinLevels::new(&metered, payoff, x0, p.t_end, sch)?.with_base_steps(p.base_steps);
    let method = if sch == Scheme::Uld { Method::MultilevelUld } else { Method::MultilevelUldRmm };
    let mut summary = json!({ "method": name, "t_end": p.t_end });
    let stats = match p.eps {
        Some(eps) => {
            let r = mlmc_estimate(&levels, eps, seed)?;
            summary["eps"] = json!(eps);
            summary["estimate"] = json!(r.estimate);
            summary["total_cost"] = json!(r.total_cost);
            summary["alpha"] = json!(r.alpha);
            summary["beta"] = json!(r.beta);
            summary["predictions"] = predictions([method], f.condition_number(), f.dim() as f64, eps);
            r.levels
        }
        None => {
            let stats = level_statistics(&levels, &p.samples, seed);
            match fit_rates(&stats) {
                Ok((a, b, g)) => {
                    summary["alpha"] = json!(a);
                    summary["beta"] = json!(b);
                    summary["gamma"] = json!(g);
                }
                Err(e) => summary["rate_fit_error"] = json!(e.to_string()),
            }
            summary["predictions"] = predictions([method], f.condition_number(), f.dim() as f64, 0.1);
            stats
        }
    };
    Ok(Outcome { table: level_table(&stats), summary })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HardSpec {
    k: usize,
    n: usize,
    delta: f64,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct HardParams {
    nodes: usize,
    hessian_points: usize,
    eps: f64,
}

impl Default for HardParams {
    fn default() -> Self {
        Self { nodes: 24, hessian_points: 400, eps: 0.1 }
    }
}

/// The pair of instances sharing one cell permutation, with their partition gap.
pub fn hard_instance(cfg: &Config, seed: u64, ledger: &QueryLedger) -> Result<Outcome, CliError> {
    let spec: HardSpec = cfg.instance()?;
    let p: HardParams = cfg.params()?;
    let make = |c| HardInstance::generate(spec.k, spec.n, spec.delta, c, &mut rng::stream(seed, 0));
    let (h1, h2) = (make(TypeChoice::MajorityType1)?, make(TypeChoice::MajorityType2)?);
    let d1 = h1.cell_deficits(p.nodes);
    let z1 = h1.partition_function(p.nodes);
    let z2 = h2.partition_function(p.nodes);
    let z0 = h1.gaussian_mass();
    let l = h1.half_width;
    let f2 = FunctionInstance::Hard(h2.clone());
    let metered = Metered::new(&f2, ledger);
    let (lo, hi) = hessian_extremes(&metered, &Region::cube(spec.k, 1.2), p.hessian_points)?;

    let mut header: Vec<String> = vec!["cell".into()];
    header.extend((0..spec.k).map(|i| format!("center{i}")));
    header.extend(["type2_majority1", "type2_majority2", "deficit"].map(String::from));
    let mut t = Table::new(&header);
    for (c, &deficit) in d1.iter().enumerate() {
        let mut row = vec![int(c)];
        row.extend(h1.cell_center(c).into_iter().map(num));
        row.extend([int(u8::from(h1.type_bits[c])), int(u8::from(h2.type_bits[c])), num(deficit)]);
        t.push(row);
    }
    let gap = (z1 - z2) / z0;
    let estimation = Method::ALL.into_iter().filter(|m| m.is_estimation());
    let summary = json!({
        "k": spec.k,
        "n": spec.n,
        "delta": spec.delta,
        "cell_half_width": l,
        "gaussian_mass": z0,
        "z_majority_type1": z1,
        "z_majority_type2": z2,
        "relative_gap": gap,
        "gap_constant": gap / (l * l * spec.delta),
        "hessian_min": lo,
        "hessian_max": hi,
        "lower_bound_eps_exponent": lower_bound_eps_exponent(spec.k),
        "instances": [FunctionInstance::Hard(h1), f2],
        "predictions": predictions(estimation, hi / lo, spec.k as f64, p.eps),
    });
    Ok(Outcome { table: t, summary })
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LedgerParams {
    eps: Vec<f64>,
    measure: bool,
    x0: Option<Vec<f64>>,
    t_end: f64,
    replicas: usize,
}

impl Default for LedgerParams {
    fn default() -> Self {
        Self { eps: vec![0.1, 0.05, 0.02, 0.01], measure: true, x0: None, t_end: 2.0, replicas: 200 }
    }
}

/// Predicted costs of every method (or the chosen one) over `eps`, and for
/// ULD-type methods the measured gradient counts along the same sweep.
pub fn ledger_report(cfg: &Config, seed: u64, ledger: &QueryLedger) -> Result<Outcome, CliError> {
    let f = function(cfg)?;
    let p: LedgerParams = cfg.params()?;
    let methods: Vec<Method> = match cfg.method.as_deref() {
        Some(m) => vec![Method::from_str(m)?],
        None => Method::ALL.to_vec(),
    };
    let (kappa, d) = (f.condition_number(), f.dim() as f64);
    let mut t = Table::new(&["method", "kappa", "d", "eps", "predicted", "measured"]);
    let mut reports = Vec::new();
    for &m in &methods {
        let sch = match m {
            Method::Uld => Some(Scheme::Uld),
            Method::UldRmm => Some(Scheme::UldRmm),
            _ => None,
        };
        let measured = match sch {
            Some(s) if p.measure => {
                // started off the minimizer so the deterministic part of the error is nonzero
                let x0 = match p.x0.clone() {
                    Some(x) => start_point(&f, Some(x))?,
                    None => f.minimizer().iter().map(|v| v + 1.0).collect(),
                };
                let metered = Metered::new(&f, ledger);
                let pts = measured_gradient_counts(&metered, &x0, s, p.t_end, &p.eps, p.replicas, seed)?;
                if pts.len() >= 3 {
                    reports.push(serde_json::to_value(compare(m, SweepParam::Eps, &pts)?)?);
                }
                Some(pts)
            }
            _ => None,
        };
        for (i, &eps) in p.eps.iter().enumerate() {
            let pred = predict_cost(m, kappa, d, eps)?;
            let meas = measured.as_ref().map_or(String::new(), |pts| num(pts[i].measured));
            t.push(vec![m.name().into(), num(kappa), num(d), num(eps), num(pred), meas]);
        }
    }
    let lower: Vec<Value> = (1..=4).map(|k| json!({ "k": k, "eps_exponent": lower_bound_eps_exponent(k) })).collect();
    let exponents: Vec<Value> =
        methods.iter().map(|m| json!({ "method": m.name(), "eps_exponent": m.eps_exponent() })).collect();
    let eps0 = p.eps.first().copied().unwrap_or(0.1);
    let summary = json!({
        "kappa": kappa,
        "d": d,
        "eps": p.eps,
        "eps_exponents": exponents,
        "measured_sweeps": reports,
        "lower_bound": lower,
        "predictions": predictions(methods, kappa, d, eps0),
    });
    Ok(Outcome { table: t, summary })
}
