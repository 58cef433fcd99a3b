use covsteer::linalg::{frobenius, max_eigenvalue, min_eigenvalue};
use covsteer::sim::{envelope, NoiseKind};
use covsteer::{
    classify as classify_pair, construct_feasible_steering, estimate_cost, simulate_paths, solve_boundary,
    validate_system, GainSchedule, SimulationConfig, SimulationResult, SteeringSolution,
};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::config::{GainChoice, RunConfig};
use crate::output::{fmt_num, matrix_header, matrix_series, nested, row_major, Writer};
use crate::CliError;

fn header(first: &[&str], rest: Vec<String>) -> Vec<String> {
    first.iter().map(|s| s.to_string()).chain(rest).collect()
}

fn vector_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

pub fn validate(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let sys = cfg.system()?;
    let tol = cfg.tolerances();
    let report = validate_system(&sys, &tol)?;
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| json!({"name": c.name, "passed": c.passed, "failedAt": c.failed_at, "message": c.message}))
        .collect();
    let boundary = cfg.boundary().map(|_| ());
    let passed = report.passed() && boundary.is_ok();
    w.json(
        "validation.json",
        &json!({
            "passed": passed,
            "checks": checks,
            "boundary": boundary.as_ref().err().map(ToString::to_string),
        }),
    )?;
    boundary?;
    if let Some(f) = report.failures().next() {
        return Err(covsteer::Error::Precondition(f.message.clone().unwrap_or_else(|| f.name.clone())).into());
    }
    println!("validation passed ({} checks)", report.checks.len());
    Ok(())
}

pub fn classify(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let sys = cfg.system()?;
    let tol = cfg.tolerances();
    validate_system(&sys, &tol)?;
    let r = classify_pair(&sys, cfg.options.grid, &tol);
    w.json(
        "controllability.json",
        &json!({
            "totallyControllable": r.totally_controllable,
            "uniformlyControllable": r.uniformly_controllable,
            "indexInvariant": r.index_invariant,
            "gridTimes": r.grid_times,
            "thetaRanks": r.theta_ranks,
            "witnesses": r.witnesses,
            "subintervalWitnesses": r.subinterval_witnesses,
            "probesPerSubinterval": r.probes_per_subinterval,
        }),
    )?;
    println!(
        "total: {}, uniform: {}, index-invariant: {}",
        r.totally_controllable, r.uniformly_controllable, r.index_invariant
    );
    Ok(())
}

pub fn solve(cfg: &RunConfig, w: &mut Writer) -> Result<SteeringSolution<f64>, CliError> {
    let sys = cfg.system()?;
    let bd = cfg.boundary()?;
    let tol = cfg.tolerances();
    let sol = solve_boundary(&sys, &bd, cfg.options.grid, &tol)?;
    let (n, p) = (sys.n, sys.p);
    w.csv("gain.csv", &header(&["t"], matrix_header("K", p, n)), &matrix_series(&sol.gain_grid))?;
    w.csv("covariance.csv", &header(&["t"], matrix_header("Sigma", n, n)), &matrix_series(&sol.sigma_grid))?;
    w.csv("pi.csv", &header(&["t"], matrix_header("Pi", n, n)), &matrix_series(&sol.pi_grid))?;
    let trace: Vec<Value> = sol
        .newton_trace
        .iter()
        .map(|s| {
            json!({
                "phase": format!("{:?}", s.phase),
                "iteration": s.iteration,
                "residual": s.residual,
                "stepLength": s.step_length,
                "halvings": s.halvings,
            })
        })
        .collect();
    w.json(
        "cost.json",
        &json!({
            "optimalCost": sol.optimal_cost,
            "pi0": nested(&sol.pi0),
            "residual": sol.residual,
            "propagationCheck": sol.propagation_check,
            "newtonTrace": trace,
        }),
    )?;
    println!("optimal cost {}, residual {:e}", fmt_num(sol.optimal_cost), sol.residual);
    Ok(sol)
}

pub fn construct(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let sys = cfg.system()?;
    let bd = cfg.boundary()?;
    let tol = cfg.tolerances();
    validate_system(&sys, &tol)?;
    if sys.a.max_degree() > 0 || sys.b.max_degree() > 0 {
        return Err(covsteer::Error::Precondition("construct requires constant A and B".into()).into());
    }
    let reduced = sys.identity_channel_reduction(tol.validation_grid)?;
    let m = reduced.c.try_mul(&reduced.d)?.try_mul(&reduced.c.transpose())?;
    let a = reduced.a.evaluate(0.0, 0);
    let b = reduced.b.evaluate(0.0, 0);
    let fs = construct_feasible_steering(&a, &b, &bd, &m, &reduced.nu, cfg.options.construct_order, &tol)?;
    let (n, p) = (sys.n, sys.p);
    let series = |ms: &[DMatrix<f64>]| -> Vec<(f64, DMatrix<f64>)> {
        fs.times.iter().copied().zip(ms.iter().cloned()).collect()
    };
    w.csv(
        "construct_gain.csv",
        &header(&["t"], matrix_header("K", p, n)),
        &matrix_series(&series(&fs.gain_grid)),
    )?;
    w.csv(
        "construct_covariance.csv",
        &header(&["t"], matrix_header("Sigma", n, n)),
        &matrix_series(&series(&fs.sigma_grid)),
    )?;
    w.csv(
        "construct_u.csv",
        &header(&["t"], matrix_header("U", n, p)),
        &matrix_series(&series(&fs.u_grid)),
    )?;
    let layers: Vec<Value> = fs
        .layer_trace
        .iter()
        .map(|l| {
            json!({
                "k": l.k,
                "order": l.h,
                "alpha": l.alpha,
                "beta": l.beta,
                "gamma": l.gamma,
                "sigmaStar0": l.sigma_star0,
                "sigmaStar1": l.sigma_star1,
                "polynomial": l.poly.coeffs(),
                "c0": l.c0,
                "d0": l.d0,
                "floorMargin": l.floor_margin,
                "integralResidual": l.integral_residual,
            })
        })
        .collect();
    let v = &fs.verification;
    let ok = v.endpoint_error <= 1e-6 && v.min_eigenvalue > 0.0;
    w.json(
        "construct.json",
        &json!({
            "canonical": {
                "T": nested(&fs.canonical.t),
                "F": nested(&fs.canonical.f),
                "v": fs.canonical.v.as_slice(),
                "aResidual": fs.canonical.a_residual,
                "bResidual": fs.canonical.b_residual,
            },
            "layers": layers,
            "verification": {
                "endpointError": v.endpoint_error,
                "maxDeviation": v.max_deviation,
                "minEigenvalue": v.min_eigenvalue,
                "constructionError": v.construction_error,
                "passed": ok,
            },
        }),
    )?;
    println!(
        "endpoint error {:e}, min eigenvalue {}",
        v.endpoint_error,
        fmt_num(v.min_eigenvalue)
    );
    if !ok {
        return Err(CliError::Mismatch(format!(
            "re-integrated closed loop misses Sigma1 by {:e} (min eigenvalue {:e})",
            v.endpoint_error, v.min_eigenvalue
        )));
    }
    Ok(())
}

fn run_simulation(cfg: &RunConfig, w: &mut Writer, gain: GainSchedule<f64>) -> Result<SimulationResult<f64>, CliError> {
    let sys = cfg.system()?;
    let bd = cfg.boundary()?;
    let tol = cfg.tolerances();
    let noise = cfg
        .noise_model()?
        .ok_or_else(|| CliError::Config("simulation requires a noise model".into()))?;
    let o = &cfg.options;
    let mut sc = SimulationConfig::new(o.num_paths, o.step_size, o.seed, bd.sigma0.clone());
    sc.retain_paths = o.retain_paths;
    let res = simulate_paths(&sys, &noise, &gain, &sc, &tol)?;
    let (n, p) = (sys.n, sys.p);

    let moments: Vec<Vec<f64>> = res
        .checkpoints
        .iter()
        .zip(&res.mean)
        .zip(&res.cov)
        .map(|((t, m), c)| {
            let cov = c.clone().unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
            std::iter::once(*t).chain(m.iter().copied()).chain(row_major(&cov)).collect()
        })
        .collect();
    w.csv(
        "moments.csv",
        &header(&["t"], [vector_header("mean", n), matrix_header("cov", n, n)].concat()),
        &moments,
    )?;
    let env: Vec<Vec<f64>> = envelope(&res)
        .into_iter()
        .map(|(t, lo, hi)| std::iter::once(t).chain(lo).chain(hi).collect())
        .collect();
    w.csv(
        "envelope.csv",
        &header(&["t"], [vector_header("lower", n), vector_header("upper", n)].concat()),
        &env,
    )?;
    if let Some(paths) = &res.paths {
        let rows: Vec<Vec<f64>> = paths
            .iter()
            .map(|s| {
                [s.t, s.path_id as f64]
                    .into_iter()
                    .chain(s.x.iter().copied())
                    .chain(s.u.iter().copied())
                    .collect()
            })
            .collect();
        w.csv(
            "paths.csv",
            &header(&["t", "path_id"], [vector_header("x", n), vector_header("u", p)].concat()),
            &rows,
        )?;
    }
    let cost = estimate_cost(&res).ok();
    let last = res.checkpoints.len() - 1;
    w.json(
        "simulation.json",
        &json!({
            "numPaths": res.num_paths,
            "steps": res.steps,
            "stepSize": res.step_size,
            "masterSeed": res.master_seed,
            "meanJumpCount": res.mean_jump_count,
            "terminalMean": res.mean[last].as_slice(),
            "terminalCovariance": res.cov[last].as_ref().map(nested),
            "cost": cost.map(|c| json!({"mean": c.mean, "halfWidth": c.half_width, "stdDev": c.std_dev})),
        }),
    )?;
    Ok(res)
}

fn schedule(sol: &SteeringSolution<f64>) -> Result<GainSchedule<f64>, CliError> {
    let (times, gains) = sol.gain_grid.iter().cloned().unzip();
    Ok(GainSchedule::new(times, gains)?)
}

pub fn simulate(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let gain = match cfg.options.gain {
        GainChoice::Optimal => {
            let sys = cfg.system()?;
            let sol = solve_boundary(&sys, &cfg.boundary()?, cfg.options.grid, &cfg.tolerances())?;
            schedule(&sol)?
        }
        GainChoice::Zero => {
            let sys = cfg.system()?;
            GainSchedule::zero(sys.p, sys.n)
        }
    };
    let res = run_simulation(cfg, w, gain)?;
    println!("simulated {} paths over {} steps", res.num_paths, res.steps);
    Ok(())
}

/// `∫₀¹ λ` summed over every compound-Poisson component.
fn expected_jumps(cfg: &RunConfig) -> Result<f64, CliError> {
    let Some(noise) = cfg.noise_model()? else {
        return Ok(0.0);
    };
    Ok(noise
        .additive
        .iter()
        .map(|c| &c.kind)
        .chain(&noise.multiplicative)
        .map(|k| match k {
            NoiseKind::CompoundPoisson { rate, .. } => rate.integral().eval(1.0, 0),
            NoiseKind::Wiener { .. } => 0.0,
        })
        .sum())
}

pub fn certify(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let tol_rel = cfg.options.certify_tolerance;
    if !(tol_rel > 0.0) {
        return Err(CliError::Config("certifyTolerance must be positive".into()));
    }
    let sol = solve(cfg, w)?;
    let res = run_simulation(cfg, w, schedule(&sol)?)?;
    let bd = cfg.boundary()?;
    let n_paths = res.num_paths as f64;
    let last = res.checkpoints.len() - 1;

    let cov = res.cov[last]
        .clone()
        .ok_or_else(|| CliError::Config("certification needs at least two paths".into()))?;
    let cov_err = frobenius(&(&cov - &bd.sigma1)) / frobenius(&bd.sigma1);
    let mean: &DVector<f64> = &res.mean[last];
    let mean_bound = 3.0 * max_eigenvalue(&cov).max(0.0).sqrt() / n_paths.sqrt();
    let cost = estimate_cost(&res)?;
    let cost_err = (cost.mean - sol.optimal_cost).abs() / sol.optimal_cost.abs().max(f64::MIN_POSITIVE);
    let jumps = expected_jumps(cfg)?;
    let jump_err = if jumps > 0.0 {
        (res.mean_jump_count - jumps).abs() / jumps
    } else {
        res.mean_jump_count
    };
    let min_eig = sol.sigma_grid.iter().map(|(_, s)| min_eigenvalue(s)).fold(f64::INFINITY, f64::min);

    let checks = [
        ("covariance", cov_err <= tol_rel),
        ("mean", mean.norm() <= mean_bound),
        ("cost", cost_err <= tol_rel),
        ("jumps", jump_err <= 0.02),
        ("positivity", min_eig > 0.0),
    ];
    let passed = checks.iter().all(|c| c.1);
    let pct = (tol_rel * 1e4).round() / 100.0;
    let verdict = if passed { format!("PASS (≤{pct}%)") } else { format!("FAIL (>{pct}%)") };
    w.json(
        "certify.json",
        &json!({
            "verdict": verdict,
            "passed": passed,
            "tolerance": tol_rel,
            "covarianceRelativeError": cov_err,
            "terminalCovariance": nested(&cov),
            "meanNorm": mean.norm(),
            "meanBound": mean_bound,
            "costEstimate": cost.mean,
            "costHalfWidth": cost.half_width,
            "optimalCost": sol.optimal_cost,
            "costRelativeError": cost_err,
            "meanJumpCount": res.mean_jump_count,
            "expectedJumpCount": jumps,
            "jumpRelativeError": jump_err,
            "minSigmaEigenvalue": min_eig,
            "checks": checks.iter().map(|(k, v)| json!({"name": k, "passed": v})).collect::<Vec<_>>(),
        }),
    )?;
    println!("covariance error {cov_err:.4e}, cost error {cost_err:.4e}, jumps error {jump_err:.4e}");
    println!("{verdict}");
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
        Err(CliError::Mismatch(format!("certification failed: {}", failed.join(", "))))
    }
}
