//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use covsteer::controllability::{canonical_pair, scalar_steering_u, ScalarSteeringProblem};
use covsteer::linalg::{frobenius, max_abs, min_eigenvalue, symmetrize};
use covsteer::sim::{NoiseComponent, NoiseKind, NoiseModel};
use covsteer::transition::{symplectic_residuals, transition_blocks};
use covsteer::{
    classify, construct_feasible_steering, derive_intensities, empirical_moments, estimate_cost, gramian_identity,
    jacobian_f, map_f, maximal_interval, optimal_cost, propagate_covariance, simulate_paths, solve_boundary,
    solve_closed_form, special_case_pi0, vec, BoundaryData, GainSchedule, MatrixPoly, Poly, SimulationConfig,
    SystemSpec, Tolerances,
};
use nalgebra::{dmatrix, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn tol() -> Tolerances<f64> {
    Tolerances::default()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn s1(q: f64) -> SystemSpec<f64> {
    SystemSpec::constant(&dmatrix![0.0], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0], 0.0, &dmatrix![q], &dmatrix![1.0])
}

fn example_system() -> SystemSpec<f64> {
    let (d, nu) = derive_intensities(&example_noise()).unwrap();
    SystemSpec::new(
        MatrixPoly::constant(&dmatrix![-2.0, 1.0; 0.0, 0.0]),
        MatrixPoly::constant(&dmatrix![0.0; 1.0]),
        MatrixPoly::constant(&dmatrix![1.0; 0.0]),
        d,
        nu,
        MatrixPoly::constant(&dmatrix![1.0, 0.0; 0.0, 0.0]),
        MatrixPoly::constant(&dmatrix![1.0]),
    )
}

fn example_noise() -> NoiseModel<f64> {
    NoiseModel {
        channels: 1,
        additive: vec![NoiseComponent {
            channel: 0,
            kind: NoiseKind::CompoundPoisson {
                rate: Poly::new(vec![3.0, 1.0]),
                jump_std: 0.5,
            },
        }],
        multiplicative: vec![NoiseKind::Wiener { rate: Poly::constant(1.0) }],
    }
}

fn example_boundary() -> BoundaryData<f64> {
    BoundaryData::new(DMatrix::identity(2, 2), dmatrix![0.3, 0.0; 0.0, 0.2]).unwrap()
}

fn random_poly_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> MatrixPoly<f64> {
    let coeffs = (0..rows * cols)
        .map(|_| (0..3).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
        .collect();
    MatrixPoly::from_coeffs(rows, cols, coeffs).unwrap()
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &l * l.transpose() * 0.5 + DMatrix::identity(n, n) * floor
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    symmetrize(&DMatrix::from_fn(n, n, |_, _| scale * rng.random_range(-1.0..1.0)))
}

/// Degree-2 `A`, a perturbed identity plus a `t²` term for `B`, `Q ≽ 0`,
/// diagonal `R ≻ 0`.
fn random_system(rng: &mut ChaCha8Rng, n: usize) -> SystemSpec<f64> {
    let a = random_poly_matrix(rng, n, n, 0.8);
    let b = MatrixPoly::identity(n).try_add(&random_poly_matrix(rng, n, n, 0.2)).unwrap();
    let q = random_spd(rng, n, 0.0);
    let r = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + rng.random_range(0.0..1.0) } else { 0.0 });
    let nu = 0.2 * rng.random_range(0.0..1.0);
    SystemSpec::new(
        a,
        b,
        MatrixPoly::identity(n),
        MatrixPoly::constant(&random_spd(rng, n, 0.1)),
        MatrixPoly::constant(&dmatrix![nu]),
        MatrixPoly::constant(&q),
        MatrixPoly::constant(&r),
    )
}

fn totally_controllable_system(rng: &mut ChaCha8Rng, n: usize) -> SystemSpec<f64> {
    loop {
        let sys = random_system(rng, n);
        if classify(&sys, 21, &tol()).totally_controllable {
            return sys;
        }
    }
}

/// Classical RK4 on a matrix ODE with a fixed step count.
fn rk4(mut y: DMatrix<f64>, t0: f64, t1: f64, steps: usize, f: impl Fn(f64, &DMatrix<f64>) -> DMatrix<f64>) -> DMatrix<f64> {
    let h = (t1 - t0) / steps as f64;
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + h / 2.0, &(&y + &k1 * (h / 2.0)));
        let k3 = f(t + h / 2.0, &(&y + &k2 * (h / 2.0)));
        let k4 = f(t + h, &(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

/// `Π' = −ĀᵀΠ − ΠĀ + ΠGΠ − Q` with `Ā = A + νI`, `G = BR⁻¹Bᵀ`.
fn riccati_rhs(sys: &SystemSpec<f64>) -> impl Fn(f64, &DMatrix<f64>) -> DMatrix<f64> + '_ {
    move |t, p| {
        let n = sys.n;
        let a = sys.a.evaluate(t, 0) + DMatrix::identity(n, n) * sys.nu.evaluate(t, 0)[(0, 0)];
        let b = sys.b.evaluate(t, 0);
        let g = &b * sys.r.evaluate(t, 0).try_inverse().unwrap() * b.transpose();
        -(a.transpose() * p) - p * &a + p * g * p - sys.q_weight.evaluate(t, 0)
    }
}

fn admissible_pi0(rng: &mut ChaCha8Rng, sys: &SystemSpec<f64>, sigma0: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scale = 0.5;
    loop {
        let p = random_sym(rng, sys.n, scale);
        if map_f(sys, sigma0, &p, &tol()).is_ok() {
            return p;
        }
        scale *= 0.5;
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let n = 1 + k % 3;
        let sys = totally_controllable_system(&mut rng, n);
        let s = rng.random_range(0.0..0.5);
        let t = rng.random_range(0.5..1.0);
        let b = transition_blocks(&sys, t, s, &tol()).map_err(|e| e.to_string())?;
        let r = symplectic_residuals(&sys, &b, &tol()).map_err(|e| e.to_string())?;
        let m = r
            .block_identities
            .iter()
            .chain(&r.off_diagonal_swap)
            .chain([&r.diagonal_swap, &r.inverse_row])
            .fold(0.0f64, |a, b| a.max(*b));
        worst = worst.max(m);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-8, || format!("max residual {worst:.3e} > 1e-8"))?;
    ensure(secs < 30.0, || format!("runtime {secs:.1}s ≥ 30s"))?;
    Ok(format!("max residual {worst:.2e} over 20 systems, {secs:.1}s"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let systems: Vec<_> = (0..5).map(|k| totally_controllable_system(&mut rng, 1 + k % 3)).collect();
    let mut worst = f64::INFINITY;
    let mut k = 0;
    while k < 50 {
        let sys = &systems[k % systems.len()];
        let mut ts = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        ts.sort_by(f64::total_cmp);
        let [s, t1, t2] = ts;
        if t1 - s < 1e-3 || t2 - t1 < 1e-3 {
            continue;
        }
        k += 1;
        let ratio = |t: f64| -> Result<DMatrix<f64>, String> {
            let b = transition_blocks(sys, t, s, &tol()).map_err(|e| e.to_string())?;
            Ok(b.phi11.clone().try_inverse().ok_or("singular Φ11")? * &b.phi12)
        };
        let d = -ratio(t2)? + ratio(t1)?;
        worst = worst.min(min_eigenvalue(&symmetrize(&d)));
    }
    ensure(worst > -1e-10, || format!("λ_min {worst:.3e} ≤ −1e-10"))?;
    Ok(format!("smallest eigenvalue {worst:.3e} over 50 triples"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let n = 1 + k % 3;
        let sys = totally_controllable_system(&mut rng, n);
        let mut scale = 0.5;
        let (pi0, direct) = loop {
            let pi0 = random_sym(&mut rng, n, scale);
            let direct: Vec<DMatrix<f64>> = (1..=4)
                .scan(pi0.clone(), |p, j| {
                    let t = j as f64 * 0.25;
                    *p = rk4(p.clone(), t - 0.25, t, 1000, riccati_rhs(&sys));
                    Some(p.clone())
                })
                .collect();
            if direct.iter().all(|p| max_abs(p).is_finite() && max_abs(p) < 1e3) {
                break (pi0, direct);
            }
            scale *= 0.5;
        };
        for (j, d) in direct.iter().enumerate() {
            let t = (j + 1) as f64 * 0.25;
            let closed = solve_closed_form(&sys, 0.0, &pi0, t, &tol()).map_err(|e| e.to_string())?;
            worst = worst.max(max_abs(&(closed - d)));
        }
    }
    ensure(worst <= 1e-7, || format!("max disagreement {worst:.3e} > 1e-7"))?;
    Ok(format!("max disagreement {worst:.2e} over 20 instances"))
}

fn criterion_4() -> Outcome {
    let mi = maximal_interval(&s1(0.0), 0.0, &dmatrix![2.0], (-2.0, 2.0), &tol()).map_err(|e| e.to_string())?;
    // Π = 2 / (1 − 2t)
    let err = (mi.t1 - 0.5).abs();
    ensure(err <= 1e-6 && !mi.t1_window_exceeded, || format!("t1 = {} (error {err:.3e})", mi.t1))?;
    Ok(format!("t1 = {:.10} (error {err:.2e})", mi.t1))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let sys = totally_controllable_system(&mut rng, 2);
        let s0 = random_spd(&mut rng, 2, 0.2);
        let pi0 = admissible_pi0(&mut rng, &sys, &s0);
        let ws = jacobian_f(&sys, &s0, &pi0, &tol()).map_err(|e| e.to_string())?;
        let h = 1e-4;
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let mut e = DMatrix::zeros(2, 2);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            let fp = map_f(&sys, &s0, &(&pi0 + &e * h), &tol()).map_err(|e| e.to_string())?;
            let fm = map_f(&sys, &s0, &(&pi0 - &e * h), &tol()).map_err(|e| e.to_string())?;
            let fd = vec(&((fp - fm) / (2.0 * h)));
            let lin = &ws.jac * vec(&e);
            worst = worst.max((&fd - &lin).norm() / lin.norm());
        }
    }
    let scalar = jacobian_f(&s1(0.0), &dmatrix![1.0], &dmatrix![0.0], &tol()).map_err(|e| e.to_string())?.jac[(0, 0)];
    ensure(worst <= 1e-5, || format!("relative error {worst:.3e} > 1e-5"))?;
    ensure((scalar + 3.0).abs() <= 1e-9, || format!("scalar Jacobian {scalar}"))?;
    Ok(format!("relative error {worst:.2e} over 10 instances, scalar value {scalar:.12}"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut sys = totally_controllable_system(&mut rng, 2);
        // noise entering through the control channel
        sys.c = sys.b.clone();
        let r_inv = sys.r.evaluate(0.0, 0).try_inverse().unwrap();
        sys.d = MatrixPoly::constant(&r_inv);
        let bd = BoundaryData::new(random_spd(&mut rng, 2, 0.3), random_spd(&mut rng, 2, 0.3)).unwrap();
        let pi0 = special_case_pi0(&sys, &bd, &tol()).map_err(|e| e.to_string())?;
        let f = map_f(&sys, &bd.sigma0, &pi0, &tol()).map_err(|e| e.to_string())?;
        worst = worst.max(frobenius(&(f - &bd.sigma1)));
    }
    let v0 = special_case_pi0(&s1(0.0), &BoundaryData::new(dmatrix![1.0], dmatrix![2.0]).unwrap(), &tol())
        .map_err(|e| e.to_string())?[(0, 0)];
    let v1 = special_case_pi0(&s1(0.0), &BoundaryData::new(dmatrix![1.0], dmatrix![0.5]).unwrap(), &tol())
        .map_err(|e| e.to_string())?[(0, 0)];
    // root of (1 − p)² + (1 − p) = 1/2
    let exact = (3.0 - 3f64.sqrt()) / 2.0;
    ensure(worst <= 1e-7, || format!("‖f(Π0) − Σ1‖ {worst:.3e} > 1e-7"))?;
    ensure(v0.abs() <= 1e-7, || format!("scalar value {v0} ≠ 0"))?;
    ensure((v1 - 0.6339746).abs() <= 1e-7 && (v1 - exact).abs() <= 1e-7, || format!("scalar value {v1}"))?;
    Ok(format!("max residual {worst:.2e}; scalar values {v0:.2e}, {v1:.9}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let n = 1 + k % 2;
        let sys = totally_controllable_system(&mut rng, n);
        let s0 = random_spd(&mut rng, n, 0.2);
        let pi0 = admissible_pi0(&mut rng, &sys, &s0);
        let s1m = symmetrize(&map_f(&sys, &s0, &pi0, &tol()).map_err(|e| e.to_string())?);
        let bd = BoundaryData::new(s0, s1m).map_err(|e| e.to_string())?;
        let sol = solve_boundary(&sys, &bd, 11, &tol()).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs(&(sol.pi0 - pi0)));
    }
    ensure(worst <= 1e-6, || format!("Π0 error {worst:.3e} > 1e-6"))?;
    Ok(format!("max Π0 error {worst:.2e} over 10 instances"))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let sys = example_system();
    let bd = example_boundary();
    let sol = solve_boundary(&sys, &bd, 101, &tol()).map_err(|e| e.to_string())?;
    let prop = propagate_covariance(&sys, &sol.pi0, &bd.sigma0, 101, &tol()).map_err(|e| e.to_string())?;
    let end = &prop.sigma_grid.last().unwrap().1;
    let err = max_abs(&(end - &bd.sigma1));
    let min_eig = prop.sigma_grid.iter().map(|(_, s)| min_eigenvalue(s)).fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    ensure(sol.residual <= 1e-8, || format!("residual {:.3e}", sol.residual))?;
    ensure(err <= 1e-6, || format!("Σ(1) error {err:.3e}"))?;
    ensure(prop.sigma_grid.len() == 101 && min_eig > 0.0, || format!("λ_min {min_eig}"))?;
    ensure(secs < 60.0, || format!("runtime {secs:.1}s"))?;
    Ok(format!(
        "residual {:.2e}, Σ(1) error {err:.2e}, min λ {min_eig:.4}, {secs:.2}s",
        sol.residual
    ))
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let sys = example_system();
    let bd = example_boundary();
    let sol = solve_boundary(&sys, &bd, 1001, &tol()).map_err(|e| e.to_string())?;
    let (times, gains) = sol.gain_grid.iter().cloned().unzip();
    let gain = GainSchedule::new(times, gains).map_err(|e| e.to_string())?;
    let n_paths = 100_000;
    let cfg = SimulationConfig::new(n_paths, 1e-3, 20240601, bd.sigma0.clone());
    let res = simulate_paths(&sys, &example_noise(), &gain, &cfg, &tol()).map_err(|e| e.to_string())?;
    let m = empirical_moments(&res, 1.0).map_err(|e| e.to_string())?;
    let cov = m.cov.ok_or("covariance undefined")?;
    let cov_err = frobenius(&(&cov - &bd.sigma1)) / frobenius(&bd.sigma1);
    let sigma_max = cov.symmetric_eigenvalues().max().sqrt();
    let mean_bound = 3.0 * sigma_max / (n_paths as f64).sqrt();
    let jump_err = (res.mean_jump_count - 3.5).abs() / 3.5;
    let cost = estimate_cost(&res).map_err(|e| e.to_string())?;
    let j = optimal_cost(&sys, &sol.pi0, &bd, &tol()).map_err(|e| e.to_string())?;
    let cost_err = (cost.mean - j).abs() / j.abs();
    let secs = start.elapsed().as_secs_f64();
    ensure(cov_err <= 0.05, || format!("covariance error {cov_err:.3e}"))?;
    ensure(m.mean.norm() <= mean_bound, || format!("‖mean‖ {:.3e} > {mean_bound:.3e}", m.mean.norm()))?;
    ensure(jump_err <= 0.02, || format!("jump count {} ", res.mean_jump_count))?;
    ensure(cost_err <= 0.05, || format!("cost {} vs {j}", cost.mean))?;
    ensure(secs < 300.0, || format!("runtime {secs:.1}s"))?;
    Ok(format!(
        "cov error {:.2}%, ‖mean‖ {:.2e} ≤ {mean_bound:.2e}, jumps {:.4}, cost {:.4} vs {j:.4}, {secs:.1}s",
        cov_err * 100.0,
        m.mean.norm(),
        res.mean_jump_count,
        cost.mean
    ))
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let sys = totally_controllable_system(&mut rng, 1 + k % 3);
        let s = rng.random_range(0.0..0.4);
        let t = rng.random_range(0.6..1.0);
        let pi_s = random_sym(&mut rng, sys.n, 0.2);
        let g = gramian_identity(&sys, (s, &pi_s), t, &tol()).map_err(|e| e.to_string())?;
        worst = worst.max(g.residual);
    }
    // with Π ≡ 0 and A = 0 the Gramian is t − s
    let g = gramian_identity(&s1(0.0), (0.2, &dmatrix![0.0]), 0.8, &tol()).map_err(|e| e.to_string())?;
    let hand = (g.mbar[(0, 0)] - 0.6).abs().max((g.rhs[(0, 0)] - 0.6).abs());
    ensure(worst <= 1e-7, || format!("residual {worst:.3e} > 1e-7"))?;
    ensure(hand <= 1e-7, || format!("scalar Gramian {} (expected 0.6)", g.mbar[(0, 0)]))?;
    Ok(format!("max residual {worst:.2e}, scalar Gramian error {hand:.2e}"))
}

fn criterion_11() -> Outcome {
    let cases: Vec<(usize, DMatrix<f64>, DMatrix<f64>, f64, f64, usize)> = vec![
        (1, dmatrix![1.0], dmatrix![0.5], 0.5, 0.0, 0),
        (1, dmatrix![1.0], dmatrix![3.0], 0.2, 0.4, 1),
        (2, DMatrix::identity(2, 2), dmatrix![2.0, 0.0; 0.0, 1.0], 1.0, 0.0, 0),
        (2, dmatrix![1.0, 0.2; 0.2, 0.5], dmatrix![0.3, -0.05; -0.05, 0.2], 0.25, 0.3, 1),
    ];
    let mut worst: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for (n, s0, s1m, m_scale, nu, h) in cases {
        let (a, b) = canonical_pair::<f64>(n);
        let bd = BoundaryData::new(s0.clone(), s1m.clone()).unwrap();
        let m = MatrixPoly::identity(n).scale(m_scale);
        let nu_p = MatrixPoly::constant(&dmatrix![nu]);
        let fs = construct_feasible_steering(&a, &b, &bd, &m, &nu_p, h, &tol()).map_err(|e| e.to_string())?;
        // independent re-integration of the closed loop
        let end = rk4(s0, 0.0, 1.0, 4000, |t, s| {
            let acl = &a + &b * fs.gain_at(t).unwrap();
            &acl * s + s * acl.transpose() + s * (2.0 * nu) + DMatrix::identity(n, n) * m_scale
        });
        worst = worst.max(max_abs(&(end - &s1m))).max(fs.verification.endpoint_error);
        min_eig = min_eig.min(fs.verification.min_eigenvalue);
        for k in 0..=100 {
            min_eig = min_eig.min(min_eigenvalue(&fs.sigma_at(k as f64 / 100.0)));
        }
    }
    let u = scalar_steering_u(&ScalarSteeringProblem::new(
        ScalarSteeringProblem::constant_weight(1.0),
        1.0,
        vec![0.0],
        vec![0.0],
        |_| -1.0,
    ))
    .map_err(|e| e.to_string())?;
    let parabola = (0..=100)
        .map(|k| k as f64 / 100.0)
        .map(|t| (u.value(t) - 6.0 * t * (1.0 - t)).abs())
        .fold(0.0f64, f64::max);
    ensure(worst <= 1e-6, || format!("endpoint error {worst:.3e} > 1e-6"))?;
    ensure(min_eig > 0.0, || format!("λ_min {min_eig}"))?;
    ensure(parabola <= 1e-12, || format!("scalar u differs from 6t(1−t) by {parabola:.3e}"))?;
    Ok(format!(
        "endpoint error {worst:.2e}, min λ {min_eig:.4}, |u − 6t(1−t)| ≤ {parabola:.1e}"
    ))
}

fn criterion_12() -> Outcome {
    let sys = example_system();
    let r = classify(&sys, 101, &tol());
    ensure(
        r.uniformly_controllable && r.totally_controllable && r.index_invariant,
        || format!("example pair: {r:?}"),
    )?;
    let mut zero = sys.clone();
    zero.b = MatrixPoly::zeros(2, 1);
    let z = classify(&zero, 101, &tol());
    ensure(!z.totally_controllable && !z.uniformly_controllable, || "B ≡ 0 reported controllable".into())?;
    Ok("example pair uniform, total and index-invariant; B ≡ 0 uncontrollable".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("symplectic identities", criterion_1),
        ("monotonicity", criterion_2),
        ("Riccati closed form", criterion_3),
        ("maximal interval", criterion_4),
        ("Jacobian", criterion_5),
        ("special-case closed form", criterion_6),
        ("boundary round trip", criterion_7),
        ("example end-to-end", criterion_8),
        ("Monte Carlo certification", criterion_9),
        ("Gramian identity", criterion_10),
        ("constructive steering", criterion_11),
        ("controllability classification", criterion_12),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
