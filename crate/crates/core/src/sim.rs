//! Monte Carlo simulation of the closed-loop jump diffusion, with empirical
//! moments and cost estimates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::matfun::{MatrixPoly, Poly};
use crate::scalar::{from_usize, lit, Scalar};
use crate::system::{grid_times, SystemSpec};
use crate::tolerances::Tolerances;

/// Law of one scalar martingale.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind<T> {
    /// Brownian motion with `dE[w²]/dt = rate(t)`.
    Wiener { rate: Poly<T> },
    /// Mean-zero Gaussian jumps `χ ∼ N(0, σ²)` arriving at intensity `λ(t)`.
    CompoundPoisson { rate: Poly<T>, jump_std: T },
}

impl<T: Scalar> NoiseKind<T> {
    /// `dE[m²]/dt`
    pub fn intensity(&self) -> Poly<T> {
        match self {
            Self::Wiener { rate } => rate.clone(),
            Self::CompoundPoisson { rate, jump_std } => rate.scale(*jump_std * *jump_std),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseComponent<T> {
    /// Index into the additive noise vector `m`.
    pub channel: usize,
    pub kind: NoiseKind<T>,
}

/// `additive` drives `m` (dimension `channels`); every multiplicative
/// component adds to the scalar `μ` of the identity channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel<T> {
    pub channels: usize,
    pub additive: Vec<NoiseComponent<T>>,
    pub multiplicative: Vec<NoiseKind<T>>,
}

/// `D(t)` (diagonal, `channels × channels`) and `ν(t)` (`1 × 1`).
pub fn derive_intensities<T: Scalar>(noise: &NoiseModel<T>) -> Result<(MatrixPoly<T>, MatrixPoly<T>)> {
    let q = noise.channels;
    let mut diag = vec![Poly::zero(); q];
    for c in &noise.additive {
        if c.channel >= q {
            return Err(Error::DimensionMismatch(format!(
                "noise channel {} with {} channels",
                c.channel, q
            )));
        }
        diag[c.channel] = &diag[c.channel] + &c.kind.intensity();
    }
    let mut entries = vec![Poly::zero(); q * q];
    for (i, p) in diag.into_iter().enumerate() {
        entries[i + i * q] = p;
    }
    let two_nu = noise
        .multiplicative
        .iter()
        .fold(Poly::zero(), |acc, k| &acc + &k.intensity());
    Ok((
        MatrixPoly::from_entries(q, q, entries)?,
        MatrixPoly::scalar(two_nu.scale(lit(0.5))),
    ))
}

/// Piecewise-linear gain `K(t)` through tabulated values.
#[derive(Debug, Clone)]
pub struct GainSchedule<T: Scalar> {
    pub times: Vec<T>,
    pub gains: Vec<DMatrix<T>>,
}

impl<T: Scalar> GainSchedule<T> {
    pub fn new(times: Vec<T>, gains: Vec<DMatrix<T>>) -> Result<Self> {
        if times.is_empty() || times.len() != gains.len() {
            return Err(Error::InvalidArgument("gain grid is empty or ragged".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("gain grid times must increase".into()));
        }
        Ok(Self { times, gains })
    }

    pub fn zero(p: usize, n: usize) -> Self {
        Self {
            times: vec![T::zero(), T::one()],
            gains: vec![DMatrix::zeros(p, n); 2],
        }
    }

    pub fn at(&self, t: T) -> DMatrix<T> {
        let ts = &self.times;
        if t <= ts[0] {
            return self.gains[0].clone();
        }
        if t >= ts[ts.len() - 1] {
            return self.gains[ts.len() - 1].clone();
        }
        let j = ts.partition_point(|s| *s <= t) - 1;
        let w = (t - ts[j]) / (ts[j + 1] - ts[j]);
        &self.gains[j] * (T::one() - w) + &self.gains[j + 1] * w
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig<T: Scalar> {
    pub num_paths: usize,
    /// Requested `Δt`; the grid uses `1/⌈1/Δt⌉`.
    pub step_size: T,
    pub master_seed: u64,
    /// Covariance of the zero-mean Gaussian initial state.
    pub sigma0: DMatrix<T>,
    /// Times at which moments are accumulated; snapped to the step grid.
    pub checkpoints: Vec<T>,
    /// How many leading paths to keep in full.
    pub retain_paths: usize,
    pub record_costs: bool,
}

impl<T: Scalar> SimulationConfig<T> {
    pub fn new(num_paths: usize, step_size: T, master_seed: u64, sigma0: DMatrix<T>) -> Self {
        Self {
            num_paths,
            step_size,
            master_seed,
            sigma0,
            checkpoints: grid_times(101).collect(),
            retain_paths: 10,
            record_costs: true,
        }
    }
}

/// One row of a retained path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample<T> {
    pub t: T,
    pub path_id: usize,
    pub x: Vec<T>,
    pub u: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct CostEstimate<T> {
    pub mean: T,
    /// 95% normal-approximation half-width, `1.96 sd / √N`.
    pub half_width: T,
    pub std_dev: T,
}

#[derive(Debug, Clone)]
pub struct SimulationResult<T: Scalar> {
    pub num_paths: usize,
    pub steps: usize,
    pub step_size: T,
    pub master_seed: u64,
    pub checkpoints: Vec<T>,
    pub mean: Vec<DVector<T>>,
    /// Unbiased; `None` when a single path was simulated.
    pub cov: Vec<Option<DMatrix<T>>>,
    /// Rows sorted by time, then path id.
    pub paths: Option<Vec<PathSample<T>>>,
    pub path_costs: Option<Vec<T>>,
    pub mean_jump_count: T,
}

#[derive(Debug, Clone)]
pub struct Moments<T: Scalar> {
    pub t: T,
    pub mean: DVector<T>,
    pub cov: Option<DMatrix<T>>,
}

/// Coefficients frozen at the start of each step, row-major and flat.
struct StepData<T> {
    acl: Vec<T>,
    k: Vec<T>,
    c: Vec<T>,
    q: Vec<T>,
    r: Vec<T>,
    /// `√(rate(t_j) Δt)` per Wiener component, zero for jump components.
    sd: Vec<T>,
}

struct Sums<T> {
    s1: Vec<T>,
    s2: Vec<T>,
    costs: Vec<T>,
    jumps: u64,
    paths: Vec<PathSample<T>>,
}

impl<T: Scalar> Sums<T> {
    fn new(n: usize, checkpoints: usize) -> Self {
        Self {
            s1: vec![T::zero(); checkpoints * n],
            s2: vec![T::zero(); checkpoints * n * n],
            costs: Vec::new(),
            jumps: 0,
            paths: Vec::new(),
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.s1.iter_mut().zip(&other.s1) {
            *a += *b;
        }
        for (a, b) in self.s2.iter_mut().zip(&other.s2) {
            *a += *b;
        }
        self.costs.extend(other.costs);
        self.jumps += other.jumps;
        self.paths.extend(other.paths);
        self
    }
}

fn flat<T: Scalar>(m: &DMatrix<T>, out: &mut Vec<T>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

fn matvec<T: Scalar>(m: &[T], x: &[T], out: &mut [T]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i * cols..(i + 1) * cols].iter().zip(x).fold(T::zero(), |s, (a, b)| s + *a * *b);
    }
}

fn quad_form<T: Scalar>(m: &[T], x: &[T]) -> T {
    let n = x.len();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            s += x[i] * m[i * n + j] * x[j];
        }
    }
    s
}

const CHUNK: usize = 512;

fn check_consistency<T: Scalar>(sys: &SystemSpec<T>, noise: &NoiseModel<T>, tol: &Tolerances<T>) -> Result<()> {
    if !sys.general_channels.is_empty() {
        return Err(Error::NoiseInconsistency(
            "simulation supports the identity multiplicative channel only".into(),
        ));
    }
    let (d, nu) = derive_intensities(noise)?;
    if d.shape() != sys.d.shape() {
        return Err(Error::NoiseInconsistency(format!(
            "noise model has {} channels, system has {}",
            d.rows(),
            sys.d.rows()
        )));
    }
    let lim = lit::<T>(1e-10);
    for t in grid_times::<T>(tol.validation_grid) {
        let gap_d = max_abs(&(d.evaluate(t, 0) - sys.d.evaluate(t, 0)));
        let gap_nu = (nu.scalar_at(t) - sys.nu_at(t)).abs();
        if gap_d > lim || gap_nu > lim {
            return Err(Error::NoiseInconsistency(format!(
                "derived intensities differ from the system at t={} (D by {:e}, nu by {:e})",
                t.as_f64(),
                gap_d.as_f64(),
                gap_nu.as_f64()
            )));
        }
    }
    Ok(())
}

/// Upper bound of a polynomial rate on `[0, 1]`, for thinning.
fn rate_bound<T: Scalar>(p: &Poly<T>) -> T {
    let samples = grid_times::<T>(1001).map(|t| p.eval(t, 0)).fold(T::zero(), |m, v| m.max(v));
    samples + p.derivative_bound(T::one()) / lit(1000.0) + lit(1e-12)
}

/// Euler–Maruyama simulation of `dx = (A + BK) x dt + C dm + x dμ`.
///
/// Wiener increments are Gaussian per step. Compound-Poisson arrivals are
/// drawn exactly by thinning and their jumps are applied at the end of the
/// step in which they occur. Path `i` draws from the ChaCha8 stream `i` of
/// `master_seed`, and sums are reduced in path order, so results do not
/// depend on the thread count.
pub fn simulate_paths<T: Scalar>(
    sys: &SystemSpec<T>,
    noise: &NoiseModel<T>,
    gain: &GainSchedule<T>,
    cfg: &SimulationConfig<T>,
    tol: &Tolerances<T>,
) -> Result<SimulationResult<T>> {
    if cfg.num_paths == 0 {
        return Err(Error::InvalidArgument("numPaths must be at least 1".into()));
    }
    if !(cfg.step_size > T::zero() && cfg.step_size <= lit(0.01)) {
        return Err(Error::StepSize(cfg.step_size.as_f64()));
    }
    check_consistency(sys, noise, tol)?;
    let (n, p, q) = (sys.n, sys.p, sys.q);
    if gain.gains.iter().any(|k| k.shape() != (p, n)) {
        return Err(Error::DimensionMismatch(format!("gain must be {p}x{n}")));
    }
    if gain.times[0] > T::zero() || *gain.times.last().unwrap() < T::one() {
        return Err(Error::InvalidArgument("gain grid must cover [0, 1]".into()));
    }
    if cfg.sigma0.shape() != (n, n) {
        return Err(Error::DimensionMismatch("sigma0 shape".into()));
    }
    let l0 = cfg
        .sigma0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Precondition("Sigma0 not positive definite".into()))?
        .l();

    let steps = (T::one() / cfg.step_size - lit(1e-9)).ceil().as_f64() as usize;
    let h = T::one() / from_usize::<T>(steps);
    let mut check_idx: Vec<usize> = cfg
        .checkpoints
        .iter()
        .map(|t| (*t / h).round().as_f64().clamp(0.0, steps as f64) as usize)
        .collect();
    check_idx.sort_unstable();
    check_idx.dedup();
    let mut slot = vec![usize::MAX; steps + 1];
    for (s, j) in check_idx.iter().enumerate() {
        slot[*j] = s;
    }

    let kinds: Vec<&NoiseKind<T>> = noise
        .additive
        .iter()
        .map(|c| &c.kind)
        .chain(&noise.multiplicative)
        .collect();
    let n_add = noise.additive.len();
    let mut data = StepData {
        acl: Vec::with_capacity((steps + 1) * n * n),
        k: Vec::with_capacity((steps + 1) * p * n),
        c: Vec::with_capacity((steps + 1) * n * q),
        q: Vec::with_capacity((steps + 1) * n * n),
        r: Vec::with_capacity((steps + 1) * p * p),
        sd: Vec::with_capacity((steps + 1) * kinds.len()),
    };
    for j in 0..=steps {
        let t = from_usize::<T>(j) * h;
        let k = gain.at(t);
        flat(&(sys.a.evaluate(t, 0) + sys.b.evaluate(t, 0) * &k), &mut data.acl);
        flat(&k, &mut data.k);
        flat(&sys.c.evaluate(t, 0), &mut data.c);
        flat(&sys.q_weight.evaluate(t, 0), &mut data.q);
        flat(&sys.r.evaluate(t, 0), &mut data.r);
        for kind in &kinds {
            data.sd.push(match kind {
                NoiseKind::Wiener { rate } => (rate.eval(t, 0).max(T::zero()) * h).sqrt(),
                NoiseKind::CompoundPoisson { .. } => T::zero(),
            });
        }
    }
    let bounds: Vec<T> = kinds
        .iter()
        .map(|k| match k {
            NoiseKind::CompoundPoisson { rate, .. } => rate_bound(rate),
            NoiseKind::Wiener { .. } => T::zero(),
        })
        .collect();
    let nk = kinds.len();

    let retain = cfg.retain_paths.min(cfg.num_paths);
    let half = lit::<T>(0.5);
    let run_path = |id: usize, acc: &mut Sums<T>| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
        rng.set_stream(id as u64);
        let z = DVector::from_fn(n, |_, _| lit::<T>(StandardNormal.sample(&mut rng)));
        let mut x: Vec<T> = (&l0 * z).iter().copied().collect();
        let mut ax = vec![T::zero(); n];
        let mut cdm = vec![T::zero(); n];
        let mut u = vec![T::zero(); p];
        let mut dm = vec![T::zero(); q];
        let mut cost = T::zero();
        let mut prev_stage = T::zero();
        for j in 0..=steps {
            matvec(&data.k[j * p * n..(j + 1) * p * n], &x, &mut u);
            let stage = quad_form(&data.q[j * n * n..(j + 1) * n * n], &x)
                + quad_form(&data.r[j * p * p..(j + 1) * p * p], &u);
            if j > 0 {
                cost += (prev_stage + stage) * h * half;
            }
            prev_stage = stage;
            if slot[j] != usize::MAX {
                let s = slot[j];
                for a in 0..n {
                    acc.s1[s * n + a] += x[a];
                    for b in 0..n {
                        acc.s2[(s * n + a) * n + b] += x[a] * x[b];
                    }
                }
            }
            if id < retain {
                acc.paths.push(PathSample {
                    t: from_usize::<T>(j) * h,
                    path_id: id,
                    x: x.clone(),
                    u: u.clone(),
                });
            }
            if j == steps {
                break;
            }
            let t0 = from_usize::<T>(j) * h;
            dm.iter_mut().for_each(|v| *v = T::zero());
            let mut dmu = T::zero();
            for (ci, kind) in kinds.iter().enumerate() {
                let inc = match kind {
                    NoiseKind::Wiener { .. } => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        data.sd[j * nk + ci] * lit(z)
                    }
                    NoiseKind::CompoundPoisson { rate, jump_std } => {
                        let lmax = bounds[ci];
                        let mut s = t0;
                        let mut total = T::zero();
                        loop {
                            let e: f64 = Exp1.sample(&mut rng);
                            s += lit::<T>(e) / lmax;
                            if s > t0 + h {
                                break;
                            }
                            let accept: f64 = rng.random();
                            if lit::<T>(accept) * lmax < rate.eval(s, 0) {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                total += *jump_std * lit(z);
                                acc.jumps += 1;
                            }
                        }
                        total
                    }
                };
                if ci < n_add {
                    dm[noise.additive[ci].channel] += inc;
                } else {
                    dmu += inc;
                }
            }
            matvec(&data.acl[j * n * n..(j + 1) * n * n], &x, &mut ax);
            matvec(&data.c[j * n * q..(j + 1) * n * q], &dm, &mut cdm);
            for a in 0..n {
                x[a] = x[a] + ax[a] * h + cdm[a] + x[a] * dmu;
            }
        }
        if cfg.record_costs {
            acc.costs.push(cost);
        }
    };

    let chunks = cfg.num_paths.div_ceil(CHUNK);
    let partial: Vec<Sums<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Sums::new(n, check_idx.len());
            for id in c * CHUNK..((c + 1) * CHUNK).min(cfg.num_paths) {
                run_path(id, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = Sums::new(n, check_idx.len());
    for s in partial {
        total = total.merge(s);
    }

    let big_n = from_usize::<T>(cfg.num_paths);
    let mean: Vec<DVector<T>> = total.s1.chunks(n).map(|s| DVector::from_column_slice(s) / big_n).collect();
    let cov = total
        .s2
        .chunks(n * n)
        .zip(&mean)
        .map(|(s2, m)| {
            (cfg.num_paths > 1).then(|| {
                (DMatrix::from_row_slice(n, n, s2) - m * m.transpose() * big_n) / (big_n - T::one())
            })
        })
        .collect();
    let mut paths = total.paths;
    paths.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap().then(a.path_id.cmp(&b.path_id)));

    Ok(SimulationResult {
        num_paths: cfg.num_paths,
        steps,
        step_size: h,
        master_seed: cfg.master_seed,
        checkpoints: check_idx.iter().map(|j| from_usize::<T>(*j) * h).collect(),
        mean,
        cov,
        paths: (retain > 0).then_some(paths),
        path_costs: cfg.record_costs.then_some(total.costs),
        mean_jump_count: lit::<T>(total.jumps as f64) / big_n,
    })
}

/// Moments at a checkpoint time.
pub fn empirical_moments<T: Scalar>(res: &SimulationResult<T>, t: T) -> Result<Moments<T>> {
    let eps = res.step_size * lit(1e-6);
    let i = res
        .checkpoints
        .iter()
        .position(|c| (*c - t).abs() <= eps)
        .ok_or(Error::MissingCheckpoint(t.as_f64()))?;
    Ok(Moments {
        t: res.checkpoints[i],
        mean: res.mean[i].clone(),
        cov: res.cov[i].clone(),
    })
}

/// Mean of the per-path trapezoidal cost `∫ xᵀQx + uᵀRu dt`.
pub fn estimate_cost<T: Scalar>(res: &SimulationResult<T>) -> Result<CostEstimate<T>> {
    let costs = res.path_costs.as_ref().ok_or(Error::PathsNotRetained)?;
    let n = from_usize::<T>(costs.len());
    let mean = costs.iter().fold(T::zero(), |s, c| s + *c) / n;
    let std_dev = if costs.len() > 1 {
        (costs.iter().fold(T::zero(), |s, c| s + (*c - mean) * (*c - mean)) / (n - T::one())).sqrt()
    } else {
        T::zero()
    };
    Ok(CostEstimate {
        mean,
        half_width: lit::<T>(1.96) * std_dev / n.sqrt(),
        std_dev,
    })
}

/// `(t, mean_i − 3√Σ_ii, mean_i + 3√Σ_ii)` per checkpoint, `None` where the
/// covariance is undefined.
pub fn envelope<T: Scalar>(res: &SimulationResult<T>) -> Vec<(T, Vec<T>, Vec<T>)> {
    res.checkpoints
        .iter()
        .zip(&res.mean)
        .zip(&res.cov)
        .filter_map(|((t, m), c)| {
            let c = c.as_ref()?;
            let (lo, hi) = (0..m.len())
                .map(|i| {
                    let w = lit::<T>(3.0) * c[(i, i)].max(T::zero()).sqrt();
                    (m[i] - w, m[i] + w)
                })
                .unzip();
            Some((*t, lo, hi))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn poly(c: &[f64]) -> Poly<f64> {
        Poly::new(c.to_vec())
    }

    pub fn example_noise() -> NoiseModel<f64> {
        NoiseModel {
            channels: 1,
            additive: vec![NoiseComponent {
                channel: 0,
                kind: NoiseKind::CompoundPoisson {
                    rate: poly(&[3.0, 1.0]),
                    jump_std: 0.5,
                },
            }],
            multiplicative: vec![NoiseKind::Wiener { rate: poly(&[1.0]) }],
        }
    }

    #[test]
    fn unit_wiener_intensity() {
        let noise = NoiseModel {
            channels: 1,
            additive: vec![NoiseComponent {
                channel: 0,
                kind: NoiseKind::Wiener { rate: poly(&[1.0]) },
            }],
            multiplicative: vec![],
        };
        let (d, nu) = derive_intensities(&noise).unwrap();
        assert_eq!(d.evaluate(0.3, 0), dmatrix![1.0]);
        assert_eq!(nu.scalar_at(0.3), 0.0);
    }

    #[test]
    fn example_intensities() {
        let (d, nu) = derive_intensities(&example_noise()).unwrap();
        for t in [0.0, 0.4, 1.0] {
            assert!((d.evaluate(t, 0)[(0, 0)] - 0.25 * (3.0 + t)).abs() < 1e-15);
            assert_eq!(nu.scalar_at(t), 0.5);
        }
    }

    fn scalar_sys(a: f64, d: MatrixPoly<f64>, nu: f64) -> SystemSpec<f64> {
        let mut s = SystemSpec::constant(&dmatrix![a], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![0.0], nu, &dmatrix![1.0], &dmatrix![1.0]);
        s.d = d;
        s
    }

    #[test]
    fn inconsistent_noise_is_rejected() {
        let sys = scalar_sys(0.0, MatrixPoly::constant(&dmatrix![1.0]), 0.5);
        let cfg = SimulationConfig::new(10, 0.01, 1, dmatrix![1.0]);
        let e = simulate_paths(&sys, &example_noise(), &GainSchedule::zero(1, 1), &cfg, &Tolerances::default());
        assert!(matches!(e, Err(Error::NoiseInconsistency(_))));
    }

    #[test]
    fn step_size_bounds() {
        let (d, _) = derive_intensities(&example_noise()).unwrap();
        let sys = scalar_sys(0.0, d, 0.5);
        for dt in [0.0, 0.02, -1.0] {
            let cfg = SimulationConfig::new(10, dt, 1, dmatrix![1.0]);
            let e = simulate_paths(&sys, &example_noise(), &GainSchedule::zero(1, 1), &cfg, &Tolerances::default());
            assert!(matches!(e, Err(Error::StepSize(_))));
        }
    }

    fn run(paths: usize, seed: u64) -> SimulationResult<f64> {
        let (d, _) = derive_intensities(&example_noise()).unwrap();
        let sys = scalar_sys(-1.0, d, 0.5);
        let cfg = SimulationConfig::new(paths, 0.005, seed, dmatrix![1.0]);
        simulate_paths(&sys, &example_noise(), &GainSchedule::zero(1, 1), &cfg, &Tolerances::default()).unwrap()
    }

    #[test]
    fn zero_gain_matches_lyapunov() {
        let res = run(20_000, 7);
        // Σ' = 2(a + ν)Σ + D with a = −1, ν = ½: Σ' = −Σ + ¾ + t/4
        let exact = |t: f64| 0.5 + 0.25 * t + 0.5 * (-t).exp();
        for t in [0.5, 1.0] {
            let m = empirical_moments(&res, t).unwrap();
            let s = m.cov.unwrap()[(0, 0)];
            assert!((s / exact(t) - 1.0).abs() < 0.05, "t={t}: {s} vs {}", exact(t));
        }
        // E[N(1)] = ∫(3 + t) = 3.5
        assert!((res.mean_jump_count / 3.5 - 1.0).abs() < 0.02, "{}", res.mean_jump_count);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run(1500, 3));
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run(1500, 3));
        assert_eq!(one.mean, many.mean);
        assert_eq!(one.cov, many.cov);
        assert_eq!(one.path_costs, many.path_costs);
        assert_eq!(one.paths, many.paths);
    }

    #[test]
    fn single_path_has_no_covariance() {
        let res = run(1, 3);
        assert!(res.cov.iter().all(Option::is_none));
        assert!(envelope(&res).is_empty());
        let c = estimate_cost(&res).unwrap();
        assert_eq!(c.half_width, 0.0);
    }

    #[test]
    fn missing_checkpoint_and_costs() {
        let mut res = run(4, 3);
        assert!(matches!(empirical_moments(&res, 0.123), Err(Error::MissingCheckpoint(_))));
        res.path_costs = None;
        assert!(matches!(estimate_cost(&res), Err(Error::PathsNotRetained)));
    }

    #[test]
    fn retained_paths_are_sorted() {
        let res = run(20, 11);
        let p = res.paths.unwrap();
        assert_eq!(p.len(), 10 * (res.steps + 1));
        assert!(p.windows(2).all(|w| (w[0].t, w[0].path_id) < (w[1].t, w[1].path_id)));
    }

    #[test]
    fn interpolated_gain() {
        let g = GainSchedule::new(vec![0.0, 0.5, 1.0], vec![dmatrix![0.0], dmatrix![1.0], dmatrix![3.0]]).unwrap();
        assert_eq!(g.at(0.25), dmatrix![0.5]);
        assert_eq!(g.at(0.75), dmatrix![2.0]);
        assert_eq!(g.at(2.0), dmatrix![3.0]);
    }
}
