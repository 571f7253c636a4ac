//! Sampling approximation of the expected outcome function.
//!
//! The estimator runs `v` honest executions, counts the `q` whose forecast prefix equals the query
//! and the `p` among them with output 1, and returns `p / q` (0 when nothing matched). The sample
//! count `v = ceil(1/2 * (2 c^r / rho)^4 * ln(8 / rho))` makes the estimate `rho`-accurate except
//! with probability `rho`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{Forecast, ForecasterSpec};
use crate::num::{abs, from_counts, from_f64, zero, Rational};
use crate::protocol::{PartyId, Tape};
use crate::rng::{derive_seed, stream};

/// Accuracy parameter used by the asymptotic analysis: `10^-6 * r^(-5/2)`.
pub fn preset_rho(rounds: usize) -> f64 {
    1e-6 * (rounds as f64).powf(-2.5)
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { value: rho.to_string(), expected: "the open interval (0, 1)" })
    }
}

/// `floor(2^prec * atanh(num/den))` up to an additive error of `terms + 2`, for `0 <= num/den < 1/2`.
fn atanh_fixed(num: &BigInt, den: &BigInt, prec: u32) -> (BigInt, u64) {
    let mut sum = BigInt::zero();
    let mut pow_num = num.clone();
    let mut pow_den = den.clone();
    let num2 = num * num;
    let den2 = den * den;
    let mut n = 0u64;
    loop {
        let term = (&pow_num << prec) / (&pow_den * BigInt::from(2 * n + 1));
        if term.is_zero() {
            break;
        }
        sum += term;
        pow_num *= &num2;
        pow_den *= &den2;
        n += 1;
    }
    (sum, n + 2)
}

/// `2^prec * ln(x)` for rational `x >= 1`, with an error bound in the same units.
fn ln_fixed(x: &Rational, prec: u32) -> (BigInt, BigInt) {
    let (n, d) = (x.numer().clone(), x.denom().clone());
    // x = 2^e * y with 1 <= y < 2
    let mut e = n.bits() as i64 - d.bits() as i64;
    let scaled_den = |e: i64| -> BigInt { if e >= 0 { &d << e as u64 } else { d.clone() } };
    let scaled_num = |e: i64| -> BigInt { if e >= 0 { n.clone() } else { &n << (-e) as u64 } };
    while scaled_num(e) < scaled_den(e) {
        e -= 1;
    }
    while scaled_num(e) >= BigInt::from(2) * scaled_den(e) {
        e += 1;
    }
    let (yn, yd) = (scaled_num(e), scaled_den(e));
    let (ln2, err2) = atanh_fixed(&BigInt::one(), &BigInt::from(3), prec);
    let (lny, erry) = atanh_fixed(&(&yn - &yd), &(&yn + &yd), prec);
    let value = BigInt::from(2 * e) * ln2 + BigInt::from(2) * lny;
    let err = BigInt::from(2 * e.unsigned_abs() * err2 + 2 * erry);
    (value, err)
}

fn ceil_div(num: &BigInt, den: &BigInt) -> BigInt {
    let (q, r) = (num / den, num % den);
    if r.sign() == Sign::Plus {
        q + 1
    } else {
        q
    }
}

/// The sample count `ceil(1/2 * (2 c^r / rho)^4 * ln(8 / rho))`, evaluated exactly.
///
/// `rho` is taken as the exact value of the given `f64`; the logarithm is evaluated in
/// fixed point with a rigorous error bound, and precision grows until the ceiling is certain.
pub fn sample_count(c: u64, r: u32, rho: f64) -> Result<BigUint> {
    check_rho(rho)?;
    if c == 0 || r == 0 {
        return Err(Error::InvalidParameter("sample_count needs c >= 1 and r >= 1".into()));
    }
    let rho = from_f64(rho);
    let base = Rational::from_integer(BigInt::from(2) * BigInt::from(c).pow(r)) / &rho;
    let a = base.pow(4) / Rational::from_integer(BigInt::from(2));
    let x = Rational::from_integer(BigInt::from(8)) / &rho;
    let mut prec = 128 + a.numer().bits() as u32;
    loop {
        let (l, err) = ln_fixed(&x, prec);
        let den = a.denom() << prec as u64;
        let lo = ceil_div(&(a.numer() * (&l - &err)), &den);
        let hi = ceil_div(&(a.numer() * (&l + &err)), &den);
        if lo == hi {
            return Ok(lo.to_biguint().expect("positive count"));
        }
        prec *= 2;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub rho: f64,
    pub c: u64,
    pub rounds: usize,
    pub v: BigUint,
}

impl EstimatorParams {
    pub fn new(c: u64, rounds: usize, rho: f64) -> Result<Self> {
        let v = sample_count(c, rounds as u32, rho)?;
        Ok(EstimatorParams { rho, c, rounds, v })
    }

    /// Parameters with `c` measured on the forecaster.
    pub fn for_forecaster(fspec: &ForecasterSpec, rho: f64) -> Result<Self> {
        Self::new(fspec.measured_c(), fspec.rounds(), rho)
    }

    /// Parameters with an explicit sample count, bypassing the formula.
    pub fn with_samples(c: u64, rounds: usize, rho: f64, v: u64) -> Result<Self> {
        check_rho(rho)?;
        Ok(EstimatorParams { rho, c, rounds, v: BigUint::from(v) })
    }

    pub fn samples(&self) -> Result<u64> {
        self.v.to_u64().ok_or_else(|| {
            Error::InvalidParameter(format!("sample count {} is too large to run", self.v))
        })
    }
}

/// How the `v` executions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Run every execution and match its forecast prefix.
    PerExecution,
    /// Draw the match count `q ~ Bin(v, Pr[match])` and then `p ~ Bin(q, Pr[C = 1 | match])`,
    /// which has exactly the law of the two counters.
    #[default]
    CountAggregated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Estimate {
    pub q: u64,
    pub p: u64,
}

impl Estimate {
    pub fn value(&self) -> Rational {
        if self.q == 0 {
            zero()
        } else {
            from_counts(self.p, self.q)
        }
    }
}

const CHUNK: u64 = 1 << 16;

/// Estimate of `g(f_prefix)` from `v` seeded executions.
pub fn estimate_g(
    fspec: &ForecasterSpec,
    params: &EstimatorParams,
    f_prefix: &[Forecast],
    seed: u64,
    sampling: Sampling,
) -> Result<Estimate> {
    let r = fspec.rounds();
    if f_prefix.is_empty() || f_prefix.len() > r + 1 {
        return Err(Error::InvalidParameter(format!(
            "forecast prefix length {} outside 1..={}",
            f_prefix.len(),
            r + 1
        )));
    }
    let v = params.samples()?;
    let depth = f_prefix.len() - 1;
    let Some(class) = fspec.class_of_prefix(f_prefix) else {
        return Ok(Estimate { q: 0, p: 0 });
    };
    let tree = fspec.tree();
    match sampling {
        Sampling::CountAggregated => {
            let (ones, size) = fspec.class_counts(depth, class);
            let mut rng = stream(seed, "estimate_g/aggregate", 0);
            let pm = size as f64 / tree.total() as f64;
            let q = binomial(&mut rng, v, pm)?;
            let p = binomial(&mut rng, q, ones as f64 / size as f64)?;
            Ok(Estimate { q, p })
        }
        Sampling::PerExecution => {
            let spec = tree.spec();
            let (q, p) = (0..v.div_ceil(CHUNK))
                .into_par_iter()
                .map(|chunk| {
                    let mut rng = stream(seed, "estimate_g/run", chunk);
                    let (mut q, mut p) = (0u64, 0u64);
                    for _ in 0..CHUNK.min(v - chunk * CHUNK) {
                        let tapes: [Tape; 2] = [
                            rng.random_range(0..spec.domain(PartyId::A)),
                            rng.random_range(0..spec.domain(PartyId::B)),
                        ];
                        if let Some(one) = run_and_match(fspec, tapes, depth, class) {
                            q += 1;
                            p += one as u64;
                        }
                    }
                    (q, p)
                })
                .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
            Ok(Estimate { q, p })
        }
    }
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> Result<u64> {
    let d = Binomial::new(n, p.clamp(0.0, 1.0))
        .map_err(|e| Error::InvalidParameter(format!("binomial({n}, {p}): {e}")))?;
    Ok(d.sample(rng))
}

/// Runs one execution; `Some(output)` when its forecast prefix at `depth` is in `class`.
fn run_and_match(fspec: &ForecasterSpec, tapes: [Tape; 2], depth: usize, class: usize) -> Option<bool> {
    let tree = fspec.tree();
    let at_depth = tree.descend(tapes, depth);
    if fspec.class_at(at_depth) != class {
        return None;
    }
    let leaf = tree.descend(tapes, tree.rounds());
    Some(tree.spec().output(PartyId::A, tapes[0], &tree.node(leaf).prefix))
}

/// Outcome of repeated estimation against the exact `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub protocol: String,
    pub k: u32,
    pub rho: f64,
    pub v: String,
    pub trials: u64,
    pub failures: u64,
    pub failure_rate: f64,
    pub seed: u64,
}

impl ExperimentResult {
    pub fn passed(&self) -> bool {
        self.failure_rate <= self.rho
    }
}

/// Fraction of trials with `|g~ - g| > rho`. Each trial draws an honest execution and a round
/// `i` in `1..=r`, then estimates `g` on its forecast prefix with a fresh seed.
pub fn estimator_experiment(
    fspec: &ForecasterSpec,
    rho: f64,
    trials: u64,
    seed: u64,
    sampling: Sampling,
) -> Result<ExperimentResult> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let params = EstimatorParams::for_forecaster(fspec, rho)?;
    params.samples()?;
    let tree = fspec.tree();
    let spec = tree.spec();
    let tolerance = from_f64(rho);
    let failed = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, "experiment/prefix", t);
            let tapes = [
                rng.random_range(0..spec.domain(PartyId::A)),
                rng.random_range(0..spec.domain(PartyId::B)),
            ];
            let depth = rng.random_range(1..=tree.rounds());
            let node = tree.descend(tapes, depth);
            let truth = fspec.expected_outcome_at(node);
            let est = estimate_g(
                fspec,
                &params,
                &fspec.prefix_at(node),
                derive_seed(seed, "experiment/estimate", t),
                sampling,
            )?;
            Ok(abs(&(est.value() - truth)) > tolerance)
        })
        .collect::<Result<Vec<bool>>>()?;
    let failures = failed.iter().filter(|&&f| f).count() as u64;
    Ok(ExperimentResult {
        protocol: spec.name(),
        k: fspec.bits(),
        rho,
        v: params.v.to_string(),
        trials,
        failures,
        failure_rate: failures as f64 / trials as f64,
        seed,
    })
}

/// Exact `Pr[|X/v - mu| > rho]` for `X ~ Bin(v, mu)`, summed in floating point.
pub fn binomial_deviation_probability(v: u64, mu: f64, rho: f64) -> f64 {
    let mut total = 0.0;
    let mut log_pmf_terms = 0.0f64;
    let (lp, lq) = (mu.ln(), (1.0 - mu).ln());
    for x in 0..=v {
        if x > 0 {
            log_pmf_terms += ((v - x + 1) as f64).ln() - (x as f64).ln();
        }
        let dev = (x as f64 / v as f64 - mu).abs();
        if dev > rho {
            total += (log_pmf_terms + x as f64 * lp + (v - x) as f64 * lq).exp();
        }
    }
    total
}
