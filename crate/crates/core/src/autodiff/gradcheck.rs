//! Central finite-difference checks of tape gradients.
//!
//! Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)`.
//! The floor keeps gradients that are zero up to round-off from reporting
//! spurious relative errors.

use std::rc::Rc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
/// Probes whose non-smooth inputs sit closer than this to a kink are
/// resampled.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub entries: usize,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Error raised when a probe point lies too close to a kink.
#[derive(Debug)]
pub struct NearKink;

/// Compares the tape gradient of `build` w.r.t. every entry of `inputs`
/// against central differences.
pub fn check<F>(name: &str, inputs: &[Tensor], build: F) -> Result<std::result::Result<CheckReport, NearKink>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    if tape.min_kink_distance() < KINK_MARGIN {
        return Ok(Err(NearKink));
    }
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut entries = 0;
    let mut probe = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt(v);
        for e in 0..inputs[k].len() {
            let orig = inputs[k].data()[e];
            probe[k].data_mut()[e] = orig + FD_STEP;
            let up = eval(&probe)?;
            probe[k].data_mut()[e] = orig - FD_STEP;
            let down = eval(&probe)?;
            probe[k].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.data()[e], numeric));
            entries += 1;
        }
    }
    Ok(Ok(CheckReport { name: name.to_string(), max_rel_err: worst, entries }))
}

/// Retries `check` with fresh inputs from `sample` until the probe point is
/// away from every kink.
pub fn check_resampling<S, F>(name: &str, rng: &mut Rng, mut sample: S, build: F) -> Result<CheckReport>
where
    S: FnMut(&mut Rng) -> Vec<Tensor>,
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    for _ in 0..100 {
        let inputs = sample(rng);
        if let Ok(report) = check(name, &inputs, &build)? {
            return Ok(report);
        }
    }
    Err(Error::Numeric(format!("{name}: could not sample a probe away from kinks")))
}

pub fn normal(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn uniform(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Contracts an arbitrary-shape output with fixed random weights so every
/// output entry carries a distinct upstream gradient.
fn project(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(out);
    let mut rng = rng::stream(seed, 99);
    let w = tape.constant(normal(&mut rng, r, c));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;
type Sample = Box<dyn FnMut(&mut Rng) -> Vec<Tensor>>;

fn unary_case(name: &'static str, lo: f64, hi: f64, f: fn(&mut Tape, Var) -> Result<Var>) -> (&'static str, Sample, Build) {
    (
        name,
        Box::new(move |rng| vec![uniform(rng, 3, 4, lo, hi)]),
        Box::new(move |t, v| {
            let out = f(t, v[0])?;
            project(t, out, 1)
        }),
    )
}

fn binary_case(name: &'static str, f: fn(&mut Tape, Var, Var) -> Result<Var>) -> (&'static str, Sample, Build) {
    (
        name,
        Box::new(|rng| vec![normal(rng, 3, 4), uniform(rng, 3, 4, 0.5, 2.0)]),
        Box::new(move |t, v| {
            let out = f(t, v[0], v[1])?;
            project(t, out, 2)
        }),
    )
}

fn primitive_cases() -> Vec<(&'static str, Sample, Build)> {
    let seg_ids = Rc::new(vec![0, 2, 0, 1, 2]);
    let gather_idx = Rc::new(vec![1, 1, 0, 3, 2, 1]);
    vec![
        (
            "matmul",
            Box::new(|rng: &mut Rng| vec![normal(rng, 3, 4), normal(rng, 4, 2)]) as Sample,
            Box::new(|t: &mut Tape, v: &[Var]| {
                let out = t.matmul(v[0], v[1])?;
                project(t, out, 3)
            }) as Build,
        ),
        binary_case("add", |t, a, b| t.add(a, b)),
        binary_case("sub", |t, a, b| t.sub(a, b)),
        binary_case("mul", |t, a, b| t.mul(a, b)),
        binary_case("div", |t, a, b| t.div(a, b)),
        binary_case("ratio_or_zero", |t, a, b| t.ratio_or_zero(a, b)),
        binary_case("concat", |t, a, b| t.concat(&[a, b, a])),
        unary_case("relu", -2.0, 2.0, |t, x| Ok(t.relu(x))),
        unary_case("sigmoid", -3.0, 3.0, |t, x| Ok(t.sigmoid(x))),
        unary_case("exp", -2.0, 2.0, |t, x| Ok(t.exp(x))),
        unary_case("ln", 0.2, 3.0, |t, x| t.ln(x)),
        unary_case("log1p", -0.5, 3.0, |t, x| t.log1p(x)),
        unary_case("square", -2.0, 2.0, |t, x| Ok(t.square(x))),
        unary_case("abs", -2.0, 2.0, |t, x| Ok(t.abs(x))),
        unary_case("clamp", -2.0, 2.0, |t, x| Ok(t.clamp(x, -1.0, 1.0))),
        unary_case("scale", -2.0, 2.0, |t, x| Ok(t.scale(x, -1.7))),
        unary_case("add_scalar", -2.0, 2.0, |t, x| Ok(t.add_scalar(x, 0.3))),
        unary_case("sum", -2.0, 2.0, |t, x| {
            let s = t.sum(x);
            Ok(t.square(s))
        }),
        unary_case("mean", -2.0, 2.0, |t, x| {
            let s = t.mean(x);
            Ok(t.exp(s))
        }),
        unary_case("sum_rows", -2.0, 2.0, |t, x| Ok(t.sum_rows(x))),
        unary_case("sum_cols", -2.0, 2.0, |t, x| Ok(t.sum_cols(x))),
        unary_case("max_rows", -2.0, 2.0, |t, x| t.max_rows(x)),
        unary_case("min_rows", -2.0, 2.0, |t, x| t.min_rows(x)),
        (
            "mul_scalar",
            Box::new(|rng: &mut Rng| vec![normal(rng, 3, 2), normal(rng, 1, 1)]),
            Box::new(|t: &mut Tape, v: &[Var]| {
                let out = t.mul_scalar(v[0], v[1])?;
                project(t, out, 4)
            }),
        ),
        (
            "segment_sum",
            Box::new(|rng: &mut Rng| vec![normal(rng, 5, 3)]),
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let out = t.segment_sum(v[0], seg_ids.clone(), 3)?;
                project(t, out, 5)
            }),
        ),
        (
            "gather",
            Box::new(|rng: &mut Rng| vec![normal(rng, 4, 3)]),
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let out = t.gather(v[0], gather_idx.clone())?;
                project(t, out, 6)
            }),
        ),
        (
            "sinkhorn_cost",
            Box::new(|rng: &mut Rng| vec![normal(rng, 4, 2), normal(rng, 3, 2)]),
            Box::new(|t: &mut Tape, v: &[Var]| t.sinkhorn_cost(v[0], v[1], 0.1, 20)),
        ),
    ]
}

/// Two-layer perceptron on the tape: `relu(x W1 + b1) W2 + b2`, with
/// biases tiled to the batch by a ones-column matmul.
fn mlp(t: &mut Tape, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let rows = t.shape(x).0;
    let ones = t.constant(Tensor::filled(rows, 1, 1.0));
    let h = t.matmul(x, w1)?;
    let bias1 = t.matmul(ones, b1)?;
    let h = t.add(h, bias1)?;
    let h = t.relu(h);
    let o = t.matmul(h, w2)?;
    let bias2 = t.matmul(ones, b2)?;
    t.add(o, bias2)
}

fn composite_cases() -> Vec<(&'static str, Sample, Build)> {
    // message passing: c = MLP0(X) || sum_j MLP1(X_j || Z_ij)
    let targets = Rc::new(vec![0, 0, 1, 2, 2, 2, 3]);
    let sources = Rc::new(vec![1, 2, 0, 0, 1, 3, 2]);
    let mp = {
        let (targets, sources) = (targets.clone(), sources.clone());
        Box::new(move |t: &mut Tape, v: &[Var]| {
            let x = v[0];
            let own = mlp(t, x, v[2], v[3], v[4], v[5])?;
            let xj = t.gather(x, sources.clone())?;
            let msg_in = t.concat(&[xj, v[1]])?;
            let msg = mlp(t, msg_in, v[6], v[7], v[8], v[9])?;
            let agg = t.segment_sum(msg, targets.clone(), 4)?;
            let c = t.concat(&[own, agg])?;
            project(t, c, 7)
        }) as Build
    };
    let mp_sample = Box::new(|rng: &mut Rng| {
        vec![
            normal(rng, 4, 3),
            uniform(rng, 7, 1, 0.1, 1.0),
            normal(rng, 3, 5),
            normal(rng, 1, 5),
            normal(rng, 5, 2),
            normal(rng, 1, 2),
            normal(rng, 4, 5),
            normal(rng, 1, 5),
            normal(rng, 5, 2),
            normal(rng, 1, 2),
        ]
    }) as Sample;

    // masked layer, log-compressed encoder, ratio and saturation readout
    let ego_of = Rc::new(vec![0, 0, 0, 1, 1, 2]);
    let exposure = {
        let ego_of = ego_of.clone();
        Box::new(move |t: &mut Tape, v: &[Var]| {
            let (h, treat, wmask, wagg, bagg) = (v[0], v[1], v[2], v[3], v[4]);
            let rows = t.shape(h).0;
            let gate = t.sigmoid(wmask);
            let w = t.mul(gate, wagg)?;
            let ones = t.constant(Tensor::filled(rows, 1, 1.0));
            let pre = t.matmul(h, w)?;
            let b = t.matmul(ones, bagg)?;
            let pre = t.add(pre, b)?;
            let hm = t.relu(pre);
            let enc = mlp(t, hm, v[5], v[6], v[7], v[8])?;
            let enc = t.relu(enc);
            let enc = t.log1p(enc)?;
            let hexp = mlp(t, enc, v[9], v[10], v[11], v[12])?;
            let hexp = t.relu(hexp);
            let th = t.mul(treat, hexp)?;
            let num = t.segment_sum(th, ego_of.clone(), 3)?;
            let den = t.segment_sum(hexp, ego_of.clone(), 3)?;
            let ratio = t.ratio_or_zero(num, den)?;
            let neg = t.scale(num, -1.0);
            let e = t.exp(neg);
            let sat = t.scale(e, -1.0);
            let sat = t.add_scalar(sat, 1.0);
            let rho = t.concat(&[ratio, sat])?;
            project(t, rho, 8)
        }) as Build
    };
    let exposure_sample = Box::new(|rng: &mut Rng| {
        let treat: Vec<f64> = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0].iter().flat_map(|&v| [v, v]).collect();
        vec![
            normal(rng, 6, 4),
            Tensor::from_vec(6, 2, treat).unwrap(),
            normal(rng, 4, 5),
            normal(rng, 4, 5),
            uniform(rng, 1, 5, 0.2, 1.0),
            normal(rng, 5, 4),
            uniform(rng, 1, 4, 0.1, 1.0),
            normal(rng, 4, 3),
            uniform(rng, 1, 3, 0.5, 1.0),
            normal(rng, 3, 4),
            normal(rng, 1, 4),
            normal(rng, 4, 2),
            uniform(rng, 1, 2, 1.0, 2.0),
        ]
    }) as Sample;

    // two-headed outcome model with factual selection and squared error
    let heads = Box::new(|t: &mut Tape, v: &[Var]| {
        let (c, rho, y, pick1, pick0) = (v[0], v[1], v[2], v[3], v[4]);
        let emb = mlp(t, c, v[5], v[6], v[7], v[8])?;
        let h = t.concat(&[emb, rho])?;
        let y1 = mlp(t, h, v[9], v[10], v[11], v[12])?;
        let y0 = mlp(t, h, v[13], v[14], v[15], v[16])?;
        let f1 = t.mul(y1, pick1)?;
        let f0 = t.mul(y0, pick0)?;
        let yhat = t.add(f1, f0)?;
        let err = t.sub(yhat, y)?;
        let sq = t.square(err);
        Ok(t.mean(sq))
    }) as Build;
    let heads_sample = Box::new(|rng: &mut Rng| {
        let picks = [1.0, 0.0, 0.0, 1.0, 1.0];
        vec![
            normal(rng, 5, 4),
            uniform(rng, 5, 2, 0.0, 1.0),
            normal(rng, 5, 1),
            Tensor::column(picks.to_vec()),
            Tensor::column(picks.iter().map(|p| 1.0 - p).collect()),
            normal(rng, 4, 6),
            normal(rng, 1, 6),
            normal(rng, 6, 3),
            normal(rng, 1, 3),
            normal(rng, 5, 4),
            normal(rng, 1, 4),
            normal(rng, 4, 1),
            normal(rng, 1, 1),
            normal(rng, 5, 4),
            normal(rng, 1, 4),
            normal(rng, 4, 1),
            normal(rng, 1, 1),
        ]
    }) as Sample;

    vec![
        ("composite:message_passing", mp_sample, mp),
        ("composite:mask_encode_readout", exposure_sample, exposure),
        ("composite:two_head_outcome", heads_sample, heads),
    ]
}

/// Runs every primitive and the three composite graphs.
pub fn primitive_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = rng::stream(seed, 7);
    primitive_cases()
        .into_iter()
        .chain(composite_cases())
        .map(|(name, sample, build)| check_resampling(name, &mut rng, sample, build))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_matches_finite_differences() {
        for report in primitive_suite(1).unwrap() {
            eprintln!("{:<32} {:.2e}", report.name, report.max_rel_err);
            assert!(report.passed(), "{} rel err {}", report.name, report.max_rel_err);
            assert!(report.entries > 0);
        }
    }

    #[test]
    fn relu_probe_near_kink_is_rejected() {
        let x = Tensor::from_vec(1, 2, vec![1e-7, 1.0]).unwrap();
        let res = check("relu", &[x], |t, v| {
            let r = t.relu(v[0]);
            Ok(t.sum(r))
        })
        .unwrap();
        assert!(res.is_err());
    }

    #[test]
    fn relu_composite_against_finite_differences() {
        // f(W) = sum(relu(W x))
        let mut rng = rng::stream(3, 0);
        let x = normal(&mut rng, 4, 1);
        let report = check_resampling(
            "sum_relu_wx",
            &mut rng,
            |rng| vec![normal(rng, 3, 4)],
            move |t, v| {
                let xv = t.constant(x.clone());
                let h = t.matmul(v[0], xv)?;
                let r = t.relu(h);
                Ok(t.sum(r))
            },
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
