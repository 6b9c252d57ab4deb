//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::ParamStore;
use crate::numerics::graph::{Graph, Op, Var};
use crate::numerics::ops::Activation;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Upper bound on probed elements per input tensor; `None` probes all.
    pub max_elements: Option<usize>,
    /// Seed for element sampling and the output projection.
    pub seed: u64,
    /// How many times a probe that crosses a kink is retried with a ten times
    /// smaller step before it is skipped.
    pub kink_retries: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            max_elements: None,
            seed: 0,
            kink_retries: 2,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub probed: usize,
    /// Probes dropped because every step size straddled a non-differentiable
    /// point of the function.
    pub skipped: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn scalar_output(g: &mut Graph<f64>, out: Var, projection: &mut Option<Tensor<f64>>, seed: u64) -> Result<Var> {
    if g.value(out).numel() == 1 {
        return Ok(out);
    }
    // Non-scalar outputs are contracted with a fixed random projection.
    let shape = g.shape(out);
    let proj = projection.get_or_insert_with(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
    });
    let p = g.constant(proj.clone());
    let prod = g.mul(out, p)?;
    g.mean(prod)
}

/// Which side of every kink the tape sits on: relu-type and abs inputs,
/// clamp thresholds, the extreme bins of spectrum normalisation and the sign
/// of phases near the branch cut.
fn kink_signature(g: &Graph<f64>) -> Vec<u32> {
    let mut sig = Vec::new();
    for v in g.vars() {
        match g.op(v) {
            Op::Activation {
                input,
                kind: Activation::Relu | Activation::LeakyRelu,
            }
            | Op::Abs(input) => sig.extend(g.value(*input).data().iter().map(|&x| u32::from(x > 0.0))),
            Op::ClampMin { input, min } => sig.extend(g.value(*input).data().iter().map(|&x| u32::from(x > *min))),
            Op::Spectrum(_) => {
                let out = g.value(v);
                let s = out.shape();
                let half = s.c / 2;
                for n in 0..s.n {
                    for c in 0..half {
                        let m = out.plane(n, c);
                        let arg = |better: fn(f64, f64) -> bool| {
                            (0..m.len()).fold(0, |b, i| if better(m[i], m[b]) { i } else { b }) as u32
                        };
                        sig.push(arg(|a, b| a < b));
                        sig.push(arg(|a, b| a > b));
                        let p = out.plane(n, half + c);
                        sig.extend(p.iter().filter(|x| x.abs() > 0.5).map(|&x| u32::from(x > 0.0)));
                    }
                }
            }
            _ => {}
        }
    }
    sig
}

/// Compares the reverse-mode gradient of `f` with central finite differences.
///
/// `f` receives one gradient-requiring leaf per entry of `inputs` and returns
/// any node; non-scalar results are reduced through a fixed random projection.
pub fn gradient_check<F>(inputs: &[Tensor<f64>], f: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut projection = None;
    let eval = |values: &[Tensor<f64>], projection: &mut Option<Tensor<f64>>| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let loss = scalar_output(&mut g, out, projection, opts.seed)?;
        Ok((g, vars, loss))
    };

    let (g, vars, loss) = eval(inputs, &mut projection)?;
    let grads = g.backward(loss)?;
    let base_sig = kink_signature(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();

    for (ti, t) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[ti]).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
        let n = t.numel();
        let picks: Vec<usize> = match opts.max_elements {
            Some(m) if m < n => {
                let mut v = sample(&mut rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for e in picks {
            let orig = t.data()[e];
            let mut eps = opts.eps;
            let mut numeric = None;
            for _ in 0..=opts.kink_retries {
                work[ti].data_mut()[e] = orig + eps;
                let (gp, _, lp) = eval(&work, &mut projection)?;
                work[ti].data_mut()[e] = orig - eps;
                let (gm, _, lm) = eval(&work, &mut projection)?;
                work[ti].data_mut()[e] = orig;
                if kink_signature(&gp) == base_sig && kink_signature(&gm) == base_sig {
                    numeric = Some((gp.value(lp).item() - gm.value(lm).item()) / (2.0 * eps));
                    break;
                }
                eps /= 10.0;
            }
            let Some(numeric) = numeric else {
                report.skipped += 1;
                continue;
            };
            let a = analytic.data()[e];
            let err = relative_error(a, numeric);
            report.probed += 1;
            if err > report.max_rel_error || report.probed == 1 {
                report.max_rel_error = err;
                report.worst = (ti, e);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Gradient check of a parameterised module with respect to its inputs and
/// every parameter in `store`.
pub fn check_module<F>(
    store: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    forward: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>,
{
    let n_in = inputs.len();
    let mut all = inputs.to_vec();
    all.extend(store.ids().map(|id| store.get(id).clone()));
    gradient_check(
        &all,
        |g, vars| {
            for (id, &v) in store.ids().zip(&vars[n_in..]) {
                g.bind_param(store, id, v);
            }
            forward(g, store, &vars[..n_in])
        },
        opts,
    )
}
