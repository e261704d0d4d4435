//! Central finite-difference checks of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Perturbation used by the central differences.
pub const FD_STEP: f64 = 1e-5;

/// `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)`, the error relative to the gradient's scale.
/// Two all-zero gradients agree exactly.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Gradcheck of a tape computation over its inputs.
///
/// The output is contracted with a fixed random cotangent so every output
/// element contributes. Returns one relative error per input.
pub fn check_inputs<F>(inputs: &[Tensor], seed: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let store = ParamStore::new();
    let eval = |xs: &[Tensor]| -> Result<Tensor> {
        let mut tape = Tape::new(&store);
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).clone())
    };

    let mut tape = Tape::new(&store);
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let shape = tape.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let cot = Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let grads = tape.backward_with_seed(out, cot.clone())?;

    let project = |t: &Tensor| t.data().iter().zip(cot.data()).map(|(a, b)| a * b).sum::<f64>();
    let mut errors = Vec::with_capacity(inputs.len());
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        let mut xs = inputs.to_vec();
        for j in 0..inputs[i].numel() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + FD_STEP;
            let fp = project(&eval(&xs)?);
            xs[i].data_mut()[j] = orig - FD_STEP;
            let fm = project(&eval(&xs)?);
            xs[i].data_mut()[j] = orig;
            numeric.push((fp - fm) / (2.0 * FD_STEP));
        }
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(errors)
}

/// Gradcheck of a scalar loss over every parameter of `store`.
///
/// `loss` records its computation on the provided tape. Returns
/// `(parameter name, relative error)` pairs in store order.
pub fn check_params<F>(store: &mut ParamStore, loss: F) -> Result<Vec<(String, f64)>>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let n_params = store.len();
    let analytic = {
        let mut tape = Tape::new(store);
        let l = loss(&mut tape)?;
        tape.backward(l)?.param_grads(n_params)
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let l = loss(&mut tape)?;
        Ok(tape.value(l).item())
    };

    let ids: Vec<_> = (0..n_params).map(super::ParamId).collect();
    let mut out = Vec::with_capacity(n_params);
    for id in ids {
        let len = store.get(id).value.numel();
        let a = analytic
            .get(id)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; len]);
        let mut numeric = Vec::with_capacity(len);
        for j in 0..len {
            let orig = store.get(id).value.data()[j];
            store.get_mut(id).value.data_mut()[j] = orig + FD_STEP;
            let fp = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig - FD_STEP;
            let fm = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig;
            numeric.push((fp - fm) / (2.0 * FD_STEP));
        }
        out.push((store.get(id).name.clone(), relative_error(&a, &numeric)));
    }
    Ok(out)
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("positive extents")
}

/// Distinct values at least 0.01 apart and away from zero, so ReLU and
/// max kinks stay far outside the finite-difference step.
fn off_kinks(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| 0.01 + 0.01 * i as f64).collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.gen_range(0..=i));
    }
    let data = vals.iter().map(|v| if rng.gen() { *v } else { -*v }).collect();
    Tensor::new(shape.to_vec(), data).expect("positive extents")
}

/// Gradchecks every differentiable tape operation on random inputs drawn
/// from `seed`. Returns `(operation, worst relative error over its inputs)`.
pub fn operator_suite(seed: u64) -> Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut record = |name: &str, errs: Vec<f64>| out.push((name.to_string(), errs.into_iter().fold(0.0, f64::max)));
    let s = seed.wrapping_mul(31);

    let ins = [uniform(&[5, 3], &mut rng), uniform(&[3, 4], &mut rng), uniform(&[4], &mut rng)];
    record("linear", check_inputs(&ins, s, |t, v| t.linear(v[0], v[1], Some(v[2])))?);

    let x = off_kinks(&[4, 5], &mut rng);
    record("relu", check_inputs(&[x], s + 1, |t, v| Ok(t.relu(v[0])))?);

    let x = uniform(&[6, 3], &mut rng);
    let idx: Vec<usize> = (0..10).map(|_| rng.gen_range(0..6)).collect();
    record("gather_rows", check_inputs(&[x], s + 2, |t, v| t.gather_rows(v[0], &idx))?);

    let x = off_kinks(&[3, 4, 5], &mut rng);
    record("group_max_pool", check_inputs(&[x], s + 3, |t, v| t.group_max_pool(v[0]))?);

    let ins = [uniform(&[4, 2, 4, 3], &mut rng), uniform(&[2, 3, 5], &mut rng), uniform(&[5], &mut rng)];
    record("axis_conv2", check_inputs(&ins, s + 4, |t, v| t.axis_conv2(v[0], v[1], Some(v[2])))?);

    let ins = [uniform(&[4, 2], &mut rng), uniform(&[4, 3], &mut rng), uniform(&[4, 1], &mut rng)];
    record("concat_channels", check_inputs(&ins, s + 5, |t, v| t.concat_channels(v))?);

    let x = uniform(&[3, 8], &mut rng);
    record("reshape", check_inputs(&[x], s + 6, |t, v| t.reshape(v[0], &[6, 2, 2]))?);

    let x = uniform(&[5, 3], &mut rng);
    let idx: Vec<usize> = (0..12).map(|_| rng.gen_range(0..5)).collect();
    let w: Vec<f64> = (0..12).map(|_| rng.gen()).collect();
    record("weighted_gather", check_inputs(&[x], s + 7, |t, v| t.weighted_gather(v[0], &idx, &w, 3))?);

    let logits = uniform(&[7, 4], &mut rng);
    let labels: Vec<usize> = (0..7).map(|_| rng.gen_range(0..4)).collect();
    record("softmax_cross_entropy", check_inputs(&[logits], s + 8, |t, v| t.softmax_cross_entropy(v[0], &labels))?);

    let ins = [uniform(&[3, 2], &mut rng), uniform(&[3, 2], &mut rng)];
    record("add", check_inputs(&ins, s + 9, |t, v| t.add(v[0], v[1]))?);

    let x = uniform(&[2, 3, 2], &mut rng);
    record("sum", check_inputs(&[x], s + 10, |t, v| Ok(t.sum(v[0])))?);

    Ok(out)
}
