//! Finite-difference gradient verification.

use super::{Graph, Tensor, TensorRef};

/// Checks analytic gradients of a scalar-valued tensor function against
/// central differences.
///
/// `f` receives a fresh graph plus leaves built from `inputs` (all marked
/// requires-grad) and must return a scalar loss. Returns the maximum over
/// all input coordinates of `|analytic - numeric| / max(|analytic|,
/// |numeric|, 1e-8)`. Only meaningful at 64-bit; `eps` defaults to 1e-5 via
/// [`grad_check`]'s caller passing that value.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> f64
where
    F: Fn(&mut Graph, &[TensorRef]) -> TensorRef,
{
    // analytic pass
    let mut graph = Graph::new();
    let refs: Vec<TensorRef> = inputs.iter().map(|t| graph.leaf(t.clone(), true)).collect();
    let loss = f(&mut graph, &refs);
    graph.backward(loss);
    let analytic: Vec<Vec<f64>> = refs
        .iter()
        .map(|&r| graph.grad(r).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; graph.values(r).len()]))
        .collect();

    let eval = |perturbed: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let rs: Vec<TensorRef> = perturbed.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let l = f(&mut g, &rs);
        g.scalar_value(l)
    };

    let mut max_rel = 0.0_f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        for ci in 0..t.values.len() {
            let orig = t.values[ci];
            work[ti].values[ci] = orig + eps;
            let plus = eval(&work);
            work[ti].values[ci] = orig - eps;
            let minus = eval(&work);
            work[ti].values[ci] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[ti][ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
    }
    max_rel
}
