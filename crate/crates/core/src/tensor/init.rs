//! Parameter initialization and the SGD update.

use rand::Rng;

use super::{Graph, Tensor, TensorRef};

/// Glorot (uniform) initialization: draws from
/// `±sqrt(6 / (fan_in + fan_out))` where for a `[r, c]` matrix fan_in = r
/// and fan_out = c.
pub fn glorot_init<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    let (fan_in, fan_out) = match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("glorot_init expects a 1-D or 2-D shape, got {shape:?}"),
    };
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let values: Vec<f64> = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), values)
}

/// Plain SGD: `p <- p - lr * g` over every parameter with an allocated
/// gradient. `lr` must be positive (config error otherwise); `lr == 0` is
/// allowed and leaves parameters unchanged.
pub fn sgd_step(graph: &mut Graph, params: &[TensorRef], lr: f64) {
    assert!(lr >= 0.0 && lr.is_finite(), "config error: learning rate must be non-negative, got {lr}");
    for &p in params {
        let Some(g) = graph.grad(p) else { continue };
        let g = g.to_vec();
        let mut v = graph.values(p).to_vec();
        for (vi, gi) in v.iter_mut().zip(&g) {
            *vi -= lr * gi;
        }
        graph.set_values(p, &v);
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_gradients(graph: &mut Graph, params: &[TensorRef], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "config error: max_norm must be positive, got {max_norm}");
    let mut sq = 0.0;
    for &p in params {
        if let Some(g) = graph.grad(p) {
            sq += g.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for &p in params {
            if graph.grad(p).is_some() {
                let scaled: Vec<f64> = graph.grad(p).unwrap().iter().map(|v| v * scale).collect();
                graph.set_grad(p, &scaled);
            }
        }
    }
    norm
}
