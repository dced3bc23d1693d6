use gradinv_core::{Activation, Batch, ModelParams};
use ndarray::{Array1, Array2};

use crate::{OracleError, Result};

/// Central-difference gradient of `L(Θ) = Σᵢ (yᵢ − f(xᵢ;Θ))²`.
///
/// This is the full gradient of `L`; `gradinv_core::model::gradient_query`
/// reports half of it.
#[derive(Debug, Clone)]
pub struct FiniteDiffGradient {
    pub d_a: Array1<f64>,
    /// Derivative with respect to the first weight matrix, same shape.
    pub d_w1: Array2<f64>,
}

struct Net {
    a: Vec<f64>,
    layers: Vec<Array2<f64>>,
    acts: Vec<Activation>,
    bias: f64,
}

impl Net {
    fn forward(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        for (w, act) in self.layers.iter().zip(&self.acts) {
            h = w
                .rows()
                .into_iter()
                .map(|row| act.eval(row.iter().zip(&h).map(|(a, b)| a * b).sum()))
                .collect();
        }
        self.a.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    fn loss(&self, batch: &Batch) -> f64 {
        let x = batch.x();
        (0..batch.size())
            .map(|i| {
                let xi: Vec<f64> = x.column(i).to_vec();
                let r = batch.y()[i] - self.forward(&xi);
                r * r
            })
            .sum()
    }
}

pub fn finite_diff_grad(params: &ModelParams, batch: &Batch, h: f64) -> Result<FiniteDiffGradient> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(OracleError::Invalid(format!("step {h} outside [1e-7, 1e-3]")));
    }
    if batch.dim() != params.input_dim() {
        return Err(OracleError::Invalid(format!(
            "batch dimension {} does not match network input {}",
            batch.dim(),
            params.input_dim()
        )));
    }
    let mut net = Net {
        a: params.a().to_vec(),
        layers: params.layers().to_vec(),
        acts: params.activations().to_vec(),
        bias: params.bias(),
    };
    let central = |net: &mut Net, get: &dyn Fn(&mut Net) -> &mut f64| {
        let orig = *get(net);
        *get(net) = orig + h;
        let up = net.loss(batch);
        *get(net) = orig - h;
        let down = net.loss(batch);
        *get(net) = orig;
        (up - down) / (2.0 * h)
    };
    let d_a = (0..net.a.len()).map(|j| central(&mut net, &|n| &mut n.a[j])).collect();
    let (rows, cols) = net.layers[0].dim();
    let mut d_w1 = Array2::zeros((rows, cols));
    for j in 0..rows {
        for k in 0..cols {
            d_w1[[j, k]] = central(&mut net, &|n| &mut n.layers[0][[j, k]]);
        }
    }
    Ok(FiniteDiffGradient { d_a, d_w1 })
}
