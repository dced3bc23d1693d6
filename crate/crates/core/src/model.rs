//! The victim network and its single-shot gradient oracle.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::activation::Activation;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::rng::{SeededRng, Stream};
use crate::tensor::{sym_eig, SymMatrix};

/// A training batch: columns of `x` are the samples.
#[derive(Debug, Clone)]
pub struct Batch {
    x: Array2<f64>,
    y: Array1<f64>,
    normalized: bool,
    pi_min: f64,
}

impl Batch {
    /// Validates shapes and computes the smallest singular value of `x`,
    /// which must be positive.
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (d, b) = x.dim();
        if d == 0 || b == 0 {
            return Err(Error::contract("batch must have positive dimension and size"));
        }
        check_dim("batch labels", b, y.len())?;
        check_finite("batch inputs", x.iter())?;
        check_finite("batch labels", y.iter())?;
        if b > d {
            return Err(Error::Degenerate(format!(
                "{b} samples in dimension {d} cannot be linearly independent"
            )));
        }
        let gram = SymMatrix::new(x.t().dot(&x))?;
        let eig = sym_eig(&gram)?;
        let smallest = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
        let pi_min = smallest.max(0.0).sqrt();
        let scale = gram.frobenius().sqrt();
        if pi_min <= 1e-12 * scale.max(1.0) {
            return Err(Error::Degenerate("batch columns are linearly dependent".into()));
        }
        let normalized = x
            .axis_iter(Axis(1))
            .all(|c| (c.dot(&c).sqrt() - 1.0).abs() <= 1e-12);
        Ok(Self {
            x,
            y,
            normalized,
            pi_min,
        })
    }

    /// Like [`Batch::new`] but also requires labels in `{+1, −1}`.
    pub fn classification(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::contract("classification labels must be +1 or -1"));
        }
        Self::new(x, y)
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn size(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_classification(&self) -> bool {
        self.y.iter().all(|&v| v == 1.0 || v == -1.0)
    }

    /// Smallest singular value of the data matrix.
    pub fn pi_min(&self) -> f64 {
        self.pi_min
    }
}

/// Parameters `(a, W¹, …, Wˡ⁻¹)` of a fully connected network with one
/// activation per hidden layer and a scalar output bias.
#[derive(Debug, Clone)]
pub struct ModelParams {
    a: Array1<f64>,
    layers: Vec<Array2<f64>>,
    activations: Vec<Activation>,
    bias: f64,
}

impl ModelParams {
    pub fn new(a: Array1<f64>, layers: Vec<Array2<f64>>, activations: Vec<Activation>, bias: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("a network needs at least one hidden layer"));
        }
        check_dim("activations per layer", layers.len(), activations.len())?;
        for k in 1..layers.len() {
            check_dim("layer chaining", layers[k - 1].nrows(), layers[k].ncols())?;
        }
        check_dim("output weights", layers[layers.len() - 1].nrows(), a.len())?;
        check_finite("output weights", a.iter())?;
        for w in &layers {
            check_finite("layer weights", w.iter())?;
        }
        check_finite("output bias", std::iter::once(&bias))?;
        Ok(Self {
            a,
            layers,
            activations,
            bias,
        })
    }

    /// Network depth `l`: number of weight matrices plus the output layer.
    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].ncols()
    }

    /// Number of units feeding the output layer.
    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &Array1<f64> {
        &self.a
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn first_layer(&self) -> &Array2<f64> {
        &self.layers[0]
    }

    pub fn last_layer(&self) -> &Array2<f64> {
        &self.layers[self.layers.len() - 1]
    }

    /// Activation applied after the last weight matrix.
    pub fn output_activation(&self) -> &Activation {
        &self.activations[self.activations.len() - 1]
    }

    /// Representation entering the last weight matrix, one column per input.
    pub fn penultimate(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("input dimension", self.input_dim(), x.nrows())?;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (w, act) in self.layers[..last].iter().zip(&self.activations) {
            h = w.dot(&h).mapv(|v| act.eval(v));
        }
        Ok(h)
    }

    /// Pre-activations of the last hidden layer (`width x n`).
    pub fn last_preactivations(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.last_layer().dot(&self.penultimate(x)?))
    }

    /// `f(x)` for every column of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let act = self.output_activation();
        let hidden = self.last_preactivations(x)?.mapv(|v| act.eval(v));
        Ok(hidden.t().dot(&self.a) + self.bias)
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Result<f64> {
        let col = x.insert_axis(Axis(1));
        Ok(self.forward_batch(col)?[0])
    }

    /// `rᵢ = f(xᵢ) − yᵢ`.
    pub fn residuals(&self, batch: &Batch) -> Result<Array1<f64>> {
        Ok(self.forward_batch(batch.x().view())? - batch.y())
    }

    /// `L = Σᵢ (yᵢ − f(xᵢ))²`.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        Ok(self.residuals(batch)?.mapv(|r| r * r).sum())
    }
}

/// Two-layer victim with `aⱼ = 1/m` and standard-normal first-layer rows.
pub fn init_two_layer(m: usize, d: usize, seed: u64, act: Activation, bias: f64) -> Result<ModelParams> {
    if m == 0 || d == 0 {
        return Err(Error::contract("width and input dimension must be positive"));
    }
    let w = SeededRng::new(seed, Stream::Weights).normal_matrix(m, d);
    ModelParams::new(Array1::from_elem(m, 1.0 / m as f64), vec![w], vec![act], bias)
}

/// Depth-`l` network whose last hidden layer sees `zⱼ·x` (up to a fixed
/// scale) through the `[I; −I; 0]` input split.
///
/// `acts` holds one activation per hidden layer (`l − 1` of them). The
/// random vectors `zⱼ` are the rows [`init_two_layer`] would draw for the
/// same `(m, d, seed)`.
///
/// Transport layers are stored `2d` wide rather than zero-padded to `m`:
/// padded units output `σ(0) = 0` into zero weights, so the network function
/// and the queried gradient are the same and memory stays `O(md)`.
pub fn init_deep_design(l: usize, m: usize, d: usize, seed: u64, acts: &[Activation], bias: f64) -> Result<ModelParams> {
    if l < 3 {
        return Err(Error::InvalidDesign(format!("designed networks need depth >= 3, got {l}")));
    }
    check_dim("activations per hidden layer", l - 1, acts.len())?;
    if d == 0 || m < 2 * d {
        return Err(Error::InvalidDesign(format!(
            "width {m} cannot hold the [I; -I] split of dimension {d}"
        )));
    }
    let mut first = Array2::zeros((2 * d, d));
    for i in 0..d {
        first[[i, i]] = 1.0;
        first[[d + i, i]] = -1.0;
    }
    let mut layers = vec![first];
    for _ in 0..l.saturating_sub(3) {
        layers.push(Array2::eye(2 * d));
    }
    let z = SeededRng::new(seed, Stream::Weights).normal_matrix(m, d);
    let mut last = Array2::zeros((m, 2 * d));
    last.slice_mut(s![.., ..d]).assign(&z);
    last.slice_mut(s![.., d..]).assign(&(-&z));
    layers.push(last);
    ModelParams::new(Array1::from_elem(m, 1.0 / m as f64), layers, acts.to_vec(), bias)
}

/// One-shot permission to query the gradient oracle.
#[derive(Debug, Default)]
pub struct QueryBudget {
    spent: bool,
}

impl QueryBudget {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_spent(&self) -> bool {
        self.spent
    }

    fn spend(&mut self) -> Result<()> {
        if self.spent {
            return Err(Error::BudgetExhausted);
        }
        self.spent = true;
        Ok(())
    }
}

/// What the attacker observes.
///
/// Gradients are those of `½ L`, i.e. `g_a[j] = Σᵢ rᵢ σ(wⱼ·hᵢ)`; the factor
/// two of `L = Σᵢ (yᵢ − f(xᵢ))²` is dropped so that the moment estimators
/// need no extra constant.
#[derive(Debug, Clone)]
pub struct GradientResponse {
    pub g_a: Array1<f64>,
    /// First-layer gradient, present for two-layer victims only.
    pub g_w: Option<Array2<f64>>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// The single gradient query. Gaussian noise of standard deviation
/// `noise_sigma` is added to every reported entry.
pub fn gradient_query(
    params: &ModelParams,
    batch: &Batch,
    noise_sigma: f64,
    seed: u64,
    budget: &mut QueryBudget,
) -> Result<GradientResponse> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::contract(format!("noise level must be >= 0, got {noise_sigma}")));
    }
    check_dim("batch dimension", params.input_dim(), batch.dim())?;
    budget.spend()?;

    let act = params.output_activation();
    let pre = params.last_preactivations(batch.x().view())?;
    let hidden = pre.mapv(|v| act.eval(v));
    let r = hidden.t().dot(params.a()) + params.bias() - batch.y();
    let mut g_a = hidden.dot(&r);

    let mut g_w = (params.depth() == 2).then(|| {
        let mut coef = pre.mapv(|v| act.deriv(v)) * r.view().insert_axis(Axis(0));
        coef *= &params.a().view().insert_axis(Axis(1));
        coef.dot(&batch.x().t())
    });

    if noise_sigma > 0.0 {
        let mut rng = SeededRng::new(seed, Stream::GradientNoise);
        g_a.mapv_inplace(|v| v + noise_sigma * rng.normal());
        if let Some(g) = g_w.as_mut() {
            g.mapv_inplace(|v| v + noise_sigma * rng.normal());
        }
    }
    check_finite("gradient", g_a.iter())?;
    if let Some(g) = &g_w {
        check_finite("first-layer gradient", g.iter())?;
    }
    Ok(GradientResponse {
        g_a,
        g_w,
        noise_sigma,
        seed,
    })
}
