use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::TriMesh;
use crate::{Error, Result, Vec3};

/// Width of the periodic input encoding.
pub const ENCODING_WIDTH: usize = 48;
/// Width of each hidden layer.
pub const HIDDEN_WIDTH: usize = 128;
pub const HIDDEN_LAYERS: usize = 3;
pub const EMBEDDING_DIM: usize = 3;
/// Frequency factor applied to normalized coordinates before the first sine.
pub const DEFAULT_OMEGA0: f64 = 30.0;

const CHECKPOINT_MAGIC: &[u8; 4] = b"PMLP";
const CHECKPOINT_VERSION: u32 = 1;

/// Axis-aligned scene box mapped onto `[-1, 1]³` before encoding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl SceneBounds {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|a| !(max[a] > min[a]) || !min[a].is_finite() || !max[a].is_finite()) {
            return Err(Error::invalid(format!("bad scene bounds {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    /// Box around `points` grown by `margin` (a fraction of the extent) on
    /// every side.
    pub fn around(points: impl IntoIterator<Item = Vec3>, margin: f64) -> Result<Self> {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        if !lo.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("cannot bound an empty point set"));
        }
        let pad = (hi - lo).map(|e| (e * margin).max(0.05));
        Self::new(lo - pad, hi + pad)
    }

    pub fn normalize(&self, p: &Vec3) -> Vec3 {
        (p - self.min).component_div(&(self.max - self.min)) * 2.0 - Vec3::repeat(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

fn layer_table() -> Vec<Layer> {
    let mut widths = vec![3, ENCODING_WIDTH];
    widths.extend(std::iter::repeat_n(HIDDEN_WIDTH, HIDDEN_LAYERS));
    widths.push(EMBEDDING_DIM);
    let mut offset = 0;
    widths
        .windows(2)
        .map(|w| {
            let l = Layer {
                fan_in: w[0],
                fan_out: w[1],
                weights: offset,
                bias: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            l
        })
        .collect()
}

/// Adaptive-moment optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-scene embedding field `f: R³ → R³`.
///
/// Normalized input is scaled by `omega0` and lifted through a 48-wide sine
/// layer, followed by three 128-wide sine layers and a linear head. All
/// parameters live in one flat vector, layer by layer, each layer storing a
/// row-major `fan_out × fan_in` weight block followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneEmbeddingMlp {
    layers: Vec<Layer>,
    params: Vec<f64>,
    bounds: SceneBounds,
    omega0: f64,
    pub(crate) adam: AdamState,
}

/// Activations kept from a batched forward pass for the backward pass.
pub(crate) struct ForwardCache {
    pub batch: usize,
    /// Scaled inputs, `batch × 3`.
    input: Vec<f64>,
    /// Pre-activations of each sine layer.
    pre: Vec<Vec<f64>>,
    /// Post-activations of each sine layer.
    post: Vec<Vec<f64>>,
    /// Output embeddings, `batch × 3`.
    pub output: Vec<f64>,
}

/// `C = alpha·A·B + beta·C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let max_a = (m - 1) * rsa + k.saturating_sub(1) * csa;
    let max_b = k.saturating_sub(1) * rsb + (n - 1) * csb;
    let max_c = (m - 1) * rsc + (n - 1);
    assert!(k == 0 || (max_a < a.len() && max_b < b.len()));
    assert!(max_c < c.len());
    // SAFETY: the asserts above bound every element the kernel touches, and
    // `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

impl SceneEmbeddingMlp {
    /// Randomly initialized network: first-layer weights uniform in
    /// `±√(6/fan_in)/omega0`, later weights in `±√(6/fan_in)`, biases in
    /// `±1/√fan_in`.
    pub fn new(bounds: SceneBounds, seed: u64) -> Self {
        Self::with_omega0(bounds, DEFAULT_OMEGA0, seed)
    }

    pub fn with_omega0(bounds: SceneBounds, omega0: f64, seed: u64) -> Self {
        let mut mlp = Self::zeros(bounds);
        mlp.omega0 = omega0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (li, l) in mlp.layers.clone().iter().enumerate() {
            let mut w_bound = (6.0 / l.fan_in as f64).sqrt();
            if li == 0 {
                w_bound /= omega0;
            }
            let b_bound = 1.0 / (l.fan_in as f64).sqrt();
            for p in &mut mlp.params[l.weights..l.bias] {
                *p = rng.random_range(-w_bound..w_bound);
            }
            for p in &mut mlp.params[l.bias..l.bias + l.fan_out] {
                *p = rng.random_range(-b_bound..b_bound);
            }
        }
        mlp
    }

    /// Network with every weight and bias zero.
    pub fn zeros(bounds: SceneBounds) -> Self {
        let layers = layer_table();
        let n = layers.last().map_or(0, |l| l.bias + l.fan_out);
        Self {
            layers,
            params: vec![0.0; n],
            bounds,
            omega0: DEFAULT_OMEGA0,
            adam: AdamState::new(n),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::LengthMismatch(params.len(), self.params.len()));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn bounds(&self) -> &SceneBounds {
        &self.bounds
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.adam.step
    }

    pub fn forward(&self, p: &Vec3) -> Vec3 {
        self.forward_batch(std::slice::from_ref(p))[0]
    }

    pub fn forward_batch(&self, points: &[Vec3]) -> Vec<Vec3> {
        let cache = self.forward_cached(points);
        cache
            .output
            .chunks_exact(EMBEDDING_DIM)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect()
    }

    pub(crate) fn forward_cached(&self, points: &[Vec3]) -> ForwardCache {
        let batch = points.len();
        let mut input = Vec::with_capacity(batch * 3);
        for p in points {
            let q = self.bounds.normalize(p) * self.omega0;
            input.extend_from_slice(q.as_slice());
        }
        let sine_layers = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(sine_layers);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(sine_layers);
        for (li, l) in self.layers.iter().enumerate() {
            let prev = if li == 0 { &input } else { &post[li - 1] };
            let mut z = Vec::with_capacity(batch * l.fan_out);
            for _ in 0..batch {
                z.extend_from_slice(&self.params[l.bias..l.bias + l.fan_out]);
            }
            gemm(
                batch,
                l.fan_in,
                l.fan_out,
                prev,
                (l.fan_in, 1),
                &self.params[l.weights..l.bias],
                (1, l.fan_in),
                1.0,
                &mut z,
                l.fan_out,
            );
            if li < sine_layers {
                let a = z.iter().map(|x| x.sin()).collect();
                pre.push(z);
                post.push(a);
            } else {
                return ForwardCache {
                    batch,
                    input,
                    pre,
                    post,
                    output: z,
                };
            }
        }
        unreachable!("network has a linear head")
    }

    /// Accumulates into `grad` the parameter gradient of `Σ dout · f(p)`,
    /// where `dout` is `batch × 3` (the loss gradient w.r.t. each output).
    pub(crate) fn backward(&self, cache: &ForwardCache, dout: &[f64], grad: &mut [f64]) {
        let batch = cache.batch;
        assert_eq!(dout.len(), batch * EMBEDDING_DIM);
        assert_eq!(grad.len(), self.params.len());
        let mut delta = dout.to_vec();
        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let prev: &[f64] = if li == 0 { &cache.input } else { &cache.post[li - 1] };
            if li < self.layers.len() - 1 {
                for (d, z) in delta.iter_mut().zip(&cache.pre[li]) {
                    *d *= z.cos();
                }
            }
            // dW += deltaᵀ · prev
            gemm(
                l.fan_out,
                batch,
                l.fan_in,
                &delta,
                (1, l.fan_out),
                prev,
                (l.fan_in, 1),
                1.0,
                &mut grad[l.weights..l.bias],
                l.fan_in,
            );
            let gb = &mut grad[l.bias..l.bias + l.fan_out];
            for row in delta.chunks_exact(l.fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if li > 0 {
                let mut next = vec![0.0; batch * l.fan_in];
                gemm(
                    batch,
                    l.fan_out,
                    l.fan_in,
                    &delta,
                    (l.fan_out, 1),
                    &self.params[l.weights..l.bias],
                    (l.fan_in, 1),
                    0.0,
                    &mut next,
                    l.fan_in,
                );
                delta = next;
            }
        }
    }

    /// One Adam update with the given gradient.
    pub(crate) fn adam_step(&mut self, grad: &[f64], lr: f64) {
        let st = &mut self.adam;
        st.step += 1;
        let t = st.step as i32;
        let c1 = 1.0 - st.beta1.powi(t);
        let c2 = 1.0 - st.beta2.powi(t);
        for i in 0..self.params.len() {
            let g = grad[i];
            st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
            st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
            let mhat = st.m[i] / c1;
            let vhat = st.v[i] / c2;
            self.params[i] -= lr * mhat / (vhat.sqrt() + st.eps);
        }
        debug_assert!(self.params.iter().all(|x| x.is_finite()));
    }

    /// Serializes the parameters: magic `PMLP`, version, parameter count,
    /// then little-endian `f32` parameters.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(*p as f32).to_le_bytes());
        }
        out
    }

    /// Restores a checkpoint. Optimizer moments start fresh.
    pub fn from_checkpoint_bytes(bytes: &[u8], bounds: SceneBounds) -> Result<Self> {
        let params = decode_checkpoint(bytes)?;
        let mut mlp = Self::zeros(bounds);
        mlp.set_params(&params)?;
        Ok(mlp)
    }
}

/// Decodes a `PMLP` checkpoint into its parameter vector.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::parse("not a PMLP checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(format!("unsupported checkpoint version {version}")));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != count.saturating_mul(4) {
        return Err(Error::parse(format!(
            "checkpoint declares {count} parameters but carries {} bytes",
            body.len()
        )));
    }
    let params: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if params.iter().any(|x| !x.is_finite()) {
        return Err(Error::parse("checkpoint contains non-finite parameters"));
    }
    Ok(params)
}

/// Fills `vertex_embeddings` with `f(v)` for every vertex.
pub fn embed_mesh(mlp: &SceneEmbeddingMlp, mesh: &TriMesh) -> TriMesh {
    const CHUNK: usize = 4096;
    let mut embeddings = Vec::with_capacity(mesh.vertices.len());
    for chunk in mesh.vertices.chunks(CHUNK) {
        embeddings.extend(mlp.forward_batch(chunk));
    }
    let mut out = mesh.clone();
    out.embeddings = Some(embeddings);
    out
}
