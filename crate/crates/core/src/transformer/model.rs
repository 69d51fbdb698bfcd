//! Post-norm transformer encoder with a linear multi-label head and a
//! weight-tied language-model head.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::masks::AttentionMask;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_position: usize,
    pub n_labels: usize,
    #[serde(default)]
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            vocab_size: 1,
            max_position: 256,
            n_labels: 1,
            dropout_rate: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_position", self.max_position),
            ("n_labels", self.n_labels),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

pub type ParamId = usize;

const PER_BLOCK: usize = 12;

/// Ids of one encoder block's tensors.
#[derive(Debug, Clone, Copy)]
pub struct BlockIds {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

impl BlockIds {
    fn new(layer: usize) -> Self {
        let b = 2 + PER_BLOCK * layer;
        BlockIds {
            wq: b,
            wk: b + 1,
            wv: b + 2,
            wo: b + 3,
            w1: b + 4,
            b1: b + 5,
            w2: b + 6,
            b2: b + 7,
            ln1_gain: b + 8,
            ln1_bias: b + 9,
            ln2_gain: b + 10,
            ln2_bias: b + 11,
        }
    }
}

pub const TOKEN_EMBED: ParamId = 0;
pub const POS_EMBED: ParamId = 1;

/// All learned tensors, addressed by [`ParamId`]. Biases and layer-norm
/// vectors are stored as 1×m rows. Per-head query/key/value projections are
/// column blocks of the d_model×d_model matrices `wq`, `wk`, `wv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Vec<Array2<f64>>,
}

const BLOCK_NAMES: [&str; PER_BLOCK] = [
    "wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
];

impl ModelParams {
    pub fn block(&self, layer: usize) -> BlockIds {
        BlockIds::new(layer)
    }

    pub fn classifier_w(&self) -> ParamId {
        2 + PER_BLOCK * self.config.n_layers
    }

    pub fn classifier_b(&self) -> ParamId {
        self.classifier_w() + 1
    }

    pub fn names(config: &ModelConfig) -> Vec<String> {
        let mut names = vec!["token_embed".to_string(), "pos_embed".to_string()];
        for l in 0..config.n_layers {
            names.extend(BLOCK_NAMES.iter().map(|n| format!("blocks.{l}.{n}")));
        }
        names.push("classifier.w".into());
        names.push("classifier.b".into());
        names
    }

    pub fn shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
        let (d, f) = (config.d_model, config.d_ff);
        let mut shapes = vec![(config.vocab_size, d), (config.max_position, d)];
        for _ in 0..config.n_layers {
            shapes.extend([
                (d, d),
                (d, d),
                (d, d),
                (d, d),
                (d, f),
                (1, f),
                (f, d),
                (1, d),
                (1, d),
                (1, d),
                (1, d),
                (1, d),
            ]);
        }
        shapes.push((d, config.n_labels));
        shapes.push((1, config.n_labels));
        shapes
    }

    /// Gaussian(0, 0.02) matrices, zero biases, unit layer-norm gains.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        Self::init_with_std(config, INIT_STD, rng)
    }

    pub fn init_with_std<R: Rng>(config: &ModelConfig, std: f64, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let names = Self::names(config);
        let tensors = Self::shapes(config)
            .into_iter()
            .zip(&names)
            .map(|(shape, name)| {
                if name.ends_with("_gain") {
                    Array2::ones(shape)
                } else if name.ends_with("_bias")
                    || name.ends_with(".b")
                    || name.ends_with(".b1")
                    || name.ends_with(".b2")
                {
                    Array2::zeros(shape)
                } else {
                    Array2::from_shape_simple_fn(shape, || normal.sample(rng))
                }
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            tensors,
        })
    }

    pub fn zeros_like(&self) -> Vec<Array2<f64>> {
        self.tensors
            .iter()
            .map(|t| Array2::zeros(t.raw_dim()))
            .collect()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Array2::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Token ids, positions, and mask for one sequence or lattice.
#[derive(Debug, Clone)]
pub struct EncodedInput {
    tokens: Vec<usize>,
    positions: Vec<usize>,
    mask: AttentionMask,
    additive: Array2<f64>,
    classify_index: usize,
}

impl EncodedInput {
    pub fn new(
        tokens: Vec<usize>,
        positions: Vec<usize>,
        mask: AttentionMask,
        classify_index: usize,
    ) -> Result<Self> {
        let n = tokens.len();
        if n == 0 || positions.len() != n || mask.size() != n {
            return Err(Error::Shape(format!(
                "{} tokens, {} positions, mask of size {}",
                n,
                positions.len(),
                mask.size()
            )));
        }
        if classify_index >= n {
            return Err(Error::OutOfRange(format!(
                "classify_index {classify_index} for length {n}"
            )));
        }
        let additive = mask.to_additive();
        Ok(EncodedInput {
            tokens,
            positions,
            mask,
            additive,
            classify_index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn mask(&self) -> &AttentionMask {
        &self.mask
    }

    pub fn additive_mask(&self) -> ArrayView2<'_, f64> {
        self.additive.view()
    }

    pub fn classify_index(&self) -> usize {
        self.classify_index
    }

    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        if let Some(&t) = self.tokens.iter().find(|&&t| t >= config.vocab_size) {
            return Err(Error::OutOfRange(format!(
                "token id {t} >= vocab_size {}",
                config.vocab_size
            )));
        }
        if let Some(&p) = self.positions.iter().find(|&&p| p >= config.max_position) {
            return Err(Error::OutOfRange(format!(
                "position {p} >= max_position {}",
                config.max_position
            )));
        }
        Ok(())
    }
}

/// Dropout stream for training passes; `None` means evaluation.
pub type DropoutRng<'r> = Option<&'r mut rand_chacha::ChaCha8Rng>;

/// Parameter leaves of one forward pass.
pub struct Bound {
    pub vars: Vec<Var>,
}

impl Bound {
    pub fn new<'a>(tape: &mut Tape<'a>, params: &'a ModelParams) -> Self {
        Bound {
            vars: params.tensors.iter().map(|t| tape.param(t)).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id]
    }
}

fn dropout(tape: &mut Tape<'_>, x: Var, rate: f64, rng: &mut DropoutRng<'_>) -> Var {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            let shape = tape.value(x).raw_dim();
            let m = Array2::from_shape_simple_fn(shape, || {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            });
            tape.mul_const(x, m)
        }
        _ => x,
    }
}

/// `embed_token[w_i] + embed_pos[position_i]`.
pub fn embed_on(tape: &mut Tape<'_>, p: &Bound, input: &EncodedInput) -> Var {
    let tok = tape.gather_rows(p.get(TOKEN_EMBED), &input.tokens);
    let pos = tape.gather_rows(p.get(POS_EMBED), &input.positions);
    tape.add(tok, pos)
}

/// `softmax(Q Kᵀ / sqrt(d_k) + mask) V`.
pub fn attention_on(tape: &mut Tape<'_>, q: Var, k: Var, v: Var, mask: ArrayView2<f64>) -> Var {
    let d_k = tape.value(q).ncols() as f64;
    let scores = tape.matmul_nt(q, k);
    let scores = tape.scale(scores, 1.0 / d_k.sqrt());
    let weights = tape.masked_softmax(scores, mask);
    tape.matmul(weights, v)
}

pub fn multi_head_on(
    tape: &mut Tape<'_>,
    p: &Bound,
    b: &BlockIds,
    x: Var,
    mask: ArrayView2<f64>,
    n_heads: usize,
) -> Var {
    let q = tape.matmul(x, p.get(b.wq));
    let k = tape.matmul(x, p.get(b.wk));
    let v = tape.matmul(x, p.get(b.wv));
    let d_k = tape.value(q).ncols() / n_heads;
    let heads: Vec<Var> = (0..n_heads)
        .map(|h| {
            let qh = tape.slice_cols(q, h * d_k, d_k);
            let kh = tape.slice_cols(k, h * d_k, d_k);
            let vh = tape.slice_cols(v, h * d_k, d_k);
            attention_on(tape, qh, kh, vh, mask)
        })
        .collect();
    let cat = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)
    };
    tape.matmul(cat, p.get(b.wo))
}

/// `max(0, x W_1 + b_1) W_2 + b_2`, row by row.
pub fn ffn_on(tape: &mut Tape<'_>, p: &Bound, b: &BlockIds, x: Var) -> Var {
    let h = tape.matmul(x, p.get(b.w1));
    let h = tape.add_row(h, p.get(b.b1));
    let h = tape.relu(h);
    let o = tape.matmul(h, p.get(b.w2));
    tape.add_row(o, p.get(b.b2))
}

/// `H = LN(MultiHead(X) + X); X' = LN(FFN(H) + H)`.
#[allow(clippy::too_many_arguments)]
pub fn encoder_block_on(
    tape: &mut Tape<'_>,
    p: &Bound,
    b: &BlockIds,
    x: Var,
    mask: ArrayView2<f64>,
    config: &ModelConfig,
    rng: &mut DropoutRng<'_>,
) -> Var {
    let a = multi_head_on(tape, p, b, x, mask, config.n_heads);
    let a = dropout(tape, a, config.dropout_rate, rng);
    let h = tape.add(a, x);
    let h = tape.layer_norm(h, p.get(b.ln1_gain), p.get(b.ln1_bias), LAYER_NORM_EPS);
    let f = ffn_on(tape, p, b, h);
    let f = dropout(tape, f, config.dropout_rate, rng);
    let o = tape.add(f, h);
    tape.layer_norm(o, p.get(b.ln2_gain), p.get(b.ln2_bias), LAYER_NORM_EPS)
}

pub fn encode_on(
    tape: &mut Tape<'_>,
    p: &Bound,
    input: &EncodedInput,
    config: &ModelConfig,
    rng: &mut DropoutRng<'_>,
) -> Var {
    let mut x = embed_on(tape, p, input);
    for l in 0..config.n_layers {
        x = encoder_block_on(
            tape,
            p,
            &BlockIds::new(l),
            x,
            input.additive_mask(),
            config,
            rng,
        );
    }
    x
}

/// `hidden[index] · W_y + b_y` as a 1×n_labels row.
pub fn classify_on(
    tape: &mut Tape<'_>,
    p: &Bound,
    params: &ModelParams,
    hidden: Var,
    index: usize,
) -> Var {
    let h = tape.gather_rows(hidden, &[index]);
    let z = tape.matmul(h, p.get(params.classifier_w()));
    tape.add_row(z, p.get(params.classifier_b()))
}

/// Mean next-token negative log-likelihood with the tied output head.
pub fn lm_loss_on(tape: &mut Tape<'_>, p: &Bound, hidden: Var, tokens: &[usize]) -> Result<Var> {
    if tokens.len() < 2 {
        return Err(Error::Shape(format!(
            "language-model loss needs 2 tokens, got {}",
            tokens.len()
        )));
    }
    let prev: Vec<usize> = (0..tokens.len() - 1).collect();
    let h = tape.gather_rows(hidden, &prev);
    let logits = tape.matmul_nt(h, p.get(TOKEN_EMBED));
    Ok(tape.cross_entropy(logits, &tokens[1..]))
}

pub fn classification_loss_on(tape: &mut Tape<'_>, logits: Var, gold: &[usize]) -> Var {
    let n = tape.value(logits).ncols();
    let mut targets = Array2::zeros((1, n));
    for &g in gold {
        targets[[0, g]] = 1.0;
    }
    tape.bce_with_logits(logits, targets)
}

// Standalone evaluations of single components.

fn shape_err(what: &str) -> Error {
    Error::Shape(what.to_string())
}

pub fn attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    mask: &AttentionMask,
) -> Result<Array2<f64>> {
    if q.ncols() != k.ncols()
        || k.nrows() != v.nrows()
        || mask.size() != q.nrows()
        || mask.size() != k.nrows()
    {
        return Err(shape_err("attention operands disagree"));
    }
    let mut t = Tape::new();
    let (q, k, v) = (
        t.constant(q.clone()),
        t.constant(k.clone()),
        t.constant(v.clone()),
    );
    let add = mask.to_additive();
    let o = attention_on(&mut t, q, k, v, add.view());
    Ok(t.value(o).clone())
}

pub fn multi_head(
    x: &Array2<f64>,
    mask: &AttentionMask,
    params: &ModelParams,
    layer: usize,
) -> Result<Array2<f64>> {
    check_hidden(x, mask, params)?;
    let mut t = Tape::new();
    let p = Bound::new(&mut t, params);
    let xv = t.constant(x.clone());
    let add = mask.to_additive();
    let o = multi_head_on(
        &mut t,
        &p,
        &BlockIds::new(layer),
        xv,
        add.view(),
        params.config.n_heads,
    );
    Ok(t.value(o).clone())
}

pub fn ffn(x: &Array2<f64>, params: &ModelParams, layer: usize) -> Result<Array2<f64>> {
    if x.ncols() != params.config.d_model {
        return Err(shape_err("ffn input width differs from d_model"));
    }
    let mut t = Tape::new();
    let p = Bound::new(&mut t, params);
    let xv = t.constant(x.clone());
    let o = ffn_on(&mut t, &p, &BlockIds::new(layer), xv);
    Ok(t.value(o).clone())
}

pub fn layer_norm(x: &Array2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() < 2 || gain.dim() != (1, x.ncols()) || bias.dim() != (1, x.ncols()) {
        return Err(shape_err(
            "layer norm needs >= 2 features and matching gain/bias",
        ));
    }
    let mut t = Tape::new();
    let (xv, g, b) = (
        t.constant(x.clone()),
        t.constant(gain.clone()),
        t.constant(bias.clone()),
    );
    let o = t.layer_norm(xv, g, b, LAYER_NORM_EPS);
    Ok(t.value(o).clone())
}

fn check_hidden(x: &Array2<f64>, mask: &AttentionMask, params: &ModelParams) -> Result<()> {
    if x.ncols() != params.config.d_model || x.nrows() != mask.size() {
        return Err(shape_err(
            "hidden sequence does not match d_model or mask size",
        ));
    }
    Ok(())
}

pub fn encoder_block(
    x: &Array2<f64>,
    mask: &AttentionMask,
    params: &ModelParams,
    layer: usize,
) -> Result<Array2<f64>> {
    check_hidden(x, mask, params)?;
    let mut t = Tape::new();
    let p = Bound::new(&mut t, params);
    let xv = t.constant(x.clone());
    let add = mask.to_additive();
    let o = encoder_block_on(
        &mut t,
        &p,
        &BlockIds::new(layer),
        xv,
        add.view(),
        &params.config,
        &mut None,
    );
    Ok(t.value(o).clone())
}

pub fn embed(input: &EncodedInput, params: &ModelParams) -> Result<Array2<f64>> {
    input.check(&params.config)?;
    let mut t = Tape::new();
    let p = Bound::new(&mut t, params);
    let o = embed_on(&mut t, &p, input);
    Ok(t.value(o).clone())
}

/// Final hidden states after all encoder blocks.
pub fn encode(input: &EncodedInput, params: &ModelParams) -> Result<Array2<f64>> {
    input.check(&params.config)?;
    let mut t = Tape::new();
    let p = Bound::new(&mut t, params);
    let o = encode_on(&mut t, &p, input, &params.config, &mut None);
    Ok(t.value(o).clone())
}

pub fn classify(hidden: &Array2<f64>, index: usize, params: &ModelParams) -> Result<Vec<f64>> {
    if index >= hidden.nrows() {
        return Err(Error::OutOfRange(format!(
            "classify index {index} for {} rows",
            hidden.nrows()
        )));
    }
    let mut t = Tape::new();
    let p = Bound::new(&mut t, params);
    let h = t.constant(hidden.clone());
    let o = classify_on(&mut t, &p, params, h, index);
    Ok(t.value(o).row(0).to_vec())
}

pub fn lm_loss(hidden: &Array2<f64>, tokens: &[usize], params: &ModelParams) -> Result<f64> {
    let mut t = Tape::new();
    let p = Bound::new(&mut t, params);
    let h = t.constant(hidden.clone());
    let o = lm_loss_on(&mut t, &p, h, tokens)?;
    Ok(t.scalar(o))
}

pub fn classification_loss(logits: &[f64], gold: &[usize]) -> f64 {
    let mut t = Tape::new();
    let z = t.constant(Array2::from_shape_vec((1, logits.len()), logits.to_vec()).expect("row"));
    let o = classification_loss_on(&mut t, z, gold);
    t.scalar(o)
}

/// Classifier logits for one input.
pub fn predict(input: &EncodedInput, params: &ModelParams) -> Result<Vec<f64>> {
    input.check(&params.config)?;
    let mut t = Tape::new();
    let p = Bound::new(&mut t, params);
    let h = encode_on(&mut t, &p, input, &params.config, &mut None);
    let o = classify_on(&mut t, &p, params, h, input.classify_index());
    Ok(t.value(o).row(0).to_vec())
}

/// Which objective a forward/backward pass optimizes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'g> {
    Classification(&'g [usize]),
    LanguageModel,
}

/// Loss value, classifier logits (if any), and the parameter gradients.
pub struct Pass {
    pub loss: f64,
    pub logits: Option<Vec<f64>>,
    pub grads: Vec<Option<Array2<f64>>>,
}

pub fn forward_backward(
    input: &EncodedInput,
    params: &ModelParams,
    objective: Objective<'_>,
    mut rng: DropoutRng<'_>,
) -> Result<Pass> {
    input.check(&params.config)?;
    let mut t = Tape::new();
    let p = Bound::new(&mut t, params);
    let h = encode_on(&mut t, &p, input, &params.config, &mut rng);
    let (loss, logits) = match objective {
        Objective::Classification(gold) => {
            let z = classify_on(&mut t, &p, params, h, input.classify_index());
            let logits = t.value(z).row(0).to_vec();
            (classification_loss_on(&mut t, z, gold), Some(logits))
        }
        Objective::LanguageModel => (lm_loss_on(&mut t, &p, h, input.tokens())?, None),
    };
    let mut g = t.backward(loss);
    let grads = p.vars.iter().map(|&v| g.take(v)).collect();
    Ok(Pass {
        loss: t.scalar(loss),
        logits,
        grads,
    })
}
