//! The sensory front end: encode an input vector into a latent trace,
//! optionally file it as an engram, and decode what the model makes of it.
//!
//! Encoders are deliberately small (identity, affine, one hidden layer);
//! they stand in for whatever feature extractor produces the input and are
//! loaded or seeded rather than trained here.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Engram, EpisodicModel};
use crate::query::{rank_triples_with_time_vector, Beta, ScoredTriple};
use crate::tensor::LatentVector;

/// One real-valued input frame of fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct SensoryVector {
    values: Vec<f64>,
}

impl SensoryVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "sensory vector".to_string(),
            });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Maps sensory vectors to latent traces of the model's rank.
///
/// `nonnegative_output` applies a final elementwise `max(x, 0)`, which
/// guarantees the trace is a valid input for nonnegative-mode models.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    kind: EncoderKind,
    nonnegative_output: bool,
}

#[derive(Clone, Debug, PartialEq)]
enum EncoderKind {
    /// Passes the input through; input dimension equals output dimension.
    Identity { dim: usize },
    /// `h = W u + b` with `W` stored row-major, one row per output.
    Affine {
        weights: Vec<f64>,
        bias: Vec<f64>,
        input_dim: usize,
    },
    /// `h = W2 tanh(W1 u + b1) + b2`.
    OneHidden {
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
        input_dim: usize,
        hidden_dim: usize,
    },
}

fn check_finite(values: &[f64], context: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: context.to_string(),
        });
    }
    Ok(())
}

/// `out = W x + b` for a row-major `W` of shape (out_dim, in_dim).
fn affine_forward(weights: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let in_dim = x.len();
    bias.iter()
        .enumerate()
        .map(|(i, b)| {
            let row = &weights[i * in_dim..(i + 1) * in_dim];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

impl Encoder {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: EncoderKind::Identity { dim },
            nonnegative_output: false,
        }
    }

    /// Affine map from `input_dim` inputs to `output_dim` outputs; `weights`
    /// is row-major with one row per output.
    pub fn affine(
        input_dim: usize,
        output_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != input_dim * output_dim || bias.len() != output_dim {
            return Err(Error::InvalidArgument {
                reason: format!(
                    "affine encoder {input_dim}->{output_dim} needs {} weights and {output_dim} biases, got {} and {}",
                    input_dim * output_dim,
                    weights.len(),
                    bias.len()
                ),
            });
        }
        check_finite(&weights, "encoder weights")?;
        check_finite(&bias, "encoder bias")?;
        Ok(Self {
            kind: EncoderKind::Affine {
                weights,
                bias,
                input_dim,
            },
            nonnegative_output: false,
        })
    }

    /// One tanh hidden layer of width `hidden_dim` between an affine input
    /// map and an affine output map.
    pub fn one_hidden(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        if w1.len() != input_dim * hidden_dim
            || b1.len() != hidden_dim
            || w2.len() != hidden_dim * output_dim
            || b2.len() != output_dim
        {
            return Err(Error::InvalidArgument {
                reason: format!(
                    "hidden encoder {input_dim}->{hidden_dim}->{output_dim} got weight shapes {}/{}/{}/{}",
                    w1.len(),
                    b1.len(),
                    w2.len(),
                    b2.len()
                ),
            });
        }
        for (values, what) in [
            (&w1, "encoder weights"),
            (&b1, "encoder bias"),
            (&w2, "encoder weights"),
            (&b2, "encoder bias"),
        ] {
            check_finite(values, what)?;
        }
        Ok(Self {
            kind: EncoderKind::OneHidden {
                w1,
                b1,
                w2,
                b2,
                input_dim,
                hidden_dim,
            },
            nonnegative_output: false,
        })
    }

    /// Seeded random affine encoder, weights uniform in [-0.5, 0.5).
    pub fn seeded_affine(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..input_dim * output_dim)
            .map(|_| rng.gen_range(-0.5..0.5))
            .collect();
        let bias = (0..output_dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Self::affine(input_dim, output_dim, weights, bias).expect("shapes match by construction")
    }

    /// Seeded random one-hidden-layer encoder, weights uniform in
    /// [-0.5, 0.5).
    pub fn seeded_one_hidden(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect() };
        let w1 = draw(input_dim * hidden_dim);
        let b1 = draw(hidden_dim);
        let w2 = draw(hidden_dim * output_dim);
        let b2 = draw(output_dim);
        Self::one_hidden(input_dim, hidden_dim, output_dim, w1, b1, w2, b2)
            .expect("shapes match by construction")
    }

    /// Clamp outputs at zero, making every trace valid for
    /// nonnegative-mode models.
    pub fn with_nonnegative_output(mut self) -> Self {
        self.nonnegative_output = true;
        self
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            EncoderKind::Identity { dim } => *dim,
            EncoderKind::Affine { input_dim, .. } => *input_dim,
            EncoderKind::OneHidden { input_dim, .. } => *input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.kind {
            EncoderKind::Identity { dim } => *dim,
            EncoderKind::Affine { bias, .. } => bias.len(),
            EncoderKind::OneHidden { b2, .. } => b2.len(),
        }
    }

    /// Deterministic forward pass to a latent trace.
    pub fn encode(&self, input: &SensoryVector) -> Result<LatentVector> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                mode: 0,
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let mut out = match &self.kind {
            EncoderKind::Identity { .. } => input.as_slice().to_vec(),
            EncoderKind::Affine { weights, bias, .. } => {
                affine_forward(weights, bias, input.as_slice())
            }
            EncoderKind::OneHidden { w1, b1, w2, b2, .. } => {
                let mut hidden = affine_forward(w1, b1, input.as_slice());
                for h in &mut hidden {
                    *h = h.tanh();
                }
                affine_forward(w2, b2, &hidden)
            }
        };
        if self.nonnegative_output {
            for v in &mut out {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        LatentVector::new(out)
    }
}

/// What one perception produced: the encoded trace, the engram if the
/// input was filed as memorable, and the decoded top triples.
#[derive(Clone, Debug)]
pub struct Perception {
    pub trace: LatentVector,
    pub engram: Option<Engram>,
    pub decoded: Vec<ScoredTriple>,
}

/// Runs the full perception pipeline: encode the input, bind the trace as
/// an engram when `memorable` is set, and rank the triple vocabulary
/// against the trace (exactly the decoding that `recall` applies to stored
/// time steps, so a trace equal to a stored row decodes identically).
pub fn perceive(
    encoder: &Encoder,
    model: &mut EpisodicModel,
    input: &SensoryVector,
    memorable: bool,
    beta: Beta,
    top_k: usize,
) -> Result<Perception> {
    if encoder.output_dim() != model.config().rank {
        return Err(Error::RankMismatch {
            expected: model.config().rank,
            actual: encoder.output_dim(),
        });
    }
    let trace = encoder.encode(input)?;
    let decoded = rank_triples_with_time_vector(model, &trace, beta, top_k)?;
    let engram = if memorable {
        Some(model.bind_engram(trace.clone(), None)?)
    } else {
        None
    };
    Ok(Perception {
        trace,
        engram,
        decoded,
    })
}

/// Parses sensory vectors from a reader, one comma-separated vector per
/// line. Blank lines and lines starting with `#` are skipped. Every vector
/// must have `dim` values.
pub fn read_sensory_vectors<R: BufRead>(reader: R, dim: usize) -> Result<Vec<SensoryVector>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let mut values = Vec::new();
        for field in trimmed.split(',') {
            let value: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad number {:?}", field.trim())))?;
            values.push(value);
        }
        if values.len() != dim {
            return Err(parse_err(format!(
                "expected {dim} values, found {}",
                values.len()
            )));
        }
        out.push(SensoryVector::new(values).map_err(|_| parse_err("non-finite value".to_string()))?);
    }
    Ok(out)
}
