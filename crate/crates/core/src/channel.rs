//! Noisy link models.
//!
//! A channel maps a transmitted vector `x` to `x + eps` where `eps` is
//! zero-mean given `x`. The receiver of an AWGN link divides by the known
//! fading gain, so callers always see the corrected estimate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{substream, SimRng, StreamTag};
use crate::{Error, Result};

/// Minimum trial count accepted by [`empirical_moments`].
pub const MIN_MOMENT_TRIALS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChannelKind {
    Exact,
    Awgn { sigma_c: f64, h: f64 },
    ProbQuant { delta_p: u32 },
}

impl ChannelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelKind::Exact => "exact",
            ChannelKind::Awgn { .. } => "awgn",
            ChannelKind::ProbQuant { .. } => "quant",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelKind::Exact => write!(f, "exact"),
            ChannelKind::Awgn { sigma_c, h } => write!(f, "awgn(sigma_c={sigma_c}, h={h})"),
            ChannelKind::ProbQuant { delta_p } => write!(f, "quant(delta_p={delta_p})"),
        }
    }
}

/// Names accepted by the `channel.type` configuration key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelType {
    Exact,
    Awgn,
    Quant,
}

impl FromStr for ChannelType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(ChannelType::Exact),
            "awgn" => Ok(ChannelType::Awgn),
            "quant" | "prob_quant" => Ok(ChannelType::Quant),
            other => Err(Error::InvalidInput(format!("unknown channel type `{other}`"))),
        }
    }
}

/// Result of one transmission: the receiver's estimate and the realized noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmission {
    pub received: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Realized noise of one broadcast, kept when noise logging is on.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmitLog {
    pub iteration: usize,
    pub sender: usize,
    pub noise: Vec<f64>,
}

/// A validated channel bound to its own named random stream.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    kind: ChannelKind,
    seed: u64,
    tag: StreamTag,
}

impl ChannelModel {
    pub fn exact() -> Self {
        ChannelModel {
            kind: ChannelKind::Exact,
            seed: 0,
            tag: StreamTag::ChannelX,
        }
    }

    pub fn awgn(sigma_c: f64, h: f64) -> Result<Self> {
        Self::new(ChannelKind::Awgn { sigma_c, h })
    }

    pub fn prob_quant(delta_p: u32) -> Result<Self> {
        Self::new(ChannelKind::ProbQuant { delta_p })
    }

    pub fn new(kind: ChannelKind) -> Result<Self> {
        match kind {
            ChannelKind::Exact => {}
            ChannelKind::Awgn { sigma_c, h } => {
                if !(sigma_c.is_finite() && sigma_c > 0.0) {
                    return Err(Error::InvalidInput(format!("awgn sigma_c must be > 0, got {sigma_c}")));
                }
                if !(h.is_finite() && h != 0.0) {
                    return Err(Error::InvalidInput(format!("awgn fading gain h must be non-zero, got {h}")));
                }
            }
            ChannelKind::ProbQuant { delta_p } => {
                if delta_p < 1 {
                    return Err(Error::InvalidInput("quantizer delta_p must be >= 1".into()));
                }
            }
        }
        Ok(ChannelModel {
            kind,
            seed: 0,
            tag: StreamTag::ChannelX,
        })
    }

    /// Binds the channel to the stream `(seed, tag)`.
    pub fn with_stream(mut self, seed: u64, tag: StreamTag) -> Self {
        self.seed = seed;
        self.tag = tag;
        self
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tag(&self) -> StreamTag {
        self.tag
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.kind, ChannelKind::Exact)
    }

    /// Per-coordinate bound on `E[(phi(x) - x)^2]`.
    pub fn variance_bound(&self) -> f64 {
        match self.kind {
            ChannelKind::Exact => 0.0,
            ChannelKind::Awgn { sigma_c, h } => sigma_c * sigma_c / (h * h),
            ChannelKind::ProbQuant { delta_p } => {
                let d = delta_p as f64;
                1.0 / (4.0 * d * d)
            }
        }
    }

    /// Transmits `x` using randomness from `rng`.
    pub fn transmit<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Transmission> {
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("cannot transmit non-finite value {bad}")));
        }
        let received: Vec<f64> = match self.kind {
            ChannelKind::Exact => x.to_vec(),
            ChannelKind::Awgn { sigma_c, h } => x
                .iter()
                .map(|&v| {
                    let g: f64 = rng.sample(StandardNormal);
                    v + sigma_c * g / h
                })
                .collect(),
            ChannelKind::ProbQuant { delta_p } => {
                x.iter().map(|&v| quantize(v, delta_p, rng.random::<f64>())).collect()
            }
        };
        let noise = received.iter().zip(x).map(|(r, v)| r - v).collect();
        Ok(Transmission { received, noise })
    }

    /// The substream used by `sender` at `iteration`; `round` separates
    /// repeated transmissions within one iteration (multi-round consensus).
    pub fn stream(&self, sender: usize, iteration: usize, round: usize) -> SimRng {
        substream(self.seed, self.tag, &[sender as u64, iteration as u64, round as u64])
    }

    /// Transmission of `sender`'s vector at `iteration` on its own substream.
    pub fn transmit_from(
        &self,
        x: &[f64],
        sender: usize,
        iteration: usize,
        round: usize,
    ) -> Result<Transmission> {
        let mut rng = self.stream(sender, iteration, round);
        self.transmit(x, &mut rng)
    }
}

/// Unbiased randomized rounding of `x` onto the grid `k / delta_p`.
///
/// `u` is a uniform draw in `[0, 1)`; the value rounds up when
/// `u < (x - floor_p(x)) * delta_p`. Grid points are returned unchanged.
pub fn quantize(x: f64, delta_p: u32, u: f64) -> f64 {
    let d = delta_p as f64;
    let scaled = x * d;
    let k = scaled.floor();
    if k == scaled {
        return x;
    }
    let p_up = (scaled - k).clamp(0.0, 1.0);
    if u < p_up {
        (k + 1.0) / d
    } else {
        k / d
    }
}

/// Sample mean and variance of `phi(x) - x`, per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean_error: Vec<f64>,
    pub per_coord_variance: Vec<f64>,
    pub trials: usize,
}

impl Moments {
    /// Sample standard deviation per coordinate.
    pub fn std_dev(&self) -> Vec<f64> {
        self.per_coord_variance.iter().map(|v| v.sqrt()).collect()
    }
}

pub fn empirical_moments<R: Rng + ?Sized>(
    channel: &ChannelModel,
    x: &[f64],
    trials: usize,
    rng: &mut R,
) -> Result<Moments> {
    if trials < MIN_MOMENT_TRIALS {
        return Err(Error::InsufficientSamples {
            required: MIN_MOMENT_TRIALS,
            got: trials,
        });
    }
    let d = x.len();
    // Welford accumulators.
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    for t in 0..trials {
        let tx = channel.transmit(x, rng)?;
        let count = (t + 1) as f64;
        for c in 0..d {
            let e = tx.noise[c];
            let delta = e - mean[c];
            mean[c] += delta / count;
            m2[c] += delta * (e - mean[c]);
        }
    }
    let denom = (trials - 1) as f64;
    Ok(Moments {
        mean_error: mean,
        per_coord_variance: m2.into_iter().map(|v| v / denom).collect(),
        trials,
    })
}
