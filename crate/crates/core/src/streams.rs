//! Seed splitting.
//!
//! Every random quantity in a run is drawn from a ChaCha8 generator keyed by
//! the master seed, with the ChaCha stream id set to a hash of a
//! [`Stream`] label. The label mixes a purpose tag with the worker, peer and
//! round indices, so a draw depends only on *what* it is for and never on
//! the order in which other draws happen. Two schemes run under the same
//! master seed therefore see the same data samples and the same noise for
//! every label they share.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Purpose of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Synthetic dataset generation.
    Data,
    /// Assignment of samples to workers.
    Partition,
    /// Optional random initialization of worker `worker`.
    Init { worker: usize },
    /// Mini-batch sampling of worker `worker`, persistent across rounds.
    Sampling { worker: usize },
    /// Privacy mask drawn by `worker` in `round`.
    Privacy { worker: usize, round: usize },
    /// Channel noise at `receiver` in `round`.
    Channel { receiver: usize, round: usize },
    /// Privacy mask on the dedicated link `sender -> receiver`.
    LinkPrivacy {
        sender: usize,
        receiver: usize,
        round: usize,
    },
    /// Channel noise on the dedicated link `sender -> receiver`.
    LinkChannel {
        sender: usize,
        receiver: usize,
        round: usize,
    },
}

const fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fold(words: &[u64]) -> u64 {
    words.iter().fold(0, |acc, &w| splitmix64(acc ^ w))
}

impl Stream {
    /// ChaCha stream id for this label.
    pub fn id(&self) -> u64 {
        let w = |x: usize| x as u64;
        match *self {
            Stream::Data => fold(&[1]),
            Stream::Partition => fold(&[2]),
            Stream::Init { worker } => fold(&[3, w(worker)]),
            Stream::Sampling { worker } => fold(&[4, w(worker)]),
            Stream::Privacy { worker, round } => fold(&[5, w(worker), w(round)]),
            Stream::Channel { receiver, round } => fold(&[6, w(receiver), w(round)]),
            Stream::LinkPrivacy {
                sender,
                receiver,
                round,
            } => fold(&[7, w(sender), w(receiver), w(round)]),
            Stream::LinkChannel {
                sender,
                receiver,
                round,
            } => fold(&[8, w(sender), w(receiver), w(round)]),
        }
    }
}

/// Generator for `stream` under `master_seed`.
pub fn rng_for(master_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream.id());
    rng
}

/// Fills `out` with i.i.d. standard normal draws from `rng`.
pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// Source of unit-variance Gaussian draws for one round of communication.
///
/// All methods fill `out` with standard normal entries; callers scale them
/// by σ or σ_m. Implementations must be deterministic in their arguments.
pub trait NoiseSource {
    fn privacy(&mut self, worker: usize, round: usize, out: &mut [f64]);
    fn channel(&mut self, receiver: usize, round: usize, out: &mut [f64]);
    fn link_privacy(&mut self, sender: usize, receiver: usize, round: usize, out: &mut [f64]);
    fn link_channel(&mut self, sender: usize, receiver: usize, round: usize, out: &mut [f64]);
}

/// [`NoiseSource`] backed by label-derived ChaCha streams.
#[derive(Debug, Clone, Copy)]
pub struct SeededNoise {
    seed: u64,
}

impl SeededNoise {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn fill(&self, stream: Stream, out: &mut [f64]) {
        fill_standard_normal(&mut rng_for(self.seed, stream), out);
    }
}

impl NoiseSource for SeededNoise {
    fn privacy(&mut self, worker: usize, round: usize, out: &mut [f64]) {
        self.fill(Stream::Privacy { worker, round }, out);
    }

    fn channel(&mut self, receiver: usize, round: usize, out: &mut [f64]) {
        self.fill(Stream::Channel { receiver, round }, out);
    }

    fn link_privacy(&mut self, sender: usize, receiver: usize, round: usize, out: &mut [f64]) {
        self.fill(
            Stream::LinkPrivacy {
                sender,
                receiver,
                round,
            },
            out,
        );
    }

    fn link_channel(&mut self, sender: usize, receiver: usize, round: usize, out: &mut [f64]) {
        self.fill(
            Stream::LinkChannel {
                sender,
                receiver,
                round,
            },
            out,
        );
    }
}
