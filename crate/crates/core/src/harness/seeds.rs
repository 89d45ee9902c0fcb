use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env,
    AgentInit,
    Exploration,
    Noise,
    Sampling,
    Evaluation,
}

impl Stream {
    pub const ALL: [Stream; 6] = [
        Stream::Env,
        Stream::AgentInit,
        Stream::Exploration,
        Stream::Noise,
        Stream::Sampling,
        Stream::Evaluation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Env => "env",
            Stream::AgentInit => "agent-init",
            Stream::Exploration => "exploration",
            Stream::Noise => "noise",
            Stream::Sampling => "sampling",
            Stream::Evaluation => "evaluation",
        }
    }

    fn id(self) -> u64 {
        self as u64 + 1
    }
}

/// ChaCha8 keyed by the master seed, on the stream's own ChaCha stream id.
pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream.id());
    rng
}

/// A 64-bit seed drawn from the stream, for components that seed their own
/// generator.
pub fn stream_seed(master: u64, stream: Stream) -> u64 {
    stream_rng(master, stream).next_u64()
}
