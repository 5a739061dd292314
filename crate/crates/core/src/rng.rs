use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Independent random streams derived from one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Query = 1,
    Attributes = 2,
    Outcomes = 3,
    Environment = 4,
    Truth = 5,
}

/// A ChaCha8 stream keyed by `(seed, stream)` whose position survives
/// serialization, so persisted sessions resume the exact sequence.
#[derive(Debug, Clone)]
pub struct SeededStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64, stream: Stream) -> Self {
        Self::at(seed, stream as u64, 0)
    }

    fn at(seed: u64, stream: u64, word_pos: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        SeededStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl PartialEq for SeededStream {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.stream == other.stream
            && self.rng.get_word_pos() == other.rng.get_word_pos()
    }
}

impl RngCore for SeededStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Serialize, Deserialize)]
struct StreamState {
    seed: u64,
    stream: u64,
    // u128 does not survive every JSON reader; keep it as a decimal string.
    word_pos: String,
}

impl Serialize for SeededStream {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        StreamState {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.rng.get_word_pos().to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SeededStream {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let st = StreamState::deserialize(d)?;
        let pos = st
            .word_pos
            .parse::<u128>()
            .map_err(serde::de::Error::custom)?;
        Ok(SeededStream::at(st.seed, st.stream, pos))
    }
}
