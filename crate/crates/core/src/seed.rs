//! Labeled seed streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream label and an index.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ splitmix64(index.wrapping_add(GOLDEN)))
}

pub fn stream(master: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, label, index))
}

/// Stream labels used by the experiment driver. Each consumer owns one label
/// so that resizing one stage does not perturb the draws of another.
pub mod labels {
    pub const GRID: &str = "grid";
    pub const HYPOTHESES: &str = "hypotheses";
    pub const NOISE: &str = "noise";
    pub const THOMPSON: &str = "thompson";
    pub const REPLICATE: &str = "replicate";
    pub const QUADRATURE: &str = "quadrature";
    pub const REALIZABLE: &str = "realizable";
}
