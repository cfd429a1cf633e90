//! Deterministic seed derivation for independent random streams.

/// SplitMix64 finalizer.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Purpose tags keep streams with equal indices apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Split = 2,
    TrainData = 3,
    TestData = 4,
    Worker = 5,
    Backdoor = 6,
}

/// Seed of stream `(tag, round, worker)` under `master`.
pub fn stream_seed(master: u64, tag: Stream, round: u64, worker: u64) -> u64 {
    let mut h = mix(master);
    h = mix(h ^ tag as u64);
    h = mix(h ^ round);
    mix(h ^ worker)
}
