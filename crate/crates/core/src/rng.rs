//! Counter-based random number generation.
//!
//! Every draw in the toolkit is a pure function of a 64-bit seed and a
//! 128-bit counter `(lane-block, step, index, role)`, produced by the
//! Philox 4x32-10 block function. Samples therefore never depend on the
//! order in which threads happen to evaluate them, which is what makes
//! runs bit-reproducible for any worker count.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

/// Stream roles keep draws for different purposes disjoint under one seed.
pub mod role {
    /// Increments of the common noise `W`.
    pub const COMMON: u32 = 1;
    /// Increments of the idiosyncratic noises `B^i`.
    pub const IDIOSYNCRATIC: u32 = 2;
    /// Initial-state sampling.
    pub const INITIAL: u32 = 3;
    /// Randomized probe points (assumption audits, test-function checks).
    pub const PROBE: u32 = 4;
    /// Random projection directions for sliced metrics.
    pub const PROJECTION: u32 = 5;
    /// Sub-seed derivation.
    pub const DERIVE: u32 = 0x7fff_ffff;
}

/// Philox 4x32-10 keyed block function.
#[derive(Clone, Copy, Debug)]
pub struct Philox {
    key: [u32; 2],
}

impl Philox {
    pub fn new(seed: u64) -> Self {
        Philox {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    /// One 128-bit block for the given counter.
    pub fn block(&self, ctr: [u32; 4]) -> [u32; 4] {
        let mut c = ctr;
        let mut k = self.key;
        for _ in 0..10 {
            let p0 = (M0 as u64).wrapping_mul(c[0] as u64);
            let p1 = (M1 as u64).wrapping_mul(c[2] as u64);
            let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
            let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
            c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        c
    }
}

/// Maps a word to the open interval (0, 1); never returns 0 or 1.
#[inline]
fn to_unit(x: u32) -> f64 {
    (x as f64 + 0.5) * (1.0 / 4294967296.0)
}

/// Four standard normals from one block, via two Box-Muller pairs.
#[inline]
fn normals4(b: [u32; 4]) -> [f64; 4] {
    let (u1, u2) = (to_unit(b[0]), to_unit(b[1]));
    let (u3, u4) = (to_unit(b[2]), to_unit(b[3]));
    let r1 = (-2.0 * u1.ln()).sqrt();
    let r2 = (-2.0 * u3.ln()).sqrt();
    let (s1, c1) = (std::f64::consts::TAU * u2).sin_cos();
    let (s2, c2) = (std::f64::consts::TAU * u4).sin_cos();
    [r1 * c1, r1 * s1, r2 * c2, r2 * s2]
}

/// Addressable stream of i.i.d. draws for one `(seed, role)` pair.
///
/// A draw is addressed by `(index, step, lane)`; for particle systems the
/// index is the particle, the step is the time step, and lanes run over the
/// coordinates needed in that cell.
#[derive(Clone, Copy, Debug)]
pub struct NormalStream {
    philox: Philox,
    role: u32,
}

impl NormalStream {
    pub fn new(seed: u64, role: u32) -> Self {
        NormalStream {
            philox: Philox::new(seed),
            role,
        }
    }

    /// The `lane`-th standard normal of the `(index, step)` cell.
    pub fn normal(&self, index: u32, step: u32, lane: u32) -> f64 {
        let b = self.philox.block([lane / 4, step, index, self.role]);
        normals4(b)[(lane % 4) as usize]
    }

    /// Fills `out` with the lanes `0..out.len()` of the `(index, step)` cell.
    pub fn fill_normals(&self, index: u32, step: u32, out: &mut [f64]) {
        let mut lane = 0usize;
        while lane < out.len() {
            let b = self.philox.block([(lane / 4) as u32, step, index, self.role]);
            let z = normals4(b);
            let take = (out.len() - lane).min(4);
            out[lane..lane + take].copy_from_slice(&z[..take]);
            lane += take;
        }
    }

    /// The `lane`-th uniform draw in (0, 1) of the `(index, step)` cell.
    pub fn uniform(&self, index: u32, step: u32, lane: u32) -> f64 {
        let b = self.philox.block([lane / 4, step, index, self.role]);
        to_unit(b[(lane % 4) as usize])
    }
}

/// Derives an independent sub-seed from a master seed and a tag.
///
/// Derivation is itself a Philox block, so sub-streams for different tags
/// are decorrelated and the derivation tree can be nested freely.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let b = Philox::new(master).block([tag as u32, (tag >> 32) as u32, 0, role::DERIVE]);
    (b[0] as u64) << 32 | b[1] as u64
}

/// Two-level derivation shorthand.
pub fn derive_seed2(master: u64, tag_a: u64, tag_b: u64) -> u64 {
    derive_seed(derive_seed(master, tag_a), tag_b)
}
