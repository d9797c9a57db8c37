//! Deterministic observation embedding: a fixed seeded random projection
//! followed by tanh and L2 normalization. Every component of the system
//! (retrieval index, key-moment clustering, policy and IDM tokenization)
//! shares this one embedding space.

use crate::binfmt;
use crate::env::Observation;
use crate::error::Result;
use rand_chacha::ChaCha8Rng;
use rand::{RngCore, SeedableRng};

/// Default embedding width.
pub const EMBED_DIM: usize = 64;
/// The one global projection seed. All runs share a single embedding space.
pub const PROJECTION_SEED: u64 = 0x4153_48ee;

/// A row-major matrix of per-frame embeddings, one unit-norm row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn empty(dim: usize) -> Self {
        EmbeddingMatrix {
            rows: 0,
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows(rows: Vec<Vec<f32>>, dim: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            debug_assert_eq!(r.len(), dim);
            data.extend_from_slice(r);
        }
        EmbeddingMatrix {
            rows: rows.len(),
            dim,
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Largest deviation of any row norm from 1.
    pub fn max_norm_error(&self) -> f32 {
        self.iter_rows()
            .map(|r| {
                let n: f32 = r.iter().map(|v| v * v).sum::<f32>().sqrt();
                (n - 1.0).abs()
            })
            .fold(0.0, f32::max)
    }

    pub fn write_to<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        binfmt::write_embedding_block(w, self.rows, self.dim, &self.data)
    }

    pub fn read_from<R: std::io::Read>(r: &mut R) -> Result<Self> {
        let (rows, dim, data) = binfmt::read_embedding_block(r)?;
        Ok(EmbeddingMatrix { rows, dim, data })
    }
}

/// The embedding function: `tanh(W x)` normalized to the unit sphere, with
/// `W` drawn once from the global projection seed.
#[derive(Debug, Clone)]
pub struct Embedder {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    weights: Vec<f32>,
}

impl Embedder {
    pub fn new(in_dim: usize) -> Embedder {
        Embedder::with_dim(in_dim, EMBED_DIM)
    }

    pub fn with_dim(in_dim: usize, out_dim: usize) -> Embedder {
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED ^ (in_dim as u64) << 8);
        let scale = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| (standard_normal(&mut rng) * scale) as f32)
            .collect();
        Embedder {
            in_dim,
            out_dim,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Embed one observation to a unit vector. A zero feature vector maps to
    /// the first basis vector.
    pub fn embed(&self, obs: &Observation) -> Vec<f32> {
        debug_assert_eq!(obs.features.len(), self.in_dim);
        let mut out = vec![0.0f32; self.out_dim];
        for (o, w_row) in out.iter_mut().zip(self.weights.chunks_exact(self.in_dim)) {
            let mut acc = 0.0f32;
            for (w, x) in w_row.iter().zip(&obs.features) {
                acc += w * x;
            }
            *o = acc.tanh();
        }
        let norm: f32 = out.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm <= f32::EPSILON {
            let mut basis = vec![0.0f32; self.out_dim];
            basis[0] = 1.0;
            return basis;
        }
        for v in &mut out {
            *v /= norm;
        }
        out
    }

    /// Embed every `stride`-th frame, starting at the first, preserving
    /// order. An empty input yields an empty matrix.
    pub fn embed_sequence(&self, frames: &[Observation], stride: usize) -> EmbeddingMatrix {
        assert!(stride >= 1, "stride must be >= 1");
        let rows: Vec<Vec<f32>> = frames
            .iter()
            .step_by(stride)
            .map(|o| self.embed(o))
            .collect();
        EmbeddingMatrix::from_rows(rows, self.out_dim)
    }
}

/// Box-Muller gaussian from the raw ChaCha stream; kept local so the
/// projection is stable regardless of rand's distribution internals.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        if u1 > 0.0 {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| *x as f64 * *y as f64)
        .sum::<f64>()
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_expert, EnvConfig, GridQuest, Mode};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(features: Vec<f32>) -> Observation {
        Observation { features }
    }

    #[test]
    fn embedding_is_deterministic() {
        let e1 = Embedder::new(16);
        let e2 = Embedder::new(16);
        let o = obs((0..16).map(|i| i as f32 / 8.0).collect());
        assert_eq!(e1.embed(&o), e2.embed(&o));
        assert_eq!(e1.embed(&o), e1.embed(&o));
    }

    #[test]
    fn zero_vector_maps_to_first_basis() {
        let e = Embedder::new(8);
        let v = e.embed(&obs(vec![0.0; 8]));
        assert_eq!(v[0], 1.0);
        assert!(v[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn self_cosine_is_one() {
        let e = Embedder::new(12);
        let v = e.embed(&obs((0..12).map(|i| (i as f32).sin()).collect()));
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sequence_counts_rows() {
        let e = Embedder::new(4);
        let frames: Vec<Observation> =
            (0..10).map(|i| obs(vec![i as f32, 1.0, 0.0, -1.0])).collect();
        assert_eq!(e.embed_sequence(&frames, 2).rows, 5);
        assert_eq!(e.embed_sequence(&frames, 3).rows, 4);
        assert_eq!(e.embed_sequence(&[], 2).rows, 0);
        // Stride 1 equals per-frame embedding.
        let m = e.embed_sequence(&frames, 1);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(m.row(i), &e.embed(f)[..]);
        }
    }

    #[test]
    fn two_second_rule_row_count() {
        let e = Embedder::new(4);
        let frames: Vec<Observation> = (0..540).map(|_| obs(vec![1.0, 0.0, 0.0, 0.0])).collect();
        // Index stride of 4 frames, so ceil(540 / 4) rows.
        assert_eq!(e.embed_sequence(&frames, 4).rows, 135);
    }

    #[test]
    fn intra_region_similarity_exceeds_inter() {
        let env = GridQuest::new(EnvConfig::default()).unwrap();
        let embedder = Embedder::new(env.obs_dim());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut state = env.initial_state();
        let mut samples = Vec::new();
        for _ in 0..1000 {
            let a = env.expert_policy(&state, 0.1, &mut rng);
            if matches!(state.mode, Mode::Overworld) {
                samples.push((state.region, embedder.embed(&env.observe(&state))));
            }
            state = env.step(&state, a).0;
            if state.milestones_reached.len() == 12 {
                break;
            }
        }
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0u64, 0.0, 0u64);
        for i in 0..samples.len() {
            for j in (i + 1)..samples.len() {
                let c = cosine(&samples[i].1, &samples[j].1);
                if samples[i].0 == samples[j].0 {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        assert!(nx > 0 && ni > 0);
        assert!(
            intra / ni as f64 > inter / nx as f64,
            "intra-region cosine must exceed inter-region cosine"
        );
    }

    #[test]
    fn expert_observations_embed_far_from_decoys() {
        let normal = GridQuest::new(EnvConfig::default()).unwrap();
        let decoy = GridQuest::new(EnvConfig {
            decoy_flag: true,
            ..EnvConfig::default()
        })
        .unwrap();
        let embedder = Embedder::new(normal.obs_dim());
        let a = embedder.embed(&normal.observe(&normal.initial_state()));
        let b = embedder.embed(&decoy.observe(&decoy.initial_state()));
        assert!(cosine(&a, &b) < 0.9);
    }

    proptest! {
        #[test]
        fn rows_are_unit_norm(n in 1usize..20, seed in 0u64..1000) {
            let e = Embedder::new(10);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames: Vec<Observation> = (0..n)
                .map(|_| obs((0..10).map(|_| rand::Rng::gen_range(&mut rng, -2.0..2.0)).collect()))
                .collect();
            let m = e.embed_sequence(&frames, 1);
            prop_assert!(m.max_norm_error() < 1e-6);
        }

        #[test]
        fn round_trip_preserves_matrix(rows in 0usize..8, seed in 0u64..1000) {
            let e = Embedder::new(6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames: Vec<Observation> = (0..rows)
                .map(|_| obs((0..6).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect()))
                .collect();
            let m = e.embed_sequence(&frames, 1);
            let mut buf = Vec::new();
            m.write_to(&mut buf).unwrap();
            let back = EmbeddingMatrix::read_from(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(m, back);
        }
    }
}
