//! Trajectory-to-video retrieval. Every corpus video is scored against an
//! agent trajectory by its best temporal window, where a window's score is a
//! greedy one-to-one matching: candidate (trajectory frame, video frame)
//! pairs are claimed in descending similarity order, each frame used at most
//! once. Cosine similarities are clamped to `[0, 1]` before matching, and a
//! window can make at most `min(q, w)` matches, so scores sit in
//! `[0, min(q, w_r)]`.
//!
//! Two scorers are kept: a naive reference that enumerates windows and sorts
//! each window's candidates from scratch, and an optimized scorer that sorts
//! the similarity matrix once and replays the same claim order per window.
//! They agree bit-for-bit; the reference exists so the optimization can be
//! checked against it, never as the production path.

use crate::corpus::{CorpusIndex, VideoId};
use crate::embedder::EmbeddingMatrix;
use crate::error::{AshError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Dense row-major similarity matrix between a `q`-frame trajectory and an
/// `e`-frame video.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub q: usize,
    pub e: usize,
    pub data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.e + col]
    }

    pub fn is_empty(&self) -> bool {
        self.q == 0 || self.e == 0
    }
}

/// `Q Eᵀ` over unit rows: cosine similarities, accumulated at 64-bit.
pub fn similarity_matrix(q: &EmbeddingMatrix, e: &EmbeddingMatrix) -> SimilarityMatrix {
    assert_eq!(q.dim, e.dim, "query and video embedding dims must match");
    let mut data = vec![0.0f64; q.rows * e.rows];
    for (qi, qrow) in q.iter_rows().enumerate() {
        let out = &mut data[qi * e.rows..(qi + 1) * e.rows];
        for (ej, erow) in e.iter_rows().enumerate() {
            let mut acc = 0.0f64;
            for (a, b) in qrow.iter().zip(erow) {
                acc += *a as f64 * *b as f64;
            }
            out[ej] = acc;
        }
    }
    SimilarityMatrix {
        q: q.rows,
        e: e.rows,
        data,
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Candidate ordering: similarity descending, then row, then column. This is
/// the claim order of the greedy matcher; pinning it makes both scorers and
/// reruns bit-identical.
fn candidate_order(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> std::cmp::Ordering {
    b.0.partial_cmp(&a.0)
        .expect("similarities are finite")
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
}

/// Score one window `[t, t + w_eff)` of `s` by greedy one-to-one matching,
/// where `w_eff = min(w_r, e)`. `t` is zero-based; the input is not mutated.
pub fn greedy_window_score(s: &SimilarityMatrix, t: usize, w_r: usize) -> Result<f64> {
    if s.is_empty() {
        return Err(AshError::EmptySimilarity);
    }
    let w_eff = w_r.min(s.e);
    assert!(
        t + w_eff <= s.e,
        "window start {t} of width {w_eff} exceeds {} video frames",
        s.e
    );
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(s.q * w_eff);
    for row in 0..s.q {
        for col in t..t + w_eff {
            candidates.push((clamp01(s.at(row, col)), row, col));
        }
    }
    candidates.sort_by(candidate_order);
    let cap = s.q.min(w_eff);
    let mut row_used = vec![false; s.q];
    let mut col_used = vec![false; s.e];
    let mut z = 0.0;
    let mut matched = 0;
    for (v, row, col) in candidates {
        if matched == cap {
            break;
        }
        if row_used[row] || col_used[col] {
            continue;
        }
        row_used[row] = true;
        col_used[col] = true;
        z += v;
        matched += 1;
    }
    Ok(z)
}

/// Naive video score: enumerate every window and apply the greedy matcher
/// literally. The oracle for [`score_video`].
pub fn score_video_reference(
    q: &EmbeddingMatrix,
    e: &EmbeddingMatrix,
    w_r: usize,
) -> Result<f64> {
    if e.rows == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    if q.rows == 0 {
        return Err(AshError::EmptySimilarity);
    }
    let s = similarity_matrix(q, e);
    let w_eff = w_r.min(s.e);
    let mut best = f64::NEG_INFINITY;
    for t in 0..=(s.e - w_eff) {
        best = best.max(greedy_window_score(&s, t, w_r)?);
    }
    Ok(best)
}

/// Optimized video score: one global candidate sort, replayed per window
/// with generation-stamped claim buffers. Equals the reference exactly.
pub fn score_video(q: &EmbeddingMatrix, e: &EmbeddingMatrix, w_r: usize) -> Result<f64> {
    if e.rows == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    if q.rows == 0 {
        return Err(AshError::EmptySimilarity);
    }
    let s = similarity_matrix(q, e);
    let w_eff = w_r.min(s.e);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(s.q * s.e);
    for row in 0..s.q {
        for col in 0..s.e {
            candidates.push((clamp01(s.at(row, col)), row, col));
        }
    }
    candidates.sort_by(candidate_order);

    let cap = s.q.min(w_eff);
    let mut row_gen = vec![u32::MAX; s.q];
    let mut col_gen = vec![u32::MAX; s.e];
    let mut best = f64::NEG_INFINITY;
    for (window, t) in (0..=(s.e - w_eff)).enumerate() {
        let gen = window as u32;
        let mut z = 0.0;
        let mut matched = 0;
        for &(v, row, col) in &candidates {
            if matched == cap {
                break;
            }
            if col < t || col >= t + w_eff {
                continue;
            }
            if row_gen[row] == gen || col_gen[col] == gen {
                continue;
            }
            row_gen[row] = gen;
            col_gen[col] = gen;
            z += v;
            matched += 1;
        }
        best = best.max(z);
    }
    Ok(best)
}

/// Baseline scorers retrieval is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMethod {
    /// Seeded uniform draw per video.
    Random,
    /// Mean of every entry of `Q Eᵀ`.
    AllToAll,
    /// Maximum single entry of `Q Eᵀ`.
    MaxSingle,
}

pub fn baseline_score(
    method: BaselineMethod,
    q: &EmbeddingMatrix,
    e: &EmbeddingMatrix,
    seed: u64,
) -> Result<f64> {
    if e.rows == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    if q.rows == 0 {
        return Err(AshError::EmptySimilarity);
    }
    match method {
        BaselineMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(rng.gen::<f64>())
        }
        BaselineMethod::AllToAll => {
            let s = similarity_matrix(q, e);
            Ok(s.data.iter().sum::<f64>() / s.data.len() as f64)
        }
        BaselineMethod::MaxSingle => {
            let s = similarity_matrix(q, e);
            Ok(s.data.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

/// How a ranking scores videos.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoreMethod {
    /// Best greedy-matched window of width `w_r`.
    BestWindow { w_r: usize },
    Baseline { method: BaselineMethod, seed: u64 },
}

/// One scored video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedVideo {
    pub video_id: VideoId,
    pub score: f64,
}

/// Output of a retrieval round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// Per-agent ranked top-k, score descending, ties by ascending id.
    pub per_agent: Vec<Vec<RankedVideo>>,
    /// Deduplicated union of retrieved ids, ascending.
    pub union: Vec<VideoId>,
    /// Set when the corpus held fewer than `k` scorable videos.
    pub short_corpus: bool,
}

/// Rank every video against one query with the given method, best first.
pub fn rank_videos(
    method: ScoreMethod,
    query: &EmbeddingMatrix,
    videos: &[(VideoId, EmbeddingMatrix)],
) -> Result<Vec<RankedVideo>> {
    let mut scored: Vec<RankedVideo> = videos
        .par_iter()
        .map(|(id, e)| {
            let score = match method {
                ScoreMethod::BestWindow { w_r } => score_video(query, e, w_r),
                ScoreMethod::Baseline { method, seed } => {
                    baseline_score(method, query, e, seed ^ *id)
                }
            };
            score.map(|score| RankedVideo {
                video_id: *id,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.retain(|r| r.score.is_finite());
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.video_id.cmp(&b.video_id))
    });
    Ok(scored)
}

/// Retrieve the top-`k` videos per agent trajectory and union them.
/// Agents with empty queries contribute nothing. When the corpus has fewer
/// than `k` scorable videos the result carries everything, flagged.
pub fn retrieve(
    queries: &[EmbeddingMatrix],
    index: &CorpusIndex,
    k: usize,
    w_r: usize,
) -> Result<RetrievalResult> {
    if index.is_empty() {
        return Err(AshError::Run("retrieval over an empty index".into()));
    }
    if k == 0 {
        return Err(AshError::config("retrieval.k must be >= 1"));
    }
    let videos = index.load_all_embeddings()?;
    retrieve_from_embeddings(queries, &videos, k, w_r)
}

/// [`retrieve`] over already-loaded embedding matrices.
pub fn retrieve_from_embeddings(
    queries: &[EmbeddingMatrix],
    videos: &[(VideoId, EmbeddingMatrix)],
    k: usize,
    w_r: usize,
) -> Result<RetrievalResult> {
    let mut per_agent = Vec::with_capacity(queries.len());
    let mut short_corpus = false;
    for query in queries {
        if query.rows == 0 {
            per_agent.push(Vec::new());
            continue;
        }
        let mut ranked = rank_videos(ScoreMethod::BestWindow { w_r }, query, videos)?;
        if ranked.len() < k {
            short_corpus = true;
        }
        ranked.truncate(k);
        per_agent.push(ranked);
    }
    let mut union: Vec<VideoId> = per_agent.iter().flatten().map(|r| r.video_id).collect();
    union.sort_unstable();
    union.dedup();
    Ok(RetrievalResult {
        per_agent,
        union,
        short_corpus,
    })
}

impl RetrievalResult {
    /// Dump as JSON-lines: one record per (agent, rank).
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (agent, ranked) in self.per_agent.iter().enumerate() {
            for (rank, r) in ranked.iter().enumerate() {
                let line = serde_json::json!({
                    "agent": agent,
                    "video_id": r.video_id,
                    "score": r.score,
                    "rank": rank + 1,
                });
                out.push_str(&line.to_string());
                out.push('\n');
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| AshError::io(path, e))?;
        f.write_all(out.as_bytes())
            .map_err(|e| AshError::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: Vec<Vec<f32>>) -> EmbeddingMatrix {
        let dim = rows.first().map_or(0, |r| r.len());
        EmbeddingMatrix::from_rows(rows, dim)
    }

    fn sim(q: usize, e: usize, data: Vec<f64>) -> SimilarityMatrix {
        SimilarityMatrix { q, e, data }
    }

    fn random_unit_matrix(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
        let rows: Vec<Vec<f32>> = (0..rows)
            .map(|_| {
                let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-6);
                v.iter_mut().for_each(|x| *x /= n);
                v
            })
            .collect();
        matrix(rows)
    }

    #[test]
    fn single_entry_window() {
        let s = sim(1, 1, vec![1.0]);
        assert_eq!(greedy_window_score(&s, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn worked_two_by_three_example() {
        let s = sim(2, 3, vec![0.9, 0.1, 0.5, 0.2, 0.8, 0.4]);
        let z1 = greedy_window_score(&s, 0, 2).unwrap();
        let z2 = greedy_window_score(&s, 1, 2).unwrap();
        assert!((z1 - 1.7).abs() < 1e-12, "window 1 scored {z1}");
        assert!((z2 - 1.3).abs() < 1e-12, "window 2 scored {z2}");
    }

    #[test]
    fn row_exhaustion_contributes_zero_beyond_matches() {
        // One trajectory frame, window spanning the whole video: only the
        // best pair is claimed, the other columns add nothing.
        let s = sim(1, 3, vec![0.5, 0.6, 0.7]);
        let z = greedy_window_score(&s, 0, 3).unwrap();
        assert!((z - 0.7).abs() < 1e-12, "scored {z}");
    }

    #[test]
    fn empty_similarity_is_an_error() {
        let s = sim(0, 0, vec![]);
        assert!(matches!(
            greedy_window_score(&s, 0, 1),
            Err(AshError::EmptySimilarity)
        ));
    }

    #[test]
    fn self_match_scores_full_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_unit_matrix(6, 8, &mut rng);
        let z = score_video(&q, &q, 6).unwrap();
        assert!((z - 6.0).abs() < 1e-5, "self-match scored {z}");
    }

    #[test]
    fn orthogonal_matrices_score_zero() {
        let q = matrix(vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]);
        let e = matrix(vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]]);
        let z = score_video(&q, &e, 2).unwrap();
        assert!(z.abs() < 1e-5);
    }

    #[test]
    fn video_shorter_than_window_uses_whole_video() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_unit_matrix(5, 8, &mut rng);
        let e = random_unit_matrix(3, 8, &mut rng);
        let a = score_video(&q, &e, 10).unwrap();
        let b = score_video_reference(&q, &e, 10).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn empty_video_scores_negative_infinity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_unit_matrix(3, 8, &mut rng);
        let e = EmbeddingMatrix::empty(8);
        assert_eq!(score_video(&q, &e, 4).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn optimized_equals_reference_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..200 {
            let qr = rng.gen_range(1..=20);
            let er = rng.gen_range(1..=50);
            let w_r = rng.gen_range(1..=15);
            let q = random_unit_matrix(qr, 16, &mut rng);
            let e = random_unit_matrix(er, 16, &mut rng);
            let fast = score_video(&q, &e, w_r).unwrap();
            let slow = score_video_reference(&q, &e, w_r).unwrap();
            assert_eq!(
                fast.to_bits(),
                slow.to_bits(),
                "case {case}: optimized {fast} != reference {slow} (q={qr} e={er} w={w_r})"
            );
        }
    }

    #[test]
    fn twenty_by_fifty_oracle_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_unit_matrix(20, 64, &mut rng);
        let e = random_unit_matrix(50, 64, &mut rng);
        let fast = score_video(&q, &e, 10).unwrap();
        let slow = score_video_reference(&q, &e, 10).unwrap();
        assert_eq!(fast.to_bits(), slow.to_bits());
    }

    #[test]
    fn baselines_match_hand_arithmetic() {
        // Q rows are basis vectors, E rows chosen so QEᵀ is the worked
        // 2x3 example matrix.
        let q = matrix(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let e = matrix(vec![
            vec![0.9, 0.2, 0.0],
            vec![0.1, 0.8, 0.0],
            vec![0.5, 0.4, 0.0],
        ]);
        let max_single = baseline_score(BaselineMethod::MaxSingle, &q, &e, 0).unwrap();
        assert!((max_single - 0.9).abs() < 1e-12);
        let all_to_all = baseline_score(BaselineMethod::AllToAll, &q, &e, 0).unwrap();
        let expected = (0.9 + 0.1 + 0.5 + 0.2 + 0.8 + 0.4) / 6.0;
        assert!((all_to_all - expected).abs() < 1e-9);
    }

    #[test]
    fn random_baseline_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = random_unit_matrix(2, 8, &mut rng);
        let videos: Vec<(VideoId, EmbeddingMatrix)> = (0..6)
            .map(|id| (id, random_unit_matrix(4, 8, &mut rng)))
            .collect();
        let method = ScoreMethod::Baseline {
            method: BaselineMethod::Random,
            seed: 42,
        };
        let a = rank_videos(method, &q, &videos).unwrap();
        let b = rank_videos(method, &q, &videos).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn appending_a_video_never_changes_existing_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let q = random_unit_matrix(5, 16, &mut rng);
        let mut videos: Vec<(VideoId, EmbeddingMatrix)> = (0..5)
            .map(|id| (id, random_unit_matrix(12, 16, &mut rng)))
            .collect();
        let before: Vec<(VideoId, f64)> = videos
            .iter()
            .map(|(id, e)| (*id, score_video(&q, e, 4).unwrap()))
            .collect();
        videos.push((99, random_unit_matrix(12, 16, &mut rng)));
        for (id, old) in before {
            let e = &videos.iter().find(|(v, _)| *v == id).unwrap().1;
            let new = score_video(&q, e, 4).unwrap();
            assert_eq!(old.to_bits(), new.to_bits());
        }
    }

    #[test]
    fn union_deduplicates_and_ties_break_by_id() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shared = random_unit_matrix(5, 8, &mut rng);
        // Two identical videos force a score tie; lower id must rank first.
        let videos = vec![(7u64, shared.clone()), (3u64, shared.clone())];
        let q = random_unit_matrix(4, 8, &mut rng);
        let result = retrieve_from_embeddings(&[q.clone(), q], &videos, 1, 3).unwrap();
        assert_eq!(result.per_agent[0][0].video_id, 3);
        assert_eq!(result.union, vec![3]);
        assert!(!result.short_corpus);
        let all = retrieve_from_embeddings(&[random_unit_matrix(4, 8, &mut rng)], &videos, 5, 3)
            .unwrap();
        assert!(all.short_corpus);
        assert_eq!(all.per_agent[0].len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn score_is_invariant_to_query_row_order(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let qr = rng.gen_range(2..8);
            let q = random_unit_matrix(qr, 8, &mut rng);
            let e = random_unit_matrix(10, 8, &mut rng);
            let base = score_video(&q, &e, 4).unwrap();
            let rev_rows: Vec<Vec<f32>> = (0..q.rows).rev().map(|i| q.row(i).to_vec()).collect();
            let qrev = matrix(rev_rows);
            let permuted = score_video(&qrev, &e, 4).unwrap();
            prop_assert!((base - permuted).abs() < 1e-12);
        }

        #[test]
        fn score_respects_bounds(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let qr = rng.gen_range(1..10);
            let er = rng.gen_range(1..20);
            let w_r = rng.gen_range(1..10);
            let q = random_unit_matrix(qr, 8, &mut rng);
            let e = random_unit_matrix(er, 8, &mut rng);
            let z = score_video(&q, &e, w_r).unwrap();
            prop_assert!(z >= 0.0);
            prop_assert!(z <= qr.min(w_r) as f64 + 1e-9);
        }
    }
}
