//! Synthetic observation-only video corpus: expert-with-noise playthroughs,
//! partial segments, and decoy-world videos, persisted with ground-truth
//! metadata and indexed with cached embedding matrices.

use crate::binfmt;
use crate::config::{CorpusSection, RetrievalSection};
use crate::embedder::{Embedder, EmbeddingMatrix};
use crate::env::{EnvConfig, GridQuest, MilestoneId, Observation, OBS_STRIDE};
use crate::error::{AshError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

pub type VideoId = u64;

/// Ground-truth provenance for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: VideoId,
    pub env_seed: u64,
    pub noise: f64,
    /// First and last milestone reached within the recorded frames.
    /// `None` when the recording fires no milestone.
    pub span: Option<(MilestoneId, MilestoneId)>,
    pub decoy: bool,
    /// True when the recording is a contiguous sub-segment of a playthrough.
    pub partial: bool,
    /// Env steps between recorded frames.
    pub frame_interval: usize,
}

/// One observation-only video at a fixed frame interval.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub meta: VideoMeta,
    pub frames: Vec<Observation>,
}

impl VideoRecord {
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| AshError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e: std::io::Error| AshError::io(path, e);
        let d_obs = self.frames.first().map_or(0, |f| f.features.len());
        w.write_all(binfmt::VIDEO_MAGIC).map_err(io)?;
        binfmt::write_u32(&mut w, binfmt::FORMAT_VERSION).map_err(io)?;
        binfmt::write_u32(&mut w, self.frames.len() as u32).map_err(io)?;
        binfmt::write_u32(&mut w, d_obs as u32).map_err(io)?;
        for frame in &self.frames {
            binfmt::write_f32_slice(&mut w, &frame.features).map_err(io)?;
        }
        let meta = serde_json::to_string(&self.meta).expect("meta serializes");
        binfmt::write_u32(&mut w, meta.len() as u32).map_err(io)?;
        w.write_all(meta.as_bytes()).map_err(io)?;
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<VideoRecord> {
        let file = File::open(path).map_err(|e| AshError::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e: std::io::Error| AshError::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != binfmt::VIDEO_MAGIC {
            return Err(AshError::Format(format!("{path:?}: bad video magic")));
        }
        let version = binfmt::read_u32(&mut r).map_err(io)?;
        if version != binfmt::FORMAT_VERSION {
            return Err(AshError::Format(format!(
                "{path:?}: unsupported video version {version}"
            )));
        }
        let frames_n = binfmt::read_u32(&mut r).map_err(io)? as usize;
        let d_obs = binfmt::read_u32(&mut r).map_err(io)? as usize;
        let mut frames = Vec::with_capacity(frames_n);
        for _ in 0..frames_n {
            let features = binfmt::read_f32_vec(&mut r, d_obs).map_err(io)?;
            frames.push(Observation { features });
        }
        let meta_len = binfmt::read_u32(&mut r).map_err(io)? as usize;
        let mut meta_buf = vec![0u8; meta_len];
        r.read_exact(&mut meta_buf).map_err(io)?;
        let meta: VideoMeta = serde_json::from_slice(&meta_buf)
            .map_err(|e| AshError::Format(format!("{path:?}: meta: {e}")))?;
        Ok(VideoRecord { meta, frames })
    }
}

/// One manifest line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: VideoId,
    pub file: String,
    /// Byte offset of this video's embedding block inside `index.bin`.
    pub index_offset: u64,
    pub rows: usize,
    pub dim: usize,
    pub frames: usize,
    pub meta: VideoMeta,
    /// Set when the video file could not be read during indexing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The on-disk corpus index: a manifest plus cached embedding matrices.
#[derive(Debug)]
pub struct CorpusIndex {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Load the cached embedding matrix for one entry.
    pub fn embedding(&self, entry: &ManifestEntry) -> Result<EmbeddingMatrix> {
        let path = self.dir.join("index.bin");
        let mut file = File::open(&path).map_err(|e| AshError::io(&path, e))?;
        file.seek(SeekFrom::Start(entry.index_offset))
            .map_err(|e| AshError::io(&path, e))?;
        EmbeddingMatrix::read_from(&mut BufReader::new(file))
    }

    /// Load every usable embedding matrix, in manifest order.
    pub fn load_all_embeddings(&self) -> Result<Vec<(VideoId, EmbeddingMatrix)>> {
        let path = self.dir.join("index.bin");
        let file = File::open(&path).map_err(|e| AshError::io(&path, e))?;
        let mut r = BufReader::new(file);
        let mut out = Vec::with_capacity(self.entries.len());
        for entry in self.entries.iter().filter(|e| e.error.is_none()) {
            r.seek(SeekFrom::Start(entry.index_offset))
                .map_err(|e| AshError::io(&path, e))?;
            out.push((entry.video_id, EmbeddingMatrix::read_from(&mut r)?));
        }
        Ok(out)
    }

    pub fn entry(&self, id: VideoId) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.video_id == id)
    }

    pub fn video_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.dir.join(&entry.file)
    }

    pub fn read_video(&self, id: VideoId) -> Result<VideoRecord> {
        let entry = self
            .entry(id)
            .ok_or_else(|| AshError::Format(format!("video {id} not in manifest")))?;
        VideoRecord::read(&self.video_path(entry))
    }

    pub fn load(dir: &Path) -> Result<CorpusIndex> {
        let path = dir.join("manifest.jsonl");
        let text = std::fs::read_to_string(&path).map_err(|e| AshError::io(&path, e))?;
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            entries.push(
                serde_json::from_str(line)
                    .map_err(|e| AshError::Format(format!("manifest line: {e}")))?,
            );
        }
        Ok(CorpusIndex {
            dir: dir.to_path_buf(),
            entries,
        })
    }
}

fn video_file_name(id: VideoId) -> String {
    format!("video_{id:05}.ashv")
}

/// Generate the corpus into `dir`. The relevant-video count is exact:
/// `round(num_videos * relevance_fraction)` playthroughs of the real world,
/// the rest decoy worlds. A `partial_fraction` share of the relevant videos
/// is cut down to a contiguous milestone span. Returns the metadata of every
/// written video, ordered by id.
pub fn generate_corpus(
    env_config: &EnvConfig,
    spec: &CorpusSection,
    dir: &Path,
) -> Result<Vec<VideoMeta>> {
    if spec.relevance_fraction <= 0.0 || spec.relevance_fraction > 1.0 {
        return Err(AshError::config("corpus.relevance_fraction must be in (0, 1]"));
    }
    std::fs::create_dir_all(dir).map_err(|e| AshError::io(dir, e))?;

    let n = spec.num_videos;
    let n_relevant = (n as f64 * spec.relevance_fraction).round() as usize;

    // Shuffle which ids are relevant so id order carries no signal.
    let mut slots: Vec<bool> = (0..n).map(|i| i < n_relevant).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in (1..slots.len()).rev() {
        let j = rng.gen_range(0..=i);
        slots.swap(i, j);
    }
    let per_video_seed: Vec<u64> = (0..n).map(|_| rng.gen()).collect();

    let jobs: Vec<(usize, bool, u64)> = slots
        .iter()
        .enumerate()
        .map(|(i, &relevant)| (i, relevant, per_video_seed[i]))
        .collect();

    let records: Vec<Result<VideoMeta>> = jobs
        .par_iter()
        .map(|&(i, relevant, seed)| {
            let record = synthesize_video(env_config, spec, i as VideoId, relevant, seed)?;
            let path = dir.join(video_file_name(record.meta.video_id));
            record.write(&path).inspect_err(|_| {
                // Abort with partial-output cleanup for this video.
                let _ = std::fs::remove_file(&path);
            })?;
            Ok(record.meta)
        })
        .collect();

    let mut metas = Vec::with_capacity(n);
    for r in records {
        match r {
            Ok(m) => metas.push(m),
            Err(e) => {
                // One failure aborts the generation; remove everything we wrote.
                for m in &metas {
                    let _ = std::fs::remove_file(dir.join(video_file_name(m.video_id)));
                }
                return Err(e);
            }
        }
    }
    metas.sort_by_key(|m| m.video_id);
    Ok(metas)
}

/// Simulate one source playthrough and cut it to a video.
fn synthesize_video(
    env_config: &EnvConfig,
    spec: &CorpusSection,
    video_id: VideoId,
    relevant: bool,
    seed: u64,
) -> Result<VideoRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if spec.noise_range[0] == spec.noise_range[1] {
        spec.noise_range[0]
    } else {
        rng.gen_range(spec.noise_range[0]..=spec.noise_range[1])
    };

    let config = if relevant {
        env_config.clone()
    } else {
        EnvConfig {
            // Decoy worlds: unrelated layouts and a shifted palette.
            seed: seed ^ 0xdec0_7000,
            decoy_flag: true,
            ..env_config.clone()
        }
    };
    let env = GridQuest::new(config)?;

    let mut state = env.initial_state();
    let mut frames: Vec<Observation> = Vec::new();
    // Milestone span per frame index: record which milestones have fired
    // strictly before each recorded frame.
    let mut frame_milestones: Vec<usize> = Vec::new();
    for step in 0..spec.max_steps {
        if step % OBS_STRIDE == 0 {
            frames.push(env.observe(&state));
            frame_milestones.push(state.milestones_reached.len());
        }
        let action = env.expert_policy(&state, noise, &mut rng);
        state = env.step(&state, action).0;
        if state.milestones_reached.len() == env.config().milestones.len()
            && state.fanfare_remaining == 0
        {
            frames.push(env.observe(&state));
            frame_milestones.push(state.milestones_reached.len());
            break;
        }
    }

    let total_reached = state.milestones_reached.len();
    let partial = relevant
        && spec.partial_fraction > 0.0
        && total_reached >= 2
        && rng.gen::<f64>() < spec.partial_fraction;

    let (frames, first_m, last_m) = if partial {
        // Keep a contiguous sub-segment covering a random milestone span.
        let a = rng.gen_range(0..total_reached);
        let b = rng.gen_range(a..total_reached);
        // Frame range: from the first frame at which milestone a has fired
        // (minus a small lead-in) to the last frame before milestone b+1.
        let start = frame_milestones
            .iter()
            .position(|&c| c > a)
            .unwrap_or(0)
            .saturating_sub(8);
        let end = frame_milestones
            .iter()
            .position(|&c| c > b + 1)
            .unwrap_or(frames.len());
        let cut: Vec<Observation> = frames[start..end.max(start + 1)].to_vec();
        (cut, a, b)
    } else {
        let last = total_reached.saturating_sub(1);
        (frames, 0, last)
    };

    let span = if total_reached == 0 {
        None
    } else {
        Some((first_m, last_m))
    };

    Ok(VideoRecord {
        meta: VideoMeta {
            video_id,
            env_seed: env.config().seed,
            noise,
            span,
            decoy: !relevant,
            partial,
            frame_interval: OBS_STRIDE,
        },
        frames,
    })
}

/// Build (or rebuild) the embedding index over every video in `dir`.
/// Rebuilding an unchanged corpus produces bit-identical files. Corrupt
/// videos are skipped with a warning and recorded in the manifest.
pub fn build_index(dir: &Path, retrieval: &RetrievalSection) -> Result<CorpusIndex> {
    let mut video_files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| AshError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "ashv"))
        .collect();
    video_files.sort();

    // Embarrassingly parallel per video; the single writer below serializes
    // file output.
    let loaded: Vec<(PathBuf, Result<(VideoRecord, EmbeddingMatrix)>)> = video_files
        .par_iter()
        .map(|path| {
            let result = VideoRecord::read(path).map(|record| {
                let d_obs = record.frames.first().map_or(1, |f| f.features.len());
                let embedder = Embedder::new(d_obs);
                let matrix = embedder.embed_sequence(&record.frames, retrieval.stride);
                (record, matrix)
            });
            (path.clone(), result)
        })
        .collect();

    let index_path = dir.join("index.bin");
    let manifest_path = dir.join("manifest.jsonl");
    let index_file = File::create(&index_path).map_err(|e| AshError::io(&index_path, e))?;
    let mut index_w = BufWriter::new(index_file);
    let manifest_file =
        File::create(&manifest_path).map_err(|e| AshError::io(&manifest_path, e))?;
    let mut manifest_w = BufWriter::new(manifest_file);

    let mut entries = Vec::new();
    let mut offset: u64 = 0;
    for (path, result) in loaded {
        let file_name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match result {
            Ok((record, matrix)) => {
                matrix.write_to(&mut index_w)?;
                let entry = ManifestEntry {
                    video_id: record.meta.video_id,
                    file: file_name,
                    index_offset: offset,
                    rows: matrix.rows,
                    dim: matrix.dim,
                    frames: record.frames.len(),
                    meta: record.meta,
                    error: None,
                };
                offset += binfmt::embedding_block_len(matrix.rows, matrix.dim);
                entries.push(entry);
            }
            Err(e) => {
                log::warn!("skipping corrupt video {path:?}: {e}");
                entries.push(ManifestEntry {
                    video_id: parse_video_id(&file_name).unwrap_or(u64::MAX),
                    file: file_name,
                    index_offset: 0,
                    rows: 0,
                    dim: 0,
                    frames: 0,
                    meta: VideoMeta {
                        video_id: u64::MAX,
                        env_seed: 0,
                        noise: 0.0,
                        span: None,
                        decoy: true,
                        partial: false,
                        frame_interval: OBS_STRIDE,
                    },
                    error: Some(e.to_string()),
                });
            }
        }
    }
    entries.sort_by_key(|e| e.video_id);
    for entry in &entries {
        let line = serde_json::to_string(entry).expect("entry serializes");
        writeln!(manifest_w, "{line}").map_err(|e| AshError::io(&manifest_path, e))?;
    }
    manifest_w
        .flush()
        .map_err(|e| AshError::io(&manifest_path, e))?;
    index_w.flush().map_err(|e| AshError::io(&index_path, e))?;

    Ok(CorpusIndex {
        dir: dir.to_path_buf(),
        entries,
    })
}

fn parse_video_id(file_name: &str) -> Option<VideoId> {
    file_name
        .strip_prefix("video_")?
        .strip_suffix(".ashv")?
        .parse()
        .ok()
}

/// Milestone progress of an agent, for relevance judgments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentProgress {
    pub last_milestone: Option<MilestoneId>,
}

/// Ground-truth relevance: a video helps an agent iff it is from the real
/// world and its milestone span overlaps the agent's near future
/// `[last, last + 2]`.
pub fn ground_truth_relevant(meta: &VideoMeta, progress: AgentProgress) -> bool {
    if meta.decoy {
        return false;
    }
    let Some((lo, hi)) = meta.span else {
        return false;
    };
    let last = progress.last_milestone.unwrap_or(0);
    let want_lo = last;
    let want_hi = last + 2;
    lo <= want_hi && hi >= want_lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn small_spec(n: usize, relevant: f64) -> CorpusSection {
        CorpusSection {
            num_videos: n,
            relevance_fraction: relevant,
            noise_range: [0.0, 0.2],
            partial_fraction: 0.5,
            seed: 5,
            max_steps: 1600,
        }
    }

    #[test]
    fn relevant_count_is_exact() {
        let dir = TempDir::new().unwrap();
        let metas =
            generate_corpus(&EnvConfig::default(), &small_spec(50, 0.08), dir.path()).unwrap();
        assert_eq!(metas.len(), 50);
        let relevant = metas.iter().filter(|m| !m.decoy).count();
        assert_eq!(relevant, 4); // round(50 * 0.08)
    }

    #[test]
    fn zero_partial_fraction_keeps_full_videos() {
        let dir = TempDir::new().unwrap();
        let mut spec = small_spec(12, 0.5);
        spec.partial_fraction = 0.0;
        let metas = generate_corpus(&EnvConfig::default(), &spec, dir.path()).unwrap();
        for m in metas.iter().filter(|m| !m.decoy) {
            assert!(!m.partial);
            assert_eq!(m.span.map(|(lo, _)| lo), Some(0));
        }
    }

    #[test]
    fn noise_free_full_videos_reach_every_milestone() {
        let dir = TempDir::new().unwrap();
        let mut spec = small_spec(10, 0.5);
        spec.noise_range = [0.0, 0.0];
        spec.partial_fraction = 0.0;
        let metas = generate_corpus(&EnvConfig::default(), &spec, dir.path()).unwrap();
        for m in metas.iter().filter(|m| !m.decoy) {
            assert_eq!(m.span, Some((0, 11)));
        }
    }

    #[test]
    fn video_round_trips() {
        let dir = TempDir::new().unwrap();
        let spec = small_spec(4, 0.5);
        let metas = generate_corpus(&EnvConfig::default(), &spec, dir.path()).unwrap();
        for meta in &metas {
            let path = dir.path().join(video_file_name(meta.video_id));
            let record = VideoRecord::read(&path).unwrap();
            assert_eq!(&record.meta, meta);
            assert!(!record.frames.is_empty());
            let tmp = dir.path().join("copy.ashv");
            record.write(&tmp).unwrap();
            assert_eq!(VideoRecord::read(&tmp).unwrap(), record);
            std::fs::remove_file(tmp).unwrap();
        }
    }

    #[test]
    fn index_rows_follow_ceil_arithmetic() {
        let dir = TempDir::new().unwrap();
        let spec = small_spec(3, 1.0);
        generate_corpus(&EnvConfig::default(), &spec, dir.path()).unwrap();
        let retrieval = RetrievalSection {
            stride: 8,
            ..RetrievalSection::default()
        };
        let index = build_index(dir.path(), &retrieval).unwrap();
        for entry in &index.entries {
            assert_eq!(entry.rows, entry.frames.div_ceil(8));
            let m = index.embedding(entry).unwrap();
            assert_eq!(m.rows, entry.rows);
            assert!(m.max_norm_error() < 1e-6);
        }
    }

    #[test]
    fn empty_corpus_gives_empty_manifest() {
        let dir = TempDir::new().unwrap();
        let index = build_index(dir.path(), &RetrievalSection::default()).unwrap();
        assert!(index.is_empty());
    }

    #[test]
    fn rebuild_is_idempotent() {
        let dir = TempDir::new().unwrap();
        generate_corpus(&EnvConfig::default(), &small_spec(6, 0.5), dir.path()).unwrap();
        build_index(dir.path(), &RetrievalSection::default()).unwrap();
        let manifest1 = std::fs::read(dir.path().join("manifest.jsonl")).unwrap();
        let bin1 = std::fs::read(dir.path().join("index.bin")).unwrap();
        build_index(dir.path(), &RetrievalSection::default()).unwrap();
        let manifest2 = std::fs::read(dir.path().join("manifest.jsonl")).unwrap();
        let bin2 = std::fs::read(dir.path().join("index.bin")).unwrap();
        assert_eq!(manifest1, manifest2);
        assert_eq!(bin1, bin2);
    }

    #[test]
    fn corrupt_video_is_skipped_and_recorded() {
        let dir = TempDir::new().unwrap();
        generate_corpus(&EnvConfig::default(), &small_spec(4, 0.5), dir.path()).unwrap();
        std::fs::write(dir.path().join("video_00001.ashv"), b"garbage").unwrap();
        let index = build_index(dir.path(), &RetrievalSection::default()).unwrap();
        let bad: Vec<_> = index.entries.iter().filter(|e| e.error.is_some()).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(index.entries.len(), 4);
    }

    #[test]
    fn relevance_oracle_cases() {
        let meta = |decoy: bool, span: Option<(usize, usize)>| VideoMeta {
            video_id: 0,
            env_seed: 0,
            noise: 0.0,
            span,
            decoy,
            partial: span != Some((0, 11)),
            frame_interval: 2,
        };
        let at = |m: Option<usize>| AgentProgress { last_milestone: m };
        // Decoys are never relevant.
        assert!(!ground_truth_relevant(&meta(true, Some((0, 11))), at(Some(3))));
        // A full playthrough overlaps any progress.
        for m in 0..12 {
            assert!(ground_truth_relevant(&meta(false, Some((0, 11))), at(Some(m))));
        }
        // Span 6..8 does not help an agent at milestone 2.
        assert!(!ground_truth_relevant(&meta(false, Some((6, 8))), at(Some(2))));
        // But span 3..5 does (2 + 2 >= 3).
        assert!(ground_truth_relevant(&meta(false, Some((3, 5))), at(Some(2))));
        // No progress yet: the near future is 0..=2.
        assert!(ground_truth_relevant(&meta(false, Some((2, 4))), at(None)));
        assert!(!ground_truth_relevant(&meta(false, Some((3, 4))), at(None)));
    }

    #[test]
    fn uniform_sampling_matches_relevance_fraction() {
        // Sampling ids uniformly hits relevant videos at the configured base
        // rate, within a 4-sigma binomial interval at n = 1000.
        let dir = TempDir::new().unwrap();
        let spec = CorpusSection {
            num_videos: 1000,
            relevance_fraction: 0.08,
            noise_range: [0.0, 0.0],
            partial_fraction: 0.0,
            seed: 9,
            max_steps: 700,
        };
        let metas = generate_corpus(&EnvConfig::default(), &spec, dir.path()).unwrap();
        let relevant = metas.iter().filter(|m| !m.decoy).count();
        assert_eq!(relevant, 80);
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1000;
        let hits = (0..n)
            .filter(|_| !metas[rng.gen_range(0..metas.len())].decoy)
            .count();
        let p = 0.08f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let rate = hits as f64 / n as f64;
        assert!(
            (rate - p).abs() < 4.0 * sigma + 1e-9,
            "rate {rate} outside binomial interval around {p}"
        );
    }
}
