//! The level buffer: value-loss / identifiability scores, rank and staleness
//! prioritisation, the mixed sampling distribution, and the insertion rule
//! for generated levels.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::LevelParams;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("empty trajectory has no score")]
    EmptyTrajectory,
    #[error("buffer is empty")]
    EmptyBuffer,
    #[error("buffer holds no train-set entries")]
    NoTrainSet,
    #[error("capacity {capacity} below train set size {train}")]
    CapacityTooSmall { capacity: usize, train: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Provenance {
    TrainSet,
    Generated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BufferEntry {
    pub params: LevelParams,
    /// Primary replay score; +∞ until the level is first rolled out, so
    /// every resident level is visited at least once.
    pub score_s: f64,
    /// Secondary score driving generated-level retention.
    pub score_s2: f64,
    pub last_sampled_at: u64,
    pub provenance: Provenance,
    pub ever_solved: bool,
}

impl BufferEntry {
    pub fn train(params: LevelParams) -> BufferEntry {
        BufferEntry {
            params,
            score_s: f64::INFINITY,
            score_s2: f64::INFINITY,
            last_sampled_at: 0,
            provenance: Provenance::TrainSet,
            ever_solved: false,
        }
    }

    pub fn generated(params: LevelParams, score_s: f64, score_s2: f64, ever_solved: bool) -> BufferEntry {
        BufferEntry {
            params,
            score_s,
            score_s2,
            last_sampled_at: 0,
            provenance: Provenance::Generated,
            ever_solved,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prioritisation {
    Rank,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Staleness mixing coefficient ρ.
    pub rho: f64,
    /// Secondary-score mixing coefficient η.
    pub eta: f64,
    /// Rank temperature; weights are (1/rank)^(1/temperature).
    pub temperature: f64,
    pub capacity: usize,
    pub prioritisation: Prioritisation,
}

impl Default for SamplingConfig {
    fn default() -> SamplingConfig {
        SamplingConfig {
            rho: 0.3,
            eta: 0.0,
            temperature: 0.1,
            capacity: 512,
            prioritisation: Prioritisation::Rank,
        }
    }
}

/// Mean absolute gap between value predictions and their return targets.
pub fn score_value_loss(values: &[f64], returns: &[f64]) -> Result<f64, StoreError> {
    if values.is_empty() || values.len() != returns.len() {
        return Err(StoreError::EmptyTrajectory);
    }
    let total: f64 = values.iter().zip(returns).map(|(v, g)| (v - g).abs()).sum();
    Ok(total / values.len() as f64)
}

/// Trajectory identifiability score: Σ_t log p(level | representation_t).
pub fn score_mi(step_log_probs: &[f64]) -> Result<f64, StoreError> {
    if step_log_probs.is_empty() {
        return Err(StoreError::EmptyTrajectory);
    }
    Ok(step_log_probs.iter().sum())
}

/// Rank prioritisation: weight (1/rank)^(1/temperature), rank 1 = highest
/// score, ties keeping insertion order.
pub fn rank_distribution(scores: &[f64], temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "temperature must be positive");
    let n = scores.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("scores are not NaN"));
    let mut weights = vec![0.0; n];
    for (rank0, &i) in order.iter().enumerate() {
        weights[i] = (1.0 / (rank0 + 1) as f64).powf(1.0 / temperature);
    }
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }
    weights
}

/// Staleness prioritisation: mass proportional to age, uniform when all ages
/// are zero.
pub fn staleness_distribution(ages: &[f64]) -> Vec<f64> {
    let n = ages.len();
    if n == 0 {
        return Vec::new();
    }
    let total: f64 = ages.iter().sum();
    if total == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    ages.iter().map(|a| a / total).collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum InsertOutcome {
    Inserted(usize),
    Rejected,
}

/// Linear ramp of the mixing parameter η over training progress.
pub fn eta_schedule(progress: f64) -> f64 {
    progress.clamp(0.0, 1.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelStore {
    entries: Vec<BufferEntry>,
    episode_counter: u64,
    capacity: usize,
}

impl LevelStore {
    pub fn new(train_levels: Vec<LevelParams>, capacity: usize) -> Result<LevelStore, StoreError> {
        if capacity < train_levels.len() {
            return Err(StoreError::CapacityTooSmall { capacity, train: train_levels.len() });
        }
        Ok(LevelStore {
            entries: train_levels.into_iter().map(BufferEntry::train).collect(),
            episode_counter: 0,
            capacity,
        })
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn episode_counter(&self) -> u64 {
        self.episode_counter
    }

    fn train_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.provenance == Provenance::TrainSet)
            .count()
    }

    /// Primary-score rank distribution restricted to TrainSet entries.
    pub fn p_s(&self, cfg: &SamplingConfig) -> Vec<f64> {
        self.supported_rank(cfg, |e| e.score_s, true)
    }

    /// Secondary-score rank distribution over the whole buffer.
    pub fn p_s2(&self, cfg: &SamplingConfig) -> Vec<f64> {
        self.supported_rank(cfg, |e| e.score_s2, false)
    }

    fn supported_rank(
        &self,
        cfg: &SamplingConfig,
        score: impl Fn(&BufferEntry) -> f64,
        train_only: bool,
    ) -> Vec<f64> {
        let Prioritisation::Rank = cfg.prioritisation;
        let idx: Vec<usize> = (0..self.entries.len())
            .filter(|&i| !train_only || self.entries[i].provenance == Provenance::TrainSet)
            .collect();
        let scores: Vec<f64> = idx.iter().map(|&i| score(&self.entries[i])).collect();
        let local = rank_distribution(&scores, cfg.temperature);
        let mut out = vec![0.0; self.entries.len()];
        for (&i, p) in idx.iter().zip(local) {
            out[i] = p;
        }
        out
    }

    /// Staleness distribution restricted to TrainSet entries.
    pub fn p_r(&self) -> Vec<f64> {
        let idx: Vec<usize> = (0..self.entries.len())
            .filter(|&i| self.entries[i].provenance == Provenance::TrainSet)
            .collect();
        let ages: Vec<f64> = idx
            .iter()
            .map(|&i| (self.episode_counter - self.entries[i].last_sampled_at) as f64)
            .collect();
        let local = staleness_distribution(&ages);
        let mut out = vec![0.0; self.entries.len()];
        for (&i, p) in idx.iter().zip(local) {
            out[i] = p;
        }
        out
    }

    /// Replay distribution without a secondary mixture:
    /// (1−ρ)·P_S + ρ·P_R.
    pub fn plr_distribution(&self, cfg: &SamplingConfig) -> Result<Vec<f64>, StoreError> {
        self.check_support()?;
        let p_s = self.p_s(cfg);
        let p_r = self.p_r();
        Ok(p_s
            .iter()
            .zip(&p_r)
            .map(|(s, r)| (1.0 - cfg.rho) * s + cfg.rho * r)
            .collect())
    }

    /// Full mixture: (1−ρ)·((1−η)·P_S + η·P_S2) + ρ·P_R.
    pub fn mixed_distribution(&self, cfg: &SamplingConfig) -> Result<Vec<f64>, StoreError> {
        self.check_support()?;
        let p_s = self.p_s(cfg);
        let p_s2 = self.p_s2(cfg);
        let p_r = self.p_r();
        Ok((0..self.entries.len())
            .map(|i| {
                (1.0 - cfg.rho) * ((1.0 - cfg.eta) * p_s[i] + cfg.eta * p_s2[i])
                    + cfg.rho * p_r[i]
            })
            .collect())
    }

    fn check_support(&self) -> Result<(), StoreError> {
        if self.entries.is_empty() {
            return Err(StoreError::EmptyBuffer);
        }
        if self.train_count() == 0 {
            return Err(StoreError::NoTrainSet);
        }
        Ok(())
    }

    /// Draws an index from `dist` and stamps it with the episode counter.
    pub fn sample_from(&mut self, dist: &[f64], rng: &mut ChaCha8Rng) -> usize {
        debug_assert_eq!(dist.len(), self.entries.len());
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = self.entries.len() - 1;
        for (i, &p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = i;
                break;
            }
        }
        self.mark_sampled(chosen);
        chosen
    }

    pub fn mark_sampled(&mut self, idx: usize) {
        self.episode_counter += 1;
        self.entries[idx].last_sampled_at = self.episode_counter;
    }

    pub fn update_scores(&mut self, idx: usize, score_s: f64, score_s2: f64, solved: bool) {
        let e = &mut self.entries[idx];
        e.score_s = score_s;
        e.score_s2 = score_s2;
        e.ever_solved |= solved;
    }

    /// Inserts a generated level: free insert while the generated region has
    /// spare capacity, otherwise it must beat the region's minimum secondary
    /// score and replaces that entry. Unsolved candidates never enter.
    pub fn insert_generated(&mut self, entry: BufferEntry) -> InsertOutcome {
        debug_assert_eq!(entry.provenance, Provenance::Generated);
        if !entry.ever_solved {
            return InsertOutcome::Rejected;
        }
        let gen_capacity = self.capacity - self.train_count();
        let generated: Vec<usize> = (0..self.entries.len())
            .filter(|&i| self.entries[i].provenance == Provenance::Generated)
            .collect();
        if generated.len() < gen_capacity {
            self.entries.push(entry);
            return InsertOutcome::Inserted(self.entries.len() - 1);
        }
        let Some(&min_idx) = generated.iter().min_by(|&&a, &&b| {
            self.entries[a]
                .score_s2
                .partial_cmp(&self.entries[b].score_s2)
                .expect("scores are not NaN")
        }) else {
            return InsertOutcome::Rejected;
        };
        if entry.score_s2 > self.entries[min_idx].score_s2 {
            self.entries[min_idx] = entry;
            InsertOutcome::Inserted(min_idx)
        } else {
            InsertOutcome::Rejected
        }
    }

    pub fn save_checkpoint(&self) -> String {
        ron::ser::to_string_pretty(self, ron::ser::PrettyConfig::default())
            .expect("buffer serializes")
    }

    pub fn load_checkpoint(text: &str) -> Result<LevelStore, StoreError> {
        ron::from_str(text).map_err(|e| StoreError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(id: &str) -> LevelParams {
        LevelParams::from_digit_rows(id, &["50", "04"])
    }

    fn store_with(train: usize, capacity: usize) -> LevelStore {
        let levels = (0..train).map(|i| level(&format!("t{i}"))).collect();
        LevelStore::new(levels, capacity).unwrap()
    }

    #[test]
    fn value_loss_examples() {
        assert_eq!(score_value_loss(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((score_value_loss(&[0.5], &[0.9]).unwrap() - 0.4).abs() < 1e-12);
        let v = [0.1, -0.3, 0.2];
        let g = [0.0, 0.0, 0.0];
        assert!((score_value_loss(&v, &g).unwrap() - 0.2).abs() < 1e-12);
        assert!(score_value_loss(&[], &[]).is_err());
    }

    #[test]
    fn mi_score_examples() {
        let uniform = [(0.25f64).ln(); 2];
        assert!((score_mi(&uniform).unwrap() - 2.0 * 0.25f64.ln()).abs() < 1e-12);
        assert_eq!(score_mi(&[0.0, 0.0, 0.0]).unwrap(), 0.0, "perfect probe");
        let mixed = [0.5f64.ln(), 0.25f64.ln()];
        assert!((score_mi(&mixed).unwrap() - (0.5f64.ln() + 0.25f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn rank_distribution_example() {
        let p = rank_distribution(&[0.9, 0.1, 0.5], 1.0);
        let want = [6.0 / 11.0, 2.0 / 11.0, 3.0 / 11.0];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(rank_distribution(&[0.4], 0.5), vec![1.0]);
    }

    #[test]
    fn low_temperature_concentrates() {
        let p = rank_distribution(&[0.2, 0.9, 0.5], 0.01);
        assert!(p[1] > 0.999);
    }

    #[test]
    fn rank_ties_keep_insertion_order() {
        let p = rank_distribution(&[0.5, 0.5, 0.1], 1.0);
        assert!(p[0] > p[1], "first of a tie ranks higher");
        assert!(p[1] > p[2]);
    }

    #[test]
    fn staleness_examples() {
        assert_eq!(staleness_distribution(&[3.0, 1.0]), vec![0.75, 0.25]);
        assert_eq!(staleness_distribution(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(staleness_distribution(&[0.0, 0.0, 4.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn mixed_distribution_hand_example() {
        // ρ=0.3, η=0.5, P_S=[1,0], P_S2=[0.5,0.5], P_R=[0,1] → [0.525, 0.475].
        let p: Vec<f64> = (0..2)
            .map(|i| {
                let p_s = [1.0, 0.0][i];
                let p_s2 = [0.5, 0.5][i];
                let p_r = [0.0, 1.0][i];
                (1.0 - 0.3) * ((1.0 - 0.5) * p_s + 0.5 * p_s2) + 0.3 * p_r
            })
            .collect();
        assert!((p[0] - 0.525).abs() < 1e-12);
        assert!((p[1] - 0.475).abs() < 1e-12);
    }

    #[test]
    fn eta_zero_is_bitwise_plr() {
        let mut store = store_with(4, 8);
        store.update_scores(0, 0.9, 0.9, true);
        store.update_scores(1, 0.2, 0.2, true);
        store.mark_sampled(2);
        store.insert_generated(BufferEntry::generated(level("g"), 0.7, 0.7, true));
        let cfg = SamplingConfig { eta: 0.0, ..SamplingConfig::default() };
        let mixed = store.mixed_distribution(&cfg).unwrap();
        let plr = store.plr_distribution(&cfg).unwrap();
        assert_eq!(mixed, plr, "bitwise equality at η=0");
    }

    #[test]
    fn rho_one_is_pure_staleness() {
        let mut store = store_with(3, 3);
        store.update_scores(0, 5.0, 5.0, true);
        store.mark_sampled(1);
        let cfg = SamplingConfig { rho: 1.0, ..SamplingConfig::default() };
        let mixed = store.mixed_distribution(&cfg).unwrap();
        let p_r = store.p_r();
        assert_eq!(mixed, p_r);
    }

    #[test]
    fn support_restrictions() {
        let mut store = store_with(3, 6);
        store.insert_generated(BufferEntry::generated(level("g0"), 9.0, 9.0, true));
        store.insert_generated(BufferEntry::generated(level("g1"), 8.0, 8.0, true));
        let cfg = SamplingConfig { eta: 0.5, ..SamplingConfig::default() };
        let p_s = store.p_s(&cfg);
        let p_r = store.p_r();
        let p_s2 = store.p_s2(&cfg);
        for i in 3..5 {
            assert_eq!(p_s[i], 0.0, "generated excluded from P_S");
            assert_eq!(p_r[i], 0.0, "generated excluded from P_R");
            assert!(p_s2[i] > 0.0, "generated included in P_S2");
        }
        let at_eta0 = store
            .mixed_distribution(&SamplingConfig { eta: 0.0, ..cfg })
            .unwrap();
        assert!(at_eta0[3] == 0.0 && at_eta0[4] == 0.0);
    }

    #[test]
    fn insertion_rules() {
        let mut store = store_with(2, 4);
        // Spare capacity: free insert.
        assert_eq!(
            store.insert_generated(BufferEntry::generated(level("a"), 0.0, 0.2, true)),
            InsertOutcome::Inserted(2)
        );
        assert_eq!(
            store.insert_generated(BufferEntry::generated(level("b"), 0.0, 0.9, true)),
            InsertOutcome::Inserted(3)
        );
        // Full: must beat min S2 = 0.2.
        assert_eq!(
            store.insert_generated(BufferEntry::generated(level("c"), 0.0, 0.5, true)),
            InsertOutcome::Inserted(2)
        );
        assert_eq!(
            store.insert_generated(BufferEntry::generated(level("d"), 0.0, 0.1, true)),
            InsertOutcome::Rejected
        );
        // Unsolved: always rejected.
        assert_eq!(
            store.insert_generated(BufferEntry::generated(level("e"), 0.0, 99.0, false)),
            InsertOutcome::Rejected
        );
        // Train entries untouched throughout.
        assert_eq!(store.train_count(), 2);
    }

    #[test]
    fn eta_schedule_clamps() {
        assert_eq!(eta_schedule(0.0), 0.0);
        assert_eq!(eta_schedule(0.5), 0.5);
        assert_eq!(eta_schedule(1.3), 1.0);
        assert_eq!(eta_schedule(-0.2), 0.0);
    }

    #[test]
    fn capacity_below_train_set_is_rejected() {
        let levels: Vec<LevelParams> = (0..4).map(|i| level(&format!("t{i}"))).collect();
        assert!(matches!(
            LevelStore::new(levels, 3),
            Err(StoreError::CapacityTooSmall { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_preserves_infinity() {
        let mut store = store_with(2, 4);
        store.update_scores(0, 0.123456789012345, 0.5, true);
        store.mark_sampled(1);
        store.insert_generated(BufferEntry::generated(level("g"), 0.7, 0.8, true));
        let text = store.save_checkpoint();
        let back = LevelStore::load_checkpoint(&text).unwrap();
        assert_eq!(back.episode_counter, store.episode_counter);
        assert_eq!(back.entries.len(), store.entries.len());
        for (a, b) in back.entries.iter().zip(&store.entries) {
            assert_eq!(a.params, b.params);
            assert!(a.score_s == b.score_s || (a.score_s.is_infinite() && b.score_s.is_infinite()));
            assert_eq!(a.score_s.to_bits(), b.score_s.to_bits());
            assert_eq!(a.score_s2.to_bits(), b.score_s2.to_bits());
            assert_eq!(a.last_sampled_at, b.last_sampled_at);
        }
        assert!(back.entries[1].score_s.is_infinite());
    }
}
