//! Sequence datasets, the SEQD on-disk format, and two synthetic generators:
//! a delayed-echo memory task and an HMM-style frame-labeling task.
//!
//! SEQD layout (all little-endian): magic `SEQD`, u32 version = 1, u32 n_i,
//! u32 n_o, u64 utterance count, then per utterance u64 T, T*n_i f32
//! features row-major, T i32 labels. Features are stored in 32-bit floats;
//! training may upcast.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const SEQD_MAGIC: [u8; 4] = *b"SEQD";
const SEQD_VERSION: u32 = 1;

/// One utterance: a `T x n_i` frame matrix and an integer label per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub frames: Matrix<f32>,
    pub labels: Vec<u32>,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A list of variable-length utterances sharing feature and label spaces.
///
/// `provenance` records how the data was made (generator, arguments, seed,
/// measured baselines). It lives in memory only (the SEQD format does not
/// store it) and it is excluded from equality.
#[derive(Clone, Debug)]
pub struct SequenceDataset {
    pub n_i: usize,
    pub n_o: usize,
    pub utterances: Vec<Utterance>,
    pub provenance: String,
}

impl PartialEq for SequenceDataset {
    fn eq(&self, other: &Self) -> bool {
        self.n_i == other.n_i && self.n_o == other.n_o && self.utterances == other.utterances
    }
}

impl SequenceDataset {
    pub fn total_frames(&self) -> u64 {
        self.utterances.iter().map(|u| u.len() as u64).sum()
    }

    fn validate(&self) -> Result<()> {
        for utt in &self.utterances {
            if utt.frames.rows() != utt.labels.len() {
                return Err(Error::shape(
                    "dataset",
                    format!("{} frames vs {} labels", utt.frames.rows(), utt.labels.len()),
                ));
            }
            if utt.frames.cols() != self.n_i {
                return Err(Error::shape(
                    "dataset",
                    format!("frame width {} vs n_i {}", utt.frames.cols(), self.n_i),
                ));
            }
            if utt.is_empty() {
                return Err(Error::InvalidArg("empty utterance".into()));
            }
            for &l in &utt.labels {
                if l as usize >= self.n_o {
                    return Err(Error::LabelOutOfRange { label: l, n_o: self.n_o });
                }
            }
        }
        Ok(())
    }
}

/// Write a dataset in the SEQD format; the byte stream is a pure function of
/// the dataset contents.
pub fn write_dataset(ds: &SequenceDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&SEQD_MAGIC)?;
    w.write_all(&SEQD_VERSION.to_le_bytes())?;
    w.write_all(&(ds.n_i as u32).to_le_bytes())?;
    w.write_all(&(ds.n_o as u32).to_le_bytes())?;
    w.write_all(&(ds.utterances.len() as u64).to_le_bytes())?;
    for utt in &ds.utterances {
        w.write_all(&(utt.len() as u64).to_le_bytes())?;
        for &v in utt.frames.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        for &l in &utt.labels {
            w.write_all(&(l as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|_| Error::Truncated(what.to_string()))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(what)?))
    }

    fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.bytes(what)?))
    }
}

/// Read a SEQD file. Bad magic, wrong version, truncation and out-of-range
/// labels are distinct errors.
pub fn read_dataset(path: &Path) -> Result<SequenceDataset> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    let magic: [u8; 4] = r.bytes("magic")?;
    if magic != SEQD_MAGIC {
        return Err(Error::BadMagic { expected: SEQD_MAGIC, found: magic });
    }
    let version = r.u32("version")?;
    if version != SEQD_VERSION {
        return Err(Error::VersionMismatch { expected: SEQD_VERSION, found: version });
    }
    let n_i = r.u32("n_i")? as usize;
    let n_o = r.u32("n_o")? as usize;
    let count = r.u64("utterance count")?;
    let mut utterances = Vec::with_capacity(count as usize);
    for u in 0..count {
        let t = r.u64("utterance length")? as usize;
        let mut data = Vec::with_capacity(t * n_i);
        for _ in 0..t * n_i {
            data.push(r.f32("frame data")?);
        }
        let mut labels = Vec::with_capacity(t);
        for _ in 0..t {
            let l = r.i32("labels")?;
            if l < 0 || l as usize >= n_o {
                return Err(Error::LabelOutOfRange { label: l as u32, n_o });
            }
            labels.push(l as u32);
        }
        if t == 0 {
            return Err(Error::InvalidArg(format!("utterance {u} is empty")));
        }
        utterances.push(Utterance { frames: Matrix::from_vec(t, n_i, data), labels });
    }
    Ok(SequenceDataset {
        n_i,
        n_o,
        utterances,
        provenance: format!("loaded from {}", path.display()),
    })
}

/// Utterance-level train/dev split with a seeded shuffle.
pub fn split_dataset(
    ds: &SequenceDataset,
    dev_fraction: f64,
    seed: u64,
) -> Result<(SequenceDataset, SequenceDataset)> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::InvalidArg(format!("dev_fraction must be in (0,1), got {dev_fraction}")));
    }
    let n = ds.utterances.len();
    let dev_n = ((n as f64) * dev_fraction).round() as usize;
    if dev_n == 0 || dev_n == n {
        return Err(Error::InvalidArg(format!(
            "dev_fraction {dev_fraction} leaves an empty side for {n} utterances"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let pick = |ids: &[usize], tag: &str| SequenceDataset {
        n_i: ds.n_i,
        n_o: ds.n_o,
        utterances: ids.iter().map(|&i| ds.utterances[i].clone()).collect(),
        provenance: format!("{} [{tag} split seed={seed} fraction={dev_fraction}]", ds.provenance),
    };
    Ok((pick(&order[dev_n..], "train"), pick(&order[..dev_n], "dev")))
}

/// Shift labels for the delayed-echo task: `labels[t] = symbols[t - d]` for
/// `t >= d`, and the symbol at t=0 before that (those frames are typically
/// masked downstream).
pub fn delayed_echo_labels(symbols: &[u32], d: usize) -> Vec<u32> {
    symbols
        .iter()
        .enumerate()
        .map(|(t, _)| if t >= d { symbols[t - d] } else { symbols[0] })
        .collect()
}

/// Delayed-echo generator: one-hot symbol frames, label = symbol seen `delay`
/// frames earlier. A memory task a gated cell solves and a short-horizon
/// recurrence struggles with once the delay exceeds a handful of steps.
#[derive(Clone, Debug)]
pub struct DelayedEchoSpec {
    pub n_symbols: usize,
    pub delay: usize,
    pub utterances: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl DelayedEchoSpec {
    pub fn generate(&self) -> Result<SequenceDataset> {
        if self.n_symbols < 2 {
            return Err(Error::InvalidArg("delayed-echo needs n_symbols >= 2".into()));
        }
        if self.delay < 1 {
            return Err(Error::InvalidArg("delayed-echo needs delay >= 1".into()));
        }
        if self.min_len < self.delay + 1 {
            return Err(Error::InvalidArg(format!(
                "utterance length {} too short for delay {} (need >= {})",
                self.min_len,
                self.delay,
                self.delay + 1
            )));
        }
        if self.min_len > self.max_len || self.utterances == 0 {
            return Err(Error::InvalidArg("empty length range or zero utterances".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut utterances = Vec::with_capacity(self.utterances);
        for _ in 0..self.utterances {
            let t = rng.random_range(self.min_len..=self.max_len);
            let symbols: Vec<u32> =
                (0..t).map(|_| rng.random_range(0..self.n_symbols as u32)).collect();
            let labels = delayed_echo_labels(&symbols, self.delay);
            let mut frames = Matrix::zeros(t, self.n_symbols);
            for (row, &s) in symbols.iter().enumerate() {
                frames.set(row, s as usize, 1.0);
            }
            utterances.push(Utterance { frames, labels });
        }
        Ok(SequenceDataset {
            n_i: self.n_symbols,
            n_o: self.n_symbols,
            utterances,
            provenance: format!(
                "delayed-echo symbols={} delay={} utterances={} len={}..{} seed={}",
                self.n_symbols, self.delay, self.utterances, self.min_len, self.max_len, self.seed
            ),
        })
    }
}

/// HMM-style frame generator: a left-to-right chain of `states_per_phone`
/// states per random phone emits per-state Gaussian feature vectors (fixed
/// random means, shared isotropic noise); the label is the emitting state id.
#[derive(Clone, Debug)]
pub struct SyntheticFramesSpec {
    pub n_phones: usize,
    pub states_per_phone: usize,
    pub feature_dim: usize,
    pub noise: f64,
    pub utterances: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl SyntheticFramesSpec {
    pub fn n_states(&self) -> usize {
        self.n_phones * self.states_per_phone
    }

    fn validate(&self) -> Result<()> {
        if self.n_phones < 2 {
            return Err(Error::InvalidArg("synthetic-frames needs n_phones >= 2".into()));
        }
        if self.states_per_phone < 1 || self.feature_dim < 1 {
            return Err(Error::InvalidArg("states_per_phone and feature_dim must be >= 1".into()));
        }
        if self.noise < 0.0 {
            return Err(Error::InvalidArg("noise must be >= 0".into()));
        }
        if self.min_len < 1 || self.min_len > self.max_len || self.utterances == 0 {
            return Err(Error::InvalidArg("bad length range or zero utterances".into()));
        }
        Ok(())
    }

    /// The per-state mean vectors, a pure function of the seed.
    pub fn state_means(&self) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_states())
            .map(|_| (0..self.feature_dim).map(|_| rng.random_range(-1.0f32..=1.0)).collect())
            .collect()
    }

    pub fn generate(&self) -> Result<SequenceDataset> {
        self.validate()?;
        let means = self.state_means();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(0x5DEECE66D));
        let normal = StandardNormal;
        let advance_prob = 0.4;

        let mut utterances = Vec::with_capacity(self.utterances);
        for _ in 0..self.utterances {
            let t = rng.random_range(self.min_len..=self.max_len);
            let mut frames = Matrix::zeros(t, self.feature_dim);
            let mut labels = Vec::with_capacity(t);
            let mut phone = rng.random_range(0..self.n_phones);
            let mut state = 0usize;
            for row in 0..t {
                let id = phone * self.states_per_phone + state;
                labels.push(id as u32);
                for col in 0..self.feature_dim {
                    let eps: f64 = normal.sample(&mut rng);
                    frames.set(row, col, means[id][col] + (self.noise * eps) as f32);
                }
                if rng.random_range(0.0..1.0) < advance_prob {
                    state += 1;
                    if state == self.states_per_phone {
                        state = 0;
                        phone = rng.random_range(0..self.n_phones);
                    }
                }
            }
            utterances.push(Utterance { frames, labels });
        }
        let mut ds = SequenceDataset {
            n_i: self.feature_dim,
            n_o: self.n_states(),
            utterances,
            provenance: String::new(),
        };
        let baseline = self.nearest_mean_accuracy(&ds);
        ds.provenance = format!(
            "synthetic-frames phones={} states={} dim={} noise={} utterances={} len={}..{} seed={} nearest_mean_baseline={:.4}",
            self.n_phones,
            self.states_per_phone,
            self.feature_dim,
            self.noise,
            self.utterances,
            self.min_len,
            self.max_len,
            self.seed,
            baseline
        );
        Ok(ds)
    }

    /// Frame accuracy of a nearest-mean classifier against the true state
    /// means; the dataset's difficulty baseline.
    pub fn nearest_mean_accuracy(&self, ds: &SequenceDataset) -> f64 {
        let means = self.state_means();
        let mut correct = 0u64;
        let mut total = 0u64;
        for utt in &ds.utterances {
            for (row, &label) in utt.labels.iter().enumerate() {
                let frame = utt.frames.row(row);
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (s, mean) in means.iter().enumerate() {
                    let mut d = 0.0f64;
                    for (a, b) in frame.iter().zip(mean.iter()) {
                        let diff = (*a - *b) as f64;
                        d += diff * diff;
                    }
                    if d < best_d {
                        best_d = d;
                        best = s;
                    }
                }
                if best as u32 == label {
                    correct += 1;
                }
                total += 1;
            }
        }
        correct as f64 / total as f64
    }
}
