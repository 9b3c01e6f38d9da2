//! Synthetic sequence tasks: the desk-scale stand-ins for a pretraining
//! corpus. Both tasks make the *predictable* positions explicit so training
//! and evaluation can ignore the irreducible-entropy ones.

use crate::numerics::RngState;

use super::ToylmError;

/// Token 0 marks sequence start, token 1 separates payload from copy (and
/// marks the recall query); payload ids start at 2.
pub const BOS: usize = 0;
pub const SEP: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// `[BOS, payload, SEP, payload]`: the second payload must be copied
    /// token-for-token.
    Copy,
    /// `[BOS, k1, v1, ..., kn, vn, SEP, kq, vq]`: reproduce the value most
    /// recently bound to the queried key.
    Recall,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Copy => "copy",
            Self::Recall => "recall",
        })
    }
}

impl std::str::FromStr for TaskKind {
    type Err = ToylmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "copy" => Ok(Self::Copy),
            "recall" => Ok(Self::Recall),
            other => Err(ToylmError::UnknownTask { name: other.to_string() }),
        }
    }
}

/// A set of equal-length token sequences for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: TaskKind,
    pub vocab_size: usize,
    pub sequences: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequence_length(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }
}

/// Generate `n_sequences` sequences of exactly `length` tokens.
pub fn synth_task(
    kind: TaskKind,
    seed: u64,
    n_sequences: usize,
    length: usize,
    vocab: usize,
) -> Result<Dataset, ToylmError> {
    if length < 8 {
        return Err(ToylmError::BadTaskParam { what: "length", value: length, min: 8 });
    }
    if vocab < 8 {
        return Err(ToylmError::BadTaskParam { what: "vocab", value: vocab, min: 8 });
    }
    let sequences = (0..n_sequences)
        .map(|i| {
            let mut rng = RngState::substream(seed, i as u64);
            match kind {
                TaskKind::Copy => copy_sequence(&mut rng, length, vocab),
                TaskKind::Recall => recall_sequence(&mut rng, length, vocab),
            }
        })
        .collect();
    Ok(Dataset { kind, vocab_size: vocab, sequences })
}

fn copy_sequence(rng: &mut RngState, length: usize, vocab: usize) -> Vec<usize> {
    let payload_len = (length - 2) / 2;
    let payload: Vec<usize> =
        (0..payload_len).map(|_| 2 + rng.next_below((vocab - 2) as u64) as usize).collect();
    let mut seq = Vec::with_capacity(length);
    seq.push(BOS);
    seq.extend(&payload);
    seq.push(SEP);
    seq.extend(&payload);
    while seq.len() < length {
        seq.push(BOS); // odd-length pad, never predicted (mask 0)
    }
    seq
}

fn recall_sequence(rng: &mut RngState, length: usize, vocab: usize) -> Vec<usize> {
    // Key and value alphabets split the payload ids; keys may repeat, and
    // the answer is the value of the key's most recent binding.
    let ids = vocab - 2;
    let n_keys = ids / 2;
    let key = |r: &mut RngState| 2 + r.next_below(n_keys as u64) as usize;
    let value = |r: &mut RngState| 2 + n_keys + r.next_below((ids - n_keys) as u64) as usize;

    let n_pairs = (length - 4) / 2;
    let mut seq = Vec::with_capacity(length);
    seq.push(BOS);
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let (k, v) = (key(rng), value(rng));
        pairs.push((k, v));
        seq.push(k);
        seq.push(v);
    }
    seq.push(SEP);
    let query_ix = rng.next_below(n_pairs as u64) as usize;
    let (qk, _) = pairs[query_ix];
    let answer = pairs
        .iter()
        .rev()
        .find(|(k, _)| *k == qk)
        .expect("query key comes from the pair list")
        .1;
    seq.push(qk);
    seq.push(answer);
    while seq.len() < length {
        seq.push(BOS);
    }
    seq
}

/// Per-position loss weight: 1.0 where the target token is predictable from
/// the prefix, 0.0 elsewhere. Index `t` weights the prediction of
/// `tokens[t]`; index 0 is always 0 (nothing predicts BOS).
pub fn loss_mask(kind: TaskKind, tokens: &[usize]) -> Vec<f64> {
    let mut mask = vec![0.0; tokens.len()];
    match kind {
        TaskKind::Copy => {
            if let Some(sep) = tokens.iter().position(|&t| t == SEP) {
                let payload_len = sep - 1;
                for t in sep + 1..(sep + 1 + payload_len).min(tokens.len()) {
                    mask[t] = 1.0;
                }
            }
        }
        TaskKind::Recall => {
            // The answer is the token right after [SEP, key].
            if let Some(sep) = tokens.iter().rposition(|&t| t == SEP) {
                if sep + 2 < tokens.len() {
                    mask[sep + 2] = 1.0;
                }
            }
        }
    }
    mask
}

/// One sequence per line, space-separated token ids.
pub fn write_dataset(ds: &Dataset, path: &std::path::Path) -> Result<(), ToylmError> {
    let mut text = String::new();
    for seq in &ds.sequences {
        let line: Vec<String> = seq.iter().map(usize::to_string).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text)
        .map_err(|e| ToylmError::Io { path: path.to_path_buf(), message: e.to_string() })
}

/// Read a dataset written by [`write_dataset`]; the task kind and vocab are
/// not stored in the file and must be supplied.
pub fn read_dataset(
    path: &std::path::Path,
    kind: TaskKind,
    vocab_size: usize,
) -> Result<Dataset, ToylmError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ToylmError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let mut sequences = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut seq = Vec::new();
        for field in line.split(' ') {
            let id: usize = field.parse().map_err(|_| ToylmError::Corrupt {
                path: path.to_path_buf(),
                what: format!("line {}: `{field}` is not a token id", ln + 1),
            })?;
            if id >= vocab_size {
                return Err(ToylmError::Corrupt {
                    path: path.to_path_buf(),
                    what: format!("line {}: token {id} outside vocab {vocab_size}", ln + 1),
                });
            }
            seq.push(id);
        }
        sequences.push(seq);
    }
    Ok(Dataset { kind, vocab_size, sequences })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_second_half_mirrors_first() {
        let ds = synth_task(TaskKind::Copy, 1, 4, 8, 16).unwrap();
        for seq in &ds.sequences {
            assert_eq!(seq.len(), 8);
            assert_eq!(seq[0], BOS);
            assert_eq!(seq[4], SEP);
            assert_eq!(&seq[1..4], &seq[5..8]);
        }
    }

    #[test]
    fn copy_mask_covers_exactly_the_copy_region() {
        let ds = synth_task(TaskKind::Copy, 1, 1, 10, 16).unwrap();
        let mask = loss_mask(TaskKind::Copy, &ds.sequences[0]);
        assert_eq!(mask, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn recall_answer_appeared_earlier() {
        let ds = synth_task(TaskKind::Recall, 5, 32, 20, 16).unwrap();
        for seq in &ds.sequences {
            let answer = *seq.last().unwrap();
            let key = seq[seq.len() - 2];
            assert!(seq[..seq.len() - 1].contains(&answer));
            // Most recent binding of the queried key.
            let pos = (1..seq.len() - 3)
                .step_by(2)
                .filter(|&p| seq[p] == key)
                .next_back()
                .expect("key bound earlier");
            assert_eq!(seq[pos + 1], answer);
        }
    }

    #[test]
    fn recall_mask_is_the_answer_position_only() {
        let ds = synth_task(TaskKind::Recall, 5, 1, 12, 16).unwrap();
        let mask = loss_mask(TaskKind::Recall, &ds.sequences[0]);
        let total: f64 = mask.iter().sum();
        assert_eq!(total, 1.0);
        assert_eq!(mask[11], 1.0);
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let a = synth_task(TaskKind::Copy, 9, 8, 16, 32).unwrap();
        let b = synth_task(TaskKind::Copy, 9, 8, 16, 32).unwrap();
        let c = synth_task(TaskKind::Copy, 10, 8, 16, 32).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn payload_collision_rate_within_birthday_bound() {
        // 100 payloads per seed from a 62^3 space: expected overlap well
        // under 1%.
        let n = 100;
        let collect = |seed: u64| -> std::collections::HashSet<Vec<usize>> {
            synth_task(TaskKind::Copy, seed, n, 8, 64)
                .unwrap()
                .sequences
                .iter()
                .map(|s| s[1..4].to_vec())
                .collect()
        };
        let a = collect(1);
        let b = collect(2);
        let collisions = a.intersection(&b).count();
        assert!(
            (collisions as f64) / (n as f64) <= 0.01,
            "collision rate {collisions}/{n}"
        );
    }

    #[test]
    fn rejects_too_short_or_tiny_vocab() {
        assert!(synth_task(TaskKind::Copy, 0, 1, 7, 16).is_err());
        assert!(synth_task(TaskKind::Copy, 0, 1, 16, 7).is_err());
    }

    #[test]
    fn dataset_file_round_trip() {
        let ds = synth_task(TaskKind::Recall, 3, 6, 12, 16).unwrap();
        let dir = std::env::temp_dir().join("pelab_ds_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.txt");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path, TaskKind::Recall, 16).unwrap();
        assert_eq!(ds, back);
        std::fs::remove_dir_all(&dir).ok();
    }
}
