//! Training pairs formed across different videos of the same cluster.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One audio-visual training pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub audio: usize,
    pub visual: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
    pub fraction: f64,
    pub seed: u64,
}

impl PairSet {
    /// The one-to-one pairing `(i, i)`.
    pub fn identity(labels: &[usize]) -> Self {
        Self {
            pairs: labels
                .iter()
                .enumerate()
                .map(|(i, &label)| Pair {
                    audio: i,
                    visual: i,
                    label,
                })
                .collect(),
            fraction: 0.0,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|p| (p.audio, p.visual)).collect()
    }
}

/// Σ_c n_c·m_c: the size of the exhaustive same-cluster pairing.
pub fn exhaustive_pair_count(labels: &[usize]) -> usize {
    members_by_cluster(labels).values().map(|m| m.len() * m.len()).sum()
}

fn members_by_cluster(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        out.entry(l).or_default().push(i);
    }
    out
}

/// Expands the identity pairing with same-cluster cross pairs.
///
/// With `f = 0` only the identity pairs are returned. Otherwise each audio item
/// is paired with `max(1, round(f·m_c))` visual items of its cluster (size
/// `m_c`): its own video plus a seeded uniform sample, without replacement, of
/// the others. When `target_count` is given it replaces `f`: the result holds
/// every identity pair plus `target_count − n` cross pairs sampled uniformly
/// from all same-cluster cross pairs. Pairs are sorted by (audio, visual).
pub fn expand_pairs(
    labels_audio: &[usize],
    labels_visual: &[usize],
    f: f64,
    seed: u64,
    target_count: Option<usize>,
) -> Result<PairSet> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Argument(format!("expansion fraction {f} is outside [0, 1]")));
    }
    if labels_audio.len() != labels_visual.len() {
        return Err(Error::Validation(format!(
            "{} audio labels but {} visual labels",
            labels_audio.len(),
            labels_visual.len()
        )));
    }
    let audio_clusters = members_by_cluster(labels_audio);
    let visual_clusters = members_by_cluster(labels_visual);
    for c in audio_clusters.keys() {
        if !visual_clusters.contains_key(c) {
            return Err(Error::Validation(format!("cluster {c} has no visual items")));
        }
    }
    for c in visual_clusters.keys() {
        if !audio_clusters.contains_key(c) {
            return Err(Error::Validation(format!("cluster {c} has no audio items")));
        }
    }
    if let Some(i) = (0..labels_audio.len()).find(|&i| labels_audio[i] != labels_visual[i]) {
        return Err(Error::Validation(format!(
            "video {i} has audio label {} but visual label {}",
            labels_audio[i], labels_visual[i]
        )));
    }
    let labels = labels_audio;
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if let Some(target) = target_count {
        let total_cross = exhaustive_pair_count(labels) - n;
        if target < n || target - n > total_cross {
            return Err(Error::Argument(format!(
                "target of {target} pairs is outside [{n}, {}]",
                n + total_cross
            )));
        }
        // cross pairs of a cluster with m members are numbered 0..m(m-1)
        let clusters: Vec<&Vec<usize>> = audio_clusters.values().collect();
        let mut offsets = Vec::with_capacity(clusters.len());
        let mut acc = 0;
        for m in &clusters {
            offsets.push(acc);
            acc += m.len() * (m.len() - 1);
        }
        let mut pairs: Vec<Pair> = PairSet::identity(labels).pairs;
        for idx in index::sample(&mut rng, total_cross, target - n).into_iter() {
            let c = offsets.partition_point(|&o| o <= idx) - 1;
            let members = clusters[c];
            let local = idx - offsets[c];
            let m = members.len();
            let a = local / (m - 1);
            let mut v = local % (m - 1);
            if v >= a {
                v += 1;
            }
            pairs.push(Pair {
                audio: members[a],
                visual: members[v],
                label: labels[members[a]],
            });
        }
        pairs.sort_unstable();
        return Ok(PairSet {
            pairs,
            fraction: f,
            seed,
        });
    }

    if f == 0.0 {
        return Ok(PairSet {
            seed,
            ..PairSet::identity(labels)
        });
    }

    let mut pairs = Vec::new();
    for a in 0..n {
        let members = &visual_clusters[&labels[a]];
        let m = members.len();
        let take = ((f * m as f64).round() as usize).clamp(1, m);
        let others: Vec<usize> = members.iter().cloned().filter(|&v| v != a).collect();
        let mut chosen = vec![a];
        chosen.extend(
            index::sample(&mut rng, others.len(), take - 1)
                .into_iter()
                .map(|i| others[i]),
        );
        chosen.sort_unstable();
        pairs.extend(chosen.into_iter().map(|v| Pair {
            audio: a,
            visual: v,
            label: labels[a],
        }));
    }
    Ok(PairSet {
        pairs,
        fraction: f,
        seed,
    })
}
