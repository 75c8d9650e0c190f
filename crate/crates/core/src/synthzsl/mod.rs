//! Synthetic zero-shot datasets and their on-disk layout.
//!
//! Class attribute vectors follow a power-law frequency profile with paired
//! co-occurrence. Each instance carries `R` region rows: the first half is
//! the visual stream, the second half the attribute-side stream, and both
//! render the class attributes through separate fixed random maps before a
//! per-instance random transform and additive noise.

mod io;
pub mod oracle;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::inference::ClassSemanticMatrix;
use crate::numgraph::Tensor;

pub use io::{load, load_matrix, read_binary_matrix, read_text_matrix, save, write_binary_matrix, write_text_matrix, MATRIX_MAGIC};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub class_count: usize,
    pub seen_count: usize,
    pub attribute_count: usize,
    /// Even; half the regions form each stream.
    pub regions_per_instance: usize,
    pub feature_width: usize,
    pub instances_per_class: usize,
    /// Attribute `a` is active in a fraction `0.5 (a+1)^-exponent` of classes.
    pub imbalance_exponent: f64,
    /// Share of an odd attribute's active classes drawn from its even partner's.
    pub cooccurrence_strength: f64,
    pub variability_noise: f64,
    /// Fraction of instances with one stream replaced by noise.
    pub conflict_rate: f64,
    /// Fraction of each seen class held out for testing.
    pub seen_test_fraction: f64,
    /// Threshold attribute values at 0.5.
    pub binary_attributes: bool,
    /// Scale continuous class attribute vectors to unit length.
    pub normalize_attributes: bool,
    /// Multiplies every region feature.
    pub feature_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            class_count: 20,
            seen_count: 15,
            attribute_count: 32,
            regions_per_instance: 8,
            feature_width: 64,
            instances_per_class: 50,
            imbalance_exponent: 0.5,
            cooccurrence_strength: 0.5,
            variability_noise: 0.1,
            conflict_rate: 0.0,
            seen_test_fraction: 0.2,
            binary_attributes: false,
            normalize_attributes: true,
            feature_scale: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("class_count", self.class_count),
            ("seen_count", self.seen_count),
            ("attribute_count", self.attribute_count),
            ("regions_per_instance", self.regions_per_instance),
            ("feature_width", self.feature_width),
            ("instances_per_class", self.instances_per_class),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, 0, "must be positive"));
            }
        }
        if self.seen_count >= self.class_count {
            return Err(Error::config(
                "seen_count",
                0,
                format!("must be below class_count ({} >= {})", self.seen_count, self.class_count),
            ));
        }
        if self.regions_per_instance % 2 != 0 {
            return Err(Error::config("regions_per_instance", 0, "must be even (two streams of equal size)"));
        }
        if !(self.imbalance_exponent >= 0.0) || !self.imbalance_exponent.is_finite() {
            return Err(Error::config("imbalance_exponent", 0, "must be finite and nonnegative"));
        }
        if !(self.feature_scale > 0.0) || !self.feature_scale.is_finite() {
            return Err(Error::config("feature_scale", 0, "must be finite and positive"));
        }
        if !(self.variability_noise >= 0.0) || !self.variability_noise.is_finite() {
            return Err(Error::config("variability_noise", 0, "must be finite and nonnegative"));
        }
        for (key, v) in [
            ("cooccurrence_strength", self.cooccurrence_strength),
            ("conflict_rate", self.conflict_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key, 0, format!("must lie in [0, 1], got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.seen_test_fraction) {
            return Err(Error::config("seen_test_fraction", 0, "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Number of classes in which attribute `a` is active.
    pub fn target_frequency(&self, a: usize) -> usize {
        let p = 0.5 * ((a + 1) as f64).powf(-self.imbalance_exponent);
        ((p * self.class_count as f64).round() as usize).clamp(1, self.class_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    TrainSeen,
    TestSeen,
    TestUnseen,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::TrainSeen => "train_seen",
            Split::TestSeen => "test_seen",
            Split::TestUnseen => "test_unseen",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train_seen" => Ok(Split::TrainSeen),
            "test_seen" => Ok(Split::TestSeen),
            "test_unseen" => Ok(Split::TestUnseen),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Which stream of an instance, if any, was replaced by noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Corruption {
    #[default]
    Clean,
    Visual,
    Attribute,
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Corruption::Clean => "clean",
            Corruption::Visual => "visual",
            Corruption::Attribute => "attribute",
        })
    }
}

impl FromStr for Corruption {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clean" => Ok(Corruption::Clean),
            "visual" => Ok(Corruption::Visual),
            "attribute" => Ok(Corruption::Attribute),
            other => Err(format!("unknown stream `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: usize,
    /// `R × h`.
    pub regions: Tensor,
    pub label: usize,
    pub split: Split,
    pub corruption: Corruption,
}

impl Instance {
    /// First half of the regions.
    pub fn visual_stream(&self) -> Tensor {
        self.regions.slice_rows(0, self.regions.rows() / 2)
    }

    /// Second half of the regions.
    pub fn attribute_stream(&self) -> Tensor {
        self.regions.slice_rows(self.regions.rows() / 2, self.regions.rows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZslDataset {
    pub semantics: ClassSemanticMatrix,
    pub instances: Vec<Instance>,
}

impl ZslDataset {
    /// Checks split membership and region shapes.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.instances.first() else {
            return Err(Error::domain("dataset has no instances"));
        };
        let shape = first.regions.shape();
        if shape[0] < 2 || shape[0] % 2 != 0 {
            return Err(Error::domain(format!("instances need an even number of regions, got {}", shape[0])));
        }
        for inst in &self.instances {
            if inst.regions.shape() != shape {
                return Err(Error::shape("instance regions", shape, inst.regions.shape()));
            }
            if inst.label >= self.semantics.class_count() {
                return Err(Error::domain(format!("instance {} has unknown class {}", inst.id, inst.label)));
            }
            let unseen = self.semantics.is_unseen(inst.label);
            if unseen != (inst.split == Split::TestUnseen) {
                return Err(Error::domain(format!(
                    "instance {} of class {} is in split {}",
                    inst.id, inst.label, inst.split
                )));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(move |i| i.split == split)
    }

    pub fn regions_per_instance(&self) -> usize {
        self.instances.first().map_or(0, |i| i.regions.rows())
    }

    pub fn feature_width(&self) -> usize {
        self.instances.first().map_or(0, |i| i.regions.cols())
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Binary class-by-attribute activity with the configured frequency profile.
fn activity<R: Rng>(config: &SynthConfig, rng: &mut R) -> Vec<Vec<bool>> {
    let c = config.class_count;
    let mut active = vec![vec![false; config.attribute_count]; c];
    let mut previous: Vec<usize> = Vec::new();
    for a in 0..config.attribute_count {
        let k = config.target_frequency(a);
        let chosen: Vec<usize> = if a % 2 == 1 && config.cooccurrence_strength > 0.0 {
            let mut partner = previous.clone();
            partner.shuffle(rng);
            let tied = ((config.cooccurrence_strength * k as f64).round() as usize).min(partner.len());
            let mut chosen: Vec<usize> = partner[..tied].to_vec();
            let mut rest: Vec<usize> = (0..c).filter(|x| !chosen.contains(x)).collect();
            rest.shuffle(rng);
            chosen.extend(rest.into_iter().take(k - tied));
            chosen
        } else {
            sample(rng, c, k).into_vec()
        };
        for &cls in &chosen {
            active[cls][a] = true;
        }
        previous = chosen;
    }
    active
}

/// Builds a dataset; a pure function of `config`.
pub fn generate(config: &SynthConfig) -> Result<ZslDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (c, a, h) = (config.class_count, config.attribute_count, config.feature_width);
    let half = config.regions_per_instance / 2;

    let active = activity(config, &mut rng);
    let mut z = Tensor::from_fn(c, a, |i, j| {
        let v = if active[i][j] {
            rng.random_range(0.6..1.0)
        } else {
            rng.random_range(0.0..0.25)
        };
        if config.binary_attributes {
            f64::from(v >= 0.5)
        } else {
            v
        }
    });
    if config.normalize_attributes && !config.binary_attributes {
        for i in 0..c {
            let norm = z.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..a {
                z.set(i, j, z.get(i, j) / norm);
            }
        }
    }

    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(&mut rng);
    let mut seen_flags = vec![false; c];
    for &cls in &order[..config.seen_count] {
        seen_flags[cls] = true;
    }
    let semantics = ClassSemanticMatrix::new(z, &seen_flags)?;

    // attribute -> region within each stream; each stream has its own maps
    let region_of: Vec<usize> = (0..a).map(|j| j % half).collect();
    let per_region: Vec<f64> = (0..half)
        .map(|r| (region_of.iter().filter(|&&x| x == r).count().max(1) as f64).sqrt())
        .collect();
    let maps: [Tensor; 2] = [
        Tensor::from_fn(a, h, |_, _| normal(&mut rng)),
        Tensor::from_fn(a, h, |_, _| normal(&mut rng)),
    ];
    let prototypes: Vec<Tensor> = (0..c)
        .map(|cls| {
            let zc = semantics.z().row_slice(cls);
            Tensor::from_fn(2 * half, h, |r, k| {
                let (stream, region) = (r / half, r % half);
                let s: f64 = (0..a)
                    .filter(|&j| region_of[j] == region)
                    .map(|j| zc[j] * maps[stream].get(j, k))
                    .sum();
                s / per_region[region]
            })
        })
        .collect();

    let noise = config.variability_noise;
    let test_per_seen = (config.seen_test_fraction * config.instances_per_class as f64).round() as usize;
    let mut instances = Vec::with_capacity(c * config.instances_per_class);
    for (cls, proto) in prototypes.iter().enumerate() {
        for k in 0..config.instances_per_class {
            let mut regions = if noise > 0.0 {
                let scale = noise / (h as f64).sqrt();
                let transform = Tensor::from_fn(h, h, |i, j| f64::from(i == j) + scale * normal(&mut rng));
                let mut x = proto.matmul(&transform)?;
                for v in x.data_mut() {
                    *v += noise * normal(&mut rng);
                }
                x
            } else {
                proto.clone()
            };

            let mut corruption = Corruption::Clean;
            if config.conflict_rate > 0.0 && rng.random_bool(config.conflict_rate) {
                let (stream, start) = if rng.random_bool(0.5) {
                    (Corruption::Visual, 0)
                } else {
                    (Corruption::Attribute, half)
                };
                let slice = &mut regions.data_mut()[start * h..(start + half) * h];
                let rms = (slice.iter().map(|v| v * v).sum::<f64>() / slice.len() as f64).sqrt();
                for v in slice.iter_mut() {
                    *v = rms * normal(&mut rng);
                }
                corruption = stream;
            }

            for v in regions.data_mut() {
                *v = (config.feature_scale * *v) as f32 as f64;
            }
            let split = if semantics.is_unseen(cls) {
                Split::TestUnseen
            } else if k < test_per_seen {
                Split::TestSeen
            } else {
                Split::TrainSeen
            };
            instances.push(Instance {
                id: instances.len(),
                regions,
                label: cls,
                split,
                corruption,
            });
        }
    }
    let ds = ZslDataset { semantics, instances };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            class_count: 8,
            seen_count: 6,
            attribute_count: 12,
            regions_per_instance: 4,
            feature_width: 10,
            instances_per_class: 6,
            seed: 3,
            ..SynthConfig::default()
        }
    }

    /// Unnormalized attribute values, so that active entries sit above 0.5.
    pub(crate) fn raw() -> SynthConfig {
        SynthConfig {
            normalize_attributes: false,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn normalized_rows_have_unit_length_and_keep_their_order() {
        let a = generate(&SynthConfig::default()).unwrap();
        let b = generate(&raw()).unwrap();
        for c in 0..20 {
            let row = a.semantics.z().row_slice(c);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            let other = b.semantics.z().row_slice(c);
            for j in 0..32 {
                for k in 0..32 {
                    assert_eq!(row[j] < row[k], other[j] < other[k]);
                }
            }
        }
    }

    #[test]
    fn feature_scale_multiplies_every_feature() {
        let cfg = SynthConfig {
            feature_scale: 4.0,
            ..small()
        };
        let a = generate(&small()).unwrap();
        let b = generate(&cfg).unwrap();
        for (x, y) in a.instances.iter().zip(&b.instances) {
            for (u, v) in x.regions.data().iter().zip(y.regions.data()) {
                // both sides are rounded to single precision
                assert!((4.0 * u - v).abs() <= 1e-6 * v.abs().max(1.0));
            }
        }
        assert!(generate(&SynthConfig { feature_scale: 0.0, ..small() }).is_err());
    }

    #[test]
    fn same_seed_is_identical_and_seed_matters() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 4, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs() {
        let e = generate(&SynthConfig {
            seen_count: 8,
            ..small()
        })
        .unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "seen_count"), "{e}");
        assert!(generate(&SynthConfig {
            regions_per_instance: 3,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            conflict_rate: 1.5,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            feature_width: 0,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn splits_are_disjoint_and_consistent() {
        let ds = generate(&SynthConfig::default()).unwrap();
        assert_eq!(ds.instances.len(), 1000);
        assert_eq!(ds.semantics.seen().len(), 15);
        let train = ds.split(Split::TrainSeen).count();
        let test_seen = ds.split(Split::TestSeen).count();
        let test_unseen = ds.split(Split::TestUnseen).count();
        assert_eq!((train, test_seen, test_unseen), (600, 150, 250));
        for inst in ds.split(Split::TrainSeen) {
            assert!(!ds.semantics.is_unseen(inst.label));
        }
        for inst in ds.split(Split::TestUnseen) {
            assert!(ds.semantics.is_unseen(inst.label));
        }
        let ids: std::collections::HashSet<usize> = ds.instances.iter().map(|i| i.id).collect();
        assert_eq!(ids.len(), ds.instances.len());
        assert_eq!(ds.regions_per_instance(), 8);
        assert_eq!(ds.feature_width(), 64);
    }

    #[test]
    fn features_are_single_precision_values() {
        let ds = generate(&small()).unwrap();
        for inst in &ds.instances {
            assert!(inst.regions.data().iter().all(|&v| v as f32 as f64 == v));
        }
    }

    #[test]
    fn frequencies_follow_the_target_exactly() {
        let cfg = raw();
        let ds = generate(&cfg).unwrap();
        for a in 0..cfg.attribute_count {
            let count = (0..cfg.class_count).filter(|&c| ds.semantics.z().get(c, a) >= 0.5).count();
            assert_eq!(count, cfg.target_frequency(a), "attribute {a}");
        }
    }

    #[test]
    fn no_skew_gives_uniform_frequencies() {
        let cfg = SynthConfig {
            imbalance_exponent: 0.0,
            ..raw()
        };
        let ds = generate(&cfg).unwrap();
        // binomial(20, 0.5): mean 10, sd √5
        let sd = 5f64.sqrt();
        for a in 0..cfg.attribute_count {
            let count = (0..cfg.class_count).filter(|&c| ds.semantics.z().get(c, a) >= 0.5).count() as f64;
            assert!((count - 10.0).abs() <= 3.0 * sd);
        }
    }

    #[test]
    fn cooccurrence_ties_attribute_pairs() {
        let base = SynthConfig {
            class_count: 40,
            imbalance_exponent: 0.0,
            ..raw()
        };
        let overlap = |cfg: &SynthConfig| {
            let ds = generate(cfg).unwrap();
            let z = ds.semantics.z();
            let mut shared = 0;
            for j in 0..cfg.attribute_count / 2 {
                shared += (0..cfg.class_count).filter(|&c| z.get(c, 2 * j) >= 0.5 && z.get(c, 2 * j + 1) >= 0.5).count();
            }
            shared
        };
        let tied = overlap(&SynthConfig {
            cooccurrence_strength: 1.0,
            ..base.clone()
        });
        let free = overlap(&SynthConfig {
            cooccurrence_strength: 0.0,
            ..base
        });
        // full coupling copies each even attribute's 20 classes onto its partner
        assert_eq!(tied, 16 * 20);
        assert!(free < tied);
    }

    #[test]
    fn binary_attributes_are_zero_or_one() {
        let ds = generate(&SynthConfig {
            binary_attributes: true,
            ..small()
        })
        .unwrap();
        assert!(ds.semantics.z().data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn noiseless_instances_repeat_their_class_prototype() {
        let ds = generate(&SynthConfig {
            variability_noise: 0.0,
            ..small()
        })
        .unwrap();
        for pair in ds.instances.windows(2) {
            if pair[0].label == pair[1].label {
                assert_eq!(pair[0].regions, pair[1].regions);
            }
        }
    }

    #[test]
    fn corruption_marks_follow_the_rate() {
        let ds = generate(&SynthConfig {
            conflict_rate: 0.3,
            ..SynthConfig::default()
        })
        .unwrap();
        let corrupted = ds.instances.iter().filter(|i| i.corruption != Corruption::Clean).count() as f64;
        let n = ds.instances.len() as f64;
        let sd = (n * 0.3 * 0.7).sqrt();
        assert!((corrupted - 0.3 * n).abs() < 4.0 * sd, "{corrupted}");
        let clean = generate(&SynthConfig::default()).unwrap();
        assert!(clean.instances.iter().all(|i| i.corruption == Corruption::Clean));
    }

    #[test]
    fn stream_halves() {
        let ds = generate(&small()).unwrap();
        let inst = &ds.instances[0];
        let v = inst.visual_stream();
        let a = inst.attribute_stream();
        assert_eq!(v.shape(), [2, 10]);
        assert_eq!(v.row_slice(1), inst.regions.row_slice(1));
        assert_eq!(a.row_slice(0), inst.regions.row_slice(2));
    }

    #[test]
    fn names_round_trip() {
        for s in [Split::TrainSeen, Split::TestSeen, Split::TestUnseen] {
            assert_eq!(s.to_string().parse::<Split>().unwrap(), s);
        }
        for c in [Corruption::Clean, Corruption::Visual, Corruption::Attribute] {
            assert_eq!(c.to_string().parse::<Corruption>().unwrap(), c);
        }
    }
}
