//! Parameters of the full model, its batched forward pass and the binary
//! parameter file.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::digs::{bank_attend, BankReadout, BoundBank, MetaPatternBank};
use crate::error::{Error, Result};
use crate::grounding::{
    evidence_head, ground_batch, AttentionLayer, BoundGrounding, Direction, GroundingParams, GroundingShape,
};
use crate::numgraph::{Graph, Tensor, Var};
use crate::synthzsl::Instance;
use crate::trainer::TrainConfig;

pub const PARAMS_MAGIC: &[u8; 8] = b"CRSTPRM1";

#[derive(Debug, Clone, PartialEq)]
pub struct CrestModel {
    /// Fixed random embeddings of the attributes, `|A| × h`.
    pub attribute_embeddings: Tensor,
    /// Attribute embeddings query the visual stream.
    pub vgt: GroundingParams,
    /// The attribute-side stream queries the attribute embeddings.
    pub agt: GroundingParams,
    pub bank: MetaPatternBank,
}

impl CrestModel {
    /// `attribute_count` attributes, region features of width `feature_width`.
    pub fn init<R: Rng>(rng: &mut R, config: &TrainConfig, attribute_count: usize, feature_width: usize) -> Result<Self> {
        let h = feature_width;
        let attribute_embeddings =
            Tensor::from_fn(attribute_count, h, |_, _| rng.sample::<f64, _>(StandardNormal));
        let shape = GroundingShape {
            query_width: h,
            context_width: h,
            key_width: config.key_width,
            ffn_hidden: config.ffn_hidden,
            output_width: attribute_count,
            layers: config.layers,
        };
        let vgt = GroundingParams::init(rng, shape)?;
        let agt = GroundingParams::init(rng, shape)?;
        let bank = MetaPatternBank::init(rng, attribute_count, config.bank_size, config.pattern_width, config.margin)?;
        Ok(CrestModel {
            attribute_embeddings,
            vgt,
            agt,
            bank,
        })
    }

    pub fn attribute_count(&self) -> usize {
        self.attribute_embeddings.rows()
    }

    pub fn feature_width(&self) -> usize {
        self.attribute_embeddings.cols()
    }

    /// Trainable tensors in a fixed order.
    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut out = self.vgt.tensors();
        out.extend(self.agt.tensors());
        out.extend(self.bank.tensors());
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.vgt.tensors_mut();
        out.extend(self.agt.tensors_mut());
        out.extend(self.bank.tensors_mut());
        out
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundModel {
        BoundModel {
            attribute_embeddings: g.constant(self.attribute_embeddings.clone()),
            vgt: self.vgt.bind(g, trainable),
            agt: self.agt.bind(g, trainable),
            bank: self.bank.bind(g, trainable),
        }
    }

    /// Like [`CrestModel::bind`], but the trainable tensors are the existing
    /// nodes `vars`, given in the order of [`CrestModel::trainable`].
    pub fn bind_to(&self, g: &mut Graph, vars: &[Var]) -> Result<BoundModel> {
        let mut bound = self.bind(g, false);
        let slots = bound.slots();
        if slots.len() != vars.len() {
            return Err(Error::domain(format!("model has {} trainable tensors, got {}", slots.len(), vars.len())));
        }
        for (slot, &v) in slots.into_iter().zip(vars) {
            if g.shape(*slot) != g.shape(v) {
                return Err(Error::shape("bind_to", g.shape(*slot), g.shape(v)));
            }
            *slot = v;
        }
        Ok(bound)
    }

    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("attribute_embeddings".to_string(), &self.attribute_embeddings)];
        for (prefix, p) in [("vgt", &self.vgt), ("agt", &self.agt)] {
            for (i, l) in p.layers.iter().enumerate() {
                out.push((format!("{prefix}.{i}.w_q"), &l.w_q));
                out.push((format!("{prefix}.{i}.w_k"), &l.w_k));
                out.push((format!("{prefix}.{i}.w_v"), &l.w_v));
            }
            out.push((format!("{prefix}.w1"), &p.w1));
            out.push((format!("{prefix}.b1"), &p.b1));
            out.push((format!("{prefix}.w2"), &p.w2));
            out.push((format!("{prefix}.b2"), &p.b2));
        }
        out.push(("bank.patterns".to_string(), &self.bank.patterns));
        out.push(("bank.w_q".to_string(), &self.bank.w_q));
        out.push(("bank.b_q".to_string(), &self.bank.b_q));
        out.push(("bank.w_r".to_string(), &self.bank.w_r));
        out
    }
}

/// [`CrestModel`] placed on a graph.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub attribute_embeddings: Var,
    pub vgt: BoundGrounding,
    pub agt: BoundGrounding,
    pub bank: BoundBank,
}

impl BoundModel {
    /// Graph nodes in the order of [`CrestModel::trainable`].
    pub fn trainable_vars(&self) -> Vec<Var> {
        let mut out = self.vgt.vars();
        out.extend(self.agt.vars());
        out.extend(self.bank.vars());
        out
    }

    fn slots(&mut self) -> Vec<&mut Var> {
        let mut out = Vec::new();
        for side in [&mut self.vgt, &mut self.agt] {
            for l in side.layers.iter_mut() {
                out.extend([&mut l.w_q, &mut l.w_k, &mut l.w_v]);
            }
            out.extend([&mut side.w1, &mut side.b1, &mut side.w2, &mut side.b2]);
        }
        let bank = &mut self.bank;
        out.extend([&mut bank.patterns, &mut bank.w_q, &mut bank.b_q, &mut bank.w_r]);
        out
    }
}

/// Graph nodes produced for one batch.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Enriched attribute-side embedding, `batch × |A|`.
    pub f_attribute: Var,
    /// Visual-side embedding, `batch × |A|`.
    pub f_visual: Var,
    pub alpha_attribute: Var,
    pub alpha_visual: Var,
    pub readout: BankReadout,
}

/// Runs both grounding directions, the bank and the evidence heads.
pub fn forward(
    g: &mut Graph,
    model: &BoundModel,
    instances: &[&Instance],
    semantics: Var,
    config: &TrainConfig,
) -> Result<Forward> {
    let mut visual = Vec::with_capacity(instances.len());
    let mut attribute = Vec::with_capacity(instances.len());
    for inst in instances {
        visual.push(g.constant(inst.visual_stream()));
        attribute.push(g.constant(inst.attribute_stream()));
    }
    let f_visual = ground_batch(g, &model.vgt, &visual, model.attribute_embeddings, Direction::Visual, config.pooling)?;
    let f_raw = ground_batch(
        g,
        &model.agt,
        &attribute,
        model.attribute_embeddings,
        Direction::Attribute,
        config.pooling,
    )?;
    let readout = bank_attend(g, f_raw, &model.bank)?;
    let alpha_attribute = evidence_head(g, readout.enriched, semantics, config.evidence_activation)?;
    let alpha_visual = evidence_head(g, f_visual, semantics, config.evidence_activation)?;
    Ok(Forward {
        f_attribute: readout.enriched,
        f_visual,
        alpha_attribute,
        alpha_visual,
        readout,
    })
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::domain(format!("{what} too large for the parameter file")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Magic, `u64` LE length plus the config text, `u32` tensor count, then per
/// tensor a `u32`-length-prefixed name, `u32` rows and cols and `f64` LE values.
pub fn save_params(path: &Path, model: &CrestModel, config: &TrainConfig) -> Result<()> {
    let mut out = PARAMS_MAGIC.to_vec();
    let text = config.to_config_string();
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let named = model.named();
    put_u32(&mut out, named.len(), "tensor count")?;
    for (name, t) in named {
        put_u32(&mut out, name.len(), "tensor name")?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rows(), "tensor rows")?;
        put_u32(&mut out, t.cols(), "tensor cols")?;
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::format(self.path, self.at as u64, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Reads a file written by [`save_params`].
pub fn load_params(path: &Path) -> Result<(CrestModel, TrainConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        at: 0,
    };
    if r.take(8, "magic")? != PARAMS_MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected `CRSTPRM1`"));
    }
    let len = r.u64("config length")?;
    let len = usize::try_from(len).map_err(|_| Error::format(path, 8, "config length overflows"))?;
    let start = r.at;
    let text = std::str::from_utf8(r.take(len, "config")?)
        .map_err(|_| Error::format(path, start as u64, "config block is not UTF-8"))?;
    let config = crate::config::parse_train_config(text).map_err(|e| Error::format(path, start as u64, e.to_string()))?;

    let count = r.u32("tensor count")?;
    let mut tensors = std::collections::HashMap::new();
    for _ in 0..count {
        let at = r.at as u64;
        let n = r.u32("tensor name length")?;
        let name = std::str::from_utf8(r.take(n, "tensor name")?)
            .map_err(|_| Error::format(path, at, "tensor name is not UTF-8"))?
            .to_string();
        let rows = r.u32("tensor rows")?;
        let cols = r.u32("tensor cols")?;
        let size = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| Error::format(path, at, format!("tensor `{name}` extents overflow")))?;
        let data = r
            .take(size, &format!("tensor `{name}`"))?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.insert(name, Tensor::new(rows, cols, data)?);
    }
    if r.at != bytes.len() {
        return Err(Error::format(path, r.at as u64, "trailing bytes after the last tensor"));
    }
    let mut get = |name: &str| {
        tensors
            .remove(name)
            .ok_or_else(|| Error::format(path, 0, format!("missing tensor `{name}`")))
    };
    let mut grounding = |prefix: &str| -> Result<GroundingParams> {
        let mut layers = Vec::with_capacity(config.layers);
        for i in 0..config.layers {
            layers.push(AttentionLayer {
                w_q: get(&format!("{prefix}.{i}.w_q"))?,
                w_k: get(&format!("{prefix}.{i}.w_k"))?,
                w_v: get(&format!("{prefix}.{i}.w_v"))?,
            });
        }
        Ok(GroundingParams {
            layers,
            w1: get(&format!("{prefix}.w1"))?,
            b1: get(&format!("{prefix}.b1"))?,
            w2: get(&format!("{prefix}.w2"))?,
            b2: get(&format!("{prefix}.b2"))?,
        })
    };
    let vgt = grounding("vgt")?;
    let agt = grounding("agt")?;
    let model = CrestModel {
        attribute_embeddings: get("attribute_embeddings")?,
        vgt,
        agt,
        bank: MetaPatternBank {
            patterns: get("bank.patterns")?,
            w_q: get("bank.w_q")?,
            b_q: get("bank.b_q")?,
            w_r: get("bank.w_r")?,
            margin: config.margin,
        },
    };
    model.bank.validate().map_err(|e| Error::format(path, 0, e.to_string()))?;
    check_shapes(&model).map_err(|e| Error::format(path, 0, e.to_string()))?;
    Ok((model, config))
}

fn check_shapes(m: &CrestModel) -> Result<()> {
    let [a, h] = m.attribute_embeddings.shape();
    for p in [&m.vgt, &m.agt] {
        for l in &p.layers {
            if l.w_q.rows() != h || l.w_k.rows() != h || l.w_v.shape() != [h, h] || l.w_q.cols() != l.w_k.cols() {
                return Err(Error::shape("attention layer", l.w_q.shape(), l.w_k.shape()));
            }
        }
        let hid = p.w1.cols();
        if p.w1.rows() != h || p.b1.shape() != [1, hid] || p.w2.shape() != [hid, a] || p.b2.shape() != [1, a] {
            return Err(Error::shape("feed-forward", p.w1.shape(), p.w2.shape()));
        }
    }
    if m.bank.w_q.rows() != a {
        return Err(Error::shape("pattern bank", m.bank.w_q.shape(), [a, m.bank.pattern_width()]));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthzsl::{generate, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            key_width: 4,
            ffn_hidden: 6,
            bank_size: 5,
            pattern_width: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn params_round_trip() {
        let cfg = tiny_config();
        let model = CrestModel::init(&mut ChaCha8Rng::seed_from_u64(1), &cfg, 8, 5).unwrap();
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("params.bin");
        save_params(&p, &model, &cfg).unwrap();
        let (m2, c2) = load_params(&p).unwrap();
        assert_eq!(m2, model);
        assert_eq!(c2, cfg);
    }

    #[test]
    fn corrupted_params_are_format_errors() {
        let cfg = tiny_config();
        let model = CrestModel::init(&mut ChaCha8Rng::seed_from_u64(1), &cfg, 8, 5).unwrap();
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("params.bin");
        save_params(&p, &model, &cfg).unwrap();
        let good = fs::read(&p).unwrap();
        for bad in [
            good[..good.len() - 3].to_vec(),
            [b"XXXXXXXX".as_slice(), &good[8..]].concat(),
            [good.as_slice(), &[0u8]].concat(),
            good[..12].to_vec(),
        ] {
            fs::write(&p, &bad).unwrap();
            assert!(matches!(load_params(&p), Err(Error::Format { .. })));
        }
    }

    #[test]
    fn forward_shapes_and_alpha_floor() {
        let cfg = tiny_config();
        let ds = generate(&SynthConfig {
            class_count: 6,
            seen_count: 4,
            attribute_count: 8,
            regions_per_instance: 4,
            feature_width: 5,
            instances_per_class: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        let model = CrestModel::init(&mut ChaCha8Rng::seed_from_u64(2), &cfg, 8, 5).unwrap();
        let mut g = Graph::new();
        let b = model.bind(&mut g, false);
        let z = g.constant(ds.semantics.z().clone());
        let batch: Vec<&Instance> = ds.instances.iter().take(5).collect();
        let f = forward(&mut g, &b, &batch, z, &cfg).unwrap();
        assert_eq!(g.shape(f.f_attribute), [5, 8]);
        assert_eq!(g.shape(f.f_visual), [5, 8]);
        assert_eq!(g.shape(f.alpha_attribute), [5, 6]);
        assert!(g.value(f.alpha_visual).data().iter().all(|&a| a >= 1.0));
        assert_eq!(b.trainable_vars().len(), model.trainable().len());
    }
}
