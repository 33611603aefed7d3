//! Checkpoint serialisation: a JSON header describing named tensors plus a
//! flat little-endian `f64` array with every parameter and optimizer moment,
//! row-major. Replay contents and random-stream state are not stored;
//! loaded agents are meant for evaluation or fresh-stream continuation.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::mlp::{Dense, Mlp, MlpGrads, OutputActivation};
use super::replay::ReplayBuffer;
use super::{Td3Agent, Td3Config};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RSLPCKP1";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorDesc {
    name: String,
    shape: Vec<usize>,
    /// Offset and length in f64 elements within the data block.
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    obs_dim: usize,
    action_dim: usize,
    config: Td3Config,
    total_steps: u64,
    critic_updates: u64,
    adam_t: [u64; 3],
    meta: serde_json::Value,
    tensors: Vec<TensorDesc>,
}

struct TensorWriter {
    data: Vec<f64>,
    descs: Vec<TensorDesc>,
}

impl TensorWriter {
    fn new() -> Self {
        TensorWriter {
            data: Vec::new(),
            descs: Vec::new(),
        }
    }

    fn put(&mut self, name: String, shape: Vec<usize>, values: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.descs.push(TensorDesc {
            name,
            shape,
            offset: self.data.len(),
            len: values.len(),
        });
        self.data.extend_from_slice(values);
    }

    fn put_net(&mut self, prefix: &str, net: &Mlp) {
        for (i, layer) in net.layers.iter().enumerate() {
            self.put(format!("{prefix}.{i}.w"), vec![layer.out_dim, layer.in_dim], &layer.w);
            self.put(format!("{prefix}.{i}.b"), vec![layer.out_dim], &layer.b);
        }
    }

    fn put_grads(&mut self, prefix: &str, shaped_like: &Mlp, grads: &MlpGrads) {
        for (i, (layer, g)) in shaped_like.layers.iter().zip(&grads.layers).enumerate() {
            self.put(format!("{prefix}.{i}.w"), vec![layer.out_dim, layer.in_dim], &g.dw);
            self.put(format!("{prefix}.{i}.b"), vec![layer.out_dim], &g.db);
        }
    }
}

/// Write an agent checkpoint. `meta` is an arbitrary JSON blob stored
/// verbatim (run regime, scenario space, and so on).
pub fn save(path: &Path, agent: &Td3Agent, meta: serde_json::Value) -> Result<()> {
    let mut w = TensorWriter::new();
    w.put_net("actor", &agent.actor);
    w.put_net("actor_target", &agent.actor_target);
    w.put_net("critic1", &agent.critic1);
    w.put_net("critic2", &agent.critic2);
    w.put_net("critic1_target", &agent.critic1_target);
    w.put_net("critic2_target", &agent.critic2_target);
    for (name, net, opt) in [
        ("opt_actor", &agent.actor, &agent.opt_actor),
        ("opt_critic1", &agent.critic1, &agent.opt_critic1),
        ("opt_critic2", &agent.critic2, &agent.opt_critic2),
    ] {
        let (m, v) = opt.moments();
        w.put_grads(&format!("{name}.m"), net, m);
        w.put_grads(&format!("{name}.v"), net, v);
    }

    let header = Header {
        format: "td3-checkpoint".into(),
        version: VERSION,
        obs_dim: agent.obs_dim,
        action_dim: agent.action_dim,
        config: agent.config,
        total_steps: agent.total_steps,
        critic_updates: agent.critic_updates,
        adam_t: [agent.opt_actor.t, agent.opt_critic1.t, agent.opt_critic2.t],
        meta,
        tensors: w.descs,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    out.write_all(MAGIC).map_err(io_err)?;
    out.write_u32::<LittleEndian>(header_bytes.len() as u32).map_err(io_err)?;
    out.write_all(&header_bytes).map_err(io_err)?;
    for v in &w.data {
        out.write_f64::<LittleEndian>(*v).map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

struct TensorReader {
    data: Vec<f64>,
    descs: Vec<TensorDesc>,
}

impl TensorReader {
    fn get(&self, name: &str) -> Result<(&[usize], &[f64])> {
        let desc = self
            .descs
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        let end = desc.offset + desc.len;
        if end > self.data.len() {
            return Err(Error::Checkpoint(format!("tensor {name} overruns data block")));
        }
        Ok((&desc.shape, &self.data[desc.offset..end]))
    }

    fn has(&self, name: &str) -> bool {
        self.descs.iter().any(|d| d.name == name)
    }

    fn read_net(&self, prefix: &str, output: OutputActivation) -> Result<Mlp> {
        let mut layers = Vec::new();
        let mut i = 0;
        while self.has(&format!("{prefix}.{i}.w")) {
            let (w_shape, w) = self.get(&format!("{prefix}.{i}.w"))?;
            let (b_shape, b) = self.get(&format!("{prefix}.{i}.b"))?;
            if w_shape.len() != 2 || b_shape.len() != 1 || b_shape[0] != w_shape[0] {
                return Err(Error::Checkpoint(format!("tensor {prefix}.{i} has inconsistent shape")));
            }
            layers.push(Dense {
                in_dim: w_shape[1],
                out_dim: w_shape[0],
                w: w.to_vec(),
                b: b.to_vec(),
            });
            i += 1;
        }
        if layers.is_empty() {
            return Err(Error::Checkpoint(format!("network {prefix} absent from checkpoint")));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Checkpoint(format!("network {prefix} has mismatched layer shapes")));
            }
        }
        Ok(Mlp { layers, output })
    }

    fn read_grads(&self, prefix: &str, shaped_like: &Mlp) -> Result<MlpGrads> {
        let mut grads = MlpGrads::zeros_like(shaped_like);
        for (i, g) in grads.layers.iter_mut().enumerate() {
            let (_, w) = self.get(&format!("{prefix}.{i}.w"))?;
            let (_, b) = self.get(&format!("{prefix}.{i}.b"))?;
            if w.len() != g.dw.len() || b.len() != g.db.len() {
                return Err(Error::Checkpoint(format!("moment {prefix}.{i} has wrong size")));
            }
            g.dw.copy_from_slice(w);
            g.db.copy_from_slice(b);
        }
        Ok(grads)
    }
}

/// Load an agent. The replay buffer starts empty and the random stream is
/// seeded fresh from `rng_seed`.
pub fn load(path: &Path, rng_seed: u64) -> Result<(Td3Agent, serde_json::Value)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let header_len = input.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    input.read_exact(&mut header_bytes).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", header.version)));
    }
    let mut raw = Vec::new();
    input.read_to_end(&mut raw).map_err(io_err)?;
    if raw.len() % 8 != 0 {
        return Err(Error::Checkpoint("data block is not a whole number of f64s".into()));
    }
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let reader = TensorReader {
        data,
        descs: header.tensors,
    };

    let actor = reader.read_net("actor", OutputActivation::TanhUnit)?;
    let actor_target = reader.read_net("actor_target", OutputActivation::TanhUnit)?;
    let critic1 = reader.read_net("critic1", OutputActivation::Linear)?;
    let critic2 = reader.read_net("critic2", OutputActivation::Linear)?;
    let critic1_target = reader.read_net("critic1_target", OutputActivation::Linear)?;
    let critic2_target = reader.read_net("critic2_target", OutputActivation::Linear)?;
    if actor.input_dim() != header.obs_dim || actor.output_dim() != header.action_dim {
        return Err(Error::Checkpoint(format!(
            "actor shape {}x{} does not match header dims {}x{}",
            actor.input_dim(),
            actor.output_dim(),
            header.obs_dim,
            header.action_dim
        )));
    }
    if critic1.input_dim() != header.obs_dim + header.action_dim {
        return Err(Error::Checkpoint("critic input does not match obs + action dims".into()));
    }

    let mut opt_actor = AdamState::new(&actor);
    let mut opt_critic1 = AdamState::new(&critic1);
    let mut opt_critic2 = AdamState::new(&critic2);
    for (prefix, net, opt, t) in [
        ("opt_actor", &actor, &mut opt_actor, header.adam_t[0]),
        ("opt_critic1", &critic1, &mut opt_critic1, header.adam_t[1]),
        ("opt_critic2", &critic2, &mut opt_critic2, header.adam_t[2]),
    ] {
        let m = reader.read_grads(&format!("{prefix}.m"), net)?;
        let v = reader.read_grads(&format!("{prefix}.v"), net)?;
        let (om, ov) = opt.moments_mut();
        *om = m;
        *ov = v;
        opt.t = t;
    }

    let agent = Td3Agent {
        replay: ReplayBuffer::new(header.config.replay_capacity),
        actor,
        actor_target,
        critic1,
        critic2,
        critic1_target,
        critic2_target,
        opt_actor,
        opt_critic1,
        opt_critic2,
        config: header.config,
        obs_dim: header.obs_dim,
        action_dim: header.action_dim,
        total_steps: header.total_steps,
        critic_updates: header.critic_updates,
        rng: ChaCha8Rng::seed_from_u64(rng_seed),
    };
    Ok((agent, header.meta))
}
