//! Shard checkpoints: a JSON manifest next to raw little-endian `f64`
//! files, one per parameter vector and Adam moment.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vtgan_core::data::TableSchema;
use vtgan_core::encode::TableEncoder;
use vtgan_core::nn::{AdamState, BatchNormStats, Net, NetSpec};
use vtgan_core::protocol::{Federation, Shard, Transport};

use crate::error::{Error, Result};
use crate::io;

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetEntry {
    pub name: String,
    pub spec: NetSpec,
    pub generation: u64,
    pub bn: Vec<BatchNormStats>,
    pub adam_step: u64,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub round: u64,
    pub nets: Vec<NetEntry>,
    pub schemas: Vec<TableSchema>,
    pub encoders: Vec<TableEncoder>,
}

/// A loaded checkpoint: manifest plus the shard states it names.
pub struct Checkpoint {
    pub manifest: Manifest,
    shards: Vec<Shard>,
}

fn shard_names<T: Transport>(fed: &Federation<T>) -> Vec<String> {
    let mut names: Vec<String> = ["server.gen_top", "server.cv_filter", "server.disc_top"].map(String::from).into();
    for c in &fed.clients {
        names.push(format!("client{}.gen_bottom", c.id));
        names.push(format!("client{}.disc_bottom", c.id));
    }
    names
}

fn shards<T: Transport>(fed: &Federation<T>) -> Vec<&Shard> {
    let mut out = vec![&fed.server.gen_top, &fed.server.cv_filter, &fed.server.disc_top];
    for c in &fed.clients {
        out.push(&c.gen);
        out.push(&c.disc);
    }
    out
}

fn shards_mut<T: Transport>(fed: &mut Federation<T>) -> Vec<&mut Shard> {
    let mut out = vec![&mut fed.server.gen_top, &mut fed.server.cv_filter, &mut fed.server.disc_top];
    for c in &mut fed.clients {
        out.push(&mut c.gen);
        out.push(&mut c.disc);
    }
    out
}

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f64s(path: &Path, len: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != len * 8 {
        return Err(Error::Checkpoint(format!(
            "{}: {} bytes, expected {}",
            path.display(),
            bytes.len(),
            len * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn save<T: Transport>(dir: &Path, fed: &Federation<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut nets = Vec::new();
    for (name, shard) in shard_names(fed).into_iter().zip(shards(fed)) {
        let net = &shard.net;
        write_f64s(&dir.join(format!("{name}.params.f64")), &net.params().data)?;
        write_f64s(&dir.join(format!("{name}.adam_m.f64")), &shard.adam.m)?;
        write_f64s(&dir.join(format!("{name}.adam_v.f64")), &shard.adam.v)?;
        nets.push(NetEntry {
            name,
            spec: net.spec().clone(),
            generation: net.generation(),
            bn: net.bn_stats().to_vec(),
            adam_step: shard.adam.step,
            len: net.num_params(),
        });
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        round: fed.round(),
        nets,
        schemas: fed.clients.iter().map(|c| c.data.raw.schema.clone()).collect(),
        encoders: fed.clients.iter().map(|c| c.data.encoder.clone()).collect(),
    };
    io::write_json(&dir.join(MANIFEST), &manifest)
}

impl Checkpoint {
    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: Manifest = io::read_json(&dir.join(MANIFEST))?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} (this build reads {CHECKPOINT_VERSION})",
                manifest.version
            )));
        }
        if manifest.schemas.len() != manifest.encoders.len() {
            return Err(Error::Checkpoint("schema and encoder counts differ".into()));
        }
        let mut shards = Vec::new();
        for e in &manifest.nets {
            let data = read_f64s(&dir.join(format!("{}.params.f64", e.name)), e.len)?;
            let m = read_f64s(&dir.join(format!("{}.adam_m.f64", e.name)), e.len)?;
            let v = read_f64s(&dir.join(format!("{}.adam_v.f64", e.name)), e.len)?;
            let net = Net::from_parts(e.spec.clone(), data, e.bn.clone(), e.generation)
                .map_err(|err| Error::Checkpoint(format!("{}: {err}", e.name)))?;
            shards.push(Shard {
                net,
                adam: AdamState { m, v, step: e.adam_step },
            });
        }
        Ok(Self { manifest, shards })
    }

    /// Replaces every shard of `fed`. The federation must have been built
    /// for the same schemas, encoders and layout.
    pub fn apply<T: Transport>(self, fed: &mut Federation<T>) -> Result<()> {
        let names = shard_names(fed);
        let found: Vec<&str> = self.manifest.nets.iter().map(|e| e.name.as_str()).collect();
        if names != found {
            return Err(Error::Checkpoint(format!("shards {found:?}, federation expects {names:?}")));
        }
        for (i, c) in fed.clients.iter().enumerate() {
            if c.data.raw.schema != self.manifest.schemas[i] {
                return Err(Error::Checkpoint(format!("client{i}: schema differs from the checkpoint")));
            }
            if c.data.encoder != self.manifest.encoders[i] {
                return Err(Error::Checkpoint(format!("client{i}: encoder differs from the checkpoint")));
            }
        }
        for ((name, slot), shard) in names.iter().zip(shards_mut(fed)).zip(self.shards) {
            if slot.net.spec() != shard.net.spec() {
                return Err(Error::Checkpoint(format!("{name}: network shape differs from the plan")));
            }
            *slot = shard;
        }
        Ok(())
    }
}
