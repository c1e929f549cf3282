use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor_file::{decode_tensor, encode_tensor};
use super::write_atomic;
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::networks::{Autoencoder, Bounds, Mlp, MlpArch, ModelBundle, ScoreNet, SpectralArch, SpectralSurrogate, TimeEmbedding};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentEntry {
    pub arch: toml::Table,
    pub files: Vec<FileEntry>,
}

/// Component name → architecture descriptor and hashed tensor files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub components: BTreeMap<String, ComponentEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        write!(s, "{b:02x}").expect("writing to a string");
    }
    s
}

fn ckpt_err(name: &str, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        name: name.to_string(),
        msg: msg.into(),
    }
}

impl CheckpointManifest {
    /// Reads `dir/manifest.toml`, or an empty manifest if there is none.
    pub fn load_or_default(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        Self::load(dir)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(&dir.as_ref().join(MANIFEST_FILE), text.as_bytes())
    }

    /// Writes `tensors` as `name.<i>.tnsr` under `dir` and records them.
    pub fn put<A: Serialize>(&mut self, dir: impl AsRef<Path>, name: &str, arch: &A, tensors: &[Tensor]) -> Result<()> {
        let dir = dir.as_ref();
        let arch = toml::Table::try_from(arch).map_err(|e| ckpt_err(name, e.to_string()))?;
        let mut files = Vec::with_capacity(tensors.len());
        for (i, t) in tensors.iter().enumerate() {
            let rel = format!("{name}.{i}.tnsr");
            let bytes = encode_tensor(t)?;
            write_atomic(&dir.join(&rel), &bytes)?;
            files.push(FileEntry {
                path: rel,
                sha256: sha256_hex(&bytes),
            });
        }
        self.components.insert(name.to_string(), ComponentEntry { arch, files });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.components.contains_key(name)
    }

    /// Reads a component back, checking every file exists and matches its
    /// recorded hash.
    pub fn get<A: for<'de> Deserialize<'de>>(&self, dir: impl AsRef<Path>, name: &str) -> Result<(A, Vec<Tensor>)> {
        let dir = dir.as_ref();
        let entry = self
            .components
            .get(name)
            .ok_or_else(|| ckpt_err(name, "not present in manifest"))?;
        let arch: A = entry.arch.clone().try_into().map_err(|e: toml::de::Error| ckpt_err(name, e.to_string()))?;
        let mut tensors = Vec::with_capacity(entry.files.len());
        for f in &entry.files {
            let path = dir.join(&f.path);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let hash = sha256_hex(&bytes);
            if hash != f.sha256 {
                return Err(ckpt_err(name, format!("{} hash mismatch: manifest {}, file {hash}", f.path, f.sha256)));
            }
            tensors.push(decode_tensor(&bytes)?);
        }
        Ok((arch, tensors))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AutoencoderArch {
    encoder: MlpArch,
    decoder: MlpArch,
    bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScoreArch {
    mlp: MlpArch,
    embedding: TimeEmbedding,
    t_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScheduleArch {
    substeps: usize,
}

/// A trained model component that can be stored under `dir`.
pub enum Component<'a> {
    Autoencoder(&'a Autoencoder),
    Score(&'a ScoreNet),
    Surrogate(&'a SpectralSurrogate),
    Schedule(&'a DiffusionSchedule),
}

/// Adds one component to the manifest in `dir`, creating it if needed.
pub fn save_component(dir: impl AsRef<Path>, component: Component<'_>) -> Result<()> {
    let dir = dir.as_ref();
    let mut m = CheckpointManifest::load_or_default(dir)?;
    match component {
        Component::Autoencoder(ae) => {
            let arch = AutoencoderArch {
                encoder: ae.encoder.arch.clone(),
                decoder: ae.decoder.arch.clone(),
                bounds: ae.bounds,
            };
            let params: Vec<Tensor> = ae.encoder.params.iter().chain(&ae.decoder.params).cloned().collect();
            m.put(dir, "autoencoder", &arch, &params)?;
        }
        Component::Score(s) => {
            let arch = ScoreArch {
                mlp: s.mlp.arch.clone(),
                embedding: s.embedding,
                t_max: s.t_max,
            };
            m.put(dir, "score", &arch, &s.mlp.params)?;
        }
        Component::Surrogate(s) => m.put(dir, "surrogate", &s.arch, &s.params)?,
        Component::Schedule(s) => {
            let arch = ScheduleArch {
                substeps: s.substeps().len(),
            };
            m.put(dir, "schedule", &arch, &[Tensor::from_vec(s.betas().to_vec())])?;
        }
    }
    m.save(dir)
}

pub fn load_autoencoder(dir: impl AsRef<Path>) -> Result<Autoencoder> {
    let (arch, mut params): (AutoencoderArch, _) = CheckpointManifest::load(&dir)?.get(&dir, "autoencoder")?;
    let n_enc = 2 * (arch.encoder.widths.len() - 1);
    if params.len() != n_enc + 2 * (arch.decoder.widths.len() - 1) {
        return Err(ckpt_err("autoencoder", "parameter count does not match the architecture"));
    }
    let dec = params.split_off(n_enc);
    Autoencoder::from_parts(
        Mlp::from_params(arch.encoder, params)?,
        Mlp::from_params(arch.decoder, dec)?,
        arch.bounds,
    )
}

pub fn load_score(dir: impl AsRef<Path>) -> Result<ScoreNet> {
    let (arch, params): (ScoreArch, _) = CheckpointManifest::load(&dir)?.get(&dir, "score")?;
    ScoreNet::from_mlp(Mlp::from_params(arch.mlp, params)?, arch.embedding, arch.t_max)
}

pub fn load_surrogate(dir: impl AsRef<Path>) -> Result<SpectralSurrogate> {
    let (arch, params): (SpectralArch, _) = CheckpointManifest::load(&dir)?.get(&dir, "surrogate")?;
    SpectralSurrogate::from_params(arch, params)
}

pub fn load_schedule(dir: impl AsRef<Path>) -> Result<DiffusionSchedule> {
    let (arch, params): (ScheduleArch, Vec<Tensor>) = CheckpointManifest::load(&dir)?.get(&dir, "schedule")?;
    let betas = params
        .into_iter()
        .next()
        .ok_or_else(|| ckpt_err("schedule", "missing beta table"))?;
    DiffusionSchedule::from_betas(betas.into_data(), arch.substeps)
}

/// Loads the bundle written by the training stages; the surrogate is
/// optional.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ModelBundle> {
    let dir = dir.as_ref();
    let m = CheckpointManifest::load(dir)?;
    let surrogate = if m.contains("surrogate") { Some(load_surrogate(dir)?) } else { None };
    ModelBundle::new(load_score(dir)?, load_autoencoder(dir)?, surrogate, load_schedule(dir)?)
}
