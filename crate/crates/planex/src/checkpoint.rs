//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `PLANEXCK`, a little-endian u32 header length,
//! the JSON [`Header`], then the parameter blocks listed in the header, each
//! `len` little-endian f32 values, back to back in the listed order. Blocks
//! are named `expert/<k>`, `teacher` and `baked/<k>`.

use std::io::{Read, Write};
use std::path::Path;

use planex_core::geometry::Rectangle;
use planex_core::math::Vec3;
use planex_core::radiance::{EncodingConfig, ExpertMlp, NetConfig, TeacherMlp};
use planex_core::render::AlphaTexture;
use planex_core::scene::Scene;
use planex_core::train::Stage;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"PLANEXCK";
pub const VERSION: u32 = 1;

/// Everything the pipeline carries between stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub seed: u64,
    pub scene: Scene,
    pub teacher: Option<TeacherMlp<f32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfigJson {
    pub pos_dims: usize,
    pub pos_bands: usize,
    pub dir_bands: usize,
    pub include_identity: bool,
    pub hidden: usize,
    pub depth: usize,
}

impl From<NetConfig> for NetConfigJson {
    fn from(c: NetConfig) -> Self {
        NetConfigJson {
            pos_dims: c.pos_dims,
            pos_bands: c.encoding.pos_bands,
            dir_bands: c.encoding.dir_bands,
            include_identity: c.encoding.include_identity,
            hidden: c.hidden,
            depth: c.depth,
        }
    }
}

impl From<NetConfigJson> for NetConfig {
    fn from(c: NetConfigJson) -> Self {
        NetConfig {
            pos_dims: c.pos_dims,
            encoding: EncodingConfig::new(c.pos_bands, c.dir_bands, c.include_identity),
            hidden: c.hidden,
            depth: c.depth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangleJson {
    pub center: [f64; 3],
    pub normal: [f64; 3],
    pub up: [f64; 3],
    pub width: f64,
    pub height: f64,
}

impl From<&Rectangle> for RectangleJson {
    fn from(r: &Rectangle) -> Self {
        RectangleJson {
            center: r.center.to_array(),
            normal: r.normal().to_array(),
            up: r.up().to_array(),
            width: r.width,
            height: r.height,
        }
    }
}

impl RectangleJson {
    pub fn to_rectangle(&self) -> planex_core::Result<Rectangle> {
        Rectangle::from_frame(
            Vec3::from_array(self.center),
            Vec3::from_array(self.normal),
            Vec3::from_array(self.up),
            self.width,
            self.height,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub stage: String,
    pub seed: u64,
    pub background: [f64; 3],
    pub expert_config: NetConfigJson,
    pub expert_param_count: usize,
    pub planes: Vec<RectangleJson>,
    pub teacher_config: Option<NetConfigJson>,
    /// `[res_x, res_y]` of every baked alpha texture.
    pub bake_resolution: Option<[usize; 2]>,
    pub blocks: Vec<BlockInfo>,
}

impl Header {
    pub fn plane_count(&self) -> usize {
        self.planes.len()
    }
}

pub fn stage_from_name(name: &str) -> Option<Stage> {
    [
        Stage::FitPlanes,
        Stage::Teacher,
        Stage::Distill,
        Stage::Finetune,
        Stage::FinetuneRgb,
    ]
    .into_iter()
    .find(|s| s.name() == name)
}

fn corrupt(block: impl Into<String>, message: impl Into<String>) -> Error {
    Error::CorruptBlock {
        block: block.into(),
        message: message.into(),
    }
}

/// Serialized checkpoint bytes.
pub fn encode(ck: &Checkpoint) -> Result<Vec<u8>> {
    let scene = &ck.scene;
    if scene.experts.len() != scene.planes.len() {
        return Err(Error::Invalid(format!(
            "{} experts for {} planes",
            scene.experts.len(),
            scene.planes.len()
        )));
    }
    let expert_config = scene.expert_config().unwrap_or(NetConfig::expert());
    let mut blocks = Vec::new();
    let mut payload: Vec<&[f32]> = Vec::new();
    for (k, e) in scene.experts.iter().enumerate() {
        if *e.config() != expert_config {
            return Err(Error::Invalid(format!("expert {k} has a different configuration")));
        }
        blocks.push(BlockInfo {
            name: format!("expert/{k}"),
            len: e.param_count(),
        });
        payload.push(e.params());
    }
    if let Some(t) = &ck.teacher {
        blocks.push(BlockInfo {
            name: "teacher".into(),
            len: t.param_count(),
        });
        payload.push(t.params());
    }
    let mut bake_resolution = None;
    if let Some(baked) = &scene.baked {
        for (k, tex) in baked.iter().enumerate() {
            let res = [tex.res_x, tex.res_y];
            if *bake_resolution.get_or_insert(res) != res {
                return Err(Error::Invalid("baked textures differ in resolution".into()));
            }
            blocks.push(BlockInfo {
                name: format!("baked/{k}"),
                len: tex.values.len(),
            });
            payload.push(&tex.values);
        }
    }
    let header = Header {
        version: VERSION,
        stage: ck.stage.name().into(),
        seed: ck.seed,
        background: scene.background,
        expert_config: expert_config.into(),
        expert_param_count: expert_config.param_count(),
        planes: scene.planes.iter().map(RectangleJson::from).collect(),
        teacher_config: ck.teacher.as_ref().map(|t| (*t.config()).into()),
        bake_resolution,
        blocks,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let total: usize = payload.iter().map(|p| p.len() * 4).sum();
    let mut out = Vec::with_capacity(12 + json.len() + total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for block in payload {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_header_from<R: Read>(r: &mut R) -> Result<Header> {
    let mut pre = [0u8; 12];
    r.read_exact(&mut pre).map_err(|_| corrupt("header", "file shorter than the preamble"))?;
    if &pre[..8] != MAGIC {
        return Err(Error::Parse {
            entry: "checkpoint".into(),
            message: "not a checkpoint (bad magic)".into(),
        });
    }
    let len = u32::from_le_bytes(pre[8..12].try_into().unwrap()) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| corrupt("header", format!("header declares {len} bytes but the file ends early")))?;
    // the version is checked before the rest of the schema
    let value: serde_json::Value = serde_json::from_slice(&json).map_err(|e| Error::Parse {
        entry: "checkpoint header".into(),
        message: e.to_string(),
    })?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Parse {
        entry: "checkpoint header".into(),
        message: e.to_string(),
    })
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cursor = bytes;
    let header = read_header_from(&mut cursor)?;
    let mut rest = cursor;
    let mut take = |b: &BlockInfo| -> Result<Vec<f32>> {
        let n = b.len * 4;
        if rest.len() < n {
            return Err(corrupt(
                &b.name,
                format!("declares {} values but only {} bytes remain", b.len, rest.len()),
            ));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let expert_config: NetConfig = header.expert_config.into();
    if header.expert_param_count != expert_config.param_count() {
        return Err(corrupt(
            "header",
            format!(
                "expert_param_count {} does not match the configuration ({})",
                header.expert_param_count,
                expert_config.param_count()
            ),
        ));
    }
    let planes = header
        .planes
        .iter()
        .enumerate()
        .map(|(k, p)| {
            p.to_rectangle().map_err(|e| Error::Parse {
                entry: format!("planes[{k}]"),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut experts = Vec::with_capacity(planes.len());
    let mut teacher = None;
    let mut baked: Vec<AlphaTexture> = Vec::new();
    for b in &header.blocks {
        let data = take(b)?;
        let wrong_len = |expected: usize| corrupt(&b.name, format!("length {} but expected {expected}", b.len));
        if let Some(k) = b.name.strip_prefix("expert/") {
            if k.parse::<usize>().ok() != Some(experts.len()) {
                return Err(corrupt(&b.name, "expert blocks out of order"));
            }
            let net = ExpertMlp::from_params(expert_config, data).ok_or_else(|| wrong_len(expert_config.param_count()))?;
            experts.push(net);
        } else if b.name == "teacher" {
            let cfg: NetConfig = header
                .teacher_config
                .ok_or_else(|| corrupt("teacher", "teacher block without teacher_config"))?
                .into();
            teacher = Some(TeacherMlp::from_params(cfg, data).ok_or_else(|| wrong_len(cfg.param_count()))?);
        } else if let Some(k) = b.name.strip_prefix("baked/") {
            let [rx, ry] = header
                .bake_resolution
                .ok_or_else(|| corrupt(&b.name, "baked block without bake_resolution"))?;
            if b.len != rx * ry {
                return Err(wrong_len(rx * ry));
            }
            if k.parse::<usize>().ok() != Some(baked.len()) {
                return Err(corrupt(&b.name, "baked blocks out of order"));
            }
            baked.push(AlphaTexture {
                plane_index: baked.len(),
                res_x: rx,
                res_y: ry,
                values: data,
            });
        } else {
            return Err(corrupt(&b.name, "unknown block"));
        }
    }
    if !rest.is_empty() {
        return Err(corrupt("trailer", format!("{} unexpected bytes after the last block", rest.len())));
    }
    if experts.len() != planes.len() {
        return Err(corrupt("expert", format!("{} expert blocks for {} planes", experts.len(), planes.len())));
    }
    if !baked.is_empty() && baked.len() != planes.len() {
        return Err(corrupt("baked", format!("{} baked blocks for {} planes", baked.len(), planes.len())));
    }
    let stage = stage_from_name(&header.stage).ok_or_else(|| Error::Parse {
        entry: "checkpoint header".into(),
        message: format!("unknown stage '{}'", header.stage),
    })?;
    Ok(Checkpoint {
        stage,
        seed: header.seed,
        scene: Scene {
            planes,
            experts,
            baked: if baked.is_empty() { None } else { Some(baked) },
            background: header.background,
        },
        teacher,
    })
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode(ck)?;
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io_err(path)(e)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode(&bytes)
}

/// Reads only the preamble and JSON header.
pub fn inspect_checkpoint(path: &Path) -> Result<Header> {
    let mut f = std::fs::File::open(path).map_err(io_err(path))?;
    read_header_from(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let planes = vec![
            Rectangle::new(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.2, 0.1, 1.0), Vec3::Y, 0.4, 0.3).unwrap(),
            Rectangle::new(Vec3::ZERO, Vec3::X, Vec3::Z, 0.2, 0.5).unwrap(),
        ];
        let mut scene = Scene::with_new_experts(planes, NetConfig::expert(), 4, [0.1, 0.2, 0.3]);
        scene.bake(4);
        Checkpoint {
            stage: Stage::Finetune,
            seed: 4,
            scene,
            teacher: Some(TeacherMlp::new(NetConfig::teacher().with_hidden(8), 1)),
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let ck = sample();
        let back = decode(&encode(&ck).unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn truncation_is_a_corrupt_block() {
        let bytes = encode(&sample()).unwrap();
        match decode(&bytes[..bytes.len() - 3]) {
            Err(Error::CorruptBlock { block, .. }) => assert_eq!(block, "baked/1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn other_versions_are_rejected() {
        let bytes = encode(&sample()).unwrap();
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = std::str::from_utf8(&bytes[12..12 + len]).unwrap().replace("\"version\":1", "\"version\":7");
        let mut forged = bytes[..8].to_vec();
        forged.extend_from_slice(&(json.len() as u32).to_le_bytes());
        forged.extend_from_slice(json.as_bytes());
        forged.extend_from_slice(&bytes[12 + len..]);
        assert!(matches!(decode(&forged), Err(Error::VersionMismatch { found: 7, expected: 1 })));
    }
}
