//! Burst directories: `manifest.json` plus one `BFT1` file per frame and an
//! optional `gt.bft` ground truth.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor_file::{read_tensor, write_tensor};
use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::simulate::{BurstStack, SyntheticBurstSpec, Transform};
use crate::tensor::Tensor;

pub const MANIFEST_NAME: &str = "manifest.json";
const GT_NAME: &str = "gt.bft";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstManifest {
    pub version: u32,
    /// `[4, h, w]` of every frame.
    pub frame_shape: [usize; 3],
    pub frames: Vec<String>,
    pub transforms: Vec<Transform>,
    pub noise_seeds: Vec<u64>,
    pub spec: SyntheticBurstSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:03}.bft")
}

/// Writes `dir/manifest.json`, `dir/frame_###.bft` and, if given, `dir/gt.bft`.
pub fn write_burst(dir: impl AsRef<Path>, burst: &BurstStack, ground_truth: Option<&Tensor>) -> Result<()> {
    let dir = dir.as_ref();
    let (n, c, h, w) = burst.frames.dims4()?;
    if n != burst.transforms.len() || n != burst.noise_seeds.len() {
        return Err(Error::invalid(
            "write_burst",
            format!("{n} frames, {} transforms, {} seeds", burst.transforms.len(), burst.noise_seeds.len()),
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let frames: Vec<String> = (0..n).map(frame_name).collect();
    for (i, name) in frames.iter().enumerate() {
        write_tensor(dir.join(name), &burst.frames.select(i)?)?;
    }
    if let Some(gt) = ground_truth {
        write_tensor(dir.join(GT_NAME), gt)?;
    }
    let manifest = BurstManifest {
        version: 1,
        frame_shape: [c, h, w],
        frames,
        transforms: burst.transforms.clone(),
        noise_seeds: burst.noise_seeds.clone(),
        spec: burst.spec.clone(),
        ground_truth: ground_truth.map(|_| GT_NAME.to_string()),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_bytes(&dir.join(MANIFEST_NAME), text.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<BurstManifest> {
    let path = dir.join(MANIFEST_NAME);
    let m: BurstManifest = serde_json::from_slice(&read_bytes(&path)?).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    let bad = |field: &str, reason: String| Error::format("manifest", field, 0, reason);
    if m.version != 1 {
        return Err(bad("version", format!("unsupported version {}", m.version)));
    }
    if m.frames.is_empty() {
        return Err(bad("frames", "no frames listed".into()));
    }
    if m.transforms.len() != m.frames.len() || m.noise_seeds.len() != m.frames.len() {
        return Err(bad(
            "transforms",
            format!("{} frames, {} transforms, {} seeds", m.frames.len(), m.transforms.len(), m.noise_seeds.len()),
        ));
    }
    for f in m.frames.iter().chain(m.ground_truth.iter()) {
        if Path::new(f).components().count() != 1 || f == ".." {
            return Err(bad("frames", format!("`{f}` must be a plain file name")));
        }
    }
    Ok(m)
}

/// Loads a burst directory; frames must all have the manifest's shape.
pub fn read_burst(dir: impl AsRef<Path>) -> Result<(BurstStack, Option<Tensor>)> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let frames = m
        .frames
        .iter()
        .map(|name| {
            let t = read_tensor(dir.join(name))?;
            if t.shape() != m.frame_shape {
                return Err(Error::format(
                    "manifest",
                    name.clone(),
                    0,
                    format!("frame shape {:?}, manifest says {:?}", t.shape(), m.frame_shape),
                ));
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let gt = m.ground_truth.as_ref().map(|g| read_tensor(dir.join(g))).transpose()?;
    Ok((
        BurstStack {
            frames: Tensor::stack(&frames)?,
            transforms: m.transforms,
            noise_seeds: m.noise_seeds,
            spec: m.spec,
        },
        gt,
    ))
}
