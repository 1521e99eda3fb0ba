use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::binding::MeshSequence;
use crate::dataset::{Dataset, Rig};
use crate::error::{Error, Result};
use crate::math::Camera;

use super::{load_mesh, read_png, read_text, write_alpha_map, write_atomic, write_mesh, write_png, BitDepth};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fov_x: f64,
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major 4×4 world-to-camera transform.
    pub world_to_camera: [[f64; 4]; 4],
}

impl CameraRecord {
    pub fn from_camera(cam: &Camera) -> Self {
        let m = cam.view_matrix();
        Self {
            fov_x: cam.fov_x,
            fov_y: cam.fov_y,
            near: cam.near,
            far: cam.far,
            width: cam.width,
            height: cam.height,
            world_to_camera: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
        }
    }

    pub fn to_camera(&self) -> Result<Camera> {
        let m = Matrix4::from_fn(|r, c| self.world_to_camera[r][c]);
        Camera::new(&m, self.fov_x, self.fov_y, self.near, self.far, self.width, self.height)
    }
}

/// Blendshape rig stored as little-endian f64: base positions, then each
/// shape's offsets, every block `V × 3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigRecord {
    pub data: PathBuf,
    pub shapes: usize,
    pub pivot: [f64; 3],
}

/// On-disk dataset description. Relative paths resolve against the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub frames: usize,
    /// Topology and rest pose.
    pub mesh: PathBuf,
    /// `frames × V × 3` little-endian f32 positions.
    pub vertices: PathBuf,
    pub conditions: Vec<Vec<f64>>,
    pub images: Vec<PathBuf>,
    pub alphas: Vec<PathBuf>,
    pub camera: CameraRecord,
    pub rig: Option<RigRecord>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Manifest {
            path: self.root.join("manifest.toml"),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(self.err(format!("version {} unsupported (this build reads {MANIFEST_VERSION})", self.version)));
        }
        for (name, len) in [
            ("conditions", self.conditions.len()),
            ("images", self.images.len()),
            ("alphas", self.alphas.len()),
        ] {
            if len != self.frames {
                return Err(self.err(format!("list `{name}` has {len} entries for {} frames", self.frames)));
            }
        }
        if self.frames == 0 {
            return Err(self.err("no frames"));
        }
        let mut files = vec![&self.mesh, &self.vertices];
        files.extend(&self.images);
        files.extend(&self.alphas);
        if let Some(rig) = &self.rig {
            files.push(&rig.data);
        }
        if let Some(missing) = files.into_iter().find(|p| !self.resolve(p).is_file()) {
            return Err(self.err(format!("referenced file {} does not exist", missing.display())));
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = read_text(path)?;
    let mut manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate().map_err(|e| match e {
        Error::Manifest { message, .. } => Error::Manifest {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    Ok(manifest)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })
}

fn positions_from_f32(bytes: &[u8]) -> Vec<[f64; 3]> {
    bytes
        .chunks_exact(12)
        .map(|c| std::array::from_fn(|a| f32::from_le_bytes(c[4 * a..4 * a + 4].try_into().expect("4 bytes")) as f64))
        .collect()
}

fn positions_from_f64(bytes: &[u8]) -> Vec<[f64; 3]> {
    bytes
        .chunks_exact(24)
        .map(|c| std::array::from_fn(|a| f64::from_le_bytes(c[8 * a..8 * a + 8].try_into().expect("8 bytes"))))
        .collect()
}

/// Loads everything a manifest references. Fails without partial results.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(path)?;
    let topology = load_mesh(&manifest.resolve(&manifest.mesh))?;
    let v = topology.vertices.len();
    let vpath = manifest.resolve(&manifest.vertices);
    let raw = read_bytes(&vpath)?;
    let expected = manifest.frames * v * 12;
    if raw.len() != expected {
        return Err(Error::Manifest {
            path: vpath,
            message: format!("vertex block has {} bytes, {} frames × {v} vertices need {expected}", raw.len(), manifest.frames),
        });
    }
    let all = positions_from_f32(&raw);
    let frames = all.chunks(v).map(<[_]>::to_vec).collect();
    let sequence = MeshSequence::new(topology, frames)?;
    let images = manifest
        .images
        .iter()
        .map(|p| read_png(&manifest.resolve(p)))
        .collect::<Result<Vec<_>>>()?;
    let alphas = manifest
        .alphas
        .iter()
        .map(|p| {
            let a = read_png(&manifest.resolve(p))?;
            if a.channels != 1 {
                return Err(Error::Image {
                    path: manifest.resolve(p),
                    message: "alpha map must be single-channel".into(),
                });
            }
            Ok(a)
        })
        .collect::<Result<Vec<_>>>()?;
    let rig = match &manifest.rig {
        Some(r) => {
            let rpath = manifest.resolve(&r.data);
            let bytes = read_bytes(&rpath)?;
            let need = (r.shapes + 1) * v * 24;
            if bytes.len() != need {
                return Err(Error::Manifest {
                    path: rpath,
                    message: format!("rig block has {} bytes, expected {need}", bytes.len()),
                });
            }
            let blocks = positions_from_f64(&bytes);
            let mut chunks = blocks.chunks(v).map(<[_]>::to_vec);
            let base = chunks.next().unwrap_or_default();
            Some(Rig {
                base,
                shapes: chunks.collect(),
                pivot: r.pivot,
            })
        }
        None => None,
    };
    let dataset = Dataset {
        sequence,
        conditions: manifest.conditions.clone(),
        images,
        alphas,
        camera: manifest.camera.to_camera()?,
        rig,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes a dataset as a manifest tree under `dir`: 16-bit images and alpha
/// maps, f32 vertex block, optional f64 rig block. Returns the manifest path.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    dataset.validate()?;
    let mkdir = |p: &Path| {
        std::fs::create_dir_all(p).map_err(|source| Error::Unwritable {
            path: p.to_path_buf(),
            source,
        })
    };
    mkdir(&dir.join("images"))?;
    mkdir(&dir.join("alphas"))?;
    write_mesh(&dir.join("mesh.obj"), &dataset.sequence.topology)?;
    let mut block = Vec::new();
    for frame in &dataset.sequence.frames {
        for p in frame {
            for v in p {
                block.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    write_atomic(&dir.join("vertices.bin"), &block)?;
    let mut images = Vec::new();
    let mut alphas = Vec::new();
    for i in 0..dataset.len() {
        let img = PathBuf::from(format!("images/{i:04}.png"));
        let alpha = PathBuf::from(format!("alphas/{i:04}.png"));
        write_png(&dir.join(&img), &dataset.images[i], BitDepth::Sixteen)?;
        write_alpha_map(&dir.join(&alpha), &dataset.alphas[i])?;
        images.push(img);
        alphas.push(alpha);
    }
    let rig = match &dataset.rig {
        Some(r) => {
            let mut bytes = Vec::new();
            for block in std::iter::once(&r.base).chain(&r.shapes) {
                for p in block {
                    for v in p {
                        bytes.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            write_atomic(&dir.join("rig.bin"), &bytes)?;
            Some(RigRecord {
                data: "rig.bin".into(),
                shapes: r.shapes.len(),
                pivot: r.pivot,
            })
        }
        None => None,
    };
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        frames: dataset.len(),
        mesh: "mesh.obj".into(),
        vertices: "vertices.bin".into(),
        conditions: dataset.conditions.clone(),
        images,
        alphas,
        camera: CameraRecord::from_camera(&dataset.camera),
        rig,
        root: PathBuf::new(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidState(format!("manifest serialization: {e}")))?;
    let path = dir.join("manifest.toml");
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
