use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::world::Frame;
use crate::error::{Error, Result};
use crate::supernet::{View, ViewImages};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"AVSQ";
const VERSION: u32 = 1;

/// Frames plus the seed of the world that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub world_seed: u64,
    pub views: Vec<View>,
    pub image_size: usize,
    pub frames: Vec<Frame>,
}

fn view_code(v: View) -> u8 {
    match v {
        View::LeftEye => 0,
        View::RightEye => 1,
        View::Mouth => 2,
    }
}

fn code_view(c: u8) -> Result<View> {
    match c {
        0 => Ok(View::LeftEye),
        1 => Ok(View::RightEye),
        2 => Ok(View::Mouth),
        _ => Err(Error::Format(format!("unknown view code {c}"))),
    }
}

struct Dims {
    latent: usize,
    gaze: usize,
    keypoints: usize,
    geometry: usize,
    texture: usize,
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

impl Sequence {
    fn dims(&self) -> Result<Dims> {
        let f = self
            .frames
            .first()
            .ok_or_else(|| Error::Format("sequence has no frames".into()))?;
        let d = Dims {
            latent: f.z.len(),
            gaze: f.gaze.len(),
            keypoints: f.keypoints.len(),
            geometry: f.geometry.len(),
            texture: f.texture.len(),
        };
        for (i, f) in self.frames.iter().enumerate() {
            let same = f.z.len() == d.latent
                && f.gaze.len() == d.gaze
                && f.keypoints.len() == d.keypoints
                && f.geometry.len() == d.geometry
                && f.texture.len() == d.texture;
            if !same {
                return Err(Error::Format(format!("frame {i} differs in dimensions")));
            }
        }
        Ok(d)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.dims()?;
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u64::<LittleEndian>(self.world_seed)?;
        w.write_u32::<LittleEndian>(self.views.len() as u32)?;
        for &v in &self.views {
            w.write_u8(view_code(v))?;
        }
        for n in [self.image_size, d.latent, d.gaze, d.keypoints, d.geometry, d.texture] {
            w.write_u32::<LittleEndian>(n as u32)?;
        }
        w.write_u64::<LittleEndian>(self.frames.len() as u64)?;
        let px = self.image_size * self.image_size;
        for f in &self.frames {
            w.write_u8(f.keyframe as u8)?;
            for xs in [&f.z, &f.gaze, &f.keypoints, &f.geometry, &f.texture] {
                write_f64s(w, xs)?;
            }
            for &v in &self.views {
                let img = f
                    .images
                    .get(v)
                    .ok_or_else(|| Error::MissingView(v.to_string()))?;
                if img.numel() != px {
                    return Err(Error::Format(format!("{v} image has {} pixels", img.numel())));
                }
                write_f64s(w, img.data())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a sequence file (bad magic)".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let world_seed = r.read_u64::<LittleEndian>()?;
        let n_views = r.read_u32::<LittleEndian>()? as usize;
        let views = (0..n_views)
            .map(|_| code_view(r.read_u8()?))
            .collect::<Result<Vec<_>>>()?;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.read_u32::<LittleEndian>()? as usize;
        }
        let [image_size, latent, gaze, keypoints, geometry, texture] = dims;
        let count = r.read_u64::<LittleEndian>()? as usize;
        let mut frames = Vec::with_capacity(count);
        for _ in 0..count {
            let keyframe = match r.read_u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Format(format!("bad key-frame flag {b}"))),
            };
            let z = read_f64s(r, latent)?;
            let g = read_f64s(r, gaze)?;
            let y = read_f64s(r, keypoints)?;
            let geo = read_f64s(r, geometry)?;
            let tex = read_f64s(r, texture)?;
            let mut images = ViewImages::new();
            for &v in &views {
                let px = read_f64s(r, image_size * image_size)?;
                images.insert(
                    v,
                    Tensor::new(vec![1, image_size, image_size], px)
                        .map_err(|e| Error::Format(e.to_string()))?,
                );
            }
            frames.push(Frame {
                images,
                z,
                gaze: g,
                keypoints: y,
                geometry: geo,
                texture: tex,
                keyframe,
            });
        }
        Ok(Self {
            world_seed,
            views,
            image_size,
            frames,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{SequenceConfig, SyntheticWorld};
    use crate::supernet::SupernetSpec;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = SupernetSpec::toy();
        let w = SyntheticWorld::new(&spec, 4);
        let cfg = SequenceConfig {
            n_frames: 7,
            keyframe_rate: 0.5,
            ..SequenceConfig::default()
        };
        let seq = Sequence {
            world_seed: 4,
            views: w.views(),
            image_size: w.image_size,
            frames: w.generate_sequence(9, &cfg).unwrap(),
        };
        let mut buf = Vec::new();
        seq.write_to(&mut buf).unwrap();
        let back = Sequence::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn bad_magic_rejected() {
        let err = Sequence::read_from(&mut &b"NOPE\x01\x00\x00\x00"[..]).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }
}
