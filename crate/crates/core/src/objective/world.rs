use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::supernet::{SupernetSpec, View, ViewImages};
use crate::tensor::Tensor;

/// Output sizes of the surrogate decoder.
pub const GEOMETRY_DIM: usize = 16;
pub const TEXTURE_DIM: usize = 16;
pub const RENDER_DIM: usize = 36;

/// Frozen affine stand-in for the avatar decoder and renderer.
///
/// Geometry is `z·A_G + b_G`, texture `[z, g]·A_T + b_T`, and the rendered
/// image `[G, T]·A_R + b_R`, all row-vector products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDecoder {
    pub geometry_w: Tensor,
    pub geometry_b: Tensor,
    pub texture_w: Tensor,
    pub texture_b: Tensor,
    pub render_w: Tensor,
    pub render_b: Tensor,
}

fn vec_mat(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (n, m) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(x.len(), n);
    let mut out = b.data().to_vec();
    for (i, &xi) in x.iter().enumerate() {
        let row = &w.data()[i * m..(i + 1) * m];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xi * wv;
        }
    }
    out
}

impl SurrogateDecoder {
    fn new(rng: &mut ChaCha8Rng, latent_dim: usize, gaze_dim: usize) -> Self {
        let gauss = |rng: &mut ChaCha8Rng, shape: &[usize], std: f64| Tensor::randn(shape, std, rng);
        let geometry_w = gauss(rng, &[latent_dim, GEOMETRY_DIM], 1.0 / (latent_dim as f64).sqrt());
        let geometry_b = gauss(rng, &[GEOMETRY_DIM], 0.1);
        let tex_in = latent_dim + gaze_dim;
        let texture_w = gauss(rng, &[tex_in, TEXTURE_DIM], 1.0 / (tex_in as f64).sqrt());
        let texture_b = gauss(rng, &[TEXTURE_DIM], 0.1);
        // Pixel-intensity scale, hence the small rendering loss weight.
        let ren_in = GEOMETRY_DIM + TEXTURE_DIM;
        let render_w = gauss(rng, &[ren_in, RENDER_DIM], 100.0 / (ren_in as f64).sqrt());
        let render_b = gauss(rng, &[RENDER_DIM], 10.0);
        Self {
            geometry_w,
            geometry_b,
            texture_w,
            texture_b,
            render_w,
            render_b,
        }
    }

    pub fn gaze_dim(&self) -> usize {
        self.texture_w.shape()[0] - self.geometry_w.shape()[0]
    }

    pub fn geometry(&self, z: &[f64]) -> Vec<f64> {
        vec_mat(z, &self.geometry_w, &self.geometry_b)
    }

    pub fn texture(&self, z: &[f64], gaze: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = z.iter().chain(gaze).copied().collect();
        vec_mat(&x, &self.texture_w, &self.texture_b)
    }

    pub fn render(&self, geometry: &[f64], texture: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = geometry.iter().chain(texture).copied().collect();
        vec_mat(&x, &self.render_w, &self.render_b)
    }

    /// Rendered image of a predicted latent code and gaze.
    pub fn render_latent(&self, z: &[f64], gaze: &[f64]) -> Vec<f64> {
        self.render(&self.geometry(z), &self.texture(z, gaze))
    }
}

/// Ground truth of one captured frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub images: ViewImages,
    pub z: Vec<f64>,
    /// Concatenated per-eye gaze.
    pub gaze: Vec<f64>,
    pub keypoints: Vec<f64>,
    pub geometry: Vec<f64>,
    pub texture: Vec<f64>,
    /// Starts a new linear segment.
    pub keyframe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceConfig {
    pub n_frames: usize,
    /// Probability that a frame starts a new linear segment.
    pub keyframe_rate: f64,
    /// Standard deviation of latent/gaze jitter and pixel noise.
    pub noise_level: f64,
    /// Fraction of segments whose gaze target is heavy-tailed.
    pub extreme_gaze_rate: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            n_frames: 1000,
            keyframe_rate: 0.05,
            noise_level: 0.01,
            extreme_gaze_rate: 0.1,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_frames == 0 {
            return bad("a sequence needs at least one frame");
        }
        if !(0.0..=1.0).contains(&self.keyframe_rate) || !(0.0..=1.0).contains(&self.extreme_gaze_rate)
        {
            return bad("rates must lie in [0, 1]");
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad("noise level must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Blob {
    cy: f64,
    cx: f64,
    inv_two_var: f64,
    amp: f64,
}

/// Per-view image model: a fixed background plus one Gaussian blob per latent
/// and gaze component, weighted linearly by that component.
#[derive(Debug, Clone, PartialEq)]
struct ViewModel {
    view: View,
    background: Vec<f64>,
    latent_blobs: Vec<Vec<f64>>,
    gaze_blobs: Vec<Vec<f64>>,
}

fn blob_image(b: &Blob, size: usize) -> Vec<f64> {
    let mut img = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (dy, dx) = (y as f64 + 0.5 - b.cy, x as f64 + 0.5 - b.cx);
            img.push(b.amp * (-(dy * dy + dx * dx) * b.inv_two_var).exp());
        }
    }
    img
}

fn random_blob(rng: &mut ChaCha8Rng, size: usize) -> Blob {
    let s = size as f64;
    let sigma = rng.gen_range(0.06..0.18) * s;
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    Blob {
        cy: rng.gen_range(0.15..0.85) * s,
        cx: rng.gen_range(0.15..0.85) * s,
        inv_two_var: 1.0 / (2.0 * sigma * sigma),
        amp: sign * rng.gen_range(0.5..1.0),
    }
}

/// Seeded generative model producing frames that are linear in (z, gaze).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub image_size: usize,
    pub latent_dim: usize,
    pub gaze_per_eye: usize,
    pub keypoint_values_per_eye: usize,
    views: Vec<ViewModel>,
    /// Per eye, `[latent + gaze_per_eye, keypoint values]`.
    keypoint_maps: Vec<Tensor>,
    pub decoder: SurrogateDecoder,
}

const LATENT_STD: f64 = 0.8;
const GAZE_STD: f64 = 0.3;
const GAZE_LIMIT: f64 = 1.5;
const VERGENCE: f64 = 0.05;
/// Keypoints live in normalised image coordinates, hence the large weight.
const KEYPOINT_SCALE: f64 = 0.03;

impl SyntheticWorld {
    pub fn new(spec: &SupernetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = &spec.dims;
        let size = d.image_size;
        let views = spec
            .views
            .iter()
            .map(|v| {
                let bg = random_blob(&mut rng, size);
                let background = blob_image(&Blob { amp: 0.5, ..bg }, size)
                    .into_iter()
                    .map(|p| p + 0.25)
                    .collect();
                let latent_blobs = (0..d.latent_dim)
                    .map(|_| blob_image(&random_blob(&mut rng, size), size))
                    .collect();
                let n_gaze = if v.view.is_eye() { d.gaze_per_eye } else { 0 };
                let gaze_blobs = (0..n_gaze)
                    .map(|_| blob_image(&random_blob(&mut rng, size), size))
                    .collect();
                ViewModel {
                    view: v.view,
                    background,
                    latent_blobs,
                    gaze_blobs,
                }
            })
            .collect();
        let kp_in = d.latent_dim + d.gaze_per_eye;
        let keypoint_maps = (0..spec.eye_views())
            .map(|_| {
                Tensor::randn(
                    &[kp_in, d.keypoint_values_per_eye()],
                    KEYPOINT_SCALE / (kp_in as f64).sqrt(),
                    &mut rng,
                )
            })
            .collect();
        let decoder = SurrogateDecoder::new(&mut rng, d.latent_dim, spec.gaze_dim());
        Self {
            seed,
            image_size: size,
            latent_dim: d.latent_dim,
            gaze_per_eye: d.gaze_per_eye,
            keypoint_values_per_eye: d.keypoint_values_per_eye(),
            views,
            keypoint_maps,
            decoder,
        }
    }

    pub fn views(&self) -> Vec<View> {
        self.views.iter().map(|v| v.view).collect()
    }

    pub fn eye_count(&self) -> usize {
        self.keypoint_maps.len()
    }

    pub fn gaze_dim(&self) -> usize {
        self.eye_count() * self.gaze_per_eye
    }

    pub fn keypoint_dim(&self) -> usize {
        self.eye_count() * self.keypoint_values_per_eye
    }

    /// Noise-free frame for a latent code and per-eye gaze.
    pub fn render_frame(&self, z: &[f64], gaze: &[f64], keyframe: bool) -> Frame {
        let mut images = ViewImages::new();
        let mut eye = 0;
        for v in &self.views {
            let mut img = v.background.clone();
            for (coef, blob) in z.iter().zip(&v.latent_blobs) {
                img.iter_mut().zip(blob).for_each(|(p, b)| *p += coef * b);
            }
            if !v.gaze_blobs.is_empty() {
                let g = &gaze[eye * self.gaze_per_eye..(eye + 1) * self.gaze_per_eye];
                for (coef, blob) in g.iter().zip(&v.gaze_blobs) {
                    img.iter_mut().zip(blob).for_each(|(p, b)| *p += coef * b);
                }
                eye += 1;
            }
            let s = self.image_size;
            images.insert(v.view, Tensor::new(vec![1, s, s], img).expect("image size"));
        }
        let mut keypoints = Vec::with_capacity(self.keypoint_dim());
        for (e, map) in self.keypoint_maps.iter().enumerate() {
            let g = &gaze[e * self.gaze_per_eye..(e + 1) * self.gaze_per_eye];
            let x: Vec<f64> = z.iter().chain(g).copied().collect();
            keypoints.extend(vec_mat(&x, map, &Tensor::zeros(&[map.shape()[1]])));
        }
        Frame {
            images,
            z: z.to_vec(),
            gaze: gaze.to_vec(),
            keypoints,
            geometry: self.decoder.geometry(z),
            texture: self.decoder.texture(z, gaze),
            keyframe,
        }
    }

    /// Rendered image of the frame's ground truth.
    pub fn render_truth(&self, f: &Frame) -> Vec<f64> {
        self.decoder.render(&f.geometry, &f.texture)
    }

    /// Piecewise-linear trajectory in latent and gaze space.
    ///
    /// Key frames redirect the velocity toward a fresh target; positions stay
    /// continuous, so each segment is exactly linear before noise.
    pub fn generate_sequence(&self, seed: u64, cfg: &SequenceConfig) -> Result<Vec<Frame>> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5_eed0_f5e9);
        let key = Bernoulli::new(cfg.keyframe_rate).expect("validated rate");
        let extreme = Bernoulli::new(cfg.extreme_gaze_rate).expect("validated rate");
        let heavy = StudentT::new(1.5).expect("positive degrees of freedom");
        let seg_len = if cfg.keyframe_rate > 0.0 {
            (1.0 / cfg.keyframe_rate).min(cfg.n_frames as f64)
        } else {
            cfg.n_frames as f64
        };
        let normal = |rng: &mut ChaCha8Rng, std: f64| std * rng.sample::<f64, _>(StandardNormal);
        let gaze_target = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let is_extreme = extreme.sample(rng);
            (0..self.gaze_per_eye)
                .map(|_| {
                    let v = if is_extreme {
                        GAZE_STD * heavy.sample(rng)
                    } else {
                        normal(rng, GAZE_STD)
                    };
                    v.clamp(-GAZE_LIMIT, GAZE_LIMIT)
                })
                .collect()
        };
        let mut z: Vec<f64> = (0..self.latent_dim).map(|_| normal(&mut rng, LATENT_STD)).collect();
        let mut g: Vec<f64> = gaze_target(&mut rng);
        let mut vz = vec![0.0; self.latent_dim];
        let mut vg = vec![0.0; self.gaze_per_eye];
        let retarget = |rng: &mut ChaCha8Rng, z: &[f64], g: &[f64], vz: &mut Vec<f64>, vg: &mut Vec<f64>| {
            for (v, zi) in vz.iter_mut().zip(z) {
                *v = (normal(rng, LATENT_STD) - zi) / seg_len;
            }
            let t = gaze_target(rng);
            for ((v, gi), ti) in vg.iter_mut().zip(g).zip(t) {
                *v = (ti - gi) / seg_len;
            }
        };
        retarget(&mut rng, &z, &g, &mut vz, &mut vg);
        let mut frames = Vec::with_capacity(cfg.n_frames);
        for t in 0..cfg.n_frames {
            let mut keyframe = false;
            if t > 0 {
                keyframe = key.sample(&mut rng);
                if keyframe {
                    retarget(&mut rng, &z, &g, &mut vz, &mut vg);
                }
                z.iter_mut().zip(&vz).for_each(|(a, v)| *a += v);
                g.iter_mut().zip(&vg).for_each(|(a, v)| *a += v);
            }
            let jz: Vec<f64> = z.iter().map(|&a| a + normal(&mut rng, cfg.noise_level)).collect();
            let jg: Vec<f64> = g.iter().map(|&a| a + normal(&mut rng, cfg.noise_level)).collect();
            let gaze: Vec<f64> = (0..self.eye_count())
                .flat_map(|e| {
                    let off = if e == 0 { VERGENCE } else { -VERGENCE };
                    jg.iter().enumerate().map(move |(i, &v)| if i == 0 { v + off } else { v })
                })
                .collect();
            let mut frame = self.render_frame(&jz, &gaze, keyframe);
            if cfg.noise_level > 0.0 {
                let views = self.views();
                for view in views {
                    let mut img = frame.images.get(view).expect("rendered view").clone();
                    for p in img.data_mut() {
                        *p += normal(&mut rng, cfg.noise_level);
                    }
                    frame.images.insert(view, img);
                }
            }
            frames.push(frame);
        }
        Ok(frames)
    }
}
