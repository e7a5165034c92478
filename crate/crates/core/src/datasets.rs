//! Seeded synthetic datasets with ground-truth labels: isotropic blobs,
//! nested rings and interlocking horseshoes, optionally overlaid with
//! uniform noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::seed::{stream, STREAM_GEN};

/// Label carried by uniform noise points.
pub const NOISE_LABEL: i64 = -1;

/// Noise fraction used by presets named with a `+noise` suffix.
pub const DEFAULT_PRESET_NOISE: f64 = 0.1;

/// Axis-aligned box, one `[low, high]` interval per dimension.
pub type BoundingBox = Vec<[f64; 2]>;

/// Full description of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Blobs {
        centers: Vec<Vec<f64>>,
        /// Standard deviation per blob.
        std: Vec<f64>,
        n_per: usize,
        noise_frac: f64,
        bbox: BoundingBox,
    },
    Rings {
        radii: Vec<f64>,
        n_per: usize,
        radial_jitter: f64,
        noise_frac: f64,
        bbox: BoundingBox,
    },
    Horseshoes {
        arcs: usize,
        n_per: usize,
        jitter: f64,
        /// Shift between consecutive arcs; odd arcs are flipped.
        offset: [f64; 2],
        noise_frac: f64,
        bbox: BoundingBox,
    },
}

impl GeneratorSpec {
    pub fn noise_frac(&self) -> f64 {
        match self {
            GeneratorSpec::Blobs { noise_frac, .. }
            | GeneratorSpec::Rings { noise_frac, .. }
            | GeneratorSpec::Horseshoes { noise_frac, .. } => *noise_frac,
        }
    }

    pub fn set_noise_frac(&mut self, value: f64) {
        match self {
            GeneratorSpec::Blobs { noise_frac, .. }
            | GeneratorSpec::Rings { noise_frac, .. }
            | GeneratorSpec::Horseshoes { noise_frac, .. } => *noise_frac = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub points: DataMatrix,
    pub labels: Vec<i64>,
    pub spec: GeneratorSpec,
}

impl LabeledDataset {
    pub fn n_groups(&self) -> usize {
        let mut l: Vec<i64> = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    }
}

fn check_noise(noise_frac: f64, bbox: &BoundingBox, d: usize) -> Result<()> {
    if !(0.0..1.0).contains(&noise_frac) {
        return Err(Error::Domain(format!("noise fraction must lie in [0, 1), got {noise_frac}")));
    }
    if noise_frac > 0.0 {
        if bbox.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: bbox.len() });
        }
        if bbox.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::Domain("noise box bounds must be increasing".into()));
        }
    }
    Ok(())
}

fn add_noise<R: Rng>(
    rows: &mut Vec<Vec<f64>>,
    labels: &mut Vec<i64>,
    noise_frac: f64,
    bbox: &BoundingBox,
    rng: &mut R,
) {
    let count = (noise_frac * rows.len() as f64).round() as usize;
    for _ in 0..count {
        rows.push(bbox.iter().map(|[lo, hi]| rng.random_range(*lo..*hi)).collect());
        labels.push(NOISE_LABEL);
    }
}

/// Generates the dataset described by `spec`.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<LabeledDataset> {
    let mut rng = stream(seed, &[STREAM_GEN]);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    match spec {
        GeneratorSpec::Blobs { centers, std, n_per, noise_frac, bbox } => {
            if centers.is_empty() || *n_per == 0 {
                return Err(Error::InvalidArgument("blobs need at least one center and point".into()));
            }
            if std.len() != centers.len() || std.iter().any(|s| !(*s >= 0.0)) {
                return Err(Error::InvalidArgument("one nonnegative std per center required".into()));
            }
            let d = centers[0].len();
            if d == 0 || centers.iter().any(|c| c.len() != d) {
                return Err(Error::InvalidArgument("centers must share a positive dimension".into()));
            }
            check_noise(*noise_frac, bbox, d)?;
            for (label, (c, s)) in centers.iter().zip(std).enumerate() {
                for _ in 0..*n_per {
                    rows.push(c.iter().map(|m| m + s * std_normal.sample(&mut rng)).collect());
                    labels.push(label as i64);
                }
            }
            add_noise(&mut rows, &mut labels, *noise_frac, bbox, &mut rng);
        }
        GeneratorSpec::Rings { radii, n_per, radial_jitter, noise_frac, bbox } => {
            if radii.is_empty() || *n_per == 0 {
                return Err(Error::InvalidArgument("rings need at least one radius and point".into()));
            }
            if radii.windows(2).any(|w| !(w[0] < w[1])) || !(radii[0] > 0.0) {
                return Err(Error::InvalidArgument("ring radii must be positive and increasing".into()));
            }
            if !(*radial_jitter >= 0.0) {
                return Err(Error::InvalidArgument("radial jitter must be nonnegative".into()));
            }
            check_noise(*noise_frac, bbox, 2)?;
            for (label, r) in radii.iter().enumerate() {
                for _ in 0..*n_per {
                    let angle = rng.random_range(0.0..2.0 * PI);
                    let radius = r + radial_jitter * std_normal.sample(&mut rng);
                    rows.push(vec![radius * angle.cos(), radius * angle.sin()]);
                    labels.push(label as i64);
                }
            }
            add_noise(&mut rows, &mut labels, *noise_frac, bbox, &mut rng);
        }
        GeneratorSpec::Horseshoes { arcs, n_per, jitter, offset, noise_frac, bbox } => {
            if *arcs == 0 || *n_per == 0 {
                return Err(Error::InvalidArgument("horseshoes need at least one arc and point".into()));
            }
            if !(*jitter >= 0.0) {
                return Err(Error::InvalidArgument("jitter must be nonnegative".into()));
            }
            check_noise(*noise_frac, bbox, 2)?;
            for arc in 0..*arcs {
                let flip = if arc % 2 == 0 { 1.0 } else { -1.0 };
                let cx = offset[0] * arc as f64;
                let cy = if arc % 2 == 0 { 0.0 } else { offset[1] };
                for _ in 0..*n_per {
                    let t = rng.random_range(0.0..PI);
                    let x = cx + t.cos() + jitter * std_normal.sample(&mut rng);
                    let y = cy + flip * t.sin() + jitter * std_normal.sample(&mut rng);
                    rows.push(vec![x, y]);
                    labels.push(arc as i64);
                }
            }
            add_noise(&mut rows, &mut labels, *noise_frac, bbox, &mut rng);
        }
    }
    Ok(LabeledDataset { points: DataMatrix::from_rows(&rows)?, labels, spec: spec.clone() })
}

/// Isotropic Gaussian blobs around `centers`, `n_per` points each.
pub fn gen_blobs(centers: &[Vec<f64>], std: &[f64], n_per: usize, seed: u64) -> Result<LabeledDataset> {
    generate(
        &GeneratorSpec::Blobs {
            centers: centers.to_vec(),
            std: std.to_vec(),
            n_per,
            noise_frac: 0.0,
            bbox: vec![],
        },
        seed,
    )
}

/// Concentric rings with Gaussian radial jitter and optional uniform noise.
pub fn gen_nested_rings(
    radii: &[f64],
    n_per: usize,
    radial_jitter: f64,
    noise_frac: f64,
    bbox: BoundingBox,
    seed: u64,
) -> Result<LabeledDataset> {
    generate(
        &GeneratorSpec::Rings { radii: radii.to_vec(), n_per, radial_jitter, noise_frac, bbox },
        seed,
    )
}

/// Interlocking unit half-circles with Gaussian jitter.
pub fn gen_horseshoes(
    arcs: usize,
    n_per: usize,
    jitter: f64,
    offset: [f64; 2],
    noise_frac: f64,
    bbox: BoundingBox,
    seed: u64,
) -> Result<LabeledDataset> {
    generate(&GeneratorSpec::Horseshoes { arcs, n_per, jitter, offset, noise_frac, bbox }, seed)
}

/// Names accepted by [`preset`], without the optional `+noise` suffix.
pub const PRESETS: [&str; 8] = [
    "grains",
    "big-blobs",
    "medium-blobs",
    "small-blobs",
    "horseshoes2",
    "horseshoes3",
    "rings2",
    "rings3",
];

fn square(half: f64) -> BoundingBox {
    vec![[-half, half], [-half, half]]
}

fn triangle(side: f64) -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![side, 0.0], vec![side / 2.0, side * 3f64.sqrt() / 2.0]]
}

/// Generator spec of a named preset. A `+noise` suffix selects
/// [`DEFAULT_PRESET_NOISE`]; an explicit `noise` overrides either.
pub fn preset(name: &str, noise: Option<f64>) -> Result<GeneratorSpec> {
    let (base, suffix_noise) = match name.strip_suffix("+noise") {
        Some(b) => (b, DEFAULT_PRESET_NOISE),
        None => (name, 0.0),
    };
    let noise_frac = noise.unwrap_or(suffix_noise);
    let blobs = |centers: Vec<Vec<f64>>, std: f64, n_per: usize, pad: f64| {
        let lo = |k: usize| centers.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min) - pad;
        let hi = |k: usize| centers.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max) + pad;
        GeneratorSpec::Blobs {
            std: vec![std; centers.len()],
            bbox: vec![[lo(0), hi(0)], [lo(1), hi(1)]],
            centers,
            n_per,
            noise_frac,
        }
    };
    let spec = match base {
        "grains" => blobs(triangle(10.0), 1.0, 200, 4.0),
        "big-blobs" => blobs(triangle(3.0), 1.0, 200, 4.0),
        "medium-blobs" => blobs(triangle(7.0), 1.0, 200, 4.0),
        "small-blobs" => {
            let centers = (0..5)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / 5.0;
                    vec![5.0 * a.cos(), 5.0 * a.sin()]
                })
                .collect();
            blobs(centers, 0.5, 150, 2.0)
        }
        "horseshoes2" | "horseshoes3" => {
            let arcs = if base == "horseshoes2" { 2 } else { 3 };
            GeneratorSpec::Horseshoes {
                arcs,
                n_per: 300,
                jitter: 0.05,
                offset: [1.0, 0.5],
                noise_frac,
                bbox: vec![[-1.5, arcs as f64 + 0.5], [-1.0, 1.5]],
            }
        }
        "rings2" => GeneratorSpec::Rings {
            radii: vec![0.5, 1.0],
            n_per: 500,
            radial_jitter: 0.05,
            noise_frac,
            bbox: square(1.3),
        },
        "rings3" => GeneratorSpec::Rings {
            radii: vec![1.0, 2.0, 3.0],
            n_per: 800,
            radial_jitter: 0.1,
            noise_frac,
            bbox: square(3.6),
        },
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(spec)
}
