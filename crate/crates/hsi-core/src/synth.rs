//! Deterministic synthetic hyperspectral scenes.
//!
//! Scenes follow a linear mixing model: a few smooth spatial abundance maps
//! (Gaussian blobs over a low-frequency background) weight a matching set of
//! smooth endmember spectra. That gives the strong spatial-spectral
//! correlation the recurrent denoiser is built to exploit, at any requested
//! size, with no dataset dependency.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::HsiCube;

/// Number of endmember/abundance pairs per scene.
const MATERIALS: usize = 4;
/// Gaussian blobs per abundance map.
const BLOBS: usize = 3;

/// Generate one synthetic cube with values in [0, 1].
pub fn synthetic_cube(rows: usize, cols: usize, bands: usize, seed: u64) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // smooth endmember spectra: sums of broad Gaussians over the band axis
    let mut spectra = vec![vec![0.0f64; bands]; MATERIALS];
    for spectrum in &mut spectra {
        let modes = rng.random_range(1..=3usize);
        let base = rng.random_range(0.15..0.45);
        for s in spectrum.iter_mut() {
            *s = base;
        }
        for _ in 0..modes {
            let center = rng.random_range(0.0..bands as f64);
            let width = rng.random_range(0.15..0.6) * bands as f64;
            let amp = rng.random_range(-0.35..0.5);
            for (b, s) in spectrum.iter_mut().enumerate() {
                let d = (b as f64 - center) / width;
                *s += amp * (-0.5 * d * d).exp();
            }
        }
    }

    // abundance maps: positive blob mixtures, normalized per pixel
    let mut maps = vec![vec![0.0f64; rows * cols]; MATERIALS];
    for map in &mut maps {
        let floor = rng.random_range(0.05..0.3);
        for v in map.iter_mut() {
            *v = floor;
        }
        for _ in 0..BLOBS {
            let cy = rng.random_range(0.0..rows as f64);
            let cx = rng.random_range(0.0..cols as f64);
            let sy = rng.random_range(0.12..0.35) * rows as f64;
            let sx = rng.random_range(0.12..0.35) * cols as f64;
            let amp = rng.random_range(0.3..1.0);
            for r in 0..rows {
                for c in 0..cols {
                    let dy = (r as f64 - cy) / sy;
                    let dx = (c as f64 - cx) / sx;
                    map[r * cols + c] += amp * (-0.5 * (dy * dy + dx * dx)).exp();
                }
            }
        }
    }
    // per-pixel normalization so abundances sum to one
    for idx in 0..rows * cols {
        let total: f64 = maps.iter().map(|m| m[idx]).sum();
        for map in &mut maps {
            map[idx] /= total;
        }
    }

    HsiCube::from_fn(rows, cols, bands, |b, r, c| {
        let idx = r * cols + c;
        let v: f64 = (0..MATERIALS).map(|m| maps[m][idx] * spectra[m][b]).sum();
        v.clamp(0.0, 1.0)
    })
}

/// A batch of cubes with consecutive derived seeds.
pub fn synthetic_batch(
    count: usize,
    rows: usize,
    cols: usize,
    bands: usize,
    base_seed: u64,
) -> Vec<HsiCube> {
    (0..count)
        .map(|i| synthetic_cube(rows, cols, bands, base_seed.wrapping_add(i as u64)))
        .collect()
}

/// Training patches cropped from larger scenes, so patch statistics match
/// full-size cubes rather than miniature ones.
pub fn synthetic_patches(
    count: usize,
    patch: (usize, usize, usize),
    scene: (usize, usize),
    base_seed: u64,
) -> Vec<HsiCube> {
    let (prows, pcols, bands) = patch;
    let (srows, scols) = scene;
    assert!(srows >= prows && scols >= pcols, "scene smaller than patch");
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    // a few crops per scene
    let per_scene = 4usize;
    let scenes = count.div_ceil(per_scene);
    let mut out = Vec::with_capacity(count);
    'outer: for s in 0..scenes {
        let cube = synthetic_cube(srows, scols, bands, base_seed.wrapping_add(1000 + s as u64));
        for _ in 0..per_scene {
            let r0 = rng.random_range(0..=srows - prows);
            let c0 = rng.random_range(0..=scols - pcols);
            out.push(HsiCube::from_fn(prows, pcols, bands, |b, r, c| {
                cube.get(b, r0 + r, c0 + c)
            }));
            if out.len() == count {
                break 'outer;
            }
        }
    }
    out
}
