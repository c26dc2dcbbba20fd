pub mod export;
pub mod report;
pub mod restore;
pub mod simulate;
pub mod synth;
pub mod train;

use std::path::Path;

use hsi_core::degrade::{self, NoiseKind, NoiseModel};
use hsi_core::HsiCube;

use crate::error::{CliError, Result};

/// Parse a noise specification: `none`, `gaussian:S`, `noniid:SMAX`,
/// `stripe`, `impulse`, or compositions joined with `+`
/// (e.g. `noniid:70+stripe`). Components are applied in order with seeds
/// derived from the base seed.
pub fn parse_noise_spec(spec: &str, seed: u64) -> Result<Vec<NoiseModel>> {
    let mut models = Vec::new();
    for (i, part) in spec.split('+').enumerate() {
        let part = part.trim();
        if part.is_empty() || part == "none" {
            continue;
        }
        let (name, arg) = match part.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (part, None),
        };
        let parse_level = |a: Option<&str>, what: &str| -> Result<f64> {
            let a = a.ok_or_else(|| {
                CliError::InvalidArgument(format!("{what} needs a level, e.g. {what}:25"))
            })?;
            a.parse::<f64>()
                .map_err(|_| CliError::InvalidArgument(format!("bad {what} level: {a}")))
        };
        let kind = match name {
            "gaussian" => NoiseKind::IidGaussian {
                sigma: parse_level(arg, "gaussian")?,
            },
            "noniid" => NoiseKind::NonIid {
                sigma_max: parse_level(arg, "noniid")?,
            },
            "stripe" => degrade::default_stripe(),
            "impulse" => degrade::default_impulse(),
            other => {
                return Err(CliError::InvalidArgument(format!(
                    "unknown noise component: {other}"
                )))
            }
        };
        models.push(NoiseModel::new(kind, seed.wrapping_add(i as u64)));
    }
    Ok(models)
}

/// Apply a parsed noise chain in order.
pub fn apply_noise_chain(cube: &HsiCube, models: &[NoiseModel]) -> Result<HsiCube> {
    let mut out = cube.clone();
    for model in models {
        out = degrade::add_noise(&out, model)?;
    }
    Ok(out)
}

/// Read a cube, mapping missing files to the dedicated error code.
pub fn read_cube_arg(path: &Path) -> Result<HsiCube> {
    crate::cubefile::read_cube(path)
}
