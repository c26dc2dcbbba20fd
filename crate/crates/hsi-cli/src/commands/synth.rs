use std::path::PathBuf;

use clap::Args;
use hsi_core::synth::synthetic_cube;

use crate::cubefile::write_cube;
use crate::error::Result;

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: SynthArgs) -> Result<()> {
    let cube = synthetic_cube(args.rows, args.cols, args.bands, args.seed);
    write_cube(&cube, &args.out)?;
    println!(
        "wrote {}x{}x{} cube to {}",
        args.rows,
        args.cols,
        args.bands,
        args.out.display()
    );
    Ok(())
}
