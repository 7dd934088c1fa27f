//! Write a synthetic annotated dataset.
//!
//! ```text
//! cargo run --release --example synth_dataset -- <out-dir> [count] [persons] [seed]
//! ```

use std::path::PathBuf;

use faceage::synth::{generate, write_dataset, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().ok_or("usage: synth_dataset <out-dir> [count] [persons] [seed]")?);
    let count = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let persons = args.next().map(|s| s.parse()).transpose()?.unwrap_or(count);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let cfg = SynthConfig {
        count,
        persons,
        ..SynthConfig::default()
    };
    let faces = generate(&cfg, seed)?;
    let manifest = write_dataset(&out, &faces)?;
    println!("wrote {} faces, manifest {}", faces.len(), manifest.display());
    Ok(())
}
