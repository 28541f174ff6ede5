use crate::error::CliResult;
use crate::synth::{generate, SyntheticSpec};
use crate::Common;

pub fn run(common: &Common, spec: &SyntheticSpec) -> CliResult<()> {
    let out = common.out_dir()?;
    let m = generate(spec, out)?;
    println!("wrote {} images to {}", m.records.len(), out.display());
    Ok(())
}
