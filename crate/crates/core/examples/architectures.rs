//! Parameter counts and frequency chains for every model variant.

use crgan::arch::{ArchConfig, MaskNet, ModelVariant};

fn main() -> crgan::Result<()> {
    let arch = ArchConfig::tiny();
    let chain = arch.generator_spec(ModelVariant::WCrgan).topology()?.frequency_chain();
    println!("encoder frequency chain {chain:?}");
    for v in ModelVariant::ALL {
        let g = MaskNet::build(v, &arch, 0)?;
        let d = match v.loss_family() {
            Some(f) => format!("{} D inputs, {} D params", f.disc_input_channels(), {
                let spec = arch.discriminator_spec(f);
                crgan::arch::Discriminator::new(spec, 0)?.num_params()
            }),
            None => "no discriminator".into(),
        };
        println!("{:<12} G params {:>8}  {d}", v.name(), g.params().numel());
    }
    Ok(())
}
