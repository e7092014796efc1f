use rulkit_core::data::{generate_scenario, save_dataset, Split};
use rulkit_core::error::Result;
use std::path::Path;

pub fn run(scenario: &rulkit_core::data::ScenarioConfig, seed: u64, out: &Path) -> Result<()> {
    let bundle = generate_scenario(scenario, seed)?;
    save_dataset(&bundle, out)?;
    let [train, valid, test] = bundle.window_counts();
    let units = bundle.manifest.units.len();
    let ood = bundle.manifest.units.iter().filter(|u| u.ood_flag).count();
    let test_units = bundle
        .manifest
        .units
        .iter()
        .filter(|u| u.split == Split::Test)
        .count();
    println!(
        "generated {units} units ({} dev, {test_units} test incl. {ood} ood) -> \
         {train} train / {valid} valid / {test} test windows at {}",
        units - test_units,
        out.display()
    );
    Ok(())
}
