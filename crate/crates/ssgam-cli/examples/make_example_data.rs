//! Writes the bundled example datasets and ready-to-run fit configs into
//! ./example-data (or the directory given as the first argument).
//!
//! Usage: cargo run -p ssgam-cli --example make_example_data [-- DIR]

use std::path::PathBuf;

use ssgam_cli::simdata;

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("example-data"));
    std::fs::create_dir_all(&dir)?;

    let (gauss, _) = simdata::gaussian_example(200, 3.0, 1312424);
    simdata::write_table_csv(&gauss, &dir.join("additive.csv"))?;
    std::fs::write(
        dir.join("additive.toml"),
        format!(
            "formula = \"{}\"\nfamily = \"gaussian\"\ndata = \"additive.csv\"\noutput = \"additive-fit\"\nseed = 1312424\n",
            simdata::GAUSSIAN_EXAMPLE_FORMULA
        ),
    )?;

    let (logistic, _) = simdata::logistic_example(524, 1109712439);
    simdata::write_table_csv(&logistic, &dir.join("logistic.csv"))?;
    std::fs::write(
        dir.join("logistic.toml"),
        format!(
            "formula = \"{}\"\nfamily = \"binomial\"\ndata = \"logistic.csv\"\noutput = \"logistic-fit\"\nseed = 7\n\n[mcmc]\nn_chains = 4\nchain_length = 1000\nburnin = 500\nthin = 5\n",
            simdata::LOGISTIC_EXAMPLE_FORMULA
        ),
    )?;

    println!("example data written to {}", dir.display());
    println!("fit with: ssgam fit --config {}/additive.toml", dir.display());
    Ok(())
}
