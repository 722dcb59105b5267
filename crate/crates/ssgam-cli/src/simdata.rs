//! Bundled data generators for the examples and the end-to-end test suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StudentT};
use ssgam::{Column, ColumnTable};
use statrs::function::gamma::ln_gamma;

/// Beta(a, b) density.
fn dbeta(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let log_norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    (log_norm + (a - 1.0) * x.max(1e-300).ln() + (b - 1.0) * (1.0 - x).max(1e-300).ln()).exp()
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// The additive-model example dataset: two smooth effects (one interacting
/// with a 3-level factor), three linear effects of increasing strength, a
/// collinear noise covariate, two uniform noise covariates, and a 4-level
/// noise factor. The response is Gaussian-with-t5-noise at the given
/// signal-to-noise ratio.
///
/// Returns the full data table (response column "y" included) plus the
/// noiseless linear predictor.
pub fn gaussian_example(n: usize, snr: f64, seed: u64) -> (ColumnTable, Vec<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let t5 = StudentT::new(5.0).unwrap();

    let sm1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let fsm1: Vec<f64> = sm1.iter().map(|&x| dbeta(x, 7.0, 3.0) / 2.0).collect();
    let sm2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    // Three equal blocks of factor levels 1..3.
    let f_codes: Vec<usize> = (0..n).map(|i| i * 3 / n).collect();
    let f: Vec<String> = f_codes.iter().map(|&c| format!("{}", c + 1)).collect();
    let ff: Vec<f64> = f_codes.iter().map(|&c| (c + 1) as f64 / 2.0).collect();
    let fsm2f: Vec<f64> = (0..n)
        .map(|i| {
            let shape = match f_codes[i] {
                0 => -dbeta(sm2[i], 6.0, 4.0),
                1 => dbeta(sm2[i], 6.0, 9.0),
                _ => dbeta(sm2[i], 9.0, 6.0),
            };
            ff[i] + ff[i] * sm2[i] + shape / 2.0
        })
        .collect();
    let lin1: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let lin2: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let lin3: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let noise1: Vec<f64> = sm1.iter().map(|&v| v + normal.sample(&mut rng)).collect();
    let noise2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let noise3: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let noise4: Vec<String> = (0..n)
        .map(|_| format!("{}", rng.random_range(1..=4)))
        .collect();

    let eta: Vec<f64> = (0..n)
        .map(|i| fsm1[i] + fsm2f[i] + 0.1 * lin1[i] + 0.2 * lin2[i] + 0.3 * lin3[i])
        .collect();
    let noise_scale = sd(&eta) / snr;
    let y: Vec<f64> = eta
        .iter()
        .map(|&e| e + noise_scale * t5.sample(&mut rng))
        .collect();

    let mut table = ColumnTable::new();
    table.insert("y", Column::Numeric(y)).unwrap();
    table.insert("sm1", Column::Numeric(sm1)).unwrap();
    table.insert("sm2", Column::Numeric(sm2)).unwrap();
    table.insert("f", Column::factor_from_strings(&f)).unwrap();
    table.insert("lin1", Column::Numeric(lin1)).unwrap();
    table.insert("lin2", Column::Numeric(lin2)).unwrap();
    table.insert("lin3", Column::Numeric(lin3)).unwrap();
    table.insert("noise1", Column::Numeric(noise1)).unwrap();
    table.insert("noise2", Column::Numeric(noise2)).unwrap();
    table.insert("noise3", Column::Numeric(noise3)).unwrap();
    table
        .insert("noise4", Column::factor_from_strings(&noise4))
        .unwrap();
    (table, eta)
}

/// The formula that goes with [`gaussian_example`].
pub const GAUSSIAN_EXAMPLE_FORMULA: &str =
    "y ~ (sm1 + sm2 + f + lin1)^2 + lin2 + lin3 + noise1 + noise2 + noise3 + noise4";

/// A diabetes-style logistic dataset: strong linear effects for glucose and
/// mass, a moderate nonlinear effect of age, and two inert covariates. The
/// returned table carries the binary response in column "diabetes".
pub fn logistic_example(n: usize, seed: u64) -> (ColumnTable, Vec<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let glucose: Vec<f64> = (0..n)
        .map(|_| 120.0 + 30.0 * normal.sample(&mut rng))
        .collect();
    let mass: Vec<f64> = (0..n)
        .map(|_| 32.0 + 6.0 * normal.sample(&mut rng))
        .collect();
    let age: Vec<f64> = (0..n)
        .map(|_| (22.0 + 40.0 * rng.random::<f64>()).round())
        .collect();
    let pressure: Vec<f64> = (0..n)
        .map(|_| 70.0 + 11.0 * normal.sample(&mut rng))
        .collect();
    let pedigree: Vec<f64> = (0..n)
        .map(|_| (0.08 + rng.random::<f64>()).powi(2) * 2.0)
        .collect();
    let eta: Vec<f64> = (0..n)
        .map(|i| {
            let g = (glucose[i] - 120.0) / 30.0;
            let m = (mass[i] - 32.0) / 6.0;
            let a = (age[i] - 42.0) / 12.0;
            -0.8 + 1.3 * g + 0.9 * m + 0.6 * (a * a - 1.0)
        })
        .collect();
    let y: Vec<f64> = eta
        .iter()
        .map(|&e| {
            let p = 1.0 / (1.0 + (-e).exp());
            (rng.random::<f64>() < p) as u64 as f64
        })
        .collect();
    let mut table = ColumnTable::new();
    table.insert("diabetes", Column::Numeric(y)).unwrap();
    table.insert("glucose", Column::Numeric(glucose)).unwrap();
    table.insert("mass", Column::Numeric(mass)).unwrap();
    table.insert("age", Column::Numeric(age)).unwrap();
    table.insert("pressure", Column::Numeric(pressure)).unwrap();
    table.insert("pedigree", Column::Numeric(pedigree)).unwrap();
    (table, eta)
}

pub const LOGISTIC_EXAMPLE_FORMULA: &str = "diabetes ~ glucose + mass + age + pressure + pedigree";

/// Serialize a table to CSV (stable column order, shortest round-trip
/// floats).
pub fn write_table_csv(table: &ColumnTable, path: &std::path::Path) -> anyhow::Result<()> {
    use std::io::Write;
    let names: Vec<&str> = table.column_names().collect();
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "{}", names.join(","))?;
    for i in 0..table.n_rows() {
        let mut cells = Vec::with_capacity(names.len());
        for name in &names {
            match table.column(name)? {
                Column::Numeric(v) => cells.push(format!("{}", v[i])),
                Column::Factor { codes, levels } => cells.push(levels[codes[i]].clone()),
            }
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
