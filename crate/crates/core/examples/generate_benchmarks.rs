//! Generate the three synthetic benchmarks, print their marginals and write
//! the CSV splits.
//!
//! cargo run --release --example generate_benchmarks -- [out-dir]

use std::path::PathBuf;

use unimvt::datagen::{generate, save_csv, SynSpec, PRESETS};

fn main() -> unimvt::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&out).map_err(|e| unimvt::Error::io(&out, e))?;
    println!("{:<6} {:>8} {:>8} {:>10} {:>8}  treated doses", "name", "split", "rows", "coupons", "ctr");
    for name in PRESETS {
        let bench = generate(&SynSpec::preset(name)?)?;
        for data in [&bench.train, &bench.test] {
            let (lo, hi) = data.treated_range().unwrap_or((0.0, 0.0));
            println!(
                "{name:<6} {:>8} {:>8} {:>9.2}% {:>8.3}  [{lo:.2}, {hi:.2}]",
                data.split.to_string(),
                data.len(),
                100.0 * data.coupon_ratio(),
                data.avg_ctr()
            );
            save_csv(data, &out.join(format!("{name}_{}.csv", data.split)), &bench.meta.to_lines())?;
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
