//! Builds the static HTML summary for everything the other examples wrote.
//!
//!     cargo run --release --example run_report -- [runs_dir] [out.html]

use std::path::PathBuf;

fn main() -> latent_ogm::Result<()> {
    let mut args = std::env::args().skip(1);
    let runs = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out".into()));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| runs.join("report.html"));
    latent_ogm::html_report::write_report(&runs, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
