//! Round trips through the PGM and CSV formats and the layered `key = value`
//! configuration.

use tgv_core::config::{default_profile, Mode, RunConfig};
use tgv_core::io::{read_field_csv, read_image, write_field_csv, write_pgm, PgmDepth};
use tgv_core::synth::{make_phantom, PhantomKind};
use tgv_core::{GridMode, GridSpec};

fn main() -> tgv_core::Result<()> {
    let dir = std::env::temp_dir().join(format!("tgv-io-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    let u = make_phantom(PhantomKind::Oscillatory, GridSpec::primal_dual(20, 30)?);
    for depth in [PgmDepth::Eight, PgmDepth::Sixteen] {
        let path = dir.join(format!("u{}.pgm", depth.maxval()));
        write_pgm(&path, &u, depth)?;
        let back = read_image(&path, GridMode::PrimalDual)?;
        println!("{}: max quantization error {:.2e}", path.display(), back.sub(&u).max_abs());
    }
    let csv = dir.join("u.csv");
    write_field_csv(&csv, &u)?;
    println!("{}: exact round trip {}", csv.display(), read_field_csv(&csv, GridMode::PrimalDual)? == u);

    println!("\n{}", default_profile(Mode::DenoisePd));
    let mut cfg = RunConfig::from_text("[data]\nsigma2 = 0.005\n\n[pd]\nalpha0 = 0.4\n")?;
    cfg.set_dotted("pd.mu=0.05")?;
    cfg.validate(Mode::DenoisePd)?;
    println!("layered: sigma2 {} alpha0 {} mu {}", cfg.data.sigma2, cfg.pd_weights.alpha0, cfg.pd.mu);

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
