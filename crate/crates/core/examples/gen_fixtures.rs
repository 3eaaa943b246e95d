//! Regenerates the committed corpus fixtures: `cargo run -p mft-core --example gen_fixtures -- fixtures/`

use std::path::PathBuf;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixtures".to_string());
    let (g, s) = mft_core::data::fixtures::write_default_fixtures(&PathBuf::from(dir))
        .expect("fixture generation failed");
    println!("wrote {}", g.display());
    println!("wrote {}", s.display());
}
