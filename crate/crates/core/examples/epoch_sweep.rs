//! A sweep over epoch lengths, written as CSV to stdout. Longer epochs keep
//! pivots current for longer, so more blind writes can be omitted.

use std::error::Error;

use nwr::bench::{sweep, Matrix};

const MATRIX: &str = r#"
protocol = "silo-nwr"
threads = 2
epoch_ms = [10, 40, 160]
duration = 0.2
records = 10000
"#;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let configs = Matrix::parse(MATRIX)?.configs()?;
    let mut csv = Vec::new();
    let errors = sweep(&configs, &mut csv, |_, _| {})?;
    print!("{}", String::from_utf8(csv)?);
    assert!(errors.is_empty());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
