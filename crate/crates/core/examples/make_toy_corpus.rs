//! Writes the synthetic shapes corpus used by the toy configuration.
//!
//! ```text
//! cargo run --release --example make_toy_corpus -- OUT_DIR [TRAIN_PER_CLASS] [TEST_PER_CLASS] [SIZE] [SEED]
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(out) = args.first().map(PathBuf::from) else {
        eprintln!("usage: make_toy_corpus OUT_DIR [TRAIN_PER_CLASS] [TEST_PER_CLASS] [SIZE] [SEED]");
        return ExitCode::FAILURE;
    };
    let number = |i: usize, default: u64| -> Result<u64, String> {
        args.get(i).map_or(Ok(default), |s| s.parse().map_err(|e| format!("argument {i} ({s:?}): {e}")))
    };
    let parsed = (|| Ok::<_, String>((number(1, 100)?, number(2, 25)?, number(3, 64)?, number(4, 0)?)))();
    let (train, test, size, seed) = match parsed {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pcvit::synthetic::write_toy_corpus(&out, train as usize, test as usize, size as usize, seed) {
        Ok(()) => {
            println!("wrote {} train and {} test images per class to {}", train, test, out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
