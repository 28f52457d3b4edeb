//! Enhancer plug-in speaking the length-prefixed embedding protocol on
//! stdin/stdout. Inverts the linear murk blend.
//!
//! Usage: merlion-demurk-enhancer MURK_VECTOR.mef MURK_LEVEL

use std::io::{self, BufReader, BufWriter};
use std::process::ExitCode;

use merlion_core::enhance::mock_demurk;
use merlion_core::format::read_all;
use merlion_core::plugin::{decode_embedding, encode_embedding, read_frame, write_frame};

fn serve(murk: &[f64], level: f64) -> Result<(), String> {
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    while let Some(payload) = read_frame(&mut input).map_err(|e| e.to_string())? {
        let e = decode_embedding(&payload, murk.len()).map_err(|e| e.to_string())?;
        let clean = mock_demurk(&e, murk, level).map_err(|e| e.to_string())?;
        write_frame(&mut output, &encode_embedding(&clean)).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [path, level] = args.as_slice() else {
        eprintln!("usage: merlion-demurk-enhancer MURK_VECTOR.mef MURK_LEVEL");
        return ExitCode::from(2);
    };
    let level: f64 = match level.parse() {
        Ok(l) => l,
        Err(e) => {
            eprintln!("bad murk level {level:?}: {e}");
            return ExitCode::from(2);
        }
    };
    let murk = match read_all(path).map(|r| r.into_iter().next()) {
        Ok(Some(r)) => r.embedding,
        Ok(None) => {
            eprintln!("{path}: no murk vector");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    match serve(&murk, level) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
