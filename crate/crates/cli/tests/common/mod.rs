#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use histrel_core::ingest::export_dump;
use histrel_core::synth::{synthetic_dump, SynthConfig};

/// Writes the default synthetic dump under `dir` and returns its manifest.
pub fn dump(dir: &Path) -> PathBuf {
    let d = synthetic_dump(&SynthConfig::default());
    export_dump(&d.store, &d.artists_periods, &d.institutions, &dir.join("dump")).unwrap()
}

pub fn histrel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histrel")).args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
