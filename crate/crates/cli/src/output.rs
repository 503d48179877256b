//! Result files, 17-digit JSON and the run manifest.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::config::Format;
use crate::error::CliError;

/// Pretty JSON whose floats carry 17 significant digits.
struct ExactFloats<'a>(PrettyFormatter<'a>);

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// SHA-256 of the raw config text.
    pub config_sha256: String,
    pub master_seed: u64,
    pub threads: usize,
    pub paper_averaging: bool,
    pub wall_clock_seconds: f64,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<String>,
    pub converged: bool,
}

/// Output directory, the formats to emit and what has been written so far.
pub struct Sink {
    dir: PathBuf,
    formats: Vec<Format>,
    written: Vec<String>,
    stages: Vec<StageTiming>,
    started: Instant,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl Sink {
    pub fn new(dir: PathBuf, formats: Vec<Format>) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self {
            dir,
            formats,
            written: Vec::new(),
            stages: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn stage<T>(
        &mut self,
        stage: &str,
        f: impl FnOnce() -> Result<T, CliError>,
    ) -> Result<T, CliError> {
        let t = Instant::now();
        let out = f()?;
        self.stages.push(StageTiming {
            stage: stage.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        f(&mut w)?;
        w.flush().map_err(io_err(&path))?;
        self.written.push(name.into());
        Ok(())
    }

    pub fn csv(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> mfsmp_core::Result<()>,
    ) -> Result<(), CliError> {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        self.write_with(name, |w| Ok(f(w)?))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        if !self.wants(Format::Json) {
            return Ok(());
        }
        let bytes = to_json(value)?;
        let path = self.dir.join(name);
        self.write_with(name, |w| w.write_all(&bytes).map_err(io_err(&path)))
    }

    /// Writes `manifest.json`; always emitted regardless of `formats`.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<(), CliError> {
        manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        manifest.stages = std::mem::take(&mut self.stages);
        manifest.outputs = std::mem::take(&mut self.written);
        let bytes = to_json(&manifest)?;
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes).map_err(io_err(&path))
    }
}
