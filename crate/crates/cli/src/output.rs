use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use weakkam::{DiscreteMeasure64, GridFunction64};

pub const THREADS_VAR: &str = "WEAKKAM_THREADS";

/// Parses `WEAKKAM_THREADS` (default 1).
pub fn threads() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(1),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => anyhow::bail!("{THREADS_VAR} must be a positive integer, got '{s}'"),
        },
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub subcommand: String,
    pub config: Value,
    pub model_file: Option<String>,
    pub model_sha256: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub threads: usize,
    pub output_dir: String,
    pub outputs: Vec<String>,
    pub phases: Vec<Phase>,
    pub wall_clock_seconds: f64,
}

/// Output directory, timings and the files written by one run.
pub struct Run {
    pub id: String,
    subcommand: String,
    config: Value,
    model: Option<(PathBuf, String)>,
    seed: Option<u64>,
    threads: usize,
    dir: PathBuf,
    plot: bool,
    outputs: Vec<String>,
    phases: Vec<Phase>,
    start: Instant,
}

impl Run {
    /// The run id hashes the subcommand, the resolved configuration, the model
    /// hash and the tool version, so identical inputs share a directory.
    pub fn new(
        subcommand: &str,
        config: Value,
        model: Option<(PathBuf, String)>,
        seed: Option<u64>,
        out: Option<&Path>,
        plot: bool,
    ) -> Result<Self> {
        let threads = threads()?;
        let mut h = Sha256::new();
        h.update(subcommand.as_bytes());
        h.update(serde_json::to_vec(&config)?);
        if let Some((_, hash)) = &model {
            h.update(hash.as_bytes());
        }
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        let id: String = h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect();
        let dir = match out {
            Some(p) => p.to_path_buf(),
            None => PathBuf::from("out").join(&id),
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Run {
            id,
            subcommand: subcommand.to_string(),
            config,
            model,
            seed,
            threads,
            dir,
            plot,
            outputs: Vec::new(),
            phases: Vec::new(),
            start: Instant::now(),
        })
    }

    pub fn phase<R>(&mut self, name: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.phases.push(Phase { name: name.to_string(), seconds: t.elapsed().as_secs_f64() });
        log::info!("{name}: {:.3}s", t.elapsed().as_secs_f64());
        r
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn field(&mut self, stem: &str, field: &GridFunction64) -> Result<()> {
        let name = format!("{stem}.csv");
        weakkam::io::write_field(self.create(&name)?, field)?;
        if self.plot {
            let body = if field.grid().dim() == 1 {
                format!("set xlabel 'x'\nplot '{name}' using 1:2 with lines title '{stem}'\n")
            } else {
                format!(
                    "set xlabel 'x'\nset ylabel 'y'\nset view map\nset dgrid3d {n},{n}\n\
                     splot '{name}' using 1:2:3 with pm3d title '{stem}'\n",
                    n = field.grid().n()
                )
            };
            self.script(stem, &body)?;
        }
        Ok(())
    }

    pub fn measure(&mut self, stem: &str, mu: &DiscreteMeasure64) -> Result<()> {
        let name = format!("{stem}.csv");
        weakkam::io::write_measure(self.create(&name)?, mu)?;
        if self.plot && mu.grid().dim() == 1 {
            let body = format!(
                "set xlabel 'x'\nset ylabel 'v'\n\
                 plot '{name}' using 1:2:(sqrt($3)*5) with points pt 7 ps variable title '{stem}'\n"
            );
            self.script(stem, &body)?;
        }
        Ok(())
    }

    pub fn csv_rows(&mut self, stem: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(&format!("{stem}.csv"))?);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn script(&mut self, stem: &str, body: &str) -> Result<()> {
        let mut f = self.create(&format!("{stem}.gp"))?;
        writeln!(f, "# run {}", self.id)?;
        write!(f, "set datafile separator ','\nset key autotitle columnhead\n{body}")?;
        Ok(())
    }

    /// Writes `report.json` and `manifest.json` and prints the report.
    pub fn finish(mut self, report: Value) -> Result<()> {
        let mut report = report;
        if let Value::Object(map) = &mut report {
            map.insert("run_id".into(), Value::String(self.id.clone()));
        }
        let text = serde_json::to_string_pretty(&report)?;
        fs::write(self.dir.join("report.json"), format!("{text}\n"))?;
        self.outputs.push("report.json".into());
        let manifest = RunManifest {
            run_id: self.id.clone(),
            subcommand: self.subcommand.clone(),
            config: self.config.clone(),
            model_file: self.model.as_ref().map(|(p, _)| p.display().to_string()),
            model_sha256: self.model.as_ref().map(|(_, h)| h.clone()),
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            threads: self.threads,
            output_dir: self.dir.display().to_string(),
            outputs: std::mem::take(&mut self.outputs),
            phases: std::mem::take(&mut self.phases),
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
        };
        fs::write(
            self.dir.join("manifest.json"),
            format!("{}\n", serde_json::to_string_pretty(&manifest)?),
        )?;
        let mut stdout = std::io::stdout().lock();
        match writeln!(stdout, "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        }
    }
}
