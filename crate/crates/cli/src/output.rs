//! Output files: CSV reports and JSONL transcripts. Every file starts
//! with the implementation version and the full resolved configuration,
//! so a report is reproducible from its own bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use orsim_core::{RunTranscript, SimError};

use crate::config::ResolvedConfig;

pub struct OutputWriter {
    dir: PathBuf,
    /// `# version:` / `# config:` preamble written at the top of files.
    preamble: String,
}

impl OutputWriter {
    pub fn new(cfg: &ResolvedConfig) -> Result<Self, SimError> {
        std::fs::create_dir_all(&cfg.out_dir)?;
        let echo = serde_json::to_string(cfg)
            .map_err(|e| SimError::runtime(format!("config echo: {e}")))?;
        Ok(OutputWriter {
            dir: cfg.out_dir.clone(),
            preamble: format!("# version: {}\n# config: {echo}\n", cfg.version),
        })
    }

    /// Open a CSV report: preamble comments, then exactly one header line.
    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvFile, SimError> {
        let mut file = BufWriter::new(File::create(self.dir.join(name))?);
        file.write_all(self.preamble.as_bytes())?;
        let mut writer = csv::Writer::from_writer(file);
        writer
            .write_record(header)
            .map_err(|e| SimError::runtime(format!("csv header: {e}")))?;
        Ok(CsvFile { writer })
    }

    /// Write one run's event log: a meta line with the config echo, then
    /// one event per line in transcript order.
    pub fn jsonl_transcript(&self, name: &str, t: &RunTranscript) -> Result<(), SimError> {
        let mut file = BufWriter::new(File::create(self.dir.join(name))?);
        let strategy = serde_json::to_string(&t.strategy)
            .map_err(|e| SimError::runtime(format!("meta line: {e}")))?;
        // The preamble is comment-styled for CSV; JSONL gets a meta object.
        let echo = self
            .preamble
            .lines()
            .nth(1)
            .and_then(|l| l.strip_prefix("# config: "))
            .unwrap_or("{}");
        writeln!(
            file,
            "{{\"kind\":\"meta\",\"config\":{echo},\"oracle_mode\":{},\"strategy\":{strategy}}}",
            t.oracle_mode
        )?;
        t.write_events_jsonl(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

pub struct CsvFile {
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvFile {
    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<(), SimError> {
        self.writer
            .write_record(fields)
            .map_err(|e| SimError::runtime(format!("csv row: {e}")))
    }

    pub fn finish(mut self) -> Result<(), SimError> {
        self.writer
            .flush()
            .map_err(|e| SimError::runtime(format!("csv flush: {e}")))
    }
}
