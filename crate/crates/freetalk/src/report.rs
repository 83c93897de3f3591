//! Line-delimited JSON records for reports and evaluation output.

use std::io::Write;

use freetalk_core::metrics::EvalResult;
use freetalk_core::sample::ProtectionReport;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Serialize)]
pub struct BandRecord {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Serialize)]
pub struct ProtectSummary {
    pub summary: &'static str,
    pub steps: usize,
    pub initial_similarity: f64,
    pub final_similarity: f64,
    pub band: BandRecord,
    pub mask_density: f64,
}

#[derive(Debug, Serialize)]
pub struct PairRecord {
    pub similarity: f64,
    #[serde(rename = "match")]
    pub is_match: bool,
    /// `null` when the protected signal equals the original.
    pub snr_db: Option<f64>,
}

impl From<&EvalResult> for PairRecord {
    fn from(r: &EvalResult) -> Self {
        Self {
            similarity: r.similarity,
            is_match: r.is_match,
            snr_db: r.snr.db(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub stcmr: f64,
    pub stcs: f64,
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord<'a> {
    pub error: &'a str,
    pub message: String,
}

pub fn write_record<W: Write + ?Sized, T: Serialize>(
    out: &mut W,
    record: &T,
) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

pub fn protect_summary(report: &ProtectionReport) -> ProtectSummary {
    ProtectSummary {
        summary: "protect",
        steps: report.losses.len(),
        initial_similarity: report.initial_similarity,
        final_similarity: report.final_similarity,
        band: BandRecord {
            start: report.band.start,
            end: report.band.end,
        },
        mask_density: report.mask_density,
    }
}

/// The full protect report: one step record per optimization step, then
/// the summary.
pub fn write_protect_report<W: Write + ?Sized>(
    out: &mut W,
    report: &ProtectionReport,
) -> std::io::Result<()> {
    for (step, loss) in report.losses.iter().enumerate() {
        write_record(out, &StepRecord { step, loss: *loss })?;
    }
    write_record(out, &protect_summary(report))
}
