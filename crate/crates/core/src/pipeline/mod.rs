//! Experiment orchestration: configuration, seeded generation with bounded
//! concurrency, dataset writing and metric runs.

mod config;
mod evaluate;
mod generate;
pub mod seeds;

pub use config::{
    ArmConfig, ArmFamily, BackendKind, BackendSettings, ExperimentConfig, MetricsSettings,
    PaletteSettings, PerlinSettings, BASELINE_STRENGTH, DEFAULT_GUIDANCE, DEFAULT_PROMPT,
    DEFAULT_STRENGTH, ENV_BACKEND_URL, ENV_OUTPUT_ROOT,
};
pub use evaluate::{merge_reports, run_metrics, REPORT_FILE, SUMMARY_FILE};
pub use generate::{default_palette, run_generate, GenerateSummary};

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use crate::annotate::AnnotateError;
use crate::backend::BackendError;
use crate::composer::ComposeError;
use crate::maskgen::MaskError;
use crate::metrics::MetricsError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown arm `{0}`")]
    UnknownArm(String),
    #[error("{failed} of {total} items failed (limit {limit:.1}%); last error: {last}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit: f64,
        last: String,
    },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 2 config, 3 backend failures over threshold, 4 missing metric input.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::UnknownArm(_) => 2,
            PipelineError::Mask(MaskError::Unsatisfiable(_) | MaskError::InvalidSpec(_)) => 2,
            PipelineError::TooManyFailures { .. } | PipelineError::Backend(_) => 3,
            PipelineError::MissingInput(_) => 4,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Io { path, source }
}

/// Applies `f` to `0..count` on `workers` threads and hands each result to
/// `sink` in index order. Results arriving early wait in a reorder buffer.
pub(crate) fn ordered_map<T, F, S>(count: usize, workers: usize, f: F, mut sink: S) -> Result<(), PipelineError>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
    S: FnMut(usize, T) -> Result<(), PipelineError>,
{
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, count.max(1));
    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, f) = (&next, &f);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= count {
                    break;
                }
                if tx.send((i, f(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = std::collections::BTreeMap::new();
        let mut want = 0;
        for (i, out) in rx {
            pending.insert(i, out);
            while let Some(out) = pending.remove(&want) {
                if let Err(e) = sink(want, out) {
                    // Stop handing out work; running items finish and are dropped.
                    next.store(count, Ordering::SeqCst);
                    return Err(e);
                }
                want += 1;
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_map_preserves_order() {
        let mut seen = Vec::new();
        ordered_map(
            100,
            8,
            |i| {
                thread::sleep(std::time::Duration::from_micros(((i * 37) % 11) as u64 * 50));
                i * 2
            },
            |i, v| {
                seen.push((i, v));
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen, (0..100).map(|i| (i, i * 2)).collect::<Vec<_>>());
    }

    #[test]
    fn ordered_map_stops_on_sink_error() {
        let mut n = 0;
        let r = ordered_map(50, 4, |i| i, |i, _| {
            n += 1;
            if i == 3 {
                Err(PipelineError::Config("stop".into()))
            } else {
                Ok(())
            }
        });
        assert!(r.is_err());
        assert_eq!(n, 4);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::UnknownArm("x".into()).exit_code(), 2);
        assert_eq!(PipelineError::MissingInput("m".into()).exit_code(), 4);
        let e = PipelineError::TooManyFailures {
            failed: 2,
            total: 4,
            limit: 5.0,
            last: "x".into(),
        };
        assert_eq!(e.exit_code(), 3);
        assert_eq!(PipelineError::Mask(MaskError::Unsatisfiable("u".into())).exit_code(), 2);
    }
}
