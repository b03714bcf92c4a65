//! Online piecewise decoding.
//!
//! The decoder keeps the running score pair and the backpointers of the
//! observations since the last commit. Whenever the current step is a
//! strong node in state `s`, the buffered part of the path is fixed for
//! every continuation: it is backtracked from `s`, emitted as a segment and
//! the buffer is cleared. From then on the path restarts from the
//! transition row of `s`.
//!
//! Scores are carried forward unnormalised, exactly as the batch decoder
//! computes them. After a strong `s`-node both next-step maxima come from
//! `s`, so continuing the recursion is the same as restarting it from the
//! row of `s` up to a constant offset, and the segments agree with batch
//! decoding bit for bit.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Observation, ObservationError, TwoStateHmm};
use crate::nodes::{classify_step, NodeKind};
use crate::state::{path_string, State};
use crate::viterbi::{self, Backpointer, ScorePair};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error("ImpossibleObservation: every path has zero likelihood at time {time}")]
    ImpossibleObservation { time: usize },
    #[error("Poisoned: the stream hit an impossible observation earlier")]
    Poisoned,
    #[error("Finalized: the stream was already flushed")]
    Finalized,
    #[error("EmptyBuffer: nothing buffered to flush")]
    EmptyBuffer,
}

impl StreamError {
    pub fn code(&self) -> &'static str {
        match self {
            StreamError::ImpossibleObservation { .. } => "ImpossibleObservation",
            StreamError::Poisoned => "Poisoned",
            StreamError::Finalized => "Finalized",
            StreamError::EmptyBuffer => "EmptyBuffer",
        }
    }
}

/// A committed (or flushed) piece of the alignment covering times
/// `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub states: Vec<State>,
    /// State of the strong node closing the segment; `None` for a flushed
    /// tail.
    pub node_state: Option<State>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Live,
    Poisoned,
    Finalized,
}

/// Summary of a stream run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamStats {
    pub observations: usize,
    /// Observations committed at strong nodes (flushed tail excluded).
    pub committed: usize,
    pub committed_fraction: f64,
    /// Length of the flushed tail; its states are not final.
    pub flushed: usize,
    pub segments: usize,
    pub strong_nodes: usize,
    pub node_counts: BTreeMap<&'static str, usize>,
    /// Observations strictly between consecutive boundaries, where the
    /// boundaries are time 0, every strong node and the flush point.
    pub max_gap: usize,
    pub mean_gap: f64,
    pub peak_buffer: usize,
}

#[derive(Debug, Clone)]
pub struct StreamDecoder {
    model: TwoStateHmm,
    scores: Option<ScorePair>,
    backpointers: Vec<Backpointer>,
    restart_state: Option<State>,
    committed: usize,
    flushed: usize,
    status: Status,
    node_counts: [usize; 6],
    segments: usize,
    gap_sum: usize,
    gap_count: usize,
    max_gap: usize,
    peak_buffer: usize,
}

impl StreamDecoder {
    pub fn new(model: TwoStateHmm) -> Self {
        StreamDecoder {
            model,
            scores: None,
            backpointers: Vec::new(),
            restart_state: None,
            committed: 0,
            flushed: 0,
            status: Status::Live,
            node_counts: [0; 6],
            segments: 0,
            gap_sum: 0,
            gap_count: 0,
            max_gap: 0,
            peak_buffer: 0,
        }
    }

    pub fn model(&self) -> &TwoStateHmm {
        &self.model
    }

    /// Observations consumed so far.
    pub fn time(&self) -> usize {
        self.scores.map_or(0, |s| s.time)
    }

    pub fn committed_len(&self) -> usize {
        self.committed
    }

    pub fn buffered_len(&self) -> usize {
        self.backpointers.len()
    }

    pub fn current_scores(&self) -> Option<ScorePair> {
        self.scores
    }

    /// Initial distribution of the open segment: the model's own, or the
    /// transition row of the last strong node's state.
    pub fn segment_initial(&self) -> [f64; 2] {
        match self.restart_state {
            None => self.model.initial_probs(),
            Some(s) => self.model.transitions()[s.index()],
        }
    }

    fn check_live(&self) -> Result<(), StreamError> {
        match self.status {
            Status::Live => Ok(()),
            Status::Poisoned => Err(StreamError::Poisoned),
            Status::Finalized => Err(StreamError::Finalized),
        }
    }

    fn record_gap(&mut self, segment_len: usize) {
        let gap = segment_len - 1;
        self.gap_sum += gap;
        self.gap_count += 1;
        self.max_gap = self.max_gap.max(gap);
    }

    /// Consumes one observation; returns the segment it commits, if any.
    pub fn push(&mut self, x: &Observation) -> Result<Option<Segment>, StreamError> {
        self.check_live()?;
        let (next, bp) = match &self.scores {
            None => (
                viterbi::start_scores(&self.model, self.model.log_initial(), x),
                Backpointer::default(),
            ),
            Some(prev) => viterbi::step_scores(&self.model, prev, x),
        };
        if next.is_impossible() {
            self.status = Status::Poisoned;
            return Err(StreamError::ImpossibleObservation { time: next.time });
        }
        self.scores = Some(next);
        self.backpointers.push(bp);
        self.peak_buffer = self.peak_buffer.max(self.backpointers.len());

        let report = classify_step(&self.model, &next).expect("scores checked above");
        self.node_counts[kind_index(report.kind)] += 1;
        let Some(s) = report.kind.strong_state() else {
            return Ok(None);
        };
        let mut tie = false;
        let states = viterbi::backtrack_from(&self.backpointers, s, &mut tie);
        let segment = Segment {
            start: self.committed + 1,
            end: next.time,
            states,
            node_state: Some(s),
        };
        self.record_gap(segment.len());
        self.segments += 1;
        self.committed = next.time;
        self.backpointers.clear();
        self.restart_state = Some(s);
        Ok(Some(segment))
    }

    /// Emits the best path for the buffered tail and finalizes the stream.
    pub fn flush(&mut self) -> Result<Segment, StreamError> {
        self.check_live()?;
        let Some(scores) = self.scores.filter(|_| !self.backpointers.is_empty()) else {
            return Err(StreamError::EmptyBuffer);
        };
        let mut tie = false;
        let states = viterbi::backtrack_from(&self.backpointers, scores.best(), &mut tie);
        let segment = Segment {
            start: self.committed + 1,
            end: scores.time,
            states,
            node_state: None,
        };
        self.record_gap(segment.len());
        self.segments += 1;
        self.flushed = segment.len();
        self.backpointers.clear();
        self.status = Status::Finalized;
        Ok(segment)
    }

    pub fn is_finalized(&self) -> bool {
        self.status == Status::Finalized
    }

    pub fn stats(&self) -> StreamStats {
        let observations = self.time();
        let node_counts = NodeKind::ALL
            .iter()
            .map(|k| (k.as_str(), self.node_counts[kind_index(*k)]))
            .collect();
        StreamStats {
            observations,
            committed: self.committed,
            committed_fraction: if observations == 0 {
                0.0
            } else {
                self.committed as f64 / observations as f64
            },
            flushed: self.flushed,
            segments: self.segments,
            strong_nodes: self.node_counts[0] + self.node_counts[2],
            node_counts,
            max_gap: self.max_gap,
            mean_gap: if self.gap_count == 0 {
                0.0
            } else {
                self.gap_sum as f64 / self.gap_count as f64
            },
            peak_buffer: self.peak_buffer,
        }
    }
}

fn kind_index(k: NodeKind) -> usize {
    match k {
        NodeKind::StrongA => 0,
        NodeKind::WeakA => 1,
        NodeKind::StrongB => 2,
        NodeKind::WeakB => 3,
        NodeKind::Stay => 4,
        NodeKind::Swap => 5,
    }
}

impl StreamStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats always serialize")
    }
}

/// Receives segments as they are committed.
pub trait SegmentSink {
    fn accept(&mut self, segment: &Segment) -> io::Result<()>;
}

impl SegmentSink for Vec<Segment> {
    fn accept(&mut self, segment: &Segment) -> io::Result<()> {
        self.push(segment.clone());
        Ok(())
    }
}

pub const SEGMENT_CSV_HEADER: &str = "start,end,states,node_state";

/// Writes `start,end,states,node_state` rows; `node_state` is `none` for a
/// flushed tail.
pub struct CsvSegmentSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSegmentSink<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{SEGMENT_CSV_HEADER}")?;
        Ok(CsvSegmentSink { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> SegmentSink for CsvSegmentSink<W> {
    fn accept(&mut self, s: &Segment) -> io::Result<()> {
        let node = s.node_state.map_or("none".to_string(), |n| n.to_string());
        writeln!(self.out, "{},{},{},{}", s.start, s.end, path_string(&s.states), node)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Source(#[from] ObservationError),
    #[error("sink: {0}")]
    Sink(#[source] io::Error),
}

/// Drives a stream over `source`, writing segments to `sink` as they are
/// committed and flushing the tail at the end.
pub fn run_stream<I, S>(model: &TwoStateHmm, source: I, sink: &mut S) -> Result<StreamStats, RunError>
where
    I: IntoIterator<Item = Result<Observation, ObservationError>>,
    S: SegmentSink + ?Sized,
{
    let mut decoder = StreamDecoder::new(model.clone());
    for x in source {
        if let Some(seg) = decoder.push(&x?)? {
            sink.accept(&seg).map_err(RunError::Sink)?;
        }
    }
    if decoder.buffered_len() > 0 {
        let seg = decoder.flush()?;
        sink.accept(&seg).map_err(RunError::Sink)?;
    }
    Ok(decoder.stats())
}
