//! Grouping of impact events by event attributes, and the expert tag log.

mod report;
mod tags;

pub use report::{
    aggregate_impacts, parse_report, render_report, ContrastReport, ContrastRow, GroupingKey, ReportFormat,
    CONTRAST_FORMAT_VERSION, MISSING_VALUE,
};
pub use tags::{ExpertTag, TagAck, TagStore, Verdict, TAG_FORMAT_VERSION};
