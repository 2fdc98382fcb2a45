//! From raw event logs to encoded, scaled action sequences.
//!
//! Event files are UTF-8 JSON lines. An optional first line
//! `{"format":"clickintent-events","version":1}` declares the format
//! version; every other line is one flat event record with the required
//! keys `session_id`, `ts` (integer milliseconds), `event_type`,
//! `page_type` and `category`, plus optional numeric or string extras.

mod events;
mod scaler;
mod schema;
mod session;

pub use events::{parse_events, write_events, AttrValue, EventFormat, ParsedEvents, RawEvent, RejectedLine, EVENT_FORMAT_VERSION};
pub use scaler::{apply_scaler, fit_scaler, ColumnStats, Scaler};
pub use schema::{
    extract_features, ActionSequence, Derivation, EventSnapshot, FeatureDef, FeatureKind, FeatureSchema,
    MissingAttribute, QualityReport, SchemaFingerprint, DEFAULT_MAX_EVENTS, SCHEMA_FORMAT_VERSION,
};
pub use session::{read_labels, sessionize, write_labels, LabelRecord, OutcomeLabel, Session};
