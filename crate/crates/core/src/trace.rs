//! Per-query I/O context: the page ledger plus an ordered log of every record
//! read, labelled by what was read. The log is what the analytic cost model
//! consumes.

use std::fmt;

use crate::error::Result;
use crate::pagestore::{AccessLedger, PageStore, RecordPointer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Access {
    PrimaryNode,
    SecondaryNode,
    PrimaryBucket,
    SecondaryBucket,
    SpatialRecord,
    VisualRecord,
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Access::PrimaryNode => "primary-node",
            Access::SecondaryNode => "secondary-node",
            Access::PrimaryBucket => "primary-bucket",
            Access::SecondaryBucket => "secondary-bucket",
            Access::SpatialRecord => "spatial-record",
            Access::VisualRecord => "visual-record",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryTrace {
    pub reads: Vec<(Access, RecordPointer)>,
}

impl QueryTrace {
    pub fn of(&self, access: Access) -> impl Iterator<Item = &RecordPointer> {
        self.reads
            .iter()
            .filter(move |(a, _)| *a == access)
            .map(|(_, p)| p)
    }

    pub fn count(&self, access: Access) -> usize {
        self.of(access).count()
    }
}

/// Reads records for one query, charging the ledger and logging the trace.
pub struct QueryIo<'a> {
    store: &'a PageStore,
    pub ledger: AccessLedger,
    pub trace: QueryTrace,
}

impl<'a> QueryIo<'a> {
    pub fn new(store: &'a PageStore) -> Self {
        Self {
            store,
            ledger: AccessLedger::new(),
            trace: QueryTrace::default(),
        }
    }

    pub fn store(&self) -> &'a PageStore {
        self.store
    }

    pub fn read(&mut self, access: Access, ptr: &RecordPointer) -> Result<&'a [u8]> {
        let bytes = self.store.read_record(ptr, &mut self.ledger)?;
        self.trace.reads.push((access, *ptr));
        Ok(bytes)
    }
}
