//! Per-activity trace buffers and the flusher that serializes them onto a
//! single byte stream, each block prefixed by an activity context record.

use std::sync::{Arc, Mutex};

use polydbg_protocol::TraceEvent;

pub trait TraceSink: Send {
    fn write(&mut self, bytes: &[u8]);
}

impl TraceSink for std::sync::mpsc::Sender<Vec<u8>> {
    fn write(&mut self, bytes: &[u8]) {
        // A vanished receiver just means nobody is listening anymore.
        let _ = self.send(bytes.to_vec());
    }
}

/// Growable in-memory sink that can be read back while the program runs.
#[derive(Debug, Clone, Default)]
pub struct SharedBuffer(Arc<Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.0.lock().unwrap().clone()
    }
}

impl TraceSink for SharedBuffer {
    fn write(&mut self, bytes: &[u8]) {
        self.0.lock().unwrap().extend_from_slice(bytes);
    }
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn write(&mut self, _: &[u8]) {}
}

#[derive(Debug)]
pub struct ActivityBuffer {
    activity: u64,
    bytes: Mutex<Vec<u8>>,
    closed: std::sync::atomic::AtomicBool,
}

impl ActivityBuffer {
    pub fn activity(&self) -> u64 {
        self.activity
    }

    pub fn emit(&self, event: &TraceEvent) {
        event.encode_into(&mut self.bytes.lock().unwrap());
    }

    /// Marks the buffer as finished; it is dropped after its last flush.
    pub fn close(&self) {
        self.closed.store(true, std::sync::atomic::Ordering::SeqCst);
    }
}

pub struct TraceHub {
    buffers: Mutex<Vec<Arc<ActivityBuffer>>>,
    sink: Mutex<Box<dyn TraceSink>>,
}

impl TraceHub {
    pub fn new(sink: Box<dyn TraceSink>) -> Self {
        Self { buffers: Mutex::new(Vec::new()), sink: Mutex::new(sink) }
    }

    pub fn register(&self, activity: u64) -> Arc<ActivityBuffer> {
        let buf = Arc::new(ActivityBuffer {
            activity,
            bytes: Mutex::new(Vec::new()),
            closed: Default::default(),
        });
        self.buffers.lock().unwrap().push(buf.clone());
        buf
    }

    /// Moves every pending buffer onto the sink. Buffers are visited in
    /// registration order, so a creator's block precedes its children's
    /// within one flush.
    pub fn flush(&self) {
        let mut sink = self.sink.lock().unwrap();
        let buffers: Vec<_> = self.buffers.lock().unwrap().clone();
        let mut out = Vec::new();
        for buf in &buffers {
            let bytes = std::mem::take(&mut *buf.bytes.lock().unwrap());
            if !bytes.is_empty() {
                TraceEvent::ActivityContext { activity_id: buf.activity }.encode_into(&mut out);
                out.extend_from_slice(&bytes);
            }
        }
        self.buffers.lock().unwrap().retain(|b| {
            !(b.closed.load(std::sync::atomic::Ordering::SeqCst) && b.bytes.lock().unwrap().is_empty())
        });
        if !out.is_empty() {
            sink.write(&out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use polydbg_protocol::build_shipped_catalog;
    use polydbg_protocol::trace::decode_trace_stream;

    #[test]
    fn flush_attributes_blocks() {
        let out = SharedBuffer::new();
        let hub = TraceHub::new(Box::new(out.clone()));
        let a = hub.register(1);
        let b = hub.register(2);
        a.emit(&TraceEvent::ActivityCompletion { marker: 0x11 });
        b.emit(&TraceEvent::ScopeEnd { marker: 0x35 });
        hub.flush();
        a.emit(&TraceEvent::ScopeEnd { marker: 0x33 });
        a.close();
        hub.flush();
        hub.flush();
        let events = decode_trace_stream(&out.bytes(), &build_shipped_catalog()).unwrap();
        assert_eq!(
            events,
            vec![
                (1, TraceEvent::ActivityCompletion { marker: 0x11 }),
                (2, TraceEvent::ScopeEnd { marker: 0x35 }),
                (1, TraceEvent::ScopeEnd { marker: 0x33 }),
            ]
        );
        assert_eq!(hub.buffers.lock().unwrap().len(), 1);
    }
}
