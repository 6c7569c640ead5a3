//! Communication tasks between runtime instances.
//!
//! Sends, receives and broadcasts are inserted into a task graph like any
//! other task, but they never occupy a worker: once ready they are handed to
//! the instance's background agent, which owns the transport, posts
//! nonblocking operations and releases each task's dependencies when its
//! transfer completes.
//!
//! Values cross the wire in one of three encodings, see [`Tier`].

mod agent;
mod serialize;
mod transport;
pub mod wire;

use crate::data::{DataCell, DataObject};
use crate::error::CommError;

pub(crate) use agent::CommAgent;
pub use serialize::{Deserializer, Serializable, Serializer};
pub(crate) use transport::mark_worker_thread;
pub use transport::{
    note_transport_entry, worker_transport_entries, Completion, LocalCluster, LocalEndpoint,
    RequestId, Transport,
};

/// How a communicated type is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    /// Plain values sent as their bytes.
    TriviallyCopyable,
    /// Contiguous buffers of plain values.
    BufferView,
    /// Types implementing [`Serializable`].
    Serializer,
}

pub trait Transferable: Sized {
    const TIER: Tier;
    fn encode(&self) -> Vec<u8>;
    fn decode(bytes: &[u8]) -> Result<Self, CommError>;
}

macro_rules! transferable_pod {
    ($($t:ty),*) => {$(
        impl Transferable for $t {
            const TIER: Tier = Tier::TriviallyCopyable;

            fn encode(&self) -> Vec<u8> {
                bytemuck::bytes_of(self).to_vec()
            }

            fn decode(bytes: &[u8]) -> Result<Self, CommError> {
                if bytes.len() != std::mem::size_of::<$t>() {
                    return Err(CommError::Decode(format!(
                        "{} bytes for a {}-byte value",
                        bytes.len(),
                        std::mem::size_of::<$t>()
                    )));
                }
                Ok(bytemuck::pod_read_unaligned(bytes))
            }
        }
    )*};
}

transferable_pod!(u8, u16, u32, u64, u128, usize, i8, i16, i32, i64, i128, isize, f32, f64);

impl Transferable for bool {
    const TIER: Tier = Tier::TriviallyCopyable;

    fn encode(&self) -> Vec<u8> {
        vec![u8::from(*self)]
    }

    fn decode(bytes: &[u8]) -> Result<Self, CommError> {
        match bytes {
            [0] => Ok(false),
            [1] => Ok(true),
            _ => Err(CommError::Decode("invalid bool".into())),
        }
    }
}

impl<T: bytemuck::Pod> Transferable for Vec<T> {
    const TIER: Tier = Tier::BufferView;

    fn encode(&self) -> Vec<u8> {
        bytemuck::cast_slice(self).to_vec()
    }

    fn decode(bytes: &[u8]) -> Result<Self, CommError> {
        let width = std::mem::size_of::<T>().max(1);
        if !bytes.len().is_multiple_of(width) {
            return Err(CommError::Decode(format!(
                "{} bytes is not a whole number of {width}-byte elements",
                bytes.len()
            )));
        }
        Ok(bytemuck::pod_collect_to_vec(bytes))
    }
}

impl Transferable for String {
    const TIER: Tier = Tier::BufferView;

    fn encode(&self) -> Vec<u8> {
        self.as_bytes().to_vec()
    }

    fn decode(bytes: &[u8]) -> Result<Self, CommError> {
        String::from_utf8(bytes.to_vec()).map_err(|e| CommError::Decode(e.to_string()))
    }
}

impl<S: Serializable> Transferable for S {
    const TIER: Tier = Tier::Serializer;

    fn encode(&self) -> Vec<u8> {
        let mut s = Serializer::new();
        self.serialize(&mut s);
        s.into_bytes()
    }

    fn decode(bytes: &[u8]) -> Result<Self, CommError> {
        let mut d = Deserializer::new(bytes);
        let value = S::deserialize(&mut d)?;
        d.finish()?;
        Ok(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CommKind {
    Send { dest: usize, tag: u32 },
    Recv { source: usize, tag: u32 },
    BroadcastRoot { sequence: u64 },
    BroadcastLeaf { root: usize, sequence: u64 },
}

/// Type-erased encode/decode of one data object.
#[derive(Clone, Copy)]
pub(crate) struct Codec {
    pub encode: fn(&dyn DataObject) -> Vec<u8>,
    pub decode: fn(&dyn DataObject, &[u8]) -> Result<(), CommError>,
}

impl Codec {
    pub(crate) fn of<T: Transferable + Send + Sync + 'static>() -> Codec {
        Codec {
            encode: |obj| cell::<T>(obj).read().encode(),
            decode: |obj, bytes| {
                let value = T::decode(bytes)?;
                *cell::<T>(obj).write() = value;
                Ok(())
            },
        }
    }
}

fn cell<T: Send + Sync + 'static>(obj: &dyn DataObject) -> &DataCell<T> {
    obj.as_any()
        .downcast_ref::<DataCell<T>>()
        .expect("communicated object changed type")
}

pub(crate) struct CommOp {
    pub kind: CommKind,
    pub codec: Codec,
}
