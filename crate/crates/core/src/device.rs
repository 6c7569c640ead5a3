//! Simulated accelerators.
//!
//! Each device owns a byte arena. Before a device callable runs, every object
//! the task touches is staged into the arena (skipped when an up-to-date copy
//! is already resident), evicting least recently used blocks when space runs
//! out. Blocks written on a device are dirty until copied back to the host,
//! either when evicted or before a host task uses the object.
//!
//! Lock order: an arena lock is always taken before an object's value lock,
//! and no two arena locks are ever held together.

use std::any::Any;
use std::cell::{Ref, RefCell, RefMut};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use bytemuck::Pod;
use parking_lot::Mutex;

use crate::data::{Data, DataObject};
use crate::deps::{AccessMode, DataHandle, HandleId};
use crate::error::DeviceError;
use crate::task::{Output, Task, TaskId};

/// Opaque value returned by [`Movable::to_device`], kept with the block.
pub type Descriptor = Box<dyn Any + Send + Sync>;

/// Objects that can be staged onto a device.
///
/// `needed_size` must not change between the size query and the transfer.
pub trait Movable {
    type Descriptor: Send + Sync + 'static;

    fn needed_size(&self) -> usize;
    fn to_device(&self, mover: &mut Mover<'_>, block: &mut [u8]) -> Self::Descriptor;
    #[allow(clippy::wrong_self_convention)]
    fn from_device(&mut self, mover: &mut Mover<'_>, block: &[u8], descriptor: &Self::Descriptor);
}

macro_rules! movable_pod {
    ($($t:ty),*) => {$(
        impl Movable for $t {
            type Descriptor = ();

            fn needed_size(&self) -> usize {
                std::mem::size_of::<$t>()
            }

            fn to_device(&self, mover: &mut Mover<'_>, block: &mut [u8]) {
                mover.copy_to_device(block, bytemuck::bytes_of(self));
            }

            fn from_device(&mut self, mover: &mut Mover<'_>, block: &[u8], _: &()) {
                mover.copy_to_host(bytemuck::bytes_of_mut(self), block);
            }
        }
    )*};
}

movable_pod!(u8, u16, u32, u64, u128, usize, i8, i16, i32, i64, i128, isize, f32, f64);

/// Contiguous collections of plain values. The descriptor is the length.
impl<T: Pod> Movable for Vec<T> {
    type Descriptor = usize;

    fn needed_size(&self) -> usize {
        std::mem::size_of_val(self.as_slice())
    }

    fn to_device(&self, mover: &mut Mover<'_>, block: &mut [u8]) -> usize {
        mover.copy_to_device(block, bytemuck::cast_slice(self));
        self.len()
    }

    fn from_device(&mut self, mover: &mut Mover<'_>, block: &[u8], len: &usize) {
        self.resize(*len, T::zeroed());
        mover.copy_to_host(bytemuck::cast_slice_mut(self), block);
    }
}

#[derive(Debug, Default)]
struct Meters {
    to_device_bytes: AtomicU64,
    to_host_bytes: AtomicU64,
    to_device_copies: AtomicU64,
    to_host_copies: AtomicU64,
}

/// Copies bytes between host memory and one arena, metering the traffic.
pub struct Mover<'a> {
    meters: &'a Meters,
}

impl Mover<'_> {
    pub fn copy_to_device(&mut self, device: &mut [u8], host: &[u8]) {
        device[..host.len()].copy_from_slice(host);
        self.meters
            .to_device_bytes
            .fetch_add(host.len() as u64, Ordering::Relaxed);
        self.meters.to_device_copies.fetch_add(1, Ordering::Relaxed);
    }

    pub fn copy_to_host(&mut self, host: &mut [u8], device: &[u8]) {
        let n = host.len();
        host.copy_from_slice(&device[..n]);
        self.meters
            .to_host_bytes
            .fetch_add(n as u64, Ordering::Relaxed);
        self.meters.to_host_copies.fetch_add(1, Ordering::Relaxed);
    }
}

const ALIGN: usize = 8;

fn span(size: usize) -> usize {
    size.div_ceil(ALIGN) * ALIGN
}

struct Block {
    offset: usize,
    size: usize,
    dirty: bool,
    stamp: u64,
    pins: u32,
    descriptor: Descriptor,
    object: Arc<dyn DataObject>,
}

struct ArenaState {
    // u64 words keep every block offset 8-byte aligned for typed views.
    storage: Vec<u64>,
    blocks: BTreeMap<HandleId, Block>,
    clock: u64,
    evictions: Vec<HandleId>,
}

impl ArenaState {
    fn bytes(&mut self) -> &mut [u8] {
        bytemuck::cast_slice_mut(&mut self.storage)
    }

    fn used(&self) -> usize {
        self.blocks.values().map(|b| span(b.size)).sum()
    }

    fn first_fit(&self, capacity: usize, needed: usize) -> Option<usize> {
        let mut placed: Vec<(usize, usize)> = self
            .blocks
            .values()
            .map(|b| (b.offset, span(b.size)))
            .collect();
        placed.sort_unstable();
        let mut cursor = 0;
        for (offset, len) in placed {
            if offset - cursor >= needed {
                return Some(cursor);
            }
            cursor = offset + len;
        }
        (capacity - cursor >= needed).then_some(cursor)
    }

    fn compact(&mut self) {
        let mut order: Vec<(usize, HandleId)> =
            self.blocks.iter().map(|(id, b)| (b.offset, *id)).collect();
        order.sort_unstable();
        let mut cursor = 0;
        for (_, id) in order {
            let block = self.blocks.get_mut(&id).expect("block vanished");
            let (from, len) = (block.offset, span(block.size));
            block.offset = cursor;
            if from != cursor {
                let bytes: &mut [u8] = bytemuck::cast_slice_mut(&mut self.storage);
                bytes.copy_within(from..from + len, cursor);
            }
            cursor += len;
        }
    }

    fn touch(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn flush(&mut self, id: HandleId, meters: &Meters) {
        let ArenaState {
            storage, blocks, ..
        } = self;
        let Some(block) = blocks.get_mut(&id) else {
            return;
        };
        if block.dirty {
            let bytes: &[u8] = bytemuck::cast_slice(storage);
            let region = &bytes[block.offset..block.offset + block.size];
            block
                .object
                .device_to_host(&mut Mover { meters }, region, &block.descriptor);
            block.dirty = false;
        }
    }

    fn evict_one(&mut self, meters: &Meters) -> bool {
        let victim = self
            .blocks
            .iter()
            .filter(|(_, b)| b.pins == 0)
            .min_by_key(|(id, b)| (b.stamp, **id))
            .map(|(id, _)| *id);
        match victim {
            Some(id) => {
                self.flush(id, meters);
                self.blocks.remove(&id);
                self.evictions.push(id);
                true
            }
            None => false,
        }
    }

    fn allocate(
        &mut self,
        capacity: usize,
        size: usize,
        meters: &Meters,
    ) -> Result<usize, DeviceError> {
        let needed = span(size);
        if needed > capacity {
            return Err(DeviceError::TooLarge {
                needed: size,
                capacity,
            });
        }
        loop {
            if let Some(offset) = self.first_fit(capacity, needed) {
                return Ok(offset);
            }
            if capacity - self.used() >= needed {
                self.compact();
                continue;
            }
            if !self.evict_one(meters) {
                return Err(DeviceError::Unsatisfiable { needed: size });
            }
        }
    }
}

/// Memory of one simulated device.
pub struct DeviceArena {
    index: usize,
    capacity: usize,
    state: Mutex<ArenaState>,
    meters: Meters,
}

impl std::fmt::Debug for DeviceArena {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeviceArena")
            .field("index", &self.index)
            .field("capacity", &self.capacity)
            .field("used", &self.used_bytes())
            .finish()
    }
}

impl DeviceArena {
    pub fn new(index: usize, capacity: usize) -> Self {
        DeviceArena {
            index,
            capacity,
            state: Mutex::new(ArenaState {
                storage: vec![0; capacity.div_ceil(ALIGN)],
                blocks: BTreeMap::new(),
                clock: 0,
                evictions: Vec::new(),
            }),
            meters: Meters::default(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn used_bytes(&self) -> usize {
        self.state.lock().used()
    }

    pub fn resident_count(&self) -> usize {
        self.state.lock().blocks.len()
    }

    fn find<R>(&self, identity: usize, f: impl FnOnce(&Block, &[u8]) -> R) -> Option<R> {
        let st = self.state.lock();
        let bytes: &[u8] = bytemuck::cast_slice(&st.storage);
        st.blocks
            .iter()
            .find(|(id, _)| id.identity == identity)
            .map(|(_, b)| f(b, bytes))
    }

    /// True if a valid copy of `data` lives in this arena.
    pub fn is_valid<T: Send + Sync + 'static>(&self, data: &Data<T>) -> bool {
        self.find(data.identity(), |_, _| ()).is_some()
    }

    pub fn is_dirty<T: Send + Sync + 'static>(&self, data: &Data<T>) -> bool {
        self.find(data.identity(), |b, _| b.dirty).unwrap_or(false)
    }

    /// The device-side bytes of `data`, if resident.
    pub fn block_bytes<T: Send + Sync + 'static>(&self, data: &Data<T>) -> Option<Vec<u8>> {
        self.find(data.identity(), |b, bytes| {
            bytes[b.offset..b.offset + b.size].to_vec()
        })
    }

    /// Handles evicted so far, oldest first.
    pub fn evictions(&self) -> Vec<HandleId> {
        self.state.lock().evictions.clone()
    }

    pub fn bytes_to_device(&self) -> u64 {
        self.meters.to_device_bytes.load(Ordering::Relaxed)
    }

    pub fn bytes_to_host(&self) -> u64 {
        self.meters.to_host_bytes.load(Ordering::Relaxed)
    }

    pub fn copies_to_device(&self) -> u64 {
        self.meters.to_device_copies.load(Ordering::Relaxed)
    }

    pub fn copies_to_host(&self) -> u64 {
        self.meters.to_host_copies.load(Ordering::Relaxed)
    }

    /// Copies a dirty block back to the host.
    fn flush_handle(&self, id: HandleId) {
        self.state.lock().flush(id, &self.meters);
    }

    /// Copies back if dirty, then drops the block.
    fn invalidate(&self, id: HandleId) {
        let mut st = self.state.lock();
        st.flush(id, &self.meters);
        st.blocks.remove(&id);
    }

    /// Stages `task`'s objects, runs `kernel` against them and records the
    /// writes. The arena stays locked for the whole sequence.
    pub(crate) fn execute(
        self: &Arc<Self>,
        task: &Task,
        kernel: &mut dyn FnMut(&DeviceContext<'_>) -> Output,
    ) -> Result<Output, DeviceError> {
        // Other devices give up what this task needs before our own lock.
        for access in task.accesses() {
            for other in residency(&access.handle) {
                if Arc::ptr_eq(&other, self) {
                    continue;
                }
                if access.mode.is_writing() {
                    other.invalidate(access.handle.id);
                } else {
                    other.flush_handle(access.handle.id);
                }
            }
        }

        let mut st = self.state.lock();
        for access in task.accesses() {
            let id = access.handle.id;
            let stamp = st.touch();
            if let Some(block) = st.blocks.get_mut(&id) {
                block.stamp = stamp;
                block.pins += 1;
                continue;
            }
            let object = Arc::clone(access.handle.object());
            let size = object.needed_size();
            let offset = match st.allocate(self.capacity, size, &self.meters) {
                Ok(offset) => offset,
                Err(e) => {
                    unpin(&mut st, task);
                    return Err(e);
                }
            };
            let region = &mut st.bytes()[offset..offset + size];
            let descriptor = object.host_to_device(
                &mut Mover {
                    meters: &self.meters,
                },
                region,
            );
            st.blocks.insert(
                id,
                Block {
                    offset,
                    size,
                    dirty: false,
                    stamp,
                    pins: 1,
                    descriptor,
                    object,
                },
            );
            let mut resident = access.handle.residency.lock();
            if !resident.iter().any(|a| Arc::ptr_eq(a, self)) {
                resident.push(Arc::clone(self));
            }
        }

        let output = {
            let ArenaState {
                storage, blocks, ..
            } = &mut *st;
            let mut placed: Vec<(usize, usize, usize)> = task
                .accesses()
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let b = &blocks[&a.handle.id];
                    (b.offset, b.size, i)
                })
                .collect();
            placed.sort_unstable();
            let mut rest: &mut [u8] = bytemuck::cast_slice_mut(storage);
            let mut consumed = 0;
            let mut entries = Vec::with_capacity(placed.len());
            for (offset, size, i) in placed {
                let tail = std::mem::take(&mut rest);
                let (_, tail) = tail.split_at_mut(offset - consumed);
                let (region, tail) = tail.split_at_mut(size);
                rest = tail;
                consumed = offset + size;
                let access = &task.accesses()[i];
                entries.push(DeviceEntry {
                    key: access.user_key,
                    mode: access.mode,
                    bytes: RefCell::new(region),
                    descriptor: &blocks[&access.handle.id].descriptor,
                });
            }
            let ctx = DeviceContext {
                task: task.id,
                device: self.index,
                entries,
            };
            kernel(&ctx)
        };

        for access in task.accesses() {
            if let Some(block) = st.blocks.get_mut(&access.handle.id) {
                if access.mode.is_writing() {
                    block.dirty = true;
                }
            }
        }
        unpin(&mut st, task);
        Ok(output)
    }
}

fn unpin(st: &mut ArenaState, task: &Task) {
    for access in task.accesses() {
        if let Some(block) = st.blocks.get_mut(&access.handle.id) {
            block.pins = block.pins.saturating_sub(1);
        }
    }
}

fn residency(handle: &DataHandle) -> Vec<Arc<DeviceArena>> {
    handle.residency.lock().clone()
}

/// Makes host copies current before a host callable runs; host writes drop
/// every device copy.
pub(crate) fn prepare_host(task: &Task) {
    for access in task.accesses() {
        if !access.handle.object().device_capable() {
            continue;
        }
        for arena in residency(&access.handle) {
            if access.mode.is_writing() {
                arena.invalidate(access.handle.id);
            } else {
                arena.flush_handle(access.handle.id);
            }
        }
    }
}

struct DeviceEntry<'a> {
    key: usize,
    mode: AccessMode,
    bytes: RefCell<&'a mut [u8]>,
    descriptor: &'a Descriptor,
}

/// What a device callable receives: views of the staged blocks.
pub struct DeviceContext<'a> {
    task: TaskId,
    device: usize,
    entries: Vec<DeviceEntry<'a>>,
}

impl<'a> DeviceContext<'a> {
    pub fn task_id(&self) -> TaskId {
        self.task
    }

    pub fn device_index(&self) -> usize {
        self.device
    }

    fn entry<T: Send + Sync + 'static>(&self, data: &Data<T>) -> &DeviceEntry<'a> {
        let key = data.identity();
        self.entries
            .iter()
            .find(|e| e.key == key)
            .unwrap_or_else(|| panic!("task {} did not declare this object", self.task))
    }

    pub fn bytes<T: Send + Sync + 'static>(&self, data: &Data<T>) -> Ref<'_, [u8]> {
        Ref::map(self.entry(data).bytes.borrow(), |b| &**b)
    }

    pub fn bytes_mut<T: Send + Sync + 'static>(&self, data: &Data<T>) -> RefMut<'_, [u8]> {
        let entry = self.entry(data);
        assert!(
            entry.mode.is_writing(),
            "task {} declared {:?} and cannot write",
            self.task,
            entry.mode
        );
        RefMut::map(entry.bytes.borrow_mut(), |b| &mut **b)
    }

    /// The block viewed as elements of `E`.
    pub fn slice<E: Pod, T: Send + Sync + 'static>(&self, data: &Data<T>) -> Ref<'_, [E]> {
        Ref::map(self.bytes(data), bytemuck::cast_slice)
    }

    pub fn slice_mut<E: Pod, T: Send + Sync + 'static>(&self, data: &Data<T>) -> RefMut<'_, [E]> {
        RefMut::map(self.bytes_mut(data), bytemuck::cast_slice_mut)
    }

    /// The descriptor `to_device` returned for `data`.
    pub fn descriptor<T: Movable + Send + Sync + 'static>(&self, data: &Data<T>) -> &T::Descriptor {
        self.entry(data)
            .descriptor
            .downcast_ref()
            .expect("descriptor type mismatch")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speculation::SpecRole;
    use crate::task::{TaskAccess, TaskBody};
    use std::sync::Weak;

    fn handle_for<T: Send + Sync + 'static>(data: &Data<T>, n: u32) -> Arc<DataHandle> {
        Arc::new(DataHandle::new(
            HandleId {
                identity: data.identity(),
                generation: n,
            },
            data.object(),
            false,
        ))
    }

    fn task_on(accesses: &[(&Arc<DataHandle>, AccessMode)]) -> Task {
        let t = Task::new(
            TaskId(0),
            Weak::new(),
            0,
            None,
            TaskBody::Compute {
                host: None,
                device: None,
            },
            SpecRole::None,
            false,
        );
        let list = accesses
            .iter()
            .map(|(h, m)| TaskAccess {
                user_key: h.id.identity,
                handle: Arc::clone(h),
                mode: *m,
                slot: 0,
            })
            .collect();
        t.accesses.set(list).ok().unwrap();
        t
    }

    fn noop(_: &DeviceContext<'_>) -> Output {
        Box::new(())
    }

    #[test]
    fn staging_skips_resident_copies() {
        let arena = Arc::new(DeviceArena::new(0, 256));
        let v = Data::with_device(vec![0u8; 64]);
        let h = handle_for(&v, 0);
        let t = task_on(&[(&h, AccessMode::Read)]);
        arena.execute(&t, &mut noop).unwrap();
        assert_eq!(arena.bytes_to_device(), 64);
        assert_eq!(arena.copies_to_device(), 1);
        arena.execute(&t, &mut noop).unwrap();
        assert_eq!(arena.bytes_to_device(), 64);
        assert!(!arena.is_dirty(&v));
    }

    #[test]
    fn lru_eviction_order() {
        let arena = Arc::new(DeviceArena::new(0, 128));
        let objs: Vec<_> = (0..3).map(|_| Data::with_device(vec![1u8; 64])).collect();
        let hs: Vec<_> = objs.iter().map(|o| handle_for(o, 0)).collect();
        for h in &hs {
            arena
                .execute(&task_on(&[(h, AccessMode::Read)]), &mut noop)
                .unwrap();
        }
        assert_eq!(arena.evictions(), vec![hs[0].id]);
        assert_eq!(arena.bytes_to_host(), 0);
        // A comes back and displaces B, now the least recent.
        arena
            .execute(&task_on(&[(&hs[0], AccessMode::Read)]), &mut noop)
            .unwrap();
        assert_eq!(arena.evictions(), vec![hs[0].id, hs[1].id]);
    }

    #[test]
    fn dirty_victim_is_copied_back_once() {
        let arena = Arc::new(DeviceArena::new(0, 64));
        let a = Data::with_device(vec![1u32; 16]);
        let b = Data::with_device(vec![0u32; 16]);
        let (ha, hb) = (handle_for(&a, 0), handle_for(&b, 0));
        arena
            .execute(&task_on(&[(&ha, AccessMode::Write)]), &mut |ctx| {
                for x in ctx.slice_mut::<u32, _>(&a).iter_mut() {
                    *x = 9;
                }
                Box::new(())
            })
            .unwrap();
        assert!(arena.is_dirty(&a));
        assert_eq!(a.get(), vec![1; 16]);
        arena
            .execute(&task_on(&[(&hb, AccessMode::Read)]), &mut noop)
            .unwrap();
        assert_eq!(arena.bytes_to_host(), 64);
        assert_eq!(arena.copies_to_host(), 1);
        assert_eq!(a.get(), vec![9; 16]);
    }

    #[test]
    fn stamp_ties_break_by_handle_id() {
        let mut st = ArenaState {
            storage: vec![0; 8],
            blocks: BTreeMap::new(),
            clock: 0,
            evictions: Vec::new(),
        };
        let x = Data::with_device(0u64);
        for g in [3u32, 1, 2] {
            st.blocks.insert(
                HandleId {
                    identity: 1,
                    generation: g,
                },
                Block {
                    offset: 8 * g as usize,
                    size: 8,
                    dirty: false,
                    stamp: 5,
                    pins: 0,
                    descriptor: Box::new(()),
                    object: x.object(),
                },
            );
        }
        assert!(st.evict_one(&Meters::default()));
        assert_eq!(st.evictions[0].generation, 1);
    }

    #[test]
    fn fragmentation_is_compacted_instead_of_evicting() {
        let arena = Arc::new(DeviceArena::new(0, 96));
        let objs: Vec<_> = (0..3).map(|_| Data::with_device(vec![0u8; 32])).collect();
        let hs: Vec<_> = objs.iter().map(|o| handle_for(o, 0)).collect();
        for h in &hs {
            arena
                .execute(&task_on(&[(h, AccessMode::Read)]), &mut noop)
                .unwrap();
        }
        // Two 32-byte holes around the middle block.
        arena.invalidate(hs[0].id);
        arena.invalidate(hs[2].id);
        let big = Data::with_device(vec![0u8; 64]);
        let hb = handle_for(&big, 0);
        arena
            .execute(&task_on(&[(&hb, AccessMode::Read)]), &mut noop)
            .unwrap();
        assert!(arena.evictions().is_empty());
        assert!(arena.is_valid(&objs[1]) && arena.is_valid(&big));
        assert_eq!(objs[1].get(), arena.block_bytes(&objs[1]).unwrap());
        assert_eq!(arena.used_bytes(), 96);
    }

    #[test]
    fn too_large_and_unsatisfiable() {
        let arena = Arc::new(DeviceArena::new(0, 32));
        let big = Data::with_device(vec![0u8; 40]);
        let hb = handle_for(&big, 0);
        assert!(matches!(
            arena.execute(&task_on(&[(&hb, AccessMode::Read)]), &mut noop),
            Err(DeviceError::TooLarge { .. })
        ));
        let a = Data::with_device(vec![0u8; 24]);
        let b = Data::with_device(vec![0u8; 16]);
        let (ha, hb) = (handle_for(&a, 0), handle_for(&b, 0));
        assert!(matches!(
            arena.execute(
                &task_on(&[(&ha, AccessMode::Read), (&hb, AccessMode::Read)]),
                &mut noop
            ),
            Err(DeviceError::Unsatisfiable { .. })
        ));
        // The failed staging left nothing pinned.
        arena
            .execute(&task_on(&[(&hb, AccessMode::Read)]), &mut noop)
            .unwrap();
    }

    #[test]
    fn host_write_invalidates_every_device() {
        let arenas: Vec<_> = (0..2).map(|i| Arc::new(DeviceArena::new(i, 64))).collect();
        let v = Data::with_device(3u32);
        let h = handle_for(&v, 0);
        for a in &arenas {
            a.execute(&task_on(&[(&h, AccessMode::Read)]), &mut noop)
                .unwrap();
            assert!(a.is_valid(&v));
        }
        prepare_host(&task_on(&[(&h, AccessMode::Read)]));
        assert!(arenas.iter().all(|a| a.is_valid(&v)));
        prepare_host(&task_on(&[(&h, AccessMode::Write)]));
        assert!(arenas.iter().all(|a| !a.is_valid(&v)));
    }

    #[test]
    fn device_write_moves_ownership_between_devices() {
        let a0 = Arc::new(DeviceArena::new(0, 64));
        let a1 = Arc::new(DeviceArena::new(1, 64));
        let v = Data::with_device(vec![1.0f64, 2.0]);
        let h = handle_for(&v, 0);
        let scale = |ctx: &DeviceContext<'_>| -> Output {
            for x in ctx.slice_mut::<f64, _>(&v).iter_mut() {
                *x *= 2.0;
            }
            Box::new(())
        };
        let w = task_on(&[(&h, AccessMode::Write)]);
        a0.execute(&w, &mut { scale }).unwrap();
        a1.execute(&w, &mut { scale }).unwrap();
        assert!(!a0.is_valid(&v));
        assert!(a1.is_dirty(&v));
        assert_eq!(v.get(), vec![2.0, 4.0]);
        prepare_host(&task_on(&[(&h, AccessMode::Read)]));
        assert_eq!(v.get(), vec![4.0, 8.0]);
        assert!(!a1.is_dirty(&v));
    }

    #[test]
    fn descriptor_reaches_the_kernel() {
        let arena = Arc::new(DeviceArena::new(0, 64));
        let v = Data::with_device(vec![7u16; 5]);
        let h = handle_for(&v, 0);
        let mut seen = 0;
        arena
            .execute(&task_on(&[(&h, AccessMode::Read)]), &mut |ctx| {
                seen = *ctx.descriptor(&v);
                Box::new(())
            })
            .unwrap();
        assert_eq!(seen, 5);
    }
}
