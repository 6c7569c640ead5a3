//! User-visible data objects.
//!
//! A [`Data`] is a shared cell whose identity (its address) is what the runtime
//! keys dependencies on. Values are only touched by tasks that declared an
//! access, so the inner lock is never contended by correctly ordered tasks.

use std::any::Any;
use std::fmt;
use std::sync::{Arc, OnceLock};

use parking_lot::{
    MappedRwLockReadGuard, MappedRwLockWriteGuard, RwLock, RwLockReadGuard, RwLockWriteGuard,
};

use crate::device::{Descriptor, Movable, Mover};

pub type DataRef<'a, T> = MappedRwLockReadGuard<'a, T>;
pub type DataMut<'a, T> = MappedRwLockWriteGuard<'a, T>;

/// A data object usable as a task dependency.
pub struct Data<T> {
    cell: Arc<DataCell<T>>,
}

impl<T> Clone for Data<T> {
    fn clone(&self) -> Self {
        Data {
            cell: Arc::clone(&self.cell),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Data<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.cell.value.try_read() {
            Some(v) => f.debug_tuple("Data").field(&*v).finish(),
            None => f.write_str("Data(<locked>)"),
        }
    }
}

struct DeviceFns<T> {
    needed_size: fn(&T) -> usize,
    to_device: fn(&T, &mut Mover<'_>, &mut [u8]) -> Descriptor,
    from_device: fn(&mut T, &mut Mover<'_>, &[u8], &Descriptor),
}

impl<T> Clone for DeviceFns<T> {
    fn clone(&self) -> Self {
        DeviceFns { ..*self }
    }
}

pub(crate) struct DataCell<T> {
    value: RwLock<Option<T>>,
    duplicate: Option<fn(&T) -> T>,
    device: OnceLock<DeviceFns<T>>,
}

impl<T: Clone + Send + Sync + 'static> Data<T> {
    /// Creates a duplicable data object. Duplication is needed for
    /// speculative snapshots.
    pub fn new(value: T) -> Self {
        Data::from_cell(Some(value), Some(T::clone))
    }
}

impl<T: Send + Sync + 'static> Data<T> {
    /// Creates a data object that cannot be duplicated. Such objects can not
    /// take part in speculation.
    pub fn opaque(value: T) -> Self {
        Data::from_cell(Some(value), None)
    }

    fn from_cell(value: Option<T>, duplicate: Option<fn(&T) -> T>) -> Self {
        Data {
            cell: Arc::new(DataCell {
                value: RwLock::new(value),
                duplicate,
                device: OnceLock::new(),
            }),
        }
    }

    /// Shared access from outside the task graph. Only meaningful once the
    /// tasks touching this object have completed.
    pub fn read(&self) -> DataRef<'_, T> {
        RwLockReadGuard::map(self.cell.value.read(), |v| {
            v.as_ref().expect("data cell is empty")
        })
    }

    pub fn write(&self) -> DataMut<'_, T> {
        RwLockWriteGuard::map(self.cell.value.write(), |v| {
            v.as_mut().expect("data cell is empty")
        })
    }

    pub fn get(&self) -> T
    where
        T: Clone,
    {
        self.read().clone()
    }

    pub fn set(&self, value: T) {
        *self.write() = value;
    }

    pub(crate) fn key(&self) -> usize {
        Arc::as_ptr(&self.cell) as *const () as usize
    }

    /// The identity the runtime keys this object on; equal to
    /// [`HandleId::identity`](crate::HandleId) once registered.
    pub fn identity(&self) -> usize {
        self.key()
    }

    pub(crate) fn object(&self) -> Arc<dyn DataObject> {
        self.cell.clone()
    }
}

impl<T: Movable + Send + Sync + 'static> Data<T> {
    /// Enables staging of this object onto simulated devices.
    pub fn enable_device(&self) -> &Self {
        let _ = self.cell.device.set(DeviceFns {
            needed_size: |v: &T| v.needed_size(),
            to_device: |v: &T, mover, block| Box::new(v.to_device(mover, block)),
            from_device: |v: &mut T, mover, block, desc| {
                let desc = desc
                    .downcast_ref::<T::Descriptor>()
                    .expect("descriptor type mismatch");
                v.from_device(mover, block, desc)
            },
        });
        self
    }

    pub fn with_device(value: T) -> Self
    where
        T: Clone,
    {
        let data = Data::new(value);
        data.enable_device();
        data
    }
}

impl<T: 'static> DataCell<T> {
    pub(crate) fn read(&self) -> DataRef<'_, T> {
        RwLockReadGuard::map(self.value.read(), |v| {
            v.as_ref().expect("data cell is empty")
        })
    }

    pub(crate) fn write(&self) -> DataMut<'_, T> {
        RwLockWriteGuard::map(self.value.write(), |v| {
            v.as_mut().expect("data cell is empty")
        })
    }
}

/// Type-erased view of a data cell used by the runtime internals.
pub(crate) trait DataObject: Send + Sync + 'static {
    fn key(&self) -> usize;
    fn as_any(&self) -> &dyn Any;
    fn duplicable(&self) -> bool;
    /// An empty cell of the same type and capabilities.
    fn twin(&self) -> Arc<dyn DataObject>;
    /// Overwrites `dst` (same concrete type) with a duplicate of this value.
    fn copy_into(&self, dst: &dyn DataObject);
    fn device_capable(&self) -> bool;
    fn needed_size(&self) -> usize;
    fn host_to_device(&self, mover: &mut Mover<'_>, block: &mut [u8]) -> Descriptor;
    fn device_to_host(&self, mover: &mut Mover<'_>, block: &[u8], descriptor: &Descriptor);
}

impl<T: Send + Sync + 'static> DataObject for DataCell<T> {
    fn key(&self) -> usize {
        self as *const Self as *const () as usize
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn duplicable(&self) -> bool {
        self.duplicate.is_some()
    }

    fn twin(&self) -> Arc<dyn DataObject> {
        let device = OnceLock::new();
        if let Some(fns) = self.device.get() {
            let _ = device.set(fns.clone());
        }
        Arc::new(DataCell::<T> {
            value: RwLock::new(None),
            duplicate: self.duplicate,
            device,
        })
    }

    fn copy_into(&self, dst: &dyn DataObject) {
        let dup = self.duplicate.expect("object is not duplicable");
        let dst = dst
            .as_any()
            .downcast_ref::<DataCell<T>>()
            .expect("copy between objects of different types");
        let src = self.value.read();
        *dst.value.write() = src.as_ref().map(dup);
    }

    fn device_capable(&self) -> bool {
        self.device.get().is_some()
    }

    fn needed_size(&self) -> usize {
        let fns = self.device.get().expect("object has no device support");
        (fns.needed_size)(&self.read())
    }

    fn host_to_device(&self, mover: &mut Mover<'_>, block: &mut [u8]) -> Descriptor {
        let fns = self.device.get().expect("object has no device support");
        (fns.to_device)(&self.read(), mover, block)
    }

    fn device_to_host(&self, mover: &mut Mover<'_>, block: &[u8], descriptor: &Descriptor) {
        let fns = self.device.get().expect("object has no device support");
        (fns.from_device)(&mut self.write(), mover, block, descriptor)
    }
}

/// A contiguous collection whose elements are individual dependencies.
pub struct DataArray<T> {
    elements: Arc<[Data<T>]>,
}

impl<T> Clone for DataArray<T> {
    fn clone(&self) -> Self {
        DataArray {
            elements: Arc::clone(&self.elements),
        }
    }
}

impl<T: Clone + Send + Sync + 'static> DataArray<T> {
    pub fn new(values: Vec<T>) -> Self {
        DataArray {
            elements: values.into_iter().map(Data::new).collect(),
        }
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.elements.iter().map(Data::get).collect()
    }
}

impl<T> DataArray<T> {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, index: usize) -> &Data<T> {
        &self.elements[index]
    }

    pub(crate) fn try_element(&self, index: usize) -> Option<&Data<T>> {
        self.elements.get(index)
    }
}

/// The set of indices of a [`DataArray`] a task depends on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayView {
    indices: Vec<usize>,
}

impl ArrayView {
    /// Every index in `0..len`.
    pub fn all(len: usize) -> Self {
        ArrayView {
            indices: (0..len).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

impl FromIterator<usize> for ArrayView {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        ArrayView {
            indices: iter.into_iter().collect(),
        }
    }
}

impl From<std::ops::Range<usize>> for ArrayView {
    fn from(range: std::ops::Range<usize>) -> Self {
        range.collect()
    }
}

impl From<Vec<usize>> for ArrayView {
    fn from(indices: Vec<usize>) -> Self {
        ArrayView { indices }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_stable_across_clones() {
        let a = Data::new(1);
        let b = a.clone();
        let c = Data::new(1);
        assert_eq!(a.key(), b.key());
        assert_ne!(a.key(), c.key());
        assert_eq!(a.key(), a.object().key());
    }

    #[test]
    fn twin_copy_duplicates_the_value() {
        let a = Data::new(vec![1u8, 2, 3]);
        let twin = a.object().twin();
        a.object().copy_into(twin.as_ref());
        let cell = twin.as_any().downcast_ref::<DataCell<Vec<u8>>>().unwrap();
        assert_eq!(*cell.read(), vec![1, 2, 3]);
        assert_ne!(twin.key(), a.key());
    }

    #[test]
    fn opaque_objects_are_not_duplicable() {
        let a = Data::opaque(std::sync::atomic::AtomicU32::new(0));
        assert!(!a.object().duplicable());
        assert!(Data::new(0u8).object().duplicable());
    }
}
