//! Field-tagged serialization for structured types.
//!
//! A serialized value is a sequence of fields, each written as
//! `name length (u16 LE) | name | field length (u64 LE) | field bytes`, where
//! the field bytes are the field's own [`Transferable`] encoding.

use super::Transferable;
use crate::error::CommError;

/// Types that describe themselves field by field.
///
/// ```
/// use stf_core::comms::{Deserializer, Serializable, Serializer};
/// use stf_core::CommError;
///
/// #[derive(Debug, PartialEq)]
/// struct Point { x: i32, y: i32 }
///
/// impl Serializable for Point {
///     fn serialize(&self, s: &mut Serializer) {
///         s.append(&self.x, "x");
///         s.append(&self.y, "y");
///     }
///     fn deserialize(d: &mut Deserializer<'_>) -> Result<Self, CommError> {
///         Ok(Point { x: d.restore("x")?, y: d.restore("y")? })
///     }
/// }
/// ```
pub trait Serializable: Sized {
    fn serialize(&self, s: &mut Serializer);
    fn deserialize(d: &mut Deserializer<'_>) -> Result<Self, CommError>;
}

#[derive(Debug, Default)]
pub struct Serializer {
    buf: Vec<u8>,
}

impl Serializer {
    pub fn new() -> Self {
        Self::default()
    }

    /// # Panics
    /// If `name` is longer than `u16::MAX` bytes.
    pub fn append<T: Transferable>(&mut self, value: &T, name: &str) -> &mut Self {
        let name_len = u16::try_from(name.len()).expect("field name too long");
        let field = value.encode();
        self.buf.extend_from_slice(&name_len.to_le_bytes());
        self.buf.extend_from_slice(name.as_bytes());
        self.buf
            .extend_from_slice(&(field.len() as u64).to_le_bytes());
        self.buf.extend_from_slice(&field);
        self
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Deserializer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Deserializer<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Deserializer { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CommError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CommError::Decode("stream ends inside a field".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    /// Reads the next field, which must be called `name`.
    pub fn restore<T: Transferable>(&mut self, name: &str) -> Result<T, CommError> {
        let name_len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        let found = self.take(name_len)?;
        if found != name.as_bytes() {
            return Err(CommError::Decode(format!(
                "expected field {name:?}, found {:?}",
                String::from_utf8_lossy(found)
            )));
        }
        let len = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| CommError::Decode("field too long".into()))?;
        T::decode(self.take(len)?)
    }

    pub fn finish(self) -> Result<(), CommError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(CommError::Decode(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Matrix {
        rows: usize,
        cols: usize,
        values: Vec<f64>,
    }

    impl Serializable for Matrix {
        fn serialize(&self, s: &mut Serializer) {
            s.append(&self.rows, "nbRows")
                .append(&self.cols, "nbCols")
                .append(&self.values, "values");
        }

        fn deserialize(d: &mut Deserializer<'_>) -> Result<Self, CommError> {
            Ok(Matrix {
                rows: d.restore("nbRows")?,
                cols: d.restore("nbCols")?,
                values: d.restore("values")?,
            })
        }
    }

    #[test]
    fn stream_layout() {
        let mut s = Serializer::new();
        s.append(&7u8, "ab");
        assert_eq!(
            s.into_bytes(),
            vec![2, 0, b'a', b'b', 1, 0, 0, 0, 0, 0, 0, 0, 7]
        );
    }

    #[test]
    fn matrix_round_trip() {
        let m = Matrix {
            rows: 2,
            cols: 3,
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5],
        };
        let bytes = m.encode();
        assert_eq!(Matrix::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn wrong_name_or_trailing_data() {
        let mut s = Serializer::new();
        s.append(&1u32, "a");
        let bytes = s.into_bytes();
        let mut d = Deserializer::new(&bytes);
        assert!(d.restore::<u32>("b").is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        let mut d = Deserializer::new(&longer);
        assert_eq!(d.restore::<u32>("a").unwrap(), 1);
        assert!(d.finish().is_err());
        assert!(Deserializer::new(&bytes[..5]).restore::<u32>("a").is_err());
    }
}
