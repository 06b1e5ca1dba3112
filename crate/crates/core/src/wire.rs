//! Canonical serialization shared by every message and file format.
//!
//! Every field is a 4-byte big-endian length followed by the field bytes,
//! written in declared order. Integers are fixed-width big-endian inside
//! their field.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated input")]
    Truncated,
    #[error("field has length {found}, expected {expected}")]
    BadLength { expected: usize, found: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid value: {0}")]
    Invalid(&'static str),
}

#[derive(Default, Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, field: &[u8]) -> &mut Self {
        let len = u32::try_from(field.len()).expect("field longer than 4 GiB");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(field);
        self
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.bytes(&[v])
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    rest: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { rest: input }
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        if self.rest.len() < 4 {
            return Err(WireError::Truncated);
        }
        let (len, tail) = self.rest.split_at(4);
        let len = u32::from_be_bytes(len.try_into().unwrap()) as usize;
        if tail.len() < len {
            return Err(WireError::Truncated);
        }
        let (field, rest) = tail.split_at(len);
        self.rest = rest;
        Ok(field)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let field = self.bytes()?;
        field.try_into().map_err(|_| WireError::BadLength {
            expected: N,
            found: field.len(),
        })
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    pub fn finish(self) -> Result<(), WireError> {
        match self.rest.len() {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_length_prefixed_big_endian() {
        let mut enc = Encoder::new();
        enc.bytes(b"ab").u32(7);
        assert_eq!(enc.finish(), vec![0, 0, 0, 2, b'a', b'b', 0, 0, 0, 4, 0, 0, 0, 7]);
    }

    #[test]
    fn truncation_and_trailing_are_errors() {
        let mut enc = Encoder::new();
        enc.u64(42);
        let bytes = enc.finish();
        let mut dec = Decoder::new(&bytes[..bytes.len() - 1]);
        assert_eq!(dec.u64(), Err(WireError::Truncated));

        let mut extended = bytes.clone();
        extended.push(0);
        let mut dec = Decoder::new(&extended);
        assert_eq!(dec.u64().unwrap(), 42);
        assert_eq!(dec.finish(), Err(WireError::Trailing(1)));
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut enc = Encoder::new();
        enc.u32(1);
        let bytes = enc.finish();
        assert!(matches!(
            Decoder::new(&bytes).u64(),
            Err(WireError::BadLength { expected: 8, found: 4 })
        ));
    }

    proptest! {
        #[test]
        fn fields_round_trip(fields in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..64), 0..8)) {
            let mut enc = Encoder::new();
            for f in &fields {
                enc.bytes(f);
            }
            let bytes = enc.finish();
            let mut dec = Decoder::new(&bytes);
            for f in &fields {
                prop_assert_eq!(dec.bytes().unwrap(), f.as_slice());
            }
            prop_assert!(dec.finish().is_ok());
        }
    }
}
