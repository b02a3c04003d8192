//! Canonical byte encoding for every hashed, signed or transported record.
//!
//! The format is a serde data format with no self-description:
//!
//! * every primitive (integer, bool, char, string, byte string) is written as
//!   a big-endian `u32` length followed by its bytes; integers use their fixed
//!   big-endian width,
//! * structs and tuples are the plain concatenation of their fields in
//!   declared order,
//! * sequences and maps carry a `u32` element count, then the elements (map
//!   entries as key then value, in iteration order, so only ordered maps are
//!   canonical),
//! * `Option` is a one-byte primitive tag (0 or 1) followed by the value,
//! * enum variants are the `u32` variant index (as a primitive) followed by
//!   the variant content.
//!
//! Top-level records are prefixed with a one-byte domain tag, see
//! [`encode_tagged`] and [`tags`].

use serde::de::{self, DeserializeSeed, EnumAccess, IntoDeserializer, SeqAccess, VariantAccess};
use serde::{ser, Deserialize, Serialize};
use std::fmt;

/// Domain separation tags. Every distinct hashed or signed structure gets its own.
pub mod tags {
    pub const ACC_LEAF: u8 = 0x01;
    pub const ACC_NODE: u8 = 0x02;
    pub const ACC_PAD: u8 = 0x03;
    pub const CREDENTIAL_ID: u8 = 0x04;
    pub const REVOCATION_STATE: u8 = 0x05;

    pub const CERTIFICATE: u8 = 0x10;
    pub const CERT_BUNDLE: u8 = 0x11;

    pub const DID_KEY: u8 = 0x20;
    pub const DID_ATTESTATION: u8 = 0x21;
    pub const REGISTRY_TX: u8 = 0x22;
    pub const REGISTRY_ACK: u8 = 0x23;
    pub const REGISTRY_STATE: u8 = 0x24;
    pub const REGISTRY_WIRE: u8 = 0x25;

    pub const MEMBERSHIP_VC: u8 = 0x30;
    pub const MEMBERLIST_VC: u8 = 0x31;
    pub const PRESENTATION: u8 = 0x32;
    pub const IDENTITY_BUNDLE: u8 = 0x33;

    pub const ENDORSEMENT: u8 = 0x40;
    pub const LEDGER_STATE: u8 = 0x41;
    pub const LEDGER_TX: u8 = 0x42;
    pub const DATA: u8 = 0x43;
    pub const LEDGER_LOG: u8 = 0x44;

    pub const ENVELOPE: u8 = 0x50;
    pub const SEAL_KEY: u8 = 0x51;
    pub const MESSAGE: u8 = 0x52;
    pub const TEST_MESSAGE: u8 = 0x5f;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("{0}")]
    Message(String),
    #[error("unexpected end of input")]
    Eof,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("primitive length {found}, expected {expected}")]
    BadLength { expected: usize, found: usize },
    #[error("domain tag {found:#04x}, expected {expected:#04x}")]
    BadTag { expected: u8, found: u8 },
    #[error("self-describing deserialization is not supported")]
    NotSelfDescribing,
}

impl ser::Error for CodecError {
    fn custom<T: fmt::Display>(msg: T) -> Self {
        CodecError::Message(msg.to_string())
    }
}

impl de::Error for CodecError {
    fn custom<T: fmt::Display>(msg: T) -> Self {
        CodecError::Message(msg.to_string())
    }
}

pub fn encode<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut enc = Encoder { out: Vec::new() };
    value
        .serialize(&mut enc)
        .expect("canonical encoding of in-memory values cannot fail");
    enc.out
}

pub fn encode_tagged<T: Serialize + ?Sized>(tag: u8, value: &T) -> Vec<u8> {
    let mut enc = Encoder { out: vec![tag] };
    value
        .serialize(&mut enc)
        .expect("canonical encoding of in-memory values cannot fail");
    enc.out
}

pub fn decode<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T, CodecError> {
    let mut de = Decoder { input: bytes };
    let value = T::deserialize(&mut de)?;
    if !de.input.is_empty() {
        return Err(CodecError::TrailingBytes(de.input.len()));
    }
    Ok(value)
}

pub fn decode_tagged<'a, T: Deserialize<'a>>(tag: u8, bytes: &'a [u8]) -> Result<T, CodecError> {
    match bytes.first() {
        None => Err(CodecError::Eof),
        Some(&found) if found != tag => Err(CodecError::BadTag { expected: tag, found }),
        Some(_) => decode(&bytes[1..]),
    }
}

struct Encoder {
    out: Vec<u8>,
}

impl Encoder {
    fn prim(&mut self, bytes: &[u8]) {
        self.out
            .extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        self.out.extend_from_slice(bytes);
    }

    fn count(&mut self, n: usize) {
        self.out.extend_from_slice(&(n as u32).to_be_bytes());
    }
}

impl ser::Serializer for &mut Encoder {
    type Ok = ();
    type Error = CodecError;
    type SerializeSeq = Self;
    type SerializeTuple = Self;
    type SerializeTupleStruct = Self;
    type SerializeTupleVariant = Self;
    type SerializeMap = Self;
    type SerializeStruct = Self;
    type SerializeStructVariant = Self;

    fn serialize_bool(self, v: bool) -> Result<(), CodecError> {
        self.prim(&[v as u8]);
        Ok(())
    }
    fn serialize_i8(self, v: i8) -> Result<(), CodecError> {
        self.prim(&v.to_be_bytes());
        Ok(())
    }
    fn serialize_i16(self, v: i16) -> Result<(), CodecError> {
        self.prim(&v.to_be_bytes());
        Ok(())
    }
    fn serialize_i32(self, v: i32) -> Result<(), CodecError> {
        self.prim(&v.to_be_bytes());
        Ok(())
    }
    fn serialize_i64(self, v: i64) -> Result<(), CodecError> {
        self.prim(&v.to_be_bytes());
        Ok(())
    }
    fn serialize_u8(self, v: u8) -> Result<(), CodecError> {
        self.prim(&[v]);
        Ok(())
    }
    fn serialize_u16(self, v: u16) -> Result<(), CodecError> {
        self.prim(&v.to_be_bytes());
        Ok(())
    }
    fn serialize_u32(self, v: u32) -> Result<(), CodecError> {
        self.prim(&v.to_be_bytes());
        Ok(())
    }
    fn serialize_u64(self, v: u64) -> Result<(), CodecError> {
        self.prim(&v.to_be_bytes());
        Ok(())
    }
    fn serialize_f32(self, v: f32) -> Result<(), CodecError> {
        self.prim(&v.to_bits().to_be_bytes());
        Ok(())
    }
    fn serialize_f64(self, v: f64) -> Result<(), CodecError> {
        self.prim(&v.to_bits().to_be_bytes());
        Ok(())
    }
    fn serialize_char(self, v: char) -> Result<(), CodecError> {
        let mut buf = [0u8; 4];
        self.prim(v.encode_utf8(&mut buf).as_bytes());
        Ok(())
    }
    fn serialize_str(self, v: &str) -> Result<(), CodecError> {
        self.prim(v.as_bytes());
        Ok(())
    }
    fn serialize_bytes(self, v: &[u8]) -> Result<(), CodecError> {
        self.prim(v);
        Ok(())
    }
    fn serialize_none(self) -> Result<(), CodecError> {
        self.prim(&[0]);
        Ok(())
    }
    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> Result<(), CodecError> {
        self.prim(&[1]);
        value.serialize(self)
    }
    fn serialize_unit(self) -> Result<(), CodecError> {
        Ok(())
    }
    fn serialize_unit_struct(self, _name: &'static str) -> Result<(), CodecError> {
        Ok(())
    }
    fn serialize_unit_variant(
        self,
        _name: &'static str,
        index: u32,
        _variant: &'static str,
    ) -> Result<(), CodecError> {
        self.serialize_u32(index)
    }
    fn serialize_newtype_struct<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        value: &T,
    ) -> Result<(), CodecError> {
        value.serialize(self)
    }
    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        index: u32,
        _variant: &'static str,
        value: &T,
    ) -> Result<(), CodecError> {
        self.serialize_u32(index)?;
        value.serialize(self)
    }
    fn serialize_seq(self, len: Option<usize>) -> Result<Self, CodecError> {
        let len = len.ok_or_else(|| CodecError::Message("sequence length required".into()))?;
        self.count(len);
        Ok(self)
    }
    fn serialize_tuple(self, _len: usize) -> Result<Self, CodecError> {
        Ok(self)
    }
    fn serialize_tuple_struct(self, _name: &'static str, _len: usize) -> Result<Self, CodecError> {
        Ok(self)
    }
    fn serialize_tuple_variant(
        self,
        _name: &'static str,
        index: u32,
        _variant: &'static str,
        _len: usize,
    ) -> Result<Self, CodecError> {
        self.serialize_u32(index)?;
        Ok(self)
    }
    fn serialize_map(self, len: Option<usize>) -> Result<Self, CodecError> {
        let len = len.ok_or_else(|| CodecError::Message("map length required".into()))?;
        self.count(len);
        Ok(self)
    }
    fn serialize_struct(self, _name: &'static str, _len: usize) -> Result<Self, CodecError> {
        Ok(self)
    }
    fn serialize_struct_variant(
        self,
        _name: &'static str,
        index: u32,
        _variant: &'static str,
        _len: usize,
    ) -> Result<Self, CodecError> {
        self.serialize_u32(index)?;
        Ok(self)
    }
    fn is_human_readable(&self) -> bool {
        false
    }
}

macro_rules! compound {
    ($($tr:ident :: $method:ident),*) => {
        $(
            impl<'a> ser::$tr for &'a mut Encoder {
                type Ok = ();
                type Error = CodecError;
                fn $method<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CodecError> {
                    value.serialize(&mut **self)
                }
                fn end(self) -> Result<(), CodecError> {
                    Ok(())
                }
            }
        )*
    };
}

compound!(
    SerializeSeq::serialize_element,
    SerializeTuple::serialize_element,
    SerializeTupleStruct::serialize_field,
    SerializeTupleVariant::serialize_field
);

impl ser::SerializeMap for &mut Encoder {
    type Ok = ();
    type Error = CodecError;
    fn serialize_key<T: Serialize + ?Sized>(&mut self, key: &T) -> Result<(), CodecError> {
        key.serialize(&mut **self)
    }
    fn serialize_value<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CodecError> {
        value.serialize(&mut **self)
    }
    fn end(self) -> Result<(), CodecError> {
        Ok(())
    }
}

impl ser::SerializeStruct for &mut Encoder {
    type Ok = ();
    type Error = CodecError;
    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        _key: &'static str,
        value: &T,
    ) -> Result<(), CodecError> {
        value.serialize(&mut **self)
    }
    fn end(self) -> Result<(), CodecError> {
        Ok(())
    }
}

impl ser::SerializeStructVariant for &mut Encoder {
    type Ok = ();
    type Error = CodecError;
    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        _key: &'static str,
        value: &T,
    ) -> Result<(), CodecError> {
        value.serialize(&mut **self)
    }
    fn end(self) -> Result<(), CodecError> {
        Ok(())
    }
}

struct Decoder<'de> {
    input: &'de [u8],
}

impl<'de> Decoder<'de> {
    fn take(&mut self, n: usize) -> Result<&'de [u8], CodecError> {
        if self.input.len() < n {
            return Err(CodecError::Eof);
        }
        let (head, rest) = self.input.split_at(n);
        self.input = rest;
        Ok(head)
    }

    fn count(&mut self) -> Result<usize, CodecError> {
        let raw = self.take(4)?;
        Ok(u32::from_be_bytes(raw.try_into().expect("4 bytes")) as usize)
    }

    fn prim(&mut self) -> Result<&'de [u8], CodecError> {
        let len = self.count()?;
        self.take(len)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let raw = self.prim()?;
        raw.try_into().map_err(|_| CodecError::BadLength {
            expected: N,
            found: raw.len(),
        })
    }
}

macro_rules! de_int {
    ($method:ident, $visit:ident, $ty:ty) => {
        fn $method<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
            visitor.$visit(<$ty>::from_be_bytes(self.fixed()?))
        }
    };
}

impl<'de> de::Deserializer<'de> for &mut Decoder<'de> {
    type Error = CodecError;

    fn deserialize_any<V: de::Visitor<'de>>(self, _visitor: V) -> Result<V::Value, CodecError> {
        Err(CodecError::NotSelfDescribing)
    }

    fn deserialize_bool<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        let [b] = self.fixed::<1>()?;
        match b {
            0 => visitor.visit_bool(false),
            1 => visitor.visit_bool(true),
            other => Err(CodecError::Message(format!("invalid bool byte {other}"))),
        }
    }

    de_int!(deserialize_i8, visit_i8, i8);
    de_int!(deserialize_i16, visit_i16, i16);
    de_int!(deserialize_i32, visit_i32, i32);
    de_int!(deserialize_i64, visit_i64, i64);
    de_int!(deserialize_u8, visit_u8, u8);
    de_int!(deserialize_u16, visit_u16, u16);
    de_int!(deserialize_u32, visit_u32, u32);
    de_int!(deserialize_u64, visit_u64, u64);

    fn deserialize_f32<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        visitor.visit_f32(f32::from_bits(u32::from_be_bytes(self.fixed()?)))
    }

    fn deserialize_f64<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        visitor.visit_f64(f64::from_bits(u64::from_be_bytes(self.fixed()?)))
    }

    fn deserialize_char<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        let raw = self.prim()?;
        let s = std::str::from_utf8(raw).map_err(|e| CodecError::Message(e.to_string()))?;
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => visitor.visit_char(c),
            _ => Err(CodecError::Message("expected a single char".into())),
        }
    }

    fn deserialize_str<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        let raw = self.prim()?;
        let s = std::str::from_utf8(raw).map_err(|e| CodecError::Message(e.to_string()))?;
        visitor.visit_borrowed_str(s)
    }

    fn deserialize_string<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        self.deserialize_str(visitor)
    }

    fn deserialize_bytes<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        visitor.visit_borrowed_bytes(self.prim()?)
    }

    fn deserialize_byte_buf<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        self.deserialize_bytes(visitor)
    }

    fn deserialize_option<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        let [b] = self.fixed::<1>()?;
        match b {
            0 => visitor.visit_none(),
            1 => visitor.visit_some(self),
            other => Err(CodecError::Message(format!("invalid option tag {other}"))),
        }
    }

    fn deserialize_unit<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        visitor.visit_unit()
    }

    fn deserialize_unit_struct<V: de::Visitor<'de>>(
        self,
        _name: &'static str,
        visitor: V,
    ) -> Result<V::Value, CodecError> {
        visitor.visit_unit()
    }

    fn deserialize_newtype_struct<V: de::Visitor<'de>>(
        self,
        _name: &'static str,
        visitor: V,
    ) -> Result<V::Value, CodecError> {
        visitor.visit_newtype_struct(self)
    }

    fn deserialize_seq<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        let len = self.count()?;
        visitor.visit_seq(Counted { de: self, left: len })
    }

    fn deserialize_tuple<V: de::Visitor<'de>>(
        self,
        len: usize,
        visitor: V,
    ) -> Result<V::Value, CodecError> {
        visitor.visit_seq(Counted { de: self, left: len })
    }

    fn deserialize_tuple_struct<V: de::Visitor<'de>>(
        self,
        _name: &'static str,
        len: usize,
        visitor: V,
    ) -> Result<V::Value, CodecError> {
        visitor.visit_seq(Counted { de: self, left: len })
    }

    fn deserialize_map<V: de::Visitor<'de>>(self, visitor: V) -> Result<V::Value, CodecError> {
        let len = self.count()?;
        visitor.visit_map(Counted { de: self, left: len })
    }

    fn deserialize_struct<V: de::Visitor<'de>>(
        self,
        _name: &'static str,
        fields: &'static [&'static str],
        visitor: V,
    ) -> Result<V::Value, CodecError> {
        visitor.visit_seq(Counted {
            de: self,
            left: fields.len(),
        })
    }

    fn deserialize_enum<V: de::Visitor<'de>>(
        self,
        _name: &'static str,
        _variants: &'static [&'static str],
        visitor: V,
    ) -> Result<V::Value, CodecError> {
        visitor.visit_enum(self)
    }

    fn deserialize_identifier<V: de::Visitor<'de>>(
        self,
        _visitor: V,
    ) -> Result<V::Value, CodecError> {
        Err(CodecError::NotSelfDescribing)
    }

    fn deserialize_ignored_any<V: de::Visitor<'de>>(
        self,
        _visitor: V,
    ) -> Result<V::Value, CodecError> {
        Err(CodecError::NotSelfDescribing)
    }

    fn is_human_readable(&self) -> bool {
        false
    }
}

struct Counted<'a, 'de> {
    de: &'a mut Decoder<'de>,
    left: usize,
}

impl<'de, 'a> SeqAccess<'de> for Counted<'a, 'de> {
    type Error = CodecError;

    fn next_element_seed<T: DeserializeSeed<'de>>(
        &mut self,
        seed: T,
    ) -> Result<Option<T::Value>, CodecError> {
        if self.left == 0 {
            return Ok(None);
        }
        self.left -= 1;
        seed.deserialize(&mut *self.de).map(Some)
    }

    fn size_hint(&self) -> Option<usize> {
        Some(self.left)
    }
}

impl<'de, 'a> de::MapAccess<'de> for Counted<'a, 'de> {
    type Error = CodecError;

    fn next_key_seed<K: DeserializeSeed<'de>>(
        &mut self,
        seed: K,
    ) -> Result<Option<K::Value>, CodecError> {
        if self.left == 0 {
            return Ok(None);
        }
        self.left -= 1;
        seed.deserialize(&mut *self.de).map(Some)
    }

    fn next_value_seed<V: DeserializeSeed<'de>>(&mut self, seed: V) -> Result<V::Value, CodecError> {
        seed.deserialize(&mut *self.de)
    }

    fn size_hint(&self) -> Option<usize> {
        Some(self.left)
    }
}

impl<'de> EnumAccess<'de> for &mut Decoder<'de> {
    type Error = CodecError;
    type Variant = Self;

    fn variant_seed<V: DeserializeSeed<'de>>(self, seed: V) -> Result<(V::Value, Self), CodecError> {
        let index = u32::from_be_bytes(self.fixed()?);
        let value = seed.deserialize::<de::value::U32Deserializer<CodecError>>(
            index.into_deserializer(),
        )?;
        Ok((value, self))
    }
}

impl<'de> VariantAccess<'de> for &mut Decoder<'de> {
    type Error = CodecError;

    fn unit_variant(self) -> Result<(), CodecError> {
        Ok(())
    }

    fn newtype_variant_seed<T: DeserializeSeed<'de>>(self, seed: T) -> Result<T::Value, CodecError> {
        seed.deserialize(self)
    }

    fn tuple_variant<V: de::Visitor<'de>>(
        self,
        len: usize,
        visitor: V,
    ) -> Result<V::Value, CodecError> {
        visitor.visit_seq(Counted { de: self, left: len })
    }

    fn struct_variant<V: de::Visitor<'de>>(
        self,
        fields: &'static [&'static str],
        visitor: V,
    ) -> Result<V::Value, CodecError> {
        visitor.visit_seq(Counted {
            de: self,
            left: fields.len(),
        })
    }
}

/// Serde helper for fixed-size byte arrays: a byte-string primitive in the
/// canonical format, lowercase hex in human-readable formats.
pub mod hex_bytes {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        bytes: &[u8; N],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        if s.is_human_readable() {
            s.serialize_str(&hex::encode(bytes))
        } else {
            s.serialize_bytes(bytes)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        d: D,
    ) -> Result<[u8; N], D::Error> {
        let raw: Vec<u8> = if d.is_human_readable() {
            let s = String::deserialize(d)?;
            hex::decode(s).map_err(D::Error::custom)?
        } else {
            serde_bytes_compat::deserialize(d)?
        };
        raw.as_slice()
            .try_into()
            .map_err(|_| D::Error::custom(format!("expected {N} bytes, got {}", raw.len())))
    }

    pub(crate) mod serde_bytes_compat {
        use serde::de::{Deserializer, Visitor};
        use std::fmt;

        struct BytesVisitor;

        impl<'de> Visitor<'de> for BytesVisitor {
            type Value = Vec<u8>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a byte string")
            }
            fn visit_bytes<E>(self, v: &[u8]) -> Result<Vec<u8>, E> {
                Ok(v.to_vec())
            }
            fn visit_byte_buf<E>(self, v: Vec<u8>) -> Result<Vec<u8>, E> {
                Ok(v)
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
            d.deserialize_bytes(BytesVisitor)
        }
    }
}

/// Serde helper for variable-length byte strings (`Vec<u8>`).
pub mod byte_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        if s.is_human_readable() {
            s.serialize_str(&hex::encode(bytes))
        } else {
            s.serialize_bytes(bytes)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        if d.is_human_readable() {
            let s = String::deserialize(d)?;
            hex::decode(s).map_err(serde::de::Error::custom)
        } else {
            super::hex_bytes::serde_bytes_compat::deserialize(d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    enum Shape {
        Unit,
        Wrapped(u16),
        Pair(u8, String),
        Named { id: u64, tags: Vec<String> },
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Record {
        name: String,
        count: u32,
        flag: bool,
        maybe: Option<i64>,
        shapes: Vec<Shape>,
        index: BTreeMap<String, u8>,
        #[serde(with = "hex_bytes")]
        key: [u8; 4],
    }

    #[test]
    fn byte_exact_layout_of_simple_struct() {
        #[derive(Serialize)]
        struct Two {
            a: String,
            b: u16,
        }
        let bytes = encode_tagged(0x7e, &Two { a: "hi".into(), b: 0x0102 });
        assert_eq!(
            bytes,
            vec![0x7e, 0, 0, 0, 2, b'h', b'i', 0, 0, 0, 2, 0x01, 0x02]
        );
    }

    #[test]
    fn enum_and_option_layout() {
        assert_eq!(encode(&Shape::Wrapped(7)), vec![0, 0, 0, 4, 0, 0, 0, 1, 0, 0, 0, 2, 0, 7]);
        assert_eq!(encode(&Option::<u8>::None), vec![0, 0, 0, 1, 0]);
        assert_eq!(encode(&vec![1u8]), vec![0, 0, 0, 1, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn roundtrip_nested_record() {
        let mut index = BTreeMap::new();
        index.insert("x".to_string(), 1);
        index.insert("y".to_string(), 2);
        let rec = Record {
            name: "STL".into(),
            count: 9,
            flag: true,
            maybe: Some(-3),
            shapes: vec![
                Shape::Unit,
                Shape::Wrapped(1),
                Shape::Pair(2, "p".into()),
                Shape::Named { id: 5, tags: vec!["a".into()] },
            ],
            index,
            key: [1, 2, 3, 4],
        };
        let bytes = encode_tagged(0x11, &rec);
        let back: Record = decode_tagged(0x11, &bytes).unwrap();
        assert_eq!(back, rec);
        assert_eq!(
            decode_tagged::<Record>(0x12, &bytes),
            Err(CodecError::BadTag { expected: 0x12, found: 0x11 })
        );
    }

    #[test]
    fn truncated_and_trailing_input_rejected() {
        let bytes = encode(&("a".to_string(), 3u32));
        assert!(decode::<(String, u32)>(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(decode::<(String, u32)>(&extra), Err(CodecError::TrailingBytes(1)));
    }
}
