//! Serializer pass that rejects NaN and infinite floats before they reach
//! the wire. `serde_json` would otherwise emit them as `null`.

use std::fmt::Display;

use serde::ser::{self, Serialize};

#[derive(Debug)]
pub struct NonFiniteField(pub String);

impl Display for NonFiniteField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NonFiniteField {}

impl ser::Error for NonFiniteField {
    fn custom<T: Display>(msg: T) -> Self {
        Self(msg.to_string())
    }
}

/// Path of the first non-finite float in `value`, if any.
pub fn first_non_finite<T: Serialize + ?Sized>(value: &T) -> Option<String> {
    let mut path = Vec::new();
    match value.serialize(Checker { path: &mut path }) {
        Ok(()) => None,
        Err(e) => Some(e.0),
    }
}

struct Checker<'a> {
    path: &'a mut Vec<String>,
}

impl Checker<'_> {
    fn float(self, v: f64) -> Result<(), NonFiniteField> {
        if v.is_finite() {
            Ok(())
        } else {
            let p = if self.path.is_empty() {
                "$".to_string()
            } else {
                self.path.join(".")
            };
            Err(NonFiniteField(p))
        }
    }

    fn nested<T: Serialize + ?Sized>(&mut self, key: String, value: &T) -> Result<(), NonFiniteField> {
        self.path.push(key);
        let r = value.serialize(Checker { path: self.path });
        self.path.pop();
        r
    }
}

struct Compound<'a> {
    path: &'a mut Vec<String>,
    index: usize,
    key: String,
}

impl<'a> Compound<'a> {
    fn new(path: &'a mut Vec<String>) -> Self {
        Self {
            path,
            index: 0,
            key: String::new(),
        }
    }

    fn element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), NonFiniteField> {
        let key = self.index.to_string();
        self.index += 1;
        Checker { path: self.path }.nested(key, value)
    }

    fn field<T: Serialize + ?Sized>(&mut self, key: &str, value: &T) -> Result<(), NonFiniteField> {
        Checker { path: self.path }.nested(key.to_string(), value)
    }
}

macro_rules! ok_scalars {
    ($($name:ident: $t:ty),* $(,)?) => {
        $(fn $name(self, _: $t) -> Result<(), NonFiniteField> { Ok(()) })*
    };
}

impl<'a> ser::Serializer for Checker<'a> {
    type Ok = ();
    type Error = NonFiniteField;
    type SerializeSeq = Compound<'a>;
    type SerializeTuple = Compound<'a>;
    type SerializeTupleStruct = Compound<'a>;
    type SerializeTupleVariant = Compound<'a>;
    type SerializeMap = Compound<'a>;
    type SerializeStruct = Compound<'a>;
    type SerializeStructVariant = Compound<'a>;

    ok_scalars!(
        serialize_bool: bool,
        serialize_i8: i8,
        serialize_i16: i16,
        serialize_i32: i32,
        serialize_i64: i64,
        serialize_u8: u8,
        serialize_u16: u16,
        serialize_u32: u32,
        serialize_u64: u64,
        serialize_char: char,
        serialize_str: &str,
        serialize_bytes: &[u8],
    );

    fn serialize_f32(self, v: f32) -> Result<(), NonFiniteField> {
        self.float(f64::from(v))
    }

    fn serialize_f64(self, v: f64) -> Result<(), NonFiniteField> {
        self.float(v)
    }

    fn serialize_none(self) -> Result<(), NonFiniteField> {
        Ok(())
    }

    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> Result<(), NonFiniteField> {
        value.serialize(self)
    }

    fn serialize_unit(self) -> Result<(), NonFiniteField> {
        Ok(())
    }

    fn serialize_unit_struct(self, _: &'static str) -> Result<(), NonFiniteField> {
        Ok(())
    }

    fn serialize_unit_variant(self, _: &'static str, _: u32, _: &'static str) -> Result<(), NonFiniteField> {
        Ok(())
    }

    fn serialize_newtype_struct<T: Serialize + ?Sized>(self, _: &'static str, value: &T) -> Result<(), NonFiniteField> {
        value.serialize(self)
    }

    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        mut self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        value: &T,
    ) -> Result<(), NonFiniteField> {
        self.nested(variant.to_string(), value)
    }

    fn serialize_seq(self, _: Option<usize>) -> Result<Compound<'a>, NonFiniteField> {
        Ok(Compound::new(self.path))
    }

    fn serialize_tuple(self, _: usize) -> Result<Compound<'a>, NonFiniteField> {
        Ok(Compound::new(self.path))
    }

    fn serialize_tuple_struct(self, _: &'static str, _: usize) -> Result<Compound<'a>, NonFiniteField> {
        Ok(Compound::new(self.path))
    }

    fn serialize_tuple_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Compound<'a>, NonFiniteField> {
        Ok(Compound::new(self.path))
    }

    fn serialize_map(self, _: Option<usize>) -> Result<Compound<'a>, NonFiniteField> {
        Ok(Compound::new(self.path))
    }

    fn serialize_struct(self, _: &'static str, _: usize) -> Result<Compound<'a>, NonFiniteField> {
        Ok(Compound::new(self.path))
    }

    fn serialize_struct_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Compound<'a>, NonFiniteField> {
        Ok(Compound::new(self.path))
    }
}

impl ser::SerializeSeq for Compound<'_> {
    type Ok = ();
    type Error = NonFiniteField;

    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), NonFiniteField> {
        self.element(value)
    }

    fn end(self) -> Result<(), NonFiniteField> {
        Ok(())
    }
}

impl ser::SerializeTuple for Compound<'_> {
    type Ok = ();
    type Error = NonFiniteField;

    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), NonFiniteField> {
        self.element(value)
    }

    fn end(self) -> Result<(), NonFiniteField> {
        Ok(())
    }
}

impl ser::SerializeTupleStruct for Compound<'_> {
    type Ok = ();
    type Error = NonFiniteField;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), NonFiniteField> {
        self.element(value)
    }

    fn end(self) -> Result<(), NonFiniteField> {
        Ok(())
    }
}

impl ser::SerializeTupleVariant for Compound<'_> {
    type Ok = ();
    type Error = NonFiniteField;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), NonFiniteField> {
        self.element(value)
    }

    fn end(self) -> Result<(), NonFiniteField> {
        Ok(())
    }
}

/// Renders a map key for error paths.
struct KeyCapture;

impl ser::Serializer for KeyCapture {
    type Ok = String;
    type Error = NonFiniteField;
    type SerializeSeq = ser::Impossible<String, NonFiniteField>;
    type SerializeTuple = ser::Impossible<String, NonFiniteField>;
    type SerializeTupleStruct = ser::Impossible<String, NonFiniteField>;
    type SerializeTupleVariant = ser::Impossible<String, NonFiniteField>;
    type SerializeMap = ser::Impossible<String, NonFiniteField>;
    type SerializeStruct = ser::Impossible<String, NonFiniteField>;
    type SerializeStructVariant = ser::Impossible<String, NonFiniteField>;

    fn serialize_str(self, v: &str) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_bool(self, v: bool) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_i8(self, v: i8) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_i16(self, v: i16) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_i32(self, v: i32) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_i64(self, v: i64) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_u8(self, v: u8) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_u16(self, v: u16) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_u32(self, v: u32) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_u64(self, v: u64) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_f32(self, v: f32) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_f64(self, v: f64) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_char(self, v: char) -> Result<String, NonFiniteField> {
        Ok(v.to_string())
    }

    fn serialize_bytes(self, _: &[u8]) -> Result<String, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_none(self) -> Result<String, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> Result<String, NonFiniteField> {
        value.serialize(self)
    }

    fn serialize_unit(self) -> Result<String, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_unit_struct(self, name: &'static str) -> Result<String, NonFiniteField> {
        Ok(name.to_string())
    }

    fn serialize_unit_variant(self, _: &'static str, _: u32, variant: &'static str) -> Result<String, NonFiniteField> {
        Ok(variant.to_string())
    }

    fn serialize_newtype_struct<T: Serialize + ?Sized>(
        self,
        _: &'static str,
        value: &T,
    ) -> Result<String, NonFiniteField> {
        value.serialize(self)
    }

    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: &T,
    ) -> Result<String, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_seq(self, _: Option<usize>) -> Result<Self::SerializeSeq, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_tuple(self, _: usize) -> Result<Self::SerializeTuple, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_tuple_struct(self, _: &'static str, _: usize) -> Result<Self::SerializeTupleStruct, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_tuple_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Self::SerializeTupleVariant, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_map(self, _: Option<usize>) -> Result<Self::SerializeMap, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_struct(self, _: &'static str, _: usize) -> Result<Self::SerializeStruct, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }

    fn serialize_struct_variant(
        self,
        _: &'static str,
        _: u32,
        _: &'static str,
        _: usize,
    ) -> Result<Self::SerializeStructVariant, NonFiniteField> {
        Err(ser::Error::custom("key"))
    }
}

impl ser::SerializeMap for Compound<'_> {
    type Ok = ();
    type Error = NonFiniteField;

    fn serialize_key<T: Serialize + ?Sized>(&mut self, key: &T) -> Result<(), NonFiniteField> {
        self.key = key.serialize(KeyCapture).unwrap_or_else(|_| self.index.to_string());
        self.index += 1;
        Ok(())
    }

    fn serialize_value<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), NonFiniteField> {
        let key = std::mem::take(&mut self.key);
        Checker { path: self.path }.nested(key, value)
    }

    fn end(self) -> Result<(), NonFiniteField> {
        Ok(())
    }
}

impl ser::SerializeStruct for Compound<'_> {
    type Ok = ();
    type Error = NonFiniteField;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, key: &'static str, value: &T) -> Result<(), NonFiniteField> {
        self.field(key, value)
    }

    fn end(self) -> Result<(), NonFiniteField> {
        Ok(())
    }
}

impl ser::SerializeStructVariant for Compound<'_> {
    type Ok = ();
    type Error = NonFiniteField;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, key: &'static str, value: &T) -> Result<(), NonFiniteField> {
        self.field(key, value)
    }

    fn end(self) -> Result<(), NonFiniteField> {
        Ok(())
    }
}
