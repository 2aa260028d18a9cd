//! Just enough of a Python pickle interpreter to read the citation dataset
//! files: numpy arrays, scipy CSR/CSC matrices, lists and (default)dicts.
//! Unknown callables produce opaque objects instead of running code.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Bytes(Vec<u8>),
    Tuple(Rc<Vec<Value>>),
    List(Rc<RefCell<Vec<Value>>>),
    Dict(Rc<RefCell<Vec<(Value, Value)>>>),
    Global(String, String),
    Object(Rc<RefCell<Object>>),
}

#[derive(Debug)]
pub(crate) struct Object {
    pub module: String,
    pub name: String,
    pub args: Vec<Value>,
    pub state: Option<Value>,
}

enum Item {
    Mark,
    V(Value),
}

fn perr(pos: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("pickle byte {pos}"),
        message: message.into(),
    }
}

struct Machine<'a> {
    bytes: &'a [u8],
    pos: usize,
    stack: Vec<Item>,
    memo: HashMap<u64, Value>,
}

impl<'a> Machine<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(perr(self.pos, "unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn le(&mut self, n: usize) -> Result<u64> {
        let b = self.take(n)?;
        Ok(b.iter().rev().fold(0u64, |acc, &x| (acc << 8) | x as u64))
    }

    fn line(&mut self) -> Result<&'a str> {
        let start = self.pos;
        let end = self.bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| perr(start, "unterminated line"))?;
        self.pos = start + end + 1;
        std::str::from_utf8(&self.bytes[start..start + end]).map_err(|_| perr(start, "non-UTF-8 line"))
    }

    fn push(&mut self, v: Value) {
        self.stack.push(Item::V(v));
    }

    fn pop(&mut self) -> Result<Value> {
        match self.stack.pop() {
            Some(Item::V(v)) => Ok(v),
            Some(Item::Mark) => Err(perr(self.pos, "unexpected mark")),
            None => Err(perr(self.pos, "stack underflow")),
        }
    }

    fn top(&self) -> Result<&Value> {
        match self.stack.last() {
            Some(Item::V(v)) => Ok(v),
            _ => Err(perr(self.pos, "no value on stack")),
        }
    }

    fn pop_mark(&mut self) -> Result<Vec<Value>> {
        let mut items = Vec::new();
        loop {
            match self.stack.pop() {
                Some(Item::V(v)) => items.push(v),
                Some(Item::Mark) => break,
                None => return Err(perr(self.pos, "missing mark")),
            }
        }
        items.reverse();
        Ok(items)
    }

    fn memo_put(&mut self, key: u64) -> Result<()> {
        let v = self.top()?.clone();
        self.memo.insert(key, v);
        Ok(())
    }

    fn memo_get(&mut self, key: u64) -> Result<()> {
        let v = self.memo.get(&key).cloned().ok_or_else(|| perr(self.pos, format!("memo key {key} unset")))?;
        self.push(v);
        Ok(())
    }

    fn run(mut self) -> Result<Value> {
        loop {
            let at = self.pos;
            let op = self.u8()?;
            match op {
                0x80 => {
                    let proto = self.u8()?;
                    if proto > 5 {
                        return Err(perr(at, format!("unsupported protocol {proto}")));
                    }
                }
                0x95 => {
                    self.take(8)?;
                }
                b'.' => return self.pop(),
                b'(' => self.stack.push(Item::Mark),
                b'0' => {
                    self.pop()?;
                }
                b'2' => {
                    let v = self.top()?.clone();
                    self.push(v);
                }
                b'1' => {
                    self.pop_mark()?;
                }
                b'N' => self.push(Value::None),
                0x88 => self.push(Value::Bool(true)),
                0x89 => self.push(Value::Bool(false)),
                b'J' => {
                    let v = self.le(4)? as u32 as i32 as i64;
                    self.push(Value::Int(v));
                }
                b'K' => {
                    let v = self.u8()? as i64;
                    self.push(Value::Int(v));
                }
                b'M' => {
                    let v = self.le(2)? as i64;
                    self.push(Value::Int(v));
                }
                0x8a | 0x8b => {
                    let n = if op == 0x8a { self.u8()? as usize } else { self.le(4)? as usize };
                    let b = self.take(n)?;
                    if n > 8 {
                        return Err(perr(at, "integer wider than 64 bits"));
                    }
                    let mut v: i64 = 0;
                    for (k, &x) in b.iter().enumerate() {
                        v |= (x as i64) << (8 * k);
                    }
                    if n > 0 && n < 8 && b[n - 1] & 0x80 != 0 {
                        v -= 1i64 << (8 * n);
                    }
                    self.push(Value::Int(v));
                }
                b'I' => {
                    let l = self.line()?;
                    let v = match l {
                        "01" => Value::Bool(true),
                        "00" => Value::Bool(false),
                        _ => Value::Int(l.parse().map_err(|_| perr(at, format!("bad INT {l:?}")))?),
                    };
                    self.push(v);
                }
                b'L' => {
                    let l = self.line()?.trim_end_matches('L');
                    let v = l.parse().map_err(|_| perr(at, format!("bad LONG {l:?}")))?;
                    self.push(Value::Int(v));
                }
                b'G' => {
                    let v = f64::from_be_bytes(self.take(8)?.try_into().unwrap());
                    self.push(Value::Float(v));
                }
                b'F' => {
                    let l = self.line()?;
                    let v = l.parse().map_err(|_| perr(at, format!("bad FLOAT {l:?}")))?;
                    self.push(Value::Float(v));
                }
                b'U' | b'T' => {
                    // py2 str: raw bytes
                    let n = if op == b'U' { self.u8()? as usize } else { self.le(4)? as usize };
                    let b = self.take(n)?.to_vec();
                    self.push(Value::Bytes(b));
                }
                b'C' | b'B' | 0x8e => {
                    let n = match op {
                        b'C' => self.u8()? as usize,
                        b'B' => self.le(4)? as usize,
                        _ => self.le(8)? as usize,
                    };
                    let b = self.take(n)?.to_vec();
                    self.push(Value::Bytes(b));
                }
                0x8c | b'X' | 0x8d => {
                    let n = match op {
                        0x8c => self.u8()? as usize,
                        b'X' => self.le(4)? as usize,
                        _ => self.le(8)? as usize,
                    };
                    let b = self.take(n)?;
                    let s = std::str::from_utf8(b).map_err(|_| perr(at, "invalid UTF-8 string"))?;
                    self.push(Value::Str(s.to_string()));
                }
                b'S' => {
                    let l = self.line()?;
                    let b = unescape_repr(l).ok_or_else(|| perr(at, "bad STRING literal"))?;
                    self.push(Value::Bytes(b));
                }
                b'V' => {
                    let l = self.line()?;
                    self.push(Value::Str(unescape_raw_unicode(l)));
                }
                b')' => self.push(Value::Tuple(Rc::new(Vec::new()))),
                b't' => {
                    let items = self.pop_mark()?;
                    self.push(Value::Tuple(Rc::new(items)));
                }
                0x85..=0x87 => {
                    let n = (op - 0x84) as usize;
                    let mut items = Vec::with_capacity(n);
                    for _ in 0..n {
                        items.push(self.pop()?);
                    }
                    items.reverse();
                    self.push(Value::Tuple(Rc::new(items)));
                }
                b']' => self.push(Value::List(Rc::new(RefCell::new(Vec::new())))),
                b'l' => {
                    let items = self.pop_mark()?;
                    self.push(Value::List(Rc::new(RefCell::new(items))));
                }
                b'a' => {
                    let v = self.pop()?;
                    append(self.top()?, vec![v], at)?;
                }
                b'e' => {
                    let items = self.pop_mark()?;
                    append(self.top()?, items, at)?;
                }
                b'}' => self.push(Value::Dict(Rc::new(RefCell::new(Vec::new())))),
                b'd' => {
                    let items = self.pop_mark()?;
                    let pairs = pairs_of(items, at)?;
                    self.push(Value::Dict(Rc::new(RefCell::new(pairs))));
                }
                b's' => {
                    let v = self.pop()?;
                    let k = self.pop()?;
                    set_items(self.top()?, vec![(k, v)], at)?;
                }
                b'u' => {
                    let items = self.pop_mark()?;
                    let pairs = pairs_of(items, at)?;
                    set_items(self.top()?, pairs, at)?;
                }
                0x8f => self.push(Value::List(Rc::new(RefCell::new(Vec::new())))),
                0x90 => {
                    let items = self.pop_mark()?;
                    append(self.top()?, items, at)?;
                }
                0x91 => {
                    let items = self.pop_mark()?;
                    self.push(Value::List(Rc::new(RefCell::new(items))));
                }
                b'c' => {
                    let module = self.line()?.to_string();
                    let name = self.line()?.to_string();
                    self.push(Value::Global(module, name));
                }
                0x93 => {
                    let name = self.pop()?;
                    let module = self.pop()?;
                    match (module, name) {
                        (Value::Str(m), Value::Str(n)) => self.push(Value::Global(m, n)),
                        _ => return Err(perr(at, "STACK_GLOBAL expects two strings")),
                    }
                }
                b'R' => {
                    let args = self.pop()?;
                    let callable = self.pop()?;
                    let v = reduce(callable, args, at)?;
                    self.push(v);
                }
                0x81 => {
                    let args = self.pop()?;
                    let cls = self.pop()?;
                    let v = new_object(cls, tuple_items(&args), at)?;
                    self.push(v);
                }
                0x92 => {
                    let _kwargs = self.pop()?;
                    let args = self.pop()?;
                    let cls = self.pop()?;
                    let v = new_object(cls, tuple_items(&args), at)?;
                    self.push(v);
                }
                b'b' => {
                    let state = self.pop()?;
                    build(self.top()?, state, at)?;
                }
                b'p' => {
                    let l = self.line()?;
                    let k = l.parse().map_err(|_| perr(at, "bad PUT"))?;
                    self.memo_put(k)?;
                }
                b'q' => {
                    let k = self.u8()? as u64;
                    self.memo_put(k)?;
                }
                b'r' => {
                    let k = self.le(4)?;
                    self.memo_put(k)?;
                }
                0x94 => {
                    let k = self.memo.len() as u64;
                    self.memo_put(k)?;
                }
                b'g' => {
                    let l = self.line()?;
                    let k = l.parse().map_err(|_| perr(at, "bad GET"))?;
                    self.memo_get(k)?;
                }
                b'h' => {
                    let k = self.u8()? as u64;
                    self.memo_get(k)?;
                }
                b'j' => {
                    let k = self.le(4)?;
                    self.memo_get(k)?;
                }
                other => return Err(perr(at, format!("unsupported opcode 0x{other:02x}"))),
            }
        }
    }
}

fn tuple_items(v: &Value) -> Vec<Value> {
    match v {
        Value::Tuple(t) => t.as_ref().clone(),
        other => vec![other.clone()],
    }
}

fn pairs_of(items: Vec<Value>, at: usize) -> Result<Vec<(Value, Value)>> {
    if items.len() % 2 != 0 {
        return Err(perr(at, "odd number of dict items"));
    }
    let mut it = items.into_iter();
    let mut out = Vec::new();
    while let (Some(k), Some(v)) = (it.next(), it.next()) {
        out.push((k, v));
    }
    Ok(out)
}

fn append(target: &Value, items: Vec<Value>, at: usize) -> Result<()> {
    match target {
        Value::List(l) => {
            l.borrow_mut().extend(items);
            Ok(())
        }
        _ => Err(perr(at, "APPEND target is not a list")),
    }
}

fn set_items(target: &Value, pairs: Vec<(Value, Value)>, at: usize) -> Result<()> {
    match target {
        Value::Dict(d) => {
            d.borrow_mut().extend(pairs);
            Ok(())
        }
        Value::Object(o) => {
            // dict subclasses reconstructed as objects keep items as state
            let mut o = o.borrow_mut();
            let state = o.state.get_or_insert_with(|| Value::Dict(Rc::new(RefCell::new(Vec::new()))));
            set_items(state, pairs, at)
        }
        _ => Err(perr(at, "SETITEM target is not a dict")),
    }
}

fn new_object(cls: Value, args: Vec<Value>, at: usize) -> Result<Value> {
    match cls {
        Value::Global(module, name) => {
            if is_dict_class(&module, &name) {
                return Ok(Value::Dict(Rc::new(RefCell::new(Vec::new()))));
            }
            Ok(Value::Object(Rc::new(RefCell::new(Object {
                module,
                name,
                args,
                state: None,
            }))))
        }
        _ => Err(perr(at, "object class is not a global")),
    }
}

fn is_dict_class(module: &str, name: &str) -> bool {
    matches!(
        (module, name),
        ("collections", "defaultdict") | ("collections", "OrderedDict") | ("builtins", "dict") | ("__builtin__", "dict")
    )
}

fn reduce(callable: Value, args: Value, at: usize) -> Result<Value> {
    let args = tuple_items(&args);
    let Value::Global(module, name) = &callable else {
        return Err(perr(at, "REDUCE on a non-global callable"));
    };
    match (module.as_str(), name.as_str()) {
        ("_codecs", "encode") => match args.first() {
            // latin-1 maps each code point below 256 to one byte
            Some(Value::Str(s)) => Ok(Value::Bytes(s.chars().map(|c| c as u32 as u8).collect())),
            _ => Err(perr(at, "_codecs.encode expects a string")),
        },
        (m, n) if is_dict_class(m, n) => Ok(Value::Dict(Rc::new(RefCell::new(Vec::new())))),
        ("copy_reg", "_reconstructor") | ("copyreg", "_reconstructor") => match args.first() {
            Some(cls) => new_object(cls.clone(), Vec::new(), at),
            None => Err(perr(at, "_reconstructor without a class")),
        },
        ("__builtin__", "set") | ("builtins", "set") | ("__builtin__", "frozenset") | ("builtins", "frozenset") => {
            let items = match args.first() {
                Some(Value::List(l)) => l.borrow().clone(),
                _ => Vec::new(),
            };
            Ok(Value::List(Rc::new(RefCell::new(items))))
        }
        _ => new_object(callable.clone(), args, at),
    }
}

fn build(target: &Value, state: Value, at: usize) -> Result<()> {
    match target {
        Value::Object(o) => {
            o.borrow_mut().state = Some(state);
            Ok(())
        }
        Value::Dict(_) => {
            if let Value::Dict(d) = state {
                set_items(target, d.borrow().clone(), at)?;
            }
            Ok(())
        }
        _ => Err(perr(at, "BUILD on an unsupported target")),
    }
}

fn unescape_repr(l: &str) -> Option<Vec<u8>> {
    let l = l.trim();
    let q = l.chars().next()?;
    if (q != '\'' && q != '"') || !l.ends_with(q) || l.len() < 2 {
        return None;
    }
    let inner = &l.as_bytes()[1..l.len() - 1];
    let mut out = Vec::with_capacity(inner.len());
    let mut i = 0;
    while i < inner.len() {
        if inner[i] == b'\\' && i + 1 < inner.len() {
            i += 1;
            match inner[i] {
                b'n' => out.push(b'\n'),
                b't' => out.push(b'\t'),
                b'r' => out.push(b'\r'),
                b'x' if i + 2 < inner.len() + 1 => {
                    let hex = std::str::from_utf8(inner.get(i + 1..i + 3)?).ok()?;
                    out.push(u8::from_str_radix(hex, 16).ok()?);
                    i += 2;
                }
                c => out.push(c),
            }
        } else {
            out.push(inner[i]);
        }
        i += 1;
    }
    Some(out)
}

fn unescape_raw_unicode(l: &str) -> String {
    let mut out = String::new();
    let mut chars = l.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\\' && chars.peek() == Some(&'u') {
            chars.next();
            let hex: String = chars.by_ref().take(4).collect();
            if let Some(ch) = u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                out.push(ch);
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub(crate) fn loads(bytes: &[u8]) -> Result<Value> {
    Machine {
        bytes,
        pos: 0,
        stack: Vec::new(),
        memo: HashMap::new(),
    }
    .run()
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            Value::Bool(b) => Some(*b as i64),
            Value::Float(f) if f.fract() == 0.0 => Some(*f as i64),
            Value::Object(o) => {
                // numpy scalar: scalar(dtype, bytes)
                let o = o.borrow();
                if o.name == "scalar" && o.args.len() == 2 {
                    let dt = parse_dtype(&o.args[0]).ok()?;
                    let Value::Bytes(b) = &o.args[1] else { return None };
                    return decode(&dt, b).ok()?.first().map(|v| *v as i64);
                }
                None
            }
            _ => None,
        }
    }

    pub fn list_items(&self) -> Option<Vec<Value>> {
        match self {
            Value::List(l) => Some(l.borrow().clone()),
            Value::Tuple(t) => Some(t.as_ref().clone()),
            _ => None,
        }
    }

    pub fn dict_items(&self) -> Option<Vec<(Value, Value)>> {
        match self {
            Value::Dict(d) => Some(d.borrow().clone()),
            _ => None,
        }
    }

    fn dict_get(&self, key: &str) -> Option<Value> {
        self.dict_items()?.into_iter().find_map(|(k, v)| match &k {
            Value::Str(s) if s == key => Some(v),
            Value::Bytes(b) if b == key.as_bytes() => Some(v),
            _ => None,
        })
    }
}

#[derive(Debug, Clone)]
struct Dtype {
    kind: char,
    size: usize,
    big_endian: bool,
}

fn parse_dtype(v: &Value) -> Result<Dtype> {
    let Value::Object(o) = v else {
        return Err(Error::Dataset("dtype is not an object".into()));
    };
    let o = o.borrow();
    let code = match o.args.first() {
        Some(Value::Str(s)) => s.clone(),
        Some(Value::Bytes(b)) => String::from_utf8_lossy(b).into_owned(),
        _ => return Err(Error::Dataset("dtype without a type code".into())),
    };
    let code = code.trim_start_matches(['<', '>', '|', '=']);
    let (kind, size) = match code {
        "float64" | "double" => ('f', 8),
        "float32" => ('f', 4),
        "int64" => ('i', 8),
        "int32" => ('i', 4),
        "int16" => ('i', 2),
        "int8" => ('i', 1),
        "uint8" => ('u', 1),
        "bool" => ('b', 1),
        _ => {
            let mut chars = code.chars();
            let kind = chars.next().ok_or_else(|| Error::Dataset("empty dtype".into()))?;
            let size: usize = chars.as_str().parse().map_err(|_| Error::Dataset(format!("unsupported dtype {code:?}")))?;
            (kind, size)
        }
    };
    let big_endian = match &o.state {
        Some(Value::Tuple(t)) => matches!(t.get(1), Some(Value::Str(s)) if s == ">")
            || matches!(t.get(1), Some(Value::Bytes(b)) if b == b">"),
        _ => false,
    };
    Ok(Dtype { kind, size, big_endian })
}

fn decode(dt: &Dtype, raw: &[u8]) -> Result<Vec<f64>> {
    if dt.size == 0 || raw.len() % dt.size != 0 {
        return Err(Error::Dataset(format!("{} bytes do not divide into {}-byte items", raw.len(), dt.size)));
    }
    raw.chunks_exact(dt.size)
        .map(|c| {
            let mut b = c.to_vec();
            if dt.big_endian {
                b.reverse();
            }
            Ok(match (dt.kind, dt.size) {
                ('f', 8) => f64::from_le_bytes(b.try_into().unwrap()),
                ('f', 4) => f32::from_le_bytes(b.try_into().unwrap()) as f64,
                ('i', 8) => i64::from_le_bytes(b.try_into().unwrap()) as f64,
                ('i', 4) => i32::from_le_bytes(b.try_into().unwrap()) as f64,
                ('i', 2) => i16::from_le_bytes(b.try_into().unwrap()) as f64,
                ('i', 1) => b[0] as i8 as f64,
                ('u', 8) => u64::from_le_bytes(b.try_into().unwrap()) as f64,
                ('u', 4) => u32::from_le_bytes(b.try_into().unwrap()) as f64,
                ('u', 2) => u16::from_le_bytes(b.try_into().unwrap()) as f64,
                ('u', 1) | ('b', 1) => b[0] as f64,
                (k, s) => return Err(Error::Dataset(format!("unsupported dtype {k}{s}"))),
            })
        })
        .collect()
}

/// Dense array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NdArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub(crate) fn as_ndarray(v: &Value) -> Result<NdArray> {
    let Value::Object(o) = v else {
        return Err(Error::Dataset("expected a numpy array".into()));
    };
    let o = o.borrow();
    let state = match &o.state {
        Some(Value::Tuple(t)) => t.clone(),
        _ => return Err(Error::Dataset(format!("{}.{} has no array state", o.module, o.name))),
    };
    // (version, shape, dtype, is_fortran, raw) or without the version
    let s: &[Value] = if state.len() == 5 { &state[1..] } else { &state[..] };
    if s.len() != 4 {
        return Err(Error::Dataset("unexpected array state layout".into()));
    }
    let shape: Vec<usize> = s[0]
        .list_items()
        .ok_or_else(|| Error::Dataset("array shape is not a tuple".into()))?
        .iter()
        .map(|d| d.as_int().map(|x| x as usize).ok_or_else(|| Error::Dataset("bad array dimension".into())))
        .collect::<Result<_>>()?;
    let dt = parse_dtype(&s[1])?;
    let fortran = matches!(s[2], Value::Bool(true) | Value::Int(1));
    let raw = match &s[3] {
        Value::Bytes(b) => b.clone(),
        Value::Str(st) => st.chars().map(|c| c as u32 as u8).collect(),
        _ => return Err(Error::Dataset("object arrays are not supported".into())),
    };
    let mut data = decode(&dt, &raw)?;
    if data.len() != shape.iter().product::<usize>() {
        return Err(Error::Dataset(format!("array of shape {shape:?} holds {} values", data.len())));
    }
    if fortran && shape.len() == 2 {
        let (r, c) = (shape[0], shape[1]);
        let mut rm = vec![0.0; data.len()];
        for i in 0..r {
            for j in 0..c {
                rm[i * c + j] = data[j * r + i];
            }
        }
        data = rm;
    }
    Ok(NdArray { shape, data })
}

/// Densifies a pickled scipy CSR/CSC matrix, or accepts a dense numpy array.
pub(crate) fn as_matrix(v: &Value) -> Result<(usize, usize, Vec<f64>)> {
    let Value::Object(o) = v else {
        return Err(Error::Dataset("expected a matrix object".into()));
    };
    let name = o.borrow().name.clone();
    if name == "ndarray" || name == "_reconstruct" {
        let a = as_ndarray(v)?;
        return match a.shape.as_slice() {
            [r, c] => Ok((*r, *c, a.data)),
            [r] => Ok((*r, 1, a.data)),
            s => Err(Error::Dataset(format!("array of rank {}", s.len()))),
        };
    }
    let state = o.borrow().state.clone().ok_or_else(|| Error::Dataset(format!("{name} has no state")))?;
    let get = |k: &str| state.dict_get(k).ok_or_else(|| Error::Dataset(format!("{name} state lacks {k:?}")));
    let shape = state.dict_get("_shape").or_else(|| state.dict_get("shape")).ok_or_else(|| Error::Dataset("sparse matrix without shape".into()))?;
    let dims: Vec<usize> = shape
        .list_items()
        .ok_or_else(|| Error::Dataset("sparse shape is not a tuple".into()))?
        .iter()
        .map(|d| d.as_int().map(|x| x as usize).ok_or_else(|| Error::Dataset("bad sparse dimension".into())))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Dataset("sparse matrix shape must have two dimensions".into()));
    };
    let data = as_ndarray(&get("data")?)?.data;
    let indices = as_ndarray(&get("indices")?)?.data;
    let indptr = as_ndarray(&get("indptr")?)?.data;
    let csc = name.starts_with("csc")
        || matches!(state.dict_get("format"), Some(Value::Str(f)) if f == "csc");
    let (outer, inner) = if csc { (cols, rows) } else { (rows, cols) };
    if indptr.len() != outer + 1 || indices.len() != data.len() {
        return Err(Error::Dataset(format!("inconsistent {name} arrays")));
    }
    let mut dense = vec![0.0; rows * cols];
    for o_idx in 0..outer {
        for k in indptr[o_idx] as usize..indptr[o_idx + 1] as usize {
            let i_idx = indices[k] as usize;
            if i_idx >= inner {
                return Err(Error::Dataset(format!("{name} index {i_idx} out of range")));
            }
            let (r, c) = if csc { (i_idx, o_idx) } else { (o_idx, i_idx) };
            dense[r * cols + c] += data[k];
        }
    }
    Ok((rows, cols, dense))
}
