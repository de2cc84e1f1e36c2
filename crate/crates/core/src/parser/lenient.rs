//! Tolerant literal reader used when a payload is not strict JSON.
//!
//! Accepts single- or double-quoted strings, `True`/`False`/`None` next to
//! their JSON spellings, and trailing commas in objects and arrays. Nothing
//! is evaluated; the whole input must be consumed.

use serde_json::{Map, Number, Value};

const MAX_DEPTH: usize = 128;

pub fn read_literal(src: &str) -> Option<Value> {
    let mut r = Reader { s: src.as_bytes(), src, i: 0, depth: 0 };
    let v = r.value()?;
    r.ws();
    (r.i == r.s.len()).then_some(v)
}

struct Reader<'a> {
    s: &'a [u8],
    src: &'a str,
    i: usize,
    depth: usize,
}

impl Reader<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.i).copied()
    }

    fn ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.i += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.ws();
        if self.peek() == Some(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn value(&mut self) -> Option<Value> {
        self.ws();
        match self.peek()? {
            b'{' => self.nested(Self::object),
            b'[' => self.nested(Self::array),
            b'"' | b'\'' => self.string().map(Value::String),
            b'-' | b'+' | b'0'..=b'9' | b'.' => self.number(),
            _ => self.word(),
        }
    }

    fn nested(&mut self, f: fn(&mut Self) -> Option<Value>) -> Option<Value> {
        if self.depth >= MAX_DEPTH {
            return None;
        }
        self.depth += 1;
        let v = f(self);
        self.depth -= 1;
        v
    }

    fn object(&mut self) -> Option<Value> {
        self.i += 1;
        let mut map = Map::new();
        loop {
            if self.eat(b'}') {
                return Some(Value::Object(map));
            }
            self.ws();
            if !matches!(self.peek(), Some(b'"' | b'\'')) {
                return None;
            }
            let key = self.string()?;
            if !self.eat(b':') {
                return None;
            }
            let v = self.value()?;
            map.insert(key, v);
            if !self.eat(b',') {
                return self.eat(b'}').then_some(Value::Object(map));
            }
        }
    }

    fn array(&mut self) -> Option<Value> {
        self.i += 1;
        let mut items = Vec::new();
        loop {
            if self.eat(b']') {
                return Some(Value::Array(items));
            }
            items.push(self.value()?);
            if !self.eat(b',') {
                return self.eat(b']').then_some(Value::Array(items));
            }
        }
    }

    fn string(&mut self) -> Option<String> {
        let quote = self.peek()?;
        self.i += 1;
        let mut out = String::new();
        loop {
            // copy the unescaped run in one go; quotes and backslashes are
            // ASCII so the slice boundaries are char boundaries
            let start = self.i;
            while let Some(c) = self.peek() {
                if c == quote || c == b'\\' {
                    break;
                }
                self.i += 1;
            }
            out.push_str(&self.src[start..self.i]);
            match self.peek()? {
                c if c == quote => {
                    self.i += 1;
                    return Some(out);
                }
                _ => {
                    self.i += 1;
                    let esc = self.peek()?;
                    self.i += 1;
                    match esc {
                        b'n' => out.push('\n'),
                        b't' => out.push('\t'),
                        b'r' => out.push('\r'),
                        b'b' => out.push('\u{8}'),
                        b'f' => out.push('\u{c}'),
                        b'0' => out.push('\0'),
                        b'\\' | b'\'' | b'"' | b'/' => out.push(esc as char),
                        b'u' => out.push(self.unicode_escape()?),
                        b'\n' => {}
                        _ => return None,
                    }
                }
            }
        }
    }

    fn hex4(&mut self) -> Option<u32> {
        let h = self.src.get(self.i..self.i + 4)?;
        let v = u32::from_str_radix(h, 16).ok()?;
        self.i += 4;
        Some(v)
    }

    fn unicode_escape(&mut self) -> Option<char> {
        let hi = self.hex4()?;
        if (0xD800..0xDC00).contains(&hi) {
            if self.s.get(self.i..self.i + 2) != Some(b"\\u") {
                return None;
            }
            self.i += 2;
            let lo = self.hex4()?;
            if !(0xDC00..0xE000).contains(&lo) {
                return None;
            }
            return char::from_u32(0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00));
        }
        char::from_u32(hi)
    }

    fn number(&mut self) -> Option<Value> {
        let start = self.i;
        while matches!(
            self.peek(),
            Some(b'0'..=b'9' | b'-' | b'+' | b'.' | b'e' | b'E' | b'_')
        ) {
            self.i += 1;
        }
        let text: String = self.src[start..self.i].chars().filter(|&c| c != '_').collect();
        let text = text.strip_prefix('+').unwrap_or(&text);
        if let Ok(n) = text.parse::<i64>() {
            return Some(Value::Number(n.into()));
        }
        let has_digit = text.bytes().any(|b| b.is_ascii_digit());
        let f: f64 = text.parse().ok().filter(|_| has_digit)?;
        Number::from_f64(f).map(Value::Number)
    }

    fn word(&mut self) -> Option<Value> {
        let start = self.i;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.i += 1;
        }
        match &self.src[start..self.i] {
            "True" | "true" => Some(Value::Bool(true)),
            "False" | "false" => Some(Value::Bool(false)),
            "None" | "null" => Some(Value::Null),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn python_style_literals() {
        assert_eq!(
            read_literal("{'name': 'calculator', 'arguments': {'expression': '1+1',},}").unwrap(),
            json!({"name": "calculator", "arguments": {"expression": "1+1"}})
        );
        assert_eq!(read_literal("[True, False, None, -2, 1.5e3,]").unwrap(), json!([true, false, null, -2, 1500.0]));
        assert_eq!(read_literal(r#"'it\'s "fine"\n'"#).unwrap(), json!("it's \"fine\"\n"));
        assert_eq!(read_literal(r#""é😀""#).unwrap(), json!("é😀"));
    }

    #[test]
    fn rejects_partial_or_executable_input() {
        for bad in [
            "{'a': 1",
            "{'a': 1} trailing",
            "__import__('os')",
            "{a: 1}",
            "[1 2]",
            "'unterminated",
            "",
            "-",
            "nan",
            r#""\ud800""#,
        ] {
            assert_eq!(read_literal(bad), None, "{bad}");
        }
        let deep = "[".repeat(10_000);
        assert_eq!(read_literal(&deep), None);
    }

    proptest! {
        #[test]
        fn agrees_with_strict_json_on_json(v in arb_json()) {
            let text = serde_json::to_string(&v).unwrap();
            prop_assert_eq!(read_literal(&text), Some(v));
        }

        #[test]
        fn total_on_arbitrary_text(s in ".{0,64}") {
            let _ = read_literal(&s);
        }
    }

    fn arb_json() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            any::<i32>().prop_map(|n| json!(n)),
            "[a-zA-Z0-9 '\"\\\\\n]{0,8}".prop_map(Value::String),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
                prop::collection::btree_map("[a-z]{1,4}", inner, 0..4)
                    .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }
}
