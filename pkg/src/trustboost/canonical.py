"""Canonical byte serialization for hash-anchored values.

Every digest anchored on the ledger is computed over these bytes, so the
encoding must be byte-identical across processes and runtimes: map keys are
sorted by their UTF-8 bytes, floats are rendered by a fixed decimal rule,
and no insignificant whitespace is emitted.
"""

from __future__ import annotations

import math
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from typing import Any

__all__ = [
    "CanonicalTypeError",
    "NonFiniteFloatError",
    "CanonicalParseError",
    "canonical_serialize",
    "canonical_deserialize",
    "format_float",
]


class CanonicalTypeError(TypeError):
    """Value contains a type outside the canonical data model."""


class NonFiniteFloatError(ValueError):
    """Value contains a NaN or infinite float."""


class CanonicalParseError(ValueError):
    """Byte sequence is not valid canonical form."""


# Exactly 9 fractional digits, round-half-even, trailing zeros retained.
_QUANTUM = Decimal("1.000000000")

# Escapes are minimal: quote, backslash, newline, tab; other control
# characters use \u00XX. Everything else is raw UTF-8.
_SHORT_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\t": "\\t"}


def format_float(x: float) -> str:
    """Render a float as fixed-point decimal with 9 fractional digits.

    The exact binary value of the double is rounded half-even; negative
    zero (and anything rounding to it) normalizes to positive zero.
    """
    if not math.isfinite(x):
        raise NonFiniteFloatError(f"non-finite float: {x!r}")
    with localcontext() as ctx:
        ctx.prec = 400  # enough for the integral digits of any double
        d = Decimal(x).quantize(_QUANTUM, rounding=ROUND_HALF_EVEN)
    if d == 0:
        return "0.000000000"
    return format(d, "f")  # 'f' keeps fixed-point form at every magnitude


def _encode_string(s: str, out: list[str]) -> None:
    out.append('"')
    for ch in s:
        esc = _SHORT_ESCAPES.get(ch)
        if esc is not None:
            out.append(esc)
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')


def _encode(value: Any, out: list[str]) -> None:
    if isinstance(value, bool):  # bool before int: bool is an int subclass
        out.append("true" if value else "false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(format_float(value))
    elif isinstance(value, str):
        _encode_string(value, out)
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        keys = []
        for k in value:
            if not isinstance(k, str):
                raise CanonicalTypeError(f"map keys must be strings, got {type(k).__name__}")
            keys.append(k)
        keys.sort(key=lambda k: k.encode("utf-8"))
        for i, k in enumerate(keys):
            if i:
                out.append(",")
            _encode_string(k, out)
            out.append(":")
            _encode(value[k], out)
        out.append("}")
    else:
        raise CanonicalTypeError(f"unsupported type in canonical value: {type(value).__name__}")


def canonical_serialize(value: Any) -> bytes:
    """Serialize maps/lists/strings/ints/bools/finite-floats to canonical bytes."""
    out: list[str] = []
    _encode(value, out)
    return "".join(out).encode("utf-8")


# ---------------------------------------------------------------------------
# Parsing (inverse of the encoder over the canonical domain)
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str) -> CanonicalParseError:
        return CanonicalParseError(f"{msg} at offset {self.pos}")

    def peek(self) -> str:
        if self.pos >= len(self.text):
            raise self.error("unexpected end of input")
        return self.text[self.pos]

    def take(self) -> str:
        ch = self.peek()
        self.pos += 1
        return ch

    def expect(self, ch: str) -> None:
        if self.take() != ch:
            self.pos -= 1
            raise self.error(f"expected {ch!r}")

    def parse_value(self) -> Any:
        ch = self.peek()
        if ch == "{":
            return self.parse_map()
        if ch == "[":
            return self.parse_list()
        if ch == '"':
            return self.parse_string()
        if ch == "t":
            self.literal("true")
            return True
        if ch == "f":
            self.literal("false")
            return False
        if ch == "-" or ch.isdigit():
            return self.parse_number()
        raise self.error(f"unexpected character {ch!r}")

    def literal(self, word: str) -> None:
        end = self.pos + len(word)
        if self.text[self.pos : end] != word:
            raise self.error(f"expected literal {word!r}")
        self.pos = end

    def parse_map(self) -> dict[str, Any]:
        self.expect("{")
        result: dict[str, Any] = {}
        if self.peek() == "}":
            self.take()
            return result
        while True:
            key = self.parse_string()
            self.expect(":")
            result[key] = self.parse_value()
            ch = self.take()
            if ch == "}":
                return result
            if ch != ",":
                self.pos -= 1
                raise self.error("expected ',' or '}'")

    def parse_list(self) -> list[Any]:
        self.expect("[")
        result: list[Any] = []
        if self.peek() == "]":
            self.take()
            return result
        while True:
            result.append(self.parse_value())
            ch = self.take()
            if ch == "]":
                return result
            if ch != ",":
                self.pos -= 1
                raise self.error("expected ',' or ']'")

    def parse_string(self) -> str:
        self.expect('"')
        parts: list[str] = []
        while True:
            ch = self.take()
            if ch == '"':
                return "".join(parts)
            if ch == "\\":
                esc = self.take()
                if esc == '"':
                    parts.append('"')
                elif esc == "\\":
                    parts.append("\\")
                elif esc == "n":
                    parts.append("\n")
                elif esc == "t":
                    parts.append("\t")
                elif esc == "u":
                    hexdigits = self.text[self.pos : self.pos + 4]
                    if len(hexdigits) != 4:
                        raise self.error("truncated \\u escape")
                    try:
                        parts.append(chr(int(hexdigits, 16)))
                    except ValueError:
                        raise self.error("bad \\u escape") from None
                    self.pos += 4
                else:
                    raise self.error(f"bad escape \\{esc}")
            else:
                parts.append(ch)

    def parse_number(self) -> int | float:
        start = self.pos
        if self.peek() == "-":
            self.take()
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        is_float = False
        if self.pos < len(self.text) and self.text[self.pos] == ".":
            is_float = True
            self.pos += 1
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
        token = self.text[start : self.pos]
        if not token or token in ("-", "-.") or token.endswith("."):
            raise self.error(f"malformed number {token!r}")
        digits = token[1:] if token.startswith("-") else token
        integral = digits.split(".")[0]
        if not integral or (len(integral) > 1 and integral.startswith("0")):
            raise self.error(f"leading zeros not canonical: {token!r}")
        return float(token) if is_float else int(token)


def canonical_deserialize(data: bytes) -> Any:
    """Parse canonical bytes back into plain Python values.

    Inverse of canonical_serialize over values whose floats carry at most
    9 fractional decimal digits (the canonical float domain).
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CanonicalParseError(f"not UTF-8: {exc}") from exc
    parser = _Parser(text)
    value = parser.parse_value()
    if parser.pos != len(text):
        raise parser.error("trailing data")
    return value
