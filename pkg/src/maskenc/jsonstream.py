"""Incremental reader for the top-level arrays of a large JSON object.

COCO instance files are one JSON object whose ``annotations`` array can be
hundreds of megabytes.  :func:`iter_array` yields the elements of one
top-level array without holding the rest of the document in memory; other
top-level members are decoded one at a time and dropped.
"""
from __future__ import annotations

import json
from typing import Any, Iterator

_DECODER = json.JSONDecoder()
_WS = " \t\n\r"
_CHUNK = 1 << 20


class JSONStreamError(ValueError):
    """Malformed JSON; ``offset`` is the byte position of the problem."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


class _Buffer:
    def __init__(self, f):
        self.f = f
        self.text = ""
        self.pos = 0
        self.consumed_bytes = 0
        self.eof = False

    def offset(self, pos: int | None = None) -> int:
        pos = self.pos if pos is None else pos
        return self.consumed_bytes + len(self.text[:pos].encode("utf-8"))

    def fill(self) -> bool:
        if self.eof:
            return False
        chunk = self.f.read(_CHUNK)
        if not chunk:
            self.eof = True
            return False
        # drop what has been consumed so the buffer stays bounded
        self.consumed_bytes += len(self.text[:self.pos].encode("utf-8"))
        self.text = self.text[self.pos:] + chunk
        self.pos = 0
        return True

    def skip_ws(self) -> None:
        while True:
            n = len(self.text)
            while self.pos < n and self.text[self.pos] in _WS:
                self.pos += 1
            if self.pos < n or not self.fill():
                return

    def peek(self) -> str:
        self.skip_ws()
        if self.pos >= len(self.text):
            raise JSONStreamError("unexpected end of JSON", self.offset())
        return self.text[self.pos]

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise JSONStreamError(f"expected {ch!r}, found {self.text[self.pos]!r}", self.offset())
        self.pos += 1

    def value(self) -> Any:
        self.skip_ws()
        while True:
            try:
                obj, end = _DECODER.raw_decode(self.text, self.pos)
            except json.JSONDecodeError as exc:
                if self.fill():
                    continue
                raise JSONStreamError(exc.msg, self.offset(exc.pos)) from None
            # a number at the very end of the buffer may continue in the next chunk
            if end == len(self.text) and self.fill():
                continue
            self.pos = end
            return obj


def iter_array(f, key: str) -> Iterator[Any]:
    """Yield elements of the top-level array ``key`` from text stream ``f``.

    Yields nothing if the key is absent.  Raises :class:`JSONStreamError` on
    malformed input.
    """
    buf = _Buffer(f)
    buf.expect("{")
    if buf.peek() == "}":
        return
    while True:
        name = buf.value()
        if not isinstance(name, str):
            raise JSONStreamError("object key must be a string", buf.offset())
        buf.expect(":")
        if buf.peek() == "[":
            # other arrays are walked element-wise too, keeping memory flat
            for item in _elements(buf):
                if name == key:
                    yield item
        else:
            buf.value()
        sep = buf.peek()
        buf.pos += 1
        if sep == "}":
            break
        if sep != ",":
            raise JSONStreamError(f"expected ',' or '}}', found {sep!r}", buf.offset(buf.pos - 1))
    buf.skip_ws()
    if buf.pos < len(buf.text):
        raise JSONStreamError("trailing data after JSON object", buf.offset())


def _elements(buf: _Buffer) -> Iterator[Any]:
    buf.expect("[")
    if buf.peek() == "]":
        buf.pos += 1
        return
    while True:
        yield buf.value()
        sep = buf.peek()
        buf.pos += 1
        if sep == "]":
            return
        if sep != ",":
            raise JSONStreamError(f"expected ',' or ']', found {sep!r}", buf.offset(buf.pos - 1))
