"""
Circuit JSON (schema version 1) and an OpenQASM 2.0 subset (u3, cz, x).

JSON keeps every angle and block phase exactly (floats are written with
``repr``). QASM is the challenge format: no phases, no metadata, no comments.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict

from .circuit import Block, Circuit, FlatCircuit, Gate, Metadata, follows_brickwall
from .errors import InvalidArgument, MalformedBlock, ParseError, UnsupportedGate
from .linalg import LAYOUT_CZ, U3Params

SCHEMA_VERSION = 1
_LAYOUT_BY_CZ = {k: name for name, k in LAYOUT_CZ.items()}


# ---------------------------------------------------------------------------
# JSON


def circuit_to_dict(c: Circuit, include_metadata: bool = True) -> dict:
    meta = None
    if include_metadata and c.metadata is not None:
        meta = asdict(c.metadata)
    return {
        "version": SCHEMA_VERSION,
        "n_q": c.n_q,
        "half_depth": c.half_depth,
        "layers": [
            [
                {
                    "pair": list(b.pair),
                    "layout": b.layout,
                    "angles": [v for p in b.angles for v in p],
                    "phase": b.phase,
                }
                for b in layer
            ]
            for layer in c.layers
        ],
        "metadata": meta,
    }


def _field(d: dict, key: str, kind, where: str):
    if key not in d:
        raise MalformedBlock(f"{where}: missing {key!r}")
    v = d[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise MalformedBlock(f"{where}: {key!r} must be a number")
        return float(v)
    if not isinstance(v, kind) or isinstance(v, bool) and kind is int:
        raise MalformedBlock(f"{where}: {key!r} has the wrong type")
    return v


def circuit_from_dict(d: dict) -> Circuit:
    if not isinstance(d, dict):
        raise MalformedBlock("circuit JSON must be an object")
    if d.get("version") != SCHEMA_VERSION:
        raise MalformedBlock(f"unsupported schema version {d.get('version')!r}")
    n_q = _field(d, "n_q", int, "circuit")
    half = _field(d, "half_depth", int, "circuit")
    layers = []
    for i, layer in enumerate(_field(d, "layers", list, "circuit")):
        if not isinstance(layer, list):
            raise MalformedBlock(f"layer {i} must be a list")
        blocks = []
        for j, b in enumerate(layer):
            where = f"layer {i} block {j}"
            if not isinstance(b, dict):
                raise MalformedBlock(f"{where} must be an object")
            pair = _field(b, "pair", list, where)
            if len(pair) != 2 or not all(isinstance(q, int) and not isinstance(q, bool) for q in pair):
                raise MalformedBlock(f"{where}: pair must be two integers")
            angles = [float(v) for v in _field(b, "angles", list, where)]
            if len(angles) % 3:
                raise MalformedBlock(f"{where}: angle count must be a multiple of 3")
            layout = _field(b, "layout", str, where)
            phase = _field(b, "phase", float, where) if "phase" in b else 0.0
            blocks.append(Block.from_array(tuple(pair), angles, layout, phase))
        layers.append(tuple(blocks))
    meta = d.get("metadata")
    metadata = None
    if meta is not None:
        if not isinstance(meta, dict):
            raise MalformedBlock("metadata must be an object or null")
        metadata = Metadata(
            meta.get("hidden_string"),
            meta.get("delta_target"),
            meta.get("seed"),
            dict(meta.get("extra") or {}),
        )
    return Circuit(n_q, tuple(layers), half, metadata)


def to_json(c: Circuit, include_metadata: bool = True) -> bytes:
    return (json.dumps(circuit_to_dict(c, include_metadata), indent=1) + "\n").encode()


def from_json(data: bytes | str) -> Circuit:
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    return circuit_from_dict(d)


# ---------------------------------------------------------------------------
# QASM export


def _num(x: float) -> str:
    return repr(float(x))


def _wrapped(p) -> tuple[float, float, float]:
    return U3Params(*p).normalized()[0]


def to_qasm(c: Circuit | FlatCircuit) -> bytes:
    """OpenQASM 2.0 text with only u3 / cz / x lines; phases and metadata are dropped."""
    out = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{c.n_q}];"]

    def u3(p, q):
        t, f, l = _wrapped(p)
        out.append(f"u3({_num(t)},{_num(f)},{_num(l)}) q[{q}];")

    if isinstance(c, FlatCircuit):
        for g in c.gates:
            if g.name == "u3":
                u3(g.params, g.qubits[0])
            elif g.name == "cz":
                out.append(f"cz q[{g.qubits[0]}],q[{g.qubits[1]}];")
            elif g.name == "x":
                out.append(f"x q[{g.qubits[0]}];")
            else:
                raise UnsupportedGate(g.name)
    else:
        for blk in c.blocks():
            a, b = blk.pair
            for layer in range(blk.n_cz + 1):
                if layer:
                    out.append(f"cz q[{a}],q[{b}];")
                u3(blk.angles[2 * layer], a)
                u3(blk.angles[2 * layer + 1], b)
    return ("\n".join(out) + "\n").encode()


# ---------------------------------------------------------------------------
# QASM import

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<str>"[^"\n]*")
  | (?P<arrow>->)
  | (?P<sym>[()\[\],;+\-*/^])
    """,
    re.VERBOSE,
)


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, pos - start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str | None = None, kind: str | None = None) -> _Tok:
        t = self.next()
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = text or kind
            got = t.text or "end of input"
            raise ParseError(f"expected {want!r}, got {got!r}", t.line, t.col)
        return t

    # expression grammar: sum of products of signed atoms
    def expr(self) -> float:
        v = self.term()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            v = v + self.term() if op == "+" else v - self.term()
        return v

    def term(self) -> float:
        v = self.factor()
        while self.peek().text in ("*", "/"):
            t = self.next()
            rhs = self.factor()
            if t.text == "*":
                v *= rhs
            else:
                if rhs == 0:
                    raise ParseError("division by zero", t.line, t.col)
                v /= rhs
        return v

    def factor(self) -> float:
        t = self.next()
        if t.text in ("-", "+"):
            v = self.factor()
            return -v if t.text == "-" else v
        if t.kind == "num":
            return float(t.text)
        if t.kind == "id" and t.text == "pi":
            return math.pi
        if t.text == "(":
            v = self.expr()
            self.expect(")")
            return v
        raise ParseError(f"bad expression token {t.text or 'end of input'!r}", t.line, t.col)

    def qubit(self, reg: str | None, size: int) -> int:
        t = self.expect(kind="id")
        if reg is None or t.text != reg:
            raise ParseError(f"unknown register {t.text!r}", t.line, t.col)
        self.expect("[")
        n = self.expect(kind="num")
        if not n.text.isdigit() or int(n.text) >= size:
            raise ParseError(f"qubit index {n.text} out of range", n.line, n.col)
        self.expect("]")
        return int(n.text)


_ARITY = {"u3": (3, 1), "cz": (0, 2), "x": (0, 1)}
_IGNORED = ("barrier", "measure", "creg")


def _parse_qasm(text: str) -> tuple[int, list[Gate]]:
    p = _Parser(text)
    reg, size = None, 0
    gates: list[Gate] = []
    if p.peek().text == "OPENQASM":
        p.next()
        v = p.expect(kind="num")
        if not v.text.startswith("2"):
            raise ParseError(f"unsupported OpenQASM version {v.text}", v.line, v.col)
        p.expect(";")
    while p.peek().kind != "eof":
        t = p.next()
        if t.kind != "id":
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col)
        if t.text == "include":
            p.expect(kind="str")
            p.expect(";")
        elif t.text == "qreg":
            if reg is not None:
                raise ParseError("only one qreg is supported", t.line, t.col)
            reg = p.expect(kind="id").text
            p.expect("[")
            size = int(p.expect(kind="num").text)
            p.expect("]")
            p.expect(";")
        elif t.text in _IGNORED:
            while p.next().text != ";":
                if p.peek().kind == "eof":
                    raise ParseError("missing ';'", p.peek().line, p.peek().col)
        elif t.text in _ARITY:
            n_par, n_arg = _ARITY[t.text]
            params: list[float] = []
            if p.peek().text == "(":
                p.next()
                if p.peek().text != ")":
                    params.append(p.expr())
                    while p.peek().text == ",":
                        p.next()
                        params.append(p.expr())
                p.expect(")")
            if len(params) != n_par:
                raise ParseError(f"{t.text} takes {n_par} parameters", t.line, t.col)
            qubits = [p.qubit(reg, size)]
            while p.peek().text == ",":
                p.next()
                qubits.append(p.qubit(reg, size))
            if len(qubits) != n_arg or len(set(qubits)) != n_arg:
                raise ParseError(f"{t.text} takes {n_arg} distinct qubits", t.line, t.col)
            p.expect(";")
            gates.append(Gate(t.text, tuple(qubits), tuple(params)))
        else:
            raise UnsupportedGate(t.text, t.line)
    if reg is None:
        raise ParseError("no qreg declared", 1, 1)
    return size, gates


def _match_blocks(gates: list[Gate]) -> list[Block] | None:
    """Greedy split of the gate stream into CZ-ladder blocks, or None."""
    blocks = []
    i, n = 0, len(gates)
    while i < n:
        if i + 2 >= n:
            return None
        g0, g1, cz = gates[i], gates[i + 1], gates[i + 2]
        if g0.name != "u3" or g1.name != "u3" or cz.name != "cz":
            return None
        pair = cz.qubits
        if {g0.qubits[0], g1.qubits[0]} != set(pair):
            return None
        angles = {g0.qubits[0]: [g0.params], g1.qubits[0]: [g1.params]}
        i += 2
        k = 0
        while i + 2 < n and gates[i].name == "cz" and gates[i].qubits == pair:
            a, b = gates[i + 1], gates[i + 2]
            if a.name != "u3" or b.name != "u3" or {a.qubits[0], b.qubits[0]} != set(pair):
                break
            angles[a.qubits[0]].append(a.params)
            angles[b.qubits[0]].append(b.params)
            k += 1
            i += 3
        if k not in _LAYOUT_BY_CZ:
            return None
        flat = [angles[q][layer] for layer in range(k + 1) for q in pair]
        blocks.append(Block(pair, tuple(flat), _LAYOUT_BY_CZ[k]))
    return blocks


def _layer_blocks(n_q: int, blocks: list[Block]) -> Circuit | None:
    layers: list[list[Block]] = []
    level = [0] * n_q
    for b in blocks:
        d = max(level[q] for q in b.pair)
        if d == len(layers):
            layers.append([])
        layers[d].append(b)
        for q in b.pair:
            level[q] = d + 1
    depth = len(layers)
    for h in [depth // 2] + [h for h in range(depth, 0, -1) if h != depth // 2]:
        if h < 1:
            continue
        try:
            c = Circuit(n_q, tuple(tuple(lay) for lay in layers), h)
        except (InvalidArgument, MalformedBlock):
            return None
        if follows_brickwall(c):
            return c
    return None


def from_qasm(data: bytes | str) -> Circuit | FlatCircuit:
    """Parse the u3/cz/x subset. Brick-wall block structure is rebuilt when it is
    recognisable; otherwise a :class:`FlatCircuit` is returned."""
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    n_q, gates = _parse_qasm(text)
    blocks = _match_blocks(gates) if gates else None
    if blocks and n_q >= 2 and n_q % 2 == 0:
        c = _layer_blocks(n_q, blocks)
        if c is not None:
            return c
    return FlatCircuit(n_q, tuple(gates))


def serialize(c, fmt: str = "json", include_metadata: bool = True) -> bytes:
    if fmt == "json":
        return to_json(c, include_metadata)
    if fmt == "qasm":
        return to_qasm(c)
    raise InvalidArgument(f"unknown format {fmt!r}")


def deserialize(data: bytes | str, fmt: str = "json"):
    if fmt == "json":
        return from_json(data)
    if fmt == "qasm":
        return from_qasm(data)
    raise InvalidArgument(f"unknown format {fmt!r}")
