"""Line-oriented netlist reader/writer.

Grammar (device letter case-insensitive, ``*`` starts a comment line)::

    R<id> n+ n- value
    C<id> n+ n- value
    L<id> n+ n- value
    D<id> n+ n- [IS=.. VT=.. CJ=..]
    M<id> nd ng ns [K=.. VT0=..]
    V<id>|I<id> n+ n- DC v | v | SIN(off amp freq [fast|slow])
                         | FMSIN(off amp fcenter fdev fmod)
                         | PULSE(v1 v2 freq [riseFrac])
                         | AM(off amp fcarrier fmod [depth])

Numbers accept the suffixes f p n u m k meg g.  Node ``0`` is ground.
"""

from __future__ import annotations

import re

from .circuit import (
    DC,
    AMSine,
    Capacitor,
    Circuit,
    CurrentSource,
    Diode,
    FMSine,
    Inductor,
    Mosfet,
    Pulse,
    Resistor,
    Sine,
    VoltageSource,
)
from .exceptions import CircuitError, NetlistParseError

__all__ = ["parse_netlist", "format_netlist", "parse_value", "read_netlist"]

GROUND = "0"

_SUFFIX = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3, "k": 1e3, "meg": 1e6, "g": 1e9}
_NUMBER = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[fpnumkg])?$", re.IGNORECASE)
_TOKEN = re.compile(r"\S+")
_FUNC = re.compile(r"^(\w+)\s*\((.*)\)\s*$", re.DOTALL)

_DIODE_PARAMS = {"IS", "VT", "CJ"}
_MOS_PARAMS = {"K", "VT0"}


def parse_value(text: str) -> float:
    """Parse a number with an optional engineering suffix (``1k``, ``2.2meg``)."""
    m = _NUMBER.match(text.strip())
    if not m:
        raise ValueError(f"bad number literal {text!r}")
    val = float(m.group(1))
    if m.group(2):
        val *= _SUFFIX[m.group(2).lower()]
    return val


class _Line:
    def __init__(self, text, lineno):
        self.text = text
        self.lineno = lineno
        self.tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(text)]

    def error(self, msg, col=None):
        return NetlistParseError(msg, self.lineno, col)

    def number(self, i):
        tok, col = self.tokens[i]
        try:
            return parse_value(tok)
        except ValueError:
            raise self.error(f"bad number literal {tok!r}", col) from None


def _params(line, start, allowed):
    out = {}
    for tok, col in line.tokens[start:]:
        if "=" not in tok:
            raise line.error(f"undefined model {tok!r} (only inline KEY=value parameters are supported)", col)
        key, _, val = tok.partition("=")
        key = key.upper()
        if key not in allowed:
            raise line.error(f"unknown parameter {key!r}", col)
        try:
            out[key] = parse_value(val)
        except ValueError:
            raise line.error(f"bad number literal {val!r}", col + len(key) + 1) from None
    return out


def _waveform(line):
    """Source specification after the two node tokens."""
    if len(line.tokens) < 4:
        raise line.error("source needs a value or waveform", len(line.text) + 1)
    col0 = line.tokens[3][1]
    spec = line.text[col0 - 1 :].strip()
    head = line.tokens[3][0]
    if head.upper() == "DC":
        if len(line.tokens) != 5:
            raise line.error("DC expects exactly one value", col0)
        return DC(line.number(4))
    m = _FUNC.match(spec)
    if not m:
        if len(line.tokens) != 4:
            raise line.error("unexpected tokens after source value", line.tokens[4][1])
        return DC(line.number(3))
    name = m.group(1).upper()
    args_col = col0 + spec.index("(") + 1
    args = [(a.group(), args_col + a.start()) for a in _TOKEN.finditer(m.group(2).replace(",", " "))]

    def nums(lo, hi, keywords=()):
        vals, kws = [], []
        for tok, col in args:
            if tok.lower() in keywords:
                kws.append(tok.lower())
                continue
            try:
                vals.append(parse_value(tok))
            except ValueError:
                raise line.error(f"bad number literal {tok!r}", col) from None
        if not lo <= len(vals) <= hi:
            raise line.error(f"{name} expects {lo}..{hi} numeric arguments, got {len(vals)}", args_col)
        return vals, kws

    if name == "SIN":
        vals, kws = nums(3, 3, ("fast", "slow"))
        return Sine(*vals, role=kws[-1] if kws else "fast")
    if name == "FMSIN":
        vals, _ = nums(5, 5)
        return FMSine(*vals)
    if name == "PULSE":
        vals, _ = nums(3, 4)
        try:
            return Pulse(*vals)
        except CircuitError as exc:
            raise line.error(str(exc), args_col) from None
    if name == "AM":
        vals, _ = nums(4, 5)
        return AMSine(*vals)
    raise line.error(f"unknown source function {name!r}", col0)


def parse_netlist(text: str) -> Circuit:
    """Parse netlist text into a :class:`~mrwave.circuit.Circuit`."""
    nodes: dict = {}
    order: list = []  # (device kind, name, node names, payload)
    title = ""
    names_seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("*"):
            if stripped.startswith("*") and not title and not order:
                title = stripped.lstrip("* ")
            continue
        line = _Line(raw, lineno)
        card, col = line.tokens[0]
        if card.lower() == ".end":
            break
        letter = card[0].upper()
        if letter not in "RCLDMVI" or len(card) < 2:
            raise line.error(f"unknown device card {card!r}", col)
        if card.upper() in names_seen:
            raise line.error(f"duplicate device name {card!r}", col)
        names_seen.add(card.upper())
        n_nodes = 3 if letter == "M" else 2
        if len(line.tokens) < n_nodes + 1:
            raise line.error(f"{card}: expected {n_nodes} nodes", len(raw) + 1)
        node_toks = [tok for tok, _ in line.tokens[1 : n_nodes + 1]]
        for nd in node_toks:
            if nd != GROUND and nd not in nodes:
                nodes[nd] = len(nodes)
        if letter in "RCL":
            if len(line.tokens) != 4:
                col = line.tokens[4][1] if len(line.tokens) > 4 else len(raw) + 1
                raise line.error(f"{card}: expected 'n+ n- value'", col)
            val = line.number(3)
            if val == 0.0 and letter == "R":
                raise line.error("zero resistance", line.tokens[3][1])
            order.append((letter, card, node_toks, val))
        elif letter == "D":
            order.append((letter, card, node_toks, _params(line, 3, _DIODE_PARAMS)))
        elif letter == "M":
            order.append((letter, card, node_toks, _params(line, 4, _MOS_PARAMS)))
        else:
            order.append((letter, card, node_toks, _waveform(line)))
    if not order:
        raise NetlistParseError("empty circuit: no device cards found")

    n_nodes = len(nodes)
    ground = None  # resolved below once n is known
    branches: dict = {}
    for letter, name, _, _ in order:
        if letter in "VL":
            branches[name] = n_nodes + len(branches)
    n = n_nodes + len(branches)
    ground = n

    def idx(nd):
        return ground if nd == GROUND else nodes[nd]

    devices = []
    for letter, name, nds, payload in order:
        ix = tuple(idx(nd) for nd in nds)
        if letter == "R":
            devices.append(Resistor(name, ix, payload))
        elif letter == "C":
            devices.append(Capacitor(name, ix, payload))
        elif letter == "L":
            devices.append(Inductor(name, ix, payload, branches[name]))
        elif letter == "D":
            devices.append(Diode(name, ix, **payload))
        elif letter == "M":
            devices.append(Mosfet(name, ix, **payload))
        elif letter == "V":
            devices.append(VoltageSource(name, ix, payload, branches[name]))
        else:
            devices.append(CurrentSource(name, ix, payload))
    return Circuit(nodes, branches, tuple(devices), title)


def read_netlist(path) -> Circuit:
    with open(path, encoding="utf-8") as fh:
        return parse_netlist(fh.read())


def _fmt(x) -> str:
    return repr(float(x))


def _fmt_wave(w) -> str:
    if isinstance(w, DC):
        return f"DC {_fmt(w.value)}"
    if isinstance(w, Sine):
        return f"SIN({_fmt(w.offset)} {_fmt(w.amplitude)} {_fmt(w.freq)} {w.role})"
    if isinstance(w, FMSine):
        return f"FMSIN({' '.join(_fmt(v) for v in (w.offset, w.amplitude, w.fcenter, w.fdev, w.fmod))})"
    if isinstance(w, Pulse):
        return f"PULSE({' '.join(_fmt(v) for v in (w.v1, w.v2, w.freq, w.rise))})"
    if isinstance(w, AMSine):
        return f"AM({' '.join(_fmt(v) for v in (w.offset, w.amplitude, w.fcarrier, w.fmod, w.depth))})"
    raise TypeError(f"cannot format waveform {w!r}")


def format_netlist(circuit: Circuit) -> str:
    """Write a circuit back to netlist text (inverse of :func:`parse_netlist`)."""
    inv = {i: k for k, i in circuit.node_names.items()}
    inv[circuit.n] = GROUND

    def nn(ix):
        return " ".join(inv[i] for i in ix)

    lines = [f"* {circuit.title}" if circuit.title else "* mrwave netlist"]
    for d in circuit.devices:
        if isinstance(d, (Resistor, Capacitor, Inductor)):
            lines.append(f"{d.name} {nn(d.nodes)} {_fmt(d.value)}")
        elif isinstance(d, Diode):
            extra = f" CJ={_fmt(d.CJ)}" if d.CJ else ""
            lines.append(f"{d.name} {nn(d.nodes)} IS={_fmt(d.IS)} VT={_fmt(d.VT)}{extra}")
        elif isinstance(d, Mosfet):
            lines.append(f"{d.name} {nn(d.nodes)} K={_fmt(d.K)} VT0={_fmt(d.VT0)}")
        else:
            lines.append(f"{d.name} {nn(d.nodes)} {_fmt_wave(d.waveform)}")
    lines.append(".end")
    return "\n".join(lines) + "\n"
