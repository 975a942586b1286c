"""Parser for the plain-text model definition format.

The format is line oriented: ``key = value`` pairs grouped under ``[section]``
headers, ``#`` starts a comment.  Sections and keys:

    nlevels = N              (top level, mandatory, N >= 1)

    [params]                 named control parameters (all sweepable)
    name = <number>

    [hb]                     closed-system matrix; unset entries are 0
    diag = v0 v1 ... vN-1    whole diagonal at once
    i,j = <value>            one entry; sets (i,j) and (j,i) symmetrically

    [channel K]              K = 0..C-1, contiguous
    kind = wideband | flatband | chain_lead
    threshold = <number>     (flatband, chain_lead)
    band_top = <number>      (flatband)
    dos_scale = <number>     (wideband, flatband)
    hopping = <number>       (chain_lead; stored as dos_scale)

    [coupling]
    i,c = <value>            level i, channel c; unset entries are 0

``<value>`` in [hb] and [coupling] is either a literal number or a scalar
multiple of a declared parameter: ``$g``, ``2.5*$g`` or ``$g*2.5``.  Unknown
sections, unknown keys, duplicate keys and out-of-range indices are rejected
with the offending line (and column, where meaningful) in the message.
"""

from __future__ import annotations

import math
import re

from .errors import ModelFormatError
from .model import Channel, ChannelKind, ParamRef, SystemModel

__all__ = ["load_model", "loads_model"]

_SECTION_RE = re.compile(r"^\[([a-z_]+)(?:\s+(\d+))?\]$")
_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_PAIR_RE = re.compile(r"^(\d+)\s*,\s*(\d+)$")
_NUM_RE = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_EXPR_RE = re.compile(
    rf"^(?:(?P<pre>{_NUM_RE})\s*\*\s*)?\$(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    rf"(?:\s*\*\s*(?P<post>{_NUM_RE}))?$")

_CHANNEL_KEYS = {"kind", "threshold", "band_top", "dos_scale", "hopping"}
_KIND_NAMES = {k.value: k for k in ChannelKind}


def _parse_number(text, line_no, col):
    try:
        value = float(text)
    except ValueError:
        raise ModelFormatError(f"expected a number, got {text!r}", line_no, col) from None
    if not math.isfinite(value):
        raise ModelFormatError(f"number must be finite, got {text!r}", line_no, col)
    return value


def _parse_value(text, line_no, col, params):
    """Literal number or ParamRef."""
    m = _EXPR_RE.match(text)
    if m:
        if m.group("pre") is not None and m.group("post") is not None:
            raise ModelFormatError("at most one scalar coefficient per entry", line_no, col)
        coeff_text = m.group("pre") or m.group("post")
        coeff = _parse_number(coeff_text, line_no, col) if coeff_text else 1.0
        name = m.group("name")
        if name not in params:
            raise ModelFormatError(f"'${name}' is not declared in [params]", line_no, col)
        return ParamRef(name=name, coeff=coeff)
    if "$" in text:
        raise ModelFormatError(
            f"malformed parameter expression {text!r} "
            "(use $name, coeff*$name or $name*coeff)", line_no, col)
    return _parse_number(text, line_no, col)


def _split_line(raw, line_no):
    line = raw.split("#", 1)[0].rstrip()
    if not line.strip():
        return None
    stripped = line.strip()
    m = _SECTION_RE.match(stripped)
    if m:
        return ("section", m.group(1), m.group(2))
    if "=" not in line:
        raise ModelFormatError(f"expected 'key = value', got {stripped!r}", line_no, 1)
    key, _, value = line.partition("=")
    col = raw.index("=") + 2 + len(value) - len(value.lstrip())
    key = key.strip()
    value = value.strip()
    if not value:
        raise ModelFormatError(f"empty value for key {key!r}", line_no, col)
    return ("entry", key, value, col)


def loads_model(text: str) -> SystemModel:
    """Parse a model definition from a string.  See the module docstring for
    the schema; raises :class:`ModelFormatError` with line/column diagnostics."""
    nlevels = None
    params = {}
    hb_entries = {}       # (i, j) i<=j -> (value-or-ref, line)
    coupling_entries = {}  # (i, c) -> (value-or-ref, line)
    channel_fields = {}   # index -> {key: (value, line)}
    section = None
    chan_idx = None
    seen_sections = set()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        parsed = _split_line(raw, line_no)
        if parsed is None:
            continue
        if parsed[0] == "section":
            _, name, idx = parsed
            if name == "channel":
                if idx is None:
                    raise ModelFormatError("[channel] needs an index: [channel K]", line_no)
                chan_idx = int(idx)
                if chan_idx in channel_fields:
                    raise ModelFormatError(f"duplicate section [channel {chan_idx}]", line_no)
                channel_fields[chan_idx] = {}
                section = "channel"
            elif name in ("params", "hb", "coupling"):
                if idx is not None:
                    raise ModelFormatError(f"section [{name}] takes no index", line_no)
                if name in seen_sections:
                    raise ModelFormatError(f"duplicate section [{name}]", line_no)
                seen_sections.add(name)
                section = name
            else:
                raise ModelFormatError(f"unknown section [{name}]", line_no)
            continue

        _, key, value, col = parsed
        if section is None:
            if key == "nlevels":
                if nlevels is not None:
                    raise ModelFormatError("duplicate key 'nlevels'", line_no)
                nlevels = int(_parse_number(value, line_no, col))
                if nlevels < 1:
                    raise ModelFormatError("nlevels must be >= 1", line_no, col)
            else:
                raise ModelFormatError(f"unknown top-level key {key!r}", line_no)
        elif section == "params":
            if not _KEY_RE.match(key):
                raise ModelFormatError(f"invalid parameter name {key!r}", line_no)
            if key in params:
                raise ModelFormatError(f"duplicate parameter {key!r}", line_no)
            params[key] = _parse_number(value, line_no, col)
        elif section == "hb":
            if key == "diag":
                items = value.split()
                for i, item in enumerate(items):
                    if (i, i) in hb_entries:
                        raise ModelFormatError(f"diagonal entry ({i},{i}) set twice", line_no)
                    hb_entries[(i, i)] = (_parse_value(item, line_no, col, params), line_no)
            else:
                m = _PAIR_RE.match(key)
                if not m:
                    raise ModelFormatError(
                        f"[hb] keys are 'diag' or 'i,j' index pairs, got {key!r}", line_no)
                i, j = sorted((int(m.group(1)), int(m.group(2))))
                if (i, j) in hb_entries:
                    raise ModelFormatError(
                        f"entry ({i},{j}) set twice (the matrix is symmetric)", line_no)
                hb_entries[(i, j)] = (_parse_value(value, line_no, col, params), line_no)
        elif section == "coupling":
            m = _PAIR_RE.match(key)
            if not m:
                raise ModelFormatError(f"[coupling] keys are 'level,channel' pairs, got {key!r}",
                                       line_no)
            i, c = int(m.group(1)), int(m.group(2))
            if (i, c) in coupling_entries:
                raise ModelFormatError(f"coupling entry ({i},{c}) set twice", line_no)
            coupling_entries[(i, c)] = (_parse_value(value, line_no, col, params), line_no)
        elif section == "channel":
            if key not in _CHANNEL_KEYS:
                raise ModelFormatError(f"unknown channel key {key!r}", line_no)
            if key in channel_fields[chan_idx]:
                raise ModelFormatError(f"duplicate channel key {key!r}", line_no)
            if key == "kind":
                if value not in _KIND_NAMES:
                    raise ModelFormatError(
                        f"unknown channel kind {value!r} "
                        f"(one of {sorted(_KIND_NAMES)})", line_no, col)
                channel_fields[chan_idx][key] = (value, line_no)
            else:
                channel_fields[chan_idx][key] = (_parse_number(value, line_no, col), line_no)

    if nlevels is None:
        raise ModelFormatError("missing mandatory top-level key 'nlevels'")
    if not channel_fields:
        raise ModelFormatError("at least one [channel K] section is required")
    indices = sorted(channel_fields)
    if indices != list(range(len(indices))):
        raise ModelFormatError(f"channel indices must be contiguous from 0, got {indices}")

    channels = []
    for idx in indices:
        fields = channel_fields[idx]
        if "kind" not in fields:
            raise ModelFormatError(f"[channel {idx}] is missing 'kind'")
        kind = _KIND_NAMES[fields["kind"][0]]
        kwargs = {}
        for key in ("threshold", "band_top", "dos_scale", "hopping"):
            if key not in fields:
                continue
            value, line_no = fields[key]
            if key == "hopping":
                if kind is not ChannelKind.CHAIN_LEAD:
                    raise ModelFormatError("'hopping' is only valid for chain_lead", line_no)
                if "dos_scale" in fields:
                    raise ModelFormatError("give either 'hopping' or 'dos_scale', not both",
                                           line_no)
                kwargs["dos_scale"] = value
            else:
                kwargs[key] = value
        try:
            channels.append(Channel(kind=kind, **kwargs))
        except Exception as exc:
            raise ModelFormatError(f"[channel {idx}]: {exc}") from None

    import numpy as np

    hb = np.zeros((nlevels, nlevels))
    hb_refs = {}
    for (i, j), (value, line_no) in hb_entries.items():
        if not (0 <= i < nlevels and 0 <= j < nlevels):
            raise ModelFormatError(f"[hb] index ({i},{j}) out of range for N={nlevels}", line_no)
        if isinstance(value, ParamRef):
            hb_refs[(i, j)] = value
            value = value.evaluate(params)
        hb[i, j] = hb[j, i] = value

    cp = np.zeros((nlevels, len(channels)))
    coupling_refs = {}
    for (i, c), (value, line_no) in coupling_entries.items():
        if not (0 <= i < nlevels and 0 <= c < len(channels)):
            raise ModelFormatError(
                f"[coupling] index ({i},{c}) out of range for N={nlevels}, C={len(channels)}",
                line_no)
        if isinstance(value, ParamRef):
            coupling_refs[(i, c)] = value
            value = value.evaluate(params)
        cp[i, c] = value

    return SystemModel(levels_hb=hb, channels=tuple(channels), couplings=cp,
                       control_params=params, hb_refs=hb_refs, coupling_refs=coupling_refs)


def load_model(path) -> SystemModel:
    """Parse a model definition file."""
    with open(path, "r", encoding="utf-8") as fh:
        return loads_model(fh.read())
