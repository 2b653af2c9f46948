"""Discrete topologies: block specs, validation and the canonical text form.

A topology has an input block (level 0), ``N`` SFA blocks (levels 1..N) and an
output block. Block ``i`` carries an ``i``-bit selection mask over levels
``0..i-1``; the output block carries ``N+1`` bits over levels ``0..N``.

Canonical text::

    blocks=2 hidden=64 act=relu
    block 1: select=1 fuse=SUM agg=SAGE
    block 2: select=01 fuse=SUM agg=SAGE
    output: select=001 fuse=SUM
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseError, UsageError
from .layers import AGGREGATIONS

SELECTIONS = ("ZERO", "IDENTITY")
FUSIONS = ("SUM", "MEAN", "MAX", "CONCAT", "LSTM", "ATT")
ACTIVATIONS = ("relu", "elu")


@dataclass(frozen=True)
class BlockSpec:
    select: tuple
    fuse: str
    agg: str

    @property
    def selected(self):
        return [j for j, bit in enumerate(self.select) if bit]


@dataclass(frozen=True)
class TopologySpec:
    blocks: tuple
    output_select: tuple
    output_fuse: str
    hidden: int = 64
    act: str = "relu"

    @property
    def n_blocks(self):
        return len(self.blocks)

    @property
    def output_selected(self):
        return [j for j, bit in enumerate(self.output_select) if bit]

    def masks(self):
        """All selection masks, SFA blocks first and the output block last."""
        return [b.select for b in self.blocks] + [self.output_select]

    def replace(self, **changes):
        fields = dict(blocks=self.blocks, output_select=self.output_select,
                      output_fuse=self.output_fuse, hidden=self.hidden, act=self.act)
        fields.update(changes)
        return TopologySpec(**fields)


def make_spec(masks, fusions, aggs, output_mask, output_fuse, hidden=64, act="relu"):
    """Build a spec from per-block lists; masks may be bit strings or sequences."""
    def bits(m):
        return tuple(int(c) for c in m) if isinstance(m, str) else tuple(int(b) for b in m)

    if isinstance(fusions, str):
        fusions = [fusions] * len(masks)
    if isinstance(aggs, str):
        aggs = [aggs] * len(masks)
    blocks = tuple(BlockSpec(bits(m), f, a) for m, f, a in zip(masks, fusions, aggs))
    return TopologySpec(blocks, bits(output_mask), output_fuse, hidden, act)


@dataclass
class Validation:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    dead_blocks: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors


def live_levels(spec: TopologySpec):
    """Levels whose values can reach the output (level 0 included)."""
    live = set(spec.output_selected)
    for i in range(spec.n_blocks, 0, -1):
        if i in live:
            live.update(spec.blocks[i - 1].selected)
    return live


def dead_blocks(spec: TopologySpec):
    """SFA blocks that emit zeros or whose output never reaches the output block."""
    live = live_levels(spec)
    return [i for i in range(1, spec.n_blocks + 1)
            if i not in live or not any(spec.blocks[i - 1].select)]


def validate_spec(spec: TopologySpec) -> Validation:
    v = Validation()
    if spec.n_blocks < 1:
        v.errors.append("topology needs at least one SFA block")
    if spec.hidden < 1:
        v.errors.append(f"hidden dim must be positive, got {spec.hidden}")
    if spec.act not in ACTIVATIONS:
        v.errors.append(f"unknown activation '{spec.act}'")
    for i, b in enumerate(spec.blocks, start=1):
        if len(b.select) != i:
            v.errors.append(f"block {i}: selection mask has {len(b.select)} bits, expected {i}")
        if any(bit not in (0, 1) for bit in b.select):
            v.errors.append(f"block {i}: selection bits must be 0/1")
        if b.fuse not in FUSIONS:
            v.errors.append(f"block {i}: unknown fusion '{b.fuse}'")
        if b.agg not in AGGREGATIONS:
            v.errors.append(f"block {i}: unknown aggregation '{b.agg}'")
    if len(spec.output_select) != spec.n_blocks + 1:
        v.errors.append(f"output: selection mask has {len(spec.output_select)} bits, "
                        f"expected {spec.n_blocks + 1}")
    elif not any(spec.output_select):
        v.errors.append("output: selection mask is all zero")
    if spec.output_fuse not in FUSIONS:
        v.errors.append(f"output: unknown fusion '{spec.output_fuse}'")
    if v.errors:
        return v
    v.dead_blocks = dead_blocks(spec)
    for i in v.dead_blocks:
        why = "selects nothing" if not any(spec.blocks[i - 1].select) else "is never used"
        v.warnings.append(f"block {i} is dead: {why}")
    return v


def check_spec(spec: TopologySpec) -> TopologySpec:
    v = validate_spec(spec)
    if not v.ok:
        raise UsageError("invalid topology: " + "; ".join(v.errors))
    return spec


# --- text form ------------------------------------------------------------

def spec_to_text(spec: TopologySpec) -> str:
    lines = [f"blocks={spec.n_blocks} hidden={spec.hidden} act={spec.act}"]
    for i, b in enumerate(spec.blocks, start=1):
        mask = "".join(str(x) for x in b.select)
        lines.append(f"block {i}: select={mask} fuse={b.fuse} agg={b.agg}")
    mask = "".join(str(x) for x in spec.output_select)
    lines.append(f"output: select={mask} fuse={spec.output_fuse}")
    return "\n".join(lines) + "\n"


_HEADER = re.compile(r"^blocks\s*=\s*(\d+)\s+hidden\s*=\s*(\d+)\s+act\s*=\s*(\w+)$")
_BLOCK = re.compile(r"^block\s+(\d+)\s*:\s*select\s*=\s*([01]*)\s+fuse\s*=\s*(\w+)\s+agg\s*=\s*(\w+)$")
_OUTPUT = re.compile(r"^output\s*:\s*select\s*=\s*([01]*)\s+fuse\s*=\s*(\w+)$")


def parse_spec(text: str, source=None) -> TopologySpec:
    """Parse the canonical text form; errors carry the offending line number."""
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), start=1)]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty topology text", source=source)
    lineno, head = lines[0]
    m = _HEADER.match(head)
    if not m:
        raise ParseError("expected 'blocks=N hidden=d act=<relu|elu>'", lineno, source)
    n, hidden, act = int(m.group(1)), int(m.group(2)), m.group(3)
    if act not in ACTIVATIONS:
        raise ParseError(f"unknown activation '{act}'", lineno, source)
    if len(lines) != n + 2:
        raise ParseError(f"expected {n} block lines and one output line, found {len(lines) - 1} lines",
                         lines[-1][0], source)
    blocks = []
    for k, (lineno, line) in enumerate(lines[1:n + 1], start=1):
        m = _BLOCK.match(line)
        if not m:
            raise ParseError(f"block {k}: expected 'block {k}: select=<bits> fuse=<OP> agg=<OP>'",
                             lineno, source)
        idx, mask, fuse, agg = int(m.group(1)), m.group(2), m.group(3), m.group(4)
        if idx != k:
            raise ParseError(f"block {k}: found index {idx}", lineno, source)
        if len(mask) != k:
            raise ParseError(f"block {k}: mask '{mask}' has {len(mask)} bits, expected {k}", lineno, source)
        if fuse not in FUSIONS:
            raise ParseError(f"block {k}: unknown fusion '{fuse}'", lineno, source)
        if agg not in AGGREGATIONS:
            raise ParseError(f"block {k}: unknown aggregation '{agg}'", lineno, source)
        blocks.append(BlockSpec(tuple(int(c) for c in mask), fuse, agg))
    lineno, line = lines[-1]
    m = _OUTPUT.match(line)
    if not m:
        raise ParseError("expected 'output: select=<bits> fuse=<OP>'", lineno, source)
    mask, fuse = m.group(1), m.group(2)
    if len(mask) != n + 1:
        raise ParseError(f"output: mask '{mask}' has {len(mask)} bits, expected {n + 1}", lineno, source)
    if fuse not in FUSIONS:
        raise ParseError(f"output: unknown fusion '{fuse}'", lineno, source)
    if "1" not in mask:
        raise ParseError("output: selection mask is all zero", lineno, source)
    return TopologySpec(tuple(blocks), tuple(int(c) for c in mask), fuse, hidden, act)


def canonicalize(text: str) -> str:
    return spec_to_text(parse_spec(text))


def read_spec(path) -> TopologySpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read(), source=str(path))


def write_spec(spec: TopologySpec, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(spec_to_text(spec))
