from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fusiongnn
from fusiongnn.baselines import random_spec, translate
from fusiongnn.errors import ParseError, UsageError
from fusiongnn.topology import (BlockSpec, TopologySpec, canonicalize, check_spec, dead_blocks,
                                parse_spec, read_spec, spec_to_text, validate_spec, write_spec)

GOLDEN = Path(fusiongnn.__file__).parent / "data" / "golden"

VANILLA_4 = """blocks=4 hidden=64 act=relu
block 1: select=1 fuse=SUM agg=SAGE
block 2: select=01 fuse=SUM agg=SAGE
block 3: select=001 fuse=SUM agg=SAGE
block 4: select=0001 fuse=SUM agg=SAGE
output: select=00001 fuse=SUM
"""


def chain(n):
    return translate("vanilla", n, "GCN")


def test_vanilla_validates_cleanly():
    v = validate_spec(chain(4))
    assert v.ok and not v.warnings and v.dead_blocks == []


def test_empty_mask_is_dead_warning():
    spec = chain(4)
    blocks = list(spec.blocks)
    blocks[2] = BlockSpec((0, 0, 0), "SUM", "GCN")
    v = validate_spec(spec.replace(blocks=tuple(blocks)))
    assert v.ok
    assert 3 in v.dead_blocks
    assert any("block 3" in w for w in v.warnings)


def test_unused_block_is_dead():
    spec = chain(3).replace(output_select=(0, 0, 1, 0))
    assert dead_blocks(spec) == [3]


def test_output_all_zero_is_error():
    v = validate_spec(chain(2).replace(output_select=(0, 0, 0)))
    assert not v.ok
    with pytest.raises(UsageError):
        check_spec(chain(2).replace(output_select=(0, 0, 0)))


@pytest.mark.parametrize("change,fragment", [
    ({"blocks": (BlockSpec((1, 1), "SUM", "GCN"),)}, "block 1: selection mask has 2 bits"),
    ({"output_fuse": "MIN"}, "unknown fusion 'MIN'"),
    ({"act": "gelu"}, "unknown activation"),
    ({"output_select": (1,)}, "output: selection mask has 1 bits"),
])
def test_validation_errors(change, fragment):
    v = validate_spec(chain(1).replace(**change))
    assert not v.ok
    assert any(fragment in e for e in v.errors)


def test_unknown_aggregation():
    spec = chain(1).replace(blocks=(BlockSpec((1,), "SUM", "CHEB"),))
    assert any("unknown aggregation" in e for e in validate_spec(spec).errors)


def test_vanilla_golden_string():
    spec = translate("vanilla", 4, "SAGE")
    assert spec_to_text(spec) == VANILLA_4
    assert spec_to_text(spec) == (GOLDEN / "vanilla_L4.spec").read_text()


@pytest.mark.parametrize("path", sorted(GOLDEN.glob("*.spec")), ids=lambda p: p.stem)
def test_golden_files_round_trip(path):
    text = path.read_text()
    assert spec_to_text(parse_spec(text)) == canonicalize(text) == text


def test_canonicalize_normalizes_whitespace_and_comments():
    messy = "# chain\n  blocks = 1  hidden=8 act=elu\n\nblock 1 : select=1   fuse=MAX agg=GIN\noutput: select = 11 fuse=ATT\n"
    assert canonicalize(messy) == "blocks=1 hidden=8 act=elu\nblock 1: select=1 fuse=MAX agg=GIN\noutput: select=11 fuse=ATT\n"


@given(st.integers(1, 6), st.integers(0, 10**6), st.booleans())
@settings(max_examples=60, deadline=None)
def test_random_specs_round_trip(n, seed, learnable):
    spec = random_spec(n, seed, learnable_agg=learnable)
    assert parse_spec(spec_to_text(spec)) == spec


def test_wrong_width_cites_block():
    bad = VANILLA_4.replace("block 3: select=001", "block 3: select=01")
    with pytest.raises(ParseError, match=r"spec.txt:4: block 3: mask '01' has 2 bits"):
        parse_spec(bad, source="spec.txt")


@pytest.mark.parametrize("text,fragment", [
    ("", "empty"),
    ("blocks=1 hidden=4\n", "expected 'blocks=N"),
    ("blocks=1 hidden=4 act=relu\nblock 1: select=1 fuse=SUM agg=GCN\n", "found 1 lines"),
    ("blocks=1 hidden=4 act=relu\nblock 2: select=1 fuse=SUM agg=GCN\noutput: select=11 fuse=SUM\n", "found index 2"),
    ("blocks=1 hidden=4 act=relu\nblock 1: select=1 fuse=XOR agg=GCN\noutput: select=11 fuse=SUM\n", "unknown fusion"),
    ("blocks=1 hidden=4 act=relu\nblock 1: select=1 fuse=SUM agg=GCN\noutput: select=00 fuse=SUM\n", "all zero"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment):
        parse_spec(text)


def test_read_write(tmp_path):
    spec = translate("dense", 3, "GAT")
    write_spec(spec, tmp_path / "d.spec")
    assert read_spec(tmp_path / "d.spec") == spec


def test_spec_is_immutable():
    spec = chain(2)
    with pytest.raises(Exception):
        spec.hidden = 3
    assert isinstance(spec, TopologySpec)
