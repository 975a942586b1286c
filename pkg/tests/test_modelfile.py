import math

import numpy as np
import pytest

from resonance_lab import ChannelKind, ModelFormatError, loads_model
from resonance_lab.testing import bundled_model

FULL = """
# full-featured definition
nlevels = 3

[params]
g = 0.2
e2 = 0.55

[hb]
diag = -0.5 0.0 0.1
0,1 = 0.05
2,2 = $e2          # overrides nothing: diag gave three entries? no: see below

[channel 0]
kind = wideband
dos_scale = 0.3

[channel 1]
kind = flatband
threshold = 1.0
band_top = 3.5
dos_scale = 0.05

[channel 2]
kind = chain_lead
threshold = -2.0
hopping = 0.8

[coupling]
0,0 = $g
1,0 = -0.5*$g
2,0 = $g*2.0
0,2 = 0.3
"""


def test_full_roundtrip():
    # the diag line in FULL conflicts with the 2,2 override; fix it here
    text = FULL.replace("diag = -0.5 0.0 0.1", "diag = -0.5 0.0")
    m = loads_model(text)
    assert m.nlevels == 3 and m.nchannels == 3
    assert m.levels_hb[0, 1] == m.levels_hb[1, 0] == 0.05
    assert m.levels_hb[2, 2] == 0.55
    assert m.couplings[0, 0] == pytest.approx(0.2)
    assert m.couplings[1, 0] == pytest.approx(-0.1)
    assert m.couplings[2, 0] == pytest.approx(0.4)
    assert m.couplings[0, 2] == 0.3
    assert m.channels[1].kind is ChannelKind.FLATBAND
    assert m.channels[2].hopping == 0.8
    assert m.channels[2].band_top == pytest.approx(-2.0 + 3.2)

    rebound = m.with_params(g=1.0, e2=-0.25)
    assert rebound.couplings[1, 0] == pytest.approx(-0.5)
    assert rebound.couplings[2, 0] == pytest.approx(2.0)
    assert rebound.levels_hb[2, 2] == -0.25
    # other entries untouched
    assert rebound.levels_hb[0, 1] == 0.05
    assert rebound.couplings[0, 2] == 0.3


def test_duplicate_diag_override_rejected():
    with pytest.raises(ModelFormatError, match="set twice"):
        loads_model(FULL)


MINIMAL = """
nlevels = 1
[channel 0]
kind = wideband
dos_scale = 1.0
"""


def test_minimal_defaults_to_zero_matrices():
    m = loads_model(MINIMAL)
    assert m.levels_hb[0, 0] == 0.0
    assert m.couplings[0, 0] == 0.0


@pytest.mark.parametrize("mutation, replacement, message", [
    ("nlevels = 1", "", "missing mandatory"),
    ("[channel 0]\nkind = wideband\ndos_scale = 1.0", "", "at least one"),
    ("kind = wideband", "dos_scale = 2.0", "missing 'kind'|not both|duplicate"),
])
def test_missing_pieces(mutation, replacement, message):
    text = MINIMAL.replace(mutation, replacement)
    with pytest.raises(ModelFormatError, match=message):
        loads_model(text)


@pytest.mark.parametrize("extra, message", [
    ("\n[bogus]\nx = 1\n", r"unknown section"),
    ("\nwhatever = 3\n", r"unknown channel key"),
    ("\n[hb]\n0;0 = 1\n", r"index pairs"),
    ("\n[hb]\n0,0 = $nope\n", r"not declared"),
    ("\n[hb]\n0,0 = 1\n0,0 = 2\n", r"set twice"),
    ("\n[hb]\n5,0 = 1\n", r"out of range"),
    ("\n[coupling]\n0,3 = 1\n", r"out of range"),
    ("\n[coupling]\n0,0 = 2*$g*3\n", r"not declared|one scalar"),
    ("\n[hb]\n0,0 = abc\n", r"expected a number"),
    ("\n[hb]\n0,0 =\n", r"empty value"),
    ("\n[hb]\njust a line\n", r"expected 'key = value'"),
])
def test_malformed_inputs(extra, message):
    with pytest.raises(ModelFormatError, match=message):
        loads_model(MINIMAL + extra)


def test_error_carries_line_number():
    text = MINIMAL + "\n[hb]\n0,0 = abc\n"
    with pytest.raises(ModelFormatError) as err:
        loads_model(text)
    assert err.value.line == len(text.splitlines())
    assert "line" in str(err.value)


def test_channel_key_rules():
    with pytest.raises(ModelFormatError, match="only valid for chain_lead"):
        loads_model(MINIMAL.replace("dos_scale = 1.0", "hopping = 1.0"))
    both = MINIMAL.replace("kind = wideband",
                           "kind = chain_lead\nthreshold = 0.0\nhopping = 1.0")
    with pytest.raises(ModelFormatError, match="not both"):
        loads_model(both)
    with pytest.raises(ModelFormatError, match="contiguous"):
        loads_model(MINIMAL.replace("[channel 0]", "[channel 1]"))
    with pytest.raises(ModelFormatError, match="unknown channel kind"):
        loads_model(MINIMAL.replace("wideband", "parabolic"))


def test_bundled_models_parse():
    for name in ("trapping2", "crossover4", "bic2", "bic2_asym", "decay1",
                 "saturation6"):
        m = bundled_model(name)
        assert m.nlevels >= 1
        assert math.isfinite(float(np.sum(m.couplings)))
