import numpy as np
import pytest

from causaltransport.errors import ScmError, VersionError
from causaltransport.models import bow_demo, random_decomposed_scm
from causaltransport.scm import joint_distribution
from causaltransport.scmio import dumps_scm, load_scm, loads_scm, save_scm


def test_roundtrip_exact(tmp_path):
    scm = random_decomposed_scm(np.random.default_rng(4))
    save_scm(scm, tmp_path / "m.scm")
    back = load_scm(tmp_path / "m.scm")
    names = scm.endogenous_names
    np.testing.assert_array_equal(joint_distribution(back, names).probs, joint_distribution(scm, names).probs)
    for a, b in zip(scm.exogenous, back.exogenous):
        assert a.probs.tobytes() == b.probs.tobytes()


def test_text_layout():
    text = dumps_scm(bow_demo())
    assert "variable Y size=2 parents=X exo=U_XY" in text
    assert "parents=1; exo=1; value=1" in text


def test_missing_row_rejected():
    lines = dumps_scm(bow_demo()).splitlines()
    lines.remove("parents=1; exo=0; value=0")
    with pytest.raises(ScmError, match="not total"):
        loads_scm("\n".join(lines))


def test_duplicate_row_rejected():
    text = dumps_scm(bow_demo()) + "parents=1; exo=0; value=0\n"
    with pytest.raises(ScmError, match="duplicate"):
        loads_scm(text)


def test_version_checked():
    text = dumps_scm(bow_demo()).replace("causaltransport-scm 1", "causaltransport-scm 9")
    with pytest.raises(VersionError):
        loads_scm(text)


def test_garbage_line():
    with pytest.raises(ScmError):
        loads_scm(dumps_scm(bow_demo()) + "hello world\n")
