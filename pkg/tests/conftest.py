import numpy as np
import pytest

from d2dpf.channel import McsTable
from d2dpf.model import CueUser, D2dPair, GainTensor, NetworkState


@pytest.fixture
def toy_mcs():
    # three entries, easy to check by hand
    return McsTable.parse("0.0 1.0\n10.0 2.0\n20.0 4.0\n")


def make_state(cue_bs, d2d_link, cue_d2d=None, d2d_bs=None, avg_cue=None, avg_d2d=None,
               pmax=1.0, noise_density=1.0, bandwidth=1.0):
    """NetworkState straight from gain arrays; cross gains default to zero."""
    cue_bs = np.asarray(cue_bs, dtype=float).reshape(-1, np.shape(cue_bs)[-1])
    k = cue_bs.shape[1]
    d2d_link = np.asarray(d2d_link, dtype=float).reshape(-1, k)
    nc, nd = len(cue_bs), len(d2d_link)
    cue_d2d = np.zeros((nc, nd, k)) if cue_d2d is None else np.asarray(cue_d2d, float)
    d2d_bs = np.zeros((nd, k)) if d2d_bs is None else np.asarray(d2d_bs, float)
    avg_cue = np.ones(nc) if avg_cue is None else avg_cue
    avg_d2d = np.ones(nd) if avg_d2d is None else avg_d2d
    g = GainTensor(cue_bs, d2d_link, cue_d2d, d2d_bs, noise_density, bandwidth)
    cues = [CueUser(i, (0.0, 0.0), pmax, float(avg_cue[i])) for i in range(nc)]
    d2ds = [D2dPair(j, (0.0, 0.0), (1.0, 0.0), pmax, float(avg_d2d[j])) for j in range(nd)]
    return NetworkState(cues, d2ds, g)


def pytest_terminal_summary(terminalreporter):
    lines = [
        value
        for reports in terminalreporter.stats.values()
        for rep in reports
        if getattr(rep, "when", None) == "call"
        for name, value in getattr(rep, "user_properties", ())
        if name == "acceptance"
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split("criterion ", 1)[1]):
            terminalreporter.write_line(line)
