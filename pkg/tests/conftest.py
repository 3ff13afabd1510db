import numpy as np
import pytest

from signnav.scene import ArrowDir, Goal, SceneMap, Sign


def open_room(n=102, cs=0.1, signs=(), goals=None, walls=()):
    """n x n cell room with a one-cell border; interior spans [0.1, (n-1)*0.1]."""
    occ = np.zeros((n, n), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    for j0, j1, i0, i1 in walls:
        occ[j0:j1, i0:i1] = True
    if goals is None:
        goals = (Goal("g0", (1.0, 1.0)), Goal("g1", ((n - 1) * cs - 1.0, (n - 1) * cs - 1.0)))
    return SceneMap(occ, cs, signs, goals, "room")


@pytest.fixture
def room():
    return open_room()


def east_sign(y=5.1, arrow=ArrowDir.LEFT, sign_id="s0", goal="g0", x=10.1):
    """Sign on the inside face of the east wall, facing west."""
    return Sign(sign_id, (x, y), np.pi, {goal: arrow} if goal else {})
