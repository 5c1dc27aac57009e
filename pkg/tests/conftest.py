import numpy as np
import pytest

from consistency_lab.graphs import build_graph, graph_laplacian
from consistency_lab.manifolds import Circle, sample_points
from consistency_lab.spectra import align_blocks, lowest_eigenpairs
from consistency_lab.transport import balanced_cells


@pytest.fixture(scope="session")
def circle_ladder():
    """Four-rung refinement on the unit circle shared by the trend tests.

    Coarse auxiliary grids (g_factor=20) keep the whole thing under a few
    seconds; the bandwidth follows the square-root-of-radius rule used by
    the convergence experiments.
    """
    man = Circle(1.0)
    table = man.spectrum(24)
    rungs = []
    for n in [120, 240, 480, 960]:
        cloud = sample_points(man, n, seed=1)
        plan = balanced_cells(cloud, g_factor=20, seed=101)
        h = float(np.sqrt(plan.eps_hat))
        spec = lowest_eigenpairs(graph_laplacian(build_graph(cloud, h=h)), 11)
        frame = align_blocks(spec, plan, table, 11)
        rungs.append({"n": n, "cloud": cloud, "plan": plan, "h": h,
                      "spec": spec, "frame": frame, "table": table})
    return rungs


@pytest.fixture(scope="session")
def narrow_frames(circle_ladder):
    # the j <= 2 eigenspaces are the ones the ladder's bandwidths resolve;
    # response comparisons are made inside that window
    return [align_blocks(r["spec"], r["plan"], r["table"], 5)
            for r in circle_ladder]
