"""Shared fixtures and the acceptance-line reporter.

Acceptance tests are named test_cNN_<slug>; after each one runs, a single
[PASS]/[FAIL] line is echoed to the terminal (outside stdout capture) so the
acceptance status is visible in plain pytest output.
"""

from __future__ import annotations

import re

import numpy as np
import pytest

from shapebench.voxel import VoxelGrid

_ACCEPT = re.compile(r"test_acceptance\.py::test_c(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    m = _ACCEPT.search(report.nodeid)
    if not m:
        return
    number, slug = int(m.group(1)), m.group(2).replace("_", " ")
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[{status}] acceptance criterion {number:2d}: {slug}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def random_grid():
    def make(rng, resolution=16, fill=0.3, nonempty=True) -> VoxelGrid:
        dense = rng.random((resolution,) * 3) < fill
        if nonempty and not dense.any():
            dense[tuple(rng.integers(0, resolution, 3))] = True
        return VoxelGrid.from_dense(dense)

    return make


@pytest.fixture
def random_cloud():
    from shapebench.mesh import PointCloud

    def make(rng, n=100) -> PointCloud:
        return PointCloud(rng.random((n, 3)))

    return make
