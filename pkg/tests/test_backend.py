"""Kernel backend selection and bit-identity of the compiled and pure
right-hand-side implementations."""

import os
import subprocess
import sys

import numpy as np
import pytest

from mhtes import PlantConfig, backend_name
from mhtes import _purefallback

try:
    from mhtes import _kernels
    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False


def test_backend_name_is_known():
    assert backend_name() in ("compiled", "pure")


def test_compiled_extension_present():
    """The build ships the compiled kernel; its absence means a broken build."""
    assert HAVE_COMPILED
    assert backend_name() == "compiled"


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")
def test_backends_bit_identical_on_random_states(params, rng):
    """Both kernels must produce the same doubles, not merely close ones."""
    for mode in ("b_to_a", "a_to_b"):
        pk = PlantConfig(params, mode).packed
        for _ in range(200):
            x = np.array([
                rng.uniform(265.0, 330.0),
                rng.uniform(275.0, 340.0),
                rng.uniform(1.2e5, 9e5),
                rng.uniform(1.2e5, 9e5),
                rng.uniform(1e-4, 0.0119),
                rng.uniform(1e-4, 0.0149),
            ])
            u = np.array([rng.uniform(0.0, 0.8), rng.uniform(0.0, 0.8),
                          rng.uniform(0.0, 5e5)])
            d = np.array([rng.uniform(265.0, 320.0), rng.uniform(275.0, 330.0)])
            out_c = np.empty(6)
            out_p = np.empty(6)
            _kernels.rhs(x, u, d, pk, out_c)
            _purefallback.rhs(x, u, d, pk, out_p)
            assert np.array_equal(out_c, out_p), (x, u, d, out_c - out_p)


_TRAJ_SCRIPT = """
import hashlib, io
import numpy as np
from mhtes import PlantConfig, default_params_path, load_params, packaged_scenario
from mhtes.plant import integrate
from mhtes import backend_name

p = load_params(default_params_path())
sc = packaged_scenario("case1")
cfg = PlantConfig(p, sc.mode)
traj = integrate(sc.x0, sc.u_sched, sc.d_sched, (0.0, 120.0), cfg)
buf = io.StringIO()
np.savetxt(buf, np.column_stack([traj.t, traj.states]), fmt="%.17g")
print(backend_name(), hashlib.sha256(buf.getvalue().encode()).hexdigest())
"""


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")
def test_short_trajectory_identical_across_backends():
    digests = {}
    for choice in ("compiled", "pure"):
        env = dict(os.environ, MHTES_BACKEND=choice)
        res = subprocess.run([sys.executable, "-c", _TRAJ_SCRIPT], env=env,
                             capture_output=True, text=True, check=True)
        name, digest = res.stdout.split()
        assert name == choice
        digests[choice] = digest
    assert digests["compiled"] == digests["pure"]


def test_env_override_pure():
    env = dict(os.environ, MHTES_BACKEND="pure")
    res = subprocess.run(
        [sys.executable, "-c", "from mhtes import backend_name; print(backend_name())"],
        env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "pure"


def test_env_override_invalid_rejected():
    env = dict(os.environ, MHTES_BACKEND="turbo")
    res = subprocess.run(
        [sys.executable, "-c", "import mhtes"],
        env=env, capture_output=True, text=True)
    assert res.returncode != 0
    assert "MHTES_BACKEND" in res.stderr
