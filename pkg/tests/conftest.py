import numpy as np
import pytest

from edof.image import ImageF


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(rng, h, w, channels=1):
    return ImageF(rng.random((h, w, channels)).astype(np.float32))


@pytest.fixture(scope="session")
def small_grid():
    """One small rendered grid shared by tests that only read it."""
    from edof.synth import default_capture, default_scene, render_scene

    scene = default_scene(3, (256, 256), seed=41)
    capture = default_capture(3, 8.0, (256, 256), seed=41, noise_sigma=0.004)
    return render_scene(scene, capture)


@pytest.fixture(scope="session")
def small_aligned(small_grid):
    from edof.align import align_grid

    grid, _ = small_grid
    return align_grid(grid, 4)
