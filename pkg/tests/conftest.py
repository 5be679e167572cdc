import numpy as np
import pytest
from PIL import Image

from camoseg.config import RunConfig


def make_toy_dataset(root, count=4, size=64, seed=7):
    """Images with a bright square on textured background, plus masks."""
    rng = np.random.default_rng(seed)
    (root / "Imgs").mkdir(parents=True, exist_ok=True)
    (root / "GT").mkdir(parents=True, exist_ok=True)
    for i in range(count):
        img = rng.integers(0, 80, (size, size, 3), dtype=np.uint8)
        mask = np.zeros((size, size), np.uint8)
        r0, c0 = 8 + 6 * i, 10 + 5 * i
        mask[r0:r0 + 24, c0:c0 + 20] = 255
        lift = rng.integers(100, 170, (int((mask > 0).sum()), 3), dtype=np.uint8)
        img[mask > 0] = img[mask > 0] + lift
        Image.fromarray(img).save(root / "Imgs" / f"toy_{i}.jpg")
        Image.fromarray(mask).save(root / "GT" / f"toy_{i}.png")
    return root


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    return make_toy_dataset(tmp_path_factory.mktemp("toyset"))


@pytest.fixture()
def desk_config(toy_root):
    config = RunConfig.desk(epochs=2)
    config.data.train_root = toy_root
    config.data.test_root = toy_root
    return config
