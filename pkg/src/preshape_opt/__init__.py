"""Shape optimization on 2D triangle meshes with pre-shape parameterization tracking."""
from __future__ import annotations

from pathlib import Path

__version__ = "0.1.0"

DATA_DIR = Path(__file__).resolve().parent / "data"


def data_path(name):
    """Path of a mesh bundled with the package, e.g. ``data_path("disc_in_rect.msh")``."""
    path = DATA_DIR / name
    if not path.is_file():
        raise FileNotFoundError(f"no bundled file named {name!r}")
    return path
