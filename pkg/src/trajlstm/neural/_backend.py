"""Kernel backend selection.

The compiled kernel is used when it imports; set ``TRAJLSTM_PURE_PYTHON=1``
to force the numpy fallback.
"""
import importlib
import os

from . import _kernels_py


def load(name: str):
    if name == "python":
        return _kernels_py
    if name == "cython":
        return importlib.import_module(f"{__package__}._kernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available() -> list[str]:
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


if os.environ.get("TRAJLSTM_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        kernels = load("cython")
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.NAME
