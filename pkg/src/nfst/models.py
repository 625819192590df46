"""Model-kind dispatch for projection and on-disk persistence."""
import os

from .errors import FormatError
from .kernel import KernelNullModel, load_kernel_model, project_kernel, save_kernel_model
from .linear import LinearNullModel, load_linear_model, project_linear, read_meta, save_linear_model


def project(model, X):
    if isinstance(model, KernelNullModel):
        return project_kernel(model, X)
    if isinstance(model, LinearNullModel):
        return project_linear(model, X)
    raise TypeError(f"not a null-space model: {type(model).__name__}")


def save_model(model, dirpath):
    """Write a model directory (FMAT arrays plus ``meta.txt``)."""
    if isinstance(model, KernelNullModel):
        save_kernel_model(model, dirpath)
    elif isinstance(model, LinearNullModel):
        save_linear_model(model, dirpath)
    else:
        raise TypeError(f"not a null-space model: {type(model).__name__}")


def load_model(dirpath):
    meta_path = os.path.join(dirpath, "meta.txt")
    if not os.path.isfile(meta_path):
        raise FormatError(f"{dirpath}: no meta.txt, not a model directory")
    meta = read_meta(meta_path)
    kind = meta.get("kind")
    if kind == "linear":
        return load_linear_model(dirpath, meta)
    if kind == "kernel":
        return load_kernel_model(dirpath, meta)
    raise FormatError(f"{meta_path}: unknown model kind {kind!r}")
