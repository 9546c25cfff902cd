"""Typed protocol payloads and their byte encoding.

Every frame is little-endian: a 1-byte tag, ``u32`` rows, ``u32`` cols,
then ``rows * cols`` row-major float64 values. A message is one frame,
except :class:`ModelBroadcast` which is a parameter frame followed by an
omega frame, both carrying its tag.
"""

from dataclasses import dataclass
import struct

import numpy as np

from .autodiff import ParamVector
from .errors import DimensionMismatch

HEADER = struct.Struct("<BII")
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class ModelBroadcast:
    params: ParamVector
    omegas: np.ndarray
    TAG = 1


@dataclass(frozen=True)
class ClientModelUpdate:
    params: ParamVector
    n_samples: int = 0
    TAG = 2


@dataclass(frozen=True)
class ScatterMatrix:
    matrix: np.ndarray
    TAG = 3


@dataclass(frozen=True)
class PrecisionBroadcast:
    """Cholesky factor of the global precision ``A`` (never a dense inverse)."""

    chol: np.ndarray
    TAG = 4


@dataclass(frozen=True)
class IntermediateWeights:
    vector: np.ndarray
    TAG = 5


@dataclass(frozen=True)
class GlobalWeights:
    vector: np.ndarray
    TAG = 6


def _frame(tag, array):
    array = np.asarray(array, dtype="<f8")
    if array.ndim == 1:
        array = array[None, :]
    rows, cols = array.shape
    return HEADER.pack(tag, rows, cols) + np.ascontiguousarray(array).tobytes()


def _read_frame(buf, offset=0):
    tag, rows, cols = HEADER.unpack_from(buf, offset)
    start = offset + HEADER.size
    end = start + 8 * rows * cols
    if len(buf) < end:
        raise DimensionMismatch("truncated frame")
    data = np.frombuffer(buf[start:end], dtype="<f8").reshape(rows, cols).astype(np.float64)
    return tag, data, end


def encode(msg):
    tag = msg.TAG
    if isinstance(msg, ModelBroadcast):
        return _frame(tag, msg.params.data) + _frame(tag, msg.omegas)
    if isinstance(msg, ClientModelUpdate):
        # n_samples rides along as the trailing column so weighted averaging works
        return _frame(tag, np.append(msg.params.data, float(msg.n_samples)))
    if isinstance(msg, ScatterMatrix):
        return _frame(tag, msg.matrix)
    if isinstance(msg, PrecisionBroadcast):
        return _frame(tag, msg.chol)
    if isinstance(msg, (IntermediateWeights, GlobalWeights)):
        return _frame(tag, msg.vector)
    raise TypeError(f"cannot encode {type(msg).__name__}")


def decode(buf, template=None):
    """Inverse of :func:`encode`.

    ``template`` supplies the parameter layout for model messages; without
    it the parameters come back as a single ``flat`` block.
    """
    tag, data, end = _read_frame(buf)

    def as_params(flat):
        if template is not None:
            return template.with_data(flat)
        return ParamVector(flat, {"flat": (0, flat.shape)})

    if tag == ModelBroadcast.TAG:
        _, omegas, _ = _read_frame(buf, end)
        return ModelBroadcast(as_params(data.ravel()), omegas)
    if tag == ClientModelUpdate.TAG:
        flat = data.ravel()
        return ClientModelUpdate(as_params(flat[:-1].copy()), int(flat[-1]))
    if tag == ScatterMatrix.TAG:
        if data.shape[0] != data.shape[1]:
            raise DimensionMismatch("scatter matrix must be square")
        scale = max(1.0, float(np.max(np.abs(data), initial=0.0)))
        if np.max(np.abs(data - data.T), initial=0.0) > SYMMETRY_TOL * scale:
            raise ValueError("received scatter matrix is not symmetric")
        return ScatterMatrix(data)
    if tag == PrecisionBroadcast.TAG:
        return PrecisionBroadcast(data)
    if tag == IntermediateWeights.TAG:
        return IntermediateWeights(data.ravel())
    if tag == GlobalWeights.TAG:
        return GlobalWeights(data.ravel())
    raise ValueError(f"unknown message tag {tag}")


def roundtrip(msg, template=None):
    """Send ``msg`` through the byte encoding, as a transport would."""
    return decode(encode(msg), template)
