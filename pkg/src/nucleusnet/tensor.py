"""Dense n-dimensional tensors and the shape manipulations the networks use.

Layout is row-major with a channels-first convention for 1D feature maps
(channels x length). That makes the switch from the 1D stage of a network to
the 2D stage a pure reinterpretation of the same buffer: a (C, L) map *is*
a single-channel C-by-L image.

Training runs in 32-bit; a 64-bit mode exists solely so finite-difference
gradient verification has precision headroom.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeError

DEFAULT_DTYPE = np.dtype(np.float32)
GRADCHECK_DTYPE = np.dtype(np.float64)

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """Immutable dense array of reals with an explicit shape.

    Wraps a C-contiguous numpy array whose writeable flag is cleared, so a
    constructed Tensor can be shared read-only across threads. Operations
    never mutate their inputs; they return new Tensors.
    """

    __slots__ = ("_array",)

    def __init__(self, values, dtype=None):
        arr = values.array if isinstance(values, Tensor) else np.asarray(values)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in _FLOAT_DTYPES else DEFAULT_DTYPE
        arr = np.ascontiguousarray(arr, dtype=dtype)
        if arr.ndim and min(arr.shape) < 1:
            raise ShapeError(f"tensor dimensions must all be >= 1, got shape {arr.shape}")
        arr = arr.view()
        arr.flags.writeable = False
        self._array = arr

    @property
    def array(self) -> np.ndarray:
        """The underlying read-only, C-contiguous numpy array."""
        return self._array

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def dtype(self) -> np.dtype:
        return self._array.dtype

    @property
    def ndim(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the elements."""
        return self._array.reshape(-1)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        try:
            out = self._array.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"cannot reshape {self.shape} to {shape}: {exc}") from exc
        return Tensor(out, dtype=self.dtype)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        out = np.transpose(self._array, axes or None)
        return Tensor(out, dtype=self.dtype)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self._array, dtype=np.dtype(dtype))

    def copy(self) -> "Tensor":
        return Tensor(self._array.copy(), dtype=self.dtype)

    def item(self) -> float:
        return float(self._array.item())

    def tolist(self):
        return self._array.tolist()

    def __getitem__(self, idx):
        return self._array[idx]

    def __len__(self) -> int:
        return len(self._array)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._array
        return self._array.astype(dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"


def as_array(x) -> np.ndarray:
    """Unwrap a Tensor (or pass through array-likes) to a numpy array."""
    return x.array if isinstance(x, Tensor) else np.asarray(x)


def zeros(shape, dtype=DEFAULT_DTYPE) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def concat_channels(inputs: Sequence) -> Tensor:
    """Stack (channels x length) feature maps along the channel axis.

    Input i occupies its contiguous channel block in order, so slicing the
    result recovers each input bitwise.
    """
    if len(inputs) < 2:
        raise ShapeError(f"concat_channels needs at least 2 inputs, got {len(inputs)}")
    arrays = []
    length = None
    for i, t in enumerate(inputs):
        a = as_array(t)
        if a.ndim != 2:
            raise ShapeError(f"input {i}: expected channels x length, got rank {a.ndim}")
        if length is None:
            length = a.shape[1]
        elif a.shape[1] != length:
            raise ShapeError(
                f"length mismatch: input {i} has length {a.shape[1]}, expected {length}"
            )
        arrays.append(a)
    return Tensor(np.concatenate(arrays, axis=0))


def slice_channels(x, start: int, stop: int) -> Tensor:
    """Extract the channel block [start, stop) of a (channels x length) map."""
    a = as_array(x)
    if a.ndim != 2:
        raise ShapeError(f"expected channels x length, got rank {a.ndim}")
    if not (0 <= start < stop <= a.shape[0]):
        raise ShapeError(f"channel slice [{start}, {stop}) out of range for {a.shape[0]} channels")
    return Tensor(a[start:stop])


def reshape_to_image(l) -> Tensor:
    """Reinterpret a (channels x length) map as a grayscale image.

    Output is height x width x 1 with height = channels and width = length;
    pixel (i, j) equals input element (channel i, position j). Zero-copy in
    row-major layout.
    """
    a = as_array(l)
    if a.ndim != 2:
        raise ShapeError(f"reshape_to_image expects a rank-2 input, got rank {a.ndim}")
    m, n = a.shape
    return Tensor(a.reshape(m, n, 1))
