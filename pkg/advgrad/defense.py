"""
The :mod:`defense` module contains input preprocessing defenses and
the pipelines that chain them.

Every preprocessor operates on the last two (spatial) axes of its input,
so N x C x H x W batches, N x H x W batches and single H x W images are
all accepted, and every preprocessor preserves the input shape.

Quantizers (:class:`BitSqueeze`, :class:`JpegFilter`) have zero gradient,
which is their true derivative almost everywhere; they are marked as not
``differentiable`` and are the stages :meth:`DefensePipeline.with_bpda`
wraps. The median filter passes the gradient to the selected element.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from . import tensor
from .tensor import Op, ContractError, DimensionError


def round_half_away(values):
    """Rounds to the nearest integer, with halves rounded away from zero."""
    return np.sign(values) * np.floor(np.abs(values) + 0.5)

def _planes(a):
    if a.ndim < 2:
        raise DimensionError("preprocessing needs at least two spatial axes, got shape %s" %
                             (a.shape,))
    return a.reshape((-1,) + a.shape[-2:])

def _zero_backward(g, out, a, **attrs):
    return (np.zeros(a.shape),)

def _format_param(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class Preprocessor:
    """
    A named input transformation ``x -> d(x)``.

    :ivar name: (string) stage name in the pipeline grammar
    :ivar params: (tuple) stage parameters in the pipeline grammar
    :ivar differentiable: (bool) whether the recorded gradient is useful
        to an attacker
    """

    name = None
    differentiable = True

    def __init__(self, *params):
        self.params = params

    def __repr__(self):
        return "%s(%s)" % (type(self).__name__, self.describe())

    def __call__(self, x):
        return self.forward(tensor.as_tensor(x))

    def forward(self, x):
        raise NotImplementedError

    def describe(self):
        """Returns the stage in pipeline grammar, e.g. ``median:3``."""
        return ":".join([self.name] + [_format_param(p) for p in self.params])


def _bit_squeeze_forward(a, levels):
    return round_half_away(a * levels) / levels

_bit_squeeze = Op("bit_squeeze", _bit_squeeze_forward, _zero_backward)

class BitSqueeze(Preprocessor):
    """
    Reduces every value to ``bit_depth`` bits:
    ``round(x * (2**b - 1)) / (2**b - 1)``, halves rounded away from zero.
    """

    name = "bitsqueeze"
    differentiable = False

    def __init__(self, bit_depth):
        if not 1 <= bit_depth <= 8 or int(bit_depth) != bit_depth:
            raise ContractError("bit depth must be an integer in [1, 8], got %r" % (bit_depth,))
        super().__init__(int(bit_depth))
        self.bit_depth = int(bit_depth)

    def forward(self, x):
        return _bit_squeeze(x, levels=float(2 ** self.bit_depth - 1))


def _median_selection(a, kernel_size):
    planes = _planes(a)
    pad = kernel_size // 2
    rows = tensor.reflect_indices(planes.shape[1], pad, pad)
    cols = tensor.reflect_indices(planes.shape[2], pad, pad)
    padded = planes[:, rows[:, None], cols[None, :]]
    windows = sliding_window_view(padded, (kernel_size, kernel_size), axis=(1, 2))
    windows = windows.reshape(windows.shape[:3] + (kernel_size * kernel_size,))
    middle = kernel_size * kernel_size // 2
    choice = np.argpartition(windows, middle, axis=-1)[..., middle]
    return planes, rows, cols, windows, choice

def _median_forward(a, kernel_size):
    _, _, _, windows, choice = _median_selection(a, kernel_size)
    return np.take_along_axis(windows, choice[..., None], axis=-1)[..., 0].reshape(a.shape)

def _median_backward(g, out, a, kernel_size):
    planes, rows, cols, _, choice = _median_selection(a, kernel_size)
    count, height, width = planes.shape
    i, j = np.divmod(choice, kernel_size)
    source_rows = rows[np.arange(height)[None, :, None] + i]
    source_cols = cols[np.arange(width)[None, None, :] + j]
    batch = np.broadcast_to(np.arange(count)[:, None, None], choice.shape)
    grad = np.zeros(planes.shape)
    np.add.at(grad, (batch, source_rows, source_cols), g.reshape(planes.shape))
    return (grad.reshape(a.shape),)

_median = Op("median_smooth_2d", _median_forward, _median_backward)

class MedianSmooth2D(Preprocessor):
    """
    Per-channel sliding-window median over ``kernel_size`` x ``kernel_size``
    windows, reflect-padded at the borders. The gradient of each output
    goes to the input element selected as the median.
    """

    name = "median"

    def __init__(self, kernel_size):
        if int(kernel_size) != kernel_size or kernel_size < 1 or kernel_size % 2 == 0:
            raise ContractError("median kernel size must be a positive odd integer, got %r" %
                                (kernel_size,))
        super().__init__(int(kernel_size))
        self.kernel_size = int(kernel_size)

    def forward(self, x):
        if x.ndim < 2 or self.kernel_size > min(x.shape[-2:]):
            raise DimensionError("median kernel %d does not fit input of shape %s" %
                                 (self.kernel_size, x.shape))
        return _median(x, kernel_size=self.kernel_size)


def gaussian_kernel(size, sigma):
    """Returns a ``size`` x ``size`` Gaussian kernel normalized to sum to 1."""
    if not sigma > 0:
        raise ContractError("sigma must be positive, got %r" % (sigma,))
    offsets = np.arange(size) - (size - 1) / 2.0
    kernel = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


class LinearSmooth2D(Preprocessor):
    """
    Per-channel 2-D cross-correlation with a fixed kernel, reflect-padded
    so that the output keeps the input shape. Even kernels pad
    ``(k - 1) // 2`` before and ``k // 2`` after.

    Use :meth:`average`, :meth:`gaussian` or :meth:`conv` to construct one.

    :ivar kernel: (:class:`numpy.ndarray`) kh x kw weights
    :ivar mode: (string) ``average``, ``gaussian`` or ``conv``
    """

    def __init__(self, kernel, mode, params):
        kernel = np.array(kernel, dtype=np.float64)
        if kernel.ndim != 2 or 0 in kernel.shape:
            raise DimensionError("smoothing kernel must be a matrix, got shape %s" %
                                 (kernel.shape,))
        super().__init__(*params)
        self.kernel, self.mode, self.name = kernel, mode, mode

    @staticmethod
    def _check_odd(size):
        if int(size) != size or size < 1 or size % 2 == 0:
            raise ContractError("kernel size must be a positive odd integer, got %r" % (size,))

    @classmethod
    def average(cls, size):
        cls._check_odd(size)
        size = int(size)
        return cls(np.full((size, size), 1.0 / (size * size)), "average", (size,))

    @classmethod
    def gaussian(cls, size, sigma):
        cls._check_odd(size)
        size = int(size)
        return cls(gaussian_kernel(size, sigma), "gaussian", (size, float(sigma)))

    @classmethod
    def conv(cls, kernel):
        kernel = np.array(kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
            raise DimensionError("conv kernel must be square, got shape %s" % (kernel.shape,))
        return cls(kernel, "conv", (kernel.shape[0],) + tuple(float(v) for v in kernel.reshape(-1)))

    @classmethod
    def from_values(cls, size, *values):
        """Builds a ``conv`` stage from a size and ``size * size`` row-major weights."""
        if size < 1 or len(values) != size * size:
            raise ContractError("conv:%d takes %d weights, got %d" %
                                (size, max(size, 0) ** 2, len(values)))
        return cls.conv(np.array(values).reshape(size, size))

    def forward(self, x):
        kh, kw = self.kernel.shape
        if x.ndim < 2:
            raise DimensionError("smoothing needs at least two spatial axes, got shape %s" %
                                 (x.shape,))
        height, width = x.shape[-2:]
        planes = x.reshape((x.size // (height * width), 1, height, width))
        padded = tensor.pad_reflect(planes, (((kh - 1) // 2, kh // 2), ((kw - 1) // 2, kw // 2)))
        out = tensor.conv2d(padded, self.kernel.reshape(1, 1, kh, kw))
        return out.reshape(x.shape)


LUMINANCE_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

def _dct_matrix():
    k, n = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    matrix = np.sqrt(2.0 / 8) * np.cos(np.pi * (2 * n + 1) * k / 16.0)
    matrix[0, :] = np.sqrt(1.0 / 8)
    return matrix

DCT = _dct_matrix()
"""Orthonormal 8-point DCT-II matrix; ``DCT @ DCT.T`` is the identity."""

def quality_table(quality):
    """
    Scales :data:`LUMINANCE_TABLE` to ``quality`` in [1, 100]:
    entries ``floor((Q * scale + 50) / 100)`` with ``scale = 5000 / quality``
    below 50 and ``200 - 2 * quality`` otherwise, clamped to at least 1.
    """
    if int(quality) != quality or not 1 <= quality <= 100:
        raise ContractError("JPEG quality must be an integer in [1, 100], got %r" % (quality,))
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2 * quality
    return np.maximum(np.floor((LUMINANCE_TABLE * scale + 50) / 100), 1.0)

def quantize_blocks(blocks, table, rounding=True):
    """
    Transforms level-shifted 8 x 8 blocks (the last two axes) to DCT
    coefficients, quantizes them with ``table`` and transforms back.
    With ``rounding=False`` the coefficients are only divided and
    multiplied back, which makes the roundtrip lossless.
    """
    coefficients = DCT @ blocks @ DCT.T
    scaled = coefficients / table
    if rounding:
        scaled = round_half_away(scaled)
    return DCT.T @ (scaled * table) @ DCT

def _jpeg_forward(a, table, rounding):
    planes = _planes(a)
    count, height, width = planes.shape
    padded_height, padded_width = -(-height // 8) * 8, -(-width // 8) * 8
    padded = np.pad(planes, ((0, 0), (0, padded_height - height), (0, padded_width - width)),
                    mode="edge")
    blocks = padded.reshape(count, padded_height // 8, 8, padded_width // 8, 8)
    blocks = blocks.transpose(0, 1, 3, 2, 4) * 255.0 - 128.0
    restored = (quantize_blocks(blocks, table, rounding) + 128.0) / 255.0
    restored = restored.transpose(0, 1, 3, 2, 4).reshape(count, padded_height, padded_width)
    return np.clip(restored[:, :height, :width], 0.0, 1.0).reshape(a.shape)

_jpeg = Op("jpeg_filter", _jpeg_forward, _zero_backward)

class JpegFilter(Preprocessor):
    """
    Grayscale JPEG compression and decompression of every channel:
    8 x 8 block DCT, quantization with the quality-scaled luminance table,
    inverse DCT. Inputs are edge-padded to multiples of 8 and cropped back.

    :ivar quality: (int) in [1, 100]
    :ivar table: (:class:`numpy.ndarray`) 8 x 8 quantization table
    :ivar rounding: (bool) whether coefficients are rounded
    """

    name = "jpeg"
    differentiable = False

    def __init__(self, quality, table=None, rounding=True):
        default = quality_table(quality)
        super().__init__(int(quality))
        if table is not None:
            table = np.array(table, dtype=np.float64)
            if table.shape != (8, 8) or np.any(table <= 0):
                raise ContractError("quantization table must be 8 x 8 and positive")
        self.quality = int(quality)
        self.table = default if table is None else table
        self.rounding = rounding

    def forward(self, x):
        return _jpeg(x, table=self.table, rounding=self.rounding)


class DefensePipeline:
    """
    An ordered, immutable sequence of preprocessors applied left to right.

    :ivar stages: (tuple of :class:`Preprocessor`)
    """

    def __init__(self, stages=()):
        self.stages = tuple(stages)

    def __repr__(self):
        return "DefensePipeline(%r)" % self.describe()

    def __len__(self):
        return len(self.stages)

    def __call__(self, x):
        x = tensor.as_tensor(x)
        for stage in self.stages:
            x = stage(x)
        return x

    def then(self, other):
        """Returns the pipeline applying this one, then ``other``."""
        if isinstance(other, DefensePipeline):
            return DefensePipeline(self.stages + other.stages)
        return DefensePipeline(self.stages + (other,))

    def describe(self):
        """Returns the pipeline in the grammar of :func:`advgrad.parser.parse_pipeline`."""
        return ",".join(stage.describe() for stage in self.stages)

    @property
    def differentiable(self):
        return all(stage.differentiable for stage in self.stages)

    def with_bpda(self):
        """
        Returns the pipeline with every non-differentiable stage wrapped
        by :func:`advgrad.bpda.straight_through`.
        """
        from . import bpda
        return DefensePipeline(stage if stage.differentiable else bpda.straight_through(stage)
                               for stage in self.stages)


def apply_pipeline(pipeline, x):
    """Applies the stages of ``pipeline`` to ``x`` left to right."""
    if not isinstance(pipeline, DefensePipeline):
        pipeline = DefensePipeline(pipeline)
    return pipeline(x)


def bit_squeeze(x, bit_depth):
    return BitSqueeze(bit_depth)(x)

def median_smooth_2d(x, kernel_size):
    return MedianSmooth2D(kernel_size)(x)

def linear_smooth_2d(x, kernel, mode="conv", sigma=None):
    """
    Smooths ``x`` with a verbatim ``kernel`` matrix (``mode="conv"``), or
    builds the kernel from its size ``kernel`` for ``average`` and
    ``gaussian`` (which also takes ``sigma``).
    """
    if mode == "conv":
        return LinearSmooth2D.conv(kernel)(x)
    elif mode == "average":
        return LinearSmooth2D.average(kernel)(x)
    elif mode == "gaussian":
        return LinearSmooth2D.gaussian(kernel, sigma)(x)
    raise ContractError("unknown smoothing mode %r" % (mode,))

def jpeg_filter(x, quality):
    return JpegFilter(quality)(x)


STAGES = {
    "bitsqueeze": (BitSqueeze, "i"),
    "median":     (MedianSmooth2D, "i"),
    "average":    (LinearSmooth2D.average, "i"),
    "gaussian":   (LinearSmooth2D.gaussian, "if"),
    "conv":       (LinearSmooth2D.from_values, "i*"),
    "jpeg":       (JpegFilter, "i"),
}
"""
Pipeline stage name to ``(factory, signature)``. Each signature character
gives the type of one parameter (``i`` integer, ``f`` number); a trailing
``*`` accepts any number of further numbers.
"""
