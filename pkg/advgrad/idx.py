"""
The :mod:`idx` module reads and writes IDX files, the format MNIST is
distributed in: two zero bytes, a type byte (``0x08``, unsigned byte),
a dimension count byte, one big-endian 32-bit size per dimension, then
the elements in row-major order.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import struct
import numpy as np
from . import source, diagnostic, training

UNSIGNED_BYTE = 0x08


class IdxDataset:
    """
    Images and labels read from a pair of IDX files.

    :ivar images: (:class:`numpy.ndarray`) N x H x W floats in [0, 1]
    :ivar labels: (:class:`numpy.ndarray`) N integer labels
    :ivar name: (string) identifier used in reports
    :ivar image_buffer: (:class:`advgrad.source.Buffer` or None) raw images file
    :ivar label_buffer: (:class:`advgrad.source.Buffer` or None) raw labels file
    """

    def __init__(self, images, labels, name="<idx>", image_buffer=None, label_buffer=None):
        self.images, self.labels, self.name = images, labels, name
        self.image_buffer, self.label_buffer = image_buffer, label_buffer

    def __repr__(self):
        return "IdxDataset(%s, %d images of %dx%d)" % \
            ((self.name, len(self.labels)) + tuple(self.images.shape[1:]))

    def __len__(self):
        return len(self.labels)

    def _range(self, buffer, begin, end):
        if buffer is None:
            return None
        return source.Range(buffer, begin, end)

    def check_fits(self, input_shape, classes, engine=None, limit=None):
        """
        Checks that the images fit a model input of ``input_shape`` and that
        the first ``limit`` labels (all if None) are below ``classes``.

        :raise: :class:`advgrad.diagnostic.Error` naming the image dimensions
            or the first offending label byte
        """
        if engine is None:
            engine = diagnostic.Engine()
        image_shape = self.images.shape[1:]
        if int(np.prod(image_shape)) != int(np.prod(input_shape)):
            engine.process(diagnostic.Diagnostic(
                "fatal", "images of {image} do not fit model input {model}",
                {"image": "x".join(map(str, image_shape)),
                 "model": "x".join(map(str, input_shape))},
                self._range(self.image_buffer, 8, 16)))

        bad = np.flatnonzero(self.labels[:limit] >= classes)
        if len(bad):
            offset = 8 + int(bad[0])
            engine.process(diagnostic.Diagnostic(
                "fatal", "label {label} of example {index} is out of range for {classes} classes",
                {"label": int(self.labels[bad[0]]), "index": int(bad[0]), "classes": classes},
                self._range(self.label_buffer, offset, offset + 1)))

    def as_dataset(self):
        """Returns a :class:`advgrad.training.Dataset` of N x 1 x H x W inputs."""
        return training.Dataset(self.images[:, None], self.labels, self.name)


def parse_idx(data, name="<idx>", ndims=None, engine=None):
    """
    Parses the contents of an IDX file of unsigned bytes.

    :param ndims: (int or None) required number of dimensions
    :return: (:class:`numpy.ndarray` of uint8) the elements
    :raise: :class:`advgrad.diagnostic.Error` naming the offending bytes
        on a wrong magic, type or dimension count, or a truncated or
        oversized payload
    """
    if engine is None:
        engine = diagnostic.Engine()
    data = bytes(data)
    buffer = source.Buffer(data, name)

    def fail(reason, arguments, begin, end):
        engine.process(diagnostic.Diagnostic(
            "fatal", reason, arguments, source.Range(buffer, begin, end)))

    if len(data) < 4:
        fail("truncated IDX header: {size} bytes", {"size": len(data)}, 0, len(data))
    if data[0] != 0 or data[1] != 0:
        fail("not an IDX file: bytes 0-1 must be zero", {}, 0, 2)
    if data[2] != UNSIGNED_BYTE:
        fail("unsupported IDX element type 0x{kind:02x}, expected 0x08 (unsigned byte)",
             {"kind": data[2]}, 2, 3)
    if ndims is not None and data[3] != ndims:
        fail("IDX file has {actual} dimensions, expected {expected}",
             {"actual": data[3], "expected": ndims}, 3, 4)

    header = 4 + 4 * data[3]
    if len(data) < header:
        fail("truncated IDX header: {count} dimension sizes need {size} bytes",
             {"count": data[3], "size": header}, 4, len(data))
    shape = struct.unpack(">%dI" % data[3], data[4:header])

    expected = int(np.prod(shape, dtype=np.int64))
    actual = len(data) - header
    if actual < expected:
        fail("truncated IDX payload: shape {shape} needs {expected} bytes, found {actual}",
             {"shape": "x".join(map(str, shape)), "expected": expected, "actual": actual},
             header, len(data))
    if actual > expected:
        fail("{extra} unexpected bytes after the IDX payload",
             {"extra": actual - expected}, header + expected, len(data))
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(shape)


def _read(path):
    with open(path, "rb") as f:
        return f.read()

def load_idx(images_path, labels_path, engine=None):
    """
    Reads an images file (3 dimensions) and a labels file (1 dimension).
    Pixels are divided by 255.

    :raise: :class:`advgrad.diagnostic.Error` if either file is malformed
        or the image and label counts differ
    :raise: :exc:`OSError` if a file cannot be read
    """
    if engine is None:
        engine = diagnostic.Engine()
    image_data, label_data = _read(images_path), _read(labels_path)
    images = parse_idx(image_data, images_path, 3, engine)
    labels = parse_idx(label_data, labels_path, 1, engine)
    image_buffer = source.Buffer(image_data, images_path)
    label_buffer = source.Buffer(label_data, labels_path)

    if len(images) != len(labels):
        image_count = diagnostic.Diagnostic(
            "note", "{images} holds {count} images", {"images": images_path, "count": len(images)},
            source.Range(image_buffer, 4, 8))
        engine.process(diagnostic.Diagnostic(
            "fatal", "{count} labels do not match {images_count} images",
            {"count": len(labels), "images_count": len(images)},
            source.Range(label_buffer, 4, 8),
            notes=[image_count]))

    return IdxDataset(images.astype(np.float64) / 255.0, labels.astype(np.int64),
                      "%s,%s" % (images_path, labels_path), image_buffer, label_buffer)


def encode_idx(array):
    """Returns the IDX encoding of an array of unsigned bytes."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        if np.any(array < 0) or np.any(array > 255) or np.any(array != np.round(array)):
            raise ValueError("IDX elements must be integers in [0, 255]")
        array = array.astype(np.uint8)
    return struct.pack(">BBBB", 0, 0, UNSIGNED_BYTE, array.ndim) + \
        struct.pack(">%dI" % array.ndim, *array.shape) + array.tobytes()

def write_idx(path, array):
    with open(path, "wb") as f:
        f.write(encode_idx(array))
