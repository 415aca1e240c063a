"""
The :mod:`models` module contains small differentiable classifiers
and their portable file format.

A model file is laid out as follows (little-endian): ::

    [offset] [type]            [value]
    0        4 bytes           "ADVG"
    4        u32               format version (1)
    8        u32               descriptor length L
    12       L bytes (UTF-8)   architecture descriptor, e.g. "mlp:784-128-64-10"
    12+L     f64 * P           parameters in layer order, weights then bias

The payload must hold exactly the number of parameters the descriptor implies.
"""

from __future__ import absolute_import, division, print_function, unicode_literals
import struct
import numpy as np
from . import source, diagnostic, parser, tensor
from .tensor import Tensor, DimensionError, ContractError

MAGIC = b"ADVG"
FORMAT_VERSION = 1

_header = struct.Struct("<4sII")


class MlpArchitecture:
    """
    A fully connected classifier with ReLU between layers.

    :ivar widths: (tuple of int) layer widths from input to classes,
        e.g. ``(784, 128, 64, 10)``
    """
    kind = "mlp"

    def __init__(self, widths):
        widths = tuple(int(width) for width in widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ContractError("an MLP needs at least two positive widths, got %s" % (widths,))
        self.widths = widths

    def __eq__(self, other):
        return type(self) == type(other) and self.descriptor() == other.descriptor()

    def __ne__(self, other):
        return not (self == other)

    def descriptor(self):
        return "mlp:" + "-".join(map(str, self.widths))

    @property
    def input_shape(self):
        return (self.widths[0],)

    @property
    def classes(self):
        return self.widths[-1]

    def parameter_shapes(self):
        shapes = []
        for fan_in, fan_out in zip(self.widths, self.widths[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        return shapes

    def fans(self):
        return list(zip(self.widths, self.widths[1:]))

    def build(self, parameters):
        return MlpClassifier(self, parameters)


class ConvArchitecture:
    """
    Convolutional layers with ReLU, a flatten, then a fully connected head.

    :ivar input_shape: (tuple of int) ``(C, H, W)`` of one example
    :ivar convs: (tuple of (filters, kernel, stride, padding))
    :ivar widths: (tuple of int) hidden dense widths followed by the class count
    """
    kind = "conv"

    def __init__(self, input_shape, convs, widths):
        self.input_shape = tuple(int(dim) for dim in input_shape)
        self.convs = tuple(tuple(int(v) for v in conv) for conv in convs)
        self.widths = tuple(int(width) for width in widths)
        if len(self.input_shape) != 3 or not self.widths or not self.convs:
            raise ContractError("a convnet needs a CxHxW input, conv layers and a head")

        channels, height, width = self.input_shape
        self.feature_shapes = []
        for filters, kernel, stride, padding in self.convs:
            if kernel > height + 2 * padding or kernel > width + 2 * padding or \
                    stride < 1 or filters < 1:
                raise DimensionError("conv layer %s does not fit a %dx%dx%d input" %
                                     ((filters, kernel, stride, padding),
                                      channels, height, width))
            height = (height + 2 * padding - kernel) // stride + 1
            width = (width + 2 * padding - kernel) // stride + 1
            channels = filters
            self.feature_shapes.append((channels, height, width))
        self.flat_size = channels * height * width

    def __eq__(self, other):
        return type(self) == type(other) and self.descriptor() == other.descriptor()

    def __ne__(self, other):
        return not (self == other)

    def descriptor(self):
        return "conv:%s:%s:%s" % (
            "x".join(map(str, self.input_shape)),
            ",".join("%dk%ds%dp%d" % conv for conv in self.convs),
            "-".join(map(str, self.widths)))

    @property
    def classes(self):
        return self.widths[-1]

    def parameter_shapes(self):
        shapes = []
        channels = self.input_shape[0]
        for filters, kernel, stride, padding in self.convs:
            shapes += [(filters, channels, kernel, kernel), (filters,)]
            channels = filters
        dense = (self.flat_size,) + self.widths
        for fan_in, fan_out in zip(dense, dense[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        return shapes

    def fans(self):
        fans = []
        channels = self.input_shape[0]
        for filters, kernel, stride, padding in self.convs:
            fans.append((channels * kernel * kernel, filters * kernel * kernel))
            channels = filters
        dense = (self.flat_size,) + self.widths
        return fans + list(zip(dense, dense[1:]))

    def build(self, parameters):
        return ConvClassifier(self, parameters)


def parse_architecture(descriptor, engine=None):
    """
    Parses an architecture descriptor such as ``mlp:784-128-64-10`` or
    ``conv:1x28x28:8k3s2p0,16k3s2p0:64-10``.

    :raise: :class:`diagnostic.Error` if the descriptor is malformed
    """
    if engine is None:
        engine = diagnostic.Engine()
    buffer = source.Buffer(descriptor, "<architecture>")
    kind, fields = parser.parse_architecture(buffer, engine)
    try:
        if kind == "mlp":
            return MlpArchitecture(**fields)
        return ConvArchitecture(**fields)
    except ContractError as error:
        engine.process(diagnostic.Diagnostic(
            "fatal", "invalid architecture: {reason}", {"reason": str(error)},
            source.Range(buffer, 0, len(descriptor))))


class _Classifier:
    def __init__(self, architecture, parameters):
        parameters = tuple(tensor.as_tensor(p) for p in parameters)
        shapes = architecture.parameter_shapes()
        if [p.shape for p in parameters] != [tuple(s) for s in shapes]:
            raise DimensionError("parameters of shapes %s do not match %s" %
                                 ([p.shape for p in parameters], shapes))
        self.architecture = architecture
        self.parameters = parameters

    def __repr__(self):
        return "%s(\"%s\")" % (type(self).__name__, self.architecture.descriptor())

    def __call__(self, x):
        return self.predict_logits(x)

    def with_parameters(self, parameters):
        """Returns a model of the same architecture with ``parameters``."""
        return type(self)(self.architecture, parameters)

    def parameter_count(self):
        return sum(p.size for p in self.parameters)

    def _conform(self, x):
        x = tensor.as_tensor(x)
        shape = self.architecture.input_shape
        if x.shape[1:] == shape:
            return x
        if x.ndim >= 2 and int(np.prod(x.shape[1:])) == int(np.prod(shape)):
            return x.reshape((x.shape[0],) + shape)
        raise DimensionError("input of shape %s does not match model input %s" %
                             (x.shape, shape))

    def _dense(self, h, weights, last):
        for index, (w, b) in enumerate(weights):
            h = tensor.matmul(h, w) + b
            if index < len(weights) - 1 or not last:
                h = tensor.relu(h)
        return h


class MlpClassifier(_Classifier):
    """
    A multilayer perceptron. Hidden layers are numbered from 0 for
    :meth:`predict_features`; the output of the last hidden layer is
    the input of the linear head.

    :ivar architecture: (:class:`MlpArchitecture`)
    :ivar parameters: (tuple of :class:`Tensor`) ``W0, b0, W1, b1, ...``;
        ``Wi`` has shape (fan_in, fan_out)
    """

    @property
    def depth(self):
        return len(self.architecture.widths) - 2

    def _layers(self):
        return list(zip(self.parameters[0::2], self.parameters[1::2]))

    def predict_logits(self, x):
        """
        Returns pre-softmax scores of shape N x K. Inputs whose
        per-example size matches the input width are flattened.
        """
        return self._dense(self._conform(x), self._layers(), last=True)

    def predict_features(self, x, layer_index):
        """
        Returns the post-activation output of hidden layer ``layer_index``.

        :raise: :exc:`IndexError` if ``layer_index`` is not in [0, depth)
        """
        if not 0 <= layer_index < self.depth:
            raise IndexError("layer %d out of range for depth %d" % (layer_index, self.depth))
        return self._dense(self._conform(x), self._layers()[:layer_index + 1], last=False)


class ConvClassifier(_Classifier):
    """
    A convolutional classifier. Feature layers are numbered from 0
    over the convolutional layers, then the hidden dense layers.

    :ivar architecture: (:class:`ConvArchitecture`)
    :ivar parameters: (tuple of :class:`Tensor`) conv kernels and biases,
        then dense weights and biases
    """

    @property
    def depth(self):
        return len(self.architecture.convs) + len(self.architecture.widths) - 1

    def _forward(self, x, stop=None):
        convs = self.architecture.convs
        h = self._conform(x)
        for index, (filters, kernel, stride, padding) in enumerate(convs):
            w, b = self.parameters[2 * index], self.parameters[2 * index + 1]
            h = tensor.conv2d(h, w, stride, padding) + b.reshape((1, filters, 1, 1))
            h = tensor.relu(h)
            if stop == index:
                return h

        dense = self.parameters[2 * len(convs):]
        layers = list(zip(dense[0::2], dense[1::2]))
        h = h.reshape((h.shape[0], self.architecture.flat_size))
        if stop is None:
            return self._dense(h, layers, last=True)
        return self._dense(h, layers[:stop - len(convs) + 1], last=False)

    def predict_logits(self, x):
        """Returns pre-softmax scores of shape N x K."""
        return self._forward(x)

    def predict_features(self, x, layer_index):
        """
        Returns the post-activation output of feature layer ``layer_index``.

        :raise: :exc:`IndexError` if ``layer_index`` is not in [0, depth)
        """
        if not 0 <= layer_index < self.depth:
            raise IndexError("layer %d out of range for depth %d" % (layer_index, self.depth))
        return self._forward(x, stop=layer_index)


def init_params(architecture, seed):
    """
    Returns a model with Glorot-uniform weights, drawn from
    ``[-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))]``,
    and zero biases. The parameters are fully determined by ``seed``.

    :param architecture: an architecture object or descriptor string
    """
    if not hasattr(architecture, "parameter_shapes"):
        architecture = parse_architecture(architecture)

    rng = np.random.default_rng(seed)
    parameters = []
    for (weight_shape, bias_shape), (fan_in, fan_out) in \
            zip(zip(*[iter(architecture.parameter_shapes())] * 2), architecture.fans()):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        parameters.append(Tensor(rng.uniform(-bound, bound, size=weight_shape)))
        parameters.append(Tensor(np.zeros(bias_shape)))
    return architecture.build(parameters)


def encode_model(model):
    """Returns the model file contents as bytes."""
    descriptor = model.architecture.descriptor().encode("utf-8")
    payload = np.concatenate([p.data.reshape(-1) for p in model.parameters])
    return _header.pack(MAGIC, FORMAT_VERSION, len(descriptor)) + descriptor + \
        payload.astype("<f8").tobytes()

def save_model(model, path):
    with open(path, "wb") as f:
        f.write(encode_model(model))

def decode_model(data, name="<model>", engine=None):
    """
    Parses model file contents.

    :raise: :class:`diagnostic.Error` on a wrong magic, unsupported
        version, malformed descriptor or payload length mismatch
    """
    if engine is None:
        engine = diagnostic.Engine()
    buffer = source.Buffer(bytes(data), name)

    def fail(reason, arguments, begin, end):
        engine.process(diagnostic.Diagnostic(
            "fatal", reason, arguments, source.Range(buffer, begin, end)))

    if len(data) < _header.size:
        fail("truncated model header: {size} bytes, expected at least {expected}",
             {"size": len(data), "expected": _header.size}, 0, len(data))
    magic, version, length = _header.unpack_from(data)
    if magic != MAGIC:
        fail("not a model file: magic {magic!r}, expected {expected!r}",
             {"magic": magic, "expected": MAGIC}, 0, 4)
    if version != FORMAT_VERSION:
        fail("unsupported model format version {version}",
             {"version": version}, 4, 8)

    begin = _header.size
    if len(data) < begin + length:
        fail("truncated architecture descriptor: {length} bytes declared",
             {"length": length}, 8, 12)
    try:
        descriptor = bytes(data[begin:begin + length]).decode("utf-8")
    except UnicodeDecodeError:
        fail("architecture descriptor is not valid UTF-8", {}, begin, begin + length)

    with engine.context(diagnostic.Diagnostic(
            "note", "in the architecture descriptor of {name}", {"name": name})):
        architecture = parse_architecture(descriptor, engine)

    shapes = architecture.parameter_shapes()
    count = sum(int(np.prod(shape)) for shape in shapes)
    payload_begin = begin + length
    actual = len(data) - payload_begin
    if actual != count * 8:
        fail("parameter payload has {actual} bytes, architecture {descriptor} needs {expected}",
             {"actual": actual, "descriptor": descriptor, "expected": count * 8},
             payload_begin, len(data))

    flat = np.frombuffer(bytes(data[payload_begin:]), dtype="<f8").astype(np.float64)
    parameters, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        parameters.append(Tensor(flat[offset:offset + size].reshape(shape)))
        offset += size
    return architecture.build(parameters)

def load_model(path, engine=None):
    with open(path, "rb") as f:
        return decode_model(f.read(), path, engine)
