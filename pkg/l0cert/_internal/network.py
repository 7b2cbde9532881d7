import logging
import math
from collections.abc import Sequence
from typing import Any, Self

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator
from scipy import sparse

from l0cert._internal.types.document import (
    Conv2DLayerRecord,
    DenseLayerRecord,
    InputDocument,
    ModelDocument,
    ReLULayerRecord,
)
from l0cert._internal.types.domain import FloatArray, coerce_point, coerce_points
from l0cert.errors import ModelFormatError, ShapeMismatchError

logger = logging.getLogger(__name__)

Weight = FloatArray | sparse.csr_array


class AffineStage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weight: Weight
    bias: FloatArray

    @model_validator(mode="after")
    def bias_matches_rows(self) -> Self:
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"Weight {self.weight.shape} and bias {self.bias.shape} are inconsistent")

        return self

    @property
    def in_width(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_width(self) -> int:
        return int(self.weight.shape[0])

    def apply(self, inputs: FloatArray) -> FloatArray:
        return np.asarray(self.weight @ inputs.T).T + self.bias

    def pull_back(self, coefficients: FloatArray) -> FloatArray:
        return np.asarray(self.weight.T @ coefficients.T).T


class ReLUStage(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int

    @property
    def in_width(self) -> int:
        return self.width

    @property
    def out_width(self) -> int:
        return self.width

    def apply(self, inputs: FloatArray) -> FloatArray:
        return np.maximum(inputs, 0.0)


Stage = AffineStage | ReLUStage


# Entry i on channel j sits at position j * entries + i.
def flatten_points(points: FloatArray) -> FloatArray:
    """(count, entries, channels) -> (count, channels * entries), channel-major."""
    return points.transpose(0, 2, 1).reshape(points.shape[0], -1)


def unflatten_coefficients(coefficients: FloatArray, *, entries: int, channels: int) -> FloatArray:
    return coefficients.reshape(coefficients.shape[0], channels, entries).transpose(0, 2, 1)


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def lower_conv2d(
    *,
    input_shape: tuple[int, int, int],
    kernel: FloatArray,
    bias: FloatArray,
    stride: tuple[int, int],
    padding: tuple[int, int],
) -> AffineStage:
    """Materializes a zero-padded 2-D convolution as a sparse affine map over (C, H, W)-flattened inputs."""
    in_channels, height, width = input_shape
    out_channels, _, kernel_h, kernel_w = kernel.shape
    out_h = conv_output_size(height, kernel_h, stride[0], padding[0])
    out_w = conv_output_size(width, kernel_w, stride[1], padding[1])

    f, i, j, c, m, n = np.meshgrid(
        np.arange(out_channels),
        np.arange(out_h),
        np.arange(out_w),
        np.arange(in_channels),
        np.arange(kernel_h),
        np.arange(kernel_w),
        indexing="ij",
    )
    rows_in = i * stride[0] - padding[0] + m
    cols_in = j * stride[1] - padding[1] + n
    valid = (rows_in >= 0) & (rows_in < height) & (cols_in >= 0) & (cols_in < width)

    rows = (f * out_h * out_w + i * out_w + j)[valid]
    cols = (c * height * width + rows_in * width + cols_in)[valid]
    data = kernel[f, c, m, n][valid]

    matrix = sparse.csr_array(
        sparse.coo_array((data, (rows, cols)), shape=(out_channels * out_h * out_w, in_channels * height * width))
    )
    return AffineStage(weight=matrix, bias=np.repeat(bias, out_h * out_w))


def conv2d_direct(
    *, inputs: FloatArray, kernel: FloatArray, bias: FloatArray, stride: tuple[int, int], padding: tuple[int, int]
) -> FloatArray:
    _, height, width = inputs.shape
    out_channels, _, kernel_h, kernel_w = kernel.shape
    out_h = conv_output_size(height, kernel_h, stride[0], padding[0])
    out_w = conv_output_size(width, kernel_w, stride[1], padding[1])
    padded = np.pad(inputs, ((0, 0), (padding[0], padding[0]), (padding[1], padding[1])))

    outputs = np.empty((out_channels, out_h, out_w))
    for row in range(out_h):
        for column in range(out_w):
            top, left = row * stride[0], column * stride[1]
            window = padded[:, top : top + kernel_h, left : left + kernel_w]
            outputs[:, row, column] = np.einsum("fcmn,cmn->f", kernel, window) + bias

    return outputs


class Network:
    def __init__(
        self,
        *,
        stages: Sequence[Stage],
        input_shape: tuple[int, ...],
        channels: int,
        document: ModelDocument | None = None,
    ) -> None:
        if len(stages) == 0:
            raise ShapeMismatchError(expected="at least one layer", actual=0, what="layer count")

        width = math.prod(input_shape) * channels
        for index, stage in enumerate(stages):
            if stage.in_width != width:
                raise ShapeMismatchError(expected=width, actual=stage.in_width, what=f"layers[{index}] input width")
            width = stage.out_width

        self._stages = tuple(stages)
        self._input_shape = input_shape
        self._channels = channels
        self._document = document

    @property
    def stages(self) -> tuple[Stage, ...]:
        return self._stages

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self._input_shape

    @property
    def channels(self) -> int:
        return self._channels

    @property
    def entries(self) -> int:
        return math.prod(self._input_shape)

    @property
    def output_count(self) -> int:
        return self._stages[-1].out_width

    @property
    def document(self) -> ModelDocument | None:
        return self._document

    @classmethod
    def from_document(cls, document: ModelDocument) -> "Network":
        spatial: tuple[int, int, int] | None = None
        if len(document.input_shape) == 2:
            spatial = (document.channels, document.input_shape[0], document.input_shape[1])
        width = math.prod(document.input_shape) * document.channels

        stages: list[Stage] = []
        for index, layer in enumerate(document.layers):
            match layer:
                case DenseLayerRecord():
                    weight = np.array(layer.weight, dtype=np.float64)
                    if weight.shape[1] != width:
                        raise ShapeMismatchError(
                            expected=width, actual=weight.shape[1], what=f"layers[{index}] dense input width"
                        )
                    stages.append(AffineStage(weight=weight, bias=np.array(layer.bias, dtype=np.float64)))
                    spatial, width = None, weight.shape[0]
                case Conv2DLayerRecord():
                    kernel = np.array(layer.kernel, dtype=np.float64)
                    if spatial is None or kernel.shape[1] != spatial[0]:
                        raise ShapeMismatchError(
                            expected=spatial, actual=kernel.shape, what=f"layers[{index}] convolution input"
                        )
                    out_h = conv_output_size(spatial[1], kernel.shape[2], layer.stride[0], layer.padding[0])
                    out_w = conv_output_size(spatial[2], kernel.shape[3], layer.stride[1], layer.padding[1])
                    if out_h < 1 or out_w < 1:
                        raise ShapeMismatchError(
                            expected="a positive output size", actual=(out_h, out_w), what=f"layers[{index}] kernel"
                        )
                    stages.append(
                        lower_conv2d(
                            input_shape=spatial,
                            kernel=kernel,
                            bias=np.array(layer.bias, dtype=np.float64),
                            stride=layer.stride,
                            padding=layer.padding,
                        )
                    )
                    spatial = (kernel.shape[0], out_h, out_w)
                    width = math.prod(spatial)
                case ReLULayerRecord():
                    stages.append(ReLUStage(width=width))

        if width < 2:
            raise ShapeMismatchError(expected="at least 2 outputs", actual=width, what="output count")

        logger.debug("Loaded a network with %d stages and %d outputs", len(stages), width)
        return cls(stages=stages, input_shape=document.input_shape, channels=document.channels, document=document)

    def with_margin_layer(self, *, label: int) -> "Network":
        """Appends a virtual affine stage computing o_label - o_j for every other label j, in increasing j."""
        count = self.output_count
        if not 0 <= label < count:
            raise ShapeMismatchError(expected=f"a label in [0, {count})", actual=label, what="label")

        others = [j for j in range(count) if j != label]
        weight = np.zeros((len(others), count))
        weight[:, label] = 1.0
        weight[np.arange(len(others)), others] = -1.0
        margin = AffineStage(weight=weight, bias=np.zeros(len(others)))

        return Network(stages=[*self._stages, margin], input_shape=self._input_shape, channels=self._channels)


def forward_trace(net: Network, points: Any) -> list[FloatArray]:
    values = flatten_points(coerce_points(points, entries=net.entries, channels=net.channels))
    trace: list[FloatArray] = []
    for stage in net.stages:
        values = stage.apply(values)
        trace.append(values)

    return trace


def forward_batch(net: Network, points: Any) -> FloatArray:
    return forward_trace(net, points)[-1]


def forward(net: Network, point: Any) -> FloatArray:
    point = coerce_point(point, entries=net.entries, channels=net.channels)
    return forward_batch(net, point[None])[0]


def classify_batch(net: Network, points: Any) -> NDArray[np.intp]:
    # argmax returns the first maximal index, so ties go to the lowest label.
    return np.argmax(forward_batch(net, points), axis=1)


def classify(net: Network, point: Any) -> int:
    return int(np.argmax(forward(net, point)))


def load_model(data: bytes | str) -> Network:
    try:
        document = ModelDocument.model_validate_json(data)
    except ValidationError as error:
        raise ModelFormatError(message="Model document does not follow the schema", errors=error.errors()) from error

    return Network.from_document(document)


def _layer_record(stage: Stage) -> DenseLayerRecord | ReLULayerRecord:
    match stage:
        case AffineStage():
            weight = stage.weight if isinstance(stage.weight, np.ndarray) else stage.weight.toarray()
            return DenseLayerRecord(weight=weight.tolist(), bias=stage.bias.tolist())
        case ReLUStage():
            return ReLULayerRecord()


def save_model(net: Network) -> bytes:
    document = net.document
    if document is None:
        document = ModelDocument.model_validate(
            {
                "input_shape": net.input_shape,
                "channels": net.channels,
                "layers": [_layer_record(stage).model_dump() for stage in net.stages],
            }
        )

    return document.model_dump_json(indent=2).encode()


def load_input(data: bytes | str) -> InputDocument:
    try:
        return InputDocument.model_validate_json(data)
    except ValidationError as error:
        raise ModelFormatError(message="Input document does not follow the schema", errors=error.errors()) from error
