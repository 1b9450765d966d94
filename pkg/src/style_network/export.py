import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import onnx
import onnxruntime
import torch
from pydantic import BaseModel, Field

from src.config import Config
from src.core.exceptions import ExportError
from src.core.storage import file_checksum
from src.style_network.model import StyleModel, count_parameters, expected_parameter_count, layer_spec

logger = logging.getLogger(__name__)

INPUT_NAME = "input"
OUTPUT_NAME = "output"


def _float_copy(model: StyleModel) -> StyleModel:
    copy = StyleModel()
    copy.load_state_dict({k: v.detach().float().cpu() for k, v in model.state_dict().items()})
    return copy.eval()


class ExportManifest(BaseModel):
    path: str
    opset: int
    input_name: str = INPUT_NAME
    output_name: str = OUTPUT_NAME
    input_shape: List[Union[int, str]] = [1, 3, "height", "width"]
    output_shape: List[Union[int, str]] = [1, 3, "height", "width"]
    checksum: str
    parameter_count: int
    # (kind, in, out, kernel, has_instance_norm) per convolution
    layers: List[Tuple[str, int, int, int, bool]] = Field(default_factory=layer_spec)
    torch_version: str
    max_abs_deviation: Optional[float] = None


def export_graph(model: StyleModel, path: Union[str, Path], opset: Optional[int] = None,
                 sample_size: Tuple[int, int] = (360, 360)) -> ExportManifest:
    """Write a self-contained ONNX graph with dynamic height and width."""
    path = Path(path)
    opset = opset or Config.ONNX_OPSET

    for name, param in model.named_parameters():
        if not bool(torch.isfinite(param).all()):
            raise ExportError(f"Export refused: parameter '{name}' has non-finite values", {"parameter": name})

    parameter_count = count_parameters(model)
    if parameter_count != expected_parameter_count():
        raise ExportError(
            f"Export refused: {parameter_count} parameters, the network layout has {expected_parameter_count()}",
            {"parameter_count": parameter_count, "expected": expected_parameter_count()},
        )

    export_model = _float_copy(model)

    path.parent.mkdir(parents=True, exist_ok=True)
    dummy = torch.zeros(1, 3, *sample_size)
    torch.onnx.export(
        export_model,
        dummy,
        str(path),
        export_params=True,
        opset_version=opset,
        do_constant_folding=True,
        input_names=[INPUT_NAME],
        output_names=[OUTPUT_NAME],
        dynamic_axes={
            INPUT_NAME: {2: "height", 3: "width"},
            OUTPUT_NAME: {2: "height", 3: "width"},
        },
        dynamo=False,
    )
    onnx.checker.check_model(onnx.load(str(path)))

    manifest = ExportManifest(
        path=str(path),
        opset=opset,
        checksum=file_checksum(path),
        parameter_count=parameter_count,
        torch_version=torch.__version__,
    )
    logger.info(f"Exported ONNX graph to {path} (opset {opset})")
    return manifest


def run_exported(path: Union[str, Path], batch: np.ndarray) -> np.ndarray:
    session = onnxruntime.InferenceSession(str(path), providers=["CPUExecutionProvider"])
    return session.run(None, {INPUT_NAME: batch.astype(np.float32)})[0]


def verify_export(path: Union[str, Path], model: StyleModel, sample: torch.Tensor) -> float:
    """Max absolute deviation between the native forward pass and the reloaded graph."""
    with torch.no_grad():
        native = _float_copy(model)(sample.float()).cpu().numpy()
    exported = run_exported(path, sample.cpu().numpy())
    deviation = float(np.abs(native - exported).max())
    logger.info(f"Export round trip deviation: {deviation:.3g}")
    return deviation
