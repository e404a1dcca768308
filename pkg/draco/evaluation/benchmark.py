"""
DRACO - Efficiency Benchmark.

Model size and batch-size-1 inference latency. The adapter only serves
knowledge transfer during training, so it is left out of parameters_m.
"""

import logging
import time
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch

from ..config import Modality
from ..network.model import DracoNet, count_parameters

logger = logging.getLogger(__name__)


def dummy_inputs(model: DracoNet, batch: int = 1, seed: int = 0) -> Tuple[Optional[torch.Tensor], Optional[torch.Tensor]]:
    """Random (patch, cap) tensors shaped for the model's branches."""
    cfg = model.config
    g = torch.Generator().manual_seed(seed)
    patch = cap = None
    if model.modality in (Modality.DUAL, Modality.FP):
        patch = torch.rand(batch, 1, cfg.patch_size, cfg.patch_size, generator=g)
    if model.modality == Modality.PLAIN:
        patch = torch.rand(batch, 1, cfg.teacher_size, cfg.teacher_size, generator=g)
    if model.modality in (Modality.DUAL, Modality.CAP):
        cap = torch.rand(batch, 1, cfg.cap_grid, cfg.cap_grid, generator=g)
    return patch, cap


def inference_parameters(model: DracoNet) -> int:
    total = count_parameters(model)
    if model.adapter is not None:
        total -= count_parameters(model.adapter)
    return total


def benchmark(
    model: DracoNet,
    inputs: Optional[Tuple[Optional[torch.Tensor], Optional[torch.Tensor]]] = None,
    runs: int = 20,
    warmup: int = 3,
    device: str = "cpu",
) -> Dict[str, Any]:
    if runs < 1:
        raise ValueError("benchmark needs runs >= 1")
    model = model.to(device).eval()
    patch, cap = inputs if inputs is not None else dummy_inputs(model)
    patch = patch.to(device) if patch is not None else None
    cap = cap.to(device) if cap is not None else None
    sync = torch.cuda.synchronize if device.startswith('cuda') else (lambda: None)

    timings = []
    with torch.no_grad():
        for i in range(warmup + runs):
            sync()
            start = time.perf_counter()
            model(patch, cap)
            sync()
            if i >= warmup:
                timings.append((time.perf_counter() - start) * 1000.0)

    timings = np.asarray(timings)
    result = {
        'modality': model.modality.value,
        'parameters_m': inference_parameters(model) / 1e6,
        'total_parameters_m': count_parameters(model) / 1e6,
        'mean_ms': float(timings.mean()),
        'std_ms': float(timings.std()),
        'runs': runs,
        'device': device,
    }
    logger.debug(f"benchmark {result['modality']}: {result['parameters_m']:.2f} M, {result['mean_ms']:.2f} ms")
    return result
