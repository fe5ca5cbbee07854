from .models import DEFAULT_TARGET_RATIO, AdapterConfig, AdapterReport
from .residual import (
    AdaptedModel,
    AdapterSet,
    AdapterView,
    ResidualAdapter,
    adapter_optimizer,
    adapter_param_count,
    adapter_train_step,
    attach_adapters,
    load_adapters,
    save_adapters,
    select_adapter,
    solve_bottleneck,
)

__all__ = [
    "DEFAULT_TARGET_RATIO",
    "AdapterConfig",
    "AdapterReport",
    "AdaptedModel",
    "AdapterSet",
    "AdapterView",
    "ResidualAdapter",
    "adapter_optimizer",
    "adapter_param_count",
    "adapter_train_step",
    "attach_adapters",
    "load_adapters",
    "save_adapters",
    "select_adapter",
    "solve_bottleneck",
]
