from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from encoder import AttentionPattern, ConformerConfig, UsmModel
from numerics import Adam, LayerNorm, Linear, Module, Tensor, forward_backward, ops
from utils import read_array_dir, write_array_dir

from .models import AdapterConfig, AdapterReport

log = logging.getLogger(__name__)


class ResidualAdapter(Module):
    """Layer norm, down-projection, swish, zero-initialised up-projection."""

    def __init__(self, dim: int, bottleneck: int, rng: np.random.Generator):
        super().__init__()
        self.norm = self.add_module("norm", LayerNorm(dim))
        self.down = self.add_module("down", Linear(dim, bottleneck, rng))
        self.up = self.add_module("up", Linear(bottleneck, dim, rng, zero_init=True))

    def __call__(self, x: Tensor) -> Tensor:
        return self.up(ops.swish(self.down(self.norm(x))))


class AdapterSet(Module):
    """Two parallel adapters per conformer block for one language."""

    def __init__(self, cfg: ConformerConfig, bottleneck: int, rng: np.random.Generator):
        super().__init__()
        self.bottleneck = bottleneck
        self.pairs: List[Tuple[ResidualAdapter, ResidualAdapter]] = [
            (
                self.add_module(f"layer{n}.ff1", ResidualAdapter(cfg.model_dim, bottleneck, rng)),
                self.add_module(f"layer{n}.ff2", ResidualAdapter(cfg.model_dim, bottleneck, rng)),
            )
            for n in range(cfg.num_layers)
        ]


def adapter_param_count(cfg: ConformerConfig, bottleneck: int) -> int:
    d = cfg.model_dim
    one = 2 * d + (d * bottleneck + bottleneck) + (bottleneck * d + d)
    return 2 * cfg.num_layers * one


def solve_bottleneck(cfg: ConformerConfig, base_params: int, target_ratio: float) -> int:
    """Bottleneck whose per-language adapter count is closest to target_ratio * base_params."""
    best, best_gap = 1, float("inf")
    for b in range(1, cfg.model_dim + 1):
        gap = abs(adapter_param_count(cfg, b) / base_params - target_ratio)
        if gap < best_gap:
            best, best_gap = b, gap
    return best


class AdapterView:
    """A base model bound to one language's adapters; binding copies nothing."""

    def __init__(self, model: UsmModel, language: str, adapters: AdapterSet):
        self.model = model
        self.language = language
        self.adapters = adapters

    def encode(self, features, pattern: AttentionPattern) -> Tensor:
        return self.model.encode(features, pattern, self.adapters.pairs)

    def log_probs(self, features, pattern: AttentionPattern) -> Tensor:
        return self.model.log_probs(self.encode(features, pattern))

    def asr_loss(self, batch, pattern: AttentionPattern):
        return self.model.asr_loss(batch, pattern, self.adapters.pairs)


class AdaptedModel:
    def __init__(self, model: UsmModel, bottleneck: int):
        self.model = model
        self.bottleneck = bottleneck
        self.sets: Dict[str, AdapterSet] = {}

    @property
    def languages(self) -> List[str]:
        return sorted(self.sets)

    def add_language(self, language: str, rng: np.random.Generator) -> AdapterSet:
        if language in self.sets:
            raise ValueError(f"language {language!r} already has adapters")
        self.sets[language] = AdapterSet(self.model.config, self.bottleneck, rng)
        return self.sets[language]

    def adapter_set(self, language: str) -> AdapterSet:
        try:
            return self.sets[language]
        except KeyError:
            raise ValueError(f"No adapters for language {language!r}. Registered: {self.languages}") from None

    def select(self, language: str) -> AdapterView:
        return AdapterView(self.model, language, self.adapter_set(language))


def attach_adapters(
    model: UsmModel, config: AdapterConfig, rng: np.random.Generator
) -> Tuple[AdaptedModel, AdapterReport]:
    cfg = model.config
    base = model.num_parameters()
    bottleneck = config.bottleneck_dim or solve_bottleneck(cfg, base, config.target_ratio)
    if bottleneck > cfg.model_dim:
        raise ValueError(f"bottleneck_dim {bottleneck} exceeds model_dim {cfg.model_dim}")

    model.freeze()
    adapted = AdaptedModel(model, bottleneck)
    for lang in config.languages:
        adapted.add_language(lang, rng)

    per_lang = adapter_param_count(cfg, bottleneck)
    report = AdapterReport(
        base_params=base,
        adapter_params=per_lang,
        bottleneck_dim=bottleneck,
        per_language={lang: adapted.sets[lang].num_parameters() for lang in adapted.languages},
    )
    log.info(
        "Attached adapters: bottleneck=%d per-language params=%d base=%d ratio=%.2f%% languages=%s",
        bottleneck, per_lang, base, 100 * report.ratio, adapted.languages,
    )
    return adapted, report


def select_adapter(adapted: AdaptedModel, language: str) -> AdapterView:
    return adapted.select(language)


def adapter_optimizer(view: AdapterView, settings) -> Adam:
    return Adam({view.language: (view.adapters.named_parameters(), settings)})


def adapter_train_step(
    view: AdapterView,
    batch: Sequence,
    pattern: AttentionPattern,
    optimizer: Adam,
) -> Optional[float]:
    """One optimizer step on the bound language's adapters; None when every item was infeasible."""
    optimizer.zero_grad()
    view.model.zero_grad()
    loss, _ = view.asr_loss(batch, pattern)
    if loss is None:
        return None
    value = forward_backward(loss)
    optimizer.step()
    return value


def save_adapters(adapted: AdaptedModel, directory: Union[str, Path]) -> List[Path]:
    out = []
    for lang in adapted.languages:
        path = Path(directory) / lang
        write_array_dir(
            path,
            adapted.sets[lang].state_dict(),
            header={"kind": "adapters", "language": lang, "bottleneck": str(adapted.bottleneck)},
        )
        out.append(path)
    return out


def load_adapters(adapted: AdaptedModel, directory: Union[str, Path], rng: np.random.Generator) -> List[str]:
    loaded = []
    for path in sorted(p for p in Path(directory).iterdir() if p.is_dir() and not p.name.startswith(".")):
        arrays, header = read_array_dir(path)
        lang = header.get("language", path.name)
        if int(header.get("bottleneck", adapted.bottleneck)) != adapted.bottleneck:
            raise ValueError(
                f"{path}: adapter bottleneck {header.get('bottleneck')} differs from model's {adapted.bottleneck}"
            )
        target = adapted.sets.get(lang) or adapted.add_language(lang, rng)
        target.load_state_dict(arrays)
        loaded.append(lang)
    return loaded
