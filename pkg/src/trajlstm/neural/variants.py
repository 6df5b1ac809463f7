"""The reference architecture and its ablation variants."""
from __future__ import annotations

from ..neighborhood import FeatureLayout
from .model import ModelConfig

VARIANTS = ("reference", "type", "no-ff", "no-bypass", "bypass-before",
            "linear-activation", "two-lstm", "three-dense")


def variant_config(name: str, output_size: int = 20, lstm_size: int = 256,
                   dense_sizes: tuple[int, int] = (256, 128), third_dense: int = 64) -> ModelConfig:
    """Model configuration for a named variant.

    The sizes default to the reference design; smaller values give the
    same wiring at desk scale.
    """
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    layout = FeatureLayout(use_type=name == "type", use_ff=name != "no-ff")
    d1, d2 = dense_sizes
    dense = [(d1, "tanh"), (d2, "linear" if name == "linear-activation" else "tanh")]
    if name == "three-dense":
        dense.append((third_dense, "tanh"))
    bypass = {"no-bypass": "none", "bypass-before": "before_dense"}.get(name, "to_output")
    return ModelConfig(
        input_size=layout.size,
        lstm_layers=(lstm_size, lstm_size) if name == "two-lstm" else (lstm_size,),
        dense_layers=tuple(dense),
        bypass_mode=bypass,
        bypass_width=4,
        output_size=output_size,
        use_type=layout.use_type,
        use_ff=layout.use_ff,
    )


def layout_of(config: ModelConfig) -> FeatureLayout:
    return FeatureLayout(use_type=config.use_type, use_ff=config.use_ff)
