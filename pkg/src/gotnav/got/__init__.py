"""Goal-token transformer encoder and conditional ViT baseline."""
from .config import GoTConfig
from .model import (
    CONDITIONAL_VARIANT,
    GOAL_VARIANT,
    GoTModel,
    assemble_embeddings,
    embed_goal,
    encode,
    encode_batch,
    encode_conditional,
    encode_features,
    encoder_block,
    forward_tokens,
    load_got,
    msa,
    patchify,
    save_got,
    scaled_dot_attention,
    unpatchify,
)

__all__ = [
    "CONDITIONAL_VARIANT",
    "GOAL_VARIANT",
    "GoTConfig",
    "GoTModel",
    "assemble_embeddings",
    "embed_goal",
    "encode",
    "encode_batch",
    "encode_conditional",
    "encode_features",
    "encoder_block",
    "forward_tokens",
    "load_got",
    "msa",
    "patchify",
    "save_got",
    "scaled_dot_attention",
    "unpatchify",
]
