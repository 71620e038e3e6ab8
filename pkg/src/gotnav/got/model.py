"""Goal-token transformer encoder and the goal-conditional baseline.

The goal variant maps the normalized goal pair through an MLP into token 0 of
the sequence, so attention couples scene patches with the goal.  The
conditional variant uses a learned class token instead and appends the raw
goal pair to the encoder output *after* attention.
"""
from __future__ import annotations

import numpy as np

from .. import numcore as nc
from ..numcore import DiffTensor
from .config import GoTConfig

GOAL_VARIANT = "goal"
CONDITIONAL_VARIANT = "conditional"


# ------------------------------------------------------------------ patching

def patchify(frames: np.ndarray, cfg: GoTConfig) -> np.ndarray:
    """(H, W, C) image -> (N, patch_dim) rows, row-major patch order.

    Patch 0 is top-left; flattening within a patch is (row, col, channel).
    Pure rearrangement: ``unpatchify(patchify(x)) == x`` exactly.
    """
    frames = np.asarray(frames)
    expected = (cfg.image_h, cfg.image_w, cfg.channels)
    if frames.shape != expected:
        raise ValueError(f"frames shape {frames.shape} != configured {expected}")
    ph, pw = cfg.patch_h, cfg.patch_w
    x = frames.reshape(cfg.grid_rows, ph, cfg.grid_cols, pw, cfg.channels)
    x = x.transpose(0, 2, 1, 3, 4)  # (Gr, Gc, ph, pw, C)
    return np.ascontiguousarray(x.reshape(cfg.num_patches, cfg.patch_dim))


def unpatchify(patches: np.ndarray, cfg: GoTConfig) -> np.ndarray:
    """Inverse of :func:`patchify`."""
    patches = np.asarray(patches)
    if patches.shape != (cfg.num_patches, cfg.patch_dim):
        raise ValueError(f"patches shape {patches.shape} != ({cfg.num_patches}, {cfg.patch_dim})")
    ph, pw = cfg.patch_h, cfg.patch_w
    x = patches.reshape(cfg.grid_rows, cfg.grid_cols, ph, pw, cfg.channels)
    x = x.transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(x.reshape(cfg.image_h, cfg.image_w, cfg.channels))


# --------------------------------------------------------------------- model

class GoTModel:
    """Parameter container for either encoder variant."""

    def __init__(self, cfg: GoTConfig, variant: str = GOAL_VARIANT,
                 rng: np.random.Generator | None = None, dtype=np.float64,
                 init_scale: float = 0.02):
        if variant not in (GOAL_VARIANT, CONDITIONAL_VARIANT):
            raise ValueError(f"unknown encoder variant {variant!r}")
        self.cfg = cfg
        self.variant = variant
        self.dtype = np.dtype(dtype)
        rng = rng or np.random.default_rng(0)
        d = cfg.embed_dim
        p: dict[str, DiffTensor] = {}

        def w(name, shape):
            p[name] = nc.param(rng.normal(0.0, init_scale, size=shape), dtype=self.dtype)

        def zeros(name, shape):
            p[name] = nc.param(np.zeros(shape), dtype=self.dtype)

        def ones(name, shape):
            p[name] = nc.param(np.ones(shape), dtype=self.dtype)

        w("patch_w", (cfg.patch_dim, d))
        zeros("patch_b", (d,))
        if variant == GOAL_VARIANT:
            w("goal_w1", (2, cfg.goal_hidden))
            zeros("goal_b1", (cfg.goal_hidden,))
            w("goal_w2", (cfg.goal_hidden, d))
            zeros("goal_b2", (d,))
        else:
            w("cls_token", (1, 1, d))
        w("pos_embed", (cfg.tokens, d))
        for i in range(cfg.blocks):
            pre = f"blk{i}_"
            ones(pre + "ln1_g", (d,))
            zeros(pre + "ln1_b", (d,))
            for proj in ("wq", "wk", "wv", "wo"):
                w(pre + proj, (d, d))
            for bias in ("bq", "bk", "bv", "bo"):
                zeros(pre + bias, (d,))
            w(pre + "mlp_w1", (d, cfg.mlp_hidden))
            zeros(pre + "mlp_b1", (cfg.mlp_hidden,))
            w(pre + "mlp_w2", (cfg.mlp_hidden, d))
            zeros(pre + "mlp_b2", (d,))
            ones(pre + "ln2_g", (d,))
            zeros(pre + "ln2_b", (d,))
            w(pre + "fc_w", (d, d))
            zeros(pre + "fc_b", (d,))
        self.params = p

    @property
    def feature_dim(self) -> int:
        """Length of the latent feature this encoder produces."""
        d = self.cfg.embed_dim
        return d if self.variant == GOAL_VARIANT else d + 2

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, v in self.params.items():
            src = values[k]
            if src.shape != v.values.shape:
                raise ValueError(f"shape mismatch for {k}: {src.shape} vs {v.values.shape}")
            v.values = src.astype(self.dtype, copy=True)


# --------------------------------------------------------------- attention

def scaled_dot_attention(q: DiffTensor, k: DiffTensor, v: DiffTensor,
                         d_k: int) -> tuple[DiffTensor, DiffTensor]:
    """softmax(Q K^T / sqrt(d_k)) V on plain matrices; returns (output, weights)."""
    if d_k <= 0:
        raise ValueError("d_k must be positive")
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"Q/K width mismatch: {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"K/V row mismatch: {k.shape} vs {v.shape}")
    kt = nc.transpose(k, tuple(range(k.values.ndim - 2)) + (k.values.ndim - 1, k.values.ndim - 2))
    scores = nc.mul(nc.matmul(q, kt), 1.0 / np.sqrt(float(d_k)))
    weights = nc.softmax(scores, axis=-1)
    return nc.matmul(weights, v), weights


def embed_goal(model: GoTModel, s_goal) -> DiffTensor:
    """Goal pair(s) -> goal token(s), shape (B, 1, D).  Bounds-checked."""
    if model.variant != GOAL_VARIANT:
        raise ValueError("conditional encoder has no goal token")
    g = s_goal if isinstance(s_goal, DiffTensor) else nc.constant(np.asarray(s_goal, dtype=model.dtype))
    vals = np.atleast_2d(g.values)
    if vals.shape[-1] != 2:
        raise ValueError(f"goal state must have 2 components, got shape {g.shape}")
    d, dphi = vals[..., 0], vals[..., 1]
    if np.any(d < 0.0) or np.any(d > 1.0) or np.any(np.abs(dphi) > 1.0):
        raise ValueError("goal state outside normalized bounds: d in [0,1], dphi in [-1,1]")
    if g.values.ndim == 1:
        g = nc.reshape(g, (1, 2))
    p = model.params
    hidden = nc.gelu(nc.affine(g, p["goal_w1"], p["goal_b1"]))
    token = nc.affine(hidden, p["goal_w2"], p["goal_b2"])
    return nc.reshape(token, (token.shape[0], 1, model.cfg.embed_dim))


def assemble_embeddings(model: GoTModel, patch_tokens: DiffTensor,
                        goal_token: DiffTensor) -> DiffTensor:
    """CONCAT(goal token, projected patches) + position embeddings -> z0."""
    n = model.cfg.num_patches
    if patch_tokens.shape[-2] != n:
        raise ValueError(f"expected {n} patch tokens, got {patch_tokens.shape[-2]}")
    z = nc.concat([goal_token, patch_tokens], axis=1)
    if z.shape[-2] != model.params["pos_embed"].shape[0]:
        raise ValueError("token count does not match position embedding rows")
    return nc.add(z, model.params["pos_embed"])


def _project_heads(model: GoTModel, z: DiffTensor, which: str, blk: str) -> DiffTensor:
    p = model.params
    cfg = model.cfg
    b, t = z.shape[0], z.shape[1]
    x = nc.affine(z, p[blk + "w" + which], p[blk + "b" + which])
    x = nc.reshape(x, (b, t, cfg.heads, cfg.head_dim))
    return nc.transpose(x, (0, 2, 1, 3))  # (B, k, T, dh)


def msa(model: GoTModel, block: int, z: DiffTensor,
        capture: list | None = None, attn_transform=None) -> DiffTensor:
    """Multi-head self-attention with output projection.

    ``capture`` receives the exact softmax weights of this block as a
    (heads, T, T) array (batch size 1 only).  ``attn_transform``, if given,
    may rewrite the weights before they hit V (inference only).
    """
    cfg = model.cfg
    blk = f"blk{block}_"
    p = model.params
    b, t = z.shape[0], z.shape[1]
    q = _project_heads(model, z, "q", blk)
    k = _project_heads(model, z, "k", blk)
    v = _project_heads(model, z, "v", blk)
    raw_capture: list | None = None
    if capture is not None:
        if b != 1:
            raise ValueError("attention capture requires batch size 1")
        raw_capture = []
    transform = None
    if attn_transform is not None:
        if b != 1:
            raise ValueError("attention transforms require batch size 1")
        transform = lambda pv: attn_transform(block, pv[0])[None]  # noqa: E731
    out = nc.scaled_attention(q, k, v, 1.0 / np.sqrt(float(cfg.head_dim)),
                              capture=raw_capture, transform=transform)
    if raw_capture is not None:
        capture.append(raw_capture[0][0])
    out = nc.reshape(nc.transpose(out, (0, 2, 1, 3)), (b, t, cfg.embed_dim))
    return nc.affine(out, p[blk + "wo"], p[blk + "bo"])


def encoder_block(model: GoTModel, block: int, z: DiffTensor,
                  capture: list | None = None, attn_transform=None,
                  drop_rng: np.random.Generator | None = None) -> DiffTensor:
    """z' = MSA(LN(z)) + z ; out = FC(LN(MLP(z') + z'))."""
    cfg = model.cfg
    blk = f"blk{block}_"
    p = model.params
    u = nc.layer_norm(z, p[blk + "ln1_g"], p[blk + "ln1_b"])
    a = msa(model, block, u, capture=capture, attn_transform=attn_transform)
    a = _maybe_dropout(a, cfg.dropout, drop_rng)
    zp = nc.add(a, z)
    hidden = nc.gelu(nc.affine(zp, p[blk + "mlp_w1"], p[blk + "mlp_b1"]))
    hidden = _maybe_dropout(hidden, cfg.dropout, drop_rng)
    m = nc.affine(hidden, p[blk + "mlp_w2"], p[blk + "mlp_b2"])
    zr = nc.add(m, zp)
    normed = nc.layer_norm(zr, p[blk + "ln2_g"], p[blk + "ln2_b"])
    return nc.affine(normed, p[blk + "fc_w"], p[blk + "fc_b"])


def _maybe_dropout(x: DiffTensor, rate: float, rng: np.random.Generator | None) -> DiffTensor:
    if rate <= 0.0 or rng is None:
        return x
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return nc.mul(x, nc.constant(mask))


def _pool(model: GoTModel, z: DiffTensor) -> DiffTensor:
    if model.cfg.pool == "mean":
        return nc.mean_(z, axis=1)
    return nc.slice_(z, (slice(None), 0))  # goal/class token row


def forward_tokens(model: GoTModel, patches: DiffTensor, goals,
                   capture: list | None = None, attn_transform=None,
                   drop_rng: np.random.Generator | None = None) -> DiffTensor:
    """Shared trunk: (B, N, patch_dim) patches + goals -> (B, D) latent rows.

    For the goal variant ``goals`` feeds token 0; the conditional variant
    ignores it here (its class token is learned).
    """
    cfg = model.cfg
    p = model.params
    b = patches.shape[0]
    tokens = nc.affine(patches, p["patch_w"], p["patch_b"])
    if model.variant == GOAL_VARIANT:
        token0 = embed_goal(model, goals)
    else:
        token0 = nc.add(p["cls_token"], nc.constant(np.zeros((b, 1, cfg.embed_dim)), dtype=model.dtype))
    z = assemble_embeddings(model, tokens, token0)
    for i in range(cfg.blocks):
        z = encoder_block(model, i, z, capture=capture, attn_transform=attn_transform, drop_rng=drop_rng)
    return _pool(model, z)


def _check_frames(frames: np.ndarray, cfg: GoTConfig) -> None:
    expected = (cfg.image_h, cfg.image_w, cfg.channels)
    if frames.shape != expected:
        raise ValueError(f"frames shape {frames.shape} != configured {expected}")


def encode(model: GoTModel, frames: np.ndarray, s_goal,
           capture_attention: bool = False, attn_transform=None):
    """One observation -> latent feature h (D,) plus raw attention capture.

    Returns ``(h, capture)`` where capture is a list of (heads, T, T) arrays
    per block, or None when capture is disabled.
    """
    if model.variant != GOAL_VARIANT:
        raise ValueError("encode() is the goal-variant entry point; use encode_conditional()")
    _check_frames(np.asarray(frames), model.cfg)
    patches = nc.constant(patchify(frames, model.cfg)[None], dtype=model.dtype)
    capture: list | None = [] if capture_attention else None
    h = forward_tokens(model, patches, s_goal, capture=capture, attn_transform=attn_transform)
    return nc.reshape(h, (model.cfg.embed_dim,)), capture


def encode_conditional(model: GoTModel, frames: np.ndarray, s_goal,
                       capture_attention: bool = False, attn_transform=None):
    """Baseline: class-token ViT over frames only, goal appended afterwards.

    Returns ``(feature, capture)`` with feature length D + 2; the first D
    coordinates never see the goal.
    """
    if model.variant != CONDITIONAL_VARIANT:
        raise ValueError("encode_conditional() requires a conditional-variant model")
    _check_frames(np.asarray(frames), model.cfg)
    patches = nc.constant(patchify(frames, model.cfg)[None], dtype=model.dtype)
    capture: list | None = [] if capture_attention else None
    h = forward_tokens(model, patches, None, capture=capture, attn_transform=attn_transform)
    g = s_goal if isinstance(s_goal, DiffTensor) else nc.constant(np.asarray(s_goal, dtype=model.dtype))
    if g.values.ndim == 1:
        g = nc.reshape(g, (1, 2))
    feat = nc.concat([h, g], axis=1)
    return nc.reshape(feat, (model.feature_dim,)), capture


def encode_features(model: GoTModel, frames: np.ndarray, s_goal,
                    capture_attention: bool = False, attn_transform=None):
    """Variant-dispatching encode; always returns (feature vector, capture)."""
    if model.variant == GOAL_VARIANT:
        return encode(model, frames, s_goal, capture_attention, attn_transform)
    return encode_conditional(model, frames, s_goal, capture_attention, attn_transform)


def encode_batch(model: GoTModel, patches: np.ndarray, goals: np.ndarray,
                 drop_rng: np.random.Generator | None = None) -> DiffTensor:
    """Batched trunk for training: (B, N, P) patches + (B, 2) goals -> (B, F)."""
    pt = nc.constant(np.asarray(patches), dtype=model.dtype)
    if model.variant == GOAL_VARIANT:
        return forward_tokens(model, pt, nc.constant(np.asarray(goals), dtype=model.dtype),
                              drop_rng=drop_rng)
    h = forward_tokens(model, pt, None, drop_rng=drop_rng)
    return nc.concat([h, nc.constant(np.asarray(goals), dtype=model.dtype)], axis=1)


# ----------------------------------------------------------------- persistence

def save_got(model: GoTModel, path: str) -> None:
    meta = model.cfg.to_meta()
    meta["variant"] = model.variant
    meta["kind"] = "got-encoder"
    nc.save_tensors(path, {k: v.values for k, v in model.params.items()}, meta)


def load_got(path: str) -> GoTModel:
    tensors, meta = nc.load_tensors(path)
    if meta.get("kind") != "got-encoder":
        raise nc.ContainerError(f"{path!r} is not an encoder checkpoint")
    cfg = GoTConfig.from_meta(meta)
    dtype = next(iter(tensors.values())).dtype
    model = GoTModel(cfg, variant=meta["variant"], dtype=dtype)
    model.load_values(tensors)
    return model
