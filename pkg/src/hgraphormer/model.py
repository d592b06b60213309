"""HGraphormer: Transformer layers whose attention is mixed with the
hypergraph Laplacian, ``A = gamma * softmax(QK^T / sqrt(d_k)) + (1 - gamma) * L``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Params, Tensor
from .errors import GammaOutOfRange, InvalidParameters, ShapeMismatch
from .hypergraph import Hypergraph, laplacian


@dataclass(frozen=True)
class ModelConfig:
    gamma: float = 0.3
    num_layers: int = 2
    num_heads: int = 4
    d_h: int = 64
    d_k: int = 32
    d_q: int = 32
    dropout_p: float = 0.5
    use_residual: bool = True
    num_classes: int = 0
    feature_dim: int = 0
    seed: int = 0
    lr: float = 0.01
    weight_decay: float = 0.0005
    epochs: int = 200
    ln_eps: float = 1e-5
    dtype: str = "float64"

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise GammaOutOfRange(f"gamma must lie in [0, 1], got {self.gamma}")
        for name in ("num_layers", "num_heads", "d_h", "d_k", "d_q"):
            if getattr(self, name) < 1:
                raise InvalidParameters(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidParameters(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.epochs < 0 or self.lr < 0 or self.weight_decay < 0:
            raise InvalidParameters("epochs, lr and weight_decay must be non-negative")
        if self.dtype not in ("float64", "float32"):
            raise InvalidParameters(f"dtype must be float64 or float32, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LayerParams:
    W_Q: List[Tensor]
    W_K: List[Tensor]
    W_V: List[Tensor]
    W_Z: Tensor
    ln_scale: Tensor
    ln_shift: Tensor

    @property
    def num_heads(self) -> int:
        return len(self.W_Q)


def init_params(cfg: ModelConfig, seed: Optional[int] = None) -> Params:
    """Glorot-uniform projections, zero biases/shifts, unit LN scales,
    PReLU slope 0.25."""
    if cfg.num_classes < 1 or cfg.feature_dim < 1:
        raise InvalidParameters("num_classes and feature_dim must be set before init")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    dt = cfg.np_dtype
    p = Params()
    p["embed.W"] = ad.glorot_uniform(rng, cfg.feature_dim, cfg.d_h, dt)
    p["embed.b"] = np.zeros((1, cfg.d_h), dtype=dt)
    p["embed.prelu"] = np.full((1, 1), 0.25, dtype=dt)
    for l in range(cfg.num_layers):
        for h in range(cfg.num_heads):
            pre = f"layer{l}.head{h}"
            p[f"{pre}.W_Q"] = ad.glorot_uniform(rng, cfg.d_h, cfg.d_k, dt)
            p[f"{pre}.W_K"] = ad.glorot_uniform(rng, cfg.d_h, cfg.d_k, dt)
            p[f"{pre}.W_V"] = ad.glorot_uniform(rng, cfg.d_h, cfg.d_q, dt)
        p[f"layer{l}.W_Z"] = ad.glorot_uniform(rng, cfg.num_heads * cfg.d_q, cfg.d_h, dt)
        p[f"layer{l}.ln_scale"] = np.ones((1, cfg.d_h), dtype=dt)
        p[f"layer{l}.ln_shift"] = np.zeros((1, cfg.d_h), dtype=dt)
    p["out.W"] = ad.glorot_uniform(rng, cfg.d_h, cfg.num_classes, dt)
    p["out.b"] = np.zeros((1, cfg.num_classes), dtype=dt)
    return p


def layer_params(params: Params, layer: int, num_heads: int) -> LayerParams:
    pre = f"layer{layer}"
    return LayerParams(
        W_Q=[params[f"{pre}.head{h}.W_Q"] for h in range(num_heads)],
        W_K=[params[f"{pre}.head{h}.W_K"] for h in range(num_heads)],
        W_V=[params[f"{pre}.head{h}.W_V"] for h in range(num_heads)],
        W_Z=params[f"{pre}.W_Z"],
        ln_scale=params[f"{pre}.ln_scale"],
        ln_shift=params[f"{pre}.ln_shift"],
    )


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _check_gamma(gamma):
    if not 0.0 <= gamma <= 1.0:
        raise GammaOutOfRange(f"gamma must lie in [0, 1], got {gamma}")


def scaled_scores(Q: Tensor, K: Tensor) -> Tensor:
    if Q.shape != K.shape:
        raise ShapeMismatch(f"query {Q.shape} and key {K.shape} shapes differ")
    return ad.scale(Q @ K.T, 1.0 / np.sqrt(Q.shape[1]))


def attention_matrix(Z: Tensor, W_Q: Tensor, W_K: Tensor) -> Tensor:
    if Z.shape[1] != W_Q.shape[0] or W_Q.shape != W_K.shape:
        raise ShapeMismatch(f"Z {Z.shape}, W_Q {W_Q.shape}, W_K {W_K.shape}")
    return ad.softmax_rows(scaled_scores(Z @ W_Q, Z @ W_K))


def structured_attention(M: Optional[Tensor], L, gamma: float) -> Tensor:
    """``gamma * M + (1 - gamma) * L`` with no row renormalization."""
    _check_gamma(gamma)
    if gamma == 1.0:
        return M
    L = _as_tensor(L, M.dtype if M is not None else None)
    if gamma == 0.0:
        return L
    if M.shape != L.shape:
        raise ShapeMismatch(f"attention {M.shape} vs Laplacian {L.shape}")
    return ad.scale(M, gamma) + Tensor(L.data * (1.0 - gamma))


def laplacian_attention(Q: Optional[Tensor], K: Optional[Tensor], V: Tensor, L, gamma: float) -> Tensor:
    """``(gamma * M + (1 - gamma) * L) @ V`` with ``M`` the softmax attention.

    At ``gamma == 0`` the attention branch is skipped, so ``Q`` and ``K``
    may be ``None``.
    """
    _check_gamma(gamma)
    n = V.shape[0]
    if L.shape != (n, n):
        raise ShapeMismatch(f"V {V.shape} vs L {L.shape}")
    M = None
    if gamma > 0.0:
        if Q is None or K is None or Q.shape[0] != n or K.shape[0] != n:
            raise ShapeMismatch(f"Q, K must have {n} rows")
        M = ad.softmax_rows(scaled_scores(Q, K))
    return structured_attention(M, L, gamma) @ V


def multi_head(Z: Tensor, L, gamma: float, lp: LayerParams, fused: bool = True) -> Tensor:
    """Concatenate per-head Laplacian attention outputs and project by ``W_Z``.

    ``fused`` stacks every head's projections into one matmul and runs
    the batched attention kernel; ``fused=False`` evaluates each head with
    the composed reference ops.
    """
    L = _as_tensor(L, Z.dtype)
    for W in lp.W_Q + lp.W_K + lp.W_V:
        if Z.shape[1] != W.shape[0]:
            raise ShapeMismatch(f"Z {Z.shape} vs projection {W.shape}")
    h = lp.num_heads
    d_k, d_q = lp.W_Q[0].shape[1], lp.W_V[0].shape[1]
    if h * d_q != lp.W_Z.shape[0]:
        raise ShapeMismatch(f"{h} heads of width {d_q} vs W_Z {lp.W_Z.shape}")
    if fused:
        P = Z @ ad.concat_cols(lp.W_Q + lp.W_K + lp.W_V)
        cat = ad.multihead_mixed_attention(P, L.data, gamma, h, d_k, d_q)
    else:
        heads = []
        for W_Q, W_K, W_V in zip(lp.W_Q, lp.W_K, lp.W_V):
            Q = K = None
            if gamma > 0.0:
                Q, K = Z @ W_Q, Z @ W_K
            heads.append(laplacian_attention(Q, K, Z @ W_V, L, gamma))
        cat = heads[0] if h == 1 else ad.concat_cols(heads)
    return cat @ lp.W_Z


def layer_forward(
    Z: Tensor,
    L,
    gamma: float,
    lp: LayerParams,
    training: bool = False,
    *,
    use_residual: bool = True,
    dropout_p: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    ln_eps: float = 1e-5,
    fused: bool = True,
) -> Tensor:
    """``LN(MultiHead(Z)) + Z`` (or without the residual), then dropout."""
    out = ad.layer_norm(multi_head(Z, L, gamma, lp, fused), lp.ln_scale, lp.ln_shift, ln_eps)
    if use_residual:
        if out.shape != Z.shape:
            raise ShapeMismatch(f"residual needs matching shapes, got {out.shape} vs {Z.shape}")
        out = out + Z
    return ad.dropout(out, dropout_p, training, rng)


def model_forward(
    X,
    hg: Union[Hypergraph, np.ndarray, Tensor],
    cfg: ModelConfig,
    params: Params,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    fused: bool = True,
) -> Tensor:
    """Logits ``(N, C)`` for node features ``X``.

    ``hg`` may be a :class:`Hypergraph` or its precomputed Laplacian; pass
    the Laplacian when calling repeatedly.
    """
    dt = cfg.np_dtype
    X = _as_tensor(X, dt)
    L = laplacian(hg, dt) if isinstance(hg, Hypergraph) else hg
    n = L.shape[0]
    if X.shape[0] != n:
        raise ShapeMismatch(f"features have {X.shape[0]} rows, hypergraph has {n} nodes")
    if X.shape[1] != params["embed.W"].shape[0]:
        raise ShapeMismatch(f"features have {X.shape[1]} columns, model expects {params['embed.W'].shape[0]}")
    L = _as_tensor(L, dt)

    Z = ad.prelu(X @ params["embed.W"] + params["embed.b"], params["embed.prelu"])
    Z = ad.dropout(Z, cfg.dropout_p, training, rng)
    for l in range(cfg.num_layers):
        Z = layer_forward(
            Z,
            L,
            cfg.gamma,
            layer_params(params, l, cfg.num_heads),
            training,
            use_residual=cfg.use_residual,
            dropout_p=cfg.dropout_p,
            rng=rng,
            ln_eps=cfg.ln_eps,
            fused=fused,
        )
    return Z @ params["out.W"] + params["out.b"]


def predict_proba(logits) -> np.ndarray:
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict(logits) -> np.ndarray:
    """Class ids by argmax; ties resolve to the lowest index."""
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return np.argmax(z, axis=1)


class HGraphormer:
    """Bundles a config, its parameters and a fixed hypergraph Laplacian."""

    def __init__(self, cfg: ModelConfig, hg: Union[Hypergraph, np.ndarray], params: Optional[Params] = None):
        self.cfg = cfg
        self.L = laplacian(hg, cfg.np_dtype) if isinstance(hg, Hypergraph) else np.asarray(hg, dtype=cfg.np_dtype)
        self.params = params if params is not None else init_params(cfg)

    def __call__(self, X, training=False, rng=None) -> Tensor:
        return model_forward(X, self.L, self.cfg, self.params, training, rng)

    def predict(self, X) -> np.ndarray:
        return predict(self(X))
