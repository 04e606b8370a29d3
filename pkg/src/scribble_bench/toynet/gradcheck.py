"""Finite-difference verification of the training gradients.

Builds a fixed two-round refinement scenario (so every trainable module is
on the loss path: both scribble tracks, fusion with an open gate, memory
attention with and without a bank entry, adapters, decoder), randomizes
the trainable parameters away from their zero-gate init, and compares
autograd against central differences element by element.

Frozen parameters are asserted to carry no gradient at all; they are never
finite-differenced, because a frozen weight still influences the loss - the
contract is that training must not touch it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..raster import ScribbleMap, channel_max
from .config import LossConfig, NetConfig
from .losses import multi_round_loss
from .net import ToyNet, image_to_tensor, mask_to_tensor, scribble_to_tensor


class GradCheckError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParamReport:
    name: str
    size: int
    max_rel_err: float
    max_abs_grad: float


@dataclass(frozen=True)
class GradCheckReport:
    params: list[ParamReport]
    frozen: list[str]  # frozen parameters confirmed gradient-free
    eps: float

    @property
    def max_rel_err(self) -> float:
        return max((p.max_rel_err for p in self.params), default=0.0)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err < tol

    def module_table(self) -> list[tuple[str, float]]:
        """(module, max relative error) rows, worst first within order."""
        mods: dict[str, float] = {}
        for p in self.params:
            mod = p.name.split(".")[0]
            mods[mod] = max(mods.get(mod, 0.0), p.max_rel_err)
        return list(mods.items())

    def format_table(self) -> str:
        lines = [f"{'module':<20} {'max rel err':>12}"]
        for mod, err in self.module_table():
            lines.append(f"{mod:<20} {err:>12.3e}")
        lines.append(f"{'OVERALL':<20} {self.max_rel_err:>12.3e}")
        return "\n".join(lines)


def _scenario_inputs(cfg: NetConfig, seed: int):
    rng = np.random.default_rng(seed)
    side = cfg.input_side
    image = rng.random((side, side, 3))

    def scribble(density):
        pos = rng.random((side, side)) < density
        neg = (rng.random((side, side)) < density) & ~pos
        return ScribbleMap(positive=pos, negative=neg)

    s0 = scribble(0.08)
    corr = scribble(0.05)
    prev = rng.random((side, side)) < 0.3
    return {
        "image": image_to_tensor(image, side),
        "s0": scribble_to_tensor(s0, side),
        "s_acc": scribble_to_tensor(channel_max(s0, corr), side),
        "corr": scribble_to_tensor(corr, side),
        "prev": mask_to_tensor(prev, side),
    }


def _randomize_trainable(net: ToyNet, seed: int) -> None:
    """Move trainable parameters off their zero-gate init so every branch
    carries signal (alpha nonzero, adapter B nonzero)."""
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for name, p in net.named_parameters():
            if not p.requires_grad:
                continue
            scale = 0.5 / np.sqrt(max(p.numel() // max(p.shape[0], 1), 1))
            vals = rng.normal(0.0, scale, size=tuple(p.shape))
            p.copy_(torch.from_numpy(vals))
        net.sgf.alpha.fill_(0.8)


def _pipeline_loss(net: ToyNet, inputs: dict, loss_cfg: LossConfig) -> torch.Tensor:
    # image features come from the frozen encoder: computed once per scenario
    f_img = inputs.get("f_img")
    if f_img is None:
        f_img = net.encode_image(inputs["image"]).detach()
        inputs["f_img"] = f_img
    logits0, mem = net.forward_round(
        f_img, inputs["s0"], inputs["s0"], None, None,
        use_sgf=True, use_memory=True,
    )
    logits1, _ = net.forward_round(
        f_img, inputs["s_acc"], inputs["corr"], inputs["prev"], mem,
        use_sgf=True, use_memory=True,
    )
    target = (inputs["prev"] > 0.5).double()
    return multi_round_loss([logits0, logits1], target, loss_cfg)


def grad_check(
    net: ToyNet | None = None,
    cfg: NetConfig | None = None,
    eps: float = 1e-5,
    seed: int = 99,
    rel_guard: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central differences for every
    trainable parameter; frozen parameters must come back gradient-free.

    Relative error is |a - fd| / max(|a|, |fd|, rel_guard).
    """
    if not 1e-6 <= eps <= 1e-3:
        raise GradCheckError(f"eps {eps} outside [1e-6, 1e-3]")
    if net is None:
        net = ToyNet(cfg or NetConfig())
        _randomize_trainable(net, seed + 1)
    inputs = _scenario_inputs(net.cfg, seed)
    loss_cfg = LossConfig()

    net.zero_grad(set_to_none=True)
    loss = _pipeline_loss(net, inputs, loss_cfg)
    loss.backward()

    frozen: list[str] = []
    analytic: dict[str, np.ndarray] = {}
    for name, p in net.named_parameters():
        if not p.requires_grad:
            if p.grad is not None and float(p.grad.abs().max()) != 0.0:
                raise GradCheckError(f"frozen parameter {name} received gradient")
            frozen.append(name)
            continue
        if p.grad is None:
            raise GradCheckError(f"trainable parameter {name} got no gradient")
        g = p.grad.detach().numpy().copy()
        if not np.isfinite(g).all():
            raise GradCheckError(f"non-finite gradient for {name}")
        analytic[name] = g

    reports: list[ParamReport] = []
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name not in analytic:
                continue
            grad = analytic[name]
            flat = p.reshape(-1)
            fd = np.zeros(flat.shape[0])
            for i in range(flat.shape[0]):
                orig = float(flat[i])
                flat[i] = orig + eps
                lp = float(_pipeline_loss(net, inputs, loss_cfg))
                flat[i] = orig - eps
                lm = float(_pipeline_loss(net, inputs, loss_cfg))
                flat[i] = orig
                fd[i] = (lp - lm) / (2.0 * eps)
            a = grad.reshape(-1)
            rel = np.abs(a - fd) / np.maximum.reduce(
                [np.abs(a), np.abs(fd), np.full_like(fd, rel_guard)]
            )
            reports.append(
                ParamReport(
                    name=name,
                    size=int(flat.shape[0]),
                    max_rel_err=float(rel.max()),
                    max_abs_grad=float(np.abs(a).max()),
                )
            )
    return GradCheckReport(params=reports, frozen=frozen, eps=eps)
