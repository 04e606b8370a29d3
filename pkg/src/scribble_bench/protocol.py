"""Automated multi-round interaction protocol and its reporting.

For each (sample, target class) pair: an initial prompt is synthesized from
the ground truth, the backend predicts, and while IoU stays below the
stopping threshold tau corrective prompts are generated on the error
regions, for at most T rounds. Early-stopped targets carry their metrics
forward so per-round tables stay rectangular.

Prompts are either scribbles (one of the stroke styles or the adaptive
picker) or clicks: one per error-region component, or up to k per channel
with component centroids first and deepest-interior pixels of the largest
components filling the remaining budget.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import maskio
from .raster import (
    Mask,
    RasterError,
    ScribbleMap,
    as_mask,
    centroid_in_region,
    connected_components,
)
from .scribbles import (
    GenParams,
    ScribbleStyle,
    TargetTooSmallError,
    corrective_scribbles,
    generate_scribble,
    interior_depth,
)
from .seeding import derive_rng
from .segmenters import (
    GeodesicParams,
    OracleParams,
    SegmenterSession,
    make_session,
    points_to_scribble,
)

DICE_THRESHOLDS = (0.75, 0.85, 0.90)


# ---- metrics ----


def iou(pred: Mask, gt: Mask) -> float:
    """Intersection over union; two empty masks count as a perfect 1.0."""
    pred = as_mask(pred)
    gt = as_mask(gt)
    if pred.shape != gt.shape:
        raise RasterError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    union = int((pred | gt).sum())
    if union == 0:
        return 1.0
    return int((pred & gt).sum()) / union


def dice(pred: Mask, gt: Mask) -> float:
    """Dice coefficient; empty/empty is 1.0 and dice = 2*iou/(1+iou)."""
    pred = as_mask(pred)
    gt = as_mask(gt)
    if pred.shape != gt.shape:
        raise RasterError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2 * int((pred & gt).sum()) / total


# ---- dataset manifest ----


@dataclass(frozen=True)
class TargetRef:
    class_name: str
    mask_path: Path


@dataclass(frozen=True)
class ManifestSample:
    sample_id: str
    image_path: Path
    targets: tuple[TargetRef, ...]


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    samples: tuple[ManifestSample, ...]

    @property
    def classes(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.samples:
            for t in s.targets:
                seen.setdefault(t.class_name, None)
        return list(seen)


def load_manifest(path: str | Path, validate: bool = True) -> DatasetManifest:
    path = Path(path)
    data = json.loads(path.read_text())
    root = path.parent
    samples = []
    ids = set()
    for entry in data["samples"]:
        sid = entry["id"]
        if sid in ids:
            raise ValueError(f"duplicate sample id {sid!r}")
        ids.add(sid)
        image_path = root / entry["image"]
        targets = tuple(
            TargetRef(class_name=t["class"], mask_path=root / t["mask"])
            for t in entry["targets"]
        )
        samples.append(ManifestSample(sample_id=sid, image_path=image_path,
                                      targets=targets))
    manifest = DatasetManifest(name=data.get("name", path.stem),
                               samples=tuple(samples))
    if validate:
        for s in manifest.samples:
            img = maskio.load_image_png(s.image_path)
            for t in s.targets:
                m = maskio.load_mask_png(t.mask_path)
                if m.shape != img.shape[:2]:
                    raise ValueError(
                        f"target {t.class_name!r} of sample {s.sample_id!r} is "
                        f"{m.shape}, image is {img.shape[:2]}")
    return manifest


# ---- protocol configuration ----

PROMPT_MODES = ("scribble", "1pt_cc", "kpt_ch")


@dataclass(frozen=True)
class ProtocolConfig:
    rounds: int = 5
    tau: float = 0.90
    prompt_mode: str = "scribble"
    style: ScribbleStyle = ScribbleStyle.ADAPTIVE
    points_per_channel: int = 10
    seed: int = 0
    backend: str = "geodesic"
    gen: GenParams = field(default_factory=GenParams)
    geodesic: GeodesicParams = field(default_factory=GeodesicParams)
    oracle: OracleParams = field(default_factory=OracleParams)

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.prompt_mode not in PROMPT_MODES:
            raise ValueError(f"prompt_mode must be one of {PROMPT_MODES}")
        if self.points_per_channel < 1:
            raise ValueError("points_per_channel must be >= 1")

    def label(self) -> str:
        if self.prompt_mode == "scribble":
            return f"{self.backend}/scribble-{self.style.value}"
        if self.prompt_mode == "1pt_cc":
            return f"{self.backend}/1pt-cc"
        return f"{self.backend}/{self.points_per_channel}pt-ch"

    def echo(self) -> dict:
        d = asdict(self)
        d["style"] = self.style.value
        d["oracle"]["schedule"] = list(self.oracle.schedule)
        d["label"] = self.label()
        return d


@dataclass
class RoundMetrics:
    sample_id: str
    class_name: str
    ious: list[float] = field(default_factory=list)
    dices: list[float] = field(default_factory=list)
    prompt_pixels: list[int] = field(default_factory=list)
    stop_round: int | None = None
    skipped: bool = False

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "class": self.class_name,
            "ious": self.ious,
            "dices": self.dices,
            "prompt_pixels": self.prompt_pixels,
            "stop_round": self.stop_round,
            "skipped": self.skipped,
        }


# ---- prompt builders ----


def _click_components(error_region: Mask) -> list[Mask]:
    comps = connected_components(error_region)
    regions = [region for _, region in comps.regions()]
    regions.sort(key=lambda r: -int(r.sum()))
    return regions


def _clicks_one_per_component(error_region: Mask, positive: bool):
    clicks = []
    for region in _click_components(error_region):
        x, y = centroid_in_region(region)
        clicks.append((x, y, positive))
    return clicks


def _clicks_k_per_channel(error_region: Mask, positive: bool, k: int):
    """Component centroids by area, then deepest-interior pixels of the
    largest components round-robin until the budget is spent."""
    regions = _click_components(error_region)
    clicks = []
    taken: set[tuple[int, int]] = set()
    for region in regions[:k]:
        x, y = centroid_in_region(region)
        clicks.append((x, y, positive))
        taken.add((x, y))
    budget = k - len(clicks)
    if budget <= 0:
        return clicks
    ranked_per_region = []
    for region in regions:
        depth = np.where(region, interior_depth(region), -np.inf)
        order = np.argsort(-depth.ravel(), kind="stable")
        n = int(region.sum())
        ys, xs = np.unravel_index(order[:n], region.shape)
        ranked_per_region.append([(int(x), int(y)) for x, y in zip(xs, ys)])
    cursor = [0] * len(ranked_per_region)
    while budget > 0:
        progressed = False
        for i, ranked in enumerate(ranked_per_region):
            while cursor[i] < len(ranked) and ranked[cursor[i]] in taken:
                cursor[i] += 1
            if cursor[i] >= len(ranked):
                continue
            p = ranked[cursor[i]]
            cursor[i] += 1
            taken.add(p)
            clicks.append((p[0], p[1], positive))
            progressed = True
            budget -= 1
            if budget == 0:
                break
        if not progressed:
            break
    return clicks


def _point_prompt(prev_mask: Mask | None, gt: Mask, cfg: ProtocolConfig) -> ScribbleMap:
    h, w = gt.shape
    if prev_mask is None:  # round 0: positive clicks on gt components
        fn, fp = gt, np.zeros_like(gt)
    else:
        fn = gt & ~prev_mask
        fp = prev_mask & ~gt
    clicks = []
    if cfg.prompt_mode == "1pt_cc":
        if fn.any():
            clicks += _clicks_one_per_component(fn, True)
        if fp.any():
            clicks += _clicks_one_per_component(fp, False)
    else:
        if fn.any():
            clicks += _clicks_k_per_channel(fn, True, cfg.points_per_channel)
        if fp.any():
            clicks += _clicks_k_per_channel(fp, False, cfg.points_per_channel)
    return points_to_scribble(clicks, (h, w))


# ---- simulation ----


def _skipped(sample_id: str, class_name: str) -> RoundMetrics:
    return RoundMetrics(sample_id=sample_id, class_name=class_name, skipped=True)


def simulate_session(
    image: np.ndarray,
    gt: Mask,
    sample_id: str,
    class_name: str,
    cfg: ProtocolConfig,
    session: SegmenterSession,
) -> RoundMetrics:
    """Drive one target through the fixed-round protocol."""
    gt = as_mask(gt)
    rec = RoundMetrics(sample_id=sample_id, class_name=class_name)
    if int(gt.sum()) < cfg.gen.min_component_area:
        return _skipped(sample_id, class_name)

    mask: Mask | None = None
    for r in range(cfg.rounds):
        if rec.stop_round is not None:
            rec.ious.append(rec.ious[-1])
            rec.dices.append(rec.dices[-1])
            rec.prompt_pixels.append(0)
            continue
        if cfg.prompt_mode == "scribble":
            if r == 0:
                try:
                    prompt = generate_scribble(
                        gt, cfg.style, cfg.gen,
                        derive_rng(cfg.seed, sample_id, class_name, 0),
                    )
                except TargetTooSmallError:
                    return _skipped(sample_id, class_name)
            else:
                prompt = corrective_scribbles(
                    mask, gt, cfg.gen,
                    derive_rng(cfg.seed, sample_id, class_name, r),
                )
        else:
            prompt = _point_prompt(None if r == 0 else mask, gt, cfg)
        mask = session.predict(prompt)
        rec.ious.append(iou(mask, gt))
        rec.dices.append(dice(mask, gt))
        rec.prompt_pixels.append(
            int(prompt.positive.sum()) + int(prompt.negative.sum())
        )
        if rec.ious[-1] >= cfg.tau and rec.stop_round is None:
            rec.stop_round = r
    return rec


# ---- whole-dataset evaluation ----


@dataclass(frozen=True)
class EvalTask:
    sample_id: str
    class_name: str
    image: np.ndarray | None = None
    mask: Mask | None = None
    image_path: str | None = None
    mask_path: str | None = None

    def load(self) -> tuple[np.ndarray, Mask]:
        image = self.image if self.image is not None else maskio.load_image_png(self.image_path)
        mask = self.mask if self.mask is not None else maskio.load_mask_png(self.mask_path)
        return image, mask


def tasks_from_manifest(manifest: DatasetManifest) -> list[EvalTask]:
    return [
        EvalTask(
            sample_id=s.sample_id,
            class_name=t.class_name,
            image_path=str(s.image_path),
            mask_path=str(t.mask_path),
        )
        for s in manifest.samples
        for t in s.targets
    ]


_worker_state: dict = {}


def _init_worker(cfg: ProtocolConfig, net_manifest: dict | None) -> None:
    _worker_state["cfg"] = cfg
    if net_manifest is not None:
        from .toynet import manifest_to_params

        _worker_state["net"] = manifest_to_params(net_manifest)
    else:
        _worker_state["net"] = None


def _run_task(task: EvalTask) -> RoundMetrics:
    cfg: ProtocolConfig = _worker_state["cfg"]
    net = _worker_state["net"]
    image, gt = task.load()
    session = make_session(
        cfg.backend,
        image,
        gt=gt,
        geodesic=cfg.geodesic,
        oracle=replace(
            cfg.oracle,
            seed=int(derive_rng(cfg.seed, task.sample_id, task.class_name,
                                "oracle").integers(2**31)),
        ),
        net=net,
    )
    return simulate_session(image, gt, task.sample_id, task.class_name, cfg, session)


def run_evaluation(
    tasks: list[EvalTask],
    cfg: ProtocolConfig,
    workers: int = 1,
    net_manifest: dict | None = None,
) -> list[RoundMetrics]:
    """Evaluate every task; results are ordered like the input and
    byte-identical for any worker count (per-task derived seeds)."""
    if not tasks:
        raise ValueError("no evaluation tasks")
    if workers <= 1:
        _init_worker(cfg, net_manifest)
        return [_run_task(t) for t in tasks]
    ctx = get_context("spawn")
    with ProcessPoolExecutor(
        max_workers=workers,
        mp_context=ctx,
        initializer=_init_worker,
        initargs=(cfg, net_manifest),
    ) as pool:
        return list(pool.map(_run_task, tasks, chunksize=1))


# ---- aggregation and convergence ----


def aggregate(results: list[RoundMetrics]) -> list[dict]:
    """Per-round sample-average (mIoU/mDice) and class-average (cIoU/cDice)
    metrics; skipped targets are excluded."""
    valid = [r for r in results if not r.skipped]
    if not valid:
        raise ValueError("no valid results to aggregate (all skipped)")
    rounds = len(valid[0].ious)
    classes: dict[str, list[RoundMetrics]] = {}
    for r in valid:
        classes.setdefault(r.class_name, []).append(r)
    out = []
    for t in range(rounds):
        miou = float(np.mean([r.ious[t] for r in valid]))
        mdice = float(np.mean([r.dices[t] for r in valid]))
        ciou = float(np.mean(
            [np.mean([r.ious[t] for r in rs]) for rs in classes.values()]
        ))
        cdice = float(np.mean(
            [np.mean([r.dices[t] for r in rs]) for rs in classes.values()]
        ))
        out.append({"round": t, "miou": miou, "mdice": mdice,
                    "ciou": ciou, "cdice": cdice})
    return out


@dataclass(frozen=True)
class ThresholdStats:
    threshold: float
    success_pct: float
    mean_rounds: float | None  # over successful targets only
    cumulative_pct: list[float]


@dataclass(frozen=True)
class ConvergenceReport:
    budget_rounds: int
    per_threshold: list[ThresholdStats]

    def to_json(self) -> dict:
        return {
            "budget_rounds": self.budget_rounds,
            "thresholds": [t.threshold for t in self.per_threshold],
            "per_threshold": [asdict(t) for t in self.per_threshold],
        }


def convergence(
    results: list[RoundMetrics],
    thresholds: tuple[float, ...] = DICE_THRESHOLDS,
    budget_rounds: int | None = None,
) -> ConvergenceReport:
    """Fraction of targets reaching each dice threshold within the round
    budget, mean rounds among the successful, and the cumulative curve."""
    if not thresholds:
        raise ValueError("need at least one threshold")
    valid = [r for r in results if not r.skipped]
    if not valid:
        raise ValueError("no valid results")
    total_rounds = len(valid[0].dices)
    budget = total_rounds - 1 if budget_rounds is None else budget_rounds
    budget = min(budget, total_rounds - 1)
    stats = []
    for th in thresholds:
        first_hits = []
        for r in valid:
            hit = next((t for t, d in enumerate(r.dices) if d >= th), None)
            first_hits.append(hit)
        cumulative = []
        for t in range(budget + 1):
            n = sum(1 for h in first_hits if h is not None and h <= t)
            cumulative.append(100.0 * n / len(valid))
        success = [h for h in first_hits if h is not None and h <= budget]
        stats.append(
            ThresholdStats(
                threshold=th,
                success_pct=cumulative[-1],
                mean_rounds=float(np.mean(success)) if success else None,
                cumulative_pct=cumulative,
            )
        )
    return ConvergenceReport(budget_rounds=budget, per_threshold=stats)


# ---- report export ----


def build_report(
    cfg: ProtocolConfig,
    results: list[RoundMetrics],
    thresholds: tuple[float, ...] = DICE_THRESHOLDS,
) -> dict:
    valid = [r for r in results if not r.skipped]
    conv = convergence(results, thresholds)
    return {
        "config": cfg.echo(),
        "n_targets": len(results),
        "n_skipped": len(results) - len(valid),
        "per_round": aggregate(results),
        "convergence": conv.to_json(),
        "per_target": [r.to_json() for r in results],
    }


def export_report(report: dict, path: str | Path, fmt: str = "json") -> Path:
    """JSON keeps full precision; CSV is the long format
    method,round,metric,value at two decimals."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report, indent=2))
    elif fmt == "csv":
        label = report["config"]["label"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "round", "metric", "value"])
            for row in report["per_round"]:
                for metric in ("miou", "mdice", "ciou", "cdice"):
                    writer.writerow(
                        [label, row["round"], metric, f"{row[metric] * 100:.2f}"]
                    )
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def report_plot_series(report: dict) -> list[dict]:
    """Flat data series for external plotting: refinement curves plus
    cumulative success curves."""
    label = report["config"]["label"]
    rows = []
    for row in report["per_round"]:
        for metric in ("miou", "mdice", "ciou", "cdice"):
            rows.append({"series": f"{label}/{metric}", "x": row["round"],
                         "y": row[metric]})
    for th in report["convergence"]["per_threshold"]:
        for t, pct in enumerate(th["cumulative_pct"]):
            rows.append({
                "series": f"{label}/success@{th['threshold']:.2f}",
                "x": t,
                "y": pct,
            })
    return rows
