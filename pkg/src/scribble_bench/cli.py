"""Operator command line: scribble synthesis, synthetic data, evaluation,
point-density sweeps, gradient checks, toy training, report conversion and
the annotation service.

Exit codes: 0 success, 1 usage error, 2 runtime failure. A JSON config file
(``--config``) supplies defaults that explicit flags override; the root
seed falls back to the SCRIBBLE_BENCH_SEED environment variable.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import maskio
from .protocol import (
    DICE_THRESHOLDS,
    ProtocolConfig,
    build_report,
    export_report,
    load_manifest,
    report_plot_series,
    run_evaluation,
    tasks_from_manifest,
)
from .scribbles import GenParams, ScribbleStyle, generate_scribble
from .seeding import derive_rng
from .segmenters import SEGMENTER_KINDS, GeodesicParams, OracleParams
from .synth import generate_samples, write_manifest

log = logging.getLogger("scribble_bench")

_STYLES = [s.value for s in ScribbleStyle if s is not ScribbleStyle.LINE]
_PROMPTS = {"scribble": "scribble", "1pt-cc": "1pt_cc", "kpt-ch": "kpt_ch"}


def _apply_config_defaults(ctx: click.Context) -> None:
    """Fill parameters from the --config JSON wherever the user did not
    pass an explicit flag."""
    cfg_path = ctx.obj.get("config_path") if ctx.obj else None
    if not cfg_path:
        return
    data = json.loads(Path(cfg_path).read_text())
    for name in ctx.params:
        key = name.replace("_", "-")
        if name in data or key in data:
            src = ctx.get_parameter_source(name)
            if src is not None and src.name == "DEFAULT":
                ctx.params[name] = data.get(name, data.get(key))


def _gen_params(params: dict, seed: int) -> GenParams:
    return GenParams(
        stroke_width=params["stroke_width"],
        contour_inward_offset=params["contour_inward_offset"],
        wave_amplitude=params["wave_amplitude"],
        wave_period=params["wave_period"],
        perturb_sigma=params["perturb_sigma"],
        min_component_area=params["min_component_area"],
        seed=seed,
    )


def gen_options(fn):
    opts = [
        click.option("--stroke-width", type=int, default=3, show_default=True),
        click.option("--contour-inward-offset", type=float, default=0.25,
                     show_default=True),
        click.option("--wave-amplitude", type=float, default=3.0, show_default=True),
        click.option("--wave-period", type=float, default=24.0, show_default=True),
        click.option("--perturb-sigma", type=float, default=1.5, show_default=True),
        click.option("--min-component-area", type=int, default=25, show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--seed", type=int, default=0, show_default=True,
              envvar="SCRIBBLE_BENCH_SEED",
              help="Root seed (env fallback SCRIBBLE_BENCH_SEED).")
@click.option("--out", type=click.Path(path_type=Path), default=Path("."),
              show_default=True, help="Output directory.")
@click.option("--log-level", default="warning", show_default=True,
              type=click.Choice(["debug", "info", "warning", "error"]))
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="JSON file with defaults; explicit flags win.")
@click.pass_context
def cli(ctx, seed, out, log_level, config_path):
    """Scribble-driven interactive segmentation workbench."""
    logging.basicConfig(level=getattr(logging, log_level.upper()))
    ctx.obj = {"seed": seed, "out": out, "config_path": config_path}


@cli.command()
@click.option("--mask", "mask_path", type=click.Path(exists=True), required=True,
              help="Ground-truth mask PNG.")
@click.option("--style", type=click.Choice(_STYLES), default="adaptive",
              show_default=True)
@click.option("--format", "fmt", type=click.Choice(["png", "json"]), default="png",
              show_default=True)
@gen_options
@click.pass_context
def scribble(ctx, mask_path, style, fmt, **gen):
    """Synthesize a scribble map from a mask."""
    _apply_config_defaults(ctx)
    gen = {k: ctx.params[k] for k in gen}
    seed = ctx.obj["seed"]
    out: Path = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    gt = maskio.load_mask_png(mask_path)
    params = _gen_params(gen, seed)
    rng = derive_rng(seed, "cli-scribble", Path(mask_path).stem)
    smap = generate_scribble(gt, ScribbleStyle(style), params, rng)
    base = out / (Path(mask_path).stem + "_scribble")
    if fmt == "png":
        pos, neg = maskio.save_scribble_pngs(smap, base)
        click.echo(f"wrote {pos} and {neg}")
    else:
        path = base.with_suffix(".json")
        maskio.save_scribble_json(smap, path)
        click.echo(f"wrote {path}")


@cli.command("synth-data")
@click.option("--n", type=int, default=50, show_default=True)
@click.option("--side", type=int, default=96, show_default=True)
@click.option("--name", default="synthetic", show_default=True)
@click.pass_context
def synth_data(ctx, n, side, name):
    """Generate a synthetic dataset (PNGs + manifest.json)."""
    _apply_config_defaults(ctx)
    samples = generate_samples(ctx.params["n"], side=ctx.params["side"],
                               seed=ctx.obj["seed"])
    path = write_manifest(samples, ctx.obj["out"], name=ctx.params["name"])
    click.echo(f"wrote {path} ({len(samples)} samples)")


def eval_options(fn):
    opts = [
        click.option("--manifest", "manifest_path", type=click.Path(exists=True),
                     required=True),
        click.option("--backend", type=click.Choice(SEGMENTER_KINDS),
                     default="geodesic", show_default=True),
        click.option("--rounds", type=int, default=5, show_default=True),
        click.option("--tau", type=float, default=0.90, show_default=True),
        click.option("--prompt-mode", type=click.Choice(list(_PROMPTS)),
                     default="scribble", show_default=True),
        click.option("--style", type=click.Choice(_STYLES), default="adaptive",
                     show_default=True),
        click.option("--points-k", type=int, default=10, show_default=True,
                     help="Clicks per channel in kpt-ch mode."),
        click.option("--workers", type=int, default=1, show_default=True),
        click.option("--lambda", "edge_weight", type=float, default=20.0,
                     show_default=True, help="Geodesic intensity-edge weight."),
        click.option("--connectivity", type=click.Choice(["4", "8"]), default="8",
                     show_default=True),
        click.option("--oracle-schedule", default="0.6,0.85,1.0", show_default=True,
                     help="Comma-separated fidelity ramp for the oracle backend."),
        click.option("--params", "params_path", type=click.Path(exists=True),
                     default=None, help="Toy net parameter manifest (toynet backend)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _protocol_config(ctx, p: dict, points_k: int) -> ProtocolConfig:
    return ProtocolConfig(
        rounds=p["rounds"],
        tau=p["tau"],
        prompt_mode=_PROMPTS[p["prompt_mode"]],
        style=ScribbleStyle(p["style"]),
        points_per_channel=points_k,
        seed=ctx.obj["seed"],
        backend=p["backend"],
        gen=_gen_params(p, ctx.obj["seed"]),
        geodesic=GeodesicParams(edge_weight=p["edge_weight"],
                                connectivity=int(p["connectivity"])),
        oracle=OracleParams(
            schedule=tuple(float(x) for x in p["oracle_schedule"].split(",")),
            seed=ctx.obj["seed"],
        ),
    )


def _net_manifest(params_path, backend) -> dict | None:
    if backend != "toynet":
        return None
    if params_path is None:
        raise click.UsageError("--params is required with --backend toynet")
    return json.loads(Path(params_path).read_text())


@cli.command("eval")
@eval_options
@gen_options
@click.option("--report", "report_name", default="report.json", show_default=True)
@click.option("--csv", "csv_name", default=None,
              help="Also write the long-format CSV.")
@click.pass_context
def eval_cmd(ctx, manifest_path, points_k, params_path, report_name, csv_name,
             **rest):
    """Run the automated multi-round evaluation protocol."""
    _apply_config_defaults(ctx)
    p = ctx.params
    cfg = _protocol_config(ctx, p, points_k)
    manifest = load_manifest(p["manifest_path"])
    tasks = tasks_from_manifest(manifest)
    results = run_evaluation(
        tasks, cfg, workers=p["workers"],
        net_manifest=_net_manifest(p["params_path"], cfg.backend),
    )
    report = build_report(cfg, results, DICE_THRESHOLDS)
    out: Path = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    path = export_report(report, out / p["report_name"], "json")
    click.echo(f"wrote {path}")
    if p["csv_name"]:
        cpath = export_report(report, out / p["csv_name"], "csv")
        click.echo(f"wrote {cpath}")
    for row in report["per_round"]:
        click.echo(
            f"R{row['round']}: mIoU {row['miou'] * 100:.2f} "
            f"mDice {row['mdice'] * 100:.2f} cIoU {row['ciou'] * 100:.2f} "
            f"cDice {row['cdice'] * 100:.2f}"
        )


@cli.command("points-sweep")
@eval_options
@gen_options
@click.option("--densities", default="1,10,30,50", show_default=True,
              help="Comma-separated clicks-per-channel grid.")
@click.pass_context
def points_sweep(ctx, manifest_path, points_k, params_path, densities, **rest):
    """Evaluate the point protocol across a click-density grid, one report
    per density."""
    _apply_config_defaults(ctx)
    p = ctx.params
    manifest = load_manifest(p["manifest_path"])
    tasks = tasks_from_manifest(manifest)
    out: Path = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    net_manifest = _net_manifest(p["params_path"], p["backend"])
    for k in (int(x) for x in p["densities"].split(",")):
        cfg = _protocol_config(ctx, {**p, "prompt_mode": "kpt-ch"}, k)
        results = run_evaluation(tasks, cfg, workers=p["workers"],
                                 net_manifest=net_manifest)
        report = build_report(cfg, results, DICE_THRESHOLDS)
        path = export_report(report, out / f"points_k{k}.json", "json")
        final = report["per_round"][-1]
        click.echo(
            f"k={k}: wrote {path} "
            f"(final mIoU {final['miou'] * 100:.2f}, mDice {final['mdice'] * 100:.2f})"
        )


@cli.command()
@click.option("--input-side", type=int, default=64, show_default=True)
@click.option("--embed-dim", type=int, default=16, show_default=True)
@click.option("--attn-heads", type=int, default=2, show_default=True)
@click.option("--lora-rank", type=int, default=4, show_default=True)
@click.option("--groupnorm-groups", type=int, default=4, show_default=True)
@click.option("--eps", type=float, default=1e-5, show_default=True)
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@click.pass_context
def gradcheck(ctx, input_side, embed_dim, attn_heads, lora_rank,
              groupnorm_groups, eps, tolerance):
    """Verify analytic gradients against central finite differences."""
    _apply_config_defaults(ctx)
    from .toynet import NetConfig
    from .toynet.gradcheck import grad_check

    p = ctx.params
    cfg = NetConfig(input_side=p["input_side"], embed_dim=p["embed_dim"],
                    attn_heads=p["attn_heads"], lora_rank=p["lora_rank"],
                    groupnorm_groups=p["groupnorm_groups"],
                    seed=ctx.obj["seed"] + 1)
    report = grad_check(cfg=cfg, eps=p["eps"], seed=ctx.obj["seed"])
    click.echo(report.format_table())
    click.echo(f"frozen parameters with zero gradient: {len(report.frozen)}")
    if not report.passed(p["tolerance"]):
        raise click.ClickException(
            f"max relative error {report.max_rel_err:.3e} "
            f"exceeds tolerance {p['tolerance']:.1e}"
        )
    click.echo(f"OK (max relative error {report.max_rel_err:.3e})")


@cli.command()
@click.option("--stage", type=click.Choice(["1", "2"]), required=True)
@click.option("--steps", type=int, default=200, show_default=True)
@click.option("--n-samples", type=int, default=20, show_default=True)
@click.option("--side", type=int, default=64, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--weight-decay", type=float, default=0.01, show_default=True)
@click.option("--rounds", type=int, default=3, show_default=True)
@click.option("--init", "init_path", type=click.Path(exists=True), default=None,
              help="Parameter manifest to start from (e.g. stage-1 output).")
@click.option("--params-out", default="params.json", show_default=True)
@click.pass_context
def train(ctx, stage, steps, n_samples, side, lr, weight_decay, rounds,
          init_path, params_out):
    """Train the toy pipeline on synthetic shapes (stage 1 or 2)."""
    _apply_config_defaults(ctx)
    from .toynet import manifest_to_params, save_params
    from .toynet.train import TrainConfig, train_toy

    p = ctx.params
    samples = generate_samples(p["n_samples"], side=p["side"], seed=ctx.obj["seed"])
    net = None
    if p["init_path"]:
        net = manifest_to_params(json.loads(Path(p["init_path"]).read_text()))
    cfg = TrainConfig(steps=p["steps"], lr=p["lr"],
                      weight_decay=p["weight_decay"], rounds=p["rounds"],
                      seed=ctx.obj["seed"])
    result = train_toy(int(p["stage"]), samples, cfg, net=net)
    out: Path = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    path = out / p["params_out"]
    save_params(result.net, path)
    click.echo(
        f"stage {p['stage']}: loss {result.initial_loss:.4f} -> "
        f"{result.final_loss:.4f} over {p['steps']} steps; wrote {path}"
    )


@cli.command()
@click.option("--in", "report_path", type=click.Path(exists=True), required=True,
              help="Report JSON produced by eval.")
@click.option("--csv", "csv_name", default="report.csv", show_default=True)
@click.option("--plot-data", "plot_name", default=None,
              help="Also write flat series data for plotting.")
@click.pass_context
def report(ctx, report_path, csv_name, plot_name):
    """Convert a report JSON to CSV / plot-data series."""
    _apply_config_defaults(ctx)
    data = json.loads(Path(report_path).read_text())
    out: Path = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    path = export_report(data, out / ctx.params["csv_name"], "csv")
    click.echo(f"wrote {path}")
    if ctx.params["plot_name"]:
        import csv as csv_mod

        ppath = out / ctx.params["plot_name"]
        with open(ppath, "w", newline="") as fh:
            writer = csv_mod.DictWriter(fh, fieldnames=["series", "x", "y"])
            writer.writeheader()
            writer.writerows(report_plot_series(data))
        click.echo(f"wrote {ppath}")


@cli.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              required=True)
@click.option("--backend", type=click.Choice(SEGMENTER_KINDS), default="geodesic",
              show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--session-ttl", type=float, default=3600.0, show_default=True)
@click.option("--lambda", "edge_weight", type=float, default=20.0, show_default=True)
@click.option("--connectivity", type=click.Choice(["4", "8"]), default="8",
              show_default=True)
@click.option("--params", "params_path", type=click.Path(exists=True), default=None)
@click.option("--ui", "ui_dir", type=click.Path(exists=True), default=None,
              help="Static directory for the browser UI.")
@click.pass_context
def serve(ctx, manifest_path, backend, host, port, session_ttl, edge_weight,
          connectivity, params_path, ui_dir):
    """Start the interactive annotation service."""
    _apply_config_defaults(ctx)
    import uvicorn

    from .service import ServiceConfig, create_app
    from .toynet import manifest_to_params

    p = ctx.params
    net = None
    if p["params_path"]:
        net = manifest_to_params(json.loads(Path(p["params_path"]).read_text()))
    if p["backend"] == "toynet" and net is None:
        raise click.UsageError("--params is required with --backend toynet")
    app = create_app(
        p["manifest_path"],
        net=net,
        config=ServiceConfig(
            backend=p["backend"],
            session_ttl=p["session_ttl"],
            geodesic=GeodesicParams(edge_weight=p["edge_weight"],
                                    connectivity=int(p["connectivity"])),
            oracle=OracleParams(seed=ctx.obj["seed"]),
        ),
        ui_dir=p["ui_dir"],
    )
    uvicorn.run(app, host=p["host"], port=p["port"], log_level="info")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 2
    except Exception as e:  # runtime failures map to exit 2
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
