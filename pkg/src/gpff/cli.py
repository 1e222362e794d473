"""Command-line interface: generate, metrics, shape-fit, loss-audit, serve.

Flags override values from an optional JSON config file (--config), which
in turn overrides built-in defaults. Exit codes: 0 success, 1 runtime
failure, 2 usage/config errors. The GPFF_LOG environment variable sets the
logging level (e.g. GPFF_LOG=DEBUG).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import socket
import sys

import numpy as np

from .loss import simple_loss
from .metrics import ensemble_report, write_report_csv, write_report_json
from .pes import lognormal_sigma
from .providers import (
    OracleForceProvider,
    ProviderError,
    ReferenceSet,
    RemoteForceProvider,
)
from .samplers import (
    ChurnParams,
    PriorSpec,
    SamplerConfig,
    SamplerError,
    ShapeConstraint,
    run_batch,
)
from .schedules import ScheduleParams
from .shapes import ShapeModel, absolute_target, fit_shape_model, named_targets
from .geometry import covariance3
from .xyz import XyzParseError, load_xyz, save_xyz

logger = logging.getLogger(__name__)

SAMPLER_NAMES = (
    "dd",
    "sdd",
    "dd+shape",
    "sdd+shape",
    "dd+scaffold",
    "ancestral",
    "heun",
    "sheun",
)


class CliError(Exception):
    """Bad input (file, config, argument combination): exit code 2."""


def _setup_logging():
    level_name = os.environ.get("GPFF_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise CliError(f"config {path} must hold a JSON object")
    return config


def _pick(flag_value, config: dict, key: str, default):
    """Flag beats config beats default; flags parse as None when unset."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _load_structures(path, what: str):
    try:
        structures = load_xyz(path)
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc}") from exc
    except XyzParseError as exc:
        raise CliError(f"{what} {path}: {exc}") from exc
    if not structures:
        raise CliError(f"{what} {path} holds no structures")
    return structures


def _build_provider(args, config):
    provider_kind = _pick(args.provider, config, "provider", None)
    refs_path = _pick(args.refs, config, "refs", None)
    endpoint = _pick(args.endpoint, config, "endpoint", None)
    if provider_kind is None:
        provider_kind = "remote" if endpoint and not refs_path else "oracle"
    if provider_kind == "oracle":
        if refs_path is None:
            raise CliError("the oracle provider needs --refs")
        refs = ReferenceSet(_load_structures(refs_path, "references"))
        sigma = _pick(args.fixed_sigma, config, "fixed_sigma", None)
        return OracleForceProvider(refs, sigma=sigma), refs
    if provider_kind == "remote":
        if endpoint is None:
            raise CliError("the remote provider needs --endpoint")
        refs = None
        if refs_path is not None:
            refs = ReferenceSet(_load_structures(refs_path, "references"))
        return RemoteForceProvider(endpoint), refs
    raise CliError(f"unknown provider {provider_kind!r}")


def _parse_elements(text):
    elements = [e.strip() for e in text.replace(",", " ").split() if e.strip()]
    if not elements:
        raise CliError("element list is empty")
    return tuple(elements)


def _resolve_shape(args, config, refs):
    target = _pick(args.shape_target, config, "shape_target", None)
    if target is None:
        raise CliError("shape-constrained samplers need --shape-target")
    strictness = float(_pick(args.strictness, config, "strictness", 1.0))
    scale = _pick(args.shape_scale, config, "shape_scale", None)
    if scale is None:
        if refs is None:
            raise CliError("--shape-scale is required without oracle references")
        scale = float(
            np.mean([np.trace(covariance3(s)) for s in refs.structures])
        )
    if target in named_targets():
        lam = absolute_target(named_targets()[target], float(scale))
    else:
        try:
            parts = [float(v) for v in target.replace(",", " ").split()]
        except ValueError:
            parts = []
        if len(parts) != 3:
            raise CliError(
                f"--shape-target must be one of {sorted(named_targets())} "
                "or three relative variances"
            )
        lam = absolute_target(parts, float(scale))
    return ShapeConstraint(tuple(lam), strictness=strictness)


def cmd_generate(args) -> int:
    config = _load_config(args.config)
    provider, refs = _build_provider(args, config)

    sampler_name = _pick(args.sampler, config, "sampler", "dd")
    if sampler_name not in SAMPLER_NAMES:
        raise CliError(f"unknown sampler {sampler_name!r}; choose from {SAMPLER_NAMES}")
    steps = int(_pick(args.steps, config, "steps", 64))
    schedule = ScheduleParams(
        rho=float(_pick(args.rho, config, "rho", 5.0)),
        sigma_min=float(_pick(args.sigma_min, config, "sigma_min", 0.01)),
        sigma_max=float(_pick(args.sigma_max, config, "sigma_max", 30.0)),
        steps=steps,
    )
    churn = ChurnParams(
        churn=float(_pick(args.churn, config, "churn", 60.0)),
        t_min=float(_pick(args.churn_min, config, "churn_min", 0.01)),
        t_max=float(_pick(args.churn_max, config, "churn_max", 15.0)),
        noise=float(_pick(args.churn_noise, config, "churn_noise", 1.0)),
    )
    adaptive = bool(_pick(args.adaptive, config, "adaptive", False))
    n_target = _pick(args.n_target, config, "n_target", None)
    f_max = float(_pick(args.f_max, config, "f_max", 1e-4))
    stride = int(_pick(args.snapshot_stride, config, "snapshot_stride", 8))

    elements_text = _pick(args.elements, config, "elements", None)
    if elements_text is not None:
        elements = _parse_elements(elements_text)
    elif refs is not None:
        elements = refs.elements
    else:
        raise CliError("supply --elements (no references to take the composition from)")

    shape = None
    scaffold_mask = None
    prior: PriorSpec
    kind, stochastic = {
        "dd": ("dd", False),
        "sdd": ("dd", True),
        "dd+shape": ("dd", False),
        "sdd+shape": ("dd", True),
        "dd+scaffold": ("dd", False),
        "ancestral": ("ancestral", False),
        "heun": ("heun", False),
        "sheun": ("stochastic-heun", False),
    }[sampler_name]
    if adaptive and kind == "dd":
        raise CliError("--adaptive applies to ancestral, heun, and sheun only")

    if sampler_name.endswith("+shape"):
        shape = _resolve_shape(args, config, refs)
        prior = PriorSpec.shaped(np.diag(shape.lam_target))
    elif sampler_name == "dd+scaffold":
        scaffold_path = _pick(args.scaffold, config, "scaffold", None)
        if scaffold_path is None:
            raise CliError("dd+scaffold needs --scaffold")
        scaffold = _load_structures(scaffold_path, "scaffold")[0]
        if elements_text is None:
            raise CliError("dd+scaffold needs --elements for the free atoms")
        prior = PriorSpec.mixed(scaffold, sigma_max=schedule.sigma_max)
        scaffold_mask = tuple(
            i < scaffold.n for i in range(scaffold.n + len(elements))
        )
    else:
        prior = PriorSpec.isotropic(schedule.sigma_max)

    cfg = SamplerConfig(
        kind=kind,
        schedule=schedule,
        adaptive=adaptive,
        stochastic=stochastic,
        f_max=f_max,
        shape=shape,
        scaffold_mask=scaffold_mask,
        churn=churn,
        n_target=None if n_target is None else int(n_target),
        snapshot_stride=stride,
    )

    count = int(_pick(args.count, config, "count", 1))
    seed = int(_pick(args.seed, config, "seed", 0))
    jobs = int(_pick(args.jobs, config, "jobs", 1))
    out_path = _pick(args.out, config, "out", "samples.xyz")
    traces_path = _pick(args.traces, config, "traces", None)

    try:
        results = run_batch(prior, elements, provider, cfg, count, seed, jobs=jobs)
    except (SamplerError, ProviderError) as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return 1

    structures = [s for s, _ in results]
    save_xyz(out_path, structures)
    if traces_path is not None:
        with open(traces_path, "w", encoding="utf-8") as fh:
            for _, trace in results:
                fh.write(trace.to_jsonl())
    nfe = [trace.nfe for _, trace in results]
    print(
        f"wrote {len(structures)} structures to {out_path} "
        f"(NFE mean {np.mean(nfe):.1f}, min {min(nfe)}, max {max(nfe)})"
    )
    return 0


def cmd_metrics(args) -> int:
    config = _load_config(args.config)
    generated = _load_structures(args.generated, "generated set")
    reference = (
        _load_structures(args.reference, "reference set")
        if args.reference is not None
        else None
    )
    bins = int(_pick(args.bins, config, "bins", 100))
    report = ensemble_report(generated, reference, bins=bins)
    out = _pick(args.out, config, "out", None)
    if out is not None:
        write_report_json(report, out)
    if args.csv_dir is not None:
        os.makedirs(args.csv_dir, exist_ok=True)
        write_report_csv(report, args.csv_dir)
    js = "n/a" if report.mpd_js is None else f"{report.mpd_js:.4f}"
    print(
        f"{report.n_generated} structures: validity "
        f"{report.validity_fraction:.3f}, MPD JS divergence {js}"
    )
    return 0


def cmd_shape_fit(args) -> int:
    config = _load_config(args.config)
    structures = _load_structures(args.structures, "training set")
    components = int(_pick(args.components, config, "components", 5))
    seed = int(_pick(args.seed, config, "seed", 0))
    model = fit_shape_model(structures, components=components, seed=seed)
    model.save(args.out)
    counts = ", ".join(str(n) for n in model.atom_counts())
    print(f"fitted shape model for atom counts [{counts}] -> {args.out}")
    return 0


def cmd_loss_audit(args) -> int:
    config = _load_config(args.config)
    provider, refs = _build_provider(args, config)
    if refs is None:
        raise CliError("loss-audit needs --refs for the perturbation targets")
    draws = int(_pick(args.draws, config, "draws", 1000))
    seed = int(_pick(args.seed, config, "seed", 0))
    rng = np.random.default_rng(seed)
    sigmas = [lognormal_sigma(rng) for _ in range(draws)]
    try:
        value = simple_loss(provider, refs, sigmas, rng, align=bool(args.align))
    except ProviderError as exc:
        print(f"loss audit failed: {exc}", file=sys.stderr)
        return 1
    print(f"loss: {value:.6e} ({draws} draws)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = _load_config(args.config)
    provider, _ = _build_provider(args, config)
    bind = _pick(args.bind, config, "bind", "127.0.0.1:8000")
    try:
        host, port_text = bind.rsplit(":", 1)
        port = int(port_text)
    except ValueError:
        raise CliError(f"--bind must look like host:port, got {bind!r}") from None
    shape_model = None
    model_path = _pick(args.shape_model, config, "shape_model", None)
    if model_path is not None:
        try:
            shape_model = ShapeModel.load(model_path)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot load shape model {model_path}: {exc}") from exc
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        print(f"cannot bind {bind}: {exc}", file=sys.stderr)
        return 2
    finally:
        probe.close()
    app = create_app(
        provider,
        shape_model=shape_model,
        sampler_steps=int(_pick(args.steps, config, "steps", 64)),
        max_candidates=int(_pick(args.max_candidates, config, "max_candidates", 12)),
        provider_label="remote" if args.endpoint else "oracle",
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _add_provider_flags(parser):
    parser.add_argument("--provider", choices=["oracle", "remote"], default=None)
    parser.add_argument("--refs", default=None, help="reference structures (xyz)")
    parser.add_argument("--endpoint", default=None, help="remote force endpoint URL")
    parser.add_argument(
        "--fixed-sigma", dest="fixed_sigma", type=float, default=None,
        help="evaluate the oracle at this fixed noise level",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpff",
        description="pseudo-force-field structure sampling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample structures from a force provider")
    _add_provider_flags(gen)
    gen.add_argument("--config", default=None, help="JSON config file")
    gen.add_argument("--sampler", choices=SAMPLER_NAMES, default=None)
    gen.add_argument("--adaptive", action="store_true", default=None)
    gen.add_argument("--n-target", dest="n_target", type=int, default=None)
    gen.add_argument("--steps", type=int, default=None)
    gen.add_argument("--count", type=int, default=None)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--jobs", type=int, default=None)
    gen.add_argument("--out", default=None)
    gen.add_argument("--traces", default=None, help="write JSON-lines traces here")
    gen.add_argument("--f-max", dest="f_max", type=float, default=None)
    gen.add_argument("--rho", type=float, default=None)
    gen.add_argument("--sigma-min", dest="sigma_min", type=float, default=None)
    gen.add_argument("--sigma-max", dest="sigma_max", type=float, default=None)
    gen.add_argument("--churn", type=float, default=None)
    gen.add_argument("--churn-min", dest="churn_min", type=float, default=None)
    gen.add_argument("--churn-max", dest="churn_max", type=float, default=None)
    gen.add_argument("--churn-noise", dest="churn_noise", type=float, default=None)
    gen.add_argument("--shape-target", dest="shape_target", default=None)
    gen.add_argument("--shape-scale", dest="shape_scale", type=float, default=None)
    gen.add_argument("--strictness", type=float, default=None)
    gen.add_argument("--scaffold", default=None, help="frozen scaffold (xyz)")
    gen.add_argument("--elements", default=None, help="free-atom elements, e.g. 'C,H,H,O'")
    gen.add_argument(
        "--snapshot-stride", dest="snapshot_stride", type=int, default=None
    )
    gen.set_defaults(func=cmd_generate)

    met = sub.add_parser("metrics", help="score an ensemble against a reference")
    met.add_argument("--config", default=None)
    met.add_argument("--generated", required=True)
    met.add_argument("--reference", default=None)
    met.add_argument("--bins", type=int, default=None)
    met.add_argument("--out", default=None, help="write the JSON report here")
    met.add_argument("--csv-dir", dest="csv_dir", default=None)
    met.set_defaults(func=cmd_metrics)

    fit = sub.add_parser("shape-fit", help="fit the shape mixture model")
    fit.add_argument("--config", default=None)
    fit.add_argument("--structures", required=True)
    fit.add_argument("--components", type=int, default=None)
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=cmd_shape_fit)

    audit = sub.add_parser("loss-audit", help="Monte-Carlo force-matching audit")
    _add_provider_flags(audit)
    audit.add_argument("--config", default=None)
    audit.add_argument("--draws", type=int, default=None)
    audit.add_argument("--seed", type=int, default=None)
    audit.add_argument("--align", action="store_true", default=False)
    audit.set_defaults(func=cmd_loss_audit)

    serve = sub.add_parser("serve", help="run the design session service")
    _add_provider_flags(serve)
    serve.add_argument("--config", default=None)
    serve.add_argument("--bind", default=None, help="host:port (default 127.0.0.1:8000)")
    serve.add_argument("--steps", type=int, default=None)
    serve.add_argument("--max-candidates", dest="max_candidates", type=int, default=None)
    serve.add_argument("--shape-model", dest="shape_model", default=None)
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SamplerError, ProviderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
