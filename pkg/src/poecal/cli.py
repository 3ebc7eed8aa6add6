"""Experiment runner: field, em, ablate, and gradient subcommands.

Settings come from a named preset, optionally overridden by a typed INI config
file with one section per module; unknown sections or keys are rejected. All
outputs are deterministic in (config, seed) and independent of --threads.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .ablations import run_collapse, run_weighting_ablation
from .core import (
    ConfigurationError,
    DomainError,
    Exponents,
    NumericalError,
    ShapeError,
    UnsupportedConfigurationError,
    derive_seed,
)
from .em import em_run
from .evidence import analytic_evidence, constrained_evidence_gradient, evidence_gradient
from .experts import GaussianExpert, MixtureExpert, ProductPrior
from .field import analytic_field, build_gradient_grid, field_argmax, nrmse, pearson, reconstruct_field
from .io import (
    field_to_csv,
    field_to_pgm,
    gradient_component_to_csv,
    load_matrix,
    load_vector,
    samples_to_csv,
    write_json,
)
from .likelihood import LinearGaussianMeasurement
from .presets import GaussianToyPreset, build_toy, collapse_setup, toy_preset

__all__ = ["main", "entrypoint"]

# section -> key -> (type, preset attribute or None)
SCHEMA = {
    "experts": {
        "d": (int, "d"),
        "mean_p": (float, "mean_p"),
        "mean_q": (float, "mean_q"),
        "sigma_p_low": (float, "sigma_p_low"),
        "sigma_p_high": (float, "sigma_p_high"),
        "sigma_q_low": (float, "sigma_q_low"),
        "sigma_q_high": (float, "sigma_q_high"),
    },
    "likelihood": {
        "m": (int, "m"),
        "sigma_y": (float, "sigma_y"),
        "truth_scale": (float, "truth_scale"),
        "a_file": (str, None),
        "y_file": (str, None),
    },
    "core": {
        "sigma_max_eff": (float, "sigma_max_eff"),
        "sigma_min_eff": (float, "sigma_min_eff"),
        "rho": (float, "rho"),
    },
    "sampler": {
        "annealing_steps": (int, "annealing_steps"),
        "mixing_steps": (int, "mixing_steps"),
        "n_chains": (int, "n_samples"),
        "langevin_coef": (float, "langevin_coef"),
        "beta_coef": (float, "beta_coef"),
        "jacobian_mode": (str, "jacobian_mode"),
    },
    "density": {
        "integration_steps": (int, "integration_steps"),
        "n_probes": (int, "n_probes"),
        "probe_kind": (str, "probe_kind"),
        "mode": (str, "density_mode"),
    },
    "field": {
        "grid_start": (float, "grid_start"),
        "grid_stop": (float, "grid_stop"),
        "grid_step": (float, "grid_step"),
        "p_weight": (float, "p_weight"),
    },
    "em": {
        "iterations": (int, "em_iterations"),
        "eta": (float, "em_eta"),
        "c": (float, "em_c"),
        "inits": (str, "em_inits"),
        "constraint_mode": (str, "em_constraint_mode"),
    },
    "ablations": {
        "p_values": (str, "p_values"),
        "collapse_iterations": (int, "collapse_iterations"),
        "collapse_sigma_y": (float, None),
    },
}

# Keys that may be absent even with --preset none.
OPTIONAL_KEYS = {("likelihood", "a_file"), ("likelihood", "y_file"), ("ablations", "collapse_sigma_y")}


def _parse_inits(text) -> tuple:
    if isinstance(text, tuple):
        return text
    out = []
    for part in str(text).split(";"):
        part = part.strip()
        if not part:
            continue
        out.append(tuple(float(v) for v in part.split(",")))
    if not out:
        raise ConfigurationError("em.inits must list at least one initialization")
    return tuple(out)


def _parse_values(text) -> tuple:
    if isinstance(text, tuple):
        return text
    return tuple(float(v) for v in str(text).split(","))


def _load_config(path) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file not found: {path}")
    out = {}
    for section in parser.sections():
        if section.startswith("expert."):
            out[section] = dict(parser.items(section))
            continue
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"unknown config key {section}.{key}")
            typ, _ = SCHEMA[section][key]
            try:
                out[(section, key)] = typ(raw)
            except ValueError as exc:
                raise ConfigurationError(f"config key {section}.{key}: {exc}") from exc
    return out


def _settings(args) -> dict:
    """Merge preset defaults with config-file overrides into a flat dict."""
    merged = {}
    if args.preset != "none":
        preset = toy_preset(reduced=args.reduced, truth_scale=args.truth)
        for section, keys in SCHEMA.items():
            for key, (_, attr) in keys.items():
                if attr is not None:
                    merged[(section, key)] = getattr(preset, attr)
    overrides = _load_config(args.config) if args.config else {}
    merged.update({k: v for k, v in overrides.items() if isinstance(k, tuple)})
    merged.update({k: v for k, v in overrides.items() if isinstance(k, str)})  # [expert.N]
    if args.preset == "none":
        for section, keys in SCHEMA.items():
            for key in keys:
                if (section, key) not in merged and (section, key) not in OPTIONAL_KEYS:
                    raise ConfigurationError(f"missing config key {section}.{key}")
    return merged


def _parse_expert_section(raw: dict, d: int):
    def vector(text):
        vals = [float(v) for v in str(text).split(",")]
        return np.full(d, vals[0]) if len(vals) == 1 else np.asarray(vals)

    if "weights" in raw:
        weights = np.asarray([float(v) for v in raw["weights"].split(",")])
        means = np.asarray([[float(v) for v in row.split(",")] for row in raw["means"].split(";")])
        variances = np.asarray([[float(v) for v in row.split(",")] for row in raw["vars"].split(";")])
        return MixtureExpert(weights, means, variances)
    try:
        return GaussianExpert(vector(raw["mean"]), vector(raw["var"]))
    except KeyError as exc:
        raise ConfigurationError(f"expert section missing key {exc}") from exc


def _bundle(args, settings):
    sv = lambda section, key: settings[(section, key)]
    preset = GaussianToyPreset(
        name=args.preset,
        d=sv("experts", "d"),
        m=sv("likelihood", "m"),
        sigma_y=sv("likelihood", "sigma_y"),
        truth_scale=sv("likelihood", "truth_scale"),
        mean_p=sv("experts", "mean_p"),
        mean_q=sv("experts", "mean_q"),
        sigma_p_low=sv("experts", "sigma_p_low"),
        sigma_p_high=sv("experts", "sigma_p_high"),
        sigma_q_low=sv("experts", "sigma_q_low"),
        sigma_q_high=sv("experts", "sigma_q_high"),
        grid_start=sv("field", "grid_start"),
        grid_stop=sv("field", "grid_stop"),
        grid_step=sv("field", "grid_step"),
        n_samples=sv("sampler", "n_chains"),
        annealing_steps=sv("sampler", "annealing_steps"),
        mixing_steps=sv("sampler", "mixing_steps"),
        sigma_max_eff=sv("core", "sigma_max_eff"),
        sigma_min_eff=sv("core", "sigma_min_eff"),
        rho=sv("core", "rho"),
        langevin_coef=sv("sampler", "langevin_coef"),
        beta_coef=sv("sampler", "beta_coef"),
        jacobian_mode=sv("sampler", "jacobian_mode"),
        integration_steps=sv("density", "integration_steps"),
        n_probes=sv("density", "n_probes"),
        probe_kind=sv("density", "probe_kind"),
        density_mode=sv("density", "mode"),
        em_iterations=sv("em", "iterations"),
        em_eta=sv("em", "eta"),
        em_c=sv("em", "c"),
        em_inits=_parse_inits(sv("em", "inits")),
        em_constraint_mode=sv("em", "constraint_mode"),
        p_weight=sv("field", "p_weight"),
        p_values=_parse_values(sv("ablations", "p_values")),
        collapse_iterations=sv("ablations", "collapse_iterations"),
    )
    meas = None
    if ("likelihood", "a_file") in settings or ("likelihood", "y_file") in settings:
        if not (("likelihood", "a_file") in settings and ("likelihood", "y_file") in settings):
            raise ConfigurationError("a_file and y_file must be given together")
        A = load_matrix(settings[("likelihood", "a_file")])
        y = load_vector(settings[("likelihood", "y_file")])
        meas = LinearGaussianMeasurement(A, y, preset.sigma_y)
        preset = replace(preset, m=A.shape[0], d=A.shape[1])
    bundle = build_toy(preset, args.seed, meas=meas)
    experts = list(bundle.experts)
    for n, section in ((0, "expert.1"), (1, "expert.2")):
        if section in settings:
            experts[n] = _parse_expert_section(settings[section], preset.d)
    if len({e.dim for e in experts}) != 1 or experts[0].dim != bundle.meas.dim:
        raise ShapeError("expert dimensions must match the forward matrix columns")
    return replace(bundle, experts=tuple(experts))


def _echo(args, settings) -> dict:
    echo = {f"{s}.{k}": str(v) for (s, k), v in settings.items() if isinstance((s, k), tuple)}
    echo["seed"] = str(args.seed)
    echo["preset"] = args.preset
    echo["reduced"] = str(args.reduced)
    return echo


def _require_gaussian(experts, what: str):
    if not all(isinstance(e, GaussianExpert) for e in experts):
        raise UnsupportedConfigurationError(f"{what} requires Gaussian experts (analytic oracle)")


def cmd_field(args, settings) -> int:
    bundle = _bundle(args, settings)
    _require_gaussian(bundle.experts, "the field command")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = build_gradient_grid(
        bundle.experts,
        bundle.meas,
        bundle.grid_a1,
        bundle.grid_a2,
        bundle.schedule,
        bundle.run_cfg,
        bundle.density_cfg,
        mode=bundle.preset.density_mode,
        threads=args.threads,
    )
    log_z1 = analytic_evidence(bundle.experts, Exponents(np.array([1.0, 0.0])), bundle.meas)
    log_z2 = analytic_evidence(bundle.experts, Exponents(np.array([0.0, 1.0])), bundle.meas)
    recon = reconstruct_field(grid, log_z1, log_z2, p_weight=bundle.preset.p_weight)
    ana = analytic_field(bundle.experts, bundle.meas, bundle.grid_a1, bundle.grid_a2)
    echo = _echo(args, settings)
    gradient_component_to_csv(out / "gradient_a1.csv", grid, 1, echo)
    gradient_component_to_csv(out / "gradient_a2.csv", grid, 2, echo)
    field_to_csv(out / "field_reconstructed.csv", recon, echo)
    field_to_csv(out / "field_analytic.csv", ana, echo)
    field_to_pgm(out / "field_reconstructed.pgm", recon)
    field_to_pgm(out / "field_analytic.pgm", ana)
    summary = {
        "nrmse": nrmse(recon, ana),
        "pearson": pearson(recon, ana),
        "argmax_reconstructed": list(field_argmax(recon)),
        "argmax_analytic": list(field_argmax(ana)),
        "boundary": {"log_z1": log_z1, "log_z2": log_z2},
        "lsq_rel_residual": recon.lsq_rel_residual,
        "config": echo,
    }
    write_json(out / "summary.json", summary)
    return 0


def _init_exponents(init, mode: str) -> Exponents:
    arr = np.asarray(init, dtype=float)
    if mode == "sum_to_one":
        return Exponents.sum_to_one(arr[:-1])
    return Exponents(arr, mode)


def cmd_em(args, settings) -> int:
    bundle = _bundle(args, settings)
    _require_gaussian(bundle.experts, "the em command")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    preset = bundle.preset
    echo = _echo(args, settings)

    def one(k_init):
        k, init = k_init
        rc = replace(bundle.run_cfg, master_seed=derive_seed(args.seed, "em-traj", k))
        return em_run(
            bundle.experts,
            _init_exponents(init, preset.em_constraint_mode),
            bundle.meas,
            preset.em_iterations,
            preset.em_eta,
            preset.em_c,
            bundle.schedule,
            rc,
            bundle.density_cfg,
            mode=preset.density_mode,
        )

    jobs = list(enumerate(preset.em_inits))
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            trajectories = list(pool.map(one, jobs))
    else:
        trajectories = [one(job) for job in jobs]

    ana = analytic_field(bundle.experts, bundle.meas, bundle.grid_a1, bundle.grid_a2)
    target = np.asarray(field_argmax(ana))
    finals = []
    for k, traj in enumerate(trajectories):
        write_json(out / f"em_trajectory_{k}.json", {"config": echo, "records": traj.to_records()})
        samples_to_csv(out / f"em_final_samples_{k}.csv", traj.final_posterior, echo)
        final_a = traj.records[-1].a
        finals.append(
            {
                "init": list(preset.em_inits[k]),
                "final_a": [float(v) for v in final_a],
                "distance_to_analytic_argmax": float(np.linalg.norm(final_a - target)),
            }
        )
    write_json(
        out / "summary.json",
        {"trajectories": finals, "argmax_analytic": [float(v) for v in target], "config": echo},
    )
    return 0


def cmd_ablate(args, settings) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = _echo(args, settings)
    if args.kind == "collapse":
        sigma_y = settings.get(("ablations", "collapse_sigma_y"), 0.3)
        iterations = settings[("ablations", "collapse_iterations")]
        prior, meas, x_true = collapse_setup(sigma_y)
        states = run_collapse(prior, meas, iterations, x_true)
        write_json(out / "collapse.json", {"config": echo, "states": [s.to_record() for s in states]})
        return 0
    bundle = _bundle(args, settings)
    _require_gaussian(bundle.experts, "the weighting ablation")
    grid = build_gradient_grid(
        bundle.experts,
        bundle.meas,
        bundle.grid_a1,
        bundle.grid_a2,
        bundle.schedule,
        bundle.run_cfg,
        bundle.density_cfg,
        mode=bundle.preset.density_mode,
        threads=args.threads,
    )
    log_z1 = analytic_evidence(bundle.experts, Exponents(np.array([1.0, 0.0])), bundle.meas)
    log_z2 = analytic_evidence(bundle.experts, Exponents(np.array([0.0, 1.0])), bundle.meas)
    ana = analytic_field(bundle.experts, bundle.meas, bundle.grid_a1, bundle.grid_a2)
    rows = run_weighting_ablation(grid, log_z1, log_z2, ana, bundle.preset.p_values)
    lines = [f"# {k}={echo[k]}" for k in sorted(echo)]
    lines.append("p,nrmse,seed")
    for p, err in rows:
        lines.append(f"{p!r},{err!r},{args.seed}")
    (out / "weighting.csv").write_text("\n".join(lines) + "\n")
    best = min(rows, key=lambda r: r[1])
    write_json(out / "summary.json", {"rows": [list(r) for r in rows], "best_p": best[0], "config": echo})
    return 0


def cmd_gradient(args, settings) -> int:
    bundle = _bundle(args, settings)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values = np.asarray([float(v) for v in args.a.split(",")])
    if values.size != len(bundle.experts):
        raise ConfigurationError("--a must provide one exponent per expert")
    if args.sum_to_one:
        exponents = Exponents.sum_to_one(values[:-1])
        prior = ProductPrior(bundle.experts, exponents)
        est = constrained_evidence_gradient(
            prior, bundle.meas, bundle.schedule, bundle.run_cfg, bundle.density_cfg, mode=bundle.preset.density_mode
        )
    else:
        exponents = Exponents(values)
        prior = ProductPrior(bundle.experts, exponents)
        est = evidence_gradient(
            prior, bundle.meas, bundle.schedule, bundle.run_cfg, bundle.density_cfg, mode=bundle.preset.density_mode
        )
    record = est.to_record()
    record["config"] = _echo(args, settings)
    write_json(out / "gradient.json", record)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poecal", description="Product-of-experts prior calibration")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file overriding preset values")
    common.add_argument("--preset", default="paper-4.1", choices=["paper-4.1", "none"])
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--reduced", action="store_true", help="d=200, m=50 variant of the preset")
    common.add_argument("--truth", type=float, default=0.9, help="constant ground-truth level")
    sub.add_parser("field", parents=[common], help="gradient grid + field reconstruction")
    sub.add_parser("em", parents=[common], help="EM trajectories over exponents")
    pa = sub.add_parser("ablate", parents=[common], help="weighting or collapse ablation")
    pa.add_argument("kind", choices=["weighting", "collapse"])
    pg = sub.add_parser("gradient", parents=[common], help="single evidence-gradient evaluation")
    pg.add_argument("--a", default="1,0", help="comma-separated exponents")
    pg.add_argument("--sum-to-one", action="store_true", help="use the constrained estimator")
    return parser


_COMMANDS = {"field": cmd_field, "em": cmd_em, "ablate": cmd_ablate, "gradient": cmd_gradient}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings(args)
        return _COMMANDS[args.command](args, settings)
    except (ConfigurationError, DomainError, ShapeError, UnsupportedConfigurationError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 3


def entrypoint():
    sys.exit(main(sys.argv[1:]))
