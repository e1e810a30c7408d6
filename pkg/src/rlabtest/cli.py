"""Command-line entry points: ``simulate``, ``test`` and ``experiment``.

Configuration is a TOML document validated against
``schemas/config.schema.json``; unknown keys are rejected. The seed may be
overridden with the ``RLABTEST_SEED`` environment variable.

Exit codes: 0 when the command completed (whatever the test decided),
2 for invalid input or configuration, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from rlabtest._rng import child_seed
from rlabtest.basis import BasisSpec, ReferenceDistribution, compute_contrast
from rlabtest.data import Trajectory
from rlabtest.errors import InputError, NumericalError, StateError
from rlabtest.estimator import EstimatorConfig, fit
from rlabtest.harness import ExperimentConfig, emit_plot_data, run_experiment
from rlabtest.sequential import SequentialPlan, run_sequential_test
from rlabtest.simulator import DesignPolicy, EnvSpec, reference_distribution, simulate

SEED_ENV = "RLABTEST_SEED"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
DEFAULT_REFERENCE_SAMPLES = 100_000


class ConfigError(InputError):
    """Configuration rejected by the schema or by a cross-field check."""


# Configuration ---------------------------------------------------------------


@lru_cache(maxsize=1)
def config_schema() -> dict:
    text = resources.files("rlabtest").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def _key_path(error: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in error.absolute_path]
    if error.validator == "additionalProperties":
        extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        parts.extend(extra[:1])
    elif error.validator == "required":
        missing = [r for r in error.validator_value if r not in error.instance]
        parts.extend(missing[:1])
    return ".".join(parts) or "<root>"


def validate_config(doc: dict, required: tuple = ()) -> dict:
    """Validate ``doc`` and return it; raises :class:`ConfigError` naming the key path."""
    validator = jsonschema.Draft202012Validator(config_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        raise ConfigError(f"config error at {_key_path(err)}: {err.message}")
    for section in required:
        if section not in doc:
            raise ConfigError(f"config error at {section}: section is required for this command")
    return doc


def load_config(path, required: tuple = ()) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    return validate_config(doc, required)


def resolve_seed(doc: dict) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is not None and raw.strip():
        try:
            seed = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be a nonnegative integer, got {raw!r}") from exc
        if seed < 0:
            raise ConfigError(f"{SEED_ENV} must be a nonnegative integer, got {raw!r}")
        return seed
    return int(doc.get("seed", 0))


def env_from(doc: dict) -> EnvSpec:
    sec = doc["env"]
    return EnvSpec(sec["kind"], float(sec.get("delta", 0.0)), float(sec.get("noise_scale", 1.0)))


def design_from(doc: dict) -> DesignPolicy:
    sec = doc["design"]
    kind = sec["kind"]
    if kind == "markov":
        return DesignPolicy.markov(float(sec.get("p", 0.5)))
    if kind == "alternating":
        return DesignPolicy.alternating()
    if kind == "fixed":
        if "actions" not in sec:
            raise ConfigError("config error at design.actions: required for the fixed design")
        return DesignPolicy.fixed(sec["actions"])
    times = sec.get("stage_times") or doc.get("plan", {}).get("stage_times", ())
    return DesignPolicy.adaptive(float(sec.get("epsilon", 0.1)), [int(t) for t in times], float(sec.get("p", 0.5)))


def plan_from(doc: dict, seed: int) -> SequentialPlan:
    sec = doc["plan"]
    return SequentialPlan(
        tuple(int(t) for t in sec["stage_times"]),
        alpha=float(sec.get("alpha", 0.05)),
        spending=sec.get("spending", "alpha1"),
        theta=float(sec.get("theta", 3.0)),
        B=int(sec.get("B", 1000)),
        seed=seed,
    )


def estimator_from(doc: dict, state_dim: int) -> EstimatorConfig:
    sec = doc["estimator"]
    return EstimatorConfig(
        float(sec["gamma"]),
        BasisSpec(int(sec["degree"]), state_dim),
        float(sec.get("ridge_epsilon", 1e-8)),
    )


def reference_from(doc: dict, seed: int, traj: Trajectory | None = None) -> ReferenceDistribution:
    """Reference distribution for the contrast; defaults to the observed states."""
    sec = doc.get("reference", {"source": "data"})
    source = sec["source"]
    if source == "point":
        if "state" not in sec:
            raise ConfigError("config error at reference.state: required when source = 'point'")
        return ReferenceDistribution.at(sec["state"])
    if source == "env":
        kind = sec.get("env") or doc.get("env", {}).get("kind")
        if kind is None:
            raise ConfigError("config error at reference.env: required when there is no [env] section")
        n = int(sec.get("samples", DEFAULT_REFERENCE_SAMPLES))
        return reference_distribution(EnvSpec(kind), n, child_seed(seed, 1))
    if traj is None:
        raise ConfigError("config error at reference.source: 'data' needs an input trajectory")
    return ReferenceDistribution(traj.states)


# Trajectory CSV --------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Write ``t,s1..sd,a,y``; a trailing row with empty ``a,y`` carries the final state."""
    d = traj.state_dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"s{i + 1}" for i in range(d)] + ["a", "y"])
        n = len(traj)
        if n == 0:
            return
        for i in range(n):
            w.writerow([traj.t0 + i] + [_fmt(v) for v in traj.states[i]] + [int(traj.actions[i]), _fmt(traj.rewards[i])])
        w.writerow([traj.t0 + n] + [_fmt(v) for v in traj.states[n]] + ["", ""])


def read_trajectory_csv(path) -> Trajectory:
    """Parse a trajectory CSV.

    Every row but the last must carry ``a`` and ``y``. The last row supplies the
    final state; if it also has ``a``/``y`` those are ignored, since the
    transition they belong to has no observed successor.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: missing header")
        header = [h.strip() for h in header]
        d = len(header) - 3
        expected = ["t"] + [f"s{i + 1}" for i in range(d)] + ["a", "y"]
        if d < 1 or header != expected:
            raise InputError(f"{path}, line 1: header must be t,s1,...,sd,a,y, got {','.join(header)}")
        times, states, actions, rewards, open_rows = [], [], [], [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 3:
                raise InputError(f"{path}, line {line}: expected {d + 3} fields, got {len(row)}")
            try:
                t = int(row[0])
                s = [float(v) for v in row[1 : d + 1]]
                a_raw, y_raw = row[d + 1].strip(), row[d + 2].strip()
                if a_raw == "" and y_raw == "":
                    a, y = None, None
                else:
                    a, y = int(a_raw), float(y_raw)
            except ValueError as exc:
                raise InputError(f"{path}, line {line}: {exc}") from exc
            if a is not None and a not in (0, 1):
                raise InputError(f"{path}, line {line}: action must be 0 or 1, got {a}")
            if not np.all(np.isfinite(s)) or (y is not None and not np.isfinite(y)):
                raise InputError(f"{path}, line {line}: non-finite value")
            if times and t != times[-1] + 1:
                raise InputError(f"{path}, line {line}: time {t} does not follow {times[-1]}")
            times.append(t)
            states.append(s)
            actions.append(a)
            rewards.append(y)
            open_rows.append(line)
    if not times:
        return Trajectory.empty(d)
    for a, line in zip(actions[:-1], open_rows[:-1]):
        if a is None:
            raise InputError(f"{path}, line {line}: only the last row may omit a and y")
    return Trajectory(np.array(states), actions[:-1], rewards[:-1], t0=times[0])


def _write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w") as fh:
        fh.write(text)


# Commands --------------------------------------------------------------------


def cmd_simulate(config_path, output, workers: int = 1) -> int:
    doc = load_config(config_path, required=("env", "design", "simulate"))
    seed = resolve_seed(doc)
    env = env_from(doc)
    design = design_from(doc)
    T = int(doc["simulate"]["T"])
    coupled = None
    if design.kind == "adaptive":
        if "estimator" not in doc:
            raise ConfigError("config error at estimator: the adaptive design needs an estimator section")
        est = estimator_from(doc, env.state_dim)
        coupled = lambda prefix: fit(prefix, est)[1]  # noqa: E731
    traj = simulate(env, design, T, seed, coupled_estimator=coupled)
    output = Path(output)
    write_trajectory_csv(output, traj)
    _write_json(output.with_suffix(".json"), {"config": doc, "seed": seed, "T": T})
    return EXIT_OK


def build_test_report(doc: dict, traj: Trajectory, seed: int) -> dict:
    plan = plan_from(doc, seed)
    cfg = estimator_from(doc, traj.state_dim)
    ref = reference_from(doc, seed, traj)
    snaps = run_sequential_test(traj, plan, cfg, compute_contrast(cfg.basis, ref))
    rejected = any(s.rejected for s in snaps)
    if rejected or len(snaps) == plan.K:
        status = "complete"
    else:
        status = "partial"
    return {
        "status": status,
        "decision": "reject" if rejected else ("no-reject" if status == "complete" else "undecided"),
        "n_observations": len(traj),
        "seed": seed,
        "plan": asdict(plan),
        "stages": [s.to_dict() for s in snaps],
        "stages_missing": list(plan.stage_times[len(snaps):]) if status == "partial" else [],
    }


def cmd_test(config_path, input_path, output, workers: int = 1) -> int:
    doc = load_config(config_path, required=("plan", "estimator"))
    seed = resolve_seed(doc)
    traj = read_trajectory_csv(input_path)
    _write_json(output, build_test_report(doc, traj, seed))
    return EXIT_OK


def experiment_from(doc: dict, seed: int) -> ExperimentConfig:
    env = env_from(doc)
    sec = doc["experiment"]
    return ExperimentConfig(
        env=env,
        design=design_from(doc),
        plan=plan_from(doc, seed),
        estimator=estimator_from(doc, env.state_dim),
        replications=int(sec["replications"]),
        methods=tuple(sec.get("methods", ("proposed",))),
        delta_grid=tuple(float(x) for x in sec.get("delta_grid", (env.delta,))),
        seed=seed,
        reference_samples=int(sec.get("reference_samples", DEFAULT_REFERENCE_SAMPLES)),
        crossover_pairs=int(sec.get("crossover_pairs", 10)),
    )


def cmd_experiment(config_path, output_dir, workers: int = 1) -> int:
    doc = load_config(config_path, required=("env", "design", "plan", "estimator", "experiment"))
    seed = resolve_seed(doc)
    try:
        exp = experiment_from(doc, seed)
    except ValueError as exc:
        raise ConfigError(f"config error at experiment: {exc}") from exc
    table = run_experiment(exp, workers=workers)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rejection.csv").write_text(emit_plot_data(table, exp.plan))
    _write_json(out / "summary.json", {"config": doc, "seed": seed, "table": table.to_dict()})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlabtest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a trajectory CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True, help="CSV path; a .json sidecar is written next to it")

    p = sub.add_parser("test", help="run the sequential test on a trajectory CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-", help="JSON report path, '-' for stdout")

    p = sub.add_parser("experiment", help="Monte-Carlo rejection rates")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.output)
        if args.command == "test":
            return cmd_test(args.config, args.input, args.output)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return cmd_experiment(args.config, args.output_dir, args.workers)
    except NumericalError as exc:
        print(f"rlabtest: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, StateError, ValueError, OSError) as exc:
        print(f"rlabtest: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
