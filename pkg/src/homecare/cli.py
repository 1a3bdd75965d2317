"""Command-line entry point.

Every command reads an instance document, writes its artifacts into ``--out`` and
records a ``manifest.json`` describing the run.  Randomness derives from ``--seed``
alone: simulation streams are keyed by (seed, start-state index, policy, purpose) and
sample paths by (seed, start-state index, path index).
"""
from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .instance import InstanceError, load_instance

EXIT_INPUT = 2
EXIT_RUNTIME = 1


class CliError(Exception):
    def __init__(self, message: str, details=None, code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.details = details or []
        self.code = code


def _fail(message: str, details=None, code: int = EXIT_RUNTIME):
    click.echo(json.dumps({"error": message, "details": list(details or [])}), err=True)
    sys.exit(code)


class Run:
    """Collects outputs and timings and writes the manifest."""

    def __init__(self, command: str, instance: str | None, out: str, seed: int | None, options: dict):
        self.command = command
        self.instance = instance
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.options = {k: v for k, v in options.items() if v is not None}
        self.outputs: list[str] = []
        self.timings: dict = {}
        self.t0 = time.perf_counter()

    def write(self, name: str, text: str):
        (self.out / name).write_text(text)
        self.outputs.append(name)

    def write_json(self, name: str, obj):
        self.write(name, json.dumps(obj, indent=1, sort_keys=True) + "\n")

    def timed(self, label: str, fn, *a, **kw):
        t = time.perf_counter()
        res = fn(*a, **kw)
        self.timings[label] = round(time.perf_counter() - t, 3)
        return res

    def finish(self):
        self.timings["total"] = round(time.perf_counter() - self.t0, 3)
        digests = {n: hashlib.sha256((self.out / n).read_bytes()).hexdigest() for n in self.outputs}
        manifest = {"command": self.command, "instance": self.instance, "seed": self.seed,
                    "options": self.options, "outputs": self.outputs, "sha256": digests,
                    "version": __version__, "seconds": self.timings}
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        click.echo(json.dumps({"status": "ok", "out": str(self.out), "outputs": self.outputs}))


def _load(path: str):
    try:
        return load_instance(Path(path))
    except FileNotFoundError:
        raise CliError(f"instance file not found: {path}", code=EXIT_INPUT)
    except InstanceError as exc:
        raise CliError(str(exc), exc.errors, EXIT_INPUT)


def _jobs(jobs: int | None) -> int:
    return jobs if jobs and jobs > 0 else (os.cpu_count() or 1)


def _params(inst, params_path, eps, variant):
    from .alp import AlpParams, column_generation
    if params_path:
        return AlpParams.load(params_path)
    if eps is None:
        eps = float(inst.lam.sum()) / (inst.K * inst.L)
    return column_generation(inst, eps, variant).params


def _policies(names, inst, params, scenarios, threshold):
    from .policies import AcceptDivertAll, AlpPolicy, MyopicPolicy, RejectAll, SbConfig, SbPolicy
    out = {}
    for name in names:
        if name == "alp":
            out[name] = AlpPolicy(params())
        elif name == "myopic":
            out[name] = MyopicPolicy()
        elif name == "sb":
            out[name] = SbPolicy(SbConfig(scenarios, threshold))
        elif name == "reject-all":
            out[name] = RejectAll()
        elif name == "divert-all":
            out[name] = AcceptDivertAll()
        else:
            raise CliError(f"unknown policy {name!r}",
                           ["choose from alp, myopic, sb, reject-all, divert-all"], EXIT_INPUT)
    return out


def _command(fn):
    """Turn CliError and unexpected failures into JSON on stderr and an exit code."""
    def wrapper(*a, **kw):
        try:
            return fn(*a, **kw)
        except CliError as exc:
            _fail(str(exc), exc.details, exc.code)
        except (ValueError, RuntimeError) as exc:
            _fail(f"{type(exc).__name__}: {exc}", code=EXIT_RUNTIME)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# -- shared options ------------------------------------------------------------
def instance_opt(f):
    return click.option("--instance", "instance", required=True, type=str,
                        help="Instance JSON document.")(f)


def out_opt(f):
    return click.option("--out", default="out", show_default=True, help="Output directory.")(f)


def seed_opt(f):
    return click.option("--seed", default=0, show_default=True, type=click.IntRange(0, 2**64 - 1),
                        help="Master seed.")(f)


def variant_opt(f):
    return click.option("--variant", default="1d-2i", show_default=True,
                        type=click.Choice(["full", "2i", "1d", "1d-2i"]))(f)


def sim_opts(f):
    f = click.option("--states", default=25, show_default=True, type=click.IntRange(1))(f)
    f = click.option("--warmup", default=20, show_default=True, type=click.IntRange(0))(f)
    f = click.option("--days", default=365, show_default=True, type=click.IntRange(1))(f)
    f = click.option("--no-crn", is_flag=True, help="Independent streams per policy.")(f)
    return f


@click.group()
@click.version_option(__version__)
def main():
    """Home-care nurse scheduling: ALP parameters, policies, simulation and bounds."""


@main.command()
@instance_opt
@click.option("--out", default=None, help="Optional output directory for a summary.")
@_command
def validate(instance, out):
    """Check an instance document and print its derived sizes."""
    inst = _load(instance)
    summary = {"valid": True, "regions": inst.L, "types": inst.K, "horizon": inst.horizon,
               "max_visits": inst.jmax, "daily_demand_h": round(inst.daily_demand, 6),
               "state_coordinates": int(inst.valid_mask().sum()) + inst.K * inst.L}
    if out:
        run = Run("validate", instance, out, None, {})
        run.write_json("summary.json", summary)
        run.finish()
    else:
        click.echo(json.dumps(summary))


@main.command("solve-alp")
@instance_opt
@variant_opt
@click.option("--eps", default=None, type=click.FloatRange(0), help="State-relevance weight.")
@click.option("--pricing", default="exact", type=click.Choice(["exact", "mip-highs", "mip-bb"]))
@out_opt
@_command
def solve_alp(instance, variant, eps, pricing, out):
    """Compute ALP parameters by column generation."""
    from .alp import column_generation
    inst = _load(instance)
    if eps is None:
        eps = float(inst.lam.sum()) / (inst.K * inst.L)
    run = Run("solve-alp", instance, out, None, {"variant": variant, "eps": eps, "pricing": pricing})
    res = run.timed("column_generation", column_generation, inst, eps, variant, pricing)
    res.params.meta["manifest"] = "manifest.json"
    res.params.meta.pop("seconds", None)
    run.write_json("params.json", res.params.to_json(inst))
    run.finish()


@main.command("closed-form")
@instance_opt
@out_opt
@_command
def closed_form(instance, out):
    """Analytic parameters of the accept-all special case, with their dual certificate."""
    from .alp import closed_form_params, dual_certificate, special_case_problems
    inst = _load(instance)
    bad = special_case_problems(inst)
    if bad:
        raise CliError("instance is not a special case", bad, EXIT_INPUT)
    run = Run("closed-form", instance, out, None, {})
    params = closed_form_params(inst)
    cert = dual_certificate(inst)
    params.meta.update(certificate_valid=bool(cert.valid), certificate_lhs=float(cert.lhs),
                       certificate_bound=float(cert.bound), manifest="manifest.json")
    run.write_json("params.json", params.to_json(inst))
    run.finish()


@main.command("tune-eps")
@instance_opt
@variant_opt
@seed_opt
@sim_opts
@click.option("--max-evals", default=40, show_default=True, type=click.IntRange(1))
@out_opt
@_command
def tune_eps(instance, variant, seed, states, warmup, days, no_crn, max_evals, out):
    """Search the state-relevance weight by simulating each distinct ALP policy."""
    from .alp import tune_epsilon
    from .sim import SimConfig, alp_evaluator
    inst = _load(instance)
    cfg = SimConfig(states, warmup, days, seed, not no_crn)
    run = Run("tune-eps", instance, out, seed, {"variant": variant, "states": states,
                                                 "warmup": warmup, "days": days,
                                                 "max_evals": max_evals})
    res = run.timed("tuning", tune_epsilon, inst, alp_evaluator(inst, cfg), variant,
                    max_evals=max_evals)
    rows = ["eps,policy,mean,se,rejection_hours,diversion_hours,accepted,arrivals"]
    for p in res.trace:
        e = p.evaluation
        rows.append(f"{p.eps:.6f},{p.policy},{e.mean:.6f},{e.se:.6f},{e.reject_hours:.6f},"
                    f"{e.divert_hours:.6f},{e.accepted},{e.arrivals}")
    run.write("report.csv", "\n".join(rows) + "\n")
    md = ["| eps | Value (SE) | Rejection hours | Diversion hours |", "|---|---|---|---|"]
    for p in res.trace:
        e = p.evaluation
        md.append(f"| {p.eps:.4f} | {e.mean:.2f} ({e.se:.2f}) | {e.reject_hours:.3f} | "
                  f"{e.divert_hours:.3f} |")
    md.append("")
    md.append(f"Best eps = {res.eps:.6f}; stop reason: {res.reason}"
              + (" (flagged)" if res.flagged else ""))
    run.write("report.md", "\n".join(md) + "\n")
    res.params.meta.update(eps=res.eps, manifest="manifest.json")
    res.params.meta.pop("seconds", None)
    run.write_json("params.json", res.params.to_json(inst))
    run.finish()


@main.command("tune-sb")
@instance_opt
@seed_opt
@sim_opts
@click.option("--scenarios", default=100, show_default=True, type=click.IntRange(1))
@out_opt
@_command
def tune_sb(instance, seed, states, warmup, days, no_crn, scenarios, out):
    """Pick the SB acceptance threshold from 0, 10, ..., 100."""
    from .policies import tune_sb_threshold
    from .sim import SimConfig
    inst = _load(instance)
    cfg = SimConfig(states, warmup, days, seed, not no_crn)
    run = Run("tune-sb", instance, out, seed, {"states": states, "warmup": warmup, "days": days,
                                                "scenarios": scenarios})
    res = run.timed("tuning", tune_sb_threshold, inst, cfg, n_scenarios=scenarios)
    rows = ["threshold,mean"] + [f"{c},{m:.6f}" for c, m in res.means.items()]
    run.write("report.csv", "\n".join(rows) + "\n")
    run.write("report.md", "| N_tr | Mean value |\n|---|---|\n"
              + "".join(f"| {c} | {m:.2f} |\n" for c, m in res.means.items())
              + f"\nSelected N_tr = {res.threshold} ({res.runs} simulations)\n")
    run.finish()


def _policy_options(f):
    f = click.option("--params", "params_path", default=None, help="ALP parameters JSON.")(f)
    f = click.option("--eps", default=None, type=click.FloatRange(0))(f)
    f = click.option("--scenarios", default=100, show_default=True, type=click.IntRange(1))(f)
    f = click.option("--threshold", default=50, show_default=True, type=click.IntRange(0))(f)
    return f


@main.command()
@instance_opt
@click.option("--policies", default="myopic", show_default=True, help="Comma-separated list.")
@variant_opt
@_policy_options
@seed_opt
@sim_opts
@out_opt
@_command
def simulate(instance, policies, variant, params_path, eps, scenarios, threshold, seed, states,
             warmup, days, no_crn, out):
    """Estimate discounted values and daily metrics of each policy."""
    from .sim import METRICS, SimConfig, Streams, estimate_value, initial_states
    inst = _load(instance)
    cfg = SimConfig(states, warmup, days, seed, not no_crn)
    names = [p.strip() for p in policies.split(",") if p.strip()]
    pols = _policies(names, inst, lambda: _params(inst, params_path, eps, variant), scenarios,
                     threshold)
    run = Run("simulate", instance, out, seed, {"policies": names, "states": states,
                                                 "warmup": warmup, "days": days})
    starts = run.timed("warmup", initial_states, inst, cfg)
    rows = ["state,policy,value," + ",".join(METRICS)]
    for name, pol in pols.items():
        for i, s in enumerate(starts):
            est = estimate_value(s, pol, inst, days, Streams(seed, i, name, cfg.crn))
            m = est.mean_metrics()
            rows.append(f"{i},{name},{est.value:.6f}," + ",".join(f"{m[k]:.6f}" for k in METRICS))
    run.write("report.csv", "\n".join(rows) + "\n")
    run.finish()


@main.command()
@instance_opt
@click.option("--policies", default="alp,myopic", show_default=True)
@click.option("--ref", "reference", default="myopic", show_default=True)
@variant_opt
@_policy_options
@seed_opt
@sim_opts
@click.option("--jobs", default=None, type=int, help="Worker processes (default: all cores).")
@out_opt
@_command
def compare(instance, policies, reference, variant, params_path, eps, scenarios, threshold, seed,
            states, warmup, days, no_crn, jobs, out):
    """Paired comparison of policies against a reference (Gap% with SD)."""
    from .sim import SimConfig, compare_policies
    inst = _load(instance)
    names = [p.strip() for p in policies.split(",") if p.strip()]
    if reference not in names:
        raise CliError(f"reference {reference!r} is not among the policies", code=EXIT_INPUT)
    cfg = SimConfig(states, warmup, days, seed, not no_crn)
    pols = _policies(names, inst, lambda: _params(inst, params_path, eps, variant), scenarios,
                     threshold)
    run = Run("compare", instance, out, seed, {"policies": names, "ref": reference,
                                                "states": states, "warmup": warmup, "days": days,
                                                "crn": not no_crn})
    rep = run.timed("simulation", compare_policies, inst, pols, reference, cfg, _jobs(jobs))
    run.write("report.csv", rep.to_csv())
    run.write("report.md", rep.to_markdown() + "\n<!-- manifest.json -->\n")
    run.finish()


@main.command()
@instance_opt
@click.option("--policy", default="alp", show_default=True)
@variant_opt
@_policy_options
@seed_opt
@click.option("--states", default=5, show_default=True, type=click.IntRange(1))
@click.option("--warmup", default=20, show_default=True, type=click.IntRange(0))
@click.option("--paths", default=20, show_default=True, type=click.IntRange(1))
@out_opt
@_command
def bound(instance, policy, variant, params_path, eps, scenarios, threshold, seed, states, warmup,
          paths, out):
    """Perfect-information lower bound and the policy's gap to it."""
    from .bounds import estimate_gap
    from .sim import SimConfig, initial_states
    inst = _load(instance)
    pol = _policies([policy], inst, lambda: _params(inst, params_path, eps, variant), scenarios,
                    threshold)[policy]
    run = Run("bound", instance, out, seed, {"policy": policy, "states": states,
                                              "warmup": warmup, "paths": paths})
    starts = initial_states(inst, SimConfig(states, warmup, 1, seed))
    rep = run.timed("bound", estimate_gap, inst, starts, paths, pol, seed)
    run.write("report.csv", rep.to_csv())
    run.write("report.md", "| Policy | Gap% (SD) | LB <= UB on all pairs |\n|---|---|---|\n"
              f"| {policy} | {rep.mean_gap:.2f}% ({rep.sd_gap:.2f}%) | "
              f"{'yes' if rep.dominance_holds else 'NO'} |\n")
    run.finish()


@main.command()
@instance_opt
@variant_opt
@click.option("--params", "params_path", default=None)
@click.option("--eps", default=None, type=click.FloatRange(0))
@out_opt
@_command
def classify(instance, variant, params_path, eps, out):
    """Label every (type, region) as always-accept, maybe or always-reject."""
    from .policies import classify_regions
    inst = _load(instance)
    params = _params(inst, params_path, eps, variant)
    labels = classify_regions(params, inst)
    run = Run("classify", instance, out, None, {"variant": variant, "eps": eps})
    d0 = inst.geometry.depot_dist
    rows = ["type,region,depot_distance,label"]
    rows += [f"{k},{l},{d0[l]:.6f},{labels[k, l]}" for k in range(inst.K) for l in range(inst.L)]
    run.write("report.csv", "\n".join(rows) + "\n")
    run.finish()


if __name__ == "__main__":
    main()
