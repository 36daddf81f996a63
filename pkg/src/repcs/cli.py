"""``repcs`` command line: calibrate, detect, simulate, evaluate.

Every subcommand reads a YAML config (``--config``); flags override it.  All
outputs go under ``<out>/<run_id>/`` next to a snapshot of the resolved
config.  Exit codes: 0 ok, 1 validation/usage, 2 backend/transport,
3 a simulated bound was violated.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import os
import sys

import yaml

from . import evalkit, simlab
from .backends import HttpBackend, Label, QueryCase, ReplayBackend, SyntheticBackend, make_population
from .calibrate import calibrate, estimate_gamma, load_calibration, save_calibration
from .detector import BackendFailure, Decision, RunLog, detect_batch, read_run_log, score_output
from .dist import ScoreMode
from .errors import ArgumentError, CapabilityError, ConfigurationError, DomainError, ParseError, TransportError

EXIT_OK, EXIT_USAGE, EXIT_BACKEND, EXIT_EXPERIMENT = 0, 1, 2, 3

DEFAULTS = {
    "run_id": "run",
    "seed": 0,
    "mode": "fullvocab",
    "alpha": 0.05,
    "epsilon": 0.05,
    "delta": None,
    "concurrency": 1,
    "backend": {"kind": "synthetic", "vocab": 50, "t_len": 16, "concentration": 5.0},
    "calibration": {"n_clean": 500},
    "detect": {"n_clean": 1000, "n_memorised": 1000},
    "evaluate": {"ks": [10], "tprs": [0.95], "noise_sigmas": None},
    "simulate": {},
    "paths": {"out": "runs", "calibration": None, "run_log": None},
}


class ValidationError(ConfigurationError):
    pass


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args):
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            cfg = _merge(cfg, yaml.safe_load(fh) or {})
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["paths"]["out"] = args.out
    if args.run_id is not None:
        cfg["run_id"] = args.run_id
    if args.calibration is not None:
        cfg["paths"]["calibration"] = args.calibration
    if getattr(args, "mode", None):
        cfg["mode"] = args.mode
    if getattr(args, "run_log", None):
        cfg["paths"]["run_log"] = args.run_log
    ScoreMode(cfg["mode"])
    if not 0 < cfg["alpha"] < 1 or not 0 < cfg["epsilon"] < 1:
        raise DomainError("alpha and epsilon must lie in (0, 1)")
    return cfg


def run_dir(cfg):
    return os.path.join(cfg["paths"]["out"], str(cfg["run_id"]))


def calibration_path(cfg):
    return cfg["paths"]["calibration"] or os.path.join(run_dir(cfg), "calibration.json")


def run_log_path(cfg):
    return cfg["paths"]["run_log"] or os.path.join(run_dir(cfg), "records.jsonl")


def snapshot(cfg, directory, command):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, f"{command}.config.yaml"), "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def _created_at():
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible artifacts
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        return _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc).isoformat()
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def make_backend(cfg):
    b = cfg["backend"]
    kind = b.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticBackend(b["vocab"], b["t_len"], cfg["seed"], b.get("concentration", 5.0))
    if kind == "replay":
        return ReplayBackend(b["path"])
    if kind == "http":
        return HttpBackend(
            b["endpoint"],
            b["model"],
            t_len=b.get("t_len", 64),
            top_logprobs=b.get("top_logprobs", 5),
            timeout=b.get("timeout", 30.0),
            completions_path=b.get("completions_path", "/v1/completions"),
            api_key_env=b.get("api_key_env", "REPCS_API_KEY"),
            top_k_passages=b.get("top_k_passages", 4),
            max_in_flight=b.get("max_in_flight", 4),
        )
    raise ConfigurationError(f"unknown backend kind {kind!r}")


def load_cases(path):
    cases = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                cases.append(
                    QueryCase(
                        rec["query_id"],
                        rec.get("prompt", ""),
                        tuple(rec.get("passages", ())),
                        Label(rec.get("label", "unknown")),
                        rec.get("true_eta"),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ParseError(str(exc), line=lineno) from None
    return cases


def cases_for(cfg, backend, stage):
    kind = cfg["backend"].get("kind", "synthetic")
    if kind == "replay":
        return backend.cases()
    if kind == "http":
        key = "calibration_queries" if stage == "calibrate" else "queries"
        return load_cases(cfg["backend"][key])
    if stage == "calibrate":
        return make_population(cfg["calibration"]["n_clean"], 0, seed=cfg["seed"], prefix="cal")
    d = cfg["detect"]
    return make_population(d["n_clean"], d["n_memorised"], seed=cfg["seed"] + 1, prefix="det")


def cmd_calibrate(cfg):
    backend = make_backend(cfg)
    cases = cases_for(cfg, backend, "calibrate")
    bad = [c.query_id for c in cases if c.label is not Label.CLEAN]
    if bad:
        raise ValidationError(f"calibration accepts clean queries only; offending ids: {', '.join(bad[:20])}")
    if not cases:
        raise ValidationError("no calibration cases")
    mode = ScoreMode(cfg["mode"])
    outputs = []
    for case in cases:
        try:
            outputs.append(backend.dual_pass(case))
        except (TransportError, CapabilityError) as exc:
            raise BackendFailure(case.query_id, exc) from exc
    scores = [score_output(o, mode).total for o in outputs]
    gamma = estimate_gamma([(o.rag, o.parametric) for o in outputs])
    result = calibrate(
        scores,
        alpha=cfg["alpha"],
        epsilon=cfg["epsilon"],
        gamma_hat=gamma,
        t_len=outputs[0].rag.length,
        delta_hat=cfg.get("delta"),
        backend_fingerprint=backend.fingerprint,
        created_at=_created_at(),
    )
    path = calibration_path(cfg)
    save_calibration(result, path)
    snapshot(cfg, os.path.dirname(os.path.abspath(path)), "calibrate")
    print(f"tau={result.tau:.6g} gamma_hat={result.gamma_hat:.6g} dkw_width={result.dkw_width:.6g} n={result.n}")
    print(f"wrote {path}")
    return result


def cmd_detect(cfg, tau_override=None, force=False):
    calib = load_calibration(calibration_path(cfg))
    backend = make_backend(cfg)
    cases = cases_for(cfg, backend, "detect")
    with RunLog(run_log_path(cfg)) as log:
        snapshot(cfg, run_dir(cfg), "detect")
        records = detect_batch(
            cases,
            backend,
            calib,
            mode=cfg["mode"],
            concurrency=cfg["concurrency"],
            run_log=log,
            force=force,
            tau=tau_override,
        )
    flagged = sum(r.decision is Decision.MEMORISED for r in records)
    grounded = sum(r.decision is Decision.GROUNDED for r in records)
    errors = sum(r.decision is None for r in records)
    print(f"scored {len(records)}: memorised={flagged} grounded={grounded} errors={errors}")
    print(f"wrote {run_log_path(cfg)}")
    return records


def cmd_evaluate(cfg):
    records = read_run_log(run_log_path(cfg))
    ev = cfg["evaluate"]
    noise = None
    if ev.get("noise_sigmas"):
        backend = make_backend(cfg)
        cases = cases_for(cfg, backend, "detect")
        noise = evalkit.noise_sweep([(c, backend.dual_pass(c)) for c in cases], ev["noise_sigmas"], cfg["seed"])
    report = evalkit.evaluate(records, ks=ev["ks"], tprs=ev["tprs"], noise=noise)
    out = os.path.join(run_dir(cfg), "evaluation")
    evalkit.write_report(report, out)
    snapshot(cfg, out, "evaluate")
    print(json.dumps(report.to_dict(), indent=2))
    return report


def cmd_simulate(cfg, name, trials=None):
    if name not in simlab.REGISTRY:
        raise ArgumentError(f"unknown experiment {name!r}; available: {', '.join(sorted(simlab.REGISTRY))}")
    overrides = dict(cfg.get("simulate") or {})
    overrides["seed"] = cfg["seed"]
    if trials is not None:
        overrides["trials"] = trials
    report = simlab.run(name, simlab.default_config(name, **overrides))
    out = os.path.join(run_dir(cfg), name)
    simlab.write_report(report, out)
    snapshot(cfg, out, "simulate")
    status = "PASS" if report.overall_pass else "FAIL"
    print(f"{name}: {status}  ({out})")
    return report


class _Parser(argparse.ArgumentParser):
    # usage errors share exit status 1 with validation errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output root directory")
    common.add_argument("--run-id")
    common.add_argument("--calibration", help="calibration artifact path")

    parser = _Parser(prog="repcs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common]).add_argument("--mode", choices=["fullvocab", "realized"])
    det = sub.add_parser("detect", parents=[common])
    det.add_argument("--mode", choices=["fullvocab", "realized"])
    det.add_argument("--tau-override", type=float)
    det.add_argument("--force", action="store_true", help="apply a calibration fitted on another backend")
    det.add_argument("--run-log")
    sim = sub.add_parser("simulate", parents=[common])
    sim.add_argument("experiment", help=f"one of: {', '.join(sorted(simlab.REGISTRY))}")
    sim.add_argument("--trials", type=int)
    ev = sub.add_parser("evaluate", parents=[common])
    ev.add_argument("--run-log")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        cfg = load_config(args)
        if args.command == "calibrate":
            cmd_calibrate(cfg)
        elif args.command == "detect":
            cmd_detect(cfg, args.tau_override, args.force)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "simulate":
            report = cmd_simulate(cfg, args.experiment, args.trials)
            if not report.overall_pass:
                return EXIT_EXPERIMENT
    except (BackendFailure, TransportError, CapabilityError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
