"""Command line front end: single sessions, parameter sweeps, code
construction, and codebook integrity checks.

Configuration lives in a JSON file whose keys mirror SessionConfig;
seeds and the authentication secret are given as strings.  The model
block either lists covariance entries directly or gives a squeezing
level in dB, and channel loss may be written in dB, which converts to
transmissivity 10^(-dB/10).  The codebook directory can be overridden
per invocation (flag beats environment beats config file).

Sweeps write one CSV row per grid point per repetition.  "model" mode
evaluates the key length equation on channel statistics synthesized
from the configured covariance (fast, no decoding); "session" mode
runs a full two-party session per point.  Rows carry a schema tag and
appends to an existing file are refused unless the header matches.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .crypto import RandomnessService, confirm_width
from .discretize import bin_values
from .errors import ChannelTooNoisyError, ConfigError, CvqkdError
from .finitekey import (compute_key_length, distance_std_bins,
                        expected_distance_bins)
from .ldpc import Codebook, build_codebook, verify_codebook
from .reconcile import (CAT_LSB, CAT_SYNDROME, conditional_entropy_fine,
                        fit_channel, select_params)
from .session import SessionConfig, run_pair
from .simulator import (default_model, effective_model, loss_db_to_eta,
                        model_from_dict, two_mode_squeezed_model)

CODEBOOK_ENV = "CVQKD_CODEBOOK_DIR"
SWEEP_SCHEMA = "cvqkd-sweep-1"
SWEEP_COLUMNS = ["schema", "mode", "variable", "x", "loss_db", "fiber_km",
                 "n_total", "k", "n_key", "d_pe", "d_pe0", "order",
                 "rate_pct", "d1", "d2", "leak_bits", "beta", "ell",
                 "key_rate", "aborted", "reason", "rep"]
FIBER_DB_PER_KM = 0.2
COUPLING_EFFICIENCY = 0.95

# stable nonzero exit identifiers, one per abort reason
ABORT_EXITS = {
    "estimation_distance": (10, "ABORT_ESTIMATION"),
    "channel_too_noisy": (11, "ABORT_RATE"),
    "reconcile": (12, "ABORT_DECODE"),
    "confirm": (13, "ABORT_CONFIRM"),
    "no_key": (14, "ABORT_LENGTH"),
    "negotiate": (15, "ABORT_NEGOTIATE"),
    "auth": (16, "ABORT_AUTH"),
    "protocol": (17, "ABORT_PROTOCOL"),
    "transport": (18, "ABORT_TRANSPORT"),
    "too_few_sifted": (19, "ABORT_SIFT"),
    "keylen": (20, "ABORT_REPORT"),
    "params": (21, "ABORT_PARAMS"),
    "model_inconsistent": (22, "ABORT_MODEL"),
    "peer_abort": (23, "ABORT_PEER"),
}
EXIT_CONFIG = 2
EXIT_VERIFY_FAILED = 3
EXIT_ABORT_OTHER = 25


def abort_exit(reason: str):
    return ABORT_EXITS.get(reason, (EXIT_ABORT_OTHER, "ABORT_OTHER"))


# ---------------------------------------------------------------------------
# configuration loading

def load_model(data):
    if data is None:
        return default_model()
    if not isinstance(data, dict):
        raise ConfigError("model must be a JSON object")
    data = dict(data)
    if "loss_db" in data:
        loss = float(data.pop("loss_db"))
        if loss < 0:
            raise ConfigError("channel loss must be >= 0 dB")
        data["eta"] = loss_db_to_eta(loss)
    try:
        if "squeezing_db" in data:
            return two_mode_squeezed_model(data.pop("squeezing_db"), **data)
        return model_from_dict(data)
    except TypeError as exc:
        raise ConfigError(f"bad model block: {exc}") from None


def load_config(path, codebook_override=None) -> SessionConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw["model"] = load_model(raw.get("model"))
    for key in ("seed_a", "seed_b", "shared_secret"):
        if key in raw:
            raw[key] = str(raw[key]).encode()
    if raw.get("allowed_orders") is not None and "allowed_orders" in raw:
        raw["allowed_orders"] = tuple(int(o) for o in raw["allowed_orders"])
    directory = codebook_override or os.environ.get(CODEBOOK_ENV) \
        or raw.get("codebook_dir")
    if not directory:
        raise ConfigError("no codebook directory: set codebook_dir in the "
                          f"config, {CODEBOOK_ENV}, or --codebook-dir")
    raw["codebook_dir"] = str(directory)
    try:
        return SessionConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad config key: {exc}") from None


def _derive(cfg: SessionConfig, suffix: str, **overrides) -> SessionConfig:
    tag = suffix.encode()
    return dataclasses.replace(cfg, seed_a=cfg.seed_a + tag,
                               seed_b=cfg.seed_b + tag, **overrides)


# ---------------------------------------------------------------------------
# run

def _result_dict(res) -> dict:
    code, token = abort_exit(res.reason) if res.aborted else (0, "OK")
    return {
        "role": res.role, "aborted": res.aborted, "status": token,
        "reason": res.reason, "detail": res.detail,
        "n_sifted": res.n_sifted, "n_key": res.n_key, "d_pe": res.d_pe,
        "params": res.params.to_dict() if res.params else None,
        "ledger": res.ledger, "ell": res.ell, "key_digest": res.key_digest,
    }


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.codebook_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res_a, res_b = run_pair(cfg, use_tcp=args.tcp)
    origin = res_a if res_a.reason != "peer_abort" else res_b
    payload = {"a": _result_dict(res_a), "b": _result_dict(res_b)}
    (out / "result.json").write_text(json.dumps(payload, indent=2) + "\n")
    for res, name in ((res_a, "a"), (res_b, "b")):
        lines = [f"{d} {n} {p} {g}" for d, n, p, g in
                 ((e.direction, e.name, e.payload_len, e.frame_digest)
                  for e in res.transcript.entries)]
        (out / f"transcript_{name}.txt").write_text("\n".join(lines) + "\n")
    if res_a.ledger:
        (out / "ledger.json").write_text(json.dumps(res_a.ledger, indent=2)
                                         + "\n")
    if res_a.report is not None:
        (out / "report.txt").write_text(res_a.report.render() + "\n")
    if not res_a.aborted and not res_b.aborted:
        (out / "key_a.bin").write_bytes(res_a.key)
        (out / "key_b.bin").write_bytes(res_b.key)
        print(f"ok ell={res_a.ell} key_sha256={res_a.key_digest}")
        print(f"artifacts in {out}")
        return 0
    code, token = abort_exit(origin.reason)
    print(f"abort {token} reason={origin.reason} detail={origin.detail}")
    print(f"artifacts in {out}")
    return code


# ---------------------------------------------------------------------------
# sweeps

def fiber_km(loss_db: float):
    """Fiber length whose attenuation plus coupling loss gives loss_db."""
    coupling_db = -10.0 * math.log10(COUPLING_EFFICIENCY)
    if loss_db < coupling_db:
        return None
    return (loss_db - coupling_db) / FIBER_DB_PER_KM


def _blank_row(mode, variable, x, rep) -> dict:
    row = {c: "" for c in SWEEP_COLUMNS}
    row.update(schema=SWEEP_SCHEMA, mode=mode, variable=variable,
               x=f"{x:g}", rep=rep, aborted=0, reason="")
    return row


def _fill_params(row, params):
    row.update(order=params.order, rate_pct=params.rate_pct, d1=params.d1,
               d2=params.d2)


def _point_config(cfg, variable, x, rep) -> SessionConfig:
    if variable == "loss":
        model = dataclasses.replace(cfg.model, eta=loss_db_to_eta(x))
        return _derive(cfg, f"/loss{x:g}/rep{rep}", model=model)
    n_total = int(round(x))
    if n_total <= cfg.k + 1:
        raise ConfigError(f"grid point {n_total} is not above k={cfg.k}")
    return _derive(cfg, f"/n{n_total}/rep{rep}", slots=2 * n_total)


def sweep_point_model(cfg: SessionConfig, codebook, variable, x, rep) -> dict:
    """Predicted operating point: statistics from the model, no protocol."""
    point = _point_config(cfg, variable, x, rep)
    n_total = point.slots // 2
    row = _blank_row("model", variable, x, rep)
    if variable == "loss":
        row.update(loss_db=f"{x:g}",
                   fiber_km="" if fiber_km(x) is None else f"{fiber_km(x):.3f}")
    spec = point.spec()
    eff = effective_model(point.model)
    # the channel is the same at every sample-count point, so one draw
    # per repetition keeps the predicted curve free of selection jitter
    tag = f"/rep{rep}" + (f"/loss{x:g}" if variable == "loss" else "")
    stream = RandomnessService(cfg.seed_a + tag.encode()).stream(
        "sweep-estimation")
    z1 = stream.normal(point.k)
    z2 = stream.normal(point.k)
    sa = math.sqrt(eff.v_a)
    values_a = sa * z1
    values_b = (eff.c / sa) * z1 + math.sqrt(eff.v_b - eff.c ** 2 / eff.v_a) * z2
    pe_a = bin_values(values_a, spec)
    pe_b = bin_values(values_b, spec)
    sigma_diff = math.sqrt(eff.difference_var)
    d_pe = expected_distance_bins(sigma_diff, spec)
    d_pe0 = point.threshold()
    n_key = n_total - point.k
    row.update(n_total=n_total, k=point.k, n_key=n_key,
               d_pe=f"{d_pe:.4f}", d_pe0=f"{d_pe0:.4f}")
    try:
        fit = fit_channel(pe_a, pe_b, spec)
        params = select_params(fit, spec, pe_a, pe_b, codebook,
                               margin=point.margin,
                               allowed_orders=point.allowed_orders)
    except ChannelTooNoisyError as exc:
        row.update(aborted=1, reason=f"channel_too_noisy: {exc}")
        return row
    _fill_params(row, params)
    leak = params.leak_per_symbol * n_key \
        + confirm_width(2 * n_key, point.epsilon_c)
    report = compute_key_length(
        n_key, point.k, spec, point.length_model(), d_pe0, leak,
        sample_std=distance_std_bins(sigma_diff, spec),
        range_bound=float(spec.bins - 1))
    beta = conditional_entropy_fine(fit, spec) / params.leak_per_symbol
    row.update(leak_bits=f"{leak:.1f}", beta=f"{beta:.4f}",
               ell=f"{report.ell:.1f}", key_rate=f"{report.ell / n_total:.6f}")
    return row


def sweep_point_session(cfg: SessionConfig, variable, x, rep) -> dict:
    point = _point_config(cfg, variable, x, rep)
    row = _blank_row("session", variable, x, rep)
    if variable == "loss":
        row.update(loss_db=f"{x:g}",
                   fiber_km="" if fiber_km(x) is None else f"{fiber_km(x):.3f}")
    row.update(k=point.k)
    res_a, res_b = run_pair(point)
    origin = res_a if res_a.reason != "peer_abort" else res_b
    row.update(n_total=res_a.n_sifted or "", n_key=res_a.n_key or "",
               d_pe="" if res_a.d_pe is None else f"{res_a.d_pe:.4f}",
               d_pe0=f"{point.threshold():.4f}")
    if res_a.params is not None:
        _fill_params(row, res_a.params)
    if res_a.report is not None:
        row.update(leak_bits=f"{res_a.report.leak_bits:.1f}",
                   ell=f"{res_a.report.ell:.1f}")
    if res_a.fit is not None and res_a.ledger.get(CAT_SYNDROME):
        h_cond = conditional_entropy_fine(res_a.fit, point.spec())
        disclosed = (res_a.ledger[CAT_LSB] + res_a.ledger[CAT_SYNDROME]) \
            / res_a.n_key
        row.update(beta=f"{h_cond / disclosed:.4f}")
    if origin.aborted:
        row.update(aborted=1, reason=origin.reason)
    else:
        row.update(key_rate=f"{res_a.ell / res_a.n_sifted:.6f}")
    return row


def write_rows(path, rows) -> None:
    header = ",".join(SWEEP_COLUMNS)
    path = Path(path)
    exists = path.exists() and path.stat().st_size > 0
    if exists:
        with open(path) as fh:
            if fh.readline().strip() != header:
                raise ConfigError(f"{path} carries a different sweep schema")
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        if not exists:
            writer.writeheader()
        writer.writerows(rows)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.codebook_dir)
    try:
        grid = [float(v) for v in args.grid.split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"bad grid: {exc}") from None
    if not grid:
        raise ConfigError("sweep grid is empty")
    if args.variable == "loss" and min(grid) < 0:
        raise ConfigError("loss values must be >= 0 dB")
    points = [(x, rep) for x in grid for rep in range(args.repetitions)]
    if args.mode == "model":
        codebook = Codebook(cfg.codebook_dir, orders=cfg.allowed_orders)

        def job(item):
            return sweep_point_model(cfg, codebook, args.variable, *item)
    else:
        def job(item):
            return sweep_point_session(cfg, args.variable, *item)

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(job, points))
    write_rows(args.out, rows)
    for row in rows:
        status = row["reason"] if row["aborted"] else f"ell={row['ell']}"
        print(f"{args.variable}={row['x']} rep={row['rep']} {status}")
    print(f"{len(rows)} rows -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# codebook maintenance

def parse_rates(text: str):
    if ":" in text:
        try:
            start, stop, step = (float(v) for v in text.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad rate range: {exc}") from None
        count = int(round((stop - start) / step)) + 1
        rates = [round(start + i * step, 4) for i in range(count)]
    else:
        try:
            rates = [float(v) for v in text.split(",") if v]
        except ValueError as exc:
            raise ConfigError(f"bad rate list: {exc}") from None
    if not rates or any(not 0 < r < 1 for r in rates):
        raise ConfigError("rates must lie strictly between 0 and 1")
    return rates


def cmd_makecodes(args) -> int:
    orders = [int(v) for v in args.orders.split(",") if v]
    rates = parse_rates(args.rates)
    directory = args.dir or os.environ.get(CODEBOOK_ENV)
    if not directory:
        raise ConfigError(f"give --dir or set {CODEBOOK_ENV}")
    written, infeasible = build_codebook(
        directory, orders, rates, args.n, args.seed.encode(),
        progress=lambda o, r, p: print(f"built gf{o} rate {r:.2f} -> {p}"))
    print(f"{len(written)} new files in {directory}")
    for order, rate, msg in infeasible:
        print(f"infeasible: gf{order} rate {rate:.2f}: {msg}")
    return 0


def cmd_verify(args) -> int:
    directory = args.dir or os.environ.get(CODEBOOK_ENV)
    if not directory:
        raise ConfigError(f"give --dir or set {CODEBOOK_ENV}")
    report = verify_codebook(directory)
    if not report:
        print(f"no code files in {directory}")
        return EXIT_VERIFY_FAILED
    bad = 0
    for path, ok, message in report:
        print(f"{'ok  ' if ok else 'FAIL'} {path} {message}")
        bad += not ok
    if bad:
        print(f"{bad} of {len(report)} files failed verification")
        return EXIT_VERIFY_FAILED
    print(f"fingerprint {Codebook(directory).fingerprint().hex()}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvqkd",
        description="Two-party key distillation over a simulated Gaussian "
                    "channel: run sessions, sweep parameters, manage codes.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one two-party session")
    run.add_argument("--config", required=True, help="JSON config file")
    run.add_argument("--out", default="cvqkd-run", help="artifact directory")
    run.add_argument("--tcp", action="store_true",
                     help="connect the parties over a local socket")
    run.add_argument("--codebook-dir", help="override the code directory")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="grid of operating points to CSV")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--variable", choices=("samples", "loss"),
                       required=True)
    sweep.add_argument("--grid", required=True,
                       help="comma-separated values, e.g. 1e5,1e6,1e7")
    sweep.add_argument("--mode", choices=("model", "session"),
                       default="model")
    sweep.add_argument("--repetitions", type=int, default=1)
    sweep.add_argument("--jobs", type=int, default=1,
                       help="sweep points evaluated in parallel")
    sweep.add_argument("--out", required=True, help="CSV output path")
    sweep.add_argument("--codebook-dir")
    sweep.set_defaults(func=cmd_sweep)

    make = sub.add_parser("makecodes", help="construct a code grid")
    make.add_argument("--dir", help="target directory")
    make.add_argument("--orders", default="32,64,128,256")
    make.add_argument("--rates", default="0.50:0.94:0.02",
                      help="comma list or start:stop:step")
    make.add_argument("--n", type=int, default=10_000)
    make.add_argument("--seed", default="codebook-v1")
    make.set_defaults(func=cmd_makecodes)

    verify = sub.add_parser("verify-codebook",
                            help="check every code file's integrity")
    verify.add_argument("--dir")
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CvqkdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
