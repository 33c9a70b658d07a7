"""Command-line interface.

Subcommands: keygen, generate, detect, extract, trace, experiment, analyze.
All results print as JSON on stdout.  Every command is deterministic under
--seed (or the MARKBENCH_SEED environment variable).  Exit codes: 0 success,
2 usage, 3 validation, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, experiments, fileio, lbit, multiuser, tokens, zerobit

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4


def _rng_from(args) -> np.random.Generator:
    seed = args.seed
    if seed is None:
        env = os.environ.get("MARKBENCH_SEED")
        seed = int(env) if env else None
    return np.random.default_rng(seed)


def _emit(doc: dict) -> None:
    print(fileio.canonical_json(doc))


def cmd_keygen(args) -> int:
    rng = _rng_from(args)
    if args.level == "zero":
        key = zerobit.keygen0(args.lam, rng)
    elif args.level == "lbit":
        if args.L is None:
            raise tokens.UsageError("lbit keygen requires --L")
        key = lbit.keygen_l(args.lam, args.L, rng)
    else:
        for name in ("n", "c", "delta"):
            if getattr(args, name) is None:
                raise tokens.UsageError(f"multi keygen requires --{name}")
        z = experiments.get_calibrated_z(args.lam, args.n, args.c, args.delta, args.A) if args.calibrated_z else args.z
        key = multiuser.mu_keygen(args.lam, args.n, args.c, args.delta, rng, args.A, z=z)
    if args.calibrate_hint:
        policy = zerobit.calibrated_policy(args.lam, args.calibrate_hint, args.detect_prob)
    else:
        policy = zerobit.BlockPolicy.for_security(args.lam)
    fileio.save_key(key, args.out, policy)
    header = {"level": args.level, "lambda": args.lam, "out": str(args.out),
              "entropy_threshold": policy.entropy_threshold}
    if args.level == "multi":
        header.update({"n": args.n, "L": key.L})
    if args.level == "lbit":
        header["L"] = key.L
    _emit(header)
    return EXIT_OK


def _load_for(args, want_levels: tuple[str, ...]):
    level, key, policy = fileio.load_key(args.key)
    if level not in want_levels:
        raise tokens.UsageError(
            f"key level {level!r} cannot be used here (expected {' or '.join(want_levels)})"
        )
    if policy is None:
        lam = key.lam if hasattr(key, "lam") else key.sk.lam
        policy = zerobit.BlockPolicy.for_security(lam)
    return level, key, policy


def cmd_generate(args) -> int:
    rng = _rng_from(args)
    level, key, policy = _load_for(args, ("zero", "lbit", "multi"))
    model = fileio.load_model_file(args.model)
    q = tokens.Prompt.from_text(args.prompt or "")
    if level == "zero":
        text = zerobit.wat0(key, model, q, rng, policy, max_len=args.max_len)
    elif level == "lbit":
        if not args.message:
            raise tokens.UsageError("lbit generation requires --message")
        text = lbit.encode(key, args.message, model, q, rng, policy, block_budget=args.blocks)
    else:
        if args.user is None:
            raise tokens.UsageError("multi generation requires --user")
        text = multiuser.mu_wat(key, args.user, q, model, rng, policy, block_budget=args.blocks)
    fileio.write_text_file(text, args.out)
    _emit({"out": str(args.out), "tokens": len(text)})
    return EXIT_OK


def cmd_detect(args) -> int:
    level, key, policy = _load_for(args, ("zero", "multi"))
    t_hat = fileio.read_text_file(args.infile)
    if level == "zero":
        rep = zerobit.detect0(key, t_hat, policy, detail=True)
        _emit(rep.to_json())
    else:
        detected = multiuser.mu_detect(key, t_hat, policy)
        _emit({"marked": bool(detected)})
    return EXIT_OK


def cmd_extract(args) -> int:
    level, key, policy = _load_for(args, ("lbit", "multi"))
    t_hat = fileio.read_text_file(args.infile)
    sk = key if level == "lbit" else key.sk
    fn = lbit.extract_star if args.star else lbit.extract
    m_hat = fn(sk, t_hat, policy)
    _emit({"message": str(m_hat), "erasures": m_hat.erasures()})
    return EXIT_OK


def cmd_trace(args) -> int:
    _, key, policy = _load_for(args, ("multi",))
    t_hat = fileio.read_text_file(args.infile)
    suspects = None
    if args.suspects:
        suspects = [int(x) for x in args.suspects.split(",")]
    m_hat = lbit.extract(key.sk, t_hat, policy)
    detected = not m_hat.is_blank()
    accused = sorted(multiuser.trace_message(key, m_hat, suspects=suspects))
    _emit({
        "detected": detected,
        "accused": accused,
        "erasures": m_hat.erasures(),
        "message": str(m_hat),
    })
    return EXIT_OK


def cmd_experiment(args) -> int:
    scenario = json.loads(Path(args.scenario).read_text())
    seed = args.seed
    if seed is None:
        env = os.environ.get("MARKBENCH_SEED")
        seed = int(env) if env else None
    report = experiments.run_scenario(scenario, seed=seed, jobs=args.jobs, progress=args.progress)
    if args.out:
        experiments.write_report(report, args.out)
    summary = {"kind": report["kind"], "aggregates": report["aggregates"]}
    if args.out:
        summary["out"] = str(args.out)
    if args.figures:
        summary["figures"] = experiments.render_figures(report, args.figures)
    _emit(summary)
    return EXIT_OK


def cmd_analyze(args) -> int:
    rng = _rng_from(args)
    if args.what == "kstar":
        k, branch = analysis.k_star_detail(args.L, args.delta, args.lam)
        res = analysis.simulate_empty_bins(k, args.L, args.delta, args.lam, args.trials, rng)
        doc = {
            "k_star": k,
            "branch": branch,
            "mc_failure_rate": res.failure_rate,
            "bound": math.exp(-args.lam),
        }
        if args.plot:
            _plot_bins_curve(args, k, Path(args.plot))
            doc["plot"] = str(args.plot)
        _emit(doc)
    elif args.what == "bins":
        if args.k is None:
            raise tokens.UsageError("analyze bins requires --k")
        res = analysis.simulate_empty_bins(args.k, args.L, args.delta, args.lam, args.trials, rng)
        _emit({"k": args.k, "trials": res.trials, "failure_rate": res.failure_rate})
    else:  # sbound
        if args.B is None:
            raise tokens.UsageError("analyze sbound requires --B")
        s = analysis.s_bound(args.B, args.L, args.delta, args.lam, args.trials, rng)
        _emit({"s": s, "B": args.B, "L": args.L, "delta": args.delta})
    return EXIT_OK


def _plot_bins_curve(args, k_star: int, out: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rng = np.random.default_rng(args.seed or 0)
    ks = sorted({max(1, int(k_star * f)) for f in (0.5, 0.7, 0.85, 1.0, 1.15, 1.3)})
    rates = [
        analysis.simulate_empty_bins(k, args.L, args.delta, args.lam, max(args.trials // 4, 500), rng).failure_rate
        for k in ks
    ]
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.plot(ks, rates, "o-", color="steelblue")
    ax.axvline(k_star, color="darkred", ls="--", label=f"k* = {k_star}")
    ax.axhline(math.exp(-args.lam), color="gray", ls=":", label=r"e^-lambda")
    ax.set_xlabel("balls thrown (k)")
    ax.set_ylabel("P[> delta*L bins empty]")
    ax.set_yscale("symlog", linthresh=1e-4)
    ax.legend()
    fig.tight_layout()
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="markbench", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None, help="root seed (fallback: MARKBENCH_SEED)")

    p = sub.add_parser("keygen", help="generate a key file")
    p.add_argument("level", choices=["zero", "lbit", "multi"])
    p.add_argument("--lambda", dest="lam", type=int, required=True)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--c", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--A", type=float, default=100.0, help="code length scale factor")
    p.add_argument("--z", type=float, default=None, help="accusation threshold override")
    p.add_argument("--calibrated-z", action="store_true", help="use the committed null calibration")
    p.add_argument("--calibrate-hint", type=int, default=None,
                   help="expected text length; sizes blocks for reliable detection")
    p.add_argument("--detect-prob", type=float, default=0.9)
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(fn=cmd_keygen)

    p = sub.add_parser("generate", help="produce marked text")
    p.add_argument("--key", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--prompt", default="")
    p.add_argument("--message", default=None, help="bit string for lbit keys")
    p.add_argument("--user", type=int, default=None, help="user id for multi keys")
    p.add_argument("--blocks", type=int, default=16, help="block budget")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--out", required=True)
    add_seed(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("detect", help="zero-bit / multi-user detection")
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("extract", help="extract the embedded partial message")
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--star", action="store_true", help="report both-detected indices as '*'")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("trace", help="trace text to users")
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--suspects", default=None, help="comma-separated user ids to check")
    p.set_defaults(fn=cmd_trace)

    p = sub.add_parser("experiment", help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", default=None, help="write the full report JSON (+ CSV)")
    p.add_argument("--figures", default=None, help="directory for rendered figures")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--progress", action="store_true")
    add_seed(p)
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("analyze", help="balls-and-bins quantities")
    p.add_argument("what", choices=["kstar", "bins", "sbound"])
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=int, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--B", type=int, default=None)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--plot", default=None)
    add_seed(p)
    p.set_defaults(fn=cmd_analyze)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except tokens.UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
