"""``pilotwave`` command line.

Every command that writes ``--out PATH`` also writes ``PATH.manifest.json``
with the seed, QAOA schedule, noise parameters and ``git describe`` output.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import analysis as A
from . import baselines as B
from . import kernels
from . import noise as N
from . import problems as P
from . import qaoa as Q
from . import sampler as S
from .tensornet import get_engine

TOPOLOGIES = ("grid", "king", "chimera", "heavy-hex", "random-3-regular")


# -- helpers --------------------------------------------------------------------------


def git_describe() -> str:
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                           capture_output=True, text=True, timeout=10)
        return r.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _model(args) -> P.IsingModel:
    if getattr(args, "problem", None):
        return P.load_model(args.problem)
    graph = P.topology_for_size(args.topology, args.size, args.problem_seed)
    return P.gaussian_ising(graph, args.problem_seed)


def _params(args) -> Q.QaoaParams:
    if args.gamma and args.beta:
        gammas, betas = args.gamma, args.beta
    elif args.gamma or args.beta:
        raise SystemExit("give both --gamma and --beta, once per layer")
    else:
        try:
            sched = Q.default_schedule(args.p, args.dgamma, args.dbeta)
        except Q.OutOfRange as exc:
            raise SystemExit(f"{exc}; pass --gamma/--beta explicitly") from None
        gammas, betas = sched.gammas, sched.betas
    try:
        return Q.QaoaParams(args.p, gammas, betas)
    except ValueError as exc:
        raise SystemExit(str(exc)) from None


def _noise(args) -> N.NoiseModel:
    return N.load_noise_config(args.noise_config) if args.noise_config else N.standard_model()


def _open_out(args, binary=False):
    if not args.out or args.out == "-":
        return sys.stdout.buffer if binary else sys.stdout
    return open(args.out, "wb" if binary else "w")


def write_manifest(args, extra: dict | None = None) -> None:
    if not args.out or args.out == "-":
        return
    info = {
        "command": args.command,
        "argv": sys.argv[1:],
        "seed": args.seed,
        "workers": getattr(args, "workers", 1),
        "git_describe": git_describe(),
        "kernel_backend": kernels.BACKEND,
    }
    for key in ("topology", "size", "problem", "problem_seed", "p", "shots"):
        if hasattr(args, key):
            info[key] = getattr(args, key)
    info.update(extra or {})
    Path(args.out + ".manifest.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")


def _schedule_info(params: Q.QaoaParams) -> dict:
    return {"schedule": {"p": params.p, "gammas": list(params.gammas), "betas": list(params.betas)}}


def _noise_info(model: N.NoiseModel | None) -> dict:
    return {"noise": dataclasses.asdict(model) if model is not None else None}


def write_samples(args, bits: np.ndarray, seeds, calls, model: P.IsingModel) -> None:
    e = P.energies(model, bits) if len(bits) else np.zeros(0)
    fmt = args.format
    if fmt == "bin":
        out = _open_out(args, binary=True)
        out.write(np.packbits(bits, axis=1).tobytes())
    else:
        out = _open_out(args)
        if fmt == "csv":
            out.write("bits,seed,oracle_calls,energy\n")
        for row, s, c, en in zip(bits, seeds, calls, e):
            b = S.bits_to_str(row)
            if fmt == "csv":
                out.write(f"{b},{int(s)},{int(c)},{float(en)!r}\n")
            else:
                out.write(json.dumps({"bits": b, "seed": int(s), "oracle_calls": int(c),
                                      "energy": float(en)}) + "\n")
    if out not in (sys.stdout, sys.stdout.buffer):
        out.close()
    else:
        out.flush()


def _dump_plans(path: str, circuit) -> None:
    eng = get_engine(circuit)
    with open(path, "w") as fh:
        for (t, open_q), lay in sorted(eng._layouts.items()):
            fh.write(f"# prefix {t} open {','.join(map(str, open_q)) or '-'}\n")
            fh.write(lay.plan.dumps())


def _emit(args, text: str) -> None:
    out = _open_out(args)
    out.write(text)
    if out is not sys.stdout:
        out.close()


# -- commands ----------------------------------------------------------------------------


def cmd_sample(args) -> int:
    model = _model(args)
    params = _params(args)
    circ = Q.build_qaoa(model, params)
    seeds, bits, calls = S.sample_arrays(circ, args.shots, args.seed, args.workers)
    write_samples(args, bits, seeds, calls, model)
    if args.dump_plan:
        _dump_plans(args.dump_plan, circ)
    write_manifest(args, {**_schedule_info(params), **_noise_info(None)})
    return 0


def cmd_noisy_sample(args) -> int:
    model = _model(args)
    params = _params(args)
    nm = _noise(args)
    noisy = N.insert_noise(Q.build_qaoa(model, params), nm)
    seeds, bits, calls = N.noisy_sample_arrays(noisy, args.shots, args.seed, args.workers)
    write_samples(args, bits, seeds, calls, model)
    if args.dump_plan:
        _dump_plans(args.dump_plan, noisy.base)
    write_manifest(args, {**_schedule_info(params), **_noise_info(nm)})
    return 0


def _payload(args, model, params):
    circ = Q.build_qaoa(model, params)
    if args.noisy or args.noise_config:
        nm = _noise(args)
        return N.insert_noise(circ, nm), nm
    return circ, None


def cmd_gs_prob(args) -> int:
    model = _model(args)
    params = _params(args)
    payload, nm = _payload(args, model, params)
    gs_bits, gs_e = P.exhaustive_ground_state(model)
    stream = S.sample_stream(payload, args.seed, args.chunk, args.workers)
    est = A.gs_probability(stream, gs_e, model, args.min_hits, int(args.cap))
    res = {"n": model.n, "p": params.p, "gs_bits": gs_bits, "gs_energy": gs_e,
           "estimate": est.estimate, "hits": est.hits, "samples_used": est.samples_used,
           "truncated": est.truncated, "uniform_baseline": 2.0 ** -model.n}
    _emit(args, json.dumps(res) + "\n")
    write_manifest(args, {**_schedule_info(params), **_noise_info(nm)})
    return 0


def cmd_boltzmann_fit(args) -> int:
    model = _model(args)
    params = _params(args)
    payload, nm = _payload(args, model, params)
    if isinstance(payload, N.NoisyCircuit):
        bits = N.noisy_sample_arrays(payload, args.shots, args.seed, args.workers)[1]
    else:
        bits = S.sample_arrays(payload, args.shots, args.seed, args.workers)[1]
    fit = A.fit_beta(bits, model, args.window_quantile)
    hist = A.energy_histogram(P.energies(model, bits), args.bins)
    res = {"beta": fit.beta, "window": list(fit.window), "r2": fit.r2, "states_in_window": fit.n_states,
           "levels_in_window": fit.n_levels, "shots": args.shots}
    print(json.dumps(res))
    if args.out:
        _emit(args, hist.to_csv())
    write_manifest(args, {**_schedule_info(params), **_noise_info(nm), "fit": res})
    return 0


def cmd_compare(args) -> int:
    model = _model(args)
    algs = args.algorithm or ["qaoa:p=1", "hastings:steps=1", "uniform", "anneal"]
    nm = _noise(args)
    res = A.compare_experiment(model, algs, args.repetitions, args.batch, args.seed, args.workers, nm)
    table = A.compare_table(res)
    names = list(res)
    for row in table:
        if len(names) > 1:
            ref = names[0]
            row[f"ks_vs_{ref}"] = A.ks_statistic(res[row["algorithm"]], res[ref])
    sys.stdout.write(A.rows_to_csv(table))
    if args.out:
        _emit(args, A.best_energy_csv(res))
    extra = {"algorithms": names, "repetitions": args.repetitions, "batch": args.batch,
             "hastings_c": B.HASTINGS_C, "anneal_betas": list(B.ANNEAL_BETAS)}
    if any(":noisy" in a for a in names):
        extra.update(_noise_info(nm))
    write_manifest(args, extra)
    return 0


def cmd_timing(args) -> int:
    topos = args.topology or ["grid", "king", "heavy-hex", "random-3-regular"]
    sizes = args.size or [16]
    nm = _noise(args) if (args.noisy or args.noise_config) else None
    rows = A.timing_sweep(topos, sizes, args.p, args.batch, nm, args.instances, args.seed, args.workers)
    _emit(args, A.rows_to_csv(rows))
    write_manifest(args, {**_noise_info(nm), "instances": args.instances, "batch": args.batch})
    return 0


def cmd_gen_problem(args) -> int:
    model = _model(args)
    _emit(args, P.dumps_model(model))
    write_manifest(args, {"n": model.n, "edges": len(model.graph.edges)})
    return 0


def cmd_verify(args) -> int:
    from . import verify

    ok = verify.run(args.circuits, args.shots, args.seed, args.workers, sys.stdout)
    return 0 if ok else 1


# -- parser -------------------------------------------------------------------------------


def _common(sp, problem=True, qaoa=True):
    sp.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    sp.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    sp.add_argument("--out", help="output file (default stdout)")
    if problem:
        sp.add_argument("--topology", choices=TOPOLOGIES, default="grid")
        sp.add_argument("--size", type=int, default=16, help="approximate number of vertices")
        sp.add_argument("--problem", help="model file written by gen-problem (overrides topology/size)")
        sp.add_argument("--problem-seed", type=int, default=0, help="seed of the Gaussian instance")
    if qaoa:
        sp.add_argument("--p", type=int, default=1, help="QAOA depth")
        sp.add_argument("--gamma", type=float, action="append", help="repeat once per layer")
        sp.add_argument("--beta", type=float, action="append", help="repeat once per layer")
        sp.add_argument("--dgamma", type=float, default=-0.7,
                        help="gamma ramp scale when no --gamma is given (negative minimizes energy)")
        sp.add_argument("--dbeta", type=float, default=0.7, help="beta ramp scale when no --beta is given")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pilotwave", description="Exact sampling of QAOA circuits.")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn in (("sample", cmd_sample), ("noisy-sample", cmd_noisy_sample)):
        sp = sub.add_parser(name, help=f"{'noisy ' if 'noisy' in name else ''}QAOA samples")
        _common(sp)
        sp.add_argument("--shots", type=int, default=1000)
        sp.add_argument("--format", choices=("jsonl", "csv", "bin"), default="jsonl")
        sp.add_argument("--dump-plan", help="write the contraction plans used to this file")
        if name == "noisy-sample":
            sp.add_argument("--noise-config", help="key = value file (defaults to the standard device model)")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("gs-prob", help="ground-state probability with the hit-count stopping rule")
    _common(sp)
    sp.add_argument("--min-hits", type=int, default=10)
    sp.add_argument("--cap", type=float, default=A.GS_SAMPLE_CAP)
    sp.add_argument("--chunk", type=int, default=S.BLOCK)
    sp.add_argument("--noisy", action="store_true")
    sp.add_argument("--noise-config")
    sp.set_defaults(func=cmd_gs_prob)

    sp = sub.add_parser("boltzmann-fit", help="effective inverse temperature of the low-energy tail")
    _common(sp)
    sp.add_argument("--shots", type=int, default=100_000)
    sp.add_argument("--window-quantile", type=float, default=A.DEFAULT_WINDOW)
    sp.add_argument("--bins", type=int, default=50)
    sp.add_argument("--noisy", action="store_true")
    sp.add_argument("--noise-config")
    sp.set_defaults(func=cmd_boltzmann_fit)

    sp = sub.add_parser("compare", help="best-of-batch energies of QAOA and classical baselines")
    _common(sp, qaoa=False)
    sp.add_argument("--algorithm", action="append",
                    help="qaoa:p=1[:noisy], hastings:steps=1, uniform, anneal[:sweeps=N]; repeatable")
    sp.add_argument("--repetitions", type=int, default=4000)
    sp.add_argument("--batch", type=int, default=100)
    sp.add_argument("--noise-config")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("timing", help="mean batch time per topology and size")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    sp.add_argument("--topology", choices=TOPOLOGIES, action="append")
    sp.add_argument("--size", type=int, action="append")
    sp.add_argument("--p", type=int, default=1)
    sp.add_argument("--batch", type=int, default=100)
    sp.add_argument("--instances", type=int, default=10)
    sp.add_argument("--noisy", action="store_true")
    sp.add_argument("--noise-config")
    sp.set_defaults(func=cmd_timing)

    sp = sub.add_parser("gen-problem", help="write a Gaussian Ising instance")
    _common(sp, qaoa=False)
    sp.set_defaults(func=cmd_gen_problem)

    sp = sub.add_parser("verify", help="sampler against the exact oracles on random circuits")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--circuits", type=int, default=5)
    sp.add_argument("--shots", type=int, default=100_000)
    sp.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (P.InvalidParams, P.TooLarge, Q.OutOfRange, N.ParameterOutOfRange) as exc:
        print(f"pilotwave: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
