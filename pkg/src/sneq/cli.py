"""Command-line interface: ``sneq <subcommand> ...``.

Machine-readable results go to stdout, diagnostics to stderr.  Exit codes:
0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import os

_threads = os.environ.get("SNEQ_THREADS")
if _threads:
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import logging
import sys
from typing import Sequence

import numpy as np

from sneq import compose, graphs, oracle
from sneq.layers import basis_terms
from sneq.reps import action_type, order3_full_type, param_count
from sneq.tensor import EquivariantTensor, act, random_permutation
from sneq.train import evaluate, load_checkpoint, save_checkpoint, train
from sneq.vae import AutoencoderConfig, decode

log = logging.getLogger("sneq")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
EQUIVARIANCE_TOL = 1e-10
COVARIANCE_TOL = 1e-8


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _full_flag(value: str) -> bool:
    if value not in ("full", "zero"):
        raise UsageError(f"--diagonal must be 'full' or 'zero', got {value!r}")
    return value == "full"


def _basis(args) -> tuple:
    try:
        return basis_terms(args.order_in, args.order_out, _full_flag(args.diagonal))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_count_params(args) -> int:
    terms = _basis(args)
    print(len(terms))
    if args.n is not None:
        full = _full_flag(args.diagonal)
        try:
            count = param_count(_layer_type(args.order_in, full, args.n), _layer_type(args.order_out, full, args.n))
        except ValueError as exc:
            log.warning("no type-vector count at n=%d: %s", args.n, exc)
            return EXIT_OK
        print(f"type-vector count at n={args.n}: {count}", file=sys.stderr)
        if count != len(terms):
            return EXIT_FAIL
    return EXIT_OK


def _layer_type(order: int, full: bool, n: int):
    if order == 3 and full:
        return order3_full_type(n)
    return action_type(oracle.layer_action_spec(order, full, n))


def cmd_describe_layer(args) -> int:
    for idx, term in enumerate(_basis(args), start=1):
        print(f"{idx}\t{term.descriptor}")
    return EXIT_OK


def cmd_verify(args) -> int:
    kinds = [k for k, (k_in, k_out, _) in oracle.LAYER_KINDS.items() if max(k_in, k_out) == args.order]
    if not kinds:
        raise UsageError(f"--order must be 1, 2 or 3, got {args.order}")
    if args.n < 1:
        raise UsageError("--n must be positive")
    status = EXIT_OK
    print("kind\tn\tterms\torbit_dim\tnullspace_dim\trank\tverdict")
    for kind, n, verdict, orbit in oracle.verify_grid(kinds, [args.n]):
        if verdict is None:
            print(f"{kind}\t{n}\t-\t{orbit}\t-\t-\ttoo-large")
            continue
        print(f"{kind}\t{n}\t{verdict.n_terms}\t{orbit}\t{verdict.dim}\t{verdict.rank}\t{verdict}")
        k_in, k_out, _ = oracle.LAYER_KINDS[kind]
        if orbit != verdict.dim:
            log.error("%s n=%d: orbit count %d != nullspace dimension %d", kind, n, orbit, verdict.dim)
            status = EXIT_FAIL
        if verdict.kind == "excess" or (n >= 2 * max(k_in, k_out) and not verdict.ok):
            status = EXIT_FAIL
    return status


def cmd_equivariance_test(args) -> int:
    status = EXIT_OK
    print("kind\tn\ttrials\tmax_error")
    for kind in oracle.LAYER_KINDS:
        for n in args.n:
            err = oracle.equivariance_error(kind, n, args.trials, [args.seed, n], normalize=args.normalize)
            print(f"{kind}\t{n}\t{args.trials}\t{err:.3e}")
            if err > EQUIVARIANCE_TOL:
                status = EXIT_FAIL
    return status


def cmd_compose_demo(args) -> int:
    adj = graphs.random_graph(args.n, args.p, args.seed)
    rng = np.random.default_rng([args.seed, 1])
    weights = compose.neighborhood_weights([args.width] * args.layers, rng)
    out = compose.neighborhood_network(adj, args.layers, weights)
    sigma = random_permutation(args.n, [args.seed, 2])
    moved = compose.neighborhood_network(act(sigma, adj), args.layers, weights)
    expected = act(sigma, EquivariantTensor(out.readout, 1)).values
    err = float(np.abs(moved.readout - expected).max())
    for v, row in enumerate(out.readout, start=1):
        print(f"{v}\t" + "\t".join(f"{x:.6g}" for x in row))
    print(f"covariance_error\t{err:.3e}")
    return EXIT_OK if err <= COVARIANCE_TOL else EXIT_FAIL


def _dataset(args):
    if getattr(args, "graph", None):
        return [graphs.load_graph(p) for p in args.graph]
    return graphs.random_dataset(args.graphs, args.n, args.p, args.seed)


def cmd_train(args) -> int:
    data = _dataset(args)
    cfg = AutoencoderConfig(
        n_max=max(g.n for g in data),
        epochs=args.epochs,
        seed=args.seed,
        lr=args.lr,
        beta=args.beta,
        variational=args.beta > 0,
    )
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fp:
            result = train(cfg, data, log_fp=fp, progress_every=args.progress)
    else:
        result = train(cfg, data, progress_every=args.progress)
    save_checkpoint(result.checkpoint, args.out)
    final = evaluate(result.checkpoint.model, data)
    print(f"bce\t{final.reconstruction!r}")
    print(f"edge_accuracy\t{final.edge_accuracy:.6f}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    model = load_checkpoint(args.model).model
    # by default regenerate the training set recorded in the checkpoint
    if args.seed is None:
        args.seed = model.config.seed
    if args.n is None:
        args.n = model.config.n_max
    report = evaluate(model, _dataset(args))
    print(f"bce\t{report.reconstruction!r}")
    print(f"edge_accuracy\t{report.edge_accuracy:.6f}")
    return EXIT_OK


def cmd_sample(args) -> int:
    model = load_checkpoint(args.model).model
    n = args.n or model.config.n_max
    if n > model.config.n_max:
        raise UsageError(f"--n {n} exceeds the model's n_max={model.config.n_max}")
    rng = np.random.default_rng(args.seed)
    for k in range(args.count):
        z = rng.standard_normal((n, model.config.latent_channels))
        probs = decode(EquivariantTensor(z, 1), model).channel(0)
        a = (probs > 0.5).astype(float)
        np.fill_diagonal(a, 0.0)
        keep = graphs.largest_component(a)
        sub = a[np.ix_(keep, keep)]
        print(f"# sample {k + 1}")
        sys.stdout.write(graphs.format_graph(EquivariantTensor(sub[..., None], 2)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sneq", description="Permutation-equivariant layers and a graph autoencoder.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def layer_flags(p):
        p.add_argument("--order-in", type=int, required=True)
        p.add_argument("--order-out", type=int, required=True)
        p.add_argument("--diagonal", default="full", help="full | zero")

    p = sub.add_parser("count-params", help="number of basis terms of a layer")
    layer_flags(p)
    p.add_argument("--n", type=int, help="also compare with the type-vector count at this n")
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("describe-layer", help="list the basis terms of a layer")
    layer_flags(p)
    p.set_defaults(func=cmd_describe_layer)

    p = sub.add_parser("verify", help="check the layer bases against the commutant oracles")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("equivariance-test", help="randomized equivariance trials for every layer kind")
    p.add_argument("--n", type=int, nargs="+", default=[2, 3, 4, 5, 6])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_equivariance_test)

    p = sub.add_parser("compose-demo", help="neighborhood network on a random graph, with a relabeling check")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--width", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compose_demo)

    def data_flags(p, n=6, seed=0):
        p.add_argument("--n", type=int, default=n)
        p.add_argument("--graphs", type=int, default=20)
        p.add_argument("--p", type=float, default=0.5)
        p.add_argument("--seed", type=int, default=seed)
        p.add_argument("--graph", nargs="+", metavar="FILE", help="graph files instead of random graphs")

    p = sub.add_parser("train", help="train the autoencoder")
    data_flags(p)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=AutoencoderConfig.lr)
    p.add_argument("--beta", type=float, default=0.0, help="KL weight; > 0 also enables sampling")
    p.add_argument("--out", default="model.snva")
    p.add_argument("--log", help="CSV training log")
    p.add_argument("--progress", type=int, default=0, help="log every N epochs (with -v)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="edge accuracy of a trained model")
    data_flags(p, n=None, seed=None)
    p.add_argument("--model", default="model.snva")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("sample", help="decode N(0, 1) latents into graphs")
    p.add_argument("--model", default="model.snva")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)
    return parser


def run_command(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sneq {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"sneq {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, ValueError) as exc:
        print(f"sneq {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
