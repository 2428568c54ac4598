"""Command-line entry point: ``fedseq <command> ...``."""
from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

from .config import ADMISSIBLE_GRID, PUBLISHED_OPTIMA, ConfigError, ExperimentConfig, load_config, grid_violations
from .data import DataFormatError, generate_synthetic, load_dataset, normalize_own, window, write_dataset
from .federation import (
    AggregationRule,
    FederatedClient,
    FederatedServer,
    ProtocolError,
    RoundAbortedError,
    TcpServerTransport,
    run_tcp_client,
)
from .harness import (
    evaluate_checkpoint,
    fit_final_model,
    load_sequences,
    report,
    run_cross_validation,
    save_checkpoint,
)
from .nets import init_network
from .tensor import make_rng

log = logging.getLogger("fedseq")


def _load(args, mode: str | None = None) -> ExperimentConfig:
    overrides = dict(kv.split("=", 1) for kv in getattr(args, "set", None) or [])
    if mode:
        overrides["mode"] = mode
    cfg = load_config(args.config, overrides)
    if getattr(args, "paper_grid", False):
        problems = grid_violations(cfg)
        if problems:
            raise ConfigError("outside the admissible grid: " + "; ".join(problems))
    return cfg


def _emit(run, cfg: ExperimentConfig, fmt: str) -> None:
    blob = report(run, fmt)
    if cfg.output:
        Path(cfg.output).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.output).write_bytes(blob)
        log.info("report written to %s", cfg.output)
    else:
        sys.stdout.write(blob.decode())


def _train_cv(args, mode: str) -> int:
    cfg = _load(args, mode)
    run, _ = run_cross_validation(cfg)
    _emit(run, cfg, args.format)
    if cfg.save_model:
        est, stats, final_cfg = fit_final_model(cfg, load_sequences(cfg))
        save_checkpoint(cfg.save_model, est.params_, final_cfg, stats)
        log.info("model saved to %s", cfg.save_model)
    return 0


def cmd_train_central(args) -> int:
    return _train_cv(args, "central")


def cmd_train_federated(args) -> int:
    if args.transport == "sim":
        return _train_cv(args, "federated")
    # Networked: this process is only the server; clients own the data.
    cfg = _load(args, "federated")
    if args.listen:
        cfg = cfg.replace(listen=args.listen)
    if args.participants:
        cfg = cfg.replace(participants=args.participants)
    ids = cfg.participant_list
    if not ids:
        raise ConfigError("tcp transport needs the expected participant ids (--participants)")
    cfg = cfg.replace(normalization="participant")
    params = init_network(cfg.network(), make_rng(cfg.seed))
    server = FederatedServer(params, ids, cfg.epochs // cfg.epochs_per_round,
                             AggregationRule(cfg.aggregation), cfg.timeout or None)
    with TcpServerTransport(cfg.listen) as transport:
        log.info("listening on %s for %d clients", transport.address, len(ids))
        print(f"listening on {transport.address}", flush=True)
        final = server.run(transport)
    print(f"finished {server.round} rounds with {len(ids)} clients", flush=True)
    if cfg.save_model:
        save_checkpoint(cfg.save_model, final, cfg, None)
        print(f"model saved to {cfg.save_model}")
    return 0


def cmd_client(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    seqs = {s.participant_id: s for s in load_dataset(args.data)}
    if args.participant not in seqs:
        raise DataFormatError(f"participant {args.participant!r} not found in {args.data}")
    seq = normalize_own(seqs[args.participant])
    if seq.n_features != cfg.input_size:
        raise ConfigError(f"input_size={cfg.input_size} but {args.participant} has "
                          f"{seq.n_features} features; the server would reject the layout")
    net = cfg.network()
    client = FederatedClient(args.participant, net,
                             window(seq, cfg.sequence_length, cfg.effective_stride),
                             cfg.epochs_per_round, cfg.clip_norm, cfg.client_optimizer)
    run_tcp_client(args.server, client, connect_timeout=args.connect_timeout)
    print(f"{args.participant}: {client.round + 1} rounds, "
          f"final loss {client.loss_history[-1] if client.loss_history else float('nan'):.6f}")
    return 0


def cmd_evaluate(args) -> int:
    rep = evaluate_checkpoint(args.model, load_dataset(args.data), args.ccc_mode)
    for key, value in rep.as_dict().items():
        print(f"{key} = {value}")
    return 0


def cmd_gen_synthetic(args) -> int:
    seqs = generate_synthetic(args.participants, args.frames, args.seed, args.features)
    write_dataset(seqs, args.out, seed=args.seed)
    print(f"wrote {len(seqs)} participants x {args.frames} frames to {args.out}")
    return 0


def grid_configs(base: ExperimentConfig, search: bool):
    """Published optima for ``base.mode``, or the whole admissible grid."""
    if not search:
        for mode, cell, lr, seq_len, hidden, layers in PUBLISHED_OPTIMA:
            if mode == base.mode:
                yield base.replace(cell=cell, bidirectional=cell != "SimpleRNN",
                                   learning_rate=lr, sequence_length=seq_len,
                                   hidden_size=hidden, num_layers=layers)
        return
    keys = list(ADMISSIBLE_GRID)
    for cell in ("SimpleRNN", "GRU", "LSTM"):
        for values in itertools.product(*(ADMISSIBLE_GRID[k] for k in keys)):
            yield base.replace(cell=cell, bidirectional=cell != "SimpleRNN",
                               **dict(zip(keys, values)))


def cmd_grid(args) -> int:
    base = _load(args) if args.config else ExperimentConfig()
    configs = list(itertools.islice(grid_configs(base, args.search), args.limit))
    for cfg in configs:
        problems = grid_violations(cfg) if args.paper_grid else []
        tag = "ok" if not problems else "not-applicable: " + "; ".join(problems)
        print(f"{cfg.mode} {cfg.cell} lr={cfg.learning_rate:g} seq={cfg.sequence_length} "
              f"hidden={cfg.hidden_size} layers={cfg.num_layers} [{tag}]")
    if not args.run:
        return 0
    for cfg in configs:
        run, _ = run_cross_validation(cfg)
        sys.stdout.write(report(run, args.format).decode())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedseq", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--paper-grid", action="store_true",
                       help="reject configs outside the admissible hyper-parameter grid")
        p.add_argument("--format", default="text-table",
                       choices=("text-table", "csv", "json-lines"))
        p.set_defaults(func=fn)
        return p

    experiment("train-central", cmd_train_central, "k-fold CV of a centrally trained model")
    p = experiment("train-federated", cmd_train_federated, "k-fold CV of federated training")
    p.add_argument("--transport", choices=("sim", "tcp"), default="sim")
    p.add_argument("--listen", help="host:port for --transport tcp")
    p.add_argument("--participants", help="comma-separated client ids for --transport tcp")

    p = sub.add_parser("client", help="serve one participant as a federated client")
    p.add_argument("--server", required=True)
    p.add_argument("--participant", required=True)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--connect-timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_client)

    p = sub.add_parser("evaluate", help="score a saved model on a dataset")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--ccc-mode", choices=("pooled", "per_participant"), default="pooled")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    p.add_argument("--participants", required=True, type=int)
    p.add_argument("--frames", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--features", type=int, default=40)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("grid", help="list (and optionally run) grid configurations")
    p.add_argument("--config", type=Path)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--paper-grid", action="store_true")
    p.add_argument("--search", action="store_true", help="the whole grid, not just the optima")
    p.add_argument("--run", action="store_true", help="run cross validation for each entry")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--format", default="text-table",
                   choices=("text-table", "csv", "json-lines"))
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, ProtocolError, RoundAbortedError) as exc:
        print(f"fedseq: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
