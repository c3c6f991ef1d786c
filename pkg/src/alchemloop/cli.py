"""Command-line entry point: ``alchemloop {seed,run,report,eval-oracle}``.

A run directory holds::

    config.json          resolved configuration
    seeds.smi            seed dataset actually used
    run.log.jsonl        append-only event log (the source of every report)
    checkpoints/         iter_<x>.json after every round
    archives/            GA archive of every iteration
    report/              report.json and CSV tables
    timestamps.json      wall-clock times; the only nondeterministic file

Exit codes: 0 success, 1 configuration error, 2 oracle failure,
3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_ORACLE, EXIT_INTERNAL = 0, 1, 2, 3
ABLATIONS = ("no-retrain", "no-stability-gate")
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_cap():
    """Honour ALCHEMLOOP_THREADS by capping the BLAS pools.

    Only effective before numpy is first imported, so :func:`main` calls it
    before importing anything heavy.
    """
    value = os.environ.get("ALCHEMLOOP_THREADS")
    if not value:
        return
    if not value.isdigit() or int(value) < 1:
        raise SystemExit(f"ALCHEMLOOP_THREADS must be a positive integer, got {value!r}")
    for var in _THREAD_VARS:
        os.environ[var] = value


class RunLock:
    """Exclusive lock file guarding a run directory against a second writer."""

    def __init__(self, directory: Path):
        self.path = directory / ".lock"
        self.fd = None

    def __enter__(self):
        from alchemloop.errors import ConfigError

        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"run directory {self.path.parent} is locked by another process "
                              f"(remove {self.path} if that process is gone)") from None
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        os.close(self.fd)
        self.path.unlink(missing_ok=True)


def _stamp(out: Path, key: str):
    path = out / "timestamps.json"
    data = json.loads(path.read_text()) if path.exists() else {}
    data[key] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _load_config(args):
    from alchemloop.config import CampaignConfig

    cfg = CampaignConfig.load(args.config) if args.config else CampaignConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "oracle", None) is not None:
        changes["oracle"] = args.oracle
    if getattr(args, "out", None) is not None:
        changes["out_dir"] = args.out
    ablation = getattr(args, "ablation", None)
    if ablation == "no-retrain":
        changes["plans"] = tuple(dataclasses.replace(p, retrain_after=False) for p in cfg.plans)
    elif ablation == "no-stability-gate":
        changes["plans"] = tuple(dataclasses.replace(p, use_stability_gate=False) for p in cfg.plans)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _seed_molecules(cfg, out: Path | None = None):
    from alchemloop.dataset import generate_seed_molecules, read_smiles_file
    from alchemloop.errors import ConfigError
    from alchemloop.rng import phase_rng

    if cfg.seed_path:
        try:
            return read_smiles_file(cfg.seed_path)
        except OSError as err:
            raise ConfigError(f"cannot read seed file {cfg.seed_path}: {err.strerror or err}") from err
        except ValueError as err:
            raise ConfigError(str(err)) from err
    return generate_seed_molecules(cfg.seed_spec, phase_rng(cfg.master_seed, "seed-dataset"),
                                   cfg.synthetic_oracle)


def _checkpoints(out: Path) -> list[Path]:
    return sorted((out / "checkpoints").glob("iter_*.json"), key=lambda p: int(p.stem.split("_")[1]))


def write_report(out: Path) -> dict:
    """Rebuild ``out/report`` from the run log (or, failing that, checkpoints).

    A run without a ``campaign_end`` event is reported from its newest
    checkpoint and flagged ``"complete": false``.
    """
    from alchemloop.errors import IncompleteState
    from alchemloop.loop import load_checkpoint, read_log
    from alchemloop.metrics import RunRecord, campaign_report, report_files

    log_path = out / "run.log.jsonl"
    record = None
    if log_path.exists():
        record = RunRecord.from_events(read_log(log_path))
    if record is None or not record.complete:
        ckpts = _checkpoints(out)
        if not ckpts:
            if record is None:
                raise IncompleteState(f"{out} has neither a run log nor checkpoints")
        else:
            record = RunRecord.from_state(load_checkpoint(ckpts[-1]), complete=False)
    report = campaign_report(record)
    target = out / "report"
    target.mkdir(exist_ok=True)
    for name, text in report_files(report, record).items():
        (target / name).write_text(text)
    return report


# ---------------------------------------------------------------------------
# commands


def cmd_seed(args) -> int:
    from alchemloop.dataset import write_smiles_file

    cfg = _load_config(args)
    spec_changes = {}
    if args.count is not None:
        spec_changes["count"] = args.count
    if args.no_n_o_constraint:
        spec_changes["require_no_bond"] = False
    if spec_changes:
        from alchemloop.errors import ConfigError

        try:
            cfg = dataclasses.replace(cfg, seed_spec=dataclasses.replace(cfg.seed_spec, **spec_changes))
        except ValueError as err:
            raise ConfigError(str(err)) from err
    mols = _seed_molecules(dataclasses.replace(cfg, seed_path=None))
    if args.out:
        write_smiles_file(args.out, mols)
    else:
        sys.stdout.write("".join(m.smiles + "\n" for m in mols))
    return EXIT_OK


def cmd_run(args) -> int:
    from alchemloop.config import CampaignConfig
    from alchemloop.dataset import write_smiles_file
    from alchemloop.errors import ConfigError
    from alchemloop.loop import RunLog, load_checkpoint, run_campaign

    cfg = _load_config(args)
    if not cfg.out_dir:
        raise ConfigError("no output directory: pass --out or set out_dir in the config")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with RunLock(out):
        config_path = out / "config.json"
        log_path = out / "run.log.jsonl"
        state = None
        if args.resume:
            if not config_path.exists():
                raise ConfigError(f"nothing to resume in {out}")
            if CampaignConfig.load(config_path) != cfg:
                raise ConfigError(f"{config_path} differs from the requested configuration")
            ckpts = _checkpoints(out)
            if ckpts:
                state = load_checkpoint(ckpts[-1])
        elif log_path.exists() or _checkpoints(out):
            raise ConfigError(f"{out} already holds a run; pass --resume or choose another directory")
        if state is None:
            log_path.unlink(missing_ok=True)
        config_path.write_text(cfg.to_json())
        _stamp(out, "run_started")
        seeds = _seed_molecules(cfg)
        write_smiles_file(out / "seeds.smi", seeds)
        log = RunLog(out / "run.log.jsonl")
        progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr, flush=True))
        run_campaign(seeds, list(cfg.plans), cfg.settings(), cfg.make_oracle(), log, out,
                     state=state, progress=progress)
        write_report(out)
        _stamp(out, "run_finished")
    return EXIT_OK


def cmd_report(args) -> int:
    from alchemloop.errors import ConfigError

    out = Path(args.run_dir)
    if not out.is_dir():
        raise ConfigError(f"no such run directory: {out}")
    report = write_report(out)
    if not report["complete"]:
        print(f"{out}: incomplete run, partial report written", file=sys.stderr)
    return EXIT_OK


def cmd_eval_oracle(args) -> int:
    from alchemloop.molgraph import parse_smiles

    cfg = _load_config(args)
    oracle = cfg.make_oracle()
    mols = [parse_smiles(s) for s in args.smiles]
    for m, r in zip(mols, oracle.evaluate_many(mols)):
        print(json.dumps({"smiles": m.smiles, **r.to_dict()}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alchemloop", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="campaign config (JSON)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", help=out_help)

    sp = sub.add_parser("seed", help="generate a seed dataset")
    common(sp, "SMILES output file (default: stdout)")
    sp.add_argument("--count", type=int, help="number of molecules")
    sp.add_argument("--no-n-o-constraint", action="store_true",
                    help="do not require an N-O bond in every molecule")
    sp.set_defaults(func=cmd_seed)

    sp = sub.add_parser("run", help="run an active-learning campaign")
    common(sp, "run directory")
    sp.add_argument("--ablation", choices=ABLATIONS)
    sp.add_argument("--oracle", help="'synthetic' or 'external:<command>'")
    sp.add_argument("--resume", action="store_true", help="continue from the newest checkpoint")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="rebuild reports from a run directory")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("eval-oracle", help="evaluate molecules with the oracle")
    sp.add_argument("smiles", nargs="+")
    sp.add_argument("--config", help="campaign config (JSON)")
    sp.add_argument("--oracle", help="'synthetic' or 'external:<command>'")
    sp.set_defaults(func=cmd_eval_oracle)
    return p


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    from alchemloop.errors import AlchemloopError, ConfigError, OracleFailure

    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleFailure as err:
        print(f"oracle error: {err}", file=sys.stderr)
        return EXIT_ORACLE
    except AlchemloopError as err:
        # user-facing input problems (bad SMILES, incomplete runs) are config-class
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
