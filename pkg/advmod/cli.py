"""
Command-line entry point: advmod train | eval | gradcheck | sweep-levels
"""
import argparse
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from typing import Any, Dict

from pydantic import BaseModel

from advmod import __version__, exceptions, util
from advmod.channel import ChannelKind
from advmod.config import load_config, parse_config
from advmod.evaluation import (
    CIPHER_RANGE,
    PREDICTION_RANGE,
    export_constellation,
    export_histogram,
    harden,
    snr_sweep,
)
from advmod.gradcheck import run_gradient_suite
from advmod.nn.layers import ActivationKind
from advmod.nn.networks import Network
from advmod.numerics import make_rng
from advmod.trainer import CHECKPOINT_FILES, evaluation_batch, run_pipeline, train

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_NON_FINITE_LOSS = 3
EXIT_BAD_CHECKPOINT = 4
EXIT_GRADCHECK_FAILED = 5

MANIFEST_FILE = "manifest.json"
LOSS_HISTORY_FILE = "loss_history.csv"
BER_SWEEP_FILE = "ber_sweep.csv"
CONSTELLATION_FILE = "constellation.csv"
LEVELS_SWEEP_FILE = "levels_sweep.csv"
HISTOGRAM_FILES = {"bob": "hist_bob.csv", "eve": "hist_eve.csv", "cipher": "hist_cipher.csv"}

DEFAULT_SNR_SPEC = "0:40:5"


class RunManifest(BaseModel):
    """
    Record of one command run. `files` maps every file the run wrote (relative to the output
    directory, the manifest itself excepted) to its SHA-256 digest
    """

    command: str
    tool_version: str
    config: Dict[str, Any]
    seeds: Dict[str, int]
    started_at: str
    finished_at: str
    files: Dict[str, str]


def _now():
    return datetime.now(timezone.utc).isoformat()


def write_manifest(out_dir, command, config, started_at, paths):
    """
    :param str out_dir:
    :param str command: command name
    :param TrainingConfig config: resolved config of the run
    :param str started_at: ISO timestamp
    :param list paths: every file written by the run
    :return: path of the manifest
    """
    manifest = RunManifest(
        command=command,
        tool_version=__version__,
        config=config.model_dump(mode="json"),
        seeds=config.seeds(),
        started_at=started_at,
        finished_at=_now(),
        files={os.path.relpath(path, out_dir): util.file_digest(path) for path in paths},
    )
    path = os.path.join(out_dir, MANIFEST_FILE)
    with open(path, "w") as f:
        f.write(manifest.model_dump_json(indent=2))
    log.info("Wrote {} listing {} files".format(path, len(manifest.files)))
    return path


def read_manifest(directory):
    """
    :return: RunManifest, or None when the directory has no manifest
    """
    path = os.path.join(directory, MANIFEST_FILE)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        return RunManifest.model_validate(json.load(f))


###########################################################################################
#       COMMANDS
###########################################################################################
def cmd_train(config_path, out_dir):
    started_at = _now()
    try:
        config = load_config(config_path)
    except exceptions.ConfigurationError as e:
        log.error(str(e))
        return EXIT_INVALID_CONFIG
    os.makedirs(out_dir, exist_ok=True)
    try:
        alice, bob, eve, history = train(config, checkpoint_dir=out_dir)
    except (exceptions.NonFiniteLossError, exceptions.NonFiniteError, exceptions.ChannelError) as e:
        log.error("Training aborted: {}".format(e))
        return EXIT_NON_FINITE_LOSS
    history_path = os.path.join(out_dir, LOSS_HISTORY_FILE)
    history.to_csv(history_path)
    paths = [os.path.join(out_dir, CHECKPOINT_FILES[role]) for role in ("alice", "bob", "eve")] + [history_path]
    write_manifest(out_dir, "train", config, started_at, paths)
    return EXIT_OK


def load_participants(model_dir):
    """
    :return: (alice, bob, eve) loaded from checkpoints
    """
    networks = [Network.load(os.path.join(model_dir, CHECKPOINT_FILES[role])) for role in ("alice", "bob", "eve")]
    for role, network in zip(("alice", "bob", "eve"), networks):
        if network.role != role:
            raise exceptions.CheckpointError("{} holds a {} network".format(CHECKPOINT_FILES[role], network.role))
    if len({network.n for network in networks}) != 1:
        raise exceptions.CheckpointError("Checkpoints disagree on N: {}".format([network.n for network in networks]))
    return tuple(networks)


def resolve_eval_config(model_dir, config_path, n):
    """
    Evaluation settings: an explicit config file, else the config recorded by the training run, else defaults
    """
    if config_path:
        return load_config(config_path)
    manifest = read_manifest(model_dir)
    if manifest is not None:
        log.info("Using the training config recorded in {}".format(os.path.join(model_dir, MANIFEST_FILE)))
        return parse_config(manifest.config)
    log.warning("No config found for {}, using defaults with N={}".format(model_dir, n))
    return parse_config({"n": n})


def cmd_eval(model_dir, channel, snr_spec, out_dir, config_path=None):
    started_at = _now()
    try:
        alice, bob, eve = load_participants(model_dir)
    except exceptions.CheckpointError as e:
        log.error(str(e))
        return EXIT_BAD_CHECKPOINT
    try:
        config = resolve_eval_config(model_dir, config_path, alice.n)
        if channel is not None:
            config = config.with_overrides(channel=channel)
        snr_list = util.parse_snr_spec(snr_spec)
    except (exceptions.ConfigurationError, ValueError) as e:
        log.error(str(e))
        return EXIT_INVALID_CONFIG
    if config.n != alice.n:
        log.error("Checkpoints have N={} but the config has N={}".format(alice.n, config.n))
        return EXIT_BAD_CHECKPOINT

    os.makedirs(out_dir, exist_ok=True)
    batch = evaluation_batch(config)
    table = snr_sweep(alice, bob, eve, config, snr_list, batch)
    sweep_path = os.path.join(out_dir, BER_SWEEP_FILE)
    table.to_csv(sweep_path)

    # Figure data at the training SNR, on a stream distinct from every sweep point
    transmission = run_pipeline(alice, bob, eve, batch, config, make_rng(config.channel_seed, len(snr_list)))
    p = transmission.batch.p
    constellation_path = os.path.join(out_dir, CONSTELLATION_FILE)
    export_constellation(transmission.symbols, constellation_path)
    histogram_paths = {name: os.path.join(out_dir, filename) for name, filename in HISTOGRAM_FILES.items()}
    export_histogram(
        transmission.p_bob, harden(transmission.p_bob) == p, value_range=PREDICTION_RANGE, path=histogram_paths["bob"]
    )
    export_histogram(
        transmission.p_eve, harden(transmission.p_eve) == p, value_range=PREDICTION_RANGE, path=histogram_paths["eve"]
    )
    export_histogram(
        transmission.cipher,
        harden(transmission.cipher, threshold=0.0) == p,
        value_range=CIPHER_RANGE,
        path=histogram_paths["cipher"],
    )
    paths = [sweep_path, constellation_path] + list(histogram_paths.values())
    write_manifest(out_dir, "eval", config, started_at, paths)
    return EXIT_OK


def cmd_gradcheck(seed=0):
    results = run_gradient_suite(seed)
    for result in results:
        print(result)
    failed = [result for result in results if not result.passed]
    if failed:
        for result in failed:
            log.error("Gradient check failed for {} in {} at coordinate {}".format(
                result.label, result.tensor_name, result.coordinate
            ))
        return EXIT_GRADCHECK_FAILED
    return EXIT_OK


def cmd_sweep_levels(config_path, levels, out_dir):
    started_at = _now()
    try:
        config = load_config(config_path)
        if not levels or min(levels) < 2:
            raise exceptions.ConfigurationError("Level counts must all be >= 2, got {}".format(levels))
    except exceptions.ConfigurationError as e:
        log.error(str(e))
        return EXIT_INVALID_CONFIG
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    paths = []
    for levels_count in levels:
        leg_config = config.with_overrides(levels=levels_count, alice_activation=ActivationKind.TANH_DISCRETE)
        leg_dir = os.path.join(out_dir, "L_{}".format(levels_count))
        os.makedirs(leg_dir, exist_ok=True)
        log.info("Training leg L={}".format(levels_count))
        try:
            alice, bob, eve, history = train(leg_config, checkpoint_dir=leg_dir)
        except (exceptions.NonFiniteLossError, exceptions.NonFiniteError, exceptions.ChannelError) as e:
            log.error("Leg L={} aborted: {}".format(levels_count, e))
            return EXIT_NON_FINITE_LOSS
        history_path = os.path.join(leg_dir, LOSS_HISTORY_FILE)
        history.to_csv(history_path)
        paths.extend([os.path.join(leg_dir, CHECKPOINT_FILES[role]) for role in ("alice", "bob", "eve")])
        paths.append(history_path)

        table = snr_sweep(alice, bob, eve, leg_config, [leg_config.train_snr_db], evaluation_batch(leg_config))
        final = history[-1] if len(history) else None
        rows.append(
            (
                levels_count,
                final.loss_bob if final else math.nan,
                final.loss_eve if final else math.nan,
                table[0].ber_bob,
                table[0].ber_eve_trained,
            )
        )
    sweep_path = os.path.join(out_dir, LEVELS_SWEEP_FILE)
    util.write_csv(sweep_path, util.LEVELS_SWEEP_HEADER, rows)
    paths.append(sweep_path)
    write_manifest(out_dir, "sweep-levels", config, started_at, paths)
    return EXIT_OK


###########################################################################################
#       ARGUMENT PARSING
###########################################################################################
def parse_levels(value):
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('Levels must be a comma separated list of integers, got: "{}"'.format(value))


def build_parser():
    parser = argparse.ArgumentParser(prog="advmod", description="Adversarially trained secured modulation")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    train_parser = commands.add_parser("train", help="Train Alice, Bob and Eve")
    train_parser.add_argument("--config", required=True)
    train_parser.add_argument("--out", required=True)

    eval_parser = commands.add_parser("eval", help="BER sweep and figure data for trained checkpoints")
    eval_parser.add_argument("--model", required=True, help="Directory holding alice.json, bob.json and eve.json")
    eval_parser.add_argument("--channel", choices=[kind.value for kind in ChannelKind])
    eval_parser.add_argument("--snr", default=DEFAULT_SNR_SPEC, help='"start:stop:step" in dB, stop inclusive')
    eval_parser.add_argument("--out", required=True)
    eval_parser.add_argument("--config", help="Overrides the config recorded with the checkpoints")

    gradcheck_parser = commands.add_parser("gradcheck", help="Finite-difference check of every layer")
    gradcheck_parser.add_argument("--seed", type=int, default=0)

    sweep_parser = commands.add_parser("sweep-levels", help="Train one system per discrete tanh level count")
    sweep_parser.add_argument("--config", required=True)
    sweep_parser.add_argument("--levels", required=True, type=parse_levels, help="e.g. 3,5,9,13")
    sweep_parser.add_argument("--out", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.command == "train":
        return cmd_train(args.config, args.out)
    if args.command == "eval":
        return cmd_eval(args.model, args.channel, args.snr, args.out, config_path=args.config)
    if args.command == "gradcheck":
        return cmd_gradcheck(args.seed)
    return cmd_sweep_levels(args.config, args.levels, args.out)


if __name__ == "__main__":
    sys.exit(main())
