"""Command-line front end: sessions, rate sweeps, reconciliation, g2 runs.

Settings resolve in three layers: built-in defaults, then a `--config`
key = value file, then explicit flags.  Exit codes: 0 success, 2 bad
configuration or arguments, 3 insufficient data or protocol abort.  Output
files carry a `# config_hash=` header binding them to the effective
settings, and a fixed seed makes reruns byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .bb84 import format_session_csv
from .channel import LinkSpec
from .config import coerce_value, config_hash, format_value, load_config_file
from .hbt import (
    InsufficientDataError,
    correlation_histogram,
    fit_lifetime,
    g2_at_zero,
    simulate_hbt,
)
from .pipeline import derive_seed, format_summary_text, run_experiment_detailed
from .rates import (
    RateVariant,
    binary_entropy,
    crossover_distance,
    format_rate_csv,
    sweep_variants,
)
from .reconciliation import ReconciliationConfig, cascade
from .sources import get_preset

__all__ = ["main", "entry", "build_parser"]

# dest -> (config key, type, default); None defaults mean "not set"
_SCHEMAS = {
    "session": {
        "preset": ("source.preset", str, "nv"),
        "pulses": ("session.pulses", int, 1_000_000),
        "distance_km": ("link.distance_km", float, 0.0),
        "attenuation_db_per_km": ("link.attenuation_db_per_km", float, 0.4),
        "setup_efficiency": ("link.setup_efficiency", float, 0.31),
        "dark_count_prob": ("link.dark_count_prob", float, 2.4e-5),
        "misalignment": ("link.misalignment", float, 0.03),
        "disclose_fraction": ("session.disclose_fraction", float, 0.0),
        "double_click_policy": ("session.double_click_policy", str, "random"),
        "n_passes": ("recon.n_passes", int, 4),
        "verify_bits": ("recon.verify_bits", int, 50),
        "safety_margin": ("recon.safety_margin", int, 30),
        "entropy_file": ("session.entropy_file", str, ""),
        "bits_csv": ("session.bits_csv", bool, False),
    },
    "rates": {
        "preset": ("source.preset", str, "nv"),
        "dmax": ("rates.dmax_km", float, 30.0),
        "step": ("rates.step_km", float, 0.1),
        "rep_rate": ("rates.rep_rate_hz", float, 1e6),
        "f_ec": ("rates.f_ec", float, 1.22),
        "flat_error": ("rates.flat_error", bool, False),
        "wcp": ("rates.wcp", bool, False),
        "decoy": ("rates.decoy", bool, False),
        "ideal10": ("rates.ideal10", bool, False),
        "ideal95": ("rates.ideal95", bool, False),
        "attenuation_db_per_km": ("link.attenuation_db_per_km", float, 0.4),
        "setup_efficiency": ("link.setup_efficiency", float, 0.31),
        "dark_count_prob": ("link.dark_count_prob", float, 2.4e-5),
        "misalignment": ("link.misalignment", float, 0.03),
    },
    "cascade": {
        "n_bits": ("cascade.n_bits", int, 10_000),
        "qber": ("cascade.qber", float, 0.03),
        "est_qber": ("cascade.est_qber", float, None),
        "n_passes": ("recon.n_passes", int, 4),
        "verify_bits": ("recon.verify_bits", int, 50),
        "alice_file": ("cascade.alice_file", str, ""),
        "bob_file": ("cascade.bob_file", str, ""),
    },
    "g2": {
        "preset": ("source.preset", str, "nv"),
        "pulses": ("g2.pulses", int, 10_000_000),
        "mu": ("source.mu", float, None),
        "g2_zero": ("source.g2_zero", float, None),
        "lifetime_ns": ("source.lifetime_ns", float, None),
        "rep_rate": ("source.rep_rate_hz", float, None),
        "splitter_ratio": ("g2.splitter_ratio", float, 0.5),
        "detection_eff": ("g2.detection_eff", float, 1.0),
        "bin_width_ns": ("g2.bin_width_ns", float, 1.0),
        "window_periods": ("g2.window_periods", int, 5),
    },
}

_KNOWN_KEYS = {key for schema in _SCHEMAS.values() for key, _, _ in schema.values()}
_KNOWN_KEYS |= {"seed", "out", "quiet"}


def _int_arg(text: str) -> int:
    return coerce_value("argument", text, int)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", type=_int_arg, default=None, help="master seed")
    common.add_argument("--out", default=None, help="output file prefix")
    common.add_argument("--quiet", action="store_const", const=True, default=None)

    parser = argparse.ArgumentParser(
        prog="spsqkd",
        description="Single-photon QKD bench simulator and rate analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("session", parents=[common], help="one BB84 run to secured key")
    p.add_argument("--preset")
    p.add_argument("--pulses", type=_int_arg)
    p.add_argument("--distance-km", type=float)
    p.add_argument("--attenuation-db-per-km", type=float)
    p.add_argument("--setup-efficiency", type=float)
    p.add_argument("--dark-count-prob", type=float)
    p.add_argument("--misalignment", type=float)
    p.add_argument("--disclose-fraction", type=float)
    p.add_argument("--double-click-policy", choices=["random", "discard"])
    p.add_argument("--n-passes", type=_int_arg)
    p.add_argument("--verify-bits", type=_int_arg)
    p.add_argument("--safety-margin", type=_int_arg)
    p.add_argument("--entropy-file", help="raw bytes supplying protocol bits")
    p.add_argument("--bits-csv", action="store_const", const=True,
                   help="also write the per-bit sifted-key CSV")

    p = sub.add_parser("rates", parents=[common], help="secure rate vs distance sweep")
    p.add_argument("--preset")
    p.add_argument("--dmax", type=float, help="sweep end in km")
    p.add_argument("--step", type=float, help="sweep step in km")
    p.add_argument("--rep-rate", type=float)
    p.add_argument("--f-ec", type=float)
    p.add_argument("--flat-error", action="store_const", const=True)
    p.add_argument("--wcp", action="store_const", const=True)
    p.add_argument("--decoy", action="store_const", const=True)
    p.add_argument("--ideal10", action="store_const", const=True)
    p.add_argument("--ideal95", action="store_const", const=True)
    p.add_argument("--attenuation-db-per-km", type=float)
    p.add_argument("--setup-efficiency", type=float)
    p.add_argument("--dark-count-prob", type=float)
    p.add_argument("--misalignment", type=float)

    p = sub.add_parser("cascade", parents=[common], help="error correction on a key pair")
    p.add_argument("--n-bits", type=_int_arg)
    p.add_argument("--qber", type=float)
    p.add_argument("--est-qber", type=float)
    p.add_argument("--n-passes", type=_int_arg)
    p.add_argument("--verify-bits", type=_int_arg)
    p.add_argument("--alice-file", help="text file of 0/1 characters")
    p.add_argument("--bob-file", help="text file of 0/1 characters")

    p = sub.add_parser("g2", parents=[common], help="HBT run with g2 and lifetime fits")
    p.add_argument("--preset")
    p.add_argument("--pulses", type=_int_arg)
    p.add_argument("--mu", type=float)
    p.add_argument("--g2-zero", type=float)
    p.add_argument("--lifetime-ns", type=float)
    p.add_argument("--rep-rate", type=float)
    p.add_argument("--splitter-ratio", type=float)
    p.add_argument("--detection-eff", type=float)
    p.add_argument("--bin-width-ns", type=float)
    p.add_argument("--window-periods", type=_int_arg)
    return parser


def _resolve(command: str, args: argparse.Namespace, file_cfg: dict) -> dict:
    """Defaults, then config file, then flags.  Returns dest -> value."""
    for key in file_cfg:
        if key not in _KNOWN_KEYS:
            raise ValueError(f"unknown config key: {key}")
    schema = dict(_SCHEMAS[command])
    schema["seed"] = ("seed", int, 0)
    settings = {}
    for dest, (key, kind, default) in schema.items():
        value = default
        if key in file_cfg:
            value = coerce_value(key, file_cfg[key], kind)
        flag = getattr(args, dest, None)
        if flag is not None:
            value = flag
        settings[dest] = value
    return settings


def _effective(command: str, settings: dict) -> dict:
    eff = {"command": command}
    schema = dict(_SCHEMAS[command])
    schema["seed"] = ("seed", int, 0)
    for dest, (key, _, _) in schema.items():
        value = settings[dest]
        eff[key] = "" if value is None else format_value(value)
    return eff


def _metadata(effective: dict) -> dict:
    meta = {"config_hash": config_hash(effective)}
    for key in sorted(effective):
        meta[key] = effective[key]
    return meta


def _link_from(settings: dict, distance: float = 0.0) -> LinkSpec:
    return LinkSpec(
        distance_km=distance,
        attenuation_db_per_km=settings["attenuation_db_per_km"],
        setup_efficiency=settings["setup_efficiency"],
        dark_count_prob=settings["dark_count_prob"],
        misalignment=settings["misalignment"],
    )


def _emit(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _load_protocol_bits(path: str, n_pulses: int) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"entropy file not found: {path}")
    bits = np.unpackbits(np.frombuffer(p.read_bytes(), dtype=np.uint8))
    need = 3 * n_pulses
    if bits.size < need:
        raise ValueError(
            f"entropy file too short: need {need} bits, have {bits.size}"
        )
    return bits[:need]


def _load_key_file(path: str) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"key file not found: {path}")
    text = "".join(p.read_text().split())
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"key file must hold only 0/1 characters: {path}")
    return np.frombuffer(text.encode(), dtype=np.uint8) - ord("0")


def cmd_session(settings: dict, out: str, quiet: bool) -> int:
    source = get_preset(settings["preset"])
    link = _link_from(settings, distance=settings["distance_km"])
    protocol_bits = None
    if settings["entropy_file"]:
        protocol_bits = _load_protocol_bits(settings["entropy_file"], settings["pulses"])
    summary, session = run_experiment_detailed(
        source,
        link,
        settings["pulses"],
        master_seed=settings["seed"],
        disclose_fraction=settings["disclose_fraction"],
        double_click_policy=settings["double_click_policy"],
        n_passes=settings["n_passes"],
        verify_bits=settings["verify_bits"],
        safety_margin=settings["safety_margin"],
        protocol_bits=protocol_bits,
    )
    meta = _metadata(_effective("session", settings))
    Path(f"{out}.summary.txt").write_text(format_summary_text(summary, meta))
    if settings["bits_csv"]:
        Path(f"{out}.bits.csv").write_text(format_session_csv(session, meta))
    _emit(
        quiet,
        f"sifted {summary.sifted_rate_bps:.6g} bit/s  qber {summary.qber:.4f}  "
        f"secured {summary.secured_rate_bps:.6g} bit/s -> {out}.summary.txt",
    )
    if summary.aborted or not summary.verified:
        print("protocol aborted: zero-length key", file=sys.stderr)
        return 3
    return 0


def cmd_rates(settings: dict, out: str, quiet: bool) -> int:
    if settings["step"] <= 0:
        raise ValueError("step must be positive")
    if settings["dmax"] < 0:
        raise ValueError("dmax must be non-negative")
    link = _link_from(settings)
    distances = np.arange(0.0, settings["dmax"] + settings["step"] / 2, settings["step"])

    variants = [RateVariant(settings["preset"], "fixed", get_preset(settings["preset"]))]
    if settings["ideal10"] and settings["preset"] != "ideal10":
        variants.append(RateVariant("ideal10", "fixed", get_preset("ideal10")))
    if settings["ideal95"] and settings["preset"] != "ideal95":
        variants.append(RateVariant("ideal95", "fixed", get_preset("ideal95")))
    if settings["wcp"]:
        variants.append(RateVariant("wcp", "wcp"))
    if settings["decoy"]:
        variants.append(RateVariant("decoy", "decoy"))

    curves = sweep_variants(
        variants,
        distances,
        link,
        rep_rate_hz=settings["rep_rate"],
        f_ec=settings["f_ec"],
        flat_error=settings["flat_error"],
    )
    meta = _metadata(_effective("rates", settings))
    for variant in variants:
        if variant.mode != "fixed":
            continue
        for rival in ("wcp", "decoy"):
            if rival in curves:
                d = crossover_distance(distances, curves[variant.name], curves[rival])
                meta[f"crossover_{variant.name}_{rival}_km"] = f"{d:.6g}"
    Path(f"{out}.rates.csv").write_text(format_rate_csv(distances, curves, meta))
    fields = [f"{k}={v}" for k, v in meta.items() if k.startswith("crossover_")]
    _emit(quiet, f"wrote {out}.rates.csv  " + "  ".join(fields))
    return 0


def cmd_cascade(settings: dict, out: str, quiet: bool) -> int:
    if bool(settings["alice_file"]) != bool(settings["bob_file"]):
        raise ValueError("provide both --alice-file and --bob-file, or neither")
    if settings["alice_file"]:
        alice = _load_key_file(settings["alice_file"])
        bob = _load_key_file(settings["bob_file"])
        qber_true = float("nan")
    else:
        rng_a = np.random.default_rng(np.random.SeedSequence([settings["seed"], 0]))
        rng_b = np.random.default_rng(np.random.SeedSequence([settings["seed"], 1]))
        alice = rng_a.integers(0, 2, settings["n_bits"], dtype=np.uint8)
        flips = (rng_b.random(settings["n_bits"]) < settings["qber"]).astype(np.uint8)
        bob = alice ^ flips
        qber_true = float(flips.mean())

    est = settings["est_qber"]
    if est is None:
        est = max(settings["qber"], 0.005)
    cfg = ReconciliationConfig(
        est_qber=est,
        n_passes=settings["n_passes"],
        shuffle_seed=derive_seed(settings["seed"], 2),
        verify_bits=settings["verify_bits"],
    )
    outcome = cascade(alice, bob, cfg)
    residual = float(np.mean(alice != outcome.corrected_bob_key))
    n = alice.size
    shannon = n * binary_entropy(qber_true) if qber_true > 0 else float("nan")
    ratio = outcome.leaked_bits / shannon if shannon > 0 else float("nan")

    meta = _metadata(_effective("cascade", settings))
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines += [
        f"n_bits = {n}",
        f"true_qber = {qber_true:.6g}",
        f"est_qber = {est:.6g}",
        f"corrections_made = {outcome.corrections_made}",
        f"leaked_bits = {outcome.leaked_bits}",
        f"shannon_ratio = {ratio:.6g}",
        f"verified = {outcome.verified_equal}",
        f"residual_error_rate = {residual:.6g}",
    ]
    Path(f"{out}.cascade.txt").write_text("\n".join(lines) + "\n")
    Path(f"{out}.transcript.bin").write_bytes(outcome.transcript)
    _emit(
        quiet,
        f"corrected {outcome.corrections_made} errors, leaked {outcome.leaked_bits} bits, "
        f"verified={outcome.verified_equal} -> {out}.cascade.txt",
    )
    if not outcome.verified_equal:
        print("verification failed: keys still differ", file=sys.stderr)
        return 3
    return 0


def cmd_g2(settings: dict, out: str, quiet: bool) -> int:
    source = get_preset(settings["preset"])
    overrides = {}
    if settings["mu"] is not None:
        overrides["mu"] = settings["mu"]
    if settings["g2_zero"] is not None:
        overrides["g2_zero"] = settings["g2_zero"]
    if settings["lifetime_ns"] is not None:
        overrides["lifetime_ns"] = settings["lifetime_ns"]
    if settings["rep_rate"] is not None:
        overrides["rep_rate_hz"] = settings["rep_rate"]
    if overrides:
        source = dataclasses.replace(source, **overrides)

    rng = np.random.default_rng(np.random.SeedSequence([settings["seed"], 0]))
    stream = simulate_hbt(
        source,
        settings["pulses"],
        rng,
        splitter_ratio=settings["splitter_ratio"],
        detection_eff=settings["detection_eff"],
    )
    if len(stream) == 0:
        raise InsufficientDataError("insufficient counts: empty tag stream")
    hist = correlation_histogram(
        stream,
        bin_width_ns=settings["bin_width_ns"],
        window_periods=settings["window_periods"],
    )
    g2 = g2_at_zero(hist)
    try:
        fit = fit_lifetime(stream, bin_width_ns=settings["bin_width_ns"])
        tau, sigma, reliable = fit.tau_ns, fit.sigma_ns, fit.reliable
    except InsufficientDataError:
        tau, sigma, reliable = float("nan"), float("nan"), False

    meta = _metadata(_effective("g2", settings))
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines.append(f"# rep_period_ns={source.rep_period_ns:.6g}")
    lines.append("tau_ns,counts")
    centers = hist.tau_centers_ns
    for i in range(centers.size):
        lines.append(f"{centers[i]:.6g},{int(hist.counts[i])}")
    Path(f"{out}.hist.csv").write_text("\n".join(lines) + "\n")

    rate_cps = len(stream) / (stream.duration_ns * 1e-9)
    report = [f"# {k}={v}" for k, v in meta.items()]
    report += [
        f"n_tags = {len(stream)}",
        f"duration_s = {stream.duration_ns * 1e-9:.6g}",
        f"count_rate_cps = {rate_cps:.6g}",
        f"g2_zero = {g2:.6g}",
        f"lifetime_ns = {tau:.6g}",
        f"lifetime_sigma_ns = {sigma:.6g}",
        f"lifetime_reliable = {reliable}",
    ]
    Path(f"{out}.g2.txt").write_text("\n".join(report) + "\n")
    _emit(
        quiet,
        f"g2(0) = {g2:.4f}  lifetime = {tau:.4g} ns  "
        f"rate = {rate_cps / 1e3:.1f} kcps -> {out}.g2.txt",
    )
    return 0


_COMMANDS = {
    "session": cmd_session,
    "rates": cmd_rates,
    "cascade": cmd_cascade,
    "g2": cmd_g2,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = load_config_file(args.config) if args.config else {}
        settings = _resolve(args.command, args, file_cfg)
        out = args.out
        if out is None:
            out = file_cfg.get("out", args.command)
        quiet = args.quiet
        if quiet is None:
            quiet = coerce_value("quiet", file_cfg.get("quiet", "false"), bool)
        return _COMMANDS[args.command](settings, out, quiet)
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
