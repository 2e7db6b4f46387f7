"""``noisyamt`` command line: inject, augment, sweep, compare, report, selftest."""

import argparse
import json
import logging
import os
import sys

from .audio import read_wav, write_wav
from .augmentation import SnrGrid, augment_corpus, inject_noise
from .errors import NoisyAmtError
from .harness import MockTranscriber, SweepResult, TranscriberSpec, compare_systems, load_manifest, run_sweep
from .report import render_snr_curves, series_from_sweep, summary_markdown
from .selftest import run_selftest
from .stats import METRICS

logger = logging.getLogger("noisyamt")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def read_config(path):
    """``key = value`` lines; ``#`` comment lines; repeated keys accumulate."""
    config = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith(("#", "[")):
                continue
            key, sep, value = text.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key = key.strip().replace("-", "_")
            value = value.strip()
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
                value = value[1:-1]
            if key in config:
                prev = config[key]
                config[key] = (prev if isinstance(prev, list) else [prev]) + [value]
            else:
                config[key] = value
    return config


def parse_system(text, timeout_s):
    """``id=command``; a command of ``mock`` or ``mock:p0=..,k=..`` selects the built-in mock."""
    system_id, sep, command = text.partition("=")
    if sep and command.strip().split(":", 1)[0] == "mock":
        params = {}
        _, _, rest = command.strip().partition(":")
        for item in filter(None, rest.split(",")):
            k, _, v = item.partition("=")
            params[k.strip()] = float(v)
        return MockTranscriber(system_id.strip(), **params)
    return TranscriberSpec.parse(text, timeout_s)


def _grid(text):
    try:
        return SnrGrid.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = _Parser(prog="noisyamt", description="Noise-robustness evaluation toolkit for music transcription.")
    parser.add_argument("--config", help="key = value file; command-line flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("inject", help="add white noise to one file at one SNR")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--clip-limit", type=float, default=1.0)
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")

    p = sub.add_parser("augment", help="noisy copies of a corpus at every grid level")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=("train", "validation", "test"))
    p.add_argument("--grid", type=_grid, default=SnrGrid())
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("sweep", help="evaluate systems over recordings x SNR grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=("train", "validation", "test"))
    p.add_argument("--grid", type=_grid, default=SnrGrid())
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--tolerance-s", type=float, default=0.05)
    p.add_argument("--system", action="append", required=True, help='"id=command {input} {output}" or "id=mock"')
    p.add_argument("--timeout-s", type=float, default=600.0)
    p.add_argument("--cache-dir")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--keep-audio", action="store_true")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("compare", help="significance table of variants against a baseline")
    p.add_argument("--sweep", required=True, help="sweep.json or sweep.csv")
    p.add_argument("--baseline", required=True)
    p.add_argument("--variant", action="append", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--test", choices=("paired", "welch"), default="paired")
    p.add_argument("--grid", type=_grid)
    p.add_argument("--out", help="output prefix for .json and .md")

    p = sub.add_parser("report", help="SVG curves and summary tables from a sweep")
    p.add_argument("--sweep", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--baseline")
    p.add_argument("--variant", action="append")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--test", choices=("paired", "welch"), default="paired")

    p = sub.add_parser("selftest", help="mock-transcriber end-to-end demo")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--recordings", type=int, default=5)
    p.add_argument("--grid", type=_grid, default=SnrGrid())
    return parser


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((tok for tok in rest if tok in COMMANDS), None)
    appends = {}
    if known.config and command is not None:
        appends = _apply_config(parser, command, known.config)
    args = parser.parse_args(argv)
    for dest, values in appends.items():
        if getattr(args, dest, None) is None:
            setattr(args, dest, values)
    return args


def _apply_config(parser, command, path):
    """Install config values as subcommand defaults; returns append-type values,
    which only apply when the flag is absent from the command line."""
    config = read_config(path)
    subparser = parser._subparsers._group_actions[0].choices[command]
    known = {}
    for a in subparser._actions:
        known[a.dest] = a
        for opt in a.option_strings:
            known[opt.lstrip("-").replace("-", "_")] = a
    defaults, appends = {}, {}
    for key, value in config.items():
        action = known.get(key)
        if action is None:
            raise UsageError(f"{path}: unknown option {key!r} for {command}")
        values = value if isinstance(value, list) else [value]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[action.dest] = values[-1].lower() in ("1", "true", "yes", "on")
            continue
        convert = action.type or str
        try:
            converted = [convert(v) for v in values]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}: bad value for {key}: {exc}") from None
        if isinstance(action, argparse._AppendAction):
            appends[action.dest] = converted
        else:
            defaults[action.dest] = converted[-1]
        action.required = False
    subparser.set_defaults(**defaults)
    return appends


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_inject(args):
    signal = read_wav(args.input)
    noisy, meta = inject_noise(signal, args.snr, args.seed, args.clip_limit)
    write_wav(noisy, args.out, args.encoding)
    sidecar = os.path.splitext(args.out)[0] + ".json"
    doc = {**meta.to_sidecar(), "source_id": os.path.splitext(os.path.basename(args.input))[0]}
    _write(sidecar, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.out}: target {args.snr:.2f} dB, achieved {meta.achieved_snr_db:.4f} dB, "
          f"{meta.clip.clipped_sample_count} clipped")
    return EXIT_OK


def cmd_augment(args):
    manifest = load_manifest(args.manifest, args.split)
    result = augment_corpus(manifest, args.grid, args.seed, args.out, args.encoding, workers=args.workers)
    print(f"wrote {len(result.mixes)} files to {args.out}")
    for err in result.errors:
        print(f"error: {err['source_id']}: {err['error']}", file=sys.stderr)
    return EXIT_ERROR if result.errors else EXIT_OK


def cmd_sweep(args):
    manifest = load_manifest(args.manifest, args.split)
    if not len(manifest):
        raise UsageError("manifest selects no records")
    try:
        systems = [parse_system(s, args.timeout_s) for s in args.system]
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(args.out, exist_ok=True)
    keep = os.path.join(args.out, "audio") if args.keep_audio else None
    sweep = run_sweep(manifest, systems, args.grid, args.seed, args.tolerance_s,
                      cache_dir=args.cache_dir, workers=args.workers, keep_audio_dir=keep)
    sweep.save(os.path.join(args.out, "sweep.json"), os.path.join(args.out, "sweep.csv"))
    info = sweep.run_info
    print(f"{info['cells']} cells, {info['failures']} failed, "
          f"{info['invocations']} transcriber runs, {info['cache_hits']} cache hits")
    for f in sweep.failures:
        print(f"failed: {f['system_id']} {f['recording_id']} {f['snr_db']}: {f['reason']}", file=sys.stderr)
    return EXIT_ERROR if sweep.failures else EXIT_OK


def _load_sweep(path):
    sweep = SweepResult.load(path)
    if not sweep.cells:
        raise UsageError(f"{path}: sweep result is empty")
    return sweep


def cmd_compare(args):
    sweep = _load_sweep(args.sweep)
    table = compare_systems(sweep, args.baseline, args.variant, args.alpha, args.test, args.grid)
    md = table.to_markdown()
    print(md, end="")
    if args.out:
        _write(args.out + ".md", md)
        _write(args.out + ".json", json.dumps(table.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_report(args):
    sweep = _load_sweep(args.sweep)
    os.makedirs(args.out, exist_ok=True)
    by_metric = {}
    for metric in METRICS:
        series = series_from_sweep(sweep, metric)
        by_metric[metric] = series
        render_snr_curves(series, os.path.join(args.out, f"{metric}_vs_snr.svg"),
                          title=f"{metric} vs SNR", y_label=metric)
    _write(os.path.join(args.out, "summary.md"), summary_markdown(by_metric))
    if args.baseline:
        variants = args.variant or [s for s in sweep.systems() if s != args.baseline]
        table = compare_systems(sweep, args.baseline, variants, args.alpha, args.test)
        _write(os.path.join(args.out, "significance.md"), table.to_markdown())
        _write(os.path.join(args.out, "significance.json"), json.dumps(table.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_selftest(args):
    outcome = run_selftest(args.out, args.seed, args.workers, args.recordings, args.grid)
    for name, ok in outcome["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(outcome["table"].to_markdown(row_label="system"), end="")
    return EXIT_OK if all(outcome["checks"].values()) else EXIT_ERROR


COMMANDS = {
    "inject": cmd_inject,
    "augment": cmd_augment,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "report": cmd_report,
    "selftest": cmd_selftest,
}


def cli_main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except (NoisyAmtError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
