"""Command-line surface.

Subcommands cover the whole workflow: corpus construction and filtering,
guided generation to PPM images, benchmark sweeps, external-detection
evaluation, Frechet distance between feature sets, and the HTTP service.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness
from .evaluation import (
    fit_gaussian,
    frechet_distance,
    read_detections_file,
    read_features_csv,
)
from .generator import (
    MASK_MODES,
    GenerationConfig,
    default_vocabulary,
    generate,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage problems; the contract here is 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _mode_list(text: str) -> list[str]:
    modes = [part.strip() for part in text.split(",") if part.strip()]
    if not modes:
        raise argparse.ArgumentTypeError("expected a comma-separated list of mask modes")
    for mode in modes:
        if mode not in MASK_MODES:
            raise argparse.ArgumentTypeError(
                f"unknown mask mode {mode!r}; choose from {', '.join(MASK_MODES)}"
            )
    return modes


def _listen_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise argparse.ArgumentTypeError("expected HOST:PORT")
    try:
        return host, int(port)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad port {port!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boxguide", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="render each corpus sample to a PPM image")
    p.add_argument("--spec", required=True, help="guidance-spec JSON file")
    p.add_argument("--mode", choices=MASK_MODES, default="gaussian")
    p.add_argument("--weight", type=float, default=0.2, help="mask weight w'")
    p.add_argument("--softness", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score an external detections file against a spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--detections", required=True, help="line-delimited detections file")
    p.add_argument("--report", required=True, help="report JSON destination")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run the end-to-end benchmark over mask modes")
    p.add_argument("--spec", required=True)
    p.add_argument("--modes", type=_mode_list, default=list(MASK_MODES),
                   help="comma-separated mask modes (default: all)")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (0..N-1)")
    p.add_argument("--report", required=True)
    p.add_argument("--weight", type=float, default=0.2)
    p.add_argument("--softness", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fid", help="Frechet distance between two feature CSVs")
    p.add_argument("--features-a", required=True)
    p.add_argument("--features-b", required=True)
    p.set_defaults(func=cmd_fid)

    p = sub.add_parser("filter", help="select caption-covered samples from dataset exports")
    p.add_argument("--captions", required=True, help="captions JSON export")
    p.add_argument("--annotations", required=True, help="instances JSON export")
    p.add_argument("--out", required=True, help="guidance-spec destination")
    p.add_argument("--n1", type=int, required=True, help="one-object samples to keep")
    p.add_argument("--n2", type=int, required=True, help="two-object samples to keep")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("corpus", help="write the bundled 20-sample toy corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("serve", help="start the HTTP guidance service")
    p.add_argument("--listen", type=_listen_address, default=("127.0.0.1", 8787),
                   metavar="HOST:PORT", help="bind address (default 127.0.0.1:8787)")
    p.set_defaults(func=cmd_serve)

    return parser


def cmd_generate(args: argparse.Namespace) -> int:
    samples = harness.load_samples(args.spec)
    vocab = default_vocabulary()
    config = GenerationConfig(
        steps=args.steps,
        w_prime=args.weight,
        softness=args.softness,
        mask_mode=args.mode,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    for sample in samples:
        guidance = harness.sample_to_guidance(sample, vocab)
        result = generate(guidance, vocab, config)
        ppm_path = os.path.join(args.out, f"{sample.image_id}.ppm")
        with open(ppm_path, "wb") as handle:
            handle.write(result.image.to_ppm())
        harness.write_grid_matrix(result.image, os.path.join(args.out, f"{sample.image_id}.grid.txt"))
        print(f"{sample.image_id}: wrote {ppm_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    samples = harness.load_samples(args.spec)
    detections = read_detections_file(args.detections)
    report = harness.evaluate_detections(samples, detections)
    with open(args.report, "w") as handle:
        handle.write(harness.render_report({report.mode: report}))
    print(
        f"{report.record_count} records: mean IoU {report.mean_iou:.4f}, "
        f"success rate {report.success_rate:.2f}%"
    )
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    samples = harness.load_samples(args.spec)
    config = GenerationConfig(
        steps=args.steps, w_prime=args.weight, softness=args.softness
    )
    if args.seeds < 1:
        raise ValueError("need at least one seed")
    reports = harness.run_benchmark(samples, config, args.modes, list(range(args.seeds)))
    with open(args.report, "w") as handle:
        handle.write(harness.render_report(reports))
    for mode, report in reports.items():
        print(
            f"{mode}: mean IoU {report.mean_iou:.4f}, "
            f"success rate {report.success_rate:.2f}% over {report.record_count} records"
        )
    return 0


def cmd_fid(args: argparse.Namespace) -> int:
    _, features_a = read_features_csv(args.features_a)
    _, features_b = read_features_csv(args.features_b)
    distance = frechet_distance(fit_gaussian(features_a), fit_gaussian(features_b))
    print(f"{distance:.6f}")
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    samples = harness.load_coco_samples(args.captions, args.annotations)
    eligible = harness.filter_samples(samples)
    chosen = harness.split_by_object_count(eligible, args.n1, args.n2, args.seed)
    harness.save_samples(chosen, args.out)
    print(f"{len(samples)} samples, {len(eligible)} caption-covered, wrote {len(chosen)}")
    return 0


def cmd_corpus(args: argparse.Namespace) -> int:
    samples = harness.build_toy_corpus()
    harness.save_samples(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    host, port = args.listen
    uvicorn.run(create_app(), host=host, port=port, log_level="info")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
