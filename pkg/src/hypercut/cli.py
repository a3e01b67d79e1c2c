"""Command-line entry point for the full workflow.

Subcommands: gen-data, train-hypercut, eval-hypercut, train-deblur,
eval-deblur, align, toy-demo, dump-embeddings, ablate-alpha, ablate-n.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import os
import sys

# HYPERCUT_THREADS caps BLAS parallelism; must happen before numpy loads.
# HYPERCUT_THREADS=1 gives fully deterministic runs.
_threads = os.environ.get("HYPERCUT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
from pathlib import Path

import numpy as np

from . import blur2vid, metrics, ordering, pipeline
from .datastore import DatasetStore, generate_dataset, read_b2v, write_b2v
from .scenes import SceneDistribution


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _echo_config(out_dir: Path, args: argparse.Namespace):
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = {k: (str(v) if isinstance(v, Path) else v)
           for k, v in vars(args).items() if k != "func"}
    _write_json(out_dir / "config.json", cfg)


def _write_text(path, text):
    with open(path, "w") as f:
        f.write(text)


def _save_png(path, img: np.ndarray):
    from PIL import Image

    arr = np.clip(img * 255.0 + 0.5, 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path)


def _float_list(text: str) -> list[float]:
    vals = [v for v in text.split(",") if v.strip() != ""]
    if not vals:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    return [float(v) for v in vals]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in _float_list(text)]


# -- subcommands -------------------------------------------------------------------


def cmd_gen_data(args):
    dist = SceneDistribution(height=args.size, width=args.size,
                             channels=args.channels, n_frames=args.frames,
                             static=args.static)
    generate_dataset(args.out, count=args.count, seed=args.seed, dist=dist,
                     test_ratio=args.split)
    _echo_config(Path(args.out), args)
    print(f"wrote {args.count} samples to {args.out}")
    return 0


def cmd_train_hypercut(args):
    store = DatasetStore(args.data)
    _, train_seqs = store.load_split("train")
    cfg = ordering.OrderTrainConfig(epochs=args.epochs, batch_size=args.batch,
                                    lr=args.lr, dim=args.dim, seed=args.seed)
    result = ordering.train_order_encoder(train_seqs, cfg)

    out = Path(args.out)
    ordering.save_order_model(out, result.encoder, result.hyperplane)
    _echo_config(out, args)
    _write_text(out / "train_log.txt", "\n".join(result.log) + "\n")

    _, test_seqs = store.load_split("test")
    report = _hypercut_report(result.encoder, result.hyperplane, test_seqs)
    report["degenerate"] = result.degenerate
    _write_json(out / "metrics.json", report)
    text = "".join(f"{k}={v}\n" for k, v in sorted(report.items()))
    _write_text(out / "report.txt", text)
    print(text, end="")
    return 0


def _hypercut_report(encoder, h, seqs):
    report = {"hit": ordering.hit_rate(encoder, h, seqs)}
    n_pairs = len(ordering.symmetric_pair_indices(seqs.shape[1]))
    for x in (2, 3):
        if x <= n_pairs:
            report[f"con{x}"] = ordering.con_rate(encoder, h, seqs, x)
    return report


def cmd_eval_hypercut(args):
    store = DatasetStore(args.data)
    encoder, h = ordering.load_order_model(args.model)
    _, test_seqs = store.load_split("test")
    report = _hypercut_report(encoder, h, test_seqs)
    text = "".join(f"{k}={v}\n" for k, v in sorted(report.items()))
    if args.out:
        out = Path(args.out)
        _echo_config(out, args)
        _write_json(out / "metrics.json", report)
        _write_text(out / "report.txt", text)
    print(text, end="")
    return 0


def _load_encoder_if_needed(args, needed):
    if args.encoder:
        return ordering.load_order_model(args.encoder)
    if needed:
        raise ValueError("this regime requires --encoder (a trained order model)")
    return None, None


def cmd_train_deblur(args):
    store = DatasetStore(args.data)
    needs_encoder = args.regime.endswith("+hypercut")
    encoder, h = _load_encoder_if_needed(args, needs_encoder)
    loss_cfg = blur2vid.LossConfig.from_regime(args.regime, alpha=args.alpha,
                                               encoder=encoder, hyperplane=h)
    train_b, train_f = store.load_split("train")
    test_b, test_f = store.load_split("test")
    cfg = blur2vid.DeblurTrainConfig(epochs=args.epochs, batch_size=args.batch,
                                     lr=args.lr, seed=args.seed)
    result = blur2vid.train_deblur(train_b, train_f, loss_cfg, cfg,
                                   test_blurry=test_b, test_frames=test_f)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .diffcore import save_checkpoint

    save_checkpoint(out / "model.ckpt", result.model.state())
    _write_json(out / "model.json", {
        "height": result.model.height, "width": result.model.width,
        "channels": result.model.channels, "n_frames": result.model.n_frames,
    })
    _write_text(out / "train_log.txt", "\n".join(result.log) + "\n")
    _echo_config(out, args)
    print(result.log[-1])
    return 0


def _load_deblur_model(model_dir) -> blur2vid.FramePredictor:
    from .diffcore import load_checkpoint

    model_dir = Path(model_dir)
    with open(model_dir / "model.json") as f:
        meta = json.load(f)
    model = blur2vid.FramePredictor(meta["height"], meta["width"],
                                    meta["channels"], meta["n_frames"])
    model.load_state(load_checkpoint(model_dir / "model.ckpt"))
    return model


def cmd_eval_deblur(args):
    store = DatasetStore(args.data)
    model = _load_deblur_model(args.model)
    encoder, h = _load_encoder_if_needed(args, needed=False)
    test_b, test_f = store.load_split("test")
    preds = model.predict(test_b)
    report = metrics.evaluate_predictions(preds, test_f, encoder=encoder, h=h,
                                          pair_average=args.pair_average)
    if args.out:
        out = Path(args.out)
        _echo_config(out, args)
        _write_text(out / "metrics.json", report.to_json())
        _write_text(out / "report.txt", report.to_text())
    print(report.to_text(), end="")
    return 0


def cmd_align(args):
    _, stream = read_b2v(args.stream)
    blurry_path = Path(args.blurry)
    if blurry_path.suffix.lower() == ".png":
        from PIL import Image

        img = np.asarray(Image.open(blurry_path), dtype=np.float32) / 255.0
        if img.ndim == 2:
            img = img[..., None]
        blurry = img
    else:
        blurry, _ = read_b2v(blurry_path)
    result = pipeline.temporal_align(blurry, stream)
    out = Path(args.out)
    _echo_config(out, args)
    _write_json(out / "alignment.json", {
        "offset": result.offset,
        "score": result.score,
        "matrix": [[float(v) for v in row] for row in result.correction.matrix],
    })
    fake = pipeline.synth_fake_blur(result.aligned_frames)
    write_b2v(out / "aligned.b2v", fake, result.aligned_frames)
    print(f"offset={result.offset} score={result.score:.4f}")
    return 0


def cmd_dump_embeddings(args):
    store = DatasetStore(args.data)
    encoder, h = ordering.load_order_model(args.model)
    _, test_seqs = store.load_split("test")
    points, sides = ordering.project_embeddings_2d(encoder, h, test_seqs)
    out = Path(args.out)
    _echo_config(out, args)
    _write_json(out / "embeddings_2d.json", {
        "points": [[float(a), float(b)] for a, b in points],
        "sides": [int(s) for s in sides],
    })
    print(f"wrote {len(points)} projected embeddings to {out / 'embeddings_2d.json'}")
    return 0


def cmd_ablate_alpha(args):
    store = DatasetStore(args.data)
    encoder, h = ordering.load_order_model(args.encoder)
    train_b, train_f = store.load_split("train")
    test_b, test_f = store.load_split("test")
    rows = []
    for alpha in args.alphas:
        loss_cfg = blur2vid.LossConfig(base="oi", alpha=alpha,
                                       encoder=encoder if alpha > 0 else None,
                                       hyperplane=h if alpha > 0 else None)
        cfg = blur2vid.DeblurTrainConfig(epochs=args.epochs, batch_size=args.batch,
                                         lr=args.lr, seed=args.seed)
        result = blur2vid.train_deblur(train_b, train_f, loss_cfg, cfg)
        preds = result.model.predict(test_b)
        rep = metrics.evaluate_predictions(preds, test_f, encoder=encoder, h=h)
        rows.append({"alpha": alpha, "mean_ppsnr": rep.mean_ppsnr,
                     "order_agreement": rep.order_agreement})
    table = "alpha      mean_ppsnr  order_agreement\n" + "".join(
        f"{r['alpha']:<10g} {r['mean_ppsnr']:<11.4f} {r['order_agreement']:.4f}\n"
        for r in rows)
    out = Path(args.out)
    _echo_config(out, args)
    _write_json(out / "ablate_alpha.json", rows)
    _write_text(out / "ablate_alpha.txt", table)
    print(table, end="")
    return 0


def cmd_ablate_n(args):
    store = DatasetStore(args.data)
    _, train_seqs = store.load_split("train")
    _, test_seqs = store.load_split("test")
    rows = []
    for dim in args.dims:
        cfg = ordering.OrderTrainConfig(epochs=args.epochs, batch_size=args.batch,
                                        lr=args.lr, dim=dim, seed=args.seed)
        result = ordering.train_order_encoder(train_seqs, cfg)
        report = _hypercut_report(result.encoder, result.hyperplane, test_seqs)
        rows.append({"dim": dim, **report})
    header = "dim    " + "  ".join(k for k in rows[0] if k != "dim") + "\n"
    table = header + "".join(
        f"{r['dim']:<6d} " + "  ".join(f"{r[k]:.4f}" for k in r if k != "dim") + "\n"
        for r in rows)
    out = Path(args.out)
    _echo_config(out, args)
    _write_json(out / "ablate_n.json", rows)
    _write_text(out / "ablate_n.txt", table)
    print(table, end="")
    return 0


def cmd_toy_demo(args):
    """Border-frame recovery under the three regimes, on self-generated data."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_dir = out / "data"
    dist = SceneDistribution(height=args.size, width=args.size, channels=1,
                             n_frames=args.frames)
    generate_dataset(data_dir, count=args.count, seed=args.seed, dist=dist)
    store = DatasetStore(data_dir)
    train_b, train_f = store.load_split("train")
    test_b, test_f = store.load_split("test")
    # two-frame target task: keep only the border frames
    train_borders = train_f[:, [0, -1]]
    test_borders = test_f[:, [0, -1]]

    enc_cfg = ordering.OrderTrainConfig(epochs=args.epochs, batch_size=args.batch,
                                        lr=args.lr, dim=args.dim, seed=args.seed)
    enc_result = ordering.train_order_encoder(train_borders, enc_cfg)
    encoder, h = enc_result.encoder, enc_result.hyperplane

    report = {}
    for regime in ("rec", "oi", "oi+hypercut"):
        loss_cfg = blur2vid.LossConfig.from_regime(
            regime, alpha=args.alpha, encoder=encoder, hyperplane=h)
        cfg = blur2vid.DeblurTrainConfig(epochs=args.epochs, batch_size=args.batch,
                                         lr=args.lr, seed=args.seed)
        result = blur2vid.train_deblur(train_b, train_borders, loss_cfg, cfg)
        preds = result.model.predict(test_b)
        entry = {"order_agreement": metrics.order_agreement(preds, encoder, h)}
        if regime == "rec":
            collapse = 0
            for p, g in zip(preds, test_borders):
                avg = 0.5 * (g[0] + g[1])
                if metrics.psnr(p[0], avg) > metrics.psnr(p[0], g[0]):
                    collapse += 1
            entry["average_collapse_score"] = collapse / len(preds)
        report[regime] = entry
        for i in range(min(4, len(preds))):
            panel = np.concatenate([
                np.concatenate([preds[i][0], preds[i][1]], axis=1),
                np.concatenate([test_borders[i][0], test_borders[i][1]], axis=1),
            ], axis=0)
            _save_png(out / f"{regime.replace('+', '_')}_sample{i}.png", panel)

    _echo_config(out, args)
    _write_json(out / "toy_report.json", report)
    lines = []
    for regime, entry in report.items():
        for k, v in entry.items():
            lines.append(f"{regime}.{k}={v:.4f}")
    _write_text(out / "toy_report.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypercut",
        description="Blur-to-video lab: data generation, order-encoder and "
                    "deblur training, metrics, and stream alignment.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, out=True):
        if data:
            p.add_argument("--data", type=Path, required=True, help="dataset directory")
        if out:
            p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)

    def train_flags(p, epochs, batch, lr):
        p.add_argument("--epochs", type=int, default=epochs)
        p.add_argument("--batch", type=int, default=batch)
        p.add_argument("--lr", type=float, default=lr)

    p = sub.add_parser("gen-data", help="render a synthetic dataset")
    common(p, data=False)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--frames", type=int, default=7, help="frames per sequence (N+1)")
    p.add_argument("--size", type=int, default=32, help="canvas height and width")
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--split", type=float, default=0.2, help="test fraction")
    p.add_argument("--static", action="store_true",
                   help="zero-velocity scenes (degenerate, for diagnostics)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-hypercut", help="train the order encoder")
    common(p)
    train_flags(p, epochs=14, batch=64, lr=2e-3)
    p.add_argument("--dim", type=int, default=128, help="embedding dimension n")
    p.set_defaults(func=cmd_train_hypercut)

    p = sub.add_parser("eval-hypercut", help="hit/con rates on the test split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True, help="trained order model dir")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval_hypercut)

    p = sub.add_parser("train-deblur", help="train a frame predictor")
    common(p)
    train_flags(p, epochs=24, batch=32, lr=2e-3)
    p.add_argument("--regime", default="oi+hypercut",
                   choices=["rec", "oi", "oi+hypercut", "rec+hypercut"])
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--encoder", type=Path, default=None,
                   help="trained order model dir (required for *+hypercut)")
    p.set_defaults(func=cmd_train_deblur)

    p = sub.add_parser("eval-deblur", help="pair-based metrics on the test split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--encoder", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pair-average", action="store_true",
                   help="score pPSNR as the best orientation's pair average")
    p.set_defaults(func=cmd_eval_deblur)

    p = sub.add_parser("align", help="temporally align a blurry image to a stream")
    p.add_argument("--stream", type=Path, required=True, help="sharp stream (.b2v)")
    p.add_argument("--blurry", type=Path, required=True, help="blurry image (.b2v or .png)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("toy-demo", help="border-frame degeneracy demonstration")
    common(p, data=False)
    train_flags(p, epochs=10, batch=32, lr=2e-3)
    p.add_argument("--count", type=int, default=600)
    p.add_argument("--frames", type=int, default=7)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--alpha", type=float, default=0.2)
    p.set_defaults(func=cmd_toy_demo)

    p = sub.add_parser("dump-embeddings", help="2-D projection of pair embeddings")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dump_embeddings)

    p = sub.add_parser("ablate-alpha", help="mean pPSNR per regularization weight")
    common(p)
    train_flags(p, epochs=24, batch=32, lr=2e-3)
    p.add_argument("--encoder", type=Path, required=True)
    p.add_argument("--alphas", type=_float_list, default=[0.0, 0.1, 0.2, 0.3])
    p.set_defaults(func=cmd_ablate_alpha)

    p = sub.add_parser("ablate-n", help="hit/con per embedding dimension")
    common(p)
    train_flags(p, epochs=14, batch=64, lr=2e-3)
    p.add_argument("--dims", type=_int_list, default=[1, 16, 64, 128, 256])
    p.set_defaults(func=cmd_ablate_n)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failure -> exit 1, usage errors exit 2 above
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
