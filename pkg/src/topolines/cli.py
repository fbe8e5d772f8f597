"""Command-line workflows wiring the toolkit into file-based pipelines.

Exit codes: 0 on success, 1 on usage errors (bad flags or paths), 2 on
data errors (unreadable or inconsistent file contents). Every command
that writes files also writes a ``run_config.json`` echo of its flags,
and all outputs are byte-identical across re-runs with equal flags.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from .baselines import format_baselines, parse_baselines, post_process
from .components import label_components
from .loss import ConnectivityLoss
from .metrics import baseline_fmeasure, line_iou, line_match_metrics, pixel_iou
from .pageio import (
    DatasetManifest,
    ManifestEntry,
    read_mask,
    read_prob_map,
    write_manifest,
    write_mask,
    write_prob_map,
)
from .patches import gaussian_window, stitch
from .repair import RepairError, TopologyRepair, trace_to_tsv
from .synth import PageSpec, generate_page

THREADS_ENV_VAR = "TOPOLINES_THREADS"


@click.group()
def cli():
    """Connectivity-aware text line segmentation toolkit."""


def _write_config(out_dir: Path, command: str, params: dict) -> None:
    payload = {"command": command, "params": params}
    (out_dir / "run_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _report_lines(report: dict) -> list[str]:
    lines = []
    for key, value in report.items():
        if key == "per_page":
            continue
        lines.append(f"{key} {_fmt(value) if isinstance(value, float) else value}")
    for page in report.get("per_page", ()):
        fields = " ".join(
            f"{k}={_fmt(v) if isinstance(v, float) else v}"
            for k, v in page.items()
            if k != "page"
        )
        lines.append(f"page {page['page']} {fields}")
    return lines


def _emit_report(report: dict, as_json: bool, out_dir: Path | None) -> None:
    text = "".join(line + "\n" for line in _report_lines(report))
    as_json_text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    click.echo(as_json_text if as_json else text, nl=False)
    if out_dir is not None:
        (out_dir / "report.txt").write_text(text, encoding="utf-8")
        (out_dir / "report.json").write_text(as_json_text, encoding="utf-8")


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return threads
    return max(1, int(os.environ.get(THREADS_ENV_VAR, "1")))


@cli.command()
@click.option("--pages", type=click.IntRange(min=1), required=True, help="Number of pages.")
@click.option("--lines", type=click.IntRange(min=1), default=5, show_default=True,
              help="Text lines per column.")
@click.option("--width", type=click.IntRange(min=16), default=256, show_default=True)
@click.option("--height", type=click.IntRange(min=8), default=192, show_default=True)
@click.option("--columns", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--min-gap", type=click.IntRange(min=1), default=8, show_default=True,
              help="Minimum vertical gap between lines.")
@click.option("--max-gap", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--waviness", type=click.FloatRange(min=0), default=2.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--manuscript", default="synthetic", show_default=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="train",
              show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def gen(pages, lines, width, height, columns, min_gap, max_gap, waviness, seed,
        manuscript, split, out):
    """Generate synthetic pages: image, ground-truth mask, baselines, manifest."""
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(pages):
        spec = PageSpec(
            width=width,
            height=height,
            n_lines=lines,
            gap_range=(min_gap, max_gap),
            waviness=waviness,
            columns=columns,
            seed=seed + i,
        )
        image, labels, baselines = generate_page(spec)
        stem = f"page_{i:03d}"
        write_prob_map(out / f"{stem}.png", image)
        write_mask(out / f"{stem}_gt.png", labels > 0)
        (out / f"{stem}_baselines.txt").write_text(
            format_baselines(baselines), encoding="utf-8"
        )
        entries.append(
            ManifestEntry(image=f"{stem}.png", gt=f"{stem}_gt.png",
                          split=split, manuscript=manuscript)
        )
    write_manifest(DatasetManifest(entries=tuple(entries)), out / "manifest.tsv")
    _write_config(out, "gen", {
        "pages": pages, "lines": lines, "width": width, "height": height,
        "columns": columns, "min_gap": min_gap, "max_gap": max_gap,
        "waviness": waviness, "seed": seed, "manuscript": manuscript,
        "split": split, "out": str(out),
    })
    click.echo(f"wrote {pages} page(s) to {out}")


def _paired_stems(gt_dir: Path, pred_dir: Path, suffix: str, allow_missing: bool):
    gt_stems = {p.stem: p for p in sorted(gt_dir.glob(f"*{suffix}"))}
    pred_stems = {p.stem: p for p in sorted(pred_dir.glob(f"*{suffix}"))}
    missing = sorted(set(gt_stems) ^ set(pred_stems))
    if missing and not allow_missing:
        raise ValueError(
            "pages without a counterpart: " + ", ".join(missing)
            + " (pass --allow-missing to evaluate the intersection)"
        )
    common = sorted(set(gt_stems) & set(pred_stems))
    if not common:
        raise ValueError(f"no page pairs found under {gt_dir} and {pred_dir}")
    return [(stem, gt_stems[stem], pred_stems[stem]) for stem in common]


def _eval_mask_page(stem, gt_path, pred_path, threshold, connectivity):
    gt_mask = read_mask(gt_path)
    pred_mask = read_mask(pred_path)
    if gt_mask.shape != pred_mask.shape:
        raise ValueError(
            f"page {stem}: mask shapes differ "
            f"({gt_mask.shape} vs {pred_mask.shape})"
        )
    gt_labels = label_components(gt_mask, connectivity)
    pred_labels = label_components(pred_mask, connectivity)
    match = line_match_metrics(gt_labels, pred_labels, threshold)
    return {
        "page": stem,
        "pixel_iou": pixel_iou(gt_mask, pred_mask),
        "line_iou": line_iou(gt_labels, pred_labels, threshold),
        "dr": match.dr,
        "ra": match.ra,
        "fm": match.fm,
    }


def _eval_baseline_page(stem, gt_path, pred_path, tolerance):
    gt_lines = parse_baselines(gt_path.read_text(encoding="utf-8"))
    pred_lines = parse_baselines(pred_path.read_text(encoding="utf-8"))
    report = baseline_fmeasure(gt_lines, pred_lines, tolerance)
    return {
        "page": stem,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
    }


@cli.command("eval")
@click.option("--gt", "gt_dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
              required=True, help="Directory of ground-truth pages.")
@click.option("--pred", "pred_dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
              required=True, help="Directory of predicted pages.")
@click.option("--mode", type=click.Choice(["mask", "baseline"]), default="mask",
              show_default=True)
@click.option("--match-threshold", type=click.FloatRange(0.0, 1.0), default=0.75,
              show_default=True, help="Component match threshold (mask mode).")
@click.option("--tolerance", type=click.FloatRange(min=0.0, min_open=True), default=20.0,
              show_default=True, help="Point distance tolerance in px (baseline mode).")
@click.option("--connectivity", type=click.Choice(["4", "8"]), default="8", show_default=True)
@click.option("--allow-missing", is_flag=True, help="Skip pages without a counterpart.")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help=f"Worker threads (default: ${THREADS_ENV_VAR} or 1).")
@click.option("--json", "as_json", is_flag=True, help="Print the report as JSON.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Also write report files to this directory.")
def eval_cmd(gt_dir, pred_dir, mode, match_threshold, tolerance, connectivity,
             allow_missing, threads, as_json, out):
    """Evaluate predicted pages against ground truth, page by page."""
    connectivity = int(connectivity)
    threads = _resolve_threads(threads)
    suffix = ".png" if mode == "mask" else ".txt"
    pairs = _paired_stems(gt_dir, pred_dir, suffix, allow_missing)

    if mode == "mask":
        def work(pair):
            stem, gt_path, pred_path = pair
            return _eval_mask_page(stem, gt_path, pred_path, match_threshold, connectivity)
        metric_keys = ("pixel_iou", "line_iou", "dr", "ra", "fm")
    else:
        def work(pair):
            stem, gt_path, pred_path = pair
            return _eval_baseline_page(stem, gt_path, pred_path, tolerance)
        metric_keys = ("precision", "recall", "f1")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_page = list(pool.map(work, pairs))
    else:
        per_page = [work(pair) for pair in pairs]
    per_page.sort(key=lambda row: row["page"])

    report: dict = {"mode": mode, "pages": len(per_page)}
    if mode == "mask":
        report["match_threshold"] = match_threshold
    else:
        report["tolerance"] = tolerance
    for key in metric_keys:
        report[key] = float(np.mean([row[key] for row in per_page]))
    report["per_page"] = per_page

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_config(out, "eval", {
            "gt": str(gt_dir), "pred": str(pred_dir), "mode": mode,
            "match_threshold": match_threshold, "tolerance": tolerance,
            "connectivity": connectivity, "allow_missing": allow_missing,
        })
    _emit_report(report, as_json, out)


@cli.command("loss")
@click.option("--gt", "gt_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Ground-truth mask PNG.")
@click.option("--pred", "pred_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Prediction PNG, gray values read as value/255.")
@click.option("--alpha", type=click.FloatRange(0.0, 1.0), default=1.0, show_default=True)
@click.option("--beta", type=click.FloatRange(0.0, 1.0), default=0.0, show_default=True)
@click.option("--binarize-threshold", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True),
              default=0.5, show_default=True)
@click.option("--dice-epsilon", type=click.FloatRange(min=0.0), default=1.0, show_default=True)
@click.option("--structure-weight", type=click.FloatRange(min=0.0, min_open=True), default=10.0,
              show_default=True)
@click.option("--connectivity", type=click.Choice(["4", "8"]), default="8", show_default=True)
@click.option("--select-dump", is_flag=True,
              help="Write merge/split component overlays (requires --out).")
@click.option("--json", "as_json", is_flag=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None)
def loss_cmd(gt_path, pred_path, alpha, beta, binarize_threshold, dice_epsilon,
             structure_weight, connectivity, select_dump, as_json, out):
    """Evaluate the connectivity loss between a mask and a prediction."""
    if select_dump and out is None:
        raise click.UsageError("--select-dump requires --out")
    gt = read_mask(gt_path)
    pred = read_prob_map(pred_path)
    loss = ConnectivityLoss(
        alpha=alpha,
        beta=beta,
        binarize_threshold=binarize_threshold,
        dice_epsilon=dice_epsilon,
        structure_weight=structure_weight,
        connectivity=int(connectivity),
    )
    selection = loss.select(gt, pred)
    result = loss.report(gt, pred, selection)

    report = {
        "alpha": alpha,
        "beta": beta,
        "total": result.total,
        "dice_term": result.dice_term,
        "pixel_term": result.pixel_term,
        "merge_term": result.merge_term,
        "split_term": result.split_term,
        "n_pixels": result.n_pixels,
        "n_merge_components": len(selection.merge_components),
        "n_split_components": len(selection.split_components),
    }
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_config(out, "loss", {
            "gt": str(gt_path), "pred": str(pred_path), "alpha": alpha, "beta": beta,
            "binarize_threshold": binarize_threshold, "dice_epsilon": dice_epsilon,
            "structure_weight": structure_weight, "connectivity": int(connectivity),
            "select_dump": select_dump,
        })
        if select_dump:
            write_mask(out / "merge_components.png", selection.merge_mask())
            write_mask(out / "split_components.png", selection.split_mask())
    _emit_report(report, as_json, out)


def _read_positions(path: Path) -> list[tuple[str, int, int]]:
    rows = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != 3:
            raise ValueError(
                f"{path}: line {lineno}: expected 'name<TAB>x<TAB>y', got {raw!r}"
            )
        try:
            rows.append((fields[0], int(fields[1]), int(fields[2])))
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: malformed coordinates") from exc
    if not rows:
        raise ValueError(f"{path}: no patch positions found")
    return rows


@cli.command("stitch")
@click.option("--patches", "patch_dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
              required=True, help="Directory of patch prediction PNGs.")
@click.option("--positions", "positions_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="TSV of patch placements: name, x, y.")
@click.option("--width", type=click.IntRange(min=1), required=True)
@click.option("--height", type=click.IntRange(min=1), required=True)
@click.option("--sigma", type=click.FloatRange(min=0.0, min_open=True), default=None,
              help="Gaussian window sigma (default: patch size / 4).")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def stitch_cmd(patch_dir, positions_path, width, height, sigma, out):
    """Blend overlapping patch predictions into one full-size map."""
    rows = _read_positions(positions_path)
    patches = [read_prob_map(patch_dir / name) for name, _, _ in rows]
    positions = [(x, y) for _, x, y in rows]
    window = gaussian_window(patches[0].shape[0], sigma)
    blended = stitch(patches, positions, width, height, window)
    out.mkdir(parents=True, exist_ok=True)
    write_prob_map(out / "stitched.png", blended)
    _write_config(out, "stitch", {
        "patches": str(patch_dir), "positions": str(positions_path),
        "width": width, "height": height, "sigma": sigma,
    })
    click.echo(f"wrote {out / 'stitched.png'}")


@cli.command("repair")
@click.option("--gt", "gt_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Ground-truth mask PNG.")
@click.option("--pred", "pred_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Initial prediction PNG.")
@click.option("--alpha", type=click.FloatRange(0.0, 1.0), default=1.0, show_default=True)
@click.option("--beta", type=click.FloatRange(0.0, 1.0), default=0.0, show_default=True)
@click.option("--steps", type=click.IntRange(min=1), default=500, show_default=True)
@click.option("--step-size", type=click.FloatRange(min=0.0, min_open=True), default=0.5,
              show_default=True)
@click.option("--refresh-every", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--log-every", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--soften", type=click.FloatRange(0.0, 0.5, min_open=True, max_open=True),
              default=0.05, show_default=True,
              help="Clamp initial probabilities into [soften, 1 - soften].")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def repair_cmd(gt_path, pred_path, alpha, beta, steps, step_size, refresh_every,
               log_every, soften, out):
    """Descend the connectivity loss on a prediction's logits."""
    gt = read_mask(gt_path)
    init = np.clip(read_prob_map(pred_path), soften, 1.0 - soften)
    model = TopologyRepair(
        loss=ConnectivityLoss(alpha=alpha, beta=beta),
        steps=steps,
        step_size=step_size,
        refresh_every=refresh_every,
        log_every=log_every,
    )
    model.fit(init, gt)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.tsv").write_text(trace_to_tsv(model.trace_), encoding="utf-8")
    write_prob_map(out / "final_prob.png", model.probs_)
    write_mask(out / "final_mask.png", model.probs_ >= 0.5)
    _write_config(out, "repair", {
        "gt": str(gt_path), "pred": str(pred_path), "alpha": alpha, "beta": beta,
        "steps": steps, "step_size": step_size, "refresh_every": refresh_every,
        "log_every": log_every, "soften": soften,
    })
    last = model.trace_[-1]
    click.echo(
        f"final loss {last.total:.6g}, components {last.n_components}, "
        f"pixel IoU {last.pixel_iou:.4f}"
    )


@cli.command("postprocess")
@click.option("--mask", "mask_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Predicted mask PNG.")
@click.option("--min-length", type=click.FloatRange(min=0.0, min_open=True), default=50.0,
              show_default=True)
@click.option("--distance", type=click.FloatRange(min=0.0, min_open=True), default=50.0,
              show_default=True, help="Merge distance threshold in px.")
@click.option("--angle", type=click.FloatRange(min=0.0, min_open=True), default=15.0,
              show_default=True, help="Merge angle threshold in degrees.")
@click.option("--order", type=click.Choice(["filter-first", "merge-first"]),
              default="filter-first", show_default=True)
@click.option("--connectivity", type=click.Choice(["4", "8"]), default="8", show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def postprocess_cmd(mask_path, min_length, distance, angle, order, connectivity, out):
    """Extract baselines from a mask and apply the cleanup pipeline."""
    mask = read_mask(mask_path)
    lines = post_process(
        mask,
        min_length=min_length,
        distance_threshold=distance,
        angle_threshold=angle,
        order=order,
        connectivity=int(connectivity),
    )
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{mask_path.stem}.baselines.txt"
    target.write_text(format_baselines(lines), encoding="utf-8")
    _write_config(out, "postprocess", {
        "mask": str(mask_path), "min_length": min_length, "distance": distance,
        "angle": angle, "order": order, "connectivity": int(connectivity),
    })
    click.echo(f"wrote {len(lines)} baseline(s) to {target}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (ValueError, OSError, RepairError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
