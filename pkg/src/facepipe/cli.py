"""Command-line interface.

Subcommands: decimate, render-maps, fit, sample-bs, lipsync-sim, metrics.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import containers
from .audio import load_wav, mel_chunk
from .camera import default_camera
from .decimate import decimate_symmetric, expression_quadrics
from .diffusion import build_schedule, sample
from .fitting import FitConfig, LandmarkTrack, fit_sequence
from .maps import render_maps
from .pipeline import (
    LipsyncJob,
    delta_cl,
    lipsync_run,
    load_boxes,
    load_image,
    make_denoiser,
    save_image,
)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="facepipe")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--config", help="job JSON for lipsync-sim")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decimate", help="expression-averaged symmetric decimation")
    p.add_argument("--model", required=True)
    p.add_argument("--target-verts", type=int, required=True)
    p.add_argument("--expr", type=int, default=50)
    p.add_argument("--mean-only", action="store_true",
                   help="use mean-shape quadrics instead of expression averaging")
    p.add_argument("--out", required=True)
    p.add_argument("--plan")

    p = sub.add_parser("render-maps", help="render P/S/flow maps for a sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--contours", required=True)
    p.add_argument("--ref-frame", type=int, default=0)
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("fit", help="fit parameters to a landmark track")
    p.add_argument("--model", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=2500)
    p.add_argument("--resolution", type=int, default=224)
    p.add_argument("--focal", type=float)

    p = sub.add_parser("sample-bs", help="sample a mouth blendshape clip")
    p.add_argument("--audio", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--denoiser", default="mock",
                   help="mock or file:<clip.bsc>")
    p.add_argument("--context")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--guidance", type=float, default=1.2)
    p.add_argument("--out", required=True)

    p = sub.add_parser("lipsync-sim", help="run the full pipeline from a job config")
    p.add_argument("--out-dir")

    p = sub.add_parser("metrics", help="evaluation metrics")
    msub = p.add_subparsers(dest="metric", required=True)
    m = msub.add_parser("locality")
    m.add_argument("--pred", required=True)
    m.add_argument("--ref", required=True)
    m.add_argument("--mask", required=True)
    m = msub.add_parser("delta-cl")
    m.add_argument("--orig", required=True)
    m.add_argument("--lipsync", required=True)

    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = 0 if args.command != "lipsync-sim" else None
    return COMMANDS[args.command](args)


def cmd_decimate(args):
    model = containers.load_model(args.model)
    if args.mean_only:
        quadrics = expression_quadrics(model, expressions=np.zeros((1, 55)))
    else:
        quadrics = expression_quadrics(model, n_expr=args.expr, seed=args.seed)
    decimated, plan = decimate_symmetric(model, quadrics, args.target_verts)
    containers.save_model(args.out, decimated)
    if args.plan:
        with open(args.plan, "w") as fh:
            json.dump(plan.to_dict(), fh)
    print("decimated %d -> %d vertices (%d triangles), target %s"
          % (model.vertex_count, plan.achieved_vertices,
             plan.achieved_triangles,
             "reached" if plan.reached_target else "NOT reached"))
    return 0


def cmd_render_maps(args):
    model = containers.load_model(args.model)
    frames, camera, _ = containers.load_params(args.params)
    with open(args.contours) as fh:
        contours = json.load(fh)
    camera = camera or default_camera(args.resolution)
    if camera.image_size != (args.resolution, args.resolution):
        from .pipeline import _scaled_camera
        camera = _scaled_camera(camera, args.resolution / camera.image_size[0])
    os.makedirs(args.out_dir, exist_ok=True)
    ref = frames[args.ref_frame]
    for f, dri in enumerate(frames):
        maps = render_maps(model, ref, dri, camera, contours)
        for tag, data in (("P", maps.P), ("S", maps.S),
                          ("F3dmm", maps.F_3dmm), ("fg", maps.foreground)):
            containers.save_map(
                os.path.join(args.out_dir, "%s_%05d.fmap" % (tag, f)),
                data, semantic=tag)
            _save_preview(
                os.path.join(args.out_dir, "%s_%05d.png" % (tag, f)), data)
    print("wrote maps for %d frames to %s" % (len(frames), args.out_dir))
    return 0


def _save_preview(path, data):
    lo, hi = float(data.min()), float(data.max())
    scaled = (data - lo) / (hi - lo) if hi > lo else np.zeros_like(data)
    if scaled.shape[0] == 1:
        scaled = np.repeat(scaled, 3, axis=0)
    elif scaled.shape[0] == 2:
        scaled = np.concatenate([scaled, np.zeros_like(scaled[:1])])
    save_image(path, scaled[:3])


def cmd_fit(args):
    model = containers.load_model(args.model)
    points, visible = containers.load_landmarks(args.landmarks)
    camera = default_camera(args.resolution)
    if args.focal:
        from dataclasses import replace
        camera = replace(camera, focal=args.focal)
    track = LandmarkTrack(points=points, visible=visible)
    result = fit_sequence(track, model, camera=camera,
                          config=FitConfig(iterations=args.iters))
    diagnostics = dict(result.diagnostics)
    diagnostics.update({
        "landmark_rmse": result.landmark_rmse.tolist(),
        "final_loss": result.final_loss,
        "iterations": result.iterations,
        "converged": result.converged,
        "terms": result.terms,
    })
    containers.save_params(args.out, result.frames, camera=camera,
                           diagnostics=diagnostics)
    print("fit %d frames: rmse %.4f px (max %.4f), %s after %d iterations"
          % (len(result.frames), result.landmark_rmse.mean(),
             result.landmark_rmse.max(),
             "converged" if result.converged else "budget exhausted",
             result.iterations))
    return 0


def cmd_sample_bs(args):
    audio, rate = load_wav(args.audio)
    if len(audio) < 32000:
        print("audio shorter than 2 s", file=sys.stderr)
        return 2
    chunks = mel_chunk(audio[:32000], rate)
    style, _ = containers.load_clip(args.style)
    if args.context:
        ctx_values, _ = containers.load_clip(args.context)
        context = ctx_values[:5].astype(np.float64)
    else:
        context = np.zeros((5, 35))
    name = "wave" if args.denoiser == "mock" else args.denoiser
    denoiser = make_denoiser(name, None, None)
    schedule = build_schedule()
    clip = sample(denoiser, context, chunks.chunks, style, schedule,
                  steps=args.steps, seed=args.seed,
                  guidance_scale=args.guidance)
    containers.save_clip(args.out, clip.values)
    print("sampled clip -> %s" % args.out)
    return 0


def cmd_lipsync_sim(args):
    if not args.config:
        print("lipsync-sim requires --config job.json", file=sys.stderr)
        return 2
    job = LipsyncJob.from_json(args.config)
    if args.out_dir:
        job.out_dir = args.out_dir
    job.seed = args.seed if args.seed is not None else job.seed
    job.threads = args.threads
    report = lipsync_run(job)
    print(json.dumps({
        "frames": report["frames"],
        "locality_mean": report["locality_mean"],
        "outside_change_mean": report["outside_change_mean"],
        "delta_cl_mean": report["delta_cl_mean"],
    }, indent=1))
    return 0


def cmd_metrics(args):
    from .warp import locality_metric
    if args.metric == "locality":
        pred = load_image(args.pred)
        ref = load_image(args.ref)
        if args.mask.endswith(".fmap"):
            mask, _ = containers.load_map(args.mask)
            mask = mask[0]
        else:
            mask = load_image(args.mask)[0]
        value = locality_metric(pred, ref, mask)
        print("%.6f" % value)
    else:
        orig = load_boxes(args.orig)
        sync = load_boxes(args.lipsync)
        values, mean = delta_cl(orig, sync)
        for f, v in enumerate(values):
            print("frame %d: %.4f" % (f, v))
        print("mean: %.4f" % mean)
    return 0


COMMANDS = {
    "decimate": cmd_decimate,
    "render-maps": cmd_render_maps,
    "fit": cmd_fit,
    "sample-bs": cmd_sample_bs,
    "lipsync-sim": cmd_lipsync_sim,
    "metrics": cmd_metrics,
}


if __name__ == "__main__":
    sys.exit(main())
