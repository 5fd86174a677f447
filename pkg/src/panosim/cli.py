"""Command-line entry points.

Batch commands (scene/dataset generation, training, metrics, benchmarks)
run in-process; `serve` starts the FastAPI session service that the
browser teleop client talks to.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _load_scene(path):
    from .bvh import build_bvh
    from .mesh import load_obj

    mesh = load_obj(path)
    return mesh, build_bvh(mesh)


def cmd_gen_scene(args):
    from .mesh import save_obj
    from .synth import SceneSpec, generate_scene

    spec = SceneSpec.from_json(json.loads(Path(args.spec).read_text())) \
        if args.spec else SceneSpec(seed=args.seed)
    mesh = generate_scene(spec)
    save_obj(mesh, args.out)
    print(f"wrote {mesh.n_faces} faces to {args.out}")


def cmd_gen_dataset(args):
    from .dataset import PanoramaDataset
    from .synth import build_dataset, sample_panorama_poses

    _, bvh = _load_scene(args.scene)
    poses = sample_panorama_poses(bvh, density=args.density, seed=args.seed)
    ds = build_dataset(bvh, poses, 2 * args.height, args.height)
    ds.save(args.out)
    print(f"wrote {len(ds)} panoramas ({args.height}x{2 * args.height}) to {args.out}")


def cmd_corrupt(args):
    from .synth import CorruptionSpec, corrupt_dataset

    spec = CorruptionSpec.from_json(json.loads(Path(args.spec).read_text()))
    corrupt_dataset(args.input, spec, args.out)
    print(f"wrote corrupted dataset to {args.out}")


def cmd_render_view(args):
    from .dataset import PanoramaDataset, rgb_to_u8, write_pgm, write_ppm
    from .geometry import Pose6D
    from .ibr import RenderConfig, render_view

    _, bvh = _load_scene(args.mesh)
    ds = PanoramaDataset.load(args.dataset)
    pose = Pose6D.from_list([float(x) for x in args.pose.split(",")])
    cfg = RenderConfig(k=args.k, lambda_d=args.lambda_d, depth_eps=args.depth_eps,
                       width=2 * args.height, height=args.height)
    result = render_view(ds, bvh, pose, cfg)
    write_ppm(args.out, rgb_to_u8(result.rgb.data))
    if args.mask:
        write_pgm(args.mask, (result.disocclusion * 255).astype(np.uint8))
    print(f"rendered {cfg.width}x{cfg.height} from views {result.source_ids}; "
          f"dis-occluded {result.disocclusion.mean():.1%}")


def cmd_gen_pairs(args):
    from .dataset import PanoramaDataset
    from .ibr import RenderConfig
    from .synth import CorruptionSpec, make_goggles_pairs, save_pairs

    _, bvh = _load_scene(args.scene)
    ds = PanoramaDataset.load(args.dataset)
    corruption = CorruptionSpec.from_json(json.loads(Path(args.corruption).read_text())) \
        if args.corruption else CorruptionSpec(
            gain=(1.1, 0.95, 0.9), offset=(0.06, -0.04, 0.05),
            noise_sigma=0.03, vignette=0.3, seed=args.seed)
    cfg = RenderConfig(k=args.k, width=2 * args.height, height=args.height)
    pairs = make_goggles_pairs(bvh, ds, cfg, corruption, args.n, args.crop, args.seed)
    save_pairs(pairs, args.out)
    print(f"wrote {len(pairs.source)} pairs to {args.out}")


def cmd_train_filler(args):
    from .filler import FillerNet, LossConfig, stochastic_identity_init, train_filler
    from .filler.train import images_to_nchw
    from .synth import load_pairs

    pairs = load_pairs(args.pairs)
    src = images_to_nchw(pairs.source)
    tgt = images_to_nchw(pairs.target)
    net = FillerNet(n_f=args.nf, max_dilation=args.max_dilation)
    stochastic_identity_init(net, args.seed, src)
    print(f"identity init residual: {net.identity_residual:.4f}")
    history = train_filler(net, src, tgt, LossConfig(), epochs=args.epochs,
                           lr=args.lr, seed=args.seed)
    net.save(args.out)
    print(f"trained {args.epochs} epochs; loss {history[0]:.4f} -> {history[-1]:.4f}; "
          f"saved {args.out}")


def cmd_train_goggles(args):
    from .filler import FillerNet, LossConfig, stochastic_identity_init, train_joint
    from .filler.train import images_to_nchw
    from .synth import load_pairs

    pairs = load_pairs(args.pairs)
    src = images_to_nchw(pairs.source)
    tgt = images_to_nchw(pairs.target)
    f = FillerNet.load(args.filler)
    u = FillerNet(n_f=f.n_f, max_dilation=f.max_dilation)
    stochastic_identity_init(u, args.seed + 1, tgt)
    print(f"inverse-net identity residual: {u.identity_residual:.4f}")
    history = train_joint(f, u, src, tgt, LossConfig(), epochs=args.epochs,
                          lr=args.lr, seed=args.seed)
    u.save(args.out_u)
    if args.out_f:
        f.save(args.out_f)
    print(f"joint loss {history[0]:.4f} -> {history[-1]:.4f}; saved {args.out_u}")


def cmd_metrics(args):
    from .dataset import read_ppm, u8_to_rgb
    from .metrics import coral, extract_features, l1, mmd2, ssim

    names_a = sorted(p.name for p in Path(args.a).glob("*.ppm"))
    names_b = sorted(p.name for p in Path(args.b).glob("*.ppm"))
    common = [n for n in names_a if n in set(names_b)]
    if not common:
        sys.exit("no matching .ppm files between the two directories")
    imgs_a = np.stack([u8_to_rgb(read_ppm(Path(args.a) / n)) for n in common])
    imgs_b = np.stack([u8_to_rgb(read_ppm(Path(args.b) / n)) for n in common])
    fa = extract_features(imgs_a)
    fb = extract_features(imgs_b)
    raw = mmd2(fa, fb)
    report = {
        "schema_version": 1,
        "n_images": len(common),
        "l1_mean": float(np.mean([l1(x, y) for x, y in zip(imgs_a, imgs_b)])),
        "ssim_mean": float(np.mean([ssim(x, y) for x, y in zip(imgs_a, imgs_b)])),
        "mmd2_raw": raw,
        "mmd2": max(0.0, raw),
        "coral": coral(fa, fb),
    }
    with open(args.report, "w") as f:
        json.dump(report, f, indent=1)
    print(json.dumps(report, indent=1))


def cmd_bench_fps(args):
    from .bench import fps_benchmark
    from .dataset import PanoramaDataset

    _, bvh = _load_scene(args.scene)
    ds = PanoramaDataset.load(args.dataset)
    filler = None
    if args.filler:
        from .filler import FillerNet

        filler = FillerNet.load(args.filler)
    report = fps_benchmark(bvh, ds, resolutions=tuple(args.resolutions),
                           frames=args.frames, k=args.k, filler=filler)
    report.save(args.out)
    for row in report.rows:
        print(f"{row.config:>10} @ {row.resolution:>4}: {row.fps:8.1f} fps")


def cmd_serve(args):
    import uvicorn

    from .dataset import PanoramaDataset
    from .env import ObsConfig, TaskSpec
    from .service import ServiceAssets, create_app

    _, bvh = _load_scene(args.scene)
    ds = PanoramaDataset.load(args.dataset) if args.dataset else None
    filler = None
    if args.filler:
        from .filler import FillerNet

        filler = FillerNet.load(args.filler)
    modalities = tuple(args.modalities.split(","))
    obs = ObsConfig(height=args.res, modalities=modalities, filler=filler)
    task = TaskSpec(kind=args.task, max_steps=args.max_steps, seed=args.task_seed)
    assets = ServiceAssets(
        bvh=bvh, dataset=ds, task=task, obs=obs,
        record_dir=Path(args.record_dir) if args.record_dir else None,
    )
    ui_dir = None
    if args.ui:
        ui_dir = args.ui_dir or str(
            Path(__file__).resolve().parents[2] / "frontend" / "dist"
        )
    app = create_app(assets, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")


def cmd_replay(args):
    from .env import EmbodiedEnv, ObsConfig, TaskSpec

    _, bvh = _load_scene(args.scene)
    doc = EmbodiedEnv.load_trajectory(args.trajectory)
    env = EmbodiedEnv(bvh, TaskSpec.from_json(doc["task"]),
                      ObsConfig(height=16, modalities=()))
    results = env.replay(args.trajectory)
    ok = all(abs(r.reward - saved) == 0.0
             for r, saved in zip(results, doc["rewards"]))
    print(f"replayed {len(results)} steps; rewards {'match' if ok else 'DIFFER'}")
    sys.exit(0 if ok else 1)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panosim")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scene", help="generate a procedural scene mesh")
    g.add_argument("--spec", help="scene spec JSON (omit for defaults)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_scene)

    g = sub.add_parser("gen-dataset", help="capture RGB-D panoramas in a scene")
    g.add_argument("--scene", required=True)
    g.add_argument("--density", type=float, default=0.2, help="panoramas per m^2")
    g.add_argument("--height", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_dataset)

    g = sub.add_parser("corrupt", help="apply camera-domain corruption to a dataset")
    g.add_argument("--in", dest="input", required=True)
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_corrupt)

    g = sub.add_parser("render-view", help="render a novel view from panoramas")
    g.add_argument("--dataset", required=True)
    g.add_argument("--mesh", required=True)
    g.add_argument("--pose", required=True, help='"x,y,z,roll,pitch,yaw"')
    g.add_argument("--out", required=True)
    g.add_argument("--mask")
    g.add_argument("--k", type=int, default=4)
    g.add_argument("--lambda-d", type=float, default=1.0)
    g.add_argument("--depth-eps", type=float, default=0.1)
    g.add_argument("--height", type=int, default=64)
    g.set_defaults(fn=cmd_render_view)

    g = sub.add_parser("gen-pairs", help="build domain-adaptation training pairs")
    g.add_argument("--scene", required=True)
    g.add_argument("--dataset", required=True)
    g.add_argument("--corruption", help="corruption spec JSON (omit for defaults)")
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--crop", type=int, default=32)
    g.add_argument("--k", type=int, default=4)
    g.add_argument("--height", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_pairs)

    g = sub.add_parser("train-filler", help="identity-init and train the filler")
    g.add_argument("--pairs", required=True)
    g.add_argument("--nf", type=int, default=4)
    g.add_argument("--max-dilation", type=int, default=16)
    g.add_argument("--epochs", type=int, default=50)
    g.add_argument("--lr", type=float, default=2e-4)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_train_filler)

    g = sub.add_parser("train-goggles",
                       help="jointly train the filler and its inverse net")
    g.add_argument("--f", dest="filler", required=True)
    g.add_argument("--pairs", required=True)
    g.add_argument("--epochs", type=int, default=50)
    g.add_argument("--lr", type=float, default=2e-5)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out-u", required=True)
    g.add_argument("--out-f", help="also save the jointly updated filler")
    g.set_defaults(fn=cmd_train_goggles)

    g = sub.add_parser("metrics", help="compare two image directories")
    g.add_argument("--a", required=True)
    g.add_argument("--b", required=True)
    g.add_argument("--report", required=True)
    g.set_defaults(fn=cmd_metrics)

    g = sub.add_parser("bench-fps", help="rendering throughput grid")
    g.add_argument("--scene", required=True)
    g.add_argument("--dataset", required=True)
    g.add_argument("--filler")
    g.add_argument("--frames", type=int, default=100)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--resolutions", type=int, nargs="+", default=[128, 256, 512])
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_bench_fps)

    g = sub.add_parser("serve", help="run the environment service")
    g.add_argument("--scene", required=True)
    g.add_argument("--dataset")
    g.add_argument("--filler")
    g.add_argument("--host", default="127.0.0.1")
    g.add_argument("--port", type=int, default=8421)
    g.add_argument("--res", type=int, default=128)
    g.add_argument("--modalities", default="depth")
    g.add_argument("--task", default="local_planning",
                   choices=["local_planning", "distant_navigation"])
    g.add_argument("--max-steps", type=int, default=200)
    g.add_argument("--task-seed", type=int, default=0)
    g.add_argument("--record-dir")
    g.add_argument("--ui", action="store_true", help="also serve the web client")
    g.add_argument("--ui-dir")
    g.set_defaults(fn=cmd_serve)

    g = sub.add_parser("replay", help="re-run a recorded trajectory")
    g.add_argument("--scene", required=True)
    g.add_argument("--trajectory", required=True)
    g.set_defaults(fn=cmd_replay)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.fn(args)


if __name__ == "__main__":
    main()
