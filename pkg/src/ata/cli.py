"""Command line entry point: ``ata {gen-data,train,eval,ablate}``.

Exit status is 0 on success, 1 for invalid arguments or data, 2 for file
errors (missing, unreadable or corrupt containers).
"""

import argparse
import json
import sys

from .alignment import AlignmentConfig
from .classifier import REFINE_MODES, InferenceConfig
from .episodes import FAMILIES, EpisodeSpec, SyntheticSpec, generate, load_features, save_features, split_dataset
from .errors import ValidationError
from .harness import SWEEP_AXES, evaluate, sweep, write_report
from .losses import LossConfig, save_checkpoint, train_prototypes


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_synthetic(p):
    g = p.add_argument_group("synthetic data (used when --data is not given)")
    d = SyntheticSpec()
    g.add_argument("--family", choices=FAMILIES, default=d.family)
    g.add_argument("--num-classes", type=int, default=d.num_classes)
    g.add_argument("--m", type=int, default=d.m, help="frames per sequence")
    g.add_argument("--c", type=int, default=d.c, help="feature channels")
    g.add_argument("--noise-std", type=float, default=d.noise_std)
    g.add_argument("--jitter", type=int, default=d.jitter)
    g.add_argument("--frame-spread", type=float, default=d.frame_spread)
    g.add_argument("--samples-per-class", type=int, default=d.samples_per_class)
    g.add_argument("--data-seed", type=int, default=d.seed)


def _add_data(p):
    p.add_argument("--data", help="feature container; synthesized from the flags below if omitted")
    p.add_argument("--labels", help="CSV sidecar (id,label) overriding container labels")
    _add_synthetic(p)


def _add_alignment(p):
    d = AlignmentConfig()
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--sigma", type=float, default=d.sigma)


def _add_loss(p):
    d = LossConfig()
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--nu", type=float, default=d.nu)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--train-seed", type=int, default=d.seed)


def _add_eval(p):
    e, i = EpisodeSpec(), InferenceConfig()
    p.add_argument("--n-way", type=int, default=e.n_way)
    p.add_argument("--k-shot", type=int, default=e.k_shot)
    p.add_argument("--queries", type=int, default=e.queries_per_class, help="queries per class")
    p.add_argument("--episodes", type=int, default=e.num_episodes)
    p.add_argument("--seed", type=int, default=e.seed, help="episode seed")
    p.add_argument("--beta", type=float, default=i.beta)
    p.add_argument("--refine", choices=REFINE_MODES, default=i.refine)
    p.add_argument("--refine-iters", type=int, default=i.refine_iters)
    p.add_argument("--inductive-lr", type=float, default=i.inductive_lr)
    p.add_argument("--inductive-steps", type=int, default=i.inductive_steps)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: $ATA_WORKERS or 1)")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--timing", action="store_true", help="include wall time (makes reports run-dependent)")
    p.add_argument("--per-episode", action="store_true", help="include per-episode accuracies (json)")


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="ata", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic feature container")
    _add_synthetic(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train base-class prototypes into a checkpoint")
    _add_data(p)
    _add_alignment(p)
    _add_loss(p)
    p.add_argument("--out", required=True, help="checkpoint path (a .json sidecar is written next to it)")

    p = sub.add_parser("eval", help="episodic evaluation report")
    _add_data(p)
    _add_alignment(p)
    _add_loss(p)
    p.add_argument("--base", help="train prototypes on this container first and start episodes from them")
    _add_eval(p)

    p = sub.add_parser("ablate", help="sweep beta, alpha or nu on shared episodes")
    _add_data(p)
    _add_alignment(p)
    _add_loss(p)
    p.add_argument("--base", help="training container for alpha/nu sweeps (default: half of --data)")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", type=_floats, required=True, help="comma-separated, strictly increasing")
    _add_eval(p)
    return parser


def _synthetic_spec(a):
    return SyntheticSpec(
        family=a.family, num_classes=a.num_classes, m=a.m, c=a.c, noise_std=a.noise_std,
        jitter=a.jitter, samples_per_class=a.samples_per_class, seed=a.data_seed,
        frame_spread=a.frame_spread,
    )


def _dataset(a):
    if a.data:
        return load_features(a.data, labels_csv=a.labels), {"source": "container", "path": a.data}
    spec = _synthetic_spec(a)
    return generate(spec), {"source": "synthetic", **spec.to_dict()}


def _loss_cfg(a):
    return LossConfig(alpha=a.alpha, nu=a.nu, learning_rate=a.lr, epochs=a.epochs,
                      batch_size=a.batch_size, seed=a.train_seed)


def _eval_cfgs(a):
    espec = EpisodeSpec(a.n_way, a.k_shot, a.queries, a.episodes, a.seed)
    icfg = InferenceConfig(beta=a.beta, refine=a.refine, refine_iters=a.refine_iters,
                           inductive_lr=a.inductive_lr, inductive_steps=a.inductive_steps)
    return espec, icfg


def _emit(report, a):
    text = write_report(report, a.out, a.format, a.timing, a.per_episode)
    if a.out is None:
        sys.stdout.write(text)


def cmd_gen_data(a):
    ds = generate(_synthetic_spec(a))
    save_features(a.out, ds)
    print(f"wrote {len(ds)} sequences ({ds.num_classes} classes, M={ds.m}, C={ds.c}) to {a.out}",
          file=sys.stderr)


def cmd_train(a):
    ds, info = _dataset(a)
    acfg, lcfg = AlignmentConfig(lam=a.lam, sigma=a.sigma), _loss_cfg(a)
    bank = train_prototypes(ds, lcfg, acfg)
    save_checkpoint(a.out, bank, lcfg, acfg)
    summary = {"checkpoint": a.out, "data": info, "loss": lcfg.to_dict(), "alignment": acfg.to_dict(),
               "initial_loss": bank.loss_history[0], "final_loss": bank.loss_history[-1]}
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_eval(a):
    ds, info = _dataset(a)
    espec, icfg = _eval_cfgs(a)
    acfg = AlignmentConfig(lam=a.lam, sigma=a.sigma)
    bank = None
    if a.base:
        lcfg = _loss_cfg(a)
        bank = train_prototypes(load_features(a.base), lcfg, acfg, num_classes=ds.num_classes)
    report = evaluate(ds, espec, icfg, acfg, bank=bank, workers=a.workers, data_info=info)
    if bank is not None:
        report.config["loss"] = lcfg.to_dict()
        report.config["base"] = a.base
    _emit(report, a)


def cmd_ablate(a):
    ds, info = _dataset(a)
    espec, icfg = _eval_cfgs(a)
    acfg = AlignmentConfig(lam=a.lam, sigma=a.sigma)
    base = None
    if a.axis != "beta":
        if a.base:
            base = load_features(a.base)
        else:
            base, ds = split_dataset(ds, 0.5, seed=a.data_seed)
            info = {**info, "split": "half per class for training"}
    report = sweep(a.axis, a.values, ds, espec, icfg, acfg, _loss_cfg(a), base=base,
                   workers=a.workers, data_info=info)
    _emit(report, a)


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv=None):
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        COMMANDS[a.command](a)
    except OSError as exc:
        print(f"ata: error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ValueError) as exc:
        print(f"ata: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
