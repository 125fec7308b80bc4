"""Acceptance suite: one check per criterion, one PASS/FAIL line each.

Run under pytest (lines are repeated in the terminal summary) or directly
with ``python tests/test_acceptance.py``.
"""

import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracle  # noqa: E402
from ata.alignment import AlignmentConfig, sim_a, sim_max, sim_t, sinkhorn_plan, similarity_matrix, temporal_prior, temporal_scores  # noqa: E402
from ata.classifier import InferenceConfig, init_prototypes, refine_transductive, soft_kmeans_update, support_loss_grad  # noqa: E402
from ata.cli import main as cli_main  # noqa: E402
from ata.episodes import Episode, EpisodeSpec, SyntheticSpec, equal, generate, load_features, save_features, split_dataset  # noqa: E402
from ata.errors import CorruptRecord  # noqa: E402
from ata.harness import evaluate, report_json  # noqa: E402
from ata.losses import LossConfig, PrototypeBank, grad_prototypes, load_checkpoint, nearest_prototype, save_checkpoint, train_prototypes  # noqa: E402

RESULTS = []
WORKERS = max(1, min(4, os.cpu_count() or 1))


def record(number, ok, detail, seconds, limit=None):
    timing = f"{seconds:.1f}s" + (f" (limit {limit:.0f}s)" if limit else "")
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{timing}]"
    RESULTS.append(line)
    print(line)
    return ok


def _timed(fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - t0


def _grad_ok(analytic, numeric):
    for a, n in zip(np.ravel(analytic), np.ravel(numeric)):
        if abs(a) < 1e-6:
            if abs(a - n) >= 1e-7:
                return False
        elif abs(a - n) / max(abs(a), abs(n)) >= 1e-4:
            return False
    return True


def check_gradients():
    grid = [(m, c, n) for m in (2, 4, 8) for c in (2, 8) for n in (2, 5)]
    rng = np.random.default_rng(2024)
    failures = 0
    for i in range(20):
        m, c, n = grid[i % len(grid)]
        w = rng.standard_normal((n, m, c))
        xs = rng.standard_normal((n + 2, m, c))
        labels = np.arange(n + 2) % n
        batch = [(x.tolist(), int(y)) for x, y in zip(xs, labels)]
        alpha, nu = float(rng.uniform(0, 1)), float(rng.uniform(0, 1))
        lcfg = LossConfig(alpha=alpha, nu=nu)
        g = grad_prototypes(list(zip(xs, labels)), PrototypeBank(w), AlignmentConfig(), lcfg)
        num = oracle.central_difference(lambda p: oracle.total_loss(batch, p, alpha, nu), w.tolist())
        failures += not _grad_ok(g, num)
        # support cross-entropy used by inductive refinement
        ep = Episode(n, 1, xs[:n], np.arange(n), xs[n:])
        g = support_loss_grad(PrototypeBank(w), ep)
        sup = batch[:n]
        num = oracle.central_difference(lambda p: oracle.total_loss(sup, p, 0.0, 0.0), w.tolist())
        failures += not _grad_ok(g, num)
    return failures == 0, f"{40 - failures}/40 gradient checks within tolerance"


def check_sandwich():
    rng = np.random.default_rng(1)
    bad = 0
    for _ in range(1000):
        x, y = rng.standard_normal((8, 16)), rng.standard_normal((8, 16))
        lo, a = sim_max(x, y), sim_a(x, y)
        bad += not (lo <= a <= lo + 8 * 0.1 * math.log(8))
    return bad == 0, f"{1000 - bad}/1000 pairs inside the bound"


def check_kl():
    rng = np.random.default_rng(2)
    worst = max(sim_t(rng.standard_normal((8, 16)), rng.standard_normal((8, 16))) for _ in range(1000))
    t = temporal_prior(8, 1.0)
    calib = abs(temporal_scores(np.log(t / t.sum(1, keepdims=True)), 1.0))
    q, _ = np.linalg.qr(rng.standard_normal((16, 8)))
    x = q.T
    same, rev = sim_t(x, x), sim_t(x, x[::-1])
    ok = worst <= 0 and calib < 1e-9 and same > rev
    return ok, f"max sim_t {worst:.3g} <= 0, |calibrated| {calib:.1e}, self {same:.4f} > reversed {rev:.4f}"


def check_prior():
    t = temporal_prior(8, 1.0)
    diag, off = float(t[3, 3]), float(t[3, 4])
    ok = abs(diag - 0.398942) <= 1e-6 and abs(off - 0.310687) <= 1e-6 and abs(float(t[3, 2]) - 0.310687) <= 1e-6
    return ok, f"T(i,i)={diag:.7f} (want 0.398942), T(i,i+1)={off:.7f} (want 0.310687)"


def check_sinkhorn():
    rng = np.random.default_rng(3)
    worst, converged = 0.0, 0
    for _ in range(200):
        d = similarity_matrix(rng.standard_normal((8, 16)), rng.standard_normal((8, 16)))
        plan, residual, _ = sinkhorn_plan(d, 0.05, 100, 1e-6)
        if residual < 1e-6:
            converged += 1
            err = max(np.abs(plan.sum(0) - 1 / 8).max(), np.abs(plan.sum(1) - 1 / 8).max())
            worst = max(worst, err)
    plan, residual, _ = sinkhorn_plan(np.eye(4), 0.005, 100, 1e-6)
    diag = float(np.diag(plan).min())
    ok = converged > 0 and worst < 1e-6 and residual < 1e-6 and diag >= 0.9 / 4
    return ok, (f"{converged}/200 converged at defaults, max marginal error {worst:.1e}; "
                f"eps=0.005 identity min diagonal {diag:.4f} >= {0.9 / 4:.4f}")


def check_order_trend():
    espec = EpisodeSpec(n_way=5, k_shot=1, queries_per_class=15, num_episodes=1000, seed=0)
    sens = generate(SyntheticSpec(family="order_sensitive", num_classes=6, samples_per_class=20,
                                  noise_std=0.1, jitter=0, seed=0))
    a0 = evaluate(sens, espec, InferenceConfig(beta=0.0), workers=WORKERS).mean_accuracy
    a5 = evaluate(sens, espec, InferenceConfig(beta=0.5), workers=WORKERS).mean_accuracy
    ins = generate(SyntheticSpec(family="order_insensitive", num_classes=6, samples_per_class=20,
                                 noise_std=0.1, seed=0))
    accs = [evaluate(ins, espec, InferenceConfig(beta=b), workers=WORKERS).mean_accuracy for b in (0.0, 0.5, 1.0)]
    ok = a5 - a0 >= 0.25 and abs(a0 - 0.55) <= 0.05 and accs[2] == min(accs)
    return ok, (f"sensitive beta=0 {a0:.4f} (want 0.55+-0.05), beta=0.5 {a5:.4f} (gain {a5 - a0:.4f}); "
                f"insensitive beta 0/0.5/1 = {accs[0]:.4f}/{accs[1]:.4f}/{accs[2]:.4f}")


def check_transductive():
    ds = generate(SyntheticSpec(family="mixed", num_classes=10, c=64, samples_per_class=20,
                                noise_std=0.25, seed=0))
    espec = EpisodeSpec(n_way=5, k_shot=1, queries_per_class=15, num_episodes=1000, seed=0)
    base = evaluate(ds, espec, InferenceConfig(), workers=WORKERS)
    trans = evaluate(ds, espec, InferenceConfig(refine="transductive", refine_iters=10), workers=WORKERS)
    gain = trans.mean_accuracy - base.mean_accuracy
    disjoint = trans.mean_accuracy - trans.ci95_halfwidth > base.mean_accuracy + base.ci95_halfwidth
    return gain >= 0.03 and disjoint, (
        f"none {base.mean_accuracy:.4f}+-{base.ci95_halfwidth:.4f}, "
        f"transductive {trans.mean_accuracy:.4f}+-{trans.ci95_halfwidth:.4f}, gain {gain:.4f}")


def check_soft_kmeans():
    rng = np.random.default_rng(4)
    exact = True
    for k in (1, 3, 5):
        ep = Episode(4, k, rng.standard_normal((4 * k, 8, 16)), np.repeat(np.arange(4), k), np.empty((0, 8, 16)))
        bank = init_prototypes(ep)
        for iters in (1, 2, 10, 25):
            out = refine_transductive(bank, ep, InferenceConfig(refine_iters=iters))
            exact &= np.array_equal(out.prototypes, bank.prototypes)
    ep = Episode(3, 2, rng.standard_normal((6, 8, 16)), np.repeat(np.arange(3), 2), rng.standard_normal((7, 8, 16)))
    hard = rng.integers(0, 3, 7)
    w = soft_kmeans_update(ep, np.eye(3)[hard])
    err = 0.0
    for c in range(3):
        members = np.concatenate([ep.support[ep.support_labels == c], ep.query[hard == c]])
        err = max(err, float(np.abs(w[c] - members.mean(0)).max()))
    return exact and err < 1e-9, f"empty-query fixed point exact: {exact}; one-hot closed-form error {err:.1e}"


def check_training():
    ds = generate(SyntheticSpec(family="order_insensitive", num_classes=5, samples_per_class=40,
                                noise_std=0.1, seed=0))
    base, held = split_dataset(ds, 0.5, seed=0)
    out = {}
    for nu in (0.0, 0.1):
        bank = train_prototypes(base, LossConfig(nu=nu, epochs=200, seed=0))
        acc = float(np.mean(nearest_prototype(held.features, bank) == held.labels))
        h = bank.loss_history
        rise = max(b - a for a, b in zip(h, h[1:]))
        out[nu] = (acc, rise)
    ok = (out[0.0][0] >= 0.95 and out[0.1][0] >= 0.95 and max(out[0.0][1], out[0.1][1]) <= 1e-3
          and out[0.1][0] >= out[0.0][0] - 0.02)
    return ok, (f"held-out accuracy nu=0 {out[0.0][0]:.3f}, nu=0.1 {out[0.1][0]:.3f}; "
                f"largest epoch loss increase {max(out[0.0][1], out[0.1][1]):.1e}")


def check_determinism_io():
    ds = generate(SyntheticSpec(family="mixed", num_classes=8, samples_per_class=12, noise_std=0.25))
    espec = EpisodeSpec(n_way=5, k_shot=1, queries_per_class=5, num_episodes=100, seed=11)
    icfg = InferenceConfig(beta=0.5, refine="transductive")
    texts = {report_json(evaluate(ds, espec, icfg, workers=w), per_episode=True) for w in (1, 2, 4)}
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "f.ataf")
        save_features(path, ds)
        round_trip = equal(ds, load_features(path))
        ckpt = os.path.join(tmp, "bank.ataf")
        bank = train_prototypes(ds, LossConfig(epochs=2))
        save_checkpoint(ckpt, bank)
        loaded, _ = load_checkpoint(ckpt)
        ckpt_exact = loaded.prototypes.tobytes() == bank.prototypes.astype(np.float32).astype(np.float64).tobytes()
        raw = Path(path).read_bytes()
        Path(path).write_bytes(raw[: len(raw) - 10])
        try:
            load_features(path)
            rejected = False
        except CorruptRecord as exc:
            rejected = exc.index == len(ds) - 1
        with open(os.devnull, "w") as null:
            saved, sys.stderr = sys.stderr, null
            try:
                code = cli_main(["eval", "--data", path, "--episodes", "2"])
            finally:
                sys.stderr = saved
    ok = len(texts) == 1 and round_trip and ckpt_exact and rejected and code == 2
    return ok, (f"reports identical across 1/2/4 workers: {len(texts) == 1}; container round trip: {round_trip}; "
                f"checkpoint round trip: {ckpt_exact}; truncation rejected: {rejected}, CLI exit {code}")


CRITERIA = [
    (1, check_gradients, 30),
    (2, check_sandwich, 5),
    (3, check_kl, 5),
    (4, check_prior, None),
    (5, check_sinkhorn, 5),
    (6, check_order_trend, 180),
    (7, check_transductive, 300),
    (8, check_soft_kmeans, None),
    (9, check_training, None),
    (10, check_determinism_io, None),
]


@pytest.mark.parametrize("number, check, limit", CRITERIA, ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(number, check, limit):
    ok, detail, seconds = _timed(check)
    within = limit is None or seconds < limit
    record(number, ok and within, detail, seconds, limit)
    assert ok, detail
    assert within, f"took {seconds:.1f}s, limit {limit}s"


if __name__ == "__main__":
    passed = 0
    for number, check, limit in CRITERIA:
        ok, detail, seconds = _timed(check)
        passed += record(number, ok and (limit is None or seconds < limit), detail, seconds, limit)
    print(f"{passed}/{len(CRITERIA)} criteria passed")
    sys.exit(0 if passed == len(CRITERIA) else 1)
