"""Command-line surface: train, eval, hier, game-lab and check."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np


def _mock_backends(cfg, extra: int = 0):
    from .backends import MockBackend
    from .config import subsystem_seed

    gen_seed = subsystem_seed(cfg.seed, "generation")
    coordinator = MockBackend(seed=gen_seed)
    agents = [MockBackend(seed=gen_seed + 1 + i)
              for i in range(cfg.agents + extra)]
    return coordinator, agents


def _load_cfg(args):
    from .config import RunConfig, load_config

    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = RunConfig(**{**cfg.__dict__, "seed": args.seed})
    if getattr(args, "backend", None):
        cfg = RunConfig(**{**cfg.__dict__, "backend": args.backend})
    return cfg


def _questions(cfg):
    return [f"question-{i}" for i in range(8)]


def cmd_train(args) -> int:
    from .config import emit_metrics, write_manifest
    from .orchestrator import Orchestrator

    cfg = _load_cfg(args)
    if cfg.backend != "mock":
        print("only the mock backend is wired for CLI training runs",
              file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    coordinator, agents = _mock_backends(cfg)
    orch = Orchestrator(cfg, coordinator, agents)
    rows, _ = orch.train(_questions(cfg),
                         episode_log_path=os.path.join(args.out, "episodes.jsonl"))
    emit_metrics(rows, os.path.join(args.out, "metrics.csv"))
    write_manifest(os.path.join(args.out, "manifest.json"), cfg, "train")
    print(f"trained {len(rows)} episodes; metrics in {args.out}/metrics.csv")
    return 0


def cmd_eval(args) -> int:
    from .config import write_manifest
    from .orchestrator import Orchestrator

    cfg = _load_cfg(args)
    os.makedirs(args.out, exist_ok=True)
    coordinator, agents = _mock_backends(cfg)
    orch = Orchestrator(cfg, coordinator, agents)
    rewards = []
    for q in _questions(cfg)[:args.episodes]:
        record = orch.run_inference(q)
        orch.absorb_episode(record)
        rewards.append(float(np.mean(record.rewards)))
    write_manifest(os.path.join(args.out, "manifest.json"), cfg, "eval")
    print(f"mean reward over {len(rewards)} episodes: {np.mean(rewards):.4f}")
    return 0


def cmd_hier(args) -> int:
    from .config import RunConfig, write_manifest
    from .hierarchy import HierOrchestrator

    cfg = _load_cfg(args)
    cfg = RunConfig(**{**cfg.__dict__, "agents": args.agents})
    os.makedirs(args.out, exist_ok=True)
    coordinator, backends = _mock_backends(cfg, extra=args.clusters)
    agents = backends[:cfg.agents]
    locals_ = backends[cfg.agents:cfg.agents + args.clusters]
    hier = HierOrchestrator(cfg, coordinator, locals_, agents, args.clusters)
    history = hier.train(_questions(cfg), rounds=args.rounds,
                         round_log_path=os.path.join(args.out, "rounds.jsonl"))
    write_manifest(os.path.join(args.out, "manifest.json"), cfg, "hier")
    last = history[-1][0]
    print(f"{len(history)} rounds; last cluster rewards: "
          + " ".join(f"{r:.3f}" for r in last.cluster_rewards))
    return 0


def cmd_game_lab(args) -> int:
    from .gamelab import fit_regret_exponent, load_game, load_shipped_game, run_debate, run_econ

    if os.path.exists(args.game):
        game = load_game(args.game)
    else:
        game = load_shipped_game(args.game)
    runner = run_econ if args.learner == "econ" else run_debate
    _, trace = runner(game, args.steps, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    trace_path = os.path.join(args.out, f"regret_{args.learner}.csv")
    trace.to_csv(trace_path)
    fit = fit_regret_exponent(trace.total)
    print(f"{game.name}: {args.learner} learner, {args.steps} steps, "
          f"R(T) ~ {fit.a:.3g} * T^{fit.b:.3f}; trace in {trace_path}")
    return 0


def cmd_check(args) -> int:
    """Quick invariant sweep: monotonicity, gradients, rewards, rate gate."""
    from .kernel import ParamStore, Tensor, finite_diff_check
    from .mixing import MixingNetwork
    from .backends import BudgetTimeout, RateBudget, VirtualClock
    from .rewards import RewardWeights, project_simplex

    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
        failures += 0 if ok else 1

    rng = np.random.default_rng(0)
    worst = 0.0
    for trial in range(10):
        net = MixingNetwork(3, group_dim=8, rng=np.random.default_rng(trial))
        res = net.check_monotonicity(n_samples=20, rng=rng)
        worst = min(worst, res["min_directional_derivative"])
        if not res["passes"]:
            break
    report("mixing monotonicity", worst >= -1e-8, f"min derivative {worst:.2e}")

    store = ParamStore()
    store.create("w", (4, 3), rng, fan_in=4)
    store.create("b", (3,), rng)
    x = np.array([0.3, -0.2, 0.5, 0.1])

    def loss_fn():
        return ((Tensor(x) @ store["w"] + store["b"]).relu().square()).sum()

    err = finite_diff_check(loss_fn, store)
    report("gradient check", err < 1e-4, f"max relative error {err:.2e}")

    rng2 = np.random.default_rng(1)
    ok = True
    w = RewardWeights()
    for _ in range(1000):
        alphas = project_simplex(rng2.normal(size=3))
        if abs(alphas.sum() - 1.0) > 1e-9 or (alphas < 0).any():
            ok = False
            break
    report("simplex projection", ok)

    clock = VirtualClock()
    budget = RateBudget(rpm=2, tpm=1000, clock=clock)
    budget.acquire(10)
    budget.acquire(10)
    t0 = clock.now()
    budget.acquire(10)
    report("rate budget window", clock.now() - t0 >= 59.0,
           f"waited {clock.now() - t0:.1f}s virtual")
    try:
        budget.acquire(5000)
        report("rate budget cap", False)
    except BudgetTimeout:
        report("rate budget cap", True)

    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="econ",
                                description="Belief-network multi-agent coordination toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the training loop")
    t.add_argument("--config", default=None)
    t.add_argument("--backend", choices=["mock", "http"], default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default="runs/train")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="inference-only evaluation")
    e.add_argument("--config", default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--episodes", type=int, default=8)
    e.add_argument("--out", default="runs/eval")
    e.set_defaults(fn=cmd_eval)

    h = sub.add_parser("hier", help="hierarchical training")
    h.add_argument("--config", default=None)
    h.add_argument("--clusters", type=int, default=3)
    h.add_argument("--agents", type=int, default=9)
    h.add_argument("--rounds", type=int, default=5)
    h.add_argument("--seed", type=int, default=None)
    h.add_argument("--out", default="runs/hier")
    h.set_defaults(fn=cmd_hier)

    g = sub.add_parser("game-lab", help="finite-game learning and regret traces")
    g.add_argument("--game", required=True,
                   help="path to a .game file or a shipped game name")
    g.add_argument("--learner", choices=["econ", "debate"], default="econ")
    g.add_argument("--steps", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="runs/gamelab")
    g.set_defaults(fn=cmd_game_lab)

    c = sub.add_parser("check", help="run the quick invariant suite")
    c.set_defaults(fn=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
