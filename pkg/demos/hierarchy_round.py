"""Two-level coordination: 9 agents in 3 clusters under a global coordinator.

Each round the global coordinator issues a strategy, clusters run their
inference phases concurrently, and every cluster earns a reward equal to
the clipped cosine similarity between its output and the aggregated
global answer. Optimization is strictly bottom-up: cluster updates first,
then the global mixing step.
"""

from econ.backends import MockBackend
from econ.config import RunConfig, subsystem_seed
from econ.hierarchy import HierOrchestrator


def main():
    cfg = RunConfig(seed=1, agents=9, d=32, d_b=16, heads=2, mlp_width=32,
                    window=4, buffer=16, batch=2, update_interval=1,
                    grid_k=3, eta=0.02)
    gen_seed = subsystem_seed(cfg.seed, "generation")
    global_coord = MockBackend(seed=gen_seed, embed_dim=64)
    local_coords = [MockBackend(seed=gen_seed + 100 + c, embed_dim=64)
                    for c in range(3)]
    agents = [MockBackend(seed=gen_seed + 1 + i, embed_dim=64)
              for i in range(9)]
    hier = HierOrchestrator(cfg, global_coord, local_coords, agents, k=3)

    for c in hier.clusters:
        print(f"cluster {c.cid}: agents {c.members}")
    print()

    history = hier.train(["draft a migration plan"], rounds=4)
    for t, (rnd, report, info) in enumerate(history, start=1):
        rewards = " ".join(f"{r:.3f}" for r in rnd.cluster_rewards)
        print(f"round {t}: cluster rewards [{rewards}]  "
              f"update order {' -> '.join(report['order'])}")
    print("\nevery round ran cluster inference in parallel and updated "
          "bottom-up (clusters before the global mixing network)")


if __name__ == "__main__":
    main()
