"""Solve the shipped Bayesian games by brute force and report certificates.

The oracle sweeps a coarse strategy-profile grid, keeps the least
exploitable candidates and hill-descends with shrinking probability-mass
transfers down to resolution rho. The certificate bounds the residual
exploitability of the returned profile.
"""

from econ.gamelab import brute_force_bne, exploitability, load_shipped_game


def main():
    for name in ("matching_pennies", "matching_pennies_typed",
                 "coordination_typed", "dominant_three"):
        game = load_shipped_game(name)
        profile, cert = brute_force_bne(game, rho=0.05)
        print(f"{name}:")
        for i in range(game.n_players):
            for t, tname in enumerate(game.types[i]):
                mix = ", ".join(
                    f"{a}={p:.2f}" for a, p in zip(game.actions[i], profile[i][t]))
                print(f"  player {i} type {tname}: {mix}")
        rep = exploitability(game, profile)
        print(f"  exploitability {rep.max_gain:.4f} "
              f"(certified <= {cert['tolerance']:.3f} at rho={cert['resolution']})\n")


if __name__ == "__main__":
    main()
