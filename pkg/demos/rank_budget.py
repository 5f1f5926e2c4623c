"""The rank dial: how much kernel you buy at each rank target.

Sweeps the direct SVD design over every feasible rank target on one
random system and prints what each setting costs (perturbation gain) and
what it buys (pencil rank collapse, certified entries).  Lower targets
mean a bigger kernel and stronger hiding, paid for with larger
perturbations.
"""

import numpy as np

from privperturb import (
    TargetSpec,
    gain_upper_bound,
    rank_floor,
    svd_design,
)
from privperturb.system import LinearSystem


def main():
    rng = np.random.default_rng(12)
    n, p, q = 5, 7, 4
    sys = LinearSystem(rng.uniform(-1, 1, (n, n)), rng.uniform(-1, 1, (n, p)),
                       rng.uniform(-1, 1, (q, n)), rng.uniform(-1, 1, (q, p)))
    nq = sys.n + sys.q
    floor = rank_floor(sys)
    bound = gain_upper_bound(sys)
    targets = TargetSpec(state_targets=frozenset({0, 2}),
                         input_targets=frozenset({1, 3}))

    print(f"system: n={sys.n}, p={sys.p}, q={sys.q}; "
          f"unperturbed pencil rank {nq}")
    print(f"feasible rank targets: {floor} .. {nq}")
    print(f"closed-form gain ceiling: {bound:.3f}\n")
    print(f"{'rho':>4} {'rank':>5} {'gain':>8} {'kernel':>7} "
          f"{'certified':>10}")
    for rho in range(floor, nq + 1):
        res = svd_design(sys, rho, targets=targets, check_assumption=False)
        prot = res.protection
        certified = sum(prot.state_flags.values()) \
            + sum(prot.input_flags.values())
        print(f"{rho:>4} {res.pencil_rank:>5} {res.l2_gain:>8.3f} "
              f"{prot.null_dim:>7} {certified:>7}/4")

    print("\nrank always lands one below the target; the gain never "
          "exceeds the ceiling.")
    print("certification needs the kernel to reach the requested entries, "
          "so the count grows as the target drops.")


if __name__ == "__main__":
    main()
