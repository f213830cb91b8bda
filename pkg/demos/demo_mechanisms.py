"""Randomization mechanisms: privacy budgets bound what any observer learns.

Walks through the two mechanism families, checks the privacy guarantee
directly on the exact channel matrix, and shows that post-processing and
the information bound both follow from the budget alone.
"""

import numpy as np

from ldpfair import (
    RandomizedResponse,
    compose,
    induced_joint,
    mutual_information,
    random_channel,
    random_source,
    rr_channel,
    verify_ldp,
)


def main() -> None:
    print("== symbol-flip mechanism over [k]^d ==")
    for eps in (0.0, 0.5, 2.0, 8.0):
        mech = RandomizedResponse(epsilon=eps, k=4, d=2)
        print(
            f"eps={eps:>4}: keep probability per coordinate = {mech.keep_prob:.4f}"
        )

    eps = 1.0
    mech = RandomizedResponse(epsilon=eps, k=3, d=1)
    ch = rr_channel(mech)
    ratio, ok = verify_ldp(ch, eps)
    print(f"\nexact channel worst-case log ratio: {ratio:.6f} <= {eps} -> {ok}")

    print("\n== post-processing cannot weaken the guarantee ==")
    post = random_channel(3, 5, seed=0)
    ratio2, ok2 = verify_ldp(compose(ch, post), eps)
    print(f"after a random 3->5 post-channel: {ratio2:.6f} <= {eps} -> {ok2}")

    print("\n== the budget caps mutual information (in nats) ==")
    src = random_source(2, 2, 3, seed=1)
    enc = random_channel(3, 3, seed=2)
    for eps in (0.25, 0.5, 1.0, 2.0):
        z_ch = compose(enc, rr_channel(RandomizedResponse(epsilon=eps, k=3, d=1)))
        mi = mutual_information(induced_joint(src, z_ch).p_xz())
        print(f"eps={eps:>4}: I(X;Z) = {mi:.4f} <= {eps}")


if __name__ == "__main__":
    main()
