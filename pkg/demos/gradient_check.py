"""Compare the adjoint gradient with finite differences.

The reduced gradient costs one forward and one backward sweep; a central
difference costs two forward sweeps per direction.  Both should agree to
about eight digits because the adjoint is the exact transpose of the
discrete step map.
"""

import numpy as np

from deepquench import benchmarks
from deepquench.control import evaluate, reduced_cost
from deepquench.mesh import inner_l2_time
from deepquench.model import NewtonOptions


def main(nx=64, Nt=1000, directions=3, eps=1e-5):
    pb, _ = benchmarks.standard(nx=nx, Nt=Nt, newton=NewtonOptions(tol=1e-12))
    gamma = benchmarks.STANDARD_GAMMA
    rng = np.random.default_rng(0)
    u = rng.uniform(0.2, 0.8, pb.control_shape)
    ev = evaluate(pb, gamma, u)
    print(f"J(u) = {ev.cost:.10f}")
    for k in range(directions):
        psi = rng.standard_normal(pb.control_shape)
        ad = inner_l2_time(pb.grid, pb.tg, ev.grad, psi)
        fd = (reduced_cost(pb, gamma, u + eps * psi) - reduced_cost(pb, gamma, u - eps * psi))
        fd /= 2 * eps
        print(f"direction {k}: adjoint {ad:+.10e}  fd {fd:+.10e}  rel {abs(ad - fd) / abs(ad):.1e}")


if __name__ == "__main__":
    main()
