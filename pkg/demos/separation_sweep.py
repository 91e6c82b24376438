"""Follow the regularized state toward the double-obstacle state.

Run with ``python3 demos/separation_sweep.py``.  For gamma = 2^-1 .. 2^-7
the standard benchmark is integrated at zero control; each line shows how
close max|phi| gets to 1, the size of the logarithmic selection g h'(phi),
and the L2(Q) distance to the obstacle trajectory.
"""

import numpy as np

from deepquench import benchmarks
from deepquench.forward import solve_state_gamma, solve_state_obstacle
from deepquench.mesh import norm_l2_time


def main(nx=64, Nt=1000):
    pb, u = benchmarks.standard(nx=nx, Nt=Nt)
    ob = solve_state_obstacle(pb, u)
    contact = np.mean(np.abs(ob.phi[1:]) >= 1.0)
    print(f"obstacle run: contact on {100 * contact:.1f}% of space-time, "
          f"||xi|| = {ob.selection_norm():.4f}")
    print(f"{'gamma':>10} {'max|phi|':>10} {'||g h_prime||':>14} {'distance':>10}")
    for n in range(1, 8):
        gamma = 2.0**-n
        tr = solve_state_gamma(pb, u, gamma)
        d = np.hypot(norm_l2_time(pb.grid, pb.tg, tr.phi - ob.phi),
                     norm_l2_time(pb.grid, pb.tg, tr.sigma - ob.sigma))
        print(f"{gamma:10.6f} {tr.max_abs_phi:10.6f} {tr.selection_norm():14.4f} {d:10.4f}")


if __name__ == "__main__":
    main()
