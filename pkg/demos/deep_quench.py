"""Deep-quench continuation on the quench benchmark.

Each level solves the adapted problem centered at the previous level's
optimizer.  Watch the control step ``du`` and the gap between the adapted
and plain costs shrink, and ``s2`` head to zero as the quench weight
g(gamma) = gamma^3 vanishes.
"""

from deepquench import benchmarks
from deepquench.control import QuenchSchedule, deep_quench


def main(nx=64, Nt=1000, levels=7):
    pb, u0 = benchmarks.quench(nx=nx, Nt=Nt)
    rep = deep_quench(pb, QuenchSchedule(0.5, 0.5, levels), u0)
    print(f"stationarity tolerance {rep.stat_tol:.2e}")
    print(f"{'gamma':>9} {'J':>14} {'gap':>10} {'du':>10} {'s1':>10} {'s2':>11} {'iters':>5}")
    for lv in rep.levels:
        print(f"{lv.gamma:9.5f} {lv.J:14.10f} {lv.gap:10.2e} {lv.du:10.2e} "
              f"{lv.s1:10.2e} {lv.s2:11.2e} {lv.iterations:5d}")


if __name__ == "__main__":
    main()
