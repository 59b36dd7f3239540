"""Tune the PVTOL controller end to end through the library API.

Five random shaping candidates compete on a mild scenario envelope: the
dichotomic search freezes each candidate's dial on the first batch, the
remaining batches eliminate, and survivors are ranked by accumulated
closed-loop cost.  The winning setting is then replayed on the whole
scenario cloud to confirm admissibility.  Takes a minute or two of
single-core time; seed 7 reproducibly leaves one survivor, two later-batch
eliminations, and two rejections at the closed dial.

The command-line equivalent writes artifacts instead of printing:
    mpc-autotune tune --problem pvtol --n-trials 5 --nb 3 --nsb 2 ...
"""

import time

import numpy as np

from mpc_autotune.controller import TimingSpec
from mpc_autotune.design import DesignBounds, sample_shaping
from mpc_autotune.problems import generate_cloud, make_batches
from mpc_autotune.pvtol import pvtol_problem
from mpc_autotune.tuning import CertificationParams, evaluate_on_set, tune


def main() -> None:
    problem = pvtol_problem(
        x_sample_min=(-1.0, -1.0, -0.25, -0.2, -0.2, -0.2),
        x_sample_max=(1.0, 1.0, 0.25, 0.2, 0.2, 0.2),
    )
    bounds = DesignBounds(
        kappa=(2, 10),
        mu_d=(0.0, 1.0),
        n_pred=(8, 20),
        n_contr=(1, 3),
        rho_f=(1.0, 30.0),
        rho_constr=(1.0e3, 1.0e5),
        max_iter=(20, 45),
        rho_log_space=True,
    )
    params = CertificationParams(gamma=0.98, eps=0.15, dev_acc=1.0, c_max=0.1)
    timing = TimingSpec("cost-model", c_eval=2.0e-6)

    # the same seeding scheme the runner uses: one stream for the candidate
    # draws, an independent one for the scenario cloud
    seq = np.random.SeedSequence(7)
    shaping_seq, cloud_seq = seq.spawn(2)
    rng = np.random.default_rng(shaping_seq)
    shapings = [sample_shaping(rng, 3) for _ in range(5)]
    cloud_seed = int(cloud_seq.generate_state(1, dtype=np.uint64)[0])
    scenarios = generate_cloud(problem, 6, cloud_seed, duration=1.0)

    t0 = time.perf_counter()
    result = tune(
        problem, shapings, make_batches(scenarios, 3, 2), bounds, params, timing,
        progress=print,
    )
    print(f"\ntuning took {time.perf_counter() - t0:.1f} s,"
          f" {result.ocp_solve_count} OCP solves")

    print("\ncandidate  status            dial   scenarios  criterion")
    for rec in result.records:
        dial = "" if rec.alpha_hat is None else f"{rec.alpha_hat:.3f}"
        reason = rec.eliminated_criterion or ""
        print(f"{rec.index:9d}  {rec.status:16s}  {dial:5s}"
              f"  {rec.scenarios_evaluated:9d}  {reason}")

    if not result.survivors:
        print("\nno admissible setting at this scale")
        return

    best = result.best_record()
    print(f"\nbest candidate {best.index}: dial {best.alpha_hat},"
          f" cumulative cost {best.cumulative_cost:.4f}")
    print("realized design:", best.design.as_dict())

    replay = evaluate_on_set(
        problem, best.shaping, best.alpha_hat, scenarios, bounds, params, timing
    )
    print(f"replay on all {len(scenarios)} scenarios:"
          f" rt excess {replay.rt:.6f},"
          f" contraction excess {replay.contraction:.6f},"
          f" violation excess {replay.constraint:.6f}"
          f" (tolerance {params.c_max})")


if __name__ == "__main__":
    main()
